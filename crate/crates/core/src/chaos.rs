//! Chaos classification: the criterion integral on each component of
//! `Omega \ {F = 0}`, the verdict pipeline, the von Foerster-Lasota
//! classifier, decay probes and lower-density estimates.

use std::fmt::{self, Write as _};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lpspace::{GridFunction, LpSpace};
use crate::par::Exec;
use crate::problem::{ProblemDef, ProblemSpec};
use crate::quad::{self, block_bounds, TailDiagnosis, TailProtocol, Tolerance};
use crate::semiflow::{Component, FlowOptions, InvarianceReport, Semiflow};
use crate::semigroup::WeightedComposition;
use crate::weights::{self, AdmissibilityEstimate, AdmissibilityVerdict, HypothesisReport};
use crate::Check;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "CHAOTIC_AND_FHC")]
    ChaoticAndFhc,
    #[serde(rename = "NOT_CHAOTIC")]
    NotChaotic,
    #[serde(rename = "INCONCLUSIVE")]
    Inconclusive,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::ChaoticAndFhc => 0,
            Verdict::NotChaotic => 1,
            Verdict::Inconclusive => 2,
        }
    }

    pub fn is_chaotic(self) -> bool {
        self == Verdict::ChaoticAndFhc
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::ChaoticAndFhc => "CHAOTIC_AND_FHC",
            Verdict::NotChaotic => "NOT_CHAOTIC",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// Blocks of the criterion integral toward one end of a component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSide {
    pub endpoint: f64,
    pub diagnosis: TailDiagnosis,
    pub blocks: Vec<f64>,
    /// Ratio of the last two blocks.
    pub last_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionIntegral {
    pub basepoint: f64,
    /// Block sums plus geometric remainders; absent when divergent.
    pub value: Option<f64>,
    pub diagnosis: TailDiagnosis,
    pub lower: TailSide,
    pub upper: TailSide,
}

impl CriterionIntegral {
    /// Whether a divergent side decays exactly like the threshold case,
    /// with block ratios pinned at one.
    pub fn at_threshold(&self) -> bool {
        [&self.lower, &self.upper]
            .iter()
            .any(|s| s.diagnosis == TailDiagnosis::Divergent && (s.last_ratio - 1.0).abs() < 1e-3)
    }
}

const SPACE_BLOCKS: usize = 40;

/// `int_C exp(-p int_x^w Re h / F) rho(w) dw`, split at `x` into geometric
/// blocks toward both ends of `C`.
pub fn criterion_integral(flow: &Semiflow, component: &Component, p: f64, x: f64) -> Result<CriterionIntegral> {
    if !component.contains(x) {
        return Err(Error::InvalidArgument(format!("basepoint {x} is not inside ({}, {})", component.lo, component.hi)));
    }
    let lower = criterion_side(flow, p, x, component.lo)?;
    let upper = criterion_side(flow, p, x, component.hi)?;
    let diagnosis = match (lower.diagnosis, upper.diagnosis) {
        (TailDiagnosis::Divergent, _) | (_, TailDiagnosis::Divergent) => TailDiagnosis::Divergent,
        (TailDiagnosis::Convergent, TailDiagnosis::Convergent) => TailDiagnosis::Convergent,
        _ => TailDiagnosis::Inconclusive,
    };
    let value = (diagnosis != TailDiagnosis::Divergent).then(|| {
        [&lower, &upper]
            .iter()
            .map(|s| s.blocks.iter().sum::<f64>() + TailProtocol::SPACE.remainder(&s.blocks))
            .sum()
    });
    Ok(CriterionIntegral { basepoint: x, value, diagnosis, lower, upper })
}

fn criterion_side(flow: &Semiflow, p: f64, x: f64, endpoint: f64) -> Result<TailSide> {
    let problem = flow.problem();
    let zero_weight = problem.h_re.constant_value() == Some(0.0);
    let quotient = |y: f64| -> Result<f64> {
        let f = problem.eval_f(y)?;
        if f == 0.0 {
            return Err(Error::InnerSingularity(y));
        }
        Ok(problem.h_re.eval(y)? / f)
    };
    let inner_tol = Tolerance { abs: 1e-15, rel: 1e-13, max_panels: 100 };
    let outer_tol = Tolerance { abs: 1e-300, rel: 1e-10, max_panels: 100 };
    // Inner antiderivative at the block start nodes, accumulated block by block.
    let mut a_start = 0.0;
    let mut blocks = Vec::with_capacity(SPACE_BLOCKS);
    for k in 0..SPACE_BLOCKS {
        let (u, v) = block_bounds(x, endpoint, k);
        if !(u - v).is_normal() || !flow.problem().contains(v) && v != endpoint {
            break;
        }
        let base = a_start;
        let integrand = |w: f64| -> Result<f64> {
            let a = if zero_weight { 0.0 } else { base + quad::integrate(quotient, u, w, inner_tol)?.value };
            Ok((-p * a + problem.ln_rho(w)?).exp())
        };
        let (lo, hi) = (u.min(v), u.max(v));
        let q = quad::integrate(integrand, lo, hi, outer_tol)?;
        blocks.push(q.value);
        if !q.value.is_finite() {
            break;
        }
        if !zero_weight {
            a_start += quad::integrate(quotient, u, v, inner_tol)?.value;
        }
    }
    let ratios = TailProtocol::ratios(&blocks);
    Ok(TailSide {
        endpoint,
        diagnosis: TailProtocol::SPACE.classify(&blocks),
        last_ratio: ratios.last().copied().unwrap_or(f64::NAN),
        blocks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub interval: (f64, f64),
    pub sign: i8,
    pub integral: Option<f64>,
    pub tail: TailDiagnosis,
    pub verdict: TailDiagnosis,
    pub basepoint: f64,
    pub lower_tail: TailDiagnosis,
    pub upper_tail: TailDiagnosis,
    /// Diagnosis recomputed at a second basepoint.
    pub second_basepoint: f64,
    pub second_tail: TailDiagnosis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosReport {
    /// Set when the report answers a question about a different space,
    /// e.g. `sobolev`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    pub problem: ProblemSpec,
    pub p: f64,
    pub hypotheses: HypothesisReport,
    pub forward_invariance: InvarianceReport,
    pub admissibility: AdmissibilityEstimate,
    pub zero_set_null: bool,
    pub zeros: Vec<f64>,
    pub components: Vec<ComponentReport>,
    pub verdict: Verdict,
    /// The criterion sits exactly at the threshold, where the strict
    /// inequality fails.
    pub boundary: bool,
    pub notes: Vec<String>,
}

impl ChaosReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "verdict: {}", self.verdict);
        if let Some(tag) = &self.tag {
            let _ = writeln!(s, "space: {tag}");
        }
        let pr = &self.problem;
        let _ = writeln!(s, "problem: Omega = ({}, {}), F = {}, h = {} + i({}), rho = {}, p = {}", pr.omega_lo, pr.omega_hi, pr.f, pr.h_re, pr.h_im, pr.rho, self.p);
        let h = &self.hypotheses;
        let _ = writeln!(
            s,
            "hypotheses: a) {:?}  b) {:?} (side {:?})  Re h bounded {:?}  F' bounded {:?}  gamma {}",
            h.hyp_a_ok,
            h.hyp_b_ok,
            h.side,
            h.re_h_bounded,
            h.f_prime_bounded,
            h.gamma.map_or("none".to_string(), |g| g.to_string())
        );
        let _ = writeln!(s, "forward invariance: {:?}", self.forward_invariance.status);
        let a = &self.admissibility;
        let _ = writeln!(s, "admissibility: {:?} (M = {}, omega = {})", a.verdict, a.m, a.omega_rate);
        let _ = writeln!(s, "zero set null: {}", self.zero_set_null);
        for c in &self.components {
            let _ = writeln!(
                s,
                "component ({}, {}) sign {}: integral {} tail {:?} [lower {:?}, upper {:?}; at {} -> {:?}]",
                c.interval.0,
                c.interval.1,
                c.sign,
                c.integral.map_or("inf".to_string(), |v| format!("{v:.9}")),
                c.tail,
                c.lower_tail,
                c.upper_tail,
                c.second_basepoint,
                c.second_tail
            );
        }
        if self.boundary {
            let _ = writeln!(s, "boundary: the threshold is attained but not exceeded");
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChaosOptions {
    pub flow: FlowOptions,
    pub decomposition_grid: usize,
    pub admissibility_times: Vec<f64>,
    pub admissibility_points: usize,
    pub exec: Exec,
}

impl Default for ChaosOptions {
    fn default() -> Self {
        ChaosOptions {
            flow: FlowOptions::default(),
            decomposition_grid: 4096,
            admissibility_times: (0..=20).map(|k| 0.5 * k as f64).collect(),
            admissibility_points: 64,
            exec: Exec::default(),
        }
    }
}

/// Full classification of `T_{F,h}` on `L^p_rho(Omega)`.
pub fn chaos_test(problem: Arc<ProblemDef>, opts: &ChaosOptions) -> Result<ChaosReport> {
    let p = problem.p;
    let flow = Semiflow::new(problem.clone(), opts.flow);
    let decomp = flow.decompose(opts.decomposition_grid)?;
    let hypotheses = weights::check_hypotheses(&flow, &decomp);
    let forward_invariance = flow.check_forward_invariance();
    let xs = problem.sample_points(opts.admissibility_points);
    let admissibility = weights::estimate_admissibility(&flow, p, &opts.admissibility_times, &xs, opts.exec);
    let mut notes = Vec::new();

    let per_component = opts.exec.try_map(&decomp.components, |c| {
        let (x1, x2) = c.basepoints();
        let first = criterion_integral(&flow, c, p, x1)?;
        let second = criterion_integral(&flow, c, p, x2)?;
        Ok((first, second))
    })?;
    let mut components = Vec::new();
    let mut boundary = false;
    for (c, (first, second)) in decomp.components.iter().zip(per_component) {
        let verdict = if first.diagnosis == second.diagnosis { first.diagnosis } else { TailDiagnosis::Inconclusive };
        if first.diagnosis != second.diagnosis {
            notes.push(format!(
                "component ({}, {}): basepoints {} and {} disagree ({:?} vs {:?})",
                c.lo, c.hi, first.basepoint, second.basepoint, first.diagnosis, second.diagnosis
            ));
        }
        if first.at_threshold() {
            boundary = true;
            notes.push(format!(
                "component ({}, {}): criterion blocks stop shrinking (ratio 1), the threshold case; the strict inequality fails",
                c.lo, c.hi
            ));
        }
        components.push(ComponentReport {
            interval: (c.lo, c.hi),
            sign: c.sign,
            integral: first.value,
            tail: first.diagnosis,
            verdict,
            basepoint: first.basepoint,
            lower_tail: first.lower.diagnosis,
            upper_tail: first.upper.diagnosis,
            second_basepoint: second.basepoint,
            second_tail: second.diagnosis,
        });
    }

    if !decomp.zero_set_null {
        notes.push(format!("F vanishes on intervals {:?}: the zero set has positive measure", decomp.plateaus));
    }
    if forward_invariance.status != Check::Pass {
        notes.push(format!("forward invariance: {:?}", forward_invariance.status));
    }
    if admissibility.verdict != AdmissibilityVerdict::AdmissibleWitness {
        notes.push(format!("p-admissibility of rho: {:?}", admissibility.verdict));
    }
    if !hypotheses.all_pass() {
        notes.push("not every structural hypothesis could be confirmed".into());
    }
    if hypotheses.side == weights::Side::Left || hypotheses.side == weights::Side::Right {
        notes.push(format!("Im h / F is integrable only toward the {:?} end", hypotheses.side));
    }

    let any_divergent = components.iter().any(|c| c.verdict == TailDiagnosis::Divergent);
    let all_convergent = !components.is_empty() && components.iter().all(|c| c.verdict == TailDiagnosis::Convergent);
    let verdict = if !decomp.zero_set_null || any_divergent {
        Verdict::NotChaotic
    } else if all_convergent
        && hypotheses.all_pass()
        && forward_invariance.status == Check::Pass
        && admissibility.verdict == AdmissibilityVerdict::AdmissibleWitness
    {
        Verdict::ChaoticAndFhc
    } else {
        Verdict::Inconclusive
    };
    Ok(ChaosReport {
        tag: None,
        problem: problem.spec.clone(),
        p,
        hypotheses,
        forward_invariance,
        admissibility,
        zero_set_null: decomp.zero_set_null,
        zeros: decomp.zeros,
        components,
        verdict,
        boundary,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VflClassification {
    pub re_h0: f64,
    pub p: f64,
    /// `-1 / p`.
    pub threshold: f64,
    pub chaotic: bool,
    pub boundary: bool,
    pub strongly_stable: bool,
    pub verdict: Verdict,
    pub pipeline_verdict: Verdict,
    pub agrees: bool,
}

/// Whether a problem is the von Foerster-Lasota setting `F = -x` on `(0, 1)`.
pub fn is_vfl(problem: &ProblemDef) -> bool {
    problem.omega_lo == 0.0
        && problem.omega_hi == 1.0
        && problem.sample_points(64).iter().all(|&x| problem.eval_f(x).is_ok_and(|f| (f + x).abs() <= 1e-14 * x.max(1e-300)))
}

/// Threshold classification `Re h(0) > -1/p` for `F = -x` on `(0, 1)`,
/// compared against a verdict of [`chaos_test`] on the same problem.
pub fn vfl_classify_against(problem: &ProblemDef, pipeline_verdict: Verdict) -> Result<VflClassification> {
    if !is_vfl(problem) {
        return Err(Error::InvalidArgument("the classifier needs F = -x on (0, 1)".into()));
    }
    let p = problem.p;
    let h0 = problem.eval_h(0.0)?;
    let g = |x: f64| -> Result<f64> { Ok((problem.eval_h(x)? - h0.re).norm() / x) };
    let (diag, _) = quad::endpoint_integrability(g, 0.5, 0.0, 26, TailProtocol::INTEGRABILITY)?;
    if diag != TailDiagnosis::Convergent {
        return Err(Error::Hypothesis(format!("(h(x) - Re h(0)) / x is not confirmed integrable near 0: {diag:?}")));
    }
    let threshold = -1.0 / p;
    let boundary = (h0.re - threshold).abs() <= 1e-12;
    let chaotic = h0.re > threshold && !boundary;
    let verdict = if chaotic { Verdict::ChaoticAndFhc } else { Verdict::NotChaotic };
    Ok(VflClassification {
        re_h0: h0.re,
        p,
        threshold,
        chaotic,
        boundary,
        strongly_stable: !chaotic,
        verdict,
        pipeline_verdict,
        agrees: pipeline_verdict == verdict,
    })
}

/// [`vfl_classify_against`] with a fresh run of [`chaos_test`].
pub fn vfl_classify(problem: Arc<ProblemDef>, opts: &ChaosOptions) -> Result<VflClassification> {
    let verdict = chaos_test(problem.clone(), opts)?.verdict;
    vfl_classify_against(&problem, verdict)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTable {
    pub rows: Vec<(f64, f64)>,
    /// Least-squares slope of `ln ||T(t) f||` against `t`.
    pub rate: f64,
}

/// `||T(t) f||_p` on a time grid with a fitted exponential rate.
pub fn decay_probe(sg: &WeightedComposition, f: &GridFunction, t_grid: &[f64]) -> Result<DecayTable> {
    let rows = t_grid
        .iter()
        .map(|&t| Ok((t, sg.space.norm(&sg.apply_t(t, f)?)?)))
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.1 > 0.0).map(|&(t, n)| (t, n.ln())).collect();
    let rate = if pts.len() < 2 {
        f64::NAN
    } else {
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum::<f64>() / sxx
    };
    Ok(DecayTable { rows, rate })
}

/// `min over tau = 1, 2, 4, ... <= horizon` of `|{t <= tau : d(t) < r}| / tau`,
/// with the set located on a uniform mesh and its boundary refined by
/// bisection.
pub fn lower_density_estimate<D>(distance: D, r: f64, horizon: f64, mesh: usize) -> Result<f64>
where
    D: Fn(f64) -> Result<f64>,
{
    if !(horizon >= 1.0) || mesh == 0 {
        return Err(Error::InvalidArgument("need horizon >= 1 and a non-empty mesh".into()));
    }
    let inside = |t: f64| -> Result<bool> { Ok(distance(t)? < r) };
    let ts: Vec<f64> = (0..=mesh).map(|i| horizon * i as f64 / mesh as f64).collect();
    let flags = ts.iter().map(|&t| inside(t)).collect::<Result<Vec<bool>>>()?;
    // Crossing times, refined by bisection.
    let mut intervals = Vec::new();
    let mut start = if flags[0] { Some(0.0) } else { None };
    for i in 0..mesh {
        if flags[i] == flags[i + 1] {
            continue;
        }
        let (mut lo, mut hi) = (ts[i], ts[i + 1]);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if inside(mid)? == flags[i] {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let cross = 0.5 * (lo + hi);
        match start.take() {
            Some(s) => intervals.push((s, cross)),
            None => start = Some(cross),
        }
    }
    if let Some(s) = start {
        intervals.push((s, horizon));
    }
    let measure = |tau: f64| -> f64 { intervals.iter().map(|&(a, b)| (b.min(tau) - a).max(0.0)).sum() };
    let mut best = f64::INFINITY;
    let mut tau = 1.0;
    while tau <= horizon {
        best = best.min(measure(tau) / tau);
        tau *= 2.0;
    }
    Ok(best.clamp(0.0, 1.0))
}

/// Lower-density proxy for `{t : ||orbit(t) - u||_p < r}`.
pub fn orbit_lower_density<O>(space: &LpSpace, orbit: O, u: &GridFunction, r: f64, horizon: f64, mesh: usize) -> Result<f64>
where
    O: Fn(f64) -> Result<GridFunction>,
{
    lower_density_estimate(|t| space.norm(&orbit(t)?.sub(u)), r, horizon, mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(spec: ProblemSpec) -> Arc<ProblemDef> {
        Arc::new(spec.build().unwrap())
    }

    fn vfl(gamma: f64, p: f64) -> Arc<ProblemDef> {
        problem(ProblemSpec::new(0.0, 1.0, "-x").h_re(&gamma.to_string()).p(p))
    }

    fn component(flow: &Semiflow) -> Component {
        flow.decompose(1024).unwrap().components[0]
    }

    #[test]
    fn criterion_examples() {
        let f = Semiflow::new(vfl(0.0, 2.0), FlowOptions::default());
        let c = criterion_integral(&f, &component(&f), 2.0, 0.5).unwrap();
        assert_eq!(c.diagnosis, TailDiagnosis::Convergent);
        assert!((c.value.unwrap() - 1.0).abs() < 1e-6, "{c:?}");

        let f = Semiflow::new(vfl(0.3, 1.0), FlowOptions::default());
        let c = criterion_integral(&f, &component(&f), 1.0, 0.5).unwrap();
        let want = 0.5f64.powf(-0.3) / 1.3;
        assert!((c.value.unwrap() - want).abs() < 1e-6, "{c:?}");

        let f = Semiflow::new(vfl(-1.0, 1.0), FlowOptions::default());
        let c = criterion_integral(&f, &component(&f), 1.0, 0.5).unwrap();
        assert_eq!(c.diagnosis, TailDiagnosis::Divergent);
        assert!(c.at_threshold());

        let tr = problem(ProblemSpec::new(0.0, f64::INFINITY, "1").rho("exp(-x)").p(1.0));
        let f = Semiflow::new(tr, FlowOptions::default());
        let c = criterion_integral(&f, &component(&f), 1.0, 1.0).unwrap();
        assert!((c.value.unwrap() - 1.0).abs() < 1e-6, "{c:?}");
    }

    #[test]
    fn pipeline_examples() {
        let opts = ChaosOptions::default();
        assert_eq!(chaos_test(vfl(0.0, 2.0), &opts).unwrap().verdict, Verdict::ChaoticAndFhc);
        let tr = problem(ProblemSpec::new(0.0, f64::INFINITY, "1").p(1.0));
        assert_eq!(chaos_test(tr, &opts).unwrap().verdict, Verdict::NotChaotic);
        let plateau = problem(ProblemSpec::new(0.0, 1.0, "(x-0.4)*(x-0.6) + sqrt(((x-0.4)*(x-0.6))^2) - x*0"));
        let r = chaos_test(plateau, &opts).unwrap();
        assert!(!r.zero_set_null);
        assert_eq!(r.verdict, Verdict::NotChaotic);
    }

    #[test]
    fn vfl_thresholds() {
        let opts = ChaosOptions::default();
        for p in [1.0, 2.0] {
            for g in [-2.0, -1.0, -0.4, 0.0, 1.0] {
                let c = vfl_classify(vfl(g, p), &opts).unwrap();
                assert_eq!(c.verdict.is_chaotic(), p * g + 1.0 > 0.0, "p={p} g={g}");
                assert!(c.agrees, "p={p} g={g}: {c:?}");
            }
        }
        let b = vfl_classify(vfl(-0.5, 2.0), &opts).unwrap();
        assert!(b.boundary && !b.chaotic && b.strongly_stable);
        assert!(vfl_classify(problem(ProblemSpec::new(0.0, 1.0, "x*(1-x)")), &opts).is_err());
    }

    #[test]
    fn lower_density_synthetic() {
        assert_eq!(lower_density_estimate(|_| Ok(0.0), 0.1, 64.0, 256).unwrap(), 1.0);
        let periodic = |t: f64| Ok(if (t.floor() as i64) % 2 == 0 { 0.0 } else { 1.0 });
        let d = lower_density_estimate(periodic, 0.5, 64.0, 1000).unwrap();
        assert!((d - 0.5).abs() < 1e-6, "{d}");
        let escaping = lower_density_estimate(Ok, 0.5, 64.0, 256).unwrap();
        assert!((escaping - 0.5 / 64.0).abs() < 1e-9, "{escaping}");
    }
}
