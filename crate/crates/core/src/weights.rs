//! The weight cocycle `h_t`, the transported densities `rho_{t,p}` and
//! `rho_{-t,p}`, sampled admissibility constants and the structural
//! hypotheses on `h`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::quad::{self, TailDiagnosis, TailProtocol};
use crate::semiflow::{ComponentDecomposition, Semiflow};
use crate::Check;

/// `h_t(x) = exp(int_0^t h(phi(s, x)) ds)`.
pub fn weight_cocycle(flow: &Semiflow, t: f64, x: f64) -> Result<Complex64> {
    Ok(flow.state(t, x)?.weight())
}

/// `ln rho_{-t,p}(x) = -p Re H + J + ln rho(phi(t, x))`.
pub fn ln_rho_backward(flow: &Semiflow, t: f64, p: f64, x: f64) -> Result<f64> {
    if t == 0.0 {
        return flow.problem().ln_rho(x);
    }
    let s = flow.state(t, x)?;
    Ok(-p * s.log_weight.re + s.log_jacobian + flow.problem().ln_rho(s.end)?)
}

/// `rho_{-t,p}(x) = |h_t(x)|^{-p} d/dx phi(t, x) rho(phi(t, x))`.
pub fn rho_backward(flow: &Semiflow, t: f64, p: f64, x: f64) -> Result<f64> {
    if t == 0.0 {
        return flow.problem().eval_rho(x);
    }
    Ok(ln_rho_backward(flow, t, p, x)?.exp())
}

/// `ln rho_{t,p}(x)`, or `None` when `x` is outside `phi(t, Omega)`.
pub fn ln_rho_forward(flow: &Semiflow, t: f64, p: f64, x: f64) -> Result<Option<f64>> {
    if t == 0.0 {
        return flow.problem().ln_rho(x).map(Some);
    }
    let Some(s) = flow.back_state(t, x)? else { return Ok(None) };
    Ok(Some(p * s.log_weight.re - s.log_jacobian + flow.problem().ln_rho(s.start)?))
}

/// `rho_{t,p}(x) = chi_{phi(t, Omega)}(x) |h_t(phi(-t, x))|^p
/// d/dx phi(-t, x) rho(phi(-t, x))`.
pub fn rho_forward(flow: &Semiflow, t: f64, p: f64, x: f64) -> Result<f64> {
    if t == 0.0 {
        return flow.problem().eval_rho(x);
    }
    Ok(ln_rho_forward(flow, t, p, x)?.map_or(0.0, f64::exp))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `rho_{t,p}`
    Forward,
    /// `rho_{-t,p}`
    Backward,
}

/// One of the two density families at a fixed exponent.
#[derive(Debug, Clone, Copy)]
pub struct DensityProfile<'a> {
    pub flow: &'a Semiflow,
    pub direction: Direction,
    pub p: f64,
}

impl<'a> DensityProfile<'a> {
    pub fn new(flow: &'a Semiflow, direction: Direction, p: f64) -> Self {
        DensityProfile { flow, direction, p }
    }

    pub fn eval(&self, t: f64, x: f64) -> Result<f64> {
        match self.direction {
            Direction::Forward => rho_forward(self.flow, t, self.p, x),
            Direction::Backward => rho_backward(self.flow, t, self.p, x),
        }
    }

    /// Logarithm of the density; `-inf` where it vanishes.
    pub fn eval_ln(&self, t: f64, x: f64) -> Result<f64> {
        match self.direction {
            Direction::Forward => Ok(ln_rho_forward(self.flow, t, self.p, x)?.unwrap_or(f64::NEG_INFINITY)),
            Direction::Backward => ln_rho_backward(self.flow, t, self.p, x),
        }
    }

    /// Smallest `C >= 1` with `rho(a) / C <= rho(x) <= C rho(b)` over
    /// `n + 1` equispaced `x` in `[a, b]`. A sampled diagnostic only.
    pub fn comparison_constant(&self, t: f64, a: f64, b: f64, n: usize) -> Result<f64> {
        if !(a < b) || n == 0 {
            return Err(Error::InvalidArgument(format!("comparison window [{a}, {b}] with {n} steps")));
        }
        let (la, lb) = (self.eval_ln(t, a)?, self.eval_ln(t, b)?);
        let mut worst = 0.0f64;
        for k in 0..=n {
            let lx = self.eval_ln(t, a + (b - a) * k as f64 / n as f64)?;
            worst = worst.max(la - lx).max(lx - lb);
        }
        Ok(worst.exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissibilityVerdict {
    AdmissibleWitness,
    Violation,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioSample {
    pub t: f64,
    /// `ln sup_x R(t, x)` on the finest sampled grid.
    pub log_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityEstimate {
    #[serde(rename = "M")]
    pub m: f64,
    pub omega_rate: f64,
    pub max_ratio_trace: Vec<RatioSample>,
    pub verdict: AdmissibilityVerdict,
    pub notes: Vec<String>,
}

const ADMISSIBILITY_LEVELS: usize = 4;

/// Sampled witness or violation of
/// `|h_t(x)|^p rho(x) <= M e^{omega t} rho(phi(t, x)) d/dx phi(t, x)`.
///
/// The x-grid is refined three times, pushing samples further toward each
/// endpoint; a supremum that keeps growing by non-decreasing increments is
/// reported as a violation.
pub fn estimate_admissibility(flow: &Semiflow, p: f64, t_grid: &[f64], x_grid: &[f64], exec: Exec) -> AdmissibilityEstimate {
    let mut notes = Vec::new();
    let inconclusive = |notes: Vec<String>| AdmissibilityEstimate {
        m: f64::NAN,
        omega_rate: f64::NAN,
        max_ratio_trace: Vec::new(),
        verdict: AdmissibilityVerdict::Inconclusive,
        notes,
    };
    if t_grid.is_empty() || x_grid.is_empty() {
        return inconclusive(vec!["empty sampling grid".into()]);
    }
    let problem = flow.problem();
    let ln_ratio = |t: f64, x: f64| -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        let s = flow.state(t, x)?;
        Ok(p * s.log_weight.re - s.log_jacobian + problem.ln_rho(x)? - problem.ln_rho(s.end)?)
    };
    let mut xs: Vec<f64> = x_grid.iter().copied().filter(|&x| problem.contains(x)).collect();
    xs.sort_by(f64::total_cmp);
    if xs.is_empty() {
        return inconclusive(vec!["no sample point lies in the domain".into()]);
    }
    let (xmin, xmax) = (xs[0], xs[xs.len() - 1]);
    let extent = (xmax - xmin).max(1.0);

    let mut sups: Vec<Vec<f64>> = Vec::new();
    let mut level_pts = xs.clone();
    for level in 0..ADMISSIBILITY_LEVELS {
        if level > 0 {
            let reach = extent * (2f64.powi(level as i32) - 1.0);
            for k in 1..=8 {
                let d = reach * k as f64 / 8.0;
                if !problem.omega_hi.is_finite() {
                    level_pts.push(xmax + d);
                }
                if !problem.omega_lo.is_finite() {
                    level_pts.push(xmin - d);
                }
            }
            for j in [2 * level - 1, 2 * level] {
                let s = 10f64.powi(-(j as i32));
                if problem.omega_lo.is_finite() {
                    level_pts.push(problem.omega_lo + (xmin - problem.omega_lo) * s);
                }
                if problem.omega_hi.is_finite() {
                    level_pts.push(problem.omega_hi - (problem.omega_hi - xmax) * s);
                }
            }
            level_pts.retain(|&x| problem.contains(x));
        }
        let pts = &level_pts;
        let row = exec.try_map(t_grid, |&t| {
            let vals = pts.iter().map(|&x| ln_ratio(t, x)).collect::<Result<Vec<f64>>>()?;
            Ok(vals.into_iter().fold(f64::NEG_INFINITY, f64::max))
        });
        match row {
            Ok(r) => sups.push(r),
            Err(e) if level == 0 => return inconclusive(vec![format!("ratio evaluation failed: {e}")]),
            Err(e) => {
                notes.push(format!("refinement level {level} abandoned: {e}"));
                break;
            }
        }
    }

    let mut violation = false;
    if sups.len() == ADMISSIBILITY_LEVELS {
        for (i, &t) in t_grid.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            let s: Vec<f64> = sups.iter().map(|row| row[i]).collect();
            let d: Vec<f64> = s.windows(2).map(|w| w[1] - w[0]).collect();
            let growing = d.iter().all(|&v| v > 1e-9 * (1.0 + s[0].abs()));
            let accelerating = d.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9));
            if growing && accelerating {
                violation = true;
                notes.push(format!("sup_x R({t}, x) keeps growing under refinement: {s:?}"));
                break;
            }
        }
    }

    let finest = sups.last().expect("level 0 succeeded");
    let trace: Vec<RatioSample> = t_grid.iter().zip(finest).map(|(&t, &log_sup)| RatioSample { t, log_sup }).collect();
    let omega_rate = slope(&trace);
    let worst = trace.iter().map(|r| r.log_sup - omega_rate * r.t).fold(f64::NEG_INFINITY, f64::max);
    let m = worst.exp().max(1.0);
    let verdict = if violation {
        AdmissibilityVerdict::Violation
    } else if trace.iter().all(|r| r.log_sup.is_finite()) && m.is_finite() {
        AdmissibilityVerdict::AdmissibleWitness
    } else {
        AdmissibilityVerdict::Inconclusive
    };
    AdmissibilityEstimate { m, omega_rate, max_ratio_trace: trace, verdict, notes }
}

/// Least-squares slope of `log_sup` against `t`.
fn slope(trace: &[RatioSample]) -> f64 {
    let n = trace.len() as f64;
    let mt = trace.iter().map(|r| r.t).sum::<f64>() / n;
    let my = trace.iter().map(|r| r.log_sup).sum::<f64>() / n;
    let sxx: f64 = trace.iter().map(|r| (r.t - mt).powi(2)).sum();
    if sxx == 0.0 {
        return if mt > 0.0 { my / mt } else { 0.0 };
    }
    trace.iter().map(|r| (r.t - mt) * (r.log_sup - my)).sum::<f64>() / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `Im h / F` is integrable on `(inf Omega, beta)` for every `beta`.
    Left,
    /// `Im h / F` is integrable on `(beta, sup Omega)` for every `beta`.
    Right,
    Both,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// Common value of `h` on `{F = 0}`; absent when `F` has no zeros.
    pub gamma: Option<f64>,
    pub hyp_a_ok: Check,
    pub hyp_b_ok: Check,
    pub re_h_bounded: Check,
    pub f_prime_bounded: Check,
    pub side: Side,
    pub evidence: Vec<String>,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        [self.hyp_a_ok, self.hyp_b_ok, self.re_h_bounded, self.f_prime_bounded].iter().all(|c| c.passed())
    }
}

const HYP_GAMMA_TOL: f64 = 1e-9;
const INTEGRABILITY_BLOCKS: usize = 26;

/// Hypotheses a) and b) together with the sampled bounds on `Re h` and `F'`.
pub fn check_hypotheses(flow: &Semiflow, decomp: &ComponentDecomposition) -> HypothesisReport {
    let problem = flow.problem();
    let mut evidence = Vec::new();

    let mut zero_points: Vec<f64> = decomp.zeros.clone();
    for &(a, b) in &decomp.plateaus {
        zero_points.extend([a, 0.5 * (a + b), b]);
    }
    let (gamma, hyp_a_ok) = if zero_points.is_empty() {
        evidence.push("F has no zeros: hypothesis a) holds vacuously".into());
        (None, Check::Pass)
    } else {
        match zero_points.iter().map(|&z| problem.eval_h(z)).collect::<Result<Vec<_>>>() {
            Ok(hs) => {
                let g = hs[0].re;
                let spread = hs.iter().map(|h| (h.re - g).abs().max(h.im.abs())).fold(0.0, f64::max);
                evidence.push(format!("h on {{F = 0}} deviates from {g} by at most {spread:.3e}"));
                if spread <= HYP_GAMMA_TOL {
                    (Some(g), Check::Pass)
                } else {
                    (None, Check::Fail)
                }
            }
            Err(e) => {
                evidence.push(format!("h cannot be evaluated at a zero of F: {e}"));
                (None, Check::Inconclusive)
            }
        }
    };

    let (side, hyp_b_ok) = if problem.h_im.constant_value() == Some(0.0) {
        evidence.push("Im h = 0: hypothesis b) holds on both sides".into());
        (Side::Both, Check::Pass)
    } else {
        imaginary_quotient_side(flow, decomp, &mut evidence)
    };

    let bounded = |r: &crate::problem::SampledRange, what: &str, evidence: &mut Vec<String>| {
        evidence.push(format!("sampled {what} in [{:.6e}, {:.6e}]", r.min, r.max));
        if r.bounded {
            Check::Pass
        } else {
            Check::Fail
        }
    };
    let re_h_bounded = bounded(&problem.bounds.re_h, "Re h", &mut evidence);
    let f_prime_bounded = bounded(&problem.bounds.f_prime, "F'", &mut evidence);
    HypothesisReport { gamma, hyp_a_ok, hyp_b_ok, re_h_bounded, f_prime_bounded, side, evidence }
}

/// Test integrability of `Im h / F` at each endpoint of the domain and on
/// both sides of each interior zero.
fn imaginary_quotient_side(flow: &Semiflow, decomp: &ComponentDecomposition, evidence: &mut Vec<String>) -> (Side, Check) {
    let problem = flow.problem();
    let g = |y: f64| -> Result<f64> { Ok(problem.h_im.eval(y)? / problem.f.eval(y)?) };
    let test = |start: f64, end: f64| -> TailDiagnosis {
        match quad::endpoint_integrability(g, start, end, INTEGRABILITY_BLOCKS, TailProtocol::INTEGRABILITY) {
            Ok((d, _)) => d,
            Err(_) => TailDiagnosis::Inconclusive,
        }
    };
    let (Some(first), Some(last)) = (decomp.components.first(), decomp.components.last()) else {
        evidence.push("no component to test hypothesis b) on".into());
        return (Side::Neither, Check::Inconclusive);
    };
    let left_end = test(first.basepoints().0, problem.omega_lo);
    let right_end = test(last.basepoints().0, problem.omega_hi);
    let mut interior = TailDiagnosis::Convergent;
    for w in decomp.components.windows(2) {
        for d in [test(w[0].basepoints().0, w[0].hi), test(w[1].basepoints().0, w[1].lo)] {
            interior = combine(interior, d);
        }
    }
    evidence.push(format!(
        "Im h / F near inf: {left_end:?}, near sup: {right_end:?}, around interior zeros: {interior:?}"
    ));
    let left = combine(left_end, interior);
    let right = combine(right_end, interior);
    use TailDiagnosis::*;
    match (left, right) {
        (Convergent, Convergent) => (Side::Both, Check::Pass),
        (Convergent, _) => (Side::Left, Check::Pass),
        (_, Convergent) => (Side::Right, Check::Pass),
        (Divergent, Divergent) => (Side::Neither, Check::Fail),
        _ => (Side::Neither, Check::Inconclusive),
    }
}

fn combine(a: TailDiagnosis, b: TailDiagnosis) -> TailDiagnosis {
    use TailDiagnosis::*;
    match (a, b) {
        (Divergent, _) | (_, Divergent) => Divergent,
        (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
        _ => Convergent,
    }
}
