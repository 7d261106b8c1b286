//! The invariant suite run by `wcsg verify`: flow properties, the
//! criterion identities for `S_t`, the norm identities and the occupancy
//! bound on a problem.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lpspace::{GridOptions, IndicatorSpec, LpSpace};
use crate::par::Exec;
use crate::problem::{ProblemDef, ProblemSpec};
use crate::semiflow::{Component, ComponentDecomposition, FlowOptions, Semiflow};
use crate::semigroup::{SemigroupOptions, WeightedComposition};
use crate::weights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckResult {
    fn new(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        CheckResult { name: name.into(), measured, tolerance, passed: measured <= tolerance, detail: None }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub problem: ProblemSpec,
    pub p: f64,
    pub grid: usize,
    pub closed_form: bool,
    pub intervals: Vec<(f64, f64)>,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "suite: {} ({} checks, grid {}, closed form {})", if self.all_passed() { "PASS" } else { "FAIL" }, self.checks.len(), self.grid, self.closed_form);
        for c in &self.checks {
            let _ = write!(s, "{:<4} {:<40} {:>12.3e} <= {:.1e}", if c.passed { "ok" } else { "FAIL" }, c.name, c.measured, c.tolerance);
            if let Some(d) = &c.detail {
                let _ = write!(s, "  ({d})");
            }
            s.push('\n');
        }
        s
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Data(e.to_string());
        out.write_record(["name", "measured", "tolerance", "passed"]).map_err(io)?;
        for c in &self.checks {
            out.write_record([c.name.clone(), c.measured.to_string(), c.tolerance.to_string(), c.passed.to_string()]).map_err(io)?;
        }
        let bytes = out.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    pub grid: GridOptions,
    pub flow: FlowOptions,
    pub semigroup: SemigroupOptions,
    pub exec: Exec,
    pub times: Vec<f64>,
    /// `r - t` for the cascade identity.
    pub offsets: Vec<f64>,
    /// Tolerance of the identities; defaults by flow kind when unset.
    pub identity_tol: Option<f64>,
    pub norm_tol: f64,
    /// Points for the flow properties; sample points when empty.
    pub flow_points: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            grid: GridOptions::default(),
            flow: FlowOptions::default(),
            semigroup: SemigroupOptions::default(),
            exec: Exec::default(),
            times: vec![0.1, 0.5, 1.0],
            offsets: vec![0.2, 1.0],
            identity_tol: None,
            norm_tol: 1e-6,
            flow_points: Vec::new(),
            intervals: Vec::new(),
        }
    }
}

/// Two test intervals inside a component: the second and third quarters of a
/// bounded one, fixed offsets from the finite end otherwise.
pub fn default_intervals(c: &Component) -> Vec<(f64, f64)> {
    match (c.lo.is_finite(), c.hi.is_finite()) {
        (true, true) => {
            let w = c.hi - c.lo;
            vec![(c.lo + 0.25 * w, c.lo + 0.5 * w), (c.lo + 0.5 * w, c.lo + 0.75 * w)]
        }
        (true, false) => vec![(c.lo + 1.0, c.lo + 3.0), (c.lo + 0.5, c.lo + 2.0)],
        (false, true) => vec![(c.hi - 3.0, c.hi - 1.0), (c.hi - 2.0, c.hi - 0.5)],
        (false, false) => vec![(-1.0, 1.0), (0.5, 2.0)],
    }
}

/// 101 probe points spread over the component containing `[a, b]`.
pub fn occupancy_probes(c: &Component, a: f64, b: f64) -> Vec<f64> {
    let len = b - a;
    let lo = if c.lo.is_finite() { c.lo } else { a - 2.0 * len };
    let hi = if c.hi.is_finite() { c.hi } else { b + 2.0 * len };
    (0..101).map(|k| lo + (hi - lo) * (0.005 + 0.99 * k as f64 / 100.0)).collect()
}

/// Group law, inversion, derivative against central differences, the
/// cocycle identity and `rho_{0,p} = rho` at the given points. Pairs whose
/// trajectories leave the domain are skipped.
pub fn flow_properties(flow: &Semiflow, points: &[f64], times: &[f64]) -> Result<Vec<CheckResult>> {
    let problem = flow.problem();
    let closed = flow.closed_form().is_some();
    let traj_tol = if closed { 1e-8 } else { 1e-6 };
    let (mut group, mut inversion, mut deriv, mut cocycle, mut rho0) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    for &x in points {
        let r0 = weights::rho_backward(flow, 0.0, problem.p, x)?;
        let r1 = weights::rho_forward(flow, 0.0, problem.p, x)?;
        let rho = problem.eval_rho(x)?;
        rho0 = rho0.max((r0 - rho).abs()).max((r1 - rho).abs());
        for &t in times {
            for &s in times {
                let outcome = (|| -> Result<()> {
                    let xs = flow.state(s, x)?;
                    let whole = flow.state(t + s, x)?;
                    let split = flow.state(t, xs.end)?;
                    group = group.max(rel(split.end, whole.end));
                    let back = flow.inverse_flow(t + s, whole.end)?.ok_or(Error::ForwardInvariance { t: t + s, x })?;
                    // Measured against the larger state: x + t - t cannot beat
                    // the rounding of x + t.
                    inversion = inversion.max((back - x).abs() / x.abs().max(whole.end.abs()).max(1e-300));
                    cocycle = cocycle.max((whole.log_weight - (split.log_weight + xs.log_weight)).norm());
                    let d = 1e-6 * x.abs().max(1.0);
                    let fd = (flow.flow(t, x + d)? - flow.flow(t, x - d)?) / (2.0 * d);
                    deriv = deriv.max(rel(fd, flow.flow_derivative(t, x)?));
                    Ok(())
                })();
                match outcome {
                    Ok(()) => evaluated += 1,
                    Err(Error::ForwardInvariance { .. }) | Err(Error::InvalidArgument(_)) => skipped += 1,
                    Err(e) => return Err(e),
                }
            }
        }
    }
    let note = format!("{evaluated} pairs, {skipped} skipped");
    let mut out = vec![
        CheckResult::new("flow: group law", group, traj_tol).with_detail(note.clone()),
        CheckResult::new("flow: inversion", inversion, traj_tol),
        CheckResult::new("flow: derivative vs central difference", deriv, 1e-4),
        CheckResult::new("flow: cocycle identity", cocycle, 1e-8),
        CheckResult::new("weights: rho_{0,p} = rho", rho0, 0.0),
    ];
    if evaluated == 0 {
        for c in &mut out[..4] {
            c.passed = false;
            c.detail = Some("no trajectory stayed in the domain".into());
        }
    }
    Ok(out)
}

/// All invariants on one problem.
pub fn run_suite(problem: Arc<ProblemDef>, opts: &SuiteOptions) -> Result<SuiteReport> {
    let flow = Arc::new(Semiflow::new(problem.clone(), opts.flow));
    let closed = flow.closed_form().is_some();
    let decomp: ComponentDecomposition = flow.decompose(4096)?;
    let component = *decomp.components.first().ok_or(Error::ZeroSetNotNull)?;
    let intervals = if opts.intervals.is_empty() { default_intervals(&component) } else { opts.intervals.clone() };
    let space = LpSpace::for_problem(problem.clone(), &decomp.zeros, &opts.grid)?.with_exec(opts.exec);
    let sg = WeightedComposition::new(flow.clone(), space).with_options(opts.semigroup);
    let p = problem.p;
    let id_tol = opts.identity_tol.unwrap_or(if closed { 1e-6 } else { 1e-4 });

    let points = if opts.flow_points.is_empty() { problem.sample_points(16) } else { opts.flow_points.clone() };
    let mut checks = flow_properties(&flow, &points, &[0.05, 0.3, 1.0])?;

    let r_grid: Vec<f64> = opts.times.iter().flat_map(|t| opts.offsets.iter().map(move |d| t + d)).collect();
    for &(a, b) in &intervals {
        let spec = IndicatorSpec::new(&flow, &decomp, a, b)?;
        let tag = format!("[{a}, {b}]");
        let fhc = sg.verify_fhc_identities(&spec, &opts.times, &r_grid)?;
        checks.push(CheckResult::new(format!("fhc: T(t) S_t = id on {tag}"), fhc.right_inverse_max, id_tol));
        checks.push(CheckResult::new(format!("fhc: T(t) S_r = S_(r-t) on {tag}"), fhc.cascade_max, id_tol));

        let (mut back, mut fwd) = (0.0f64, 0.0f64);
        let chi = sg.indicator(&spec);
        for &t in &opts.times {
            let s = sg.apply_s_indicator(t, &spec)?;
            let want = sg.backward_density_integral(&spec, t, p)?;
            back = back.max((sg.space.norm_pow(&s, p)? - want).abs() / want);
            let tf = sg.apply_t(t, &chi)?;
            let want = sg.forward_density_integral(&spec, t, 1.0)?;
            let got = sg.space.norm_pow(&tf, 1.0)?;
            fwd = fwd.max(if want == 0.0 { got } else { (got - want).abs() / want });
        }
        checks.push(CheckResult::new(format!("norm: ||S_t chi||_p^p = int rho_(-t,p) on {tag}"), back, opts.norm_tol));
        checks.push(CheckResult::new(format!("norm: ||T(t) chi||_1 = int rho_(t,1) on {tag}"), fwd, opts.norm_tol));

        let ys = occupancy_probes(&decomp.components[spec.component], a, b);
        let occ = sg.occupancy_bound(&spec, &ys)?;
        checks.push(
            CheckResult::new(format!("occupancy: sup <= max(int dr/|F|, s) on {tag}"), (occ.measured_sup - occ.c_formula).max(0.0), 1e-6)
                .with_detail(format!("sup {:.9} at y = {}, bound {:.9}", occ.measured_sup, occ.argmax, occ.c_formula)),
        );
        checks.push(CheckResult::new(
            format!("occupancy: |s - int dr/|F|| on {tag}"),
            (occ.transit.flow_time - occ.transit.quadrature).abs(),
            1e-8,
        ));
    }
    Ok(SuiteReport { problem: problem.spec.clone(), p, grid: opts.grid.nodes, closed_form: closed, intervals, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vfl_suite_passes() {
        let problem = Arc::new(ProblemSpec::new(0.0, 1.0, "-x").p(1.0).build().unwrap());
        let r = run_suite(problem, &SuiteOptions::default()).unwrap();
        assert!(r.all_passed(), "{}", r.to_text());
        assert_eq!(r.intervals[0], (0.25, 0.5));
    }

    #[test]
    fn fault_injection_fails() {
        let problem = Arc::new(ProblemSpec::new(0.0, 1.0, "-x").h_re("1").p(2.0).build().unwrap());
        let opts = SuiteOptions {
            semigroup: SemigroupOptions { corrupt_inverse: true, ..Default::default() },
            ..Default::default()
        };
        let r = run_suite(problem, &opts).unwrap();
        assert!(!r.all_passed());
        assert!(r.checks.iter().any(|c| c.name.starts_with("fhc: T(t) S_t") && !c.passed));
    }
}
