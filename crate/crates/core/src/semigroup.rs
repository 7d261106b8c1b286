//! The weighted composition semigroup `T(t) f = h_t (f o phi(t, .))`, its
//! right inverses `S_t` on step functions, and the scalar time integrals
//! behind the frequent hypercyclicity criterion.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lpspace::{indicator, GridFunction, IndicatorSpec, LpSpace};
use crate::quad::{self, TailDiagnosis, TailProtocol, Tolerance};
use crate::semiflow::{Semiflow, TransitTime};
use crate::weights;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemigroupOptions {
    /// Upper limit of the time integrals.
    pub horizon: f64,
    /// `|h_t|` below this cannot be inverted.
    pub weight_floor: f64,
    /// Minimum number of nodes between consecutive breakpoints of an output.
    pub min_piece_nodes: usize,
    /// Fault injection: use `h_t` instead of `1 / h_t` in `S_t`.
    pub corrupt_inverse: bool,
}

impl Default for SemigroupOptions {
    fn default() -> Self {
        SemigroupOptions { horizon: 50.0, weight_floor: 1e-300, min_piece_nodes: 32, corrupt_inverse: false }
    }
}

/// A scalar improper time integral truncated at the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeIntegral {
    pub value: f64,
    pub tail: TailDiagnosis,
    /// Contributions of `[0, 1], [1, 2], [2, 4], ...`; the last block may be
    /// cut short by the horizon.
    pub blocks: Vec<f64>,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccupancyKind {
    /// Time during which `y` lies in `phi(t, I)`.
    Image,
    /// Time during which `phi(t, y)` lies in `I`.
    Preimage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyBound {
    pub interval: (f64, f64),
    pub transit: TransitTime,
    /// `max{int_I dr / |F|, s}`.
    pub c_formula: f64,
    pub measured_sup: f64,
    pub argmax: f64,
    pub kind_of_sup: OccupancyKind,
    pub probes: usize,
}

impl OccupancyBound {
    pub fn holds(&self, tol: f64) -> bool {
        self.measured_sup <= self.c_formula + tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentitySample {
    pub t: f64,
    pub r: Option<f64>,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FhcIdentityReport {
    pub interval: (f64, f64),
    /// Worst `||T(t) S_t chi_I - chi_I|| / ||chi_I||`.
    pub right_inverse_max: f64,
    /// Worst `||T(t) S_r chi_I - S_{r-t} chi_I|| / ||S_{r-t} chi_I||`.
    pub cascade_max: f64,
    pub samples: Vec<IdentitySample>,
}

#[derive(Debug, Clone)]
pub struct WeightedComposition {
    pub flow: Arc<Semiflow>,
    pub space: LpSpace,
    pub opts: SemigroupOptions,
}

impl WeightedComposition {
    pub fn new(flow: Arc<Semiflow>, space: LpSpace) -> Self {
        WeightedComposition { flow, space, opts: SemigroupOptions::default() }
    }

    pub fn with_options(mut self, opts: SemigroupOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn p(&self) -> f64 {
        self.space.p
    }

    /// A point strictly inside the domain for evaluating at closure nodes.
    fn interior(&self, x: f64) -> f64 {
        let pr = self.flow.problem();
        let eps = 1e-12 * (self.space.grid.hi() - self.space.grid.lo());
        if x <= pr.omega_lo {
            pr.omega_lo + eps
        } else if x >= pr.omega_hi {
            pr.omega_hi - eps
        } else {
            x
        }
    }

    /// Base grid nodes, plus uniform fill between consecutive breakpoints
    /// that the base grid resolves poorly.
    fn output_nodes(&self, breaks: &[f64], keep: impl Fn(f64) -> bool) -> Vec<f64> {
        let base = self.space.grid.nodes();
        let mut xs: Vec<f64> = base.iter().copied().filter(|&x| keep(x)).collect();
        let min = self.opts.min_piece_nodes;
        for w in breaks.windows(2) {
            let (u, v) = (w[0], w[1]);
            if !(u < v) || !keep(0.5 * (u + v)) {
                continue;
            }
            let inside = base.partition_point(|&x| x < v) - base.partition_point(|&x| x <= u);
            if inside < min {
                xs.extend((1..=min).map(|k| u + (v - u) * k as f64 / (min + 1) as f64));
            }
        }
        // Drop regular nodes that nearly coincide with a breakpoint.
        xs.retain(|&x| {
            let i = breaks.partition_point(|&b| b < x);
            let near = |b: f64| (x - b).abs() <= 1e-12 * (1.0 + b.abs());
            !(i < breaks.len() && near(breaks[i]) || i > 0 && near(breaks[i - 1]))
        });
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs
    }

    /// `T(t) f`.
    pub fn apply_t(&self, t: f64, f: &GridFunction) -> Result<GridFunction> {
        if t == 0.0 || f.is_empty() {
            return Ok(f.clone());
        }
        let flow = &*self.flow;
        // Jumps of f pulled back to the points that flow onto them.
        let mut jumps: Vec<(f64, Complex64, Complex64)> = Vec::new();
        for (y, l, r) in f.breakpoints() {
            if let Some(s) = flow.back_state(t, y)? {
                let w = s.weight();
                jumps.push((s.start, l * w, r * w));
            }
        }
        jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let breaks: Vec<f64> = jumps.iter().map(|j| j.0).collect();
        let xs = self.output_nodes(&breaks, |_| true);
        let vals = self.space.exec.try_map(&xs, |&x| {
            let s = flow.state(t, self.interior(x))?;
            Ok(s.weight() * f.eval(s.end))
        })?;
        merge(xs, vals, jumps)
    }

    /// `1 / h_t(x)` from a trajectory state, or `h_t(x)` under fault
    /// injection.
    fn inverse_weight(&self, log_weight: Complex64, x: f64, t: f64) -> Result<Complex64> {
        let modulus = log_weight.re.exp();
        if modulus < self.opts.weight_floor {
            return Err(Error::WeightUnderflow { x, t, modulus });
        }
        Ok(if self.opts.corrupt_inverse { log_weight.exp() } else { (-log_weight).exp() })
    }

    /// `S_t (sum_j c_j chi_{I_j})`.
    pub fn apply_s(&self, t: f64, pieces: &[(IndicatorSpec, Complex64)]) -> Result<GridFunction> {
        if pieces.is_empty() {
            return Ok(GridFunction::zero());
        }
        let flow = &*self.flow;
        // Images phi(t, I_j) = [A_j, B_j] and exact weights at their ends.
        let mut images = Vec::with_capacity(pieces.len());
        let mut edge_weights: Vec<(f64, Complex64)> = Vec::new();
        for (spec, c) in pieces {
            let sa = flow.state(t, spec.a)?;
            let sb = flow.state(t, spec.b)?;
            edge_weights.push((sa.end, self.inverse_weight(sa.log_weight, spec.a, t)?));
            edge_weights.push((sb.end, self.inverse_weight(sb.log_weight, spec.b, t)?));
            images.push((sa.end, sb.end, *c));
        }
        let mut breaks: Vec<f64> = edge_weights.iter().map(|e| e.0).collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let covered = |y: f64| images.iter().any(|&(a, b, _)| a < y && y < b);
        let weight_at = |y: f64| -> Result<Complex64> {
            if let Some(&(_, w)) = edge_weights.iter().find(|e| e.0 == y) {
                return Ok(w);
            }
            let s = flow
                .back_state(t, y)?
                .ok_or_else(|| Error::Integrator(format!("{y} lies in phi({t}, I) but not in the range of the flow")))?;
            self.inverse_weight(s.log_weight, s.start, t)
        };
        let sum = |member: &dyn Fn(f64, f64) -> bool| -> Complex64 {
            images.iter().filter(|&&(a, b, _)| member(a, b)).map(|&(_, _, c)| c).fold(ZERO, |s, c| s + c)
        };
        let xs = self.output_nodes(&breaks, covered);
        let vals = self.space.exec.try_map(&xs, |&y| {
            let c = sum(&|a, b| a < y && y < b);
            if c == ZERO {
                Ok(ZERO)
            } else {
                Ok(c * weight_at(y)?)
            }
        })?;
        let mut jumps = Vec::with_capacity(breaks.len());
        for &y in &breaks {
            let w = weight_at(y)?;
            let l = sum(&|a, b| a < y && y <= b);
            let r = sum(&|a, b| a <= y && y < b);
            jumps.push((y, l * w, r * w));
        }
        merge(xs, vals, jumps)
    }

    /// `S_t chi_I`.
    pub fn apply_s_indicator(&self, t: f64, spec: &IndicatorSpec) -> Result<GridFunction> {
        self.apply_s(t, &[(*spec, Complex64::new(1.0, 0.0))])
    }

    pub fn indicator(&self, spec: &IndicatorSpec) -> GridFunction {
        indicator(spec, &self.space.grid)
    }

    /// Relative errors of `T(t) S_t = id` and `T(t) S_r = S_{r-t}` for all
    /// `t` in `t_grid` and `r > t` in `r_grid`.
    pub fn verify_fhc_identities(&self, spec: &IndicatorSpec, t_grid: &[f64], r_grid: &[f64]) -> Result<FhcIdentityReport> {
        let chi = self.indicator(spec);
        let mut samples = Vec::new();
        let (mut right_inverse_max, mut cascade_max) = (0.0f64, 0.0f64);
        for &t in t_grid {
            let ts = self.apply_t(t, &self.apply_s_indicator(t, spec)?)?;
            let e = self.space.relative_error(&ts, &chi)?;
            right_inverse_max = right_inverse_max.max(e);
            samples.push(IdentitySample { t, r: None, relative_error: e });
            for &r in r_grid.iter().filter(|&&r| r > t) {
                let lhs = self.apply_t(t, &self.apply_s_indicator(r, spec)?)?;
                let rhs = self.apply_s_indicator(r - t, spec)?;
                let e = self.space.relative_error(&lhs, &rhs)?;
                cascade_max = cascade_max.max(e);
                samples.push(IdentitySample { t, r: Some(r), relative_error: e });
            }
        }
        Ok(FhcIdentityReport { interval: (spec.a, spec.b), right_inverse_max, cascade_max, samples })
    }

    /// `int_I rho_{-t,p}`, which equals `||S_t chi_I||_p^p`.
    pub fn backward_density_integral(&self, spec: &IndicatorSpec, t: f64, p: f64) -> Result<f64> {
        let q = quad::integrate(
            |y| weights::rho_backward(&self.flow, t, p, y),
            spec.a,
            spec.b,
            Tolerance { abs: 1e-300, rel: 1e-12, max_panels: 200 },
        )?;
        Ok(q.value)
    }

    /// `int_I rho_{t,p}`, which equals `||T(t) chi_I||_1` for `p = 1`.
    pub fn forward_density_integral(&self, spec: &IndicatorSpec, t: f64, p: f64) -> Result<f64> {
        let inside = |y: f64| -> Result<bool> { Ok(self.flow.back_state(t, y)?.is_some()) };
        // phi(t, Omega) is an interval: split I at its ends.
        let n = 64;
        let pts: Vec<f64> = (0..=n).map(|k| spec.a + (spec.b - spec.a) * k as f64 / n as f64).collect();
        let flags = pts.iter().map(|&y| inside(y)).collect::<Result<Vec<bool>>>()?;
        let mut cuts = vec![spec.a];
        for k in 0..n {
            if flags[k] != flags[k + 1] {
                let (mut lo, mut hi) = (pts[k], pts[k + 1]);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if inside(mid)? == flags[k] {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                cuts.push(0.5 * (lo + hi));
            }
        }
        cuts.push(spec.b);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let q = quad::integrate(
                |y| weights::rho_forward(&self.flow, t, p, y),
                w[0],
                w[1],
                Tolerance { abs: 1e-300, rel: 1e-12, max_panels: 200 },
            )?;
            total += q.value;
        }
        Ok(total)
    }

    /// `int_0^H g(t) dt` over dyadic blocks, with the tail classified on the
    /// full blocks `[2^k, 2^{k+1}]`.
    pub fn time_integral<G>(&self, g: G) -> Result<TimeIntegral>
    where
        G: Fn(f64) -> Result<f64>,
    {
        let horizon = self.opts.horizon;
        let mut edges = vec![0.0, 1.0f64.min(horizon)];
        while *edges.last().expect("non-empty") < horizon {
            let next = (2.0 * edges.last().expect("non-empty")).min(horizon);
            edges.push(next);
        }
        let mut blocks = Vec::new();
        for w in edges.windows(2) {
            let q = quad::integrate(&g, w[0], w[1], Tolerance { abs: 1e-14, rel: 1e-9, max_panels: 64 })?;
            blocks.push(q.value);
        }
        // Full dyadic blocks start at [1, 2].
        let full: Vec<f64> = edges
            .windows(2)
            .zip(&blocks)
            .skip(1)
            .filter(|(w, _)| w[1] == 2.0 * w[0])
            .map(|(_, &b)| b)
            .collect();
        let tail = TailProtocol::TIME.classify(&full);
        Ok(TimeIntegral { value: blocks.iter().sum(), tail, blocks, horizon })
    }

    /// `int_0^H ||T(t) f||_p dt`.
    pub fn orbit_norm_integral(&self, f: &GridFunction) -> Result<TimeIntegral> {
        self.time_integral(|t| self.space.norm(&self.apply_t(t, f)?))
    }

    /// `int_0^H ||S_t chi_I||_p dt`.
    pub fn coorbit_norm_integral(&self, spec: &IndicatorSpec) -> Result<TimeIntegral> {
        self.time_integral(|t| self.space.norm(&self.apply_s_indicator(t, spec)?))
    }

    /// `int_0^H |<g, S_t chi_I>| dt`.
    pub fn coorbit_pairing_integral(&self, g: &GridFunction, spec: &IndicatorSpec) -> Result<TimeIntegral> {
        self.time_integral(|t| Ok(self.space.pairing(g, &self.apply_s_indicator(t, spec)?)?.norm()))
    }

    /// `int_0^H |<g, T(t) f>| dt`.
    pub fn orbit_pairing_integral(&self, g: &GridFunction, f: &GridFunction) -> Result<TimeIntegral> {
        self.time_integral(|t| Ok(self.space.pairing(g, &self.apply_t(t, f)?)?.norm()))
    }

    /// Length of `{t in [0, horizon] : y in phi(t, I)}` or of
    /// `{t in [0, horizon] : phi(t, y) in I}`, from entry and exit times of
    /// monotone trajectories.
    pub fn occupancy_time(&self, spec: &IndicatorSpec, y: f64, kind: OccupancyKind) -> Result<f64> {
        let flow = &*self.flow;
        let h = self.opts.horizon;
        let hit = |from: f64, to: f64| -> Result<f64> { Ok(flow.hitting_time(from, to, h)?.unwrap_or(h)) };
        let (a, b) = (spec.a, spec.b);
        let span = |enter: f64, leave: f64| (leave.min(h) - enter.min(h)).max(0.0);
        match kind {
            OccupancyKind::Image => {
                if spec.sign > 0 {
                    // phi(t, a) <= y until a reaches y; phi(t, b) >= y once b reaches y.
                    if y < a {
                        return Ok(0.0);
                    }
                    let leave = hit(a, y)?;
                    let enter = if y <= b { 0.0 } else { hit(b, y)? };
                    Ok(span(enter, leave))
                } else {
                    if y > b {
                        return Ok(0.0);
                    }
                    let leave = hit(b, y)?;
                    let enter = if y >= a { 0.0 } else { hit(a, y)? };
                    Ok(span(enter, leave))
                }
            }
            OccupancyKind::Preimage => {
                let fy = flow.problem().eval_f(y)?;
                if fy == 0.0 {
                    return Ok(if y >= a && y <= b { h } else { 0.0 });
                }
                if fy > 0.0 {
                    if y > b {
                        return Ok(0.0);
                    }
                    let enter = if y >= a { 0.0 } else { flow.hitting_time(y, a, h)?.unwrap_or(f64::INFINITY) };
                    let leave = hit(y, b)?;
                    Ok(span(enter, leave))
                } else {
                    if y < a {
                        return Ok(0.0);
                    }
                    let enter = if y <= b { 0.0 } else { flow.hitting_time(y, b, h)?.unwrap_or(f64::INFINITY) };
                    let leave = hit(y, a)?;
                    Ok(span(enter, leave))
                }
            }
        }
    }

    /// Measured occupancy of both kinds over `y_grid` against
    /// `max{int_I dr / |F|, s}`.
    pub fn occupancy_bound(&self, spec: &IndicatorSpec, y_grid: &[f64]) -> Result<OccupancyBound> {
        let transit = self.flow.transit_time(spec.a, spec.b)?;
        let c_formula = transit.quadrature.max(transit.flow_time);
        let measured = self.space.exec.try_map(y_grid, |&y| {
            let i = self.occupancy_time(spec, y, OccupancyKind::Image)?;
            let p = self.occupancy_time(spec, y, OccupancyKind::Preimage)?;
            Ok(if i >= p { (i, OccupancyKind::Image) } else { (p, OccupancyKind::Preimage) })
        })?;
        let (mut measured_sup, mut argmax, mut kind_of_sup) = (0.0, f64::NAN, OccupancyKind::Image);
        for (&y, &(v, k)) in y_grid.iter().zip(&measured) {
            if v > measured_sup || argmax.is_nan() {
                measured_sup = v;
                argmax = y;
                kind_of_sup = k;
            }
        }
        Ok(OccupancyBound {
            interval: (spec.a, spec.b),
            transit,
            c_formula,
            measured_sup,
            argmax,
            kind_of_sup,
            probes: y_grid.len(),
        })
    }
}

/// Interleave regular node values with jump pairs, sorted by position.
fn merge(xs: Vec<f64>, vals: Vec<Complex64>, jumps: Vec<(f64, Complex64, Complex64)>) -> Result<GridFunction> {
    let mut nodes = Vec::with_capacity(xs.len() + 2 * jumps.len());
    let mut values = Vec::with_capacity(nodes.capacity());
    let mut j = 0;
    let push_jump = |x: f64, l: Complex64, r: Complex64, nodes: &mut Vec<f64>, values: &mut Vec<Complex64>| {
        if nodes.last() == Some(&x) {
            // Coincident breakpoints: keep the outermost limits.
            let n = values.len();
            if n >= 2 && nodes[n - 2] == x {
                values[n - 1] = r;
            } else {
                nodes.push(x);
                values.push(r);
            }
        } else {
            nodes.extend([x, x]);
            values.extend([l, r]);
        }
    };
    for (x, v) in xs.into_iter().zip(vals) {
        while j < jumps.len() && jumps[j].0 <= x {
            let (jx, l, r) = jumps[j];
            push_jump(jx, l, r, &mut nodes, &mut values);
            j += 1;
        }
        if nodes.last() != Some(&x) {
            nodes.push(x);
            values.push(v);
        }
    }
    for &(jx, l, r) in &jumps[j..] {
        push_jump(jx, l, r, &mut nodes, &mut values);
    }
    GridFunction::new(nodes, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpspace::GridOptions;
    use crate::problem::ProblemSpec;
    use crate::semiflow::{ComponentDecomposition, FlowOptions};

    struct Case {
        sg: WeightedComposition,
        decomp: ComponentDecomposition,
    }

    fn case(spec: ProblemSpec, fo: FlowOptions) -> Case {
        let problem = Arc::new(spec.build().unwrap());
        let flow = Arc::new(Semiflow::new(problem.clone(), fo));
        let decomp = flow.decompose(2048).unwrap();
        let space = LpSpace::for_problem(problem, &decomp.zeros, &GridOptions::default()).unwrap();
        Case { sg: WeightedComposition::new(flow, space), decomp }
    }

    impl Case {
        fn spec(&self, a: f64, b: f64) -> IndicatorSpec {
            IndicatorSpec::new(&self.sg.flow, &self.decomp, a, b).unwrap()
        }
    }

    fn vfl(gamma: f64, p: f64) -> Case {
        case(ProblemSpec::new(0.0, 1.0, "-x").h_re(&gamma.to_string()).p(p), FlowOptions::default())
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn apply_t_examples() {
        let ln2 = 2f64.ln();
        let tr = case(ProblemSpec::new(0.0, f64::INFINITY, "1").p(1.0), FlowOptions::default());
        let f = tr.sg.indicator(&tr.spec(1.0, 3.0));
        let g = tr.sg.apply_t(1.0, &f).unwrap();
        let want = GridFunction::interval(&tr.sg.space.grid, 0.0, 2.0, Complex64::new(1.0, 0.0)).unwrap();
        assert!(tr.sg.space.norm(&g.sub(&want)).unwrap() < 1e-12);

        let v = vfl(0.0, 1.0);
        let f = v.sg.indicator(&v.spec(0.25, 0.5));
        let g = v.sg.apply_t(ln2, &f).unwrap();
        assert!(close(v.sg.space.norm(&g).unwrap(), 0.5, 1e-12));
        assert_eq!(g.eval(0.75).re, 1.0);
        assert_eq!(g.eval(0.45).re, 0.0);

        let v = vfl(0.7, 2.0);
        let one = GridFunction::constant(&v.sg.space.grid, Complex64::new(1.0, 0.0));
        let n = v.sg.space.norm(&v.sg.apply_t(1.3, &one).unwrap()).unwrap();
        assert!(close(n.powi(2), (2.0 * 0.7 * 1.3f64).exp(), 1e-12));
    }

    #[test]
    fn apply_s_examples() {
        let ln2 = 2f64.ln();
        let tr = case(ProblemSpec::new(0.0, f64::INFINITY, "1").p(1.0), FlowOptions::default());
        let s = tr.sg.apply_s_indicator(2.5, &tr.spec(1.0, 3.0)).unwrap();
        let want = GridFunction::interval(&tr.sg.space.grid, 3.5, 5.5, Complex64::new(1.0, 0.0)).unwrap();
        assert!(tr.sg.space.norm(&s.sub(&want)).unwrap() < 1e-12);

        let v = vfl(0.8, 1.0);
        let s = v.sg.apply_s_indicator(0.4, &v.spec(0.2, 0.6)).unwrap();
        let e = (-0.4f64).exp();
        assert!(close(s.eval(0.4 * e).re, (-0.8 * 0.4f64).exp(), 1e-13));
        assert_eq!(s.eval(0.1 * e).re, 0.0);
        assert!(close(v.sg.space.norm(&s).unwrap(), 0.4 * e * (-0.32f64).exp(), 1e-12));

        let v = vfl(0.0, 1.0);
        let spec = v.spec(0.25, 0.5);
        let n = v.sg.space.norm(&v.sg.apply_s_indicator(ln2, &spec).unwrap()).unwrap();
        assert!(close(n, 0.125, 1e-12));
        assert!(close(v.sg.backward_density_integral(&spec, ln2, 1.0).unwrap(), 0.125, 1e-12));
    }

    #[test]
    fn apply_s_is_linear() {
        let v = vfl(0.3, 2.0);
        let (i1, i2) = (v.spec(0.1, 0.4), v.spec(0.3, 0.9));
        let (a, b) = (Complex64::new(2.0, 0.5), Complex64::new(-1.0, 0.0));
        let joint = v.sg.apply_s(0.7, &[(i1, a), (i2, b)]).unwrap();
        let sep = v.sg.apply_s(0.7, &[(i1, a)]).unwrap().combine(a / a, &v.sg.apply_s(0.7, &[(i2, b)]).unwrap(), b / b);
        for &x in joint.nodes() {
            assert!((joint.eval(x) - sep.eval(x)).norm() < 1e-14);
        }
    }

    #[test]
    fn fhc_identities_closed_and_numeric() {
        for fo in [FlowOptions::default(), FlowOptions::numeric()] {
            let tol = if fo.use_closed_form { 1e-6 } else { 1e-4 };
            let c = case(ProblemSpec::new(0.0, 1.0, "x*(1-x)").p(2.0), fo);
            let r = c.sg.verify_fhc_identities(&c.spec(0.2, 0.4), &[0.0, 0.5, 1.0], &[0.7, 2.0]).unwrap();
            assert!(r.right_inverse_max <= tol && r.cascade_max <= tol, "{r:?}");
        }
        let v = vfl(1.0, 1.0);
        let r = v.sg.verify_fhc_identities(&v.spec(0.25, 0.5), &[0.3], &[0.5, 1.3]).unwrap();
        assert!(r.right_inverse_max <= 1e-12 && r.cascade_max <= 1e-12, "{r:?}");
    }

    #[test]
    fn corrupted_inverse_is_detected() {
        let mut v = vfl(1.0, 1.0);
        v.sg.opts.corrupt_inverse = true;
        let r = v.sg.verify_fhc_identities(&v.spec(0.25, 0.5), &[0.3], &[]).unwrap();
        assert!(r.right_inverse_max > 0.1);
    }

    #[test]
    fn norm_identities() {
        let c = case(ProblemSpec::new(0.0, 1.0, "x*(1-x)").h_re("sin(x)").rho("1+x").p(1.5), FlowOptions::default());
        let spec = c.spec(0.3, 0.6);
        for t in [0.2, 1.0] {
            let s = c.sg.apply_s_indicator(t, &spec).unwrap();
            let lhs = c.sg.space.norm_pow(&s, 1.5).unwrap();
            let rhs = c.sg.backward_density_integral(&spec, t, 1.5).unwrap();
            assert!(close(lhs, rhs, 1e-6), "{lhs} vs {rhs}");
            let tc = c.sg.apply_t(t, &c.sg.indicator(&spec)).unwrap();
            let lhs = c.sg.space.norm_p(&tc, 1.0).unwrap();
            let rhs = c.sg.forward_density_integral(&spec, t, 1.0).unwrap();
            assert!(close(lhs, rhs, 1e-6), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn time_integrals() {
        let v = vfl(0.0, 1.0);
        let spec = v.spec(0.25, 0.5);
        let co = v.sg.coorbit_norm_integral(&spec).unwrap();
        assert!(close(co.value, 0.25, 1e-6), "{co:?}");
        assert_eq!(co.tail, TailDiagnosis::Convergent);
        let orbit = v.sg.orbit_norm_integral(&v.sg.indicator(&spec)).unwrap();
        assert!(close(orbit.value, 2f64.ln() - 0.25, 1e-6), "{orbit:?}");

        let v2 = vfl(0.0, 2.0);
        let g = GridFunction::constant(&v2.sg.space.grid, Complex64::new(1.0, 0.0));
        let pr = v2.sg.coorbit_pairing_integral(&g, &v2.spec(0.25, 0.5)).unwrap();
        assert!(close(pr.value, 0.25, 1e-6));

        let tr = case(ProblemSpec::new(0.0, f64::INFINITY, "1").p(1.0), FlowOptions::default());
        let spec = tr.spec(1.0, 3.0);
        let g = GridFunction::interval(&tr.sg.space.grid, 0.0, 10.0, Complex64::new(1.0, 0.0)).unwrap();
        let pr = tr.sg.coorbit_pairing_integral(&g, &spec).unwrap();
        assert!(close(pr.value, 16.0, 1e-6), "{pr:?}");
        assert_eq!(tr.sg.coorbit_norm_integral(&spec).unwrap().tail, TailDiagnosis::Divergent);
    }

    #[test]
    fn occupancy() {
        let ln2 = 2f64.ln();
        let tr = case(ProblemSpec::new(0.0, f64::INFINITY, "1"), FlowOptions::default());
        let spec = tr.spec(1.0, 3.0);
        assert!(close(tr.sg.occupancy_time(&spec, 10.0, OccupancyKind::Image).unwrap(), 2.0, 1e-12));
        let v = vfl(0.0, 1.0);
        let spec = v.spec(0.25, 0.5);
        assert!(close(v.sg.occupancy_time(&spec, 0.1, OccupancyKind::Image).unwrap(), ln2, 1e-9));
        assert!(close(v.sg.occupancy_time(&spec, 0.8, OccupancyKind::Preimage).unwrap(), ln2, 1e-9));
        assert_eq!(v.sg.occupancy_time(&spec, 0.1, OccupancyKind::Preimage).unwrap(), 0.0);
        let ys: Vec<f64> = (0..101).map(|k| 0.005 + 0.99 * k as f64 / 100.0).collect();
        let b = v.sg.occupancy_bound(&spec, &ys).unwrap();
        assert!(b.holds(1e-6), "{b:?}");
        assert!(close(b.c_formula, ln2, 1e-9));
    }
}
