//! The solution semiflow of `x' = F(x)` on the open interval, its inverse on
//! `phi(t, Omega)`, the derivative cocycle, the zero set of `F` and transit
//! times.

use std::sync::Arc;

use dashmap::DashMap;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{self, Control, OdeOptions, Outcome};
use crate::problem::{ClosedForm, ProblemDef};
use crate::quad::{self, Tolerance};
use crate::Check;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// Use the closed-form registry when `F` matches it.
    pub use_closed_form: bool,
    /// Floor on `|F|` over intervals handed to interval operations.
    pub f_min: f64,
    /// `|F|` threshold for plateau detection.
    pub flat_eps: f64,
    pub cache: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            rtol: 1e-9,
            atol: 1e-12,
            max_step: f64::INFINITY,
            use_closed_form: true,
            f_min: 1e-8,
            flat_eps: 1e-12,
            cache: true,
        }
    }
}

impl FlowOptions {
    /// Same options with the closed-form registry switched off.
    pub fn numeric() -> Self {
        FlowOptions { use_closed_form: false, rtol: 1e-10, ..Default::default() }
    }
}

/// Quantities carried along one trajectory segment of duration `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub start: f64,
    pub end: f64,
    /// `int_0^t F'(phi(s, start)) ds`, the log of the spatial derivative.
    pub log_jacobian: f64,
    /// `int_0^t h(phi(s, start)) ds`, the log of the weight cocycle.
    pub log_weight: Complex64,
}

impl FlowState {
    pub fn jacobian(&self) -> f64 {
        self.log_jacobian.exp()
    }

    pub fn weight(&self) -> Complex64 {
        self.log_weight.exp()
    }
}

/// An open component of `Omega \ {F = 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub lo: f64,
    pub hi: f64,
    /// Sign of `F` on the component.
    pub sign: i8,
}

impl Component {
    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    /// Two distinct interior points used as criterion basepoints.
    pub fn basepoints(&self) -> (f64, f64) {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => {
                let w = self.hi - self.lo;
                (self.lo + 0.5 * w, self.lo + 0.3 * w)
            }
            (true, false) => (self.lo + 1.0, self.lo + 2.0),
            (false, true) => (self.hi - 1.0, self.hi - 2.0),
            (false, false) => (0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDecomposition {
    /// Isolated zeros of `F` inside the domain.
    pub zeros: Vec<f64>,
    /// Stretches where `|F|` stays below the flatness threshold.
    pub plateaus: Vec<(f64, f64)>,
    pub components: Vec<Component>,
    /// False when a plateau was detected, i.e. `{F = 0}` may have positive
    /// measure.
    pub zero_set_null: bool,
}

impl ComponentDecomposition {
    pub fn component_of(&self, x: f64) -> Option<(usize, &Component)> {
        self.components.iter().enumerate().find(|(_, c)| c.contains(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitTime {
    /// Time for the flow to carry one endpoint onto the other.
    pub flow_time: f64,
    /// `int_I dr / |F(r)|`.
    pub quadrature: f64,
}

impl TransitTime {
    pub fn seconds(&self) -> f64 {
        self.flow_time
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub status: Check,
    pub notes: Vec<String>,
}

type CacheKey = (u64, u64, bool);

/// Evaluator for `phi(t, x)` and the path integrals along it.
#[derive(Debug)]
pub struct Semiflow {
    problem: Arc<ProblemDef>,
    opts: FlowOptions,
    closed: Option<ClosedForm>,
    h_constant: Option<Complex64>,
    cache: Option<DashMap<CacheKey, Option<FlowState>>>,
}

const CACHE_LIMIT: usize = 1 << 21;
const ESCAPE: f64 = 1e100;

impl Semiflow {
    pub fn new(problem: Arc<ProblemDef>, opts: FlowOptions) -> Semiflow {
        let closed = if opts.use_closed_form { problem.closed_form() } else { None };
        let h_constant = match (problem.h_re.constant_value(), problem.h_im.constant_value()) {
            (Some(re), Some(im)) => Some(Complex64::new(re, im)),
            _ => None,
        };
        let cache = (opts.cache && closed.is_none()).then(DashMap::new);
        Semiflow { problem, opts, closed, h_constant, cache }
    }

    pub fn problem(&self) -> &ProblemDef {
        &self.problem
    }

    pub fn problem_arc(&self) -> &Arc<ProblemDef> {
        &self.problem
    }

    pub fn options(&self) -> &FlowOptions {
        &self.opts
    }

    /// Whether evaluation goes through the closed-form registry.
    pub fn closed_form(&self) -> Option<ClosedForm> {
        self.closed
    }

    fn ode_opts(&self) -> OdeOptions {
        OdeOptions { rtol: self.opts.rtol, atol: self.opts.atol, max_step: self.opts.max_step, ..Default::default() }
    }

    /// `phi(t, x)`.
    pub fn flow(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.state(t, x)?.end)
    }

    /// `phi(-t, y)` when `y` lies in `phi(t, Omega)`, otherwise `None`.
    pub fn inverse_flow(&self, t: f64, y: f64) -> Result<Option<f64>> {
        Ok(self.back_state(t, y)?.map(|s| s.start))
    }

    /// `d/dx phi(t, x) = exp(int_0^t F'(phi(s, x)) ds)`.
    pub fn flow_derivative(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.state(t, x)?.jacobian())
    }

    /// Forward trajectory quantities from `x` over `[0, t]`.
    pub fn state(&self, t: f64, x: f64) -> Result<FlowState> {
        check_time(t)?;
        if !self.problem.contains(x) {
            return Err(Error::InvalidArgument(format!("x = {x} is outside the domain")));
        }
        if t == 0.0 {
            return Ok(FlowState { t, start: x, end: x, log_jacobian: 0.0, log_weight: Complex64::new(0.0, 0.0) });
        }
        match self.closed {
            Some(cf) => self.closed_state(cf, t, x),
            None => {
                let key = (t.to_bits(), x.to_bits(), true);
                if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key).map(|v| *v)) {
                    return hit.ok_or(Error::ForwardInvariance { t, x });
                }
                let out = self.numeric_state(t, x, true);
                if let (Some(cache), Ok(s)) = (&self.cache, &out) {
                    store(cache, key, *s);
                }
                out?.ok_or(Error::ForwardInvariance { t, x })
            }
        }
    }

    /// Trajectory quantities for the segment ending at `y` after time `t`,
    /// i.e. starting at `phi(-t, y)`. `None` when `y` is not in
    /// `phi(t, Omega)`.
    pub fn back_state(&self, t: f64, y: f64) -> Result<Option<FlowState>> {
        check_time(t)?;
        if !self.problem.contains(y) {
            return Ok(None);
        }
        if t == 0.0 {
            return Ok(Some(FlowState { t, start: y, end: y, log_jacobian: 0.0, log_weight: Complex64::new(0.0, 0.0) }));
        }
        match self.closed {
            Some(cf) => {
                let Some(start) = closed_inverse(cf, t, y) else { return Ok(None) };
                if !self.problem.contains(start) {
                    return Ok(None);
                }
                let mut s = self.closed_state(cf, t, start)?;
                s.end = y;
                Ok(Some(s))
            }
            None => {
                let key = (t.to_bits(), y.to_bits(), false);
                if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key).map(|v| *v)) {
                    return Ok(hit);
                }
                let out = self.numeric_state(t, y, false)?;
                if let Some(cache) = &self.cache {
                    store(cache, key, out);
                }
                Ok(out)
            }
        }
    }

    /// A closed-form value that rounded onto an equilibrium endpoint is
    /// moved to the adjacent interior float.
    fn snap_to_interior(&self, e: f64) -> f64 {
        let p = &*self.problem;
        let at_rest = |b: f64| p.eval_f(b).is_ok_and(|f| f == 0.0);
        if e == p.omega_hi && at_rest(e) {
            e.next_down()
        } else if e == p.omega_lo && at_rest(e) {
            e.next_up()
        } else {
            e
        }
    }

    fn closed_state(&self, cf: ClosedForm, t: f64, x: f64) -> Result<FlowState> {
        let end = closed_flow(cf, t, x).map(|e| self.snap_to_interior(e)).filter(|e| self.problem.contains(*e));
        let end = end.ok_or(Error::ForwardInvariance { t, x })?;
        let log_jacobian = closed_log_jacobian(cf, t, x);
        let log_weight = match self.h_constant {
            Some(h) => h * t,
            None => {
                let q = quad::integrate(
                    |s| self.problem.eval_h(closed_flow(cf, s, x).unwrap_or(x)),
                    0.0,
                    t,
                    Tolerance { abs: 1e-14, rel: 1e-13, max_panels: 200 },
                )?;
                q.value
            }
        };
        Ok(FlowState { t, start: x, end, log_jacobian, log_weight })
    }

    /// Integrate the augmented system along the trajectory. Forward returns
    /// `None` when the solution leaves the domain; backward returns `None`
    /// when the starting point is not in the range of `phi(t, .)`.
    fn numeric_state(&self, t: f64, x: f64, forward: bool) -> Result<Option<FlowState>> {
        let p = &*self.problem;
        let dir = if forward { 1.0 } else { -1.0 };
        let rhs = |y: &[f64; 4]| -> Result<[f64; 4]> {
            let z = y[0];
            Ok([dir * p.f.eval(z)?, p.f_prime.eval(z)?, p.h_re.eval(z)?, p.h_im.eval(z)?])
        };
        let mut left = false;
        let outcome = ode::integrate(rhs, [x, 0.0, 0.0, 0.0], t, &self.ode_opts(), |step| {
            let z = step.y1[0];
            if !p.contains(z) || !z.is_finite() || z.abs() > ESCAPE {
                left = true;
                Control::Stop
            } else {
                Control::Continue
            }
        })?;
        let y = match outcome {
            Outcome::Completed(y) => y,
            Outcome::Stopped(_) => return Ok(None),
            Outcome::Stalled { y, .. } => {
                // Stalling against the boundary means the solution is
                // leaving the domain.
                let (a, b) = p.sample_window();
                let slack = 1e-6 * (b - a);
                if y[0] - p.omega_lo < slack || p.omega_hi - y[0] < slack {
                    return Ok(None);
                }
                return Err(Error::Integrator(format!("step size collapsed at x = {}", y[0])));
            }
        };
        debug_assert!(!left);
        let (start, end) = if forward { (x, y[0]) } else { (y[0], x) };
        Ok(Some(FlowState { t, start, end, log_jacobian: y[1], log_weight: Complex64::new(y[2], y[3]) }))
    }

    /// `int_0^t h'(phi(s, x)) d/dx phi(s, x) ds`; the spatial derivative of
    /// the weight cocycle is `h_t(x)` times this.
    pub fn weight_sensitivity(&self, t: f64, x: f64) -> Result<Complex64> {
        check_time(t)?;
        let p = &*self.problem;
        if t == 0.0 || (p.h_re_prime.constant_value() == Some(0.0) && p.h_im_prime.constant_value() == Some(0.0)) {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let dh = |z: f64| -> Result<Complex64> { Ok(Complex64::new(p.h_re_prime.eval(z)?, p.h_im_prime.eval(z)?)) };
        match self.closed {
            Some(cf) => {
                let q = quad::integrate(
                    |s| {
                        let z = closed_flow(cf, s, x).ok_or(Error::ForwardInvariance { t: s, x })?;
                        Ok(dh(z)? * closed_log_jacobian(cf, s, x).exp())
                    },
                    0.0,
                    t,
                    Tolerance { abs: 1e-14, rel: 1e-13, max_panels: 200 },
                )?;
                Ok(q.value)
            }
            None => {
                let rhs = |y: &[f64; 4]| -> Result<[f64; 4]> {
                    let z = y[0];
                    let g = dh(z)? * y[1].exp();
                    Ok([p.f.eval(z)?, p.f_prime.eval(z)?, g.re, g.im])
                };
                match ode::integrate(rhs, [x, 0.0, 0.0, 0.0], t, &self.ode_opts(), |s| {
                    if p.contains(s.y1[0]) {
                        Control::Continue
                    } else {
                        Control::Stop
                    }
                })? {
                    Outcome::Completed(y) => Ok(Complex64::new(y[2], y[3])),
                    _ => Err(Error::ForwardInvariance { t, x }),
                }
            }
        }
    }

    /// First time `t` in `[0, t_max]` with `phi(t, x0) = target`.
    pub fn hitting_time(&self, x0: f64, target: f64, t_max: f64) -> Result<Option<f64>> {
        if x0 == target {
            return Ok(Some(0.0));
        }
        let dir = (target - x0).signum();
        let f0 = self.problem.eval_f(x0)?;
        if f0 * dir <= 0.0 {
            return Ok(None);
        }
        let passed = |t: f64| -> Result<bool> { Ok((self.flow(t, x0)? - target) * dir >= 0.0) };
        let mut lo = 0.0;
        let mut hi = 1.0f64.min(t_max);
        while !passed(hi)? {
            if hi >= t_max {
                return Ok(None);
            }
            lo = hi;
            hi = (2.0 * hi).min(t_max);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if passed(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(Some(0.5 * (lo + hi)))
    }

    /// Smallest sampled `|F|` on `[a, b]`, refined around the sampled minimum.
    pub fn min_abs_f(&self, a: f64, b: f64) -> Result<f64> {
        let n = 256;
        let mut best = (f64::INFINITY, a);
        for i in 0..=n {
            let x = a + (b - a) * i as f64 / n as f64;
            let v = self.problem.eval_f(x)?.abs();
            if v < best.0 {
                best = (v, x);
            }
        }
        let h = (b - a) / n as f64;
        let (lo, hi) = ((best.1 - h).max(a), (best.1 + h).min(b));
        let refined = golden_min(|x| self.problem.eval_f(x).map(f64::abs).unwrap_or(f64::INFINITY), lo, hi);
        Ok(best.0.min(refined.1))
    }

    /// Time for the flow to carry one endpoint of `[a, b]` onto the other.
    pub fn transit_time(&self, a: f64, b: f64) -> Result<TransitTime> {
        if !(a < b) || !self.problem.contains(a) || !self.problem.contains(b) {
            return Err(Error::InvalidArgument(format!("[{a}, {b}] is not a compact interval in the domain")));
        }
        let min_f = self.min_abs_f(a, b)?;
        if min_f < self.opts.f_min {
            return Err(Error::FloorViolation { a, b, min_abs_f: min_f, floor: self.opts.f_min });
        }
        let sign = self.problem.eval_f(a)?.signum();
        let (from, to) = if sign > 0.0 { (a, b) } else { (b, a) };
        let quadrature = quad::integrate(
            |r| Ok(1.0 / self.problem.eval_f(r)?.abs()),
            a,
            b,
            Tolerance { abs: 1e-15, rel: 1e-13, max_panels: 400 },
        )?
        .value;
        let flow_time = match self.closed {
            Some(_) => self
                .hitting_time(from, to, 1e6)?
                .ok_or_else(|| Error::Integrator("transit target never reached".into()))?,
            None => self.event_time(from, to, 1e3 * quadrature.max(1.0))?,
        };
        if (flow_time - quadrature).abs() > 1e-6 * quadrature {
            return Err(Error::Integrator(format!(
                "transit time mismatch: flow {flow_time} vs quadrature {quadrature}"
            )));
        }
        Ok(TransitTime { flow_time, quadrature })
    }

    /// Crossing time of `target` by event detection on the dense output.
    fn event_time(&self, from: f64, target: f64, t_max: f64) -> Result<f64> {
        let p = &*self.problem;
        let dir = (target - from).signum();
        let mut hit = None;
        let opts = OdeOptions { rtol: self.opts.rtol.min(1e-11), atol: self.opts.atol.min(1e-14), ..self.ode_opts() };
        ode::integrate(|y: &[f64; 1]| Ok([p.f.eval(y[0])?]), [from], t_max, &opts, |s| {
            if (s.y1[0] - target) * dir >= 0.0 {
                hit = Some(ode::locate_event(s, |y| y[0] - target));
                Control::Stop
            } else {
                Control::Continue
            }
        })?;
        hit.ok_or_else(|| Error::Integrator("transit target never reached".into()))
    }

    /// Zeros, plateaus and components of `Omega \ {F = 0}` from a sampled
    /// grid of `grid_size` points.
    pub fn decompose(&self, grid_size: usize) -> Result<ComponentDecomposition> {
        let grid_size = grid_size.max(64);
        let p = &*self.problem;
        let eps = self.opts.flat_eps;
        let xs = p.sample_points(grid_size);
        let fs: Vec<f64> = xs.iter().map(|&x| p.eval_f(x)).collect::<Result<_>>()?;
        let mut zeros = Vec::new();
        let mut plateaus = Vec::new();

        // Flatness is judged on the uniform part of the sample only; the
        // endpoint refinement points legitimately carry tiny values of F.
        let (wa, wb) = p.sample_window();
        let margin = 0.49 * (wb - wa) / grid_size as f64;
        let uniform = |x: f64| {
            (!p.omega_lo.is_finite() || x - p.omega_lo >= margin) && (!p.omega_hi.is_finite() || p.omega_hi - x >= margin)
        };
        let flat = |i: usize| fs[i] == 0.0 || (fs[i].abs() < eps && uniform(xs[i]));
        let mut i = 0;
        while i < xs.len() {
            if flat(i) {
                let start = i;
                while i + 1 < xs.len() && flat(i + 1) {
                    i += 1;
                }
                if i - start >= 2 {
                    plateaus.push((xs[start], xs[i]));
                } else if i == start {
                    zeros.push(xs[start]);
                } else {
                    zeros.push(0.5 * (xs[start] + xs[i]));
                }
            }
            i += 1;
        }
        for i in 0..xs.len().saturating_sub(1) {
            let (f0, f1) = (fs[i], fs[i + 1]);
            if !flat(i) && !flat(i + 1) && f0.signum() != f1.signum() {
                zeros.push(bisect_root(|x| p.eval_f(x), xs[i], xs[i + 1], f0)?);
            }
        }
        // Touching zeros: local minima of |F| without a sign change.
        for i in 1..xs.len().saturating_sub(1) {
            let (l, m, r) = (fs[i - 1].abs(), fs[i].abs(), fs[i + 1].abs());
            if !flat(i) && uniform(xs[i]) && m >= eps && m <= l && m <= r && fs[i - 1].signum() == fs[i + 1].signum() {
                let (x, v) = golden_min(|x| p.eval_f(x).map(f64::abs).unwrap_or(f64::INFINITY), xs[i - 1], xs[i + 1]);
                if v < eps {
                    zeros.push(x);
                }
            }
        }
        zeros.sort_by(f64::total_cmp);
        zeros.dedup_by(|a, b| (*a - *b).abs() <= 1e-10 * (1.0 + b.abs()));
        zeros.retain(|z| !plateaus.iter().any(|&(a, b)| *z >= a && *z <= b));

        let mut cuts: Vec<(f64, f64)> = zeros.iter().map(|&z| (z, z)).collect();
        cuts.extend(plateaus.iter().copied());
        cuts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut components = Vec::new();
        let mut left = p.omega_lo;
        for &(a, b) in cuts.iter().chain(std::iter::once(&(p.omega_hi, p.omega_hi))) {
            if a > left {
                let probe = Component { lo: left, hi: a, sign: 0 }.basepoints().0;
                let probe = if probe > left && probe < a { probe } else { 0.5 * (left + a) };
                let v = p.eval_f(probe)?;
                if v.abs() >= eps {
                    components.push(Component { lo: left, hi: a, sign: v.signum() as i8 });
                }
            }
            left = b;
        }
        Ok(ComponentDecomposition { zeros, zero_set_null: plateaus.is_empty(), plateaus, components })
    }

    /// Whether trajectories stay in the domain for all forward time.
    pub fn check_forward_invariance(&self) -> InvarianceReport {
        let p = &*self.problem;
        let mut notes = Vec::new();
        let mut status = Check::Pass;
        let (wa, wb) = p.sample_window();
        let tol = 1e-12;
        let endpoint_f = |e: f64, inward: f64| -> Option<f64> {
            p.eval_f(e).ok().or_else(|| p.eval_f(e + inward * 1e-12 * (wb - wa)).ok())
        };
        if p.omega_lo.is_finite() {
            match endpoint_f(p.omega_lo, 1.0) {
                Some(v) if v >= -tol => notes.push(format!("F(lo) = {v} >= 0")),
                Some(v) => {
                    notes.push(format!("F(lo) = {v} < 0: trajectories exit through the left endpoint"));
                    status = Check::Fail;
                }
                None => {
                    notes.push("F cannot be evaluated near the left endpoint".into());
                    status = status.and(Check::Inconclusive);
                }
            }
        }
        if p.omega_hi.is_finite() {
            match endpoint_f(p.omega_hi, -1.0) {
                Some(v) if v <= tol => notes.push(format!("F(hi) = {v} <= 0")),
                Some(v) => {
                    notes.push(format!("F(hi) = {v} > 0: trajectories exit through the right endpoint"));
                    status = Check::Fail;
                }
                None => {
                    notes.push("F cannot be evaluated near the right endpoint".into());
                    status = status.and(Check::Inconclusive);
                }
            }
        }
        if !p.is_bounded() {
            let seeds: Vec<f64> = [wa, wb, 0.5 * (wa + wb)]
                .iter()
                .map(|&s| s.clamp(wa + 1e-6 * (wb - wa), wb - 1e-6 * (wb - wa)))
                .collect();
            for s in seeds {
                match self.state(50.0, s) {
                    Ok(_) => {}
                    Err(Error::ForwardInvariance { .. }) => {
                        notes.push(format!("trajectory from {s} escapes before t = 50"));
                        status = Check::Fail;
                    }
                    Err(e) => {
                        notes.push(format!("probe from {s} failed: {e}"));
                        status = status.and(Check::Inconclusive);
                    }
                }
            }
            if status == Check::Pass {
                notes.push("probe trajectories from the unbounded side stay in the domain up to t = 50".into());
            }
        }
        InvarianceReport { status, notes }
    }
}

fn store(cache: &DashMap<CacheKey, Option<FlowState>>, key: CacheKey, value: Option<FlowState>) {
    if cache.len() > CACHE_LIMIT {
        cache.clear();
    }
    cache.insert(key, value);
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("time must be finite and non-negative, got {t}")))
    }
}

fn closed_flow(cf: ClosedForm, t: f64, x: f64) -> Option<f64> {
    match cf {
        ClosedForm::Constant(c) => Some(x + c * t),
        ClosedForm::Contraction => Some(x * (-t).exp()),
        ClosedForm::Logistic => {
            let et = t.exp();
            let den = 1.0 + x * (et - 1.0);
            (den > 0.0 && den.is_finite()).then(|| x * et / den)
        }
    }
}

fn closed_inverse(cf: ClosedForm, t: f64, y: f64) -> Option<f64> {
    match cf {
        ClosedForm::Constant(c) => Some(y - c * t),
        ClosedForm::Contraction => Some(y * t.exp()).filter(|v| v.is_finite()),
        ClosedForm::Logistic => {
            let emt = (-t).exp();
            let den = 1.0 + y * (emt - 1.0);
            (den > 0.0).then(|| y * emt / den)
        }
    }
}

fn closed_log_jacobian(cf: ClosedForm, t: f64, x: f64) -> f64 {
    match cf {
        ClosedForm::Constant(_) => 0.0,
        ClosedForm::Contraction => -t,
        // d/dx [x e^t / (1 + x (e^t - 1))] = e^t / (1 + x (e^t - 1))^2
        ClosedForm::Logistic => t - 2.0 * (x * t.exp_m1()).ln_1p(),
    }
}

fn bisect_root<F>(f: F, mut lo: f64, mut hi: f64, f_lo: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let s_lo = f_lo.signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-12 * hi.abs().max(1.0) || mid <= lo || mid >= hi {
            break;
        }
        if f(mid)?.signum() == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Golden-section minimization; returns `(argmin, min)`.
pub(crate) fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    [(x, fx), (c, fc), (d, fd)].into_iter().min_by(|u, v| u.1.total_cmp(&v.1)).expect("three candidates")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ProblemSpec;

    fn flow(spec: ProblemSpec, opts: FlowOptions) -> Semiflow {
        Semiflow::new(Arc::new(spec.build().unwrap()), opts)
    }

    fn vfl() -> ProblemSpec {
        ProblemSpec::new(0.0, 1.0, "-x")
    }

    fn translation() -> ProblemSpec {
        ProblemSpec::new(0.0, f64::INFINITY, "1")
    }

    fn logistic() -> ProblemSpec {
        ProblemSpec::new(0.0, 1.0, "x*(1-x)")
    }

    #[test]
    fn closed_form_examples() {
        let ln2 = 2f64.ln();
        assert_eq!(flow(translation(), FlowOptions::default()).flow(2.0, 1.0).unwrap(), 3.0);
        assert!((flow(vfl(), FlowOptions::default()).flow(ln2, 0.5).unwrap() - 0.25).abs() < 1e-16);
        assert!((flow(logistic(), FlowOptions::default()).flow(ln2, 1.0 / 3.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn numeric_examples_match_closed_forms() {
        let ln2 = 2f64.ln();
        let n = FlowOptions::numeric();
        assert!((flow(translation(), n).flow(2.0, 1.0).unwrap() - 3.0).abs() < 1e-9);
        assert!((flow(vfl(), n).flow(ln2, 0.5).unwrap() - 0.25).abs() < 1e-10);
        assert!((flow(logistic(), n).flow(ln2, 1.0 / 3.0).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn inverse_flow_and_range() {
        let ln2 = 2f64.ln();
        for opts in [FlowOptions::default(), FlowOptions::numeric()] {
            let tr = flow(translation(), opts);
            assert!((tr.inverse_flow(2.0, 3.0).unwrap().unwrap() - 1.0).abs() < 1e-9);
            assert_eq!(tr.inverse_flow(2.0, 1.0).unwrap(), None);
            let v = flow(vfl(), opts);
            assert!((v.inverse_flow(ln2, 0.25).unwrap().unwrap() - 0.5).abs() < 1e-10);
            assert_eq!(v.inverse_flow(ln2, 0.7).unwrap(), None);
        }
    }

    #[test]
    fn flow_derivative_examples() {
        let tr = flow(translation(), FlowOptions::default());
        assert_eq!(tr.flow_derivative(5.0, 2.0).unwrap(), 1.0);
        for opts in [FlowOptions::default(), FlowOptions::numeric()] {
            let v = flow(vfl(), opts);
            assert!((v.flow_derivative(1.0, 0.5).unwrap() - (-1f64).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let d = 1e-5;
        for spec in [vfl(), logistic(), ProblemSpec::new(0.0, 1.0, "x*(1-x)*(2+sin(x))")] {
            for opts in [FlowOptions::default(), FlowOptions::numeric()] {
                let f = flow(spec.clone(), opts);
                for &(t, x) in &[(0.3, 0.2), (1.0, 0.5), (2.0, 0.8)] {
                    let fd = (f.flow(t, x + d).unwrap() - f.flow(t, x - d).unwrap()) / (2.0 * d);
                    let ad = f.flow_derivative(t, x).unwrap();
                    assert!((fd - ad).abs() <= 1e-4 * fd.abs(), "{} t={t} x={x}: {fd} vs {ad}", spec.f);
                }
            }
        }
    }

    #[test]
    fn forward_exit_is_an_error() {
        let f = flow(ProblemSpec::new(0.0, 1.0, "-1"), FlowOptions::default());
        assert!(matches!(f.flow(1.0, 0.5), Err(Error::ForwardInvariance { .. })));
        let f = flow(ProblemSpec::new(0.0, 1.0, "-1 + 0*x"), FlowOptions::numeric());
        assert!(matches!(f.flow(1.0, 0.5), Err(Error::ForwardInvariance { .. })));
    }

    #[test]
    fn decompositions() {
        let d = flow(vfl(), FlowOptions::default()).decompose(4096).unwrap();
        assert!(d.zeros.is_empty());
        assert_eq!(d.components, vec![Component { lo: 0.0, hi: 1.0, sign: -1 }]);
        let d = flow(logistic(), FlowOptions::default()).decompose(4096).unwrap();
        assert_eq!(d.components, vec![Component { lo: 0.0, hi: 1.0, sign: 1 }]);
        let d = flow(ProblemSpec::new(0.0, 1.0, "x-0.5"), FlowOptions::default()).decompose(1000).unwrap();
        assert_eq!(d.zeros.len(), 1);
        assert!((d.zeros[0] - 0.5).abs() < 1e-12);
        assert_eq!(d.components.len(), 2);
        assert_eq!((d.components[0].hi, d.components[0].sign), (d.zeros[0], -1));
        assert_eq!((d.components[1].lo, d.components[1].sign), (d.zeros[0], 1));
        // touching zero
        let d = flow(ProblemSpec::new(0.0, 1.0, "(x-0.3)^2"), FlowOptions::default()).decompose(1000).unwrap();
        assert_eq!(d.zeros.len(), 1);
        assert!((d.zeros[0] - 0.3).abs() < 1e-6);
        assert!(d.components.iter().all(|c| c.sign == 1));
        assert!(d.zero_set_null);
    }

    #[test]
    fn plateau_is_flagged() {
        // F vanishes identically on [0.4, 0.6].
        let f = "(x-0.4)*(x-0.6) + sqrt(((x-0.4)*(x-0.6))^2)";
        let d = flow(ProblemSpec::new(0.0, 1.0, f), FlowOptions::default()).decompose(1024).unwrap();
        assert!(!d.zero_set_null);
        assert_eq!(d.plateaus.len(), 1);
        let (a, b) = d.plateaus[0];
        assert!(a < 0.41 && b > 0.59);
        assert_eq!(d.components.len(), 2);
    }

    #[test]
    fn transit_times() {
        let ln2 = 2f64.ln();
        let s = flow(translation(), FlowOptions::default()).transit_time(1.0, 3.0).unwrap();
        assert!((s.seconds() - 2.0).abs() < 1e-12);
        for opts in [FlowOptions::default(), FlowOptions::numeric()] {
            let s = flow(vfl(), opts).transit_time(0.25, 0.5).unwrap();
            assert!((s.seconds() - ln2).abs() < 1e-8, "{s:?}");
            let s = flow(logistic(), opts).transit_time(1.0 / 3.0, 0.5).unwrap();
            assert!((s.seconds() - ln2).abs() < 1e-8, "{s:?}");
            assert!((s.quadrature - ln2).abs() < 1e-12);
        }
        let e = flow(ProblemSpec::new(0.0, 1.0, "x-0.5"), FlowOptions::default()).transit_time(0.4, 0.6);
        assert!(matches!(e, Err(Error::FloorViolation { .. })));
    }

    #[test]
    fn forward_invariance_checks() {
        assert_eq!(flow(vfl(), FlowOptions::default()).check_forward_invariance().status, Check::Pass);
        assert_eq!(flow(translation(), FlowOptions::default()).check_forward_invariance().status, Check::Pass);
        assert_eq!(flow(ProblemSpec::new(0.0, 1.0, "-1"), FlowOptions::default()).check_forward_invariance().status, Check::Fail);
        let blowup = flow(ProblemSpec::new(0.0, f64::INFINITY, "x^2"), FlowOptions::default());
        assert_eq!(blowup.check_forward_invariance().status, Check::Fail);
    }

    #[test]
    fn cache_is_transparent() {
        let spec = ProblemSpec::new(0.0, 1.0, "x*(1-x)*(1+x)");
        let cached = flow(spec.clone(), FlowOptions { cache: true, ..FlowOptions::numeric() });
        let plain = flow(spec, FlowOptions { cache: false, ..FlowOptions::numeric() });
        for &(t, x) in &[(0.5, 0.3), (0.5, 0.3), (1.0, 0.7)] {
            assert_eq!(cached.state(t, x).unwrap(), plain.state(t, x).unwrap());
            assert_eq!(cached.back_state(t, x).unwrap(), plain.back_state(t, x).unwrap());
        }
    }
}
