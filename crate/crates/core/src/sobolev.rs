//! The semigroup `S(t) f = h_t (f o phi(t, .))` on `W^{1,p}_*[a, b]`, the
//! functions with `f(a) = 0`, and its classification through the conjugate
//! `L^p(a, b)` semigroup with weight `F' + h(a)`.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chaos::{self, ChaosOptions, ChaosReport};
use crate::error::{Error, Result};
use crate::problem::{ProblemDef, ProblemSpec};
use crate::quad::gl5;
use crate::semiflow::{FlowOptions, Semiflow};
use crate::Check;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Cubic Hermite data `(x_i, f(x_i), f'(x_i))` on `[a, b]` with `f(a) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SobolevGridFunction {
    nodes: Vec<f64>,
    values: Vec<Complex64>,
    derivs: Vec<Complex64>,
}

impl SobolevGridFunction {
    /// `values[0]` must vanish to `1e-12`; it is then stored as an exact zero.
    pub fn new(nodes: Vec<f64>, mut values: Vec<Complex64>, derivs: Vec<Complex64>) -> Result<Self> {
        if nodes.len() < 2 || nodes.len() != values.len() || nodes.len() != derivs.len() {
            return Err(Error::InvalidArgument("need at least two nodes with one value and one derivative each".into()));
        }
        if nodes.windows(2).any(|w| !(w[0] < w[1])) || nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("nodes must be finite and strictly increasing".into()));
        }
        if values.iter().chain(&derivs).any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidArgument("values and derivatives must be finite".into()));
        }
        if values[0].norm() > 1e-12 {
            return Err(Error::InvalidArgument(format!("f(a) = {} but functions in W^1,p_* vanish at a", values[0])));
        }
        values[0] = ZERO;
        Ok(SobolevGridFunction { nodes, values, derivs })
    }

    pub fn from_fn<F, D>(nodes: Vec<f64>, f: F, df: D) -> Result<Self>
    where
        F: Fn(f64) -> Complex64,
        D: Fn(f64) -> Complex64,
    {
        let values = nodes.iter().map(|&x| f(x)).collect();
        let derivs = nodes.iter().map(|&x| df(x)).collect();
        Self::new(nodes, values, derivs)
    }

    pub fn from_real_fn<F, D>(nodes: Vec<f64>, f: F, df: D) -> Result<Self>
    where
        F: Fn(f64) -> f64,
        D: Fn(f64) -> f64,
    {
        Self::from_fn(nodes, |x| Complex64::new(f(x), 0.0), |x| Complex64::new(df(x), 0.0))
    }

    /// `n` equally spaced nodes on `[a, b]`.
    pub fn uniform_nodes(a: f64, b: f64, n: usize) -> Vec<f64> {
        let mut xs: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
        xs[n - 1] = b;
        xs
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn derivatives(&self) -> &[Complex64] {
        &self.derivs
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().chain(&self.derivs).all(|v| v.im == 0.0)
    }

    fn cell(&self, x: f64) -> Option<usize> {
        let n = self.nodes.len();
        if !(x >= self.nodes[0] && x <= self.nodes[n - 1]) {
            return None;
        }
        Some(self.nodes.partition_point(|&v| v <= x).clamp(1, n - 1) - 1)
    }

    /// Hermite value and derivative at `x` inside the node range.
    pub fn eval_pair(&self, x: f64) -> Option<(Complex64, Complex64)> {
        let i = self.cell(x)?;
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        let h = x1 - x0;
        let s = (x - x0) / h;
        let (f0, f1, d0, d1) = (self.values[i], self.values[i + 1], self.derivs[i] * h, self.derivs[i + 1] * h);
        let (s2, s3) = (s * s, s * s * s);
        let v = f0 * (2.0 * s3 - 3.0 * s2 + 1.0) + d0 * (s3 - 2.0 * s2 + s) + f1 * (-2.0 * s3 + 3.0 * s2) + d1 * (s3 - s2);
        let dv = f0 * (6.0 * s2 - 6.0 * s) + d0 * (3.0 * s2 - 4.0 * s + 1.0) + f1 * (6.0 * s - 6.0 * s2) + d1 * (3.0 * s2 - 2.0 * s);
        Some((v, dv / h))
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        self.eval_pair(x).map_or(ZERO, |p| p.0)
    }

    pub fn eval_derivative(&self, x: f64) -> Complex64 {
        self.eval_pair(x).map_or(ZERO, |p| p.1)
    }

    /// `(||f||_p^p + ||f'||_p^p)^(1/p)` with five Gauss points per cell.
    pub fn norm(&self, p: f64) -> f64 {
        let (gx, gw) = gl5();
        let mut s = 0.0;
        for w in self.nodes.windows(2) {
            let (c, h) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            for (xi, wi) in gx.iter().zip(gw) {
                let (v, d) = self.eval_pair(c + h * xi).unwrap_or((ZERO, ZERO));
                s += wi * h * (v.norm().powf(p) + d.norm().powf(p));
            }
        }
        s.powf(1.0 / p)
    }

    /// `max_i |f(x_i) - int_a^{x_i} f'|` with the derivative integrated as
    /// a piecewise-linear function.
    pub fn reconstruction_error(&self) -> f64 {
        let mut acc = ZERO;
        let mut worst: f64 = 0.0;
        for i in 1..self.nodes.len() {
            acc += (self.derivs[i - 1] + self.derivs[i]) * (0.5 * (self.nodes[i] - self.nodes[i - 1]));
            worst = worst.max((self.values[i] - acc).norm());
        }
        worst
    }

    /// Norm of the difference of two functions on the same nodes.
    pub fn distance(&self, other: &SobolevGridFunction, p: f64) -> Result<f64> {
        if self.nodes != other.nodes {
            return Err(Error::InvalidArgument("functions live on different nodes".into()));
        }
        let diff = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
        let d = SobolevGridFunction {
            nodes: self.nodes.clone(),
            values: diff(&self.values, &other.values),
            derivs: diff(&self.derivs, &other.derivs),
        };
        Ok(d.norm(p))
    }

    /// `node,value,derivative`, with `value_im,derivative_im` appended for
    /// complex data.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let complex = !self.is_real();
        let io = |e: csv::Error| Error::Data(e.to_string());
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["node", "value", "derivative"];
        if complex {
            header.extend(["value_im", "derivative_im"]);
        }
        out.write_record(&header).map_err(io)?;
        for i in 0..self.nodes.len() {
            let mut row = vec![self.nodes[i].to_string(), self.values[i].re.to_string(), self.derivs[i].re.to_string()];
            if complex {
                row.extend([self.values[i].im.to_string(), self.derivs[i].im.to_string()]);
            }
            out.write_record(&row).map_err(io)?;
        }
        out.flush().map_err(|e| Error::Data(e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(r);
        let headers = rdr.headers().map_err(|e| Error::Data(e.to_string()))?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        let complex = match cols.as_slice() {
            ["node", "value", "derivative"] => false,
            ["node", "value", "derivative", "value_im", "derivative_im"] => true,
            _ => return Err(Error::Data(format!("expected header node,value,derivative, got {}", cols.join(",")))),
        };
        let (mut nodes, mut values, mut derivs) = (Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
            let num = |j: usize| -> Result<f64> {
                let field = rec.get(j).ok_or_else(|| Error::Data(format!("row {}: missing column {}", i + 2, j + 1)))?;
                field.parse::<f64>().map_err(|_| Error::Data(format!("row {}: `{field}` is not a number", i + 2)))
            };
            let (vi, di) = if complex { (num(3)?, num(4)?) } else { (0.0, 0.0) };
            nodes.push(num(0)?);
            values.push(Complex64::new(num(1)?, vi));
            derivs.push(Complex64::new(num(2)?, di));
        }
        Self::new(nodes, values, derivs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolevHypotheses {
    pub f_at_a: f64,
    pub h_at_a: (f64, f64),
    /// `h = h(a)` at every zero of `F`.
    pub zeros_ok: bool,
    pub zeros: Vec<f64>,
    /// Sampled sup of `|h(y) - h(a)| / |F(y)|`.
    pub quotient_sup: f64,
    pub quotient_bounded: bool,
    pub forward_invariance: Check,
}

/// A problem read on the closed interval `[a, b]` with `F(a) = 0`.
#[derive(Debug)]
pub struct SobolevProblem {
    pub def: Arc<ProblemDef>,
    pub flow: Semiflow,
    pub h_a: f64,
    pub hypotheses: SobolevHypotheses,
}

const QUOTIENT_CAP: f64 = 1e6;

impl SobolevProblem {
    pub fn new(def: Arc<ProblemDef>, opts: FlowOptions) -> Result<Self> {
        let (a, b) = (def.omega_lo, def.omega_hi);
        if !def.is_bounded() {
            return Err(Error::Hypothesis("the Sobolev setting needs a bounded interval".into()));
        }
        let f_at_a = def.eval_f(a)?;
        if f_at_a.abs() > 1e-12 {
            return Err(Error::Hypothesis(format!("F(a) = {f_at_a}, but a must be a zero of F")));
        }
        let h_a = def.eval_h(a)?;
        if h_a.im.abs() > 1e-12 {
            return Err(Error::Hypothesis(format!("h(a) = {h_a} is not real")));
        }
        let flow = Semiflow::new(def.clone(), opts);
        let decomp = flow.decompose(4096)?;
        let mut zeros = vec![a];
        zeros.extend(&decomp.zeros);
        if def.eval_f(b)?.abs() <= 1e-12 {
            zeros.push(b);
        }
        let mut zeros_ok = decomp.zero_set_null;
        for &z in &zeros {
            zeros_ok &= (def.eval_h(z)? - h_a.re).norm() <= 1e-9;
        }
        let forward_invariance = flow.check_forward_invariance().status;

        // Sampled sup of the quotient, with geometric refinement toward each zero.
        let q = |y: f64| -> Result<f64> {
            let f = def.eval_f(y)?;
            let dh = (def.eval_h(y)? - h_a.re).norm();
            Ok(if dh == 0.0 { 0.0 } else { dh / f.abs() })
        };
        let mut sup: f64 = 0.0;
        for y in def.sample_points(4096) {
            if def.eval_f(y)? != 0.0 {
                sup = sup.max(q(y)?);
            }
        }
        let mut growing = false;
        for &z in &zeros {
            for dir in [-1.0, 1.0] {
                let near: Vec<f64> = (2..=12)
                    .map(|k| z + dir * (b - a) * 10f64.powi(-k))
                    .filter(|&y| y > a && y < b)
                    .map(q)
                    .collect::<Result<_>>()?;
                if near.len() >= 4 {
                    let tail = near[near.len() - 2..].iter().copied().fold(0.0, f64::max);
                    let body = near[..near.len() - 2].iter().copied().fold(0.0, f64::max);
                    growing |= tail > 2.0 * body + 1e-9;
                }
                sup = near.iter().copied().fold(sup, f64::max);
            }
        }
        let quotient_bounded = sup.is_finite() && sup <= QUOTIENT_CAP && !growing;
        if !quotient_bounded {
            return Err(Error::Hypothesis(format!("(h(y) - h(a)) / F(y) does not look bounded (sampled sup {sup:e})")));
        }
        if !zeros_ok {
            return Err(Error::Hypothesis("h differs from h(a) at a zero of F, or F vanishes on an interval".into()));
        }
        if forward_invariance == Check::Fail {
            return Err(Error::Hypothesis("(a, b) is not forward invariant".into()));
        }
        let hypotheses =
            SobolevHypotheses { f_at_a, h_at_a: (h_a.re, h_a.im), zeros_ok, zeros, quotient_sup: sup, quotient_bounded, forward_invariance };
        Ok(SobolevProblem { def, flow, h_a: h_a.re, hypotheses })
    }

    /// The conjugate problem on `L^p(a, b)`: same `F`, weight `F' + h(a)`,
    /// density one.
    pub fn derived_problem(&self) -> Result<ProblemDef> {
        let spec = &self.def.spec;
        ProblemSpec::new(spec.omega_lo, spec.omega_hi, &spec.f)
            .h_re(&format!("{} + {:?}", self.def.f_prime, self.h_a))
            .h_im("0")
            .rho("1")
            .p(self.def.p)
            .build()
    }

    /// `S(t) f` on the nodes of `f`.
    pub fn apply_s(&self, t: f64, f: &SobolevGridFunction) -> Result<SobolevGridFunction> {
        if t == 0.0 {
            return Ok(f.clone());
        }
        let (a, b) = (self.def.omega_lo, self.def.omega_hi);
        let nudge = 1e-12 * (b - a);
        let mut values = Vec::with_capacity(f.nodes.len());
        let mut derivs = Vec::with_capacity(f.nodes.len());
        for &x in &f.nodes {
            if x == a {
                // a is a fixed point: phi(t, a) = a and d/dx phi(t, a) = exp(t F'(a)).
                values.push(ZERO);
                derivs.push((t * self.h_a).exp() * f.derivs[0] * (t * self.def.f_prime.eval(a)?).exp());
                continue;
            }
            let x = x.clamp(a + nudge, b - nudge);
            let s = self.flow.state(t, x)?;
            let w = s.weight();
            let k = self.flow.weight_sensitivity(t, x)?;
            let (v, dv) = f
                .eval_pair(s.end)
                .ok_or_else(|| Error::InvalidArgument(format!("phi({t}, {x}) = {} is outside the nodes", s.end)))?;
            values.push(w * v);
            derivs.push(w * k * v + w * dv * s.jacobian());
        }
        SobolevGridFunction::new(f.nodes.clone(), values, derivs)
    }
}

/// Algebraic threshold for `F = -x` on `[0, 1]`: chaotic iff `h(0) > 1 - 1/p`.
pub fn vfl_sobolev_threshold(h0: f64, p: f64) -> bool {
    h0 > 1.0 - 1.0 / p
}

/// Chaos and FHC verdict for `S_{F,h}` on `W^{1,p}_*[a, b]`, read off the
/// derived `L^p` problem.
pub fn sobolev_chaos_classify(sp: &SobolevProblem, opts: &ChaosOptions) -> Result<ChaosReport> {
    let derived = Arc::new(sp.derived_problem()?);
    let mut report = chaos::chaos_test(derived.clone(), opts)?;
    report.tag = Some("sobolev".into());
    if chaos::is_vfl(&derived) {
        let direct = vfl_sobolev_threshold(sp.h_a, sp.def.p);
        let via_weight = derived.p * (sp.h_a - 1.0) > -1.0;
        report.notes.push(format!(
            "derived weight h(0) - 1 = {}; threshold h(0) > 1 - 1/p: {direct}; p (h(0) - 1) > -1: {via_weight}",
            sp.h_a - 1.0
        ));
        if direct != via_weight || direct != report.verdict.is_chaotic() {
            report.notes.push("algebraic threshold and derived-problem verdict disagree".into());
        }
    }
    Ok(report)
}

/// A linear bijection between two function spaces, given as black boxes.
pub trait Intertwiner {
    type Source;
    type Target;

    fn domain(&self) -> &str;
    fn codomain(&self) -> &str;
    fn forward(&self, x: &Self::Source) -> Result<Self::Target>;
    fn inverse(&self, y: &Self::Target) -> Result<Self::Source>;
}

type Family<'a, X> = dyn Fn(f64, &X) -> Result<X> + 'a;
type Distance<'a, X> = dyn Fn(&X, &X) -> Result<f64> + 'a;

/// `S~_t (Phi x) = Phi (S_t x)`.
pub struct Transported<'a, P: Intertwiner> {
    pub phi: &'a P,
    s: &'a Family<'a, P::Source>,
    pub check: TransportCheck,
}

impl<P: Intertwiner> Transported<'_, P> {
    pub fn apply(&self, t: f64, y: &P::Target) -> Result<P::Target> {
        self.phi.forward(&(self.s)(t, &self.phi.inverse(y)?)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TransportCheck {
    /// Worst `Phi^-1 Phi x` against `x` and `Phi Phi^-1 y` against `y`.
    pub roundtrip: f64,
    /// Worst `T2(t) Phi x` against `Phi T1(t) x`.
    pub intertwining: f64,
    /// Worst `T2(t) S~_t y` against `y`.
    pub right_inverse: f64,
    /// Worst `T2(t) S~_r y` against `S~_{r-t} y`.
    pub cascade: f64,
}

impl TransportCheck {
    pub fn worst(&self) -> f64 {
        self.roundtrip.max(self.intertwining).max(self.right_inverse).max(self.cascade)
    }
}

pub struct ConjugatePair<'a, X, Y> {
    pub t1: &'a Family<'a, X>,
    pub t2: &'a Family<'a, Y>,
    /// Relative distances in the source and target spaces.
    pub dist1: &'a Distance<'a, X>,
    pub dist2: &'a Distance<'a, Y>,
}

/// Transport the right inverses `S_t` of `T1` along `Phi` and verify the
/// criterion identities for `T2` on `Phi(tests)`. Pairs `(t, r)` use
/// `r = t + offset`.
pub fn conjugacy_transport<'a, P: Intertwiner>(
    phi: &'a P,
    pair: &ConjugatePair<'_, P::Source, P::Target>,
    s: &'a Family<'a, P::Source>,
    tests: &[P::Source],
    times: &[f64],
    offsets: &[f64],
    tol: f64,
) -> Result<Transported<'a, P>> {
    let mut out = Transported { phi, s, check: TransportCheck::default() };
    let mut check = TransportCheck::default();
    for x in tests {
        let y = phi.forward(x)?;
        check.roundtrip = check.roundtrip.max((pair.dist1)(&phi.inverse(&y)?, x)?);
        check.roundtrip = check.roundtrip.max((pair.dist2)(&phi.forward(&phi.inverse(&y)?)?, &y)?);
        for &t in times {
            let lhs = (pair.t2)(t, &y)?;
            check.intertwining = check.intertwining.max((pair.dist2)(&lhs, &phi.forward(&(pair.t1)(t, x)?)?)?);
            check.right_inverse = check.right_inverse.max((pair.dist2)(&(pair.t2)(t, &out.apply(t, &y)?)?, &y)?);
            for &dr in offsets {
                let lhs = (pair.t2)(t, &out.apply(t + dr, &y)?)?;
                check.cascade = check.cascade.max((pair.dist2)(&lhs, &out.apply(dr, &y)?)?);
            }
        }
    }
    if !(check.worst() <= tol) {
        return Err(Error::Intertwining(check.worst()));
    }
    out.check = check;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::Verdict;

    fn vfl(gamma: f64, p: f64) -> SobolevProblem {
        let def = ProblemSpec::new(0.0, 1.0, "-x").h_re(&gamma.to_string()).p(p).build().unwrap();
        SobolevProblem::new(Arc::new(def), FlowOptions::default()).unwrap()
    }

    fn identity_fn() -> SobolevGridFunction {
        SobolevGridFunction::from_real_fn(SobolevGridFunction::uniform_nodes(0.0, 1.0, 101), |x| x, |_| 1.0).unwrap()
    }

    #[test]
    fn pinning_and_norm() {
        assert!(SobolevGridFunction::from_real_fn(vec![0.0, 1.0], |x| x + 1.0, |_| 1.0).is_err());
        let f = identity_fn();
        // int x^2 + int 1 = 4/3.
        assert!((f.norm(2.0) - (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(f.reconstruction_error() < 1e-14);
        let g = SobolevGridFunction::read_csv(f.to_csv_string().as_bytes()).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn apply_closed_form() {
        let sp = vfl(0.7, 2.0);
        let f = identity_fn();
        let t = 0.9;
        let g = sp.apply_s(t, &f).unwrap();
        for (i, &x) in g.nodes().iter().enumerate() {
            let want = (0.7 * t).exp() * x * (-t).exp();
            assert!((g.values()[i].re - want).abs() < 1e-9, "x={x}");
            assert!((g.derivatives()[i].re - ((0.7 - 1.0) * t).exp()).abs() < 1e-9);
        }
        assert_eq!(g.values()[0], ZERO);
    }

    #[test]
    fn semigroup_law_and_fd() {
        let def = ProblemSpec::new(0.0, 1.0, "x*(1-x)").h_re("x*(1-x)").h_im("x^2*(1-x)").p(2.0).build().unwrap();
        let sp = SobolevProblem::new(Arc::new(def), FlowOptions::default()).unwrap();
        let nodes = SobolevGridFunction::uniform_nodes(0.0, 1.0, 401);
        let f = SobolevGridFunction::from_real_fn(nodes, |x| (3.0 * x).sin(), |x| 3.0 * (3.0 * x).cos()).unwrap();
        let whole = sp.apply_s(0.7, &f).unwrap();
        let split = sp.apply_s(0.3, &sp.apply_s(0.4, &f).unwrap()).unwrap();
        assert!(whole.distance(&split, 2.0).unwrap() <= 1e-5 * f.norm(2.0));
        let x = 0.37;
        let dx = 1e-5;
        let fd = (whole.eval(x + dx) - whole.eval(x - dx)) / (2.0 * dx);
        assert!((fd - whole.eval_derivative(x)).norm() < 1e-5);
    }

    #[test]
    fn hypothesis_failures() {
        let bad_a = ProblemSpec::new(0.0, 1.0, "1 - x").build().unwrap();
        assert!(SobolevProblem::new(Arc::new(bad_a), FlowOptions::default()).is_err());
        let quotient = ProblemSpec::new(0.0, 1.0, "-x").h_re("sqrt(x)").build().unwrap();
        assert!(SobolevProblem::new(Arc::new(quotient), FlowOptions::default()).is_err());
        let complex = ProblemSpec::new(0.0, 1.0, "-x").h_im("1").build().unwrap();
        assert!(SobolevProblem::new(Arc::new(complex), FlowOptions::default()).is_err());
    }

    #[test]
    fn classification() {
        let opts = ChaosOptions::default();
        for p in [1.0, 2.0] {
            for g in [-0.5, 0.0, 0.5, 1.5] {
                let r = sobolev_chaos_classify(&vfl(g, p), &opts).unwrap();
                assert_eq!(r.verdict.is_chaotic(), vfl_sobolev_threshold(g, p), "p={p} g={g}");
                assert_eq!(r.tag.as_deref(), Some("sobolev"));
            }
        }
        let r = sobolev_chaos_classify(&vfl(0.0, 2.0), &opts).unwrap();
        assert_eq!(r.verdict, Verdict::NotChaotic);
    }

    struct Scale(f64);

    impl Intertwiner for Scale {
        type Source = f64;
        type Target = f64;
        fn domain(&self) -> &str {
            "R"
        }
        fn codomain(&self) -> &str {
            "R"
        }
        fn forward(&self, x: &f64) -> Result<f64> {
            Ok(self.0 * x)
        }
        fn inverse(&self, y: &f64) -> Result<f64> {
            Ok(y / self.0)
        }
    }

    #[test]
    fn scalar_transport() {
        // T(t) x = e^{-t} x with S_t x = e^t x.
        let t1 = |t: f64, x: &f64| Ok((-t).exp() * x);
        let s = |t: f64, x: &f64| Ok(t.exp() * x);
        let dist = |a: &f64, b: &f64| Ok((a - b).abs() / b.abs().max(1e-300));
        let pair = ConjugatePair { t1: &t1, t2: &t1, dist1: &dist, dist2: &dist };
        for c in [1.0, 2.0] {
            let phi = Scale(c);
            let tr = conjugacy_transport(&phi, &pair, &s, &[1.0, -3.0], &[0.1, 1.0], &[0.2, 1.0], 1e-12).unwrap();
            assert!((tr.apply(0.5, &2.0).unwrap() - 2.0 * 0.5f64.exp()).abs() < 1e-12);
        }
        let wrong = |t: f64, x: &f64| Ok((-2.0 * t).exp() * x);
        let bad = ConjugatePair { t1: &t1, t2: &wrong, dist1: &dist, dist2: &dist };
        assert!(matches!(
            conjugacy_transport(&Scale(2.0), &bad, &s, &[1.0], &[1.0], &[1.0], 1e-6),
            Err(Error::Intertwining(_))
        ));
    }
}
