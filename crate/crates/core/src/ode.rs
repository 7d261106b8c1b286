//! Dormand-Prince 5(4) integrator with continuous (dense) output for small
//! autonomous systems.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-9, atol: 1e-12, max_step: f64::INFINITY, max_steps: 200_000 }
    }
}

/// One accepted step with its interpolant.
#[derive(Debug, Clone, Copy)]
pub struct Step<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    cont: [[f64; N]; 5],
}

impl<const N: usize> Step<N> {
    /// Fourth-order interpolant at `t` in `[t0, t1]`.
    pub fn eval(&self, t: f64) -> [f64; N] {
        let h = self.t1 - self.t0;
        let theta = if h == 0.0 { 1.0 } else { (t - self.t0) / h };
        let theta1 = 1.0 - theta;
        let mut out = [0.0; N];
        for (i, o) in out.iter_mut().enumerate() {
            let c = &self.cont;
            *o = c[0][i] + theta * (c[1][i] + theta1 * (c[2][i] + theta * (c[3][i] + theta1 * c[4][i])));
        }
        out
    }
}

pub enum Control {
    Continue,
    Stop,
}

pub enum Outcome<const N: usize> {
    /// Reached `t_end`.
    Completed([f64; N]),
    /// The step monitor asked to stop after this step.
    Stopped(Step<N>),
    /// The right-hand side could not be evaluated no matter how small the
    /// step; typically the solution is pressing against a domain boundary.
    Stalled { t: f64, y: [f64; N] },
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn lin<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        *o += h * s;
    }
    out
}

/// Integrate `y' = rhs(y)` from `t = 0` to `t_end >= 0`. The monitor sees
/// every accepted step and may stop the integration early.
pub fn integrate<const N: usize, R, M>(mut rhs: R, y0: [f64; N], t_end: f64, opts: &OdeOptions, mut monitor: M) -> Result<Outcome<N>>
where
    R: FnMut(&[f64; N]) -> Result<[f64; N]>,
    M: FnMut(&Step<N>) -> Control,
{
    if t_end == 0.0 {
        return Ok(Outcome::Completed(y0));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::Integrator(format!("invalid end time {t_end}")));
    }
    let scale = |y: &[f64; N], z: &[f64; N], i: usize| opts.atol + opts.rtol * y[i].abs().max(z[i].abs());
    let mut k1 = rhs(&y0).map_err(|e| Error::Integrator(format!("right-hand side fails at start: {e}")))?;
    let mut t = 0.0;
    let mut y = y0;

    // Initial step guess.
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..N {
        let sk = scale(&y, &y, i);
        d0 += (y[i] / sk).powi(2);
        d1 += (k1[i] / sk).powi(2);
    }
    let (d0, d1) = ((d0 / N as f64).sqrt(), (d1 / N as f64).sqrt());
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(opts.max_step).min(t_end).max(1e-12 * t_end);

    let min_step = 1e-14 * t_end.max(1.0);
    let mut steps = 0usize;
    while t < t_end {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::Integrator(format!("step budget exhausted at t = {t}")));
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        let stages = (|| -> Result<_> {
            let k2 = rhs(&lin(&y, h, &[(A21, &k1)]))?;
            let k3 = rhs(&lin(&y, h, &[(A31, &k1), (A32, &k2)]))?;
            let k4 = rhs(&lin(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
            let k5 = rhs(&lin(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
            let k6 = rhs(&lin(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
            let y1 = lin(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let k7 = rhs(&y1)?;
            Ok((k2, k3, k4, k5, k6, k7, y1))
        })();
        let (_k2, k3, k4, k5, k6, k7, y1) = match stages {
            Ok(s) => s,
            Err(_) => {
                h *= 0.25;
                if h < min_step {
                    return Ok(Outcome::Stalled { t, y });
                }
                continue;
            }
        };
        let mut err = 0.0;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            err += (e / scale(&y, &y1, i)).powi(2);
        }
        let err = (err / N as f64).sqrt();
        if !err.is_finite() {
            h *= 0.25;
            if h < min_step {
                return Ok(Outcome::Stalled { t, y });
            }
            continue;
        }
        if err <= 1.0 {
            let mut cont = [[0.0; N]; 5];
            for i in 0..N {
                let ydiff = y1[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                cont[0][i] = y[i];
                cont[1][i] = ydiff;
                cont[2][i] = bspl;
                cont[3][i] = ydiff - h * k7[i] - bspl;
                cont[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let t1 = if last { t_end } else { t + h };
            let step = Step { t0: t, t1, y0: y, y1, cont };
            t = t1;
            y = y1;
            k1 = k7;
            if let Control::Stop = monitor(&step) {
                return Ok(Outcome::Stopped(step));
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * fac).min(opts.max_step);
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            if h < min_step {
                return Ok(Outcome::Stalled { t, y });
            }
        }
    }
    Ok(Outcome::Completed(y))
}

/// Locate the time in `step` where `g` changes sign, by bisection on the
/// interpolant.
pub fn locate_event<const N: usize, G>(step: &Step<N>, g: G) -> f64
where
    G: Fn(&[f64; N]) -> f64,
{
    let (mut lo, mut hi) = (step.t0, step.t1);
    let g_lo = g(&step.y0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (g(&step.eval(mid)) > 0.0) == (g_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let out = integrate(|y: &[f64; 1]| Ok([-y[0]]), [1.0], 3.0, &OdeOptions::default(), |_| Control::Continue).unwrap();
        match out {
            Outcome::Completed(y) => assert!((y[0] - (-3f64).exp()).abs() < 1e-10),
            _ => panic!("did not complete"),
        }
    }

    #[test]
    fn dense_output_is_accurate_inside_steps() {
        let opts = OdeOptions { rtol: 1e-10, ..Default::default() };
        let mut worst: f64 = 0.0;
        integrate(|y: &[f64; 2]| Ok([y[1], -y[0]]), [0.0, 1.0], 6.0, &opts, |s| {
            for j in 1..4 {
                let t = s.t0 + (s.t1 - s.t0) * j as f64 / 4.0;
                worst = worst.max((s.eval(t)[0] - t.sin()).abs());
            }
            Control::Continue
        })
        .unwrap();
        assert!(worst < 1e-8, "dense output error {worst}");
    }

    #[test]
    fn event_location() {
        // x' = 1 from 0 reaches 0.7 at t = 0.7.
        let mut hit = None;
        integrate(|_: &[f64; 1]| Ok([1.0]), [0.0], 2.0, &OdeOptions::default(), |s| {
            if s.y1[0] >= 0.7 {
                hit = Some(locate_event(s, |y| y[0] - 0.7));
                Control::Stop
            } else {
                Control::Continue
            }
        })
        .unwrap();
        assert!((hit.unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn domain_failures_stall_instead_of_erroring() {
        // sqrt-type field that cannot be evaluated below zero.
        let out = integrate(
            |y: &[f64; 1]| if y[0] < 0.0 { Err(Error::Domain { what: "test", x: y[0] }) } else { Ok([-1.0]) },
            [0.5],
            2.0,
            &OdeOptions::default(),
            |_| Control::Continue,
        )
        .unwrap();
        assert!(matches!(out, Outcome::Stalled { .. }));
    }
}
