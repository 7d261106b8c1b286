//! Quadrature: Gauss-Legendre rules, adaptive Gauss-Kronrod, and the block
//! ratio test used to classify improper integrals.

use std::ops::{Add, Mul, Sub};
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Values that can be integrated.
pub trait QuadValue: Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            dp = nf * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Five-point rule used for per-cell integrals on grids.
pub fn gl5() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(5))
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod panel: returns (Kronrod estimate, |K - G| estimate).
pub fn gk15<T, F>(f: &mut F, a: f64, b: f64) -> Result<(T, f64)>
where
    T: QuadValue,
    F: FnMut(f64) -> Result<T>,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let sum = f(c - dx)? + f(c + dx)?;
        kronrod = kronrod + sum * WGK[j];
        if j % 2 == 1 {
            gauss = gauss + sum * WG[j / 2];
        }
    }
    Ok((kronrod * h, ((kronrod - gauss) * h).magnitude()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_panels: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 1e-13, rel: 1e-11, max_panels: 400 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad<T> {
    pub value: T,
    pub error: f64,
    pub converged: bool,
}

/// Globally adaptive Gauss-Kronrod on a finite interval.
pub fn integrate<T, F>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Quad<T>>
where
    T: QuadValue,
    F: FnMut(f64) -> Result<T>,
{
    if a == b {
        return Ok(Quad { value: T::default(), error: 0.0, converged: true });
    }
    let (v, e) = gk15(&mut f, a, b)?;
    let mut panels = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    loop {
        let target = tol.abs.max(tol.rel * total.magnitude());
        if err <= target {
            return Ok(Quad { value: total, error: err, converged: true });
        }
        if panels.len() >= tol.max_panels {
            return Ok(Quad { value: total, error: err, converged: false });
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty panel list");
        let (pa, pb, pv, pe) = panels.swap_remove(idx);
        let mid = 0.5 * (pa + pb);
        if mid <= pa || mid >= pb {
            return Ok(Quad { value: total, error: err, converged: false });
        }
        let (lv, le) = gk15(&mut f, pa, mid)?;
        let (rv, re) = gk15(&mut f, mid, pb)?;
        total = total - pv + lv + rv;
        err = err - pe + le + re;
        panels.push((pa, mid, lv, le));
        panels.push((mid, pb, rv, re));
        if err < 0.0 {
            err = panels.iter().map(|p| p.3).sum();
        }
    }
}

/// Outcome of a tail test on an improper integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailDiagnosis {
    Convergent,
    Divergent,
    Inconclusive,
}

/// Classification rule on successive block contributions of an improper
/// integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailProtocol {
    /// Convergent when each of the last `window` block ratios is at most this.
    pub decay_ratio: f64,
    pub window: usize,
    /// Divergent when each of the last `window` block ratios is at least this.
    pub divergence_ratio: f64,
}

impl TailProtocol {
    /// Dyadic time blocks for orbit and co-orbit integrals.
    pub const TIME: TailProtocol = TailProtocol { decay_ratio: 0.7, window: 3, divergence_ratio: 0.999 };
    /// Geometric space blocks toward an endpoint of a component.
    pub const SPACE: TailProtocol = TailProtocol { decay_ratio: 0.95, window: 3, divergence_ratio: 0.999 };
    /// Integrability of a function near an endpoint.
    pub const INTEGRABILITY: TailProtocol = TailProtocol { decay_ratio: 0.9, window: 4, divergence_ratio: 0.999 };

    pub fn ratios(blocks: &[f64]) -> Vec<f64> {
        blocks
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0].abs(), w[1].abs());
                if b == 0.0 {
                    0.0
                } else if a == 0.0 {
                    f64::INFINITY
                } else {
                    b / a
                }
            })
            .collect()
    }

    pub fn classify(&self, blocks: &[f64]) -> TailDiagnosis {
        if blocks.iter().any(|b| !b.is_finite()) {
            return TailDiagnosis::Divergent;
        }
        let ratios = Self::ratios(blocks);
        if ratios.len() < self.window {
            return TailDiagnosis::Inconclusive;
        }
        let last = &ratios[ratios.len() - self.window..];
        if last.iter().all(|&r| r <= self.decay_ratio) {
            TailDiagnosis::Convergent
        } else if last.iter().all(|&r| r >= self.divergence_ratio) {
            TailDiagnosis::Divergent
        } else {
            TailDiagnosis::Inconclusive
        }
    }

    /// Geometric extrapolation of the remainder after the last block,
    /// assuming the last ratio persists.
    pub fn remainder(&self, blocks: &[f64]) -> f64 {
        let ratios = Self::ratios(blocks);
        match (ratios.last(), blocks.last()) {
            (Some(&r), Some(&b)) if r < 1.0 => b.abs() * r / (1.0 - r),
            _ => 0.0,
        }
    }
}

/// Integrability of `|g|` near `endpoint`, starting from `start` (inside
/// the domain). Blocks halve the distance to a finite endpoint or double the
/// distance toward an infinite one.
pub fn endpoint_integrability<F>(mut g: F, start: f64, endpoint: f64, blocks: usize, protocol: TailProtocol) -> Result<(TailDiagnosis, Vec<f64>)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut sums = Vec::with_capacity(blocks);
    let tol = Tolerance { abs: 1e-300, rel: 1e-10, max_panels: 64 };
    for k in 0..blocks {
        let (u, v) = block_bounds(start, endpoint, k);
        let q = integrate(|y| g(y).map(f64::abs), u.min(v), u.max(v), tol)?;
        sums.push(q.value);
    }
    Ok((protocol.classify(&sums), sums))
}

/// Bounds of the `k`-th block from `start` toward `endpoint`.
pub fn block_bounds(start: f64, endpoint: f64, k: usize) -> (f64, f64) {
    if endpoint.is_finite() {
        let d = start - endpoint;
        let s = 0.5f64.powi(k as i32);
        (endpoint + d * s, endpoint + d * s * 0.5)
    } else {
        let dir = endpoint.signum();
        let scale = start.abs().max(1.0);
        let u = start + dir * scale * (2f64.powi(k as i32) - 1.0);
        let v = start + dir * scale * (2f64.powi(k as i32 + 1) - 1.0);
        (u, v)
    }
}
