//! Problem definitions: the interval, the vector field `F`, the weight `h`,
//! the density `rho` and the exponent `p`.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;

/// Length of the sampled window on an unbounded side of the interval.
pub const SAMPLE_WINDOW: f64 = 25.0;

/// Sample count for the density positivity check.
pub const POSITIVITY_SAMPLES: usize = 1024;

/// Sample count for the boundedness report of `F'` and `Re h`.
pub const BOUND_SAMPLES: usize = 4096;

/// Raw textual problem, as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub omega_lo: f64,
    pub omega_hi: f64,
    #[serde(rename = "F")]
    pub f: String,
    pub h_re: String,
    pub h_im: String,
    pub rho: String,
    pub p: f64,
}

impl ProblemSpec {
    pub fn new(omega_lo: f64, omega_hi: f64, f: &str) -> Self {
        ProblemSpec {
            omega_lo,
            omega_hi,
            f: f.to_string(),
            h_re: "0".into(),
            h_im: "0".into(),
            rho: "1".into(),
            p: 1.0,
        }
    }

    pub fn h_re(mut self, s: &str) -> Self {
        self.h_re = s.to_string();
        self
    }

    pub fn h_im(mut self, s: &str) -> Self {
        self.h_im = s.to_string();
        self
    }

    pub fn rho(mut self, s: &str) -> Self {
        self.rho = s.to_string();
        self
    }

    pub fn p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn build(self) -> Result<ProblemDef> {
        ProblemDef::new(self)
    }

    /// Render as config text accepted by [`ProblemDef::from_config`].
    pub fn to_config(&self) -> String {
        let endpoint = |v: f64| {
            if v == f64::INFINITY {
                "inf".to_string()
            } else if v == f64::NEG_INFINITY {
                "-inf".to_string()
            } else {
                format!("{v:?}")
            }
        };
        let mut out = String::new();
        let _ = writeln!(out, "omega_lo = {}", endpoint(self.omega_lo));
        let _ = writeln!(out, "omega_hi = {}", endpoint(self.omega_hi));
        let _ = writeln!(out, "F = \"{}\"", self.f);
        let _ = writeln!(out, "h_re = \"{}\"", self.h_re);
        let _ = writeln!(out, "h_im = \"{}\"", self.h_im);
        let _ = writeln!(out, "rho = \"{}\"", self.rho);
        let _ = writeln!(out, "p = {:?}", self.p);
        out
    }
}

/// Sampled range of a function over the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledRange {
    pub min: f64,
    pub max: f64,
    pub bounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub cap: f64,
    pub f_prime: SampledRange,
    pub re_h: SampledRange,
}

/// Validated, immutable problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemDef {
    pub spec: ProblemSpec,
    pub omega_lo: f64,
    pub omega_hi: f64,
    pub f: Expr,
    pub f_prime: Expr,
    pub h_re: Expr,
    pub h_im: Expr,
    pub h_re_prime: Expr,
    pub h_im_prime: Expr,
    pub rho: Expr,
    pub p: f64,
    pub bounds: BoundsReport,
}

impl ProblemDef {
    pub fn new(spec: ProblemSpec) -> Result<ProblemDef> {
        Self::with_cap(spec, 1e6)
    }

    /// Build with a custom cap for the boundedness report.
    pub fn with_cap(spec: ProblemSpec, cap: f64) -> Result<ProblemDef> {
        let (lo, hi) = (spec.omega_lo, spec.omega_hi);
        if lo.is_nan() || hi.is_nan() || lo >= hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
            return Err(Error::EmptyInterval { lo, hi });
        }
        if !(spec.p >= 1.0) || !spec.p.is_finite() {
            return Err(Error::InvalidExponent(spec.p));
        }
        let f = Expr::parse(&spec.f)?;
        let h_re = Expr::parse(&spec.h_re)?;
        let h_im = Expr::parse(&spec.h_im)?;
        let rho = Expr::parse(&spec.rho)?;
        let f_prime = f.differentiate();
        let h_re_prime = h_re.differentiate();
        let h_im_prime = h_im.differentiate();
        let mut def = ProblemDef {
            omega_lo: lo,
            omega_hi: hi,
            p: spec.p,
            spec,
            f,
            f_prime,
            h_re,
            h_im,
            h_re_prime,
            h_im_prime,
            rho,
            bounds: BoundsReport {
                cap,
                f_prime: SampledRange { min: 0.0, max: 0.0, bounded: true },
                re_h: SampledRange { min: 0.0, max: 0.0, bounded: true },
            },
        };
        for x in def.sample_points(POSITIVITY_SAMPLES) {
            let value = def.rho.eval(x)?;
            if !(value > 0.0) {
                return Err(Error::NonPositiveDensity { x, value });
            }
        }
        let pts = def.sample_points(BOUND_SAMPLES);
        def.bounds.f_prime = sampled_range(&def.f_prime, &pts, cap)?;
        def.bounds.re_h = sampled_range(&def.h_re, &pts, cap)?;
        Ok(def)
    }

    /// Parse the line-oriented `key = value` config format.
    pub fn from_config(text: &str) -> Result<ProblemDef> {
        ProblemDef::new(parse_config(text)?)
    }

    /// Same problem with a different exponent.
    pub fn with_p(&self, p: f64) -> Result<ProblemDef> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::InvalidExponent(p));
        }
        let mut out = self.clone();
        out.p = p;
        out.spec.p = p;
        Ok(out)
    }

    /// Conjugate exponent; infinite for `p = 1`.
    pub fn q(&self) -> f64 {
        conjugate(self.p)
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.omega_lo && x < self.omega_hi
    }

    pub fn is_bounded(&self) -> bool {
        self.omega_lo.is_finite() && self.omega_hi.is_finite()
    }

    pub fn eval_f(&self, x: f64) -> Result<f64> {
        self.f.eval(x)
    }

    pub fn eval_rho(&self, x: f64) -> Result<f64> {
        self.rho.eval(x)
    }

    /// `ln rho(x)`, evaluated without overflow for exponential densities.
    pub fn ln_rho(&self, x: f64) -> Result<f64> {
        self.rho.eval_ln(x)
    }

    pub fn eval_h(&self, x: f64) -> Result<Complex64> {
        Ok(Complex64::new(self.h_re.eval(x)?, self.h_im.eval(x)?))
    }

    /// The part of the domain that sampling covers: the interval itself when
    /// bounded, otherwise a window of [`SAMPLE_WINDOW`] next to the finite end.
    pub fn sample_window(&self) -> (f64, f64) {
        window(self.omega_lo, self.omega_hi)
    }

    /// Sorted sample points inside the domain: `n` midpoints of a uniform
    /// partition of the sample window plus geometric refinement toward each
    /// finite endpoint.
    pub fn sample_points(&self, n: usize) -> Vec<f64> {
        let (a, b) = self.sample_window();
        let len = b - a;
        let mut pts: Vec<f64> = (0..n).map(|i| a + len * (i as f64 + 0.5) / n as f64).collect();
        for k in 2..=12 {
            let d = len * 10f64.powi(-k);
            if self.omega_lo.is_finite() {
                pts.push(self.omega_lo + d);
            }
            if self.omega_hi.is_finite() {
                pts.push(self.omega_hi - d);
            }
        }
        pts.retain(|&x| self.contains(x));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Structural match of `F` against the closed-form registry.
    pub fn closed_form(&self) -> Option<ClosedForm> {
        ClosedForm::detect(&self.f)
    }
}

pub(crate) fn window(lo: f64, hi: f64) -> (f64, f64) {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (lo, hi),
        (true, false) => (lo, lo + SAMPLE_WINDOW),
        (false, true) => (hi - SAMPLE_WINDOW, hi),
        (false, false) => (-0.5 * SAMPLE_WINDOW, 0.5 * SAMPLE_WINDOW),
    }
}

pub fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

fn sampled_range(e: &Expr, pts: &[f64], cap: f64) -> Result<SampledRange> {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &x in pts {
        let v = e.eval(x)?;
        min = min.min(v);
        max = max.max(v);
    }
    Ok(SampledRange { min, max, bounded: min.abs() <= cap && max.abs() <= cap })
}

/// Vector fields whose flow is known in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedForm {
    /// `F = c`: `phi(t, x) = x + c t`.
    Constant(f64),
    /// `F = -x`: `phi(t, x) = x e^{-t}`.
    Contraction,
    /// `F = x (1 - x)`: logistic flow.
    Logistic,
}

impl ClosedForm {
    pub fn detect(f: &Expr) -> Option<ClosedForm> {
        if let Some(c) = f.constant_value() {
            return Some(ClosedForm::Constant(c));
        }
        let is_one = |e: &Expr| matches!(e, Expr::Num(v) if *v == 1.0);
        match f {
            Expr::Neg(inner) if **inner == Expr::Var => Some(ClosedForm::Contraction),
            Expr::Mul(a, b) => {
                let one_minus_x = |e: &Expr| matches!(e, Expr::Sub(l, r) if is_one(l) && **r == Expr::Var);
                if (**a == Expr::Var && one_minus_x(b)) || (one_minus_x(a) && **b == Expr::Var) {
                    Some(ClosedForm::Logistic)
                } else {
                    None
                }
            }
            _ => None,
        }
    }
}

/// Parse config text into a [`ProblemSpec`]. `h_re` and `h_im` default to
/// `"0"`; every other key is required.
pub fn parse_config(text: &str) -> Result<ProblemSpec> {
    let mut fields: [(&str, Option<(usize, String)>); 7] = [
        ("omega_lo", None),
        ("omega_hi", None),
        ("F", None),
        ("h_re", None),
        ("h_im", None),
        ("rho", None),
        ("p", None),
    ];
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
            line: line_no,
            message: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        let value = unquote(value.trim(), line_no)?;
        let slot = fields
            .iter_mut()
            .find(|(k, _)| *k == key)
            .ok_or_else(|| Error::Config { line: line_no, message: format!("unknown key `{key}`") })?;
        if slot.1.is_some() {
            return Err(Error::Config { line: line_no, message: format!("duplicate key `{key}`") });
        }
        slot.1 = Some((line_no, value));
    }
    let take = |name: &str, fields: &mut [(&str, Option<(usize, String)>); 7]| {
        fields.iter_mut().find(|(k, _)| *k == name).and_then(|(_, v)| v.take())
    };
    let required = |name: &str, v: Option<(usize, String)>| v.ok_or_else(|| Error::MissingKey(name.to_string()));
    let lo = required("omega_lo", take("omega_lo", &mut fields))?;
    let hi = required("omega_hi", take("omega_hi", &mut fields))?;
    let f = required("F", take("F", &mut fields))?;
    let rho = required("rho", take("rho", &mut fields))?;
    let p = required("p", take("p", &mut fields))?;
    let h_re = take("h_re", &mut fields).map(|v| v.1).unwrap_or_else(|| "0".into());
    let h_im = take("h_im", &mut fields).map(|v| v.1).unwrap_or_else(|| "0".into());
    Ok(ProblemSpec {
        omega_lo: parse_endpoint(&lo.1, lo.0)?,
        omega_hi: parse_endpoint(&hi.1, hi.0)?,
        f: f.1,
        h_re,
        h_im,
        rho: rho.1,
        p: parse_number(&p.1, p.0)?,
    })
}

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(value: &str, line: usize) -> Result<String> {
    if let Some(rest) = value.strip_prefix('"') {
        let inner = rest
            .strip_suffix('"')
            .ok_or_else(|| Error::Config { line, message: "unterminated string".into() })?;
        Ok(inner.to_string())
    } else {
        Ok(value.to_string())
    }
}

fn parse_endpoint(s: &str, line: usize) -> Result<f64> {
    match s.trim() {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        other => parse_number(other, line),
    }
}

fn parse_number(s: &str, line: usize) -> Result<f64> {
    // Endpoints and p may be written as constant expressions such as `pi`.
    let e = Expr::parse(s).map_err(|e| Error::Config { line, message: e.to_string() })?;
    e.constant_value()
        .ok_or_else(|| Error::Config { line, message: format!("`{s}` is not a constant") })
}
