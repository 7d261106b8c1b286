//! Discretized weighted Lebesgue spaces `L^p_rho(Omega)`.
//!
//! A [`GridFunction`] is a piecewise-linear function given by node/value
//! pairs, extended by zero outside its first and last node. Nodes are
//! non-decreasing; a node that appears twice marks a jump, the first entry
//! carrying the left limit and the second the right limit. Indicators of
//! intervals are therefore represented exactly.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::problem::{conjugate, ProblemDef};
use crate::quad::gl5;
use crate::semiflow::{golden_min, ComponentDecomposition, Semiflow};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const MIN_NODES: usize = 64;
const CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub nodes: usize,
    /// Length of the truncation window on an unbounded side.
    pub far_window: f64,
    /// Growth factor of cell widths away from focus points.
    pub grading: f64,
    /// Smallest cell width as a fraction of the bulk width.
    pub finest: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { nodes: 4096, far_window: 64.0, grading: 1.05, finest: 0.01 }
    }
}

/// Strictly increasing nodes covering (the truncated closure of) the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nodes: Vec<f64>,
}

impl Grid {
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Grid> {
        if nodes.len() < MIN_NODES {
            return Err(Error::InvalidArgument(format!("a grid needs at least {MIN_NODES} nodes, got {}", nodes.len())));
        }
        if nodes.iter().any(|x| !x.is_finite()) || nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("grid nodes must be finite and strictly increasing".into()));
        }
        Ok(Grid { nodes })
    }

    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Grid> {
        let n = n.max(2);
        Grid::from_nodes((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
    }

    /// About `n` nodes on `[lo, hi]` whose spacing shrinks geometrically
    /// toward each point of `focus`.
    pub fn graded(lo: f64, hi: f64, n: usize, focus: &[f64], opts: &GridOptions) -> Result<Grid> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::EmptyInterval { lo, hi });
        }
        let n = n.max(MIN_NODES);
        if focus.is_empty() {
            return Grid::uniform(lo, hi, n);
        }
        let len = hi - lo;
        let slope = opts.grading - 1.0;
        let width = |x: f64, u: f64| {
            let d = focus.iter().map(|f| (x - f).abs()).fold(f64::INFINITY, f64::min);
            u.min(opts.finest * u + slope * d)
        };
        let steps = |u: f64, limit: usize| -> usize {
            let mut x = lo;
            let mut k = 0;
            while x < hi && k <= limit {
                x += width(x, u);
                k += 1;
            }
            k
        };
        let target = n - 1;
        let (mut a, mut b) = (len / target as f64, len);
        for _ in 0..100 {
            let mid = 0.5 * (a + b);
            if steps(mid, target + 1) <= target {
                b = mid;
            } else {
                a = mid;
            }
        }
        let mut nodes = vec![lo];
        let mut x = lo;
        while x < hi {
            x += width(x, b);
            nodes.push(x);
        }
        let last = *nodes.last().expect("at least two nodes");
        let scale = len / (last - lo);
        for v in nodes.iter_mut() {
            *v = lo + (*v - lo) * scale;
        }
        *nodes.last_mut().expect("non-empty") = hi;
        nodes.dedup();
        Grid::from_nodes(nodes)
    }

    /// Default grid for a problem: graded toward finite endpoints and the
    /// given zeros of `F`, truncated to `far_window` on unbounded sides.
    pub fn for_problem(problem: &ProblemDef, zeros: &[f64], opts: &GridOptions) -> Result<Grid> {
        let (lo, hi) = truncation(problem, opts.far_window);
        let mut focus: Vec<f64> = zeros.iter().copied().filter(|z| *z > lo && *z < hi).collect();
        if problem.omega_lo.is_finite() {
            focus.push(problem.omega_lo);
        }
        if problem.omega_hi.is_finite() {
            focus.push(problem.omega_hi);
        }
        Grid::graded(lo, hi, opts.nodes, &focus, opts)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.nodes[0]
    }

    pub fn hi(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Largest ratio between adjacent cell widths.
    pub fn max_spacing_ratio(&self) -> f64 {
        self.nodes
            .windows(3)
            .map(|w| {
                let (a, b) = (w[1] - w[0], w[2] - w[1]);
                (a / b).max(b / a)
            })
            .fold(1.0, f64::max)
    }
}

/// Closure of the domain, with unbounded sides cut at `far` from the finite
/// end (or symmetric around 0 when both sides are unbounded).
pub fn truncation(problem: &ProblemDef, far: f64) -> (f64, f64) {
    match (problem.omega_lo.is_finite(), problem.omega_hi.is_finite()) {
        (true, true) => (problem.omega_lo, problem.omega_hi),
        (true, false) => (problem.omega_lo, problem.omega_lo + far),
        (false, true) => (problem.omega_hi - far, problem.omega_hi),
        (false, false) => (-0.5 * far, 0.5 * far),
    }
}

/// Piecewise-linear function with jumps, zero outside its nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    nodes: Vec<f64>,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(nodes: Vec<f64>, values: Vec<Complex64>) -> Result<GridFunction> {
        if nodes.len() != values.len() {
            return Err(Error::InvalidArgument(format!("{} nodes but {} values", nodes.len(), values.len())));
        }
        if nodes.iter().any(|x| !x.is_finite()) || values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidArgument("grid function entries must be finite".into()));
        }
        if nodes.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("grid function nodes must be non-decreasing".into()));
        }
        if nodes.windows(3).any(|w| w[0] == w[2]) {
            return Err(Error::InvalidArgument("a node may appear at most twice".into()));
        }
        Ok(GridFunction { nodes, values })
    }

    pub fn zero() -> GridFunction {
        GridFunction { nodes: Vec::new(), values: Vec::new() }
    }

    /// Sample `f` at the grid nodes.
    pub fn from_fn<F: Fn(f64) -> Complex64>(grid: &Grid, f: F) -> Result<GridFunction> {
        GridFunction::new(grid.nodes.clone(), grid.nodes.iter().map(|&x| f(x)).collect())
    }

    pub fn from_real_fn<F: Fn(f64) -> f64>(grid: &Grid, f: F) -> Result<GridFunction> {
        GridFunction::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn constant(grid: &Grid, c: Complex64) -> GridFunction {
        GridFunction { nodes: grid.nodes.clone(), values: vec![c; grid.len()] }
    }

    /// `c * chi_[a, b]`, with grid nodes inside `(a, b)` for resolution.
    pub fn interval(grid: &Grid, a: f64, b: f64, c: Complex64) -> Result<GridFunction> {
        if !(a < b) {
            return Err(Error::EmptyInterval { lo: a, hi: b });
        }
        let mut nodes = vec![a];
        nodes.extend(grid.nodes.iter().copied().filter(|&x| x > a && x < b));
        nodes.push(b);
        let n = nodes.len();
        GridFunction::new(nodes, vec![c; n])
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    /// First and last node.
    pub fn support(&self) -> Option<(f64, f64)> {
        Some((*self.nodes.first()?, *self.nodes.last()?))
    }

    fn lerp(&self, i: usize, x: f64) -> Complex64 {
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        if x1 == x0 {
            return self.values[i + 1];
        }
        let s = (x - x0) / (x1 - x0);
        self.values[i] * (1.0 - s) + self.values[i + 1] * s
    }

    /// Value at `x`: the right limit at a jump, the node value at the ends
    /// of the support, zero outside.
    pub fn eval(&self, x: f64) -> Complex64 {
        let k = self.nodes.partition_point(|&n| n <= x);
        if k == 0 {
            return ZERO;
        }
        if self.nodes[k - 1] == x {
            return self.values[k - 1];
        }
        if k == self.nodes.len() {
            return ZERO;
        }
        self.lerp(k - 1, x)
    }

    pub fn eval_right(&self, x: f64) -> Complex64 {
        let k = self.nodes.partition_point(|&n| n <= x);
        if k == 0 || k == self.nodes.len() {
            return ZERO;
        }
        if self.nodes[k - 1] == x {
            return self.values[k - 1];
        }
        self.lerp(k - 1, x)
    }

    pub fn eval_left(&self, x: f64) -> Complex64 {
        let j = self.nodes.partition_point(|&n| n < x);
        if j == 0 || j == self.nodes.len() {
            return ZERO;
        }
        self.lerp(j - 1, x)
    }

    /// Points where the function jumps: `(x, left limit, right limit)`,
    /// including the ends of the support.
    pub fn breakpoints(&self) -> Vec<(f64, Complex64, Complex64)> {
        let mut out = Vec::new();
        let n = self.nodes.len();
        let mut i = 0;
        while i < n {
            let x = self.nodes[i];
            let (l, r) = (self.eval_left(x), self.eval_right(x));
            let at_end = i == 0 || i + 1 == n;
            if l != r || at_end {
                out.push((x, l, r));
            }
            i += if i + 1 < n && self.nodes[i + 1] == x { 2 } else { 1 };
        }
        out
    }

    pub fn scale(&self, c: Complex64) -> GridFunction {
        GridFunction { nodes: self.nodes.clone(), values: self.values.iter().map(|v| v * c).collect() }
    }

    /// `a * self + b * other` on the union of both node sets.
    pub fn combine(&self, a: Complex64, other: &GridFunction, b: Complex64) -> GridFunction {
        let mut xs: Vec<f64> = self.nodes.iter().chain(&other.nodes).copied().collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let mut nodes = Vec::with_capacity(xs.len() + 8);
        let mut values = Vec::with_capacity(xs.len() + 8);
        for x in xs {
            let l = self.eval_left(x) * a + other.eval_left(x) * b;
            let r = self.eval_right(x) * a + other.eval_right(x) * b;
            if l != r {
                nodes.extend([x, x]);
                values.extend([l, r]);
            } else {
                nodes.push(x);
                values.push(l);
            }
        }
        GridFunction { nodes, values }
    }

    pub fn add(&self, other: &GridFunction) -> GridFunction {
        self.combine(Complex64::new(1.0, 0.0), other, Complex64::new(1.0, 0.0))
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        self.combine(Complex64::new(1.0, 0.0), other, Complex64::new(-1.0, 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Comma-separated `node,value_re[,value_im]` with a header row. The
    /// imaginary column is written only for complex-valued functions.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let complex = !self.is_real();
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Data(e.to_string());
        if complex {
            out.write_record(["node", "value_re", "value_im"]).map_err(io)?;
        } else {
            out.write_record(["node", "value_re"]).map_err(io)?;
        }
        for (x, v) in self.nodes.iter().zip(&self.values) {
            if complex {
                out.write_record([x.to_string(), v.re.to_string(), v.im.to_string()]).map_err(io)?;
            } else {
                out.write_record([x.to_string(), v.re.to_string()]).map_err(io)?;
            }
        }
        out.flush().map_err(|e| Error::Data(e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn read_csv<R: Read>(r: R) -> Result<GridFunction> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(r);
        let headers = rdr.headers().map_err(|e| Error::Data(e.to_string()))?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        if cols.len() < 2 || cols[0] != "node" || cols[1] != "value_re" || (cols.len() == 3 && cols[2] != "value_im") || cols.len() > 3 {
            return Err(Error::Data(format!("expected header node,value_re[,value_im], got {}", cols.join(","))));
        }
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
            let num = |j: usize| -> Result<f64> {
                let field = rec.get(j).ok_or_else(|| Error::Data(format!("row {}: missing column {}", i + 2, j + 1)))?;
                field.parse::<f64>().map_err(|_| Error::Data(format!("row {}: `{field}` is not a number", i + 2)))
            };
            nodes.push(num(0)?);
            let im = if cols.len() == 3 { num(2)? } else { 0.0 };
            values.push(Complex64::new(num(1)?, im));
        }
        GridFunction::new(nodes, values)
    }
}

/// `L^p_rho` on a fixed problem and base grid.
#[derive(Debug, Clone)]
pub struct LpSpace {
    pub problem: Arc<ProblemDef>,
    pub grid: Grid,
    pub p: f64,
    pub exec: Exec,
}

impl LpSpace {
    pub fn new(problem: Arc<ProblemDef>, grid: Grid) -> LpSpace {
        let p = problem.p;
        LpSpace { problem, grid, p, exec: Exec::default() }
    }

    /// Default graded grid for the problem.
    pub fn for_problem(problem: Arc<ProblemDef>, zeros: &[f64], opts: &GridOptions) -> Result<LpSpace> {
        let grid = Grid::for_problem(&problem, zeros, opts)?;
        Ok(LpSpace::new(problem, grid))
    }

    pub fn with_exec(mut self, exec: Exec) -> LpSpace {
        self.exec = exec;
        self
    }

    pub fn q(&self) -> f64 {
        conjugate(self.p)
    }

    /// `int g(x, f(x)) rho(x) dx` over the cells of `f` by five-point
    /// Gauss-Legendre per cell.
    fn cell_integral<G>(&self, f: &GridFunction, lo: f64, hi: f64, g: G) -> Result<f64>
    where
        G: Fn(Complex64) -> f64 + Sync + Send,
    {
        let n = f.nodes.len();
        if n < 2 {
            return Ok(0.0);
        }
        let chunks: Vec<usize> = (0..n - 1).step_by(CHUNK).collect();
        let (gx, gw) = gl5();
        let rho = |x: f64| self.problem.eval_rho(x);
        self.exec.try_sum(&chunks, |&start| {
            let mut s = 0.0;
            for i in start..(start + CHUNK).min(n - 1) {
                let (a, b) = (f.nodes[i].max(lo), f.nodes[i + 1].min(hi));
                if !(a < b) {
                    continue;
                }
                let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
                for (xi, wi) in gx.iter().zip(gw) {
                    let x = c + h * xi;
                    let v = g(f.lerp(i, x));
                    if v != 0.0 {
                        s += wi * h * v * rho(x)?;
                    }
                }
            }
            Ok(s)
        })
    }

    /// `int |f|^p rho`.
    pub fn norm_pow(&self, f: &GridFunction, p: f64) -> Result<f64> {
        self.cell_integral(f, f64::NEG_INFINITY, f64::INFINITY, |v| v.norm().powf(p))
    }

    /// `||f||_p` in `L^p_rho`; `p = inf` gives the sup norm.
    pub fn norm_p(&self, f: &GridFunction, p: f64) -> Result<f64> {
        if p.is_infinite() {
            return Ok(f.max_abs());
        }
        if !(p >= 1.0) {
            return Err(Error::InvalidExponent(p));
        }
        Ok(self.norm_pow(f, p)?.powf(1.0 / p))
    }

    /// Norm at the space's own exponent.
    pub fn norm(&self, f: &GridFunction) -> Result<f64> {
        self.norm_p(f, self.p)
    }

    /// Relative distance `||f - g|| / ||g||` (absolute when `g = 0`).
    pub fn relative_error(&self, f: &GridFunction, g: &GridFunction) -> Result<f64> {
        let d = self.norm(&f.sub(g))?;
        let n = self.norm(g)?;
        Ok(if n > 0.0 { d / n } else { d })
    }

    /// `<g, f> = int g f rho`, without conjugation.
    pub fn pairing(&self, g: &GridFunction, f: &GridFunction) -> Result<Complex64> {
        if g.is_empty() || f.is_empty() {
            return Ok(ZERO);
        }
        let mut xs: Vec<f64> = g.nodes.iter().chain(&f.nodes).copied().collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let (glo, ghi) = g.support().expect("non-empty");
        let (flo, fhi) = f.support().expect("non-empty");
        let (lo, hi) = (glo.max(flo), ghi.min(fhi));
        let cells: Vec<(f64, f64)> = xs.windows(2).map(|w| (w[0], w[1])).filter(|&(a, b)| a >= lo && b <= hi).collect();
        let chunks: Vec<&[(f64, f64)]> = cells.chunks(CHUNK).collect();
        let (gx, gw) = gl5();
        let parts = self.exec.try_map(&chunks, |chunk| {
            let mut s = ZERO;
            for &(a, b) in chunk.iter() {
                let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
                for (xi, wi) in gx.iter().zip(gw) {
                    let x = c + h * xi;
                    s += g.eval(x) * f.eval(x) * (wi * h * self.problem.eval_rho(x)?);
                }
            }
            Ok(s)
        })?;
        Ok(parts.into_iter().fold(ZERO, |a, b| a + b))
    }
}

/// A compact interval inside one component of `Omega \ {F = 0}`, with `|F|`
/// bounded below on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSpec {
    pub a: f64,
    pub b: f64,
    pub component: usize,
    pub min_abs_f: f64,
    pub sign: i8,
}

impl IndicatorSpec {
    pub fn new(flow: &Semiflow, decomp: &ComponentDecomposition, a: f64, b: f64) -> Result<IndicatorSpec> {
        if !(a < b) {
            return Err(Error::EmptyInterval { lo: a, hi: b });
        }
        let (component, c) = decomp
            .components
            .iter()
            .enumerate()
            .find(|(_, c)| c.lo < a && b < c.hi)
            .ok_or(Error::NotInComponent { a, b })?;
        let min_abs_f = flow.min_abs_f(a, b)?;
        let floor = flow.options().f_min;
        if min_abs_f < floor {
            return Err(Error::FloorViolation { a, b, min_abs_f, floor });
        }
        Ok(IndicatorSpec { a, b, component, min_abs_f, sign: c.sign })
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }
}

/// `chi_I` on the base grid, with exact edges.
pub fn indicator(spec: &IndicatorSpec, grid: &Grid) -> GridFunction {
    GridFunction::interval(grid, spec.a, spec.b, Complex64::new(1.0, 0.0)).expect("IndicatorSpec has a < b")
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepApproximation {
    pub pieces: Vec<(IndicatorSpec, Complex64)>,
    pub function: GridFunction,
    /// `||f - step||_p`.
    pub error: f64,
}

/// Step function on `k` equal pieces of the support of `f`, split at zeros
/// of `F` and shrunk so that `|F|` stays above the floor on every piece.
/// Each coefficient is the `L^p_rho`-best constant on its piece (for complex
/// `f`, the `rho`-weighted mean).
pub fn step_approximate(
    space: &LpSpace,
    flow: &Semiflow,
    decomp: &ComponentDecomposition,
    f: &GridFunction,
    k: usize,
) -> Result<StepApproximation> {
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one piece".into()));
    }
    if !decomp.zero_set_null {
        return Err(Error::ZeroSetNotNull);
    }
    let Some((lo, hi)) = f.support() else {
        return Ok(StepApproximation { pieces: Vec::new(), function: GridFunction::zero(), error: 0.0 });
    };
    let floor = flow.options().f_min;
    let mut pieces = Vec::new();
    let mut step = GridFunction::zero();
    for c in &decomp.components {
        let (u0, v0) = (lo.max(c.lo), hi.min(c.hi));
        if !(u0 < v0) {
            continue;
        }
        for j in 0..k {
            let mut u = u0 + (v0 - u0) * j as f64 / k as f64;
            let mut v = if j + 1 == k { v0 } else { u0 + (v0 - u0) * (j + 1) as f64 / k as f64 };
            // Pull the ends off zeros of F and off the boundary of the domain.
            let nudge = 1e-12 * (1.0 + u.abs().max(v.abs()));
            if u <= c.lo {
                u = c.lo + nudge;
            }
            if v >= c.hi {
                v = c.hi - nudge;
            }
            let mut spec = None;
            for _ in 0..60 {
                if !(u < v) {
                    break;
                }
                match IndicatorSpec::new(flow, decomp, u, v) {
                    Ok(s) => {
                        spec = Some(s);
                        break;
                    }
                    Err(Error::FloorViolation { .. }) => {
                        let fu = flow.problem().eval_f(u)?.abs();
                        let fv = flow.problem().eval_f(v)?.abs();
                        let w = v - u;
                        if fu < floor || fu <= fv {
                            u += 0.05 * w;
                        }
                        if fv < floor || fv < fu {
                            v -= 0.05 * w;
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
            let Some(spec) = spec else { continue };
            let coef = best_constant(space, f, spec.a, spec.b)?;
            let piece = GridFunction::interval(&space.grid, spec.a, spec.b, coef)?;
            step = step.add(&piece);
            pieces.push((spec, coef));
        }
    }
    let error = space.norm(&f.sub(&step))?;
    Ok(StepApproximation { pieces, function: step, error })
}

fn best_constant(space: &LpSpace, f: &GridFunction, a: f64, b: f64) -> Result<Complex64> {
    let mass = space.cell_integral(&GridFunction::interval(&space.grid, a, b, Complex64::new(1.0, 0.0))?, a, b, |_| 1.0)?;
    if mass == 0.0 {
        return Ok(ZERO);
    }
    if !f.is_real() || space.p == 2.0 {
        let re = space.cell_integral(f, a, b, |v| v.re)?;
        let im = space.cell_integral(f, a, b, |v| v.im)?;
        return Ok(Complex64::new(re, im) / mass);
    }
    let (mut vmin, mut vmax) = (f.eval(a).re.min(f.eval(b).re), f.eval(a).re.max(f.eval(b).re));
    for (x, v) in f.nodes.iter().zip(&f.values) {
        if *x >= a && *x <= b {
            vmin = vmin.min(v.re);
            vmax = vmax.max(v.re);
        }
    }
    if vmax - vmin <= 1e-15 * vmax.abs().max(1.0) {
        return Ok(Complex64::new(vmin, 0.0));
    }
    let p = space.p;
    let cost = |c: f64| space.cell_integral(f, a, b, |v| (v.re - c).abs().powf(p)).unwrap_or(f64::INFINITY);
    Ok(Complex64::new(golden_min(cost, vmin, vmax).0, 0.0))
}
