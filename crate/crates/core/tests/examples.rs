use std::sync::Arc;

use num_complex::Complex64;
use wcsg::chaos::{self, decay_probe, orbit_lower_density, ChaosOptions, Verdict};
use wcsg::lpspace::{GridFunction, GridOptions, IndicatorSpec, LpSpace};
use wcsg::semigroup::WeightedComposition;
use wcsg::sobolev::{
    conjugacy_transport, sobolev_chaos_classify, ConjugatePair, Intertwiner, SobolevGridFunction, SobolevProblem,
};
use wcsg::{FlowOptions, ProblemDef, ProblemSpec, Semiflow};

fn vfl(gamma: f64, p: f64) -> Arc<ProblemDef> {
    Arc::new(ProblemSpec::new(0.0, 1.0, "-x").h_re(&gamma.to_string()).p(p).build().unwrap())
}

fn semigroup(problem: Arc<ProblemDef>) -> (WeightedComposition, wcsg::ComponentDecomposition) {
    let flow = Arc::new(Semiflow::new(problem.clone(), FlowOptions::default()));
    let decomp = flow.decompose(1024).unwrap();
    let space = LpSpace::for_problem(problem, &decomp.zeros, &GridOptions::default()).unwrap();
    (WeightedComposition::new(flow, space), decomp)
}

#[test]
fn same_weight_differs_across_spaces() {
    // h = 0, p = 2: chaotic on L^2 (0 > -1/2) but not on W^{1,2}_* (0 < 1/2).
    let opts = ChaosOptions::default();
    assert_eq!(chaos::chaos_test(vfl(0.0, 2.0), &opts).unwrap().verdict, Verdict::ChaoticAndFhc);
    let sp = SobolevProblem::new(vfl(0.0, 2.0), FlowOptions::default()).unwrap();
    assert_eq!(sobolev_chaos_classify(&sp, &opts).unwrap().verdict, Verdict::NotChaotic);
}

#[test]
fn sobolev_report_matches_derived_problem() {
    let opts = ChaosOptions::default();
    let sp = SobolevProblem::new(vfl(0.8, 2.0), FlowOptions::default()).unwrap();
    let mut via_sobolev = sobolev_chaos_classify(&sp, &opts).unwrap();
    let direct = chaos::chaos_test(Arc::new(sp.derived_problem().unwrap()), &opts).unwrap();
    via_sobolev.tag = None;
    via_sobolev.notes.retain(|n| !n.starts_with("derived weight"));
    assert_eq!(via_sobolev, direct);
}

#[test]
fn sobolev_boundary_stays_pinned() {
    let def = ProblemSpec::new(0.0, 1.0, "-x").h_re("1 + x*(1-x)").h_im("x").p(2.0).build().unwrap();
    let sp = SobolevProblem::new(Arc::new(def), FlowOptions::default()).unwrap();
    let nodes = SobolevGridFunction::uniform_nodes(0.0, 1.0, 201);
    let f = SobolevGridFunction::from_real_fn(nodes, |x| x * (2.0 - x / 3.0), |x| 2.0 - 2.0 * x / 3.0).unwrap();
    for t in [0.1, 0.5, 2.0, 5.0] {
        let g = sp.apply_s(t, &f).unwrap();
        assert_eq!(g.values()[0], Complex64::new(0.0, 0.0));
        let scale = g.derivatives().iter().map(|d| d.norm()).fold(0.0, f64::max);
        assert!(g.reconstruction_error() < 1e-4 * scale, "t={t}: {}", g.reconstruction_error());
    }
}

#[test]
fn decay_rates_split_at_the_threshold() {
    let times: Vec<f64> = (0..=10).map(|k| 0.5 * k as f64).collect();
    for (gamma, rate) in [(-2.0, -2.0), (0.0, 0.0)] {
        let (sg, _) = semigroup(vfl(gamma, 1.0));
        let f = GridFunction::interval(&sg.space.grid, 0.0, 1.0, Complex64::new(1.0, 0.0)).unwrap();
        let table = decay_probe(&sg, &f, &times).unwrap();
        assert!((table.rate - rate).abs() < 0.01, "gamma={gamma}: {table:?}");
    }
}

#[test]
fn fixed_vector_has_full_lower_density() {
    // T(t) 1 = 1 for h = 0, so the orbit never leaves any ball around 1.
    let (sg, _) = semigroup(vfl(0.0, 1.0));
    let one = GridFunction::interval(&sg.space.grid, 0.0, 1.0, Complex64::new(1.0, 0.0)).unwrap();
    let d = orbit_lower_density(&sg.space, |t| sg.apply_t(t, &one), &one, 1e-6, 16.0, 32).unwrap();
    assert_eq!(d, 1.0);
}

struct Multiply {
    m: fn(f64) -> f64,
}

impl Multiply {
    fn times(&self, f: &GridFunction, inverse: bool) -> GridFunction {
        let vals = f.nodes().iter().zip(f.values()).map(|(&x, &v)| if inverse { v / (self.m)(x) } else { v * (self.m)(x) }).collect();
        GridFunction::new(f.nodes().to_vec(), vals).unwrap()
    }
}

impl Intertwiner for Multiply {
    type Source = GridFunction;
    type Target = GridFunction;
    fn domain(&self) -> &str {
        "L^p"
    }
    fn codomain(&self) -> &str {
        "L^p"
    }
    fn forward(&self, x: &GridFunction) -> wcsg::Result<GridFunction> {
        Ok(self.times(x, false))
    }
    fn inverse(&self, y: &GridFunction) -> wcsg::Result<GridFunction> {
        Ok(self.times(y, true))
    }
}

#[test]
fn transport_along_a_multiplication_operator() {
    let (sg, decomp) = semigroup(vfl(0.5, 2.0));
    let spec = IndicatorSpec::new(&sg.flow, &decomp, 0.25, 0.5).unwrap();
    let phi = Multiply { m: |x| 1.0 + x * x };
    let t1 = |t: f64, f: &GridFunction| sg.apply_t(t, f);
    let t2 = |t: f64, g: &GridFunction| Ok(phi.times(&sg.apply_t(t, &phi.times(g, true))?, false));
    let s = |t: f64, f: &GridFunction| {
        // The test vectors are multiples of chi_I.
        let c = f.values().iter().find(|v| v.norm() > 0.0).copied().unwrap_or_default();
        sg.apply_s(t, &[(spec, c)])
    };
    let dist = |a: &GridFunction, b: &GridFunction| sg.space.relative_error(a, b);
    let pair = ConjugatePair { t1: &t1, t2: &t2, dist1: &dist, dist2: &dist };
    let chi = sg.indicator(&spec);
    let tr = conjugacy_transport(&phi, &pair, &s, &[chi.clone(), chi.scale(Complex64::new(0.0, 2.0))], &[0.1, 0.5, 1.0], &[0.2, 1.0], 1e-6)
        .unwrap();
    assert!(tr.check.worst() <= 1e-6, "{:?}", tr.check);
}
