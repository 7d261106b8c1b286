//! Acceptance gate: runs every criterion at its stated tolerance and prints
//! one line per criterion. Exits non-zero when any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wcsg::chaos::{self, criterion_integral, decay_probe, ChaosOptions, Verdict};
use wcsg::lpspace::{GridFunction, GridOptions, IndicatorSpec, LpSpace};
use wcsg::quad::TailDiagnosis;
use wcsg::semigroup::WeightedComposition;
use wcsg::sobolev::{vfl_sobolev_threshold, SobolevProblem};
use wcsg::suite::{flow_properties, occupancy_probes};
use wcsg::weights::{estimate_admissibility, AdmissibilityVerdict};
use wcsg::{ComponentDecomposition, Exec, FlowOptions, ProblemDef, ProblemSpec, Semiflow};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 vFL threshold reproduction", vfl_thresholds),
        ("2 Sobolev threshold reproduction", sobolev_thresholds),
        ("3 criterion integral accuracy", criterion_accuracy),
        ("4 FHC identity suite", fhc_identities),
        ("5 norm identities", norm_identities),
        ("6 occupancy bound", occupancy),
        ("7 Pettis-finiteness diagnostics", pettis),
        ("8 flow and derivative properties", flow_suite),
        ("9 admissibility estimator", admissibility),
        ("10 stability dichotomy", dichotomy),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<36} {secs:>7.2}s  {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<36} {secs:>7.2}s  {detail}");
            }
        }
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: f64) -> Result<(), String> {
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < limit, || format!("runtime {secs:.2}s exceeds {limit}s"))
}

fn vfl(gamma: f64, p: f64) -> Arc<ProblemDef> {
    Arc::new(ProblemSpec::new(0.0, 1.0, "-x").h_re(&gamma.to_string()).p(p).build().unwrap())
}

fn translation(rho: &str, p: f64) -> Arc<ProblemDef> {
    Arc::new(ProblemSpec::new(0.0, f64::INFINITY, "1").rho(rho).p(p).build().unwrap())
}

fn logistic() -> Arc<ProblemDef> {
    Arc::new(ProblemSpec::new(0.0, 1.0, "x*(1-x)").h_re("0.2").h_im("x*(1-x)").p(2.0).build().unwrap())
}

struct Case {
    name: &'static str,
    sg: WeightedComposition,
    decomp: ComponentDecomposition,
    intervals: [(f64, f64); 2],
}

fn case(name: &'static str, problem: Arc<ProblemDef>, fo: FlowOptions, intervals: [(f64, f64); 2]) -> Case {
    let flow = Arc::new(Semiflow::new(problem.clone(), fo));
    let decomp = flow.decompose(4096).unwrap();
    let space = LpSpace::for_problem(problem, &decomp.zeros, &GridOptions::default()).unwrap();
    Case { name, sg: WeightedComposition::new(flow, space), decomp, intervals }
}

impl Case {
    fn spec(&self, (a, b): (f64, f64)) -> IndicatorSpec {
        IndicatorSpec::new(&self.sg.flow, &self.decomp, a, b).unwrap()
    }
}

fn matrix(fo: FlowOptions) -> Vec<Case> {
    vec![
        case("vFL h=0", vfl(0.0, 1.0), fo, [(0.25, 0.5), (0.5, 0.75)]),
        case("vFL h=1", vfl(1.0, 2.0), fo, [(0.25, 0.5), (0.1, 0.9)]),
        case("translation", translation("1", 2.0), fo, [(1.0, 3.0), (0.5, 2.0)]),
        case("logistic", logistic(), fo, [(0.25, 0.5), (0.4, 0.8)]),
    ]
}

fn write_problem(dir: &Path, name: &str, gamma: f64, p: f64) -> PathBuf {
    let path = dir.join(name);
    let text = format!("omega_lo = 0\nomega_hi = 1\nF = \"-x\"\nh_re = \"{gamma}\"\nrho = \"1\"\np = {p}\n");
    std::fs::write(&path, text).unwrap();
    path
}

fn run_cli(sub: &str, problem: &Path) -> (i32, serde_json::Value) {
    let out = Command::new(env!("CARGO_BIN_EXE_wcsg"))
        .args([sub, "--problem", problem.to_str().unwrap(), "--format", "json"])
        .output()
        .expect("running wcsg");
    let code = out.status.code().unwrap_or(-1);
    let json = serde_json::from_slice(&out.stdout).unwrap_or(serde_json::Value::Null);
    (code, json)
}

fn vfl_thresholds() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut n = 0;
    for p in [1.0, 2.0] {
        for g in [-2.0, -1.0, -0.6, -0.5, -0.4, 0.0, 1.0] {
            let path = write_problem(dir.path(), &format!("vfl_{p}_{g}.conf"), g, p);
            let (code, report) = run_cli("analyze", &path);
            let chaotic = p * g + 1.0 > 0.0;
            let verdict = report["verdict"].as_str().unwrap_or("missing");
            ensure(verdict == if chaotic { "CHAOTIC_AND_FHC" } else { "NOT_CHAOTIC" }, || format!("p={p} gamma={g}: {verdict}"))?;
            ensure(code == if chaotic { 0 } else { 1 }, || format!("p={p} gamma={g}: exit {code}"))?;
            if g == -1.0 / p {
                ensure(report["boundary"] == true, || format!("p={p} gamma={g}: boundary not annotated"))?;
            }
            n += 1;
        }
    }
    within(start, 10.0)?;
    Ok(format!("{n} cases, boundary annotated at gamma = -1/p"))
}

fn sobolev_thresholds() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let opts = ChaosOptions::default();
    let mut n = 0;
    for p in [1.0, 2.0] {
        for g in [-0.5, 0.0, 0.4, 0.5, 0.6, 1.5] {
            let path = write_problem(dir.path(), &format!("sob_{p}_{g}.conf"), g, p);
            let (code, report) = run_cli("sobolev-analyze", &path);
            let algebraic = g > 1.0 - 1.0 / p;
            let verdict = report["verdict"].as_str().unwrap_or("missing");
            ensure(verdict == if algebraic { "CHAOTIC_AND_FHC" } else { "NOT_CHAOTIC" }, || format!("p={p} gamma={g}: {verdict}"))?;
            ensure(code == if algebraic { 0 } else { 1 }, || format!("p={p} gamma={g}: exit {code}"))?;
            // Derived route: weight gamma - 1 on L^p, threshold p (gamma - 1) > -1.
            let sp = SobolevProblem::new(vfl(g, p), FlowOptions::default()).map_err(|e| e.to_string())?;
            let derived = chaos::chaos_test(Arc::new(sp.derived_problem().unwrap()), &opts).unwrap().verdict;
            let weight_rule = p * (g - 1.0) > -1.0;
            ensure(derived.is_chaotic() == algebraic && weight_rule == algebraic && vfl_sobolev_threshold(g, p) == algebraic, || {
                format!("p={p} gamma={g}: derived {derived}, weight rule {weight_rule}, algebraic {algebraic}")
            })?;
            n += 1;
        }
    }
    within(start, 10.0)?;
    Ok(format!("{n} cases, derived and algebraic routes agree"))
}

fn criterion_accuracy() -> Outcome {
    let start = Instant::now();
    let value = |problem: Arc<ProblemDef>, x: f64| {
        let flow = Semiflow::new(problem, FlowOptions::default());
        let c = flow.decompose(1024).unwrap().components[0];
        criterion_integral(&flow, &c, flow.problem().p, x).unwrap()
    };
    // Oracles: int_0^1 1 dw and int_0^inf e^{-w} dw.
    let a = value(vfl(0.0, 2.0), 0.5);
    let va = a.value.ok_or("vFL gamma=0 reported divergent")?;
    ensure((va - 1.0).abs() <= 1e-4, || format!("vFL value {va}"))?;
    let b = value(translation("exp(-x)", 1.0), 1.0);
    let vb = b.value.ok_or("translation reported divergent")?;
    ensure((vb - 1.0).abs() <= 1e-4, || format!("translation value {vb}"))?;
    let c = value(vfl(-1.0, 1.0), 0.5);
    ensure(c.diagnosis == TailDiagnosis::Divergent, || format!("vFL gamma=-1: {:?}", c.diagnosis))?;
    within(start, 5.0)?;
    Ok(format!("vFL {va:.9}, translation {vb:.9}, gamma=-1 divergent"))
}

fn fhc_identities() -> Outcome {
    let start = Instant::now();
    let mut worst = [0.0f64; 2];
    for (k, (fo, tol)) in [(FlowOptions::default(), 1e-6), (FlowOptions::numeric(), 1e-4)].into_iter().enumerate() {
        for c in matrix(fo) {
            for iv in c.intervals {
                let spec = c.spec(iv);
                for t in [0.1, 0.5, 1.0] {
                    let r = c.sg.verify_fhc_identities(&spec, &[t], &[t + 0.2, t + 1.0]).map_err(|e| format!("{}: {e}", c.name))?;
                    let e = r.right_inverse_max.max(r.cascade_max);
                    worst[k] = worst[k].max(e);
                    ensure(e <= tol, || format!("{} {iv:?} t={t}: {e:e} > {tol:e} ({})", c.name, if k == 0 { "closed" } else { "numeric" }))?;
                }
            }
        }
    }
    within(start, 60.0)?;
    Ok(format!("max relative error {:.1e} closed, {:.1e} numeric", worst[0], worst[1]))
}

fn norm_identities() -> Outcome {
    let mut worst: f64 = 0.0;
    for c in matrix(FlowOptions::default()) {
        let p = c.sg.p();
        for iv in c.intervals {
            let spec = c.spec(iv);
            let chi = c.sg.indicator(&spec);
            for t in [0.1, 0.5, 1.0] {
                let s = c.sg.apply_s_indicator(t, &spec).unwrap();
                let want = c.sg.backward_density_integral(&spec, t, p).unwrap();
                let e1 = (c.sg.space.norm_pow(&s, p).unwrap() - want).abs() / want;
                let want = c.sg.forward_density_integral(&spec, t, 1.0).unwrap();
                let got = c.sg.space.norm_pow(&c.sg.apply_t(t, &chi).unwrap(), 1.0).unwrap();
                // T(t) chi_I vanishes once phi(-t, .) pushes I out of the domain.
                let e2 = if want == 0.0 { got } else { (got - want).abs() / want };
                worst = worst.max(e1).max(e2);
                ensure(e1 <= 1e-6 && e2 <= 1e-6, || format!("{} {iv:?} t={t}: {e1:e}, {e2:e}", c.name))?;
            }
        }
    }
    // Closed-form oracle for vFL: int_I rho_{-t,p} = |I| e^{-(p gamma + 1) t}.
    let c = case("vFL", vfl(0.0, 1.0), FlowOptions::default(), [(0.25, 0.5), (0.5, 0.75)]);
    let spec = c.spec((0.25, 0.5));
    let t = 2f64.ln();
    let spot = c.sg.space.norm_pow(&c.sg.apply_s_indicator(t, &spec).unwrap(), 1.0).unwrap();
    ensure((spot - 0.125).abs() <= 1e-6, || format!("||S_ln2 chi||_1 = {spot}"))?;
    let v = vfl(1.0, 2.0);
    let c = case("vFL h=1", v, FlowOptions::default(), [(0.25, 0.5), (0.1, 0.9)]);
    for t in [0.1, 0.5, 1.0] {
        let oracle = 0.25 * (-3.0f64 * t).exp();
        let got = c.sg.backward_density_integral(&c.spec((0.25, 0.5)), t, 2.0).unwrap();
        ensure((got - oracle).abs() <= 1e-9 * oracle, || format!("density integral {got} vs {oracle}"))?;
    }
    Ok(format!("max relative error {worst:.1e}, spot value {spot:.9}"))
}

fn occupancy() -> Outcome {
    let ln2 = 2f64.ln();
    let mut detail = Vec::new();
    for (c, iv) in [
        (case("vFL", vfl(0.0, 1.0), FlowOptions::default(), [(0.25, 0.5), (0.5, 0.75)]), (0.25, 0.5)),
        (case("translation", translation("1", 1.0), FlowOptions::default(), [(1.0, 3.0), (0.5, 2.0)]), (1.0, 3.0)),
    ] {
        let spec = c.spec(iv);
        let ys = occupancy_probes(&c.decomp.components[spec.component], iv.0, iv.1);
        ensure(ys.len() == 101, || "probe count".into())?;
        let b = c.sg.occupancy_bound(&spec, &ys).unwrap();
        ensure(b.holds(1e-6), || format!("{}: sup {} > bound {}", c.name, b.measured_sup, b.c_formula))?;
        let gap = (b.transit.flow_time - b.transit.quadrature).abs();
        ensure(gap <= 1e-8, || format!("{}: |s - int dr/|F|| = {gap:e}", c.name))?;
        if c.name == "vFL" {
            ensure((b.measured_sup - ln2).abs() <= 1e-6 && (b.c_formula - ln2).abs() <= 1e-6, || {
                format!("vFL equality: sup {} bound {}", b.measured_sup, b.c_formula)
            })?;
        }
        detail.push(format!("{} sup {:.9} <= {:.9}", c.name, b.measured_sup, b.c_formula));
    }
    Ok(detail.join(", "))
}

fn pettis() -> Outcome {
    let start = Instant::now();
    let c = case("vFL", vfl(0.0, 1.0), FlowOptions::default(), [(0.25, 0.5), (0.5, 0.75)]);
    let ti = c.sg.coorbit_norm_integral(&c.spec((0.25, 0.5))).unwrap();
    // Oracle: ||S_t chi_I||_1 = |I| e^{-t}, integrating to |I| = 0.25.
    ensure((ti.value - 0.25).abs() <= 1e-3 && ti.tail == TailDiagnosis::Convergent, || format!("vFL coorbit {ti:?}"))?;
    let c = case("translation", translation("1", 1.0), FlowOptions::default(), [(1.0, 3.0), (0.5, 2.0)]);
    let tr = c.sg.coorbit_norm_integral(&c.spec((1.0, 3.0))).unwrap();
    ensure(tr.tail == TailDiagnosis::Divergent, || format!("translation coorbit tail {:?}", tr.tail))?;
    within(start, 30.0)?;
    Ok(format!("vFL {:.6} convergent, translation divergent", ti.value))
}

/// Random `F` on `(0, 1)` from a small expression tree, kept away from zero
/// by a dominant constant.
fn random_vector_field(rng: &mut ChaCha8Rng) -> String {
    fn term(rng: &mut ChaCha8Rng, depth: u32) -> String {
        let leaves = ["x", "x^2", "sin(3*x)", "cos(x)", "exp(-x)"];
        if depth == 0 || rng.random_bool(0.4) {
            return leaves[rng.random_range(0..leaves.len())].to_string();
        }
        match rng.random_range(0..3) {
            0 => format!("({})*({})", term(rng, depth - 1), term(rng, depth - 1)),
            1 => format!("sin({})", term(rng, depth - 1)),
            _ => format!("cos(2*({}))", term(rng, depth - 1)),
        }
    }
    let mut s = format!("{:.3}", rng.random_range(1.5..3.0));
    for _ in 0..2 {
        s.push_str(&format!(" + ({:.3})*({})", rng.random_range(-0.45..0.45), term(rng, 2)));
    }
    s
}

fn flow_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let random_f = random_vector_field(&mut rng);
    let problems = [
        ("contraction", vfl(0.7, 2.0)),
        ("logistic", logistic()),
        ("translation", translation("exp(-x)", 1.0)),
        ("random", Arc::new(ProblemSpec::new(0.0, 1.0, &random_f).h_re("cos(x)").h_im("x").p(2.0).build().unwrap())),
    ];
    let closed = |name: &str, t: f64, x: f64| -> Option<f64> {
        match name {
            "contraction" => Some(x * (-t).exp()),
            "logistic" => Some(x / (x + (1.0 - x) * (-t).exp())),
            "translation" => Some(x + t),
            _ => None,
        }
    };
    for (name, problem) in problems {
        let flow = Semiflow::new(problem.clone(), FlowOptions::default());
        let points: Vec<f64> = if name == "random" { vec![0.3, 0.5, 0.7] } else { problem.sample_points(8) };
        let times: &[f64] = if name == "random" { &[0.01, 0.05] } else { &[0.1, 0.5, 1.0] };
        for c in flow_properties(&flow, &points, times).map_err(|e| format!("{name}: {e}"))? {
            ensure(c.passed, || format!("{name}: {} measured {:e}", c.name, c.measured))?;
        }
        for &x in &points {
            for &t in times {
                if let Some(want) = closed(name, t, x) {
                    let got = flow.flow(t, x).unwrap();
                    ensure((got - want).abs() <= 1e-12 * want.abs().max(1.0), || format!("{name}: phi({t}, {x}) = {got}, closed form {want}"))?;
                }
            }
        }
    }
    Ok(format!("3 closed-form problems and F = {random_f}"))
}

fn admissibility() -> Outcome {
    let times: Vec<f64> = (0..=20).map(|k| 0.5 * k as f64).collect();
    let mut worst: f64 = 0.0;
    for p in [1.0, 2.0] {
        for g in [-1.0, 0.0, 0.5, 1.0] {
            let problem = vfl(g, p);
            let flow = Semiflow::new(problem.clone(), FlowOptions::default());
            let est = estimate_admissibility(&flow, p, &times, &problem.sample_points(64), Exec::default());
            let (m, w) = (est.m, est.omega_rate);
            ensure(est.verdict == AdmissibilityVerdict::AdmissibleWitness, || format!("p={p} gamma={g}: {:?}", est.verdict))?;
            ensure((m - 1.0).abs() <= 0.05 && (w - (p * g + 1.0)).abs() <= 0.05, || format!("p={p} gamma={g}: M={m} omega={w}"))?;
            worst = worst.max((m - 1.0).abs()).max((w - (p * g + 1.0)).abs());
        }
    }
    let problem = translation("exp(-x^2)", 1.0);
    let flow = Semiflow::new(problem.clone(), FlowOptions::default());
    let est = estimate_admissibility(&flow, 1.0, &times, &problem.sample_points(64), Exec::default());
    ensure(est.verdict == AdmissibilityVerdict::Violation, || format!("exp(-x^2): {:?}", est.verdict))?;
    Ok(format!("max deviation {worst:.1e}, exp(-x^2) flagged"))
}

fn dichotomy() -> Outcome {
    let times: Vec<f64> = (0..=10).map(|k| 0.5 * k as f64).collect();
    let mut rates = Vec::new();
    for (g, want) in [(-2.0, -2.0), (0.0, 0.0)] {
        let c = case("vFL", vfl(g, 1.0), FlowOptions::default(), [(0.25, 0.5), (0.5, 0.75)]);
        let f = GridFunction::interval(&c.sg.space.grid, 0.0, 1.0, Complex64::new(1.0, 0.0)).unwrap();
        let table = decay_probe(&c.sg, &f, &times).unwrap();
        ensure((table.rate - want).abs() <= 0.01, || format!("gamma={g}: rate {}", table.rate))?;
        rates.push(table.rate);
    }
    let verdict = chaos::chaos_test(vfl(-2.0, 1.0), &ChaosOptions::default()).unwrap().verdict;
    ensure(verdict == Verdict::NotChaotic, || format!("gamma=-2 verdict {verdict}"))?;
    Ok(format!("rates {:.6} and {:.6}", rates[0], rates[1]))
}
