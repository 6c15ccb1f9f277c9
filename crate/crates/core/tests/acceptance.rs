use jumpconv::prm::{self, Event, MarkSet, MarkSpace, PoissonPath};
use jumpconv::quad::QuadConfig;
use jumpconv::rng;
use jumpconv::sconv::{ConvolutionScenario, GridSpec, ScenarioIntegrand};
use jumpconv::sgp::Generator;
use jumpconv::sint::{self, Coefficient, FieldIntegrand, StepIntegrand};
use jumpconv::space::{Point, SmoothSpace};
use jumpconv::stats;
use jumpconv::verify::{self, ExperimentConfig, InequalityReport, Mode, PathStats};
use nalgebra::DMatrix;
use rand::Rng;
use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

struct Outcome {
    id: &'static str,
    title: &'static str,
    ok: bool,
    detail: String,
    elapsed: Duration,
    limit: Duration,
}

fn emit(o: &Outcome) {
    let status = if o.ok && o.elapsed <= o.limit { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "{} {status} {}: {} [{:.2} s, limit {} s]",
        o.id,
        o.title,
        o.detail,
        o.elapsed.as_secs_f64(),
        o.limit.as_secs()
    )
    .unwrap();
}

fn timed(
    id: &'static str,
    title: &'static str,
    limit_s: u64,
    f: impl FnOnce() -> (bool, String),
) -> Outcome {
    let start = Instant::now();
    let (ok, detail) = f();
    let o = Outcome { id, title, ok, detail, elapsed: start.elapsed(), limit: Duration::from_secs(limit_s) };
    emit(&o);
    o
}

fn pt(v: &[f64]) -> Point {
    Point::from_column_slice(v)
}

fn two_marks() -> MarkSpace {
    MarkSpace::new(vec![1.0, 0.5]).unwrap()
}

fn space3() -> SmoothSpace {
    SmoothSpace::new(3, 3.0, 3.0, 2.0).unwrap()
}

fn generators() -> Vec<(&'static str, Generator)> {
    let mut circulant = DMatrix::from_element(3, 3, 0.0);
    for i in 0..3 {
        circulant[(i, i)] = -1.0;
        circulant[(i, (i + 1) % 3)] = 1.0;
    }
    let sub = DMatrix::from_row_slice(3, 3, &[0.2, 0.3, 0.1, 0.1, 0.2, 0.4, 0.3, 0.1, 0.2]);
    vec![
        ("identity", Generator::identity(3)),
        ("diagonal", Generator::diagonal(vec![-0.5, -1.0, -2.0]).unwrap()),
        ("laplacian", Generator::dirichlet_laplacian(3, 0.5).unwrap()),
        ("circulant", Generator::dense(circulant).unwrap()),
        ("substochastic", Generator::dense(sub - DMatrix::identity(3, 3)).unwrap()),
    ]
}

fn integrands() -> Vec<(&'static str, ScenarioIntegrand)> {
    let constant = FieldIntegrand::constant(vec![pt(&[1.0, 0.5, -0.25]), pt(&[0.0, -1.0, 2.0])]).unwrap();
    let polynomial = FieldIntegrand::polynomial(vec![
        vec![pt(&[0.5, 0.0, 1.0]), pt(&[1.0, -1.0, 0.0])],
        vec![pt(&[0.0, 1.0, 0.0]), pt(&[0.0, 0.0, 0.0]), pt(&[1.0, 1.0, 1.0])],
    ])
    .unwrap();
    let sine = FieldIntegrand::sinusoidal(
        vec![pt(&[1.0, 0.0, 0.5]), pt(&[0.0, 1.0, -1.0])],
        vec![pt(&[0.5, 0.5, 0.0]), pt(&[1.0, 0.0, 0.5])],
        5.0,
    )
    .unwrap();
    let step = StepIntegrand::new(
        3,
        vec![0.0, 0.3, 0.7, 1.0],
        vec![
            vec![
                (MarkSet::single(2, 0), Coefficient::Fixed(pt(&[1.0, 0.0, 0.0]))),
                (MarkSet::single(2, 1), Coefficient::Fixed(pt(&[0.0, 2.0, 0.0]))),
            ],
            vec![(MarkSet::all(2), Coefficient::Fixed(pt(&[0.5, 0.5, 0.5])))],
            vec![(MarkSet::single(2, 1), Coefficient::Fixed(pt(&[-1.0, 0.0, 1.0])))],
        ],
    )
    .unwrap();
    vec![
        ("constant", ScenarioIntegrand::Field(constant)),
        ("polynomial", ScenarioIntegrand::Field(polynomial)),
        ("sine", ScenarioIntegrand::Field(sine)),
        ("step", ScenarioIntegrand::Step(step)),
    ]
}

fn scenario(gen: Generator, xi: ScenarioIntegrand, grid: usize) -> ConvolutionScenario {
    ConvolutionScenario::new(two_marks(), space3(), gen, xi, 1.0, GridSpec::Count(grid), QuadConfig::for_horizon(1.0))
        .unwrap()
}

/// Brute-force `∫_0^t ∫ f dÑ` for a step integrand: every event against every cell.
fn brute_force_step(ms: &MarkSpace, path: &PoissonPath, f: &StepIntegrand, t: f64) -> Point {
    let mut acc = Point::zeros(f.dim());
    let bp = f.breakpoints();
    for (j, cells) in f.cells().iter().enumerate() {
        let (a, b) = (bp[j], bp[j + 1]);
        for (set, coef) in cells {
            let c = match coef {
                Coefficient::Fixed(v) => v.clone(),
                Coefficient::Adapted(g) => {
                    let past: Vec<Event> = path.events().iter().copied().filter(|e| e.time < a).collect();
                    g(&past)
                }
            };
            for e in path.events() {
                if e.time > a && e.time <= b.min(t) && set.contains(e.mark) {
                    acc += &c;
                }
            }
            let len = (b.min(t) - a).max(0.0);
            acc -= &c * (ms.measure(set) * len);
        }
    }
    acc
}

fn random_step(rng: &mut impl Rng, n_marks: usize, dim: usize, horizon: f64) -> StepIntegrand {
    let n_int = rng.random_range(1..=6);
    let mut bp: Vec<f64> = (0..n_int).map(|_| rng.random_range(0.0..horizon)).filter(|t| *t > 0.0).collect();
    bp.push(0.0);
    bp.sort_by(f64::total_cmp);
    bp.dedup();
    if bp.len() < 2 {
        bp.push(horizon);
    }
    let cells = (0..bp.len() - 1)
        .map(|_| {
            let group: Vec<usize> = (0..n_marks).map(|_| rng.random_range(0..3)).collect();
            (0..2)
                .filter_map(|g| {
                    let idx: Vec<usize> = (0..n_marks).filter(|&k| group[k] == g).collect();
                    if idx.is_empty() {
                        return None;
                    }
                    let v = Point::from_fn(dim, |_, _| rng.random_range(-2.0..2.0));
                    let coef = if rng.random_bool(0.3) {
                        Coefficient::Adapted(Arc::new(move |past: &[Event]| &v * (1.0 + past.len() as f64)))
                    } else {
                        Coefficient::Fixed(v)
                    };
                    Some((MarkSet::from_indices(n_marks, &idx), coef))
                })
                .collect()
        })
        .collect();
    StepIntegrand::new(dim, bp, cells).unwrap()
}

fn a1() -> (bool, String) {
    let mut worst_step = 0.0f64;
    let mut worst_field = 0.0f64;
    for i in 0..1000u64 {
        let mut r = rng::seeded(0xa1 ^ (i << 8));
        let n_marks = r.random_range(1..=4);
        let ms = MarkSpace::new((0..n_marks).map(|_| r.random_range(0.2..3.0)).collect()).unwrap();
        let horizon = r.random_range(0.5..3.0);
        let dim = r.random_range(1..=4);
        let path = prm::sample_path(&ms, horizon, &mut r).unwrap();
        let f = random_step(&mut r, n_marks, dim, horizon);
        let t = r.random_range(0.0..horizon);
        let oracle = brute_force_step(&ms, &path, &f, t);
        let got = sint::integrate_step(&ms, &path, &f, t).unwrap();
        worst_step = worst_step.max((got - &oracle).amax());
        let field = f.realize(&path, n_marks).unwrap();
        let got = sint::integrate_field(&ms, &path, &field, t, &QuadConfig::for_horizon(horizon)).unwrap();
        worst_field = worst_field.max((got - &oracle).amax());
    }
    let ok = worst_step <= 1e-12 && worst_field <= 1e-12;
    (ok, format!("max abs error integrate_step {worst_step:.2e}, integrate_field {worst_field:.2e} over 1000 pairs"))
}

fn a2() -> (bool, String) {
    let ms2 = two_marks();
    let adapted = StepIntegrand::new(
        2,
        vec![0.0, 0.25, 0.5, 1.0],
        vec![
            vec![(MarkSet::all(2), Coefficient::Fixed(pt(&[1.0, -1.0])))],
            vec![(
                MarkSet::single(2, 0),
                Coefficient::Adapted(Arc::new(|p: &[Event]| pt(&[p.len() as f64, 1.0]))),
            )],
            vec![(
                MarkSet::single(2, 1),
                Coefficient::Adapted(Arc::new(|p: &[Event]| pt(&[1.0, p.iter().filter(|e| e.mark == 0).count() as f64]))),
            )],
        ],
    )
    .unwrap();
    let xi3 = integrands();
    let field = |k: usize| match &xi3[k].1 {
        ScenarioIntegrand::Field(f) => f.clone(),
        ScenarioIntegrand::Step(s) => s.to_field(2).unwrap(),
    };
    type Case = (String, MarkSpace, Box<dyn Fn(&PoissonPath) -> FieldIntegrand>, f64);
    let mut cases: Vec<Case> = Vec::new();
    for (k, (name, _)) in xi3.iter().enumerate() {
        let f = field(k);
        cases.push((name.to_string(), ms2.clone(), Box::new(move |_| f.clone()), 1.0));
    }
    cases.push(("adapted step".into(), ms2.clone(), Box::new(move |p| adapted.realize(p, 2).unwrap()), 1.0));
    let c5 = FieldIntegrand::constant(vec![pt(&[1.0, 0.0]), pt(&[-0.5, 2.0]), pt(&[3.0, 3.0])]).unwrap();
    cases.push(("three marks".into(), MarkSpace::new(vec![5.0, 2.0, 0.1]).unwrap(), Box::new(move |_| c5.clone()), 1.0));
    let c6 = FieldIntegrand::constant(vec![pt(&[1.0])]).unwrap();
    cases.push(("scalar poisson".into(), MarkSpace::new(vec![3.0]).unwrap(), Box::new(move |_| c6.clone()), 1.0));
    let f7 = field(1);
    cases.push(("polynomial, early time".into(), ms2.clone(), Box::new(move |_| f7.clone()), 0.37));
    let f8 = FieldIntegrand::sinusoidal(vec![pt(&[0.0, 1.0])], vec![pt(&[2.0, -1.0])], 9.0).unwrap();
    cases.push(("sparse sine".into(), MarkSpace::new(vec![0.2]).unwrap(), Box::new(move |_| f8.clone()), 0.5));
    let f9 = field(2).restricted(0.2, 0.8, &MarkSet::single(2, 0));
    cases.push(("restricted sine".into(), ms2.clone(), Box::new(move |_| f9.clone()), 1.0));

    let n = 100_000usize;
    let quad = QuadConfig::for_horizon(1.0);
    let mut worst = 0.0f64;
    let mut failed = Vec::new();
    for (ci, (name, ms, make, t)) in cases.iter().enumerate() {
        let samples: Vec<Point> = (0..n)
            .map(|i| {
                let path = prm::sample_path(ms, 1.0, &mut rng::substream(0xa2 + ci as u64 * 0x1_0000_0000, i as u64)).unwrap();
                sint::integrate_field(ms, &path, &make(&path), *t, &quad).unwrap()
            })
            .collect();
        for c in 0..samples[0].len() {
            let col: Vec<f64> = samples.iter().map(|s| s[c]).collect();
            let (m, se) = stats::mean_stderr(&col);
            let z = (m / se).abs();
            worst = worst.max(z);
            if z > 4.0 {
                failed.push(format!("{name}[{c}] z={z:.2}"));
            }
        }
    }
    (failed.is_empty(), format!("10 scenarios x 1e5 paths, largest |mean|/stderr {worst:.2}; failures {failed:?}"))
}

fn a3() -> (bool, String) {
    let id = || Generator::identity(3);
    let hilbert = SmoothSpace::hilbert(3);
    let l4 = SmoothSpace::new(3, 4.0, 4.0, 2.0).unwrap();
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, xi) in integrands() {
        let scn = ConvolutionScenario::new(two_marks(), hilbert, id(), xi.clone(), 1.0, GridSpec::Count(16), QuadConfig::for_horizon(1.0))
            .unwrap();
        let cfg = ExperimentConfig::new(Arc::new(scn), name, 2.0, 20_000, 0xa3, 1.0).unwrap();
        let r = verify::ito_isometry_report(&cfg).unwrap();
        let z = (r.report.lhs_mean - r.report.rhs_mean) / r.report.lhs_stderr;
        ok &= r.hilbert_equal == Some(true);
        notes.push(format!("{name} z={z:.2}"));
        if name == "constant" {
            // Σ_k |ξ_k|² ν_k t
            let exact = 1.3125 * 1.0 + 5.0 * 0.5;
            let rel = (r.report.rhs_mean - exact).abs() / exact;
            ok &= rel <= 1e-12;
            notes.push(format!("closed-form rhs rel err {rel:.1e}"));
        }
        let scn = ConvolutionScenario::new(two_marks(), l4, id(), xi, 1.0, GridSpec::Count(16), QuadConfig::for_horizon(1.0)).unwrap();
        let cfg = ExperimentConfig::new(Arc::new(scn), name, 2.0, 10_000, 0xa3, 1.0).unwrap();
        let r1 = verify::ito_isometry_report(&cfg).unwrap().report;
        let r2 = verify::ito_isometry_report(&ExperimentConfig { n_paths: 20_000, ..cfg }).unwrap().report;
        let drift = r2.ratio_hat / r1.ratio_hat;
        ok &= r1.ratio_hat.is_finite() && r2.ratio_hat.is_finite() && (0.5..=2.0).contains(&drift);
        notes.push(format!("l4 ratio {:.4} -> {:.4}", r1.ratio_hat, r2.ratio_hat));
    }
    (ok, notes.join(", "))
}

struct Row {
    mode: Mode,
    q_prime: f64,
}

fn a4_rows(p: f64, q: f64) -> Vec<Row> {
    let grid = [0.5, p, q, 2.0 * q];
    let mut rows = Vec::new();
    for &qp in &grid {
        if qp >= q {
            rows.push(Row { mode: Mode::UpperRange, q_prime: qp });
        }
        rows.push(Row { mode: Mode::FullRange, q_prime: qp });
        if qp <= p {
            rows.push(Row { mode: Mode::CompensatorForm, q_prime: qp });
        }
    }
    rows
}

fn a4() -> (bool, String) {
    const BIG: usize = 10_000;
    const SMALL: usize = 1_000;
    let mut ok = true;
    let mut n_rows = 0;
    let mut worst_drift = 1.0f64;
    let mut worst_scale = 0.0f64;
    let mut problems = Vec::new();
    for (gname, gen) in generators() {
        for (xname, xi) in integrands() {
            let scn = Arc::new(scenario(gen.clone(), xi, 4096));
            let id = format!("{gname}/{xname}");
            let cfg = ExperimentConfig::new(scn.clone(), id.clone(), 2.0, BIG, 0xa4, 1.0).unwrap();
            let small = ExperimentConfig { n_paths: SMALL, ..cfg.clone() };
            let st: Vec<PathStats> = verify::collect_path_stats(&cfg).unwrap();
            let scaled: Vec<(f64, ExperimentConfig, Vec<PathStats>)> = [0.125, 8.0]
                .into_iter()
                .map(|c| {
                    let cc = cfg.with_scenario(Arc::new(scn.scaled(c).unwrap())).unwrap();
                    let s = verify::collect_path_stats(&cc).unwrap();
                    (c, cc, s)
                })
                .collect();
            for row in a4_rows(2.0, 3.0) {
                let rep = |c: &ExperimentConfig, s: &[PathStats]| -> InequalityReport {
                    verify::report_from_stats(&c.with_q_prime(row.q_prime).unwrap(), row.mode, s).unwrap()
                };
                let big = rep(&cfg, &st);
                let little = rep(&small, &st[..SMALL]);
                n_rows += 1;
                let drift = big.ratio_hat / little.ratio_hat;
                let spread = drift.max(1.0 / drift);
                worst_drift = worst_drift.max(spread);
                if !(big.is_finite() && little.is_finite() && spread <= 2.0) {
                    ok = false;
                    problems.push(format!("{id} {} q'={} drift {drift:.3}", row.mode.name(), row.q_prime));
                }
                for (c, cc, s) in &scaled {
                    let r = rep(cc, s);
                    let rel = (r.ratio_hat - big.ratio_hat).abs() / big.ratio_hat.abs().max(f64::MIN_POSITIVE);
                    worst_scale = worst_scale.max(rel);
                    if rel > 1e-12 {
                        ok = false;
                        problems.push(format!("{id} {} q'={} c={c} rel {rel:.1e}", row.mode.name(), row.q_prime));
                    }
                }
            }
        }
    }
    (
        ok,
        format!(
            "{n_rows} rows; worst M-drift factor {worst_drift:.3}; worst scaling rel err {worst_scale:.1e}; problems {problems:?}"
        ),
    )
}

fn a5() -> (bool, String) {
    let ms = MarkSpace::new(vec![3.0]).unwrap();
    let xi = ScenarioIntegrand::Field(FieldIntegrand::constant(vec![pt(&[1.0])]).unwrap());
    let make = |grid: usize| {
        ConvolutionScenario::new(
            ms.clone(),
            SmoothSpace::hilbert(1),
            Generator::scalar_decay(1, 1.3).unwrap(),
            xi.clone(),
            1.0,
            GridSpec::Count(grid),
            QuadConfig::for_horizon(1.0),
        )
        .unwrap()
    };
    let paths: Vec<PoissonPath> =
        (0..20).map(|i| prm::sample_path(&ms, 1.0, &mut rng::substream(0xa5, i)).unwrap()).collect();
    let fine = make(4096);
    let worst_fine = paths.iter().map(|p| fine.strong_solution_residual(p).unwrap()).fold(0.0, f64::max);
    let counts = [256, 512, 1024, 2048];
    let means: Vec<f64> = counts
        .iter()
        .map(|&n| {
            let s = make(n);
            paths.iter().map(|p| s.strong_solution_residual(p).unwrap()).sum::<f64>() / paths.len() as f64
        })
        .collect();
    let slopes: Vec<f64> = means.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let ident = ConvolutionScenario::new(
        two_marks(),
        space3(),
        Generator::identity(3),
        integrands()[1].1.clone(),
        1.0,
        GridSpec::Count(4096),
        QuadConfig::for_horizon(1.0),
    )
    .unwrap();
    let worst_ident = paths
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let p = prm::sample_path(&two_marks(), 1.0, &mut rng::substream(0xa5, 100 + i as u64)).unwrap();
            ident.strong_solution_residual(&p).unwrap()
        })
        .fold(0.0, f64::max);
    let ok = worst_fine < 1e-6 && slopes.iter().all(|s| (1.7..=2.3).contains(s)) && worst_ident <= 1e-12;
    (
        ok,
        format!(
            "residual at T/4096 {worst_fine:.2e}; slopes {:?}; identity residual {worst_ident:.1e}",
            slopes.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn certified_scenarios() -> Vec<(String, ConvolutionScenario)> {
    let xis = integrands();
    generators()
        .into_iter()
        .enumerate()
        .map(|(i, (g, gen))| {
            let (x, xi) = xis[(i + 1) % xis.len()].clone();
            (format!("{g}/{x}"), scenario(gen, xi, 4096))
        })
        .collect()
}

fn a6() -> (bool, String) {
    let mut worst_gap = 0.0f64;
    let mut worst_drift = f64::NEG_INFINITY;
    let mut ok = true;
    for (si, (name, scn)) in certified_scenarios().into_iter().enumerate() {
        for i in 0..1000u64 {
            let path = prm::sample_path(scn.mark_space(), 1.0, &mut rng::substream(0xa6 + si as u64 * 0x1_0000, i)).unwrap();
            let t = scn.ito_terms(&path, 1.0).unwrap();
            let gap = t.identity_gap().abs();
            worst_gap = worst_gap.max(gap / t.quad_tolerance);
            let scale = t.phi_u_t.abs().max(1.0);
            worst_drift = worst_drift.max(t.drift_term / scale);
            let ineq = t.phi_u_t <= t.initial + t.mart_term + t.jump_term + t.quad_tolerance;
            if gap > 10.0 * t.quad_tolerance || !ineq || t.drift_term > 1e-9 * scale {
                if ok {
                    eprintln!("A6 first failure: {name} path {i}: {t:?}");
                }
                ok = false;
            }
        }
    }
    (ok, format!("5 scenarios x 1000 paths; worst gap/tolerance {worst_gap:.3}; largest scaled drift {worst_drift:.2e}"))
}

fn sup_distance(sp: &SmoothSpace, a: &jumpconv::sint::CadlagPath, b: &jumpconv::sint::CadlagPath) -> f64 {
    assert_eq!(a.times(), b.times());
    a.values().iter().zip(b.values()).map(|(x, y)| sp.norm_of((x - y).as_slice())).fold(0.0, f64::max)
}

/// The five generator families rescaled to `‖A‖ <= 0.75`, where the first-order
/// Yosida error `~ ‖A‖/n` falls below `1e-3` at `n = 2^10`.
fn normalized_generators() -> Vec<(&'static str, Generator)> {
    let mut circulant = DMatrix::from_element(3, 3, 0.0);
    for i in 0..3 {
        circulant[(i, i)] = -0.4;
        circulant[(i, (i + 1) % 3)] = 0.4;
    }
    let sub = DMatrix::from_row_slice(3, 3, &[0.2, 0.3, 0.1, 0.1, 0.2, 0.4, 0.3, 0.1, 0.2]);
    vec![
        ("identity", Generator::identity(3)),
        ("diagonal", Generator::diagonal(vec![-0.25, -0.5, -0.75]).unwrap()),
        ("laplacian", Generator::dirichlet_laplacian(3, 0.2).unwrap()),
        ("circulant", Generator::dense(circulant).unwrap()),
        ("substochastic", Generator::dense((sub - DMatrix::identity(3, 3)) * 0.5).unwrap()),
    ]
}

/// Sup-distances `‖u_n - u‖` for `n = 2, 4, ..., 2^10`, and `sup‖u‖`.
fn yosida_distances(scn: &ConvolutionScenario, path: &PoissonPath) -> (Vec<f64>, f64) {
    let u = scn.convolution_path(path).unwrap();
    let d = (1..=10)
        .map(|k| sup_distance(scn.space(), &scn.yosida_convolution(path, (1u64 << k) as f64).unwrap(), &u))
        .collect();
    (d, u.sup_norm(scn.space()))
}

fn a7() -> (bool, String) {
    let mut ok = true;
    let mut notes = Vec::new();
    let xis = integrands();
    for (si, (gname, gen)) in normalized_generators().into_iter().enumerate() {
        let (xname, xi) = xis[(si + 1) % xis.len()].clone();
        let scn = scenario(gen, xi, 4096);
        let mut final_rel = 0.0f64;
        for i in 0..3u64 {
            let path = prm::sample_path(scn.mark_space(), 1.0, &mut rng::substream(0xa7 + si as u64 * 0x1_0000, i)).unwrap();
            let (d, sup) = yosida_distances(&scn, &path);
            let decreasing = d.windows(2).all(|w| w[1] < w[0] || (w[1] <= 1e-14 * sup && w[0] <= 1e-14 * sup));
            let last = d[9] / sup.max(f64::MIN_POSITIVE);
            final_rel = final_rel.max(last);
            if !decreasing || last >= 1e-3 {
                ok = false;
                notes.push(format!("{gname}/{xname} path {i}: {d:?} sup {sup}"));
            }
        }
        notes.push(format!("{gname}/{xname} final {final_rel:.2e}"));
    }
    // unnormalized generators: reported, not gated
    let mut raw = 0.0f64;
    for (si, (_, scn)) in certified_scenarios().into_iter().enumerate() {
        let path = prm::sample_path(scn.mark_space(), 1.0, &mut rng::substream(0xa7 + si as u64 * 0x1_0000, 0)).unwrap();
        let (d, sup) = yosida_distances(&scn, &path);
        raw = raw.max(d[9] / sup.max(f64::MIN_POSITIVE));
    }
    notes.push(format!("unnormalized set final (info) {raw:.2e}"));
    let a = 1.3;
    let scn = ConvolutionScenario::new(
        two_marks(),
        space3(),
        Generator::scalar_decay(3, a).unwrap(),
        integrands()[2].1.clone(),
        1.0,
        GridSpec::Count(1024),
        QuadConfig::for_horizon(1.0),
    )
    .unwrap();
    let mut worst = 0.0f64;
    for i in 0..5u64 {
        let path = prm::sample_path(scn.mark_space(), 1.0, &mut rng::substream(0xa7f, i)).unwrap();
        let u = scn.convolution_path(&path).unwrap();
        let sup = u.sup_norm(scn.space()).max(1.0);
        for k in 1..=10 {
            let n = (1u64 << k) as f64;
            let y = scn.yosida_convolution(&path, n).unwrap();
            let f = n / (n + a);
            let err = y
                .values()
                .iter()
                .zip(u.values())
                .map(|(yv, uv)| scn.space().norm_of((yv - uv * f).as_slice()))
                .fold(0.0, f64::max);
            worst = worst.max(err / sup);
        }
    }
    ok &= worst <= 1e-12;
    notes.push(format!("scalar decay factor rel err {worst:.1e}"));
    (ok, notes.join("; "))
}

fn a8() -> (bool, String) {
    let scn = Arc::new(scenario(generators()[1].1.clone(), integrands()[1].1.clone(), 1024));
    let cfg = ExperimentConfig::new(scn.clone(), "stopped", 2.0, 1000, 0xa8, 1.0).unwrap();
    let p = cfg.scenario.space().p;
    let free = verify::collect_path_stats(&cfg).unwrap();
    let top = free.iter().map(|s| s.total_mass).fold(0.0, f64::max);
    let lambda_hi = 2.0 * top.powf(1.0 / p) + 1.0;
    let stopped = verify::stopped_report(&cfg.clone().with_threshold(lambda_hi).unwrap()).unwrap();
    let plain = verify::report_from_stats(&cfg, Mode::FullRange, &free).unwrap();
    let bits = |r: &InequalityReport| {
        [r.lhs_mean, r.lhs_stderr, r.rhs_mean, r.rhs_stderr, r.ratio_hat, r.ratio_ci_lo, r.ratio_ci_hi].map(f64::to_bits)
    };
    let identical = bits(&stopped.report) == bits(&plain) && stopped.n_stopped == 0 && stopped.path_stats == free;

    let lambda = 1.5f64;
    let level = lambda.powf(p);
    let s = verify::stopped_report(&cfg.clone().with_threshold(lambda).unwrap()).unwrap();
    let mut mismatches = 0;
    for (i, st) in s.path_stats.iter().enumerate() {
        let path = cfg.path(i).unwrap();
        let xi = scn.integrand().realize(&path, 2).unwrap();
        let events = path.up_to(1.0);
        let masses: Vec<f64> =
            events.iter().map(|e| scn.space().norm_of(xi.eval(e.time, e.mark).as_slice()).powf(p)).collect();
        let mut tau = None;
        for k in 0..masses.len() {
            let mut sum = 0.0;
            for m in &masses[..=k] {
                sum += m;
            }
            if sum > level {
                tau = Some(events[k].time);
                break;
            }
        }
        if tau != st.tau {
            mismatches += 1;
        }
    }
    let ok = identical && mismatches == 0 && s.pre_tau_ok && s.n_stopped > 0;
    (
        ok,
        format!(
            "unstopped bit-identical {identical}; tau mismatches {mismatches}/1000 ({} stopped); pre-tau bound {}",
            s.n_stopped, s.pre_tau_ok
        ),
    )
}

fn a9() -> (bool, String) {
    let mut ok = true;
    let mut notes = Vec::new();
    let lam = 2.0;
    let scalar = ConvolutionScenario::new(
        MarkSpace::new(vec![lam]).unwrap(),
        SmoothSpace::hilbert(1),
        Generator::identity(1),
        ScenarioIntegrand::Field(FieldIntegrand::constant(vec![pt(&[1.0])]).unwrap()),
        1.0,
        GridSpec::Count(16),
        QuadConfig::for_horizon(1.0),
    )
    .unwrap();
    let cfg = ExperimentConfig::new(Arc::new(scalar), "poisson", 4.0, 100_000, 0xa9, 1.0)
        .unwrap()
        .with_moment_level(2)
        .unwrap();
    let h = verify::higher_moment_report(&cfg).unwrap();
    let exact = lam + 3.0 * lam * lam;
    for (what, (m, se)) in [("terminal", h.terminal), ("scalar terminal", h.scalar_terminal)] {
        let z = (m - exact) / se;
        ok &= z.abs() <= 4.0;
        notes.push(format!("{what} E|N-λt|^4 = {m:.4} vs {exact} (z={z:.2})"));
    }
    for (gname, gen) in generators().into_iter().skip(1).take(2) {
        let scn = Arc::new(scenario(gen, integrands()[1].1.clone(), 256));
        let base = ExperimentConfig::new(scn, gname, 4.0, 2000, 0xa9, 1.0).unwrap().with_moment_level(2).unwrap();
        let r1 = verify::higher_moment_report(&base).unwrap();
        let r2 = verify::higher_moment_report(&ExperimentConfig { n_paths: 4000, ..base }).unwrap();
        for (what, a, b) in [("vector", &r1.report, &r2.report), ("scalar", &r1.scalar, &r2.scalar)] {
            let drift = b.ratio_hat / a.ratio_hat;
            let good = a.is_finite() && b.is_finite() && (0.5..=2.0).contains(&drift);
            ok &= good;
            notes.push(format!("{gname} {what} ratio {:.4} -> {:.4}", a.ratio_hat, b.ratio_hat));
        }
    }
    (ok, notes.join("; "))
}

fn a10() -> (bool, String) {
    let mut ok = true;
    let mut notes = Vec::new();
    let qps = [0.5, 1.0, 2.0, 3.0, 6.0];
    for (i, (name, scn)) in certified_scenarios().into_iter().enumerate() {
        let cfg = ExperimentConfig::new(Arc::new(scn), name.clone(), qps[i], 1000, 0xa10, 1.0).unwrap();
        let l = verify::layer_cake_check(&cfg, 1000).unwrap();
        let combined = (l.direct_stderr.powi(2) + l.tail_stderr.powi(2)).sqrt();
        let diff = (l.direct_mean - l.tail_mean).abs();
        ok &= diff <= 4.0 * combined;
        notes.push(format!("{name} q'={} |diff|/combined stderr {:.3}", qps[i], diff / combined));
    }
    (ok, notes.join("; "))
}

const DETERMINISM_CONFIG: &str = r#"
schema = 1
seed = 11
[marks]
weights = [1.0, 0.5]
horizon = 1.0
[space]
d = 3
r = 3.0
q = 3.0
p = 2.0
[generator]
kind = "dirichlet_laplacian"
scale = 0.5
[integrand]
kind = "sinusoidal"
base = [[1.0, 0.0, 0.5], [0.0, 1.0, -1.0]]
amplitude = [[0.5, 0.5, 0.0], [1.0, 0.0, 0.5]]
omega = 5.0
[grid]
count = 256
[verify]
mode = "full_range"
q_prime = [0.5, 2.0, 3.0, 6.0]
n_paths = 1000
"#;

fn a11() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, DETERMINISM_CONFIG).unwrap();
    let run = |out: &str| {
        std::process::Command::new(env!("CARGO_BIN_EXE_jumpconv"))
            .args(["verify", "--config", cfg.to_str().unwrap(), "--out", dir.path().join(out).to_str().unwrap()])
            .env_remove("JUMPCONV_SEED")
            .status()
            .unwrap()
    };
    let ok_runs = run("a").success() && run("b").success();
    let mut same = true;
    for f in ["report.csv", "report.json", "diagnostics.json"] {
        same &= std::fs::read(dir.path().join("a").join(f)).unwrap() == std::fs::read(dir.path().join("b").join(f)).unwrap();
    }
    (ok_runs && same, format!("two verify runs exit 0: {ok_runs}; CSV/JSON byte-identical: {same}"))
}

#[test]
fn acceptance_criteria() {
    let outcomes = [
        timed("A1", "exact-oracle equivalence", 10, a1),
        timed("A2", "compensated-measure martingale property", 60, a2),
        timed("A3", "Ito-type moment bound", 60, a3),
        timed("A4", "maximal inequality matrix", 600, a4),
        timed("A5", "strong solution residual", 30, a5),
        timed("A6", "Ito decomposition", 60, a6),
        timed("A7", "Yosida scheme", 60, a7),
        timed("A8", "stopped variant", 30, a8),
        timed("A9", "higher moments", 120, a9),
        timed("A10", "layer-cake self-consistency", 60, a10),
        timed("A11", "determinism", 10, a11),
    ];
    let failed: Vec<&str> = outcomes.iter().filter(|o| !(o.ok && o.elapsed <= o.limit)).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
