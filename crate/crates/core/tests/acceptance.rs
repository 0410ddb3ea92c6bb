//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Expected constants are computed here from closed forms, not
//! taken from the library.

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use observalab::cli::report::strip_header;
use observalab::cli::{run, CommandName, RunConfig, RunOptions};
use observalab::geometry::{DomainKind, DomainSpec, QuadratureSpec};
use observalab::gram::{assemble_exponential_gram, riesz_sweep, signed_boundary_products};
use observalab::hum::{
    forward_simulate_controlled, forward_simulate_sampled, solve_control, transposition_rhs, ControlProblem,
    ModalState,
};
use observalab::operators::IdentityBench;
use observalab::sampling::{complex_gaussians, stream};
use observalab::spectral::enumerate_modes;
use observalab::visco::{
    closeness_spectrum, default_step, fit_gamma, perturbation_study, solve_frequencies, solve_visco_mode,
    study_grid, MemoryKernel, PerturbationReport, ViscoSettings,
};
use observalab::wave::{observability_experiment, TimeGrid};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    format!("error: {e}")
}

fn geometries() -> Vec<(&'static str, DomainSpec)> {
    vec![
        ("interval", DomainSpec::interval(PI).unwrap()),
        ("rectangle", DomainSpec::rectangle(PI, PI).unwrap()),
        ("disk", DomainSpec::disk(1.0).unwrap()),
    ]
}

fn rellich() -> Outcome {
    let start = Instant::now();
    let mut worst = Vec::new();
    let mut ok = true;
    for (name, d) in geometries() {
        let tol = if name == "disk" { 1e-5 } else { 1e-6 };
        let bench = IdentityBench::new(enumerate_modes(&d, 20).map_err(err)?, QuadratureSpec::default())
            .map_err(err)?;
        let reports = bench.rellich_suite(20).map_err(err)?;
        if reports.len() != 40 * 40 {
            return Err(format!("{name}: {} pairs, expected 1600", reports.len()));
        }
        let mut max_err: f64 = 0.0;
        for r in &reports {
            let (j, k) = (r.j.unwrap(), r.k.unwrap());
            let diag = if j == k {
                Some(2.0)
            } else if j == -k {
                Some(-2.0)
            } else {
                None
            };
            let e = match diag {
                Some(v) => (r.lhs - v).abs().max((r.rhs - v).abs()),
                None => (r.lhs - r.rhs).abs(),
            };
            max_err = max_err.max(e);
        }
        ok &= max_err <= tol;
        worst.push(format!("{name} {max_err:.2e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    check(ok && secs <= 60.0, format!("max |lhs-rhs|: {}; {secs:.1} s", worst.join(", ")))
}

fn quasi_orthogonality() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, d) in geometries() {
        let bench = IdentityBench::new(enumerate_modes(&d, 20).map_err(err)?, QuadratureSpec::default())
            .map_err(err)?;
        let r2 = d.radius * d.radius;
        let draws = bench.quasi_orthogonality_suite(200, 11).map_err(err)?;
        let violations = draws.iter().filter(|r| r.lhs > r.rhs + 1e-8).count();
        let scale_ok = draws.iter().all(|r| r.rhs >= 0.0 && r.rhs.is_finite());
        let anti = bench.antisymmetry_suite(15).map_err(err)?;
        let anti_max = anti.iter().map(|r| r.abs_error).fold(0.0, f64::max);
        ok &= draws.len() == 200 && violations == 0 && scale_ok && anti_max <= 1e-8;
        notes.push(format!("{name} R^2={r2:.3} violations={violations} antisym={anti_max:.1e}"));
    }
    check(ok, notes.join("; "))
}

fn riesz_bounds() -> Outcome {
    let start = Instant::now();
    let spec = QuadratureSpec::default();
    let mut ok = true;
    let mut notes = Vec::new();
    let cases = [
        (DomainSpec::interval(PI).unwrap(), 2.0 * PI, vec![5, 10, 20, 40], 4.0),
        (DomainSpec::rectangle(PI, PI).unwrap(), 2.5 * SQRT_2 * PI, vec![5, 10, 20], {
            let t = 2.5 * SQRT_2 * PI;
            2.0 * (t - SQRT_2 * PI) / (PI / 2.0)
        }),
    ];
    for (d, t, counts, c) in cases {
        let largest = *counts.iter().max().unwrap();
        let table = enumerate_modes(&d, largest).map_err(err)?;
        let reports = riesz_sweep(&table, &counts, t, spec).map_err(err)?;
        let mins: Vec<f64> = reports.iter().map(|r| r.lambda_min).collect();
        let bound_ok = mins.iter().all(|&m| m >= c - 1e-6);
        let monotone = mins.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        ok &= bound_ok && monotone;
        notes.push(format!(
            "{} c={c:.4} lambda_min={:?} monotone={monotone}",
            d.kind.label(),
            mins.iter().map(|m| format!("{m:.6}")).collect::<Vec<_>>()
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    check(ok && secs <= 300.0, format!("{}; {secs:.1} s", notes.join("; ")))
}

fn observability_cases() -> Vec<(DomainSpec, f64, f64)> {
    vec![
        (DomainSpec::interval(PI).unwrap(), 2.0 * PI, 4.0),
        (DomainSpec::rectangle(PI, PI).unwrap(), 2.5 * SQRT_2 * PI, {
            let t = 2.5 * SQRT_2 * PI;
            2.0 * (t - SQRT_2 * PI) / (PI / 2.0)
        }),
    ]
}

fn observability(flux_errors: &mut Vec<(String, f64, usize)>) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (d, t, c) in observability_cases() {
        let table = enumerate_modes(&d, 10).map_err(err)?;
        let r = observability_experiment(&table, t, 200, 3, QuadratureSpec::default()).map_err(err)?;
        let min_ratio = r.draws.iter().map(|x| x.ratio).fold(f64::INFINITY, f64::min);
        let eig_gap = (r.eigenvector_ratio - r.lambda_min).abs();
        ok &= r.draws.len() == 200 && min_ratio >= c - 1e-6 && eig_gap <= 1e-6;
        notes.push(format!(
            "{} c={c:.4} min ratio={min_ratio:.6} eigvec gap={eig_gap:.1e}",
            d.kind.label()
        ));
        flux_errors.push((d.kind.label(), r.max_flux_gram_rel_error, r.draws.len()));
    }
    check(ok, notes.join("; "))
}

fn flux_gram(flux_errors: &[(String, f64, usize)]) -> Outcome {
    let ok = !flux_errors.is_empty() && flux_errors.iter().all(|(_, e, _)| *e <= 1e-6);
    let notes: Vec<String> = flux_errors
        .iter()
        .map(|(n, e, k)| format!("{n} max rel {e:.1e} over {k} states"))
        .collect();
    check(ok, notes.join("; "))
}

fn visco_solver() -> Outcome {
    let t = 2.5 * PI;
    let mut ok = true;
    let mut notes = Vec::new();
    let zero = MemoryKernel::zero();
    for lambda in [1.0, 5.0, 20.0, 80.0] {
        let h = default_step(lambda, t);
        let sol = solve_visco_mode(lambda, &zero, t, h).map_err(err)?;
        let max_err = sol
            .samples
            .iter()
            .enumerate()
            .map(|(i, z)| (z - Complex64::new(0.0, lambda * (i as f64 * sol.step - t)).exp()).norm())
            .fold(0.0, f64::max);
        let bound = 10.0 * sol.step * sol.step * t * lambda * lambda;
        ok &= max_err <= bound;
        notes.push(format!("lambda={lambda} err={max_err:.1e}<= {bound:.1e}"));
    }
    let mut orders = Vec::new();
    for kernel in [MemoryKernel::zero(), MemoryKernel::exponential(0.5, 1.0)] {
        for lambda in [2.0, 10.0] {
            let steps = 4096;
            let sols = [1, 2, 4, 8]
                .iter()
                .map(|r| solve_visco_mode(lambda, &kernel, t, t / (steps * r) as f64))
                .collect::<Result<Vec<_>, _>>()
                .map_err(err)?;
            let diff = |a: usize, b: usize| {
                (0..=steps)
                    .map(|i| (sols[a].samples[i << a] - sols[b].samples[i << b]).norm())
                    .fold(0.0, f64::max)
            };
            let order = (diff(1, 2) / diff(2, 3)).log2();
            ok &= (1.8..=2.2).contains(&order);
            orders.push(format!("{order:.3}"));
        }
    }
    notes.push(format!("orders {}", orders.join(",")));
    let mut worst_value: f64 = 0.0;
    let mut worst_slope: f64 = 0.0;
    for kernel in [MemoryKernel::zero(), MemoryKernel::exponential(0.5, 1.0)] {
        let lambdas: Vec<f64> = (1..=20).map(f64::from).collect();
        let grid = study_grid(t, 20.0);
        for s in solve_frequencies(&lambdas, &kernel, &grid).map_err(err)? {
            let end = *s.samples.last().unwrap();
            worst_value = worst_value.max((end - 1.0).norm()).max(s.terminal_value_residual);
            worst_slope = worst_slope.max(s.terminal_slope_residual / s.lambda);
        }
    }
    ok &= worst_value <= 1e-8 && worst_slope <= 1e-8;
    notes.push(format!("terminal {worst_value:.1e}/{worst_slope:.1e}"));
    check(ok, notes.join("; "))
}

fn closeness() -> Outcome {
    let d = DomainSpec::interval(PI).unwrap();
    let t = 2.5 * 2.0 * d.radius;
    let kernel = MemoryKernel::exponential(0.5, 1.0);
    let lambdas: Vec<f64> = (5..=80).map(f64::from).collect();
    let sols = solve_frequencies(&lambdas, &kernel, &study_grid(t, 80.0)).map_err(err)?;
    let fit = fit_gamma(&sols, &kernel).map_err(err)?;
    let r = closeness_spectrum(&sols, fit.gamma).map_err(err)?;
    let alt = closeness_spectrum(&sols, fit.objective_gamma).map_err(err)?;
    check(
        r.slope <= -1.8 && r.r2 >= 0.9,
        format!(
            "gamma={:.5}{:+.5}i slope={:.3} R2={:.4} (weighted-objective gamma {:.5}{:+.5}i: slope={:.3} R2={:.3})",
            fit.gamma.re, fit.gamma.im, r.slope, r.r2, fit.objective_gamma.re, fit.objective_gamma.im, alt.slope, alt.r2
        ),
    )
}

fn interval_studies() -> Result<Vec<PerturbationReport>, String> {
    let d = DomainSpec::interval(PI).unwrap();
    let table = enumerate_modes(&d, 20).map_err(err)?;
    let settings = ViscoSettings {
        seed: 5,
        ..ViscoSettings::default()
    };
    [0.0, 0.2, 0.5]
        .into_iter()
        .map(|m0| {
            let k = if m0 == 0.0 {
                MemoryKernel::zero()
            } else {
                MemoryKernel::exponential(m0, 1.0)
            };
            perturbation_study(&table, &k, 2.5 * PI, QuadratureSpec::default(), &settings).map_err(err)
        })
        .collect()
}

fn q_monotone(r: &PerturbationReport) -> bool {
    r.q_profile
        .windows(2)
        .all(|w| w[1].cutoff > w[0].cutoff && w[1].q_hat <= w[0].q_hat * (1.0 + 1e-12) + 1e-15)
}

fn paley_wiener(studies: &[PerturbationReport]) -> Outcome {
    let (zero, default) = (&studies[0], &studies[1]);
    let default_ok = default.cutoff.is_some() && default.q_hat.is_some_and(|q| q < 1.0);
    let zero_ok = zero.q_hat.is_some_and(|q| q <= 1e-12) && zero.q_profile.iter().all(|p| p.q_hat <= 1e-12);
    let nonzero_positive = studies[1..]
        .iter()
        .flat_map(|s| s.q_profile.iter())
        .all(|p| p.q_hat > 1e-12);
    let monotone = studies.iter().all(q_monotone);
    let notes: Vec<String> = studies
        .iter()
        .map(|s| format!("{} k={:?} q={:?}", s.kernel, s.cutoff, s.q_hat.map(|q| format!("{q:.3e}"))))
        .collect();
    check(
        default_ok && zero_ok && nonzero_positive && monotone,
        format!("{}; monotone={monotone}", notes.join("; ")),
    )
}

fn damped_riesz(studies: &[PerturbationReport]) -> Outcome {
    let (zero, default) = (&studies[0], &studies[1]);
    let dr = &default.damped_riesz;
    let margin_ok = dr.lambda_min > 0.0 && dr.lambda_min >= 1e-3 * dr.lambda_max;
    let gap = zero.damped_riesz.zero_kernel_spectral_gap.unwrap_or(f64::INFINITY);
    // Extreme eigenvalues of the zero-kernel family against the undamped Gram.
    let ext_gap = (zero.damped_riesz.lambda_min - zero.damped_riesz.exponential_lambda_min)
        .abs()
        .max((zero.damped_riesz.lambda_max - zero.damped_riesz.exponential_lambda_max).abs());
    check(
        margin_ok && gap <= 1e-6 && ext_gap <= 1e-6,
        format!(
            "{}: lambda_min={:.4} lambda_max={:.4} ratio={:.3e}; zero kernel gap={gap:.1e}",
            default.kernel, dr.lambda_min, dr.lambda_max, dr.margin_ratio
        ),
    )
}

fn random_state(n: usize, seed: u64, real: bool) -> ModalState {
    let mut rng = stream(seed, 0);
    let mut u = complex_gaussians(&mut rng, n);
    let mut v = complex_gaussians(&mut rng, n);
    if real {
        u.iter_mut().chain(v.iter_mut()).for_each(|z| z.im = 0.0);
    }
    ModalState {
        position: u,
        scaled_velocity: v,
    }
}

fn hum() -> Outcome {
    let start = Instant::now();
    let d = DomainSpec::interval(PI).unwrap();
    let t = 2.0 * PI;
    let c = 4.0;
    let spec = QuadratureSpec::default();
    let table = enumerate_modes(&d, 10).map_err(err)?;
    let gram = assemble_exponential_gram(&table, t, spec).map_err(err)?;
    let rule = d.boundary_quadrature(spec).map_err(err)?;
    let space = signed_boundary_products(&table, &rule);
    let grid = TimeGrid::resolving(t, table.lambda(10), 400.0);
    let mut ok = true;
    let mut worst_steer: f64 = 0.0;
    let mut worst_bound: f64 = 0.0;
    for (seed, real) in [(1, false), (2, true), (3, false), (4, true)] {
        let problem = ControlProblem {
            horizon: t,
            initial: random_state(10, seed, real),
            target: if seed % 2 == 1 {
                ModalState::zero(10)
            } else {
                random_state(10, seed + 100, real)
            },
            real_control: real,
        };
        let b = transposition_rhs(&table, &problem).map_err(err)?;
        let b2: f64 = b.iter().map(|z| z.norm_sqr()).sum();
        let f = solve_control(&table, &problem, &gram, c, 1e-10).map_err(err)?;
        let closed = forward_simulate_controlled(&table, &problem, &f, &space).map_err(err)?;
        let sampled = forward_simulate_sampled(&table, &problem, &f, &rule, &grid).map_err(err)?;
        let steer = closed.steering_error.max(sampled.steering_error);
        let bound_ratio = f.norm_sq / (b2 / c);
        ok &= steer <= 1e-3 && f.norm_sq <= b2 / c;
        worst_steer = worst_steer.max(steer);
        worst_bound = worst_bound.max(bound_ratio);
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        ok && secs <= 60.0,
        format!("max steering {worst_steer:.1e}; max ||f||^2/(||b||^2/c) = {worst_bound:.3}; {secs:.1} s"),
    )
}

fn run_all(dir: &Path, config: &RunConfig, problem: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files = Vec::new();
    for cmd in [
        CommandName::Spectrum,
        CommandName::VerifyIdentities,
        CommandName::Riesz,
        CommandName::Observe,
        CommandName::Visco,
        CommandName::Control,
    ] {
        let options = RunOptions {
            out: Some(dir.to_path_buf()),
            problem: (cmd == CommandName::Control).then(|| problem.to_path_buf()),
            ..RunOptions::default()
        };
        let outcome = run(cmd, config.clone(), &options).map_err(err)?;
        for f in outcome.files {
            let bytes = std::fs::read(&f).map_err(err)?;
            let name = f.file_name().unwrap().to_string_lossy().into_owned();
            files.push((name, strip_header(&bytes)));
        }
    }
    Ok(files)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let mut config = RunConfig::for_domain(DomainKind::Interval { length: PI });
    config.modes = 20;
    config.horizons = Some(vec![2.0 * PI, 2.5 * PI]);
    config.riesz_counts = Some(vec![10, 20]);
    config.identity_max_index = 10;
    config.antisymmetry_max_index = 10;
    config.draws = 50;
    config.visco.c_alpha_draws = 50;
    config.seed = 42;
    let problem = serde_json::json!({
        "domain": {"kind": "interval", "length": PI},
        "modes": 10,
        "horizon": 2.0 * PI,
        "initial": random_state(10, 9, true),
        "target": ModalState::zero(10),
        "real_control": true,
    });
    let problem_path = tmp.path().join("problem.json");
    std::fs::write(&problem_path, problem.to_string()).map_err(err)?;
    let a = run_all(&tmp.path().join("a"), &config, &problem_path)?;
    let b = run_all(&tmp.path().join("b"), &config, &problem_path)?;
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    check(
        a.len() == b.len() && !a.is_empty() && differing.is_empty(),
        format!("{} report files compared, differing: {differing:?}", a.len()),
    )
}

fn main() {
    let mut flux_errors = Vec::new();
    let studies = interval_studies();
    let results: Vec<(&str, Outcome)> = vec![
        ("1 rellich identity suite", rellich()),
        ("2 quasi-orthogonality and antisymmetry", quasi_orthogonality()),
        ("3 gram lower bounds", riesz_bounds()),
        ("4 observability monte-carlo", observability(&mut flux_errors)),
        ("5 flux/gram equivalence", flux_gram(&flux_errors)),
        ("6 visco solver", visco_solver()),
        ("7 closeness decay", closeness()),
        ("8 finite-section q", studies.as_ref().map_err(Clone::clone).and_then(|s| paley_wiener(s))),
        ("9 damped riesz certificate", studies.as_ref().map_err(Clone::clone).and_then(|s| damped_riesz(s))),
        ("10 hum steering", hum()),
        ("11 determinism", determinism()),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
