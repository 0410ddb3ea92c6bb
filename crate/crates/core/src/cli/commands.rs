//! The six commands. Each writes its reports and a `<command>_summary.json`
//! into the output directory and returns whether its assertions held.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::cache::{resolve_path, Cache};
use super::config::RunConfig;
use super::lock::RunLock;
use super::report::{flag, float, opt_int, write_json, CsvTable};
use crate::error::{Error, Result};
use crate::geometry::{DomainKind, DomainSpec};
use crate::gram::{assemble_exponential_gram, observability_constant, riesz_sweep, signed_boundary_products};
use crate::hum::{
    forward_simulate_controlled, forward_simulate_sampled, solve_control, ControlProblem, ModalState,
};
use crate::operators::{IdentityBench, IdentityReport};
use crate::spectral::ModeTable;
use crate::tolerances;
use crate::visco::perturbation_study;
use crate::wave::{observability_experiment, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    Spectrum,
    VerifyIdentities,
    Riesz,
    Observe,
    Visco,
    Control,
}

impl CommandName {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandName::Spectrum => "spectrum",
            CommandName::VerifyIdentities => "verify-identities",
            CommandName::Riesz => "riesz",
            CommandName::Observe => "observe",
            CommandName::Visco => "visco",
            CommandName::Control => "control",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub strict: bool,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Problem file for `control`.
    pub problem: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub command: CommandName,
    /// All asserted checks held.
    pub pass: bool,
    /// Some configurations had `T <= 2R` and were reported only.
    pub outside_hypothesis: bool,
    pub strict: bool,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    /// 0 on success, 2 on a failed assertion (or, with `--strict`, on a
    /// configuration outside the hypothesis `T > 2R`).
    pub fn exit_code(&self) -> i32 {
        if !self.pass || (self.strict && self.outside_hypothesis) {
            2
        } else {
            0
        }
    }
}

struct Context {
    config: RunConfig,
    domain: DomainSpec,
    out: PathBuf,
    cache: Cache,
    strict: bool,
    _lock: RunLock,
}

impl Context {
    fn new(mut config: RunConfig, options: &RunOptions) -> Result<Self> {
        if let Some(seed) = options.seed {
            config.seed = seed;
        }
        if let Some(out) = &options.out {
            config.output_dir = Some(out.clone());
        }
        config.validate()?;
        let out = config.output_dir();
        let lock = RunLock::acquire(&out)?;
        let cache = Cache::open(resolve_path(config.cache_path.as_deref(), &out))?;
        Ok(Self {
            domain: config.domain_spec()?,
            config,
            out,
            cache,
            strict: options.strict,
            _lock: lock,
        })
    }

    fn table(&mut self, n: usize) -> Result<ModeTable> {
        let domain = self.domain;
        self.cache.table(&domain, n)
    }

    fn finish(
        mut self,
        command: CommandName,
        pass: bool,
        outside_hypothesis: bool,
        mut files: Vec<PathBuf>,
        details: serde_json::Value,
    ) -> Result<Outcome> {
        self.cache.save()?;
        let summary = json!({
            "command": command,
            "domain": self.config.domain,
            "modes": self.config.modes,
            "seed": self.config.seed,
            "pass": pass,
            "outside_hypothesis": outside_hypothesis,
            "details": details,
        });
        files.push(write_json(&self.out, &format!("{}_summary.json", command.as_str()), &summary)?);
        Ok(Outcome {
            command,
            pass,
            outside_hypothesis,
            strict: self.strict,
            files,
        })
    }
}

pub fn run(command: CommandName, config: RunConfig, options: &RunOptions) -> Result<Outcome> {
    let ctx = Context::new(config, options)?;
    match command {
        CommandName::Spectrum => spectrum(ctx),
        CommandName::VerifyIdentities => verify_identities(ctx),
        CommandName::Riesz => riesz(ctx),
        CommandName::Observe => observe(ctx),
        CommandName::Visco => visco(ctx),
        CommandName::Control => {
            let path = options
                .problem
                .clone()
                .ok_or_else(|| Error::Config("control needs --problem PATH".into()))?;
            control(ctx, &path)
        }
    }
}

fn spectrum(mut ctx: Context) -> Result<Outcome> {
    let table = ctx.table(ctx.config.modes)?;
    let mut csv = CsvTable::new("spectrum", "spectrum.csv", &["n", "multi_index", "lambda"]);
    for n in 1..=table.len() as i64 {
        let m = table.mode(n)?;
        csv.push(vec![n.to_string(), m.index.label(), float(m.lambda)]);
    }
    let files = vec![csv.write(&ctx.out)?];
    let details = json!({
        "lambda_first": table.lambda(1),
        "lambda_last": table.lambda(table.len() as i64),
    });
    ctx.finish(CommandName::Spectrum, true, false, files, details)
}

fn rejudge(mut reports: Vec<IdentityReport>, tolerance: Option<f64>) -> Vec<IdentityReport> {
    if let Some(t) = tolerance {
        for r in &mut reports {
            r.tolerance = t;
            r.pass = r.abs_error <= t;
        }
    }
    reports
}

fn verify_identities(mut ctx: Context) -> Result<Outcome> {
    let n = ctx.config.modes;
    let table = ctx.table(n)?;
    let bench = IdentityBench::new(table, ctx.config.quadrature)?;
    let over = ctx.config.tolerances.identity;
    let mut reports = rejudge(bench.rellich_suite(ctx.config.identity_max_index)?, over);
    reports.extend(rejudge(bench.antisymmetry_suite(ctx.config.antisymmetry_max_index)?, over));
    for k in 1..=n as i64 {
        reports.push(bench.diagonal_multiplier(k)?);
        reports.push(bench.boundary_multiplier(k)?);
    }
    reports.extend(bench.quasi_orthogonality_suite(ctx.config.draws, ctx.config.seed)?);

    let mut csv = CsvTable::new(
        "verify-identities",
        "identities.csv",
        &["check", "j", "k", "lhs", "rhs", "abs_error", "rel_error", "tolerance", "pass"],
    );
    for r in &reports {
        csv.push(vec![
            r.check.clone(),
            opt_int(r.j),
            opt_int(r.k),
            float(r.lhs),
            float(r.rhs),
            float(r.abs_error),
            float(r.rel_error),
            float(r.tolerance),
            flag(r.pass),
        ]);
    }
    let mut checks: Vec<String> = reports.iter().map(|r| r.check.clone()).collect();
    checks.sort();
    checks.dedup();
    let per_check: Vec<serde_json::Value> = checks
        .iter()
        .map(|c| {
            let rs: Vec<&IdentityReport> = reports.iter().filter(|r| &r.check == c).collect();
            json!({
                "check": c,
                "count": rs.len(),
                "failures": rs.iter().filter(|r| !r.pass).count(),
                "max_abs_error": rs.iter().map(|r| r.abs_error).fold(0.0, f64::max),
            })
        })
        .collect();
    let pass = reports.iter().all(|r| r.pass);
    let files = vec![csv.write(&ctx.out)?];
    ctx.finish(CommandName::VerifyIdentities, pass, false, files, json!({ "checks": per_check }))
}

/// Certificate consumed by `control`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RieszCertificate {
    pub domain: DomainKind,
    pub quadrature: crate::geometry::QuadratureSpec,
    pub entries: Vec<RieszEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RieszEntry {
    pub n: usize,
    pub horizon: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub c_bound: f64,
    pub pass: Option<bool>,
}

pub const RIESZ_CERTIFICATE: &str = "riesz_certificate.json";

fn riesz(mut ctx: Context) -> Result<Outcome> {
    let mut counts = ctx.config.riesz_counts();
    counts.sort_unstable();
    counts.dedup();
    let table = ctx.table(*counts.last().unwrap())?;
    let mut csv = CsvTable::new(
        "riesz",
        "riesz.csv",
        &[
            "horizon",
            "n",
            "lambda_min",
            "lambda_max",
            "c_bound",
            "margin",
            "within_hypothesis",
            "pass",
            "residual_min",
            "residual_max",
        ],
    );
    let mut entries = Vec::new();
    let mut pass = true;
    let mut outside = false;
    let mut monotone = Vec::new();
    for t in ctx.config.horizons()? {
        let reports = riesz_sweep(&table, &counts, t, ctx.config.quadrature)?;
        let mono = reports
            .windows(2)
            .all(|w| w[1].lambda_min <= w[0].lambda_min + tolerances::RIESZ_LOWER);
        monotone.push(json!({ "horizon": t, "lambda_min_non_increasing": mono }));
        pass &= mono;
        for r in &reports {
            outside |= !r.within_hypothesis;
            pass &= r.passed();
            csv.push(vec![
                float(t),
                r.n.to_string(),
                float(r.lambda_min),
                float(r.lambda_max),
                float(r.c_bound),
                float(r.margin),
                flag(r.within_hypothesis),
                r.pass.map(flag).unwrap_or_default(),
                float(r.residual_min),
                float(r.residual_max),
            ]);
            entries.push(RieszEntry {
                n: r.n,
                horizon: t,
                lambda_min: r.lambda_min,
                lambda_max: r.lambda_max,
                c_bound: r.c_bound,
                pass: r.pass.map(|p| p && mono),
            });
        }
    }
    let cert = RieszCertificate {
        domain: ctx.config.domain,
        quadrature: ctx.config.quadrature,
        entries,
    };
    let files = vec![csv.write(&ctx.out)?, write_json(&ctx.out, RIESZ_CERTIFICATE, &cert)?];
    ctx.finish(CommandName::Riesz, pass, outside, files, json!({ "monotonicity": monotone }))
}

fn observe(mut ctx: Context) -> Result<Outcome> {
    let table = ctx.table(ctx.config.modes)?;
    let slack = ctx.config.tolerances.observability_slack;
    let mut csv = CsvTable::new(
        "observe",
        "observe.csv",
        &["horizon", "draw", "energy", "flux_norm_sq", "gram_form", "ratio", "flux_gram_rel_error", "pass"],
    );
    let mut pass = true;
    let mut outside = false;
    let mut summaries = Vec::new();
    for t in ctx.config.horizons()? {
        if t <= 2.0 * ctx.domain.radius {
            outside = true;
            summaries.push(json!({ "horizon": t, "within_hypothesis": false }));
            continue;
        }
        let mut r = observability_experiment(&table, t, ctx.config.draws, ctx.config.seed, ctx.config.quadrature)?;
        if let Some(s) = slack {
            let floor = r.c_bound - s;
            for d in &mut r.draws {
                d.pass = d.ratio >= floor && d.flux_gram_rel_error <= tolerances::FLUX_GRAM_RELATIVE;
            }
            r.pass = r.draws.iter().all(|d| d.pass) && r.eigenvector_gap <= s && r.lambda_min >= floor;
        }
        pass &= r.pass;
        for d in &r.draws {
            csv.push(vec![
                float(t),
                d.draw.to_string(),
                float(d.energy),
                float(d.flux_norm_sq),
                float(d.gram_form),
                float(d.ratio),
                float(d.flux_gram_rel_error),
                flag(d.pass),
            ]);
        }
        summaries.push(json!({
            "horizon": t,
            "within_hypothesis": true,
            "c_bound": r.c_bound,
            "lambda_min": r.lambda_min,
            "lambda_max": r.lambda_max,
            "min_ratio": r.min_ratio,
            "median_ratio": r.median_ratio,
            "max_flux_gram_rel_error": r.max_flux_gram_rel_error,
            "eigenvector_ratio": r.eigenvector_ratio,
            "eigenvector_gap": r.eigenvector_gap,
            "failures": r.failures,
            "pass": r.pass,
        }));
    }
    let files = vec![csv.write(&ctx.out)?];
    ctx.finish(CommandName::Observe, pass, outside, files, json!({ "horizons": summaries }))
}

fn visco(mut ctx: Context) -> Result<Outcome> {
    let table = ctx.table(ctx.config.modes)?;
    let settings = ctx.config.visco_settings();
    let margin = ctx.config.tolerances.damped_riesz_margin;
    let mut csv = CsvTable::new(
        "visco",
        "visco_modes.csv",
        &["kernel", "horizon", "n", "lambda", "d_n", "terminal_value_residual", "terminal_slope_residual"],
    );
    let mut pass = true;
    let mut outside = false;
    let mut certificates = Vec::new();
    for t in ctx.config.horizons()? {
        if t <= 2.0 * ctx.domain.radius {
            outside = true;
            continue;
        }
        for kernel in &ctx.config.kernels {
            let mut r = perturbation_study(&table, kernel, t, ctx.config.quadrature, &settings)?;
            if let Some(m) = margin {
                r.damped_riesz.pass = r.damped_riesz.lambda_min > 0.0
                    && r.damped_riesz.margin_ratio >= m
                    && r.damped_riesz.zero_kernel_spectral_gap.is_none_or(|g| g <= tolerances::ZERO_KERNEL_SPECTRA);
            }
            let ok = r.damped_riesz.pass
                && r.q_monotone
                && r.closeness.pass != Some(false)
                && r.perturbation_condition != Some(false)
                && (!kernel.is_zero() || r.q_profile.iter().all(|p| p.q_hat <= tolerances::Q_ZERO));
            pass &= ok;
            for (i, (l, d)) in r.closeness.lambdas.iter().zip(&r.closeness.distances).enumerate() {
                csv.push(vec![
                    r.kernel.clone(),
                    float(t),
                    (i + 1).to_string(),
                    float(*l),
                    float(*d),
                    float(r.terminal_value_residuals[i]),
                    float(r.terminal_slope_residuals[i]),
                ]);
            }
            certificates.push(json!({
                "kernel": r.kernel,
                "horizon": t,
                "gamma": r.gamma,
                "gamma_objective_fit": r.gamma_fit.objective_gamma,
                "gamma_seed": r.gamma_fit.seed,
                "slope": r.closeness.slope,
                "r2": r.closeness.r2,
                "upper_slope": r.closeness.upper_slope,
                "C1_hat": r.c1,
                "C1_fit": r.closeness.c1_fit,
                "C_alpha_hat": r.c_alpha,
                "c_gamma_hat": r.c_gamma,
                "cutoff": r.cutoff,
                "J": r.excluded,
                "q_hat": r.q_hat,
                "q_profile": r.q_profile,
                "q_monotone": r.q_monotone,
                "lambda_min": r.damped_riesz.lambda_min,
                "lambda_max": r.damped_riesz.lambda_max,
                "pass_flags": {
                    "closeness": r.closeness.pass,
                    "perturbation_condition": r.perturbation_condition,
                    "riesz_margin": r.damped_riesz.pass,
                    "q_monotone": r.q_monotone,
                },
                "report": r,
                "pass": ok,
            }));
        }
    }
    let files = vec![
        csv.write(&ctx.out)?,
        write_json(&ctx.out, "visco_certificate.json", &certificates)?,
    ];
    ctx.finish(
        CommandName::Visco,
        pass,
        outside,
        files,
        json!({ "certificates": certificates.len() }),
    )
}

/// Problem file for `control`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub domain: DomainKind,
    pub modes: usize,
    pub horizon: f64,
    pub initial: ModalState,
    pub target: ModalState,
    #[serde(default)]
    pub real_control: bool,
}

fn load_certificate(out: &Path) -> Result<RieszCertificate> {
    let path = out.join(RIESZ_CERTIFICATE);
    let text = std::fs::read_to_string(&path).map_err(|_| {
        Error::Dependency(format!(
            "no Riesz certificate at {}; run `observalab riesz` with the same --out first",
            path.display()
        ))
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path, source: e })
}

fn control(mut ctx: Context, problem_path: &Path) -> Result<Outcome> {
    let text = std::fs::read_to_string(problem_path).map_err(|e| Error::io(problem_path, e))?;
    let file: ProblemFile = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: problem_path.to_path_buf(),
        source: e,
    })?;
    let domain = DomainSpec::new(file.domain).map_err(|e| Error::Config(e.to_string()))?;
    let cert = load_certificate(&ctx.out)?;
    let scale = file.horizon.abs().max(1.0);
    let entry = cert
        .entries
        .iter()
        .find(|e| cert.domain == file.domain && e.n == file.modes && (e.horizon - file.horizon).abs() <= 1e-12 * scale)
        .ok_or_else(|| {
            Error::Dependency(format!(
                "the Riesz certificate has no entry for {} with N = {} and T = {}; run `observalab riesz` for it first",
                file.domain.label(),
                file.modes,
                file.horizon
            ))
        })?;
    if entry.pass != Some(true) {
        return Err(Error::Dependency(format!(
            "the Riesz certificate for N = {} and T = {} did not pass; control needs a certified Gram",
            file.modes, file.horizon
        )));
    }
    let table = ctx.cache.table(&domain, file.modes)?;
    let problem = ControlProblem {
        horizon: file.horizon,
        initial: file.initial,
        target: file.target,
        real_control: file.real_control,
    };
    let quadrature = cert.quadrature;
    let gram = assemble_exponential_gram(&table, file.horizon, quadrature)?;
    let lower = observability_constant(&domain, file.horizon);
    let f = solve_control(&table, &problem, &gram, lower, ctx.config.control_tolerance)?;
    let rule = domain.boundary_quadrature(quadrature)?;
    let space = signed_boundary_products(&table, &rule);
    let closed = forward_simulate_controlled(&table, &problem, &f, &space)?;
    let grid = TimeGrid::resolving(file.horizon, table.lambda(file.modes as i64), 400.0);
    let sampled = forward_simulate_sampled(&table, &problem, &f, &rule, &grid)?;
    let steering = ctx.config.tolerances.steering.unwrap_or(tolerances::STEERING);
    let pass = closed.steering_error <= steering
        && sampled.steering_error <= steering
        && f.norm_sq <= f.norm_bound;
    let result = json!({
        "domain": file.domain,
        "modes": file.modes,
        "horizon": file.horizon,
        "real_control": file.real_control,
        "velocity_convention": "scaled_velocity = u_t coefficient / lambda_n",
        "control_coeffs": f.indices.iter().zip(&f.coefficients).map(|(n, a)| json!({"n": n, "a": a})).collect::<Vec<_>>(),
        "control_norm": f.norm_sq.sqrt(),
        "control_norm_sq": f.norm_sq,
        "gram_norm_sq": f.gram_norm_sq,
        "norm_bound": f.norm_bound,
        "certified_lower_bound": f.lower_bound,
        "steering_error": closed.steering_error,
        "sampled_steering_error": sampled.steering_error,
        "condition_estimate": f.condition_estimate,
        "iterations": f.iterations,
        "relative_residual": f.relative_residual,
        "realness_defect": f.realness_defect,
        "final_state": closed.final_state,
        "pass": pass,
    });
    let mut csv = CsvTable::new("control", "control_coeffs.csv", &["n", "lambda", "re_a", "im_a"]);
    for ((n, l), a) in f.indices.iter().zip(&f.lambdas).zip(&f.coefficients) {
        csv.push(vec![n.to_string(), float(*l), float(a.re), float(a.im)]);
    }
    let files = vec![write_json(&ctx.out, "control.json", &result)?, csv.write(&ctx.out)?];
    let details = json!({
        "steering_error": closed.steering_error,
        "sampled_steering_error": sampled.steering_error,
        "control_norm_sq": f.norm_sq,
        "norm_bound": f.norm_bound,
        "solve_tolerance": ctx.config.control_tolerance,
    });
    ctx.finish(CommandName::Control, pass, false, files, details)
}
