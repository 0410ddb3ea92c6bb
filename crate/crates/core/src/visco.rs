//! Visco-elastic mode amplitudes and their closeness to shifted exponentials.
//!
//! With `tau = T - t` the mode equation becomes the forward Volterra problem
//! `v'' + lambda^2 v = -lambda^2 int_0^tau M(tau - s) v(s) ds`, `v(0) = 1`,
//! `v'(0) = -i lambda`, and `z(t) = v(T - t)`. It is marched with the
//! implicit trapezoidal rule, the memory integral by the trapezoid rule; the
//! current unknown enters linearly, so each step is solved in closed form.
//!
//! The comparison exponentials are anchored at the final time,
//! `E_n(t) = exp((gamma + i lambda_n)(t - T))`, so that `M = 0` gives `z_n = E_n`
//! with `gamma = 0`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::QuadratureSpec;
use crate::gram::{
    assemble_exponential_gram, assemble_sampled_gram, signed_boundary_products, observability_constant,
    GramMatrix, SampledFamily,
};
use crate::linalg::{eigh, CMatrix};
use crate::operators::IdentityBench;
use crate::quadrature::simpson_weights;
use crate::spectral::{signed_order, ModeTable};
use crate::tolerances;
use crate::wave::TimeGrid;

/// Output samples per period of the fastest mode in a study.
pub const OUTPUT_SAMPLES_PER_PERIOD: f64 = 200.0;

const MAX_FIT_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MemoryKernel {
    /// `M(s) = m0 exp(-delta s)`.
    Exponential { m0: f64, delta: f64 },
    /// `M(s) = m0 (1 + s)^(-power)`.
    Polynomial { m0: f64, power: f64 },
    /// Uniform samples `M(i * step)`, interpolated by local cubics.
    Sampled { step: f64, values: Vec<f64> },
}

impl MemoryKernel {
    pub fn zero() -> Self {
        MemoryKernel::Exponential { m0: 0.0, delta: 1.0 }
    }

    pub fn exponential(m0: f64, delta: f64) -> Self {
        MemoryKernel::Exponential { m0, delta }
    }

    pub fn label(&self) -> String {
        match self {
            MemoryKernel::Exponential { m0, delta } => format!("exp(m0={m0},delta={delta})"),
            MemoryKernel::Polynomial { m0, power } => format!("poly(m0={m0},p={power})"),
            MemoryKernel::Sampled { step, values } => {
                format!("sampled(step={step},n={})", values.len())
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            MemoryKernel::Exponential { m0, .. } | MemoryKernel::Polynomial { m0, .. } => *m0 == 0.0,
            MemoryKernel::Sampled { values, .. } => values.iter().all(|v| *v == 0.0),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            MemoryKernel::Exponential { m0, delta } => m0 * (-delta * s).exp(),
            MemoryKernel::Polynomial { m0, power } => m0 * (1.0 + s).powf(-power),
            MemoryKernel::Sampled { step, values } => {
                let n = values.len();
                let x = s / step;
                let i = (x.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
                let mut acc = 0.0;
                for a in 0..4 {
                    let mut l = 1.0;
                    for b in 0..4 {
                        if a != b {
                            l *= (x - (i + b) as f64) / (a as f64 - b as f64);
                        }
                    }
                    acc += l * values[i + a];
                }
                acc
            }
        }
    }

    /// Parameter checks plus, for sampled kernels, coverage of `[0, T]` and a
    /// finite-difference smoothness test: the second difference quotient at
    /// spacing `h` and `2h` must agree, which fails at kinks and jumps.
    pub fn validate(&self, horizon: f64) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match self {
            MemoryKernel::Exponential { m0, delta } => {
                if !m0.is_finite() || !delta.is_finite() || *delta < 0.0 {
                    return bad(format!("exponential kernel needs finite m0 and delta >= 0, got {m0}, {delta}"));
                }
            }
            MemoryKernel::Polynomial { m0, power } => {
                if !m0.is_finite() || !power.is_finite() || *power <= 0.0 {
                    return bad(format!("polynomial kernel needs finite m0 and power > 0, got {m0}, {power}"));
                }
            }
            MemoryKernel::Sampled { step, values } => {
                if !(*step > 0.0) || values.len() < 8 || values.iter().any(|v| !v.is_finite()) {
                    return bad("sampled kernel needs a positive step and at least 8 finite values".into());
                }
                if *step * ((values.len() - 1) as f64) < horizon * (1.0 - 1e-12) {
                    return bad(format!(
                        "sampled kernel covers [0, {}] but the horizon is {horizon}",
                        step * (values.len() - 1) as f64
                    ));
                }
                let h = *step;
                let d2 = |i: usize, k: usize| {
                    (values[i + k] - 2.0 * values[i] + values[i - k]) / ((k * k) as f64 * h * h)
                };
                let scale = (2..values.len() - 2)
                    .map(|i| d2(i, 1).abs())
                    .fold(1.0, f64::max);
                for i in 2..values.len() - 2 {
                    if (d2(i, 1) - d2(i, 2)).abs() > 0.05 * scale {
                        return Err(Error::Config(format!(
                            "sampled kernel is not twice differentiable near s = {}",
                            i as f64 * h
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `||M||_{H^2(0,T)}` with derivatives by centered differences.
    pub fn h2_norm(&self, horizon: f64) -> f64 {
        let m = 2000;
        let h = horizon / m as f64;
        let e = 1e-4 * horizon;
        let w = simpson_weights(m, h);
        (0..=m)
            .map(|i| {
                let s = (i as f64 * h).clamp(e, horizon - e);
                let f = self.eval(i as f64 * h);
                let d1 = (self.eval(s + e) - self.eval(s - e)) / (2.0 * e);
                let d2 = (self.eval(s + e) - 2.0 * self.eval(s) + self.eval(s - e)) / (e * e);
                w[i] * (f * f + d1 * d1 + d2 * d2)
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// `z_n(t_i)` on a uniform grid `t_i = i * step` covering `[0, T]`.
#[derive(Debug, Clone, Serialize)]
pub struct ViscoModeSolution {
    pub lambda: f64,
    pub step: f64,
    pub samples: Vec<Complex64>,
    pub terminal_value_residual: f64,
    pub terminal_slope_residual: f64,
}

impl ViscoModeSolution {
    pub fn horizon(&self) -> f64 {
        self.step * (self.samples.len() - 1) as f64
    }

    /// The mirrored mode `z_{-n} = conj(z_n)` of a real kernel.
    pub fn mirrored(&self) -> Self {
        Self {
            lambda: -self.lambda,
            step: self.step,
            samples: self.samples.iter().map(|z| z.conj()).collect(),
            terminal_value_residual: self.terminal_value_residual,
            terminal_slope_residual: self.terminal_slope_residual,
        }
    }
}

/// March the forward Volterra problem with `steps` uniform steps on
/// `[0, T]`; returns `v(tau_i)`.
fn march(lambda: f64, kernel: &MemoryKernel, horizon: f64, steps: usize) -> Result<Vec<Complex64>> {
    let h = horizon / steps as f64;
    let l2 = lambda * lambda;
    let m0 = kernel.eval(0.0);
    let a = l2 * (1.0 + 0.5 * h * m0);
    let denom = 1.0 + 0.25 * h * h * a;
    let mut v = Vec::with_capacity(steps + 1);
    v.push(Complex64::new(1.0, 0.0));
    let mut w = Complex64::new(0.0, -lambda);
    let mut f_prev = -l2 * v[0];
    let zero = Complex64::new(0.0, 0.0);
    // Exponential kernels: P_k = sum_{j<k} M(tau_k - tau_j) v_j by recursion.
    let (decay, amplitude) = match kernel {
        MemoryKernel::Exponential { m0, delta } => (Some((-delta * h).exp()), *m0),
        _ => (None, 0.0),
    };
    let lag: Vec<f64> = if decay.is_none() {
        (0..=steps).map(|k| kernel.eval(k as f64 * h)).collect()
    } else {
        Vec::new()
    };
    let mut p = zero;
    for k in 1..=steps {
        // Memory integral without the current sample.
        let known = if let Some(e) = decay {
            p = e * (p + amplitude * v[k - 1]);
            h * (p - 0.5 * kernel.eval(k as f64 * h) * v[0])
        } else {
            let mut s = 0.5 * lag[k] * v[0];
            for j in 1..k {
                s += lag[k - j] * v[j];
            }
            h * s
        };
        let rhs = v[k - 1] + h * w + 0.25 * h * h * (f_prev - l2 * known);
        let vk = rhs / denom;
        let fk = -a * vk - l2 * known;
        w += 0.5 * h * (f_prev + fk);
        if !vk.re.is_finite() || !vk.im.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite mode amplitude at step {k} for lambda = {lambda}"
            )));
        }
        v.push(vk);
        f_prev = fk;
    }
    Ok(v)
}

fn check_step(lambda: f64, horizon: f64, h: f64) -> Result<()> {
    if lambda == 0.0 || !lambda.is_finite() {
        return Err(Error::Config(format!("mode frequency must be nonzero, got {lambda}")));
    }
    if !(horizon > 0.0) {
        return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
    }
    let limit = (horizon / 64.0).min(0.3 / lambda.abs());
    if !(h > 0.0) || h > limit * (1.0 + 1e-12) {
        return Err(Error::Resolution(format!(
            "step {h:.3e} exceeds min(T/64, 0.3/|lambda|) = {limit:.3e}"
        )));
    }
    Ok(())
}

/// Second-order solve with step at most `h`; samples on the solver grid.
pub fn solve_visco_mode(lambda: f64, kernel: &MemoryKernel, horizon: f64, h: f64) -> Result<ViscoModeSolution> {
    check_step(lambda, horizon, h)?;
    kernel.validate(horizon)?;
    let steps = (horizon / h - 1e-9).ceil().max(1.0) as usize;
    let v = march(lambda, kernel, horizon, steps)?;
    Ok(into_solution(lambda, horizon, v, 1))
}

fn into_solution(lambda: f64, horizon: f64, v: Vec<Complex64>, stride: usize) -> ViscoModeSolution {
    let w0 = Complex64::new(0.0, -lambda);
    let samples: Vec<Complex64> = v.iter().step_by(stride).rev().copied().collect();
    let out_steps = samples.len() - 1;
    ViscoModeSolution {
        lambda,
        step: horizon / out_steps as f64,
        terminal_value_residual: (v[0] - 1.0).norm(),
        // z'(T) = -v'(0), carried exactly by the initial slope.
        terminal_slope_residual: (-w0 - Complex64::new(0.0, lambda)).norm(),
        samples,
    }
}

/// Default solver step: `min(T/256, 0.01/|lambda|)`.
pub fn default_step(lambda: f64, horizon: f64) -> f64 {
    (horizon / 256.0).min(0.01 / lambda.abs())
}

/// Samples on `grid` from three solves at `h`, `h/2`, `h/4`, combined by
/// two rounds of Richardson extrapolation (the scheme is symmetric, so its
/// error expands in even powers of `h`). `h` is the largest divisor of the
/// output step not above [`default_step`].
pub fn solve_on_grid(lambda: f64, kernel: &MemoryKernel, grid: &TimeGrid) -> Result<ViscoModeSolution> {
    let horizon = grid.horizon;
    let target = default_step(lambda, horizon);
    check_step(lambda, horizon, target)?;
    kernel.validate(horizon)?;
    let stride = (grid.step() / target).ceil().max(1.0) as usize;
    let levels = [1, 2, 4]
        .iter()
        .map(|r| march(lambda, kernel, horizon, r * grid.intervals * stride))
        .collect::<Result<Vec<_>>>()?;
    let v: Vec<Complex64> = (0..=grid.intervals)
        .map(|i| {
            let [c, m, f] = [0, 1, 2].map(|l| levels[l][(1 << l) * stride * i]);
            let r1 = (4.0 * m - c) / 3.0;
            let r2 = (4.0 * f - m) / 3.0;
            (16.0 * r2 - r1) / 15.0
        })
        .collect();
    Ok(into_solution(lambda, horizon, v, 1))
}

/// Solves for every positive mode of a table on a common grid.
pub fn solve_table(table: &ModeTable, kernel: &MemoryKernel, grid: &TimeGrid) -> Result<Vec<ViscoModeSolution>> {
    let lambdas: Vec<f64> = (1..=table.len() as i64).map(|n| table.lambda(n)).collect();
    solve_frequencies(&lambdas, kernel, grid)
}

pub fn solve_frequencies(lambdas: &[f64], kernel: &MemoryKernel, grid: &TimeGrid) -> Result<Vec<ViscoModeSolution>> {
    lambdas
        .par_iter()
        .map(|&l| solve_on_grid(l, kernel, grid))
        .collect()
}

/// Common output grid resolving `lambda_max`.
pub fn study_grid(horizon: f64, lambda_max: f64) -> TimeGrid {
    TimeGrid::resolving(horizon, lambda_max, OUTPUT_SAMPLES_PER_PERIOD)
}

/// `E(t) = exp((gamma + i lambda)(t - T))`.
pub fn comparison(gamma: Complex64, lambda: f64, t: f64, horizon: f64) -> Complex64 {
    ((gamma + Complex64::new(0.0, lambda)) * (t - horizon)).exp()
}

/// `d(gamma) = int_0^T |z - E|^2 dt` by Simpson.
pub fn distance(sol: &ViscoModeSolution, gamma: Complex64) -> f64 {
    let m = sol.samples.len() - 1;
    let w = simpson_weights(m, sol.step);
    let horizon = sol.horizon();
    sol.samples
        .iter()
        .enumerate()
        .map(|(i, z)| w[i] * (z - comparison(gamma, sol.lambda, i as f64 * sol.step, horizon)).norm_sqr())
        .sum()
}

/// Damped Gauss-Newton for the rate `gamma_n` that best matches one mode.
pub fn fit_mode_rate(sol: &ViscoModeSolution, seed: Complex64) -> Result<(Complex64, usize)> {
    weighted_rate_fit(std::slice::from_ref(sol), &[1.0], seed)
}

/// `sum_n weight_n d_n(gamma)`.
pub fn weighted_distance(solutions: &[ViscoModeSolution], weights: &[f64], gamma: Complex64) -> f64 {
    solutions
        .iter()
        .zip(weights)
        .map(|(s, w)| w * distance(s, gamma))
        .sum()
}

/// Damped Gauss-Newton (Levenberg-Marquardt) on `sum_n weight_n d_n(gamma)`.
pub fn weighted_rate_fit(
    solutions: &[ViscoModeSolution],
    weights: &[f64],
    seed: Complex64,
) -> Result<(Complex64, usize)> {
    let mut g = seed;
    let mut mu = 1e-3;
    let mut current = weighted_distance(solutions, weights, g);
    for it in 1..=MAX_FIT_ITERATIONS {
        // r = z - E, dr/dRe = -(t - T) E, dr/dIm = -i (t - T) E.
        let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
        for (sol, weight) in solutions.iter().zip(weights) {
            let w = simpson_weights(sol.samples.len() - 1, sol.step);
            let horizon = sol.horizon();
            for (i, z) in sol.samples.iter().enumerate() {
                let t = i as f64 * sol.step;
                let e = comparison(g, sol.lambda, t, horizon);
                let r = z - e;
                let d0 = -(t - horizon) * e;
                let cols = [d0, Complex64::i() * d0];
                let wi = weight * w[i];
                for a in 0..2 {
                    jtr[a] += wi * (cols[a].conj() * r).re;
                    for b in 0..2 {
                        jtj[a][b] += wi * (cols[a].conj() * cols[b]).re;
                    }
                }
            }
        }
        let mut accepted = false;
        for _ in 0..30 {
            let a00 = jtj[0][0] * (1.0 + mu);
            let a11 = jtj[1][1] * (1.0 + mu);
            let det = a00 * a11 - jtj[0][1] * jtj[1][0];
            let dx = -(a11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
            let dy = -(a00 * jtr[1] - jtj[1][0] * jtr[0]) / det;
            let trial = g + Complex64::new(dx, dy);
            let value = weighted_distance(solutions, weights, trial);
            if value <= current {
                let moved = dx.hypot(dy);
                g = trial;
                current = value;
                mu = (mu * 0.3).max(1e-12);
                accepted = true;
                if moved <= 1e-12 * (1.0 + g.norm()) {
                    return Ok((g, it));
                }
                break;
            }
            mu *= 10.0;
        }
        if !accepted {
            // No descent direction left: at a minimum to working precision.
            return Ok((g, it));
        }
    }
    Err(Error::Numerical(format!(
        "rate fit did not converge in {MAX_FIT_ITERATIONS} iterations (objective {current:.3e}, gamma = {g})"
    )))
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaFit {
    /// Large-frequency limit of the per-mode rates; used downstream.
    pub gamma: Complex64,
    /// Minimizer of `sum lambda_n^2 d_n(gamma)`.
    pub objective_gamma: Complex64,
    pub seed: Complex64,
    pub per_mode: Vec<(f64, Complex64)>,
    /// `sum lambda_n^2 d_n` at `objective_gamma`, `gamma` and the seed.
    pub objective: f64,
    pub asymptotic_objective: f64,
    pub seed_objective: f64,
    pub iterations: usize,
}

/// Two rate estimates from the seed `-M(0)/2`.
///
/// `objective_gamma` minimizes `sum lambda_n^2 d_n(gamma)` by damped
/// Gauss-Newton. `gamma` fits one rate per mode and extrapolates
/// `gamma_n = gamma + kappa/lambda + mu/lambda^2` to `lambda -> infinity`;
/// a single global minimizer can trade a small imaginary drift against the
/// low modes, which flattens the decay of `d_n` at the top of the range.
pub fn fit_gamma(solutions: &[ViscoModeSolution], kernel: &MemoryKernel) -> Result<GammaFit> {
    if solutions.len() < 5 {
        return Err(Error::Config(format!(
            "gamma fit needs at least 5 modes, got {}",
            solutions.len()
        )));
    }
    let lo = solutions.iter().map(|s| s.lambda.abs()).fold(f64::INFINITY, f64::min);
    let hi = solutions.iter().map(|s| s.lambda.abs()).fold(0.0, f64::max);
    if hi < 4.0 * lo * (1.0 - 1e-12) {
        return Err(Error::Config(format!(
            "gamma fit needs a 4x frequency span, got [{lo}, {hi}]"
        )));
    }
    let seed = Complex64::new(-0.5 * kernel.eval(0.0), 0.0);
    let weights: Vec<f64> = solutions.iter().map(|s| s.lambda * s.lambda).collect();
    let (objective_gamma, iterations) = weighted_rate_fit(solutions, &weights, seed)?;
    let per_mode = solutions
        .par_iter()
        .map(|s| fit_mode_rate(s, seed).map(|(g, _)| (s.lambda, g)))
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = per_mode.iter().map(|(l, _)| 1.0 / l.abs()).collect();
    let re: Vec<f64> = per_mode.iter().map(|(_, g)| g.re).collect();
    let im: Vec<f64> = per_mode.iter().map(|(_, g)| g.im).collect();
    let gamma = Complex64::new(quadratic_intercept(&x, &re), quadratic_intercept(&x, &im));
    Ok(GammaFit {
        gamma,
        objective_gamma,
        seed,
        objective: weighted_distance(solutions, &weights, objective_gamma),
        asymptotic_objective: weighted_distance(solutions, &weights, gamma),
        seed_objective: weighted_distance(solutions, &weights, seed),
        per_mode,
        iterations,
    })
}

/// Intercept of the least-squares fit `y = c0 + c1 x + c2 x^2`.
fn quadratic_intercept(x: &[f64], y: &[f64]) -> f64 {
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        let p = [1.0, xi, xi * xi];
        for r in 0..3 {
            b[r] += p[r] * yi;
            for c in 0..3 {
                a[r][c] += p[r] * p[c];
            }
        }
    }
    // Gaussian elimination with partial pivoting.
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..3 {
            let f = a[r][col] / a[col][col];
            for c in col..3 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut sol = [0.0f64; 3];
    for r in (0..3).rev() {
        let mut s = b[r];
        for c in r + 1..3 {
            s -= a[r][c] * sol[c];
        }
        sol[r] = s / a[r][r];
    }
    sol[0]
}

/// Least-squares line `y = slope x + intercept` with its `R^2`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - slope * a - intercept).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope, intercept, r2)
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosenessReport {
    pub gamma: Complex64,
    pub lambdas: Vec<f64>,
    pub distances: Vec<f64>,
    /// `log d_n` against `log lambda_n` over all modes.
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Same fit over the upper half of the frequency range.
    pub upper_slope: f64,
    pub upper_r2: f64,
    /// `exp(intercept)`, the constant of the fitted power law.
    pub c1_fit: f64,
    /// `max lambda_n^2 d_n`.
    pub c1_sup: f64,
    /// All distances at scheme-error level; slopes are not meaningful.
    pub degenerate: bool,
    pub pass: Option<bool>,
}

pub fn closeness_spectrum(solutions: &[ViscoModeSolution], gamma: Complex64) -> Result<ClosenessReport> {
    if solutions.len() < 5 {
        return Err(Error::Config(format!(
            "closeness fit needs at least 5 modes, got {}",
            solutions.len()
        )));
    }
    let step = solutions[0].step;
    let len = solutions[0].samples.len();
    if solutions.iter().any(|s| s.samples.len() != len || (s.step - step).abs() > 1e-15 * step) {
        return Err(Error::Config("closeness fit needs solutions on one grid".into()));
    }
    let lambdas: Vec<f64> = solutions.iter().map(|s| s.lambda.abs()).collect();
    let distances: Vec<f64> = solutions.iter().map(|s| distance(s, gamma)).collect();
    let c1_sup = lambdas
        .iter()
        .zip(&distances)
        .map(|(l, d)| l * l * d)
        .fold(0.0, f64::max);
    let horizon = solutions[0].horizon();
    let degenerate = distances.iter().all(|d| *d <= 1e-14 * horizon);
    let (slope, intercept, r2, upper_slope, upper_r2) = if degenerate {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    } else {
        let lx: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
        let ly: Vec<f64> = distances.iter().map(|d| d.max(f64::MIN_POSITIVE).ln()).collect();
        let (s, b, r2) = linear_fit(&lx, &ly);
        let mid = 0.5 * (lambdas[0].min(*lambdas.last().unwrap()) + lambdas.iter().cloned().fold(0.0, f64::max));
        let (ux, uy): (Vec<f64>, Vec<f64>) = lx
            .iter()
            .zip(&ly)
            .zip(&lambdas)
            .filter(|(_, l)| **l >= mid)
            .map(|((x, y), _)| (*x, *y))
            .unzip();
        let (us, _, ur2) = if ux.len() >= 3 {
            linear_fit(&ux, &uy)
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        (s, b, r2, us, ur2)
    };
    let pass = (!degenerate).then(|| upper_slope <= tolerances::CLOSENESS_SLOPE);
    Ok(ClosenessReport {
        gamma,
        c1_fit: intercept.exp(),
        lambdas,
        distances,
        slope,
        intercept,
        r2,
        upper_slope,
        upper_r2,
        c1_sup,
        degenerate,
        pass,
    })
}

/// Sampled traces of the signed family `{z_n}` (mirrors are conjugates).
pub fn signed_family(solutions: &[ViscoModeSolution]) -> SampledFamily {
    let mut samples = Vec::with_capacity(2 * solutions.len());
    for s in solutions {
        samples.push(s.samples.clone());
        samples.push(s.mirrored().samples);
    }
    SampledFamily {
        step: solutions[0].step,
        samples,
        lambda_max: solutions.iter().map(|s| s.lambda.abs()).fold(0.0, f64::max),
    }
}

/// Sampled comparison exponentials `E_n` for the signed family.
pub fn comparison_family(solutions: &[ViscoModeSolution], gamma: Complex64) -> SampledFamily {
    let horizon = solutions[0].horizon();
    let step = solutions[0].step;
    let m = solutions[0].samples.len();
    let mut samples = Vec::with_capacity(2 * solutions.len());
    for s in solutions {
        for l in [s.lambda, -s.lambda] {
            samples.push(
                (0..m)
                    .map(|i| comparison(gamma, l, i as f64 * step, horizon))
                    .collect(),
            );
        }
    }
    SampledFamily {
        step,
        samples,
        lambda_max: solutions.iter().map(|s| s.lambda.abs()).fold(0.0, f64::max),
    }
}

pub fn difference_family(z: &SampledFamily, e: &SampledFamily) -> SampledFamily {
    SampledFamily {
        step: z.step,
        samples: z
            .samples
            .iter()
            .zip(&e.samples)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect(),
        lambda_max: z.lambda_max,
    }
}

/// Finite-section Paley-Wiener quantity for the excluded set
/// `J = {|n| < cutoff}`: the largest generalized eigenvalue of
/// `a^H D_J a / a^H E a`.
pub struct PaleyWiener {
    difference: CMatrix,
    /// `E^{-1/2}`.
    inv_sqrt: CMatrix,
    indices: Vec<i64>,
}

impl PaleyWiener {
    pub fn new(difference: &GramMatrix, exponential: &GramMatrix) -> Result<Self> {
        let e = eigh(&exponential.matrix, tolerances::HERMITIAN)?;
        let trace: f64 = e.values.iter().sum();
        let floor = tolerances::ILL_POSED_FLOOR * trace;
        if e.min() < floor {
            return Err(Error::IllPosed(format!(
                "comparison Gram is numerically singular: eigenvalue {:.3e} below {floor:.3e}",
                e.min()
            )));
        }
        let n = exponential.order();
        let mut inv_sqrt = CMatrix::zeros(n, n);
        for k in 0..n {
            let s = 1.0 / e.values[k].sqrt();
            for i in 0..n {
                for j in 0..n {
                    inv_sqrt[(i, j)] += s * e.vectors[(i, k)] * e.vectors[(j, k)].conj();
                }
            }
        }
        Ok(Self {
            difference: difference.matrix.clone(),
            inv_sqrt,
            indices: exponential.indices.clone(),
        })
    }

    /// `q` with all `|n| < cutoff` excluded; `cutoff = 1` excludes nothing.
    /// The quotient uses the same form convention as the Gram matrices, so
    /// the transpose of each matrix enters; the spectrum is unchanged.
    pub fn q(&self, cutoff: usize) -> Result<f64> {
        let n = self.indices.len();
        let keep: Vec<bool> = self.indices.iter().map(|i| i.unsigned_abs() as usize >= cutoff).collect();
        let d = CMatrix::from_fn(n, n, |i, j| {
            if keep[i] && keep[j] {
                self.difference[(i, j)]
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let s = self.inv_sqrt.mul(&d).mul(&self.inv_sqrt);
        let s = CMatrix::from_fn(n, n, |i, j| 0.5 * (s[(i, j)] + s[(j, i)].conj()));
        let e = eigh(&s, 1e-8)?;
        Ok(e.max().max(0.0))
    }
}

pub fn paley_wiener_q(difference: &GramMatrix, exponential: &GramMatrix, cutoff: usize) -> Result<f64> {
    PaleyWiener::new(difference, exponential)?.q(cutoff)
}

#[derive(Debug, Clone, Serialize)]
pub struct QPoint {
    pub cutoff: usize,
    pub excluded: Vec<i64>,
    pub q_hat: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationReport {
    pub kernel: String,
    pub n: usize,
    pub horizon: f64,
    pub gamma: Complex64,
    pub gamma_fit: GammaFit,
    pub closeness: ClosenessReport,
    /// `|z_n(T) - 1|` and `|z_n'(T) - i lambda_n|` per positive mode.
    pub terminal_value_residuals: Vec<f64>,
    pub terminal_slope_residuals: Vec<f64>,
    pub c_alpha: f64,
    pub c1: f64,
    pub c_bound: f64,
    pub c_gamma: f64,
    /// Upper factor `max(1, exp(-2 Re(gamma) T))` of the shifted system.
    pub upper_factor: f64,
    /// Smallest `k` with `C_alpha C_1 / (c_gamma lambda_k) < 1`, if any
    /// retained mode satisfies it.
    pub cutoff: Option<usize>,
    pub excluded: Vec<i64>,
    pub q_hat: Option<f64>,
    pub q_profile: Vec<QPoint>,
    pub q_monotone: bool,
    pub perturbation_condition: Option<bool>,
    pub damped_riesz: DampedRieszReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct DampedRieszReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub margin_ratio: f64,
    /// Exponential-system bounds scaled by the shift factors, reported only.
    pub reference_lower: f64,
    pub reference_upper: f64,
    pub exponential_lambda_min: f64,
    pub exponential_lambda_max: f64,
    /// Largest eigenvalue gap to the undamped Gram when the kernel is zero.
    pub zero_kernel_spectral_gap: Option<f64>,
    pub pass: bool,
}

/// Settings of a visco study.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViscoSettings {
    /// Modes with `lambda >= fit_min_lambda` enter the rate fit.
    pub fit_min_lambda: f64,
    /// Random draws for the boundary-trace constant.
    pub c_alpha_draws: usize,
    pub seed: u64,
}

impl Default for ViscoSettings {
    fn default() -> Self {
        Self {
            fit_min_lambda: 5.0,
            c_alpha_draws: 200,
            seed: 0,
        }
    }
}

/// Sampled Gram of `{z_n psi_n}` and its Riesz certificate.
pub fn damped_riesz_certificate(
    table: &ModeTable,
    solutions: &[ViscoModeSolution],
    kernel: &MemoryKernel,
    gamma: Complex64,
    spec: QuadratureSpec,
) -> Result<(DampedRieszReport, GramMatrix, Vec<Vec<f64>>)> {
    let domain = table.domain;
    let horizon = solutions[0].horizon();
    if horizon <= 2.0 * domain.radius {
        return Err(Error::Precondition(format!(
            "visco certificate needs T > 2R = {}",
            2.0 * domain.radius
        )));
    }
    let rule = domain.boundary_quadrature(spec)?;
    let space = signed_boundary_products(table, &rule);
    let z = signed_family(solutions);
    let g = assemble_sampled_gram(&z, &space)?;
    let e = g.spectrum()?;
    let exp_gram = assemble_exponential_gram(table, horizon, spec)?;
    let ex = exp_gram.spectrum()?;
    let shift = (-2.0 * gamma.re * horizon).exp();
    let zero_kernel_spectral_gap = kernel.is_zero().then(|| {
        e.values
            .iter()
            .zip(&ex.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    });
    let margin_ratio = e.min() / e.max();
    let pass = e.min() > 0.0
        && e.max().is_finite()
        && e.min() >= tolerances::DAMPED_RIESZ_MARGIN * e.max()
        && zero_kernel_spectral_gap.is_none_or(|gap| gap <= tolerances::ZERO_KERNEL_SPECTRA);
    Ok((
        DampedRieszReport {
            lambda_min: e.min(),
            lambda_max: e.max(),
            margin_ratio,
            reference_lower: ex.min() * shift.min(1.0),
            reference_upper: ex.max() * shift.max(1.0),
            exponential_lambda_min: ex.min(),
            exponential_lambda_max: ex.max(),
            zero_kernel_spectral_gap,
            pass,
        },
        g,
        space,
    ))
}

/// Full pipeline for one kernel: mode solves, rate fit, closeness, the
/// proof-guided cutoff, finite-section `q` and the Riesz certificate.
pub fn perturbation_study(
    table: &ModeTable,
    kernel: &MemoryKernel,
    horizon: f64,
    spec: QuadratureSpec,
    settings: &ViscoSettings,
) -> Result<PerturbationReport> {
    let domain = table.domain;
    if horizon <= 2.0 * domain.radius {
        return Err(Error::Precondition(format!(
            "visco study needs T > 2R = {}, got {horizon}",
            2.0 * domain.radius
        )));
    }
    kernel.validate(horizon)?;
    let n = table.len();
    let lmax = table.lambda(n as i64);
    let grid = study_grid(horizon, lmax);
    let solutions = solve_table(table, kernel, &grid)?;

    let fit_set: Vec<ViscoModeSolution> = solutions
        .iter()
        .filter(|s| s.lambda >= settings.fit_min_lambda)
        .cloned()
        .collect();
    let fit = if kernel.is_zero() {
        // z_n is the undamped exponential itself: nothing to fit.
        let zero = Complex64::new(0.0, 0.0);
        GammaFit {
            gamma: zero,
            objective_gamma: zero,
            seed: zero,
            per_mode: Vec::new(),
            objective: 0.0,
            asymptotic_objective: 0.0,
            seed_objective: 0.0,
            iterations: 0,
        }
    } else {
        fit_gamma(&fit_set, kernel)?
    };
    let gamma = fit.gamma;
    let closeness = closeness_spectrum(&solutions, gamma)?;

    let bench = IdentityBench::new(table.clone(), spec)?;
    let c_alpha = bench.psib_supremum(settings.c_alpha_draws, settings.seed)?;
    let c1 = closeness.c1_sup;
    let c_bound = observability_constant(&domain, horizon);
    let shift = (-2.0 * gamma.re * horizon).exp();
    let c_gamma = c_bound * shift.min(1.0);
    let cutoff = (1..=n).find(|&k| c_alpha * c1 / (c_gamma * table.lambda(k as i64)) < 1.0);

    let (damped_riesz, _, space) = damped_riesz_certificate(table, &solutions, kernel, gamma, spec)?;
    let z = signed_family(&solutions);
    let e = comparison_family(&solutions, gamma);
    let d = difference_family(&z, &e);
    let e_gram = assemble_sampled_gram(&e, &space)?;
    let d_gram = assemble_sampled_gram(&d, &space)?;
    let pw = PaleyWiener::new(&d_gram, &e_gram)?;
    let q_profile = (1..=n)
        .into_par_iter()
        .map(|k| {
            Ok(QPoint {
                cutoff: k,
                excluded: signed_order(k - 1),
                q_hat: pw.q(k)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let q_monotone = q_profile
        .windows(2)
        .all(|w| w[1].q_hat <= w[0].q_hat * (1.0 + 1e-9) + 1e-14);
    let q_hat = cutoff.map(|k| q_profile[k - 1].q_hat);
    Ok(PerturbationReport {
        kernel: kernel.label(),
        n,
        horizon,
        gamma,
        gamma_fit: fit,
        closeness,
        terminal_value_residuals: solutions.iter().map(|s| s.terminal_value_residual).collect(),
        terminal_slope_residuals: solutions.iter().map(|s| s.terminal_slope_residual).collect(),
        c_alpha,
        c1,
        c_bound,
        c_gamma,
        upper_factor: shift.max(1.0),
        excluded: cutoff.map(|k| signed_order(k - 1)).unwrap_or_default(),
        perturbation_condition: q_hat.map(|q| q < 1.0),
        cutoff,
        q_hat,
        q_profile,
        q_monotone,
        damped_riesz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;
    use crate::spectral::enumerate_modes;
    use std::f64::consts::PI;

    #[test]
    fn zero_kernel_is_a_pure_exponential() {
        let (lambda, horizon) = (5.0, 4.0);
        let h = default_step(lambda, horizon);
        let sol = solve_visco_mode(lambda, &MemoryKernel::zero(), horizon, 0.01).unwrap();
        let err = sol
            .samples
            .iter()
            .enumerate()
            .map(|(i, z)| (z - comparison(Complex64::new(0.0, 0.0), lambda, i as f64 * sol.step, horizon)).norm())
            .fold(0.0, f64::max);
        assert!(err <= 10.0 * sol.step * sol.step * horizon * lambda * lambda);
        assert!(sol.terminal_value_residual <= 1e-10);
        assert!(sol.terminal_slope_residual <= 1e-8 * lambda);
        assert!(h <= 0.01 / lambda + 1e-15);
    }

    #[test]
    fn step_precondition() {
        assert!(matches!(
            solve_visco_mode(10.0, &MemoryKernel::zero(), 4.0, 0.05),
            Err(Error::Resolution(_))
        ));
        assert!(matches!(
            solve_visco_mode(0.0, &MemoryKernel::zero(), 4.0, 0.01),
            Err(Error::Config(_))
        ));
    }

    fn order(lambda: f64, kernel: &MemoryKernel, horizon: f64) -> f64 {
        let h = (horizon / 256.0).min(0.25 / lambda);
        let a = solve_visco_mode(lambda, kernel, horizon, h).unwrap();
        let b = solve_visco_mode(lambda, kernel, horizon, a.step / 2.0).unwrap();
        let c = solve_visco_mode(lambda, kernel, horizon, a.step / 4.0).unwrap();
        let e1 = (0..a.samples.len())
            .map(|i| (a.samples[i] - b.samples[2 * i]).norm())
            .fold(0.0, f64::max);
        let e2 = (0..a.samples.len())
            .map(|i| (b.samples[2 * i] - c.samples[4 * i]).norm())
            .fold(0.0, f64::max);
        (e1 / e2).log2()
    }

    #[test]
    fn second_order_convergence() {
        for kernel in [
            MemoryKernel::zero(),
            MemoryKernel::exponential(0.4, 1.0),
            MemoryKernel::Polynomial { m0: 0.5, power: 2.0 },
        ] {
            for lambda in [1.0, 5.0, 12.0] {
                let p = order(lambda, &kernel, 4.0);
                assert!((1.8..=2.2).contains(&p), "{} lambda={lambda} order={p}", kernel.label());
            }
        }
    }

    #[test]
    fn exponential_recursion_matches_direct_memory() {
        let k = MemoryKernel::exponential(0.4, 1.0);
        let steps = 400;
        let fast = march(5.0, &k, 4.0, steps).unwrap();
        let sampled = MemoryKernel::Sampled {
            step: 4.0 / steps as f64,
            values: (0..=steps).map(|i| k.eval(i as f64 * 4.0 / steps as f64)).collect(),
        };
        let slow = march(5.0, &sampled, 4.0, steps).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn sampled_kernel_smoothness() {
        let smooth = MemoryKernel::Sampled {
            step: 0.01,
            values: (0..=500).map(|i| (-(i as f64) * 0.01).exp()).collect(),
        };
        smooth.validate(5.0).unwrap();
        let kink = MemoryKernel::Sampled {
            step: 0.01,
            values: (0..=500).map(|i| (i as f64 * 0.01 - 2.0).abs()).collect(),
        };
        assert!(matches!(kink.validate(5.0), Err(Error::Config(_))));
        assert!(smooth.validate(6.0).is_err());
        assert!(MemoryKernel::exponential(0.5, 1.0).h2_norm(4.0).is_finite());
    }

    #[test]
    fn envelope_decays_for_exponential_kernel() {
        let (lambda, horizon) = (5.0, 4.0);
        let k = MemoryKernel::exponential(0.4, 1.0);
        let grid = study_grid(horizon, lambda);
        let sol = solve_on_grid(lambda, &k, &grid).unwrap();
        let (g, _) = fit_mode_rate(&sol, Complex64::new(-0.2, 0.0)).unwrap();
        assert!(g.re < 0.0);
        // |z(t)| grows backwards from T like exp(Re(gamma) (t - T)).
        let x: Vec<f64> = (0..sol.samples.len()).map(|i| i as f64 * sol.step - horizon).collect();
        let y: Vec<f64> = sol.samples.iter().map(|z| z.norm().ln()).collect();
        let (slope, _, _) = linear_fit(&x, &y);
        assert!((slope - g.re).abs() < 0.05, "envelope {slope} vs fitted {}", g.re);
    }

    #[test]
    fn richardson_beats_raw() {
        let (lambda, horizon) = (20.0, 4.0);
        let exact = |sol: &ViscoModeSolution| {
            sol.samples
                .iter()
                .enumerate()
                .map(|(i, z)| (z - comparison(Complex64::new(0.0, 0.0), lambda, i as f64 * sol.step, horizon)).norm())
                .fold(0.0, f64::max)
        };
        let grid = study_grid(horizon, lambda);
        let extrapolated = exact(&solve_on_grid(lambda, &MemoryKernel::zero(), &grid).unwrap());
        let raw = exact(&solve_visco_mode(lambda, &MemoryKernel::zero(), horizon, default_step(lambda, horizon)).unwrap());
        assert!(extrapolated < 1e-3 * raw, "{extrapolated} vs {raw}");
    }

    #[test]
    fn gamma_fit_properties() {
        let horizon = 4.0;
        let lambdas: Vec<f64> = (5..=20).map(f64::from).collect();
        let grid = study_grid(horizon, 20.0);
        let zero = solve_frequencies(&lambdas, &MemoryKernel::zero(), &grid).unwrap();
        let fit = fit_gamma(&zero, &MemoryKernel::zero()).unwrap();
        assert!(fit.objective_gamma.norm() < 1e-8, "{}", fit.objective_gamma);
        assert!(fit.gamma.norm() < 1e-6);
        let k = MemoryKernel::exponential(0.5, 1.0);
        let sols = solve_frequencies(&lambdas, &k, &grid).unwrap();
        let fit = fit_gamma(&sols, &k).unwrap();
        assert!(fit.gamma.re < 0.0 && fit.objective_gamma.re < 0.0);
        assert!(fit.objective <= fit.seed_objective);
        assert!(fit.objective <= fit.asymptotic_objective);
        assert!(fit_gamma(&sols[..4], &k).is_err());
        assert!(fit_gamma(&sols[..8], &k).is_err());
        let c = closeness_spectrum(&zero, Complex64::new(0.0, 0.0)).unwrap();
        assert!(c.degenerate && c.pass.is_none());
    }

    #[test]
    fn distances_grow_with_the_window() {
        let k = MemoryKernel::exponential(0.5, 1.0);
        let g = Complex64::new(-0.25, 0.0);
        for lambda in [5.0, 9.0] {
            let short = solve_on_grid(lambda, &k, &study_grid(3.0, lambda)).unwrap();
            let long = solve_on_grid(lambda, &k, &study_grid(6.0, lambda)).unwrap();
            assert!(distance(&long, g) > distance(&short, g));
        }
    }

    #[test]
    fn zero_kernel_reduces_to_the_wave_case() {
        let d = DomainSpec::interval(PI).unwrap();
        let t = enumerate_modes(&d, 6).unwrap();
        let settings = ViscoSettings {
            c_alpha_draws: 20,
            ..ViscoSettings::default()
        };
        let r = perturbation_study(&t, &MemoryKernel::zero(), 2.5 * PI, QuadratureSpec::default(), &settings).unwrap();
        assert!(r.q_profile.iter().all(|p| p.q_hat <= tolerances::Q_ZERO));
        assert!(r.damped_riesz.zero_kernel_spectral_gap.unwrap() < 1e-6);
        assert!(r.damped_riesz.pass);
    }
}
