//! Backward wave evolution by eigenexpansion, boundary flux traces and the
//! Monte-Carlo observability experiment.
//!
//! A state is `w(T) = w0 = sum (xi~_n / lambda_n) phi_n`, `w_t(T) = w1 =
//! sum eta_n phi_n`. The signed coefficients `a_n = sgn(n) (xi~_|n| + i
//! sgn(n) eta_|n|)` make `sum a_n psi_n exp(i lambda_n (T - t))` equal to
//! `2 d_nu w`, so `||d_nu w||^2` is a quarter of the Gram quadratic form and
//! `sum |a_n|^2` is twice the energy.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Point, QuadratureSpec};
use crate::gram::{assemble_exponential_gram, observability_constant, GramMatrix};
use crate::quadrature::{simpson_weights, QuadratureRule};
use crate::sampling;
use crate::spectral::{slot, ModeTable};
use crate::tolerances;

/// Default time resolution of flux traces: samples per period of the
/// fastest retained mode.
pub const FLUX_SAMPLES_PER_PERIOD: f64 = 80.0;

/// Coarsest admissible flux step is `pi / (10 lambda_max)`.
const FLUX_MIN_SAMPLES_PER_PERIOD: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaveState {
    pub xi_tilde: Vec<Complex64>,
    pub eta: Vec<Complex64>,
}

impl WaveState {
    pub fn new(xi_tilde: Vec<Complex64>, eta: Vec<Complex64>) -> Result<Self> {
        if xi_tilde.len() != eta.len() {
            return Err(Error::Config(format!(
                "xi~ has {} entries but eta has {}",
                xi_tilde.len(),
                eta.len()
            )));
        }
        Ok(Self { xi_tilde, eta })
    }

    pub fn zero(n: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); n];
        Self {
            xi_tilde: z.clone(),
            eta: z,
        }
    }

    pub fn len(&self) -> usize {
        self.xi_tilde.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi_tilde.is_empty()
    }

    /// `sum |xi~_n|^2 + |eta_n|^2`.
    pub fn energy(&self) -> f64 {
        self.xi_tilde
            .iter()
            .chain(&self.eta)
            .map(|z| z.norm_sqr())
            .sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            xi_tilde: self.xi_tilde.iter().map(|z| z * c).collect(),
            eta: self.eta.iter().map(|z| z * c).collect(),
        }
    }

    fn check_table(&self, table: &ModeTable) -> Result<()> {
        if self.len() > table.len() {
            return Err(Error::Config(format!(
                "state has {} modes but the table only {}",
                self.len(),
                table.len()
            )));
        }
        Ok(())
    }
}

/// `(cos(lambda (T - t)), sin(lambda (T - t)))`.
pub fn ode_solutions(lambda: f64, horizon: f64, t: f64) -> (f64, f64) {
    let s = lambda * (horizon - t);
    (s.cos(), s.sin())
}

/// Signed coefficients in [`crate::spectral::signed_order`].
pub fn coeffs_to_a(state: &WaveState) -> Vec<Complex64> {
    let i = Complex64::i();
    let mut a = vec![Complex64::new(0.0, 0.0); 2 * state.len()];
    for (k, (x, e)) in state.xi_tilde.iter().zip(&state.eta).enumerate() {
        let n = k as i64 + 1;
        a[slot(n)] = x + i * e;
        a[slot(-n)] = -(x - i * e);
    }
    a
}

pub fn a_to_coeffs(a: &[Complex64]) -> Result<WaveState> {
    if a.len() % 2 == 1 {
        return Err(Error::Config("signed coefficient vector has odd length".into()));
    }
    let n = a.len() / 2;
    let i = Complex64::i();
    let mut state = WaveState::zero(n);
    for k in 1..=n as i64 {
        let (p, m) = (a[slot(k)], a[slot(-k)]);
        state.xi_tilde[k as usize - 1] = 0.5 * (p - m);
        state.eta[k as usize - 1] = (p + m) / (2.0 * i);
    }
    Ok(state)
}

/// Values of the evolved field and its derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveSample {
    pub w: Complex64,
    pub w_t: Complex64,
    pub w_tt: Complex64,
    pub laplacian: Complex64,
}

/// `w(x, t)` and its derivatives from the closed-form eigenexpansion.
pub fn evolve_wave_sample(table: &ModeTable, state: &WaveState, horizon: f64, t: f64, x: Point) -> Result<WaveSample> {
    state.check_table(table)?;
    table.domain.check_closure(x)?;
    let zero = Complex64::new(0.0, 0.0);
    let mut out = WaveSample {
        w: zero,
        w_t: zero,
        w_tt: zero,
        laplacian: zero,
    };
    for (k, (xi, eta)) in state.xi_tilde.iter().zip(&state.eta).enumerate() {
        let n = k as i64 + 1;
        let l = table.lambda(n);
        let (c, s) = ode_solutions(l, horizon, t);
        let phi = table.phi_unchecked(n, x);
        let amp = xi / l * c - eta / l * s;
        let amp_t = xi * s + eta * c;
        out.w += amp * phi;
        out.w_t += amp_t * phi;
        out.w_tt += -l * l * amp * phi;
        out.laplacian += amp * table.laplacian_phi(n, x);
    }
    Ok(out)
}

pub fn evolve_wave(table: &ModeTable, state: &WaveState, horizon: f64, t: f64, x: Point) -> Result<Complex64> {
    Ok(evolve_wave_sample(table, state, horizon, t, x)?.w)
}

/// Mode coefficients of `(w(., t), w_t(., t))` in the state convention,
/// i.e. the data that would produce the same motion with `t` as final time.
pub fn state_at(table: &ModeTable, state: &WaveState, horizon: f64, t: f64) -> WaveState {
    let mut out = WaveState::zero(state.len());
    for (k, (xi, eta)) in state.xi_tilde.iter().zip(&state.eta).enumerate() {
        let l = table.lambda(k as i64 + 1);
        let (c, s) = ode_solutions(l, horizon, t);
        out.xi_tilde[k] = xi * c - eta * s;
        out.eta[k] = xi * s + eta * c;
    }
    out
}

/// `int_Omega |grad w0|^2 + |w1|^2` by interior quadrature.
pub fn energy_by_quadrature(table: &ModeTable, state: &WaveState, rule: &QuadratureRule) -> Result<f64> {
    state.check_table(table)?;
    let total = (0..rule.len())
        .into_par_iter()
        .map(|i| {
            let x = rule.nodes[i];
            let zero = Complex64::new(0.0, 0.0);
            let (mut gx, mut gy, mut w1) = (zero, zero, zero);
            for (k, (xi, eta)) in state.xi_tilde.iter().zip(&state.eta).enumerate() {
                let n = k as i64 + 1;
                let g = table.grad_phi(n, x);
                let c = xi / table.lambda(n);
                gx += c * g[0];
                gy += c * g[1];
                w1 += eta * table.phi_unchecked(n, x);
            }
            rule.weights[i] * (gx.norm_sqr() + gy.norm_sqr() + w1.norm_sqr())
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(total)
}

/// Uniform grid on `[0, T]` with an even number of intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub intervals: usize,
}

impl TimeGrid {
    /// Finest even grid with at least `per_period` samples per period of
    /// `lambda_max`.
    pub fn resolving(horizon: f64, lambda_max: f64, per_period: f64) -> Self {
        let target = 2.0 * std::f64::consts::PI / (per_period * lambda_max);
        let mut m = (horizon / target).ceil() as usize;
        m = m.max(2);
        if m % 2 == 1 {
            m += 1;
        }
        Self {
            horizon,
            intervals: m,
        }
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.intervals as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.intervals).map(|i| i as f64 * self.step()).collect()
    }

    pub fn refined(&self) -> Self {
        Self {
            horizon: self.horizon,
            intervals: 2 * self.intervals,
        }
    }
}

/// Precomputed boundary values for repeated flux evaluations.
pub struct FluxEvaluator<'a> {
    table: &'a ModeTable,
    rule: QuadratureRule,
    psi: Vec<Vec<f64>>,
}

impl<'a> FluxEvaluator<'a> {
    pub fn new(table: &'a ModeTable, spec: QuadratureSpec) -> Result<Self> {
        let rule = table.domain.boundary_quadrature(spec)?;
        let psi = table.boundary_table(&rule);
        Ok(Self { table, rule, psi })
    }

    fn check_grid(&self, state: &WaveState, grid: &TimeGrid) -> Result<()> {
        state.check_table(self.table)?;
        let lmax = self.table.lambda(state.len().max(1) as i64).abs();
        let coarsest = std::f64::consts::PI / (0.5 * FLUX_MIN_SAMPLES_PER_PERIOD * lmax);
        if grid.intervals % 2 == 1 || grid.intervals < 2 {
            return Err(Error::Resolution("flux grid needs an even interval count".into()));
        }
        if grid.step() > coarsest * (1.0 + 1e-12) {
            return Err(Error::Resolution(format!(
                "flux step {:.3e} exceeds pi/(10 lambda_max) = {coarsest:.3e}",
                grid.step()
            )));
        }
        Ok(())
    }

    /// `d_nu w` at every boundary node for one time.
    fn flux_at(&self, state: &WaveState, horizon: f64, t: f64) -> Vec<Complex64> {
        let coeff: Vec<Complex64> = state
            .xi_tilde
            .iter()
            .zip(&state.eta)
            .enumerate()
            .map(|(k, (xi, eta))| {
                let (c, s) = ode_solutions(self.table.lambda(k as i64 + 1), horizon, t);
                xi * c - eta * s
            })
            .collect();
        (0..self.rule.len())
            .map(|i| coeff.iter().zip(&self.psi).map(|(c, row)| c * row[i]).sum())
            .collect()
    }

    pub fn trace(&self, state: &WaveState, grid: &TimeGrid) -> Result<FluxTrace> {
        self.check_grid(state, grid)?;
        let times = grid.times();
        let samples: Vec<Vec<Complex64>> = times
            .par_iter()
            .map(|&t| self.flux_at(state, grid.horizon, t))
            .collect();
        let w = simpson_weights(grid.intervals, grid.step());
        let norm_sq = samples
            .iter()
            .zip(&w)
            .map(|(row, wt)| wt * self.space_norm_sq(row))
            .sum();
        Ok(FluxTrace {
            times,
            nodes: self.rule.nodes.clone(),
            samples,
            norm_sq,
        })
    }

    /// `||d_nu w||^2` over `dOmega x (0, T)` without storing samples.
    pub fn norm_sq(&self, state: &WaveState, grid: &TimeGrid) -> Result<f64> {
        self.check_grid(state, grid)?;
        let w = simpson_weights(grid.intervals, grid.step());
        Ok(grid
            .times()
            .par_iter()
            .zip(w.par_iter())
            .map(|(&t, wt)| wt * self.space_norm_sq(&self.flux_at(state, grid.horizon, t)))
            .collect::<Vec<f64>>()
            .iter()
            .sum())
    }

    fn space_norm_sq(&self, row: &[Complex64]) -> f64 {
        row.iter()
            .zip(&self.rule.weights)
            .map(|(v, w)| w * v.norm_sqr())
            .sum()
    }
}

/// Samples of `d_nu w(x, t)` on a boundary rule and uniform time grid.
#[derive(Debug, Clone)]
pub struct FluxTrace {
    pub times: Vec<f64>,
    pub nodes: Vec<Point>,
    /// `samples[i][p]` is the flux at time `times[i]` and node `nodes[p]`.
    pub samples: Vec<Vec<Complex64>>,
    /// Physical `||d_nu w||^2` by Simpson in time and quadrature in space.
    pub norm_sq: f64,
}

impl FluxTrace {
    /// `||sum a_n psi_n e^{i lambda_n t}||^2 = 4 ||d_nu w||^2`, the quantity
    /// the Gram form measures.
    pub fn signed_norm_sq(&self) -> f64 {
        4.0 * self.norm_sq
    }
}

pub fn boundary_flux(
    table: &ModeTable,
    state: &WaveState,
    grid: &TimeGrid,
    spec: QuadratureSpec,
) -> Result<FluxTrace> {
    FluxEvaluator::new(table, spec)?.trace(state, grid)
}

#[derive(Debug, Clone, Serialize)]
pub struct DrawRecord {
    pub draw: u64,
    pub energy: f64,
    /// Physical `||d_nu w||^2`.
    pub flux_norm_sq: f64,
    /// `sum a_j G_jk conj(a_k)` from the Gram matrix.
    pub gram_form: f64,
    /// `4 ||d_nu w||^2 / (2 E)`, i.e. the Gram form per unit `sum |a_n|^2`.
    pub ratio: f64,
    pub flux_gram_rel_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObservabilityFailure {
    pub draw: u64,
    pub ratio: f64,
    pub xi_tilde: Vec<Complex64>,
    pub eta: Vec<Complex64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObservabilityReport {
    pub n: usize,
    pub horizon: f64,
    pub c_bound: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub min_ratio: f64,
    pub median_ratio: f64,
    pub max_flux_gram_rel_error: f64,
    /// Ratio of the state built from the minimizing Gram eigenvector.
    pub eigenvector_ratio: f64,
    pub eigenvector_gap: f64,
    pub draws: Vec<DrawRecord>,
    pub failures: Vec<ObservabilityFailure>,
    pub pass: bool,
}

/// Ratio and cross-check for one state.
pub fn observe_state(
    eval: &FluxEvaluator<'_>,
    gram: &GramMatrix,
    state: &WaveState,
    grid: &TimeGrid,
) -> Result<(f64, f64, f64)> {
    let energy = state.energy();
    if energy == 0.0 {
        return Err(Error::Precondition("observability ratio of the zero state".into()));
    }
    let flux = eval.norm_sq(state, grid)?;
    let form = gram.quadratic_form(&coeffs_to_a(state));
    Ok((flux, form, 4.0 * flux / (2.0 * energy)))
}

pub fn observability_experiment(
    table: &ModeTable,
    horizon: f64,
    draws: usize,
    seed: u64,
    spec: QuadratureSpec,
) -> Result<ObservabilityReport> {
    let domain = table.domain;
    if horizon <= 2.0 * domain.radius {
        return Err(Error::Precondition(format!(
            "observability needs T > 2R = {}, got {horizon}",
            2.0 * domain.radius
        )));
    }
    let n = table.len();
    let gram = assemble_exponential_gram(table, horizon, spec)?;
    let eig = gram.spectrum()?;
    let eval = FluxEvaluator::new(table, spec)?;
    let lmax = table.lambda(n as i64);
    let grid = TimeGrid::resolving(horizon, lmax, FLUX_SAMPLES_PER_PERIOD);
    let c_bound = observability_constant(&domain, horizon);
    let floor = c_bound - tolerances::OBSERVABILITY_SLACK;

    let results = (0..draws as u64)
        .into_par_iter()
        .map(|d| {
            let mut rng = sampling::stream(seed, d);
            let xi = sampling::complex_gaussians(&mut rng, n);
            let eta = sampling::complex_gaussians(&mut rng, n);
            let state = WaveState::new(xi, eta)?;
            let (flux, form, ratio) = observe_state(&eval, &gram, &state, &grid)?;
            let rel = (4.0 * flux - form).abs() / form;
            let pass = ratio >= floor && rel <= tolerances::FLUX_GRAM_RELATIVE;
            Ok((
                DrawRecord {
                    draw: d,
                    energy: state.energy(),
                    flux_norm_sq: flux,
                    gram_form: form,
                    ratio,
                    flux_gram_rel_error: rel,
                    pass,
                },
                state,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    // The minimizing direction of sum a_j G_jk conj(a_k) is conj(v_min).
    let a_min: Vec<Complex64> = eig.vector(0).iter().map(|z| z.conj()).collect();
    let worst = a_to_coeffs(&a_min)?;
    let (_, _, eigenvector_ratio) = observe_state(&eval, &gram, &worst, &grid)?;

    let mut ratios: Vec<f64> = results.iter().map(|(r, _)| r.ratio).collect();
    ratios.sort_by(f64::total_cmp);
    let median_ratio = if ratios.is_empty() {
        f64::NAN
    } else if ratios.len() % 2 == 1 {
        ratios[ratios.len() / 2]
    } else {
        0.5 * (ratios[ratios.len() / 2 - 1] + ratios[ratios.len() / 2])
    };
    let failures = results
        .iter()
        .filter(|(r, _)| !r.pass)
        .map(|(r, s)| ObservabilityFailure {
            draw: r.draw,
            ratio: r.ratio,
            xi_tilde: s.xi_tilde.clone(),
            eta: s.eta.clone(),
        })
        .collect::<Vec<_>>();
    let eigenvector_gap = (eigenvector_ratio - eig.min()).abs();
    let max_rel = results
        .iter()
        .map(|(r, _)| r.flux_gram_rel_error)
        .fold(0.0, f64::max);
    let pass = failures.is_empty()
        && eigenvector_gap <= tolerances::OBSERVABILITY_SLACK
        && eig.min() >= floor;
    Ok(ObservabilityReport {
        n,
        horizon,
        c_bound,
        lambda_min: eig.min(),
        lambda_max: eig.max(),
        min_ratio: ratios.first().copied().unwrap_or(f64::NAN),
        median_ratio,
        max_flux_gram_rel_error: max_rel,
        eigenvector_ratio,
        eigenvector_gap,
        draws: results.into_iter().map(|(r, _)| r).collect(),
        failures,
        pass,
    })
}
