//! Boundary control synthesis in the span of the observed trace system.
//!
//! Testing `u_tt - Laplace u = 0`, `u = f` on the boundary, against `phi_m`
//! gives `u_m'' + lambda_m^2 u_m = -int f d_nu phi_m dS`. With
//! `p_n = u_|n|' + i lambda_n u_|n|` (signed `n`, `lambda_{-n} = -lambda_n`)
//! and `f = sum_k a_k psi_k exp(i lambda_k t)`,
//!
//! `p_n(T) = exp(i lambda_n T) [p_n(0) - lambda_n (G^T a)_n]`,
//!
//! so steering to `p^T` is the Hermitian system `conj(G) a = b` with
//! `b_n = (p_n(0) - exp(-i lambda_n T) p_n^T) / lambda_n`, and
//! `||f||^2 = a^H b`.
//!
//! Velocities are stored divided by `lambda_n` (the `H^-1` weights), so a
//! state `(u, v)` has `p_n = lambda_|n| (v_|n| + i sgn(n) u_|n|)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::{time_overlap, GramMatrix};
use crate::linalg::{norm, pcg, CMatrix};
use crate::quadrature::{simpson_weights, QuadratureRule};
use crate::spectral::{signed_order, slot, ModeTable};
use crate::tolerances;
use crate::wave::TimeGrid;

/// Mode coefficients of a state: positions `u_n` and scaled velocities
/// `v_n = u_n' / lambda_n`, `n = 1..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalState {
    pub position: Vec<Complex64>,
    pub scaled_velocity: Vec<Complex64>,
}

impl ModalState {
    pub fn zero(n: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); n];
        Self {
            position: z.clone(),
            scaled_velocity: z,
        }
    }

    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }

    fn check(&self, n: usize, what: &str) -> Result<()> {
        if self.position.len() != n || self.scaled_velocity.len() != n {
            return Err(Error::Config(format!(
                "{what} state has {} positions and {} velocities, expected {n}",
                self.position.len(),
                self.scaled_velocity.len()
            )));
        }
        if self
            .position
            .iter()
            .chain(&self.scaled_velocity)
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::Config(format!("{what} state has non-finite entries")));
        }
        Ok(())
    }

    pub fn is_real(&self) -> bool {
        self.position.iter().chain(&self.scaled_velocity).all(|z| z.im == 0.0)
    }

    /// `p_n` in signed order.
    pub fn characteristic(&self, table: &ModeTable) -> Vec<Complex64> {
        let i = Complex64::i();
        let n = self.len();
        let mut p = vec![Complex64::new(0.0, 0.0); 2 * n];
        for k in 1..=n as i64 {
            let l = table.lambda(k);
            let (u, v) = (self.position[k as usize - 1], self.scaled_velocity[k as usize - 1]);
            p[slot(k)] = l * (v + i * u);
            p[slot(-k)] = l * (v - i * u);
        }
        p
    }

    pub fn from_characteristic(table: &ModeTable, p: &[Complex64]) -> Self {
        let n = p.len() / 2;
        let i = Complex64::i();
        let mut s = Self::zero(n);
        for k in 1..=n as i64 {
            let l = table.lambda(k);
            let (a, b) = (p[slot(k)], p[slot(-k)]);
            s.position[k as usize - 1] = (a - b) / (2.0 * i * l);
            s.scaled_velocity[k as usize - 1] = (a + b) / (2.0 * l);
        }
        s
    }

    /// Uncontrolled evolution over `[0, T]`.
    pub fn free_evolution(&self, table: &ModeTable, horizon: f64) -> Self {
        let p: Vec<Complex64> = self
            .characteristic(table)
            .iter()
            .zip(signed_order(self.len()))
            .map(|(p, n)| p * Complex64::from_polar(1.0, table.lambda(n) * horizon))
            .collect();
        Self::from_characteristic(table, &p)
    }

    /// `sum_n |u_n|^2 + |v_n|^2`, the energy in these weights up to `lambda^2`.
    pub fn norm_sq(&self) -> f64 {
        self.position.iter().chain(&self.scaled_velocity).map(|z| z.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlProblem {
    pub horizon: f64,
    pub initial: ModalState,
    pub target: ModalState,
    /// Restrict to real boundary data, `a_{-n} = -conj(a_n)`.
    #[serde(default)]
    pub real_control: bool,
}

impl ControlProblem {
    pub fn truncation(&self) -> usize {
        self.initial.len()
    }

    pub fn validate(&self, table: &ModeTable) -> Result<()> {
        let n = self.truncation();
        if n == 0 || n > table.len() {
            return Err(Error::Config(format!(
                "control truncation {n} must be in 1..={}",
                table.len()
            )));
        }
        self.initial.check(n, "initial")?;
        self.target.check(n, "target")?;
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.real_control && !(self.initial.is_real() && self.target.is_real()) {
            return Err(Error::Config(
                "a real control can only steer real initial and target data".into(),
            ));
        }
        Ok(())
    }
}

/// `b_n = (p_n(0) - exp(-i lambda_n T) p_n^T) / lambda_n` in signed order.
pub fn transposition_rhs(table: &ModeTable, problem: &ControlProblem) -> Result<Vec<Complex64>> {
    problem.validate(table)?;
    let p0 = problem.initial.characteristic(table);
    let pt = problem.target.characteristic(table);
    Ok(signed_order(problem.truncation())
        .into_iter()
        .map(|n| {
            let l = table.lambda(n);
            let s = slot(n);
            (p0[s] - Complex64::from_polar(1.0, -l * problem.horizon) * pt[s]) / l
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryControl {
    pub indices: Vec<i64>,
    pub lambdas: Vec<f64>,
    pub coefficients: Vec<Complex64>,
    pub horizon: f64,
    pub rhs: Vec<Complex64>,
    /// `a^H b`.
    pub norm_sq: f64,
    /// `sum a_j G_jk conj(a_k)`.
    pub gram_norm_sq: f64,
    /// `||b||^2 / lower`, with `lower` the certified Gram bound.
    pub norm_bound: f64,
    pub lower_bound: f64,
    pub condition_estimate: f64,
    pub iterations: usize,
    pub relative_residual: f64,
    /// Largest `|a_{-n} + conj(a_n)|`, zero for a real control.
    pub realness_defect: f64,
}

impl BoundaryControl {
    /// `f(x_i, t)` at the nodes of a boundary rule.
    pub fn trace(&self, table: &ModeTable, rule: &QuadratureRule, t: f64) -> Vec<Complex64> {
        let rows = table.boundary_table(rule);
        (0..rule.len())
            .map(|i| {
                self.indices
                    .iter()
                    .zip(&self.coefficients)
                    .zip(&self.lambdas)
                    .map(|((&n, a), l)| {
                        let psi = n.signum() as f64 * rows[n.unsigned_abs() as usize - 1][i];
                        a * psi * Complex64::from_polar(1.0, l * t)
                    })
                    .sum()
            })
            .collect()
    }

    /// `||f||^2_{L^2(boundary x (0,T))}` by boundary quadrature and Simpson.
    pub fn sampled_norm_sq(&self, table: &ModeTable, rule: &QuadratureRule, grid: &TimeGrid) -> f64 {
        let w = simpson_weights(grid.intervals, grid.step());
        let values: Vec<f64> = grid
            .times()
            .par_iter()
            .map(|&t| {
                self.trace(table, rule, t)
                    .iter()
                    .zip(&rule.weights)
                    .map(|(f, q)| q * f.norm_sqr())
                    .sum::<f64>()
            })
            .collect();
        values.iter().zip(&w).map(|(v, w)| v * w).sum()
    }
}

/// Solves `conj(G) a = b` by preconditioned conjugate gradients.
///
/// `lower` is the certified lower Gram bound; the Gram spectrum must not
/// fall below it.
pub fn solve_control(
    table: &ModeTable,
    problem: &ControlProblem,
    gram: &GramMatrix,
    lower: f64,
    tol: f64,
) -> Result<BoundaryControl> {
    let b = transposition_rhs(table, problem)?;
    let n = problem.truncation();
    if gram.order() != 2 * n {
        return Err(Error::Config(format!(
            "Gram of order {} does not match truncation {n}",
            gram.order()
        )));
    }
    if (gram.horizon - problem.horizon).abs() > 1e-12 * problem.horizon {
        return Err(Error::Config(format!(
            "Gram horizon {} differs from the problem horizon {}",
            gram.horizon, problem.horizon
        )));
    }
    let spectrum = gram.spectrum()?;
    let condition_estimate = spectrum.max() / spectrum.min();
    if !(lower > 0.0) || spectrum.min() < lower * (1.0 - 1e-9) {
        return Err(Error::Precondition(format!(
            "Gram lambda_min {:.6e} is below the certified bound {lower:.6e}",
            spectrum.min()
        )));
    }
    let conj = CMatrix::from_fn(2 * n, 2 * n, |i, j| gram.matrix[(i, j)].conj());
    let outcome = pcg(&conj, &b, tol, 20 * n + 100).map_err(|e| match e {
        Error::Numerical(m) => Error::Numerical(format!("{m}; condition estimate {condition_estimate:.3e}")),
        other => other,
    })?;
    let mut a = outcome.solution;
    if problem.real_control {
        for k in 1..=n as i64 {
            let (p, m) = (slot(k), slot(-k));
            let sym = 0.5 * (a[p] - a[m].conj());
            a[p] = sym;
            a[m] = -sym.conj();
        }
    }
    let realness_defect = (1..=n as i64)
        .map(|k| (a[slot(-k)] + a[slot(k)].conj()).norm())
        .fold(0.0, f64::max);
    let indices = signed_order(n);
    let norm_sq = a.iter().zip(&b).map(|(a, b)| a.conj() * b).sum::<Complex64>().re;
    let gram_norm_sq = gram.quadratic_form(&a);
    let b2 = norm(&b).powi(2);
    Ok(BoundaryControl {
        lambdas: indices.iter().map(|&k| table.lambda(k)).collect(),
        indices,
        coefficients: a,
        horizon: problem.horizon,
        rhs: b,
        norm_sq,
        gram_norm_sq,
        norm_bound: b2 / lower,
        lower_bound: lower,
        condition_estimate,
        iterations: outcome.iterations,
        relative_residual: outcome.relative_residual,
        realness_defect,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SteeringReport {
    pub final_state: ModalState,
    /// `||p(T) - p^T|| / max(||p^T||, ||p(0)||)`.
    pub steering_error: f64,
    pub pass: bool,
}

fn steering(table: &ModeTable, problem: &ControlProblem, p_final: Vec<Complex64>) -> SteeringReport {
    let pt = problem.target.characteristic(table);
    let p0 = problem.initial.characteristic(table);
    let scale = norm(&pt).max(norm(&p0));
    let diff: Vec<Complex64> = p_final.iter().zip(&pt).map(|(a, b)| a - b).collect();
    let steering_error = if scale > 0.0 { norm(&diff) / scale } else { norm(&diff) };
    SteeringReport {
        final_state: ModalState::from_characteristic(table, &p_final),
        pass: steering_error <= tolerances::STEERING,
        steering_error,
    }
}

/// Closed-form Duhamel: the forcing of mode `n` is a Gram-row contraction
/// and its time integral a sum of [`time_overlap`] terms.
pub fn forward_simulate_controlled(
    table: &ModeTable,
    problem: &ControlProblem,
    control: &BoundaryControl,
    space: &[Vec<f64>],
) -> Result<SteeringReport> {
    problem.validate(table)?;
    let p0 = problem.initial.characteristic(table);
    let t = problem.horizon;
    let p_final: Vec<Complex64> = control
        .indices
        .par_iter()
        .map(|&n| {
            let s = slot(n);
            let ln = table.lambda(n);
            let forced: Complex64 = control
                .indices
                .iter()
                .zip(&control.coefficients)
                .map(|(&k, a)| a * space[slot(k)][s] * time_overlap(table.lambda(k), ln, t))
                .sum();
            Complex64::from_polar(1.0, ln * t) * (p0[s] - ln * forced)
        })
        .collect();
    Ok(steering(table, problem, p_final))
}

/// Same evolution with the forcing `-int f d_nu phi dS` sampled on a
/// boundary rule and integrated in time by Simpson; independent of the
/// Gram matrix.
pub fn forward_simulate_sampled(
    table: &ModeTable,
    problem: &ControlProblem,
    control: &BoundaryControl,
    rule: &QuadratureRule,
    grid: &TimeGrid,
) -> Result<SteeringReport> {
    problem.validate(table)?;
    let n = problem.truncation();
    let rows = table.boundary_table(rule);
    let w = simpson_weights(grid.intervals, grid.step());
    let times = grid.times();
    // F_m(t_i) = -lambda_m int f psi_m dS for m = 1..=N.
    let forcing: Vec<Vec<Complex64>> = times
        .par_iter()
        .map(|&t| {
            let f = control.trace(table, rule, t);
            (1..=n)
                .map(|m| {
                    let s: Complex64 = f.iter().zip(&rows[m - 1]).zip(&rule.weights).map(|((f, p), q)| f * p * q).sum();
                    -table.lambda(m as i64) * s
                })
                .collect()
        })
        .collect();
    let p0 = problem.initial.characteristic(table);
    let p_final: Vec<Complex64> = control
        .indices
        .iter()
        .map(|&k| {
            let l = table.lambda(k);
            let m = k.unsigned_abs() as usize - 1;
            let integral: Complex64 = times
                .iter()
                .zip(&w)
                .zip(&forcing)
                .map(|((&t, w), row)| w * Complex64::from_polar(1.0, -l * t) * row[m])
                .sum();
            Complex64::from_polar(1.0, l * problem.horizon) * (p0[slot(k)] + integral)
        })
        .collect();
    Ok(steering(table, problem, p_final))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DomainSpec, QuadratureSpec};
    use crate::gram::{assemble_exponential_gram, signed_boundary_products, observability_constant};
    use crate::sampling::{complex_gaussians, stream};
    use crate::spectral::enumerate_modes;
    use std::f64::consts::PI;

    fn setup(n: usize, horizon: f64) -> (ModeTable, GramMatrix, Vec<Vec<f64>>, f64) {
        let d = DomainSpec::interval(PI).unwrap();
        let t = enumerate_modes(&d, n).unwrap();
        let g = assemble_exponential_gram(&t, horizon, QuadratureSpec::default()).unwrap();
        let rule = d.boundary_quadrature(QuadratureSpec::default()).unwrap();
        let space = signed_boundary_products(&t, &rule);
        let c = observability_constant(&d, horizon);
        (t, g, space, c)
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

    #[test]
    fn characteristic_round_trip() {
        let (t, ..) = setup(4, 2.0 * PI);
        let s = random_state(4, 3, false);
        let back = ModalState::from_characteristic(&t, &s.characteristic(&t));
        for (a, b) in back.position.iter().zip(&s.position) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn rhs_examples() {
        let (t, ..) = setup(5, 2.0 * PI);
        let zero = ControlProblem {
            horizon: 2.0 * PI,
            initial: ModalState::zero(5),
            target: ModalState::zero(5),
            real_control: false,
        };
        assert!(transposition_rhs(&t, &zero).unwrap().iter().all(|b| b.norm() == 0.0));
        // A free trajectory needs no control.
        let init = random_state(5, 1, false);
        let free = ControlProblem {
            horizon: 1.3,
            target: init.free_evolution(&t, 1.3),
            initial: init,
            real_control: false,
        };
        assert!(transposition_rhs(&t, &free).unwrap().iter().all(|b| b.norm() < 1e-13));
        let mut single = zero.clone();
        single.target.position[0] = Complex64::new(1.0, 0.0);
        let b = transposition_rhs(&t, &single).unwrap();
        let nonzero: Vec<i64> = signed_order(5)
            .into_iter()
            .filter(|&n| b[slot(n)].norm() > 0.0)
            .collect();
        assert_eq!(nonzero, vec![1, -1]);
    }

    #[test]
    fn zero_rhs_gives_zero_control() {
        let (t, g, _, c) = setup(4, 2.0 * PI);
        let p = ControlProblem {
            horizon: 2.0 * PI,
            initial: ModalState::zero(4),
            target: ModalState::zero(4),
            real_control: false,
        };
        let f = solve_control(&t, &p, &g, c, 1e-10).unwrap();
        assert!(f.coefficients.iter().all(|a| a.norm() == 0.0));
    }

    #[test]
    fn diagonal_gram_divides() {
        // On the interval at T = 2 pi the Gram section is 8 I.
        let (t, g, _, c) = setup(1, 2.0 * PI);
        let p = ControlProblem {
            horizon: 2.0 * PI,
            initial: random_state(1, 4, false),
            target: ModalState::zero(1),
            real_control: false,
        };
        let f = solve_control(&t, &p, &g, c, 1e-12).unwrap();
        for (a, b) in f.coefficients.iter().zip(&f.rhs) {
            assert!((a - b / g.matrix[(0, 0)].re).norm() < 1e-12);
        }
    }

    #[test]
    fn steering_and_norm_bound() {
        let horizon = 2.0 * PI;
        let (t, g, space, c) = setup(10, horizon);
        let p = ControlProblem {
            horizon,
            initial: random_state(10, 7, false),
            target: random_state(10, 8, false),
            real_control: false,
        };
        let f = solve_control(&t, &p, &g, c, 1e-10).unwrap();
        assert!(f.relative_residual <= 1e-10);
        assert!(f.norm_sq <= f.norm_bound);
        assert!((f.norm_sq - f.gram_norm_sq).abs() <= 1e-10 * f.norm_sq);
        let r = forward_simulate_controlled(&t, &p, &f, &space).unwrap();
        assert!(r.steering_error <= 1e-8, "{}", r.steering_error);
        let d = t.domain;
        let rule = d.boundary_quadrature(QuadratureSpec::default()).unwrap();
        let grid = TimeGrid::resolving(horizon, 10.0, 400.0);
        let s = forward_simulate_sampled(&t, &p, &f, &rule, &grid).unwrap();
        let gap = r
            .final_state
            .characteristic(&t)
            .iter()
            .zip(s.final_state.characteristic(&t))
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(gap <= 1e-8, "{gap}");
        let sampled = f.sampled_norm_sq(&t, &rule, &grid);
        assert!((sampled - f.norm_sq).abs() <= 1e-6 * f.norm_sq);
    }

    #[test]
    fn tighter_solves_steer_better() {
        let horizon = 2.5 * PI;
        let (t, g, space, c) = setup(10, horizon);
        let p = ControlProblem {
            horizon,
            initial: random_state(10, 11, false),
            target: ModalState::zero(10),
            real_control: false,
        };
        let errs: Vec<f64> = [1e-6, 1e-8, 1e-10]
            .iter()
            .map(|&tol| {
                let f = solve_control(&t, &p, &g, c, tol).unwrap();
                forward_simulate_controlled(&t, &p, &f, &space).unwrap().steering_error
            })
            .collect();
        assert!(errs[1] <= errs[0] && errs[2] <= errs[1], "{errs:?}");
    }

    #[test]
    fn real_data_gives_real_control() {
        let horizon = 2.0 * PI;
        let (t, g, space, c) = setup(6, horizon);
        let mut p = ControlProblem {
            horizon,
            initial: random_state(6, 21, true),
            target: random_state(6, 22, true),
            real_control: false,
        };
        let free = solve_control(&t, &p, &g, c, 1e-12).unwrap();
        assert!(free.realness_defect < 1e-10);
        p.real_control = true;
        let f = solve_control(&t, &p, &g, c, 1e-12).unwrap();
        assert_eq!(f.realness_defect, 0.0);
        assert!(forward_simulate_controlled(&t, &p, &f, &space).unwrap().steering_error < 1e-9);
        p.target.position[0].im = 1.0;
        assert!(matches!(solve_control(&t, &p, &g, c, 1e-12), Err(Error::Config(_))));
    }

    #[test]
    fn zero_control_is_free_evolution() {
        let horizon = 3.0;
        let (t, _, space, _) = setup(5, horizon);
        let init = random_state(5, 2, false);
        let p = ControlProblem {
            horizon,
            target: init.free_evolution(&t, horizon),
            initial: init.clone(),
            real_control: false,
        };
        let zero = BoundaryControl {
            indices: signed_order(5),
            lambdas: signed_order(5).iter().map(|&n| t.lambda(n)).collect(),
            coefficients: vec![Complex64::new(0.0, 0.0); 10],
            horizon,
            rhs: vec![],
            norm_sq: 0.0,
            gram_norm_sq: 0.0,
            norm_bound: 0.0,
            lower_bound: 1.0,
            condition_estimate: 1.0,
            iterations: 0,
            relative_residual: 0.0,
            realness_defect: 0.0,
        };
        let r = forward_simulate_controlled(&t, &p, &zero, &space).unwrap();
        assert!(r.steering_error < 1e-14);
        assert!((r.final_state.norm_sq() - init.norm_sq()).abs() < 1e-12 * init.norm_sq());
    }

    #[test]
    fn longer_horizons_keep_the_bound() {
        let init = random_state(8, 5, false);
        for horizon in [2.5 * PI, 5.0 * PI] {
            let (t, g, _, c) = setup(8, horizon);
            let p = ControlProblem {
                horizon,
                initial: init.clone(),
                target: ModalState::zero(8),
                real_control: false,
            };
            assert!(g.spectrum().unwrap().min() >= c - 1e-6);
            let f = solve_control(&t, &p, &g, c, 1e-10).unwrap();
            assert!(f.norm_sq <= f.norm_bound);
        }
    }

    #[test]
    fn uncertified_gram_is_rejected() {
        let (t, g, _, c) = setup(3, 2.0 * PI);
        let p = ControlProblem {
            horizon: 2.0 * PI,
            initial: random_state(3, 1, false),
            target: ModalState::zero(3),
            real_control: false,
        };
        assert!(matches!(solve_control(&t, &p, &g, 10.0 * c, 1e-10), Err(Error::Precondition(_))));
    }
}
