//! Gram matrices of boundary trace systems in `L2(dOmega x (0, T))`.
//!
//! Rows and columns follow [`signed_order`]: `1, -1, 2, -2, ...`. The entry
//! `G_jk` is the inner product of the `j`-th and `k`-th trace functions,
//! linear in the first slot, so `||sum a_n e_n||^2 = sum a_j G_jk conj(a_k)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{DomainSpec, QuadratureSpec};
use crate::linalg::{eigen_residual, eigh, CMatrix, HermitianEigen};
use crate::quadrature::{simpson_weights, QuadratureRule};
use crate::spectral::{signed_order, ModeTable};
use crate::tolerances;

/// Minimum number of time samples per period of the fastest mode.
pub const SAMPLES_PER_PERIOD: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    AnalyticTimeQuadratureSpace,
    FullQuadrature,
    ViscoSampled,
}

#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub matrix: CMatrix,
    pub indices: Vec<i64>,
    pub horizon: f64,
    pub provenance: Provenance,
    /// Largest gap between quadrature and closed-form boundary products,
    /// when a closed form was available.
    pub cross_path_defect: Option<f64>,
}

impl GramMatrix {
    pub fn order(&self) -> usize {
        self.indices.len()
    }

    /// Gram of the first `count` positive modes and their mirrors.
    pub fn truncated(&self, count: usize) -> Self {
        let k = (2 * count).min(self.order());
        GramMatrix {
            matrix: self.matrix.principal(k),
            indices: self.indices[..k].to_vec(),
            horizon: self.horizon,
            provenance: self.provenance,
            cross_path_defect: self.cross_path_defect,
        }
    }

    /// `||sum a_n e_n||^2 = sum_jk a_j G_jk conj(a_k)`.
    pub fn quadratic_form(&self, a: &[Complex64]) -> f64 {
        assert_eq!(a.len(), self.order(), "coefficient length mismatch");
        let conj: Vec<Complex64> = a.iter().map(|z| z.conj()).collect();
        let g = self.matrix.matvec(&conj);
        a.iter().zip(&g).map(|(x, y)| x * y).sum::<Complex64>().re
    }

    pub fn spectrum(&self) -> Result<HermitianEigen> {
        eigh(&self.matrix, tolerances::HERMITIAN)
    }

    /// Real diagonal and Hermitian symmetry checks of the stored entries.
    pub fn validate(&self) -> Result<()> {
        let scale = self.matrix.max_abs().max(1.0);
        let defect = self.matrix.hermitian_defect();
        if defect > tolerances::HERMITIAN * scale {
            return Err(Error::Data(format!("Gram matrix Hermitian defect {defect:.3e}")));
        }
        for i in 0..self.order() {
            if !(self.matrix[(i, i)].re > 0.0) {
                return Err(Error::Data(format!(
                    "Gram diagonal entry {} is not positive",
                    self.indices[i]
                )));
            }
        }
        Ok(())
    }
}

/// `int_0^T exp(i (lj - lk) t) dt`.
pub fn time_overlap(lj: f64, lk: f64, horizon: f64) -> Complex64 {
    let d = lj - lk;
    if d.abs() < 1e-12 {
        return Complex64::new(horizon, 0.0);
    }
    // (e^{idT} - 1) / (id) = e^{idT/2} 2 sin(dT/2) / d, free of cancellation.
    let half = 0.5 * d * horizon;
    Complex64::from_polar(2.0 * half.sin() / d, half)
}

/// `int psi_j psi_k dS` over the signed family, by boundary quadrature.
pub fn signed_boundary_products(table: &ModeTable, rule: &QuadratureRule) -> Vec<Vec<f64>> {
    let psi = table.boundary_table(rule);
    let positive: Vec<Vec<f64>> = psi
        .par_iter()
        .map(|a| {
            psi.iter()
                .map(|b| {
                    rule.weights
                        .iter()
                        .zip(a.iter().zip(b))
                        .map(|(w, (x, y))| w * x * y)
                        .sum()
                })
                .collect()
        })
        .collect();
    let idx = signed_order(table.len());
    idx.iter()
        .map(|&j| {
            idx.iter()
                .map(|&k| {
                    let s = (j.signum() * k.signum()) as f64;
                    s * positive[j.unsigned_abs() as usize - 1][k.unsigned_abs() as usize - 1]
                })
                .collect()
        })
        .collect()
}

pub fn analytic_boundary_products(table: &ModeTable) -> Vec<Vec<f64>> {
    let idx = signed_order(table.len());
    idx.iter()
        .map(|&j| idx.iter().map(|&k| table.boundary_inner_analytic(j, k)).collect())
        .collect()
}

/// Gram of `{psi_n exp(i lambda_n t)}`: analytic time overlaps times
/// quadrature boundary products, cross-checked against closed forms.
pub fn assemble_exponential_gram(
    table: &ModeTable,
    horizon: f64,
    spec: QuadratureSpec,
) -> Result<GramMatrix> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("horizon T must be positive, got {horizon}")));
    }
    let rule = table.domain.boundary_quadrature(spec)?;
    let space = signed_boundary_products(table, &rule);
    let analytic = analytic_boundary_products(table);
    let defect = space
        .iter()
        .flatten()
        .zip(analytic.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if defect > tolerances::CROSS_PATH {
        return Err(Error::Resolution(format!(
            "boundary quadrature and closed form disagree by {defect:.3e}; raise q or panels"
        )));
    }
    Ok(exponential_gram_from_products(
        table,
        horizon,
        &space,
        Provenance::AnalyticTimeQuadratureSpace,
        Some(defect),
    ))
}

/// Same Gram with closed-form space integrals only.
pub fn assemble_exponential_gram_analytic(table: &ModeTable, horizon: f64) -> GramMatrix {
    let analytic = analytic_boundary_products(table);
    let mut g = exponential_gram_from_products(
        table,
        horizon,
        &analytic,
        Provenance::AnalyticTimeQuadratureSpace,
        None,
    );
    g.cross_path_defect = Some(0.0);
    g
}

fn exponential_gram_from_products(
    table: &ModeTable,
    horizon: f64,
    space: &[Vec<f64>],
    provenance: Provenance,
    cross_path_defect: Option<f64>,
) -> GramMatrix {
    let idx = signed_order(table.len());
    let lambdas: Vec<f64> = idx.iter().map(|&n| table.lambda(n)).collect();
    let n = idx.len();
    let matrix = CMatrix::from_fn(n, n, |a, b| {
        time_overlap(lambdas[a], lambdas[b], horizon) * space[a][b]
    });
    GramMatrix {
        matrix,
        indices: idx,
        horizon,
        provenance,
        cross_path_defect,
    }
}

/// Time-sampled trace family `z_n(t_i)`, one row per signed index in
/// [`signed_order`], on the uniform grid `t_i = i * step`.
#[derive(Debug, Clone)]
pub struct SampledFamily {
    pub step: f64,
    pub samples: Vec<Vec<Complex64>>,
    /// Largest `|lambda|` represented, used for the resolution check.
    pub lambda_max: f64,
}

impl SampledFamily {
    pub fn intervals(&self) -> usize {
        self.samples.first().map_or(0, |s| s.len().saturating_sub(1))
    }

    pub fn horizon(&self) -> f64 {
        self.step * self.intervals() as f64
    }

    pub fn check_resolution(&self) -> Result<()> {
        let period = 2.0 * std::f64::consts::PI / self.lambda_max;
        if self.step > period / SAMPLES_PER_PERIOD * (1.0 + 1e-12) {
            return Err(Error::Resolution(format!(
                "time step {:.3e} gives fewer than {SAMPLES_PER_PERIOD} samples per period {:.3e}",
                self.step, period
            )));
        }
        let m = self.intervals();
        if m < 2 || m % 2 == 1 || self.samples.iter().any(|s| s.len() != m + 1) {
            return Err(Error::Resolution(
                "sampled traces need a common grid with an even number of intervals".into(),
            ));
        }
        Ok(())
    }
}

/// `G_jk = (int_0^T z_j conj(z_k) dt) (int psi_j psi_k dS)`, time integrals
/// by composite Simpson.
pub fn assemble_sampled_gram(family: &SampledFamily, space: &[Vec<f64>]) -> Result<GramMatrix> {
    family.check_resolution()?;
    let n = family.samples.len();
    if space.len() != n || space.iter().any(|r| r.len() != n) {
        return Err(Error::Data(format!(
            "boundary products are not {n}x{n} for {n} sampled traces"
        )));
    }
    let w = simpson_weights(family.intervals(), family.step);
    let time: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            (0..n)
                .map(|k| {
                    family.samples[j]
                        .iter()
                        .zip(&family.samples[k])
                        .zip(&w)
                        .map(|((a, b), w)| *w * a * b.conj())
                        .sum()
                })
                .collect()
        })
        .collect();
    let matrix = CMatrix::from_fn(n, n, |j, k| time[j][k] * space[j][k]);
    Ok(GramMatrix {
        matrix,
        indices: signed_order(n / 2),
        horizon: family.horizon(),
        provenance: Provenance::ViscoSampled,
        cross_path_defect: None,
    })
}

/// Extreme eigenvalues of a validated Hermitian Gram matrix.
pub fn min_max_eigen_hermitian(g: &GramMatrix) -> Result<(f64, f64)> {
    let e = g.spectrum()?;
    Ok((e.min(), e.max()))
}

/// `c = 2 (T - 2R) / C_Omega`.
pub fn observability_constant(domain: &DomainSpec, horizon: f64) -> f64 {
    2.0 * (horizon - 2.0 * domain.radius) / domain.c_omega
}

#[derive(Debug, Clone, Serialize)]
pub struct RieszReport {
    pub n: usize,
    pub horizon: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub c_bound: f64,
    pub margin: f64,
    pub within_hypothesis: bool,
    /// `None` when `T <= 2R`: reported only.
    pub pass: Option<bool>,
    pub residual_min: f64,
    pub residual_max: f64,
}

impl RieszReport {
    pub fn passed(&self) -> bool {
        self.pass.unwrap_or(true)
    }
}

/// Lower and upper bounds of the signed exponential system for one Gram.
pub fn riesz_report_for(domain: &DomainSpec, g: &GramMatrix) -> Result<RieszReport> {
    g.validate()?;
    let e = g.spectrum()?;
    let norm = g.matrix.frobenius();
    let residual_min = eigen_residual(&g.matrix, e.min(), &e.vector(0)) / norm;
    let residual_max = eigen_residual(&g.matrix, e.max(), &e.vector(g.order() - 1)) / norm;
    if residual_min.max(residual_max) > tolerances::EIGEN_RESIDUAL {
        return Err(Error::Numerical(format!(
            "extreme eigenpair residual {:.3e} exceeds tolerance",
            residual_min.max(residual_max)
        )));
    }
    let trace = g.matrix.trace().re;
    if e.min() < -tolerances::PSD_FLOOR * trace {
        return Err(Error::Numerical(format!(
            "Gram matrix is not positive semidefinite: lambda_min = {:.3e}",
            e.min()
        )));
    }
    let c_bound = observability_constant(domain, g.horizon);
    let margin = e.min() - c_bound;
    let within = g.horizon > 2.0 * domain.radius;
    let pass = within.then(|| margin >= -tolerances::RIESZ_LOWER);
    Ok(RieszReport {
        n: g.order() / 2,
        horizon: g.horizon,
        lambda_min: e.min(),
        lambda_max: e.max(),
        c_bound,
        margin,
        within_hypothesis: within,
        pass,
        residual_min,
        residual_max,
    })
}

pub fn riesz_bounds_report(table: &ModeTable, horizon: f64, spec: QuadratureSpec) -> Result<RieszReport> {
    let g = assemble_exponential_gram(table, horizon, spec)?;
    riesz_report_for(&table.domain, &g)
}

/// Reports for several truncations from one Gram assembly; the tables are
/// nested, so each section is a principal submatrix of the largest.
pub fn riesz_sweep(
    table: &ModeTable,
    counts: &[usize],
    horizon: f64,
    spec: QuadratureSpec,
) -> Result<Vec<RieszReport>> {
    let largest = counts.iter().copied().max().unwrap_or(0);
    if largest == 0 || largest > table.len() {
        return Err(Error::Config(format!(
            "truncations {counts:?} need between 1 and {} modes",
            table.len()
        )));
    }
    let full = assemble_exponential_gram(&table.truncated(largest)?, horizon, spec)?;
    counts
        .par_iter()
        .map(|&n| riesz_report_for(&table.domain, &full.truncated(n)))
        .collect()
}
