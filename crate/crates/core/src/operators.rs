//! Multiplier operators and the identities they satisfy on eigenfunctions.
//!
//! `A u = m . grad u` with `m(x) = x - x0`, and `V u = alpha . grad u` with a
//! linear field `alpha` satisfying `alpha . nu = 2` on every face or arc.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{dot, DomainKind, DomainSpec, Point, QuadratureSpec};
use crate::quadrature::QuadratureRule;
use crate::sampling;
use crate::spectral::{signed_order, slot, ModeTable};
use crate::tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FieldKind {
    A,
    V,
}

#[derive(Debug, Clone, Copy)]
pub struct FieldOperator {
    pub kind: FieldKind,
    pub domain: DomainSpec,
}

/// Linear field with `alpha . nu = 2` on the boundary of each model domain.
pub fn alpha_field(domain: &DomainSpec, x: Point) -> Point {
    let m = domain.multiplier(x);
    match domain.kind {
        DomainKind::Interval { length } => [4.0 * m[0] / length, 0.0],
        DomainKind::Rectangle { width, height } => [4.0 * m[0] / width, 4.0 * m[1] / height],
        DomainKind::Disk { radius } => [2.0 * m[0] / radius, 2.0 * m[1] / radius],
    }
}

impl FieldOperator {
    pub fn multiplier(domain: DomainSpec) -> Self {
        Self {
            kind: FieldKind::A,
            domain,
        }
    }

    pub fn alpha(domain: DomainSpec) -> Self {
        Self {
            kind: FieldKind::V,
            domain,
        }
    }

    pub fn field(&self, x: Point) -> Point {
        match self.kind {
            FieldKind::A => self.domain.multiplier(x),
            FieldKind::V => alpha_field(&self.domain, x),
        }
    }

    /// `(field . grad phi_|n|)(x)` without the closure check.
    pub fn apply_unchecked(&self, table: &ModeTable, n: i64, x: Point) -> f64 {
        dot(self.field(x), table.grad_phi(n, x))
    }

    pub fn apply(&self, table: &ModeTable, n: i64, x: Point) -> Result<f64> {
        table.mode(n)?;
        self.domain.check_closure(x)?;
        Ok(self.apply_unchecked(table, n, x))
    }
}

/// `(A phi_|n|)(x)` for `x` in the closure of the domain.
pub fn apply_a_mode(table: &ModeTable, n: i64, x: Point) -> Result<f64> {
    FieldOperator::multiplier(table.domain).apply(table, n, x)
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub check: String,
    pub j: Option<i64>,
    pub k: Option<i64>,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityReport {
    fn equality(check: &str, j: Option<i64>, k: Option<i64>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let abs_error = (lhs - rhs).abs();
        Self {
            check: check.to_string(),
            j,
            k,
            lhs,
            rhs,
            abs_error,
            rel_error: abs_error / rhs.abs().max(f64::MIN_POSITIVE),
            tolerance,
            pass: abs_error <= tolerance,
        }
    }

    /// One-sided `lhs <= rhs + tolerance`; `abs_error` is the excess.
    fn inequality(check: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let abs_error = (lhs - rhs).max(0.0);
        Self {
            check: check.to_string(),
            j: None,
            k: None,
            lhs,
            rhs,
            abs_error,
            rel_error: abs_error / rhs.abs().max(f64::MIN_POSITIVE),
            tolerance,
            pass: abs_error <= tolerance,
        }
    }
}

/// Mode values sampled once on interior and boundary rules, shared by all
/// identity checks.
pub struct IdentityBench {
    pub table: ModeTable,
    pub interior: QuadratureRule,
    pub boundary: QuadratureRule,
    /// `phi_k` at interior nodes, row `k - 1`.
    phi: Vec<Vec<f64>>,
    /// `A phi_k` at interior nodes.
    a_phi: Vec<Vec<f64>>,
    /// `psi_k` at boundary nodes for positive `k`.
    psi: Vec<Vec<f64>>,
    m_dot_nu: Vec<f64>,
    /// `int A phi_j phi_k` for positive `j, k`.
    a_gram: Vec<Vec<f64>>,
}

impl IdentityBench {
    pub fn new(table: ModeTable, spec: QuadratureSpec) -> Result<Self> {
        let domain = table.domain;
        let interior = domain.interior_quadrature(spec)?;
        let boundary = domain.boundary_quadrature(spec)?;
        let op = FieldOperator::multiplier(domain);
        let phi = table.interior_table(&interior);
        let a_phi: Vec<Vec<f64>> = (1..=table.len() as i64)
            .into_par_iter()
            .map(|k| {
                interior
                    .nodes
                    .iter()
                    .map(|&x| op.apply_unchecked(&table, k, x))
                    .collect()
            })
            .collect();
        let psi = table.boundary_table(&boundary);
        let m_dot_nu = boundary
            .nodes
            .iter()
            .zip(&boundary.normals)
            .map(|(&x, &nu)| dot(domain.multiplier(x), nu))
            .collect();
        let a_gram = a_phi
            .par_iter()
            .map(|ap| {
                phi.iter()
                    .map(|p| weighted(&interior.weights, ap, p))
                    .collect()
            })
            .collect();
        Ok(Self {
            table,
            interior,
            boundary,
            phi,
            a_phi,
            psi,
            m_dot_nu,
            a_gram,
        })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    fn check_index(&self, n: i64) -> Result<()> {
        self.table.mode(n).map(|_| ())
    }

    fn psi_row(&self, n: i64) -> impl Iterator<Item = f64> + '_ {
        let s = n.signum() as f64;
        self.psi[n.unsigned_abs() as usize - 1].iter().map(move |v| s * v)
    }

    fn rellich_tolerance(&self) -> f64 {
        match self.table.domain.kind {
            DomainKind::Disk { .. } => tolerances::RELLICH_DISK,
            _ => tolerances::RELLICH,
        }
    }

    /// `int_{dOmega} (m . nu) psi_j psi_k dS` against its interior expression.
    pub fn rellich_pairing(&self, j: i64, k: i64) -> Result<IdentityReport> {
        self.check_index(j)?;
        self.check_index(k)?;
        let lhs: f64 = self
            .boundary
            .weights
            .iter()
            .zip(&self.m_dot_nu)
            .zip(self.psi_row(j).zip(self.psi_row(k)))
            .map(|((w, mn), (a, b))| w * mn * a * b)
            .sum();
        let rhs = if j == k {
            2.0
        } else if j == -k {
            -2.0
        } else {
            let (lj, lk) = (self.table.lambda(j), self.table.lambda(k));
            (lj * lj - lk * lk) / (lj * lk) * self.a_inner_unchecked(j, k)
        };
        Ok(IdentityReport::equality(
            "rellich",
            Some(j),
            Some(k),
            lhs,
            rhs,
            self.rellich_tolerance(),
        ))
    }

    fn a_inner_unchecked(&self, j: i64, k: i64) -> f64 {
        self.a_gram[j.unsigned_abs() as usize - 1][k.unsigned_abs() as usize - 1]
    }

    /// `int_Omega A phi_|j| phi_|k| dx`; defined only for `|j| != |k|`.
    pub fn a_inner(&self, j: i64, k: i64) -> Result<f64> {
        self.check_index(j)?;
        self.check_index(k)?;
        if j.abs() == k.abs() {
            return Err(Error::Precondition(format!(
                "a_inner needs |j| != |k|, got j={j}, k={k}"
            )));
        }
        Ok(self.a_inner_unchecked(j, k))
    }

    pub fn antisymmetry(&self, j: i64, k: i64) -> Result<IdentityReport> {
        let s = self.a_inner(j, k)? + self.a_inner(k, j)?;
        Ok(IdentityReport::equality(
            "antisymmetry",
            Some(j),
            Some(k),
            s,
            0.0,
            tolerances::ANTISYMMETRY,
        ))
    }

    /// `2 Re int A phi_|j| phi_|j|` against `-d`.
    pub fn diagonal_multiplier(&self, j: i64) -> Result<IdentityReport> {
        self.check_index(j)?;
        let v = 2.0 * self.a_inner_unchecked(j, j);
        Ok(IdentityReport::equality(
            "multiplier_diagonal",
            Some(j),
            Some(j),
            v,
            -(self.table.domain.dimension as f64),
            tolerances::ANTISYMMETRY,
        ))
    }

    /// `A phi = (m . nu) d_nu phi` at every boundary node; reports the worst node.
    pub fn boundary_multiplier(&self, n: i64) -> Result<IdentityReport> {
        self.check_index(n)?;
        let op = FieldOperator::multiplier(self.table.domain);
        let mut worst = (0.0, 0.0, -1.0);
        for ((&x, &nu), &mn) in self
            .boundary
            .nodes
            .iter()
            .zip(&self.boundary.normals)
            .zip(&self.m_dot_nu)
        {
            let lhs = op.apply_unchecked(&self.table, n, x);
            let rhs = mn * self.table.dnu_phi(n, x, nu);
            let err = (lhs - rhs).abs();
            if err > worst.2 {
                worst = (lhs, rhs, err);
            }
        }
        let scale = self.table.lambda(n).abs().max(1.0);
        Ok(IdentityReport::equality(
            "boundary_multiplier",
            Some(n),
            None,
            worst.0,
            worst.1,
            tolerances::BOUNDARY_MULTIPLIER * scale,
        ))
    }

    fn check_coefficients(&self, u: &[Complex64]) -> Result<()> {
        if u.len() != 2 * self.len() {
            return Err(Error::Precondition(format!(
                "expected {} signed coefficients, got {}",
                2 * self.len(),
                u.len()
            )));
        }
        Ok(())
    }

    /// `int |sum u_j A phi_|j| / lambda_j|^2 <= R^2 sum (|u_j|^2 - u_j conj(u_-j))`.
    pub fn quasi_orthogonality_check(&self, u: &[Complex64]) -> Result<IdentityReport> {
        self.check_coefficients(u)?;
        let n = self.len();
        let c: Vec<Complex64> = (1..=n as i64)
            .map(|k| (u[slot(k)] - u[slot(-k)]) / self.table.lambda(k))
            .collect();
        let lhs: f64 = (0..self.interior.len())
            .into_par_iter()
            .map(|i| {
                let v: Complex64 = c.iter().zip(&self.a_phi).map(|(ck, row)| ck * row[i]).sum();
                self.interior.weights[i] * v.norm_sqr()
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        let r2 = self.table.domain.radius.powi(2);
        let rhs = r2
            * signed_order(n)
                .into_iter()
                .map(|j| u[slot(j)].norm_sqr() - (u[slot(j)] * u[slot(-j)].conj()).re)
                .sum::<f64>();
        Ok(IdentityReport::inequality(
            "quasi_orthogonality",
            lhs,
            rhs,
            tolerances::QUASI_ORTHOGONALITY_SLACK,
        ))
    }

    /// `int |sum a_n psi_n|^2 dS / (||a|| ||lambda a||)`.
    pub fn psib_ratio(&self, a: &[Complex64]) -> Result<f64> {
        self.check_coefficients(a)?;
        let norm2: f64 = a.iter().map(|z| z.norm_sqr()).sum();
        if norm2 == 0.0 {
            return Err(Error::Precondition("psib_ratio of the zero vector".into()));
        }
        let n = self.len();
        let c: Vec<Complex64> = (1..=n as i64).map(|k| a[slot(k)] - a[slot(-k)]).collect();
        let num: f64 = (0..self.boundary.len())
            .map(|i| {
                let v: Complex64 = c.iter().zip(&self.psi).map(|(ck, row)| ck * row[i]).sum();
                self.boundary.weights[i] * v.norm_sqr()
            })
            .sum();
        let weighted: f64 = signed_order(n)
            .into_iter()
            .map(|j| self.table.lambda(j).powi(2) * a[slot(j)].norm_sqr())
            .sum();
        Ok(num / (norm2.sqrt() * weighted.sqrt()))
    }

    /// `int phi_j phi_k` from the cached interior samples.
    pub fn mass(&self, j: i64, k: i64) -> f64 {
        weighted(
            &self.interior.weights,
            &self.phi[j.unsigned_abs() as usize - 1],
            &self.phi[k.unsigned_abs() as usize - 1],
        )
    }

    pub fn rellich_suite(&self, max_index: usize) -> Result<Vec<IdentityReport>> {
        let idx = signed_order(max_index.min(self.len()));
        idx.par_iter()
            .flat_map_iter(|&j| idx.iter().map(move |&k| (j, k)))
            .map(|(j, k)| self.rellich_pairing(j, k))
            .collect()
    }

    pub fn antisymmetry_suite(&self, max_index: usize) -> Result<Vec<IdentityReport>> {
        let idx = signed_order(max_index.min(self.len()));
        idx.iter()
            .flat_map(|&j| idx.iter().map(move |&k| (j, k)))
            .filter(|(j, k)| j.abs() != k.abs())
            .map(|(j, k)| self.antisymmetry(j, k))
            .collect()
    }

    pub fn quasi_orthogonality_suite(&self, draws: usize, seed: u64) -> Result<Vec<IdentityReport>> {
        (0..draws as u64)
            .into_par_iter()
            .map(|d| {
                let mut rng = sampling::stream(seed, d);
                let u = sampling::complex_gaussians(&mut rng, 2 * self.len());
                self.quasi_orthogonality_check(&u)
            })
            .collect()
    }

    /// Running supremum of `psib_ratio` over seeded random draws.
    pub fn psib_supremum(&self, draws: usize, seed: u64) -> Result<f64> {
        let ratios = (0..draws as u64)
            .into_par_iter()
            .map(|d| {
                let mut rng = sampling::stream(seed, d);
                let a = sampling::complex_gaussians(&mut rng, 2 * self.len());
                self.psib_ratio(&a)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut sup = ratios.iter().cloned().fold(0.0, f64::max);
        // Single modes are admissible directions too.
        for k in 1..=self.len() as i64 {
            let mut a = vec![Complex64::new(0.0, 0.0); 2 * self.len()];
            a[slot(k)] = Complex64::new(1.0, 0.0);
            sup = sup.max(self.psib_ratio(&a)?);
        }
        Ok(sup)
    }
}

fn weighted(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * x * y).sum()
}
