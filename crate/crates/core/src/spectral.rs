//! Dirichlet eigenpairs of the model domains.
//!
//! Positive indices `1..=N` label modes by non-decreasing frequency; the
//! signed family mirrors them with `lambda_{-n} = -lambda_n` and
//! `psi_{-n} = -psi_n`, where `psi_n = d_nu phi_|n| / lambda_n`.

use std::cmp::Ordering;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, DomainKind, DomainSpec, Point};
use crate::quadrature::QuadratureRule;
use crate::special::{self, jn, jn_prime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Cos,
    Sin,
}

/// Geometry-specific multi-index of a positive mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MultiIndex {
    Interval { k: u32 },
    Rectangle { p: u32, q: u32 },
    Disk { m: u32, k: u32, branch: Branch },
}

impl MultiIndex {
    pub fn label(&self) -> String {
        match *self {
            MultiIndex::Interval { k } => format!("({k})"),
            MultiIndex::Rectangle { p, q } => format!("({p},{q})"),
            MultiIndex::Disk { m, k, branch } => {
                let b = match branch {
                    Branch::Cos => "cos",
                    Branch::Sin => "sin",
                };
                format!("({m},{k},{b})")
            }
        }
    }
}

/// One positive mode with everything needed to evaluate it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub index: MultiIndex,
    pub lambda: f64,
    /// L2 normalization constant of the eigenfunction.
    pub norm: f64,
}

impl Mode {
    fn new(domain: &DomainSpec, index: MultiIndex, lambda: f64) -> Result<Self> {
        let norm = match (domain.kind, index) {
            (DomainKind::Interval { length }, MultiIndex::Interval { .. }) => (2.0 / length).sqrt(),
            (DomainKind::Rectangle { width, height }, MultiIndex::Rectangle { .. }) => {
                2.0 / (width * height).sqrt()
            }
            (DomainKind::Disk { radius }, MultiIndex::Disk { m, .. }) => {
                let zero = lambda * radius;
                let angular = if m == 0 { 2.0 * PI } else { PI };
                let jm1 = jn(m + 1, zero);
                1.0 / (angular * 0.5 * radius * radius * jm1 * jm1).sqrt()
            }
            _ => {
                return Err(Error::Config(format!(
                    "multi-index {} does not belong to {}",
                    index.label(),
                    domain.kind.label()
                )))
            }
        };
        Ok(Mode {
            index,
            lambda,
            norm,
        })
    }
}

/// Serializable part of a mode table; evaluators are rebuilt from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    pub n: i64,
    pub multi_index: MultiIndex,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct ModeTable {
    pub domain: DomainSpec,
    modes: Vec<Mode>,
}

/// Ordering of signed indices used for every Gram matrix: `1, -1, 2, -2, ...`.
/// Truncations are then principal submatrices of each other.
pub fn signed_order(count: usize) -> Vec<i64> {
    (1..=count as i64).flat_map(|n| [n, -n]).collect()
}

/// Position of signed index `n` in [`signed_order`].
pub fn slot(n: i64) -> usize {
    assert!(n != 0, "signed index 0 does not exist");
    2 * (n.unsigned_abs() as usize - 1) + usize::from(n < 0)
}

fn by_frequency(a: &(f64, MultiIndex), b: &(f64, MultiIndex)) -> Ordering {
    let scale = a.0.abs().max(b.0.abs()).max(1.0);
    if (a.0 - b.0).abs() <= 1e-12 * scale {
        a.1.cmp(&b.1)
    } else {
        a.0.total_cmp(&b.0)
    }
}

/// The `count` lowest Dirichlet modes. Equal frequencies are ordered by
/// multi-index, so a table for `N` is always a prefix of the table for `N + 1`.
pub fn enumerate_modes(domain: &DomainSpec, count: usize) -> Result<ModeTable> {
    if count == 0 {
        return Err(Error::Config("mode count N must be at least 1".into()));
    }
    let mut candidates: Vec<(f64, MultiIndex)> = Vec::new();
    match domain.kind {
        DomainKind::Interval { length } => {
            for k in 1..=count as u32 {
                candidates.push((k as f64 * PI / length, MultiIndex::Interval { k }));
            }
        }
        DomainKind::Rectangle { width, height } => {
            let freq = |p: u32, q: u32| {
                PI * ((p as f64 / width).powi(2) + (q as f64 / height).powi(2)).sqrt()
            };
            let bound = freq(1, count as u32) * (1.0 + 1e-12);
            let mut p = 1;
            while freq(p, 1) <= bound {
                let mut q = 1;
                while freq(p, q) <= bound {
                    candidates.push((freq(p, q), MultiIndex::Rectangle { p, q }));
                    q += 1;
                }
                p += 1;
            }
        }
        DomainKind::Disk { radius } => {
            let mut bound = special::bessel_zero(0, count as u32)? * (1.0 + 1e-12);
            for m in 0..=special::MAX_ORDER + 1 {
                if candidates.len() >= count {
                    candidates.sort_by(by_frequency);
                    bound = bound.min(candidates[count - 1].0 * radius * (1.0 + 1e-12));
                }
                if m > special::MAX_ORDER {
                    return Err(Error::Config(format!(
                        "disk table with N={count} needs Bessel orders beyond {}",
                        special::MAX_ORDER
                    )));
                }
                let mut k = 1;
                let mut any = false;
                loop {
                    let zero = special::bessel_zero(m, k)?;
                    if zero > bound {
                        break;
                    }
                    any = true;
                    let lambda = zero / radius;
                    candidates.push((lambda, MultiIndex::Disk { m, k, branch: Branch::Cos }));
                    if m > 0 {
                        candidates.push((lambda, MultiIndex::Disk { m, k, branch: Branch::Sin }));
                    }
                    k += 1;
                }
                if !any {
                    break;
                }
            }
        }
    }
    candidates.sort_by(by_frequency);
    candidates.truncate(count);
    let modes = candidates
        .into_iter()
        .map(|(lambda, index)| Mode::new(domain, index, lambda))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModeTable {
        domain: *domain,
        modes,
    })
}

impl ModeTable {
    /// Rebuild a table from cached records; only positive records are read.
    pub fn from_records(domain: &DomainSpec, records: &[ModeRecord]) -> Result<Self> {
        let mut positive: Vec<&ModeRecord> = records.iter().filter(|r| r.n > 0).collect();
        positive.sort_by_key(|r| r.n);
        let mut modes = Vec::with_capacity(positive.len());
        for (i, r) in positive.iter().enumerate() {
            if r.n != i as i64 + 1 {
                return Err(Error::Data(format!("mode records skip index {}", i + 1)));
            }
            modes.push(Mode::new(domain, r.multi_index, r.lambda)?);
        }
        if modes.is_empty() {
            return Err(Error::Data("mode records contain no positive index".into()));
        }
        Ok(ModeTable {
            domain: *domain,
            modes,
        })
    }

    pub fn records(&self) -> Vec<ModeRecord> {
        signed_order(self.len())
            .into_iter()
            .map(|n| ModeRecord {
                n,
                multi_index: self.mode_abs(n).index,
                lambda: self.lambda(n),
            })
            .collect()
    }

    /// Number of positive modes `N`.
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// Prefix table with the first `count` positive modes.
    pub fn truncated(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.len() {
            return Err(Error::Config(format!(
                "cannot truncate a table of {} modes to {count}",
                self.len()
            )));
        }
        Ok(ModeTable {
            domain: self.domain,
            modes: self.modes[..count].to_vec(),
        })
    }

    pub fn signed_indices(&self) -> Vec<i64> {
        signed_order(self.len())
    }

    fn mode_abs(&self, n: i64) -> &Mode {
        let k = n.unsigned_abs() as usize;
        assert!(
            n != 0 && k <= self.modes.len(),
            "signed index {n} outside table of {} modes",
            self.modes.len()
        );
        &self.modes[k - 1]
    }

    pub fn mode(&self, n: i64) -> Result<&Mode> {
        let k = n.unsigned_abs() as usize;
        if n == 0 || k > self.modes.len() {
            return Err(Error::Precondition(format!(
                "signed index {n} not in a table of {} modes",
                self.modes.len()
            )));
        }
        Ok(&self.modes[k - 1])
    }

    /// `lambda_n = sgn(n) lambda_|n|`.
    pub fn lambda(&self, n: i64) -> f64 {
        n.signum() as f64 * self.mode_abs(n).lambda
    }

    /// `phi_|n|(x)` for `x` in the closure of the domain.
    pub fn phi(&self, n: i64, x: Point) -> Result<f64> {
        self.mode(n)?;
        self.domain.check_closure(x)?;
        Ok(self.phi_unchecked(n, x))
    }

    pub fn phi_unchecked(&self, n: i64, x: Point) -> f64 {
        let mode = self.mode_abs(n);
        match (self.domain.kind, mode.index) {
            (DomainKind::Interval { length }, MultiIndex::Interval { k }) => {
                mode.norm * (k as f64 * PI * x[0] / length).sin()
            }
            (DomainKind::Rectangle { width, height }, MultiIndex::Rectangle { p, q }) => {
                mode.norm
                    * (p as f64 * PI * x[0] / width).sin()
                    * (q as f64 * PI * x[1] / height).sin()
            }
            (DomainKind::Disk { .. }, MultiIndex::Disk { m, branch, .. }) => {
                let r = x[0].hypot(x[1]);
                let theta = x[1].atan2(x[0]);
                let (ang, _) = angular(m, branch, theta);
                mode.norm * jn(m, mode.lambda * r) * ang
            }
            _ => unreachable!("mode table mixes geometries"),
        }
    }

    /// Analytic gradient of `phi_|n|`.
    pub fn grad_phi(&self, n: i64, x: Point) -> Point {
        let mode = self.mode_abs(n);
        match (self.domain.kind, mode.index) {
            (DomainKind::Interval { length }, MultiIndex::Interval { k }) => {
                let w = k as f64 * PI / length;
                [mode.norm * w * (w * x[0]).cos(), 0.0]
            }
            (DomainKind::Rectangle { width, height }, MultiIndex::Rectangle { p, q }) => {
                let wx = p as f64 * PI / width;
                let wy = q as f64 * PI / height;
                [
                    mode.norm * wx * (wx * x[0]).cos() * (wy * x[1]).sin(),
                    mode.norm * wy * (wx * x[0]).sin() * (wy * x[1]).cos(),
                ]
            }
            (DomainKind::Disk { .. }, MultiIndex::Disk { m, branch, .. }) => {
                let kappa = mode.lambda;
                let r = x[0].hypot(x[1]);
                let theta = x[1].atan2(x[0]);
                let (c, s) = (theta.cos(), theta.sin());
                let (ang, dang) = angular(m, branch, theta);
                let s_arg = kappa * r;
                let dr = mode.norm * kappa * jn_prime(m, s_arg) * ang;
                // (1/r) d_theta phi, with J_m(s)/s = (J_{m-1} + J_{m+1}) / 2m.
                let dt = if m == 0 {
                    0.0
                } else {
                    mode.norm * kappa * 0.5 * (jn(m - 1, s_arg) + jn(m + 1, s_arg)) * dang
                        / m as f64
                };
                [dr * c - dt * s, dr * s + dt * c]
            }
            _ => unreachable!("mode table mixes geometries"),
        }
    }

    /// Laplacian of `phi_|n|` from its second derivatives (not from the
    /// eigenvalue relation), so `laplacian + lambda^2 phi` is a genuine check.
    pub fn laplacian_phi(&self, n: i64, x: Point) -> f64 {
        let mode = self.mode_abs(n);
        match (self.domain.kind, mode.index) {
            (DomainKind::Interval { length }, MultiIndex::Interval { k }) => {
                let w = k as f64 * PI / length;
                -w * w * mode.norm * (w * x[0]).sin()
            }
            (DomainKind::Rectangle { width, height }, MultiIndex::Rectangle { p, q }) => {
                let wx = p as f64 * PI / width;
                let wy = q as f64 * PI / height;
                let f = mode.norm * (wx * x[0]).sin() * (wy * x[1]).sin();
                -wx * wx * f - wy * wy * f
            }
            (DomainKind::Disk { .. }, MultiIndex::Disk { m, branch, .. }) => {
                let kappa = mode.lambda;
                let r = x[0].hypot(x[1]);
                let theta = x[1].atan2(x[0]);
                let (ang, _) = angular(m, branch, theta);
                let s = kappa * r;
                let j = |order: i64| {
                    if order < 0 {
                        // J_{-k} = (-1)^k J_k
                        let k = (-order) as u32;
                        if k % 2 == 0 {
                            jn(k, s)
                        } else {
                            -jn(k, s)
                        }
                    } else {
                        jn(order as u32, s)
                    }
                };
                let mi = m as i64;
                let jpp = 0.25 * (j(mi - 2) - 2.0 * j(mi) + j(mi + 2));
                let jp = 0.5 * (j(mi - 1) - j(mi + 1));
                let radial = kappa * kappa * jpp + kappa * jp / r - (m * m) as f64 * j(mi) / (r * r);
                mode.norm * radial * ang
            }
            _ => unreachable!("mode table mixes geometries"),
        }
    }

    /// `d_nu phi_|n|` at a boundary point with known outward normal.
    pub fn dnu_phi(&self, n: i64, x: Point, normal: Point) -> f64 {
        dot(self.grad_phi(n, x), normal)
    }

    /// `psi_n(x) = d_nu phi_|n|(x) / lambda_n`, odd in the sign of `n`.
    pub fn psi(&self, n: i64, x: Point) -> Result<f64> {
        self.mode(n)?;
        let normal = self.domain.boundary_normal(x)?;
        Ok(self.psi_with_normal(n, x, normal))
    }

    pub fn psi_with_normal(&self, n: i64, x: Point, normal: Point) -> f64 {
        self.dnu_phi(n, x, normal) / self.lambda(n)
    }

    /// `psi_k` for positive `k = 1..=N` at every node of a boundary rule;
    /// row `k - 1` holds mode `k`. Negative indices are the negated rows.
    pub fn boundary_table(&self, rule: &QuadratureRule) -> Vec<Vec<f64>> {
        (1..=self.len() as i64)
            .into_par_iter()
            .map(|k| {
                rule.nodes
                    .iter()
                    .zip(&rule.normals)
                    .map(|(&x, &nu)| self.psi_with_normal(k, x, nu))
                    .collect()
            })
            .collect()
    }

    /// `phi_k` for positive `k` at every node of an interior rule.
    pub fn interior_table(&self, rule: &QuadratureRule) -> Vec<Vec<f64>> {
        (1..=self.len() as i64)
            .into_par_iter()
            .map(|k| rule.nodes.iter().map(|&x| self.phi_unchecked(k, x)).collect())
            .collect()
    }

    /// Closed-form `int_{dOmega} psi_j psi_k dS` for signed indices.
    pub fn boundary_inner_analytic(&self, j: i64, k: i64) -> f64 {
        let a = self.mode_abs(j);
        let b = self.mode_abs(k);
        let sign = (j.signum() * k.signum()) as f64;
        let parity = |s: u32| if s % 2 == 0 { 2.0 } else { 0.0 };
        let value = match (self.domain.kind, a.index, b.index) {
            (DomainKind::Interval { length }, MultiIndex::Interval { k: p }, MultiIndex::Interval { k: q }) => {
                2.0 * parity(p + q) / length
            }
            (
                DomainKind::Rectangle { width, height },
                MultiIndex::Rectangle { p: p1, q: q1 },
                MultiIndex::Rectangle { p: p2, q: q2 },
            ) => {
                let mut v = 0.0;
                if q1 == q2 {
                    v += 2.0 * (p1 * p2) as f64 * PI * PI / width.powi(3) * parity(p1 + p2);
                }
                if p1 == p2 {
                    v += 2.0 * (q1 * q2) as f64 * PI * PI / height.powi(3) * parity(q1 + q2);
                }
                v / (a.lambda * b.lambda)
            }
            (
                DomainKind::Disk { radius },
                MultiIndex::Disk { m: m1, branch: b1, .. },
                MultiIndex::Disk { m: m2, branch: b2, .. },
            ) => {
                if m1 != m2 || b1 != b2 {
                    0.0
                } else {
                    let angular = if m1 == 0 { 2.0 * PI } else { PI };
                    let ta = -a.norm * jn(m1 + 1, a.lambda * radius);
                    let tb = -b.norm * jn(m2 + 1, b.lambda * radius);
                    radius * angular * ta * tb
                }
            }
            _ => unreachable!("mode table mixes geometries"),
        };
        sign * value
    }
}

fn angular(m: u32, branch: Branch, theta: f64) -> (f64, f64) {
    if m == 0 {
        return (1.0, 0.0);
    }
    let mt = m as f64 * theta;
    match branch {
        Branch::Cos => (mt.cos(), -(m as f64) * mt.sin()),
        Branch::Sin => (mt.sin(), m as f64 * mt.cos()),
    }
}

/// Largest `|int phi_j phi_k - delta_jk|` over the table.
pub fn orthonormality_defect(table: &ModeTable, rule: &QuadratureRule) -> f64 {
    let values = table.interior_table(rule);
    let n = values.len();
    (0..n)
        .into_par_iter()
        .map(|j| {
            let mut worst: f64 = 0.0;
            for k in j..n {
                let s: f64 = rule
                    .weights
                    .iter()
                    .zip(values[j].iter().zip(&values[k]))
                    .map(|(w, (a, b))| w * a * b)
                    .sum();
                let target = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}
