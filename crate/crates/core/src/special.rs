//! Bessel functions of the first kind and their positive zeros.
//!
//! `J_m(x)` is evaluated by its power series where the series does not
//! cancel badly, and by Miller's backward recurrence normalized with
//! `J_0 + 2 sum J_2k = 1` everywhere else. Zeros are located by a sign
//! scan, then polished with Newton steps seeded from McMahon's expansion
//! and kept inside the bracket by bisection.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerances;

pub const MAX_ORDER: u32 = 60;
pub const MAX_ARGUMENT: f64 = 500.0;
pub const MAX_RANK: u32 = 200;

const SERIES_LIMIT: f64 = 8.0;
const MAX_NEWTON: usize = 100;
const SCAN_STEP: f64 = 0.5;

/// Checked evaluation of `J_m(x)` inside the table limits.
pub fn bessel_j(m: u32, x: f64) -> Result<f64> {
    if m > MAX_ORDER {
        return Err(Error::Config(format!(
            "bessel order {m} exceeds table limit {MAX_ORDER}"
        )));
    }
    if !(0.0..=MAX_ARGUMENT).contains(&x) {
        return Err(Error::Config(format!(
            "bessel argument {x} outside [0, {MAX_ARGUMENT}]"
        )));
    }
    Ok(jn(m, x))
}

/// Derivative `J_m'(x)`.
pub fn bessel_j_prime(m: u32, x: f64) -> Result<f64> {
    bessel_j(m, x)?;
    Ok(jn_prime(m, x))
}

/// Unchecked `J_m(x)` for `x >= 0`.
pub(crate) fn jn(m: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    let x = x.abs();
    let mf = m as f64;
    if x <= SERIES_LIMIT || x * x <= 4.0 * (mf + 1.0) {
        series(m, x)
    } else {
        miller(m, x)
    }
}

pub(crate) fn jn_prime(m: u32, x: f64) -> f64 {
    if m == 0 {
        -jn(1, x)
    } else {
        0.5 * (jn(m - 1, x) - jn(m + 1, x))
    }
}

fn series(m: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for i in 1..=m {
        term *= half / i as f64;
    }
    let q = half * half;
    let mut sum = term;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= -q / (k * (k + m as f64));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() && k > q.sqrt() {
            break;
        }
        if k > 500.0 {
            break;
        }
    }
    sum
}

fn miller(m: u32, x: f64) -> f64 {
    let top = (m as f64).max(x);
    let mut start = (top + 20.0 + (40.0 * top).sqrt()) as usize;
    if start % 2 == 1 {
        start += 1;
    }
    let mut next = 0.0; // J_{k+1}
    let mut cur = 1e-30; // J_k
    let mut norm = 0.0;
    let mut value = 0.0;
    let mut k = start;
    while k > 0 {
        if k % 2 == 0 {
            norm += 2.0 * cur;
        }
        if k == m as usize {
            value = cur;
        }
        let prev = (2.0 * k as f64 / x) * cur - next;
        next = cur;
        cur = prev;
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
            value *= 1e-250;
        }
        k -= 1;
    }
    norm += cur;
    if m == 0 {
        value = cur;
    }
    value / norm
}

/// McMahon's large-zero expansion for `j_{m,k}`.
pub fn mcmahon_guess(m: u32, k: u32) -> f64 {
    let mu = 4.0 * (m as f64).powi(2);
    let beta = (k as f64 + 0.5 * m as f64 - 0.25) * PI;
    let e = 8.0 * beta;
    beta - (mu - 1.0) / e - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * e.powi(3))
}

fn check_zero_request(m: u32, k: u32) -> Result<()> {
    if m > MAX_ORDER {
        return Err(Error::Config(format!(
            "bessel order {m} exceeds table limit {MAX_ORDER}"
        )));
    }
    if k == 0 || k > MAX_RANK {
        return Err(Error::Config(format!(
            "bessel zero rank {k} outside 1..={MAX_RANK}"
        )));
    }
    Ok(())
}

/// Brackets of the first `count` positive zeros of `J_m`.
fn scan_brackets(m: u32, count: usize) -> Vec<(f64, f64)> {
    let mut brackets = Vec::with_capacity(count);
    let mut a = (m as f64).max(SCAN_STEP);
    let mut fa = jn(m, a);
    while brackets.len() < count {
        let b = a + SCAN_STEP;
        let fb = jn(m, b);
        if fb == 0.0 {
            brackets.push((b, b));
            a = b + 1e-9;
            fa = jn(m, a);
            continue;
        }
        if fa.signum() != fb.signum() {
            brackets.push((a, b));
        }
        a = b;
        fa = fb;
    }
    brackets
}

fn polish(m: u32, k: u32, (mut lo, mut hi): (f64, f64)) -> Result<f64> {
    if lo == hi {
        return Ok(lo);
    }
    let flo = jn(m, lo);
    let guess = mcmahon_guess(m, k);
    let mut x = if guess > lo && guess < hi {
        guess
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..MAX_NEWTON {
        let f = jn(m, x);
        if f == 0.0 {
            return Ok(x);
        }
        if f.signum() == flo.signum() {
            lo = x;
        } else {
            hi = x;
        }
        let df = jn_prime(m, x);
        let mut next = x - f / df;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x {
            return finish(m, k, next);
        }
        x = next;
    }
    Err(Error::Numerical(format!(
        "bessel zero j_({m},{k}) did not converge after {MAX_NEWTON} iterations"
    )))
}

fn finish(m: u32, k: u32, x: f64) -> Result<f64> {
    let residual = jn(m, x).abs();
    if residual > tolerances::BESSEL_ZERO_RESIDUAL {
        return Err(Error::Numerical(format!(
            "bessel zero j_({m},{k}) = {x} leaves residual {residual:e}"
        )));
    }
    Ok(x)
}

/// The k-th positive zero `j_{m,k}` of `J_m`.
pub fn bessel_zero(m: u32, k: u32) -> Result<f64> {
    check_zero_request(m, k)?;
    let brackets = scan_brackets(m, k as usize);
    polish(m, k, brackets[k as usize - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesselZero {
    pub order: u32,
    pub rank: u32,
    pub zero: f64,
}

/// Zeros `j_{m,k}` for `m <= max_order`, `k <= max_rank`, built once.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BesselZeroTable {
    entries: Vec<BesselZero>,
}

impl BesselZeroTable {
    pub fn build(max_order: u32, max_rank: u32) -> Result<Self> {
        check_zero_request(max_order, max_rank.max(1))?;
        let mut entries = Vec::new();
        for m in 0..=max_order {
            let brackets = scan_brackets(m, max_rank as usize);
            for (i, bracket) in brackets.into_iter().enumerate() {
                let k = i as u32 + 1;
                entries.push(BesselZero {
                    order: m,
                    rank: k,
                    zero: polish(m, k, bracket)?,
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn from_entries(mut entries: Vec<BesselZero>) -> Self {
        entries.sort_by_key(|e| (e.order, e.rank));
        Self { entries }
    }

    pub fn entries(&self) -> &[BesselZero] {
        &self.entries
    }

    pub fn get(&self, m: u32, k: u32) -> Option<f64> {
        self.entries
            .binary_search_by_key(&(m, k), |e| (e.order, e.rank))
            .ok()
            .map(|i| self.entries[i].zero)
    }

    /// Zeros of order `m`, increasing in rank.
    pub fn order(&self, m: u32) -> impl Iterator<Item = &BesselZero> {
        self.entries.iter().filter(move |e| e.order == m)
    }

    pub fn insert(&mut self, m: u32, k: u32, zero: f64) {
        match self
            .entries
            .binary_search_by_key(&(m, k), |e| (e.order, e.rank))
        {
            Ok(i) => self.entries[i].zero = zero,
            Err(i) => self.entries.insert(
                i,
                BesselZero {
                    order: m,
                    rank: k,
                    zero,
                },
            ),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
