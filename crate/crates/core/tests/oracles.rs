//! Checks against values computed independently of the library: tabulated
//! Bessel data, closed-form spectra and an ODE-system reformulation.

use std::f64::consts::PI;

use num_complex::Complex64;
use observalab::geometry::{DomainSpec, QuadratureSpec};
use observalab::gram::{assemble_exponential_gram, time_overlap};
use observalab::quadrature::gauss_legendre;
use observalab::special::{bessel_j, bessel_zero};
use observalab::spectral::enumerate_modes;
use observalab::visco::{solve_on_grid, MemoryKernel};
use observalab::wave::TimeGrid;

#[test]
fn bessel_values_match_tables() {
    let cases = [
        (0, 1.0, 0.765_197_686_557_966_6),
        (1, 1.0, 0.440_050_585_744_933_5),
        (0, 10.0, -0.245_935_764_451_348_3),
        (2, 5.0, 0.046_565_116_277_752_2),
    ];
    for (m, x, want) in cases {
        let got = bessel_j(m, x).unwrap();
        assert!((got - want).abs() < 1e-13, "J_{m}({x}) = {got}, want {want}");
    }
}

#[test]
fn bessel_zeros_match_tables() {
    let cases = [
        (0, 1, 2.404_825_557_695_773),
        (0, 2, 5.520_078_110_286_311),
        (1, 1, 3.831_705_970_207_512),
        (2, 1, 5.135_622_301_840_683),
        (0, 10, 30.634_606_468_431_975),
    ];
    for (m, k, want) in cases {
        let got = bessel_zero(m, k).unwrap();
        assert!((got - want).abs() < 1e-12, "j_{m},{k} = {got}, want {want}");
    }
}

#[test]
fn disk_spectrum_is_ordered_bessel_zeros() {
    let d = DomainSpec::disk(2.0).unwrap();
    let t = enumerate_modes(&d, 6).unwrap();
    let want = [
        2.404_825_557_695_773,
        3.831_705_970_207_512,
        3.831_705_970_207_512,
        5.135_622_301_840_683,
        5.135_622_301_840_683,
        5.520_078_110_286_311,
    ];
    for (n, w) in (1..=6).zip(want) {
        assert!((t.lambda(n) - w / 2.0).abs() < 1e-12);
    }
}

#[test]
fn rectangle_spectrum_is_lattice_norms() {
    let d = DomainSpec::rectangle(PI, PI).unwrap();
    let t = enumerate_modes(&d, 12).unwrap();
    let mut want: Vec<f64> = (1..10)
        .flat_map(|m| (1..10).map(move |n| ((m * m + n * n) as f64).sqrt()))
        .collect();
    want.sort_by(f64::total_cmp);
    for n in 1..=12 {
        assert!((t.lambda(n) - want[n as usize - 1]).abs() < 1e-12);
    }
}

#[test]
fn gauss_legendre_integrates_polynomials() {
    let (x, w) = gauss_legendre(6);
    for p in 0..12 {
        let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
        let want = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
        assert!((got - want).abs() < 1e-14, "x^{p}");
    }
}

#[test]
fn time_overlap_matches_brute_force_integral() {
    let t = 3.7;
    for (lj, lk) in [(2.0, 2.0), (3.0, -1.5), (-4.2, 0.7)] {
        let m = 20_000;
        let h = t / m as f64;
        let f = |s: f64| Complex64::new(0.0, (lj - lk) * s).exp();
        let mut sum = f(0.0) + f(t);
        for i in 1..m {
            sum += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let want = sum * h / 3.0;
        assert!((time_overlap(lj, lk, t) - want).norm() < 1e-10);
    }
}

#[test]
fn interval_gram_at_two_pi_is_eight_identity() {
    // psi_n(0) and psi_n(pi) have modulus sqrt(2/pi); the time overlaps of
    // integer frequencies over [0, 2 pi] vanish off the diagonal.
    let d = DomainSpec::interval(PI).unwrap();
    let t = enumerate_modes(&d, 8).unwrap();
    let g = assemble_exponential_gram(&t, 2.0 * PI, QuadratureSpec::default()).unwrap();
    for i in 0..16 {
        for j in 0..16 {
            let want = if i == j { 8.0 } else { 0.0 };
            assert!((g.matrix[(i, j)] - want).norm() < 1e-12);
        }
    }
}

/// `v'' = -l^2 v - l^2 w`, `w' = m0 v - delta w`, forward in `tau` by RK4.
fn exponential_kernel_reference(lambda: f64, m0: f64, delta: f64, horizon: f64, samples: usize, sub: usize) -> Vec<Complex64> {
    let l2 = lambda * lambda;
    let rhs = |x: [Complex64; 3]| [x[1], -l2 * (x[0] + x[2]), m0 * x[0] - delta * x[2]];
    let mut x = [Complex64::new(1.0, 0.0), Complex64::new(0.0, -lambda), Complex64::new(0.0, 0.0)];
    let h = horizon / (samples * sub) as f64;
    let mut out = vec![x[0]];
    let axpy = |x: [Complex64; 3], k: [Complex64; 3], s: f64| [x[0] + s * k[0], x[1] + s * k[1], x[2] + s * k[2]];
    for _ in 0..samples {
        for _ in 0..sub {
            let k1 = rhs(x);
            let k2 = rhs(axpy(x, k1, h / 2.0));
            let k3 = rhs(axpy(x, k2, h / 2.0));
            let k4 = rhs(axpy(x, k3, h));
            for i in 0..3 {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        out.push(x[0]);
    }
    // Index by tau; reverse to index by t.
    out.reverse();
    out
}

#[test]
fn exponential_kernel_matches_ode_system() {
    let horizon = 2.5 * PI;
    for (lambda, m0) in [(3.0, 0.5), (7.0, 0.2)] {
        let grid = TimeGrid {
            horizon,
            intervals: 400,
        };
        let sol = solve_on_grid(lambda, &MemoryKernel::exponential(m0, 1.0), &grid).unwrap();
        let reference = exponential_kernel_reference(lambda, m0, 1.0, horizon, 400, 200);
        let err = sol
            .samples
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-7, "lambda = {lambda}: {err:.2e}");
    }
}

#[test]
fn zero_kernel_is_the_terminal_exponential() {
    let horizon = 2.0;
    let grid = TimeGrid {
        horizon,
        intervals: 200,
    };
    let sol = solve_on_grid(4.0, &MemoryKernel::zero(), &grid).unwrap();
    for (i, z) in sol.samples.iter().enumerate() {
        let t = i as f64 * grid.step();
        assert!((z - Complex64::new(0.0, 4.0 * (t - horizon)).exp()).norm() < 1e-9);
    }
}
