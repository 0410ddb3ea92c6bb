//! Certification thresholds.
//!
//! Every pass/fail threshold used by the suites lives here so that the
//! library, the CLI and the acceptance tests agree on one number.

/// Weights of analytic quadrature rules must sum to the measure within this.
pub const QUADRATURE_MEASURE: f64 = 1e-12;

/// Orthonormality of retained eigenfunctions under interior quadrature.
pub const ORTHONORMALITY: f64 = 1e-8;

/// Bessel zeros: |J_m(j_{m,k})| must not exceed this.
pub const BESSEL_ZERO_RESIDUAL: f64 = 1e-12;

/// Rellich pairing on the interval and rectangle.
pub const RELLICH: f64 = 1e-6;

/// Rellich pairing on the disk, relaxed for Bessel evaluation noise.
pub const RELLICH_DISK: f64 = 1e-5;

/// Antisymmetry of the multiplier operator between distinct eigenfunctions.
pub const ANTISYMMETRY: f64 = 1e-8;

/// One-sided slack of the quasi-orthogonality inequality.
pub const QUASI_ORTHOGONALITY_SLACK: f64 = 1e-8;

/// Boundary identity A phi = (m . nu) d_nu phi at boundary nodes.
pub const BOUNDARY_MULTIPLIER: f64 = 1e-8;

/// Hermiticity of an assembled Gram matrix.
pub const HERMITIAN: f64 = 1e-10;

/// Relative positive-semidefiniteness floor: lambda_min >= -PSD * trace.
pub const PSD_FLOOR: f64 = 1e-8;

/// Analytic versus quadrature boundary inner products.
pub const CROSS_PATH: f64 = 1e-8;

/// Absolute slack on the certified lower Gram bound.
pub const RIESZ_LOWER: f64 = 1e-6;

/// Eigenpair residual relative to the matrix norm.
pub const EIGEN_RESIDUAL: f64 = 1e-8;

/// Flux norm versus Gram quadratic form, relative.
pub const FLUX_GRAM_RELATIVE: f64 = 1e-6;

/// Observability ratio slack below the constant 2(T - 2R)/C_Omega.
pub const OBSERVABILITY_SLACK: f64 = 1e-6;

/// Relative residual targeted by the control solve.
pub const CONTROL_SOLVE: f64 = 1e-10;

/// Relative steering error accepted for a certified control.
pub const STEERING: f64 = 1e-3;

/// Decay exponent threshold for the closeness estimate.
pub const CLOSENESS_SLOPE: f64 = -1.8;

/// Minimum coefficient of determination of the closeness fit.
pub const CLOSENESS_R2: f64 = 0.9;

/// Damped family certificate: lambda_min >= MARGIN * lambda_max.
pub const DAMPED_RIESZ_MARGIN: f64 = 1e-3;

/// Upper Riesz bound monitor: lambda_max(40) / lambda_max(10).
pub const UPPER_BOUND_GROWTH: f64 = 1.5;

/// Generalized eigenproblem: E eigenvalues below this fraction of the trace
/// are treated as numerically singular.
pub const ILL_POSED_FLOOR: f64 = 1e-10;

/// Finite-section q at or below this is reported as zero (quadrature and
/// time-stepping round-off on a vanishing difference system).
pub const Q_ZERO: f64 = 1e-12;

/// Zero-kernel damped Gram spectrum versus the undamped Gram spectrum, absolute.
pub const ZERO_KERNEL_SPECTRA: f64 = 1e-6;
