//! Quadrature, special functions, and random-variate primitives shared by all
//! other modules.
//!
//! Everything here is pure (except RNG state) and safe for concurrent use;
//! [`RngStream`] values are owned per worker and never shared mutably.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use thiserror::Error;

/// Errors from the numerical routines.
#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("quadrature failed to converge: estimated error {achieved:.3e} exceeds tolerance {requested:.3e}")]
    QuadratureNonconvergence { achieved: f64, requested: f64 },
    #[error("integral appears to diverge (partial values exceeded {ceiling:.3e})")]
    DivergenceDetected { ceiling: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("iteration failed to converge: {0}")]
    ConvergenceFailure(String),
}

/// Tolerances and subdivision budget for adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Target relative error of the whole integral.
    pub rel_tol: f64,
    /// Absolute-error floor, protecting integrals whose value is near zero.
    pub abs_tol: f64,
    /// Maximum recursive bisection depth before giving up.
    pub max_subdivisions: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_tol: 1e-13, max_subdivisions: 60 }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<(), NumericsError> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(NumericsError::Domain("quadrature tolerances must be positive".into()));
        }
        if self.max_subdivisions < 1 {
            return Err(NumericsError::Domain("max_subdivisions must be at least 1".into()));
        }
        Ok(())
    }
}

/// Partial values larger than this abort semi-infinite integration as divergent.
const DIVERGENCE_CEILING: f64 = 1e30;

/// Normalized sinc: sin(πx)/(πx), with the removable singularity at 0 → 1.
pub fn sinc(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 1e-8 {
        // Second-order Taylor expansion avoids 0/0 and keeps full precision.
        let px = std::f64::consts::PI * x;
        return 1.0 - px * px / 6.0;
    }
    let px = std::f64::consts::PI * x;
    px.sin() / px
}

/// Upper-tail probability of a standard Gaussian: Q(x) = P[N(0,1) > x].
pub fn gaussian_q(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Standard Gaussian density.
fn gaussian_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Rational approximation to the standard-normal quantile (lower-tail
/// probability `p`), accurate to ~1.15e-9 relative; used as the Newton seed.
fn normal_quantile_approx(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile_approx(1.0 - p)
    }
}

/// Inverse of the Gaussian Q-function: returns `x` with `Q(x) = eps`.
///
/// A high-accuracy rational initializer is refined by Newton iteration on
/// ln Q (well conditioned deep in the tail); the result satisfies
/// |Q(x) − eps| / eps < 1e-9.
pub fn inverse_q(eps: f64) -> Result<f64, NumericsError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(NumericsError::Domain(format!(
            "inverse_q argument must lie in (0,1), got {eps}"
        )));
    }
    // Q(x) = eps  ⇔  Φ(x) = 1 − eps  ⇔  x = −Φ⁻¹(eps); evaluating the
    // quantile at eps (not 1−eps) keeps the tiny-eps branch well conditioned.
    let mut x = -normal_quantile_approx(eps);
    let ln_eps = eps.ln();
    for _ in 0..12 {
        let q = gaussian_q(x);
        if q <= 0.0 || !q.is_finite() {
            return Err(NumericsError::ConvergenceFailure(format!(
                "Q underflowed at x={x}; eps={eps} is too extreme for f64"
            )));
        }
        let step = (q.ln() - ln_eps) * q / gaussian_pdf(x);
        x += step;
        if step.abs() < 1e-14 * (1.0 + x.abs()) {
            break;
        }
    }
    let rel = (gaussian_q(x) - eps).abs() / eps;
    if rel >= 1e-9 {
        return Err(NumericsError::ConvergenceFailure(format!(
            "inverse_q residual {rel:.2e} at eps={eps}"
        )));
    }
    Ok(x)
}

/// Adaptive-Simpson step: integrates `f` over `[a,b]` given the cached
/// endpoint/midpoint values and the whole-interval Simpson estimate.
#[allow(clippy::too_many_arguments)]
fn adaptive_simpson<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    worst_err: &mut f64,
) -> f64 {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let h6 = (b - a) / 12.0;
    let left = h6 * (fa + 4.0 * flm + fm);
    let right = h6 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || (b - a).abs() < 1e-300 {
        return left + right + delta / 15.0;
    }
    if depth == 0 {
        *worst_err = worst_err.max(delta.abs() / 15.0);
        return left + right + delta / 15.0;
    }
    adaptive_simpson(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1, worst_err)
        + adaptive_simpson(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1, worst_err)
}

/// Integrates `f` over the finite interval `[a, b]` by adaptive Simpson
/// subdivision to the tolerances in `spec`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
) -> Result<f64, NumericsError> {
    spec.validate()?;
    if a == b {
        return Ok(0.0);
    }
    // Coarse 16-panel Simpson pass fixes the scale for the relative tolerance
    // and seeds the subsequent adaptive refinement.
    let n = 16usize;
    let h = (b - a) / n as f64;
    let mut coarse = 0.0;
    let mut values = Vec::with_capacity(n + 1);
    for i in 0..=n {
        values.push(f(a + h * i as f64));
    }
    for i in 0..n {
        coarse += h / 6.0 * (values[i] + 4.0 * f(a + h * (i as f64 + 0.5)) + values[i + 1]);
    }
    let tol_total = spec.abs_tol.max(spec.rel_tol * coarse.abs());
    let mut worst_err = 0.0f64;
    let mut total = 0.0;
    for i in 0..n {
        let xa = a + h * i as f64;
        let xb = xa + h;
        let xm = 0.5 * (xa + xb);
        let fa = values[i];
        let fb = values[i + 1];
        let fm = f(xm);
        let whole = h / 6.0 * (fa + 4.0 * fm + fb);
        total += adaptive_simpson(
            &mut f,
            xa,
            fa,
            xb,
            fb,
            xm,
            fm,
            whole,
            tol_total / n as f64,
            spec.max_subdivisions,
            &mut worst_err,
        );
    }
    if !total.is_finite() {
        return Err(NumericsError::DivergenceDetected { ceiling: DIVERGENCE_CEILING });
    }
    if worst_err > tol_total {
        return Err(NumericsError::QuadratureNonconvergence {
            achieved: worst_err,
            requested: tol_total,
        });
    }
    Ok(total)
}

/// Integrates `f` over `[0, ∞)` via the substitution x = t/(1−t), which maps
/// the half-line onto [0,1), followed by adaptive subdivision.
///
/// Intended for integrands with eventual exponential decay; integrands that
/// keep growing are reported as divergent.
pub fn integrate_semi_infinite<F: FnMut(f64) -> f64>(
    mut f: F,
    spec: &QuadratureSpec,
) -> Result<f64, NumericsError> {
    let mut diverged = false;
    let result = integrate(
        |t: f64| {
            if t >= 1.0 - 1e-14 {
                return 0.0;
            }
            let u = 1.0 - t;
            let v = f(t / u) / (u * u);
            if v.abs() > DIVERGENCE_CEILING {
                diverged = true;
                return 0.0;
            }
            v
        },
        0.0,
        1.0,
        spec,
    );
    if diverged {
        return Err(NumericsError::DivergenceDetected { ceiling: DIVERGENCE_CEILING });
    }
    result
}

/// The interference-geometry kernel ℓ(y, z) = y^z / sinc(z) − ∫₀¹ y/(y + t^{1/z}) dt
/// for y ≥ 0 and z ∈ (0, 1).
///
/// The inner integrand is evaluated raw (no u = t^{1/z} substitution): for
/// z ∈ (0,1) the exponent 1/z exceeds 1, so t ↦ t^{1/z} is smooth on [0,1]
/// while the substituted form would carry an integrable endpoint singularity.
pub fn ell(y: f64, z: f64, spec: &QuadratureSpec) -> Result<f64, NumericsError> {
    if !(y >= 0.0) {
        return Err(NumericsError::Domain(format!("ell requires y >= 0, got {y}")));
    }
    if !(z > 0.0 && z < 1.0) {
        return Err(NumericsError::Domain(format!("ell requires 0 < z < 1, got {z}")));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let inv_z = 1.0 / z;
    let integral = integrate(|t: f64| y / (y + t.powf(inv_z)), 0.0, 1.0, spec)?;
    Ok((y.powf(z) / sinc(z) - integral).max(0.0))
}

/// Draws a Gamma(shape, rate) variate (mean = shape/rate).
///
/// With integer shape this is the law of a sum of `shape` exponentials, which
/// is how squared weighted distances of the k-th nearest point arise.
pub fn sample_gamma(shape: f64, rate: f64, rng: &mut RngStream) -> f64 {
    assert!(shape > 0.0 && rate > 0.0, "sample_gamma requires shape > 0 and rate > 0");
    let dist = rand_distr::Gamma::new(shape, 1.0 / rate).expect("valid Gamma parameters");
    dist.sample(rng)
}

/// A seeded, stream-indexed random generator.
///
/// Identical `(seed, stream)` pairs reproduce identical variate sequences;
/// distinct stream indices yield statistically independent sequences. Streams
/// are cheap to construct, so parallel Monte Carlo derives one per trial from
/// `(seed, trial_index)` and results never depend on thread scheduling.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits, the standard open-interval construction.
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unit-mean exponential draw.
    pub fn exp1(&mut self) -> f64 {
        -(1.0 - self.uniform()).ln()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: u32) -> u32 {
        debug_assert!(n > 0);
        // Rejection-free scaling is fine here: n is tiny (RRU counts, tiers),
        // so modulo bias ~ n/2^64 is far below statistical resolution.
        (self.next_u64() % u64::from(n)) as u32
    }

    /// Poisson draw with the given mean.
    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        let dist = rand_distr::Poisson::new(mean).expect("valid Poisson mean");
        dist.sample(&mut self.rng) as u64
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}
