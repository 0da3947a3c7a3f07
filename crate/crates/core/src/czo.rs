//! Singular kernels, numeric checks of their size, smoothness, and
//! cancellation constants, truncated operator application, and an operator
//! norm estimate on the weighted square-summable space.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measure::{AtomicMeasure, Metric, GEOM_TOL};
use crate::rbmo::SampledFunction;

#[derive(Debug, Error)]
pub enum CzoError {
    #[error("unknown kernel name {0:?}")]
    UnknownKernel(String),
    #[error("kernel {name} requires {requirement}")]
    DimensionMismatch { name: String, requirement: String },
    #[error("parameter out of range: {0}")]
    InvalidParam(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum KernelForm {
    CauchyRe,
    CauchyIm,
    Riesz,
    Zero,
}

/// A singular kernel evaluator with its declared growth exponent `n` and
/// smoothness exponent `delta`.
#[derive(Debug, Clone)]
pub struct Kernel {
    name: String,
    n: f64,
    delta: f64,
    antisymmetric: bool,
    form: KernelForm,
}

impl Kernel {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn antisymmetric(&self) -> bool {
        self.antisymmetric
    }

    /// The identically-zero kernel; handy as a degenerate baseline.
    pub fn zero(n: f64) -> Kernel {
        Kernel {
            name: "zero".into(),
            n,
            delta: 1.0,
            antisymmetric: true,
            form: KernelForm::Zero,
        }
    }

    /// Evaluate off the diagonal. The planar reciprocal kernels use the
    /// euclidean distance internally regardless of the measure's metric.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.form {
            KernelForm::Zero => 0.0,
            KernelForm::CauchyRe => {
                let (dx, dy) = (x[0] - y[0], x[1] - y[1]);
                dx / (dx * dx + dy * dy)
            }
            KernelForm::CauchyIm => {
                let (dx, dy) = (x[0] - y[0], x[1] - y[1]);
                -dy / (dx * dx + dy * dy)
            }
            KernelForm::Riesz => {
                let d = Metric::Euclidean.dist(x, y);
                (x[0] - y[0]) / d.powf(self.n + 1.0)
            }
        }
    }
}

/// Built-in kernels: `cauchy_re` and `cauchy_im` (real and imaginary part of
/// the complex reciprocal, planar measures with n = 1) and `riesz` (first
/// coordinate of the n-Riesz kernel).
pub fn builtin_kernel(name: &str, measure: &AtomicMeasure) -> Result<Kernel, CzoError> {
    match name {
        "cauchy_re" | "cauchy_im" => {
            if measure.ambient_dim() != 2 || measure.dim_param() != 1.0 {
                return Err(CzoError::DimensionMismatch {
                    name: name.into(),
                    requirement: "a planar measure with dim_param 1".into(),
                });
            }
            Ok(Kernel {
                name: name.into(),
                n: 1.0,
                delta: 1.0,
                antisymmetric: true,
                form: if name == "cauchy_re" {
                    KernelForm::CauchyRe
                } else {
                    KernelForm::CauchyIm
                },
            })
        }
        "riesz" => Ok(Kernel {
            name: format!("riesz({})", measure.dim_param()),
            n: measure.dim_param(),
            delta: 1.0,
            antisymmetric: true,
            form: KernelForm::Riesz,
        }),
        other => Err(CzoError::UnknownKernel(other.into())),
    }
}

/// Strictly decreasing positive truncation scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationGrid {
    epsilons: Vec<f64>,
}

impl TruncationGrid {
    pub fn new(epsilons: Vec<f64>) -> Result<Self, CzoError> {
        if epsilons.is_empty()
            || epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0))
            || epsilons.windows(2).any(|w| w[0] <= w[1])
        {
            return Err(CzoError::InvalidParam(
                "truncation scales must be positive and strictly decreasing".into(),
            ));
        }
        Ok(TruncationGrid { epsilons })
    }

    /// Geometric grid of `points` scales from the support diameter down to
    /// the minimum atom gap.
    pub fn geometric(measure: &AtomicMeasure, points: usize) -> Result<Self, CzoError> {
        if points < 2 {
            return Err(CzoError::InvalidParam("need at least two grid points".into()));
        }
        let lo = measure.min_gap();
        let hi = measure.diameter();
        if !(lo.is_finite() && lo > 0.0 && hi > lo) {
            return Err(CzoError::InvalidParam(
                "degenerate support for a truncation grid".into(),
            ));
        }
        let ratio = (hi / lo).powf(1.0 / (points - 1) as f64);
        let eps = (0..points)
            .map(|k| hi / ratio.powi(k as i32))
            .collect();
        TruncationGrid::new(eps)
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }
}

/// Truncation predicate: `y` is excluded when it lies in the closed cube of
/// side `eps` centered at `x`.
fn truncated_out(x: &[f64], y: &[f64], eps: f64) -> bool {
    let half = eps / 2.0;
    x.iter().zip(y).all(|(a, b)| (b - a).abs() <= half + GEOM_TOL)
}

/// `T_eps f` at every atom: the kernel sum over atoms outside the closed
/// truncation cube, in atom-index order. The diagonal atom is always excluded
/// and exact zeros of `f` are skipped.
pub fn apply_truncated(
    kernel: &Kernel,
    measure: &AtomicMeasure,
    f: &SampledFunction,
    eps: f64,
) -> SampledFunction {
    assert!(eps.is_finite() && eps > 0.0, "truncation scale {eps}");
    let values: Vec<f64> = (0..measure.len())
        .into_par_iter()
        .map(|i| {
            let x = measure.coords(i);
            let mut sum = 0.0;
            for j in 0..measure.len() {
                let fy = f.values()[j];
                if j == i || fy == 0.0 {
                    continue;
                }
                let y = measure.coords(j);
                if truncated_out(x, y, eps) {
                    continue;
                }
                sum += kernel.eval(x, y) * fy * measure.mass(j);
            }
            sum
        })
        .collect();
    SampledFunction::new(values).expect("finite kernel sums")
}

/// Adjoint with respect to the mass-weighted inner product.
fn apply_truncated_adjoint(
    kernel: &Kernel,
    measure: &AtomicMeasure,
    g: &SampledFunction,
    eps: f64,
) -> SampledFunction {
    let values: Vec<f64> = (0..measure.len())
        .into_par_iter()
        .map(|j| {
            let y = measure.coords(j);
            let mut sum = 0.0;
            for i in 0..measure.len() {
                let gi = g.values()[i];
                if i == j || gi == 0.0 {
                    continue;
                }
                let x = measure.coords(i);
                if truncated_out(x, y, eps) {
                    continue;
                }
                sum += kernel.eval(x, y) * gi * measure.mass(i);
            }
            sum
        })
        .collect();
    SampledFunction::new(values).expect("finite kernel sums")
}

/// `T_eps 1`.
pub fn t_one(kernel: &Kernel, measure: &AtomicMeasure, eps: f64) -> SampledFunction {
    let ones = SampledFunction::new(vec![1.0; measure.len()]).expect("ones");
    apply_truncated(kernel, measure, &ones, eps)
}

fn weighted_norm(measure: &AtomicMeasure, v: &[f64]) -> f64 {
    v.iter()
        .zip(measure.masses())
        .map(|(x, w)| x * x * w)
        .sum::<f64>()
        .sqrt()
}

/// Largest singular value of `f -> T_eps f` on the mass-weighted space,
/// estimated by power iteration on the map composed with its adjoint. The
/// start vector is the normalized constant one.
pub fn l2_opnorm(
    kernel: &Kernel,
    measure: &AtomicMeasure,
    eps: f64,
    iterations: usize,
) -> f64 {
    assert!(iterations >= 1);
    let norm_ones = weighted_norm(measure, &vec![1.0; measure.len()]);
    let mut v =
        SampledFunction::new(vec![1.0 / norm_ones; measure.len()]).expect("start vector");
    let mut sigma = 0.0_f64;
    for _ in 0..iterations {
        let tv = apply_truncated(kernel, measure, &v, eps);
        let u = apply_truncated_adjoint(kernel, measure, &tv, eps);
        let nu = weighted_norm(measure, u.values());
        if nu == 0.0 {
            return 0.0;
        }
        let next_sigma = weighted_norm(measure, tv.values());
        let scaled: Vec<f64> = u.values().iter().map(|x| x / nu).collect();
        v = SampledFunction::new(scaled).expect("normalized iterate");
        let converged = (next_sigma - sigma).abs() <= 1e-15 * next_sigma;
        sigma = next_sigma;
        if converged {
            break;
        }
    }
    weighted_norm(measure, apply_truncated(kernel, measure, &v, eps).values())
}

/// Empirical kernel constants under the measure's metric and under the
/// euclidean metric, sampled deterministically from the seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelConditionReport {
    #[serde(rename = "size_C")]
    pub size_c: f64,
    #[serde(rename = "size_C_euclidean")]
    pub size_c_euclidean: f64,
    #[serde(rename = "hoelder_C")]
    pub hoelder_c: f64,
    #[serde(rename = "hoelder_C_euclidean")]
    pub hoelder_c_euclidean: f64,
    pub cancellation_sup: f64,
    pub sample_count: usize,
    pub seed: u64,
}

/// Annulus sum `|sum over y in Q(x, big) \ Q(x, small) of K(x, y) mass(y)|`
/// with the integration running over the second kernel argument.
pub fn cancellation_at(
    kernel: &Kernel,
    measure: &AtomicMeasure,
    center: usize,
    small: f64,
    big: f64,
) -> f64 {
    assert!(small > 0.0 && big > small);
    let x = measure.coords(center);
    let mut sum = 0.0;
    for j in 0..measure.len() {
        if j == center {
            continue;
        }
        let y = measure.coords(j);
        if truncated_out(x, y, big) && !truncated_out(x, y, small) {
            sum += kernel.eval(x, y) * measure.mass(j);
        }
    }
    sum.abs()
}

/// Sampled maxima of the three kernel-condition functionals. Samples are
/// drawn in a fixed order, so enlarging `sample_count` under the same seed
/// only extends the sample sequence.
pub fn kernel_condition_report(
    kernel: &Kernel,
    measure: &AtomicMeasure,
    sample_count: usize,
    rng_seed: u64,
) -> KernelConditionReport {
    assert!(sample_count >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let n_atoms = measure.len();
    let n = kernel.n();
    let delta = kernel.delta();

    // size constant: |K(x, y)| dist(x, y)^n over distinct atom pairs
    let mut size_c = 0.0_f64;
    let mut size_c_euc = 0.0_f64;
    if n_atoms >= 2 {
        let mut accepted = 0;
        while accepted < sample_count {
            let i = rng.gen_range(0..n_atoms);
            let j = rng.gen_range(0..n_atoms);
            if i == j {
                continue;
            }
            let k = kernel.eval(measure.coords(i), measure.coords(j)).abs();
            let dm = measure.dist(i, j);
            let de = Metric::Euclidean.dist(measure.coords(i), measure.coords(j));
            size_c = size_c.max(k * crate::measure::pow_dim(dm, n));
            size_c_euc = size_c_euc.max(k * crate::measure::pow_dim(de, n));
            accepted += 1;
        }
    }

    // smoothness constant on admissible triples 2 dist(x1, x2) <= dist(x1, y)
    let mut hoelder = 0.0_f64;
    let mut hoelder_euc = 0.0_f64;
    if n_atoms >= 3 {
        let mut accepted_m = 0usize;
        let mut accepted_e = 0usize;
        let mut attempts = 0usize;
        let budget = sample_count.saturating_mul(1000).max(1000);
        while (accepted_m < sample_count || accepted_e < sample_count) && attempts < budget {
            attempts += 1;
            let i1 = rng.gen_range(0..n_atoms);
            let i2 = rng.gen_range(0..n_atoms);
            let iy = rng.gen_range(0..n_atoms);
            if i1 == i2 || i1 == iy || i2 == iy {
                continue;
            }
            let (x1, x2, y) = (measure.coords(i1), measure.coords(i2), measure.coords(iy));
            let incr = (kernel.eval(x1, y) - kernel.eval(x2, y)).abs()
                + (kernel.eval(y, x1) - kernel.eval(y, x2)).abs();
            if accepted_m < sample_count {
                let d12 = measure.metric().dist(x1, x2);
                let d1y = measure.metric().dist(x1, y);
                if 2.0 * d12 <= d1y {
                    hoelder = hoelder
                        .max(incr * d1y.powf(n + delta) / d12.powf(delta));
                    accepted_m += 1;
                }
            }
            if accepted_e < sample_count {
                let d12 = Metric::Euclidean.dist(x1, x2);
                let d1y = Metric::Euclidean.dist(x1, y);
                if 2.0 * d12 <= d1y {
                    hoelder_euc = hoelder_euc
                        .max(incr * d1y.powf(n + delta) / d12.powf(delta));
                    accepted_e += 1;
                }
            }
        }
    }

    // cancellation: annulus sums around sampled centers
    let lo = (measure.min_gap() * 0.5).max(f64::MIN_POSITIVE);
    let hi = (measure.diameter() * 2.0).max(lo * 4.0);
    let mut cancellation = 0.0_f64;
    for _ in 0..sample_count {
        let c = rng.gen_range(0..n_atoms);
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        let r1 = lo * (hi / lo).powf(u1);
        let r2 = lo * (hi / lo).powf(u2);
        let (small, big) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        if big <= small {
            continue;
        }
        cancellation = cancellation.max(cancellation_at(kernel, measure, c, small, big));
    }

    KernelConditionReport {
        size_c,
        size_c_euclidean: size_c_euc,
        hoelder_c: hoelder,
        hoelder_c_euclidean: hoelder_euc,
        cancellation_sup: cancellation,
        sample_count,
        seed: rng_seed,
    }
}
