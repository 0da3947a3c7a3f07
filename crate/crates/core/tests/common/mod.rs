//! Shared test fixtures and independent oracles. Everything here re-derives
//! the quantities it checks from first principles and stays off the library
//! code paths it is used to validate.

#![allow(dead_code)]

use rbmo_core::{
    build_measure, AtomicMeasure, Cube, CubeFamily, Kernel, MeasureSpec, SampledFunction,
    GEOM_TOL,
};

pub fn grid(count: usize) -> AtomicMeasure {
    build_measure(&MeasureSpec::UniformGrid {
        start: 0.0,
        end: 1.0,
        count,
    })
    .unwrap()
}

pub fn cantor(depth: u32) -> AtomicMeasure {
    build_measure(&MeasureSpec::CantorFourCorner { depth }).unwrap()
}

/// Direct-summation re-derivation of the layered-mass coefficient. Its own
/// membership test, its own step count, its own mass sums.
pub fn k_coefficient_oracle(measure: &AtomicMeasure, q: &Cube, r: &Cube) -> f64 {
    fn box_mass(measure: &AtomicMeasure, center: &[f64], side: f64) -> f64 {
        let half = side / 2.0;
        let mut mass = 0.0;
        for i in 0..measure.len() {
            let inside = measure
                .coords(i)
                .iter()
                .zip(center)
                .all(|(x, c)| (x - c).abs() <= half + GEOM_TOL);
            if inside {
                mass += measure.mass(i);
            }
        }
        mass
    }

    let n = measure.dim_param();
    let mut steps = 0u32;
    let mut side = q.side();
    while side < r.side() * (1.0 - 1e-12) {
        side *= 2.0;
        steps += 1;
    }
    let mut total = 1.0;
    for j in 1..=steps {
        let s = q.side() * 2.0_f64.powi(j as i32);
        total += box_mass(measure, q.center(), s) / s.powf(n);
    }
    total
}

/// One piecewise-constant oscillation evaluator per cube, rebuilt from raw
/// samples for the zoom-grid search.
pub struct OracleCube {
    pub samples: Vec<(f64, f64)>,
    pub denom: f64,
}

impl OracleCube {
    pub fn build(measure: &AtomicMeasure, f: &SampledFunction, cube: &Cube, rho: f64) -> Self {
        let samples = (0..measure.len())
            .filter(|&i| cube.contains_coords(measure.coords(i)))
            .map(|i| (f.values()[i], measure.mass(i)))
            .collect();
        OracleCube {
            samples,
            denom: measure.mu_cube(&cube.dilate(rho)),
        }
    }

    pub fn osc(&self, t: f64) -> f64 {
        self.samples
            .iter()
            .map(|(v, w)| (v - t).abs() * w)
            .sum::<f64>()
            / self.denom
    }
}

/// Exhaustive zoom-grid search for
/// `min over x of max(osc_i(x_i), |x_i - x_j| / k_ij)`.
///
/// Each stage lays a uniform grid per coordinate over the current box, takes
/// the best grid point, and shrinks the box around it; the objective is
/// convex, so the granularity at the final stage bounds the error.
pub fn min_max_grid_oracle(
    cubes: &[OracleCube],
    pairs: &[(usize, usize, f64)],
    stages: usize,
    points_per_dim: usize,
) -> f64 {
    let d = cubes.len();
    assert!(d >= 1 && d <= 4, "oracle is for tiny instances");
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in cubes {
        for (v, _) in &c.samples {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if lo >= hi {
        return 0.0;
    }

    let objective = |x: &[f64]| -> f64 {
        let mut worst = 0.0_f64;
        for (i, c) in cubes.iter().enumerate() {
            worst = worst.max(c.osc(x[i]));
        }
        for &(a, b, k) in pairs {
            worst = worst.max((x[a] - x[b]).abs() / k);
        }
        worst
    };

    let g = points_per_dim;
    let mut centers = vec![(lo + hi) * 0.5; d];
    let mut radius = (hi - lo) * 0.5;
    let mut best_val = f64::INFINITY;
    for _ in 0..stages {
        let mut best_x = centers.clone();
        let mut idx = vec![0usize; d];
        loop {
            let x: Vec<f64> = (0..d)
                .map(|c| {
                    let t = idx[c] as f64 / (g - 1) as f64;
                    (centers[c] - radius + 2.0 * radius * t).clamp(lo, hi)
                })
                .collect();
            let v = objective(&x);
            if v < best_val {
                best_val = v;
                best_x = x;
            }
            // odometer increment
            let mut c = 0;
            loop {
                if c == d {
                    break;
                }
                idx[c] += 1;
                if idx[c] < g {
                    break;
                }
                idx[c] = 0;
                c += 1;
            }
            if c == d {
                break;
            }
        }
        centers = best_x;
        // keep two old grid steps on each side of the best point
        radius = (radius * 4.0 / (g - 1) as f64).max(1e-14);
    }
    best_val
}

/// Dense kernel matrix of the truncated operator in the half-weighted
/// coordinates, whose ordinary singular values are the operator's singular
/// values on the mass-weighted space.
pub fn dense_halfweighted_matrix(
    kernel: &Kernel,
    measure: &AtomicMeasure,
    eps: f64,
) -> nalgebra::DMatrix<f64> {
    let n = measure.len();
    nalgebra::DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            return 0.0;
        }
        let x = measure.coords(i);
        let y = measure.coords(j);
        let half = eps / 2.0;
        let excluded = x
            .iter()
            .zip(y)
            .all(|(a, b)| (b - a).abs() <= half + GEOM_TOL);
        if excluded {
            0.0
        } else {
            measure.mass(i).sqrt() * kernel.eval(x, y) * measure.mass(j).sqrt()
        }
    })
}

pub fn largest_singular_value(m: &nalgebra::DMatrix<f64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |a, s| a.max(*s))
}

/// A mixed corpus of sampled functions over a measure. All nonconstant.
pub fn corpus(measure: &AtomicMeasure, kinds: &[&str]) -> Vec<(String, SampledFunction)> {
    let mut out = Vec::new();
    for kind in kinds {
        let f = match *kind {
            "affine" => SampledFunction::from_fn(measure, |x| {
                1.7 * x[0] - 0.4 * x.get(1).copied().unwrap_or(0.0) + 0.3
            }),
            "log" => SampledFunction::from_fn(measure, |x| {
                let dx = x[0] - 0.501;
                let dy = x.get(1).copied().unwrap_or(0.0) - 0.47;
                (1.0 / (dx * dx + dy * dy).sqrt().max(1e-9)).ln()
            }),
            "indicator" => SampledFunction::from_fn(measure, |x| {
                if x[0] <= 0.497 {
                    1.0
                } else {
                    0.0
                }
            }),
            "smooth" => SampledFunction::from_fn(measure, |x| {
                let u = x[0];
                let v = x.get(1).copied().unwrap_or(0.0);
                (6.28 * u).sin() + 0.5 * (13.0 * u + 7.0 * v).cos() + 0.25 * (29.0 * u).sin()
            }),
            other => panic!("unknown corpus kind {other}"),
        };
        out.push((kind.to_string(), f));
    }
    out
}

/// Twenty nonconstant functions: five affine, five logarithmic, five
/// indicators, five seeded trigonometric mixtures.
pub fn corpus20(measure: &AtomicMeasure) -> Vec<(String, SampledFunction)> {
    let mut out = Vec::new();
    for k in 0..5 {
        let a = 0.5 + k as f64;
        let b = -0.3 * k as f64;
        out.push((
            format!("affine{k}"),
            SampledFunction::from_fn(measure, move |x| a * x[0] + b),
        ));
    }
    for (k, c) in [0.501, 0.32, 0.77, 0.101, 0.649].iter().enumerate() {
        let c = *c;
        out.push((
            format!("log{k}"),
            SampledFunction::from_fn(measure, move |x| {
                (1.0 / (x[0] - c).abs().max(1e-9)).ln()
            }),
        ));
    }
    for (k, c) in [0.2, 0.35, 0.497, 0.61, 0.83].iter().enumerate() {
        let c = *c;
        out.push((
            format!("indicator{k}"),
            SampledFunction::from_fn(measure, move |x| if x[0] <= c { 1.0 } else { 0.0 }),
        ));
    }
    for k in 0..5u32 {
        let w1 = 3.0 + 2.0 * k as f64;
        let w2 = 11.0 + 5.0 * k as f64;
        let phase = 0.37 * k as f64;
        out.push((
            format!("smooth{k}"),
            SampledFunction::from_fn(measure, move |x| {
                (w1 * x[0] + phase).sin() + 0.4 * (w2 * x[0]).cos()
            }),
        ));
    }
    out
}
