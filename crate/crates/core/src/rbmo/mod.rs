//! Oscillation functionals and the five norm variants for functions sampled
//! on a measure's atoms, plus level-set decay profiles.

mod solver;
mod sublevel;

pub use solver::{feasibility_norm, FeasibilityTag};
pub use sublevel::{sublevel_interval, SublevelSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    k_coefficient, smallest_doubling_dilate, Cube, CubeFamily, DoublingParams,
};
use crate::measure::AtomicMeasure;

#[derive(Debug, Error)]
pub enum RbmoError {
    #[error("cube (or its dilate) carries no mass")]
    ZeroMass,
    #[error("sample count {got} does not match atom count {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("sample values must be finite")]
    NonFiniteSample,
    #[error("rho = {0} is outside the admissible range")]
    InvalidRho(f64),
    #[error("family has no doubling cubes")]
    NoDoublingCubes,
    #[error("solver bracket infeasible at its upper bound")]
    InfeasibleAtUpperBound,
    #[error("lambda grid must be positive and strictly increasing")]
    BadLambdaGrid,
}

/// One real value per atom, aligned index-for-index with the measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FunctionFile", into = "FunctionFile")]
pub struct SampledFunction {
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FunctionFile {
    values: Vec<f64>,
}

impl TryFrom<FunctionFile> for SampledFunction {
    type Error = RbmoError;
    fn try_from(f: FunctionFile) -> Result<Self, RbmoError> {
        SampledFunction::new(f.values)
    }
}

impl From<SampledFunction> for FunctionFile {
    fn from(f: SampledFunction) -> FunctionFile {
        FunctionFile { values: f.values }
    }
}

impl SampledFunction {
    pub fn new(values: Vec<f64>) -> Result<Self, RbmoError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RbmoError::NonFiniteSample);
        }
        Ok(SampledFunction { values })
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(measure: &AtomicMeasure, f: F) -> Self {
        SampledFunction {
            values: (0..measure.len()).map(|i| f(measure.coords(i))).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_len(&self, measure: &AtomicMeasure) -> Result<(), RbmoError> {
        if self.values.len() != measure.len() {
            return Err(RbmoError::LengthMismatch {
                got: self.values.len(),
                want: measure.len(),
            });
        }
        Ok(())
    }

    pub fn is_constant(&self) -> bool {
        self.values.windows(2).all(|w| w[0] == w[1])
    }
}

/// Which definition produced a norm estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag")]
pub enum NormTag {
    A { rho: f64 },
    B { rho: f64 },
    C { rho: f64 },
    D,
    E,
}

/// A norm value together with the witness constants and the cube family it
/// was computed over. The finite family is part of the estimate: values from
/// different enumerations are not comparable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormEstimate {
    #[serde(flatten)]
    pub tag: NormTag,
    pub value: f64,
    pub witness: Vec<Option<f64>>,
    pub family: CubeFamily,
}

impl NormEstimate {
    /// Recompute the defining inequalities with the stored witnesses and
    /// return the largest attained constant.
    pub fn verify_witness(
        &self,
        measure: &AtomicMeasure,
        f: &SampledFunction,
    ) -> Result<f64, RbmoError> {
        f.check_len(measure)?;
        let fam = &self.family;
        let avg = |q: &Cube| average(measure, f, q);
        let kpair = |i: usize, j: usize| {
            k_coefficient(measure, &fam.cubes[i], &fam.cubes[j])
                .expect("nested pairs are contained")
        };
        let mut worst = 0.0_f64;
        match self.tag {
            NormTag::E | NormTag::A { .. } => {
                let (rho, doubling_only) = match self.tag {
                    NormTag::E => (1.0, true),
                    NormTag::A { rho } => (rho, false),
                    _ => unreachable!(),
                };
                for (i, c) in fam.cubes.iter().enumerate() {
                    if doubling_only && !fam.doubling_flags[i] {
                        continue;
                    }
                    let w = self.witness[i].ok_or(RbmoError::NoDoublingCubes)?;
                    worst = worst.max(oscillation(measure, f, c, w, rho)?);
                }
                for &(i, j) in &fam.nested_pairs {
                    if doubling_only && !(fam.doubling_flags[i] && fam.doubling_flags[j]) {
                        continue;
                    }
                    let (wi, wj) = (self.witness[i], self.witness[j]);
                    if let (Some(wi), Some(wj)) = (wi, wj) {
                        worst = worst.max((wi - wj).abs() / kpair(i, j));
                    }
                }
            }
            NormTag::B { rho } => {
                for (i, c) in fam.cubes.iter().enumerate() {
                    if let Some(w) = self.witness[i] {
                        worst = worst.max(oscillation(measure, f, c, w, rho)?);
                    }
                }
                for &(i, j) in &fam.doubling_nested_pairs() {
                    worst = worst
                        .max((avg(&fam.cubes[i])? - avg(&fam.cubes[j])?).abs() / kpair(i, j));
                }
            }
            NormTag::C { rho } => {
                for (i, c) in fam.cubes.iter().enumerate() {
                    let w = self.witness[i].ok_or(RbmoError::ZeroMass)?;
                    worst = worst.max(oscillation(measure, f, c, w, rho)?);
                }
                for &(i, j) in &fam.nested_pairs {
                    let (qi, qj) = (&fam.cubes[i], &fam.cubes[j]);
                    let scale = measure.mu_cube(&qi.dilate(rho)) / measure.mu_cube(qi)
                        + measure.mu_cube(&qj.dilate(rho)) / measure.mu_cube(qj);
                    worst = worst.max((avg(qi)? - avg(qj)?).abs() / (kpair(i, j) * scale));
                }
            }
            NormTag::D => {
                for (i, c) in fam.cubes.iter().enumerate() {
                    if !fam.doubling_flags[i] {
                        continue;
                    }
                    let w = self.witness[i].ok_or(RbmoError::NoDoublingCubes)?;
                    worst = worst.max(oscillation(measure, f, c, w, 1.0)?);
                }
                for &(i, j) in &fam.doubling_nested_pairs() {
                    worst = worst
                        .max((avg(&fam.cubes[i])? - avg(&fam.cubes[j])?).abs() / kpair(i, j));
                }
            }
        }
        Ok(worst)
    }
}

/// Plain mass-weighted average of `f` over the closed cube.
pub fn average(
    measure: &AtomicMeasure,
    f: &SampledFunction,
    cube: &Cube,
) -> Result<f64, RbmoError> {
    f.check_len(measure)?;
    let mut mass = 0.0;
    let mut sum = 0.0;
    for i in 0..measure.len() {
        if cube.contains_coords(measure.coords(i)) {
            mass += measure.mass(i);
            sum += f.values[i] * measure.mass(i);
        }
    }
    if mass <= 0.0 {
        return Err(RbmoError::ZeroMass);
    }
    Ok(sum / mass)
}

/// `(1 / mu(rho Q)) * sum over atoms in Q of |f - t| * mass`.
pub fn oscillation(
    measure: &AtomicMeasure,
    f: &SampledFunction,
    cube: &Cube,
    t: f64,
    rho: f64,
) -> Result<f64, RbmoError> {
    f.check_len(measure)?;
    if !(rho >= 1.0) {
        return Err(RbmoError::InvalidRho(rho));
    }
    let denom = measure.mu_cube(&cube.dilate(rho));
    if denom <= 0.0 {
        return Err(RbmoError::ZeroMass);
    }
    let mut sum = 0.0;
    for i in 0..measure.len() {
        if cube.contains_coords(measure.coords(i)) {
            sum += (f.values[i] - t).abs() * measure.mass(i);
        }
    }
    Ok(sum / denom)
}

/// `((1 / mu(rho Q)) * sum over Q of |f - f_q|^p * mass)^(1/p)`.
pub fn lp_oscillation(
    measure: &AtomicMeasure,
    f: &SampledFunction,
    cube: &Cube,
    f_q: f64,
    p: f64,
    rho: f64,
) -> Result<f64, RbmoError> {
    f.check_len(measure)?;
    if !(p >= 1.0) {
        return Err(RbmoError::InvalidRho(p));
    }
    let denom = measure.mu_cube(&cube.dilate(rho));
    if denom <= 0.0 {
        return Err(RbmoError::ZeroMass);
    }
    let mut sum = 0.0;
    for i in 0..measure.len() {
        if cube.contains_coords(measure.coords(i)) {
            sum += (f.values[i] - f_q).abs().powf(p) * measure.mass(i);
        }
    }
    Ok((sum / denom).powf(1.0 / p))
}

/// Least-squares fit of `ln(mass)` against `lambda` over the profile points
/// with positive mass.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct JnFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

/// Level-set masses `mu{x in Q : |f - f_q| > lambda}` with the fitted
/// exponential decay rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JnProfile {
    pub points: Vec<(f64, f64)>,
    pub fit: Option<JnFit>,
    pub mu_rho_q: f64,
}

pub fn jn_profile(
    measure: &AtomicMeasure,
    f: &SampledFunction,
    cube: &Cube,
    f_q: f64,
    lambdas: &[f64],
    rho: f64,
) -> Result<JnProfile, RbmoError> {
    f.check_len(measure)?;
    if lambdas.is_empty()
        || lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0))
        || lambdas.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(RbmoError::BadLambdaGrid);
    }
    if !(rho >= 1.0) {
        return Err(RbmoError::InvalidRho(rho));
    }
    let mu_rho_q = measure.mu_cube(&cube.dilate(rho));
    let deviations: Vec<(f64, f64)> = (0..measure.len())
        .filter(|&i| cube.contains_coords(measure.coords(i)))
        .map(|i| ((f.values[i] - f_q).abs(), measure.mass(i)))
        .collect();
    let points: Vec<(f64, f64)> = lambdas
        .iter()
        .map(|&l| {
            let mass = deviations
               .iter()
                .filter(|(d, _)| *d > l)
                .map(|(_, w)| w)
                .sum::<f64>();
            (l, mass)
        })
        .collect();

    let fit_pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, m)| *m > 0.0)
        .map(|(l, m)| (*l, m.ln()))
        .collect();
    let fit = if fit_pts.len() >= 2 {
        let n = fit_pts.len() as f64;
        let sx: f64 = fit_pts.iter().map(|p| p.0).sum();
        let sy: f64 = fit_pts.iter().map(|p| p.1).sum();
        let sxx: f64 = fit_pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = fit_pts.iter().map(|p| p.0 * p.1).sum();
        let det = n * sxx - sx * sx;
        if det.abs() < 1e-300 {
            None
        } else {
            let slope = (n * sxy - sx * sy) / det;
            let intercept = (sy - slope * sx) / n;
            let mean_y = sy / n;
            let ss_tot: f64 = fit_pts.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
            let ss_res: f64 = fit_pts
                .iter()
                .map(|p| (p.1 - (slope * p.0 + intercept)).powi(2))
                .sum();
            let r_squared = if ss_tot <= 1e-30 { 1.0 } else { 1.0 - ss_res / ss_tot };
            Some(JnFit {
                slope,
                intercept,
                r_squared,
                points_used: fit_pts.len(),
            })
        }
    } else {
        None
    };
    Ok(JnProfile {
        points,
        fit,
        mu_rho_q,
    })
}

/// Largest number of quadrupling steps tried when locating the smallest
/// doubling dilate of a cube.
const DOUBLING_SEARCH_STEPS: usize = 64;

/// The three direct (witness-fixed) norms, in tag order B, C, D.
pub fn direct_norms(
    measure: &AtomicMeasure,
    f: &SampledFunction,
    family: &CubeFamily,
    rho: f64,
) -> Result<Vec<NormEstimate>, RbmoError> {
    f.check_len(measure)?;
    if !(rho > 1.0) {
        return Err(RbmoError::InvalidRho(rho));
    }
    let params = DoublingParams {
        alpha: 4.0,
        beta: family
            .params
            .as_ref()
            .map(|p| p.beta)
            .unwrap_or_else(|| DoublingParams::for_measure(measure).beta),
    };

    let averages: Vec<f64> = family
        .cubes
        .iter()
        .map(|c| average(measure, f, c))
        .collect::<Result<_, _>>()?;
    let pair_k: Vec<f64> = family
        .nested_pairs
        .iter()
        .map(|&(i, j)| {
            k_coefficient(measure, &family.cubes[i], &family.cubes[j])
                .expect("nested pairs are contained")
        })
        .collect();

    // B: oscillation around the average over the smallest doubling dilate,
    // pair drift over doubling pairs.
    let mut b_value = 0.0_f64;
    let mut b_witness: Vec<Option<f64>> = vec![None; family.len()];
    for (i, c) in family.cubes.iter().enumerate() {
        match smallest_doubling_dilate(measure, c, &params, DOUBLING_SEARCH_STEPS) {
            Ok(tilde) => {
                let w = average(measure, f, &tilde)?;
                b_witness[i] = Some(w);
                b_value = b_value.max(oscillation(measure, f, c, w, rho)?);
            }
            Err(_) => {
                log::warn!("cube {i} has no doubling dilate within {DOUBLING_SEARCH_STEPS} steps; excluded from the B estimate");
            }
        }
    }
    for (p, &(i, j)) in family.nested_pairs.iter().enumerate() {
        if family.doubling_flags[i] && family.doubling_flags[j] {
            b_value = b_value.max((averages[i] - averages[j]).abs() / pair_k[p]);
        }
    }

    // C: plain averages on all cubes, pair drift damped by the mass ratios.
    let mut c_value = 0.0_f64;
    for (i, c) in family.cubes.iter().enumerate() {
        c_value = c_value.max(oscillation(measure, f, c, averages[i], rho)?);
    }
    for (p, &(i, j)) in family.nested_pairs.iter().enumerate() {
        let (qi, qj) = (&family.cubes[i], &family.cubes[j]);
        let scale = measure.mu_cube(&qi.dilate(rho)) / measure.mu_cube(qi)
            + measure.mu_cube(&qj.dilate(rho)) / measure.mu_cube(qj);
        c_value = c_value.max((averages[i] - averages[j]).abs() / (pair_k[p] * scale));
    }

    // D: doubling cubes only, no dilation in the denominator.
    if family.doubling_indices().is_empty() {
        return Err(RbmoError::NoDoublingCubes);
    }
    let mut d_value = 0.0_f64;
    let mut d_witness: Vec<Option<f64>> = vec![None; family.len()];
    for (i, c) in family.cubes.iter().enumerate() {
        d_witness[i] = Some(averages[i]);
        if family.doubling_flags[i] {
            d_value = d_value.max(oscillation(measure, f, c, averages[i], 1.0)?);
        }
    }
    for (p, &(i, j)) in family.nested_pairs.iter().enumerate() {
        if family.doubling_flags[i] && family.doubling_flags[j] {
            d_value = d_value.max((averages[i] - averages[j]).abs() / pair_k[p]);
        }
    }

    let c_witness: Vec<Option<f64>> = averages.iter().map(|a| Some(*a)).collect();
    Ok(vec![
        NormEstimate {
            tag: NormTag::B { rho },
            value: b_value,
            witness: b_witness,
            family: family.clone(),
        },
        NormEstimate {
            tag: NormTag::C { rho },
            value: c_value,
            witness: c_witness,
            family: family.clone(),
        },
        NormEstimate {
            tag: NormTag::D,
            value: d_value,
            witness: d_witness,
            family: family.clone(),
        },
    ])
}
