//! End-to-end checks of the operator-boundedness construction: the two-sided
//! cutoff decomposition around a cube, its averaged constants, the lemma-level
//! ratio tables, and the full per-function report.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::czo::{apply_truncated, t_one, Kernel, TruncationGrid};
use crate::geometry::{
    k_cap, k_coefficient, Cube, CubeFamily, FamilyParams, GeometryError,
};
use crate::measure::AtomicMeasure;
use crate::rbmo::{
    average, feasibility_norm, oscillation, FeasibilityTag, NormEstimate, RbmoError,
    SampledFunction,
};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("function has zero norm on this family; ratios are undefined")]
    ZeroNorm,
    #[error("corpus function {0:?} is constant")]
    ConstantCorpusFunction(String),
    #[error(transparent)]
    Rbmo(#[from] RbmoError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// The split `f = f1 + f2 + f3` around a cube: a constant, the centered part
/// supported on `2Q`, and the far part supported outside `2Q`.
#[derive(Debug, Clone)]
pub struct DecompositionParts {
    pub f1_constant: f64,
    pub f2: SampledFunction,
    pub f3: SampledFunction,
    pub cube: Cube,
}

impl DecompositionParts {
    /// Exact reconstruction: at every atom the stored parts must reproduce
    /// `f - f1` bit-for-bit (exactly one part is nonzero per atom).
    pub fn check_reconstruction(&self, f: &SampledFunction) -> bool {
        f.values()
            .iter()
            .zip(self.f2.values().iter().zip(self.f3.values()))
            .all(|(fi, (a, b))| a + b == fi - self.f1_constant)
    }
}

/// Split `f` around `cube` using the supplied witness constant for `2Q`.
pub fn decompose(
    measure: &AtomicMeasure,
    f: &SampledFunction,
    cube: &Cube,
    f2q: f64,
) -> Result<DecompositionParts, VerifyError> {
    f.check_len(measure)?;
    let double = cube.dilate(2.0);
    let mut inner = Vec::with_capacity(measure.len());
    let mut outer = Vec::with_capacity(measure.len());
    for i in 0..measure.len() {
        let dev = f.values()[i] - f2q;
        if double.contains_coords(measure.coords(i)) {
            inner.push(dev);
            outer.push(0.0);
        } else {
            inner.push(0.0);
            outer.push(dev);
        }
    }
    Ok(DecompositionParts {
        f1_constant: f2q,
        f2: SampledFunction::new(inner)?,
        f3: SampledFunction::new(outer)?,
        cube: cube.clone(),
    })
}

/// The averaged constants for the split parts: the `2Q`-supported part gets
/// zero, the far part the average of its operator image over the cube.
pub fn b_constants(
    kernel: &Kernel,
    measure: &AtomicMeasure,
    parts: &DecompositionParts,
    eps: f64,
) -> Result<(f64, f64), VerifyError> {
    let tf3 = apply_truncated(kernel, measure, &parts.f3, eps);
    let b3 = average(measure, &tf3, &parts.cube)?;
    Ok((0.0, b3))
}

/// Witness constants for the doubled cubes, produced by one solve of the
/// `rho = 2` infimum norm over the family augmented with all 2-dilates.
pub struct DoubledWitnesses {
    /// Witness for `2Q` per original family cube.
    pub x2q: Vec<f64>,
    /// Witness per augmented-family cube, aligned with `augmented`.
    pub augmented: CubeFamily,
    pub augmented_witness: Vec<f64>,
    pub norm_a2: f64,
    /// Largest `|witness| / K(Q)` over the augmented family.
    pub fq_ratio_max: f64,
}

pub fn doubled_witnesses(
    measure: &AtomicMeasure,
    f: &SampledFunction,
    family: &CubeFamily,
) -> Result<DoubledWitnesses, VerifyError> {
    let params = crate::geometry::DoublingParams {
        alpha: 4.0,
        beta: family
            .params
            .as_ref()
            .map(|p| p.beta)
            .unwrap_or_else(|| crate::geometry::DoublingParams::for_measure(measure).beta),
    };
    let (augmented, dilate_index) = family.augmented_with_dilates(measure, 2.0, &params)?;
    let est = feasibility_norm(measure, f, &augmented, FeasibilityTag::A { rho: 2.0 })?;
    let witness: Vec<f64> = est
        .witness
        .iter()
        .map(|w| w.expect("all cubes active under the rho-norm"))
        .collect();
    let x2q = dilate_index.iter().map(|&k| witness[k]).collect();
    let mut fq_ratio_max = 0.0_f64;
    for (i, c) in augmented.cubes.iter().enumerate() {
        fq_ratio_max = fq_ratio_max.max(witness[i].abs() / k_cap(measure, c));
    }
    Ok(DoubledWitnesses {
        x2q,
        augmented,
        augmented_witness: witness,
        norm_a2: est.value,
        fq_ratio_max,
    })
}

struct CubeSplitData {
    b3: f64,
    /// Raw averaged deviations over the cube, before normalization.
    i2_raw: Option<f64>,
    i3_raw: Option<f64>,
}

fn split_data(
    kernel: &Kernel,
    measure: &AtomicMeasure,
    f: &SampledFunction,
    x2q: f64,
    cube: &Cube,
    eps: f64,
    with_deviations: bool,
) -> Result<CubeSplitData, VerifyError> {
    let parts = decompose(measure, f, cube, x2q)?;
    let tf3 = apply_truncated(kernel, measure, &parts.f3, eps);
    let b3 = average(measure, &tf3, cube)?;
    if !with_deviations {
        return Ok(CubeSplitData {
            b3,
            i2_raw: None,
            i3_raw: None,
        });
    }
    let tf2 = apply_truncated(kernel, measure, &parts.f2, eps);
    // b2 = 0, so the k = 2 deviation is the plain averaged magnitude
    let i2 = oscillation(measure, &tf2, cube, 0.0, 1.0)?;
    let i3 = oscillation(measure, &tf3, cube, b3, 1.0)?;
    Ok(CubeSplitData {
        b3,
        i2_raw: Some(i2),
        i3_raw: Some(i3),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lemma23Row {
    pub cube: usize,
    pub i2: f64,
    pub i3: f64,
}

/// Normalized averaged deviations `I_k / norm` per doubling cube.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lemma23Report {
    pub rows: Vec<Lemma23Row>,
    pub headline: f64,
}

pub fn lemma23_report(
    kernel: &Kernel,
    measure: &AtomicMeasure,
    f: &SampledFunction,
    family: &CubeFamily,
    eps: f64,
    norm: &NormEstimate,
) -> Result<Lemma23Report, VerifyError> {
    if !(norm.value > 0.0) {
        return Err(VerifyError::ZeroNorm);
    }
    let doubling = family.doubling_indices();
    if doubling.is_empty() {
        return Err(VerifyError::Rbmo(RbmoError::NoDoublingCubes));
    }
    let witnesses = doubled_witnesses(measure, f, family)?;
    let mut rows = Vec::with_capacity(doubling.len());
    let mut headline = 0.0_f64;
    for &i in &doubling {
        let data = split_data(
            kernel,
            measure,
            f,
            witnesses.x2q[i],
            &family.cubes[i],
            eps,
            true,
        )?;
        let i2 = data.i2_raw.unwrap() / norm.value;
        let i3 = data.i3_raw.unwrap() / norm.value;
        headline = headline.max(i2).max(i3);
        rows.push(Lemma23Row { cube: i, i2, i3 });
    }
    Ok(Lemma23Report { rows, headline })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lemma23KRow {
    pub pair: (usize, usize),
    pub ratio_k3: f64,
    pub ratio_k2: f64,
}

/// Pairwise drift of the averaged constants over nested pairs, normalized by
/// `norm * K(Q, R)`. The `k = 2` column is identically zero because both
/// constants vanish by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lemma23KReport {
    pub rows: Vec<Lemma23KRow>,
    pub headline: f64,
    pub k2_max: f64,
}

pub fn lemma23k_report(
    kernel: &Kernel,
    measure: &AtomicMeasure,
    f: &SampledFunction,
    family: &CubeFamily,
    eps: f64,
    norm: &NormEstimate,
) -> Result<Lemma23KReport, VerifyError> {
    if !(norm.value > 0.0) {
        return Err(VerifyError::ZeroNorm);
    }
    if family.nested_pairs.is_empty() {
        return Err(VerifyError::Geometry(GeometryError::EmptyFamily));
    }
    let witnesses = doubled_witnesses(measure, f, family)?;
    let mut b3 = Vec::with_capacity(family.len());
    for (i, c) in family.cubes.iter().enumerate() {
        let data = split_data(kernel, measure, f, witnesses.x2q[i], c, eps, false)?;
        b3.push(data.b3);
    }
    let mut rows = Vec::with_capacity(family.nested_pairs.len());
    let mut headline = 0.0_f64;
    let mut k2_max = 0.0_f64;
    for &(i, j) in &family.nested_pairs {
        let k = k_coefficient(measure, &family.cubes[i], &family.cubes[j])?;
        let ratio_k3 = (b3[i] - b3[j]).abs() / (norm.value * k);
        let b2 = 0.0_f64;
        let ratio_k2 = (b2 - b2).abs() / (norm.value * k);
        headline = headline.max(ratio_k3);
        k2_max = k2_max.max(ratio_k2);
        rows.push(Lemma23KRow {
            pair: (i, j),
            ratio_k3,
            ratio_k2,
        });
    }
    Ok(Lemma23KReport {
        rows,
        headline,
        k2_max,
    })
}

/// Empirical constants of the averaged oscillation and drift hypotheses at
/// one truncation scale.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct T1Point {
    pub eps: f64,
    pub h1: f64,
    pub h2: f64,
    pub sup_t1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct T1Report {
    pub per_eps: Vec<T1Point>,
}

impl T1Report {
    pub fn h1_max(&self) -> f64 {
        self.per_eps.iter().map(|p| p.h1).fold(0.0, f64::max)
    }

    pub fn h2_max(&self) -> f64 {
        self.per_eps.iter().map(|p| p.h2).fold(0.0, f64::max)
    }

    pub fn sup_t1_max(&self) -> f64 {
        self.per_eps.iter().map(|p| p.sup_t1).fold(0.0, f64::max)
    }
}

/// For each scale: `H1 = max K(Q) osc(T1, Q)` over doubling cubes,
/// `H2 = max K(Q) |<T1>_Q - <T1>_R| / K(Q, R)` over doubling nested pairs,
/// and the sup norm of `T1`.
pub fn t1_report(
    kernel: &Kernel,
    measure: &AtomicMeasure,
    family: &CubeFamily,
    eps_grid: &TruncationGrid,
) -> Result<T1Report, VerifyError> {
    let doubling = family.doubling_indices();
    if doubling.is_empty() {
        return Err(VerifyError::Rbmo(RbmoError::NoDoublingCubes));
    }
    let caps: Vec<f64> = doubling
        .iter()
        .map(|&i| k_cap(measure, &family.cubes[i]))
        .collect();
    let pairs = family.doubling_nested_pairs();
    let pair_k: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| {
            k_coefficient(measure, &family.cubes[i], &family.cubes[j])
                .expect("nested pairs are contained")
        })
        .collect();
    let mut slot = vec![usize::MAX; family.len()];
    for (s, &i) in doubling.iter().enumerate() {
        slot[i] = s;
    }

    let mut per_eps = Vec::with_capacity(eps_grid.epsilons().len());
    for &eps in eps_grid.epsilons() {
        let h = t_one(kernel, measure, eps);
        let sup_t1 = h.values().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let avgs: Vec<f64> = doubling
            .iter()
            .map(|&i| average(measure, &h, &family.cubes[i]))
            .collect::<Result<_, _>>()?;
        let mut h1 = 0.0_f64;
        for (s, &i) in doubling.iter().enumerate() {
            let osc = oscillation(measure, &h, &family.cubes[i], avgs[s], 1.0)?;
            h1 = h1.max(caps[s] * osc);
        }
        let mut h2 = 0.0_f64;
        for (p, &(i, j)) in pairs.iter().enumerate() {
            let drift = (avgs[slot[i]] - avgs[slot[j]]).abs();
            h2 = h2.max(caps[slot[i]] * drift / pair_k[p]);
        }
        per_eps.push(T1Point {
            eps,
            h1,
            h2,
            sup_t1,
        });
    }
    Ok(T1Report { per_eps })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionEpsRow {
    pub eps: f64,
    #[serde(rename = "norm_Tf")]
    pub norm_tf: f64,
    pub ratio: f64,
    /// Witnessed oscillation max over doubling cubes of `T f`.
    pub g_osc_max: f64,
    /// Witnessed pair drift max `|g_Q - g_R| / K(Q, R)` over doubling pairs.
    pub g_pair_max: f64,
    pub lemma23: f64,
    pub lemma23k: f64,
    pub k2_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionReport {
    pub name: String,
    pub norm_f: f64,
    #[serde(rename = "norm_Tf")]
    pub norm_tf: f64,
    pub ratio: f64,
    pub lemma23: f64,
    pub lemma23k: f64,
    pub fq_ratio_max: f64,
    pub per_eps: Vec<FunctionEpsRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub measure_sha256: String,
    pub kernel: String,
    pub beta: f64,
    pub eps_grid: Vec<f64>,
    pub family_params: Option<FamilyParams>,
    pub family_size: usize,
    pub corpus: Vec<String>,
}

/// Headline numbers plus the per-function, per-scale table. Every row is
/// reproducible from the provenance block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoremReport {
    pub h1: f64,
    pub h2: f64,
    pub sup_t1: f64,
    pub headline_ratio: f64,
    pub t1_per_eps: Vec<T1Point>,
    pub per_function: Vec<FunctionReport>,
    pub provenance: Provenance,
}

pub fn measure_sha256(measure: &AtomicMeasure) -> String {
    let bytes = serde_json::to_vec(measure).expect("measure serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Full pipeline: for every corpus function and scale, compute the image
/// under the truncated operator, its witnessed constants
/// `g_Q = f_2Q <T1>_Q + b_2Q + b_3Q`, the lemma ratio tables, and the
/// witness-free norm ratio. The headline is the largest norm ratio seen.
pub fn boundedness_report(
    kernel: &Kernel,
    measure: &AtomicMeasure,
    corpus: &[(String, SampledFunction)],
    family: &CubeFamily,
    eps_grid: &TruncationGrid,
) -> Result<TheoremReport, VerifyError> {
    let doubling = family.doubling_indices();
    if doubling.is_empty() {
        return Err(VerifyError::Rbmo(RbmoError::NoDoublingCubes));
    }
    for (name, f) in corpus {
        f.check_len(measure)?;
        if f.is_constant() {
            return Err(VerifyError::ConstantCorpusFunction(name.clone()));
        }
    }
    let t1 = t1_report(kernel, measure, family, eps_grid)?;

    let pairs = family.doubling_nested_pairs();
    let pair_k: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| {
            k_coefficient(measure, &family.cubes[i], &family.cubes[j])
                .expect("nested pairs are contained")
        })
        .collect();
    let all_pair_k: Vec<f64> = family
        .nested_pairs
        .iter()
        .map(|&(i, j)| {
            k_coefficient(measure, &family.cubes[i], &family.cubes[j])
                .expect("nested pairs are contained")
        })
        .collect();

    let mut per_function = Vec::with_capacity(corpus.len());
    let mut headline_ratio = 0.0_f64;
    for (name, f) in corpus {
        let norm_f = feasibility_norm(measure, f, family, FeasibilityTag::E)?;
        if !(norm_f.value > 0.0) {
            return Err(VerifyError::ZeroNorm);
        }
        let witnesses = doubled_witnesses(measure, f, family)?;

        let mut rows = Vec::with_capacity(eps_grid.epsilons().len());
        for &eps in eps_grid.epsilons() {
            let h = t_one(kernel, measure, eps);
            let g = apply_truncated(kernel, measure, f, eps);

            // averaged constants for every cube; deviations on doubling ones
            let mut b3 = vec![0.0; family.len()];
            let mut i2 = vec![None; family.len()];
            let mut i3 = vec![None; family.len()];
            for (i, c) in family.cubes.iter().enumerate() {
                let data = split_data(
                    kernel,
                    measure,
                    f,
                    witnesses.x2q[i],
                    c,
                    eps,
                    family.doubling_flags[i],
                )?;
                b3[i] = data.b3;
                i2[i] = data.i2_raw;
                i3[i] = data.i3_raw;
            }

            let mut lemma23 = 0.0_f64;
            let mut g_osc_max = 0.0_f64;
            let mut g_witness = vec![0.0; family.len()];
            for &i in &doubling {
                lemma23 = lemma23
                    .max(i2[i].unwrap() / norm_f.value)
                    .max(i3[i].unwrap() / norm_f.value);
                let avg_t1 = average(measure, &h, &family.cubes[i])?;
                g_witness[i] = witnesses.x2q[i] * avg_t1 + b3[i];
                g_osc_max = g_osc_max
                    .max(oscillation(measure, &g, &family.cubes[i], g_witness[i], 1.0)?);
            }

            let mut lemma23k = 0.0_f64;
            for (p, &(i, j)) in family.nested_pairs.iter().enumerate() {
                lemma23k =
                    lemma23k.max((b3[i] - b3[j]).abs() / (norm_f.value * all_pair_k[p]));
            }
            let k2_max = 0.0; // both k = 2 constants vanish identically

            let mut g_pair_max = 0.0_f64;
            for (p, &(i, j)) in pairs.iter().enumerate() {
                g_pair_max = g_pair_max.max((g_witness[i] - g_witness[j]).abs() / pair_k[p]);
            }

            let norm_tf = feasibility_norm(measure, &g, family, FeasibilityTag::E)?;
            let ratio = norm_tf.value / norm_f.value;
            headline_ratio = headline_ratio.max(ratio);
            rows.push(FunctionEpsRow {
                eps,
                norm_tf: norm_tf.value,
                ratio,
                g_osc_max,
                g_pair_max,
                lemma23,
                lemma23k,
                k2_max,
            });
        }

        let fold = |sel: fn(&FunctionEpsRow) -> f64| rows.iter().map(sel).fold(0.0, f64::max);
        per_function.push(FunctionReport {
            name: name.clone(),
            norm_f: norm_f.value,
            norm_tf: fold(|r| r.norm_tf),
            ratio: fold(|r| r.ratio),
            lemma23: fold(|r| r.lemma23),
            lemma23k: fold(|r| r.lemma23k),
            fq_ratio_max: witnesses.fq_ratio_max,
            per_eps: rows,
        });
    }

    Ok(TheoremReport {
        h1: t1.h1_max(),
        h2: t1.h2_max(),
        sup_t1: t1.sup_t1_max(),
        headline_ratio,
        t1_per_eps: t1.per_eps,
        per_function,
        provenance: Provenance {
            measure_sha256: measure_sha256(measure),
            kernel: kernel.name().to_string(),
            beta: family
                .params
                .as_ref()
                .map(|p| p.beta)
                .unwrap_or_else(|| crate::geometry::DoublingParams::for_measure(measure).beta),
            eps_grid: eps_grid.epsilons().to_vec(),
            family_params: family.params.clone(),
            family_size: family.len(),
            corpus: corpus.iter().map(|(n, _)| n.clone()).collect(),
        },
    })
}
