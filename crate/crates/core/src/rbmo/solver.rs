//! Min-max witness solver for the infimum-style norms.
//!
//! At a trial level `C` every cube contributes an interval constraint on its
//! witness constant (from the oscillation sublevel set) and every nested pair
//! a two-sided difference constraint `|x_i - x_j| <= C K(Q_i, Q_j)`.
//! Satisfiability is decided by shortest-path relaxation on the constraint
//! graph with a virtual origin encoding the interval bounds; a negative cycle
//! means infeasible. The norm value is found by bisection on `C`.

use crate::geometry::{k_coefficient, CubeFamily};
use crate::measure::AtomicMeasure;
use crate::rbmo::sublevel::{PiecewiseOsc, SublevelSet};
use crate::rbmo::{NormEstimate, NormTag, RbmoError, SampledFunction};

/// Norms that are defined as an infimum over free witness constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeasibilityTag {
    /// Doubling cubes and doubling nested pairs, plain averages (`rho = 1`).
    E,
    /// All cubes and all nested pairs, oscillation normalized by `mu(rho Q)`.
    A { rho: f64 },
}

impl From<FeasibilityTag> for NormTag {
    fn from(t: FeasibilityTag) -> NormTag {
        match t {
            FeasibilityTag::E => NormTag::E,
            FeasibilityTag::A { rho } => NormTag::A { rho },
        }
    }
}

struct Constraint {
    a: usize,
    b: usize,
    k: f64,
}

struct Problem {
    oscs: Vec<PiecewiseOsc>,
    pairs: Vec<Constraint>,
    fallback: f64,
}

/// Relative bisection width at which the search stops. Tight enough that the
/// returned feasible endpoint is indistinguishable from the infimum at the
/// 1e-9 comparison scale used by the norm-ordering checks.
const REL_WIDTH: f64 = 1e-12;
const MAX_PROBES: usize = 80;

impl Problem {
    /// Feasibility at level `c`; on success returns witness constants.
    fn probe(&self, c: f64) -> Option<Vec<f64>> {
        let n = self.oscs.len();
        let mut bounds: Vec<Option<(f64, f64)>> = Vec::with_capacity(n);
        for osc in &self.oscs {
            match osc.sublevel_raw(c * osc.denom) {
                SublevelSet::Empty => return None,
                SublevelSet::Interval { lo, hi } => bounds.push(Some((lo, hi))),
                SublevelSet::All => bounds.push(None),
            }
        }

        // Difference-constraint graph: edge (u -> v, w) encodes x_v <= x_u + w.
        let origin = n;
        let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * n + 2 * self.pairs.len());
        for (i, b) in bounds.iter().enumerate() {
            if let Some((lo, hi)) = b {
                edges.push((origin, i, *hi));
                edges.push((i, origin, -*lo));
            }
        }
        for p in &self.pairs {
            let w = c * p.k;
            edges.push((p.a, p.b, w));
            edges.push((p.b, p.a, w));
        }

        let mut dist = vec![f64::INFINITY; n + 1];
        dist[origin] = 0.0;
        for round in 0..=n {
            let mut changed = false;
            for &(u, v, w) in &edges {
                if dist[u].is_finite() && dist[u] + w < dist[v] {
                    dist[v] = dist[u] + w;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            if round == n {
                return None; // negative cycle: constraints inconsistent
            }
        }

        let witness = (0..n)
            .map(|i| {
                let x = if dist[i].is_finite() { dist[i] } else { self.fallback };
                match bounds[i] {
                    Some((lo, hi)) => x.clamp(lo, hi),
                    None => x,
                }
            })
            .collect();
        Some(witness)
    }
}

/// Weighted median of the whole sample set, plateau midpoint on ties.
fn global_median(measure: &AtomicMeasure, f: &SampledFunction) -> f64 {
    let mut samples: Vec<(f64, f64)> = f
        .values()
        .iter()
        .copied()
        .zip(measure.masses().iter().copied())
        .collect();
    samples.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite sample values"));
    let total: f64 = samples.iter().map(|s| s.1).sum();
    let half = total * 0.5;
    let mut acc = 0.0;
    for (idx, (v, w)) in samples.iter().enumerate() {
        acc += w;
        if acc > half {
            return *v;
        }
        if acc == half {
            return if idx + 1 < samples.len() {
                (v + samples[idx + 1].0) * 0.5
            } else {
                *v
            };
        }
    }
    samples.last().expect("nonempty measure").0
}

/// Smallest constant admitting witness constants that satisfy the tag's
/// oscillation and pair conditions on the family, bisected to relative width
/// 1e-12. The returned value is the feasible endpoint of the final bracket,
/// so the stored witness always certifies it.
pub fn feasibility_norm(
    measure: &AtomicMeasure,
    f: &SampledFunction,
    family: &CubeFamily,
    tag: FeasibilityTag,
) -> Result<NormEstimate, RbmoError> {
    f.check_len(measure)?;
    let (active, rho_eff): (Vec<usize>, f64) = match tag {
        FeasibilityTag::E => (family.doubling_indices(), 1.0),
        FeasibilityTag::A { rho } => {
            if !(rho > 1.0) {
                return Err(RbmoError::InvalidRho(rho));
            }
            ((0..family.len()).collect(), rho)
        }
    };
    if active.is_empty() {
        return Err(RbmoError::NoDoublingCubes);
    }
    let mut slot = vec![usize::MAX; family.len()];
    for (s, &i) in active.iter().enumerate() {
        slot[i] = s;
    }
    let raw_pairs: Vec<(usize, usize)> = match tag {
        FeasibilityTag::E => family.doubling_nested_pairs(),
        FeasibilityTag::A { .. } => family.nested_pairs.clone(),
    };
    let mut pairs = Vec::with_capacity(raw_pairs.len());
    for (i, j) in raw_pairs {
        let k = k_coefficient(measure, &family.cubes[i], &family.cubes[j])
            .expect("family nested pairs are contained");
        pairs.push(Constraint {
            a: slot[i],
            b: slot[j],
            k,
        });
    }

    let median = global_median(measure, f);
    let mut oscs = Vec::with_capacity(active.len());
    for &i in &active {
        oscs.push(PiecewiseOsc::build(measure, f, &family.cubes[i], rho_eff)?);
    }
    let problem = Problem {
        oscs,
        pairs,
        fallback: median,
    };

    let c_hi = problem
        .oscs
        .iter()
        .map(|o| if o.is_empty() { 0.0 } else { o.phi(median) / o.denom })
        .fold(0.0, f64::max);

    let finish = |value: f64, witness: Vec<f64>| -> NormEstimate {
        let mut full = vec![None; family.len()];
        for (s, &i) in active.iter().enumerate() {
            full[i] = Some(witness[s]);
        }
        NormEstimate {
            tag: tag.into(),
            value,
            witness: full,
            family: family.clone(),
        }
    };

    if c_hi == 0.0 {
        // every active cube already sits at zero oscillation around the
        // global median, and identical witnesses satisfy all pair constraints
        return Ok(finish(0.0, vec![median; active.len()]));
    }
    if let Some(w) = problem.probe(0.0) {
        return Ok(finish(0.0, w));
    }
    let mut hi = c_hi;
    let mut best = problem
        .probe(c_hi)
        .ok_or(RbmoError::InfeasibleAtUpperBound)?;
    let mut lo = 0.0;
    for _ in 0..MAX_PROBES {
        if hi - lo <= REL_WIDTH * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match problem.probe(mid) {
            Some(w) => {
                hi = mid;
                best = w;
            }
            None => lo = mid,
        }
    }
    Ok(finish(hi, best))
}
