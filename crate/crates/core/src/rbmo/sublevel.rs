//! Exact piecewise-linear structure of `t -> integral over Q of |f - t|`.
//!
//! The weighted absolute-deviation function is convex and piecewise linear
//! with breakpoints at the distinct sample values, so sublevel sets are
//! closed intervals computable without scanning a t-grid.

use crate::geometry::Cube;
use crate::measure::AtomicMeasure;
use crate::rbmo::{RbmoError, SampledFunction};

/// Solution set of `oscillation(f, Q, t, rho) <= bound` in `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SublevelSet {
    Empty,
    Interval { lo: f64, hi: f64 },
    /// No atoms in the cube: every constant works.
    All,
}

/// Sorted sample values of `f` on a cube with aggregated weights and prefix
/// sums, plus the oscillation denominator `mu(rho Q)`.
#[derive(Debug, Clone)]
pub(crate) struct PiecewiseOsc {
    vals: Vec<f64>,
    // prefix_w[k] = total weight of the first k distinct values; prefix_wv is
    // the matching weighted value sum. Lengths are vals.len() + 1.
    prefix_w: Vec<f64>,
    prefix_wv: Vec<f64>,
    pub(crate) denom: f64,
}

impl PiecewiseOsc {
    pub(crate) fn build(
        measure: &AtomicMeasure,
        f: &SampledFunction,
        cube: &Cube,
        rho: f64,
    ) -> Result<Self, RbmoError> {
        if !(rho >= 1.0) {
            return Err(RbmoError::InvalidRho(rho));
        }
        let denom = measure.mu_cube(&cube.dilate(rho));
        if denom <= 0.0 {
            return Err(RbmoError::ZeroMass);
        }
        let mut samples: Vec<(f64, f64)> = (0..measure.len())
            .filter(|&i| cube.contains_coords(measure.coords(i)))
            .map(|i| (f.values()[i], measure.mass(i)))
            .collect();
        samples.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite sample values"));
        let mut vals = Vec::with_capacity(samples.len());
        let mut wts: Vec<f64> = Vec::with_capacity(samples.len());
        for (v, w) in samples {
            if vals.last() == Some(&v) {
                *wts.last_mut().expect("parallel weights") += w;
            } else {
                vals.push(v);
                wts.push(w);
            }
        }
        let mut prefix_w = Vec::with_capacity(vals.len() + 1);
        let mut prefix_wv = Vec::with_capacity(vals.len() + 1);
        prefix_w.push(0.0);
        prefix_wv.push(0.0);
        for (v, w) in vals.iter().zip(&wts) {
            prefix_w.push(prefix_w.last().unwrap() + w);
            prefix_wv.push(prefix_wv.last().unwrap() + w * v);
        }
        Ok(PiecewiseOsc {
            vals,
            prefix_w,
            prefix_wv,
            denom,
        })
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    fn total_w(&self) -> f64 {
        *self.prefix_w.last().unwrap()
    }

    fn total_wv(&self) -> f64 {
        *self.prefix_wv.last().unwrap()
    }

    /// `phi(t) = sum_i w_i |v_i - t|`, exact from prefix sums.
    pub(crate) fn phi(&self, t: f64) -> f64 {
        let k = self.vals.partition_point(|v| *v <= t);
        t * (2.0 * self.prefix_w[k] - self.total_w()) + self.total_wv()
            - 2.0 * self.prefix_wv[k]
    }

    /// Minimizer of `phi`: the weighted median, with plateau ties resolved to
    /// the plateau midpoint so the choice commutes with sign flips.
    pub(crate) fn min_point(&self) -> f64 {
        assert!(!self.vals.is_empty());
        let half = self.total_w() * 0.5;
        // first index with cumulative weight reaching half
        let mut k = 0;
        while self.prefix_w[k + 1] < half {
            k += 1;
        }
        if self.prefix_w[k + 1] == half && k + 1 < self.vals.len() {
            (self.vals[k] + self.vals[k + 1]) * 0.5
        } else {
            self.vals[k]
        }
    }

    pub(crate) fn min_phi(&self) -> f64 {
        if self.vals.is_empty() {
            0.0
        } else {
            self.phi(self.min_point())
        }
    }

    /// `{t : phi(t) <= budget}` as a closed interval. The weighted structure
    /// is exact; no tolerance is applied to the comparison.
    pub(crate) fn sublevel_raw(&self, budget: f64) -> SublevelSet {
        if self.vals.is_empty() {
            return SublevelSet::All;
        }
        let w = self.total_w();
        let s = self.total_wv();
        let p = self.vals.len();
        if budget < self.min_phi() {
            return SublevelSet::Empty;
        }

        // Left endpoint: smallest t with phi(t) <= budget. phi decreases on
        // the left branch, so scan breakpoints from the left. Ray solutions
        // are clamped to the first breakpoint: the true endpoint cannot lie
        // beyond a breakpoint already inside the sublevel set.
        let lo = if self.phi(self.vals[0]) <= budget {
            ((s - budget) / w).min(self.vals[0])
        } else {
            let mut k = 1;
            while self.phi(self.vals[k]) > budget {
                k += 1;
                debug_assert!(k < p);
            }
            // crossing inside segment (vals[k-1], vals[k]) where the count of
            // values <= t is k
            let slope = 2.0 * self.prefix_w[k] - w;
            debug_assert!(slope < 0.0);
            (budget - s + 2.0 * self.prefix_wv[k]) / slope
        };

        // Right endpoint, mirrored.
        let hi = if self.phi(self.vals[p - 1]) <= budget {
            ((s + budget) / w).max(self.vals[p - 1])
        } else {
            let mut k = p - 2;
            while self.phi(self.vals[k]) > budget {
                debug_assert!(k > 0);
                k -= 1;
            }
            // crossing inside segment (vals[k], vals[k+1]); count <= t is k+1
            let slope = 2.0 * self.prefix_w[k + 1] - w;
            debug_assert!(slope > 0.0);
            (budget - s + 2.0 * self.prefix_wv[k + 1]) / slope
        };

        if lo > hi {
            // roundoff collapse near the minimum
            let mid = 0.5 * (lo + hi);
            SublevelSet::Interval { lo: mid, hi: mid }
        } else {
            SublevelSet::Interval { lo, hi }
        }
    }
}

/// The set `{t : oscillation(measure, f, cube, t, rho) <= bound}`.
pub fn sublevel_interval(
    measure: &AtomicMeasure,
    f: &SampledFunction,
    cube: &Cube,
    bound: f64,
    rho: f64,
) -> Result<SublevelSet, RbmoError> {
    if bound < 0.0 {
        return Ok(SublevelSet::Empty);
    }
    let osc = PiecewiseOsc::build(measure, f, cube, rho)?;
    Ok(osc.sublevel_raw(bound * osc.denom))
}
