//! Cube geometry over a measure's support: dilation, layered-mass
//! coefficients, doubling cubes, and finite cube-family enumeration.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::measure::{pow_dim, AtomicMeasure, Point, GEOM_TOL};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("smaller cube is not contained in the larger one")]
    NotNested,
    #[error("no doubling dilate within {max_steps} steps; mass ratios seen: {trace:?}")]
    NotFound { max_steps: usize, trace: Vec<f64> },
    #[error("empty cube family")]
    EmptyFamily,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

/// Closed axis-parallel cube given by center and side length.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    center: Point,
    side: f64,
}

impl Cube {
    pub fn new(center: Point, side: f64) -> Result<Self, GeometryError> {
        if !(side.is_finite() && side > 0.0) {
            return Err(GeometryError::InvalidParam(format!(
                "cube side must be positive and finite, got {side}"
            )));
        }
        Ok(Cube { center, side })
    }

    pub fn centered_at_atom(
        measure: &AtomicMeasure,
        atom: usize,
        side: f64,
    ) -> Result<Self, GeometryError> {
        if atom >= measure.len() {
            return Err(GeometryError::InvalidParam(format!(
                "atom index {atom} out of range for {} atoms",
                measure.len()
            )));
        }
        Cube::new(measure.point(atom).clone(), side)
    }

    pub fn center(&self) -> &[f64] {
        &self.center.coords
    }

    pub fn center_point(&self) -> &Point {
        &self.center
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    /// Same center, side scaled by `lambda`.
    pub fn dilate(&self, lambda: f64) -> Cube {
        assert!(lambda.is_finite() && lambda > 0.0, "dilation factor {lambda}");
        Cube {
            center: self.center.clone(),
            side: self.side * lambda,
        }
    }

    /// Closed membership with absolute tolerance `GEOM_TOL` per coordinate.
    pub fn contains_coords(&self, p: &[f64]) -> bool {
        debug_assert_eq!(p.len(), self.center.coords.len());
        let half = self.side / 2.0;
        self.center
            .coords
            .iter()
            .zip(p)
            .all(|(c, x)| (x - c).abs() <= half + GEOM_TOL)
    }

    /// Per-coordinate interval inclusion of `other` in `self`, with tolerance.
    pub fn contains_cube(&self, other: &Cube) -> bool {
        debug_assert_eq!(self.center.coords.len(), other.center.coords.len());
        let ho = other.side / 2.0;
        let hs = self.side / 2.0;
        self.center
            .coords
            .iter()
            .zip(&other.center.coords)
            .all(|(cs, co)| {
                co - ho >= cs - hs - GEOM_TOL && co + ho <= cs + hs + GEOM_TOL
            })
    }

    fn almost_eq(&self, other: &Cube) -> bool {
        self.center.coords == other.center.coords
            && (self.side - other.side).abs() <= GEOM_TOL * self.side.max(other.side)
    }
}

// Wire format: a flat row [c1, ..., cm, side].
impl Serialize for Cube {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut row = self.center.coords.clone();
        row.push(self.side);
        row.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Cube {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let row = Vec::<f64>::deserialize(deserializer)?;
        if row.len() < 2 {
            return Err(D::Error::custom("cube row needs at least one coordinate and a side"));
        }
        let side = row[row.len() - 1];
        Cube::new(Point::new(row[..row.len() - 1].to_vec()), side)
            .map_err(|e| D::Error::custom(e.to_string()))
    }
}

/// Doubling test parameters: a cube is doubling when
/// `mu(alpha Q) < beta * mu(Q)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DoublingParams {
    pub alpha: f64,
    pub beta: f64,
}

impl DoublingParams {
    /// The default threshold `beta = 2 * 4^(m+1)` for ambient dimension `m`,
    /// with `alpha` fixed to 4.
    pub fn for_measure(measure: &AtomicMeasure) -> Self {
        DoublingParams {
            alpha: 4.0,
            beta: 2.0 * 4.0_f64.powi(measure.ambient_dim() as i32 + 1),
        }
    }

    pub fn validate(&self, dim_param: f64) -> Result<(), GeometryError> {
        if !(self.alpha > 1.0) {
            return Err(GeometryError::InvalidParam(format!(
                "alpha must exceed 1, got {}",
                self.alpha
            )));
        }
        if !(self.beta > pow_dim(self.alpha, dim_param)) {
            return Err(GeometryError::InvalidParam(format!(
                "beta must exceed alpha^n = {}, got {}",
                pow_dim(self.alpha, dim_param),
                self.beta
            )));
        }
        Ok(())
    }
}

/// Smallest integer `k >= 0` with `2^k * l_q >= l_r`, treating relative
/// differences below 1e-12 as ties so exact powers of two stay exact.
pub fn dyadic_steps(l_q: f64, l_r: f64) -> u32 {
    let mut k = 0;
    let mut s = l_q;
    while s < l_r * (1.0 - 1e-12) {
        s *= 2.0;
        k += 1;
        assert!(k < 4100, "dyadic step runaway: {l_q} -> {l_r}");
    }
    k
}

/// Layered-mass coefficient
/// `K(Q, R) = 1 + sum_{j=1..N} mu(2^j Q) / side(2^j Q)^n` where `N` is the
/// smallest integer with `side(2^N Q) >= side(R)`. Requires `Q` inside `R`.
pub fn k_coefficient(
    measure: &AtomicMeasure,
    q: &Cube,
    r: &Cube,
) -> Result<f64, GeometryError> {
    if !r.contains_cube(q) {
        return Err(GeometryError::NotNested);
    }
    let n = measure.dim_param();
    let steps = dyadic_steps(q.side(), r.side());
    let mut total = 1.0;
    let mut dilate = q.clone();
    for _ in 0..steps {
        dilate = dilate.dilate(2.0);
        total += measure.mu_cube(&dilate) / pow_dim(dilate.side(), n);
    }
    Ok(total)
}

/// `K(Q) = K(Q, 2^k Q)` for the smallest positive integer `k` with
/// `mu(2^k Q)` strictly above half the total mass.
pub fn k_cap(measure: &AtomicMeasure, q: &Cube) -> f64 {
    let half = measure.total_mass() * 0.5;
    let mut cur = q.dilate(2.0);
    let mut k = 1;
    while measure.mu_cube(&cur) <= half {
        cur = cur.dilate(2.0);
        k += 1;
        assert!(k < 4100, "dilation runaway in k_cap");
    }
    k_coefficient(measure, q, &cur).expect("concentric dilate contains the base cube")
}

/// `mu(alpha Q) < beta * mu(Q)`; zero-mass cubes are never doubling.
pub fn is_doubling(measure: &AtomicMeasure, q: &Cube, params: &DoublingParams) -> bool {
    let mq = measure.mu_cube(q);
    if mq <= 0.0 {
        return false;
    }
    measure.mu_cube(&q.dilate(params.alpha)) < params.beta * mq
}

/// First doubling cube in the sequence `Q, alpha Q, alpha^2 Q, ...`.
pub fn smallest_doubling_dilate(
    measure: &AtomicMeasure,
    q: &Cube,
    params: &DoublingParams,
    max_steps: usize,
) -> Result<Cube, GeometryError> {
    if max_steps == 0 {
        return Err(GeometryError::InvalidParam("max_steps must be >= 1".into()));
    }
    let mut cur = q.clone();
    let mut trace = Vec::new();
    for _ in 0..max_steps {
        let mq = measure.mu_cube(&cur);
        let ratio = if mq > 0.0 {
            measure.mu_cube(&cur.dilate(params.alpha)) / mq
        } else {
            f64::INFINITY
        };
        trace.push(ratio);
        if mq > 0.0 && ratio < params.beta {
            return Ok(cur);
        }
        cur = cur.dilate(params.alpha);
    }
    Err(GeometryError::NotFound { max_steps, trace })
}

/// Enumeration parameters stamped into every family built by
/// [`enumerate_cubes`], so downstream estimates stay comparable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub sides: Vec<f64>,
    pub stride: usize,
    pub beta: f64,
}

/// A finite cube family with doubling flags and the list of nested pairs
/// `(i, j)` such that `cube_i` lies inside `cube_j` and has the smaller side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeFamily {
    pub cubes: Vec<Cube>,
    pub doubling_flags: Vec<bool>,
    pub nested_pairs: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<FamilyParams>,
}

impl CubeFamily {
    /// Build flags and nested pairs from a raw cube list. Duplicate cubes and
    /// cubes of zero mass are dropped.
    pub fn from_cubes(
        measure: &AtomicMeasure,
        cubes: Vec<Cube>,
        params: &DoublingParams,
    ) -> Result<Self, GeometryError> {
        let mut kept: Vec<Cube> = Vec::with_capacity(cubes.len());
        for c in cubes {
            if measure.mu_cube(&c) <= 0.0 {
                continue;
            }
            if kept.iter().any(|k| k.almost_eq(&c)) {
                continue;
            }
            kept.push(c);
        }
        if kept.is_empty() {
            return Err(GeometryError::EmptyFamily);
        }
        let doubling_flags = kept
            .iter()
            .map(|c| is_doubling(measure, c, params))
            .collect();
        let mut nested_pairs = Vec::new();
        for i in 0..kept.len() {
            for j in 0..kept.len() {
                if i != j
                    && kept[i].side() <= kept[j].side() * (1.0 + 1e-12)
                    && kept[j].contains_cube(&kept[i])
                {
                    nested_pairs.push((i, j));
                }
            }
        }
        Ok(CubeFamily {
            cubes: kept,
            doubling_flags,
            nested_pairs,
            params: None,
        })
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn doubling_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.doubling_flags[i]).collect()
    }

    /// Nested pairs with both endpoints doubling.
    pub fn doubling_nested_pairs(&self) -> Vec<(usize, usize)> {
        self.nested_pairs
            .iter()
            .copied()
            .filter(|&(i, j)| self.doubling_flags[i] && self.doubling_flags[j])
            .collect()
    }

    /// Geometric and flag consistency; used after deserialization.
    pub fn validate(
        &self,
        measure: &AtomicMeasure,
        params: &DoublingParams,
    ) -> Result<(), GeometryError> {
        if self.cubes.is_empty() {
            return Err(GeometryError::EmptyFamily);
        }
        if self.doubling_flags.len() != self.cubes.len() {
            return Err(GeometryError::InvalidParam(
                "doubling_flags length mismatch".into(),
            ));
        }
        for (idx, c) in self.cubes.iter().enumerate() {
            if !measure.is_support_point(c.center()) {
                return Err(GeometryError::InvalidParam(format!(
                    "cube {idx} is not centered at a support point"
                )));
            }
            if self.doubling_flags[idx] != is_doubling(measure, c, params) {
                return Err(GeometryError::InvalidParam(format!(
                    "doubling flag for cube {idx} is inconsistent"
                )));
            }
        }
        for &(i, j) in &self.nested_pairs {
            if i >= self.len() || j >= self.len() {
                return Err(GeometryError::InvalidParam("pair index out of range".into()));
            }
            if !self.cubes[j].contains_cube(&self.cubes[i]) {
                return Err(GeometryError::NotNested);
            }
        }
        Ok(())
    }

    /// The family together with the `lambda`-dilate of every member
    /// (deduplicated), plus the index of each original cube's dilate in the
    /// augmented family.
    pub fn augmented_with_dilates(
        &self,
        measure: &AtomicMeasure,
        lambda: f64,
        params: &DoublingParams,
    ) -> Result<(CubeFamily, Vec<usize>), GeometryError> {
        let mut cubes = self.cubes.clone();
        for c in &self.cubes {
            let d = c.dilate(lambda);
            if !cubes.iter().any(|k| k.almost_eq(&d)) {
                cubes.push(d);
            }
        }
        let augmented = CubeFamily::from_cubes(measure, cubes, params)?;
        let map = self
            .cubes
            .iter()
            .map(|c| {
                let d = c.dilate(lambda);
                augmented
                    .cubes
                    .iter()
                    .position(|k| k.almost_eq(&d))
                    .expect("dilate present in augmented family")
            })
            .collect();
        Ok((augmented, map))
    }
}

/// Cubes centered at every `stride`-th atom with each side in `side_grid`.
pub fn enumerate_cubes(
    measure: &AtomicMeasure,
    side_grid: &[f64],
    center_stride: usize,
    params: &DoublingParams,
) -> Result<CubeFamily, GeometryError> {
    if side_grid.is_empty() {
        return Err(GeometryError::EmptyFamily);
    }
    if center_stride == 0 {
        return Err(GeometryError::InvalidParam("stride must be >= 1".into()));
    }
    for s in side_grid {
        if !(s.is_finite() && *s > 0.0) {
            return Err(GeometryError::InvalidParam(format!("bad side {s}")));
        }
    }
    let mut cubes = Vec::new();
    let mut idx = 0;
    while idx < measure.len() {
        for s in side_grid {
            cubes.push(Cube::new(measure.point(idx).clone(), *s)?);
        }
        idx += center_stride;
    }
    let mut family = CubeFamily::from_cubes(measure, cubes, params)?;
    family.params = Some(FamilyParams {
        sides: side_grid.to_vec(),
        stride: center_stride,
        beta: params.beta,
    });
    Ok(family)
}

/// Halving side grid starting at four diameters, so the top scale contains
/// every smaller family cube regardless of center.
pub fn dyadic_side_grid(measure: &AtomicMeasure, levels: usize) -> Vec<f64> {
    let top = 4.0 * measure.diameter().max(f64::MIN_POSITIVE);
    (0..levels).map(|j| top * 0.5_f64.powi(j as i32)).collect()
}

/// `K(Q, R)` for every nested pair of the family, in pair order.
pub fn pair_coefficients(
    measure: &AtomicMeasure,
    family: &CubeFamily,
) -> Result<Vec<f64>, GeometryError> {
    family
        .nested_pairs
        .iter()
        .map(|&(i, j)| k_coefficient(measure, &family.cubes[i], &family.cubes[j]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{build_measure, MeasureSpec};

    fn grid256() -> AtomicMeasure {
        build_measure(&MeasureSpec::UniformGrid {
            start: 0.0,
            end: 1.0,
            count: 256,
        })
        .unwrap()
    }

    fn cube1(center: f64, side: f64) -> Cube {
        Cube::new(Point::new(vec![center]), side).unwrap()
    }

    #[test]
    fn dilate_basics() {
        let q = cube1(0.5, 0.25);
        assert_eq!(q.dilate(2.0), cube1(0.5, 0.5));
        assert_eq!(q.dilate(1.0), q);
        assert_eq!(q.dilate(2.0).dilate(2.0), q.dilate(4.0));
    }

    #[test]
    fn k_coefficient_equal_cubes_is_one() {
        let m = grid256();
        let q = cube1(0.5, 0.25);
        assert_eq!(k_coefficient(&m, &q, &q).unwrap(), 1.0);
    }

    #[test]
    fn k_coefficient_grid_example() {
        let m = grid256();
        let q = cube1(0.5, 1.0 / 64.0);
        let r = q.dilate(16.0);
        // direct atom counting: each dyadic dilate has mass equal to its side
        let k = k_coefficient(&m, &q, &r).unwrap();
        assert!((k - 5.0).abs() < 1e-12, "k = {k}");
    }

    #[test]
    fn k_coefficient_rejects_non_nested() {
        let m = grid256();
        let q = cube1(0.1, 0.5);
        let r = cube1(0.9, 0.5);
        assert!(matches!(
            k_coefficient(&m, &q, &r),
            Err(GeometryError::NotNested)
        ));
    }

    #[test]
    fn dyadic_steps_exact_powers() {
        assert_eq!(dyadic_steps(1.0, 1.0), 0);
        assert_eq!(dyadic_steps(2.0, 1.0), 0);
        assert_eq!(dyadic_steps(0.25, 1.0), 2);
        assert_eq!(dyadic_steps(0.25, 1.1), 3);
        // tie within relative 1e-12 counts as reached
        assert_eq!(dyadic_steps(0.1, 0.8), 3);
    }

    #[test]
    fn k_cap_grid_example() {
        let m = grid256();
        let q = cube1(0.5, 0.25);
        // mu(2Q) = 0.5 is not strictly above half, mu(4Q) = 1 is: k = 2
        let k = k_cap(&m, &q);
        assert!((k - 3.0).abs() < 1e-12, "k_cap = {k}");
    }

    #[test]
    fn k_cap_when_cube_already_heavy() {
        let m = grid256();
        let q = cube1(0.5, 0.9);
        // k = 1 is forced even though Q itself holds more than half
        let expected = k_coefficient(&m, &q, &q.dilate(2.0)).unwrap();
        assert_eq!(k_cap(&m, &q), expected);
    }

    // Oracle: re-derive K(Q, 2^k Q) by explicit mass summation.
    #[test]
    fn k_cap_two_scale_against_direct_sum() {
        let m = build_measure(&MeasureSpec::TwoScale {
            grid_count: 32,
            cluster_count: 10,
        })
        .unwrap();
        let q = Cube::centered_at_atom(&m, 3, 1.0 / 64.0).unwrap();

        let half = m.total_mass() / 2.0;
        let mut k = 1;
        loop {
            let side = q.side() * 2.0_f64.powi(k);
            let mut mass = 0.0;
            for i in 0..m.len() {
                if (m.coords(i)[0] - q.center()[0]).abs() <= side / 2.0 + GEOM_TOL {
                    mass += m.mass(i);
                }
            }
            if mass > half {
                break;
            }
            k += 1;
        }
        let mut expected = 1.0;
        for j in 1..=k {
            let side = q.side() * 2.0_f64.powi(j);
            let mut mass = 0.0;
            for i in 0..m.len() {
                if (m.coords(i)[0] - q.center()[0]).abs() <= side / 2.0 + GEOM_TOL {
                    mass += m.mass(i);
                }
            }
            expected += mass / side;
        }
        let got = k_cap(&m, &q);
        assert!((got - expected).abs() <= 1e-12 * expected, "{got} vs {expected}");
        assert!(got > 3.0, "light-region cap should be large, got {got}");
    }

    #[test]
    fn doubling_flags() {
        let m = grid256();
        let params = DoublingParams::for_measure(&m);
        assert_eq!(params.beta, 32.0);
        params.validate(m.dim_param()).unwrap();
        // ratio mu(4Q)/mu(Q) = 4 < 32
        assert!(is_doubling(&m, &cube1(0.5, 0.125), &params));
        // cube already containing everything has ratio 1
        assert!(is_doubling(&m, &cube1(0.5, 8.0), &params));
        // zero-mass cube is not doubling by convention
        assert!(!is_doubling(&m, &cube1(-5.0, 0.01), &params));
    }

    #[test]
    fn smallest_doubling_dilate_returns_first_hit() {
        let m = grid256();
        let params = DoublingParams::for_measure(&m);
        let q = cube1(0.5, 0.125);
        assert!(is_doubling(&m, &q, &params));
        assert_eq!(smallest_doubling_dilate(&m, &q, &params, 8).unwrap(), q);

        // termination within log4(diameter/side) + 1 steps once the dilate
        // swallows the support
        let small = cube1(m.coords(0)[0], 1.0 / 1024.0);
        let bound = ((m.diameter() / small.side()).log(4.0).ceil() as usize) + 1;
        let found = smallest_doubling_dilate(&m, &small, &params, bound + 1).unwrap();
        assert!(is_doubling(&m, &found, &params));
    }

    #[test]
    fn smallest_doubling_dilate_trace_matches_ratio_scan() {
        let m = build_measure(&MeasureSpec::TwoScale {
            grid_count: 16,
            cluster_count: 8,
        })
        .unwrap();
        let params = DoublingParams::for_measure(&m);
        // innermost cluster atom
        let idx = m.len() - 1;
        let q = Cube::centered_at_atom(&m, idx, 1e-4).unwrap();
        match smallest_doubling_dilate(&m, &q, &params, 60) {
            Ok(found) => {
                assert!(is_doubling(&m, &found, &params));
                // oracle: every strictly smaller dilate in the sequence fails
                let mut cur = q.clone();
                while cur.side() < found.side() * (1.0 - 1e-12) {
                    assert!(!is_doubling(&m, &cur, &params));
                    cur = cur.dilate(params.alpha);
                }
            }
            Err(GeometryError::NotFound { trace, .. }) => {
                // oracle: the ratio scan must agree that nothing was doubling
                for (step, r) in trace.iter().enumerate() {
                    let cur = q.dilate(params.alpha.powi(step as i32));
                    let mq = m.mu_cube(&cur);
                    if mq > 0.0 {
                        assert!(*r >= params.beta || !is_doubling(&m, &cur, &params));
                    }
                }
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn enumerate_single_cube_family() {
        let m = grid256();
        let params = DoublingParams::for_measure(&m);
        let family = enumerate_cubes(&m, &[1.0], m.len(), &params).unwrap();
        assert_eq!(family.len(), 1);
        assert!(family.nested_pairs.is_empty());
    }

    #[test]
    fn enumerate_dyadic_family_counts_and_pairs() {
        let m = grid256();
        let params = DoublingParams::for_measure(&m);
        let sides: Vec<f64> = (0..7).map(|j| 0.5_f64.powi(j)).collect();
        let family = enumerate_cubes(&m, &sides, 16, &params).unwrap();
        assert_eq!(family.len(), 16 * 7);
        // brute-force containment oracle
        let mut expected = Vec::new();
        for i in 0..family.len() {
            for j in 0..family.len() {
                if i != j
                    && family.cubes[i].side() <= family.cubes[j].side() * (1.0 + 1e-12)
                    && family.cubes[j].contains_cube(&family.cubes[i])
                {
                    expected.push((i, j));
                }
            }
        }
        assert_eq!(family.nested_pairs, expected);
        // flags agree with is_doubling on every member
        for (i, c) in family.cubes.iter().enumerate() {
            assert_eq!(family.doubling_flags[i], is_doubling(&m, c, &params));
        }
        family.validate(&m, &params).unwrap();
    }

    #[test]
    fn concentric_coefficient_monotone_in_outer_side() {
        let m = grid256();
        let q = cube1(0.5, 1.0 / 64.0);
        let r = q.dilate(4.0);
        let s = q.dilate(16.0);
        let kqr = k_coefficient(&m, &q, &r).unwrap();
        let kqs = k_coefficient(&m, &q, &s).unwrap();
        assert!(kqs >= kqr);
    }

    #[test]
    fn family_json_round_trip() {
        let m = grid256();
        let params = DoublingParams::for_measure(&m);
        let family = enumerate_cubes(&m, &[0.5, 0.25], 64, &params).unwrap();
        let text = serde_json::to_string(&family).unwrap();
        let back: CubeFamily = serde_json::from_str(&text).unwrap();
        assert_eq!(family, back);
        back.validate(&m, &params).unwrap();
    }
}
