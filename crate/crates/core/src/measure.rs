//! Finite atomic measures on `R^m` carrying a growth parameter `n`.
//!
//! Every measure here is a finite list of weighted points. Integration is
//! exact finite summation in atom-index order, so all derived quantities are
//! bit-reproducible.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Cube;

/// Absolute tolerance used by cube membership and containment tests.
pub const GEOM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("invalid measure spec: {0}")]
    InvalidSpec(String),
    #[error("empty cube family")]
    EmptyFamily,
}

/// Distance used by kernel estimates. Cubes are axis-parallel boxes in every
/// metric; only `dist(.,.)` in kernel bounds changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Max,
    Euclidean,
}

impl Metric {
    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::Max => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// A point of `R^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// On-disk shape: `{"ambient_dim": m, "dim_param": n, "metric": ...,
/// "atoms": [[x1, ..., xm, mass], ...]}`.
#[derive(Serialize, Deserialize)]
struct MeasureFile {
    ambient_dim: usize,
    dim_param: f64,
    metric: Metric,
    atoms: Vec<Vec<f64>>,
}

/// A finite positive atomic measure with growth parameter `dim_param`.
///
/// Invariants: `ambient_dim >= 1`, `0 < dim_param <= ambient_dim`, all masses
/// positive and finite, atom points pairwise distinct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureFile", into = "MeasureFile")]
pub struct AtomicMeasure {
    ambient_dim: usize,
    dim_param: f64,
    metric: Metric,
    points: Vec<Point>,
    masses: Vec<f64>,
    total_mass: f64,
}

impl TryFrom<MeasureFile> for AtomicMeasure {
    type Error = MeasureError;

    fn try_from(file: MeasureFile) -> Result<Self, MeasureError> {
        let mut points = Vec::with_capacity(file.atoms.len());
        let mut masses = Vec::with_capacity(file.atoms.len());
        for row in &file.atoms {
            if row.len() != file.ambient_dim + 1 {
                return Err(MeasureError::InvalidSpec(format!(
                    "atom row of length {} does not match ambient_dim {} plus mass",
                    row.len(),
                    file.ambient_dim
                )));
            }
            points.push(Point::new(row[..file.ambient_dim].to_vec()));
            masses.push(row[file.ambient_dim]);
        }
        AtomicMeasure::new(file.ambient_dim, file.dim_param, file.metric, points, masses)
    }
}

impl From<AtomicMeasure> for MeasureFile {
    fn from(m: AtomicMeasure) -> MeasureFile {
        let atoms = m
            .points
            .iter()
            .zip(&m.masses)
            .map(|(p, w)| {
                let mut row = p.coords.clone();
                row.push(*w);
                row
            })
            .collect();
        MeasureFile {
            ambient_dim: m.ambient_dim,
            dim_param: m.dim_param,
            metric: m.metric,
            atoms,
        }
    }
}

impl AtomicMeasure {
    pub fn new(
        ambient_dim: usize,
        dim_param: f64,
        metric: Metric,
        points: Vec<Point>,
        masses: Vec<f64>,
    ) -> Result<Self, MeasureError> {
        if ambient_dim == 0 {
            return Err(MeasureError::InvalidSpec("ambient_dim must be >= 1".into()));
        }
        if !(dim_param > 0.0 && dim_param <= ambient_dim as f64) {
            return Err(MeasureError::InvalidSpec(format!(
                "dim_param must satisfy 0 < n <= {ambient_dim}, got {dim_param}"
            )));
        }
        if points.len() != masses.len() {
            return Err(MeasureError::InvalidSpec(
                "points and masses lengths differ".into(),
            ));
        }
        if points.is_empty() {
            return Err(MeasureError::InvalidSpec("measure has no atoms".into()));
        }
        for p in &points {
            if p.dim() != ambient_dim {
                return Err(MeasureError::InvalidSpec(format!(
                    "point of dimension {} in ambient dimension {ambient_dim}",
                    p.dim()
                )));
            }
            if p.coords.iter().any(|c| !c.is_finite()) {
                return Err(MeasureError::InvalidSpec("non-finite coordinate".into()));
            }
        }
        for w in &masses {
            if !(w.is_finite() && *w > 0.0) {
                return Err(MeasureError::InvalidSpec(format!("nonpositive mass {w}")));
            }
        }
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                if points[i].coords == points[j].coords {
                    return Err(MeasureError::InvalidSpec(format!(
                        "duplicate atom at indices {i} and {j}"
                    )));
                }
            }
        }
        let total_mass = masses.iter().sum();
        Ok(AtomicMeasure {
            ambient_dim,
            dim_param,
            metric,
            points,
            masses,
            total_mass,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim_param(&self) -> f64 {
        self.dim_param
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn point(&self, i: usize) -> &Point {
        &self.points[i]
    }

    pub fn coords(&self, i: usize) -> &[f64] {
        &self.points[i].coords
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i]
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.metric.dist(self.coords(i), self.coords(j))
    }

    /// True when `p` coincides with an atom up to `GEOM_TOL` per coordinate.
    pub fn is_support_point(&self, p: &[f64]) -> bool {
        self.points.iter().any(|q| {
            q.coords.len() == p.len()
                && q.coords.iter().zip(p).all(|(a, b)| (a - b).abs() <= GEOM_TOL)
        })
    }

    /// Max-coordinate diameter of the support (coordinate-wise extent).
    pub fn diameter(&self) -> f64 {
        let mut d = 0.0_f64;
        for c in 0..self.ambient_dim {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for p in &self.points {
                lo = lo.min(p.coords[c]);
                hi = hi.max(p.coords[c]);
            }
            d = d.max(hi - lo);
        }
        d
    }

    /// Smallest max-coordinate distance between two distinct atoms.
    pub fn min_gap(&self) -> f64 {
        let mut g = f64::INFINITY;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                g = g.min(Metric::Max.dist(self.coords(i), self.coords(j)));
            }
        }
        g
    }

    /// Mass inside the closed cube (boundary atoms included).
    pub fn mu_cube(&self, cube: &Cube) -> f64 {
        let mut s = 0.0;
        for i in 0..self.len() {
            if cube.contains_coords(self.coords(i)) {
                s += self.masses[i];
            }
        }
        s
    }

    /// Largest ratio `mu(Q) / side(Q)^n` over the family: an empirical lower
    /// bound for the best growth constant of the measure.
    pub fn ndim_constant(&self, family: &[Cube]) -> Result<f64, MeasureError> {
        if family.is_empty() {
            return Err(MeasureError::EmptyFamily);
        }
        let mut best = 0.0_f64;
        for q in family {
            best = best.max(self.mu_cube(q) / pow_dim(q.side(), self.dim_param));
        }
        Ok(best)
    }

    /// Same atoms padded with zero coordinates into a larger ambient space.
    pub fn embed(&self, new_dim: usize) -> Result<AtomicMeasure, MeasureError> {
        if new_dim < self.ambient_dim {
            return Err(MeasureError::InvalidSpec(format!(
                "cannot embed dimension {} into {}",
                self.ambient_dim, new_dim
            )));
        }
        let points = self
            .points
            .iter()
            .map(|p| {
                let mut c = p.coords.clone();
                c.resize(new_dim, 0.0);
                Point::new(c)
            })
            .collect();
        AtomicMeasure::new(
            new_dim,
            self.dim_param,
            self.metric,
            points,
            self.masses.clone(),
        )
    }
}

/// `x^n` with exact handling of the common integer exponents.
pub(crate) fn pow_dim(x: f64, n: f64) -> f64 {
    if n == 1.0 {
        x
    } else if n == 2.0 {
        x * x
    } else {
        x.powf(n)
    }
}

/// Canonical measure constructions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MeasureSpec {
    /// `count` atoms at the midpoints of an even split of `[start, end]`,
    /// each of mass `(end - start) / count`.
    UniformGrid { start: f64, end: f64, count: usize },
    /// Centers of the depth-level squares of the 1/4 four-corner construction
    /// on the unit square, each of mass `4^-depth`; planar with `n = 1`.
    CantorFourCorner { depth: u32 },
    /// Uniform grid on `[0, 1]` plus a geometric cluster at positions
    /// `2 + 4^-k` with masses `2^-k`, `k = 1..=cluster_count`.
    TwoScale {
        grid_count: usize,
        cluster_count: usize,
    },
    Explicit {
        ambient_dim: usize,
        dim_param: f64,
        metric: Metric,
        atoms: Vec<(Vec<f64>, f64)>,
    },
}

pub fn build_measure(spec: &MeasureSpec) -> Result<AtomicMeasure, MeasureError> {
    match spec {
        MeasureSpec::UniformGrid { start, end, count } => {
            if *count == 0 {
                return Err(MeasureError::InvalidSpec("uniform grid needs count >= 1".into()));
            }
            if !(end > start) {
                return Err(MeasureError::InvalidSpec(format!(
                    "uniform grid endpoints must be ordered, got [{start}, {end}]"
                )));
            }
            let h = (end - start) / *count as f64;
            let points = (0..*count)
                .map(|i| Point::new(vec![start + (i as f64 + 0.5) * h]))
                .collect();
            let masses = vec![h; *count];
            AtomicMeasure::new(1, 1.0, Metric::Max, points, masses)
        }
        MeasureSpec::CantorFourCorner { depth } => {
            if *depth > 8 {
                return Err(MeasureError::InvalidSpec(format!(
                    "four-corner depth {depth} exceeds the supported maximum 8"
                )));
            }
            let mut centers = vec![[0.5_f64, 0.5_f64]];
            let mut side = 1.0_f64;
            for _ in 0..*depth {
                let offset = 3.0 * side / 8.0;
                let mut next = Vec::with_capacity(centers.len() * 4);
                for c in &centers {
                    for sx in [-1.0, 1.0] {
                        for sy in [-1.0, 1.0] {
                            next.push([c[0] + sx * offset, c[1] + sy * offset]);
                        }
                    }
                }
                centers = next;
                side /= 4.0;
            }
            let mass = 0.25_f64.powi(*depth as i32);
            let points = centers
                .iter()
                .map(|c| Point::new(vec![c[0], c[1]]))
                .collect();
            let masses = vec![mass; centers.len()];
            AtomicMeasure::new(2, 1.0, Metric::Max, points, masses)
        }
        MeasureSpec::TwoScale {
            grid_count,
            cluster_count,
        } => {
            if *grid_count == 0 || *cluster_count == 0 {
                return Err(MeasureError::InvalidSpec(
                    "two-scale measure needs grid_count >= 1 and cluster_count >= 1".into(),
                ));
            }
            if *cluster_count > 48 {
                return Err(MeasureError::InvalidSpec(
                    "cluster_count above 48 produces sub-ulp atom spacing".into(),
                ));
            }
            let h = 1.0 / *grid_count as f64;
            let mut points: Vec<Point> = (0..*grid_count)
                .map(|i| Point::new(vec![(i as f64 + 0.5) * h]))
                .collect();
            let mut masses = vec![h; *grid_count];
            for k in 1..=*cluster_count {
                points.push(Point::new(vec![2.0 + 0.25_f64.powi(k as i32)]));
                masses.push(0.5_f64.powi(k as i32));
            }
            AtomicMeasure::new(1, 1.0, Metric::Max, points, masses)
        }
        MeasureSpec::Explicit {
            ambient_dim,
            dim_param,
            metric,
            atoms,
        } => {
            let points = atoms.iter().map(|(c, _)| Point::new(c.clone())).collect();
            let masses = atoms.iter().map(|(_, w)| *w).collect();
            AtomicMeasure::new(*ambient_dim, *dim_param, *metric, points, masses)
        }
    }
}
