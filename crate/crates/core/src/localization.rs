//! ToA ranging and linear least-squares multilateration in the plane.
//!
//! Squared ranges `d_i^2 = (x - x_i)^2 + (y - y_i)^2` are linear in
//! `(x, y, x^2 + y^2)`, so with `b_i = d_i^2 - x_i^2 - y_i^2` the position is
//! the first two components of the least-squares solution of `A z = b` with
//! row `i` of `A` equal to `(-2 x_i, -2 y_i, 1)`.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{distance_noise_sigma, ChannelParams};
use crate::error::{Error, Result};

/// A point in the plane, meters.
pub type Point = Vector2<f64>;

/// Largest accepted condition number of `A^T A`.
pub const MAX_CONDITION: f64 = 1e12;

/// Ordered set of reference nodes (anchors).
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceNodeSet {
    anchors: Vec<Point>,
}

impl ReferenceNodeSet {
    /// Validates count, distinctness and non-collinearity.
    pub fn new(anchors: Vec<Point>) -> Result<Self> {
        if anchors.len() < 3 {
            return Err(Error::domain(format!(
                "at least 3 reference nodes are needed for planar ToA localization, got {}",
                anchors.len()
            )));
        }
        if anchors.iter().any(|a| !a.x.is_finite() || !a.y.is_finite()) {
            return Err(Error::domain("reference node coordinates must be finite"));
        }
        let scale = anchors.iter().map(|a| a.amax()).fold(1.0, f64::max);
        for i in 0..anchors.len() {
            for j in 0..i {
                if (anchors[i] - anchors[j]).norm() <= 1e-9 * scale {
                    return Err(Error::domain(format!(
                        "reference nodes {j} and {i} coincide at ({}, {})",
                        anchors[i].x, anchors[i].y
                    )));
                }
            }
        }
        let n = anchors.len() as f64;
        let centroid = anchors.iter().sum::<Point>() / n;
        let scatter = anchors.iter().fold(Matrix2::zeros(), |acc, a| {
            let c = a - centroid;
            acc + c * c.transpose()
        });
        let ev = SymmetricEigen::new(scatter).eigenvalues;
        let (lo, hi) = (ev.min(), ev.max());
        if lo <= 1e-12 * hi {
            return Err(Error::domain("reference nodes are collinear"));
        }
        Ok(ReferenceNodeSet { anchors })
    }

    pub fn from_pairs(pairs: &[[f64; 2]]) -> Result<Self> {
        Self::new(pairs.iter().map(|p| Point::new(p[0], p[1])).collect())
    }

    pub fn anchors(&self) -> &[Point] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

/// Anchor geometry together with the precomputed least-squares operators.
#[derive(Debug, Clone)]
pub struct LocalizationSystem {
    nodes: ReferenceNodeSet,
    design_matrix: DMatrix<f64>,
    pinv_a: DMatrix<f64>,
    coord_rows: DMatrix<f64>,
    ts_operator: DMatrix<f64>,
    // ts_operator^T ts_operator, equal to (coord_rows coord_rows^T)^-1.
    ts_gram: Matrix2<f64>,
    anchor_sq: Vec<f64>,
}

impl LocalizationSystem {
    pub fn new(nodes: ReferenceNodeSet) -> Result<Self> {
        let l = nodes.len();
        let a = DMatrix::from_fn(l, 3, |i, j| match j {
            0 => -2.0 * nodes.anchors[i].x,
            1 => -2.0 * nodes.anchors[i].y,
            _ => 1.0,
        });
        let ata = a.transpose() * &a;
        let ev = SymmetricEigen::new(ata.clone()).eigenvalues;
        let cond = ev.max() / ev.min();
        if !(ev.min() > 0.0) || !(cond <= MAX_CONDITION) {
            return Err(Error::domain(format!(
                "anchor geometry is degenerate: cond(A^T A) = {cond:.3e} exceeds {MAX_CONDITION:e}"
            )));
        }
        let ata_inv = ata
            .try_inverse()
            .ok_or_else(|| Error::domain("A^T A is singular"))?;
        let pinv_a = ata_inv * a.transpose();
        let coord_rows = pinv_a.rows(0, 2).into_owned();
        let outer: Matrix2<f64> = {
            let m = &coord_rows * coord_rows.transpose();
            Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
        };
        let ts_gram = outer.try_inverse().ok_or_else(|| {
            Error::domain("coordinate rows of the pseudo-inverse are rank deficient")
        })?;
        let gram_dyn = DMatrix::from_fn(2, 2, |i, j| ts_gram[(i, j)]);
        let ts_operator = coord_rows.transpose() * gram_dyn;

        let check = &coord_rows * &ts_operator;
        let err = (check - DMatrix::<f64>::identity(2, 2)).amax();
        if err > 1e-9 {
            return Err(Error::numerical(
                "LocalizationSystem::new",
                format!("pseudo-inverse contract violated by {err:.3e}"),
            ));
        }
        let anchor_sq = nodes.anchors.iter().map(|p| p.norm_squared()).collect();
        Ok(LocalizationSystem {
            nodes,
            design_matrix: a,
            pinv_a,
            coord_rows,
            ts_operator,
            ts_gram,
            anchor_sq,
        })
    }

    pub fn from_pairs(pairs: &[[f64; 2]]) -> Result<Self> {
        Self::new(ReferenceNodeSet::from_pairs(pairs)?)
    }

    pub fn nodes(&self) -> &ReferenceNodeSet {
        &self.nodes
    }

    pub fn anchors(&self) -> &[Point] {
        &self.nodes.anchors
    }

    /// Number of reference nodes `L`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `A`, L x 3.
    pub fn design_matrix(&self) -> &DMatrix<f64> {
        &self.design_matrix
    }

    /// `(A^T A)^-1 A^T`, 3 x L.
    pub fn pinv_a(&self) -> &DMatrix<f64> {
        &self.pinv_a
    }

    /// First two rows of the pseudo-inverse, 2 x L.
    pub fn coord_rows(&self) -> &DMatrix<f64> {
        &self.coord_rows
    }

    /// Moore-Penrose pseudo-inverse of [`coord_rows`](Self::coord_rows), L x 2.
    pub fn ts_operator(&self) -> &DMatrix<f64> {
        &self.ts_operator
    }

    /// Gram matrix of the statistic operator, 2 x 2.
    pub fn ts_gram(&self) -> &Matrix2<f64> {
        &self.ts_gram
    }

    /// Rank-2 orthogonal projector `ts_operator * coord_rows`, L x L.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.ts_operator * &self.coord_rows
    }

    /// Distances from `pos` to every anchor; fails if `pos` sits on one.
    pub fn distances(&self, pos: &Point) -> Result<Vec<f64>> {
        self.anchors()
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let d = (pos - a).norm();
                if d > 0.0 {
                    Ok(d)
                } else {
                    Err(Error::domain(format!(
                        "transmitter at ({}, {}) is colocated with reference node {i}",
                        pos.x, pos.y
                    )))
                }
            })
            .collect()
    }

    /// `b` from estimated ranges, written into `out`.
    pub fn fill_b(&self, ranges: &[f64], out: &mut [f64]) {
        for ((o, r), s) in out.iter_mut().zip(ranges).zip(&self.anchor_sq) {
            *o = r * r - s;
        }
    }

    /// Position estimate from a `b` slice of length `L`.
    pub fn solve_slice(&self, b: &[f64]) -> Point {
        let mut x = 0.0;
        let mut y = 0.0;
        for (i, bi) in b.iter().enumerate() {
            x += self.coord_rows[(0, i)] * bi;
            y += self.coord_rows[(1, i)] * bi;
        }
        Point::new(x, y)
    }
}

/// Estimated ranges with their per-anchor noise levels.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMeasurement {
    /// Estimated range to each anchor, meters.
    pub estimates: Vec<f64>,
    /// Standard deviation of each estimate, meters.
    pub sigmas: Vec<f64>,
}

impl DistanceMeasurement {
    pub fn new(estimates: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        if estimates.len() != sigmas.len() {
            return Err(Error::domain(format!(
                "{} estimates but {} sigmas",
                estimates.len(),
                sigmas.len()
            )));
        }
        if let Some(s) = sigmas.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(Error::domain(format!(
                "noise sigma must be finite and non-negative, got {s}"
            )));
        }
        Ok(DistanceMeasurement { estimates, sigmas })
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }
}

/// Draws `d_i + n_i` with `n_i ~ N(0, sigma_i^2)` for every anchor.
pub fn measure_distances<R: Rng + ?Sized>(
    system: &LocalizationSystem,
    params: &ChannelParams,
    tx_pos: &Point,
    rng: &mut R,
) -> Result<DistanceMeasurement> {
    let dist = system.distances(tx_pos)?;
    let mut estimates = Vec::with_capacity(dist.len());
    let mut sigmas = Vec::with_capacity(dist.len());
    for d in dist {
        let s = distance_noise_sigma(params, d)?;
        let z: f64 = rng.sample(StandardNormal);
        estimates.push(d + s * z);
        sigmas.push(s);
    }
    Ok(DistanceMeasurement { estimates, sigmas })
}

/// `b_i = d_i^2 - x_i^2 - y_i^2` from the estimated ranges.
pub fn build_b_vector(
    system: &LocalizationSystem,
    meas: &DistanceMeasurement,
) -> Result<DVector<f64>> {
    if meas.len() != system.len() {
        return Err(Error::domain(format!(
            "measurement has {} ranges, system has {} anchors",
            meas.len(),
            system.len()
        )));
    }
    let mut b = DVector::zeros(system.len());
    system.fill_b(&meas.estimates, b.as_mut_slice());
    Ok(b)
}

/// First two components of `A^+ b`.
pub fn solve_position(system: &LocalizationSystem, b: &DVector<f64>) -> Result<Point> {
    if b.len() != system.len() {
        return Err(Error::domain(format!(
            "b has length {}, expected {}",
            b.len(),
            system.len()
        )));
    }
    let z = system.pinv_a() * b;
    Ok(Point::new(z[0], z[1]))
}
