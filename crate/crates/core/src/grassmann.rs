//! Points on the Grassmannian G(n, r) and the handful of operations the
//! regularizer and the synthetic world need from it.
//!
//! A point `[U]` is stored as an `n x r` matrix with orthonormal columns. Two
//! bases that differ by right multiplication with an orthogonal `r x r` matrix
//! represent the same point, so everything here is written in terms of the
//! projector `U U^T` or of principal angles, never raw basis entries.
//!
//! ```text
//! d_proj([U1], [U2]) = ||U1 U1^T - U2 U2^T||_F / sqrt(2)
//!                    = sqrt(sum_i sin^2(theta_i))        (equal ranks)
//! ```

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Smallest singular value a matrix may have and still count as full rank.
pub const RANK_TOL: f64 = 1e-12;
/// Frobenius tolerance on `U^T U - I` for a basis to count as orthonormal.
pub const ORTHO_TOL: f64 = 1e-10;
/// Margin below pi/2 at which a geodesic stops being unique.
pub const GEODESIC_ANGLE_MARGIN: f64 = 1e-8;
/// Guard for the norm in the membership residual.
pub const RESIDUAL_EPS: f64 = 1e-12;

/// An orthonormal basis representing a point on G(n, r).
#[derive(Debug, Clone, PartialEq)]
pub struct SubspacePoint {
    basis: DMatrix<f64>,
}

impl SubspacePoint {
    /// Wraps a basis that is already orthonormal, checking the invariant.
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        check_shape(&basis)?;
        let r = basis.ncols();
        let gram = basis.transpose() * &basis;
        let defect = (gram - DMatrix::<f64>::identity(r, r)).norm();
        if defect > ORTHO_TOL {
            return Err(Error::InvalidParameter(format!(
                "basis columns are not orthonormal (defect {defect:e})"
            )));
        }
        Ok(Self { basis })
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// The orthogonal projector `U U^T` onto the subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// Returns `U^T v`, the coordinates of the orthogonal projection of `v`.
    pub fn coordinates(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim(),
                found: v.len(),
            });
        }
        Ok(self.basis.tr_mul(v))
    }
}

/// Principal angles between two equal-rank subspaces, ascending, in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalAngles(Vec<f64>);

impl PrincipalAngles {
    pub fn angles(&self) -> &[f64] {
        &self.0
    }

    pub fn largest(&self) -> f64 {
        self.0.last().copied().unwrap_or(0.0)
    }

    /// `sqrt(sum sin^2 theta_i)`, which equals the projection distance.
    pub fn chordal_norm(&self) -> f64 {
        self.0.iter().map(|t| t.sin().powi(2)).sum::<f64>().sqrt()
    }
}

fn check_shape(m: &DMatrix<f64>) -> Result<()> {
    if m.ncols() == 0 || m.nrows() <= m.ncols() {
        return Err(Error::InvalidParameter(format!(
            "subspace basis must be n x r with n > r >= 1, got {} x {}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("subspace basis"));
    }
    Ok(())
}

/// Orthonormal basis for the column space of `m`.
///
/// The rank gate uses the singular values of `m`; the basis itself comes from
/// a Householder QR with the sign of each column chosen so that `R` has a
/// positive diagonal. That makes the result the same basis a Gram-Schmidt
/// sweep over the columns would produce, in the same column order.
pub fn orthonormalize(m: &DMatrix<f64>) -> Result<SubspacePoint> {
    check_shape(m)?;
    let smallest = m
        .singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if smallest.is_nan() || smallest <= RANK_TOL {
        return Err(Error::RankDeficient { smallest });
    }

    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(SubspacePoint { basis: q })
}

fn check_same_ambient(a: &SubspacePoint, b: &SubspacePoint) -> Result<()> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: a.ambient_dim(),
            found: b.ambient_dim(),
        });
    }
    Ok(())
}

fn check_same_rank(a: &SubspacePoint, b: &SubspacePoint) -> Result<()> {
    check_same_ambient(a, b)?;
    if a.rank() != b.rank() {
        return Err(Error::RankMismatch {
            left: a.rank(),
            right: b.rank(),
        });
    }
    Ok(())
}

/// Projection metric `||P_a - P_b||_F / sqrt(2)`.
pub fn projection_distance(a: &SubspacePoint, b: &SubspacePoint) -> Result<f64> {
    check_same_ambient(a, b)?;
    let diff = a.projector() - b.projector();
    Ok(diff.norm() * std::f64::consts::FRAC_1_SQRT_2)
}

fn cross_gram(a: &SubspacePoint, b: &SubspacePoint) -> DMatrix<f64> {
    a.basis.tr_mul(&b.basis)
}

/// Principal angles from the singular values of `a^T b`.
pub fn principal_angles(a: &SubspacePoint, b: &SubspacePoint) -> Result<PrincipalAngles> {
    check_same_rank(a, b)?;
    // Cosines alone lose precision near zero angle, sines near pi/2; pairing
    // the descending cosines with the ascending sines of (I - a a^T) b keeps
    // both ends accurate.
    let mut cosines: Vec<f64> = cross_gram(a, b)
        .singular_values()
        .iter()
        .map(|s| s.clamp(-1.0, 1.0))
        .collect();
    cosines.sort_by(|x, y| y.total_cmp(x));
    let off = &b.basis - &a.basis * cross_gram(a, b);
    let mut sines: Vec<f64> = off
        .singular_values()
        .iter()
        .map(|s| s.clamp(0.0, 1.0))
        .collect();
    sines.sort_by(|x, y| x.total_cmp(y));
    let mut angles: Vec<f64> = cosines
        .iter()
        .zip(&sines)
        .map(|(c, s)| s.atan2(*c).clamp(0.0, FRAC_PI_2))
        .collect();
    angles.sort_by(|x, y| x.total_cmp(y));
    Ok(PrincipalAngles(angles))
}

/// The minimizing geodesic from `a` to `b`, precomputed so that many points
/// along it can be evaluated cheaply.
///
/// With `a^T b = Y cos(Theta) Z^T`, the principal vectors `a Y` and `b Z` pair
/// up column by column; each pair spans a plane and the geodesic rotates the
/// first vector towards the second inside that plane.
#[derive(Debug, Clone)]
pub struct Geodesic {
    start: DMatrix<f64>,
    direction: DMatrix<f64>,
    angles: Vec<f64>,
}

impl Geodesic {
    pub fn new(a: &SubspacePoint, b: &SubspacePoint) -> Result<Self> {
        check_same_rank(a, b)?;
        let svd = cross_gram(a, b).svd(true, true);
        let (y, z_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => unreachable!("svd requested both factors"),
        };
        let start = &a.basis * y;
        let target = &b.basis * z_t.transpose();

        let r = a.rank();
        let mut direction = DMatrix::zeros(a.ambient_dim(), r);
        let mut angles = Vec::with_capacity(r);
        for i in 0..r {
            let cos = svd.singular_values[i].clamp(-1.0, 1.0);
            let theta = cos.acos();
            if theta >= FRAC_PI_2 - GEODESIC_ANGLE_MARGIN {
                return Err(Error::DegenerateGeodesic { angle: theta });
            }
            let sin = theta.sin();
            if sin > RANK_TOL {
                let col = (target.column(i) - start.column(i) * cos) / sin;
                direction.set_column(i, &col);
            }
            angles.push(theta);
        }
        Ok(Self {
            start,
            direction,
            angles,
        })
    }

    /// Arc length of the whole geodesic, `sqrt(sum theta_i^2)`.
    pub fn length(&self) -> f64 {
        self.angles.iter().map(|t| t * t).sum::<f64>().sqrt()
    }

    /// Point at fraction `s` of the way from the start to the end.
    pub fn at(&self, s: f64) -> Result<SubspacePoint> {
        if !s.is_finite() {
            return Err(Error::NonFinite("geodesic parameter"));
        }
        let mut m = self.start.clone();
        for (i, theta) in self.angles.iter().enumerate() {
            let (sin, cos) = (s * theta).sin_cos();
            let col = self.start.column(i) * cos + self.direction.column(i) * sin;
            m.set_column(i, &col);
        }
        orthonormalize(&m)
    }
}

/// Point at fraction `s` in `[0, 1]` along the geodesic from `a` to `b`.
pub fn geodesic(a: &SubspacePoint, b: &SubspacePoint, s: f64) -> Result<SubspacePoint> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidParameter(format!(
            "geodesic parameter {s} outside [0, 1]"
        )));
    }
    Geodesic::new(a, b)?.at(s)
}

/// Relative distance of `v` from the subspace: `||v - U U^T v|| / max(||v||, eps)`.
pub fn span_membership_residual(v: &DVector<f64>, u: &SubspacePoint) -> Result<f64> {
    let coords = u.coordinates(v)?;
    let residual = v - &u.basis * coords;
    let ratio = residual.norm() / v.norm().max(RESIDUAL_EPS);
    Ok(ratio.min(1.0))
}

/// Haar-distributed random point: orthonormalized standard Gaussian matrix.
pub fn random_subspace<R: Rng + ?Sized>(rng: &mut R, n: usize, r: usize) -> Result<SubspacePoint> {
    let m = DMatrix::from_fn(n, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    orthonormalize(&m)
}

/// Random `r x r` orthogonal matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, r: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(r, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = m.qr();
    let mut q = qr.q();
    let rr = qr.r();
    for j in 0..r {
        if rr[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}
