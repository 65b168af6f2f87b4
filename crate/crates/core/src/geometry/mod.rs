//! Calibrated pinhole camera algebra.
//!
//! World coordinates are millimetres; pixel coordinates are continuous with
//! the origin at the top-left pixel center, x along image columns and y along
//! image rows. A camera maps a world point `P` to camera frame via
//! `X = R·P + t` and to pixels via perspective division of `K·X`.

mod io;

pub use io::{read_cameras, write_cameras, CameraFileError};

use crate::{Mat3, Vec2, Vec3};
use thiserror::Error;

/// Baseline below which two cameras are treated as coincident (mm).
pub const MIN_BASELINE_MM: f64 = 1e-6;
/// Camera-frame depth below which projection is rejected (mm).
pub const MIN_DEPTH_MM: f64 = 1e-6;
/// Condition-number cap for the triangulation normal equations.
pub const MAX_TRIANGULATION_CONDITION: f64 = 1e12;

#[derive(Debug, Error)]
pub enum GeometryError {
    /// Point is on or behind the camera plane.
    #[error("point has non-positive camera-frame depth {0} mm")]
    DegenerateDepth(f64),
    /// Two cameras share (almost) the same center, so epipolar geometry is undefined.
    #[error("camera centers coincide (baseline {0} mm)")]
    CoincidentCameras(f64),
    /// The epipolar line is undefined (pixel at the epipole).
    #[error("degenerate epipolar line for pixel at or near the epipole")]
    DegenerateLine,
    /// Triangulation system is numerically rank deficient (near-parallel rays).
    #[error("ill-conditioned triangulation (condition number {0:.3e})")]
    IllConditioned(f64),
    /// Fewer observations than the operation requires.
    #[error("need at least {required} observations, got {actual}")]
    InsufficientObservations { required: usize, actual: usize },
    /// Camera parameters violate an invariant.
    #[error("invalid camera `{id}`: {reason}")]
    InvalidCamera { id: String, reason: String },
}

/// A calibrated pinhole camera: intrinsics plus a world-to-camera rigid pose.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraParams {
    id: String,
    intrinsics: Mat3,
    rotation: Mat3,
    translation: Vec3,
    image_dims: (u32, u32),
}

impl CameraParams {
    /// Builds a camera, validating the rotation (orthonormal, det +1 within
    /// 1e-9), positive focal lengths and non-zero image dimensions.
    pub fn new(
        id: impl Into<String>,
        intrinsics: Mat3,
        rotation: Mat3,
        translation: Vec3,
        image_dims: (u32, u32),
    ) -> Result<Self, GeometryError> {
        let id = id.into();
        let reject = |reason: &str| GeometryError::InvalidCamera {
            id: id.clone(),
            reason: reason.to_string(),
        };

        let rtr = rotation.transpose() * rotation;
        if (rtr - Mat3::identity()).abs().max() > 1e-9 {
            return Err(reject("rotation is not orthonormal"));
        }
        if (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(reject("rotation determinant is not +1"));
        }
        if intrinsics[(0, 0)] <= 0.0 || intrinsics[(1, 1)] <= 0.0 {
            return Err(reject("focal lengths must be positive"));
        }
        if image_dims.0 == 0 || image_dims.1 == 0 {
            return Err(reject("image dimensions must be positive"));
        }
        Ok(Self {
            id,
            intrinsics,
            rotation,
            translation,
            image_dims,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn intrinsics(&self) -> &Mat3 {
        &self.intrinsics
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// Image (width, height) in pixels.
    pub fn image_dims(&self) -> (u32, u32) {
        self.image_dims
    }

    /// Camera center in world coordinates, `-Rᵀ t`.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// World point to camera frame.
    pub fn world_to_camera(&self, point: &Vec3) -> Vec3 {
        self.rotation * point + self.translation
    }

    /// Camera-frame depth of a world point (mm).
    pub fn depth(&self, point: &Vec3) -> f64 {
        self.world_to_camera(point).z
    }

    /// Projects a world point to continuous pixel coordinates. The result is
    /// returned even when it falls outside the image bounds; only points at
    /// or behind the camera plane are rejected.
    pub fn project(&self, point: &Vec3) -> Result<Vec2, GeometryError> {
        let cam = self.world_to_camera(point);
        if cam.z <= MIN_DEPTH_MM {
            return Err(GeometryError::DegenerateDepth(cam.z));
        }
        let h = self.intrinsics * cam;
        Ok(Vec2::new(h.x / h.z, h.y / h.z))
    }

    /// Back-projects a pixel to the 3D ray of world points imaging there.
    pub fn back_project_ray(&self, pixel: &Vec2) -> Ray3D {
        let k_inv = self
            .intrinsics
            .try_inverse()
            .expect("validated intrinsics are invertible");
        let dir_cam = k_inv * Vec3::new(pixel.x, pixel.y, 1.0);
        let dir_world = (self.rotation.transpose() * dir_cam).normalize();
        Ray3D {
            origin: self.center(),
            direction: dir_world,
        }
    }

    /// True when the pixel lies within `[0, w-1] x [0, h-1]`.
    pub fn contains_pixel(&self, pixel: &Vec2) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x <= (self.image_dims.0 - 1) as f64
            && pixel.y <= (self.image_dims.1 - 1) as f64
    }

    /// 3x4 projection matrix `K [R | t]`.
    pub fn projection_matrix(&self) -> nalgebra::Matrix3x4<f64> {
        let mut rt = nalgebra::Matrix3x4::<f64>::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        rt.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        self.intrinsics * rt
    }
}

/// A 3D ray: origin and unit direction in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray3D {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray3D {
    /// Point on the ray at parameter `lambda` (mm along the direction).
    pub fn at(&self, lambda: f64) -> Vec3 {
        self.origin + self.direction * lambda
    }

    /// Distance from a point to the infinite line carrying the ray.
    pub fn distance_to_point(&self, point: &Vec3) -> f64 {
        let rel = point - self.origin;
        (rel - self.direction * rel.dot(&self.direction)).norm()
    }
}

/// Line `a x + b y + c = 0` in pixel coordinates, normalized to `a² + b² = 1`
/// so that `|a x + b y + c|` is the point-line distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpipolarLine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl EpipolarLine {
    /// Builds a normalized line from raw homogeneous coefficients.
    pub fn from_coefficients(a: f64, b: f64, c: f64) -> Result<Self, GeometryError> {
        let scale = a.abs().max(b.abs()).max(c.abs());
        let norm = a.hypot(b);
        if scale == 0.0 || norm <= 1e-12 * scale {
            return Err(GeometryError::DegenerateLine);
        }
        Ok(Self {
            a: a / norm,
            b: b / norm,
            c: c / norm,
        })
    }

    /// Signed distance from a pixel to the line.
    pub fn signed_distance(&self, pixel: &Vec2) -> f64 {
        self.a * pixel.x + self.b * pixel.y + self.c
    }

    /// Absolute point-line distance in pixels.
    pub fn distance(&self, pixel: &Vec2) -> f64 {
        self.signed_distance(pixel).abs()
    }
}

/// Fundamental matrix mapping pixels of `cam_u` to epipolar lines in `cam_v`:
/// `l_v = F y_u`, with `y_vᵀ F y_u = 0` for corresponding pixels. The matrix
/// is scaled to unit Frobenius norm with a deterministic sign.
pub fn fundamental_matrix(
    cam_u: &CameraParams,
    cam_v: &CameraParams,
) -> Result<Mat3, GeometryError> {
    let baseline = (cam_u.center() - cam_v.center()).norm();
    if baseline <= MIN_BASELINE_MM {
        return Err(GeometryError::CoincidentCameras(baseline));
    }

    // Relative pose u -> v: X_v = R_rel X_u + t_rel.
    let r_rel = cam_v.rotation * cam_u.rotation.transpose();
    let t_rel = cam_v.translation - r_rel * cam_u.translation;
    let essential = skew_symmetric(&t_rel) * r_rel;

    let k_v_inv_t = cam_v
        .intrinsics
        .try_inverse()
        .expect("validated intrinsics are invertible")
        .transpose();
    let k_u_inv = cam_u
        .intrinsics
        .try_inverse()
        .expect("validated intrinsics are invertible");
    let f = k_v_inv_t * essential * k_u_inv;

    let norm = f.norm();
    if norm == 0.0 {
        return Err(GeometryError::CoincidentCameras(baseline));
    }
    let mut f = f / norm;
    // Fix the sign by the entry of largest magnitude (first in row-major order).
    let mut pivot = 0.0f64;
    for r in 0..3 {
        for c in 0..3 {
            if f[(r, c)].abs() > pivot.abs() + 1e-15 {
                pivot = f[(r, c)];
            }
        }
    }
    if pivot < 0.0 {
        f = -f;
    }
    Ok(f)
}

/// Epipolar line in `cam_v` corresponding to `pixel_u` in `cam_u`.
pub fn epipolar_line(
    pixel_u: &Vec2,
    cam_u: &CameraParams,
    cam_v: &CameraParams,
) -> Result<EpipolarLine, GeometryError> {
    let f = fundamental_matrix(cam_u, cam_v)?;
    epipolar_line_from_f(&f, pixel_u)
}

/// Same as [`epipolar_line`] with a precomputed fundamental matrix.
pub fn epipolar_line_from_f(f: &Mat3, pixel_u: &Vec2) -> Result<EpipolarLine, GeometryError> {
    let l = f * Vec3::new(pixel_u.x, pixel_u.y, 1.0);
    EpipolarLine::from_coefficients(l.x, l.y, l.z)
}

/// Result of a linear triangulation.
#[derive(Debug, Clone, Copy)]
pub struct Triangulation {
    /// Estimated world point (mm).
    pub point: Vec3,
    /// RMS reprojection error over the observations used (px).
    pub residual_px: f64,
    /// Number of observations that entered the final solve.
    pub used: usize,
}

/// Linear least-squares (DLT) triangulation from pixel observations.
///
/// Solves the homogeneous system with an SVD after normalizing each row.
/// Observations that place the solution behind their camera are dropped and
/// the remaining ones re-solved, as long as at least two remain.
pub fn triangulate(
    observations: &[(&CameraParams, Vec2)],
) -> Result<Triangulation, GeometryError> {
    if observations.len() < 2 {
        return Err(GeometryError::InsufficientObservations {
            required: 2,
            actual: observations.len(),
        });
    }
    let first = solve_dlt(observations)?;
    let in_front: Vec<(&CameraParams, Vec2)> = observations
        .iter()
        .filter(|(cam, _)| cam.depth(&first.point) > MIN_DEPTH_MM)
        .cloned()
        .collect();
    if in_front.len() == observations.len() || in_front.len() < 2 {
        return Ok(first);
    }
    solve_dlt(&in_front)
}

fn solve_dlt(observations: &[(&CameraParams, Vec2)]) -> Result<Triangulation, GeometryError> {
    // Condition the world frame before the homogeneous solve: anchor at the
    // camera centroid and scale by the mean camera distance. Without this,
    // the ||X|| = 1 constraint lets far-away points shrink the algebraic
    // residual (the homogeneous vector is dominated by the mm-scale spatial
    // part), which biases low-parallax configurations by hundreds of mm.
    let centroid = observations
        .iter()
        .fold(Vec3::zeros(), |acc, (cam, _)| acc + cam.center())
        / observations.len() as f64;
    let mean_dist = observations
        .iter()
        .map(|(cam, _)| (cam.center() - centroid).norm())
        .sum::<f64>()
        / observations.len() as f64;
    let scale = if mean_dist > MIN_BASELINE_MM {
        mean_dist
    } else {
        1.0
    };
    // X = D * X_hat with D mapping conditioned coordinates back to world:
    // spatial columns scaled, translation column at the centroid.
    let mut d = nalgebra::Matrix4::<f64>::identity();
    d[(0, 0)] = scale;
    d[(1, 1)] = scale;
    d[(2, 2)] = scale;
    d[(0, 3)] = centroid.x;
    d[(1, 3)] = centroid.y;
    d[(2, 3)] = centroid.z;

    let rows = 2 * observations.len();
    let mut a = nalgebra::DMatrix::<f64>::zeros(rows, 4);
    for (k, (cam, pixel)) in observations.iter().enumerate() {
        let p = cam.projection_matrix() * d;
        for axis in 0..2 {
            let coord = if axis == 0 { pixel.x } else { pixel.y };
            let mut row = [0.0f64; 4];
            for c in 0..4 {
                row[c] = coord * p[(2, c)] - p[(axis, c)];
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in &mut row {
                    *v /= norm;
                }
            }
            for c in 0..4 {
                a[(2 * k + axis, c)] = row[c];
            }
        }
    }

    let svd = a.clone().svd(false, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .expect("singular values are finite")
    });
    // The smallest singular value is ~0 whenever an exact solution exists,
    // so degeneracy shows up one step earlier: a tiny second-smallest value
    // means the null space is (numerically) two-dimensional and the rays
    // fail to pin down a unique point. Condition of AᵀA is the square.
    let sv_max = svd.singular_values[order[0]];
    let sv_pivot = svd.singular_values[order[order.len() - 2]];
    let cond = if sv_pivot > 0.0 {
        (sv_max / sv_pivot).powi(2)
    } else {
        f64::INFINITY
    };
    if cond > MAX_TRIANGULATION_CONDITION {
        return Err(GeometryError::IllConditioned(cond));
    }

    let v_t = svd.v_t.expect("svd requested v_t");
    let min_idx = order[order.len() - 1];
    let x_hat = v_t.row(min_idx).transpose();
    let x = d * x_hat;
    if x[3].abs() <= f64::EPSILON * 1e3 {
        return Err(GeometryError::IllConditioned(cond));
    }
    let point = Vec3::new(x[0] / x[3], x[1] / x[3], x[2] / x[3]);

    let mut sq_sum = 0.0;
    for (cam, pixel) in observations {
        let p = cam.projection_matrix();
        let h = p * nalgebra::Vector4::new(point.x, point.y, point.z, 1.0);
        let err = if h.z.abs() > f64::MIN_POSITIVE {
            (Vec2::new(h.x / h.z, h.y / h.z) - pixel).norm_squared()
        } else {
            f64::INFINITY
        };
        sq_sum += err;
    }
    Ok(Triangulation {
        point,
        residual_px: (sq_sum / observations.len() as f64).sqrt(),
        used: observations.len(),
    })
}

fn skew_symmetric(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}
