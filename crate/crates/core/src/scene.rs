//! Gaussian primitives, pinhole cameras and the world → screen projection.

use nalgebra::{Matrix2x3, Matrix3, Matrix4, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::spectral::{SymMat2, SymMat3};

/// Gaussians at or in front of this camera-space depth are culled.
pub const NEAR_PLANE: f64 = 0.01;
/// Extra screen margin (pixels) kept around the image before frustum culling.
pub const CULL_MARGIN: f64 = 16.0;
/// Zeroth-order spherical-harmonics basis constant.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SceneError {
    #[error("gaussian is behind the camera (depth {0})")]
    BehindCamera(f64),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("scene is empty")]
    EmptyScene,
}

/// World-space Gaussian primitive in optimizer parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian3D {
    pub position: Vector3<f64>,
    /// Quaternion (w, x, y, z); normalized whenever it is used.
    pub rotation: [f64; 4],
    /// Natural log of the three axis standard deviations.
    pub log_scales: Vector3<f64>,
    /// Opacity before the sigmoid.
    pub opacity_logit: f64,
    /// Degree-0 spherical-harmonics coefficients; see [`Gaussian3D::rgb`].
    pub sh_dc: [f64; 3],
    /// Largest f_x / depth over the training views that see this Gaussian.
    pub max_sampling_rate: Option<f64>,
}

impl Gaussian3D {
    pub fn new(position: Vector3<f64>, rotation: [f64; 4], scales: Vector3<f64>, opacity: f64, rgb: [f64; 3]) -> Self {
        Self {
            position,
            rotation,
            log_scales: scales.map(f64::ln),
            opacity_logit: inverse_sigmoid(opacity),
            sh_dc: rgb.map(|c| (c - 0.5) / SH_C0),
            max_sampling_rate: None,
        }
    }

    pub fn isotropic(position: Vector3<f64>, scale: f64, opacity: f64, rgb: [f64; 3]) -> Self {
        Self::new(position, [1.0, 0.0, 0.0, 0.0], Vector3::repeat(scale), opacity, rgb)
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn scales(&self) -> Vector3<f64> {
        self.log_scales.map(f64::exp)
    }

    /// View-independent color in [0, 1].
    pub fn rgb(&self) -> [f64; 3] {
        self.sh_dc.map(|c| (0.5 + SH_C0 * c).clamp(0.0, 1.0))
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        quaternion_to_matrix(&self.rotation)
    }

    pub fn covariance(&self) -> SymMat3 {
        compose_covariance(&self.rotation, &self.log_scales)
    }

    pub fn normalize_rotation(&mut self) {
        self.rotation = normalize_quaternion(&self.rotation);
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn inverse_sigmoid(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn normalize_quaternion(q: &[f64; 4]) -> [f64; 4] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n == 0.0 || !n.is_finite() {
        return [1.0, 0.0, 0.0, 0.0];
    }
    q.map(|v| v / n)
}

/// Rotation matrix of the (internally normalized) quaternion (w, x, y, z).
pub fn quaternion_to_matrix(q: &[f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = normalize_quaternion(q);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Quaternion (w, x, y, z) of a proper rotation matrix.
pub fn matrix_to_quaternion(r: &Matrix3<f64>) -> [f64; 4] {
    let rot = nalgebra::Rotation3::from_matrix_unchecked(*r);
    let q = nalgebra::UnitQuaternion::from_rotation_matrix(&rot);
    [q.w, q.i, q.j, q.k]
}

/// Uniformly distributed random rotation.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    quaternion_to_matrix(&random_quaternion(rng))
}

pub fn random_quaternion<R: Rng + ?Sized>(rng: &mut R) -> [f64; 4] {
    let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    normalize_quaternion(&q)
}

/// Σ = R·S·Sᵀ·Rᵀ with S = diag(exp(log_scales)).
pub fn compose_covariance(rotation: &[f64; 4], log_scales: &Vector3<f64>) -> SymMat3 {
    let r = quaternion_to_matrix(rotation);
    let m = r * Matrix3::from_diagonal(&log_scales.map(f64::exp));
    SymMat3::from_matrix(&(m * m.transpose()))
}

/// Pinhole camera: x right, y down, looking along +z in camera space.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraView {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, SceneError> {
        Self::validated(rotation, translation, fx, fy, cx, cy, width, height, 1e-9)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn validated(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        tolerance: f64,
    ) -> Result<Self, SceneError> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(err <= tolerance) || rotation.determinant() < 0.0 {
            return Err(SceneError::InvalidCamera(format!(
                "rotation block is not orthonormal (error {err:e})"
            )));
        }
        if !(fx > 0.0 && fy > 0.0) {
            return Err(SceneError::InvalidCamera("focal lengths must be positive".into()));
        }
        if width == 0 || height == 0 {
            return Err(SceneError::InvalidCamera("image size must be positive".into()));
        }
        Ok(Self {
            rotation,
            translation,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Camera at `eye` looking at `target`, principal point at the image center.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, SceneError> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-12 {
            return Err(SceneError::InvalidCamera("up vector parallel to view direction".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Self::new(
            rotation,
            translation,
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
        )
    }

    pub fn world_to_camera_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Same camera with both focal lengths multiplied by `factor`.
    pub fn zoomed(&self, factor: f64) -> Self {
        Self {
            fx: self.fx * factor,
            fy: self.fy * factor,
            ..self.clone()
        }
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

/// Screen-space Gaussian produced by [`project`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat2D {
    pub mean: [f64; 2],
    pub cov: SymMat2,
    pub depth: f64,
    pub opacity: f64,
    pub color: [f64; 3],
    pub source_index: usize,
}

/// Camera-space mean and covariance: μ' = Wμ + t, Σ' = W Σ Wᵀ.
pub fn world_to_camera(g: &Gaussian3D, v: &CameraView) -> (Vector3<f64>, SymMat3) {
    let mean = v.to_camera(&g.position);
    let cov = v.rotation * g.covariance().to_matrix() * v.rotation.transpose();
    (mean, SymMat3::from_matrix(&cov))
}

/// Jacobian of the perspective projection at camera-space point `mean`.
pub fn projection_jacobian(mean: &Vector3<f64>, fx: f64, fy: f64) -> Result<Matrix2x3<f64>, SceneError> {
    let (x, y, z) = (mean.x, mean.y, mean.z);
    if !(z > NEAR_PLANE) {
        return Err(SceneError::BehindCamera(z));
    }
    let z2 = z * z;
    Ok(Matrix2x3::new(fx / z, 0.0, -fx * x / z2, 0.0, fy / z, -fy * y / z2))
}

/// Projects a Gaussian into the image of `v`; Σ_proj = J Σ' Jᵀ.
pub fn project(g: &Gaussian3D, v: &CameraView, source_index: usize) -> Result<Splat2D, SceneError> {
    let (mean_cam, cov_cam) = world_to_camera(g, v);
    let jac = projection_jacobian(&mean_cam, v.fx, v.fy)?;
    let cov = jac * cov_cam.to_matrix() * jac.transpose();
    Ok(Splat2D {
        mean: [
            v.fx * mean_cam.x / mean_cam.z + v.cx,
            v.fy * mean_cam.y / mean_cam.z + v.cy,
        ],
        cov: SymMat2::from_matrix(&cov),
        depth: mean_cam.z,
        opacity: g.opacity(),
        color: g.rgb(),
        source_index,
    })
}

/// True when the 3σ bounding box of the splat touches the image rectangle
/// grown by [`CULL_MARGIN`].
pub fn in_frustum(mean: &[f64; 2], cov: &SymMat2, v: &CameraView) -> bool {
    let hx = 3.0 * cov.xx.max(0.0).sqrt();
    let hy = 3.0 * cov.yy.max(0.0).sqrt();
    mean[0] + hx >= -CULL_MARGIN
        && mean[0] - hx <= v.width as f64 + CULL_MARGIN
        && mean[1] + hy >= -CULL_MARGIN
        && mean[1] - hy <= v.height as f64 + CULL_MARGIN
}
