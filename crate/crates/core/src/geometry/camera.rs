use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::pose::{Pose2d, Pose3d, NUM_JOINTS};

/// Homogeneous w components smaller than this are treated as degenerate.
pub(crate) const W_EPS: f64 = 1e-9;

/// A calibrated viewpoint: a 3x4 projection matrix mapping world coordinates
/// (centimeters) to homogeneous pixel coordinates, plus the sensor size.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub view_id: String,
    pub projection: Matrix3x4<f64>,
    pub image_size: (u32, u32),
}

impl CameraView {
    /// Builds a camera and checks the projection invariants: rank 3, and a
    /// K[R|t] decomposition with positive-diagonal K and right-handed R.
    pub fn new(
        view_id: impl Into<String>,
        projection: Matrix3x4<f64>,
        image_size: (u32, u32),
    ) -> Result<Self> {
        let cam = Self {
            view_id: view_id.into(),
            projection,
            image_size,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Assembles `P = K [R | t]`.
    pub fn from_krt(
        view_id: impl Into<String>,
        k: &Matrix3<f64>,
        r: &Matrix3<f64>,
        t: &Vector3<f64>,
        image_size: (u32, u32),
    ) -> Result<Self> {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        rt.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
        Self::new(view_id, k * rt, image_size)
    }

    fn validate(&self) -> Result<()> {
        let err = |reason: String| Error::InvalidCamera {
            view_id: self.view_id.clone(),
            reason,
        };
        if !self.projection.iter().all(|v| v.is_finite()) {
            return Err(err("non-finite projection entries".into()));
        }
        let svd = self.projection.svd(false, false);
        let s = svd.singular_values;
        if s[2] <= 1e-12 * s[0] {
            return Err(err(format!(
                "projection rank below 3 (singular values {:.3e}, {:.3e}, {:.3e})",
                s[0], s[1], s[2]
            )));
        }
        let (k, r) = self.decompose_kr()?;
        if k[(0, 0)] <= 0.0 || k[(1, 1)] <= 0.0 || k[(2, 2)] <= 0.0 {
            return Err(err("intrinsic diagonal not positive".into()));
        }
        let ortho = (r.transpose() * r - Matrix3::identity()).norm();
        if ortho > 1e-8 {
            return Err(err(format!("rotation not orthonormal (|R'R - I| = {ortho:.3e})")));
        }
        if (r.determinant() - 1.0).abs() > 1e-8 {
            return Err(err("rotation determinant not +1".into()));
        }
        Ok(())
    }

    /// RQ decomposition of the left 3x3 block into an upper-triangular K with
    /// positive diagonal and a proper rotation R. K is scale-normalized so
    /// that K[2,2] = 1.
    pub fn decompose_kr(&self) -> Result<(Matrix3<f64>, Matrix3<f64>)> {
        let m = self.projection.fixed_view::<3, 3>(0, 0).into_owned();
        if m.determinant().abs() <= 1e-12 {
            return Err(Error::InvalidCamera {
                view_id: self.view_id.clone(),
                reason: "left 3x3 block singular; no K[R|t] decomposition".into(),
            });
        }
        // Givens-rotation RQ: zero m[2,1], m[2,0], m[1,0] in turn.
        let mut k = m;
        let mut q = Matrix3::identity();
        let rotate = |k: &mut Matrix3<f64>, q: &mut Matrix3<f64>, row: usize, (a, b): (usize, usize)| {
            // Rotation in the (a, b) coordinate plane that zeroes k[row, a].
            let x = k[(row, b)];
            let y = k[(row, a)];
            let r = x.hypot(y);
            if r <= f64::MIN_POSITIVE {
                return;
            }
            let (c, s) = (x / r, -(y / r));
            let mut g = Matrix3::identity();
            g[(a, a)] = c;
            g[(b, b)] = c;
            g[(a, b)] = -s;
            g[(b, a)] = s;
            *k *= g;
            *q = g.transpose() * *q;
        };
        rotate(&mut k, &mut q, 2, (1, 2));
        rotate(&mut k, &mut q, 2, (0, 2));
        rotate(&mut k, &mut q, 1, (0, 1));
        // Force positive diagonal on K, pushing signs into Q.
        for i in 0..3 {
            if k[(i, i)] < 0.0 {
                for r in 0..3 {
                    k[(r, i)] = -k[(r, i)];
                }
                for c in 0..3 {
                    q[(i, c)] = -q[(i, c)];
                }
            }
        }
        if q.determinant() < 0.0 {
            k = -k;
            q = -q;
        }
        // The diagonal flips above keep K upper-triangular; normalize scale.
        let scale = k[(2, 2)];
        if scale.abs() <= f64::MIN_POSITIVE {
            return Err(Error::InvalidCamera {
                view_id: self.view_id.clone(),
                reason: "zero K[2,2] after RQ decomposition".into(),
            });
        }
        Ok((k / scale, q))
    }

    /// Camera center in world coordinates (null space of P).
    pub fn center(&self) -> Vector3<f64> {
        let m = self.projection.fixed_view::<3, 3>(0, 0).into_owned();
        let p4 = self.projection.column(3).into_owned();
        -(m.try_inverse().expect("validated camera has invertible M")) * p4
    }

    /// Projects one world point to pixel coordinates.
    pub fn project_point(&self, p: [f64; 3], joint: usize) -> Result<[f64; 2]> {
        let h = self.projection * Vector4::new(p[0], p[1], p[2], 1.0);
        if h.z.abs() < W_EPS {
            return Err(Error::DegenerateProjection { joint, w: h.z });
        }
        Ok([h.x / h.z, h.y / h.z])
    }
}

/// Projects a pose into a camera. Valid joints get confidence 1, invalid
/// joints confidence 0 (their pixel entries are zeroed).
pub fn project(pose: &Pose3d, camera: &CameraView) -> Result<Pose2d> {
    let mut points = vec![[0.0; 2]; NUM_JOINTS];
    let mut confidence = vec![0.0; NUM_JOINTS];
    for j in 0..NUM_JOINTS {
        if !pose.valid[j] {
            continue;
        }
        points[j] = camera.project_point(pose.joints[j], j)?;
        confidence[j] = 1.0;
    }
    Pose2d::new(points, confidence)
}

impl Pose3d {
    /// Convenience wrapper over [`project`].
    pub fn project(&self, camera: &CameraView) -> Result<Pose2d> {
        project(self, camera)
    }
}

/// Serialized form: `{view_id, P: 12 row-major reals, width, height}`.
#[derive(Serialize, Deserialize)]
struct CameraRepr {
    view_id: String,
    #[serde(rename = "P")]
    p: Vec<f64>,
    width: u32,
    height: u32,
}

impl Serialize for CameraView {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let mut p = Vec::with_capacity(12);
        for r in 0..3 {
            for c in 0..4 {
                p.push(self.projection[(r, c)]);
            }
        }
        CameraRepr {
            view_id: self.view_id.clone(),
            p,
            width: self.image_size.0,
            height: self.image_size.1,
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for CameraView {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = CameraRepr::deserialize(de)?;
        if repr.p.len() != 12 {
            return Err(D::Error::custom(format!(
                "camera P must have 12 entries, got {}",
                repr.p.len()
            )));
        }
        let projection = Matrix3x4::from_row_slice(&repr.p);
        CameraView::new(repr.view_id, projection, (repr.width, repr.height))
            .map_err(D::Error::custom)
    }
}
