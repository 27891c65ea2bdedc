use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of body keypoints (COCO-17 convention).
pub const NUM_JOINTS: usize = 17;

/// A 3D body pose: 17 keypoints in world units (centimeters) plus a
/// per-joint validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose3d {
    pub joints: [[f64; 3]; NUM_JOINTS],
    pub valid: [bool; NUM_JOINTS],
}

impl Pose3d {
    pub fn new(joints: [[f64; 3]; NUM_JOINTS], valid: [bool; NUM_JOINTS]) -> Result<Self> {
        for (j, p) in joints.iter().enumerate() {
            if valid[j] && !p.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFinite(format!("pose joint {j}")));
            }
        }
        Ok(Self { joints, valid })
    }

    pub fn all_valid(joints: [[f64; 3]; NUM_JOINTS]) -> Result<Self> {
        Self::new(joints, [true; NUM_JOINTS])
    }

    pub fn num_valid(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn is_empty(&self) -> bool {
        self.num_valid() == 0
    }

    /// Applies `f` to every valid joint position.
    pub fn map_joints(&self, mut f: impl FnMut([f64; 3]) -> [f64; 3]) -> Pose3d {
        let mut out = self.clone();
        for j in 0..NUM_JOINTS {
            if self.valid[j] {
                out.joints[j] = f(self.joints[j]);
            }
        }
        out
    }
}

/// Serialized form: `{joints: J x 3, valid: J bools, units: "cm"}`.
#[derive(Serialize, Deserialize)]
struct Pose3dRepr {
    joints: Vec<[f64; 3]>,
    valid: Vec<bool>,
    units: String,
}

impl Serialize for Pose3d {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        Pose3dRepr {
            joints: self.joints.to_vec(),
            valid: self.valid.to_vec(),
            units: "cm".to_owned(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Pose3d {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = Pose3dRepr::deserialize(de)?;
        if repr.joints.len() != NUM_JOINTS || repr.valid.len() != NUM_JOINTS {
            return Err(D::Error::custom(format!(
                "pose must have {NUM_JOINTS} joints, got {}",
                repr.joints.len()
            )));
        }
        if repr.units != "cm" {
            return Err(D::Error::custom(format!(
                "unsupported pose units {:?}, expected \"cm\"",
                repr.units
            )));
        }
        let mut joints = [[0.0; 3]; NUM_JOINTS];
        let mut valid = [false; NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            joints[j] = repr.joints[j];
            valid[j] = repr.valid[j];
        }
        Pose3d::new(joints, valid).map_err(D::Error::custom)
    }
}

/// A 2D pose in pixel coordinates with per-joint confidences in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose2d {
    pub points: Vec<[f64; 2]>,
    pub confidence: Vec<f64>,
}

impl Pose2d {
    pub fn new(points: Vec<[f64; 2]>, confidence: Vec<f64>) -> Result<Self> {
        if points.len() != confidence.len() {
            return Err(Error::ShapeMismatch(format!(
                "pose2d points ({}) vs confidences ({})",
                points.len(),
                confidence.len()
            )));
        }
        for (j, (p, c)) in points.iter().zip(&confidence).enumerate() {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("pose2d point {j}")));
            }
            if !c.is_finite() || *c < 0.0 || *c > 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "pose2d confidence {j} = {c} outside [0, 1]"
                )));
            }
        }
        Ok(Self { points, confidence })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
