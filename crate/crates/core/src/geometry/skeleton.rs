use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::pose::{Pose3d, NUM_JOINTS};

/// COCO-17 keypoint names in their standard order.
pub const COCO17_JOINT_NAMES: [&str; NUM_JOINTS] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

/// Kinematic tree over the 17 joints: `parent[j]` is `None` for the root.
///
/// The default tree is rooted at the left hip (the pelvis-equivalent joint in
/// the COCO-17 set, which has no explicit pelvis): hips carry the legs, the
/// torso rises hip->shoulder on each side, arms hang off the shoulders, and
/// the head chain runs left_shoulder -> nose -> eyes -> ears.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skeleton {
    pub parent: [Option<usize>; NUM_JOINTS],
}

impl Skeleton {
    /// The fixed tree used throughout this project (see joint order above).
    pub fn coco17() -> Self {
        let mut parent = [None; NUM_JOINTS];
        let mut link = |child: usize, par: usize| parent[child] = Some(par);
        link(12, 11); // right_hip    <- left_hip (root)
        link(13, 11); // left_knee    <- left_hip
        link(14, 12); // right_knee   <- right_hip
        link(15, 13); // left_ankle   <- left_knee
        link(16, 14); // right_ankle  <- right_knee
        link(5, 11); //  left_shoulder  <- left_hip
        link(6, 12); //  right_shoulder <- right_hip
        link(7, 5); //   left_elbow   <- left_shoulder
        link(8, 6); //   right_elbow  <- right_shoulder
        link(9, 7); //   left_wrist   <- left_elbow
        link(10, 8); //  right_wrist  <- right_elbow
        link(0, 5); //   nose         <- left_shoulder
        link(1, 0); //   left_eye     <- nose
        link(2, 0); //   right_eye    <- nose
        link(3, 1); //   left_ear     <- left_eye
        link(4, 2); //   right_ear    <- right_eye
        let s = Self { parent };
        debug_assert!(s.validate().is_ok());
        s
    }

    pub fn root(&self) -> usize {
        self.parent
            .iter()
            .position(|p| p.is_none())
            .expect("validated skeleton has a root")
    }

    /// Bones as `(joint, parent)` pairs for every non-root joint, in
    /// ascending joint order.
    pub fn bones(&self) -> Vec<(usize, usize)> {
        (0..NUM_JOINTS)
            .filter_map(|j| self.parent[j].map(|p| (j, p)))
            .collect()
    }

    pub fn bone_name(&self, bone: usize) -> String {
        let (j, p) = self.bones()[bone];
        format!("{}->{}", COCO17_JOINT_NAMES[p], COCO17_JOINT_NAMES[j])
    }

    /// Checks the tree structure: exactly one root, indices in range, acyclic
    /// with every joint reaching the root.
    pub fn validate(&self) -> Result<()> {
        let roots = self.parent.iter().filter(|p| p.is_none()).count();
        if roots != 1 {
            return Err(Error::InvalidSkeleton(format!(
                "expected exactly one root, found {roots}"
            )));
        }
        for j in 0..NUM_JOINTS {
            if let Some(p) = self.parent[j] {
                if p >= NUM_JOINTS {
                    return Err(Error::InvalidSkeleton(format!(
                        "joint {j} has out-of-range parent {p}"
                    )));
                }
            }
            // Walk to the root; a cycle would loop longer than NUM_JOINTS.
            let mut cur = j;
            let mut hops = 0;
            while let Some(p) = self.parent[cur] {
                cur = p;
                hops += 1;
                if hops > NUM_JOINTS {
                    return Err(Error::InvalidSkeleton(format!("cycle through joint {j}")));
                }
            }
        }
        Ok(())
    }

    /// Joints ordered so that every parent precedes its children.
    pub fn topological_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(NUM_JOINTS);
        let mut placed = [false; NUM_JOINTS];
        let root = self.root();
        order.push(root);
        placed[root] = true;
        while order.len() < NUM_JOINTS {
            for j in 0..NUM_JOINTS {
                if !placed[j] && self.parent[j].map(|p| placed[p]) == Some(true) {
                    order.push(j);
                    placed[j] = true;
                }
            }
        }
        order
    }
}

/// Per-bone lengths in world units, indexed like [`Skeleton::bones`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimbProfile {
    pub bone_lengths: Vec<f64>,
}

impl LimbProfile {
    pub fn new(bone_lengths: Vec<f64>) -> Result<Self> {
        if bone_lengths.iter().any(|l| !l.is_finite() || *l <= 0.0) {
            return Err(Error::InvalidParameter(
                "limb profile lengths must be finite and > 0".into(),
            ));
        }
        Ok(Self { bone_lengths })
    }
}

fn bone_vec(pose: &Pose3d, j: usize, p: usize) -> [f64; 3] {
    [
        pose.joints[j][0] - pose.joints[p][0],
        pose.joints[j][1] - pose.joints[p][1],
        pose.joints[j][2] - pose.joints[p][2],
    ]
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Mean bone lengths over the poses where both bone endpoints are valid.
/// A bone measurable in no pose is an error naming that bone.
pub fn limb_profile(poses: &[Pose3d], skeleton: &Skeleton) -> Result<LimbProfile> {
    if poses.is_empty() {
        return Err(Error::InvalidParameter(
            "limb_profile needs at least one pose".into(),
        ));
    }
    let bones = skeleton.bones();
    let mut lengths = Vec::with_capacity(bones.len());
    for (b, &(j, p)) in bones.iter().enumerate() {
        let mut sum = 0.0;
        let mut n = 0usize;
        for pose in poses {
            if pose.valid[j] && pose.valid[p] {
                sum += norm3(bone_vec(pose, j, p));
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::IncompleteProfile {
                bone: b,
                name: skeleton.bone_name(b),
            });
        }
        lengths.push(sum / n as f64);
    }
    LimbProfile::new(lengths)
}

/// Retargets a pose to the given limb proportions: walking the tree from the
/// root, each bone keeps its source direction but takes the target length.
/// The root position is unchanged, so the figure stays where it was.
///
/// Joints whose parent chain contains an invalid joint keep their source
/// coordinates and validity; only bones with both endpoints reachable from a
/// valid root are retargeted.
pub fn scale_pose(source: &Pose3d, skeleton: &Skeleton, target: &LimbProfile) -> Result<Pose3d> {
    let bones = skeleton.bones();
    if target.bone_lengths.len() != bones.len() {
        return Err(Error::ShapeMismatch(format!(
            "profile has {} bones, skeleton has {}",
            target.bone_lengths.len(),
            bones.len()
        )));
    }
    let root = skeleton.root();
    if !source.valid[root] {
        return Err(Error::InvalidParameter(
            "scale_pose requires a valid root joint".into(),
        ));
    }
    // bone index keyed by child joint
    let mut bone_of = [usize::MAX; NUM_JOINTS];
    for (b, &(j, _)) in bones.iter().enumerate() {
        bone_of[j] = b;
    }
    let mut out = source.clone();
    let mut scaled = [false; NUM_JOINTS];
    scaled[root] = true;
    for j in skeleton.topological_order() {
        if j == root {
            continue;
        }
        let p = skeleton.parent[j].expect("non-root joint has a parent");
        if !(source.valid[j] && source.valid[p] && scaled[p]) {
            continue;
        }
        let v = bone_vec(source, j, p);
        let len = norm3(v);
        if len <= 0.0 {
            let b = bone_of[j];
            return Err(Error::DegenerateBone {
                bone: b,
                name: skeleton.bone_name(b),
            });
        }
        let s = target.bone_lengths[bone_of[j]] / len;
        for c in 0..3 {
            out.joints[j][c] = out.joints[p][c] + v[c] * s;
        }
        scaled[j] = true;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t_pose() -> Pose3d {
        // A plausible standing figure, all joints valid, centimeters.
        let mut joints = [[0.0; 3]; NUM_JOINTS];
        joints[11] = [-10.0, 100.0, 0.0]; // left_hip
        joints[12] = [10.0, 100.0, 0.0];
        joints[13] = [-10.0, 55.0, 0.0];
        joints[14] = [10.0, 55.0, 0.0];
        joints[15] = [-10.0, 10.0, 0.0];
        joints[16] = [10.0, 10.0, 0.0];
        joints[5] = [-18.0, 150.0, 0.0]; // left_shoulder
        joints[6] = [18.0, 150.0, 0.0];
        joints[7] = [-45.0, 150.0, 0.0];
        joints[8] = [45.0, 150.0, 0.0];
        joints[9] = [-70.0, 150.0, 0.0];
        joints[10] = [70.0, 150.0, 0.0];
        joints[0] = [0.0, 168.0, 8.0]; // nose
        joints[1] = [-3.0, 172.0, 7.0];
        joints[2] = [3.0, 172.0, 7.0];
        joints[3] = [-7.0, 170.0, 2.0];
        joints[4] = [7.0, 170.0, 2.0];
        Pose3d::all_valid(joints).unwrap()
    }

    #[test]
    fn coco17_tree_is_valid_and_rooted_at_left_hip() {
        let s = Skeleton::coco17();
        s.validate().unwrap();
        assert_eq!(s.root(), 11);
        assert_eq!(s.bones().len(), NUM_JOINTS - 1);
    }

    #[test]
    fn limb_profile_of_single_pose_is_exact() {
        let s = Skeleton::coco17();
        let pose = t_pose();
        let prof = limb_profile(&[pose.clone()], &s).unwrap();
        for (b, &(j, p)) in s.bones().iter().enumerate() {
            let l = norm3(bone_vec(&pose, j, p));
            assert!((prof.bone_lengths[b] - l).abs() < 1e-12);
        }
    }

    #[test]
    fn limb_profile_averages() {
        let s = Skeleton::coco17();
        let a = t_pose();
        // Triple every bone length by scaling around the root.
        let root = a.joints[s.root()];
        let b = a.map_joints(|p| {
            [
                root[0] + 3.0 * (p[0] - root[0]),
                root[1] + 3.0 * (p[1] - root[1]),
                root[2] + 3.0 * (p[2] - root[2]),
            ]
        });
        let pa = limb_profile(&[a.clone()], &s).unwrap();
        let pboth = limb_profile(&[a, b], &s).unwrap();
        for (x, y) in pa.bone_lengths.iter().zip(&pboth.bone_lengths) {
            assert!((2.0 * x - y).abs() < 1e-9, "mean of L and 3L must be 2L");
        }
    }

    #[test]
    fn limb_profile_names_unmeasurable_bone() {
        let s = Skeleton::coco17();
        let mut pose = t_pose();
        pose.valid[16] = false; // right_ankle never valid
        match limb_profile(&[pose], &s) {
            Err(Error::IncompleteProfile { name, .. }) => {
                assert!(name.contains("right_ankle"), "got {name}");
            }
            other => panic!("expected incomplete profile, got {other:?}"),
        }
    }

    #[test]
    fn scale_pose_identity_with_own_profile() {
        let s = Skeleton::coco17();
        let pose = t_pose();
        let prof = limb_profile(&[pose.clone()], &s).unwrap();
        let scaled = scale_pose(&pose, &s, &prof).unwrap();
        for j in 0..NUM_JOINTS {
            for c in 0..3 {
                assert!((scaled.joints[j][c] - pose.joints[j][c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn scale_pose_doubles_bone_vectors() {
        let s = Skeleton::coco17();
        let pose = t_pose();
        let prof = limb_profile(&[pose.clone()], &s).unwrap();
        let doubled = LimbProfile::new(prof.bone_lengths.iter().map(|l| 2.0 * l).collect()).unwrap();
        let scaled = scale_pose(&pose, &s, &doubled).unwrap();
        let root = s.root();
        assert_eq!(scaled.joints[root], pose.joints[root]);
        for &(j, p) in &s.bones() {
            let v0 = bone_vec(&pose, j, p);
            let v1 = bone_vec(&scaled, j, p);
            for c in 0..3 {
                assert!((v1[c] - 2.0 * v0[c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn scale_pose_hits_profile_exactly_and_preserves_angles() {
        let s = Skeleton::coco17();
        let pose = t_pose();
        let target = LimbProfile::new(
            limb_profile(&[pose.clone()], &s)
                .unwrap()
                .bone_lengths
                .iter()
                .enumerate()
                .map(|(i, l)| l * (0.5 + 0.1 * i as f64))
                .collect(),
        )
        .unwrap();
        let scaled = scale_pose(&pose, &s, &target).unwrap();
        let prof = limb_profile(&[scaled.clone()], &s).unwrap();
        for (a, b) in prof.bone_lengths.iter().zip(&target.bone_lengths) {
            assert!((a - b).abs() < 1e-9, "bone length must match target exactly");
        }
        // Bone directions are unchanged, so pairwise angles are too.
        for &(j, p) in &s.bones() {
            let v0 = bone_vec(&pose, j, p);
            let v1 = bone_vec(&scaled, j, p);
            let dot = v0[0] * v1[0] + v0[1] * v1[1] + v0[2] * v1[2];
            let cos = dot / (norm3(v0) * norm3(v1));
            assert!((cos - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn scale_pose_zero_length_bone_is_degenerate() {
        let s = Skeleton::coco17();
        let mut pose = t_pose();
        pose.joints[13] = pose.joints[11]; // left_knee on left_hip
        match scale_pose(&pose, &s, &LimbProfile::new(vec![10.0; 16]).unwrap()) {
            Err(Error::DegenerateBone { name, .. }) => assert!(name.contains("left_knee")),
            other => panic!("expected degenerate bone, got {other:?}"),
        }
    }
}
