use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::HierarchySpec;

/// Joint names of the 24-joint SMPL body, in index order.
pub const SMPL_JOINTS: [&str; 24] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hand",
    "right_hand",
];

/// Joint naming plus the limb tree used by hierarchy encoders and limb masking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSchema {
    joint_names: Vec<String>,
    hierarchy: HierarchySpec,
}

impl Default for SkeletonSchema {
    fn default() -> Self {
        Self {
            joint_names: SMPL_JOINTS.iter().map(|s| s.to_string()).collect(),
            hierarchy: HierarchySpec::default(),
        }
    }
}

impl SkeletonSchema {
    pub fn new(joint_names: Vec<String>, hierarchy: HierarchySpec) -> Result<Self> {
        if joint_names.is_empty() {
            return Err(Error::Config("schema needs at least one joint".into()));
        }
        if joint_names.len() != hierarchy.num_joints {
            return Err(Error::Config(format!(
                "{} joint names but the hierarchy covers {} joints",
                joint_names.len(),
                hierarchy.num_joints
            )));
        }
        let mut seen = HashSet::new();
        for n in &joint_names {
            if n.is_empty() || n.contains([',', ' ', '\t', '\n', '=']) {
                return Err(Error::Config(format!("invalid joint name {n:?}")));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::Config(format!("duplicate joint name {n:?}")));
            }
        }
        hierarchy.validate()?;
        Ok(Self { joint_names, hierarchy })
    }

    /// Schema for arbitrary joint names. The SMPL names get the SMPL limb
    /// tree; anything else gets a single limb holding every joint.
    pub fn from_names(joint_names: Vec<String>) -> Result<Self> {
        let hierarchy = if joint_names.iter().map(String::as_str).eq(SMPL_JOINTS) {
            HierarchySpec::default()
        } else {
            HierarchySpec::single_limb(joint_names.len())
        };
        Self::new(joint_names, hierarchy)
    }

    pub fn num_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn hierarchy(&self) -> &HierarchySpec {
        &self.hierarchy
    }

    /// Joint indices of `limb`, or a parameter error naming the known limbs.
    pub fn limb_joints(&self, limb: &str) -> Result<&[usize]> {
        self.hierarchy.limb(limb).map(|l| l.joints.as_slice()).ok_or_else(|| {
            let known: Vec<&str> = self.hierarchy.limbs.iter().map(|l| l.name.as_str()).collect();
            Error::Param(format!("unknown limb {limb:?} (known: {})", known.join(", ")))
        })
    }
}
