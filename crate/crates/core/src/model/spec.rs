use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArchKind {
    #[serde(rename = "S-TE", alias = "ste")]
    Ste,
    #[serde(rename = "C-TE", alias = "cte")]
    Cte,
    #[serde(rename = "H-TE", alias = "hte")]
    Hte,
    #[serde(rename = "classifier")]
    Classifier,
}

impl ArchKind {
    pub fn is_temporal_encoder(self) -> bool {
        !matches!(self, ArchKind::Classifier)
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchKind::Ste => "S-TE",
            ArchKind::Cte => "C-TE",
            ArchKind::Hte => "H-TE",
            ArchKind::Classifier => "classifier",
        })
    }
}

impl FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "ste" => Ok(ArchKind::Ste),
            "cte" => Ok(ArchKind::Cte),
            "hte" => Ok(ArchKind::Hte),
            "classifier" => Ok(ArchKind::Classifier),
            _ => Err(Error::Param(format!("unknown architecture {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBranchSpec {
    pub filters: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimbSpec {
    pub name: String,
    pub joints: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub limbs: Vec<String>,
}

/// The body tree: joints → limbs → limb groups → body, plus the width of the
/// node at each level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchySpec {
    pub num_joints: usize,
    pub limbs: Vec<LimbSpec>,
    pub groups: Vec<GroupSpec>,
    pub joint_width: usize,
    pub limb_width: usize,
    pub group_width: usize,
    pub body_width: usize,
}

impl Default for HierarchySpec {
    /// 24-joint SMPL-style body.
    fn default() -> Self {
        let limb = |name: &str, joints: &[usize]| LimbSpec {
            name: name.into(),
            joints: joints.to_vec(),
        };
        let group = |name: &str, limbs: &[&str]| GroupSpec {
            name: name.into(),
            limbs: limbs.iter().map(|s| s.to_string()).collect(),
        };
        Self {
            num_joints: 24,
            limbs: vec![
                limb("trunk", &[0, 3, 6, 9, 12, 15]),
                limb("left_arm", &[13, 16, 18, 20, 22]),
                limb("right_arm", &[14, 17, 19, 21, 23]),
                limb("left_leg", &[1, 4, 7, 10]),
                limb("right_leg", &[2, 5, 8, 11]),
            ],
            groups: vec![
                group("arms", &["left_arm", "right_arm"]),
                group("legs", &["left_leg", "right_leg"]),
                group("trunk", &["trunk"]),
            ],
            joint_width: 10,
            limb_width: 30,
            group_width: 60,
            body_width: 300,
        }
    }
}

impl HierarchySpec {
    /// A degenerate tree: one limb holding every joint, one group.
    pub fn single_limb(num_joints: usize) -> Self {
        Self {
            num_joints,
            limbs: vec![LimbSpec {
                name: "body".into(),
                joints: (0..num_joints).collect(),
            }],
            groups: vec![GroupSpec {
                name: "body".into(),
                limbs: vec!["body".into()],
            }],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut seen = vec![0usize; self.num_joints];
        for limb in &self.limbs {
            for &j in &limb.joints {
                match seen.get_mut(j) {
                    Some(c) => *c += 1,
                    None => problems.push(format!(
                        "limb {:?} references joint {j} >= {}",
                        limb.name, self.num_joints
                    )),
                }
            }
        }
        for (j, &c) in seen.iter().enumerate() {
            if c != 1 {
                problems.push(format!("joint {j} belongs to {c} limbs (expected exactly 1)"));
            }
        }
        let mut names = HashSet::new();
        for limb in &self.limbs {
            if !names.insert(limb.name.as_str()) {
                problems.push(format!("duplicate limb name {:?}", limb.name));
            }
            if limb.joints.is_empty() {
                problems.push(format!("limb {:?} has no joints", limb.name));
            }
        }
        for limb in &self.limbs {
            let n = self
                .groups
                .iter()
                .flat_map(|g| &g.limbs)
                .filter(|l| **l == limb.name)
                .count();
            if n != 1 {
                problems.push(format!("limb {:?} appears in {n} groups (expected 1)", limb.name));
            }
        }
        for g in &self.groups {
            for l in &g.limbs {
                if !names.contains(l.as_str()) {
                    problems.push(format!("group {:?} names unknown limb {l:?}", g.name));
                }
            }
            if g.limbs.is_empty() {
                problems.push(format!("group {:?} is empty", g.name));
            }
        }
        if self.limbs.is_empty() || self.groups.is_empty() {
            problems.push("hierarchy needs at least one limb and one group".into());
        }
        for (name, w) in [
            ("joint_width", self.joint_width),
            ("limb_width", self.limb_width),
            ("group_width", self.group_width),
            ("body_width", self.body_width),
        ] {
            if w == 0 {
                problems.push(format!("{name} must be >= 1"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn limb(&self, name: &str) -> Option<&LimbSpec> {
        self.limbs.iter().find(|l| l.name == name)
    }

    pub fn limb_of_joint(&self, joint: usize) -> Option<usize> {
        self.limbs.iter().position(|l| l.joints.contains(&joint))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        Self {
            input: 100,
            hidden: vec![50, 20],
            classes: 9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitSpec {
    /// Standard deviation of the nonzero initial weights.
    pub std: f64,
    /// Nonzero incoming weights per unit, clamped to the fan-in.
    pub nonzeros_per_unit: usize,
    /// Start an encoder's linear output layer at zero, so an untrained
    /// encoder predicts the mean pose.
    pub zero_output: bool,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            std: 1.0,
            nonzeros_per_unit: 15,
            zero_output: true,
        }
    }
}

/// Everything needed to rebuild a network's structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchitectureSpec {
    pub kind: ArchKind,
    pub delta_t: usize,
    pub num_joints: usize,
    /// Width of the layers adjacent to the bottleneck (lower / upper taps).
    pub outer_width: usize,
    pub bottleneck: usize,
    pub conv: Vec<ConvBranchSpec>,
    pub hierarchy: HierarchySpec,
    pub classifier: ClassifierSpec,
    pub init: InitSpec,
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        Self::new(ArchKind::Ste)
    }
}

impl ArchitectureSpec {
    pub fn new(kind: ArchKind) -> Self {
        Self {
            kind,
            delta_t: 100,
            num_joints: 24,
            outer_width: 300,
            bottleneck: 100,
            conv: vec![
                ConvBranchSpec { filters: 30, width: 5 },
                ConvBranchSpec { filters: 30, width: 15 },
                ConvBranchSpec { filters: 30, width: 30 },
            ],
            hierarchy: HierarchySpec::default(),
            classifier: ClassifierSpec::default(),
            init: InitSpec::default(),
        }
    }

    pub fn classifier(input: usize, classes: usize) -> Self {
        let mut s = Self::new(ArchKind::Classifier);
        s.classifier = ClassifierSpec {
            input,
            classes,
            ..ClassifierSpec::default()
        };
        s
    }

    /// Flattened window size `3 · num_joints · delta_t`.
    pub fn window_size(&self) -> usize {
        3 * self.num_joints * self.delta_t
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.init.std.is_finite() && self.init.std > 0.0) {
            problems.push(format!("init.std must be finite and > 0, got {}", self.init.std));
        }
        if self.init.nonzeros_per_unit == 0 {
            problems.push("init.nonzeros_per_unit must be >= 1".into());
        }
        match self.kind {
            ArchKind::Classifier => {
                let c = &self.classifier;
                if c.classes < 2 {
                    problems.push(format!("classifier needs >= 2 classes, got {}", c.classes));
                }
                if c.input == 0 || c.hidden.contains(&0) {
                    problems.push("classifier widths must be >= 1".into());
                }
            }
            _ => {
                if self.delta_t == 0 || self.num_joints == 0 {
                    problems.push("delta_t and num_joints must be >= 1".into());
                }
                if self.outer_width == 0 || self.bottleneck == 0 {
                    problems.push("layer widths must be >= 1".into());
                }
                if self.bottleneck >= self.window_size() {
                    problems.push(format!(
                        "bottleneck {} must be smaller than the window size {}",
                        self.bottleneck,
                        self.window_size()
                    ));
                }
            }
        }
        match self.kind {
            ArchKind::Cte => {
                if self.conv.is_empty() {
                    problems.push("C-TE needs at least one convolution branch".into());
                }
                for b in &self.conv {
                    if b.width == 0 || b.width > self.delta_t {
                        problems.push(format!(
                            "conv width {} must be in [1, delta_t={}]",
                            b.width, self.delta_t
                        ));
                    }
                    if b.filters == 0 {
                        problems.push("conv branch needs >= 1 filter".into());
                    }
                }
            }
            ArchKind::Hte => {
                if self.hierarchy.num_joints != self.num_joints {
                    problems.push(format!(
                        "hierarchy has {} joints but architecture has {}",
                        self.hierarchy.num_joints, self.num_joints
                    ));
                }
                if let Err(Error::Config(msg)) = self.hierarchy.validate() {
                    problems.push(msg);
                }
            }
            _ => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_hierarchy_partitions_joints() {
        let h = HierarchySpec::default();
        h.validate().unwrap();
        assert_eq!(h.limbs.len(), 5);
        assert_eq!(h.groups.len(), 3);
    }

    #[test]
    fn overlapping_limbs_rejected() {
        let mut h = HierarchySpec::default();
        h.limbs[0].joints.push(1);
        let msg = h.validate().unwrap_err().to_string();
        assert!(msg.contains("joint 1 belongs to 2 limbs"), "{msg}");
    }

    #[test]
    fn missing_joint_rejected() {
        let mut h = HierarchySpec::default();
        h.limbs[4].joints.pop();
        assert!(h.validate().is_err());
    }

    #[test]
    fn limb_in_two_groups_rejected() {
        let mut h = HierarchySpec::default();
        h.groups[2].limbs.push("left_arm".into());
        assert!(h.validate().is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("ste".parse::<ArchKind>().unwrap(), ArchKind::Ste);
        assert_eq!("H-TE".parse::<ArchKind>().unwrap(), ArchKind::Hte);
        assert!("rnn".parse::<ArchKind>().is_err());
    }

    #[test]
    fn window_size_default() {
        assert_eq!(ArchitectureSpec::default().window_size(), 7200);
    }

    #[test]
    fn cte_width_beyond_window_rejected() {
        let mut s = ArchitectureSpec::new(ArchKind::Cte);
        s.conv.push(ConvBranchSpec { filters: 2, width: 101 });
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        s.conv.clear();
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn classifier_needs_two_classes() {
        assert!(ArchitectureSpec::classifier(10, 1).validate().is_err());
        assert!(ArchitectureSpec::classifier(10, 2).validate().is_ok());
    }
}
