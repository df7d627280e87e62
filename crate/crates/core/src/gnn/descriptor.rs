use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::pe::{ProcessorKind, TemplateKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DescriptorKind {
    Normal,
    Nested {
        subset_count: usize,
        subset_size: usize,
    },
    /// Three-tier nesting, e.g. cells, UEs per cell, streams per UE.
    Nested3 {
        groups: usize,
        subsets_per_group: usize,
        subset_size: usize,
    },
}

impl DescriptorKind {
    pub fn tiers(self) -> usize {
        match self {
            DescriptorKind::Normal => 1,
            DescriptorKind::Nested { .. } => 2,
            DescriptorKind::Nested3 { .. } => 3,
        }
    }

    /// Number of top-level subsets, which joint groups must agree on.
    fn outer_count(self) -> Option<usize> {
        match self {
            DescriptorKind::Normal => None,
            DescriptorKind::Nested { subset_count, .. } => Some(subset_count),
            DescriptorKind::Nested3 { groups, .. } => Some(groups),
        }
    }
}

/// One set of a wireless problem, as identified before designing a GNN.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetDescriptor {
    pub name: String,
    pub kind: DescriptorKind,
    /// Sets sharing an id must be permuted jointly.
    #[serde(default)]
    pub joint_group: Option<u32>,
    /// Interference exists along this set.
    #[serde(default)]
    pub interference_present: bool,
    /// The interference is visible in the environmental parameters.
    #[serde(default)]
    pub interference_in_parameters: bool,
}

impl SetDescriptor {
    pub fn normal(name: &str) -> Self {
        Self {
            name: name.into(),
            kind: DescriptorKind::Normal,
            joint_group: None,
            interference_present: false,
            interference_in_parameters: false,
        }
    }

    pub fn nested(name: &str, subset_count: usize, subset_size: usize) -> Self {
        Self {
            kind: DescriptorKind::Nested {
                subset_count,
                subset_size,
            },
            ..Self::normal(name)
        }
    }

    pub fn joint(mut self, group: u32) -> Self {
        self.joint_group = Some(group);
        self
    }

    /// Marks interference along this set; `in_parameters` records whether
    /// the environmental parameters already expose it.
    pub fn interference(mut self, in_parameters: bool) -> Self {
        self.interference_present = true;
        self.interference_in_parameters = in_parameters;
        self
    }

    /// Interference that only shows up through the decision variables.
    pub fn needs_attention(&self) -> bool {
        self.interference_present && !self.interference_in_parameters
    }
}

/// Where attention processors go. `Procedure` follows the descriptors; the
/// other choices build ablations with the same recursion order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "sets", rename_all = "snake_case")]
pub enum AttentionPlacement {
    #[default]
    Procedure,
    None,
    Sets(Vec<String>),
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerFunctions {
    /// Combiners and processors are one-set PE functions of later recursions.
    PeFunctions,
    Fnn,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecursionPlan {
    /// Index into the descriptor list.
    pub set: usize,
    pub name: String,
    pub template: TemplateKind,
    pub tiers: usize,
    pub processor: ProcessorKind,
    pub inner: InnerFunctions,
}

/// Structure of one GNN update before any parameters exist.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GnnPlan {
    pub recursions: Vec<RecursionPlan>,
    /// Joint groups as descriptor indices, in order of first appearance.
    pub joint_groups: Vec<Vec<usize>>,
    pub output_function: bool,
}

impl GnnPlan {
    /// Recursion indices that hold attention processors.
    pub fn attention_recursions(&self) -> Vec<usize> {
        self.recursions
            .iter()
            .enumerate()
            .filter(|(_, r)| r.processor == ProcessorKind::Attention)
            .map(|(i, _)| i)
            .collect()
    }

    /// Descriptor index handled by each recursion.
    pub fn order(&self) -> Vec<usize> {
        self.recursions.iter().map(|r| r.set).collect()
    }
}

/// Orders the recursions, picks template and processor kinds, and decides
/// whether a joint output function is needed.
pub fn plan_gnn(descriptors: &[SetDescriptor], placement: &AttentionPlacement) -> Result<GnnPlan> {
    if descriptors.is_empty() {
        return Err(contract("at least one set descriptor is required"));
    }
    for (i, d) in descriptors.iter().enumerate() {
        if descriptors[..i].iter().any(|e| e.name == d.name) {
            return Err(contract(format!("set name '{}' is used twice", d.name)));
        }
        if d.interference_in_parameters && !d.interference_present {
            return Err(contract(format!(
                "set '{}' marks interference in parameters without interference",
                d.name
            )));
        }
        let sizes_ok = match d.kind {
            DescriptorKind::Normal => true,
            DescriptorKind::Nested {
                subset_count,
                subset_size,
            } => subset_count > 0 && subset_size > 0,
            DescriptorKind::Nested3 {
                groups,
                subsets_per_group,
                subset_size,
            } => groups > 0 && subsets_per_group > 0 && subset_size > 0,
        };
        if !sizes_ok {
            return Err(contract(format!("set '{}' has an empty subset level", d.name)));
        }
    }
    let interf: Vec<usize> = (0..descriptors.len())
        .filter(|&i| descriptors[i].needs_attention())
        .collect();
    if interf.len() > 1 {
        return Err(contract(format!(
            "{} sets carry interference hidden from the parameters; one is supported",
            interf.len()
        )));
    }
    if let AttentionPlacement::Sets(names) = placement {
        for n in names {
            if !descriptors.iter().any(|d| &d.name == n) {
                return Err(contract(format!("attention placed on unknown set '{n}'")));
            }
        }
    }

    let mut order: Vec<usize> = interf.clone();
    order.extend((0..descriptors.len()).filter(|i| !interf.contains(i)));

    let mut joint_groups: Vec<(u32, Vec<usize>)> = Vec::new();
    for (i, d) in descriptors.iter().enumerate() {
        if let Some(g) = d.joint_group {
            match joint_groups.iter_mut().find(|(id, _)| *id == g) {
                Some((_, members)) => members.push(i),
                None => joint_groups.push((g, vec![i])),
            }
        }
    }
    for (g, members) in &joint_groups {
        if members.len() < 2 {
            return Err(contract(format!("joint group {g} has a single set")));
        }
        let counts: Vec<Option<usize>> =
            members.iter().map(|&i| descriptors[i].kind.outer_count()).collect();
        let nested = counts.iter().filter(|c| c.is_some()).count();
        if nested != 0 && nested != counts.len() {
            return Err(contract(format!("joint group {g} mixes normal and nested sets")));
        }
        if counts.windows(2).any(|w| w[0] != w[1]) {
            return Err(contract(format!("joint group {g} joins sets of different sizes")));
        }
    }

    let last = order.len() - 1;
    let recursions = order
        .iter()
        .enumerate()
        .map(|(r, &i)| {
            let d = &descriptors[i];
            let attention = match placement {
                AttentionPlacement::Procedure => d.needs_attention(),
                AttentionPlacement::None => false,
                AttentionPlacement::Sets(names) => names.contains(&d.name),
                AttentionPlacement::All => true,
            };
            let nested = d.kind.tiers() > 1;
            let template = match (nested, attention) {
                (false, false) => TemplateKind::ApeI,
                (false, true) => TemplateKind::ApeII,
                (true, false) => TemplateKind::NpeI,
                (true, true) => TemplateKind::NpeII,
            };
            RecursionPlan {
                set: i,
                name: d.name.clone(),
                template,
                tiers: d.kind.tiers(),
                processor: if attention {
                    ProcessorKind::Attention
                } else {
                    ProcessorKind::Ordinary
                },
                inner: if r == last {
                    InnerFunctions::Fnn
                } else {
                    InnerFunctions::PeFunctions
                },
            }
        })
        .collect();
    let output_function = !joint_groups.is_empty();
    Ok(GnnPlan {
        recursions,
        joint_groups: joint_groups.into_iter().map(|(_, m)| m).collect(),
        output_function,
    })
}
