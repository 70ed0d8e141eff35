//! Component functional summaries.
//!
//! Functional data arrives with the circuit document: one direct logit
//! attribution value per component plus role profiles under two
//! vocabularies (general linguistic roles and task-specific ones). Nothing
//! here recomputes attributions; this module only classifies, aggregates
//! and vectorises what was ingested.
//!
//! A component is *marginal* when its attribution magnitude falls below the
//! configured epsilon. Profiles are typically present only for non-marginal
//! components; every operation that tallies roles therefore works over the
//! profile-bearing components and simply carries marginal ones through when
//! they do have profiles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, NodeKind};
use crate::ingest::CfsEntry;

/// Canonical linguistic role order for fixed-width vectors.
pub const LINGUISTIC_ROLES: [&str; 6] =
    ["subject", "object", "verb", "function", "entity", "other"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoleVocabulary {
    Linguistic,
    TaskSpecific,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum CfsError {
    #[error("aggregate undefined: every profile-bearing component has zero attribution")]
    AllWeightsZero,
    #[error("aggregate undefined: no component carries a profile")]
    NoProfiles,
}

/// Functional record for one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentCfs {
    pub node_id: String,
    pub dla: f64,
    pub marginal: bool,
    pub linguistic: BTreeMap<String, f64>,
    pub task_specific: BTreeMap<String, f64>,
}

impl ComponentCfs {
    pub fn new(
        node_id: &str,
        dla: f64,
        linguistic: BTreeMap<String, f64>,
        task_specific: BTreeMap<String, f64>,
        epsilon: f64,
    ) -> Self {
        ComponentCfs {
            node_id: node_id.to_string(),
            dla,
            marginal: flag_marginal(dla, epsilon),
            linguistic,
            task_specific,
        }
    }

    pub fn from_entry(node_id: &str, entry: &CfsEntry, epsilon: f64) -> Self {
        ComponentCfs::new(
            node_id,
            entry.dla,
            entry.linguistic.clone(),
            entry.task_specific.clone(),
            epsilon,
        )
    }

    pub fn profile(&self, vocab: RoleVocabulary) -> &BTreeMap<String, f64> {
        match vocab {
            RoleVocabulary::Linguistic => &self.linguistic,
            RoleVocabulary::TaskSpecific => &self.task_specific,
        }
    }
}

/// Attribution magnitudes strictly below epsilon are marginal.
pub fn flag_marginal(dla: f64, epsilon: f64) -> bool {
    dla.abs() < epsilon
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominantRole {
    pub role: String,
    pub share: f64,
    /// Set when another role tied the count and the name order decided.
    pub tied: bool,
}

/// Most common per-component argmax role under the chosen vocabulary,
/// tallied over components that carry a profile for it. Ties (both inside a
/// component's profile and across the tally) resolve to the smaller role
/// name; tally ties are flagged.
pub fn dominant_role(
    components: &[ComponentCfs],
    vocab: RoleVocabulary,
) -> Option<DominantRole> {
    let mut tally: BTreeMap<&str, u32> = BTreeMap::new();
    let mut total = 0u32;
    for comp in components {
        let profile = comp.profile(vocab);
        let Some(top) = argmax_role(profile) else { continue };
        *tally.entry(top).or_insert(0) += 1;
        total += 1;
    }
    let best = tally.values().copied().max()?;
    let winners: Vec<&str> =
        tally.iter().filter(|(_, &c)| c == best).map(|(&r, _)| r).collect();
    Some(DominantRole {
        role: winners[0].to_string(),
        share: f64::from(best) / f64::from(total),
        tied: winners.len() > 1,
    })
}

fn argmax_role(profile: &BTreeMap<String, f64>) -> Option<&str> {
    let mut best: Option<(&str, f64)> = None;
    for (role, &mass) in profile {
        match best {
            Some((_, m)) if mass <= m => {}
            _ => best = Some((role, mass)),
        }
    }
    best.map(|(r, _)| r)
}

/// Attribution-weighted mean profile over the profile-bearing components:
/// `sum |dla_v| * mass_v / sum |dla_v|`. Sums to 1 whenever every input
/// profile does.
pub fn aggregate_profile(
    components: &[ComponentCfs],
    vocab: RoleVocabulary,
) -> Result<BTreeMap<String, f64>, CfsError> {
    let bearing: Vec<&ComponentCfs> =
        components.iter().filter(|c| !c.profile(vocab).is_empty()).collect();
    if bearing.is_empty() {
        return Err(CfsError::NoProfiles);
    }
    let total_weight: f64 = bearing.iter().map(|c| c.dla.abs()).sum();
    if total_weight == 0.0 {
        return Err(CfsError::AllWeightsZero);
    }
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for comp in bearing {
        let w = comp.dla.abs() / total_weight;
        for (role, mass) in comp.profile(vocab) {
            *out.entry(role.clone()).or_insert(0.0) += w * mass;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfsSummary {
    pub causal_count: u32,
    pub marginal_count: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dominant_role: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dominant_share: Option<f64>,
    pub dominant_tied: bool,
    pub feature_vector: Vec<f64>,
}

/// Fixed-width functional vector: the six canonical linguistic role masses
/// of the aggregate profile, mean attribution magnitude for attention and
/// MLP components, and the causal fraction. Missing data contributes zeros
/// rather than failing; an unweightable aggregate falls back to the plain
/// mean of the profiles.
pub fn cfs_feature_vector(circuit: &Circuit, components: &[ComponentCfs]) -> Vec<f64> {
    let aggregate = match aggregate_profile(components, RoleVocabulary::Linguistic) {
        Ok(p) => p,
        Err(CfsError::AllWeightsZero) => {
            let bearing: Vec<&ComponentCfs> =
                components.iter().filter(|c| !c.linguistic.is_empty()).collect();
            let share = 1.0 / bearing.len() as f64;
            let mut out: BTreeMap<String, f64> = BTreeMap::new();
            for comp in bearing {
                for (role, mass) in &comp.linguistic {
                    *out.entry(role.clone()).or_insert(0.0) += share * mass;
                }
            }
            out
        }
        Err(CfsError::NoProfiles) => BTreeMap::new(),
    };

    let mut vector = Vec::with_capacity(LINGUISTIC_ROLES.len() + 3);
    for role in LINGUISTIC_ROLES {
        vector.push(aggregate.get(role).copied().unwrap_or(0.0));
    }
    for kind in [NodeKind::AttnHead, NodeKind::MlpBlock] {
        let mags: Vec<f64> = components
            .iter()
            .filter(|c| circuit.node(&c.node_id).is_some_and(|n| n.kind == kind))
            .map(|c| c.dla.abs())
            .collect();
        vector.push(if mags.is_empty() {
            0.0
        } else {
            mags.iter().sum::<f64>() / mags.len() as f64
        });
    }
    vector.push(if components.is_empty() {
        0.0
    } else {
        let causal = components.iter().filter(|c| !c.marginal).count();
        causal as f64 / components.len() as f64
    });
    vector
}

/// Assemble the stored summary for one circuit.
pub fn summarise(circuit: &Circuit, components: &[ComponentCfs]) -> CfsSummary {
    let causal_count = components.iter().filter(|c| !c.marginal).count() as u32;
    let marginal_count = components.len() as u32 - causal_count;
    let dominant = dominant_role(components, RoleVocabulary::Linguistic);
    CfsSummary {
        causal_count,
        marginal_count,
        dominant_role: dominant.as_ref().map(|d| d.role.clone()),
        dominant_share: dominant.as_ref().map(|d| d.share),
        dominant_tied: dominant.as_ref().is_some_and(|d| d.tied),
        feature_vector: cfs_feature_vector(circuit, components),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::test_support::{circuit_with, node};

    fn profile(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(r, m)| (r.to_string(), *m)).collect()
    }

    fn comp(id: &str, dla: f64, ling: &[(&str, f64)]) -> ComponentCfs {
        ComponentCfs::new(id, dla, profile(ling), BTreeMap::new(), 0.05)
    }

    #[test]
    fn marginality_is_strict() {
        assert!(flag_marginal(0.04, 0.05));
        assert!(flag_marginal(-0.04, 0.05));
        assert!(!flag_marginal(0.05, 0.05));
        assert!(!flag_marginal(-0.06, 0.05));
    }

    #[test]
    fn dominant_role_skips_profileless_components() {
        // 21 profile-bearing components, 16 of them object-led, plus one
        // marginal component without a profile: share is 16/21.
        let mut comps = Vec::new();
        for i in 0..16 {
            comps.push(comp(&format!("o{i}"), 0.5, &[("object", 0.8), ("other", 0.2)]));
        }
        for i in 0..5 {
            comps.push(comp(&format!("f{i}"), 0.3, &[("function", 0.9), ("other", 0.1)]));
        }
        comps.push(comp("marginal", 0.01, &[]));
        let d = dominant_role(&comps, RoleVocabulary::Linguistic).unwrap();
        assert_eq!(d.role, "object");
        assert!(!d.tied);
        assert!((d.share - 16.0 / 21.0).abs() < 1e-12);
        assert!((d.share - 0.76).abs() < 0.005);
    }

    #[test]
    fn tally_ties_flag_and_pick_the_smaller_name() {
        let comps = vec![
            comp("c0", 0.2, &[("function", 1.0)]),
            comp("c1", 0.2, &[("entity", 1.0)]),
        ];
        let d = dominant_role(&comps, RoleVocabulary::Linguistic).unwrap();
        assert_eq!(d.role, "entity");
        assert!(d.tied);
        assert_eq!(d.share, 0.5);
    }

    #[test]
    fn no_profiles_means_no_dominant_role() {
        let comps = vec![comp("c0", 0.2, &[])];
        assert_eq!(dominant_role(&comps, RoleVocabulary::Linguistic), None);
    }

    #[test]
    fn aggregate_weights_by_attribution_magnitude() {
        let comps = vec![
            comp("c0", 0.9, &[("object", 1.0)]),
            comp("c1", -0.1, &[("verb", 1.0)]),
        ];
        let agg = aggregate_profile(&comps, RoleVocabulary::Linguistic).unwrap();
        assert!((agg["object"] - 0.9).abs() < 1e-12);
        assert!((agg["verb"] - 0.1).abs() < 1e-12);
        assert!((agg.values().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_rejects_zero_weights() {
        let comps = vec![comp("c0", 0.0, &[("object", 1.0)])];
        assert_eq!(
            aggregate_profile(&comps, RoleVocabulary::Linguistic),
            Err(CfsError::AllWeightsZero)
        );
        assert_eq!(
            aggregate_profile(&[comp("c0", 0.3, &[])], RoleVocabulary::Linguistic),
            Err(CfsError::NoProfiles)
        );
    }

    #[test]
    fn feature_vector_layout() {
        let circuit = circuit_with(
            vec![
                node("a0", NodeKind::AttnHead, 3, Some(0)),
                node("m0", NodeKind::MlpBlock, 5, None),
            ],
            vec![],
        );
        let comps = vec![
            comp("a0", 0.8, &[("object", 1.0)]),
            comp("m0", 0.02, &[("function", 1.0)]),
        ];
        let v = cfs_feature_vector(&circuit, &comps);
        assert_eq!(v.len(), 9);
        // object mass: 0.8/0.82; function mass: 0.02/0.82.
        assert!((v[1] - 0.8 / 0.82).abs() < 1e-12);
        assert!((v[3] - 0.02 / 0.82).abs() < 1e-12);
        assert_eq!(v[6], 0.8); // mean |dla| attention
        assert_eq!(v[7], 0.02); // mean |dla| mlp
        assert_eq!(v[8], 0.5); // causal fraction
    }

    #[test]
    fn summary_counts_and_dominance() {
        let circuit = circuit_with(vec![node("a0", NodeKind::AttnHead, 3, Some(0))], vec![]);
        let comps = vec![
            comp("a0", 0.8, &[("object", 1.0)]),
            comp("x", 0.01, &[("object", 1.0)]),
        ];
        let s = summarise(&circuit, &comps);
        assert_eq!(s.causal_count, 1);
        assert_eq!(s.marginal_count, 1);
        // Marginal components with profiles still enter the tally.
        assert_eq!(s.dominant_role.as_deref(), Some("object"));
        assert_eq!(s.dominant_share, Some(1.0));
    }
}
