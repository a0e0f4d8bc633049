//! Precision and recall at path-length thresholds, per class and macro-averaged.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::assign::{assign_nodes_object, assign_nodes_proposal, assign_nodes_region};
use super::graph::{GridGraph, GridParams, Scene};
use super::labels::{EntityKind, LabeledEntity, Mappings};
use super::metrics::mean_over;
use super::EvalError;
use crate::localization::Proposal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub grid: GridParams,
    pub object_thresholds: Vec<f64>,
    pub region_thresholds: Vec<f64>,
    /// Ring captured around object labels (meters).
    pub object_inflation: f64,
    /// Inflation for proposals containing no node; defaults to the grid resolution.
    pub proposal_inflation: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            grid: GridParams::default(),
            object_thresholds: vec![0.1, 0.5, 1.0, 2.0],
            region_thresholds: vec![0.5, 1.0, 2.0, 3.0],
            object_inflation: 1.0,
            proposal_inflation: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidParameter(m));
        if !(self.grid.resolution > 0.0 && self.grid.resolution.is_finite()) {
            return bad(format!("grid resolution must be positive, got {}", self.grid.resolution));
        }
        if self.grid.inside.k_neighbors == 0 {
            return bad("k_neighbors must be at least 1".into());
        }
        for (name, t) in [("object_thresholds", &self.object_thresholds), ("region_thresholds", &self.region_thresholds)] {
            if t.is_empty() || t.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return bad(format!("{name} must be non-empty, finite and non-negative"));
            }
        }
        if !(self.object_inflation >= 0.0 && self.object_inflation.is_finite()) {
            return bad("object_inflation must be non-negative".into());
        }
        if let Some(d) = self.proposal_inflation {
            if !(d > 0.0 && d.is_finite()) {
                return bad("proposal_inflation must be positive".into());
            }
        }
        Ok(())
    }

    pub fn thresholds(&self, kind: EntityKind) -> &[f64] {
        match kind {
            EntityKind::Object => &self.object_thresholds,
            EntityKind::Region => &self.region_thresholds,
        }
    }
}

/// Raw per-class distances accumulated over scenes.
#[derive(Debug, Clone, Default, PartialEq)]
struct Tally {
    p2e: Vec<f64>,
    e2p: Vec<f64>,
    skipped_proposals: usize,
    skipped_instances: usize,
}

impl Tally {
    fn merge(&mut self, other: Tally) {
        self.p2e.extend(other.p2e);
        self.e2p.extend(other.e2p);
        self.skipped_proposals += other.skipped_proposals;
        self.skipped_instances += other.skipped_instances;
    }
}

/// Accumulates P2E/E2P values scene by scene and produces the report.
///
/// Within a scene, only classes with at least one labeled instance are
/// evaluated; their proposals are pooled over every tag mapped to the class.
#[derive(Debug, Clone, Default)]
pub struct Evaluator {
    tallies: BTreeMap<(EntityKind, String), Tally>,
    scenes: usize,
    unmapped_instances: usize,
}

impl Evaluator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Evaluates one scene. `localize` returns the proposals of a tag.
    pub fn add_scene(
        &mut self,
        scene: &Scene,
        graph: &GridGraph,
        labels: &[LabeledEntity],
        mappings: &Mappings,
        localize: &(dyn Fn(&str) -> Vec<Proposal> + Sync),
        config: &EvalConfig,
    ) {
        let mut by_class: BTreeMap<(EntityKind, String), Vec<&LabeledEntity>> = BTreeMap::new();
        for e in labels {
            if mappings.for_kind(e.kind).tags(&e.class).is_some() {
                by_class.entry((e.kind, e.class.clone())).or_default().push(e);
            } else {
                self.unmapped_instances += 1;
            }
        }
        let mut tags: Vec<&str> = by_class
            .keys()
            .flat_map(|(kind, class)| mappings.for_kind(*kind).tags(class).unwrap_or_default())
            .map(String::as_str)
            .collect();
        tags.sort_unstable();
        tags.dedup();
        let proposals: HashMap<&str, Vec<Proposal>> = tags.par_iter().map(|t| (*t, localize(t))).collect();
        let proposal_delta = config.proposal_inflation.unwrap_or(graph.resolution());

        let results: Vec<((EntityKind, String), Tally)> = by_class
            .into_par_iter()
            .map(|((kind, class), instances)| {
                let pooled: Vec<&Proposal> = mappings
                    .for_kind(kind)
                    .tags(&class)
                    .unwrap_or_default()
                    .iter()
                    .flat_map(|t| proposals.get(t.as_str()).into_iter().flatten())
                    .collect();
                let entity_sets: Vec<Vec<u32>> = instances
                    .iter()
                    .map(|e| match kind {
                        EntityKind::Object => assign_nodes_object(graph, scene, &e.aabb, config.object_inflation),
                        EntityKind::Region => assign_nodes_region(graph, &e.aabb),
                    })
                    .collect();
                let proposal_sets: Vec<Vec<u32>> =
                    pooled.iter().map(|p| assign_nodes_proposal(graph, scene, &p.aabb, proposal_delta)).collect();
                ((kind, class), class_tally(graph, &entity_sets, &proposal_sets))
            })
            .collect();
        for (key, tally) in results {
            self.tallies.entry(key).or_default().merge(tally);
        }
        self.scenes += 1;
    }

    pub fn report(&self, config: &EvalConfig) -> EvalReport {
        let kind_report = |kind: EntityKind| {
            let thresholds = config.thresholds(kind).to_vec();
            let classes: Vec<ClassReport> = self
                .tallies
                .iter()
                .filter(|((k, _), _)| *k == kind)
                .map(|((_, class), t)| ClassReport::new(class, t, &thresholds))
                .collect();
            let macro_avg = |f: &dyn Fn(&ClassReport) -> &Vec<Option<f64>>| -> Vec<Option<f64>> {
                (0..thresholds.len())
                    .map(|i| {
                        let vals: Vec<f64> = classes.iter().filter_map(|c| f(c)[i]).collect();
                        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                    })
                    .collect()
            };
            KindReport {
                macro_precision: macro_avg(&|c| &c.precision),
                macro_recall: macro_avg(&|c| &c.recall),
                thresholds,
                classes,
            }
        };
        EvalReport {
            scenes: self.scenes,
            unmapped_instances: self.unmapped_instances,
            objects: kind_report(EntityKind::Object),
            regions: kind_report(EntityKind::Region),
        }
    }
}

/// Distances for one class in one scene. Items without nodes are skipped;
/// when no instance has nodes, P2E is undefined and every proposal is skipped.
fn class_tally(graph: &GridGraph, entity_sets: &[Vec<u32>], proposal_sets: &[Vec<u32>]) -> Tally {
    let mut tally = Tally::default();
    let entities: Vec<&Vec<u32>> = entity_sets.iter().filter(|s| !s.is_empty()).collect();
    let props: Vec<&Vec<u32>> = proposal_sets.iter().filter(|s| !s.is_empty()).collect();
    tally.skipped_instances = entity_sets.len() - entities.len();
    tally.skipped_proposals = proposal_sets.len() - props.len();
    if entities.is_empty() {
        tally.skipped_proposals = proposal_sets.len();
        return tally;
    }
    let entity_union: Vec<u32> = entities.iter().flat_map(|s| s.iter().copied()).collect();
    let to_entities = graph.distances_from(&entity_union);
    tally.p2e = props.iter().map(|s| mean_over(&to_entities, s)).collect();
    tally.e2p = if props.is_empty() {
        vec![f64::INFINITY; entities.len()]
    } else {
        let proposal_union: Vec<u32> = props.iter().flat_map(|s| s.iter().copied()).collect();
        let to_proposals = graph.distances_from(&proposal_union);
        entities.iter().map(|s| mean_over(&to_proposals, s)).collect()
    };
    tally
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub class: String,
    /// Proposals pooled over the class's tags, skipped ones included.
    pub proposals: usize,
    pub skipped_proposals: usize,
    pub instances: usize,
    pub skipped_instances: usize,
    /// Per threshold: proposals with P2E within the threshold.
    pub relevant: Vec<usize>,
    /// Per threshold: instances with E2P within the threshold.
    pub recalled: Vec<usize>,
    /// `None` when the class has no evaluable proposal.
    pub precision: Vec<Option<f64>>,
    /// `None` when the class has no evaluable instance.
    pub recall: Vec<Option<f64>>,
}

impl ClassReport {
    fn new(class: &str, t: &Tally, thresholds: &[f64]) -> Self {
        let within = |values: &[f64], tau: f64| values.iter().filter(|v| **v <= tau).count();
        let ratio = |n: usize, d: usize| (d > 0).then(|| n as f64 / d as f64);
        let relevant: Vec<usize> = thresholds.iter().map(|&tau| within(&t.p2e, tau)).collect();
        let recalled: Vec<usize> = thresholds.iter().map(|&tau| within(&t.e2p, tau)).collect();
        Self {
            class: class.to_string(),
            proposals: t.p2e.len() + t.skipped_proposals,
            skipped_proposals: t.skipped_proposals,
            instances: t.e2p.len() + t.skipped_instances,
            skipped_instances: t.skipped_instances,
            precision: relevant.iter().map(|&n| ratio(n, t.p2e.len())).collect(),
            recall: recalled.iter().map(|&n| ratio(n, t.e2p.len())).collect(),
            relevant,
            recalled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KindReport {
    pub thresholds: Vec<f64>,
    pub classes: Vec<ClassReport>,
    /// Mean over classes with a defined value.
    pub macro_precision: Vec<Option<f64>>,
    pub macro_recall: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub scenes: usize,
    /// Label instances whose class has no tag mapping; not evaluated.
    pub unmapped_instances: usize,
    pub objects: KindReport,
    pub regions: KindReport,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl EvalReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Long-format CSV: one row per (kind, class, threshold) plus a
    /// `(macro)` row per (kind, threshold).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "kind,class,threshold,precision,recall,proposals,skipped_proposals,instances,skipped_instances\n",
        );
        for (kind, r) in [(EntityKind::Object, &self.objects), (EntityKind::Region, &self.regions)] {
            for c in &r.classes {
                for (i, tau) in r.thresholds.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{}",
                        kind.as_str(),
                        csv_field(&c.class),
                        tau,
                        cell(c.precision[i]),
                        cell(c.recall[i]),
                        c.proposals,
                        c.skipped_proposals,
                        c.instances,
                        c.skipped_instances
                    );
                }
            }
            for (i, tau) in r.thresholds.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},(macro),{},{},{},,,,",
                    kind.as_str(),
                    tau,
                    cell(r.macro_precision[i]),
                    cell(r.macro_recall[i])
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tally(p2e: &[f64], e2p: &[f64]) -> Tally {
        Tally { p2e: p2e.to_vec(), e2p: e2p.to_vec(), ..Default::default() }
    }

    #[test]
    fn precision_example() {
        let r = ClassReport::new("chair", &tally(&[0.5, 1.5, 0.8], &[0.2]), &[1.0]);
        assert!((r.precision[0].unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.recall[0], Some(1.0));
    }

    #[test]
    fn no_proposals_gives_zero_recall_and_undefined_precision() {
        let r = ClassReport::new("sofa", &tally(&[], &[f64::INFINITY, f64::INFINITY]), &[0.5, 3.0]);
        assert_eq!(r.precision, vec![None, None]);
        assert_eq!(r.recall, vec![Some(0.0), Some(0.0)]);
    }

    #[test]
    fn skipped_items_leave_denominators() {
        let t = Tally { p2e: vec![0.1], e2p: vec![0.1], skipped_proposals: 3, skipped_instances: 1 };
        let r = ClassReport::new("bed", &t, &[0.5]);
        assert_eq!(r.precision[0], Some(1.0));
        assert_eq!(r.proposals, 4);
        assert_eq!(r.instances, 2);
    }

    #[test]
    fn csv_has_macro_rows() {
        let mut ev = Evaluator::new();
        ev.tallies.insert((EntityKind::Object, "a, b".into()), tally(&[0.2], &[0.3]));
        let csv = ev.report(&EvalConfig::default()).to_csv();
        assert!(csv.contains("object,\"a, b\",0.1,0.000000,0.000000,1,0,1,0"));
        assert!(csv.contains("object,(macro),2,1.000000,1.000000,,,,"));
        assert!(csv.contains("region,(macro),0.5,,,,,,"));
    }
}
