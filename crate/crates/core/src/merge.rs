//! Merging per-document atlases into a corpus atlas: union of support rows
//! plus re-aggregation of every edge statistic.
//!
//! Inputs are processed in sorted atlas-id order, so the merge is independent
//! of argument order. Mass fields re-aggregate additively from the input edge
//! tables (exact), while support counts are recomputed as distinct counts
//! over the unioned support rows, which is what makes doc-id disambiguation
//! observable.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use crate::builder::{finalize_nodes, sort_support_rows, Atlas, EdgeRow, SupportRow};
use crate::builder::dominant_polarity;
use crate::canon::{EdgeId, NodeId, RelType};
use crate::error::{AtlasError, Result};

const MERGE_EPSILON: f64 = 1e-9;

/// Prefix each doc_id with `atlas_id::` for cross-atlas disambiguation.
/// Already-prefixed rows are left untouched, so the rewrite is idempotent.
pub fn disambiguate_doc_ids(rows: &mut [SupportRow], atlas_id: &str) {
    debug_assert!(!atlas_id.is_empty());
    let prefix = format!("{atlas_id}::");
    for row in rows.iter_mut() {
        if !row.doc_id.starts_with(&prefix) {
            row.doc_id = format!("{prefix}{}", row.doc_id);
        }
    }
}

#[derive(Debug)]
struct MergedEdge {
    src_id: NodeId,
    dst_id: NodeId,
    rel_type: RelType,
    score_sum: f64,
    score_max: f64,
    pol_mass_inc: f64,
    pol_mass_dec: f64,
    pol_mass_unk: f64,
}

/// Merge multiple atlases into one corpus atlas.
///
/// With `disambiguate` enabled (the default in the CLI), each support row's
/// doc_id is rewritten as `<atlas_id>::<doc_id>` using the row's recorded
/// atlas id (falling back to the pair's id when the row has none), so
/// same-named documents from different atlases count separately.
pub fn merge_atlases(inputs: &[(String, Atlas)], disambiguate: bool) -> Result<Atlas> {
    if inputs.is_empty() {
        return Err(AtlasError::InvalidArgument(
            "merge requires at least one atlas".into(),
        ));
    }
    {
        let mut seen = BTreeMap::new();
        for (id, _) in inputs {
            if seen.insert(id.as_str(), ()).is_some() {
                return Err(AtlasError::InvalidArgument(format!(
                    "duplicate atlas id {id:?} in merge inputs"
                )));
            }
        }
    }
    let mut order: Vec<&(String, Atlas)> = inputs.iter().collect();
    order.sort_by(|a, b| a.0.cmp(&b.0));

    // Union support rows, stamping atlas ids and optionally prefixing docs.
    let mut support: Vec<SupportRow> = Vec::new();
    for (pair_id, atlas) in &order {
        for row in atlas.support() {
            let mut row = row.clone();
            if row.atlas_id.is_empty() {
                row.atlas_id = pair_id.clone();
            }
            if disambiguate {
                let prefix = format!("{}::", row.atlas_id);
                if !row.doc_id.starts_with(&prefix) {
                    row.doc_id = format!("{prefix}{}", row.doc_id);
                }
            }
            support.push(row);
        }
    }

    // Re-aggregate edges: masses add, maxima take max, counts recount below.
    let mut merged: BTreeMap<EdgeId, MergedEdge> = BTreeMap::new();
    for (_, atlas) in &order {
        for e in atlas.edges() {
            match merged.entry(e.edge_id) {
                Entry::Vacant(v) => {
                    v.insert(MergedEdge {
                        src_id: e.src_id,
                        dst_id: e.dst_id,
                        rel_type: e.rel_type,
                        score_sum: e.score_sum,
                        score_max: e.score_max,
                        pol_mass_inc: e.pol_mass_inc,
                        pol_mass_dec: e.pol_mass_dec,
                        pol_mass_unk: e.pol_mass_unk,
                    });
                }
                Entry::Occupied(mut o) => {
                    let m = o.get_mut();
                    if (m.src_id, m.rel_type, m.dst_id) != (e.src_id, e.rel_type, e.dst_id) {
                        return Err(AtlasError::Integrity(format!(
                            "edge {} has conflicting endpoints across atlases (hash collision)",
                            e.edge_id
                        )));
                    }
                    m.score_sum += e.score_sum;
                    m.score_max = m.score_max.max(e.score_max);
                    m.pol_mass_inc += e.pol_mass_inc;
                    m.pol_mass_dec += e.pol_mass_dec;
                    m.pol_mass_unk += e.pol_mass_unk;
                }
            }
        }
    }

    // Distinct (doc, lcm) and doc counts per edge over the unioned rows,
    // folded in canonical order for reproducibility.
    sort_support_rows(&mut support);
    let mut lcm_sets: BTreeMap<EdgeId, BTreeMap<(&str, &str), ()>> = BTreeMap::new();
    let mut doc_sets: BTreeMap<EdgeId, BTreeMap<&str, ()>> = BTreeMap::new();
    for row in &support {
        lcm_sets
            .entry(row.edge_id)
            .or_default()
            .insert((row.doc_id.as_str(), row.lcm_instance_id.as_str()), ());
        doc_sets
            .entry(row.edge_id)
            .or_default()
            .insert(row.doc_id.as_str(), ());
    }

    let edges: Vec<EdgeRow> = merged
        .into_iter()
        .map(|(edge_id, m)| {
            let support_lcms = lcm_sets.get(&edge_id).map_or(0, |s| s.len() as u64);
            let support_docs = doc_sets.get(&edge_id).map_or(0, |s| s.len() as u64);
            let score_mean = if support_lcms > 0 {
                m.score_sum / support_lcms as f64
            } else {
                0.0
            };
            EdgeRow {
                edge_id,
                src_id: m.src_id,
                dst_id: m.dst_id,
                rel_type: m.rel_type,
                polarity: dominant_polarity(m.pol_mass_inc, m.pol_mass_dec, m.pol_mass_unk),
                support_lcms,
                support_docs,
                score_sum: m.score_sum,
                score_mean,
                score_max: m.score_max,
                pol_mass_inc: m.pol_mass_inc,
                pol_mass_dec: m.pol_mass_dec,
                pol_mass_unk: m.pol_mass_unk,
                controversy: crate::builder::controversy(
                    m.pol_mass_inc,
                    m.pol_mass_dec,
                    MERGE_EPSILON,
                ),
            }
        })
        .collect();

    // Nodes referenced by merged edges; first atlas (in sorted order) wins
    // the canonical label, examples union up to three.
    let mut node_meta: BTreeMap<NodeId, (String, Vec<String>)> = BTreeMap::new();
    for (_, atlas) in &order {
        for edge in atlas.edges() {
            for id in [edge.src_id, edge.dst_id] {
                let Some(node) = atlas.node(id) else { continue };
                let entry = node_meta
                    .entry(id)
                    .or_insert_with(|| (node.label_canon.clone(), Vec::new()));
                for example in &node.label_examples {
                    if entry.1.len() >= 3 {
                        break;
                    }
                    if !entry.1.iter().any(|e| e == example) {
                        entry.1.push(example.clone());
                    }
                }
            }
        }
    }
    let nodes = finalize_nodes(&edges, node_meta);

    let scc = crate::analytics::compute_scc_from_tables(&nodes, &edges, &support);
    let atlas_id = order
        .iter()
        .map(|(id, _)| id.as_str())
        .collect::<Vec<_>>()
        .join("+");
    Atlas::new(atlas_id, nodes, edges, support, Some(scc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{build_atlas, BuildConfig};
    use crate::canon::Polarity;
    use crate::ingest::{Lcm, RawEdge};

    fn lcm(doc: &str, id: &str, score: f64, edges: &[(&str, &str, &str)]) -> Lcm {
        Lcm {
            doc_id: doc.into(),
            lcm_instance_id: id.into(),
            focus: String::new(),
            edges: edges
                .iter()
                .map(|&(s, r, d)| RawEdge {
                    src: s.into(),
                    rel: r.into(),
                    dst: d.into(),
                })
                .collect(),
            score: Some(score),
            score_raw: None,
            coupling: None,
            radius: None,
            model_size: None,
        }
    }

    fn build(id: &str, lcms: &[Lcm]) -> Atlas {
        let cfg = BuildConfig {
            atlas_id: id.into(),
            ..BuildConfig::default()
        };
        build_atlas(lcms, &cfg, &mut Vec::new()).unwrap()
    }

    #[test]
    fn merge_of_one_is_identity_on_aggregates() {
        let atlas = build(
            "a1",
            &[
                lcm("d1", "m1", 0.5, &[("x", "increases", "y")]),
                lcm("d2", "m1", 0.25, &[("x", "increases", "y"), ("y", "reduces", "z")]),
            ],
        );
        let merged = merge_atlases(&[("a1".into(), atlas.clone())], true).unwrap();
        assert_eq!(merged.edges().len(), atlas.edges().len());
        for (m, e) in merged.edges().iter().zip(atlas.edges()) {
            assert_eq!(m.edge_id, e.edge_id);
            assert_eq!(m.support_lcms, e.support_lcms);
            assert_eq!(m.support_docs, e.support_docs);
            assert!((m.score_sum - e.score_sum).abs() < 1e-12);
            assert!((m.score_mean - e.score_mean).abs() < 1e-12);
            assert_eq!(m.polarity, e.polarity);
        }
        assert_eq!(merged.support().len(), atlas.support().len());
        // disambiguation prefixes the doc ids
        assert!(merged.support()[0].doc_id.starts_with("a1::"));
    }

    #[test]
    fn merge_adds_masses_and_recounts_support() {
        let a = build("a", &[lcm("d1", "m1", 1.0, &[("x", "causes", "y")])]);
        let b = build("b", &[lcm("d2", "m1", 2.0, &[("x", "causes", "y")])]);
        let merged = merge_atlases(&[("a".into(), a), ("b".into(), b)], true).unwrap();
        assert_eq!(merged.edges().len(), 1);
        let e = &merged.edges()[0];
        assert!((e.score_sum - 3.0).abs() < 1e-12);
        assert_eq!(e.support_docs, 2);
        assert_eq!(e.support_lcms, 2);
        assert!((e.score_max - 2.0).abs() < 1e-12);
    }

    #[test]
    fn doc_prefixing_controls_collision_counting() {
        let a = build("a", &[lcm("0001", "m1", 1.0, &[("x", "causes", "y")])]);
        let b = build("b", &[lcm("0001", "m1", 1.0, &[("x", "causes", "y")])]);

        let with = merge_atlases(&[("a".into(), a.clone()), ("b".into(), b.clone())], true).unwrap();
        assert_eq!(with.edges()[0].support_docs, 2);

        let without = merge_atlases(&[("a".into(), a), ("b".into(), b)], false).unwrap();
        assert_eq!(without.edges()[0].support_docs, 1);
        assert_eq!(without.edges()[0].support_lcms, 1);
    }

    #[test]
    fn disambiguate_rewrites_and_is_idempotent() {
        let mut rows = vec![SupportRow {
            edge_id: EdgeId(1),
            doc_id: "0001".into(),
            atlas_id: "wapo".into(),
            lcm_instance_id: "m1".into(),
            score: None,
            score_raw: None,
            coupling: None,
            year: None,
            method: None,
            sign: None,
        }];
        disambiguate_doc_ids(&mut rows, "wapo");
        assert_eq!(rows[0].doc_id, "wapo::0001");
        disambiguate_doc_ids(&mut rows, "wapo");
        assert_eq!(rows[0].doc_id, "wapo::0001");
    }

    #[test]
    fn merge_is_order_independent() {
        let a = build("a", &[lcm("d1", "m1", 0.7, &[("x", "causes", "y")])]);
        let b = build(
            "b",
            &[lcm("d2", "m1", 0.2, &[("x", "causes", "y"), ("y", "causes", "x")])],
        );
        let ab = merge_atlases(&[("a".into(), a.clone()), ("b".into(), b.clone())], true).unwrap();
        let ba = merge_atlases(&[("b".into(), b), ("a".into(), a)], true).unwrap();
        assert_eq!(ab.edges().len(), ba.edges().len());
        for (x, y) in ab.edges().iter().zip(ba.edges()) {
            assert_eq!(x, y);
        }
        assert_eq!(ab.support(), ba.support());
        assert_eq!(ab.nodes(), ba.nodes());
    }

    #[test]
    fn support_row_total_is_sum_of_inputs() {
        let a = build("a", &[lcm("d1", "m1", 1.0, &[("x", "causes", "y"), ("x", "causes", "y")])]);
        let b = build("b", &[lcm("d2", "m1", 1.0, &[("p", "causes", "q")])]);
        let n = a.support().len() + b.support().len();
        let merged = merge_atlases(&[("a".into(), a), ("b".into(), b)], true).unwrap();
        assert_eq!(merged.support().len(), n);
        for row in merged.support() {
            assert!(!row.atlas_id.is_empty());
        }
    }

    #[test]
    fn conflicting_edge_ids_are_fatal() {
        let a = build("a", &[lcm("d1", "m1", 1.0, &[("x", "causes", "y")])]);
        let mut b = build("b", &[lcm("d2", "m1", 1.0, &[("p", "causes", "q")])]);
        // forge a conflicting edge row carrying a's edge id
        let stolen_id = a.edges()[0].edge_id;
        let mut rows = b.edges().to_vec();
        rows[0].edge_id = stolen_id;
        b = Atlas::new(
            "b".into(),
            b.nodes().to_vec(),
            rows,
            Vec::new(),
            None,
        )
        .unwrap();
        let err = merge_atlases(&[("a".into(), a), ("b".into(), b)], true).unwrap_err();
        assert!(matches!(err, AtlasError::Integrity(_)));
    }

    #[test]
    fn duplicate_atlas_ids_rejected() {
        let a = build("a", &[lcm("d1", "m1", 1.0, &[("x", "causes", "y")])]);
        let err = merge_atlases(&[("a".into(), a.clone()), ("a".into(), a)], true).unwrap_err();
        assert!(matches!(err, AtlasError::InvalidArgument(_)));
        assert!(merge_atlases(&[], true).is_err());
    }

    #[test]
    fn merged_polarity_and_controversy_recomputed() {
        let a = build("a", &[lcm("d1", "m1", 1.0, &[("x", "increases", "y")])]);
        let b = build("b", &[lcm("d2", "m1", 3.0, &[("x", "not increases", "y")])]);
        let merged = merge_atlases(&[("a".into(), a), ("b".into(), b)], true).unwrap();
        let e = &merged.edges()[0];
        assert_eq!(e.polarity, Polarity::Dec);
        assert!((e.pol_mass_inc - 1.0).abs() < 1e-12);
        assert!((e.pol_mass_dec - 3.0).abs() < 1e-12);
        assert!((e.controversy - 0.25).abs() < 1e-6);
    }
}
