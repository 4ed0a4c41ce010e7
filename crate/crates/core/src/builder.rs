//! Compilation of scored LCMs (or claim corpora) into the nodes / edges /
//! edge_support tables with all aggregate statistics.
//!
//! The builder is deterministic: inputs are sorted by
//! `(doc_id, lcm_instance_id)` before aggregation, table rows are emitted in
//! canonical order (nodes by node_id, edges by edge_id, support rows by
//! doc/lcm/insertion), and all aggregates fold in that fixed order. Permuting
//! the input list therefore yields byte-identical tables.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analytics::{compute_scc_from_tables, SccRow};
use crate::canon::{canon_label, edge_key, hash64, EdgeId, NodeId, Polarity, RelLexicon, RelType};
use crate::error::{AtlasError, Result};
use crate::ingest::{self, ClaimRow, Lcm};

/// One canonical concept and its degree stats.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRow {
    pub node_id: NodeId,
    pub label_canon: String,
    /// Up to three distinct raw surface forms, first-seen order.
    pub label_examples: Vec<String>,
    pub deg_in: u64,
    pub deg_out: u64,
}

/// One canonical causal edge with aggregated evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub edge_id: EdgeId,
    pub src_id: NodeId,
    pub dst_id: NodeId,
    pub rel_type: RelType,
    /// Dominant polarity: argmax of the three mass fields, ties go to unk.
    pub polarity: Polarity,
    pub support_lcms: u64,
    pub support_docs: u64,
    pub score_sum: f64,
    pub score_mean: f64,
    pub score_max: f64,
    pub pol_mass_inc: f64,
    pub pol_mass_dec: f64,
    pub pol_mass_unk: f64,
    pub controversy: f64,
}

/// One provenance row linking an edge to a supporting (document, LCM) pair.
///
/// `year`, `method` and `sign` are extension columns populated only by the
/// claims-corpus ingest; they stay null for LCM-built atlases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportRow {
    pub edge_id: EdgeId,
    pub doc_id: String,
    pub atlas_id: String,
    pub lcm_instance_id: String,
    pub score: Option<f64>,
    pub score_raw: Option<f64>,
    pub coupling: Option<f64>,
    pub year: Option<i64>,
    pub method: Option<String>,
    pub sign: Option<String>,
}

/// Compilation parameters.
#[derive(Debug, Clone)]
pub struct BuildConfig {
    /// Minimum edge count per LCM; models below it are skipped entirely.
    pub tau: usize,
    /// When present, only these relation types are aggregated.
    pub rel_whitelist: Option<BTreeSet<RelType>>,
    /// Relation types excluded from aggregation.
    pub rel_blacklist: BTreeSet<RelType>,
    /// Weight used when an LCM carries neither score nor score_raw.
    pub default_weight: f64,
    /// Controversy denominator epsilon.
    pub epsilon: f64,
    pub atlas_id: String,
    pub lexicon: RelLexicon,
    /// Skip LCMs whose score (or score_raw fallback) is below this bound.
    pub min_score: Option<f64>,
    /// Skip LCMs whose radius exceeds this bound.
    pub max_radius: Option<i64>,
    /// Skip LCMs whose model_size exceeds this bound.
    pub max_model_size: Option<i64>,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            tau: 1,
            rel_whitelist: None,
            rel_blacklist: BTreeSet::new(),
            default_weight: 1.0,
            epsilon: 1e-9,
            atlas_id: "atlas".to_string(),
            lexicon: RelLexicon::builtin(),
            min_score: None,
            max_radius: None,
            max_model_size: None,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(whitelist) = &self.rel_whitelist {
            if whitelist.intersection(&self.rel_blacklist).next().is_some() {
                return Err(AtlasError::InvalidArgument(
                    "relation whitelist and blacklist overlap".into(),
                ));
            }
        }
        if self.default_weight < 0.0 {
            return Err(AtlasError::InvalidArgument(
                "default_weight must be non-negative".into(),
            ));
        }
        if self.epsilon <= 0.0 {
            return Err(AtlasError::InvalidArgument("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Controversy indicator: `min(inc, dec) / (inc + dec + eps)`.
///
/// 0 when only one direction is supported, approaches 0.5 when inc and dec
/// are balanced.
pub fn controversy(m_inc: f64, m_dec: f64, eps: f64) -> f64 {
    m_inc.min(m_dec) / (m_inc + m_dec + eps)
}

/// Running aggregate for one canonical edge.
#[derive(Debug, Clone)]
pub struct EdgeAccumulator {
    pub src_id: NodeId,
    pub dst_id: NodeId,
    pub rel_type: RelType,
    score_sum: f64,
    score_max: f64,
    pol_mass_inc: f64,
    pol_mass_dec: f64,
    pol_mass_unk: f64,
    lcms: BTreeSet<(String, String)>,
    docs: BTreeSet<String>,
}

impl EdgeAccumulator {
    pub fn new(src_id: NodeId, dst_id: NodeId, rel_type: RelType) -> Self {
        EdgeAccumulator {
            src_id,
            dst_id,
            rel_type,
            score_sum: 0.0,
            score_max: 0.0,
            pol_mass_inc: 0.0,
            pol_mass_dec: 0.0,
            pol_mass_unk: 0.0,
            lcms: BTreeSet::new(),
            docs: BTreeSet::new(),
        }
    }

    /// Fold one support event into the aggregate.
    pub fn accumulate(
        &mut self,
        weight: f64,
        polarity: Polarity,
        doc_id: &str,
        lcm_instance_id: &str,
    ) -> Result<()> {
        if weight < 0.0 {
            return Err(AtlasError::InvalidArgument(format!(
                "negative support weight {weight}"
            )));
        }
        self.score_sum += weight;
        self.score_max = self.score_max.max(weight);
        match polarity {
            Polarity::Inc => self.pol_mass_inc += weight,
            Polarity::Dec => self.pol_mass_dec += weight,
            Polarity::Unk => self.pol_mass_unk += weight,
        }
        self.lcms
            .insert((doc_id.to_string(), lcm_instance_id.to_string()));
        self.docs.insert(doc_id.to_string());
        Ok(())
    }

    pub fn support_lcms(&self) -> u64 {
        self.lcms.len() as u64
    }

    pub fn support_docs(&self) -> u64 {
        self.docs.len() as u64
    }

    pub fn score_sum(&self) -> f64 {
        self.score_sum
    }

    pub fn score_max(&self) -> f64 {
        self.score_max
    }

    pub fn finish(&self, edge_id: EdgeId, eps: f64) -> EdgeRow {
        let support_lcms = self.support_lcms();
        let score_mean = if support_lcms > 0 {
            self.score_sum / support_lcms as f64
        } else {
            0.0
        };
        EdgeRow {
            edge_id,
            src_id: self.src_id,
            dst_id: self.dst_id,
            rel_type: self.rel_type,
            polarity: dominant_polarity(self.pol_mass_inc, self.pol_mass_dec, self.pol_mass_unk),
            support_lcms,
            support_docs: self.support_docs(),
            score_sum: self.score_sum,
            score_mean,
            score_max: self.score_max,
            pol_mass_inc: self.pol_mass_inc,
            pol_mass_dec: self.pol_mass_dec,
            pol_mass_unk: self.pol_mass_unk,
            controversy: controversy(self.pol_mass_inc, self.pol_mass_dec, eps),
        }
    }
}

/// Argmax of the three polarity masses; any tie at the maximum goes to unk.
pub fn dominant_polarity(inc: f64, dec: f64, unk: f64) -> Polarity {
    let max = inc.max(dec).max(unk);
    let winners = [(inc, Polarity::Inc), (dec, Polarity::Dec), (unk, Polarity::Unk)];
    let mut at_max = winners.iter().filter(|(m, _)| *m == max);
    match (at_max.next(), at_max.next()) {
        (Some(&(_, p)), None) => p,
        _ => Polarity::Unk,
    }
}

/// Tracks canonical keys per id and aborts the build on a hash collision.
#[derive(Debug, Default)]
struct CollisionGuard {
    node_keys: BTreeMap<u64, String>,
    edge_keys: BTreeMap<u64, String>,
}

impl CollisionGuard {
    fn check_node(&mut self, id: NodeId, label_canon: &str) -> Result<()> {
        match self.node_keys.entry(id.0) {
            Entry::Vacant(v) => {
                v.insert(label_canon.to_string());
                Ok(())
            }
            Entry::Occupied(o) if o.get() == label_canon => Ok(()),
            Entry::Occupied(o) => Err(AtlasError::Collision {
                key: label_canon.to_string(),
                other: o.get().clone(),
                id: id.0,
            }),
        }
    }

    fn check_edge(&mut self, id: EdgeId, key: String) -> Result<()> {
        match self.edge_keys.entry(id.0) {
            Entry::Vacant(v) => {
                v.insert(key);
                Ok(())
            }
            Entry::Occupied(o) if *o.get() == key => Ok(()),
            Entry::Occupied(o) => Err(AtlasError::Collision {
                key,
                other: o.get().clone(),
                id: id.0,
            }),
        }
    }
}

#[derive(Debug, Clone)]
struct NodeEntry {
    label_canon: String,
    examples: Vec<String>,
}

/// Shared accumulation state for both LCM and claims compilation.
#[derive(Debug, Default)]
struct TableBuilder {
    nodes: BTreeMap<NodeId, NodeEntry>,
    edges: BTreeMap<EdgeId, EdgeAccumulator>,
    support: Vec<SupportRow>,
    guard: CollisionGuard,
}

impl TableBuilder {
    fn register_node(&mut self, label_canon: &str, surface: &str) -> Result<NodeId> {
        let id = NodeId(hash64(label_canon));
        self.guard.check_node(id, label_canon)?;
        let entry = self.nodes.entry(id).or_insert_with(|| NodeEntry {
            label_canon: label_canon.to_string(),
            examples: Vec::new(),
        });
        if entry.examples.len() < 3 && !entry.examples.iter().any(|e| e == surface) {
            entry.examples.push(surface.to_string());
        }
        Ok(id)
    }

    fn edge_accumulator(
        &mut self,
        src_id: NodeId,
        rel: RelType,
        dst_id: NodeId,
    ) -> Result<(EdgeId, &mut EdgeAccumulator)> {
        let id = edge_key(src_id, rel, dst_id);
        self.guard
            .check_edge(id, format!("{}|{}|{}", src_id.0, rel.name(), dst_id.0))?;
        let acc = self
            .edges
            .entry(id)
            .or_insert_with(|| EdgeAccumulator::new(src_id, dst_id, rel));
        Ok((id, acc))
    }

    fn finish(self, cfg: &BuildConfig) -> Result<Atlas> {
        let edges: Vec<EdgeRow> = self
            .edges
            .iter()
            .map(|(&id, acc)| acc.finish(id, cfg.epsilon))
            .collect();
        let node_meta = self
            .nodes
            .into_iter()
            .map(|(id, e)| (id, (e.label_canon, e.examples)))
            .collect();
        let nodes = finalize_nodes(&edges, node_meta);
        let mut support = self.support;
        sort_support_rows(&mut support);
        let scc = compute_scc_from_tables(&nodes, &edges, &support);
        Atlas::new(cfg.atlas_id.clone(), nodes, edges, support, Some(scc))
    }
}

/// Canonical persisted order for support rows.
pub(crate) fn sort_support_rows(rows: &mut [SupportRow]) {
    rows.sort_by(|a, b| {
        (&a.doc_id, &a.lcm_instance_id, &a.atlas_id)
            .cmp(&(&b.doc_id, &b.lcm_instance_id, &b.atlas_id))
    });
}

/// Materialize the nodes table with degree stats computed from the canonical
/// edges. Nodes referenced by zero edges (possible after relation filtering)
/// are retained with degree 0.
pub fn finalize_nodes(
    edges: &[EdgeRow],
    node_meta: BTreeMap<NodeId, (String, Vec<String>)>,
) -> Vec<NodeRow> {
    let mut deg_in: BTreeMap<NodeId, u64> = BTreeMap::new();
    let mut deg_out: BTreeMap<NodeId, u64> = BTreeMap::new();
    for edge in edges {
        *deg_out.entry(edge.src_id).or_default() += 1;
        *deg_in.entry(edge.dst_id).or_default() += 1;
    }
    node_meta
        .into_iter()
        .map(|(id, (label_canon, label_examples))| NodeRow {
            node_id: id,
            label_canon,
            label_examples,
            deg_in: deg_in.get(&id).copied().unwrap_or(0),
            deg_out: deg_out.get(&id).copied().unwrap_or(0),
        })
        .collect()
}

fn lcm_passes_filters(lcm: &Lcm, cfg: &BuildConfig) -> bool {
    if lcm.edges.len() < cfg.tau {
        return false;
    }
    if let Some(min) = cfg.min_score {
        if let Some(score) = lcm.score.or(lcm.score_raw) {
            if score < min {
                return false;
            }
        }
    }
    if let (Some(max), Some(radius)) = (cfg.max_radius, lcm.radius) {
        if radius > max {
            return false;
        }
    }
    if let (Some(max), Some(size)) = (cfg.max_model_size, lcm.model_size) {
        if size > max {
            return false;
        }
    }
    true
}

fn rel_admitted(rel: RelType, cfg: &BuildConfig) -> bool {
    if let Some(whitelist) = &cfg.rel_whitelist {
        if !whitelist.contains(&rel) {
            return false;
        }
    }
    !cfg.rel_blacklist.contains(&rel)
}

/// Compile parsed, score-attached LCMs into an atlas.
///
/// Weight selection per LCM: score when present, else score_raw, else the
/// configured default. An LCM containing the same canonical edge k times
/// contributes k·w to score_sum but one (doc, lcm) pair to support_lcms.
pub fn build_atlas(lcms: &[Lcm], cfg: &BuildConfig, warnings: &mut Vec<String>) -> Result<Atlas> {
    cfg.validate()?;
    let mut order: Vec<&Lcm> = lcms.iter().collect();
    order.sort_by(|a, b| {
        (&a.doc_id, &a.lcm_instance_id).cmp(&(&b.doc_id, &b.lcm_instance_id))
    });

    let mut tables = TableBuilder::default();
    for lcm in order {
        if !lcm_passes_filters(lcm, cfg) {
            continue;
        }
        let weight = lcm.score.or(lcm.score_raw).unwrap_or(cfg.default_weight);
        for raw in &lcm.edges {
            let (src_canon, dst_canon) = match (canon_label(&raw.src), canon_label(&raw.dst)) {
                (Ok(s), Ok(d)) => (s, d),
                _ => {
                    warnings.push(format!(
                        "{}/{}: edge {:?} -> {:?} dropped, endpoint empty after canonicalization",
                        lcm.doc_id, lcm.lcm_instance_id, raw.src, raw.dst
                    ));
                    continue;
                }
            };
            let src_id = tables.register_node(&src_canon, &raw.src)?;
            let dst_id = tables.register_node(&dst_canon, &raw.dst)?;
            let (rel, polarity) = cfg.lexicon.classify(&raw.rel);
            if !rel_admitted(rel, cfg) {
                continue;
            }
            let (edge_id, acc) = tables.edge_accumulator(src_id, rel, dst_id)?;
            acc.accumulate(weight, polarity, &lcm.doc_id, &lcm.lcm_instance_id)?;
            tables.support.push(SupportRow {
                edge_id,
                doc_id: lcm.doc_id.clone(),
                atlas_id: cfg.atlas_id.clone(),
                lcm_instance_id: lcm.lcm_instance_id.clone(),
                score: lcm.score,
                score_raw: lcm.score_raw,
                coupling: lcm.coupling,
                year: None,
                method: None,
                sign: None,
            });
        }
    }
    tables.finish(cfg)
}

/// Scan, parse and compile a document-runs root directory in one step.
pub fn build_from_runs_root(
    root: &Path,
    cfg: &BuildConfig,
    warnings: &mut Vec<String>,
) -> Result<Atlas> {
    let runs = ingest::scan_runs_root(root, warnings)?;
    let mut lcms = Vec::new();
    for run in &runs {
        lcms.extend(ingest::load_run(run, warnings)?);
    }
    build_atlas(&lcms, cfg, warnings)
}

/// Compile a pre-extracted claims corpus into the same schema.
///
/// Every claim becomes one support event with relation INFLUENCES, weight 1.0
/// and unknown polarity; the supporting pseudo-model id is `claim:<ordinal>`.
/// Document id, year, method and sign are carried into the support row.
pub fn build_from_claims(
    claims: &[ClaimRow],
    cfg: &BuildConfig,
    warnings: &mut Vec<String>,
) -> Result<Atlas> {
    cfg.validate()?;
    let mut tables = TableBuilder::default();
    for (ordinal, claim) in claims.iter().enumerate() {
        let (cause, effect) = match (canon_label(&claim.cause), canon_label(&claim.effect)) {
            (Ok(c), Ok(e)) => (c, e),
            _ => {
                warnings.push(format!(
                    "claim {ordinal}: {:?} -> {:?} dropped, endpoint empty after canonicalization",
                    claim.cause, claim.effect
                ));
                continue;
            }
        };
        let src_id = tables.register_node(&cause, &claim.cause)?;
        let dst_id = tables.register_node(&effect, &claim.effect)?;
        let rel = RelType::Influences;
        if !rel_admitted(rel, cfg) {
            continue;
        }
        let lcm_instance_id = format!("claim:{ordinal}");
        let (edge_id, acc) = tables.edge_accumulator(src_id, rel, dst_id)?;
        acc.accumulate(1.0, Polarity::Unk, &claim.doc_id, &lcm_instance_id)?;
        tables.support.push(SupportRow {
            edge_id,
            doc_id: claim.doc_id.clone(),
            atlas_id: cfg.atlas_id.clone(),
            lcm_instance_id,
            score: None,
            score_raw: None,
            coupling: None,
            year: claim.year,
            method: claim.method.clone(),
            sign: claim.sign.clone(),
        });
    }
    tables.finish(cfg)
}

/// The compiled causal database: three core tables plus the optional SCC
/// table, with label and adjacency indices. Immutable once built.
#[derive(Debug, Clone)]
pub struct Atlas {
    pub atlas_id: String,
    nodes: Vec<NodeRow>,
    edges: Vec<EdgeRow>,
    support: Vec<SupportRow>,
    scc: Option<Vec<SccRow>>,
    label_index: BTreeMap<String, NodeId>,
    node_pos: BTreeMap<NodeId, usize>,
    edge_pos: BTreeMap<EdgeId, usize>,
    out_index: BTreeMap<NodeId, Vec<usize>>,
    in_index: BTreeMap<NodeId, Vec<usize>>,
    support_index: BTreeMap<EdgeId, Vec<usize>>,
}

impl Atlas {
    /// Assemble an atlas from its tables, validating referential integrity
    /// and rebuilding all indices. Tables are re-sorted into canonical order.
    pub fn new(
        atlas_id: String,
        mut nodes: Vec<NodeRow>,
        mut edges: Vec<EdgeRow>,
        mut support: Vec<SupportRow>,
        scc: Option<Vec<SccRow>>,
    ) -> Result<Atlas> {
        nodes.sort_by_key(|n| n.node_id);
        edges.sort_by_key(|e| e.edge_id);
        sort_support_rows(&mut support);

        let mut node_pos = BTreeMap::new();
        let mut label_index = BTreeMap::new();
        for (i, node) in nodes.iter().enumerate() {
            if node_pos.insert(node.node_id, i).is_some() {
                return Err(AtlasError::Integrity(format!(
                    "duplicate node_id {}",
                    node.node_id
                )));
            }
            label_index.insert(node.label_canon.clone(), node.node_id);
        }
        let mut edge_pos = BTreeMap::new();
        let mut out_index: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        let mut in_index: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        for (i, edge) in edges.iter().enumerate() {
            if edge_pos.insert(edge.edge_id, i).is_some() {
                return Err(AtlasError::Integrity(format!(
                    "duplicate edge_id {}",
                    edge.edge_id
                )));
            }
            for endpoint in [edge.src_id, edge.dst_id] {
                if !node_pos.contains_key(&endpoint) {
                    return Err(AtlasError::Integrity(format!(
                        "edge {} references unknown node {}",
                        edge.edge_id, endpoint
                    )));
                }
            }
            out_index.entry(edge.src_id).or_default().push(i);
            in_index.entry(edge.dst_id).or_default().push(i);
        }
        let mut support_index: BTreeMap<EdgeId, Vec<usize>> = BTreeMap::new();
        for (i, row) in support.iter().enumerate() {
            if !edge_pos.contains_key(&row.edge_id) {
                return Err(AtlasError::Integrity(format!(
                    "support row references unknown edge {}",
                    row.edge_id
                )));
            }
            support_index.entry(row.edge_id).or_default().push(i);
        }
        Ok(Atlas {
            atlas_id,
            nodes,
            edges,
            support,
            scc,
            label_index,
            node_pos,
            edge_pos,
            out_index,
            in_index,
            support_index,
        })
    }

    pub fn nodes(&self) -> &[NodeRow] {
        &self.nodes
    }

    pub fn edges(&self) -> &[EdgeRow] {
        &self.edges
    }

    pub fn support(&self) -> &[SupportRow] {
        &self.support
    }

    pub fn scc(&self) -> Option<&[SccRow]> {
        self.scc.as_deref()
    }

    pub fn set_scc(&mut self, scc: Option<Vec<SccRow>>) {
        self.scc = scc;
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeRow> {
        self.node_pos.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn node_by_label(&self, label_canon: &str) -> Option<&NodeRow> {
        self.label_index
            .get(label_canon)
            .and_then(|&id| self.node(id))
    }

    pub fn edge(&self, id: EdgeId) -> Option<&EdgeRow> {
        self.edge_pos.get(&id).map(|&i| &self.edges[i])
    }

    /// Outgoing edges of a node, as indices into `edges()`.
    pub fn out_edges(&self, id: NodeId) -> &[usize] {
        self.out_index.get(&id).map_or(&[], Vec::as_slice)
    }

    /// Incoming edges of a node, as indices into `edges()`.
    pub fn in_edges(&self, id: NodeId) -> &[usize] {
        self.in_index.get(&id).map_or(&[], Vec::as_slice)
    }

    /// Support rows of an edge, as indices into `support()`.
    pub fn support_rows(&self, id: EdgeId) -> &[usize] {
        self.support_index.get(&id).map_or(&[], Vec::as_slice)
    }

    pub fn label_of(&self, id: NodeId) -> &str {
        self.node(id).map_or("", |n| n.label_canon.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::RawEdge;

    fn lcm(doc: &str, id: &str, score: Option<f64>, edges: &[(&str, &str, &str)]) -> Lcm {
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
            score,
            score_raw: None,
            coupling: None,
            radius: None,
            model_size: None,
        }
    }

    fn build(lcms: &[Lcm], cfg: &BuildConfig) -> Atlas {
        let mut w = Vec::new();
        build_atlas(lcms, cfg, &mut w).unwrap()
    }

    #[test]
    fn repeated_edge_in_one_lcm_accumulates_mass_once_per_weight() {
        let m = lcm(
            "d1",
            "m1",
            Some(0.5),
            &[("A", "increases", "B"), ("A", "increases", "B")],
        );
        let atlas = build(&[m], &BuildConfig::default());
        assert_eq!(atlas.edges().len(), 1);
        let e = &atlas.edges()[0];
        assert!((e.score_sum - 1.0).abs() < 1e-12);
        assert_eq!(e.support_lcms, 1);
        assert_eq!(e.support_docs, 1);
        assert!((e.pol_mass_inc - 1.0).abs() < 1e-12);
        assert_eq!(e.controversy, 0.0);
        assert_eq!(e.polarity, Polarity::Inc);
        assert!((e.score_mean - 1.0).abs() < 1e-12);
        assert!((e.score_max - 0.5).abs() < 1e-12);
        assert_eq!(atlas.support().len(), 2);
    }

    #[test]
    fn shared_edge_across_docs_uses_default_weights() {
        let lcms = vec![
            lcm("d1", "m1", None, &[("A", "influences", "B")]),
            lcm("d2", "m1", None, &[("A", "influences", "B")]),
        ];
        let atlas = build(&lcms, &BuildConfig::default());
        let e = &atlas.edges()[0];
        assert!((e.score_sum - 2.0).abs() < 1e-12);
        assert_eq!(e.support_docs, 2);
        assert_eq!(e.support_lcms, 2);
    }

    #[test]
    fn tau_skips_small_lcms_entirely() {
        let cfg = BuildConfig {
            tau: 3,
            ..BuildConfig::default()
        };
        let m = lcm("d1", "m1", Some(1.0), &[("A", "causes", "B"), ("B", "causes", "C")]);
        let atlas = build(&[m], &cfg);
        assert!(atlas.nodes().is_empty());
        assert!(atlas.edges().is_empty());
        assert!(atlas.support().is_empty());
    }

    #[test]
    fn accumulate_edge_fold_sequence() {
        let mut acc = EdgeAccumulator::new(NodeId(1), NodeId(2), RelType::Influences);
        acc.accumulate(1.0, Polarity::Inc, "d1", "m1").unwrap();
        assert!((acc.score_sum() - 1.0).abs() < 1e-12);
        assert_eq!(acc.support_lcms(), 1);

        acc.accumulate(0.5, Polarity::Dec, "d1", "m2").unwrap();
        assert!((acc.score_sum() - 1.5).abs() < 1e-12);
        assert_eq!(acc.support_lcms(), 2);
        assert_eq!(acc.support_docs(), 1);

        acc.accumulate(2.0, Polarity::Unk, "d2", "m3").unwrap();
        assert!((acc.score_max() - 2.0).abs() < 1e-12);
        assert_eq!(acc.support_docs(), 2);

        let row = acc.finish(EdgeId(9), 1e-9);
        assert!((row.pol_mass_dec - 0.5).abs() < 1e-12);
        assert!((row.score_mean - 3.5 / 3.0).abs() < 1e-12);
        assert!(row.controversy > 0.0 && row.controversy < 0.5);
    }

    #[test]
    fn accumulate_rejects_negative_weight() {
        let mut acc = EdgeAccumulator::new(NodeId(1), NodeId(2), RelType::Causes);
        assert!(acc.accumulate(-0.1, Polarity::Unk, "d", "m").is_err());
    }

    #[test]
    fn controversy_formula() {
        assert_eq!(controversy(5.0, 0.0, 1e-9), 0.0);
        assert!((controversy(2.0, 2.0, 1e-9) - 0.5).abs() < 1e-9);
        assert!((controversy(3.0, 1.0, 1e-9) - 0.25).abs() < 1e-9);
    }

    #[test]
    fn dominant_polarity_majority_and_ties() {
        assert_eq!(dominant_polarity(2.0, 1.0, 0.5), Polarity::Inc);
        assert_eq!(dominant_polarity(1.0, 3.0, 0.5), Polarity::Dec);
        assert_eq!(dominant_polarity(1.0, 1.0, 0.5), Polarity::Unk);
        assert_eq!(dominant_polarity(0.0, 0.0, 0.0), Polarity::Unk);
    }

    #[test]
    fn finalize_nodes_counts_distinct_edges() {
        let m = lcm(
            "d1",
            "m1",
            Some(1.0),
            &[("A", "causes", "B"), ("A", "causes", "C")],
        );
        let atlas = build(&[m], &BuildConfig::default());
        let a = atlas.node_by_label("a").unwrap();
        assert_eq!((a.deg_out, a.deg_in), (2, 0));
        let b = atlas.node_by_label("b").unwrap();
        assert_eq!((b.deg_in, b.deg_out), (1, 0));
    }

    #[test]
    fn finalize_nodes_self_loop_counts_both_directions() {
        let m = lcm("d1", "m1", Some(1.0), &[("A", "causes", "A")]);
        let atlas = build(&[m], &BuildConfig::default());
        let a = atlas.node_by_label("a").unwrap();
        assert_eq!((a.deg_in, a.deg_out), (1, 1));
    }

    #[test]
    fn degree_counts_canonical_edges_not_support() {
        let lcms = vec![
            lcm("d1", "m1", Some(1.0), &[("A", "causes", "B")]),
            lcm("d2", "m1", Some(1.0), &[("A", "causes", "B")]),
            lcm("d2", "m2", Some(1.0), &[("a", "causes", "b.")]),
        ];
        let atlas = build(&lcms, &BuildConfig::default());
        assert_eq!(atlas.edges().len(), 1);
        let a = atlas.node_by_label("a").unwrap();
        assert_eq!(a.deg_out, 1);
        assert_eq!(atlas.edges()[0].support_lcms, 3);
    }

    #[test]
    fn blacklisted_relations_keep_endpoint_nodes_with_degree_zero() {
        let cfg = BuildConfig {
            rel_blacklist: [RelType::Causes].into_iter().collect(),
            ..BuildConfig::default()
        };
        let m = lcm(
            "d1",
            "m1",
            Some(1.0),
            &[("A", "causes", "B"), ("A", "increases", "C")],
        );
        let atlas = build(&[m], &cfg);
        assert_eq!(atlas.edges().len(), 1);
        assert_eq!(atlas.nodes().len(), 3);
        let b = atlas.node_by_label("b").unwrap();
        assert_eq!((b.deg_in, b.deg_out), (0, 0));
    }

    #[test]
    fn whitelist_and_blacklist_must_be_disjoint() {
        let cfg = BuildConfig {
            rel_whitelist: Some([RelType::Causes].into_iter().collect()),
            rel_blacklist: [RelType::Causes].into_iter().collect(),
            ..BuildConfig::default()
        };
        assert!(build_atlas(&[], &cfg, &mut Vec::new()).is_err());
    }

    #[test]
    fn canon_failure_drops_edge_with_warning() {
        let m = lcm("d1", "m1", Some(1.0), &[("...", "causes", "B"), ("A", "", "B")]);
        let mut w = Vec::new();
        let atlas = build_atlas(&[m], &BuildConfig::default(), &mut w).unwrap();
        assert_eq!(atlas.edges().len(), 1);
        assert_eq!(w.len(), 1);
        // the dropped edge registered no nodes
        assert!(atlas.node_by_label("b").is_some());
        assert_eq!(atlas.nodes().len(), 2);
    }

    #[test]
    fn weight_selection_prefers_score_then_raw_then_default() {
        let mut with_raw = lcm("d1", "m1", None, &[("A", "causes", "B")]);
        with_raw.score_raw = Some(0.25);
        let with_both = {
            let mut l = lcm("d1", "m2", Some(0.75), &[("C", "causes", "D")]);
            l.score_raw = Some(9.0);
            l
        };
        let with_neither = lcm("d1", "m3", None, &[("E", "causes", "F")]);
        let atlas = build(&[with_raw, with_both, with_neither], &BuildConfig::default());
        let mass = |src: &str| {
            let id = atlas.node_by_label(src).unwrap().node_id;
            atlas.out_edges(id).iter().map(|&i| atlas.edges()[i].score_sum).sum::<f64>()
        };
        assert!((mass("a") - 0.25).abs() < 1e-12);
        assert!((mass("c") - 0.75).abs() < 1e-12);
        assert!((mass("e") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn order_independence_of_input_permutation() {
        let lcms = vec![
            lcm("d2", "m1", Some(0.3), &[("X", "increases", "Y")]),
            lcm("d1", "m2", Some(0.2), &[("X", "increases", "Y"), ("Y", "reduces", "Z")]),
            lcm("d1", "m1", Some(0.1), &[("Z", "causes", "X")]),
        ];
        let mut reversed = lcms.clone();
        reversed.reverse();
        let a = build(&lcms, &BuildConfig::default());
        let b = build(&reversed, &BuildConfig::default());
        assert_eq!(a.nodes(), b.nodes());
        assert_eq!(a.support(), b.support());
        assert_eq!(a.edges().len(), b.edges().len());
        for (x, y) in a.edges().iter().zip(b.edges()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn claims_same_edge_across_papers() {
        let claim = |doc: &str| ClaimRow {
            cause: "monetary policy".into(),
            effect: "inflation".into(),
            sign: None,
            method: None,
            doc_id: doc.into(),
            year: Some(2001),
        };
        let claims = vec![claim("p1"), claim("p2"), claim("p3")];
        let mut w = Vec::new();
        let atlas = build_from_claims(&claims, &BuildConfig::default(), &mut w).unwrap();
        assert_eq!(atlas.edges().len(), 1);
        let e = &atlas.edges()[0];
        assert_eq!(e.support_docs, 3);
        assert!((e.score_sum - 3.0).abs() < 1e-12);
        assert_eq!(e.rel_type, RelType::Influences);
        assert_eq!(atlas.support()[0].year, Some(2001));
    }

    #[test]
    fn single_claim_minimal_tables() {
        let claims = vec![ClaimRow {
            cause: "education".into(),
            effect: "earnings".into(),
            sign: Some("+".into()),
            method: Some("IV".into()),
            doc_id: "p1".into(),
            year: None,
        }];
        let mut w = Vec::new();
        let atlas = build_from_claims(&claims, &BuildConfig::default(), &mut w).unwrap();
        assert_eq!(atlas.nodes().len(), 2);
        assert_eq!(atlas.edges().len(), 1);
        assert_eq!(atlas.support().len(), 1);
        assert_eq!(atlas.support()[0].method.as_deref(), Some("IV"));
        assert_eq!(atlas.support()[0].sign.as_deref(), Some("+"));
    }

    #[test]
    fn duplicate_claim_within_one_paper() {
        let claim = ClaimRow {
            cause: "trade".into(),
            effect: "growth".into(),
            sign: None,
            method: None,
            doc_id: "p1".into(),
            year: None,
        };
        let claims = vec![claim.clone(), claim];
        let mut w = Vec::new();
        let atlas = build_from_claims(&claims, &BuildConfig::default(), &mut w).unwrap();
        let e = &atlas.edges()[0];
        assert_eq!(e.support_lcms, 2);
        assert_eq!(e.support_docs, 1);
        assert!((e.score_sum - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mass_conservation_invariant() {
        let lcms = vec![
            lcm("d1", "m1", Some(0.4), &[("A", "increases", "B"), ("A", "reduces", "B")]),
            lcm("d1", "m2", Some(0.6), &[("A", "negatively influences", "B")]),
        ];
        let atlas = build(&lcms, &BuildConfig::default());
        for e in atlas.edges() {
            let masses = e.pol_mass_inc + e.pol_mass_dec + e.pol_mass_unk;
            assert!((e.score_sum - masses).abs() < 1e-9);
        }
    }
}
