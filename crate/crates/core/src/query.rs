//! The causal query algebra: backbone, mechanisms, provenance, composition,
//! cycles, interventions and counterfactual diffs, executed natively over an
//! atlas, plus SQL text emission for external engines.
//!
//! Interventions never mutate the base tables: they build cheap [`EdgeView`]
//! values that filter and rescale edges on the fly. All orderings are total
//! (score descending, then labels, then relation name) so results are stable
//! across runs and engines.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::builder::{Atlas, EdgeRow, SupportRow};
use crate::canon::{EdgeId, NodeId, RelType};
use crate::error::{AtlasError, Result};

/// A derived, lazily evaluated view of the atlas edge relation.
///
/// `removed_sources` drop every outgoing edge of a node (hard intervention);
/// `scale` multiplies the effective score of a node's outgoing edges (soft
/// intervention). Views compose: each operator returns a new view over the
/// same base.
#[derive(Debug, Clone)]
pub struct EdgeView<'a> {
    base: &'a Atlas,
    removed_sources: BTreeSet<NodeId>,
    scale: BTreeMap<NodeId, f64>,
}

impl Atlas {
    /// An unmodified view of this atlas.
    pub fn view(&self) -> EdgeView<'_> {
        EdgeView {
            base: self,
            removed_sources: BTreeSet::new(),
            scale: BTreeMap::new(),
        }
    }
}

impl<'a> EdgeView<'a> {
    pub fn base(&self) -> &'a Atlas {
        self.base
    }

    fn resolve_label(&self, label: &str) -> Result<NodeId> {
        self.base
            .node_by_label(label)
            .map(|n| n.node_id)
            .ok_or_else(|| AtlasError::NotFound(format!("concept {label:?}")))
    }

    /// Hard intervention: the returned view excludes every outgoing edge of
    /// the named concept. Cutting a concept with no outgoing edges succeeds
    /// as a no-op; an unknown label is an error.
    pub fn do_cut(&self, label: &str) -> Result<EdgeView<'a>> {
        let id = self.resolve_label(label)?;
        let mut view = self.clone();
        view.removed_sources.insert(id);
        Ok(view)
    }

    /// Soft intervention: multiply the effective score of the concept's
    /// outgoing edges by `lambda`. Repeated applications compose
    /// multiplicatively; `lambda = 0` keeps the edges with score 0.
    pub fn soft_do(&self, label: &str, lambda: f64) -> Result<EdgeView<'a>> {
        if !(lambda >= 0.0) {
            return Err(AtlasError::InvalidArgument(format!(
                "soft intervention multiplier must be >= 0, got {lambda}"
            )));
        }
        let id = self.resolve_label(label)?;
        let mut view = self.clone();
        *view.scale.entry(id).or_insert(1.0) *= lambda;
        Ok(view)
    }

    fn includes(&self, edge: &EdgeRow) -> bool {
        !self.removed_sources.contains(&edge.src_id)
    }

    fn effective_score(&self, edge: &EdgeRow) -> f64 {
        edge.score_sum * self.scale.get(&edge.src_id).copied().unwrap_or(1.0)
    }

    /// Iterate over the edges visible in this view with effective scores.
    pub fn edges(&self) -> impl Iterator<Item = (&'a EdgeRow, f64)> + '_ {
        self.base
            .edges()
            .iter()
            .filter(|e| self.includes(e))
            .map(|e| (e, self.effective_score(e)))
    }
}

/// One ranked edge row as returned by backbone and mechanism queries.
/// `score_sum` is the view-effective score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackboneRow {
    pub edge_id: EdgeId,
    pub rel_type: RelType,
    pub src: String,
    pub dst: String,
    pub support_lcms: u64,
    pub score_sum: f64,
}

/// One two-hop causal chain a --r1--> b --r2--> c.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRow {
    pub a: String,
    pub r1: RelType,
    pub b: String,
    pub r2: RelType,
    pub c: String,
    pub path_score: f64,
}

/// One mutual-influence pair a --r1--> b --r2--> a with a < b.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MutualRow {
    pub a: String,
    pub r1: RelType,
    pub b: String,
    pub r2: RelType,
}

fn ranked_row(view: &EdgeView<'_>, edge: &EdgeRow, score: f64) -> BackboneRow {
    BackboneRow {
        edge_id: edge.edge_id,
        rel_type: edge.rel_type,
        src: view.base().label_of(edge.src_id).to_string(),
        dst: view.base().label_of(edge.dst_id).to_string(),
        support_lcms: edge.support_lcms,
        score_sum: score,
    }
}

fn sort_ranked(rows: &mut [BackboneRow]) {
    rows.sort_by(|a, b| {
        b.score_sum
            .partial_cmp(&a.score_sum)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.src.cmp(&b.src))
            .then_with(|| a.dst.cmp(&b.dst))
            .then_with(|| a.rel_type.name().cmp(b.rel_type.name()))
    });
}

/// Edges ordered by effective score descending (the causal backbone).
pub fn backbone(view: &EdgeView<'_>, limit: usize) -> Vec<BackboneRow> {
    let mut rows: Vec<BackboneRow> = view
        .edges()
        .map(|(e, score)| ranked_row(view, e, score))
        .collect();
    sort_ranked(&mut rows);
    rows.truncate(limit);
    rows
}

/// Outgoing edges of one concept, strongest first.
pub fn mechanisms(view: &EdgeView<'_>, src_label: &str, limit: usize) -> Result<Vec<BackboneRow>> {
    let id = view.resolve_label(src_label)?;
    let mut rows: Vec<BackboneRow> = view
        .base()
        .out_edges(id)
        .iter()
        .map(|&i| &view.base().edges()[i])
        .filter(|e| view.includes(e))
        .map(|e| ranked_row(view, e, view.effective_score(e)))
        .collect();
    sort_ranked(&mut rows);
    rows.truncate(limit);
    Ok(rows)
}

/// Source nodes of the view ranked by effective outgoing mass. Agrees with
/// [`crate::analytics::hub_ranking`] on an unmodified view.
pub fn hubs(view: &EdgeView<'_>, k: usize) -> Vec<crate::analytics::HubRow> {
    let base = view.base();
    let mut grouped: BTreeMap<NodeId, (f64, u64)> = BTreeMap::new();
    for (e, score) in view.edges() {
        let entry = grouped.entry(e.src_id).or_insert((0.0, 0));
        entry.0 += score;
        entry.1 += 1;
    }
    let mut rows: Vec<crate::analytics::HubRow> = grouped
        .into_iter()
        .map(|(id, (out_mass, out_degree))| crate::analytics::HubRow {
            label: base.label_of(id).to_string(),
            out_mass,
            out_degree,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.out_mass
            .partial_cmp(&a.out_mass)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.label.cmp(&b.label))
    });
    rows.truncate(k);
    rows
}

/// All support rows of an edge, ordered by (doc_id, lcm_instance_id).
pub fn provenance(atlas: &Atlas, edge: EdgeId) -> Result<Vec<SupportRow>> {
    if atlas.edge(edge).is_none() {
        return Err(AtlasError::NotFound(format!("edge {edge}")));
    }
    // support table is already in canonical (doc, lcm) order
    Ok(atlas
        .support_rows(edge)
        .iter()
        .map(|&i| atlas.support()[i].clone())
        .collect())
}

/// All ordered edge pairs (a -> b, b -> c), including a = c, ranked by
/// combined effective score.
pub fn two_hop_paths(view: &EdgeView<'_>, limit: usize) -> Vec<PathRow> {
    let base = view.base();
    let mut rows = Vec::new();
    for (e1, s1) in view.edges() {
        for &j in base.out_edges(e1.dst_id) {
            let e2 = &base.edges()[j];
            if !view.includes(e2) {
                continue;
            }
            rows.push(PathRow {
                a: base.label_of(e1.src_id).to_string(),
                r1: e1.rel_type,
                b: base.label_of(e1.dst_id).to_string(),
                r2: e2.rel_type,
                c: base.label_of(e2.dst_id).to_string(),
                path_score: s1 + view.effective_score(e2),
            });
        }
    }
    rows.sort_by(|x, y| {
        y.path_score
            .partial_cmp(&x.path_score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| x.a.cmp(&y.a))
            .then_with(|| x.b.cmp(&y.b))
            .then_with(|| x.c.cmp(&y.c))
            .then_with(|| x.r1.name().cmp(y.r1.name()))
            .then_with(|| x.r2.name().cmp(y.r2.name()))
    });
    rows.truncate(limit);
    rows
}

/// All edge pairs forming a 2-cycle; each unordered node pair reported once
/// per (r1, r2) combination with a < b lexicographically.
pub fn mutual_influence(view: &EdgeView<'_>) -> Vec<MutualRow> {
    let base = view.base();
    let mut rows = Vec::new();
    for (e1, _) in view.edges() {
        let a = base.label_of(e1.src_id);
        let b = base.label_of(e1.dst_id);
        if a >= b {
            continue;
        }
        for &j in base.out_edges(e1.dst_id) {
            let e2 = &base.edges()[j];
            if e2.dst_id == e1.src_id && view.includes(e2) {
                rows.push(MutualRow {
                    a: a.to_string(),
                    r1: e1.rel_type,
                    b: b.to_string(),
                    r2: e2.rel_type,
                });
            }
        }
    }
    rows.sort_by(|x, y| {
        (&x.a, &x.b, x.r1.name(), x.r2.name()).cmp(&(&y.a, &y.b, y.r1.name(), y.r2.name()))
    });
    rows
}

/// One edge whose rank moved between two query results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankChange {
    pub edge_id: EdgeId,
    pub src: String,
    pub dst: String,
    pub rel_type: RelType,
    /// 1-based rank in the baseline result.
    pub old_rank: usize,
    /// 1-based rank in the intervened result.
    pub new_rank: usize,
}

/// Difference between a baseline and an intervened query result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterfactualDiff {
    /// Rows of the baseline absent from the intervened result, baseline order.
    pub vanished: Vec<BackboneRow>,
    /// Edges present in both results at different positions.
    pub rank_changes: Vec<RankChange>,
}

/// Compare two ranked edge lists from the same query shape. Rows are matched
/// by edge id, not display text.
pub fn counterfactual_diff(
    base_result: &[BackboneRow],
    intervened_result: &[BackboneRow],
) -> CounterfactualDiff {
    let new_rank: BTreeMap<EdgeId, usize> = intervened_result
        .iter()
        .enumerate()
        .map(|(i, r)| (r.edge_id, i + 1))
        .collect();
    let mut vanished = Vec::new();
    let mut rank_changes = Vec::new();
    for (i, row) in base_result.iter().enumerate() {
        match new_rank.get(&row.edge_id) {
            None => vanished.push(row.clone()),
            Some(&new) if new != i + 1 => rank_changes.push(RankChange {
                edge_id: row.edge_id,
                src: row.src.clone(),
                dst: row.dst.clone(),
                rel_type: row.rel_type,
                old_rank: i + 1,
                new_rank: new,
            }),
            Some(_) => {}
        }
    }
    CounterfactualDiff {
        vanished,
        rank_changes,
    }
}

/// Query kinds that can be rendered as SQL text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqlKind {
    Backbone,
    Hubs,
    Mechanisms,
    Provenance,
    Scc,
    TwoHop,
    Mutual,
    DoCut,
    SoftDo,
}

impl SqlKind {
    pub fn from_name(name: &str) -> Option<SqlKind> {
        match name {
            "backbone" => Some(SqlKind::Backbone),
            "hubs" => Some(SqlKind::Hubs),
            "mechanisms" => Some(SqlKind::Mechanisms),
            "provenance" => Some(SqlKind::Provenance),
            "scc" => Some(SqlKind::Scc),
            "two_hop" | "two-hop" => Some(SqlKind::TwoHop),
            "mutual" => Some(SqlKind::Mutual),
            "do_cut" | "do-cut" => Some(SqlKind::DoCut),
            "soft_do" | "soft-do" => Some(SqlKind::SoftDo),
            _ => None,
        }
    }
}

/// Parameters for [`emit_sql`]. Unused fields are ignored by kinds that do
/// not need them.
#[derive(Debug, Clone, Default)]
pub struct SqlParams {
    pub limit: Option<usize>,
    pub src_label: Option<String>,
    pub edge_id: Option<u64>,
    pub label: Option<String>,
    pub lambda: Option<f64>,
}

/// Escape a string for a single-quoted SQL literal.
fn sql_str(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

const BACKBONE_ORDER: &str =
    "ORDER BY e.score_sum DESC, src ASC, dst ASC, e.rel_type ASC";

/// Render a query as standard SQL over the exported table names
/// (`atlas_nodes`, `atlas_edges`, `atlas_edge_support`, `atlas_scc`).
/// String parameters are escaped.
pub fn emit_sql(kind: SqlKind, params: &SqlParams) -> Result<String> {
    let limit = params.limit.unwrap_or(20);
    let require = |value: &Option<String>, what: &str| -> Result<String> {
        value
            .clone()
            .ok_or_else(|| AtlasError::InvalidArgument(format!("{what} is required")))
    };
    let sql = match kind {
        SqlKind::Backbone => format!(
            "SELECT\n  e.rel_type,\n  n1.label_canon AS src,\n  n2.label_canon AS dst,\n  e.support_lcms,\n  e.score_sum\nFROM atlas_edges e\nJOIN atlas_nodes n1 ON e.src_id = n1.node_id\nJOIN atlas_nodes n2 ON e.dst_id = n2.node_id\n{BACKBONE_ORDER}\nLIMIT {limit};"
        ),
        SqlKind::Hubs => format!(
            "SELECT\n  n.label_canon AS src,\n  SUM(e.score_sum) AS out_mass,\n  COUNT(*) AS out_degree\nFROM atlas_edges e\nJOIN atlas_nodes n ON e.src_id = n.node_id\nGROUP BY n.node_id, n.label_canon\nORDER BY out_mass DESC, src ASC\nLIMIT {limit};"
        ),
        SqlKind::Mechanisms => {
            let src = sql_str(&require(&params.src_label, "src label")?);
            format!(
                "SELECT\n  e.rel_type,\n  n2.label_canon AS dst,\n  e.support_lcms,\n  e.score_sum\nFROM atlas_edges e\nJOIN atlas_nodes n1 ON e.src_id = n1.node_id\nJOIN atlas_nodes n2 ON e.dst_id = n2.node_id\nWHERE n1.label_canon = {src}\nORDER BY e.score_sum DESC, dst ASC, e.rel_type ASC\nLIMIT {limit};"
            )
        }
        SqlKind::Provenance => {
            let edge_id = params.edge_id.ok_or_else(|| {
                AtlasError::InvalidArgument("edge id is required".into())
            })?;
            format!(
                "SELECT\n  s.doc_id,\n  s.lcm_instance_id,\n  s.score_raw,\n  s.coupling\nFROM atlas_edge_support s\nWHERE s.edge_id = {edge_id}\nORDER BY s.doc_id ASC, s.lcm_instance_id ASC;"
            )
        }
        SqlKind::Scc => format!(
            "SELECT\n  scc_id,\n  n_nodes,\n  n_edges,\n  support_docs,\n  top_nodes\nFROM atlas_scc\nORDER BY n_nodes DESC, scc_id ASC\nLIMIT {limit};"
        ),
        SqlKind::TwoHop => format!(
            "SELECT\n  n1.label_canon AS a,\n  e1.rel_type AS r1,\n  n2.label_canon AS b,\n  e2.rel_type AS r2,\n  n3.label_canon AS c,\n  (e1.score_sum + e2.score_sum) AS path_score\nFROM atlas_edges e1\nJOIN atlas_edges e2 ON e1.dst_id = e2.src_id\nJOIN atlas_nodes n1 ON e1.src_id = n1.node_id\nJOIN atlas_nodes n2 ON e1.dst_id = n2.node_id\nJOIN atlas_nodes n3 ON e2.dst_id = n3.node_id\nORDER BY path_score DESC, a ASC, b ASC, c ASC, r1 ASC, r2 ASC\nLIMIT {limit};"
        ),
        SqlKind::Mutual => format!(
            "SELECT\n  n1.label_canon AS a,\n  e1.rel_type AS r1,\n  n2.label_canon AS b,\n  e2.rel_type AS r2\nFROM atlas_edges e1\nJOIN atlas_edges e2\n  ON e1.src_id = e2.dst_id\n AND e1.dst_id = e2.src_id\nJOIN atlas_nodes n1 ON e1.src_id = n1.node_id\nJOIN atlas_nodes n2 ON e1.dst_id = n2.node_id\nWHERE n1.label_canon < n2.label_canon\nORDER BY a ASC, b ASC, r1 ASC, r2 ASC;"
        ),
        SqlKind::DoCut => {
            let label = sql_str(&require(&params.label, "intervention label")?);
            format!(
                "WITH intervened_edges AS (\n  SELECT e.*\n  FROM atlas_edges e\n  JOIN atlas_nodes n1 ON e.src_id = n1.node_id\n  WHERE n1.label_canon <> {label}\n)\nSELECT\n  e.rel_type,\n  n1.label_canon AS src,\n  n2.label_canon AS dst,\n  e.support_lcms,\n  e.score_sum\nFROM intervened_edges e\nJOIN atlas_nodes n1 ON e.src_id = n1.node_id\nJOIN atlas_nodes n2 ON e.dst_id = n2.node_id\n{BACKBONE_ORDER}\nLIMIT {limit};"
            )
        }
        SqlKind::SoftDo => {
            let label = sql_str(&require(&params.label, "intervention label")?);
            let lambda = params.lambda.unwrap_or(0.2);
            format!(
                "WITH soft_do AS (\n  SELECT\n    e.*,\n    CASE WHEN n1.label_canon = {label} THEN {lambda}*e.score_sum ELSE e.score_sum END AS score_sum_do\n  FROM atlas_edges e\n  JOIN atlas_nodes n1 ON e.src_id = n1.node_id\n)\nSELECT\n  e.rel_type,\n  n1.label_canon AS src,\n  n2.label_canon AS dst,\n  e.support_lcms,\n  e.score_sum_do AS score_sum\nFROM soft_do e\nJOIN atlas_nodes n1 ON e.src_id = n1.node_id\nJOIN atlas_nodes n2 ON e.dst_id = n2.node_id\nORDER BY e.score_sum_do DESC, src ASC, dst ASC, e.rel_type ASC\nLIMIT {limit};"
            )
        }
    };
    Ok(sql)
}
