//! Derived statistics over an atlas: hub mass and concentration, score
//! quantiles and tail ratio, relation-type mass breakdown, strongly connected
//! components, and the combined summary.
//!
//! Everything here is a read-only computation over an immutable [`Atlas`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::builder::{Atlas, EdgeRow, NodeRow, SupportRow};
use crate::canon::{NodeId, Polarity, RelType};
use crate::error::{AtlasError, Result};

/// One strongly connected component with at least two nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SccRow {
    pub scc_id: u64,
    pub n_nodes: u64,
    /// Edges with both endpoints inside the component.
    pub n_edges: u64,
    /// Distinct doc_ids over the support rows of internal edges.
    pub support_docs: u64,
    /// Up to five member labels by (deg_in + deg_out) descending.
    pub top_nodes: Vec<String>,
}

/// One (relation type, polarity) group of the mass breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelMassRow {
    pub rel_type: RelType,
    pub polarity: Polarity,
    pub edge_count: u64,
    pub mass: f64,
}

/// One row of the hub ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubRow {
    pub label: String,
    pub out_mass: f64,
    pub out_degree: u64,
}

/// Compact quantitative summary of a whole atlas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtlasSummary {
    pub n_nodes: u64,
    pub n_edges: u64,
    pub n_support: u64,
    pub top_hub: String,
    pub top1_share: f64,
    pub top5_share: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub tail_ratio: f64,
    pub rel_mass: Vec<RelMassRow>,
}

/// Total score mass of the node's outgoing edges; 0 for sinks.
pub fn out_mass(atlas: &Atlas, node: NodeId) -> Result<f64> {
    if atlas.node(node).is_none() {
        return Err(AtlasError::NotFound(format!("node {node}")));
    }
    Ok(atlas
        .out_edges(node)
        .iter()
        .map(|&i| atlas.edges()[i].score_sum)
        .sum())
}

/// Source nodes ranked by outgoing mass, descending; ties by label ascending.
pub fn hub_ranking(atlas: &Atlas, k: usize) -> Vec<HubRow> {
    let mut hubs: Vec<HubRow> = atlas
        .nodes()
        .iter()
        .filter(|n| n.deg_out > 0)
        .map(|n| HubRow {
            label: n.label_canon.clone(),
            out_mass: atlas
                .out_edges(n.node_id)
                .iter()
                .map(|&i| atlas.edges()[i].score_sum)
                .sum(),
            out_degree: n.deg_out,
        })
        .collect();
    hubs.sort_by(|a, b| {
        b.out_mass
            .partial_cmp(&a.out_mass)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.label.cmp(&b.label))
    });
    hubs.truncate(k);
    hubs
}

/// Share of total outgoing mass carried by the top-k hubs.
pub fn concentration(atlas: &Atlas, k: usize) -> Result<f64> {
    let total: f64 = atlas.edges().iter().map(|e| e.score_sum).sum();
    if total <= 0.0 {
        return Err(AtlasError::DegenerateAtlas(
            "total outgoing mass is zero".into(),
        ));
    }
    let top: f64 = hub_ranking(atlas, k).iter().map(|h| h.out_mass).sum();
    Ok(top / total)
}

/// Quantiles of the edge score_sum distribution by linear interpolation
/// between order statistics: for n edges sorted ascending, q(p) interpolates
/// at rank p·(n−1).
pub fn score_quantiles(atlas: &Atlas, probs: &[f64]) -> Result<Vec<f64>> {
    if atlas.edges().is_empty() {
        return Err(AtlasError::DegenerateAtlas("atlas has no edges".into()));
    }
    let mut sorted: Vec<f64> = atlas.edges().iter().map(|e| e.score_sum).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    probs.iter().map(|&p| quantile_sorted(&sorted, p)).collect()
}

pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(AtlasError::InvalidArgument(format!(
            "quantile probability {p} outside [0, 1]"
        )));
    }
    let rank = p * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Heavy-tail indicator p99 / p50.
pub fn tail_ratio(p50: f64, p99: f64) -> Result<f64> {
    if p50 <= 0.0 {
        return Err(AtlasError::DegenerateAtlas(format!(
            "median edge mass {p50} is not positive"
        )));
    }
    Ok(p99 / p50)
}

/// Edge count and total mass grouped by (rel_type, polarity), mass descending.
pub fn relation_mass_breakdown(atlas: &Atlas) -> Vec<RelMassRow> {
    let mut groups: BTreeMap<(RelType, Polarity), (u64, f64)> = BTreeMap::new();
    for e in atlas.edges() {
        let g = groups.entry((e.rel_type, e.polarity)).or_insert((0, 0.0));
        g.0 += 1;
        g.1 += e.score_sum;
    }
    let mut rows: Vec<RelMassRow> = groups
        .into_iter()
        .map(|((rel_type, polarity), (edge_count, mass))| RelMassRow {
            rel_type,
            polarity,
            edge_count,
            mass,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.mass
            .partial_cmp(&a.mass)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.rel_type.name().cmp(b.rel_type.name()))
            .then_with(|| a.polarity.as_str().cmp(b.polarity.as_str()))
    });
    rows
}

/// Strongly connected components of the canonical edge graph. Only components
/// with at least two nodes are reported, ordered by n_nodes descending.
pub fn compute_scc(atlas: &Atlas) -> Vec<SccRow> {
    compute_scc_from_tables(atlas.nodes(), atlas.edges(), atlas.support())
}

pub(crate) fn compute_scc_from_tables(
    nodes: &[NodeRow],
    edges: &[EdgeRow],
    support: &[SupportRow],
) -> Vec<SccRow> {
    let index_of: BTreeMap<NodeId, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.node_id, i))
        .collect();
    let mut adjacency = vec![Vec::new(); nodes.len()];
    for e in edges {
        adjacency[index_of[&e.src_id]].push(index_of[&e.dst_id]);
    }

    let components = tarjan(&adjacency);

    // Map node index -> component ordinal for edge assignment.
    let mut comp_of = vec![usize::MAX; nodes.len()];
    for (ci, comp) in components.iter().enumerate() {
        for &v in comp {
            comp_of[v] = ci;
        }
    }

    let mut internal_edges: BTreeMap<usize, Vec<&EdgeRow>> = BTreeMap::new();
    for e in edges {
        let (cs, cd) = (comp_of[index_of[&e.src_id]], comp_of[index_of[&e.dst_id]]);
        if cs == cd {
            internal_edges.entry(cs).or_default().push(e);
        }
    }
    let mut support_by_edge: BTreeMap<_, Vec<&SupportRow>> = BTreeMap::new();
    for row in support {
        support_by_edge.entry(row.edge_id).or_default().push(row);
    }

    let mut rows = Vec::new();
    for (ci, comp) in components.iter().enumerate() {
        if comp.len() < 2 {
            continue;
        }
        let mut members: Vec<&NodeRow> = comp.iter().map(|&v| &nodes[v]).collect();
        members.sort_by(|a, b| {
            (b.deg_in + b.deg_out)
                .cmp(&(a.deg_in + a.deg_out))
                .then_with(|| a.label_canon.cmp(&b.label_canon))
        });
        let top_nodes: Vec<String> = members
            .iter()
            .take(5)
            .map(|n| n.label_canon.clone())
            .collect();

        let empty = Vec::new();
        let internal = internal_edges.get(&ci).unwrap_or(&empty);
        let mut docs: Vec<&str> = internal
            .iter()
            .flat_map(|e| {
                support_by_edge
                    .get(&e.edge_id)
                    .into_iter()
                    .flatten()
                    .map(|r| r.doc_id.as_str())
            })
            .collect();
        docs.sort_unstable();
        docs.dedup();

        rows.push(SccRow {
            scc_id: 0, // assigned after ordering
            n_nodes: comp.len() as u64,
            n_edges: internal.len() as u64,
            support_docs: docs.len() as u64,
            top_nodes,
        });
    }
    rows.sort_by(|a, b| {
        b.n_nodes
            .cmp(&a.n_nodes)
            .then_with(|| a.top_nodes.cmp(&b.top_nodes))
    });
    for (i, row) in rows.iter_mut().enumerate() {
        row.scc_id = (i + 1) as u64;
    }
    rows
}

/// Iterative Tarjan over an adjacency list; returns all components
/// (including singletons) as lists of node indices.
fn tarjan(adjacency: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNVISITED: usize = usize::MAX;
    let n = adjacency.len();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut counter = 0usize;
    let mut components = Vec::new();

    // Explicit DFS frames: (node, next child offset).
    let mut frames: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        frames.push((root, 0));
        while let Some(&mut (v, ref mut child)) = frames.last_mut() {
            if *child == 0 {
                index[v] = counter;
                low[v] = counter;
                counter += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if let Some(&w) = adjacency[v].get(*child) {
                *child += 1;
                if index[w] == UNVISITED {
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                frames.pop();
                if let Some(&(parent, _)) = frames.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    components.push(comp);
                }
            }
        }
    }
    components
}

/// Compose the summary statistics of a non-empty atlas.
pub fn atlas_summary(atlas: &Atlas) -> Result<AtlasSummary> {
    let quantiles = score_quantiles(atlas, &[0.5, 0.9, 0.99])?;
    let (p50, p90, p99) = (quantiles[0], quantiles[1], quantiles[2]);
    let hubs = hub_ranking(atlas, 5);
    let top_hub = hubs
        .first()
        .map(|h| h.label.clone())
        .ok_or_else(|| AtlasError::DegenerateAtlas("atlas has no source nodes".into()))?;
    Ok(AtlasSummary {
        n_nodes: atlas.nodes().len() as u64,
        n_edges: atlas.edges().len() as u64,
        n_support: atlas.support().len() as u64,
        top_hub,
        top1_share: concentration(atlas, 1)?,
        top5_share: concentration(atlas, 5)?,
        p50,
        p90,
        p99,
        tail_ratio: tail_ratio(p50, p99)?,
        rel_mass: relation_mass_breakdown(atlas),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{build_atlas, BuildConfig};
    use crate::ingest::{Lcm, RawEdge};

    fn atlas_of(edges: &[(&str, &str, &str, f64)]) -> Atlas {
        // one LCM per edge so each edge's mass equals its given weight
        let lcms: Vec<Lcm> = edges
            .iter()
            .enumerate()
            .map(|(i, &(src, rel, dst, w))| Lcm {
                doc_id: "d1".into(),
                lcm_instance_id: format!("m{i:03}"),
                focus: String::new(),
                edges: vec![RawEdge {
                    src: src.into(),
                    rel: rel.into(),
                    dst: dst.into(),
                }],
                score: Some(w),
                score_raw: None,
                coupling: None,
                radius: None,
                model_size: None,
            })
            .collect();
        build_atlas(&lcms, &BuildConfig::default(), &mut Vec::new()).unwrap()
    }

    #[test]
    fn out_mass_sums_outgoing_edges() {
        let atlas = atlas_of(&[
            ("hub", "influences", "x", 1.46),
            ("hub", "increases", "y", 1.33),
            ("other", "causes", "hub", 0.5),
        ]);
        let hub = atlas.node_by_label("hub").unwrap().node_id;
        assert!((out_mass(&atlas, hub).unwrap() - 2.79).abs() < 1e-12);
        let sink = atlas.node_by_label("x").unwrap().node_id;
        assert_eq!(out_mass(&atlas, sink).unwrap(), 0.0);
        assert!(out_mass(&atlas, NodeId(42)).is_err());
    }

    #[test]
    fn out_mass_totals_match_edge_table() {
        let atlas = atlas_of(&[
            ("a", "causes", "b", 0.2),
            ("b", "causes", "c", 0.3),
            ("c", "causes", "a", 0.4),
            ("a", "increases", "c", 0.1),
        ]);
        let node_total: f64 = atlas
            .nodes()
            .iter()
            .map(|n| out_mass(&atlas, n.node_id).unwrap())
            .sum();
        let edge_total: f64 = atlas.edges().iter().map(|e| e.score_sum).sum();
        assert!((node_total - edge_total).abs() < 1e-9);
    }

    #[test]
    fn hub_ranking_orders_by_mass_then_label() {
        let atlas = atlas_of(&[
            ("b", "causes", "x", 1.0),
            ("a", "causes", "y", 1.0),
            ("c", "causes", "z", 2.0),
        ]);
        let hubs = hub_ranking(&atlas, 10);
        let labels: Vec<&str> = hubs.iter().map(|h| h.label.as_str()).collect();
        assert_eq!(labels, ["c", "a", "b"]);
        assert_eq!(hubs[0].out_degree, 1);
    }

    #[test]
    fn single_edge_atlas_source_is_rank_one() {
        let atlas = atlas_of(&[("src", "causes", "dst", 0.7)]);
        let hubs = hub_ranking(&atlas, 3);
        assert_eq!(hubs.len(), 1);
        assert_eq!(hubs[0].label, "src");
    }

    #[test]
    fn concentration_shares() {
        // masses sum to 100, top hub carries 74.8
        let atlas = atlas_of(&[
            ("h1", "causes", "x1", 74.8),
            ("h2", "causes", "x2", 3.0),
            ("h3", "causes", "x3", 3.0),
            ("h4", "causes", "x4", 3.0),
            ("h5", "causes", "x5", 2.0),
            ("h6", "causes", "x6", 14.2),
        ]);
        assert!((concentration(&atlas, 1).unwrap() - 0.748).abs() < 1e-9);
        assert!((concentration(&atlas, 6).unwrap() - 1.0).abs() < 1e-12);
        assert!((concentration(&atlas, 100).unwrap() - 1.0).abs() < 1e-12);

        let one = atlas_of(&[("only", "causes", "x", 5.0)]);
        assert!((concentration(&one, 1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantiles_interpolate_between_order_statistics() {
        let atlas = atlas_of(&[
            ("a", "causes", "w", 1.0),
            ("b", "causes", "x", 2.0),
            ("c", "causes", "y", 3.0),
            ("d", "causes", "z", 4.0),
        ]);
        let q = score_quantiles(&atlas, &[0.0, 0.5, 1.0]).unwrap();
        assert!((q[0] - 1.0).abs() < 1e-12);
        assert!((q[1] - 2.5).abs() < 1e-12);
        assert!((q[2] - 4.0).abs() < 1e-12);

        let single = atlas_of(&[("a", "causes", "b", 0.42)]);
        for p in [0.0, 0.3, 0.99, 1.0] {
            assert!((score_quantiles(&single, &[p]).unwrap()[0] - 0.42).abs() < 1e-12);
        }
        assert!(score_quantiles(&atlas, &[1.5]).is_err());
    }

    #[test]
    fn tail_ratio_formula() {
        let r = tail_ratio(0.0337, 1.377).unwrap();
        assert!((r - 40.8).abs() < 0.2);
        assert!((tail_ratio(1.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((tail_ratio(0.5, 2.0).unwrap() - 4.0).abs() < 1e-12);
        assert!(tail_ratio(0.0, 1.0).is_err());
    }

    #[test]
    fn relation_mass_groups_sum_to_totals() {
        let atlas = atlas_of(&[
            ("a", "increases", "b", 1.0),
            ("c", "increases", "d", 0.5),
            ("e", "reduces", "f", 0.25),
            ("g", "influences", "h", 2.0),
        ]);
        let rows = relation_mass_breakdown(&atlas);
        let total_mass: f64 = rows.iter().map(|r| r.mass).sum();
        let total_count: u64 = rows.iter().map(|r| r.edge_count).sum();
        assert!((total_mass - 3.75).abs() < 1e-12);
        assert_eq!(total_count, atlas.edges().len() as u64);
        assert_eq!(rows[0].rel_type, RelType::Influences);
        assert!((rows[0].mass - 2.0).abs() < 1e-12);

        let single = atlas_of(&[("a", "increases", "b", 1.0)]);
        let rows = relation_mass_breakdown(&single);
        assert_eq!(rows.len(), 1);
        assert_eq!(
            (rows[0].rel_type, rows[0].polarity, rows[0].edge_count),
            (RelType::Increases, Polarity::Inc, 1)
        );
    }

    #[test]
    fn scc_minimal_cycle_and_dag() {
        let cyclic = atlas_of(&[("a", "causes", "b", 1.0), ("b", "causes", "a", 1.0)]);
        let rows = compute_scc(&cyclic);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].n_nodes, 2);
        assert_eq!(rows[0].n_edges, 2);
        assert_eq!(rows[0].support_docs, 1);
        assert_eq!(rows[0].top_nodes, ["a", "b"]);

        let dag = atlas_of(&[("a", "causes", "b", 1.0), ("b", "causes", "c", 1.0)]);
        assert!(compute_scc(&dag).is_empty());
    }

    #[test]
    fn scc_orders_by_size_descending() {
        let atlas = atlas_of(&[
            // 2-cycle
            ("p", "causes", "q", 1.0),
            ("q", "causes", "p", 1.0),
            // 3-cycle
            ("x", "causes", "y", 1.0),
            ("y", "causes", "z", 1.0),
            ("z", "causes", "x", 1.0),
        ]);
        let rows = compute_scc(&atlas);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].n_nodes, 3);
        assert_eq!(rows[1].n_nodes, 2);
        assert_eq!(rows[0].scc_id, 1);
        assert_eq!(rows[1].scc_id, 2);
    }

    #[test]
    fn summary_composes_all_statistics() {
        let atlas = atlas_of(&[("src", "causes", "dst", 0.9)]);
        let s = atlas_summary(&atlas).unwrap();
        assert_eq!((s.n_nodes, s.n_edges, s.n_support), (2, 1, 1));
        assert_eq!(s.top_hub, "src");
        assert!((s.top1_share - 1.0).abs() < 1e-12);
        assert!((s.tail_ratio - 1.0).abs() < 1e-12);
    }
}
