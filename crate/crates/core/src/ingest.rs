//! Parsing of LCM JSON directories, score metadata, and causal-claim CSV
//! corpora into typed in-memory records.
//!
//! Parsing is pure per file: identical bytes yield structurally identical
//! records. Files of a run may be parsed in any order (or concurrently);
//! downstream stages sort by `(doc_id, lcm_instance_id)` before aggregating,
//! so results are independent of filesystem enumeration order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{AtlasError, Result};

/// One raw directed labeled edge as it appears in an LCM file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEdge {
    pub src: String,
    pub rel: String,
    pub dst: String,
}

/// One parsed local causal model: a directed labeled multigraph plus
/// per-model score metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Lcm {
    pub doc_id: String,
    pub lcm_instance_id: String,
    pub focus: String,
    pub edges: Vec<RawEdge>,
    pub score: Option<f64>,
    pub score_raw: Option<f64>,
    pub coupling: Option<f64>,
    pub radius: Option<i64>,
    pub model_size: Option<i64>,
}

/// One extracted causal claim from a pre-compiled corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimRow {
    pub cause: String,
    pub effect: String,
    pub sign: Option<String>,
    pub method: Option<String>,
    pub doc_id: String,
    pub year: Option<i64>,
}

/// The LCM files (and optional scores.csv) found for one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentRun {
    pub doc_id: String,
    pub lcm_paths: Vec<PathBuf>,
    pub scores_path: Option<PathBuf>,
}

/// One row of a scores.csv table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub lcm_instance_id: String,
    pub score: Option<f64>,
    pub score_raw: Option<f64>,
    pub coupling: Option<f64>,
}

fn is_lcm_file(name: &str) -> bool {
    name.ends_with(".lcm.json") || (name.starts_with("lcm_") && name.ends_with(".json"))
}

/// Enumerate per-document LCM folders under `root`.
///
/// One `DocumentRun` per immediate subdirectory containing at least one file
/// matching `*.lcm.json` or `lcm_*.json`; runs are ordered by doc_id
/// ascending and file lists are sorted by name. Subdirectories without LCM
/// files are skipped with a warning.
pub fn scan_runs_root(root: &Path, warnings: &mut Vec<String>) -> Result<Vec<DocumentRun>> {
    let entries =
        std::fs::read_dir(root).map_err(|e| AtlasError::io(root.display().to_string(), e))?;
    let mut runs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| AtlasError::io(root.display().to_string(), e))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let doc_id = entry.file_name().to_string_lossy().into_owned();
        let mut lcm_paths = Vec::new();
        let mut scores_path = None;
        let files = std::fs::read_dir(&path)
            .map_err(|e| AtlasError::io(path.display().to_string(), e))?;
        for file in files {
            let file = file.map_err(|e| AtlasError::io(path.display().to_string(), e))?;
            let name = file.file_name().to_string_lossy().into_owned();
            if is_lcm_file(&name) {
                lcm_paths.push(file.path());
            } else if name == "scores.csv" {
                scores_path = Some(file.path());
            }
        }
        if lcm_paths.is_empty() {
            warnings.push(format!(
                "skipping {}: no LCM files (*.lcm.json or lcm_*.json)",
                path.display()
            ));
            continue;
        }
        lcm_paths.sort();
        runs.push(DocumentRun {
            doc_id,
            lcm_paths,
            scores_path,
        });
    }
    runs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    Ok(runs)
}

// Serde-side mirror of the LCM JSON contract, with permissive field aliases.
#[derive(Deserialize)]
struct LcmJson {
    #[serde(default, alias = "document_id")]
    #[allow(dead_code)]
    doc_id: Option<String>,
    #[serde(alias = "instance_id", alias = "id")]
    lcm_instance_id: String,
    #[serde(default)]
    focus: Option<String>,
    #[serde(default)]
    edges: Vec<EdgeJson>,
    #[serde(default)]
    score: Option<f64>,
    #[serde(default)]
    score_raw: Option<f64>,
    #[serde(default)]
    coupling: Option<f64>,
    #[serde(default)]
    radius: Option<i64>,
    #[serde(default)]
    model_size: Option<i64>,
}

#[derive(Deserialize)]
struct EdgeJson {
    #[serde(default, alias = "source", alias = "from", alias = "cause")]
    src: Option<String>,
    #[serde(default, alias = "relation", alias = "label")]
    rel: Option<String>,
    #[serde(default, alias = "target", alias = "to", alias = "effect")]
    dst: Option<String>,
}

/// Parse one LCM JSON document. `doc_id` (the folder name) overrides any
/// doc id embedded in the file.
///
/// All well-formed edge records are preserved, including duplicates
/// (multigraph). Edge records missing src or dst are dropped with a warning;
/// negative score metadata is dropped to absent with a warning.
pub fn parse_lcm(bytes: &[u8], doc_id: &str, warnings: &mut Vec<String>) -> Result<Lcm> {
    let parsed: LcmJson = serde_json::from_slice(bytes).map_err(|e| AtlasError::Json {
        path: doc_id.to_string(),
        message: e.to_string(),
    })?;
    let mut edges = Vec::with_capacity(parsed.edges.len());
    for (i, e) in parsed.edges.into_iter().enumerate() {
        match (e.src, e.dst) {
            (Some(src), Some(dst)) if !src.is_empty() && !dst.is_empty() => {
                edges.push(RawEdge {
                    src,
                    rel: e.rel.unwrap_or_default(),
                    dst,
                });
            }
            _ => warnings.push(format!(
                "{}/{}: edge {} missing src or dst, dropped",
                doc_id, parsed.lcm_instance_id, i
            )),
        }
    }
    let mut check_nonneg = |field: &str, v: Option<f64>| match v {
        Some(x) if x < 0.0 => {
            warnings.push(format!(
                "{}/{}: negative {field} {x}, treated as absent",
                doc_id, parsed.lcm_instance_id
            ));
            None
        }
        other => other,
    };
    let score = check_nonneg("score", parsed.score);
    let score_raw = check_nonneg("score_raw", parsed.score_raw);
    Ok(Lcm {
        doc_id: doc_id.to_string(),
        lcm_instance_id: parsed.lcm_instance_id,
        focus: parsed.focus.unwrap_or_default(),
        edges,
        score,
        score_raw,
        coupling: parsed.coupling,
        radius: parsed.radius,
        model_size: parsed.model_size,
    })
}

/// Parse a scores.csv table (`lcm_instance_id,score,score_raw,coupling`).
pub fn parse_scores_csv(bytes: &[u8]) -> Result<Vec<ScoreRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| AtlasError::Csv(e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_col = col("lcm_instance_id")
        .ok_or_else(|| AtlasError::MissingColumns("lcm_instance_id".into()))?;
    let score_col = col("score");
    let raw_col = col("score_raw");
    let coupling_col = col("coupling");

    let parse_num = |record: &csv::StringRecord, idx: Option<usize>| -> Option<f64> {
        idx.and_then(|i| record.get(i))
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .and_then(|s| s.parse().ok())
    };

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| AtlasError::Csv(e.to_string()))?;
        let id = record.get(id_col).unwrap_or("").trim();
        if id.is_empty() {
            continue;
        }
        rows.push(ScoreRow {
            lcm_instance_id: id.to_string(),
            score: parse_num(&record, score_col),
            score_raw: parse_num(&record, raw_col),
            coupling: parse_num(&record, coupling_col),
        });
    }
    Ok(rows)
}

/// Fill score metadata into LCMs by `lcm_instance_id`.
///
/// A present cell overrides the inline value; absent cells leave the LCM
/// untouched. Unmatched score rows and duplicate ids (last row wins) produce
/// warnings.
pub fn attach_scores(
    mut lcms: Vec<Lcm>,
    scores: &[ScoreRow],
    warnings: &mut Vec<String>,
) -> Vec<Lcm> {
    let mut by_id: BTreeMap<&str, &ScoreRow> = BTreeMap::new();
    for row in scores {
        if by_id.insert(row.lcm_instance_id.as_str(), row).is_some() {
            warnings.push(format!(
                "duplicate score row for {}, last row wins",
                row.lcm_instance_id
            ));
        }
    }
    let mut matched: BTreeMap<&str, bool> =
        by_id.keys().map(|&k| (k, false)).collect();
    for lcm in &mut lcms {
        if let Some(row) = by_id.get(lcm.lcm_instance_id.as_str()) {
            if row.score.is_some() {
                lcm.score = row.score;
            }
            if row.score_raw.is_some() {
                lcm.score_raw = row.score_raw;
            }
            if row.coupling.is_some() {
                lcm.coupling = row.coupling;
            }
            matched.insert(lcm.lcm_instance_id.as_str(), true);
        }
    }
    for (id, was_matched) in matched {
        if !was_matched {
            warnings.push(format!("score row references unknown LCM {id}"));
        }
    }
    lcms
}

/// Read and parse all LCMs of a run, attaching scores.csv when present.
/// Malformed files are skipped with a warning; well-formed ones survive.
pub fn load_run(run: &DocumentRun, warnings: &mut Vec<String>) -> Result<Vec<Lcm>> {
    let mut lcms = Vec::with_capacity(run.lcm_paths.len());
    for path in &run.lcm_paths {
        let bytes =
            std::fs::read(path).map_err(|e| AtlasError::io(path.display().to_string(), e))?;
        match parse_lcm(&bytes, &run.doc_id, warnings) {
            Ok(lcm) => lcms.push(lcm),
            Err(e) => warnings.push(format!("skipping {}: {e}", path.display())),
        }
    }
    if let Some(scores_path) = &run.scores_path {
        let bytes = std::fs::read(scores_path)
            .map_err(|e| AtlasError::io(scores_path.display().to_string(), e))?;
        let rows = parse_scores_csv(&bytes)?;
        lcms = attach_scores(lcms, &rows, warnings);
    }
    Ok(lcms)
}

/// Parse a causal-claims CSV. The header must include `cause`, `effect` and
/// `doc_id`; `sign`, `method` and `year` are optional. Rows with an empty
/// cause or effect are dropped with a warning; row order is preserved.
pub fn parse_claims_csv(bytes: &[u8], warnings: &mut Vec<String>) -> Result<Vec<ClaimRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| AtlasError::Csv(e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);

    let mut missing = Vec::new();
    let cause_col = col("cause");
    let effect_col = col("effect");
    let doc_col = col("doc_id");
    for (name, idx) in [("cause", cause_col), ("effect", effect_col), ("doc_id", doc_col)] {
        if idx.is_none() {
            missing.push(name);
        }
    }
    if !missing.is_empty() {
        return Err(AtlasError::MissingColumns(missing.join(", ")));
    }
    let (cause_col, effect_col, doc_col) =
        (cause_col.unwrap(), effect_col.unwrap(), doc_col.unwrap());
    let sign_col = col("sign");
    let method_col = col("method");
    let year_col = col("year");

    let get_opt = |record: &csv::StringRecord, idx: Option<usize>| -> Option<String> {
        idx.and_then(|i| record.get(i))
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
    };

    let mut rows = Vec::new();
    for (lineno, record) in reader.records().enumerate() {
        let record = record.map_err(|e| AtlasError::Csv(e.to_string()))?;
        let cause = record.get(cause_col).unwrap_or("").trim();
        let effect = record.get(effect_col).unwrap_or("").trim();
        if cause.is_empty() || effect.is_empty() {
            warnings.push(format!("claims row {}: empty cause or effect, dropped", lineno + 2));
            continue;
        }
        let year = match get_opt(&record, year_col) {
            Some(y) => match y.parse::<i64>() {
                Ok(v) => Some(v),
                Err(_) => {
                    warnings.push(format!("claims row {}: non-integer year {y:?}", lineno + 2));
                    None
                }
            },
            None => None,
        };
        rows.push(ClaimRow {
            cause: cause.to_string(),
            effect: effect.to_string(),
            sign: get_opt(&record, sign_col),
            method: get_opt(&record, method_col),
            doc_id: record.get(doc_col).unwrap_or("").trim().to_string(),
            year,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcm_json(edges: &str) -> String {
        format!(
            r#"{{"lcm_instance_id": "m1", "focus": "f", "edges": {edges}, "score": 0.5}}"#
        )
    }

    #[test]
    fn parse_single_edge() {
        let mut w = Vec::new();
        let json = lcm_json(r#"[{"src": "bipedalism", "rel": "increases", "dst": "stride length"}]"#);
        let lcm = parse_lcm(json.as_bytes(), "docA", &mut w).unwrap();
        assert_eq!(lcm.doc_id, "docA");
        assert_eq!(lcm.edges.len(), 1);
        assert_eq!(lcm.edges[0].src, "bipedalism");
        assert_eq!(lcm.score, Some(0.5));
        assert!(w.is_empty());
    }

    #[test]
    fn parse_preserves_duplicate_edges() {
        let edge = r#"{"src": "a", "rel": "causes", "dst": "b"}"#;
        let json = lcm_json(&format!("[{edge}, {edge}]"));
        let mut w = Vec::new();
        let lcm = parse_lcm(json.as_bytes(), "d", &mut w).unwrap();
        assert_eq!(lcm.edges.len(), 2);
    }

    #[test]
    fn parse_empty_edge_list_is_valid() {
        let mut w = Vec::new();
        let lcm = parse_lcm(lcm_json("[]").as_bytes(), "d", &mut w).unwrap();
        assert!(lcm.edges.is_empty());
    }

    #[test]
    fn parse_drops_edges_missing_endpoints() {
        let json = lcm_json(r#"[{"src": "a", "dst": "b"}, {"src": "a"}, {"dst": "", "src": "x"}]"#);
        let mut w = Vec::new();
        let lcm = parse_lcm(json.as_bytes(), "d", &mut w).unwrap();
        assert_eq!(lcm.edges.len(), 1);
        assert_eq!(lcm.edges[0].rel, "");
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn parse_accepts_field_aliases() {
        let json = r#"{"id": "m2", "edges": [{"source": "a", "relation": "causes", "target": "b"}]}"#;
        let mut w = Vec::new();
        let lcm = parse_lcm(json.as_bytes(), "d", &mut w).unwrap();
        assert_eq!(lcm.lcm_instance_id, "m2");
        assert_eq!(lcm.edges[0].rel, "causes");
        assert_eq!(lcm.score, None);
    }

    #[test]
    fn malformed_json_is_an_error() {
        let mut w = Vec::new();
        assert!(parse_lcm(b"{not json", "d", &mut w).is_err());
    }

    #[test]
    fn scan_enumerates_runs_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let doc_b = dir.path().join("docB");
        let doc_a = dir.path().join("docA");
        std::fs::create_dir(&doc_b).unwrap();
        std::fs::create_dir(&doc_a).unwrap();
        std::fs::write(doc_a.join("lcm_002.json"), "{}").unwrap();
        std::fs::write(doc_a.join("lcm_001.json"), "{}").unwrap();
        std::fs::write(doc_b.join("graph.lcm.json"), "{}").unwrap();
        std::fs::write(doc_b.join("scores.csv"), "lcm_instance_id,score\n").unwrap();
        std::fs::write(doc_b.join("notes.txt"), "x").unwrap();

        let mut w = Vec::new();
        let runs = scan_runs_root(dir.path(), &mut w).unwrap();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].doc_id, "docA");
        assert_eq!(runs[0].lcm_paths.len(), 2);
        assert!(runs[0].lcm_paths[0].ends_with("lcm_001.json"));
        assert!(runs[0].scores_path.is_none());
        assert_eq!(runs[1].doc_id, "docB");
        assert!(runs[1].scores_path.is_some());
        assert!(w.is_empty());
    }

    #[test]
    fn scan_empty_root_and_non_lcm_dirs() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = Vec::new();
        assert!(scan_runs_root(dir.path(), &mut w).unwrap().is_empty());

        std::fs::create_dir(dir.path().join("docX")).unwrap();
        std::fs::write(dir.path().join("docX/readme.md"), "x").unwrap();
        let runs = scan_runs_root(dir.path(), &mut w).unwrap();
        assert!(runs.is_empty());
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn scan_missing_root_is_fatal() {
        let mut w = Vec::new();
        assert!(scan_runs_root(Path::new("/nonexistent/path"), &mut w).is_err());
    }

    #[test]
    fn attach_scores_fills_matches_only() {
        let mk = |id: &str| Lcm {
            doc_id: "d".into(),
            lcm_instance_id: id.into(),
            focus: String::new(),
            edges: vec![],
            score: None,
            score_raw: None,
            coupling: None,
            radius: None,
            model_size: None,
        };
        let rows = vec![ScoreRow {
            lcm_instance_id: "m1".into(),
            score: Some(0.7),
            score_raw: Some(1.1),
            coupling: None,
        }];
        let mut w = Vec::new();
        let lcms = attach_scores(vec![mk("m1"), mk("m2")], &rows, &mut w);
        assert_eq!(lcms[0].score, Some(0.7));
        assert_eq!(lcms[1].score, None);
        assert!(w.is_empty());
    }

    #[test]
    fn attach_scores_warns_on_unknown_and_duplicate_ids() {
        let mk = |id: &str| Lcm {
            doc_id: "d".into(),
            lcm_instance_id: id.into(),
            focus: String::new(),
            edges: vec![],
            score: None,
            score_raw: None,
            coupling: None,
            radius: None,
            model_size: None,
        };
        let row = |id: &str, s: f64| ScoreRow {
            lcm_instance_id: id.into(),
            score: Some(s),
            score_raw: None,
            coupling: None,
        };
        let mut w = Vec::new();
        let lcms = attach_scores(
            vec![mk("m1")],
            &[row("m1", 0.1), row("m1", 0.2), row("ghost", 0.3)],
            &mut w,
        );
        assert_eq!(lcms[0].score, Some(0.2)); // last row wins
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn claims_csv_roundtrip_and_filters() {
        let csv = "cause,effect,sign,method,doc_id,year\n\
                   monetary policy,inflation,+,IV,p1,1998\n\
                   money growth,inflation,,DID,p2,\n\
                   ,inflation,,,p3,2001\n";
        let mut w = Vec::new();
        let rows = parse_claims_csv(csv.as_bytes(), &mut w).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].cause, "monetary policy");
        assert_eq!(rows[0].year, Some(1998));
        assert_eq!(rows[0].sign.as_deref(), Some("+"));
        assert_eq!(rows[1].sign, None);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn claims_csv_missing_doc_column_is_fatal() {
        let csv = "cause,effect\na,b\n";
        let mut w = Vec::new();
        let err = parse_claims_csv(csv.as_bytes(), &mut w).unwrap_err();
        assert!(matches!(err, AtlasError::MissingColumns(_)));
    }
}
