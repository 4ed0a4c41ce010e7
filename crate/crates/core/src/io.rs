//! Persistence: columnar table files (Parquet) with a CSV fallback, the
//! atlas manifest, and machine-readable stats reports.
//!
//! File layout in an atlas directory:
//!
//! ```text
//! atlas_nodes.parquet        atlas_edges.parquet
//! atlas_edge_support.parquet atlas_scc.parquet (optional)
//! manifest.json
//! ```
//!
//! Tables are written through a temp-file-and-rename step so a crashed write
//! never leaves a torn table, and every file carries a sha256 digest in the
//! manifest that is verified on load. Writes take an exclusive lock file in
//! the output directory; readers need no locks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use arrow_array::{ArrayRef, Float64Array, Int64Array, RecordBatch, StringArray, UInt64Array};
use arrow_schema::{DataType, Field, Schema};
use parquet::arrow::arrow_reader::ParquetRecordBatchReaderBuilder;
use parquet::arrow::ArrowWriter;
use parquet::basic::Compression;
use parquet::file::properties::WriterProperties;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::{atlas_summary, AtlasSummary, SccRow};
use crate::builder::{Atlas, BuildConfig, EdgeRow, NodeRow, SupportRow};
use crate::canon::{EdgeId, NodeId, Polarity, RelType};
use crate::error::{AtlasError, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const NODES_TABLE: &str = "atlas_nodes";
pub const EDGES_TABLE: &str = "atlas_edges";
pub const SUPPORT_TABLE: &str = "atlas_edge_support";
pub const SCC_TABLE: &str = "atlas_scc";

/// On-disk table encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Parquet,
    Csv,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Parquet => "parquet",
            TableFormat::Csv => "csv",
        }
    }

    pub fn from_name(name: &str) -> Option<TableFormat> {
        match name {
            "parquet" => Some(TableFormat::Parquet),
            "csv" => Some(TableFormat::Csv),
            _ => None,
        }
    }
}

/// Manifest entry for one table file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    pub file: String,
    pub rows: u64,
    pub sha256: String,
}

/// Serializable echo of the compilation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub tau: usize,
    pub rel_whitelist: Option<Vec<String>>,
    pub rel_blacklist: Vec<String>,
    pub default_weight: f64,
    pub epsilon: f64,
    pub min_score: Option<f64>,
    pub max_radius: Option<i64>,
    pub max_model_size: Option<i64>,
}

impl From<&BuildConfig> for ConfigEcho {
    fn from(cfg: &BuildConfig) -> Self {
        ConfigEcho {
            tau: cfg.tau,
            rel_whitelist: cfg
                .rel_whitelist
                .as_ref()
                .map(|s| s.iter().map(|r| r.name().to_string()).collect()),
            rel_blacklist: cfg
                .rel_blacklist
                .iter()
                .map(|r| r.name().to_string())
                .collect(),
            default_weight: cfg.default_weight,
            epsilon: cfg.epsilon,
            min_score: cfg.min_score,
            max_radius: cfg.max_radius,
            max_model_size: cfg.max_model_size,
        }
    }
}

/// The atlas manifest, written as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtlasManifest {
    pub schema_version: u32,
    pub atlas_id: String,
    pub format: TableFormat,
    pub tables: BTreeMap<String, TableEntry>,
    pub build_config: Option<ConfigEcho>,
}

/// Exclusive write lock on an atlas directory, released on drop.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<DirLock> {
        let path = dir.join(".lock");
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(AtlasError::Locked(dir.display().to_string()))
            }
            Err(e) => Err(AtlasError::io(path.display().to_string(), e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

// ---------------------------------------------------------------------------
// label_examples encoding
// ---------------------------------------------------------------------------

/// Join label examples into one string, escaping `\` and `;` so the list
/// survives the CSV fallback loss-free.
pub fn encode_examples(examples: &[String]) -> String {
    examples
        .iter()
        .map(|e| e.replace('\\', "\\\\").replace(';', "\\;"))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Inverse of [`encode_examples`].
pub fn decode_examples(encoded: &str) -> Vec<String> {
    if encoded.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = encoded.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                if let Some(&next) = chars.peek() {
                    current.push(next);
                    chars.next();
                }
            }
            ';' if chars.peek() == Some(&' ') => {
                chars.next();
                out.push(std::mem::take(&mut current));
            }
            _ => current.push(c),
        }
    }
    out.push(current);
    out
}

// ---------------------------------------------------------------------------
// Column builders shared by both formats
// ---------------------------------------------------------------------------

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn node_columns() -> &'static [&'static str] {
    &["node_id", "label_canon", "label_examples", "deg_in", "deg_out"]
}

fn edge_columns() -> &'static [&'static str] {
    &[
        "edge_id",
        "src_id",
        "dst_id",
        "rel_type",
        "polarity",
        "support_lcms",
        "support_docs",
        "score_sum",
        "score_mean",
        "score_max",
        "pol_mass_inc",
        "pol_mass_dec",
        "pol_mass_unk",
        "controversy",
    ]
}

fn support_columns() -> &'static [&'static str] {
    &[
        "edge_id",
        "doc_id",
        "atlas_id",
        "lcm_instance_id",
        "score",
        "score_raw",
        "coupling",
        "year",
        "method",
        "sign",
    ]
}

fn scc_columns() -> &'static [&'static str] {
    &["scc_id", "n_nodes", "n_edges", "support_docs", "top_nodes"]
}

fn nodes_batch(nodes: &[NodeRow]) -> RecordBatch {
    let schema = Schema::new(vec![
        Field::new("node_id", DataType::UInt64, false),
        Field::new("label_canon", DataType::Utf8, false),
        Field::new("label_examples", DataType::Utf8, false),
        Field::new("deg_in", DataType::Int64, false),
        Field::new("deg_out", DataType::Int64, false),
    ]);
    let columns: Vec<ArrayRef> = vec![
        Arc::new(UInt64Array::from_iter_values(nodes.iter().map(|n| n.node_id.0))),
        Arc::new(StringArray::from_iter_values(
            nodes.iter().map(|n| n.label_canon.as_str()),
        )),
        Arc::new(StringArray::from_iter_values(
            nodes.iter().map(|n| encode_examples(&n.label_examples)),
        )),
        Arc::new(Int64Array::from_iter_values(nodes.iter().map(|n| n.deg_in as i64))),
        Arc::new(Int64Array::from_iter_values(nodes.iter().map(|n| n.deg_out as i64))),
    ];
    RecordBatch::try_new(Arc::new(schema), columns).expect("nodes batch")
}

fn edges_batch(edges: &[EdgeRow]) -> RecordBatch {
    let schema = Schema::new(vec![
        Field::new("edge_id", DataType::UInt64, false),
        Field::new("src_id", DataType::UInt64, false),
        Field::new("dst_id", DataType::UInt64, false),
        Field::new("rel_type", DataType::Utf8, false),
        Field::new("polarity", DataType::Utf8, false),
        Field::new("support_lcms", DataType::Int64, false),
        Field::new("support_docs", DataType::Int64, false),
        Field::new("score_sum", DataType::Float64, false),
        Field::new("score_mean", DataType::Float64, false),
        Field::new("score_max", DataType::Float64, false),
        Field::new("pol_mass_inc", DataType::Float64, false),
        Field::new("pol_mass_dec", DataType::Float64, false),
        Field::new("pol_mass_unk", DataType::Float64, false),
        Field::new("controversy", DataType::Float64, false),
    ]);
    let columns: Vec<ArrayRef> = vec![
        Arc::new(UInt64Array::from_iter_values(edges.iter().map(|e| e.edge_id.0))),
        Arc::new(UInt64Array::from_iter_values(edges.iter().map(|e| e.src_id.0))),
        Arc::new(UInt64Array::from_iter_values(edges.iter().map(|e| e.dst_id.0))),
        Arc::new(StringArray::from_iter_values(
            edges.iter().map(|e| e.rel_type.name()),
        )),
        Arc::new(StringArray::from_iter_values(
            edges.iter().map(|e| e.polarity.as_str()),
        )),
        Arc::new(Int64Array::from_iter_values(
            edges.iter().map(|e| e.support_lcms as i64),
        )),
        Arc::new(Int64Array::from_iter_values(
            edges.iter().map(|e| e.support_docs as i64),
        )),
        Arc::new(Float64Array::from_iter_values(edges.iter().map(|e| e.score_sum))),
        Arc::new(Float64Array::from_iter_values(edges.iter().map(|e| e.score_mean))),
        Arc::new(Float64Array::from_iter_values(edges.iter().map(|e| e.score_max))),
        Arc::new(Float64Array::from_iter_values(
            edges.iter().map(|e| e.pol_mass_inc),
        )),
        Arc::new(Float64Array::from_iter_values(
            edges.iter().map(|e| e.pol_mass_dec),
        )),
        Arc::new(Float64Array::from_iter_values(
            edges.iter().map(|e| e.pol_mass_unk),
        )),
        Arc::new(Float64Array::from_iter_values(
            edges.iter().map(|e| e.controversy),
        )),
    ];
    RecordBatch::try_new(Arc::new(schema), columns).expect("edges batch")
}

fn support_batch(rows: &[SupportRow]) -> RecordBatch {
    let schema = Schema::new(vec![
        Field::new("edge_id", DataType::UInt64, false),
        Field::new("doc_id", DataType::Utf8, false),
        Field::new("atlas_id", DataType::Utf8, false),
        Field::new("lcm_instance_id", DataType::Utf8, false),
        Field::new("score", DataType::Float64, true),
        Field::new("score_raw", DataType::Float64, true),
        Field::new("coupling", DataType::Float64, true),
        Field::new("year", DataType::Int64, true),
        Field::new("method", DataType::Utf8, true),
        Field::new("sign", DataType::Utf8, true),
    ]);
    let columns: Vec<ArrayRef> = vec![
        Arc::new(UInt64Array::from_iter_values(rows.iter().map(|r| r.edge_id.0))),
        Arc::new(StringArray::from_iter_values(
            rows.iter().map(|r| r.doc_id.as_str()),
        )),
        Arc::new(StringArray::from_iter_values(
            rows.iter().map(|r| r.atlas_id.as_str()),
        )),
        Arc::new(StringArray::from_iter_values(
            rows.iter().map(|r| r.lcm_instance_id.as_str()),
        )),
        Arc::new(Float64Array::from(
            rows.iter().map(|r| r.score).collect::<Vec<_>>(),
        )),
        Arc::new(Float64Array::from(
            rows.iter().map(|r| r.score_raw).collect::<Vec<_>>(),
        )),
        Arc::new(Float64Array::from(
            rows.iter().map(|r| r.coupling).collect::<Vec<_>>(),
        )),
        Arc::new(Int64Array::from(
            rows.iter().map(|r| r.year).collect::<Vec<_>>(),
        )),
        Arc::new(StringArray::from(
            rows.iter().map(|r| r.method.clone()).collect::<Vec<_>>(),
        )),
        Arc::new(StringArray::from(
            rows.iter().map(|r| r.sign.clone()).collect::<Vec<_>>(),
        )),
    ];
    RecordBatch::try_new(Arc::new(schema), columns).expect("support batch")
}

fn scc_batch(rows: &[SccRow]) -> RecordBatch {
    let schema = Schema::new(vec![
        Field::new("scc_id", DataType::Int64, false),
        Field::new("n_nodes", DataType::Int64, false),
        Field::new("n_edges", DataType::Int64, false),
        Field::new("support_docs", DataType::Int64, false),
        Field::new("top_nodes", DataType::Utf8, false),
    ]);
    let columns: Vec<ArrayRef> = vec![
        Arc::new(Int64Array::from_iter_values(rows.iter().map(|r| r.scc_id as i64))),
        Arc::new(Int64Array::from_iter_values(rows.iter().map(|r| r.n_nodes as i64))),
        Arc::new(Int64Array::from_iter_values(rows.iter().map(|r| r.n_edges as i64))),
        Arc::new(Int64Array::from_iter_values(
            rows.iter().map(|r| r.support_docs as i64),
        )),
        Arc::new(StringArray::from_iter_values(
            rows.iter().map(|r| encode_examples(&r.top_nodes)),
        )),
    ];
    RecordBatch::try_new(Arc::new(schema), columns).expect("scc batch")
}

// ---------------------------------------------------------------------------
// Writing
// ---------------------------------------------------------------------------

fn write_parquet(path: &Path, batch: &RecordBatch) -> Result<()> {
    let file = File::create(path).map_err(|e| AtlasError::io(path.display().to_string(), e))?;
    let props = WriterProperties::builder()
        .set_compression(Compression::UNCOMPRESSED)
        .build();
    let mut writer = ArrowWriter::try_new(file, batch.schema(), Some(props))
        .map_err(|e| AtlasError::CorruptAtlas(format!("parquet writer: {e}")))?;
    writer
        .write(batch)
        .map_err(|e| AtlasError::CorruptAtlas(format!("parquet write: {e}")))?;
    writer
        .close()
        .map_err(|e| AtlasError::CorruptAtlas(format!("parquet close: {e}")))?;
    Ok(())
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let file = File::create(path).map_err(|e| AtlasError::io(path.display().to_string(), e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer
        .write_record(header)
        .map_err(|e| AtlasError::Csv(e.to_string()))?;
    for row in rows {
        writer
            .write_record(&row)
            .map_err(|e| AtlasError::Csv(e.to_string()))?;
    }
    writer.flush().map_err(|e| AtlasError::io(path.display().to_string(), e))?;
    Ok(())
}

fn csv_rows_nodes(nodes: &[NodeRow]) -> Vec<Vec<String>> {
    nodes
        .iter()
        .map(|n| {
            vec![
                n.node_id.0.to_string(),
                n.label_canon.clone(),
                encode_examples(&n.label_examples),
                n.deg_in.to_string(),
                n.deg_out.to_string(),
            ]
        })
        .collect()
}

fn csv_rows_edges(edges: &[EdgeRow]) -> Vec<Vec<String>> {
    edges
        .iter()
        .map(|e| {
            vec![
                e.edge_id.0.to_string(),
                e.src_id.0.to_string(),
                e.dst_id.0.to_string(),
                e.rel_type.name().to_string(),
                e.polarity.as_str().to_string(),
                e.support_lcms.to_string(),
                e.support_docs.to_string(),
                fmt_f64(e.score_sum),
                fmt_f64(e.score_mean),
                fmt_f64(e.score_max),
                fmt_f64(e.pol_mass_inc),
                fmt_f64(e.pol_mass_dec),
                fmt_f64(e.pol_mass_unk),
                fmt_f64(e.controversy),
            ]
        })
        .collect()
}

fn csv_rows_support(rows: &[SupportRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.edge_id.0.to_string(),
                r.doc_id.clone(),
                r.atlas_id.clone(),
                r.lcm_instance_id.clone(),
                fmt_opt_f64(r.score),
                fmt_opt_f64(r.score_raw),
                fmt_opt_f64(r.coupling),
                r.year.map(|y| y.to_string()).unwrap_or_default(),
                r.method.clone().unwrap_or_default(),
                r.sign.clone().unwrap_or_default(),
            ]
        })
        .collect()
}

fn csv_rows_scc(rows: &[SccRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.scc_id.to_string(),
                r.n_nodes.to_string(),
                r.n_edges.to_string(),
                r.support_docs.to_string(),
                encode_examples(&r.top_nodes),
            ]
        })
        .collect()
}

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| AtlasError::io(path.display().to_string(), e))?;
    let digest = Sha256::digest(&bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        write!(out, "{b:02x}").expect("hex write");
    }
    Ok(out)
}

/// Write all tables of an atlas into `dir`, returning the manifest.
///
/// Row order is the builder's canonical sort, so writing the same atlas twice
/// produces identical digests. Each table goes through a temp file and an
/// atomic rename.
pub fn write_tables(
    atlas: &Atlas,
    dir: &Path,
    format: TableFormat,
    cfg: Option<&BuildConfig>,
) -> Result<AtlasManifest> {
    std::fs::create_dir_all(dir).map_err(|e| AtlasError::io(dir.display().to_string(), e))?;
    let _lock = DirLock::acquire(dir)?;

    let mut tables = BTreeMap::new();
    let mut plan: Vec<(&str, u64)> = vec![
        (NODES_TABLE, atlas.nodes().len() as u64),
        (EDGES_TABLE, atlas.edges().len() as u64),
        (SUPPORT_TABLE, atlas.support().len() as u64),
    ];
    if let Some(scc) = atlas.scc() {
        plan.push((SCC_TABLE, scc.len() as u64));
    }

    for (name, rows) in plan {
        let file_name = format!("{name}.{}", format.extension());
        let tmp = dir.join(format!("{file_name}.tmp"));
        let final_path = dir.join(&file_name);
        match (format, name) {
            (TableFormat::Parquet, NODES_TABLE) => write_parquet(&tmp, &nodes_batch(atlas.nodes()))?,
            (TableFormat::Parquet, EDGES_TABLE) => write_parquet(&tmp, &edges_batch(atlas.edges()))?,
            (TableFormat::Parquet, SUPPORT_TABLE) => {
                write_parquet(&tmp, &support_batch(atlas.support()))?
            }
            (TableFormat::Parquet, SCC_TABLE) => {
                write_parquet(&tmp, &scc_batch(atlas.scc().unwrap_or(&[])))?
            }
            (TableFormat::Csv, NODES_TABLE) => {
                write_csv(&tmp, node_columns(), csv_rows_nodes(atlas.nodes()))?
            }
            (TableFormat::Csv, EDGES_TABLE) => {
                write_csv(&tmp, edge_columns(), csv_rows_edges(atlas.edges()))?
            }
            (TableFormat::Csv, SUPPORT_TABLE) => {
                write_csv(&tmp, support_columns(), csv_rows_support(atlas.support()))?
            }
            (TableFormat::Csv, SCC_TABLE) => {
                write_csv(&tmp, scc_columns(), csv_rows_scc(atlas.scc().unwrap_or(&[])))?
            }
            _ => unreachable!("unknown table {name}"),
        }
        std::fs::rename(&tmp, &final_path)
            .map_err(|e| AtlasError::io(final_path.display().to_string(), e))?;
        tables.insert(
            name.to_string(),
            TableEntry {
                file: file_name,
                rows,
                sha256: sha256_hex(&final_path)?,
            },
        );
    }

    let manifest = AtlasManifest {
        schema_version: SCHEMA_VERSION,
        atlas_id: atlas.atlas_id.clone(),
        format,
        tables,
        build_config: cfg.map(ConfigEcho::from),
    };
    let manifest_path = dir.join("manifest.json");
    let tmp = dir.join("manifest.json.tmp");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| AtlasError::CorruptAtlas(e.to_string()))?;
    let mut file = File::create(&tmp).map_err(|e| AtlasError::io(tmp.display().to_string(), e))?;
    file.write_all(json.as_bytes())
        .and_then(|_| file.write_all(b"\n"))
        .map_err(|e| AtlasError::io(tmp.display().to_string(), e))?;
    std::fs::rename(&tmp, &manifest_path)
        .map_err(|e| AtlasError::io(manifest_path.display().to_string(), e))?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// Reading
// ---------------------------------------------------------------------------

pub fn read_manifest(dir: &Path) -> Result<AtlasManifest> {
    let path = dir.join("manifest.json");
    let bytes = std::fs::read(&path).map_err(|e| AtlasError::io(path.display().to_string(), e))?;
    let manifest: AtlasManifest = serde_json::from_slice(&bytes)
        .map_err(|e| AtlasError::CorruptAtlas(format!("manifest.json: {e}")))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(AtlasError::Version {
            found: manifest.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(manifest)
}

struct RawTable {
    columns: Vec<String>,
    rows: Vec<Vec<Option<String>>>,
}

impl RawTable {
    fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| AtlasError::CorruptAtlas(format!("missing column {name}")))
    }

    fn get<'a>(&self, row: &'a [Option<String>], idx: usize) -> Option<&'a str> {
        row.get(idx).and_then(|v| v.as_deref())
    }

    fn req<'a>(&self, row: &'a [Option<String>], idx: usize, what: &str) -> Result<&'a str> {
        row.get(idx)
            .and_then(|v| v.as_deref())
            .ok_or_else(|| AtlasError::CorruptAtlas(format!("null {what}")))
    }
}

fn parse_u64(s: &str, what: &str) -> Result<u64> {
    s.parse()
        .map_err(|_| AtlasError::CorruptAtlas(format!("invalid {what}: {s:?}")))
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| AtlasError::CorruptAtlas(format!("invalid {what}: {s:?}")))
}

fn read_raw_csv(path: &Path) -> Result<RawTable> {
    let file = File::open(path).map_err(|e| AtlasError::io(path.display().to_string(), e))?;
    let mut reader = csv::Reader::from_reader(file);
    let columns: Vec<String> = reader
        .headers()
        .map_err(|e| AtlasError::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| AtlasError::Csv(e.to_string()))?;
        rows.push(
            record
                .iter()
                .map(|v| if v.is_empty() { None } else { Some(v.to_string()) })
                .collect(),
        );
    }
    Ok(RawTable { columns, rows })
}

fn read_raw_parquet(path: &Path) -> Result<RawTable> {
    use arrow_array::cast::AsArray;
    use arrow_array::types::{Float64Type, Int64Type, UInt64Type};
    use arrow_array::Array;

    let file = File::open(path).map_err(|e| AtlasError::io(path.display().to_string(), e))?;
    let reader = ParquetRecordBatchReaderBuilder::try_new(file)
        .and_then(|b| b.build())
        .map_err(|e| AtlasError::CorruptAtlas(format!("{}: {e}", path.display())))?;

    let mut columns = Vec::new();
    let mut rows: Vec<Vec<Option<String>>> = Vec::new();
    for batch in reader {
        let batch = batch.map_err(|e| AtlasError::CorruptAtlas(format!("{}: {e}", path.display())))?;
        if columns.is_empty() {
            columns = batch
                .schema()
                .fields()
                .iter()
                .map(|f| f.name().clone())
                .collect();
        }
        let n = batch.num_rows();
        let mut cells: Vec<Vec<Option<String>>> = vec![vec![None; batch.num_columns()]; n];
        for (ci, array) in batch.columns().iter().enumerate() {
            match array.data_type() {
                DataType::UInt64 => {
                    let a = array.as_primitive::<UInt64Type>();
                    for (ri, cell) in cells.iter_mut().enumerate() {
                        if a.is_valid(ri) {
                            cell[ci] = Some(a.value(ri).to_string());
                        }
                    }
                }
                DataType::Int64 => {
                    let a = array.as_primitive::<Int64Type>();
                    for (ri, cell) in cells.iter_mut().enumerate() {
                        if a.is_valid(ri) {
                            cell[ci] = Some(a.value(ri).to_string());
                        }
                    }
                }
                DataType::Float64 => {
                    let a = array.as_primitive::<Float64Type>();
                    for (ri, cell) in cells.iter_mut().enumerate() {
                        if a.is_valid(ri) {
                            cell[ci] = Some(format!("{}", a.value(ri)));
                        }
                    }
                }
                DataType::Utf8 => {
                    let a = array.as_string::<i32>();
                    for (ri, cell) in cells.iter_mut().enumerate() {
                        if a.is_valid(ri) {
                            cell[ci] = Some(a.value(ri).to_string());
                        }
                    }
                }
                other => {
                    return Err(AtlasError::CorruptAtlas(format!(
                        "unsupported column type {other} in {}",
                        path.display()
                    )))
                }
            }
        }
        rows.extend(cells);
    }
    Ok(RawTable { columns, rows })
}

fn read_raw(path: &Path, format: TableFormat) -> Result<RawTable> {
    match format {
        TableFormat::Parquet => read_raw_parquet(path),
        TableFormat::Csv => read_raw_csv(path),
    }
}

fn verify_table(dir: &Path, entry: &TableEntry) -> Result<PathBuf> {
    let path = dir.join(&entry.file);
    let digest = sha256_hex(&path)?;
    if digest != entry.sha256 {
        return Err(AtlasError::CorruptAtlas(format!(
            "digest mismatch for {}: expected {}, found {digest}",
            entry.file, entry.sha256
        )));
    }
    Ok(path)
}

/// Load an atlas directory, verifying digests, row counts, the schema
/// version, and referential integrity. A missing SCC table loads as absent.
pub fn read_tables(dir: &Path) -> Result<Atlas> {
    let manifest = read_manifest(dir)?;
    let entry = |name: &str| -> Result<&TableEntry> {
        manifest
            .tables
            .get(name)
            .ok_or_else(|| AtlasError::CorruptAtlas(format!("manifest lacks table {name}")))
    };

    // nodes
    let raw = read_raw(&verify_table(dir, entry(NODES_TABLE)?)?, manifest.format)?;
    let (c_id, c_label, c_ex, c_in, c_out) = (
        raw.column("node_id")?,
        raw.column("label_canon")?,
        raw.column("label_examples")?,
        raw.column("deg_in")?,
        raw.column("deg_out")?,
    );
    let mut nodes = Vec::with_capacity(raw.rows.len());
    for row in &raw.rows {
        nodes.push(NodeRow {
            node_id: NodeId(parse_u64(raw.req(row, c_id, "node_id")?, "node_id")?),
            label_canon: raw.req(row, c_label, "label_canon")?.to_string(),
            label_examples: decode_examples(raw.get(row, c_ex).unwrap_or("")),
            deg_in: parse_u64(raw.req(row, c_in, "deg_in")?, "deg_in")?,
            deg_out: parse_u64(raw.req(row, c_out, "deg_out")?, "deg_out")?,
        });
    }
    if nodes.len() as u64 != entry(NODES_TABLE)?.rows {
        return Err(AtlasError::CorruptAtlas("node row count mismatch".into()));
    }

    // edges
    let raw = read_raw(&verify_table(dir, entry(EDGES_TABLE)?)?, manifest.format)?;
    let cols: Vec<usize> = edge_columns()
        .iter()
        .map(|c| raw.column(c))
        .collect::<Result<_>>()?;
    let mut edges = Vec::with_capacity(raw.rows.len());
    for row in &raw.rows {
        let rel_name = raw.req(row, cols[3], "rel_type")?;
        let pol_name = raw.req(row, cols[4], "polarity")?;
        edges.push(EdgeRow {
            edge_id: EdgeId(parse_u64(raw.req(row, cols[0], "edge_id")?, "edge_id")?),
            src_id: NodeId(parse_u64(raw.req(row, cols[1], "src_id")?, "src_id")?),
            dst_id: NodeId(parse_u64(raw.req(row, cols[2], "dst_id")?, "dst_id")?),
            rel_type: RelType::from_name(rel_name)
                .ok_or_else(|| AtlasError::CorruptAtlas(format!("unknown rel_type {rel_name:?}")))?,
            polarity: Polarity::from_str_opt(pol_name)
                .ok_or_else(|| AtlasError::CorruptAtlas(format!("unknown polarity {pol_name:?}")))?,
            support_lcms: parse_u64(raw.req(row, cols[5], "support_lcms")?, "support_lcms")?,
            support_docs: parse_u64(raw.req(row, cols[6], "support_docs")?, "support_docs")?,
            score_sum: parse_f64(raw.req(row, cols[7], "score_sum")?, "score_sum")?,
            score_mean: parse_f64(raw.req(row, cols[8], "score_mean")?, "score_mean")?,
            score_max: parse_f64(raw.req(row, cols[9], "score_max")?, "score_max")?,
            pol_mass_inc: parse_f64(raw.req(row, cols[10], "pol_mass_inc")?, "pol_mass_inc")?,
            pol_mass_dec: parse_f64(raw.req(row, cols[11], "pol_mass_dec")?, "pol_mass_dec")?,
            pol_mass_unk: parse_f64(raw.req(row, cols[12], "pol_mass_unk")?, "pol_mass_unk")?,
            controversy: parse_f64(raw.req(row, cols[13], "controversy")?, "controversy")?,
        });
    }
    if edges.len() as u64 != entry(EDGES_TABLE)?.rows {
        return Err(AtlasError::CorruptAtlas("edge row count mismatch".into()));
    }

    // support
    let raw = read_raw(&verify_table(dir, entry(SUPPORT_TABLE)?)?, manifest.format)?;
    let cols: Vec<usize> = support_columns()
        .iter()
        .map(|c| raw.column(c))
        .collect::<Result<_>>()?;
    let mut support = Vec::with_capacity(raw.rows.len());
    for row in &raw.rows {
        support.push(SupportRow {
            edge_id: EdgeId(parse_u64(raw.req(row, cols[0], "edge_id")?, "edge_id")?),
            doc_id: raw.req(row, cols[1], "doc_id")?.to_string(),
            atlas_id: raw.get(row, cols[2]).unwrap_or("").to_string(),
            lcm_instance_id: raw.req(row, cols[3], "lcm_instance_id")?.to_string(),
            score: raw.get(row, cols[4]).map(|s| parse_f64(s, "score")).transpose()?,
            score_raw: raw
                .get(row, cols[5])
                .map(|s| parse_f64(s, "score_raw"))
                .transpose()?,
            coupling: raw
                .get(row, cols[6])
                .map(|s| parse_f64(s, "coupling"))
                .transpose()?,
            year: raw
                .get(row, cols[7])
                .map(|s| {
                    s.parse::<i64>()
                        .map_err(|_| AtlasError::CorruptAtlas(format!("invalid year {s:?}")))
                })
                .transpose()?,
            method: raw.get(row, cols[8]).map(str::to_string),
            sign: raw.get(row, cols[9]).map(str::to_string),
        });
    }
    if support.len() as u64 != entry(SUPPORT_TABLE)?.rows {
        return Err(AtlasError::CorruptAtlas("support row count mismatch".into()));
    }

    // optional scc
    let scc = match manifest.tables.get(SCC_TABLE) {
        None => None,
        Some(scc_entry) => {
            let raw = read_raw(&verify_table(dir, scc_entry)?, manifest.format)?;
            let cols: Vec<usize> = scc_columns()
                .iter()
                .map(|c| raw.column(c))
                .collect::<Result<_>>()?;
            let mut rows = Vec::with_capacity(raw.rows.len());
            for row in &raw.rows {
                rows.push(SccRow {
                    scc_id: parse_u64(raw.req(row, cols[0], "scc_id")?, "scc_id")?,
                    n_nodes: parse_u64(raw.req(row, cols[1], "n_nodes")?, "n_nodes")?,
                    n_edges: parse_u64(raw.req(row, cols[2], "n_edges")?, "n_edges")?,
                    support_docs: parse_u64(raw.req(row, cols[3], "support_docs")?, "support_docs")?,
                    top_nodes: decode_examples(raw.get(row, cols[4]).unwrap_or("")),
                });
            }
            Some(rows)
        }
    };

    Atlas::new(manifest.atlas_id, nodes, edges, support, scc)
}

// ---------------------------------------------------------------------------
// Stats report
// ---------------------------------------------------------------------------

/// Rounded display strings alongside the full-precision numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisplayBlock {
    pub top1_share: String,
    pub top5_share: String,
    pub p50: String,
    pub p90: String,
    pub p99: String,
    pub tail_ratio: String,
}

/// The machine-readable stats document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsReport {
    pub atlas_id: String,
    #[serde(flatten)]
    pub summary: AtlasSummary,
    pub n_scc: Option<u64>,
    pub display: DisplayBlock,
}

/// Round to four significant digits for display, trailing zeros trimmed.
fn round_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (3 - magnitude).max(0) as usize;
    let mut s = format!("{v:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

/// Build the stats report for an atlas.
pub fn stats_report(atlas: &Atlas) -> Result<StatsReport> {
    let summary = atlas_summary(atlas)?;
    let display = DisplayBlock {
        top1_share: round_sig(summary.top1_share),
        top5_share: round_sig(summary.top5_share),
        p50: round_sig(summary.p50),
        p90: round_sig(summary.p90),
        p99: round_sig(summary.p99),
        tail_ratio: round_sig(summary.tail_ratio),
    };
    Ok(StatsReport {
        atlas_id: atlas.atlas_id.clone(),
        summary,
        n_scc: atlas.scc().map(|s| s.len() as u64),
        display,
    })
}

/// Serialize a stats report as newline-terminated JSON with stable key order.
pub fn stats_report_json(atlas: &Atlas) -> Result<String> {
    let report = stats_report(atlas)?;
    let mut json = serde_json::to_string_pretty(&report)
        .map_err(|e| AtlasError::CorruptAtlas(e.to_string()))?;
    json.push('\n');
    Ok(json)
}
