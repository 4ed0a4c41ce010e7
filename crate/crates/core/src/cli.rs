//! Command-line surface: build, ingest-claims, merge, stats, query,
//! intervene, emit-sql.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analytics;
use crate::builder::{build_from_claims, build_from_runs_root, Atlas, BuildConfig};
use crate::canon::{RelLexicon, RelType};
use crate::error::{AtlasError, Result};
use crate::ingest;
use crate::io::{self, TableFormat};
use crate::merge::merge_atlases;
use crate::query::{
    backbone, counterfactual_diff, emit_sql, hubs, mechanisms, mutual_influence, provenance,
    two_hop_paths, BackboneRow, EdgeView, SqlKind, SqlParams,
};

#[derive(Parser)]
#[command(
    name = "causal-atlas",
    version,
    about = "Compile local causal model corpora into a queryable causal database"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct BuildOpts {
    /// Output atlas directory.
    #[arg(short = 'o', long = "out")]
    out: PathBuf,
    /// Minimum edge count per LCM; smaller models are skipped.
    #[arg(long, default_value_t = 1)]
    tau: usize,
    /// Only aggregate these relation types (comma separated).
    #[arg(long, value_delimiter = ',')]
    rel_whitelist: Vec<String>,
    /// Exclude these relation types (comma separated).
    #[arg(long, value_delimiter = ',')]
    rel_blacklist: Vec<String>,
    /// Replace the built-in relation lexicon (phrase,RELTYPE,polarity lines).
    #[arg(long)]
    rel_lexicon: Option<PathBuf>,
    /// Atlas identifier; defaults to the output directory name.
    #[arg(long)]
    atlas_id: Option<String>,
    /// Table file format.
    #[arg(long, default_value = "parquet")]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a document-runs directory of LCM JSON files into an atlas.
    Build {
        /// Directory containing per-document LCM folders.
        runs_root: PathBuf,
        #[command(flatten)]
        opts: BuildOpts,
    },
    /// Compile a causal-claims CSV corpus into an atlas.
    IngestClaims {
        /// CSV file with at least cause, effect and doc_id columns.
        csv: PathBuf,
        #[command(flatten)]
        opts: BuildOpts,
    },
    /// Merge atlas directories into one corpus atlas.
    Merge {
        /// Input atlas directories.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Output atlas directory.
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
        /// Keep doc ids as-is instead of prefixing them with the atlas id.
        #[arg(long)]
        no_doc_prefix: bool,
        /// Table file format.
        #[arg(long, default_value = "parquet")]
        format: String,
    },
    /// Print summary statistics of an atlas.
    Stats {
        dir: PathBuf,
        /// Emit the full machine-readable JSON report.
        #[arg(long)]
        json: bool,
    },
    /// Run a query over an atlas directory.
    Query {
        dir: PathBuf,
        /// backbone | hubs | mechanisms | provenance | scc | two_hop | mutual
        kind: String,
        /// Source concept for mechanisms queries (canonical label).
        #[arg(long)]
        src: Option<String>,
        #[arg(long, default_value_t = 20)]
        limit: usize,
        /// Edge id for provenance queries.
        #[arg(long)]
        edge_id: Option<u64>,
    },
    /// Apply interventions, then run a query on the rewritten view.
    Intervene {
        dir: PathBuf,
        /// Remove all outgoing edges of this concept (repeatable).
        #[arg(long = "do-cut")]
        do_cut: Vec<String>,
        /// Scale outgoing mass of a concept: LABEL:LAMBDA (repeatable).
        #[arg(long = "soft")]
        soft: Vec<String>,
        /// Query to run on the intervened view:
        /// backbone | hubs | mechanisms | two_hop | mutual
        #[arg(long = "then", default_value = "backbone")]
        then: String,
        /// Source concept for mechanisms queries.
        #[arg(long)]
        src: Option<String>,
        #[arg(long, default_value_t = 20)]
        limit: usize,
        /// Print the baseline-vs-intervened diff instead of plain results.
        #[arg(long)]
        diff: bool,
    },
    /// Print the SQL text of a query for external engines.
    EmitSql {
        /// backbone | hubs | mechanisms | provenance | scc | two_hop |
        /// mutual | do_cut | soft_do
        kind: String,
        #[arg(long)]
        limit: Option<usize>,
        /// Source concept for mechanisms.
        #[arg(long)]
        src: Option<String>,
        /// Edge id for provenance.
        #[arg(long)]
        edge_id: Option<u64>,
        /// Intervention concept for do_cut / soft_do.
        #[arg(long)]
        label: Option<String>,
        /// Multiplier for soft_do.
        #[arg(long)]
        lambda: Option<f64>,
    },
}

/// Entry point used by the binary and by tests; returns the process exit code.
pub fn cli_main<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders help/version through the error path with exit 0
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(AtlasError::InvalidArgument(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn parse_rel_set(names: &[String]) -> Result<BTreeSet<RelType>> {
    let mut set = BTreeSet::new();
    for name in names {
        let upper = name.trim().to_uppercase();
        if upper.is_empty() {
            continue;
        }
        let rel = RelType::from_name(&upper).ok_or_else(|| {
            AtlasError::InvalidArgument(format!("unknown relation type {name:?}"))
        })?;
        set.insert(rel);
    }
    Ok(set)
}

fn parse_format(name: &str) -> Result<TableFormat> {
    TableFormat::from_name(name)
        .ok_or_else(|| AtlasError::InvalidArgument(format!("unknown format {name:?}")))
}

fn dir_stem(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "atlas".to_string())
}

fn config_from_opts(opts: &BuildOpts) -> Result<(BuildConfig, TableFormat)> {
    let lexicon = match &opts.rel_lexicon {
        Some(path) => RelLexicon::from_file(path)?,
        None => RelLexicon::builtin(),
    };
    let whitelist = parse_rel_set(&opts.rel_whitelist)?;
    let cfg = BuildConfig {
        tau: opts.tau,
        rel_whitelist: (!whitelist.is_empty()).then_some(whitelist),
        rel_blacklist: parse_rel_set(&opts.rel_blacklist)?,
        atlas_id: opts
            .atlas_id
            .clone()
            .unwrap_or_else(|| dir_stem(&opts.out)),
        lexicon,
        ..BuildConfig::default()
    };
    Ok((cfg, parse_format(&opts.format)?))
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn report_written(atlas: &Atlas, dir: &Path, format: TableFormat) {
    println!(
        "wrote atlas '{}' to {}: {} nodes, {} edges, {} support rows, {} sccs ({})",
        atlas.atlas_id,
        dir.display(),
        atlas.nodes().len(),
        atlas.edges().len(),
        atlas.support().len(),
        atlas.scc().map_or(0, <[_]>::len),
        format.extension()
    );
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Build { runs_root, opts } => {
            let (cfg, format) = config_from_opts(&opts)?;
            let mut warnings = Vec::new();
            let atlas = build_from_runs_root(&runs_root, &cfg, &mut warnings)?;
            print_warnings(&warnings);
            io::write_tables(&atlas, &opts.out, format, Some(&cfg))?;
            report_written(&atlas, &opts.out, format);
            Ok(())
        }
        Command::IngestClaims { csv, opts } => {
            let (cfg, format) = config_from_opts(&opts)?;
            let bytes = std::fs::read(&csv)
                .map_err(|e| AtlasError::io(csv.display().to_string(), e))?;
            let mut warnings = Vec::new();
            let claims = ingest::parse_claims_csv(&bytes, &mut warnings)?;
            let atlas = build_from_claims(&claims, &cfg, &mut warnings)?;
            print_warnings(&warnings);
            io::write_tables(&atlas, &opts.out, format, Some(&cfg))?;
            report_written(&atlas, &opts.out, format);
            Ok(())
        }
        Command::Merge {
            dirs,
            out,
            no_doc_prefix,
            format,
        } => {
            let format = parse_format(&format)?;
            let mut inputs = Vec::with_capacity(dirs.len());
            for dir in &dirs {
                let manifest = io::read_manifest(dir)?;
                let atlas = io::read_tables(dir)?;
                inputs.push((manifest.atlas_id, atlas));
            }
            let mut merged = merge_atlases(&inputs, !no_doc_prefix)?;
            merged.atlas_id = dir_stem(&out);
            io::write_tables(&merged, &out, format, None)?;
            report_written(&merged, &out, format);
            Ok(())
        }
        Command::Stats { dir, json } => {
            let atlas = io::read_tables(&dir)?;
            if json {
                print!("{}", io::stats_report_json(&atlas)?);
            } else {
                print_stats(&atlas)?;
            }
            Ok(())
        }
        Command::Query {
            dir,
            kind,
            src,
            limit,
            edge_id,
        } => {
            let atlas = io::read_tables(&dir)?;
            let view = atlas.view();
            run_view_query(&atlas, &view, &kind, src.as_deref(), limit, edge_id)
        }
        Command::Intervene {
            dir,
            do_cut,
            soft,
            then,
            src,
            limit,
            diff,
        } => {
            let atlas = io::read_tables(&dir)?;
            let base = atlas.view();
            let mut view = atlas.view();
            for label in &do_cut {
                view = view.do_cut(label)?;
            }
            for spec in &soft {
                let (label, lambda) = spec.rsplit_once(':').ok_or_else(|| {
                    AtlasError::InvalidArgument(format!(
                        "--soft expects LABEL:LAMBDA, got {spec:?}"
                    ))
                })?;
                let lambda: f64 = lambda.parse().map_err(|_| {
                    AtlasError::InvalidArgument(format!("invalid multiplier in {spec:?}"))
                })?;
                view = view.soft_do(label, lambda)?;
            }
            if diff {
                let (base_rows, view_rows) = match then.as_str() {
                    "backbone" => (backbone(&base, limit), backbone(&view, limit)),
                    "mechanisms" => {
                        let src = require_src(src.as_deref())?;
                        (mechanisms(&base, src, limit)?, mechanisms(&view, src, limit)?)
                    }
                    other => {
                        return Err(AtlasError::InvalidArgument(format!(
                            "--diff supports backbone and mechanisms, not {other:?}"
                        )))
                    }
                };
                print_diff(&base_rows, &view_rows);
                Ok(())
            } else {
                match then.as_str() {
                    "backbone" | "hubs" | "mechanisms" | "two_hop" | "two-hop" | "mutual" => {
                        run_view_query(&atlas, &view, &then, src.as_deref(), limit, None)
                    }
                    other => Err(AtlasError::InvalidArgument(format!(
                        "cannot run {other:?} on an intervened view"
                    ))),
                }
            }
        }
        Command::EmitSql {
            kind,
            limit,
            src,
            edge_id,
            label,
            lambda,
        } => {
            let sql_kind = SqlKind::from_name(&kind)
                .ok_or_else(|| AtlasError::InvalidArgument(format!("unknown query kind {kind:?}")))?;
            let params = SqlParams {
                limit,
                src_label: src,
                edge_id,
                label,
                lambda,
            };
            println!("{}", emit_sql(sql_kind, &params)?);
            Ok(())
        }
    }
}

fn require_src(src: Option<&str>) -> Result<&str> {
    src.ok_or_else(|| AtlasError::InvalidArgument("--src LABEL is required".into()))
}

fn print_ranked(rows: &[BackboneRow], with_src: bool) {
    for r in rows {
        if with_src {
            println!(
                "{} | {} | {} | {} | {}",
                r.rel_type,
                r.src,
                r.dst,
                r.support_lcms,
                fmt4(r.score_sum)
            );
        } else {
            println!(
                "{} | {} | {} | {}",
                r.rel_type,
                r.dst,
                r.support_lcms,
                fmt4(r.score_sum)
            );
        }
    }
}

fn run_view_query(
    atlas: &Atlas,
    view: &EdgeView<'_>,
    kind: &str,
    src: Option<&str>,
    limit: usize,
    edge_id: Option<u64>,
) -> Result<()> {
    match kind {
        "backbone" => print_ranked(&backbone(view, limit), true),
        "hubs" => {
            for h in hubs(view, limit) {
                println!("{} | {} | {}", h.label, fmt4(h.out_mass), h.out_degree);
            }
        }
        "mechanisms" => {
            let rows = mechanisms(view, require_src(src)?, limit)?;
            print_ranked(&rows, false);
        }
        "provenance" => {
            let edge_id = edge_id.ok_or_else(|| {
                AtlasError::InvalidArgument("--edge-id is required for provenance".into())
            })?;
            for row in provenance(atlas, crate::canon::EdgeId(edge_id))? {
                println!(
                    "{} | {} | {} | {}",
                    row.doc_id,
                    row.lcm_instance_id,
                    row.score_raw.map(|v| v.to_string()).unwrap_or_default(),
                    row.coupling.map(|v| v.to_string()).unwrap_or_default()
                );
            }
        }
        "scc" => {
            let computed;
            let rows = match atlas.scc() {
                Some(rows) => rows,
                None => {
                    computed = analytics::compute_scc(atlas);
                    &computed
                }
            };
            for row in rows.iter().take(limit) {
                println!(
                    "{} | {} | {} | {} | {}",
                    row.scc_id,
                    row.n_nodes,
                    row.n_edges,
                    row.support_docs,
                    row.top_nodes.join("; ")
                );
            }
        }
        "two_hop" | "two-hop" => {
            for p in two_hop_paths(view, limit) {
                println!(
                    "{} | {} | {} | {} | {} | {}",
                    p.a,
                    p.r1,
                    p.b,
                    p.r2,
                    p.c,
                    fmt4(p.path_score)
                );
            }
        }
        "mutual" => {
            for m in mutual_influence(view) {
                println!("{} | {} | {} | {}", m.a, m.r1, m.b, m.r2);
            }
        }
        other => {
            return Err(AtlasError::InvalidArgument(format!(
                "unknown query kind {other:?}"
            )))
        }
    }
    Ok(())
}

fn print_diff(base_rows: &[BackboneRow], view_rows: &[BackboneRow]) {
    let diff = counterfactual_diff(base_rows, view_rows);
    println!("vanished: {} row(s)", diff.vanished.len());
    print_ranked(&diff.vanished, true);
    println!("rank changes: {}", diff.rank_changes.len());
    for c in &diff.rank_changes {
        println!(
            "{} -> {} [{}]: {} -> {}",
            c.src, c.dst, c.rel_type, c.old_rank, c.new_rank
        );
    }
}

fn print_stats(atlas: &Atlas) -> Result<()> {
    let report = io::stats_report(atlas)?;
    let s = &report.summary;
    println!(
        "atlas '{}': {} nodes, {} edges, {} support rows",
        report.atlas_id, s.n_nodes, s.n_edges, s.n_support
    );
    println!(
        "top hub: {} (top-1 share {}, top-5 share {})",
        s.top_hub, report.display.top1_share, report.display.top5_share
    );
    println!(
        "edge mass quantiles: p50 {}, p90 {}, p99 {} (tail ratio {})",
        report.display.p50, report.display.p90, report.display.p99, report.display.tail_ratio
    );
    println!("relation mass:");
    for r in &s.rel_mass {
        println!(
            "  {} {}: {} edges, mass {}",
            r.rel_type,
            r.polarity,
            r.edge_count,
            fmt4(r.mass)
        );
    }
    if let Some(n) = report.n_scc {
        println!("scc: {n} component(s)");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rel_set_parsing() {
        let set = parse_rel_set(&["causes".into(), "LEADS_TO".into()]).unwrap();
        assert!(set.contains(&RelType::Causes));
        assert!(set.contains(&RelType::LeadsTo));
        assert!(parse_rel_set(&["nonsense".into()]).is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(cli_main(["causal-atlas", "no-such-command"]), 1);
        assert_eq!(cli_main(["causal-atlas", "emit-sql", "nonsense"]), 1);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(cli_main(["causal-atlas", "--help"]), 0);
    }

    #[test]
    fn data_errors_exit_two() {
        assert_eq!(
            cli_main(["causal-atlas", "stats", "/nonexistent/atlas-dir"]),
            2
        );
    }
}
