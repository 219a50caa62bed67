//! Tables, plot data and clustering summaries built from stored results.
//!
//! Everything here is a pure function of result records: nothing trains,
//! and identical inputs give identical bytes.

mod format;
mod table;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterRow;
use crate::error::{Error, Result};
use crate::harness::{aggregate, delta_analysis, CellResult, DeltaReport, SweepTable};
use crate::probe::Setting;

pub use format::{format_cell, format_cluster_row, parse_cell, round_fixed};
pub use table::{emitter_registry, setting_label, Csv, Grid, Markdown, TableEmitter, DECIMALS};

/// Provenance of a bundle. There is no wall-clock field so that reports
/// are reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    /// FNV-1a of the configuration that produced the results, hex.
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub tasks: Vec<String>,
    pub layers: Vec<u16>,
    pub n_results: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub sweep_table: SweepTable,
    /// Absent when the sweep has fewer than three layers or only one
    /// setting.
    pub delta_report: Option<DeltaReport>,
    pub cluster_rows: Vec<ClusterRow>,
    pub metadata: Metadata,
}

pub fn config_hash(config_bytes: &[u8]) -> String {
    format!("{:016x}", crate::probe::rng::fnv1a(config_bytes))
}

impl ReportBundle {
    pub fn build(
        cells: &[CellResult],
        cluster_rows: Vec<ClusterRow>,
        config_hash: String,
    ) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::Empty("result set"));
        }
        let sweep_table = aggregate(cells)?;
        let delta_report = match delta_analysis(&sweep_table) {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("no delta analysis: {e}");
                None
            }
        };
        let mut seeds: Vec<u64> = cells.iter().map(|c| c.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        let metadata = Metadata {
            config_hash,
            seeds,
            tasks: sweep_table.tasks().into_iter().map(String::from).collect(),
            layers: sweep_table.layers(),
            n_results: cells.len(),
        };
        Ok(Self {
            sweep_table,
            delta_report,
            cluster_rows,
            metadata,
        })
    }

    /// The whole bundle as pretty JSON, aggregates flattened to rows.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Row<'a> {
            task: &'a str,
            layer: u16,
            setting: Setting,
            mean_acc: f64,
            std_acc: f64,
            n_seeds: usize,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            metadata: &'a Metadata,
            sweep_table: Vec<Row<'a>>,
            delta_report: &'a Option<DeltaReport>,
            cluster_rows: &'a [ClusterRow],
        }
        let rows = self
            .sweep_table
            .cells
            .iter()
            .map(|((task, layer, setting), a)| Row {
                task,
                layer: *layer,
                setting: *setting,
                mean_acc: a.mean_acc,
                std_acc: a.std_acc,
                n_seeds: a.n_seeds,
            })
            .collect();
        let doc = Doc {
            metadata: &self.metadata,
            sweep_table: rows,
            delta_report: &self.delta_report,
            cluster_rows: &self.cluster_rows,
        };
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }
}

/// Renders the accuracy table with the emitter registered as `format`.
pub fn emit_table(bundle: &ReportBundle, format: &str) -> Result<String> {
    let registry = emitter_registry();
    let emitter = registry.get(format)?;
    emitter.emit(&Grid::new(&bundle.sweep_table)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub layer: u16,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub points: Vec<PlotPoint>,
    pub trimmed_std: f64,
}

/// Per-task `{layer, delta}` series plus the trimmed std, as JSON keyed by
/// task name.
pub fn emit_plot_data(report: &DeltaReport) -> Result<String> {
    if report.tasks.is_empty() {
        return Err(Error::Empty("delta report"));
    }
    let doc: BTreeMap<&str, PlotSeries> = report
        .tasks
        .iter()
        .map(|(task, d)| {
            let points = d
                .deltas
                .iter()
                .map(|&(layer, delta)| PlotPoint { layer, delta })
                .collect();
            (
                task.as_str(),
                PlotSeries {
                    points,
                    trimmed_std: d.trimmed_std,
                },
            )
        })
        .collect();
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

/// Markdown table of clustering rows, one per (group, mode, layer).
pub fn emit_cluster_rows(rows: &[ClusterRow]) -> Result<String> {
    let mut out = String::from(
        "| Group | Mode | Layer | k | NMI w/o / w / ΔNMI |\n|---|---|---:|---:|---|\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            r.group,
            r.mode,
            r.layer,
            r.k,
            format_cluster_row(r.nmi_without, r.nmi_with)?
        );
    }
    Ok(out)
}
