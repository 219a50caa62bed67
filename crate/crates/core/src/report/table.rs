//! Layer x (task, setting) accuracy tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::harness::{Aggregate, SweepTable};
use crate::probe::Setting;
use crate::registry::{Named, Registry};

use super::format::format_cell;

/// Display precision of table cells.
pub const DECIMALS: usize = 2;

/// Header label for a setting column.
pub fn setting_label(setting: Setting) -> &'static str {
    match setting {
        Setting::WithoutMlp => "w/o",
        Setting::WithMlp => "w",
    }
}

/// A complete grid: every task has both settings at every layer.
#[derive(Debug, Clone)]
pub struct Grid<'a> {
    pub tasks: Vec<&'a str>,
    pub layers: Vec<u16>,
    table: &'a SweepTable,
    /// Rank (1 = best, 2 = second best) of each layer within its
    /// (task, setting) column.
    ranks: BTreeMap<(&'a str, Setting, u16), u8>,
}

impl<'a> Grid<'a> {
    pub fn new(table: &'a SweepTable) -> Result<Self> {
        let tasks = table.tasks();
        let layers = table.layers();
        if tasks.is_empty() {
            return Err(Error::Empty("sweep table"));
        }
        let mut missing = Vec::new();
        for &task in &tasks {
            for &layer in &layers {
                for setting in Setting::BOTH {
                    if table.get(task, layer, setting).is_none() {
                        missing.push(format!("task={task} layer={layer} setting={setting}"));
                    }
                }
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingCells(missing));
        }
        let mut ranks = BTreeMap::new();
        for &task in &tasks {
            for setting in Setting::BOTH {
                let mut means: Vec<f64> = layers
                    .iter()
                    .map(|&l| table.get(task, l, setting).map_or(f64::NAN, |a| a.mean_acc))
                    .collect();
                means.sort_by(|a, b| b.total_cmp(a));
                means.dedup();
                for &layer in &layers {
                    let m = table
                        .get(task, layer, setting)
                        .map_or(f64::NAN, |a| a.mean_acc);
                    if let Some(pos) = means.iter().take(2).position(|&v| v == m) {
                        ranks.insert((task, setting, layer), pos as u8 + 1);
                    }
                }
            }
        }
        Ok(Self {
            tasks,
            layers,
            table,
            ranks,
        })
    }

    pub fn cell(&self, task: &str, layer: u16, setting: Setting) -> &Aggregate {
        self.table
            .get(task, layer, setting)
            .expect("grid is complete")
    }

    /// Formatted percentage cell.
    pub fn text(&self, task: &str, layer: u16, setting: Setting) -> Result<String> {
        let a = self.cell(task, layer, setting);
        format_cell(a.mean_acc * 100.0, a.std_acc * 100.0, DECIMALS)
    }

    pub fn rank(&self, task: &str, layer: u16, setting: Setting) -> Option<u8> {
        self.ranks
            .iter()
            .find(|((t, s, l), _)| *t == task && *s == setting && *l == layer)
            .map(|(_, &r)| r)
    }

    /// True when the MLP setting strictly beats the plain probe.
    pub fn improved(&self, task: &str, layer: u16) -> bool {
        self.cell(task, layer, Setting::WithMlp).mean_acc
            > self.cell(task, layer, Setting::WithoutMlp).mean_acc
    }

    /// Column order shared by all emitters.
    pub fn columns(&self) -> Vec<(&'a str, Setting)> {
        self.tasks
            .iter()
            .flat_map(|&t| Setting::BOTH.into_iter().map(move |s| (t, s)))
            .collect()
    }
}

pub trait TableEmitter: Named + Send + Sync {
    fn extension(&self) -> &'static str;
    fn emit(&self, grid: &Grid<'_>) -> Result<String>;
}

/// CSV with one `mean±std` column per (task, setting) in percent, followed
/// by one rank column per value column (1 = best layer, 2 = second best,
/// empty otherwise).
pub struct Csv;

impl Named for Csv {
    fn name(&self) -> &'static str {
        "csv"
    }
}

impl TableEmitter for Csv {
    fn extension(&self) -> &'static str {
        "csv"
    }

    fn emit(&self, grid: &Grid<'_>) -> Result<String> {
        let columns = grid.columns();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["layer".to_string()];
        header.extend(
            columns
                .iter()
                .map(|(t, s)| format!("{t} {}", setting_label(*s))),
        );
        header.extend(
            columns
                .iter()
                .map(|(t, s)| format!("{t} {} rank", setting_label(*s))),
        );
        w.write_record(&header).map_err(csv_err)?;
        for &layer in &grid.layers {
            let mut row = vec![layer.to_string()];
            for &(t, s) in &columns {
                row.push(grid.text(t, layer, s)?);
            }
            for &(t, s) in &columns {
                row.push(
                    grid.rank(t, layer, s)
                        .map(|r| r.to_string())
                        .unwrap_or_default(),
                );
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Config(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

/// GitHub-flavoured markdown. With-MLP cells that beat the paired plain
/// cell are bold.
pub struct Markdown;

impl Named for Markdown {
    fn name(&self) -> &'static str {
        "markdown"
    }
}

impl TableEmitter for Markdown {
    fn extension(&self) -> &'static str {
        "md"
    }

    fn emit(&self, grid: &Grid<'_>) -> Result<String> {
        let columns = grid.columns();
        let mut out = String::from("| Layer |");
        for (t, s) in &columns {
            let _ = write!(out, " {t} {} |", setting_label(*s));
        }
        out.push_str("\n|---:|");
        out.push_str(&"---:|".repeat(columns.len()));
        out.push('\n');
        for &layer in &grid.layers {
            let _ = write!(out, "| {layer} |");
            for &(t, s) in &columns {
                let text = grid.text(t, layer, s)?;
                if s == Setting::WithMlp && grid.improved(t, layer) {
                    let _ = write!(out, " **{text}** |");
                } else {
                    let _ = write!(out, " {text} |");
                }
            }
            out.push('\n');
        }
        Ok(out)
    }
}

pub fn emitter_registry() -> Registry<dyn TableEmitter> {
    let mut r: Registry<dyn TableEmitter> = Registry::new("table format");
    r.register(Box::new(Csv)).register(Box::new(Markdown));
    r
}
