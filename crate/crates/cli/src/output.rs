//! Report directories and plot tables.
//!
//! A run writes `report.toml` (summary, values, checks, config echo and the
//! table index) and one tab-separated file per table next to it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nilcalc::experiments::{Check, Report, Table};
use serde::{Deserialize, Serialize};

use crate::config::{GroupEcho, Loaded};

pub const REPORT_FILE: &str = "report.toml";

#[derive(Serialize)]
struct ReportFile<'a, T> {
    experiment: &'a str,
    passed: bool,
    source: &'a str,
    summary: &'a [String],
    values: &'a BTreeMap<String, f64>,
    checks: &'a [Check],
    tables: BTreeMap<String, String>,
    config: ConfigEcho<'a, T>,
}

#[derive(Serialize)]
struct ConfigEcho<'a, T> {
    group: &'a GroupEcho,
    params: &'a T,
}

fn tsv_name(t: &Table) -> String {
    format!("{}.tsv", t.name)
}

pub fn write_report<T: Serialize>(dir: &Path, rep: &Report, cfg: &Loaded<T>) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for t in &rep.tables {
        let p = dir.join(tsv_name(t));
        std::fs::write(&p, t.to_tsv()).with_context(|| format!("writing {}", p.display()))?;
    }
    let file = ReportFile {
        experiment: &rep.experiment,
        passed: rep.passed(),
        source: &cfg.source,
        summary: &rep.summary,
        values: &rep.values,
        checks: &rep.checks,
        tables: rep.tables.iter().map(|t| (t.name.clone(), tsv_name(t))).collect(),
        config: ConfigEcho { group: &cfg.group, params: &cfg.params },
    };
    let p = dir.join(REPORT_FILE);
    std::fs::write(&p, toml::to_string(&file)?).with_context(|| format!("writing {}", p.display()))?;
    Ok(p)
}

#[derive(Deserialize)]
struct TableIndex {
    #[serde(default)]
    tables: BTreeMap<String, String>,
}

/// Projects one table of a report onto `columns`. Without `table`, the only table
/// holding every requested column is used. A report without tables gives a
/// header-only table.
pub fn emit_plot_data(report: &Path, table: Option<&str>, columns: &[String]) -> Result<Table> {
    if columns.is_empty() {
        bail!("no columns requested");
    }
    let path = if report.is_dir() { report.join(REPORT_FILE) } else { report.to_path_buf() };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let index: TableIndex = toml::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {}", path.display(), e.message()))?;
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    if index.tables.is_empty() {
        return Ok(Table::new("empty", &cols));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let read = |name: &str, file: &str| -> Result<Table> {
        let p = base.join(file);
        let t = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        Ok(Table::from_tsv(name, &t)?)
    };
    let chosen = match table {
        Some(name) => {
            let file = index.tables.get(name).with_context(|| {
                format!("no table '{name}' (have: {})", index.tables.keys().cloned().collect::<Vec<_>>().join(", "))
            })?;
            read(name, file)?
        }
        None => {
            let all = index.tables.iter().map(|(n, f)| read(n, f)).collect::<Result<Vec<_>>>()?;
            let has = |t: &Table, c: &str| t.columns.iter().any(|x| x == c);
            if let Some(c) = cols.iter().find(|c| !all.iter().any(|t| has(t, c))) {
                return Err(nilcalc::Error::UnknownColumn(c.to_string()).into());
            }
            let mut hits: Vec<Table> = all.into_iter().filter(|t| cols.iter().all(|c| has(t, c))).collect();
            match hits.len() {
                1 => hits.pop().expect("one hit"),
                0 => bail!("the columns {} are not in one table; pick one with --table", cols.join(", ")),
                _ => bail!(
                    "columns found in several tables ({}); pick one with --table",
                    hits.iter().map(|t| t.name.as_str()).collect::<Vec<_>>().join(", ")
                ),
            }
        }
    };
    Ok(chosen.project(&cols)?)
}
