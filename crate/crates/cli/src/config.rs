//! Experiment config files.
//!
//! ```toml
//! experiment = "weyl-verify"   # optional, must match the subcommand
//!
//! [group]                      # optional
//! name = "heisenberg"
//! law = "symmetric"
//!
//! [output]                     # optional, overridden by --out
//! dir = "runs/weyl"
//!
//! [params]                     # experiment parameters and thresholds
//! interval = [0.0, 1.0]
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::Spanned;

/// The only group and multiplication convention the library implements.
pub const GROUP: &str = "heisenberg";
pub const LAW: &str = "symmetric";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope<T> {
    experiment: Option<Spanned<String>>,
    group: Option<GroupBlock>,
    output: Option<OutputBlock>,
    params: Option<T>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupBlock {
    name: Spanned<String>,
    law: Option<Spanned<String>>,
    homogeneous_dimension: Option<Spanned<u32>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputBlock {
    dir: PathBuf,
}

/// Echo of the group block written into every report.
#[derive(Debug, Clone, Serialize)]
pub struct GroupEcho {
    pub name: String,
    pub law: String,
    pub homogeneous_dimension: u32,
}

impl Default for GroupEcho {
    fn default() -> Self {
        GroupEcho { name: GROUP.into(), law: LAW.into(), homogeneous_dimension: 4 }
    }
}

#[derive(Debug)]
pub struct Loaded<T> {
    pub params: T,
    pub group: GroupEcho,
    pub out_dir: Option<PathBuf>,
    pub source: String,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn diag(source: &str, text: &str, span: Option<std::ops::Range<usize>>, msg: &str) -> anyhow::Error {
    match span {
        Some(s) => anyhow::anyhow!("{source}:{}: {}", line_of(text, s.start), one_line(msg)),
        None => anyhow::anyhow!("{source}: {}", one_line(msg)),
    }
}

/// Parses and validates a config for `experiment`. `params_required` rejects a
/// file without a [params] table.
pub fn parse<T: DeserializeOwned + Default>(experiment: &str, text: &str, source: &str, params_required: bool) -> Result<Loaded<T>> {
    let env: Envelope<T> = toml::from_str(text).map_err(|e| diag(source, text, e.span(), e.message()))?;
    if let Some(name) = &env.experiment {
        if name.get_ref() != experiment {
            let msg = format!("config is for '{}', not '{experiment}'", name.get_ref());
            return Err(diag(source, text, Some(name.span()), &msg));
        }
    }
    if let Some(g) = &env.group {
        if g.name.get_ref() != GROUP {
            let msg = format!("unsupported group '{}' (only '{GROUP}')", g.name.get_ref());
            return Err(diag(source, text, Some(g.name.span()), &msg));
        }
        if let Some(law) = &g.law {
            if law.get_ref() != LAW {
                let msg = format!("unsupported group law '{}' (only '{LAW}')", law.get_ref());
                return Err(diag(source, text, Some(law.span()), &msg));
            }
        }
        if let Some(q) = &g.homogeneous_dimension {
            if *q.get_ref() != 4 {
                let msg = format!("homogeneous dimension {} does not match {GROUP} (4)", q.get_ref());
                return Err(diag(source, text, Some(q.span()), &msg));
            }
        }
    }
    let params = match env.params {
        Some(p) => p,
        None if params_required => bail!("{source}: missing table [params]"),
        None => T::default(),
    };
    Ok(Loaded { params, group: GroupEcho::default(), out_dir: env.output.map(|o| o.dir), source: source.into() })
}

pub fn load<T: DeserializeOwned + Default>(experiment: &str, path: &Path, params_required: bool) -> Result<Loaded<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    parse(experiment, &text, &path.display().to_string(), params_required)
}

/// Config text with `params` under [params].
pub fn render<T: Serialize>(experiment: &str, params: &T) -> Result<String> {
    #[derive(Serialize)]
    struct Out<'a, T> {
        experiment: &'a str,
        group: GroupEcho,
        params: &'a T,
    }
    Ok(toml::to_string(&Out { experiment, group: GroupEcho::default(), params })?)
}
