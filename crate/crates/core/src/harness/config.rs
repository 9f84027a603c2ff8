//! Experiment configuration.
//!
//! The file format is TOML with one table per module and every value written
//! as a decimal string (bare numbers and arrays are accepted as well):
//!
//! ```toml
//! [experiment]
//! kind = "theorem1"
//! c = "0.5"
//! n_grid = "10000,100000,1000000"
//! reps = "200"
//! seed = "42"
//!
//! [split_vector]
//! kind = "uniform-binary"
//!
//! [split_tree]
//! s = "1"
//! s0 = "1"
//! s1 = "0"
//! ```
//!
//! Command-line flags are applied on top with [`RawConfig::set`] before
//! [`RawConfig::build`] validates the whole thing.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::percolation::PercolationParams;
use crate::regular_tree::RegularParams;
use crate::split_tree::{Insertion, SplitTreeParams};
use crate::split_vector::{parse_multiset, SplitVectorKind, SplitVectorSpec};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TOP_K: usize = 10;
pub const DEFAULT_REPLICATIONS: u32 = 200;
pub const DEFAULT_N_GRID: &str = "10000,100000,1000000";
pub const DEFAULT_H_GRID: &str = "10,15,20";
pub const DEFAULT_T_GRID: &str = "0.5,1,2";
pub const DEFAULT_X_GRID: &str = "0.5,1,2";

const KEYS: &[(&str, &[&str])] = &[
    (
        "experiment",
        &["kind", "c", "p", "n_grid", "h_grid", "reps", "t_grid", "x_grid", "intervals", "seed", "top_k", "out"],
    ),
    ("split_vector", &["kind", "b", "multiset"]),
    ("split_tree", &["s", "s0", "s1", "insertion"]),
    ("regular_tree", &["d"]),
];

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Theorem1,
    Theorem2,
    Theorem3,
    Theorem4,
    PropM,
    ProcessN,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Theorem1,
        ExperimentKind::Theorem2,
        ExperimentKind::Theorem3,
        ExperimentKind::Theorem4,
        ExperimentKind::PropM,
        ExperimentKind::ProcessN,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Theorem1 => "theorem1",
            ExperimentKind::Theorem2 => "theorem2",
            ExperimentKind::Theorem3 => "theorem3",
            ExperimentKind::Theorem4 => "theorem4",
            ExperimentKind::PropM => "prop_m",
            ExperimentKind::ProcessN => "process_n",
        }
    }

    pub fn uses_regular_tree(self) -> bool {
        self == ExperimentKind::Theorem3
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('-', "_");
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| config_err(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeModel {
    /// Split-tree parameters; the ball count is overwritten per grid point.
    Split { params: SplitTreeParams, insertion: Insertion },
    Regular { d: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub tree: TreeModel,
    pub c: f64,
    /// Ball counts `n` (split trees) or heights `h` (regular trees), increasing.
    pub grid: Vec<u64>,
    pub replications: u32,
    pub t_grid: Vec<f64>,
    /// Points `x` where `P(x_1 >= x)` is compared for lattice laws.
    pub x_grid: Vec<f64>,
    /// `(lo, hi]` intervals for the counting-process increments.
    pub intervals: Vec<(f64, f64)>,
    /// Explicit keep probability replacing the regime value (sanity runs).
    pub keep: Option<f64>,
    pub master_seed: u64,
    pub top_k: usize,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn split_params(&self) -> Option<&SplitTreeParams> {
        match &self.tree {
            TreeModel::Split { params, .. } => Some(params),
            TreeModel::Regular { .. } => None,
        }
    }

    pub fn percolation_at(&self, n: u64) -> Result<PercolationParams> {
        match self.keep {
            Some(p) => PercolationParams::explicit(p),
            None => PercolationParams::split_regime(self.c, n),
        }
    }

    pub fn regular_at(&self, h: u64) -> Result<RegularParams> {
        let TreeModel::Regular { d } = self.tree else {
            return Err(config_err("not a regular-tree experiment"));
        };
        let h = u32::try_from(h).map_err(|_| config_err(format!("height {h} out of range")))?;
        match self.keep {
            Some(q) => RegularParams::with_keep(d, h, q),
            None => RegularParams::new(d, h, self.c),
        }
    }

    /// Same experiment with another master seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        ExperimentConfig { master_seed: seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(config_err("grid must not be empty"));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("grid must be strictly increasing"));
        }
        if self.replications < 1 {
            return Err(config_err("reps must be at least 1"));
        }
        if self.top_k < 1 {
            return Err(config_err("top_k must be at least 1"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(config_err(format!("c must be positive, got {}", self.c)));
        }
        if let Some(p) = self.keep {
            PercolationParams::explicit(p)?;
        }
        check_increasing("t_grid", &self.t_grid, 0.0, true)?;
        check_increasing("x_grid", &self.x_grid, 0.0, false)?;
        for &(lo, hi) in &self.intervals {
            let known = |t: f64| self.t_grid.contains(&t);
            if !(lo < hi) || !(lo == 0.0 || known(lo)) || !known(hi) {
                return Err(config_err(format!(
                    "interval ({lo}, {hi}] must have lo < hi with endpoints 0 or in t_grid"
                )));
            }
        }
        match (&self.tree, self.experiment.uses_regular_tree()) {
            (TreeModel::Regular { .. }, true) => {
                for &h in &self.grid {
                    self.regular_at(h)?;
                }
            }
            (TreeModel::Split { params, .. }, false) => {
                for &n in &self.grid {
                    params.with_n(n)?;
                    self.percolation_at(n)?;
                    if self.keep.is_some() {
                        PercolationParams::split_regime(self.c, n)?;
                    }
                }
                let lattice = params.vector().lattice_span().is_some();
                match self.experiment {
                    ExperimentKind::Theorem4 if !lattice => {
                        return Err(config_err("theorem4 needs a lattice split vector"));
                    }
                    ExperimentKind::Theorem1 | ExperimentKind::Theorem2 | ExperimentKind::ProcessN if lattice => {
                        return Err(config_err(format!("{} needs a non-lattice split vector", self.experiment)));
                    }
                    _ => {}
                }
            }
            _ => return Err(config_err(format!("{} does not run on this tree model", self.experiment))),
        }
        Ok(())
    }

    /// Resolved configuration as sections of strings, suitable for echoing
    /// into reports or writing back out as a config file.
    pub fn to_raw(&self) -> RawConfig {
        let mut raw = RawConfig::default();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        raw.set("experiment", "kind", self.experiment.name());
        raw.set("experiment", "c", format!("{}", self.c));
        if let Some(p) = self.keep {
            raw.set("experiment", "p", format!("{p}"));
        }
        let grid = self.grid.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        raw.set("experiment", "reps", self.replications.to_string());
        raw.set("experiment", "t_grid", join(&self.t_grid));
        raw.set("experiment", "x_grid", join(&self.x_grid));
        let intervals: Vec<String> = self.intervals.iter().map(|(lo, hi)| format!("{lo}:{hi}")).collect();
        raw.set("experiment", "intervals", intervals.join(","));
        raw.set("experiment", "seed", self.master_seed.to_string());
        raw.set("experiment", "top_k", self.top_k.to_string());
        if let Some(out) = &self.output {
            raw.set("experiment", "out", out.display().to_string());
        }
        match &self.tree {
            TreeModel::Split { params, insertion } => {
                raw.set("experiment", "n_grid", grid);
                let v = params.vector();
                raw.set("split_vector", "kind", v.kind().name());
                raw.set("split_vector", "b", params.b().to_string());
                if let Some(m) = v.multiset() {
                    raw.set("split_vector", "multiset", join(m));
                }
                raw.set("split_tree", "s", params.s().to_string());
                raw.set("split_tree", "s0", params.s0().to_string());
                raw.set("split_tree", "s1", params.s1().to_string());
                let method = match insertion {
                    Insertion::Sequential => "sequential",
                    Insertion::Recursive => "recursive",
                };
                raw.set("split_tree", "insertion", method);
            }
            TreeModel::Regular { d } => {
                raw.set("experiment", "h_grid", grid);
                raw.set("regular_tree", "d", d.to_string());
            }
        }
        raw
    }
}

fn check_increasing(name: &str, values: &[f64], lower: f64, allow_lower: bool) -> Result<()> {
    if values.is_empty() {
        return Err(config_err(format!("{name} must not be empty")));
    }
    for &v in values {
        let ok = v.is_finite() && (v > lower || (allow_lower && v == lower));
        if !ok {
            return Err(config_err(format!("{name} has out-of-range value {v}")));
        }
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(config_err(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

/// Unvalidated sections of string values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

fn value_to_string(v: &toml::Value) -> Option<String> {
    match v {
        toml::Value::String(s) => Some(s.clone()),
        toml::Value::Integer(i) => Some(i.to_string()),
        toml::Value::Float(f) => Some(format!("{f}")),
        toml::Value::Array(items) => {
            items.iter().map(value_to_string).collect::<Option<Vec<_>>>().map(|v| v.join(","))
        }
        _ => None,
    }
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| config_err(e.message().to_string()))?;
        let mut raw = RawConfig::default();
        for (section, body) in table {
            let toml::Value::Table(body) = body else {
                return Err(config_err(format!("`{section}` must be a section")));
            };
            for (key, value) in body {
                let text = value_to_string(&value)
                    .ok_or_else(|| config_err(format!("{section}.{key} must be a string or number")))?;
                raw.check_key(&section, &key)?;
                raw.set(&section, &key, text);
            }
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn check_key(&self, section: &str, key: &str) -> Result<()> {
        let known = KEYS.iter().find(|(s, _)| *s == section).map(|(_, keys)| keys.contains(&key));
        match known {
            Some(true) => Ok(()),
            Some(false) => Err(config_err(format!("unknown key `{key}` in [{section}]"))),
            None => Err(config_err(format!("unknown section [{section}]"))),
        }
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.sections.entry(section.to_string()).or_default().insert(key.to_string(), value.into());
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn sections(&self) -> &BTreeMap<String, BTreeMap<String, String>> {
        &self.sections
    }

    pub fn to_toml_string(&self) -> String {
        let mut out = String::new();
        for (section, body) in &self.sections {
            out.push_str(&format!("[{section}]\n"));
            for (k, v) in body {
                out.push_str(&format!("{k} = {}\n", toml::Value::String(v.clone())));
            }
            out.push('\n');
        }
        out
    }

    fn field<T: FromStr>(&self, section: &str, key: &str, default: Option<&str>) -> Result<T> {
        let text = self
            .get(section, key)
            .or(default)
            .ok_or_else(|| config_err(format!("missing {section}.{key}")))?;
        text.trim().parse().map_err(|_| config_err(format!("bad value `{text}` for {section}.{key}")))
    }

    fn count(&self, section: &str, key: &str, default: Option<&str>) -> Result<u64> {
        let text = self
            .get(section, key)
            .or(default)
            .ok_or_else(|| config_err(format!("missing {section}.{key}")))?;
        parse_count(text).ok_or_else(|| config_err(format!("bad count `{text}` for {section}.{key}")))
    }

    pub fn build(&self) -> Result<ExperimentConfig> {
        for (section, body) in &self.sections {
            for key in body.keys() {
                self.check_key(section, key)?;
            }
        }
        let experiment: ExperimentKind = self.field("experiment", "kind", None)?;
        let c: f64 = self.field("experiment", "c", None)?;
        let keep = self.get("experiment", "p").map(|_| self.field::<f64>("experiment", "p", None)).transpose()?;
        let replications = u32::try_from(self.count("experiment", "reps", Some(&DEFAULT_REPLICATIONS.to_string()))?)
            .map_err(|_| config_err("reps out of range"))?;
        let master_seed = self.count("experiment", "seed", Some(&DEFAULT_SEED.to_string()))?;
        let top_k = self.count("experiment", "top_k", Some(&DEFAULT_TOP_K.to_string()))? as usize;
        let t_grid = parse_reals(self.get("experiment", "t_grid").unwrap_or(DEFAULT_T_GRID))?;
        let x_grid = parse_reals(self.get("experiment", "x_grid").unwrap_or(DEFAULT_X_GRID))?;
        let intervals = match self.get("experiment", "intervals") {
            Some(text) if !text.trim().is_empty() => parse_intervals(text)?,
            _ => default_intervals(&t_grid),
        };
        let output = self.get("experiment", "out").map(PathBuf::from);

        let (tree, grid_key, grid_default) = if experiment.uses_regular_tree() {
            let d = u32::try_from(self.count("regular_tree", "d", Some("2"))?).map_err(|_| config_err("d out of range"))?;
            (TreeModel::Regular { d }, "h_grid", DEFAULT_H_GRID)
        } else {
            let kind: SplitVectorKind = self
                .get("split_vector", "kind")
                .unwrap_or("uniform-binary")
                .parse()
                .map_err(|e: Error| config_err(e.to_string()))?;
            let b = self.get("split_vector", "b").map(|_| self.count("split_vector", "b", None)).transpose()?;
            let multiset = self.get("split_vector", "multiset").map(parse_multiset).transpose()?;
            let vector = SplitVectorSpec::from_parts(kind, b.map(|b| b as usize), multiset.as_deref())?;
            let small = |key: &str, default: &str| -> Result<u32> {
                u32::try_from(self.count("split_tree", key, Some(default))?).map_err(|_| config_err(format!("{key} out of range")))
            };
            let (s, s0, s1) = (small("s", "1")?, small("s0", "1")?, small("s1", "0")?);
            let insertion: Insertion = self.field("split_tree", "insertion", Some("recursive"))?;
            let params = SplitTreeParams::new(vector.branch_factor(), s, s0, s1, vector, 2)?;
            (TreeModel::Split { params, insertion }, "n_grid", DEFAULT_N_GRID)
        };
        let other_grid = if grid_key == "n_grid" { "h_grid" } else { "n_grid" };
        if self.get("experiment", other_grid).is_some() {
            return Err(config_err(format!("{other_grid} does not apply to {experiment}")));
        }
        let grid = self
            .get("experiment", grid_key)
            .unwrap_or(grid_default)
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| parse_count(s).ok_or_else(|| config_err(format!("bad grid value `{s}`"))))
            .collect::<Result<Vec<_>>>()?;

        let config = ExperimentConfig {
            experiment,
            tree,
            c,
            grid,
            replications,
            t_grid,
            x_grid,
            intervals,
            keep,
            master_seed,
            top_k,
            output,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Non-negative integer, also accepting integral scientific notation (`1e6`).
pub fn parse_count(text: &str) -> Option<u64> {
    let t = text.trim();
    if let Ok(v) = t.parse::<u64>() {
        return Some(v);
    }
    let f: f64 = t.parse().ok()?;
    (f >= 0.0 && f.fract() == 0.0 && f < u64::MAX as f64).then_some(f as u64)
}

pub fn parse_reals(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|_| config_err(format!("bad number `{s}`"))))
        .collect()
}

/// `lo:hi` pairs separated by commas, e.g. `0:1,1:2`.
pub fn parse_intervals(text: &str) -> Result<Vec<(f64, f64)>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (lo, hi) = pair.split_once(':').ok_or_else(|| config_err(format!("interval `{pair}` is not lo:hi")))?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| config_err(format!("bad interval `{pair}`")));
            Ok((parse(lo)?, parse(hi)?))
        })
        .collect()
}

/// Consecutive `(t_{i-1}, t_i]` intervals starting from 0.
pub fn default_intervals(t_grid: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut lo = 0.0;
    for &t in t_grid {
        if t > lo {
            out.push((lo, t));
        }
        lo = t;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const BST: &str = r#"
[experiment]
kind = "theorem1"
c = "0.5"
n_grid = "1000,1e4"
reps = 20
seed = "7"

[split_vector]
kind = "uniform-binary"
"#;

    #[test]
    fn parses_sections_and_defaults() {
        let cfg = RawConfig::parse(BST).unwrap().build().unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::Theorem1);
        assert_eq!(cfg.grid, vec![1000, 10_000]);
        assert_eq!(cfg.replications, 20);
        assert_eq!(cfg.master_seed, 7);
        assert_eq!(cfg.top_k, DEFAULT_TOP_K);
        assert_eq!(cfg.t_grid, vec![0.5, 1.0, 2.0]);
        assert_eq!(cfg.intervals, vec![(0.0, 0.5), (0.5, 1.0), (1.0, 2.0)]);
        assert_eq!(cfg.split_params().unwrap(), &SplitTreeParams::bst(2).unwrap());
    }

    #[test]
    fn resolved_config_rebuilds_to_itself() {
        let cfg = RawConfig::parse(BST).unwrap().build().unwrap();
        let text = cfg.to_raw().to_toml_string();
        assert_eq!(RawConfig::parse(&text).unwrap().build().unwrap(), cfg);
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut raw = RawConfig::parse(BST).unwrap();
        raw.set("experiment", "seed", "99");
        raw.set("experiment", "intervals", "0:1,1:2");
        let cfg = raw.build().unwrap();
        assert_eq!(cfg.master_seed, 99);
        assert_eq!(cfg.intervals, vec![(0.0, 1.0), (1.0, 2.0)]);
    }

    #[test]
    fn rejects_bad_configs() {
        let with = |section: &str, key: &str, value: &str| {
            let mut raw = RawConfig::parse(BST).unwrap();
            raw.set(section, key, value);
            raw.build()
        };
        assert!(with("experiment", "n_grid", "1000,100").is_err());
        assert!(with("experiment", "reps", "0").is_err());
        assert!(with("experiment", "c", "-1").is_err());
        assert!(with("experiment", "c", "7").is_err());
        assert!(with("experiment", "t_grid", "1,0.5").is_err());
        assert!(with("experiment", "intervals", "0:3").is_err());
        assert!(with("experiment", "kind", "theorem4").is_err());
        assert!(with("experiment", "kind", "theorem3").is_err());
        assert!(with("experiment", "colour", "red").is_err());
        assert!(with("split_vector", "kind", "fixed-multiset").is_err());
        assert!(RawConfig::parse("[nonsense]\nx = 1\n").is_err());
        assert!(RawConfig::parse("kind = 1\n").is_err());
        assert!(RawConfig::parse("[experiment\n").is_err());
        assert!(matches!(with("experiment", "reps", "x"), Err(Error::Config(_))));
    }

    #[test]
    fn lattice_and_regular_configs() {
        let lattice = "[experiment]\nkind = \"theorem4\"\nc = \"0.6\"\nn_grid = \"1000\"\n\
            [split_vector]\nkind = \"fixed-multiset\"\nb = \"4\"\nmultiset = \"1/2,1/4,1/8,1/8\"\n";
        let cfg = RawConfig::parse(lattice).unwrap().build().unwrap();
        assert!(cfg.split_params().unwrap().vector().lattice_span().is_some());
        let regular = "[experiment]\nkind = \"theorem3\"\nc = 1\nh_grid = [8, 12]\n[regular_tree]\nd = 2\n";
        let cfg = RawConfig::parse(regular).unwrap().build().unwrap();
        assert_eq!(cfg.tree, TreeModel::Regular { d: 2 });
        assert_eq!(cfg.regular_at(12).unwrap().keep_probability(), 1.0 - 1.0 / 12.0);
        assert!(RawConfig::parse(&regular.replace("[8, 12]", "[30, 40]")).unwrap().build().is_err());
    }

    #[test]
    fn counts() {
        assert_eq!(parse_count("1e6"), Some(1_000_000));
        assert_eq!(parse_count("12"), Some(12));
        assert_eq!(parse_count("1.5"), None);
        assert_eq!(parse_count("-3"), None);
    }
}
