use serde::{Deserialize, Serialize};

use crate::align::RansacConfig;
use crate::error::{invalid, Error, Result};
use crate::fusion::TransferGains;
use crate::retrieval::SearchConfig;
use crate::selection::SelectionConfig;

/// How selected references are brought onto the query grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignMode {
    /// One affine transform per reference.
    #[default]
    Affine,
    /// Per-block copy of the matched reference block, overlaps averaged.
    Swap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub mode: AlignMode,
    /// Target number of feature cells across a reference window; the pooling
    /// stride is `ceil(window / match_cells)`.
    pub match_cells: usize,
    /// Parabolic sub-cell refinement of block matches before fitting.
    pub subcell: bool,
    /// Gauss-Newton photometric refinement steps after the affine fit.
    pub refine_iterations: usize,
    /// A reference pixel is used only where the local mean absolute
    /// difference between its low band and the bicubic base stays below
    /// `gate + gate_relative · (local standard deviation of the base)`.
    pub gate: f64,
    pub gate_relative: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            mode: AlignMode::Affine,
            match_cells: 24,
            subcell: true,
            refine_iterations: 10,
            gate: 0.005,
            gate_relative: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub alpha: f64,
    pub beta: f64,
    pub temperature: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        let g = TransferGains::default();
        Self {
            alpha: g.alpha,
            beta: g.beta,
            temperature: 0.2,
        }
    }
}

impl FusionConfig {
    pub fn gains(&self) -> TransferGains {
        TransferGains {
            alpha: self.alpha,
            beta: self.beta,
        }
    }
}

/// Every tunable of a run. The global reference count K is `selection.k`
/// (0 disables the global branch) and the local count V is
/// `search.local_count`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub upscale: usize,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub seed: u64,
    pub search: SearchConfig,
    pub selection: SelectionConfig,
    pub ransac: RansacConfig,
    pub align: AlignConfig,
    pub fusion: FusionConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            upscale: 4,
            workers: 0,
            seed: 0,
            search: SearchConfig::default(),
            selection: SelectionConfig::default(),
            ransac: RansacConfig::default(),
            align: AlignConfig::default(),
            fusion: FusionConfig::default(),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.upscale) {
            return Err(invalid(format!("upscale {} not in 2..=4", self.upscale)));
        }
        self.search.validate()?;
        self.selection.validate()?;
        self.ransac.validate()?;
        if self.align.match_cells < 3 {
            return Err(invalid("align.match_cells must be >= 3"));
        }
        if !(self.align.gate.is_finite() && self.align.gate >= 0.0) {
            return Err(invalid("align.gate must be non-negative"));
        }
        if !(self.align.gate_relative.is_finite() && self.align.gate_relative >= 0.0) {
            return Err(invalid("align.gate_relative must be non-negative"));
        }
        let f = &self.fusion;
        if !(f.temperature.is_finite() && f.temperature > 0.0) {
            return Err(invalid("fusion.temperature must be positive"));
        }
        if !(f.alpha.is_finite() && f.alpha >= 0.0 && f.beta.is_finite() && f.beta >= 0.0) {
            return Err(invalid("fusion gains must be finite and non-negative"));
        }
        Ok(())
    }

    /// Parses `key = value` lines (dotted keys, TOML values) on top of the
    /// defaults, then applies `overrides` in order.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(config_err)?;
        for (key, value) in overrides {
            set_dotted(&mut table, key, parse_value(value))?;
        }
        let cfg: Self = table.try_into().map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        *self = Self::parse(&self.to_text(), &[(key.to_owned(), value.to_owned())])?;
        Ok(())
    }

    /// One `dotted.key = value` line per field, sorted by key. Parsing the
    /// result reproduces `self` exactly.
    pub fn to_text(&self) -> String {
        let value = toml::Value::try_from(self).expect("config is serializable");
        let mut lines = Vec::new();
        flatten("", &value, &mut lines);
        lines.sort();
        let mut s = lines.join("\n");
        s.push('\n');
        s
    }
}

/// Splits `key=value`.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {arg:?} is not key=value")))?;
    Ok((k.trim().to_owned(), v.trim().to_owned()))
}

/// A TOML value, or a bare string when the text is not valid TOML.
fn parse_value(text: &str) -> toml::Value {
    format!("v = {text}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_owned()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Config(format!("bad key {key:?}")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_owned())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{p:?} in {key:?} is not a section")))?;
    }
    cur.insert(last.to_owned(), value);
    Ok(())
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<String>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        v => out.push(format!("{prefix} = {v}")),
    }
}
