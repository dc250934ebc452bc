//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::characteristics::TimeGrid;
use crate::cost::{ConvexCost, CostSpec};
use crate::error::{Error, Result};
use crate::exprs::{self, Expr};
use crate::ltv::LtvSystem;
use crate::oracle::LfOptions;
use crate::presets;
use crate::zonotope::ZonotopeSpec;

/// A matrix entry: a number or an expression of `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Number(f64),
    Expr(String),
}

impl Entry {
    fn to_expr(&self) -> std::result::Result<Expr, exprs::ExprError> {
        match self {
            Entry::Number(v) => Ok(Expr::constant(*v)),
            Entry::Expr(s) => exprs::parse(s),
        }
    }
}

impl From<&str> for Entry {
    fn from(s: &str) -> Self {
        Entry::Expr(s.to_string())
    }
}

impl From<f64> for Entry {
    fn from(v: f64) -> Self {
        Entry::Number(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub a: Vec<Vec<Entry>>,
    pub b: Vec<Vec<Entry>>,
    pub e: Vec<Vec<Entry>>,
    pub u: ZonotopeSpec,
    pub d: ZonotopeSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t0: f64,
    pub t_final: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

fn default_cfl() -> f64 {
    0.5
}

fn default_max_nodes() -> usize {
    LfOptions::default().max_nodes
}

fn default_reach_steps() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Grid for `oracle-compare`, as `"min:max:count,..."`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
    #[serde(default = "default_reach_steps")]
    pub reach_steps: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            grid: None,
            cfl: default_cfl(),
            max_nodes: default_max_nodes(),
            reach_steps: default_reach_steps(),
        }
    }
}

impl OracleConfig {
    pub fn lf_options(&self) -> LfOptions {
        LfOptions {
            cfl: self.cfl,
            max_nodes: self.max_nodes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub cost: CostSpec,
    pub levels: Vec<f64>,
    pub counts: Vec<usize>,
    pub grid: GridConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
}

/// Everything needed for a precompute, validated.
#[derive(Debug, Clone)]
pub struct Problem {
    pub system: LtvSystem,
    pub cost: ConvexCost,
    pub levels: Vec<f64>,
    pub counts: Vec<usize>,
    pub grid: TimeGrid,
    pub seed: u64,
}

pub const PRESETS: &[&str] = &["paper-example-6", "double-integrator"];

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        RunConfig::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper-example-6" => Ok(presets::example_config()),
            "double-integrator" => Ok(presets::double_integrator_config()),
            _ => Err(Error::Invalid(format!(
                "unknown preset `{name}` (known: {})",
                PRESETS.join(", ")
            ))),
        }
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&bytes).into()
    }

    pub fn build_system(&self) -> Result<LtvSystem> {
        let conv = |name: &'static str, rows: &[Vec<Entry>]| -> Result<Vec<Vec<Expr>>> {
            rows.iter()
                .enumerate()
                .map(|(i, r)| {
                    r.iter()
                        .enumerate()
                        .map(|(j, e)| {
                            e.to_expr().map_err(|source| Error::Expr {
                                matrix: name,
                                row: i,
                                col: j,
                                source,
                            })
                        })
                        .collect()
                })
                .collect()
        };
        let s = &self.system;
        let u = s.u.to_zonotope().map_err(|e| Error::Invalid(format!("U: {e}")))?;
        let d = s.d.to_zonotope().map_err(|e| Error::Invalid(format!("D: {e}")))?;
        let sys = LtvSystem::new(
            conv("A", &s.a)?,
            conv("B", &s.b)?,
            conv("E", &s.e)?,
            u,
            d,
            self.grid.t0,
            self.grid.t_final,
        )?;
        // every entry must be finite on the horizon
        let grid = TimeGrid::new(self.grid.t0, self.grid.t_final, self.grid.step)?;
        for &s in grid.nodes() {
            let (a, b, e) = sys.eval_matrices(s)?;
            if a.iter().chain(b.iter()).chain(e.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("matrix entries are not finite at t = {s}")));
            }
        }
        Ok(sys)
    }

    pub fn build(&self) -> Result<Problem> {
        let grid = TimeGrid::new(self.grid.t0, self.grid.t_final, self.grid.step)?;
        let system = self.build_system()?;
        let cost = ConvexCost::from_spec(&self.cost)?;
        if cost.dim() != system.n() {
            return Err(Error::Invalid(format!(
                "cost dimension {} does not match the state dimension {}",
                cost.dim(),
                system.n()
            )));
        }
        if self.levels.is_empty() || self.levels.len() != self.counts.len() {
            return Err(Error::Invalid("levels and counts must be non-empty and of equal length".into()));
        }
        if self.counts.contains(&0) {
            return Err(Error::Invalid("every level needs at least one point".into()));
        }
        if self.levels.iter().any(|g| !g.is_finite()) || self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("levels must be finite and strictly increasing".into()));
        }
        let minimum = cost.min_value();
        if let Some(&gamma) = self.levels.iter().find(|&&g| g < minimum - 1e-12) {
            return Err(Error::LevelInfeasible { gamma, minimum });
        }
        Ok(Problem {
            system,
            cost,
            levels: self.levels.clone(),
            counts: self.counts.clone(),
            grid,
            seed: self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_json() {
        for name in PRESETS {
            let cfg = RunConfig::preset(name).unwrap();
            let back = RunConfig::from_json(&cfg.to_json()).unwrap();
            assert_eq!(cfg, back);
            assert_eq!(cfg.hash(), back.hash());
            cfg.build().unwrap();
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v: serde_json::Value = serde_json::to_value(presets::example_config()).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(RunConfig::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::to_value(presets::example_config()).unwrap();
        v["grid"]["h"] = serde_json::json!(0.1);
        assert!(RunConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn numbers_and_strings_mix() {
        let mut cfg = presets::example_config();
        cfg.system.a[0][1] = Entry::Number(1.0);
        let text = cfg.to_json();
        assert!(text.contains("1.0"));
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(back.system.a[0][1], Entry::Number(1.0));
        back.build().unwrap();
    }

    #[test]
    fn validation_errors() {
        let mut cfg = presets::example_config();
        cfg.grid.t_final = -1.0;
        assert!(cfg.build().unwrap_err().is_validation());

        let mut cfg = presets::example_config();
        cfg.grid.step = 0.0;
        assert!(cfg.build().unwrap_err().is_validation());

        let mut cfg = presets::example_config();
        cfg.levels[0] = -0.5;
        assert!(matches!(cfg.build().unwrap_err(), Error::LevelInfeasible { .. }));

        let mut cfg = presets::example_config();
        cfg.counts.pop();
        assert!(cfg.build().unwrap_err().is_validation());

        let mut cfg = presets::example_config();
        cfg.system.a[1][0] = Entry::from("cos(q)");
        assert!(matches!(cfg.build().unwrap_err(), Error::Expr { matrix: "A", row: 1, col: 0, .. }));

        let mut cfg = presets::example_config();
        cfg.system.e[1][0] = Entry::from("sqrt(t-1)");
        assert!(cfg.build().unwrap_err().is_validation());
    }

    #[test]
    fn hash_tracks_content() {
        let a = presets::example_config();
        let mut b = a.clone();
        b.seed = 7;
        assert_ne!(a.hash(), b.hash());
    }
}
