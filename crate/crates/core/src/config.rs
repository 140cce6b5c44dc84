//! TOML run configuration. Unknown keys are rejected; every key has a default.
//!
//! ```toml
//! [experiment]
//! id = "E2"            # E1 or E2
//! scale = "desk"       # desk or paper; picks default n/k grids and replicates
//! # n_values = [1024, 2048]
//! # k_values = [2, 3]
//! # replicates = 10
//! seed = 20240601
//!
//! [mm]
//! max_iters = 500
//! rel_tol = 1e-8
//! restarts = 5
//! newton_max_iters = 50
//! newton_tol = 1e-10
//! shape_min = 1.0
//! shape_max = 50.0
//!
//! [quadrature]
//! points_per_panel = 64
//! edge_inset = 1e-12
//! breakpoints = []
//!
//! [greedy]
//! k_max = 6
//! pi_count = 101
//! shape_count = 25
//!
//! [output]
//! dir = "out"
//! workers = 1
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::densities::ParamBox;
use crate::error::{Error, Result};
use crate::estimation::{GreedyGrid, MMConfig};
use crate::experiments::{ExperimentId, ExperimentPlan, DEFAULT_MASTER_SEED};
use crate::numerics::QuadratureSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub id: String,
    pub scale: Scale,
    pub n_values: Option<Vec<usize>>,
    pub k_values: Option<Vec<usize>>,
    pub replicates: Option<usize>,
    pub seed: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            id: "E2".into(),
            scale: Scale::Desk,
            n_values: None,
            k_values: None,
            replicates: None,
            seed: DEFAULT_MASTER_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmSection {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub restarts: usize,
    pub newton_max_iters: usize,
    pub newton_tol: f64,
    pub shape_min: f64,
    pub shape_max: f64,
}

impl Default for MmSection {
    fn default() -> Self {
        let d = MMConfig::default();
        Self {
            max_iters: d.max_iters,
            rel_tol: d.rel_tol,
            restarts: d.restarts,
            newton_max_iters: d.newton_max_iters,
            newton_tol: d.newton_tol,
            shape_min: d.bounds.min,
            shape_max: d.bounds.max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSection {
    pub points_per_panel: usize,
    pub edge_inset: f64,
    pub breakpoints: Vec<f64>,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        let d = QuadratureSpec::default();
        Self {
            points_per_panel: d.points_per_panel(),
            edge_inset: d.edge_inset(),
            breakpoints: d.breakpoints().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreedySection {
    pub k_max: usize,
    pub pi_count: usize,
    pub shape_count: usize,
}

impl Default for GreedySection {
    fn default() -> Self {
        Self {
            k_max: 6,
            pi_count: 101,
            shape_count: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub workers: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentSection,
    pub mm: MmSection,
    pub quadrature: QuadratureSection,
    pub greedy: GreedySection,
    pub output: OutputSection,
}

impl RunConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.plan()?;
        self.greedy_grid()?;
        if self.output.workers == 0 {
            return Err(Error::InvalidParams(
                "output.workers must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn experiment_id(&self) -> Result<ExperimentId> {
        self.experiment.id.parse()
    }

    pub fn param_box(&self) -> ParamBox {
        ParamBox {
            min: self.mm.shape_min,
            max: self.mm.shape_max,
        }
    }

    pub fn mm_config(&self) -> Result<MMConfig> {
        let cfg = MMConfig {
            max_iters: self.mm.max_iters,
            rel_tol: self.mm.rel_tol,
            restarts: self.mm.restarts,
            newton_max_iters: self.mm.newton_max_iters,
            newton_tol: self.mm.newton_tol,
            bounds: self.param_box(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn quadrature_spec(&self) -> Result<QuadratureSpec> {
        QuadratureSpec::new(
            self.quadrature.breakpoints.clone(),
            self.quadrature.points_per_panel,
            self.quadrature.edge_inset,
        )
    }

    pub fn greedy_grid(&self) -> Result<GreedyGrid> {
        GreedyGrid::regular(
            self.greedy.pi_count,
            self.greedy.shape_count,
            &self.param_box(),
        )
    }

    /// Plan from the scale preset with any explicit overrides applied.
    pub fn plan(&self) -> Result<ExperimentPlan> {
        let id = self.experiment_id()?;
        let base = match self.experiment.scale {
            Scale::Desk => ExperimentPlan::desk(id, self.experiment.seed),
            Scale::Paper => ExperimentPlan::paper(id, self.experiment.seed),
        };
        let mut plan = ExperimentPlan::new(
            id,
            self.experiment.n_values.clone().unwrap_or(base.n_values),
            self.experiment.k_values.clone().unwrap_or(base.k_values),
            self.experiment.replicates.unwrap_or(base.replicates),
            self.experiment.seed,
        )?;
        plan.mm = self.mm_config()?;
        plan.quadrature = self.quadrature_spec()?;
        plan.validate()?;
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let plan = cfg.plan().unwrap();
        assert_eq!(plan.n_values, vec![1024, 2048, 4096, 8192]);
        assert_eq!(plan.k_values, vec![2, 3, 4, 5, 6]);
        assert_eq!(plan.replicates, 10);
        assert_eq!(plan.mm, MMConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml_str("[mm]\nmax_iter = 3\n").is_err());
        assert!(RunConfig::from_toml_str("[extra]\n").is_err());
        assert!(RunConfig::from_toml_str("colour = 1\n").is_err());
    }

    #[test]
    fn overrides_and_validation() {
        let cfg = RunConfig::from_toml_str(
            "[experiment]\nid = \"E1\"\nscale = \"paper\"\nreplicates = 3\n[mm]\nrestarts = 2\n[output]\nworkers = 4\n",
        )
        .unwrap();
        let plan = cfg.plan().unwrap();
        assert_eq!(plan.experiment, ExperimentId::E1);
        assert_eq!(plan.n_values.len(), 6);
        assert_eq!(plan.replicates, 3);
        assert_eq!(plan.mm.restarts, 2);
        assert!(RunConfig::from_toml_str("[experiment]\nid = \"E9\"\n").is_err());
        assert!(RunConfig::from_toml_str("[experiment]\nk_values = [3, 2]\n").is_err());
        assert!(RunConfig::from_toml_str("[output]\nworkers = 0\n").is_err());
        assert!(RunConfig::from_toml_str("[quadrature]\nedge_inset = 0.7\n").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::default();
        assert_eq!(
            RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap(),
            cfg
        );
    }
}
