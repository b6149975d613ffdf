//! Run configuration: one JSON document, overridable from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::employability::ScoreOptions;
use crate::error::{Error, Result};
use crate::fe::DEFAULT_TOL;
use crate::model::{FilterRules, ProgramType};
use crate::peer::PeerOptions;
use crate::suite::SpecName;
use crate::synth::DgpConfig;
use crate::validity::{GuryanOptions, DEFAULT_Z_THRESHOLD};

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Where input CSVs are read from; falls back to `out_dir`.
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths { data_dir: None, out_dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    pub specs: Vec<SpecName>,
    pub outcomes: Vec<String>,
    pub program_types: Vec<ProgramType>,
    pub fe_tolerance: f64,
    /// Run heterogeneity splits as separate regressions instead of one interacted regression.
    pub separate_samples: bool,
    pub filter: FilterRules,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            specs: vec![SpecName::LinearInMeans, SpecName::MonthlyDynamics],
            outcomes: vec!["emp_days_60".into()],
            program_types: ProgramType::ALL.to_vec(),
            fe_tolerance: DEFAULT_TOL,
            separate_samples: false,
            filter: FilterRules::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidityConfig {
    pub n_sims: usize,
    pub z_threshold: f64,
    pub guryan: GuryanOptions,
}

impl Default for ValidityConfig {
    fn default() -> Self {
        ValidityConfig { n_sims: 500, z_threshold: DEFAULT_Z_THRESHOLD, guryan: GuryanOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    /// Generator settings; its own seed is replaced by the run seed.
    pub dgp: Option<DgpConfig>,
    pub score: ScoreOptions,
    pub peer: PeerOptions,
    pub estimation: EstimationConfig,
    pub validity: ValidityConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            paths: Paths::default(),
            dgp: None,
            score: ScoreOptions::default(),
            peer: PeerOptions::default(),
            estimation: EstimationConfig::default(),
            validity: ValidityConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(d) = &self.dgp {
            d.validate()?;
        }
        let e = &self.estimation;
        if !(e.fe_tolerance > 0.0 && e.fe_tolerance < 1.0) {
            return Err(Error::Config(format!("fe_tolerance must lie in (0, 1), got {}", e.fe_tolerance)));
        }
        if e.program_types.is_empty() || e.outcomes.is_empty() {
            return Err(Error::Config("estimation needs at least one program type and one outcome".into()));
        }
        if self.validity.n_sims < 2 {
            return Err(Error::Config("validity.n_sims must be at least 2".into()));
        }
        if !(self.validity.z_threshold > 0.0) {
            return Err(Error::Config("validity.z_threshold must be positive".into()));
        }
        if self.score.k_neighbors == 0 {
            return Err(Error::Config("score.k_neighbors must be positive".into()));
        }
        Ok(())
    }

    /// Generator settings with the run seed applied.
    pub fn dgp_config(&self) -> DgpConfig {
        DgpConfig { seed: self.seed, ..self.dgp.clone().unwrap_or_default() }
    }

    pub fn data_dir(&self) -> &Path {
        self.paths.data_dir.as_deref().unwrap_or(&self.paths.out_dir)
    }

    /// SHA-256 over the canonical JSON of everything that affects results.
    /// Paths are excluded so the same run in another directory hashes the same.
    pub fn hash(&self) -> String {
        let canonical = RunConfig { paths: Paths { data_dir: None, out_dir: PathBuf::new() }, ..self.clone() };
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn empty_sections_give_defaults() {
        let doc = r#"{"dgp": {}, "score": {}, "peer": {}, "estimation": {"filter": {}}, "validity": {"guryan": {}}}"#;
        let cfg = RunConfig::from_json(doc).unwrap();
        assert_eq!(cfg.peer, PeerOptions::default());
        assert_eq!(cfg.dgp_config(), DgpConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_json(r#"{"sed": 3}"#).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn hash_ignores_paths_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.paths.out_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn run_seed_wins_over_dgp_seed() {
        let cfg = RunConfig { seed: 9, dgp: Some(DgpConfig { seed: 1, ..DgpConfig::default() }), ..RunConfig::default() };
        assert_eq!(cfg.dgp_config().seed, 9);
    }

    #[test]
    fn bad_values_rejected() {
        assert!(RunConfig::from_json(r#"{"validity": {"n_sims": 1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"estimation": {"specs": ["nope"]}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"estimation": {"fe_tolerance": 0}}"#).is_err());
    }
}
