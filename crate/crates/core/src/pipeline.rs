//! The five command-line stages. Each reads its inputs from disk and writes
//! its outputs to the output directory, so stages compose without hidden state.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::employability::{balance_rows, score_dataset, ScoringStage, BALANCE_HEADER};
use crate::error::{Error, Result};
use crate::io::{load_dataset, write_courses, write_json, write_persons, write_table};
use crate::model::{filter_estimation_sample, Dataset, ProgramType};
use crate::peer::{compute_peer_table, peer_table_rows, PeerTable};
use crate::suite::{
    dynamics_rows, effect_rows, monthly_dynamics, run_spec, DynamicProfile, EffectReport, Sample, SpecName,
    DYNAMICS_HEADER, EFFECT_HEADER,
};
use crate::synth::generate;
use crate::validity::{
    derived_rng, guryan_test, resampling_test, sorting_diagnostics, sorting_rows, variance_decomposition,
    ExogeneityReport, ResamplingReport, VarianceRow, SORTING_HEADER,
};

pub const PERSONS: &str = "persons.csv";
pub const COURSES: &str = "courses.csv";
pub const SCORED: &str = "persons_scored.csv";
pub const GROUND_TRUTH: &str = "ground_truth.json";

/// Provenance block attached to every JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub config_hash: String,
    pub seed: u64,
    pub stage: String,
}

#[derive(Debug, Serialize)]
struct Stamped<'a, T: Serialize> {
    meta: &'a Meta,
    #[serde(flatten)]
    body: T,
}

/// Per-stage listing of written files with their SHA-256, so CSV outputs are
/// tied to the config hash too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub meta: Meta,
    pub files: BTreeMap<String, String>,
}

struct Stage<'a> {
    cfg: &'a RunConfig,
    meta: Meta,
    written: Vec<PathBuf>,
}

impl<'a> Stage<'a> {
    fn new(cfg: &'a RunConfig, name: &str) -> Result<Self> {
        let out = &cfg.paths.out_dir;
        if !out.is_dir() {
            return Err(Error::Config(format!("output directory {} does not exist", out.display())));
        }
        Ok(Stage {
            cfg,
            meta: Meta { config_hash: cfg.hash(), seed: cfg.seed, stage: name.into() },
            written: Vec::new(),
        })
    }

    fn path(&mut self, file: &str) -> PathBuf {
        let p = self.cfg.paths.out_dir.join(file);
        self.written.push(p.clone());
        p
    }

    fn json<T: Serialize>(&mut self, file: &str, body: T) -> Result<()> {
        let p = self.path(file);
        write_json(&Stamped { meta: &self.meta, body }, &p)
    }

    fn table(&mut self, file: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let p = self.path(file);
        write_table(&p, header, rows)
    }

    fn finish(self) -> Result<Vec<PathBuf>> {
        let mut files = BTreeMap::new();
        for p in &self.written {
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            files.insert(name, hex(&Sha256::digest(&bytes)));
        }
        let path = self.cfg.paths.out_dir.join(format!("manifest_{}.json", self.meta.stage));
        write_json(&Manifest { meta: self.meta, files }, &path)?;
        let mut out = self.written;
        out.push(path);
        Ok(out)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn input(cfg: &RunConfig, file: &str) -> Result<PathBuf> {
    [cfg.data_dir(), cfg.paths.out_dir.as_path()]
        .into_iter()
        .map(|d| d.join(file))
        .find(|p| p.is_file())
        .ok_or_else(|| {
            Error::io(
                cfg.data_dir().join(file),
                std::io::Error::new(std::io::ErrorKind::NotFound, "input not found; run the earlier stage first"),
            )
        })
}

fn load_scored(cfg: &RunConfig) -> Result<Dataset> {
    let ds = load_dataset(&input(cfg, SCORED)?, &input(cfg, COURSES)?)?;
    if ds.participants().all(|(_, p)| p.employability.is_none()) {
        return Err(Error::Integrity(format!("{SCORED} carries no employability scores")));
    }
    filter_estimation_sample(&ds, &cfg.estimation.filter)
}

fn samples<'a>(cfg: &RunConfig, ds: &'a Dataset, table: &'a PeerTable) -> Result<Vec<Sample<'a>>> {
    cfg.estimation
        .program_types
        .iter()
        .map(|&t| {
            let mut s = Sample::build(ds, table, t)?;
            s.tol = cfg.estimation.fe_tolerance;
            Ok(s)
        })
        .collect()
}

/// Draws a synthetic dataset and its ground truth.
pub fn cmd_synth(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut st = Stage::new(cfg, "synth")?;
    let (ds, truth) = generate(&cfg.dgp_config())?;
    write_persons(&ds, &st.path(PERSONS))?;
    write_courses(&ds, &st.path(COURSES))?;
    st.json(GROUND_TRUTH, &truth)?;
    st.finish()
}

#[derive(Serialize)]
struct ScoreModels<'a> {
    joint: bool,
    stages: &'a [ScoringStage],
}

/// Propensity matching, balance and employability scoring.
pub fn cmd_score(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut st = Stage::new(cfg, "score")?;
    let ds = load_dataset(&input(cfg, PERSONS)?, &input(cfg, COURSES)?)?;
    let scored = score_dataset(&ds, &cfg.score)?;
    write_persons(&scored.dataset, &st.path(SCORED))?;
    st.json("score_model.json", ScoreModels { joint: cfg.score.joint, stages: &scored.stages })?;
    for stage in &scored.stages {
        let file = match stage.program_type {
            None => "balance.csv".to_string(),
            Some(t) => format!("balance_{t}.csv"),
        };
        st.table(&file, &BALANCE_HEADER, &balance_rows(&stage.balance))?;
    }
    st.finish()
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    reports: &'a [EffectReport],
    dynamics: &'a [DynamicProfile],
}

enum Job {
    Effects(usize, SpecName, String),
    Dynamics(usize),
}

enum JobOut {
    Effects(Vec<EffectReport>),
    Dynamics(DynamicProfile),
}

/// Runs the configured specifications for every program type and outcome.
pub fn cmd_estimate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut st = Stage::new(cfg, "estimate")?;
    let ds = load_scored(cfg)?;
    let table = compute_peer_table(&ds, cfg.peer)?;
    let (header, rows) = peer_table_rows(&ds, &table);
    st.table("peer_stats.csv", &header, &rows)?;

    let samples = samples(cfg, &ds, &table)?;
    let mut jobs = Vec::new();
    for k in 0..samples.len() {
        for &spec in &cfg.estimation.specs {
            if spec == SpecName::MonthlyDynamics {
                jobs.push(Job::Dynamics(k));
            } else {
                jobs.extend(cfg.estimation.outcomes.iter().map(|o| Job::Effects(k, spec, o.clone())));
            }
        }
    }
    let outputs: Vec<JobOut> = jobs
        .par_iter()
        .map(|job| match job {
            Job::Effects(k, spec, outcome) => {
                run_spec(&samples[*k], *spec, outcome, cfg.estimation.separate_samples).map(JobOut::Effects)
            }
            Job::Dynamics(k) => monthly_dynamics(&samples[*k]).map(JobOut::Dynamics),
        })
        .collect::<Result<_>>()?;

    let mut reports = Vec::new();
    let mut dynamics = Vec::new();
    for (job, out) in jobs.iter().zip(outputs) {
        match (job, out) {
            (Job::Effects(k, spec, outcome), JobOut::Effects(rs)) => {
                let rows: Vec<Vec<String>> = rs.iter().flat_map(effect_rows).collect();
                let file = format!("effects_{}_{}_{}.csv", spec.as_str(), samples[*k].program_type, outcome);
                st.table(&file, &EFFECT_HEADER, &rows)?;
                reports.extend(rs);
            }
            (_, JobOut::Dynamics(d)) => {
                st.table(&format!("dynamics_{}.csv", d.program_type), &DYNAMICS_HEADER, &dynamics_rows(&d))?;
                dynamics.push(d);
            }
            _ => unreachable!("job and output kinds line up"),
        }
    }
    st.json("report.json", EstimateReport { reports: &reports, dynamics: &dynamics })?;
    st.finish()
}

#[derive(Debug, Serialize)]
struct PerType<T> {
    program_type: ProgramType,
    #[serde(flatten)]
    report: T,
}

#[derive(Serialize)]
struct Reports<T> {
    reports: Vec<PerType<T>>,
}

/// Resampling test, exclusion-bias test, sorting screens and variance decomposition.
pub fn cmd_validate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut st = Stage::new(cfg, "validate")?;
    let ds = load_scored(cfg)?;
    let table = compute_peer_table(&ds, cfg.peer)?;
    let samples = samples(cfg, &ds, &table)?;
    let v = &cfg.validity;

    type Triple = (ResamplingReport, ExogeneityReport, Vec<VarianceRow>);
    let results: Vec<Triple> = samples
        .iter()
        .map(|s| {
            // one independent stream per program type
            let seed = rand::RngCore::next_u64(&mut derived_rng(cfg.seed, s.program_type.index() as u64));
            Ok((resampling_test(s, v.n_sims, seed, v.z_threshold)?, guryan_test(s, v.guryan)?, variance_decomposition(s)?))
        })
        .collect::<Result<_>>()?;

    let types: Vec<ProgramType> = samples.iter().map(|s| s.program_type).collect();
    let mut resampling = Vec::new();
    let mut guryan = Vec::new();
    let mut variance = Vec::new();
    for (t, (r, g, vd)) in types.iter().zip(results) {
        resampling.push(PerType { program_type: *t, report: r });
        guryan.push(PerType { program_type: *t, report: g });
        variance.extend(vd.into_iter().map(|row| {
            vec![t.to_string(), row.variable, row.raw_sd.to_string(), row.net_sd.to_string()]
        }));
    }
    st.json("validity_resampling.json", Reports { reports: resampling })?;
    st.json("validity_guryan.json", Reports { reports: guryan })?;
    st.table("sorting_diagnostics.csv", &SORTING_HEADER, &sorting_rows(&sorting_diagnostics(&ds)?))?;
    st.table("variance_decomposition.csv", &["program_type", "variable", "raw_sd", "net_sd"], &variance)?;
    st.finish()
}

/// Runs synth, score, estimate and validate in sequence.
pub fn run_all(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut files = cmd_synth(cfg)?;
    let chained = RunConfig {
        paths: crate::config::Paths { data_dir: None, ..cfg.paths.clone() },
        ..cfg.clone()
    };
    files.extend(cmd_score(&chained)?);
    files.extend(cmd_estimate(&chained)?);
    files.extend(cmd_validate(&chained)?);
    Ok(files)
}

/// Reads the ground truth written by [`cmd_synth`].
pub fn read_ground_truth(path: &Path) -> Result<crate::synth::GroundTruth> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema {
        file: path.display().to_string(),
        row: e.line(),
        column: format!("char {}", e.column()),
        message: e.to_string(),
    })
}
