//! Named estimation recipes over the fixed-effects engine.
//!
//! Every recipe runs on one program type and shares the same right-hand side:
//! own employability, course controls and own unemployment duration, with
//! provider-month-group, season, occupation and competence-level effects
//! absorbed and standard errors clustered by course.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe::{
    linear_combination, t_pvalue, wald_joint, AbsorbedDesign, FESpec, Factor, RegressionResult, Regressor,
    Residualizer, WaldTest, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::model::{derive_month_group, derive_season, CourseControls, Dataset, ProgramType, PANEL_MONTHS};
use crate::peer::{PeerStats, PeerTable, OTHER_CHARACTERISTICS};

pub const OWN: &str = "own_employability";
pub const PEER_MEAN: &str = "peer_mean";
pub const PEER_SD: &str = "peer_sd";
pub const OWN_UED: &str = "ue_duration_at_start";

/// Individual controls used with alternate peer characteristics.
pub const INDIVIDUAL_CONTROLS: [&str; 6] = ["age", "female", "non_german", "highschool", "voc_training", "academic"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    PerSd,
    Per10pp,
    PerMonthPeerUed,
    PValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub term: String,
    pub effect: f64,
    pub se: f64,
    pub p: f64,
    pub unit: Unit,
    /// Unscaled coefficient and its SE.
    pub coef: f64,
    pub coef_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectReport {
    pub program_type: ProgramType,
    pub outcome: String,
    pub spec: String,
    pub rows: Vec<EffectRow>,
    pub nobs: usize,
    pub n_clusters: usize,
    pub dropped: Vec<String>,
    pub joint_test: Option<WaldTest>,
    pub residual_sd: BTreeMap<String, f64>,
}

impl EffectReport {
    pub fn row(&self, term: &str) -> Option<&EffectRow> {
        self.rows.iter().find(|r| r.term == term)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicEntry {
    pub month: usize,
    /// `None` for a month whose outcome does not vary.
    pub effect_pp: Option<f64>,
    pub se_pp: Option<f64>,
    pub p: Option<f64>,
    pub significant_5pct: bool,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicProfile {
    pub program_type: ProgramType,
    pub entries: Vec<DynamicEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    OwnEmployabilityMedian,
    Female,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bins {
    Quintiles,
    Thirds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionLevel {
    MeanSd,
    MeanSdCross,
    Full,
}

/// Specification names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecName {
    LinearInMeans,
    MonthlyDynamics,
    HeterogeneityMedian,
    HeterogeneityFemale,
    FractionsQuintiles,
    FractionsThirds,
    InteractedMeanSd,
    InteractedMeanSdCross,
    InteractedFull,
    PeerUed,
    OtherPeerCharacteristics,
}

impl SpecName {
    pub const ALL: [SpecName; 11] = [
        SpecName::LinearInMeans,
        SpecName::MonthlyDynamics,
        SpecName::HeterogeneityMedian,
        SpecName::HeterogeneityFemale,
        SpecName::FractionsQuintiles,
        SpecName::FractionsThirds,
        SpecName::InteractedMeanSd,
        SpecName::InteractedMeanSdCross,
        SpecName::InteractedFull,
        SpecName::PeerUed,
        SpecName::OtherPeerCharacteristics,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SpecName::LinearInMeans => "linear_in_means",
            SpecName::MonthlyDynamics => "monthly_dynamics",
            SpecName::HeterogeneityMedian => "heterogeneity_median",
            SpecName::HeterogeneityFemale => "heterogeneity_female",
            SpecName::FractionsQuintiles => "fractions_quintiles",
            SpecName::FractionsThirds => "fractions_thirds",
            SpecName::InteractedMeanSd => "interacted_mean_sd",
            SpecName::InteractedMeanSdCross => "interacted_mean_sd_cross",
            SpecName::InteractedFull => "interacted_full",
            SpecName::PeerUed => "peer_ued",
            SpecName::OtherPeerCharacteristics => "other_peer_characteristics",
        }
    }
}

impl fmt::Display for SpecName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpecName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SpecName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = SpecName::ALL.iter().map(|n| n.as_str()).collect();
                Error::Usage(format!("unknown specification `{s}`; expected one of {}", known.join(", ")))
            })
    }
}

/// Participants of one program type with their peer statistics and the
/// shared fixed-effect structure.
pub struct Sample<'a> {
    pub ds: &'a Dataset,
    pub program_type: ProgramType,
    pub persons: Vec<usize>,
    pub peer: Vec<&'a PeerStats>,
    pub own: Vec<f64>,
    pub own_ued: Vec<f64>,
    pub controls: Vec<(String, Vec<f64>)>,
    pub factors: Vec<Factor>,
    pub cluster: Factor,
    pub tol: f64,
}

impl<'a> Sample<'a> {
    pub fn build(ds: &'a Dataset, table: &'a PeerTable, program_type: ProgramType) -> Result<Self> {
        let mut persons = Vec::new();
        let mut peer = Vec::new();
        let mut cells = Vec::new();
        let mut seasons = Vec::new();
        let mut occupations = Vec::new();
        let mut competences = Vec::new();
        let mut courses = Vec::new();
        let mut controls: Vec<Vec<f64>> = vec![Vec::new(); CourseControls::NAMES.len()];
        for (i, _) in ds.participants() {
            let Some(c) = ds.course_of(i) else { continue };
            let course = &ds.courses()[c];
            if course.program_type != program_type {
                continue;
            }
            let Some(stats) = table.get(i) else { continue };
            persons.push(i);
            peer.push(stats);
            cells.push(derive_month_group(course));
            seasons.push(derive_season(course));
            occupations.push(course.target_occupation);
            competences.push(course.competence_level);
            courses.push(course.course_id);
            for (col, v) in controls.iter_mut().zip(course.controls.values()) {
                col.push(v);
            }
        }
        if persons.is_empty() {
            return Err(Error::EmptySample(format!("no scored participants in {program_type} courses")));
        }
        let own = persons.iter().map(|&i| ds.persons()[i].employability.unwrap_or(f64::NAN)).collect();
        let own_ued = persons.iter().map(|&i| ds.persons()[i].ue_duration_at_start.unwrap_or(0.0)).collect();
        Ok(Sample {
            ds,
            program_type,
            persons,
            peer,
            own,
            own_ued,
            controls: CourseControls::NAMES.iter().map(|s| s.to_string()).zip(controls).collect(),
            factors: vec![
                Factor::from_keys("provider_month_group", &cells),
                Factor::from_keys("season", &seasons),
                Factor::from_keys("target_occupation", &occupations),
                Factor::from_keys("competence_level", &competences),
            ],
            cluster: Factor::from_keys("course", &courses),
            tol: DEFAULT_TOL,
        })
    }

    pub fn len(&self) -> usize {
        self.persons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.persons.is_empty()
    }

    pub fn fe_spec(&self) -> FESpec {
        let mut s = FESpec::new(self.factors.clone(), self.cluster.clone());
        s.tol = self.tol;
        s
    }

    pub fn peer_mean(&self) -> Vec<f64> {
        self.peer.iter().map(|s| s.loo_mean).collect()
    }

    pub fn peer_sd(&self) -> Vec<f64> {
        self.peer.iter().map(|s| s.loo_sd.unwrap_or(0.0)).collect()
    }

    /// Values of an outcome: a named outcome, `employed_m<k>`, or any covariate column.
    pub fn outcome(&self, name: &str) -> Result<Vec<f64>> {
        let persons = self.ds.persons();
        let month = name.strip_prefix("employed_m").and_then(|k| k.parse::<usize>().ok());
        let get = |i: usize| -> Result<f64> {
            let p = &persons[i];
            if let Some(j) = self.ds.covariate_index(name) {
                return Ok(p.covariates[j]);
            }
            let o = p
                .outcomes
                .as_ref()
                .ok_or_else(|| Error::InsufficientData(format!("participant {} has no outcomes", p.person_id)))?;
            match (name, month) {
                ("search_duration_days", _) => Ok(o.search_duration_days),
                ("emp_days_60", _) => Ok(o.emp_days_60),
                ("log_total_earn_60", _) => Ok(o.log_total_earn_60),
                ("log_first_job_earn", _) => Ok(o.log_first_job_earn),
                (_, Some(m)) if (1..=PANEL_MONTHS).contains(&m) => Ok(f64::from(o.employed[m - 1])),
                _ => Err(Error::Usage(format!("unknown outcome `{name}`"))),
            }
        };
        self.persons.iter().map(|&i| get(i)).collect()
    }

    fn base_regressors(&self) -> Vec<Regressor> {
        let mut r = vec![Regressor::new(OWN, self.own.clone())];
        r.extend(self.controls.iter().map(|(n, v)| Regressor::control(n.clone(), v.clone())));
        r.push(Regressor::new(OWN_UED, self.own_ued.clone()));
        r
    }

    /// Residualizer over the absorbed factors and course controls.
    pub fn residualizer(&self) -> Result<Residualizer> {
        let ctl: Vec<Vec<f64>> = self.controls.iter().map(|(_, v)| v.clone()).collect();
        Residualizer::new(&self.factors, &ctl, self.tol, DEFAULT_MAX_ITER)
    }

    /// SD of a variable net of fixed effects and course controls.
    pub fn net_sd(&self, v: &[f64]) -> Result<f64> {
        Ok(crate::fe::sd(&self.residualizer()?.residualize(v)?))
    }
}

fn scaled_row(res: &RegressionResult, name: &str, term: &str, scale: f64, unit: Unit) -> Option<EffectRow> {
    let i = res.index(name)?;
    Some(EffectRow {
        term: term.into(),
        effect: res.coef[i] * scale,
        se: res.se[i] * scale,
        p: res.p[i],
        unit,
        coef: res.coef[i],
        coef_se: res.se[i],
    })
}

fn report(sample: &Sample, outcome: &str, spec: SpecName, res: &RegressionResult, rows: Vec<EffectRow>) -> EffectReport {
    EffectReport {
        program_type: sample.program_type,
        outcome: outcome.into(),
        spec: spec.as_str().into(),
        rows,
        nobs: res.nobs,
        n_clusters: res.n_clusters,
        dropped: res.dropped.clone(),
        joint_test: None,
        residual_sd: res.residual_sd.clone(),
    }
}

/// Peer effects enter through the leave-one-out mean only; effects per residual SD.
pub fn linear_in_means(sample: &Sample, outcome: &str) -> Result<EffectReport> {
    let y = sample.outcome(outcome)?;
    let mut regs = sample.base_regressors();
    regs.insert(1, Regressor::new(PEER_MEAN, sample.peer_mean()));
    let res = AbsorbedDesign::new(&regs, &sample.fe_spec())?.fit(&y)?;
    let sd = |n: &str| res.residual_sd.get(n).copied().unwrap_or(0.0);
    let rows = [
        scaled_row(&res, OWN, OWN, sd(OWN), Unit::PerSd),
        scaled_row(&res, PEER_MEAN, PEER_MEAN, sd(PEER_MEAN), Unit::PerSd),
    ]
    .into_iter()
    .flatten()
    .collect();
    Ok(report(sample, outcome, SpecName::LinearInMeans, &res, rows))
}

/// One linear probability model per month after program start; effects in
/// percentage points per residual SD of the peer mean.
pub fn monthly_dynamics(sample: &Sample) -> Result<DynamicProfile> {
    let mut regs = sample.base_regressors();
    regs.insert(1, Regressor::new(PEER_MEAN, sample.peer_mean()));
    let design = AbsorbedDesign::new(&regs, &sample.fe_spec())?;
    let scale = design.residual_sd().get(PEER_MEAN).copied().unwrap_or(0.0) * 100.0;
    let outcomes: Vec<Vec<f64>> =
        (1..=PANEL_MONTHS).map(|m| sample.outcome(&format!("employed_m{m}"))).collect::<Result<_>>()?;
    let entries: Vec<Result<DynamicEntry>> = outcomes
        .par_iter()
        .enumerate()
        .map(|(m, y)| {
            let month = m + 1;
            if y.iter().all(|&v| v == y[0]) {
                return Ok(DynamicEntry {
                    month,
                    effect_pp: None,
                    se_pp: None,
                    p: None,
                    significant_5pct: false,
                    degenerate: true,
                });
            }
            let res = design.fit(y)?;
            let i = res.index(PEER_MEAN).ok_or_else(|| Error::Singular("peer mean dropped".into()))?;
            Ok(DynamicEntry {
                month,
                effect_pp: Some(res.coef[i] * scale),
                se_pp: Some(res.se[i] * scale),
                p: Some(res.p[i]),
                significant_5pct: res.p[i] < 0.05,
                degenerate: false,
            })
        })
        .collect();
    Ok(DynamicProfile { program_type: sample.program_type, entries: entries.into_iter().collect::<Result<_>>()? })
}

/// Peer effect on either side of a split, estimated in one regression with
/// shared fixed effects, plus the p-value of the difference.
pub fn heterogeneity_split(sample: &Sample, outcome: &str, split: Split) -> Result<EffectReport> {
    let y = sample.outcome(outcome)?;
    let (indicator, labels) = split_indicator(sample, split)?;
    let pm = sample.peer_mean();
    let scale = sample.net_sd(&pm)?;
    let a: Vec<f64> = pm.iter().zip(&indicator).map(|(m, d)| m * d).collect();
    let b: Vec<f64> = pm.iter().zip(&indicator).map(|(m, d)| m * (1.0 - d)).collect();
    let mut regs = sample.base_regressors();
    regs.insert(1, Regressor::new("peer_mean_a", a));
    regs.insert(2, Regressor::new("peer_mean_b", b));
    regs.push(Regressor::new("split_indicator", indicator));
    let res = AbsorbedDesign::new(&regs, &sample.fe_spec())?.fit(&y)?;
    let mut rows: Vec<EffectRow> = [
        scaled_row(&res, "peer_mean_a", labels.0, scale, Unit::PerSd),
        scaled_row(&res, "peer_mean_b", labels.1, scale, Unit::PerSd),
    ]
    .into_iter()
    .flatten()
    .collect();
    let (diff, se, p) = linear_combination(&res, &[("peer_mean_a", 1.0), ("peer_mean_b", -1.0)])?;
    rows.push(EffectRow {
        term: "P-value difference".into(),
        effect: diff * scale,
        se: se * scale,
        p,
        unit: Unit::PValue,
        coef: diff,
        coef_se: se,
    });
    let spec = match split {
        Split::OwnEmployabilityMedian => SpecName::HeterogeneityMedian,
        Split::Female => SpecName::HeterogeneityFemale,
    };
    Ok(report(sample, outcome, spec, &res, rows))
}

fn split_indicator(sample: &Sample, split: Split) -> Result<(Vec<f64>, (&'static str, &'static str))> {
    let d: Vec<f64> = match split {
        Split::OwnEmployabilityMedian => {
            let mut sorted = sample.own.clone();
            sorted.sort_by(f64::total_cmp);
            let median = crate::peer::quantile_sorted(&sorted, 0.5);
            sample.own.iter().map(|&x| f64::from(x < median)).collect()
        }
        Split::Female => {
            let j = sample
                .ds
                .covariate_index("female")
                .ok_or_else(|| Error::Usage("split on gender needs a `female` covariate".into()))?;
            sample.persons.iter().map(|&i| sample.ds.persons()[i].covariates[j]).collect()
        }
    };
    let ones = d.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == d.len() {
        return Err(Error::EmptySample("one side of the heterogeneity split is empty".into()));
    }
    let labels = match split {
        Split::OwnEmployabilityMedian => ("PE low employability", "PE high employability"),
        Split::Female => ("PE female", "PE male"),
    };
    Ok((d, labels))
}

/// Separate regressions per side; the difference test assumes independent samples.
pub fn heterogeneity_separate(sample: &Sample, outcome: &str, split: Split) -> Result<EffectReport> {
    let y = sample.outcome(outcome)?;
    let (indicator, labels) = split_indicator(sample, split)?;
    let pm = sample.peer_mean();
    let scale = sample.net_sd(&pm)?;
    let mut rows = Vec::new();
    let mut parts = Vec::new();
    let mut last = None;
    for (side, label) in [(1.0, labels.0), (0.0, labels.1)] {
        let keep: Vec<usize> = (0..sample.len()).filter(|&i| indicator[i] == side).collect();
        let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let mut regs = vec![Regressor::new(OWN, pick(&sample.own)), Regressor::new(PEER_MEAN, pick(&pm))];
        regs.extend(sample.controls.iter().map(|(n, v)| Regressor::control(n.clone(), pick(v))));
        regs.push(Regressor::new(OWN_UED, pick(&sample.own_ued)));
        let factors: Vec<Factor> = sample
            .factors
            .iter()
            .map(|f| Factor::from_keys(f.name.clone(), &keep.iter().map(|&i| f.levels[i]).collect::<Vec<_>>()))
            .collect();
        let cluster = Factor::from_keys("course", &keep.iter().map(|&i| sample.cluster.levels[i]).collect::<Vec<_>>());
        let mut spec = FESpec::new(factors, cluster);
        spec.tol = sample.tol;
        let res = AbsorbedDesign::new(&regs, &spec)?.fit(&pick(&y))?;
        let row = scaled_row(&res, PEER_MEAN, label, scale, Unit::PerSd)
            .ok_or_else(|| Error::Singular(format!("peer mean dropped for `{label}`")))?;
        parts.push((row.coef, row.coef_se));
        rows.push(row);
        last = Some(res);
    }
    let diff = parts[0].0 - parts[1].0;
    let se = (parts[0].1.powi(2) + parts[1].1.powi(2)).sqrt();
    let z = diff / se;
    let normal = statrs::distribution::Normal::new(0.0, 1.0).expect("standard normal");
    use statrs::distribution::ContinuousCDF;
    rows.push(EffectRow {
        term: "P-value difference".into(),
        effect: diff * scale,
        se: se * scale,
        p: 2.0 * (1.0 - normal.cdf(z.abs())),
        unit: Unit::PValue,
        coef: diff,
        coef_se: se,
    });
    let res = last.expect("two sides");
    let spec = match split {
        Split::OwnEmployabilityMedian => SpecName::HeterogeneityMedian,
        Split::Female => SpecName::HeterogeneityFemale,
    };
    let mut r = report(sample, outcome, spec, &res, rows);
    r.nobs = sample.len();
    Ok(r)
}

/// Shares of peers in the top and bottom bins replace the peer mean; effects per 10pp.
pub fn fractions_model(sample: &Sample, outcome: &str, bins: Bins) -> Result<EffectReport> {
    let y = sample.outcome(outcome)?;
    let pick = |s: &PeerStats| match bins {
        Bins::Quintiles => s.frac_quintile.clone(),
        Bins::Thirds => s.frac_third.clone(),
    };
    let top: Vec<f64> = sample.peer.iter().map(|s| *pick(s).last().unwrap_or(&0.0)).collect();
    let bottom: Vec<f64> = sample.peer.iter().map(|s| *pick(s).first().unwrap_or(&0.0)).collect();
    let mut regs = sample.base_regressors();
    regs.insert(1, Regressor::new("frac_top", top));
    regs.insert(2, Regressor::new("frac_bottom", bottom));
    let res = AbsorbedDesign::new(&regs, &sample.fe_spec())?.fit(&y)?;
    let word = match bins {
        Bins::Quintiles => "quintile",
        Bins::Thirds => "third",
    };
    let mut rows: Vec<EffectRow> = [
        scaled_row(&res, "frac_top", &format!("Fraction of peers in top {word}"), 0.1, Unit::Per10pp),
        scaled_row(&res, "frac_bottom", &format!("Fraction of peers in bottom {word}"), 0.1, Unit::Per10pp),
    ]
    .into_iter()
    .flatten()
    .collect();
    if res.index("frac_top").is_some() && res.index("frac_bottom").is_some() {
        let (d, se, p) = linear_combination(&res, &[("frac_top", 1.0), ("frac_bottom", -1.0)])?;
        rows.push(EffectRow {
            term: format!("Difference top - bottom {word}"),
            effect: d * 0.1,
            se: se * 0.1,
            p,
            unit: Unit::Per10pp,
            coef: d,
            coef_se: se,
        });
    }
    let spec = match bins {
        Bins::Quintiles => SpecName::FractionsQuintiles,
        Bins::Thirds => SpecName::FractionsThirds,
    };
    Ok(report(sample, outcome, spec, &res, rows))
}

/// Own score, peer mean and peer SD standardized to mean zero and unit
/// residual SD, with interactions added by level. The joint test covers every
/// peer term.
pub fn interacted_model(sample: &Sample, outcome: &str, level: InteractionLevel) -> Result<EffectReport> {
    let y = sample.outcome(outcome)?;
    let rz = sample.residualizer()?;
    let standardize = |v: &[f64]| -> Result<Vec<f64>> {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let sd = crate::fe::sd(&rz.residualize(v)?);
        if sd == 0.0 {
            return Err(Error::Singular("variable has no residual variation".into()));
        }
        Ok(v.iter().map(|x| (x - mean) / sd).collect())
    };
    let own = standardize(&sample.own)?;
    let mean = standardize(&sample.peer_mean())?;
    let sd = standardize(&sample.peer_sd())?;
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<f64>>();

    let mut terms: Vec<(&str, Vec<f64>)> = vec![(OWN, own.clone()), (PEER_MEAN, mean.clone()), (PEER_SD, sd.clone())];
    if matches!(level, InteractionLevel::MeanSdCross | InteractionLevel::Full) {
        terms.push(("peer_mean_x_peer_sd", prod(&mean, &sd)));
    }
    if level == InteractionLevel::Full {
        terms.push(("own_x_peer_mean", prod(&own, &mean)));
        terms.push(("own_x_peer_sd", prod(&own, &sd)));
        terms.push(("own_x_peer_mean_x_peer_sd", prod(&prod(&own, &mean), &sd)));
    }
    let mut regs: Vec<Regressor> = terms.iter().map(|(n, v)| Regressor::new(*n, v.clone())).collect();
    regs.extend(sample.controls.iter().map(|(n, v)| Regressor::control(n.clone(), v.clone())));
    regs.push(Regressor::new(OWN_UED, sample.own_ued.clone()));
    let res = AbsorbedDesign::new(&regs, &sample.fe_spec())?.fit(&y)?;
    let rows = terms.iter().filter_map(|(n, _)| scaled_row(&res, n, n, 1.0, Unit::PerSd)).collect();
    let peer_terms: Vec<&str> = terms.iter().map(|(n, _)| *n).filter(|n| *n != OWN && res.index(n).is_some()).collect();
    let spec = match level {
        InteractionLevel::MeanSd => SpecName::InteractedMeanSd,
        InteractionLevel::MeanSdCross => SpecName::InteractedMeanSdCross,
        InteractionLevel::Full => SpecName::InteractedFull,
    };
    let mut r = report(sample, outcome, spec, &res, rows);
    r.joint_test = Some(wald_joint(&res, &peer_terms)?);
    Ok(r)
}

/// Linear-in-means with the peers' mean unemployment duration added.
pub fn peer_ued_model(sample: &Sample, outcome: &str) -> Result<EffectReport> {
    let y = sample.outcome(outcome)?;
    let ued: Vec<f64> = sample
        .peer
        .iter()
        .map(|s| s.loo_mean_ued.ok_or_else(|| Error::InsufficientData("peer unemployment duration missing".into())))
        .collect::<Result<_>>()?;
    let mut regs = sample.base_regressors();
    regs.insert(1, Regressor::new(PEER_MEAN, sample.peer_mean()));
    regs.insert(2, Regressor::new("peer_ued", ued));
    let res = AbsorbedDesign::new(&regs, &sample.fe_spec())?.fit(&y)?;
    let sd = |n: &str| res.residual_sd.get(n).copied().unwrap_or(0.0);
    let rows = [
        scaled_row(&res, OWN, OWN, sd(OWN), Unit::PerSd),
        scaled_row(&res, PEER_MEAN, PEER_MEAN, sd(PEER_MEAN), Unit::PerSd),
        scaled_row(&res, "peer_ued", "peer_ued", 1.0, Unit::PerMonthPeerUed),
    ]
    .into_iter()
    .flatten()
    .collect();
    Ok(report(sample, outcome, SpecName::PeerUed, &res, rows))
}

/// One regression per alternate peer characteristic with individual controls;
/// effects per residual SD of the characteristic.
pub fn other_peer_characteristics(sample: &Sample, outcome: &str) -> Result<Vec<EffectReport>> {
    let y = sample.outcome(outcome)?;
    let individual: Vec<(String, Vec<f64>)> = INDIVIDUAL_CONTROLS
        .iter()
        .filter_map(|&n| {
            sample.ds.covariate_index(n).map(|j| {
                (n.to_string(), sample.persons.iter().map(|&i| sample.ds.persons()[i].covariates[j]).collect())
            })
        })
        .collect();
    let mut out = Vec::new();
    for (k, name) in OTHER_CHARACTERISTICS.iter().enumerate() {
        let Some(vals) = sample.peer.iter().map(|s| s.loo_mean_other[k]).collect::<Option<Vec<f64>>>() else {
            continue;
        };
        let term = format!("peer_mean_{name}");
        let mut regs = vec![Regressor::new(term.clone(), vals)];
        regs.extend(individual.iter().map(|(n, v)| Regressor::control(n.clone(), v.clone())));
        regs.extend(sample.controls.iter().map(|(n, v)| Regressor::control(n.clone(), v.clone())));
        regs.push(Regressor::control(OWN_UED, sample.own_ued.clone()));
        let res = AbsorbedDesign::new(&regs, &sample.fe_spec())?.fit(&y)?;
        let sd = res.residual_sd.get(&term).copied().unwrap_or(0.0);
        let rows = scaled_row(&res, &term, &term, sd, Unit::PerSd).into_iter().collect();
        out.push(report(sample, outcome, SpecName::OtherPeerCharacteristics, &res, rows));
    }
    Ok(out)
}

/// Runs a named specification. Monthly dynamics are not an effect report; use [`monthly_dynamics`].
pub fn run_spec(sample: &Sample, spec: SpecName, outcome: &str, separate_samples: bool) -> Result<Vec<EffectReport>> {
    Ok(match spec {
        SpecName::LinearInMeans => vec![linear_in_means(sample, outcome)?],
        SpecName::HeterogeneityMedian | SpecName::HeterogeneityFemale => {
            let split =
                if spec == SpecName::HeterogeneityMedian { Split::OwnEmployabilityMedian } else { Split::Female };
            if separate_samples {
                vec![heterogeneity_separate(sample, outcome, split)?]
            } else {
                vec![heterogeneity_split(sample, outcome, split)?]
            }
        }
        SpecName::FractionsQuintiles => vec![fractions_model(sample, outcome, Bins::Quintiles)?],
        SpecName::FractionsThirds => vec![fractions_model(sample, outcome, Bins::Thirds)?],
        SpecName::InteractedMeanSd => vec![interacted_model(sample, outcome, InteractionLevel::MeanSd)?],
        SpecName::InteractedMeanSdCross => vec![interacted_model(sample, outcome, InteractionLevel::MeanSdCross)?],
        SpecName::InteractedFull => vec![interacted_model(sample, outcome, InteractionLevel::Full)?],
        SpecName::PeerUed => vec![peer_ued_model(sample, outcome)?],
        SpecName::OtherPeerCharacteristics => other_peer_characteristics(sample, outcome)?,
        SpecName::MonthlyDynamics => {
            return Err(Error::Usage("monthly_dynamics produces a profile, not an effect report".into()))
        }
    })
}

pub const EFFECT_HEADER: [&str; 5] = ["term", "effect", "se", "p", "unit"];

pub fn effect_rows(r: &EffectReport) -> Vec<Vec<String>> {
    r.rows
        .iter()
        .map(|row| {
            let unit = serde_json::to_value(row.unit).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            vec![row.term.clone(), row.effect.to_string(), row.se.to_string(), row.p.to_string(), unit]
        })
        .collect()
}

pub const DYNAMICS_HEADER: [&str; 6] = ["month", "effect_pp", "se_pp", "p", "significant_5pct", "degenerate"];

pub fn dynamics_rows(d: &DynamicProfile) -> Vec<Vec<String>> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    d.entries
        .iter()
        .map(|e| {
            vec![
                e.month.to_string(),
                opt(e.effect_pp),
                opt(e.se_pp),
                opt(e.p),
                u8::from(e.significant_5pct).to_string(),
                u8::from(e.degenerate).to_string(),
            ]
        })
        .collect()
}

/// Two-sided p-value for a coefficient against an arbitrary null value.
pub fn p_against(res: &RegressionResult, name: &str, null: f64) -> Option<f64> {
    let i = res.index(name)?;
    Some(t_pvalue((res.coef[i] - null) / res.se[i], res.t_dof()))
}
