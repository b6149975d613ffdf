//! Identification diagnostics: the resampling test for excess between-course
//! variation, the exogeneity regression with a pool-level mean control,
//! sorting screens and the raw-versus-net variance decomposition.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::fe::{sd, AbsorbedDesign, FESpec, Factor, Regressor, Residualizer, DEFAULT_MAX_ITER};
use crate::model::Dataset;
use crate::peer::{loo_mean, quantile_sorted};
use crate::suite::{Sample, PEER_MEAN};

pub const DEFAULT_Z_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplingReport {
    pub observed_sd_raw: f64,
    pub observed_sd_net: f64,
    pub simulated_mean_sd_raw: f64,
    pub simulated_mean_sd_net: f64,
    pub simulated_sd_of_sd_net: f64,
    pub n_sims: usize,
    pub z_net: f64,
    pub z_threshold: f64,
    pub excess_variation: bool,
    pub cells: usize,
    /// Cells in which no two courses share a size, so nothing can be permuted.
    pub cells_without_permutation: usize,
    pub seed: u64,
}

/// Course rosters of a sample grouped into exchangeable blocks: courses of equal
/// size within one provider-month-group cell.
pub struct ResamplingLayout {
    courses: Vec<Vec<usize>>,
    blocks: Vec<Vec<usize>>,
    pub cells: usize,
    pub cells_without_permutation: usize,
}

impl ResamplingLayout {
    pub fn new(sample: &Sample) -> Self {
        let cell = &sample.factors[0];
        let mut by_course: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (row, &c) in sample.cluster.levels.iter().enumerate() {
            by_course.entry(c).or_default().push(row);
        }
        let courses: Vec<Vec<usize>> = by_course.into_values().collect();
        let mut groups: BTreeMap<(u32, usize), Vec<usize>> = BTreeMap::new();
        for (ci, rows) in courses.iter().enumerate() {
            groups.entry((cell.levels[rows[0]], rows.len())).or_default().push(ci);
        }
        let mut cells_with: BTreeMap<u32, bool> = BTreeMap::new();
        let mut blocks = Vec::new();
        for ((c, _), members) in groups {
            let permutable = members.len() >= 2;
            *cells_with.entry(c).or_insert(false) |= permutable;
            if permutable {
                blocks.push(members.iter().flat_map(|&ci| courses[ci].iter().copied()).collect());
            }
        }
        ResamplingLayout {
            courses,
            blocks,
            cells: cells_with.len(),
            cells_without_permutation: cells_with.values().filter(|&&p| !p).count(),
        }
    }

    /// Leave-one-out course means for a score vector indexed by sample row.
    pub fn loo_means(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; scores.len()];
        for rows in &self.courses {
            let v: Vec<f64> = rows.iter().map(|&r| scores[r]).collect();
            for (k, &r) in rows.iter().enumerate() {
                out[r] = loo_mean(&v, k).unwrap_or(f64::NAN);
            }
        }
        out
    }

    /// Reallocates scores at random within each exchangeable block.
    pub fn shuffle(&self, scores: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut out = scores.to_vec();
        for block in &self.blocks {
            let mut vals: Vec<f64> = block.iter().map(|&r| scores[r]).collect();
            vals.shuffle(rng);
            for (&r, v) in block.iter().zip(vals) {
                out[r] = v;
            }
        }
        out
    }
}

/// Stream `index` of the generator family for `seed`.
pub fn derived_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn resampling_test(sample: &Sample, n_sims: usize, seed: u64, z_threshold: f64) -> Result<ResamplingReport> {
    if n_sims < 2 {
        return Err(Error::Usage("resampling needs at least two simulations".into()));
    }
    let layout = ResamplingLayout::new(sample);
    let rz = sample.residualizer()?;
    let observed = sample.peer_mean();
    let observed_sd_raw = sd(&observed);
    let observed_sd_net = sd(&rz.residualize(&observed)?);

    let sims: Vec<Result<(f64, f64)>> = (0..n_sims)
        .into_par_iter()
        .map(|s| {
            let mut rng = derived_rng(seed, s as u64);
            let loo = layout.loo_means(&layout.shuffle(&sample.own, &mut rng));
            Ok((sd(&loo), sd(&rz.residualize(&loo)?)))
        })
        .collect();
    let sims: Vec<(f64, f64)> = sims.into_iter().collect::<Result<_>>()?;
    let raw: Vec<f64> = sims.iter().map(|s| s.0).collect();
    let net: Vec<f64> = sims.iter().map(|s| s.1).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let sd_net = sd(&net);
    let z_net = (observed_sd_net - mean(&net)) / sd_net;
    Ok(ResamplingReport {
        observed_sd_raw,
        observed_sd_net,
        simulated_mean_sd_raw: mean(&raw),
        simulated_mean_sd_net: mean(&net),
        simulated_sd_of_sd_net: sd_net,
        n_sims,
        z_net,
        z_threshold,
        excess_variation: z_net > z_threshold,
        cells: layout.cells,
        cells_without_permutation: layout.cells_without_permutation,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuryanPool {
    /// All participants of the same provider and program type.
    #[default]
    Provider,
    /// Participants of the same provider-month-group cell.
    MonthGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GuryanOptions {
    pub pool: GuryanPool,
    /// Include the individual in the pool mean (mechanically biased; for comparison only).
    pub include_self: bool,
    /// Also control for leave-one-out means by season, occupation and competence level.
    pub group_controls: bool,
    /// Also include the course controls in the controlled regression.
    pub course_controls: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogeneityReport {
    pub coef_peer_mean: f64,
    pub se: f64,
    pub p: f64,
    pub coef_without_control: f64,
    pub se_without_control: f64,
    pub p_without_control: f64,
    pub n: usize,
    pub options: GuryanOptions,
}

/// Leave-one-out mean of `values` within each level of `keys`.
fn loo_group_mean(keys: &[u32], values: &[f64], include_self: bool) -> Result<Vec<f64>> {
    let mut totals: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for (k, x) in keys.iter().zip(values) {
        let e = totals.entry(*k).or_insert((0.0, 0));
        e.0 += x;
        e.1 += 1;
    }
    keys.iter()
        .zip(values)
        .map(|(k, x)| {
            let (s, n) = totals[k];
            if include_self {
                Ok(s / n as f64)
            } else if n < 2 {
                Err(Error::InsufficientData("a pool holds a single participant".into()))
            } else {
                Ok((s - x) / (n - 1) as f64)
            }
        })
        .collect()
}

/// Regresses own employability on the course peer mean.
///
/// The controlled version adds only the leave-one-out pool mean. Within a pool,
/// own score is an exact linear function of that mean, so anything that soaks
/// up between-pool variation re-opens the within-pool exclusion bias: absorbed
/// course-level groupings do, and so do course controls that differ by
/// provider when there are few providers. `group_controls` (leave-one-out means
/// by season, occupation and competence level) and `course_controls` add them
/// back for comparison. The uncontrolled version absorbs the full fixed-effect
/// set and so displays the mechanical bias.
pub fn guryan_test(sample: &Sample, opts: GuryanOptions) -> Result<ExogeneityReport> {
    let pool_keys: Vec<u32> = match opts.pool {
        GuryanPool::Provider => sample
            .persons
            .iter()
            .map(|&i| sample.ds.courses()[sample.ds.course_of(i).expect("participant")].provider_id)
            .collect(),
        GuryanPool::MonthGroup => sample.factors[0].levels.clone(),
    };
    let controls = || sample.controls.iter().map(|(n, v)| Regressor::control(n.clone(), v.clone()));
    let mut with: Vec<Regressor> = vec![
        Regressor::new(PEER_MEAN, sample.peer_mean()),
        Regressor::new("pool_mean", loo_group_mean(&pool_keys, &sample.own, opts.include_self)?),
    ];
    for f in sample.factors[1..].iter().filter(|_| opts.group_controls) {
        with.push(Regressor::new(format!("loo_mean_{}", f.name), loo_group_mean(&f.levels, &sample.own, false)?));
    }
    if opts.course_controls {
        with.extend(controls());
    }
    let mut spec_with = FESpec::new(Vec::new(), sample.cluster.clone());
    spec_with.tol = sample.tol;
    let r_with = AbsorbedDesign::new(&with, &spec_with)?.fit(&sample.own)?;

    let mut without = vec![Regressor::new(PEER_MEAN, sample.peer_mean())];
    without.extend(controls());
    let r_without = AbsorbedDesign::new(&without, &sample.fe_spec())?.fit(&sample.own)?;

    let get = |r: &crate::fe::RegressionResult| -> Result<(f64, f64, f64)> {
        let i = r.index(PEER_MEAN).ok_or_else(|| Error::Singular("peer mean dropped in exogeneity test".into()))?;
        Ok((r.coef[i], r.se[i], r.p[i]))
    };
    let (c, s, p) = get(&r_with)?;
    let (c0, s0, p0) = get(&r_without)?;
    Ok(ExogeneityReport {
        coef_peer_mean: c,
        se: s,
        p,
        coef_without_control: c0,
        se_without_control: s0,
        p_without_control: p0,
        n: r_with.nobs,
        options: opts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortingRow {
    pub grouping: String,
    pub group: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    /// 10th through 90th percentiles.
    pub deciles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortingScreen {
    pub grouping: String,
    pub groups: usize,
    /// Kruskal-Wallis statistic with tie correction; `None` with fewer than two groups.
    pub h: Option<f64>,
    pub p: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortingDiagnostics {
    pub rows: Vec<SortingRow>,
    pub screens: Vec<SortingScreen>,
}

pub const SORTING_ALPHA: f64 = 0.01;

/// Kruskal-Wallis H over groups of observations, corrected for ties.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Option<(f64, f64)> {
    let groups: Vec<&Vec<f64>> = groups.iter().filter(|g| !g.is_empty()).collect();
    if groups.len() < 2 {
        return None;
    }
    let mut all: Vec<(f64, usize)> =
        groups.iter().enumerate().flat_map(|(g, v)| v.iter().map(move |&x| (x, g))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = all.len() as f64;
    let mut rank_sum = vec![0.0; groups.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        let t = (j - i) as f64;
        ties += t * t * t - t;
        for item in &all[i..j] {
            rank_sum[item.1] += avg;
        }
        i = j;
    }
    let h: f64 = groups.iter().zip(&rank_sum).map(|(g, r)| r * r / g.len() as f64).sum::<f64>() * 12.0 / (n * (n + 1.0))
        - 3.0 * (n + 1.0);
    let correction = 1.0 - ties / (n * n * n - n);
    if correction <= 0.0 {
        return None;
    }
    let h = h / correction;
    let df = (groups.len() - 1) as f64;
    let p = 1.0 - ChiSquared::new(df).expect("positive dof").cdf(h.max(0.0));
    Some((h, p))
}

/// Employability by entry month, start month and target occupation, with a
/// rank test per grouping.
pub fn sorting_diagnostics(ds: &Dataset) -> Result<SortingDiagnostics> {
    let mut by: [BTreeMap<u32, Vec<f64>>; 3] = Default::default();
    for (i, p) in ds.participants() {
        let (Some(score), Some(c)) = (p.employability, ds.course_of(i)) else { continue };
        let course = &ds.courses()[c];
        by[0].entry(p.entry_ue_month.month_of_year()).or_default().push(score);
        by[1].entry(course.start_month.month_of_year()).or_default().push(score);
        by[2].entry(course.target_occupation).or_default().push(score);
    }
    if by[0].is_empty() {
        return Err(Error::InsufficientData("sorting diagnostics need scored participants".into()));
    }
    let names = ["entry_month", "start_month", "target_occupation"];
    let mut rows = Vec::new();
    let mut screens = Vec::new();
    for (name, groups) in names.iter().zip(by) {
        for (g, v) in &groups {
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            rows.push(SortingRow {
                grouping: name.to_string(),
                group: g.to_string(),
                n: v.len(),
                mean: v.iter().sum::<f64>() / v.len() as f64,
                sd: sd(v),
                deciles: (1..10).map(|d| quantile_sorted(&sorted, d as f64 / 10.0)).collect(),
            });
        }
        let vals: Vec<Vec<f64>> = groups.into_values().collect();
        let kw = kruskal_wallis(&vals);
        screens.push(SortingScreen {
            grouping: name.to_string(),
            groups: vals.len(),
            h: kw.map(|k| k.0),
            p: kw.map(|k| k.1),
            flagged: kw.is_some_and(|k| k.1 < SORTING_ALPHA),
        });
    }
    Ok(SortingDiagnostics { rows, screens })
}

pub const SORTING_HEADER: [&str; 15] = [
    "grouping", "group", "n", "mean", "sd", "p10", "p20", "p30", "p40", "p50", "p60", "p70", "p80", "p90", "kw_p",
];

pub fn sorting_rows(d: &SortingDiagnostics) -> Vec<Vec<String>> {
    d.rows
        .iter()
        .map(|r| {
            let screen_p = d
                .screens
                .iter()
                .find(|s| s.grouping == r.grouping)
                .and_then(|s| s.p)
                .map(|p| p.to_string())
                .unwrap_or_else(|| "NA".into());
            let mut v = vec![r.grouping.clone(), r.group.clone(), r.n.to_string(), r.mean.to_string(), r.sd.to_string()];
            v.extend(r.deciles.iter().map(|x| x.to_string()));
            v.push(screen_p);
            v
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub variable: String,
    pub raw_sd: f64,
    pub net_sd: f64,
}

/// SDs of own score, peer mean and peer SD before and after removing the
/// fixed effects and course controls.
pub fn variance_decomposition(sample: &Sample) -> Result<Vec<VarianceRow>> {
    let ctl: Vec<Vec<f64>> = sample.controls.iter().map(|(_, v)| v.clone()).collect();
    variance_decomposition_with(sample, &sample.factors, &ctl)
}

pub fn variance_decomposition_with(sample: &Sample, factors: &[Factor], controls: &[Vec<f64>]) -> Result<Vec<VarianceRow>> {
    let rz = Residualizer::new(factors, controls, sample.tol, DEFAULT_MAX_ITER)?;
    [("own_employability", sample.own.clone()), ("peer_mean", sample.peer_mean()), ("peer_sd", sample.peer_sd())]
        .into_iter()
        .map(|(name, v)| Ok(VarianceRow { variable: name.into(), raw_sd: sd(&v), net_sd: sd(&rz.residualize(&v)?) }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kruskal_wallis_matches_hand_computation() {
        // ranks: a = {1, 2, 3}, b = {4, 5, 6}; H = 12/(6*7) * (36/3 + 225/3) - 21 = 3.857142...
        let (h, p) = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert!((h - 27.0 / 7.0).abs() < 1e-12);
        assert!(p > 0.04 && p < 0.06);
    }

    #[test]
    fn kruskal_wallis_needs_two_groups() {
        assert!(kruskal_wallis(&[vec![1.0, 2.0]]).is_none());
        assert!(kruskal_wallis(&[vec![1.0, 1.0], vec![1.0]]).is_none());
    }

    #[test]
    fn derived_streams_differ_and_repeat() {
        use rand::Rng;
        let a: u64 = derived_rng(5, 0).random();
        let b: u64 = derived_rng(5, 1).random();
        let c: u64 = derived_rng(5, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
