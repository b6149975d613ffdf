//! High-dimensional fixed-effects least squares.
//!
//! Factors are absorbed by alternating projections (repeated group demeaning),
//! OLS runs on the residualized system, and inference uses the cluster-robust
//! sandwich with the CR1 finite-sample factor
//! `G/(G-1) * (N-1)/(N-K)`, where `K` counts absorbed levels.
//!
//! Absorbed degrees of freedom: the first two factors are counted exactly as
//! `L1 + L2 - C`, with `C` the number of connected components of the bipartite
//! level graph; every further factor adds `L - 1`, which over-counts when it is
//! nested in the others. A lone factor counts `L`. With no factors an intercept
//! is absorbed.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Relative squared norm below which a demeaned column counts as absorbed.
const ABSORBED_REL: f64 = 1e-10;
/// Relative Cholesky pivot below which a column counts as collinear.
const COLLINEAR_REL: f64 = 1e-9;

/// Categorical variable with dense level codes `0..n_levels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub name: String,
    pub levels: Vec<u32>,
    pub n_levels: usize,
}

impl Factor {
    /// Recodes arbitrary keys to dense levels in order of first appearance.
    pub fn from_keys<K: Hash + Eq + Clone>(name: impl Into<String>, keys: &[K]) -> Self {
        let mut map: HashMap<K, u32> = HashMap::new();
        let levels = keys
            .iter()
            .map(|k| {
                let next = map.len() as u32;
                *map.entry(k.clone()).or_insert(next)
            })
            .collect();
        Factor { name: name.into(), levels, n_levels: map.len() }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    fn subset(&self, keep: &[usize]) -> Factor {
        let codes: Vec<u32> = keep.iter().map(|&i| self.levels[i]).collect();
        Factor::from_keys(self.name.clone(), &codes)
    }
}

#[derive(Debug, Clone)]
pub struct FESpec {
    pub absorb: Vec<Factor>,
    pub cluster: Factor,
    pub tol: f64,
    pub max_iter: usize,
    pub drop_singletons: bool,
}

impl FESpec {
    pub fn new(absorb: Vec<Factor>, cluster: Factor) -> Self {
        FESpec { absorb, cluster, tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, drop_singletons: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub iterations: usize,
    pub max_change: f64,
}

/// Alternating-projection demeaner over a fixed set of factors.
#[derive(Debug, Clone)]
pub struct Absorber {
    factors: Vec<Factor>,
    inv_counts: Vec<Vec<f64>>,
    tol: f64,
    max_iter: usize,
}

impl Absorber {
    /// With no factors the grand mean is removed.
    pub fn new(factors: &[Factor], n: usize, tol: f64, max_iter: usize) -> Self {
        let factors: Vec<Factor> = if factors.is_empty() {
            vec![Factor { name: "intercept".into(), levels: vec![0; n], n_levels: 1 }]
        } else {
            factors.to_vec()
        };
        let inv_counts = factors
            .iter()
            .map(|f| {
                let mut c = vec![0.0; f.n_levels];
                for &l in &f.levels {
                    c[l as usize] += 1.0;
                }
                c.into_iter().map(|x| if x > 0.0 { 1.0 / x } else { 0.0 }).collect()
            })
            .collect();
        Absorber { factors, inv_counts, tol, max_iter }
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    fn sweep(&self, f: usize, col: &mut [f64], sums: &mut [f64]) -> f64 {
        let fac = &self.factors[f];
        sums.iter_mut().for_each(|s| *s = 0.0);
        for (&l, &v) in fac.levels.iter().zip(col.iter()) {
            sums[l as usize] += v;
        }
        let inv = &self.inv_counts[f];
        for (s, &w) in sums.iter_mut().zip(inv) {
            *s *= w;
        }
        let mut max_change: f64 = 0.0;
        for (&l, v) in fac.levels.iter().zip(col.iter_mut()) {
            let m = sums[l as usize];
            *v -= m;
            max_change = max_change.max(m.abs());
        }
        max_change
    }

    /// Demeans one column in place until a full sweep moves no entry by more than `tol`.
    pub fn absorb_column(&self, col: &mut [f64]) -> Result<Convergence> {
        let max_levels = self.factors.iter().map(|f| f.n_levels).max().unwrap_or(1);
        let mut sums = vec![0.0; max_levels];
        if self.factors.len() == 1 {
            let change = self.sweep(0, col, &mut sums[..self.factors[0].n_levels]);
            return Ok(Convergence { iterations: 1, max_change: change });
        }
        let mut last = f64::INFINITY;
        for it in 1..=self.max_iter {
            let mut change: f64 = 0.0;
            for f in 0..self.factors.len() {
                let n = self.factors[f].n_levels;
                change = change.max(self.sweep(f, col, &mut sums[..n]));
            }
            last = change;
            if change < self.tol {
                return Ok(Convergence { iterations: it, max_change: change });
            }
        }
        Err(Error::NonConvergence { what: "fixed-effect absorption", iterations: self.max_iter, last })
    }

    /// Demeans every column; columns are processed in parallel.
    pub fn absorb(&self, cols: &mut [Vec<f64>]) -> Result<Convergence> {
        let stats: Vec<Result<Convergence>> = cols.par_iter_mut().map(|c| self.absorb_column(c)).collect();
        let mut worst = Convergence { iterations: 0, max_change: 0.0 };
        for s in stats {
            let s = s?;
            worst.iterations = worst.iterations.max(s.iterations);
            worst.max_change = worst.max_change.max(s.max_change);
        }
        Ok(worst)
    }

    /// Absorbed degrees of freedom (see module docs).
    pub fn absorbed_dof(&self) -> usize {
        match self.factors.len() {
            0 => 1,
            1 => self.factors[0].n_levels,
            _ => {
                let a = &self.factors[0];
                let b = &self.factors[1];
                let comps = connected_components(a, b);
                let mut dof = a.n_levels + b.n_levels - comps;
                for f in &self.factors[2..] {
                    dof += f.n_levels.saturating_sub(1);
                }
                dof
            }
        }
    }
}

fn connected_components(a: &Factor, b: &Factor) -> usize {
    let mut parent: Vec<usize> = (0..a.n_levels + b.n_levels).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (&la, &lb) in a.levels.iter().zip(&b.levels) {
        let ra = find(&mut parent, la as usize);
        let rb = find(&mut parent, a.n_levels + lb as usize);
        if ra != rb {
            parent[ra] = rb;
        }
    }
    (0..parent.len()).filter(|&x| find(&mut parent, x) == x).count()
}

/// Convenience wrapper: demeans copies of `cols` by `factors`.
pub fn absorb(cols: &[Vec<f64>], factors: &[Factor], tol: f64, max_iter: usize) -> Result<Vec<Vec<f64>>> {
    let n = cols.first().map(|c| c.len()).unwrap_or(0);
    let absorber = Absorber::new(factors, n, tol, max_iter);
    let mut out = cols.to_vec();
    absorber.absorb(&mut out)?;
    Ok(out)
}

/// Rows surviving iterative removal of singleton levels in any factor.
pub fn non_singleton_rows(factors: &[Factor], n: usize) -> Vec<usize> {
    let mut keep = vec![true; n];
    loop {
        let mut changed = false;
        for f in factors {
            let mut counts = vec![0usize; f.n_levels];
            for (i, &l) in f.levels.iter().enumerate() {
                if keep[i] {
                    counts[l as usize] += 1;
                }
            }
            for (i, &l) in f.levels.iter().enumerate() {
                if keep[i] && counts[l as usize] == 1 {
                    keep[i] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (0..n).filter(|&i| keep[i]).collect()
}

/// Named regressor column.
#[derive(Debug, Clone)]
pub struct Regressor {
    pub name: String,
    pub values: Vec<f64>,
    /// Controls are partialled out when computing other regressors' residual SDs.
    pub is_control: bool,
}

impl Regressor {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Regressor { name: name.into(), values, is_control: false }
    }

    pub fn control(name: impl Into<String>, values: Vec<f64>) -> Self {
        Regressor { name: name.into(), values, is_control: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionResult {
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    pub vcov_clustered: Vec<Vec<f64>>,
    pub nobs: usize,
    pub n_clusters: usize,
    /// Regressors plus absorbed degrees of freedom.
    pub dof_model: usize,
    pub absorbed_dof: usize,
    pub dropped: Vec<String>,
    pub singletons_dropped: usize,
    /// SD after absorption and after partialling out control regressors.
    pub residual_sd: BTreeMap<String, f64>,
    pub r2_within: f64,
    pub convergence: Convergence,
    pub dof_convention: String,
}

impl RegressionResult {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coef_of(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.coef[i])
    }

    pub fn se_of(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.se[i])
    }

    pub fn p_of(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.p[i])
    }

    pub fn t_dof(&self) -> f64 {
        (self.n_clusters - 1) as f64
    }
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
pub fn t_pvalue(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive dof");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

pub fn t_critical(level: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive dof");
    dist.inverse_cdf(1.0 - (1.0 - level) / 2.0)
}

/// Gram-matrix Cholesky in column order; returns the columns that are not
/// linear combinations of earlier ones.
fn independent_columns(gram: &DMatrix<f64>, candidates: &[usize]) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    let mut l_rows: Vec<Vec<f64>> = Vec::new();
    for &j in candidates {
        let mut row = Vec::with_capacity(kept.len());
        for (a, &ka) in kept.iter().enumerate() {
            let mut s = gram[(j, ka)];
            for b in 0..a {
                s -= row[b] * l_rows[a][b];
            }
            row.push(s / l_rows[a][a]);
        }
        let d = gram[(j, j)] - row.iter().map(|v| v * v).sum::<f64>();
        if d > COLLINEAR_REL * gram[(j, j)] && d > 0.0 {
            row.push(d.sqrt());
            l_rows.push(row);
            kept.push(j);
        }
    }
    kept
}

/// CR1 cluster-robust covariance `c (X'X)^-1 [sum_g s_g s_g'] (X'X)^-1` with
/// `s_g = X_g' e_g` and `c = G/(G-1) * (N-1)/(N-K)`.
pub fn cluster_vcov(
    x: &DMatrix<f64>,
    resid: &[f64],
    clusters: &Factor,
    dof_model: usize,
) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let k = x.ncols();
    let g = {
        let mut seen = vec![false; clusters.n_levels];
        clusters.levels.iter().for_each(|&l| seen[l as usize] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if g < 2 {
        return Err(Error::InsufficientData(format!("clustered covariance needs at least 2 clusters, got {g}")));
    }
    if n <= dof_model {
        return Err(Error::InsufficientData(format!("{n} observations for {dof_model} parameters")));
    }
    let xtx = x.transpose() * x;
    let bread = xtx
        .cholesky()
        .ok_or_else(|| Error::Singular("X'X in clustered covariance".into()))?
        .inverse();
    let mut scores = DMatrix::<f64>::zeros(clusters.n_levels, k);
    for i in 0..n {
        let l = clusters.levels[i] as usize;
        for j in 0..k {
            scores[(l, j)] += x[(i, j)] * resid[i];
        }
    }
    let meat = scores.transpose() * &scores;
    let c = (g as f64 / (g as f64 - 1.0)) * ((n as f64 - 1.0) / (n - dof_model) as f64);
    let v = &bread * meat * &bread * c;
    Ok((&v + v.transpose()) * 0.5)
}

/// Regressors absorbed once, reusable across outcomes.
#[derive(Debug, Clone)]
pub struct AbsorbedDesign {
    n_input: usize,
    keep: Vec<usize>,
    absorber: Absorber,
    clusters: Factor,
    n_clusters: usize,
    names: Vec<String>,
    x: DMatrix<f64>,
    xtx_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    dropped: Vec<String>,
    absorbed_dof: usize,
    residual_sd: BTreeMap<String, f64>,
    convergence: Convergence,
}

impl AbsorbedDesign {
    pub fn new(regressors: &[Regressor], spec: &FESpec) -> Result<Self> {
        let n0 = spec.cluster.len();
        if regressors.is_empty() {
            return Err(Error::Usage("ols_absorbed: no regressors".into()));
        }
        if regressors.iter().any(|r| r.values.len() != n0) || spec.absorb.iter().any(|f| f.len() != n0) {
            return Err(Error::Usage("ols_absorbed: column lengths differ".into()));
        }
        if regressors.iter().flat_map(|r| r.values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite value in regression data".into()));
        }

        let keep: Vec<usize> = if spec.drop_singletons && !spec.absorb.is_empty() {
            non_singleton_rows(&spec.absorb, n0)
        } else {
            (0..n0).collect()
        };
        let n = keep.len();
        if n == 0 {
            return Err(Error::InsufficientData("no observations after dropping singletons".into()));
        }
        let factors: Vec<Factor> = spec.absorb.iter().map(|f| f.subset(&keep)).collect();
        let clusters = spec.cluster.subset(&keep);
        let n_clusters = clusters.n_levels;
        if n_clusters < 2 {
            return Err(Error::InsufficientData(format!(
                "clustered covariance needs at least 2 clusters, got {n_clusters}"
            )));
        }
        let absorber = Absorber::new(&factors, n, spec.tol, spec.max_iter);

        let mut x_all: Vec<Vec<f64>> = regressors.iter().map(|r| keep.iter().map(|&i| r.values[i]).collect()).collect();
        let raw_ss: Vec<f64> = x_all
            .iter()
            .map(|c| {
                let m = c.iter().sum::<f64>() / n as f64;
                c.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
            })
            .collect();
        let convergence = absorber.absorb(&mut x_all)?;

        let k_all = regressors.len();
        let mut gram = DMatrix::<f64>::zeros(k_all, k_all);
        for a in 0..k_all {
            for b in 0..=a {
                let v: f64 = x_all[a].iter().zip(&x_all[b]).map(|(p, q)| p * q).sum();
                gram[(a, b)] = v;
                gram[(b, a)] = v;
            }
        }
        let mut dropped = Vec::new();
        let mut candidates = Vec::new();
        for j in 0..k_all {
            if gram[(j, j)] == 0.0 || gram[(j, j)] <= ABSORBED_REL * raw_ss[j] {
                dropped.push(regressors[j].name.clone());
            } else {
                candidates.push(j);
            }
        }
        let kept = independent_columns(&gram, &candidates);
        for &j in &candidates {
            if !kept.contains(&j) {
                dropped.push(regressors[j].name.clone());
            }
        }
        if kept.is_empty() {
            return Err(Error::Singular("every regressor is collinear with the absorbed factors".into()));
        }
        let absorbed_dof = absorber.absorbed_dof();
        if n <= kept.len() + absorbed_dof {
            return Err(Error::InsufficientData(format!(
                "{n} observations for {} parameters",
                kept.len() + absorbed_dof
            )));
        }
        let k = kept.len();
        let x = DMatrix::from_fn(n, k, |i, j| x_all[kept[j]][i]);
        let xtx_chol = DMatrix::from_fn(k, k, |a, b| gram[(kept[a], kept[b])])
            .cholesky()
            .ok_or_else(|| Error::Singular("X'X after absorption".into()))?;
        let residual_sd = residual_sds(regressors, &kept, &x_all, &gram, n);
        Ok(AbsorbedDesign {
            n_input: n0,
            keep,
            absorber,
            clusters,
            n_clusters,
            names: kept.iter().map(|&j| regressors[j].name.clone()).collect(),
            x,
            xtx_chol,
            dropped,
            absorbed_dof,
            residual_sd,
            convergence,
        })
    }

    pub fn nobs(&self) -> usize {
        self.keep.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn residual_sd(&self) -> &BTreeMap<String, f64> {
        &self.residual_sd
    }

    pub fn fit(&self, y: &[f64]) -> Result<RegressionResult> {
        if y.len() != self.n_input {
            return Err(Error::Usage("ols_absorbed: outcome length differs from the design".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite outcome value".into()));
        }
        let n = self.keep.len();
        let k = self.names.len();
        let mut y_t: Vec<f64> = self.keep.iter().map(|&i| y[i]).collect();
        let y_conv = self.absorber.absorb_column(&mut y_t)?;
        let xty = DVector::from_iterator(k, (0..k).map(|j| self.x.column(j).iter().zip(&y_t).map(|(a, b)| a * b).sum()));
        let beta = self.xtx_chol.solve(&xty);
        let fitted = &self.x * &beta;
        let resid: Vec<f64> = y_t.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
        let ssr: f64 = resid.iter().map(|e| e * e).sum();
        let sst: f64 = y_t.iter().map(|v| v * v).sum();
        let dof_model = k + self.absorbed_dof;
        let vcov = cluster_vcov(&self.x, &resid, &self.clusters, dof_model)?;
        let df = (self.n_clusters - 1) as f64;
        let coef: Vec<f64> = beta.iter().copied().collect();
        let se: Vec<f64> = (0..k).map(|j| vcov[(j, j)].max(0.0).sqrt()).collect();
        let t: Vec<f64> = coef.iter().zip(&se).map(|(b, s)| b / s).collect();
        let p: Vec<f64> = t.iter().map(|&tv| t_pvalue(tv, df)).collect();
        Ok(RegressionResult {
            names: self.names.clone(),
            coef,
            se,
            t,
            p,
            vcov_clustered: (0..k).map(|a| (0..k).map(|b| vcov[(a, b)]).collect()).collect(),
            nobs: n,
            n_clusters: self.n_clusters,
            dof_model,
            absorbed_dof: self.absorbed_dof,
            dropped: self.dropped.clone(),
            singletons_dropped: self.n_input - n,
            residual_sd: self.residual_sd.clone(),
            r2_within: if sst > 0.0 { 1.0 - ssr / sst } else { 0.0 },
            convergence: Convergence {
                iterations: self.convergence.iterations.max(y_conv.iterations),
                max_change: self.convergence.max_change.max(y_conv.max_change),
            },
            dof_convention: DOF_CONVENTION.into(),
        })
    }
}

pub const DOF_CONVENTION: &str =
    "exact two-way connected components for the first two factors, L-1 per further factor";

/// OLS of `y` on `regressors` with the factors in `spec` absorbed.
pub fn ols_absorbed(y: &[f64], regressors: &[Regressor], spec: &FESpec) -> Result<RegressionResult> {
    if y.len() != spec.cluster.len() {
        return Err(Error::Usage("ols_absorbed: column lengths differ".into()));
    }
    AbsorbedDesign::new(regressors, spec)?.fit(y)
}

fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / n as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64).sqrt()
}

fn residual_sds(
    regressors: &[Regressor],
    kept: &[usize],
    x_all: &[Vec<f64>],
    gram: &DMatrix<f64>,
    n: usize,
) -> BTreeMap<String, f64> {
    let controls: Vec<usize> = kept.iter().copied().filter(|&j| regressors[j].is_control).collect();
    let chol = if controls.is_empty() {
        None
    } else {
        DMatrix::from_fn(controls.len(), controls.len(), |a, b| gram[(controls[a], controls[b])]).cholesky()
    };
    let mut out = BTreeMap::new();
    for &j in kept {
        let v = if regressors[j].is_control || controls.is_empty() {
            x_all[j].clone()
        } else {
            let rhs = DVector::from_iterator(controls.len(), controls.iter().map(|&c| gram[(c, j)]));
            match &chol {
                Some(ch) => {
                    let g = ch.solve(&rhs);
                    (0..n)
                        .map(|i| x_all[j][i] - controls.iter().zip(g.iter()).map(|(&c, gc)| gc * x_all[c][i]).sum::<f64>())
                        .collect()
                }
                None => x_all[j].clone(),
            }
        };
        out.insert(regressors[j].name.clone(), sample_sd(&v));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldTest {
    pub f: f64,
    pub p: f64,
    pub q: usize,
    pub df_denominator: usize,
}

/// Joint Wald test that the named coefficients are zero, with an F(q, G-1) reference.
pub fn wald_joint(result: &RegressionResult, names: &[&str]) -> Result<WaldTest> {
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            result.index(n).ok_or_else(|| {
                Error::Usage(format!("coefficient `{n}` is not in the regression (dropped or absent)"))
            })
        })
        .collect::<Result<_>>()?;
    let q = idx.len();
    if q == 0 {
        return Err(Error::Usage("wald_joint needs at least one coefficient".into()));
    }
    let b = DVector::from_iterator(q, idx.iter().map(|&i| result.coef[i]));
    let v = DMatrix::from_fn(q, q, |a, c| result.vcov_clustered[idx[a]][idx[c]]);
    let vinv = v
        .cholesky()
        .ok_or_else(|| Error::Singular("restricted covariance block in Wald test".into()))?
        .inverse();
    let stat = (b.transpose() * vinv * &b)[(0, 0)] / q as f64;
    let df2 = result.n_clusters - 1;
    let dist = FisherSnedecor::new(q as f64, df2 as f64)
        .map_err(|e| Error::Numerical(format!("F distribution: {e}")))?;
    Ok(WaldTest { f: stat, p: 1.0 - dist.cdf(stat), q, df_denominator: df2 })
}

/// Wald test of a linear combination `sum w_j b_j = 0`; returns (estimate, se, p).
pub fn linear_combination(result: &RegressionResult, weights: &[(&str, f64)]) -> Result<(f64, f64, f64)> {
    let mut est = 0.0;
    let mut var = 0.0;
    let idx: Vec<(usize, f64)> = weights
        .iter()
        .map(|(n, w)| result.index(n).map(|i| (i, *w)).ok_or_else(|| Error::Usage(format!("coefficient `{n}` absent"))))
        .collect::<Result<_>>()?;
    for &(i, wi) in &idx {
        est += wi * result.coef[i];
        for &(j, wj) in &idx {
            var += wi * wj * result.vcov_clustered[i][j];
        }
    }
    let se = var.max(0.0).sqrt();
    Ok((est, se, t_pvalue(est / se, result.t_dof())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledEffect {
    pub effect: f64,
    pub se: f64,
    pub degenerate: bool,
}

/// Effect of a one-residual-SD change: `coef * residual_sd`, SE scaled alike.
pub fn scale_to_sd_effect(coef: f64, se: f64, residual_sd: f64) -> ScaledEffect {
    ScaledEffect { effect: coef * residual_sd, se: se * residual_sd, degenerate: residual_sd == 0.0 }
}

/// Residualizes new columns on a fixed set of factors plus control columns
/// (Frisch-Waugh-Lovell), reusing the absorbed controls across calls.
pub struct Residualizer {
    absorber: Absorber,
    controls: Vec<Vec<f64>>,
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl Residualizer {
    pub fn new(factors: &[Factor], controls: &[Vec<f64>], tol: f64, max_iter: usize) -> Result<Self> {
        let n = factors.first().map(|f| f.len()).or_else(|| controls.first().map(|c| c.len())).unwrap_or(0);
        let absorber = Absorber::new(factors, n, tol, max_iter);
        let mut ctl = controls.to_vec();
        absorber.absorb(&mut ctl)?;
        let k = ctl.len();
        let gram = DMatrix::from_fn(k, k, |a, b| ctl[a].iter().zip(&ctl[b]).map(|(p, q)| p * q).sum());
        let cand: Vec<usize> = (0..k).filter(|&j| gram[(j, j)] > 1e-12).collect();
        let kept = independent_columns(&gram, &cand);
        let ctl: Vec<Vec<f64>> = kept.iter().map(|&j| ctl[j].clone()).collect();
        let chol = if ctl.is_empty() {
            None
        } else {
            Some(
                DMatrix::from_fn(kept.len(), kept.len(), |a, b| gram[(kept[a], kept[b])])
                    .cholesky()
                    .ok_or_else(|| Error::Singular("control Gram matrix".into()))?,
            )
        };
        Ok(Residualizer { absorber, controls: ctl, chol })
    }

    pub fn residualize(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut col = v.to_vec();
        self.absorber.absorb_column(&mut col)?;
        if let Some(ch) = &self.chol {
            let rhs = DVector::from_iterator(
                self.controls.len(),
                self.controls.iter().map(|c| c.iter().zip(&col).map(|(a, b)| a * b).sum()),
            );
            let g = ch.solve(&rhs);
            for (c, gc) in self.controls.iter().zip(g.iter()) {
                for (x, cv) in col.iter_mut().zip(c) {
                    *x -= gc * cv;
                }
            }
        }
        Ok(col)
    }
}

pub fn sd(v: &[f64]) -> f64 {
    sample_sd(v)
}
