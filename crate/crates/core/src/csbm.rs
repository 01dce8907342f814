//! Contextual stochastic block model lab.
//!
//! Samples CSBM graphs and measures how one round of weighted, symmetrically
//! normalized aggregation rescales the class-mean difference, for comparison
//! with the closed-form factor `(p·w₊ − q·w₋) / (p·w₊ + (C−1)·q·w₋)`.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{edge_homophily, Graph};
use crate::rng;
use crate::tensor::Tensor;
use crate::trainer::{mean_std, pool};

/// Predicted factors closer to zero than this count as sign 0.
pub const ZERO_FACTOR: f64 = 1e-12;

/// Allowed |empirical factor| where the prediction is exactly zero. The
/// self-loop weight biases the estimate by roughly one over the degree.
pub const BOUNDARY_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsbmParams {
    pub n: usize,
    pub classes: usize,
    /// Intra-class edge probability.
    pub p: f64,
    /// Inter-class edge probability.
    pub q: f64,
    /// Distance scale of the class means: `±(μ/2)e₁` for two classes,
    /// `(μ/2)e_c` otherwise.
    pub mu: f64,
    pub dim: usize,
    /// Standard deviation of the isotropic feature noise.
    pub feature_noise: f64,
}

impl Default for CsbmParams {
    fn default() -> Self {
        Self {
            n: 4000,
            classes: 2,
            p: 0.01,
            q: 0.04,
            mu: 2.0,
            dim: 8,
            feature_noise: 1.0,
        }
    }
}

impl CsbmParams {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::contract("a CSBM needs at least two classes"));
        }
        if self.n == 0 || self.n % self.classes != 0 {
            return Err(Error::contract(format!(
                "n = {} must be a positive multiple of the class count {}",
                self.n, self.classes
            )));
        }
        for (name, v) in [("p", self.p), ("q", self.q)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::contract(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::contract(format!("mu = {} must be finite and non-negative", self.mu)));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return Err(Error::contract("feature noise must be finite and non-negative"));
        }
        let need = if self.classes == 2 { 1 } else { self.classes };
        if self.dim < need {
            return Err(Error::contract(format!(
                "{} classes need at least {need} feature dimensions, got {}",
                self.classes, self.dim
            )));
        }
        Ok(())
    }

    /// Expected edge homophily `p / (p + (C−1)q)` in the large-n limit.
    pub fn expected_homophily(&self) -> f64 {
        self.p / (self.p + (self.classes - 1) as f64 * self.q)
    }
}

/// Mean feature vector of class `c`.
pub fn class_mean(c: usize, classes: usize, mu: f64, dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    if classes == 2 {
        m[0] = if c == 0 { mu / 2.0 } else { -mu / 2.0 };
    } else {
        m[c] = mu / 2.0;
    }
    m
}

/// Balanced block labels: the first `n/C` nodes are class 0, and so on.
pub fn block_labels(n: usize, classes: usize) -> Vec<usize> {
    let size = n / classes;
    (0..n).map(|i| i / size).collect()
}

pub fn sample_csbm(params: &CsbmParams, seed: u64) -> Result<Graph> {
    params.validate()?;
    let (n, d) = (params.n, params.dim);
    let labels = block_labels(n, params.classes);

    let mut edge_rng = rng::substream(seed, "csbm/edges");
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let prob = if labels[i] == labels[j] { params.p } else { params.q };
            if edge_rng.random::<f64>() < prob {
                edges.push((i, j));
            }
        }
    }

    let mut feat_rng = rng::substream(seed, "csbm/features");
    let means: Vec<Vec<f64>> = (0..params.classes)
        .map(|c| class_mean(c, params.classes, params.mu, d))
        .collect();
    let mut data = Vec::with_capacity(n * d);
    for &y in &labels {
        for k in 0..d {
            let z: f64 = feat_rng.sample(StandardNormal);
            data.push(means[y][k] + params.feature_noise * z);
        }
    }
    let features = Tensor::from_vec(n, d, data)?;
    Graph::from_undirected(
        format!("csbm-n{n}-c{}-p{}-q{}", params.classes, params.p, params.q),
        features,
        labels,
        params.classes,
        &edges,
    )
}

/// `(p·w₊ − q·w₋) / (p·w₊ + (C−1)·q·w₋)`.
pub fn predicted_factor(p: f64, q: f64, w_plus: f64, w_minus: f64, classes: usize) -> Result<f64> {
    if w_plus < 0.0 || w_minus < 0.0 {
        return Err(Error::contract("edge weights must be non-negative"));
    }
    if w_plus == 0.0 && w_minus == 0.0 {
        return Err(Error::contract("w+ and w- cannot both be zero"));
    }
    if classes < 2 {
        return Err(Error::contract("at least two classes are required"));
    }
    let den = p * w_plus + (classes - 1) as f64 * q * w_minus;
    if !(den > 0.0) {
        return Err(Error::contract("predicted factor has a non-positive denominator"));
    }
    Ok((p * w_plus - q * w_minus) / den)
}

/// Per-edge weights `w₊` on same-class edges and `w₋` on cross-class edges,
/// aligned with `g.edges()`.
pub fn class_weights(g: &Graph, w_plus: f64, w_minus: f64) -> Vec<f64> {
    let y = g.labels();
    g.edges()
        .iter()
        .map(|&(i, j)| if y[i] == y[j] { w_plus } else { w_minus })
        .collect()
}

fn check_weights(g: &Graph, weights: &[f64], self_weight: f64) -> Result<()> {
    if weights.len() != g.edges().len() {
        return Err(Error::contract(format!(
            "{} weights for {} edges",
            weights.len(),
            g.edges().len()
        )));
    }
    if weights.iter().chain([&self_weight]).any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::contract("edge weights must be finite and non-negative"));
    }
    Ok(())
}

/// Weighted degree including the self weight. Self-loop edges already in
/// the graph are ignored in favour of `self_weight`.
fn weighted_degrees(g: &Graph, weights: &[f64], self_weight: f64) -> Vec<f64> {
    let mut deg = vec![self_weight; g.num_nodes()];
    for (&(i, j), &w) in g.edges().iter().zip(weights) {
        if i != j {
            deg[i] += w;
        }
    }
    deg
}

/// `D^{-1/2}(A_w + w_self·I)D^{-1/2} X`, where `D` holds the row sums of
/// `A_w + w_self·I`. Nodes with zero weighted degree aggregate to zero.
pub fn weighted_aggregate(g: &Graph, weights: &[f64], self_weight: f64) -> Result<Tensor<f64>> {
    check_weights(g, weights, self_weight)?;
    let x = g.features();
    let deg = weighted_degrees(g, weights, self_weight);
    let inv_sqrt: Vec<f64> = deg.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    let mut h = Tensor::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        let c = self_weight * inv_sqrt[i] * inv_sqrt[i];
        for (o, &v) in h.row_mut(i).iter_mut().zip(x.row(i)) {
            *o = c * v;
        }
    }
    for (&(i, j), &w) in g.edges().iter().zip(weights) {
        if i == j || w == 0.0 {
            continue;
        }
        let c = w * inv_sqrt[i] * inv_sqrt[j];
        let (xj, hi) = (x.row(j).to_vec(), h.row_mut(i));
        for (o, v) in hi.iter_mut().zip(xj) {
            *o += c * v;
        }
    }
    Ok(h)
}

fn class_means(h: &Tensor<f64>, labels: &[usize], classes: usize) -> Result<Vec<Vec<f64>>> {
    let mut sums = vec![vec![0.0; h.cols()]; classes];
    let mut counts = vec![0usize; classes];
    for (i, &y) in labels.iter().enumerate() {
        counts[y] += 1;
        for (s, &v) in sums[y].iter_mut().zip(h.row(i)) {
            *s += v;
        }
    }
    if let Some(c) = counts.iter().position(|&k| k == 0) {
        return Err(Error::contract(format!("class {c} has no nodes")));
    }
    for (s, &k) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|v| *v /= k as f64);
    }
    Ok(sums)
}

/// Mean over class pairs `(a, b)` of `(h̄_a − h̄_b)·(m_a − m_b) / ‖m_a − m_b‖²`,
/// where `m_c` is the feature mean of class `c` at separation `mu`. For two
/// classes this is `(h̄₊ − h̄₋)·e₁ / μ`. With `mu = 0` the unit-separation
/// geometry is used so the estimate stays finite.
pub fn empirical_factor(g: &Graph, weights: &[f64], self_weight: f64, mu: f64) -> Result<f64> {
    let classes = g.num_classes();
    if classes < 2 {
        return Err(Error::contract("factor needs at least two classes"));
    }
    let dim = g.feature_dim();
    if (classes > 2 && dim < classes) || dim == 0 {
        return Err(Error::contract("feature dimension too small for the class geometry"));
    }
    let h = weighted_aggregate(g, weights, self_weight)?;
    let hbar = class_means(&h, g.labels(), classes)?;
    let scale = if mu > 0.0 { mu } else { 1.0 };
    let m: Vec<Vec<f64>> = (0..classes).map(|c| class_mean(c, classes, scale, dim)).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..classes {
        for b in a + 1..classes {
            let (mut num, mut den) = (0.0, 0.0);
            for k in 0..dim {
                let dm = m[a][k] - m[b][k];
                num += (hbar[a][k] - hbar[b][k]) * dm;
                den += dm * dm;
            }
            total += num / den;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub n: usize,
    pub classes: usize,
    pub p: f64,
    pub q: f64,
    pub mu: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    pub predicted: f64,
    /// Mean of the per-trial factors.
    pub empirical: f64,
    /// Standard error of the mean; absent for a single trial.
    pub standard_error: Option<f64>,
    pub trials: usize,
    pub per_trial: Vec<f64>,
    pub mean_homophily: f64,
}

impl TheoremReport {
    fn new(
        params: &CsbmParams,
        n: usize,
        w_plus: f64,
        w_minus: f64,
        per_trial: Vec<f64>,
        homophily: &[f64],
    ) -> Result<Self> {
        let predicted = predicted_factor(params.p, params.q, w_plus, w_minus, params.classes)?;
        let (empirical, sd) = mean_std(&per_trial);
        Ok(Self {
            n,
            classes: params.classes,
            p: params.p,
            q: params.q,
            mu: params.mu,
            w_plus,
            w_minus,
            predicted,
            empirical,
            standard_error: (per_trial.len() > 1).then(|| sd / (per_trial.len() as f64).sqrt()),
            trials: per_trial.len(),
            per_trial,
            mean_homophily: mean_std(homophily).0,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

pub const TRIAL_CSV_HEADER: &str = "p,q,w_plus,w_minus,classes,n,trial,empirical_factor\n";

/// One row per trial of each report.
pub fn trials_csv<'a>(reports: impl IntoIterator<Item = &'a TheoremReport>) -> String {
    let mut out = String::from(TRIAL_CSV_HEADER);
    for r in reports {
        for (t, f) in r.per_trial.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{t},{f}\n",
                r.p, r.q, r.w_plus, r.w_minus, r.classes, r.n
            ));
        }
    }
    out
}

/// Seed of trial `t` under `master_seed`.
pub fn trial_seed(master_seed: u64, t: usize) -> u64 {
    rng::substream(master_seed, &format!("csbm/trial/{t}")).next_u64()
}

fn run_trials<T: Send>(
    params: &CsbmParams,
    trials: usize,
    seed: u64,
    jobs: usize,
    f: impl Fn(&Graph) -> Result<T> + Sync,
) -> Result<Vec<(T, f64)>> {
    params.validate()?;
    if trials == 0 {
        return Err(Error::contract("at least one trial is required"));
    }
    pool(jobs)?.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let g = sample_csbm(params, trial_seed(seed, t))?;
                Ok((f(&g)?, edge_homophily(&g)))
            })
            .collect()
    })
}

/// Monte Carlo estimate of the factor for class weights `(w₊, w₋)`, with
/// self-loop weight `w₊`.
pub fn monte_carlo(
    params: &CsbmParams,
    w_plus: f64,
    w_minus: f64,
    trials: usize,
    seed: u64,
    jobs: usize,
) -> Result<TheoremReport> {
    predicted_factor(params.p, params.q, w_plus, w_minus, params.classes)?;
    let out = run_trials(params, trials, seed, jobs, |g| {
        empirical_factor(g, &class_weights(g, w_plus, w_minus), w_plus, params.mu)
    })?;
    let (factors, homophily): (Vec<f64>, Vec<f64>) = out.into_iter().unzip();
    TheoremReport::new(params, params.n, w_plus, w_minus, factors, &homophily)
}

fn sign(x: f64) -> i8 {
    if x.abs() < ZERO_FACTOR {
        0
    } else if x > 0.0 {
        1
    } else {
        -1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// `w₊/w₋`, realised as `w₊ = 1`, `w₋ = 1/ratio`.
    pub ratio: f64,
    pub report: TheoremReport,
    pub predicted_sign: i8,
    pub empirical_sign: i8,
    /// Signs agree, or the prediction is zero and the estimate lies within
    /// [`BOUNDARY_TOLERANCE`] of zero.
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub params: CsbmParams,
    pub seed: u64,
    pub trials: usize,
    /// `q/p`, where the predicted factor crosses zero.
    pub threshold: f64,
    /// Sorted by ratio.
    pub rows: Vec<SweepRow>,
    /// Consecutive ratio pairs between which the empirical sign flips.
    pub sign_changes: Vec<(f64, f64)>,
    pub all_consistent: bool,
}

impl SweepReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn reports(&self) -> impl Iterator<Item = &TheoremReport> {
        self.rows.iter().map(|r| &r.report)
    }
}

/// Sign of the factor across `w₊/w₋` ratios. Each trial samples one graph
/// and reuses it for every ratio.
pub fn sign_boundary_sweep(
    params: &CsbmParams,
    ratios: &[f64],
    trials: usize,
    seed: u64,
    jobs: usize,
) -> Result<SweepReport> {
    if ratios.is_empty() {
        return Err(Error::contract("no ratios to sweep"));
    }
    if let Some(r) = ratios.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(Error::contract(format!("ratio {r} must be positive")));
    }
    if !(params.p > 0.0) {
        return Err(Error::contract("the sign boundary q/p needs p > 0"));
    }
    let mut ratios = ratios.to_vec();
    ratios.sort_by(f64::total_cmp);
    let out = run_trials(params, trials, seed, jobs, |g| {
        ratios
            .iter()
            .map(|&r| {
                let w_minus = 1.0 / r;
                empirical_factor(g, &class_weights(g, 1.0, w_minus), 1.0, params.mu)
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let homophily: Vec<f64> = out.iter().map(|o| o.1).collect();
    let mut rows = Vec::with_capacity(ratios.len());
    for (k, &ratio) in ratios.iter().enumerate() {
        let per_trial = out.iter().map(|o| o.0[k]).collect();
        let report = TheoremReport::new(params, params.n, 1.0, 1.0 / ratio, per_trial, &homophily)?;
        let (ps, es) = (sign(report.predicted), sign(report.empirical));
        let consistent = if ps == 0 {
            report.empirical.abs() <= BOUNDARY_TOLERANCE
        } else {
            ps == es
        };
        rows.push(SweepRow {
            ratio,
            report,
            predicted_sign: ps,
            empirical_sign: es,
            consistent,
        });
    }
    let sign_changes = rows
        .windows(2)
        .filter(|w| w[0].empirical_sign != w[1].empirical_sign)
        .map(|w| (w[0].ratio, w[1].ratio))
        .collect();
    Ok(SweepReport {
        params: *params,
        seed,
        trials,
        threshold: params.q / params.p,
        all_consistent: rows.iter().all(|r| r.consistent),
        rows,
        sign_changes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterReport {
    /// `Σ_c Σ_{i∈c} ‖h_i − h̄_c‖²`.
    pub trace_sw: f64,
    /// `(mean_i Σ_j ŵ_ij²)⁻¹` with `ŵ` normalized per node.
    pub d_eff: f64,
}

/// Within-class scatter after row-normalized weighted aggregation
/// `h_i = Σ_j ŵ_ij x_j`, `ŵ_ij = w_ij / Σ_k w_ik`, the self weight included.
pub fn scatter_measure(g: &Graph, weights: &[f64], self_weight: f64) -> Result<ScatterReport> {
    check_weights(g, weights, self_weight)?;
    let x = g.features();
    let deg = weighted_degrees(g, weights, self_weight);
    if let Some(i) = deg.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::contract(format!("node {i} has zero total weight")));
    }
    let mut h = Tensor::zeros(x.rows(), x.cols());
    let mut sq = vec![0.0; x.rows()];
    for i in 0..x.rows() {
        let w = self_weight / deg[i];
        sq[i] += w * w;
        for (o, &v) in h.row_mut(i).iter_mut().zip(x.row(i)) {
            *o = w * v;
        }
    }
    for (&(i, j), &w) in g.edges().iter().zip(weights) {
        if i == j {
            continue;
        }
        let w = w / deg[i];
        sq[i] += w * w;
        let (xj, hi) = (x.row(j).to_vec(), h.row_mut(i));
        for (o, v) in hi.iter_mut().zip(xj) {
            *o += w * v;
        }
    }
    let hbar = class_means(&h, g.labels(), g.num_classes())?;
    let trace_sw = g
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &y)| h.row(i).iter().zip(&hbar[y]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    let mean_sq = sq.iter().sum::<f64>() / sq.len() as f64;
    Ok(ScatterReport {
        trace_sw,
        d_eff: 1.0 / mean_sq,
    })
}

/// Factor measured with a model's concordance scores as edge weights.
/// `scores` is aligned with `g.edges()`; self-loop entries are ignored and
/// the self weight is the same-class mean `s̄₊`. The prediction uses
/// `(s̄₊, s̄₋)` in place of `(w₊, w₋)`.
pub fn csna_routing_factor(g: &Graph, scores: &[f64], p: f64, q: f64, mu: f64) -> Result<TheoremReport> {
    check_weights(g, scores, 0.0)?;
    let y = g.labels();
    let (mut same, mut diff) = (Vec::new(), Vec::new());
    for (&(i, j), &s) in g.edges().iter().zip(scores) {
        if i == j {
            continue;
        }
        if y[i] == y[j] { same.push(s) } else { diff.push(s) }
    }
    if same.is_empty() || diff.is_empty() {
        return Err(Error::contract("routing factor needs both same-class and cross-class edges"));
    }
    let s_plus = mean_std(&same).0;
    let s_minus = mean_std(&diff).0;
    let params = CsbmParams {
        n: g.num_nodes(),
        classes: g.num_classes(),
        p,
        q,
        mu,
        dim: g.feature_dim(),
        feature_noise: 1.0,
    };
    let factor = empirical_factor(g, scores, s_plus, mu)?;
    TheoremReport::new(&params, g.num_nodes(), s_plus, s_minus, vec![factor], &[edge_homophily(g)])
}
