//! Information criteria and singular-statistics diagnostics.
//!
//! Given a synthetic truth density `q` relative to the model's reference
//! measure, the Bayes generalization loss/error are exact sums; on real data
//! they are unavailable and WAIC (training loss plus `beta/n` times the
//! functional variance) stands in for the generalization loss. Learning
//! coefficients are computed from user-supplied standard-form exponents
//! `(k, h)` per chart, and the stochastic-complexity expansion
//! `F_n = n L_n + (lambda/beta) log n - ((m-1)/beta) log log n + O_p(1)` is
//! checked by seeded replication and regression.

use serde::{Deserialize, Serialize};

use crate::error::{LdsError, Result};
use crate::escort::{
    density_relative_entropy, escort_posterior, escort_predictive, escort_predictive_state,
    partition_function, ParametricModel,
};
use crate::measures::{quantum_relative_entropy, CentralState};
use crate::seeding::{derive_seed_indexed, rng_from};

/// The density of the true sampling measure with respect to the model's
/// reference measure, plus an optional default sampler seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub q: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl TruthSpec {
    pub fn new(q: Vec<f64>) -> Self {
        Self { q, seed: None }
    }

    /// Check the truth against a model: unit mass against `m` and the same
    /// positivity region as the model's common support.
    pub fn validate_for(&self, model: &ParametricModel) -> Result<()> {
        if self.q.len() != model.alphabet_len() {
            return Err(LdsError::Structural(
                "truth density length does not match the alphabet".into(),
            ));
        }
        if self.q.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(LdsError::Structural(
                "truth density must be nonnegative and finite".into(),
            ));
        }
        let total: f64 = self
            .q
            .iter()
            .zip(&model.reference_m)
            .map(|(q, m)| q * m)
            .sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(LdsError::Structural(format!(
                "truth density integrates to {total} against m, expected 1"
            )));
        }
        let support = model.common_support();
        for (i, (&qi, &s)) in self.q.iter().zip(&support).enumerate() {
            if (qi > 0.0) != s {
                return Err(LdsError::Structural(format!(
                    "truth support differs from the model's common support at label {i}"
                )));
            }
        }
        Ok(())
    }

    /// Draw `n` label indices from the truth with the given seed.
    pub fn sample(&self, model: &ParametricModel, n: usize, seed: u64) -> Vec<usize> {
        use rand::Rng;
        let probs = model.label_probabilities(&self.q);
        let mut cum = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cum.push(acc);
        }
        let mut rng = rng_from(seed);
        (0..n)
            .map(|_| {
                let u: f64 = rng.gen::<f64>() * acc;
                cum.partition_point(|&c| c <= u).min(probs.len() - 1)
            })
            .collect()
    }
}

/// Bayes losses and errors for one (model, data) pair.
///
/// Generalization quantities need the truth; training quantities need only
/// the data. The generalization error is computed along two routes (the
/// direct sum and the state-level relative entropy of the truth against the
/// predictive state) and both are reported; construction fails if they
/// disagree beyond 1e-12.
#[derive(Debug, Clone, Serialize)]
pub struct BayesLosses {
    pub l_bt: f64,
    pub e_bt: Option<f64>,
    pub l_bg: Option<f64>,
    pub e_bg: Option<f64>,
    pub e_bg_state_route: Option<f64>,
    pub n: usize,
}

pub fn bayes_losses(
    model: &ParametricModel,
    data: &[usize],
    truth: Option<&TruthSpec>,
) -> Result<BayesLosses> {
    if data.is_empty() {
        return Err(LdsError::Structural("losses need at least one datum".into()));
    }
    let pred = escort_predictive(model, data)?;
    let n = data.len();
    let l_bt = -data.iter().map(|&x| pred[x].ln()).sum::<f64>() / n as f64;

    let (e_bt, l_bg, e_bg, e_bg_state) = match truth {
        None => (None, None, None, None),
        Some(truth) => {
            truth.validate_for(model)?;
            let q = &truth.q;
            let e_bt_direct =
                data.iter().map(|&x| (q[x] / pred[x]).ln()).sum::<f64>() / n as f64;
            let mean_log_q = data.iter().map(|&x| q[x].ln()).sum::<f64>() / n as f64;
            if (e_bt_direct - (l_bt + mean_log_q)).abs() > 1e-12 {
                return Err(LdsError::Numerical(
                    "training error identity failed beyond tolerance".into(),
                ));
            }
            let mut l_bg = 0.0;
            for i in 0..q.len() {
                let mass = q[i] * model.reference_m[i];
                if mass > 0.0 {
                    l_bg -= mass * pred[i].ln();
                }
            }
            let e_bg = density_relative_entropy(q, &pred, &model.reference_m);
            let psi = CentralState::from_weights(
                model.alphabet.clone(),
                model.label_probabilities(q),
            )?;
            let omega_n = escort_predictive_state(model, data)?;
            let e_bg_state = quantum_relative_entropy(&psi, &omega_n)?;
            if (e_bg - e_bg_state).abs() > 1e-12 {
                return Err(LdsError::Numerical(format!(
                    "generalization error routes disagree: direct {e_bg} vs state {e_bg_state}"
                )));
            }
            (Some(e_bt_direct), Some(l_bg), Some(e_bg), Some(e_bg_state))
        }
    };
    Ok(BayesLosses {
        l_bt,
        e_bt,
        l_bg,
        e_bg,
        e_bg_state_route: e_bg_state,
        n,
    })
}

/// Functional variance: the sum over data points of the posterior variance
/// of the log-density, `sum_j Var_post[log p(x_j | theta)]`.
pub fn functional_variance(model: &ParametricModel, data: &[usize]) -> Result<f64> {
    let post = escort_posterior(model, data)?;
    let mut v = 0.0;
    for &x in data {
        let mut mean = 0.0;
        let mut second = 0.0;
        for (point, &w) in model.theta_grid.iter().zip(&post.weights) {
            if w == 0.0 {
                continue;
            }
            let l = point.density[x].ln();
            mean += w * l;
            second += w * l * l;
        }
        v += (second - mean * mean).max(0.0);
    }
    Ok(v)
}

/// WAIC with its ingredients; `waic = l_bt + (beta / n) v` by construction.
#[derive(Debug, Clone, Serialize)]
pub struct Waic {
    pub waic: f64,
    pub l_bt: f64,
    pub v: f64,
    pub n: usize,
    pub beta: f64,
}

pub fn waic(model: &ParametricModel, data: &[usize]) -> Result<Waic> {
    if data.is_empty() {
        return Err(LdsError::Structural("waic needs at least one datum".into()));
    }
    let losses = bayes_losses(model, data, None)?;
    let v = functional_variance(model, data)?;
    let n = data.len();
    Ok(Waic {
        waic: losses.l_bt + model.beta / n as f64 * v,
        l_bt: losses.l_bt,
        v,
        n,
        beta: model.beta,
    })
}

/// AIC from the grid maximum-likelihood point: the penalized mean negative
/// log-likelihood `-(1/n) sum_j log p(x_j | theta_hat) + d/n`, with `d` the
/// declared parameter dimension (the length of the theta vectors).
#[derive(Debug, Clone, Serialize)]
pub struct Aic {
    pub aic: f64,
    pub mle_index: usize,
    pub mean_log_likelihood: f64,
    pub d: usize,
    pub n: usize,
}

pub fn aic(model: &ParametricModel, data: &[usize]) -> Result<Aic> {
    if data.is_empty() {
        return Err(LdsError::Structural("aic needs at least one datum".into()));
    }
    let mut best = f64::NEG_INFINITY;
    let mut best_idx = 0;
    for (j, point) in model.theta_grid.iter().enumerate() {
        let ll: f64 = data
            .iter()
            .map(|&x| {
                if point.density[x] > 0.0 {
                    point.density[x].ln()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .sum();
        if ll > best {
            best = ll;
            best_idx = j;
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(LdsError::Inference(
            "no grid point gives the data positive likelihood".into(),
        ));
    }
    let n = data.len();
    let d = model.theta_dim();
    Ok(Aic {
        aic: -best / n as f64 + d as f64 / n as f64,
        mle_index: best_idx,
        mean_log_likelihood: best / n as f64,
        d,
        n,
    })
}

/// Per-chart standard-form exponents: the divergence behaves as `u^{2k}` and
/// the effective prior as `u^h` in each local coordinate chart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chart {
    pub k: Vec<u32>,
    pub h: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StandardFormExponents {
    pub charts: Vec<Chart>,
}

impl StandardFormExponents {
    pub fn new(charts: Vec<Chart>) -> Result<Self> {
        if charts.is_empty() {
            return Err(LdsError::Structural("no charts given".into()));
        }
        for (i, chart) in charts.iter().enumerate() {
            if chart.k.is_empty() || chart.k.len() != chart.h.len() {
                return Err(LdsError::Structural(format!(
                    "chart {i} needs equal-length nonempty k and h"
                )));
            }
            if chart.k.iter().all(|&k| k == 0) {
                return Err(LdsError::Structural(format!(
                    "chart {i} has every k_j = 0; the divergence does not vanish there"
                )));
            }
        }
        Ok(Self { charts })
    }
}

/// Learning coefficient and its order from standard-form exponents:
/// `lambda = min over charts of min_j (h_j + 1) / (2 k_j)` over coordinates
/// with `k_j > 0`, and `m` the largest number of coordinates attaining
/// `lambda` within a single minimizing chart. Ratios are compared exactly as
/// integer fractions.
pub fn learning_coefficient(exps: &StandardFormExponents) -> Result<(f64, u32)> {
    if exps.charts.is_empty() {
        return Err(LdsError::Structural("no charts given".into()));
    }
    // Fractions (h + 1) / (2k) compared by cross-multiplication.
    let less = |a: (u64, u64), b: (u64, u64)| a.0 * b.1 < b.0 * a.1;
    let equal = |a: (u64, u64), b: (u64, u64)| a.0 * b.1 == b.0 * a.1;
    let mut best: Option<(u64, u64)> = None;
    for chart in &exps.charts {
        for (&k, &h) in chart.k.iter().zip(&chart.h) {
            if k == 0 {
                continue;
            }
            let ratio = (h as u64 + 1, 2 * k as u64);
            if best.is_none() || less(ratio, best.unwrap()) {
                best = Some(ratio);
            }
        }
    }
    let lambda = best.ok_or_else(|| {
        LdsError::Structural("every chart has all k_j = 0; degenerate model".into())
    })?;
    let mut order = 0u32;
    for chart in &exps.charts {
        let count = chart
            .k
            .iter()
            .zip(&chart.h)
            .filter(|(&k, &h)| k > 0 && equal((h as u64 + 1, 2 * k as u64), lambda))
            .count() as u32;
        order = order.max(count);
    }
    Ok((lambda.0 as f64 / lambda.1 as f64, order))
}

/// The optimal-parameter diagnostics: per-point cross-entropy losses
/// `L(theta)`, the minimizing set, the shared optimal density, and the
/// divergence excess `D(theta) = L(theta) - L_0 >= 0`.
#[derive(Debug, Clone, Serialize)]
pub struct OptimalParameter {
    pub l: Vec<f64>,
    pub l0: f64,
    pub theta0_indices: Vec<usize>,
    pub p0: Vec<f64>,
    /// Whether all minimizers share one density within 1e-10 (an assumption
    /// of the asymptotic theory; a violation is flagged, not fatal).
    pub shared_density_ok: bool,
    pub d_theta: Vec<f64>,
}

pub fn optimal_parameter(model: &ParametricModel, truth: &TruthSpec) -> Result<OptimalParameter> {
    truth.validate_for(model)?;
    let q = &truth.q;
    let l: Vec<f64> = model
        .theta_grid
        .iter()
        .map(|point| {
            let mut s = 0.0;
            for i in 0..q.len() {
                let mass = q[i] * model.reference_m[i];
                if mass > 0.0 {
                    s -= mass * point.density[i].ln();
                }
            }
            s
        })
        .collect();
    let l0 = l.iter().cloned().fold(f64::INFINITY, f64::min);
    let theta0: Vec<usize> = (0..l.len()).filter(|&j| l[j] <= l0 + 1e-12).collect();
    let p0 = model.theta_grid[theta0[0]].density.clone();
    let shared = theta0.iter().all(|&j| {
        model.theta_grid[j]
            .density
            .iter()
            .zip(&p0)
            .all(|(a, b)| (a - b).abs() <= 1e-10)
    });
    let d_theta: Vec<f64> = l.iter().map(|v| v - l0).collect();
    Ok(OptimalParameter {
        l,
        l0,
        theta0_indices: theta0,
        p0,
        shared_density_ok: shared,
        d_theta,
    })
}

/// Empirical divergence excess `D_n(theta) = (1/n) sum_j log(p0(x_j) /
/// p(x_j|theta))` for each grid point.
pub fn empirical_divergence(
    model: &ParametricModel,
    data: &[usize],
    opt: &OptimalParameter,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(LdsError::Structural("empirical divergence needs data".into()));
    }
    let n = data.len() as f64;
    Ok(model
        .theta_grid
        .iter()
        .map(|point| {
            data.iter()
                .map(|&x| (opt.p0[x] / point.density[x]).ln())
                .sum::<f64>()
                / n
        })
        .collect())
}

/// Per-epsilon outcome of the coherence scan.
#[derive(Debug, Clone, Serialize)]
pub struct CoherenceAtEps {
    pub eps: f64,
    /// Infimum of `[S(psi||w_theta) - S(psi||w_0)] / S(w_0||w_theta)` over
    /// the epsilon-neighborhood (excluding points where the denominator
    /// vanishes); `+inf` when the neighborhood holds only such points.
    pub a_star: f64,
    pub neighborhood_size: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoherenceReport {
    pub per_eps: Vec<CoherenceAtEps>,
    pub coherent: bool,
}

/// Scan neighborhoods `{theta : S(w_0 || w_theta) <= eps}` and compute the
/// best coherence constant for each epsilon; the pair is coherent if some
/// epsilon admits a strictly positive constant (vacuously so when the
/// neighborhood is only the optimal set).
pub fn coherence_check(
    model: &ParametricModel,
    truth: &TruthSpec,
    eps_grid: &[f64],
) -> Result<CoherenceReport> {
    let opt = optimal_parameter(model, truth)?;
    let denom: Vec<f64> = model
        .theta_grid
        .iter()
        .map(|point| density_relative_entropy(&opt.p0, &point.density, &model.reference_m))
        .collect();
    let mut per_eps = Vec::with_capacity(eps_grid.len());
    let mut coherent = false;
    for &eps in eps_grid {
        let mut a_star = f64::INFINITY;
        let mut count = 0usize;
        for j in 0..model.grid_len() {
            if denom[j] <= eps {
                count += 1;
                if denom[j] > 1e-15 {
                    a_star = a_star.min(opt.d_theta[j] / denom[j]);
                }
            }
        }
        if a_star > 0.0 {
            coherent = true;
        }
        per_eps.push(CoherenceAtEps {
            eps,
            a_star,
            neighborhood_size: count,
        });
    }
    Ok(CoherenceReport { per_eps, coherent })
}

/// Replication study of the stochastic-complexity expansion.
#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticsReport {
    pub n_grid: Vec<u64>,
    pub replications: u64,
    /// Mean of `F_n - n L_n` per grid point.
    pub mean_f_n0: Vec<f64>,
    pub lambda_hat: f64,
    pub lambda_se: f64,
    /// z-score against the expected coefficient, when given.
    pub z_score: Option<f64>,
    /// Per-n residuals after removing the fitted growth terms; bounded in n
    /// when the expansion holds.
    pub residual_sequence: Vec<f64>,
    pub beta: f64,
}

/// Estimate the log-n coefficient of `F_n - n L_n` by ordinary least squares
/// on replication means (a `log log n` regressor is added when the expected
/// order exceeds one), with heteroskedasticity-robust standard errors.
pub fn stochastic_complexity_asymptotics(
    model: &ParametricModel,
    truth: &TruthSpec,
    n_grid: &[u64],
    replications: u64,
    seed: u64,
    lambda_expected: Option<f64>,
    m_expected: Option<u32>,
) -> Result<AsymptoticsReport> {
    if n_grid.len() < 2 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LdsError::Structural(
            "n grid must be strictly increasing with at least two points".into(),
        ));
    }
    if replications == 0 {
        return Err(LdsError::Structural("replications must be >= 1".into()));
    }
    let opt = optimal_parameter(model, truth)?;
    let max_n = *n_grid.last().unwrap() as usize;
    let mut sums = vec![0.0f64; n_grid.len()];
    for r in 0..replications {
        let data = truth.sample(
            model,
            max_n,
            derive_seed_indexed(seed, "selection/asymptotics", r),
        );
        for (gi, &n) in n_grid.iter().enumerate() {
            let prefix = &data[..n as usize];
            let pf = partition_function(model, prefix, Some(&opt.p0))?;
            sums[gi] += pf.f_n0.expect("p0 supplied");
        }
    }
    let mean_f_n0: Vec<f64> = sums.iter().map(|s| s / replications as f64).collect();

    let use_loglog = m_expected.map(|m| m > 1).unwrap_or(false);
    let mut design: Vec<Vec<f64>> = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let ln_n = (n as f64).ln();
        let mut row = vec![1.0, ln_n / model.beta];
        if use_loglog {
            row.push(-ln_n.ln() / model.beta);
        }
        design.push(row);
    }
    let fit = ols_robust(&design, &mean_f_n0)?;
    let lambda_hat = fit.coefficients[1];
    let lambda_se = fit.std_errors[1];
    let z_score = lambda_expected.map(|l| (lambda_hat - l) / lambda_se.max(1e-300));
    // Residual sequence: the mean values with the fitted growth removed,
    // keeping the intercept (the limit of the remainder term).
    let residual_sequence: Vec<f64> = design
        .iter()
        .zip(&mean_f_n0)
        .map(|(row, &y)| {
            let growth: f64 = row
                .iter()
                .zip(&fit.coefficients)
                .skip(1)
                .map(|(x, c)| x * c)
                .sum();
            y - growth
        })
        .collect();
    Ok(AsymptoticsReport {
        n_grid: n_grid.to_vec(),
        replications,
        mean_f_n0,
        lambda_hat,
        lambda_se,
        z_score,
        residual_sequence,
        beta: model.beta,
    })
}

struct OlsFit {
    coefficients: Vec<f64>,
    std_errors: Vec<f64>,
}

/// Ordinary least squares with HC0 sandwich standard errors; the designs
/// here have at most three columns, so a direct Gaussian elimination solve
/// is plenty.
fn ols_robust(design: &[Vec<f64>], y: &[f64]) -> Result<OlsFit> {
    let n = design.len();
    let p = design[0].len();
    if n < p {
        return Err(LdsError::Structural(
            "regression needs at least as many points as coefficients".into(),
        ));
    }
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (row, &yi) in design.iter().zip(y) {
        for a in 0..p {
            xty[a] += row[a] * yi;
            for b in 0..p {
                xtx[a][b] += row[a] * row[b];
            }
        }
    }
    let inv = invert(&xtx)?;
    let coefficients: Vec<f64> = (0..p)
        .map(|a| (0..p).map(|b| inv[a][b] * xty[b]).sum())
        .collect();
    // HC0: (X'X)^-1 X' diag(e^2) X (X'X)^-1
    let mut meat = vec![vec![0.0; p]; p];
    for (row, &yi) in design.iter().zip(y) {
        let fitted: f64 = row.iter().zip(&coefficients).map(|(x, c)| x * c).sum();
        let e2 = (yi - fitted).powi(2);
        for a in 0..p {
            for b in 0..p {
                meat[a][b] += e2 * row[a] * row[b];
            }
        }
    }
    let mut std_errors = vec![0.0; p];
    for a in 0..p {
        let mut var = 0.0;
        for i in 0..p {
            for j in 0..p {
                var += inv[a][i] * meat[i][j] * inv[j][a];
            }
        }
        std_errors[a] = var.max(0.0).sqrt();
    }
    Ok(OlsFit {
        coefficients,
        std_errors,
    })
}

fn invert(m: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let p = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-12 {
            return Err(LdsError::Numerical("singular design matrix".into()));
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for j in 0..p {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for i in 0..p {
            if i != col {
                let f = a[i][col];
                for j in 0..p {
                    a[i][j] -= f * a[col][j];
                    inv[i][j] -= f * inv[col][j];
                }
            }
        }
    }
    Ok(inv)
}

/// Criterion used to rank candidate models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Waic,
    Aic,
}

/// Per-model scores within a selection report.
#[derive(Debug, Clone, Serialize)]
pub struct ModelScores {
    pub id: String,
    pub d: usize,
    pub n: usize,
    pub beta: f64,
    pub l_bt: f64,
    pub v: f64,
    pub waic: f64,
    pub aic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_bt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_bg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_bg: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriteriaReport {
    pub criterion: Criterion,
    pub scores: Vec<ModelScores>,
    /// Indices into `scores`, best first.
    pub ranking: Vec<usize>,
    pub selected: String,
    /// Human-readable notes for every tie broken by the deterministic rules.
    pub tie_break_trace: Vec<String>,
    /// Selection is a guide, not a verdict; downstream use of the selected
    /// predictive state should stay flexible.
    pub advisory: &'static str,
}

/// Rank candidate models on shared data by the chosen criterion (ascending),
/// breaking ties by fewer declared parameters and then lexicographic id.
pub fn select_model(
    candidates: &[ParametricModel],
    data: &[usize],
    criterion: Criterion,
    truth: Option<&TruthSpec>,
) -> Result<CriteriaReport> {
    if candidates.is_empty() {
        return Err(LdsError::Structural("no candidate models given".into()));
    }
    let first = &candidates[0];
    for c in candidates.iter().skip(1) {
        if c.alphabet != first.alphabet {
            return Err(LdsError::Structural(
                "candidate models must share one alphabet".into(),
            ));
        }
        if c.reference_m
            .iter()
            .zip(&first.reference_m)
            .any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return Err(LdsError::Structural(
                "candidate models must share one reference measure".into(),
            ));
        }
    }
    let mut scores = Vec::with_capacity(candidates.len());
    for model in candidates {
        let w = waic(model, data)?;
        let a = aic(model, data)?;
        let losses = bayes_losses(model, data, truth)?;
        scores.push(ModelScores {
            id: model.id.clone(),
            d: model.theta_dim(),
            n: data.len(),
            beta: model.beta,
            l_bt: w.l_bt,
            v: w.v,
            waic: w.waic,
            aic: a.aic,
            e_bt: losses.e_bt,
            l_bg: losses.l_bg,
            e_bg: losses.e_bg,
        });
    }
    let value = |s: &ModelScores| match criterion {
        Criterion::Waic => s.waic,
        Criterion::Aic => s.aic,
    };
    let mut ranking: Vec<usize> = (0..scores.len()).collect();
    let mut trace = Vec::new();
    ranking.sort_by(|&a, &b| {
        let (sa, sb) = (&scores[a], &scores[b]);
        let (va, vb) = (value(sa), value(sb));
        if (va - vb).abs() <= 1e-12 {
            sa.d.cmp(&sb.d).then_with(|| sa.id.cmp(&sb.id))
        } else {
            va.total_cmp(&vb)
        }
    });
    for pair in ranking.windows(2) {
        let (sa, sb) = (&scores[pair[0]], &scores[pair[1]]);
        if (value(sa) - value(sb)).abs() <= 1e-12 {
            if sa.d != sb.d {
                trace.push(format!(
                    "tie between {} and {} broken by parameter count ({} < {})",
                    sa.id, sb.id, sa.d, sb.d
                ));
            } else {
                trace.push(format!(
                    "tie between {} and {} broken lexicographically",
                    sa.id, sb.id
                ));
            }
        }
    }
    let selected = scores[ranking[0]].id.clone();
    Ok(CriteriaReport {
        criterion,
        scores,
        ranking,
        selected,
        tie_break_trace: trace,
        advisory: "treat the selected predictive state as a working choice, not an absolute one",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::escort::ThetaPoint;
    use crate::measures::Alphabet;

    fn bernoulli_grid(thetas: &[f64], beta: f64) -> ParametricModel {
        let grid = thetas
            .iter()
            .map(|&t| ThetaPoint {
                theta: vec![t],
                prior: 1.0 / thetas.len() as f64,
                density: vec![1.0 - t, t],
            })
            .collect();
        ParametricModel::new(
            "bernoulli",
            Alphabet::new(["0", "1"]).unwrap(),
            vec![1.0, 1.0],
            grid,
            beta,
        )
        .unwrap()
    }

    fn degenerate_model(theta: f64) -> ParametricModel {
        ParametricModel::new(
            "degenerate",
            Alphabet::new(["0", "1"]).unwrap(),
            vec![1.0, 1.0],
            vec![ThetaPoint {
                theta: vec![theta],
                prior: 1.0,
                density: vec![1.0 - theta, theta],
            }],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn generalization_error_vanishes_when_predictive_equals_truth() {
        let model = degenerate_model(0.3);
        let truth = TruthSpec::new(vec![0.7, 0.3]);
        let losses = bayes_losses(&model, &[1, 0, 0], Some(&truth)).unwrap();
        assert!(losses.e_bg.unwrap().abs() < 1e-14);
        assert!((losses.l_bt - -(0.3f64.ln() + 2.0 * 0.7f64.ln()) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn generalization_error_two_label_value() {
        // Truth (0.5, 0.5) against the predictive (0.42, 0.58) reached after
        // one observed "1" on the {0.3, 0.7} grid.
        let model = bernoulli_grid(&[0.3, 0.7], 1.0);
        let truth = TruthSpec::new(vec![0.5, 0.5]);
        let losses = bayes_losses(&model, &[1], Some(&truth)).unwrap();
        let expect = 0.5 * (0.5f64 / 0.58).ln() + 0.5 * (0.5f64 / 0.42).ln();
        assert!((losses.e_bg.unwrap() - expect).abs() < 1e-13);
        assert!((losses.e_bg.unwrap() - 0.012_966_691_013_252).abs() < 1e-12);
        // Both routes agreed within the op's own tolerance.
        assert!((losses.e_bg.unwrap() - losses.e_bg_state_route.unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn truth_validation_rejects_support_mismatch() {
        let model = bernoulli_grid(&[0.3, 0.7], 1.0);
        let bad = TruthSpec::new(vec![2.0, 0.0]);
        assert!(bad.validate_for(&model).is_err());
    }

    #[test]
    fn functional_variance_degenerate_posterior_is_zero() {
        let model = degenerate_model(0.3);
        assert_eq!(functional_variance(&model, &[1, 0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn functional_variance_uniform_posterior_example() {
        // Prior proportional to 1/p(1|theta) makes the posterior after one
        // "1" exactly uniform, so V is the plain variance of log theta.
        let thetas = [0.3, 0.7];
        let z: f64 = thetas.iter().map(|t| 1.0 / t).sum();
        let grid = thetas
            .iter()
            .map(|&t| ThetaPoint {
                theta: vec![t],
                prior: (1.0 / t) / z,
                density: vec![1.0 - t, t],
            })
            .collect();
        let model = ParametricModel::new(
            "tilted_prior",
            Alphabet::new(["0", "1"]).unwrap(),
            vec![1.0, 1.0],
            grid,
            1.0,
        )
        .unwrap();
        let v = functional_variance(&model, &[1]).unwrap();
        let mean = 0.5 * (0.3f64.ln() + 0.7f64.ln());
        let expect = 0.5 * (0.3f64.ln() - mean).powi(2) + 0.5 * (0.7f64.ln() - mean).powi(2);
        assert!((v - expect).abs() < 1e-12, "v = {v}, expect {expect}");
    }

    #[test]
    fn functional_variance_adds_over_data_blocks() {
        let model = bernoulli_grid(&[0.2, 0.5, 0.8], 1.0);
        let data = [1, 0, 1, 1, 0];
        let v_all = functional_variance(&model, &data).unwrap();
        // Per-datum contributions with the same posterior sum to the total.
        let post = escort_posterior(&model, &data).unwrap();
        let mut v_sum = 0.0;
        for &x in &data {
            let mean: f64 = model
                .theta_grid
                .iter()
                .zip(&post.weights)
                .map(|(p, &w)| w * p.density[x].ln())
                .sum();
            let second: f64 = model
                .theta_grid
                .iter()
                .zip(&post.weights)
                .map(|(p, &w)| w * p.density[x].ln().powi(2))
                .sum();
            v_sum += second - mean * mean;
        }
        assert!((v_all - v_sum).abs() < 1e-12);
    }

    #[test]
    fn waic_identity_is_exact() {
        let model = bernoulli_grid(&[0.2, 0.5, 0.8], 1.7);
        let data = [1, 0, 1, 1];
        let w = waic(&model, &data).unwrap();
        assert_eq!(w.waic, w.l_bt + model.beta / data.len() as f64 * w.v);
        let deg = degenerate_model(0.4);
        let w = waic(&deg, &data).unwrap();
        assert_eq!(w.waic, w.l_bt);
        assert_eq!(w.v, 0.0);
    }

    #[test]
    fn aic_examples() {
        // Single parameter, data fully explained: penalty only.
        let certain = ParametricModel::new(
            "certain",
            Alphabet::new(["a"]).unwrap(),
            vec![1.0],
            vec![ThetaPoint {
                theta: vec![0.0],
                prior: 1.0,
                density: vec![1.0],
            }],
            1.0,
        )
        .unwrap();
        let a = aic(&certain, &[0, 0, 0, 0]).unwrap();
        assert!((a.aic - 0.25).abs() < 1e-15);

        // Grid MLE lands on the point nearest the empirical frequency.
        let model = bernoulli_grid(&[0.1, 0.3, 0.5, 0.7, 0.9], 1.0);
        let data = [1, 1, 1, 1, 1, 1, 1, 0, 0, 0];
        let a = aic(&model, &data).unwrap();
        assert_eq!(model.theta_grid[a.mle_index].theta[0], 0.7);
        let ll = (7.0 * 0.7f64.ln() + 3.0 * 0.3f64.ln()) / 10.0;
        assert!((a.aic - (-ll + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn unused_parameter_dimension_costs_exactly_one_over_n() {
        let slim = bernoulli_grid(&[0.3, 0.7], 1.0);
        let padded = ParametricModel::new(
            "padded",
            slim.alphabet.clone(),
            slim.reference_m.clone(),
            slim.theta_grid
                .iter()
                .map(|p| ThetaPoint {
                    theta: vec![p.theta[0], 0.0],
                    prior: p.prior,
                    density: p.density.clone(),
                })
                .collect(),
            1.0,
        )
        .unwrap();
        let data = [1, 0, 1, 1];
        let a1 = aic(&slim, &data).unwrap();
        let a2 = aic(&padded, &data).unwrap();
        assert!((a2.aic - a1.aic - 1.0 / data.len() as f64).abs() < 1e-15);
    }

    #[test]
    fn learning_coefficient_table() {
        let lc = |charts: Vec<(Vec<u32>, Vec<u32>)>| {
            let exps = StandardFormExponents::new(
                charts.into_iter().map(|(k, h)| Chart { k, h }).collect(),
            )
            .unwrap();
            learning_coefficient(&exps).unwrap()
        };
        assert_eq!(lc(vec![(vec![1, 2], vec![0, 3])]), (0.5, 1));
        assert_eq!(lc(vec![(vec![1, 1], vec![0, 0])]), (0.5, 2));
        assert_eq!(lc(vec![(vec![1], vec![1]), (vec![1], vec![0])]), (0.5, 1));
        // Regular one-parameter chart.
        assert_eq!(lc(vec![(vec![1], vec![0])]), (0.5, 1));
        // Coordinates with k = 0 are excluded from the minimum.
        assert_eq!(lc(vec![(vec![0, 1], vec![0, 2])]), (1.5, 1));
        // Exact fraction ties across distinct (k, h) pairs accumulate.
        assert_eq!(lc(vec![(vec![1, 2], vec![0, 1])]), (0.5, 2));
        assert_eq!(lc(vec![(vec![2], vec![1])]), (0.5, 1));
        assert_eq!(lc(vec![(vec![3, 1], vec![2, 4])]), (0.5, 1));
        assert_eq!(lc(vec![(vec![2, 2], vec![0, 0]), (vec![1], vec![3])]), (0.25, 2));
        assert_eq!(lc(vec![(vec![1, 1, 1], vec![0, 0, 0])]), (0.5, 3));
    }

    #[test]
    fn degenerate_exponents_are_rejected() {
        assert!(StandardFormExponents::new(vec![Chart {
            k: vec![0, 0],
            h: vec![1, 2],
        }])
        .is_err());
        assert!(StandardFormExponents::new(vec![]).is_err());
    }

    #[test]
    fn optimal_parameter_three_point_table() {
        let model = bernoulli_grid(&[0.3, 0.5, 0.7], 1.0);
        let truth = TruthSpec::new(vec![0.4, 0.6]);
        let opt = optimal_parameter(&model, &truth).unwrap();
        // Exact cross-entropy comparison puts the optimum at 0.5.
        assert_eq!(opt.theta0_indices, vec![1]);
        assert!((opt.l[1] - 2.0f64.ln()).abs() < 1e-12);
        let l07 = -(0.6 * 0.7f64.ln() + 0.4 * 0.3f64.ln());
        assert!((opt.l[2] - l07).abs() < 1e-12);
        assert!(opt.shared_density_ok);
        for d in &opt.d_theta {
            assert!(*d >= 0.0);
        }
        assert_eq!(opt.d_theta[1], 0.0);
    }

    #[test]
    fn optimal_parameter_truth_inside_gives_entropy_and_zero_excess() {
        let model = bernoulli_grid(&[0.3, 0.6, 0.9], 1.0);
        let truth = TruthSpec::new(vec![0.4, 0.6]);
        let opt = optimal_parameter(&model, &truth).unwrap();
        let entropy = -(0.4 * 0.4f64.ln() + 0.6 * 0.6f64.ln());
        assert!((opt.l0 - entropy).abs() < 1e-12);
        assert_eq!(opt.d_theta[opt.theta0_indices[0]], 0.0);
    }

    #[test]
    fn optimal_parameter_flags_distinct_tied_densities() {
        // Symmetric truth ties theta and 1 - theta, which are different
        // densities with equal cross-entropy.
        let model = bernoulli_grid(&[0.3, 0.7], 1.0);
        let truth = TruthSpec::new(vec![0.5, 0.5]);
        let opt = optimal_parameter(&model, &truth).unwrap();
        assert_eq!(opt.theta0_indices.len(), 2);
        assert!(!opt.shared_density_ok);
    }

    #[test]
    fn empirical_divergence_matches_definition() {
        let model = bernoulli_grid(&[0.3, 0.5, 0.7], 1.0);
        let truth = TruthSpec::new(vec![0.4, 0.6]);
        let opt = optimal_parameter(&model, &truth).unwrap();
        let data = [1, 1, 0];
        let dn = empirical_divergence(&model, &data, &opt).unwrap();
        let expect = (2.0 * (0.5f64 / 0.7).ln() + (0.5f64 / 0.3).ln()) / 3.0;
        assert!((dn[2] - expect).abs() < 1e-12);
        assert!((dn[1] - 0.0).abs() < 1e-15);
    }

    #[test]
    fn coherence_realizable_truth_has_unit_ratio() {
        let model = bernoulli_grid(&[0.3, 0.5, 0.7], 1.0);
        let truth = TruthSpec::new(vec![0.5, 0.5]); // equals the 0.5 point
        let report = coherence_check(&model, &truth, &[0.1, 1.0]).unwrap();
        for at in &report.per_eps {
            if at.a_star.is_finite() {
                assert!((at.a_star - 1.0).abs() < 1e-12);
            }
        }
        assert!(report.coherent);
    }

    #[test]
    fn coherence_singleton_neighborhood_is_vacuous() {
        let model = bernoulli_grid(&[0.3, 0.5, 0.7], 1.0);
        let truth = TruthSpec::new(vec![0.4, 0.6]);
        // Neighborhoods tighter than the nearest competitor hold only the
        // optimal point.
        let report = coherence_check(&model, &truth, &[1e-6]).unwrap();
        assert_eq!(report.per_eps[0].neighborhood_size, 1);
        assert_eq!(report.per_eps[0].a_star, f64::INFINITY);
        assert!(report.coherent);
    }

    #[test]
    fn coherence_three_point_values() {
        let model = bernoulli_grid(&[0.3, 0.5, 0.7], 1.0);
        let truth = TruthSpec::new(vec![0.4, 0.6]);
        let report = coherence_check(&model, &truth, &[0.1]).unwrap();
        let at = &report.per_eps[0];
        assert_eq!(at.neighborhood_size, 3);
        // Frozen from the exact grid ratios of this configuration.
        assert!((at.a_star - 0.028_068_368_200_230_71).abs() < 1e-12);
        assert!(report.coherent);
    }

    #[test]
    fn asymptotics_degenerate_prior_has_no_log_growth() {
        let model = degenerate_model(0.6);
        let truth = TruthSpec::new(vec![0.4, 0.6]);
        let report = stochastic_complexity_asymptotics(
            &model,
            &truth,
            &[20, 40, 80, 160],
            40,
            7,
            None,
            None,
        )
        .unwrap();
        // F_n - n L_n is identically zero for a point prior at the truth.
        assert!(report.lambda_hat.abs() < 1e-10, "{}", report.lambda_hat);
        for m in &report.mean_f_n0 {
            assert!(m.abs() < 1e-10);
        }
    }

    #[test]
    fn doubling_beta_halves_the_fitted_slope() {
        let thetas: Vec<f64> = (0..199).map(|i| 0.005 + 0.005 * i as f64).collect();
        let truth = TruthSpec::new(vec![0.4, 0.6]);
        let n_grid = [25, 50, 100, 200];
        let m1 = bernoulli_grid(&thetas, 1.0);
        let m2 = bernoulli_grid(&thetas, 2.0);
        let r1 =
            stochastic_complexity_asymptotics(&m1, &truth, &n_grid, 60, 11, None, None).unwrap();
        let r2 =
            stochastic_complexity_asymptotics(&m2, &truth, &n_grid, 60, 11, None, None).unwrap();
        // The regressor is log(n)/beta, so the fitted lambda is comparable;
        // the raw slope of mean growth against log n halves.
        let slope1 = r1.lambda_hat / 1.0;
        let slope2 = r2.lambda_hat / 2.0;
        assert!(
            (slope2 - 0.5 * slope1).abs() < 0.15,
            "slope1 {slope1} slope2 {slope2}"
        );
    }

    #[test]
    fn select_model_single_candidate() {
        let model = bernoulli_grid(&[0.3, 0.7], 1.0);
        let report = select_model(&[model], &[1, 0, 1], Criterion::Waic, None).unwrap();
        assert_eq!(report.selected, "bernoulli");
        assert_eq!(report.ranking, vec![0]);
    }

    #[test]
    fn smaller_model_wins_aic_at_matched_fit() {
        let slim = bernoulli_grid(&[0.3, 0.7], 1.0);
        let mut padded_grid: Vec<ThetaPoint> = slim
            .theta_grid
            .iter()
            .map(|p| ThetaPoint {
                theta: vec![p.theta[0], 1.0],
                prior: p.prior,
                density: p.density.clone(),
            })
            .collect();
        padded_grid[0].theta[1] = 2.0;
        let padded = ParametricModel::new(
            "padded",
            slim.alphabet.clone(),
            slim.reference_m.clone(),
            padded_grid,
            1.0,
        )
        .unwrap();
        let data = [1, 0, 1, 1, 0, 1];
        let report = select_model(
            &[padded.clone(), slim.clone()],
            &data,
            Criterion::Aic,
            None,
        )
        .unwrap();
        assert_eq!(report.selected, "bernoulli");

        // Permuting the candidate order never changes the winner.
        let report2 = select_model(&[slim, padded], &data, Criterion::Aic, None).unwrap();
        assert_eq!(report2.selected, "bernoulli");
    }

    #[test]
    fn tie_break_is_deterministic_and_traced() {
        let a = {
            let mut m = bernoulli_grid(&[0.3, 0.7], 1.0);
            m.id = "b_model".into();
            m
        };
        let b = {
            let mut m = bernoulli_grid(&[0.3, 0.7], 1.0);
            m.id = "a_model".into();
            m
        };
        let data = [1, 0];
        let r1 = select_model(&[a.clone(), b.clone()], &data, Criterion::Waic, None).unwrap();
        let r2 = select_model(&[b, a], &data, Criterion::Waic, None).unwrap();
        assert_eq!(r1.selected, "a_model");
        assert_eq!(r2.selected, "a_model");
        assert!(!r1.tie_break_trace.is_empty());
    }

    #[test]
    fn waic_tracks_generalization_loss_at_moderate_n() {
        // Replication check at a smaller scale than the full study: the
        // mean WAIC stays close to the mean generalization loss.
        let thetas: Vec<f64> = (0..99).map(|i| 0.01 + 0.01 * i as f64).collect();
        let model = bernoulli_grid(&thetas, 1.0);
        let truth = TruthSpec::new(vec![0.4, 0.6]);
        let n = 50;
        let reps = 100;
        let mut sum_lbg = 0.0;
        let mut sum_waic = 0.0;
        for r in 0..reps {
            let data = truth.sample(&model, n, derive_seed_indexed(3, "waic_small", r));
            let losses = bayes_losses(&model, &data, Some(&truth)).unwrap();
            let w = waic(&model, &data).unwrap();
            sum_lbg += losses.l_bg.unwrap();
            sum_waic += w.waic;
        }
        let gap = (sum_lbg - sum_waic).abs() / reps as f64;
        assert!(gap <= 5.0 / n as f64, "gap {gap}");
    }

    #[test]
    fn singular_mixture_grid_hessian_has_a_zero_eigenvalue() {
        // Discretized two-component location mixture
        // p(x | a, b) = (1 - a) phi(x | 0) + a phi(x | b) on a symmetric
        // bin alphabet. At the one-component truth (a, b) = (0, 0) the
        // loss surface is flat along b, so the finite-difference Hessian of
        // L(theta) is singular.
        let bins = 17;
        let lo = -4.0;
        let hi = 4.0;
        let width = (hi - lo) / bins as f64;
        let centers: Vec<f64> = (0..bins).map(|i| lo + (i as f64 + 0.5) * width).collect();
        let phi = |x: f64, mu: f64| (-(x - mu) * (x - mu) / 2.0).exp();
        let cell_mass = |mu: f64| -> Vec<f64> {
            let raw: Vec<f64> = centers.iter().map(|&x| phi(x, mu) * width).collect();
            let z: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / z).collect()
        };
        let m: Vec<f64> = vec![width; bins];
        let density_for = |a: f64, b: f64| -> Vec<f64> {
            let base = cell_mass(0.0);
            let moved = cell_mass(b);
            (0..bins)
                .map(|i| ((1.0 - a) * base[i] + a * moved[i]) / width)
                .collect()
        };
        let truth_q = density_for(0.0, 0.0);
        let h = 0.25;
        let l_of = |a: f64, b: f64| -> f64 {
            let p = density_for(a, b);
            -(0..bins)
                .map(|i| truth_q[i] * m[i] * p[i].ln())
                .sum::<f64>()
        };
        // Finite-difference Hessian at (0, 0); a is one-sided (boundary of
        // the mixture weight), b is central.
        let l00 = l_of(0.0, 0.0);
        let h_bb = (l_of(0.0, h) - 2.0 * l00 + l_of(0.0, -h)) / (h * h);
        let h_aa = (l_of(2.0 * h, 0.0) - 2.0 * l_of(h, 0.0) + l00) / (h * h);
        let h_ab = (l_of(h, h) - l_of(h, -h) - l_of(0.0, h) + l_of(0.0, -h)) / (2.0 * h * h);
        // Smallest eigenvalue magnitude of the symmetric 2x2 Hessian.
        let tr = h_aa + h_bb;
        let det = h_aa * h_bb - h_ab * h_ab;
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        let eigs = [tr / 2.0 - disc, tr / 2.0 + disc];
        let min_abs = eigs.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
        assert!(
            min_abs <= 1e-6,
            "expected a singular direction, eigenvalues {eigs:?}"
        );
        // The loss surface is genuinely curved away from the singular set.
        assert!(l_of(0.5, 1.0) > l00 + 1e-3, "loss surface is flat everywhere");
    }
}
