//! Tempered (escort) Bayesian machinery on a finite parameter grid.
//!
//! A model assigns to each grid point a density over the alphabet relative
//! to a reference measure `m`; quadrature weights are folded into the prior,
//! so every integral over the parameter space is an exact sum. The escort
//! posterior raises the likelihood to an inverse temperature `beta > 0`, and
//! the escort predictive distribution / predictive state are the posterior
//! mixtures of the densities / states. Risk functionals are evaluated by
//! exhaustive enumeration of data tuples, which makes optimality of the
//! escort predictive checkable by brute force at small `n`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LdsError, Result};
use crate::measures::{log_sum_exp, Alphabet, CentralState};
use crate::seeding::rng_from;

/// Tolerance for the per-parameter density normalization `sum_i p(i) m_i = 1`.
pub const DENSITY_TOL: f64 = 1e-10;

/// Cap on `alphabet^n` for exhaustive data-tuple enumeration in risks.
const TUPLE_CAP: u64 = 1_000_000;

/// One parameter-grid point: location, prior weight (quadrature folded in),
/// and the density over the alphabet w.r.t. the reference measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    pub theta: Vec<f64>,
    pub prior: f64,
    pub density: Vec<f64>,
}

/// A parametric family on a finite grid with a tempered-posterior setup.
///
/// Serializes as
/// `{"id": ..., "alphabet": [...], "m": [...], "theta_grid": [...], "beta": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricModel {
    #[serde(default = "default_model_id")]
    pub id: String,
    pub alphabet: Alphabet,
    #[serde(rename = "m")]
    pub reference_m: Vec<f64>,
    pub theta_grid: Vec<ThetaPoint>,
    pub beta: f64,
}

fn default_model_id() -> String {
    "model".to_string()
}

impl ParametricModel {
    pub fn new(
        id: impl Into<String>,
        alphabet: Alphabet,
        reference_m: Vec<f64>,
        theta_grid: Vec<ThetaPoint>,
        beta: f64,
    ) -> Result<Self> {
        let model = Self {
            id: id.into(),
            alphabet,
            reference_m,
            theta_grid,
            beta,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.alphabet.len();
        if self.reference_m.len() != k {
            return Err(LdsError::Structural(
                "reference measure length does not match alphabet".into(),
            ));
        }
        if self.reference_m.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(LdsError::Structural(
                "reference measure must be nonnegative and finite".into(),
            ));
        }
        if self.theta_grid.is_empty() {
            return Err(LdsError::Structural("parameter grid is empty".into()));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(LdsError::Structural(format!(
                "beta must lie in (0, inf), got {}",
                self.beta
            )));
        }
        let dim = self.theta_grid[0].theta.len();
        let prior_total: f64 = self.theta_grid.iter().map(|t| t.prior).sum();
        if (prior_total - 1.0).abs() > 1e-12 {
            return Err(LdsError::Structural(format!(
                "prior weights sum to {prior_total}, expected 1"
            )));
        }
        let mut common: Option<Vec<bool>> = None;
        for (j, point) in self.theta_grid.iter().enumerate() {
            if point.theta.len() != dim {
                return Err(LdsError::Structural(format!(
                    "theta point {j} has dimension {} != {dim}",
                    point.theta.len()
                )));
            }
            if !(point.prior >= 0.0) {
                return Err(LdsError::Structural(format!(
                    "prior weight at theta point {j} is negative"
                )));
            }
            if point.density.len() != k {
                return Err(LdsError::Structural(format!(
                    "density at theta point {j} has length {} != alphabet {k}",
                    point.density.len()
                )));
            }
            if point.density.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(LdsError::Structural(format!(
                    "density at theta point {j} must be nonnegative and finite"
                )));
            }
            let total: f64 = point
                .density
                .iter()
                .zip(&self.reference_m)
                .map(|(p, m)| p * m)
                .sum();
            if (total - 1.0).abs() > DENSITY_TOL {
                return Err(LdsError::Structural(format!(
                    "density at theta point {j} integrates to {total} against m, expected 1"
                )));
            }
            let positivity: Vec<bool> = point.density.iter().map(|&p| p > 0.0).collect();
            match &common {
                None => common = Some(positivity),
                Some(c) if *c != positivity => {
                    return Err(LdsError::Structural(format!(
                        "positivity region of the density at theta point {j} differs; \
                         the family must share one support"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn theta_dim(&self) -> usize {
        self.theta_grid[0].theta.len()
    }

    pub fn alphabet_len(&self) -> usize {
        self.alphabet.len()
    }

    pub fn grid_len(&self) -> usize {
        self.theta_grid.len()
    }

    /// Labels on which the densities are strictly positive.
    pub fn common_support(&self) -> Vec<bool> {
        self.theta_grid[0].density.iter().map(|&p| p > 0.0).collect()
    }

    /// Map data labels to alphabet indices.
    pub fn index_data(&self, labels: &[String]) -> Result<Vec<usize>> {
        labels
            .iter()
            .enumerate()
            .map(|(pos, l)| {
                self.alphabet.index_of(l).ok_or_else(|| {
                    LdsError::Structural(format!("datum {pos} has unknown label {l:?}"))
                })
            })
            .collect()
    }

    fn check_data(&self, data: &[usize]) -> Result<()> {
        let k = self.alphabet.len();
        for (pos, &x) in data.iter().enumerate() {
            if x >= k {
                return Err(LdsError::Structural(format!(
                    "datum {pos} indexes label {x} outside the alphabet"
                )));
            }
        }
        Ok(())
    }

    /// The state attached to a grid point: its central measure has weights
    /// `p(i|theta) m_i`.
    pub fn state_at(&self, j: usize) -> Result<CentralState> {
        let w: Vec<f64> = self.theta_grid[j]
            .density
            .iter()
            .zip(&self.reference_m)
            .map(|(p, m)| p * m)
            .collect();
        CentralState::from_weights(self.alphabet.clone(), w)
    }

    /// Probabilities `p(i) m_i` for sampling labels from a density.
    pub fn label_probabilities(&self, density: &[f64]) -> Vec<f64> {
        density
            .iter()
            .zip(&self.reference_m)
            .map(|(p, m)| p * m)
            .collect()
    }
}

/// The escort posterior over the parameter grid for one data sequence.
#[derive(Debug, Clone)]
pub struct EscortPosterior {
    /// Per-point values `log[pi(theta) prod_j p(x_j|theta)^beta]`, shifted so
    /// the maximum is zero.
    pub log_weights: Vec<f64>,
    /// Normalized posterior weights.
    pub weights: Vec<f64>,
    /// `log Z_n`, the log of the unnormalized escort integral.
    pub log_z: f64,
    pub n: usize,
}

/// Posterior weights proportional to `pi(theta) prod_j p(x_j|theta)^beta`,
/// computed in the log domain; with no data this is the prior.
pub fn escort_posterior(model: &ParametricModel, data: &[usize]) -> Result<EscortPosterior> {
    model.check_data(data)?;
    let raw: Vec<f64> = model
        .theta_grid
        .iter()
        .map(|point| {
            let mut l = if point.prior > 0.0 {
                point.prior.ln()
            } else {
                f64::NEG_INFINITY
            };
            for &x in data {
                let p = point.density[x];
                if p > 0.0 {
                    l += model.beta * p.ln();
                } else {
                    l = f64::NEG_INFINITY;
                    break;
                }
            }
            l
        })
        .collect();
    let log_z = log_sum_exp(&raw);
    if log_z == f64::NEG_INFINITY {
        return Err(LdsError::Inference(
            "escort posterior has zero total mass: data lie outside every density's support"
                .into(),
        ));
    }
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_weights: Vec<f64> = raw.iter().map(|l| l - max).collect();
    let weights: Vec<f64> = raw.iter().map(|l| (l - log_z).exp()).collect();
    Ok(EscortPosterior {
        log_weights,
        weights,
        log_z,
        n: data.len(),
    })
}

/// The escort predictive density over the alphabet (w.r.t. the reference
/// measure): the posterior mixture of the grid densities.
pub fn escort_predictive(model: &ParametricModel, data: &[usize]) -> Result<Vec<f64>> {
    let post = escort_posterior(model, data)?;
    Ok(predictive_from_weights(model, &post.weights))
}

pub(crate) fn predictive_from_weights(model: &ParametricModel, weights: &[f64]) -> Vec<f64> {
    let k = model.alphabet.len();
    let mut pred = vec![0.0; k];
    for (point, &w) in model.theta_grid.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for i in 0..k {
            pred[i] += w * point.density[i];
        }
    }
    pred
}

/// The escort predictive state: the barycenter of the grid states under the
/// posterior. Its central-measure weights are the posterior mixture of
/// `p(i|theta) m_i`, which coincides with the predictive density times `m`.
pub fn escort_predictive_state(model: &ParametricModel, data: &[usize]) -> Result<CentralState> {
    let post = escort_posterior(model, data)?;
    let k = model.alphabet.len();
    let mut weights = vec![0.0; k];
    for (point, &w) in model.theta_grid.iter().zip(&post.weights) {
        if w == 0.0 {
            continue;
        }
        for i in 0..k {
            weights[i] += w * point.density[i] * model.reference_m[i];
        }
    }
    CentralState::from_weights(model.alphabet.clone(), weights)
}

/// Posterior mean of a function of the parameter.
pub fn posterior_mean<F>(model: &ParametricModel, data: &[usize], g: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let post = escort_posterior(model, data)?;
    Ok(model
        .theta_grid
        .iter()
        .zip(&post.weights)
        .map(|(point, &w)| w * g(&point.theta))
        .sum())
}

/// Partition function and stochastic complexity, all in the log domain:
/// `log Z_n`, `F_n = -(1/beta) log Z_n`, and when a designated optimal
/// density is supplied also `log Z_n^0 = log Z_n - beta sum_j log p0(x_j)`
/// and `F_n^0`.
#[derive(Debug, Clone, Serialize)]
pub struct PartitionFunction {
    pub log_z: f64,
    pub f_n: f64,
    pub log_z0: Option<f64>,
    pub f_n0: Option<f64>,
}

pub fn partition_function(
    model: &ParametricModel,
    data: &[usize],
    p0: Option<&[f64]>,
) -> Result<PartitionFunction> {
    let post = escort_posterior(model, data)?;
    let log_z = post.log_z;
    let f_n = -log_z / model.beta;
    let (log_z0, f_n0) = match p0 {
        None => (None, None),
        Some(p0) => {
            if p0.len() != model.alphabet.len() {
                return Err(LdsError::Config(
                    "designated optimal density has the wrong length".into(),
                ));
            }
            let mut log_l0 = 0.0;
            for &x in data {
                if p0[x] <= 0.0 {
                    return Err(LdsError::Config(
                        "designated optimal density vanishes on observed data".into(),
                    ));
                }
                log_l0 += p0[x].ln();
            }
            let log_z0 = log_z - model.beta * log_l0;
            (Some(log_z0), Some(-log_z0 / model.beta))
        }
    };
    Ok(PartitionFunction {
        log_z,
        f_n,
        log_z0,
        f_n0,
    })
}

/// Relative entropy between two densities w.r.t. the same reference measure:
/// `sum_i m_i p_i log(p_i / r_i)`, `+inf` when `r` misses mass where `p m`
/// has some.
pub fn density_relative_entropy(p: &[f64], r: &[f64], m: &[f64]) -> f64 {
    let mut d = 0.0;
    for i in 0..p.len() {
        let mass = p[i] * m[i];
        if mass == 0.0 {
            continue;
        }
        if r[i] == 0.0 {
            return f64::INFINITY;
        }
        d += mass * (p[i] / r[i]).ln();
    }
    d
}

fn check_tuple_cap(k: usize, n: usize) -> Result<u64> {
    let mut total: u64 = 1;
    for _ in 0..n {
        total = total
            .checked_mul(k as u64)
            .filter(|&t| t <= TUPLE_CAP)
            .ok_or_else(|| {
                LdsError::Capacity(format!(
                    "alphabet^n = {k}^{n} exceeds the {TUPLE_CAP} tuple enumeration cap"
                ))
            })?;
    }
    Ok(total)
}

fn for_each_tuple<F: FnMut(&[usize])>(k: usize, n: usize, mut f: F) {
    let mut tuple = vec![0usize; n];
    loop {
        f(&tuple);
        let mut pos = n;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            tuple[pos] += 1;
            if tuple[pos] < k {
                break;
            }
            tuple[pos] = 0;
        }
    }
}

/// Escort weight of a data tuple under a grid point:
/// `prod_j p(x_j|theta)^beta m_{x_j}`, zero off support.
fn tuple_weight(model: &ParametricModel, point: &ThetaPoint, tuple: &[usize]) -> f64 {
    let mut log_w = 0.0;
    for &x in tuple {
        let p = point.density[x];
        let m = model.reference_m[x];
        if p <= 0.0 || m <= 0.0 {
            return 0.0;
        }
        log_w += model.beta * p.ln() + m.ln();
    }
    log_w.exp()
}

/// Classical risk of a predictive map `r`: the escort-weighted aggregate
/// divergence
/// `sum_{x^n} sum_theta pi(theta) [prod_j p(x_j|theta)^beta m_{x_j}]
///  D(p(.|theta) || r(.|x^n))`.
///
/// The escort weighting is left unnormalized exactly as it enters the risk
/// functional; `normalize` divides by the total escort mass instead, which
/// rescales every candidate identically.
pub fn classical_risk<F>(
    model: &ParametricModel,
    candidate: F,
    n: usize,
    normalize: bool,
) -> Result<f64>
where
    F: Fn(&[usize]) -> Vec<f64>,
{
    check_tuple_cap(model.alphabet.len(), n)?;
    let mut risk = 0.0;
    let mut total_mass = 0.0;
    for_each_tuple(model.alphabet.len(), n, |tuple| {
        let r = candidate(tuple);
        for point in &model.theta_grid {
            if point.prior == 0.0 {
                continue;
            }
            let w = point.prior * tuple_weight(model, point, tuple);
            if w == 0.0 {
                continue;
            }
            total_mass += w;
            risk += w * density_relative_entropy(&point.density, &r, &model.reference_m);
        }
    });
    if normalize && total_mass > 0.0 {
        risk /= total_mass;
    }
    Ok(risk)
}

/// Quantum risk of a state-valued predictive map: the escort-weighted
/// aggregate relative entropy of the grid states against the candidate
/// states, normalized by the total escort mass. Evaluated through the
/// central-measure identity, so it shares its arithmetic with the classical
/// risk.
pub fn quantum_risk<F>(model: &ParametricModel, candidate: F, n: usize) -> Result<f64>
where
    F: Fn(&[usize]) -> CentralState,
{
    check_tuple_cap(model.alphabet.len(), n)?;
    let states: Vec<CentralState> = (0..model.grid_len())
        .map(|j| model.state_at(j))
        .collect::<Result<_>>()?;
    let mut risk = 0.0;
    let mut total_mass = 0.0;
    let mut failure: Option<LdsError> = None;
    for_each_tuple(model.alphabet.len(), n, |tuple| {
        if failure.is_some() {
            return;
        }
        let phi = candidate(tuple);
        for (point, state) in model.theta_grid.iter().zip(&states) {
            if point.prior == 0.0 {
                continue;
            }
            let w = point.prior * tuple_weight(model, point, tuple);
            if w == 0.0 {
                continue;
            }
            total_mass += w;
            match crate::measures::quantum_relative_entropy(state, &phi) {
                Ok(s) => risk += w * s,
                Err(e) => failure = Some(e),
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if total_mass > 0.0 {
        risk /= total_mass;
    }
    Ok(risk)
}

/// Outcome of a brute-force minimality check of the escort predictive.
#[derive(Debug, Clone, Serialize)]
pub struct RiskMinimalityReport {
    pub n: usize,
    pub candidates_tested: usize,
    pub escort_classical_risk: f64,
    pub escort_quantum_risk: f64,
    /// Smallest of `risk(candidate) - risk(escort)` across candidates and
    /// both risk functionals.
    pub min_margin: f64,
    pub violations: usize,
}

/// Compare the escort predictive against random candidate predictive maps:
/// mixtures of the escort with symmetric Dirichlet draws (mixing weight
/// uniform) and pure random densities. A candidate beats the escort only if
/// its risk is lower by more than 1e-12; any such case counts as a violation.
pub fn risk_minimality_check(
    model: &ParametricModel,
    n: usize,
    perturbation_count: usize,
    seed: u64,
) -> Result<RiskMinimalityReport> {
    let tuple_total = check_tuple_cap(model.alphabet.len(), n)? as usize;
    let escort_map: Vec<Vec<f64>> = {
        let mut maps = Vec::with_capacity(tuple_total);
        let mut err = None;
        for_each_tuple(model.alphabet.len(), n, |tuple| {
            if err.is_some() {
                return;
            }
            match escort_predictive(model, tuple) {
                Ok(p) => maps.push(p),
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        maps
    };
    let tuple_index = |tuple: &[usize]| -> usize {
        tuple
            .iter()
            .fold(0usize, |acc, &x| acc * model.alphabet.len() + x)
    };

    let escort_classical = classical_risk(
        model,
        |tuple| escort_map[tuple_index(tuple)].clone(),
        n,
        false,
    )?;
    let escort_quantum = quantum_risk(
        model,
        |tuple| {
            CentralState::from_weights(
                model.alphabet.clone(),
                model.label_probabilities(&escort_map[tuple_index(tuple)]),
            )
            .expect("escort predictive state is normalized")
        },
        n,
    )?;

    let mut rng = rng_from(seed);
    let mut min_margin = f64::INFINITY;
    let mut violations = 0usize;
    let support = model.common_support();
    for c in 0..perturbation_count {
        // Half mixtures with the escort, half pure random densities.
        let lambda = if c % 2 == 0 { rng.gen::<f64>() } else { 0.0 };
        let candidate: Vec<Vec<f64>> = (0..tuple_total)
            .map(|t| {
                let random = random_density(&mut rng, &model.reference_m, &support);
                escort_map[t]
                    .iter()
                    .zip(&random)
                    .map(|(e, r)| lambda * e + (1.0 - lambda) * r)
                    .collect()
            })
            .collect();
        let rc = classical_risk(model, |tuple| candidate[tuple_index(tuple)].clone(), n, false)?;
        let rq = quantum_risk(
            model,
            |tuple| {
                CentralState::from_weights(
                    model.alphabet.clone(),
                    model.label_probabilities(&candidate[tuple_index(tuple)]),
                )
                .expect("candidate densities are normalized")
            },
            n,
        )?;
        for margin in [rc - escort_classical, rq - escort_quantum] {
            min_margin = min_margin.min(margin);
            if margin < -1e-12 {
                violations += 1;
            }
        }
    }
    Ok(RiskMinimalityReport {
        n,
        candidates_tested: perturbation_count,
        escort_classical_risk: escort_classical,
        escort_quantum_risk: escort_quantum,
        min_margin,
        violations,
    })
}

/// A symmetric Dirichlet(1) draw over the common support, returned as a
/// density w.r.t. the reference measure.
fn random_density<R: Rng>(rng: &mut R, m: &[f64], support: &[bool]) -> Vec<f64> {
    // Dirichlet(1, ..., 1) via normalized standard exponentials.
    let mut mass: Vec<f64> = support
        .iter()
        .map(|&s| if s { -(1.0 - rng.gen::<f64>()).ln() } else { 0.0 })
        .collect();
    let total: f64 = mass.iter().sum();
    for v in &mut mass {
        *v /= total;
    }
    mass.iter()
        .zip(m)
        .map(|(w, &mi)| if mi > 0.0 { w / mi } else { 0.0 })
        .collect()
}
