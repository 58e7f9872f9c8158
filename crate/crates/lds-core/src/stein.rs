//! Binary hypothesis testing between diagonal product states.
//!
//! Both hypotheses are diagonal in one factor-label basis, so every test is
//! a (possibly randomized) classical decision rule on outcome tuples, and
//! the log-likelihood ratio is a linear function of the outcome counts: the
//! count vector is a sufficient statistic, and all computations run over
//! type classes. The optimal randomized likelihood-ratio test at first-kind
//! error exactly `epsilon` minimizes the second-kind error, whose exponent
//! `(1/n) log beta*_n(epsilon)` converges to minus the relative entropy of
//! the true state against the alternative for every `epsilon` in `(0, 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{LdsError, Result};
use crate::measures::{quantum_relative_entropy, CentralState, DiscreteMeasure, LogSumExp};
use crate::sanov::log_factorials;

/// Cap on the number of type classes per exact computation.
const CLASS_CAP: u64 = 5_000_000;

/// Log-likelihood-ratio values within this distance are one tie group.
const LR_TIE_TOL: f64 = 1e-12;

/// A pair of diagonal states on a shared alphabet: the true state and the
/// alternative. All weights must lie strictly inside (0, 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisPair {
    pub sigma_psi: DiscreteMeasure,
    pub sigma_phi: DiscreteMeasure,
}

impl HypothesisPair {
    pub fn new(sigma_psi: DiscreteMeasure, sigma_phi: DiscreteMeasure) -> Result<Self> {
        sigma_psi.same_alphabet(&sigma_phi)?;
        if !sigma_psi.is_normalized() || !sigma_phi.is_normalized() {
            return Err(LdsError::Structural("both states must be normalized".into()));
        }
        for m in [&sigma_psi, &sigma_phi] {
            if m.weights().iter().any(|&w| !(w > 0.0 && w < 1.0)) {
                return Err(LdsError::Structural(
                    "hypothesis weights must lie strictly in (0, 1)".into(),
                ));
            }
        }
        Ok(Self {
            sigma_psi,
            sigma_phi,
        })
    }

    pub fn alphabet_len(&self) -> usize {
        self.sigma_psi.len()
    }

    /// The target exponent: the relative entropy of the true state against
    /// the alternative.
    pub fn divergence(&self) -> f64 {
        let psi = CentralState::new(self.sigma_psi.clone()).expect("normalized");
        let phi = CentralState::new(self.sigma_phi.clone()).expect("normalized");
        quantum_relative_entropy(&psi, &phi).expect("shared alphabet")
    }
}

/// A randomized threshold test on the log-likelihood-ratio statistic.
///
/// The test accepts the true-state hypothesis when the statistic exceeds the
/// threshold, rejects below it, and accepts with the given probability on
/// the tie group at the threshold.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NpTest {
    pub n: u64,
    pub threshold: f64,
    pub randomization: f64,
}

impl NpTest {
    pub fn new(n: u64, threshold: f64, randomization: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&randomization) {
            return Err(LdsError::Structural(
                "randomization probability must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            n,
            threshold,
            randomization,
        })
    }

    /// Accept everything (first-kind error 0, second-kind error 1).
    pub fn accept_all(n: u64) -> Self {
        Self {
            n,
            threshold: f64::NEG_INFINITY,
            randomization: 1.0,
        }
    }

    /// Reject everything (first-kind error 1, second-kind error 0).
    pub fn reject_all(n: u64) -> Self {
        Self {
            n,
            threshold: f64::INFINITY,
            randomization: 0.0,
        }
    }
}

/// One type class of outcome tuples: its log-likelihood ratio and its log
/// probabilities under either hypothesis.
struct TypeClass {
    log_lr: f64,
    log_p_psi: f64,
    log_p_phi: f64,
}

fn class_count(n: u64, k: u64) -> Option<u64> {
    let mut count: u64 = 1;
    for j in 1..k {
        count = count.checked_mul(n + j)? / j;
        if count > CLASS_CAP {
            return None;
        }
    }
    Some(count)
}

fn enumerate_classes(pair: &HypothesisPair, n: u64) -> Result<Vec<TypeClass>> {
    let k = pair.alphabet_len();
    if class_count(n, k as u64).is_none() {
        return Err(LdsError::Capacity(format!(
            "C(n+k-1, k-1) with n = {n}, k = {k} exceeds {CLASS_CAP} type classes"
        )));
    }
    let log_fact = log_factorials(n as usize);
    let log_psi: Vec<f64> = pair.sigma_psi.weights().iter().map(|w| w.ln()).collect();
    let log_phi: Vec<f64> = pair.sigma_phi.weights().iter().map(|w| w.ln()).collect();
    let mut classes = Vec::new();
    let mut counts = vec![0u64; k];
    fn rec(
        idx: usize,
        remaining: u64,
        counts: &mut [u64],
        n: u64,
        log_fact: &[f64],
        log_psi: &[f64],
        log_phi: &[f64],
        out: &mut Vec<TypeClass>,
    ) {
        if idx + 1 == counts.len() {
            counts[idx] = remaining;
            let mut log_multi = log_fact[n as usize];
            let mut lp_psi = 0.0;
            let mut lp_phi = 0.0;
            for (i, &c) in counts.iter().enumerate() {
                log_multi -= log_fact[c as usize];
                lp_psi += c as f64 * log_psi[i];
                lp_phi += c as f64 * log_phi[i];
            }
            out.push(TypeClass {
                log_lr: lp_psi - lp_phi,
                log_p_psi: log_multi + lp_psi,
                log_p_phi: log_multi + lp_phi,
            });
            return;
        }
        for c in 0..=remaining {
            counts[idx] = c;
            rec(
                idx + 1,
                remaining - c,
                counts,
                n,
                log_fact,
                log_psi,
                log_phi,
                out,
            );
        }
    }
    rec(
        0,
        n,
        &mut counts,
        n,
        &log_fact,
        &log_psi,
        &log_phi,
        &mut classes,
    );
    Ok(classes)
}

/// Exact error probabilities of a threshold test: the first-kind error is
/// the true-state mass rejected, the second-kind error the alternative mass
/// accepted. Both are type-class sums.
pub fn error_probabilities(pair: &HypothesisPair, test: &NpTest) -> Result<(f64, f64)> {
    let classes = enumerate_classes(pair, test.n)?;
    let mut alpha_acc = LogSumExp::new();
    let mut beta_acc = LogSumExp::new();
    let log_gamma = if test.randomization > 0.0 {
        test.randomization.ln()
    } else {
        f64::NEG_INFINITY
    };
    let log_one_minus_gamma = if test.randomization < 1.0 {
        (1.0 - test.randomization).ln()
    } else {
        f64::NEG_INFINITY
    };
    for class in &classes {
        if class.log_lr > test.threshold + LR_TIE_TOL {
            beta_acc.add(class.log_p_phi);
        } else if class.log_lr < test.threshold - LR_TIE_TOL {
            alpha_acc.add(class.log_p_psi);
        } else {
            alpha_acc.add(class.log_p_psi + log_one_minus_gamma);
            beta_acc.add(class.log_p_phi + log_gamma);
        }
    }
    let to_prob = |v: f64| if v == f64::NEG_INFINITY { 0.0 } else { v.exp().min(1.0) };
    Ok((to_prob(alpha_acc.value()), to_prob(beta_acc.value())))
}

/// The optimal test at level `epsilon` and its exact second-kind error.
#[derive(Debug, Clone, Serialize)]
pub struct NpOptimum {
    pub test: NpTest,
    pub beta_star: f64,
    pub log_beta_star: f64,
    pub alpha: f64,
}

/// Construct the randomized likelihood-ratio test with first-kind error
/// exactly `epsilon`: type classes are sorted by descending likelihood
/// ratio, accepted until the true-state mass reaches `1 - epsilon`, and the
/// boundary tie group is accepted with the residual probability. By the
/// Neyman-Pearson ordering no test with first-kind error at most `epsilon`
/// has a smaller second-kind error.
pub fn np_optimal_beta(pair: &HypothesisPair, n: u64, epsilon: f64) -> Result<NpOptimum> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(LdsError::Domain(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let mut classes = enumerate_classes(pair, n)?;
    classes.sort_by(|a, b| b.log_lr.total_cmp(&a.log_lr));

    // Group ties in the log-likelihood ratio before thresholding.
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for (i, class) in classes.iter().enumerate() {
        match groups.last_mut() {
            Some((lr, members)) if (class.log_lr - *lr).abs() <= LR_TIE_TOL => members.push(i),
            _ => groups.push((class.log_lr, vec![i])),
        }
    }

    let target = 1.0 - epsilon;
    let mut acc_psi = 0.0f64;
    let mut beta_acc = LogSumExp::new();
    for (lr, members) in &groups {
        let group_psi: f64 = members.iter().map(|&i| classes[i].log_p_psi.exp()).sum();
        if acc_psi + group_psi < target {
            acc_psi += group_psi;
            for &i in members {
                beta_acc.add(classes[i].log_p_phi);
            }
            continue;
        }
        // Boundary group: randomize to hit the target exactly.
        let gamma = ((target - acc_psi) / group_psi).clamp(0.0, 1.0);
        if gamma > 0.0 {
            let log_gamma = gamma.ln();
            for &i in members {
                beta_acc.add(classes[i].log_p_phi + log_gamma);
            }
        }
        let log_beta = beta_acc.value();
        let beta = if log_beta == f64::NEG_INFINITY {
            0.0
        } else {
            log_beta.exp().min(1.0)
        };
        let test = NpTest {
            n,
            threshold: *lr,
            randomization: gamma,
        };
        return Ok(NpOptimum {
            test,
            beta_star: beta,
            log_beta_star: log_beta,
            alpha: epsilon,
        });
    }
    // Accepting everything keeps the first-kind error at zero <= epsilon.
    Ok(NpOptimum {
        test: NpTest::accept_all(n),
        beta_star: 1.0,
        log_beta_star: 0.0,
        alpha: 0.0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SteinPerN {
    pub n: u64,
    pub beta_star: f64,
    pub log_beta_star: f64,
    /// `(1/n) log beta*_n(epsilon)`.
    pub e_n: f64,
    /// `|e_n + divergence| <= c (1 + |log epsilon|) / sqrt(n)`.
    pub bound_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SteinEpsSweep {
    pub epsilon: f64,
    pub e_n_at_max_n: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SteinReport {
    pub target_exponent: f64,
    pub epsilon: f64,
    pub c_constant: f64,
    pub per_n: Vec<SteinPerN>,
    /// Exponents at the largest `n` across a sweep of epsilon levels,
    /// showing the limit does not depend on the level.
    pub eps_sweep: Vec<SteinEpsSweep>,
    pub eps_spread_at_max_n: f64,
    pub all_ok: bool,
}

/// Options for [`stein_exponent_check`].
#[derive(Debug, Clone)]
pub struct SteinCheckOptions {
    /// Constant in the `c (1 + |log eps|) / sqrt(n)` envelope.
    pub c_constant: f64,
    /// Epsilon levels for the level-independence sweep.
    pub eps_sweep: Vec<f64>,
}

impl Default for SteinCheckOptions {
    fn default() -> Self {
        Self {
            c_constant: 1.0,
            eps_sweep: vec![0.05, 0.5, 0.95],
        }
    }
}

/// Track the second-kind error exponent along `n_list` and compare it with
/// minus the divergence of the pair; deviations beyond the declared
/// `c (1 + |log eps|)/sqrt(n)` envelope are reported as failures, and a
/// sweep over epsilon levels records the level-insensitivity of the
/// exponent at the largest `n`.
pub fn stein_exponent_check(
    pair: &HypothesisPair,
    epsilon: f64,
    n_list: &[u64],
    opts: &SteinCheckOptions,
) -> Result<SteinReport> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LdsError::Structural(
            "n list must be strictly increasing and nonempty".into(),
        ));
    }
    let target = pair.divergence();
    let mut per_n = Vec::with_capacity(n_list.len());
    let mut all_ok = true;
    for &n in n_list {
        let opt = np_optimal_beta(pair, n, epsilon)?;
        let e_n = opt.log_beta_star / n as f64;
        let envelope = opts.c_constant * (1.0 + epsilon.ln().abs()) / (n as f64).sqrt();
        let bound_ok = (e_n + target).abs() <= envelope;
        all_ok &= bound_ok;
        per_n.push(SteinPerN {
            n,
            beta_star: opt.beta_star,
            log_beta_star: opt.log_beta_star,
            e_n,
            bound_ok,
        });
    }
    let max_n = *n_list.last().unwrap();
    let mut eps_sweep = Vec::with_capacity(opts.eps_sweep.len());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &eps in &opts.eps_sweep {
        let opt = np_optimal_beta(pair, max_n, eps)?;
        let e_n = opt.log_beta_star / max_n as f64;
        lo = lo.min(e_n);
        hi = hi.max(e_n);
        eps_sweep.push(SteinEpsSweep {
            epsilon: eps,
            e_n_at_max_n: e_n,
        });
    }
    Ok(SteinReport {
        target_exponent: -target,
        epsilon,
        c_constant: opts.c_constant,
        per_n,
        eps_sweep,
        eps_spread_at_max_n: hi - lo,
        all_ok,
    })
}
