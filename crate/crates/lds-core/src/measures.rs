//! Finite measures on labeled alphabets, central-state representation, and
//! relative entropies.
//!
//! A state given as a barycenter of a probability measure over factor-state
//! labels is, on a finite alphabet, the same data as a diagonal density
//! matrix. That correspondence makes the quantum relative entropy of two such
//! states equal to the classical relative entropy of their central measures,
//! and every downstream module leans on that identity: rate functions,
//! I-projections, Bayes risks, and testing exponents are all computed with
//! the measure-theoretic entropy below.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{LdsError, Result};

/// Tolerance for "weights sum to one" checks on normalized measures.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// An ordered list of distinct symbolic labels (factor-state labels or
/// outcome symbols).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Alphabet {
    labels: Vec<String>,
}

impl Alphabet {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(LdsError::Structural("alphabet must be nonempty".into()));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.clone()) {
                return Err(LdsError::Structural(format!("duplicate label {l:?}")));
            }
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

impl TryFrom<Vec<String>> for Alphabet {
    type Error = LdsError;
    fn try_from(labels: Vec<String>) -> Result<Self> {
        Alphabet::new(labels)
    }
}

impl From<Alphabet> for Vec<String> {
    fn from(a: Alphabet) -> Vec<String> {
        a.labels
    }
}

/// A finite measure: nonnegative weights, one per alphabet label.
///
/// Serializes as `{"labels": [...], "weights": [...]}`. The `normalized`
/// flag records whether the weights were validated to sum to one; reference
/// measures may be unnormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    alphabet: Alphabet,
    weights: Vec<f64>,
    normalized: bool,
}

impl DiscreteMeasure {
    /// A general finite measure (possibly unnormalized).
    pub fn new(alphabet: Alphabet, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != alphabet.len() {
            return Err(LdsError::Structural(format!(
                "{} weights for {} labels",
                weights.len(),
                alphabet.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(LdsError::Structural(
                "weights must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            alphabet,
            weights,
            normalized: false,
        })
    }

    /// A probability measure; the weights must sum to one within 1e-12.
    pub fn probability(alphabet: Alphabet, weights: Vec<f64>) -> Result<Self> {
        let mut m = Self::new(alphabet, weights)?;
        let total = m.total();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(LdsError::Structural(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        m.normalized = true;
        Ok(m)
    }

    /// Rescale to total mass one.
    pub fn normalize(mut self) -> Result<Self> {
        let total = self.total();
        if total <= 0.0 {
            return Err(LdsError::Structural("cannot normalize zero measure".into()));
        }
        for w in &mut self.weights {
            *w /= total;
        }
        self.normalized = true;
        Ok(self)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Labels carrying strictly positive weight.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }

    pub fn same_alphabet(&self, other: &DiscreteMeasure) -> Result<()> {
        if self.alphabet != other.alphabet {
            return Err(LdsError::Structural(
                "measures live on different alphabets".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    labels: Vec<String>,
    weights: Vec<f64>,
}

impl Serialize for DiscreteMeasure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureRepr {
            labels: self.alphabet.labels().to_vec(),
            weights: self.weights.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DiscreteMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = MeasureRepr::deserialize(d)?;
        let alphabet = Alphabet::new(repr.labels).map_err(serde::de::Error::custom)?;
        let m = DiscreteMeasure::new(alphabet, repr.weights).map_err(serde::de::Error::custom)?;
        // Accept either normalized or general weights; callers that require a
        // probability measure re-validate.
        let total = m.total();
        if (total - 1.0).abs() <= NORMALIZATION_TOL {
            Ok(DiscreteMeasure {
                normalized: true,
                ..m
            })
        } else {
            Ok(m)
        }
    }
}

/// Relative entropy of `nu` with respect to `mu` on a common alphabet:
/// the sum of `nu_i * ln(nu_i / mu_i)` with `0 ln 0 = 0`, and `+inf` exactly
/// when some `nu_i > 0` has `mu_i = 0`.
///
/// Absolute continuity is tested by exact zero-weight comparison.
pub fn relative_entropy(nu: &DiscreteMeasure, mu: &DiscreteMeasure) -> Result<f64> {
    nu.same_alphabet(mu)?;
    if !nu.is_normalized() || !mu.is_normalized() {
        return Err(LdsError::Structural(
            "relative entropy requires normalized measures".into(),
        ));
    }
    let mut sum = 0.0;
    for i in 0..nu.len() {
        let (n, m) = (nu.weight(i), mu.weight(i));
        if n == 0.0 {
            continue;
        }
        if m == 0.0 {
            return Ok(f64::INFINITY);
        }
        sum += n * (n / m).ln();
    }
    Ok(sum)
}

/// A state represented by its central measure over factor-state labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CentralState {
    central_measure: DiscreteMeasure,
}

impl CentralState {
    pub fn new(central_measure: DiscreteMeasure) -> Result<Self> {
        let total = central_measure.total();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(LdsError::Structural(format!(
                "central measure has mass {total}, expected 1"
            )));
        }
        let central_measure = if central_measure.is_normalized() {
            central_measure
        } else {
            DiscreteMeasure {
                normalized: true,
                ..central_measure
            }
        };
        Ok(Self { central_measure })
    }

    pub fn from_weights(alphabet: Alphabet, weights: Vec<f64>) -> Result<Self> {
        Self::new(DiscreteMeasure::probability(alphabet, weights)?)
    }

    pub fn central_measure(&self) -> &DiscreteMeasure {
        &self.central_measure
    }

    pub fn alphabet(&self) -> &Alphabet {
        self.central_measure.alphabet()
    }

    /// Expectation of a diagonal observable given by its values per label.
    pub fn evaluate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.central_measure.len() {
            return Err(LdsError::Structural(
                "observable length does not match alphabet".into(),
            ));
        }
        Ok(values
            .iter()
            .zip(self.central_measure.weights())
            .map(|(a, w)| a * w)
            .sum())
    }
}

impl<'de> Deserialize<'de> for CentralState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = DiscreteMeasure::deserialize(d)?;
        CentralState::new(m).map_err(serde::de::Error::custom)
    }
}

/// Quantum relative entropy of two states sharing one factor-label alphabet.
///
/// Computed as the relative entropy of the central measures; for diagonal
/// density matrices this agrees with the trace formula entry by entry (see
/// [`DiagonalMatrix::relative_entropy_to`]).
pub fn quantum_relative_entropy(psi: &CentralState, omega: &CentralState) -> Result<f64> {
    relative_entropy(psi.central_measure(), omega.central_measure())
}

/// Diagonal density-matrix representation of a central state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagonalMatrix {
    labels: Vec<String>,
    diag: Vec<f64>,
}

impl DiagonalMatrix {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn trace(&self) -> f64 {
        self.diag.iter().sum()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else {
            0.0
        }
    }

    /// Dense row-major matrix, for callers that want the full array.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.entry(i, j)).collect())
            .collect()
    }

    /// Trace-formula relative entropy `Tr[rho (ln rho - ln sigma)]` for
    /// commuting diagonal matrices: evaluated eigenvalue by eigenvalue.
    ///
    /// Deliberately independent of [`relative_entropy`]; the two routes are
    /// compared in tests.
    pub fn relative_entropy_to(&self, sigma: &DiagonalMatrix) -> Result<f64> {
        if self.labels != sigma.labels {
            return Err(LdsError::Structural(
                "density matrices indexed by different labels".into(),
            ));
        }
        let mut tr = 0.0;
        for (&r, &s) in self.diag.iter().zip(&sigma.diag) {
            if r == 0.0 {
                continue; // 0 ln 0 contributes nothing to the trace
            }
            if s == 0.0 {
                return Ok(f64::INFINITY);
            }
            tr += r * (r.ln() - s.ln());
        }
        Ok(tr)
    }
}

/// Diagonal matrix whose entries are the central-measure weights in label
/// order; the trace equals the total mass (one for a state).
pub fn to_density_matrix(psi: &CentralState) -> DiagonalMatrix {
    DiagonalMatrix {
        labels: psi.alphabet().labels().to_vec(),
        diag: psi.central_measure().weights().to_vec(),
    }
}

/// A diagonal observable with a stated norm, used by the state metric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricObservable {
    /// Value of the observable on each label.
    pub values: Vec<f64>,
    /// Stated operator norm; must be strictly positive.
    pub norm: f64,
}

/// A finite truncation of the separating family of observables that
/// metrizes the state space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateMetricBasis {
    observables: Vec<MetricObservable>,
}

impl StateMetricBasis {
    pub fn new(observables: Vec<MetricObservable>) -> Result<Self> {
        for (j, obs) in observables.iter().enumerate() {
            if !(obs.norm > 0.0) || !obs.norm.is_finite() {
                return Err(LdsError::Structural(format!(
                    "observable {j} has non-positive norm {}",
                    obs.norm
                )));
            }
        }
        Ok(Self { observables })
    }

    /// One norm-one projection per label of `alphabet`.
    pub fn elementary_projections(alphabet: &Alphabet) -> Self {
        let k = alphabet.len();
        let observables = (0..k)
            .map(|i| {
                let mut values = vec![0.0; k];
                values[i] = 1.0;
                MetricObservable { values, norm: 1.0 }
            })
            .collect();
        Self { observables }
    }

    pub fn observables(&self) -> &[MetricObservable] {
        &self.observables
    }
}

/// Distance between two states through a finite observable basis:
/// `sum_j 2^-j |omega1(A_j) - omega2(A_j)| / ||A_j||` with `j` starting at 1.
pub fn state_distance(
    omega1: &CentralState,
    omega2: &CentralState,
    basis: &StateMetricBasis,
) -> Result<f64> {
    if basis.observables.is_empty() {
        return Err(LdsError::Structural("state metric basis is empty".into()));
    }
    let mut d = 0.0;
    let mut scale = 1.0;
    for obs in &basis.observables {
        scale *= 0.5;
        let a = omega1.evaluate(&obs.values)?;
        let b = omega2.evaluate(&obs.values)?;
        d += scale * (a - b).abs() / obs.norm;
    }
    Ok(d)
}

/// Max-shifted log-sum-exp; `-inf` entries are ignored, an empty or all
/// `-inf` input yields `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + values
        .iter()
        .filter(|v| v.is_finite())
        .map(|v| (v - m).exp())
        .sum::<f64>()
        .ln()
}

/// Streaming log-sum-exp accumulator for sums too large to buffer.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl LogSumExp {
    pub fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    pub fn add(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term > self.max {
            if self.max > f64::NEG_INFINITY {
                self.sum = self.sum * (self.max - log_term).exp() + 1.0;
            } else {
                self.sum = 1.0;
            }
            self.max = log_term;
        } else {
            self.sum += (log_term - self.max).exp();
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point(w0: f64, w1: f64) -> DiscreteMeasure {
        DiscreteMeasure::probability(Alphabet::new(["r1", "r2"]).unwrap(), vec![w0, w1]).unwrap()
    }

    fn state(weights: &[f64]) -> CentralState {
        let labels: Vec<String> = (0..weights.len()).map(|i| format!("r{i}")).collect();
        CentralState::from_weights(Alphabet::new(labels).unwrap(), weights.to_vec()).unwrap()
    }

    #[test]
    fn alphabet_rejects_duplicates_and_empty() {
        assert!(Alphabet::new(["a", "a"]).is_err());
        assert!(Alphabet::new(Vec::<String>::new()).is_err());
    }

    #[test]
    fn relative_entropy_identity_is_zero() {
        let p = two_point(0.5, 0.5);
        assert_eq!(relative_entropy(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn relative_entropy_infinite_off_support() {
        let nu = two_point(1.0, 0.0);
        let mu = two_point(0.0, 1.0);
        assert_eq!(relative_entropy(&nu, &mu).unwrap(), f64::INFINITY);
    }

    #[test]
    fn relative_entropy_two_point_value() {
        let nu = two_point(0.5, 0.5);
        let mu = two_point(0.25, 0.75);
        // 0.5 ln 2 + 0.5 ln(2/3), hand-evaluated sum
        let expected = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
        let got = relative_entropy(&nu, &mu).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.143_841_036_225_890_42).abs() < 1e-12);
    }

    #[test]
    fn relative_entropy_rejects_alphabet_mismatch() {
        let nu = two_point(0.5, 0.5);
        let mu = DiscreteMeasure::probability(Alphabet::new(["x", "y"]).unwrap(), vec![0.5, 0.5])
            .unwrap();
        assert!(matches!(
            relative_entropy(&nu, &mu),
            Err(LdsError::Structural(_))
        ));
    }

    #[test]
    fn quantum_entropy_matches_classical_and_trace_route() {
        let psi = state(&[0.5, 0.5]);
        let omega = state(&[0.25, 0.75]);
        let q = quantum_relative_entropy(&psi, &omega).unwrap();
        let c = relative_entropy(psi.central_measure(), omega.central_measure()).unwrap();
        let t = to_density_matrix(&psi)
            .relative_entropy_to(&to_density_matrix(&omega))
            .unwrap();
        assert_eq!(q, c);
        assert!((q - t).abs() < 1e-12);
    }

    #[test]
    fn quantum_entropy_one_term_case() {
        let psi = state(&[1.0, 0.0]);
        let omega = state(&[0.9, 0.1]);
        let got = quantum_relative_entropy(&psi, &omega).unwrap();
        assert!((got - (-0.9f64.ln())).abs() < 1e-15);
        assert!((got - 0.105_360_515_657_826_28).abs() < 1e-12);
    }

    #[test]
    fn quantum_entropy_zero_on_equal_states() {
        let psi = state(&[0.2, 0.3, 0.5]);
        assert_eq!(quantum_relative_entropy(&psi, &psi).unwrap(), 0.0);
    }

    #[test]
    fn density_matrix_has_measure_diagonal_and_unit_trace() {
        let psi = state(&[0.2, 0.3, 0.5]);
        let sigma = to_density_matrix(&psi);
        assert_eq!(sigma.diag(), &[0.2, 0.3, 0.5]);
        assert!((sigma.trace() - 1.0).abs() < 1e-15);
        assert_eq!(sigma.entry(0, 1), 0.0);
        assert_eq!(sigma.entry(2, 2), 0.5);

        let single = CentralState::from_weights(Alphabet::new(["r"]).unwrap(), vec![1.0]).unwrap();
        let sigma = to_density_matrix(&single);
        assert_eq!(sigma.to_dense(), vec![vec![1.0]]);
    }

    #[test]
    fn state_distance_elementary_projection_example() {
        let omega1 = state(&[1.0, 0.0]);
        let omega2 = state(&[0.0, 1.0]);
        let basis = StateMetricBasis::elementary_projections(omega1.alphabet());
        let d = state_distance(&omega1, &omega2, &basis).unwrap();
        assert!((d - 0.75).abs() < 1e-15);
        assert_eq!(state_distance(&omega1, &omega1, &basis).unwrap(), 0.0);
    }

    #[test]
    fn state_distance_halves_when_norms_double() {
        let omega1 = state(&[0.7, 0.3]);
        let omega2 = state(&[0.2, 0.8]);
        let basis = StateMetricBasis::elementary_projections(omega1.alphabet());
        let doubled = StateMetricBasis::new(
            basis
                .observables()
                .iter()
                .map(|o| MetricObservable {
                    values: o.values.clone(),
                    norm: 2.0 * o.norm,
                })
                .collect(),
        )
        .unwrap();
        let d1 = state_distance(&omega1, &omega2, &basis).unwrap();
        let d2 = state_distance(&omega1, &omega2, &doubled).unwrap();
        assert!((d2 - 0.5 * d1).abs() < 1e-15);
    }

    #[test]
    fn state_distance_rejects_empty_basis() {
        let omega = state(&[0.5, 0.5]);
        let basis = StateMetricBasis::new(Vec::new()).unwrap();
        assert!(matches!(
            state_distance(&omega, &omega, &basis),
            Err(LdsError::Structural(_))
        ));
    }

    #[test]
    fn measure_json_round_trip() {
        let m = two_point(0.25, 0.75);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, r#"{"labels":["r1","r2"],"weights":[0.25,0.75]}"#);
        let back: DiscreteMeasure = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert!(back.is_normalized());
    }

    #[test]
    fn streaming_log_sum_exp_matches_batch() {
        let vals = [-700.0, -699.5, -701.2, f64::NEG_INFINITY, -698.0];
        let mut acc = LogSumExp::new();
        for v in vals {
            acc.add(v);
        }
        assert!((acc.value() - log_sum_exp(&vals)).abs() < 1e-12);
    }
}
