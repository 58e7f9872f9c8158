//! Sample-mean large deviations: cumulant generating functions, the
//! Legendre-transform rate function, and exact / Monte-Carlo verification of
//! the large-deviation sandwich
//!
//! ```text
//! -inf_{interior} I  <=  liminf (1/n) log Q_n  <=  limsup (1/n) log Q_n  <=  -inf_{closure} I
//! ```
//!
//! where `Q_n` is the probability that the mean of `n` i.i.d. draws lands in
//! a finite union of intervals. For upper-tail half-lines the upper bound is
//! the Chernoff bound and holds at every finite `n`; the lower bound is
//! checked against a declared `C log(n)/n` slack.

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{LdsError, Result};
use crate::measures::{log_sum_exp, LogSumExp};
use crate::seeding::{chunked_accumulate, McParams};

/// Convergence tolerance for the tilt equation `c'(t) = a`.
const TILT_TOL: f64 = 1e-12;
/// Iteration cap for bracket growth and Newton/bisection refinement.
const MAX_ITER: usize = 200;
/// Cap on `n * atom_count` for the exact mean-tail convolution.
const DP_CELL_CAP: u64 = 10_000_000;

/// A point mass of a scalar distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub prob: f64,
}

/// A scalar distribution: either finitely many atoms, or a seeded sampler
/// with closed-form moment metadata (its exact cumulant generating function
/// and the interval of `t` where it is finite).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarDistribution {
    Atomic { atoms: Vec<Atom> },
    Gaussian { mean: f64, sd: f64 },
    Exponential { rate: f64 },
}

impl ScalarDistribution {
    /// Atomic distribution; atoms are sorted by value, duplicates merged,
    /// zero-probability atoms dropped, probabilities must sum to one.
    pub fn atomic(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(LdsError::Structural("no atoms given".into()));
        }
        let mut atoms: Vec<Atom> = atoms
            .into_iter()
            .map(|(value, prob)| Atom { value, prob })
            .collect();
        for a in &atoms {
            if !a.value.is_finite() {
                return Err(LdsError::Structural("atom value must be finite".into()));
            }
            if !(a.prob >= 0.0) || !a.prob.is_finite() {
                return Err(LdsError::Structural("atom probability must be >= 0".into()));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.prob).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(LdsError::Structural(format!(
                "atom probabilities sum to {total}, expected 1"
            )));
        }
        atoms.sort_by(|a, b| a.value.total_cmp(&b.value));
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            if a.prob == 0.0 {
                continue;
            }
            match merged.last_mut() {
                Some(last) if last.value == a.value => last.prob += a.prob,
                _ => merged.push(a),
            }
        }
        if merged.is_empty() {
            return Err(LdsError::Structural("all atoms have zero probability".into()));
        }
        Ok(Self::Atomic { atoms: merged })
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        Self::atomic(vec![(0.0, 1.0 - p), (1.0, p)])
    }

    pub fn gaussian(mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0) || !mean.is_finite() || !sd.is_finite() {
            return Err(LdsError::Structural("gaussian needs finite mean, sd > 0".into()));
        }
        Ok(Self::Gaussian { mean, sd })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(LdsError::Structural("exponential needs rate > 0".into()));
        }
        Ok(Self::Exponential { rate })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Atomic { atoms } => {
                Self::atomic(atoms.iter().map(|a| (a.value, a.prob)).collect()).map(|_| ())
            }
            Self::Gaussian { mean, sd } => Self::gaussian(*mean, *sd).map(|_| ()),
            Self::Exponential { rate } => Self::exponential(*rate).map(|_| ()),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Atomic { atoms } => atoms.iter().map(|a| a.value * a.prob).sum(),
            Self::Gaussian { mean, .. } => *mean,
            Self::Exponential { rate } => 1.0 / rate,
        }
    }

    /// Essential range of the distribution.
    pub fn essential_range(&self) -> (f64, f64) {
        match self {
            Self::Atomic { atoms } => (atoms[0].value, atoms[atoms.len() - 1].value),
            Self::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Self::Exponential { .. } => (0.0, f64::INFINITY),
        }
    }

    /// Open interval of `t` where the moment generating function is finite.
    pub fn mgf_validity(&self) -> (f64, f64) {
        match self {
            Self::Atomic { .. } | Self::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Self::Exponential { rate } => (f64::NEG_INFINITY, *rate),
        }
    }

    /// Probability mass sitting exactly at `x` (zero for the samplers).
    pub fn mass_at(&self, x: f64) -> f64 {
        match self {
            Self::Atomic { atoms } => atoms
                .iter()
                .find(|a| a.value == x)
                .map(|a| a.prob)
                .unwrap_or(0.0),
            _ => 0.0,
        }
    }

    fn check_validity(&self, t: f64) -> Result<()> {
        let (lo, hi) = self.mgf_validity();
        if t <= lo || t >= hi {
            return Err(LdsError::Domain(format!(
                "t = {t} outside moment generating function validity ({lo}, {hi})"
            )));
        }
        Ok(())
    }

    /// Cumulant generating function `c(t) = log E[exp(t X)]`.
    pub fn cgf(&self, t: f64) -> Result<f64> {
        self.check_validity(t)?;
        Ok(match self {
            Self::Atomic { atoms } => {
                let logs: Vec<f64> = atoms.iter().map(|a| a.prob.ln() + t * a.value).collect();
                log_sum_exp(&logs)
            }
            Self::Gaussian { mean, sd } => mean * t + 0.5 * sd * sd * t * t,
            Self::Exponential { rate } => (rate / (rate - t)).ln(),
        })
    }

    /// Derivative `c'(t)`, the mean of the exponentially tilted distribution.
    pub fn cgf_prime(&self, t: f64) -> Result<f64> {
        self.check_validity(t)?;
        Ok(match self {
            Self::Atomic { atoms } => self.tilted_moments(atoms, t).0,
            Self::Gaussian { mean, sd } => mean + sd * sd * t,
            Self::Exponential { rate } => 1.0 / (rate - t),
        })
    }

    /// Second derivative `c''(t)`, the tilted variance.
    pub fn cgf_second(&self, t: f64) -> Result<f64> {
        self.check_validity(t)?;
        Ok(match self {
            Self::Atomic { atoms } => self.tilted_moments(atoms, t).1,
            Self::Gaussian { sd, .. } => sd * sd,
            Self::Exponential { rate } => {
                let m = 1.0 / (rate - t);
                m * m
            }
        })
    }

    fn tilted_moments(&self, atoms: &[Atom], t: f64) -> (f64, f64) {
        let logs: Vec<f64> = atoms.iter().map(|a| a.prob.ln() + t * a.value).collect();
        let c = log_sum_exp(&logs);
        let mut mean = 0.0;
        for (a, l) in atoms.iter().zip(&logs) {
            mean += (l - c).exp() * a.value;
        }
        let mut var = 0.0;
        for (a, l) in atoms.iter().zip(&logs) {
            let d = a.value - mean;
            var += (l - c).exp() * d * d;
        }
        (mean, var)
    }

    fn sampler(&self) -> Result<ScalarSampler> {
        ScalarSampler::new(self)
    }

    /// Exponential tilt of the distribution by parameter `t`, in closed form.
    pub fn tilted(&self, t: f64) -> Result<ScalarDistribution> {
        self.check_validity(t)?;
        match self {
            Self::Atomic { atoms } => {
                let c = self.cgf(t)?;
                let atoms = atoms
                    .iter()
                    .map(|a| (a.value, (a.prob.ln() + t * a.value - c).exp()))
                    .collect();
                ScalarDistribution::atomic(atoms)
            }
            Self::Gaussian { mean, sd } => ScalarDistribution::gaussian(mean + sd * sd * t, *sd),
            Self::Exponential { rate } => ScalarDistribution::exponential(rate - t),
        }
    }
}

enum ScalarSampler {
    Atomic { values: Vec<f64>, cum: Vec<f64> },
    Gaussian(rand_distr::Normal<f64>),
    Exponential(rand_distr::Exp<f64>),
}

impl ScalarSampler {
    fn new(dist: &ScalarDistribution) -> Result<Self> {
        Ok(match dist {
            ScalarDistribution::Atomic { atoms } => {
                let values = atoms.iter().map(|a| a.value).collect();
                let mut cum = Vec::with_capacity(atoms.len());
                let mut acc = 0.0;
                for a in atoms {
                    acc += a.prob;
                    cum.push(acc);
                }
                Self::Atomic { values, cum }
            }
            ScalarDistribution::Gaussian { mean, sd } => Self::Gaussian(
                rand_distr::Normal::new(*mean, *sd)
                    .map_err(|e| LdsError::Structural(e.to_string()))?,
            ),
            ScalarDistribution::Exponential { rate } => Self::Exponential(
                rand_distr::Exp::new(*rate).map_err(|e| LdsError::Structural(e.to_string()))?,
            ),
        })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Atomic { values, cum } => {
                let u: f64 = rng.gen();
                let idx = cum.partition_point(|&c| c <= u).min(values.len() - 1);
                values[idx]
            }
            Self::Gaussian(d) => d.sample(rng),
            Self::Exponential(d) => d.sample(rng),
        }
    }
}

/// A scalar distribution together with its Legendre-transform rate function
/// `I(a) = sup_t { a t - c(t) }`.
#[derive(Debug, Clone)]
pub struct RateFunctionProfile {
    dist: ScalarDistribution,
}

impl RateFunctionProfile {
    pub fn new(dist: ScalarDistribution) -> Result<Self> {
        dist.validate()?;
        Ok(Self { dist })
    }

    pub fn distribution(&self) -> &ScalarDistribution {
        &self.dist
    }

    pub fn cgf(&self, t: f64) -> Result<f64> {
        self.dist.cgf(t)
    }

    /// Solve `c'(t) = a` by Newton iteration safeguarded by bisection, with
    /// the bracket grown geometrically from `[-1, 1]` inside the validity
    /// interval of the moment generating function.
    pub fn solve_tilt(&self, a: f64) -> Result<f64> {
        let (vlo, vhi) = self.dist.mgf_validity();
        let clamp = |t: f64| -> f64 {
            let mut t = t;
            if t <= vlo {
                t = if vlo.is_finite() { vlo + 1e-9 } else { t };
            }
            if t >= vhi {
                t = if vhi.is_finite() {
                    vhi - 1e-9 * vhi.abs().max(1.0)
                } else {
                    t
                };
            }
            t
        };
        let mut lo = clamp(-1.0);
        let mut hi = clamp(1.0);
        let grow = |t: f64, toward: f64| -> f64 {
            if toward.is_finite() {
                0.5 * (t + toward)
            } else if t == 0.0 {
                toward.signum()
            } else {
                2.0 * t.abs() * toward.signum()
            }
        };
        let mut iters = 0;
        while self.dist.cgf_prime(lo)? > a {
            lo = grow(lo, vlo);
            iters += 1;
            if iters > MAX_ITER {
                return Err(LdsError::Numerical(format!(
                    "bracket growth failed solving c'(t) = {a}: lower end {lo}"
                )));
            }
        }
        iters = 0;
        while self.dist.cgf_prime(hi)? < a {
            hi = grow(hi, vhi);
            iters += 1;
            if iters > MAX_ITER {
                return Err(LdsError::Numerical(format!(
                    "bracket growth failed solving c'(t) = {a}: upper end {hi}"
                )));
            }
        }

        let tol = TILT_TOL * (1.0 + a.abs());
        let mut t = 0.5 * (lo + hi);
        for _ in 0..MAX_ITER {
            let resid = self.dist.cgf_prime(t)? - a;
            if resid.abs() <= tol {
                return Ok(t);
            }
            if resid > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let curv = self.dist.cgf_second(t)?;
            let newton = t - resid / curv;
            t = if curv > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        let resid = self.dist.cgf_prime(t)? - a;
        if resid.abs() <= tol {
            Ok(t)
        } else {
            Err(LdsError::Numerical(format!(
                "tilt solve for a = {a} stopped after {MAX_ITER} iterations, residual {resid:e}"
            )))
        }
    }

    /// Rate function value at `a`.
    ///
    /// Outside the essential range the value is `+inf` rather than an error,
    /// so that infima over target sets simply ignore unreachable points; at a
    /// boundary atom the value is `-log P(atom)`.
    pub fn rate_function(&self, a: f64) -> Result<f64> {
        let (ess_min, ess_max) = self.dist.essential_range();
        if a < ess_min || a > ess_max {
            return Ok(f64::INFINITY);
        }
        if a == ess_min || a == ess_max {
            let mass = self.dist.mass_at(a);
            return Ok(if mass > 0.0 { -mass.ln() } else { f64::INFINITY });
        }
        if a == self.dist.mean() {
            return Ok(0.0);
        }
        let t = self.solve_tilt(a)?;
        Ok(a * t - self.dist.cgf(t)?)
    }

    /// Infimum of the rate function over an interval set, with the location
    /// of the minimizer when the set is reachable.
    pub fn inf_rate(&self, gamma: &IntervalSet) -> Result<(f64, Option<f64>)> {
        let (ess_min, ess_max) = self.dist.essential_range();
        let mut best = f64::INFINITY;
        let mut arg = None;
        for iv in gamma.intervals() {
            let lo = iv.lo.max(ess_min);
            let hi = iv.hi.min(ess_max);
            if lo > hi {
                continue;
            }
            // The rate function is convex and finite on the essential range;
            // golden-section over the clipped interval plus endpoint checks.
            let f = |x: f64| self.rate_function(x);
            let (x, v) = golden_min(f, lo, hi)?;
            for (cand_x, cand_v) in [(x, v), (lo, f(lo)?), (hi, f(hi)?)] {
                if cand_v < best {
                    best = cand_v;
                    arg = Some(cand_x);
                }
            }
        }
        Ok((best, arg))
    }
}

fn golden_min<F: Fn(f64) -> Result<f64>>(f: F, mut lo: f64, mut hi: f64) -> Result<(f64, f64)> {
    if lo == hi {
        return Ok((lo, f(lo)?));
    }
    // Unbounded intervals are narrowed first; the minimizer of a convex rate
    // function over a half-line is at the finite end or at the mean, both
    // finite, so a generous finite window suffices.
    let width = (hi - lo).abs();
    if !width.is_finite() {
        let anchor = if lo.is_finite() {
            lo
        } else if hi.is_finite() {
            hi
        } else {
            0.0
        };
        let span = 1e6 * (1.0 + anchor.abs());
        lo = lo.max(anchor - span);
        hi = hi.min(anchor + span);
    }
    const PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - PHI * (hi - lo);
    let mut x2 = lo + PHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..MAX_ITER {
        if (hi - lo).abs() <= 1e-11 * (1.0 + lo.abs() + hi.abs()) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - PHI * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + PHI * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let mid = 0.5 * (lo + hi);
    Ok((mid, f(mid)?))
}

/// One interval of the real line with open/closed endpoint flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }

    fn contains(&self, x: f64) -> bool {
        let above = x > self.lo || (self.lo_closed && x == self.lo);
        let below = x < self.hi || (self.hi_closed && x == self.hi);
        above && below
    }
}

#[derive(Serialize, Deserialize)]
struct IntervalRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hi: Option<f64>,
    #[serde(default = "default_true")]
    lo_closed: bool,
    #[serde(default = "default_true")]
    hi_closed: bool,
}

fn default_true() -> bool {
    true
}

/// A finite union of intervals in canonical disjoint sorted form.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet {
    intervals: Vec<Interval>,
}

impl IntervalSet {
    pub fn new(intervals: Vec<Interval>) -> Self {
        let mut ivs: Vec<Interval> = intervals.into_iter().filter(|iv| !iv.is_empty()).collect();
        ivs.sort_by(|a, b| a.lo.total_cmp(&b.lo).then(b.hi.total_cmp(&a.hi)));
        let mut canon: Vec<Interval> = Vec::with_capacity(ivs.len());
        for iv in ivs {
            match canon.last_mut() {
                Some(last)
                    if iv.lo < last.hi
                        || (iv.lo == last.hi && (last.hi_closed || iv.lo_closed)) =>
                {
                    if iv.hi > last.hi {
                        last.hi = iv.hi;
                        last.hi_closed = iv.hi_closed;
                    } else if iv.hi == last.hi {
                        last.hi_closed |= iv.hi_closed;
                    }
                    if iv.lo == last.lo {
                        last.lo_closed |= iv.lo_closed;
                    }
                }
                _ => canon.push(iv),
            }
        }
        Self { intervals: canon }
    }

    pub fn interval(lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> Self {
        Self::new(vec![Interval {
            lo,
            hi,
            lo_closed,
            hi_closed,
        }])
    }

    /// Closed interval `[lo, hi]`.
    pub fn closed(lo: f64, hi: f64) -> Self {
        Self::interval(lo, hi, true, true)
    }

    /// Upper-tail half-line `[a, +inf)`.
    pub fn half_line_geq(a: f64) -> Self {
        Self::interval(a, f64::INFINITY, true, true)
    }

    pub fn whole_line() -> Self {
        Self::interval(f64::NEG_INFINITY, f64::INFINITY, true, true)
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|iv| iv.contains(x))
    }

    pub fn covers_all(&self) -> bool {
        self.intervals.len() == 1
            && self.intervals[0].lo == f64::NEG_INFINITY
            && self.intervals[0].hi == f64::INFINITY
    }

    /// Topological interior (endpoints opened; canonicalization has already
    /// merged intervals that touch through a closed endpoint).
    pub fn interior(&self) -> IntervalSet {
        IntervalSet::new(
            self.intervals
                .iter()
                .map(|iv| Interval {
                    lo_closed: false,
                    hi_closed: false,
                    ..*iv
                })
                .collect(),
        )
    }

    /// Topological closure (finite endpoints closed).
    pub fn closure(&self) -> IntervalSet {
        IntervalSet::new(
            self.intervals
                .iter()
                .map(|iv| Interval {
                    lo_closed: iv.lo.is_finite(),
                    hi_closed: iv.hi.is_finite(),
                    ..*iv
                })
                .collect(),
        )
    }
}

impl Serialize for IntervalSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let reprs: Vec<IntervalRepr> = self
            .intervals
            .iter()
            .map(|iv| IntervalRepr {
                lo: iv.lo.is_finite().then_some(iv.lo),
                hi: iv.hi.is_finite().then_some(iv.hi),
                lo_closed: iv.lo_closed,
                hi_closed: iv.hi_closed,
            })
            .collect();
        reprs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for IntervalSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let reprs = Vec::<IntervalRepr>::deserialize(d)?;
        Ok(IntervalSet::new(
            reprs
                .into_iter()
                .map(|r| Interval {
                    lo: r.lo.unwrap_or(f64::NEG_INFINITY),
                    hi: r.hi.unwrap_or(f64::INFINITY),
                    lo_closed: r.lo_closed,
                    hi_closed: r.hi_closed,
                })
                .collect(),
        ))
    }
}

/// Exact probability that the mean of `n` i.i.d. draws from an atomic
/// distribution lands in `gamma`, by `n`-fold convolution over the lattice of
/// achievable sums. Log-domain throughout, so deep tails do not underflow.
pub fn exact_mean_tail(dist: &ScalarDistribution, n: u64, gamma: &IntervalSet) -> Result<f64> {
    if gamma.covers_all() {
        return Ok(1.0);
    }
    let atoms = match dist {
        ScalarDistribution::Atomic { atoms } => atoms,
        _ => {
            return Err(LdsError::Capacity(
                "exact tails need an atomic distribution; use mc_mean_tail".into(),
            ))
        }
    };
    if n == 0 {
        return Err(LdsError::Structural("n must be >= 1".into()));
    }
    let k = atoms.len() as u64;
    if n * k > DP_CELL_CAP {
        return Err(LdsError::Capacity(format!(
            "n * atoms = {} exceeds the {DP_CELL_CAP} convolution cap; use mc_mean_tail",
            n * k
        )));
    }
    if k == 1 {
        return Ok(if gamma.contains(atoms[0].value) { 1.0 } else { 0.0 });
    }

    let base = atoms[0].value;
    let offsets: Vec<f64> = atoms.iter().map(|a| a.value - base).collect();
    let steps = lattice_steps(&offsets).ok_or_else(|| {
        LdsError::Capacity(
            "atom spacings share no common lattice within tolerance; use mc_mean_tail".into(),
        )
    })?;
    let max_step = *steps.iter().max().unwrap();
    let grid = max_step
        .checked_mul(n as usize)
        .filter(|&g| (g as u64) < DP_CELL_CAP)
        .ok_or_else(|| {
            LdsError::Capacity("sum lattice exceeds the convolution cap; use mc_mean_tail".into())
        })?;
    // Merged atoms have distinct values, so max_step >= 1 here.
    let unit = offsets[steps.iter().position(|&s| s == max_step).unwrap()] / max_step as f64;

    let log_probs: Vec<f64> = atoms.iter().map(|a| a.prob.ln()).collect();
    let mut dp = vec![f64::NEG_INFINITY; grid + 1];
    dp[0] = 0.0;
    let mut reach = 0usize;
    for _ in 0..n {
        let mut next = vec![f64::NEG_INFINITY; grid + 1];
        for (j, &lp) in dp.iter().enumerate().take(reach + 1) {
            if lp == f64::NEG_INFINITY {
                continue;
            }
            for (step, lq) in steps.iter().zip(&log_probs) {
                let idx = j + step;
                let term = lp + lq;
                let cell = &mut next[idx];
                *cell = if *cell == f64::NEG_INFINITY {
                    term
                } else if *cell >= term {
                    *cell + (1.0 + (term - *cell).exp()).ln()
                } else {
                    term + (1.0 + (*cell - term).exp()).ln()
                };
            }
        }
        reach += max_step;
        dp = next;
    }

    let mut acc = LogSumExp::new();
    for (j, &lp) in dp.iter().enumerate() {
        if lp == f64::NEG_INFINITY {
            continue;
        }
        let mean = base + unit * j as f64 / n as f64;
        if gamma.contains(mean) {
            acc.add(lp);
        }
    }
    let v = acc.value();
    Ok(if v == f64::NEG_INFINITY { 0.0 } else { v.exp().min(1.0) })
}

/// Integer lattice steps for the atom offsets, if the offsets share a common
/// divisor to relative tolerance 1e-9.
fn lattice_steps(offsets: &[f64]) -> Option<Vec<usize>> {
    let scale = offsets.iter().cloned().fold(0.0f64, f64::max);
    if scale == 0.0 {
        return Some(vec![0; offsets.len()]);
    }
    let tol = 1e-9 * scale;
    let mut g = 0.0f64;
    for &o in offsets {
        if o == 0.0 {
            continue;
        }
        g = float_gcd(g, o, tol);
    }
    if g <= tol {
        return None;
    }
    let mut steps = Vec::with_capacity(offsets.len());
    for &o in offsets {
        let q = o / g;
        let r = q.round();
        if (q - r).abs() > 1e-6 || r < 0.0 || r > 1e9 {
            return None;
        }
        steps.push(r as usize);
    }
    Some(steps)
}

fn float_gcd(a: f64, b: f64, tol: f64) -> f64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b > tol {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Plain Monte-Carlo estimate of the mean-tail probability: an unbiased hit
/// frequency with binomial standard error. Deterministic for a fixed seed;
/// replications are partitioned into fixed chunks with derived seeds, so the
/// result is identical for any worker count.
pub fn mc_mean_tail(
    dist: &ScalarDistribution,
    n: u64,
    gamma: &IntervalSet,
    params: &McParams,
) -> Result<McEstimate> {
    if params.replications == 0 {
        return Err(LdsError::Structural("replications must be >= 1".into()));
    }
    dist.validate()?;
    let sampler = dist.sampler()?;
    let (hits, _) = chunked_accumulate(params, "cramer/mc_mean_tail", |rng, count| {
        let mut h = 0.0;
        for _ in 0..count {
            let mut sum = 0.0;
            for _ in 0..n {
                sum += sampler.sample(rng);
            }
            if gamma.contains(sum / n as f64) {
                h += 1.0;
            }
        }
        (h, 0.0)
    });
    let r = params.replications as f64;
    let p = hits / r;
    Ok(McEstimate {
        estimate: p,
        std_error: (p * (1.0 - p) / r).sqrt(),
    })
}

/// Importance-sampled estimate: draws from the exponential tilt at the
/// minimizer of the rate function over the closure of `gamma`, reweighted by
/// the likelihood ratio `exp(n c(t) - t S_n)` so the estimate stays unbiased.
pub fn mc_mean_tail_tilted(
    dist: &ScalarDistribution,
    n: u64,
    gamma: &IntervalSet,
    params: &McParams,
) -> Result<McEstimate> {
    if params.replications == 0 {
        return Err(LdsError::Structural("replications must be >= 1".into()));
    }
    let profile = RateFunctionProfile::new(dist.clone())?;
    let (_, arg) = profile.inf_rate(&gamma.closure())?;
    let t = match arg {
        Some(a) if a != dist.mean() => {
            let (ess_min, ess_max) = dist.essential_range();
            if a > ess_min && a < ess_max {
                profile.solve_tilt(a)?
            } else {
                // Dominating point at the essential boundary: tilt towards it.
                profile.solve_tilt(0.5 * (a + dist.mean()))?
            }
        }
        _ => 0.0,
    };
    if t == 0.0 {
        return mc_mean_tail(dist, n, gamma, params);
    }
    let proposal = dist.tilted(t)?;
    let sampler = proposal.sampler()?;
    let log_norm = n as f64 * dist.cgf(t)?;
    let (sum, sum_sq) = chunked_accumulate(params, "cramer/mc_mean_tail_tilted", |rng, count| {
        let mut s = 0.0;
        let mut s2 = 0.0;
        for _ in 0..count {
            let mut total = 0.0;
            for _ in 0..n {
                total += sampler.sample(rng);
            }
            if gamma.contains(total / n as f64) {
                let w = (log_norm - t * total).exp();
                s += w;
                s2 += w * w;
            }
        }
        (s, s2)
    });
    let r = params.replications as f64;
    let mean = sum / r;
    let var = (sum_sq / r - mean * mean).max(0.0);
    Ok(McEstimate {
        estimate: mean,
        std_error: (var / r).sqrt(),
    })
}

/// Options for [`cramer_bound_check`].
#[derive(Debug, Clone)]
pub struct CramerCheckOptions {
    pub mc: McParams,
    /// Constant in the `C log(n)/n` slack allowed on the lower bound.
    pub slack_c: f64,
    /// Use exponential-tilt importance sampling for the Monte-Carlo column.
    pub importance: bool,
}

impl CramerCheckOptions {
    pub fn new(mc: McParams) -> Self {
        Self {
            mc,
            slack_c: 4.0,
            importance: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CramerPerN {
    pub n: u64,
    pub exact: Option<f64>,
    pub mc: Option<McEstimate>,
    /// `(1/n) log Q_n`, from the exact tail when available.
    pub log_rate: f64,
    pub upper_ok: bool,
    pub lower_ok: bool,
    pub bound_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CramerBoundReport {
    pub rate_inf_closure: f64,
    pub rate_inf_interior: f64,
    /// Whether the non-asymptotic Chernoff form of the upper bound applies
    /// (upper-tail half-line above the mean).
    pub chernoff: bool,
    pub slack_c: f64,
    pub per_n: Vec<CramerPerN>,
    pub all_ok: bool,
}

/// Check the large-deviation sandwich for the sample mean over each `n`.
///
/// The upper bound is asserted non-asymptotically (Chernoff) when `gamma` is
/// an upper-tail half-line strictly above the mean, and within the declared
/// slack otherwise; the lower bound is asserted within `C log(n)/n`.
/// Violations are reported, not raised.
pub fn cramer_bound_check(
    dist: &ScalarDistribution,
    gamma: &IntervalSet,
    n_list: &[u64],
    opts: &CramerCheckOptions,
) -> Result<CramerBoundReport> {
    let profile = RateFunctionProfile::new(dist.clone())?;
    let (inf_closure, _) = profile.inf_rate(&gamma.closure())?;
    let (inf_interior, _) = profile.inf_rate(&gamma.interior())?;
    // Upper-tail half-line above the mean; an interval reaching the
    // essential maximum is the same event as the half-line.
    let (_, ess_max) = dist.essential_range();
    let chernoff = gamma.intervals().len() == 1
        && gamma.intervals()[0].hi >= ess_max
        && gamma.intervals()[0].lo > dist.mean();

    let mut per_n = Vec::with_capacity(n_list.len());
    let mut all_ok = true;
    for &n in n_list {
        let exact = match exact_mean_tail(dist, n, gamma) {
            Ok(q) => Some(q),
            Err(LdsError::Capacity(_)) => None,
            Err(e) => return Err(e),
        };
        let mc_params = McParams {
            seed: crate::seeding::derive_seed_indexed(opts.mc.seed, "cramer/bound_check", n),
            ..opts.mc
        };
        let mc = if opts.importance {
            Some(mc_mean_tail_tilted(dist, n, gamma, &mc_params)?)
        } else {
            Some(mc_mean_tail(dist, n, gamma, &mc_params)?)
        };
        let q = exact.unwrap_or_else(|| mc.as_ref().map(|m| m.estimate).unwrap_or(0.0));
        let log_rate = if q > 0.0 {
            q.ln() / n as f64
        } else {
            f64::NEG_INFINITY
        };
        let slack = opts.slack_c * (n.max(2) as f64).ln() / n as f64;
        let upper_ok = if chernoff {
            log_rate <= -inf_closure + (1e-9f64).ln_1p() / n as f64
        } else {
            log_rate <= -inf_closure + slack
        };
        let lower_ok = if inf_interior.is_infinite() {
            true // vacuous: the interior is unreachable
        } else {
            log_rate >= -inf_interior - slack
        };
        all_ok &= upper_ok && lower_ok;
        per_n.push(CramerPerN {
            n,
            exact,
            mc,
            log_rate,
            upper_ok,
            lower_ok,
            bound_ok: upper_ok && lower_ok,
        });
    }
    Ok(CramerBoundReport {
        rate_inf_closure: inf_closure,
        rate_inf_interior: inf_interior,
        chernoff,
        slack_c: opts.slack_c,
        per_n,
        all_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed-form rate function of Bernoulli(p): the binary relative
    /// entropy of the target frequency against p.
    fn bernoulli_rate(a: f64, p: f64) -> f64 {
        if a < 0.0 || a > 1.0 {
            return f64::INFINITY;
        }
        let term = |x: f64, q: f64| if x == 0.0 { 0.0 } else { x * (x / q).ln() };
        term(a, p) + term(1.0 - a, 1.0 - p)
    }

    fn bern_half() -> ScalarDistribution {
        ScalarDistribution::bernoulli(0.5).unwrap()
    }

    #[test]
    fn cgf_zero_is_zero() {
        assert_eq!(bern_half().cgf(0.0).unwrap(), 0.0);
        assert_eq!(
            ScalarDistribution::gaussian(1.3, 0.7).unwrap().cgf(0.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn cgf_two_atom_value() {
        // log((1 + 3)/2) = log 2 at t = log 3
        let got = bern_half().cgf(3.0f64.ln()).unwrap();
        assert!((got - 2.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn cgf_degenerate_atom_is_linear() {
        let d = ScalarDistribution::atomic(vec![(5.0, 1.0)]).unwrap();
        for t in [-2.0, 0.0, 0.3, 7.0] {
            assert!((d.cgf(t).unwrap() - 5.0 * t).abs() < 1e-12);
        }
    }

    #[test]
    fn cgf_outside_mgf_validity_is_domain_error() {
        let d = ScalarDistribution::exponential(2.0).unwrap();
        assert!(matches!(d.cgf(2.0), Err(LdsError::Domain(_))));
        assert!(matches!(d.cgf(2.5), Err(LdsError::Domain(_))));
        assert!(d.cgf(1.9).is_ok());
    }

    #[test]
    fn rate_function_at_mean_is_zero() {
        let profile = RateFunctionProfile::new(bern_half()).unwrap();
        assert_eq!(profile.rate_function(0.5).unwrap(), 0.0);
    }

    #[test]
    fn rate_function_matches_binary_entropy_form() {
        let profile = RateFunctionProfile::new(bern_half()).unwrap();
        let got = profile.rate_function(0.7).unwrap();
        assert!((got - bernoulli_rate(0.7, 0.5)).abs() < 1e-12);
        assert!((got - 0.082_282_878_505_051_78).abs() < 1e-9);
    }

    #[test]
    fn rate_function_boundary_atom_and_outside() {
        let profile = RateFunctionProfile::new(bern_half()).unwrap();
        assert!((profile.rate_function(1.0).unwrap() - 2.0f64.ln()).abs() < 1e-14);
        assert!((profile.rate_function(0.0).unwrap() - 2.0f64.ln()).abs() < 1e-14);
        assert_eq!(profile.rate_function(1.5).unwrap(), f64::INFINITY);
        assert_eq!(profile.rate_function(-0.1).unwrap(), f64::INFINITY);
    }

    #[test]
    fn rate_function_gaussian_closed_form() {
        let profile =
            RateFunctionProfile::new(ScalarDistribution::gaussian(1.0, 2.0).unwrap()).unwrap();
        for a in [-3.0, 0.5, 1.0, 4.2] {
            let expect = (a - 1.0) * (a - 1.0) / (2.0 * 4.0);
            assert!((profile.rate_function(a).unwrap() - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn rate_function_exponential_closed_form() {
        let rate = 2.0;
        let profile =
            RateFunctionProfile::new(ScalarDistribution::exponential(rate).unwrap()).unwrap();
        for a in [0.1, 0.5, 1.7, 9.0] {
            let expect = rate * a - 1.0 - (rate * a).ln();
            assert!((profile.rate_function(a).unwrap() - expect).abs() < 1e-10);
        }
        assert_eq!(profile.rate_function(-0.5).unwrap(), f64::INFINITY);
        assert_eq!(profile.rate_function(0.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn cgf_is_convex_on_a_grid() {
        let d = ScalarDistribution::atomic(vec![(0.0, 0.2), (0.5, 0.5), (2.0, 0.3)]).unwrap();
        let h = 0.05;
        for i in -40..40 {
            let t = i as f64 * h;
            let second = d.cgf(t - h).unwrap() - 2.0 * d.cgf(t).unwrap() + d.cgf(t + h).unwrap();
            assert!(second >= -1e-10, "second difference {second} at t = {t}");
        }
    }

    #[test]
    fn rate_function_nonnegative_and_convex() {
        let profile = RateFunctionProfile::new(bern_half()).unwrap();
        let grid: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
        let vals: Vec<f64> = grid
            .iter()
            .map(|&a| profile.rate_function(a).unwrap())
            .collect();
        for &v in &vals {
            assert!(v >= 0.0);
        }
        for w in vals.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-9);
        }
    }

    #[test]
    fn exact_tail_binomial_example() {
        let gamma = IntervalSet::closed(0.7, 1.0);
        let q = exact_mean_tail(&bern_half(), 10, &gamma).unwrap();
        assert!((q - 176.0 / 1024.0).abs() < 1e-12);
    }

    #[test]
    fn exact_tail_whole_line_and_degenerate() {
        assert_eq!(
            exact_mean_tail(&bern_half(), 10, &IntervalSet::whole_line()).unwrap(),
            1.0
        );
        let d = ScalarDistribution::atomic(vec![(5.0, 1.0)]).unwrap();
        assert_eq!(
            exact_mean_tail(&d, 17, &IntervalSet::closed(4.0, 6.0)).unwrap(),
            1.0
        );
        assert_eq!(
            exact_mean_tail(&d, 17, &IntervalSet::closed(6.0, 7.0)).unwrap(),
            0.0
        );
    }

    #[test]
    fn exact_tail_matches_direct_binomial_sum_at_n_200() {
        // Independent oracle: binomial tail from a log-factorial table.
        let n = 200u64;
        let mut log_fact = vec![0.0f64; (n + 1) as usize];
        for i in 1..=n as usize {
            log_fact[i] = log_fact[i - 1] + (i as f64).ln();
        }
        let mut acc = LogSumExp::new();
        for k in 140..=200u64 {
            acc.add(
                log_fact[n as usize] - log_fact[k as usize] - log_fact[(n - k) as usize]
                    - n as f64 * 2.0f64.ln(),
            );
        }
        let oracle = acc.value().exp();
        let got = exact_mean_tail(&bern_half(), n, &IntervalSet::closed(0.7, 1.0)).unwrap();
        assert!((got - oracle).abs() < 1e-12 * oracle.max(1e-30));
    }

    #[test]
    fn exact_tail_respects_open_endpoints() {
        // (0.7, 1.0] excludes the 7/10 type class.
        let gamma = IntervalSet::interval(0.7, 1.0, false, true);
        let q = exact_mean_tail(&bern_half(), 10, &gamma).unwrap();
        assert!((q - 56.0 / 1024.0).abs() < 1e-12);
    }

    #[test]
    fn exact_tail_capacity_errors() {
        let d = ScalarDistribution::atomic(vec![
            (0.0, 0.5),
            (1.0, 0.25),
            (std::f64::consts::SQRT_2, 0.25),
        ])
        .unwrap();
        assert!(matches!(
            exact_mean_tail(&d, 10, &IntervalSet::half_line_geq(1.0)),
            Err(LdsError::Capacity(_))
        ));
        assert!(matches!(
            exact_mean_tail(&bern_half(), 6_000_000, &IntervalSet::half_line_geq(0.7)),
            Err(LdsError::Capacity(_))
        ));
    }

    #[test]
    fn mc_whole_line_and_determinism() {
        let gamma = IntervalSet::whole_line();
        let params = McParams::new(1000, 7);
        let est = mc_mean_tail(&bern_half(), 10, &gamma, &params).unwrap();
        assert_eq!(est.estimate, 1.0);
        assert_eq!(est.std_error, 0.0);

        let g = IntervalSet::closed(0.7, 1.0);
        let a = mc_mean_tail(&bern_half(), 10, &g, &params).unwrap();
        let b = mc_mean_tail(&bern_half(), 10, &g, &params).unwrap();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
    }

    #[test]
    fn mc_agrees_with_exact_within_standard_errors() {
        let gamma = IntervalSet::closed(0.7, 1.0);
        let exact = exact_mean_tail(&bern_half(), 10, &gamma).unwrap();
        let params = McParams::new(200_000, 11);
        let est = mc_mean_tail(&bern_half(), 10, &gamma, &params).unwrap();
        assert!(
            (est.estimate - exact).abs() <= 4.0 * est.std_error,
            "estimate {} exact {exact} se {}",
            est.estimate,
            est.std_error
        );
    }

    #[test]
    fn tilted_mc_is_unbiased_and_tighter_in_the_tail() {
        let gamma = IntervalSet::half_line_geq(0.8);
        let exact = exact_mean_tail(&bern_half(), 40, &gamma).unwrap();
        let params = McParams::new(200_000, 13);
        let tilted = mc_mean_tail_tilted(&bern_half(), 40, &gamma, &params).unwrap();
        assert!(
            (tilted.estimate - exact).abs() <= 4.0 * tilted.std_error,
            "tilted {} exact {exact} se {}",
            tilted.estimate,
            tilted.std_error
        );
        let plain = mc_mean_tail(&bern_half(), 40, &gamma, &params).unwrap();
        // Joint-interval agreement between the two estimators.
        let joint = 4.0 * (plain.std_error.powi(2) + tilted.std_error.powi(2)).sqrt() + 1e-12;
        assert!((plain.estimate - tilted.estimate).abs() <= joint);
        assert!(tilted.std_error < plain.std_error.max(1e-9));
    }

    #[test]
    fn chernoff_holds_for_every_upper_tail() {
        let profile = RateFunctionProfile::new(bern_half()).unwrap();
        for &n in &[5u64, 10, 25, 60] {
            for i in 1..10 {
                let a = 0.5 + 0.05 * i as f64;
                let q =
                    exact_mean_tail(&bern_half(), n, &IntervalSet::half_line_geq(a)).unwrap();
                let bound = (-(n as f64) * profile.rate_function(a).unwrap()).exp();
                assert!(
                    q <= bound * (1.0 + 1e-9),
                    "n = {n}, a = {a}: {q} > {bound}"
                );
            }
        }
    }

    #[test]
    fn bound_check_bernoulli_example() {
        let gamma = IntervalSet::closed(0.7, 1.0);
        let opts = CramerCheckOptions::new(McParams::new(20_000, 7));
        let report = cramer_bound_check(&bern_half(), &gamma, &[10, 50, 200], &opts).unwrap();
        assert!(report.chernoff);
        assert!((report.rate_inf_closure - 0.082_282_878_505).abs() < 1e-9);
        assert!(report.all_ok, "report: {report:?}");
        let n10 = &report.per_n[0];
        assert!((n10.exact.unwrap() - 0.171875).abs() < 1e-12);
        assert!((n10.log_rate - 0.171875f64.ln() / 10.0).abs() < 1e-12);
        assert!(n10.log_rate <= -report.rate_inf_closure);
    }

    #[test]
    fn bound_check_mean_in_interior() {
        let gamma = IntervalSet::closed(0.4, 0.6);
        let opts = CramerCheckOptions::new(McParams::new(5_000, 7));
        let report = cramer_bound_check(&bern_half(), &gamma, &[20, 80], &opts).unwrap();
        assert_eq!(report.rate_inf_closure, 0.0);
        assert_eq!(report.rate_inf_interior, 0.0);
        assert!(!report.chernoff);
        assert!(report.all_ok);
        // Q_n tends to one when the mean is interior.
        assert!(report.per_n[1].exact.unwrap() > 0.8);
    }

    #[test]
    fn interval_set_canonicalization_and_membership() {
        let set = IntervalSet::new(vec![
            Interval {
                lo: 0.0,
                hi: 1.0,
                lo_closed: true,
                hi_closed: true,
            },
            Interval {
                lo: 1.0,
                hi: 2.0,
                lo_closed: false,
                hi_closed: true,
            },
            Interval {
                lo: 5.0,
                hi: 4.0,
                lo_closed: true,
                hi_closed: true,
            },
        ]);
        assert_eq!(set.intervals().len(), 1);
        assert!(set.contains(1.0));
        assert!(set.contains(2.0));
        assert!(!set.contains(2.1));
        let interior = set.interior();
        assert!(!interior.contains(0.0));
        assert!(interior.contains(1.0));
        let gap = IntervalSet::new(vec![
            Interval {
                lo: 0.0,
                hi: 1.0,
                lo_closed: false,
                hi_closed: false,
            },
            Interval {
                lo: 1.0,
                hi: 2.0,
                lo_closed: false,
                hi_closed: false,
            },
        ]);
        assert_eq!(gap.intervals().len(), 2);
        assert!(!gap.contains(1.0));
    }

    #[test]
    fn interval_set_json_round_trip() {
        let set = IntervalSet::half_line_geq(0.7);
        let json = serde_json::to_string(&set).unwrap();
        let back: IntervalSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, set);
        let parsed: IntervalSet = serde_json::from_str(r#"[{"lo":0.7,"hi":1.0}]"#).unwrap();
        assert!(parsed.contains(0.7) && parsed.contains(1.0) && !parsed.contains(1.01));
    }
}
