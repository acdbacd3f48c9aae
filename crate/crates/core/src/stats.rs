//! Learning curves, the Wilcoxon signed-rank test and score summaries.

use statrs::function::erf::erfc;

use crate::dqn::EvalRecord;
use crate::error::{Error, Result};
use crate::linalg::{distance, norm};

/// Evaluation records of one run, in increasing step order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearningCurve {
    pub label: String,
    pub points: Vec<EvalRecord>,
}

impl LearningCurve {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            points: Vec::new(),
        }
    }

    pub fn push(&mut self, record: EvalRecord) -> Result<()> {
        if let Some(last) = self.points.last() {
            if record.step <= last.step {
                return Err(Error::InvalidInput(format!(
                    "curve steps must increase: {} after {}",
                    record.step, last.step
                )));
            }
        }
        self.points.push(record);
        Ok(())
    }

    pub fn steps(&self) -> Vec<u64> {
        self.points.iter().map(|p| p.step).collect()
    }

    pub fn mean_returns(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_return).collect()
    }

    pub fn final_mean_return(&self) -> Option<f64> {
        self.points.last().map(|p| p.mean_return)
    }
}

/// Maximum over epochs of the mean evaluation return.
pub fn max_average_score(curve: &LearningCurve) -> Result<f64> {
    curve
        .points
        .iter()
        .map(|p| p.mean_return)
        .reduce(f64::max)
        .ok_or(Error::Empty("max average score of an empty curve"))
}

fn check_aligned(curve: &LearningCurve, baseline: &LearningCurve) -> Result<()> {
    if curve.steps() != baseline.steps() {
        return Err(Error::MisalignedCurves(format!(
            "'{}' and '{}' were evaluated at different steps",
            curve.label, baseline.label
        )));
    }
    Ok(())
}

/// Per-epoch `curve - baseline` mean returns.
pub fn score_delta(curve: &LearningCurve, baseline: &LearningCurve) -> Result<Vec<f64>> {
    check_aligned(curve, baseline)?;
    Ok(curve
        .points
        .iter()
        .zip(&baseline.points)
        .map(|(a, b)| a.mean_return - b.mean_return)
        .collect())
}

/// `‖w - w_base‖ / ‖w_base‖`.
pub fn relative_weight_distance(w: &[f64], w_base: &[f64]) -> Result<f64> {
    if w.len() != w_base.len() {
        return Err(Error::dims(format!(
            "weight vectors of length {} and {}",
            w.len(),
            w_base.len()
        )));
    }
    let base = norm(w_base);
    if !(base > 0.0) {
        return Err(Error::InvalidInput(
            "reference weights have zero norm".into(),
        ));
    }
    Ok(distance(w, w_base) / base)
}

/// Largest effective sample size handled by exact enumeration.
pub const EXACT_MAX_N: usize = 25;
pub const MIN_PAIRS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct WilcoxonResult {
    /// `min(W⁺, W⁻)`.
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    pub n_effective: usize,
    /// Two-sided.
    pub p_value: f64,
    pub exact: bool,
}

/// Nonzero differences with their average ranks by absolute value.
struct SignedRanks {
    ranks: Vec<f64>,
    positive: Vec<bool>,
    tie_sizes: Vec<usize>,
}

fn signed_ranks(diffs: &[f64]) -> Result<SignedRanks> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidInput("differences must be finite".into()));
    }
    let mut nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    nz.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let n = nz.len();
    let mut ranks = vec![0.0; n];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && nz[j].abs() == nz[i].abs() {
            j += 1;
        }
        // Positions i..j share the average of ranks i+1..=j.
        let avg = (i + 1 + j) as f64 / 2.0;
        ranks[i..j].iter_mut().for_each(|r| *r = avg);
        tie_sizes.push(j - i);
        i = j;
    }
    Ok(SignedRanks {
        ranks,
        positive: nz.iter().map(|d| *d > 0.0).collect(),
        tie_sizes,
    })
}

impl SignedRanks {
    fn w_plus(&self) -> f64 {
        self.ranks
            .iter()
            .zip(&self.positive)
            .filter(|(_, p)| **p)
            .map(|(r, _)| r)
            .sum()
    }

    fn n(&self) -> usize {
        self.ranks.len()
    }

    /// Two-sided p from the exact null distribution of `W⁺`, counted over all
    /// `2^n` sign assignments by dynamic programming on doubled ranks.
    fn exact_p(&self) -> f64 {
        let doubled: Vec<usize> = self
            .ranks
            .iter()
            .map(|r| (2.0 * r).round() as usize)
            .collect();
        let total: usize = doubled.iter().sum();
        let mut counts = vec![0.0f64; total + 1];
        counts[0] = 1.0;
        let mut reach = 0;
        for &r in &doubled {
            for w in (0..=reach).rev() {
                let c = counts[w];
                if c != 0.0 {
                    counts[w + r] += c;
                }
            }
            reach += r;
        }
        let observed = (2.0 * self.w_plus()).round() as usize;
        let all = 2f64.powi(self.n() as i32);
        let lower: f64 = counts[..=observed].iter().sum::<f64>() / all;
        let upper: f64 = counts[observed..].iter().sum::<f64>() / all;
        (2.0 * lower.min(upper)).min(1.0)
    }

    /// Two-sided p from the normal approximation with tie-corrected variance
    /// and continuity correction.
    fn normal_p(&self) -> f64 {
        let n = self.n() as f64;
        let mean = n * (n + 1.0) / 4.0;
        let tie_term: f64 = self
            .tie_sizes
            .iter()
            .map(|&t| {
                let t = t as f64;
                t * t * t - t
            })
            .sum();
        let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
        if !(var > 0.0) {
            return 1.0;
        }
        let z = ((self.w_plus() - mean).abs() - 0.5).max(0.0) / var.sqrt();
        erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
    }
}

fn paired_diffs(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::dims(format!(
            "paired samples of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(x.iter().zip(y).map(|(a, b)| a - b).collect())
}

fn ranked_checked(diffs: &[f64]) -> Result<SignedRanks> {
    let sr = signed_ranks(diffs)?;
    if sr.n() < MIN_PAIRS {
        return Err(Error::TooFewPairs(sr.n()));
    }
    Ok(sr)
}

/// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences
/// are dropped; exact for up to [`EXACT_MAX_N`] nonzero pairs, normal
/// approximation beyond.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    let sr = ranked_checked(&paired_diffs(x, y)?)?;
    let n = sr.n();
    let w_plus = sr.w_plus();
    let w_minus = (n * (n + 1)) as f64 / 2.0 - w_plus;
    let exact = n <= EXACT_MAX_N;
    let p_value = if exact { sr.exact_p() } else { sr.normal_p() };
    Ok(WilcoxonResult {
        statistic: w_plus.min(w_minus),
        w_plus,
        w_minus,
        n_effective: n,
        p_value,
        exact,
    })
}

/// Exact two-sided p for a vector of paired differences, regardless of size.
pub fn wilcoxon_exact_p(diffs: &[f64]) -> Result<f64> {
    let sr = ranked_checked(diffs)?;
    if sr.n() > 60 {
        return Err(Error::InvalidInput(
            "exact enumeration limited to 60 pairs".into(),
        ));
    }
    Ok(sr.exact_p())
}

/// Normal-approximation two-sided p for a vector of paired differences.
pub fn wilcoxon_normal_p(diffs: &[f64]) -> Result<f64> {
    Ok(ranked_checked(diffs)?.normal_p())
}

/// One line of a run comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub max_score: f64,
    pub final_score: f64,
    /// Signed-rank test against the baseline; `None` for the baseline itself
    /// and when there are too few non-zero pairs.
    pub wilcoxon: Option<WilcoxonResult>,
}

/// Compares every curve against the first one, pairing per-epoch mean
/// returns.
pub fn compare_curves(curves: &[LearningCurve]) -> Result<Vec<ReportRow>> {
    let baseline = curves
        .first()
        .ok_or(Error::Empty("report needs at least one curve"))?;
    curves
        .iter()
        .enumerate()
        .map(|(i, c)| {
            check_aligned(c, baseline)?;
            let wilcoxon = if i == 0 {
                None
            } else {
                match wilcoxon_signed_rank(&c.mean_returns(), &baseline.mean_returns()) {
                    Ok(w) => Some(w),
                    Err(Error::TooFewPairs(_)) => None,
                    Err(e) => return Err(e),
                }
            };
            Ok(ReportRow {
                label: c.label.clone(),
                max_score: max_average_score(c)?,
                final_score: c.final_mean_return().unwrap_or(f64::NAN),
                wilcoxon,
            })
        })
        .collect()
}
