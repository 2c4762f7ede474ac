//! Point estimators and variance formulas for a single group's FNMR under
//! the intra-individual correlation model.
//!
//! Decisions on the same subject share a common correlation `rho`; decisions
//! on different subjects are uncorrelated. Positive `rho` inflates the
//! variance of the estimated FNMR because repeated attempts by one subject
//! carry less information than attempts by fresh subjects. Negative
//! estimates are possible and are passed through untruncated: truncating at
//! zero would bias every downstream statistic that consumes the variance.
//!
//! All operations are pure functions of immutable inputs.

use serde::{Deserialize, Serialize};

use crate::data::GroupDataset;
use crate::error::{AuditError, Result};
use crate::stats::KahanSum;

/// Estimates for one group: FNMR, intra-class correlation, effective
/// attempts per subject, counts, and the variance of the FNMR estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEstimates {
    pub group_id: String,
    /// Estimated FNMR: errors / decisions.
    pub pi_hat: f64,
    /// Estimated intra-class correlation of decisions within a subject.
    pub rho_hat: f64,
    /// True when `rho_hat` was substituted with 0 because `pi_hat` is 0 or 1
    /// (its estimator is 0/0 there). The substitution is neutral: every
    /// downstream variance term carries a pi_hat*(1-pi_hat) factor.
    pub rho_degenerate: bool,
    /// Effective attempts per subject: sum(m_i^2) / sum(m_i). Equals m for a
    /// balanced design.
    pub m0: f64,
    /// Total decision count for the group.
    pub n_pi: u64,
    pub n_subjects: u64,
    /// Variance of `pi_hat` under the correlation model.
    pub var_pi_hat: f64,
}

/// Intra-class correlation estimate plus its degeneracy marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoEstimate {
    pub value: f64,
    /// See [`GroupEstimates::rho_degenerate`].
    pub degenerate: bool,
}

/// Per-subject sufficient statistics: (attempts, errors). Every estimator
/// in this module is a function of these counts alone, which is what makes
/// the bootstrap inner loop cheap.
pub fn subject_counts(group: &GroupDataset) -> Vec<(u32, u32)> {
    group
        .subjects()
        .iter()
        .map(|s| (s.attempts() as u32, s.errors() as u32))
        .collect()
}

/// Estimated FNMR: total errors divided by total decisions.
pub fn estimate_fnmr(group: &GroupDataset) -> Result<f64> {
    let n_pi = group.decision_count();
    if n_pi == 0 {
        return Err(AuditError::EmptyDataset(format!(
            "group {} has no decisions",
            group.group_id()
        )));
    }
    Ok(group.error_count() as f64 / n_pi as f64)
}

/// One subject's contribution to the correlation numerator: the sum over
/// ordered pairs j != j' of (D_j - pi)(D_j' - pi), reduced to counts via
/// sum_{j!=j'} x_j x_j' = (sum x)^2 - sum x^2 with x_j = D_j - pi.
fn rho_numerator_term(attempts: u32, errors: u32, pi: f64) -> f64 {
    let m = attempts as f64;
    let e = errors as f64;
    let centered_sum = e - m * pi;
    let centered_sq_sum = e * (1.0 - pi) * (1.0 - pi) + (m - e) * pi * pi;
    centered_sum * centered_sum - centered_sq_sum
}

fn rho_from_counts(counts: &[(u32, u32)]) -> Result<RhoEstimate> {
    let n_pi: u64 = counts.iter().map(|&(m, _)| m as u64).sum();
    let errors: u64 = counts.iter().map(|&(_, e)| e as u64).sum();
    let pairs: u64 = counts.iter().map(|&(m, _)| m as u64 * (m as u64 - 1)).sum();
    if pairs == 0 {
        return Err(AuditError::RhoInestimable {
            group_id: String::new(),
        });
    }
    let pi = errors as f64 / n_pi as f64;
    if errors == 0 || errors == n_pi {
        // pi_hat in {0,1}: the estimator is 0/0. Substitute 0 and flag;
        // every consumer multiplies by pi(1-pi) = 0, so nothing changes.
        return Ok(RhoEstimate {
            value: 0.0,
            degenerate: true,
        });
    }
    let mut numerator = KahanSum::new();
    for &(m, e) in counts {
        numerator.add(rho_numerator_term(m, e, pi));
    }
    let denominator = pi * (1.0 - pi) * pairs as f64;
    Ok(RhoEstimate {
        value: numerator.value() / denominator,
        degenerate: false,
    })
}

/// Estimated intra-class correlation of decisions within a subject.
///
/// When the group's FNMR is exactly 0 or 1 the estimator is undefined;
/// callers receive 0 with `degenerate` set. A group in which no subject has
/// two or more attempts carries no pair information at all and is an error.
pub fn estimate_rho(group: &GroupDataset) -> Result<RhoEstimate> {
    if group.decision_count() == 0 {
        return Err(AuditError::EmptyDataset(format!(
            "group {} has no decisions",
            group.group_id()
        )));
    }
    rho_from_counts(&subject_counts(group)).map_err(|e| match e {
        AuditError::RhoInestimable { .. } => AuditError::RhoInestimable {
            group_id: group.group_id().to_string(),
        },
        other => other,
    })
}

/// Effective attempts per subject: sum(m_i^2) / sum(m_i).
pub fn compute_m0(group: &GroupDataset) -> Result<f64> {
    let n_pi = group.decision_count();
    if n_pi == 0 {
        return Err(AuditError::EmptyDataset(format!(
            "group {} has no decisions",
            group.group_id()
        )));
    }
    let sum_sq: u64 = group
        .subjects()
        .iter()
        .map(|s| s.attempts() * s.attempts())
        .sum();
    Ok(sum_sq as f64 / n_pi as f64)
}

/// Variance of the estimated FNMR, effective-attempts form:
/// `pi(1-pi)(1 + (m0 - 1) rho) / N`.
pub fn variance_fnmr(pi: f64, rho: f64, group: &GroupDataset) -> f64 {
    let n_pi = group.decision_count() as f64;
    let sum_sq: u64 = group
        .subjects()
        .iter()
        .map(|s| s.attempts() * s.attempts())
        .sum();
    let m0 = sum_sq as f64 / n_pi;
    pi * (1.0 - pi) * (1.0 + (m0 - 1.0) * rho) / n_pi
}

/// Variance of the estimated FNMR, pair-count form:
/// `pi(1-pi) [N + rho sum_i m_i(m_i - 1)] / N^2`.
///
/// Algebraically identical to [`variance_fnmr`]; kept as a separate code
/// path so the identity can be checked rather than assumed.
pub fn variance_fnmr_expanded(pi: f64, rho: f64, group: &GroupDataset) -> f64 {
    let n_pi = group.decision_count() as f64;
    let pairs: u64 = group
        .subjects()
        .iter()
        .map(|s| s.attempts() * (s.attempts() - 1))
        .sum();
    pi * (1.0 - pi) * (n_pi + rho * pairs as f64) / (n_pi * n_pi)
}

/// Bundles all per-group estimates.
pub fn estimate_group(group: &GroupDataset) -> Result<GroupEstimates> {
    let pi_hat = estimate_fnmr(group)?;
    let rho = estimate_rho(group)?;
    let m0 = compute_m0(group)?;
    Ok(GroupEstimates {
        group_id: group.group_id().to_string(),
        pi_hat,
        rho_hat: rho.value,
        rho_degenerate: rho.degenerate,
        m0,
        n_pi: group.decision_count(),
        n_subjects: group.n_subjects(),
        var_pi_hat: variance_fnmr(pi_hat, rho.value, group),
    })
}

/// Summary estimates computed directly from per-subject counts selected by
/// a resample plan. Equivalent to materializing the resampled group and
/// running [`estimate_group`] on it (the F-test's unit tests pin the two
/// routes together), but allocation-free in the bootstrap inner loop.
///
/// A resample with no pair information (every drawn subject has one
/// attempt) gets rho = 0 flagged degenerate; `m0 = 1` there, so the
/// substituted value never reaches any statistic.
#[derive(Debug, Clone, Copy)]
pub struct CountEstimates {
    pub n_pi: u64,
    pub pi_hat: f64,
    pub rho_hat: f64,
    pub rho_degenerate: bool,
    pub m0: f64,
}

pub fn estimates_from_drawn_counts(base: &[(u32, u32)], drawn: &[u32]) -> CountEstimates {
    let mut n_pi = 0u64;
    let mut errors = 0u64;
    let mut sum_sq = 0u64;
    let mut pairs = 0u64;
    for &i in drawn {
        let (m, e) = base[i as usize];
        n_pi += m as u64;
        errors += e as u64;
        sum_sq += m as u64 * m as u64;
        pairs += m as u64 * (m as u64 - 1);
    }
    debug_assert!(n_pi > 0, "resampled group with no decisions");
    let pi_hat = errors as f64 / n_pi as f64;
    let m0 = sum_sq as f64 / n_pi as f64;
    if pairs == 0 || errors == 0 || errors == n_pi {
        return CountEstimates {
            n_pi,
            pi_hat,
            rho_hat: 0.0,
            rho_degenerate: true,
            m0,
        };
    }
    let mut numerator = KahanSum::new();
    for &i in drawn {
        let (m, e) = base[i as usize];
        numerator.add(rho_numerator_term(m, e, pi_hat));
    }
    let rho_hat = numerator.value() / (pi_hat * (1.0 - pi_hat) * pairs as f64);
    CountEstimates {
        n_pi,
        pi_hat,
        rho_hat,
        rho_degenerate: false,
        m0,
    }
}
