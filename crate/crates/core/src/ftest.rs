//! Bootstrap hypothesis test of equal FNMRs across G groups.
//!
//! The null hypothesis is that every group shares one FNMR; the alternative
//! is that at least one differs. The test statistic is an F-like ratio of
//! between-group to within-group variation, weighted by decision counts and
//! adjusted for intra-subject correlation. Its reference distribution is
//! built by resampling *subjects* (keeping each drawn subject's full
//! decision vector, which preserves the within-subject correlation) and
//! centering each group's bootstrap rate on the pooled estimate so the
//! resampled world obeys the null.
//!
//! One omnibus test replaces pairwise comparisons, which would otherwise
//! inflate the chance of finding some difference by accident.
//!
//! Replicates are independent and side-effect-free: replicate `r` of group
//! `g` draws from an RNG stream derived from `(seed, r, g)`, so the test is
//! a deterministic parallel map regardless of worker count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{GroupDataset, StudyDataset};
use crate::error::{AuditError, Result};
use crate::estimators::{
    estimate_group, estimates_from_drawn_counts, subject_counts, GroupEstimates,
};
use crate::rng::{stream_rng, StreamKind};
use crate::stats::KahanSum;
use crate::{DEFAULT_ALPHA, DEFAULT_REPLICATES};

/// Bootstrap settings shared by the F-test and the margin-of-error method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Number of bootstrap replicates, K.
    pub replicates: usize,
    /// Significance level in (0, 1).
    pub alpha: f64,
    /// Master seed; all replicate streams derive from it.
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: DEFAULT_REPLICATES,
            alpha: DEFAULT_ALPHA,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn new(replicates: usize, alpha: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            replicates,
            alpha,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(AuditError::InvalidConfig(
                "replicates must be at least 1".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(AuditError::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Subject indices drawn with replacement for one group's resample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResamplePlan {
    indices: Vec<u32>,
}

impl ResamplePlan {
    /// A plan from explicit indices; each must address a subject.
    pub fn new(indices: Vec<u32>, n_subjects: u64) -> Result<Self> {
        if indices.len() as u64 != n_subjects {
            return Err(AuditError::InvalidConfig(format!(
                "plan length {} does not match subject count {n_subjects}",
                indices.len()
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i as u64 >= n_subjects) {
            return Err(AuditError::InvalidConfig(format!(
                "plan index {bad} out of range for {n_subjects} subjects"
            )));
        }
        Ok(Self { indices })
    }

    /// The identity plan: subject slot i redraws subject i.
    pub fn identity(n_subjects: u64) -> Self {
        Self {
            indices: (0..n_subjects as u32).collect(),
        }
    }

    /// Draws n subjects with replacement.
    pub fn draw(n_subjects: u64, rng: &mut impl Rng) -> Self {
        let mut indices = Vec::with_capacity(n_subjects as usize);
        draw_plan_into(rng, n_subjects as usize, &mut indices);
        Self { indices }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }
}

/// The one place that defines how a resample is drawn. The F-test and the
/// margin-of-error method both call this with streams derived the same way,
/// so a shared seed gives them identical plans.
pub(crate) fn draw_plan_into(rng: &mut impl Rng, n_subjects: usize, out: &mut Vec<u32>) {
    out.clear();
    for _ in 0..n_subjects {
        out.push(rng.random_range(0..n_subjects as u32));
    }
}

/// Builds the resampled group: slot i holds a full copy of drawn subject
/// plan\[i\]'s decision vector.
pub fn resample_group(group: &GroupDataset, plan: &ResamplePlan) -> GroupDataset {
    let subjects = plan
        .indices()
        .iter()
        .map(|&i| group.subjects()[i as usize].clone())
        .collect();
    GroupDataset::new(group.group_id(), subjects).expect("resample of non-empty group")
}

/// Decision-count-weighted average of the group FNMRs; identical to total
/// errors over total decisions of the pooled data.
pub fn pooled_fnmr(groups: &[GroupEstimates]) -> Result<f64> {
    if groups.len() < 2 {
        return Err(AuditError::InvalidConfig(format!(
            "need at least 2 groups, got {}",
            groups.len()
        )));
    }
    let mut weighted = KahanSum::new();
    let mut total = 0u64;
    for g in groups {
        weighted.add(g.n_pi as f64 * g.pi_hat);
        total += g.n_pi;
    }
    Ok(weighted.value() / total as f64)
}

/// The observed F-like statistic: between-group variation over pooled
/// within-group variance, both weighted by decision counts.
///
/// A zero numerator (all group rates exactly equal) is zero evidence
/// against the null and returns F = 0 without consulting the denominator.
/// Otherwise a non-positive denominator (every group degenerate, or
/// negative correlation estimates overwhelming the sum) makes the statistic
/// undefined; the error carries each group's variance term for diagnosis.
pub fn f_statistic(groups: &[GroupEstimates], pooled: f64) -> Result<f64> {
    if groups.len() < 2 {
        return Err(AuditError::InvalidConfig(format!(
            "need at least 2 groups, got {}",
            groups.len()
        )));
    }
    let g_count = groups.len() as f64;
    let n_total: u64 = groups.iter().map(|g| g.n_pi).sum();
    if n_total as f64 <= g_count {
        return Err(AuditError::Invalid(format!(
            "total decisions {n_total} must exceed group count {}",
            groups.len()
        )));
    }

    let mut between = KahanSum::new();
    for g in groups {
        let dev = g.pi_hat - pooled;
        between.add(g.n_pi as f64 * dev * dev);
    }
    let numerator = between.value() / (g_count - 1.0);
    if numerator == 0.0 {
        return Ok(0.0);
    }

    let mut within = KahanSum::new();
    let mut terms = Vec::with_capacity(groups.len());
    for g in groups {
        let term = g.n_pi as f64 * g.pi_hat * (1.0 - g.pi_hat) * (1.0 + (g.m0 - 1.0) * g.rho_hat);
        terms.push((g.group_id.clone(), term));
        within.add(term);
    }
    let denominator = within.value() / (n_total as f64 - g_count);
    if denominator <= 0.0 {
        return Err(AuditError::UndefinedStatistic {
            denominator,
            group_terms: terms,
        });
    }
    Ok(numerator / denominator)
}

/// Centers a resampled group rate on the pooled FNMR:
/// `rate(resampled) - pi_hat_g + pooled`. The shift imposes the null of
/// equal group FNMRs on the reference distribution. The result can fall
/// outside [0, 1]; it is returned as-is.
pub fn centered_bootstrap_fnmr(resampled: &GroupDataset, pi_hat_g: f64, pooled: f64) -> f64 {
    let rate = resampled.error_count() as f64 / resampled.decision_count() as f64;
    rate - pi_hat_g + pooled
}

/// Result of the bootstrap F-test.
#[derive(Debug, Clone, PartialEq)]
pub struct FTestResult {
    pub f_observed: f64,
    /// The K bootstrap statistics in replicate order. Undefined replicates
    /// are stored as +inf so they compare as extreme.
    pub f_reference: Vec<f64>,
    /// `(1 + #{F_rep >= F_observed}) / (K + 1)`, exactly.
    pub p_value: f64,
    pub pooled_pi_hat: f64,
    pub groups: Vec<GroupEstimates>,
    pub reject_at_alpha: bool,
    pub alpha: f64,
    pub seed: u64,
    /// Replicates whose statistic was undefined (non-positive pooled
    /// variance after centering); each was counted as >= F_observed.
    pub degenerate_replicates: usize,
}

impl FTestResult {
    pub fn replicates(&self) -> usize {
        self.f_reference.len()
    }

    pub fn report(&self) -> FTestReport {
        FTestReport {
            f_observed: self.f_observed,
            p_value: self.p_value,
            alpha: self.alpha,
            k: self.replicates(),
            seed: self.seed,
            groups: self
                .groups
                .iter()
                .map(|g| FTestGroupReport {
                    group_id: g.group_id.clone(),
                    pi_hat: g.pi_hat,
                    rho_hat: g.rho_hat,
                    m0: g.m0,
                    n_pi: g.n_pi,
                })
                .collect(),
            degenerate_replicates: self.degenerate_replicates,
        }
    }
}

/// Wire form of the test result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FTestReport {
    pub f_observed: f64,
    pub p_value: f64,
    pub alpha: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub groups: Vec<FTestGroupReport>,
    pub degenerate_replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FTestGroupReport {
    pub group_id: String,
    pub pi_hat: f64,
    pub rho_hat: f64,
    pub m0: f64,
    pub n_pi: u64,
}

/// Per-group state carried into the replicate loop: the group label keys
/// the RNG stream, the per-subject counts are the sufficient statistics.
pub(crate) struct GroupBase {
    pub label: String,
    pub counts: Vec<(u32, u32)>,
    pub pi_hat: f64,
}

pub(crate) fn group_bases(study: &StudyDataset, estimates: &[GroupEstimates]) -> Vec<GroupBase> {
    study
        .groups()
        .iter()
        .zip(estimates)
        .map(|(g, est)| GroupBase {
            label: g.group_id().to_string(),
            counts: subject_counts(g),
            pi_hat: est.pi_hat,
        })
        .collect()
}

/// One bootstrap F statistic. Returns `(value, degenerate)`; degenerate
/// replicates report +inf.
fn replicate_f(bases: &[GroupBase], pooled: f64, seed: u64, replicate: u64) -> (f64, bool) {
    let g_count = bases.len() as f64;
    let mut drawn = Vec::new();
    // (n_pi_b, centered rate, variance term) per group.
    let mut per_group = Vec::with_capacity(bases.len());
    let mut n_total = 0u64;
    let mut weighted_rate = KahanSum::new();
    for base in bases {
        let mut rng = stream_rng(seed, StreamKind::Resample, replicate, &base.label);
        draw_plan_into(&mut rng, base.counts.len(), &mut drawn);
        let est = estimates_from_drawn_counts(&base.counts, &drawn);
        let centered = est.pi_hat - base.pi_hat + pooled;
        // Centering can push the rate outside [0,1]; its variance factor is
        // clamped at zero so the pooled denominator stays a variance.
        let var_factor = (centered * (1.0 - centered)).max(0.0);
        let term = est.n_pi as f64 * var_factor * (1.0 + (est.m0 - 1.0) * est.rho_hat);
        n_total += est.n_pi;
        weighted_rate.add(est.n_pi as f64 * centered);
        per_group.push((est.n_pi, centered, term));
    }
    let pooled_b = weighted_rate.value() / n_total as f64;

    let mut between = KahanSum::new();
    let mut within = KahanSum::new();
    for &(n_pi, centered, term) in &per_group {
        let dev = centered - pooled_b;
        between.add(n_pi as f64 * dev * dev);
        within.add(term);
    }
    let numerator = between.value() / (g_count - 1.0);
    if numerator == 0.0 {
        return (0.0, false);
    }
    if n_total as f64 <= g_count {
        return (f64::INFINITY, true);
    }
    let denominator = within.value() / (n_total as f64 - g_count);
    if denominator <= 0.0 {
        return (f64::INFINITY, true);
    }
    (numerator / denominator, false)
}

/// Runs the full test: observed statistic, K centered bootstrap replicates,
/// and the exact p-value `(1 + #{F_rep >= F}) / (K + 1)`.
///
/// Replicate weights use the *resampled* decision counts (which vary from
/// the observed ones when attempts per subject vary); the observed
/// statistic uses the observed counts. Undefined replicates count as
/// extreme, so degenerate resamples can never make rejection easier.
pub fn bootstrap_f_test(study: &StudyDataset, cfg: &BootstrapConfig) -> Result<FTestResult> {
    cfg.validate()?;
    if study.n_groups() < 2 {
        return Err(AuditError::InvalidConfig(format!(
            "need at least 2 groups, got {}",
            study.n_groups()
        )));
    }
    let estimates: Vec<GroupEstimates> = study
        .groups()
        .iter()
        .map(estimate_group)
        .collect::<Result<_>>()?;
    let pooled = pooled_fnmr(&estimates)?;
    let f_observed = f_statistic(&estimates, pooled)?;

    let bases = group_bases(study, &estimates);
    let replicates: Vec<(f64, bool)> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| replicate_f(&bases, pooled, cfg.seed, r))
        .collect();

    let degenerate_replicates = replicates.iter().filter(|&&(_, d)| d).count();
    let exceed = replicates.iter().filter(|&&(f, _)| f >= f_observed).count();
    let p_value = (1 + exceed) as f64 / (cfg.replicates + 1) as f64;

    Ok(FTestResult {
        f_observed,
        f_reference: replicates.into_iter().map(|(f, _)| f).collect(),
        p_value,
        pooled_pi_hat: pooled,
        groups: estimates,
        reject_at_alpha: p_value < cfg.alpha,
        alpha: cfg.alpha,
        seed: cfg.seed,
        degenerate_replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SubjectDecisions;

    fn group(id: &str, subjects: &[(&str, &[u8])]) -> GroupDataset {
        let subjects = subjects
            .iter()
            .map(|(sid, d)| SubjectDecisions::new(sid.to_string(), d.to_vec()).unwrap())
            .collect();
        GroupDataset::new(id, subjects).unwrap()
    }

    fn estimates(groups: &[(&str, u64, f64, f64, f64)]) -> Vec<GroupEstimates> {
        groups
            .iter()
            .map(|&(id, n_pi, pi, rho, m0)| GroupEstimates {
                group_id: id.to_string(),
                pi_hat: pi,
                rho_hat: rho,
                rho_degenerate: false,
                m0,
                n_pi,
                n_subjects: n_pi,
                var_pi_hat: 0.0,
            })
            .collect()
    }

    #[test]
    fn pooled_fnmr_is_count_weighted() {
        let e = estimates(&[("A", 100, 0.1, 0.0, 1.0), ("B", 100, 0.3, 0.0, 1.0)]);
        assert!((pooled_fnmr(&e).unwrap() - 0.2).abs() < 1e-15);
        let e = estimates(&[("A", 100, 0.1, 0.0, 1.0), ("B", 300, 0.3, 0.0, 1.0)]);
        assert!((pooled_fnmr(&e).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn pooled_fnmr_requires_two_groups() {
        let e = estimates(&[("A", 10, 0.5, 0.0, 1.0)]);
        assert!(pooled_fnmr(&e).is_err());
    }

    #[test]
    fn f_is_zero_for_equal_rates_even_with_correlation() {
        let g1 = group("A", &[("a1", &[1, 1]), ("a2", &[0, 0]), ("a3", &[1, 0])]);
        let g2 = group("B", &[("b1", &[1, 1]), ("b2", &[0, 0]), ("b3", &[1, 0])]);
        let e = vec![estimate_group(&g1).unwrap(), estimate_group(&g2).unwrap()];
        assert!(e[0].rho_hat != 0.0);
        let pooled = pooled_fnmr(&e).unwrap();
        assert_eq!(f_statistic(&e, pooled).unwrap(), 0.0);
    }

    #[test]
    fn undefined_denominator_is_an_error_with_diagnostics() {
        // Nonzero numerator, all-degenerate denominator.
        let e = estimates(&[("A", 10, 0.0, 0.0, 2.0), ("B", 10, 1.0, 0.0, 2.0)]);
        let err = f_statistic(&e, 0.5).unwrap_err();
        match err {
            AuditError::UndefinedStatistic { group_terms, .. } => {
                assert_eq!(group_terms.len(), 2);
            }
            other => panic!("expected undefined statistic, got {other}"),
        }
    }

    #[test]
    fn identity_plan_reproduces_group() {
        let g = group("A", &[("s1", &[1, 0]), ("s2", &[0, 0, 1])]);
        let out = resample_group(&g, &ResamplePlan::identity(2));
        assert_eq!(out, g);
    }

    #[test]
    fn all_ones_plan_copies_first_subject() {
        let g = group("A", &[("s1", &[1, 0]), ("s2", &[0, 0])]);
        let plan = ResamplePlan::new(vec![0, 0], 2).unwrap();
        let out = resample_group(&g, &plan);
        assert_eq!(out.n_subjects(), 2);
        assert_eq!(out.error_count(), 2);
        assert_eq!(out.decision_count(), 4);
        // The resampled rate equals subject 1's own error rate.
        assert_eq!(out.error_count() as f64 / out.decision_count() as f64, 0.5);
    }

    #[test]
    fn plan_validates_indices() {
        assert!(ResamplePlan::new(vec![0, 2], 2).is_err());
        assert!(ResamplePlan::new(vec![0], 2).is_err());
    }

    #[test]
    fn centering_identity() {
        let g = group("A", &[("s1", &[1, 0]), ("s2", &[0, 0])]);
        // Resample reproduces the group: centered value equals pooled.
        let rate = centered_bootstrap_fnmr(&g, 0.25, 0.1);
        assert!((rate - 0.1).abs() < 1e-15);
    }

    #[test]
    fn centered_rate_may_leave_unit_interval() {
        let g = group("A", &[("s1", &[0, 0]), ("s2", &[0, 0])]);
        let rate = centered_bootstrap_fnmr(&g, 0.2, 0.1);
        assert!((rate - (-0.1)).abs() < 1e-15);
    }

    #[test]
    fn identical_one_subject_groups_give_p_one() {
        let study = StudyDataset::new(
            vec![
                group("A", &[("a1", &[1, 0])]),
                group("B", &[("b1", &[1, 0])]),
            ],
            "test",
        )
        .unwrap();
        let cfg = BootstrapConfig::new(10, 0.05, 42).unwrap();
        let res = bootstrap_f_test(&study, &cfg).unwrap();
        assert_eq!(res.f_observed, 0.0);
        assert!(res.f_reference.iter().all(|&f| f >= 0.0));
        assert_eq!(res.p_value, 1.0);
        assert!(!res.reject_at_alpha);
    }

    #[test]
    fn p_value_reaches_its_lower_bound_for_separated_groups() {
        // Group rates so far apart that no centered resample reaches the
        // observed F: p bottoms out at 1/(K+1).
        let all = |d: u8| -> Vec<(String, Vec<u8>)> {
            (0..20).map(|i| (format!("s{i}"), vec![d; 2])).collect()
        };
        let to_group = |id: &str, rows: Vec<(String, Vec<u8>)>| {
            let subjects = rows
                .into_iter()
                .map(|(sid, d)| SubjectDecisions::new(format!("{id}-{sid}"), d).unwrap())
                .collect();
            GroupDataset::new(id, subjects).unwrap()
        };
        // Mostly-zero group A with a couple of errors; mostly-one group B.
        let mut a_rows = all(0);
        a_rows[0].1 = vec![1, 0];
        let mut b_rows = all(1);
        b_rows[0].1 = vec![0, 1];
        let study = StudyDataset::new(
            vec![to_group("A", a_rows), to_group("B", b_rows)],
            "separated",
        )
        .unwrap();
        let cfg = BootstrapConfig::new(99, 0.05, 13).unwrap();
        let res = bootstrap_f_test(&study, &cfg).unwrap();
        assert_eq!(res.p_value, 1.0 / 100.0);
        assert!(res.reject_at_alpha);
    }

    #[test]
    fn p_value_formula_recomputes_from_stored_reference() {
        let study = StudyDataset::new(
            vec![
                group(
                    "A",
                    &[("a1", &[1, 0, 0]), ("a2", &[0, 0, 0]), ("a3", &[1, 1, 0])],
                ),
                group(
                    "B",
                    &[("b1", &[0, 0, 0]), ("b2", &[0, 1, 0]), ("b3", &[0, 0, 0])],
                ),
                group(
                    "C",
                    &[("c1", &[1, 1, 0]), ("c2", &[0, 0, 1]), ("c3", &[1, 0, 0])],
                ),
            ],
            "test",
        )
        .unwrap();
        let cfg = BootstrapConfig::new(199, 0.05, 7).unwrap();
        let res = bootstrap_f_test(&study, &cfg).unwrap();
        let exceed = res
            .f_reference
            .iter()
            .filter(|&&f| f >= res.f_observed)
            .count();
        assert_eq!(res.p_value, (1 + exceed) as f64 / 200.0);
        assert!(res.p_value >= 1.0 / 200.0 && res.p_value <= 1.0);
    }

    #[test]
    fn same_seed_same_result() {
        let study = StudyDataset::new(
            vec![
                group("A", &[("a1", &[1, 0]), ("a2", &[0, 0])]),
                group("B", &[("b1", &[0, 1]), ("b2", &[1, 0])]),
            ],
            "test",
        )
        .unwrap();
        let cfg = BootstrapConfig::new(50, 0.05, 9).unwrap();
        let a = bootstrap_f_test(&study, &cfg).unwrap();
        let b = bootstrap_f_test(&study, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn report_serializes_spec_fields() {
        let study = StudyDataset::new(
            vec![
                group("A", &[("a1", &[1, 0]), ("a2", &[0, 0])]),
                group("B", &[("b1", &[0, 1]), ("b2", &[1, 0])]),
            ],
            "test",
        )
        .unwrap();
        let cfg = BootstrapConfig::new(10, 0.05, 1).unwrap();
        let res = bootstrap_f_test(&study, &cfg).unwrap();
        let json = serde_json::to_value(res.report()).unwrap();
        for key in [
            "f_observed",
            "p_value",
            "alpha",
            "K",
            "seed",
            "groups",
            "degenerate_replicates",
        ] {
            assert!(json.get(key).is_some(), "missing key {key}");
        }
        let g0 = &json["groups"][0];
        for key in ["group_id", "pi_hat", "rho_hat", "m0", "n_pi"] {
            assert!(g0.get(key).is_some(), "missing group key {key}");
        }
    }
}
