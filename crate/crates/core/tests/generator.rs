//! Consistency between the synthetic decision generator and the
//! estimators: the generated data must carry the FNMR and intra-class
//! correlation it was asked for.

use fnmr_audit::estimators::{estimate_fnmr, estimate_rho};
use fnmr_audit::rng::{stream_rng, StreamKind};
use fnmr_audit::sim::generate_group;

#[test]
fn generator_matches_target_moments_at_scale() {
    // Large groups across many seeds: the mean estimated FNMR and the mean
    // estimated correlation must sit on the generator's targets.
    let (pi, rho) = (0.1, 0.15);
    let seeds = 50u64;
    let mut pi_sum = 0.0;
    let mut rho_sum = 0.0;
    for seed in 0..seeds {
        let mut rng = stream_rng(9000 + seed, StreamKind::Generate, 0, "moments");
        let group = generate_group("g", pi, rho, 5000, 3, &mut rng);
        pi_sum += estimate_fnmr(&group).unwrap();
        rho_sum += estimate_rho(&group).unwrap().value;
    }
    let pi_mean = pi_sum / seeds as f64;
    let rho_mean = rho_sum / seeds as f64;
    assert!(
        (pi_mean - pi).abs() < 0.01,
        "mean pi_hat {pi_mean} not within 0.01 of {pi}"
    );
    assert!(
        (rho_mean - rho).abs() < 0.03,
        "mean rho_hat {rho_mean} not within 0.03 of {rho}"
    );
}

#[test]
fn rho_estimator_recovers_generator_correlation_at_study_scale() {
    // Paper-scale groups (n=400, m=3): rho_hat averaged over replicates
    // lands within 0.1 of the target.
    let (pi, rho) = (0.1, 0.15);
    let replicates = 200u64;
    let mut rho_sum = 0.0;
    for r in 0..replicates {
        let mut rng = stream_rng(1234, StreamKind::Generate, r, "recovery");
        let group = generate_group("g", pi, rho, 400, 3, &mut rng);
        rho_sum += estimate_rho(&group).unwrap().value;
    }
    let rho_mean = rho_sum / replicates as f64;
    assert!(
        (rho_mean - rho).abs() < 0.1,
        "mean rho_hat {rho_mean} not within 0.1 of {rho}"
    );
}

#[test]
fn correlation_zero_and_positive_generators_differ_in_within_subject_agreement() {
    // With m=2, the within-subject agreement rate increases with rho.
    let agreement = |rho: f64, seed: u64| {
        let mut rng = stream_rng(seed, StreamKind::Generate, 0, "agreement");
        let group = generate_group("g", 0.3, rho, 4000, 2, &mut rng);
        let agree = group
            .subjects()
            .iter()
            .filter(|s| s.decisions()[0] == s.decisions()[1])
            .count();
        agree as f64 / group.n_subjects() as f64
    };
    let independent = agreement(0.0, 1);
    let correlated = agreement(0.45, 2);
    let nearly_degenerate = agreement(0.99, 3);
    assert!(independent < correlated);
    assert!(correlated < nearly_degenerate);
    assert!(nearly_degenerate > 0.95);
}
