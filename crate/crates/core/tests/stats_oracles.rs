mod common;

use common::*;
use lsdqn_core::dqn::EvalRecord;
use lsdqn_core::stats::{
    compare_curves, relative_weight_distance, wilcoxon_exact_p, wilcoxon_signed_rank,
    LearningCurve, MIN_PAIRS,
};
use proptest::prelude::*;

#[test]
fn six_positive_differences() {
    let p = wilcoxon_exact_p(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    assert!((p - 0.03125).abs() < 1e-15);
}

proptest! {
    #[test]
    fn exact_p_matches_enumeration(diffs in prop::collection::vec(-4i32..=4, 1..13)) {
        let d: Vec<f64> = diffs.iter().map(|&v| v as f64 * 0.5).collect();
        if d.iter().filter(|&&v| v != 0.0).count() >= MIN_PAIRS {
            let p = wilcoxon_exact_p(&d).unwrap();
            prop_assert!((p - brute_force_wilcoxon_p(&d)).abs() < 1e-12);
        }
    }
}

#[test]
fn relative_distance_by_hand() {
    let d = relative_weight_distance(&[1.0, 2.0, 2.0], &[1.0, 0.0, 0.0]).unwrap();
    assert!((d - 8f64.sqrt()).abs() < 1e-15);
    assert!(relative_weight_distance(&[1.0], &[0.0]).is_err());
}

fn curve(label: &str, steps: &[u64], means: &[f64]) -> LearningCurve {
    let mut c = LearningCurve::new(label);
    for (i, (&s, &m)) in steps.iter().zip(means).enumerate() {
        c.push(EvalRecord::new(i + 1, s, vec![m])).unwrap();
    }
    c
}

#[test]
fn report_rows() {
    let base = curve(
        "a",
        &[10, 20, 30, 40, 50, 60, 70],
        &[0.0, 1.0, 2.0, 3.0, 2.0, 1.0, 0.5],
    );
    let better = curve(
        "b",
        &[10, 20, 30, 40, 50, 60, 70],
        &[0.5, 1.7, 2.1, 3.9, 2.2, 1.8, 1.0],
    );
    let rows = compare_curves(&[base.clone(), better.clone(), base.clone()]).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].wilcoxon.is_none());
    let w = rows[1].wilcoxon.as_ref().unwrap();
    let oracle = wilcoxon_signed_rank(&better.mean_returns(), &base.mean_returns()).unwrap();
    assert_eq!(w.p_value, oracle.p_value);
    assert!((w.p_value - 2.0 / 128.0).abs() < 1e-15);
    assert_eq!(rows[1].final_score, 1.0);
    // Identical curves leave no non-zero pair.
    assert!(rows[2].wilcoxon.is_none());

    let shifted = curve("c", &[15, 25, 35, 45, 55, 65, 75], &[0.0; 7]);
    assert!(compare_curves(&[base, shifted]).is_err());
}
