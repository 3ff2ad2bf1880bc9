//! Prediction-quality metrics: NRMSE, confusion counts, precision-recall
//! curves and their area.

use serde::{Deserialize, Serialize};

use crate::linalg::population_std;
use crate::{Error, Result};

/// Counts at one `(q_e, q̂_e)` operating point. Positives use strict
/// inequalities: truth is `q > q_e`, prediction is `q̂ > q̂_e`; ties count as
/// non-events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: usize,
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }

    pub fn precision(&self) -> Option<f64> {
        let denom = self.true_pos + self.false_pos;
        (denom > 0).then(|| self.true_pos as f64 / denom as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let denom = self.true_pos + self.false_neg;
        (denom > 0).then(|| self.true_pos as f64 / denom as f64)
    }
}

/// Precision-recall curve over an ascending threshold grid, with its area.
///
/// Thresholds where no positive prediction exists (undefined precision) are
/// skipped, so the three arrays stay aligned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub thresholds: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub auc: f64,
}

/// Evaluation summary for one trained model on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub nrmse: f64,
    pub pr_curve: PrCurve,
    /// Population standard deviation of the true targets.
    pub sigma_q: f64,
    /// Prediction horizon in time units.
    pub tau: f64,
    pub noise_alpha_train: f64,
    pub noise_alpha_test: f64,
    pub seed: u64,
}

/// Root-mean-square error normalized by the population std of `q`.
pub fn nrmse(q: &[f64], q_hat: &[f64]) -> Result<f64> {
    if q.len() != q_hat.len() {
        return Err(Error::Shape(format!(
            "series lengths differ: {} vs {}",
            q.len(),
            q_hat.len()
        )));
    }
    if q.len() < 2 {
        return Err(Error::InsufficientData("nrmse needs at least 2 samples".into()));
    }
    let sigma = population_std(q);
    if sigma == 0.0 {
        return Err(Error::DegenerateTarget);
    }
    let mse = q
        .iter()
        .zip(q_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / q.len() as f64;
    Ok(mse.sqrt() / sigma)
}

/// Classify every sample at thresholds `(q_e, q̂_e)`.
pub fn classify(q: &[f64], q_hat: &[f64], q_e: f64, q_hat_e: f64) -> Result<ConfusionCounts> {
    if q.len() != q_hat.len() {
        return Err(Error::Shape(format!(
            "series lengths differ: {} vs {}",
            q.len(),
            q_hat.len()
        )));
    }
    let mut c = ConfusionCounts { true_pos: 0, true_neg: 0, false_pos: 0, false_neg: 0 };
    for (&truth, &pred) in q.iter().zip(q_hat) {
        match (truth > q_e, pred > q_hat_e) {
            (true, true) => c.true_pos += 1,
            (false, false) => c.true_neg += 1,
            (false, true) => c.false_pos += 1,
            (true, false) => c.false_neg += 1,
        }
    }
    Ok(c)
}

/// Default threshold-grid resolution.
pub const DEFAULT_PR_GRID: usize = 201;

/// Sweep the prediction threshold over an ascending grid of at most
/// `grid_size` values spanning `[min q_hat - eps, max q_hat + eps]`, collect
/// precision and recall, and integrate the area under the recall-sorted
/// curve.
///
/// Thresholds sit at midpoints between consecutive distinct prediction
/// values (rank-subsampled when there are more midpoints than grid slots),
/// plus one below and one above everything. Whenever the distinct values fit
/// in the grid, every achievable operating point is visited and the area
/// equals the exhaustive-threshold evaluation exactly; rank placement also
/// makes the result invariant under strictly increasing transformations of
/// the predictions.
pub fn pr_curve(q: &[f64], q_hat: &[f64], q_e: f64, grid_size: usize) -> Result<PrCurve> {
    if q.len() != q_hat.len() {
        return Err(Error::Shape(format!(
            "series lengths differ: {} vs {}",
            q.len(),
            q_hat.len()
        )));
    }
    if grid_size < 2 {
        return Err(Error::Config("threshold grid needs at least 2 points".into()));
    }
    let events = q.iter().filter(|&&v| v > q_e).count();
    if events == 0 {
        return Err(Error::Evaluation(
            "no true events in the evaluation window; series too short for PR analysis".into(),
        ));
    }
    if !q_hat.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("predictions".into()));
    }

    let mut distinct = q_hat.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite predictions"));
    distinct.dedup();
    let lo = distinct[0];
    let hi = *distinct.last().unwrap();
    let pad = 1e-12_f64
        .max(1e-9 * (hi - lo).abs())
        .max(1e-9 * hi.abs().max(lo.abs()));

    let midpoints: Vec<f64> = distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let mut thresholds = Vec::with_capacity(grid_size.min(midpoints.len() + 2));
    thresholds.push(lo - pad);
    let interior_slots = grid_size - 2;
    if midpoints.len() <= interior_slots {
        thresholds.extend_from_slice(&midpoints);
    } else {
        // evenly spaced ranks keep the selection monotone-transform stable
        for slot in 0..interior_slots {
            let idx = slot * (midpoints.len() - 1) / (interior_slots - 1).max(1);
            thresholds.push(midpoints[idx]);
        }
        thresholds.dedup();
    }
    thresholds.push(hi + pad);

    let mut kept_thresholds = Vec::with_capacity(thresholds.len());
    let mut precision = Vec::with_capacity(thresholds.len());
    let mut recall = Vec::with_capacity(thresholds.len());
    for &thr in &thresholds {
        let counts = classify(q, q_hat, q_e, thr)?;
        // extreme thresholds with no positive predictions carry no precision
        let (Some(p), Some(r)) = (counts.precision(), counts.recall()) else {
            continue;
        };
        kept_thresholds.push(thr);
        precision.push(p);
        recall.push(r);
    }

    let auc = auc_from_curve(&precision, &recall);
    Ok(PrCurve { thresholds: kept_thresholds, precision, recall, auc })
}

/// Trapezoidal area under points given in ascending-threshold order (recall
/// descending), extended constantly from the lowest-recall point down to
/// recall zero, clamped to the unit interval.
pub(crate) fn auc_from_curve(precision: &[f64], recall: &[f64]) -> f64 {
    if precision.is_empty() {
        return 0.0;
    }
    // walk in threshold-descending order: recall weakly ascends
    let mut area = 0.0;
    let mut prev_r = 0.0;
    let mut prev_p = *precision.last().unwrap();
    for (&p, &r) in precision.iter().zip(recall).rev() {
        area += (r - prev_r) * 0.5 * (p + prev_p);
        prev_r = r;
        prev_p = p;
    }
    area.clamp(0.0, 1.0)
}

/// Mean/min/max over repeated retrainings.
pub fn repetition_stats(values: &[f64]) -> Result<(f64, f64, f64)> {
    if values.is_empty() {
        return Err(Error::InsufficientData("no repetitions".into()));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((mean, min, max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn nrmse_hand_values() {
        let q = [0.0, 2.0];
        assert_abs_diff_eq!(nrmse(&q, &q).unwrap(), 0.0);
        // constant shift by sigma gives exactly 1
        let sigma = 1.0;
        let shifted = [0.0 + sigma, 2.0 + sigma];
        assert_abs_diff_eq!(nrmse(&q, &shifted).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(nrmse(&q, &[1.0, 1.0]).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn nrmse_rejects_degenerate_target() {
        assert!(matches!(
            nrmse(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::DegenerateTarget)
        ));
    }

    #[test]
    fn classify_enumerated_example() {
        let q = [1.0, 12.0, 3.0, 11.0, 2.0];
        let q_hat = [2.0, 13.0, 11.0, 3.0, 1.0];
        let c = classify(&q, &q_hat, 10.0, 10.0).unwrap();
        assert_eq!(
            c,
            ConfusionCounts { true_pos: 1, false_pos: 1, false_neg: 1, true_neg: 2 }
        );
        assert_eq!(c.total(), 5);
    }

    #[test]
    fn classify_diagonal_and_degenerate_cases() {
        let q = [1.0, 12.0, 3.0];
        let c = classify(&q, &q, 10.0, 10.0).unwrap();
        assert_eq!(c.false_pos, 0);
        assert_eq!(c.false_neg, 0);

        let low = [1.0, 2.0, 3.0];
        let high = [11.0, 12.0, 13.0];
        let c = classify(&low, &high, 10.0, 10.0).unwrap();
        assert_eq!(c.true_pos, 0);
        assert_eq!(c.false_pos, 3);
    }

    #[test]
    fn ties_at_threshold_are_non_events() {
        let c = classify(&[10.0], &[10.0], 10.0, 10.0).unwrap();
        assert_eq!(c.true_neg, 1);
    }

    #[test]
    fn perfect_separated_predictor_has_unit_auc() {
        let q: Vec<f64> = (0..200).map(|i| if i % 17 == 0 { 12.0 } else { 1.0 }).collect();
        let curve = pr_curve(&q, &q, 10.0, DEFAULT_PR_GRID).unwrap();
        assert!(curve.auc > 0.99);
    }

    #[test]
    fn random_predictor_auc_matches_event_fraction() {
        // for predictions independent of the truth, PR-AUC ~ event fraction
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(42);
        let n = 20_000;
        let q: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let q_hat: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let q_e = 0.9; // 10% events
        let phi = q.iter().filter(|&&v| v > q_e).count() as f64 / n as f64;
        let curve = pr_curve(&q, &q_hat, q_e, DEFAULT_PR_GRID).unwrap();
        assert!(
            (curve.auc - phi).abs() < 0.05,
            "auc {:.3} vs event fraction {:.3}",
            curve.auc,
            phi
        );
    }

    #[test]
    fn zero_events_is_an_error() {
        let q = vec![0.0; 50];
        let q_hat = vec![1.0; 50];
        assert!(pr_curve(&q, &q_hat, 10.0, 50).is_err());
    }

    #[test]
    fn recall_is_one_at_the_lowest_threshold() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        let q: Vec<f64> = (0..500).map(|_| rng.gen::<f64>()).collect();
        let q_hat: Vec<f64> = (0..500).map(|_| rng.gen::<f64>()).collect();
        let curve = pr_curve(&q, &q_hat, 0.95, 101).unwrap();
        // the padded minimum threshold classifies every sample as an event
        let idx = curve
            .thresholds
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_abs_diff_eq!(curve.recall[idx], 1.0);
    }

    #[test]
    fn repetition_stats_hand_values() {
        assert_eq!(repetition_stats(&[0.1]).unwrap(), (0.1, 0.1, 0.1));
        let (mean, min, max) = repetition_stats(&[0.1, 0.3]).unwrap();
        assert_abs_diff_eq!(mean, 0.2, epsilon = 1e-15);
        assert_eq!((min, max), (0.1, 0.3));
        assert!(repetition_stats(&[]).is_err());
    }

    /// Brute-force AUC using every distinct prediction value as a threshold:
    /// per-sample counting at each level, walked from the highest threshold
    /// down, with the constant extension to recall zero and trapezoids in
    /// between.
    fn exhaustive_auc(q: &[f64], q_hat: &[f64], q_e: f64) -> f64 {
        let mut thresholds: Vec<f64> = q_hat.to_vec();
        thresholds.push(q_hat.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0);
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap()); // descending
        let mut area = 0.0;
        let mut prev: Option<(f64, f64)> = None; // (recall, precision)
        for &thr in &thresholds {
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut fn_ = 0usize;
            for (&truth, &pred) in q.iter().zip(q_hat) {
                match (truth > q_e, pred > thr) {
                    (true, true) => tp += 1,
                    (true, false) => fn_ += 1,
                    (false, true) => fp += 1,
                    (false, false) => {}
                }
            }
            if tp + fp == 0 || tp + fn_ == 0 {
                continue;
            }
            let r = tp as f64 / (tp + fn_) as f64;
            let p = tp as f64 / (tp + fp) as f64;
            let (r0, p0) = prev.unwrap_or((0.0, p));
            area += (r - r0) * 0.5 * (p + p0);
            prev = Some((r, p));
        }
        area.clamp(0.0, 1.0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        /// classify is oracle-equivalent to per-sample enumeration.
        #[test]
        fn classify_matches_enumeration(
            data in proptest::collection::vec((-5.0f64..15.0, -5.0f64..15.0), 1..200),
            q_e in -2.0f64..12.0,
            q_hat_e in -2.0f64..12.0,
        ) {
            let q: Vec<f64> = data.iter().map(|d| d.0).collect();
            let q_hat: Vec<f64> = data.iter().map(|d| d.1).collect();
            let c = classify(&q, &q_hat, q_e, q_hat_e).unwrap();
            let mut expect = ConfusionCounts { true_pos: 0, true_neg: 0, false_pos: 0, false_neg: 0 };
            for i in 0..q.len() {
                let truth = q[i] > q_e;
                let pred = q_hat[i] > q_hat_e;
                if truth && pred { expect.true_pos += 1 }
                else if truth { expect.false_neg += 1 }
                else if pred { expect.false_pos += 1 }
                else { expect.true_neg += 1 }
            }
            prop_assert_eq!(c, expect);
        }

        /// Raising the prediction threshold never increases true positives
        /// and never decreases false negatives.
        #[test]
        fn threshold_response_is_monotone(
            data in proptest::collection::vec((-5.0f64..15.0, -5.0f64..15.0), 2..150),
            q_e in -2.0f64..12.0,
        ) {
            let q: Vec<f64> = data.iter().map(|d| d.0).collect();
            let q_hat: Vec<f64> = data.iter().map(|d| d.1).collect();
            let mut prev: Option<ConfusionCounts> = None;
            for i in 0..21 {
                let thr = -6.0 + i as f64;
                let c = classify(&q, &q_hat, q_e, thr).unwrap();
                if let Some(p) = prev {
                    prop_assert!(c.true_pos <= p.true_pos);
                    prop_assert!(c.false_neg >= p.false_neg);
                }
                prev = Some(c);
            }
        }

        /// Grid AUC matches the exhaustive-threshold oracle within the grid
        /// discretization.
        #[test]
        fn auc_matches_exhaustive_oracle(
            seed in 0u64..500,
            len in 20usize..200,
            frac in 0.05f64..0.5,
        ) {
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let q: Vec<f64> = (0..len).map(|_| rng.gen::<f64>()).collect();
            // correlate predictions with truth half the time for variety
            let q_hat: Vec<f64> = q
                .iter()
                .map(|&v| if seed % 2 == 0 { v + 0.3 * rng.gen::<f64>() } else { rng.gen::<f64>() })
                .collect();
            let q_e = 1.0 - frac;
            prop_assume!(q.iter().any(|&v| v > q_e));
            let curve = pr_curve(&q, &q_hat, q_e, DEFAULT_PR_GRID).unwrap();
            let oracle = exhaustive_auc(&q, &q_hat, q_e);
            prop_assert!(
                (curve.auc - oracle).abs() <= 0.01 + 1e-12,
                "grid {} vs oracle {}", curve.auc, oracle
            );
        }

        /// Precision and recall always land in the unit interval.
        #[test]
        fn precision_recall_bounded(
            data in proptest::collection::vec((-5.0f64..15.0, -5.0f64..15.0), 2..100),
        ) {
            let q: Vec<f64> = data.iter().map(|d| d.0).collect();
            let q_hat: Vec<f64> = data.iter().map(|d| d.1).collect();
            if let Ok(curve) = pr_curve(&q, &q_hat, 5.0, 101) {
                prop_assert!(curve.precision.iter().all(|&p| (0.0..=1.0).contains(&p)));
                prop_assert!(curve.recall.iter().all(|&r| (0.0..=1.0).contains(&r)));
                prop_assert!((0.0..=1.0).contains(&curve.auc));
            }
        }

        /// AUC is invariant (within discretization) under strictly increasing
        /// transformations of the predictions.
        #[test]
        fn auc_invariant_under_monotone_transform(
            seed in 0u64..200,
            len in 30usize..150,
        ) {
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let q: Vec<f64> = (0..len).map(|_| rng.gen::<f64>()).collect();
            let q_hat: Vec<f64> = q.iter().map(|&v| v + 0.5 * rng.gen::<f64>()).collect();
            let q_e = 0.8;
            prop_assume!(q.iter().any(|&v| v > q_e));
            // exhaustive thresholds transform exactly with the data
            let base = exhaustive_auc(&q, &q_hat, q_e);
            let squashed: Vec<f64> = q_hat.iter().map(|&v| (0.8 * v).tanh() * 3.0 + 1.0).collect();
            let transformed = exhaustive_auc(&q, &squashed, q_e);
            prop_assert!((base - transformed).abs() < 1e-9,
                "auc changed under monotone transform: {} vs {}", base, transformed);
        }
    }
}
