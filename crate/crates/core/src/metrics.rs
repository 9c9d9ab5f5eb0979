//! Evaluation metrics over paired prediction/truth series: mean squared
//! error, tie-corrected Kendall rank correlation (tau-b), and the
//! coefficient of determination.

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("series have different lengths ({predictions} predictions, {truths} truths)")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

/// Equal-length, non-empty prediction/truth series.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries {
    predictions: Vec<f64>,
    truths: Vec<f64>,
}

impl PairedSeries {
    pub fn new(predictions: Vec<f64>, truths: Vec<f64>) -> Result<Self, MetricsError> {
        if predictions.len() != truths.len() {
            return Err(MetricsError::LengthMismatch {
                predictions: predictions.len(),
                truths: truths.len(),
            });
        }
        if predictions.is_empty() {
            return Err(MetricsError::EmptyInput);
        }
        Ok(Self { predictions, truths })
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }

    pub fn truths(&self) -> &[f64] {
        &self.truths
    }
}

/// Mean of squared element-wise differences.
pub fn mse(series: &PairedSeries) -> f64 {
    let n = series.len() as f64;
    series
        .predictions
        .iter()
        .zip(&series.truths)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n
}

/// Tie-corrected Kendall rank correlation:
/// `(concordant - discordant) / sqrt((n0 - t_pred) * (n0 - t_truth))` with
/// `n0 = n(n-1)/2` and `t` the tied-pair counts per series.
///
/// Computed by sorting on predictions and merge-counting discordant swaps
/// (Knight's algorithm); the test suite checks it against direct pair
/// enumeration.
pub fn kendall_tau(series: &PairedSeries) -> Result<f64, MetricsError> {
    let n = series.len();
    if n < 2 {
        return Err(MetricsError::DegenerateInput(
            "need at least two pairs to rank".into(),
        ));
    }

    let mut pairs: Vec<(f64, f64)> = series
        .predictions
        .iter()
        .copied()
        .zip(series.truths.iter().copied())
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let tied = |count: u64| count * (count - 1) / 2;

    // Tied pairs in predictions, and joint ties within those runs.
    let mut ties_pred = 0u64;
    let mut ties_joint = 0u64;
    let mut run = 1u64;
    let mut joint_run = 1u64;
    for i in 1..n {
        if pairs[i].0 == pairs[i - 1].0 {
            run += 1;
            if pairs[i].1 == pairs[i - 1].1 {
                joint_run += 1;
            } else {
                ties_joint += tied(joint_run);
                joint_run = 1;
            }
        } else {
            ties_pred += tied(run);
            run = 1;
            ties_joint += tied(joint_run);
            joint_run = 1;
        }
    }
    ties_pred += tied(run);
    ties_joint += tied(joint_run);

    // Discordant pairs = strict inversions of the truth sequence once
    // sorted by prediction (prediction ties broken by truth, so tied
    // blocks contribute no inversions).
    let mut truths: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buffer = vec![0.0; n];
    let discordant = merge_count_inversions(&mut truths, &mut buffer);

    // Tied pairs in truths.
    let mut sorted_truths = series.truths.clone();
    sorted_truths.sort_by(|a, b| a.total_cmp(b));
    let mut ties_truth = 0u64;
    run = 1;
    for i in 1..n {
        if sorted_truths[i] == sorted_truths[i - 1] {
            run += 1;
        } else {
            ties_truth += tied(run);
            run = 1;
        }
    }
    ties_truth += tied(run);

    let n0 = tied(n as u64);
    let denom = (n0 - ties_pred) as f64 * (n0 - ties_truth) as f64;
    if denom == 0.0 {
        return Err(MetricsError::DegenerateInput(
            "all values tied in one series".into(),
        ));
    }
    // C - D = n0 - t_pred - t_truth + t_joint - 2 * discordant.
    let numerator = (n0 - ties_pred - ties_truth + ties_joint) as f64 - 2.0 * discordant as f64;
    Ok((numerator / denom.sqrt()).clamp(-1.0, 1.0))
}

/// Counts strict inversions while merge-sorting `values`.
fn merge_count_inversions(values: &mut [f64], buffer: &mut [f64]) -> u64 {
    let n = values.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inversions = merge_count_inversions(&mut values[..mid], buffer)
        + merge_count_inversions(&mut values[mid..], buffer);
    {
        let (left, right) = values.split_at(mid);
        let mut i = 0;
        let mut j = 0;
        let mut k = 0;
        while i < left.len() && j < right.len() {
            if right[j] < left[i] {
                inversions += (left.len() - i) as u64;
                buffer[k] = right[j];
                j += 1;
            } else {
                buffer[k] = left[i];
                i += 1;
            }
            k += 1;
        }
        while i < left.len() {
            buffer[k] = left[i];
            i += 1;
            k += 1;
        }
        while j < right.len() {
            buffer[k] = right[j];
            j += 1;
            k += 1;
        }
    }
    values.copy_from_slice(&buffer[..n]);
    inversions
}

/// `1 - SS_res / SS_tot`; errors when the truths have zero variance.
pub fn r_squared(series: &PairedSeries) -> Result<f64, MetricsError> {
    let n = series.len() as f64;
    let mean = series.truths.iter().sum::<f64>() / n;
    let ss_tot: f64 = series.truths.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(MetricsError::DegenerateInput(
            "truths have zero variance".into(),
        ));
    }
    let ss_res: f64 = series
        .predictions
        .iter()
        .zip(&series.truths)
        .map(|(p, t)| (t - p) * (t - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    /// Brute-force tau-b by enumerating every pair.
    fn tau_by_enumeration(predictions: &[f64], truths: &[f64]) -> f64 {
        let n = predictions.len();
        let mut concordant = 0i64;
        let mut discordant = 0i64;
        let mut ties_pred = 0i64;
        let mut ties_truth = 0i64;
        for a in 0..n {
            for b in (a + 1)..n {
                let dp = predictions[a] - predictions[b];
                let dt = truths[a] - truths[b];
                if dp == 0.0 {
                    ties_pred += 1;
                }
                if dt == 0.0 {
                    ties_truth += 1;
                }
                if dp == 0.0 || dt == 0.0 {
                    continue;
                }
                if (dp > 0.0) == (dt > 0.0) {
                    concordant += 1;
                } else {
                    discordant += 1;
                }
            }
        }
        let n0 = (n * (n - 1) / 2) as i64;
        let denom = ((n0 - ties_pred) as f64 * (n0 - ties_truth) as f64).sqrt();
        (concordant - discordant) as f64 / denom
    }

    fn series(p: &[f64], t: &[f64]) -> PairedSeries {
        PairedSeries::new(p.to_vec(), t.to_vec()).unwrap()
    }

    #[test]
    fn mse_hand_cases() {
        assert_eq!(mse(&series(&[0.2, 0.4], &[0.2, 0.4])), 0.0);
        let m = mse(&series(&[0.5, 0.5], &[0.4, 0.6]));
        assert!((m - 0.01).abs() < 1e-15);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(
            PairedSeries::new(vec![1.0], vec![1.0, 2.0]),
            Err(MetricsError::LengthMismatch { predictions: 1, truths: 2 })
        );
        assert_eq!(PairedSeries::new(vec![], vec![]), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn tau_of_identical_orderings_is_one() {
        let s = series(&[0.1, 0.2, 0.3, 0.4], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(kendall_tau(&s).unwrap(), 1.0);
    }

    #[test]
    fn tau_of_reversed_orderings_is_minus_one() {
        let s = series(&[0.4, 0.3, 0.2, 0.1], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(kendall_tau(&s).unwrap(), -1.0);
    }

    #[test]
    fn tau_single_swap_hand_case() {
        // Pairs of [1,2,3,4] vs [1,3,2,4]: 5 concordant, 1 discordant.
        let s = series(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]);
        let tau = kendall_tau(&s).unwrap();
        assert!((tau - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn tau_all_tied_is_degenerate() {
        let s = series(&[0.5, 0.5, 0.5], &[1.0, 2.0, 3.0]);
        assert!(matches!(kendall_tau(&s), Err(MetricsError::DegenerateInput(_))));
    }

    #[test]
    fn tau_invariant_under_monotone_transform() {
        let mut rng = SplitMix64::new(8);
        let p: Vec<f64> = (0..40).map(|_| rng.next_f64()).collect();
        let t: Vec<f64> = (0..40).map(|_| rng.next_f64()).collect();
        let base = kendall_tau(&series(&p, &t)).unwrap();
        let p2: Vec<f64> = p.iter().map(|x| (3.0 * x + 1.0).exp()).collect();
        let t2: Vec<f64> = t.iter().map(|x| x.powi(3) + 2.0 * x).collect();
        let transformed = kendall_tau(&series(&p2, &t2)).unwrap();
        assert!((base - transformed).abs() < 1e-12);
    }

    #[test]
    fn tau_matches_enumeration_with_and_without_ties() {
        let mut rng = SplitMix64::new(123);
        for case in 0..100 {
            let n = 2 + rng.next_below(60) as usize;
            // Half the cases quantize values to force ties.
            let quantize = case % 2 == 0;
            let draw = |rng: &mut SplitMix64| {
                let v = rng.next_f64();
                if quantize { (v * 8.0).floor() / 8.0 } else { v }
            };
            let p: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
            let t: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
            let s = match PairedSeries::new(p.clone(), t.clone()) {
                Ok(s) => s,
                Err(_) => continue,
            };
            match kendall_tau(&s) {
                Ok(tau) => {
                    let want = tau_by_enumeration(&p, &t);
                    let rel = (tau - want).abs() / want.abs().max(1e-12);
                    assert!(rel < 1e-12, "case {case}: {tau} vs {want}");
                }
                Err(MetricsError::DegenerateInput(_)) => {
                    let all_p = p.windows(2).all(|w| w[0] == w[1]);
                    let all_t = t.windows(2).all(|w| w[0] == w[1]);
                    assert!(all_p || all_t, "case {case} flagged degenerate unexpectedly");
                }
                Err(e) => panic!("case {case}: {e}"),
            }
        }
    }

    #[test]
    fn r_squared_hand_cases() {
        let s = series(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]);
        assert_eq!(r_squared(&s).unwrap(), 1.0);
        // Predicting the mean gives exactly zero.
        let s = series(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]);
        assert_eq!(r_squared(&s).unwrap(), 0.0);
        let s = series(&[9.0, 9.0], &[4.0, 4.0]);
        assert!(matches!(r_squared(&s), Err(MetricsError::DegenerateInput(_))));
    }

    #[test]
    fn metrics_match_direct_sums_on_random_series() {
        let mut rng = SplitMix64::new(456);
        for _ in 0..100 {
            let n = 2 + rng.next_below(50) as usize;
            let p: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
            let t: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
            let s = series(&p, &t);

            let mut ss = 0.0;
            for i in 0..n {
                ss += (p[i] - t[i]) * (p[i] - t[i]);
            }
            let want_mse = ss / n as f64;
            assert!((mse(&s) - want_mse).abs() <= 1e-12 * want_mse.max(1e-300));

            let mean = t.iter().sum::<f64>() / n as f64;
            let mut ss_tot = 0.0;
            for &v in &t {
                ss_tot += (v - mean) * (v - mean);
            }
            let want_r2 = 1.0 - ss / ss_tot;
            let got = r_squared(&s).unwrap();
            assert!((got - want_r2).abs() <= 1e-12 * want_r2.abs().max(1.0));
        }
    }
}
