/// Area under the ROC curve via the rank-sum statistic; ties count half.
/// 0.5 when either class is empty.
pub fn auc(scores: &[f64], positive: &[bool]) -> f64 {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return 0.5;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks, 1-based
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&o| positive[o]).count() as f64 * mid;
        i = j + 1;
    }
    (rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64
}

/// `(TPR + TNR) / 2` for the rule "positive iff score >= threshold".
pub fn balanced_accuracy(scores: &[f64], positive: &[bool], threshold: f64) -> f64 {
    let (mut tp, mut tn, mut np, mut nn) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &p) in scores.iter().zip(positive) {
        if p {
            np += 1;
            tp += (s >= threshold) as usize;
        } else {
            nn += 1;
            tn += (s < threshold) as usize;
        }
    }
    let rate = |hit: usize, n: usize| if n == 0 { 0.5 } else { hit as f64 / n as f64 };
    (rate(tp, np) + rate(tn, nn)) / 2.0
}

/// Threshold maximizing balanced accuracy, searched over midpoints between
/// consecutive distinct scores; the smallest such threshold wins ties.
pub fn best_threshold(scores: &[f64], positive: &[bool]) -> f64 {
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut candidates = Vec::with_capacity(sorted.len() + 1);
    candidates.push(sorted.first().copied().unwrap_or(0.0));
    candidates.extend(sorted.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    candidates.push(
        sorted
            .last()
            .map_or(1.0, |v| if *v < f64::MAX { v + 1.0 } else { *v }),
    );
    let mut best = (f64::NEG_INFINITY, 0.0);
    for t in candidates {
        let a = balanced_accuracy(scores, positive, t);
        if a > best.0 {
            best = (a, t);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Pairwise definition, quadratic.
    fn auc_pairs(scores: &[f64], positive: &[bool]) -> f64 {
        let (mut s, mut n) = (0.0, 0.0);
        for (i, &a) in scores.iter().enumerate() {
            for (j, &b) in scores.iter().enumerate() {
                if positive[i] && !positive[j] {
                    n += 1.0;
                    s += if a > b {
                        1.0
                    } else if a == b {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        s / n
    }

    #[test]
    fn auc_matches_pairwise_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.random_range(2..60);
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.random_range(0..8) as f64) / 8.0)
                .collect();
            let mut pos: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            pos[0] = true;
            pos[1] = false;
            assert!((auc(&scores, &pos) - auc_pairs(&scores, &pos)).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_and_constant_scores() {
        let pos = [true, true, false, false];
        assert_eq!(auc(&[0.9, 0.8, 0.1, 0.2], &pos), 1.0);
        assert_eq!(auc(&[0.5; 4], &pos), 0.5);
        assert_eq!(balanced_accuracy(&[0.9, 0.8, 0.1, 0.2], &pos, 0.5), 1.0);
        assert_eq!(balanced_accuracy(&[0.5; 4], &pos, 0.5), 0.5);
        let t = best_threshold(&[0.9, 0.8, 0.1, 0.2], &pos);
        assert!(t > 0.2 && t <= 0.8);
    }

    #[test]
    fn random_scores_are_near_chance() {
        let mut aucs = Vec::new();
        for seed in 0..30 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scores: Vec<f64> = (0..2000).map(|_| rng.random()).collect();
            let pos: Vec<bool> = (0..2000).map(|i| i < 1000).collect();
            aucs.push(auc(&scores, &pos));
        }
        assert!(aucs.iter().all(|a| (a - 0.5).abs() < 0.03), "{aucs:?}");
    }
}
