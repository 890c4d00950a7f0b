//! Ranking and classification metrics, and contextual user satisfaction.
//!
//! Label 1 is the positive class throughout. Callers that care about
//! detecting dissatisfaction pass `1 - score` and `1 - label`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PRECISION_FLOOR: f64 = 0.85;

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("NaN score".into()));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Domain("labels must be 0 or 1".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("both classes must be present".into()));
    }
    Ok((pos, neg))
}

/// Indices sorted by descending score.
fn order_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    idx
}

/// Area under the ROC curve as the Mann-Whitney statistic,
/// `P(s+ > s-) + P(s+ = s-) / 2`.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    // Walk ascending tie groups, counting negatives strictly below.
    let mut wins = 0.0;
    let mut neg_below = 0usize;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let (mut p_grp, mut n_grp) = (0usize, 0usize);
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] == 1 {
                p_grp += 1;
            } else {
                n_grp += 1;
            }
            j += 1;
        }
        wins += p_grp as f64 * (neg_below as f64 + 0.5 * n_grp as f64);
        neg_below += n_grp;
        i = j;
    }
    Ok(wins / (pos as f64 * neg as f64))
}

/// Maximum recall over thresholds whose precision is at least
/// `precision_floor`; 0 when no threshold qualifies. A sample is predicted
/// positive when its score is `>=` the threshold. Candidate thresholds are
/// the distinct scores plus the two infinities.
pub fn cla(scores: &[f64], labels: &[u8], precision_floor: f64) -> Result<f64> {
    let (pos, _) = check_inputs(scores, labels)?;
    let idx = order_desc(scores);
    let mut best = 0.0f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    // The +inf threshold predicts nothing: precision undefined, never qualifies.
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let precision = tp as f64 / (tp + fp) as f64;
        if precision >= precision_floor {
            best = best.max(tp as f64 / pos as f64);
        }
        i = j;
    }
    // The -inf threshold predicts everything, which is the last group above.
    Ok(best)
}

/// Best accuracy over thresholds 0.00, 0.01, ..., 1.00 (predict 1 when
/// `score >= t`), with the smallest threshold achieving it.
pub fn accuracy_with_tuned_threshold(scores: &[f64], labels: &[u8]) -> Result<(f64, f64)> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    // Sorted scores of each class; counts at a threshold by binary search.
    let mut pos: Vec<f64> = Vec::new();
    let mut neg: Vec<f64> = Vec::new();
    for (&s, &l) in scores.iter().zip(labels) {
        if l == 1 {
            pos.push(s)
        } else {
            neg.push(s)
        }
    }
    let cmp = |a: &f64, b: &f64| a.partial_cmp(b).unwrap_or(Ordering::Equal);
    pos.sort_by(cmp);
    neg.sort_by(cmp);
    let n = scores.len() as f64;
    let mut best = (-1.0, 0.0);
    for k in 0..=100 {
        let t = k as f64 / 100.0;
        let tp = pos.len() - pos.partition_point(|&s| s < t);
        let tn = neg.partition_point(|&s| s < t);
        let acc = (tp + tn) as f64 / n;
        if acc > best.0 {
            best = (acc, t);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision and recall at each threshold of the 0.01 grid. Precision is
/// reported as 1 when nothing is predicted positive.
pub fn precision_recall_table(scores: &[f64], labels: &[u8]) -> Result<Vec<PrPoint>> {
    let (pos, _) = check_inputs(scores, labels)?;
    Ok((0..=100)
        .map(|k| {
            let threshold = k as f64 / 100.0;
            let (mut tp, mut fp) = (0usize, 0usize);
            for (&s, &l) in scores.iter().zip(labels) {
                if s >= threshold {
                    if l == 1 {
                        tp += 1
                    } else {
                        fp += 1
                    }
                }
            }
            let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
            PrPoint {
                threshold,
                precision,
                recall: tp as f64 / pos as f64,
            }
        })
        .collect())
}

/// Experience of a clarification turn: the rating of the turn where the
/// question was asked times the rating of the turn after it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CusRating {
    pub turn_rating_n: f64,
    pub turn_rating_next: f64,
    pub contextual: f64,
}

pub fn cus(turn_rating_n: f64, turn_rating_next: f64) -> Result<CusRating> {
    for r in [turn_rating_n, turn_rating_next] {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Domain(format!("turn rating {r} outside [0,1]")));
        }
    }
    Ok(CusRating {
        turn_rating_n,
        turn_rating_next,
        contextual: turn_rating_n * turn_rating_next,
    })
}

/// Next-turn rating assumed when the last logged turn asked a question.
pub const ABSENT_NEXT_RATING: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionCus {
    pub mean: f64,
    /// Clarifications on the final turn that fell back to [`ABSENT_NEXT_RATING`].
    pub final_turn_clarifications: usize,
}

/// Mean per-turn experience of one session. Clarification turns contribute
/// `r_n * r_{n+1}`; all other turns contribute their own rating.
pub fn session_cus(ratings: &[f64], clarified: &[bool]) -> Result<SessionCus> {
    if ratings.is_empty() || ratings.len() != clarified.len() {
        return Err(Error::Shape(format!("{} ratings for {} clarification flags", ratings.len(), clarified.len())));
    }
    let mut total = 0.0;
    let mut fallback = 0;
    for (n, (&r, &c)) in ratings.iter().zip(clarified).enumerate() {
        total += if c {
            let next = match ratings.get(n + 1) {
                Some(&next) => next,
                None => {
                    fallback += 1;
                    log::warn!("clarification on final turn {n}; assuming next rating {ABSENT_NEXT_RATING}");
                    ABSENT_NEXT_RATING
                }
            };
            cus(r, next)?.contextual
        } else {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Domain(format!("turn rating {r} outside [0,1]")));
            }
            r
        };
    }
    Ok(SessionCus {
        mean: total / ratings.len() as f64,
        final_turn_clarifications: fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn auc_pairs(scores: &[f64], labels: &[u8]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] == 1 && labels[j] == 0 {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<u8>) {
        let n = rng.random_range(2..=200);
        // Coarse scores force ties.
        let levels = rng.random_range(2..30) as f64;
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores = labels
            .iter()
            .map(|&l| ((rng.random::<f64>() + 0.3 * l as f64) * levels).floor() / levels)
            .collect();
        (scores, labels)
    }

    #[test]
    fn auc_edge_cases() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.4; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn auc_matches_pairwise_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let (s, l) = random_instance(&mut rng);
            assert!((auc(&s, &l).unwrap() - auc_pairs(&s, &l)).abs() < 1e-9);
        }
    }

    #[test]
    fn auc_invariant_under_monotone_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let (s, l) = random_instance(&mut rng);
            let a = rng.random_range(0.1..5.0);
            let b = rng.random_range(-3.0..3.0);
            let mapped: Vec<f64> = s.iter().map(|x| (a * x + b).exp() + x.powi(3)).collect();
            assert!((auc(&s, &l).unwrap() - auc(&mapped, &l).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn cla_edge_cases() {
        assert_eq!(cla(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1], 0.85).unwrap(), 1.0);
        // All tied, positive rate 0.5: the only non-empty prediction has precision 0.5.
        assert_eq!(cla(&[0.3; 8], &[0, 1, 0, 1, 0, 1, 0, 1], 0.85).unwrap(), 0.0);
    }

    #[test]
    fn cla_is_non_increasing_in_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..30 {
            let (s, l) = random_instance(&mut rng);
            let mut prev = f64::INFINITY;
            for k in 0..=20 {
                let v = cla(&s, &l, k as f64 / 20.0).unwrap();
                assert!(v <= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn accuracy_edge_cases() {
        assert_eq!(accuracy_with_tuned_threshold(&[0.2, 0.9, 0.4], &[1, 1, 1]).unwrap(), (1.0, 0.0));
        let (acc, _) = accuracy_with_tuned_threshold(&[0.0, 1.0, 1.0, 0.0], &[0, 1, 1, 0]).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn cus_laws() {
        assert_eq!(cus(1.0, 1.0).unwrap().contextual, 1.0);
        assert_eq!(cus(0.0, 0.37).unwrap().contextual, 0.0);
        assert!((cus(0.87, 0.4).unwrap().contextual - 0.348).abs() < 1e-12);
        assert!(cus(1.1, 0.5).is_err());
        assert!(cus(0.5, -0.1).is_err());
    }

    #[test]
    fn session_cus_rules() {
        let plain = session_cus(&[0.9, 0.8, 0.5], &[false; 3]).unwrap();
        assert!((plain.mean - (0.9 + 0.8 + 0.5) / 3.0).abs() < 1e-12);
        assert_eq!(session_cus(&[1.0], &[true]).unwrap().mean, 1.0);
        let s = session_cus(&[0.9, 0.8, 0.5], &[false, true, false]).unwrap();
        assert!((s.mean - 0.6).abs() < 1e-12);
        let last = session_cus(&[0.4, 0.6], &[false, true]).unwrap();
        assert_eq!(last.final_turn_clarifications, 1);
        assert!((last.mean - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pr_table_is_consistent_with_cla() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (s, l) = random_instance(&mut rng);
        let table = precision_recall_table(&s, &l).unwrap();
        assert_eq!(table.len(), 101);
        assert_eq!(table[0].recall, 1.0);
        let best_grid = table.iter().filter(|p| p.precision >= 0.85).map(|p| p.recall).fold(0.0, f64::max);
        // Exact candidate set is a superset of grid points with non-empty predictions.
        assert!(cla(&s, &l, 0.85).unwrap() >= best_grid - 1e-12);
    }
}
