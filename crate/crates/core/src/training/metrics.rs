use crate::error::{Error, Result};
use crate::graph::NodeId;

/// Fraction of masked nodes whose logit sign matches the label; a logit of
/// zero (probability 0.5) predicts the positive class.
pub fn accuracy(logits: &[f64], labels: &[u8], mask: &[NodeId]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::Argument("evaluation mask is empty".into()));
    }
    let correct = mask
        .iter()
        .filter(|&&i| u8::from(logits[i] >= 0.0) == labels[i])
        .count();
    Ok(correct as f64 / mask.len() as f64)
}

/// Area under the ROC curve as the normalized Mann–Whitney statistic, with
/// tied scores sharing their mean rank.
pub fn auc(scores: &[f64], labels: &[u8], mask: &[NodeId]) -> Result<f64> {
    let mut items: Vec<(f64, u8)> = mask.iter().map(|&i| (scores[i], labels[i])).collect();
    let positives = items.iter().filter(|(_, y)| *y == 1).count();
    let negatives = items.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Degenerate(
            "AUC is undefined when the mask holds a single class".into(),
        ));
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut positive_rank_sum = 0.0;
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        while j < items.len() && items[j].0 == items[i].0 {
            j += 1;
        }
        // Ranks i+1..=j share their mean.
        let midrank = (i + 1 + j) as f64 / 2.0;
        let tied_positives = items[i..j].iter().filter(|(_, y)| *y == 1).count();
        positive_rank_sum += midrank * tied_positives as f64;
        i = j;
    }
    let p = positives as f64;
    Ok((positive_rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Pairwise definition: P(score_pos > score_neg) + ½ P(tie).
    fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1.0;
                    wins += if si > sj {
                        1.0
                    } else if si == sj {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn perfect_separation() {
        let scores = [-2.0, -1.0, 0.5, 3.0];
        let labels = [0, 0, 1, 1];
        let all: Vec<usize> = (0..4).collect();
        assert_eq!(auc(&scores, &labels, &all).unwrap(), 1.0);
        assert_eq!(accuracy(&scores, &labels, &all).unwrap(), 1.0);
        let flipped = [1, 1, 0, 0];
        assert_eq!(auc(&scores, &flipped, &all).unwrap(), 0.0);
    }

    #[test]
    fn ties_use_midranks() {
        let scores = [1.0, 1.0, 1.0, 0.0, 2.0];
        let labels = [1, 0, 1, 0, 1];
        let all: Vec<usize> = (0..5).collect();
        let a = auc(&scores, &labels, &all).unwrap();
        assert!((a - pairwise_auc(&scores, &labels)).abs() < 1e-15);
        assert_eq!(
            auc(&[0.3; 6], &[0, 1, 0, 1, 1, 0], &(0..6).collect::<Vec<_>>()).unwrap(),
            0.5
        );
    }

    #[test]
    fn matches_pairwise_definition_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(2..60);
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.random_range(0..10) as f64) / 3.0)
                .collect();
            let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
            labels[0] = 0;
            labels[1] = 1;
            let all: Vec<usize> = (0..n).collect();
            let a = auc(&scores, &labels, &all).unwrap();
            assert!((a - pairwise_auc(&scores, &labels)).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn independent_labels_give_half() {
        let n = 4000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let all: Vec<usize> = (0..n).collect();
        let a = auc(&scores, &labels, &all).unwrap();
        let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
        let neg = n as f64 - pos;
        // Null standard deviation of the Mann–Whitney AUC.
        let sd = ((pos + neg + 1.0) / (12.0 * pos * neg)).sqrt();
        assert!((a - 0.5).abs() < 3.0 * sd, "auc {a}, sd {sd}");
    }

    #[test]
    fn majority_prediction_scores_the_class_prior() {
        let labels = [1, 1, 1, 0, 1, 0, 1, 1];
        let all: Vec<usize> = (0..8).collect();
        assert_eq!(accuracy(&[5.0; 8], &labels, &all).unwrap(), 6.0 / 8.0);
        assert_eq!(accuracy(&[-5.0; 8], &labels, &all).unwrap(), 2.0 / 8.0);
    }

    #[test]
    fn degenerate_masks() {
        let labels = [1, 1, 0];
        assert!(matches!(
            auc(&[0.1, 0.2, 0.3], &labels, &[0, 1]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            accuracy(&[0.1, 0.2, 0.3], &labels, &[]),
            Err(Error::Argument(_))
        ));
    }
}
