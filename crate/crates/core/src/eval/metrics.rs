//! Rank metrics over detector scores. The positive class is real speech.

use crate::error::{Error, Result};
use crate::manifest::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
}

impl ScoreSet {
    pub fn new(scores: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
        }
        if let Some(s) = scores.iter().find(|s| s.is_nan()) {
            return Err(Error::InvalidInput(format!("score {s} is not a number")));
        }
        Ok(ScoreSet { scores, labels })
    }

    /// `(positives, negatives)`.
    pub fn counts(&self) -> (usize, usize) {
        let p = self.labels.iter().filter(|l| l.is_real()).count();
        (p, self.labels.len() - p)
    }

    fn require_both(&self) -> Result<(usize, usize)> {
        let (p, n) = self.counts();
        if p == 0 || n == 0 {
            return Err(Error::SingleClass {
                positives: p,
                negatives: n,
            });
        }
        Ok((p, n))
    }

    /// Indices ordered by descending score.
    fn descending(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        idx
    }
}

/// Probability that a random positive outscores a random negative, ties counting one half.
pub fn compute_auc(set: &ScoreSet) -> Result<f64> {
    let (p, n) = set.require_both()?;
    let mut idx: Vec<usize> = (0..set.scores.len()).collect();
    idx.sort_by(|&a, &b| set.scores[a].total_cmp(&set.scores[b]));
    // Twice the rank sum of the positives, with tied runs sharing their mean rank.
    let mut twice_rank_sum = 0u128;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start;
        while end + 1 < idx.len() && set.scores[idx[end + 1]] == set.scores[idx[start]] {
            end += 1;
        }
        let twice_mean_rank = (start + 1 + end + 1) as u128;
        let positives = idx[start..=end].iter().filter(|&&i| set.labels[i].is_real()).count() as u128;
        twice_rank_sum += positives * twice_mean_rank;
        start = end + 1;
    }
    let (p, n) = (p as u128, n as u128);
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * n) as f64)
}

/// ROC vertices `(false-positive rate, true-positive rate)` from `(0, 0)` to `(1, 1)`,
/// one vertex per distinct threshold.
pub fn roc_curve(set: &ScoreSet) -> Result<Vec<(f64, f64)>> {
    let (p, n) = set.require_both()?;
    let idx = set.descending();
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < idx.len() {
        let s = set.scores[idx[k]];
        while k < idx.len() && set.scores[idx[k]] == s {
            if set.labels[idx[k]].is_real() {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((fp as f64 / n as f64, tp as f64 / p as f64));
    }
    Ok(points)
}

/// Rate at which false positives equal false negatives, interpolated linearly
/// along the ROC segment where the two cross.
pub fn compute_eer(set: &ScoreSet) -> Result<f64> {
    let roc = roc_curve(set)?;
    let gap = |(fpr, tpr): (f64, f64)| fpr - (1.0 - tpr);
    for w in roc.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (ga, gb) = (gap(a), gap(b));
        if ga == 0.0 {
            return Ok(a.0);
        }
        if ga < 0.0 && gb >= 0.0 {
            let t = -ga / (gb - ga);
            return Ok(a.0 + t * (b.0 - a.0));
        }
    }
    Ok(roc.last().map_or(0.5, |p| p.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Fake, Real};

    fn hand() -> ScoreSet {
        ScoreSet::new(vec![0.9, 0.8, 0.4, 0.6, 0.2, 0.1], vec![Real, Real, Real, Fake, Fake, Fake]).unwrap()
    }

    #[test]
    fn hand_case() {
        assert_eq!(compute_auc(&hand()).unwrap(), 8.0 / 9.0);
        assert_eq!(compute_eer(&hand()).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn degenerate_cases() {
        let perfect = ScoreSet::new(vec![0.9, 0.8, 0.1, 0.2], vec![Real, Real, Fake, Fake]).unwrap();
        assert_eq!(compute_auc(&perfect).unwrap(), 1.0);
        assert_eq!(compute_eer(&perfect).unwrap(), 0.0);
        let constant = ScoreSet::new(vec![0.5; 4], vec![Real, Fake, Real, Fake]).unwrap();
        assert_eq!(compute_auc(&constant).unwrap(), 0.5);
        assert_eq!(compute_eer(&constant).unwrap(), 0.5);
        let inverted = ScoreSet::new(vec![0.1, 0.2, 0.9, 0.8], vec![Real, Real, Fake, Fake]).unwrap();
        assert_eq!(compute_auc(&inverted).unwrap(), 0.0);
        assert_eq!(compute_eer(&inverted).unwrap(), 1.0);
    }

    #[test]
    fn single_class_is_an_error() {
        let s = ScoreSet::new(vec![0.1, 0.2], vec![Real, Real]).unwrap();
        assert!(matches!(compute_auc(&s), Err(Error::SingleClass { .. })));
        assert!(compute_eer(&s).is_err());
        assert!(ScoreSet::new(vec![0.1], vec![]).is_err());
    }

    #[test]
    fn roc_endpoints() {
        let roc = roc_curve(&hand()).unwrap();
        assert_eq!(roc.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.last(), Some(&(1.0, 1.0)));
    }
}
