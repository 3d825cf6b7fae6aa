use alloc::vec::Vec;

use crate::{Error, Result};

fn check(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::shape("metric", "scores and labels differ in length"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("metric scores"));
    }
    Ok(())
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l != 0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Invalid("auroc needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks over tie groups
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] != 0 {
                rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Mean precision at the rank of each positive, scores descending. Equal
/// scores keep their input order.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &k) in order.iter().enumerate() {
        if labels[k] != 0 {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(Error::Invalid("average precision needs a positive".into()));
    }
    Ok(total / hits as f64)
}

/// Mean and sample standard deviation; the deviation is NaN for fewer than
/// two values.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        let s = [0.9, 0.8, 0.7, 0.1];
        let l = [1, 0, 1, 0];
        assert_eq!(auroc(&s, &l).unwrap(), 0.75);
        assert!((average_precision(&s, &l).unwrap() - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3; 5], &[0, 1, 0, 1, 1]).unwrap(), 0.5);
        assert_eq!(average_precision(&[0.9, 0.8, 0.1], &[1, 1, 0]).unwrap(), 1.0);
        assert_eq!(average_precision(&[0.9, 0.8, 0.7, 0.1], &[0, 0, 0, 1]).unwrap(), 0.25);
    }

    #[test]
    fn errors() {
        assert!(auroc(&[0.1, 0.2], &[1, 1]).is_err());
        assert!(average_precision(&[0.1, 0.2], &[0, 0]).is_err());
        assert!(auroc(&[0.1], &[1, 0]).is_err());
    }

    #[test]
    fn ties_use_input_order_for_ap() {
        assert_eq!(average_precision(&[0.5, 0.5], &[1, 0]).unwrap(), 1.0);
        assert_eq!(average_precision(&[0.5, 0.5], &[0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn summary_statistics() {
        assert!(mean_std(&[4.0]).1.is_nan());
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
    }
}
