use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information with arithmetic-mean normalization and
/// natural logs: `MI / ((H(truth) + H(pred)) / 2)`.
///
/// Two single-cluster partitions score 1; a single-cluster partition
/// against a non-trivial one scores 0.
pub fn nmi(truth: &[usize], pred: &[usize]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::RowMismatch {
            what: "truth",
            left: truth.len(),
            other: "pred",
            right: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("nmi input"));
    }
    let n = truth.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut a: BTreeMap<usize, usize> = BTreeMap::new();
    let mut b: BTreeMap<usize, usize> = BTreeMap::new();
    for (&t, &p) in truth.iter().zip(pred) {
        *joint.entry((t, p)).or_default() += 1;
        *a.entry(t).or_default() += 1;
        *b.entry(p).or_default() += 1;
    }
    let ha = entropy(a.values().copied(), n);
    let hb = entropy(b.values().copied(), n);
    match (a.len() == 1, b.len() == 1) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(t, p), &c)| {
            let c = c as f64;
            c / n * (n * c / (a[&t] as f64 * b[&p] as f64)).ln()
        })
        .sum();
    Ok((mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn relabeled_partition_is_one() {
        let t = [0, 0, 1, 1, 2, 2, 2];
        let p = [5, 5, 3, 3, 9, 9, 9];
        assert_abs_diff_eq!(nmi(&t, &p).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn independent_partitions_are_zero() {
        assert_abs_diff_eq!(
            nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn hand_computed_contingency() {
        // H(truth) = ln 3, H(pred) = -(1/3 ln 1/3 + 2/3 ln 2/3); pred is a
        // function of truth so MI = H(pred).
        let h_t = 3f64.ln();
        let h_p = -(1.0 / 3.0 * (1.0f64 / 3.0).ln() + 2.0 / 3.0 * (2.0f64 / 3.0).ln());
        let expected = h_p / ((h_t + h_p) / 2.0);
        let got = nmi(&[0, 0, 1, 1, 2, 2], &[0, 0, 1, 1, 1, 1]).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(got, 0.733_680, epsilon = 1e-6);
    }

    #[test]
    fn single_cluster_conventions() {
        assert_eq!(nmi(&[0, 0, 0], &[4, 4, 4]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 0, 0], &[0, 1, 1]).unwrap(), 0.0);
        assert_eq!(nmi(&[0, 1, 1], &[2, 2, 2]).unwrap(), 0.0);
        assert_eq!(nmi(&[7], &[3]).unwrap(), 1.0);
    }

    #[test]
    fn input_errors() {
        assert!(nmi(&[], &[]).is_err());
        assert!(nmi(&[0, 1], &[0]).is_err());
    }
}
