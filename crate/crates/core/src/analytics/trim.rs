use std::cmp::Ordering;

/// A duration with the submission time used to break ties when trimming.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timed {
    pub duration_ms: u64,
    pub submitted_at_ms: u64,
}

/// Number of values removed from a list of `n`: `floor(0.05 * n)`.
pub fn trim_count(n: usize) -> usize {
    n / 20
}

/// Drops the `trim_count(n)` largest durations. Among equal durations the
/// later submission goes first, then the later position. Survivors keep
/// their order.
pub fn trim_outliers(items: &[Timed]) -> Vec<Timed> {
    let k = trim_count(items.len());
    if k == 0 {
        return items.to_vec();
    }
    // Largest first under (duration, submitted_at, position).
    let rank = |&a: &usize, &b: &usize| -> Ordering {
        let (x, y) = (items[a], items[b]);
        y.duration_ms
            .cmp(&x.duration_ms)
            .then(y.submitted_at_ms.cmp(&x.submitted_at_ms))
            .then(b.cmp(&a))
    };
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.select_nth_unstable_by(k - 1, rank);
    let mut removed = vec![false; items.len()];
    for &i in &idx[..k] {
        removed[i] = true;
    }
    items.iter().zip(removed).filter(|(_, r)| !r).map(|(t, _)| *t).collect()
}

/// [`trim_outliers`] for bare values, ties removed from the back.
pub fn trim_values(values: &[u64]) -> Vec<u64> {
    let items: Vec<Timed> = values.iter().map(|&v| Timed { duration_ms: v, submitted_at_ms: 0 }).collect();
    trim_outliers(&items).into_iter().map(|t| t.duration_ms).collect()
}
