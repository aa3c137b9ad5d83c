use crate::error::{invalid, Result};

/// Fraction of masked rows whose argmax (first on ties) equals the label.
pub fn evaluate_accuracy(logits: &[f64], num_classes: usize, labels: &[usize], mask: &[bool]) -> Result<f64> {
    if num_classes == 0 || logits.len() != labels.len() * num_classes || mask.len() != labels.len() {
        return Err(invalid(format!(
            "accuracy needs {} x {num_classes} logits and matching mask, got {} logits, {} mask entries",
            labels.len(),
            logits.len(),
            mask.len()
        )));
    }
    let (mut hits, mut total) = (0usize, 0usize);
    for (i, row) in logits.chunks(num_classes).enumerate() {
        if !mask[i] {
            continue;
        }
        total += 1;
        if argmax(row) == labels[i] {
            hits += 1;
        }
    }
    if total == 0 {
        return Err(invalid("accuracy mask selects no rows"));
    }
    Ok(hits as f64 / total as f64)
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Rank-based (Mann–Whitney) ROC AUC; tied scores count one half.
pub fn evaluate_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(invalid(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(invalid("AUC needs at least one positive and one negative"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // average 1-based ranks over tie groups
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| labels[k]).count() as f64 * avg;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
