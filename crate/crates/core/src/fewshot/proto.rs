//! Prototypes, softmax over negative squared distances, and the episode loss
//! with its gradient with respect to every embedding.

use super::tensor::Real;
use super::FewShotError;

/// Class means of `embeddings` (`n × dim`, row-major), returned `n_way × dim`.
pub fn compute_prototypes<T: Real>(
    embeddings: &[T],
    dim: usize,
    labels: &[usize],
    n_way: usize,
) -> Result<Vec<T>, FewShotError> {
    if embeddings.len() != labels.len() * dim {
        return Err(FewShotError::ShapeMismatch {
            expected: labels.len() * dim,
            actual: embeddings.len(),
        });
    }
    let mut protos = vec![T::zero(); n_way * dim];
    let mut counts = vec![0usize; n_way];
    for (row, &c) in embeddings.chunks_exact(dim).zip(labels) {
        if c >= n_way {
            return Err(FewShotError::InvalidSpec(format!(
                "class index {c} >= n_way {n_way}"
            )));
        }
        counts[c] += 1;
        for (p, &v) in protos[c * dim..(c + 1) * dim].iter_mut().zip(row) {
            *p = *p + v;
        }
    }
    for (c, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(FewShotError::EmptyClass { class: c });
        }
        let inv = T::from_f64(1.0 / n as f64);
        for p in &mut protos[c * dim..(c + 1) * dim] {
            *p = *p * inv;
        }
    }
    Ok(protos)
}

pub fn squared_distances<T: Real>(query: &[T], prototypes: &[T]) -> Vec<T> {
    let dim = query.len();
    prototypes
        .chunks_exact(dim)
        .map(|p| {
            query.iter().zip(p).fold(T::zero(), |acc, (&q, &c)| {
                let d = q - c;
                acc + d * d
            })
        })
        .collect()
}

/// Log-softmax of negative squared distances.
fn log_probs<T: Real>(query: &[T], prototypes: &[T]) -> Vec<T> {
    let logits: Vec<T> = squared_distances(query, prototypes)
        .into_iter()
        .map(|d| -d)
        .collect();
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits
        .iter()
        .fold(T::zero(), |acc, &l| acc + (l - max).exp())
        .ln()
        + max;
    logits.into_iter().map(|l| l - lse).collect()
}

/// Class probabilities for one query embedding.
pub fn classify_query<T: Real>(query: &[T], prototypes: &[T]) -> Result<Vec<T>, FewShotError> {
    if query.is_empty() || prototypes.len() % query.len() != 0 || prototypes.len() / query.len() < 2
    {
        return Err(FewShotError::ShapeMismatch {
            expected: 2 * query.len(),
            actual: prototypes.len(),
        });
    }
    Ok(log_probs(query, prototypes)
        .into_iter()
        .map(|l| l.exp())
        .collect())
}

/// Argmax with ties resolved toward the lower class index.
pub fn predict<T: Real>(probs: &[T]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct LossOutput<T> {
    /// Mean negative log-probability of the true class over queries.
    pub loss: T,
    /// Predicted class per query.
    pub predictions: Vec<usize>,
    /// Gradient with respect to support embeddings (`n_support × dim`).
    pub d_support: Vec<T>,
    /// Gradient with respect to query embeddings (`n_query × dim`).
    pub d_query: Vec<T>,
}

/// Prototypical episode loss and its gradient.
pub fn prototypical_loss<T: Real>(
    support: &[T],
    support_labels: &[usize],
    query: &[T],
    query_labels: &[usize],
    n_way: usize,
    dim: usize,
) -> Result<LossOutput<T>, FewShotError> {
    if query.len() != query_labels.len() * dim {
        return Err(FewShotError::ShapeMismatch {
            expected: query_labels.len() * dim,
            actual: query.len(),
        });
    }
    if query_labels.is_empty() {
        return Err(FewShotError::InvalidSpec("episode has no queries".into()));
    }
    let protos = compute_prototypes(support, dim, support_labels, n_way)?;
    let mut class_sizes = vec![0usize; n_way];
    for &c in support_labels {
        class_sizes[c] += 1;
    }
    let scale = T::from_f64(1.0 / query_labels.len() as f64);
    let two = T::from_f64(2.0);
    let mut loss = T::zero();
    let mut predictions = Vec::with_capacity(query_labels.len());
    let mut d_query = vec![T::zero(); query.len()];
    let mut d_protos = vec![T::zero(); protos.len()];
    for (qi, (q, &y)) in query.chunks_exact(dim).zip(query_labels).enumerate() {
        if y >= n_way {
            return Err(FewShotError::InvalidSpec(format!(
                "class index {y} >= n_way {n_way}"
            )));
        }
        let lp = log_probs(q, &protos);
        if lp.iter().any(|v| !v.is_finite()) {
            return Err(FewShotError::NumericalOverflow);
        }
        loss = loss - lp[y] * scale;
        predictions.push(predict(&lp));
        let dq = &mut d_query[qi * dim..(qi + 1) * dim];
        for (k, &l) in lp.iter().enumerate() {
            // d loss / d logit_k, with logit_k = -|q - c_k|^2
            let g = (l.exp() - if k == y { T::one() } else { T::zero() }) * scale;
            let c = &protos[k * dim..(k + 1) * dim];
            let dc = &mut d_protos[k * dim..(k + 1) * dim];
            for j in 0..dim {
                let diff = two * (q[j] - c[j]) * g;
                dq[j] = dq[j] - diff;
                dc[j] = dc[j] + diff;
            }
        }
    }
    if !loss.is_finite() {
        return Err(FewShotError::NumericalOverflow);
    }
    let mut d_support = vec![T::zero(); support.len()];
    for (row, &c) in d_support.chunks_exact_mut(dim).zip(support_labels) {
        let inv = T::from_f64(1.0 / class_sizes[c] as f64);
        for (d, &g) in row.iter_mut().zip(&d_protos[c * dim..(c + 1) * dim]) {
            *d = g * inv;
        }
    }
    Ok(LossOutput {
        loss,
        predictions,
        d_support,
        d_query,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prototype_is_class_mean() {
        let emb = [1.0, 0.0, 3.0, 0.0, 5.0, 5.0];
        let p = compute_prototypes(&emb, 2, &[0, 0, 1], 2).unwrap();
        assert_eq!(p, vec![2.0, 0.0, 5.0, 5.0]);
        assert!(matches!(
            compute_prototypes(&emb, 2, &[0, 0, 0], 2),
            Err(FewShotError::EmptyClass { class: 1 })
        ));
    }

    #[test]
    fn hand_worked_probabilities() {
        let p = classify_query(&[0.0f64, 0.0], &[2.0, 0.0, 0.0, 1.0]).unwrap();
        let want = (-4f64).exp() / ((-4f64).exp() + (-1f64).exp());
        assert!((p[0] - want).abs() < 1e-12);
        assert!((p[0] - 0.0474).abs() < 1e-4);
        assert_eq!(predict(&p), 1);
    }

    #[test]
    fn equidistant_query_ties_to_class_zero() {
        let p = classify_query(&[0.0f64, 0.0], &[1.0, 0.0, -1.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        assert_eq!(predict(&p), 0);
    }

    #[test]
    fn identical_prototypes_give_ln2() {
        let out = prototypical_loss(
            &[1.0f64, 1.0, 1.0, 1.0],
            &[0, 1],
            &[0.3, -2.0, 4.0, 1.0],
            &[0, 1],
            2,
            2,
        )
        .unwrap();
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn far_clusters_give_near_zero_loss() {
        let support = [0.0f64, 0.0, 100.0, 100.0];
        let query = [0.5, -0.5, 99.0, 100.5];
        let out = prototypical_loss(&support, &[0, 1], &query, &[0, 1], 2, 2).unwrap();
        assert!(out.loss < 1e-3);
        assert_eq!(out.predictions, vec![0, 1]);
    }

    #[test]
    fn extreme_distances_stay_finite() {
        let support = [0.0f64, 1e150];
        let out = prototypical_loss(&support, &[0, 1], &[1e150], &[0], 2, 1).unwrap();
        assert!(out.loss.is_finite());
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let support = vec![0.3f64, -0.2, 1.1, 0.4, -0.5, 0.9, 0.2, 0.2];
        let s_lab = [0, 0, 1, 1];
        let query = vec![0.1f64, 0.0, 0.7, 0.6, -0.3, 0.5];
        let q_lab = [0, 1, 1];
        let out = prototypical_loss(&support, &s_lab, &query, &q_lab, 2, 2).unwrap();
        let h = 1e-6;
        for i in 0..support.len() {
            let mut a = support.clone();
            let mut b = support.clone();
            a[i] += h;
            b[i] -= h;
            let fa = prototypical_loss(&a, &s_lab, &query, &q_lab, 2, 2)
                .unwrap()
                .loss;
            let fb = prototypical_loss(&b, &s_lab, &query, &q_lab, 2, 2)
                .unwrap()
                .loss;
            assert!(((fa - fb) / (2.0 * h) - out.d_support[i]).abs() < 1e-7);
        }
        for i in 0..query.len() {
            let mut a = query.clone();
            let mut b = query.clone();
            a[i] += h;
            b[i] -= h;
            let fa = prototypical_loss(&support, &s_lab, &a, &q_lab, 2, 2)
                .unwrap()
                .loss;
            let fb = prototypical_loss(&support, &s_lab, &b, &q_lab, 2, 2)
                .unwrap()
                .loss;
            assert!(((fa - fb) / (2.0 * h) - out.d_query[i]).abs() < 1e-7);
        }
    }
}
