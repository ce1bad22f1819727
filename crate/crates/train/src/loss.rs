//! Multi-task objective: similarity regression plus weighted cross-entropy.

use repsense_model::{Graph, Tensor, Var};

/// Loss of one prediction: `(pred_sim − label_sim)² − α·ln p[class]`.
pub fn loss(pred_sim: f64, label_sim: f64, probs: &[f64], class: usize, alpha: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&label_sim), "similarity label {label_sim} outside [0, 1]");
    let sim = (pred_sim - label_sim).powi(2);
    if alpha == 0.0 {
        return sim;
    }
    sim - alpha * probs[class].ln()
}

/// Batched graph form: mean squared similarity error over `pairs` plus
/// `alpha` times the mean cross-entropy over the encoded segments.
/// Returns `(total, similarity, cross_entropy)`.
pub fn batch_loss(
    g: &mut Graph,
    pooled: Var,
    logits: Option<Var>,
    pairs: Vec<(usize, usize)>,
    targets: Vec<f64>,
    classes: Vec<usize>,
    alpha: f64,
) -> (Var, Var, Option<Var>) {
    let n = targets.len();
    let s = g.cosine_pairs(pooled, pairs);
    let y = g.constant(Tensor::from_vec(n, 1, targets));
    let d = g.sub(s, y);
    let sq = g.mul(d, d);
    let sim = g.mean(sq);
    match logits {
        Some(logits) if alpha != 0.0 => {
            let ce = g.cross_entropy(logits, classes);
            let weighted = g.scale(ce, alpha);
            (g.add(sim, weighted), sim, Some(ce))
        }
        _ => (sim, sim, None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_examples() {
        assert_eq!(loss(0.5, 1.0, &[0.3, 0.7], 1, 0.0), 0.25);
        assert_eq!(loss(0.8, 0.8, &[1.0, 0.0], 0, 1.0), 0.0);
        let p = 0.25f64;
        assert!((loss(0.8, 0.8, &[p, 1.0 - p], 0, 2.0) + 2.0 * p.ln()).abs() < 1e-15);
    }

    #[test]
    fn graph_loss_matches_scalar_loss() {
        let mut g = Graph::eval();
        let pooled = g.constant(Tensor::from_vec(2, 3, vec![1.0, 0.5, -0.2, 0.3, 0.9, 0.4]));
        let logits = g.constant(Tensor::from_vec(2, 2, vec![0.2, -0.1, 1.5, 0.3]));
        let (total, _, _) = batch_loss(&mut g, pooled, Some(logits), vec![(0, 1), (1, 0)], vec![0.6, 0.6], vec![0, 1], 0.5);

        let a = [1.0, 0.5, -0.2];
        let b = [0.3, 0.9, 0.4];
        let cos = repsense_model::cosine(&a, &b);
        let softmax = |z: [f64; 2]| {
            let m = z[0].max(z[1]);
            let e = [(z[0] - m).exp(), (z[1] - m).exp()];
            [e[0] / (e[0] + e[1]), e[1] / (e[0] + e[1])]
        };
        // each pair row carries the same similarity term; CE averages over segments
        let expected = (cos - 0.6).powi(2) + 0.5 * (-(softmax([0.2, -0.1])[0].ln()) - softmax([1.5, 0.3])[1].ln()) / 2.0;
        assert!((g.value(total).item() - expected).abs() < 1e-12);
    }
}
