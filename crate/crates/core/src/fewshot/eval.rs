//! Episodic evaluation on a held-out partition.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::episode::{sample_episode, EpisodeSpec};
use super::images::ImageSet;
use super::net::EmbeddingNet;
use super::proto::prototypical_loss;
use super::FewShotError;
use crate::nomogram::RiskLabel;
use crate::report::ConfusionCounts;
use crate::util::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub counts: ConfusionCounts,
    /// Mean query negative log-likelihood (natural log).
    pub loss: f64,
}

/// Embeds every image once, then scores `n_episodes` episodes. Episode `i`
/// draws from its own seeded stream, so results do not depend on scheduling.
pub fn evaluate(
    net: &EmbeddingNet<f32>,
    set: &ImageSet,
    spec: &EpisodeSpec,
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeRecord>, FewShotError> {
    let dim = net.arch().embedding_dim;
    let mut emb = Vec::with_capacity(set.len() * dim);
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(64) {
        emb.extend(net.embed(&set.gather(chunk.iter().copied()), chunk.len())?);
    }
    let emb: Vec<f64> = emb.into_iter().map(f64::from).collect();
    evaluate_embeddings(&emb, dim, &set.class_indices(), spec, n_episodes, seed)
}

/// Evaluation over precomputed embeddings (`n × dim`).
pub fn evaluate_embeddings(
    embeddings: &[f64],
    dim: usize,
    labels: &[usize],
    spec: &EpisodeSpec,
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeRecord>, FewShotError> {
    let positive = RiskLabel::AtRisk.class_index();
    let run = |episode: usize| -> Result<EpisodeRecord, FewShotError> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, episode as u64));
        let ep = sample_episode(labels, spec, &mut rng)?;
        let gather = |items: &[(usize, usize)]| -> Vec<f64> {
            items
                .iter()
                .flat_map(|&(i, _)| embeddings[i * dim..(i + 1) * dim].iter().copied())
                .collect()
        };
        let truth = ep.query_labels();
        let out = prototypical_loss(
            &gather(&ep.support),
            &ep.support_labels(),
            &gather(&ep.query),
            &truth,
            spec.n_way,
            dim,
        )?;
        let mut counts = ConfusionCounts::default();
        for (&p, &t) in out.predictions.iter().zip(&truth) {
            counts.record(p == positive, t == positive);
        }
        Ok(EpisodeRecord {
            episode,
            counts,
            loss: out.loss,
        })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n_episodes).into_par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n_episodes).map(run).collect()
    }
}
