//! Episodic training, the persisted model artifact and standalone inference.

use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::episode::{sample_episode, EpisodeSpec};
use super::images::{ImageSet, CHANNELS};
use super::net::{Architecture, EmbeddingNet};
use super::proto::{classify_query, compute_prototypes, prototypical_loss};
use super::tensor::Real;
use super::FewShotError;
use crate::util::{mix_seed, sha256_hex};

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    Standard,
    /// Trains in `f64`; used for gradient checks.
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub train_episodes: usize,
    pub eval_episodes: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub channels: Vec<usize>,
    pub embedding_dim: usize,
    /// `[height, width]` network input for single-beat images.
    pub single_input: [usize; 2],
    /// `[height, width]` network input for rhythm images.
    pub rhythm_input: [usize; 2],
    pub precision: Precision,
    /// Frozen reference support size per class, for standalone inference.
    pub reference_per_class: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            train_episodes: 500,
            eval_episodes: 100,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 7,
            channels: vec![32, 32, 64, 64],
            embedding_dim: 64,
            single_input: [64, 64],
            rhythm_input: [32, 256],
            precision: Precision::Standard,
            reference_per_class: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), FewShotError> {
        if self.train_episodes == 0 || self.eval_episodes == 0 {
            return Err(FewShotError::InvalidSpec(
                "episode counts must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(FewShotError::InvalidSpec(
                "learning_rate must be positive".into(),
            ));
        }
        if self.reference_per_class == 0 {
            return Err(FewShotError::InvalidSpec(
                "reference_per_class must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn input_size(&self, kind: crate::render::ImageKind) -> (usize, usize) {
        let [h, w] = match kind {
            crate::render::ImageKind::SingleBeat => self.single_input,
            crate::render::ImageKind::Rhythm => self.rhythm_input,
        };
        (h, w)
    }

    pub fn architecture(&self, height: usize, width: usize) -> Architecture {
        Architecture {
            in_channels: CHANNELS,
            input_height: height,
            input_width: width,
            channels: self.channels.clone(),
            embedding_dim: self.embedding_dim,
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(n: usize, config: &TrainConfig) -> Self {
        Self {
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.epsilon,
            step: 0,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
        }
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        self.step += 1;
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let (c1, c2) = (T::one() - b1, T::one() - b2);
        let lr_t = self.lr * (1.0 - self.beta2.powi(self.step)).sqrt()
            / (1.0 - self.beta1.powi(self.step));
        let (lr_t, eps) = (T::from_f64(lr_t), T::from_f64(self.eps));
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = b1 * *m + c1 * g;
            *v = b2 * *v + c2 * g * g;
            *p = *p - lr_t * *m / (v.sqrt() + eps);
        }
    }
}

/// Serialized trained model with its frozen reference support set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub version: u32,
    pub architecture: Architecture,
    pub spec: EpisodeSpec,
    pub train_config: TrainConfig,
    pub config_hash: String,
    pub params: Vec<f32>,
    pub reference_ids: Vec<String>,
    pub reference_classes: Vec<usize>,
    /// `n_way × embedding_dim` prototypes of the reference support set.
    pub prototypes: Vec<f32>,
    pub final_loss: f64,
}

impl ModelArtifact {
    pub fn save(&self, path: &Path) -> Result<(), crate::Error> {
        let text =
            serde_json::to_string(self).map_err(|e| crate::Error::format("model artifact", e))?;
        std::fs::write(path, text).map_err(|e| crate::Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, crate::Error> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        let art: ModelArtifact = serde_json::from_str(&text)
            .map_err(|e| crate::Error::format(path.display().to_string(), e))?;
        if art.version != ARTIFACT_VERSION {
            return Err(
                FewShotError::Artifact(format!("unsupported version {}", art.version)).into(),
            );
        }
        if art.prototypes.len() != art.spec.n_way * art.architecture.embedding_dim {
            return Err(FewShotError::Artifact(
                "prototype shape does not match architecture".into(),
            )
            .into());
        }
        Ok(art)
    }

    pub fn network(&self) -> Result<EmbeddingNet<f32>, FewShotError> {
        EmbeddingNet::from_params(self.architecture.clone(), self.params.clone())
    }
}

/// Hash of everything that determines a training run.
pub fn config_hash(spec: &EpisodeSpec, config: &TrainConfig, arch: &Architecture) -> String {
    let canon = serde_json::json!({ "spec": spec, "train": config, "arch": arch });
    sha256_hex(&canon.to_string())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub artifact: ModelArtifact,
    pub loss_curve: Vec<f64>,
}

impl TrainOutcome {
    /// Writes the loss curve as `episode,loss`.
    pub fn write_loss_curve(&self, path: &Path) -> Result<(), crate::Error> {
        let mut text = String::from("episode,loss\n");
        for (i, l) in self.loss_curve.iter().enumerate() {
            text.push_str(&format!("{i},{l:?}\n"));
        }
        std::fs::write(path, text).map_err(|e| crate::Error::io(path, e))
    }
}

/// Runs `config.train_episodes` episodes with one optimizer step each.
pub fn train(
    set: &ImageSet,
    spec: &EpisodeSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome, FewShotError> {
    spec.validate()?;
    config.validate()?;
    let arch = config.architecture(set.height, set.width);
    let (params, loss_curve) = match config.precision {
        Precision::Standard => {
            let (net, curve) = train_generic::<f32>(set, spec, config, &arch)?;
            (net.params().to_vec(), curve)
        }
        Precision::High => {
            let (net, curve) = train_generic::<f64>(set, spec, config, &arch)?;
            (net.cast::<f32>().params().to_vec(), curve)
        }
    };
    let net = EmbeddingNet::from_params(arch.clone(), params)?;

    let labels = set.class_indices();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, u64::MAX));
    let mut reference = Vec::new();
    for c in 0..spec.n_way {
        let members: Vec<usize> = (0..set.len()).filter(|&i| labels[i] == c).collect();
        let take = config.reference_per_class.min(members.len());
        if take == 0 {
            return Err(FewShotError::EmptyClass { class: c });
        }
        reference.extend(
            sample(&mut rng, members.len(), take)
                .into_iter()
                .map(|p| (members[p], c)),
        );
    }
    let emb = net.embed(
        &set.gather(reference.iter().map(|&(i, _)| i)),
        reference.len(),
    )?;
    let classes: Vec<usize> = reference.iter().map(|&(_, c)| c).collect();
    let prototypes = compute_prototypes(&emb, arch.embedding_dim, &classes, spec.n_way)?;

    let artifact = ModelArtifact {
        version: ARTIFACT_VERSION,
        config_hash: config_hash(spec, config, &arch),
        architecture: arch,
        spec: spec.clone(),
        train_config: config.clone(),
        params: net.params().to_vec(),
        reference_ids: reference.iter().map(|&(i, _)| set.ids[i].clone()).collect(),
        reference_classes: classes,
        prototypes,
        final_loss: loss_curve.last().copied().unwrap_or(f64::NAN),
    };
    Ok(TrainOutcome {
        artifact,
        loss_curve,
    })
}

fn train_generic<T: Real>(
    set: &ImageSet,
    spec: &EpisodeSpec,
    config: &TrainConfig,
    arch: &Architecture,
) -> Result<(EmbeddingNet<T>, Vec<f64>), FewShotError> {
    let mut net = EmbeddingNet::<T>::init(arch.clone(), mix_seed(config.seed, 0))?;
    let mut adam = Adam::<T>::new(net.params().len(), config);
    let labels = set.class_indices();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 1));
    let dim = arch.embedding_dim;
    let mut curve = Vec::with_capacity(config.train_episodes);
    for episode in 0..config.train_episodes {
        let ep = sample_episode(&labels, spec, &mut rng)?;
        let items = ep.support.iter().chain(&ep.query).map(|&(i, _)| i);
        let batch: Vec<T> = set
            .gather(items)
            .into_iter()
            .map(|v| T::from_f64(v as f64))
            .collect();
        let n = ep.support.len() + ep.query.len();
        let pass = net.forward(&batch, n)?;
        let split = ep.support.len() * dim;
        let out = prototypical_loss(
            &pass.embeddings[..split],
            &ep.support_labels(),
            &pass.embeddings[split..],
            &ep.query_labels(),
            spec.n_way,
            dim,
        )
        .map_err(|e| match e {
            FewShotError::NumericalOverflow => FewShotError::Diverged {
                episode,
                loss: f64::NAN,
            },
            other => other,
        })?;
        let loss = out.loss.as_f64();
        if !loss.is_finite() {
            return Err(FewShotError::Diverged { episode, loss });
        }
        let mut d_emb = out.d_support;
        d_emb.extend(out.d_query);
        let grads = net.backward(&pass, &d_emb);
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(FewShotError::Diverged { episode, loss });
        }
        adam.step(net.params_mut(), &grads);
        curve.push(loss);
        if (episode + 1) % 100 == 0 {
            log::debug!("episode {}: loss {loss:.4}", episode + 1);
        }
    }
    Ok((net, curve))
}

/// Standalone classifier: frozen network plus reference prototypes.
#[derive(Debug, Clone)]
pub struct ProtoClassifier {
    pub net: EmbeddingNet<f32>,
    pub prototypes: Vec<f32>,
}

impl ProtoClassifier {
    pub fn from_artifact(artifact: &ModelArtifact) -> Result<Self, FewShotError> {
        Ok(Self {
            net: artifact.network()?,
            prototypes: artifact.prototypes.clone(),
        })
    }

    pub fn input_len(&self) -> usize {
        self.net.arch().input_len()
    }

    /// Class probabilities for each input in a batch buffer.
    pub fn predict_proba(&self, inputs: &[f32]) -> Result<Vec<Vec<f64>>, FewShotError> {
        let per = self.input_len();
        let dim = self.net.arch().embedding_dim;
        let mut out = Vec::with_capacity(inputs.len() / per);
        for chunk in inputs.chunks(per * 64) {
            let n = chunk.len() / per;
            let emb = self.net.embed(chunk, n)?;
            for e in emb.chunks_exact(dim) {
                out.push(
                    classify_query(e, &self.prototypes)?
                        .into_iter()
                        .map(f64::from)
                        .collect(),
                );
            }
        }
        Ok(out)
    }
}
