//! Convolutional embedding network: `[conv3x3 → ReLU → maxpool2]*` then a
//! linear head. Activations are laid out channel-major over the batch
//! (`C × B × H × W`) so every convolution is one GEMM over the whole batch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{matmul, Mat, Real};
use super::FewShotError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub in_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    /// Output channels of each conv block.
    pub channels: Vec<usize>,
    pub embedding_dim: usize,
}

#[derive(Debug, Clone, Copy)]
struct BlockDims {
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    ph: usize,
    pw: usize,
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    w: usize,
    b: usize,
    rows: usize,
    cols: usize,
}

impl Architecture {
    pub fn validate(&self) -> Result<(), FewShotError> {
        let blocks = self.channels.len() as u32;
        let min = 1usize << blocks;
        if self.in_channels == 0 || self.embedding_dim == 0 || self.channels.iter().any(|&c| c == 0)
        {
            return Err(FewShotError::InvalidArchitecture(
                "channel counts must be positive".into(),
            ));
        }
        if self.input_height < min || self.input_width < min {
            return Err(FewShotError::InvalidArchitecture(format!(
                "input {}x{} too small for {blocks} pooling stages",
                self.input_height, self.input_width
            )));
        }
        Ok(())
    }

    fn blocks(&self) -> Vec<BlockDims> {
        let (mut h, mut w, mut cin) = (self.input_height, self.input_width, self.in_channels);
        self.channels
            .iter()
            .map(|&cout| {
                let d = BlockDims {
                    cin,
                    cout,
                    h,
                    w,
                    ph: h / 2,
                    pw: w / 2,
                };
                (h, w, cin) = (h / 2, w / 2, cout);
                d
            })
            .collect()
    }

    /// Flattened length entering the linear head.
    pub fn feature_len(&self) -> usize {
        let last = *self.blocks().last().expect("at least one block");
        last.cout * last.ph * last.pw
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.input_height * self.input_width
    }

    fn slots(&self) -> Vec<Slot> {
        let mut off = 0;
        let mut slots = Vec::new();
        let mut push = |rows: usize, cols: usize| {
            let s = Slot {
                w: off,
                b: off + rows * cols,
                rows,
                cols,
            };
            off += rows * cols + rows;
            slots.push(s);
        };
        for d in self.blocks() {
            push(d.cout, d.cin * 9);
        }
        push(self.embedding_dim, self.feature_len());
        slots
    }

    pub fn param_count(&self) -> usize {
        self.slots().last().map(|s| s.b + s.rows).unwrap_or(0)
    }
}

/// Named parameter group, for reporting and per-block checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: String,
    pub range: std::ops::Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingNet<T> {
    arch: Architecture,
    params: Vec<T>,
}

struct BlockCache<T> {
    cols: Vec<T>,
    act: Vec<T>,
    argmax: Vec<u32>,
}

/// Cached activations of one forward pass, consumed by `backward`.
pub struct ForwardPass<T> {
    batch: usize,
    blocks: Vec<BlockCache<T>>,
    features: Vec<T>,
    /// `batch × embedding_dim`, row-major.
    pub embeddings: Vec<T>,
}

impl<T: Real> EmbeddingNet<T> {
    /// He-uniform conv weights and a down-scaled head, zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self, FewShotError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![T::zero(); arch.param_count()];
        let slots = arch.slots();
        let last = slots.len() - 1;
        for (i, s) in slots.iter().enumerate() {
            let fan_in = s.cols as f64;
            let bound = if i == last {
                (3.0 / fan_in).sqrt() * 0.5
            } else {
                (6.0 / fan_in).sqrt()
            };
            for p in &mut params[s.w..s.w + s.rows * s.cols] {
                *p = T::from_f64(rng.random_range(-bound..bound));
            }
        }
        Ok(Self { arch, params })
    }

    pub fn zeros(arch: Architecture) -> Result<Self, FewShotError> {
        arch.validate()?;
        let n = arch.param_count();
        Ok(Self {
            arch,
            params: vec![T::zero(); n],
        })
    }

    pub fn from_params(arch: Architecture, params: Vec<T>) -> Result<Self, FewShotError> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(FewShotError::ShapeMismatch {
                expected: arch.param_count(),
                actual: params.len(),
            });
        }
        Ok(Self { arch, params })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_groups(&self) -> Vec<ParamGroup> {
        let slots = self.arch.slots();
        let last = slots.len() - 1;
        slots
            .iter()
            .enumerate()
            .map(|(i, s)| ParamGroup {
                name: if i == last {
                    "head".into()
                } else {
                    format!("conv{}", i + 1)
                },
                range: s.w..s.b + s.rows,
            })
            .collect()
    }

    /// Converts to another precision.
    pub fn cast<U: Real>(&self) -> EmbeddingNet<U> {
        EmbeddingNet {
            arch: self.arch.clone(),
            params: self
                .params
                .iter()
                .map(|&p| U::from_f64(p.as_f64()))
                .collect(),
        }
    }

    /// Embeds a batch of images laid out `B × C × H × W`.
    pub fn embed(&self, inputs: &[T], batch: usize) -> Result<Vec<T>, FewShotError> {
        Ok(self.forward(inputs, batch)?.embeddings)
    }

    pub fn forward(&self, inputs: &[T], batch: usize) -> Result<ForwardPass<T>, FewShotError> {
        let per = self.arch.input_len();
        if inputs.len() != per * batch {
            return Err(FewShotError::ShapeMismatch {
                expected: per * batch,
                actual: inputs.len(),
            });
        }
        let slots = self.arch.slots();
        let hw0 = self.arch.input_height * self.arch.input_width;
        // B×C×HW → C×B×HW
        let mut x = vec![T::zero(); inputs.len()];
        for b in 0..batch {
            for c in 0..self.arch.in_channels {
                let src = &inputs[(b * self.arch.in_channels + c) * hw0..][..hw0];
                x[(c * batch + b) * hw0..][..hw0].copy_from_slice(src);
            }
        }
        let mut blocks = Vec::with_capacity(slots.len() - 1);
        for (d, s) in self.arch.blocks().iter().zip(&slots) {
            let n = batch * d.h * d.w;
            let mut cols = vec![T::zero(); d.cin * 9 * n];
            im2col(&x, d.cin, batch, d.h, d.w, &mut cols);
            let mut act = vec![T::zero(); d.cout * n];
            let w = &self.params[s.w..s.b];
            matmul(
                &mut act,
                Mat::new(w, d.cout, d.cin * 9),
                Mat::new(&cols, d.cin * 9, n),
                false,
            );
            for (co, row) in act.chunks_exact_mut(n).enumerate() {
                let bias = self.params[s.b + co];
                for v in row {
                    let z = *v + bias;
                    *v = if z > T::zero() { z } else { T::zero() };
                }
            }
            let (pooled, argmax) = max_pool(&act, d.cout * batch, d.h, d.w);
            blocks.push(BlockCache { cols, act, argmax });
            x = pooled;
        }
        let last = *self.arch.blocks().last().expect("blocks");
        let hw = last.ph * last.pw;
        let f_len = self.arch.feature_len();
        // C×B×hw → F×B with F = (c, s)
        let mut features = vec![T::zero(); f_len * batch];
        for c in 0..last.cout {
            for b in 0..batch {
                for s in 0..hw {
                    features[(c * hw + s) * batch + b] = x[(c * batch + b) * hw + s];
                }
            }
        }
        let head = slots[slots.len() - 1];
        let dim = self.arch.embedding_dim;
        let mut emb_t = vec![T::zero(); dim * batch];
        matmul(
            &mut emb_t,
            Mat::new(&self.params[head.w..head.b], dim, f_len),
            Mat::new(&features, f_len, batch),
            false,
        );
        let mut embeddings = vec![T::zero(); batch * dim];
        for d in 0..dim {
            let bias = self.params[head.b + d];
            for b in 0..batch {
                embeddings[b * dim + d] = emb_t[d * batch + b] + bias;
            }
        }
        Ok(ForwardPass {
            batch,
            blocks,
            features,
            embeddings,
        })
    }

    /// Parameter gradient given `d_embeddings` (`batch × embedding_dim`).
    pub fn backward(&self, pass: &ForwardPass<T>, d_embeddings: &[T]) -> Vec<T> {
        let batch = pass.batch;
        let dim = self.arch.embedding_dim;
        assert_eq!(d_embeddings.len(), batch * dim, "embedding gradient shape");
        let slots = self.arch.slots();
        let dims = self.arch.blocks();
        let mut grads = vec![T::zero(); self.params.len()];
        let head = slots[slots.len() - 1];
        let f_len = self.arch.feature_len();

        let mut d_emb_t = vec![T::zero(); dim * batch];
        for b in 0..batch {
            for d in 0..dim {
                d_emb_t[d * batch + b] = d_embeddings[b * dim + d];
            }
        }
        matmul(
            &mut grads[head.w..head.b],
            Mat::new(&d_emb_t, dim, batch),
            Mat::new(&pass.features, f_len, batch).t(),
            false,
        );
        for d in 0..dim {
            grads[head.b + d] = d_emb_t[d * batch..(d + 1) * batch]
                .iter()
                .fold(T::zero(), |a, &v| a + v);
        }
        let mut d_feat = vec![T::zero(); f_len * batch];
        matmul(
            &mut d_feat,
            Mat::new(&self.params[head.w..head.b], dim, f_len).t(),
            Mat::new(&d_emb_t, dim, batch),
            false,
        );
        let last = dims[dims.len() - 1];
        let hw = last.ph * last.pw;
        let mut d_x = vec![T::zero(); last.cout * batch * hw];
        for c in 0..last.cout {
            for b in 0..batch {
                for s in 0..hw {
                    d_x[(c * batch + b) * hw + s] = d_feat[(c * hw + s) * batch + b];
                }
            }
        }

        for (i, (d, s)) in dims.iter().zip(&slots).enumerate().rev() {
            let cache = &pass.blocks[i];
            let n = batch * d.h * d.w;
            let mut d_act = vec![T::zero(); d.cout * n];
            for (j, &src) in cache.argmax.iter().enumerate() {
                d_act[src as usize] = d_act[src as usize] + d_x[j];
            }
            for (g, &a) in d_act.iter_mut().zip(&cache.act) {
                if a <= T::zero() {
                    *g = T::zero();
                }
            }
            let k = d.cin * 9;
            matmul(
                &mut grads[s.w..s.b],
                Mat::new(&d_act, d.cout, n),
                Mat::new(&cache.cols, k, n).t(),
                false,
            );
            for co in 0..d.cout {
                grads[s.b + co] = d_act[co * n..(co + 1) * n]
                    .iter()
                    .fold(T::zero(), |a, &v| a + v);
            }
            if i > 0 {
                let mut d_cols = vec![T::zero(); k * n];
                matmul(
                    &mut d_cols,
                    Mat::new(&self.params[s.w..s.b], d.cout, k).t(),
                    Mat::new(&d_act, d.cout, n),
                    false,
                );
                let mut prev = vec![T::zero(); d.cin * n];
                col2im(&d_cols, d.cin, batch, d.h, d.w, &mut prev);
                d_x = prev;
            }
        }
        grads
    }
}

/// Unrolls 3×3 same-padded patches: rows `(c, ky, kx)`, columns `(b, y, x)`.
fn im2col<T: Real>(x: &[T], channels: usize, batch: usize, h: usize, w: usize, cols: &mut [T]) {
    let plane = h * w;
    let n = batch * plane;
    for c in 0..channels {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((c * 3 + ky) * 3 + kx) * n..][..n];
                for b in 0..batch {
                    let src = &x[(c * batch + b) * plane..][..plane];
                    let dst = &mut row[b * plane..][..plane];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        let out = &mut dst[y * w..(y + 1) * w];
                        if sy < 0 || sy >= h as isize {
                            out.fill(T::zero());
                            continue;
                        }
                        let line = &src[sy as usize * w..][..w];
                        match kx {
                            0 => {
                                out[0] = T::zero();
                                out[1..].copy_from_slice(&line[..w - 1]);
                            }
                            1 => out.copy_from_slice(line),
                            _ => {
                                out[..w - 1].copy_from_slice(&line[1..]);
                                out[w - 1] = T::zero();
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`].
fn col2im<T: Real>(cols: &[T], channels: usize, batch: usize, h: usize, w: usize, dx: &mut [T]) {
    let plane = h * w;
    let n = batch * plane;
    for c in 0..channels {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((c * 3 + ky) * 3 + kx) * n..][..n];
                for b in 0..batch {
                    let src = &row[b * plane..][..plane];
                    let dst = &mut dx[(c * batch + b) * plane..][..plane];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let grad = &src[y * w..(y + 1) * w];
                        let line = &mut dst[sy as usize * w..][..w];
                        match kx {
                            0 => {
                                for (o, &g) in line[..w - 1].iter_mut().zip(&grad[1..]) {
                                    *o = *o + g;
                                }
                            }
                            1 => {
                                for (o, &g) in line.iter_mut().zip(grad) {
                                    *o = *o + g;
                                }
                            }
                            _ => {
                                for (o, &g) in line[1..].iter_mut().zip(&grad[..w - 1]) {
                                    *o = *o + g;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2×2 stride-2 max pool over `planes` planes; odd trailing rows/cols drop.
/// Ties resolve to the first element in scan order.
fn max_pool<T: Real>(x: &[T], planes: usize, h: usize, w: usize) -> (Vec<T>, Vec<u32>) {
    let (ph, pw) = (h / 2, w / 2);
    let mut out = vec![T::zero(); planes * ph * pw];
    let mut arg = vec![0u32; planes * ph * pw];
    for p in 0..planes {
        let base = p * h * w;
        for y in 0..ph {
            for xx in 0..pw {
                let mut best = base + 2 * y * w + 2 * xx;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * w + 2 * xx + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                let o = (p * ph + y) * pw + xx;
                out[o] = x[best];
                arg[o] = best as u32;
            }
        }
    }
    (out, arg)
}
