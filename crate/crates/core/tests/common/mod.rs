//! Shared fixtures for integration tests.
#![allow(dead_code)]

use chromaqt::nomogram::{LabeledRecord, NomogramBoundary};
use chromaqt::synth::{generate_records, NoiseSettings, SynthSpec};

pub fn boundary() -> NomogramBoundary {
    NomogramBoundary::fixture()
}

pub fn corpus(n: usize, seed: u64) -> Vec<LabeledRecord> {
    let spec = SynthSpec {
        n_records: n,
        seed,
        ..SynthSpec::default()
    };
    generate_records(&spec, &boundary())
        .expect("default spec is feasible")
        .into_iter()
        .map(|p| LabeledRecord {
            record: p.record,
            label: p.label,
        })
        .collect()
}

pub fn noiseless_corpus(n: usize, seed: u64) -> Vec<LabeledRecord> {
    let mut spec = SynthSpec {
        n_records: n,
        seed,
        noise: NoiseSettings::noiseless(),
        ..SynthSpec::default()
    };
    spec.shape.t_morphology_jitter = 0.0;
    spec.shape.notched_t_probability = 0.0;
    generate_records(&spec, &boundary())
        .expect("noiseless spec is feasible")
        .into_iter()
        .map(|p| LabeledRecord {
            record: p.record,
            label: p.label,
        })
        .collect()
}

/// Brute-force "point on or above the polyline" by the sign of the cross
/// product against the segment under `hr`; end segments extend flat.
pub fn above_polyline(points: &[(f64, f64)], qt: f64, hr: f64) -> bool {
    let (first, last) = (points[0], points[points.len() - 1]);
    if hr <= first.0 {
        return qt >= first.1;
    }
    if hr >= last.0 {
        return qt >= last.1;
    }
    let i = points
        .windows(2)
        .position(|w| hr >= w[0].0 && hr <= w[1].0)
        .unwrap();
    let ((h0, q0), (h1, q1)) = (points[i], points[i + 1]);
    (h1 - h0) * (qt - q0) - (q1 - q0) * (hr - h0) >= 0.0
}

use chromaqt::fewshot::{compute_prototypes, prototypical_loss, Architecture, EmbeddingNet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Three-block network small enough for an exhaustive finite-difference sweep.
pub fn micro_arch() -> Architecture {
    Architecture {
        in_channels: 3,
        input_height: 16,
        input_width: 16,
        channels: vec![3, 4, 4],
        embedding_dim: 5,
    }
}

pub fn micro_loss(net: &EmbeddingNet<f64>, inputs: &[f64]) -> f64 {
    let dim = net.arch().embedding_dim;
    let emb = net.embed(inputs, 3).unwrap();
    prototypical_loss(&emb[..2 * dim], &[0, 1], &emb[2 * dim..], &[0], 2, dim)
        .unwrap()
        .loss
}

/// Gradient check on a random 3-image episode (one support per class, one
/// query). Where the two one-sided quotients agree the loss is smooth and the
/// analytic entry is compared to the central difference; where they disagree
/// the parameter sits on a ReLU or max-pool kink and the analytic entry must
/// lie between them.
pub struct GradientCheck {
    pub max_rel_error: f64,
    pub kinks: usize,
    pub kinks_outside: usize,
    pub params: usize,
}

pub fn gradient_check_full(seed: u64) -> GradientCheck {
    let arch = micro_arch();
    let mut net = EmbeddingNet::<f64>::init(arch.clone(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let inputs: Vec<f64> = (0..3 * arch.input_len())
        .map(|_| rng.random_range(0.0..1.0))
        .collect();
    let dim = arch.embedding_dim;
    let pass = net.forward(&inputs, 3).unwrap();
    let out = prototypical_loss(
        &pass.embeddings[..2 * dim],
        &[0, 1],
        &pass.embeddings[2 * dim..],
        &[0],
        2,
        dim,
    )
    .unwrap();
    let mut d_emb = out.d_support;
    d_emb.extend(out.d_query);
    let analytic = net.backward(&pass, &d_emb);
    let base = micro_loss(&net, &inputs);
    let h = 1e-6;
    let mut check = GradientCheck {
        max_rel_error: 0.0,
        kinks: 0,
        kinks_outside: 0,
        params: analytic.len(),
    };
    for i in 0..analytic.len() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + h;
        let up = micro_loss(&net, &inputs);
        net.params_mut()[i] = orig - h;
        let down = micro_loss(&net, &inputs);
        net.params_mut()[i] = orig;
        let (right, left) = ((up - base) / h, (base - down) / h);
        let scale = analytic[i].abs().max(right.abs()).max(left.abs());
        if scale <= 1e-7 {
            continue;
        }
        // one-sided quotients carry O(h) curvature error, far below a kink jump
        if (right - left).abs() > 1e-2 * scale {
            check.kinks += 1;
            let (lo, hi) = (left.min(right), left.max(right));
            let slack = 1e-4 * scale;
            if analytic[i] < lo - slack || analytic[i] > hi + slack {
                check.kinks_outside += 1;
            }
            continue;
        }
        let numeric = (up - down) / (2.0 * h);
        check.max_rel_error = check
            .max_rel_error
            .max((analytic[i] - numeric).abs() / scale);
    }
    check
}

/// Largest relative error between backprop and central differences over the
/// smooth parameters; infinite if a kink entry is not a valid subgradient.
pub fn gradient_check(seed: u64) -> f64 {
    let c = gradient_check_full(seed);
    if c.kinks_outside > 0 {
        f64::INFINITY
    } else {
        c.max_rel_error
    }
}

/// Nearest class mean by brute force over explicit coordinates.
pub fn nearest_mean(points: &[[f64; 2]], support: &[(usize, usize)], q: [f64; 2]) -> usize {
    let mut best = (0, f64::INFINITY);
    for c in 0..2 {
        let members: Vec<_> = support
            .iter()
            .filter(|&&(_, k)| k == c)
            .map(|&(i, _)| points[i])
            .collect();
        let n = members.len() as f64;
        let m = [
            members.iter().map(|p| p[0]).sum::<f64>() / n,
            members.iter().map(|p| p[1]).sum::<f64>() / n,
        ];
        let d = (q[0] - m[0]).powi(2) + (q[1] - m[1]).powi(2);
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

/// Two planted 2-D Gaussian clusters with overlapping tails.
pub fn planted_clusters(n_per_class: usize, seed: u64) -> (Vec<[f64; 2]>, Vec<usize>) {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (c, center) in [[0.0, 0.0], [1.5, 1.0]].into_iter().enumerate() {
        for _ in 0..n_per_class {
            let (a, b): (f64, f64) = (
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            );
            points.push([center[0] + a, center[1] + b]);
            labels.push(c);
        }
    }
    (points, labels)
}

/// Fraction of queries where the identity-embedding prototype pipeline agrees
/// with brute-force nearest class mean, over `episodes` sampled episodes.
pub fn identity_reduction(episodes: usize, k_shot: usize, seed: u64) -> (usize, usize) {
    use chromaqt::dataset::Representation;
    use chromaqt::fewshot::{classify_query, predict, sample_episode, EpisodeSpec};
    let (points, labels) = planted_clusters(40, seed);
    let spec = EpisodeSpec::new(k_shot, Representation::ALL[0]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut agree, mut total) = (0, 0);
    for _ in 0..episodes {
        let ep = sample_episode(&labels, &spec, &mut rng).unwrap();
        let flat = |items: &[(usize, usize)]| {
            items
                .iter()
                .flat_map(|&(i, _)| points[i])
                .collect::<Vec<f64>>()
        };
        let protos = compute_prototypes(&flat(&ep.support), 2, &ep.support_labels(), 2).unwrap();
        for &(i, _) in &ep.query {
            let got = predict(&classify_query(&points[i], &protos).unwrap());
            agree += usize::from(got == nearest_mean(&points, &ep.support, points[i]));
            total += 1;
        }
    }
    (agree, total)
}

/// One planted-feature trial: a random inked segment of a rendered at-risk
/// image drives the model; true when it ranks first by |weight|.
pub fn planted_trial(seed: u64) -> bool {
    use chromaqt::dataset::render_record;
    use chromaqt::explain::{explain, segment_image, ExplainConfig, PlantedSegmentModel};
    use chromaqt::signal::DetectorParams;
    use chromaqt::RenderConfig;
    let records = corpus(5, seed);
    let lr = records
        .iter()
        .find(|r| r.label.is_positive())
        .expect("one positive in five");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = render_record(
        &lr.record,
        &boundary(),
        &RenderConfig::default(),
        &DetectorParams::default(),
    )
    .unwrap();
    let image = &images[rng.random_range(0..4)];
    let config = ExplainConfig::default();
    let segments = segment_image(image, config.cell_px(image.kind));
    let inked: Vec<usize> = (0..segments.n_segments)
        .filter(|&s| PlantedSegmentModel::new(&segments, s).darkness(image) > 0.0)
        .collect();
    let target = inked[rng.random_range(0..inked.len())];
    let model = PlantedSegmentModel::new(&segments, target);
    let e = explain(&model, image, &config, Some(1), seed).unwrap();
    e.top_segment() == Some(target)
}

/// Largest |weight| a constant model receives on a rendered image.
pub fn constant_max_weight(seed: u64) -> f64 {
    use chromaqt::dataset::render_record;
    use chromaqt::explain::{explain, ConstantModel, ExplainConfig};
    use chromaqt::signal::DetectorParams;
    use chromaqt::RenderConfig;
    let lr = &corpus(1, seed)[0];
    let images = render_record(
        &lr.record,
        &boundary(),
        &RenderConfig::default(),
        &DetectorParams::default(),
    )
    .unwrap();
    let image = &images[(seed % 4) as usize];
    let e = explain(
        &ConstantModel::new(0.3),
        image,
        &ExplainConfig::default(),
        Some(1),
        seed,
    )
    .unwrap();
    e.weights.iter().fold(0.0f64, |a, w| a.max(w.abs()))
}

/// Metrics of `episodes` random query sets recounted from the raw
/// (predicted, actual) pairs; returns the number of mismatching episodes.
pub fn metric_recount_mismatches(episodes: usize, seed: u64) -> usize {
    use chromaqt::report::{metrics_from_counts, ConfusionCounts, Metric};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let mut bad = 0;
    for _ in 0..episodes {
        let n = rng.random_range(1..=20);
        let pairs: Vec<(bool, bool)> = (0..n)
            .map(|_| (rng.random_bool(0.5), rng.random_bool(0.3)))
            .collect();
        let mut counts = ConfusionCounts::default();
        for &(p, a) in &pairs {
            counts.record(p, a);
        }
        let m = metrics_from_counts(&counts);
        let count =
            |f: &dyn Fn(bool, bool) -> bool| pairs.iter().filter(|&&(p, a)| f(p, a)).count();
        let tp = count(&|p, a| p && a);
        let fp = count(&|p, a| p && !a);
        let fneg = count(&|p, a| !p && a);
        let expected = [
            (Metric::Accuracy, ratio(count(&|p, a| p == a), n)),
            (Metric::Sensitivity, ratio(tp, count(&|_, a| a))),
            (
                Metric::Specificity,
                ratio(count(&|p, a| !p && !a), count(&|_, a| !a)),
            ),
            (Metric::Precision, ratio(tp, count(&|p, _| p))),
            (
                Metric::F1,
                if tp + fp == 0 || tp + fneg == 0 || tp == 0 {
                    None
                } else {
                    ratio(2 * tp, 2 * tp + fp + fneg)
                },
            ),
        ];
        let ok = expected.iter().all(|&(metric, want)| {
            let got = m.get(metric).and_then(|v| v.value());
            match (got, want) {
                (Some(g), Some(w)) => (g - w).abs() < 1e-12,
                (None, None) => true,
                _ => false,
            }
        });
        bad += usize::from(!ok);
    }
    bad
}

/// Hand example tp=9, fn=1, tn=8, fp=2 rounded to 4 decimals.
pub fn hand_example_f1() -> String {
    use chromaqt::report::{metrics_from_counts, ConfusionCounts};
    let c = ConfusionCounts {
        tp: 9,
        fp: 2,
        tn: 8,
        fn_: 1,
    };
    format!("{:.4}", metrics_from_counts(&c).f1.value().unwrap())
}
