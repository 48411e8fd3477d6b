//! Runs a slice of the experiment matrix on a synthetic corpus and prints
//! fold-averaged accuracy per cell. Environment knobs: `EPISODES`, `FOLDS`,
//! `MODES` (comma list), `CHANNELS` (e.g. `16,16,32,32`).

use std::time::Instant;

use chromaqt::dataset::Grouping;
use chromaqt::experiment::{assign_folds, build_inputs, run_cell, ExperimentConfig};
use chromaqt::nomogram::LabeledRecord;
use chromaqt::report::LearningMode;
use chromaqt::signal::DetectorParams;
use chromaqt::synth::{generate_records, SynthSpec};
use chromaqt::{NomogramBoundary, RenderConfig};

fn env<T: std::str::FromStr>(key: &str, default: T) -> T {
    std::env::var(key)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(default)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let boundary = NomogramBoundary::fixture();
    let mut spec = SynthSpec::default();
    spec.qt_margin_ms = env("MARGIN", spec.qt_margin_ms);
    spec.qt_spread_ms = env("SPREAD", spec.qt_spread_ms);
    spec.noise.noise_sd_mv = env("NOISE", spec.noise.noise_sd_mv);
    spec.noise.wander_amplitude_mv = env("WANDER", spec.noise.wander_amplitude_mv);
    spec.shape.t_morphology_jitter = env("JITTER", spec.shape.t_morphology_jitter);
    spec.seed = env("SEED", spec.seed);
    let t0 = Instant::now();
    let records: Vec<LabeledRecord> = generate_records(&spec, &boundary)?
        .into_iter()
        .map(|p| LabeledRecord {
            record: p.record,
            label: p.label,
        })
        .collect();
    let mut config = ExperimentConfig::default();
    config.folds = env("FOLDS", 5);
    config.train.train_episodes = env("EPISODES", 500);
    config.train.single_input = [env("SH", 64), env("SW", 64)];
    config.train.rhythm_input = [env("RH", 32), env("RW", 256)];
    config.train.learning_rate = env("LR", config.train.learning_rate);
    let reps: Vec<usize> = std::env::var("REPS")
        .unwrap_or_else(|_| "0,1,2,3".into())
        .split(',')
        .map(|r| r.parse().unwrap())
        .collect();
    if let Ok(ch) = std::env::var("CHANNELS") {
        config.train.channels = ch.split(',').map(|c| c.parse().unwrap()).collect();
    }
    let folds = assign_folds(&records, 5, Grouping::ByRecord, spec.seed)?;
    let data = build_inputs(
        &records,
        &folds,
        &boundary,
        &RenderConfig::default(),
        &DetectorParams::default(),
        &config.train,
    )?;
    eprintln!("corpus ready in {:.1}s", t0.elapsed().as_secs_f64());
    let modes = std::env::var("MODES").unwrap_or_else(|_| "few-shot,one-shot".into());
    for mode in modes.split(',') {
        let mode: LearningMode = mode.parse()?;
        for d in reps.iter().map(|&r| &data[r]) {
            let t = Instant::now();
            let (cell, _) = run_cell(mode, d, &config)?;
            let acc: Vec<String> = cell
                .folds
                .iter()
                .map(|f| format!("{:.1}", 100.0 * f.summary.accuracy.mean.unwrap_or(f64::NAN)))
                .collect();
            println!(
                "{mode} {:13} acc {:6.2}  loss {:.3}  folds [{}]  {:.1}s",
                d.representation.to_string(),
                cell.get_display(chromaqt::report::Metric::Accuracy)
                    .unwrap_or(f64::NAN),
                cell.mean.loss.mean.unwrap_or(f64::NAN),
                acc.join(" "),
                t.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
