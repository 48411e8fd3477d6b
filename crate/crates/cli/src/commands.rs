//! Stage implementations.

use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Context};
use chromaqt::dataset::{
    ingest_manifest, make_folds, materialize_images, Catalog, CatalogEntry, Grouping,
    Representation,
};
use chromaqt::experiment::{run_cell, RepresentationData};
use chromaqt::explain::{
    explain, overlay_file_name, render_overlay, segment_image, ClassifierModel, ConstantModel,
    Explanation, PlantedSegmentModel,
};
use chromaqt::fewshot::{ModelArtifact, ProtoClassifier};
use chromaqt::nomogram::label_dataset;
use chromaqt::render::{decode_png, encode_png};
use chromaqt::report::{
    episodes_file_name, ordering_checks, render_table, render_table_csv, results_file_name,
    write_episodes_csv, ExperimentCell, LearningMode, COLOR_MARGIN, RHYTHM_MARGIN,
};
use chromaqt::synth::{generate_dataset, generate_records, SynthSpec};
use chromaqt::util::{mix_seed, sha256_hex};
use chromaqt::EcgImage;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::provenance::{RunRecord, StageRecord, RUN_FILE};
use crate::{CheckFailed, Command, UsageError};

pub const CATALOG_FILE: &str = "catalog.csv";
pub const FOLDS_FILE: &str = "folds.csv";
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const EXPERIMENT_DIR: &str = "experiment";
pub const EXPLAIN_DIR: &str = "explain";
pub const ORDERINGS_FILE: &str = "orderings.txt";

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

/// Folds subcommand flags into the configuration.
pub fn apply_overrides(config: &mut RunConfig, command: &Command) -> anyhow::Result<()> {
    match command {
        Command::Synth(a) => {
            if let Some(n) = a.n {
                config.synth.n_records = n;
            }
            if let Some(f) = a.positive_frac {
                config.synth.positive_fraction = f;
            }
        }
        Command::Prepare(a) => {
            if let Some(k) = a.folds {
                config.experiment.folds = k;
            }
        }
        Command::Experiment(a) => {
            if let Some(n) = a.train_episodes {
                config.experiment.train.train_episodes = n;
            }
            if let Some(n) = a.eval_episodes {
                config.experiment.train.eval_episodes = n;
            }
        }
        Command::Explain(a) => {
            if let Some(n) = a.samples {
                config.explain.n_samples = n;
            }
        }
        Command::Report(_) | Command::Replay(_) => {}
    }
    Ok(())
}

fn modes(text: &str) -> anyhow::Result<Vec<LearningMode>> {
    match text {
        "both" => Ok(LearningMode::ALL.to_vec()),
        m => Ok(vec![m.parse().map_err(usage)?]),
    }
}

/// Runs one stage and records it in `<out>/run.json`.
pub fn execute(command: &Command, config: &RunConfig, out: &Path) -> anyhow::Result<()> {
    if let Command::Replay(a) = command {
        return replay(&a.run_json, out);
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let boundary = config.boundary()?;
    let t0 = Instant::now();
    let (stage, outputs) = match command {
        Command::Synth(_) => ("synth", synth(config, &boundary, out)?),
        Command::Prepare(a) => ("prepare", prepare(a, config, &boundary, out)?),
        Command::Experiment(a) => ("experiment", experiment(a, config, out)?),
        Command::Explain(a) => ("explain", explain_cmd(a, config, &boundary, out)?),
        Command::Report(a) => ("report", report(&modes(&a.mode)?, out)?),
        Command::Replay(_) => unreachable!("handled above"),
    };
    let run_path = out.join(RUN_FILE);
    let mut run = if run_path.exists() {
        RunRecord::load(&run_path)?
    } else {
        RunRecord::default()
    };
    run.upsert(StageRecord {
        stage: stage.to_string(),
        command: command.clone(),
        config: config.to_toml(),
        config_hash: config.hash(),
        seed: config.seed,
        boundary_hash: sha256_hex(&boundary.canonical()),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: t0.elapsed().as_secs_f64(),
        outputs,
    });
    run.save(&run_path)
}

fn replay(run_json: &Path, out: &Path) -> anyhow::Result<()> {
    let run = RunRecord::load(run_json)?;
    if run.stages.is_empty() {
        return Err(usage(format!("{} records no stages", run_json.display())));
    }
    for stage in &run.stages {
        log::info!("replaying {}", stage.stage);
        execute(&stage.command, &stage.config()?, out)?;
    }
    Ok(())
}

fn synth(
    config: &RunConfig,
    boundary: &chromaqt::NomogramBoundary,
    out: &Path,
) -> anyhow::Result<Vec<String>> {
    let summary = generate_dataset(&config.synth, boundary, out).map_err(chromaqt::Error::from)?;
    println!(
        "synth: {} records ({} at risk, {} no risk) -> {}",
        summary.positive_count + summary.negative_count,
        summary.positive_count,
        summary.negative_count,
        summary.manifest_path.display()
    );
    Ok(vec![MANIFEST_FILE.into(), "records/".into()])
}

/// Writes `text` unless the file already holds exactly it.
fn write_if_changed(path: &Path, text: &[u8]) -> anyhow::Result<bool> {
    if std::fs::read(path).ok().as_deref() == Some(text) {
        return Ok(false);
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(true)
}

/// Serializes through a scratch file so unchanged outputs keep their mtime.
fn write_via<F>(path: &Path, write: F) -> anyhow::Result<bool>
where
    F: FnOnce(&Path) -> Result<(), chromaqt::dataset::DatasetError>,
{
    let scratch = path.with_extension("csv.tmp");
    write(&scratch).map_err(chromaqt::Error::from)?;
    let bytes =
        std::fs::read(&scratch).with_context(|| format!("reading {}", scratch.display()))?;
    let _ = std::fs::remove_file(&scratch);
    write_if_changed(path, &bytes)
}

fn prepare(
    args: &crate::PrepareArgs,
    config: &RunConfig,
    boundary: &chromaqt::NomogramBoundary,
    out: &Path,
) -> anyhow::Result<Vec<String>> {
    let grouping: Grouping = args.grouping.parse().map_err(usage)?;
    let manifest = args
        .manifest
        .clone()
        .unwrap_or_else(|| out.join(MANIFEST_FILE));
    if !manifest.is_file() {
        return Err(chromaqt::Error::io(
            &manifest,
            std::io::Error::new(std::io::ErrorKind::NotFound, "manifest not found"),
        )
        .into());
    }
    let records = ingest_manifest(&manifest).map_err(chromaqt::Error::from)?;
    let labeled = label_dataset(records, boundary).map_err(chromaqt::Error::from)?;
    let (mut catalog, stats) = materialize_images(
        &labeled.records,
        boundary,
        &config.render,
        &config.detector,
        out,
    )
    .map_err(chromaqt::Error::from)?;
    let plan = make_folds(
        &catalog.entries,
        config.experiment.folds,
        true,
        grouping,
        config.seed,
    )
    .map_err(chromaqt::Error::from)?;
    catalog.apply_folds(&plan);
    write_via(&out.join(CATALOG_FILE), |p| catalog.write_csv(p))?;
    write_via(&out.join(FOLDS_FILE), |p| plan.write_csv(p))?;
    println!(
        "prepare: {} records ({} at risk), {} images written, {} up to date, {} folds ({})",
        catalog.entries.len(),
        labeled.positive_count,
        stats.written,
        stats.skipped,
        plan.k,
        args.grouping
    );
    Ok(vec![
        CATALOG_FILE.into(),
        FOLDS_FILE.into(),
        "images/".into(),
    ])
}

fn read_catalog(out: &Path) -> anyhow::Result<Catalog> {
    let path = out.join(CATALOG_FILE);
    if !path.is_file() {
        return Err(usage(format!(
            "{} not found; run `prepare` first",
            path.display()
        )));
    }
    Ok(Catalog::read_csv(&path).map_err(chromaqt::Error::from)?)
}

fn cell_file_name(mode: LearningMode, rep: Representation) -> String {
    format!("cell_{mode}_{rep}.json")
}

fn model_file_name(mode: LearningMode, rep: Representation, fold: usize) -> String {
    format!("model_{mode}_{rep}_{fold}.json")
}

fn loss_file_name(mode: LearningMode, rep: Representation, fold: usize) -> String {
    format!("loss_{mode}_{rep}_{fold}.csv")
}

fn experiment(
    args: &crate::ExperimentArgs,
    config: &RunConfig,
    out: &Path,
) -> anyhow::Result<Vec<String>> {
    let modes = modes(&args.mode)?;
    let reps: Vec<Representation> = match &args.representation {
        Some(r) => vec![r.parse().map_err(usage)?],
        None => Representation::ALL.to_vec(),
    };
    let catalog = read_catalog(out)?;
    // fold count is fixed at prepare time
    let k = catalog
        .entries
        .iter()
        .filter_map(|e| e.fold_id)
        .max()
        .map_or(0, |m| m + 1);
    let exp = chromaqt::experiment::ExperimentConfig {
        folds: k,
        ..config.experiment.clone()
    };
    let dir = out.join(EXPERIMENT_DIR);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut outputs = Vec::new();
    for &rep in &reps {
        let data = RepresentationData::from_catalog(&catalog, rep, &config.experiment.train)?;
        for &mode in &modes {
            let t = Instant::now();
            let (cell, runs) = run_cell(mode, &data, &exp)?;
            for run in &runs {
                let name = episodes_file_name(mode, rep, run.fold);
                write_episodes_csv(&dir.join(&name), &run.records)?;
                let model = model_file_name(mode, rep, run.fold);
                run.outcome.artifact.save(&dir.join(&model))?;
                let loss = loss_file_name(mode, rep, run.fold);
                run.outcome.write_loss_curve(&dir.join(&loss))?;
                outputs.extend([name, model, loss].map(|n| format!("{EXPERIMENT_DIR}/{n}")));
            }
            let name = cell_file_name(mode, rep);
            std::fs::write(dir.join(&name), serde_json::to_string_pretty(&cell)? + "\n")?;
            outputs.push(format!("{EXPERIMENT_DIR}/{name}"));
            println!(
                "experiment: {mode} {rep}: accuracy {} over {} folds ({:.1}s)",
                cell.get_display(chromaqt::report::Metric::Accuracy)
                    .map_or("n/a".to_string(), |v| format!("{v:.2}")),
                cell.folds.len(),
                t.elapsed().as_secs_f64()
            );
        }
    }
    if args.all {
        outputs.extend(report(&modes, out)?);
    }
    Ok(outputs)
}

fn load_cells(out: &Path, mode: LearningMode) -> anyhow::Result<Vec<ExperimentCell>> {
    let dir = out.join(EXPERIMENT_DIR);
    let mut cells = Vec::new();
    for rep in Representation::ALL {
        let path = dir.join(cell_file_name(mode, rep));
        if path.is_file() {
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            cells.push(
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing {}", path.display()))?,
            );
        }
    }
    Ok(cells)
}

fn report(modes: &[LearningMode], out: &Path) -> anyhow::Result<Vec<String>> {
    let mut outputs = Vec::new();
    let mut all = Vec::new();
    for &mode in modes {
        let cells = load_cells(out, mode)?;
        if cells.is_empty() {
            return Err(usage(format!(
                "no {mode} results under {}; run `experiment` first",
                out.join(EXPERIMENT_DIR).display()
            )));
        }
        let table = render_table(mode, &cells).map_err(chromaqt::Error::from)?;
        let csv = render_table_csv(mode, &cells).map_err(chromaqt::Error::from)?;
        let csv_name = results_file_name(mode);
        let txt_name = csv_name.replace(".csv", ".txt");
        write_if_changed(&out.join(&csv_name), csv.as_bytes())?;
        write_if_changed(&out.join(&txt_name), table.as_bytes())?;
        print!("{table}");
        outputs.extend([csv_name, txt_name]);
        all.extend(cells);
    }
    let checks =
        ordering_checks(&all, COLOR_MARGIN, RHYTHM_MARGIN).map_err(chromaqt::Error::from)?;
    let text: String = checks.iter().map(|c| format!("{c}\n")).collect();
    print!("{text}");
    write_if_changed(&out.join(ORDERINGS_FILE), text.as_bytes())?;
    outputs.push(ORDERINGS_FILE.to_string());
    Ok(outputs)
}

fn write_explanation(
    dir: &Path,
    image: &EcgImage,
    e: &Explanation,
    stem_suffix: &str,
) -> anyhow::Result<Vec<String>> {
    let overlay = overlay_file_name(&e.record_id, e.kind, e.colored)
        .replace("_explain.png", &format!("_explain{stem_suffix}.png"));
    let json = overlay.replace(".png", ".json");
    encode_png(&render_overlay(image, e), &dir.join(&overlay)).map_err(chromaqt::Error::from)?;
    e.save_json(&dir.join(&json))?;
    Ok([overlay, json]
        .map(|n| format!("{EXPLAIN_DIR}/{n}"))
        .to_vec())
}

fn explain_cmd(
    args: &crate::ExplainArgs,
    config: &RunConfig,
    boundary: &chromaqt::NomogramBoundary,
    out: &Path,
) -> anyhow::Result<Vec<String>> {
    let dir = out.join(EXPLAIN_DIR);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    if let Some(kind) = &args.self_test {
        return self_test(kind, config, boundary, &dir);
    }
    let model_path = args
        .model
        .as_ref()
        .ok_or_else(|| usage("--model is required"))?;
    let artifact = ModelArtifact::load(model_path)?;
    let rep = artifact.spec.representation;
    let model = ClassifierModel::new(
        ProtoClassifier::from_artifact(&artifact).map_err(chromaqt::Error::from)?,
    );
    let catalog = read_catalog(out)?;
    let chosen: Vec<(usize, &CatalogEntry)> = match args.sample {
        Some(n) => {
            let pool: Vec<(usize, &CatalogEntry)> = catalog
                .entries
                .iter()
                .enumerate()
                .filter(|(_, e)| !args.at_risk || e.label.is_positive())
                .collect();
            if n > pool.len() {
                return Err(usage(format!(
                    "--sample {n} exceeds the {} eligible records",
                    pool.len()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 0xe1));
            let mut picks: Vec<usize> = sample(&mut rng, pool.len(), n).into_vec();
            picks.sort_unstable();
            picks.into_iter().map(|i| pool[i]).collect()
        }
        None => {
            if args.records.is_empty() {
                return Err(usage("give record ids or --sample n"));
            }
            args.records
                .iter()
                .map(|id| {
                    catalog
                        .entries
                        .iter()
                        .enumerate()
                        .find(|(_, e)| &e.record_id == id)
                        .ok_or_else(|| {
                            anyhow!(chromaqt::Error::format(
                                "explain",
                                format!("record {id} not in catalog")
                            ))
                        })
                })
                .collect::<anyhow::Result<_>>()?
        }
    };
    let mut outputs = Vec::new();
    for (idx, entry) in chosen {
        let image = decode_png(&catalog.image_path(entry, rep)).map_err(chromaqt::Error::from)?;
        let e = explain(
            &model,
            &image,
            &config.explain,
            None,
            mix_seed(config.seed, idx as u64),
        )
        .map_err(chromaqt::Error::from)?;
        println!(
            "explain: {} {rep}: class {} p={:.3} fidelity {:.3}{} top segment {:?}",
            entry.record_id,
            e.target_class,
            e.target_probability,
            e.fidelity,
            if e.low_confidence {
                " (low confidence)"
            } else {
                ""
            },
            e.top_segment()
        );
        outputs.extend(write_explanation(&dir, &image, &e, "")?);
    }
    Ok(outputs)
}

/// Oracle checks on a rendered synthetic image: a constant model must get
/// near-zero weights, a planted model must rank its segment first.
fn self_test(
    kind: &str,
    config: &RunConfig,
    boundary: &chromaqt::NomogramBoundary,
    dir: &Path,
) -> anyhow::Result<Vec<String>> {
    let spec = SynthSpec {
        n_records: 5,
        positive_fraction: 0.2,
        seed: config.seed,
        ..config.synth.clone()
    };
    let planted = generate_records(&spec, boundary).map_err(chromaqt::Error::from)?;
    let record = planted
        .iter()
        .find(|p| p.label.is_positive())
        .ok_or_else(|| {
            anyhow!(chromaqt::Error::format(
                "self-test",
                "no at-risk record generated"
            ))
        })?;
    let images = chromaqt::dataset::render_record(
        &record.record,
        boundary,
        &config.render,
        &config.detector,
    )
    .map_err(chromaqt::Error::from)?;
    let image = &images[0];
    let seed = mix_seed(config.seed, 0x5e1f);
    match kind {
        "constant" => {
            let e = explain(
                &ConstantModel::new(0.7),
                image,
                &config.explain,
                Some(1),
                seed,
            )
            .map_err(chromaqt::Error::from)?;
            let max = e.weights.iter().fold(0.0f64, |a, w| a.max(w.abs()));
            println!("self-test constant: max |weight| {max:.2e}");
            if max >= 0.01 {
                return Err(
                    CheckFailed(format!("constant model max |weight| {max} >= 0.01")).into(),
                );
            }
            write_explanation(dir, image, &e, "_selftest_constant")
        }
        "planted" => {
            let segments = segment_image(image, config.explain.cell_px(image.kind));
            // the segment holding the most ink, so masking it moves the output
            let darkness: Vec<f64> = (0..segments.n_segments)
                .map(|s| PlantedSegmentModel::new(&segments, s).darkness(image))
                .collect();
            let target = (0..darkness.len())
                .max_by(|&a, &b| darkness[a].total_cmp(&darkness[b]).then(b.cmp(&a)))
                .expect("segments");
            let model = PlantedSegmentModel::new(&segments, target);
            let e = explain(&model, image, &config.explain, Some(1), seed)
                .map_err(chromaqt::Error::from)?;
            println!(
                "self-test planted: segment {target}, recovered {:?}, fidelity {:.3}",
                e.top_segment(),
                e.fidelity
            );
            if e.top_segment() != Some(target) {
                return Err(CheckFailed(format!(
                    "planted segment {target} ranked {:?}",
                    e.top_segment()
                ))
                .into());
            }
            write_explanation(dir, image, &e, "_selftest_planted")
        }
        other => Err(usage(format!(
            "unknown self-test {other:?} (expected constant or planted)"
        ))),
    }
}
