//! Cross-validated experiment matrix: every representation, every fold, one
//! train/evaluate run each.

use serde::{Deserialize, Serialize};

use crate::dataset::{
    make_folds, render_record, Catalog, CatalogEntry, DatasetError, Grouping, Representation,
};
use crate::fewshot::{
    evaluate, train, EpisodeRecord, EpisodeSpec, ImageSet, QuerySplit, TrainConfig, TrainOutcome,
};
use crate::nomogram::{LabeledRecord, NomogramBoundary};
use crate::render::RenderConfig;
use crate::report::{aggregate, ExperimentCell, LearningMode};
use crate::signal::DetectorParams;
use crate::util::mix_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub folds: usize,
    pub q_query: usize,
    pub split: QuerySplit,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            q_query: 10,
            split: QuerySplit::Balanced,
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn episode_spec(&self, mode: LearningMode, representation: Representation) -> EpisodeSpec {
        EpisodeSpec {
            n_way: 2,
            k_shot: mode.k_shot(),
            q_query: self.q_query,
            split: self.split,
            representation,
        }
    }

    /// Training seed of a fold; shared by all representations so their
    /// runs see the same episode item sequence.
    pub fn train_seed(&self, mode: LearningMode, fold: usize) -> u64 {
        mix_seed(self.train.seed, (mode.k_shot() as u64) << 32 | fold as u64)
    }

    pub fn eval_seed(&self, mode: LearningMode, fold: usize) -> u64 {
        mix_seed(
            self.train.seed ^ 0x5eed_e7a1,
            (mode.k_shot() as u64) << 32 | fold as u64,
        )
    }
}

/// Network inputs of one representation with each item's fold.
#[derive(Debug, Clone)]
pub struct RepresentationData {
    pub representation: Representation,
    pub set: ImageSet,
    pub folds: Vec<usize>,
}

impl RepresentationData {
    /// Decodes one representation of a prepared catalog; every entry must
    /// carry a fold id.
    pub fn from_catalog(
        catalog: &Catalog,
        representation: Representation,
        train: &TrainConfig,
    ) -> Result<Self, crate::Error> {
        let missing: Vec<(String, String)> = catalog
            .entries
            .iter()
            .filter(|e| e.fold_id.is_none())
            .map(|e| (e.record_id.clone(), "no fold_id in catalog".to_string()))
            .collect();
        if !missing.is_empty() {
            return Err(DatasetError::Validation(missing).into());
        }
        let set = ImageSet::load(
            catalog,
            &catalog.entries,
            representation,
            train.input_size(representation.kind),
        )?;
        Ok(Self {
            representation,
            set,
            folds: catalog
                .entries
                .iter()
                .map(|e| e.fold_id.expect("checked"))
                .collect(),
        })
    }

    pub fn split(&self, fold: usize) -> (ImageSet, ImageSet) {
        let (train, eval): (Vec<usize>, Vec<usize>) =
            (0..self.set.len()).partition(|&i| self.folds[i] != fold);
        (self.set.select(&train), self.set.select(&eval))
    }
}

/// Renders every record in memory and downscales to network inputs, in
/// [`Representation::ALL`] order.
pub fn build_inputs(
    records: &[LabeledRecord],
    folds: &[usize],
    boundary: &NomogramBoundary,
    render: &RenderConfig,
    detector: &DetectorParams,
    train: &TrainConfig,
) -> Result<Vec<RepresentationData>, crate::Error> {
    let work = |lr: &LabeledRecord| -> Result<Vec<Vec<f32>>, crate::Error> {
        let images = render_record(&lr.record, boundary, render, detector)?;
        images
            .iter()
            .map(|img| {
                let (h, w) = train.input_size(img.kind);
                Ok(crate::fewshot::image_to_input(img, h, w)?)
            })
            .collect()
    };
    #[cfg(feature = "parallel")]
    let inputs: Vec<_> = {
        use rayon::prelude::*;
        records.par_iter().map(work).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let inputs: Vec<_> = records.iter().map(work).collect();

    let mut data: Vec<RepresentationData> = Representation::ALL
        .iter()
        .map(|&rep| {
            let (h, w) = train.input_size(rep.kind);
            RepresentationData {
                representation: rep,
                set: ImageSet::new(h, w),
                folds: folds.to_vec(),
            }
        })
        .collect();
    if folds.len() != records.len() {
        return Err(DatasetError::Validation(vec![(
            String::new(),
            format!("{} fold ids for {} records", folds.len(), records.len()),
        )])
        .into());
    }
    for (lr, per_rep) in records.iter().zip(inputs) {
        for (d, input) in data.iter_mut().zip(per_rep?) {
            d.set.push(lr.record.record_id.clone(), lr.label, input)?;
        }
    }
    Ok(data)
}

#[derive(Debug, Clone)]
pub struct FoldRun {
    pub fold: usize,
    pub train_seed: u64,
    pub eval_seed: u64,
    pub outcome: TrainOutcome,
    pub records: Vec<EpisodeRecord>,
}

/// Trains and evaluates one representation across all folds.
pub fn run_cell(
    mode: LearningMode,
    data: &RepresentationData,
    config: &ExperimentConfig,
) -> Result<(ExperimentCell, Vec<FoldRun>), crate::Error> {
    let spec = config.episode_spec(mode, data.representation);
    let mut runs = Vec::with_capacity(config.folds);
    for fold in 0..config.folds {
        let (train_set, eval_set) = data.split(fold);
        let train_seed = config.train_seed(mode, fold);
        let eval_seed = config.eval_seed(mode, fold);
        let tc = TrainConfig {
            seed: train_seed,
            ..config.train.clone()
        };
        let outcome = train(&train_set, &spec, &tc)?;
        let net = outcome.artifact.network()?;
        let records = evaluate(
            &net,
            &eval_set,
            &spec,
            config.train.eval_episodes,
            eval_seed,
        )?;
        log::info!(
            "{mode} {} fold {fold}: final train loss {:.4}",
            data.representation,
            outcome.artifact.final_loss
        );
        runs.push(FoldRun {
            fold,
            train_seed,
            eval_seed,
            outcome,
            records,
        });
    }
    let per_fold: Vec<(usize, Vec<EpisodeRecord>)> =
        runs.iter().map(|r| (r.fold, r.records.clone())).collect();
    let cell = aggregate(mode, data.representation, &per_fold)?;
    Ok((cell, runs))
}

/// Stratified fold id per record, in record order.
pub fn assign_folds(
    records: &[LabeledRecord],
    k: usize,
    grouping: Grouping,
    seed: u64,
) -> Result<Vec<usize>, DatasetError> {
    let entries: Vec<CatalogEntry> = records
        .iter()
        .map(|lr| CatalogEntry {
            record_id: lr.record.record_id.clone(),
            images: Default::default(),
            label: lr.label,
            hr_bpm: lr.record.hr_bpm,
            qt_ms: lr.record.qt_ms,
            subject_id: lr.record.subject_id.clone(),
            fold_id: None,
        })
        .collect();
    let plan = make_folds(&entries, k, true, grouping, seed)?;
    Ok(entries
        .iter()
        .map(|e| plan.fold_of(&e.record_id).expect("every entry assigned"))
        .collect())
}
