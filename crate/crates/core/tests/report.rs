mod common;

use chromaqt::dataset::Representation;
use chromaqt::fewshot::EpisodeRecord;
use chromaqt::report::{
    aggregate, metrics_from_counts, ordering_checks, parse_table_csv, render_table,
    render_table_csv, ConfusionCounts, ExperimentCell, LearningMode, MeanValue, Metric,
    MetricSummary, ReportError, TABLE_COLUMNS,
};
use proptest::prelude::*;

#[test]
fn metrics_match_brute_force_recount() {
    assert_eq!(common::metric_recount_mismatches(1000, 1), 0);
    assert_eq!(common::hand_example_f1(), "0.8571");
}

fn record(episode: usize, tp: u32, fp: u32, tn: u32, fn_: u32, loss: f64) -> EpisodeRecord {
    EpisodeRecord {
        episode,
        counts: ConfusionCounts { tp, fp, tn, fn_ },
        loss,
    }
}

#[test]
fn two_stage_mean_and_absent_values() {
    let folds = vec![
        (
            0,
            vec![record(0, 5, 0, 5, 0, 0.1), record(1, 0, 0, 5, 5, 0.3)],
        ),
        (
            1,
            vec![record(0, 5, 5, 0, 0, 0.5), record(1, 4, 1, 4, 1, 0.7)],
        ),
    ];
    let cell = aggregate(LearningMode::FewShot, Representation::ALL[0], &folds).unwrap();
    // fold 0 accuracies 1.0 and 0.5; fold 1: 0.5 and 0.8
    assert!((cell.folds[0].summary.accuracy.mean.unwrap() - 0.75).abs() < 1e-12);
    assert!((cell.folds[1].summary.accuracy.mean.unwrap() - 0.65).abs() < 1e-12);
    assert!((cell.mean.accuracy.mean.unwrap() - 0.70).abs() < 1e-12);
    // precision absent in fold 0 episode 1 (nothing predicted positive)
    assert_eq!(cell.folds[0].summary.precision.absent, 1);
    assert!((cell.mean.loss.mean.unwrap() - 0.4).abs() < 1e-12);

    let uneven = vec![(0, vec![record(0, 1, 0, 1, 0, 0.1)]), (1, vec![])];
    assert_eq!(
        aggregate(LearningMode::OneShot, Representation::ALL[1], &uneven).unwrap_err(),
        ReportError::UnevenEpisodes {
            fold: 1,
            have: 0,
            expected: 1
        }
    );
}

proptest! {
    #[test]
    fn accuracy_is_bounded_by_its_parts(tp in 0u32..10, fp in 0u32..10, tn in 0u32..10, fn_ in 0u32..10) {
        prop_assume!(tp + fp + tn + fn_ > 0);
        let m = metrics_from_counts(&ConfusionCounts { tp, fp, tn, fn_ });
        let acc = m.accuracy.value().unwrap();
        prop_assert!((0.0..=1.0).contains(&acc));
        if let (Some(s), Some(t)) = (m.sensitivity.value(), m.specificity.value()) {
            prop_assert!(acc >= s.min(t) - 1e-12 && acc <= s.max(t) + 1e-12);
        }
        if let Some(f) = m.f1.value() {
            let (p, s) = (m.precision.value().unwrap(), m.sensitivity.value().unwrap());
            prop_assert!(f >= p.min(s) - 1e-12 && f <= p.max(s) + 1e-12);
        }
    }
}

/// A cell whose fold means equal the given percentages and loss.
fn cell(mode: LearningMode, rep: Representation, values: [f64; 6]) -> ExperimentCell {
    let mv = |v: f64| MeanValue {
        mean: Some(v),
        defined: 1,
        absent: 0,
    };
    let summary = MetricSummary {
        accuracy: mv(values[0] / 100.0),
        sensitivity: mv(values[1] / 100.0),
        specificity: mv(values[2] / 100.0),
        precision: mv(values[3] / 100.0),
        f1: mv(values[4] / 100.0),
        loss: mv(values[5]),
    };
    ExperimentCell {
        mode,
        representation: rep,
        folds: (0..5)
            .map(|fold| chromaqt::report::FoldResult {
                fold,
                episodes: 100,
                summary,
            })
            .collect(),
        mean: summary,
    }
}

/// Published tables, columns in representation order, rows in metric order.
const FEW_SHOT: [[f64; 4]; 6] = [
    [92.15, 98.1, 87.32, 93.69],
    [87.38, 97.8, 82.0, 90.56],
    [96.92, 98.4, 92.64, 96.82],
    [97.04, 98.53, 92.53, 96.96],
    [91.32, 98.06, 85.33, 93.05],
    [0.26, 0.09, 0.47, 0.22],
];
const ONE_SHOT: [[f64; 4]; 6] = [
    [89.03, 96.61, 80.68, 87.32],
    [83.14, 95.54, 74.68, 83.68],
    [94.92, 97.68, 86.68, 90.96],
    [95.70, 97.94, 86.84, 91.65],
    [87.23, 96.40, 77.82, 86.27],
    [0.45, 0.11, 0.66, 0.47],
];

fn published_cells() -> Vec<ExperimentCell> {
    let mut cells = Vec::new();
    for (mode, table) in [
        (LearningMode::FewShot, FEW_SHOT),
        (LearningMode::OneShot, ONE_SHOT),
    ] {
        for (col, rep) in Representation::ALL.into_iter().enumerate() {
            cells.push(cell(mode, rep, std::array::from_fn(|row| table[row][col])));
        }
    }
    cells
}

#[test]
fn published_tables_round_trip_through_the_csv_layout() {
    let cells = published_cells();
    for (mode, table) in [
        (LearningMode::FewShot, FEW_SHOT),
        (LearningMode::OneShot, ONE_SHOT),
    ] {
        let csv = render_table_csv(mode, &cells).unwrap();
        assert_eq!(
            csv.lines().next().unwrap(),
            format!("metric,{}", TABLE_COLUMNS.join(","))
        );
        let rows = parse_table_csv(&csv).unwrap();
        assert_eq!(rows.len(), 6);
        for ((label, values), (metric, want)) in rows.iter().zip(Metric::ALL.iter().zip(table)) {
            assert_eq!(label, metric.label());
            for (v, w) in values.iter().zip(want) {
                assert!((v.unwrap() - w).abs() < 0.006, "{label}: {v:?} vs {w}");
            }
        }
        let text = render_table(mode, &cells).unwrap();
        assert!(text.starts_with(&format!("{mode} results, mean over 5 folds")));
        assert_eq!(text.lines().count(), 9);
    }
}

#[test]
fn published_tables_satisfy_the_effect_orderings() {
    let checks = ordering_checks(&published_cells(), 3.0, 2.0).unwrap();
    assert_eq!(checks.len(), 12);
    for c in &checks {
        assert!(c.holds, "{c}");
    }
}

#[test]
fn ordering_checks_flag_a_reversed_cell() {
    let mut cells = published_cells();
    cells[0] = cell(
        LearningMode::FewShot,
        Representation::ALL[0],
        [80.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    );
    let failed: Vec<String> = ordering_checks(&cells, 3.0, 2.0)
        .unwrap()
        .into_iter()
        .filter(|c| !c.holds)
        .map(|c| c.description)
        .collect();
    assert_eq!(
        failed,
        [
            "few-shot single_color > single_gray",
            "single_color few-shot >= one-shot"
        ]
    );
    assert!(matches!(
        ordering_checks(&cells[1..], 3.0, 2.0),
        Err(ReportError::MissingCell { .. })
    ));
}

#[test]
fn missing_cells_are_reported() {
    let cells = published_cells();
    let err = render_table(LearningMode::FewShot, &cells[1..]).unwrap_err();
    assert_eq!(
        err.to_string(),
        "table for few-shot is missing representation single_color"
    );
}
