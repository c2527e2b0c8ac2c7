use std::collections::BTreeSet;
use std::path::Path;

use fuelmap::datamodel::Provenance;
use fuelmap::ensemble::{table_folds, StackConfig};
use fuelmap::fixtures::{generate_world, write_world, WorldSpec};
use fuelmap::pipeline::{augment_in_folds, prepare, run_pipeline, Inputs, PipelineConfig, INCOMPLETE_MARKER};
use fuelmap::rng;
use fuelmap::Error;

fn small_world(seed: u64) -> WorldSpec {
    WorldSpec {
        plots_per_class: vec![30, 8, 8],
        holdout_per_class: 12,
        nonburnable_stands: 6,
        separation: 6.0,
        ..WorldSpec::separable(seed)
    }
}

fn config(dir: &Path, extra: &str) -> PipelineConfig {
    let world = generate_world(&small_world(2)).unwrap();
    let text = PipelineConfig::fixture_text(2, &world.schema) + extra;
    PipelineConfig::parse(&text, dir).unwrap()
}

#[test]
fn missing_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.cfg");
    std::fs::write(&path, "manifest = m.txt\nplots = p.csv\nholdout = h.csv\n").unwrap();
    match run_pipeline(&path) {
        Err(Error::Config(m)) => assert!(m.contains("seed"), "{m}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn failed_run_leaves_marker_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let world = generate_world(&small_world(2)).unwrap();
    write_world(dir.path(), &world).unwrap();
    std::fs::remove_file(dir.path().join("plots.csv")).unwrap();
    let path = dir.path().join("p.cfg");
    std::fs::write(&path, PipelineConfig::fixture_text(2, &world.schema)).unwrap();
    let err = run_pipeline(&path).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "ingest", .. }), "{err:?}");
    let out = dir.path().join("out");
    let marker = std::fs::read_to_string(out.join(INCOMPLETE_MARKER)).unwrap();
    assert!(marker.starts_with("stage=ingest\n"), "{marker}");
    assert!(marker.contains("plots.csv"), "{marker}");
    assert!(!out.join("model.fven").exists());
}

#[test]
fn synthetic_rows_share_training_folds() {
    let dir = tempfile::tempdir().unwrap();
    let world = generate_world(&small_world(5)).unwrap();
    let cfg = config(dir.path(), "");
    let prepared = prepare(Inputs::from_world(&world, cfg.seed).unwrap(), &cfg).unwrap();
    let labeled = prepared.labeled().unwrap();
    let groups = prepared.fold_groups();
    assert_eq!(groups.len(), labeled.len());

    // every pseudo row sits in the group of a field plot
    let field_groups: BTreeSet<usize> = groups[..prepared.field.len()].iter().copied().collect();
    assert_eq!(field_groups.len(), prepared.field.len());
    assert!(groups[prepared.field.len()..].iter().all(|g| field_groups.contains(g)));

    let train_seed = rng::derive(cfg.seed, 3);
    let aug = augment_in_folds(&labeled, groups.clone(), Some("gaussian_copula"), &cfg, train_seed, 9).unwrap();
    let all_groups = aug.groups.clone().unwrap();
    assert_eq!(all_groups.len(), aug.table.len());
    assert!(aug.balance.as_ref().unwrap().synthesized > 0);
    assert!(aug.table.rows()[labeled.len()..].iter().all(|r| r.provenance == Provenance::Synthetic));

    let stack = StackConfig {
        folds: cfg.folds,
        groups: Some(groups),
        greedy_iterations: cfg.greedy_iterations,
        seed: train_seed,
    };
    let (before, _) = table_folds(&labeled, &stack).unwrap();
    let (after, _) = table_folds(
        &aug.table,
        &StackConfig {
            groups: Some(all_groups.clone()),
            ..stack.clone()
        },
    )
    .unwrap();
    // a synthetic row lands in the fold of the real group it joined
    for (i, g) in all_groups.iter().enumerate().skip(labeled.len()) {
        let owner = all_groups.iter().position(|h| h == g).unwrap();
        assert!(owner < labeled.len());
        assert_eq!(after[i], before[owner], "row {i}");
    }

    let again = augment_in_folds(&labeled, prepared.fold_groups(), Some("gaussian_copula"), &cfg, train_seed, 9).unwrap();
    assert_eq!(again.table, aug.table);
}

#[test]
fn skipping_augmentation_keeps_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let world = generate_world(&small_world(6)).unwrap();
    let cfg = config(dir.path(), "synthesizer = none\n");
    assert!(cfg.synthesizer.is_none());
    let prepared = prepare(Inputs::from_world(&world, cfg.seed).unwrap(), &cfg).unwrap();
    let labeled = prepared.labeled().unwrap();
    let aug = augment_in_folds(&labeled, prepared.fold_groups(), None, &cfg, 1, 2).unwrap();
    assert_eq!(aug.table, labeled);
    assert!(aug.balance.is_none() && aug.fidelity.is_none());
}
