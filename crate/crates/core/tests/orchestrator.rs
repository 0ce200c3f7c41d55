use fedstone_core::corruption::{CorruptionPlan, SeverityTables};
use fedstone_core::datagen::{ImageShape, Source};
use fedstone_core::federation::{init_global, run_federation, Client, FederationConfig, RoundRecord};
use fedstone_core::orchestrator::{
    build_partition, frv_clients, pretrain_source, random_baseline, run_cell, run_clean_four_client, run_frv,
    run_lpo, select_optimal, AccuracyMatrix, DataSettings, Experiment, FrvSetup, GridSpec, LpoLink, PretrainSpec,
    Selection,
};
use fedstone_core::tensor::ModelSpec;
use fedstone_core::Error;
use proptest::prelude::*;

/// Round records without the wall-clock field.
fn untimed(records: &[RoundRecord]) -> Vec<RoundRecord> {
    records.iter().map(|r| RoundRecord { wall_time: 0.0, ..r.clone() }).collect()
}

const TABLE: &str = include_str!("fixtures/table1.csv");

fn small_data() -> DataSettings {
    DataSettings {
        shape: ImageShape::square(8, 3),
        num_per_class: 14,
        per_class_test: 4,
        validation_fraction: 0.1,
    }
}

fn small_config(seed: u64) -> FederationConfig {
    let spec = ModelSpec::new(small_data().shape.len(), vec![8], 6).unwrap();
    FederationConfig::new(spec, 1, 1, seed)
}

fn experiment(seed: u64) -> Experiment {
    let base = small_config(seed);
    let clients = [Source::A, Source::B]
        .into_iter()
        .map(|s| Client::new(s.code(), build_partition(s, &small_data(), seed).unwrap(), &base.norm).unwrap())
        .collect();
    let init = init_global(&base.model, seed, None).unwrap();
    Experiment { base, clients, init }
}

#[test]
fn table_selection_picks_the_bold_cell() {
    let m = AccuracyMatrix::from_csv(TABLE).unwrap();
    assert_eq!(m.n_e, (1..=10).collect::<Vec<_>>());
    assert_eq!(m.n_r, (1..=10).collect::<Vec<_>>());
    assert_eq!(m.get(8, 1), Some(0.540));
    let best = select_optimal(&m).unwrap();
    assert_eq!((best.n_e, best.n_r), (7, 10));
    assert_eq!(best.accuracy, 0.841);
}

#[test]
fn all_equal_matrix_selects_the_cheapest_cell() {
    let m = AccuracyMatrix::new(vec![2, 3, 5], vec![4, 6], vec![vec![0.5; 2]; 3]).unwrap();
    assert_eq!(select_optimal(&m).unwrap(), Selection { n_e: 2, n_r: 4, accuracy: 0.5 });
}

#[test]
fn ties_prefer_fewer_rounds() {
    let mut values = vec![vec![0.1; 5]; 4];
    values[1][4] = 0.9; // (2, 5)
    values[3][2] = 0.9; // (4, 3)
    let m = AccuracyMatrix::new((1..=4).collect(), (1..=5).collect(), values).unwrap();
    let best = select_optimal(&m).unwrap();
    assert_eq!((best.n_e, best.n_r), (4, 3));
}

#[test]
fn selection_rejects_nan_and_empty() {
    let m = AccuracyMatrix::new(vec![1], vec![1, 2], vec![vec![0.3, f64::NAN]]).unwrap();
    assert!(matches!(select_optimal(&m), Err(Error::Input(_))));
    let empty = AccuracyMatrix::new(vec![], vec![], vec![]).unwrap();
    assert!(matches!(select_optimal(&empty), Err(Error::Input(_))));
    assert!(AccuracyMatrix::new(vec![1, 2], vec![1], vec![vec![0.1]]).is_err());
}

fn brute_force(m: &AccuracyMatrix) -> (usize, usize, f64) {
    let mut cells = Vec::new();
    for (i, &e) in m.n_e.iter().enumerate() {
        for (j, &r) in m.n_r.iter().enumerate() {
            cells.push((e, r, m.values[i][j]));
        }
    }
    let max = cells.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
    cells.into_iter().filter(|c| c.2 == max).min_by_key(|c| (c.1, c.0)).unwrap()
}

proptest! {
    #[test]
    fn selection_matches_brute_force(
        rows in 1usize..7,
        cols in 1usize..7,
        raw in prop::collection::vec(0u8..5, 36),
    ) {
        // Few distinct values, so ties are common.
        let values = (0..rows).map(|i| (0..cols).map(|j| f64::from(raw[i * 6 + j]) / 4.0).collect()).collect();
        let n_e: Vec<usize> = (0..rows).map(|i| 2 * i + 1).collect();
        let n_r: Vec<usize> = (0..cols).map(|j| 3 * j + 1).collect();
        let m = AccuracyMatrix::new(n_e, n_r, values).unwrap();
        let got = select_optimal(&m).unwrap();
        let (e, r, a) = brute_force(&m);
        prop_assert_eq!((got.n_e, got.n_r, got.accuracy), (e, r, a));
    }
}

#[test]
fn csv_round_trips_exactly() {
    let m = AccuracyMatrix::new(vec![1, 4], vec![2, 3, 9], vec![vec![0.1, 1.0 / 3.0, 0.5], vec![2f64.sqrt() / 2.0, 0.0, 1.0]]).unwrap();
    let text = m.to_csv();
    assert!(text.starts_with("n_e\\n_r,2,3,9\n4,") || text.starts_with("n_e\\n_r,2,3,9\n1,"));
    let back = AccuracyMatrix::from_csv(&text).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.content_hash(), m.content_hash());
    assert_eq!(AccuracyMatrix::from_csv(TABLE).unwrap().to_csv().lines().count(), 11);
}

#[test]
fn grid_validation_names_the_axis() {
    let bad = GridSpec { n_e: vec![0, 1], n_r: vec![1] };
    let msg = bad.validate().unwrap_err().to_string();
    assert!(msg.contains("grid.n_e"), "{msg}");
    let bad = GridSpec { n_e: vec![1], n_r: vec![3, 2] };
    assert!(bad.validate().unwrap_err().to_string().contains("grid.n_r"));
    assert!(GridSpec::desk().validate().is_ok());
    assert!(GridSpec::full().validate().is_ok());
}

#[test]
fn degenerate_grid_equals_a_direct_run() {
    let exp = experiment(5);
    let grid = GridSpec { n_e: vec![2], n_r: vec![3] };
    let result = run_lpo(&grid, &exp).unwrap();
    let cfg = FederationConfig { n_rounds: 3, local_epochs: 2, ..exp.base.clone() };
    let direct = run_federation(&cfg, &exp.clients, exp.init.clone()).unwrap();
    assert_eq!(result.matrix.values, vec![vec![direct.records[2].global_accuracy]]);
    assert_eq!(result.best.n_e, 2);
    assert_eq!(untimed(&result.row_records[0]), untimed(&direct.records));
}

#[test]
fn shared_rows_equal_independent_cells_in_any_order() {
    let exp = experiment(8);
    let grid = GridSpec { n_e: vec![1, 2], n_r: vec![1, 3] };
    let result = run_lpo(&grid, &exp).unwrap();
    for &(e, r) in &[(2, 3), (1, 1), (2, 1), (1, 3)] {
        let run = run_cell(&exp, e, r).unwrap();
        assert_eq!(
            run.records.last().unwrap().global_accuracy.to_bits(),
            result.matrix.get(e, r).unwrap().to_bits(),
            "cell ({e}, {r})"
        );
    }
}

#[test]
fn grid_is_reproducible_per_seed() {
    let grid = GridSpec { n_e: vec![1, 2, 3], n_r: vec![1, 2, 3] };
    for seed in [11, 12] {
        let a = run_lpo(&grid, &experiment(seed)).unwrap();
        let b = run_lpo(&grid, &experiment(seed)).unwrap();
        assert_eq!(a.matrix.to_csv(), b.matrix.to_csv());
        assert_eq!(a.best, b.best);
    }
}

#[test]
fn failing_cell_is_named() {
    let mut exp = experiment(1);
    exp.base.batch_size = 0;
    let err = run_lpo(&GridSpec { n_e: vec![3], n_r: vec![2] }, &exp).unwrap_err();
    assert!(err.to_string().contains("cell (n_e=3, n_r="), "{err}");
}

#[test]
fn pretraining_is_seeded_and_zero_epochs_is_init() {
    let cfg = small_config(4);
    let shape = small_data().shape;
    let off = PretrainSpec::default();
    assert!(!off.enabled);
    assert_eq!(pretrain_source(&off, &cfg, shape, 4).unwrap(), None);

    let zero = PretrainSpec { enabled: true, epochs: 0, num_per_class: 5 };
    let init = init_global(&cfg.model, 4, None).unwrap();
    assert_eq!(pretrain_source(&zero, &cfg, shape, 4).unwrap(), Some(init.clone()));

    let on = PretrainSpec { enabled: true, epochs: 2, num_per_class: 5 };
    let a = pretrain_source(&on, &cfg, shape, 4).unwrap().unwrap();
    let b = pretrain_source(&on, &cfg, shape, 4).unwrap().unwrap();
    assert_eq!(a, b);
    assert_ne!(a, init);

    let wrong = pretrain_source(&on, &cfg, ImageShape::square(4, 3), 4).unwrap_err();
    assert!(matches!(wrong, Error::Config(_)));
}

fn frv_setup(seed: u64, plan: CorruptionPlan) -> FrvSetup {
    let exp = experiment(seed);
    FrvSetup {
        base: exp.base.clone(),
        partitions: [exp.clients[0].data().clone(), exp.clients[1].data().clone()],
        init: exp.init,
        plan,
        corruption_seed: seed + 100,
    }
}

fn link(n_e: usize, n_r: usize) -> LpoLink {
    let m = AccuracyMatrix::new(vec![n_e], vec![n_r], vec![vec![0.5]]).unwrap();
    LpoLink { best: select_optimal(&m).unwrap(), grid_hash: m.content_hash() }
}

#[test]
fn identity_corruption_reproduces_the_clean_run() {
    let setup = frv_setup(3, CorruptionPlan { tables: SeverityTables::identity(), fixed_severity: None });
    let l = link(2, 2);
    let frv = run_frv(&l, &setup).unwrap();
    let clean = run_clean_four_client(&l, &setup).unwrap();
    assert_eq!(frv.final_params, clean.final_params);
    assert_eq!(frv.final_accuracy.to_bits(), clean.final_accuracy.to_bits());
    assert_eq!(frv.applied, (2, 2));
    assert_eq!(frv.clients, ["A-good", "A-corrupted", "B-good", "B-corrupted"]);
}

#[test]
fn frv_corrupts_only_the_corrupted_halves() {
    let setup = frv_setup(6, CorruptionPlan::default());
    let clients = frv_clients(&setup, true).unwrap();
    for c in &clients {
        let tagged = c.data().train.iter().chain(&c.data().test).all(|s| s.corruption.is_some());
        let clean = c.data().train.iter().chain(&c.data().test).all(|s| s.corruption.is_none());
        if c.id().ends_with("-corrupted") {
            assert!(tagged, "{}", c.id());
        } else {
            assert!(clean, "{}", c.id());
        }
    }
    let again = frv_clients(&setup, true).unwrap();
    for (a, b) in clients.iter().zip(&again) {
        assert_eq!(a.data(), b.data());
    }
}

#[test]
fn frv_is_deterministic_and_linked() {
    let setup = frv_setup(9, CorruptionPlan::default());
    let l = link(1, 2);
    let a = run_frv(&l, &setup).unwrap();
    let b = run_frv(&l, &setup).unwrap();
    assert_eq!(a.final_params, b.final_params);
    assert_eq!(untimed(&a.round_records), untimed(&b.round_records));
    assert_eq!(a.datasets, b.datasets);
    assert_eq!(a.lpo, l);
    assert_eq!(a.round_records.len(), 2);
    assert_eq!(a.datasets.len(), 4);
    let base = random_baseline(&setup.base, &frv_clients(&setup, true).unwrap(), 9).unwrap();
    assert!((0.0..=1.0).contains(&base));
}

#[test]
fn link_detects_a_changed_grid() {
    let m = AccuracyMatrix::new(vec![1, 2], vec![1], vec![vec![0.4], vec![0.6]]).unwrap();
    let l = LpoLink { best: select_optimal(&m).unwrap(), grid_hash: m.content_hash() };
    l.verify(&m).unwrap();
    let mut edited = m.clone();
    edited.values[0][0] = 0.7;
    assert!(matches!(l.verify(&edited), Err(Error::Provenance(_))));
    let forged = LpoLink { best: Selection { n_e: 1, n_r: 1, accuracy: 0.4 }, grid_hash: m.content_hash() };
    assert!(matches!(forged.verify(&m), Err(Error::Provenance(_))));
}
