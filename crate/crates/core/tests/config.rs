use fedstone_core::config::{RunConfig, TrainMode};
use fedstone_core::federation::AggregationMode;
use fedstone_core::Error;

fn config_error(text: &str) -> String {
    match RunConfig::from_toml(text) {
        Err(Error::Config(msg)) => msg,
        other => panic!("expected a configuration error, got {other:?}"),
    }
}

#[test]
fn version_only_file_uses_defaults() {
    let cfg = RunConfig::from_toml("config_version = 1").unwrap();
    assert_eq!(cfg, RunConfig::default_config());
    assert_eq!(cfg.model.hidden_dims, vec![16]);
    assert_eq!(cfg.data.num_per_class, 2000);
    assert_eq!(cfg.data.per_class_test, 200);
    assert_eq!(cfg.federation.batch_size, 4);
    assert_eq!(cfg.optimizer.learning_rate, 1e-4);
    assert_eq!(cfg.federation.aggregation, AggregationMode::ExampleCount);
    assert_eq!(cfg.federation.mode, TrainMode::Federated);
    assert_eq!(cfg.grid.n_e, vec![1, 2, 4, 7, 10]);
    assert_eq!(cfg.grid.n_r, vec![1, 2, 4, 7, 10]);
}

#[test]
fn rendering_round_trips() {
    let mut cfg = RunConfig::default_config();
    cfg.seed = 42;
    cfg.frv.fixed_severity = Some(3);
    let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn errors_name_the_offending_field() {
    let cases = [
        ("[grid]\nn_e = [0, 2]", "grid.n_e"),
        ("[grid]\nn_r = [4, 2]", "grid.n_r"),
        ("[federation]\nlocal_epochs = 0", "federation.local_epochs"),
        ("[federation]\nn_rounds = 0", "federation.n_rounds"),
        ("[federation]\nbatch_size = 0", "federation.batch_size"),
        ("[federation]\nclients = [\"A\", \"A\"]", "federation.clients"),
        ("[federation]\nclients = [\"S\"]", "federation.clients"),
        ("[federation]\nmode = \"centralized\"", "federation.mode"),
        ("[data]\nper_class_test = 5000", "data.per_class_test"),
        ("[data]\nvalidation_fraction = 1.0", "data.validation_fraction"),
        ("[model]\nhidden_dims = [0]", "model.hidden_dims"),
        ("[frv]\nfixed_severity = 6", "frv.fixed_severity"),
        ("[optimizer]\nweight_decay = -1.0", "optimizer.weight_decay"),
    ];
    for (body, field) in cases {
        let msg = config_error(&format!("config_version = 1\n{body}\n"));
        assert!(msg.contains(field), "{body:?}: {msg}");
    }
}

#[test]
fn unknown_keys_and_versions_are_rejected() {
    let msg = config_error("config_version = 1\n[federation]\nlocal_epoch = 3\n");
    assert!(msg.contains("local_epoch"), "{msg}");
    config_error("config_version = 1\nsead = 3\n");
    assert!(config_error("config_version = 2").contains("config_version"));
}

#[test]
fn hash_ignores_output_location_and_grid() {
    let a = RunConfig::default_config();
    let mut b = a.clone();
    b.output_dir = "elsewhere".into();
    b.grid.n_e = (1..=10).collect();
    assert_eq!(a.content_hash(), b.content_hash());
    b.seed = 1;
    assert_ne!(a.content_hash(), b.content_hash());
    assert_eq!(a.content_hash().len(), 64);
}

#[test]
fn derived_settings_follow_the_file() {
    let cfg = RunConfig::from_toml(
        "config_version = 1\nseed = 9\n[data]\nimage_size = 8\nchannels = 3\n[federation]\nlocal_epochs = 2\nn_rounds = 3\n",
    )
    .unwrap();
    let fed = cfg.federation_config().unwrap();
    assert_eq!(fed.model.input_dim, 8 * 8 * 3);
    assert_eq!(fed.model.num_classes, 6);
    assert_eq!((fed.local_epochs, fed.n_rounds, fed.seed), (2, 3, 9));
    assert_eq!(cfg.corruption_plan().fixed_severity, None);
}
