use meta_reinit::harness::{
    adapt_speaker, curve_rows, evaluate, matrix_rows, pretrain_base, ratio_subset, read_csv, run_experiment,
    run_matrix, sweep_rows, write_csv, AdaptConfig, ExperimentConfig, NetworkConfig, PretrainConfig, Strategy,
};
use meta_reinit::meta::MetaConfig;
use meta_reinit::speakers::{generate_corpus, make_dataset, make_speaker, DataConfig, SeverityBand, NORMAL_ID_BASE};

fn small() -> ExperimentConfig {
    let d = ExperimentConfig::default();
    ExperimentConfig {
        data: DataConfig {
            utts_per_speaker: 12,
            normal_speakers: 3,
            dysarthric_per_band: 1,
            ..DataConfig::default()
        },
        network: NetworkConfig {
            hidden_dims: vec![12],
            bn_after: vec![true],
        },
        pretrain: PretrainConfig {
            epochs: 6,
            ..PretrainConfig::default()
        },
        meta: MetaConfig {
            outer_steps: 3,
            inner_steps: 2,
            inner_batch_size: 3,
            val_batch_size: 2,
            ..d.meta.clone()
        },
        adapt: AdaptConfig {
            epochs: 3,
            decay_after: 1,
            lr: 0.02,
            ..AdaptConfig::default()
        },
        seeds: vec![1, 2],
        ..d
    }
}

#[test]
fn pretraining_lowers_loss_and_beats_an_untrained_model() {
    let cfg = small();
    let spec = cfg.network_spec();
    let corpus = generate_corpus(&cfg.data, 3).unwrap();
    let (theta, bn, rep) = pretrain_base(&spec, &corpus.normal, &cfg.pretrain, 3).unwrap();
    assert!(rep.final_loss < rep.initial_loss);
    assert_eq!(rep.epoch_losses.len(), cfg.pretrain.epochs);

    let held = make_speaker(NORMAL_ID_BASE + 77, SeverityBand::Normal, 3, cfg.data.feature_dim);
    let task = make_dataset(&held, &corpus.vocab, 12, cfg.data.max_label_len, 99).unwrap();
    let (theta0, bn0, _) = pretrain_base(
        &spec,
        &corpus.normal,
        &PretrainConfig {
            epochs: 0,
            ..cfg.pretrain.clone()
        },
        3,
    )
    .unwrap();
    let trained = evaluate(&spec, &theta, &bn, &task.test_samples())
        .unwrap()
        .rate()
        .unwrap();
    let untrained = evaluate(&spec, &theta0, &bn0, &task.test_samples())
        .unwrap()
        .rate()
        .unwrap();
    assert!(trained < untrained, "{trained} vs {untrained}");
}

#[test]
fn zero_pretrain_epochs_return_the_initialization() {
    let cfg = small();
    let spec = cfg.network_spec();
    let corpus = generate_corpus(&cfg.data, 3).unwrap();
    let pc = PretrainConfig {
        epochs: 0,
        ..cfg.pretrain.clone()
    };
    let (a, bn_a, rep) = pretrain_base(&spec, &corpus.normal, &pc, 3).unwrap();
    let (b, _, _) = pretrain_base(&spec, &corpus.normal, &pc, 3).unwrap();
    assert!(a.bitwise_eq(&b));
    assert!(bn_a.bitwise_eq(&spec.init_bn_stats()));
    assert_eq!(rep.initial_loss, rep.final_loss);
    assert!(pretrain_base(&spec, &[], &pc, 3).is_err());
}

#[test]
fn ratio_subsets_are_nested() {
    let corpus = generate_corpus(&DataConfig::default(), 4).unwrap();
    let task = &corpus.dysarthric[2];
    let full = ratio_subset(task, 1.0, 8).unwrap();
    assert_eq!(full.len(), task.adaptation.len());
    let mut prev: Vec<usize> = Vec::new();
    for r in [0.1, 0.25, 0.5, 1.0] {
        let s = ratio_subset(task, r, 8).unwrap();
        assert!(s.starts_with(&prev));
        prev = s;
    }
    assert!(ratio_subset(task, 0.0, 8).is_err());
    assert!(ratio_subset(task, 1.5, 8).is_err());
}

#[test]
fn adaptation_trajectory_shape_and_zero_lr_flatness() {
    let cfg = small();
    let spec = cfg.network_spec();
    let corpus = generate_corpus(&cfg.data, 5).unwrap();
    let (theta, bn, _) = pretrain_base(&spec, &corpus.normal, &cfg.pretrain, 5).unwrap();
    let target = &corpus.dysarthric[0];
    let out = adapt_speaker(&spec, &theta, &bn, target, &cfg.adapt, 1).unwrap();
    assert_eq!(out.trajectory.len(), cfg.adapt.epochs + 1);
    assert!(out
        .trajectory
        .iter()
        .enumerate()
        .all(|(i, p)| p.epoch == i && p.ter >= 0.0));

    let frozen = AdaptConfig {
        lr: 0.0,
        freeze_bn: true,
        ..cfg.adapt.clone()
    };
    let flat = adapt_speaker(&spec, &theta, &bn, target, &frozen, 1).unwrap();
    assert!(flat.theta.bitwise_eq(&theta));
    assert!(flat
        .trajectory
        .iter()
        .all(|p| p.ter == flat.trajectory[0].ter && p.loss == flat.trajectory[0].loss));
}

#[test]
fn matrix_is_complete_and_deterministic() {
    let cfg = small();
    let report = run_matrix(&cfg).unwrap();
    assert_eq!(report.cells.len(), cfg.seeds.len() * 4 * Strategy::ALL.len());
    for c in &report.cells {
        let expected = if c.strategy == Strategy::Base {
            1
        } else {
            cfg.adapt.epochs + 1
        };
        assert_eq!(c.trajectory.len(), expected);
    }
    let mut a = Vec::new();
    write_csv(&matrix_rows(&report), &mut a).unwrap();
    let mut b = Vec::new();
    write_csv(&matrix_rows(&run_matrix(&cfg).unwrap()), &mut b).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a.clone()).unwrap();
    assert!(text.starts_with("target_id,strategy,ratio,epoch,seed,ter,loss\n"));
    let rows = read_csv(a.as_slice()).unwrap();
    assert_eq!(rows.len(), report.cells.len());
    assert!(read_csv(&b"a,b\n1,2\n"[..]).is_err());
}

#[test]
fn zero_outer_steps_collapse_meta_cells_onto_base_adapt() {
    for meta in [
        MetaConfig {
            outer_steps: 0,
            ..small().meta
        },
        MetaConfig {
            eta: 0.0,
            ..small().meta
        },
    ] {
        let cfg = ExperimentConfig {
            meta,
            seeds: vec![3],
            ..small()
        };
        let report = run_matrix(&cfg).unwrap();
        for target in 0..4 {
            let cell = |s: Strategy| {
                report
                    .cells
                    .iter()
                    .find(|c| c.target_id == target && c.strategy == s)
                    .unwrap()
                    .trajectory
                    .clone()
            };
            let base = cell(Strategy::BaseAdapt);
            assert_eq!(cell(Strategy::MamlAdapt), base);
            assert_eq!(cell(Strategy::ReptileAdapt), base);
        }
    }
}

#[test]
fn sweep_full_ratio_matches_matrix_and_curves_have_every_epoch() {
    let cfg = small();
    let report = run_experiment(&cfg, &Strategy::ALL, &[0.5, 1.0]).unwrap();
    let matrix = run_matrix(&cfg).unwrap();
    for c in matrix.cells.iter() {
        let twin = report
            .cells
            .iter()
            .find(|d| d.seed == c.seed && d.target_id == c.target_id && d.strategy == c.strategy && d.ratio == 1.0)
            .unwrap();
        assert_eq!(twin.trajectory, c.trajectory);
    }
    let sweep = sweep_rows(&report, &[0.5, 1.0], cfg.adapt.epochs);
    // per strategy and ratio: one row per seed plus a median row
    assert_eq!(sweep.len(), Strategy::ALL.len() * 2 * (cfg.seeds.len() + 1));
    let curves = curve_rows(&report, 1.0, cfg.adapt.epochs);
    for s in Strategy::ALL {
        let medians: Vec<_> = curves
            .iter()
            .filter(|r| r.strategy == s.name() && r.seed == "median")
            .collect();
        assert_eq!(medians.len(), cfg.adapt.epochs + 1);
    }
}

#[test]
fn unknown_target_is_an_error() {
    let mut cfg = small();
    cfg.eval.targets = Some(vec![42]);
    assert!(run_matrix(&cfg).is_err());
}
