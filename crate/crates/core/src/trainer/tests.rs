use super::*;
use crate::mesh_graph::{build_node_graph, structured_hex_grid};
use crate::surrogate::{ModelConfig, ModelKind};
use crate::synth::{generate_case, single_hex_case, BeamSpec, MeshScale};
use crate::case_store::apply_norm;

fn tiny_cases(n: usize, frames: usize) -> Vec<CaseTrajectory> {
    let pairs = [[0.0, 0.0], [-100.0, 50.0], [150.0, -200.0], [25.0, 75.0]];
    pairs[..n]
        .iter()
        .map(|&o| generate_case(&BeamSpec::default(), MeshScale::Tiny, o, frames).unwrap())
        .collect()
}

fn small_config(kind: ModelKind, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 2,
        model: ModelConfig {
            kind,
            hidden: 6,
            mlp_width: 6,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn laplacian_penalty_oracles() {
    let (coords, conn) = structured_hex_grid([1, 1, 1], [1.0; 3]);
    let g = build_node_graph(&conn, 8).unwrap();
    let mut spike = vec![0.0; 8];
    spike[0] = 1.0;
    // 1 at the spike, (1/3)² at each of its three neighbours
    assert!((laplacian_reg(&spike, 1, &g).unwrap() - 4.0 / 3.0).abs() < 1e-15);
    assert_eq!(laplacian_reg(&[2.5; 24], 3, &g).unwrap(), 0.0);
    let _ = coords;

    // linear in x along a 4-element bar: only the 8 end nodes contribute (1/3)²
    let (coords, conn) = structured_hex_grid([4, 1, 1], [1.0; 3]);
    let g = build_node_graph(&conn, coords.len()).unwrap();
    let lin: Vec<f64> = coords.iter().map(|c| 3.0 * c[0] - 1.0).collect();
    assert!((laplacian_reg(&lin, 1, &g).unwrap() - 8.0 * 1.0).abs() < 1e-12);
    assert!(laplacian_reg(&lin[1..], 1, &g).is_err());
}

#[test]
fn rollout_loss_components() {
    let case = single_hex_case(3).unwrap();
    let stats = compute_norm_stats(&[&case]).unwrap();
    let g = build_node_graph(&case.connectivity, 8).unwrap();
    let norm = |x: &[f64], st| apply_norm(x, 1, st).unwrap();
    let exact = RolloutResult {
        n_nodes: 8,
        n_elems: 1,
        n_frames: 3,
        u: norm(&case.u, &stats.u),
        s: norm(&case.s, &stats.s),
        peeq: norm(&case.peeq, &stats.peeq),
        rf2: norm(&case.rf2, &stats.rf2),
        u_phys: vec![],
        s_phys: vec![],
        peeq_phys: vec![],
        rf2_phys: vec![],
    };
    let plain = LossWeights {
        laplacian: 0.0,
        ..LossWeights::default()
    };
    assert_eq!(rollout_loss(&exact, &case, &stats, &g, &plain).unwrap(), 0.0);
    let mut off = exact.clone();
    off.s.iter_mut().for_each(|v| *v += 0.5);
    off.rf2.iter_mut().for_each(|v| *v -= 2.0);
    let w = LossWeights {
        stress: 2.0,
        rf2: 0.5,
        ..plain
    };
    assert!((rollout_loss(&off, &case, &stats, &g, &w).unwrap() - (2.0 * 0.25 + 0.5 * 4.0)).abs() < 1e-12);
    assert!(LossWeights { peeq: -1.0, ..plain }.validate().is_err());
}

#[test]
fn tape_loss_matches_plain_loss() {
    let cases = tiny_cases(2, 4);
    let refs: Vec<&CaseTrajectory> = cases.iter().collect();
    let stats = compute_norm_stats(&refs).unwrap();
    for kind in [ModelKind::Dual, ModelKind::Baseline] {
        let mut cfg = small_config(kind, 1).model;
        cfg.stress_feedback = kind == ModelKind::Dual;
        let params = SurrogateParams::init(&cfg, 5).unwrap();
        let st = statics(&refs, &cfg).unwrap();
        let st_refs: Vec<&CaseStatic> = st.iter().collect();
        let w = LossWeights::default();
        let (tape_loss, _) = batch_gradients(&params, &st_refs, &refs, &stats, &w).unwrap();
        let plain = mean_rollout_loss(&params, &st, &refs, &stats, &w).unwrap();
        assert!((tape_loss - plain).abs() < 1e-10 * plain.max(1.0), "{kind}: {tape_loss} vs {plain}");
    }
}

#[test]
fn full_model_gradient_matches_finite_differences() {
    let case = single_hex_case(3).unwrap();
    let stats = compute_norm_stats(&[&case]).unwrap();
    for kind in [ModelKind::Dual, ModelKind::Baseline] {
        let cfg = ModelConfig {
            kind,
            hidden: 3,
            mlp_width: 3,
            stress_feedback: true,
            ..ModelConfig::default()
        };
        let mut params = SurrogateParams::init(&cfg, 42).unwrap();
        // nonzero biases so every bias path is exercised
        for (name, m) in params.names.iter().zip(params.tensors.iter_mut()) {
            if name.ends_with("bias") || name.ends_with("b1") || name.ends_with("b2") {
                m.data.iter_mut().enumerate().for_each(|(i, v)| *v = 0.1 * ((i as f64) * 0.7).sin());
            }
        }
        let st = CaseStatic::from_case(&case, cfg.lambda_max).unwrap();
        let w = LossWeights::default();
        let loss = |p: &SurrogateParams| batch_gradients(p, &[&st], &[&case], &stats, &w).unwrap();
        let (_, grads) = loss(&params);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for k in 0..params.tensors.len() {
            for i in 0..params.tensors[k].len() {
                let mut plus = params.clone();
                plus.tensors[k].data[i] += h;
                let mut minus = params.clone();
                minus.tensors[k].data[i] -= h;
                let fd = (loss(&plus).0 - loss(&minus).0) / (2.0 * h);
                let a = grads[k].data[i];
                worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-5));
            }
        }
        assert!(worst < 1e-4, "{kind}: worst relative error {worst:e}");
        let audit = gradient_audit(&case, &cfg, &w, 42, h).unwrap();
        assert_eq!(audit.parameter_count, params.count());
        assert!(audit.max_relative_error < 1e-4);
    }
}

#[test]
fn training_is_deterministic_and_keeps_the_best_epoch() {
    let cases = tiny_cases(3, 4);
    let refs: Vec<&CaseTrajectory> = cases.iter().collect();
    let cfg = small_config(ModelKind::Dual, 6);
    let mut seen = 0;
    let a = train(&refs[..2], &refs[2..], &cfg, |_| seen += 1).unwrap();
    let b = train(&refs[..2], &refs[2..], &cfg, |_| {}).unwrap();
    assert_eq!(seen, 6);
    assert_eq!(a.history, b.history);
    assert_eq!(a.best, b.best);
    let best = a
        .history
        .iter()
        .min_by(|x, y| x.val_loss.total_cmp(&y.val_loss))
        .unwrap();
    assert_eq!(a.best.epoch, best.epoch);
    assert_eq!(a.best.val_loss, best.val_loss);
    // the stored loss is what the stored parameters score
    let st = statics(&refs[2..], &cfg.model).unwrap();
    let again = mean_rollout_loss(&a.best.params, &st, &refs[2..], &a.best.stats, &cfg.weights).unwrap();
    assert!((again - a.best.val_loss).abs() < 1e-12);
    assert!(a.history[5].train_loss < a.history[0].train_loss);

    let other = train(&refs[..2], &refs[2..], &TrainConfig { seed: 1, ..cfg }, |_| {}).unwrap();
    assert_ne!(other.history, a.history);
}

#[test]
fn history_csv() {
    let h = vec![EpochRecord {
        epoch: 1,
        train_loss: 0.5,
        val_loss: 0.25,
        lr: 0.003,
    }];
    let mut out = Vec::new();
    write_history_csv(&h, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(text.lines().nth(1).unwrap(), "1,5e-1,2.5e-1,3e-3");
}

#[test]
fn divergence_is_reported() {
    let cases = tiny_cases(2, 3);
    let refs: Vec<&CaseTrajectory> = cases.iter().collect();
    let cfg = TrainConfig {
        weights: LossWeights {
            laplacian: f64::MAX,
            ..LossWeights::default()
        },
        ..small_config(ModelKind::Baseline, 2)
    };
    let err = train(&refs[..1], &refs[1..], &cfg, |_| {}).unwrap_err();
    assert!(matches!(err, Error::Divergence { epoch: 1, batch: 0, .. }), "{err}");
}

#[test]
fn config_validation() {
    let ok = small_config(ModelKind::Dual, 1);
    assert!(ok.validate().is_ok());
    for bad in [
        TrainConfig { epochs: 0, ..ok.clone() },
        TrainConfig { batch_size: 0, ..ok.clone() },
        TrainConfig { lr: -1.0, ..ok.clone() },
    ] {
        assert!(bad.validate().is_err());
    }
    let cases = tiny_cases(1, 3);
    assert!(train(&[&cases[0]], &[], &ok, |_| {}).is_err());
}

fn untrained(kind: ModelKind, cases: &[&CaseTrajectory]) -> Checkpoint {
    let cfg = small_config(kind, 1);
    Checkpoint {
        params: SurrogateParams::init(&cfg.model, 3).unwrap(),
        stats: compute_norm_stats(cases).unwrap(),
        train_config: cfg,
        epoch: 0,
        val_loss: 1.5,
    }
}

#[test]
fn checkpoint_round_trip() {
    let cases = tiny_cases(2, 3);
    let refs: Vec<&CaseTrajectory> = cases.iter().collect();
    let dir = tempfile::tempdir().unwrap();
    for kind in [ModelKind::Dual, ModelKind::Baseline] {
        let ckpt = untrained(kind, &refs);
        let path = dir.path().join(kind.to_string());
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(predict_cases(&back, &refs).unwrap(), predict_cases(&ckpt, &refs).unwrap());
    }
    assert_eq!(config_hash(&small_config(ModelKind::Dual, 1)), config_hash(&small_config(ModelKind::Dual, 1)));
    assert_ne!(config_hash(&small_config(ModelKind::Dual, 1)), config_hash(&small_config(ModelKind::Dual, 2)));
    assert!(Checkpoint::load(&dir.path().join("missing")).is_err());

    // a tampered configuration no longer matches its hash
    let path = dir.path().join("dual");
    let manifest = path.join("manifest.json");
    let text = std::fs::read_to_string(&manifest).unwrap();
    let tampered = text.replacen("\"epochs\": 1", "\"epochs\": 7", 1);
    assert_ne!(tampered, text);
    std::fs::write(&manifest, tampered).unwrap();
    assert!(Checkpoint::load(&path).is_err());
}

#[test]
fn evaluation_requires_matching_statistics() {
    let cases = tiny_cases(2, 3);
    let refs: Vec<&CaseTrajectory> = cases.iter().collect();
    let ckpt = untrained(ModelKind::Dual, &refs);
    let other = compute_norm_stats(&refs[..1]).unwrap();
    assert!(matches!(evaluate(&ckpt, &refs, &other), Err(Error::StatsMismatch)));
    let m = evaluate(&ckpt, &refs, &ckpt.stats.clone()).unwrap();
    assert_eq!(m.n_cases, 2);
}

fn result_from(case: &CaseTrajectory, stats: &NormStats, shift: f64) -> RolloutResult {
    let norm = |x: &[f64], st| apply_norm(x, 1, st).unwrap().into_iter().map(|v| v + shift).collect();
    RolloutResult {
        n_nodes: case.n_nodes(),
        n_elems: case.n_elems(),
        n_frames: case.n_frames(),
        u: norm(&case.u, &stats.u),
        s: norm(&case.s, &stats.s),
        peeq: norm(&case.peeq, &stats.peeq),
        rf2: norm(&case.rf2, &stats.rf2),
        u_phys: vec![],
        s_phys: vec![],
        peeq_phys: vec![],
        rf2_phys: vec![],
    }
}

#[test]
fn metric_oracles() {
    let cases = tiny_cases(2, 4);
    let refs: Vec<&CaseTrajectory> = cases.iter().collect();
    let stats = compute_norm_stats(&refs).unwrap();
    let exact: Vec<_> = refs.iter().map(|c| result_from(c, &stats, 0.0)).collect();
    let m = compute_metrics(&exact, &refs, &stats).unwrap();
    for ch in [m.u, m.s, m.peeq, m.rf2] {
        assert_eq!(ch.rmse_normalized, 0.0);
        assert_eq!(ch.r2, 1.0);
    }
    let shifted: Vec<_> = refs.iter().map(|c| result_from(c, &stats, 0.5)).collect();
    let m = compute_metrics(&shifted, &refs, &stats).unwrap();
    assert!((m.s.rmse_normalized - 0.5).abs() < 1e-12);
    assert!((m.s.rmse_physical - 0.5 * stats.s.std[0]).abs() < 1e-9);
    // normalized targets over the fitting set have unit variance: R² = 1 − 0.25
    assert!((m.s.r2 - 0.75).abs() < 1e-9);

    // predicting the pooled mean everywhere gives R² = 0
    let mut mean_pred = exact.clone();
    for p in &mut mean_pred {
        p.rf2.iter_mut().for_each(|v| *v = 0.0);
    }
    assert!(compute_metrics(&mean_pred, &refs, &stats).unwrap().rf2.r2.abs() < 1e-12);
    assert!(compute_metrics(&exact[..1], &refs, &stats).is_err());
}
