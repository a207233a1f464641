use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{cell, mlp};
use super::params::layout;
use super::*;
use crate::case_store::{compute_norm_stats, CaseTrajectory, NormStats};
use crate::mesh_graph::{build_node_graph, scaled_laplacian, structured_hex_grid};
use crate::projection::{node_to_element, Field, Unit};
use crate::sparse::CsrMatrix;
use crate::synth::{generate_case, single_hex_case, BeamSpec, MeshScale};
use crate::tape::{Matrix, SparseOperator, Tape};

fn small(kind: ModelKind) -> ModelConfig {
    ModelConfig {
        kind,
        hidden: 6,
        mlp_width: 5,
        ..ModelConfig::default()
    }
}

fn setup(case: &CaseTrajectory) -> (CaseStatic, NormStats) {
    (
        CaseStatic::from_case(case, Default::default()).unwrap(),
        compute_norm_stats(&[case]).unwrap(),
    )
}

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

#[test]
fn feature_columns() {
    let case = generate_case(&BeamSpec::default(), MeshScale::Tiny, [0.0, 25.0], 21).unwrap();
    let (st, stats) = setup(&case);
    let batch = BatchInput::new(&[&st], &stats).unwrap();
    let mut tape = Tape::new();
    let junk = tape.constant(Matrix::filled(case.n_nodes(), 3, 7.0));
    let x0 = batch.features(&mut tape, 0, true, Some(junk), Some(junk), None).unwrap();
    let m = tape.value(x0).clone();
    assert_eq!(m.cols, 12);
    for r in 0..m.rows {
        let row = m.row(r);
        assert!(row[3..9].iter().all(|&v| v == 0.0));
        assert_eq!(row[FeatureLayout::PROGRESS], 0.0);
        assert_eq!(row[FeatureLayout::STRESS], 0.0);
    }
    let load: f64 = (0..m.rows).map(|r| m.get(r, FeatureLayout::LOAD)).sum();
    assert_eq!(load, case.load_nodes.len() as f64);

    let x_last = batch.features(&mut tape, 20, false, None, None, None).unwrap();
    let m = tape.value(x_last);
    assert_eq!(m.cols, 11);
    assert!((0..m.rows).all(|r| m.get(r, FeatureLayout::PROGRESS) == 1.0));
    assert!(batch.features(&mut tape, 21, false, None, None, None).is_err());
}

#[test]
fn increment_is_zero_until_two_frames_of_history() {
    let case = single_hex_case(4).unwrap();
    let (st, stats) = setup(&case);
    let batch = BatchInput::new(&[&st], &stats).unwrap();
    let mut tape = Tape::new();
    let a = tape.constant(Matrix::filled(8, 3, 0.5));
    let b = tape.constant(Matrix::filled(8, 3, 0.25));
    let x1 = batch.features(&mut tape, 1, false, Some(a), Some(b), None).unwrap();
    assert!(tape.value(x1).row(0)[6..9].iter().all(|&v| v == 0.0));
    let x2 = batch.features(&mut tape, 2, false, Some(a), Some(b), None).unwrap();
    assert!(tape.value(x2).row(0)[6..9].iter().all(|&v| (v - 0.25).abs() < 1e-15));
}

/// `n` nodes on a line, hop distance |i - j|.
fn path_laplacian(n: usize) -> Arc<SparseOperator> {
    let pairs: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    let g = crate::mesh_graph::Graph::from_pairs(n, pairs);
    Arc::new(SparseOperator::new(scaled_laplacian(&g, Default::default())))
}

fn cell_params(cfg: &ModelConfig, seed: u64) -> SurrogateParams {
    SurrogateParams::init(cfg, seed).unwrap()
}

#[test]
fn cell_receptive_field() {
    let cfg = small(ModelKind::Baseline);
    let params = cell_params(&cfg, 3);
    let lay = layout(&cfg).0;
    let n = 11;
    let lap = path_laplacian(n);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(n, cfg.input_width(), &mut rng);
    let h = random(n, cfg.hidden, &mut rng);
    let run = |x: &Matrix, h: Option<&Matrix>| {
        let mut t = Tape::new();
        let p = params.bind(&mut t);
        let xv = t.constant(x.clone());
        let hv = h.map(|h| t.constant(h.clone()));
        let out = cell(&mut t, &p, lay.node_cell, &lap, 2, cfg.hidden, xv, hv).unwrap();
        t.value(out).clone()
    };
    let j = 5;
    let mut xp = x.clone();
    xp.data[j * xp.cols] += 0.5;
    // zero state: one filter of order 2
    let (base, moved) = (run(&x, None), run(&xp, None));
    for i in 0..n {
        assert_eq!(base.row(i) != moved.row(i), i.abs_diff(j) <= 2, "node {i}");
    }
    // with a state the reset gate feeds a second filter
    let (base, moved) = (run(&x, Some(&h)), run(&xp, Some(&h)));
    let mut hp = h.clone();
    hp.data[j * hp.cols] += 0.5;
    let moved_h = run(&x, Some(&hp));
    for i in 0..n {
        assert_eq!(base.row(i) != moved.row(i), i.abs_diff(j) <= 4, "node {i}");
        assert_eq!(base.row(i) != moved_h.row(i), i.abs_diff(j) <= 4, "node {i}");
    }
}

#[test]
fn edgeless_graph_gives_a_per_node_gru() {
    let cfg = small(ModelKind::Baseline);
    let params = cell_params(&cfg, 5);
    let lay = layout(&cfg).0;
    let lap = Arc::new(SparseOperator::new(scaled_laplacian(
        &crate::mesh_graph::Graph::from_pairs(3, []),
        Default::default(),
    )));
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(3, cfg.input_width(), &mut rng);
    let h = random(3, cfg.hidden, &mut rng);
    let full = {
        let mut t = Tape::new();
        let p = params.bind(&mut t);
        let (xv, hv) = (t.constant(x.clone()), t.constant(h.clone()));
        let out = cell(&mut t, &p, lay.node_cell, &lap, 2, cfg.hidden, xv, Some(hv)).unwrap();
        t.value(out).clone()
    };
    // each row alone on a one-node graph gives the same row
    let single = Arc::new(SparseOperator::new(CsrMatrix::from_triplets(1, 1, vec![])));
    for r in 0..3 {
        let mut t = Tape::new();
        let p = params.bind(&mut t);
        let xv = t.constant(x.slice_rows(r, r + 1));
        let hv = t.constant(h.slice_rows(r, r + 1));
        let out = cell(&mut t, &p, lay.node_cell, &single, 2, cfg.hidden, xv, Some(hv)).unwrap();
        assert_eq!(t.value(out).row(0), full.row(r));
    }
}

#[test]
fn cell_gradient_matches_finite_differences() {
    let cfg = ModelConfig {
        hidden: 3,
        mlp_width: 2,
        ..small(ModelKind::Baseline)
    };
    let params = cell_params(&cfg, 8);
    let lay = layout(&cfg).0;
    let lap = path_laplacian(2);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random(2, cfg.input_width(), &mut rng);
    let h = random(2, cfg.hidden, &mut rng);
    let w = random(2, cfg.hidden, &mut rng);
    let loss_of = |tensors: &[Matrix], x: &Matrix, h: &Matrix| -> (f64, Tape, Vec<crate::tape::Var>, crate::tape::Var, crate::tape::Var, crate::tape::Var) {
        let mut t = Tape::new();
        let p: Vec<_> = tensors.iter().map(|m| t.param(m.clone())).collect();
        let xv = t.param(x.clone());
        let hv = t.param(h.clone());
        let out = cell(&mut t, &p, lay.node_cell, &lap, 2, cfg.hidden, xv, Some(hv)).unwrap();
        let wv = t.constant(w.clone());
        let prod = t.mul(out, wv).unwrap();
        let l = t.sum_all(prod);
        (t.value(l).item(), t, p, xv, hv, l)
    };
    let (_, tape, p, xv, hv, l) = loss_of(&params.tensors, &x, &h);
    let grads = tape.backward(l).unwrap();
    let step = 1e-6;
    let mut worst: f64 = 0.0;
    let mut compare = |analytic: f64, plus: f64, minus: f64| {
        let fd = (plus - minus) / (2.0 * step);
        worst = worst.max((analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-5));
    };
    for k in [lay.node_cell.input, lay.node_cell.hidden_gates, lay.node_cell.hidden_cand, lay.node_cell.bias] {
        let g = grads.get(p[k], &tape);
        for i in 0..params.tensors[k].len() {
            let mut a = params.tensors.clone();
            a[k].data[i] += step;
            let mut b = params.tensors.clone();
            b[k].data[i] -= step;
            compare(g.data[i], loss_of(&a, &x, &h).0, loss_of(&b, &x, &h).0);
        }
    }
    let (gx, gh) = (grads.get(xv, &tape), grads.get(hv, &tape));
    for i in 0..x.len() {
        let (mut a, mut b) = (x.clone(), x.clone());
        a.data[i] += step;
        b.data[i] -= step;
        compare(gx.data[i], loss_of(&params.tensors, &a, &h).0, loss_of(&params.tensors, &b, &h).0);
    }
    for i in 0..h.len() {
        let (mut a, mut b) = (h.clone(), h.clone());
        a.data[i] += step;
        b.data[i] -= step;
        compare(gh.data[i], loss_of(&params.tensors, &x, &a).0, loss_of(&params.tensors, &x, &b).0);
    }
    assert!(worst < 1e-6, "worst relative error {worst:e}");
}

#[test]
fn zero_final_layer_outputs_the_bias() {
    let cfg = small(ModelKind::Dual);
    let mut params = cell_params(&cfg, 1);
    let lay = layout(&cfg).0;
    params.tensors[lay.u_head.w2] = Matrix::zeros(cfg.mlp_width, 3);
    params.tensors[lay.u_head.b2] = Matrix::from_vec(1, 3, vec![0.1, -0.2, 0.3]);
    let mut t = Tape::new();
    let p = params.bind(&mut t);
    let h = t.constant(Matrix::filled(5, cfg.hidden, 0.3));
    let u = mlp(&mut t, &p, lay.u_head, h).unwrap();
    let out = t.value(u);
    assert_eq!(out.shape(), (5, 3));
    assert!((0..5).all(|r| out.row(r) == [0.1, -0.2, 0.3]));
}

#[test]
fn parameter_counts() {
    let dual = small(ModelKind::Dual);
    let base = small(ModelKind::Baseline);
    // node cell: 3·11·18 + 3·6·12 + 3·6·6 + 18; element cell: 3·6·18 + 216 + 108 + 18;
    // heads: (6·5 + 5 + 5·o + o) for o = 3, 1, 1, 1
    let node_cell = 3 * 11 * 18 + 3 * 6 * 12 + 3 * 6 * 6 + 18;
    let elem_cell = 3 * 6 * 18 + 3 * 6 * 12 + 3 * 6 * 6 + 18;
    let head = |o: usize| 6 * 5 + 5 + 5 * o + o;
    let heads = head(3) + 3 * head(1);
    assert_eq!(parameter_count(&dual), node_cell + elem_cell + heads);
    assert_eq!(parameter_count(&base), node_cell + heads);
    assert_eq!(SurrogateParams::init(&dual, 0).unwrap().count(), parameter_count(&dual));
    let a = SurrogateParams::init(&dual, 0).unwrap();
    let b = SurrogateParams::init(&dual, 1).unwrap();
    assert_eq!(a.count(), b.count());
    assert_ne!(a.tensors, b.tensors);
}

#[test]
fn rollout_shapes_and_initial_frame() {
    for kind in [ModelKind::Dual, ModelKind::Baseline] {
        let case = generate_case(&BeamSpec::default(), MeshScale::Tiny, [0.0, 0.0], 5).unwrap();
        let (st, stats) = setup(&case);
        let params = SurrogateParams::init(&small(kind), 2).unwrap();
        let r = rollout(&params, &st, &stats, RolloutMode::Free, None).unwrap();
        assert_eq!(r.u.len(), 5 * case.n_nodes() * 3);
        assert_eq!(r.s.len(), 5 * case.n_elems());
        assert_eq!(r.rf2.len(), 5);
        assert!(r.u_frame(0).iter().all(|v| v.abs() < 1e-12));
        assert!(r.s_frame(0).iter().all(|v| v.abs() < 1e-12));
        assert!(r.peeq_frame(0).iter().all(|v| v.abs() < 1e-12));
        assert!(r.rf2_phys[0].abs() < 1e-12);
        assert!(r.peeq_phys.iter().all(|&p| p >= -1e-12), "{kind}");
        // stateless between calls
        assert_eq!(r, rollout(&params, &st, &stats, RolloutMode::Free, None).unwrap());
        assert!(rollout(&params, &st, &stats, RolloutMode::Teacher, None).is_err());
    }
}

#[test]
fn teacher_and_free_agree_on_exact_predictions() {
    let case = single_hex_case(5).unwrap();
    let (st, stats) = setup(&case);
    for kind in [ModelKind::Dual, ModelKind::Baseline] {
        let cfg = ModelConfig {
            stress_feedback: true,
            ..small(kind)
        };
        let params = SurrogateParams::init(&cfg, 11).unwrap();
        let free = rollout(&params, &st, &stats, RolloutMode::Free, None).unwrap();
        // a ground truth that equals the model's own predictions
        let oracle = CaseTrajectory {
            u: free.u_phys.clone(),
            s: free.s_phys.clone(),
            peeq: free.peeq_phys.iter().map(|p| p.max(0.0)).collect(),
            rf2: free.rf2_phys.clone(),
            ..case.clone()
        };
        let teacher = rollout(&params, &st, &stats, RolloutMode::Teacher, Some(&oracle)).unwrap();
        let gap = free
            .u
            .iter()
            .chain(&free.s)
            .zip(teacher.u.iter().chain(&teacher.s))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(gap < 1e-10, "{kind}: {gap:e}");
    }
}

#[test]
fn baseline_elements_are_corner_averages() {
    let case = generate_case(&BeamSpec::default(), MeshScale::Tiny, [50.0, -25.0], 3).unwrap();
    let (st, stats) = setup(&case);
    let params = SurrogateParams::init(&small(ModelKind::Baseline), 4).unwrap();
    let batch = BatchInput::new(&[&st], &stats).unwrap();
    let mut tape = Tape::new();
    let fwd = params.forward(&mut tape, &batch, Feedback::Free).unwrap();
    let f = fwd.frames[2];
    let nodal = tape.value(f.s_node.unwrap()).data.clone();
    let expect = node_to_element(&Field::scalar(nodal, Unit::Normalized), &st.graph.incidence).unwrap();
    for (a, b) in tape.value(f.s).data.iter().zip(&expect.values) {
        assert!((a - b).abs() < 1e-14);
    }
}

/// Relabels nodes by `perm` (new index of old node i is perm[i]).
fn relabel(case: &CaseTrajectory, perm: &[usize]) -> CaseTrajectory {
    let n = case.n_nodes();
    let mut coords = case.coords.clone();
    let mut u = case.u.clone();
    for (old, &new) in perm.iter().enumerate() {
        coords[new] = case.coords[old];
        for t in 0..case.n_frames() {
            for c in 0..3 {
                u[(t * n + new) * 3 + c] = case.u[(t * n + old) * 3 + c];
            }
        }
    }
    CaseTrajectory {
        coords,
        connectivity: case.connectivity.iter().map(|h| h.map(|i| perm[i])).collect(),
        u,
        load_nodes: case.load_nodes.iter().map(|&i| perm[i]).collect(),
        ..case.clone()
    }
}

#[test]
fn node_permutation_equivariance() {
    let case = single_hex_case(4).unwrap();
    let perm = [5, 2, 7, 0, 3, 6, 1, 4];
    let moved = relabel(&case, &perm);
    for kind in [ModelKind::Dual, ModelKind::Baseline] {
        let params = SurrogateParams::init(&small(kind), 21).unwrap();
        let (st, stats) = setup(&case);
        let (st2, stats2) = setup(&moved);
        let a = rollout(&params, &st, &stats, RolloutMode::Free, None).unwrap();
        let b = rollout(&params, &st2, &stats2, RolloutMode::Free, None).unwrap();
        for t in 0..4 {
            for (old, &new) in perm.iter().enumerate() {
                for c in 0..3 {
                    let x = a.u[(t * 8 + old) * 3 + c];
                    let y = b.u[(t * 8 + new) * 3 + c];
                    assert!((x - y).abs() < 1e-12);
                }
            }
            assert!((a.s[t] - b.s[t]).abs() < 1e-12 && (a.rf2[t] - b.rf2[t]).abs() < 1e-12);
        }
    }
}

#[test]
fn element_permutation_equivariance() {
    let (coords, conn) = structured_hex_grid([3, 1, 1], [1.0; 3]);
    let n = coords.len();
    let t_count = 3;
    let make = |conn: Vec<crate::mesh_graph::Hex>, s: Vec<f64>| CaseTrajectory {
        coords: coords.clone(),
        connectivity: conn,
        u: (0..t_count * n * 3).map(|i| (i as f64 * 0.37).sin() * (i >= n * 3) as u8 as f64).collect(),
        s,
        peeq: vec![0.0; t_count * 3],
        rf2: vec![0.0, 1.0, 2.0],
        frame_times: vec![0.0, 1.0, 2.0],
        load_nodes: vec![0],
        load_positions: [0.0, 1.0],
    };
    let s: Vec<f64> = vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 2.0, 4.0, 6.0];
    let a_case = make(conn.clone(), s.clone());
    let order = [2, 0, 1];
    let b_conn: Vec<_> = order.iter().map(|&e| conn[e]).collect();
    let b_s: Vec<f64> = (0..t_count).flat_map(|t| order.iter().map(|&e| s[t * 3 + e]).collect::<Vec<_>>()).collect();
    let b_case = make(b_conn, b_s);
    let params = SurrogateParams::init(&small(ModelKind::Dual), 13).unwrap();
    let (sa, stats) = setup(&a_case);
    let (sb, _) = setup(&b_case);
    let a = rollout(&params, &sa, &stats, RolloutMode::Free, None).unwrap();
    let b = rollout(&params, &sb, &stats, RolloutMode::Free, None).unwrap();
    for t in 0..t_count {
        for (k, &e) in order.iter().enumerate() {
            assert!((a.s[t * 3 + e] - b.s[t * 3 + k]).abs() < 1e-12);
            assert!((a.peeq[t * 3 + e] - b.peeq[t * 3 + k]).abs() < 1e-12);
        }
        assert!((a.rf2[t] - b.rf2[t]).abs() < 1e-12);
    }
}

#[test]
fn pooling_is_order_and_duplication_invariant() {
    let cfg = small(ModelKind::Dual);
    let params = SurrogateParams::init(&cfg, 17).unwrap();
    let lay = layout(&cfg).0;
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let h = random(4, cfg.hidden, &mut rng);
    let rf2 = |h: Matrix| {
        let mut t = Tape::new();
        let p = params.bind(&mut t);
        let rows = h.rows;
        let hv = t.constant(h);
        let pooled = t.segment_mean(hv, Arc::new(vec![0, rows])).unwrap();
        let out = mlp(&mut t, &p, lay.rf2_head, pooled).unwrap();
        t.value(out).item()
    };
    let base = rf2(h.clone());
    let mut rev = h.clone();
    for r in 0..4 {
        rev.data[r * cfg.hidden..(r + 1) * cfg.hidden].copy_from_slice(h.row(3 - r));
    }
    assert!((rf2(rev) - base).abs() < 1e-12);
    let mut twice = h.data.clone();
    twice.extend_from_slice(&h.data);
    assert!((rf2(Matrix::from_vec(8, cfg.hidden, twice)) - base).abs() < 1e-12);
}

#[test]
fn frame_counts_must_match_in_a_batch() {
    let a = single_hex_case(3).unwrap();
    let b = single_hex_case(4).unwrap();
    let (sa, stats) = setup(&a);
    let (sb, _) = setup(&b);
    assert!(BatchInput::new(&[&sa, &sb], &stats).is_err());
    let _ = build_node_graph(&a.connectivity, 8).unwrap();
}
