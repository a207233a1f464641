use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use dualgraph::case_store::{
    blob, compute_norm_stats, load_case, split_cases, write_container, CampaignIndex, CaseTrajectory,
};
use dualgraph::mesh_graph::{DualGraph, Graph, LambdaMax};
use dualgraph::projection::{attenuation_report, Field, Unit};
use dualgraph::surrogate::{rollout, CaseStatic, ModelConfig, ModelKind, RolloutMode};
use dualgraph::synth::{generate_campaign, single_hex_case, BeamSpec, CampaignSpec, MeshScale};
use dualgraph::trainer::{self, gradient_audit, Checkpoint, LossWeights, TrainConfig};
use serde::Serialize;
use serde_json::json;

use crate::manifest::RunManifest;
use crate::{
    AblateArgs, EvalArgs, GenArgs, GradCheckArgs, GraphStatsArgs, ProjectArgs, RolloutArgs, SplitArgs, TrainArgs,
    TrainFlags, Usage,
};

/// A computed quantity crossed its pass threshold.
#[derive(Debug, thiserror::Error)]
#[error("{1}")]
pub struct ThresholdExceeded(pub Option<PathBuf>, pub String);

fn or_default(path: &Option<PathBuf>, root: &Path, sub: &str) -> PathBuf {
    path.clone().unwrap_or_else(|| root.join(sub))
}

fn manifest_name(sub: &str) -> String {
    format!("{sub}_run.json")
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn parse_kind(s: &str) -> Result<ModelKind> {
    match s {
        "dual" => Ok(ModelKind::Dual),
        "baseline" | "single" => Ok(ModelKind::Baseline),
        other => Err(Usage(format!("unknown model kind `{other}` (dual, baseline)")).into()),
    }
}

fn load_campaign(dir: &Path) -> Result<(CampaignIndex, Vec<CaseTrajectory>)> {
    let index = CampaignIndex::load(dir)?;
    let cases = (0..index.cases.len())
        .map(|i| load_case(&index.case_dir(dir, i)))
        .collect::<dualgraph::Result<Vec<_>>>()?;
    Ok((index, cases))
}

fn resolve_config(flags: &TrainFlags) -> Result<TrainConfig> {
    let mut c: TrainConfig = match &flags.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| dualgraph::Error::Io {
                path: p.clone(),
                source: e,
            })?;
            serde_json::from_str(&text).map_err(|e| dualgraph::Error::Manifest {
                path: p.clone(),
                detail: e.to_string(),
            })?
        }
        None => TrainConfig::default(),
    };
    macro_rules! set {
        ($flag:expr, $field:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    set!(flags.epochs, c.epochs);
    set!(flags.batch_size, c.batch_size);
    set!(flags.lr, c.lr);
    set!(flags.clip, c.clip);
    set!(flags.seed, c.seed);
    set!(flags.hidden, c.model.hidden);
    set!(flags.mlp_width, c.model.mlp_width);
    set!(flags.cheb_order, c.model.cheb_order);
    set!(flags.lambda_stress, c.weights.stress);
    set!(flags.lambda_peeq, c.weights.peeq);
    set!(flags.lambda_rf2, c.weights.rf2);
    set!(flags.lambda_laplacian, c.weights.laplacian);
    set!(flags.patience, c.plateau_patience);
    set!(flags.factor, c.plateau_factor);
    if let Some(k) = &flags.kind {
        c.model.kind = parse_kind(k)?;
    }
    if flags.stress_feedback {
        c.model.stress_feedback = true;
    }
    c.validate().map_err(|e| Usage(e.to_string()))?;
    Ok(c)
}

/// The campaign's stored split, or a fresh one from the config.
fn partitions(index: &CampaignIndex, config: &TrainConfig) -> Result<dualgraph::case_store::SplitAssignment> {
    match &index.split {
        Some(s) => Ok(s.clone()),
        None => Ok(split_cases(index.cases.len(), config.split, config.seed)?),
    }
}

fn pick<'a>(cases: &'a [CaseTrajectory], idx: &[usize]) -> Vec<&'a CaseTrajectory> {
    idx.iter().map(|&i| &cases[i]).collect()
}

pub fn gen(root: &Path, a: &GenArgs) -> Result<()> {
    let started = Instant::now();
    let out = or_default(&a.out, root, "gen");
    let mesh = MeshScale::parse(&a.mesh_scale).map_err(|e| Usage(e.to_string()))?;
    let spec = BeamSpec::default();
    let campaign = CampaignSpec::sampled(&spec, mesh, a.count, a.frames, a.seed).map_err(|e| Usage(e.to_string()))?;
    let mut index = generate_campaign(&spec, &campaign, &out)?;
    if a.count >= 3 {
        index.split = Some(split_cases(a.count, dualgraph::case_store::DEFAULT_SPLIT, a.seed)?);
        index.save(&out)?;
    }
    eprintln!("wrote {} cases to {}", index.cases.len(), out.display());
    let mut m = RunManifest::new("gen", json!({ "beam": spec, "campaign": campaign }));
    m.seeds.push(a.seed);
    m.outputs.push(out.clone());
    m.write_as(&out, &manifest_name("gen"), started)
}

pub fn split(root: &Path, a: &SplitArgs) -> Result<()> {
    let started = Instant::now();
    let dir = or_default(&a.campaign, root, "gen");
    let ratios: [f64; 3] = a
        .ratios
        .as_slice()
        .try_into()
        .map_err(|_| Usage("--ratios takes three comma-separated fractions".into()))?;
    let mut index = CampaignIndex::load(&dir)?;
    let s = split_cases(index.cases.len(), ratios, a.seed).map_err(|e| Usage(e.to_string()))?;
    println!("{}", serde_json::to_string(&s)?);
    index.split = Some(s);
    index.save(&dir)?;
    let mut m = RunManifest::new("split", json!({ "ratios": ratios }));
    m.seeds.push(a.seed);
    m.inputs.push(dir.clone());
    m.outputs.push(dir.join(dualgraph::case_store::CAMPAIGN_FILE));
    m.write_as(&dir, &manifest_name("split"), started)
}

pub fn train(root: &Path, a: &TrainArgs) -> Result<()> {
    let started = Instant::now();
    let config = resolve_config(&a.flags)?;
    let dir = or_default(&a.campaign, root, "gen");
    let out = or_default(&a.out, root, "train");
    let (index, cases) = load_campaign(&dir)?;
    let split = partitions(&index, &config)?;
    let (tr, va) = (pick(&cases, &split.train), pick(&cases, &split.validation));
    let quiet = a.quiet;
    let outcome = trainer::train(&tr, &va, &config, |r| {
        if !quiet {
            eprintln!(
                "epoch {:>4}  train {:.4e}  val {:.4e}  lr {:.2e}",
                r.epoch, r.train_loss, r.val_loss, r.lr
            );
        }
    })?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let ckpt_dir = out.join("checkpoint");
    outcome.best.save(&ckpt_dir)?;
    let mut hist = BufWriter::new(File::create(out.join("history.csv"))?);
    trainer::write_history_csv(&outcome.history, &mut hist)?;
    let metrics = trainer::evaluate(&outcome.best, &va, &outcome.best.stats)?;
    write_json(
        &out.join("metrics.json"),
        &json!({ "partition": "validation", "best_epoch": outcome.best.epoch, "metrics": metrics }),
    )?;
    write_json(&out.join("config.json"), &config)?;
    eprintln!(
        "best epoch {} (val {:.4e}); checkpoint in {}",
        outcome.best.epoch,
        outcome.best.val_loss,
        ckpt_dir.display()
    );
    let mut m = RunManifest::new("train", &config);
    m.seeds.push(config.seed);
    m.inputs.push(dir);
    m.outputs.extend([ckpt_dir, out.join("history.csv"), out.join("metrics.json")]);
    m.write_as(&out, &manifest_name("train"), started)
}

pub fn eval(root: &Path, a: &EvalArgs) -> Result<()> {
    let started = Instant::now();
    let ckpt_dir = a.checkpoint.clone().unwrap_or_else(|| root.join("train").join("checkpoint"));
    let dir = or_default(&a.campaign, root, "gen");
    let out = or_default(&a.out, root, "eval");
    let ckpt = Checkpoint::load(&ckpt_dir)?;
    let (index, cases) = load_campaign(&dir)?;
    let split = partitions(&index, &ckpt.train_config)?;
    let chosen: Vec<usize> = match a.partition.as_str() {
        "train" => split.train.clone(),
        "validation" => split.validation.clone(),
        "test" => split.test.clone(),
        "all" => (0..cases.len()).collect(),
        other => return Err(Usage(format!("unknown partition `{other}`")).into()),
    };
    let stats = if a.trust_checkpoint_stats {
        ckpt.stats.clone()
    } else {
        compute_norm_stats(&pick(&cases, &split.train))?
    };
    let metrics = trainer::evaluate(&ckpt, &pick(&cases, &chosen), &stats)?;
    let report = json!({ "partition": a.partition, "checkpoint": ckpt_dir, "metrics": metrics });
    println!("{}", serde_json::to_string_pretty(&report)?);
    fs::create_dir_all(&out)?;
    write_json(&out.join("metrics.json"), &report)?;
    let mut m = RunManifest::new("eval", json!({ "partition": a.partition }));
    m.seeds.push(ckpt.train_config.seed);
    m.inputs.extend([ckpt_dir, dir]);
    m.outputs.push(out.join("metrics.json"));
    m.write_as(&out, &manifest_name("eval"), started)
}

/// Node nearest the centre of the bounding box.
fn central_node(coords: &[[f64; 3]]) -> usize {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for c in coords {
        for k in 0..3 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    let centre: Vec<f64> = (0..3).map(|k| 0.5 * (lo[k] + hi[k])).collect();
    let d = |c: &[f64; 3]| (0..3).map(|k| (c[k] - centre[k]).powi(2)).sum::<f64>();
    (0..coords.len()).min_by(|&i, &j| d(&coords[i]).total_cmp(&d(&coords[j]))).unwrap_or(0)
}

pub fn run_rollout(root: &Path, a: &RolloutArgs) -> Result<()> {
    let started = Instant::now();
    let ckpt_dir = a.checkpoint.clone().unwrap_or_else(|| root.join("train").join("checkpoint"));
    let out = or_default(&a.out, root, "rollout");
    let ckpt = Checkpoint::load(&ckpt_dir)?;
    let case = load_case(&a.case)?;
    let st = CaseStatic::from_case(&case, ckpt.params.config.lambda_max)?;
    let mode = if a.teacher { RolloutMode::Teacher } else { RolloutMode::Free };
    let pred = rollout(&ckpt.params, &st, &ckpt.stats, mode, Some(&case))?;
    let traj = pred.to_trajectory(&case)?;
    let pred_dir = out.join("prediction");
    write_container(&traj, &pred_dir)?;
    let mid = central_node(&case.coords);
    let mut csv = String::from("frame,progress,deflection_pred_mm,rf2_pred_kn,deflection_true_mm,rf2_true_kn\n");
    for t in 0..case.n_frames() {
        csv.push_str(&format!(
            "{t},{},{},{},{},{}\n",
            case.frame_times[t],
            -traj.u_frame(t)[mid * 3 + 1],
            traj.rf2[t],
            -case.u_frame(t)[mid * 3 + 1],
            case.rf2[t]
        ));
    }
    fs::write(out.join("force_deflection.csv"), csv)?;
    eprintln!("wrote {} and force_deflection.csv", pred_dir.display());
    let mut m = RunManifest::new("rollout", json!({ "mode": mode, "midspan_node": mid }));
    m.seeds.push(ckpt.train_config.seed);
    m.inputs.extend([ckpt_dir, a.case.clone()]);
    m.outputs.extend([pred_dir, out.join("force_deflection.csv")]);
    m.write_as(&out, &manifest_name("rollout"), started)
}

pub fn ablate(root: &Path, a: &AblateArgs) -> Result<()> {
    let started = Instant::now();
    let config = resolve_config(&a.flags)?;
    if a.seeds.is_empty() {
        return Err(Usage("--seeds needs at least one seed".into()).into());
    }
    let dir = or_default(&a.campaign, root, "gen");
    let out = or_default(&a.out, root, "ablate");
    let (index, cases) = load_campaign(&dir)?;
    let split = partitions(&index, &config)?;
    let refs: Vec<&CaseTrajectory> = cases.iter().collect();
    let report = trainer::ablate(&refs, &split, &config, &a.seeds, [ModelKind::Baseline, ModelKind::Dual], |r| {
        eprintln!(
            "{} seed {}: stress RMSE {:.4} MPa, PEEQ RMSE {:.4e} (best epoch {})",
            r.kind, r.seed, r.stress_rmse, r.peeq_rmse, r.best_epoch
        );
    })?;
    fs::create_dir_all(&out)?;
    report.write_csv(&mut BufWriter::new(File::create(out.join("ablation.csv"))?))?;
    report.write_runs_csv(&mut BufWriter::new(File::create(out.join("ablation_runs.csv"))?))?;
    write_json(&out.join("ablation.json"), &report)?;
    println!(
        "stress reduction {:.1}%, PEEQ reduction {:.1}%",
        report.stress_reduction_percent, report.peeq_reduction_percent
    );
    let mut m = RunManifest::new("ablate", &config);
    m.seeds = a.seeds.clone();
    m.inputs.push(dir);
    m.outputs.extend(["ablation.csv", "ablation_runs.csv", "ablation.json"].map(|f| out.join(f)));
    m.write_as(&out, &manifest_name("ablate"), started)
}

pub fn project_study(root: &Path, a: &ProjectArgs) -> Result<()> {
    let started = Instant::now();
    let out = or_default(&a.out, root, "project-study");
    let case = load_case(&a.case)?;
    let frame = a.frame.unwrap_or(case.n_frames() - 1);
    if frame >= case.n_frames() {
        return Err(Usage(format!("frame {frame} outside 0..{}", case.n_frames())).into());
    }
    let graph = DualGraph::build(&case.connectivity, case.n_nodes(), LambdaMax::Two)?;
    let stress = attenuation_report(&Field::scalar(case.s_frame(frame).to_vec(), Unit::Megapascal), &graph.incidence)?;
    let peeq = attenuation_report(
        &Field::scalar(case.peeq_frame(frame).to_vec(), Unit::Dimensionless),
        &graph.incidence,
    )?;
    fs::create_dir_all(&out)?;
    let e = case.n_elems();
    let blobs = [
        blob::write_f64(&out, "stress_abs_difference", vec![e], &stress.abs_difference)?,
        blob::write_f64(&out, "peeq_abs_difference", vec![e], &peeq.abs_difference)?,
    ];
    let report = json!({ "case": a.case, "frame": frame, "stress": stress, "peeq": peeq, "blobs": blobs });
    println!("{}", serde_json::to_string_pretty(&report)?);
    write_json(&out.join("report.json"), &report)?;
    let mut m = RunManifest::new("project-study", json!({ "frame": frame }));
    m.inputs.push(a.case.clone());
    m.outputs.push(out.join("report.json"));
    m.write_as(&out, &manifest_name("project-study"), started)
}

fn graph_summary(g: &Graph) -> serde_json::Value {
    let degrees = g.degrees();
    let n = degrees.len().max(1) as f64;
    json!({
        "vertices": g.len(),
        "edges": g.undirected_edge_count(),
        "min_degree": degrees.iter().min(),
        "max_degree": degrees.iter().max(),
        "mean_degree": degrees.iter().sum::<usize>() as f64 / n,
        "degree_histogram": g.degree_histogram(),
    })
}

pub fn graph_stats(a: &GraphStatsArgs) -> Result<()> {
    let started = Instant::now();
    let case = load_case(&a.case)?;
    let graph = DualGraph::build(&case.connectivity, case.n_nodes(), LambdaMax::Two)?;
    let stats = json!({
        "n_nodes": case.n_nodes(),
        "n_elems": case.n_elems(),
        "node_graph": graph_summary(&graph.node_graph),
        "element_graph": graph_summary(&graph.element_graph),
    });
    println!("{}", serde_json::to_string_pretty(&stats)?);
    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        write_json(&out.join("graph_stats.json"), &stats)?;
        let mut m = RunManifest::new("graph-stats", json!({}));
        m.inputs.push(a.case.clone());
        m.outputs.push(out.join("graph_stats.json"));
        m.write_as(out, &manifest_name("graph-stats"), started)?;
    }
    Ok(())
}

pub fn grad_check(a: &GradCheckArgs) -> Result<()> {
    let config = ModelConfig {
        kind: parse_kind(&a.kind)?,
        hidden: a.hidden,
        mlp_width: a.mlp_width,
        stress_feedback: a.stress_feedback,
        ..ModelConfig::default()
    };
    config.validate().map_err(|e| Usage(e.to_string()))?;
    if !(a.step > 0.0) {
        return Err(Usage("--step must be positive".into()).into());
    }
    let case = single_hex_case(a.frames).map_err(|e| Usage(e.to_string()))?;
    let audit = gradient_audit(&case, &config, &LossWeights::default(), a.seed, a.step)?;
    let pass = audit.max_relative_error < a.tolerance;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({ "audit": audit, "tolerance": a.tolerance, "pass": pass }))?
    );
    if !pass {
        return Err(ThresholdExceeded(
            None,
            format!("max relative error {:e} above {:e}", audit.max_relative_error, a.tolerance),
        )
        .into());
    }
    Ok(())
}
