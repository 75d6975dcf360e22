//! Subcommand tables and their execution.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::time::Duration;

use super::config::{p, ParamSpec, RunConfig};
use super::CliError;
use crate::bench::{run_scaling_sweep, write_bench_csv, BenchConfig};
use crate::clustering::{segment, DbscanConfig};
use crate::io::{load_head, load_labels, load_scene, save_head, save_labels, save_scene, SCENE_MAGIC};
use crate::loss::{inverse_frequency_weights, LossConfig};
use crate::metrics::{evaluate, ios_sweep, proposal_recall, write_sweep_csv, EvalConfig};
use crate::pipeline::{run_experiment, ExperimentConfig};
use crate::scene::{generate_scene, SceneLabels, SyntheticSceneSpec};
use crate::trainer::{train, EmbeddingHead, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Gen,
    Train,
    Segment,
    Evaluate,
    Bench,
    Sweep,
}

const SCENE_KEYS: &[ParamSpec] = &[
    p("seed", "0", "RNG seed"),
    p("n_instances", "8", "instances per scene"),
    p("n_categories", "3", "semantic categories"),
    p("points_min", "256", "minimum points per instance"),
    p("points_max", "256", "maximum points per instance"),
    p("region_size", "2.0", "side of the cubic scene region"),
    p("feature_dim", "8", "length of the per-instance feature signature"),
    p("noise_sigma", "0.05", "feature and color noise"),
];

const TRAIN_KEYS: &[ParamSpec] = &[
    p("embedding_dim", "32", "embedding dimension"),
    p("normalize_rows", "false", "scale embedding rows to unit norm in the head"),
    p("learning_rate", "0.001", "Adam learning rate"),
    p("lr_drop_step", "1500", "step from which the learning rate is scaled"),
    p("lr_drop_factor", "0.1", "learning rate scale after the drop step"),
    p("batch_size", "4", "scenes per step, drawn with replacement"),
    p("total_steps", "2000", "optimizer steps"),
    p("adam_beta1", "0.9", "Adam first moment decay"),
    p("adam_beta2", "0.999", "Adam second moment decay"),
    p("adam_eps", "1e-8", "Adam denominator epsilon"),
    p("delta_v", "0.9", "pull margin"),
    p("delta_d", "0.4", "push margin"),
    p("alpha", "0.5", "pull term weight"),
    p("beta", "0.5", "push term weight"),
    p("class_weights", "auto", "auto (inverse frequency), uniform, or comma list"),
];

const DBSCAN_KEYS: &[ParamSpec] = &[
    p("eps", "0.25", "DBSCAN radius"),
    p("min_pts", "8", "DBSCAN core threshold, self included"),
    p("min_cluster_size", "35", "smaller clusters become noise"),
    p("coord_weight", "1.0", "scale of the normalized coordinates"),
    p("per_category", "true", "cluster each predicted category separately"),
];

const EVAL_KEYS: &[ParamSpec] = &[
    p("ios_threshold", "0.75", "containment threshold t, > 0.5"),
    p("iou_threshold", "0.5", "proposal recall IoU threshold"),
    p("min_pred_size", "35", "smaller predictions are ignored"),
];

impl Subcommand {
    pub const ALL: [Subcommand; 6] = [
        Subcommand::Gen,
        Subcommand::Train,
        Subcommand::Segment,
        Subcommand::Evaluate,
        Subcommand::Bench,
        Subcommand::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Gen => "gen",
            Subcommand::Train => "train",
            Subcommand::Segment => "segment",
            Subcommand::Evaluate => "evaluate",
            Subcommand::Bench => "bench",
            Subcommand::Sweep => "sweep",
        }
    }

    pub fn about(self) -> &'static str {
        match self {
            Subcommand::Gen => "Generate a synthetic scene file",
            Subcommand::Train => "Train an embedding head on scene files",
            Subcommand::Segment => "Extract instances from a scene with a trained head",
            Subcommand::Evaluate => "Score predicted labels against ground truth",
            Subcommand::Bench => "Time pairwise vs centroid losses over point counts",
            Subcommand::Sweep => "Train and evaluate over region sizes and point counts",
        }
    }

    pub fn params(self) -> Vec<ParamSpec> {
        let own: &[ParamSpec] = match self {
            Subcommand::Gen => &[p("out", "scene.spc", "output scene file")],
            Subcommand::Train => &[
                p("scenes", "", "comma-separated training scene files"),
                p("seed", "0", "seed of head initialization and batch sampling"),
                p("out", "head.ckpt", "output checkpoint"),
                p("history", "", "loss history CSV (default <out>.loss.csv)"),
            ],
            Subcommand::Segment => &[
                p("scene", "", "input scene file"),
                p("checkpoint", "", "trained head"),
                p("out", "pred.labels", "output label file"),
            ],
            Subcommand::Evaluate => &[
                p("gt", "", "ground truth scene or label file"),
                p("pred", "", "predicted scene or label file"),
                p("n_categories", "0", "categories for proposal recall (0: infer)"),
                p("out", "report.txt", "output report"),
                p("sweep_out", "", "threshold sweep CSV (default <out>.sweep.csv)"),
            ],
            Subcommand::Bench => &[
                p("n_points", "1024,2048,4096,8192,16384", "point counts, ascending"),
                p("feature_dim", "32", "pairwise feature dimension"),
                p("embedding_dim", "32", "centroid embedding dimension"),
                p("repeats", "5", "timing repeats, median reported"),
                p("n_clusters", "8", "clusters of the centroid loss"),
                p("cap_bytes", "3221225472", "pairwise runs above this are skipped"),
                p("min_sample_ms", "50", "minimum duration of one timing sample"),
                p("delta_v", "0.9", "pull margin"),
                p("delta_d", "0.4", "push margin"),
                p("seed", "0", "RNG seed"),
                p("out", "bench.csv", "output CSV"),
            ],
            Subcommand::Sweep => &[
                p("region_sizes", "1,2,4", "scene region sizes"),
                p("point_counts", "1024,2048", "points per scene"),
                p("n_train_scenes", "4", "training scenes per configuration"),
                p("out", "sweep.csv", "output CSV"),
            ],
        };
        let shared: Vec<&[ParamSpec]> = match self {
            Subcommand::Gen => vec![SCENE_KEYS],
            Subcommand::Train => vec![TRAIN_KEYS],
            Subcommand::Segment => vec![DBSCAN_KEYS],
            Subcommand::Evaluate => vec![EVAL_KEYS],
            Subcommand::Bench => vec![],
            Subcommand::Sweep => vec![
                &SCENE_KEYS[..3],
                &SCENE_KEYS[6..],
                TRAIN_KEYS,
                DBSCAN_KEYS,
                EVAL_KEYS,
            ],
        };
        own.iter().chain(shared.into_iter().flatten()).copied().collect()
    }

    pub fn defaults(self) -> RunConfig {
        RunConfig::from_specs(self.name(), &self.params())
    }
}

fn write_manifest(cfg: &RunConfig, out: &str) -> Result<(), CliError> {
    fs::write(format!("{out}.manifest"), cfg.to_string()).map_err(|e| CliError::Data(e.into()))
}

fn scene_spec(cfg: &RunConfig) -> Result<SyntheticSceneSpec, CliError> {
    Ok(SyntheticSceneSpec {
        n_instances: cfg.get("n_instances")?,
        n_categories: cfg.get("n_categories")?,
        points_per_instance: (cfg.get("points_min")?, cfg.get("points_max")?),
        region_size: cfg.get("region_size")?,
        feature_dim: cfg.get("feature_dim")?,
        noise_sigma: cfg.get("noise_sigma")?,
        rng_seed: cfg.get("seed")?,
    })
}

enum ClassWeights {
    Auto,
    Fixed(Vec<f64>),
}

fn train_config(cfg: &RunConfig) -> Result<(TrainConfig, ClassWeights), CliError> {
    let weights = match cfg.raw("class_weights") {
        "auto" => ClassWeights::Auto,
        "uniform" => ClassWeights::Fixed(Vec::new()),
        _ => ClassWeights::Fixed(cfg.list("class_weights")?),
    };
    let train = TrainConfig {
        learning_rate: cfg.get("learning_rate")?,
        lr_drop_step: cfg.get("lr_drop_step")?,
        lr_drop_factor: cfg.get("lr_drop_factor")?,
        batch_size: cfg.get("batch_size")?,
        total_steps: cfg.get("total_steps")?,
        adam_beta1: cfg.get("adam_beta1")?,
        adam_beta2: cfg.get("adam_beta2")?,
        adam_eps: cfg.get("adam_eps")?,
        loss: LossConfig {
            delta_v: cfg.get("delta_v")?,
            delta_d: cfg.get("delta_d")?,
            alpha: cfg.get("alpha")?,
            beta: cfg.get("beta")?,
            ..LossConfig::default()
        },
        rng_seed: cfg.get("seed")?,
    };
    Ok((train, weights))
}

fn dbscan_config(cfg: &RunConfig) -> Result<DbscanConfig, CliError> {
    Ok(DbscanConfig {
        eps: cfg.get("eps")?,
        min_pts: cfg.get("min_pts")?,
        min_cluster_size: cfg.get("min_cluster_size")?,
        coord_weight: cfg.get("coord_weight")?,
    })
}

fn eval_config(cfg: &RunConfig) -> Result<EvalConfig, CliError> {
    Ok(EvalConfig {
        ios_threshold: cfg.get("ios_threshold")?,
        iou_threshold: cfg.get("iou_threshold")?,
        min_pred_size: cfg.get("min_pred_size")?,
    })
}

/// Labels from either a scene file or a label file, by header sniffing.
fn load_any_labels(path: &str) -> Result<(SceneLabels, Option<usize>), CliError> {
    let mut first = String::new();
    BufReader::new(File::open(path).map_err(|e| CliError::Data(e.into()))?)
        .read_line(&mut first)
        .map_err(|e| CliError::Data(e.into()))?;
    if first.split_whitespace().next() == Some(SCENE_MAGIC) {
        let scene = load_scene(path)?;
        Ok((scene.labels, Some(scene.n_categories)))
    } else {
        Ok((load_labels(path)?, None))
    }
}

pub fn execute(cmd: Subcommand, cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Subcommand::Gen => gen(cfg, stdout),
        Subcommand::Train => run_train(cfg, stdout),
        Subcommand::Segment => run_segment(cfg, stdout),
        Subcommand::Evaluate => run_evaluate(cfg, stdout),
        Subcommand::Bench => run_bench(cfg, stdout),
        Subcommand::Sweep => run_sweep(cfg, stdout),
    }
}

fn gen(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let spec = scene_spec(cfg)?;
    let out = cfg.required("out")?;
    let (cloud, labels) = generate_scene(&spec)?;
    save_scene(out, &cloud, &labels, spec.n_categories)?;
    write_manifest(cfg, out)?;
    writeln!(stdout, "wrote {} points to {out}", cloud.n_points())?;
    Ok(())
}

fn run_train(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let paths: Vec<String> = cfg.list("scenes")?;
    if paths.is_empty() {
        return Err(CliError::Usage("'scenes' is required".into()));
    }
    let out = cfg.required("out")?;
    let history_path = cfg.path_or("history", format!("{out}.loss.csv"));
    let (mut train_cfg, weights) = train_config(cfg)?;

    let files = paths.iter().map(load_scene).collect::<Result<Vec<_>, _>>()?;
    let d_f = files[0].cloud.feature_dim();
    let n_categories = files.iter().map(|f| f.n_categories).max().unwrap_or(1);
    if let Some(bad) = files.iter().position(|f| f.cloud.feature_dim() != d_f) {
        return Err(CliError::Data(crate::Error::ShapeMismatch {
            what: "scene feature dimension",
            expected: d_f.to_string(),
            found: format!("{} in {}", files[bad].cloud.feature_dim(), paths[bad]),
        }));
    }
    train_cfg.loss.class_weights = match weights {
        ClassWeights::Auto => inverse_frequency_weights(files.iter().map(|f| f.labels.semantic.as_slice()), n_categories),
        ClassWeights::Fixed(w) => w,
    };
    let scenes: Vec<_> = files.into_iter().map(|f| (f.cloud, f.labels)).collect();
    let init = EmbeddingHead::init(
        d_f + 3,
        cfg.get("embedding_dim")?,
        n_categories,
        cfg.get("normalize_rows")?,
        train_cfg.rng_seed,
    );
    let (head, history) = train(&init, &scenes, &train_cfg)?;
    save_head(out, &head)?;

    let mut w = BufWriter::new(File::create(&history_path).map_err(|e| CliError::Data(e.into()))?);
    writeln!(w, "step,loss")?;
    for (step, loss) in history.iter().enumerate() {
        writeln!(w, "{step},{loss}")?;
    }
    w.flush()?;
    write_manifest(cfg, out)?;
    if let Some(last) = history.last() {
        writeln!(stdout, "final loss {last}")?;
    }
    writeln!(stdout, "wrote {out} and {history_path}")?;
    Ok(())
}

fn run_segment(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let scene = load_scene(cfg.required("scene")?)?;
    let head = load_head(cfg.required("checkpoint")?)?;
    let out = cfg.required("out")?;
    let pred = segment(&head, &scene.cloud, cfg.get("per_category")?, &dbscan_config(cfg)?)?;
    save_labels(out, &pred)?;
    write_manifest(cfg, out)?;
    writeln!(stdout, "wrote {} instances to {out}", pred.n_instances())?;
    Ok(())
}

fn run_evaluate(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (gt, gt_categories) = load_any_labels(cfg.required("gt")?)?;
    let (pred, _) = load_any_labels(cfg.required("pred")?)?;
    let out = cfg.required("out")?;
    let sweep_out = cfg.path_or("sweep_out", format!("{out}.sweep.csv"));
    let eval_cfg = eval_config(cfg)?;
    let n_categories = match cfg.get::<usize>("n_categories")? {
        0 => gt_categories.unwrap_or_else(|| gt.semantic.iter().max().map_or(1, |m| m + 1)),
        n => n,
    };

    let report = evaluate(&gt, &pred, &eval_cfg)?;
    let recall = proposal_recall(&gt, &pred, eval_cfg.iou_threshold, n_categories);
    let mut text = report.to_key_value();
    for (c, r) in recall.per_category.iter().enumerate() {
        let v = r.map_or("none".to_string(), |v| v.to_string());
        text.push_str(&format!("proposal_recall_{c}: {v}\n"));
    }
    text.push_str(&format!("proposal_recall_mean: {}\n", recall.mean));
    text.push_str(&format!("proposal_recall_total: {}\n", recall.total));
    fs::write(out, &text).map_err(|e| CliError::Data(e.into()))?;

    let rows = ios_sweep(&[(gt, pred)], eval_cfg.min_pred_size)?;
    write_sweep_csv(BufWriter::new(File::create(&sweep_out).map_err(|e| CliError::Data(e.into()))?), &rows)?;
    write_manifest(cfg, out)?;
    stdout.write_all(text.as_bytes())?;
    Ok(())
}

fn run_bench(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let bench = BenchConfig {
        n_points: cfg.list("n_points")?,
        feature_dim: cfg.get("feature_dim")?,
        embedding_dim: cfg.get("embedding_dim")?,
        repeats: cfg.get("repeats")?,
        n_clusters: cfg.get("n_clusters")?,
        cap_bytes: cfg.get("cap_bytes")?,
        min_sample_time: Duration::from_millis(cfg.get("min_sample_ms")?),
        delta_v: cfg.get("delta_v")?,
        delta_d: cfg.get("delta_d")?,
        rng_seed: cfg.get("seed")?,
    };
    let out = cfg.required("out")?;
    let sweep = run_scaling_sweep(&bench)?;
    write_bench_csv(BufWriter::new(File::create(out).map_err(|e| CliError::Data(e.into()))?), &sweep)?;
    write_manifest(cfg, out)?;
    write_bench_csv(&mut *stdout, &sweep)?;
    Ok(())
}

fn run_sweep(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let regions: Vec<f64> = cfg.list("region_sizes")?;
    let counts: Vec<usize> = cfg.list("point_counts")?;
    let out = cfg.required("out")?;
    let (train_cfg, weights) = train_config(cfg)?;
    let mut base = ExperimentConfig {
        scene: SyntheticSceneSpec {
            points_per_instance: (1, 1),
            ..scene_spec_without_points(cfg)?
        },
        n_train_scenes: cfg.get("n_train_scenes")?,
        embedding_dim: cfg.get("embedding_dim")?,
        normalize_rows: cfg.get("normalize_rows")?,
        auto_class_weights: matches!(weights, ClassWeights::Auto),
        train: train_cfg,
        dbscan: dbscan_config(cfg)?,
        per_category: cfg.get("per_category")?,
        eval: eval_config(cfg)?,
    };
    if let ClassWeights::Fixed(w) = weights {
        base.train.loss.class_weights = w;
    }

    let mut w = BufWriter::new(File::create(out).map_err(|e| CliError::Data(e.into()))?);
    let header = "region_size,n_points,precision,recall,f_score,pd_ratio,fm_ratio,fp_ratio,proposal_recall,margin_loss";
    writeln!(w, "{header}")?;
    writeln!(stdout, "{header}")?;
    for &region in &regions {
        for &n in &counts {
            let per_instance = (n / base.scene.n_instances).max(1);
            let mut exp = base.clone();
            exp.scene.region_size = region;
            exp.scene.points_per_instance = (per_instance, per_instance);
            let o = run_experiment(&exp)?;
            let r = &o.report;
            let row = format!(
                "{region},{},{},{},{},{},{},{},{},{}",
                per_instance * exp.scene.n_instances,
                r.precision,
                r.recall,
                r.f_score,
                r.pd_ratio,
                r.fm_ratio,
                r.fp_ratio,
                o.recall.mean,
                o.margin_loss
            );
            writeln!(w, "{row}")?;
            writeln!(stdout, "{row}")?;
        }
    }
    w.flush()?;
    write_manifest(cfg, out)?;
    Ok(())
}

/// Scene keys shared by `sweep`; the point count and region come from the grid.
fn scene_spec_without_points(cfg: &RunConfig) -> Result<SyntheticSceneSpec, CliError> {
    Ok(SyntheticSceneSpec {
        n_instances: cfg.get("n_instances")?,
        n_categories: cfg.get("n_categories")?,
        feature_dim: cfg.get("feature_dim")?,
        noise_sigma: cfg.get("noise_sigma")?,
        rng_seed: cfg.get("seed")?,
        ..SyntheticSceneSpec::default()
    })
}
