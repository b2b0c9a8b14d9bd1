//! Subcommand definitions and their implementations.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use socnav_core::context::{ContextVector, EmbeddingCache, CONTEXT_NAMES};
use socnav_core::dataset::{load_dataset, load_trajectory_file, parse_rater_record, parse_trajectory, rating_files, serialize_rater_record, serialize_trajectory, trajectory_files, Trajectory};
use socnav_core::features::{raw_feature_rows, write_feature_csv, FEATURE_LAYOUT_VERSION};
use socnav_core::metric::{load_checkpoint, save_checkpoint, train, TrainEvent};
use socnav_core::qa::{consistency_matrix, control_stats, partition_complete, selection_sensitivity};
use socnav_core::synth::{generate_sweep, synthetic_corpus, write_corpus, CorpusConfig, SweepScenario, SweepSpec, SWEEP_CONTEXTS};
use socnav_viz::{
    dataset_stats, export_animation, plot_consistency_matrix, plot_control_questions, plot_histogram, plot_sweep_scores, plot_training_log,
    render_frame, score_sweep, RenderOptions,
};

use crate::config::Config;
use crate::pipeline::{self, mean_baseline, prepare, score_samples, training_data, Embedder};

/// Context embeddings for the bundled demonstration contexts.
pub const DEMO_CACHE: &str = include_str!("../fixtures/context_cache.jsonl");

#[derive(Debug, Parser)]
#[command(name = "socnav", version, about = "Tools for rated social-navigation trajectory datasets")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Configuration file [default: ./socnav.toml if present]
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dataset root (holds trajectories/ and ratings/)
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    /// Context embedding cache
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory for figures and reports
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Use cached context embeddings only
    #[arg(long, global = true)]
    pub offline: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse every dataset file and check that serialization round-trips
    Validate,
    /// Dataset counts, score histogram and rater demographics
    Stats,
    /// Render one frame of a trajectory file as SVG
    Render {
        trajectory: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, default_value_t = 50.0)]
        scale: f64,
    },
    /// Render every frame of a trajectory plus a timing manifest
    Animate {
        trajectory: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, default_value_t = 50.0)]
        scale: f64,
    },
    /// Rater selection, bin-count sensitivity and consistency figures
    Qa {
        /// Bin counts for the sensitivity table
        #[arg(long, value_delimiter = ',', default_value = "5,11,21")]
        bins: Vec<usize>,
    },
    /// Print the context vector of each text
    EmbedContext {
        #[arg(required = true)]
        texts: Vec<String>,
    },
    /// Write the per-step feature rows of a trajectory as CSV
    Features {
        trajectory: PathBuf,
        #[arg(long)]
        context: String,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Train the metric model with early stopping
    Train(TrainArgs),
    /// Test-split metrics of a checkpoint next to the mean baseline
    Evaluate,
    /// Score one trajectory under one context
    Predict {
        trajectory: PathBuf,
        #[arg(long)]
        context: String,
    },
    /// Score the synthetic deviation/speed sweeps and plot them
    Sweep {
        /// Scenario name, or all three when omitted
        #[arg(long)]
        scenario: Option<SweepScenario>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Plot per-control means, spreads and (with a checkpoint) model estimates
    PlotControls,
    /// Run the rating service
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
    /// Write a synthetic rated corpus with a matching cache and config
    Synth {
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long)]
        trajectories: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub augment_copies: Option<usize>,
    /// Print every epoch instead of improvements only
    #[arg(long)]
    pub verbose: bool,
}

/// Loads the configuration and applies global flags on top.
pub fn resolve_config(g: &Global) -> anyhow::Result<Config> {
    let mut cfg = Config::load(g.config.as_deref())?;
    if let Some(p) = &g.dataset {
        cfg.paths.dataset = p.clone();
    }
    if let Some(p) = &g.cache {
        cfg.paths.cache = p.clone();
    }
    if let Some(p) = &g.checkpoint {
        cfg.paths.checkpoint = p.clone();
    }
    if let Some(p) = &g.out {
        cfg.paths.out = p.clone();
    }
    if g.offline {
        cfg.llm.offline = true;
    }
    Ok(cfg)
}

impl TrainArgs {
    pub fn apply(&self, cfg: &mut Config) {
        let t = &mut cfg.train;
        t.max_epochs = self.epochs.unwrap_or(t.max_epochs);
        t.learning_rate = self.learning_rate.unwrap_or(t.learning_rate);
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.patience = self.patience.unwrap_or(t.patience);
        t.seed = self.seed.unwrap_or(t.seed);
        cfg.model.hidden = self.hidden.unwrap_or(cfg.model.hidden);
        cfg.model.layers = self.layers.unwrap_or(cfg.model.layers);
        cfg.data.augment_copies = self.augment_copies.unwrap_or(cfg.data.augment_copies);
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = resolve_config(&cli.global)?;
    if let Command::Train(a) = &cli.command {
        a.apply(&mut cfg);
    }
    cfg.validate()?;
    match cli.command {
        Command::Validate => validate(&cfg),
        Command::Stats => stats(&cfg),
        Command::Render { trajectory, frame, output, scale } => {
            let t = read_trajectory(&trajectory)?;
            let svg = render_frame(&t, frame, &RenderOptions { scale, ..RenderOptions::default() })?;
            write(&output, svg)
        }
        Command::Animate { trajectory, output, scale } => {
            let t = read_trajectory(&trajectory)?;
            let m = export_animation(&t, &output, &RenderOptions { scale, ..RenderOptions::default() })?;
            println!("{} frames written to {}", m.frames.len(), output.display());
            Ok(())
        }
        Command::Qa { bins } => qa(&cfg, &bins),
        Command::EmbedContext { texts } => {
            let e = Embedder::open(&cfg)?;
            for t in texts {
                let v = e.embed(&t)?;
                let named: serde_json::Map<_, _> = CONTEXT_NAMES.iter().zip(v.0).map(|(n, x)| (n.to_string(), json!(x))).collect();
                println!("{}", json!({"context": t, "vector": named}));
            }
            Ok(())
        }
        Command::Features { trajectory, context, output } => {
            let t = pipeline::normalize(&read_trajectory(&trajectory)?, &cfg)?;
            let c = Embedder::open(&cfg)?.embed(&context)?;
            let rows = raw_feature_rows(&t, &c, &cfg.features)?;
            match output {
                Some(p) => write_feature_csv(fs::File::create(&p).with_context(|| p.display().to_string())?, &rows)?,
                None => write_feature_csv(std::io::stdout().lock(), &rows)?,
            }
            Ok(())
        }
        Command::Train(a) => train_cmd(&cfg, a.verbose),
        Command::Evaluate => evaluate(&cfg),
        Command::Predict { trajectory, context } => {
            let ckpt = load_checkpoint(&cfg.paths.checkpoint, FEATURE_LAYOUT_VERSION)?;
            let t = read_trajectory(&trajectory)?;
            let c = Embedder::open(&cfg)?.embed(&context)?;
            println!("{:.6}", ckpt.params.forward(&pipeline::sequence(&t, &c, &cfg)?)?);
            Ok(())
        }
        Command::Sweep { scenario, dt, count } => sweep(&cfg, scenario, dt, count),
        Command::PlotControls => plot_controls(&cfg),
        Command::Serve { addr } => serve(&cfg, &addr),
        Command::Synth { output, trajectories, seed } => {
            let mut cc = CorpusConfig::default();
            cc.trajectories = trajectories.unwrap_or(cc.trajectories);
            cc.seed = seed.unwrap_or(cc.seed);
            synth(&output, &cc)
        }
    }
}

fn read_trajectory(path: &Path) -> anyhow::Result<Trajectory> {
    let id = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(load_trajectory_file(&id, path)?)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
    }
    fs::write(path, contents).with_context(|| path.display().to_string())
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    write(path, s)
}

fn validate(cfg: &Config) -> anyhow::Result<()> {
    let root = &cfg.paths.dataset;
    let mut failures = 0usize;
    let traj = trajectory_files(root)?;
    for (id, path) in &traj {
        let bytes = fs::read(path)?;
        let ok = parse_trajectory(&bytes)
            .map_err(|e| e.to_string())
            .and_then(|t| parse_trajectory(&serialize_trajectory(&t)).map(|u| t == u).map_err(|e| e.to_string()));
        match ok {
            Ok(true) => {}
            Ok(false) => {
                failures += 1;
                eprintln!("{id}: round trip changed the trajectory");
            }
            Err(e) => {
                failures += 1;
                eprintln!("{id}: {e}");
            }
        }
    }
    let ratings = rating_files(root)?;
    for (id, path) in &ratings {
        let ok = parse_rater_record(&fs::read(path)?)
            .map_err(|e| e.to_string())
            .and_then(|r| parse_rater_record(&serialize_rater_record(&r)).map(|u| r == u).map_err(|e| e.to_string()));
        if !matches!(ok, Ok(true)) {
            failures += 1;
            eprintln!("{id}: {}", ok.err().unwrap_or_else(|| "round trip changed the record".into()));
        }
    }
    let d = load_dataset(root)?;
    println!("{} trajectories, {} rating files, {} dangling references, {failures} failures", traj.len(), ratings.len(), d.dangling.len());
    for x in d.dangling.iter().take(20) {
        println!("  dangling: {} rating #{} -> {}", x.rater_id, x.rating_index, x.trajectory_id);
    }
    if failures > 0 {
        bail!("{failures} files failed validation");
    }
    Ok(())
}

fn stats(cfg: &Config) -> anyhow::Result<()> {
    let d = load_dataset(&cfg.paths.dataset)?;
    let selected = pipeline::load_controls(cfg, &d)
        .and_then(|c| Ok(socnav_core::qa::select_raters(&partition_complete(&d.raters, &c).0, &c, &cfg.qa)?))
        .map(|s| s.selected)
        .ok();
    let s = dataset_stats(&d, selected.as_deref());
    print!("{}", s.report());
    write_json(&cfg.paths.out.join("stats.json"), &s)?;
    write(&cfg.paths.out.join("score_histogram.svg"), plot_histogram("Score distribution", &s.score_histogram))
}

fn qa(cfg: &Config, bins: &[usize]) -> anyhow::Result<()> {
    let p = prepare(cfg)?;
    let (complete, incomplete) = partition_complete(&p.dataset.raters, &p.control);
    println!("{} raters, {} complete, {} incomplete", p.dataset.raters.len(), complete.len(), incomplete.len());
    println!("n_bins  selected");
    for (n, r) in selection_sensitivity(&complete, &p.control, &cfg.qa, bins) {
        match r {
            Ok(k) => println!("{n:>6}  {k}"),
            Err(e) => println!("{n:>6}  error: {e}"),
        }
    }
    println!("selected at n_bins = {}: {}", cfg.qa.n_bins, p.selection.selected.len());
    write_json(&cfg.paths.out.join("selection.json"), &p.selection)?;
    let ids: Vec<String> = complete.iter().map(|r| r.id.clone()).collect();
    let m = consistency_matrix(&complete, &p.control, cfg.qa.n_bins)?;
    write(&cfg.paths.out.join("consistency.svg"), plot_consistency_matrix(&ids, &m))
}

fn train_cmd(cfg: &Config, verbose: bool) -> anyhow::Result<()> {
    let p = prepare(cfg)?;
    let embedder = Embedder::open(cfg)?;
    let data = training_data(&p, &embedder, cfg, true)?;
    let train_set = data.train_set();
    eprintln!(
        "{} selected raters, {} items: train {} (+{} augmented), validation {}, test {}",
        p.selection.selected.len(),
        data.items.len(),
        data.split.train.len(),
        data.augmented.len(),
        data.split.validation.len(),
        data.split.test.len()
    );
    let mut save_error = None;
    let outcome = train(&train_set, &data.split.validation, cfg.model.shape(), FEATURE_LAYOUT_VERSION, &cfg.train, |ev| match ev {
        TrainEvent::Epoch(e) => {
            if verbose || e.improved {
                eprintln!("epoch {:>5}  train {:.5}  val {:.5}{}", e.epoch, e.train_loss, e.val_loss, if e.improved { "  *" } else { "" });
            }
        }
        TrainEvent::Improved(c) => {
            if let Err(e) = save_checkpoint(c, &cfg.paths.checkpoint) {
                save_error.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = save_error {
        return Err(e).context("saving checkpoint");
    }
    let test = score_samples(&outcome.best, &data.split.test)?;
    let baseline = mean_baseline(&data.split.train, &data.split.test)?;
    let improvement = 1.0 - test.mse / baseline.metrics.mse;
    println!(
        "best epoch {}: val MSE {:.5}; test MSE {:.5}, MAE {:.5}; mean baseline MSE {:.5} ({:+.1}%)",
        outcome.best.epoch,
        outcome.best.val_loss,
        test.mse,
        test.mae,
        baseline.metrics.mse,
        100.0 * improvement
    );
    let out = &cfg.paths.out;
    write_json(&out.join("train_log.json"), &outcome.log)?;
    write(&out.join("training.svg"), plot_training_log(&outcome.log))?;
    write_json(
        &out.join("train_report.json"),
        &json!({
            "checkpoint": cfg.paths.checkpoint,
            "best_epoch": outcome.best.epoch,
            "validation_mse": outcome.best.val_loss,
            "test": test,
            "baseline": baseline,
            "improvement_over_baseline": improvement,
            "samples": {"train": data.split.train.len(), "augmented": data.augmented.len(),
                        "validation": data.split.validation.len(), "test": data.split.test.len()},
            "config": {"model": cfg.model, "train": cfg.train},
        }),
    )?;
    let estimates = pipeline::control_estimates(&p, &outcome.best, &embedder, cfg)?;
    let selected: BTreeSet<&str> = p.selection.selected.iter().map(String::as_str).collect();
    let raters: Vec<_> = p.dataset.raters.iter().filter(|r| selected.contains(r.id.as_str())).cloned().collect();
    write(&out.join("control_questions.svg"), plot_control_questions(&control_stats(&raters, &p.control)?, Some(&estimates)))
}

fn evaluate(cfg: &Config) -> anyhow::Result<()> {
    let ckpt = load_checkpoint(&cfg.paths.checkpoint, FEATURE_LAYOUT_VERSION)?;
    let p = prepare(cfg)?;
    let data = training_data(&p, &Embedder::open(cfg)?, cfg, false)?;
    let mut report = serde_json::Map::new();
    for (name, set) in [("train", &data.split.train), ("validation", &data.split.validation), ("test", &data.split.test)] {
        if set.is_empty() {
            continue;
        }
        let m = score_samples(&ckpt, set)?;
        let b = mean_baseline(&data.split.train, set)?;
        println!("{name:<10}  n {:>6}  MSE {:.5}  MAE {:.5}  baseline MSE {:.5}", m.count, m.mse, m.mae, b.metrics.mse);
        report.insert(name.into(), json!({"model": m, "baseline": b}));
    }
    write_json(&cfg.paths.out.join("evaluation.json"), &report)
}

fn sweep(cfg: &Config, scenario: Option<SweepScenario>, dt: Option<f64>, count: Option<usize>) -> anyhow::Result<()> {
    let ckpt = load_checkpoint(&cfg.paths.checkpoint, FEATURE_LAYOUT_VERSION)?;
    let e = Embedder::open(cfg)?;
    let contexts: Vec<(String, ContextVector)> =
        SWEEP_CONTEXTS.iter().map(|(label, text)| Ok((label.to_string(), e.embed(text)?))).collect::<anyhow::Result<_>>()?;
    let scenarios = scenario.map(|s| vec![s]).unwrap_or_else(|| SweepScenario::ALL.to_vec());
    for s in scenarios {
        let mut spec = SweepSpec::new(s);
        spec.dt = dt.unwrap_or(spec.dt);
        spec.n_trajectories = count.unwrap_or(spec.n_trajectories);
        let items: Vec<_> = generate_sweep(&spec)
            .map_err(anyhow::Error::msg)?
            .into_iter()
            .map(|mut it| {
                it.trajectory = pipeline::normalize(&it.trajectory, cfg)?;
                Ok(it)
            })
            .collect::<anyhow::Result<_>>()?;
        let scores = score_sweep(&ckpt, &items, &contexts, &cfg.features)?;
        for (label, _) in &contexts {
            let means: Vec<String> = spec.speeds.iter().map(|&v| format!("{v:.2}: {:.3}", scores.mean(label, v).unwrap_or(f64::NAN))).collect();
            println!("{:<22} {:<8} {}", s.as_str(), label, means.join("  "));
        }
        write_json(&cfg.paths.out.join(format!("sweep_{}.json", s.as_str())), &scores)?;
        write(&cfg.paths.out.join(format!("sweep_{}.svg", s.as_str())), plot_sweep_scores(&scores))?;
    }
    Ok(())
}

fn plot_controls(cfg: &Config) -> anyhow::Result<()> {
    let p = prepare(cfg)?;
    let selected: BTreeSet<&str> = p.selection.selected.iter().map(String::as_str).collect();
    let raters: Vec<_> = p.dataset.raters.iter().filter(|r| selected.contains(r.id.as_str())).cloned().collect();
    let stats = control_stats(&raters, &p.control)?;
    let estimates = if cfg.paths.checkpoint.is_file() {
        let ckpt = load_checkpoint(&cfg.paths.checkpoint, FEATURE_LAYOUT_VERSION)?;
        Some(pipeline::control_estimates(&p, &ckpt, &Embedder::open(cfg)?, cfg)?)
    } else {
        None
    };
    for (k, s) in stats.iter().enumerate() {
        let est = estimates.as_ref().map(|e| format!("  model {:.3}", e[k])).unwrap_or_default();
        println!("{:<40} mean {:.3}  std {:.3}  n {}{est}", s.trajectory_id, s.mean, s.std, s.count);
    }
    write(&cfg.paths.out.join("control_questions.svg"), plot_control_questions(&stats, estimates.as_deref()))
}

fn serve(cfg: &Config, addr: &str) -> anyhow::Result<()> {
    let sc = cfg.survey.clone().context("the configuration has no [survey] section")?;
    let survey = socnav_survey::Survey::open(sc)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        socnav_survey::serve(survey, listener).await?;
        Ok(())
    })
}

/// Distinct context texts of the demonstration cache, in first-seen order.
pub fn demo_contexts() -> anyhow::Result<Vec<String>> {
    let mut seen = Vec::new();
    for line in DEMO_CACHE.lines().filter(|l| !l.trim().is_empty()) {
        let r: socnav_core::context::CacheRecord = serde_json::from_str(line)?;
        if !seen.contains(&r.context) {
            seen.push(r.context);
        }
    }
    Ok(seen)
}

fn synth(root: &Path, cc: &CorpusConfig) -> anyhow::Result<()> {
    fs::create_dir_all(root)?;
    let cache_path = root.join("context_cache.jsonl");
    write(&cache_path, DEMO_CACHE)?;
    let cache = EmbeddingCache::open(&cache_path)?;
    let e = Embedder::with_client(cache, None, Default::default());
    let contexts: Vec<(String, ContextVector)> =
        demo_contexts()?.into_iter().map(|t| Ok((t.clone(), e.embed(&t)?))).collect::<anyhow::Result<_>>()?;
    let corpus = synthetic_corpus(cc, &contexts).map_err(anyhow::Error::msg)?;
    write_corpus(root.join("data"), &corpus)?;
    let toml = "\
[paths]
dataset = \"data\"
cache = \"context_cache.jsonl\"
checkpoint = \"model.altm\"
out = \"out\"

[model]
hidden = 16
layers = 2
head_hidden = 16

[train]
learning_rate = 0.001
max_epochs = 200

[llm]
offline = true
";
    write(&root.join("socnav.toml"), toml)?;
    println!("{} trajectories, {} raters written to {}", corpus.trajectories.len(), corpus.raters.len(), root.display());
    Ok(())
}
