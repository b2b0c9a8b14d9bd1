//! Dataset → selected ratings → embedded contexts → model samples.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use socnav_core::context::{embed_context, ContextVector, EmbeddingCache, LlmClient, RetryPolicy};
use socnav_core::dataset::{load_dataset, Dataset, Trajectory};
use socnav_core::features::{assemble_sequence, InputVector};
use socnav_core::metric::{predict_all, split_dataset, Checkpoint, Metrics, Sample, Split};
use socnav_core::qa::{partition_complete, select_raters, ControlSet, Selection, CONTROLS_FILE};
use socnav_core::transforms::{augment, to_goal_frame};

use crate::config::Config;
use crate::llm::ChatClient;

/// Explicit `paths.controls`, else `<dataset>/controls.json`, else inferred
/// from the rating records.
pub fn load_controls(cfg: &Config, dataset: &Dataset) -> anyhow::Result<ControlSet> {
    let default = cfg.paths.dataset.join(CONTROLS_FILE);
    let path: Option<PathBuf> = cfg.paths.controls.clone().or_else(|| default.is_file().then_some(default));
    match path {
        Some(p) => ControlSet::load(&p).map_err(|e| anyhow::anyhow!("{}: {e}", p.display())),
        None => Ok(ControlSet::infer(&dataset.raters)?),
    }
}

pub struct Prepared {
    pub dataset: Dataset,
    pub control: ControlSet,
    pub selection: Selection,
    /// Raters missing a control answer; never selected.
    pub incomplete: Vec<String>,
}

pub fn prepare(cfg: &Config) -> anyhow::Result<Prepared> {
    let dataset = load_dataset(&cfg.paths.dataset).with_context(|| format!("loading {}", cfg.paths.dataset.display()))?;
    let control = load_controls(cfg, &dataset)?;
    let (complete, incomplete) = partition_complete(&dataset.raters, &control);
    let selection = select_raters(&complete, &control, &cfg.qa)?;
    Ok(Prepared { dataset, control, selection, incomplete })
}

/// Context embedding through the on-disk cache, falling back to the LLM.
pub struct Embedder {
    cache: EmbeddingCache,
    client: Option<Box<dyn LlmClient>>,
    retry: RetryPolicy,
}

impl Embedder {
    pub fn open(cfg: &Config) -> anyhow::Result<Self> {
        let cache = EmbeddingCache::open(&cfg.paths.cache).with_context(|| format!("opening {}", cfg.paths.cache.display()))?;
        let client: Option<Box<dyn LlmClient>> =
            if cfg.llm.offline { None } else { Some(Box::new(ChatClient::from_config(&cfg.llm))) };
        Ok(Self { cache, client, retry: cfg.llm.retry() })
    }

    pub fn with_client(cache: EmbeddingCache, client: Option<Box<dyn LlmClient>>, retry: RetryPolicy) -> Self {
        Self { cache, client, retry }
    }

    pub fn embed(&self, text: &str) -> anyhow::Result<ContextVector> {
        Ok(embed_context(text, self.client.as_deref(), &self.cache, &self.retry)?)
    }

    pub fn embed_all<'a>(&self, texts: impl IntoIterator<Item = &'a str>) -> anyhow::Result<HashMap<String, ContextVector>> {
        let mut out = HashMap::new();
        for t in texts {
            if !out.contains_key(t) {
                out.insert(t.to_string(), self.embed(t).with_context(|| format!("embedding context {t:?}"))?);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatedItem {
    pub rater: String,
    pub trajectory_id: String,
    pub context: String,
    pub score: f64,
}

/// Non-control ratings of the selected raters whose trajectory exists, sorted
/// by trajectory, context and rater.
pub fn rated_items(p: &Prepared) -> Vec<RatedItem> {
    let selected: BTreeSet<&str> = p.selection.selected.iter().map(String::as_str).collect();
    let mut items: Vec<RatedItem> = p
        .dataset
        .raters
        .iter()
        .filter(|r| selected.contains(r.id.as_str()))
        .flat_map(|r| {
            r.ratings.iter().map(move |x| RatedItem {
                rater: r.id.clone(),
                trajectory_id: x.trajectory_id.clone(),
                context: x.context.clone(),
                score: x.score,
            })
        })
        .filter(|x| !p.control.contains(&x.trajectory_id) && p.dataset.trajectory(&x.trajectory_id).is_some())
        .collect();
    items.sort_by(|a, b| {
        (&a.trajectory_id, &a.context, &a.rater)
            .cmp(&(&b.trajectory_id, &b.context, &b.rater))
            .then(a.score.total_cmp(&b.score))
    });
    items
}

/// The trajectory as seen by the model.
pub fn normalize(t: &Trajectory, cfg: &Config) -> anyhow::Result<Trajectory> {
    if cfg.data.goal_frame && t.task.target_position.is_some() {
        Ok(to_goal_frame(t)?)
    } else {
        Ok(t.clone())
    }
}

pub fn sequence(t: &Trajectory, c: &ContextVector, cfg: &Config) -> anyhow::Result<Vec<InputVector>> {
    Ok(assemble_sequence(&normalize(t, cfg)?, c, &cfg.features)?)
}

fn lookup<'a>(contexts: &'a HashMap<String, ContextVector>, text: &str) -> anyhow::Result<&'a ContextVector> {
    contexts.get(text).ok_or_else(|| anyhow::anyhow!("context {text:?} was not embedded"))
}

/// One sample per item. Items sharing a (trajectory, context) pair share
/// their input sequence.
pub fn build_samples(
    dataset: &Dataset,
    items: &[RatedItem],
    contexts: &HashMap<String, ContextVector>,
    cfg: &Config,
) -> anyhow::Result<Vec<Sample>> {
    let pairs: BTreeSet<(&str, &str)> = items.iter().map(|x| (x.trajectory_id.as_str(), x.context.as_str())).collect();
    let pairs: Vec<(&str, &str)> = pairs.into_iter().collect();
    let seqs: Vec<Arc<Vec<InputVector>>> = pairs
        .par_iter()
        .map(|&(tid, ctx)| {
            let t = dataset.trajectory(tid).ok_or_else(|| anyhow::anyhow!("unknown trajectory {tid}"))?;
            Ok(Arc::new(sequence(t, lookup(contexts, ctx)?, cfg).with_context(|| format!("features of {tid}"))?))
        })
        .collect::<anyhow::Result<_>>()?;
    let index: HashMap<(&str, &str), usize> = pairs.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    Ok(items
        .iter()
        .map(|x| Sample {
            group: x.trajectory_id.clone(),
            inputs: seqs[index[&(x.trajectory_id.as_str(), x.context.as_str())]].clone(),
            target: x.score,
        })
        .collect())
}

/// `cfg.data.augment_copies` randomly transformed copies of every item whose
/// trajectory is in `groups`. Deterministic for a given transform seed.
pub fn augmented_samples(
    dataset: &Dataset,
    items: &[RatedItem],
    groups: &BTreeSet<String>,
    contexts: &HashMap<String, ContextVector>,
    cfg: &Config,
) -> anyhow::Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.transforms.rng_seed);
    let mut jobs: Vec<(Trajectory, &RatedItem)> = Vec::new();
    for _ in 0..cfg.data.augment_copies {
        for x in items.iter().filter(|x| groups.contains(&x.trajectory_id)) {
            let t = dataset.trajectory(&x.trajectory_id).ok_or_else(|| anyhow::anyhow!("unknown trajectory {}", x.trajectory_id))?;
            jobs.push((augment(t, &cfg.transforms, &mut rng)?, x));
        }
    }
    jobs.par_iter()
        .map(|(t, x)| {
            Ok(Sample {
                group: x.trajectory_id.clone(),
                inputs: Arc::new(sequence(t, lookup(contexts, &x.context)?, cfg)?),
                target: x.score,
            })
        })
        .collect()
}

/// Everything needed to train or evaluate.
pub struct TrainingData {
    pub items: Vec<RatedItem>,
    pub split: Split,
    /// Augmented copies of the training items, not included in `split.train`.
    pub augmented: Vec<Sample>,
    pub contexts: HashMap<String, ContextVector>,
}

impl TrainingData {
    pub fn train_set(&self) -> Vec<Sample> {
        self.split.train.iter().chain(&self.augmented).cloned().collect()
    }
}

pub fn training_data(p: &Prepared, embedder: &Embedder, cfg: &Config, with_augmentation: bool) -> anyhow::Result<TrainingData> {
    let items = rated_items(p);
    if items.is_empty() {
        bail!("no usable ratings: {} raters selected", p.selection.selected.len());
    }
    let contexts = embedder.embed_all(items.iter().map(|x| x.context.as_str()))?;
    let samples = build_samples(&p.dataset, &items, &contexts, cfg)?;
    let split = split_dataset(&samples, cfg.train.split, cfg.train.seed)?;
    let augmented = if with_augmentation && cfg.data.augment_copies > 0 {
        let groups: BTreeSet<String> = split.train.iter().map(|s| s.group.clone()).collect();
        augmented_samples(&p.dataset, &items, &groups, &contexts, cfg)?
    } else {
        Vec::new()
    };
    Ok(TrainingData { items, split, augmented, contexts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Baseline {
    /// Mean training target.
    pub mean: f64,
    pub metrics: Metrics,
}

/// Predicting the training mean for every sample of `eval`.
pub fn mean_baseline(train: &[Sample], eval: &[Sample]) -> anyhow::Result<Baseline> {
    if train.is_empty() {
        bail!("empty training set");
    }
    let mean = train.iter().map(|s| s.target).sum::<f64>() / train.len() as f64;
    let targets: Vec<f64> = eval.iter().map(|s| s.target).collect();
    Ok(Baseline { mean, metrics: Metrics::from_predictions(&vec![mean; targets.len()], &targets)? })
}

pub fn score_samples(c: &Checkpoint, samples: &[Sample]) -> anyhow::Result<Metrics> {
    let targets: Vec<f64> = samples.iter().map(|s| s.target).collect();
    Ok(Metrics::from_predictions(&predict_all(&c.params, samples)?, &targets)?)
}

/// Context most often paired with each control question by the given
/// raters, in control order. Ties go to the lexicographically first text.
pub fn control_contexts(dataset: &Dataset, control: &ControlSet, raters: &[String]) -> Vec<Option<String>> {
    let raters: BTreeSet<&str> = raters.iter().map(String::as_str).collect();
    let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for r in dataset.raters.iter().filter(|r| raters.contains(r.id.as_str())) {
        for x in &r.ratings {
            *counts.entry((x.trajectory_id.as_str(), x.context.as_str())).or_default() += 1;
        }
    }
    control
        .control()
        .iter()
        .map(|id| {
            counts
                .iter()
                .filter(|((t, _), _)| t == id)
                .max_by(|a, b| a.1.cmp(b.1).then(b.0 .1.cmp(a.0 .1)))
                .map(|((_, c), _)| c.to_string())
        })
        .collect()
}

/// Model score per control question, in control order.
pub fn control_estimates(p: &Prepared, c: &Checkpoint, embedder: &Embedder, cfg: &Config) -> anyhow::Result<Vec<f64>> {
    let ctx = control_contexts(&p.dataset, &p.control, &p.selection.selected);
    p.control
        .control()
        .iter()
        .zip(ctx)
        .map(|(id, text)| {
            let text = text.ok_or_else(|| anyhow::anyhow!("control {id} has no rating by a selected rater"))?;
            let t = p.dataset.trajectory(id).ok_or_else(|| anyhow::anyhow!("control trajectory {id} is missing"))?;
            Ok(c.params.forward(&sequence(t, &embedder.embed(&text)?, cfg)?)?)
        })
        .collect()
}
