//! Online continual learning runs: stream consumption, cut-out selection,
//! replay, regularized training, periodic evaluation, and ablation ladders.

use std::fs;
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assessor::average_fiedler;
use crate::error::{Error, Result};
use crate::io::write_cmp1;
use crate::metrics::{aggregate, ap50, map_cf1_of1, Aggregate, EvalRecord, MetricRow, TaskMetrics, F1_THRESHOLD};
use crate::model::{
    loss_and_gradients, sgd_step, AsymLossParams, ModelDims, ModelParams, RegularizerSpec, SgdState, TrainItem,
};
use crate::patchgraph::{FeatureMap, KernelSpec};
use crate::replay::{Accounting, BufferSnapshot, ItemMeta, MemoryBuffer, MemoryItem, SelectionPolicy};
use crate::seeding::derive_rng;
use crate::spectral_cut::{maskcut, BBox, DEFAULT_MASKCUT_ITERS};
use crate::stream::{oracle_view, StreamConfig, StreamSample, StreamState};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Whole images in a classic reservoir, no cutting.
    RsBaseline,
    /// Cut-outs with a single threshold and a classic reservoir.
    Cutrep,
    CutrepReg,
    /// Cut-outs with dual thresholds and rebalanced insertion.
    Cuter,
    CuterReg,
}

impl Variant {
    pub const LADDER: [Variant; 4] = [Variant::RsBaseline, Variant::Cutrep, Variant::Cuter, Variant::CuterReg];

    pub fn name(self) -> &'static str {
        match self {
            Variant::RsBaseline => "rs_baseline",
            Variant::Cutrep => "cutrep",
            Variant::CutrepReg => "cutrep_reg",
            Variant::Cuter => "cuter",
            Variant::CuterReg => "cuter_reg",
        }
    }

    pub fn cuts(self) -> bool {
        self != Variant::RsBaseline
    }

    pub fn rebalanced(self) -> bool {
        matches!(self, Variant::Cuter | Variant::CuterReg)
    }

    pub fn regularized(self) -> bool {
        matches!(self, Variant::CutrepReg | Variant::CuterReg)
    }
}

/// Variants and seeds to sweep instead of a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSpec {
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// The stream's own seed is replaced by `seed` for runs.
    pub stream: StreamConfig,
    /// Kernel for Fiedler tracking and the feature-graph regularizer.
    pub kernel: KernelSpec,
    /// Kernel for MaskCut.
    pub cut_kernel: KernelSpec,
    pub selection: SelectionPolicy,
    pub regularizer: RegularizerSpec,
    pub asl: AsymLossParams,
    pub n_iters_maskcut: usize,
    pub capacity: usize,
    pub accounting: Accounting,
    pub lr: f64,
    pub momentum: f64,
    pub stream_batch: usize,
    pub replay_batch: usize,
    /// Steps between mid-task evaluations; 0 evaluates only at task ends.
    pub eval_every: usize,
    pub variant: Variant,
    pub seed: u64,
    pub dim_feat: usize,
    /// Standard deviation of the initial encoder weights.
    pub init_scale: f64,
    pub regularize_replay: bool,
    /// Treat unobserved classes of stream samples as negatives.
    pub unobserved_as_negative: bool,
    /// Admit a crop only if its predicted class is tagged on its image.
    pub require_label_alignment: bool,
    pub eval_samples: usize,
    pub probe_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ablation: Option<AblationSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            stream: StreamConfig::default(),
            kernel: KernelSpec::gaussian_median(),
            cut_kernel: KernelSpec::gaussian_median(),
            selection: SelectionPolicy::default(),
            regularizer: RegularizerSpec::default(),
            asl: AsymLossParams::default(),
            n_iters_maskcut: DEFAULT_MASKCUT_ITERS,
            capacity: 200,
            accounting: Accounting::Count,
            lr: 0.5,
            momentum: 0.9,
            stream_batch: 8,
            replay_batch: 4,
            eval_every: 0,
            variant: Variant::CuterReg,
            seed: 0,
            dim_feat: 12,
            init_scale: 0.5,
            regularize_replay: false,
            unobserved_as_negative: false,
            require_label_alignment: true,
            eval_samples: 200,
            probe_samples: 32,
            ablation: None,
        }
    }
}

fn under(prefix: &str, r: Result<()>) -> Result<()> {
    r.map_err(|e| match e {
        Error::Config { path, message } => {
            let path = match path.split_once('.') {
                Some((_, tail)) => format!("{prefix}.{tail}"),
                None => prefix.to_string(),
            };
            Error::Config {
                path,
                message,
            }
        }
        other => other,
    })
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config("schema_version", format!("expected {SCHEMA_VERSION}")));
        }
        under("stream", self.stream.validate())?;
        under("kernel", self.kernel.validate())?;
        under("cut_kernel", self.cut_kernel.validate())?;
        under("selection", self.selection.validate())?;
        under("regularizer", self.regularizer.validate())?;
        under("asl", self.asl.validate())?;
        if self.regularizer.is_active() && self.kernel.kind != crate::patchgraph::KernelKind::Gaussian {
            return Err(Error::config("kernel.kind", "the regularizer needs the gaussian kernel"));
        }
        let positive = [
            ("n_iters_maskcut", self.n_iters_maskcut),
            ("capacity", self.capacity),
            ("stream_batch", self.stream_batch),
            ("dim_feat", self.dim_feat),
            ("eval_samples", self.eval_samples),
            ("probe_samples", self.probe_samples),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(name, "must be at least 1"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum", "must lie in [0, 1)"));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::config("init_scale", "must be positive"));
        }
        if let Some(a) = &self.ablation {
            if a.variants.is_empty() {
                return Err(Error::config("ablation.variants", "must not be empty"));
            }
            if a.seeds.is_empty() {
                return Err(Error::config("ablation.seeds", "must not be empty"));
            }
        }
        Ok(())
    }

    pub fn effective_stream(&self) -> StreamConfig {
        StreamConfig {
            seed: self.seed,
            ..self.stream.clone()
        }
    }

    pub fn model_dims(&self) -> ModelDims {
        ModelDims {
            dim_in: self.stream.dim_in,
            dim_feat: self.dim_feat,
            n_classes_max: self.stream.n_classes(),
        }
    }

    pub fn run_id(&self) -> String {
        format!("{}_s{}", self.variant.name(), self.seed)
    }

    /// Parses a JSON config, reporting the offending field path on error.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Mean Fiedler value and AP50 of the probe set at one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiedlerPoint {
    pub task_id: usize,
    pub step: usize,
    pub mean_fiedler: f64,
    pub ap50: f64,
}

impl FiedlerPoint {
    pub const CSV_HEADER: &'static str = "run_id,task_id,step,mean_fiedler,AP50";
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: RunConfig,
    pub rows: Vec<MetricRow>,
    /// Evaluation at the end of each task.
    pub task_metrics: Vec<TaskMetrics>,
    pub aggregate: Aggregate,
    pub fiedler: Vec<FiedlerPoint>,
    pub buffers: Vec<BufferSnapshot>,
    pub params: ModelParams,
}

impl RunArtifacts {
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from(MetricRow::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.to_csv());
            s.push('\n');
        }
        s
    }

    pub fn fiedler_csv(&self) -> String {
        let id = self.config.run_id();
        let mut s = String::from(FiedlerPoint::CSV_HEADER);
        s.push('\n');
        for p in &self.fiedler {
            s.push_str(&format!("{id},{},{},{:.6},{:.6}\n", p.task_id, p.step, p.mean_fiedler, p.ap50));
        }
        s
    }

    /// Writes metrics.csv, fiedler.csv, buffer_task{k}.json,
    /// checkpoint.cmp1 and config.echo.json into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.csv"), self.metrics_csv())?;
        fs::write(dir.join("fiedler.csv"), self.fiedler_csv())?;
        for (k, b) in self.buffers.iter().enumerate() {
            fs::write(dir.join(format!("buffer_task{k}.json")), to_json(b)?)?;
        }
        write_cmp1(&dir.join("checkpoint.cmp1"), &self.params)?;
        fs::write(dir.join("config.echo.json"), to_json(&self.config)?)?;
        Ok(())
    }
}

pub(crate) fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// Classic reservoir of whole images with their observed labels.
#[derive(Debug, Clone)]
struct ImageReservoir {
    items: Vec<(FeatureMap, Vec<usize>, usize)>,
    capacity: usize,
    seen: u64,
}

impl ImageReservoir {
    fn insert(&mut self, raw: &FeatureMap, labels: Vec<usize>, task: usize, rng: &mut impl Rng) {
        self.seen += 1;
        if self.items.len() < self.capacity {
            self.items.push((raw.clone(), labels, task));
            return;
        }
        let slot = rng.gen_range(0..self.seen);
        if (slot as usize) < self.capacity {
            self.items[slot as usize] = (raw.clone(), labels, task);
        }
    }

    fn histogram(&self, n: usize) -> Vec<usize> {
        let mut h = vec![0; n];
        for (_, labels, _) in &self.items {
            for &l in labels {
                h[l] += 1;
            }
        }
        h
    }

    fn snapshot(&self, n: usize) -> BufferSnapshot {
        BufferSnapshot {
            schema_version: SCHEMA_VERSION,
            capacity: self.capacity,
            accounting: Accounting::Count,
            used: self.items.len(),
            class_histogram: self
                .histogram(n)
                .into_iter()
                .enumerate()
                .filter(|(_, c)| *c > 0)
                .collect(),
            items: self
                .items
                .iter()
                .map(|(fm, labels, task)| ItemMeta {
                    labels: labels.clone(),
                    confidence: 1.0,
                    area: fm.n_patches(),
                    crop_h: fm.grid_h(),
                    crop_w: fm.grid_w(),
                    source_task: *task,
                })
                .collect(),
        }
    }
}

fn balance_ratio(hist: &[usize]) -> f64 {
    let present: Vec<usize> = hist.iter().copied().filter(|&c| c > 0).collect();
    match (present.iter().max(), present.iter().min()) {
        (Some(&max), Some(&min)) => max as f64 / min as f64,
        _ => 0.0,
    }
}

/// Raw patches inside `b`.
pub fn crop(raw: &FeatureMap, b: &BBox) -> Result<FeatureMap> {
    let dim = raw.dim();
    let mut data = Vec::with_capacity(b.area() * dim);
    for r in b.h1..=b.h2 {
        for c in b.w1..=b.w2 {
            data.extend_from_slice(raw.patch_at(r, c));
        }
    }
    FeatureMap::new(b.height(), b.width(), dim, data)
}

/// Learner-side state. Classes are addressed by head slot, in order of
/// first appearance across tasks.
struct Learner<'a> {
    cfg: &'a RunConfig,
    params: ModelParams,
    opt: SgdState,
    buffer: MemoryBuffer,
    images: ImageReservoir,
    seen_candidates: u64,
    slot_of: Vec<usize>,
    buffer_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
}

impl<'a> Learner<'a> {
    fn new(cfg: &'a RunConfig, task_classes: &[Vec<usize>]) -> Result<Self> {
        let dims = cfg.model_dims();
        let params = ModelParams::init(dims, cfg.init_scale, &mut derive_rng(cfg.seed, "init", 0));
        let mut slot_of = vec![0; dims.n_classes_max];
        for (slot, &c) in task_classes.iter().flatten().enumerate() {
            slot_of[c] = slot;
        }
        Ok(Self {
            cfg,
            opt: SgdState::new(&params),
            params,
            buffer: MemoryBuffer::new(cfg.capacity, cfg.accounting, dims.n_classes_max)?,
            images: ImageReservoir {
                items: Vec::new(),
                capacity: cfg.capacity,
                seen: 0,
            },
            seen_candidates: 0,
            slot_of,
            buffer_rng: derive_rng(cfg.seed, "buffer", 0),
            replay_rng: derive_rng(cfg.seed, "replay", 0),
        })
    }

    fn slots(&self, classes: &[usize]) -> Vec<usize> {
        classes.iter().map(|&c| self.slot_of[c]).collect()
    }

    fn candidates(&self, batch: &[StreamSample], task: usize) -> Result<Vec<MemoryItem>> {
        let cfg = self.cfg;
        let mut out = Vec::new();
        for s in batch {
            let tagged = self.slots(&s.observed_labels);
            let fm = self.params.encode(&s.raw)?;
            let cut = maskcut(&fm, &cfg.cut_kernel, cfg.n_iters_maskcut)?;
            for it in &cut.iterations {
                if it.bbox.area() < 2 {
                    continue;
                }
                let p = self.params.predict(&fm, Some(it.bbox))?;
                let admitted = if cfg.variant.rebalanced() {
                    cfg.selection.admit(&p, &self.buffer.stream_class_freq)
                } else {
                    cfg.selection.admit_at(&p, cfg.selection.tau2)
                };
                let admitted = admitted.filter(|(label, _)| !cfg.require_label_alignment || tagged.contains(label));
                if let Some((label, confidence)) = admitted {
                    out.push(MemoryItem {
                        crop: crop(&s.raw, &it.bbox)?,
                        label,
                        confidence,
                        source_task: task,
                    });
                }
            }
        }
        Ok(out)
    }

    fn step(&mut self, batch: &[StreamSample], task: usize, task_slots: &[usize]) -> Result<()> {
        let cfg = self.cfg;
        let active = self.params.active_classes;
        for s in batch {
            let slots = self.slots(&s.observed_labels);
            self.buffer.observe_stream_labels(&slots);
        }
        let candidates = if cfg.variant.cuts() {
            self.candidates(batch, task)?
        } else {
            Vec::new()
        };

        let stream_reg = if cfg.variant.regularized() {
            cfg.regularizer
        } else {
            RegularizerSpec::none()
        };
        let observed: Vec<bool> = (0..active)
            .map(|c| cfg.unobserved_as_negative || task_slots.contains(&c))
            .collect();
        let stream_items: Vec<TrainItem<'_>> = batch
            .iter()
            .map(|s| {
                let slots = self.slots(&s.observed_labels);
                TrainItem {
                    raw: &s.raw,
                    region: None,
                    targets: (0..active).map(|c| f64::from(u8::from(slots.contains(&c)))).collect(),
                    observed: observed.clone(),
                    regularize: true,
                    sigma: None,
                }
            })
            .collect();
        let (_, mut grads) = loss_and_gradients(&self.params, &stream_items, &cfg.asl, &cfg.kernel, &stream_reg)?;

        let replay_reg = if cfg.regularize_replay {
            stream_reg
        } else {
            RegularizerSpec::none()
        };
        let replay_items = self.replay_items(active)?;
        if !replay_items.is_empty() {
            let items: Vec<TrainItem<'_>> = replay_items
                .iter()
                .map(|(raw, targets)| TrainItem {
                    raw,
                    region: None,
                    targets: targets.clone(),
                    observed: vec![true; active],
                    regularize: true,
                    sigma: None,
                })
                .collect();
            let (_, g) = loss_and_gradients(&self.params, &items, &cfg.asl, &cfg.kernel, &replay_reg)?;
            grads.axpy(1.0, &g);
        }
        sgd_step(&mut self.params, &grads, cfg.lr, cfg.momentum, &mut self.opt)?;
        if !self.params.is_finite() {
            return Err(Error::NonFinite("model parameters"));
        }

        if cfg.variant.cuts() {
            for item in candidates {
                if cfg.variant.rebalanced() {
                    self.buffer.insert(item, &mut self.buffer_rng)?;
                } else {
                    self.seen_candidates += 1;
                    self.buffer
                        .vanilla_reservoir_insert(item, self.seen_candidates, &mut self.buffer_rng)?;
                }
            }
        } else {
            for s in batch {
                let slots = self.slots(&s.observed_labels);
                self.images.insert(&s.raw, slots, task, &mut self.buffer_rng);
            }
        }
        Ok(())
    }

    /// Replay inputs with one-hot or multi-hot targets over active slots.
    fn replay_items(&mut self, active: usize) -> Result<Vec<(FeatureMap, Vec<f64>)>> {
        let k = self.cfg.replay_batch;
        if k == 0 {
            return Ok(Vec::new());
        }
        let hot = |labels: &[usize]| (0..active).map(|c| f64::from(u8::from(labels.contains(&c)))).collect();
        if self.cfg.variant.cuts() {
            match self.buffer.sample_replay_batch(k, &mut self.replay_rng) {
                Ok(items) => Ok(items.into_iter().map(|it| (it.crop.clone(), hot(&[it.label]))).collect()),
                Err(Error::EmptyBuffer) => Ok(Vec::new()),
                Err(e) => Err(e),
            }
        } else {
            let n = self.images.items.len();
            if n == 0 {
                return Ok(Vec::new());
            }
            let idx: Vec<usize> = if k <= n {
                sample_indices(&mut self.replay_rng, n, k).into_vec()
            } else {
                (0..k).map(|_| self.replay_rng.gen_range(0..n)).collect()
            };
            Ok(idx
                .into_iter()
                .map(|i| {
                    let (raw, labels, _) = &self.images.items[i];
                    (raw.clone(), hot(labels))
                })
                .collect())
        }
    }

    fn histogram(&self) -> Vec<usize> {
        if self.cfg.variant.cuts() {
            self.buffer.class_histogram()
        } else {
            self.images.histogram(self.cfg.stream.n_classes())
        }
    }

    fn snapshot(&self) -> BufferSnapshot {
        if self.cfg.variant.cuts() {
            self.buffer.snapshot()
        } else {
            self.images.snapshot(self.cfg.stream.n_classes())
        }
    }
}

/// Multi-label scores over the first `seen` slots on fully annotated samples.
fn evaluate(params: &ModelParams, eval: &[StreamSample], slot_of: &[usize], seen: usize) -> Result<TaskMetrics> {
    let mut rec = EvalRecord::default();
    for s in eval {
        let p = params.predict_raw(&s.raw, None)?;
        let (full, _) = oracle_view(s);
        let slots: Vec<usize> = full.iter().map(|&c| slot_of[c]).collect();
        rec.push(p[..seen].to_vec(), (0..seen).map(|c| slots.contains(&c)).collect());
    }
    let m = map_cf1_of1(&rec, F1_THRESHOLD)?;
    Ok(TaskMetrics {
        map: m.map,
        cf1: m.cf1,
        of1: m.of1,
        ap50: 0.0,
    })
}

/// Mean Fiedler value of encoded probes and AP50 of their MaskCut boxes.
pub fn probe_point(params: &ModelParams, probes: &[StreamSample], cfg: &RunConfig) -> Result<(f64, f64)> {
    let fms: Vec<FeatureMap> = probes.iter().map(|s| params.encode(&s.raw)).collect::<Result<_>>()?;
    let report = average_fiedler("probe", &fms, &cfg.kernel)?;
    let mut preds = Vec::with_capacity(fms.len());
    let mut gts = Vec::with_capacity(fms.len());
    for (fm, s) in fms.iter().zip(probes) {
        let cut = maskcut(fm, &cfg.cut_kernel, cfg.n_iters_maskcut)?;
        let n = cut.iterations.len();
        preds.push(
            cut.iterations
                .iter()
                .enumerate()
                .map(|(t, it)| (it.bbox, (n - t) as f64))
                .collect(),
        );
        gts.push(oracle_view(s).1.iter().map(|(_, b)| *b).collect());
    }
    Ok((report.mean_fiedler, ap50(&preds, &gts)?))
}

/// Runs one variant end to end on its configured stream.
pub fn run_mocl(cfg: &RunConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let stream = StreamState::new(cfg.effective_stream())?;
    let probes = stream.held_out("probe", cfg.probe_samples);
    run_with_probes(cfg, stream, &probes)
}

/// Probe-set trace of one run, one point per evaluation.
pub fn track_fiedler(cfg: &RunConfig, probe_set: &[StreamSample]) -> Result<Vec<FiedlerPoint>> {
    cfg.validate()?;
    if probe_set.is_empty() {
        return Err(Error::config("probe_set", "must not be empty"));
    }
    let stream = StreamState::new(cfg.effective_stream())?;
    Ok(run_with_probes(cfg, stream, probe_set)?.fiedler)
}

fn run_with_probes(cfg: &RunConfig, mut stream: StreamState, probes: &[StreamSample]) -> Result<RunArtifacts> {
    let eval_set = stream.held_out("eval", cfg.eval_samples);
    let task_classes = stream.schedule().task_classes.clone();
    let mut learner = Learner::new(cfg, &task_classes)?;
    let run_id = cfg.run_id();

    let mut rows = Vec::new();
    let mut fiedler = Vec::new();
    let mut task_metrics = Vec::new();
    let mut buffers = Vec::new();
    let mut step = 0usize;
    let mut seen = 0usize;

    loop {
        let task = stream.current_task();
        let task_slots: Vec<usize> = (seen..seen + task_classes[task].len()).collect();
        seen += task_classes[task].len();
        learner.params.set_active_classes(seen)?;

        let mut record = |learner: &Learner<'_>, step: usize| -> Result<TaskMetrics> {
            let mut m = evaluate(&learner.params, &eval_set, &learner.slot_of, seen)?;
            let (mean_fiedler, ap) = probe_point(&learner.params, probes, cfg)?;
            m.ap50 = ap;
            fiedler.push(FiedlerPoint {
                task_id: task,
                step,
                mean_fiedler,
                ap50: ap,
            });
            rows.push(MetricRow {
                run_id: run_id.clone(),
                task_id: task,
                step,
                metrics: m,
                mean_fiedler,
                buffer_ratio: balance_ratio(&learner.histogram()),
            });
            Ok(m)
        };

        loop {
            let batch = match stream.next_batch(cfg.stream_batch) {
                Ok(b) => b,
                Err(Error::EndOfTask) => break,
                Err(e) => return Err(e),
            };
            step += 1;
            let aborted = |e: Error| Error::RunAborted {
                step,
                source: Box::new(e),
            };
            learner.step(&batch, task, &task_slots).map_err(aborted)?;
            if cfg.eval_every > 0 && step % cfg.eval_every == 0 && stream.remaining_in_task() > 0 {
                record(&learner, step).map_err(aborted)?;
            }
        }
        let m = record(&learner, step).map_err(|e| Error::RunAborted {
            step,
            source: Box::new(e),
        })?;
        task_metrics.push(m);
        buffers.push(learner.snapshot());
        if !stream.advance_task() {
            break;
        }
    }

    let mut config = cfg.clone();
    config.stream = cfg.effective_stream();
    Ok(RunArtifacts {
        aggregate: aggregate(&task_metrics)?,
        config,
        rows,
        task_metrics,
        fiedler,
        buffers,
        params: learner.params,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    pub avg: TaskMetrics,
    pub last: TaskMetrics,
    pub final_fiedler: f64,
    pub final_ap50: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub variant: Variant,
    pub seeds: usize,
    pub avg_map: f64,
    pub last_map: f64,
    pub last_cf1: f64,
    pub last_of1: f64,
    pub final_fiedler: f64,
    pub final_ap50: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub schema_version: u32,
    pub rows: Vec<AblationRow>,
    pub summary: Vec<AblationSummary>,
}

impl AblationTable {
    pub fn summary_for(&self, v: Variant) -> Option<&AblationSummary> {
        self.summary.iter().find(|s| s.variant == v)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "variant,seed,avg_mAP,avg_CF1,avg_OF1,last_mAP,last_CF1,last_OF1,final_fiedler,final_AP50\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.variant.name(),
                r.seed,
                r.avg.map,
                r.avg.cf1,
                r.avg.of1,
                r.last.map,
                r.last.cf1,
                r.last.of1,
                r.final_fiedler,
                r.final_ap50
            ));
        }
        s
    }
}

/// Runs every variant on every seed; `on_run` sees each finished run.
pub fn run_ablation_with(
    base: &RunConfig,
    variants: &[Variant],
    seeds: &[u64],
    mut on_run: impl FnMut(&RunArtifacts) -> Result<()>,
) -> Result<AblationTable> {
    if variants.is_empty() {
        return Err(Error::config("ablation.variants", "must not be empty"));
    }
    if seeds.is_empty() {
        return Err(Error::config("ablation.seeds", "must not be empty"));
    }
    let mut rows = Vec::new();
    for &variant in variants {
        for &seed in seeds {
            let cfg = RunConfig {
                variant,
                seed,
                ablation: None,
                ..base.clone()
            };
            let art = run_mocl(&cfg)?;
            on_run(&art)?;
            let last_point = art.fiedler.last().copied();
            rows.push(AblationRow {
                variant,
                seed,
                avg: art.aggregate.avg,
                last: art.aggregate.last,
                final_fiedler: last_point.map_or(f64::NAN, |p| p.mean_fiedler),
                final_ap50: last_point.map_or(f64::NAN, |p| p.ap50),
            });
        }
    }
    let mut order: Vec<Variant> = Vec::new();
    for &v in variants {
        if !order.contains(&v) {
            order.push(v);
        }
    }
    let summary = order
        .into_iter()
        .map(|v| {
            let rs: Vec<&AblationRow> = rows.iter().filter(|r| r.variant == v).collect();
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&AblationRow) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            AblationSummary {
                variant: v,
                seeds: rs.len(),
                avg_map: mean(&|r| r.avg.map),
                last_map: mean(&|r| r.last.map),
                last_cf1: mean(&|r| r.last.cf1),
                last_of1: mean(&|r| r.last.of1),
                final_fiedler: mean(&|r| r.final_fiedler),
                final_ap50: mean(&|r| r.final_ap50),
            }
        })
        .collect();
    Ok(AblationTable {
        schema_version: SCHEMA_VERSION,
        rows,
        summary,
    })
}

pub fn run_ablation(base: &RunConfig, variants: &[Variant], seeds: &[u64]) -> Result<AblationTable> {
    run_ablation_with(base, variants, seeds, |_| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        RunConfig {
            stream: StreamConfig {
                n_tasks: 2,
                classes_per_task: 2,
                samples_per_task: 24,
                ..StreamConfig::default()
            },
            eval_samples: 20,
            probe_samples: 4,
            eval_every: 2,
            ..RunConfig::default()
        }
    }

    #[test]
    fn default_config_is_valid_and_roundtrips() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = to_json(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn config_errors_name_the_field() {
        let err = RunConfig::from_json(r#"{"selection": {"tau1": 0.9, "tau2": 0.8}}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "selection"), "{err}");
        let err = RunConfig::from_json(r#"{"stream": {"n_tasks": "five"}}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "stream.n_tasks"), "{err}");
        let err = RunConfig::from_json(r#"{"stream": {"noise_sigma": -1.0}}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "stream.noise_sigma"), "{err}");
        let err = RunConfig::from_json(r#"{"cut_kernel": {"kind": "cosine-binarized", "sigma": "median-heuristic", "tau_sim": 1.5, "epsilon_floor": 1e-5}}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "cut_kernel.tau_sim"), "{err}");
        let err = RunConfig::from_json(r#"{"bogus": 1}"#).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn crop_extracts_subgrid() {
        let raw = FeatureMap::new(3, 4, 1, (0..12).map(f64::from).collect()).unwrap();
        let c = crop(&raw, &BBox::new(1, 1, 2, 2)).unwrap();
        assert_eq!(c.as_slice(), &[5.0, 6.0, 9.0, 10.0]);
    }

    #[test]
    fn run_shapes_and_determinism() {
        let cfg = tiny();
        let a = run_mocl(&cfg).unwrap();
        // 3 steps per task; mid-task evals at steps 2 and 4, plus each task end
        assert_eq!(a.task_metrics.len(), 2);
        assert_eq!(a.buffers.len(), 2);
        assert_eq!(a.fiedler.len(), a.rows.len());
        let steps: Vec<usize> = a.rows.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![2, 3, 4, 6]);
        assert!(steps.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a.params.active_classes, 4);
        let b = run_mocl(&cfg).unwrap();
        assert_eq!(a.metrics_csv(), b.metrics_csv());
        assert_eq!(a.fiedler_csv(), b.fiedler_csv());
    }

    #[test]
    fn rs_baseline_stores_whole_images() {
        let cfg = RunConfig {
            variant: Variant::RsBaseline,
            capacity: 10,
            ..tiny()
        };
        let a = run_mocl(&cfg).unwrap();
        let last = a.buffers.last().unwrap();
        assert_eq!(last.used, 10);
        assert!(last.items.iter().all(|i| i.area == 64));
    }

    #[test]
    fn cut_variants_store_single_label_crops() {
        let a = run_mocl(&RunConfig {
            variant: Variant::Cuter,
            lr: 0.2,
            ..tiny()
        })
        .unwrap();
        for b in &a.buffers {
            assert!(b.used <= 200);
            assert!(b.items.iter().all(|i| i.labels.len() == 1 && i.area < 64));
        }
    }

    #[test]
    fn duplicate_variant_gives_identical_rows() {
        let t = run_ablation(&tiny(), &[Variant::Cutrep, Variant::Cutrep], &[3]).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[0], t.rows[1]);
        assert_eq!(t.summary.len(), 1);
    }

    #[test]
    fn trace_length_matches_eval_points() {
        let cfg = tiny();
        let stream = StreamState::new(cfg.effective_stream()).unwrap();
        let probes = stream.held_out("custom-probe", 3);
        let trace = track_fiedler(&cfg, &probes).unwrap();
        assert_eq!(trace.len(), 4);
        assert!(trace.iter().all(|p| p.mean_fiedler.is_finite() && (0.0..=1.0).contains(&p.ap50)));
    }
}
