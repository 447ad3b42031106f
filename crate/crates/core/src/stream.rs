//! Synthetic multi-label continual stream: tasks with disjoint label sets,
//! planted rectangular objects on patch grids, long-tailed class frequencies
//! and task-restricted annotations.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patchgraph::FeatureMap;
use crate::seeding::derive_rng;
use crate::spectral_cut::BBox;

/// Largest admissible cosine between two prototypes.
pub const MAX_PROTOTYPE_COSINE: f64 = 0.3;
const MAX_OBJECTS: usize = 4;
const PLACEMENT_TRIES: usize = 50;
const PROTOTYPE_TRIES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    pub n_tasks: usize,
    pub classes_per_task: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub dim_in: usize,
    pub mean_labels_per_image: f64,
    pub imbalance_ratio: f64,
    pub cooccur_bias: f64,
    pub noise_sigma: f64,
    pub samples_per_task: usize,
    pub seed: u64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            n_tasks: 5,
            classes_per_task: 4,
            grid_h: 8,
            grid_w: 8,
            dim_in: 16,
            mean_labels_per_image: 2.4,
            imbalance_ratio: 10.0,
            cooccur_bias: 0.3,
            noise_sigma: 0.1,
            samples_per_task: 800,
            seed: 0,
        }
    }
}

impl StreamConfig {
    pub fn n_classes(&self) -> usize {
        self.n_tasks * self.classes_per_task
    }

    pub fn validate(&self) -> Result<()> {
        let p = |f: &str| format!("stream.{f}");
        if self.n_tasks == 0 {
            return Err(Error::config(p("n_tasks"), "must be at least 1"));
        }
        if self.classes_per_task == 0 {
            return Err(Error::config(p("classes_per_task"), "must be at least 1"));
        }
        if self.grid_h < 4 || self.grid_w < 4 {
            return Err(Error::config(p("grid_h"), "grid must be at least 4x4"));
        }
        if self.dim_in == 0 {
            return Err(Error::config(p("dim_in"), "must be at least 1"));
        }
        if !(1.0..=MAX_OBJECTS as f64).contains(&self.mean_labels_per_image) {
            return Err(Error::config(p("mean_labels_per_image"), "must lie in [1, 4]"));
        }
        if !(self.imbalance_ratio >= 1.0 && self.imbalance_ratio.is_finite()) {
            return Err(Error::config(p("imbalance_ratio"), "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.cooccur_bias) {
            return Err(Error::config(p("cooccur_bias"), "must lie in [0, 1)"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config(p("noise_sigma"), "must be nonnegative"));
        }
        if self.samples_per_task == 0 {
            return Err(Error::config(p("samples_per_task"), "must be at least 1"));
        }
        Ok(())
    }
}

/// Per-task label sets, class prototypes and frequency weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSchedule {
    pub task_classes: Vec<Vec<usize>>,
    pub prototypes: Vec<Vec<f64>>,
    pub background: Vec<f64>,
    /// Normalized sampling weight of every class.
    pub class_weights: Vec<f64>,
}

impl TaskSchedule {
    pub fn n_classes(&self) -> usize {
        self.class_weights.len()
    }

    pub fn task_of(&self, class: usize) -> usize {
        self.task_classes
            .iter()
            .position(|ts| ts.contains(&class))
            .expect("every class belongs to a task")
    }

    /// Classes ordered from most to least frequent.
    pub fn classes_by_frequency(&self) -> Vec<usize> {
        let mut c: Vec<usize> = (0..self.n_classes()).collect();
        c.sort_by(|&a, &b| self.class_weights[b].total_cmp(&self.class_weights[a]).then(a.cmp(&b)));
        c
    }

    /// Upper half of the frequency order.
    pub fn head_classes(&self) -> Vec<usize> {
        let order = self.classes_by_frequency();
        order[..order.len() / 2].to_vec()
    }

    pub fn tail_classes(&self) -> Vec<usize> {
        let order = self.classes_by_frequency();
        order[order.len() / 2..].to_vec()
    }
}

fn random_unit(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Geometric class weights `r^{-rank/(C-1)}`, normalized, so the most and
/// least frequent classes differ by exactly `ratio`.
pub fn geometric_weights(n: usize, ratio: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let raw: Vec<f64> = (0..n).map(|k| ratio.powf(-(k as f64) / (n - 1) as f64)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

pub fn generate_schedule(cfg: &StreamConfig) -> Result<TaskSchedule> {
    cfg.validate()?;
    let n = cfg.n_classes();
    let mut rng = derive_rng(cfg.seed, "schedule", 0);

    let mut protos: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    while protos.len() < n + 1 {
        let mut placed = false;
        for _ in 0..PROTOTYPE_TRIES {
            let v = random_unit(cfg.dim_in, &mut rng);
            let ok = protos.iter().all(|p| {
                p.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() <= MAX_PROTOTYPE_COSINE
            });
            if ok {
                protos.push(v);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::config(
                "stream.dim_in",
                format!("cannot place {} prototypes with cosine <= {MAX_PROTOTYPE_COSINE} in {} dimensions", n + 1, cfg.dim_in),
            ));
        }
    }
    let background = protos.pop().expect("n + 1 prototypes");

    let mut classes: Vec<usize> = (0..n).collect();
    classes.shuffle(&mut rng);
    let task_classes = classes
        .chunks(cfg.classes_per_task)
        .map(|c| {
            let mut c = c.to_vec();
            c.sort_unstable();
            c
        })
        .collect();

    // frequency rank is independent of task membership
    let by_rank = geometric_weights(n, cfg.imbalance_ratio);
    let mut rank_of: Vec<usize> = (0..n).collect();
    rank_of.shuffle(&mut rng);
    let class_weights = (0..n).map(|c| by_rank[rank_of[c]]).collect();

    Ok(TaskSchedule {
        task_classes,
        prototypes: protos,
        background,
        class_weights,
    })
}

/// Evaluator-only ground truth of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub full_labels: Vec<usize>,
    pub gt_boxes: Vec<(usize, BBox)>,
}

/// One stream image. Learner code sees the raw grid and the task-restricted
/// labels; the full annotation is reachable only through [`oracle_view`].
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSample {
    pub raw: FeatureMap,
    pub observed_labels: Vec<usize>,
    pub task_id: usize,
    truth: GroundTruth,
}

impl StreamSample {
    pub fn new(raw: FeatureMap, observed_labels: Vec<usize>, task_id: usize, truth: GroundTruth) -> Self {
        Self {
            raw,
            observed_labels,
            task_id,
            truth,
        }
    }
}

/// Hidden labels and boxes of a sample, for evaluation only.
pub fn oracle_view(sample: &StreamSample) -> (&[usize], &[(usize, BBox)]) {
    (&sample.truth.full_labels, &sample.truth.gt_boxes)
}

/// Whether two boxes keep at least one empty patch between them.
fn separated(a: &BBox, b: &BBox) -> bool {
    a.h2 + 1 < b.h1 || b.h2 + 1 < a.h1 || a.w2 + 1 < b.w1 || b.w2 + 1 < a.w1
}

fn weighted_pick(weights: &[f64], candidates: &[usize], rng: &mut impl Rng) -> usize {
    let total: f64 = candidates.iter().map(|&c| weights[c]).sum();
    let mut x = rng.gen_range(0.0..total);
    for &c in candidates {
        x -= weights[c];
        if x < 0.0 {
            return c;
        }
    }
    *candidates.last().expect("non-empty candidates")
}

/// Places up to `k` disjoint rectangles with one-patch margins.
fn place_boxes(k: usize, gh: usize, gw: usize, rng: &mut impl Rng) -> Vec<BBox> {
    let (max_h, max_w) = ((gh / 2).max(2), (gw / 2).max(2));
    let mut k = k;
    loop {
        for _ in 0..PLACEMENT_TRIES {
            let mut boxes: Vec<BBox> = Vec::with_capacity(k);
            for _ in 0..k {
                let h = rng.gen_range(2..=max_h);
                let w = rng.gen_range(2..=max_w);
                let r = rng.gen_range(0..=gh - h);
                let c = rng.gen_range(0..=gw - w);
                let b = BBox::new(r, c, r + h - 1, c + w - 1);
                if boxes.iter().all(|o| separated(o, &b)) {
                    boxes.push(b);
                } else {
                    break;
                }
            }
            if boxes.len() == k {
                return boxes;
            }
        }
        k -= 1;
    }
}

/// Draws the class set for one image.
fn draw_classes(
    schedule: &TaskSchedule,
    anchor_pool: &[usize],
    k: usize,
    cooccur_bias: f64,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let w = &schedule.class_weights;
    let mut chosen = vec![weighted_pick(w, anchor_pool, rng)];
    while chosen.len() < k {
        let rest: Vec<usize> = (0..w.len()).filter(|c| !chosen.contains(c)).collect();
        if rest.is_empty() {
            break;
        }
        chosen.push(weighted_pick(w, &rest, rng));
    }
    let head = schedule.head_classes();
    if cooccur_bias > 0.0 && chosen.iter().any(|c| head.contains(c)) && rng.gen_bool(cooccur_bias) {
        let tail: Vec<usize> = schedule
            .tail_classes()
            .into_iter()
            .filter(|c| !chosen.contains(c))
            .collect();
        if let Some(&t) = tail.choose(rng) {
            if chosen.len() < MAX_OBJECTS {
                chosen.push(t);
            } else {
                *chosen.last_mut().expect("non-empty") = t;
            }
        }
    }
    chosen
}

/// Renders one sample given its class pool, using `rng` for every draw.
pub fn render_sample(
    cfg: &StreamConfig,
    schedule: &TaskSchedule,
    anchor_pool: &[usize],
    observed_pool: Option<&[usize]>,
    task_id: usize,
    rng: &mut ChaCha8Rng,
) -> StreamSample {
    let extra = Binomial::new((MAX_OBJECTS - 1) as u64, (cfg.mean_labels_per_image - 1.0) / (MAX_OBJECTS - 1) as f64)
        .expect("probability in [0, 1]");
    let k = 1 + extra.sample(rng) as usize;
    let classes = draw_classes(schedule, anchor_pool, k, cfg.cooccur_bias, rng);
    let boxes = place_boxes(classes.len(), cfg.grid_h, cfg.grid_w, rng);
    // if placement had to shrink, the anchor class (first) is kept
    let classes = &classes[..boxes.len()];

    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0)).unwrap();
    let mut data = Vec::with_capacity(cfg.grid_h * cfg.grid_w * cfg.dim_in);
    for r in 0..cfg.grid_h {
        for c in 0..cfg.grid_w {
            let proto = match boxes.iter().position(|b| b.contains(r, c)) {
                Some(k) => &schedule.prototypes[classes[k]],
                None => &schedule.background,
            };
            data.extend(proto.iter().map(|&x| {
                if cfg.noise_sigma > 0.0 {
                    x + noise.sample(rng)
                } else {
                    x
                }
            }));
        }
    }
    let raw = FeatureMap::new(cfg.grid_h, cfg.grid_w, cfg.dim_in, data).expect("valid generated grid");

    let mut full_labels = classes.to_vec();
    full_labels.sort_unstable();
    let observed_labels = match observed_pool {
        Some(pool) => full_labels.iter().copied().filter(|c| pool.contains(c)).collect(),
        None => full_labels.clone(),
    };
    let gt_boxes = classes.iter().copied().zip(boxes).collect();
    StreamSample::new(
        raw,
        observed_labels,
        task_id,
        GroundTruth {
            full_labels,
            gt_boxes,
        },
    )
}

/// Single-pass producer of stream samples, task by task.
#[derive(Debug, Clone)]
pub struct StreamState {
    cfg: StreamConfig,
    schedule: TaskSchedule,
    task: usize,
    emitted: usize,
    rng: ChaCha8Rng,
}

impl StreamState {
    pub fn new(cfg: StreamConfig) -> Result<Self> {
        let schedule = generate_schedule(&cfg)?;
        let rng = derive_rng(cfg.seed, "stream", 0);
        Ok(Self {
            cfg,
            schedule,
            task: 0,
            emitted: 0,
            rng,
        })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.cfg
    }

    pub fn schedule(&self) -> &TaskSchedule {
        &self.schedule
    }

    pub fn current_task(&self) -> usize {
        self.task
    }

    pub fn remaining_in_task(&self) -> usize {
        self.cfg.samples_per_task - self.emitted
    }

    /// Moves to the next task; returns false after the last one.
    pub fn advance_task(&mut self) -> bool {
        if self.task + 1 >= self.cfg.n_tasks {
            return false;
        }
        self.task += 1;
        self.emitted = 0;
        true
    }

    /// Up to `batch_size` fresh samples of the current task.
    pub fn next_batch(&mut self, batch_size: usize) -> Result<Vec<StreamSample>> {
        let take = batch_size.min(self.remaining_in_task());
        if take == 0 {
            return Err(Error::EndOfTask);
        }
        let pool = self.schedule.task_classes[self.task].clone();
        let batch = (0..take)
            .map(|_| render_sample(&self.cfg, &self.schedule, &pool, Some(&pool), self.task, &mut self.rng))
            .collect();
        self.emitted += take;
        Ok(batch)
    }

    /// Held-out samples over all classes, fully annotated, drawn from a
    /// separate random stream tagged `tag`.
    pub fn held_out(&self, tag: &str, count: usize) -> Vec<StreamSample> {
        let mut rng = derive_rng(self.cfg.seed, tag, 0);
        let all: Vec<usize> = (0..self.schedule.n_classes()).collect();
        (0..count)
            .map(|_| render_sample(&self.cfg, &self.schedule, &all, None, usize::MAX, &mut rng))
            .collect()
    }
}
