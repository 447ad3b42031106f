//! Toy patch encoder and multi-label linear head, asymmetric loss, feature
//! graph regularizers and their analytic gradients, and SGD with momentum.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{nuclear_norm_subgradient_from, sym_eigendecomposition, SymMatrix};
use crate::patchgraph::{
    gaussian_adjacency, median_pairwise_distance, squared_distance, Bandwidth, FeatureMap,
    KernelKind, KernelSpec,
};
use crate::spectral_cut::BBox;

pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub dim_in: usize,
    pub dim_feat: usize,
    pub n_classes_max: usize,
}

/// Encoder `tanh(Wᵀx + b)` per patch, then a linear multi-label head on
/// mean-pooled features. Matrices are row-major: `encoder_weight` is
/// `dim_in × dim_feat`, `head_weight` is `dim_feat × n_classes_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub active_classes: usize,
    pub encoder_weight: Vec<f64>,
    pub encoder_bias: Vec<f64>,
    pub head_weight: Vec<f64>,
    pub head_bias: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            dims,
            active_classes: 0,
            encoder_weight: vec![0.0; dims.dim_in * dims.dim_feat],
            encoder_bias: vec![0.0; dims.dim_feat],
            head_weight: vec![0.0; dims.dim_feat * dims.n_classes_max],
            head_bias: vec![0.0; dims.n_classes_max],
        }
    }

    /// Gaussian encoder weights with standard deviation `scale`; zero head.
    pub fn init(dims: ModelDims, scale: f64, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(dims);
        let normal = Normal::new(0.0, scale).expect("finite scale");
        p.encoder_weight.iter_mut().for_each(|w| *w = normal.sample(rng));
        p
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = Self::zeros(self.dims);
        z.active_classes = self.active_classes;
        z
    }

    pub fn set_active_classes(&mut self, n: usize) -> Result<()> {
        if n > self.dims.n_classes_max {
            return Err(Error::config(
                "active_classes",
                format!("{n} exceeds n_classes_max {}", self.dims.n_classes_max),
            ));
        }
        self.active_classes = n;
        Ok(())
    }

    fn blocks(&self) -> [&Vec<f64>; 4] {
        [
            &self.encoder_weight,
            &self.encoder_bias,
            &self.head_weight,
            &self.head_bias,
        ]
    }

    fn blocks_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [
            &mut self.encoder_weight,
            &mut self.encoder_bias,
            &mut self.head_weight,
            &mut self.head_bias,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    /// All parameters in declaration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|b| b.iter().copied()).collect()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for b in self.blocks_mut() {
            let len = b.len();
            b.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &ModelParams) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            dst.iter_mut().zip(src.iter()).for_each(|(d, x)| *d += s * x);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for b in self.blocks_mut() {
            b.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    pub fn encode(&self, raw: &FeatureMap) -> Result<FeatureMap> {
        let ModelDims {
            dim_in, dim_feat, ..
        } = self.dims;
        if raw.dim() != dim_in {
            return Err(Error::Shape(format!(
                "raw patches have dim {}, encoder expects {dim_in}",
                raw.dim()
            )));
        }
        let mut out = Vec::with_capacity(raw.n_patches() * dim_feat);
        for x in raw.patches() {
            for f in 0..dim_feat {
                let mut z = self.encoder_bias[f];
                for (i, xi) in x.iter().enumerate() {
                    z += self.encoder_weight[i * dim_feat + f] * xi;
                }
                out.push(z.tanh());
            }
        }
        FeatureMap::new(raw.grid_h(), raw.grid_w(), dim_feat, out)
    }

    fn logits(&self, pool: &[f64]) -> Vec<f64> {
        let c_max = self.dims.n_classes_max;
        (0..self.active_classes)
            .map(|c| {
                self.head_bias[c]
                    + pool
                        .iter()
                        .enumerate()
                        .map(|(f, v)| self.head_weight[f * c_max + c] * v)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Sigmoid probabilities over active classes for the mean-pooled region.
    pub fn predict(&self, fm: &FeatureMap, region: Option<BBox>) -> Result<Vec<f64>> {
        let cells = region_cells(fm, region)?;
        let pool = mean_pool(fm, &cells);
        Ok(self.logits(&pool).into_iter().map(sigmoid).collect())
    }

    /// Encode and predict in one go.
    pub fn predict_raw(&self, raw: &FeatureMap, region: Option<BBox>) -> Result<Vec<f64>> {
        self.predict(&self.encode(raw)?, region)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn region_cells(fm: &FeatureMap, region: Option<BBox>) -> Result<Vec<usize>> {
    match region {
        None => Ok((0..fm.n_patches()).collect()),
        Some(b) => {
            if !b.within(fm.grid_h(), fm.grid_w()) || b.h1 > b.h2 || b.w1 > b.w2 {
                return Err(Error::EmptyRegion);
            }
            Ok((b.h1..=b.h2)
                .flat_map(|r| (b.w1..=b.w2).map(move |c| r * fm.grid_w() + c))
                .collect())
        }
    }
}

fn mean_pool(fm: &FeatureMap, cells: &[usize]) -> Vec<f64> {
    let mut pool = vec![0.0; fm.dim()];
    for &i in cells {
        pool.iter_mut().zip(fm.patch(i)).for_each(|(p, v)| *p += v);
    }
    let inv = 1.0 / cells.len() as f64;
    pool.iter_mut().for_each(|p| *p *= inv);
    pool
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymLossParams {
    pub gamma_pos: f64,
    pub gamma_neg: f64,
}

impl Default for AsymLossParams {
    fn default() -> Self {
        Self {
            gamma_pos: 0.0,
            gamma_neg: 1.0,
        }
    }
}

impl AsymLossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_pos >= 0.0 && self.gamma_neg >= 0.0) {
            return Err(Error::config("asl", "focusing parameters must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AslValue {
    pub loss: f64,
    /// No class was observed, so the loss is zero by convention.
    pub empty: bool,
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Asymmetric loss, averaged over observed classes.
pub fn asl_loss(probs: &[f64], targets: &[f64], lp: &AsymLossParams, observed: &[bool]) -> AslValue {
    let count = observed.iter().filter(|&&o| o).count();
    if count == 0 {
        return AslValue {
            loss: 0.0,
            empty: true,
        };
    }
    let mut total = 0.0;
    for ((&p, &y), &o) in probs.iter().zip(targets).zip(observed) {
        if !o {
            continue;
        }
        let p = clamp_prob(p);
        total += y * (1.0 - p).powf(lp.gamma_pos) * p.ln()
            + (1.0 - y) * p.powf(lp.gamma_neg) * (1.0 - p).ln();
    }
    AslValue {
        loss: -total / count as f64,
        empty: false,
    }
}

/// Derivative of [`asl_loss`] with respect to the logits.
pub fn asl_logit_grad(probs: &[f64], targets: &[f64], lp: &AsymLossParams, observed: &[bool]) -> Vec<f64> {
    let count = observed.iter().filter(|&&o| o).count();
    if count == 0 {
        return vec![0.0; probs.len()];
    }
    let inv = 1.0 / count as f64;
    probs
        .iter()
        .zip(targets)
        .zip(observed)
        .map(|((&p_raw, &y), &o)| {
            // the clamp is flat outside its range
            if !o || p_raw < PROB_CLAMP || p_raw > 1.0 - PROB_CLAMP {
                return 0.0;
            }
            let p = p_raw;
            let q = 1.0 - p;
            let (gp, gn) = (lp.gamma_pos, lp.gamma_neg);
            let pos = -gp * p * q.powf(gp) * p.ln() + q.powf(gp + 1.0);
            let neg = gn * p.powf(gn) * q * q.ln() - p.powf(gn + 1.0);
            -(y * pos + (1.0 - y) * neg) * inv
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    LowRank,
    Sparse,
    Smooth,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    pub alpha: f64,
}

impl Default for RegularizerSpec {
    fn default() -> Self {
        Self {
            kind: RegularizerKind::LowRank,
            alpha: 0.1,
        }
    }
}

impl RegularizerSpec {
    pub fn none() -> Self {
        Self {
            kind: RegularizerKind::None,
            alpha: 0.0,
        }
    }

    pub fn is_active(&self) -> bool {
        self.kind != RegularizerKind::None && self.alpha > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("regularizer.alpha", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Regularizer value on an adjacency built from `fm`.
pub fn regularizer_value(a: &SymMatrix, fm: &FeatureMap, spec: &RegularizerSpec) -> Result<f64> {
    match spec.kind {
        RegularizerKind::None => Ok(0.0),
        RegularizerKind::LowRank => crate::linalg::nuclear_norm(a),
        RegularizerKind::Sparse => {
            let l1: f64 = a.as_slice().iter().map(|x| x.abs()).sum();
            let l2 = a.frobenius_norm();
            if l2 == 0.0 {
                return Err(Error::ZeroDivision("sparse regularizer"));
            }
            Ok(l1 / l2)
        }
        RegularizerKind::Smooth => {
            let n = a.n();
            let mut total = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let w = a.get(i, j);
                    if w != 0.0 {
                        total += w * squared_distance(fm.patch(i), fm.patch(j));
                    }
                }
            }
            Ok(0.5 * total)
        }
    }
}

/// Value of the regularizer on the Gaussian adjacency of `fm` and its
/// gradient with respect to every feature entry, with `sigma` held fixed.
pub fn regularizer_with_feature_grad(
    fm: &FeatureMap,
    sigma: f64,
    spec: &RegularizerSpec,
) -> Result<(f64, Vec<f64>)> {
    let n = fm.n_patches();
    let dim = fm.dim();
    let mut grad = vec![0.0; n * dim];
    if spec.kind == RegularizerKind::None {
        return Ok((0.0, grad));
    }
    let a = gaussian_adjacency(fm, sigma);
    let inv_s2 = 1.0 / (sigma * sigma);

    // dR/dA as a symmetric matrix of per-entry partials
    let (value, g) = match spec.kind {
        RegularizerKind::LowRank => {
            let eig = sym_eigendecomposition(&a)?;
            let value = eig.eigenvalues.iter().map(|l| l.abs()).sum();
            (value, nuclear_norm_subgradient_from(&eig))
        }
        RegularizerKind::Sparse => {
            let l1: f64 = a.as_slice().iter().map(|x| x.abs()).sum();
            let l2 = a.frobenius_norm();
            if l2 == 0.0 {
                return Err(Error::ZeroDivision("sparse regularizer"));
            }
            let l2_3 = l2 * l2 * l2;
            let g = SymMatrix::from_upper_fn(n, |i, j| {
                let x = a.get(i, j);
                if i == j {
                    0.0
                } else {
                    x.signum() / l2 - l1 * x / l2_3
                }
            });
            (l1 / l2, g)
        }
        RegularizerKind::Smooth => {
            let g = SymMatrix::from_upper_fn(n, |i, j| {
                0.5 * squared_distance(fm.patch(i), fm.patch(j))
            });
            (regularizer_value(&a, fm, spec)?, g)
        }
        RegularizerKind::None => unreachable!(),
    };

    for i in 0..n {
        let ti = fm.patch(i);
        for j in 0..n {
            if i == j {
                continue;
            }
            let aij = a.get(i, j);
            if aij == 0.0 {
                continue;
            }
            let tj = fm.patch(j);
            // A_ij and A_ji share one value, hence the factor 2
            let mut coef = 2.0 * g.get(i, j) * aij * inv_s2;
            if spec.kind == RegularizerKind::Smooth {
                // the distance factor also depends on θ directly
                coef -= 2.0 * aij;
            }
            for d in 0..dim {
                grad[i * dim + d] += coef * (tj[d] - ti[d]);
            }
        }
    }
    Ok((value, grad))
}

/// One supervised example: a raw grid (or a region of it) with targets and
/// the mask of classes whose labels are known.
#[derive(Debug, Clone)]
pub struct TrainItem<'a> {
    pub raw: &'a FeatureMap,
    pub region: Option<BBox>,
    /// 0/1 target per active class.
    pub targets: Vec<f64>,
    pub observed: Vec<bool>,
    /// Whether the feature-graph regularizer applies to this item.
    pub regularize: bool,
    /// Fixed Gaussian bandwidth; defaults to the kernel's choice per map.
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub total: f64,
    pub asl: f64,
    pub regularizer: f64,
    pub empty_items: usize,
}

pub fn loss_and_gradients(
    p: &ModelParams,
    batch: &[TrainItem<'_>],
    lp: &AsymLossParams,
    k: &KernelSpec,
    spec: &RegularizerSpec,
) -> Result<(LossBreakdown, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::Shape("empty training batch".into()));
    }
    if spec.is_active() && k.kind != KernelKind::Gaussian {
        return Err(Error::config(
            "kernel.kind",
            "the feature-graph regularizer is differentiated through the gaussian kernel",
        ));
    }
    let ModelDims {
        dim_in,
        dim_feat,
        n_classes_max: c_max,
    } = p.dims;
    let active = p.active_classes;
    let mut grads = p.zeros_like();
    let mut asl_sum = 0.0;
    let mut reg_sum = 0.0;
    let mut empty_items = 0;

    for item in batch {
        if item.targets.len() != active || item.observed.len() != active {
            return Err(Error::Shape(format!(
                "targets/observed must cover {active} active classes"
            )));
        }
        let fm = p.encode(item.raw)?;
        let cells = region_cells(&fm, item.region)?;
        let pool = mean_pool(&fm, &cells);
        let probs: Vec<f64> = p.logits(&pool).into_iter().map(sigmoid).collect();
        let asl = asl_loss(&probs, &item.targets, lp, &item.observed);
        if asl.empty {
            empty_items += 1;
        }
        asl_sum += asl.loss;
        let dz = asl_logit_grad(&probs, &item.targets, lp, &item.observed);

        let mut dpool = vec![0.0; dim_feat];
        for (c, &g) in dz.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grads.head_bias[c] += g;
            for f in 0..dim_feat {
                grads.head_weight[f * c_max + c] += pool[f] * g;
                dpool[f] += p.head_weight[f * c_max + c] * g;
            }
        }

        let n = fm.n_patches();
        let mut dfeat = vec![0.0; n * dim_feat];
        let inv = 1.0 / cells.len() as f64;
        for &i in &cells {
            for f in 0..dim_feat {
                dfeat[i * dim_feat + f] += dpool[f] * inv;
            }
        }

        if item.regularize && spec.is_active() {
            let sigma = item.sigma.unwrap_or_else(|| match k.sigma {
                Bandwidth::Fixed(s) => s,
                Bandwidth::MedianHeuristic => median_pairwise_distance(&fm),
            });
            let (value, g) = regularizer_with_feature_grad(&fm, sigma, spec)?;
            reg_sum += spec.alpha * value;
            dfeat.iter_mut().zip(&g).for_each(|(d, x)| *d += spec.alpha * x);
        }

        for (i, x) in item.raw.patches().enumerate() {
            let theta = fm.patch(i);
            for f in 0..dim_feat {
                let dpre = dfeat[i * dim_feat + f] * (1.0 - theta[f] * theta[f]);
                if dpre == 0.0 {
                    continue;
                }
                grads.encoder_bias[f] += dpre;
                for d in 0..dim_in {
                    grads.encoder_weight[d * dim_feat + f] += x[d] * dpre;
                }
            }
        }
    }

    let inv_b = 1.0 / batch.len() as f64;
    grads.scale(inv_b);
    Ok((
        LossBreakdown {
            total: (asl_sum + reg_sum) * inv_b,
            asl: asl_sum * inv_b,
            regularizer: reg_sum * inv_b,
            empty_items,
        },
        grads,
    ))
}

/// Momentum buffer for [`sgd_step`].
#[derive(Debug, Clone)]
pub struct SgdState {
    pub velocity: ModelParams,
}

impl SgdState {
    pub fn new(like: &ModelParams) -> Self {
        Self {
            velocity: like.zeros_like(),
        }
    }
}

/// `v ← μ v + g; θ ← θ − lr v`.
pub fn sgd_step(p: &mut ModelParams, grads: &ModelParams, lr: f64, momentum: f64, state: &mut SgdState) -> Result<()> {
    if !(lr > 0.0) || !(0.0..1.0).contains(&momentum) {
        return Err(Error::config("optimizer", "need lr > 0 and 0 <= momentum < 1"));
    }
    state.velocity.scale(momentum);
    state.velocity.axpy(1.0, grads);
    p.axpy(-lr, &state.velocity);
    Ok(())
}

/// Largest deviation between analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub max_abs_err_small: f64,
    pub coordinates: usize,
    pub failures: usize,
}

/// Compares analytic gradients against central differences with step `h`.
/// Coordinates with `|grad| > 1e-6` must agree to relative `rel_tol`, the
/// rest to absolute `1e-6`. Bandwidths are frozen at their values for `p`.
pub fn gradient_check(
    p: &ModelParams,
    batch: &[TrainItem<'_>],
    lp: &AsymLossParams,
    k: &KernelSpec,
    spec: &RegularizerSpec,
    h: f64,
    rel_tol: f64,
) -> Result<GradCheck> {
    let frozen: Vec<TrainItem<'_>> = batch
        .iter()
        .map(|it| {
            let mut it = it.clone();
            if it.sigma.is_none() {
                let fm = p.encode(it.raw)?;
                it.sigma = Some(match k.sigma {
                    Bandwidth::Fixed(s) => s,
                    Bandwidth::MedianHeuristic => median_pairwise_distance(&fm),
                });
            }
            Ok(it)
        })
        .collect::<Result<_>>()?;
    let (_, analytic) = loss_and_gradients(p, &frozen, lp, k, spec)?;
    let analytic = analytic.flatten();
    let base = p.flatten();
    let mut probe = p.clone();
    let mut out = GradCheck {
        max_rel_err: 0.0,
        max_abs_err_small: 0.0,
        coordinates: base.len(),
        failures: 0,
    };
    let mut x = base.clone();
    for i in 0..base.len() {
        x[i] = base[i] + h;
        probe.assign_flat(&x)?;
        let up = loss_and_gradients(&probe, &frozen, lp, k, spec)?.0.total;
        x[i] = base[i] - h;
        probe.assign_flat(&x)?;
        let down = loss_and_gradients(&probe, &frozen, lp, k, spec)?.0.total;
        x[i] = base[i];
        let fd = (up - down) / (2.0 * h);
        let g = analytic[i];
        if g.abs() > 1e-6 {
            let rel = (fd - g).abs() / g.abs();
            out.max_rel_err = out.max_rel_err.max(rel);
            if rel > rel_tol {
                out.failures += 1;
            }
        } else {
            let abs = (fd - g).abs();
            out.max_abs_err_small = out.max_abs_err_small.max(abs);
            if abs > 1e-6 {
                out.failures += 1;
            }
        }
    }
    Ok(out)
}

/// Worst finite-difference agreement for one loss configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradSuiteEntry {
    pub regularizer: RegularizerKind,
    pub configs: usize,
    pub max_rel_err: f64,
    pub max_abs_err_small: f64,
    pub failures: usize,
}

/// Finite-difference checks of the training loss with each regularizer
/// (and none) on `configs` random small models and batches.
pub fn verify_gradients(configs: usize, seed: u64, rel_tol: f64) -> Result<Vec<GradSuiteEntry>> {
    let dims = ModelDims {
        dim_in: 6,
        dim_feat: 5,
        n_classes_max: 4,
    };
    let kinds = [
        RegularizerKind::None,
        RegularizerKind::LowRank,
        RegularizerKind::Sparse,
        RegularizerKind::Smooth,
    ];
    let mut out = Vec::with_capacity(kinds.len());
    for (ki, kind) in kinds.into_iter().enumerate() {
        let mut e = GradSuiteEntry {
            regularizer: kind,
            configs: 0,
            max_rel_err: 0.0,
            max_abs_err_small: 0.0,
            failures: 0,
        };
        for c in 0..configs {
            let mut rng = crate::seeding::derive_rng(seed, "gradcheck", (ki * configs + c) as u64);
            let mut p = ModelParams::init(dims, rng.gen_range(0.3..0.9), &mut rng);
            let active = rng.gen_range(2..=dims.n_classes_max);
            p.set_active_classes(active)?;
            p.encoder_bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.3..0.3));
            p.head_weight.iter_mut().for_each(|w| *w = rng.gen_range(-1.0..1.0));
            p.head_bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
            let raws: Vec<FeatureMap> = (0..2)
                .map(|_| {
                    let data = (0..16 * dims.dim_in).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    FeatureMap::new(4, 4, dims.dim_in, data)
                })
                .collect::<Result<_>>()?;
            let batch: Vec<TrainItem<'_>> = raws
                .iter()
                .map(|raw| {
                    let region = rng.gen_bool(0.5).then(|| BBox::new(0, 0, rng.gen_range(1..4), rng.gen_range(1..4)));
                    let mut observed: Vec<bool> = (0..active).map(|_| rng.gen_bool(0.7)).collect();
                    observed[0] = true;
                    TrainItem {
                        raw,
                        region,
                        targets: (0..active).map(|_| f64::from(u8::from(rng.gen_bool(0.5)))).collect(),
                        observed,
                        regularize: true,
                        sigma: None,
                    }
                })
                .collect();
            let lp = AsymLossParams {
                gamma_pos: rng.gen_range(0.0..2.0),
                gamma_neg: rng.gen_range(0.0..5.0),
            };
            let k = if rng.gen_bool(0.5) {
                KernelSpec::gaussian_median()
            } else {
                KernelSpec::gaussian(rng.gen_range(0.5..2.0))
            };
            let spec = RegularizerSpec {
                kind,
                alpha: rng.gen_range(0.05..1.0),
            };
            let g = gradient_check(&p, &batch, &lp, &k, &spec, 1e-5, rel_tol)?;
            e.configs += 1;
            e.max_rel_err = e.max_rel_err.max(g.max_rel_err);
            e.max_abs_err_small = e.max_abs_err_small.max(g.max_abs_err_small);
            e.failures += g.failures;
        }
        out.push(e);
    }
    Ok(out)
}
