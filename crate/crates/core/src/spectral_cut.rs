//! Normalized-cut bipartitioning, its exhaustive oracle, and iterative
//! MaskCut over patch grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_eigendecomposition;
use crate::patchgraph::{
    build_adjacency, normalized_laplacian, FeatureMap, KernelSpec, PatchGraph,
    BRUTE_FORCE_MAX_NODES,
};

/// Inclusive patch-coordinate box `(h1, w1)`..=`(h2, w2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub h1: usize,
    pub w1: usize,
    pub h2: usize,
    pub w2: usize,
}

impl BBox {
    pub fn new(h1: usize, w1: usize, h2: usize, w2: usize) -> Self {
        debug_assert!(h1 <= h2 && w1 <= w2);
        Self { h1, w1, h2, w2 }
    }

    pub fn height(&self) -> usize {
        self.h2 - self.h1 + 1
    }

    pub fn width(&self) -> usize {
        self.w2 - self.w1 + 1
    }

    pub fn area(&self) -> usize {
        self.height() * self.width()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.h1..=self.h2).contains(&row) && (self.w1..=self.w2).contains(&col)
    }

    pub fn intersection_area(&self, other: &BBox) -> usize {
        let h1 = self.h1.max(other.h1);
        let w1 = self.w1.max(other.w1);
        let h2 = self.h2.min(other.h2);
        let w2 = self.w2.min(other.w2);
        if h1 > h2 || w1 > w2 {
            0
        } else {
            (h2 - h1 + 1) * (w2 - w1 + 1)
        }
    }

    /// Intersection over union on patch cells.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        inter as f64 / union as f64
    }

    pub fn within(&self, grid_h: usize, grid_w: usize) -> bool {
        self.h2 < grid_h && self.w2 < grid_w
    }
}

/// Binary mask over a patch grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "RleMask", try_from = "RleMask")]
pub struct Mask {
    grid_h: usize,
    grid_w: usize,
    cells: Vec<bool>,
}

impl Mask {
    pub fn empty(grid_h: usize, grid_w: usize) -> Self {
        Self {
            grid_h,
            grid_w,
            cells: vec![false; grid_h * grid_w],
        }
    }

    pub fn from_cells(grid_h: usize, grid_w: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != grid_h * grid_w {
            return Err(Error::Shape(format!(
                "mask of {} cells for a {grid_h}x{grid_w} grid",
                cells.len()
            )));
        }
        Ok(Self {
            grid_h,
            grid_w,
            cells,
        })
    }

    pub fn from_indices(grid_h: usize, grid_w: usize, idx: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Self::empty(grid_h, grid_w);
        for i in idx {
            m.cells[i] = true;
        }
        m
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.grid_w + col]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells.iter().enumerate().filter(|(_, &c)| c).map(|(i, _)| i)
    }

    pub fn overlaps(&self, other: &Mask) -> bool {
        self.cells.iter().zip(&other.cells).any(|(a, b)| *a && *b)
    }

    /// Run lengths of alternating false/true cells, starting with false.
    pub fn to_rle(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0;
        for &c in &self.cells {
            if c == current {
                len += 1;
            } else {
                runs.push(len);
                current = c;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }

    pub fn from_rle(grid_h: usize, grid_w: usize, runs: &[usize]) -> Result<Self> {
        let mut cells = Vec::with_capacity(grid_h * grid_w);
        let mut value = false;
        for &r in runs {
            cells.extend(std::iter::repeat(value).take(r));
            value = !value;
        }
        Self::from_cells(grid_h, grid_w, cells)
    }
}

#[derive(Serialize, Deserialize)]
struct RleMask {
    grid_h: usize,
    grid_w: usize,
    rle: Vec<usize>,
}

impl From<Mask> for RleMask {
    fn from(m: Mask) -> Self {
        RleMask {
            grid_h: m.grid_h,
            grid_w: m.grid_w,
            rle: m.to_rle(),
        }
    }
}

impl TryFrom<RleMask> for Mask {
    type Error = Error;

    fn try_from(r: RleMask) -> Result<Self> {
        Mask::from_rle(r.grid_h, r.grid_w, &r.rle)
    }
}

/// Tight inclusive hull of the mask's true cells.
pub fn mask_to_bbox(mask: &Mask) -> Result<BBox> {
    let mut it = mask.indices();
    let first = it.next().ok_or(Error::EmptyMask)?;
    let w = mask.grid_w;
    let (mut h1, mut w1) = (first / w, first % w);
    let (mut h2, mut w2) = (h1, w1);
    for i in it {
        let (r, c) = (i / w, i % w);
        h1 = h1.min(r);
        h2 = h2.max(r);
        w1 = w1.min(c);
        w2 = w2.max(c);
    }
    Ok(BBox::new(h1, w1, h2, w2))
}

/// Two-way split of a graph's nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bipartition {
    /// Side (0 or 1) of every node.
    pub side_of: Vec<u8>,
    /// Which side value is the foreground.
    pub foreground: u8,
    pub energy: f64,
}

impl Bipartition {
    pub fn nodes_on(&self, side: u8) -> impl Iterator<Item = usize> + '_ {
        self.side_of
            .iter()
            .enumerate()
            .filter(move |(_, &s)| s == side)
            .map(|(i, _)| i)
    }
}

/// `C(A,B)/C(A,V) + C(A,B)/C(B,V)` for the split `side_of`.
pub fn ncut_energy(g: &PatchGraph, side_of: &[u8]) -> Result<f64> {
    if side_of.len() != g.n() {
        return Err(Error::Shape("partition length differs from node count".into()));
    }
    let mut cut = 0.0;
    let mut vol = [0.0; 2];
    for i in 0..g.n() {
        let si = side_of[i] as usize;
        vol[si] += g.degrees()[i];
        for j in 0..g.n() {
            if side_of[j] != side_of[i] && si == 0 {
                cut += g.weight(i, j);
            }
        }
    }
    if vol[0] <= 0.0 || vol[1] <= 0.0 {
        return Err(Error::DegeneratePartition);
    }
    Ok(cut / vol[0] + cut / vol[1])
}

/// Spectral split with the node-wise relaxed indicator it was derived from.
#[derive(Debug, Clone)]
pub struct SpectralSplit {
    pub partition: Bipartition,
    /// `D^{-1/2} z` for the second eigenvector `z` of `L_sym`.
    pub indicator: Vec<f64>,
    /// Second smallest eigenvalue of `L_sym`.
    pub fiedler: f64,
}

const CONNECTED_TOL: f64 = 1e-10;

pub fn spectral_split(g: &PatchGraph) -> Result<SpectralSplit> {
    let n = g.n();
    if n < 2 {
        return Err(Error::Shape("bipartition needs at least 2 nodes".into()));
    }
    let l_sym = normalized_laplacian(g)?;
    let eig = sym_eigendecomposition(&l_sym)?;
    let fiedler = eig.eigenvalues[1];
    if fiedler <= CONNECTED_TOL {
        return Err(Error::AmbiguousCut);
    }
    let indicator: Vec<f64> = eig.eigenvectors[1]
        .iter()
        .zip(g.degrees())
        .map(|(z, d)| z / d.sqrt())
        .collect();

    let mean = indicator.iter().sum::<f64>() / n as f64;
    let mut side_of: Vec<u8> = indicator.iter().map(|&u| (u > mean) as u8).collect();
    let ones = side_of.iter().filter(|&&s| s == 1).count();
    if ones == 0 || ones == n {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| indicator[a].total_cmp(&indicator[b]).then(a.cmp(&b)));
        side_of = vec![0; n];
        for &i in &order[n / 2..] {
            side_of[i] = 1;
        }
    }
    let seed = argmax_abs(&indicator, 0..n);
    let foreground = side_of[seed];
    let energy = ncut_energy(g, &side_of)?;
    Ok(SpectralSplit {
        partition: Bipartition {
            side_of,
            foreground,
            energy,
        },
        indicator,
        fiedler,
    })
}

fn argmax_abs(values: &[f64], idx: impl Iterator<Item = usize>) -> usize {
    let mut best = None::<(usize, f64)>;
    for i in idx {
        let a = values[i].abs();
        if best.map_or(true, |(_, b)| a > b) {
            best = Some((i, a));
        }
    }
    best.expect("non-empty index set").0
}

/// Relaxed NCut: second eigenvector of `L_sym`, thresholded at its mean.
/// Foreground is the side holding the largest-magnitude indicator entry.
pub fn ncut_bipartition(g: &PatchGraph) -> Result<Bipartition> {
    Ok(spectral_split(g)?.partition)
}

/// Exact NCut minimizer by enumeration; ties go to the lexicographically
/// smallest `side_of`.
pub fn brute_force_ncut(g: &PatchGraph) -> Result<Bipartition> {
    let n = g.n();
    if n > BRUTE_FORCE_MAX_NODES {
        return Err(Error::SizeLimit {
            n,
            max: BRUTE_FORCE_MAX_NODES,
        });
    }
    if n < 2 {
        return Err(Error::Shape("bipartition needs at least 2 nodes".into()));
    }
    let total: f64 = g.degrees().iter().sum();
    let mut best: Option<(f64, u32)> = None;
    // key bit (n-1-i) holds side_of[i], so increasing keys are increasing
    // lexicographic order; keys below 2^(n-1) fix side_of[0] = 0
    for key in 1u32..(1u32 << (n - 1)) {
        let mut mask = 0u32;
        for i in 0..n {
            if key & (1 << (n - 1 - i)) != 0 {
                mask |= 1 << i;
            }
        }
        let (cut, vol1, _) = crate::patchgraph::side_statistics(g, mask);
        let vol0 = total - vol1;
        if vol0 <= 0.0 || vol1 <= 0.0 {
            continue;
        }
        let e = cut / vol0 + cut / vol1;
        if best.map_or(true, |(b, _)| e < b - 1e-12) {
            best = Some((e, key));
        }
    }
    let (energy, key) = best.ok_or(Error::DegeneratePartition)?;
    let side_of: Vec<u8> = (0..n).map(|i| ((key >> (n - 1 - i)) & 1) as u8).collect();
    let foreground = if side_of.iter().filter(|&&s| s == 1).count() * 2 <= n {
        1
    } else {
        0
    };
    Ok(Bipartition {
        side_of,
        foreground,
        energy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutIteration {
    pub mask: Mask,
    pub bbox: BBox,
    pub energy: f64,
    pub fiedler: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutResult {
    pub grid_h: usize,
    pub grid_w: usize,
    pub iterations: Vec<CutIteration>,
    /// Why cutting stopped before `n_iters`, if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stop: Option<String>,
}

impl CutResult {
    pub fn boxes(&self) -> Vec<BBox> {
        self.iterations.iter().map(|it| it.bbox).collect()
    }
}

pub const DEFAULT_MASKCUT_ITERS: usize = 3;

/// Iterative MaskCut.
///
/// Each round cuts the graph restricted to the patches not yet claimed by
/// an earlier mask. The foreground side is the one holding the largest
/// indicator magnitude, swapped when it holds three or more of the grid
/// corners still in play. The mask is the 4-connected foreground component
/// around that seed patch.
pub fn maskcut(fm: &FeatureMap, k: &KernelSpec, n_iters: usize) -> Result<CutResult> {
    if n_iters == 0 {
        return Err(Error::config("n_iters", "must be at least 1"));
    }
    let (gh, gw) = (fm.grid_h(), fm.grid_w());
    let full = build_adjacency(fm, k)?;
    let corners = [0, gw - 1, (gh - 1) * gw, gh * gw - 1];

    let mut active: Vec<usize> = (0..fm.n_patches()).collect();
    let mut result = CutResult {
        grid_h: gh,
        grid_w: gw,
        iterations: Vec::new(),
        early_stop: None,
    };

    for _ in 0..n_iters {
        if active.len() < 4 {
            result.early_stop = Some(format!("{} patches left", active.len()));
            break;
        }
        let g = full.subgraph(&active);
        if g.degrees().iter().any(|&d| d <= 0.0) || !g.is_connected() {
            result.early_stop = Some("remaining graph is disconnected".into());
            break;
        }
        let split = match spectral_split(&g) {
            Ok(s) => s,
            Err(Error::AmbiguousCut) => {
                result.early_stop = Some("remaining graph is disconnected".into());
                break;
            }
            Err(e) => return Err(e),
        };
        let part = &split.partition;
        let mut fg = part.foreground;
        let corner_hits = active
            .iter()
            .enumerate()
            .filter(|(local, global)| corners.contains(global) && part.side_of[*local] == fg)
            .count();
        if corner_hits >= 3 {
            fg = 1 - fg;
        }
        let seed = argmax_abs(
            &split.indicator,
            (0..active.len()).filter(|&i| part.side_of[i] == fg),
        );

        let mut on_fg = vec![false; gh * gw];
        for (local, &global) in active.iter().enumerate() {
            on_fg[global] = part.side_of[local] == fg;
        }
        let component = grid_component(&on_fg, gh, gw, active[seed]);
        let mask = Mask::from_indices(gh, gw, component);
        let bbox = mask_to_bbox(&mask)?;
        active.retain(|&i| !mask.cells[i]);
        result.iterations.push(CutIteration {
            mask,
            bbox,
            energy: part.energy,
            fiedler: split.fiedler,
        });
    }
    Ok(result)
}

/// 4-connected component of `on` cells containing `seed`.
fn grid_component(on: &[bool], gh: usize, gw: usize, seed: usize) -> Vec<usize> {
    let mut seen = vec![false; gh * gw];
    let mut stack = vec![seed];
    seen[seed] = true;
    let mut out = Vec::new();
    while let Some(i) = stack.pop() {
        out.push(i);
        let (r, c) = (i / gw, i % gw);
        let mut visit = |j: usize| {
            if on[j] && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        };
        if r > 0 {
            visit(i - gw);
        }
        if r + 1 < gh {
            visit(i + gw);
        }
        if c > 0 {
            visit(i - 1);
        }
        if c + 1 < gw {
            visit(i + 1);
        }
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> PatchGraph {
        PatchGraph::from_adjacency(SymMatrix::from_upper_fn(n, |i, j| if i == j { 0.0 } else { f(i, j) }))
            .unwrap()
    }

    fn planted_two_block() -> PatchGraph {
        graph(10, |i, j| if (i < 5) == (j < 5) { 1.0 } else { 0.01 })
    }

    fn direct_energy(g: &PatchGraph, side_of: &[u8]) -> f64 {
        let n = g.n();
        let (mut cut, mut va, mut vb) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let w = g.weight(i, j);
                if side_of[i] == 0 {
                    va += w;
                    if side_of[j] == 1 {
                        cut += w;
                    }
                } else {
                    vb += w;
                }
            }
        }
        cut / va + cut / vb
    }

    #[test]
    fn energy_two_node() {
        let g = graph(2, |_, _| 0.3);
        assert!((ncut_energy(&g, &[0, 1]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn energy_disconnected_cliques() {
        let g = graph(6, |i, j| if (i < 3) == (j < 3) { 1.0 } else { 0.0 });
        assert_eq!(ncut_energy(&g, &[0, 0, 0, 1, 1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn energy_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = graph(6, |_, _| rng.gen_range(0.05..1.0));
        let split = [0, 1, 1, 0, 1, 0];
        assert!((ncut_energy(&g, &split).unwrap() - direct_energy(&g, &split)).abs() < 1e-12);
    }

    #[test]
    fn energy_degenerate_side() {
        let g = graph(3, |_, _| 1.0);
        assert!(matches!(ncut_energy(&g, &[0, 0, 0]), Err(Error::DegeneratePartition)));
    }

    #[test]
    fn planted_split_recovered() {
        let g = planted_two_block();
        let p = ncut_bipartition(&g).unwrap();
        let oracle = brute_force_ncut(&g).unwrap();
        let first = p.side_of[0];
        for i in 0..10 {
            assert_eq!(p.side_of[i] == first, i < 5);
        }
        assert_eq!(oracle.side_of, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        assert!((p.energy - oracle.energy).abs() < 1e-12);
    }

    #[test]
    fn two_node_unique_split() {
        let g = graph(2, |_, _| 0.7);
        let p = ncut_bipartition(&g).unwrap();
        assert_ne!(p.side_of[0], p.side_of[1]);
        assert!((p.energy - 2.0).abs() < 1e-12);
    }

    #[test]
    fn disconnected_is_ambiguous() {
        let g = graph(6, |i, j| if (i < 3) == (j < 3) { 1.0 } else { 0.0 });
        assert!(matches!(ncut_bipartition(&g), Err(Error::AmbiguousCut)));
    }

    #[test]
    fn brute_force_examples() {
        let g = graph(6, |i, j| if (i < 3) == (j < 3) { 1.0 } else { 0.0 });
        let b = brute_force_ncut(&g).unwrap();
        assert_eq!(b.energy, 0.0);
        assert_eq!(b.side_of, vec![0, 0, 0, 1, 1, 1]);

        // K4 by hand: a 1-3 split gives 3/3 + 3/9 = 4/3, a 2-2 split 4/6 + 4/6 = 4/3
        let k4 = graph(4, |_, _| 1.0);
        let b = brute_force_ncut(&k4).unwrap();
        assert!((b.energy - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(b.side_of, vec![0, 0, 0, 1]);
        let relaxed = ncut_bipartition(&k4).unwrap();
        assert!(relaxed.energy >= b.energy - 1e-12);
    }

    #[test]
    fn brute_force_size_limit() {
        let g = graph(15, |_, _| 1.0);
        assert!(matches!(brute_force_ncut(&g), Err(Error::SizeLimit { .. })));
    }

    #[test]
    fn bbox_examples() {
        let single = Mask::from_indices(4, 5, [2 * 5 + 3]);
        assert_eq!(mask_to_bbox(&single).unwrap(), BBox::new(2, 3, 2, 3));
        let full = Mask::from_indices(4, 5, 0..20);
        assert_eq!(mask_to_bbox(&full).unwrap(), BBox::new(0, 0, 3, 4));
        assert!(matches!(mask_to_bbox(&Mask::empty(3, 3)), Err(Error::EmptyMask)));
    }

    #[test]
    fn bbox_matches_recomputed_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..100 {
            let cells: Vec<bool> = (0..48).map(|_| rng.gen_bool(0.15)).collect();
            if !cells.iter().any(|&c| c) {
                continue;
            }
            let mask = Mask::from_cells(6, 8, cells.clone()).unwrap();
            let coords: Vec<(usize, usize)> =
                (0..48).filter(|&i| cells[i]).map(|i| (i / 8, i % 8)).collect();
            let expect = BBox::new(
                coords.iter().map(|c| c.0).min().unwrap(),
                coords.iter().map(|c| c.1).min().unwrap(),
                coords.iter().map(|c| c.0).max().unwrap(),
                coords.iter().map(|c| c.1).max().unwrap(),
            );
            assert_eq!(mask_to_bbox(&mask).unwrap(), expect);
        }
    }

    #[test]
    fn iou_cell_counting() {
        let a = BBox::new(0, 0, 1, 3);
        let b = BBox::new(0, 2, 1, 5);
        // 4 shared cells out of 8 + 8 - 4
        assert!((a.iou(&b) - 4.0 / 12.0).abs() < 1e-12);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&BBox::new(3, 3, 4, 4)), 0.0);
    }

    #[test]
    fn rle_roundtrip() {
        let m = Mask::from_indices(3, 4, [0, 1, 5, 11]);
        assert_eq!(m.to_rle(), vec![0, 2, 3, 1, 5, 1]);
        assert_eq!(Mask::from_rle(3, 4, &m.to_rle()).unwrap(), m);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<Mask>(&json).unwrap(), m);
    }

    fn planted_map(rng: &mut impl Rng, boxes: &[BBox], dim: usize) -> FeatureMap {
        // orthogonal prototypes keep the planted cut unambiguous
        let (gh, gw) = (8, 8);
        let mut data = Vec::with_capacity(gh * gw * dim);
        for r in 0..gh {
            for c in 0..gw {
                let proto = boxes.iter().position(|b| b.contains(r, c)).map_or(0, |k| k + 1);
                for d in 0..dim {
                    let base = if d == proto { 1.0 } else { 0.0 };
                    data.push(base + 0.05 * rng.gen_range(-1.0..1.0));
                }
            }
        }
        FeatureMap::new(gh, gw, dim, data).unwrap()
    }

    #[test]
    fn maskcut_single_object() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let planted = BBox::new(2, 3, 4, 6);
        let fm = planted_map(&mut rng, &[planted], 6);
        let res = maskcut(&fm, &KernelSpec::cosine_continuous(), 1).unwrap();
        assert_eq!(res.iterations.len(), 1);
        assert!(res.iterations[0].bbox.iou(&planted) >= 0.8);
    }

    #[test]
    fn maskcut_two_objects_disjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let planted = [BBox::new(0, 0, 2, 2), BBox::new(4, 4, 6, 7)];
        let fm = planted_map(&mut rng, &planted, 6);
        let res = maskcut(&fm, &KernelSpec::cosine_continuous(), 2).unwrap();
        assert_eq!(res.iterations.len(), 2);
        assert!(!res.iterations[0].mask.overlaps(&res.iterations[1].mask));
        for p in &planted {
            let best = res.boxes().iter().map(|b| b.iou(p)).fold(0.0, f64::max);
            assert!(best >= 0.8, "best IoU {best}");
        }
    }

    #[test]
    fn maskcut_uniform_map_well_formed() {
        let fm = FeatureMap::new(4, 4, 3, vec![0.5; 48]).unwrap();
        let res = maskcut(&fm, &KernelSpec::gaussian_median(), 1).unwrap();
        assert!(res.iterations.len() <= 1);
        for it in &res.iterations {
            assert!(it.bbox.within(4, 4));
        }
    }

    #[test]
    fn maskcut_zero_iters_rejected() {
        let fm = FeatureMap::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(maskcut(&fm, &KernelSpec::gaussian_median(), 0).is_err());
    }

    #[test]
    fn maskcut_dimension_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fm = planted_map(&mut rng, &[BBox::new(1, 1, 3, 4)], 5);
        let perm = [4, 2, 0, 3, 1];
        let permuted: Vec<f64> = fm
            .patches()
            .flat_map(|p| perm.iter().map(|&d| p[d]).collect::<Vec<_>>())
            .collect();
        let fm2 = FeatureMap::new(8, 8, 5, permuted).unwrap();
        for k in [KernelSpec::cosine_continuous(), KernelSpec::gaussian_median()] {
            let a = maskcut(&fm, &k, 3).unwrap();
            let b = maskcut(&fm2, &k, 3).unwrap();
            assert_eq!(a.boxes(), b.boxes());
            let masks_a: Vec<_> = a.iterations.iter().map(|i| i.mask.clone()).collect();
            let masks_b: Vec<_> = b.iterations.iter().map(|i| i.mask.clone()).collect();
            assert_eq!(masks_a, masks_b);
        }
    }
}
