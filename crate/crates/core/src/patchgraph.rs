//! Patch feature maps, kernel graphs over their patches, Laplacians, Fiedler
//! values and an exhaustive Cheeger-constant search for small graphs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigendecomposition, EigenDecomposition, SymMatrix};

/// Largest graph the exhaustive searches will enumerate.
pub const BRUTE_FORCE_MAX_NODES: usize = 14;

/// Grid of per-patch embedding vectors, patches in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    grid_h: usize,
    grid_w: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(grid_h: usize, grid_w: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if grid_h * grid_w < 2 || dim == 0 {
            return Err(Error::Shape(format!(
                "feature map needs at least 2 patches and dim >= 1, got {grid_h}x{grid_w}x{dim}"
            )));
        }
        if data.len() != grid_h * grid_w * dim {
            return Err(Error::Shape(format!(
                "expected {} values for {grid_h}x{grid_w}x{dim}, got {}",
                grid_h * grid_w * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature map"));
        }
        Ok(Self {
            grid_h,
            grid_w,
            dim,
            data,
        })
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_patches(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn patch_at(&self, row: usize, col: usize) -> &[f64] {
        self.patch(row * self.grid_w + col)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn patches(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Gaussian,
    CosineContinuous,
    CosineBinarized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    Fixed(f64),
    MedianHeuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub sigma: Bandwidth,
    pub tau_sim: f64,
    pub epsilon_floor: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::gaussian_median()
    }
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Self {
        Self {
            kind: KernelKind::Gaussian,
            sigma: Bandwidth::Fixed(sigma),
            ..Self::gaussian_median()
        }
    }

    pub fn gaussian_median() -> Self {
        Self {
            kind: KernelKind::Gaussian,
            sigma: Bandwidth::MedianHeuristic,
            tau_sim: 0.2,
            epsilon_floor: 1e-5,
        }
    }

    pub fn cosine_continuous() -> Self {
        Self {
            kind: KernelKind::CosineContinuous,
            ..Self::gaussian_median()
        }
    }

    pub fn cosine_binarized(tau_sim: f64, epsilon_floor: f64) -> Self {
        Self {
            kind: KernelKind::CosineBinarized,
            sigma: Bandwidth::MedianHeuristic,
            tau_sim,
            epsilon_floor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Bandwidth::Fixed(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config("kernel.sigma", "sigma must be positive"));
            }
        }
        if !(self.tau_sim > 0.0 && self.tau_sim < 1.0) {
            return Err(Error::config("kernel.tau_sim", "must lie in (0, 1)"));
        }
        if !(self.epsilon_floor > 0.0 && self.epsilon_floor < self.tau_sim) {
            return Err(Error::config(
                "kernel.epsilon_floor",
                "must lie in (0, tau_sim)",
            ));
        }
        Ok(())
    }
}

/// Weighted undirected graph with zero diagonal and cached degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGraph {
    adjacency: SymMatrix,
    degrees: Vec<f64>,
}

impl PatchGraph {
    pub fn from_adjacency(adjacency: SymMatrix) -> Result<Self> {
        let n = adjacency.n();
        for i in 0..n {
            if adjacency.get(i, i) != 0.0 {
                return Err(Error::Shape(format!("adjacency diagonal at {i} is nonzero")));
            }
            if adjacency.row(i).iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
                return Err(Error::Shape(format!(
                    "adjacency row {i} has a negative or non-finite weight"
                )));
            }
        }
        let degrees = (0..n).map(|i| adjacency.row(i).iter().sum()).collect();
        Ok(Self { adjacency, degrees })
    }

    pub fn n(&self) -> usize {
        self.adjacency.n()
    }

    pub fn adjacency(&self) -> &SymMatrix {
        &self.adjacency
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency.get(i, j)
    }

    pub fn subgraph(&self, nodes: &[usize]) -> PatchGraph {
        PatchGraph::from_adjacency(self.adjacency.submatrix(nodes))
            .expect("principal submatrix of a valid adjacency is valid")
    }

    /// Connectivity over strictly positive weights.
    pub fn is_connected(&self) -> bool {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for (j, &w) in self.adjacency.row(i).iter().enumerate() {
                if w > 0.0 && !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == n
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Median of pairwise Euclidean distances, falling back to the median of
/// the positive ones and finally to 1 when every patch is identical.
pub fn median_pairwise_distance(fm: &FeatureMap) -> f64 {
    let n = fm.n_patches();
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(squared_distance(fm.patch(i), fm.patch(j)).sqrt());
        }
    }
    let median = |v: &mut Vec<f64>| -> f64 {
        v.sort_by(f64::total_cmp);
        let m = v.len();
        if m % 2 == 1 {
            v[m / 2]
        } else {
            0.5 * (v[m / 2 - 1] + v[m / 2])
        }
    };
    let med = median(&mut d);
    if med > 0.0 {
        return med;
    }
    let mut positive: Vec<f64> = d.into_iter().filter(|&x| x > 0.0).collect();
    if positive.is_empty() {
        1.0
    } else {
        median(&mut positive)
    }
}

/// Bandwidth a Gaussian kernel would use on this map.
pub fn resolve_sigma(fm: &FeatureMap, k: &KernelSpec) -> f64 {
    match k.sigma {
        Bandwidth::Fixed(s) => s,
        Bandwidth::MedianHeuristic => median_pairwise_distance(fm),
    }
}

pub fn build_adjacency(fm: &FeatureMap, k: &KernelSpec) -> Result<PatchGraph> {
    let n = fm.n_patches();
    let adjacency = match k.kind {
        KernelKind::Gaussian => {
            let sigma = resolve_sigma(fm, k);
            gaussian_adjacency(fm, sigma)
        }
        KernelKind::CosineContinuous | KernelKind::CosineBinarized => {
            let norms: Vec<f64> = fm.patches().map(norm).collect();
            if let Some(index) = norms.iter().position(|&x| x == 0.0) {
                return Err(Error::DegenerateFeature { index });
            }
            SymMatrix::from_upper_fn(n, |i, j| {
                if i == j {
                    return 0.0;
                }
                let cos = dot(fm.patch(i), fm.patch(j)) / (norms[i] * norms[j]);
                cosine_weight(cos, k)
            })
        }
    };
    PatchGraph::from_adjacency(adjacency)
}

pub(crate) fn cosine_weight(cos: f64, k: &KernelSpec) -> f64 {
    match k.kind {
        KernelKind::CosineBinarized => {
            if cos >= k.tau_sim {
                1.0
            } else {
                k.epsilon_floor
            }
        }
        _ => cos.max(0.0),
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn gaussian_adjacency(fm: &FeatureMap, sigma: f64) -> SymMatrix {
    let denom = 2.0 * sigma * sigma;
    SymMatrix::from_upper_fn(fm.n_patches(), |i, j| {
        if i == j {
            0.0
        } else {
            (-squared_distance(fm.patch(i), fm.patch(j)) / denom).exp()
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaplacianKind {
    #[default]
    Unnormalized,
    Normalized,
}

/// `L = D - A`.
pub fn laplacian(g: &PatchGraph) -> SymMatrix {
    let a = g.adjacency();
    SymMatrix::from_upper_fn(g.n(), |i, j| {
        if i == j {
            g.degrees[i] - a.get(i, i)
        } else {
            -a.get(i, j)
        }
    })
}

/// `L_sym = I - D^{-1/2} A D^{-1/2}`.
pub fn normalized_laplacian(g: &PatchGraph) -> Result<SymMatrix> {
    if let Some(index) = g.degrees.iter().position(|&d| d <= 0.0) {
        return Err(Error::IsolatedNode { index });
    }
    let inv_sqrt: Vec<f64> = g.degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let a = g.adjacency();
    Ok(SymMatrix::from_upper_fn(g.n(), |i, j| {
        let w = a.get(i, j) * inv_sqrt[i] * inv_sqrt[j];
        if i == j {
            1.0 - w
        } else {
            -w
        }
    }))
}

pub fn laplacian_of_kind(g: &PatchGraph, which: LaplacianKind) -> Result<SymMatrix> {
    match which {
        LaplacianKind::Unnormalized => Ok(laplacian(g)),
        LaplacianKind::Normalized => normalized_laplacian(g),
    }
}

pub fn laplacian_spectrum(g: &PatchGraph, which: LaplacianKind) -> Result<EigenDecomposition> {
    sym_eigendecomposition(&laplacian_of_kind(g, which)?)
}

/// Second smallest eigenvalue of the chosen Laplacian.
pub fn fiedler_value(g: &PatchGraph, which: LaplacianKind) -> Result<f64> {
    if g.n() < 2 {
        return Err(Error::Shape("Fiedler value needs at least 2 nodes".into()));
    }
    // tiny negative round-off is clamped; Laplacians are PSD
    Ok(laplacian_spectrum(g, which)?.eigenvalues[1].max(0.0))
}

pub fn max_degree(g: &PatchGraph) -> f64 {
    g.degrees.iter().copied().fold(0.0, f64::max)
}

/// Denominator used by the Cheeger ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheegerNormalization {
    /// `min(C(S,V), C(V∖S,V))`: total weight incident to each side (conductance).
    #[default]
    Volume,
    /// `min(|S|, |V∖S|)`: node counts (isoperimetric number).
    Cardinality,
}

/// Exhaustive Cheeger constant with volume normalization.
pub fn cheeger_constant_bruteforce(g: &PatchGraph) -> Result<f64> {
    cheeger_constant_bruteforce_with(g, CheegerNormalization::Volume)
}

pub fn cheeger_constant_bruteforce_with(
    g: &PatchGraph,
    normalization: CheegerNormalization,
) -> Result<f64> {
    let n = g.n();
    if n > BRUTE_FORCE_MAX_NODES {
        return Err(Error::SizeLimit {
            n,
            max: BRUTE_FORCE_MAX_NODES,
        });
    }
    if n < 2 {
        return Err(Error::Shape("Cheeger constant needs at least 2 nodes".into()));
    }
    let total_volume: f64 = g.degrees.iter().sum();
    let mut best = f64::INFINITY;
    // node n-1 always sits outside S, so each bipartition is visited once
    for mask in 1u32..(1u32 << (n - 1)) {
        let (cut, vol_s, size_s) = side_statistics(g, mask);
        let denom = match normalization {
            CheegerNormalization::Volume => vol_s.min(total_volume - vol_s),
            CheegerNormalization::Cardinality => size_s.min(n - size_s) as f64,
        };
        let ratio = if cut == 0.0 { 0.0 } else { cut / denom };
        best = best.min(ratio);
    }
    Ok(best)
}

/// Cut weight, volume and size of the node set encoded by `mask`.
pub(crate) fn side_statistics(g: &PatchGraph, mask: u32) -> (f64, f64, usize) {
    let n = g.n();
    let mut cut = 0.0;
    let mut vol = 0.0;
    let mut size = 0;
    for i in 0..n {
        if mask & (1 << i) == 0 {
            continue;
        }
        size += 1;
        vol += g.degrees[i];
        for (j, &w) in g.adjacency.row(i).iter().enumerate() {
            if mask & (1 << j) == 0 {
                cut += w;
            }
        }
    }
    (cut, vol, size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_node(w: f64) -> PatchGraph {
        PatchGraph::from_adjacency(SymMatrix::from_rows(&[vec![0.0, w], vec![w, 0.0]]).unwrap())
            .unwrap()
    }

    fn complete(n: usize) -> PatchGraph {
        PatchGraph::from_adjacency(SymMatrix::from_upper_fn(n, |i, j| if i == j { 0.0 } else { 1.0 }))
            .unwrap()
    }

    fn path3() -> PatchGraph {
        PatchGraph::from_adjacency(
            SymMatrix::from_rows(&[
                vec![0.0, 1.0, 0.0],
                vec![1.0, 0.0, 1.0],
                vec![0.0, 1.0, 0.0],
            ])
            .unwrap(),
        )
        .unwrap()
    }

    fn two_components() -> PatchGraph {
        PatchGraph::from_adjacency(SymMatrix::from_upper_fn(6, |i, j| {
            if i != j && (i < 3) == (j < 3) {
                1.0
            } else {
                0.0
            }
        }))
        .unwrap()
    }

    fn random_graph(n: usize, rng: &mut impl Rng, density: f64) -> PatchGraph {
        PatchGraph::from_adjacency(SymMatrix::from_upper_fn(n, |i, j| {
            if i != j && rng.gen_bool(density) {
                rng.gen_range(0.0..1.0)
            } else {
                0.0
            }
        }))
        .unwrap()
    }

    fn fm(rows: &[Vec<f64>]) -> FeatureMap {
        let dim = rows[0].len();
        FeatureMap::new(1, rows.len(), dim, rows.concat()).unwrap()
    }

    #[test]
    fn gaussian_identical_patches_weight_one() {
        let g = build_adjacency(&fm(&[vec![0.3, 0.1], vec![0.3, 0.1]]), &KernelSpec::gaussian(0.7)).unwrap();
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.weight(0, 0), 0.0);
    }

    #[test]
    fn cosine_orthogonal_is_zero() {
        let g = build_adjacency(&fm(&[vec![1.0, 0.0], vec![0.0, 1.0]]), &KernelSpec::cosine_continuous())
            .unwrap();
        assert_eq!(g.weight(0, 1), 0.0);
    }

    #[test]
    fn gaussian_equilateral_uniform_weights() {
        let d: f64 = 0.8;
        let h = d * 3f64.sqrt() / 2.0;
        let map = fm(&[vec![0.0, 0.0], vec![d, 0.0], vec![d / 2.0, h]]);
        let sigma = 0.5;
        let g = build_adjacency(&map, &KernelSpec::gaussian(sigma)).unwrap();
        let expect = (-(d * d) / (2.0 * sigma * sigma)).exp();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert!((g.weight(i, j) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_binarized_thresholds() {
        let k = KernelSpec::cosine_binarized(0.2, 1e-5);
        let g = build_adjacency(&fm(&[vec![1.0, 0.0], vec![1.0, 0.1], vec![0.0, 1.0]]), &k).unwrap();
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.weight(0, 2), 1e-5);
    }

    #[test]
    fn cosine_rejects_zero_vector() {
        let err = build_adjacency(&fm(&[vec![1.0, 0.0], vec![0.0, 0.0]]), &KernelSpec::cosine_continuous())
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateFeature { index: 1 }));
    }

    #[test]
    fn kernel_validation() {
        assert!(KernelSpec::gaussian(0.0).validate().is_err());
        assert!(KernelSpec::cosine_binarized(0.2, 0.3).validate().is_err());
        assert!(KernelSpec::cosine_binarized(1.0, 0.1).validate().is_err());
        assert!(KernelSpec::default().validate().is_ok());
    }

    #[test]
    fn median_heuristic_value() {
        // distances 1, 2, 1 -> median 1
        let map = fm(&[vec![0.0], vec![1.0], vec![2.0]]);
        assert_eq!(median_pairwise_distance(&map), 1.0);
        let same = fm(&[vec![1.0], vec![1.0]]);
        assert_eq!(median_pairwise_distance(&same), 1.0);
    }

    #[test]
    fn two_node_laplacian() {
        let l = laplacian(&two_node(0.4));
        assert_eq!(l.as_slice(), &[0.4, -0.4, -0.4, 0.4]);
    }

    #[test]
    fn laplacian_null_space_contains_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_graph(9, &mut rng, 0.7);
        let l = laplacian(&g);
        for v in l.mul_vec(&[1.0; 9]) {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_spectrum_in_unit_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let g = random_graph(10, &mut rng, 1.0);
            let eig = laplacian_spectrum(&g, LaplacianKind::Normalized).unwrap();
            for l in eig.eigenvalues {
                assert!((-1e-10..=2.0 + 1e-10).contains(&l));
            }
        }
    }

    #[test]
    fn normalized_rejects_isolated() {
        let g = PatchGraph::from_adjacency(SymMatrix::zeros(3)).unwrap();
        assert!(matches!(normalized_laplacian(&g), Err(Error::IsolatedNode { index: 0 })));
    }

    #[test]
    fn fiedler_examples() {
        let k4 = fiedler_value(&complete(4), LaplacianKind::Unnormalized).unwrap();
        assert!((k4 - 4.0).abs() < 1e-10);
        let p3 = fiedler_value(&path3(), LaplacianKind::Unnormalized).unwrap();
        assert!((p3 - 1.0).abs() < 1e-10);
        let split = fiedler_value(&two_components(), LaplacianKind::Unnormalized).unwrap();
        assert!(split < 1e-12);
    }

    #[test]
    fn cheeger_examples() {
        assert_eq!(cheeger_constant_bruteforce(&two_components()).unwrap(), 0.0);
        assert!((cheeger_constant_bruteforce(&two_node(0.37)).unwrap() - 1.0).abs() < 1e-12);
        // K4: best split is 2-2 with cut 4 and volumes 6
        assert!((cheeger_constant_bruteforce(&complete(4)).unwrap() - 4.0 / 6.0).abs() < 1e-12);
        let iso = cheeger_constant_bruteforce_with(&complete(4), CheegerNormalization::Cardinality).unwrap();
        assert!((iso - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cheeger_size_limit() {
        let err = cheeger_constant_bruteforce(&complete(15)).unwrap_err();
        assert!(matches!(err, Error::SizeLimit { n: 15, .. }));
    }

    #[test]
    fn cheeger_bounds_on_random_graph() {
        // the Δ-form bound pairs the unnormalized Fiedler value with the
        // isoperimetric number
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = random_graph(8, &mut rng, 1.0);
        let l2 = fiedler_value(&g, LaplacianKind::Unnormalized).unwrap();
        let h = cheeger_constant_bruteforce_with(&g, CheegerNormalization::Cardinality).unwrap();
        assert!(l2 / 2.0 <= h + 1e-12);
        assert!(h <= (2.0 * max_degree(&g) * l2).sqrt() + 1e-12);
    }

    #[test]
    fn max_degree_examples() {
        assert_eq!(max_degree(&complete(4)), 3.0);
        assert_eq!(max_degree(&two_node(0.25)), 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = random_graph(7, &mut rng, 0.8);
        let mut best = 0.0_f64;
        for i in 0..7 {
            let mut s = 0.0;
            for j in 0..7 {
                s += g.adjacency().get(i, j);
            }
            best = best.max(s);
        }
        assert_eq!(max_degree(&g), best);
    }

    fn union_find_connected(g: &PatchGraph) -> bool {
        let n = g.n();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if g.weight(i, j) > 0.0 {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
        let root = find(&mut parent, 0);
        (0..n).all(|i| find(&mut parent, i) == root)
    }

    #[test]
    fn fiedler_zero_iff_disconnected() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut seen = [0usize; 2];
        for _ in 0..300 {
            let g = random_graph(7, &mut rng, 0.3);
            let connected = union_find_connected(&g);
            assert_eq!(connected, g.is_connected());
            let l2 = fiedler_value(&g, LaplacianKind::Unnormalized).unwrap();
            assert_eq!(l2 > 1e-10, connected, "λ2 = {l2}");
            seen[connected as usize] += 1;
        }
        assert!(seen[0] > 0 && seen[1] > 0);
    }

    #[test]
    fn adjacency_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 6;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let perm = [3, 0, 5, 1, 4, 2];
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&p| rows[p].clone()).collect();
        for k in [KernelSpec::gaussian_median(), KernelSpec::cosine_continuous()] {
            let g = build_adjacency(&fm(&rows), &k).unwrap();
            let gp = build_adjacency(&fm(&permuted), &k).unwrap();
            for i in 0..n {
                for j in 0..n {
                    assert!((gp.weight(i, j) - g.weight(perm[i], perm[j])).abs() < 1e-14);
                }
            }
        }
    }
}
