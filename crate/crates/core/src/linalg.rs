//! Dense symmetric linear algebra: tridiagonal QL eigensolver, nuclear norm
//! and its subgradient, and the matrix norms used by the spectral code.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_QL_ITERATIONS: usize = 60;
const SIGN_EPS: f64 = 1e-12;

/// Real symmetric matrix stored densely in row-major order.
///
/// Both triangles are stored and kept bitwise equal; every mutating method
/// writes the mirrored entry as well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "SymMatrix dimension must be at least 1");
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * m.n + i] = d;
        }
        m
    }

    /// Builds a matrix from the upper triangle produced by `f(i, j)` with
    /// `i <= j`, mirroring it into the lower triangle.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                m.data[i * n + j] = v;
                m.data[j * n + i] = v;
            }
        }
        m
    }

    /// Accepts a row-major buffer, rejecting anything not exactly symmetric.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || data.len() != n * n {
            return Err(Error::Shape(format!(
                "expected {n}x{n} entries, got {}",
                data.len()
            )));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if data[i * n + j] != data[j * n + i] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("rows must form a square matrix".into()));
        }
        Self::from_row_major(n, rows.concat())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        debug_assert_eq!(self.n, other.n);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, s: f64) -> SymMatrix {
        SymMatrix {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        debug_assert_eq!(self.n, other.n);
        SymMatrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        self.add(&other.scaled(-1.0))
    }

    /// `self * self`, which is symmetric for symmetric `self`.
    pub fn square(&self) -> SymMatrix {
        let n = self.n;
        SymMatrix::from_upper_fn(n, |i, j| {
            self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b).sum()
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Principal submatrix over the given (sorted or not) index set.
    pub fn submatrix(&self, idx: &[usize]) -> SymMatrix {
        SymMatrix::from_upper_fn(idx.len(), |a, b| self.get(idx[a], idx[b]))
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[k]` is the unit eigenvector paired with `eigenvalues[k]`.
    pub eigenvectors: Vec<Vec<f64>>,
}

impl EigenDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Reassembles `V diag(f(λ)) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.len();
        let weights: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        SymMatrix::from_upper_fn(n, |i, j| {
            self.eigenvectors
                .iter()
                .zip(&weights)
                .filter(|(_, w)| **w != 0.0)
                .map(|(v, w)| w * v[i] * v[j])
                .sum()
        })
    }
}

/// Eigendecomposition by Householder reduction to tridiagonal form followed
/// by the implicit QL algorithm. Eigenvalues come out ascending and each
/// eigenvector is flipped so that its first component with magnitude above
/// `1e-12` is positive.
pub fn sym_eigendecomposition(m: &SymMatrix) -> Result<EigenDecomposition> {
    if !m.is_finite() {
        return Err(Error::NonFinite("eigendecomposition input"));
    }
    let n = m.n;
    // v is row-major with eigenvectors as columns once finished
    let mut v = m.data.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    tridiagonal_ql(n, &mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| d[x].total_cmp(&d[y]).then(x.cmp(&y)));

    let eigenvalues = order.iter().map(|&k| d[k]).collect();
    let eigenvectors = order
        .iter()
        .map(|&k| {
            let mut col: Vec<f64> = (0..n).map(|i| v[i * n + k]).collect();
            if let Some(first) = col.iter().find(|x| x.abs() > SIGN_EPS) {
                if *first < 0.0 {
                    col.iter_mut().for_each(|x| *x = -*x);
                }
            }
            col
        })
        .collect();

    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Householder tridiagonalization (EISPACK tred2). On return `d` holds the
/// diagonal, `e[1..]` the subdiagonal, and `v` the orthogonal transform.
fn tridiagonalize(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let idx = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let scale: f64 = d[..i].iter().map(|x| x.abs()).sum();
        let mut h = 0.0;
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
                v[idx(j, i)] = 0.0;
            }
        } else {
            for x in d[..i].iter_mut() {
                *x /= scale;
                h += *x * *x;
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            e[..i].iter_mut().for_each(|x| *x = 0.0);
            for j in 0..i {
                let f = d[j];
                v[idx(j, i)] = f;
                let mut g = e[j] + v[idx(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[idx(k, j)] * d[k];
                    e[k] += v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let (f, g) = (d[j], e[j]);
                for k in j..i {
                    v[idx(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    // accumulate the transformations
    for i in 0..n.saturating_sub(1) {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let g: f64 = (0..=i).map(|k| v[idx(k, i + 1)] * v[idx(k, j)]).sum();
                for k in 0..=i {
                    v[idx(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = 0.0;
    }
    v[idx(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL iterations on the tridiagonal form (EISPACK tql2).
fn tridiagonal_ql(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_ITERATIONS {
                    return Err(Error::Shape("eigensolver did not converge".into()));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for x in d[(l + 2)..n].iter_mut() {
                    *x -= h;
                }
                f += h;

                p = d[m];
                let (mut c, mut c2, mut c3) = (1.0, 1.0, 1.0);
                let el1 = e[l + 1];
                let (mut s, mut s2) = (0.0, 0.0);
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let row = k * n;
                        let h = v[row + i + 1];
                        v[row + i + 1] = s * v[row + i] + c * h;
                        v[row + i] = c * v[row + i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Sum of singular values; for symmetric input, `Σ |λ_k|`.
pub fn nuclear_norm(m: &SymMatrix) -> Result<f64> {
    Ok(sym_eigendecomposition(m)?
        .eigenvalues
        .iter()
        .map(|l| l.abs())
        .sum())
}

/// Threshold below which an eigenvalue is treated as zero in the subgradient.
fn zero_eigen_tol(eig: &EigenDecomposition) -> f64 {
    let largest = eig.eigenvalues.iter().fold(0.0_f64, |acc, l| acc.max(l.abs()));
    1e-12 * largest.max(1.0)
}

/// `U sign(Λ) Uᵀ`, the gradient of the nuclear norm wherever no eigenvalue
/// is zero; zero eigenvalues contribute nothing.
pub fn nuclear_norm_subgradient(m: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eigendecomposition(m)?;
    Ok(nuclear_norm_subgradient_from(&eig))
}

pub fn nuclear_norm_subgradient_from(eig: &EigenDecomposition) -> SymMatrix {
    let tol = zero_eigen_tol(eig);
    eig.reconstruct_with(|l| if l.abs() <= tol { 0.0 } else { l.signum() })
}

pub fn spectral_norm(m: &SymMatrix) -> Result<f64> {
    Ok(sym_eigendecomposition(m)?
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, l| acc.max(l.abs())))
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &SymMatrix) -> f64 {
    (0..m.n)
        .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(n: usize, rng: &mut impl Rng) -> SymMatrix {
        SymMatrix::from_upper_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn check_decomposition(m: &SymMatrix, eig: &EigenDecomposition) {
        let n = m.n();
        let bound = 1e-8 * (1.0 + m.frobenius_norm());
        for w in eig.eigenvalues.windows(2) {
            assert!(w[0] <= w[1]);
        }
        for (l, v) in eig.eigenvalues.iter().zip(&eig.eigenvectors) {
            let mv = m.mul_vec(v);
            let r: f64 = mv.iter().zip(v).map(|(a, b)| (a - l * b).powi(2)).sum::<f64>().sqrt();
            assert!(r <= bound, "residual {r} > {bound}");
        }
        for a in 0..n {
            for b in 0..n {
                let d: f64 = eig.eigenvectors[a]
                    .iter()
                    .zip(&eig.eigenvectors[b])
                    .map(|(x, y)| x * y)
                    .sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((d - expect).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn identity_eigenvalues() {
        let eig = sym_eigendecomposition(&SymMatrix::identity(3)).unwrap();
        assert_eq!(eig.eigenvalues, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_sorted() {
        let eig = sym_eigendecomposition(&SymMatrix::from_diagonal(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(eig.eigenvalues, vec![1.0, 2.0, 3.0]);
        assert_eq!(eig.eigenvectors[0], vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn random_50_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_sym(50, &mut rng);
        check_decomposition(&m, &sym_eigendecomposition(&m).unwrap());
    }

    #[test]
    fn residual_and_orthonormality_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..1000 {
            let n = 2 + trial % 63;
            let m = random_sym(n, &mut rng);
            check_decomposition(&m, &sym_eigendecomposition(&m).unwrap());
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = SymMatrix::identity(2);
        m.set(0, 1, f64::NAN);
        assert!(matches!(sym_eigendecomposition(&m), Err(Error::NonFinite(_))));
    }

    #[test]
    fn from_row_major_rejects_asymmetric() {
        let err = SymMatrix::from_row_major(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap_err();
        assert!(matches!(err, Error::NotSymmetric { row: 0, col: 1 }));
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_sym(12, &mut rng);
        let a = sym_eigendecomposition(&m).unwrap();
        let b = sym_eigendecomposition(&m).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
        assert_eq!(a.eigenvectors, b.eigenvectors);
    }

    #[test]
    fn sign_convention_first_nonzero_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_sym(9, &mut rng);
        for v in sym_eigendecomposition(&m).unwrap().eigenvectors {
            let first = v.iter().find(|x| x.abs() > 1e-12).unwrap();
            assert!(*first > 0.0);
        }
    }

    #[test]
    fn nuclear_norm_examples() {
        assert!((nuclear_norm(&SymMatrix::identity(4)).unwrap() - 4.0).abs() < 1e-12);
        let m = SymMatrix::from_diagonal(&[-2.0, 3.0]);
        assert!((nuclear_norm(&m).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn nuclear_norm_matches_singular_values_of_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = random_sym(10, &mut rng);
        // singular values are square roots of the eigenvalues of MᵀM = M²
        let oracle: f64 = sym_eigendecomposition(&m.square())
            .unwrap()
            .eigenvalues
            .iter()
            .map(|l| l.max(0.0).sqrt())
            .sum();
        assert!((nuclear_norm(&m).unwrap() - oracle).abs() < 1e-8);
    }

    #[test]
    fn subgradient_examples() {
        let spd = SymMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let g = nuclear_norm_subgradient(&spd).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g.get(i, j) - e).abs() < 1e-12);
            }
        }
        let g = nuclear_norm_subgradient(&SymMatrix::from_diagonal(&[-2.0, 3.0])).unwrap();
        assert_eq!(g.get(0, 0), -1.0);
        assert_eq!(g.get(1, 1), 1.0);
        assert_eq!(g.get(0, 1), 0.0);
    }

    #[test]
    fn subgradient_maps_zero_eigenvalue_to_zero() {
        let g = nuclear_norm_subgradient(&SymMatrix::from_diagonal(&[0.0, 3.0])).unwrap();
        assert_eq!(g.get(0, 0), 0.0);
        assert_eq!(g.get(1, 1), 1.0);
    }

    #[test]
    fn subgradient_directional_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let t = 1e-5;
        let mut checked = 0;
        while checked < 20 {
            let m = random_sym(6, &mut rng);
            let eig = sym_eigendecomposition(&m).unwrap();
            // skip near-zero or clustered spectra, where the norm is not smooth
            if eig.eigenvalues.iter().any(|l| l.abs() < 1e-2) {
                continue;
            }
            let h = random_sym(6, &mut rng);
            let g = nuclear_norm_subgradient_from(&eig);
            let fd = (nuclear_norm(&m.add(&h.scaled(t))).unwrap() - nuclear_norm(&m).unwrap()) / t;
            let analytic = g.dot(&h);
            assert!((fd - analytic).abs() < 1e-4, "fd {fd} vs {analytic}");
            checked += 1;
        }
    }

    #[test]
    fn norm_examples() {
        let i = SymMatrix::identity(3);
        assert!((spectral_norm(&i).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(inf_norm(&i), 1.0);
        let ones = SymMatrix::from_upper_fn(3, |_, _| 1.0);
        assert!((spectral_norm(&ones).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(inf_norm(&ones), 3.0);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn norm_orderings(seed in 0u64..10_000, n in 2usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_sym(n, &mut rng);
            let spec = spectral_norm(&m).unwrap();
            proptest::prop_assert!(inf_norm(&m) + 1e-12 >= spec);
            proptest::prop_assert!(nuclear_norm(&m).unwrap() + 1e-12 >= spec);
        }
    }
}
