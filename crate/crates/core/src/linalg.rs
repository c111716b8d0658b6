//! Small dense linear-algebra helpers shared across modules.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

pub(crate) fn to_nalgebra(m: ArrayView2<f64>) -> DMatrix<f64> {
    let (r, c) = m.dim();
    DMatrix::from_fn(r, c, |i, j| m[[i, j]])
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample::<f64, _>(StandardNormal))
}

/// Orthonormalizes rows in order with two passes of modified Gram-Schmidt.
/// Rows that are numerically dependent on earlier ones are left as zero.
pub fn orthonormalize_rows(m: &Array2<f64>) -> Array2<f64> {
    let mut q = m.clone();
    for i in 0..q.nrows() {
        let scale = q.row(i).dot(&q.row(i)).sqrt();
        for _ in 0..2 {
            for j in 0..i {
                let proj = q.row(i).dot(&q.row(j));
                let qj = q.row(j).to_owned();
                q.row_mut(i).scaled_add(-proj, &qj);
            }
        }
        let norm = q.row(i).dot(&q.row(i)).sqrt();
        if norm > 1e-10 * scale.max(1e-300) && norm > 0.0 {
            q.row_mut(i).mapv_inplace(|v| v / norm);
        } else {
            q.row_mut(i).fill(0.0);
        }
    }
    q
}

/// Seeded Gaussian rows orthonormalized. For `rows > cols` the first `cols` rows form
/// an orthonormal basis and the remainder are Gaussian rows scaled by `1/sqrt(cols)`.
pub fn random_orthonormal_rows(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let g = gaussian(rows, cols, rng);
    let k = rows.min(cols);
    let mut out = g.clone();
    let head = orthonormalize_rows(&g.slice(ndarray::s![..k, ..]).to_owned());
    out.slice_mut(ndarray::s![..k, ..]).assign(&head);
    let scale = 1.0 / (cols as f64).sqrt();
    out.slice_mut(ndarray::s![k.., ..]).mapv_inplace(|v| v * scale);
    out
}

/// Singular values in descending order.
pub fn singular_values(m: ArrayView2<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = to_nalgebra(m).singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(m: ArrayView2<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&max) if max > 0.0 => s.iter().filter(|&&v| v > rel_tol * max).count(),
        _ => 0,
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending. Eigenvectors are
/// returned as rows, sign-normalized so the largest-magnitude component is positive.
pub fn symmetric_eigen(m: ArrayView2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = m.nrows();
    let eig = nalgebra::SymmetricEigen::new(to_nalgebra(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (row, &i) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(i);
        let pivot = (0..n)
            .max_by(|&a, &b| col[a].abs().partial_cmp(&col[b].abs()).unwrap().then(b.cmp(&a)))
            .unwrap_or(0);
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            vectors[[row, j]] = sign * col[j];
        }
    }
    (values, vectors)
}

/// Cosines of the principal angles between the row spaces of `a` and `b`
/// (orthonormalized first), descending.
pub fn principal_cosines(a: &Array2<f64>, b: &Array2<f64>) -> Vec<f64> {
    let qa = orthonormalize_rows(a);
    let qb = orthonormalize_rows(b);
    singular_values(qa.dot(&qb.t()).view())
}

/// Orthonormal rows spanning the orthogonal complement of `removed` (rows assumed
/// orthonormal) in R^dim. Built by Gram-Schmidt over the standard basis, so the
/// result is the identity when nothing is removed.
pub fn complement_basis(removed: &Array2<f64>, dim: usize) -> Array2<f64> {
    let target = dim.saturating_sub(removed.nrows());
    let mut basis: Vec<Array1<f64>> = removed.rows().into_iter().map(|r| r.to_owned()).collect();
    let mut out = Vec::with_capacity(target);
    for e in 0..dim {
        if out.len() == target {
            break;
        }
        let mut v = Array1::zeros(dim);
        v[e] = 1.0;
        for _ in 0..2 {
            for b in basis.iter() {
                let p = v.dot(b);
                v.scaled_add(-p, b);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-6 {
            v.mapv_inplace(|x| x / norm);
            basis.push(v.clone());
            out.push(v);
        }
    }
    let mut m = Array2::zeros((out.len(), dim));
    for (i, v) in out.iter().enumerate() {
        m.row_mut(i).assign(v);
    }
    m
}

/// Index of the maximum, ties to the lowest index.
pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.axis_iter(Axis(0)).map(argmax).collect()
}

/// Row-wise softmax, stabilized by the row max.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    p
}

/// Mean cross-entropy of integer labels under row logits.
pub fn mean_cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    let n = labels.len().max(1) as f64;
    logits
        .axis_iter(Axis(0))
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            lse - row[y]
        })
        .sum::<f64>()
        / n
}

/// Row softmax and mean cross-entropy from one pass of exponentials.
pub fn softmax_cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> (Array2<f64>, f64) {
    let mut p = logits.clone();
    let mut total = 0.0;
    for (mut row, &y) in p.axis_iter_mut(Axis(0)).zip(labels) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let target = row[y] - max;
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        total += s.ln() - target;
        row.mapv_inplace(|v| v / s);
    }
    (p, total / labels.len().max(1) as f64)
}

/// Rows with a trailing constant-1 column appended.
pub fn with_bias_column(x: &Array2<f64>) -> Array2<f64> {
    let (n, k) = x.dim();
    let mut out = Array2::ones((n, k + 1));
    out.slice_mut(ndarray::s![.., ..k]).assign(x);
    out
}
