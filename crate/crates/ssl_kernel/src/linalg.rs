//! Dense symmetric linear algebra shared by the solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenpairs sorted by descending eigenvalue; columns of `vectors` are unit norm.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

/// Descending eigendecomposition of a symmetric matrix.
///
/// The output is canonical: neighbouring eigenvalues closer than `tie_tol * max(1, |λ|)`
/// form a cluster whose basis is rebuilt from the reduced row echelon form of
/// the cluster projector, so pivots appear in ascending coordinate order.
/// Every vector has its first significant coordinate positive.
pub fn eigh_desc(m: &DMatrix<f64>, tie_tol: f64) -> Result<EigenPairs> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Input(format!("matrix is {}x{}, not square", n, m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in symmetric eigenproblem".into()));
    }
    if n == 0 {
        return Ok(EigenPairs {
            values: vec![],
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    let mut pairs = EigenPairs { values, vectors };
    canonicalize(&mut pairs, tie_tol);
    Ok(pairs)
}

/// Rebuilds each degenerate cluster basis deterministically and fixes signs.
pub fn canonicalize(pairs: &mut EigenPairs, tie_tol: f64) {
    let k = pairs.values.len();
    if k == 0 {
        return;
    }
    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        while end < k && {
            let (a, b) = (pairs.values[end - 1], pairs.values[end]);
            (a - b).abs() <= tie_tol * a.abs().max(b.abs()).max(1.0)
        } {
            end += 1;
        }
        if end - start > 1 {
            let block = pairs.vectors.columns(start, end - start).into_owned();
            let basis = echelon_basis(&block);
            for (j, col) in basis.column_iter().enumerate() {
                pairs.vectors.set_column(start + j, &col);
            }
        }
        start = end;
    }
    for mut col in pairs.vectors.column_iter_mut() {
        fix_sign(&mut col);
    }
}

fn fix_sign(col: &mut nalgebra::DVectorViewMut<f64>) {
    let big = col.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if big == 0.0 {
        return;
    }
    if let Some(first) = col.iter().find(|v| v.abs() > 1e-8 * big) {
        if *first < 0.0 {
            col.neg_mut();
        }
    }
}

/// Orthonormal basis of the column span of `block`, ordered by pivot position
/// of the reduced row echelon form of `blockᵀ`.
fn echelon_basis(block: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, c) = block.shape();
    let mut rows = block.transpose();
    let scale = max_abs(&rows).max(f64::MIN_POSITIVE);
    let mut r = 0;
    for col in 0..n {
        if r == c {
            break;
        }
        let (mut piv, mut best) = (r, 0.0);
        for i in r..c {
            let v = rows[(i, col)].abs();
            if v > best {
                best = v;
                piv = i;
            }
        }
        if best <= 1e-8 * scale {
            continue;
        }
        rows.swap_rows(r, piv);
        let p = rows[(r, col)];
        for j in 0..n {
            rows[(r, j)] /= p;
        }
        for i in 0..c {
            if i != r {
                let f = rows[(i, col)];
                if f != 0.0 {
                    for j in 0..n {
                        let v = rows[(r, j)];
                        rows[(i, j)] -= f * v;
                    }
                }
            }
        }
        r += 1;
    }
    let mut out = DMatrix::zeros(n, c);
    let mut filled = 0;
    for i in 0..c {
        let mut v: DVector<f64> = rows.row(i).transpose();
        for j in 0..filled {
            let q = out.column(j);
            let d = q.dot(&v);
            v.axpy(-d, &q, 1.0);
        }
        let norm = v.norm();
        if norm > 1e-10 {
            out.set_column(filled, &(v / norm));
            filled += 1;
        }
    }
    if filled < c {
        // Rank-deficient echelon form: fall back to the original orthonormal block.
        return block.clone();
    }
    out
}

/// Eigenvalue-thresholded pseudo-inverse of a symmetric PSD-ish matrix.
pub fn pinv_sym(m: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let top = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(*v));
    if top <= 0.0 {
        return Err(Error::Numeric("pseudo-inverse of a matrix with no positive eigenvalue".into()));
    }
    let cut = rel_tol * top;
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (i, &v) in eig.eigenvalues.iter().enumerate() {
        if v > cut {
            let u = eig.eigenvectors.column(i);
            out += (u * u.transpose()) / v;
        }
    }
    Ok(symmetrize(&out))
}

/// Positive eigen-subspace of a symmetric PSD-ish matrix above a relative cut.
#[derive(Debug, Clone)]
pub struct Range {
    pub basis: DMatrix<f64>,
    pub values: Vec<f64>,
}

pub fn positive_range(m: &DMatrix<f64>, rel_tol: f64) -> Result<Range> {
    let pairs = eigh_desc(m, 0.0)?;
    let top = pairs.values.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return Err(Error::Numeric("matrix has no positive eigenvalue".into()));
    }
    let r = pairs.values.iter().take_while(|&&v| v > rel_tol * top).count();
    Ok(Range {
        basis: pairs.vectors.columns(0, r).into_owned(),
        values: pairs.values[..r].to_vec(),
    })
}

/// Applies `f` to the eigenvalues of a symmetric matrix.
pub fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (i, &v) in eig.eigenvalues.iter().enumerate() {
        let u = eig.eigenvectors.column(i);
        out += (u * u.transpose()) * f(v);
    }
    symmetrize(&out)
}

/// Largest eigenvalue magnitude by power iteration on `mᵀm`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let n = m.ncols();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..200 {
        let w = m.transpose() * (m * &v);
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        v = w / nw;
        if (nw - est).abs() <= 1e-12 * nw {
            est = nw;
            break;
        }
        est = nw;
    }
    est.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_projector_gives_indicators() {
        let n = 3;
        let m = 2;
        let mut t = DMatrix::zeros(n * m, n * m);
        for i in 0..n {
            for a in 0..m {
                for b in 0..m {
                    t[(i * m + a, i * m + b)] = 0.5;
                }
            }
        }
        let e = eigh_desc(&t, 1e-9).unwrap();
        let s = 1.0 / 2f64.sqrt();
        for i in 0..n {
            assert!((e.values[i] - 1.0).abs() < 1e-12);
            for a in 0..n * m {
                let want = if a / m == i { s } else { 0.0 };
                assert!((e.vectors[(a, i)] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn pinv_of_rank_one() {
        let u = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let m = &u * u.transpose();
        let p = pinv_sym(&m, 1e-10).unwrap();
        let back = &m * &p * &m;
        assert!(max_abs(&(back - &m)) < 1e-12);
    }

    #[test]
    fn sorted_and_signed() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 5.0]);
        let e = eigh_desc(&m, 1e-9).unwrap();
        assert!((e.values[0] - 5.0).abs() < 1e-12);
        assert!((e.values[1] - 3.0).abs() < 1e-12);
        assert!((e.values[2] - 1.0).abs() < 1e-12);
        for c in e.vectors.column_iter() {
            let first = c.iter().find(|v| v.abs() > 1e-8).unwrap();
            assert!(*first > 0.0);
        }
    }
}
