//! Small dense symmetric positive-definite kernels.
//!
//! Matrices are row-major `p x p`. Cross-products over rows are reduced in
//! fixed-size chunks combined in chunk order, so results do not depend on the
//! thread count.

use rayon::prelude::*;

const CHUNK_ROWS: usize = 2048;

/// Gathers `X[i, cols]` for a row-major matrix with `stride` columns.
#[inline]
fn gather(x: &[f64], stride: usize, row: usize, cols: &[usize], out: &mut [f64]) {
    let r = &x[row * stride..(row + 1) * stride];
    for (o, &c) in out.iter_mut().zip(cols) {
        *o = r[c];
    }
}

/// `X' W X` (full symmetric) and `X' W z` over the selected columns.
pub fn weighted_cross(x: &[f64], stride: usize, cols: &[usize], w: &[f64], z: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = cols.len();
    let n = w.len();
    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..n.div_ceil(CHUNK_ROWS))
        .into_par_iter()
        .map(|c| {
            let mut a = vec![0.0; p * p];
            let mut b = vec![0.0; p];
            let mut row = vec![0.0; p];
            for i in c * CHUNK_ROWS..((c + 1) * CHUNK_ROWS).min(n) {
                let wi = w[i];
                if wi == 0.0 {
                    continue;
                }
                gather(x, stride, i, cols, &mut row);
                for j in 0..p {
                    let v = wi * row[j];
                    if v == 0.0 {
                        continue;
                    }
                    b[j] += v * z[i];
                    let aj = &mut a[j * p..j * p + p];
                    for k in j..p {
                        aj[k] += v * row[k];
                    }
                }
            }
            (a, b)
        })
        .collect();
    let mut a = vec![0.0; p * p];
    let mut b = vec![0.0; p];
    for (pa, pb) in &partials {
        for (x, y) in a.iter_mut().zip(pa) {
            *x += y;
        }
        for (x, y) in b.iter_mut().zip(pb) {
            *x += y;
        }
    }
    for j in 0..p {
        for k in 0..j {
            a[j * p + k] = a[k * p + j];
        }
    }
    (a, b)
}

/// `sum_i s_i s_i'` with `s_i = u_i * X[i, cols]` (the meat of a sandwich estimator).
pub fn outer_sum(x: &[f64], stride: usize, cols: &[usize], u: &[f64]) -> Vec<f64> {
    let w: Vec<f64> = u.iter().map(|v| v * v).collect();
    weighted_cross(x, stride, cols, &w, &vec![0.0; u.len()]).0
}

/// `X[:, cols] beta` for every row.
pub fn mat_vec(x: &[f64], stride: usize, cols: &[usize], beta: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .into_par_iter()
        .with_min_len(CHUNK_ROWS)
        .map(|i| {
            let r = &x[i * stride..(i + 1) * stride];
            cols.iter().zip(beta).map(|(&c, b)| r[c] * b).sum()
        })
        .collect()
}

/// In-place lower Cholesky factor. Returns the first non-positive pivot index on failure.
pub fn cholesky(a: &mut [f64], p: usize) -> Result<(), usize> {
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= a[j * p + k] * a[j * p + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(j);
        }
        let d = d.sqrt();
        a[j * p + j] = d;
        for i in j + 1..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = s / d;
        }
        for k in j + 1..p {
            a[j * p + k] = 0.0;
        }
    }
    Ok(())
}

fn solve_factored(l: &[f64], p: usize, b: &mut [f64]) {
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * b[k];
        }
        b[i] = s / l[i * p + i];
    }
    for i in (0..p).rev() {
        let mut s = b[i];
        for k in i + 1..p {
            s -= l[k * p + i] * b[k];
        }
        b[i] = s / l[i * p + i];
    }
}

/// Symmetric diagonal scaling `D A D` with `D = diag(A)^{-1/2}`; zero diagonals keep scale 1.
fn equilibrate(a: &[f64], p: usize) -> (Vec<f64>, Vec<f64>) {
    let d: Vec<f64> = (0..p)
        .map(|j| {
            let v = a[j * p + j];
            if v > 0.0 {
                1.0 / v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut s = a.to_vec();
    for i in 0..p {
        for j in 0..p {
            s[i * p + j] *= d[i] * d[j];
        }
    }
    (s, d)
}

/// Solves `A x = b` for SPD `A`. Returns `Err(pivot)` if `A` is not numerically positive definite.
pub fn solve_spd(a: &[f64], b: &[f64], p: usize) -> Result<Vec<f64>, usize> {
    let (mut s, d) = equilibrate(a, p);
    cholesky(&mut s, p)?;
    let mut y: Vec<f64> = b.iter().zip(&d).map(|(v, di)| v * di).collect();
    solve_factored(&s, p, &mut y);
    Ok(y.iter().zip(&d).map(|(v, di)| v * di).collect())
}

/// Inverse of an SPD matrix.
pub fn inverse_spd(a: &[f64], p: usize) -> Result<Vec<f64>, usize> {
    let (mut s, d) = equilibrate(a, p);
    cholesky(&mut s, p)?;
    let mut inv = vec![0.0; p * p];
    let mut e = vec![0.0; p];
    for j in 0..p {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        solve_factored(&s, p, &mut e);
        for i in 0..p {
            inv[i * p + j] = e[i] * d[i] * d[j];
        }
    }
    Ok(inv)
}

/// Greedy column selection: keeps column `j` when its residual norm after projecting
/// on the already-kept columns exceeds `rel_tol` of its own norm. Returns kept indices.
pub fn independent_columns(gram: &[f64], p: usize, rel_tol: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    // Rows of the lower factor for the kept set, in kept order.
    let mut l: Vec<Vec<f64>> = Vec::new();
    for j in 0..p {
        let gjj = gram[j * p + j];
        if !(gjj > 0.0) {
            continue;
        }
        let mut r = vec![0.0; kept.len()];
        for (a, &ka) in kept.iter().enumerate() {
            let mut s = gram[ka * p + j];
            for b in 0..a {
                s -= l[a][b] * r[b];
            }
            r[a] = s / l[a][a];
        }
        let d = gjj - r.iter().map(|v| v * v).sum::<f64>();
        if d > rel_tol * gjj {
            r.push(d.sqrt());
            l.push(r);
            kept.push(j);
        }
    }
    kept
}
