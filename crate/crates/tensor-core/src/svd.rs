//! Thin singular value decomposition by one-sided Jacobi rotations.

use crate::tensor::Tensor;
use crate::TensorError;

pub const MAX_SWEEPS: usize = 100;

/// `w = u · diag(s) · xᵀ` with `u` (d×p) and `x` (k×p) having orthonormal
/// columns, `p = min(d, k)`, and `s` non-negative and descending.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub u: Tensor,
    pub s: Vec<f64>,
    pub x: Tensor,
}

impl Svd {
    pub fn reconstruct(&self) -> Tensor {
        self.truncated(self.s.len())
    }

    /// `U_r · S_r · X_rᵀ` from the leading `r` components.
    pub fn truncated(&self, r: usize) -> Tensor {
        let us = scale_columns(&self.u.columns(0, r), &self.s[..r]);
        us.matmul_nt(&self.x.columns(0, r))
            .expect("svd factors agree")
    }
}

fn scale_columns(t: &Tensor, s: &[f64]) -> Tensor {
    let mut out = t.clone();
    for r in 0..out.rows {
        for (x, f) in out.row_slice_mut(r).iter_mut().zip(s) {
            *x *= f;
        }
    }
    out
}

pub fn svd(w: &Tensor) -> Result<Svd, TensorError> {
    if !w.is_finite() {
        return Err(TensorError::NonFiniteInput("svd"));
    }
    if w.rows < w.cols {
        let t = svd_tall(&w.transpose())?;
        return Ok(Svd {
            u: t.x,
            s: t.s,
            x: t.u,
        });
    }
    svd_tall(w)
}

/// Requires `rows >= cols`. Columns are stored transposed (one per row of `a`)
/// so each rotation works on contiguous slices.
fn svd_tall(w: &Tensor) -> Result<Svd, TensorError> {
    let (d, k) = w.shape();
    let mut a = w.transpose(); // k × d, row j = column j of w
    let mut v = Tensor::identity(k); // row j = column j of X
    let tol = 1e-15;
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let (alpha, beta, gamma) = {
                    let (ap, aq) = (a.row_slice(p), a.row_slice(q));
                    let alpha: f64 = ap.iter().map(|x| x * x).sum();
                    let beta: f64 = aq.iter().map(|x| x * x).sum();
                    let gamma: f64 = ap.iter().zip(aq).map(|(x, y)| x * y).sum();
                    (alpha, beta, gamma)
                };
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(TensorError::NoConvergence { sweeps: MAX_SWEEPS });
    }

    let norms: Vec<f64> = (0..k)
        .map(|j| a.row_slice(j).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let scale = norms.iter().copied().fold(0.0, f64::max);
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut x_cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut s = Vec::with_capacity(k);
    for &j in &order {
        let sigma = norms[j];
        let col: Option<Vec<f64>> = if sigma > scale * 1e-13 && sigma > 0.0 {
            Some(a.row_slice(j).iter().map(|x| x / sigma).collect())
        } else {
            None
        };
        match col {
            Some(c) => {
                u_cols.push(c);
                s.push(sigma);
            }
            None => {
                u_cols.push(complete_basis(&u_cols, d));
                s.push(0.0);
            }
        }
        x_cols.push(v.row_slice(j).to_vec());
    }
    let u = Tensor::from_rows(&u_cols)?.transpose();
    let x = Tensor::from_rows(&x_cols)?.transpose();
    Ok(Svd { u, s, x })
}

fn rotate(t: &mut Tensor, p: usize, q: usize, c: f64, s: f64) {
    let cols = t.cols;
    let (lo, hi) = t.data.split_at_mut(q * cols);
    let rp = &mut lo[p * cols..(p + 1) * cols];
    let rq = &mut hi[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// A unit vector orthogonal to every vector in `basis` (Gram–Schmidt over the
/// standard basis).
fn complete_basis(basis: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for e in 0..d {
        let mut v = vec![0.0; d];
        v[e] = 1.0;
        for _ in 0..2 {
            for b in basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if best.as_ref().is_none_or(|(bn, _)| n > *bn) {
            best = Some((n, v));
        }
    }
    let (n, v) = best.expect("dimension is positive");
    v.into_iter().map(|x| x / n).collect()
}
