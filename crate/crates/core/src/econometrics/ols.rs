use nalgebra::{DMatrix, DVector};

use super::EconError;

/// Subtracts group means from `y` and every column of `x`. Rows of a group
/// whose values are all equal become exact zeros, so singleton groups and
/// group-constant columns drop out without rounding residue.
pub fn within_transform(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    groups: &[usize],
    n_groups: usize,
) -> (DVector<f64>, DMatrix<f64>) {
    let demean = |v: &mut dyn FnMut(usize) -> f64, out: &mut dyn FnMut(usize, f64)| {
        let n = groups.len();
        let mut sum = vec![0.0; n_groups];
        let mut count = vec![0usize; n_groups];
        let mut first: Vec<Option<f64>> = vec![None; n_groups];
        let mut constant = vec![true; n_groups];
        let vals: Vec<f64> = (0..n).map(&mut *v).collect();
        for (i, &g) in groups.iter().enumerate() {
            sum[g] += vals[i];
            count[g] += 1;
            match first[g] {
                None => first[g] = Some(vals[i]),
                Some(f) => constant[g] &= f == vals[i],
            }
        }
        for (i, &g) in groups.iter().enumerate() {
            let d = if constant[g] {
                0.0
            } else {
                vals[i] - sum[g] / count[g] as f64
            };
            out(i, d);
        }
    };
    let mut yt = DVector::zeros(y.len());
    demean(&mut |i| y[i], &mut |i, d| yt[i] = d);
    let mut xt = DMatrix::zeros(x.nrows(), x.ncols());
    for j in 0..x.ncols() {
        demean(&mut |i| x[(i, j)], &mut |i, d| xt[(i, j)] = d);
    }
    (yt, xt)
}

/// Householder QR with column pivoting, `X P = Q R`.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// R on and above the diagonal, Householder vectors (unit leading
    /// entry implied) below it.
    packed: DMatrix<f64>,
    tau: Vec<f64>,
    /// `perm[j]` is the original column at pivot position `j`.
    pub perm: Vec<usize>,
    pub rank: usize,
}

impl PivotedQr {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let (n, k) = x.shape();
        let mut a = x.clone();
        let mut perm: Vec<usize> = (0..k).collect();
        let steps = n.min(k);
        let mut tau = vec![0.0; steps];
        for s in 0..steps {
            // pivot on the largest remaining column norm, recomputed exactly
            let norm2 = |a: &DMatrix<f64>, j: usize| (s..n).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>();
            let mut p = s;
            let mut best = norm2(&a, s);
            for j in s + 1..k {
                let v = norm2(&a, j);
                if v > best {
                    best = v;
                    p = j;
                }
            }
            if p != s {
                a.swap_columns(s, p);
                perm.swap(s, p);
            }
            let norm = best.sqrt();
            if norm == 0.0 {
                continue;
            }
            let x0 = a[(s, s)];
            let beta = -norm.copysign(x0);
            let v0 = x0 - beta;
            for i in s + 1..n {
                a[(i, s)] /= v0;
            }
            tau[s] = (beta - x0) / beta;
            a[(s, s)] = beta;
            for j in s + 1..k {
                let mut dot = a[(s, j)];
                for i in s + 1..n {
                    dot += a[(i, s)] * a[(i, j)];
                }
                let f = tau[s] * dot;
                a[(s, j)] -= f;
                for i in s + 1..n {
                    a[(i, j)] -= f * a[(i, s)];
                }
            }
        }
        let r00 = if steps > 0 { a[(0, 0)].abs() } else { 0.0 };
        let tol = (n.max(k) as f64) * f64::EPSILON * r00 * 16.0;
        let rank = (0..steps).take_while(|&j| a[(j, j)].abs() > tol).count();
        PivotedQr {
            packed: a,
            tau,
            perm,
            rank,
        }
    }

    pub fn r(&self, i: usize, j: usize) -> f64 {
        self.packed[(i, j)]
    }

    /// `Qᵀ v`.
    pub fn qt_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.packed.nrows();
        let mut out = v.clone();
        for s in 0..self.tau.len() {
            if self.tau[s] == 0.0 {
                continue;
            }
            let mut dot = out[s];
            for i in s + 1..n {
                dot += self.packed[(i, s)] * out[i];
            }
            let f = self.tau[s] * dot;
            out[s] -= f;
            for i in s + 1..n {
                out[i] -= f * self.packed[(i, s)];
            }
        }
        out
    }

    /// Solves `R[..r, ..r] z = b[..r]` by back substitution.
    fn back_solve(&self, b: &[f64]) -> Vec<f64> {
        let r = self.rank;
        let mut z = vec![0.0; r];
        for i in (0..r).rev() {
            let mut acc = b[i];
            for j in i + 1..r {
                acc -= self.r(i, j) * z[j];
            }
            z[i] = acc / self.r(i, i);
        }
        z
    }

    /// Original column indices of each dependency: a column beyond the rank
    /// together with the kept columns that span it.
    pub fn collinear_sets(&self) -> Vec<Vec<usize>> {
        let k = self.perm.len();
        let r = self.rank;
        (r..k)
            .map(|j| {
                let rhs: Vec<f64> = (0..r).map(|i| self.r(i, j)).collect();
                let w = self.back_solve(&rhs);
                let scale = w.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                let mut set: Vec<usize> = w
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.abs() > 1e-8 * scale)
                    .map(|(i, _)| self.perm[i])
                    .collect();
                set.push(self.perm[j]);
                set.sort_unstable();
                set
            })
            .collect()
    }

    /// `(XᵀX)⁻¹ = P R⁻¹ R⁻ᵀ Pᵀ` for a full-rank factorization.
    pub fn xtx_inverse(&self) -> DMatrix<f64> {
        let k = self.perm.len();
        let mut rinv = DMatrix::zeros(k, k);
        for c in 0..k {
            let mut e = vec![0.0; k];
            e[c] = 1.0;
            let z = self.back_solve(&e);
            for i in 0..k {
                rinv[(i, c)] = z[i];
            }
        }
        let inner = &rinv * rinv.transpose();
        DMatrix::from_fn(k, k, |a, b| {
            let ia = self.perm.iter().position(|&p| p == a).unwrap();
            let ib = self.perm.iter().position(|&p| p == b).unwrap();
            inner[(ia, ib)]
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub beta: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Residual degrees of freedom, `n − absorbed − k`.
    pub dof: usize,
    pub xtx_inv: DMatrix<f64>,
}

/// Least squares via pivoted QR. `absorbed` counts parameters removed
/// before the fit (one per fixed-effect group).
pub fn ols_fit(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    names: &[String],
    absorbed: usize,
) -> Result<OlsFit, EconError> {
    let (n, k) = x.shape();
    let qr = PivotedQr::new(x);
    if qr.rank < k {
        let mut cols: Vec<String> = Vec::new();
        for set in qr.collinear_sets() {
            for j in set {
                let name = names.get(j).cloned().unwrap_or_else(|| format!("x{j}"));
                if !cols.contains(&name) {
                    cols.push(name);
                }
            }
        }
        return Err(EconError::RankDeficient { columns: cols });
    }
    let dof = n
        .checked_sub(absorbed + k)
        .filter(|d| *d > 0)
        .ok_or(EconError::NoResidualDof {
            n_obs: n,
            parameters: absorbed + k,
        })?;
    let qty = qr.qt_mul(y);
    let z = qr.back_solve(qty.as_slice());
    let mut beta = DVector::zeros(k);
    for (i, &p) in qr.perm.iter().enumerate() {
        beta[p] = z[i];
    }
    let residuals = y - x * &beta;
    Ok(OlsFit {
        beta,
        residuals,
        dof,
        xtx_inv: qr.xtx_inverse(),
    })
}
