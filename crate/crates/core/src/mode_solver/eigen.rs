//! Block generalised Davidson iteration for the largest real eigenvalues of a
//! sparse, mildly non-symmetric operator.

use nalgebra::{DMatrix, DVector};

use super::operator::{LinearOperator, Preconditioner, SymmetryProjector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct DavidsonOptions {
    /// Number of leading eigenpairs that must settle before stopping.
    pub wanted: usize,
    /// Number of Ritz pairs refined per iteration.
    pub block: usize,
    /// Basis size that triggers a restart.
    pub max_basis: usize,
    /// Residual norm below which a pair is converged.
    pub tol: f64,
    pub max_iter: usize,
    /// Pairs whose value is certainly below this bound are settled without converging.
    pub floor: Option<f64>,
}

impl Default for DavidsonOptions {
    fn default() -> Self {
        Self {
            wanted: 1,
            block: 3,
            max_basis: 30,
            tol: 1e-9,
            max_iter: 500,
            floor: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct DavidsonOutcome {
    /// The leading `wanted` pairs, by decreasing value.
    pub pairs: Vec<Eigenpair>,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Independent partial sums let the compiler vectorise the reduction.
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(b, a)| *b += alpha * a);
}

/// Vectors are long and the basis is small, so the dense kernels below walk the
/// vectors in chunks that stay in cache while every basis vector is applied.
const CHUNK: usize = 2048;

/// Dot products of `l` with four vectors at once, sharing the loads of `l`.
fn dot4(l: &[f64], r: [&[f64]; 4]) -> [f64; 4] {
    let mut acc = [[0.0f64; 4]; 4];
    let m = l.len() / 4 * 4;
    for i in (0..m).step_by(4) {
        let x = &l[i..i + 4];
        for (a, v) in acc.iter_mut().zip(&r) {
            let v = &v[i..i + 4];
            for k in 0..4 {
                a[k] += x[k] * v[k];
            }
        }
    }
    let mut out = [0.0; 4];
    for (o, (a, v)) in out.iter_mut().zip(acc.iter().zip(&r)) {
        *o = a.iter().sum::<f64>() + l[m..].iter().zip(&v[m..]).map(|(x, y)| x * y).sum::<f64>();
    }
    out
}

/// `out[a][b] = <left[a], right[b]>`.
fn gram(left: &[Vec<f64>], right: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; right.len()]; left.len()];
    let Some(n) = left.first().map(Vec::len) else {
        return out;
    };
    let quads = right.len() / 4 * 4;
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        for (a, l) in left.iter().enumerate() {
            let l = &l[start..end];
            for b in (0..quads).step_by(4) {
                let r = [0, 1, 2, 3].map(|k| &right[b + k][start..end]);
                for (k, d) in dot4(l, r).into_iter().enumerate() {
                    out[a][b + k] += d;
                }
            }
            for b in quads..right.len() {
                out[a][b] += dot(l, &right[b][start..end]);
            }
        }
        start = end;
    }
    out
}

/// `target[t] += sum_s coeffs[t][s] * src[s]`, four sources per sweep over each target.
fn accumulate(target: &mut [Vec<f64>], src: &[Vec<f64>], coeffs: &[Vec<f64>]) {
    let Some(n) = target.first().map(Vec::len) else {
        return;
    };
    let quads = src.len() / 4 * 4;
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        for b in (0..quads).step_by(4) {
            let s = [0, 1, 2, 3].map(|k| &src[b + k][start..end]);
            for (t, c) in target.iter_mut().zip(coeffs) {
                let c = [c[b], c[b + 1], c[b + 2], c[b + 3]];
                for (i, y) in t[start..end].iter_mut().enumerate() {
                    *y += c[0] * s[0][i] + c[1] * s[1][i] + c[2] * s[2][i] + c[3] * s[3][i];
                }
            }
        }
        for s_idx in quads..src.len() {
            let s = &src[s_idx][start..end];
            for (t, c) in target.iter_mut().zip(coeffs) {
                if c[s_idx] != 0.0 {
                    axpy(c[s_idx], s, &mut t[start..end]);
                }
            }
        }
        start = end;
    }
}

struct Basis<'a, A: LinearOperator> {
    op: &'a A,
    proj: Option<&'a SymmetryProjector>,
    v: Vec<Vec<f64>>,
    av: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
}

impl<'a, A: LinearOperator> Basis<'a, A> {
    fn new(op: &'a A, proj: Option<&'a SymmetryProjector>) -> Self {
        Self {
            op,
            proj,
            v: Vec::new(),
            av: Vec::new(),
            h: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.v.len()
    }

    /// Orthonormalise `ws` against the basis and each other, then append the survivors.
    /// Returns how many were added.
    fn extend(&mut self, ws: Vec<Vec<f64>>) -> usize {
        let mut ws: Vec<Vec<f64>> = ws
            .into_iter()
            .filter_map(|mut w| {
                if let Some(p) = self.proj {
                    p.apply(&mut w);
                }
                let n = dot(&w, &w).sqrt();
                (n > 0.0 && n.is_finite()).then(|| {
                    w.iter_mut().for_each(|x| *x /= n);
                    w
                })
            })
            .collect();
        if ws.is_empty() {
            return 0;
        }
        // Block classical Gram-Schmidt against the existing basis, repeated once if
        // cancellation removed most of some vector.
        for _ in 0..2 {
            if self.v.is_empty() {
                break;
            }
            let c = gram(&ws, &self.v);
            let neg: Vec<Vec<f64>> = c.iter().map(|row| row.iter().map(|x| -x).collect()).collect();
            accumulate(&mut ws, &self.v, &neg);
            if ws.iter().all(|w| dot(w, w) > 0.5) {
                break;
            }
        }
        let mut fresh: Vec<Vec<f64>> = Vec::with_capacity(ws.len());
        for mut w in ws {
            for _ in 0..2 {
                for q in &fresh {
                    let c = dot(q, &w);
                    axpy(-c, q, &mut w);
                }
            }
            let n = dot(&w, &w).sqrt();
            if n < 1e-8 {
                continue;
            }
            w.iter_mut().for_each(|x| *x /= n);
            fresh.push(w);
        }
        if fresh.is_empty() {
            return 0;
        }
        let aw: Vec<Vec<f64>> = fresh
            .iter()
            .map(|w| {
                let mut out = vec![0.0; w.len()];
                self.op.apply(w, &mut out);
                out
            })
            .collect();
        // Computed transposed so the long basis is the four-wide side of the kernel.
        let upper_t = gram(&aw, &self.v);
        for (r, row) in self.h.iter_mut().enumerate() {
            row.extend(upper_t.iter().map(|col| col[r]));
        }
        let left = gram(&fresh, &self.av);
        let corner = gram(&fresh, &aw);
        self.h.extend(left.into_iter().zip(corner).map(|(mut a, b)| {
            a.extend(b);
            a
        }));
        let added = fresh.len();
        self.v.extend(fresh);
        self.av.extend(aw);
        added
    }

    fn clear(&mut self) {
        self.v.clear();
        self.av.clear();
        self.h.clear();
    }

    /// Ritz vectors `V y` and `A V y` for every coefficient vector.
    fn ritz_vectors(&self, ys: &[&DVector<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = self.v[0].len();
        let coeffs: Vec<Vec<f64>> = ys.iter().map(|y| y.iter().copied().collect()).collect();
        let mut x = vec![vec![0.0; n]; ys.len()];
        let mut ax = vec![vec![0.0; n]; ys.len()];
        accumulate(&mut x, &self.v, &coeffs);
        accumulate(&mut ax, &self.av, &coeffs);
        (x, ax)
    }
}

/// Ritz values (descending real part) and real coefficient vectors of the projected matrix.
fn ritz(h: &[Vec<f64>], count: usize) -> Result<Vec<(f64, DVector<f64>)>> {
    let k = h.len();
    let m = DMatrix::from_fn(k, k, |i, j| h[i][j]);
    let schur = nalgebra::Schur::try_new(m.clone(), 1e-14, 10_000).ok_or(Error::NoConvergence {
        what: "projected eigenproblem",
        iterations: 10_000,
        residual: f64::NAN,
    })?;
    let mut values: Vec<f64> = schur.complex_eigenvalues().iter().map(|c| c.re).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let scale = m.amax().max(1e-300);
    let mut out: Vec<(f64, DVector<f64>)> = Vec::with_capacity(count);
    for &theta in values.iter().take(count.min(k)) {
        let shift = theta + 1e-11 * scale;
        let a = &m - DMatrix::identity(k, k) * shift;
        let lu = a.lu();
        // Eigenvectors of a non-normal matrix are not orthogonal, so only vectors of
        // (numerically) repeated eigenvalues are kept apart by orthogonalisation.
        let close: Vec<&DVector<f64>> = out
            .iter()
            .filter(|(t, _)| (t - theta).abs() <= 1e-9 * scale)
            .map(|(_, v)| v)
            .collect();
        let mut y = DVector::from_fn(k, |i, _| 1.0 + 0.01 * i as f64);
        for prev in &close {
            let c = prev.dot(&y);
            y.axpy(-c, prev, 1.0);
        }
        for _ in 0..3 {
            y = match lu.solve(&y) {
                Some(s) => s,
                None => {
                    // Exactly singular shift: the null vector is already an eigenvector.
                    break;
                }
            };
            for prev in &close {
                let c = prev.dot(&y);
                y.axpy(-c, prev, 1.0);
            }
            let n = y.norm();
            if !(n > 0.0) || !n.is_finite() {
                break;
            }
            y /= n;
        }
        let n = y.norm();
        if n > 0.0 && n.is_finite() {
            y /= n;
        }
        out.push((theta, y));
    }
    Ok(out)
}

/// Find the `wanted` largest eigenvalues of `op`.
///
/// `initial` supplies starting directions; at least `block` independent ones are
/// needed after symmetry projection.
pub fn davidson<A: LinearOperator, P: Preconditioner>(
    op: &A,
    prec: &P,
    proj: Option<&SymmetryProjector>,
    initial: Vec<Vec<f64>>,
    opts: &DavidsonOptions,
) -> Result<DavidsonOutcome> {
    let n = op.dim();
    let block = opts.block.max(opts.wanted).max(1);
    let max_basis = opts.max_basis.max(3 * block);
    let mut basis = Basis::new(op, proj);
    // A rich starting subspace costs a few operator applications and keeps every
    // symmetry class present even when the block is small.
    let seed_limit = (max_basis / 2).max(block);
    for w in initial {
        if basis.len() >= seed_limit {
            break;
        }
        assert_eq!(w.len(), n, "initial vector has wrong length");
        basis.extend(vec![w]);
    }
    if basis.len() < block.min(n) {
        return Err(Error::InvalidInput(format!(
            "only {} independent starting vectors for a block of {block}",
            basis.len()
        )));
    }

    let mut last_resid = f64::INFINITY;
    let mut prev_x: Vec<Vec<f64>> = Vec::new();
    for iter in 1..=opts.max_iter {
        let rz = ritz(&basis.h, block)?;
        let ys: Vec<&DVector<f64>> = rz.iter().map(|(_, y)| y).collect();
        let (xs, axs) = basis.ritz_vectors(&ys);
        let mut pairs = Vec::with_capacity(rz.len());
        let mut corrections = Vec::new();
        let mut all_settled = true;
        for (idx, ((theta, _), (x, mut r))) in rz.iter().zip(xs.into_iter().zip(axs)).enumerate() {
            axpy(-theta, &x, &mut r);
            let rn = dot(&r, &r).sqrt();
            let converged = rn < opts.tol;
            let below = opts.floor.is_some_and(|f| theta + rn < f);
            if idx < opts.wanted {
                if !(converged || below) {
                    all_settled = false;
                }
                if !converged {
                    last_resid = last_resid.min(rn);
                }
            }
            if !converged && !below {
                let mut z = vec![0.0; n];
                prec.apply(&r, &mut z);
                corrections.push(z);
            }
            pairs.push(Eigenpair {
                value: *theta,
                vector: x,
                residual: rn,
            });
        }
        if all_settled {
            pairs.truncate(opts.wanted);
            return Ok(DavidsonOutcome {
                pairs,
                iterations: iter,
            });
        }
        if basis.len() + corrections.len() > max_basis {
            let mut keep: Vec<Vec<f64>> = pairs.iter().map(|p| p.vector.clone()).collect();
            keep.append(&mut prev_x);
            basis.clear();
            basis.extend(keep);
        }
        prev_x = pairs.iter().map(|p| p.vector.clone()).collect();
        let added = basis.extend(corrections);
        if added == 0 {
            // Stagnation: nothing new to add. Report the best we have.
            break;
        }
    }
    Err(Error::NoConvergence {
        what: "mode eigensolver",
        iterations: opts.max_iter,
        residual: last_resid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Tridiagonal non-symmetric test matrix with known spectrum:
    /// a_{i,i} = 2, a_{i,i+1} = b, a_{i+1,i} = c, eigenvalues 2 + 2 sqrt(bc) cos(k pi/(n+1)).
    struct Tri {
        n: usize,
        b: f64,
        c: f64,
    }

    impl LinearOperator for Tri {
        fn dim(&self) -> usize {
            self.n
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for i in 0..self.n {
                let mut acc = 2.0 * x[i];
                if i + 1 < self.n {
                    acc += self.b * x[i + 1];
                }
                if i > 0 {
                    acc += self.c * x[i - 1];
                }
                y[i] = acc;
            }
        }
    }

    struct Jacobi;
    impl Preconditioner for Jacobi {
        fn apply(&self, r: &[f64], z: &mut [f64]) {
            z.copy_from_slice(r);
        }
    }

    #[test]
    fn finds_leading_eigenvalues_of_nonsymmetric_tridiagonal() {
        let op = Tri { n: 40, b: 1.1, c: 0.9 };
        let init: Vec<Vec<f64>> = (0..4)
            .map(|k| {
                (0..40)
                    .map(|i| ((i + 1) as f64 * (k + 1) as f64 * 0.05).sin())
                    .collect()
            })
            .collect();
        let opts = DavidsonOptions {
            wanted: 3,
            block: 4,
            max_basis: 24,
            tol: 1e-9,
            max_iter: 2000,
            floor: None,
        };
        let out = davidson(&op, &Jacobi, None, init, &opts).unwrap();
        let g = (1.1f64 * 0.9).sqrt();
        for (k, p) in out.pairs.iter().enumerate() {
            let exact = 2.0 + 2.0 * g * ((k + 1) as f64 * std::f64::consts::PI / 41.0).cos();
            assert!((p.value - exact).abs() < 1e-9, "{k}: {} vs {exact}", p.value);
        }
    }
}
