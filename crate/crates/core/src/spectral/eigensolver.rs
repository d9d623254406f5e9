//! Smallest eigenpairs of the pencil `(S, M)` with `M` diagonal.
//!
//! The problem is symmetrized as `C y = theta y` with
//! `C = M^{1/2} (S - sigma M)^{-1} M^{1/2}`, `y = M^{1/2} x` and
//! `lambda = sigma + 1 / theta`, so the wanted (smallest) eigenvalues become
//! the largest and best separated ones of `C`. `C` is expanded with a block
//! Lanczos process using full reorthogonalization and thick restarts.
//!
//! The null space of `S` (one indicator per connected component) is known in
//! closed form and is deflated up front. Without that, `theta` for the
//! constant mode would be `1 / |sigma|` and its rounding error would swamp the
//! Ritz values of every other mode.

use faer::linalg::matmul::matmul;
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Accum, Mat, MatRef, Par, Side};
use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::laplace::CsrMatrix;

/// Shift used for the factorization `S - sigma M`.
pub const SHIFT: f64 = -1e-8;
/// Relative gap below which consecutive eigenvalues belong to one cluster.
pub const CLUSTER_GAP: f64 = 1e-6;

const BLOCK: usize = 8;
const DENSE_LIMIT: usize = 600;
const MAX_BLOCK_STEPS: usize = 4000;
const START_SEED: u64 = 0x1a4c_05e5_eed0_0001;

/// Ascending eigenvalues and matching `M`-orthonormal eigenvectors, one per
/// column of an `n x k` matrix.
pub(crate) struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

pub(crate) fn joins_cluster(prev: f64, next: f64) -> bool {
    next - prev <= CLUSTER_GAP * next.abs()
}

/// Compute at least `k` smallest eigenpairs, extending `k` to the end of an
/// eigenvalue cluster.
pub(crate) fn smallest_eigenpairs(
    s: &CsrMatrix,
    mass: &[f64],
    k: usize,
    tol: f64,
) -> Result<EigenPairs> {
    let n = s.dim();
    if k == 0 || k >= n {
        return Err(Error::Parameter(format!(
            "basis size K = {k} must satisfy 0 < K < vertex count {n}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("eigen tolerance {tol} must be > 0")));
    }
    let mut nwant = k + 1;
    loop {
        let pairs = if n <= DENSE_LIMIT || 3 * nwant > n {
            dense(s, mass)?
        } else {
            lanczos(s, mass, nwant, tol)?
        };
        let mut end = k;
        while end < pairs.values.len() && joins_cluster(pairs.values[end - 1], pairs.values[end]) {
            end += 1;
        }
        if end < pairs.values.len() || pairs.values.len() == n {
            if end > k {
                debug!("basis size extended from {k} to {end} to close an eigenvalue cluster");
            }
            let vectors = pairs.vectors.as_ref().subcols(0, end).to_owned();
            let mut values = pairs.values;
            values.truncate(end);
            return Ok(EigenPairs { values, vectors });
        }
        nwant = (nwant + BLOCK).min(n);
    }
}

/// `max_k ||S x_k - lambda_k M x_k|| / ||M x_k||`, evaluated per pair.
pub(crate) fn relative_residuals(
    s: &CsrMatrix,
    mass: &[f64],
    values: &[f64],
    vectors: MatRef<'_, f64>,
) -> Vec<f64> {
    (0..values.len())
        .map(|c| {
            let x: Vec<f64> = (0..vectors.nrows()).map(|i| vectors[(i, c)]).collect();
            let sx = s.mul_vec(&x);
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..x.len() {
                let mx = mass[i] * x[i];
                num += (sx[i] - values[c] * mx).powi(2);
                den += mx * mx;
            }
            (num / den).sqrt()
        })
        .collect()
}

fn dense(s: &CsrMatrix, mass: &[f64]) -> Result<EigenPairs> {
    let n = s.dim();
    let inv_sqrt: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut c = Mat::<f64>::zeros(n, n);
    for (i, j, v) in s.triplets() {
        c[(i, j)] = v * inv_sqrt[i] * inv_sqrt[j];
    }
    let evd = c
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("dense eigendecomposition failed: {e:?}")))?;
    let u = evd.U();
    let diag = evd.S().column_vector();
    let values: Vec<f64> = (0..n).map(|i| diag[i].max(0.0)).collect();
    let vectors = Mat::from_fn(n, n, |i, j| u[(i, j)] * inv_sqrt[i]);
    Ok(EigenPairs { values, vectors })
}

/// Connected components of the sparsity graph of `S`.
fn components(s: &CsrMatrix) -> Vec<usize> {
    let n = s.dim();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for root in 0..n {
        if label[root] != usize::MAX {
            continue;
        }
        label[root] = next;
        stack.push(root);
        while let Some(i) = stack.pop() {
            let (cols, vals) = s.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if v != 0.0 && label[j] == usize::MAX {
                    label[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    label
}

struct ShiftInvert {
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
    sqrt_m: Vec<f64>,
}

impl ShiftInvert {
    fn new(s: &CsrMatrix, mass: &[f64]) -> Result<Self> {
        let n = s.dim();
        let mut sigma = SHIFT;
        for _ in 0..6 {
            let mut trips: Vec<Triplet<usize, usize, f64>> = s
                .triplets()
                .filter(|&(i, j, _)| i >= j)
                .map(|(i, j, v)| Triplet::new(i, j, v))
                .collect();
            trips.extend((0..n).map(|i| Triplet::new(i, i, -sigma * mass[i])));
            let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trips)
                .map_err(|e| Error::Numerical(format!("sparse assembly failed: {e:?}")))?;
            match a.sp_cholesky(Side::Lower) {
                Ok(llt) => {
                    return Ok(ShiftInvert {
                        llt,
                        sqrt_m: mass.iter().map(|m| m.sqrt()).collect(),
                    })
                }
                Err(e) => {
                    warn!("Cholesky factorization with shift {sigma:e} failed ({e:?}); retrying");
                    sigma *= 100.0;
                }
            }
        }
        Err(Error::Numerical(
            "shifted stiffness matrix could not be factorized".into(),
        ))
    }

    /// `dst = C q` for a block of columns.
    fn apply(&self, q: MatRef<'_, f64>) -> Mat<f64> {
        let mut t = Mat::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] * self.sqrt_m[i]);
        self.llt.solve_in_place(t.as_mut());
        for j in 0..t.ncols() {
            for (v, s) in t.col_as_slice_mut(j).iter_mut().zip(&self.sqrt_m) {
                *v *= s;
            }
        }
        t
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `x -= basis (basis^T x)`, twice.
fn project_out(basis: MatRef<'_, f64>, x: &mut Mat<f64>) {
    if basis.ncols() == 0 {
        return;
    }
    for _ in 0..2 {
        let mut coef = Mat::<f64>::zeros(basis.ncols(), x.ncols());
        matmul(coef.as_mut(), Accum::Replace, basis.transpose(), x.as_ref(), 1.0, Par::Seq);
        matmul(x.as_mut(), Accum::Add, basis, coef.as_ref(), -1.0, Par::Seq);
    }
}

/// Orthonormalize the columns of `f` (already orthogonal to `locked` and
/// `basis`) in place and return the triangular factor. Columns that vanish
/// are replaced with fresh random directions; their `R` column stays tiny.
fn orthonormalize_block(
    f: &mut Mat<f64>,
    locked: MatRef<'_, f64>,
    basis: MatRef<'_, f64>,
    rng: &mut ChaCha8Rng,
) -> Mat<f64> {
    let b = f.ncols();
    let n = f.nrows();
    let mut r = Mat::<f64>::zeros(b, b);
    for c in 0..b {
        let before = dot(f.col_as_slice(c), f.col_as_slice(c)).sqrt();
        for _ in 0..2 {
            for p in 0..c {
                let d = dot(f.col_as_slice(p), f.col_as_slice(c));
                r[(p, c)] += d;
                let (head, tail) = f.as_mut().split_at_col_mut(c);
                let qp = head.col(p);
                let mut fc = tail.col_mut(0);
                for i in 0..n {
                    fc[i] -= d * qp[i];
                }
            }
        }
        let mut nrm = dot(f.col_as_slice(c), f.col_as_slice(c)).sqrt();
        r[(c, c)] = nrm;
        if !(nrm > 1e-10 * before) || nrm == 0.0 {
            let mut fresh = Mat::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
            project_out(locked, &mut fresh);
            project_out(basis, &mut fresh);
            let prev = f.as_ref().subcols(0, c).to_owned();
            project_out(prev.as_ref(), &mut fresh);
            f.col_as_slice_mut(c).copy_from_slice(fresh.col_as_slice(0));
            nrm = dot(f.col_as_slice(c), f.col_as_slice(c)).sqrt();
        }
        for v in f.col_as_slice_mut(c) {
            *v /= nrm;
        }
    }
    r
}

fn lanczos(s: &CsrMatrix, mass: &[f64], nwant: usize, tol: f64) -> Result<EigenPairs> {
    let n = s.dim();
    let op = ShiftInvert::new(s, mass)?;

    // Deflated null space: one normalized indicator per component, in y-space.
    let label = components(s);
    let ncomp = label.iter().max().map_or(0, |m| m + 1);
    let mut locked = Mat::<f64>::zeros(n, ncomp);
    for c in 0..ncomp {
        let area: f64 = (0..n).filter(|&i| label[i] == c).map(|i| mass[i]).sum();
        for i in (0..n).filter(|&i| label[i] == c) {
            locked[(i, c)] = op.sqrt_m[i] / area.sqrt();
        }
    }
    let z = ncomp.min(nwant);
    let finish = |ritz_vals: Vec<f64>, ritz: Mat<f64>| -> EigenPairs {
        let k = z + ritz_vals.len();
        let mut values = vec![0.0; z];
        values.extend(ritz_vals);
        let vectors = Mat::from_fn(n, k, |i, j| {
            let y = if j < z { locked[(i, j)] } else { ritz[(i, j - z)] };
            y / op.sqrt_m[i]
        });
        EigenPairs { values, vectors }
    };
    let p = nwant - z;
    if p == 0 {
        return Ok(finish(Vec::new(), Mat::zeros(n, 0)));
    }
    if n - ncomp < 3 * p + 2 * BLOCK {
        return dense(s, mass);
    }

    let b = BLOCK;
    let max_dim = {
        let d = (2 * p + 2 * b).max(p + 10 * b);
        (d.div_ceil(b) * b).min((n - ncomp) / b * b)
    };
    let keep_dim = (p + (max_dim - p) / 2).min(max_dim - b);
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);

    let mut v = Mat::<f64>::zeros(n, max_dim);
    let mut h = Mat::<f64>::zeros(max_dim, max_dim);
    let mut j = 0usize;
    // Coupling of the current Ritz space to the next block: residuals of Ritz
    // vector s are `r_last * s[last block rows]`.
    let mut q = Mat::from_fn(n, b, |_, _| rng.random_range(-1.0..1.0));
    project_out(locked.as_ref(), &mut q);
    orthonormalize_block(&mut q, locked.as_ref(), v.as_ref().subcols(0, 0), &mut rng);
    let mut inner_tol = tol * 1e-2;
    let mut last_converged = 0;

    for step in 0..MAX_BLOCK_STEPS {
        // Append q and expand H.
        for c in 0..b {
            v.col_as_slice_mut(j + c).copy_from_slice(q.col_as_slice(c));
        }
        let mut w = op.apply(q.as_ref());
        project_out(locked.as_ref(), &mut w);
        let jb = j + b;
        let vj = v.as_ref().subcols(0, jb);
        let mut hc = Mat::<f64>::zeros(jb, b);
        matmul(hc.as_mut(), Accum::Replace, vj.transpose(), w.as_ref(), 1.0, Par::Seq);
        for c in 0..b {
            for r in 0..jb {
                h[(r, j + c)] = hc[(r, c)];
                h[(j + c, r)] = hc[(r, c)];
            }
        }
        for a in 0..b {
            for c in 0..a {
                let avg = 0.5 * (h[(j + a, j + c)] + h[(j + c, j + a)]);
                h[(j + a, j + c)] = avg;
                h[(j + c, j + a)] = avg;
            }
        }
        matmul(w.as_mut(), Accum::Add, vj, hc.as_ref(), -1.0, Par::Seq);
        project_out(locked.as_ref(), &mut w);
        project_out(vj, &mut w);
        let r_last = orthonormalize_block(&mut w, locked.as_ref(), vj, &mut rng);
        j = jb;

        if j < p {
            q = w;
            continue;
        }

        // Rayleigh-Ritz on the current space.
        let hj = h.as_ref().submatrix(0, 0, j, j).to_owned();
        let evd = hj
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numerical(format!("projected eigenproblem failed: {e:?}")))?;
        let theta = evd.S().column_vector().to_owned();
        let u = evd.U();
        // Wanted: the p largest theta, i.e. columns j-1, j-2, ..., j-p.
        let wanted: Vec<usize> = (0..p).map(|i| j - 1 - i).collect();
        let resid: Vec<f64> = wanted
            .iter()
            .map(|&col| {
                let mut acc = 0.0;
                for row in 0..b {
                    let mut t = 0.0;
                    for c in 0..b {
                        t += r_last[(row, c)] * u[(j - b + c, col)];
                    }
                    acc += t * t;
                }
                acc.sqrt()
            })
            .collect();
        let converged = wanted
            .iter()
            .zip(&resid)
            .take_while(|&(&col, &r)| r <= inner_tol * theta[col].abs())
            .count();
        last_converged = converged;

        if converged == p {
            let mut sel = Mat::<f64>::zeros(j, p);
            for (k, &col) in wanted.iter().enumerate() {
                for row in 0..j {
                    sel[(row, k)] = u[(row, col)];
                }
            }
            let mut ritz = Mat::<f64>::zeros(n, p);
            matmul(ritz.as_mut(), Accum::Replace, v.as_ref().subcols(0, j), sel.as_ref(), 1.0, Par::Seq);
            let vals: Vec<f64> = wanted
                .iter()
                .map(|&col| (SHIFT + 1.0 / theta[col]).max(0.0))
                .collect();
            let pairs = finish(vals, ritz);
            let res = relative_residuals(s, mass, &pairs.values, pairs.vectors.as_ref());
            let worst = res.iter().cloned().fold(0.0, f64::max);
            if worst <= tol {
                debug!("lanczos converged: {nwant} pairs, {step} block steps, residual {worst:.2e}");
                return Ok(pairs);
            }
            if inner_tol < 1e-15 {
                break;
            }
            inner_tol *= 0.1;
        }

        if j + b > max_dim {
            // Thick restart: keep the keep_dim largest Ritz vectors.
            let mut sel = Mat::<f64>::zeros(j, keep_dim);
            for k in 0..keep_dim {
                for row in 0..j {
                    sel[(row, k)] = u[(row, j - 1 - k)];
                }
            }
            let mut kept = Mat::<f64>::zeros(n, keep_dim);
            matmul(kept.as_mut(), Accum::Replace, v.as_ref().subcols(0, j), sel.as_ref(), 1.0, Par::Seq);
            h.as_mut().fill(0.0);
            for k in 0..keep_dim {
                v.col_as_slice_mut(k).copy_from_slice(kept.col_as_slice(k));
                h[(k, k)] = theta[j - 1 - k];
            }
            j = keep_dim;
        }
        q = w;
    }
    Err(Error::EigenNonConvergence {
        converged: z + last_converged,
        requested: nwant,
        iterations: MAX_BLOCK_STEPS,
    })
}
