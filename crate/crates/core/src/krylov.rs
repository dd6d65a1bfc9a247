//! Block eigensolver and Lanczos utilities on grid vectors.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Columns of a tall matrix, one `Vec` per column.
pub type Block = Vec<Vec<Complex64>>;

/// Hermitian operator on `C^n` given by its action.
pub type Op<'a> = &'a (dyn Fn(&[Complex64]) -> Vec<Complex64> + Sync);

const CHUNK: usize = 8192;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `G[i][j] = <a_i, b_j>`.
pub fn gram(a: &Block, b: &Block) -> DMatrix<Complex64> {
    let (p, q) = (a.len(), b.len());
    if p == 0 || q == 0 {
        return DMatrix::zeros(p, q);
    }
    let n = a[0].len();
    let nchunks = n.div_ceil(CHUNK);
    (0..nchunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut g = DMatrix::zeros(p, q);
            for i in 0..p {
                let ai = &a[i][lo..hi];
                for j in 0..q {
                    let bj = &b[j][lo..hi];
                    let mut s = ZERO;
                    for (x, y) in ai.iter().zip(bj) {
                        s += x.conj() * y;
                    }
                    g[(i, j)] = s;
                }
            }
            g
        })
        .reduce(|| DMatrix::zeros(p, q), |x, y| x + y)
}

/// `S C`, the columns of `S` combined with the coefficients `C`.
pub fn combine(s: &Block, c: &DMatrix<Complex64>) -> Block {
    let q = c.ncols();
    if s.is_empty() {
        return vec![Vec::new(); q];
    }
    let n = s[0].len();
    let nchunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<Vec<Complex64>>> = (0..nchunks)
        .into_par_iter()
        .map(|ch| {
            let lo = ch * CHUNK;
            let hi = (lo + CHUNK).min(n);
            (0..q)
                .map(|j| {
                    let mut out = vec![ZERO; hi - lo];
                    for (i, col) in s.iter().enumerate() {
                        let w = c[(i, j)];
                        if w == ZERO {
                            continue;
                        }
                        for (o, v) in out.iter_mut().zip(&col[lo..hi]) {
                            *o += w * v;
                        }
                    }
                    out
                })
                .collect()
        })
        .collect();
    (0..q)
        .map(|j| {
            let mut col = Vec::with_capacity(n);
            for p in &parts {
                col.extend_from_slice(&p[j]);
            }
            col
        })
        .collect()
}

fn sub_assign(a: &mut Block, b: &Block) {
    for (x, y) in a.iter_mut().zip(b) {
        x.par_iter_mut().zip(y.par_iter()).for_each(|(u, v)| *u -= v);
    }
}

fn hermitize(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Eigenpairs of a Hermitian matrix, ascending.
pub fn sorted_eigen(m: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(hermitize(m));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in idx.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Transform `T` with `(Q T)^H (Q T) = I` for the Gram matrix `b = Q^H Q`;
/// directions with relative weight below `drop` are discarded.
fn svqb(b: &DMatrix<Complex64>, drop: f64) -> DMatrix<Complex64> {
    let n = b.nrows();
    let d: Vec<f64> = (0..n).map(|i| 1.0 / b[(i, i)].re.max(1e-300).sqrt()).collect();
    let mut scaled = b.clone();
    for i in 0..n {
        for j in 0..n {
            scaled[(i, j)] *= d[i] * d[j];
        }
    }
    let (vals, vecs) = sorted_eigen(&scaled);
    let top = vals.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..n).filter(|&i| vals[i] > drop * top).collect();
    let mut t = DMatrix::zeros(n, keep.len());
    for (c, &k) in keep.iter().enumerate() {
        let s = 1.0 / vals[k].sqrt();
        for i in 0..n {
            t[(i, c)] = vecs[(i, k)] * (d[i] * s);
        }
    }
    t
}

/// Orthonormal columns spanning `q`, with `aq = A q` carried along.
fn orthonormalize(q: &mut Block, aq: &mut Option<&mut Block>) {
    for _ in 0..2 {
        if q.is_empty() {
            return;
        }
        let t = svqb(&gram(q, q), 1e-12);
        *q = combine(q, &t);
        if let Some(a) = aq.as_deref_mut() {
            *a = combine(a, &t);
        }
    }
}

/// Removes the span of the orthonormal `x` from `q` (twice), mirroring on `aq`.
fn project_out(x: &Block, ax: &Block, q: &mut Block, aq: &mut Block) {
    for _ in 0..2 {
        let c = gram(x, q);
        sub_assign(q, &combine(x, &c));
        sub_assign(aq, &combine(ax, &c));
    }
}

pub fn random_block(n: usize, m: usize, seed: u64) -> Block {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct EigOptions {
    /// Residual target `||A x - lambda x||` for unit `x`.
    pub tol: f64,
    pub max_iter: usize,
    /// Extra block columns beyond the `k` requested.
    pub guard: usize,
    pub seed: u64,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 600, guard: 3, seed: 7 }
    }
}

#[derive(Clone, Debug)]
pub struct EigResult {
    pub values: Vec<f64>,
    pub vectors: Block,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

fn apply_block(op: Op, x: &Block) -> Block {
    x.iter().map(|v| op(v)).collect()
}

fn residuals(x: &Block, ax: &Block, vals: &[f64]) -> (Block, Vec<f64>) {
    let r: Block = x
        .iter()
        .zip(ax)
        .zip(vals)
        .map(|((xv, av), &l)| av.par_iter().zip(xv.par_iter()).map(|(a, b)| a - b * l).collect())
        .collect();
    let norms = r.iter().map(|v| crate::grid::norm2(v)).collect();
    (r, norms)
}

/// Lowest `k` eigenpairs of a Hermitian operator by locally optimal block
/// preconditioned conjugate gradients with Rayleigh-Ritz on `[X, W, P]`.
pub fn lobpcg(op: Op, precond: Option<Op>, n: usize, k: usize, opts: EigOptions) -> Result<EigResult> {
    if k == 0 || k > n {
        return Err(Error::Precondition(format!("k = {k} must lie in 1..={n}")));
    }
    let m = (k + opts.guard).min(n);
    let mut x = random_block(n, m, opts.seed);
    orthonormalize(&mut x, &mut None);
    let mut ax = apply_block(op, &x);
    let (vals, c) = sorted_eigen(&gram(&x, &ax));
    let mut lambda: Vec<f64> = vals[..m].to_vec();
    x = combine(&x, &c);
    ax = combine(&ax, &c);
    let mut p: Block = Vec::new();
    let mut ap: Block = Vec::new();
    for it in 0..opts.max_iter {
        let (r, res) = residuals(&x, &ax, &lambda);
        if res[..k].iter().all(|&v| v <= opts.tol) {
            // confirm against a fresh application
            let ax_exact = apply_block(op, &x);
            let (_, exact) = residuals(&x, &ax_exact, &lambda);
            if exact[..k].iter().all(|&v| v <= opts.tol) {
                return Ok(EigResult {
                    values: lambda[..k].to_vec(),
                    vectors: x[..k].to_vec(),
                    residuals: exact[..k].to_vec(),
                    iterations: it,
                });
            }
            ax = ax_exact;
            continue;
        }
        let active: Vec<usize> = (0..m).filter(|&j| res[j] > 0.1 * opts.tol).collect();
        let mut w: Block = active.iter().map(|&j| r[j].clone()).collect();
        if let Some(t) = precond {
            w = w.iter().map(|v| t(v)).collect();
        }
        let aw = apply_block(op, &w);
        let mut q = w;
        q.extend(p.drain(..));
        let mut aq = aw;
        aq.extend(ap.drain(..));
        project_out(&x, &ax, &mut q, &mut aq);
        orthonormalize(&mut q, &mut Some(&mut aq));
        let nq = q.len();
        let mut s = x.clone();
        s.extend(q.iter().cloned());
        let mut as_ = ax.clone();
        as_.extend(aq.iter().cloned());
        let (_, c) = sorted_eigen(&gram(&s, &as_));
        let cm = c.columns(0, m).into_owned();
        x = combine(&s, &cm);
        ax = combine(&as_, &cm);
        let cq = cm.rows(m, nq).into_owned();
        p = combine(&q, &cq);
        ap = combine(&aq, &cq);
        // keep X exactly orthonormal against rounding drift
        orthonormalize(&mut x, &mut Some(&mut ax));
        let (v2, c2) = sorted_eigen(&gram(&x, &ax));
        lambda = v2;
        x = combine(&x, &c2);
        ax = combine(&ax, &c2);
    }
    Err(Error::NonConvergence(format!("LOBPCG did not reach {} in {} iterations", opts.tol, opts.max_iter)))
}

/// Lanczos tridiagonalization with full reorthogonalization started at `v0`.
/// Returns the orthonormal basis and the diagonals `(alpha, beta)`; stops
/// early on an invariant subspace.
pub fn lanczos(op: Op, v0: &[Complex64], m: usize) -> Result<(Block, Vec<f64>, Vec<f64>)> {
    let nrm = crate::grid::norm2(v0);
    if !(nrm > 0.0) {
        return Err(Error::KrylovBreakdown("zero starting vector".into()));
    }
    let mut basis: Block = vec![v0.iter().map(|v| v / nrm).collect()];
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let scale = |v: &[Complex64]| crate::grid::norm2(v);
    for j in 0..m {
        let mut w = op(&basis[j]);
        let a = crate::grid::inner(&basis[j], &w).re;
        alpha.push(a);
        for _ in 0..2 {
            let c = gram(&basis, &vec![w.clone()]);
            let proj = combine(&basis, &c);
            w.par_iter_mut().zip(proj[0].par_iter()).for_each(|(x, y)| *x -= y);
        }
        let b = scale(&w);
        if j + 1 == m {
            beta.push(b);
            break;
        }
        if b <= 1e-14 * alpha.iter().fold(1.0f64, |s, v| s.max(v.abs())) {
            beta.push(0.0);
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|v| v / b).collect());
    }
    Ok((basis, alpha, beta))
}

/// Restarted GMRES for `op x = b`, relative residual target `tol`.
pub fn gmres(op: Op, b: &[Complex64], tol: f64, restart: usize, max_restarts: usize) -> Result<Vec<Complex64>> {
    let n = b.len();
    let bn = crate::grid::norm2(b);
    let mut x = vec![ZERO; n];
    if bn == 0.0 {
        return Ok(x);
    }
    for _ in 0..max_restarts {
        let ax = op(&x);
        let r: Vec<Complex64> = b.iter().zip(&ax).map(|(u, v)| u - v).collect();
        let beta = crate::grid::norm2(&r);
        if beta <= tol * bn {
            return Ok(x);
        }
        let mut basis: Block = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess = DMatrix::<Complex64>::zeros(restart + 1, restart);
        let mut cols = 0;
        for j in 0..restart {
            let mut w = op(&basis[j]);
            for _ in 0..2 {
                let c = gram(&basis, &vec![w.clone()]);
                let proj = combine(&basis, &c);
                w.par_iter_mut().zip(proj[0].par_iter()).for_each(|(u, v)| *u -= v);
                for i in 0..=j {
                    hess[(i, j)] += c[(i, 0)];
                }
            }
            let h = crate::grid::norm2(&w);
            hess[(j + 1, j)] = Complex64::new(h, 0.0);
            cols = j + 1;
            if h <= 1e-14 * bn {
                break;
            }
            basis.push(w.iter().map(|v| v / h).collect());
            let y = hessenberg_ls(&hess, cols, beta);
            let res = (&hess.view((0, 0), (cols + 1, cols)) * &y)
                .iter()
                .enumerate()
                .map(|(i, v)| (if i == 0 { Complex64::new(beta, 0.0) } else { ZERO } - v).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if res <= 0.5 * tol * bn {
                break;
            }
        }
        let y = hessenberg_ls(&hess, cols, beta);
        let upd = combine(&basis[..cols].to_vec(), &DMatrix::from_column_slice(cols, 1, y.as_slice()));
        x.par_iter_mut().zip(upd[0].par_iter()).for_each(|(u, v)| *u += v);
    }
    let ax = op(&x);
    let res = crate::grid::norm2(&b.iter().zip(&ax).map(|(u, v)| u - v).collect::<Vec<_>>());
    if res <= tol * bn {
        Ok(x)
    } else {
        Err(Error::NonConvergence(format!("GMRES residual {:.3e}", res / bn)))
    }
}

fn hessenberg_ls(hess: &DMatrix<Complex64>, cols: usize, beta: f64) -> nalgebra::DVector<Complex64> {
    let h = hess.view((0, 0), (cols + 1, cols)).into_owned();
    let mut rhs = nalgebra::DVector::zeros(cols + 1);
    rhs[0] = Complex64::new(beta, 0.0);
    let svd = h.svd(true, true);
    svd.solve(&rhs, 1e-300).expect("SVD with both factors")
}
