//! Hermitian discretization of `H`, bound states, Birman-Schwinger counting,
//! zero-energy regularity, Feshbach inversion, Agmon tails and the resolvent
//! series identity.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{build_cell_averaged_scalar, build_vector_field, norm2, Fft3, Grid3D, ScalarField, VectorField};
use crate::krylov::{gmres, lobpcg, random_block, EigOptions};
use crate::potential::PotentialSpec;
use crate::resolvent::{FreeResolvent, PeriodicResolvent};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// How the first-order term `i(A.grad + grad.A)` is written.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MagneticForm {
    /// `M + M^H` with `M = i A.grad`; hermitian by construction.
    Symmetric,
    /// `2i A.grad + i div A`.
    Gradient,
    /// `2i grad.(A .) - i div A`.
    Divergence,
}

/// `H = -Delta + i(A.grad + grad.(A .)) + V` on a periodic box.
pub struct HamiltonianOperator {
    pub grid: Grid3D,
    pub a: VectorField,
    pub v: ScalarField,
    form: MagneticForm,
    div_a: Option<Vec<f64>>,
    a_re: [Vec<f64>; 3],
    v_re: Vec<f64>,
    magnetic: bool,
    fft: Fft3,
    kd: Vec<f64>,
    lap: Vec<f64>,
}

fn real_parts(values: &[Complex64], what: &str) -> Result<Vec<f64>> {
    values
        .iter()
        .map(|z| {
            if !z.re.is_finite() || !z.im.is_finite() {
                Err(Error::InvalidField(format!("{what}: non-finite sample")))
            } else if z.im != 0.0 {
                Err(Error::InvalidField(format!("{what}: complex-valued potential")))
            } else {
                Ok(z.re)
            }
        })
        .collect()
}

/// Samples the specs on `grid` (indicator terms by cell fractions) and builds
/// the symmetric operator.
pub fn assemble_h(grid: Grid3D, a: &PotentialSpec, v: &PotentialSpec) -> Result<HamiltonianOperator> {
    a.validate()?;
    v.validate()?;
    let af = build_vector_field(a, grid, [0, 0, 0])?;
    let vf = build_cell_averaged_scalar(v, grid);
    HamiltonianOperator::from_fields(af, vf)
}

/// Same operator written in one of the gauge-equivalent forms; these need
/// `div A` and hence a differentiable `A`.
pub fn assemble_h_form(grid: Grid3D, a: &PotentialSpec, v: &PotentialSpec, form: MagneticForm) -> Result<HamiltonianOperator> {
    let mut h = assemble_h(grid, a, v)?;
    if form != MagneticForm::Symmetric {
        let div: Result<Vec<f64>> = (0..grid.len()).into_par_iter().map(|i| a.divergence(grid.point(i))).collect();
        h.div_a = Some(div?);
    }
    h.form = form;
    Ok(h)
}

impl HamiltonianOperator {
    /// Builds the operator from sampled fields; complex samples are rejected.
    pub fn from_fields(a: VectorField, v: ScalarField) -> Result<Self> {
        let grid = v.grid;
        if a.grid != grid {
            return Err(Error::GridMismatch("A and V live on different grids".into()));
        }
        let a_re = [
            real_parts(&a.comps[0], "A")?,
            real_parts(&a.comps[1], "A")?,
            real_parts(&a.comps[2], "A")?,
        ];
        let v_re = real_parts(&v.values, "V")?;
        let magnetic = a_re.iter().any(|c| c.iter().any(|&x| x != 0.0));
        Ok(Self {
            grid,
            a,
            v,
            form: MagneticForm::Symmetric,
            div_a: None,
            a_re,
            v_re,
            magnetic,
            fft: Fft3::new(grid.n),
            kd: grid.derivative_wavenumbers(),
            lap: grid.laplacian_symbol(),
        })
    }

    pub fn free(grid: Grid3D) -> Self {
        Self::from_fields(VectorField::zeros(grid), ScalarField::zeros(grid)).expect("zero fields are real")
    }

    pub fn is_free(&self) -> bool {
        !self.magnetic && self.v_re.iter().all(|&x| x == 0.0)
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    fn axis_k(&self, idx: usize, axis: usize) -> f64 {
        let (i, j, k) = self.grid.unindex(idx);
        self.kd[[i, j, k][axis]]
    }

    /// `sum_j d_j f_j` for three physical-space fields, spectral and dealiased,
    /// returned in Fourier space.
    fn divergence_hat(&self, comps: [Vec<Complex64>; 3]) -> Vec<Complex64> {
        let mut acc = vec![ZERO; self.dim()];
        for (axis, mut c) in comps.into_iter().enumerate() {
            self.fft.forward(&mut c);
            acc.par_iter_mut().zip(c.par_iter()).enumerate().for_each(|(idx, (s, v))| {
                *s += I * self.axis_k(idx, axis) * v;
            });
        }
        acc
    }

    /// Spectral gradient of `f` given `fhat`.
    fn gradient(&self, fhat: &[Complex64]) -> [Vec<Complex64>; 3] {
        let one = |axis: usize| {
            let mut g: Vec<Complex64> =
                fhat.par_iter().enumerate().map(|(idx, v)| I * self.axis_k(idx, axis) * v).collect();
            self.fft.inverse(&mut g);
            g
        };
        [one(0), one(1), one(2)]
    }

    /// `i A.grad f` (physical) from `fhat`.
    fn m_apply(&self, fhat: &[Complex64]) -> Vec<Complex64> {
        let g = self.gradient(fhat);
        (0..self.dim())
            .into_par_iter()
            .map(|p| I * (self.a_re[0][p] * g[0][p] + self.a_re[1][p] * g[1][p] + self.a_re[2][p] * g[2][p]))
            .collect()
    }

    /// `i grad.(A f)` in Fourier space.
    fn m_adjoint_hat(&self, f: &[Complex64]) -> Vec<Complex64> {
        let comps = [0, 1, 2].map(|c| f.par_iter().zip(self.a_re[c].par_iter()).map(|(x, a)| x * a).collect());
        let mut d = self.divergence_hat(comps);
        d.par_iter_mut().for_each(|v| *v *= I);
        d
    }

    fn apply_inner(&self, f: &[Complex64], with_laplacian: bool) -> Vec<Complex64> {
        if !with_laplacian && !self.magnetic {
            return f.par_iter().zip(self.v_re.par_iter()).map(|(x, v)| x * v).collect();
        }
        let mut fhat = f.to_vec();
        self.fft.forward(&mut fhat);
        let mut out_hat: Vec<Complex64> = if with_laplacian {
            fhat.par_iter().zip(self.lap.par_iter()).map(|(v, k2)| v * k2).collect()
        } else {
            vec![ZERO; self.dim()]
        };
        let mut phys = vec![ZERO; self.dim()];
        if self.magnetic {
            let (m_coef, adj_coef) = match self.form {
                MagneticForm::Symmetric => (1.0, 1.0),
                MagneticForm::Gradient => (2.0, 0.0),
                MagneticForm::Divergence => (0.0, 2.0),
            };
            if m_coef != 0.0 {
                let m = self.m_apply(&fhat);
                phys.par_iter_mut().zip(m.par_iter()).for_each(|(p, v)| *p += v * m_coef);
            }
            if adj_coef != 0.0 {
                let ad = self.m_adjoint_hat(f);
                out_hat.par_iter_mut().zip(ad.par_iter()).for_each(|(o, v)| *o += v * adj_coef);
            }
            if let Some(div) = &self.div_a {
                let s = if self.form == MagneticForm::Gradient { 1.0 } else { -1.0 };
                phys.par_iter_mut()
                    .zip(div.par_iter())
                    .zip(f.par_iter())
                    .for_each(|((p, d), x)| *p += I * (s * d) * x);
            }
        }
        self.fft.inverse(&mut out_hat);
        out_hat
            .par_iter_mut()
            .zip(phys.par_iter())
            .zip(self.v_re.par_iter().zip(f.par_iter()))
            .for_each(|((o, p), (v, x))| *o += p + v * x);
        out_hat
    }

    /// `H f` on raw grid samples.
    pub fn apply_slice(&self, f: &[Complex64]) -> Vec<Complex64> {
        self.apply_inner(f, true)
    }

    /// `U f = H f + Delta f`.
    pub fn apply_perturbation(&self, f: &[Complex64]) -> Vec<Complex64> {
        if self.is_free() {
            return vec![ZERO; f.len()];
        }
        self.apply_inner(f, false)
    }

    pub fn apply(&self, f: &ScalarField) -> Result<ScalarField> {
        if f.grid != self.grid {
            return Err(Error::GridMismatch("field grid differs from operator grid".into()));
        }
        f.check_finite()?;
        Ok(ScalarField { grid: self.grid, values: self.apply_slice(&f.values) })
    }

    /// `<f, H f>` with the cell-volume weight.
    pub fn energy(&self, f: &ScalarField) -> Result<f64> {
        let hf = self.apply(f)?;
        Ok(f.inner(&hf).re)
    }

    /// Fourier multiplier `m(|k|^2)` applied to `f`.
    pub fn multiplier(&self, f: &[Complex64], m: impl Fn(f64) -> f64 + Sync) -> Vec<Complex64> {
        let mut d = f.to_vec();
        self.fft.forward(&mut d);
        d.par_iter_mut().zip(self.lap.par_iter()).for_each(|(v, k2)| *v *= m(*k2));
        self.fft.inverse(&mut d);
        d
    }

    /// `sup |V|` plus the size of the magnetic term, a scale for shifts.
    pub fn potential_scale(&self) -> f64 {
        let v = self.v_re.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let a = (0..self.dim())
            .map(|p| (self.a_re[0][p].powi(2) + self.a_re[1][p].powi(2) + self.a_re[2][p].powi(2)).sqrt())
            .fold(0.0f64, f64::max);
        v + a * a
    }
}

/// Spectral class of a computed eigenvalue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Negative,
    NearZero,
    /// Positive box mode, not localized.
    Positive,
    /// Positive eigenpair localized like an `L^2` eigenfunction.
    EmbeddedCandidate,
}

#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub energy: f64,
    /// Normalized in `L^2` with the cell-volume weight.
    pub vector: ScalarField,
    pub residual: f64,
    pub class: Classification,
    /// `sqrt(-E)` for negative eigenvalues.
    pub lambda: Option<f64>,
    /// Fraction of `L^2` mass in the inner half box.
    pub localization: f64,
}

#[derive(Clone, Debug)]
pub struct SpectrumReport {
    pub grid: Grid3D,
    pub eigenpairs: Vec<Eigenpair>,
    pub near_zero_tol: f64,
    /// Upper end of the embedded scan.
    pub scan_limit: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumSummary {
    pub grid_n: usize,
    pub box_l: f64,
    pub near_zero_tol: f64,
    pub scan_limit: f64,
    pub energies: Vec<f64>,
    pub residuals: Vec<f64>,
    pub classes: Vec<Classification>,
    pub localization: Vec<f64>,
    pub negative_count: usize,
    pub embedded_candidates: usize,
}

impl SpectrumReport {
    pub fn negative_count(&self) -> usize {
        self.eigenpairs.iter().filter(|p| p.class == Classification::Negative).count()
    }

    pub fn bound_states(&self) -> impl Iterator<Item = &Eigenpair> {
        self.eigenpairs.iter().filter(|p| p.class == Classification::Negative)
    }

    pub fn embedded_candidates(&self) -> usize {
        self.eigenpairs.iter().filter(|p| p.class == Classification::EmbeddedCandidate).count()
    }

    pub fn summary(&self) -> SpectrumSummary {
        SpectrumSummary {
            grid_n: self.grid.n,
            box_l: self.grid.l,
            near_zero_tol: self.near_zero_tol,
            scan_limit: self.scan_limit,
            energies: self.eigenpairs.iter().map(|p| p.energy).collect(),
            residuals: self.eigenpairs.iter().map(|p| p.residual).collect(),
            classes: self.eigenpairs.iter().map(|p| p.class).collect(),
            localization: self.eigenpairs.iter().map(|p| p.localization).collect(),
            negative_count: self.negative_count(),
            embedded_candidates: self.embedded_candidates(),
        }
    }

    /// Eigenvectors as `[u64 count][u64 len]` followed by `f64` re/im pairs.
    pub fn write_vectors(&self, w: &mut impl Write) -> Result<()> {
        let io = |e: std::io::Error| Error::Serialization(e.to_string());
        w.write_all(&(self.eigenpairs.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.grid.len() as u64).to_le_bytes()).map_err(io)?;
        for p in &self.eigenpairs {
            for z in &p.vector.values {
                w.write_all(&z.re.to_le_bytes()).map_err(io)?;
                w.write_all(&z.im.to_le_bytes()).map_err(io)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SpectralOptions {
    /// `|E|` below this is near zero; `None` uses `0.075 (2 pi / L)^2`.
    pub near_zero_tol: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { near_zero_tol: None, tol: 1e-9, max_iter: 800, seed: 7 }
    }
}

/// Default near-zero band: a small fraction of the first box excitation.
pub fn default_near_zero(grid: &Grid3D) -> f64 {
    0.075 * (2.0 * PI / grid.l).powi(2)
}

/// Fraction of `sum |f|^2` carried by nodes with every coordinate in
/// `[-L/4, L/4)`.
pub fn localization_score(f: &ScalarField) -> f64 {
    let g = f.grid;
    let q = 0.25 * g.l;
    let inner: f64 = (0..g.len())
        .into_par_iter()
        .filter(|&i| g.point(i).iter().all(|c| *c >= -q && *c < q))
        .map(|i| f.values[i].norm_sqr())
        .sum();
    let total: f64 = f.values.par_iter().map(|v| v.norm_sqr()).sum();
    if total > 0.0 {
        inner / total
    } else {
        0.0
    }
}

/// Lowest `k` eigenpairs; positive ones below `window` are scanned for
/// localization.
pub fn eigensolve(h: &HamiltonianOperator, k: usize, window: Option<f64>) -> Result<SpectrumReport> {
    eigensolve_with(h, k, window, SpectralOptions::default())
}

pub fn eigensolve_with(h: &HamiltonianOperator, k: usize, window: Option<f64>, opts: SpectralOptions) -> Result<SpectrumReport> {
    if k == 0 {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    let sigma = 1.0 + h.potential_scale();
    let op = |f: &[Complex64]| h.apply_slice(f);
    let pre = |f: &[Complex64]| h.multiplier(f, |k2| 1.0 / (k2 + sigma));
    let res = lobpcg(
        &op,
        Some(&pre),
        h.dim(),
        k,
        EigOptions { tol: opts.tol, max_iter: opts.max_iter, guard: 3, seed: opts.seed },
    )?;
    let near = opts.near_zero_tol.unwrap_or_else(|| default_near_zero(&h.grid));
    let scan_limit = window.unwrap_or(0.0);
    let scale = 1.0 / h.grid.cell_volume().sqrt();
    let eigenpairs = res
        .values
        .iter()
        .zip(res.vectors)
        .zip(&res.residuals)
        .map(|((&e, v), &r)| {
            let nrm = norm2(&v);
            let vector = ScalarField { grid: h.grid, values: v.iter().map(|x| x * (scale / nrm)).collect() };
            let localization = localization_score(&vector);
            let class = if e < -near {
                Classification::Negative
            } else if e <= near {
                Classification::NearZero
            } else if e <= scan_limit && localization > 0.99 {
                Classification::EmbeddedCandidate
            } else {
                Classification::Positive
            };
            Eigenpair {
                energy: e,
                vector,
                residual: r / nrm,
                class,
                lambda: (e < 0.0).then(|| (-e).sqrt()),
                localization,
            }
        })
        .collect();
    Ok(SpectrumReport { grid: h.grid, eigenpairs, near_zero_tol: near, scan_limit, iterations: res.iterations })
}

/// Eigensolve with `k` grown until the top computed eigenvalue is not negative,
/// so that every bound state is in the report.
pub fn eigensolve_bound_states(h: &HamiltonianOperator, opts: SpectralOptions) -> Result<SpectrumReport> {
    let mut k = 2;
    loop {
        let rep = eigensolve_with(h, k, None, opts)?;
        let last = rep.eigenpairs.last().map(|p| p.class);
        if last != Some(Classification::Negative) || k >= h.dim() {
            return Ok(rep);
        }
        k = (2 * k).min(h.dim());
    }
}

/// `f - sum_n <f_n, f> f_n` over the bound states of the report.
pub fn pac_apply(report: &SpectrumReport, f: &ScalarField) -> ScalarField {
    let mut out = f.clone();
    for p in report.bound_states() {
        let c = p.vector.inner(f);
        out.values.par_iter_mut().zip(p.vector.values.par_iter()).for_each(|(o, v)| *o -= c * v);
    }
    out
}

/// Outcome of the Birman-Schwinger count.
#[derive(Clone, Debug, Serialize)]
pub struct BsCount {
    pub count: usize,
    pub eps: f64,
    /// Lowest eigenvalues of `(-Delta+eps)^{-1/2} U (-Delta+eps)^{-1/2}`.
    pub eigenvalues: Vec<f64>,
}

/// Number of eigenvalues of `U(-Delta)^{-1}` below `-1`, with the box zero mode
/// regularized by `eps` (default: the near-zero band).
pub fn birman_schwinger_count(grid: Grid3D, a: &PotentialSpec, v: &PotentialSpec) -> Result<usize> {
    let h = assemble_h(grid, a, v)?;
    Ok(birman_schwinger_count_with(&h, default_near_zero(&grid))?.count)
}

/// The count uses the hermitian form `K = T U T`, `T = (-Delta+eps)^{-1/2}`,
/// similar to `U (-Delta+eps)^{-1}`; by Sylvester's law of inertia it equals
/// the number of eigenvalues of `H` below `-eps` on the box.
pub fn birman_schwinger_count_with(h: &HamiltonianOperator, eps: f64) -> Result<BsCount> {
    if !(eps > 0.0) {
        return Err(Error::Precondition("eps must be positive".into()));
    }
    if h.is_free() {
        return Ok(BsCount { count: 0, eps, eigenvalues: Vec::new() });
    }
    let op = |f: &[Complex64]| {
        let t = h.multiplier(f, |k2| 1.0 / (k2 + eps).sqrt());
        let u = h.apply_perturbation(&t);
        h.multiplier(&u, |k2| 1.0 / (k2 + eps).sqrt())
    };
    let mut k = 4;
    loop {
        let res = lobpcg(&op, None, h.dim(), k, EigOptions { tol: 1e-7, max_iter: 1500, guard: 4, seed: 11 })?;
        let count = res.values.iter().filter(|&&x| x < -1.0).count();
        if count < k || k >= h.dim() {
            return Ok(BsCount { count, eps, eigenvalues: res.values });
        }
        k = (2 * k).min(h.dim());
    }
}

/// Smallest singular values of `I + R0(0) U` and `I - R0(0) U`.
#[derive(Clone, Debug, Serialize)]
pub struct RegularityDiagnostic {
    pub sigma_min: f64,
    /// Same for `H_{-1} = -Delta - U`.
    pub sigma_min_minus: f64,
    /// `sigma_min` on the doubled grid, when the trend check ran.
    pub sigma_min_refined: Option<f64>,
    pub threshold: f64,
    pub suspected_resonance: bool,
    pub regular: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct RegularityOptions {
    pub threshold: f64,
    /// Repeat on the grid with `2n` points per axis.
    pub refine: bool,
    /// `sigma(2n) / sigma(n)` below this flags a resonance.
    pub trend_ratio: f64,
}

impl Default for RegularityOptions {
    fn default() -> Self {
        Self { threshold: 1e-3, refine: true, trend_ratio: 0.75 }
    }
}

pub fn zero_regularity(grid: Grid3D, a: &PotentialSpec, v: &PotentialSpec) -> Result<RegularityDiagnostic> {
    zero_regularity_with(grid, a, v, RegularityOptions::default())
}

pub fn zero_regularity_with(grid: Grid3D, a: &PotentialSpec, v: &PotentialSpec, opts: RegularityOptions) -> Result<RegularityDiagnostic> {
    if a.is_zero() && v.is_zero() {
        return Ok(RegularityDiagnostic {
            sigma_min: 1.0,
            sigma_min_minus: 1.0,
            sigma_min_refined: None,
            threshold: opts.threshold,
            suspected_resonance: false,
            regular: true,
        });
    }
    let h = assemble_h(grid, a, v)?;
    let r0 = FreeResolvent::new(grid, ZERO);
    let sigma_min = min_singular(&h, &r0, 1.0)?;
    let sigma_min_minus = min_singular(&h, &r0, -1.0)?;
    drop(r0);
    let sigma_min_refined = if opts.refine {
        let fine = Grid3D::new(2 * grid.n, grid.l)?;
        let hf = assemble_h(fine, a, v)?;
        let r0f = FreeResolvent::new(fine, ZERO);
        Some(min_singular(&hf, &r0f, 1.0)?)
    } else {
        None
    };
    let suspected_resonance = sigma_min_refined.is_some_and(|s| s < opts.trend_ratio * sigma_min);
    let regular = sigma_min > opts.threshold && sigma_min_minus > opts.threshold && !suspected_resonance;
    Ok(RegularityDiagnostic {
        sigma_min,
        sigma_min_minus,
        sigma_min_refined,
        threshold: opts.threshold,
        suspected_resonance,
        regular,
    })
}

/// `sigma_min(I + s R0 U)` from the lowest eigenvalue of `M^H M`.
fn min_singular(h: &HamiltonianOperator, r0: &FreeResolvent, s: f64) -> Result<f64> {
    let m = |f: &[Complex64]| -> Vec<Complex64> {
        let u = h.apply_perturbation(f);
        let r = r0.apply_slice(&u);
        f.iter().zip(&r).map(|(x, y)| x + y * s).collect()
    };
    // the kernel is even, so R0^H g = conj(R0 conj(g))
    let mh = |f: &[Complex64]| -> Vec<Complex64> {
        let c: Vec<Complex64> = f.iter().map(|x| x.conj()).collect();
        let r: Vec<Complex64> = r0.apply_slice(&c).iter().map(|x| x.conj()).collect();
        let u = h.apply_perturbation(&r);
        f.iter().zip(&u).map(|(x, y)| x + y * s).collect()
    };
    let normal = |f: &[Complex64]| mh(&m(f));
    let res = lobpcg(&normal, None, h.dim(), 1, EigOptions { tol: 1e-9, max_iter: 2000, guard: 4, seed: 5 })?;
    Ok(res.values[0].max(0.0).sqrt())
}

fn is_singular(m: &DMatrix<Complex64>) -> bool {
    if m.nrows() == 0 {
        return false;
    }
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    !(max > 0.0) || min <= 1e-13 * max
}

fn select(l: &DMatrix<Complex64>, rows: &[usize], cols: &[usize]) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| l[(rows[i], cols[j])])
}

/// Inverse of `L` from the block formula with the Schur complement
/// `C = L11 - L10 L00^{-1} L01`; `split` lists the indices of block 0.
pub fn feshbach_invert(l: &DMatrix<Complex64>, split: &[usize]) -> Result<DMatrix<Complex64>> {
    let n = l.nrows();
    if l.ncols() != n {
        return Err(Error::Precondition("L must be square".into()));
    }
    let mut in0 = vec![false; n];
    for &i in split {
        if i >= n || in0[i] {
            return Err(Error::Precondition(format!("bad split index {i}")));
        }
        in0[i] = true;
    }
    let b0: Vec<usize> = (0..n).filter(|&i| in0[i]).collect();
    let b1: Vec<usize> = (0..n).filter(|&i| !in0[i]).collect();
    let l00 = select(l, &b0, &b0);
    let l01 = select(l, &b0, &b1);
    let l10 = select(l, &b1, &b0);
    let l11 = select(l, &b1, &b1);
    if is_singular(&l00) {
        return Err(Error::Precondition("L00 is not invertible".into()));
    }
    let inv00 = l00.clone().try_inverse().ok_or_else(|| Error::Precondition("L00 is not invertible".into()))?;
    let c = &l11 - &l10 * &inv00 * &l01;
    if is_singular(&c) {
        return Err(Error::Singular("Schur complement is singular, so L is not invertible".into()));
    }
    let cinv = c.try_inverse().ok_or_else(|| Error::Singular("L is not invertible".into()))?;
    let a = &inv00 * &l01;
    let b = &l10 * &inv00;
    let top_left = &inv00 + &a * &cinv * &b;
    let top_right = -(&a * &cinv);
    let bottom_left = -(&cinv * &b);
    let mut out = DMatrix::zeros(n, n);
    for (i, &ri) in b0.iter().enumerate() {
        for (j, &cj) in b0.iter().enumerate() {
            out[(ri, cj)] = top_left[(i, j)];
        }
        for (j, &cj) in b1.iter().enumerate() {
            out[(ri, cj)] = top_right[(i, j)];
        }
    }
    for (i, &ri) in b1.iter().enumerate() {
        for (j, &cj) in b0.iter().enumerate() {
            out[(ri, cj)] = bottom_left[(i, j)];
        }
        for (j, &cj) in b1.iter().enumerate() {
            out[(ri, cj)] = cinv[(i, j)];
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct AgmonFit {
    /// Least-squares decay rate of `<r> |f|`.
    pub rate: f64,
    /// `sqrt(|E|)`.
    pub reference: f64,
    pub rel_error: f64,
    pub window: (f64, f64),
    /// False when the window reaches the noise floor.
    pub reliable: bool,
}

/// Fits the exponential tail of a bound state about its centroid. The default
/// window is `[0.2 L, 0.35 L]`.
pub fn agmon_fit(pair: &Eigenpair, window: Option<(f64, f64)>) -> Result<AgmonFit> {
    if pair.class != Classification::Negative {
        return Err(Error::Precondition("agmon_fit needs a bound state".into()));
    }
    let f = &pair.vector;
    let g = f.grid;
    let (r1, r2) = window.unwrap_or((0.2 * g.l, 0.35 * g.l));
    if !(r1 < r2) || r2 > 0.5 * g.l {
        return Err(Error::Window(format!("radial window [{r1}, {r2}] does not fit the box")));
    }
    let mut centre = [0.0; 3];
    let mut mass = 0.0;
    for i in 0..g.len() {
        let w = f.values[i].norm_sqr();
        let p = g.point(i);
        for a in 0..3 {
            centre[a] += w * p[a];
        }
        mass += w;
    }
    for c in &mut centre {
        *c /= mass;
    }
    let h = g.h();
    let nb = ((r2 - r1) / h).ceil() as usize;
    let mut sums = vec![0.0; nb];
    let mut counts = vec![0usize; nb];
    let peak = f.norm_sup();
    for i in 0..g.len() {
        let p = g.point(i);
        let r = ((p[0] - centre[0]).powi(2) + (p[1] - centre[1]).powi(2) + (p[2] - centre[2]).powi(2)).sqrt();
        if r < r1 || r >= r2 {
            continue;
        }
        let b = (((r - r1) / h) as usize).min(nb - 1);
        sums[b] += f.values[i].norm();
        counts[b] += 1;
    }
    let floor = 1e-9 * peak;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut reliable = true;
    for b in 0..nb {
        if counts[b] == 0 {
            continue;
        }
        let avg = sums[b] / counts[b] as f64;
        if avg <= floor {
            reliable = false;
            continue;
        }
        let r = r1 + (b as f64 + 0.5) * h;
        xs.push(r);
        ys.push(((1.0 + r * r).sqrt() * avg).ln());
    }
    if xs.len() < 3 {
        return Err(Error::Window("fewer than three radial bins above the noise floor".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let rate = -sxy / sxx;
    let reference = (-pair.energy).sqrt();
    Ok(AgmonFit { rate, reference, rel_error: (rate - reference).abs() / reference, window: (r1, r2), reliable })
}

#[derive(Clone, Debug, Serialize)]
pub struct SeriesCheck {
    /// Largest relative difference over the probes.
    pub residual: f64,
    /// Power-iteration estimate of the spectral radius of `R0 U R0 U`.
    pub contraction: f64,
    pub probes: usize,
}

/// Compares `(I - R0 U R0 U)^{-1}(R0 - R0 U R0) b` with the solution of
/// `(H - lambda^2) x = b` on random probes. `R0` is the box resolvent.
pub fn resolvent_series_check(h: &HamiltonianOperator, lambda: Complex64, probes: usize) -> Result<SeriesCheck> {
    let l2 = lambda * lambda;
    if l2.im == 0.0 {
        return Err(Error::OnSpectrum);
    }
    let r0 = PeriodicResolvent::new(h.grid, lambda)?;
    let n = h.dim();
    let s_op = |f: &[Complex64]| r0.apply_slice(&h.apply_perturbation(&r0.apply_slice(&h.apply_perturbation(f))));
    let mut contraction = 0.0;
    if !h.is_free() {
        let mut v = random_block(n, 1, 3).remove(0);
        let mut prev = norm2(&v);
        let mut ratio = 0.0;
        for _ in 0..40 {
            v = s_op(&v);
            let nv = norm2(&v);
            if nv == 0.0 {
                ratio = 0.0;
                break;
            }
            ratio = nv / prev;
            v.iter_mut().for_each(|x| *x /= nv);
            prev = 1.0;
        }
        contraction = ratio;
        if contraction >= 1.0 {
            return Err(Error::NotContractive(contraction));
        }
    }
    let direct_op = |w: &[Complex64]| {
        let r = r0.apply_slice(w);
        let u = h.apply_perturbation(&r);
        w.iter().zip(&u).map(|(x, y)| x + y).collect::<Vec<_>>()
    };
    let mut residual: f64 = 0.0;
    for b in random_block(n, probes, 17) {
        let rb = r0.apply_slice(&b);
        let urb = h.apply_perturbation(&rb);
        let r0urb = r0.apply_slice(&urb);
        let y: Vec<Complex64> = rb.iter().zip(&r0urb).map(|(a, c)| a - c).collect();
        let mut x = y.clone();
        for it in 0.. {
            let sx = s_op(&x);
            let next: Vec<Complex64> = y.iter().zip(&sx).map(|(a, c)| a + c).collect();
            let diff: f64 = norm2(&next.iter().zip(&x).map(|(a, c)| a - c).collect::<Vec<_>>());
            x = next;
            if diff <= 1e-14 * norm2(&x) {
                break;
            }
            if it > 2000 {
                return Err(Error::NonConvergence("Neumann series stalled".into()));
            }
        }
        let w = gmres(&direct_op, &b, 1e-13, 60, 50)?;
        let z = r0.apply_slice(&w);
        let d = norm2(&x.iter().zip(&z).map(|(a, c)| a - c).collect::<Vec<_>>());
        let zn = norm2(&z);
        residual = residual.max(if zn > 0.0 { d / zn } else { d });
    }
    Ok(SeriesCheck { residual, contraction, probes })
}
