//! Schrodinger propagation `f(t) = e^{itH} f0`, the sup-norm decay experiment,
//! and the filtered wave sine kernel `sin(t sqrt H) P_ac / sqrt H`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{inner, norm2, Grid3D, ScalarField};
use crate::potential::Vec3;
use crate::spectral::{pac_apply, HamiltonianOperator, SpectrumReport};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug)]
pub struct PropagateOptions {
    /// Krylov error target per step, relative to `||f||`.
    pub step_tol: f64,
    /// Largest internal step.
    pub max_dt: f64,
    pub max_krylov: usize,
    /// Thickness of the boundary shell in grid layers.
    pub shell_layers: usize,
    /// Shell mass fraction that counts as wrap-around.
    pub shell_threshold: f64,
    pub stop_on_breach: bool,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self { step_tol: 1e-8, max_dt: 0.05, max_krylov: 48, shell_layers: 2, shell_threshold: 1e-4, stop_on_breach: true }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PropagationReport {
    /// Reported times; breached times are dropped.
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    pub shell_fraction: Vec<f64>,
    pub truncated: bool,
    pub breach_time: Option<f64>,
    pub max_krylov_dim: usize,
}

impl PropagationReport {
    /// `max |m(t) - m(0)| / m(0)`.
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.mass.first().copied().unwrap_or(0.0);
        self.mass.iter().map(|m| (m - m0).abs() / m0).fold(0.0, f64::max)
    }

    /// `max |E(t) - E(0)| / max(|E(0)|, 1)`.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energy.first().copied().unwrap_or(0.0);
        self.energy.iter().map(|e| (e - e0).abs() / e0.abs().max(1.0)).fold(0.0, f64::max)
    }
}

/// Fraction of `sum |f|^2` in the outer `layers` of the box.
pub fn shell_fraction(f: &ScalarField, layers: usize) -> f64 {
    let g = f.grid;
    let n = g.n;
    let in_shell = |i: usize| i < layers || i >= n - layers;
    let (shell, total) = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = g.unindex(idx);
            let w = f.values[idx].norm_sqr();
            (if in_shell(i) || in_shell(j) || in_shell(k) { w } else { 0.0 }, w)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    if total > 0.0 {
        shell / total
    } else {
        0.0
    }
}

/// `e^{i dt T} e1` for a real symmetric tridiagonal `T`.
fn expm_tridiag(alpha: &[f64], beta: &[f64], dt: f64) -> DVector<Complex64> {
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let q = &eig.eigenvectors;
    DVector::from_fn(m, |i, _| {
        (0..m).map(|k| Complex64::from_polar(q[(i, k)] * q[(0, k)], dt * eig.eigenvalues[k])).sum()
    })
}

/// One Krylov step `v -> e^{i dt H} v`; returns the Krylov dimension, or
/// `None` when the error estimate misses the target within `max_krylov`.
fn krylov_step(h: &HamiltonianOperator, v: &[Complex64], dt: f64, opts: &PropagateOptions) -> Result<Option<(Vec<Complex64>, usize)>> {
    let nv = norm2(v);
    if nv == 0.0 {
        return Ok(Some((v.to_vec(), 0)));
    }
    let mut basis: Vec<Vec<Complex64>> = vec![v.iter().map(|x| x / nv).collect()];
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    for j in 0..opts.max_krylov {
        let mut w = h.apply_slice(&basis[j]);
        let a = inner(&basis[j], &w).re;
        alpha.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c = inner(b, &w);
                w.par_iter_mut().zip(b.par_iter()).for_each(|(x, y)| *x -= c * y);
            }
        }
        let bn = norm2(&w);
        let small = bn <= 1e-13 * alpha.iter().fold(1.0f64, |s, x| s.max(x.abs()));
        if j >= 3 || small {
            let y = expm_tridiag(&alpha, &beta, dt);
            let err = bn * y[j].norm();
            if small || err <= opts.step_tol {
                let mut out = vec![ZERO; v.len()];
                for (b, c) in basis.iter().zip(y.iter()) {
                    let c = c * nv;
                    out.par_iter_mut().zip(b.par_iter()).for_each(|(o, x)| *o += c * x);
                }
                return Ok(Some((out, j + 1)));
            }
        }
        if !bn.is_finite() {
            return Err(Error::KrylovBreakdown("non-finite Lanczos vector".into()));
        }
        beta.push(bn);
        basis.push(w.iter().map(|x| x / bn).collect());
    }
    Ok(None)
}

/// Advances `v` by `dt`, splitting the step when the Krylov space is too small.
fn advance(h: &HamiltonianOperator, v: &[Complex64], dt: f64, opts: &PropagateOptions, depth: usize) -> Result<(Vec<Complex64>, usize)> {
    match krylov_step(h, v, dt, opts)? {
        Some(r) => Ok(r),
        None if depth < 12 => {
            let (mid, m1) = advance(h, v, 0.5 * dt, opts, depth + 1)?;
            let (end, m2) = advance(h, &mid, 0.5 * dt, opts, depth + 1)?;
            Ok((end, m1.max(m2)))
        }
        None => Err(Error::KrylovBreakdown(format!("no convergence for dt = {dt:e}"))),
    }
}

/// Evolves `f0` from `t = 0` through `t_grid`, calling `observe` at every
/// reported time. Stops at the first wrap-around breach unless told not to.
pub fn propagate_observe(
    h: &HamiltonianOperator,
    f0: &ScalarField,
    t_grid: &[f64],
    opts: PropagateOptions,
    mut observe: impl FnMut(f64, &ScalarField),
) -> Result<PropagationReport> {
    if f0.grid != h.grid {
        return Err(Error::GridMismatch("initial data grid differs from operator grid".into()));
    }
    f0.check_finite()?;
    if t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("t_grid must be non-negative and strictly increasing".into()));
    }
    let mut rep = PropagationReport {
        times: Vec::new(),
        mass: Vec::new(),
        energy: Vec::new(),
        shell_fraction: Vec::new(),
        truncated: false,
        breach_time: None,
        max_krylov_dim: 0,
    };
    let mut f = f0.clone();
    let mut now = 0.0;
    for &t in t_grid {
        let span = t - now;
        if span > 0.0 {
            let steps = (span / opts.max_dt - 1e-9).ceil().max(1.0) as usize;
            let dt = span / steps as f64;
            for _ in 0..steps {
                let (next, m) = advance(h, &f.values, dt, &opts, 0)?;
                f.values = next;
                rep.max_krylov_dim = rep.max_krylov_dim.max(m);
            }
            now = t;
        }
        let shell = shell_fraction(&f, opts.shell_layers);
        if shell >= opts.shell_threshold {
            rep.truncated = true;
            if rep.breach_time.is_none() {
                rep.breach_time = Some(t);
            }
            if opts.stop_on_breach {
                break;
            }
            continue;
        }
        rep.times.push(t);
        rep.mass.push(f.norm_l2());
        rep.energy.push(h.energy(&f)?);
        rep.shell_fraction.push(shell);
        observe(t, &f);
    }
    Ok(rep)
}

/// Snapshots `e^{i t_j H} f0` at the reported times.
pub fn propagate(h: &HamiltonianOperator, f0: &ScalarField, t_grid: &[f64]) -> Result<(Vec<ScalarField>, PropagationReport)> {
    let mut snaps = Vec::new();
    let rep = propagate_observe(h, f0, t_grid, PropagateOptions::default(), |_, f| snaps.push(f.clone()))?;
    Ok((snaps, rep))
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub times: Vec<f64>,
    pub sup_norms: Vec<f64>,
    /// Requested window.
    pub window: (f64, f64),
    /// Reported times actually inside the fit.
    pub effective_window: (f64, f64),
    pub exponent: f64,
    pub exponent_stderr: f64,
    /// `sup |u(t)| (4 pi t)^{3/2} / ||f0||_1` at the last fitted time.
    pub amplitude_ratio: f64,
    pub truncated: bool,
    pub mass_drift: f64,
    pub energy_drift: f64,
}

/// Least-squares slope of `log v` against `log t` with its standard error.
pub fn fit_power_law(times: &[f64], values: &[f64]) -> Result<(f64, f64)> {
    if times.len() != values.len() || times.len() < 3 {
        return Err(Error::Window("a power-law fit needs at least three samples".into()));
    }
    if times.iter().chain(values).any(|v| !(*v > 0.0)) {
        return Err(Error::Window("times and values must be positive".into()));
    }
    let xs: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    Ok((slope, (ssr / (n - 2.0) / sxx).sqrt()))
}

#[derive(Clone, Copy, Debug)]
pub struct DecayOptions {
    /// Sampling interval of the sup norm.
    pub dt: f64,
    pub propagate: PropagateOptions,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self { dt: 0.05, propagate: PropagateOptions::default() }
    }
}

/// Evolves `P_ac f0` and fits `sup |u(t)| ~ t^p` over the window, limited to
/// the times the wrap-around monitor lets through.
pub fn decay_experiment(h: &HamiltonianOperator, report: &SpectrumReport, f0: &ScalarField, window: (f64, f64)) -> Result<DecayFit> {
    decay_experiment_with(h, report, f0, window, DecayOptions::default())
}

pub fn decay_experiment_with(
    h: &HamiltonianOperator,
    report: &SpectrumReport,
    f0: &ScalarField,
    window: (f64, f64),
    opts: DecayOptions,
) -> Result<DecayFit> {
    let (t1, t2) = window;
    if !(t1 > 0.0 && t2 > t1) {
        return Err(Error::Window(format!("window [{t1}, {t2}] must satisfy 0 < t1 < t2")));
    }
    let start = pac_apply(report, f0);
    let steps = (t2 / opts.dt).round() as usize;
    let t_grid: Vec<f64> = (1..=steps).map(|i| i as f64 * opts.dt).collect();
    let mut sup = Vec::new();
    let rep = propagate_observe(h, &start, &t_grid, opts.propagate, |_, f| sup.push(f.norm_sup()))?;
    let eps = 1e-9 * opts.dt;
    let idx: Vec<usize> = (0..rep.times.len()).filter(|&i| rep.times[i] >= t1 - eps && rep.times[i] <= t2 + eps).collect();
    if idx.len() < 3 {
        return Err(Error::Window(format!(
            "only {} unbreached samples inside [{t1}, {t2}] (breach at {:?})",
            idx.len(),
            rep.breach_time
        )));
    }
    let ft: Vec<f64> = idx.iter().map(|&i| rep.times[i]).collect();
    let fv: Vec<f64> = idx.iter().map(|&i| sup[i]).collect();
    let (exponent, exponent_stderr) = fit_power_law(&ft, &fv)?;
    let t_last = *ft.last().unwrap();
    let amplitude_ratio = fv.last().unwrap() * (4.0 * PI * t_last).powf(1.5) / f0.norm_l1();
    Ok(DecayFit {
        times: rep.times.clone(),
        sup_norms: sup,
        window,
        effective_window: (ft[0], t_last),
        exponent,
        exponent_stderr,
        amplitude_ratio,
        truncated: rep.truncated,
        mass_drift: rep.mass_drift(),
        energy_drift: rep.energy_drift(),
    })
}

#[derive(Clone, Copy, Debug)]
pub struct WaveOptions {
    /// Width of the spectral filter `exp(-E / (2 kappa^2))`; `None` uses
    /// `kmax / 4`.
    pub kappa: Option<f64>,
    /// Largest grid allowed on the perturbed path.
    pub max_n: usize,
}

impl Default for WaveOptions {
    fn default() -> Self {
        Self { kappa: None, max_n: 64 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WaveKernelTrace {
    pub x: Vec3,
    pub y: Vec3,
    pub t: Vec<f64>,
    pub k: Vec<Complex64>,
    /// `int t |K| dt`.
    pub i1: f64,
    /// `int |K| dt`.
    pub i2: f64,
    /// Share of `i1` from the last quarter of the time range.
    pub tail_fraction: f64,
    pub kappa: f64,
}

impl WaveKernelTrace {
    fn new(x: Vec3, y: Vec3, t: &[f64], k: Vec<Complex64>, kappa: f64) -> Self {
        let trap = |f: &dyn Fn(usize) -> f64, from: f64| -> f64 {
            (1..t.len()).filter(|&i| t[i - 1] >= from).map(|i| 0.5 * (t[i] - t[i - 1]) * (f(i) + f(i - 1))).sum()
        };
        let i1 = trap(&|i| t[i] * k[i].norm(), f64::NEG_INFINITY);
        let i2 = trap(&|i| k[i].norm(), f64::NEG_INFINITY);
        let t_max = t.last().copied().unwrap_or(0.0);
        let tail = trap(&|i| t[i] * k[i].norm(), 0.75 * t_max);
        Self { x, y, t: t.to_vec(), k, i1, i2, tail_fraction: if i1 > 0.0 { tail / i1 } else { 0.0 }, kappa }
    }

    pub fn distance(&self) -> f64 {
        ((self.x[0] - self.y[0]).powi(2) + (self.x[1] - self.y[1]).powi(2) + (self.x[2] - self.y[2]).powi(2)).sqrt()
    }

    /// `sup_{t < 0.9 |x - y|} |K| / sup_t |K|`.
    pub fn finite_speed_ratio(&self) -> f64 {
        let r = 0.9 * self.distance();
        let early = self.t.iter().zip(&self.k).filter(|(t, _)| **t < r).map(|(_, k)| k.norm()).fold(0.0, f64::max);
        let all = self.k.iter().map(|k| k.norm()).fold(0.0, f64::max);
        if all > 0.0 {
            early / all
        } else {
            0.0
        }
    }
}

fn default_kappa(grid: &Grid3D, opts: &WaveOptions) -> f64 {
    opts.kappa.unwrap_or(grid.kmax() / 4.0)
}

/// `sin(t sqrt E) / sqrt E`, continued analytically through `E <= 0`.
fn sine_over_root(t: f64, e: f64) -> f64 {
    if e > 0.0 {
        let s = e.sqrt();
        (t * s).sin() / s
    } else if e < 0.0 {
        let s = (-e).sqrt();
        (t * s).sinh() / s
    } else {
        t
    }
}

/// Free kernels from the plane-wave eigenbasis of the box, grouped by `|k|^2`
/// shells. The zero mode is kept: the full sum is the image-lattice sum of
/// free kernels, and dropping it adds a `-t / L^3` drift.
pub fn free_wave_kernels(grid: Grid3D, pairs: &[(usize, usize)], t_grid: &[f64], opts: WaveOptions) -> Result<Vec<WaveKernelTrace>> {
    let kappa = default_kappa(&grid, &opts);
    let n = grid.n as isize;
    let m = |i: usize| -> isize {
        let i = i as isize;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    };
    let disp: Vec<[f64; 3]> = pairs
        .iter()
        .map(|&(x, y)| {
            let (px, py) = (grid.point(x), grid.point(y));
            [px[0] - py[0], px[1] - py[1], px[2] - py[2]]
        })
        .collect();
    let q = 2.0 * PI / grid.l;
    // phase sums per shell and pair
    let shells: BTreeMap<i64, Vec<Complex64>> = (0..grid.len())
        .into_par_iter()
        .fold(BTreeMap::new, |mut acc: BTreeMap<i64, Vec<Complex64>>, idx| {
            let (i, j, k) = grid.unindex(idx);
            let (a, b, c) = (m(i), m(j), m(k));
            let s = (a * a + b * b + c * c) as i64;
            let e = acc.entry(s).or_insert_with(|| vec![ZERO; disp.len()]);
            for (p, d) in disp.iter().enumerate() {
                e[p] += Complex64::from_polar(1.0, q * (a as f64 * d[0] + b as f64 * d[1] + c as f64 * d[2]));
            }
            acc
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (s, v) in b {
                let e = a.entry(s).or_insert_with(|| vec![ZERO; v.len()]);
                for (x, y) in e.iter_mut().zip(v) {
                    *x += y;
                }
            }
            a
        });
    let vol = grid.l.powi(3);
    let shells: Vec<(f64, Vec<Complex64>)> = shells.into_iter().map(|(s, v)| (q * q * s as f64, v)).collect();
    let values: Vec<Vec<Complex64>> = t_grid
        .par_iter()
        .map(|&t| {
            let mut out = vec![ZERO; pairs.len()];
            for (e, sums) in &shells {
                let w = sine_over_root(t, *e) * (-e / (2.0 * kappa * kappa)).exp() / vol;
                if w == 0.0 {
                    continue;
                }
                for (o, s) in out.iter_mut().zip(sums) {
                    *o += s * w;
                }
            }
            out
        })
        .collect();
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(p, &(x, y))| {
            let k = values.iter().map(|v| v[p]).collect();
            WaveKernelTrace::new(grid.point(x), grid.point(y), t_grid, k, kappa)
        })
        .collect())
}

/// Chebyshev coefficients of `E -> F(E)` on `[c - s, c + s]` from `m` nodes.
fn chebyshev_coefficients(f: impl Fn(f64) -> f64, c: f64, s: f64, n: usize, m: usize) -> Vec<f64> {
    let vals: Vec<f64> = (0..m).map(|i| f(c + s * (PI * (i as f64 + 0.5) / m as f64).cos())).collect();
    (0..n)
        .map(|j| {
            let sum: f64 = vals.iter().enumerate().map(|(i, v)| v * (j as f64 * PI * (i as f64 + 0.5) / m as f64).cos()).sum();
            let w = if j == 0 { 1.0 } else { 2.0 };
            w * sum / m as f64
        })
        .collect()
}

/// Kernel traces of `sin(t sqrt H) P_ac / sqrt H` with the spectral filter.
/// Free operators use the plane-wave basis; otherwise a Chebyshev expansion
/// in `H` acts on `P_ac e_y`, where `P_ac` removes the bound states of the
/// report. Near-zero box modes stay, as the zero mode does on the free path.
pub fn wave_sine_kernels(
    h: &HamiltonianOperator,
    report: &SpectrumReport,
    pairs: &[(usize, usize)],
    t_grid: &[f64],
    opts: WaveOptions,
) -> Result<Vec<WaveKernelTrace>> {
    let grid = h.grid;
    if report.grid != grid {
        return Err(Error::GridMismatch("report grid differs from operator grid".into()));
    }
    if pairs.iter().any(|&(x, y)| x >= grid.len() || y >= grid.len()) {
        return Err(Error::Precondition("probe index outside the grid".into()));
    }
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t >= 0.0)) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("t_grid must be non-negative and strictly increasing".into()));
    }
    if h.is_free() {
        return free_wave_kernels(grid, pairs, t_grid, opts);
    }
    let removed: Vec<&ScalarField> = report
        .bound_states()
        .map(|p| &p.vector)
        .collect();
    let emin = report.eigenpairs.first().map(|p| p.energy).unwrap_or(0.0);
    chebyshev_wave_kernels(h, &removed, emin, pairs, t_grid, opts)
}

/// Chebyshev route for any operator; `removed` are orthonormal eigenvectors
/// projected out of `e_y`, `emin` a lower bound for the spectrum.
pub fn chebyshev_wave_kernels(
    h: &HamiltonianOperator,
    removed: &[&ScalarField],
    emin: f64,
    pairs: &[(usize, usize)],
    t_grid: &[f64],
    opts: WaveOptions,
) -> Result<Vec<WaveKernelTrace>> {
    let grid = h.grid;
    if pairs.iter().any(|&(x, y)| x >= grid.len() || y >= grid.len()) {
        return Err(Error::Precondition("probe index outside the grid".into()));
    }
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t >= 0.0)) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("t_grid must be non-negative and strictly increasing".into()));
    }
    if grid.n > opts.max_n {
        return Err(Error::GridTooLarge(format!("n = {} exceeds {} on the Chebyshev path", grid.n, opts.max_n)));
    }
    let kappa = default_kappa(&grid, &opts);
    let t_max = *t_grid.last().unwrap();
    let lap_max = 3.0 * grid.kmax().powi(2);
    let emin = emin.min(0.0) - 1.0;
    let emax = lap_max + 2.0 * h.potential_scale() + 2.0 * h.potential_scale().sqrt() * 3f64.sqrt() * grid.kmax() + 1.0;
    let (c, s) = (0.5 * (emax + emin), 0.5 * (emax - emin));
    let filter = |e: f64| (-e / (2.0 * kappa * kappa)).exp();
    // degree from the coefficient tail at the latest time
    let mut n = 64;
    loop {
        let coef = chebyshev_coefficients(|e| sine_over_root(t_max, e) * filter(e), c, s, n, 4 * n);
        let top = coef.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tail = coef[n - 8..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if tail <= 1e-12 * top || n >= 16384 {
            break;
        }
        n *= 2;
    }
    let coefs: Vec<Vec<f64>> = t_grid
        .par_iter()
        .map(|&t| chebyshev_coefficients(|e| sine_over_root(t, e) * filter(e), c, s, n, 4 * n))
        .collect();
    let hv = grid.cell_volume();
    let mut by_y: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (p, &(_, y)) in pairs.iter().enumerate() {
        by_y.entry(y).or_default().push(p);
    }
    let mut traces: Vec<Option<WaveKernelTrace>> = vec![None; pairs.len()];
    for (y, members) in by_y {
        let mut b = vec![ZERO; grid.len()];
        b[y] = Complex64::new(1.0, 0.0);
        for f in removed {
            let w = f.values[y].conj() * hv;
            b.par_iter_mut().zip(f.values.par_iter()).for_each(|(o, v)| *o -= w * v);
        }
        let hat = |v: &[Complex64]| -> Vec<Complex64> {
            let hv = h.apply_slice(v);
            hv.iter().zip(v).map(|(a, x)| (a - x * c) / s).collect()
        };
        // moments mu_j(x) = (T_j(H^) b)(x) at the probe points
        let xs: Vec<usize> = members.iter().map(|&p| pairs[p].0).collect();
        let mut moments = vec![vec![ZERO; n]; xs.len()];
        let mut prev = b.clone();
        let mut cur = hat(&b);
        for (i, &x) in xs.iter().enumerate() {
            moments[i][0] = prev[x];
            if n > 1 {
                moments[i][1] = cur[x];
            }
        }
        for j in 2..n {
            let hc = hat(&cur);
            let next: Vec<Complex64> = hc.iter().zip(&prev).map(|(a, p)| a * 2.0 - p).collect();
            prev = cur;
            cur = next;
            for (i, &x) in xs.iter().enumerate() {
                moments[i][j] = cur[x];
            }
        }
        for (i, &p) in members.iter().enumerate() {
            let k: Vec<Complex64> = coefs
                .iter()
                .map(|cf| cf.iter().zip(&moments[i]).map(|(a, m)| m * *a).sum::<Complex64>() / hv)
                .collect();
            let (x, y) = pairs[p];
            traces[p] = Some(WaveKernelTrace::new(grid.point(x), grid.point(y), t_grid, k, kappa));
        }
    }
    Ok(traces.into_iter().map(|t| t.expect("every pair visited")).collect())
}

/// Single-pair form of [`wave_sine_kernels`].
pub fn wave_sine_kernel(
    h: &HamiltonianOperator,
    report: &SpectrumReport,
    x: usize,
    y: usize,
    t_grid: &[f64],
) -> Result<WaveKernelTrace> {
    Ok(wave_sine_kernels(h, report, &[(x, y)], t_grid, WaveOptions::default())?.remove(0))
}

#[derive(Clone, Debug, Serialize)]
pub struct PairBound {
    pub distance: f64,
    pub i1: f64,
    pub i2: f64,
    /// `i2 |x - y|`, bounded by the second kernel estimate.
    pub i2_times_distance: f64,
    pub tail_fraction: f64,
    pub finite_speed_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WaveBoundReport {
    pub pairs: Vec<PairBound>,
    pub max_i1: f64,
    pub max_i2_times_distance: f64,
    pub max_tail_fraction: f64,
    pub max_finite_speed_ratio: f64,
    /// `1 / (4 pi)`, the free value of `i2 |x - y|`.
    pub free_value: f64,
}

pub fn wave_bound_checks(traces: &[WaveKernelTrace]) -> WaveBoundReport {
    let pairs: Vec<PairBound> = traces
        .iter()
        .map(|t| PairBound {
            distance: t.distance(),
            i1: t.i1,
            i2: t.i2,
            i2_times_distance: t.i2 * t.distance(),
            tail_fraction: t.tail_fraction,
            finite_speed_ratio: t.finite_speed_ratio(),
        })
        .collect();
    let max = |f: &dyn Fn(&PairBound) -> f64| pairs.iter().map(f).fold(0.0, f64::max);
    WaveBoundReport {
        max_i1: max(&|p| p.i1),
        max_i2_times_distance: max(&|p| p.i2_times_distance),
        max_tail_fraction: max(&|p| p.tail_fraction),
        max_finite_speed_ratio: max(&|p| p.finite_speed_ratio),
        free_value: 1.0 / (4.0 * PI),
        pairs,
    }
}
