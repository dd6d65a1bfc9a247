//! Periodic box discretization and sampled fields.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{ordered_tuples, PotentialSpec, Vec3};

/// Cubic periodic grid with `n` points per axis on `[-L/2, L/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid3D {
    pub n: usize,
    pub l: f64,
}

impl Grid3D {
    pub fn new(n: usize, l: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("n = {n} must be a power of two >= 8")));
        }
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::InvalidGrid(format!("L = {l} must be positive")));
        }
        Ok(Self { n, l })
    }

    pub fn h(&self) -> f64 {
        self.l / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(3)
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.l + i as f64 * self.h()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn unindex(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.n;
        (idx / (n * n), (idx / n) % n, idx % n)
    }

    pub fn point(&self, idx: usize) -> Vec3 {
        let (i, j, k) = self.unindex(idx);
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    /// Index of the node nearest to `x` (no wrapping).
    pub fn nearest(&self, x: Vec3) -> Option<usize> {
        let h = self.h();
        let mut ijk = [0usize; 3];
        for a in 0..3 {
            let t = ((x[a] + 0.5 * self.l) / h).round();
            if t < 0.0 || t >= self.n as f64 {
                return None;
            }
            ijk[a] = t as usize;
        }
        Some(self.index(ijk[0], ijk[1], ijk[2]))
    }

    /// Angular wavenumber for FFT index `i`.
    pub fn wavenumber(&self, i: usize) -> f64 {
        let n = self.n as isize;
        let m = if (i as isize) < n / 2 { i as isize } else { i as isize - n };
        2.0 * PI / self.l * m as f64
    }

    pub fn kmax(&self) -> f64 {
        PI / self.h()
    }

    /// Wavenumbers per axis for first derivatives: the Nyquist mode is zeroed
    /// and `|k| > 2/3 kmax` is cut (dealiasing), which keeps the derivative
    /// exactly anti-hermitian.
    pub fn derivative_wavenumbers(&self) -> Vec<f64> {
        let cut = 2.0 / 3.0 * self.kmax() + 1e-12;
        (0..self.n)
            .map(|i| {
                let k = self.wavenumber(i);
                if i == self.n / 2 || k.abs() > cut {
                    0.0
                } else {
                    k
                }
            })
            .collect()
    }

    /// `|k|^2` for every FFT index, full band.
    pub fn laplacian_symbol(&self) -> Vec<f64> {
        let ks: Vec<f64> = (0..self.n).map(|i| self.wavenumber(i)).collect();
        (0..self.len())
            .map(|idx| {
                let (i, j, k) = self.unindex(idx);
                ks[i] * ks[i] + ks[j] * ks[j] + ks[k] * ks[k]
            })
            .collect()
    }
}

/// Complex scalar samples on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: Grid3D,
    pub values: Vec<Complex64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid3D) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn(grid: Grid3D, f: impl Fn(Vec3) -> Complex64 + Sync) -> Self {
        let values = (0..grid.len()).into_par_iter().map(|idx| f(grid.point(idx))).collect();
        Self { grid, values }
    }

    pub fn from_real_fn(grid: Grid3D, f: impl Fn(Vec3) -> f64 + Sync) -> Self {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidField("non-finite sample".into()))
        }
    }

    pub fn abs_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn norm_l2(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn norm_l1(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn norm_sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// `<self, other>` with weight `h^3`, antilinear in `self`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        inner(&self.values, &other.values) * self.grid.cell_volume()
    }
}

/// Three complex components per node.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub grid: Grid3D,
    pub comps: [Vec<Complex64>; 3],
}

impl VectorField {
    pub fn zeros(grid: Grid3D) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); grid.len()];
        Self { grid, comps: [z.clone(), z.clone(), z] }
    }
}

/// Samples `d^alpha V` at the grid nodes.
pub fn build_scalar_field(
    spec: &PotentialSpec,
    grid: Grid3D,
    alpha: [usize; 3],
) -> Result<ScalarField> {
    let order: usize = alpha.iter().sum();
    if order > spec.scalar_order_available() && order > 0 {
        return Err(Error::UnsupportedDerivative(format!(
            "order {order} requested, {} available",
            spec.scalar_order_available()
        )));
    }
    let values: Result<Vec<Complex64>> = (0..grid.len())
        .into_par_iter()
        .map(|idx| spec.scalar_derivative(alpha, grid.point(idx)).map(|v| Complex64::new(v, 0.0)))
        .collect();
    Ok(ScalarField { grid, values: values? })
}

/// Samples `d^alpha A` at the grid nodes.
pub fn build_vector_field(
    spec: &PotentialSpec,
    grid: Grid3D,
    alpha: [usize; 3],
) -> Result<VectorField> {
    let order: usize = alpha.iter().sum();
    if order > spec.vector_order_available() && order > 0 {
        return Err(Error::UnsupportedDerivative(format!(
            "order {order} requested, {} available",
            spec.vector_order_available()
        )));
    }
    let mut out = VectorField::zeros(grid);
    for (c, comp) in out.comps.iter_mut().enumerate() {
        let values: Result<Vec<Complex64>> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                spec.vector_derivative(c, alpha, grid.point(idx)).map(|v| Complex64::new(v, 0.0))
            })
            .collect();
        *comp = values?;
    }
    Ok(out)
}

/// Scalar potential sampled with cell-volume fractions for indicator terms.
pub fn build_cell_averaged_scalar(spec: &PotentialSpec, grid: Grid3D) -> ScalarField {
    let h = grid.h();
    ScalarField::from_real_fn(grid, |x| spec.scalar.iter().map(|b| b.cell_average(x, h)).sum())
}

/// Which potential a derivative-magnitude field is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Scalar,
    Vector,
}

/// Pointwise Frobenius magnitude of the order-`k` derivative tensor,
/// `sqrt(sum over ordered index tuples and components of |d^alpha f|^2)`.
pub fn derivative_magnitude(
    spec: &PotentialSpec,
    grid: Grid3D,
    source: Source,
    k: usize,
) -> Result<ScalarField> {
    let available = match source {
        Source::Scalar => spec.scalar_order_available(),
        Source::Vector => spec.vector_order_available(),
    };
    if k > 0 && k > available {
        return Err(Error::UnsupportedDerivative(format!("order {k} of an indicator term")));
    }
    let tuples = ordered_tuples(k);
    let values: Result<Vec<Complex64>> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let x = grid.point(idx);
            let mut s = 0.0;
            for alpha in &tuples {
                match source {
                    Source::Scalar => s += spec.scalar_derivative(*alpha, x)?.powi(2),
                    Source::Vector => {
                        for c in 0..3 {
                            s += spec.vector_derivative(c, *alpha, x)?.powi(2);
                        }
                    }
                }
            }
            Ok(Complex64::new(s.sqrt(), 0.0))
        })
        .collect();
    Ok(ScalarField { grid, values: values? })
}

pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.par_iter().zip(b.par_iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm2(a: &[Complex64]) -> f64 {
    a.par_iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// In-place 3D FFT on a cubic array of side `n` stored in row-major order.
pub struct Fft3 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.fwd);
    }

    /// Inverse transform including the `1/n^3` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inv);
        let s = 1.0 / (self.n * self.n * self.n) as f64;
        data.par_iter_mut().for_each(|v| *v *= s);
    }

    fn run(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n * n);
        let scratch_len = fft.get_inplace_scratch_len();
        let zero = Complex64::new(0.0, 0.0);
        // last axis: contiguous rows
        data.par_chunks_mut(n).for_each_init(
            || vec![zero; scratch_len],
            |scratch, row| fft.process_with_scratch(row, scratch),
        );
        // middle axis: strided inside each plane
        data.par_chunks_mut(n * n).for_each_init(
            || (vec![zero; scratch_len], vec![zero; n]),
            |(scratch, col), plane| {
                for k in 0..n {
                    for j in 0..n {
                        col[j] = plane[j * n + k];
                    }
                    fft.process_with_scratch(col, scratch);
                    for j in 0..n {
                        plane[j * n + k] = col[j];
                    }
                }
            },
        );
        // first axis: transpose through a buffer
        let mut buf = vec![zero; n * n * n];
        buf.par_chunks_mut(n).enumerate().for_each(|(jk, col)| {
            for (i, c) in col.iter_mut().enumerate() {
                *c = data[i * n * n + jk];
            }
        });
        buf.par_chunks_mut(n).for_each_init(
            || vec![zero; scratch_len],
            |scratch, col| fft.process_with_scratch(col, scratch),
        );
        data.par_chunks_mut(n * n).enumerate().for_each(|(i, plane)| {
            for (jk, v) in plane.iter_mut().enumerate() {
                *v = buf[jk * n + i];
            }
        });
    }
}
