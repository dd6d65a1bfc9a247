//! Free resolvent `R0(lambda^2) = (-Delta - lambda^2)^{-1}`: closed-form
//! kernels, free-space application on a grid, and the sphere-measure identity.
//!
//! Free-space application uses a truncated-kernel spectral convolution: the
//! kernel cut off at radius `Rc` beyond the box diameter has an entire Fourier
//! transform, which is sampled on a 4x padded grid once and then restricted to
//! the 2x padded grid used for every application.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Fft3, Grid3D, ScalarField};
use crate::potential::{norm, sub, Vec3};
use crate::quad::gauss_legendre;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResolventKernelKind {
    #[serde(rename = "R0")]
    R0,
    #[serde(rename = "R0_GRAD")]
    R0Grad,
    #[serde(rename = "DLAMBDA_R0")]
    DLambdaR0,
    #[serde(rename = "GRAD_DLAMBDA_R0")]
    GradDLambdaR0,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelValue {
    Scalar(Complex64),
    Vector([Complex64; 3]),
}

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Kernel of `kind` at `(x, y)`; requires `Im lambda >= 0` and `x != y`.
pub fn resolvent_kernel(
    kind: ResolventKernelKind,
    lambda: Complex64,
    x: Vec3,
    y: Vec3,
) -> Result<KernelValue> {
    if lambda.im < 0.0 {
        return Err(Error::Precondition("Im lambda must be >= 0".into()));
    }
    let d = sub(x, y);
    let r = norm(d);
    if r == 0.0 {
        return Err(Error::Singularity);
    }
    let e = (I * lambda * r).exp();
    let c = 1.0 / (4.0 * PI);
    let vec = |s: Complex64| KernelValue::Vector([s * d[0], s * d[1], s * d[2]]);
    Ok(match kind {
        ResolventKernelKind::R0 => KernelValue::Scalar(e * c / r),
        ResolventKernelKind::R0Grad => vec((I * lambda * e / r - e / (r * r)) * c / r),
        ResolventKernelKind::DLambdaR0 => KernelValue::Scalar(I * c * e),
        ResolventKernelKind::GradDLambdaR0 => vec(-lambda * c * e / r),
    })
}

/// Real `lambda` is pushed off the axis by this amount for grid solves.
pub const LIMIT_EPS: f64 = 1e-6;

/// Fourier transform at `|xi|` of `e^{i lambda r}/(4 pi r)` cut off at `rc`.
pub fn truncated_kernel_hat(lambda: Complex64, xi: f64, rc: f64) -> Complex64 {
    let l2 = lambda * lambda;
    if xi < 1e-12 {
        if l2.norm() < 1e-14 {
            return Complex64::new(0.5 * rc * rc, 0.0);
        }
        return ((I * lambda * rc).exp() * (1.0 - I * lambda * rc) - 1.0) / l2;
    }
    let denom = xi * xi - l2;
    if denom.norm() > 1e-3 * (1.0 + l2.norm()) {
        let e = (I * lambda * rc).exp();
        return (1.0 - e * ((xi * rc).cos() - I * lambda * (xi * rc).sin() / xi)) / denom;
    }
    // removable singularity: integrate (1/xi) int_0^rc e^{i lambda r} sin(xi r) dr
    let panels = ((xi.max(lambda.re.abs()) * rc / PI).ceil() as usize + 4).max(8);
    let gl = gauss_legendre(16);
    let hp = rc / panels as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let a = p as f64 * hp;
        for &(t, w) in &gl {
            let r = a + 0.5 * hp * (1.0 + t);
            acc += 0.5 * hp * w * (I * lambda * r).exp() * (xi * r).sin();
        }
    }
    acc / xi
}

/// Free-space `R0(lambda^2)` acting on fields of one grid.
pub struct FreeResolvent {
    grid: Grid3D,
    lambda: Complex64,
    fft2: Fft3,
    kernel_hat: Vec<Complex64>,
}

impl FreeResolvent {
    pub fn new(grid: Grid3D, lambda: Complex64) -> Self {
        let lambda = if lambda.im == 0.0 { lambda + I * LIMIT_EPS } else { lambda };
        let n = grid.n;
        let h = grid.h();
        let rc = 3f64.sqrt() * grid.l * 1.01;
        // kernel samples on the 4n grid
        let m4 = 4 * n;
        let l4 = m4 as f64 * h;
        let big = Grid3D { n: m4, l: l4 };
        let mut g4: Vec<Complex64> = (0..m4 * m4 * m4)
            .into_par_iter()
            .map(|idx| {
                let (i, j, k) = big.unindex(idx);
                let (a, b, c) = (big.wavenumber(i), big.wavenumber(j), big.wavenumber(k));
                truncated_kernel_hat(lambda, (a * a + b * b + c * c).sqrt(), rc)
            })
            .collect();
        Fft3::new(m4).inverse(&mut g4);
        // the inverse transform carries 1/(4n)^3; kernel values are g4 / h^3,
        // and the h^3 of the quadrature cancels
        let m2 = 2 * n;
        let wrap4 = |o: isize| -> usize { o.rem_euclid(m4 as isize) as usize };
        let mut g2: Vec<Complex64> = (0..m2 * m2 * m2)
            .into_par_iter()
            .map(|idx| {
                let i = idx / (m2 * m2);
                let j = (idx / m2) % m2;
                let k = idx % m2;
                let off = |t: usize| -> isize {
                    if t < n {
                        t as isize
                    } else {
                        t as isize - m2 as isize
                    }
                };
                let (a, b, c) = (wrap4(off(i)), wrap4(off(j)), wrap4(off(k)));
                g4[(a * m4 + b) * m4 + c]
            })
            .collect();
        drop(g4);
        let fft2 = Fft3::new(m2);
        fft2.forward(&mut g2);
        Self { grid, lambda, fft2, kernel_hat: g2 }
    }

    pub fn lambda(&self) -> Complex64 {
        self.lambda
    }

    pub fn grid(&self) -> Grid3D {
        self.grid
    }

    pub fn apply_slice(&self, f: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.n;
        let m2 = 2 * n;
        let mut buf = vec![Complex64::new(0.0, 0.0); m2 * m2 * m2];
        buf.par_chunks_mut(m2 * m2).enumerate().take(n).for_each(|(i, plane)| {
            for j in 0..n {
                let src = &f[(i * n + j) * n..(i * n + j + 1) * n];
                plane[j * m2..j * m2 + n].copy_from_slice(src);
            }
        });
        self.fft2.forward(&mut buf);
        buf.par_iter_mut().zip(self.kernel_hat.par_iter()).for_each(|(b, k)| *b *= k);
        self.fft2.inverse(&mut buf);
        let mut out = vec![Complex64::new(0.0, 0.0); n * n * n];
        out.par_chunks_mut(n * n).enumerate().for_each(|(i, plane)| {
            for j in 0..n {
                let src = &buf[(i * m2 + j) * m2..(i * m2 + j) * m2 + n];
                plane[j * n..(j + 1) * n].copy_from_slice(src);
            }
        });
        out
    }

    pub fn apply(&self, f: &ScalarField) -> Result<ScalarField> {
        if f.grid != self.grid {
            return Err(Error::GridMismatch("field grid differs from resolvent grid".into()));
        }
        f.check_finite()?;
        Ok(ScalarField { grid: self.grid, values: self.apply_slice(&f.values) })
    }
}

/// Free-space `R0(lambda^2) f` with the limiting value `lambda + i0` for real
/// `lambda`.
pub fn r0_apply(lambda: Complex64, f: &ScalarField) -> Result<ScalarField> {
    if lambda.im < 0.0 {
        return Err(Error::Precondition("Im lambda must be >= 0".into()));
    }
    FreeResolvent::new(f.grid, lambda).apply(f)
}

/// Periodic-box resolvent: the Fourier multiplier `1/(|k|^2 - lambda^2)`.
pub struct PeriodicResolvent {
    fft: Fft3,
    symbol: Vec<Complex64>,
}

impl PeriodicResolvent {
    pub fn new(grid: Grid3D, lambda: Complex64) -> Result<Self> {
        let l2 = lambda * lambda;
        let lap = grid.laplacian_symbol();
        let mut symbol = Vec::with_capacity(lap.len());
        for &k2 in &lap {
            let d = k2 - l2;
            if d.norm() < 1e-14 {
                return Err(Error::OnSpectrum);
            }
            symbol.push(1.0 / d);
        }
        Ok(Self { fft: Fft3::new(grid.n), symbol })
    }

    pub fn apply_slice(&self, f: &[Complex64]) -> Vec<Complex64> {
        let mut d = f.to_vec();
        self.fft.forward(&mut d);
        d.par_iter_mut().zip(self.symbol.par_iter()).for_each(|(v, s)| *v *= s);
        self.fft.inverse(&mut d);
        d
    }
}

/// Total mass of the sphere-measure kernel `delta(rho - |x-y|)/(4 pi rho)`
/// discretized with a hat mollifier on a uniform rho grid, against the closed
/// form `1/(4 pi |x-y|)`.
pub fn sphere_fourier_check(x: Vec3, y: Vec3, rho_max: f64) -> Result<(f64, f64)> {
    let r = norm(sub(x, y));
    if r == 0.0 {
        return Err(Error::Singularity);
    }
    if rho_max <= r {
        return Err(Error::Window(format!("rho_max = {rho_max} <= |x-y| = {r}")));
    }
    let n_rho = 4096;
    let d = rho_max / n_rho as f64;
    let mut lhs = 0.0;
    for i in 1..=n_rho {
        let rho = i as f64 * d;
        let eta = (1.0 - (rho - r).abs() / d).max(0.0) / d;
        lhs += d * eta / (4.0 * PI * rho);
    }
    Ok((lhs, 1.0 / (4.0 * PI * r)))
}
