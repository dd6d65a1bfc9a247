//! Kernels `T(rho, y, x)` with composition by convolution in `rho`.
//!
//! A kernel acts between weighted point clouds: `(T f)(y) = sum_x w_x T(y, x) f(x)`.
//! Dirac components in `rho` are kept symbolically as atoms; an atom of order
//! `k` at `a` is `delta^(k)(rho - a)`, whose transform is `(-i lambda)^k e^{i lambda a}`.
//! The identity is the atom `delta(rho) diag(1/w)`.

pub mod assembly;

use crate::error::{Error, Result};
use crate::potential::Vec3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Spatial sample points with quadrature weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() || points.is_empty() {
            return Err(Error::GridMismatch("cloud points and weights differ".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidGrid("cloud weights must be positive".into()));
        }
        Ok(Self { points, weights })
    }

    pub fn single(p: Vec3) -> Self {
        Self { points: vec![p], weights: vec![1.0] }
    }

    /// Cell-centred `m^3` lattice filling the cube of half-width `half`.
    pub fn cube(center: Vec3, half: f64, m: usize) -> Self {
        let h = 2.0 * half / m as f64;
        let mut points = Vec::with_capacity(m * m * m);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let c = |idx: usize, o: f64| o - half + (idx as f64 + 0.5) * h;
                    points.push([c(i, center[0]), c(j, center[1]), c(k, center[2])]);
                }
            }
        }
        let n = points.len();
        Self { points, weights: vec![h * h * h; n] }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Sample nodes in `rho` with quadrature weights. Composition needs a uniform
/// grid `rho_k = k h`, integrated with the rectangle rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub step: Option<f64>,
}

impl RhoGrid {
    pub fn uniform(n: usize, h: f64) -> Self {
        Self { nodes: (0..n).map(|k| k as f64 * h).collect(), weights: vec![h; n], step: Some(h) }
    }

    pub fn custom(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("rho nodes must increase and match weights".into()));
        }
        Ok(Self { nodes, weights, step: None })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn rho_max(&self) -> f64 {
        self.nodes.last().copied().unwrap_or(0.0)
    }
}

/// `delta^(order)(rho - rho0) M`.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub rho: f64,
    pub order: u32,
    pub matrix: Vec<Complex64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhoKernel {
    pub rho: RhoGrid,
    pub out_cloud: PointCloud,
    pub in_cloud: PointCloud,
    /// `values[k][i][j] = T(rho_k, out_i, in_j)`, flattened.
    pub values: Vec<Complex64>,
    pub atoms: Vec<Atom>,
    /// Upper bound on the variation mass dropped by truncating compositions at `rho_max`.
    pub truncation_mass: f64,
}

/// Spaces for the operator norm of `int |T| drho`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    L1,
    #[serde(rename = "LINF")]
    Linf,
    K,
    #[serde(rename = "KSTAR_SURR")]
    KstarSurr,
}

impl Space {
    pub fn name(self) -> &'static str {
        match self {
            Space::L1 => "L1",
            Space::Linf => "LINF",
            Space::K => "K",
            Space::KstarSurr => "KSTAR_SURR",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Space::L1, Space::Linf, Space::K, Space::KstarSurr].into_iter().find(|k| k.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WienerDiagnostics {
    /// `(delta, ||T(. - delta) - T||)`.
    pub continuity: Vec<(f64, f64)>,
    /// `(R, ||chi_{rho >= R} T||)`.
    pub tail: Vec<(f64, f64)>,
}

/// `a diag(w) b` for row-major `a: p x q`, `b: q x s`.
fn weighted_matmul(a: &[Complex64], w: &[f64], b: &[Complex64], p: usize, s: usize, out: &mut [Complex64]) {
    let q = w.len();
    for i in 0..p {
        let row = &mut out[i * s..(i + 1) * s];
        for l in 0..q {
            let c = a[i * q + l] * w[l];
            if c == ZERO {
                continue;
            }
            let brow = &b[l * s..(l + 1) * s];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += c * bv;
            }
        }
    }
}

/// Sum over entries of `|a| diag(w) |b|`, a bound for the entry mass of `a diag(w) b`.
fn product_mass(a: &[Complex64], w: &[f64], b: &[Complex64], p: usize, s: usize) -> f64 {
    let q = w.len();
    let mut acc = 0.0;
    for l in 0..q {
        let col: f64 = (0..p).map(|i| a[i * q + l].norm()).sum();
        let row: f64 = (0..s).map(|j| b[l * s + j].norm()).sum();
        acc += col * w[l] * row;
    }
    acc
}

impl RhoKernel {
    pub fn zeros(rho: RhoGrid, out_cloud: PointCloud, in_cloud: PointCloud) -> Self {
        let len = rho.len() * out_cloud.len() * in_cloud.len();
        Self { rho, out_cloud, in_cloud, values: vec![ZERO; len], atoms: Vec::new(), truncation_mass: 0.0 }
    }

    /// `delta(rho) diag(1/w)`.
    pub fn identity(rho: RhoGrid, cloud: PointCloud) -> Self {
        let m = cloud.len();
        let mut matrix = vec![ZERO; m * m];
        for i in 0..m {
            matrix[i * m + i] = Complex64::new(1.0 / cloud.weights[i], 0.0);
        }
        let mut k = Self::zeros(rho, cloud.clone(), cloud);
        k.atoms.push(Atom { rho: 0.0, order: 0, matrix });
        k
    }

    pub fn block(&self) -> usize {
        self.out_cloud.len() * self.in_cloud.len()
    }

    pub fn slice(&self, k: usize) -> &[Complex64] {
        let b = self.block();
        &self.values[k * b..(k + 1) * b]
    }

    pub fn check_finite(&self) -> Result<()> {
        let finite = self.values.iter().chain(self.atoms.iter().flat_map(|a| a.matrix.iter()));
        if finite.clone().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidField("kernel has non-finite entries".into()));
        }
        if self.atoms.iter().any(|a| a.rho < 0.0 || !a.rho.is_finite()) {
            return Err(Error::InvalidField("atom outside [0, rho_max]".into()));
        }
        Ok(())
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.rho != other.rho || self.out_cloud != other.out_cloud || self.in_cloud != other.in_cloud {
            return Err(Error::GridMismatch("kernels live on different grids".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        for atom in &other.atoms {
            out.push_atom(atom.clone());
        }
        out.truncation_mass += other.truncation_mass;
        Ok(out)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        for a in &mut out.atoms {
            a.matrix.iter_mut().for_each(|v| *v *= c);
        }
        out.truncation_mass *= c.norm();
        out
    }

    /// Adds an atom, merging with an existing one at the same place and order.
    pub fn push_atom(&mut self, atom: Atom) {
        if let Some(a) = self.atoms.iter_mut().find(|a| a.rho == atom.rho && a.order == atom.order) {
            for (x, y) in a.matrix.iter_mut().zip(&atom.matrix) {
                *x += y;
            }
        } else {
            self.atoms.push(atom);
        }
    }

    fn uniform_step(&self) -> Result<f64> {
        match self.rho.step {
            Some(h) if self.rho.nodes.first() == Some(&0.0) => Ok(h),
            _ => Err(Error::GridMismatch("composition needs a uniform rho grid from 0".into())),
        }
    }

    /// `[self o s](rho, z, x) = int int self(rho1, z, y) s(rho - rho1, y, x) dy drho1`,
    /// truncated at `rho_max`.
    pub fn compose(&self, s: &RhoKernel) -> Result<RhoKernel> {
        let h = self.uniform_step()?;
        if self.rho != s.rho {
            return Err(Error::GridMismatch("rho grids differ".into()));
        }
        if self.in_cloud != s.out_cloud {
            return Err(Error::GridMismatch("inner clouds differ".into()));
        }
        let n = self.rho.len();
        let (p, q, r) = (self.out_cloud.len(), self.in_cloud.len(), s.in_cloud.len());
        let w = &self.in_cloud.weights;
        let blk = p * r;
        let mut out = RhoKernel::zeros(self.rho.clone(), self.out_cloud.clone(), s.in_cloud.clone());
        let rho_max = self.rho.rho_max();

        out.values.par_chunks_mut(blk).enumerate().for_each(|(k, dst)| {
            for i in 0..=k {
                let mut tmp = vec![ZERO; blk];
                weighted_matmul(self.slice(i), w, s.slice(k - i), p, r, &mut tmp);
                for (d, t) in dst.iter_mut().zip(&tmp) {
                    *d += t * h;
                }
            }
        });
        let mut dropped: f64 = (0..n)
            .into_par_iter()
            .map(|i| {
                (n - i..n)
                    .map(|j| h * h * product_mass(self.slice(i), w, s.slice(j), p, r))
                    .sum::<f64>()
            })
            .sum();

        // atom o density and density o atom
        for a in &self.atoms {
            let shifted = shift_density(&s.values, q * r, n, h, a.rho, a.order);
            for k in 0..n {
                let mut tmp = vec![ZERO; blk];
                weighted_matmul(&a.matrix, w, &shifted[k * q * r..(k + 1) * q * r], p, r, &mut tmp);
                for (d, t) in out.values[k * blk..(k + 1) * blk].iter_mut().zip(&tmp) {
                    *d += t;
                }
            }
            dropped += tail_mass(&s.values, q * r, n, h, rho_max - a.rho) * abs_sum(&a.matrix);
        }
        for b in &s.atoms {
            let shifted = shift_density(&self.values, p * q, n, h, b.rho, b.order);
            for k in 0..n {
                let mut tmp = vec![ZERO; blk];
                weighted_matmul(&shifted[k * p * q..(k + 1) * p * q], w, &b.matrix, p, r, &mut tmp);
                for (d, t) in out.values[k * blk..(k + 1) * blk].iter_mut().zip(&tmp) {
                    *d += t;
                }
            }
            dropped += tail_mass(&self.values, p * q, n, h, rho_max - b.rho) * abs_sum(&b.matrix);
        }
        for a in &self.atoms {
            for b in &s.atoms {
                let mut m = vec![ZERO; blk];
                weighted_matmul(&a.matrix, w, &b.matrix, p, r, &mut m);
                let pos = a.rho + b.rho;
                if pos <= rho_max + 0.5 * h {
                    out.push_atom(Atom { rho: pos, order: a.order + b.order, matrix: m });
                } else {
                    dropped += abs_sum(&m);
                }
            }
        }
        out.truncation_mass = self.truncation_mass + s.truncation_mass + dropped;
        Ok(out)
    }

    /// `int T(rho) e^{i lambda rho} drho` plus exact atomic terms.
    pub fn hat(&self, lambda: f64) -> Vec<Complex64> {
        let blk = self.block();
        let mut out = vec![ZERO; blk];
        for (k, (&rho, &wt)) in self.rho.nodes.iter().zip(&self.rho.weights).enumerate() {
            let ph = Complex64::new(0.0, lambda * rho).exp() * wt;
            for (o, v) in out.iter_mut().zip(self.slice(k)) {
                *o += ph * v;
            }
        }
        for a in &self.atoms {
            let ph = Complex64::new(0.0, -lambda).powu(a.order) * Complex64::new(0.0, lambda * a.rho).exp();
            for (o, v) in out.iter_mut().zip(&a.matrix) {
                *o += ph * v;
            }
        }
        out
    }

    pub fn hat_samples(&self, lambdas: &[f64]) -> HatKernel {
        HatKernel {
            lambdas: lambdas.to_vec(),
            matrices: lambdas.iter().map(|&l| self.hat(l)).collect(),
            rows: self.out_cloud.len(),
            cols: self.in_cloud.len(),
        }
    }

    /// `M(y, x) = int |T(rho, y, x)| drho`; derivative atoms are not measures.
    pub fn variation(&self) -> Result<Vec<f64>> {
        let blk = self.block();
        let mut m = vec![0.0; blk];
        for (k, &wt) in self.rho.weights.iter().enumerate() {
            for (o, v) in m.iter_mut().zip(self.slice(k)) {
                *o += wt * v.norm();
            }
        }
        for a in &self.atoms {
            if a.matrix.iter().all(|v| *v == ZERO) {
                continue;
            }
            if a.order > 0 {
                return Err(Error::Precondition(format!(
                    "derivative atom of order {} at rho = {} is not a finite measure",
                    a.order, a.rho
                )));
            }
            for (o, v) in m.iter_mut().zip(&a.matrix) {
                *o += v.norm();
            }
        }
        Ok(m)
    }

    /// Operator norm of `int |T| drho` between the given spaces.
    ///
    /// `K -> LINF` and `L1 -> KSTAR_SURR` are both bounded by
    /// `sup |M(y, x)| d(y, x)`, with the distance regularized at the cell
    /// scale `w^{1/3} / 2` of the input cloud.
    pub fn u_norm(&self, input: Space, output: Space) -> Result<f64> {
        let m = self.variation()?;
        let (p, q) = (self.out_cloud.len(), self.in_cloud.len());
        let w = &self.in_cloud.weights;
        let val = match (input, output) {
            (Space::L1, Space::Linf) => m.iter().copied().fold(0.0, f64::max),
            (Space::Linf, Space::Linf) => (0..p)
                .map(|i| (0..q).map(|j| w[j] * m[i * q + j]).sum::<f64>())
                .fold(0.0, f64::max),
            (Space::K, Space::Linf) | (Space::L1, Space::KstarSurr) => {
                let mut best: f64 = 0.0;
                for i in 0..p {
                    for j in 0..q {
                        let y = self.out_cloud.points[i];
                        let x = self.in_cloud.points[j];
                        let d = ((y[0] - x[0]).powi(2) + (y[1] - x[1]).powi(2) + (y[2] - x[2]).powi(2)).sqrt();
                        let d = d.max(0.5 * w[j].cbrt());
                        let v = m[i * q + j] * d;
                        if input == Space::K {
                            best = best.max(v * w[j]);
                        } else {
                            best = best.max(v);
                        }
                    }
                }
                best
            }
            _ => return Err(Error::UnsupportedPair(input.name().into(), output.name().into())),
        };
        Ok(val)
    }

    /// Continuity modulus over shifts `h, 2h, 4h` and tail mass over `R = j rho_max / 8`,
    /// both in the `LINF -> LINF` norm.
    pub fn wiener_diagnostics(&self) -> Result<WienerDiagnostics> {
        let h = self.uniform_step()?;
        let n = self.rho.len();
        let blk = self.block();
        let q = self.in_cloud.len();
        let w = &self.in_cloud.weights;
        let row_norm = |m: &[f64]| {
            (0..self.out_cloud.len())
                .map(|i| (0..q).map(|j| w[j] * m[i * q + j]).sum::<f64>())
                .fold(0.0, f64::max)
        };
        let atom_mass: Vec<f64> = {
            let mut m = vec![0.0; blk];
            for a in &self.atoms {
                for (o, v) in m.iter_mut().zip(&a.matrix) {
                    *o += v.norm();
                }
            }
            m
        };
        let mut continuity = Vec::new();
        for shift in [1usize, 2, 4] {
            let mut m = vec![0.0; blk];
            for k in 0..n + shift {
                let cur = if k < n { Some(self.slice(k)) } else { None };
                let prev = if k >= shift && k - shift < n { Some(self.slice(k - shift)) } else { None };
                for (e, o) in m.iter_mut().enumerate() {
                    let a = cur.map_or(ZERO, |s| s[e]);
                    let b = prev.map_or(ZERO, |s| s[e]);
                    *o += h * (a - b).norm();
                }
            }
            // a shifted atom differs from itself by twice its mass
            for (o, a) in m.iter_mut().zip(&atom_mass) {
                *o += 2.0 * a;
            }
            continuity.push((shift as f64 * h, row_norm(&m)));
        }
        let mut tail = Vec::new();
        let rho_max = self.rho.rho_max();
        for j in 1..8 {
            let big_r = rho_max * j as f64 / 8.0;
            let mut m = vec![0.0; blk];
            for (k, &rho) in self.rho.nodes.iter().enumerate() {
                if rho >= big_r {
                    for (o, v) in m.iter_mut().zip(self.slice(k)) {
                        *o += h * v.norm();
                    }
                }
            }
            for a in self.atoms.iter().filter(|a| a.rho >= big_r) {
                for (o, v) in m.iter_mut().zip(&a.matrix) {
                    *o += v.norm();
                }
            }
            tail.push((big_r, row_norm(&m)));
        }
        Ok(WienerDiagnostics { continuity, tail })
    }

    /// `S` with `(I + T)^{-1} = I + S`, summed as `sum_{n >= 1} (-T)^n` while the
    /// `LINF -> LINF` norm of `T` is below one.
    pub fn invert_neumann(&self) -> Result<RhoKernel> {
        let norm = self.u_norm(Space::Linf, Space::Linf)?;
        if norm >= 1.0 {
            return Err(Error::NotContractive(norm));
        }
        let minus_t = self.scale(Complex64::new(-1.0, 0.0));
        let mut term = minus_t.clone();
        let mut sum = minus_t.clone();
        for _ in 0..1000 {
            term = term.compose(&minus_t)?;
            let size = term.u_norm(Space::Linf, Space::Linf)?;
            if size < NEUMANN_TOL {
                sum = sum.add(&term)?;
                return Ok(sum);
            }
            sum = sum.add(&term)?;
        }
        Err(Error::NonConvergence("Neumann series".into()))
    }

    /// Binary form: `[u64 LE header length][JSON header][f64 LE re, im pairs]`,
    /// values first, then atom matrices in header order.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let header = Header {
            rho_max: self.rho.rho_max(),
            n_rho: self.rho.len(),
            rho: self.rho.clone(),
            out_cloud: self.out_cloud.clone(),
            in_cloud: self.in_cloud.clone(),
            atomic: self.atoms.iter().map(|a| AtomHeader { rho: a.rho, order: a.order }).collect(),
            truncation_mass: self.truncation_mass,
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Serialization(e.to_string()))?;
        let io = |e: std::io::Error| Error::Serialization(e.to_string());
        w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&json).map_err(io)?;
        let mut buf = Vec::with_capacity(16 * (self.values.len() + self.atoms.len() * self.block()));
        for v in self.values.iter().chain(self.atoms.iter().flat_map(|a| a.matrix.iter())) {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        w.write_all(&buf).map_err(io)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let io = |e: std::io::Error| Error::Serialization(e.to_string());
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(io)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 30 {
            return Err(Error::Serialization("header too large".into()));
        }
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(io)?;
        let h: Header = serde_json::from_slice(&json).map_err(|e| Error::Serialization(e.to_string()))?;
        if h.n_rho != h.rho.len() || h.rho.nodes.len() != h.rho.weights.len() {
            return Err(Error::Serialization("inconsistent rho grid".into()));
        }
        let blk = h.out_cloud.len() * h.in_cloud.len();
        let mut data = Vec::new();
        r.read_to_end(&mut data).map_err(io)?;
        let expected = 16 * blk * (h.n_rho + h.atomic.len());
        if data.len() != expected {
            return Err(Error::Serialization(format!("expected {expected} data bytes, found {}", data.len())));
        }
        let mut vals = data.chunks_exact(16).map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        });
        let values: Vec<Complex64> = vals.by_ref().take(blk * h.n_rho).collect();
        let atoms = h
            .atomic
            .iter()
            .map(|a| Atom { rho: a.rho, order: a.order, matrix: vals.by_ref().take(blk).collect() })
            .collect();
        let k = RhoKernel {
            rho: h.rho,
            out_cloud: h.out_cloud,
            in_cloud: h.in_cloud,
            values,
            atoms,
            truncation_mass: h.truncation_mass,
        };
        k.check_finite()?;
        Ok(k)
    }
}

/// Stopping size of a Neumann term.
pub const NEUMANN_TOL: f64 = 1e-10;

#[derive(Serialize, Deserialize)]
struct AtomHeader {
    rho: f64,
    order: u32,
}

#[derive(Serialize, Deserialize)]
struct Header {
    rho_max: f64,
    n_rho: usize,
    rho: RhoGrid,
    out_cloud: PointCloud,
    in_cloud: PointCloud,
    atomic: Vec<AtomHeader>,
    truncation_mass: f64,
}

/// Sampled transforms `T-hat(lambda)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HatKernel {
    pub lambdas: Vec<f64>,
    pub matrices: Vec<Vec<Complex64>>,
    pub rows: usize,
    pub cols: usize,
}

/// Pointwise composition `a(lambda) diag(w) b(lambda)` of two transforms.
pub fn hat_compose(a: &[Complex64], w: &[f64], b: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![ZERO; rows * cols];
    weighted_matmul(a, w, b, rows, cols, &mut out);
    out
}

fn abs_sum(m: &[Complex64]) -> f64 {
    m.iter().map(|v| v.norm()).sum()
}

/// Mass of the density beyond `rho >= from`.
fn tail_mass(values: &[Complex64], blk: usize, n: usize, h: f64, from: f64) -> f64 {
    (0..n)
        .filter(|&k| k as f64 * h > from + 0.5 * h)
        .map(|k| h * abs_sum(&values[k * blk..(k + 1) * blk]))
        .sum()
}

/// `d^order/drho^order` of `S(rho - a)` on the uniform grid. Integer shifts are
/// exact; fractional ones interpolate linearly. Derivatives use centred differences.
fn shift_density(values: &[Complex64], blk: usize, n: usize, h: f64, a: f64, order: u32) -> Vec<Complex64> {
    let mut cur = values.to_vec();
    for _ in 0..order {
        let mut d = vec![ZERO; cur.len()];
        for k in 0..n {
            let (lo, hi, den) = if n == 1 {
                (0, 0, 1.0)
            } else if k == 0 {
                (0, 1, h)
            } else if k == n - 1 {
                (n - 2, n - 1, h)
            } else {
                (k - 1, k + 1, 2.0 * h)
            };
            for e in 0..blk {
                d[k * blk + e] = (cur[hi * blk + e] - cur[lo * blk + e]) / den;
            }
        }
        cur = d;
    }
    let q = a / h;
    let base = q.floor();
    let frac = q - base;
    let base = base as isize;
    let mut out = vec![ZERO; cur.len()];
    let at = |j: isize, e: usize| -> Complex64 {
        if j < 0 || j as usize >= n {
            ZERO
        } else {
            cur[j as usize * blk + e]
        }
    };
    for k in 0..n {
        let j = k as isize - base;
        for e in 0..blk {
            out[k * blk + e] = if frac.abs() < 1e-9 {
                at(j, e)
            } else if (1.0 - frac).abs() < 1e-9 {
                at(j - 1, e)
            } else {
                at(j, e) * (1.0 - frac) + at(j - 1, e) * frac
            };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> PointCloud {
        PointCloud::new(vec![[0.0; 3], [1.0, 0.0, 0.0]], vec![0.5, 0.25]).unwrap()
    }

    #[test]
    fn identity_is_a_unit() {
        let g = RhoGrid::uniform(6, 0.5);
        let mut s = RhoKernel::zeros(g.clone(), cloud(), cloud());
        for (i, v) in s.values.iter_mut().enumerate() {
            *v = Complex64::new(i as f64, 1.0);
        }
        let id = RhoKernel::identity(g, cloud());
        let left = id.compose(&s).unwrap();
        let right = s.compose(&id).unwrap();
        for ((a, b), c) in left.values.iter().zip(&right.values).zip(&s.values) {
            assert!((a - c).norm() < 1e-14 && (b - c).norm() < 1e-14);
        }
    }

    #[test]
    fn mismatched_clouds_are_rejected() {
        let g = RhoGrid::uniform(4, 1.0);
        let a = RhoKernel::zeros(g.clone(), cloud(), cloud());
        let b = RhoKernel::zeros(g, PointCloud::single([0.0; 3]), cloud());
        assert!(matches!(a.compose(&b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn unsupported_norm_pair() {
        let k = RhoKernel::zeros(RhoGrid::uniform(2, 1.0), cloud(), cloud());
        assert!(matches!(k.u_norm(Space::Linf, Space::K), Err(Error::UnsupportedPair(..))));
        assert_eq!(k.u_norm(Space::L1, Space::Linf).unwrap(), 0.0);
    }
}
