//! Kernels `T(rho, x, z)` of the resolvent products, assembled on the
//! ellipsoids `|x - y| + |y - z| = rho`.
//!
//! Each product has the form `(1/16 pi^2) int e^{i lambda rho} sum_k s^k c_k(y) dy`
//! with `s = -i lambda`. Writing `C_k(rho) = int c_k J dt dphi` over the
//! surface, the factor `s^k` becomes `d^k/drho^k` after integration by parts, so
//! the `rho`-kernel is `(C_0 + C_1' + C_2'') / (128 pi^2)` plus boundary atoms
//! at the degenerate ellipsoid `rho = r`: `C_1 + C_2'` of order zero and `C_2`
//! of order one.

use super::{Atom, PointCloud, RhoGrid, RhoKernel};
use crate::ellipsoid::{jet_dot, map_unchecked, EllipsoidFrame, Jet2, DEGENERATE_BAND};
use crate::error::{Error, Result};
use crate::norms::{NormKind, NormReport};
use crate::potential::{PotentialSpec, Vec3};
use crate::quad::gauss_legendre;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelPart {
    T1,
    T2,
    T3,
    T4,
    T,
    #[serde(rename = "TTILDE")]
    TTilde,
    T11,
    T12,
    #[serde(rename = "TTILDE1")]
    TTilde1,
    #[serde(rename = "TTILDE2")]
    TTilde2,
}

impl KernelPart {
    pub fn name(self) -> &'static str {
        match self {
            KernelPart::T1 => "T1",
            KernelPart::T2 => "T2",
            KernelPart::T3 => "T3",
            KernelPart::T4 => "T4",
            KernelPart::T => "T",
            KernelPart::TTilde => "TTILDE",
            KernelPart::T11 => "T11",
            KernelPart::T12 => "T12",
            KernelPart::TTilde1 => "TTILDE1",
            KernelPart::TTilde2 => "TTILDE2",
        }
    }

    pub fn is_dlambda(self) -> bool {
        matches!(self, KernelPart::T11 | KernelPart::T12 | KernelPart::TTilde1 | KernelPart::TTilde2)
    }

    /// Derivative orders of `A` and `V` along the flow, and the highest power of `s`.
    fn orders(self) -> (Option<usize>, Option<usize>, usize) {
        match self {
            KernelPart::T1 | KernelPart::T11 | KernelPart::T12 => (Some(2), None, 2),
            KernelPart::TTilde | KernelPart::T2 | KernelPart::TTilde1 | KernelPart::TTilde2 => {
                (Some(1), None, 1)
            }
            KernelPart::T3 => (None, Some(1), 1),
            KernelPart::T4 => (None, Some(0), 0),
            KernelPart::T => (Some(2), Some(1), 2),
        }
    }
}

/// Quadrature used for the surface moments `C_k(rho)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssemblyRule {
    pub n_phi: usize,
    /// Gauss-Legendre nodes per panel, in `t` and in `rho`.
    pub nodes: usize,
    /// Uniform `t`-panels per unit of `rho`.
    pub t_panels_per_unit: f64,
    /// The `t`-panels next to the poles are graded down to `(rho - r) / (r end_ratio)`.
    pub end_ratio: f64,
    /// Width of the uniform `rho` panels beyond the graded layer.
    pub rho_panel: f64,
}

impl Default for AssemblyRule {
    fn default() -> Self {
        Self { n_phi: 64, nodes: 8, t_panels_per_unit: 1.0, end_ratio: 16.0, rho_panel: 0.25 }
    }
}

impl AssemblyRule {
    /// Cheaper rule for many point pairs.
    pub fn coarse() -> Self {
        Self { n_phi: 16, nodes: 4, t_panels_per_unit: 0.5, end_ratio: 4.0, rho_panel: 0.75 }
    }
}

/// Start of the assembled range, just above the degenerate ellipsoid.
pub fn rho_start(frame: &EllipsoidFrame) -> f64 {
    frame.r * (1.0 + DEGENERATE_BAND)
}

/// Gauss-Legendre panels on `(rho_start, rho_max]`, geometric in `rho - r` near
/// the degenerate ellipsoid where the moments vary like `log(rho - r)`.
pub fn assembly_rho_grid(frame: &EllipsoidFrame, rho_max: f64, rule: &AssemblyRule) -> Result<RhoGrid> {
    if frame.r <= 0.0 {
        return Err(Error::DegenerateEllipsoid { rho: 0.0, r: 0.0 });
    }
    let start = rho_start(frame);
    if rho_max <= start {
        return Err(Error::InvalidGrid(format!("rho_max {rho_max} <= r {}", frame.r)));
    }
    let r = frame.r;
    let top = rho_max - r;
    let mut edges = vec![start - r];
    while edges.last().unwrap() * 2.0 < rule.rho_panel.min(top) {
        let e = edges.last().unwrap() * 2.0;
        edges.push(e);
    }
    let last = *edges.last().unwrap();
    let n_uniform = ((top - last) / rule.rho_panel).ceil().max(1.0) as usize;
    for k in 1..=n_uniform {
        edges.push(last + (top - last) * k as f64 / n_uniform as f64);
    }
    let gl = gauss_legendre(rule.nodes);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        for (x, wt) in &gl {
            nodes.push(r + 0.5 * (a + b) + 0.5 * (b - a) * x);
            weights.push(0.5 * (b - a) * wt);
        }
    }
    RhoGrid::custom(nodes, weights)
}

/// Nodes and weights in `t = cos theta` at a given `rho`.
fn t_rule(rho: f64, r: f64, rule: &AssemblyRule, gl: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let nb = ((rho * rule.t_panels_per_unit).ceil() as usize).max(4);
    let width = 2.0 / nb as f64;
    let delta = ((rho - r) / (r * rule.end_ratio)).max(1e-15);
    // offsets from the pole inside the end panel
    let mut end = vec![0.0];
    let mut e = delta;
    while e < width {
        end.push(e);
        e *= 2.0;
    }
    end.push(width);
    let mut edges: Vec<f64> = end.iter().map(|u| -1.0 + u).collect();
    for k in 2..nb {
        edges.push(-1.0 + k as f64 * width);
    }
    edges.extend(end.iter().rev().map(|u| 1.0 - u));
    let mut out = Vec::with_capacity((edges.len() - 1) * gl.len());
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        for (x, wt) in gl {
            out.push((0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * wt));
        }
    }
    out
}

/// `[k][d]`: the `d`-th `rho`-derivative of `C_k`.
type Moments = [[Complex64; 3]; 3];

struct Fields<'a> {
    u: &'a PotentialSpec,
    a_sharp: Vec3,
    v_sharp: f64,
}

fn jet(a: [f64; 3]) -> Jet2 {
    Jet2::new(a[0], a[1], a[2])
}

fn moments(
    part: KernelPart,
    f: &Fields,
    frame: &EllipsoidFrame,
    rho: f64,
    rule: &AssemblyRule,
) -> Result<Moments> {
    let ts = t_rule(rho, frame.r, rule, &gauss_legendre(rule.nodes));
    let phis: Vec<[f64; 3]> = (0..rule.n_phi)
        .map(|j| {
            let p = 2.0 * PI * j as f64 / rule.n_phi as f64;
            [p, p.cos(), p.sin()]
        })
        .collect();
    let dphi = 2.0 * PI / rule.n_phi as f64;
    let (a_ord, v_ord, _) = part.orders();
    let i = Complex64::new(0.0, 1.0);
    let one = Complex64::new(1.0, 0.0);
    let x = frame.x;
    let z = frame.z;
    let ash = f.a_sharp.map(Jet2::constant);
    let mut m: Moments = [[Complex64::new(0.0, 0.0); 3]; 3];

    for &(t, wt) in &ts {
        let st = (1.0 - t * t).max(0.0).sqrt();
        let th = [t.acos(), t, st];
        for ph in &phis {
            let p = map_unchecked(frame, rho, th, *ph);
            let w = wt * dphi;
            let y = p.y_jet();
            let r1 = p.r1_jet();
            let r2 = p.r2_jet();
            let jt = p.jac_t_jet();
            let vr1 = [0, 1, 2].map(|c| Jet2::constant(x[c]) - y[c]);
            let vr2 = [0, 1, 2].map(|c| y[c] - Jet2::constant(z[c]));
            let mut add = |k: usize, c: Complex64, j: Jet2| {
                let j = j * jt;
                m[k][0] += c * (w * j.v);
                m[k][1] += c * (w * j.d1);
                m[k][2] += c * (w * j.d2);
            };
            let q = match a_ord {
                Some(o) => {
                    let mut a = [Jet2::default(); 3];
                    for (c, ac) in a.iter_mut().enumerate() {
                        *ac = jet(f.u.vector_flow_jet(c, p.world, p.v_world, p.acc_world, o)?);
                    }
                    jet_dot(&vr1, &a)
                }
                None => Jet2::default(),
            };
            let v = match v_ord {
                Some(o) => jet(f.u.scalar_flow_jet(p.world, p.v_world, p.acc_world, o)?),
                None => Jet2::default(),
            };
            let ps = jet_dot(&vr2, &ash);
            let i1 = r1.recip();
            let i2 = r2.recip();
            let p_ = q * ps;
            match part {
                KernelPart::T1 | KernelPart::T => {
                    add(0, one, p_ * i1.powi(3) * i2.powi(3));
                    add(1, one, p_ * i1.powi(2) * i2.powi(2) * (i1 + i2));
                    add(2, one, p_ * i1.powi(2) * i2.powi(2));
                    if part == KernelPart::T {
                        let vs = f.v_sharp;
                        add(0, -one * vs, q * i1.powi(3) * i2);
                        add(1, -one * vs, q * i1.powi(2) * i2);
                        let wv = v * ps;
                        add(0, -one, wv * i1 * i2.powi(3));
                        add(1, -one, wv * i1 * i2.powi(2));
                        add(0, one * vs, v * i1 * i2);
                    }
                }
                KernelPart::TTilde | KernelPart::T2 => {
                    let c = if part == KernelPart::T2 { -one * f.v_sharp } else { -one };
                    add(0, c, q * i1.powi(3) * i2);
                    add(1, c, q * i1.powi(2) * i2);
                }
                KernelPart::T3 => {
                    let wv = v * ps;
                    add(0, -one, wv * i1 * i2.powi(3));
                    add(1, -one, wv * i1 * i2.powi(2));
                }
                KernelPart::T4 => add(0, one * f.v_sharp, v * i1 * i2),
                KernelPart::T11 => {
                    add(1, i, p_ * i1 * i2.powi(3));
                    add(2, i, p_ * i1 * i2.powi(2));
                }
                KernelPart::T12 => {
                    add(1, i, p_ * i1.powi(3) * i2);
                    add(2, i, p_ * i1.powi(2) * i2);
                }
                KernelPart::TTilde1 => add(1, -i, q * i1 * i2),
                KernelPart::TTilde2 => {
                    add(0, -i, q * i1.powi(3));
                    add(1, -i, q * i1.powi(2));
                }
            }
        }
    }
    Ok(m)
}

const PREFACTOR: f64 = 1.0 / (128.0 * PI * PI);

fn check_fields(part: KernelPart, u: &PotentialSpec, u_sharp: &PotentialSpec) -> Result<()> {
    u.validate()?;
    u_sharp.validate()?;
    let (a_ord, v_ord, _) = part.orders();
    if let Some(o) = a_ord {
        if u.vector_order_available() < o {
            return Err(Error::UnsupportedDerivative(format!("{} needs {o} derivatives of A", part.name())));
        }
    }
    if let Some(o) = v_ord {
        if u.scalar_order_available() < o {
            return Err(Error::UnsupportedDerivative(format!("{} needs {o} derivatives of V", part.name())));
        }
    }
    Ok(())
}

/// The `rho`-kernel of `part` between the foci of `frame`, as a `1 x 1` kernel
/// from `z` to `x`. `u` supplies `A`, `V` at the intermediate point and
/// `u_sharp` supplies `A#`, `V#` at `z`.
pub fn assemble_t_hat_with(
    part: KernelPart,
    u: &PotentialSpec,
    u_sharp: &PotentialSpec,
    frame: &EllipsoidFrame,
    rho_grid: &RhoGrid,
    rule: &AssemblyRule,
) -> Result<RhoKernel> {
    if frame.r <= 0.0 {
        return Err(Error::DegenerateEllipsoid { rho: 0.0, r: 0.0 });
    }
    check_fields(part, u, u_sharp)?;
    let start = rho_start(frame);
    if rho_grid.nodes.first().is_some_and(|&n| n <= start) {
        return Err(Error::DegenerateEllipsoid { rho: rho_grid.nodes[0], r: frame.r });
    }
    let fields = Fields { u, a_sharp: u_sharp.vector_value(frame.z), v_sharp: u_sharp.scalar_value(frame.z) };
    let mut kernel = RhoKernel::zeros(rho_grid.clone(), PointCloud::single(frame.x), PointCloud::single(frame.z));
    if u.is_zero() {
        return Ok(kernel);
    }
    let ms: Vec<Moments> = rho_grid
        .nodes
        .par_iter()
        .map(|&rho| moments(part, &fields, frame, rho, rule))
        .collect::<Result<_>>()?;
    for (v, m) in kernel.values.iter_mut().zip(&ms) {
        *v = (m[0][0] + m[1][1] + m[2][2]) * PREFACTOR;
    }
    let (_, _, top) = part.orders();
    if top >= 1 {
        let m = moments(part, &fields, frame, start, rule)?;
        kernel.push_atom(Atom { rho: start, order: 0, matrix: vec![(m[1][0] + m[2][1]) * PREFACTOR] });
        if top >= 2 {
            kernel.push_atom(Atom { rho: start, order: 1, matrix: vec![m[2][0] * PREFACTOR] });
        }
    }
    Ok(kernel)
}

pub fn assemble_t_hat(
    part: KernelPart,
    u: &PotentialSpec,
    u_sharp: &PotentialSpec,
    frame: &EllipsoidFrame,
    rho_grid: &RhoGrid,
) -> Result<RhoKernel> {
    assemble_t_hat_with(part, u, u_sharp, frame, rho_grid, &AssemblyRule::default())
}

/// The `lambda`-derivative kernels `T11`, `T12`, `TTILDE1`, `TTILDE2`.
pub fn assemble_dlambda_t(
    part: KernelPart,
    u: &PotentialSpec,
    u_sharp: &PotentialSpec,
    frame: &EllipsoidFrame,
    rho_grid: &RhoGrid,
) -> Result<RhoKernel> {
    if !part.is_dlambda() {
        return Err(Error::Precondition(format!("{} is not a lambda-derivative part", part.name())));
    }
    assemble_t_hat(part, u, u_sharp, frame, rho_grid)
}

/// `int |T(rho, x, z)| drho` plus the order-zero atoms. Derivative atoms are left
/// out: they are not measures.
pub fn pair_variation(
    part: KernelPart,
    u: &PotentialSpec,
    u_sharp: &PotentialSpec,
    x: Vec3,
    z: Vec3,
    rho_max: f64,
    rule: &AssemblyRule,
) -> Result<f64> {
    let frame = EllipsoidFrame::new(x, z);
    let grid = assembly_rho_grid(&frame, rho_max, rule)?;
    let k = assemble_t_hat_with(part, u, u_sharp, &frame, &grid, rule)?;
    let ac: f64 = k.values.iter().zip(&grid.weights).map(|(v, w)| w * v.norm()).sum();
    let atoms: f64 = k.atoms.iter().filter(|a| a.order == 0).map(|a| a.matrix[0].norm()).sum();
    Ok(ac + atoms)
}

/// `sup_x sum_z w_z int |T1(rho, x, z)| drho` over the clouds, the
/// `L^inf -> L^inf` size of the assembled `T1`. Coincident pairs are skipped.
pub fn bilinear_aggregate(
    a: &PotentialSpec,
    xs: &PointCloud,
    zs: &PointCloud,
    rho_max: f64,
    rule: &AssemblyRule,
) -> Result<f64> {
    let mut best: f64 = 0.0;
    for &x in &xs.points {
        let row: Vec<f64> = zs
            .points
            .par_iter()
            .zip(&zs.weights)
            .map(|(&z, &w)| {
                let d = ((x[0] - z[0]).powi(2) + (x[1] - z[1]).powi(2) + (x[2] - z[2]).powi(2)).sqrt();
                if d < 1e-12 {
                    return Ok(0.0);
                }
                Ok(w * pair_variation(KernelPart::T1, a, a, x, z, rho_max, rule)?)
            })
            .collect::<Result<_>>()?;
        best = best.max(row.iter().sum());
    }
    Ok(best)
}

/// The seven products bounding `T1`, from the norm reports of `A` and `A#`.
pub fn bil_bound(a: &NormReport, a_sharp: &NormReport) -> Result<f64> {
    use NormKind::{K2Log2, KLog, LLogL, L1};
    let s_k2 = a_sharp.get("A", K2Log2)?;
    let s_kl = a_sharp.get("A", KLog)?;
    let terms = [
        a.get("A", K2Log2)? * s_k2,
        a.get("gradA", K2Log2)? * s_kl,
        a.get("gradA", KLog)? * s_k2,
        a.get("grad2A", L1)? * s_k2,
        a.get("grad2A", K2Log2)? * s_kl,
        a.get("grad3A", LLogL)? * s_kl,
        a.get("grad4A", LLogL)? * s_k2,
    ];
    let total: f64 = terms.iter().sum();
    if !total.is_finite() {
        return Err(Error::MissingNorm("non-finite constituent norm".into()));
    }
    Ok(total)
}
