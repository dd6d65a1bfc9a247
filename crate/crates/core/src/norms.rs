//! Function-space norms on grid fields: Kato-type suprema, Lorentz norms by
//! layer cake, the L log L Luxemburg norm, and the single-pole K* surrogate.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{derivative_magnitude, Fft3, Grid3D, ScalarField, Source};
use crate::potential::{PotentialSpec, Vec3};
use crate::quad::gauss_legendre;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NormKind {
    #[serde(rename = "K")]
    K,
    #[serde(rename = "K_LOG")]
    KLog,
    #[serde(rename = "K2")]
    K2,
    #[serde(rename = "K2_LOG")]
    K2Log,
    #[serde(rename = "K2_LOG2")]
    K2Log2,
    #[serde(rename = "L_LOG_L")]
    LLogL,
    #[serde(rename = "L1")]
    L1,
    #[serde(rename = "L32_1")]
    L32_1,
    #[serde(rename = "L3_1")]
    L3_1,
    #[serde(rename = "W21_DOT")]
    W21Dot,
    #[serde(rename = "KSTAR_SURR")]
    KStarSurr,
}

impl NormKind {
    pub const ALL: [NormKind; 11] = [
        NormKind::K,
        NormKind::KLog,
        NormKind::K2,
        NormKind::K2Log,
        NormKind::K2Log2,
        NormKind::LLogL,
        NormKind::L1,
        NormKind::L32_1,
        NormKind::L3_1,
        NormKind::W21Dot,
        NormKind::KStarSurr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NormKind::K => "K",
            NormKind::KLog => "K_LOG",
            NormKind::K2 => "K2",
            NormKind::K2Log => "K2_LOG",
            NormKind::K2Log2 => "K2_LOG2",
            NormKind::LLogL => "L_LOG_L",
            NormKind::L1 => "L1",
            NormKind::L32_1 => "L32_1",
            NormKind::L3_1 => "L3_1",
            NormKind::W21Dot => "W21_DOT",
            NormKind::KStarSurr => "KSTAR_SURR",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == s)
    }

    fn kato_weight(self) -> Option<KatoWeight> {
        match self {
            NormKind::K => Some(KatoWeight::K),
            NormKind::KLog => Some(KatoWeight::KLog),
            NormKind::K2 => Some(KatoWeight::K2),
            NormKind::K2Log => Some(KatoWeight::K2Log),
            NormKind::K2Log2 => Some(KatoWeight::K2Log2),
            _ => None,
        }
    }
}

/// `<log t> = sqrt(1 + log^2 t)`.
pub fn jlog(t: f64) -> f64 {
    let l = t.ln();
    (1.0 + l * l).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KatoWeight {
    K,
    KLog,
    K2,
    K2Log,
    K2Log2,
}

impl KatoWeight {
    #[inline]
    pub fn eval(self, d: f64) -> f64 {
        match self {
            KatoWeight::K => 1.0 / d,
            KatoWeight::KLog => jlog(d) / d,
            KatoWeight::K2 => 1.0 / (d * d),
            KatoWeight::K2Log => jlog(d) / (d * d),
            KatoWeight::K2Log2 => {
                let j = jlog(d);
                j * j / (d * d)
            }
        }
    }

    /// `r^2 w(r)`, the radial integrand in spherical coordinates.
    #[inline]
    fn radial(self, r: f64) -> f64 {
        match self {
            KatoWeight::K => r,
            KatoWeight::KLog => r * jlog(r),
            KatoWeight::K2 => 1.0,
            KatoWeight::K2Log => jlog(r),
            KatoWeight::K2Log2 => {
                let j = jlog(r);
                j * j
            }
        }
    }
}

/// Trilinear interpolation of a real grid array (zero outside the box).
fn interp(grid: &Grid3D, vals: &[f64], x: Vec3) -> f64 {
    let h = grid.h();
    let n = grid.n as isize;
    let mut base = [0isize; 3];
    let mut frac = [0.0; 3];
    for a in 0..3 {
        let t = (x[a] + 0.5 * grid.l) / h;
        let f = t.floor();
        base[a] = f as isize;
        frac[a] = t - f;
    }
    let mut acc = 0.0;
    for di in 0..2 {
        let i = base[0] + di;
        if i < 0 || i >= n {
            continue;
        }
        let wi = if di == 0 { 1.0 - frac[0] } else { frac[0] };
        for dj in 0..2 {
            let j = base[1] + dj;
            if j < 0 || j >= n {
                continue;
            }
            let wj = if dj == 0 { 1.0 - frac[1] } else { frac[1] };
            for dk in 0..2 {
                let k = base[2] + dk;
                if k < 0 || k >= n {
                    continue;
                }
                let wk = if dk == 0 { 1.0 - frac[2] } else { frac[2] };
                acc += wi * wj * wk * vals[grid.index(i as usize, j as usize, k as usize)];
            }
        }
    }
    acc
}

struct ShellRule {
    /// (radius, weight) for the interpolated part of the shell
    radial: Vec<(f64, f64)>,
    dirs: Vec<(Vec3, f64)>,
    /// `int_0^eps r^2 w(r) dr * 4 pi`, multiplied by the centre value
    core: f64,
    outer: f64,
}

impl ShellRule {
    fn new(weight: KatoWeight, h: f64) -> Self {
        let outer = 2.0 * h;
        let eps = 0.25 * h;
        let gl = gauss_legendre(6);
        let mut radial = Vec::new();
        // geometric panels on [eps, 2h]
        let mut a = eps;
        while a < outer - 1e-15 {
            let b = (2.0 * a).min(outer);
            for &(t, w) in &gl {
                let r = 0.5 * (a + b) + 0.5 * (b - a) * t;
                radial.push((r, 0.5 * (b - a) * w * weight.radial(r)));
            }
            a = b;
        }
        // graded panels on [0, eps] for the centre value
        let mut core = 0.0;
        let mut b = eps;
        for _ in 0..40 {
            let a = 0.5 * b;
            for &(t, w) in &gl {
                let r = 0.5 * (a + b) + 0.5 * (b - a) * t;
                core += 0.5 * (b - a) * w * weight.radial(r);
            }
            b = a;
        }
        core *= 4.0 * std::f64::consts::PI;
        let gt = gauss_legendre(8);
        let nphi = 16;
        let mut dirs = Vec::new();
        for &(ct, wt) in &gt {
            let st = (1.0 - ct * ct).sqrt();
            for p in 0..nphi {
                let phi = 2.0 * std::f64::consts::PI * (p as f64 + 0.5) / nphi as f64;
                dirs.push((
                    [st * phi.cos(), st * phi.sin(), ct],
                    wt * 2.0 * std::f64::consts::PI / nphi as f64,
                ));
            }
        }
        Self { radial, dirs, core, outer }
    }

    fn integrate(&self, grid: &Grid3D, vals: &[f64], y: Vec3) -> f64 {
        let mut acc = self.core * interp(grid, vals, y);
        for &(r, wr) in &self.radial {
            let mut ang = 0.0;
            for &(d, wd) in &self.dirs {
                ang += wd * interp(grid, vals, [y[0] + r * d[0], y[1] + r * d[1], y[2] + r * d[2]]);
            }
            acc += wr * ang;
        }
        acc
    }
}

/// Support list and candidate region of a nonnegative grid array.
struct Support {
    entries: Vec<(u32, f64)>,
    lo: [usize; 3],
    hi: [usize; 3],
}

impl Support {
    fn new(grid: &Grid3D, vals: &[f64]) -> Self {
        let max = vals.iter().fold(0.0f64, |m, &v| m.max(v));
        let tiny = max * 1e-15;
        let mut entries = Vec::new();
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let box_tol = max * 1e-8;
        for (idx, &v) in vals.iter().enumerate() {
            if v > tiny {
                entries.push((idx as u32, v));
            }
            if v > box_tol {
                let (i, j, k) = grid.unindex(idx);
                for (a, c) in [i, j, k].into_iter().enumerate() {
                    lo[a] = lo[a].min(c);
                    hi[a] = hi[a].max(c);
                }
            }
        }
        if entries.is_empty() {
            lo = [0; 3];
            hi = [0; 3];
        }
        Self { entries, lo, hi }
    }
}

/// Sup over `y` of `int |f(x)| w(|x - y|) dx`.
pub struct KatoSearch<'a> {
    grid: Grid3D,
    vals: &'a [f64],
    support: Support,
    weight: KatoWeight,
    table: Vec<f64>,
    shell: ShellRule,
}

impl<'a> KatoSearch<'a> {
    pub fn new(grid: Grid3D, vals: &'a [f64], weight: KatoWeight) -> Self {
        let n = grid.n;
        let h = grid.h();
        let table = (0..n * n * n)
            .into_par_iter()
            .map(|idx| {
                let (a, b, c) = grid.unindex(idx);
                let o2 = a * a + b * b + c * c;
                if o2 < 4 {
                    0.0
                } else {
                    weight.eval(h * (o2 as f64).sqrt())
                }
            })
            .collect();
        Self {
            grid,
            vals,
            support: Support::new(&grid, vals),
            weight,
            table,
            shell: ShellRule::new(weight, h),
        }
    }

    /// Integral at a grid node.
    pub fn at_node(&self, node: [usize; 3]) -> f64 {
        let g = &self.grid;
        let n = g.n;
        let mut acc = 0.0;
        for &(idx, v) in &self.support.entries {
            let (i, j, k) = g.unindex(idx as usize);
            let a = i.abs_diff(node[0]);
            let b = j.abs_diff(node[1]);
            let c = k.abs_diff(node[2]);
            acc += v * self.table[(a * n + b) * n + c];
        }
        let y = [g.coord(node[0]), g.coord(node[1]), g.coord(node[2])];
        acc * g.cell_volume() + self.shell.integrate(g, self.vals, y)
    }

    /// Integral at an arbitrary point.
    pub fn at_point(&self, y: Vec3) -> f64 {
        let g = &self.grid;
        let outer = self.shell.outer;
        let acc: f64 = self
            .support
            .entries
            .par_iter()
            .map(|&(idx, v)| {
                let x = g.point(idx as usize);
                let d = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2))
                    .sqrt();
                if d < outer {
                    0.0
                } else {
                    v * self.weight.eval(d)
                }
            })
            .sum();
        acc * g.cell_volume() + self.shell.integrate(g, self.vals, y)
    }

    /// Coarse lattice with the given stride, local lattice polish, then an
    /// off-grid compass search.
    pub fn sup(&self, stride: usize) -> (f64, Vec3) {
        if self.support.entries.is_empty() {
            return (0.0, [0.0; 3]);
        }
        let g = &self.grid;
        let (lo, hi) = (self.support.lo, self.support.hi);
        let axis = |a: usize| -> Vec<usize> {
            let mut v: Vec<usize> = (lo[a]..=hi[a]).step_by(stride.max(1)).collect();
            if *v.last().unwrap() != hi[a] {
                v.push(hi[a]);
            }
            v
        };
        let (ax, ay, az) = (axis(0), axis(1), axis(2));
        let mut cands = Vec::with_capacity(ax.len() * ay.len() * az.len());
        for &i in &ax {
            for &j in &ay {
                for &k in &az {
                    cands.push([i, j, k]);
                }
            }
        }
        let mut scored: Vec<([usize; 3], f64)> =
            cands.par_iter().map(|&c| (c, self.at_node(c))).collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        // polish the lattice around the leading coarse candidates, since the
        // integral can have several local maxima
        let reach = stride.max(1) as isize;
        let mut local = Vec::new();
        for &(c0, _) in scored.iter().take(POLISH_SEEDS) {
            for di in -reach..=reach {
                for dj in -reach..=reach {
                    for dk in -reach..=reach {
                        let c = [c0[0] as isize + di, c0[1] as isize + dj, c0[2] as isize + dk];
                        if c.iter().all(|&v| v >= 0 && v < g.n as isize) {
                            local.push([c[0] as usize, c[1] as usize, c[2] as usize]);
                        }
                    }
                }
            }
        }
        local.sort_unstable();
        local.dedup();
        let (node, mut val) = local
            .par_iter()
            .map(|&c| (c, self.at_node(c)))
            .reduce(|| ([0; 3], f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
        let mut y = [g.coord(node[0]), g.coord(node[1]), g.coord(node[2])];
        let mut step = 0.5 * g.h();
        while step > g.h() / 16.0 {
            let mut improved = false;
            for a in 0..3 {
                for s in [-1.0, 1.0] {
                    let mut t = y;
                    t[a] += s * step;
                    let v = self.at_point(t);
                    if v > val {
                        val = v;
                        y = t;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        (val, y)
    }
}

/// Layer-cake Lorentz norm `p int_0^inf mu(s)^{1/p} ds`.
pub fn lorentz_p1(grid: &Grid3D, vals: &[f64], p: f64) -> f64 {
    let mut sorted: Vec<f64> = vals.iter().copied().filter(|&v| v > 0.0).collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let cell = grid.cell_volume();
    let mut acc = 0.0;
    for k in 0..sorted.len() {
        let next = if k + 1 < sorted.len() { sorted[k + 1] } else { 0.0 };
        acc += (sorted[k] - next) * ((k + 1) as f64 * cell).powf(1.0 / p);
    }
    p * acc
}

/// Luxemburg-type L log L norm `||f||_1 + c*`, where `c*` is the root of
/// `c + ||f||_1 log c = int |f| log |f| - ||f||_1`. Homogeneous of degree one.
pub fn llogl(grid: &Grid3D, vals: &[f64]) -> f64 {
    let cell = grid.cell_volume();
    llogl_weighted(vals.iter().map(|&v| (v, cell)))
}

/// [`llogl`] for samples `(|f|, quadrature weight)`.
pub fn llogl_weighted(samples: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut l1, mut s) = (0.0, 0.0);
    for (v, w) in samples {
        if v > 0.0 {
            l1 += w * v;
            s += w * v * v.ln();
        }
    }
    if l1 == 0.0 {
        return 0.0;
    }
    let target = s - l1;
    // g(u) = e^u + l1 u - target, increasing in u = log c
    let g = |u: f64| u.exp() + l1 * u - target;
    let (mut a, mut b) = (-1.0, 1.0);
    while g(a) > 0.0 {
        a *= 2.0;
    }
    while g(b) < 0.0 {
        b *= 2.0;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if g(m) > 0.0 {
            b = m;
        } else {
            a = m;
        }
        if b - a < 1e-14 * (1.0 + a.abs()) {
            break;
        }
    }
    l1 + (0.5 * (a + b)).exp()
}

/// `min_{x0} sup_x |f(x)| |x - x0|` over a lattice of poles with local polish.
pub fn kstar_surrogate(grid: &Grid3D, vals: &[f64], stride: usize) -> f64 {
    let support = Support::new(grid, vals);
    if support.entries.is_empty() {
        return 0.0;
    }
    let eval = |y: Vec3| -> f64 {
        support
            .entries
            .iter()
            .map(|&(idx, v)| {
                let x = grid.point(idx as usize);
                v * ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt()
            })
            .fold(0.0, f64::max)
    };
    let mut cands = Vec::new();
    for i in (support.lo[0]..=support.hi[0]).step_by(stride) {
        for j in (support.lo[1]..=support.hi[1]).step_by(stride) {
            for k in (support.lo[2]..=support.hi[2]).step_by(stride) {
                cands.push([grid.coord(i), grid.coord(j), grid.coord(k)]);
            }
        }
    }
    let (mut y, mut val) = cands
        .par_iter()
        .map(|&c| (c, eval(c)))
        .reduce(|| ([0.0; 3], f64::MAX), |a, b| if b.1 < a.1 { b } else { a });
    let mut step = stride as f64 * grid.h();
    while step > grid.h() / 16.0 {
        let mut improved = false;
        for a in 0..3 {
            for s in [-1.0, 1.0] {
                let mut t = y;
                t[a] += s * step;
                let v = eval(t);
                if v < val {
                    val = v;
                    y = t;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    val
}

/// `int |D^2 f|` with spectral second derivatives.
fn w21_dot(field: &ScalarField) -> f64 {
    let g = field.grid;
    let fft = Fft3::new(g.n);
    let mut hat = field.values.clone();
    fft.forward(&mut hat);
    let ks: Vec<f64> = (0..g.n).map(|i| if i == g.n / 2 { 0.0 } else { g.wavenumber(i) }).collect();
    let mut mag2 = vec![0.0; g.len()];
    for a in 0..3 {
        for b in a..3 {
            let mut d = hat.clone();
            d.par_iter_mut().enumerate().for_each(|(idx, v)| {
                let (i, j, k) = g.unindex(idx);
                let kv = [ks[i], ks[j], ks[k]];
                *v *= -kv[a] * kv[b];
            });
            fft.inverse(&mut d);
            let mult = if a == b { 1.0 } else { 2.0 };
            for (m, v) in mag2.iter_mut().zip(&d) {
                *m += mult * v.norm_sqr();
            }
        }
    }
    mag2.iter().map(|m| m.sqrt()).sum::<f64>() * g.cell_volume()
}

/// Coarse candidates whose neighbourhoods are polished.
const POLISH_SEEDS: usize = 6;

/// Default candidate stride for the Kato sup search.
pub const DEFAULT_STRIDE: usize = 4;

/// Norm of a grid field.
pub fn space_norm(field: &ScalarField, kind: NormKind) -> Result<f64> {
    space_norm_with_stride(field, kind, DEFAULT_STRIDE)
}

pub fn space_norm_with_stride(field: &ScalarField, kind: NormKind, stride: usize) -> Result<f64> {
    field.check_finite()?;
    let g = field.grid;
    let vals = field.abs_values();
    Ok(match kind {
        k if k.kato_weight().is_some() => {
            KatoSearch::new(g, &vals, k.kato_weight().unwrap()).sup(stride).0
        }
        NormKind::L1 => vals.iter().sum::<f64>() * g.cell_volume(),
        NormKind::LLogL => llogl(&g, &vals),
        NormKind::L32_1 => lorentz_p1(&g, &vals, 1.5),
        NormKind::L3_1 => lorentz_p1(&g, &vals, 3.0),
        NormKind::W21Dot => w21_dot(field),
        NormKind::KStarSurr => kstar_surrogate(&g, &vals, stride.max(1)),
        _ => unreachable!(),
    })
}

/// Norms entering the spaces `X` (for `A`) and `Y` (for `V`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    /// Keys are `<field>:<kind>`, e.g. `gradA:K_LOG`.
    pub values: BTreeMap<String, f64>,
    pub member_x: bool,
    pub member_y: bool,
}

impl NormReport {
    pub fn get(&self, field: &str, kind: NormKind) -> Result<f64> {
        let key = format!("{field}:{}", kind.name());
        self.values.get(&key).copied().ok_or(Error::MissingNorm(key))
    }

    fn put(&mut self, field: &str, kind: NormKind, v: f64) {
        self.values.insert(format!("{field}:{}", kind.name()), v);
    }
}

/// Requirements of `X`: field label, derivative order, kinds.
pub const X_REQUIREMENTS: [(&str, usize, &[NormKind]); 5] = [
    ("A", 0, &[NormKind::K2Log2, NormKind::KLog, NormKind::L3_1, NormKind::L32_1]),
    ("gradA", 1, &[NormKind::KLog, NormKind::K2Log2, NormKind::L32_1]),
    ("grad2A", 2, &[NormKind::K2Log2, NormKind::L1]),
    ("grad3A", 3, &[NormKind::LLogL]),
    ("grad4A", 4, &[NormKind::LLogL]),
];

pub const Y_REQUIREMENTS: [NormKind; 3] = [NormKind::W21Dot, NormKind::KLog, NormKind::L32_1];

/// Norms of `A` needed by `X` (plus `K`, `K2`, `K2_LOG` of `A` and `K` of `gradA`).
pub fn vector_norms(a: &PotentialSpec, grid: Grid3D, report: &mut NormReport) -> Result<()> {
    for (label, order, kinds) in X_REQUIREMENTS {
        let f = derivative_magnitude(a, grid, Source::Vector, order)?;
        let mut all: Vec<NormKind> = kinds.to_vec();
        if order == 0 {
            all.extend([NormKind::K, NormKind::K2, NormKind::K2Log]);
        }
        if order == 1 {
            all.push(NormKind::K);
        }
        for kind in all {
            report.put(label, kind, space_norm(&f, kind)?);
        }
    }
    Ok(())
}

pub fn membership_report(a: &PotentialSpec, v: &PotentialSpec, grid: Grid3D) -> Result<NormReport> {
    if a.vector_order_available() < 4 {
        return Err(Error::UnsupportedDerivative("X needs four derivatives of A".into()));
    }
    if v.scalar_order_available() < 2 {
        return Err(Error::UnsupportedDerivative("Y needs two derivatives of V".into()));
    }
    let mut report = NormReport::default();
    vector_norms(a, grid, &mut report)?;
    let vf = derivative_magnitude(v, grid, Source::Scalar, 0)?;
    for kind in [NormKind::KLog, NormKind::L32_1] {
        report.put("V", kind, space_norm(&vf, kind)?);
    }
    let hess = derivative_magnitude(v, grid, Source::Scalar, 2)?;
    report.put("V", NormKind::W21Dot, space_norm(&hess, NormKind::L1)?);
    let finite = |label: &str, kinds: &[NormKind], r: &NormReport| {
        kinds.iter().all(|&k| r.get(label, k).map(f64::is_finite).unwrap_or(false))
    };
    report.member_x = X_REQUIREMENTS.iter().all(|(l, _, ks)| finite(l, ks, &report));
    report.member_y = finite("V", &Y_REQUIREMENTS, &report);
    Ok(report)
}

/// `(||A||_K2, ||grad A||_K, ||grad^2 A||_L1)`, expected non-decreasing.
pub fn norm_chain_check(a: &PotentialSpec, grid: Grid3D) -> Result<(f64, f64, f64)> {
    let f0 = derivative_magnitude(a, grid, Source::Vector, 0)?;
    let f1 = derivative_magnitude(a, grid, Source::Vector, 1)?;
    let f2 = derivative_magnitude(a, grid, Source::Vector, 2)?;
    Ok((
        space_norm(&f0, NormKind::K2)?,
        space_norm(&f1, NormKind::K)?,
        space_norm(&f2, NormKind::L1)?,
    ))
}
