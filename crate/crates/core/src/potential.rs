//! Analytic potentials: sums of radial bumps with exact partial derivatives.
//!
//! A bump is `amplitude * phi(|x - c|^2 / w^2)`. Derivatives follow from the
//! chain rule on the quadratic argument: a multi-index is split into blocks of
//! size one (factor `2 u_i / w^2`) or two equal indices (factor `2 / w^2`), and a
//! partition with `k` blocks contributes `phi^(k)(q)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Highest derivative order the smooth kinds provide.
pub const MAX_DERIVATIVE_ORDER: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BumpKind {
    Gaussian,
    CompactBump,
    BallIndicator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub kind: BumpKind,
    pub center: Vec3,
    pub amplitude: f64,
    pub width: f64,
}

impl Bump {
    pub fn gaussian(center: Vec3, amplitude: f64, width: f64) -> Self {
        Self { kind: BumpKind::Gaussian, center, amplitude, width }
    }

    pub fn compact(center: Vec3, amplitude: f64, width: f64) -> Self {
        Self { kind: BumpKind::CompactBump, center, amplitude, width }
    }

    pub fn ball(center: Vec3, amplitude: f64, radius: f64) -> Self {
        Self { kind: BumpKind::BallIndicator, center, amplitude, width: radius }
    }

    fn validate(&self) -> Result<()> {
        let finite = self.center.iter().all(|c| c.is_finite()) && self.amplitude.is_finite();
        if !finite || !(self.width > 0.0) || !self.width.is_finite() {
            return Err(Error::InvalidSpec(format!("bad bump {:?}", self)));
        }
        Ok(())
    }

    /// Profile derivatives `phi^(k)(q)` for k = 0..=4.
    fn profile(&self, q: f64) -> [f64; 5] {
        match self.kind {
            BumpKind::Gaussian => {
                let e = (-q).exp();
                [e, -e, e, -e, e]
            }
            BumpKind::CompactBump => {
                if q >= 1.0 {
                    return [0.0; 5];
                }
                let p = 1.0 / (1.0 - q);
                let phi = (1.0 - p).exp();
                let p2 = p * p;
                let p3 = p2 * p;
                let p4 = p2 * p2;
                [
                    phi,
                    -p2 * phi,
                    (p4 - 2.0 * p3) * phi,
                    (-p4 * p2 + 6.0 * p4 * p - 6.0 * p4) * phi,
                    (p4 * p4 - 12.0 * p4 * p3 + 36.0 * p4 * p2 - 24.0 * p4 * p) * phi,
                ]
            }
            BumpKind::BallIndicator => {
                let v = if q <= 1.0 { 1.0 } else { 0.0 };
                [v, 0.0, 0.0, 0.0, 0.0]
            }
        }
    }

    pub fn value(&self, x: Vec3) -> f64 {
        let u = sub(x, self.center);
        let q = dot(u, u) / (self.width * self.width);
        self.amplitude * self.profile(q)[0]
    }

    /// Partial derivative `d^alpha` at `x`.
    pub fn derivative(&self, alpha: [usize; 3], x: Vec3) -> Result<f64> {
        let order = alpha.iter().sum::<usize>();
        if order == 0 {
            return Ok(self.value(x));
        }
        if self.kind == BumpKind::BallIndicator {
            return Err(Error::UnsupportedDerivative(
                "ball-indicator has no derivatives".into(),
            ));
        }
        if order > MAX_DERIVATIVE_ORDER {
            return Err(Error::UnsupportedDerivative(format!("order {order} > 4")));
        }
        let u = sub(x, self.center);
        let w2 = self.width * self.width;
        let q = dot(u, u) / w2;
        let prof = self.profile(q);
        let mut idx = Vec::with_capacity(order);
        for (axis, &a) in alpha.iter().enumerate() {
            idx.extend(std::iter::repeat(axis).take(a));
        }
        let mut acc = 0.0;
        partitions(&idx, 1.0, 0, &u, w2, &prof, &mut acc);
        Ok(self.amplitude * acc)
    }

    /// Value, first and second derivative of `rho -> bump(y(rho))` for a curve
    /// with `y' = v`, `y'' = acc`. Derivatives above `order` are returned as zero.
    pub fn flow_jet(&self, y: Vec3, v: Vec3, acc: Vec3, order: usize) -> Result<[f64; 3]> {
        if order > 0 && self.kind == BumpKind::BallIndicator {
            return Err(Error::UnsupportedDerivative(
                "ball-indicator has no derivatives".into(),
            ));
        }
        let u = sub(y, self.center);
        let w2 = self.width * self.width;
        let q = dot(u, u) / w2;
        let prof = self.profile(q);
        let a = self.amplitude;
        if order == 0 {
            return Ok([a * prof[0], 0.0, 0.0]);
        }
        let q1 = 2.0 * dot(u, v) / w2;
        let d1 = a * prof[1] * q1;
        if order == 1 {
            return Ok([a * prof[0], d1, 0.0]);
        }
        let q2 = 2.0 * (dot(v, v) + dot(u, acc)) / w2;
        Ok([a * prof[0], d1, a * (prof[2] * q1 * q1 + prof[1] * q2)])
    }

    /// Fraction of the cube `[x - h/2, x + h/2]^3` covered by the ball, times
    /// the amplitude. Smooth kinds return the node value.
    pub fn cell_average(&self, x: Vec3, h: f64) -> f64 {
        if self.kind != BumpKind::BallIndicator {
            return self.value(x);
        }
        let u = sub(x, self.center);
        let half = 0.5 * h;
        let mut far = 0.0;
        let mut near = 0.0;
        for &c in &u {
            let lo = c.abs() - half;
            let hi = c.abs() + half;
            far += hi * hi;
            if lo > 0.0 {
                near += lo * lo;
            }
        }
        let r2 = self.width * self.width;
        if far <= r2 {
            return self.amplitude;
        }
        if near > r2 {
            return 0.0;
        }
        const SUB: usize = 16;
        let mut inside = 0usize;
        for i in 0..SUB {
            let a = u[0] - half + (i as f64 + 0.5) * h / SUB as f64;
            for j in 0..SUB {
                let b = u[1] - half + (j as f64 + 0.5) * h / SUB as f64;
                for k in 0..SUB {
                    let c = u[2] - half + (k as f64 + 0.5) * h / SUB as f64;
                    if a * a + b * b + c * c <= r2 {
                        inside += 1;
                    }
                }
            }
        }
        self.amplitude * inside as f64 / (SUB * SUB * SUB) as f64
    }
}

fn partitions(
    idx: &[usize],
    factor: f64,
    blocks: usize,
    u: &Vec3,
    w2: f64,
    prof: &[f64; 5],
    acc: &mut f64,
) {
    if idx.is_empty() {
        *acc += factor * prof[blocks];
        return;
    }
    let first = idx[0];
    let rest = &idx[1..];
    partitions(rest, factor * 2.0 * u[first] / w2, blocks + 1, u, w2, prof, acc);
    for j in 0..rest.len() {
        if rest[j] == first {
            let mut remaining = Vec::with_capacity(rest.len() - 1);
            remaining.extend_from_slice(&rest[..j]);
            remaining.extend_from_slice(&rest[j + 1..]);
            partitions(&remaining, factor * 2.0 / w2, blocks + 1, u, w2, prof, acc);
        }
    }
}

fn sum_jets(jets: impl Iterator<Item = Result<[f64; 3]>>) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    for j in jets {
        let j = j?;
        for (o, v) in out.iter_mut().zip(j) {
            *o += v;
        }
    }
    Ok(out)
}

/// Scalar potential `V` and vector potential `A`, each a sum of bumps.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(default)]
    pub scalar: Vec<Bump>,
    #[serde(default)]
    pub vector: [Vec<Bump>; 3],
}

impl PotentialSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn scalar(terms: Vec<Bump>) -> Self {
        Self { scalar: terms, vector: Default::default() }
    }

    pub fn vector(terms: [Vec<Bump>; 3]) -> Self {
        Self { scalar: Vec::new(), vector: terms }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.scalar.iter().try_for_each(Bump::validate)?;
        self.vector.iter().flatten().try_for_each(Bump::validate)
    }

    pub fn is_zero(&self) -> bool {
        self.scalar.iter().chain(self.vector.iter().flatten()).all(|b| b.amplitude == 0.0)
    }

    pub fn has_vector(&self) -> bool {
        self.vector.iter().flatten().any(|b| b.amplitude != 0.0)
    }

    fn order_of(terms: &[Bump]) -> usize {
        if terms.iter().any(|b| b.kind == BumpKind::BallIndicator) {
            0
        } else {
            MAX_DERIVATIVE_ORDER
        }
    }

    pub fn scalar_order_available(&self) -> usize {
        Self::order_of(&self.scalar)
    }

    pub fn vector_order_available(&self) -> usize {
        self.vector.iter().map(|t| Self::order_of(t)).min().unwrap_or(MAX_DERIVATIVE_ORDER)
    }

    pub fn scalar_value(&self, x: Vec3) -> f64 {
        self.scalar.iter().map(|b| b.value(x)).sum()
    }

    pub fn vector_value(&self, x: Vec3) -> Vec3 {
        let mut out = [0.0; 3];
        for (c, terms) in self.vector.iter().enumerate() {
            out[c] = terms.iter().map(|b| b.value(x)).sum();
        }
        out
    }

    pub fn scalar_derivative(&self, alpha: [usize; 3], x: Vec3) -> Result<f64> {
        self.scalar.iter().map(|b| b.derivative(alpha, x)).sum()
    }

    pub fn vector_derivative(&self, comp: usize, alpha: [usize; 3], x: Vec3) -> Result<f64> {
        self.vector[comp].iter().map(|b| b.derivative(alpha, x)).sum()
    }

    /// Jet of `V` along a curve, see [`Bump::flow_jet`].
    pub fn scalar_flow_jet(&self, y: Vec3, v: Vec3, acc: Vec3, order: usize) -> Result<[f64; 3]> {
        sum_jets(self.scalar.iter().map(|b| b.flow_jet(y, v, acc, order)))
    }

    /// Jet of the component `A_c` along a curve.
    pub fn vector_flow_jet(&self, comp: usize, y: Vec3, v: Vec3, acc: Vec3, order: usize) -> Result<[f64; 3]> {
        sum_jets(self.vector[comp].iter().map(|b| b.flow_jet(y, v, acc, order)))
    }

    /// Gradient of the scalar part.
    pub fn scalar_gradient(&self, x: Vec3) -> Result<Vec3> {
        Ok([
            self.scalar_derivative([1, 0, 0], x)?,
            self.scalar_derivative([0, 1, 0], x)?,
            self.scalar_derivative([0, 0, 1], x)?,
        ])
    }

    /// Jacobian `J[c][i] = d_i A_c`.
    pub fn vector_jacobian(&self, x: Vec3) -> Result<[[f64; 3]; 3]> {
        let mut j = [[0.0; 3]; 3];
        for (c, row) in j.iter_mut().enumerate() {
            for (i, entry) in row.iter_mut().enumerate() {
                let mut alpha = [0; 3];
                alpha[i] = 1;
                *entry = self.vector_derivative(c, alpha, x)?;
            }
        }
        Ok(j)
    }

    /// Second derivatives `H[c][i][j] = d_i d_j A_c`.
    pub fn vector_hessian(&self, x: Vec3) -> Result<[[[f64; 3]; 3]; 3]> {
        let mut out = [[[0.0; 3]; 3]; 3];
        for (c, block) in out.iter_mut().enumerate() {
            for i in 0..3 {
                for j in i..3 {
                    let mut alpha = [0; 3];
                    alpha[i] += 1;
                    alpha[j] += 1;
                    let v = self.vector_derivative(c, alpha, x)?;
                    block[i][j] = v;
                    block[j][i] = v;
                }
            }
        }
        Ok(out)
    }

    /// Divergence of `A`.
    pub fn divergence(&self, x: Vec3) -> Result<f64> {
        let mut d = 0.0;
        for c in 0..3 {
            let mut alpha = [0; 3];
            alpha[c] = 1;
            d += self.vector_derivative(c, alpha, x)?;
        }
        Ok(d)
    }

    /// Spec scaled by `s` in amplitude.
    pub fn scaled(&self, s: f64) -> Self {
        let f = |b: &Bump| Bump { amplitude: b.amplitude * s, ..b.clone() };
        Self {
            scalar: self.scalar.iter().map(f).collect(),
            vector: [
                self.vector[0].iter().map(f).collect(),
                self.vector[1].iter().map(f).collect(),
                self.vector[2].iter().map(f).collect(),
            ],
        }
    }

    /// Spec of `x -> f(x / s)`.
    pub fn dilated(&self, s: f64) -> Self {
        let f = |b: &Bump| Bump {
            center: [b.center[0] * s, b.center[1] * s, b.center[2] * s],
            width: b.width * s,
            ..b.clone()
        };
        Self {
            scalar: self.scalar.iter().map(f).collect(),
            vector: [
                self.vector[0].iter().map(f).collect(),
                self.vector[1].iter().map(f).collect(),
                self.vector[2].iter().map(f).collect(),
            ],
        }
    }

    /// Radius beyond which every term is below `tol` relative to its amplitude.
    pub fn support_radius(&self, tol: f64) -> f64 {
        let reach = |b: &Bump| {
            let c = norm(b.center);
            match b.kind {
                BumpKind::Gaussian => c + b.width * (-tol.ln()).max(0.0).sqrt(),
                _ => c + b.width,
            }
        };
        self.scalar
            .iter()
            .chain(self.vector.iter().flatten())
            .map(reach)
            .fold(0.0, f64::max)
    }
}

/// All multi-indices of total order `k`, as ordered index tuples.
pub fn ordered_tuples(k: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    let mut stack = vec![(0usize, [0usize; 3])];
    while let Some((depth, alpha)) = stack.pop() {
        if depth == k {
            out.push(alpha);
            continue;
        }
        for axis in 0..3 {
            let mut a = alpha;
            a[axis] += 1;
            stack.push((depth + 1, a));
        }
    }
    out
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}
