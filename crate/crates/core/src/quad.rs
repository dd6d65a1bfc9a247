//! One-dimensional quadrature rules.

use num_complex::Complex64;
use std::collections::BinaryHeap;

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm1 = p0;
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.reverse();
    out
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let c = 0.5 * (a + b);
    let s = 0.5 * (b - a);
    gauss_legendre(n).into_iter().map(|(t, w)| (c + s * t, s * w)).collect()
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += s * WGK[j];
        if j % 2 == 1 {
            g += s * WG[j / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

/// Globally adaptive Gauss-Kronrod (7-15) for complex integrands.
///
/// The panel with the largest error estimate is bisected until the summed
/// estimate drops below `max(abs_tol, rel_tol |I|)`. Panels at `max_depth`
/// are frozen.
pub fn adaptive_c<F: FnMut(f64) -> Complex64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_depth: usize,
) -> Complex64 {
    if a == b {
        return Complex64::new(0.0, 0.0);
    }
    let (whole, err) = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, val: whole, err, depth: 0 });
    let mut frozen = Complex64::new(0.0, 0.0);
    let mut frozen_err = 0.0;
    let mut total = whole;
    let mut total_err = err;
    let mut count = 1usize;
    while let Some(worst) = heap.pop() {
        if total_err <= abs_tol.max(rel_tol * total.norm()) || count >= MAX_PANELS {
            heap.push(worst);
            break;
        }
        total -= worst.val;
        total_err -= worst.err;
        if worst.depth >= max_depth {
            frozen += worst.val;
            frozen_err += worst.err;
            total += worst.val;
            total_err += worst.err;
            // frozen error can never be reduced further
            if heap.is_empty() || total_err - frozen_err <= abs_tol.max(rel_tol * total.norm()) {
                break;
            }
            continue;
        }
        let m = 0.5 * (worst.a + worst.b);
        let (l, el) = gk15(&mut f, worst.a, m);
        let (r, er) = gk15(&mut f, m, worst.b);
        total += l + r;
        total_err += el + er;
        count += 1;
        heap.push(Panel { a: worst.a, b: m, val: l, err: el, depth: worst.depth + 1 });
        heap.push(Panel { a: m, b: worst.b, val: r, err: er, depth: worst.depth + 1 });
    }
    heap.into_iter().map(|p| p.val).sum::<Complex64>() + frozen
}

const MAX_PANELS: usize = 20_000;

struct Panel {
    a: f64,
    b: f64,
    val: Complex64,
    err: f64,
    depth: usize,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Adaptive Gauss-Kronrod for real integrands.
pub fn adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_depth: usize,
) -> f64 {
    adaptive_c(|x| Complex64::new(f(x), 0.0), a, b, abs_tol, rel_tol, max_depth).re
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [1, 2, 5, 8, 16, 32] {
            let rule = gauss_legendre(n);
            let wsum: f64 = rule.iter().map(|p| p.1).sum();
            assert!((wsum - 2.0).abs() < 1e-13);
            let deg = 2 * n - 1;
            let s: f64 = rule.iter().map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((s - exact).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let v = adaptive(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-12, 1e-12, 60);
        assert!((v - 2.0).abs() < 1e-9);
        let c = adaptive_c(|x| Complex64::new(0.0, x).exp(), 0.0, 3.0, 1e-13, 1e-13, 40);
        let exact = (Complex64::new(0.0, 3.0).exp() - 1.0) / Complex64::new(0.0, 1.0);
        assert!((c - exact).norm() < 1e-12);
    }
}
