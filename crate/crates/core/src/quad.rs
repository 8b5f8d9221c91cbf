//! Gauss–Legendre rules and dyadic adaptive refinement.

use std::sync::OnceLock;

/// Nodes and weights of an n-point Gauss–Legendre rule on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Golub-free construction: Newton iteration on P_n from the Chebyshev guess.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Integrate `f` over [a, b].
    #[inline]
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(c + h * x);
        }
        s * h
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Shared 10-point rule used by the adaptive drivers.
pub fn gl10() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(10))
}

/// Shared 20-point rule for one-shot smooth integrals.
pub fn gl20() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(20))
}

/// Result of an adaptive integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adaptive<T> {
    pub value: T,
    /// Sum of the per-panel refinement differences.
    pub error: f64,
    pub converged: bool,
}

/// Values that can be accumulated by the adaptive driver.
pub trait Accumulate: Copy {
    fn zero() -> Self;
    fn add(self, other: Self) -> Self;
    fn scale(self, s: f64) -> Self;
    fn dist(self, other: Self) -> f64;
}

impl Accumulate for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn dist(self, o: Self) -> f64 {
        (self - o).abs()
    }
}

impl<const N: usize> Accumulate for [f64; N] {
    fn zero() -> Self {
        [0.0; N]
    }
    fn add(mut self, o: Self) -> Self {
        for (a, b) in self.iter_mut().zip(o) {
            *a += b;
        }
        self
    }
    fn scale(mut self, s: f64) -> Self {
        for a in self.iter_mut() {
            *a *= s;
        }
        self
    }
    fn dist(self, o: Self) -> f64 {
        self.iter().zip(o).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

fn panel<T: Accumulate, F: FnMut(f64) -> T>(rule: &GaussLegendre, a: f64, b: f64, f: &mut F) -> T {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = T::zero();
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        s = s.add(f(c + h * x).scale(*w));
    }
    s.scale(h)
}

/// Dyadic adaptive Gauss–Legendre: a panel is accepted when the 10-point
/// value on it and the sum over its two halves differ by at most its share of
/// `tol`. Panels at `max_depth` are accepted as they are; the result counts
/// as converged when the summed differences stay within `tol`, which
/// tolerates a few roundoff-limited panels but not a real singularity.
pub fn adaptive<T: Accumulate, F: FnMut(f64) -> T>(mut f: F, a: f64, b: f64, tol: f64, max_depth: u32) -> Adaptive<T> {
    let rule = gl10();
    let mut total = T::zero();
    let mut err = 0.0;
    if a == b {
        return Adaptive {
            value: total,
            error: 0.0,
            converged: true,
        };
    }
    let whole = panel(rule, a, b, &mut f);
    let mut stack = vec![(a, b, whole, 0u32)];
    let span = (b - a).abs();
    while let Some((lo, hi, coarse, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = panel(rule, lo, mid, &mut f);
        let right = panel(rule, mid, hi, &mut f);
        let fine = left.add(right);
        let diff = fine.dist(coarse);
        let share = tol * (hi - lo).abs() / span;
        if diff <= share || depth >= max_depth {
            total = total.add(fine);
            err += diff;
        } else {
            stack.push((mid, hi, right, depth + 1));
            stack.push((lo, mid, left, depth + 1));
        }
    }
    Adaptive {
        value: total,
        error: err,
        converged: err <= tol,
    }
}
