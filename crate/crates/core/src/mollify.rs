//! Mollified tile fields V_r, V_u and the glued plane field Ψ_α.
//!
//! V_r = ∇(η ∗ F̃_r) where η is the bump kernel c·exp(−1/(1 − (r/δ)²)) on the
//! disc of radius δ. Because ∇F̃_r is piecewise constant, the convolution at p
//! reduces to a weighted sum of kernel masses of the polygons near p. Each
//! polygon mass is a signed sum over its edges of the mass of the triangle
//! (p, A, B), and that triangle mass is a one-dimensional angular integral of
//! the radial kernel mass, which we tabulate once.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arrows::{Arrow, ArrowField};
use crate::error::{Error, Result};
use crate::flow::VectorField;
use crate::geom::{segment_distance, Vec2};
use crate::potential::Tessellation;
use crate::quad;

/// Bump profile b(t) = exp(−1/(1 − t²)) on [0, 1).
#[inline]
pub fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

const TABLE_INTERVALS: usize = 4096;

/// Radial moments m_k(s) = ∫₀^s t^k b(t) dt for k = 1, 2, tabulated with
/// exact derivatives and read back by cubic Hermite interpolation.
struct RadialTable {
    m1: Vec<f64>,
    m2: Vec<f64>,
}

impl RadialTable {
    fn build() -> Self {
        let h = 1.0 / TABLE_INTERVALS as f64;
        let rule = quad::gl20();
        let mut m1 = vec![0.0; TABLE_INTERVALS + 1];
        let mut m2 = vec![0.0; TABLE_INTERVALS + 1];
        for k in 0..TABLE_INTERVALS {
            let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
            m1[k + 1] = m1[k] + rule.integrate(a, b, |t| t * bump(t));
            m2[k + 1] = m2[k] + rule.integrate(a, b, |t| t * t * bump(t));
        }
        RadialTable { m1, m2 }
    }

    fn get() -> &'static RadialTable {
        static TABLE: OnceLock<RadialTable> = OnceLock::new();
        TABLE.get_or_init(RadialTable::build)
    }

    #[inline]
    fn hermite(values: &[f64], power: i32, s: f64) -> f64 {
        if s >= 1.0 {
            return values[TABLE_INTERVALS];
        }
        if s <= 0.0 {
            return 0.0;
        }
        let u = s * TABLE_INTERVALS as f64;
        let k = (u as usize).min(TABLE_INTERVALS - 1);
        let t = u - k as f64;
        let h = 1.0 / TABLE_INTERVALS as f64;
        let (x0, x1) = (k as f64 * h, (k + 1) as f64 * h);
        let d0 = x0.powi(power) * bump(x0) * h;
        let d1 = x1.powi(power) * bump(x1) * h;
        let (y0, y1) = (values[k], values[k + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * d1
    }

    #[inline]
    fn m1(&self, s: f64) -> f64 {
        Self::hermite(&self.m1, 1, s)
    }

    #[inline]
    fn m2(&self, s: f64) -> f64 {
        Self::hermite(&self.m2, 2, s)
    }
}

/// Radially symmetric C∞ kernel supported on the open disc of radius δ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kernel {
    pub delta: f64,
    pub normalization: f64,
}

impl Kernel {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::invalid(format!("kernel radius {delta} must be positive")));
        }
        let m1 = quad::adaptive(|t| t * bump(t), 0.0, 1.0, 1e-16, 30).value;
        Ok(Kernel {
            delta,
            normalization: 1.0 / (2.0 * PI * delta * delta * m1),
        })
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.normalization * bump(x.hypot(y) / self.delta)
    }

    /// Kernel mass of the disc of radius ρ.
    #[inline]
    fn disc_mass(&self, rho: f64) -> f64 {
        let t = RadialTable::get();
        t.m1(rho / self.delta) / t.m1(1.0)
    }

    /// ∫_{|q| < ρ} η(q) |q| dq / (2π), the radial weight of first moments.
    #[inline]
    fn disc_moment(&self, rho: f64) -> f64 {
        let t = RadialTable::get();
        self.delta * t.m2(rho / self.delta) / (2.0 * PI * t.m1(1.0))
    }

    /// Draw a point from the kernel density (for Monte Carlo checks).
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec2 {
        // radial density ∝ t·b(t) on [0,1); max of t·b(t) is below 0.2
        loop {
            let t: f64 = rng.gen();
            if rng.gen::<f64>() * 0.2 < t * bump(t) {
                let phi = 2.0 * PI * rng.gen::<f64>();
                return Vec2::new(phi.cos(), phi.sin()) * (t * self.delta);
            }
        }
    }
}

/// Geometry of the triangle (p, A, B) seen from p in angular coordinates
/// measured from the foot of the perpendicular onto line AB.
struct EdgeFrame {
    /// Distance from p to the line.
    d: f64,
    /// Unit normal toward the line and unit tangent along A → B.
    n: Vec2,
    u: Vec2,
    th_a: f64,
    th_b: f64,
    sign: f64,
}

impl EdgeFrame {
    fn new(p: Vec2, a: Vec2, b: Vec2) -> Option<Self> {
        let (pa, pb) = (a - p, b - p);
        let len = (b - a).norm();
        if len == 0.0 {
            return None;
        }
        let u = (b - a) * (1.0 / len);
        let cross = pa.cross(pb);
        let d = cross.abs() / len;
        if d < 1e-15 {
            return None;
        }
        let sa = pa.dot(u);
        let sb = pb.dot(u);
        let n = (pa - u * sa) * (1.0 / d);
        Some(EdgeFrame {
            d,
            n,
            u,
            th_a: sa.atan2(d),
            th_b: sb.atan2(d),
            sign: cross.signum(),
        })
    }

    /// Angular interval where the line lies inside the kernel support.
    fn inner(&self, delta: f64) -> Option<(f64, f64)> {
        if self.d >= delta {
            return None;
        }
        let c = (self.d / delta).acos();
        let lo = self.th_a.max(-c);
        let hi = self.th_b.min(c);
        (lo < hi).then_some((lo, hi))
    }
}

/// Quadrature of the mollified gradient and potential against one tessellation.
#[derive(Clone, Debug)]
pub struct Convolver {
    pub tess: Arc<Tessellation>,
    pub kernel: Kernel,
}

const MAX_DEPTH: u32 = 40;

impl Convolver {
    pub fn new(tess: Arc<Tessellation>, kernel: Kernel) -> Result<Self> {
        if (tess.delta - kernel.delta).abs() > 0.0 {
            return Err(Error::invalid(format!(
                "tessellation delta {} differs from kernel delta {}",
                tess.delta, kernel.delta
            )));
        }
        Ok(Convolver { tess, kernel })
    }

    pub fn with_delta(delta: f64) -> Result<Self> {
        Convolver::new(Arc::new(Tessellation::new(delta)?), Kernel::new(delta)?)
    }

    /// Visit every (tile offset, cell index) whose cell may meet B(p, δ).
    fn for_each_nearby_cell(&self, p: Vec2, mut f: impl FnMut(Vec2, usize)) {
        let dl = self.kernel.delta;
        let (i0, i1) = ((p.x - dl).floor() as i64, (p.x + dl).floor() as i64);
        let (j0, j1) = ((p.y - dl).floor() as i64, (p.y + dl).floor() as i64);
        for i in i0..=i1 {
            for j in j0..=j1 {
                let off = Vec2::new(i as f64, j as f64);
                let q = p - off;
                for (k, cell) in self.tess.cells.iter().enumerate() {
                    let (lo, hi) = cell.bbox;
                    let dx = (lo.x - q.x).max(q.x - hi.x).max(0.0);
                    let dy = (lo.y - q.y).max(q.y - hi.y).max(0.0);
                    if dx * dx + dy * dy < dl * dl {
                        f(off, k);
                    }
                }
            }
        }
    }

    /// If B(p, δ) sits inside a single cell, that cell's index.
    fn single_cell(&self, p: Vec2) -> Option<usize> {
        let q = p.fract();
        let k = self.tess.locate(q);
        let cell = &self.tess.cells[k];
        cell.edges()
            .all(|(a, b)| segment_distance(q, a, b) >= self.kernel.delta)
            .then_some(k)
    }

    /// Kernel mass of the translated cell, with its refinement error.
    fn cell_mass(&self, p: Vec2, off: Vec2, k: usize, tol: f64) -> (f64, f64, bool) {
        let kern = self.kernel;
        let dl = kern.delta;
        let mut mass = 0.0;
        let mut err = 0.0;
        let mut ok = true;
        for (a, b) in self.tess.cells[k].edges() {
            let Some(fr) = EdgeFrame::new(p, a + off, b + off) else {
                continue;
            };
            let mut m = (fr.th_b - fr.th_a) / (2.0 * PI);
            if let Some((lo, hi)) = fr.inner(dl) {
                let d = fr.d;
                let r = quad::adaptive(|th: f64| kern.disc_mass(d / th.cos()) - 1.0, lo, hi, tol, MAX_DEPTH);
                m += r.value / (2.0 * PI);
                err += r.error / (2.0 * PI);
                ok &= r.converged;
            }
            mass += fr.sign * m;
        }
        (mass, err, ok)
    }

    /// Kernel mass and first moment ∫ η(p − z)(z − p) dz of a translated cell.
    fn cell_moments(&self, p: Vec2, off: Vec2, k: usize, tol: f64) -> ([f64; 3], f64, bool) {
        let kern = self.kernel;
        let dl = kern.delta;
        let full = kern.disc_moment(dl);
        let mut acc = [0.0; 3];
        let mut err = 0.0;
        let mut ok = true;
        for (a, b) in self.tess.cells[k].edges() {
            let Some(fr) = EdgeFrame::new(p, a + off, b + off) else {
                continue;
            };
            let (n, u, d) = (fr.n, fr.u, fr.d);
            let dir = |th: f64| n * th.cos() + u * th.sin();
            // outer part at full radial weight, in closed form
            let swept = |lo: f64, hi: f64| n * (hi.sin() - lo.sin()) - u * (hi.cos() - lo.cos());
            let mut m = (fr.th_b - fr.th_a) / (2.0 * PI);
            let mut mom = swept(fr.th_a, fr.th_b) * full;
            if let Some((lo, hi)) = fr.inner(dl) {
                let r = quad::adaptive(
                    |th: f64| {
                        let rho = d / th.cos();
                        let e = dir(th);
                        let w = kern.disc_moment(rho) - full;
                        [kern.disc_mass(rho) - 1.0, e.x * w, e.y * w]
                    },
                    lo,
                    hi,
                    tol,
                    MAX_DEPTH,
                );
                m += r.value[0] / (2.0 * PI);
                mom = mom + Vec2::new(r.value[1], r.value[2]);
                err += r.error;
                ok &= r.converged;
            }
            acc[0] += fr.sign * m;
            acc[1] += fr.sign * mom.x;
            acc[2] += fr.sign * mom.y;
        }
        (acc, err, ok)
    }

    /// (η ∗ ∇F̃_r)(p) with per-component absolute error at most `tol`.
    pub fn conv_grad(&self, p: Vec2, tol: f64) -> Result<Vec2> {
        if !(tol > 0.0) {
            return Err(Error::invalid("quadrature tolerance must be positive"));
        }
        if let Some(k) = self.single_cell(p) {
            return Ok(self.tess.cells[k].affine.grad());
        }
        let edge_tol = tol * 1e-3;
        let mut v = Vec2::ZERO;
        let mut err = 0.0;
        let mut ok = true;
        self.for_each_nearby_cell(p, |off, k| {
            let g = self.tess.cells[k].affine.grad();
            let (m, e, c) = self.cell_mass(p, off, k, edge_tol);
            v = v + g * m;
            err += e * g.max_abs();
            ok &= c;
        });
        if !ok || err > tol {
            return Err(Error::Quadrature {
                estimate: v,
                achieved: err,
                tolerance: tol,
            });
        }
        Ok(v)
    }

    /// (η ∗ F̃_r)(p), the mollified potential.
    pub fn conv_value(&self, p: Vec2, tol: f64) -> Result<f64> {
        if !(tol > 0.0) {
            return Err(Error::invalid("quadrature tolerance must be positive"));
        }
        let edge_tol = tol * 1e-3;
        let mut v = 0.0;
        let mut err = 0.0;
        let mut ok = true;
        self.for_each_nearby_cell(p, |off, k| {
            let aff = self.tess.cells[k].affine;
            let g = aff.grad();
            // F̃ on the translated cell: g·z + c + 2(i + j)
            let c = aff.c - g.dot(off) + 2.0 * (off.x + off.y);
            let (m, e, conv) = self.cell_moments(p, off, k, edge_tol);
            v += (g.dot(p) + c) * m[0] + g.x * m[1] + g.y * m[2];
            err += e * (g.dot(p).abs() + c.abs() + g.max_abs());
            ok &= conv;
        });
        if !ok || err > tol {
            return Err(Error::Quadrature {
                estimate: Vec2::new(v, 0.0),
                achieved: err,
                tolerance: tol,
            });
        }
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Vr,
    Vu,
}

impl Which {
    pub fn for_arrow(a: Arrow) -> Which {
        match a {
            Arrow::Right => Which::Vr,
            Arrow::Up => Which::Vu,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EvalMode {
    ExactQuadrature { tol: f64 },
    CachedGrid { resolution: usize },
}

/// Samples of V_r on the periodic (res+1)² node lattice of the unit square,
/// read back with Catmull–Rom bicubic interpolation.
#[derive(Clone, Debug)]
pub struct CachedGrid {
    pub delta: f64,
    pub resolution: usize,
    /// Row-major by y index; entry (r, c) is V_r(c/res, r/res).
    pub nodes: Vec<Vec2>,
    /// Max component gap to exact quadrature on held-out points.
    pub max_interp_error: f64,
}

/// Held-out check points; fixed so measured errors are reproducible.
pub const HOLDOUT_POINTS: usize = 100;
const HOLDOUT_SEED: u64 = 0x0005_eed0_f91d;

impl CachedGrid {
    pub fn build(conv: &Convolver, resolution: usize, tol: f64) -> Result<Self> {
        if resolution < 4 {
            return Err(Error::invalid("grid resolution must be at least 4"));
        }
        let res = resolution;
        let mut periodic = vec![Vec2::ZERO; res * res];
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(res);
        let rows_per = res.div_ceil(workers);
        std::thread::scope(|s| -> Result<()> {
            let handles: Vec<_> = periodic
                .chunks_mut(rows_per * res)
                .enumerate()
                .map(|(w, chunk)| {
                    s.spawn(move || -> Result<()> {
                        for (idx, slot) in chunk.iter_mut().enumerate() {
                            let r = w * rows_per + idx / res;
                            let c = idx % res;
                            let p = Vec2::new(c as f64 / res as f64, r as f64 / res as f64);
                            *slot = conv.conv_grad(p, tol)?;
                        }
                        Ok(())
                    })
                })
                .collect();
            for h in handles {
                h.join().expect("grid worker panicked")?;
            }
            Ok(())
        })?;
        let mut nodes = Vec::with_capacity((res + 1) * (res + 1));
        for r in 0..=res {
            for c in 0..=res {
                nodes.push(periodic[(r % res) * res + c % res]);
            }
        }
        let mut grid = CachedGrid {
            delta: conv.kernel.delta,
            resolution,
            nodes,
            max_interp_error: 0.0,
        };
        grid.max_interp_error = grid.holdout_error(conv, tol)?;
        Ok(grid)
    }

    pub fn from_nodes(delta: f64, resolution: usize, nodes: Vec<Vec2>) -> Result<Self> {
        if nodes.len() != (resolution + 1) * (resolution + 1) || resolution < 4 {
            return Err(Error::GridFormat(format!(
                "{} nodes do not form a ({resolution}+1)² grid",
                nodes.len()
            )));
        }
        Ok(CachedGrid {
            delta,
            resolution,
            nodes,
            max_interp_error: f64::NAN,
        })
    }

    pub fn holdout_error(&self, conv: &Convolver, tol: f64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(HOLDOUT_SEED);
        let mut worst: f64 = 0.0;
        for _ in 0..HOLDOUT_POINTS {
            let p = Vec2::new(rng.gen(), rng.gen());
            let exact = conv.conv_grad(p, tol)?;
            worst = worst.max((self.eval(p) - exact).max_abs());
        }
        Ok(worst)
    }

    #[inline]
    fn node(&self, r: i64, c: i64) -> Vec2 {
        let n = self.resolution as i64;
        let (r, c) = (r.rem_euclid(n) as usize, c.rem_euclid(n) as usize);
        self.nodes[r * (self.resolution + 1) + c]
    }

    /// Interpolated V_r at any point (periodic in both coordinates),
    /// clamped to the nonnegative quadrant.
    pub fn eval(&self, p: Vec2) -> Vec2 {
        let n = self.resolution as f64;
        let (u, v) = (p.x * n, p.y * n);
        let (c0, r0) = (u.floor(), v.floor());
        let wx = catmull_rom(u - c0);
        let wy = catmull_rom(v - r0);
        let (c0, r0) = (c0 as i64, r0 as i64);
        let mut out = Vec2::ZERO;
        for (dy, wy) in wy.iter().enumerate() {
            let mut row = Vec2::ZERO;
            for (dx, wx) in wx.iter().enumerate() {
                row = row + self.node(r0 + dy as i64 - 1, c0 + dx as i64 - 1) * *wx;
            }
            out = out + row * *wy;
        }
        // Catmull–Rom overshoots next to zero components; the exact field is
        // nonnegative, so clamping only moves toward it
        Vec2::new(out.x.max(0.0), out.y.max(0.0))
    }

    /// The node array of V_u = swap(V_r ∘ swap), same layout.
    pub fn transposed_nodes(&self) -> Vec<Vec2> {
        let m = self.resolution + 1;
        let mut out = Vec::with_capacity(m * m);
        for r in 0..m {
            for c in 0..m {
                out.push(self.nodes[c * m + r].swap());
            }
        }
        out
    }
}

#[inline]
fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

#[derive(Debug)]
enum Source {
    Exact { conv: Convolver, tol: f64 },
    Cached(CachedGrid),
}

/// V_r or V_u on the unit square. Both tiles of a pair share one source and
/// V_u is always read through the diagonal reflection of V_r.
#[derive(Clone, Debug)]
pub struct TileField {
    pub which: Which,
    source: Arc<Source>,
}

impl TileField {
    pub fn delta(&self) -> f64 {
        match &*self.source {
            Source::Exact { conv, .. } => conv.kernel.delta,
            Source::Cached(g) => g.delta,
        }
    }

    pub fn mode(&self) -> EvalMode {
        match &*self.source {
            Source::Exact { tol, .. } => EvalMode::ExactQuadrature { tol: *tol },
            Source::Cached(g) => EvalMode::CachedGrid {
                resolution: g.resolution,
            },
        }
    }

    pub fn grid(&self) -> Option<&CachedGrid> {
        match &*self.source {
            Source::Cached(g) => Some(g),
            Source::Exact { .. } => None,
        }
    }

    fn vr(&self, p: Vec2) -> Result<Vec2> {
        match &*self.source {
            Source::Exact { conv, tol } => conv.conv_grad(p, *tol),
            Source::Cached(g) => Ok(g.eval(p)),
        }
    }

    pub fn eval(&self, p: Vec2) -> Result<Vec2> {
        match self.which {
            Which::Vr => self.vr(p),
            Which::Vu => Ok(self.vr(p.swap())?.swap()),
        }
    }

    /// The other tile of the pair, sharing the same source.
    pub fn partner(&self) -> TileField {
        let which = match self.which {
            Which::Vr => Which::Vu,
            Which::Vu => Which::Vr,
        };
        TileField {
            which,
            source: Arc::clone(&self.source),
        }
    }

    pub fn from_grid(which: Which, grid: CachedGrid) -> TileField {
        TileField {
            which,
            source: Arc::new(Source::Cached(grid)),
        }
    }
}

pub fn build_tile_field(tess: Arc<Tessellation>, kernel: Kernel, which: Which, mode: EvalMode) -> Result<TileField> {
    let conv = Convolver::new(tess, kernel)?;
    let source = match mode {
        EvalMode::ExactQuadrature { tol } => {
            if !(tol > 0.0) {
                return Err(Error::invalid("quadrature tolerance must be positive"));
            }
            Source::Exact { conv, tol }
        }
        EvalMode::CachedGrid { resolution } => Source::Cached(CachedGrid::build(&conv, resolution, DEFAULT_TOL)?),
    };
    Ok(TileField {
        which,
        source: Arc::new(source),
    })
}

/// Default quadrature tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Ψ_α: the tile fields glued along an arrow field.
#[derive(Clone, Debug)]
pub struct TiledField {
    pub arrows: ArrowField,
    pub vr: TileField,
    pub vu: TileField,
}

impl TiledField {
    pub fn new(arrows: ArrowField, tile: TileField) -> Self {
        let vr = match tile.which {
            Which::Vr => tile,
            Which::Vu => tile.partner(),
        };
        let vu = vr.partner();
        TiledField { arrows, vr, vu }
    }

    pub fn psi_eval(&self, p: Vec2) -> Result<Vec2> {
        let (i, j) = p.cell();
        let q = p.fract();
        match self.arrows.arrow_at(i, j) {
            Arrow::Right => self.vr.eval(q),
            Arrow::Up => self.vu.eval(q),
        }
    }
}

impl VectorField for TiledField {
    fn eval(&self, p: Vec2) -> Result<Vec2> {
        self.psi_eval(p)
    }
}

/// Central-difference ∂Ψ²/∂x − ∂Ψ¹/∂y.
pub fn curl_check<F: VectorField + ?Sized>(f: &F, p: Vec2, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let ex = Vec2::new(h, 0.0);
    let ey = Vec2::new(0.0, h);
    let dv2 = (f.eval(p + ex)?.y - f.eval(p - ex)?.y) / (2.0 * h);
    let dv1 = (f.eval(p + ey)?.x - f.eval(p - ey)?.x) / (2.0 * h);
    Ok(dv2 - dv1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrows::ArrowFieldSpec;

    const D: f64 = 1.0 / 16.0;

    fn conv() -> Convolver {
        Convolver::with_delta(D).unwrap()
    }

    #[test]
    fn kernel_support_and_mass() {
        let k = Kernel::new(D).unwrap();
        assert_eq!(k.eval(D, 0.0), 0.0);
        assert_eq!(k.eval(0.0, 2.0 * D), 0.0);
        assert!(k.eval(0.0, 0.5 * D) > 0.0);
        // independent polar oracle, no table
        let total = quad::adaptive(|r| 2.0 * PI * r * k.eval(r, 0.0), 0.0, D, 1e-15, 40).value;
        assert!((total - 1.0).abs() < 1e-10, "{total}");
        assert!((k.disc_mass(D) - 1.0).abs() < 1e-15);
        assert_eq!(k.disc_mass(2.0 * D), k.disc_mass(D));
    }

    #[test]
    fn radial_table_matches_direct_integration() {
        let t = RadialTable::get();
        for s in [0.013, 0.2, 0.5077, 0.77, 0.93, 0.999] {
            let a = quad::adaptive(|x| x * bump(x), 0.0, s, 1e-16, 30).value;
            let b = quad::adaptive(|x| x * x * bump(x), 0.0, s, 1e-16, 30).value;
            assert!((t.m1(s) - a).abs() < 1e-13, "m1({s})");
            assert!((t.m2(s) - b).abs() < 1e-13, "m2({s})");
        }
    }

    #[test]
    fn disc_mass_matches_polygon_mass() {
        // a square much larger than the disc, centred anywhere inside it
        let c = conv();
        let p = Vec2::new(0.5, 0.5);
        let sq = [
            Vec2::new(0.45, 0.46),
            Vec2::new(0.56, 0.46),
            Vec2::new(0.56, 0.58),
            Vec2::new(0.45, 0.58),
        ];
        let mut m = 0.0;
        for k in 0..4 {
            let fr = EdgeFrame::new(p, sq[k], sq[(k + 1) % 4]).unwrap();
            let mut part = (fr.th_b - fr.th_a) / (2.0 * PI);
            if let Some((lo, hi)) = fr.inner(D) {
                part += quad::adaptive(|th: f64| c.kernel.disc_mass(fr.d / th.cos()) - 1.0, lo, hi, 1e-14, 40).value
                    / (2.0 * PI);
            }
            m += fr.sign * part;
        }
        // Monte Carlo oracle for the clipped mass
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 400_000;
        let hits = (0..n)
            .filter(|_| {
                let q = p + c.kernel.sample(&mut rng);
                q.x > 0.45 && q.x < 0.56 && q.y > 0.46 && q.y < 0.58
            })
            .count() as f64
            / n as f64;
        let se = (hits * (1.0 - hits) / n as f64).sqrt();
        assert!((m - hits).abs() < 4.0 * se, "{m} vs {hits}");
    }

    #[test]
    fn strip_and_pentagon_values() {
        let c = conv();
        let v = c.conv_grad(Vec2::new(0.5, 2.0 / 3.0 - 1.5 * D), 1e-10).unwrap();
        assert!((v - Vec2::new(2.0, 0.0)).max_abs() < 1e-10);
        let v = c.conv_grad(Vec2::new(0.001, 2.0 / 3.0 - 1.5 * D), 1e-10).unwrap();
        assert!((v - Vec2::new(2.0, 0.0)).max_abs() < 1e-10, "{v:?}");
        // deep inside SW pentagon: distance to its boundary exceeds δ
        let v = c.conv_grad(Vec2::new(0.12, 0.12), 1e-10).unwrap();
        assert_eq!(v, Vec2::new(3.0, 3.0));
    }

    #[test]
    fn mixed_point_matches_monte_carlo_and_fixture() {
        let c = conv();
        let p = Vec2::new(0.5, 0.5);
        let exact = c.conv_grad(p, 1e-10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000_000usize;
        let (mut s, mut s2) = (Vec2::ZERO, Vec2::ZERO);
        for _ in 0..n {
            let q = p - c.kernel.sample(&mut rng);
            let g = c.tess.grad_tilde(q.x, q.y);
            s = s + g;
            s2 = s2 + Vec2::new(g.x * g.x, g.y * g.y);
        }
        let nf = n as f64;
        let mean = s * (1.0 / nf);
        let se = Vec2::new(
            ((s2.x / nf - mean.x * mean.x) / nf).sqrt(),
            ((s2.y / nf - mean.y * mean.y) / nf).sqrt(),
        );
        assert!((mean.x - exact.x).abs() < 4.0 * se.x + 1e-12, "{mean:?} vs {exact:?}");
        assert!((mean.y - exact.y).abs() < 4.0 * se.y + 1e-12, "{mean:?} vs {exact:?}");
        let fixture = Vec2::new(MIXED_FIXTURE.0, MIXED_FIXTURE.1);
        assert!((exact - fixture).max_abs() < 1e-4, "{exact:?}");
    }

    const MIXED_FIXTURE: (f64, f64) = (1.9498758375489886, 0.3158192707210994);

    #[test]
    fn diagonal_symmetry_in_collar() {
        let c = conv();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let s: f64 = rng.gen();
            let t: f64 = rng.gen::<f64>() * D;
            let p = match rng.gen_range(0..4) {
                0 => Vec2::new(s, t),
                1 => Vec2::new(s, 1.0 - t),
                2 => Vec2::new(t, s),
                _ => Vec2::new(1.0 - t, s),
            };
            let a = c.conv_grad(p, 1e-10).unwrap();
            let b = c.conv_grad(p.swap(), 1e-10).unwrap().swap();
            assert!((a - b).max_abs() < 1e-8, "{p:?}: {a:?} vs {b:?}");
        }
    }

    #[test]
    fn components_nonnegative_and_sum_bounded_below() {
        let c = conv();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let p = Vec2::new(rng.gen(), rng.gen());
            let v = c.conv_grad(p, 1e-9).unwrap();
            assert!(v.x >= -1e-9 && v.y >= -1e-9);
            assert!(v.x + v.y >= 2.0 - 1e-9, "{p:?}: {v:?}");
        }
    }

    #[test]
    fn gradient_of_mollified_potential() {
        let c = conv();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-4;
        for _ in 0..30 {
            let p = Vec2::new(rng.gen::<f64>() * 3.0 - 1.0, rng.gen::<f64>() * 3.0 - 1.0);
            let g = c.conv_grad(p, 1e-10).unwrap();
            let fx = (c.conv_value(p + Vec2::new(h, 0.0), 1e-11).unwrap()
                - c.conv_value(p - Vec2::new(h, 0.0), 1e-11).unwrap())
                / (2.0 * h);
            let fy = (c.conv_value(p + Vec2::new(0.0, h), 1e-11).unwrap()
                - c.conv_value(p - Vec2::new(0.0, h), 1e-11).unwrap())
                / (2.0 * h);
            assert!((g - Vec2::new(fx, fy)).max_abs() < 1e-3, "{p:?}: {g:?} vs ({fx}, {fy})");
        }
        // value convolution reproduces affine data deep inside a cell
        let v = c.conv_value(Vec2::new(0.12, 0.12), 1e-11).unwrap();
        assert!((v - 0.72).abs() < 1e-9);
    }

    #[test]
    fn psi_examples() {
        let tess = Arc::new(Tessellation::new(D).unwrap());
        let tile = build_tile_field(
            tess,
            Kernel::new(D).unwrap(),
            Which::Vr,
            EvalMode::ExactQuadrature { tol: 1e-10 },
        )
        .unwrap();
        let right = TiledField::new(ArrowField::constant(Arrow::Right), tile.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let p = Vec2::new(rng.gen::<f64>() * 10.0 - 5.0, rng.gen::<f64>() * 10.0 - 5.0);
            let a = right.psi_eval(p).unwrap();
            let b = right.psi_eval(p + Vec2::new(1.0, 0.0)).unwrap();
            assert!((a - b).max_abs() < 1e-12);
        }
        // V_u is the reflection of V_r by construction
        let vu = tile.partner();
        let p = Vec2::new(0.3, 0.6);
        assert_eq!(vu.eval(p).unwrap(), tile.eval(p.swap()).unwrap().swap());

        // continuity across tile edges for a mixed field
        let iid = ArrowFieldSpec::Iid { p_right: 0.5, seed: 17 }.build().unwrap();
        let mixed = TiledField::new(iid, tile);
        for _ in 0..40 {
            let s = rng.gen::<f64>();
            let (i, j) = (rng.gen_range(-5..5) as f64, rng.gen_range(-5..5) as f64);
            let eps = 1e-12;
            for (a, b) in [
                (Vec2::new(i - eps, j + s), Vec2::new(i + eps, j + s)),
                (Vec2::new(i + s, j - eps), Vec2::new(i + s, j + eps)),
            ] {
                let gap = (mixed.psi_eval(a).unwrap() - mixed.psi_eval(b).unwrap()).max_abs();
                assert!(gap < 1e-8, "{a:?}/{b:?}: {gap}");
            }
        }
    }

    #[test]
    fn curl_vanishes() {
        let tess = Arc::new(Tessellation::new(D).unwrap());
        let tile = build_tile_field(
            tess,
            Kernel::new(D).unwrap(),
            Which::Vr,
            EvalMode::ExactQuadrature { tol: 1e-10 },
        )
        .unwrap();
        let iid = ArrowFieldSpec::Iid { p_right: 0.5, seed: 4 }.build().unwrap();
        let f = TiledField::new(iid, tile.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let p = Vec2::new(rng.gen::<f64>() * 4.0, rng.gen::<f64>() * 4.0);
            assert!(curl_check(&f, p, 1e-4).unwrap().abs() <= 1e-3);
        }
        let strip = TiledField::new(ArrowField::constant(Arrow::Right), tile);
        let c = curl_check(&strip, Vec2::new(0.4, 2.0 / 3.0 - 1.5 * D), 1e-4).unwrap();
        assert!(c.abs() <= 1e-10);
    }

    #[test]
    fn rejects_bad_parameters() {
        let c = conv();
        assert!(c.conv_grad(Vec2::ZERO, 0.0).is_err());
        let t = Arc::new(Tessellation::new(D).unwrap());
        assert!(Convolver::new(t, Kernel::new(0.05).unwrap()).is_err());
    }

    #[test]
    fn cached_grid_small_resolution() {
        let c = conv();
        let g = CachedGrid::build(&c, 64, 1e-9).unwrap();
        assert_eq!(g.nodes.len(), 65 * 65);
        // periodic seam
        assert_eq!(g.nodes[64], g.nodes[0]);
        assert!(g.max_interp_error.is_finite());
        // interpolation reproduces nodes
        let p = Vec2::new(5.0 / 64.0, 9.0 / 64.0);
        assert!((g.eval(p) - g.nodes[9 * 65 + 5]).max_abs() < 1e-12);
        let t = g.transposed_nodes();
        assert_eq!(t[9 * 65 + 5], g.nodes[5 * 65 + 9].swap());
    }
}
