//! Trajectory integration with lattice-crossing events, regularity checks
//! against the discrete walk, and the space-time scalar field.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::arrows::{Arrow, ArrowField};
use crate::error::{Error, Result};
use crate::geom::{Site, Vec2};

/// Anything that can be evaluated at a point of the plane.
pub trait VectorField: Send + Sync {
    fn eval(&self, p: Vec2) -> Result<Vec2>;
}

impl<T: VectorField + ?Sized> VectorField for &T {
    fn eval(&self, p: Vec2) -> Result<Vec2> {
        (**self).eval(p)
    }
}

impl<T: VectorField + ?Sized> VectorField for Box<T> {
    fn eval(&self, p: Vec2) -> Result<Vec2> {
        (**self).eval(p)
    }
}

impl<T: VectorField + ?Sized> VectorField for std::sync::Arc<T> {
    fn eval(&self, p: Vec2) -> Result<Vec2> {
        (**self).eval(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantField(pub Vec2);

impl VectorField for ConstantField {
    fn eval(&self, _p: Vec2) -> Result<Vec2> {
        Ok(self.0)
    }
}

/// Adapter for closures.
pub struct FnField<F>(pub F);

impl<F: Fn(Vec2) -> Vec2 + Send + Sync> VectorField for FnField<F> {
    fn eval(&self, p: Vec2) -> Result<Vec2> {
        Ok((self.0)(p))
    }
}

/// Fixed-step classical RK4.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSpec {
    pub step: f64,
    pub crossing_tol: f64,
    pub max_time: f64,
    /// Keep every K-th step in the stored polyline (events are always kept).
    pub store_every: usize,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        IntegratorSpec {
            step: 1e-3,
            crossing_tol: 1e-10,
            max_time: 10.0,
            store_every: 10,
        }
    }
}

impl IntegratorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid("integrator step must be positive"));
        }
        if !(self.crossing_tol > 0.0) {
            return Err(Error::invalid("crossing tolerance must be positive"));
        }
        if !(self.max_time >= 0.0 && self.max_time.is_finite()) {
            return Err(Error::invalid("max time must be finite and nonnegative"));
        }
        if self.store_every == 0 {
            return Err(Error::invalid("store_every must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Line {
    /// The vertical line x = i.
    X(i64),
    /// The horizontal line y = j.
    Y(i64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CrossingEvent {
    pub time: f64,
    pub line: Line,
    /// Lattice cell entered at this crossing.
    pub cell: Site,
    pub point: Vec2,
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<Vec2>,
    pub events: Vec<CrossingEvent>,
}

impl Trajectory {
    pub fn start(&self) -> Vec2 {
        self.points[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.points.last().expect("trajectory has a start point")
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("trajectory has a start time")
    }

    /// CSV rows `t,x,y` with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x,y")?;
        for (t, p) in self.times.iter().zip(&self.points) {
            writeln!(out, "{t:?},{:?},{:?}", p.x, p.y)?;
        }
        Ok(())
    }

    /// CSV rows `t,line,i,j`: the crossed line and the cell entered.
    pub fn write_events_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,line,i,j")?;
        for e in &self.events {
            let line = match e.line {
                Line::X(i) => format!("x={i}"),
                Line::Y(j) => format!("y={j}"),
            };
            writeln!(out, "{:?},{line},{},{}", e.time, e.cell.0, e.cell.1)?;
        }
        Ok(())
    }
}

#[inline]
fn hermite(p0: Vec2, p1: Vec2, f0: Vec2, f1: Vec2, h: f64, s: f64) -> Vec2 {
    let s2 = s * s;
    let s3 = s2 * s;
    p0 * (2.0 * s3 - 3.0 * s2 + 1.0)
        + f0 * ((s3 - 2.0 * s2 + s) * h)
        + p1 * (-2.0 * s3 + 3.0 * s2)
        + f1 * ((s3 - s2) * h)
}

#[inline]
fn rk4_step<F: VectorField + ?Sized>(field: &F, y: Vec2, k1: Vec2, h: f64) -> Result<Vec2> {
    let k2 = field.eval(y + k1 * (0.5 * h))?;
    let k3 = field.eval(y + k2 * (0.5 * h))?;
    let k4 = field.eval(y + k3 * h)?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Lines of one coordinate crossed between a and b, in travel order, with
/// the cell index entered on each.
fn crossed(a: f64, b: f64) -> Vec<(i64, i64)> {
    let (fa, fb) = (a.floor() as i64, b.floor() as i64);
    if fb > fa {
        (fa + 1..=fb).map(|n| (n, n)).collect()
    } else if fb < fa {
        (fb + 1..=fa).rev().map(|n| (n, n - 1)).collect()
    } else {
        Vec::new()
    }
}

/// Integrate γ' = v(γ), γ(0) = z up to `spec.max_time`.
pub fn integrate<F: VectorField + ?Sized>(field: &F, z: Vec2, spec: &IntegratorSpec) -> Result<Trajectory> {
    spec.validate()?;
    if !z.is_finite() {
        return Err(Error::invalid("start point must be finite"));
    }
    let mut traj = Trajectory {
        times: vec![0.0],
        points: vec![z],
        events: Vec::new(),
    };
    let mut t = 0.0;
    let mut y = z;
    let mut cell = z.cell();
    let mut k1 = field.eval(y)?;
    let total = spec.max_time;
    let steps = (total / spec.step).ceil() as u64;
    let mut pending: Vec<CrossingEvent> = Vec::new();
    for n in 0..steps {
        let t1 = if n + 1 == steps {
            total
        } else {
            (n + 1) as f64 * spec.step
        };
        let h = t1 - t;
        if h <= 0.0 {
            break;
        }
        let y1 = rk4_step(field, y, k1, h)?;
        if !y1.is_finite() {
            return Err(Error::NonFinite { time: t, last: y });
        }
        let k1_next = field.eval(y1)?;
        if !k1_next.is_finite() {
            return Err(Error::NonFinite { time: t1, last: y1 });
        }
        let cx = crossed(y.x, y1.x);
        let cy = crossed(y.y, y1.y);
        if !cx.is_empty() || !cy.is_empty() {
            pending.clear();
            let dense = |s: f64| hermite(y, y1, k1, k1_next, h, s);
            let s_tol = spec.crossing_tol / h;
            for (axis, list) in [(0, &cx), (1, &cy)] {
                for &(line, entered) in list.iter() {
                    let l = line as f64;
                    let coord = |s: f64| if axis == 0 { dense(s).x } else { dense(s).y };
                    let rising = if axis == 0 { y1.x > y.x } else { y1.y > y.y };
                    // bisection on the dense output for the first reach of the line
                    let (mut lo, mut hi) = (0.0f64, 1.0f64);
                    while (hi - lo) > s_tol {
                        let mid = 0.5 * (lo + hi);
                        let past = if rising { coord(mid) >= l } else { coord(mid) < l };
                        if past {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    let s = hi;
                    let mut point = dense(s);
                    let line_kind = if axis == 0 {
                        point.x = l;
                        Line::X(line)
                    } else {
                        point.y = l;
                        Line::Y(line)
                    };
                    pending.push(CrossingEvent {
                        time: t + s * h,
                        line: line_kind,
                        cell: (if axis == 0 { entered } else { 0 }, if axis == 1 { entered } else { 0 }),
                        point,
                    });
                }
            }
            pending.sort_by(|a, b| a.time.total_cmp(&b.time));
            for mut e in pending.drain(..) {
                match e.line {
                    Line::X(_) => cell.0 = e.cell.0,
                    Line::Y(_) => cell.1 = e.cell.1,
                }
                e.cell = cell;
                traj.events.push(e);
            }
        }
        t = t1;
        y = y1;
        k1 = k1_next;
        if (n + 1) % spec.store_every as u64 == 0 || n + 1 == steps {
            traj.times.push(t);
            traj.points.push(y);
        }
    }
    Ok(traj)
}

/// Cells visited in order: the start cell and every cell entered.
pub fn visited_cells(traj: &Trajectory) -> Vec<Site> {
    let mut out = vec![traj.start().cell()];
    for e in &traj.events {
        if out.last() != Some(&e.cell) {
            out.push(e.cell);
        }
    }
    out
}

/// Membership in Ω_{(i,j)} for the cell containing p: the part of a Right
/// cell below the strip top, or of an Up cell left of its mirror.
pub fn in_regular_region(p: Vec2, arrows: &ArrowField, delta: f64) -> bool {
    let (i, j) = p.cell();
    let q = p - Vec2::new(i as f64, j as f64);
    let bound = 2.0 / 3.0 - delta;
    match arrows.arrow_at(i, j) {
        Arrow::Right => q.y <= bound,
        Arrow::Up => q.x <= bound,
    }
}

/// Whether the visited cells follow the lattice walk from the first cell.
pub fn is_regular(traj: &Trajectory, arrows: &ArrowField) -> Result<bool> {
    let cells = visited_cells(traj);
    if cells.len() < 2 {
        return Err(Error::invalid(
            "regularity needs a trajectory visiting at least two cells",
        ));
    }
    Ok(matching_prefix(&cells, arrows) == cells.len())
}

/// Number of leading visited cells that agree with the lattice walk.
pub fn matching_prefix(cells: &[Site], arrows: &ArrowField) -> usize {
    let walk = arrows.walk(cells[0], cells.len() - 1);
    cells.iter().zip(&walk.positions).take_while(|(a, b)| a == b).count()
}

/// u(t, x) built from a planar up-right field v through A = [[1, 1], [u0, u1]]:
/// the slope of A·v(A⁻¹(t, x)).
#[derive(Clone, Debug)]
pub struct SpaceTimeField<F> {
    pub base: F,
    pub u0: f64,
    pub u1: f64,
}

impl<F: VectorField> SpaceTimeField<F> {
    pub fn new(base: F, u0: f64, u1: f64) -> Result<Self> {
        if !(u0 >= 0.0 && u0 < u1 && u1.is_finite()) {
            return Err(Error::invalid(format!("need 0 <= u0 < u1, got u0 = {u0}, u1 = {u1}")));
        }
        Ok(SpaceTimeField { base, u0, u1 })
    }

    /// A⁻¹(t, x).
    pub fn preimage(&self, t: f64, x: f64) -> Vec2 {
        let det = self.u1 - self.u0;
        Vec2::new((self.u1 * t - x) / det, (x - self.u0 * t) / det)
    }

    pub fn spacetime_eval(&self, t: f64, x: f64) -> Result<f64> {
        let w = self.base.eval(self.preimage(t, x))?;
        let s = w.x + w.y;
        if !(s > 0.0) {
            return Err(Error::DegenerateField { value: w });
        }
        Ok(((self.u0 * w.x + self.u1 * w.y) / s).clamp(self.u0, self.u1))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScalarPath {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
}

impl ScalarPath {
    /// (x(t) − x0)/(t − t0) at every stored time after the first.
    pub fn running_velocity(&self) -> Vec<(f64, f64)> {
        let (t0, x0) = (self.times[0], self.xs[0]);
        self.times
            .iter()
            .zip(&self.xs)
            .skip(1)
            .map(|(&t, &x)| (t, (x - x0) / (t - t0)))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x")?;
        for (t, x) in self.times.iter().zip(&self.xs) {
            writeln!(out, "{t:?},{x:?}")?;
        }
        Ok(())
    }
}

/// Scalar RK4 for x' = u(t, x) on [t0, t_end].
pub fn spacetime_integrate<F: VectorField>(
    f: &SpaceTimeField<F>,
    t0: f64,
    x0: f64,
    t_end: f64,
    spec: &IntegratorSpec,
) -> Result<ScalarPath> {
    spec.validate()?;
    if !(t_end > t0) {
        return Err(Error::invalid("end time must exceed start time"));
    }
    let mut path = ScalarPath {
        times: vec![t0],
        xs: vec![x0],
    };
    let steps = ((t_end - t0) / spec.step).ceil() as u64;
    let (mut t, mut x) = (t0, x0);
    for n in 0..steps {
        let t1 = if n + 1 == steps {
            t_end
        } else {
            t0 + (n + 1) as f64 * spec.step
        };
        let h = t1 - t;
        let k1 = f.spacetime_eval(t, x)?;
        let k2 = f.spacetime_eval(t + 0.5 * h, x + 0.5 * h * k1)?;
        let k3 = f.spacetime_eval(t + 0.5 * h, x + 0.5 * h * k2)?;
        let k4 = f.spacetime_eval(t1, x + h * k3)?;
        let x1 = x + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
        if !x1.is_finite() {
            return Err(Error::NonFinite {
                time: t,
                last: Vec2::new(t, x),
            });
        }
        t = t1;
        x = x1;
        if (n + 1) % spec.store_every as u64 == 0 || n + 1 == steps {
            path.times.push(t);
            path.xs.push(x);
        }
    }
    Ok(path)
}
