//! The piecewise-linear tile potential F̃_r on the unit square.
//!
//! The square is cut into 16 convex-or-star-shaped polygons, each carrying an
//! affine function. Four corner pentagons have gradient (3, 3), a central
//! nine-vertex cell has gradient (2, 0) and contains the horizontal strip
//! 2/3 − 2δ ≤ y ≤ 2/3 − δ with a δ margin, and the remaining quads and
//! triangles interpolate between them. The layout is symmetric under the
//! diagonal reflection near the boundary of the square, which is what lets
//! right- and up-tiles glue smoothly after mollification.
//!
//! The plane extension is F̃(x + i, y + j) = F̃(x, y) + 2(i + j).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{segment_distance, Vec2};

/// Exclusive upper bound on δ for this layout.
pub const DELTA_MAX: f64 = 1.0 / 11.0;

const VERTEX_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellTag {
    SwPentagon,
    SePentagon,
    NwPentagon,
    NePentagon,
    Heptagon,
    Quad(u8),
    Triangle(u8),
}

/// F(x, y) = a·x + b·y + c.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Affine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Affine {
    #[inline]
    pub fn eval(&self, p: Vec2) -> f64 {
        self.a * p.x + self.b * p.y + self.c
    }

    #[inline]
    pub fn grad(&self) -> Vec2 {
        Vec2::new(self.a, self.b)
    }

    /// The affine function through three non-collinear points.
    fn through(p: [Vec2; 3], v: [f64; 3]) -> Option<Affine> {
        let u = p[1] - p[0];
        let w = p[2] - p[0];
        let det = u.cross(w);
        if det.abs() < 1e-14 {
            return None;
        }
        let (d1, d2) = (v[1] - v[0], v[2] - v[0]);
        let a = (d1 * w.y - d2 * u.y) / det;
        let b = (u.x * d2 - w.x * d1) / det;
        let c = v[0] - a * p[0].x - b * p[0].y;
        Some(Affine { a, b, c })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Vertex {
    pub name: &'static str,
    pub pos: Vec2,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Cell {
    pub tag: CellTag,
    /// Indices into the vertex table, counterclockwise.
    pub vertices: Vec<usize>,
    #[serde(skip)]
    pub polygon: Vec<Vec2>,
    pub affine: Affine,
    #[serde(skip)]
    pub bbox: (Vec2, Vec2),
}

impl Cell {
    pub fn area(&self) -> f64 {
        signed_area(&self.polygon)
    }

    /// Closed-polygon membership; boundary points count as inside.
    pub fn contains(&self, p: Vec2) -> bool {
        let (lo, hi) = self.bbox;
        if p.x < lo.x - 1e-15 || p.x > hi.x + 1e-15 || p.y < lo.y - 1e-15 || p.y > hi.y + 1e-15 {
            return false;
        }
        let n = self.polygon.len();
        let mut inside = false;
        for k in 0..n {
            let a = self.polygon[k];
            let b = self.polygon[(k + 1) % n];
            if segment_distance(p, a, b) <= 1e-15 {
                return true;
            }
            if (a.y > p.y) != (b.y > p.y) {
                let t = (p.y - a.y) / (b.y - a.y);
                if p.x < a.x + t * (b.x - a.x) {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.polygon.len();
        (0..n).map(move |k| (self.polygon[k], self.polygon[(k + 1) % n]))
    }
}

fn signed_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    0.5 * (0..n).map(|k| poly[k].cross(poly[(k + 1) % n])).sum::<f64>()
}

#[derive(Clone, Debug, Serialize)]
pub struct Tessellation {
    pub delta: f64,
    pub vertices: Vec<Vertex>,
    pub cells: Vec<Cell>,
}

// vertex indices
const O: usize = 0;
const B1: usize = 1;
const B2: usize = 2;
const B3: usize = 3;
const R1: usize = 4;
const R2: usize = 5;
const K: usize = 6;
const T2: usize = 7;
const T1: usize = 8;
const N: usize = 9;
const L2: usize = 10;
const L1: usize = 11;
const C: usize = 12;
const P1: usize = 13;
const P2: usize = 14;
const V1: usize = 15;
const V2: usize = 16;
const Q2: usize = 17;
const U1: usize = 18;
const U2: usize = 19;
const Z: usize = 20;
const S1: usize = 21;
const S2: usize = 22;

fn vertex_table(delta: f64) -> Vec<Vertex> {
    let e = 2.0 * delta;
    let t = 1.0 / 3.0;
    let tt = 2.0 / 3.0;
    let v = |name, x, y, value| Vertex {
        name,
        pos: Vec2::new(x, y),
        value,
    };
    vec![
        v("O", 0.0, 0.0, 0.0),
        v("B1", t, 0.0, 1.0),
        v("B2", tt, 0.0, 1.0),
        v("B3", 1.0, 0.0, 2.0),
        v("R1", 1.0, t, 3.0),
        v("R2", 1.0, tt, 3.0),
        v("K", 1.0, 1.0, 4.0),
        v("T2", tt, 1.0, 3.0),
        v("T1", t, 1.0, 3.0),
        v("N", 0.0, 1.0, 2.0),
        v("L2", 0.0, tt, 1.0),
        v("L1", 0.0, t, 1.0),
        v("C", 0.5, tt - 3.0 * delta, 2.0),
        v("P1", t - e / 3.0, e, 1.0 + 2.0 * e),
        v("P2", e, t - e / 3.0, 1.0 + 2.0 * e),
        v("V1", tt, e, 1.0 + 2.0 * e),
        v("V2", tt + e, e, 1.0 + 6.0 * e),
        v("Q2", 1.0 - e, t + e / 3.0, 3.0 - 2.0 * e),
        v("U1", e, tt, 1.0 + 2.0 * e),
        v("U2", e, tt + e, 1.0 + 6.0 * e),
        v("Z", 1.0 - e, tt + e / 3.0, 3.0 - 2.0 * e),
        v("S1", t + e / 3.0, 1.0 - e, 3.0 - 2.0 * e),
        v("S2", tt + e / 3.0, 1.0 - e, 3.0 - 2.0 * e),
    ]
}

fn cell_layout() -> Vec<(CellTag, Vec<usize>)> {
    use CellTag::*;
    vec![
        (SwPentagon, vec![O, B1, P1, P2, L1]),
        (SePentagon, vec![B2, B3, R1, Q2, V2]),
        (NwPentagon, vec![L2, U2, S1, T1, N]),
        (NePentagon, vec![R2, K, T2, S2, Z]),
        (Heptagon, vec![L1, P2, C, Q2, R1, R2, Z, U1, L2]),
        (Quad(0), vec![B1, B2, V1, P1]),
        (Quad(1), vec![S1, S2, T2, T1]),
        (Triangle(0), vec![B2, V2, V1]),
        (Triangle(1), vec![L2, U1, U2]),
        (Triangle(2), vec![P2, P1, C]),
        (Triangle(3), vec![P1, V1, C]),
        (Triangle(4), vec![V1, V2, C]),
        (Triangle(5), vec![V2, Q2, C]),
        (Triangle(6), vec![U1, S2, S1]),
        (Triangle(7), vec![U1, Z, S2]),
        (Triangle(8), vec![U1, S1, U2]),
    ]
}

impl Tessellation {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < DELTA_MAX) {
            return Err(Error::invalid(format!(
                "delta = {delta} is outside the admissible range (0, 1/11)"
            )));
        }
        let vertices = vertex_table(delta);
        let mut cells = Vec::new();
        for (tag, idx) in cell_layout() {
            let polygon: Vec<Vec2> = idx.iter().map(|&k| vertices[k].pos).collect();
            let affine =
                fit_affine(&idx, &vertices).ok_or_else(|| Error::Tessellation(format!("{tag:?} is degenerate")))?;
            let mut lo = polygon[0];
            let mut hi = polygon[0];
            for p in &polygon {
                lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
                hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
            }
            cells.push(Cell {
                tag,
                vertices: idx,
                polygon,
                affine,
                bbox: (lo, hi),
            });
        }
        let t = Tessellation { delta, vertices, cells };
        t.verify()?;
        Ok(t)
    }

    fn verify(&self) -> Result<()> {
        let mut total = 0.0;
        for cell in &self.cells {
            let area = cell.area();
            if area <= 0.0 {
                return Err(Error::Tessellation(format!("{:?} is not counterclockwise", cell.tag)));
            }
            total += area;
            for &k in &cell.vertices {
                let v = &self.vertices[k];
                let got = cell.affine.eval(v.pos);
                if (got - v.value).abs() > VERTEX_TOL {
                    return Err(Error::Tessellation(format!(
                        "{:?} gives {got} at vertex {} (expected {})",
                        cell.tag, v.name, v.value
                    )));
                }
            }
            // T-junctions: table vertices on this cell's boundary must match too
            for (a, b) in cell.edges() {
                for v in &self.vertices {
                    if segment_distance(v.pos, a, b) < 1e-14 {
                        let got = cell.affine.eval(v.pos);
                        if (got - v.value).abs() > VERTEX_TOL {
                            return Err(Error::Tessellation(format!(
                                "{:?} disagrees with vertex {} on edge ({}, {})-({}, {})",
                                cell.tag, v.name, a.x, a.y, b.x, b.y
                            )));
                        }
                    }
                }
            }
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Tessellation(format!("cell areas sum to {total}")));
        }
        Ok(())
    }

    /// Index of the lowest-numbered cell containing `p` ∈ [0,1]².
    pub fn locate(&self, p: Vec2) -> usize {
        for (k, cell) in self.cells.iter().enumerate() {
            if cell.contains(p) {
                return k;
            }
        }
        // rounding at a vertex shared by several cells; take the nearest
        self.cells
            .iter()
            .enumerate()
            .map(|(k, c)| {
                (
                    k,
                    c.edges()
                        .map(|(a, b)| segment_distance(p, a, b))
                        .fold(f64::MAX, f64::min),
                )
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k)
            .expect("tessellation has cells")
    }

    /// F̃ at any point of the plane.
    pub fn eval_tilde(&self, x: f64, y: f64) -> f64 {
        let (i, j) = (x.floor(), y.floor());
        let p = Vec2::new(x - i, y - j);
        self.cells[self.locate(p)].affine.eval(p) + 2.0 * (i + j)
    }

    /// ∇F̃ at any point of the plane; Z²-periodic.
    pub fn grad_tilde(&self, x: f64, y: f64) -> Vec2 {
        let p = Vec2::new(x - x.floor(), y - y.floor());
        self.cells[self.locate(p)].affine.grad()
    }

    pub fn vertex(&self, name: &str) -> Option<&Vertex> {
        self.vertices.iter().find(|v| v.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tessellation serializes")
    }
}

fn fit_affine(idx: &[usize], table: &[Vertex]) -> Option<Affine> {
    // anchor on the pair of edges spanning the largest triangle
    let n = idx.len();
    let mut best = (0.0, 0, 1, 2);
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                let (pa, pb, pc) = (table[idx[a]].pos, table[idx[b]].pos, table[idx[c]].pos);
                let area = (pb - pa).cross(pc - pa).abs();
                if area > best.0 {
                    best = (area, a, b, c);
                }
            }
        }
    }
    let (_, a, b, c) = best;
    Affine::through(
        [table[idx[a]].pos, table[idx[b]].pos, table[idx[c]].pos],
        [table[idx[a]].value, table[idx[b]].value, table[idx[c]].value],
    )
}
