//! Up-right arrow fields on Z² and the lattice walks they drive.
//!
//! An arrow field assigns `Right` or `Up` to every lattice site. Fields are
//! described by a serializable [`ArrowFieldSpec`] and compiled into an
//! [`ArrowField`], which answers `arrow_at` lazily for any site.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Site, Vec2};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrow {
    Right,
    Up,
}

impl Arrow {
    #[inline]
    pub fn step(self) -> Site {
        match self {
            Arrow::Right => (1, 0),
            Arrow::Up => (0, 1),
        }
    }

    #[inline]
    pub fn vector(self) -> Vec2 {
        let (a, b) = self.step();
        Vec2::new(a as f64, b as f64)
    }

    #[inline]
    pub fn flip(self) -> Arrow {
        match self {
            Arrow::Right => Arrow::Up,
            Arrow::Up => Arrow::Right,
        }
    }
}

/// Run-length rule k ↦ L_k for [`ArrowFieldSpec::RunSchedule`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RunLengths {
    /// L_k = 2^(2^k): 2, 4, 16, 256, 65536, ...
    DoublyExponential,
    Constant {
        length: u64,
    },
    /// L_k = ceil(first · ratio^k).
    Geometric {
        first: f64,
        ratio: f64,
    },
    /// The listed lengths, then the last one repeated forever.
    Explicit {
        lengths: Vec<u64>,
    },
}

impl RunLengths {
    /// L_k, saturating at `u64::MAX`.
    pub fn length(&self, k: u64) -> u64 {
        match self {
            RunLengths::DoublyExponential => {
                if k >= 6 {
                    u64::MAX
                } else {
                    1u64 << (1u64 << k)
                }
            }
            RunLengths::Constant { length } => *length,
            RunLengths::Geometric { first, ratio } => {
                let v = (first * ratio.powf(k as f64)).ceil();
                if v >= u64::MAX as f64 {
                    u64::MAX
                } else {
                    v as u64
                }
            }
            RunLengths::Explicit { lengths } => {
                let idx = (k as usize).min(lengths.len() - 1);
                lengths[idx]
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            RunLengths::DoublyExponential => Ok(()),
            RunLengths::Constant { length } if *length == 0 => Err(Error::invalid("run length must be positive")),
            RunLengths::Constant { .. } => Ok(()),
            RunLengths::Geometric { first, ratio } => {
                if !(first.is_finite() && *first > 0.0) {
                    Err(Error::invalid("geometric run schedule needs first > 0"))
                } else if !(ratio.is_finite() && *ratio >= 1.0) {
                    Err(Error::invalid("geometric run schedule needs ratio >= 1"))
                } else {
                    Ok(())
                }
            }
            RunLengths::Explicit { lengths } => {
                if lengths.is_empty() || lengths.contains(&0) {
                    Err(Error::invalid("explicit run lengths must be nonempty and positive"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Index of the run containing anti-diagonal `level` (≥ 0) and the level
    /// at which that run starts.
    pub fn locate(&self, level: u64) -> (u64, u64) {
        match self {
            RunLengths::Constant { length } => {
                let k = level / length;
                (k, k * length)
            }
            RunLengths::Geometric { first, ratio } if *ratio == 1.0 => {
                let len = first.ceil() as u64;
                let k = level / len;
                (k, k * len)
            }
            RunLengths::Explicit { lengths } => {
                let mut start = 0u64;
                for (k, &len) in lengths.iter().enumerate() {
                    let end = start.saturating_add(len);
                    if level < end || k + 1 == lengths.len() {
                        if level < end {
                            return (k as u64, start);
                        }
                        let extra = (level - start) / len;
                        return (k as u64 + extra, start + extra * len);
                    }
                    start = end;
                }
                unreachable!("explicit lengths validated nonempty")
            }
            _ => {
                let mut start = 0u64;
                let mut k = 0u64;
                loop {
                    let end = start.saturating_add(self.length(k));
                    if level < end {
                        return (k, start);
                    }
                    start = end;
                    k += 1;
                }
            }
        }
    }

    /// Levels at which runs 1, 2, ..., `count` begin.
    pub fn boundaries(&self, count: usize) -> Vec<u64> {
        let mut out = Vec::with_capacity(count);
        let mut acc = 0u64;
        for k in 0..count as u64 {
            acc = acc.saturating_add(self.length(k));
            out.push(acc);
        }
        out
    }
}

/// A self-map of [0, 1), used by product systems and skew products.
pub trait SelfMap: Send + Sync {
    fn apply(&self, x: f64) -> f64;

    /// The inverse image, when the map is invertible.
    fn inverse(&self, _x: f64) -> Option<f64> {
        None
    }

    fn is_invertible(&self) -> bool {
        false
    }

    /// S^k(x) for signed k; negative k needs an invertible map.
    fn iterate(&self, x: f64, k: i64) -> Result<f64> {
        let mut y = x;
        if k >= 0 {
            for _ in 0..k {
                y = self.apply(y);
            }
        } else {
            if !self.is_invertible() {
                return Err(Error::NonInvertible(-k));
            }
            for _ in 0..(-k) {
                y = self.inverse(y).ok_or(Error::NonInvertible(-k))?;
            }
        }
        Ok(y)
    }
}

#[inline]
fn wrap01(x: f64) -> f64 {
    let y = x - x.floor();
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

/// Circle rotation x ↦ x + θ mod 1.
#[derive(Clone, Copy, Debug)]
pub struct Rotation(pub f64);

impl SelfMap for Rotation {
    fn apply(&self, x: f64) -> f64 {
        wrap01(x + self.0)
    }
    fn inverse(&self, x: f64) -> Option<f64> {
        Some(wrap01(x - self.0))
    }
    fn is_invertible(&self) -> bool {
        true
    }
    fn iterate(&self, x: f64, k: i64) -> Result<f64> {
        // fractional part of kθ first, so large k keeps precision
        let kt = wrap01((k as f64) * self.0.fract());
        Ok(wrap01(x + kt))
    }
}

/// Doubling map x ↦ 2x mod 1 (not invertible).
#[derive(Clone, Copy, Debug)]
pub struct Doubling;

impl SelfMap for Doubling {
    fn apply(&self, x: f64) -> f64 {
        wrap01(2.0 * x)
    }
}

/// Serializable description of a standard self-map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case")]
pub enum SelfMapSpec {
    Rotation { theta: f64 },
    Doubling,
}

impl SelfMapSpec {
    pub fn build(&self) -> Arc<dyn SelfMap> {
        match *self {
            SelfMapSpec::Rotation { theta } => Arc::new(Rotation(theta)),
            SelfMapSpec::Doubling => Arc::new(Doubling),
        }
    }
}

/// Serializable classifier [0,1)² → Arrow: `Right` iff a·x + b·y < c.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl HalfPlane {
    pub fn classify(&self, x: f64, y: f64) -> Arrow {
        if self.a * x + self.b * y < self.c {
            Arrow::Right
        } else {
            Arrow::Up
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrowFieldSpec {
    Constant {
        arrow: Arrow,
    },
    Iid {
        p_right: f64,
        seed: u64,
    },
    RunSchedule {
        lengths: RunLengths,
        #[serde(default)]
        phase: i64,
    },
    ProductSystem {
        point_x: f64,
        point_y: f64,
        map1: SelfMapSpec,
        map2: SelfMapSpec,
        classifier: HalfPlane,
    },
}

impl ArrowFieldSpec {
    pub fn doubly_exponential() -> Self {
        ArrowFieldSpec::RunSchedule {
            lengths: RunLengths::DoublyExponential,
            phase: 0,
        }
    }

    pub fn build(&self) -> Result<ArrowField> {
        ArrowField::new(self)
    }
}

/// Product of two Z-actions on [0,1) read through a classifier:
/// α(i, j) = classify(S₁^i x, S₂^j y).
#[derive(Clone)]
pub struct ProductSystem {
    pub point_x: f64,
    pub point_y: f64,
    pub map1: Arc<dyn SelfMap>,
    pub map2: Arc<dyn SelfMap>,
    pub classifier: Arc<dyn Fn(f64, f64) -> Arrow + Send + Sync>,
}

impl ProductSystem {
    pub fn new(
        point_x: f64,
        point_y: f64,
        map1: Arc<dyn SelfMap>,
        map2: Arc<dyn SelfMap>,
        classifier: Arc<dyn Fn(f64, f64) -> Arrow + Send + Sync>,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&point_x) || !(0.0..1.0).contains(&point_y) {
            return Err(Error::invalid("product system base point must lie in [0,1)²"));
        }
        if !map1.is_invertible() || !map2.is_invertible() {
            return Err(Error::invalid(
                "product system maps must be invertible to define a Z² action",
            ));
        }
        Ok(ProductSystem {
            point_x,
            point_y,
            map1,
            map2,
            classifier,
        })
    }

    fn arrow_at(&self, i: i64, j: i64) -> Arrow {
        let x = self.map1.iterate(self.point_x, i).expect("invertible by construction");
        let y = self.map2.iterate(self.point_y, j).expect("invertible by construction");
        (self.classifier)(x, y)
    }
}

#[derive(Clone)]
enum Kind {
    Constant(Arrow),
    Iid { threshold: f64, seed: u64 },
    Runs { lengths: RunLengths, phase: i64 },
    Product(ProductSystem),
}

/// A compiled arrow field. Immutable and cheap to clone.
#[derive(Clone)]
pub struct ArrowField {
    kind: Kind,
}

impl fmt::Debug for ArrowField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match &self.kind {
            Kind::Constant(a) => return write!(f, "ArrowField::Constant({a:?})"),
            Kind::Iid { .. } => "Iid",
            Kind::Runs { .. } => "RunSchedule",
            Kind::Product(_) => "ProductSystem",
        };
        write!(f, "ArrowField::{name}")
    }
}

impl ArrowField {
    pub fn new(spec: &ArrowFieldSpec) -> Result<Self> {
        let kind = match spec {
            ArrowFieldSpec::Constant { arrow } => Kind::Constant(*arrow),
            ArrowFieldSpec::Iid { p_right, seed } => {
                if !(0.0..=1.0).contains(p_right) {
                    return Err(Error::invalid(format!("p_right = {p_right} is not a probability")));
                }
                Kind::Iid {
                    threshold: *p_right,
                    seed: *seed,
                }
            }
            ArrowFieldSpec::RunSchedule { lengths, phase } => {
                lengths.validate()?;
                Kind::Runs {
                    lengths: lengths.clone(),
                    phase: *phase,
                }
            }
            ArrowFieldSpec::ProductSystem {
                point_x,
                point_y,
                map1,
                map2,
                classifier,
            } => {
                let c = *classifier;
                Kind::Product(ProductSystem::new(
                    *point_x,
                    *point_y,
                    map1.build(),
                    map2.build(),
                    Arc::new(move |x, y| c.classify(x, y)),
                )?)
            }
        };
        Ok(ArrowField { kind })
    }

    pub fn constant(arrow: Arrow) -> Self {
        ArrowField {
            kind: Kind::Constant(arrow),
        }
    }

    pub fn product(system: ProductSystem) -> Self {
        ArrowField {
            kind: Kind::Product(system),
        }
    }

    pub fn arrow_at(&self, i: i64, j: i64) -> Arrow {
        match &self.kind {
            Kind::Constant(a) => *a,
            Kind::Iid { threshold, seed } => {
                if *threshold >= 1.0 || rng::uniform3(*seed, i, j) < *threshold {
                    Arrow::Right
                } else {
                    Arrow::Up
                }
            }
            Kind::Runs { lengths, phase } => {
                let level = i.saturating_add(j).saturating_add(*phase);
                if level < 0 {
                    return Arrow::Up;
                }
                let (k, _) = lengths.locate(level as u64);
                if k % 2 == 0 {
                    Arrow::Right
                } else {
                    Arrow::Up
                }
            }
            Kind::Product(p) => p.arrow_at(i, j),
        }
    }

    #[inline]
    pub fn at(&self, site: Site) -> Arrow {
        self.arrow_at(site.0, site.1)
    }

    pub fn walk(&self, start: Site, n: usize) -> LatticeWalk {
        let mut steps = Vec::with_capacity(n);
        let mut positions = Vec::with_capacity(n + 1);
        let mut z = start;
        positions.push(z);
        for _ in 0..n {
            let a = self.at(z);
            let (di, dj) = a.step();
            z = (z.0 + di, z.1 + dj);
            steps.push(a);
            positions.push(z);
        }
        LatticeWalk {
            start,
            steps,
            positions,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeWalk {
    pub start: Site,
    pub steps: Vec<Arrow>,
    pub positions: Vec<Site>,
}

impl LatticeWalk {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn end(&self) -> Site {
        *self.positions.last().expect("walk has at least its start")
    }

    /// CSV rows `n,i,j` with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,i,j")?;
        for (n, (i, j)) in self.positions.iter().enumerate() {
            writeln!(out, "{n},{i},{j}")?;
        }
        Ok(())
    }
}

/// Nonnegative rational p/q with q > 0, compared exactly.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Ratio {
    pub num: i64,
    pub den: i64,
}

impl Ratio {
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den > 0);
        Ratio { num, den }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl PartialEq for Ratio {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl Eq for Ratio {}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Ratio {
    fn cmp(&self, o: &Self) -> Ordering {
        (self.num as i128 * o.den as i128).cmp(&(o.num as i128 * self.den as i128))
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Exact extremes of j/i over the positions with index n ≥ `burn_in`.
pub fn slope_extremes_walk(w: &LatticeWalk, burn_in: usize) -> Result<(Ratio, Ratio)> {
    let mut lo: Option<Ratio> = None;
    let mut hi: Option<Ratio> = None;
    for (n, &(i, j)) in w.positions.iter().enumerate().skip(burn_in) {
        if i <= 0 {
            return Err(Error::SlopeUndefined {
                index: n,
                value: i as f64,
            });
        }
        let r = Ratio::new(j, i);
        lo = Some(lo.map_or(r, |m| m.min(r)));
        hi = Some(hi.map_or(r, |m| m.max(r)));
    }
    match (lo, hi) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Error::invalid(format!(
            "burn-in {burn_in} leaves no positions in a walk of {} steps",
            w.len()
        ))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairOutcome {
    pub first: usize,
    pub second: usize,
    /// First point of the first walk that the second walk also visits.
    pub merged_at: Option<Site>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoalescenceReport {
    pub pairs: Vec<PairOutcome>,
}

impl CoalescenceReport {
    pub fn merged(&self) -> usize {
        self.pairs.iter().filter(|p| p.merged_at.is_some()).count()
    }

    pub fn unresolved(&self) -> usize {
        self.pairs.len() - self.merged()
    }
}

/// Walk every start for `max_steps` and test each pair for a shared site.
pub fn coalescence_check(field: &ArrowField, starts: &[Site], max_steps: usize) -> Result<CoalescenceReport> {
    if starts.is_empty() {
        return Err(Error::invalid("coalescence check needs at least one start"));
    }
    let walks: Vec<LatticeWalk> = starts.iter().map(|&z| field.walk(z, max_steps)).collect();
    // site -> earliest index, per walk
    let visited: Vec<HashMap<Site, usize>> = walks
        .iter()
        .map(|w| {
            let mut m = HashMap::with_capacity(w.positions.len());
            for (n, &p) in w.positions.iter().enumerate() {
                m.entry(p).or_insert(n);
            }
            m
        })
        .collect();
    let mut pairs = Vec::new();
    for (a, wa) in walks.iter().enumerate() {
        for (b, seen) in visited.iter().enumerate().skip(a + 1) {
            let merged_at = wa.positions.iter().copied().find(|p| seen.contains_key(p));
            pairs.push(PairOutcome {
                first: a,
                second: b,
                merged_at,
            });
        }
    }
    Ok(CoalescenceReport { pairs })
}
