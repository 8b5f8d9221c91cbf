//! Finite-horizon estimators: slope records, Birkhoff window averages and
//! Cesàro mixing averages over field-value events.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arrows::{Arrow, ArrowField};
use crate::error::{Error, Result};
use crate::flow::{Trajectory, VectorField};
use crate::geom::Vec2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Down,
    Up,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdCrossing {
    pub time: f64,
    pub threshold: f64,
    pub direction: Direction,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SlopeRecord {
    pub times: Vec<f64>,
    pub slopes: Vec<f64>,
    pub running_min: Vec<f64>,
    pub running_max: Vec<f64>,
    pub crossings: Vec<ThresholdCrossing>,
}

impl SlopeRecord {
    pub fn min(&self) -> f64 {
        self.running_min.last().copied().unwrap_or(f64::NAN)
    }

    pub fn max(&self) -> f64 {
        self.running_max.last().copied().unwrap_or(f64::NAN)
    }

    pub fn crossed(&self, threshold: f64, direction: Direction) -> bool {
        self.crossings
            .iter()
            .any(|c| c.threshold == threshold && c.direction == direction)
    }
}

/// Slope γ²/γ¹ at the stored samples with t ≥ `burn_in`, with running
/// extremes and crossings of each threshold in either direction.
pub fn slope_record(traj: &Trajectory, burn_in: f64, thresholds: &[f64]) -> Result<SlopeRecord> {
    let mut rec = SlopeRecord::default();
    for (index, (&t, p)) in traj.times.iter().zip(&traj.points).enumerate() {
        if t < burn_in {
            continue;
        }
        if !(p.x > 0.0) {
            return Err(Error::SlopeUndefined { index, value: p.x });
        }
        let s = p.y / p.x;
        if let Some(&prev) = rec.slopes.last() {
            for &thr in thresholds {
                if prev >= thr && s < thr {
                    rec.crossings.push(ThresholdCrossing {
                        time: t,
                        threshold: thr,
                        direction: Direction::Down,
                    });
                } else if prev <= thr && s > thr {
                    rec.crossings.push(ThresholdCrossing {
                        time: t,
                        threshold: thr,
                        direction: Direction::Up,
                    });
                }
            }
        }
        let lo = rec.running_min.last().map_or(s, |&m: &f64| m.min(s));
        let hi = rec.running_max.last().map_or(s, |&m: &f64| m.max(s));
        rec.times.push(t);
        rec.slopes.push(s);
        rec.running_min.push(lo);
        rec.running_max.push(hi);
    }
    if rec.times.is_empty() {
        return Err(Error::invalid("no trajectory samples after burn-in"));
    }
    Ok(rec)
}

/// A Monte Carlo estimate with its standard error and provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub se: f64,
    pub samples: usize,
    pub seed: u64,
    pub parameters: serde_json::Value,
}

fn window_point<R: Rng>(rng: &mut R, center: Vec2, r: f64) -> Vec2 {
    center + Vec2::new(rng.gen_range(-r..=r), rng.gen_range(-r..=r))
}

/// (2R)⁻² ∫_{|g|∞ ≤ R} f(v(center + g)) dg by uniform sampling.
pub fn birkhoff_average<F, O>(field: &F, f: O, center: Vec2, r: f64, samples: usize, seed: u64) -> Result<Estimate>
where
    F: VectorField + ?Sized,
    O: Fn(Vec2) -> f64,
{
    if !(r > 0.0) || samples == 0 {
        return Err(Error::invalid("Birkhoff average needs R > 0 and at least one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let v = f(field.eval(window_point(&mut rng, center, r))?);
        s += v;
        s2 += v * v;
    }
    let n = samples as f64;
    let mean = s / n;
    let var = if samples > 1 {
        ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(Estimate {
        estimate: mean,
        se: (var / n).sqrt(),
        samples,
        seed,
        parameters: serde_json::json!({ "center": [center.x, center.y], "R": r }),
    })
}

/// Threshold events on field values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    All,
    FirstAbove { level: f64 },
    SecondAbove { level: f64 },
    SumAbove { level: f64 },
}

impl Event {
    pub fn holds(&self, v: Vec2) -> bool {
        match *self {
            Event::All => true,
            Event::FirstAbove { level } => v.x > level,
            Event::SecondAbove { level } => v.y > level,
            Event::SumAbove { level } => v.x + v.y > level,
        }
    }
}

/// Cesàro average over shifts |g|∞ ≤ R of |P̂(T_g A ∩ B) − P̂(T_g A) P̂(B)|,
/// each term computed on a common cloud of `samples` points drawn in the
/// window of half-width R around `center`. The standard error is the mean of
/// the per-shift covariance standard errors.
#[allow(clippy::too_many_arguments)]
pub fn mixing_cesaro<F: VectorField + ?Sized>(
    field: &F,
    a: Event,
    b: Event,
    center: Vec2,
    r: f64,
    samples: usize,
    shifts: usize,
    seed: u64,
) -> Result<Estimate> {
    if !(r > 0.0) || samples < 2 || shifts == 0 {
        return Err(Error::invalid(
            "mixing estimator needs R > 0, at least two samples and one shift",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cloud: Vec<Vec2> = (0..samples).map(|_| window_point(&mut rng, center, r)).collect();
    let ib: Vec<f64> = cloud
        .iter()
        .map(|&p| Ok(if b.holds(field.eval(p)?) { 1.0 } else { 0.0 }))
        .collect::<Result<_>>()?;
    let n = samples as f64;
    let pb = ib.iter().sum::<f64>() / n;
    let (mut total, mut se_total) = (0.0, 0.0);
    let mut ia = vec![0.0; samples];
    for _ in 0..shifts {
        let g = Vec2::new(rng.gen_range(-r..=r), rng.gen_range(-r..=r));
        for (slot, &p) in ia.iter_mut().zip(&cloud) {
            *slot = if a.holds(field.eval(p + g)?) { 1.0 } else { 0.0 };
        }
        let pa = ia.iter().sum::<f64>() / n;
        let pab = ia.iter().zip(&ib).map(|(x, y)| x * y).sum::<f64>() / n;
        let cov = pab - pa * pb;
        // spread of the centred products
        let var = ia
            .iter()
            .zip(&ib)
            .map(|(x, y)| {
                let d = (x - pa) * (y - pb) - cov;
                d * d
            })
            .sum::<f64>()
            / (n - 1.0);
        total += cov.abs();
        se_total += (var / n).sqrt();
    }
    let m = shifts as f64;
    Ok(Estimate {
        estimate: total / m,
        se: se_total / m,
        samples,
        seed,
        parameters: serde_json::json!({
            "center": [center.x, center.y], "R": r, "shifts": shifts, "a": a, "b": b
        }),
    })
}

/// Indicators of `Right` in two arrow fields, as a planar evaluator.
///
/// With independently seeded fields the events {v¹ > ½} and {v² > ½} are
/// independent by construction, which makes this the null fixture for the
/// mixing estimator.
#[derive(Clone, Debug)]
pub struct IndicatorPair {
    pub first: ArrowField,
    pub second: ArrowField,
}

impl VectorField for IndicatorPair {
    fn eval(&self, p: Vec2) -> Result<Vec2> {
        let (i, j) = p.cell();
        let ind = |f: &ArrowField| if f.arrow_at(i, j) == Arrow::Right { 1.0 } else { 0.0 };
        Ok(Vec2::new(ind(&self.first), ind(&self.second)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrows::ArrowFieldSpec;
    use crate::flow::{integrate, ConstantField, FnField, IntegratorSpec};

    fn spec(t: f64) -> IntegratorSpec {
        IntegratorSpec {
            step: 1e-2,
            crossing_tol: 1e-10,
            max_time: t,
            store_every: 1,
        }
    }

    #[test]
    fn constant_right_slopes() {
        let tr = integrate(&ConstantField(Vec2::new(2.0, 0.0)), Vec2::new(1.0, 1.0), &spec(5.0)).unwrap();
        let rec = slope_record(&tr, 0.0, &[0.5]).unwrap();
        assert_eq!(rec.running_max[0], 1.0);
        assert_eq!(rec.max(), 1.0);
        for (t, s) in rec.times.iter().zip(&rec.slopes) {
            assert!((s - 1.0 / (1.0 + 2.0 * t)).abs() < 1e-12);
        }
        assert!(rec.crossed(0.5, Direction::Down));
        assert!(!rec.crossed(0.5, Direction::Up));
        for w in rec.running_min.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn constant_up_slopes() {
        let tr = integrate(&ConstantField(Vec2::new(0.0, 2.0)), Vec2::new(1.0, 1.0), &spec(5.0)).unwrap();
        let rec = slope_record(&tr, 0.0, &[4.0]).unwrap();
        assert_eq!(rec.min(), 1.0);
        assert!((rec.max() - 11.0).abs() < 1e-12);
        assert!(rec.crossed(4.0, Direction::Up));
    }

    #[test]
    fn slope_needs_positive_first_coordinate() {
        let tr = integrate(&ConstantField(Vec2::new(0.0, 1.0)), Vec2::new(0.0, 1.0), &spec(1.0)).unwrap();
        assert!(matches!(
            slope_record(&tr, 0.0, &[]),
            Err(Error::SlopeUndefined { index: 0, .. })
        ));
        let tr = integrate(&ConstantField(Vec2::new(1.0, 0.0)), Vec2::new(-1.0, 1.0), &spec(3.0)).unwrap();
        // burn-in past the sign change
        assert!(slope_record(&tr, 1.5, &[]).is_ok());
    }

    #[test]
    fn birkhoff_constant_is_exact() {
        let f = FnField(|p: Vec2| p);
        let e = birkhoff_average(&f, |_| 1.0, Vec2::new(3.0, -2.0), 5.0, 1000, 1).unwrap();
        assert_eq!(e.estimate, 1.0);
        assert_eq!(e.se, 0.0);
    }

    #[test]
    fn birkhoff_linear_observable() {
        // average of x over a centred window is the centre
        let f = FnField(|p: Vec2| p);
        let e = birkhoff_average(&f, |v| v.x, Vec2::new(3.0, 0.0), 2.0, 20_000, 9).unwrap();
        assert!((e.estimate - 3.0).abs() < 3.0 * e.se);
    }

    #[test]
    fn birkhoff_resampling_is_unbiased() {
        let iid = ArrowFieldSpec::Iid { p_right: 0.4, seed: 3 }.build().unwrap();
        let f = IndicatorPair {
            first: iid.clone(),
            second: iid,
        };
        let single = birkhoff_average(&f, |v| v.x, Vec2::ZERO, 50.0, 4000, 0).unwrap();
        let mean: f64 = (1..=32)
            .map(|s| {
                birkhoff_average(&f, |v| v.x, Vec2::ZERO, 50.0, 4000, s)
                    .unwrap()
                    .estimate
            })
            .sum::<f64>()
            / 32.0;
        assert!((mean - single.estimate).abs() < 3.0 * single.se);
    }

    #[test]
    fn birkhoff_variance_shrinks_with_window() {
        let iid = ArrowFieldSpec::Iid { p_right: 0.5, seed: 21 }.build().unwrap();
        let f = IndicatorPair {
            first: iid.clone(),
            second: iid,
        };
        let spread = |r: f64| {
            let ests: Vec<f64> = (0..24)
                .map(|k| {
                    let c = Vec2::new(1000.0 * k as f64, 0.0);
                    birkhoff_average(&f, |v| v.x, c, r, 4000, 100 + k).unwrap().estimate
                })
                .collect();
            let m = ests.iter().sum::<f64>() / ests.len() as f64;
            ests.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (ests.len() - 1) as f64
        };
        let (v2, v20) = (spread(2.0), spread(20.0));
        assert!(v20 < v2, "{v2} vs {v20}");
    }

    #[test]
    fn mixing_examples() {
        let a = ArrowFieldSpec::Iid { p_right: 0.5, seed: 1 }.build().unwrap();
        let b = ArrowFieldSpec::Iid { p_right: 0.5, seed: 2 }.build().unwrap();
        let f = IndicatorPair { first: a, second: b };
        let e = mixing_cesaro(
            &f,
            Event::FirstAbove { level: 0.5 },
            Event::SecondAbove { level: 0.5 },
            Vec2::ZERO,
            30.0,
            10_000,
            16,
            5,
        )
        .unwrap();
        assert!(e.estimate <= 3.0 * e.se, "{e:?}");

        let full = mixing_cesaro(&f, Event::All, Event::All, Vec2::ZERO, 30.0, 1000, 4, 5).unwrap();
        assert_eq!(full.estimate, 0.0);

        // a periodic field does not mix: the sub-cell event keeps its correlation
        let periodic = FnField(|p: Vec2| Vec2::new(p.x - p.x.floor(), 0.0));
        let e = mixing_cesaro(
            &periodic,
            Event::FirstAbove { level: 0.5 },
            Event::FirstAbove { level: 0.5 },
            Vec2::ZERO,
            10.0,
            5000,
            32,
            8,
        )
        .unwrap();
        assert!(e.estimate > 0.1 && e.estimate > 10.0 * e.se, "{e:?}");
    }

    #[test]
    fn estimates_serialize() {
        let f = FnField(|p: Vec2| p);
        let e = birkhoff_average(&f, |_| 1.0, Vec2::ZERO, 1.0, 10, 4).unwrap();
        let json = serde_json::to_string(&e).unwrap();
        let back: Estimate = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
    }
}
