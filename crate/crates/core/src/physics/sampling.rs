use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PhysicsError, ThermalPdeSpec};

/// Supervised point in physical units: position [m], time [s], temperature [°C].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataPoint {
    pub x: f64,
    pub t: f64,
    pub u: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub n0: usize,
    pub nb: usize,
    pub nr: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSets {
    pub initial: Vec<DataPoint>,
    pub boundary: Vec<DataPoint>,
    /// Interior (x, t) in physical units.
    pub collocation: Vec<(f64, f64)>,
}

/// Draws initial, boundary and collocation points.
///
/// Boundary points are drawn without replacement from the pool of
/// (boundary, timestamp) pairs, so asking for the whole pool uses every
/// timestamp exactly once on each boundary.
pub fn sample_training_sets(spec: &ThermalPdeSpec, counts: SampleCounts, seed: u64) -> Result<TrainingSets, PhysicsError> {
    let SampleCounts { n0, nb, nr } = counts;
    if n0 == 0 || nb == 0 || nr == 0 {
        return Err(PhysicsError::Counts { n0, nb, nr });
    }
    spec.validate()?;
    let series = &spec.series;
    let capacity = 2 * series.len();
    if nb > capacity {
        return Err(PhysicsError::Capacity { requested: nb, capacity });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, t0, t1) = (spec.height, spec.t_start(), spec.t_end());

    let initial = (0..n0)
        .map(|_| {
            let x = h * rng.random::<f64>();
            DataPoint { x, t: t0, u: spec.initial_value(x) }
        })
        .collect();

    // partial Fisher–Yates over pool indices: [0, n) bottom, [n, 2n) top
    let n = series.len();
    let mut pool: Vec<usize> = (0..capacity).collect();
    for i in 0..nb {
        let j = rng.random_range(i..capacity);
        pool.swap(i, j);
    }
    let boundary = pool[..nb]
        .iter()
        .map(|&k| {
            if k < n {
                DataPoint { x: 0.0, t: series.times[k], u: series.ambient[k] }
            } else {
                let k = k - n;
                DataPoint { x: h, t: series.times[k], u: series.topoil[k] }
            }
        })
        .collect();

    let collocation = (0..nr)
        .map(|_| {
            let x = loop {
                let x = h * rng.random::<f64>();
                if x > 0.0 {
                    break x;
                }
            };
            // 1 − U maps [0, 1) onto (0, 1]
            let t = t0 + (t1 - t0) * (1.0 - rng.random::<f64>());
            (x, t)
        })
        .collect();

    Ok(TrainingSets { initial, boundary, collocation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::BoundarySeries;
    use std::collections::HashSet;

    fn spec(n: usize) -> ThermalPdeSpec {
        let times: Vec<f64> = (0..n).map(|i| 60.0 * i as f64).collect();
        let mut s = ThermalPdeSpec::with_series(BoundarySeries::constant(times, 0.4, 18.0, 55.0));
        for i in 0..n {
            s.series.ambient[i] += (i as f64 * 0.01).sin();
        }
        s
    }

    #[test]
    fn replay_is_identical() {
        let s = spec(100);
        let c = SampleCounts { n0: 5, nb: 4, nr: 10 };
        assert_eq!(sample_training_sets(&s, c, 7).unwrap(), sample_training_sets(&s, c, 7).unwrap());
        assert_ne!(sample_training_sets(&s, c, 7).unwrap(), sample_training_sets(&s, c, 8).unwrap());
    }

    #[test]
    fn point_placement() {
        let s = spec(100);
        let sets = sample_training_sets(&s, SampleCounts { n0: 20, nb: 60, nr: 500 }, 1).unwrap();
        assert!(sets.initial.iter().all(|p| p.t == 0.0 && (0.0..=1.0).contains(&p.x) && p.u == s.initial_value(p.x)));
        for p in &sets.boundary {
            assert!(p.x == 0.0 || p.x == s.height);
            let v = s.series.at(p.t).unwrap();
            assert_eq!(p.u, if p.x == 0.0 { v.ambient } else { v.topoil });
        }
        assert!(sets.collocation.iter().all(|&(x, t)| x > 0.0 && x < 1.0 && t > 0.0 && t <= s.t_end()));
    }

    #[test]
    fn full_pool_uses_each_timestamp_once_per_boundary() {
        // four days of minutes
        let s = spec(5760);
        let sets = sample_training_sets(&s, SampleCounts { n0: 1, nb: 11520, nr: 1 }, 3).unwrap();
        let bottom: HashSet<u64> = sets.boundary.iter().filter(|p| p.x == 0.0).map(|p| p.t as u64).collect();
        let top: HashSet<u64> = sets.boundary.iter().filter(|p| p.x == 1.0).map(|p| p.t as u64).collect();
        assert_eq!(bottom.len(), 5760);
        assert_eq!(top.len(), 5760);
    }

    #[test]
    fn capacity_and_count_errors() {
        let s = spec(10);
        let e = sample_training_sets(&s, SampleCounts { n0: 1, nb: 21, nr: 1 }, 0).unwrap_err();
        assert_eq!(e, PhysicsError::Capacity { requested: 21, capacity: 20 });
        assert!(sample_training_sets(&s, SampleCounts { n0: 0, nb: 1, nr: 1 }, 0).is_err());
    }
}
