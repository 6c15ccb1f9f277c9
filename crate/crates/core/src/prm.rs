//! Marked stationary Poisson point processes and their (compensated)
//! counting measures on `(0, T] x Z` with an atomic intensity measure.

use crate::error::{domain, Error, Result};
use crate::rng::{self, SimRng};
use log::warn;
use rand::distr::{Distribution, Open01};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Atomic intensity measure on a finite mark set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkSpace {
    marks: Vec<String>,
    weights: Vec<f64>,
    total_rate: f64,
}

impl MarkSpace {
    /// Marks named `z1..zm`.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let marks = (1..=weights.len()).map(|k| format!("z{k}")).collect();
        Self::with_names(marks, weights)
    }

    pub fn with_names(marks: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return domain("mark space needs at least one mark");
        }
        if marks.len() != weights.len() {
            return domain(format!(
                "{} mark names for {} weights",
                marks.len(),
                weights.len()
            ));
        }
        if let Some((k, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return domain(format!("mark weight {k} must be positive and finite, got {w}"));
        }
        let total_rate = weights.iter().sum();
        Ok(Self { marks, weights, total_rate })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn marks(&self) -> &[String] {
        &self.marks
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    /// Λ = ν(Z).
    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    /// ν(B).
    pub fn measure(&self, set: &MarkSet) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|(k, _)| set.contains(*k))
            .map(|(_, w)| w)
            .sum()
    }

    /// Expected number of events in `(a, b] x B`.
    pub fn intensity(&self, a: f64, b: f64, set: &MarkSet) -> f64 {
        (b - a) * self.measure(set)
    }
}

/// A subset of the mark indices `0..m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MarkSet {
    members: Vec<bool>,
}

impl MarkSet {
    pub fn all(m: usize) -> Self {
        Self { members: vec![true; m] }
    }

    pub fn empty(m: usize) -> Self {
        Self { members: vec![false; m] }
    }

    pub fn single(m: usize, k: usize) -> Self {
        Self::from_indices(m, &[k])
    }

    /// Panics if an index is out of range.
    pub fn from_indices(m: usize, indices: &[usize]) -> Self {
        let mut members = vec![false; m];
        for &k in indices {
            assert!(k < m, "mark index {k} out of range for {m} marks");
            members[k] = true;
        }
        Self { members }
    }

    pub fn contains(&self, k: usize) -> bool {
        self.members.get(k).copied().unwrap_or(false)
    }

    pub fn universe(&self) -> usize {
        self.members.len()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(k, _)| k)
    }

    pub fn is_disjoint(&self, other: &MarkSet) -> bool {
        self.members
            .iter()
            .zip(&other.members)
            .all(|(a, b)| !(*a && *b))
    }

    pub fn union(&self, other: &MarkSet) -> MarkSet {
        let members = self
            .members
            .iter()
            .zip(&other.members)
            .map(|(a, b)| *a || *b)
            .collect();
        MarkSet { members }
    }
}

/// One point `(t_i, z_i)` of the process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub mark: usize,
}

/// A realization of the marked point process on `(0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonPath {
    horizon: f64,
    events: Vec<Event>,
    seed: Option<u64>,
}

impl PoissonPath {
    /// Validates strict time ordering, the `(0, T]` window and mark range.
    pub fn from_events(horizon: f64, events: Vec<Event>, n_marks: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return domain(format!("horizon must be positive, got {horizon}"));
        }
        let mut prev = 0.0;
        for (i, e) in events.iter().enumerate() {
            if !(e.time > prev) {
                return domain(format!(
                    "event {i} at t={} is not strictly after {prev}",
                    e.time
                ));
            }
            if e.time > horizon {
                return domain(format!("event {i} at t={} beyond horizon {horizon}", e.time));
            }
            if e.mark >= n_marks {
                return domain(format!("event {i} has mark {} of {n_marks}", e.mark));
            }
            prev = e.time;
        }
        Ok(Self { horizon, events, seed: None })
    }

    pub fn empty(horizon: f64) -> Self {
        Self { horizon, events: Vec::new(), seed: None }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Events with `a < t_i <= b`.
    pub fn window(&self, a: f64, b: f64) -> &[Event] {
        let lo = self.events.partition_point(|e| e.time <= a);
        let hi = self.events.partition_point(|e| e.time <= b);
        &self.events[lo..hi.max(lo)]
    }

    /// Events with `t_i <= t`.
    pub fn up_to(&self, t: f64) -> &[Event] {
        let hi = self.events.partition_point(|e| e.time <= t);
        &self.events[..hi]
    }

    /// Events with `t_i < t`.
    pub fn before(&self, t: f64) -> &[Event] {
        let hi = self.events.partition_point(|e| e.time < t);
        &self.events[..hi]
    }

    /// Writes `t,mark_index` rows.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "mark_index"])?;
        for e in &self.events {
            out.write_record([format!("{:e}", e.time), e.mark.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Draws `n ~ Poisson(eta)`.
pub fn sample_count<R: Rng + ?Sized>(eta: f64, rng: &mut R) -> Result<u64> {
    if !(eta.is_finite() && eta >= 0.0) {
        return domain(format!("Poisson mean must be finite and nonnegative, got {eta}"));
    }
    if eta == 0.0 {
        return Ok(0);
    }
    let dist = rand_distr::Poisson::new(eta)
        .map_err(|e| Error::Domain(format!("Poisson({eta}): {e}")))?;
    Ok(dist.sample(rng) as u64)
}

/// Samples the process on `(0, T]`: exponential gaps at rate Λ, marks drawn
/// independently with probability `ν_k / Λ`.
pub fn sample_path<R: Rng + ?Sized>(
    ms: &MarkSpace,
    horizon: f64,
    rng: &mut R,
) -> Result<PoissonPath> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return domain(format!("horizon must be positive and finite, got {horizon}"));
    }
    let rate = ms.total_rate();
    let cumulative: Vec<f64> = ms
        .weights()
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let mut events = Vec::new();
    let mut t = 0.0f64;
    loop {
        let u: f64 = Open01.sample(rng);
        let next = t + (-u.ln()) / rate;
        if next > horizon {
            break;
        }
        let time = if next > t {
            next
        } else {
            let bumped = t.next_up();
            warn!("simultaneous event times at t={t}; moved later event to {bumped}");
            if bumped > horizon {
                break;
            }
            bumped
        };
        let target = rng.random::<f64>() * rate;
        let mark = cumulative
            .partition_point(|c| *c <= target)
            .min(ms.len() - 1);
        events.push(Event { time, mark });
        t = time;
    }
    Ok(PoissonPath { horizon, events, seed: None })
}

/// [`sample_path`] on a fresh generator seeded with `seed`; the seed is
/// recorded on the path.
pub fn sample_path_seeded(ms: &MarkSpace, horizon: f64, seed: u64) -> Result<PoissonPath> {
    let mut rng: SimRng = rng::seeded(seed);
    let mut path = sample_path(ms, horizon, &mut rng)?;
    path.seed = Some(seed);
    Ok(path)
}

fn check_window(path: &PoissonPath, a: f64, b: f64) -> Result<()> {
    if !(a >= 0.0 && a <= b && b <= path.horizon) {
        return domain(format!(
            "window ({a}, {b}] must satisfy 0 <= a <= b <= {}",
            path.horizon
        ));
    }
    Ok(())
}

/// N((a, b] x B).
pub fn count(path: &PoissonPath, a: f64, b: f64, set: &MarkSet) -> Result<u64> {
    check_window(path, a, b)?;
    Ok(path
        .window(a, b)
        .iter()
        .filter(|e| set.contains(e.mark))
        .count() as u64)
}

/// N((a, b] x B) - (b - a) ν(B).
pub fn compensated(
    ms: &MarkSpace,
    path: &PoissonPath,
    a: f64,
    b: f64,
    set: &MarkSet,
) -> Result<f64> {
    let n = count(path, a, b, set)?;
    Ok(n as f64 - ms.intensity(a, b, set))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_event() -> PoissonPath {
        PoissonPath::from_events(1.0, vec![Event { time: 0.5, mark: 0 }], 1).unwrap()
    }

    #[test]
    fn zero_mean_count_is_zero() {
        let mut rng = rng::seeded(1);
        for _ in 0..100 {
            assert_eq!(sample_count(0.0, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn bad_means_are_rejected() {
        let mut rng = rng::seeded(1);
        assert!(sample_count(-1.0, &mut rng).is_err());
        assert!(sample_count(f64::NAN, &mut rng).is_err());
        assert!(sample_count(f64::INFINITY, &mut rng).is_err());
    }

    #[test]
    fn mark_space_invariants() {
        assert!(MarkSpace::new(vec![]).is_err());
        assert!(MarkSpace::new(vec![1.0, 0.0]).is_err());
        assert!(MarkSpace::new(vec![1.0, -2.0]).is_err());
        let ms = MarkSpace::new(vec![1.0, 3.0]).unwrap();
        assert_eq!(ms.total_rate(), 4.0);
        assert_eq!(ms.measure(&MarkSet::single(2, 1)), 3.0);
    }

    #[test]
    fn nonpositive_horizon_rejected() {
        let ms = MarkSpace::new(vec![1.0]).unwrap();
        let mut rng = rng::seeded(0);
        assert!(sample_path(&ms, 0.0, &mut rng).is_err());
        assert!(sample_path(&ms, -1.0, &mut rng).is_err());
    }

    #[test]
    fn vanishing_horizon_gives_empty_paths() {
        let ms = MarkSpace::new(vec![1.0]).unwrap();
        for seed in 0..100 {
            assert!(sample_path_seeded(&ms, 1e-12, seed).unwrap().is_empty());
        }
    }

    #[test]
    fn boundary_convention() {
        let p = one_event();
        let all = MarkSet::all(1);
        assert_eq!(count(&p, 0.0, 0.5, &all).unwrap(), 1);
        assert_eq!(count(&p, 0.5, 1.0, &all).unwrap(), 0);
        assert!(count(&p, 0.6, 0.5, &all).is_err());
        assert!(count(&p, 0.0, 1.5, &all).is_err());
    }

    #[test]
    fn compensated_of_empty_path() {
        let ms = MarkSpace::new(vec![2.0]).unwrap();
        let p = PoissonPath::empty(1.0);
        assert_eq!(compensated(&ms, &p, 0.0, 1.0, &MarkSet::all(1)).unwrap(), -2.0);
        let ms = MarkSpace::new(vec![1.0]).unwrap();
        let v = compensated(&ms, &one_event(), 0.25, 0.75, &MarkSet::all(1)).unwrap();
        assert_eq!(v, 1.0 - 0.5);
    }

    #[test]
    fn invalid_events_rejected() {
        let e = |t| Event { time: t, mark: 0 };
        assert!(PoissonPath::from_events(1.0, vec![e(0.0)], 1).is_err());
        assert!(PoissonPath::from_events(1.0, vec![e(0.5), e(0.5)], 1).is_err());
        assert!(PoissonPath::from_events(1.0, vec![e(1.5)], 1).is_err());
        assert!(PoissonPath::from_events(1.0, vec![Event { time: 0.5, mark: 3 }], 1).is_err());
    }

    #[test]
    fn csv_dump() {
        let mut buf = Vec::new();
        one_event().write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,mark_index\n5e-1,0\n");
    }

    proptest! {
        #[test]
        fn reproducible_and_well_formed(seed in any::<u64>(), w1 in 0.1f64..5.0, w2 in 0.1f64..5.0) {
            let ms = MarkSpace::new(vec![w1, w2]).unwrap();
            let a = sample_path_seeded(&ms, 3.0, seed).unwrap();
            let b = sample_path_seeded(&ms, 3.0, seed).unwrap();
            prop_assert_eq!(&a, &b);
            let rebuilt = PoissonPath::from_events(3.0, a.events().to_vec(), 2);
            prop_assert!(rebuilt.is_ok());
        }

        #[test]
        fn count_is_additive(seed in any::<u64>(), a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
            let ms = MarkSpace::new(vec![5.0, 2.0, 1.0]).unwrap();
            let path = sample_path_seeded(&ms, 1.0, seed).unwrap();
            let mut s = [a, b, c];
            s.sort_by(f64::total_cmp);
            let b1 = MarkSet::from_indices(3, &[0, 2]);
            let b2 = MarkSet::single(3, 1);
            let all = b1.union(&b2);
            prop_assert_eq!(
                count(&path, s[0], s[2], &all).unwrap(),
                count(&path, s[0], s[2], &b1).unwrap() + count(&path, s[0], s[2], &b2).unwrap()
            );
            prop_assert_eq!(
                count(&path, s[0], s[2], &all).unwrap(),
                count(&path, s[0], s[1], &all).unwrap() + count(&path, s[1], s[2], &all).unwrap()
            );
        }
    }
}
