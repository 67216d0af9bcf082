//! Age feature generation and Hill-number diversity.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::scenario::{AgeShape, Preferences, Sign};

/// Number of decade groups, `[0-9]` through `[80-89]`.
pub const GROUP_COUNT: usize = 9;
/// Divisor that maps ages onto `[0, 1]`.
pub const AGE_SCALE: f64 = 90.0;

// Count templates at 90 nodes. Bell is symmetric about [40-49], inverse bell
// is its complement, and the skewed shapes are mirrored monotone ramps.
const UNIFORM: [usize; GROUP_COUNT] = [10, 10, 10, 10, 10, 10, 10, 10, 10];
const BELL: [usize; GROUP_COUNT] = [2, 5, 10, 16, 24, 16, 10, 5, 2];
const INVERSE_BELL: [usize; GROUP_COUNT] = [15, 12, 9, 7, 4, 7, 9, 12, 15];
const LEFT_SKEWED: [usize; GROUP_COUNT] = [1, 2, 3, 5, 7, 10, 14, 20, 28];
const RIGHT_SKEWED: [usize; GROUP_COUNT] = [28, 20, 14, 10, 7, 5, 3, 2, 1];

pub fn template(shape: AgeShape) -> [usize; GROUP_COUNT] {
    match shape {
        AgeShape::Uniform => UNIFORM,
        AgeShape::Bell => BELL,
        AgeShape::InverseBell => INVERSE_BELL,
        AgeShape::LeftSkewed => LEFT_SKEWED,
        AgeShape::RightSkewed => RIGHT_SKEWED,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct AgeGroupSpec {
    pub group: usize,
    pub count: usize,
}

impl AgeGroupSpec {
    pub fn lower_age(&self) -> u32 {
        (self.group * 10) as u32
    }

    pub fn upper_age(&self) -> u32 {
        (self.group * 10 + 9) as u32
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.lower_age(), self.upper_age())
    }
}

/// Group counts for `shape` scaled to `node_count`. Scaling uses the
/// largest-remainder rule with ties going to the lower group, so the counts
/// always sum to `node_count`.
pub fn group_counts(shape: AgeShape, node_count: usize) -> Vec<AgeGroupSpec> {
    let weights = template(shape);
    let total: usize = weights.iter().sum();
    let mut counts = [0usize; GROUP_COUNT];
    let mut remainders = [0usize; GROUP_COUNT];
    for g in 0..GROUP_COUNT {
        let scaled = weights[g] * node_count;
        counts[g] = scaled / total;
        remainders[g] = scaled % total;
    }
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..GROUP_COUNT).collect();
    order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]).then(a.cmp(&b)));
    for &g in order.iter().take(node_count - assigned) {
        counts[g] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(group, &count)| AgeGroupSpec { group, count })
        .collect()
}

/// Per-node social DNA over an `l`-length feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Sdna {
    pub p: Vec<Sign>,
    pub wp: Vec<f64>,
    pub h: Vec<Sign>,
    pub wh: Vec<f64>,
}

impl Sdna {
    pub fn single(prefs: Preferences) -> Self {
        Self {
            p: vec![prefs.p],
            wp: vec![prefs.wp],
            h: vec![prefs.h],
            wh: vec![prefs.wh],
        }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub ages: Vec<u32>,
    pub groups: Vec<usize>,
    /// One feature vector per node; the shipped generators use `[age / 90]`.
    pub features: Vec<Vec<f64>>,
    pub sdna: Vec<Sdna>,
}

impl Population {
    /// Builds a population with the same sDNA on every node.
    pub fn homogeneous(ages: Vec<u32>, prefs: Preferences) -> Self {
        let groups = ages.iter().map(|&a| (a / 10) as usize).collect();
        let features = ages.iter().map(|&a| vec![a as f64 / AGE_SCALE]).collect();
        let sdna = vec![Sdna::single(prefs); ages.len()];
        Self {
            ages,
            groups,
            features,
            sdna,
        }
    }

    pub fn len(&self) -> usize {
        self.ages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ages.is_empty()
    }

    pub fn group_sizes(&self) -> [usize; GROUP_COUNT] {
        let mut sizes = [0; GROUP_COUNT];
        for &g in &self.groups {
            sizes[g] += 1;
        }
        sizes
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["node_id", "age", "group"])?;
        for (i, (&age, &g)) in self.ages.iter().zip(&self.groups).enumerate() {
            out.write_record([i.to_string(), age.to_string(), g.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Draws ages group by group: node ids are assigned in group order and each
/// group contributes exactly its count of ages, uniform over its decade.
pub fn sample_ages(spec: &[AgeGroupSpec], stream: &Stream) -> Vec<u32> {
    let mut rng = stream.sequential();
    let mut ages = Vec::with_capacity(spec.iter().map(|s| s.count).sum());
    for g in spec {
        for _ in 0..g.count {
            ages.push(rng.random_range(g.lower_age()..=g.upper_age()));
        }
    }
    ages
}

/// Hill number of order `q` over group abundances.
pub fn hill_number(counts: &[usize], q: f64) -> Result<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyCounts);
    }
    if !(q.is_finite() && q >= 0.0) {
        return Err(Error::invalid("q", format!("order {q} must be finite and non-negative")));
    }
    let props = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| c as f64 / total as f64);
    if q == 1.0 {
        let entropy: f64 = props.map(|p| -p * p.ln()).sum();
        Ok(entropy.exp())
    } else {
        let sum: f64 = props.map(|p| p.powf(q)).sum();
        Ok(sum.powf(1.0 / (1.0 - q)))
    }
}

pub fn spec_counts(spec: &[AgeGroupSpec]) -> Vec<usize> {
    spec.iter().map(|s| s.count).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngPolicy, StreamLabel};
    use proptest::prelude::*;

    fn counts(shape: AgeShape, n: usize) -> Vec<usize> {
        spec_counts(&group_counts(shape, n))
    }

    #[test]
    fn uniform_ninety_is_ten_each() {
        assert_eq!(counts(AgeShape::Uniform, 90), vec![10; 9]);
    }

    #[test]
    fn bell_is_unimodal_at_forties() {
        let c = counts(AgeShape::Bell, 90);
        assert_eq!(c.iter().sum::<usize>(), 90);
        let peak = (0..9).max_by_key(|&g| c[g]).unwrap();
        assert_eq!(peak, 4);
        assert!(c[..=4].windows(2).all(|w| w[0] <= w[1]));
        assert!(c[4..].windows(2).all(|w| w[0] >= w[1]));
        let ib = counts(AgeShape::InverseBell, 90);
        assert_eq!((0..9).min_by_key(|&g| ib[g]).unwrap(), 4);
    }

    #[test]
    fn left_skewed_mostly_over_sixty() {
        let c = counts(AgeShape::LeftSkewed, 90);
        assert!(c[6..].iter().sum::<usize>() > 45);
        let r = counts(AgeShape::RightSkewed, 90);
        assert!(r[..3].iter().sum::<usize>() > 45);
        let mut mirrored = r.clone();
        mirrored.reverse();
        assert_eq!(mirrored, c);
    }

    #[test]
    fn counts_scale_to_any_size() {
        for shape in AgeShape::ALL {
            for n in [1, 7, 12, 45, 90, 91, 500] {
                let c = counts(shape, n);
                assert_eq!(c.len(), GROUP_COUNT);
                assert_eq!(c.iter().sum::<usize>(), n, "{shape} {n}");
            }
            assert_eq!(counts(shape, 90).to_vec(), template(shape).to_vec());
        }
    }

    #[test]
    fn ages_respect_groups() {
        let stream = RngPolicy::new(5).stream(StreamLabel::FeatureGen);
        let spec = group_counts(AgeShape::Uniform, 90);
        let ages = sample_ages(&spec, &stream);
        let pop = Population::homogeneous(ages.clone(), Preferences::new(Sign::Neutral, 0.0, Sign::Neutral, 0.0));
        assert_eq!(pop.group_sizes(), [10; 9]);
        for (i, &a) in pop.ages.iter().enumerate() {
            assert!(a <= 89);
            assert_eq!(pop.features[i][0], a as f64 / 90.0);
        }
        assert_eq!(sample_ages(&spec, &stream), ages);
    }

    #[test]
    fn single_group_stays_in_first_decade() {
        let mut spec = group_counts(AgeShape::Uniform, 0);
        spec[0].count = 25;
        let ages = sample_ages(&spec, &RngPolicy::new(9).stream(StreamLabel::FeatureGen));
        assert_eq!(ages.len(), 25);
        assert!(ages.iter().all(|&a| a <= 9));
    }

    #[test]
    fn hill_examples() {
        assert!((hill_number(&[1, 2, 3], 2.0).unwrap() - 36.0 / 14.0).abs() < 1e-12);
        for shape in AgeShape::ALL {
            assert!((hill_number(&counts(shape, 90), 0.0).unwrap() - 9.0).abs() < 1e-12);
        }
        for q in [0.0, 0.5, 1.0, 2.0, 3.5, 5.0] {
            assert!((hill_number(&[10; 9], q).unwrap() - 9.0).abs() < 1e-9);
        }
        assert!(matches!(hill_number(&[0, 0], 1.0), Err(Error::EmptyCounts)));
        assert!(hill_number(&[], 1.0).is_err());
    }

    #[test]
    fn hill_continuous_at_one() {
        for shape in AgeShape::ALL {
            let c = counts(shape, 90);
            let at = hill_number(&c, 1.0).unwrap();
            for q in [1.0 - 1e-6, 1.0 + 1e-6] {
                assert!((hill_number(&c, q).unwrap() - at).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn hill_ordering_of_templates() {
        let h = |s| hill_number(&counts(s, 90), 2.0).unwrap();
        assert!(h(AgeShape::Uniform) >= h(AgeShape::InverseBell));
        assert!(h(AgeShape::InverseBell) >= h(AgeShape::Bell));
        assert!(h(AgeShape::Bell) >= h(AgeShape::LeftSkewed));
        assert!(h(AgeShape::Bell) >= h(AgeShape::RightSkewed));
    }

    proptest! {
        #[test]
        fn uniform_counts_maximize_hill(
            c in proptest::collection::vec(1usize..50, 9),
            q in 0.05f64..5.0,
        ) {
            let uniform = hill_number(&[7; 9], q).unwrap();
            prop_assert!(hill_number(&c, q).unwrap() <= uniform + 1e-9);
        }
    }
}
