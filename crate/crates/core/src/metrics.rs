//! Location-privacy metrics over attacker posteriors and the evaluation
//! report used for attack experiments.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Location, LocationId};
use crate::forest::{featurize, BaselineModel, Posterior, RandomForestModel};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("location {0} is not in the location table")]
    UnknownLocation(LocationId),
    #[error("test post {0} has no location")]
    UnlabeledPost(usize),
    #[error("test set is empty")]
    EmptyTestSet,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        GeoPoint { lat, lon }
    }
}

impl From<&Location> for GeoPoint {
    fn from(l: &Location) -> Self {
        GeoPoint::new(l.lat, l.lon)
    }
}

/// Great-circle distance on a sphere of radius 6371 km.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    /// Haversine kilometres.
    Geographic,
    /// 0 for the true location, 1 elsewhere.
    Binary,
}

fn location_distance(
    locs: &[Location],
    a: LocationId,
    b: LocationId,
    kind: Distance,
) -> Result<f64, MetricsError> {
    let la = locs
        .get(a as usize)
        .ok_or(MetricsError::UnknownLocation(a))?;
    let lb = locs
        .get(b as usize)
        .ok_or(MetricsError::UnknownLocation(b))?;
    if a == b {
        return Ok(0.0);
    }
    Ok(match kind {
        Distance::Binary => 1.0,
        Distance::Geographic => haversine_km(la.into(), lb.into()),
    })
}

/// Posterior-weighted distance between the candidate locations and the true
/// one. With [`Distance::Binary`] this is the incorrectness.
pub fn expected_distance(
    posterior: &Posterior,
    true_loc: LocationId,
    locs: &[Location],
    kind: Distance,
) -> Result<f64, MetricsError> {
    if true_loc as usize >= locs.len() {
        return Err(MetricsError::UnknownLocation(true_loc));
    }
    if kind == Distance::Binary {
        // Closed form of the weighted sum for a normalized posterior.
        return Ok(incorrectness(posterior, true_loc));
    }
    posterior.iter().try_fold(0.0, |acc, (loc, p)| {
        Ok(acc + p * location_distance(locs, loc, true_loc, kind)?)
    })
}

/// Probability mass on the true location.
pub fn correctness(posterior: &Posterior, true_loc: LocationId) -> f64 {
    posterior.prob(true_loc)
}

pub fn incorrectness(posterior: &Posterior, true_loc: LocationId) -> f64 {
    1.0 - correctness(posterior, true_loc)
}

pub fn accuracy_indicator(predicted: LocationId, true_loc: LocationId) -> u8 {
    u8::from(predicted == true_loc)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub n: usize,
    pub accuracy: f64,
    pub correctness: f64,
}

/// Mean metrics over a test set, plus the same means grouped by the number
/// of hashtags in each post.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub correctness: f64,
    pub expected_distance_km: f64,
    pub accuracy: f64,
    pub n_test: usize,
    pub per_hashtag_count: BTreeMap<usize, GroupMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub attack: PerformanceReport,
    pub baseline: PerformanceReport,
}

#[derive(Default)]
struct Accumulator {
    correctness: f64,
    distance: f64,
    accuracy: f64,
    n: usize,
    groups: BTreeMap<usize, (usize, f64, f64)>,
}

impl Accumulator {
    fn add(&mut self, hashtags: usize, correctness: f64, distance: f64, accurate: u8) {
        let accurate = f64::from(accurate);
        self.correctness += correctness;
        self.distance += distance;
        self.accuracy += accurate;
        self.n += 1;
        let g = self.groups.entry(hashtags).or_default();
        g.0 += 1;
        g.1 += accurate;
        g.2 += correctness;
    }

    fn finish(self) -> PerformanceReport {
        let n = self.n as f64;
        PerformanceReport {
            correctness: self.correctness / n,
            expected_distance_km: self.distance / n,
            accuracy: self.accuracy / n,
            n_test: self.n,
            per_hashtag_count: self
                .groups
                .into_iter()
                .map(|(k, (count, acc, corr))| {
                    (
                        k,
                        GroupMetrics {
                            n: count,
                            accuracy: acc / count as f64,
                            correctness: corr / count as f64,
                        },
                    )
                })
                .collect(),
        }
    }
}

/// Scores `model` and `baseline` on every post of `test`. Test hashtags
/// outside the model vocabulary are ignored by the model but still count
/// towards the post's hashtag-count group.
pub fn evaluate(
    model: &RandomForestModel,
    baseline: &BaselineModel,
    test: &Corpus,
) -> Result<EvaluationReport, MetricsError> {
    if test.is_empty() {
        return Err(MetricsError::EmptyTestSet);
    }
    let locs = test.locations();
    let mut attack = Accumulator::default();
    let mut base = Accumulator::default();
    let baseline_posterior = baseline.posterior();
    for (i, post) in test.posts().iter().enumerate() {
        let truth = post.location.ok_or(MetricsError::UnlabeledPost(i))?;
        let posterior = model
            .predict_posterior(&featurize(post, model.vocab_dimension()))
            .expect("featurized at model dimension");
        attack.add(
            post.hashtags.len(),
            correctness(&posterior, truth),
            expected_distance(&posterior, truth, locs, Distance::Geographic)?,
            accuracy_indicator(posterior.argmax(), truth),
        );
        base.add(
            post.hashtags.len(),
            correctness(&baseline_posterior, truth),
            expected_distance(&baseline_posterior, truth, locs, Distance::Geographic)?,
            accuracy_indicator(baseline.top_class, truth),
        );
    }
    Ok(EvaluationReport {
        attack: attack.finish(),
        baseline: base.finish(),
    })
}

/// Writes `hashtag_count,n,accuracy,correctness` rows.
pub fn write_curve_csv<W: Write>(report: &PerformanceReport, out: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["hashtag_count", "n", "accuracy", "correctness"])?;
    for (count, g) in &report.per_hashtag_count {
        w.write_record([
            count.to_string(),
            g.n.to_string(),
            g.accuracy.to_string(),
            g.correctness.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::location;
    use proptest::prelude::*;

    #[test]
    fn haversine_identity_and_antipode() {
        let p = GeoPoint::new(40.7, -74.0);
        assert_eq!(haversine_km(p, p), 0.0);
        let d = haversine_km(GeoPoint::new(0.0, 0.0), GeoPoint::new(0.0, 180.0));
        assert!((d - std::f64::consts::PI * EARTH_RADIUS_KM).abs() < 1e-9);
        assert!((d - 20015.09).abs() < 0.01);
    }

    fn grid3() -> Vec<Location> {
        let step = 180.0 / (std::f64::consts::PI * EARTH_RADIUS_KM);
        (0..3).map(|i| location(&format!("g{i}"), 0.0, i as f64 * step)).collect()
    }

    #[test]
    fn expected_distance_hand_computed() {
        let post = Posterior::new(vec![0, 1, 2], vec![0.5, 0.3, 0.2]);
        let d = expected_distance(&post, 0, &grid3(), Distance::Geographic).unwrap();
        assert!((d - 0.7).abs() < 1e-12, "{d}");
    }

    #[test]
    fn concentrated_posterior_has_zero_error() {
        let post = Posterior::one_hot(1);
        for kind in [Distance::Geographic, Distance::Binary] {
            assert_eq!(expected_distance(&post, 1, &grid3(), kind).unwrap(), 0.0);
        }
    }

    #[test]
    fn binary_matches_reported_correctness() {
        let post = Posterior::new(vec![0, 1], vec![0.613, 0.387]);
        let inc = expected_distance(&post, 0, &grid3(), Distance::Binary).unwrap();
        assert!((inc - 0.387).abs() < 1e-12);
        assert_eq!(correctness(&post, 0), 0.613);
    }

    #[test]
    fn unknown_true_location() {
        let post = Posterior::one_hot(0);
        assert!(matches!(
            expected_distance(&post, 7, &grid3(), Distance::Binary),
            Err(MetricsError::UnknownLocation(7))
        ));
    }

    #[test]
    fn uniform_correctness() {
        let post = Posterior::new(vec![0, 1, 2, 3], vec![0.25; 4]);
        assert_eq!(correctness(&post, 2), 0.25);
        assert_eq!(accuracy_indicator(3, 3), 1);
        assert_eq!(accuracy_indicator(3, 2), 0);
    }

    #[test]
    fn curve_csv_layout() {
        let report = PerformanceReport {
            per_hashtag_count: BTreeMap::from([(
                2,
                GroupMetrics {
                    n: 4,
                    accuracy: 0.5,
                    correctness: 0.25,
                },
            )]),
            ..PerformanceReport::default()
        };
        let mut buf = Vec::new();
        write_curve_csv(&report, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "hashtag_count,n,accuracy,correctness\n2,4,0.5,0.25\n"
        );
    }

    fn arb_point() -> impl Strategy<Value = GeoPoint> {
        (-90.0f64..=90.0, -180.0f64..=180.0).prop_map(|(a, b)| GeoPoint::new(a, b))
    }

    proptest! {
        #[test]
        fn haversine_symmetric_and_triangle(a in arb_point(), b in arb_point(), c in arb_point()) {
            prop_assert_eq!(haversine_km(a, b), haversine_km(b, a));
            prop_assert!(haversine_km(a, c) <= haversine_km(a, b) + haversine_km(b, c) + 1e-9);
        }

        #[test]
        fn geographic_zero_iff_concentrated(w in prop::collection::vec(0.0f64..1.0, 3), t in 0u32..3) {
            let sum: f64 = w.iter().sum();
            prop_assume!(sum > 1e-6);
            let probs: Vec<f64> = w.iter().map(|x| x / sum).collect();
            let post = Posterior::new(vec![0, 1, 2], probs.clone());
            let d = expected_distance(&post, t, &grid3(), Distance::Geographic).unwrap();
            let off_mass: f64 = probs.iter().enumerate().filter(|(i, _)| *i as u32 != t).map(|(_, p)| p).sum();
            prop_assert_eq!(d == 0.0, off_mass == 0.0);
        }

        #[test]
        fn binary_is_one_minus_correctness(w in prop::collection::vec(0.0f64..1.0, 3), t in 0u32..3) {
            let sum: f64 = w.iter().sum();
            prop_assume!(sum > 1e-6);
            let post = Posterior::new(vec![0, 1, 2], w.iter().map(|x| x / sum).collect());
            let d = expected_distance(&post, t, &grid3(), Distance::Binary).unwrap();
            prop_assert_eq!(d, 1.0 - correctness(&post, t));
            prop_assert_eq!(d, incorrectness(&post, t));
        }
    }
}
