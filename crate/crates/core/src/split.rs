//! Inlier/anomaly split construction from a labelled graph collection.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graph::{GraphDatabase, SplitTag};
use crate::seed;

/// Number of anomalies to plant next to `test_inliers` inliers so they make
/// up about `rate` of the test set: `max(1, round(rate * |test|))` with
/// `|test| = inliers + anomalies`.
pub fn anomaly_count(test_inliers: usize, rate: f64) -> usize {
    let a = (rate * test_inliers as f64 / (1.0 - rate)).round() as usize;
    a.max(1)
}

/// Splits a class-labelled database into an inlier-only training set and a
/// test set holding the remaining inliers plus downsampled anomalies.
///
/// Graphs keep their ids; both outputs are ordered by id.
pub fn make_split(
    db: &GraphDatabase,
    inlier_class: i64,
    anomaly_rate: f64,
    train_fraction: f64,
    seed: u64,
) -> Result<(GraphDatabase, GraphDatabase)> {
    if !(anomaly_rate > 0.0 && anomaly_rate < 0.5) {
        return Err(Error::Split(format!("anomaly rate {anomaly_rate} outside (0, 0.5)")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Split(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let mut inliers = Vec::new();
    let mut outliers = Vec::new();
    for (i, g) in db.graphs.iter().enumerate() {
        match g.class_label {
            Some(y) if y == inlier_class => inliers.push(i),
            Some(_) => outliers.push(i),
            None => return Err(Error::Split(format!("graph {} has no class label", g.graph_id))),
        }
    }
    if outliers.is_empty() {
        return Err(Error::Split(format!("no graphs outside inlier class {inlier_class}")));
    }
    if inliers.len() < 2 {
        return Err(Error::Split(format!("inlier class {inlier_class} has fewer than 2 graphs")));
    }

    let mut rng = seed::rng(seed);
    inliers.shuffle(&mut rng);
    outliers.shuffle(&mut rng);

    let n_train = ((train_fraction * inliers.len() as f64).round() as usize).clamp(1, inliers.len() - 1);
    let (train_idx, test_inliers) = inliers.split_at(n_train);
    let n_anom = anomaly_count(test_inliers.len(), anomaly_rate).min(outliers.len());

    let mut train_idx = train_idx.to_vec();
    train_idx.sort_unstable();
    let mut test_idx: Vec<usize> = test_inliers.iter().chain(&outliers[..n_anom]).copied().collect();
    test_idx.sort_unstable();

    let train = GraphDatabase {
        graphs: train_idx.iter().map(|&i| db.graphs[i].clone()).collect(),
        feature_kind: db.feature_kind,
        anomaly_flags: Some(vec![false; train_idx.len()]),
        split_tag: SplitTag::Train,
    };
    let test = GraphDatabase {
        graphs: test_idx.iter().map(|&i| db.graphs[i].clone()).collect(),
        feature_kind: db.feature_kind,
        anomaly_flags: Some(
            test_idx
                .iter()
                .map(|&i| db.graphs[i].class_label != Some(inlier_class))
                .collect(),
        ),
        split_tag: SplitTag::Test,
    };
    train.validate()?;
    test.validate()?;
    Ok((train, test))
}
