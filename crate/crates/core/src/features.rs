//! Node feature derivation.

use std::collections::BTreeSet;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::{FeatureKind, GraphDatabase};

/// Default clipping point for one-hot degree features.
pub const DEFAULT_DEGREE_CAP: usize = 10;

/// Sorted distinct node labels across the given databases.
pub fn label_alphabet<'a>(dbs: impl IntoIterator<Item = &'a GraphDatabase>) -> Result<Vec<i64>> {
    let mut set = BTreeSet::new();
    for db in dbs {
        for g in &db.graphs {
            let labels = g
                .node_labels
                .as_ref()
                .ok_or_else(|| Error::Config(format!("graph {} has no node labels", g.graph_id)))?;
            set.extend(labels.iter().copied());
        }
    }
    Ok(set.into_iter().collect())
}

/// Derives node features of `kind` using the database's own label alphabet.
pub fn derive_features(db: &GraphDatabase, kind: FeatureKind, degree_cap: usize) -> Result<GraphDatabase> {
    let alphabet = match kind {
        FeatureKind::OneHotLabel => label_alphabet([db])?,
        _ => Vec::new(),
    };
    derive_with_alphabet(db, kind, degree_cap, &alphabet)
}

/// Derives features for a train/test pair so both share one feature space.
pub fn derive_features_pair(
    train: &GraphDatabase,
    test: &GraphDatabase,
    kind: FeatureKind,
    degree_cap: usize,
) -> Result<(GraphDatabase, GraphDatabase)> {
    let alphabet = match kind {
        FeatureKind::OneHotLabel => label_alphabet([train, test])?,
        _ => Vec::new(),
    };
    Ok((
        derive_with_alphabet(train, kind, degree_cap, &alphabet)?,
        derive_with_alphabet(test, kind, degree_cap, &alphabet)?,
    ))
}

fn derive_with_alphabet(
    db: &GraphDatabase,
    kind: FeatureKind,
    degree_cap: usize,
    alphabet: &[i64],
) -> Result<GraphDatabase> {
    if kind == FeatureKind::OneHotDegree && degree_cap == 0 {
        return Err(Error::Config("degree cap must be positive".into()));
    }
    let mut out = db.clone();
    for g in &mut out.graphs {
        let n = g.node_count();
        g.features = match kind {
            FeatureKind::OneHotLabel => {
                let labels = g
                    .node_labels
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("graph {} has no node labels", g.graph_id)))?;
                let mut x = Array2::zeros((n, alphabet.len()));
                for (v, y) in labels.iter().enumerate() {
                    let col = alphabet
                        .binary_search(y)
                        .map_err(|_| Error::Config(format!("label {y} missing from alphabet")))?;
                    x[[v, col]] = 1.0;
                }
                x
            }
            FeatureKind::Attributes => g
                .node_attributes
                .clone()
                .ok_or_else(|| Error::Config(format!("graph {} has no node attributes", g.graph_id)))?,
            FeatureKind::OneHotDegree => {
                let mut x = Array2::zeros((n, degree_cap + 1));
                for v in 0..n {
                    x[[v, g.degree(v).min(degree_cap)]] = 1.0;
                }
                x
            }
        };
    }
    out.feature_kind = Some(kind);
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn db_of(graphs: Vec<Graph>) -> GraphDatabase {
        GraphDatabase::new(graphs)
    }

    #[test]
    fn triangle_degree_one_hot() {
        let g = Graph::new(0, 3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let db = derive_features(&db_of(vec![g]), FeatureKind::OneHotDegree, 4).unwrap();
        let x = &db.graphs[0].features;
        assert_eq!(x.ncols(), 5);
        for row in x.rows() {
            assert_eq!(row.to_vec(), vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn star_degree_is_clipped() {
        let edges: Vec<_> = (1..6).map(|v| (0, v, 1.0)).collect();
        let g = Graph::new(0, 6, &edges).unwrap();
        let db = derive_features(&db_of(vec![g]), FeatureKind::OneHotDegree, 4).unwrap();
        let x = &db.graphs[0].features;
        assert_eq!(x.row(0).to_vec(), vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(x.row(1).to_vec(), vec![0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn label_one_hot() {
        // alphabet {A=0, B=1}; node labelled B -> (0, 1)
        let mut g = Graph::new(0, 2, &[(0, 1, 1.0)]).unwrap();
        g.node_labels = Some(vec![0, 1]);
        let db = derive_features(&db_of(vec![g]), FeatureKind::OneHotLabel, 10).unwrap();
        assert_eq!(db.graphs[0].features.row(1).to_vec(), vec![0.0, 1.0]);
        for row in db.graphs[0].features.rows() {
            assert_eq!(row.sum(), 1.0);
        }
    }

    #[test]
    fn missing_raw_data_is_config_error() {
        let g = Graph::new(0, 2, &[(0, 1, 1.0)]).unwrap();
        let db = db_of(vec![g]);
        assert!(matches!(derive_features(&db, FeatureKind::OneHotLabel, 4), Err(Error::Config(_))));
        assert!(matches!(derive_features(&db, FeatureKind::Attributes, 4), Err(Error::Config(_))));
    }

    #[test]
    fn structure_is_preserved() {
        let mut g = Graph::new(3, 3, &[(0, 1, 1.0), (1, 2, 2.0)]).unwrap();
        g.node_labels = Some(vec![5, 7, 5]);
        let db = db_of(vec![g]);
        let out = derive_features(&db, FeatureKind::OneHotLabel, 4).unwrap();
        assert_eq!(out.graphs[0].edges(), db.graphs[0].edges());
        assert_eq!(out.graphs[0].node_count(), 3);
        assert_eq!(out.graphs[0].graph_id, 3);
    }

    #[test]
    fn pair_shares_alphabet() {
        let mut a = Graph::new(0, 1, &[]).unwrap();
        a.node_labels = Some(vec![1]);
        let mut b = Graph::new(1, 1, &[]).unwrap();
        b.node_labels = Some(vec![4]);
        let (tr, te) =
            derive_features_pair(&db_of(vec![a]), &db_of(vec![b]), FeatureKind::OneHotLabel, 4).unwrap();
        assert_eq!(tr.feature_dim(), 2);
        assert_eq!(te.graphs[0].features.row(0).to_vec(), vec![0.0, 1.0]);
    }
}
