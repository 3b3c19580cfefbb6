//! JSON document form of a [`DiscreteMrf`].
//!
//! ```json
//! {"cardinalities": [2, 2],
//!  "unary": [[0.0, 0.5], [0.1, 0.0]],
//!  "pairwise": [{"i": 0, "j": 1, "table": [[0.0, 1.0], [1.0, 0.0]]}],
//!  "weights": {"node": [1.0, 1.0], "edge": [[0.0, 0.8], [0.8, 0.0]]}}
//! ```
//!
//! Numbers are written with the shortest decimal that parses back to the
//! same `f64`, so a save/load cycle is value-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{DiscreteMrf, PairwisePotential};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MrfDoc {
    cardinalities: Vec<usize>,
    unary: Vec<Vec<f64>>,
    pairwise: Vec<EdgeDoc>,
    weights: WeightsDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    i: usize,
    j: usize,
    table: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsDoc {
    node: Vec<f64>,
    edge: Vec<Vec<f64>>,
}

pub fn to_json<T: Scalar>(mrf: &DiscreteMrf<T>) -> Result<String> {
    let n = mrf.n_nodes();
    let doc = MrfDoc {
        cardinalities: mrf.cardinalities().to_vec(),
        unary: mrf
            .unary()
            .iter()
            .map(|t| t.iter().map(|v| v.as_f64()).collect())
            .collect(),
        pairwise: mrf
            .pairwise()
            .iter()
            .map(|p| {
                let cols = mrf.cardinalities()[p.j];
                EdgeDoc {
                    i: p.i,
                    j: p.j,
                    table: p
                        .table
                        .chunks(cols)
                        .map(|row| row.iter().map(|v| v.as_f64()).collect())
                        .collect(),
                }
            })
            .collect(),
        weights: WeightsDoc {
            node: mrf.node_weights().iter().map(|v| v.as_f64()).collect(),
            edge: (0..n)
                .map(|i| (0..n).map(|j| mrf.edge_weight(i, j).as_f64()).collect())
                .collect(),
        },
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn from_json<T: Scalar>(text: &str) -> Result<DiscreteMrf<T>> {
    let doc: MrfDoc = serde_json::from_str(text)?;
    let n = doc.cardinalities.len();
    let cast = |v: &[f64]| v.iter().map(|&x| T::lit(x)).collect::<Vec<T>>();
    let pairwise = doc
        .pairwise
        .iter()
        .map(|e| PairwisePotential {
            i: e.i,
            j: e.j,
            table: e.table.iter().flat_map(|row| cast(row)).collect(),
        })
        .collect();
    let mut mrf = DiscreteMrf::new(
        doc.cardinalities.clone(),
        doc.unary.iter().map(|t| cast(t)).collect(),
        pairwise,
    )?;
    if doc.weights.node.len() != n || doc.weights.edge.len() != n {
        return Err(Error::InvalidModel(format!(
            "weights must cover {n} nodes"
        )));
    }
    for (i, &w) in doc.weights.node.iter().enumerate() {
        check_unit(w, "node weight")?;
        mrf.set_node_weight(i, T::lit(w));
    }
    for (i, row) in doc.weights.edge.iter().enumerate() {
        if row.len() != n {
            return Err(Error::InvalidModel(format!("edge weight row {i} has {} entries", row.len())));
        }
        for (j, &w) in row.iter().enumerate() {
            check_unit(w, "edge weight")?;
            if i == j && w != 0.0 {
                return Err(Error::InvalidModel(format!("edge weight diagonal ({i}, {i}) must be 0")));
            }
            if w != doc.weights.edge[j][i] {
                return Err(Error::InvalidModel(format!("edge weights ({i}, {j}) not symmetric")));
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            mrf.set_edge_weight(i, j, T::lit(doc.weights.edge[i][j]));
        }
    }
    Ok(mrf)
}

fn check_unit(w: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidModel(format!("{what} {w} outside [0, 1]")));
    }
    Ok(())
}

pub fn load<T: Scalar>(path: &Path) -> Result<DiscreteMrf<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}

pub fn save<T: Scalar>(mrf: &DiscreteMrf<T>, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(mrf)?).map_err(|e| Error::io(path, e))
}
