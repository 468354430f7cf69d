//! k-nearest-neighbour regression under Euclidean distance on standardized features.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::Standardizer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub standardizer: Standardizer,
    pub points: Array2<f64>,
    pub targets: Array1<f64>,
}

pub fn knn_fit(x: ArrayView2<f64>, y: ArrayView1<f64>, k: usize) -> Result<KnnModel> {
    if k == 0 {
        return Err(Error::invalid("knn k must be positive"));
    }
    if k > x.nrows() {
        return Err(Error::TooFewRows {
            needed: k,
            found: x.nrows(),
        });
    }
    let standardizer = Standardizer::fit_matrix(x)?;
    let points = standardizer.transform(x)?;
    Ok(KnnModel {
        k,
        standardizer,
        points,
        targets: y.to_owned(),
    })
}

impl KnnModel {
    /// Mean target of the `k` closest training rows; equal distances are ordered by
    /// training-row index.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        let queries = self.standardizer.transform(x)?;
        let n = self.points.nrows();
        let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
        let preds = queries
            .rows()
            .into_iter()
            .map(|q| {
                dist.clear();
                for (i, p) in self.points.rows().into_iter().enumerate() {
                    let d: f64 = p.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                    dist.push((d, i));
                }
                let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                if self.k < n {
                    dist.select_nth_unstable_by(self.k - 1, cmp);
                }
                let nearest = &mut dist[..self.k];
                // Sum in a fixed order so the result does not depend on the selection algorithm.
                nearest.sort_unstable_by(cmp);
                nearest.iter().map(|&(_, i)| self.targets[i]).sum::<f64>() / self.k as f64
            })
            .collect();
        Ok(preds)
    }
}
