//! The labelling model: a grid search with k-fold cross-validation over ridge,
//! k-nearest-neighbour and random-forest regressors.

mod forest;
mod knn;
mod ridge;

use std::fmt;

use ndarray::{Array1, ArrayView2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed_path, rng_from_seed};

pub use forest::{forest_fit, tree_fit, ForestParams, Node, RandomForest, RegressionTree, DEFAULT_FEATURE_FRACTION};
pub use knn::{knn_fit, KnnModel};
pub use ridge::{ridge_fit, RidgeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    Ridge,
    Knn,
    RandomForest,
}

impl CandidateKind {
    pub fn name(self) -> &'static str {
        match self {
            CandidateKind::Ridge => "ridge",
            CandidateKind::Knn => "knn",
            CandidateKind::RandomForest => "random_forest",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestGrid {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: Vec<usize>,
    pub feature_fraction: f64,
}

impl Default for ForestGrid {
    fn default() -> Self {
        ForestGrid {
            n_trees: 100,
            max_depth: None,
            min_leaf: vec![1, 5],
            feature_fraction: DEFAULT_FEATURE_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherSpec {
    pub candidates: Vec<CandidateKind>,
    pub cv_folds: usize,
    pub seed: u64,
    pub ridge_lambdas: Vec<f64>,
    pub knn_ks: Vec<usize>,
    pub forest: ForestGrid,
}

impl Default for TeacherSpec {
    fn default() -> Self {
        TeacherSpec {
            candidates: vec![CandidateKind::Ridge, CandidateKind::Knn, CandidateKind::RandomForest],
            cv_folds: 5,
            seed: 0,
            ridge_lambdas: vec![1e-4, 1e-2, 1.0],
            knn_ks: vec![3, 5, 10],
            forest: ForestGrid::default(),
        }
    }
}

impl TeacherSpec {
    pub fn only(candidates: &[CandidateKind]) -> Self {
        TeacherSpec {
            candidates: candidates.to_vec(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::invalid("teacher needs at least one candidate"));
        }
        if self.cv_folds < 2 {
            return Err(Error::invalid("teacher cv_folds must be at least 2"));
        }
        for kind in &self.candidates {
            let empty = match kind {
                CandidateKind::Ridge => self.ridge_lambdas.is_empty(),
                CandidateKind::Knn => self.knn_ks.is_empty(),
                CandidateKind::RandomForest => self.forest.min_leaf.is_empty(),
            };
            if empty {
                return Err(Error::invalid(format!("empty hyperparameter grid for {}", kind.name())));
            }
        }
        Ok(())
    }

    /// Every (candidate, hyperparameter) pair in selection order: candidates as
    /// declared, then each grid ascending.
    pub fn combinations(&self) -> Vec<Hyperparams> {
        let mut out = Vec::new();
        for kind in &self.candidates {
            match kind {
                CandidateKind::Ridge => {
                    let mut grid = self.ridge_lambdas.clone();
                    grid.sort_by(f64::total_cmp);
                    grid.dedup();
                    out.extend(grid.into_iter().map(|lambda| Hyperparams::Ridge { lambda }));
                }
                CandidateKind::Knn => {
                    let mut grid = self.knn_ks.clone();
                    grid.sort_unstable();
                    grid.dedup();
                    out.extend(grid.into_iter().map(|k| Hyperparams::Knn { k }));
                }
                CandidateKind::RandomForest => {
                    let mut grid = self.forest.min_leaf.clone();
                    grid.sort_unstable();
                    grid.dedup();
                    out.extend(grid.into_iter().map(|min_leaf| {
                        Hyperparams::Forest(ForestParams {
                            n_trees: self.forest.n_trees,
                            max_depth: self.forest.max_depth,
                            min_leaf,
                            feature_fraction: self.forest.feature_fraction,
                            bootstrap: true,
                        })
                    }));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Hyperparams {
    Ridge { lambda: f64 },
    Knn { k: usize },
    Forest(ForestParams),
}

impl Hyperparams {
    pub fn kind(&self) -> CandidateKind {
        match self {
            Hyperparams::Ridge { .. } => CandidateKind::Ridge,
            Hyperparams::Knn { .. } => CandidateKind::Knn,
            Hyperparams::Forest(_) => CandidateKind::RandomForest,
        }
    }

    pub fn fit(&self, x: ArrayView2<f64>, y: ndarray::ArrayView1<f64>, seed: u64) -> Result<FittedModel> {
        match self {
            Hyperparams::Ridge { lambda } => ridge_fit(x, y, *lambda).map(FittedModel::Ridge),
            Hyperparams::Knn { k } => knn_fit(x, y, *k).map(FittedModel::Knn),
            Hyperparams::Forest(p) => forest_fit(x, y, p, seed).map(FittedModel::Forest),
        }
    }
}

/// Compact label without commas, e.g. `random_forest[n_trees=100;max_depth=none;min_leaf=5]`.
impl fmt::Display for Hyperparams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hyperparams::Ridge { lambda } => write!(f, "ridge[lambda={lambda}]"),
            Hyperparams::Knn { k } => write!(f, "knn[k={k}]"),
            Hyperparams::Forest(p) => {
                let depth = p.max_depth.map_or("none".to_owned(), |d| d.to_string());
                write!(
                    f,
                    "random_forest[n_trees={};max_depth={depth};min_leaf={}]",
                    p.n_trees, p.min_leaf
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedModel {
    Ridge(RidgeModel),
    Knn(KnnModel),
    Forest(RandomForest),
}

impl FittedModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        match self {
            FittedModel::Ridge(m) => m.predict(x),
            FittedModel::Knn(m) => m.predict(x),
            FittedModel::Forest(m) => m.predict(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub hyperparams: Hyperparams,
    /// `None` when the candidate could not be fitted on some fold.
    pub cv_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedTeacher {
    pub chosen: Hyperparams,
    pub model: FittedModel,
    pub cv_rmse: f64,
    pub train_target_range: (f64, f64),
    pub n_features: usize,
    /// Cross-validation scores of every combination, in selection order.
    pub scores: Vec<CandidateScore>,
}

impl TrainedTeacher {
    pub fn summary(&self) -> String {
        self.chosen.to_string()
    }
}

const FULL_FIT_STREAM: u64 = u64::MAX;

/// Seeded permutation of `0..n` chunked into `k` folds whose sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(perm[start..start + len].to_vec());
        start += len;
    }
    folds
}

/// Pooled k-fold CV RMSE of one combination.
fn cross_validate(train: &Dataset, folds: &[Vec<usize>], hp: &Hyperparams, seed: u64) -> Result<f64> {
    let n = train.n_rows();
    let mut sse = 0.0;
    for (f, held_out) in folds.iter().enumerate() {
        let mut in_fold = vec![false; n];
        for &i in held_out {
            in_fold[i] = true;
        }
        let fit_rows: Vec<usize> = (0..n).filter(|&i| !in_fold[i]).collect();
        let fit = train.select_rows(&fit_rows);
        let eval = train.select_rows(held_out);
        let model = hp.fit(
            fit.features().view(),
            fit.target().view(),
            derive_seed_path(seed, &[f as u64]),
        )?;
        let pred = model.predict(eval.features().view())?;
        sse += pred
            .iter()
            .zip(eval.target().iter())
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>();
    }
    Ok((sse / n as f64).sqrt())
}

/// Scores every combination by k-fold CV RMSE and refits the best one on all of `train`.
/// Ties go to the earlier combination in [`TeacherSpec::combinations`] order.
pub fn fit_teacher(train: &Dataset, spec: &TeacherSpec) -> Result<TrainedTeacher> {
    spec.validate()?;
    let n = train.n_rows();
    if n < spec.cv_folds {
        return Err(Error::TooFewRows {
            needed: spec.cv_folds,
            found: n,
        });
    }
    let folds = fold_assignment(n, spec.cv_folds, derive_seed_path(spec.seed, &[0]));
    let combos = spec.combinations();
    let scores: Vec<CandidateScore> = combos
        .par_iter()
        .enumerate()
        .map(|(c, hp)| {
            let seed = derive_seed_path(spec.seed, &[1, c as u64]);
            let cv_rmse = cross_validate(train, &folds, hp, seed).ok().filter(|v| v.is_finite());
            CandidateScore {
                hyperparams: hp.clone(),
                cv_rmse,
            }
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (c, s) in scores.iter().enumerate() {
        if let Some(v) = s.cv_rmse {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((c, v));
            }
        }
    }
    let Some((c, cv_rmse)) = best else {
        return Err(Error::AllCandidatesFailed(
            "no teacher candidate could be cross-validated".into(),
        ));
    };
    let chosen = combos[c].clone();
    let model = chosen.fit(
        train.features().view(),
        train.target().view(),
        derive_seed_path(spec.seed, &[1, c as u64, FULL_FIT_STREAM]),
    )?;
    let y = train.target();
    let range = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    Ok(TrainedTeacher {
        chosen,
        model,
        cv_rmse,
        train_target_range: range,
        n_features: train.n_features(),
        scores,
    })
}

pub fn teacher_predict(model: &TrainedTeacher, features: ArrayView2<f64>) -> Result<Array1<f64>> {
    if features.ncols() != model.n_features {
        return Err(Error::DimensionMismatch {
            expected: model.n_features,
            found: features.ncols(),
        });
    }
    model.model.predict(features)
}
