//! The neural regressor: a small architecture search over multilayer perceptrons
//! trained with Adam and early stopping on a held-out validation slice.

mod mlp;

use std::io::Write;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::metrics::{rmse, sample_std};
use crate::rng::{derive_seed_path, rng_from_seed};

pub use mlp::{Activation, Dense, Gradients, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudentSpec {
    /// Hidden-layer widths of each candidate, in selection order.
    pub architectures: Vec<Vec<usize>>,
    pub activation: Activation,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without validation improvement before stopping; 0 disables early stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for StudentSpec {
    fn default() -> Self {
        StudentSpec {
            architectures: vec![vec![64], vec![64, 32], vec![128, 64]],
            activation: Activation::Relu,
            max_epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            patience: 20,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl StudentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::invalid("student max_epochs must be at least 1"));
        }
        if self.architectures.is_empty() {
            return Err(Error::invalid("student needs at least one architecture"));
        }
        if self.architectures.iter().flatten().any(|&w| w == 0) {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("student batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("student learning_rate must be positive"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("student validation_fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// RMSE of the mini-batch losses seen during the epoch, in target units.
    pub train_rmse: f64,
    pub val_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub architecture: Vec<usize>,
    /// `None` when training diverged.
    pub best_val_rmse: Option<f64>,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedStudent {
    pub architecture: Vec<usize>,
    pub network: Network,
    pub input_standardizer: Standardizer,
    pub target_shift: f64,
    pub target_scale: f64,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_rmse: f64,
    /// Rows of the training data held out for validation.
    pub validation_rows: Vec<usize>,
    pub candidates: Vec<CandidateOutcome>,
}

impl TrainedStudent {
    pub fn write_history_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,train_rmse,val_rmse\n");
        for r in &self.history {
            out.push_str(&format!("{},{},{}\n", r.epoch, r.train_rmse, r.val_rmse));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

struct Prepared {
    x_train: Array2<f64>,
    y_train: Array1<f64>,
    x_val: Array2<f64>,
    y_val_raw: Array1<f64>,
    standardizer: Standardizer,
    shift: f64,
    scale: f64,
    validation_rows: Vec<usize>,
}

fn prepare(train: &Dataset, spec: &StudentSpec) -> Result<Prepared> {
    let n = train.n_rows();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(derive_seed_path(spec.seed, &[0])));
    let (fit_rows, val_rows) = if n < 2 {
        (perm.clone(), perm)
    } else {
        let n_val = ((spec.validation_fraction * n as f64 + 0.5).floor() as usize).clamp(1, n - 1);
        let fit = perm.split_off(n_val);
        (fit, perm)
    };
    let fit = train.select_rows(&fit_rows);
    let val = train.select_rows(&val_rows);
    let standardizer = Standardizer::fit_matrix(fit.features().view())?;
    let y = fit.target();
    let shift = y.sum() / y.len() as f64;
    let sd = sample_std(y.as_slice().expect("contiguous target"));
    let scale = if sd > 0.0 { sd } else { 1.0 };
    Ok(Prepared {
        x_train: standardizer.transform(fit.features().view())?,
        y_train: y.mapv(|v| (v - shift) / scale),
        x_val: standardizer.transform(val.features().view())?,
        y_val_raw: val.target().clone(),
        standardizer,
        shift,
        scale,
        validation_rows: val_rows,
    })
}

struct CandidateRun {
    network: Network,
    history: Vec<EpochRecord>,
    best_epoch: usize,
    best_val_rmse: f64,
}

fn train_candidate(data: &Prepared, spec: &StudentSpec, hidden: &[usize], index: usize) -> Result<CandidateRun> {
    let mut init_rng = rng_from_seed(derive_seed_path(spec.seed, &[1, index as u64]));
    let mut shuffle_rng = rng_from_seed(derive_seed_path(spec.seed, &[2, index as u64]));
    let p = data.x_train.ncols();
    let mut net = Network::init(p, hidden, spec.activation, &mut init_rng);
    let mut adam = mlp::Adam::new(&net, spec.learning_rate);
    let batch = spec.batch_size.min(data.x_train.nrows()).max(1);
    let mut ws = mlp::Workspace::new(&net, batch);
    let mut grads = net.zero_gradients();
    let mut xb = Array2::<f64>::zeros((batch, p));
    let mut yb = Array1::<f64>::zeros(batch);
    let mut order: Vec<usize> = (0..data.x_train.nrows()).collect();

    let mut history = Vec::new();
    let mut best: Option<(usize, f64, Network)> = None;
    for epoch in 1..=spec.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sse = 0.0;
        for chunk in order.chunks(batch) {
            let b = chunk.len();
            for (r, &i) in chunk.iter().enumerate() {
                xb.row_mut(r).assign(&data.x_train.row(i));
                yb[r] = data.y_train[i];
            }
            let loss = ws.loss_and_gradients(&net, xb.slice(s![..b, ..]), yb.slice(s![..b]), &mut grads);
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("non-finite loss in epoch {epoch}")));
            }
            sse += loss * b as f64;
            adam.update(&mut net, &grads);
        }
        let train_rmse = (sse / order.len() as f64).sqrt() * data.scale;
        let val_pred = denormalize(net.forward(data.x_val.view()), data.shift, data.scale);
        let val_rmse = rmse(val_pred.view(), data.y_val_raw.view())?;
        if !val_rmse.is_finite() {
            return Err(Error::Diverged(format!("non-finite validation error in epoch {epoch}")));
        }
        history.push(EpochRecord {
            epoch,
            train_rmse,
            val_rmse,
        });
        if best.as_ref().is_none_or(|(_, b, _)| val_rmse < *b) {
            best = Some((epoch, val_rmse, net.clone()));
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.0);
        if spec.patience > 0 && epoch - best_epoch >= spec.patience {
            break;
        }
    }
    let (best_epoch, best_val_rmse, network) = best.expect("at least one epoch");
    Ok(CandidateRun {
        network,
        history,
        best_epoch,
        best_val_rmse,
    })
}

fn denormalize(z: Array1<f64>, shift: f64, scale: f64) -> Array1<f64> {
    z.mapv_into(|v| v * scale + shift)
}

/// Trains every candidate architecture and keeps the one with the lowest best-epoch
/// validation RMSE (earlier candidates win ties). A diverging candidate is dropped.
pub fn fit_student(train: &Dataset, spec: &StudentSpec) -> Result<TrainedStudent> {
    spec.validate()?;
    if train.is_empty() {
        return Err(Error::NoRows);
    }
    let data = prepare(train, spec)?;
    let mut outcomes = Vec::with_capacity(spec.architectures.len());
    let mut chosen: Option<(usize, CandidateRun)> = None;
    for (c, hidden) in spec.architectures.iter().enumerate() {
        match train_candidate(&data, spec, hidden, c) {
            Ok(run) => {
                outcomes.push(CandidateOutcome {
                    architecture: hidden.clone(),
                    best_val_rmse: Some(run.best_val_rmse),
                    epochs_run: run.history.len(),
                });
                if chosen.as_ref().is_none_or(|(_, b)| run.best_val_rmse < b.best_val_rmse) {
                    chosen = Some((c, run));
                }
            }
            Err(Error::Diverged(_)) => outcomes.push(CandidateOutcome {
                architecture: hidden.clone(),
                best_val_rmse: None,
                epochs_run: 0,
            }),
            Err(e) => return Err(e),
        }
    }
    let Some((c, run)) = chosen else {
        return Err(Error::AllCandidatesFailed("every student architecture diverged".into()));
    };
    Ok(TrainedStudent {
        architecture: spec.architectures[c].clone(),
        network: run.network,
        input_standardizer: data.standardizer,
        target_shift: data.shift,
        target_scale: data.scale,
        history: run.history,
        best_epoch: run.best_epoch,
        best_val_rmse: run.best_val_rmse,
        validation_rows: data.validation_rows,
        candidates: outcomes,
    })
}

pub fn student_predict(model: &TrainedStudent, features: ArrayView2<f64>) -> Result<Array1<f64>> {
    mlp::check_inputs(&model.network, features)?;
    let z = model.input_standardizer.transform(features)?;
    Ok(denormalize(
        model.network.forward(z.view()),
        model.target_shift,
        model.target_scale,
    ))
}

/// Convenience: RMSE of the student on a labelled dataset.
pub fn evaluate_student(model: &TrainedStudent, data: &Dataset) -> Result<f64> {
    let pred = student_predict(model, data.features().view())?;
    rmse(pred.view(), data.target().view())
}
