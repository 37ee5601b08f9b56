//! Evaluating a trained model: predicted fronts, MED against oracle
//! targets, and hypervolume.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypernet::HypernetModel;
use crate::metrics::{distances, hypervolume, mean_std};
use crate::oracle::{med_targets, OracleConfig};
use crate::prefs::{interior_rays, PreferenceVector};
use crate::problems::{MtlLiteDataset, ProblemSpec, Split};
use crate::scalarize::ScalarizationSpec;
use crate::train::mtl_losses;

/// A model output for one preference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub ray: Vec<f64>,
    /// The feasible solution (raw heads are projected onto the feasible set).
    pub x: Vec<f64>,
    pub objectives: Vec<f64>,
    /// Distance of the raw output from the feasible set.
    pub violation: f64,
}

pub fn predict(problem: &ProblemSpec, model: &HypernetModel, r: &PreferenceVector) -> Result<Prediction> {
    if model.arch.output_dim != problem.n || model.arch.target.is_some() {
        return Err(Error::ModelMismatch(format!(
            "model emits {} values, {} has {} decision variables",
            model.arch.output_dim,
            problem.name(),
            problem.n
        )));
    }
    let raw = model.forward(r)?;
    let violation = problem.violation(&raw);
    let x = if violation > 0.0 { problem.project(&raw)? } else { raw };
    let objectives = problem.evaluate_values(&x)?;
    Ok(Prediction {
        ray: r.as_slice().to_vec(),
        x,
        objectives,
        violation,
    })
}

pub fn predict_all(problem: &ProblemSpec, model: &HypernetModel, rays: &[PreferenceVector]) -> Result<Vec<Prediction>> {
    rays.par_iter().map(|r| predict(problem, model, r)).collect()
}

/// The default hypervolume reference: 2 in every objective.
pub fn default_hv_ref(m: usize) -> Vec<f64> {
    vec![2.0; m]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub problem: String,
    pub scalarization: ScalarizationSpec,
    pub med_mean: Option<f64>,
    pub med_std: Option<f64>,
    pub hv: Option<f64>,
    pub hv_ref: Vec<f64>,
    pub rays: usize,
    pub eps: f64,
    pub seed: u64,
    pub not_converged: usize,
    pub max_violation: f64,
    pub oracle: Option<OracleConfig>,
}

/// MED against oracle targets on `count` interior lattice rays, plus the
/// hypervolume of the predicted front. Rays whose oracle solve did not
/// converge are left out of the MED.
pub fn evaluate_moo(
    problem: &ProblemSpec,
    model: &HypernetModel,
    spec: &ScalarizationSpec,
    count: usize,
    eps: f64,
    hv_ref: &[f64],
    oracle: &OracleConfig,
) -> Result<EvalReport> {
    let rays = interior_rays(problem.m, count, eps)?;
    let predictions = predict_all(problem, model, &rays)?;
    let targets = med_targets(problem, spec, &rays, oracle)?;
    let (pred, tgt): (Vec<Vec<f64>>, Vec<Vec<f64>>) = predictions
        .iter()
        .zip(&targets.targets)
        .filter_map(|(p, t)| t.as_ref().map(|t| (p.objectives.clone(), t.clone())))
        .unzip();
    let (med_mean, med_std) = if pred.is_empty() {
        (None, None)
    } else {
        let (mean, std) = mean_std(&distances(&pred, &tgt)?);
        (Some(mean), Some(std))
    };
    let front: Vec<Vec<f64>> = predictions.iter().map(|p| p.objectives.clone()).collect();
    let hv = if problem.m <= 3 {
        Some(hypervolume(&front, hv_ref)?)
    } else {
        None
    };
    Ok(EvalReport {
        problem: problem.name().to_string(),
        scalarization: spec.clone(),
        med_mean,
        med_std,
        hv,
        hv_ref: hv_ref.to_vec(),
        rays: rays.len(),
        eps,
        seed: model.seed,
        not_converged: targets.not_converged,
        max_violation: predictions.iter().map(|p| p.violation).fold(0.0, f64::max),
        oracle: Some(*oracle),
    })
}

/// Validation losses for every ray, in ray order.
pub fn mtl_front(model: &HypernetModel, dataset: &MtlLiteDataset, rays: &[PreferenceVector]) -> Result<Vec<Vec<f64>>> {
    rays.par_iter()
        .map(|r| mtl_losses(model, dataset, Split::Val, r))
        .collect()
}

/// Hypervolume of the validation-loss front over `count` evenly spaced rays.
pub fn evaluate_mtl(
    model: &HypernetModel,
    dataset: &MtlLiteDataset,
    spec: &ScalarizationSpec,
    count: usize,
    eps: f64,
    hv_ref: &[f64],
) -> Result<EvalReport> {
    let rays = interior_rays(dataset.m, count, eps)?;
    let front = mtl_front(model, dataset, &rays)?;
    Ok(EvalReport {
        problem: "mtl-lite".into(),
        scalarization: spec.clone(),
        med_mean: None,
        med_std: None,
        hv: Some(hypervolume(&front, hv_ref)?),
        hv_ref: hv_ref.to_vec(),
        rays: rays.len(),
        eps,
        seed: model.seed,
        not_converged: 0,
        max_violation: 0.0,
        oracle: None,
    })
}
