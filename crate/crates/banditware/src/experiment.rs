//! Offline evaluation harness: repeated bandit simulations against a replay
//! environment, compared with an all-data least-squares baseline.
//!
//! Each simulation replays `n_rounds` uniformly drawn instances, lets the
//! bandit pick hardware, feeds back the recorded runtime, and scores the
//! bandit's models after every round. Simulations are independent and seeded
//! per index, so repeated runs with the same seed reproduce the same curves
//! regardless of thread count.

use crate::bandit::{tolerant_select, BanditError, BanditState, DecisionKind};
use crate::dataset::{Dataset, DatasetError, ReplayEnvironment};
use crate::regression::{fit_least_squares, LinearModel, RegressionError};
use crate::types::{CoreError, FeatureVector, HardwareConfig};
use crate::BanditConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Everything a repeated experiment needs beyond the data itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_rounds: usize,
    pub n_sims: usize,
    pub seed: u64,
    pub bandit: BanditConfig,
    /// Relative slack when judging a recommendation correct.
    pub eval_tolerance_ratio: f64,
    /// Absolute slack, in seconds, when judging a recommendation correct.
    pub eval_tolerance_seconds: f64,
    pub log_decisions: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_rounds: 50,
            n_sims: 100,
            seed: 0,
            bandit: BanditConfig::default(),
            eval_tolerance_ratio: 0.0,
            eval_tolerance_seconds: 0.0,
            log_decisions: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let fail = |msg: &str| Err(ExperimentError::Config(msg.to_string()));
        if self.n_rounds == 0 {
            return fail("n_rounds must be at least 1");
        }
        if self.n_sims == 0 {
            return fail("n_sims must be at least 1");
        }
        if !(self.eval_tolerance_ratio.is_finite() && self.eval_tolerance_ratio >= 0.0) {
            return fail("eval_tolerance_ratio must be finite and non-negative");
        }
        if !(self.eval_tolerance_seconds.is_finite() && self.eval_tolerance_seconds >= 0.0) {
            return fail("eval_tolerance_seconds must be finite and non-negative");
        }
        self.bandit.validate()?;
        Ok(())
    }
}

/// SplitMix64 finalizer; spreads consecutive indices across the seed space.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// The RNG seed of one simulation. Mixing the index keeps simulations
/// independent while the experiment seed still controls everything.
pub fn simulation_seed(experiment_seed: u64, sim_index: usize) -> u64 {
    experiment_seed ^ splitmix64(sim_index as u64)
}

/// Pooled prediction error across every recorded (instance, hardware) pair.
pub fn evaluate_rmse(
    models: &BTreeMap<String, LinearModel>,
    env: &ReplayEnvironment,
) -> Result<f64, ExperimentError> {
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for instance in &env.instances {
        for (hardware_id, &actual) in &instance.runtimes {
            let Some(model) = models.get(hardware_id) else {
                continue;
            };
            let err = model.predict(&instance.features)? - actual;
            sum_sq += err * err;
            count += 1;
        }
    }
    if count == 0 {
        return Err(ExperimentError::Config(
            "no (instance, hardware) pair is covered by the models".to_string(),
        ));
    }
    Ok((sum_sq / count as f64).sqrt())
}

/// Fraction of instances where the models' recommendation is close enough to
/// the truly fastest hardware.
///
/// The recommendation applies the policy tolerances to predicted runtimes;
/// correctness applies the evaluation tolerances to actual runtimes. Only
/// instances with a recorded runtime on every hardware participate.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_accuracy(
    models: &BTreeMap<String, LinearModel>,
    env: &ReplayEnvironment,
    hardware: &[HardwareConfig],
    policy_tolerance_ratio: f64,
    policy_tolerance_seconds: f64,
    eval_tolerance_ratio: f64,
    eval_tolerance_seconds: f64,
) -> Result<f64, ExperimentError> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for instance in &env.instances {
        if hardware
            .iter()
            .any(|hw| !instance.runtimes.contains_key(&hw.id))
        {
            continue;
        }
        let predictions = hardware
            .iter()
            .map(|hw| {
                models
                    .get(&hw.id)
                    .ok_or_else(|| {
                        ExperimentError::Config(format!("no model for hardware '{}'", hw.id))
                    })?
                    .predict(&instance.features)
                    .map_err(ExperimentError::from)
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let choice = tolerant_select(
            &predictions,
            hardware,
            policy_tolerance_ratio,
            policy_tolerance_seconds,
        )
        .expect("non-empty hardware set");
        let picked = instance.runtimes[&hardware[choice.index].id];
        let best = hardware
            .iter()
            .map(|hw| instance.runtimes[&hw.id])
            .fold(f64::INFINITY, f64::min);
        let limit = (1.0 + eval_tolerance_ratio) * best + eval_tolerance_seconds;
        if picked <= limit {
            correct += 1;
        }
        total += 1;
    }
    if total == 0 {
        return Err(ExperimentError::Dataset(DatasetError::NoCompleteInstances));
    }
    Ok(correct as f64 / total as f64)
}

/// The all-data reference point: one least-squares model per hardware, fitted
/// on every recorded run at once.
#[derive(Debug, Clone)]
pub struct FullFitBaseline {
    pub models: BTreeMap<String, LinearModel>,
    pub rmse: f64,
    pub accuracy: f64,
}

pub fn full_fit_baseline(
    env: &ReplayEnvironment,
    hardware: &[HardwareConfig],
    config: &ExperimentConfig,
) -> Result<FullFitBaseline, ExperimentError> {
    let mut models = BTreeMap::new();
    for hw in hardware {
        let rows: Vec<(Vec<f64>, f64)> = env
            .instances
            .iter()
            .filter_map(|instance| {
                instance
                    .runtimes
                    .get(&hw.id)
                    .map(|&runtime| (instance.features.clone(), runtime))
            })
            .collect();
        let model = fit_least_squares(&rows, config.bandit.ridge_lambda)?;
        models.insert(hw.id.clone(), model);
    }
    let rmse = evaluate_rmse(&models, env)?;
    let accuracy = evaluate_accuracy(
        &models,
        env,
        hardware,
        config.bandit.tolerance_ratio,
        config.bandit.tolerance_seconds,
        config.eval_tolerance_ratio,
        config.eval_tolerance_seconds,
    )?;
    Ok(FullFitBaseline {
        models,
        rmse,
        accuracy,
    })
}

/// One selection round as recorded in a decision log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub round: usize,
    pub instance_id: String,
    pub hardware_id: String,
    pub kind: DecisionKind,
    pub runtime_seconds: f64,
}

/// The per-round metric trajectories of a single simulation.
#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub rmse_curve: Vec<f64>,
    pub accuracy_curve: Vec<f64>,
    pub decisions: Vec<DecisionRecord>,
    pub final_state: BanditState,
}

/// Replays one bandit run against the environment.
///
/// The instance sequence is drawn up front so it depends only on the seed,
/// not on the policy's choices. After every update the bandit's current
/// models are scored against the whole environment.
pub fn run_simulation(
    env: &ReplayEnvironment,
    hardware: &[HardwareConfig],
    config: &ExperimentConfig,
    sim_index: usize,
) -> Result<SimulationResult, ExperimentError> {
    config.validate()?;
    let complete: Vec<usize> = (0..env.instances.len())
        .filter(|&i| {
            hardware
                .iter()
                .all(|hw| env.instances[i].runtimes.contains_key(&hw.id))
        })
        .collect();
    if complete.is_empty() {
        return Err(ExperimentError::Dataset(DatasetError::NoCompleteInstances));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(simulation_seed(config.seed, sim_index));
    let rounds: Vec<usize> = (0..config.n_rounds)
        .map(|_| complete[rng.random_range(0..complete.len())])
        .collect();

    let mut bandit = BanditState::new(
        hardware.to_vec(),
        env.feature_names.clone(),
        config.bandit.clone(),
    )?;
    let mut rmse_curve = Vec::with_capacity(config.n_rounds);
    let mut accuracy_curve = Vec::with_capacity(config.n_rounds);
    let mut decisions = Vec::new();

    for (round, &instance_index) in rounds.iter().enumerate() {
        let instance = &env.instances[instance_index];
        let x = FeatureVector::new(env.feature_names.clone(), instance.features.clone())?;
        let decision = bandit.select_arm(&x, &mut rng)?;
        let runtime = env.observe(instance_index, &decision.hardware_id)?;
        bandit.update(&decision.hardware_id, &x, runtime)?;

        if config.log_decisions {
            decisions.push(DecisionRecord {
                round: round + 1,
                instance_id: instance.instance_id.clone(),
                hardware_id: decision.hardware_id.clone(),
                kind: decision.kind,
                runtime_seconds: runtime,
            });
        }

        let models: BTreeMap<String, LinearModel> = bandit
            .arms()
            .iter()
            .map(|arm| (arm.hardware().id.clone(), arm.model().clone()))
            .collect();
        rmse_curve.push(evaluate_rmse(&models, env)?);
        accuracy_curve.push(evaluate_accuracy(
            &models,
            env,
            hardware,
            config.bandit.tolerance_ratio,
            config.bandit.tolerance_seconds,
            config.eval_tolerance_ratio,
            config.eval_tolerance_seconds,
        )?);
    }

    Ok(SimulationResult {
        rmse_curve,
        accuracy_curve,
        decisions,
        final_state: bandit,
    })
}

/// Mean and spread of one metric at one round, across simulations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub round: usize,
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

fn curve_points(per_sim: &[Vec<f64>], n_rounds: usize) -> Vec<CurvePoint> {
    let n = per_sim.len();
    (0..n_rounds)
        .map(|round| {
            let values: Vec<f64> = per_sim.iter().map(|curve| curve[round]).collect();
            let mean = values.iter().sum::<f64>() / n as f64;
            let sd = if n > 1 {
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (n - 1) as f64;
                var.sqrt()
            } else {
                0.0
            };
            CurvePoint {
                round: round + 1,
                mean,
                sd,
                n,
            }
        })
        .collect()
}

/// Reference metrics of the all-data baseline, echoed into the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FullFitSummary {
    pub rmse: f64,
    pub accuracy: f64,
}

/// Aggregated outcome of a repeated experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub n_instances: usize,
    pub hardware_ids: Vec<String>,
    pub full_fit: FullFitSummary,
    pub rmse: Vec<CurvePoint>,
    pub accuracy: Vec<CurvePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decisions: Option<Vec<Vec<DecisionRecord>>>,
}

/// Runs `config.n_sims` independent simulations, `threads` at a time, and
/// aggregates per-round means and sample standard deviations.
///
/// Results are keyed by simulation index, so the report is identical for any
/// thread count.
pub fn run_repeated(
    env: &ReplayEnvironment,
    hardware: &[HardwareConfig],
    config: &ExperimentConfig,
    threads: usize,
) -> Result<(ExperimentReport, Vec<SimulationResult>), ExperimentError> {
    config.validate()?;
    if threads == 0 {
        return Err(ExperimentError::Config(
            "thread count must be at least 1".to_string(),
        ));
    }
    let full = full_fit_baseline(env, hardware, config)?;

    let n_sims = config.n_sims;
    let results: Mutex<Vec<Option<SimulationResult>>> =
        Mutex::new((0..n_sims).map(|_| None).collect());
    let first_error: Mutex<Option<ExperimentError>> = Mutex::new(None);
    let failed = AtomicBool::new(false);
    let next = AtomicUsize::new(0);

    let worker_count = threads.min(n_sims);
    std::thread::scope(|scope| {
        for _ in 0..worker_count {
            scope.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let sim_index = next.fetch_add(1, Ordering::Relaxed);
                if sim_index >= n_sims {
                    break;
                }
                match run_simulation(env, hardware, config, sim_index) {
                    Ok(result) => {
                        results.lock().expect("results store")[sim_index] = Some(result);
                    }
                    Err(err) => {
                        failed.store(true, Ordering::Relaxed);
                        let mut slot = first_error.lock().expect("error store");
                        if slot.is_none() {
                            *slot = Some(err);
                        }
                        break;
                    }
                }
            });
        }
    });

    if let Some(err) = first_error.into_inner().expect("error store") {
        return Err(err);
    }
    let sims: Vec<SimulationResult> = results
        .into_inner()
        .expect("results store")
        .into_iter()
        .map(|slot| slot.expect("all simulations completed"))
        .collect();

    let rmse_curves: Vec<Vec<f64>> = sims.iter().map(|s| s.rmse_curve.clone()).collect();
    let accuracy_curves: Vec<Vec<f64>> = sims.iter().map(|s| s.accuracy_curve.clone()).collect();
    let report = ExperimentReport {
        config: config.clone(),
        n_instances: env.n_instances(),
        hardware_ids: hardware.iter().map(|h| h.id.clone()).collect(),
        full_fit: FullFitSummary {
            rmse: full.rmse,
            accuracy: full.accuracy,
        },
        rmse: curve_points(&rmse_curves, config.n_rounds),
        accuracy: curve_points(&accuracy_curves, config.n_rounds),
        decisions: if config.log_decisions {
            Some(sims.iter().map(|s| s.decisions.clone()).collect())
        } else {
            None
        },
    };
    Ok((report, sims))
}

/// Min/max/mean of a metric over repeated baseline fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub range: f64,
}

impl MetricSummary {
    fn from_values(values: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            min,
            max,
            mean: values.iter().sum::<f64>() / values.len() as f64,
            range: max - min,
        }
    }
}

/// Spread of repeated small-sample linear regressions, the simplest
/// prediction baseline: how much does model quality swing with the luck of
/// the training draw?
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineStats {
    pub samples_per_model: usize,
    pub n_models: usize,
    pub rmse: MetricSummary,
    pub r_squared: MetricSummary,
    pub fit_duration_seconds: MetricSummary,
}

/// Fits `n_models` regressions, each on `samples_per_model` rows drawn
/// without replacement, and scores every model on the full dataset.
///
/// Hardware enters the design as one-hot columns (first id, in sorted order,
/// is the baseline category). A draw that leaves the design degenerate, for
/// example because some hardware never appears, is redrawn.
pub fn linear_regression_baseline<R: Rng + ?Sized>(
    dataset: &Dataset,
    samples_per_model: usize,
    n_models: usize,
    ridge_lambda: f64,
    rng: &mut R,
) -> Result<BaselineStats, ExperimentError> {
    if samples_per_model < 2 {
        return Err(ExperimentError::Config(
            "each baseline model needs at least 2 samples".to_string(),
        ));
    }
    if n_models == 0 {
        return Err(ExperimentError::Config(
            "at least one baseline model is required".to_string(),
        ));
    }
    if samples_per_model > dataset.len() {
        return Err(ExperimentError::Dataset(DatasetError::SampleTooLarge {
            requested: samples_per_model,
            available: dataset.len(),
        }));
    }

    let hardware_ids: Vec<&String> = dataset.hardware_ids.iter().collect();
    let encode = |record_index: usize| -> Vec<f64> {
        let record = &dataset.records[record_index];
        let mut row = record.features.clone();
        // One-hot for every id after the first; the baseline category is
        // absorbed by the intercept.
        for id in &hardware_ids[1..] {
            row.push(if record.hardware_id == **id { 1.0 } else { 0.0 });
        }
        row
    };

    let all_rows: Vec<(Vec<f64>, f64)> = (0..dataset.len())
        .map(|i| (encode(i), dataset.records[i].runtime_seconds))
        .collect();

    let mut rmse_values = Vec::with_capacity(n_models);
    let mut r2_values = Vec::with_capacity(n_models);
    let mut durations = Vec::with_capacity(n_models);
    let max_attempts = n_models.saturating_mul(100);
    let mut attempts = 0usize;
    while rmse_values.len() < n_models {
        attempts += 1;
        if attempts > max_attempts {
            return Err(ExperimentError::Config(
                "baseline sampling kept producing degenerate designs".to_string(),
            ));
        }
        // Partial Fisher-Yates: the first `samples_per_model` slots become a
        // uniform draw without replacement. The draw is then sorted so row
        // order is canonical; a full-size sample is therefore the dataset
        // itself, bit for bit, and repeated full-size fits are identical.
        let mut indices: Vec<usize> = (0..dataset.len()).collect();
        for slot in 0..samples_per_model {
            let pick = rng.random_range(slot..indices.len());
            indices.swap(slot, pick);
        }
        let mut chosen: Vec<usize> = indices[..samples_per_model].to_vec();
        chosen.sort_unstable();
        let sample: Vec<(Vec<f64>, f64)> = chosen.iter().map(|&i| all_rows[i].clone()).collect();

        let started = Instant::now();
        let model = match fit_least_squares(&sample, ridge_lambda) {
            Ok(model) => model,
            Err(RegressionError::SingularDesign) => continue,
            Err(err) => return Err(err.into()),
        };
        durations.push(started.elapsed().as_secs_f64());

        let predictions = all_rows
            .iter()
            .map(|(x, _)| model.predict(x))
            .collect::<Result<Vec<f64>, _>>()?;
        let actuals: Vec<f64> = all_rows.iter().map(|&(_, y)| y).collect();
        rmse_values.push(crate::regression::rmse(&predictions, &actuals)?);
        r2_values.push(crate::regression::r_squared(&predictions, &actuals)?);
    }

    Ok(BaselineStats {
        samples_per_model,
        n_models,
        rmse: MetricSummary::from_values(&rmse_values),
        r_squared: MetricSummary::from_values(&r2_values),
        fit_duration_seconds: MetricSummary::from_values(&durations),
    })
}
