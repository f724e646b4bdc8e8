//! Decaying epsilon-greedy contextual bandit over a fixed hardware set.
//!
//! Each hardware option ("arm") carries a linear runtime model refitted from
//! that arm's own observation history. A selection round either explores
//! uniformly across all arms (with probability epsilon) or exploits: it takes
//! the fastest runtime estimate, widens it into the limit
//! `(1 + tolerance_ratio) * fastest + tolerance_seconds`, and picks the most
//! resource-frugal arm whose estimate stays under that limit. Epsilon shrinks
//! by the decay factor after every observed round, whichever branch was taken.

use crate::regression::{fit_least_squares, LinearModel, RegressionError};
use crate::types::{
    compare_hardware, resource_cost, CoreError, FeatureNames, FeatureVector, HardwareConfig,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// File format version written by [`BanditState::to_json`].
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum BanditError {
    #[error("duplicate hardware id '{0}'")]
    DuplicateHardwareId(String),
    #[error("hardware set must not be empty")]
    EmptyHardwareSet,
    #[error("unknown hardware id '{0}'")]
    UnknownHardwareId(String),
    #[error("runtime must be finite and non-negative, got {0}")]
    NegativeRuntime(f64),
    #[error("model was loaded without history; it can recommend but not update")]
    MissingHistory,
    #[error("invalid bandit config: {0}")]
    InvalidConfig(String),
    #[error("feature space mismatch: the bandit was built over different feature names")]
    FeatureMismatch,
    #[error("invalid model file: {0}")]
    Persistence(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("model refit failed: {0}")]
    Refit(#[from] RegressionError),
}

/// Tunable parameters of the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditConfig {
    /// Multiplicative epsilon decay applied after every update.
    pub alpha: f64,
    /// Initial exploration probability.
    pub epsilon0: f64,
    /// Relative slowdown tolerated when trading speed for frugality.
    pub tolerance_ratio: f64,
    /// Absolute slowdown, in seconds, tolerated on top of the ratio.
    pub tolerance_seconds: f64,
    /// Diagonal regularization used for every arm refit.
    pub ridge_lambda: f64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            alpha: 0.99,
            epsilon0: 1.0,
            tolerance_ratio: 0.0,
            tolerance_seconds: 0.0,
            ridge_lambda: 1e-8,
        }
    }
}

impl BanditConfig {
    pub fn validate(&self) -> Result<(), BanditError> {
        let fail = |msg: &str| Err(BanditError::InvalidConfig(msg.to_string()));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return fail("alpha must be in (0, 1]");
        }
        if !(self.epsilon0 >= 0.0 && self.epsilon0 <= 1.0) {
            return fail("epsilon0 must be in [0, 1]");
        }
        if !(self.tolerance_ratio.is_finite() && self.tolerance_ratio >= 0.0) {
            return fail("tolerance_ratio must be finite and non-negative");
        }
        if !(self.tolerance_seconds.is_finite() && self.tolerance_seconds >= 0.0) {
            return fail("tolerance_seconds must be finite and non-negative");
        }
        if !(self.ridge_lambda.is_finite() && self.ridge_lambda >= 0.0) {
            return fail("ridge_lambda must be finite and non-negative");
        }
        Ok(())
    }
}

/// One hardware option plus everything learned about it so far.
#[derive(Debug, Clone)]
pub struct ArmState {
    hardware: HardwareConfig,
    model: LinearModel,
    /// `None` after loading a model file saved without histories; such an arm
    /// can still predict but can no longer absorb observations.
    history: Option<Vec<(Vec<f64>, f64)>>,
    n_observations: usize,
}

impl ArmState {
    pub fn hardware(&self) -> &HardwareConfig {
        &self.hardware
    }

    pub fn model(&self) -> &LinearModel {
        &self.model
    }

    pub fn n_observations(&self) -> usize {
        self.n_observations
    }

    pub fn history(&self) -> Option<&[(Vec<f64>, f64)]> {
        self.history.as_deref()
    }
}

/// How a round picked its arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    Explore,
    Exploit,
}

/// Runtime estimate for one arm at the queried feature point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmEstimate {
    pub hardware_id: String,
    pub estimate_seconds: f64,
}

/// The audit record of one selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub hardware_id: String,
    pub kind: DecisionKind,
    pub estimates: Vec<ArmEstimate>,
    /// The tolerance limit used by an exploit round; absent for exploration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_limit: Option<f64>,
}

/// Result of [`tolerant_select`]: the chosen index and the limit it used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TolerantChoice {
    pub index: usize,
    pub r_limit: f64,
}

/// Picks the most resource-frugal arm whose estimate stays within
/// `(1 + tolerance_ratio) * min_estimate + tolerance_seconds`.
///
/// Ties on cost fall back to the lower estimate, then to the smaller id.
/// Negative estimates are taken as-is; if an aggressive ratio pushes the limit
/// below every estimate (possible only when the minimum is negative), the
/// plain argmin arm is returned so the selection stays total.
///
/// Returns `None` only for empty or misaligned inputs.
pub fn tolerant_select(
    estimates: &[f64],
    hardware: &[HardwareConfig],
    tolerance_ratio: f64,
    tolerance_seconds: f64,
) -> Option<TolerantChoice> {
    if estimates.is_empty() || estimates.len() != hardware.len() {
        return None;
    }
    let min = estimates.iter().copied().fold(f64::INFINITY, f64::min);
    let r_limit = (1.0 + tolerance_ratio) * min + tolerance_seconds;

    let frugality = |&i: &usize| {
        (
            resource_cost(&hardware[i]),
            estimates[i],
            hardware[i].id.as_str(),
        )
    };
    let prefer = |a: &usize, b: &usize| {
        let (ca, ea, ia) = frugality(a);
        let (cb, eb, ib) = frugality(b);
        ca.cmp(&cb).then(ea.total_cmp(&eb)).then(ia.cmp(ib))
    };

    let tolerated = (0..estimates.len()).filter(|&i| estimates[i] <= r_limit);
    let index = match tolerated.min_by(prefer) {
        Some(i) => i,
        // Empty tolerated set: fall back to the fastest estimate.
        None => (0..estimates.len())
            .filter(|&i| estimates[i] == min)
            .min_by(prefer)?,
    };
    Some(TolerantChoice { index, r_limit })
}

/// The whole policy state: per-arm models, the exploration schedule, and the
/// configuration that produced them.
///
/// A state is a plain value with a single logical writer; [`BanditState::update`]
/// mutates it under `&mut` and touches exactly one arm.
#[derive(Debug, Clone)]
pub struct BanditState {
    config: BanditConfig,
    feature_names: FeatureNames,
    arms: Vec<ArmState>,
    epsilon: f64,
    rounds_completed: u64,
}

impl BanditState {
    /// Builds a cold-start bandit: every arm holds the zero model and an empty
    /// history, and epsilon starts at `config.epsilon0`.
    pub fn new(
        hardware: Vec<HardwareConfig>,
        feature_names: FeatureNames,
        config: BanditConfig,
    ) -> Result<Self, BanditError> {
        config.validate()?;
        if hardware.is_empty() {
            return Err(BanditError::EmptyHardwareSet);
        }
        if feature_names.is_empty() {
            return Err(CoreError::EmptyFeatureSet.into());
        }
        for (i, hw) in hardware.iter().enumerate() {
            hw.validate()?;
            if hardware[..i].iter().any(|other| other.id == hw.id) {
                return Err(BanditError::DuplicateHardwareId(hw.id.clone()));
            }
        }
        let m = feature_names.len();
        let arms = hardware
            .into_iter()
            .map(|hardware| ArmState {
                hardware,
                model: LinearModel::zero(m),
                history: Some(Vec::new()),
                n_observations: 0,
            })
            .collect();
        Ok(Self {
            epsilon: config.epsilon0,
            config,
            feature_names,
            arms,
            rounds_completed: 0,
        })
    }

    pub fn config(&self) -> &BanditConfig {
        &self.config
    }

    pub fn feature_names(&self) -> &FeatureNames {
        &self.feature_names
    }

    pub fn arms(&self) -> &[ArmState] {
        &self.arms
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn rounds_completed(&self) -> u64 {
        self.rounds_completed
    }

    fn check_features(&self, x: &FeatureVector) -> Result<(), BanditError> {
        if x.names().as_slice() != self.feature_names.as_slice() {
            return Err(BanditError::FeatureMismatch);
        }
        Ok(())
    }

    /// Estimated runtime of every arm at `x`, in arm order.
    pub fn estimate_all(&self, x: &FeatureVector) -> Result<Vec<ArmEstimate>, BanditError> {
        self.check_features(x)?;
        self.arms
            .iter()
            .map(|arm| {
                Ok(ArmEstimate {
                    hardware_id: arm.hardware.id.clone(),
                    estimate_seconds: arm.model.predict(x.values())?,
                })
            })
            .collect()
    }

    /// One epsilon-greedy selection. Consumes at most two RNG draws: the
    /// explore/exploit coin, then a uniform arm index when exploring.
    pub fn select_arm<R: Rng + ?Sized>(
        &self,
        x: &FeatureVector,
        rng: &mut R,
    ) -> Result<Decision, BanditError> {
        let estimates = self.estimate_all(x)?;
        if rng.random::<f64>() < self.epsilon {
            let index = rng.random_range(0..self.arms.len());
            return Ok(Decision {
                hardware_id: self.arms[index].hardware.id.clone(),
                kind: DecisionKind::Explore,
                estimates,
                r_limit: None,
            });
        }
        let values: Vec<f64> = estimates.iter().map(|e| e.estimate_seconds).collect();
        let hardware: Vec<HardwareConfig> =
            self.arms.iter().map(|a| a.hardware.clone()).collect();
        let choice = tolerant_select(
            &values,
            &hardware,
            self.config.tolerance_ratio,
            self.config.tolerance_seconds,
        )
        .expect("non-empty arm set");
        Ok(Decision {
            hardware_id: self.arms[choice.index].hardware.id.clone(),
            kind: DecisionKind::Exploit,
            estimates,
            r_limit: Some(choice.r_limit),
        })
    }

    /// Absorbs one observed runtime: appends it to the chosen arm's history,
    /// refits that arm alone, then decays epsilon and counts the round.
    ///
    /// On any error the state is left untouched.
    pub fn update(
        &mut self,
        hardware_id: &str,
        x: &FeatureVector,
        runtime_seconds: f64,
    ) -> Result<(), BanditError> {
        self.check_features(x)?;
        if !(runtime_seconds.is_finite() && runtime_seconds >= 0.0) {
            return Err(BanditError::NegativeRuntime(runtime_seconds));
        }
        let index = self
            .arms
            .iter()
            .position(|arm| arm.hardware.id == hardware_id)
            .ok_or_else(|| BanditError::UnknownHardwareId(hardware_id.to_string()))?;
        if self.arms[index].history.is_none() {
            return Err(BanditError::MissingHistory);
        }

        // Refit against a candidate history first so a solver failure cannot
        // leave the arm half-updated.
        let mut history = self.arms[index].history.take().expect("checked above");
        history.push((x.values().to_vec(), runtime_seconds));
        match fit_least_squares(&history, self.config.ridge_lambda) {
            Ok(model) => {
                let arm = &mut self.arms[index];
                arm.n_observations = history.len();
                arm.history = Some(history);
                arm.model = model;
                self.epsilon *= self.config.alpha;
                self.rounds_completed += 1;
                Ok(())
            }
            Err(err) => {
                history.pop();
                self.arms[index].history = Some(history);
                Err(err.into())
            }
        }
    }

    /// Deterministic recommendation: tolerant selection over the current
    /// estimates with the configured tolerances. No randomness is involved.
    pub fn recommend(&self, x: &FeatureVector) -> Result<&str, BanditError> {
        let estimates = self.estimate_all(x)?;
        let values: Vec<f64> = estimates.iter().map(|e| e.estimate_seconds).collect();
        let hardware: Vec<HardwareConfig> =
            self.arms.iter().map(|a| a.hardware.clone()).collect();
        let choice = tolerant_select(
            &values,
            &hardware,
            self.config.tolerance_ratio,
            self.config.tolerance_seconds,
        )
        .expect("non-empty arm set");
        Ok(&self.arms[choice.index].hardware.id)
    }

    /// Serializes the state to the versioned JSON model format. Histories are
    /// embedded only when `include_history` is set; a file saved without them
    /// loads into a recommend-only state.
    pub fn to_json(&self, include_history: bool) -> String {
        let persisted = PersistedState {
            version: MODEL_FORMAT_VERSION,
            feature_names: self.feature_names.as_ref().clone(),
            config: self.config.clone(),
            epsilon: self.epsilon,
            rounds_completed: self.rounds_completed,
            arms: self
                .arms
                .iter()
                .map(|arm| PersistedArm {
                    hardware: arm.hardware.clone(),
                    weights: arm.model.weights.clone(),
                    bias: arm.model.bias,
                    n_observations: arm.n_observations,
                    history: if include_history {
                        arm.history.clone()
                    } else {
                        None
                    },
                })
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&persisted).expect("serializable state");
        out.push('\n');
        out
    }

    /// Restores a state saved by [`BanditState::to_json`]. Model coefficients
    /// are taken verbatim (never refitted), so recommendations agree exactly
    /// with the saved state.
    pub fn from_json(text: &str) -> Result<Self, BanditError> {
        let persisted: PersistedState = serde_json::from_str(text)
            .map_err(|e| BanditError::Persistence(e.to_string()))?;
        let fail = |msg: String| Err(BanditError::Persistence(msg));
        if persisted.version != MODEL_FORMAT_VERSION {
            return fail(format!(
                "unsupported format version {} (expected {})",
                persisted.version, MODEL_FORMAT_VERSION
            ));
        }
        persisted.config.validate()?;
        if persisted.arms.is_empty() {
            return Err(BanditError::EmptyHardwareSet);
        }
        let names = crate::types::feature_names(persisted.feature_names)?;
        if !(persisted.epsilon.is_finite() && (0.0..=1.0).contains(&persisted.epsilon)) {
            return fail(format!("epsilon {} out of range", persisted.epsilon));
        }
        let mut arms = Vec::with_capacity(persisted.arms.len());
        for arm in persisted.arms {
            arm.hardware.validate()?;
            if arms
                .iter()
                .any(|a: &ArmState| a.hardware.id == arm.hardware.id)
            {
                return Err(BanditError::DuplicateHardwareId(arm.hardware.id));
            }
            if arm.weights.len() != names.len() {
                return fail(format!(
                    "arm '{}' has {} weights for {} features",
                    arm.hardware.id,
                    arm.weights.len(),
                    names.len()
                ));
            }
            if arm.weights.iter().chain([&arm.bias]).any(|v| !v.is_finite()) {
                return fail(format!("arm '{}' has non-finite coefficients", arm.hardware.id));
            }
            if let Some(history) = &arm.history {
                if history.len() != arm.n_observations {
                    return fail(format!(
                        "arm '{}' claims {} observations but embeds {}",
                        arm.hardware.id,
                        arm.n_observations,
                        history.len()
                    ));
                }
                for (x, runtime) in history {
                    if x.len() != names.len() || x.iter().any(|v| !v.is_finite()) {
                        return fail(format!("arm '{}' has a malformed history row", arm.hardware.id));
                    }
                    if !(runtime.is_finite() && *runtime >= 0.0) {
                        return fail(format!("arm '{}' has a negative history runtime", arm.hardware.id));
                    }
                }
            }
            arms.push(ArmState {
                hardware: arm.hardware,
                model: LinearModel {
                    weights: arm.weights,
                    bias: arm.bias,
                },
                history: arm.history,
                n_observations: arm.n_observations,
            });
        }
        Ok(Self {
            config: persisted.config,
            feature_names: names,
            arms,
            epsilon: persisted.epsilon,
            rounds_completed: persisted.rounds_completed,
        })
    }

    /// The cheapest arm by resource cost; the cold-start recommendation.
    pub fn cheapest_arm(&self) -> &HardwareConfig {
        &self
            .arms
            .iter()
            .min_by(|a, b| compare_hardware(&a.hardware, &b.hardware))
            .expect("non-empty arm set")
            .hardware
    }
}

#[derive(Serialize, Deserialize)]
struct PersistedState {
    version: u32,
    feature_names: Vec<String>,
    config: BanditConfig,
    epsilon: f64,
    rounds_completed: u64,
    arms: Vec<PersistedArm>,
}

#[derive(Serialize, Deserialize)]
struct PersistedArm {
    hardware: HardwareConfig,
    weights: Vec<f64>,
    bias: f64,
    n_observations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    history: Option<Vec<(Vec<f64>, f64)>>,
}
