//! Shared domain types: feature vectors, hardware descriptions, observed runs,
//! and the resource-cost ordering used to break ties between hardware options.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CoreError {
    #[error("dimension mismatch: expected {expected} feature values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("feature '{name}' has non-finite value {value}")]
    NonFiniteValue { name: String, value: f64 },
    #[error("feature names must be non-empty and unique (offender: '{0}')")]
    BadFeatureName(String),
    #[error("at least one feature is required")]
    EmptyFeatureSet,
    #[error("invalid hardware '{id}': {reason}")]
    InvalidHardware { id: String, reason: String },
    #[error("runtime must be finite and non-negative, got {0}")]
    NegativeRuntime(f64),
    #[error("instance id must be non-empty")]
    EmptyInstanceId,
}

/// Ordered feature names shared by every vector drawn from the same space.
/// Cloning is cheap; the list itself is immutable once built.
pub type FeatureNames = Arc<Vec<String>>;

/// Builds a validated shared name list.
pub fn feature_names<S: Into<String>>(names: Vec<S>) -> Result<FeatureNames, CoreError> {
    let names: Vec<String> = names.into_iter().map(Into::into).collect();
    if names.is_empty() {
        return Err(CoreError::EmptyFeatureSet);
    }
    for (i, name) in names.iter().enumerate() {
        if name.is_empty() || names[..i].contains(name) {
            return Err(CoreError::BadFeatureName(name.clone()));
        }
    }
    Ok(Arc::new(names))
}

/// Checks that `values` matches the feature space in arity and holds only
/// finite numbers.
pub fn validate_feature_vector(names: &[String], values: &[f64]) -> Result<(), CoreError> {
    if names.is_empty() {
        return Err(CoreError::EmptyFeatureSet);
    }
    if values.len() != names.len() {
        return Err(CoreError::DimensionMismatch {
            expected: names.len(),
            actual: values.len(),
        });
    }
    for (name, &value) in names.iter().zip(values) {
        if !value.is_finite() {
            return Err(CoreError::NonFiniteValue {
                name: name.clone(),
                value,
            });
        }
    }
    Ok(())
}

/// An immutable point in feature space, tied to its ordered feature names.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    names: FeatureNames,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(names: FeatureNames, values: Vec<f64>) -> Result<Self, CoreError> {
        validate_feature_vector(&names, &values)?;
        Ok(Self { names, values })
    }

    pub fn names(&self) -> &FeatureNames {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value for a named feature, if that feature exists.
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }
}

/// One hardware option the policy can choose.
///
/// `cost_weight`, when set, replaces the (cpus, memory) tuple as the key used
/// to decide which of two options is "cheaper".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareConfig {
    pub id: String,
    pub cpus: u32,
    pub memory_gb: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_weight: Option<f64>,
}

impl HardwareConfig {
    pub fn new(id: impl Into<String>, cpus: u32, memory_gb: f64) -> Result<Self, CoreError> {
        let hw = Self {
            id: id.into(),
            cpus,
            memory_gb,
            cost_weight: None,
        };
        hw.validate()?;
        Ok(hw)
    }

    pub fn with_cost_weight(mut self, cost_weight: f64) -> Result<Self, CoreError> {
        self.cost_weight = Some(cost_weight);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        let fail = |reason: &str| {
            Err(CoreError::InvalidHardware {
                id: self.id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.id.is_empty() {
            return fail("id must be non-empty");
        }
        if self.cpus == 0 {
            return fail("cpus must be at least 1");
        }
        if !(self.memory_gb.is_finite() && self.memory_gb > 0.0) {
            return fail("memory_gb must be finite and positive");
        }
        if let Some(w) = self.cost_weight {
            if !(w.is_finite() && w >= 0.0) {
                return fail("cost_weight must be finite and non-negative");
            }
        }
        Ok(())
    }
}

/// Comparison key produced by [`resource_cost`].
///
/// An explicit weight always orders before tuple-keyed configs so that mixed
/// sets still have a total order; within a variant the comparison is by weight
/// value, or by cpus first and memory second. All values are finite by
/// construction, so the float comparisons below are total.
#[derive(Debug, Clone, PartialEq)]
pub enum CostKey {
    Weight(f64),
    Spec { cpus: u32, memory_gb: f64 },
}

impl Eq for CostKey {}

impl Ord for CostKey {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (CostKey::Weight(a), CostKey::Weight(b)) => a.total_cmp(b),
            (CostKey::Weight(_), CostKey::Spec { .. }) => Ordering::Less,
            (CostKey::Spec { .. }, CostKey::Weight(_)) => Ordering::Greater,
            (
                CostKey::Spec { cpus: c1, memory_gb: m1 },
                CostKey::Spec { cpus: c2, memory_gb: m2 },
            ) => c1.cmp(c2).then_with(|| m1.total_cmp(m2)),
        }
    }
}

impl PartialOrd for CostKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Resource frugality key: smaller means cheaper to occupy.
pub fn resource_cost(hw: &HardwareConfig) -> CostKey {
    match hw.cost_weight {
        Some(w) => CostKey::Weight(w),
        None => CostKey::Spec {
            cpus: hw.cpus,
            memory_gb: hw.memory_gb,
        },
    }
}

/// Total order over hardware: resource cost first, id as the final tie-break.
pub fn compare_hardware(a: &HardwareConfig, b: &HardwareConfig) -> Ordering {
    resource_cost(a)
        .cmp(&resource_cost(b))
        .then_with(|| a.id.cmp(&b.id))
}

/// One measured run: a task instance's features, the hardware it ran on, and
/// the runtime observed there. The instance id groups repeated runs of the
/// same task during replay. Feature names live on the surrounding dataset,
/// not on each record.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub instance_id: String,
    pub features: Vec<f64>,
    pub hardware_id: String,
    pub runtime_seconds: f64,
}

impl RunRecord {
    pub fn new(
        instance_id: impl Into<String>,
        features: Vec<f64>,
        hardware_id: impl Into<String>,
        runtime_seconds: f64,
    ) -> Result<Self, CoreError> {
        let instance_id = instance_id.into();
        if instance_id.is_empty() {
            return Err(CoreError::EmptyInstanceId);
        }
        if let Some(&bad) = features.iter().find(|v| !v.is_finite()) {
            return Err(CoreError::NonFiniteValue {
                name: "features".to_string(),
                value: bad,
            });
        }
        if !(runtime_seconds.is_finite() && runtime_seconds >= 0.0) {
            return Err(CoreError::NegativeRuntime(runtime_seconds));
        }
        Ok(Self {
            instance_id,
            features,
            hardware_id: hardware_id.into(),
            runtime_seconds,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(list: &[&str]) -> FeatureNames {
        feature_names(list.to_vec()).unwrap()
    }

    #[test]
    fn accepts_matching_finite_vector() {
        let n = names(&["size", "sparsity"]);
        let fv = FeatureVector::new(n, vec![100.0, 0.5]).unwrap();
        assert_eq!(fv.values(), &[100.0, 0.5]);
        assert_eq!(fv.get("sparsity"), Some(0.5));
        assert_eq!(fv.get("missing"), None);
    }

    #[test]
    fn rejects_nan_and_infinite_values() {
        let n = names(&["size"]);
        let err = FeatureVector::new(n.clone(), vec![f64::NAN]).unwrap_err();
        assert!(matches!(err, CoreError::NonFiniteValue { .. }));
        let err = FeatureVector::new(n, vec![f64::INFINITY]).unwrap_err();
        assert!(matches!(err, CoreError::NonFiniteValue { .. }));
    }

    #[test]
    fn rejects_arity_mismatch() {
        let n = names(&["a", "b"]);
        let err = FeatureVector::new(n, vec![1.0]).unwrap_err();
        assert_eq!(
            err,
            CoreError::DimensionMismatch {
                expected: 2,
                actual: 1
            }
        );
    }

    #[test]
    fn rejects_duplicate_or_empty_feature_names() {
        assert!(matches!(
            feature_names(vec!["a", "a"]).unwrap_err(),
            CoreError::BadFeatureName(_)
        ));
        assert!(matches!(
            feature_names(vec![""]).unwrap_err(),
            CoreError::BadFeatureName(_)
        ));
        assert_eq!(
            feature_names(Vec::<String>::new()).unwrap_err(),
            CoreError::EmptyFeatureSet
        );
    }

    #[test]
    fn hardware_validation_catches_bad_fields() {
        assert!(matches!(
            HardwareConfig::new("h", 0, 16.0).unwrap_err(),
            CoreError::InvalidHardware { .. }
        ));
        assert!(matches!(
            HardwareConfig::new("h", 2, 0.0).unwrap_err(),
            CoreError::InvalidHardware { .. }
        ));
        assert!(matches!(
            HardwareConfig::new("", 2, 16.0).unwrap_err(),
            CoreError::InvalidHardware { .. }
        ));
        assert!(HardwareConfig::new("h", 2, 16.0)
            .unwrap()
            .with_cost_weight(-1.0)
            .is_err());
    }

    // Fewer cpus win even when the memory is larger: (3, 24) < (4, 16).
    #[test]
    fn cpu_count_dominates_memory() {
        let h1 = HardwareConfig::new("H1", 3, 24.0).unwrap();
        let h2 = HardwareConfig::new("H2", 4, 16.0).unwrap();
        assert!(resource_cost(&h1) < resource_cost(&h2));

        let h0 = HardwareConfig::new("H0", 2, 16.0).unwrap();
        let mut all = vec![h2.clone(), h0.clone(), h1.clone()];
        all.sort_by(compare_hardware);
        let ids: Vec<&str> = all.iter().map(|h| h.id.as_str()).collect();
        assert_eq!(ids, ["H0", "H1", "H2"]);
    }

    #[test]
    fn memory_breaks_cpu_ties_and_id_breaks_full_ties() {
        let a = HardwareConfig::new("b", 4, 16.0).unwrap();
        let b = HardwareConfig::new("a", 4, 32.0).unwrap();
        assert_eq!(compare_hardware(&a, &b), Ordering::Less);

        let c = HardwareConfig::new("a", 4, 16.0).unwrap();
        let d = HardwareConfig::new("b", 4, 16.0).unwrap();
        assert_eq!(compare_hardware(&c, &d), Ordering::Less);
    }

    #[test]
    fn cost_weight_overrides_the_tuple() {
        let big = HardwareConfig::new("big", 64, 512.0)
            .unwrap()
            .with_cost_weight(1.0)
            .unwrap();
        let small = HardwareConfig::new("small", 1, 1.0)
            .unwrap()
            .with_cost_weight(2.0)
            .unwrap();
        assert!(resource_cost(&big) < resource_cost(&small));
        // A weighted config sorts before any tuple-keyed one.
        let plain = HardwareConfig::new("plain", 1, 1.0).unwrap();
        assert!(resource_cost(&small) < resource_cost(&plain));
    }

    #[test]
    fn run_record_rejects_bad_runtimes() {
        assert_eq!(
            RunRecord::new("a", vec![1.0], "h", -1.0).unwrap_err(),
            CoreError::NegativeRuntime(-1.0)
        );
        assert!(RunRecord::new("a", vec![1.0], "h", f64::NAN).is_err());
        assert!(RunRecord::new("a", vec![1.0], "h", 0.0).is_ok());
    }

    #[test]
    fn run_record_requires_id_and_finite_features() {
        assert_eq!(
            RunRecord::new("", vec![1.0], "h", 1.0).unwrap_err(),
            CoreError::EmptyInstanceId
        );
        assert!(matches!(
            RunRecord::new("a", vec![f64::INFINITY], "h", 1.0).unwrap_err(),
            CoreError::NonFiniteValue { .. }
        ));
    }
}
