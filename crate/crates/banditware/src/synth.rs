//! Synthetic workloads: scripted linear environments for controlled
//! experiments, and a real matrix-squaring benchmark whose runtimes come from
//! the host machine rather than a formula.

use crate::dataset::{canonical_instance_id, Dataset, DatasetError};
use crate::types::{CoreError, HardwareConfig, RunRecord};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::sync::Mutex;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("failed to parse scenario: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid benchmark grid: {0}")]
    InvalidGrid(String),
    #[error(
        "checksum mismatch at size {size} with {workers} workers: \
         expected {expected}, got {actual}"
    )]
    ChecksumMismatch {
        size: usize,
        workers: usize,
        expected: u64,
        actual: u64,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// How instance features are drawn.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSampler {
    /// Each feature takes one of a fixed set of values, uniformly.
    Choice { values: Vec<Vec<f64>> },
    /// Each feature is uniform over a closed interval.
    Uniform { ranges: Vec<(f64, f64)> },
}

impl FeatureSampler {
    fn arity(&self) -> usize {
        match self {
            FeatureSampler::Choice { values } => values.len(),
            FeatureSampler::Uniform { ranges } => ranges.len(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            FeatureSampler::Choice { values } => values
                .iter()
                .map(|options| options[rng.random_range(0..options.len())])
                .collect(),
            FeatureSampler::Uniform { ranges } => ranges
                .iter()
                .map(|&(lo, hi)| {
                    if lo == hi {
                        lo
                    } else {
                        rng.random_range(lo..hi)
                    }
                })
                .collect(),
        }
    }
}

/// One scripted hardware option: a ground-truth linear runtime plus the
/// observation noise layered on top.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticArmSpec {
    pub hardware: HardwareConfig,
    #[serde(rename = "weights")]
    pub true_weights: Vec<f64>,
    #[serde(rename = "bias")]
    pub true_bias: f64,
    pub noise_sd: f64,
}

/// A complete synthetic environment, loadable from TOML.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub feature_names: Vec<String>,
    pub sampler: FeatureSampler,
    pub arms: Vec<SyntheticArmSpec>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |msg: String| Err(SynthError::InvalidScenario(msg));
        crate::types::feature_names(self.feature_names.clone())
            .map_err(|e| SynthError::InvalidScenario(e.to_string()))?;
        let m = self.feature_names.len();
        if self.sampler.arity() != m {
            return fail(format!(
                "sampler covers {} features but {} are named",
                self.sampler.arity(),
                m
            ));
        }
        match &self.sampler {
            FeatureSampler::Choice { values } => {
                for (i, options) in values.iter().enumerate() {
                    if options.is_empty() {
                        return fail(format!("feature {i} has no choice values"));
                    }
                    if options.iter().any(|v| !v.is_finite()) {
                        return fail(format!("feature {i} has a non-finite choice value"));
                    }
                }
            }
            FeatureSampler::Uniform { ranges } => {
                for (i, &(lo, hi)) in ranges.iter().enumerate() {
                    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                        return fail(format!("feature {i} has an invalid range [{lo}, {hi}]"));
                    }
                }
            }
        }
        if self.arms.is_empty() {
            return fail("scenario has no arms".to_string());
        }
        for (i, arm) in self.arms.iter().enumerate() {
            arm.hardware
                .validate()
                .map_err(|e| SynthError::InvalidScenario(e.to_string()))?;
            if self.arms[..i].iter().any(|a| a.hardware.id == arm.hardware.id) {
                return fail(format!("duplicate hardware id '{}'", arm.hardware.id));
            }
            if arm.true_weights.len() != m {
                return fail(format!(
                    "arm '{}' has {} weights for {} features",
                    arm.hardware.id,
                    arm.true_weights.len(),
                    m
                ));
            }
            if arm.true_weights.iter().any(|w| !w.is_finite()) || !arm.true_bias.is_finite() {
                return fail(format!("arm '{}' has non-finite coefficients", arm.hardware.id));
            }
            if !(arm.noise_sd.is_finite() && arm.noise_sd >= 0.0) {
                return fail(format!("arm '{}' has an invalid noise_sd", arm.hardware.id));
            }
        }
        Ok(())
    }

    pub fn hardware(&self) -> Vec<HardwareConfig> {
        self.arms.iter().map(|a| a.hardware.clone()).collect()
    }

    /// The noiseless runtime of arm `arm_index` at `features`.
    pub fn true_runtime(&self, arm_index: usize, features: &[f64]) -> f64 {
        let arm = &self.arms[arm_index];
        arm.true_weights
            .iter()
            .zip(features)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + arm.true_bias
    }

    /// One noisy observation, clamped at zero so runtimes stay physical.
    pub fn draw<R: Rng + ?Sized>(
        &self,
        arm_index: usize,
        features: &[f64],
        noise_scale: f64,
        rng: &mut R,
    ) -> f64 {
        let mean = self.true_runtime(arm_index, features);
        let sd = self.arms[arm_index].noise_sd * noise_scale;
        let noisy = if sd > 0.0 {
            mean + Normal::new(0.0, sd).expect("validated sd").sample(rng)
        } else {
            mean
        };
        noisy.max(0.0)
    }
}

/// The scenario shipped with the binary: four machine sizes whose ranking
/// changes with workflow size, so the best choice is genuinely contextual.
pub fn default_scenario() -> Scenario {
    Scenario::from_toml(include_str!("../scenarios/experiment1.toml"))
        .expect("bundled scenario is valid")
}

/// Draws a full synthetic dataset: `n_instances` feature vectors, each
/// observed once on every arm. Instance ids are positional (`i0000`, ...)
/// because a choice sampler can repeat feature tuples across instances.
pub fn generate_dataset<R: Rng + ?Sized>(
    scenario: &Scenario,
    n_instances: usize,
    noise_scale: f64,
    rng: &mut R,
) -> Result<Dataset, SynthError> {
    if n_instances == 0 {
        return Err(SynthError::InvalidScenario(
            "dataset needs at least one instance".to_string(),
        ));
    }
    if !(noise_scale.is_finite() && noise_scale >= 0.0) {
        return Err(SynthError::InvalidScenario(
            "noise scale must be finite and non-negative".to_string(),
        ));
    }
    let names = crate::types::feature_names(scenario.feature_names.clone())
        .map_err(|e| SynthError::InvalidScenario(e.to_string()))?;
    let mut records = Vec::with_capacity(n_instances * scenario.arms.len());
    for i in 0..n_instances {
        let instance_id = format!("i{i:04}");
        let features = scenario.sampler.sample(rng);
        for (arm_index, arm) in scenario.arms.iter().enumerate() {
            let runtime = scenario.draw(arm_index, &features, noise_scale, rng);
            records.push(RunRecord::new(
                instance_id.clone(),
                features.clone(),
                arm.hardware.id.clone(),
                runtime,
            )?);
        }
    }
    Ok(Dataset::new(records, names)?)
}

/// A square integer matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub n: usize,
    pub values: Vec<i64>,
}

/// Parameters of one benchmark matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixSpec {
    pub size: usize,
    /// Fraction of entries forced to zero.
    pub sparsity: f64,
    pub min_value: i64,
    pub max_value: i64,
}

impl MatrixSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |msg: String| Err(SynthError::InvalidGrid(msg));
        if self.size == 0 {
            return fail("matrix size must be at least 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return fail(format!("sparsity {} outside [0, 1]", self.sparsity));
        }
        if self.min_value > self.max_value {
            return fail(format!(
                "min value {} exceeds max value {}",
                self.min_value, self.max_value
            ));
        }
        Ok(())
    }

    pub fn features(&self) -> Vec<f64> {
        vec![
            self.size as f64,
            self.sparsity,
            self.min_value as f64,
            self.max_value as f64,
        ]
    }
}

/// Fills a square matrix from `spec`: each entry is zero with probability
/// `sparsity`, otherwise uniform over `[min_value, max_value]`.
pub fn generate_matrix<R: Rng + ?Sized>(spec: &MatrixSpec, rng: &mut R) -> Result<Matrix, SynthError> {
    spec.validate()?;
    let n = spec.size;
    let mut values = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        let v = if spec.sparsity > 0.0 && rng.random::<f64>() < spec.sparsity {
            0
        } else {
            rng.random_range(spec.min_value..=spec.max_value)
        };
        values.push(v);
    }
    Ok(Matrix { n, values })
}

/// Squares `matrix` with exactly `workers` threads and returns the wall time
/// in seconds plus a checksum of the product.
///
/// Threads pull bands of `tile_size` rows from a shared queue, so every
/// worker count computes the same product; the checksum (a wrapping sum of
/// all cells) must therefore be identical across worker counts. Arithmetic
/// wraps on overflow to keep large value ranges well-defined.
///
/// The timer covers thread spawn through join, not matrix generation.
pub fn time_square(
    matrix: &Matrix,
    workers: usize,
    tile_size: usize,
) -> Result<(f64, u64), SynthError> {
    if workers == 0 {
        return Err(SynthError::InvalidGrid("worker count must be at least 1".to_string()));
    }
    if tile_size == 0 {
        return Err(SynthError::InvalidGrid("tile size must be at least 1".to_string()));
    }
    let n = matrix.n;
    if matrix.values.len() != n * n {
        return Err(SynthError::InvalidGrid(format!(
            "matrix claims size {n} but holds {} values",
            matrix.values.len()
        )));
    }
    let a = &matrix.values;
    let mut output = vec![0i64; n * n];

    let start = Instant::now();
    let bands = Mutex::new(output.chunks_mut(tile_size * n).enumerate());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                // Claim the next row band; the lock is held only for the claim.
                let claimed = bands.lock().expect("band queue").next();
                let Some((band_index, band)) = claimed else {
                    break;
                };
                let row_offset = band_index * tile_size;
                for (local_row, out_row) in band.chunks_mut(n).enumerate() {
                    let i = row_offset + local_row;
                    for k in 0..n {
                        let a_ik = a[i * n + k];
                        if a_ik == 0 {
                            continue;
                        }
                        let a_row_k = &a[k * n..(k + 1) * n];
                        for (out, &a_kj) in out_row.iter_mut().zip(a_row_k) {
                            *out = out.wrapping_add(a_ik.wrapping_mul(a_kj));
                        }
                    }
                }
            });
        }
    });
    let seconds = start.elapsed().as_secs_f64();

    let checksum = output
        .iter()
        .fold(0u64, |acc, &cell| acc.wrapping_add(cell as u64));
    Ok((seconds, checksum))
}

/// The full benchmark sweep: every matrix configuration, squared once per
/// repetition under each worker count.
#[derive(Debug, Clone)]
pub struct MatmulGrid {
    pub sizes: Vec<usize>,
    pub sparsities: Vec<f64>,
    pub value_ranges: Vec<(i64, i64)>,
    pub workers: Vec<usize>,
    pub repetitions: usize,
    pub tile_size: usize,
}

impl MatmulGrid {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |msg: &str| Err(SynthError::InvalidGrid(msg.to_string()));
        if self.sizes.is_empty() {
            return fail("at least one matrix size is required");
        }
        if self.sparsities.is_empty() {
            return fail("at least one sparsity is required");
        }
        if self.value_ranges.is_empty() {
            return fail("at least one value range is required");
        }
        if self.workers.is_empty() {
            return fail("at least one worker count is required");
        }
        if self.workers.iter().any(|&w| w == 0) {
            return fail("worker counts must be at least 1");
        }
        if self.repetitions == 0 {
            return fail("at least one repetition is required");
        }
        if self.tile_size == 0 {
            return fail("tile size must be at least 1");
        }
        for &size in &self.sizes {
            for &sparsity in &self.sparsities {
                for &(min_value, max_value) in &self.value_ranges {
                    MatrixSpec {
                        size,
                        sparsity,
                        min_value,
                        max_value,
                    }
                    .validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn specs(&self) -> Vec<MatrixSpec> {
        let mut specs = Vec::new();
        for &size in &self.sizes {
            for &sparsity in &self.sparsities {
                for &(min_value, max_value) in &self.value_ranges {
                    specs.push(MatrixSpec {
                        size,
                        sparsity,
                        min_value,
                        max_value,
                    });
                }
            }
        }
        specs
    }

    /// One hardware configuration per worker count, named `w1`, `w2`, ...
    pub fn hardware(&self) -> Result<Vec<HardwareConfig>, SynthError> {
        self.workers
            .iter()
            .map(|&w| Ok(HardwareConfig::new(format!("w{w}"), w as u32, 1.0)?))
            .collect()
    }
}

/// Benchmark feature names: kept in one place so writers and readers agree.
pub const MATMUL_FEATURES: [&str; 4] = ["size", "sparsity", "min_value", "max_value"];

/// Runs the sweep and shapes the timings as a runtime dataset: matrices are
/// instances, worker counts are hardware. A matrix is generated once per
/// repetition and every worker count squares that same matrix; diverging
/// checksums abort the sweep.
///
/// `progress` receives one line per completed (spec, repetition) pair.
pub fn bench_matmul<R: Rng + ?Sized>(
    grid: &MatmulGrid,
    rng: &mut R,
    mut progress: impl FnMut(String),
) -> Result<(Dataset, Vec<HardwareConfig>), SynthError> {
    grid.validate()?;
    let names = crate::types::feature_names(
        MATMUL_FEATURES.iter().map(|s| s.to_string()).collect(),
    )
    .map_err(|e| SynthError::InvalidGrid(e.to_string()))?;
    let hardware = grid.hardware()?;

    let specs = grid.specs();
    let mut records = Vec::new();
    for (spec_index, spec) in specs.iter().enumerate() {
        let features = spec.features();
        let instance_id = canonical_instance_id(&features);
        for rep in 0..grid.repetitions {
            let matrix = generate_matrix(spec, rng)?;
            let mut reference: Option<u64> = None;
            for (&workers, hw) in grid.workers.iter().zip(&hardware) {
                let (seconds, checksum) = time_square(&matrix, workers, grid.tile_size)?;
                match reference {
                    None => reference = Some(checksum),
                    Some(expected) if expected != checksum => {
                        return Err(SynthError::ChecksumMismatch {
                            size: spec.size,
                            workers,
                            expected,
                            actual: checksum,
                        });
                    }
                    Some(_) => {}
                }
                records.push(RunRecord::new(
                    instance_id.clone(),
                    features.clone(),
                    hw.id.clone(),
                    seconds,
                )?);
            }
            progress(format!(
                "matrix {}/{} (size {}, sparsity {}) repetition {}/{} done",
                spec_index + 1,
                specs.len(),
                spec.size,
                spec.sparsity,
                rep + 1,
                grid.repetitions
            ));
        }
    }
    Ok((Dataset::new(records, names)?, hardware))
}
