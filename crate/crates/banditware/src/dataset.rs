//! Loading run records from CSV and turning them into a replay environment.
//!
//! A replay environment answers "what would this instance have taken on that
//! hardware" from historical data, which lets the bandit be evaluated offline:
//! every selection is scored against the runtime actually recorded for the
//! chosen hardware.

use crate::types::{CoreError, FeatureNames, HardwareConfig, RunRecord};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("column '{0}' not found in header")]
    MissingColumn(String),
    #[error("row {row}: cannot parse '{value}' in column '{column}'")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("dataset contains no rows")]
    EmptyDataset,
    #[error("no instance has runtimes on every hardware configuration")]
    NoCompleteInstances,
    #[error("replay environment contains no instances")]
    EmptyEnvironment,
    #[error("instance '{instance_id}' has no runtime on hardware '{hardware_id}'")]
    MissingArm {
        instance_id: String,
        hardware_id: String,
    },
    #[error("instance index {0} out of range")]
    InstanceOutOfRange(usize),
    #[error("subsample of {requested} rows requested but only {available} available")]
    SampleTooLarge {
        requested: usize,
        available: usize,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// A flat table of observed runs plus the feature space they share.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<RunRecord>,
    pub feature_names: FeatureNames,
    pub hardware_ids: BTreeSet<String>,
}

impl Dataset {
    pub fn new(records: Vec<RunRecord>, feature_names: FeatureNames) -> Result<Self, DatasetError> {
        if records.is_empty() {
            return Err(DatasetError::EmptyDataset);
        }
        let hardware_ids = records.iter().map(|r| r.hardware_id.clone()).collect();
        Ok(Self {
            records,
            feature_names,
            hardware_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The first `n` records in original order. Replayed experiments shrink
    /// their input this way so a repeated run sees a bit-identical table.
    pub fn subsample(&self, n: usize) -> Result<Dataset, DatasetError> {
        if n == 0 {
            return Err(DatasetError::EmptyDataset);
        }
        if n > self.records.len() {
            return Err(DatasetError::SampleTooLarge {
                requested: n,
                available: self.records.len(),
            });
        }
        Ok(Dataset {
            records: self.records[..n].to_vec(),
            feature_names: self.feature_names.clone(),
            hardware_ids: self.records[..n]
                .iter()
                .map(|r| r.hardware_id.clone())
                .collect(),
        })
    }
}

/// Joins feature values into the canonical instance label used when the input
/// has no explicit instance column: runs with the same feature tuple are the
/// same workload.
pub fn canonical_instance_id(values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v}");
    }
    out
}

/// Reads run records from a CSV file.
///
/// `feature_columns` name the numeric context columns; `hardware_column` and
/// `runtime_column` name the arm and the observed seconds. When
/// `instance_column` is `None`, rows are grouped by their feature tuple.
pub fn load_csv(
    path: &Path,
    feature_columns: &[String],
    hardware_column: &str,
    runtime_column: &str,
    instance_column: Option<&str>,
) -> Result<Dataset, DatasetError> {
    let display = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|source| {
        if source.is_io_error() {
            match source.into_kind() {
                csv::ErrorKind::Io(e) => DatasetError::Io {
                    path: display.clone(),
                    source: e,
                },
                _ => unreachable!("is_io_error checked"),
            }
        } else {
            DatasetError::Csv {
                path: display.clone(),
                source,
            }
        }
    })?;

    let header = reader
        .headers()
        .map_err(|source| DatasetError::Csv {
            path: display.clone(),
            source,
        })?
        .clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };
    let feature_idx: Vec<usize> = feature_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<_, _>>()?;
    let hardware_idx = find(hardware_column)?;
    let runtime_idx = find(runtime_column)?;
    let instance_idx = instance_column.map(find).transpose()?;

    let names = crate::types::feature_names(feature_columns.to_vec())?;
    let mut records = Vec::new();
    for (row_number, row) in reader.records().enumerate() {
        let row = row.map_err(|source| DatasetError::Csv {
            path: display.clone(),
            source,
        })?;
        // Header is row 1 in the file; data starts at row 2.
        let file_row = row_number + 2;
        let parse_f64 = |idx: usize, column: &str| -> Result<f64, DatasetError> {
            let raw = row.get(idx).unwrap_or("").trim();
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DatasetError::Parse {
                    row: file_row,
                    column: column.to_string(),
                    value: raw.to_string(),
                })
        };

        let mut features = Vec::with_capacity(feature_idx.len());
        for (&idx, column) in feature_idx.iter().zip(feature_columns) {
            features.push(parse_f64(idx, column)?);
        }
        let runtime = parse_f64(runtime_idx, runtime_column)?;
        let hardware_id = row.get(hardware_idx).unwrap_or("").trim().to_string();
        if hardware_id.is_empty() {
            return Err(DatasetError::Parse {
                row: file_row,
                column: hardware_column.to_string(),
                value: String::new(),
            });
        }
        let instance_id = match instance_idx {
            Some(idx) => {
                let raw = row.get(idx).unwrap_or("").trim().to_string();
                if raw.is_empty() {
                    return Err(DatasetError::Parse {
                        row: file_row,
                        column: instance_column.unwrap_or("instance").to_string(),
                        value: String::new(),
                    });
                }
                raw
            }
            None => canonical_instance_id(&features),
        };
        records.push(RunRecord::new(instance_id, features, hardware_id, runtime)?);
    }
    Dataset::new(records, names)
}

/// Writes a dataset with the layout `load_csv` reads back:
/// `instance, <features...>, hardware, runtime_seconds`.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let display = path.display().to_string();
    let to_err = |source: csv::Error| DatasetError::Csv {
        path: display.clone(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(to_err)?;
    let mut header = vec!["instance".to_string()];
    header.extend(dataset.feature_names.iter().cloned());
    header.push("hardware".to_string());
    header.push("runtime_seconds".to_string());
    writer.write_record(&header).map_err(to_err)?;
    for record in &dataset.records {
        let mut row = vec![record.instance_id.clone()];
        row.extend(record.features.iter().map(|v| v.to_string()));
        row.push(record.hardware_id.clone());
        row.push(record.runtime_seconds.to_string());
        writer.write_record(&row).map_err(to_err)?;
    }
    writer.flush().map_err(|source| DatasetError::Io {
        path: display,
        source,
    })
}

/// Reads hardware configurations from a CSV with columns
/// `id, cpus, memory_gb` and an optional `cost_weight`.
pub fn load_hardware_csv(path: &Path) -> Result<Vec<HardwareConfig>, DatasetError> {
    let display = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|source| DatasetError::Csv {
        path: display.clone(),
        source,
    })?;
    let header = reader
        .headers()
        .map_err(|source| DatasetError::Csv {
            path: display.clone(),
            source,
        })?
        .clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };
    let id_idx = find("id")?;
    let cpus_idx = find("cpus")?;
    let memory_idx = find("memory_gb")?;
    let weight_idx = header.iter().position(|h| h == "cost_weight");

    let mut out = Vec::new();
    for (row_number, row) in reader.records().enumerate() {
        let row = row.map_err(|source| DatasetError::Csv {
            path: display.clone(),
            source,
        })?;
        let file_row = row_number + 2;
        let parse = |column: &str, raw: &str| -> Result<f64, DatasetError> {
            raw.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DatasetError::Parse {
                    row: file_row,
                    column: column.to_string(),
                    value: raw.trim().to_string(),
                })
        };

        let id = row.get(id_idx).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(DatasetError::Parse {
                row: file_row,
                column: "id".to_string(),
                value: String::new(),
            });
        }
        let cpus_raw = row.get(cpus_idx).unwrap_or("");
        let cpus = cpus_raw
            .trim()
            .parse::<u32>()
            .map_err(|_| DatasetError::Parse {
                row: file_row,
                column: "cpus".to_string(),
                value: cpus_raw.trim().to_string(),
            })?;
        let memory_gb = parse("memory_gb", row.get(memory_idx).unwrap_or(""))?;
        let mut hw = HardwareConfig::new(id, cpus, memory_gb)?;
        if let Some(idx) = weight_idx {
            let raw = row.get(idx).unwrap_or("").trim();
            if !raw.is_empty() {
                hw = hw.with_cost_weight(parse("cost_weight", raw)?)?;
            }
        }
        out.push(hw);
    }
    if out.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    Ok(out)
}

/// Writes hardware configurations in the layout `load_hardware_csv` reads.
pub fn write_hardware_csv(hardware: &[HardwareConfig], path: &Path) -> Result<(), DatasetError> {
    let display = path.display().to_string();
    let to_err = |source: csv::Error| DatasetError::Csv {
        path: display.clone(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(to_err)?;
    let any_weight = hardware.iter().any(|h| h.cost_weight.is_some());
    let mut header = vec!["id", "cpus", "memory_gb"];
    if any_weight {
        header.push("cost_weight");
    }
    writer.write_record(&header).map_err(to_err)?;
    for hw in hardware {
        let mut row = vec![
            hw.id.clone(),
            hw.cpus.to_string(),
            hw.memory_gb.to_string(),
        ];
        if any_weight {
            row.push(hw.cost_weight.map(|w| w.to_string()).unwrap_or_default());
        }
        writer.write_record(&row).map_err(to_err)?;
    }
    writer.flush().map_err(|source| DatasetError::Io {
        path: display,
        source,
    })
}

/// One workload with its recorded runtime on each hardware configuration.
#[derive(Debug, Clone)]
pub struct ReplayInstance {
    pub instance_id: String,
    pub features: Vec<f64>,
    pub runtimes: BTreeMap<String, f64>,
}

/// Historical data reshaped for offline evaluation: instances on one axis,
/// hardware on the other.
#[derive(Debug, Clone)]
pub struct ReplayEnvironment {
    pub instances: Vec<ReplayInstance>,
    pub hardware_ids: Vec<String>,
    pub feature_names: FeatureNames,
    /// Instances dropped because they lacked a runtime on some hardware
    /// (only populated when built with `complete_only`).
    pub dropped_incomplete: usize,
}

impl ReplayEnvironment {
    /// Groups records by instance id, averaging duplicate
    /// (instance, hardware) observations. Instances keep their first
    /// appearance order and the feature values of their first record. With
    /// `complete_only`, instances missing any hardware are dropped so every
    /// kept instance can answer for every arm.
    pub fn from_dataset(dataset: &Dataset, complete_only: bool) -> Result<Self, DatasetError> {
        let hardware_ids: Vec<String> = dataset.hardware_ids.iter().cloned().collect();

        struct Accumulator {
            features: Vec<f64>,
            sums: BTreeMap<String, (f64, usize)>,
        }
        let mut order: Vec<String> = Vec::new();
        let mut by_instance: HashMap<String, Accumulator> = HashMap::new();
        for record in &dataset.records {
            let entry = by_instance
                .entry(record.instance_id.clone())
                .or_insert_with(|| {
                    order.push(record.instance_id.clone());
                    Accumulator {
                        features: record.features.clone(),
                        sums: BTreeMap::new(),
                    }
                });
            let slot = entry
                .sums
                .entry(record.hardware_id.clone())
                .or_insert((0.0, 0));
            slot.0 += record.runtime_seconds;
            slot.1 += 1;
        }

        let mut instances = Vec::new();
        let mut dropped_incomplete = 0;
        for instance_id in order {
            let acc = by_instance.remove(&instance_id).expect("present by construction");
            let runtimes: BTreeMap<String, f64> = acc
                .sums
                .into_iter()
                .map(|(hardware_id, (sum, count))| (hardware_id, sum / count as f64))
                .collect();
            if complete_only && runtimes.len() < hardware_ids.len() {
                dropped_incomplete += 1;
                continue;
            }
            instances.push(ReplayInstance {
                instance_id,
                features: acc.features,
                runtimes,
            });
        }
        if instances.is_empty() {
            return Err(if complete_only {
                DatasetError::NoCompleteInstances
            } else {
                DatasetError::EmptyDataset
            });
        }
        Ok(Self {
            instances,
            hardware_ids,
            feature_names: dataset.feature_names.clone(),
            dropped_incomplete,
        })
    }

    pub fn n_instances(&self) -> usize {
        self.instances.len()
    }

    /// The recorded runtime of `instance_index` on `hardware_id`.
    pub fn observe(&self, instance_index: usize, hardware_id: &str) -> Result<f64, DatasetError> {
        let instance = self
            .instances
            .get(instance_index)
            .ok_or(DatasetError::InstanceOutOfRange(instance_index))?;
        instance
            .runtimes
            .get(hardware_id)
            .copied()
            .ok_or_else(|| DatasetError::MissingArm {
                instance_id: instance.instance_id.clone(),
                hardware_id: hardware_id.to_string(),
            })
    }

    /// Draws `n_rounds` instance indices uniformly with replacement.
    pub fn sample_rounds<R: rand::Rng + ?Sized>(
        &self,
        n_rounds: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>, DatasetError> {
        if self.instances.is_empty() {
            return Err(DatasetError::EmptyEnvironment);
        }
        Ok((0..n_rounds)
            .map(|_| rng.random_range(0..self.instances.len()))
            .collect())
    }
}
