//! One-factor-at-a-time hyperparameter sweeps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::train::{train, TrainHooks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    LatentDim,
    NPrototypes,
    BatchSize,
}

impl SweepAxis {
    pub fn key(self) -> &'static str {
        match self {
            SweepAxis::LatentDim => "latent_dim",
            SweepAxis::NPrototypes => "n_prototypes",
            SweepAxis::BatchSize => "batch_size",
        }
    }

    pub fn apply(self, cfg: &mut TrainConfig, value: usize) {
        match self {
            SweepAxis::LatentDim => cfg.latent_dim = value,
            SweepAxis::NPrototypes => cfg.n_prototypes = value,
            SweepAxis::BatchSize => cfg.batch_size = value,
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "latent_dim" => Ok(SweepAxis::LatentDim),
            "n_prototypes" => Ok(SweepAxis::NPrototypes),
            "batch_size" => Ok(SweepAxis::BatchSize),
            _ => Err(Error::InvalidArgument(format!(
                "unknown sweep axis `{s}` (expected latent_dim, n_prototypes or batch_size)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: usize,
    pub report: Option<EvalReport>,
    pub final_loss: Option<f64>,
    /// Set when this run failed; the sweep carries on.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub base_config: TrainConfig,
    pub rows: Vec<SweepRow>,
}

/// Trains and evaluates one model per value, changing only `axis`. Every run
/// starts from `base.seed`.
pub fn sweep(
    base: &TrainConfig,
    axis: SweepAxis,
    values: &[usize],
    dataset: &Dataset,
    mut on_row: impl FnMut(&SweepRow),
) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one value".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut cfg = base.clone();
        axis.apply(&mut cfg, value);
        let outcome = cfg.validate().and_then(|_| {
            let model = train(&cfg, &dataset.train.images, TrainHooks::default())?;
            let bank = model.bank.as_ref().expect("conditional model has a bank");
            let report = evaluate(&model.vae, bank, dataset, &cfg)?;
            Ok((report, model.history.epochs.last().map(|r| r.loss_total)))
        });
        let row = match outcome {
            Ok((report, final_loss)) => SweepRow {
                value,
                report: Some(report),
                final_loss,
                error: None,
            },
            Err(e) => {
                log::warn!("sweep {axis}={value} failed: {e}");
                SweepRow {
                    value,
                    report: None,
                    final_loss: None,
                    error: Some(format!("{}: {e}", e.kind())),
                }
            }
        };
        on_row(&row);
        rows.push(row);
    }
    Ok(SweepReport {
        axis,
        base_config: base.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ImageTensor, LabelVector, Split};

    fn toy_dataset() -> Dataset {
        let (n, s) = (24, 16);
        let mut data = vec![0.0f32; n * s * s];
        let mut labels = Vec::new();
        for i in 0..n {
            let cls = i % 2;
            labels.push(cls);
            for p in 0..s * s {
                let on = if cls == 0 { p < s * s / 2 } else { p % s < s / 2 };
                data[i * s * s + p] = if on { 0.8 } else { 0.1 } + (i as f32) * 0.001;
            }
        }
        let images = ImageTensor::new(data, n, 1, s, s).unwrap();
        let split = Split {
            images,
            labels: LabelVector::new(labels, 2).unwrap(),
        };
        Dataset {
            name: "toy".into(),
            train: split.clone(),
            test: split,
        }
    }

    fn base() -> TrainConfig {
        TrainConfig {
            latent_dim: 4,
            n_prototypes: 3,
            batch_size: 12,
            epochs: 1,
            knn_k: 3,
            bank_size: 24,
            probe_epochs: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn one_row_per_value_with_three_accuracies() {
        let ds = toy_dataset();
        let mut seen = 0;
        let rep = sweep(&base(), SweepAxis::LatentDim, &[2, 4, 6, 8], &ds, |_| seen += 1).unwrap();
        assert_eq!(rep.rows.len(), 4);
        assert_eq!(seen, 4);
        for (row, v) in rep.rows.iter().zip([2, 4, 6, 8]) {
            assert_eq!(row.value, v);
            let r = row.report.as_ref().unwrap();
            for acc in [r.statistical_acc, r.knn_acc, r.linear_acc] {
                assert!((0.0..=1.0).contains(&acc));
            }
        }
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let ds = toy_dataset();
        // batch 2 < K = 3 is invalid; the other value still runs.
        let rep = sweep(&base(), SweepAxis::BatchSize, &[2, 12], &ds, |_| {}).unwrap();
        assert!(rep.rows[0].error.as_deref().unwrap().starts_with("ConfigError"));
        assert!(rep.rows[1].report.is_some());
    }

    #[test]
    fn empty_values_rejected() {
        assert!(matches!(
            sweep(&base(), SweepAxis::NPrototypes, &[], &toy_dataset(), |_| {}),
            Err(Error::InvalidArgument(_))
        ));
        assert_eq!("n-prototypes".parse::<SweepAxis>().unwrap(), SweepAxis::NPrototypes);
    }
}
