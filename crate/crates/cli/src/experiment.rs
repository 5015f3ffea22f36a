//! Replicated sweeps over sample sizes with relative-error summaries.

use std::fs::File;
use std::path::{Path, PathBuf};

use lvlingam::synth::{derive_seed, draw_model, sample_data, NoiseFamily};
use lvlingam::{Dag, Error, Result, Roles};
use rayon::prelude::*;
use serde::Serialize;

use crate::estimators::{outcome, run_estimator, treatments, Estimator};

/// True effects smaller than this make the relative error undefined.
pub const MIN_TRUTH: f64 = 1e-12;

/// `|(estimate − truth) / truth|`.
pub fn relative_error(estimate: f64, truth: f64) -> Result<f64> {
    if truth.abs() < MIN_TRUTH {
        return Err(Error::UndefinedMetric(truth));
    }
    Ok(((estimate - truth) / truth).abs())
}

/// Mean relative error over the treatments whose true effect is nonzero.
pub fn mean_relative_error(estimates: &[f64], truths: &[f64]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::InvalidInput("one estimate per true effect required".into()));
    }
    let errs: Vec<f64> = estimates
        .iter()
        .zip(truths)
        .filter(|(_, t)| t.abs() >= MIN_TRUTH)
        .map(|(e, t)| relative_error(*e, *t))
        .collect::<Result<_>>()?;
    if errs.is_empty() {
        return Err(Error::UndefinedMetric(0.0));
    }
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub graph_name: String,
    pub dag: Dag,
    pub roles: Roles,
    pub estimator: Estimator,
    pub noise: NoiseFamily,
    pub sizes: Vec<usize>,
    pub replicates: usize,
    pub base_seed: u64,
    pub latents: Option<usize>,
    /// Use exact population cumulants instead of samples (sizes are ignored; `n = 0`).
    pub population: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidInput("replicates must be at least 1".into()));
        }
        if !self.population {
            if self.sizes.is_empty() {
                return Err(Error::InvalidInput("at least one sample size is required".into()));
            }
            if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidInput("sample sizes must be strictly increasing".into()));
            }
            if self.sizes[0] < 6 {
                return Err(Error::InvalidInput("sample sizes must be at least 6".into()));
            }
        }
        if !self.dag.is_canonical() {
            return Err(Error::NonCanonical(format!("graph {}", self.graph_name)));
        }
        crate::estimators::resolve_latents(self.estimator, &self.roles, self.latents)?;
        Ok(())
    }

    fn effective_sizes(&self) -> Vec<usize> {
        if self.population {
            vec![0]
        } else {
            self.sizes.clone()
        }
    }
}

/// Seed of the model drawn for replicate `rep` (shared by every sample size).
pub fn model_seed(base: u64, rep: usize) -> u64 {
    derive_seed(base, &[0, rep as u64])
}

/// Seed of the data drawn for replicate `rep` at sample size `n`.
pub fn data_seed(base: u64, n: usize, rep: usize) -> u64 {
    derive_seed(base, &[1, n as u64, rep as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub graph: String,
    pub estimator: String,
    pub noise: String,
    pub n: usize,
    pub replicate: usize,
    pub model_seed: u64,
    pub data_seed: u64,
    pub truth: String,
    pub estimate: String,
    pub relative_error: Option<f64>,
    pub failed: bool,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub n: usize,
    pub replicates: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub median: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn run_one(cfg: &ExperimentConfig, n: usize, rep: usize) -> ResultRow {
    let mseed = model_seed(cfg.base_seed, rep);
    let dseed = if cfg.population { 0 } else { data_seed(cfg.base_seed, n, rep) };
    let mut row = ResultRow {
        graph: cfg.graph_name.clone(),
        estimator: cfg.estimator.name().to_string(),
        noise: cfg.noise.to_string(),
        n,
        replicate: rep,
        model_seed: mseed,
        data_seed: dseed,
        truth: String::new(),
        estimate: String::new(),
        relative_error: None,
        failed: true,
        message: String::new(),
    };
    let outcome = outcome(&cfg.roles);
    let attempt = || -> Result<(Vec<f64>, Vec<f64>)> {
        let model = draw_model(&cfg.dag, cfg.noise, mseed)?;
        let truths = treatments(&cfg.roles)
            .iter()
            .map(|&t| model.total_effect(t, outcome))
            .collect::<Result<Vec<_>>>()?;
        let estimates = if cfg.population {
            run_estimator(cfg.estimator, &model.population(6)?, &cfg.dag, &cfg.roles, cfg.latents)
        } else {
            run_estimator(cfg.estimator, &sample_data(&model, n, dseed)?, &cfg.dag, &cfg.roles, cfg.latents)
        };
        Ok((truths, estimates?))
    };
    match attempt() {
        Ok((truths, estimates)) => {
            row.truth = join(&truths);
            row.estimate = join(&estimates);
            match mean_relative_error(&estimates, &truths) {
                Ok(err) if err.is_finite() => {
                    row.relative_error = Some(err);
                    row.failed = false;
                }
                Ok(err) => row.message = format!("non-finite relative error {err}"),
                Err(e) => row.message = e.to_string(),
            }
        }
        Err(e) => row.message = e.to_string(),
    }
    row
}

/// Quantile with linear interpolation between order statistics (`q ∈ [0, 1]`).
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Median, quartiles and failure rate per sample size.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.n).collect();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|n| {
            let at_n: Vec<&ResultRow> = rows.iter().filter(|r| r.n == n).collect();
            let mut errs: Vec<f64> = at_n.iter().filter_map(|r| r.relative_error).collect();
            errs.sort_by(f64::total_cmp);
            let failures = at_n.iter().filter(|r| r.failed).count();
            SummaryRow {
                n,
                replicates: at_n.len(),
                failures,
                failure_rate: failures as f64 / at_n.len() as f64,
                median: quantile(&errs, 0.5),
                q25: quantile(&errs, 0.25),
                q75: quantile(&errs, 0.75),
            }
        })
        .collect()
}

/// Runs every `(n, replicate)` job in parallel; rows come back in `(n, replicate)` order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = cfg
        .effective_sizes()
        .into_iter()
        .flat_map(|n| (0..cfg.replicates).map(move |rep| (n, rep)))
        .collect();
    let rows: Vec<ResultRow> = jobs.par_iter().map(|&(n, rep)| run_one(cfg, n, rep)).collect();
    let summary = summarize(&rows);
    Ok(ExperimentResult { rows, summary })
}

/// `<dir>/<stem>_summary.csv` next to the results file.
pub fn summary_path(results: &Path) -> PathBuf {
    let stem = results
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "results".into());
    results.with_file_name(format!("{stem}_summary.csv"))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-replicate rows to `path` and the summary next to it; returns the summary path.
pub fn write_results(result: &ExperimentResult, path: &Path) -> Result<PathBuf> {
    write_csv(path, &result.rows)?;
    let summary = summary_path(path);
    write_csv(&summary, &result.summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_examples() {
        assert_eq!(relative_error(0.7, 0.7).unwrap(), 0.0);
        assert_eq!(relative_error(0.0, 0.5).unwrap(), 1.0);
        assert!((relative_error(0.55, 0.5).unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(relative_error(1.0, 0.0), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn mean_error_skips_zero_truths() {
        let e = mean_relative_error(&[1.1, 2.0, 0.3], &[1.0, 1.0, 0.0]).unwrap();
        assert!((e - 0.55).abs() < 1e-15);
        assert!(mean_relative_error(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), Some(2.5));
        assert_eq!(quantile(&v, 0.25), Some(1.75));
        assert_eq!(quantile(&v, 0.75), Some(3.25));
        assert_eq!(quantile(&[], 0.5), None);
    }

    #[test]
    fn seeds_are_independent_per_size() {
        assert_ne!(data_seed(1, 1000, 0), data_seed(1, 10000, 0));
        assert_eq!(model_seed(1, 3), model_seed(1, 3));
    }

    #[test]
    fn summary_path_sits_next_to_results() {
        assert_eq!(
            summary_path(Path::new("/tmp/out/run.csv")),
            PathBuf::from("/tmp/out/run_summary.csv")
        );
    }
}
