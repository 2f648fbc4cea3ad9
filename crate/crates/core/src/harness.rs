//! Seeded experiments: many independent trials of the full pipeline,
//! accuracy with Wilson intervals, and accuracy sweeps over the batch size.
//!
//! Trial `i` runs on seed `derive_seed(cfg.seed, i)`, from which the
//! instance, the oracle, the set families and the tensor projections take
//! their own streams. Results are ordered by trial index, so output files
//! depend only on the configuration.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ground_truth::supports_equal_up_to_permutation;
use crate::model::{generate_instance, support_matrix, GeneratorSpec, SupportMode};
use crate::occ_engine::{build_occ_table, Batch, OccError, OccParams, RowPolicy};
use crate::oracle::{Model, OracleHandle, Sampling};
use crate::recovery::{RecoveryError, Strategy};
use crate::rng::derive_seed;
use crate::set_families::FamilyConstants;
use crate::tensor::{JennrichOptions, TensorError};

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceMode {
    Union,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: Model,
    pub n: usize,
    pub ell: usize,
    pub k: usize,
    pub eta: f64,
    pub sigma: f64,
    pub delta: f64,
    pub mode: InstanceMode,
    /// Force distinct supports in random mode.
    pub distinct: bool,
    /// Nonnegative hidden vectors.
    pub positive: bool,
    pub strategy: Strategy,
    pub batch: Batch,
    pub trials: usize,
    pub seed: u64,
    pub constants: FamilyConstants,
    pub sampling: Sampling,
    pub row_policy: RowPolicy,
    pub timings: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: Model::Mlc,
            n: 100,
            ell: 3,
            k: 5,
            eta: 0.0,
            sigma: 0.0,
            delta: 0.1,
            mode: InstanceMode::Union,
            distinct: false,
            positive: false,
            strategy: Strategy::PIdentifiable(2),
            batch: Batch::Auto,
            trials: 100,
            seed: 0,
            constants: FamilyConstants::default(),
            sampling: Sampling::Aggregated,
            row_policy: RowPolicy::Selected,
            timings: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError(m.to_string()));
        if self.n == 0 || self.ell == 0 {
            return bad("n and ell must be positive");
        }
        if self.k > self.n {
            return bad("k must not exceed n");
        }
        if !(0.0..0.5).contains(&self.eta) {
            return bad("eta must lie in [0, 0.5)");
        }
        if !(self.sigma >= 0.0) {
            return bad("sigma must be nonnegative");
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return bad("delta must lie in (0, 1]");
        }
        if self.model == Model::Mlr && self.sigma == 0.0 {
            return bad("mlr needs sigma > 0");
        }
        if self.mode == InstanceMode::Union && (self.ell != 3 || self.k < 2 || 2 * self.k - 2 > self.n) {
            return bad("union instances need ell = 3, k >= 2 and 2k - 2 <= n");
        }
        if self.trials == 0 {
            return bad("trials must be positive");
        }
        if let Batch::Fixed(0) = self.batch {
            return bad("batch size must be positive");
        }
        match self.strategy {
            Strategy::PIdentifiable(0) => bad("p must be positive"),
            Strategy::Kruskal(r) if r < 2 => bad("r must be at least 2"),
            _ => Ok(()),
        }
    }

    fn generator(&self, seed: u64) -> GeneratorSpec {
        let mode = match self.mode {
            InstanceMode::Union => SupportMode::UnionDesign,
            InstanceMode::Random => SupportMode::RandomDisjointish,
        };
        let mut g = GeneratorSpec::new(self.n, self.ell, self.k, mode, seed).with_noise(self.delta, self.eta, self.sigma);
        g.distinct = self.distinct;
        g.positive = self.positive;
        g
    }

    fn occ_params(&self, seed: u64) -> OccParams {
        OccParams {
            singleton_batch: self.batch,
            union_batch: self.batch,
            constants: self.constants,
            seed,
            row_policy: self.row_policy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub queries_used: u64,
    /// Closed-form query count of the occ-table stages.
    pub queries_expected: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub successes: usize,
    pub accuracy: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub mean_queries: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub summary: Summary,
    pub records: Vec<TrialRecord>,
}

/// Wilson score interval at 95% for `successes` out of `trials`.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Short machine-readable name of a failure.
pub fn failure_kind(e: &RecoveryError) -> &'static str {
    match e {
        RecoveryError::Stuck { .. } => "stuck",
        RecoveryError::NegativeCount => "negative_count",
        RecoveryError::AllFlipsFailed => "all_flips_failed",
        RecoveryError::UniverseTooLarge(_) => "universe_too_large",
        RecoveryError::Overweight { .. } => "overweight",
        RecoveryError::Params(_) => "params",
        RecoveryError::Tensor(t) => match t {
            TensorError::RankDeficient => "rank_deficient",
            TensorError::ReconstructionMismatch => "reconstruction_mismatch",
            TensorError::RankExceedsBound { .. } => "rank_exceeds_bound",
            TensorError::NoDecomposition => "no_decomposition",
            TensorError::EnumerationBudgetExceeded(_) => "enumeration_budget_exceeded",
            _ => "tensor",
        },
        RecoveryError::Table(t) => match t {
            OccError::Inconsistent { .. } => "inconsistent_table",
            OccError::TooManyIndices(_) => "too_many_indices",
            _ => "table",
        },
    }
}

/// Worker count: `MIXREC_THREADS` when set to a positive integer, else the
/// number of available cores.
pub fn thread_count() -> usize {
    std::env::var("MIXREC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn par_map<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .expect("thread pool");
    pool.install(|| (0..count).into_par_iter().map(f).collect())
}

struct Outcome {
    result: Result<bool, String>,
    queries_used: u64,
    queries_expected: u64,
}

fn outcome_record(trial: usize, seed: u64, o: Outcome, wall_ms: Option<f64>) -> TrialRecord {
    let (success, failure) = match o.result {
        Ok(true) => (true, None),
        Ok(false) => (false, Some("wrong_supports".to_string())),
        Err(kind) => (false, Some(kind)),
    };
    TrialRecord {
        trial,
        seed,
        success,
        failure,
        queries_used: o.queries_used,
        queries_expected: o.queries_expected,
        wall_ms,
    }
}

/// Runs the configured strategy on trials `0..cfg.trials`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment, ConfigError> {
    cfg.validate()?;
    let records = par_map(cfg.trials, |i| run_trial(cfg, i));
    Ok(Experiment {
        summary: summarize(&records),
        records,
    })
}

/// One trial of [`run_experiment`].
pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> TrialRecord {
    let seed = derive_seed(cfg.seed, trial as u64);
    let start = Instant::now();
    let o = trial_outcomes(cfg, seed, seed, &[cfg.strategy]).pop().expect("one strategy");
    let wall = cfg.timings.then(|| start.elapsed().as_secs_f64() * 1e3);
    outcome_record(trial, seed, o, wall)
}

/// Builds one table large enough for every strategy and runs each on it.
fn trial_outcomes(cfg: &ExperimentConfig, instance_seed: u64, query_seed: u64, strategies: &[Strategy]) -> Vec<Outcome> {
    let fail_all = |kind: String| {
        strategies
            .iter()
            .map(|_| Outcome {
                result: Err(kind.clone()),
                queries_used: 0,
                queries_expected: 0,
            })
            .collect()
    };
    let inst = match generate_instance(&cfg.generator(derive_seed(instance_seed, 0))) {
        Ok(i) => i,
        Err(e) => return fail_all(format!("instance: {e}")),
    };
    let truth = support_matrix(&inst);
    let mut h = match OracleHandle::new(inst, cfg.model, derive_seed(query_seed, 1)) {
        Ok(h) => h.with_sampling(cfg.sampling),
        Err(e) => return fail_all(format!("oracle: {e}")),
    };
    let s = strategies.iter().map(|st| st.table_size(cfg.ell)).max().unwrap_or(1);
    let build = match build_occ_table(&mut h, s, &cfg.occ_params(derive_seed(query_seed, 2))) {
        Ok(b) => b,
        Err(e) => return fail_all(failure_kind(&RecoveryError::Table(e)).to_string()),
    };
    let queries_used = h.ledger();
    let queries_expected = build.closed_form_queries();
    let jopts = JennrichOptions {
        seed: derive_seed(query_seed, 3),
        ..Default::default()
    };
    strategies
        .iter()
        .map(|st| Outcome {
            result: st
                .run(&build.table, &jopts)
                .map(|r| supports_equal_up_to_permutation(&r.supports, &truth.columns))
                .map_err(|e| failure_kind(&e).to_string()),
            queries_used,
            queries_expected,
        })
        .collect()
}

pub fn summarize(records: &[TrialRecord]) -> Summary {
    let trials = records.len();
    let successes = records.iter().filter(|r| r.success).count();
    let (wilson_low, wilson_high) = wilson_interval(successes, trials);
    Summary {
        trials,
        successes,
        accuracy: if trials == 0 { 0.0 } else { successes as f64 / trials as f64 },
        wilson_low,
        wilson_high,
        mean_queries: if trials == 0 {
            0.0
        } else {
            records.iter().map(|r| r.queries_used as f64).sum::<f64>() / trials as f64
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "T")]
    pub t: u64,
    pub acc_alg1: f64,
    pub acc_jennrich: f64,
}

/// For every batch size, accuracy of the p-identifiable algorithm (p from
/// the configured strategy, 2 otherwise) and of the Jennrich path, both run
/// on the same table per trial. Trial instances do not depend on `T`.
pub fn sweep(cfg: &ExperimentConfig, ts: &[u64]) -> Result<Vec<SweepRow>, ConfigError> {
    cfg.validate()?;
    if ts.contains(&0) {
        return Err(ConfigError("batch sizes must be positive".into()));
    }
    let p = match cfg.strategy {
        Strategy::PIdentifiable(p) => p,
        _ => 2,
    };
    let strategies = [Strategy::PIdentifiable(p), Strategy::Kruskal(cfg.ell.max(2))];
    let mut rows = Vec::with_capacity(ts.len());
    for &t in ts {
        let mut c = cfg.clone();
        c.batch = Batch::Fixed(t);
        let outcomes = par_map(cfg.trials, |i| {
            let inst_seed = derive_seed(cfg.seed, i as u64);
            let query_seed = derive_seed(inst_seed, 1000 + t);
            trial_outcomes(&c, inst_seed, query_seed, &strategies)
        });
        let acc = |k: usize| {
            outcomes.iter().filter(|o| o[k].result == Ok(true)).count() as f64 / cfg.trials as f64
        };
        rows.push(SweepRow {
            t,
            acc_alg1: acc(0),
            acc_jennrich: acc(1),
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "seed", "success", "failure", "queries_used", "queries_expected", "wall_ms"])?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.seed.to_string(),
            r.success.to_string(),
            r.failure.clone().unwrap_or_default(),
            r.queries_used.to_string(),
            r.queries_expected.to_string(),
            r.wall_ms.map(|v| format!("{v:.3}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_jsonl<W: Write>(records: &[TrialRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference_values() {
        let (lo, hi) = wilson_interval(84, 100);
        assert!((lo - 0.755797306).abs() < 1e-8 && (hi - 0.899047115).abs() < 1e-8, "{lo} {hi}");
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
        let (lo, hi) = wilson_interval(0, 10);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.35);
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = ExperimentConfig {
            eta: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            mode: InstanceMode::Union,
            ell: 2,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            model: Model::Mlr,
            sigma: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn records_are_reproducible() {
        let cfg = ExperimentConfig {
            n: 40,
            trials: 4,
            batch: Batch::Fixed(30),
            seed: 11,
            ..Default::default()
        };
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        for r in &a.records {
            assert_eq!(r.queries_used, r.queries_expected);
        }
    }
}
