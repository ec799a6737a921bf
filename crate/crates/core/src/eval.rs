//! Risk metrics, distribution-shift sweeps, and trial aggregation.
//!
//! A sweep trains each method once per seed on the training distribution,
//! then scores it on fresh test sets drawn at every band frequency `p` in the
//! evaluation grid. The oracle baseline is retrained at each test `p`, which
//! upper-bounds what any method could achieve there. Cells are independent
//! jobs executed in parallel; the report is assembled in deterministic cell
//! order.

use crate::data::{derive_seed, generate, generate_split, DataError, RegressionDataset, Split, SyntheticModel};
use crate::loss::{BaseLoss, GammaBand, LossError};
use crate::nn::{train, NnError, TrainConfig, TrainedModel};
use crate::sieve::SieveError;
use ndarray::{Array1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{split:?} split is empty")]
    EmptySplit { split: Split },
    #[error("weighted MSE requires nonnegative outcomes, found {0}")]
    NegativeOutcome(f64),
    #[error("weighted MSE requires a positive outcome total")]
    ZeroOutcomeTotal,
    #[error("empty method list or grid")]
    EmptySweep,
    #[error("seed {seed}, method {method}: {source}")]
    Cell { seed: u64, method: String, source: Box<EvalError> },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Sieve(#[from] SieveError),
}

/// Anything that produces a decision-rule prediction per row.
pub trait Predictor {
    fn predict_batch(&self, x: &ArrayView2<f64>) -> Result<Array1<f64>, EvalError>;
}

impl Predictor for crate::nn::Mlp {
    fn predict_batch(&self, x: &ArrayView2<f64>) -> Result<Array1<f64>, EvalError> {
        Ok(self.output_batch(x)?)
    }
}

impl Predictor for crate::nn::RuModel {
    fn predict_batch(&self, x: &ArrayView2<f64>) -> Result<Array1<f64>, EvalError> {
        Ok(self.forward_pair(x)?.0)
    }
}

impl Predictor for TrainedModel {
    fn predict_batch(&self, x: &ArrayView2<f64>) -> Result<Array1<f64>, EvalError> {
        Ok(TrainedModel::predict_batch(self, x)?)
    }
}

impl Predictor for crate::sieve::SieveModel {
    fn predict_batch(&self, x: &ArrayView2<f64>) -> Result<Array1<f64>, EvalError> {
        let mut out = Array1::zeros(x.nrows());
        for i in 0..x.nrows() {
            let row = x.row(i);
            out[i] = self.predict(row.as_slice().expect("contiguous row"))?.0;
        }
        Ok(out)
    }
}

/// Mean squared error of the decision rule on the test split.
pub fn test_mse<P: Predictor>(model: &P, dataset: &RegressionDataset) -> Result<f64, EvalError> {
    let (x, y) = dataset.split_rows(Split::Test);
    if x.nrows() == 0 {
        return Err(EvalError::EmptySplit { split: Split::Test });
    }
    let pred = model.predict_batch(&x.view())?;
    let n = y.len() as f64;
    Ok(pred.iter().zip(y.iter()).map(|(p, y)| (y - p).powi(2)).sum::<f64>() / n)
}

/// Outcome-weighted test MSE, `Σ wᵢ (yᵢ − ĥ(xᵢ))²` with `wᵢ = yᵢ / Σⱼ yⱼ`,
/// simulating a size-biased test distribution.
pub fn weighted_test_mse<P: Predictor>(
    model: &P,
    dataset: &RegressionDataset,
) -> Result<f64, EvalError> {
    let (x, y) = dataset.split_rows(Split::Test);
    if x.nrows() == 0 {
        return Err(EvalError::EmptySplit { split: Split::Test });
    }
    if let Some(neg) = y.iter().find(|v| **v < 0.0) {
        return Err(EvalError::NegativeOutcome(*neg));
    }
    let total: f64 = y.sum();
    if total <= 0.0 {
        return Err(EvalError::ZeroOutcomeTotal);
    }
    let pred = model.predict_batch(&x.view())?;
    Ok(pred
        .iter()
        .zip(y.iter())
        .map(|(p, yv)| yv / total * (yv - p).powi(2))
        .sum())
}

/// Bootstrap standard error of the weighted test MSE.
pub fn bootstrap_weighted_mse_se<P: Predictor>(
    model: &P,
    dataset: &RegressionDataset,
    n_boot: usize,
    seed: u64,
) -> Result<f64, EvalError> {
    let (x, y) = dataset.split_rows(Split::Test);
    if x.nrows() == 0 {
        return Err(EvalError::EmptySplit { split: Split::Test });
    }
    let pred = model.predict_batch(&x.view())?;
    let errs: Vec<f64> = pred.iter().zip(y.iter()).map(|(p, yv)| (yv - p).powi(2)).collect();
    let n = y.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        let mut total_w = 0.0;
        let mut acc = 0.0;
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            total_w += y[i];
            acc += y[i] * errs[i];
        }
        if total_w > 0.0 {
            stats.push(acc / total_w);
        }
    }
    let (mean, std) = mean_std(&stats);
    let _ = mean;
    Ok(std)
}

/// Which estimator a sweep cell trains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MethodSpec {
    StandardErm,
    OracleErm,
    Ru { gamma: f64 },
}

impl MethodSpec {
    pub fn label(&self) -> &'static str {
        match self {
            MethodSpec::StandardErm => "standard_erm",
            MethodSpec::OracleErm => "oracle_erm",
            MethodSpec::Ru { .. } => "ru",
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match self {
            MethodSpec::Ru { gamma } => Some(*gamma),
            _ => None,
        }
    }

    fn display(&self) -> String {
        match self {
            MethodSpec::StandardErm => "Standard ERM".to_string(),
            MethodSpec::OracleErm => "Oracle ERM".to_string(),
            MethodSpec::Ru { gamma } => format!("RU (gamma={gamma})"),
        }
    }
}

/// Everything a sweep needs besides the method list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Training-distribution model; its `p` is the training band frequency.
    pub model: SyntheticModel,
    pub p_grid: Vec<f64>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seeds: Vec<u64>,
    pub erm: TrainConfig,
    pub ru: TrainConfig,
}

impl SweepConfig {
    fn train_config(&self, spec: &MethodSpec, seed: u64) -> TrainConfig {
        let mut cfg = match spec {
            MethodSpec::Ru { .. } => self.ru.clone(),
            _ => self.erm.clone(),
        };
        cfg.seed = derive_seed(seed, spec.label());
        cfg
    }
}

/// One aggregated report row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub gamma: Option<f64>,
    pub p: f64,
    pub mean_mse: f64,
    pub std_mse: f64,
    pub n_seeds: usize,
}

/// Aggregated sweep results plus reproduction metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub seeds: Vec<u64>,
    pub config_hash: Option<String>,
}

impl EvalReport {
    /// CSV with header `method,gamma,p,mean_mse,std_mse,n_seeds`. When a
    /// config hash is attached it is recorded as a leading comment line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(hash) = &self.config_hash {
            out.push_str(&format!("# config_hash={hash}\n"));
        }
        out.push_str("method,gamma,p,mean_mse,std_mse,n_seeds\n");
        for r in &self.rows {
            let gamma = r.gamma.map(|g| g.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.method, gamma, r.p, r.mean_mse, r.std_mse, r.n_seeds
            ));
        }
        out
    }

    /// Aligned text table: methods as rows, shift levels as columns.
    pub fn aligned_table(&self) -> String {
        let mut ps: Vec<f64> = self.rows.iter().map(|r| r.p).collect();
        ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ps.dedup();
        let mut methods: Vec<(String, Option<f64>)> = Vec::new();
        for r in &self.rows {
            let key = (r.method.clone(), r.gamma);
            if !methods.contains(&key) {
                methods.push(key);
            }
        }
        let label = |m: &str, g: Option<f64>| match (m, g) {
            ("standard_erm", _) => "Standard ERM".to_string(),
            ("oracle_erm", _) => "Oracle ERM".to_string(),
            (m, Some(g)) => format!("{m} (gamma={g})"),
            (m, None) => m.to_string(),
        };
        let width = 22;
        let name_width = methods
            .iter()
            .map(|(m, g)| label(m, *g).len())
            .max()
            .unwrap_or(10)
            .max(10);
        let mut out = String::new();
        out.push_str(&format!("{:<name_width$}", "Method"));
        for p in &ps {
            out.push_str(&format!("{:>width$}", format!("p={p}")));
        }
        out.push('\n');
        for (m, g) in &methods {
            out.push_str(&format!("{:<name_width$}", label(m, *g)));
            for p in &ps {
                let cell = self
                    .rows
                    .iter()
                    .find(|r| r.method == *m && r.gamma == *g && r.p == *p)
                    .map(|r| format!("{:.3} ± {:.3}", r.mean_mse, r.std_mse))
                    .unwrap_or_else(|| "-".to_string());
                out.push_str(&format!("{cell:>width$}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Per-seed, per-method test MSE across the shift grid.
type CellResult = Vec<f64>;

fn run_cell(
    spec: &MethodSpec,
    cfg: &SweepConfig,
    seed: u64,
    loss: &BaseLoss,
) -> Result<CellResult, EvalError> {
    // Test sets are shared across methods within a seed: same derivation.
    let test_sets: Result<Vec<RegressionDataset>, EvalError> = cfg
        .p_grid
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let mut ds = generate(&cfg.model.with_p(p)?, cfg.n_test, derive_seed(seed, &format!("test-{k}")))?;
            ds.assign_splits(0, 0);
            Ok(ds)
        })
        .collect();
    let test_sets = test_sets?;

    match spec {
        MethodSpec::OracleErm => {
            // Retrained at every test distribution.
            let mut out = Vec::with_capacity(cfg.p_grid.len());
            for (k, &p) in cfg.p_grid.iter().enumerate() {
                let train_ds = generate_split(
                    &cfg.model.with_p(p)?,
                    cfg.n_train,
                    cfg.n_val,
                    0,
                    derive_seed(seed, &format!("oracle-train-{k}")),
                )?;
                let mut tc = cfg.train_config(spec, seed);
                tc.seed = derive_seed(tc.seed, &format!("p{k}"));
                let trained = train(&train_ds, &tc, None, loss)?;
                out.push(test_mse(&trained.model, &test_sets[k])?);
            }
            Ok(out)
        }
        MethodSpec::StandardErm | MethodSpec::Ru { .. } => {
            let train_ds = generate_split(
                &cfg.model,
                cfg.n_train,
                cfg.n_val,
                0,
                derive_seed(seed, "train-data"),
            )?;
            let tc = cfg.train_config(spec, seed);
            let band = match spec {
                MethodSpec::Ru { gamma } => Some(GammaBand::new(*gamma)?),
                _ => None,
            };
            let trained = train(&train_ds, &tc, band, loss)?;
            test_sets.iter().map(|ds| test_mse(&trained.model, ds)).collect()
        }
    }
}

/// Train every method on every seed and aggregate test MSE across seeds for
/// each point of the shift grid.
pub fn shift_sweep(
    methods: &[MethodSpec],
    cfg: &SweepConfig,
    loss: &BaseLoss,
) -> Result<EvalReport, EvalError> {
    if methods.is_empty() || cfg.p_grid.is_empty() || cfg.seeds.is_empty() {
        return Err(EvalError::EmptySweep);
    }
    let cells: Vec<(usize, u64)> = methods
        .iter()
        .enumerate()
        .flat_map(|(mi, _)| cfg.seeds.iter().map(move |s| (mi, *s)))
        .collect();

    let results: Result<Vec<CellResult>, EvalError> = cells
        .par_iter()
        .map(|(mi, seed)| {
            run_cell(&methods[*mi], cfg, *seed, loss).map_err(|e| EvalError::Cell {
                seed: *seed,
                method: methods[*mi].display(),
                source: Box::new(e),
            })
        })
        .collect();
    let results = results?;

    let mut rows = Vec::new();
    for (mi, spec) in methods.iter().enumerate() {
        for (k, &p) in cfg.p_grid.iter().enumerate() {
            let per_seed: Vec<f64> = cfg
                .seeds
                .iter()
                .enumerate()
                .map(|(si, _)| results[mi * cfg.seeds.len() + si][k])
                .collect();
            let (mean, std) = mean_std(&per_seed);
            rows.push(ReportRow {
                method: spec.label().to_string(),
                gamma: spec.gamma(),
                p,
                mean_mse: mean,
                std_mse: std,
                n_seeds: per_seed.len(),
            });
        }
    }
    Ok(EvalReport { rows, seeds: cfg.seeds.clone(), config_hash: None })
}
