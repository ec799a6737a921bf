//! Joint RU training and plain ERM training with validation-based selection.

use super::adam::AdamState;
use super::mlp::{Gradients, Mlp, NnError};
use crate::data::{derive_seed, RegressionDataset, Split};
use crate::loss::{ru_loss_from_base, ru_loss_grad, BaseLoss, GammaBand};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A paired predictor: decision rule `h` plus auxiliary quantile function `α`,
/// trained jointly on the RU risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuModel {
    pub h_net: Mlp,
    pub alpha_net: Mlp,
    pub band: GammaBand,
    /// Pass the raw α output through softplus to force nonnegativity. Off by
    /// default: the hinge term of the loss already drives α to the positive
    /// loss quantile.
    pub softplus_alpha: bool,
}

const RU_CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct RuCheckpoint {
    version: u32,
    model: RuModel,
}

impl RuModel {
    pub fn init(
        input_dim: usize,
        hidden: &[usize],
        band: GammaBand,
        softplus_alpha: bool,
        seed: u64,
    ) -> Result<Self, NnError> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Ok(Self {
            h_net: Mlp::init(&sizes, derive_seed(seed, "init-h"))?,
            alpha_net: Mlp::init(&sizes, derive_seed(seed, "init-alpha"))?,
            band,
            softplus_alpha,
        })
    }

    /// Predictions and auxiliary levels for a batch.
    pub fn forward_pair(&self, x: &ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>), NnError> {
        let h = self.h_net.output_batch(x)?;
        let mut a = self.alpha_net.output_batch(x)?;
        if self.softplus_alpha {
            a.mapv_inplace(softplus);
        }
        Ok((h, a))
    }

    /// `(h(x), α(x))` at a single input.
    pub fn predict_pair(&self, x: &[f64]) -> Result<(f64, f64), NnError> {
        let h = self.h_net.predict(x)?;
        let raw = self.alpha_net.predict(x)?;
        Ok((h, if self.softplus_alpha { softplus(raw) } else { raw }))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&RuCheckpoint { version: RU_CHECKPOINT_VERSION, model: self.clone() })
            .expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        let ck: RuCheckpoint =
            serde_json::from_str(text).map_err(|e| NnError::Decode(e.to_string()))?;
        if ck.version != RU_CHECKPOINT_VERSION {
            return Err(NnError::BadVersion(ck.version));
        }
        Ok(ck.model)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Erm,
    Ru,
}

/// The only optimizer shipped; kept as an enum so the config format stays
/// forward-compatible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    pub softplus_alpha: bool,
}

impl TrainConfig {
    /// ERM defaults: 2×128 hidden units, 100 epochs, batch 1750, Adam 1e-2.
    pub fn erm(seed: u64) -> Self {
        Self {
            mode: TrainMode::Erm,
            epochs: 100,
            batch_size: 1750,
            learning_rate: 1e-2,
            optimizer: Optimizer::Adam,
            seed,
            hidden: vec![128, 128],
            softplus_alpha: false,
        }
    }

    /// RU defaults: 2×64 hidden units per net, otherwise as [`TrainConfig::erm`].
    pub fn ru(seed: u64) -> Self {
        Self { hidden: vec![64, 64], mode: TrainMode::Ru, ..Self::erm(seed) }
    }

    fn validate(&self) -> Result<(), NnError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(NnError::BadConfig { mode: "any", what: "positive epoch and batch counts" });
        }
        if !(self.learning_rate > 0.0) {
            return Err(NnError::BadConfig { mode: "any", what: "a positive learning rate" });
        }
        Ok(())
    }
}

/// Result of a training run: the selected model plus the validation history
/// that selected it.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    /// Validation objective at the end of each epoch.
    pub val_history: Vec<f64>,
    /// Index into `val_history` of the selected snapshot.
    pub best_epoch: usize,
}

#[derive(Debug, Clone)]
pub enum TrainedModel {
    Erm(Mlp),
    Ru(RuModel),
}

impl TrainedModel {
    /// The decision-rule prediction `h(x)`.
    pub fn predict(&self, x: &[f64]) -> Result<f64, NnError> {
        match self {
            TrainedModel::Erm(net) => net.predict(x),
            TrainedModel::Ru(m) => Ok(m.predict_pair(x)?.0),
        }
    }

    pub fn predict_batch(&self, x: &ArrayView2<f64>) -> Result<Array1<f64>, NnError> {
        match self {
            TrainedModel::Erm(net) => net.output_batch(x),
            TrainedModel::Ru(m) => Ok(m.forward_pair(x)?.0),
        }
    }
}

/// Mean RU risk of the model on a batch.
pub fn ru_risk(
    model: &RuModel,
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    loss: &BaseLoss,
) -> Result<f64, NnError> {
    let (h, a) = model.forward_pair(x)?;
    let n = y.len() as f64;
    let total: f64 = h
        .iter()
        .zip(a.iter())
        .zip(y.iter())
        .map(|((&z, &av), &yv)| ru_loss_from_base(loss.value(z, yv), av, &model.band))
        .sum();
    Ok(total / n)
}

/// Mean base-loss risk of a plain network on a batch.
pub fn erm_risk(
    net: &Mlp,
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    loss: &BaseLoss,
) -> Result<f64, NnError> {
    let out = net.output_batch(x)?;
    let n = y.len() as f64;
    Ok(out.iter().zip(y.iter()).map(|(&z, &yv)| loss.value(z, yv)).sum::<f64>() / n)
}

/// Batch-mean RU gradients for both networks, chain rule through the RU loss
/// subgradient.
pub fn backward_ru(
    model: &RuModel,
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    loss: &BaseLoss,
) -> Result<(Gradients, Gradients), NnError> {
    let (h_out, h_cache) = model.h_net.forward_batch(x)?;
    let (a_raw, a_cache) = model.alpha_net.forward_batch(x)?;
    let n = y.len() as f64;
    let mut dh = Array1::zeros(y.len());
    let mut da = Array1::zeros(y.len());
    for i in 0..y.len() {
        let a = if model.softplus_alpha { softplus(a_raw[i]) } else { a_raw[i] };
        let (dz_i, da_i) = ru_loss_grad(h_out[i], a, y[i], &model.band, loss)
            .map_err(|_| NnError::NonFiniteGradient { batch: 0 })?;
        dh[i] = dz_i / n;
        da[i] = if model.softplus_alpha { da_i * sigmoid(a_raw[i]) / n } else { da_i / n };
    }
    let h_grads = model.h_net.backward(&h_cache, &dh.view());
    let a_grads = model.alpha_net.backward(&a_cache, &da.view());
    Ok((h_grads, a_grads))
}

/// Batch-mean base-loss gradients for a single network.
pub fn backward_erm(
    net: &Mlp,
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    loss: &BaseLoss,
) -> Result<Gradients, NnError> {
    let (out, cache) = net.forward_batch(x)?;
    let n = y.len() as f64;
    let dout: Array1<f64> =
        out.iter().zip(y.iter()).map(|(&z, &yv)| loss.d1(z, yv) / n).collect();
    Ok(net.backward(&cache, &dout.view()))
}

/// Mini-batch training with per-epoch validation and best-snapshot selection.
///
/// Batches are drawn from a fresh full permutation each epoch, seeded by the
/// run seed, so a run is fully reproducible. The returned model is the
/// parameter snapshot with the lowest validation objective (RU risk in RU
/// mode, base-loss risk in ERM mode).
pub fn train(
    dataset: &RegressionDataset,
    config: &TrainConfig,
    band: Option<GammaBand>,
    loss: &BaseLoss,
) -> Result<TrainOutcome, NnError> {
    config.validate()?;
    let (x_train, y_train) = dataset.split_rows(Split::Train);
    let (x_val, y_val) = dataset.split_rows(Split::Validation);
    if x_train.nrows() == 0 {
        return Err(NnError::BadConfig { mode: "any", what: "a nonempty train split" });
    }
    if x_val.nrows() == 0 {
        return Err(NnError::BadConfig { mode: "any", what: "a nonempty validation split" });
    }

    match config.mode {
        TrainMode::Ru => {
            let band = band.ok_or(NnError::BadConfig { mode: "ru", what: "a gamma band" })?;
            train_ru(&x_train, &y_train, &x_val, &y_val, config, band, loss)
        }
        TrainMode::Erm => train_erm(&x_train, &y_train, &x_val, &y_val, config, loss),
    }
}

fn epoch_batches(
    n: usize,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> impl Iterator<Item = Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut start = 0;
    std::iter::from_fn(move || {
        if start >= n {
            return None;
        }
        let end = (start + batch_size).min(n);
        let batch = order[start..end].to_vec();
        start = end;
        Some(batch)
    })
}

fn train_ru(
    x_train: &Array2<f64>,
    y_train: &Array1<f64>,
    x_val: &Array2<f64>,
    y_val: &Array1<f64>,
    config: &TrainConfig,
    band: GammaBand,
    loss: &BaseLoss,
) -> Result<TrainOutcome, NnError> {
    let mut model = RuModel::init(
        x_train.ncols(),
        &config.hidden,
        band,
        config.softplus_alpha,
        config.seed,
    )?;
    let mut adam_h = AdamState::new(&model.h_net);
    let mut adam_a = AdamState::new(&model.alpha_net);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "shuffle"));

    let mut best: Option<(f64, RuModel, usize)> = None;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        for (batch_idx, batch) in
            epoch_batches(x_train.nrows(), config.batch_size, &mut shuffle_rng).enumerate()
        {
            let xb = x_train.select(Axis(0), &batch);
            let yb = y_train.select(Axis(0), &batch);
            let (gh, ga) = backward_ru(&model, &xb.view(), &yb.view(), loss)?;
            if !gh.is_finite() || !ga.is_finite() {
                return Err(NnError::NonFiniteGradient { batch: batch_idx });
            }
            adam_h.step(&mut model.h_net, &gh, config.learning_rate);
            adam_a.step(&mut model.alpha_net, &ga, config.learning_rate);
        }
        let val = ru_risk(&model, &x_val.view(), &y_val.view(), loss)?;
        if !val.is_finite() {
            return Err(NnError::Diverged { epoch });
        }
        history.push(val);
        if best.as_ref().map_or(true, |(b, _, _)| val < *b) {
            best = Some((val, model.clone(), epoch));
        }
    }
    let (_, model, best_epoch) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { model: TrainedModel::Ru(model), val_history: history, best_epoch })
}

fn train_erm(
    x_train: &Array2<f64>,
    y_train: &Array1<f64>,
    x_val: &Array2<f64>,
    y_val: &Array1<f64>,
    config: &TrainConfig,
    loss: &BaseLoss,
) -> Result<TrainOutcome, NnError> {
    let mut sizes = Vec::with_capacity(config.hidden.len() + 2);
    sizes.push(x_train.ncols());
    sizes.extend_from_slice(&config.hidden);
    sizes.push(1);
    let mut net = Mlp::init(&sizes, derive_seed(config.seed, "init-h"))?;
    let mut adam = AdamState::new(&net);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "shuffle"));

    let mut best: Option<(f64, Mlp, usize)> = None;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        for (batch_idx, batch) in
            epoch_batches(x_train.nrows(), config.batch_size, &mut shuffle_rng).enumerate()
        {
            let xb = x_train.select(Axis(0), &batch);
            let yb = y_train.select(Axis(0), &batch);
            let grads = backward_erm(&net, &xb.view(), &yb.view(), loss)?;
            if !grads.is_finite() {
                return Err(NnError::NonFiniteGradient { batch: batch_idx });
            }
            adam.step(&mut net, &grads, config.learning_rate);
        }
        let val = erm_risk(&net, &x_val.view(), &y_val.view(), loss)?;
        if !val.is_finite() {
            return Err(NnError::Diverged { epoch });
        }
        history.push(val);
        if best.as_ref().map_or(true, |(b, _, _)| val < *b) {
            best = Some((val, net.clone(), epoch));
        }
    }
    let (_, net, best_epoch) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { model: TrainedModel::Erm(net), val_history: history, best_epoch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_split, Provenance, SyntheticModel};
    use ndarray::Array2;

    fn linear_dataset(n: usize) -> RegressionDataset {
        // Noiseless y = 2x on [0, 1].
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let features = Array2::from_shape_vec((n, 1), xs).unwrap();
        let mut ds = RegressionDataset::new(
            features,
            ys.into(),
            vec![Split::Train; n],
            None,
            Provenance { source: "linear".into(), n, seed: 0 },
        )
        .unwrap();
        ds.assign_splits(n * 8 / 10, n / 10);
        ds
    }

    #[test]
    fn erm_fits_noiseless_linear_data() {
        let ds = linear_dataset(1000);
        let mut cfg = TrainConfig::erm(0);
        cfg.hidden = vec![32, 32];
        cfg.batch_size = 200;
        let out = train(&ds, &cfg, None, &BaseLoss::Squared).unwrap();
        let (x_test, y_test) = ds.split_rows(Split::Test);
        let pred = out.model.predict_batch(&x_test.view()).unwrap();
        let mse: f64 = pred
            .iter()
            .zip(y_test.iter())
            .map(|(p, y)| (p - y).powi(2))
            .sum::<f64>()
            / y_test.len() as f64;
        assert!(mse <= 1e-3, "test mse = {mse}");
    }

    #[test]
    fn ru_training_makes_progress() {
        let model = SyntheticModel::one_dim(0.2).unwrap();
        let ds = generate_split(&model, 7000, 1400, 0, 0).unwrap();
        let mut cfg = TrainConfig::ru(0);
        cfg.epochs = 15;
        let band = GammaBand::new(2.0).unwrap();
        let out = train(&ds, &cfg, Some(band), &BaseLoss::Squared).unwrap();
        assert!(out.val_history[out.best_epoch] < out.val_history[0]);
    }

    #[test]
    fn best_epoch_minimizes_validation_history() {
        let ds = linear_dataset(400);
        let mut cfg = TrainConfig::erm(3);
        cfg.hidden = vec![16];
        cfg.epochs = 25;
        cfg.batch_size = 64;
        let out = train(&ds, &cfg, None, &BaseLoss::Squared).unwrap();
        let best = out.val_history[out.best_epoch];
        for v in &out.val_history {
            assert!(best <= v + 1e-12);
        }
    }

    #[test]
    fn ru_mode_requires_band() {
        let ds = linear_dataset(100);
        let cfg = TrainConfig::ru(0);
        assert!(matches!(
            train(&ds, &cfg, None, &BaseLoss::Squared),
            Err(NnError::BadConfig { mode: "ru", .. })
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let ds = linear_dataset(300);
        let mut cfg = TrainConfig::ru(7);
        cfg.hidden = vec![8, 8];
        cfg.epochs = 5;
        cfg.batch_size = 50;
        let band = GammaBand::new(2.0).unwrap();
        let a = train(&ds, &cfg, Some(band), &BaseLoss::Squared).unwrap();
        let b = train(&ds, &cfg, Some(band), &BaseLoss::Squared).unwrap();
        match (&a.model, &b.model) {
            (TrainedModel::Ru(ma), TrainedModel::Ru(mb)) => {
                assert_eq!(ma, mb);
            }
            _ => panic!("expected RU models"),
        }
        assert_eq!(a.val_history, b.val_history);
    }

    #[test]
    fn ru_checkpoint_round_trip() {
        let band = GammaBand::new(4.0).unwrap();
        let model = RuModel::init(1, &[8, 8], band, false, 11).unwrap();
        let back = RuModel::from_json(&model.to_json()).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn zero_residual_batch_has_vanishing_h_gradients() {
        let band = GammaBand::new(2.0).unwrap();
        let model = RuModel::init(1, &[8, 8], band, false, 3).unwrap();
        // Outcomes equal to the model's own predictions: base loss is zero.
        let x = Array2::from_shape_vec((8, 1), (0..8).map(|i| i as f64 / 8.0).collect()).unwrap();
        let (h, _) = model.forward_pair(&x.view()).unwrap();
        // Force alpha to 0 by passing a = 0: construct batch where L = 0, a = 0.
        let mut zero_alpha = model.clone();
        for w in &mut zero_alpha.alpha_net.weights {
            w.fill(0.0);
        }
        for b in &mut zero_alpha.alpha_net.biases {
            b.fill(0.0);
        }
        let (gh, _) = backward_ru(&zero_alpha, &x.view(), &h.view(), &BaseLoss::Squared).unwrap();
        for w in &gh.weights {
            assert!(w.iter().all(|v| *v == 0.0));
        }
        for b in &gh.biases {
            assert!(b.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn gamma_near_one_matches_erm_gradients() {
        let band = GammaBand::new(1.0 + 1e-12).unwrap();
        let model = RuModel::init(1, &[8, 8], band, false, 5).unwrap();
        let x = Array2::from_shape_vec((16, 1), (0..16).map(|i| i as f64 / 4.0).collect()).unwrap();
        let y: Array1<f64> = x.column(0).iter().map(|v| 2.0 * v + 1.0).collect();
        let (gh, ga) = backward_ru(&model, &x.view(), &y.view(), &BaseLoss::Squared).unwrap();
        let ge = backward_erm(&model.h_net, &x.view(), &y.view(), &BaseLoss::Squared).unwrap();
        for (a, b) in gh.weights.iter().zip(&ge.weights) {
            for (u, v) in a.iter().zip(b.iter()) {
                assert!((u - v).abs() <= 1e-6 * v.abs().max(1.0));
            }
        }
        // The alpha objective flattens as gamma approaches 1.
        for g in &ga.weights {
            for v in g.iter() {
                assert!(v.abs() <= 1e-6);
            }
        }
    }
}
