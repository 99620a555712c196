//! Deterministic trainer for linear and one-hidden-layer models with
//! sigmoid one-vs-rest outputs, driven by any [`LossSpec`]'s analytic
//! logit gradients and an Adam optimizer with decoupled weight decay.
//!
//! A run is a pure function of (dataset, config): parameter initialization
//! and mini-batch order both come from one `ChaCha8Rng` seeded with
//! `config.seed`, and every reduction runs in a fixed order.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{kfold, LabeledDataset};
use crate::error::{Error, Result};
use crate::losses::{batch_loss, one_hot, LossSpec, Reduction};
use crate::metrics::{confusion, report, MetricsReport};
use crate::numeric::{clamped_sigmoid, Logit};

pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    #[default]
    Linear,
    /// One ReLU hidden layer.
    Mlp1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossSpec,
    pub architecture: Architecture,
    /// Width of the hidden layer; only read for [`Architecture::Mlp1`].
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub init_scale: f64,
}

impl TrainConfig {
    /// Optimizer defaults: lr 1e-4, batch 128, momentum 0.9, weight decay 1e-3.
    pub fn new(loss: LossSpec) -> Self {
        Self {
            loss,
            architecture: Architecture::Linear,
            hidden_units: 32,
            learning_rate: 1e-4,
            batch_size: 128,
            epochs: 100,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            weight_decay: 1e-3,
            seed: 0,
            init_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.epochs < 1 {
            return fail("epochs must be >= 1".into());
        }
        if self.batch_size < 1 {
            return fail("batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return fail("Adam betas must lie in [0, 1)".into());
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            ));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return fail(format!("init_scale must be > 0, got {}", self.init_scale));
        }
        if self.architecture == Architecture::Mlp1 && self.hidden_units < 1 {
            return fail("hidden_units must be >= 1 for mlp1".into());
        }
        self.loss.validate()
    }
}

/// Affine layer `y = W x + b` with `W` of shape `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros_like(other: &Layer) -> Layer {
        Layer {
            weight: Array2::zeros(other.weight.raw_dim()),
            bias: Array1::zeros(other.bias.raw_dim()),
        }
    }

    fn is_finite(&self) -> bool {
        self.weight
            .iter()
            .chain(self.bias.iter())
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    architecture: Architecture,
    layers: Vec<Layer>,
}

/// Gradients in the same layout as [`ModelParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<Layer>,
}

impl ModelParams {
    /// Weights uniform in `[-init_scale, init_scale] / sqrt(fan_in)`, biases zero.
    pub fn init<R: Rng>(
        architecture: Architecture,
        input_dim: usize,
        num_classes: usize,
        hidden_units: usize,
        init_scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut layer = |inputs: usize, outputs: usize| {
            let bound = init_scale / (inputs as f64).sqrt();
            Layer {
                weight: Array2::from_shape_fn((outputs, inputs), |_| {
                    rng.random_range(-bound..=bound)
                }),
                bias: Array1::zeros(outputs),
            }
        };
        let layers = match architecture {
            Architecture::Linear => vec![layer(input_dim, num_classes)],
            Architecture::Mlp1 => vec![
                layer(input_dim, hidden_units),
                layer(hidden_units, num_classes),
            ],
        };
        Self {
            architecture,
            layers,
        }
    }

    /// Builds a model from explicit layers, checking that shapes chain.
    pub fn from_layers(architecture: Architecture, layers: Vec<Layer>) -> Result<Self> {
        let expected = match architecture {
            Architecture::Linear => 1,
            Architecture::Mlp1 => 2,
        };
        if layers.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{architecture:?} needs {expected} layers, got {}",
                layers.len()
            )));
        }
        for layer in &layers {
            if layer.bias.len() != layer.weight.nrows() {
                return Err(Error::ShapeMismatch(
                    "bias length must equal weight rows".into(),
                ));
            }
        }
        if expected == 2 && layers[1].weight.ncols() != layers[0].weight.nrows() {
            return Err(Error::ShapeMismatch(
                "hidden layer widths do not chain".into(),
            ));
        }
        Ok(Self {
            architecture,
            layers,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Layer::is_finite)
    }

    fn check_input(&self, features: &ArrayView2<'_, f64>) -> Result<()> {
        if features.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "model expects {} features, got {}",
                self.input_dim(),
                features.ncols()
            )));
        }
        Ok(())
    }

    /// Logits of shape `samples × classes`.
    pub fn forward(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&features)?;
        Ok(self.forward_cached(features).0)
    }

    /// Logits plus the hidden activations (empty for linear models).
    fn forward_cached(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, Option<Array2<f64>>) {
        let affine =
            |input: ArrayView2<'_, f64>, layer: &Layer| input.dot(&layer.weight.t()) + &layer.bias;
        match self.architecture {
            Architecture::Linear => (affine(x, &self.layers[0]), None),
            Architecture::Mlp1 => {
                let hidden = affine(x, &self.layers[0]).mapv(|v| v.max(0.0));
                let logits = affine(hidden.view(), &self.layers[1]);
                (logits, Some(hidden))
            }
        }
    }

    /// Reverse-mode gradients of the loss given `∂L/∂z` for every logit.
    pub fn backward(
        &self,
        features: ArrayView2<'_, f64>,
        logit_grads: ArrayView2<'_, f64>,
    ) -> Result<ParamGrads> {
        self.check_input(&features)?;
        let expected = (features.nrows(), self.num_classes());
        if logit_grads.dim() != expected {
            return Err(Error::ShapeMismatch(format!(
                "logit gradients {:?}, expected {expected:?}",
                logit_grads.dim()
            )));
        }
        let layer_grad = |input: ArrayView2<'_, f64>, upstream: ArrayView2<'_, f64>| Layer {
            weight: upstream.t().dot(&input),
            bias: upstream.sum_axis(Axis(0)),
        };
        match self.architecture {
            Architecture::Linear => Ok(ParamGrads {
                layers: vec![layer_grad(features, logit_grads)],
            }),
            Architecture::Mlp1 => {
                let (_, hidden) = self.forward_cached(features);
                let hidden = hidden.expect("mlp1 caches hidden activations");
                let out = layer_grad(hidden.view(), logit_grads);
                let mut d_hidden = logit_grads.dot(&self.layers[1].weight);
                d_hidden.zip_mut_with(&hidden, |g, &h| {
                    if h <= 0.0 {
                        *g = 0.0
                    }
                });
                let first = layer_grad(features, d_hidden.view());
                Ok(ParamGrads {
                    layers: vec![first, out],
                })
            }
        }
    }

    /// Predicted class per row: argmax of the per-class sigmoid
    /// probabilities, taken on the logits since sigmoid is strictly
    /// increasing. Ties go to the lower class index.
    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let logits = self.forward(features)?;
        Ok(logits
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (k, &v)| {
                        if v > best.1 {
                            (k, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect())
    }
}

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first: Vec<Layer>,
    second: Vec<Layer>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Layer> = params.layers.iter().map(Layer::zeros_like).collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One Adam update with decoupled weight decay (`θ ← θ - lr·wd·θ` before the
/// moment step).
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ParamGrads,
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<()> {
    if grads.layers.len() != params.layers.len() {
        return Err(Error::ShapeMismatch("gradient layer count".into()));
    }
    for (g, p) in grads.layers.iter().zip(&params.layers) {
        if g.weight.dim() != p.weight.dim() || g.bias.dim() != p.bias.dim() {
            return Err(Error::ShapeMismatch("gradient layer shapes".into()));
        }
    }
    if !grads.layers.iter().all(Layer::is_finite) {
        return Err(Error::Diverged {
            epoch: 0,
            step: state.step as usize + 1,
            reason: "non-finite gradient".into(),
        });
    }
    state.step += 1;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let lr = config.learning_rate;
    let decay = 1.0 - lr * config.weight_decay;
    let correction1 = 1.0 - b1.powi(state.step as i32);
    let correction2 = 1.0 - b2.powi(state.step as i32);

    let update = |theta: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *theta *= decay;
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *theta -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
    };
    for (((p, g), m), v) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.first)
        .zip(&mut state.second)
    {
        ndarray::Zip::from(&mut p.weight)
            .and(&g.weight)
            .and(&mut m.weight)
            .and(&mut v.weight)
            .for_each(|t, &gr, mm, vv| update(t, gr, mm, vv));
        ndarray::Zip::from(&mut p.bias)
            .and(&g.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .for_each(|t, &gr, mm, vv| update(t, gr, mm, vv));
    }
    Ok(())
}

/// Which dataset the per-epoch balanced accuracy was measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSet {
    Validation,
    Training,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Per-sample mean of the training loss over the epoch.
    pub mean_loss: f64,
    pub balanced_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub evaluated_on: EvalSet,
    pub model: ModelParams,
}

/// Sigmoid probabilities (clamped) for a logit matrix.
pub fn probabilities(logits: &Array2<f64>) -> Result<Array2<f64>> {
    logits
        .iter()
        .map(|&z| Ok(clamped_sigmoid(Logit::new(z)?).value()))
        .collect::<Result<Vec<f64>>>()
        .map(|v| Array2::from_shape_vec(logits.raw_dim(), v).expect("same shape"))
}

/// Loss and parameter gradients of `model` on one batch.
pub fn batch_gradients(
    model: &ModelParams,
    features: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, u8>,
    loss: &LossSpec,
    counts: Option<&crate::losses::ClassCounts>,
) -> Result<(f64, ParamGrads)> {
    let logits = model.forward(features)?;
    let probs = probabilities(&logits)?;
    let out = batch_loss(probs.view(), targets, loss, counts)?;
    let grads = model.backward(features, out.grads.view())?;
    Ok((out.total, grads))
}

pub fn evaluate(model: &ModelParams, ds: &LabeledDataset) -> Result<MetricsReport> {
    let predicted = model.predict(ds.features().view())?;
    report(&confusion(ds.labels(), &predicted, ds.num_classes())?)
}

/// Trains on `ds`, tracking balanced accuracy on the training set.
pub fn train(ds: &LabeledDataset, config: &TrainConfig) -> Result<TrainHistory> {
    train_with_validation(ds, None, config)
}

/// Trains on `train_set`; per-epoch balanced accuracy is measured on
/// `validation` when given.
pub fn train_with_validation(
    train_set: &LabeledDataset,
    validation: Option<&LabeledDataset>,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidDataset("empty training set".into()));
    }
    let counts = train_set.checked_class_counts().map_err(|_| {
        Error::InvalidDataset(format!(
            "every class needs training samples, counts are {:?}",
            train_set.class_counts()
        ))
    })?;
    if let Some(val) = validation {
        if val.dims() != train_set.dims() || val.num_classes() != train_set.num_classes() {
            return Err(Error::ShapeMismatch(
                "validation set does not match training set".into(),
            ));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ModelParams::init(
        config.architecture,
        train_set.dims(),
        train_set.num_classes(),
        config.hidden_units,
        config.init_scale,
        &mut rng,
    );
    let mut adam = AdamState::new(&model);
    let targets = one_hot(train_set.labels(), train_set.num_classes())?;
    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut records = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let x = train_set.features().select(Axis(0), batch);
            let y = targets.select(Axis(0), batch);
            let (total, grads) =
                batch_gradients(&model, x.view(), y.view(), &config.loss, Some(&counts))?;
            if !total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step: step + 1,
                    reason: format!("non-finite loss {total}"),
                });
            }
            adam_step(&mut model, &grads, &mut adam, config).map_err(|e| match e {
                Error::Diverged { reason, .. } => Error::Diverged {
                    epoch,
                    step: step + 1,
                    reason,
                },
                other => other,
            })?;
            loss_sum += match config.loss.reduction {
                Reduction::MeanOverSamples => total * batch.len() as f64,
                Reduction::SumOverSamples => total,
            };
        }
        let eval_set = validation.unwrap_or(train_set);
        records.push(EpochRecord {
            epoch,
            mean_loss: loss_sum / n as f64,
            balanced_accuracy: evaluate(&model, eval_set)?.balanced_accuracy,
        });
    }
    Ok(TrainHistory {
        epochs: records,
        evaluated_on: if validation.is_some() {
            EvalSet::Validation
        } else {
            EvalSet::Training
        },
        model,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub history: TrainHistory,
    pub validation: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub folds: Vec<FoldOutcome>,
    pub mean_balanced_accuracy: f64,
    pub mean_overall_accuracy: f64,
}

/// Runs [`train_with_validation`] over stratified k-fold splits of `ds`.
pub fn cross_validate(
    ds: &LabeledDataset,
    k: usize,
    fold_seed: u64,
    config: &TrainConfig,
) -> Result<CrossValidation> {
    let mut folds = Vec::with_capacity(k);
    for (train_set, val_set) in kfold(ds, k, fold_seed)? {
        let history = train_with_validation(&train_set, Some(&val_set), config)?;
        let validation = evaluate(&history.model, &val_set)?;
        folds.push(FoldOutcome {
            history,
            validation,
        });
    }
    let mean = |f: fn(&MetricsReport) -> f64| {
        folds.iter().map(|o| f(&o.validation)).sum::<f64>() / folds.len() as f64
    };
    Ok(CrossValidation {
        mean_balanced_accuracy: mean(|r| r.balanced_accuracy),
        mean_overall_accuracy: mean(|r| r.overall_accuracy),
        folds,
    })
}

fn param_slot(m: &mut ModelParams, layer: usize, slot: usize) -> &mut f64 {
    let layer = &mut m.layers[layer];
    let cols = layer.weight.ncols();
    if slot < layer.weight.len() {
        &mut layer.weight[(slot / cols, slot % cols)]
    } else {
        let offset = layer.weight.len();
        &mut layer.bias[slot - offset]
    }
}

/// Worst relative error between backprop gradients of the batch loss and
/// central differences (step `h`) over every model parameter.
pub fn max_parameter_gradient_error(
    model: &ModelParams,
    features: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, u8>,
    loss: &LossSpec,
    counts: Option<&crate::losses::ClassCounts>,
    h: f64,
) -> Result<f64> {
    let (_, analytic) = batch_gradients(model, features, targets, loss, counts)?;
    let loss_at = |m: &ModelParams| -> Result<f64> {
        let probs = probabilities(&m.forward(features)?)?;
        Ok(batch_loss(probs.view(), targets, loss, counts)?.total)
    };
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (li, grad) in analytic.layers.iter().enumerate() {
        let slots = grad.weight.len() + grad.bias.len();
        for slot in 0..slots {
            let original = *param_slot(&mut probe, li, slot);
            *param_slot(&mut probe, li, slot) = original + h;
            let plus = loss_at(&probe)?;
            *param_slot(&mut probe, li, slot) = original - h;
            let minus = loss_at(&probe)?;
            *param_slot(&mut probe, li, slot) = original;
            let numeric = (plus - minus) / (2.0 * h);
            let exact = if slot < grad.weight.len() {
                grad.weight.as_slice().expect("standard layout")[slot]
            } else {
                grad.bias[slot - grad.weight.len()]
            };
            worst = worst.max(crate::gradcheck::relative_error(exact, numeric));
        }
    }
    Ok(worst)
}

/// Serialized model: architecture tag, shapes, row-major weights and the
/// config that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub input_dim: usize,
    pub num_classes: usize,
    pub layers: Vec<CheckpointLayer>,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointLayer {
    pub rows: usize,
    pub cols: usize,
    /// `rows × cols`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

pub const CHECKPOINT_FORMAT: &str = "alpa-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn new(model: &ModelParams, config: &TrainConfig) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            architecture: model.architecture,
            input_dim: model.input_dim(),
            num_classes: model.num_classes(),
            layers: model
                .layers
                .iter()
                .map(|l| CheckpointLayer {
                    rows: l.weight.nrows(),
                    cols: l.weight.ncols(),
                    weight: l.weight.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
            config: config.clone(),
        }
    }

    pub fn to_model(&self) -> Result<ModelParams> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let layers = self
            .layers
            .iter()
            .map(|l| {
                Ok(Layer {
                    weight: Array2::from_shape_vec((l.rows, l.cols), l.weight.clone())
                        .map_err(|e| Error::ShapeMismatch(e.to_string()))?,
                    bias: Array1::from(l.bias.clone()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let model = ModelParams::from_layers(self.architecture, layers)?;
        if model.input_dim() != self.input_dim || model.num_classes() != self.num_classes {
            return Err(Error::ShapeMismatch(
                "checkpoint header disagrees with layers".into(),
            ));
        }
        Ok(model)
    }
}
