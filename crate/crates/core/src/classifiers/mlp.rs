//! Fully connected feed-forward network with a softmax output layer,
//! trained by mini-batch gradient descent on L2-regularised cross-entropy.
//!
//! The penalty follows the usual `alpha` convention of scikit-style MLPs:
//! for a batch of `n` rows the loss is
//! `mean CE + l2 / (2 n) * sum(W^2)` over all weight matrices (biases are
//! not penalised).

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::hyper::{Hyperparameters, Reader};
use super::{ClassifierError, ModelKind};
use crate::rng::Xoshiro256StarStar;

pub const MAX_HIDDEN_LAYERS: usize = 3;
/// Epochs without validation-loss improvement before training stops.
pub const PATIENCE: usize = 10;
const IMPROVEMENT_TOL: f64 = 1e-4;
const VALIDATION_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Logistic,
    Identity,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Logistic => z.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp())),
            Activation::Identity => {}
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => (a > 0.0) as u8 as f64,
            Activation::Tanh => 1.0 - a * a,
            Activation::Logistic => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    /// Plain mini-batch SGD with a constant learning rate.
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub solver: Solver,
}

impl MlpParams {
    pub fn from_hyper(h: &Hyperparameters) -> Result<Self, ClassifierError> {
        let r = Reader::new(ModelKind::Mlp, h)?;
        let hidden_layers = r.int_list("hidden_layers", &[100])?;
        r.check("hidden_layers", hidden_layers.len() <= MAX_HIDDEN_LAYERS, "at most 3 hidden layers")?;
        let activation = match r.text("activation", "relu")?.as_str() {
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            "logistic" | "sigmoid" => Activation::Logistic,
            "identity" => Activation::Identity,
            _ => return Err(r.invalid("activation", "expected relu, tanh, logistic or identity")),
        };
        let learning_rate = r.float("learning_rate", 0.001)?;
        r.check("learning_rate", learning_rate > 0.0 && learning_rate.is_finite(), "must be positive")?;
        let l2 = r.float("l2", 0.0001)?;
        r.check("l2", l2 >= 0.0, "must be non-negative")?;
        let batch_size = r.usize("batch_size", 200)?;
        r.check("batch_size", batch_size >= 1, "must be at least 1")?;
        let max_epochs = r.usize("max_epochs", 200)?;
        let solver = match r.text("solver", "sgd")?.as_str() {
            "sgd" => Solver::Sgd,
            "adam" => Solver::Adam,
            _ => return Err(r.invalid("solver", "expected sgd or adam")),
        };
        Ok(Self { hidden_layers, activation, learning_rate, l2, batch_size, max_epochs, solver })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `fan_in x fan_out`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradients with the same layout as [`Mlp::layers`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    /// Weights (row-major) then bias, layer by layer; matches
    /// [`Mlp::param_mut`] indexing.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weights.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}

impl Mlp {
    /// Glorot-uniform initialisation.
    pub fn init(sizes: &[usize], activation: Activation, seed: u64) -> Self {
        let mut rng = Xoshiro256StarStar::derived(seed, &[0x1417]);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let factor = if activation == Activation::Logistic { 2.0 } else { 6.0 };
                let limit = (factor / (fan_in + fan_out) as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_fn((fan_in, fan_out), |_| (2.0 * rng.next_f64() - 1.0) * limit),
                    bias: Array1::from_shape_fn(fan_out, |_| (2.0 * rng.next_f64() - 1.0) * limit),
                }
            })
            .collect();
        Self { layers, activation }
    }

    /// Network of the given shape with every parameter zero.
    pub fn zeros(sizes: &[usize], activation: Activation) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| Dense { weights: Array2::zeros((w[0], w[1])), bias: Array1::zeros(w[1]) })
            .collect();
        Self { layers, activation }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().unwrap().weights.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for l in &mut self.layers {
            let nw = l.weights.len();
            if idx < nw {
                let c = l.weights.ncols();
                return &mut l.weights[[idx / c, idx % c]];
            }
            idx -= nw;
            if idx < l.bias.len() {
                return &mut l.bias[idx];
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Activations of every layer; the last entry holds softmax
    /// probabilities.
    fn forward_all(&self, x: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = cur.dot(&l.weights) + &l.bias;
            if i + 1 == self.layers.len() {
                softmax_rows(&mut z);
            } else {
                self.activation.apply(&mut z);
            }
            acts.push(z.clone());
            cur = z;
        }
        acts
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.forward_all(x).pop().unwrap()
    }

    fn penalty(&self, l2: f64, n: usize) -> f64 {
        let sq: f64 = self.layers.iter().map(|l| l.weights.iter().map(|w| w * w).sum::<f64>()).sum();
        0.5 * l2 * sq / n as f64
    }

    /// Mean cross-entropy of `x` against class positions `y`, plus penalty.
    pub fn loss(&self, x: ArrayView2<'_, f64>, y: &[usize], l2: f64) -> f64 {
        let p = self.predict_proba(x);
        cross_entropy(&p, y) + self.penalty(l2, y.len())
    }

    pub fn loss_and_gradients(&self, x: ArrayView2<'_, f64>, y: &[usize], l2: f64) -> (f64, Gradients) {
        let n = y.len();
        let acts = self.forward_all(x);
        let probs = acts.last().unwrap();
        let loss = cross_entropy(probs, y) + self.penalty(l2, n);

        let mut delta = probs.clone();
        for (i, &c) in y.iter().enumerate() {
            delta[[i, c]] -= 1.0;
        }
        delta /= n as f64;

        let mut grads = Vec::with_capacity(self.layers.len());
        for li in (0..self.layers.len()).rev() {
            let input = if li == 0 { x.to_owned() } else { acts[li - 1].clone() };
            let layer = &self.layers[li];
            let gw = input.t().dot(&delta) + &(&layer.weights * (l2 / n as f64));
            let gb = delta.sum_axis(Axis(0));
            if li > 0 {
                let mut back = delta.dot(&layer.weights.t());
                let a = &acts[li - 1];
                back.zip_mut_with(a, |d, &av| *d *= self.activation.derivative_from_output(av));
                delta = back;
            }
            grads.push(Dense { weights: gw, bias: gb });
        }
        grads.reverse();
        (loss, Gradients { layers: grads })
    }
}

fn cross_entropy(p: &Array2<f64>, y: &[usize]) -> f64 {
    let eps = 1e-300;
    -y.iter().enumerate().map(|(i, &c)| p[[i, c]].max(eps).ln()).sum::<f64>() / y.len() as f64
}

struct AdamState {
    m: Vec<Dense>,
    v: Vec<Dense>,
    t: i32,
}

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn step(model: &mut Mlp, grads: &Gradients, lr: f64, adam: Option<&mut AdamState>) {
    match adam {
        None => {
            for (l, g) in model.layers.iter_mut().zip(&grads.layers) {
                l.weights.scaled_add(-lr, &g.weights);
                l.bias.scaled_add(-lr, &g.bias);
            }
        }
        Some(st) => {
            st.t += 1;
            let c1 = 1.0 - ADAM_B1.powi(st.t);
            let c2 = 1.0 - ADAM_B2.powi(st.t);
            let rate = lr * c2.sqrt() / c1;
            for ((l, g), (m, v)) in model.layers.iter_mut().zip(&grads.layers).zip(st.m.iter_mut().zip(st.v.iter_mut()))
            {
                m.weights.zip_mut_with(&g.weights, |mm, &gg| *mm = ADAM_B1 * *mm + (1.0 - ADAM_B1) * gg);
                v.weights.zip_mut_with(&g.weights, |vv, &gg| *vv = ADAM_B2 * *vv + (1.0 - ADAM_B2) * gg * gg);
                m.bias.zip_mut_with(&g.bias, |mm, &gg| *mm = ADAM_B1 * *mm + (1.0 - ADAM_B1) * gg);
                v.bias.zip_mut_with(&g.bias, |vv, &gg| *vv = ADAM_B2 * *vv + (1.0 - ADAM_B2) * gg * gg);
                ndarray::Zip::from(&mut l.weights)
                    .and(&m.weights)
                    .and(&v.weights)
                    .for_each(|w, &mm, &vv| *w -= rate * mm / (vv.sqrt() + ADAM_EPS));
                ndarray::Zip::from(&mut l.bias)
                    .and(&m.bias)
                    .and(&v.bias)
                    .for_each(|b, &mm, &vv| *b -= rate * mm / (vv.sqrt() + ADAM_EPS));
            }
        }
    }
}

/// Trains a network on standardized inputs `x` with class positions `y`.
///
/// A stratified tenth of the rows (when every class can spare one) is held
/// out to monitor validation loss; training stops after [`PATIENCE`] epochs
/// without improvement and the best parameters are restored.
pub fn fit(
    params: &MlpParams,
    x: ArrayView2<'_, f64>,
    y: &[usize],
    n_classes: usize,
    seed: u64,
) -> Result<Mlp, ClassifierError> {
    let mut rng = Xoshiro256StarStar::derived(seed, &[0x7EA1]);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in y.iter().enumerate() {
        per_class[c].push(i);
    }
    let mut train_idx = Vec::new();
    let mut valid_idx = Vec::new();
    for rows in &mut per_class {
        rng.shuffle(rows);
        let n_val = (rows.len() as f64 * VALIDATION_FRACTION).floor() as usize;
        valid_idx.extend_from_slice(&rows[..n_val]);
        train_idx.extend_from_slice(&rows[n_val..]);
    }
    train_idx.sort_unstable();
    valid_idx.sort_unstable();

    let mut sizes = vec![x.ncols()];
    sizes.extend_from_slice(&params.hidden_layers);
    sizes.push(n_classes);
    let mut model = Mlp::init(&sizes, params.activation, seed);

    let xv = x.select(Axis(0), &valid_idx);
    let yv: Vec<usize> = valid_idx.iter().map(|&i| y[i]).collect();
    let xt_all = x.select(Axis(0), &train_idx);
    let yt_all: Vec<usize> = train_idx.iter().map(|&i| y[i]).collect();

    let mut adam = (params.solver == Solver::Adam).then(|| AdamState {
        m: Mlp::zeros(&sizes, params.activation).layers,
        v: Mlp::zeros(&sizes, params.activation).layers,
        t: 0,
    });

    let batch = params.batch_size.min(train_idx.len()).max(1);
    let mut order: Vec<usize> = (0..train_idx.len()).collect();
    let mut best = f64::INFINITY;
    let mut best_model = model.clone();
    let mut stale = 0usize;
    for epoch in 0..params.max_epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(batch) {
            let xb = xt_all.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| yt_all[i]).collect();
            let (loss, grads) = model.loss_and_gradients(xb.view(), &yb, params.l2);
            if !loss.is_finite() {
                return Err(ClassifierError::NonFiniteLoss { epoch });
            }
            step(&mut model, &grads, params.learning_rate, adam.as_mut());
        }
        let monitor = if yv.is_empty() {
            model.loss(xt_all.view(), &yt_all, params.l2)
        } else {
            let p = model.predict_proba(xv.view());
            cross_entropy(&p, &yv)
        };
        if !monitor.is_finite() {
            return Err(ClassifierError::NonFiniteLoss { epoch });
        }
        if monitor < best - IMPROVEMENT_TOL {
            best = monitor;
            best_model = model.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= PATIENCE {
                log::debug!("mlp early stop at epoch {epoch}, best loss {best:.5}");
                break;
            }
        }
    }
    if best.is_finite() {
        Ok(best_model)
    } else {
        Ok(model)
    }
}
