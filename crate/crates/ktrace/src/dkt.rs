//! Desk-scale recurrent sequence baseline.
//!
//! A single-layer LSTM reads a student's trial stream one (label, outcome)
//! one-hot at a time and emits, at every step, a probability of a correct
//! response for each exercise label on the next trial. Training is plain
//! mini-batch gradient descent with global-norm clipping; gradients come from
//! backpropagation through time and are checked against central finite
//! differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, StudentSequence};
use crate::error::{Error, Result};
use crate::eval::PredictionRecord;
use crate::math::sigmoid;

/// Training and architecture settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DktConfig {
    /// Number of exercise labels Q; the input layer is 2Q wide.
    pub n_labels: usize,
    pub hidden_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Global gradient-norm clip threshold.
    pub grad_clip: f64,
    pub seed: u64,
}

impl DktConfig {
    pub fn new(n_labels: usize) -> Self {
        DktConfig {
            n_labels,
            hidden_size: 50,
            learning_rate: 0.5,
            epochs: 30,
            batch_size: 32,
            grad_clip: 5.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_labels == 0 || self.hidden_size == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "label count, hidden size and batch size must be positive".into(),
            ));
        }
        if self.learning_rate.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            || self.grad_clip.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
        {
            return Err(Error::InvalidArgument(
                "learning rate and clip threshold must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    /// dst[r] += M[r, col] * s
    #[inline]
    fn add_column_scaled(&self, col: usize, s: f64, dst: &mut [f64]) {
        for r in 0..self.rows {
            dst[r] += self.at(r, col) * s;
        }
    }

    /// dst[c] += M[row, c] * s
    #[inline]
    fn add_row_scaled(&self, row: usize, s: f64, dst: &mut [f64]) {
        let r = &self.data[row * self.cols..(row + 1) * self.cols];
        for (d, w) in dst.iter_mut().zip(r) {
            *d += w * s;
        }
    }

    /// dst[r] += sum_c M[r, c] * v[c]
    fn add_matvec(&self, v: &[f64], dst: &mut [f64]) {
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, x) in row.iter().zip(v) {
                acc += w * x;
            }
            dst[r] += acc;
        }
    }
}

const GATES: usize = 4; // input, forget, candidate, output

/// LSTM weights plus the logistic output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DktModel {
    pub config: DktConfig,
    /// Input-to-hidden weights per gate, each hidden x 2Q.
    pub wx: Vec<Mat>,
    /// Hidden-to-hidden weights per gate, each hidden x hidden.
    pub wh: Vec<Mat>,
    /// Gate biases, each of length hidden.
    pub b: Vec<Vec<f64>>,
    /// Output layer: Q x hidden and Q.
    pub wy: Mat,
    pub by: Vec<f64>,
}

impl DktModel {
    /// Initializes weights uniformly in +-1/sqrt(fan-in); the forget-gate
    /// bias starts at 1 so early training does not wipe the cell state.
    pub fn init(config: &DktConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = config.hidden_size;
        let q = config.n_labels;
        let mut mat = |rows: usize, cols: usize| -> Mat {
            let bound = 1.0 / (cols as f64).sqrt();
            let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
            Mat { rows, cols, data }
        };
        let wx: Vec<Mat> = (0..GATES).map(|_| mat(h, 2 * q)).collect();
        let wh: Vec<Mat> = (0..GATES).map(|_| mat(h, h)).collect();
        let mut b = vec![vec![0.0; h]; GATES];
        b[1] = vec![1.0; h];
        let wy = mat(q, h);
        let by = vec![0.0; q];
        Ok(DktModel { config: *config, wx, wh, b, wy, by })
    }

    pub fn n_weights(&self) -> usize {
        self.wx.iter().map(|m| m.data.len()).sum::<usize>()
            + self.wh.iter().map(|m| m.data.len()).sum::<usize>()
            + self.b.iter().map(|v| v.len()).sum::<usize>()
            + self.wy.data.len()
            + self.by.len()
    }
}

/// Index of the one-hot input for a (label, correctness) pair: position
/// `label + Q * correct` of a 2Q vector.
pub fn encode_input_index(label: usize, correct: bool, n_labels: usize) -> Result<usize> {
    if label >= n_labels {
        return Err(Error::VocabMismatch(format!(
            "label index {label} out of range for {n_labels} labels"
        )));
    }
    Ok(label + if correct { n_labels } else { 0 })
}

/// Dense one-hot encoding of a trial, length 2Q.
pub fn encode_input(label: usize, correct: bool, n_labels: usize) -> Result<Vec<f64>> {
    let idx = encode_input_index(label, correct, n_labels)?;
    let mut v = vec![0.0; 2 * n_labels];
    v[idx] = 1.0;
    Ok(v)
}

/// Per-step activations cached by the forward pass for backpropagation.
struct StepCache {
    input_index: usize,
    gates: [Vec<f64>; GATES],
    cell: Vec<f64>,
    cell_tanh: Vec<f64>,
    hidden: Vec<f64>,
    output: Vec<f64>,
}

/// Runs the recurrence over a sequence of one-hot input indexes, returning
/// per-step output probabilities (step t predicts trial t+1).
pub fn forward(model: &DktModel, input_indexes: &[usize]) -> Result<Vec<Vec<f64>>> {
    if input_indexes.is_empty() {
        return Err(Error::InvalidArgument("empty input sequence".into()));
    }
    let caches = forward_cached(model, input_indexes)?;
    Ok(caches.into_iter().map(|c| c.output).collect())
}

fn forward_cached(model: &DktModel, input_indexes: &[usize]) -> Result<Vec<StepCache>> {
    let h = model.config.hidden_size;
    let q = model.config.n_labels;
    let mut hidden = vec![0.0; h];
    let mut cell = vec![0.0; h];
    let mut caches = Vec::with_capacity(input_indexes.len());
    for &idx in input_indexes {
        if idx >= 2 * q {
            return Err(Error::VocabMismatch(format!(
                "input index {idx} out of range for 2Q = {}",
                2 * q
            )));
        }
        let mut pre: [Vec<f64>; GATES] = std::array::from_fn(|g| model.b[g].clone());
        for g in 0..GATES {
            model.wx[g].add_column_scaled(idx, 1.0, &mut pre[g]);
            model.wh[g].add_matvec(&hidden, &mut pre[g]);
        }
        let gates: [Vec<f64>; GATES] = std::array::from_fn(|g| {
            pre[g].iter().map(|&z| if g == 2 { z.tanh() } else { sigmoid(z) }).collect()
        });
        let mut new_cell = vec![0.0; h];
        for j in 0..h {
            new_cell[j] = gates[1][j] * cell[j] + gates[0][j] * gates[2][j];
        }
        let cell_tanh: Vec<f64> = new_cell.iter().map(|c| c.tanh()).collect();
        let mut new_hidden = vec![0.0; h];
        for j in 0..h {
            new_hidden[j] = gates[3][j] * cell_tanh[j];
        }
        let mut out_pre = model.by.clone();
        model.wy.add_matvec(&new_hidden, &mut out_pre);
        let output: Vec<f64> = out_pre.iter().map(|&z| sigmoid(z)).collect();
        if output.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("non-finite activation in forward pass".into()));
        }
        caches.push(StepCache {
            input_index: idx,
            gates,
            cell: new_cell.clone(),
            cell_tanh,
            hidden: new_hidden.clone(),
            output,
        });
        hidden = new_hidden;
        cell = new_cell;
    }
    Ok(caches)
}

/// A training sequence: input index stream plus, per step, the next trial's
/// (label, outcome) target when one exists.
#[derive(Debug, Clone)]
pub struct EncodedSequence {
    pub inputs: Vec<usize>,
    /// targets[t] = (label of trial t+1, its correctness); None for the last step.
    pub targets: Vec<Option<(usize, bool)>>,
}

/// Encodes a student's trials for training and prediction.
pub fn encode_sequence(seq: &StudentSequence, n_labels: usize) -> Result<EncodedSequence> {
    let mut inputs = Vec::with_capacity(seq.trials.len());
    let mut targets = Vec::with_capacity(seq.trials.len());
    for (j, tr) in seq.trials.iter().enumerate() {
        inputs.push(encode_input_index(tr.label, tr.correct, n_labels)?);
        targets.push(seq.trials.get(j + 1).map(|next| (next.label, next.correct)));
    }
    Ok(EncodedSequence { inputs, targets })
}

const LOSS_FLOOR: f64 = 1e-7;

/// Mean binary cross-entropy of the predictions for the labels actually
/// tested next. Only the tested label's output contributes per step.
pub fn loss(predictions: &[Vec<f64>], targets: &[Option<(usize, bool)>]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for (pred, target) in predictions.iter().zip(targets) {
        if let Some((label, correct)) = target {
            let p = pred[*label].clamp(LOSS_FLOOR, 1.0 - LOSS_FLOOR);
            total -= if *correct { p.ln() } else { (1.0 - p).ln() };
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

fn loss_sum(predictions: &[Vec<f64>], targets: &[Option<(usize, bool)>]) -> f64 {
    let mut total = 0.0;
    for (pred, target) in predictions.iter().zip(targets) {
        if let Some((label, correct)) = target {
            let p = pred[*label].clamp(LOSS_FLOOR, 1.0 - LOSS_FLOOR);
            total -= if *correct { p.ln() } else { (1.0 - p).ln() };
        }
    }
    total
}

/// Gradient accumulator with the same shapes as the model.
struct Grads {
    wx: Vec<Mat>,
    wh: Vec<Mat>,
    b: Vec<Vec<f64>>,
    wy: Mat,
    by: Vec<f64>,
}

impl Grads {
    fn zeros(model: &DktModel) -> Self {
        let h = model.config.hidden_size;
        let q = model.config.n_labels;
        Grads {
            wx: (0..GATES).map(|_| Mat::zeros(h, 2 * q)).collect(),
            wh: (0..GATES).map(|_| Mat::zeros(h, h)).collect(),
            b: vec![vec![0.0; h]; GATES],
            wy: Mat::zeros(q, h),
            by: vec![0.0; q],
        }
    }

    fn norm(&self) -> f64 {
        let mut acc = 0.0;
        for m in self.wx.iter().chain(&self.wh).chain(std::iter::once(&self.wy)) {
            acc += m.data.iter().map(|v| v * v).sum::<f64>();
        }
        for v in self.b.iter().chain(std::iter::once(&self.by)) {
            acc += v.iter().map(|x| x * x).sum::<f64>();
        }
        acc.sqrt()
    }

    fn scale(&mut self, s: f64) {
        for m in
            self.wx.iter_mut().chain(self.wh.iter_mut()).chain(std::iter::once(&mut self.wy))
        {
            for v in &mut m.data {
                *v *= s;
            }
        }
        for v in self.b.iter_mut().chain(std::iter::once(&mut self.by)) {
            for x in v {
                *x *= s;
            }
        }
    }
}

/// Backpropagation through time for one sequence. Per-step loss gradients are
/// scaled by `inv_steps` (1 / tested steps in the batch) so the accumulated
/// batch gradient matches the mean loss.
fn backprop_sequence(
    model: &DktModel,
    seq: &EncodedSequence,
    inv_steps: f64,
    grads: &mut Grads,
) -> Result<()> {
    let caches = forward_cached(model, &seq.inputs)?;
    let h = model.config.hidden_size;
    let n = caches.len();
    let mut d_hidden = vec![0.0; h];
    let mut d_cell = vec![0.0; h];
    for t in (0..n).rev() {
        let cache = &caches[t];
        if let Some((label, correct)) = seq.targets[t] {
            let p = cache.output[label].clamp(LOSS_FLOOR, 1.0 - LOSS_FLOOR);
            // d(BCE)/d(pre-activation) for a sigmoid output is p - x.
            let dz = (p - if correct { 1.0 } else { 0.0 }) * inv_steps;
            model.wy.add_row_scaled(label, dz, &mut d_hidden);
            for j in 0..h {
                *grads.wy.at_mut(label, j) += dz * cache.hidden[j];
            }
            grads.by[label] += dz;
        }

        let zero = vec![0.0; h];
        let (prev_cell, prev_hidden) = if t > 0 {
            (&caches[t - 1].cell, &caches[t - 1].hidden)
        } else {
            (&zero, &zero)
        };
        let mut d_gate_pre: [Vec<f64>; GATES] = std::array::from_fn(|_| vec![0.0; h]);
        for j in 0..h {
            let i = cache.gates[0][j];
            let f = cache.gates[1][j];
            let g = cache.gates[2][j];
            let o = cache.gates[3][j];
            let tanh_c = cache.cell_tanh[j];
            let dh = d_hidden[j];
            let dc = d_cell[j] + dh * o * (1.0 - tanh_c * tanh_c);
            d_gate_pre[0][j] = dc * g * i * (1.0 - i);
            d_gate_pre[1][j] = dc * prev_cell[j] * f * (1.0 - f);
            d_gate_pre[2][j] = dc * i * (1.0 - g * g);
            d_gate_pre[3][j] = dh * tanh_c * o * (1.0 - o);
            d_cell[j] = dc * f;
        }
        let mut new_d_hidden = vec![0.0; h];
        for g in 0..GATES {
            let dpre = &d_gate_pre[g];
            for j in 0..h {
                *grads.wx[g].at_mut(j, cache.input_index) += dpre[j];
                grads.b[g][j] += dpre[j];
            }
            if t > 0 {
                for j in 0..h {
                    let row = &model.wh[g].data[j * h..(j + 1) * h];
                    let grow = &mut grads.wh[g].data[j * h..(j + 1) * h];
                    let s = dpre[j];
                    for k in 0..h {
                        grow[k] += s * prev_hidden[k];
                        new_d_hidden[k] += row[k] * s;
                    }
                }
            }
        }
        d_hidden = new_d_hidden;
    }
    Ok(())
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub model: DktModel,
    /// Mean loss per epoch, evaluated as the epoch runs.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch gradient descent over per-student sequences. Sequences are
/// bucketed by length into batches; batch order reshuffles each epoch from
/// the seeded stream. Deterministic given the config.
pub fn train(dataset: &Dataset, config: &DktConfig) -> Result<TrainResult> {
    config.validate()?;
    if dataset.label_vocab.len() > config.n_labels {
        return Err(Error::VocabMismatch(format!(
            "dataset has {} labels, model configured for {}",
            dataset.label_vocab.len(),
            config.n_labels
        )));
    }
    let mut model = DktModel::init(config)?;
    let mut encoded: Vec<EncodedSequence> = dataset
        .students
        .iter()
        .map(|s| encode_sequence(s, config.n_labels))
        .collect::<Result<Vec<_>>>()?;
    encoded.sort_by_key(|e| e.inputs.len());
    let batches: Vec<Vec<usize>> = (0..encoded.len())
        .collect::<Vec<_>>()
        .chunks(config.batch_size)
        .map(|c| c.to_vec())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..batches.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss_num = 0.0;
        let mut epoch_loss_den = 0usize;
        for &bi in &order {
            let batch = &batches[bi];
            let total_steps: usize = batch
                .iter()
                .map(|&si| encoded[si].targets.iter().flatten().count())
                .sum();
            if total_steps == 0 {
                continue;
            }
            let inv = 1.0 / total_steps as f64;
            let mut grads = Grads::zeros(&model);
            let mut batch_loss = 0.0;
            for &si in batch {
                let seq = &encoded[si];
                let preds = forward(&model, &seq.inputs)?;
                batch_loss += loss_sum(&preds, &seq.targets);
                backprop_sequence(&model, seq, inv, &mut grads)?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Numerical(
                    "training loss diverged; lower the learning rate".into(),
                ));
            }
            epoch_loss_num += batch_loss;
            epoch_loss_den += total_steps;
            let norm = grads.norm();
            if norm > config.grad_clip {
                grads.scale(config.grad_clip / norm);
            }
            apply_update(&mut model, &grads, config.learning_rate);
        }
        epoch_losses.push(if epoch_loss_den == 0 {
            0.0
        } else {
            epoch_loss_num / epoch_loss_den as f64
        });
    }
    Ok(TrainResult { model, epoch_losses })
}

fn apply_update(model: &mut DktModel, grads: &Grads, lr: f64) {
    for g in 0..GATES {
        for (w, d) in model.wx[g].data.iter_mut().zip(&grads.wx[g].data) {
            *w -= lr * d;
        }
        for (w, d) in model.wh[g].data.iter_mut().zip(&grads.wh[g].data) {
            *w -= lr * d;
        }
        for (w, d) in model.b[g].iter_mut().zip(&grads.b[g]) {
            *w -= lr * d;
        }
    }
    for (w, d) in model.wy.data.iter_mut().zip(&grads.wy.data) {
        *w -= lr * d;
    }
    for (w, d) in model.by.iter_mut().zip(&grads.by) {
        *w -= lr * d;
    }
}

/// Maximum relative error between the analytic batch gradient and central
/// finite differences over every weight of a (small) model.
pub fn grad_check(model: &DktModel, batch: &[EncodedSequence]) -> Result<f64> {
    let total_steps: usize = batch.iter().map(|s| s.targets.iter().flatten().count()).sum();
    if total_steps == 0 {
        return Err(Error::InvalidArgument(
            "gradient check needs at least one tested step".into(),
        ));
    }
    let inv = 1.0 / total_steps as f64;
    let mut grads = Grads::zeros(model);
    for seq in batch {
        backprop_sequence(model, seq, inv, &mut grads)?;
    }

    let batch_loss = |m: &DktModel| -> Result<f64> {
        let mut acc = 0.0;
        for seq in batch {
            let preds = forward(m, &seq.inputs)?;
            acc += loss_sum(&preds, &seq.targets);
        }
        Ok(acc * inv)
    };

    const EPS: f64 = 1e-5;
    let mut max_rel = 0.0f64;
    let mut probe = model.clone();
    for idx in 0..model.n_weights() {
        let orig = get_weight(&probe, idx);
        set_weight(&mut probe, idx, orig + EPS);
        let up = batch_loss(&probe)?;
        set_weight(&mut probe, idx, orig - EPS);
        let down = batch_loss(&probe)?;
        set_weight(&mut probe, idx, orig);
        let numeric = (up - down) / (2.0 * EPS);
        let analytic = grad_weight(&grads, idx);
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        max_rel = max_rel.max((analytic - numeric).abs() / denom);
    }
    Ok(max_rel)
}

// Flat indexing over all weights: wx gates, wh gates, biases, wy, by.
fn section_lengths(wx: &[Mat], wh: &[Mat], b: &[Vec<f64>], wy: &Mat, by: &[f64]) -> Vec<usize> {
    let mut v: Vec<usize> = wx.iter().map(|m| m.data.len()).collect();
    v.extend(wh.iter().map(|m| m.data.len()));
    v.extend(b.iter().map(|x| x.len()));
    v.push(wy.data.len());
    v.push(by.len());
    v
}

fn locate(lengths: &[usize], idx: usize) -> (usize, usize) {
    let mut rest = idx;
    for (section, &len) in lengths.iter().enumerate() {
        if rest < len {
            return (section, rest);
        }
        rest -= len;
    }
    panic!("weight index out of range");
}

fn get_weight(model: &DktModel, idx: usize) -> f64 {
    let lens = section_lengths(&model.wx, &model.wh, &model.b, &model.wy, &model.by);
    match locate(&lens, idx) {
        (s, o) if s < GATES => model.wx[s].data[o],
        (s, o) if s < 2 * GATES => model.wh[s - GATES].data[o],
        (s, o) if s < 3 * GATES => model.b[s - 2 * GATES][o],
        (s, o) if s == 3 * GATES => model.wy.data[o],
        (_, o) => model.by[o],
    }
}

fn set_weight(model: &mut DktModel, idx: usize, value: f64) {
    let lens = section_lengths(&model.wx, &model.wh, &model.b, &model.wy, &model.by);
    match locate(&lens, idx) {
        (s, o) if s < GATES => model.wx[s].data[o] = value,
        (s, o) if s < 2 * GATES => model.wh[s - GATES].data[o] = value,
        (s, o) if s < 3 * GATES => model.b[s - 2 * GATES][o] = value,
        (s, o) if s == 3 * GATES => model.wy.data[o] = value,
        (_, o) => model.by[o] = value,
    }
}

fn grad_weight(grads: &Grads, idx: usize) -> f64 {
    let lens = section_lengths(&grads.wx, &grads.wh, &grads.b, &grads.wy, &grads.by);
    match locate(&lens, idx) {
        (s, o) if s < GATES => grads.wx[s].data[o],
        (s, o) if s < 2 * GATES => grads.wh[s - GATES].data[o],
        (s, o) if s < 3 * GATES => grads.b[s - 2 * GATES][o],
        (s, o) if s == 3 * GATES => grads.wy.data[o],
        (_, o) => grads.by[o],
    }
}

/// Causal per-trial predictions on a test set. A student's first trial has no
/// input history and is skipped, matching the training loss coverage.
pub fn predict_dataset(model: &DktModel, test: &Dataset) -> Result<Vec<PredictionRecord>> {
    if test.label_vocab.len() > model.config.n_labels {
        return Err(Error::VocabMismatch(format!(
            "test set has {} labels, model trained on {}",
            test.label_vocab.len(),
            model.config.n_labels
        )));
    }
    let mut records = Vec::new();
    for seq in &test.students {
        if seq.trials.len() < 2 {
            continue;
        }
        let encoded = encode_sequence(seq, model.config.n_labels)?;
        let preds = forward(model, &encoded.inputs)?;
        for (t, target) in encoded.targets.iter().enumerate() {
            if let Some((label, correct)) = target {
                records.push(PredictionRecord {
                    student: seq.student,
                    t: t + 1,
                    group: crate::eval::group_name(test, seq.student, t + 1),
                    predicted: preds[t][*label],
                    observed: *correct,
                });
            }
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Trial, Vocab};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_config(q: usize, h: usize) -> DktConfig {
        DktConfig {
            n_labels: q,
            hidden_size: h,
            learning_rate: 0.5,
            epochs: 5,
            batch_size: 4,
            grad_clip: 5.0,
            seed: 7,
        }
    }

    #[test]
    fn encode_examples() {
        assert_eq!(encode_input_index(1, false, 3).unwrap(), 1);
        assert_eq!(encode_input_index(1, true, 3).unwrap(), 4);
        let v = encode_input(1, true, 3).unwrap();
        assert_eq!(v.len(), 6);
        assert_eq!(v.iter().filter(|&&x| x != 0.0).count(), 1);
        assert_eq!(v[4], 1.0);
        assert!(encode_input_index(3, false, 3).is_err());
    }

    #[test]
    fn zero_weights_emit_half() {
        let config = tiny_config(3, 4);
        let mut model = DktModel::init(&config).unwrap();
        for g in 0..GATES {
            model.wx[g].data.fill(0.0);
            model.wh[g].data.fill(0.0);
            model.b[g].fill(0.0);
        }
        model.wy.data.fill(0.0);
        model.by.fill(0.0);
        let out = forward(&model, &[0, 2, 5]).unwrap();
        assert_eq!(out.len(), 3);
        for step in out {
            assert_eq!(step.len(), 3);
            for p in step {
                assert_relative_eq!(p, 0.5);
            }
        }
    }

    #[test]
    fn forward_matches_scalar_reimplementation() {
        // Hidden size 1, Q = 1: every weight is a scalar, so the whole cell
        // can be re-derived with plain arithmetic.
        let config = tiny_config(1, 1);
        let mut model = DktModel::init(&config).unwrap();
        let wx = [0.3, -0.2, 0.5, 0.1];
        let wh = [0.05, 0.6, -0.4, 0.2];
        let b = [0.01, 1.0, -0.02, 0.03];
        for g in 0..GATES {
            model.wx[g].data = vec![wx[g], wx[g] / 2.0];
            model.wh[g].data = vec![wh[g]];
            model.b[g] = vec![b[g]];
        }
        model.wy.data = vec![0.7];
        model.by = vec![-0.1];

        let inputs = [0usize, 1usize]; // incorrect then correct on the only label
        let got = forward(&model, &inputs).unwrap();

        let s = |z: f64| 1.0 / (1.0 + (-z).exp());
        let mut h = 0.0f64;
        let mut c = 0.0f64;
        let mut expected = Vec::new();
        for &idx in &inputs {
            let x = if idx == 0 { 1.0 } else { 0.5 };
            let i = s(wx[0] * x + wh[0] * h + b[0]);
            let f = s(wx[1] * x + wh[1] * h + b[1]);
            let g = (wx[2] * x + wh[2] * h + b[2]).tanh();
            let o = s(wx[3] * x + wh[3] * h + b[3]);
            c = f * c + i * g;
            h = o * c.tanh();
            expected.push(s(0.7 * h - 0.1));
        }
        for (a, e) in got.iter().zip(expected) {
            assert_relative_eq!(a[0], e, epsilon = 1e-12);
        }
    }

    #[test]
    fn output_shape_is_steps_by_q() {
        let config = tiny_config(5, 3);
        let model = DktModel::init(&config).unwrap();
        let out = forward(&model, &[0, 1, 2, 9]).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|step| step.len() == 5));
        assert!(out.iter().flatten().all(|p| *p > 0.0 && *p < 1.0));
    }

    #[test]
    fn loss_examples() {
        // Constant 0.5 predictions: loss is ln 2.
        let preds = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let targets = vec![Some((0, true)), Some((1, false))];
        assert_relative_eq!(loss(&preds, &targets), 2.0f64.ln(), epsilon = 1e-12);

        // Perfect predictions: loss vanishes up to the floor.
        let preds = vec![vec![1.0, 0.0]];
        let targets = vec![Some((0, true))];
        assert!(loss(&preds, &targets) < 1e-6);

        // Hand-computed two-step example.
        let preds = vec![vec![0.8, 0.3], vec![0.6, 0.2]];
        let targets = vec![Some((1, false)), Some((0, true))];
        let expected = -(0.7f64.ln() + 0.6f64.ln()) / 2.0;
        assert_relative_eq!(loss(&preds, &targets), expected, epsilon = 1e-12);

        // Untested steps contribute nothing.
        let preds = vec![vec![0.9, 0.9]];
        let targets = vec![None];
        assert_eq!(loss(&preds, &targets), 0.0);
    }

    #[test]
    fn gradient_check_small_model() {
        let config = tiny_config(3, 4);
        let model = DktModel::init(&config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let batch: Vec<EncodedSequence> = (0..3)
            .map(|_| {
                let n = rng.random_range(2..6);
                let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
                let corrects: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
                let inputs: Vec<usize> = labels
                    .iter()
                    .zip(&corrects)
                    .map(|(&l, &c)| encode_input_index(l, c, 3).unwrap())
                    .collect();
                let targets: Vec<Option<(usize, bool)>> = (0..n)
                    .map(|j| {
                        if j + 1 < n {
                            Some((labels[j + 1], corrects[j + 1]))
                        } else {
                            None
                        }
                    })
                    .collect();
                EncodedSequence { inputs, targets }
            })
            .collect();
        let max_rel = grad_check(&model, &batch).unwrap();
        assert!(max_rel <= 1e-4, "max relative gradient error {max_rel}");
    }

    #[test]
    fn gradient_check_rejects_empty_batch() {
        let config = tiny_config(2, 2);
        let model = DktModel::init(&config).unwrap();
        let batch = vec![EncodedSequence { inputs: vec![0], targets: vec![None] }];
        assert!(grad_check(&model, &batch).is_err());
    }

    fn copy_task_dataset(n_students: usize, n_trials: usize, seed: u64) -> Dataset {
        // Labels alternate a,b; the outcome flips after every b trial, so the
        // next outcome is a deterministic function of the current input pair.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut student_vocab = Vocab::new();
        let mut label_vocab = Vocab::new();
        label_vocab.intern("a");
        label_vocab.intern("b");
        let mut students = Vec::new();
        for s in 0..n_students {
            let sid = student_vocab.intern(&format!("s{s:03}"));
            let mut correct = rng.random_bool(0.5);
            let mut trials = Vec::new();
            for t in 0..n_trials {
                let label = t % 2;
                trials.push(Trial { t, label, correct, expert_skill: None });
                if label == 1 {
                    correct = !correct;
                }
            }
            students.push(crate::data::StudentSequence { student: sid, trials });
        }
        Dataset { students, student_vocab, label_vocab, skill_vocab: Vocab::new() }
    }

    #[test]
    fn training_learns_a_deterministic_pattern() {
        let ds = copy_task_dataset(60, 24, 3);
        let config = DktConfig {
            n_labels: 2,
            hidden_size: 10,
            learning_rate: 0.8,
            epochs: 50,
            batch_size: 16,
            grad_clip: 5.0,
            seed: 5,
        };
        let result = train(&ds, &config).unwrap();
        assert!(
            result.epoch_losses.last().unwrap() < result.epoch_losses.first().unwrap(),
            "loss failed to decrease: {:?}",
            result.epoch_losses
        );
        let records = predict_dataset(&result.model, &ds).unwrap();
        let auc = crate::eval::auc_global(&records).unwrap();
        assert!(auc >= 0.95, "training AUC {auc}");
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let ds = copy_task_dataset(8, 6, 1);
        let config = DktConfig { epochs: 0, ..tiny_config(2, 3) };
        let result = train(&ds, &config).unwrap();
        let fresh = DktModel::init(&config).unwrap();
        assert_eq!(result.model, fresh);
        assert!(result.epoch_losses.is_empty());
    }

    #[test]
    fn training_is_deterministic_given_seed() {
        let ds = copy_task_dataset(12, 10, 2);
        let config = DktConfig { epochs: 3, ..tiny_config(2, 4) };
        let a = train(&ds, &config).unwrap();
        let b = train(&ds, &config).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn predictions_are_causal() {
        let ds = copy_task_dataset(4, 12, 9);
        let config = tiny_config(2, 5);
        let model = DktModel::init(&config).unwrap();
        let seq = encode_sequence(&ds.students[0], 2).unwrap();
        let full = forward(&model, &seq.inputs).unwrap();
        for cut in 1..seq.inputs.len() {
            let partial = forward(&model, &seq.inputs[..cut]).unwrap();
            for (a, b) in partial.iter().zip(&full[..cut]) {
                for (x, y) in a.iter().zip(b) {
                    assert_relative_eq!(x, y, epsilon = 1e-12);
                }
            }
        }
    }
}
