//! Softmax cross-entropy and whole-dataset evaluation.

use crate::spec::{ModelSpec, Shape};
use crate::{Error, Result};

/// Samples per forward call in [`evaluate`].
const EVAL_CHUNK: usize = 256;

/// A labelled mini-batch borrowed from a dataset.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    pub inputs: &'a [f64],
    pub labels: &'a [usize],
}

impl Batch<'_> {
    fn validate(&self, input: Shape, n_classes: usize) -> Result<()> {
        if self.labels.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        if self.inputs.len() != self.labels.len() * input.len() {
            return Err(Error::Shape(format!(
                "{} labels but {} input values (sample size {})",
                self.labels.len(),
                self.inputs.len(),
                input.len()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Shape(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(())
    }
}

/// Mean loss and accuracy over a labelled set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Mean softmax cross-entropy of `logits` (`n × classes`) and its gradient
/// with respect to the logits.
pub fn softmax_cross_entropy(
    logits: &[f64],
    labels: &[usize],
    n_classes: usize,
) -> (f64, Vec<f64>) {
    let n = labels.len();
    let mut grad = vec![0.0; logits.len()];
    let mut total = 0.0;
    for (s, &label) in labels.iter().enumerate() {
        let z = &logits[s * n_classes..(s + 1) * n_classes];
        let g = &mut grad[s * n_classes..(s + 1) * n_classes];
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (gi, &zi) in g.iter_mut().zip(z) {
            *gi = (zi - max).exp();
            sum += *gi;
        }
        total += sum.ln() + max - z[label];
        for gi in g.iter_mut() {
            *gi /= sum * n as f64;
        }
        g[label] -= 1.0 / n as f64;
    }
    (total / n as f64, grad)
}

fn n_classes(spec: &ModelSpec) -> Result<usize> {
    match spec.output_shape() {
        Shape::Flat(c) if c >= 2 => Ok(c),
        other => Err(Error::Shape(format!(
            "classifier output must be flat with ≥ 2 classes, got {other:?}"
        ))),
    }
}

/// Mean cross-entropy over `batch` and its gradient with respect to `omega`.
pub fn loss_and_grad(spec: &ModelSpec, omega: &[f64], batch: Batch<'_>) -> Result<(f64, Vec<f64>)> {
    let classes = n_classes(spec)?;
    batch.validate(spec.input_shape(), classes)?;
    let tape = spec.forward_cached(omega, batch.inputs)?;
    let (loss, d_logits) = softmax_cross_entropy(tape.output(), batch.labels, classes);
    let grads = spec.backward(omega, &tape, &d_logits, false)?;
    Ok((loss, grads.params))
}

/// Index of the first maximal logit.
pub fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

/// Mean cross-entropy and accuracy of `omega` over a whole labelled set.
///
/// Samples are processed in fixed-size chunks in order, so the result depends
/// only on the arguments.
pub fn evaluate(spec: &ModelSpec, omega: &[f64], set: Batch<'_>) -> Result<Evaluation> {
    let classes = n_classes(spec)?;
    set.validate(spec.input_shape(), classes)?;
    let d = spec.input_shape().len();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for (xs, ys) in set
        .inputs
        .chunks(EVAL_CHUNK * d)
        .zip(set.labels.chunks(EVAL_CHUNK))
    {
        let logits = spec.forward(omega, xs)?;
        let (loss, _) = softmax_cross_entropy(&logits, ys, classes);
        loss_sum += loss * ys.len() as f64;
        correct += logits
            .chunks(classes)
            .zip(ys)
            .filter(|(row, &y)| argmax(row) == y)
            .count();
    }
    let n = set.labels.len() as f64;
    Ok(Evaluation {
        loss: loss_sum / n,
        accuracy: correct as f64 / n,
    })
}
