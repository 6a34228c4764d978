//! Value-level kernels shared by the tape and by inference code.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// Probability clamp used inside cross-entropy losses and log-probabilities.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Softmax,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CategoricalCrossEntropy,
    BinaryCrossEntropy,
    MeanSquaredError,
}

pub fn matvec(w: &Tensor, x: &Tensor) -> Result<Tensor> {
    if !w.is_matrix() || !x.is_vector() || w.cols() != x.len() {
        return Err(Error::Dimension {
            op: "matvec",
            left: w.shape().to_vec(),
            right: x.shape().to_vec(),
        });
    }
    let cols = w.cols();
    let xs = x.data();
    let out = w
        .data()
        .chunks_exact(cols)
        .map(|row| row.iter().zip(xs).map(|(a, b)| a * b).sum())
        .collect();
    Ok(Tensor::from_parts(vec![w.rows()], out))
}

/// `W·x + b`.
pub fn affine(w: &Tensor, x: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut out = matvec(w, x)?;
    if !b.is_vector() || b.len() != out.len() {
        return Err(Error::Dimension {
            op: "affine",
            left: w.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    out.add_assign(b);
    Ok(out)
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn activation(kind: Activation, x: &Tensor) -> Result<Tensor> {
    if x.is_empty() {
        return Err(Error::Domain("activation of an empty tensor".into()));
    }
    let data: Vec<f64> = match kind {
        Activation::Relu => x.data().iter().map(|&v| v.max(0.0)).collect(),
        Activation::Sigmoid => x.data().iter().map(|&v| sigmoid(v)).collect(),
        Activation::Tanh => x.data().iter().map(|&v| v.tanh()).collect(),
        Activation::Softmax => {
            if !x.is_vector() {
                return Err(Error::Domain(format!(
                    "softmax expects a vector, got shape {:?}",
                    x.shape()
                )));
            }
            let max = x.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = x.data().iter().map(|&v| (v - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / total).collect()
        }
    };
    Ok(Tensor::from_parts(x.shape().to_vec(), data))
}

pub fn concat(parts: &[&Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(Error::Domain("concat of an empty part list".into()));
    }
    let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for part in parts {
        if !part.is_vector() {
            return Err(Error::Domain(format!(
                "concat expects vectors, got shape {:?}",
                part.shape()
            )));
        }
        data.extend_from_slice(part.data());
    }
    Ok(Tensor::from_parts(vec![data.len()], data))
}

pub fn loss_eval(kind: LossKind, prediction: &Tensor, target: &Tensor) -> Result<f64> {
    if prediction.shape() != target.shape() {
        return Err(Error::Dimension {
            op: "loss",
            left: prediction.shape().to_vec(),
            right: target.shape().to_vec(),
        });
    }
    let p = prediction.data();
    let t = target.data();
    let n = p.len() as f64;
    let value = match kind {
        LossKind::CategoricalCrossEntropy => -p
            .iter()
            .zip(t)
            .map(|(&p, &t)| if t == 0.0 { 0.0 } else { t * p.max(PROB_EPS).ln() })
            .sum::<f64>(),
        LossKind::BinaryCrossEntropy => {
            p.iter()
                .zip(t)
                .map(|(&p, &t)| {
                    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
                    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
                })
                .sum::<f64>()
                / n
        }
        LossKind::MeanSquaredError => {
            p.iter().zip(t).map(|(&p, &t)| (p - t) * (p - t)).sum::<f64>() / n
        }
    };
    Ok(value.max(0.0))
}

/// Derivative of [`loss_eval`] with respect to the prediction.
pub(crate) fn loss_grad(kind: LossKind, prediction: &Tensor, target: &Tensor) -> Vec<f64> {
    let p = prediction.data();
    let t = target.data();
    let n = p.len() as f64;
    match kind {
        LossKind::CategoricalCrossEntropy => p
            .iter()
            .zip(t)
            .map(|(&p, &t)| if p > PROB_EPS { -t / p } else { 0.0 })
            .collect(),
        LossKind::BinaryCrossEntropy => p
            .iter()
            .zip(t)
            .map(|(&p, &t)| {
                if p <= PROB_EPS || p >= 1.0 - PROB_EPS {
                    0.0
                } else {
                    (-t / p + (1.0 - t) / (1.0 - p)) / n
                }
            })
            .collect(),
        LossKind::MeanSquaredError => p
            .iter()
            .zip(t)
            .map(|(&p, &t)| 2.0 * (p - t) / n)
            .collect(),
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(data: &[f64]) -> Tensor {
        Tensor::vector(data.to_vec())
    }

    #[test]
    fn affine_identity() {
        let w = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let out = affine(&w, &v(&[3.0, 4.0]), &v(&[0.0, 0.0])).unwrap();
        assert_eq!(out.data(), &[3.0, 4.0]);
    }

    #[test]
    fn affine_against_reference_multiply() {
        let w = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let x = [1.0, 1.0];
        let b = [1.0, 1.0];
        // straight loop reference
        let mut expected = [0.0; 2];
        for r in 0..2 {
            expected[r] = b[r];
            for c in 0..2 {
                expected[r] += w.at(r, c) * x[c];
            }
        }
        let out = affine(&w, &v(&x), &v(&b)).unwrap();
        assert_eq!(out.data(), &expected);
        assert_eq!(out.data(), &[4.0, 8.0]);
    }

    #[test]
    fn affine_zero_weights() {
        let w = Tensor::zeros(&[1, 3]);
        let out = affine(&w, &v(&[5.0, -2.0, 9.0]), &v(&[7.0])).unwrap();
        assert_eq!(out.data(), &[7.0]);
    }

    #[test]
    fn affine_shape_error_names_both_shapes() {
        let w = Tensor::zeros(&[2, 3]);
        let err = affine(&w, &v(&[1.0, 2.0]), &v(&[0.0, 0.0])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2]"), "{msg}");
    }

    #[test]
    fn activation_examples() {
        for c in [-50.0, 0.0, 3.7, 1e3] {
            let p = activation(Activation::Softmax, &v(&[c, c, c])).unwrap();
            for &x in p.data() {
                assert!((x - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        assert_eq!(activation(Activation::Sigmoid, &v(&[0.0])).unwrap().item(), 0.5);
        assert_eq!(activation(Activation::Relu, &v(&[-3.0])).unwrap().item(), 0.0);
        assert!(sigmoid(-800.0).is_finite() && sigmoid(800.0) == 1.0);
    }

    #[test]
    fn softmax_rejects_matrix() {
        let m = Tensor::zeros(&[2, 2]);
        assert!(activation(Activation::Softmax, &m).is_err());
    }

    #[test]
    fn concat_examples() {
        assert_eq!(concat(&[&v(&[1.0, 2.0]), &v(&[3.0])]).unwrap().data(), &[1.0, 2.0, 3.0]);
        let single = v(&[4.0, 5.0]);
        assert_eq!(concat(&[&single]).unwrap(), single);
        assert!(concat(&[]).is_err());
        let full = concat(&[
            &Tensor::zeros(&[300]),
            &Tensor::zeros(&[300]),
            &Tensor::zeros(&[7000]),
        ])
        .unwrap();
        assert_eq!(full.len(), 7600);
    }

    #[test]
    fn loss_examples() {
        let target = Tensor::one_hot(4, 2).unwrap();
        let eps = 1e-9;
        let smoothed = v(&[eps, eps, 1.0 - 3.0 * eps, eps]);
        let ce = loss_eval(LossKind::CategoricalCrossEntropy, &smoothed, &target).unwrap();
        assert!(ce < 1e-8);

        for label in [0.0, 1.0, 0.3] {
            let bce = loss_eval(LossKind::BinaryCrossEntropy, &v(&[0.5]), &v(&[label])).unwrap();
            assert!((bce - std::f64::consts::LN_2).abs() < 1e-15);
        }
        let x = v(&[1.0, -2.0, 3.5]);
        assert_eq!(loss_eval(LossKind::MeanSquaredError, &x, &x).unwrap(), 0.0);
    }

    #[test]
    fn binary_ce_clamps_saturated_predictions() {
        for p in [0.0, 1.0] {
            for t in [0.0, 1.0] {
                let l = loss_eval(LossKind::BinaryCrossEntropy, &v(&[p]), &v(&[t])).unwrap();
                assert!(l.is_finite() && l >= 0.0);
            }
        }
    }

    #[test]
    fn argmax_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), Some(1));
        assert_eq!(argmax(&[]), None);
    }
}
