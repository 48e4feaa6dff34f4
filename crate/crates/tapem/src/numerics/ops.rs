//! Core arithmetic and activations on [`Tensor`]s.

use rand::Rng;

use super::tensor::{Shape, Tensor};
use crate::error::{Result, TapemError};

fn shape_err(op: &str, a: &Tensor, b: &Tensor) -> TapemError {
    TapemError::Shape {
        op: op.into(),
        left: a.shape().to_string(),
        right: b.shape().to_string(),
    }
}

/// Matrix-vector product `m v`.
pub fn matvec(m: &Tensor, v: &Tensor) -> Result<Tensor> {
    match (m.shape(), v.shape()) {
        (Shape::Matrix(r, c), Shape::Vector(n)) if c == n => {
            let x = v.data();
            let out = (0..r)
                .map(|i| {
                    m.row(i)
                        .iter()
                        .zip(x)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                })
                .collect();
            Ok(Tensor::vector(out))
        }
        _ => Err(shape_err("matvec", m, v)),
    }
}

/// Transposed matrix-vector product `m^T v`.
pub fn matvec_t(m: &Tensor, v: &Tensor) -> Result<Tensor> {
    match (m.shape(), v.shape()) {
        (Shape::Matrix(r, c), Shape::Vector(n)) if r == n => {
            let mut out = vec![0.0; c];
            for i in 0..r {
                let vi = v.data()[i];
                for (o, mij) in out.iter_mut().zip(m.row(i)) {
                    *o += mij * vi;
                }
            }
            Ok(Tensor::vector(out))
        }
        _ => Err(shape_err("matvec_t", m, v)),
    }
}

/// Outer product `u v^T`.
pub fn outer(u: &Tensor, v: &Tensor) -> Result<Tensor> {
    match (u.shape(), v.shape()) {
        (Shape::Vector(r), Shape::Vector(c)) => {
            let mut data = Vec::with_capacity(r * c);
            for a in u.data() {
                for b in v.data() {
                    data.push(a * b);
                }
            }
            Tensor::matrix(r, c, data)
        }
        _ => Err(shape_err("outer", u, v)),
    }
}

/// Elementwise product.
pub fn hadamard(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(shape_err("hadamard", a, b));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Ok(clone_with(a, data))
}

/// Elementwise sum.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(shape_err("add", a, b));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Ok(clone_with(a, data))
}

/// Elementwise difference.
pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(shape_err("sub", a, b));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    Ok(clone_with(a, data))
}

/// Multiply every element by `c`.
pub fn scale(a: &Tensor, c: f64) -> Tensor {
    clone_with(a, a.data().iter().map(|x| x * c).collect())
}

fn clone_with(a: &Tensor, data: Vec<f64>) -> Tensor {
    match a.shape() {
        Shape::Vector(_) => Tensor::vector(data),
        Shape::Matrix(r, c) => Tensor::matrix(r, c, data).expect("same shape"),
    }
}

/// Concatenate vectors, preserving operand order.
pub fn concat(parts: &[&Tensor]) -> Result<Tensor> {
    let mut data = Vec::new();
    for p in parts {
        match p.shape() {
            Shape::Vector(_) => data.extend_from_slice(p.data()),
            Shape::Matrix(_, _) => {
                return Err(TapemError::Shape {
                    op: "concat".into(),
                    left: p.shape().to_string(),
                    right: "vector operands only".into(),
                })
            }
        }
    }
    Ok(Tensor::vector(data))
}

/// `w x + b`.
pub fn affine(w: &Tensor, x: &Tensor, b: &Tensor) -> Result<Tensor> {
    add(&matvec(w, x)?, b)
}

/// Inner product of two equal-length vectors.
pub fn dot(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(shape_err("dot", a, b));
    }
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `log sigmoid(x)` computed as `-softplus(-x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

pub fn sigmoid_vec(a: &Tensor) -> Tensor {
    clone_with(a, a.data().iter().map(|&x| sigmoid(x)).collect())
}

pub fn tanh_vec(a: &Tensor) -> Tensor {
    clone_with(a, a.data().iter().map(|x| x.tanh()).collect())
}

pub fn relu_vec(a: &Tensor) -> Tensor {
    clone_with(a, a.data().iter().map(|x| x.max(0.0)).collect())
}

/// Shift-stabilized softmax; output sums to 1 for any finite input.
pub fn softmax(a: &Tensor) -> Tensor {
    let max = a.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = a.data().iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    clone_with(a, exps.into_iter().map(|e| e / total).collect())
}

/// Inverted-dropout mask: each slot is `0` with probability `rate`,
/// otherwise `1/(1-rate)`.
pub fn dropout_mask<R: Rng>(len: usize, rate: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(TapemError::Config(format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    let keep = 1.0 / (1.0 - rate);
    Ok((0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect())
}

/// Inverted dropout: identity at inference, masked and rescaled in training.
pub fn dropout<R: Rng>(a: &Tensor, rate: f64, training: bool, rng: &mut R) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(TapemError::Config(format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    if !training || rate == 0.0 {
        return Ok(a.clone());
    }
    let mask = dropout_mask(a.len(), rate, rng)?;
    Ok(clone_with(
        a,
        a.data().iter().zip(&mask).map(|(x, m)| x * m).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hadamard_example() {
        let a = Tensor::vector(vec![1.0, 2.0]);
        let b = Tensor::vector(vec![3.0, 4.0]);
        assert_eq!(hadamard(&a, &b).unwrap().data(), &[3.0, 8.0]);
    }

    #[test]
    fn concat_preserves_order() {
        let parts = [
            Tensor::vector(vec![1.0]),
            Tensor::vector(vec![2.0]),
            Tensor::vector(vec![3.0]),
        ];
        let refs: Vec<&Tensor> = parts.iter().collect();
        assert_eq!(concat(&refs).unwrap().data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn matvec_identity() {
        let m = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let v = Tensor::vector(vec![5.0, 7.0]);
        assert_eq!(matvec(&m, &v).unwrap().data(), &[5.0, 7.0]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let m = Tensor::matrix(2, 3, vec![0.0; 6]).unwrap();
        let v = Tensor::vector(vec![0.0; 2]);
        let msg = matvec(&m, &v).unwrap_err().to_string();
        assert!(msg.contains("[2x3]") && msg.contains("[2]"), "{msg}");
    }

    #[test]
    fn sigmoid_at_zero() {
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn softmax_symmetry_and_normalization() {
        let out = softmax(&Tensor::vector(vec![0.0, 0.0, 0.0]));
        for v in out.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let out = softmax(&Tensor::vector(vec![-3.0, 0.4, 11.0, 2.2]));
        let total: f64 = out.data().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(out.data().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn relu_definition() {
        let out = relu_vec(&Tensor::vector(vec![-1.0, 2.0]));
        assert_eq!(out.data(), &[0.0, 2.0]);
    }

    #[test]
    fn log_sigmoid_stable_at_large_magnitudes() {
        assert!((log_sigmoid(800.0) - 0.0).abs() < 1e-300);
        let v = log_sigmoid(-800.0);
        assert!((v + 800.0).abs() < 1e-9);
        assert!(v.is_finite());
    }

    #[test]
    fn dropout_rate_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::vector(vec![1.0, -2.0, 3.0]);
        assert_eq!(dropout(&x, 0.0, true, &mut rng).unwrap(), x);
        assert_eq!(dropout(&x, 0.0, false, &mut rng).unwrap(), x);
    }

    #[test]
    fn dropout_inference_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::vector(vec![1.0; 32]);
        assert_eq!(dropout(&x, 0.15, false, &mut rng).unwrap(), x);
    }

    #[test]
    fn dropout_survival_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let x = Tensor::vector(vec![1.0; n]);
        let out = dropout(&x, 0.5, true, &mut rng).unwrap();
        let survivors = out.data().iter().filter(|v| **v != 0.0).count();
        let frac = survivors as f64 / n as f64;
        assert!((0.49..=0.51).contains(&frac), "survival {frac}");
        // inverted scaling preserves expectation
        let mean: f64 = out.data().iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.03, "mean {mean}");
    }

    #[test]
    fn dropout_rejects_bad_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::vector(vec![1.0]);
        assert!(dropout(&x, 1.0, true, &mut rng).is_err());
        assert!(dropout(&x, -0.1, true, &mut rng).is_err());
    }
}
