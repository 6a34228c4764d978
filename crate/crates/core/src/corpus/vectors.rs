use std::path::Path;

use rand::Rng;

use super::vocab::{Vocabulary, PAD};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Range of the uniform fill for tokens without a pretrained vector.
pub const MISSING_VECTOR_SCALE: f64 = 0.05;

/// Builds an `embedding_dim × vocab_size` matrix from a `token f1 … fN` text file.
///
/// Tokens absent from the file get uniform values in ±0.05 drawn from `rng`
/// (in index order); the PAD column is zero.
pub fn load_pretrained_vectors(
    path: &Path,
    vocab: &Vocabulary,
    embedding_dim: usize,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pretrained_vectors(&text, vocab, embedding_dim, rng)
}

pub fn parse_pretrained_vectors(
    text: &str,
    vocab: &Vocabulary,
    embedding_dim: usize,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    let cols = vocab.len();
    let mut found: Vec<Option<Vec<f64>>> = vec![None; cols];
    for (n, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::format(format!("line {}", n + 1), format!("invalid number {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != embedding_dim {
            return Err(Error::format(
                format!("line {}", n + 1),
                format!("expected {embedding_dim} values, found {}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(format!("line {}", n + 1), "non-finite value"));
        }
        if let Some(id) = vocab.get(token) {
            found[id] = Some(values);
        }
    }

    let mut matrix = Tensor::zeros(&[embedding_dim, cols]);
    let data = matrix.data_mut();
    for (col, vector) in found.into_iter().enumerate() {
        if col == PAD {
            continue;
        }
        let column: Vec<f64> = match vector {
            Some(v) => v,
            None => (0..embedding_dim)
                .map(|_| rng.gen_range(-MISSING_VECTOR_SCALE..=MISSING_VECTOR_SCALE))
                .collect(),
        };
        for (row, v) in column.into_iter().enumerate() {
            data[row * cols + col] = v;
        }
    }
    Ok(matrix)
}
