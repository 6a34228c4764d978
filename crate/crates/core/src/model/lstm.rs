use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Parameter, Parameterized, Tape, Tensor, Var};

/// Single-layer LSTM without peepholes. Each gate sees `[x_t, h_{t-1}]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub input_w: Parameter,
    pub input_b: Parameter,
    pub forget_w: Parameter,
    pub forget_b: Parameter,
    pub output_w: Parameter,
    pub output_b: Parameter,
    pub cell_w: Parameter,
    pub cell_b: Parameter,
}

impl LstmParams {
    /// Uniform weights in `±scale`, zero biases except the forget gate (1.0).
    pub fn new(prefix: &str, input_dim: usize, hidden: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let shape = [hidden, input_dim + hidden];
        let mut gate = |name: &str| Parameter::uniform(format!("{prefix}.{name}.weight"), &shape, scale, rng);
        let (input_w, forget_w, output_w, cell_w) = (gate("input"), gate("forget"), gate("output"), gate("cell"));
        let bias = |name: &str, fill| Parameter::constant(format!("{prefix}.{name}.bias"), &[hidden], fill);
        Self {
            input_w,
            input_b: bias("input", 0.0),
            forget_w,
            forget_b: bias("forget", 1.0),
            output_w,
            output_b: bias("output", 0.0),
            cell_w,
            cell_b: bias("cell", 0.0),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.input_w.value.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.input_w.value.cols() - self.hidden_dim()
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>) -> LstmVars {
        LstmVars {
            input: (tape.param(&self.input_w), tape.param(&self.input_b)),
            forget: (tape.param(&self.forget_w), tape.param(&self.forget_b)),
            output: (tape.param(&self.output_w), tape.param(&self.output_b)),
            cell: (tape.param(&self.cell_w), tape.param(&self.cell_b)),
            hidden: self.hidden_dim(),
        }
    }
}

impl Parameterized for LstmParams {
    fn parameters(&self) -> Vec<&Parameter> {
        vec![
            &self.input_w,
            &self.input_b,
            &self.forget_w,
            &self.forget_b,
            &self.output_w,
            &self.output_b,
            &self.cell_w,
            &self.cell_b,
        ]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![
            &mut self.input_w,
            &mut self.input_b,
            &mut self.forget_w,
            &mut self.forget_b,
            &mut self.output_w,
            &mut self.output_b,
            &mut self.cell_w,
            &mut self.cell_b,
        ]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub hidden: Var,
    pub cell: Var,
}

/// Tape handles for one LSTM's parameters.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    input: (Var, Var),
    forget: (Var, Var),
    output: (Var, Var),
    cell: (Var, Var),
    hidden: usize,
}

impl LstmVars {
    /// In the same order as [`LstmParams::parameters`].
    pub fn all(&self) -> Vec<Var> {
        vec![
            self.input.0,
            self.input.1,
            self.forget.0,
            self.forget.1,
            self.output.0,
            self.output.1,
            self.cell.0,
            self.cell.1,
        ]
    }

    pub fn zero_state(&self, tape: &mut Tape<'_>) -> LstmState {
        LstmState {
            hidden: tape.constant(Tensor::zeros(&[self.hidden])),
            cell: tape.constant(Tensor::zeros(&[self.hidden])),
        }
    }

    pub fn step(&self, tape: &mut Tape<'_>, x: Var, state: LstmState) -> Result<LstmState> {
        let z = tape.concat(&[x, state.hidden])?;
        let pre_i = tape.affine(self.input.0, z, self.input.1)?;
        let pre_f = tape.affine(self.forget.0, z, self.forget.1)?;
        let pre_o = tape.affine(self.output.0, z, self.output.1)?;
        let pre_g = tape.affine(self.cell.0, z, self.cell.1)?;
        let i = tape.sigmoid(pre_i)?;
        let f = tape.sigmoid(pre_f)?;
        let o = tape.sigmoid(pre_o)?;
        let g = tape.tanh(pre_g)?;
        let kept = tape.mul(f, state.cell)?;
        let written = tape.mul(i, g)?;
        let cell = tape.add(kept, written)?;
        let squashed = tape.tanh(cell)?;
        let hidden = tape.mul(o, squashed)?;
        Ok(LstmState { hidden, cell })
    }

    /// Hidden state after each input, in order.
    pub fn run(&self, tape: &mut Tape<'_>, inputs: &[Var]) -> Result<Vec<Var>> {
        let mut state = self.zero_state(tape);
        let mut hiddens = Vec::with_capacity(inputs.len());
        for &x in inputs {
            state = self.step(tape, x, state)?;
            hiddens.push(state.hidden);
        }
        Ok(hiddens)
    }

    /// Final hidden state, or the zero vector for an empty input.
    pub fn encode(&self, tape: &mut Tape<'_>, inputs: &[Var]) -> Result<Var> {
        match self.run(tape, inputs)?.last() {
            Some(&h) => Ok(h),
            None => Ok(self.zero_state(tape).hidden),
        }
    }
}

/// Runs the LSTM over the first `mask` columns of `embedded` (s_e × s_s) and
/// returns the final hidden state. Columns past `mask` are ignored.
pub fn lstm_encode(embedded: &Tensor, params: &LstmParams, mask: usize) -> Result<Tensor> {
    if !embedded.is_matrix() || embedded.rows() != params.input_dim() {
        return Err(Error::Dimension {
            op: "lstm_encode",
            left: embedded.shape().to_vec(),
            right: vec![params.input_dim()],
        });
    }
    if mask > embedded.cols() {
        return Err(Error::Domain(format!(
            "mask {mask} exceeds sequence length {}",
            embedded.cols()
        )));
    }
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let inputs = (0..mask)
        .map(|t| Ok(tape.constant(embedded.column(t)?)))
        .collect::<Result<Vec<_>>>()?;
    let h = vars.encode(&mut tape, &inputs)?;
    Ok(tape.value(h).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sigmoid(v: f64) -> f64 {
        1.0 / (1.0 + (-v).exp())
    }

    /// Straight-line recurrence over explicit loops.
    fn reference(embedded: &Tensor, p: &LstmParams, mask: usize) -> Vec<f64> {
        let hsz = p.hidden_dim();
        let isz = p.input_dim();
        let mut h = vec![0.0; hsz];
        let mut c = vec![0.0; hsz];
        for t in 0..mask {
            let mut z = Vec::with_capacity(isz + hsz);
            for r in 0..isz {
                z.push(embedded.at(r, t));
            }
            z.extend_from_slice(&h);
            let gate = |w: &Parameter, b: &Parameter, k: usize| {
                let mut s = b.value.data()[k];
                for j in 0..z.len() {
                    s += w.value.at(k, j) * z[j];
                }
                s
            };
            let mut new_h = vec![0.0; hsz];
            for k in 0..hsz {
                let i = sigmoid(gate(&p.input_w, &p.input_b, k));
                let f = sigmoid(gate(&p.forget_w, &p.forget_b, k));
                let o = sigmoid(gate(&p.output_w, &p.output_b, k));
                let g = gate(&p.cell_w, &p.cell_b, k).tanh();
                c[k] = f * c[k] + i * g;
                new_h[k] = o * c[k].tanh();
            }
            h = new_h;
        }
        h
    }

    fn zeroed(mut p: LstmParams) -> LstmParams {
        for q in p.parameters_mut() {
            q.value.fill(0.0);
        }
        p
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = zeroed(LstmParams::new("l", 2, 3, 0.08, &mut rng));
        let e = Tensor::matrix(2, 4, vec![1.0, -2.0, 3.0, 0.5, 0.7, 0.1, -0.4, 2.0]).unwrap();
        let h = lstm_encode(&e, &p, 4).unwrap();
        assert_eq!(h.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_mask_gives_zero_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = LstmParams::new("l", 2, 3, 0.5, &mut rng);
        let e = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(lstm_encode(&e, &p, 0).unwrap().data(), &[0.0; 3]);
        assert!(lstm_encode(&e, &p, 3).is_err());
    }

    #[test]
    fn matches_reference_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut p = LstmParams::new("l", 2, 3, 0.9, &mut rng);
            for q in p.parameters_mut() {
                for v in q.value.data_mut() {
                    *v = rng.gen_range(-1.0..1.0);
                }
            }
            let data: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let e = Tensor::matrix(2, 4, data).unwrap();
            for mask in 0..=4 {
                let got = lstm_encode(&e, &p, mask).unwrap();
                let want = reference(&e, &p, mask);
                for (a, b) in got.data().iter().zip(&want) {
                    assert!((a - b).abs() <= 1e-14, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = LstmParams::new("l", 4, 5, 0.08, &mut rng);
        assert!(p.forget_b.value.data().iter().all(|&v| v == 1.0));
        assert!(p.input_b.value.data().iter().all(|&v| v == 0.0));
        assert_eq!(p.input_w.value.shape(), &[5, 9]);
        assert_eq!(p.parameters().len(), 8);
    }
}
