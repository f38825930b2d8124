use super::{Graph, ParamId, ParamSet, Rng, Tensor, Var};
use crate::error::{Error, Result};

/// Parameters of one LSTM cell: input weights `4H × in`, recurrent weights
/// `4H × H` and a `4H` bias, gates ordered (input, forget, candidate, output).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmWeights {
    pub wx: ParamId,
    pub wh: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmWeights {
    /// Weights uniform in ±√(3/fan-in); forget-gate bias 1, other biases 0.
    pub fn new(params: &mut ParamSet, prefix: &str, input_dim: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        let wx = params.add_uniform(&format!("{prefix}.wx"), &[4 * hidden, input_dim], (3.0 / input_dim as f64).sqrt(), rng)?;
        let wh = params.add_uniform(&format!("{prefix}.wh"), &[4 * hidden, hidden], (3.0 / hidden as f64).sqrt(), rng)?;
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
        let bias = params.add(&format!("{prefix}.bias"), Tensor::vector(b))?;
        Ok(LstmWeights {
            wx,
            wh,
            bias,
            input_dim,
            hidden,
        })
    }

    /// Looks the weights up by name in an existing set.
    pub fn find(params: &ParamSet, prefix: &str) -> Result<Self> {
        let get = |suffix: &str| {
            params
                .id(&format!("{prefix}.{suffix}"))
                .ok_or_else(|| Error::serialization(format!("{prefix}.{suffix}"), "missing parameter"))
        };
        let (wx, wh, bias) = (get("wx")?, get("wh")?, get("bias")?);
        let hidden = params.value(wh).cols();
        let input_dim = params.value(wx).cols();
        Ok(LstmWeights {
            wx,
            wh,
            bias,
            input_dim,
            hidden,
        })
    }

    /// Runs the cell over the rows of a `T × in` matrix, returning the `T × H`
    /// hidden states. See [`Graph::lstm_sequence`] for the conventions.
    pub fn run(
        &self,
        g: &mut Graph<'_>,
        inputs: Var,
        initial_cell: Option<Var>,
        recurrent_mask: Option<Vec<f64>>,
        reverse: bool,
    ) -> Result<Var> {
        let (wx, wh, bias) = (g.param(self.wx), g.param(self.wh), g.param(self.bias));
        g.lstm_sequence(inputs, wx, wh, bias, initial_cell, recurrent_mask, reverse)
    }
}

/// One LSTM cell update built from primitive tape operations:
/// `c = f∘c_prev + i∘g`, `h = o∘tanh(c)`.
pub fn lstm_step(g: &mut Graph<'_>, w: &LstmWeights, x: Var, h_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
    let h = w.hidden;
    if g.shape(x) != [w.input_dim] || g.shape(h_prev) != [h] || g.shape(c_prev) != [h] {
        return Err(Error::shape(format!(
            "lstm_step: x {:?}, h {:?}, c {:?} for input {} hidden {}",
            g.shape(x),
            g.shape(h_prev),
            g.shape(c_prev),
            w.input_dim,
            h
        )));
    }
    let (wx, wh, bias) = (g.param(w.wx), g.param(w.wh), g.param(w.bias));
    let ax = g.matmul(wx, x)?;
    let ah = g.matmul(wh, h_prev)?;
    let a = g.add(ax, ah)?;
    let a = g.add(a, bias)?;
    let ai = g.slice(a, 0, h)?;
    let af = g.slice(a, h, h)?;
    let ag = g.slice(a, 2 * h, h)?;
    let ao = g.slice(a, 3 * h, h)?;
    let i = g.sigmoid(ai);
    let f = g.sigmoid(af);
    let cand = g.tanh(ag);
    let o = g.sigmoid(ao);
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h_new = g.mul(o, tc)?;
    Ok((h_new, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights(params: &mut ParamSet, input: usize, hidden: usize, seed: u64) -> LstmWeights {
        let mut rng = Rng::new(seed);
        LstmWeights::new(params, "cell", input, hidden, &mut rng).unwrap()
    }

    #[test]
    fn zero_everything_gives_zero_state() {
        let mut params = ParamSet::new();
        let w = weights(&mut params, 3, 4, 1);
        for id in [w.wx, w.wh, w.bias] {
            params.value_mut(id).data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        let mut g = Graph::new(&params);
        let x = g.vector(vec![0.0; 3]);
        let h0 = g.vector(vec![0.0; 4]);
        let c0 = g.vector(vec![0.0; 4]);
        let (h, c) = lstm_step(&mut g, &w, x, h0, c0).unwrap();
        assert!(g.value(h).data().iter().all(|&v| v == 0.0));
        assert!(g.value(c).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_gates_keep_cell() {
        let mut params = ParamSet::new();
        let w = weights(&mut params, 2, 3, 2);
        let h = 3;
        {
            let b = params.value_mut(w.bias).data_mut();
            b[..h].iter_mut().for_each(|x| *x = -1e3);
            b[h..2 * h].iter_mut().for_each(|x| *x = 1e3);
        }
        let mut g = Graph::new(&params);
        let x = g.vector(vec![0.3, -0.2]);
        let h0 = g.vector(vec![0.1, 0.2, -0.1]);
        let c0 = g.vector(vec![0.5, -0.7, 1.5]);
        let (_, c) = lstm_step(&mut g, &w, x, h0, c0).unwrap();
        assert_eq!(g.value(c).data(), &[0.5, -0.7, 1.5]);
    }

    #[test]
    fn step_rejects_wrong_shapes() {
        let mut params = ParamSet::new();
        let w = weights(&mut params, 2, 3, 2);
        let mut g = Graph::new(&params);
        let x = g.vector(vec![0.0; 5]);
        let h0 = g.vector(vec![0.0; 3]);
        let c0 = g.vector(vec![0.0; 3]);
        assert!(matches!(lstm_step(&mut g, &w, x, h0, c0), Err(Error::Shape(_))));
    }

    #[test]
    fn fused_sequence_matches_stepwise_cell() {
        let mut params = ParamSet::new();
        let w = weights(&mut params, 3, 4, 5);
        let mut rng = Rng::new(9);
        let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).collect();
        let c_init: Vec<f64> = (0..4).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        for reverse in [false, true] {
            let mut g = Graph::new(&params);
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let xs = g.constant(Tensor::matrix(5, 3, flat).unwrap());
            let c0 = g.vector(c_init.clone());
            let out = w.run(&mut g, xs, Some(c0), None, reverse).unwrap();
            let fused = g.value(out).clone();

            let mut h = g.vector(vec![0.0; 4]);
            let mut c = g.vector(c_init.clone());
            let order: Vec<usize> = if reverse { (0..5).rev().collect() } else { (0..5).collect() };
            for t in order {
                let x = g.vector(rows[t].clone());
                let (h2, c2) = lstm_step(&mut g, &w, x, h, c).unwrap();
                h = h2;
                c = c2;
                for (a, b) in fused.row(t).iter().zip(g.value(h).data()) {
                    assert!((a - b).abs() < 1e-12, "reverse={reverse} t={t}: {a} vs {b}");
                }
            }
        }
    }
}
