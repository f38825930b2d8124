use crate::error::Result;
use crate::tensor::{Adam, Graph, ParamId, ParamSet, Rng, Tensor, Var};

/// A one-hidden-layer feedforward classifier trained on frozen features:
/// `W2 relu(W1 x + z1) + z2`, with its own parameters.
#[derive(Clone, Debug)]
pub struct ProbeHead {
    pub params: ParamSet,
    w1: ParamId,
    z1: ParamId,
    w2: ParamId,
    z2: ParamId,
}

impl ProbeHead {
    pub fn new(input: usize, hidden: usize, outputs: usize, rng: &mut Rng) -> Result<Self> {
        let mut params = ParamSet::new();
        let w1 = params.add_uniform("probe.w1", &[hidden, input], (6.0 / (hidden + input) as f64).sqrt(), rng)?;
        let z1 = params.add_zeros("probe.z1", &[hidden])?;
        let w2 = params.add_uniform("probe.w2", &[outputs, hidden], (6.0 / (outputs + hidden) as f64).sqrt(), rng)?;
        let z2 = params.add_zeros("probe.z2", &[outputs])?;
        Ok(ProbeHead { params, w1, z1, w2, z2 })
    }

    /// Scores for the rows of `x`, one row of outputs each.
    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let (w1, z1, w2, z2) = (g.param(self.w1), g.param(self.z1), g.param(self.w2), g.param(self.z2));
        let h = g.matmul_nt(x, w1)?;
        let h = g.add_bias(h, z1)?;
        let h = g.relu(h);
        let s = g.matmul_nt(h, w2)?;
        g.add_bias(s, z2)
    }

    pub fn scores(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new(&self.params);
        let xv = g.constant(x.clone());
        let s = self.forward(&mut g, xv)?;
        Ok(g.value(s).clone())
    }

    /// One Adam step on the loss built by `loss` from the batch scores;
    /// `loss` returns `None` when nothing is violated. Returns the loss value.
    pub fn step(
        &mut self,
        x: &Tensor,
        adam: &Adam,
        loss: impl FnOnce(&mut Graph<'_>, Var) -> Result<Option<Var>>,
    ) -> Result<f64> {
        let grads = {
            let mut g = Graph::new(&self.params);
            let xv = g.constant(x.clone());
            let s = self.forward(&mut g, xv)?;
            match loss(&mut g, s)? {
                Some(l) => {
                    let value = g.value(l).item();
                    Some((g.backward(l)?, value))
                }
                None => None,
            }
        };
        match grads {
            Some((grads, value)) => {
                self.params.accumulate(&grads);
                adam.step(&mut self.params)?;
                Ok(value)
            }
            None => Ok(0.0),
        }
    }
}

/// Multiclass margin loss `sum_r max(0, 1 + max_{y != y_r} s_ry - s_r,y_r)`
/// over the rows of a score matrix. Returns `None` when every row meets the
/// margin.
pub fn multiclass_margin(g: &mut Graph<'_>, scores: Var, targets: &[usize]) -> Result<Option<Var>> {
    let t = g.value(scores);
    let classes = t.cols();
    let mut entries = Vec::new();
    let mut active = 0usize;
    for (r, &y) in targets.iter().enumerate() {
        let row = t.row(r);
        let rival = (0..classes)
            .filter(|&c| c != y)
            .fold(None, |best: Option<usize>, c| match best {
                Some(b) if row[b] >= row[c] => Some(b),
                _ => Some(c),
            });
        let Some(rival) = rival else { continue };
        if 1.0 + row[rival] - row[y] > 0.0 {
            entries.push((r * classes + rival, 1.0));
            entries.push((r * classes + y, -1.0));
            active += 1;
        }
    }
    if active == 0 {
        return Ok(None);
    }
    let sum = g.gather_sum(scores, entries)?;
    Ok(Some(g.add_scalar(sum, active as f64)))
}

/// Binary hinge loss `sum_r max(0, 1 - y_r z_r)` with `y_r` in {-1, +1}
/// over a one-column score matrix.
pub fn binary_hinge(g: &mut Graph<'_>, scores: Var, targets: &[bool]) -> Result<Option<Var>> {
    let t = g.value(scores);
    let mut entries = Vec::new();
    for (r, &positive) in targets.iter().enumerate() {
        let y = if positive { 1.0 } else { -1.0 };
        if 1.0 - y * t.data()[r] > 0.0 {
            entries.push((r, -y));
        }
    }
    if entries.is_empty() {
        return Ok(None);
    }
    let active = entries.len();
    let sum = g.gather_sum(scores, entries)?;
    Ok(Some(g.add_scalar(sum, active as f64)))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
