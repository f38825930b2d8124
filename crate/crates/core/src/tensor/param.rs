use std::collections::HashMap;
use std::hash::Hasher;
use std::io::{BufRead, Write};

use super::{Gradients, Rng, Tensor};
use crate::error::{Error, Result};

const CONTAINER_MAGIC: &str = "SPANPARSE-PARAMS 1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named trainable tensor with its Adam state.
#[derive(Clone, Debug)]
pub struct Parameter {
    name: String,
    value: Tensor,
    grad: Option<Tensor>,
    pub(crate) first_moment: Tensor,
    pub(crate) second_moment: Tensor,
    pub(crate) step: u64,
}

impl Parameter {
    fn new(name: String, value: Tensor) -> Self {
        let first_moment = Tensor::zeros(value.shape());
        let second_moment = Tensor::zeros(value.shape());
        Parameter {
            name,
            value,
            grad: None,
            first_moment,
            second_moment,
            step: 0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn grad(&self) -> Option<&Tensor> {
        self.grad.as_ref()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Tensor, Option<&Tensor>, &mut Tensor, &mut Tensor) {
        (
            &mut self.value,
            self.grad.as_ref(),
            &mut self.first_moment,
            &mut self.second_moment,
        )
    }

    pub(crate) fn take_grad(&mut self) -> Option<Tensor> {
        self.grad.take()
    }
}

/// The trainable state of a model: an ordered list of uniquely named
/// parameters.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if name.is_empty() || name.contains(['\t', '\n']) {
            return Err(Error::usage(format!("invalid parameter name {:?}", name)));
        }
        if self.by_name.contains_key(name) {
            return Err(Error::usage(format!("duplicate parameter `{}`", name)));
        }
        let id = ParamId(self.params.len());
        self.params.push(Parameter::new(name.to_string(), value));
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Adds a parameter drawn uniformly from [-bound, bound].
    pub fn add_uniform(&mut self, name: &str, shape: &[usize], bound: f64, rng: &mut Rng) -> Result<ParamId> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform_range(-bound, bound)).collect();
        self.add(name, Tensor::new(shape, data)?)
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    /// Total number of scalar values across all parameters.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Adds the parameter gradients of a backward pass into each parameter's
    /// gradient accumulator.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (idx, g) in grads.param_grads() {
            let p = &mut self.params[idx];
            match &mut p.grad {
                Some(acc) => {
                    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
                None => p.grad = Some(g.clone()),
            }
        }
    }

    pub fn has_grads(&self) -> bool {
        self.params.iter().any(|p| p.grad.is_some())
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Copies of every parameter value, in order.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, values: &[Tensor]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::usage("snapshot does not match parameter set"));
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(Error::shape(format!("snapshot shape mismatch for `{}`", p.name)));
            }
            p.value = v.clone();
        }
        Ok(())
    }

    /// A hash over names, shapes and value bits; equal checksums mean
    /// bit-identical parameters.
    pub fn checksum(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for p in &self.params {
            h.write(p.name.as_bytes());
            for &d in p.value.shape() {
                h.write_usize(d);
            }
            for v in p.value.data() {
                h.write_u64(v.to_bits());
            }
        }
        h.finish()
    }

    /// Writes the manifest (name and shape per line) followed by every value
    /// as a little-endian `f64`, parameters in manifest order.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", CONTAINER_MAGIC)?;
        writeln!(w, "{}", self.params.len())?;
        for p in &self.params {
            writeln!(w, "{}\t{}", p.name, format_shape(p.value.shape()))?;
        }
        for p in &self.params {
            let mut buf = Vec::with_capacity(p.value.len() * 8);
            for v in p.value.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<ParamSet> {
        let magic = read_line(&mut r, "magic")?;
        if magic != CONTAINER_MAGIC {
            return Err(Error::serialization("magic", format!("unexpected header {:?}", magic)));
        }
        let count: usize = read_line(&mut r, "count")?
            .parse()
            .map_err(|_| Error::serialization("count", "not an integer"))?;
        let mut manifest = Vec::with_capacity(count);
        for i in 0..count {
            let line = read_line(&mut r, &format!("manifest[{}]", i))?;
            let (name, shape) = line
                .split_once('\t')
                .ok_or_else(|| Error::serialization(format!("manifest[{}]", i), "missing shape"))?;
            manifest.push((name.to_string(), parse_shape(shape, name)?));
        }
        let mut set = ParamSet::new();
        for (name, shape) in manifest {
            let n: usize = shape.iter().product();
            let mut bytes = vec![0u8; n * 8];
            r.read_exact(&mut bytes).map_err(|e| {
                Error::serialization(name.clone(), format!("truncated value array ({} values expected): {}", n, e))
            })?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let value = Tensor::new(&shape, data).map_err(|e| Error::serialization(name.clone(), e.to_string()))?;
            set.add(&name, value)
                .map_err(|e| Error::serialization(name.clone(), e.to_string()))?;
        }
        Ok(set)
    }
}

fn format_shape(shape: &[usize]) -> String {
    if shape.is_empty() {
        "-".to_string()
    } else {
        shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
    }
}

fn parse_shape(s: &str, field: &str) -> Result<Vec<usize>> {
    if s == "-" {
        return Ok(Vec::new());
    }
    s.split('x')
        .map(|d| {
            d.parse::<usize>()
                .map_err(|_| Error::serialization(field, format!("bad shape {:?}", s)))
        })
        .collect()
}

fn read_line<R: BufRead>(r: &mut R, field: &str) -> Result<String> {
    let mut line = String::new();
    let n = r
        .read_line(&mut line)
        .map_err(|e| Error::serialization(field, e.to_string()))?;
    if n == 0 {
        return Err(Error::serialization(field, "unexpected end of file"));
    }
    Ok(line.trim_end_matches(['\n', '\r']).to_string())
}
