use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Row-major `f64` tensor with an optional gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Option<GradBuf>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// First dimension (1 for scalars).
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Product of the trailing dimensions (1 for vectors).
    pub fn cols(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    /// The accumulated gradient as a dense vector (zeros when absent).
    pub fn grad_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        if let Some(g) = &self.grad {
            g.add_into(&mut out, self.cols());
        }
        out
    }
}

/// Gradient storage: dense, or a sparse set of rows for embedding tables.
#[derive(Clone, Debug, PartialEq)]
pub enum GradBuf {
    Dense(Vec<f64>),
    Rows(BTreeMap<usize, Vec<f64>>),
}

impl GradBuf {
    fn add_into(&self, dense: &mut [f64], cols: usize) {
        match self {
            GradBuf::Dense(g) => dense.iter_mut().zip(g).for_each(|(d, x)| *d += x),
            GradBuf::Rows(rows) => {
                for (&r, g) in rows {
                    dense[r * cols..(r + 1) * cols]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(d, x)| *d += x);
                }
            }
        }
    }

    pub(crate) fn dense_mut(slot: &mut Option<GradBuf>, len: usize, cols: usize) -> &mut Vec<f64> {
        let dense = match slot.take() {
            Some(GradBuf::Dense(g)) => g,
            Some(rows @ GradBuf::Rows(_)) => {
                let mut d = vec![0.0; len];
                rows.add_into(&mut d, cols);
                d
            }
            None => vec![0.0; len],
        };
        *slot = Some(GradBuf::Dense(dense));
        match slot {
            Some(GradBuf::Dense(g)) => g,
            _ => unreachable!(),
        }
    }

    pub(crate) fn row_mut(slot: &mut Option<GradBuf>, row: usize, cols: usize) -> &mut [f64] {
        if slot.is_none() {
            *slot = Some(GradBuf::Rows(BTreeMap::new()));
        }
        match slot.as_mut().expect("just set") {
            GradBuf::Dense(g) => &mut g[row * cols..(row + 1) * cols],
            GradBuf::Rows(rows) => rows.entry(row).or_insert_with(|| vec![0.0; cols]),
        }
    }

    fn merge(slot: &mut Option<GradBuf>, other: &GradBuf, len: usize, cols: usize) {
        match (slot.as_mut(), other) {
            (Some(GradBuf::Rows(mine)), GradBuf::Rows(theirs)) => {
                for (&r, g) in theirs {
                    match mine.entry(r) {
                        Entry::Vacant(e) => {
                            e.insert(g.clone());
                        }
                        Entry::Occupied(mut e) => {
                            e.get_mut().iter_mut().zip(g).for_each(|(d, x)| *d += x)
                        }
                    }
                }
            }
            (None, _) => *slot = Some(other.clone()),
            _ => other.add_into(GradBuf::dense_mut(slot, len, cols), cols),
        }
    }
}

/// Handle to a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Per-parameter gradients produced by one backward pass.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    pub(crate) bufs: Vec<Option<GradBuf>>,
}

impl Gradients {
    pub(crate) fn new(n: usize) -> Self {
        Gradients {
            bufs: vec![None; n],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&GradBuf> {
        self.bufs.get(id.0).and_then(Option::as_ref)
    }

    /// Dense copy of one parameter's gradient.
    pub fn dense(&self, store: &ParamStore, id: ParamId) -> Vec<f64> {
        let t = store.get(id);
        let mut out = vec![0.0; t.len()];
        if let Some(g) = self.get(id) {
            g.add_into(&mut out, t.cols());
        }
        out
    }
}

/// Named parameters. Iteration is sorted by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
    names: Vec<String>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Data(format!("duplicate parameter name '{name}'")));
        }
        let id = ParamId(self.tensors.len());
        self.by_name.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.by_name.values().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.by_name
            .iter()
            .map(|(name, id)| (name.as_str(), &self.tensors[id.0]))
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Adds a backward pass's gradients into the per-tensor accumulators.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (t, g) in self.tensors.iter_mut().zip(&grads.bufs) {
            if let Some(g) = g {
                let (len, cols) = (t.len(), t.cols());
                GradBuf::merge(&mut t.grad, g, len, cols);
            }
        }
    }

    pub fn has_grads(&self) -> bool {
        self.tensors.iter().any(|t| t.grad.is_some())
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            t.grad = None;
        }
    }

    /// Plain SGD: `θ ← θ − lr·∇θ` for every parameter holding a gradient,
    /// then clears all gradients.
    pub fn sgd_step(&mut self, lr: f64) -> Result<()> {
        if !self.has_grads() {
            return Err(Error::MissingGradients);
        }
        for t in &mut self.tensors {
            let cols = t.cols();
            match t.grad.take() {
                Some(GradBuf::Dense(g)) => {
                    t.data.iter_mut().zip(&g).for_each(|(w, d)| *w -= lr * d);
                }
                Some(GradBuf::Rows(rows)) => {
                    for (r, g) in rows {
                        t.data[r * cols..(r + 1) * cols]
                            .iter_mut()
                            .zip(&g)
                            .for_each(|(w, d)| *w -= lr * d);
                    }
                }
                None => {}
            }
        }
        Ok(())
    }

    /// Makes sure every value is finite, naming the first offending tensor.
    pub fn check_finite(&self) -> Result<()> {
        for (name, t) in self.iter() {
            if t.data.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    param: name.to_owned(),
                });
            }
        }
        Ok(())
    }
}

/// `initial · decay^⌊batches_done / every⌋`.
pub fn lr_schedule(initial: f64, decay: f64, every: usize, batches_done: usize) -> f64 {
    let every = every.max(1);
    initial * decay.powi((batches_done / every) as i32)
}
