use std::collections::HashMap;
use std::sync::Arc;

use super::tensor::Tensor;
use super::NumericError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
struct Entry {
    name: String,
    value: Arc<Tensor>,
    frozen: bool,
    m: Tensor,
    v: Tensor,
}

/// Named trainable arrays plus their Adam moments.
///
/// Insertion order is stable and defines the checkpoint order.
#[derive(Clone, Debug, Default)]
pub struct ParameterStore {
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
    step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        name: impl Into<String>,
        value: Tensor,
        frozen: bool,
    ) -> Result<ParamId, NumericError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NumericError::DuplicateParam(name));
        }
        let (m, v) = if frozen {
            (Tensor::zeros(&[0]), Tensor::zeros(&[0]))
        } else {
            (Tensor::zeros(value.shape()), Tensor::zeros(value.shape()))
        };
        self.entries.push(Entry {
            name: name.clone(),
            value: Arc::new(value),
            frozen,
            m,
            v,
        });
        self.index.insert(name, self.entries.len() - 1);
        Ok(ParamId(self.entries.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub(crate) fn value_arc(&self, id: ParamId) -> Arc<Tensor> {
        Arc::clone(&self.entries[id.0].value)
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.entries[id.0].frozen
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Replaces a value; the shape is fixed at insertion.
    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<(), NumericError> {
        let e = &mut self.entries[id.0];
        if e.value.shape() != value.shape() {
            return Err(NumericError::Shape {
                op: "set_value",
                left: e.value.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        e.value = Arc::new(value);
        Ok(())
    }

    pub(crate) fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        Arc::make_mut(&mut self.entries[id.0].value)
    }

    pub fn num_elements(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Values and names only; two stores are equal when these match bit for bit.
    pub fn same_values(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| {
                a.name == b.name
                    && a.frozen == b.frozen
                    && a.value.shape() == b.value.shape()
                    && a.value
                        .data()
                        .iter()
                        .zip(b.value.data())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

/// Per-parameter gradient accumulator aligned with a [`ParameterStore`].
#[derive(Clone, Debug)]
pub struct Gradients {
    slots: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn zeros_like(store: &ParameterStore) -> Self {
        Self {
            slots: vec![None; store.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.slots.get(id.0).and_then(Option::as_ref)
    }

    pub(crate) fn add(&mut self, id: ParamId, g: &Tensor) {
        match &mut self.slots[id.0] {
            Some(t) => t.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (i, g) in other.slots.iter().enumerate() {
            if let Some(g) = g {
                self.add(ParamId(i), g);
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for t in self.slots.iter_mut().flatten() {
            for x in t.data_mut() {
                *x *= c;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.slots
            .iter()
            .flatten()
            .fold(0.0, |m, t| m.max(t.max_abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. Frozen parameters and parameters without a
/// gradient slot are left untouched.
pub fn adam_step(
    store: &mut ParameterStore,
    grads: &Gradients,
    cfg: &AdamConfig,
) -> Result<(), NumericError> {
    store.step += 1;
    let t = store.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, slot) in grads.slots.iter().enumerate() {
        let Some(g) = slot else { continue };
        let e = &mut store.entries[i];
        if e.frozen {
            continue;
        }
        if g.len() != e.value.len() {
            return Err(NumericError::Shape {
                op: "adam_step",
                left: e.value.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
        let value = Arc::make_mut(&mut e.value);
        let it = value
            .data_mut()
            .iter_mut()
            .zip(e.m.data_mut().iter_mut())
            .zip(e.v.data_mut().iter_mut())
            .zip(g.data());
        for (((w, m), v), &gi) in it {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *w -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParameterStore::new();
        s.insert("w", Tensor::zeros(&[1]), false).unwrap();
        assert!(s.insert("w", Tensor::zeros(&[1]), false).is_err());
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut s = ParameterStore::new();
        let id = s.insert("w", Tensor::filled(&[2, 2], 0.3), false).unwrap();
        let mut g = Gradients::zeros_like(&s);
        g.add(id, &Tensor::zeros(&[2, 2]));
        adam_step(&mut s, &g, &AdamConfig::default()).unwrap();
        assert!(s.value(id).data().iter().all(|&x| x == 0.3));
    }

    #[test]
    fn adam_first_step_by_hand() {
        let mut s = ParameterStore::new();
        let id = s.insert("w", Tensor::scalar(0.0), false).unwrap();
        let mut g = Gradients::zeros_like(&s);
        g.add(id, &Tensor::scalar(1.0));
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        adam_step(&mut s, &g, &cfg).unwrap();
        // m̂ = 1, v̂ = 1 after bias correction.
        let expected = -0.1 * (1.0 / (1.0f64.sqrt() + 1e-8));
        assert_eq!(s.value(id).item(), expected);
        assert!((s.value(id).item() + 0.1).abs() < 1e-8);
    }

    #[test]
    fn adam_descends_a_quadratic() {
        // f(w) = (w - 3)^2
        let mut s = ParameterStore::new();
        let id = s.insert("w", Tensor::scalar(0.0), false).unwrap();
        let f = |w: f64| (w - 3.0) * (w - 3.0);
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let start = f(s.value(id).item());
        for _ in 0..2 {
            let w = s.value(id).item();
            let mut g = Gradients::zeros_like(&s);
            g.add(id, &Tensor::scalar(2.0 * (w - 3.0)));
            adam_step(&mut s, &g, &cfg).unwrap();
        }
        assert!(f(s.value(id).item()) < start);
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut s = ParameterStore::new();
        let id = s.insert("w", Tensor::zeros(&[2]), false).unwrap();
        let mut g = Gradients::zeros_like(&s);
        g.slots[id.0] = Some(Tensor::zeros(&[3]));
        assert!(adam_step(&mut s, &g, &AdamConfig::default()).is_err());
    }
}
