use std::collections::{BTreeMap, HashMap};
use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use crate::error::{invalid_arg, Result};
use crate::rng::{self, ChaCha8Rng};
use crate::tensor::{five_point, init_uniform, relative_error, Tape, Tensor, Var};

/// Named parameter table. Names are hierarchical, dot-separated
/// (`encoder.fwd.update.W`), which is what freezing and checkpoint subsetting
/// key on.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Arc<Tensor>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), Arc::new(value));
    }

    /// Inserts a `U[-range, range)` tensor whose seed is derived from `seed`
    /// and the parameter name.
    pub fn init_uniform(&mut self, name: &str, shape: &[usize], range: f64, seed: u64) -> Result<()> {
        let t = init_uniform(shape, -range, range, rng::derive_seed(seed, name))?;
        self.insert(name, t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).map(|t| t.as_ref())
    }

    pub fn get_shared(&self, name: &str) -> Option<Arc<Tensor>> {
        self.params.get(name).cloned()
    }

    /// Mutable access; copies the tensor first if a tape still shares it.
    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name).map(Arc::make_mut)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v.as_ref()))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.params.values().map(|t| t.numel()).sum()
    }

    /// Parameters whose name starts with `prefix`, with the prefix removed.
    pub fn extract(&self, prefix: &str) -> ParamStore {
        let params = self
            .params
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|rest| (rest.to_string(), v.clone())))
            .collect();
        ParamStore { params }
    }

    /// Copies every parameter of `other` in under `prefix`.
    pub fn merge(&mut self, prefix: &str, other: &ParamStore) {
        for (k, v) in &other.params {
            self.params.insert(format!("{prefix}{k}"), v.clone());
        }
    }

    /// Little-endian bytes of every parameter under `prefix`, in name order.
    /// Used to verify that frozen parameters are untouched.
    pub fn bytes_with_prefix(&self, prefix: &str) -> Vec<u8> {
        let mut out = Vec::new();
        for (k, v) in self.params.range(prefix.to_string()..) {
            if !k.starts_with(prefix) {
                break;
            }
            out.extend_from_slice(k.as_bytes());
            for x in v.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }
}

/// Which bound parameters receive gradients.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Trainable {
    /// Inference: nothing is recorded for backpropagation.
    #[default]
    None,
    All,
    /// Everything except names starting with one of these prefixes.
    AllExcept(Vec<String>),
}

impl Trainable {
    pub fn allows(&self, name: &str) -> bool {
        match self {
            Trainable::None => false,
            Trainable::All => true,
            Trainable::AllExcept(frozen) => !frozen.iter().any(|p| name.starts_with(p.as_str())),
        }
    }
}

/// A [`Tape`] bound to a [`ParamStore`]: parameters are pulled onto the tape
/// lazily by name, once per graph, and their gradients can be collected by
/// name after [`Tape::backward`].
///
/// Also carries the train/eval switch and the generator used for dropout.
pub struct Graph<'s> {
    tape: Tape,
    store: &'s ParamStore,
    bound: HashMap<String, Var>,
    trainable: Trainable,
    training: bool,
    rng: ChaCha8Rng,
}

impl<'s> Graph<'s> {
    /// Inference graph: no gradients, dropout disabled.
    pub fn eval(store: &'s ParamStore) -> Self {
        Self::new(store, Trainable::None, false, 0)
    }

    pub fn new(store: &'s ParamStore, trainable: Trainable, training: bool, seed: u64) -> Self {
        Graph {
            tape: Tape::new(),
            store,
            bound: HashMap::new(),
            trainable,
            training,
            rng: rng::seeded(seed),
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let value = self
            .store
            .get_shared(name)
            .ok_or_else(|| invalid_arg!("unknown parameter `{name}`"))?;
        let v = self.tape.leaf_shared(value, self.trainable.allows(name));
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    /// Gradients of every bound trainable parameter reached by backward.
    pub fn gradients(&self) -> BTreeMap<String, Tensor> {
        self.bound
            .iter()
            .filter_map(|(k, &v)| self.tape.grad(v).map(|g| (k.clone(), g.clone())))
            .collect()
    }

    pub fn into_tape(self) -> Tape {
        self.tape
    }
}

impl Deref for Graph<'_> {
    type Target = Tape;
    fn deref(&self) -> &Tape {
        &self.tape
    }
}

impl DerefMut for Graph<'_> {
    fn deref_mut(&mut self) -> &mut Tape {
        &mut self.tape
    }
}

/// Finite-difference check ([`five_point`]) of every trainable parameter a
/// scalar loss depends on.
///
/// `build` constructs the loss on a fresh graph; it is evaluated once with
/// gradients and then twice per probed element. At most `max_per_param`
/// elements of each parameter are probed (chosen by `seed`) to keep large
/// layers affordable. Returns the maximum relative error.
pub fn grad_check_params<F>(
    store: &ParamStore,
    trainable: &Trainable,
    build: F,
    eps: f64,
    max_per_param: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    use rand::seq::index::sample;

    let mut g = Graph::new(store, trainable.clone(), false, 0);
    let loss = build(&mut g)?;
    g.backward(loss)?;
    let grads = g.gradients();

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::eval(s);
        let out = build(&mut g)?;
        Ok(g.value(out).data()[0])
    };

    let mut rng = rng::seeded(seed);
    let mut worst = 0.0f64;
    let mut probe = store.clone();
    for (name, value) in store.iter() {
        if !trainable.allows(name) {
            continue;
        }
        let n = value.numel();
        let picks: Vec<usize> = if n <= max_per_param {
            (0..n).collect()
        } else {
            sample(&mut rng, n, max_per_param).into_vec()
        };
        for i in picks {
            let orig = value.data()[i];
            let numeric = five_point(
                |d| {
                    probe.get_mut(name).expect("cloned store").data_mut()[i] = orig + d;
                    eval(&probe)
                },
                eps,
            )?;
            probe.get_mut(name).expect("cloned store").data_mut()[i] = orig;
            let analytic = grads.get(name).map_or(0.0, |g| g.data()[i]);
            worst = worst.max(relative_error(analytic, numeric));
        }
    }
    Ok(worst)
}
