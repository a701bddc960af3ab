//! Named parameters, Xavier initialization, Adam, and value snapshots.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// Xavier/Glorot uniform initialization: values drawn from
/// `U[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`.
///
/// Fan-in and fan-out are the first and last extents; a rank-1 shape is
/// treated as a single-input map (fan_in = 1, fan_out = n). Deterministic
/// per seed.
pub fn xavier_init(shape: &[usize], seed: u64) -> Result<Tensor> {
    if shape.is_empty() || shape.iter().any(|&e| e == 0) {
        return Err(Error::Dimension(format!(
            "xavier initialization needs non-empty extents, got {shape:?}"
        )));
    }
    let (fan_in, fan_out) = if shape.len() == 1 {
        (1, shape[0])
    } else {
        (shape[0], shape[shape.len() - 1])
    };
    let bound = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..shape.iter().product())
        .map(|_| rng.random::<f64>() * 2.0 * bound - bound)
        .collect();
    Tensor::from_vec(shape, data)
}

/// Adam hyperparameters; defaults are the standard ones.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Parameter {
    value: Tensor,
    first_moment: Tensor,
    second_moment: Tensor,
    step: u64,
}

/// Ordered map of named trainable tensors with per-parameter Adam state.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    params: BTreeMap<String, Parameter>,
}

/// A deep copy of parameter values only (no optimizer state).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSnapshot {
    pub values: BTreeMap<String, Tensor>,
}

impl ParamSnapshot {
    /// Total payload size in bytes (8 bytes per stored value).
    pub fn byte_size(&self) -> usize {
        self.values.values().map(|t| t.len() * 8).sum()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a parameter; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::Consistency(format!("duplicate parameter {name}")));
        }
        let shape = value.shape().to_vec();
        self.params.insert(
            name,
            Parameter {
                value,
                first_moment: Tensor::zeros(&shape),
                second_moment: Tensor::zeros(&shape),
                step: 0,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::Consistency(format!("unknown parameter {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    /// Parameter names in sorted order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, p)| (k.as_str(), &p.value))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// One bias-corrected Adam update over every parameter. `grads` must
    /// contain exactly the stored names with matching shapes.
    pub fn adam_step(&mut self, grads: &BTreeMap<String, Tensor>, hp: &AdamParams) -> Result<()> {
        for name in grads.keys() {
            if !self.params.contains_key(name) {
                return Err(Error::Consistency(format!(
                    "gradient for unknown parameter {name}"
                )));
            }
        }
        for (name, param) in self.params.iter_mut() {
            let grad = grads
                .get(name)
                .ok_or_else(|| Error::Consistency(format!("missing gradient for {name}")))?;
            if !grad.same_shape(&param.value) {
                return Err(Error::Consistency(format!(
                    "gradient shape {:?} does not match parameter {name} {:?}",
                    grad.shape(),
                    param.value.shape()
                )));
            }
            param.step += 1;
            let t = param.step;
            let bc1 = 1.0 - math::powf(hp.beta1, t as f64);
            let bc2 = 1.0 - math::powf(hp.beta2, t as f64);
            let m = param.first_moment.data_mut();
            let v = param.second_moment.data_mut();
            let p = param.value.data_mut();
            for ((pv, mv), (vv, &gv)) in p
                .iter_mut()
                .zip(m.iter_mut())
                .zip(v.iter_mut().zip(grad.data()))
            {
                *mv = hp.beta1 * *mv + (1.0 - hp.beta1) * gv;
                *vv = hp.beta2 * *vv + (1.0 - hp.beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= hp.lr * m_hat / (math::sqrt(v_hat) + hp.eps);
            }
            if !param.value.all_finite() {
                return Err(Error::Numeric(format!(
                    "parameter {name} became non-finite during the Adam update"
                )));
            }
        }
        Ok(())
    }

    /// Zero all Adam moments and step counts.
    pub fn reset_moments(&mut self) {
        for param in self.params.values_mut() {
            param.first_moment = Tensor::zeros(param.value.shape());
            param.second_moment = Tensor::zeros(param.value.shape());
            param.step = 0;
        }
    }

    /// Deep copy of the parameter values (optimizer state excluded).
    pub fn snapshot(&self) -> ParamSnapshot {
        ParamSnapshot {
            values: self
                .params
                .iter()
                .map(|(k, p)| (k.clone(), p.value.clone()))
                .collect(),
        }
    }

    /// Restore values from a snapshot taken from an identically shaped
    /// store. Optimizer state is left untouched.
    pub fn load(&mut self, snapshot: &ParamSnapshot) -> Result<()> {
        if snapshot.values.len() != self.params.len() {
            return Err(Error::Consistency(format!(
                "snapshot has {} parameters, store has {}",
                snapshot.values.len(),
                self.params.len()
            )));
        }
        for (name, value) in &snapshot.values {
            let param = self
                .params
                .get_mut(name)
                .ok_or_else(|| Error::Consistency(format!("snapshot parameter {name} not in store")))?;
            if !value.same_shape(&param.value) {
                return Err(Error::Consistency(format!(
                    "snapshot shape {:?} does not match parameter {name} {:?}",
                    value.shape(),
                    param.value.shape()
                )));
            }
            param.value = value.clone();
        }
        Ok(())
    }

    /// Replace values from a name->tensor map built elsewhere (checkpoint
    /// loading); shapes must match exactly.
    pub fn load_values(&mut self, values: &BTreeMap<String, Tensor>) -> Result<()> {
        self.load(&ParamSnapshot {
            values: values.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    /// Scalar Adam reference, written independently of the store code.
    struct ScalarAdamOracle {
        m: f64,
        v: f64,
        t: u32,
    }

    impl ScalarAdamOracle {
        fn new() -> Self {
            ScalarAdamOracle { m: 0.0, v: 0.0, t: 0 }
        }

        fn step(&mut self, p: f64, g: f64, lr: f64, b1: f64, b2: f64, eps: f64) -> f64 {
            self.t += 1;
            self.m = b1 * self.m + (1.0 - b1) * g;
            self.v = b2 * self.v + (1.0 - b2) * g * g;
            let mh = self.m / (1.0 - b1.powi(self.t as i32));
            let vh = self.v / (1.0 - b2.powi(self.t as i32));
            p - lr * mh / (vh.sqrt() + eps)
        }
    }

    fn single_param_store(value: f64) -> ParameterStore {
        let mut store = ParameterStore::new();
        store.insert("p", Tensor::scalar(value)).unwrap();
        store
    }

    fn grad_map(g: f64) -> BTreeMap<String, Tensor> {
        let mut m = BTreeMap::new();
        m.insert("p".to_string(), Tensor::scalar(g));
        m
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = single_param_store(0.37);
        store.adam_step(&grad_map(0.0), &AdamParams::default()).unwrap();
        assert_eq!(store.get("p").unwrap().item().unwrap(), 0.37);
    }

    #[test]
    fn one_step_matches_scalar_oracle() {
        let hp = AdamParams::default();
        let mut oracle = ScalarAdamOracle::new();
        let expect = oracle.step(0.0, 1.0, hp.lr, hp.beta1, hp.beta2, hp.eps);
        // -lr * mhat / (sqrt(vhat) + eps) with mhat = vhat = 1.
        assert!((expect - (-0.000_999_999_990_000_0)).abs() < 1e-15);

        let mut store = single_param_store(0.0);
        store.adam_step(&grad_map(1.0), &hp).unwrap();
        let got = store.get("p").unwrap().item().unwrap();
        assert!((got - expect).abs() < 1e-15, "got {got}, oracle {expect}");
    }

    #[test]
    fn successive_steps_match_scalar_oracle() {
        let hp = AdamParams::default();
        let mut oracle = ScalarAdamOracle::new();
        let mut p_oracle = 0.5;
        let mut store = single_param_store(0.5);
        for _ in 0..5 {
            p_oracle = oracle.step(p_oracle, 1.0, hp.lr, hp.beta1, hp.beta2, hp.eps);
            store.adam_step(&grad_map(1.0), &hp).unwrap();
        }
        let got = store.get("p").unwrap().item().unwrap();
        assert!((got - p_oracle).abs() < 1e-12);
    }

    #[test]
    fn missing_gradient_key_is_a_consistency_error() {
        let mut store = ParameterStore::new();
        store.insert("a", Tensor::scalar(1.0)).unwrap();
        store.insert("b", Tensor::scalar(2.0)).unwrap();
        let err = store.adam_step(&grad_map(1.0), &AdamParams::default());
        assert!(matches!(err, Err(Error::Consistency(_))));
        // "p" is not a store parameter either.
        let mut only_b = BTreeMap::new();
        only_b.insert("b".to_string(), Tensor::scalar(0.1));
        assert!(matches!(
            store.adam_step(&only_b, &AdamParams::default()),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn snapshot_round_trip_restores_exactly() {
        let mut store = ParameterStore::new();
        store
            .insert("w", Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap())
            .unwrap();
        let snap = store.snapshot();
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor::filled(&[2, 2], 1.0));
        store.adam_step(&grads, &AdamParams::default()).unwrap();
        assert_ne!(store.get("w").unwrap(), snap.values.get("w").unwrap());
        store.load(&snap).unwrap();
        assert_eq!(store.get("w").unwrap(), snap.values.get("w").unwrap());
    }

    #[test]
    fn snapshot_is_isolated_from_later_mutation() {
        let mut store = single_param_store(1.0);
        let snap = store.snapshot();
        store.adam_step(&grad_map(1.0), &AdamParams::default()).unwrap();
        assert_eq!(snap.values.get("p").unwrap().item().unwrap(), 1.0);
    }

    #[test]
    fn empty_store_snapshot_is_empty() {
        let store = ParameterStore::new();
        let snap = store.snapshot();
        assert!(snap.is_empty());
        assert_eq!(snap.byte_size(), 0);
    }

    #[test]
    fn snapshot_byte_size_accounts_every_tensor() {
        let mut store = ParameterStore::new();
        store.insert("a", Tensor::zeros(&[3, 4])).unwrap();
        store.insert("b", Tensor::zeros(&[5])).unwrap();
        let snap = store.snapshot();
        assert_eq!(snap.byte_size(), (12 + 5) * 8);
    }

    #[test]
    fn load_rejects_shape_drift() {
        let mut store = ParameterStore::new();
        store.insert("w", Tensor::zeros(&[2, 2])).unwrap();
        let mut snap = store.snapshot();
        snap.values.insert("w".to_string(), Tensor::zeros(&[2, 3]));
        assert!(matches!(store.load(&snap), Err(Error::Consistency(_))));
    }

    #[test]
    fn xavier_is_deterministic_per_seed() {
        let a = xavier_init(&[4, 5], 99).unwrap();
        let b = xavier_init(&[4, 5], 99).unwrap();
        let c = xavier_init(&[4, 5], 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn xavier_respects_the_bound() {
        let t = xavier_init(&[64, 64], 7).unwrap();
        let bound = (6.0f64 / 128.0).sqrt();
        assert!((bound - 0.21650635094610965).abs() < 1e-15);
        assert!(t.data().iter().all(|v| v.abs() <= bound));
        // The draw actually spans the range rather than collapsing.
        assert!(t.data().iter().any(|v| v.abs() > bound * 0.9));
    }

    #[test]
    fn xavier_sample_mean_is_near_zero() {
        // 10^5 draws; |mean| < 3 sigma / sqrt(N) with sigma = bound/sqrt(3).
        let n = 100_000;
        let t = xavier_init(&[n], 123).unwrap();
        let bound = (6.0f64 / (1 + n) as f64).sqrt();
        let sigma = bound / 3.0f64.sqrt();
        let mean = t.data().iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt());
    }

    #[test]
    fn xavier_rejects_empty_shapes() {
        assert!(matches!(xavier_init(&[], 1), Err(Error::Dimension(_))));
        assert!(matches!(xavier_init(&[0, 3], 1), Err(Error::Dimension(_))));
    }
}
