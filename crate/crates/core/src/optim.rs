//! Adam with decoupled weight decay, over a named parameter set.

use rand_distr::{Distribution, StandardNormal};

use crate::graph::NumericsError;
use crate::tensor::{Scalar, Tensor};

/// Named parameter tensors in a fixed order. The order defines the
/// checkpoint layout and the optimizer-state alignment.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<F = f32> {
    entries: Vec<(String, Tensor<F>)>,
}

impl<F: Scalar> ParamSet<F>
where
    StandardNormal: Distribution<F>,
{
    pub fn new() -> Self {
        ParamSet {
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<F>) -> usize {
        let name = name.into();
        debug_assert!(
            !self.entries.iter().any(|(n, _)| *n == name),
            "duplicate parameter name {name}"
        );
        self.entries.push((name, tensor));
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.entries[idx].0
    }

    pub fn tensor(&self, idx: usize) -> &Tensor<F> {
        &self.entries[idx].1
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut Tensor<F> {
        &mut self.entries[idx].1
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<F>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn param_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<G: Scalar>(&self) -> ParamSet<G>
    where
        StandardNormal: Distribution<G>,
    {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), t.cast()))
                .collect(),
        }
    }
}

impl<F: Scalar> Default for ParamSet<F>
where
    StandardNormal: Distribution<F>,
{
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First/second moment estimates aligned with a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<F = f32> {
    pub m: Vec<Tensor<F>>,
    pub v: Vec<Tensor<F>>,
    pub step_count: u64,
}

impl<F: Scalar> AdamState<F>
where
    StandardNormal: Distribution<F>,
{
    pub fn for_params(params: &ParamSet<F>) -> Self {
        let m = (0..params.len())
            .map(|i| Tensor::zeros(params.tensor(i).shape()))
            .collect::<Vec<_>>();
        let v = m.clone();
        AdamState {
            m,
            v,
            step_count: 0,
        }
    }
}

/// One Adam step with decoupled weight decay: every parameter is first
/// scaled by (1 − lr·wd), then moved by the bias-corrected adaptive step.
/// `grads` is aligned with `params`; a `None` slot means zero gradient.
pub fn adam_update<F: Scalar>(
    params: &mut ParamSet<F>,
    grads: &[Option<Tensor<F>>],
    state: &mut AdamState<F>,
    hp: &AdamHyper,
) -> Result<(), NumericsError>
where
    StandardNormal: Distribution<F>,
{
    assert_eq!(grads.len(), params.len(), "grads misaligned with params");
    assert_eq!(state.m.len(), params.len(), "state misaligned with params");
    for (i, g) in grads.iter().enumerate() {
        if let Some(g) = g {
            if !g.is_finite() {
                return Err(NumericsError::NonFinite {
                    context: format!("gradient of {}", params.name(i)),
                });
            }
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = F::from_f64(1.0 - hp.beta1.powi(t));
    let bc2 = F::from_f64(1.0 - hp.beta2.powi(t));
    let lr = F::from_f64(hp.lr);
    let b1 = F::from_f64(hp.beta1);
    let b2 = F::from_f64(hp.beta2);
    let one_m_b1 = F::from_f64(1.0 - hp.beta1);
    let one_m_b2 = F::from_f64(1.0 - hp.beta2);
    let eps = F::from_f64(hp.eps);
    let decay = F::from_f64(1.0 - hp.lr * hp.weight_decay);

    for i in 0..params.len() {
        let p = params.tensor_mut(i);
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let zero = F::zero();
        for (j, pj) in p.data_mut().iter_mut().enumerate() {
            let g = grads[i].as_ref().map_or(zero, |g| g.data()[j]);
            *pj = *pj * decay;
            m[j] = b1 * m[j] + one_m_b1 * g;
            v[j] = b2 * v[j] + one_m_b2 * g * g;
            let mhat = m[j] / bc1;
            let vhat = v[j] / bc2;
            *pj = *pj - lr * mhat / (vhat.sqrt() + eps);
        }
        if !params.tensor(i).is_finite() {
            return Err(NumericsError::NonFinite {
                context: format!("parameter {} after update", params.name(i)),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: Vec<f32>) -> ParamSet<f32> {
        let mut p = ParamSet::new();
        let n = v.len();
        p.push("w", Tensor::from_vec(&[n], v).unwrap());
        p
    }

    #[test]
    fn decoupled_decay_only() {
        let mut params = one_param(vec![1.0]);
        let mut state = AdamState::for_params(&params);
        let hp = AdamHyper {
            lr: 1e-3,
            weight_decay: 0.1,
            ..Default::default()
        };
        let grads = vec![Some(Tensor::from_vec(&[1], vec![0.0]).unwrap())];
        adam_update(&mut params, &grads, &mut state, &hp).unwrap();
        assert!((params.tensor(0).data()[0] - 0.9999).abs() < 1e-7);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn zero_grad_zero_decay_is_identity() {
        let mut params = one_param(vec![0.3, -0.7, 2.0]);
        let before = params.clone();
        let mut state = AdamState::for_params(&params);
        let hp = AdamHyper::default();
        adam_update(&mut params, &[None], &mut state, &hp).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn matches_scalar_adam_oracle() {
        // Hand-rolled scalar Adam, no weight decay, three steps.
        let hp = AdamHyper {
            lr: 0.01,
            ..Default::default()
        };
        let g_seq = [0.5f64, -0.2, 0.8];
        let mut p_oracle = 1.5f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for (t, &g) in g_seq.iter().enumerate() {
            let t = (t + 1) as i32;
            m = hp.beta1 * m + (1.0 - hp.beta1) * g;
            v = hp.beta2 * v + (1.0 - hp.beta2) * g * g;
            let mhat = m / (1.0 - hp.beta1.powi(t));
            let vhat = v / (1.0 - hp.beta2.powi(t));
            p_oracle -= hp.lr * mhat / (vhat.sqrt() + hp.eps);
        }

        let mut params = one_param(vec![1.5]);
        let mut state = AdamState::for_params(&params);
        for &g in &g_seq {
            let grads = vec![Some(Tensor::from_vec(&[1], vec![g as f32]).unwrap())];
            adam_update(&mut params, &grads, &mut state, &hp).unwrap();
        }
        assert_eq!(state.step_count, 3);
        assert!((params.tensor(0).data()[0] as f64 - p_oracle).abs() < 1e-6);
    }

    #[test]
    fn non_finite_grad_rejected() {
        let mut params = one_param(vec![1.0]);
        let mut state = AdamState::for_params(&params);
        let grads = vec![Some(Tensor::from_vec(&[1], vec![f32::NAN]).unwrap())];
        let err = adam_update(&mut params, &grads, &mut state, &AdamHyper::default());
        assert!(err.is_err());
        // A rejected update must not advance the step counter.
        assert_eq!(state.step_count, 0);
    }
}
