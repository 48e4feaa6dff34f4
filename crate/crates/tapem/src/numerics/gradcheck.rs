//! Central finite-difference verification of analytic gradients.

use rand::Rng;

use super::store::{ParamId, ParamStore};
use crate::error::{Result, TapemError};

/// A deterministic loss over the store. When `compute_grads` is true the
/// closure must also accumulate analytic gradients into the store buffers.
pub trait LossFn {
    fn eval(&self, store: &mut ParamStore, compute_grads: bool) -> Result<f64>;
}

impl<F> LossFn for F
where
    F: Fn(&mut ParamStore, bool) -> Result<f64>,
{
    fn eval(&self, store: &mut ParamStore, compute_grads: bool) -> Result<f64> {
        self(store, compute_grads)
    }
}

/// Outcome of probing one parameter group.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub probes: usize,
    pub skipped_kinks: usize,
    pub max_relative_error: f64,
}

/// Compare analytic gradients against central finite differences on
/// `probe_count` randomly chosen coordinates of the listed parameters.
///
/// Coordinates sitting on a kink (forward and backward one-sided
/// differences disagree) are skipped, matching the relu subgradient
/// ambiguity at exactly zero.
pub fn grad_check<L, R>(
    loss: &L,
    store: &mut ParamStore,
    params: &[ParamId],
    probe_count: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    L: LossFn,
    R: Rng,
{
    let base1 = loss.eval(store, false)?;
    let base2 = loss.eval(store, false)?;
    if base1 != base2 {
        return Err(TapemError::Contract(format!(
            "loss is not deterministic: {base1} vs {base2}"
        )));
    }

    store.zero_grads();
    loss.eval(store, true)?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|id| store.grad(*id).data().to_vec())
        .collect();
    store.zero_grads();

    let mut max_rel = 0.0f64;
    let mut skipped = 0;
    let mut probes = 0;
    for _ in 0..probe_count {
        let which = rng.gen_range(0..params.len());
        let id = params[which];
        let idx = rng.gen_range(0..store.value(id).len());
        let orig = store.value(id).data()[idx];

        store.value_mut(id).data_mut()[idx] = orig + epsilon;
        let fp = loss.eval(store, false)?;
        store.value_mut(id).data_mut()[idx] = orig - epsilon;
        let fm = loss.eval(store, false)?;
        store.value_mut(id).data_mut()[idx] = orig;

        let fwd = (fp - base1) / epsilon;
        let bwd = (base1 - fm) / epsilon;
        if (fwd - bwd).abs() > 1e-2 * (1.0 + fwd.abs() + bwd.abs()) {
            // one-sided slopes disagree: the coordinate sits on a kink
            skipped += 1;
            continue;
        }

        let numeric = (fp - fm) / (2.0 * epsilon);
        let a = analytic[which][idx];
        if a.abs() < 1e-10 && numeric.abs() < 1e-10 {
            probes += 1;
            continue;
        }
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        max_rel = max_rel.max(rel);
        probes += 1;
    }

    Ok(GradCheckReport {
        probes,
        skipped_kinks: skipped,
        max_relative_error: max_rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::store::GradMap;
    use crate::numerics::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quadratic(store: &mut ParamStore, compute_grads: bool) -> Result<f64> {
        let id = store.id("theta").unwrap();
        let theta = store.value(id).data()[0];
        if compute_grads {
            let mut g = GradMap::default();
            g.dense.insert(0, Tensor::vector(vec![theta]));
            store.accumulate(&g);
        }
        Ok(0.5 * theta * theta)
    }

    #[test]
    fn quadratic_passes() {
        let mut store = ParamStore::new();
        let id = store.add("theta", Tensor::vector(vec![3.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let report = grad_check(&quadratic, &mut store, &[id], 10, 1e-5, &mut rng).unwrap();
        assert!(report.max_relative_error < 1e-7, "{report:?}");
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let corrupted = |store: &mut ParamStore, compute_grads: bool| -> Result<f64> {
            let id = store.id("theta").unwrap();
            let theta = store.value(id).data()[0];
            if compute_grads {
                let mut g = GradMap::default();
                g.dense.insert(0, Tensor::vector(vec![theta + 0.5]));
                store.accumulate(&g);
            }
            Ok(0.5 * theta * theta)
        };
        let mut store = ParamStore::new();
        let id = store.add("theta", Tensor::vector(vec![3.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let report = grad_check(&corrupted, &mut store, &[id], 10, 1e-5, &mut rng).unwrap();
        assert!(report.max_relative_error > 1e-4, "{report:?}");
    }

    #[test]
    fn relu_kink_is_skipped() {
        // loss = relu(theta) probed exactly at 0
        let relu_loss = |store: &mut ParamStore, compute_grads: bool| -> Result<f64> {
            let id = store.id("theta").unwrap();
            let theta = store.value(id).data()[0];
            if compute_grads {
                let mut g = GradMap::default();
                g.dense
                    .insert(0, Tensor::vector(vec![if theta > 0.0 { 1.0 } else { 0.0 }]));
                store.accumulate(&g);
            }
            Ok(theta.max(0.0))
        };
        let mut store = ParamStore::new();
        let id = store.add("theta", Tensor::vector(vec![0.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let report = grad_check(&relu_loss, &mut store, &[id], 5, 1e-5, &mut rng).unwrap();
        assert_eq!(report.skipped_kinks, 5);
        assert_eq!(report.max_relative_error, 0.0);
    }

    #[test]
    fn nondeterministic_loss_is_rejected() {
        let calls = std::cell::Cell::new(0u64);
        let noisy = move |store: &mut ParamStore, _: bool| -> Result<f64> {
            let id = store.id("theta").unwrap();
            calls.set(calls.get() + 1);
            Ok(store.value(id).data()[0] + calls.get() as f64)
        };
        let mut store = ParamStore::new();
        let id = store.add("theta", Tensor::vector(vec![1.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = grad_check(&noisy, &mut store, &[id], 3, 1e-5, &mut rng).unwrap_err();
        assert!(err.to_string().contains("not deterministic"));
    }
}
