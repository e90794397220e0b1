//! Central finite-difference gradient checking.
//!
//! The checker only evaluates forward values, so it stays independent of
//! the adjoint code it validates.

use crate::error::Result;
use crate::graph::{Graph, NodeId};
use crate::store::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Relative error with a small floor on the denominator so exact zeros
/// compare sensibly.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compare analytic gradients of a scalar-valued graph against central
/// differences with step `h`, over every input element and every
/// parameter element of `store`.
///
/// `build` receives fresh leaf nodes for `inputs` and must return a
/// scalar node. Each evaluation uses a graph seeded with `seed`, so
/// dropout masks repeat exactly.
pub fn check_gradients<F>(inputs: &[Tensor], store: &ParamStore, h: f64, seed: u64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[NodeId], &ParamStore) -> Result<NodeId>,
{
    let eval = |inputs: &[Tensor], store: &ParamStore| -> Result<(Graph, Vec<NodeId>, NodeId)> {
        let mut g = Graph::with_seed(seed);
        let ids = inputs
            .iter()
            .map(|t| g.input(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let loss = build(&mut g, &ids, store)?;
        Ok((g, ids, loss))
    };
    let (g, ids, loss) = eval(inputs, store)?;
    let grads = g.backward(loss)?;
    let mut max_rel_err: f64 = 0.0;
    let mut checked = 0;

    let mut work: Vec<Tensor> = inputs.to_vec();
    for (k, id) in ids.iter().enumerate() {
        let analytic = grads
            .node(*id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        for i in 0..inputs[k].len() {
            let orig = inputs[k].data()[i];
            work[k].data_mut()[i] = orig + h;
            let (g1, _, l1) = eval(&work, store)?;
            work[k].data_mut()[i] = orig - h;
            let (g2, _, l2) = eval(&work, store)?;
            work[k].data_mut()[i] = orig;
            let numeric = (g1.value(l1).item() - g2.value(l2).item()) / (2.0 * h);
            max_rel_err = max_rel_err.max(relative_error(analytic.data()[i], numeric));
            checked += 1;
        }
    }

    let mut perturbed = store.clone();
    let names: Vec<String> = store.params().map(|(n, _)| n.clone()).collect();
    for name in names {
        let len = store.value(&name)?.len();
        let analytic = grads
            .param(&name)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(store.value(&name).expect("known").shape()));
        for i in 0..len {
            let orig = store.value(&name)?.data()[i];
            perturbed.param_mut(&name)?.value.data_mut()[i] = orig + h;
            let (g1, _, l1) = eval(inputs, &perturbed)?;
            perturbed.param_mut(&name)?.value.data_mut()[i] = orig - h;
            let (g2, _, l2) = eval(inputs, &perturbed)?;
            perturbed.param_mut(&name)?.value.data_mut()[i] = orig;
            let numeric = (g1.value(l1).item() - g2.value(l2).item()) / (2.0 * h);
            max_rel_err = max_rel_err.max(relative_error(analytic.data()[i], numeric));
            checked += 1;
        }
    }
    Ok(GradCheckReport { max_rel_err, checked })
}
