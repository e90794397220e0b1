//! The four Stage-1 loss terms. All are sums over pixels and views.

use s2m_nn::{Graph, NodeId, Tensor};

use crate::error::Result;
use crate::render::maps::MAP_CHANNELS;

/// Probability clamp for the cross-entropy terms.
pub const PROB_CLAMP: f64 = 1e-7;

/// Ground-truth `N×5×S×S` maps split into depth, normal and mask tensors.
#[derive(Clone, Debug)]
pub struct MapTargets {
    pub depth: Tensor,
    pub normal: Tensor,
    pub mask: Tensor,
}

impl MapTargets {
    pub fn new(maps: &Tensor) -> Result<Self> {
        let s = maps.shape();
        let (n, inner) = (s[0], s[2] * s[3]);
        let take = |start: usize, len: usize| -> Result<Tensor> {
            let mut data = Vec::with_capacity(n * len * inner);
            for i in 0..n {
                let base = (i * MAP_CHANNELS + start) * inner;
                data.extend_from_slice(&maps.data()[base..base + len * inner]);
            }
            Ok(Tensor::new(vec![n, len, s[2], s[3]], data)?)
        };
        Ok(Self {
            depth: take(0, 1)?,
            normal: take(1, 3)?,
            mask: take(4, 1)?,
        })
    }
}

/// `Σ |d − d̂| · f̂`.
pub fn loss_depth(g: &mut Graph, pred: NodeId, gt: &MapTargets) -> Result<NodeId> {
    let d = g.slice(pred, 1, 0, 1)?;
    Ok(g.masked_l1_sum(d, gt.depth.clone(), gt.mask.clone())?)
}

/// `Σ (1 − n·n̂) · f̂`.
pub fn loss_normal(g: &mut Graph, pred: NodeId, gt: &MapTargets) -> Result<NodeId> {
    let n = g.slice(pred, 1, 1, 3)?;
    Ok(g.masked_cosine_sum(n, gt.normal.clone(), gt.mask.clone())?)
}

/// Summed binary cross-entropy of the mask channel.
pub fn loss_mask(g: &mut Graph, pred: NodeId, gt: &MapTargets) -> Result<NodeId> {
    let m = g.slice(pred, 1, 4, 1)?;
    Ok(g.bce_sum(m, gt.mask.clone(), PROB_CLAMP)?)
}

/// Generator term `−Σ_v log D(I_v)` for discriminator outputs `N×1`.
pub fn loss_adversarial(g: &mut Graph, d_fake: NodeId) -> Result<NodeId> {
    let ones = Tensor::full(g.shape(d_fake), 1.0);
    Ok(g.bce_sum(d_fake, ones, PROB_CLAMP)?)
}

/// `−Σ_v [log D(Î_v) + log(1 − D(I_v))]` for real `Î` and generated `I`.
pub fn discriminator_loss(g: &mut Graph, d_real: NodeId, d_fake: NodeId) -> Result<NodeId> {
    let ones = Tensor::full(g.shape(d_real), 1.0);
    let zeros = Tensor::zeros(g.shape(d_fake));
    let real = g.bce_sum(d_real, ones, PROB_CLAMP)?;
    let fake = g.bce_sum(d_fake, zeros, PROB_CLAMP)?;
    Ok(g.add(real, fake)?)
}

/// Loss nodes of one generator evaluation.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub depth: NodeId,
    pub normal: NodeId,
    pub mask: NodeId,
    pub adv: Option<NodeId>,
    pub total: NodeId,
}

/// `λ₁L_depth + λ₂L_normal + λ₃L_mask + λ₄L_adv`; the adversarial term
/// is skipped when `d_fake` is `None`.
pub fn total_loss_25d(
    g: &mut Graph,
    pred: NodeId,
    gt: &MapTargets,
    d_fake: Option<NodeId>,
    lambda: [f64; 4],
) -> Result<LossNodes> {
    let depth = loss_depth(g, pred, gt)?;
    let normal = loss_normal(g, pred, gt)?;
    let mask = loss_mask(g, pred, gt)?;
    let adv = d_fake.map(|d| loss_adversarial(g, d)).transpose()?;
    let mut total = g.scale(depth, lambda[0])?;
    for (node, l) in [(Some(normal), lambda[1]), (Some(mask), lambda[2]), (adv, lambda[3])] {
        if let Some(node) = node {
            let t = g.scale(node, l)?;
            total = g.add(total, t)?;
        }
    }
    Ok(LossNodes {
        depth,
        normal,
        mask,
        adv,
        total,
    })
}
