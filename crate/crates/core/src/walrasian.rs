//! Excess supply, the Walrasian `W(p,q) = ⟨q, s(p)⟩` and its augmentation.
//!
//! The self-dual augmentation
//! `W̃_r(p,q) = min_{z∈Δ} ⟨z, s⟩ + |z − q|²/(2r)` is evaluated in closed
//! form: completing the square turns the inner problem into the Euclidean
//! projection of `q − r s` onto the simplex, block by block.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::DemandResult;
use crate::error::{Error, Result};
use crate::hedging::{ph_solve, PhConfig};
use crate::model::{Economy, ModelClass, PriceSystem};
use crate::numerics::{min_vertex, project_simplex};
use crate::scalar::{self, Scalar};
use crate::transfer::{solve_transfer, stage0_demand, stage1_demand};

/// Agent counts at or above this fan out over the rayon pool.
const PARALLEL_AGENTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessSupply<T> {
    pub s0: Vec<T>,
    /// Stage-1 blocks in scenario order.
    pub s1: Vec<Vec<T>>,
    /// `[s0, s1[0], s1[1], …]`.
    pub flat: Vec<T>,
}

impl<T: Scalar> ExcessSupply<T> {
    pub fn new(s0: Vec<T>, s1: Vec<Vec<T>>) -> Self {
        let flat = s0.iter().chain(s1.iter().flatten()).copied().collect();
        Self { s0, s1, flat }
    }

    pub fn n_blocks(&self) -> usize {
        1 + self.s1.len()
    }

    pub fn block(&self, b: usize) -> &[T] {
        if b == 0 {
            &self.s0
        } else {
            &self.s1[b - 1]
        }
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[T]> {
        std::iter::once(self.s0.as_slice()).chain(self.s1.iter().map(Vec::as_slice))
    }
}

/// One agent's response to a price system.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPlan<T> {
    pub x0: Vec<T>,
    pub y: Vec<T>,
    pub x1: Vec<Vec<T>>,
    /// Final hedging residual for stochastic agents.
    pub ph_residual: Option<T>,
    pub cap_binds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketEvaluation<T> {
    pub supply: ExcessSupply<T>,
    pub plans: Vec<AgentPlan<T>>,
}

impl<T: Scalar> MarketEvaluation<T> {
    pub fn any_cap_binds(&self) -> bool {
        self.plans.iter().any(|p| p.cap_binds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Augmenting {
    /// `σ = ½|·|²`.
    #[default]
    SelfDual,
    /// Indicator of the `ℓ∞` ball of radius `r` around `q`.
    LinfBall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedWalrasianEval<T> {
    pub value: T,
    pub z_star: PriceSystem<T>,
    pub r: T,
}

fn plan_for<T: Scalar>(
    economy: &Economy<T>,
    i: usize,
    p: &PriceSystem<T>,
    caps: &[Vec<T>],
    ph: &PhConfig<T>,
) -> Result<AgentPlan<T>> {
    let agent = &economy.agents[i];
    let m = agent.n_activities();
    let (y, ph_residual) = match economy.model_class {
        ModelClass::Exchange => (vec![T::zero(); m], None),
        ModelClass::TwoStageDeterministic => (solve_transfer(i, agent, &p.p0, &p.p1[0])?, None),
        ModelClass::TwoStageStochastic => {
            let out = ph_solve(agent, p, ph, false)?;
            (out.y, Some(out.residual))
        }
    };
    let d0 = stage0_demand(i, agent, &p.p0, &y, &caps[0])?;
    let mut cap_binds = d0.cap_binds();
    let mut x1 = Vec::with_capacity(economy.n_scenarios());
    for s in 0..economy.n_scenarios() {
        let d: DemandResult<T> = stage1_demand(agent, s, &p.p1[s], &y, &caps[1 + s])?;
        cap_binds |= d.cap_binds();
        x1.push(d.x);
    }
    Ok(AgentPlan { x0: d0.x, y, x1, ph_residual, cap_binds })
}

/// Evaluates every agent's plan and the resulting excess supply.
pub fn evaluate_market<T: Scalar>(economy: &Economy<T>, p: &PriceSystem<T>, ph: &PhConfig<T>) -> Result<MarketEvaluation<T>> {
    let n = economy.n_goods();
    if p.p0.len() != n || p.p1.len() != economy.n_scenarios() {
        return Err(Error::DimensionMismatch { expected: economy.n_blocks() * n, got: p.flat().len() });
    }
    let caps: Vec<Vec<T>> = (0..economy.n_blocks()).map(|b| economy.aggregate_block(b)).collect();
    let plans: Vec<AgentPlan<T>> = if economy.agents.len() >= PARALLEL_AGENTS {
        (0..economy.agents.len())
            .into_par_iter()
            .map(|i| plan_for(economy, i, p, &caps, ph))
            .collect::<Result<_>>()?
    } else {
        (0..economy.agents.len())
            .map(|i| plan_for(economy, i, p, &caps, ph))
            .collect::<Result<_>>()?
    };

    let mut s0 = vec![T::zero(); n];
    let mut s1 = vec![vec![T::zero(); n]; economy.n_scenarios()];
    for (agent, plan) in economy.agents.iter().zip(&plans) {
        let used = agent.t0.mul_vec(&plan.y);
        for g in 0..n {
            s0[g] = s0[g] + agent.e0[g] - plan.x0[g] - used[g];
        }
        for (s, block) in s1.iter_mut().enumerate() {
            let out = agent.t1[s].mul_vec(&plan.y);
            for g in 0..n {
                block[g] = block[g] + agent.e1[s][g] + out[g] - plan.x1[s][g];
            }
        }
    }
    Ok(MarketEvaluation { supply: ExcessSupply::new(s0, s1), plans })
}

/// `s(p)` with default hedging settings.
pub fn excess_supply<T: Scalar>(economy: &Economy<T>, p: &PriceSystem<T>) -> Result<ExcessSupply<T>> {
    evaluate_market(economy, p, &PhConfig::default()).map(|m| m.supply)
}

fn check_blocks<T: Scalar>(s: &ExcessSupply<T>, q: &PriceSystem<T>) -> Result<()> {
    if s.n_blocks() != q.n_blocks() {
        return Err(Error::DimensionMismatch { expected: s.n_blocks(), got: q.n_blocks() });
    }
    for (sb, qb) in s.blocks().zip(q.blocks()) {
        if sb.len() != qb.len() {
            return Err(Error::DimensionMismatch { expected: sb.len(), got: qb.len() });
        }
    }
    Ok(())
}

pub fn walrasian_value<T: Scalar>(s: &ExcessSupply<T>, q: &PriceSystem<T>) -> Result<T> {
    check_blocks(s, q)?;
    Ok(s.blocks().zip(q.blocks()).fold(T::zero(), |acc, (sb, qb)| acc + scalar::dot(sb, qb)))
}

pub fn augmented_walrasian<T: Scalar>(s: &ExcessSupply<T>, q: &PriceSystem<T>, r: T) -> Result<AugmentedWalrasianEval<T>> {
    check_blocks(s, q)?;
    if !(r > T::zero()) || !r.is_finite() {
        return Err(Error::NonFinite("augmenting parameter"));
    }
    let mut value = T::zero();
    let mut z_blocks = Vec::with_capacity(s.n_blocks());
    for (sb, qb) in s.blocks().zip(q.blocks()) {
        let shifted: Vec<T> = qb.iter().zip(sb).map(|(&qj, &sj)| qj - r * sj).collect();
        let z = project_simplex(&shifted)?;
        let dist2 = z.iter().zip(qb).fold(T::zero(), |acc, (&zj, &qj)| acc + (zj - qj) * (zj - qj));
        value = value + scalar::dot(&z, sb) + dist2 / (T::lit(2.0) * r);
        z_blocks.push(z);
    }
    let p0 = z_blocks.remove(0);
    Ok(AugmentedWalrasianEval { value, z_star: PriceSystem::new(p0, z_blocks), r })
}

/// `min ⟨z, s⟩` over `Δ ∩ {|z − q|∞ ≤ r}`: start every coordinate at its
/// lower bound and pour the remaining mass into the cheapest goods first.
fn linf_block<T: Scalar>(s: &[T], q: &[T], r: T) -> Vec<T> {
    let lo: Vec<T> = q.iter().map(|&qj| (qj - r).max(T::zero())).collect();
    let hi: Vec<T> = q.iter().map(|&qj| (qj + r).min(T::one())).collect();
    let mut z = lo.clone();
    let mut left = T::one() - scalar::sum(&lo);
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    for j in order {
        if left <= T::zero() {
            break;
        }
        let add = (hi[j] - lo[j]).min(left);
        z[j] = z[j] + add;
        left = left - add;
    }
    z
}

pub fn augmented_walrasian_linf<T: Scalar>(s: &ExcessSupply<T>, q: &PriceSystem<T>, r: T) -> Result<AugmentedWalrasianEval<T>> {
    check_blocks(s, q)?;
    if !(r > T::zero()) {
        return Err(Error::NonFinite("augmenting parameter"));
    }
    let mut value = T::zero();
    let mut z_blocks: Vec<Vec<T>> = s.blocks().zip(q.blocks()).map(|(sb, qb)| linf_block(sb, qb, r)).collect();
    for (z, sb) in z_blocks.iter().zip(s.blocks()) {
        value = value + scalar::dot(z, sb);
    }
    let p0 = z_blocks.remove(0);
    Ok(AugmentedWalrasianEval { value, z_star: PriceSystem::new(p0, z_blocks), r })
}

pub fn augmented_value<T: Scalar>(kind: Augmenting, s: &ExcessSupply<T>, q: &PriceSystem<T>, r: T) -> Result<AugmentedWalrasianEval<T>> {
    match kind {
        Augmenting::SelfDual => augmented_walrasian(s, q, r),
        Augmenting::LinfBall => augmented_walrasian_linf(s, q, r),
    }
}

/// Worst excess demand: `max(0, −min_j s_j)`.
pub fn residual<T: Scalar>(s: &ExcessSupply<T>) -> T {
    s.flat.iter().fold(T::zero(), |m, &x| m.max(-x))
}

/// `min_j s_j` across all blocks, with the minimizing flat index.
pub fn min_excess<T: Scalar>(s: &ExcessSupply<T>) -> (usize, T) {
    min_vertex(&s.flat)
}
