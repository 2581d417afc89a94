//! Outer augmented-Walrasian iteration.
//!
//! Round `ν` evaluates `s(p^ν)`, takes the dual step `q^{ν+1}` (a simplex
//! vertex per block, in closed form), then the primal step
//! `p^{ν+1} ≈ argmax_p W̃_r(p, q^{ν+1})` by derivative-free ascent, with `r`
//! growing geometrically. It stops once `min s(p^ν) ≥ −ε`.

mod phase2;

use std::collections::HashMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use phase2::{floor_and_normalize, maximize, Objective, Phase2Config, Phase2Result, Scalarized};

use crate::error::{Error, Result};
use crate::hedging::PhConfig;
use crate::model::{Economy, PriceSystem};
use crate::numerics::{min_vertex, vertex};
use crate::scalar::Scalar;
use crate::walrasian::{augmented_value, evaluate_market, residual, walrasian_value, Augmenting, ExcessSupply, MarketEvaluation};

/// Upper limit on the augmenting parameter.
pub const R_CAP: f64 = 1e8;
/// Memoization grid for excess-supply evaluations.
const MEMO_GRID: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<T> {
    pub epsilon: T,
    pub r0: T,
    pub r_growth: T,
    pub max_outer_iters: usize,
    pub delta: T,
    pub multistart_k: usize,
    pub seed: u64,
    pub phase2: Phase2Config<T>,
    pub ph: PhConfig<T>,
    pub augmenting: Augmenting,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            epsilon: T::lit(1e-6),
            r0: T::one(),
            r_growth: T::lit(1.259),
            max_outer_iters: 500,
            delta: T::lit(1e-6),
            multistart_k: 1,
            seed: 0,
            phase2: Phase2Config::default(),
            ph: PhConfig::default(),
            augmenting: Augmenting::SelfDual,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn validate(&self, n_goods: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.epsilon > T::zero()) {
            return bad("epsilon must be positive");
        }
        if !(self.r0 > T::zero()) {
            return bad("r0 must be positive");
        }
        if !(self.r_growth > T::one()) {
            return bad("r_growth must exceed 1");
        }
        if !(self.delta > T::zero() && self.delta * T::of_usize(n_goods.max(1)) < T::one()) {
            return bad("delta must lie in (0, 1/n_goods)");
        }
        if self.multistart_k == 0 {
            return bad("multistart count must be at least 1");
        }
        if self.max_outer_iters == 0 {
            return bad("max_outer_iters must be at least 1");
        }
        if !(self.ph.rho > T::zero()) {
            return bad("hedging rho must be positive");
        }
        if !(self.phase2.step_init > T::zero() && self.phase2.step_tol > T::zero()) {
            return bad("phase II steps must be positive");
        }
        Ok(())
    }

    /// Augmenting parameter used in round `nu`.
    pub fn r_at(&self, nu: usize) -> T {
        let exp = i32::try_from(nu + 1).unwrap_or(i32::MAX);
        (self.r0 * self.r_growth.powi(exp)).min(T::lit(R_CAP))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T> {
    pub nu: usize,
    pub r: T,
    pub p: PriceSystem<T>,
    pub q: PriceSystem<T>,
    pub s: ExcessSupply<T>,
    pub residual: T,
    pub walrasian_value: T,
    pub augmented_value: T,
    pub phase2_evals: usize,
    pub ph_residuals: Vec<Option<T>>,
}

/// Wall-clock spent per round, kept apart so traces compare bitwise.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RoundTiming {
    pub phase1_ms: f64,
    pub phase2_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace<T> {
    pub records: Vec<IterationRecord<T>>,
    pub status: Status,
}

impl<T: Scalar> SolveTrace<T> {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_residual(&self) -> T {
        self.records.last().map_or(T::infinity(), |r| r.residual)
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome<T> {
    pub p: PriceSystem<T>,
    pub evaluation: MarketEvaluation<T>,
    pub residual: T,
    pub trace: SolveTrace<T>,
    pub timings: Vec<RoundTiming>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Start<T> {
    Centroid,
    /// Dirichlet(1, …, 1) draw per block from the configured seed.
    Random,
    Given(PriceSystem<T>),
}

/// Dual step: per block, the vertex at the smallest excess supply.
pub fn phase1<T: Scalar>(s: &ExcessSupply<T>) -> PriceSystem<T> {
    let mut blocks: Vec<Vec<T>> = s.blocks().map(|b| vertex(b.len(), min_vertex(b).0)).collect();
    let p0 = blocks.remove(0);
    PriceSystem::new(p0, blocks)
}

fn memo_key<T: Scalar>(p: &PriceSystem<T>) -> Vec<i64> {
    p.blocks().flatten().map(|&x| (x.as_f64() * MEMO_GRID).round() as i64).collect()
}

/// Excess-supply oracle with a per-round cache.
struct Oracle<'a, T: Scalar> {
    economy: &'a Economy<T>,
    ph: &'a PhConfig<T>,
    cache: HashMap<Vec<i64>, MarketEvaluation<T>>,
}

impl<'a, T: Scalar> Oracle<'a, T> {
    fn new(economy: &'a Economy<T>, ph: &'a PhConfig<T>) -> Self {
        Self { economy, ph, cache: HashMap::new() }
    }

    fn eval(&mut self, p: &PriceSystem<T>) -> Result<&MarketEvaluation<T>> {
        let key = memo_key(p);
        if !self.cache.contains_key(&key) {
            let m = evaluate_market(self.economy, p, self.ph)?;
            self.cache.insert(key.clone(), m);
        }
        Ok(&self.cache[&key])
    }

    fn clear(&mut self) {
        self.cache.clear();
    }
}

/// Primal step: maximize `W̃_r(·, q)` from `p_start`, never returning a worse point.
pub fn phase2<T: Scalar>(
    economy: &Economy<T>,
    q: &PriceSystem<T>,
    p_start: &PriceSystem<T>,
    r: T,
    cfg: &SolverConfig<T>,
) -> Result<Phase2Result<T>> {
    let mut oracle = Oracle::new(economy, &cfg.ph);
    run_phase2(&mut oracle, q, p_start, r, cfg)
}

fn run_phase2<T: Scalar>(
    oracle: &mut Oracle<'_, T>,
    q: &PriceSystem<T>,
    p_start: &PriceSystem<T>,
    r: T,
    cfg: &SolverConfig<T>,
) -> Result<Phase2Result<T>> {
    let widths = p_start.blocks().map(<[T]>::len).collect();
    let mut obj = AugmentedObjective { oracle, q, r, kind: cfg.augmenting, widths };
    maximize(p_start, cfg.delta, &cfg.phase2, &mut obj)
}

/// `W̃_r(·, q)` as the composite of the excess-supply vector and its
/// closed-form outer function.
struct AugmentedObjective<'o, 'a, T: Scalar> {
    oracle: &'o mut Oracle<'a, T>,
    q: &'o PriceSystem<T>,
    r: T,
    kind: Augmenting,
    widths: Vec<usize>,
}

impl<T: Scalar> Objective<T> for AugmentedObjective<'_, '_, T> {
    fn probe(&mut self, p: &PriceSystem<T>) -> Option<(T, Vec<T>)> {
        let m = self.oracle.eval(p).ok()?;
        let e = augmented_value(self.kind, &m.supply, self.q, self.r).ok()?;
        Some((e.value, m.supply.flat.clone()))
    }

    fn outer(&self, inner: &[T]) -> Option<(T, Vec<T>)> {
        let mut blocks = Vec::with_capacity(self.widths.len());
        let mut at = 0;
        for &n in &self.widths {
            blocks.push(inner.get(at..at + n)?.to_vec());
            at += n;
        }
        let s0 = blocks.remove(0);
        let e = augmented_value(self.kind, &ExcessSupply::new(s0, blocks), self.q, self.r).ok()?;
        Some((e.value, e.z_star.flat()))
    }
}

fn sample_dirichlet<T: Scalar>(rng: &mut ChaCha8Rng, n_goods: usize, n_blocks: usize) -> PriceSystem<T> {
    let mut blocks: Vec<Vec<T>> = (0..n_blocks)
        .map(|_| {
            if n_goods == 1 {
                return vec![T::one()];
            }
            let d = Dirichlet::new(&vec![1.0f64; n_goods]).expect("valid concentration");
            d.sample(rng).into_iter().map(T::lit).collect()
        })
        .collect();
    let p0 = blocks.remove(0);
    PriceSystem::new(p0, blocks)
}

fn initial_point<T: Scalar>(economy: &Economy<T>, start: &Start<T>, cfg: &SolverConfig<T>) -> Result<PriceSystem<T>> {
    let raw = match start {
        Start::Centroid => PriceSystem::centroid_for(economy),
        Start::Random => sample_dirichlet(&mut ChaCha8Rng::seed_from_u64(cfg.seed), economy.n_goods(), economy.n_blocks()),
        Start::Given(p) => {
            if p.n_blocks() != economy.n_blocks() || p.blocks().any(|b| b.len() != economy.n_goods()) {
                return Err(Error::DimensionMismatch { expected: economy.n_blocks() * economy.n_goods(), got: p.flat().len() });
            }
            p.clone()
        }
    };
    floored(&raw, cfg.delta)
}

fn floored<T: Scalar>(p: &PriceSystem<T>, delta: T) -> Result<PriceSystem<T>> {
    let mut blocks: Vec<Vec<T>> = p.blocks().map(|b| floor_and_normalize(b, delta)).collect::<Result<_>>()?;
    let p0 = blocks.remove(0);
    Ok(PriceSystem::new(p0, blocks))
}

/// Runs the outer loop from `start`.
pub fn solve<T: Scalar>(economy: &Economy<T>, start: Start<T>, cfg: &SolverConfig<T>) -> Result<SolveOutcome<T>> {
    cfg.validate(economy.n_goods())?;
    let mut p = initial_point(economy, &start, cfg)?;
    let mut oracle = Oracle::new(economy, &cfg.ph);
    let mut records: Vec<IterationRecord<T>> = Vec::new();
    let mut timings = Vec::new();
    let mut status = Status::MaxIter;

    for nu in 0..cfg.max_outer_iters {
        let r = cfg.r_at(nu);
        let t1 = Instant::now();
        let m = oracle.eval(&p)?.clone();
        let s = m.supply;
        let res = residual(&s);
        let q = phase1(&s);
        let w_value = walrasian_value(&s, &q)?;
        let phase1_ms = t1.elapsed().as_secs_f64() * 1e3;
        let ph_residuals = m.plans.iter().map(|pl| pl.ph_residual).collect();

        if res <= cfg.epsilon {
            let aug = augmented_value(cfg.augmenting, &s, &q, r)?.value;
            records.push(IterationRecord {
                nu,
                r,
                p: p.clone(),
                q,
                s,
                residual: res,
                walrasian_value: w_value,
                augmented_value: aug,
                phase2_evals: 0,
                ph_residuals,
            });
            timings.push(RoundTiming { phase1_ms, phase2_ms: 0.0 });
            status = Status::Converged;
            break;
        }

        let t2 = Instant::now();
        let (next, aug, evals) = match run_phase2(&mut oracle, &q, &p, r, cfg) {
            Ok(res) => (res.p, res.value, res.evals),
            Err(Error::Phase2Stalled { evals }) => {
                let v = augmented_value(cfg.augmenting, &s, &q, r)?.value;
                (p.clone(), v, evals)
            }
            Err(e) => return Err(e),
        };
        let phase2_ms = t2.elapsed().as_secs_f64() * 1e3;
        records.push(IterationRecord {
            nu,
            r,
            p: p.clone(),
            q,
            s,
            residual: res,
            walrasian_value: w_value,
            augmented_value: aug,
            phase2_evals: evals,
            ph_residuals,
        });
        timings.push(RoundTiming { phase1_ms, phase2_ms });
        // Only the next iterate's evaluation is worth keeping.
        let keep = oracle.eval(&next)?.clone();
        oracle.clear();
        oracle.cache.insert(memo_key(&next), keep);
        p = next;
    }

    let best = match status {
        Status::Converged => records.len() - 1,
        Status::MaxIter => records
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.residual.partial_cmp(&b.1.residual).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(i, _)| i)
            .unwrap_or(0),
    };
    let p_star = records[best].p.clone();
    let evaluation = evaluate_market(economy, &p_star, &cfg.ph)?;
    Ok(SolveOutcome {
        residual: records[best].residual,
        p: p_star,
        evaluation,
        trace: SolveTrace { records, status },
        timings,
    })
}

/// Starting points for a multistart run: the centroid, then `k − 1`
/// Dirichlet draws from the configured seed.
pub fn multistart_points<T: Scalar>(economy: &Economy<T>, cfg: &SolverConfig<T>) -> Vec<PriceSystem<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = vec![PriceSystem::centroid_for(economy)];
    for _ in 1..cfg.multistart_k {
        starts.push(sample_dirichlet(&mut rng, economy.n_goods(), economy.n_blocks()));
    }
    starts
}

/// Runs every start concurrently and keeps the smallest final residual
/// (earliest start on ties). Runs that error count as residual `+∞`.
pub fn multistart_solve<T: Scalar>(economy: &Economy<T>, cfg: &SolverConfig<T>) -> Result<(usize, SolveOutcome<T>)> {
    cfg.validate(economy.n_goods())?;
    let runs: Vec<Result<SolveOutcome<T>>> = multistart_points(economy, cfg)
        .into_par_iter()
        .map(|p| solve(economy, Start::Given(p), cfg))
        .collect();
    let mut best: Option<(usize, SolveOutcome<T>)> = None;
    let mut first_err = None;
    for (i, run) in runs.into_iter().enumerate() {
        match run {
            Ok(out) => {
                if best.as_ref().is_none_or(|(_, b)| out.residual < b.residual) {
                    best = Some((i, out));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one start"))
}
