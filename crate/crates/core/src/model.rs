//! Economies, price systems, and instance validation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::scalar::{self, Scalar};

/// Tolerance within which Cobb-Douglas weights are accepted (and renormalized).
pub const WEIGHT_SUM_TOL: f64 = 1e-6;
/// Tolerance on belief vectors summing to one.
pub const BELIEF_SUM_TOL: f64 = 1e-12;
/// Tolerance on price blocks summing to one.
pub const SIMPLEX_SUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum UtilitySpec<T> {
    /// `u(x) = ∏ x_j^{β_j}` with `β ≥ 0`, `Σβ = 1`.
    CobbDouglas { beta: Vec<T> },
    /// `u(x) = (Σ a_j^{1/b} x_j^{(b-1)/b})^{b/(b-1)}`, elasticity `b > 0`, `b ≠ 1`.
    Ces { a: Vec<T>, b: T },
}

impl<T: Scalar> UtilitySpec<T> {
    pub fn n_goods(&self) -> usize {
        match self {
            UtilitySpec::CobbDouglas { beta } => beta.len(),
            UtilitySpec::Ces { a, .. } => a.len(),
        }
    }

    /// Rescales Cobb-Douglas weights to sum exactly one when they are within
    /// [`WEIGHT_SUM_TOL`] of it. Other specs are returned unchanged.
    pub fn normalized(&self) -> Self {
        match self {
            UtilitySpec::CobbDouglas { beta } => {
                let total = scalar::sum(beta);
                if (total - T::one()).abs() <= T::lit(WEIGHT_SUM_TOL) && total > T::zero() {
                    UtilitySpec::CobbDouglas {
                        beta: beta.iter().map(|&b| b / total).collect(),
                    }
                } else {
                    self.clone()
                }
            }
            UtilitySpec::Ces { .. } => self.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelClass {
    Exchange,
    TwoStageDeterministic,
    TwoStageStochastic,
}

impl ModelClass {
    pub fn is_two_stage(self) -> bool {
        !matches!(self, ModelClass::Exchange)
    }
}

/// One agent. Stage-1 data (`e1`, `t1`, `beliefs`) is indexed by the
/// economy's scenario list and is empty for exchange economies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent<T> {
    pub utility0: UtilitySpec<T>,
    pub utility1: Option<UtilitySpec<T>>,
    pub e0: Vec<T>,
    pub e1: Vec<Vec<T>>,
    /// Per-good consumption floor, applied at stage 0 and in every stage-1 scenario.
    pub survival_lb: Vec<T>,
    /// Inputs consumed at stage 0 (goods × activities).
    pub t0: Matrix<T>,
    /// Outputs delivered at stage 1 per scenario (goods × activities).
    pub t1: Vec<Matrix<T>>,
    pub beliefs: Vec<T>,
}

impl<T: Scalar> Agent<T> {
    /// Exchange-economy agent with a zero survival floor.
    pub fn exchange(utility: UtilitySpec<T>, e0: Vec<T>) -> Self {
        let n = e0.len();
        Self {
            utility0: utility,
            utility1: None,
            e0,
            e1: Vec::new(),
            survival_lb: vec![T::zero(); n],
            t0: Matrix::zeros(n, 0),
            t1: Vec::new(),
            beliefs: Vec::new(),
        }
    }

    pub fn with_survival(mut self, lb: Vec<T>) -> Self {
        self.survival_lb = lb;
        self
    }

    pub fn n_goods(&self) -> usize {
        self.e0.len()
    }

    pub fn n_activities(&self) -> usize {
        self.t0.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Economy<T> {
    pub model_class: ModelClass,
    pub goods: Vec<String>,
    pub activities: Vec<String>,
    pub scenarios: Vec<String>,
    pub agents: Vec<Agent<T>>,
}

impl<T: Scalar> Economy<T> {
    /// Exchange economy with goods named `g1..gn`.
    pub fn exchange(agents: Vec<Agent<T>>) -> Self {
        let n = agents.first().map_or(0, Agent::n_goods);
        Self {
            model_class: ModelClass::Exchange,
            goods: (1..=n).map(|g| format!("g{g}")).collect(),
            activities: Vec::new(),
            scenarios: Vec::new(),
            agents,
        }
    }

    pub fn n_goods(&self) -> usize {
        self.goods.len()
    }

    pub fn n_activities(&self) -> usize {
        self.activities.len()
    }

    pub fn n_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    /// Number of price blocks: stage 0 plus one per scenario.
    pub fn n_blocks(&self) -> usize {
        1 + self.scenarios.len()
    }

    pub fn aggregate_e0(&self) -> Vec<T> {
        let mut total = vec![T::zero(); self.n_goods()];
        for a in &self.agents {
            for (t, &e) in total.iter_mut().zip(&a.e0) {
                *t = *t + e;
            }
        }
        total
    }

    pub fn aggregate_e1(&self, scenario: usize) -> Vec<T> {
        let mut total = vec![T::zero(); self.n_goods()];
        for a in &self.agents {
            if let Some(e1) = a.e1.get(scenario) {
                for (t, &e) in total.iter_mut().zip(e1) {
                    *t = *t + e;
                }
            }
        }
        total
    }

    /// Aggregate endowment of block `b` (0 = stage 0, `1 + ξ` = scenario ξ).
    pub fn aggregate_block(&self, b: usize) -> Vec<T> {
        if b == 0 {
            self.aggregate_e0()
        } else {
            self.aggregate_e1(b - 1)
        }
    }

    /// Copy with every Cobb-Douglas weight vector renormalized.
    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        for a in &mut out.agents {
            a.utility0 = a.utility0.normalized();
            a.utility1 = a.utility1.as_ref().map(UtilitySpec::normalized);
        }
        out
    }
}

/// A point of `Δ` (static) or `Δ × Δ^|Ξ|` (two-stage).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSystem<T> {
    pub p0: Vec<T>,
    /// Stage-1 blocks in scenario order.
    pub p1: Vec<Vec<T>>,
}

impl<T: Scalar> PriceSystem<T> {
    pub fn new(p0: Vec<T>, p1: Vec<Vec<T>>) -> Self {
        Self { p0, p1 }
    }

    pub fn centroid(n_goods: usize, n_scenarios: usize) -> Self {
        let c = T::one() / T::of_usize(n_goods);
        Self {
            p0: vec![c; n_goods],
            p1: vec![vec![c; n_goods]; n_scenarios],
        }
    }

    pub fn centroid_for(economy: &Economy<T>) -> Self {
        Self::centroid(economy.n_goods(), economy.n_scenarios())
    }

    pub fn n_blocks(&self) -> usize {
        1 + self.p1.len()
    }

    pub fn block(&self, b: usize) -> &[T] {
        if b == 0 {
            &self.p0
        } else {
            &self.p1[b - 1]
        }
    }

    pub fn block_mut(&mut self, b: usize) -> &mut Vec<T> {
        if b == 0 {
            &mut self.p0
        } else {
            &mut self.p1[b - 1]
        }
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[T]> {
        std::iter::once(self.p0.as_slice()).chain(self.p1.iter().map(Vec::as_slice))
    }

    pub fn flat(&self) -> Vec<T> {
        self.blocks().flatten().copied().collect()
    }

    /// Splits a flat vector into `n_blocks` blocks of equal width.
    pub fn from_flat(flat: &[T], n_blocks: usize) -> Self {
        let n = flat.len() / n_blocks.max(1);
        let mut chunks = flat.chunks(n.max(1)).map(<[T]>::to_vec);
        let p0 = chunks.next().unwrap_or_default();
        Self {
            p0,
            p1: chunks.collect(),
        }
    }

    /// Every block nonnegative and summing to one within `tol`.
    pub fn is_in_simplex(&self, tol: T) -> bool {
        self.blocks().all(|b| {
            b.iter().all(|&x| x >= -T::lit(1e-14) && x.is_finite())
                && (scalar::sum(b) - T::one()).abs() <= tol
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.flat()
            .iter()
            .zip(other.flat())
            .fold(T::zero(), |m, (&a, b)| m.max((a - b).abs()))
    }
}

/// One invariant violation, addressed by a path into the instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn check_vector<T: Scalar>(out: &mut Vec<Violation>, path: &str, v: &[T], n: usize) {
    if v.len() != n {
        out.push(Violation::new(path, format!("expected {n} entries, found {}", v.len())));
        return;
    }
    for (j, &x) in v.iter().enumerate() {
        if !x.is_finite() || x < T::zero() {
            out.push(Violation::new(format!("{path}[{j}]"), format!("must be finite and nonnegative, found {x}")));
        }
    }
}

fn check_matrix<T: Scalar>(out: &mut Vec<Violation>, path: &str, m: &Matrix<T>, rows: usize, cols: usize) {
    if m.rows() != rows || m.cols() != cols {
        out.push(Violation::new(
            path,
            format!("expected a {rows}x{cols} matrix, found {}x{}", m.rows(), m.cols()),
        ));
        return;
    }
    if m.iter().any(|&x| !x.is_finite() || x < T::zero()) {
        out.push(Violation::new(path, "technology matrices must be entrywise nonnegative"));
    }
}

fn check_utility<T: Scalar>(out: &mut Vec<Violation>, path: &str, u: &UtilitySpec<T>, n: usize) {
    match u {
        UtilitySpec::CobbDouglas { beta } => {
            let p = format!("{path}.beta");
            check_vector(out, &p, beta, n);
            let total = scalar::sum(beta);
            if beta.len() == n && (total - T::one()).abs() > T::lit(WEIGHT_SUM_TOL) {
                out.push(Violation::new(p, format!("Cobb-Douglas weights must sum to 1, sum is {total}")));
            }
        }
        UtilitySpec::Ces { a, b } => {
            let p = format!("{path}.a");
            check_vector(out, &p, a, n);
            if a.iter().all(|&x| x <= T::zero()) {
                out.push(Violation::new(p, "at least one CES share must be positive"));
            }
            if !b.is_finite() || *b <= T::zero() {
                out.push(Violation::new(format!("{path}.b"), format!("CES elasticity must be positive, found {b}")));
            } else if (*b - T::one()).abs() < T::lit(1e-9) {
                out.push(Violation::new(
                    format!("{path}.b"),
                    "CES elasticity 1 is the Cobb-Douglas limit; use a Cobb-Douglas utility",
                ));
            }
        }
    }
}

/// Lists every invariant violation of `economy`; an empty list means valid.
pub fn validate<T: Scalar>(economy: &Economy<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = economy.n_goods();
    let m = economy.n_activities();
    let k = economy.n_scenarios();
    if n == 0 {
        out.push(Violation::new("goods", "economy needs at least one good"));
    }
    if economy.agents.is_empty() {
        out.push(Violation::new("agents", "economy needs at least one agent"));
    }
    match economy.model_class {
        ModelClass::Exchange => {
            if k != 0 {
                out.push(Violation::new("scenarios", "exchange economies have no scenarios"));
            }
            if m != 0 {
                out.push(Violation::new("activities", "exchange economies have no activities"));
            }
        }
        ModelClass::TwoStageDeterministic if k != 1 => {
            out.push(Violation::new("scenarios", format!("deterministic economies need exactly one scenario, found {k}")));
        }
        ModelClass::TwoStageStochastic if k == 0 => {
            out.push(Violation::new("scenarios", "stochastic economies need at least one scenario"));
        }
        _ => {}
    }

    for (i, agent) in economy.agents.iter().enumerate() {
        let ap = format!("agents[{i}]");
        check_utility(&mut out, &format!("{ap}.utility0"), &agent.utility0, n);
        check_vector(&mut out, &format!("{ap}.e0"), &agent.e0, n);
        check_vector(&mut out, &format!("{ap}.survival_lb"), &agent.survival_lb, n);
        if economy.model_class.is_two_stage() {
            match &agent.utility1 {
                Some(u1) => check_utility(&mut out, &format!("{ap}.utility1"), u1, n),
                None => out.push(Violation::new(format!("{ap}.utility1"), "two-stage agents need a stage-1 utility")),
            }
            check_matrix(&mut out, &format!("{ap}.T0"), &agent.t0, n, m);
            if agent.e1.len() != k {
                out.push(Violation::new(format!("{ap}.e1"), format!("expected one endowment per scenario ({k}), found {}", agent.e1.len())));
            }
            for (s, e1) in agent.e1.iter().enumerate().take(k) {
                check_vector(&mut out, &format!("{ap}.e1[{}]", economy.scenarios[s]), e1, n);
            }
            if agent.t1.len() != k {
                out.push(Violation::new(format!("{ap}.T1"), format!("expected one output matrix per scenario ({k}), found {}", agent.t1.len())));
            }
            for (s, t1) in agent.t1.iter().enumerate().take(k) {
                check_matrix(&mut out, &format!("{ap}.T1[{}]", economy.scenarios[s]), t1, n, m);
            }
            let bp = format!("{ap}.beliefs");
            if agent.beliefs.len() != k {
                out.push(Violation::new(&bp, format!("expected one probability per scenario ({k}), found {}", agent.beliefs.len())));
            } else {
                check_vector(&mut out, &bp, &agent.beliefs, k);
                let total = scalar::sum(&agent.beliefs);
                if (total - T::one()).abs() > T::lit(BELIEF_SUM_TOL) {
                    out.push(Violation::new(bp, format!("agent {i} beliefs must sum to 1, sum is {total}")));
                }
            }
        }
    }

    // Aggregates only make sense once dimensions are right.
    if out.iter().any(|v| v.message.starts_with("expected")) {
        return out;
    }
    let agg0 = economy.aggregate_e0();
    for (j, &e) in agg0.iter().enumerate() {
        if !(e > T::zero()) {
            out.push(Violation::new(
                format!("goods[{j}]"),
                format!("good '{}' has zero aggregate stage-0 endowment", economy.goods[j]),
            ));
        }
    }
    for (i, agent) in economy.agents.iter().enumerate() {
        for b in 0..economy.n_blocks() {
            let agg = economy.aggregate_block(b);
            for (j, (&lb, &cap)) in agent.survival_lb.iter().zip(&agg).enumerate() {
                if lb > cap {
                    out.push(Violation::new(
                        format!("agents[{i}].survival_lb[{j}]"),
                        format!("survival floor {lb} exceeds the aggregate endowment {cap} of block {b}"),
                    ));
                }
            }
        }
    }
    out
}

/// Which budget a recourse shortfall belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Zero,
    /// Stage 1 in the scenario with this index.
    One(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecourseShortfall<T> {
    pub stage: Stage,
    pub good: usize,
    /// Negative slack of the violated inequality.
    pub slack: T,
}

/// Candidate first- and second-stage decisions for the recourse test.
#[derive(Debug, Clone, PartialEq)]
pub struct RecourseWitness<T> {
    pub x0: Vec<T>,
    pub y: Vec<T>,
    pub x1: Vec<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecourseReport<T> {
    pub agent: usize,
    pub feasible: bool,
    pub witness: RecourseWitness<T>,
    pub shortfalls: Vec<RecourseShortfall<T>>,
}

/// Tests the witness `(x̃⁰, ỹ, x̃¹_ξ) = (lb, 0, lb)` against
/// `e⁰ − x̃⁰ − T⁰ỹ ≥ 0` and `e¹_ξ − x̃¹_ξ + T¹_ξ ỹ ≥ 0` for every agent.
pub fn check_recourse<T: Scalar>(economy: &Economy<T>) -> Vec<RecourseReport<T>> {
    economy
        .agents
        .iter()
        .enumerate()
        .map(|(i, agent)| {
            let lb = &agent.survival_lb;
            let y = vec![T::zero(); agent.n_activities()];
            let mut shortfalls = Vec::new();
            let t0y = agent.t0.mul_vec(&y);
            for j in 0..agent.n_goods() {
                let slack = agent.e0[j] - lb[j] - t0y[j];
                if slack < T::zero() {
                    shortfalls.push(RecourseShortfall { stage: Stage::Zero, good: j, slack });
                }
            }
            for (s, e1) in agent.e1.iter().enumerate() {
                let t1y = agent.t1.get(s).map(|t| t.mul_vec(&y)).unwrap_or_else(|| vec![T::zero(); e1.len()]);
                for j in 0..e1.len() {
                    let slack = e1[j] - lb[j] + t1y[j];
                    if slack < T::zero() {
                        shortfalls.push(RecourseShortfall { stage: Stage::One(s), good: j, slack });
                    }
                }
            }
            RecourseReport {
                agent: i,
                feasible: shortfalls.is_empty(),
                witness: RecourseWitness {
                    x0: lb.clone(),
                    y,
                    x1: vec![lb.clone(); agent.e1.len()],
                },
                shortfalls,
            }
        })
        .collect()
}
