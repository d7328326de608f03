//! Decomposing large-neighbourhood search over the listing QUBO.
//!
//! Each round picks a subset of variables, clamps everything else at its
//! current value, hands the reduced QUBO to a [`Subsolver`] and keeps the
//! result only if the full energy strictly drops. The loop stops after
//! `repeats` consecutive rounds without improvement or when the time budget
//! runs out.
//!
//! Two subset policies are provided:
//!
//! * [`Policy::Structured`] picks `n_sub` items and the positions they
//!   currently occupy, and optimizes over items × positions. The current
//!   placement of those items is always a feasible point of the subproblem.
//! * [`Policy::EnergyImpact`] picks the `n_sub²` variables whose single flip
//!   would change the energy the most, with no regard for the constraints.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::assign::{brute_force_qap, solve_lap, BRUTE_FORCE_MAX_N};
use crate::error::{invalid, Error, Result};
use crate::model::{qap_objective, Assignment, ListingInstance, ObjectiveBreakdown};
use crate::qubo::{build_qubo, decode, repair, var_index, BitVector, QuboMatrix, QuboProblem};
use crate::subsolve::{SubsolveOutcome, Subsolver};

/// Probability that a structured subset is drawn from the top `2 * n_sub` positions only.
pub const DEFAULT_TOP_BIAS: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    Structured,
    EnergyImpact,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Structured => "structured",
            Policy::EnergyImpact => "energy-impact",
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecompParams {
    /// Items per structured subproblem; the energy-impact policy selects `n_sub²` variables.
    pub n_sub: usize,
    /// Consecutive non-improving rounds before stopping.
    pub repeats: usize,
    pub timeout: Duration,
    /// Rounds a selected item set (structured) or variable (energy impact) stays excluded.
    pub tabu_tenure: usize,
    pub top_bias: f64,
    /// Penalty weight override; the default rule applies when absent.
    pub penalty: Option<f64>,
    pub seed: u64,
}

impl Default for DecompParams {
    fn default() -> Self {
        Self {
            n_sub: 8,
            repeats: 5,
            timeout: Duration::from_secs(20),
            tabu_tenure: 3,
            top_bias: DEFAULT_TOP_BIAS,
            penalty: None,
            seed: 0,
        }
    }
}

impl DecompParams {
    fn validate(&self, n: usize) -> Result<()> {
        if self.n_sub < 2 || self.n_sub > n {
            return invalid(format!("n_sub must lie in 2..={n}, got {}", self.n_sub));
        }
        if self.repeats == 0 {
            return invalid("repeats must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.top_bias) {
            return invalid("top_bias must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub round: usize,
    pub elapsed_ms: f64,
    /// Objective of the incumbent after this round.
    pub objective: f64,
    pub sales_term: f64,
    pub diversity_term: f64,
    pub accepted: bool,
    /// Constraint violations of the incumbent after this round.
    pub violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub best: Assignment,
    pub breakdown: ObjectiveBreakdown,
    /// `x^T Q x` of `best`; adding `offset` gives `-breakdown.objective`.
    pub qubo_energy: f64,
    pub offset: f64,
    pub penalty: f64,
    pub rounds: usize,
    pub trace: Vec<TraceEntry>,
    pub elapsed: f64,
}

impl SolveReport {
    /// The minimized penalized objective, `qubo_energy + offset`.
    pub fn penalized_objective(&self) -> f64 {
        self.qubo_energy + self.offset
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subproblem {
    pub item_set: Vec<usize>,
    pub position_set: Vec<usize>,
    /// Global variable of each reduced variable, item-major over `item_set × position_set`.
    pub var_map: Vec<usize>,
    pub reduced: QuboMatrix,
    pub clamp_offset: f64,
}

impl Subproblem {
    pub fn build(p: &QuboProblem, item_set: Vec<usize>, position_set: Vec<usize>, x: &BitVector) -> Result<Self> {
        if item_set.len() != position_set.len() {
            return invalid("item and position sets differ in size");
        }
        let var_map: Vec<usize> = item_set
            .iter()
            .flat_map(|&i| position_set.iter().map(move |&j| var_index(p.n, i, j)))
            .collect();
        let (reduced, clamp_offset) = extract_subqubo(&p.q, &var_map, x)?;
        Ok(Self {
            reduced: reduced.with_grid(item_set.len()),
            item_set,
            position_set,
            var_map,
            clamp_offset,
        })
    }
}

/// Positions `current` gives to `items`, sorted.
pub fn positions_for(current: &Assignment, items: &[usize]) -> Vec<usize> {
    let pos = current.positions();
    let mut out: Vec<usize> = items.iter().map(|&i| pos[i]).collect();
    out.sort_unstable();
    out
}

/// Drops the oldest tabu entries until at least `needed` of `universe` indices remain free.
fn relax_tabu(tabu: &[usize], universe: usize, needed: usize) -> Vec<bool> {
    let mut start = 0;
    loop {
        let mut blocked = vec![false; universe];
        for &t in &tabu[start..] {
            if t < universe {
                blocked[t] = true;
            }
        }
        let free = blocked.iter().filter(|&&b| !b).count();
        if free >= needed || start == tabu.len() {
            return blocked;
        }
        start += 1;
    }
}

/// Structured selection with the default top-of-list bias.
pub fn select_structured(
    current: &Assignment,
    n_sub: usize,
    rng: &mut impl Rng,
    tabu: &[Vec<usize>],
) -> Result<(Vec<usize>, Vec<usize>)> {
    select_structured_biased(current, n_sub, rng, tabu, DEFAULT_TOP_BIAS)
}

/// Number of `k`-subsets of `n` things, saturating.
fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    c as usize
}

/// Draws `n_sub` items uniformly at random and pairs them with the positions
/// they currently hold. With probability `top_bias` the draw is restricted to
/// items in the top `2 * n_sub` positions.
///
/// `tabu` holds recently used item sets (sorted, oldest first); a tabu set is
/// never drawn again. When the pool has no other set left, the oldest
/// entries are released.
pub fn select_structured_biased(
    current: &Assignment,
    n_sub: usize,
    rng: &mut impl Rng,
    tabu: &[Vec<usize>],
    top_bias: f64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = current.len();
    if n_sub > n {
        return invalid(format!("n_sub {n_sub} exceeds list size {n}"));
    }
    let mut pool: Vec<usize> = (0..n).collect();
    if rng.random::<f64>() < top_bias {
        pool = current.items()[..(2 * n_sub).min(n)].to_vec();
        pool.sort_unstable();
    }

    let mut in_pool = vec![false; n];
    for &i in &pool {
        in_pool[i] = true;
    }
    let mut blocked: Vec<&Vec<usize>> = tabu
        .iter()
        .filter(|set| set.iter().all(|&i| i < n && in_pool[i]))
        .collect();
    let total = binomial(pool.len(), n_sub);
    if blocked.len() >= total {
        blocked.drain(..=blocked.len() - total);
    }

    loop {
        let mut items: Vec<usize> = sample(rng, pool.len(), n_sub).into_iter().map(|k| pool[k]).collect();
        items.sort_unstable();
        if !blocked.contains(&&items) {
            let positions = positions_for(current, &items);
            return Ok((items, positions));
        }
    }
}

/// Absolute single-flip energy change of every variable at `x`.
pub fn energy_impacts(q: &QuboMatrix, x: &BitVector) -> Result<Vec<f64>> {
    if x.len() != q.num_vars() {
        return invalid("bit vector length does not match the QUBO");
    }
    let fields = q.local_fields(x);
    Ok((0..q.num_vars()).map(|k| q.flip_delta(x, &fields, k).abs()).collect())
}

/// The `size` variables with the largest single-flip energy impact, ties to
/// the lower index. Returned in ascending index order.
pub fn select_energy_impact(p: &QuboProblem, x: &BitVector, size: usize) -> Result<Vec<usize>> {
    select_energy_impact_excluding(&p.q, x, size, &[])
}

/// [`select_energy_impact`] skipping tabu variables (oldest entries released first when needed).
pub fn select_energy_impact_excluding(
    q: &QuboMatrix,
    x: &BitVector,
    size: usize,
    tabu: &[usize],
) -> Result<Vec<usize>> {
    let n = q.num_vars();
    if size > n {
        return invalid(format!("subset size {size} exceeds {n} variables"));
    }
    let impact = energy_impacts(q, x)?;
    let blocked = relax_tabu(tabu, n, size);
    let mut order: Vec<usize> = (0..n).filter(|&k| !blocked[k]).collect();
    order.sort_by(|&a, &b| impact[b].total_cmp(&impact[a]).then(a.cmp(&b)));
    order.truncate(size);
    order.sort_unstable();
    Ok(order)
}

/// Restricts `q` to `vars`, clamping every other variable at its value in `x`.
///
/// Couplings to clamped ones fold into the reduced diagonal, and terms among
/// clamped variables alone collect in the returned offset, so that
/// `reduced.energy(y) + offset == q.energy(merge(x, vars, y))` for every `y`.
pub fn extract_subqubo(q: &QuboMatrix, vars: &[usize], x: &BitVector) -> Result<(QuboMatrix, f64)> {
    let n = q.num_vars();
    if x.len() != n {
        return invalid("bit vector length does not match the QUBO");
    }
    let mut inside = vec![false; n];
    for &v in vars {
        if v >= n {
            return invalid(format!("variable {v} out of range"));
        }
        if std::mem::replace(&mut inside[v], true) {
            return invalid(format!("variable {v} listed twice"));
        }
    }
    let clamped: Vec<usize> = x.ones().filter(|&k| !inside[k]).collect();

    let mut reduced = q.matrix().select(vars);
    for (a, &v) in vars.iter().enumerate() {
        let linear: f64 = clamped.iter().map(|&k| q.get(v, k) + q.get(k, v)).sum();
        reduced[(a, a)] += linear;
    }
    let mut offset = 0.0;
    for &k in &clamped {
        for &l in &clamped {
            offset += q.get(k, l);
        }
    }
    Ok((QuboMatrix::new(reduced)?, offset))
}

/// Copy of `x` with `x[vars[a]] = y[a]`.
pub fn merge(x: &BitVector, vars: &[usize], y: &BitVector) -> Result<BitVector> {
    if vars.len() != y.len() {
        return invalid(format!("{} variables but {} values", vars.len(), y.len()));
    }
    let mut out = x.clone();
    for (a, &v) in vars.iter().enumerate() {
        if v >= out.len() {
            return invalid(format!("variable {v} out of range"));
        }
        out.set(v, y.get(a));
    }
    Ok(out)
}

/// Lowest-energy sample whose merged vector is a valid placement; failing
/// that, the repaired merge of the best sample.
fn choose_candidate(
    inst: &ListingInstance,
    x: &BitVector,
    vars: &[usize],
    outcome: &SubsolveOutcome,
) -> Result<BitVector> {
    let n = inst.n();
    for s in &outcome.samples {
        let merged = merge(x, vars, &s.bits)?;
        if decode(&merged, n)?.is_feasible() {
            return Ok(merged);
        }
    }
    repair(&merge(x, vars, &outcome.best)?, inst)
}

struct Tabu<T> {
    tenure: usize,
    entries: VecDeque<(usize, T)>,
}

impl<T: Clone> Tabu<T> {
    fn new(tenure: usize) -> Self {
        Self {
            tenure,
            entries: VecDeque::new(),
        }
    }

    /// Active entries at `round`, oldest first.
    fn active(&mut self, round: usize) -> Vec<T> {
        while let Some((added, _)) = self.entries.front() {
            if added + self.tenure <= round {
                self.entries.pop_front();
            } else {
                break;
            }
        }
        self.entries.iter().map(|(_, t)| t.clone()).collect()
    }

    fn push(&mut self, round: usize, entry: T) {
        if self.tenure > 0 {
            self.entries.push_back((round, entry));
        }
    }
}

fn to_assignment(x: &BitVector, n: usize) -> Result<Assignment> {
    decode(x, n)?
        .assignment
        .ok_or_else(|| Error::InvalidArgument("bit vector is not a valid placement".into()))
}

fn report_for(
    inst: &ListingInstance,
    p: &QuboProblem,
    best: Assignment,
    rounds: usize,
    trace: Vec<TraceEntry>,
    start: Instant,
) -> Result<SolveReport> {
    let breakdown = qap_objective(inst, &best)?;
    let qubo_energy = p.energy(&BitVector::from_assignment(&best))?;
    Ok(SolveReport {
        best,
        breakdown,
        qubo_energy,
        offset: p.offset,
        penalty: p.m,
        rounds,
        trace,
        elapsed: start.elapsed().as_secs_f64(),
    })
}

fn trace_entry(
    inst: &ListingInstance,
    x: &BitVector,
    round: usize,
    accepted: bool,
    start: Instant,
) -> Result<TraceEntry> {
    let d = decode(x, inst.n())?;
    let (objective, sales_term, diversity_term) = match &d.assignment {
        Some(a) => {
            let b = qap_objective(inst, a)?;
            (b.objective, b.sales_term, b.diversity_term)
        }
        None => (f64::NAN, f64::NAN, f64::NAN),
    };
    Ok(TraceEntry {
        round,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        objective,
        sales_term,
        diversity_term,
        accepted,
        violations: d.violations(),
    })
}

/// Runs the decomposition loop from the linear-assignment warm start.
pub fn solve_decomposed(
    inst: &ListingInstance,
    policy: Policy,
    solver: &dyn Subsolver,
    params: &DecompParams,
) -> Result<SolveReport> {
    let start = Instant::now();
    let n = inst.n();
    params.validate(n)?;
    let sub_vars = params.n_sub * params.n_sub;
    if let Some(cap) = solver.capacity() {
        if sub_vars > cap {
            return Err(Error::SizeLimit {
                what: "subproblem variables",
                actual: sub_vars,
                limit: cap,
            });
        }
    }

    let p = build_qubo(inst, params.penalty)?;
    let mut x = BitVector::from_assignment(&solve_lap(&inst.sales)?.assignment);
    let mut energy = p.energy(&x)?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(params.seed);
    let mut set_tabu = Tabu::new(params.tabu_tenure);
    let mut var_tabu = Tabu::new(params.tabu_tenure);
    let mut trace = vec![trace_entry(inst, &x, 0, true, start)?];
    let mut stale = 0;
    let mut round = 0;

    while stale < params.repeats && start.elapsed() < params.timeout {
        round += 1;
        let (vars, reduced) = match policy {
            Policy::Structured => {
                let current = to_assignment(&x, n)?;
                let active = set_tabu.active(round);
                let (items, positions) =
                    select_structured_biased(&current, params.n_sub, &mut rng, &active, params.top_bias)?;
                set_tabu.push(round, items.clone());
                let sub = Subproblem::build(&p, items, positions, &x)?;
                (sub.var_map, sub.reduced)
            }
            Policy::EnergyImpact => {
                let active = var_tabu.active(round);
                let vars = select_energy_impact_excluding(&p.q, &x, sub_vars, &active)?;
                for &v in &vars {
                    var_tabu.push(round, v);
                }
                let (reduced, _) = extract_subqubo(&p.q, &vars, &x)?;
                (vars, reduced)
            }
        };

        let outcome = solver.solve(&reduced, round as u64)?;
        let candidate = choose_candidate(inst, &x, &vars, &outcome)?;
        let cand_energy = p.energy(&candidate)?;
        let accepted = cand_energy < energy - 1e-12 * energy.abs().max(1.0);
        if accepted {
            x = candidate;
            energy = cand_energy;
            stale = 0;
        } else {
            stale += 1;
        }
        trace.push(trace_entry(inst, &x, round, accepted, start)?);
    }

    let best = match decode(&x, n)?.assignment {
        Some(a) => a,
        None => to_assignment(&repair(&x, inst)?, n)?,
    };
    report_for(inst, &p, best, round, trace, start)
}

/// Solves the whole QUBO with one subsolver call and keeps the best valid placement.
pub fn solve_direct(inst: &ListingInstance, solver: &dyn Subsolver, penalty: Option<f64>) -> Result<SolveReport> {
    let start = Instant::now();
    let p = build_qubo(inst, penalty)?;
    let vars: Vec<usize> = (0..p.num_vars()).collect();
    let outcome = solver.solve(&p.q, 0)?;
    let x = choose_candidate(inst, &BitVector::zeros(p.num_vars()), &vars, &outcome)?;
    let trace = vec![trace_entry(inst, &x, 1, true, start)?];
    report_for(inst, &p, to_assignment(&x, inst.n())?, 1, trace, start)
}

/// Exact placement by enumeration, reported like the other solvers.
pub fn solve_exact(inst: &ListingInstance, penalty: Option<f64>) -> Result<SolveReport> {
    let start = Instant::now();
    let p = build_qubo(inst, penalty)?;
    let (best, _) = brute_force_qap(inst)?;
    let trace = vec![trace_entry(inst, &BitVector::from_assignment(&best), 1, true, start)?];
    report_for(inst, &p, best, 1, trace, start)
}

/// Linear-assignment placement, ignoring diversity.
pub fn solve_linear(inst: &ListingInstance, penalty: Option<f64>) -> Result<SolveReport> {
    let start = Instant::now();
    let p = build_qubo(inst, penalty)?;
    let best = solve_lap(&inst.sales)?.assignment;
    let trace = vec![trace_entry(inst, &BitVector::from_assignment(&best), 0, true, start)?];
    report_for(inst, &p, best, 0, trace, start)
}

/// Sub-instance of the items `items` on the first `items.len()` positions.
fn head_instance(inst: &ListingInstance, items: &[usize]) -> ListingInstance {
    let k = items.len();
    let positions: Vec<usize> = (0..k).collect();
    ListingInstance::new(
        crate::matrix::SquareMatrix::from_fn(k, |a, j| inst.sales[(items[a], j)]),
        inst.similarity.select(items),
        inst.adjacency.select(&positions),
        inst.w,
    )
}

/// Linear assignment over the whole list, then the full objective re-optimized
/// over the items the first stage placed in the top `top_k` positions. The
/// tail keeps its first-stage placement.
pub fn two_stage_solve(
    inst: &ListingInstance,
    top_k: usize,
    solver: &dyn Subsolver,
    params: &DecompParams,
) -> Result<SolveReport> {
    let start = Instant::now();
    let n = inst.n();
    if top_k > n {
        return invalid(format!("top_k {top_k} exceeds list size {n}"));
    }
    let p = build_qubo(inst, params.penalty)?;
    let lap = solve_lap(&inst.sales)?.assignment;
    if top_k < 2 {
        let trace = vec![trace_entry(inst, &BitVector::from_assignment(&lap), 0, true, start)?];
        return report_for(inst, &p, lap, 0, trace, start);
    }

    let head_items = &lap.items()[..top_k];
    let head = head_instance(inst, head_items);
    let (head_best, rounds) = if top_k <= BRUTE_FORCE_MAX_N {
        (brute_force_qap(&head)?.0, 1)
    } else {
        let sub_params = DecompParams {
            n_sub: params.n_sub.min(top_k),
            ..params.clone()
        };
        let r = solve_decomposed(&head, Policy::Structured, solver, &sub_params)?;
        (r.best, r.rounds)
    };

    let mut item_at = lap.items().to_vec();
    for j in 0..top_k {
        item_at[j] = head_items[head_best.item_at(j)];
    }
    let best = Assignment::new(item_at)?;
    let trace = vec![
        trace_entry(inst, &BitVector::from_assignment(&lap), 0, true, start)?,
        trace_entry(inst, &BitVector::from_assignment(&best), 1, true, start)?,
    ];
    report_for(inst, &p, best, rounds, trace, start)
}

/// Trace CSV: `round,elapsed_ms,objective,sales_term,diversity_term,accepted`.
/// Without timing the `elapsed_ms` column is left out.
pub fn write_trace_csv(trace: &[TraceEntry], out: impl std::io::Write, timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if timing {
        w.write_record([
            "round",
            "elapsed_ms",
            "objective",
            "sales_term",
            "diversity_term",
            "accepted",
        ])?;
    } else {
        w.write_record(["round", "objective", "sales_term", "diversity_term", "accepted"])?;
    }
    for t in trace {
        let mut rec = vec![t.round.to_string()];
        if timing {
            rec.push(t.elapsed_ms.to_string());
        }
        rec.extend([
            t.objective.to_string(),
            t.sales_term.to_string(),
            t.diversity_term.to_string(),
            t.accepted.to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
