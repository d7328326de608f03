//! Diversity-weight sweeps and structured-vs-energy-impact benchmarks, with
//! their CSV outputs.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::assign::{brute_force_qap, BRUTE_FORCE_MAX_N};
use crate::decomp::{solve_decomposed, DecompParams, Policy};
use crate::error::{invalid, Result};
use crate::ingest::{generate_synthetic, Profile};
use crate::model::ListingInstance;
use crate::subsolve::{SimulatedAnnealing, SubsolverParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub w: f64,
    pub sales_term: f64,
    pub diversity_term: f64,
    pub objective: f64,
}

#[derive(Clone, Debug)]
pub enum SweepSolver {
    Exact,
    Decomposed {
        params: DecompParams,
        annealer: SubsolverParams,
    },
}

impl SweepSolver {
    /// Exact search when the list is small enough, structured decomposition otherwise.
    pub fn for_size(n: usize, params: DecompParams, annealer: SubsolverParams) -> Self {
        if n <= BRUTE_FORCE_MAX_N {
            SweepSolver::Exact
        } else {
            SweepSolver::Decomposed { params, annealer }
        }
    }
}

/// `0.0, 0.1, ..., 1.0`.
pub fn default_w_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

/// Solves `inst` once per weight; rows come back ordered by `w`.
pub fn sweep_w(inst: &ListingInstance, ws: &[f64], solver: &SweepSolver) -> Result<Vec<SweepRow>> {
    if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return invalid("diversity weights must be finite and non-negative");
    }
    let mut ws = ws.to_vec();
    ws.sort_by(f64::total_cmp);
    ws.iter()
        .map(|&w| {
            let inst = inst.with_w(w);
            let b = match solver {
                SweepSolver::Exact => brute_force_qap(&inst)?.1,
                SweepSolver::Decomposed { params, annealer } => {
                    solve_decomposed(&inst, Policy::Structured, &SimulatedAnnealing::new(*annealer), params)?.breakdown
                }
            };
            Ok(SweepRow {
                w,
                sales_term: b.sales_term,
                diversity_term: b.diversity_term,
                objective: b.objective,
            })
        })
        .collect()
}

pub fn write_sweep_csv(rows: &[SweepRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["w", "sales_term", "diversity_term", "objective"])?;
    for r in rows {
        w.write_record([
            r.w.to_string(),
            r.sales_term.to_string(),
            r.diversity_term.to_string(),
            r.objective.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub profile: Profile,
    /// Loop settings shared by both policies; the seed is replaced per run.
    pub decomp: DecompParams,
    /// Annealer settings shared by both policies; the seed is replaced per run.
    pub annealer: SubsolverParams,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![12, 16, 20, 24],
            seeds: (0..10).collect(),
            profile: Profile::Clustered,
            decomp: DecompParams::default(),
            annealer: SubsolverParams {
                num_reads: 100,
                sweeps: 200,
                ..SubsolverParams::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub seed: u64,
    pub policy: Policy,
    /// Minimized penalized objective of the returned placement.
    pub objective: f64,
    pub elapsed: f64,
    pub rounds: usize,
    /// Trace entries whose incumbent violated a constraint.
    pub infeasible_iterates: usize,
}

/// One run per (size, seed, policy). Both policies of a pair see the same
/// synthetic instance and the same seeds. Rows are sorted by (n, seed, policy).
pub fn bench_decomp(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if let Some(&n) = cfg.sizes.iter().find(|&&n| n < cfg.decomp.n_sub) {
        return invalid(format!("size {n} is below n_sub {}", cfg.decomp.n_sub));
    }
    let cells: Vec<(usize, u64, Policy)> = cfg
        .sizes
        .iter()
        .flat_map(|&n| {
            cfg.seeds
                .iter()
                .flat_map(move |&s| [Policy::Structured, Policy::EnergyImpact].map(|p| (n, s, p)))
        })
        .collect();

    let mut rows = cells
        .into_par_iter()
        .map(|(n, seed, policy)| {
            let inst = generate_synthetic(n, seed, cfg.profile)?;
            let params = DecompParams {
                seed,
                ..cfg.decomp.clone()
            };
            let solver = SimulatedAnnealing::new(SubsolverParams { seed, ..cfg.annealer });
            let r = solve_decomposed(&inst, policy, &solver, &params)?;
            Ok(BenchRow {
                n,
                seed,
                policy,
                objective: r.penalized_objective(),
                elapsed: r.elapsed,
                rounds: r.rounds,
                infeasible_iterates: r.trace.iter().filter(|t| t.violations > 0).count(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| (r.n, r.seed, r.policy));
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GapRow {
    pub n: usize,
    pub runs: usize,
    pub structured_mean: f64,
    pub baseline_mean: f64,
    /// `structured_mean - baseline_mean`; negative favours the structured policy.
    pub gap: f64,
}

pub fn summarize(rows: &[BenchRow]) -> Vec<GapRow> {
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|n| {
            let mean = |policy| {
                let v: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.n == n && r.policy == policy)
                    .map(|r| r.objective)
                    .collect();
                (v.iter().sum::<f64>() / v.len() as f64, v.len())
            };
            let (structured_mean, runs) = mean(Policy::Structured);
            let (baseline_mean, _) = mean(Policy::EnergyImpact);
            GapRow {
                n,
                runs,
                structured_mean,
                baseline_mean,
                gap: structured_mean - baseline_mean,
            }
        })
        .collect()
}

/// Bench CSV: `n,seed,policy,objective,elapsed`; `elapsed` is dropped without timing.
pub fn write_bench_csv(rows: &[BenchRow], out: impl Write, timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["n", "seed", "policy", "objective"];
    if timing {
        header.push("elapsed");
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.n.to_string(),
            r.seed.to_string(),
            r.policy.to_string(),
            r.objective.to_string(),
        ];
        if timing {
            rec.push(r.elapsed.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(gaps: &[GapRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "runs", "structured_mean", "baseline_mean", "gap"])?;
    for g in gaps {
        w.write_record([
            g.n.to_string(),
            g.runs.to_string(),
            g.structured_mean.to_string(),
            g.baseline_mean.to_string(),
            g.gap.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Spearman rank correlation with average ranks for ties. `None` when either
/// side has no spread.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let mean = (x.len() as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean).powi(2);
        syy += (b - mean).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}
