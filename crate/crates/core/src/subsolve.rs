//! QUBO subsolvers: an exhaustive ground-truth oracle for small problems and
//! a single-flip simulated annealer.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::qubo::{decode, BitVector, QuboMatrix};

/// Largest variable count [`exhaustive`] accepts.
pub const EXHAUSTIVE_MAX_VARS: usize = 24;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub bits: BitVector,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubsolveOutcome {
    pub best: BitVector,
    pub best_energy: f64,
    pub reads: usize,
    /// Share of reads ending in a permutation encoding. `None` when the
    /// variables carry no items × positions layout.
    pub feasible_fraction: Option<f64>,
    /// Distinct low-energy vectors, ascending by energy then bit pattern.
    /// `samples[0]` is always `best`.
    pub samples: Vec<Sample>,
}

/// A QUBO minimizer usable inside the decomposition loop.
///
/// `stream` distinguishes repeated calls so that randomized solvers draw
/// fresh randomness per call while staying reproducible.
pub trait Subsolver: Sync {
    fn name(&self) -> &'static str;

    /// Maximum number of variables, if bounded.
    fn capacity(&self) -> Option<usize> {
        None
    }

    fn solve(&self, q: &QuboMatrix, stream: u64) -> Result<SubsolveOutcome>;
}

fn sort_samples(samples: &mut Vec<Sample>) {
    samples.sort_by(|a, b| a.energy.total_cmp(&b.energy).then_with(|| a.bits.cmp(&b.bits)));
    samples.dedup_by(|a, b| a.bits == b.bits);
}

fn is_feasible(bits: &BitVector, grid: usize) -> bool {
    decode(bits, grid).is_ok_and(|d| d.is_feasible())
}

// ---------------------------------------------------------------------------
// Exhaustive

#[derive(Clone, Copy, Debug)]
pub struct Exhaustive {
    /// How many of the lowest-energy vectors to report as samples.
    pub keep: usize,
}

impl Default for Exhaustive {
    fn default() -> Self {
        Self { keep: 64 }
    }
}

impl Subsolver for Exhaustive {
    fn name(&self) -> &'static str {
        "exhaustive"
    }

    fn capacity(&self) -> Option<usize> {
        Some(EXHAUSTIVE_MAX_VARS)
    }

    fn solve(&self, q: &QuboMatrix, _stream: u64) -> Result<SubsolveOutcome> {
        exhaustive_keep(q, self.keep)
    }
}

/// Global minimum of `x^T Q x` over all `2^N` vectors; ties go to the
/// lexicographically smallest bit string.
pub fn exhaustive(q: &QuboMatrix) -> Result<SubsolveOutcome> {
    exhaustive_keep(q, Exhaustive::default().keep)
}

/// Heap entry ordered by (energy, bit string) so the max-heap pops the worst kept vector.
struct Ranked {
    energy: f64,
    lex: u32,
    mask: u32,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.energy.total_cmp(&other.energy).then(self.lex.cmp(&other.lex))
    }
}

fn mask_bits(mask: u32, n: usize) -> BitVector {
    BitVector::from_bits((0..n).map(|k| mask >> k & 1 == 1).collect())
}

fn exhaustive_keep(q: &QuboMatrix, keep: usize) -> Result<SubsolveOutcome> {
    let n = q.num_vars();
    if n > EXHAUSTIVE_MAX_VARS {
        return Err(Error::SizeLimit {
            what: "QUBO variables",
            actual: n,
            limit: EXHAUSTIVE_MAX_VARS,
        });
    }
    let keep = keep.max(1);
    // Bit k of the mask is variable k; reversing puts variable 0 in the most
    // significant place so integer order matches lexicographic order.
    let lex = |mask: u32| if n == 0 { 0 } else { mask.reverse_bits() >> (32 - n) };

    let mut heap = BinaryHeap::with_capacity(keep + 1);
    let mut x = BitVector::zeros(n);
    let mut fields = vec![0.0; n];
    let mut energy = 0.0;
    let mut mask = 0u32;
    heap.push(Ranked { energy, lex: 0, mask });

    for t in 1u64..(1u64 << n) {
        let k = t.trailing_zeros() as usize;
        energy += q.flip_delta(&x, &fields, k);
        let sign = if x.get(k) { -1.0 } else { 1.0 };
        x.set(k, !x.get(k));
        mask ^= 1 << k;
        for (b, h) in fields.iter_mut().enumerate() {
            if b != k {
                *h += sign * q.get(b, k);
            }
        }
        if t & 0xFFFF == 0 {
            // resynchronize the running sums
            energy = q.energy(&x)?;
            fields = q.local_fields(&x);
        }

        let cand = Ranked {
            energy,
            lex: lex(mask),
            mask,
        };
        if heap.len() < keep {
            heap.push(cand);
        } else if cand < *heap.peek().expect("heap is non-empty") {
            heap.pop();
            heap.push(cand);
        }
    }

    let mut samples = heap
        .into_iter()
        .map(|r| {
            let bits = mask_bits(r.mask, n);
            let energy = q.energy(&bits)?;
            Ok(Sample { bits, energy })
        })
        .collect::<Result<Vec<_>>>()?;
    sort_samples(&mut samples);

    let best = samples[0].clone();
    let feasible_fraction = q.grid().map(|g| if is_feasible(&best.bits, g) { 1.0 } else { 0.0 });
    Ok(SubsolveOutcome {
        best: best.bits,
        best_energy: best.energy,
        reads: 1,
        feasible_fraction,
        samples,
    })
}

// ---------------------------------------------------------------------------
// Simulated annealing

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubsolverParams {
    pub num_reads: usize,
    pub sweeps: usize,
    /// Initial and final inverse temperature; derived from the matrix when absent.
    pub beta_range: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for SubsolverParams {
    fn default() -> Self {
        Self {
            num_reads: 1000,
            sweeps: 1000,
            beta_range: None,
            seed: 0,
        }
    }
}

impl SubsolverParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_reads == 0 || self.sweeps == 0 {
            return invalid("num_reads and sweeps must be positive");
        }
        if let Some((b0, b1)) = self.beta_range {
            if !(b0 > 0.0 && b0 < b1 && b1.is_finite()) {
                return invalid(format!("beta range ({b0}, {b1}) must satisfy 0 < initial < final"));
            }
        }
        Ok(())
    }
}

/// `(ln 2 / ΔE_max, ln 100 / ΔE_min)`, where `ΔE_max` bounds the largest
/// single-flip energy change and `ΔE_min` is the smallest nonzero coefficient.
pub fn auto_beta_range(q: &QuboMatrix) -> (f64, f64) {
    let n = q.num_vars();
    let mut max_delta = 0.0f64;
    let mut min_delta = f64::INFINITY;
    for a in 0..n {
        let diag = q.get(a, a).abs();
        if diag > 0.0 {
            min_delta = min_delta.min(diag);
        }
        let mut bound = diag;
        for b in 0..n {
            if b != a {
                let c = 2.0 * q.get(a, b).abs();
                bound += c;
                if c > 0.0 {
                    min_delta = min_delta.min(c);
                }
            }
        }
        max_delta = max_delta.max(bound);
    }
    if max_delta == 0.0 {
        return (0.1, 1.0);
    }
    let b0 = std::f64::consts::LN_2 / max_delta;
    let b1 = 100f64.ln() / min_delta;
    if b1 > b0 {
        (b0, b1)
    } else {
        (b0, b0 * 50.0)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-read generator: xoshiro256++ seeded from a splitmix64 mix of
/// `(seed, stream, read)`.
pub fn read_rng(seed: u64, stream: u64, read: u64) -> Xoshiro256PlusPlus {
    let mixed = splitmix64(seed ^ splitmix64(stream ^ splitmix64(read)));
    Xoshiro256PlusPlus::seed_from_u64(mixed)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SimulatedAnnealing {
    pub params: SubsolverParams,
}

impl SimulatedAnnealing {
    pub fn new(params: SubsolverParams) -> Self {
        Self { params }
    }
}

impl Subsolver for SimulatedAnnealing {
    fn name(&self) -> &'static str {
        "simulated-annealing"
    }

    fn solve(&self, q: &QuboMatrix, stream: u64) -> Result<SubsolveOutcome> {
        anneal(q, &self.params, stream)
    }
}

pub fn simulated_annealing(q: &QuboMatrix, params: &SubsolverParams) -> Result<SubsolveOutcome> {
    anneal(q, params, 0)
}

fn anneal(q: &QuboMatrix, params: &SubsolverParams, stream: u64) -> Result<SubsolveOutcome> {
    params.validate()?;
    let n = q.num_vars();
    let (b0, b1) = params.beta_range.unwrap_or_else(|| auto_beta_range(q));
    let schedule: Vec<f64> = if params.sweeps == 1 {
        vec![b1]
    } else {
        let ratio = (b1 / b0).powf(1.0 / (params.sweeps - 1) as f64);
        (0..params.sweeps).map(|s| b0 * ratio.powi(s as i32)).collect()
    };
    let diag: Vec<f64> = (0..n).map(|k| q.get(k, k)).collect();

    let finals: Vec<BitVector> = (0..params.num_reads as u64)
        .into_par_iter()
        .map(|read| {
            let mut rng = read_rng(params.seed, stream, read);
            let mut x: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
            let mut fields = vec![0.0; n];
            for b in (0..n).filter(|&b| x[b]) {
                for (k, h) in fields.iter_mut().enumerate() {
                    if k != b {
                        *h += q.get(k, b);
                    }
                }
            }
            for &beta in &schedule {
                for k in 0..n {
                    let d = diag[k] + 2.0 * fields[k];
                    let delta = if x[k] { -d } else { d };
                    if delta <= 0.0 || rng.random::<f64>() < (-beta * delta).exp() {
                        let sign = if x[k] { -1.0 } else { 1.0 };
                        x[k] = !x[k];
                        let row = q.matrix().row(k);
                        for (b, h) in fields.iter_mut().enumerate() {
                            if b != k {
                                *h += sign * row[b];
                            }
                        }
                    }
                }
            }
            BitVector::from_bits(x)
        })
        .collect();

    let feasible_fraction = q
        .grid()
        .map(|g| finals.iter().filter(|b| is_feasible(b, g)).count() as f64 / finals.len() as f64);
    let mut samples = finals
        .into_iter()
        .map(|bits| {
            let energy = q.energy(&bits)?;
            Ok(Sample { bits, energy })
        })
        .collect::<Result<Vec<_>>>()?;
    sort_samples(&mut samples);
    let best = samples[0].clone();
    Ok(SubsolveOutcome {
        best: best.bits,
        best_energy: best.energy,
        reads: params.num_reads,
        feasible_fraction,
        samples,
    })
}
