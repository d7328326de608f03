#![allow(dead_code)]

use listopt::{BitVector, ListingInstance, SquareMatrix};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Every permutation of `0..n`, via Heap's algorithm.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        heap(k - 1, a, out);
        for i in 0..k - 1 {
            if k.is_multiple_of(2) {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
            heap(k - 1, a, out);
        }
    }
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    heap(n, &mut a, &mut out);
    out
}

/// Random instance: sales uniform in [-2, 2], symmetric similarity with zero
/// diagonal uniform in [-2, 2], adjacency band 1.
pub fn random_instance(rng: &mut impl Rng, n: usize, w: f64) -> ListingInstance {
    let sales: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let upper: Vec<f64> = (0..n * n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let sim = SquareMatrix::from_fn(n, |i, k| match i.cmp(&k) {
        std::cmp::Ordering::Less => upper[i * n + k],
        std::cmp::Ordering::Greater => upper[k * n + i],
        std::cmp::Ordering::Equal => 0.0,
    });
    ListingInstance::from_rows(sales, sim.to_rows(), 1, w).expect("valid random instance")
}

/// Bits of the placement `item_at`, laid out item-major.
pub fn placement_bits(item_at: &[usize]) -> Vec<bool> {
    let n = item_at.len();
    let mut x = vec![false; n * n];
    for (j, &i) in item_at.iter().enumerate() {
        x[i * n + j] = true;
    }
    x
}

/// `(S, D, S + w D)` evaluated on explicit bits:
/// `S = Σ s_ij x_ij`, `D = -Σ f_ik d_jl x_ij x_kl` over all index quadruples.
pub fn bit_objective(inst: &ListingInstance, x: &[bool]) -> (f64, f64, f64) {
    let n = inst.n();
    let mut s = 0.0;
    let mut d = 0.0;
    for i in 0..n {
        for j in 0..n {
            if !x[i * n + j] {
                continue;
            }
            s += inst.sales[(i, j)];
            for k in 0..n {
                for l in 0..n {
                    if x[k * n + l] {
                        d -= inst.similarity[(i, k)] * inst.adjacency[(j, l)] as f64;
                    }
                }
            }
        }
    }
    (s, d, s + inst.w * d)
}

/// Maximum of `S + w D` over all placements, by enumeration.
pub fn oracle_optimum(inst: &ListingInstance) -> f64 {
    permutations(inst.n())
        .iter()
        .map(|p| bit_objective(inst, &placement_bits(p)).2)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Maximum of `Σ s[i][j]` over all placements, by enumeration.
pub fn oracle_lap(sales: &SquareMatrix<f64>) -> f64 {
    permutations(sales.n())
        .iter()
        .map(|p| p.iter().enumerate().map(|(j, &i)| sales[(i, j)]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn bits(v: &[bool]) -> BitVector {
    BitVector::from_bits(v.to_vec())
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
