//! Exact solvers for the placement problem: the linear assignment (sales only)
//! in O(n³), and exhaustive search over permutations for the full objective.

use crate::error::{invalid, Error, Result};
use crate::matrix::SquareMatrix;
use crate::model::{qap_objective, Assignment, ListingInstance, ObjectiveBreakdown};

/// Largest list size [`brute_force_qap`] accepts.
pub const BRUTE_FORCE_MAX_N: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct LapResult {
    pub assignment: Assignment,
    pub value: f64,
}

/// Maximizes `Σ_j sales[(item_at[j], j)]` over all permutations.
///
/// Shortest augmenting path Hungarian method with row/column potentials on the
/// negated matrix.
pub fn solve_lap(sales: &SquareMatrix<f64>) -> Result<LapResult> {
    let n = sales.n();
    if let Some((k, _)) = sales.as_slice().iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return invalid(format!("sales[{}][{}] is not finite", k / n, k % n));
    }

    // 1-based arrays; index 0 is the virtual source column.
    let cost = |i: usize, j: usize| -sales[(i - 1, j - 1)];
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let item_at: Vec<usize> = (1..=n).map(|j| row_of[j] - 1).collect();
    let value = item_at.iter().enumerate().map(|(j, &i)| sales[(i, j)]).sum();
    Ok(LapResult {
        assignment: Assignment::new(item_at)?,
        value,
    })
}

/// Exact maximizer of the full objective by depth-first enumeration of
/// permutations in lexicographic order of `item_at`. Only strictly better
/// leaves replace the incumbent, so ties resolve to the lexicographically
/// smallest permutation.
pub fn brute_force_qap(inst: &ListingInstance) -> Result<(Assignment, ObjectiveBreakdown)> {
    let n = inst.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::SizeLimit {
            what: "list size",
            actual: n,
            limit: BRUTE_FORCE_MAX_N,
        });
    }
    if inst.similarity.n() != n || inst.adjacency.n() != n {
        return invalid("matrix sizes disagree");
    }

    // coupling[(i, k)] = w * (f[i][k] + f[k][i]): the ordered-pair weight of one adjacent pair.
    let coupling = SquareMatrix::from_fn(n, |i, k| inst.w * (inst.similarity[(i, k)] + inst.similarity[(k, i)]));
    let mut search = Search {
        inst,
        coupling: &coupling,
        used: vec![false; n],
        prefix: Vec::with_capacity(n),
        best: f64::NEG_INFINITY,
        best_items: (0..n).collect(),
    };
    search.descend(0.0);

    let assignment = Assignment::new(search.best_items)?;
    let breakdown = qap_objective(inst, &assignment)?;
    Ok((assignment, breakdown))
}

struct Search<'a> {
    inst: &'a ListingInstance,
    coupling: &'a SquareMatrix<f64>,
    used: Vec<bool>,
    prefix: Vec<usize>,
    best: f64,
    best_items: Vec<usize>,
}

impl Search<'_> {
    fn descend(&mut self, value: f64) {
        let n = self.used.len();
        let j = self.prefix.len();
        if j == n {
            if value > self.best {
                self.best = value;
                self.best_items.clone_from(&self.prefix);
            }
            return;
        }
        let adj = self.inst.adjacency.row(j);
        for item in 0..n {
            if self.used[item] {
                continue;
            }
            let mut gain = self.inst.sales[(item, j)];
            for (k, &other) in self.prefix.iter().enumerate() {
                if adj[k] != 0 {
                    gain -= self.coupling[(item, other)];
                }
            }
            self.used[item] = true;
            self.prefix.push(item);
            self.descend(value + gain);
            self.prefix.pop();
            self.used[item] = false;
        }
    }
}
