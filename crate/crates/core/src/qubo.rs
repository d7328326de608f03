//! Penalized QUBO encoding of a listing instance.
//!
//! Variable `idx(i, j) = i * n + j` is 1 when item `i` sits at position `j`.
//! The matrix is kept symmetric: a logical coupling `J` between two distinct
//! variables is stored as `J / 2` on both sides, so `x^T Q x` counts it once.
//! The constant `2 n M` produced by expanding the squared constraint terms is
//! tracked as `offset`, which makes `energy(x) + offset == -objective(x)` for
//! every feasible `x`.

use std::fmt::Write as _;
use std::io::BufRead;

use crate::error::{invalid, Error, Result};
use crate::matrix::SquareMatrix;
use crate::model::{Assignment, ListingInstance};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVector(Vec<bool>);

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    /// One-hot encoding of an assignment, `n²` bits.
    pub fn from_assignment(a: &Assignment) -> Self {
        let n = a.len();
        let mut bits = vec![false; n * n];
        for (j, &i) in a.items().iter().enumerate() {
            bits[i * n + j] = true;
        }
        Self(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, k: usize) -> bool {
        self.0[k]
    }

    #[inline]
    pub fn set(&mut self, k: usize, value: bool) {
        self.0[k] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(k, _)| k)
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

impl From<Vec<bool>> for BitVector {
    fn from(bits: Vec<bool>) -> Self {
        Self(bits)
    }
}

/// Symmetric coefficient matrix of `x^T Q x`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuboMatrix {
    q: SquareMatrix<f64>,
    /// Side length when the variables form an items × positions grid.
    grid: Option<usize>,
}

impl QuboMatrix {
    pub fn new(q: SquareMatrix<f64>) -> Result<Self> {
        if !q.is_symmetric() {
            return invalid("QUBO matrix must be symmetric");
        }
        Ok(Self { q, grid: None })
    }

    /// Symmetrizes an arbitrary square matrix without changing `x^T Q x`.
    pub fn symmetrized(q: &SquareMatrix<f64>) -> Self {
        let q = SquareMatrix::from_fn(q.n(), |a, b| 0.5 * (q[(a, b)] + q[(b, a)]));
        Self { q, grid: None }
    }

    pub fn with_grid(mut self, side: usize) -> Self {
        debug_assert_eq!(side * side, self.num_vars());
        self.grid = Some(side);
        self
    }

    pub fn grid(&self) -> Option<usize> {
        self.grid
    }

    pub fn num_vars(&self) -> usize {
        self.q.n()
    }

    pub fn matrix(&self) -> &SquareMatrix<f64> {
        &self.q
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.q[(a, b)]
    }

    pub fn energy(&self, x: &BitVector) -> Result<f64> {
        if x.len() != self.num_vars() {
            return invalid(format!(
                "bit vector has {} entries, QUBO has {} variables",
                x.len(),
                self.num_vars()
            ));
        }
        let ones: Vec<usize> = x.ones().collect();
        let mut total = 0.0;
        for &a in &ones {
            let row = self.q.row(a);
            for &b in &ones {
                total += row[b];
            }
        }
        Ok(total)
    }

    /// `fields[k] = Σ_{b != k} q[k][b] x_b`.
    pub fn local_fields(&self, x: &BitVector) -> Vec<f64> {
        let n = self.num_vars();
        let mut h = vec![0.0; n];
        for b in x.ones() {
            for (k, hk) in h.iter_mut().enumerate() {
                if k != b {
                    *hk += self.q[(k, b)];
                }
            }
        }
        h
    }

    /// Energy change from flipping bit `k`, given the local fields of `x`.
    #[inline]
    pub fn flip_delta(&self, x: &BitVector, fields: &[f64], k: usize) -> f64 {
        let d = self.q[(k, k)] + 2.0 * fields[k];
        if x.get(k) {
            -d
        } else {
            d
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuboProblem {
    /// List size; the problem has `n²` variables.
    pub n: usize,
    pub q: QuboMatrix,
    pub offset: f64,
    /// Constraint penalty weight.
    pub m: f64,
}

impl QuboProblem {
    pub fn num_vars(&self) -> usize {
        self.q.num_vars()
    }

    pub fn energy(&self, x: &BitVector) -> Result<f64> {
        self.q.energy(x)
    }
}

#[inline]
pub fn var_index(n: usize, item: usize, position: usize) -> usize {
    item * n + position
}

fn core_matrix(inst: &ListingInstance) -> SquareMatrix<f64> {
    let n = inst.n();
    let mut q = SquareMatrix::zeros(n * n);
    for i in 0..n {
        for j in 0..n {
            let a = var_index(n, i, j);
            q[(a, a)] = -inst.sales[(i, j)];
            for k in 0..n {
                if k == i {
                    continue;
                }
                let f = inst.similarity[(i, k)];
                if f == 0.0 {
                    continue;
                }
                for l in 0..n {
                    if inst.adjacency[(j, l)] != 0 {
                        q[(a, var_index(n, k, l))] += inst.w * f;
                    }
                }
            }
        }
    }
    q
}

/// Penalty weight from the penalty-free matrix: the largest absolute QUBO
/// coefficient, reading the matrix in upper-triangular form (diagonal entries
/// as they are, off-diagonal pairs as `q[a][b] + q[b][a]`). Falls back to 1
/// for an all-zero matrix.
pub fn default_m(q_core: &SquareMatrix<f64>) -> f64 {
    let n = q_core.n();
    let mut m = 0.0f64;
    for a in 0..n {
        m = m.max(q_core[(a, a)].abs());
        for b in a + 1..n {
            m = m.max((q_core[(a, b)] + q_core[(b, a)]).abs());
        }
    }
    if m == 0.0 {
        1.0
    } else {
        m
    }
}

/// Builds the penalized QUBO. With `m = None` the penalty weight comes from
/// [`default_m`] on the sales and diversity terms alone.
pub fn build_qubo(inst: &ListingInstance, m: Option<f64>) -> Result<QuboProblem> {
    let n = inst.n();
    if inst.similarity.n() != n || inst.adjacency.n() != n {
        return invalid("matrix sizes disagree");
    }
    let mut q = core_matrix(inst);
    let m = match m {
        Some(m) if !m.is_finite() || m < 0.0 => {
            return invalid(format!("penalty weight must be finite and non-negative, got {m}"))
        }
        Some(m) => m,
        None => default_m(&q),
    };

    // (Σ_j x_ij - 1)² = -Σ_j x_ij + 2 Σ_{j<j'} x_ij x_ij' + 1, likewise per column.
    for i in 0..n {
        for j in 0..n {
            let a = var_index(n, i, j);
            q[(a, a)] -= 2.0 * m;
            for l in 0..n {
                if l != j {
                    q[(a, var_index(n, i, l))] += m;
                }
            }
            for k in 0..n {
                if k != i {
                    q[(a, var_index(n, k, j))] += m;
                }
            }
        }
    }

    Ok(QuboProblem {
        n,
        q: QuboMatrix::new(q)?.with_grid(n),
        offset: 2.0 * n as f64 * m,
        m,
    })
}

pub fn energy(p: &QuboProblem, x: &BitVector) -> Result<f64> {
    p.energy(x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    pub assignment: Option<Assignment>,
    /// Items not placed exactly once.
    pub row_violations: usize,
    /// Positions not filled exactly once.
    pub col_violations: usize,
}

impl DecodeResult {
    pub fn is_feasible(&self) -> bool {
        self.assignment.is_some()
    }

    pub fn violations(&self) -> usize {
        self.row_violations + self.col_violations
    }
}

pub fn decode(x: &BitVector, n: usize) -> Result<DecodeResult> {
    if x.len() != n * n {
        return invalid(format!("bit vector has {} entries, expected {}", x.len(), n * n));
    }
    let mut row = vec![0usize; n];
    let mut col = vec![0usize; n];
    let mut item_at = vec![usize::MAX; n];
    for k in x.ones() {
        let (i, j) = (k / n, k % n);
        row[i] += 1;
        col[j] += 1;
        item_at[j] = i;
    }
    let row_violations = row.iter().filter(|&&c| c != 1).count();
    let col_violations = col.iter().filter(|&&c| c != 1).count();
    let assignment = if row_violations == 0 && col_violations == 0 {
        Some(Assignment::new(item_at)?)
    } else {
        None
    };
    Ok(DecodeResult {
        assignment,
        row_violations,
        col_violations,
    })
}

/// Turns any `n²` bit vector into a feasible one.
///
/// Cells that are the only 1 in both their row and column are kept. The
/// remaining items and positions are then paired greedily by descending
/// sales, ties going to the lower `(item, position)`.
pub fn repair(x: &BitVector, inst: &ListingInstance) -> Result<BitVector> {
    let n = inst.n();
    if x.len() != n * n {
        return invalid(format!("bit vector has {} entries, expected {}", x.len(), n * n));
    }
    let mut row = vec![0usize; n];
    let mut col = vec![0usize; n];
    for k in x.ones() {
        row[k / n] += 1;
        col[k % n] += 1;
    }

    let mut out = BitVector::zeros(n * n);
    let mut item_done = vec![false; n];
    let mut pos_done = vec![false; n];
    for k in x.ones() {
        let (i, j) = (k / n, k % n);
        if row[i] == 1 && col[j] == 1 {
            out.set(k, true);
            item_done[i] = true;
            pos_done[j] = true;
        }
    }

    let mut cells: Vec<(usize, usize)> = (0..n)
        .filter(|&i| !item_done[i])
        .flat_map(|i| (0..n).filter(|&j| !pos_done[j]).map(move |j| (i, j)))
        .collect();
    cells.sort_by(|&(i1, j1), &(i2, j2)| {
        inst.sales[(i2, j2)]
            .total_cmp(&inst.sales[(i1, j1)])
            .then((i1, j1).cmp(&(i2, j2)))
    });
    for (i, j) in cells {
        if !item_done[i] && !pos_done[j] {
            out.set(var_index(n, i, j), true);
            item_done[i] = true;
            pos_done[j] = true;
        }
    }
    Ok(out)
}

/// Text export: header `N offset M`, then `row col value` for every nonzero
/// upper-triangle entry. Floats use the shortest round-trip representation.
pub fn export_qubo(p: &QuboProblem) -> String {
    let q = p.q.matrix();
    let mut out = format!("{} {} {}\n", q.n(), p.offset, p.m);
    for a in 0..q.n() {
        for b in a..q.n() {
            let v = q[(a, b)];
            if v != 0.0 {
                let _ = writeln!(out, "{a} {b} {v}");
            }
        }
    }
    out
}

pub fn import_qubo(reader: impl BufRead) -> Result<QuboProblem> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("missing QUBO header".into()))??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [num_vars, offset, m] = fields[..] else {
        return Err(Error::Format(format!("bad QUBO header {header:?}")));
    };
    let num_vars: usize = parse(num_vars)?;
    let offset: f64 = parse(offset)?;
    let m: f64 = parse(m)?;
    let n = (num_vars as f64).sqrt().round() as usize;
    if n * n != num_vars {
        return Err(Error::Format(format!("{num_vars} variables is not a square grid")));
    }

    let mut q = SquareMatrix::zeros(num_vars);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [a, b, v] = fields[..] else {
            return Err(Error::Format(format!("bad QUBO entry {line:?}")));
        };
        let (a, b, v): (usize, usize, f64) = (parse(a)?, parse(b)?, parse(v)?);
        if a > b || b >= num_vars {
            return Err(Error::Format(format!("entry ({a}, {b}) outside the upper triangle")));
        }
        q[(a, b)] = v;
        q[(b, a)] = v;
    }
    Ok(QuboProblem {
        n,
        q: QuboMatrix::new(q)?.with_grid(n),
        offset,
        m,
    })
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Format(format!("cannot parse {s:?}")))
}
