//! Listing instances, feasible assignments and the sales/diversity objective.
//!
//! An instance places `n` items onto `n` list positions. The objective of a
//! placement is `S + w * D`, where `S` sums the estimated sales of each item
//! at its position and `D` is minus the summed similarity of items sitting at
//! adjacent positions. `D` runs over *ordered* item pairs, so every adjacent
//! unordered pair contributes its similarity twice.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::SquareMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct ListingInstance {
    /// `sales[(i, j)]`: estimated sales of item `i` shown at position `j`.
    pub sales: SquareMatrix<f64>,
    /// Symmetric item similarity with a zero diagonal.
    pub similarity: SquareMatrix<f64>,
    /// `adjacency[(j, j')] == 1` when positions `j` and `j'` are neighbours.
    pub adjacency: SquareMatrix<u8>,
    /// Diversity weight.
    pub w: f64,
}

impl ListingInstance {
    pub fn new(sales: SquareMatrix<f64>, similarity: SquareMatrix<f64>, adjacency: SquareMatrix<u8>, w: f64) -> Self {
        Self {
            sales,
            similarity,
            adjacency,
            w,
        }
    }

    /// Instance with band-`band` adjacency built from nested rows.
    pub fn from_rows(sales: Vec<Vec<f64>>, similarity: Vec<Vec<f64>>, band: usize, w: f64) -> Result<Self> {
        let sales = SquareMatrix::from_rows(sales)?;
        let adjacency = banded_adjacency(sales.n(), band)?;
        Ok(Self::new(sales, SquareMatrix::from_rows(similarity)?, adjacency, w))
    }

    pub fn n(&self) -> usize {
        self.sales.n()
    }

    pub fn with_w(&self, w: f64) -> Self {
        Self { w, ..self.clone() }
    }

    /// Smallest band whose banded adjacency equals this instance's adjacency.
    pub fn adjacency_band(&self) -> Option<usize> {
        let n = self.adjacency.n();
        (1..n).find(|&b| banded_adjacency(n, b).is_ok_and(|a| a == self.adjacency))
    }

    fn check_dims(&self) -> Result<()> {
        let n = self.n();
        if self.similarity.n() != n || self.adjacency.n() != n {
            return invalid(format!(
                "matrix sizes disagree: sales {n}, similarity {}, adjacency {}",
                self.similarity.n(),
                self.adjacency.n()
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    DimensionMismatch {
        matrix: &'static str,
        size: usize,
        expected: usize,
    },
    Empty,
    NonFinite {
        matrix: &'static str,
        row: usize,
        col: usize,
    },
    Asymmetric {
        matrix: &'static str,
        row: usize,
        col: usize,
    },
    NonZeroDiagonal {
        matrix: &'static str,
        index: usize,
    },
    NonBinary {
        row: usize,
        col: usize,
        value: u8,
    },
    NegativeWeight(f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimensionMismatch { matrix, size, expected } => {
                write!(f, "{matrix} is {size}x{size}, expected {expected}x{expected}")
            }
            Violation::Empty => write!(f, "instance has no items"),
            Violation::NonFinite { matrix, row, col } => {
                write!(f, "{matrix}[{row}][{col}] is not finite")
            }
            Violation::Asymmetric { matrix, row, col } => {
                write!(f, "{matrix}[{row}][{col}] != {matrix}[{col}][{row}]")
            }
            Violation::NonZeroDiagonal { matrix, index } => {
                write!(f, "{matrix}[{index}][{index}] is not zero")
            }
            Violation::NonBinary { row, col, value } => {
                write!(f, "adjacency[{row}][{col}] = {value} is not binary")
            }
            Violation::NegativeWeight(w) => write!(f, "diversity weight {w} is negative"),
        }
    }
}

/// Lists every broken instance invariant; an empty list means the instance is usable.
pub fn validate_instance(inst: &ListingInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = inst.n();
    if n == 0 {
        out.push(Violation::Empty);
    }
    for (matrix, size) in [("similarity", inst.similarity.n()), ("adjacency", inst.adjacency.n())] {
        if size != n {
            out.push(Violation::DimensionMismatch {
                matrix,
                size,
                expected: n,
            });
        }
    }
    if inst.w.is_nan() || inst.w < 0.0 {
        out.push(Violation::NegativeWeight(inst.w));
    }
    for (matrix, m) in [("sales", &inst.sales), ("similarity", &inst.similarity)] {
        for i in 0..m.n() {
            for j in 0..m.n() {
                if !m[(i, j)].is_finite() {
                    out.push(Violation::NonFinite { matrix, row: i, col: j });
                }
            }
        }
    }

    let f = &inst.similarity;
    for i in 0..f.n() {
        if f[(i, i)] != 0.0 {
            out.push(Violation::NonZeroDiagonal {
                matrix: "similarity",
                index: i,
            });
        }
        for k in i + 1..f.n() {
            if f[(i, k)] != f[(k, i)] {
                out.push(Violation::Asymmetric {
                    matrix: "similarity",
                    row: i,
                    col: k,
                });
            }
        }
    }

    let d = &inst.adjacency;
    for j in 0..d.n() {
        for k in 0..d.n() {
            if d[(j, k)] > 1 {
                out.push(Violation::NonBinary {
                    row: j,
                    col: k,
                    value: d[(j, k)],
                });
            }
        }
        if d[(j, j)] != 0 {
            out.push(Violation::NonZeroDiagonal {
                matrix: "adjacency",
                index: j,
            });
        }
        for k in j + 1..d.n() {
            if d[(j, k)] != d[(k, j)] {
                out.push(Violation::Asymmetric {
                    matrix: "adjacency",
                    row: j,
                    col: k,
                });
            }
        }
    }
    out
}

/// `result[(j, j')] = 1` iff `1 <= |j - j'| <= band`.
pub fn banded_adjacency(n: usize, band: usize) -> Result<SquareMatrix<u8>> {
    if n == 0 || band == 0 || band >= n {
        return invalid(format!("band must satisfy 1 <= band < n, got n={n} band={band}"));
    }
    Ok(SquareMatrix::from_fn(n, |j, k| {
        let gap = j.abs_diff(k);
        u8::from(gap >= 1 && gap <= band)
    }))
}

/// A bijection between items and positions, stored position-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Assignment {
    item_at: Vec<usize>,
}

impl Assignment {
    /// Fails unless `item_at` is a permutation of `0..len`.
    pub fn new(item_at: Vec<usize>) -> Result<Self> {
        let n = item_at.len();
        let mut seen = vec![false; n];
        for &i in &item_at {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return invalid(format!("{item_at:?} is not a permutation of 0..{n}"));
            }
        }
        Ok(Self { item_at })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            item_at: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.item_at.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_at.is_empty()
    }

    pub fn item_at(&self, position: usize) -> usize {
        self.item_at[position]
    }

    pub fn items(&self) -> &[usize] {
        &self.item_at
    }

    /// Item-major view: `result[i]` is the position holding item `i`.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.len()];
        for (j, &i) in self.item_at.iter().enumerate() {
            pos[i] = j;
        }
        pos
    }
}

impl TryFrom<Vec<usize>> for Assignment {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Assignment::new(v)
    }
}

impl From<Assignment> for Vec<usize> {
    fn from(a: Assignment) -> Self {
        a.item_at
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub sales_term: f64,
    pub diversity_term: f64,
    pub objective: f64,
}

fn check_assignment(inst: &ListingInstance, a: &Assignment) -> Result<()> {
    inst.check_dims()?;
    if a.len() != inst.n() {
        return invalid(format!(
            "assignment covers {} positions, instance has {}",
            a.len(),
            inst.n()
        ));
    }
    Ok(())
}

pub fn sales_term(inst: &ListingInstance, a: &Assignment) -> Result<f64> {
    check_assignment(inst, a)?;
    Ok(a.items().iter().enumerate().map(|(j, &i)| inst.sales[(i, j)]).sum())
}

pub fn diversity_term(inst: &ListingInstance, a: &Assignment) -> Result<f64> {
    check_assignment(inst, a)?;
    let items = a.items();
    let mut total = 0.0;
    for (j, &i) in items.iter().enumerate() {
        let adj = inst.adjacency.row(j);
        for (k, &other) in items.iter().enumerate() {
            if adj[k] != 0 {
                total += inst.similarity[(i, other)];
            }
        }
    }
    Ok(-total)
}

pub fn qap_objective(inst: &ListingInstance, a: &Assignment) -> Result<ObjectiveBreakdown> {
    let sales_term = sales_term(inst, a)?;
    let diversity_term = diversity_term(inst, a)?;
    Ok(ObjectiveBreakdown {
        sales_term,
        diversity_term,
        objective: sales_term + inst.w * diversity_term,
    })
}

/// On-disk instance layout. Matrices are full and row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    pub sales: Vec<Vec<f64>>,
    pub similarity: Vec<Vec<f64>>,
    pub adjacency_band: usize,
    pub w: f64,
}

impl InstanceFile {
    pub fn from_instance(inst: &ListingInstance) -> Result<Self> {
        let band = inst
            .adjacency_band()
            .ok_or_else(|| Error::InvalidArgument("adjacency is not banded".into()))?;
        Ok(Self {
            n: inst.n(),
            sales: inst.sales.to_rows(),
            similarity: inst.similarity.to_rows(),
            adjacency_band: band,
            w: inst.w,
        })
    }

    pub fn into_instance(self) -> Result<ListingInstance> {
        let inst = ListingInstance::from_rows(self.sales, self.similarity, self.adjacency_band, self.w)?;
        if inst.n() != self.n {
            return Err(Error::Format(format!(
                "declared n={} but matrices are {}x{}",
                self.n,
                inst.n(),
                inst.n()
            )));
        }
        let violations = validate_instance(&inst);
        if !violations.is_empty() {
            let msgs: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(Error::Format(msgs.join("; ")));
        }
        Ok(inst)
    }
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<ListingInstance> {
    let text = std::fs::read_to_string(path)?;
    let file: InstanceFile = serde_json::from_str(&text)?;
    file.into_instance()
}

pub fn instance_to_json(inst: &ListingInstance) -> Result<String> {
    let mut s = serde_json::to_string(&InstanceFile::from_instance(inst)?)?;
    s.push('\n');
    Ok(s)
}

pub fn write_instance(path: impl AsRef<Path>, inst: &ListingInstance) -> Result<()> {
    std::fs::write(path, instance_to_json(inst)?)?;
    Ok(())
}
