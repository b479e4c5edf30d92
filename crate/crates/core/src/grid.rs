//! The dose-combination grid, its dominance partial order and complete
//! orderings (linear extensions).
//!
//! Combinations are written `(i, j)` with `i` the level of agent A (the
//! grid column) and `j` the level of agent B (the grid row), both 1-based.
//! Internally combinations are addressed by their row-major index
//! `(j - 1) * n_a + (i - 1)`, and positions within an ordering are 0-based.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default cap on the number of combinations `enumerate_orderings` accepts.
pub const DEFAULT_ENUMERATION_CAP: usize = 16;

/// An `n_b x n_a` lattice of combinations: `n_a` levels of agent A along the
/// columns and `n_b` levels of agent B along the rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DoseGrid {
    n_a: usize,
    n_b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Combo {
    /// Level of agent A, 1-based.
    pub i: usize,
    /// Level of agent B, 1-based.
    pub j: usize,
}

impl Combo {
    pub const fn new(i: usize, j: usize) -> Self {
        Combo { i, j }
    }

    /// Componentwise dominance: `self` is at most as toxic as `other` under
    /// every monotone scenario. Reflexive.
    pub fn dominates(self, other: Combo) -> bool {
        self.i <= other.i && self.j <= other.j
    }

    pub fn comparable(self, other: Combo) -> bool {
        self.dominates(other) || other.dominates(self)
    }
}

impl fmt::Display for Combo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i, self.j)
    }
}

impl Serialize for Combo {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.i, self.j].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Combo {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [i, j] = <[usize; 2]>::deserialize(d)?;
        Ok(Combo { i, j })
    }
}

/// Free-function form of [`Combo::dominates`].
pub fn dominates(a: Combo, b: Combo) -> bool {
    a.dominates(b)
}

impl DoseGrid {
    /// `rows` are the levels of agent B, `cols` the levels of agent A.
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid dimensions must be positive, got {rows}x{cols}"
            )));
        }
        Ok(DoseGrid { n_a: cols, n_b: rows })
    }

    pub fn rows(&self) -> usize {
        self.n_b
    }

    pub fn cols(&self) -> usize {
        self.n_a
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }

    /// Number of combinations.
    pub fn k(&self) -> usize {
        self.n_a * self.n_b
    }

    pub fn contains(&self, c: Combo) -> bool {
        (1..=self.n_a).contains(&c.i) && (1..=self.n_b).contains(&c.j)
    }

    pub fn check(&self, c: Combo) -> Result<()> {
        if self.contains(c) {
            Ok(())
        } else {
            Err(Error::ComboOutOfGrid { combo: c, rows: self.n_b, cols: self.n_a })
        }
    }

    /// Row-major index of a combination (agent-B level major).
    pub fn index(&self, c: Combo) -> usize {
        debug_assert!(self.contains(c));
        (c.j - 1) * self.n_a + (c.i - 1)
    }

    pub fn combo(&self, index: usize) -> Combo {
        debug_assert!(index < self.k());
        Combo { i: index % self.n_a + 1, j: index / self.n_a + 1 }
    }

    /// All combinations in row-major order.
    pub fn combos(&self) -> impl Iterator<Item = Combo> + '_ {
        (0..self.k()).map(move |x| self.combo(x))
    }

    /// Combinations strictly below `c` in the dominance order.
    pub fn strict_predecessors(&self, c: Combo) -> Vec<Combo> {
        self.combos().filter(|&d| d != c && d.dominates(c)).collect()
    }

    /// Combinations strictly above `c` in the dominance order.
    pub fn strict_successors(&self, c: Combo) -> Vec<Combo> {
        self.combos().filter(|&d| d != c && c.dominates(d)).collect()
    }

    /// Bitmask (over row-major indices) of the immediate lower covers of
    /// each combination: `(i-1, j)` and `(i, j-1)`.
    fn lower_cover_masks(&self) -> Vec<u64> {
        self.combos()
            .map(|c| {
                let mut m = 0u64;
                if c.i > 1 {
                    m |= 1 << self.index(Combo::new(c.i - 1, c.j));
                }
                if c.j > 1 {
                    m |= 1 << self.index(Combo::new(c.i, c.j - 1));
                }
                m
            })
            .collect()
    }
}

/// A complete ordering of all combinations of a grid that respects
/// dominance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ordering {
    seq: Vec<Combo>,
    /// position (0-based) of each combination, by row-major index
    pos: Vec<usize>,
    grid: DoseGrid,
}

impl Ordering {
    pub fn new(grid: DoseGrid, seq: Vec<Combo>) -> Result<Self> {
        if seq.len() != grid.k() {
            return Err(Error::InvalidOrdering(format!(
                "expected {} combinations, got {}",
                grid.k(),
                seq.len()
            )));
        }
        let mut pos = vec![usize::MAX; grid.k()];
        for (p, &c) in seq.iter().enumerate() {
            grid.check(c)?;
            let x = grid.index(c);
            if pos[x] != usize::MAX {
                return Err(Error::InvalidOrdering(format!("combination {c} repeated")));
            }
            pos[x] = p;
        }
        for a in grid.combos() {
            for b in grid.combos() {
                if a != b && a.dominates(b) && pos[grid.index(a)] > pos[grid.index(b)] {
                    return Err(Error::InvalidOrdering(format!(
                        "{a} must precede {b} (dominance)"
                    )));
                }
            }
        }
        Ok(Ordering { seq, pos, grid })
    }

    pub fn grid(&self) -> DoseGrid {
        self.grid
    }

    pub fn seq(&self) -> &[Combo] {
        &self.seq
    }

    pub fn len(&self) -> usize {
        self.seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seq.is_empty()
    }

    /// 0-based position of `c` in this ordering.
    pub fn position(&self, c: Combo) -> usize {
        self.pos[self.grid.index(c)]
    }

    /// 0-based position of the combination with row-major index `x`.
    pub fn position_of_index(&self, x: usize) -> usize {
        self.pos[x]
    }

    /// The combination at 0-based position `p`.
    pub fn at(&self, p: usize) -> Combo {
        self.seq[p]
    }

    /// Row-major indices in ordering sequence.
    pub fn encoded(&self) -> Vec<usize> {
        self.seq.iter().map(|&c| self.grid.index(c)).collect()
    }
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, c) in self.seq.iter().enumerate() {
            if n > 0 {
                f.write_str("->")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl Serialize for Ordering {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.seq.serialize(s)
    }
}

/// True iff `seq` is a permutation of all combinations of `grid` in which
/// every combination comes after everything it dominates.
pub fn is_linear_extension(grid: DoseGrid, seq: &[Combo]) -> bool {
    Ordering::new(grid, seq.to_vec()).is_ok()
}

/// All linear extensions of the grid poset in lexicographic order of their
/// row-major encodings, subject to [`DEFAULT_ENUMERATION_CAP`].
pub fn enumerate_orderings(grid: DoseGrid) -> Result<Vec<Ordering>> {
    enumerate_orderings_capped(grid, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_orderings_capped(grid: DoseGrid, cap: usize) -> Result<Vec<Ordering>> {
    let k = grid.k();
    if k > cap || k > 63 {
        return Err(Error::CapExceeded { k, cap });
    }
    let covers = grid.lower_cover_masks();
    let mut out = Vec::new();
    let mut stack = Vec::with_capacity(k);
    extend(grid, &covers, 0, &mut stack, &mut out);
    Ok(out)
}

// Backtracking over the currently minimal elements, visited in increasing
// row-major index so the output is lexicographically sorted.
fn extend(grid: DoseGrid, covers: &[u64], placed: u64, stack: &mut Vec<usize>, out: &mut Vec<Ordering>) {
    let k = grid.k();
    if stack.len() == k {
        let seq: Vec<Combo> = stack.iter().map(|&x| grid.combo(x)).collect();
        let mut pos = vec![0; k];
        for (p, &x) in stack.iter().enumerate() {
            pos[x] = p;
        }
        out.push(Ordering { seq, pos, grid });
        return;
    }
    for x in 0..k {
        if placed & (1 << x) == 0 && covers[x] & !placed == 0 {
            stack.push(x);
            extend(grid, covers, placed | (1 << x), stack, out);
            stack.pop();
        }
    }
}

/// Within-diagonal traversal rule for the diagonal-based constructions.
#[derive(Clone, Copy)]
enum Diagonal {
    AIncreasing,
    BIncreasing,
    AlternateFromA,
    AlternateFromB,
}

/// The six structural orderings: across rows, up columns, and by
/// anti-diagonals traversed with agent A increasing, agent B increasing, or
/// alternating (starting either way on the first diagonal holding more than
/// one combination). Duplicates are removed, keeping first occurrence.
pub fn wages_orderings(grid: DoseGrid) -> Result<Vec<Ordering>> {
    if grid.n_a < 2 || grid.n_b < 2 {
        return Err(Error::DegenerateGrid { rows: grid.n_b, cols: grid.n_a });
    }
    let mut seqs = Vec::with_capacity(6);
    seqs.push(
        (1..=grid.n_b)
            .flat_map(|j| (1..=grid.n_a).map(move |i| Combo::new(i, j)))
            .collect::<Vec<_>>(),
    );
    seqs.push(
        (1..=grid.n_a)
            .flat_map(|i| (1..=grid.n_b).map(move |j| Combo::new(i, j)))
            .collect::<Vec<_>>(),
    );
    for rule in [
        Diagonal::AIncreasing,
        Diagonal::BIncreasing,
        Diagonal::AlternateFromA,
        Diagonal::AlternateFromB,
    ] {
        seqs.push(diagonal_sequence(grid, rule));
    }
    let mut out: Vec<Ordering> = Vec::with_capacity(6);
    for seq in seqs {
        let o = Ordering::new(grid, seq)?;
        if !out.contains(&o) {
            out.push(o);
        }
    }
    Ok(out)
}

fn diagonal_sequence(grid: DoseGrid, rule: Diagonal) -> Vec<Combo> {
    let mut seq = Vec::with_capacity(grid.k());
    let mut nontrivial = 0usize;
    for s in 2..=(grid.n_a + grid.n_b) {
        let mut diag: Vec<Combo> = (1..=grid.n_a)
            .filter(|&i| s > i && s - i <= grid.n_b)
            .map(|i| Combo::new(i, s - i))
            .collect();
        let a_increasing = match rule {
            Diagonal::AIncreasing => true,
            Diagonal::BIncreasing => false,
            Diagonal::AlternateFromA => nontrivial % 2 == 0,
            Diagonal::AlternateFromB => nontrivial % 2 == 1,
        };
        if !a_increasing {
            diag.reverse();
        }
        if diag.len() > 1 {
            nontrivial += 1;
        }
        seq.extend(diag);
    }
    seq
}
