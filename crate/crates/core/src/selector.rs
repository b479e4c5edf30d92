//! Order-scenarios, correct-group coverage matrices and ordering selection
//! by set cover.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::consistency::{correct_group_tied, OrderScenario};
use crate::error::{Error, Result};
use crate::grid::{Combo, DoseGrid, Ordering};
use crate::scenario::ToxScenario;

/// Largest grid whose down-sets are enumerated exhaustively.
pub const ORDER_SCENARIO_CAP: usize = 20;

/// Every (MTC, below-set) pair: the below-set is a down-set of the grid that
/// holds every combination below the MTC and none above it. Sorted by the
/// MTC's row-major index, then by size, then by the below-set.
pub fn enumerate_order_scenarios(grid: DoseGrid) -> Result<Vec<OrderScenario>> {
    let k = grid.k();
    if k > ORDER_SCENARIO_CAP {
        return Err(Error::CapExceeded { k, cap: ORDER_SCENARIO_CAP });
    }
    let down: Vec<u32> = (0..k)
        .map(|x| {
            let c = grid.combo(x);
            grid.combos().filter(|&d| d != c && d.dominates(c)).fold(0, |m, d| m | 1 << grid.index(d))
        })
        .collect();
    let mut out = Vec::new();
    for x in 0..k {
        let up: u32 = (0..k).filter(|&z| z != x && grid.combo(x).dominates(grid.combo(z))).fold(0, |m, z| m | 1 << z);
        for mask in 0u32..(1 << k) {
            if mask & (1 << x) != 0 || mask & up != 0 || mask & down[x] != down[x] {
                continue;
            }
            let is_down = (0..k).all(|z| mask & (1 << z) == 0 || mask & down[z] == down[z]);
            if !is_down {
                continue;
            }
            let below: BTreeSet<Combo> = (0..k).filter(|&z| mask & (1 << z) != 0).map(|z| grid.combo(z)).collect();
            out.push(OrderScenario { mtc: grid.combo(x), nu: below.len(), below });
        }
    }
    out.sort_by(|a, b| {
        grid.index(a.mtc).cmp(&grid.index(b.mtc)).then(a.nu.cmp(&b.nu)).then(a.below.cmp(&b.below))
    });
    Ok(out)
}

/// Membership of orderings (columns) in the correct groups of rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageMatrix {
    pub row_labels: Vec<String>,
    /// ordering indices, 0-based
    pub columns: Vec<usize>,
    /// `cells[r][c]`
    pub cells: Vec<Vec<bool>>,
}

impl CoverageMatrix {
    pub fn n_rows(&self) -> usize {
        self.cells.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    /// Rows with no covering column.
    pub fn uncoverable(&self) -> Vec<usize> {
        (0..self.n_rows()).filter(|&r| !self.cells[r].iter().any(|&b| b)).collect()
    }

    /// Header `row,<1-based ordering numbers>`, then one 0/1 line per row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("row");
        for c in &self.columns {
            write!(s, ",{}", c + 1).unwrap();
        }
        s.push('\n');
        for (label, row) in self.row_labels.iter().zip(&self.cells) {
            s.push_str(label);
            for &b in row {
                s.push_str(if b { ",1" } else { ",0" });
            }
            s.push('\n');
        }
        s
    }

    /// Restriction to the given column positions.
    pub fn select_columns(&self, cols: &[usize]) -> CoverageMatrix {
        CoverageMatrix {
            row_labels: self.row_labels.clone(),
            columns: cols.iter().map(|&c| self.columns[c]).collect(),
            cells: self.cells.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect(),
        }
    }
}

/// Coverage of toxicity scenarios, labelled `1..`. Several MTCs may share
/// the target, and then any of them may come first.
pub fn coverage_scenarios(orderings: &[Ordering], scenarios: &[ToxScenario]) -> Result<CoverageMatrix> {
    let mut cells = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        let g = correct_group_tied(s, orderings)?;
        cells.push((0..orderings.len()).map(|m| g.contains(&m)).collect());
    }
    Ok(CoverageMatrix {
        row_labels: (1..=scenarios.len()).map(|i| i.to_string()).collect(),
        columns: (0..orderings.len()).collect(),
        cells,
    })
}

/// Coverage of order-scenarios, labelled by MTC and below-set.
pub fn coverage_order_scenarios(orderings: &[Ordering], rows: &[OrderScenario]) -> CoverageMatrix {
    CoverageMatrix {
        row_labels: rows
            .iter()
            .map(|r| {
                let b: Vec<String> = r.below.iter().map(|c| c.to_string()).collect();
                format!("{}|{}", r.mtc, b.join(" "))
            })
            .collect(),
        columns: (0..orderings.len()).collect(),
        cells: rows.iter().map(|r| orderings.iter().map(|o| r.covers(o)).collect()).collect(),
    }
}

/// Covered row count summed over the selected columns, divided by the
/// number of columns. `selection` holds column positions of `matrix`.
pub fn n_consis(matrix: &CoverageMatrix, selection: &[usize]) -> Result<f64> {
    if selection.is_empty() {
        return Err(Error::EmptySelection);
    }
    let dots: usize = matrix.cells.iter().map(|r| selection.iter().filter(|&&c| r[c]).count()).sum();
    Ok(dots as f64 / selection.len() as f64)
}

/// A set of columns covering every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// column positions, increasing
    pub columns: Vec<usize>,
    pub n_consis: f64,
}

/// Columns above which covers are found greedily.
pub const EXACT_COVER_COLUMNS: usize = 64;

/// Minimum covers of every row, or with `budget` all covers of that size;
/// sorted by decreasing `n.consis` on the same matrix, then
/// lexicographically. Beyond [`EXACT_COVER_COLUMNS`] a single greedy cover
/// is returned.
pub fn select_scenario_specific(matrix: &CoverageMatrix, budget: Option<usize>) -> Result<Vec<Selection>> {
    let bad = matrix.uncoverable();
    if !bad.is_empty() {
        return Err(Error::Uncoverable(bad));
    }
    if matrix.n_rows() == 0 {
        return Err(Error::InvalidArgument("no rows to cover".into()));
    }
    let covers = if matrix.n_cols() > EXACT_COVER_COLUMNS || matrix.n_rows() > 128 {
        let g = greedy_cover(matrix);
        if budget.is_some_and(|b| b != g.len()) {
            return Err(Error::Infeasible(format!(
                "instance too large for exact search; the greedy cover has {} columns",
                g.len()
            )));
        }
        vec![g]
    } else {
        let masks = column_masks(matrix);
        let all: u128 = if matrix.n_rows() == 128 { u128::MAX } else { (1u128 << matrix.n_rows()) - 1 };
        let size = match budget {
            Some(b) => b,
            None => (1..=matrix.n_cols()).find(|&s| !covers_of_size(&masks, all, s, true).is_empty()).expect("coverable"),
        };
        let found = covers_of_size(&masks, all, size, false);
        if found.is_empty() {
            return Err(Error::Infeasible(format!("no cover with {size} columns")));
        }
        found
    };
    rank(matrix, covers)
}

/// As [`select_scenario_specific`] over all order-scenarios of the grid.
/// Ties in the minimum are ranked by `n.consis` on `score` when given.
pub fn select_scenario_agnostic(
    grid: DoseGrid,
    orderings: &[Ordering],
    budget: Option<usize>,
    score: Option<&CoverageMatrix>,
) -> Result<Vec<Selection>> {
    let rows = enumerate_order_scenarios(grid)?;
    let m = coverage_order_scenarios(orderings, &rows);
    let found = select_scenario_specific(&m, budget)?;
    match score {
        None => Ok(found),
        Some(s) => rank(s, found.into_iter().map(|x| x.columns).collect()),
    }
}

fn rank(matrix: &CoverageMatrix, covers: Vec<Vec<usize>>) -> Result<Vec<Selection>> {
    let mut out = covers
        .into_iter()
        .map(|c| Ok(Selection { n_consis: n_consis(matrix, &c)?, columns: c }))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.n_consis.total_cmp(&a.n_consis).then(a.columns.cmp(&b.columns)));
    Ok(out)
}

fn column_masks(matrix: &CoverageMatrix) -> Vec<u128> {
    (0..matrix.n_cols())
        .map(|c| (0..matrix.n_rows()).filter(|&r| matrix.cells[r][c]).fold(0u128, |m, r| m | 1 << r))
        .collect()
}

/// Every `size`-subset of columns covering `all`, in lexicographic order
/// (only the first when `first_only`).
fn covers_of_size(masks: &[u128], all: u128, size: usize, first_only: bool) -> Vec<Vec<usize>> {
    // union of the masks from column c onward, for pruning
    let mut suffix = vec![0u128; masks.len() + 1];
    for c in (0..masks.len()).rev() {
        suffix[c] = suffix[c + 1] | masks[c];
    }
    let mut out = Vec::new();
    let mut stack = Vec::with_capacity(size);
    walk(masks, &suffix, all, size, 0, 0, &mut stack, &mut out, first_only);
    out
}

#[allow(clippy::too_many_arguments)]
fn walk(
    masks: &[u128],
    suffix: &[u128],
    all: u128,
    size: usize,
    from: usize,
    covered: u128,
    stack: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
    first_only: bool,
) {
    if first_only && !out.is_empty() {
        return;
    }
    if stack.len() == size {
        if covered == all {
            out.push(stack.clone());
        }
        return;
    }
    let missing = all & !covered;
    if covered | suffix[from] != all {
        return;
    }
    // the lowest uncovered row must be covered by a column yet to be chosen
    let low = if missing == 0 { 0 } else { missing & missing.wrapping_neg() };
    let left = size - stack.len();
    for c in from..=masks.len() - left {
        if low != 0 && suffix[c] & low == 0 {
            break;
        }
        stack.push(c);
        walk(masks, suffix, all, size, c + 1, covered | masks[c], stack, out, first_only);
        stack.pop();
    }
}

fn greedy_cover(matrix: &CoverageMatrix) -> Vec<usize> {
    let mut covered = vec![false; matrix.n_rows()];
    let mut pick = Vec::new();
    while covered.iter().any(|&b| !b) {
        let gain = |c: usize| (0..matrix.n_rows()).filter(|&r| !covered[r] && matrix.cells[r][c]).count();
        let best = (0..matrix.n_cols()).max_by(|&a, &b| gain(a).cmp(&gain(b)).then(b.cmp(&a))).expect("columns");
        for r in 0..matrix.n_rows() {
            covered[r] |= matrix.cells[r][best];
        }
        pick.push(best);
    }
    pick.sort_unstable();
    pick
}
