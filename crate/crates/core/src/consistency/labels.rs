//! Relabelling by toxicity, correct ordering groups and W-sets.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Combo, DoseGrid, Ordering};
use crate::scenario::{ToxScenario, TARGET_TOL};

/// A toxicity-sorted labelling `d_1 .. d_k` of the grid in which one
/// designated MTC carries label `nu`. Labels and `nu` are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labelling {
    /// combination carrying each label
    pub combos: Vec<Combo>,
    /// label of each combination, by row-major index
    pub labels: Vec<usize>,
    pub nu: usize,
    pub mtc: Combo,
}

impl Labelling {
    pub fn label(&self, grid: DoseGrid, c: Combo) -> usize {
        self.labels[grid.index(c)]
    }

    /// Combinations strictly less toxic than the MTC.
    pub fn below(&self) -> &[Combo] {
        &self.combos[..self.nu]
    }
}

/// One labelling per MTC. Ties among equal toxicities are broken by
/// row-major index, which is compatible with dominance; the designated MTC
/// always precedes the other MTCs.
pub fn relabel(scenario: &ToxScenario) -> Result<Vec<Labelling>> {
    let grid = scenario.grid();
    if scenario.mtc_set().is_empty() {
        return Err(Error::NoMtc);
    }
    let mut base: Vec<Combo> = grid.combos().collect();
    base.sort_by(|&a, &b| {
        scenario
            .tox(a)
            .total_cmp(&scenario.tox(b))
            .then(grid.index(a).cmp(&grid.index(b)))
    });
    let nu = base.iter().position(|&c| scenario.is_mtc(c)).expect("mtc present");
    let n_mtc = scenario.mtc_set().len();
    let out = scenario
        .mtc_set()
        .iter()
        .map(|&mtc| {
            let mut combos = base.clone();
            let at = combos[nu..nu + n_mtc].iter().position(|&c| c == mtc).unwrap() + nu;
            let c = combos.remove(at);
            combos.insert(nu, c);
            let mut labels = vec![0; grid.k()];
            for (l, &c) in combos.iter().enumerate() {
                labels[grid.index(c)] = l;
            }
            Labelling { combos, labels, nu, mtc }
        })
        .collect();
    Ok(out)
}

/// The (MTC, below-set) pair that fixes a correct ordering group.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OrderScenario {
    pub mtc: Combo,
    /// 0-based label of the MTC, equal to `below.len()`
    pub nu: usize,
    pub below: BTreeSet<Combo>,
}

impl OrderScenario {
    pub fn covers(&self, o: &Ordering) -> bool {
        o.at(self.nu) == self.mtc && o.seq()[..self.nu].iter().all(|c| self.below.contains(c))
    }
}

impl From<&Labelling> for OrderScenario {
    fn from(l: &Labelling) -> Self {
        OrderScenario { mtc: l.mtc, nu: l.nu, below: l.below().iter().copied().collect() }
    }
}

/// Whether `o` places the MTC of `lab` at its label with exactly the less
/// toxic combinations before it.
pub fn in_correct_group(o: &Ordering, lab: &Labelling) -> bool {
    o.at(lab.nu) == lab.mtc && o.seq()[..lab.nu].iter().all(|&c| lab.labels[o.grid().index(c)] < lab.nu)
}

/// Indices of orderings in the correct group under at least one labelling.
pub fn correct_group(scenario: &ToxScenario, orderings: &[Ordering]) -> Result<Vec<usize>> {
    let labs = relabel(scenario)?;
    Ok(orderings
        .iter()
        .enumerate()
        .filter(|(_, o)| labs.iter().any(|l| in_correct_group(o, l)))
        .map(|(m, _)| m)
        .collect())
}

/// Correct-group membership with ties among MTCs left open: some MTC is
/// preceded by every combination below the target and by nothing above it.
/// Other MTCs may sit on either side. With a single MTC this is
/// [`in_correct_group`].
pub fn in_correct_group_tied(o: &Ordering, scenario: &ToxScenario) -> bool {
    let th = scenario.theta0();
    let n_below = scenario.grid().combos().filter(|&c| scenario.tox(c) < th - TARGET_TOL).count();
    scenario.mtc_set().iter().any(|&m| {
        let before = &o.seq()[..o.position(m)];
        before.len() >= n_below
            && before.iter().all(|&c| scenario.tox(c) <= th + TARGET_TOL)
            && before.iter().filter(|&&c| scenario.tox(c) < th - TARGET_TOL).count() == n_below
    })
}

/// Indices of orderings satisfying [`in_correct_group_tied`].
pub fn correct_group_tied(scenario: &ToxScenario, orderings: &[Ordering]) -> Result<Vec<usize>> {
    if scenario.mtc_set().is_empty() {
        return Err(Error::NoMtc);
    }
    Ok((0..orderings.len()).filter(|&m| in_correct_group_tied(&orderings[m], scenario)).collect())
}

/// T- and W-sets of an ordering outside the correct group, as combinations.
/// `t1`: more toxic than the MTC yet placed before it under `m`; `w1`: the
/// combinations placed immediately before members of `t1` (outside `t1`).
/// `t2`: less toxic but placed after the MTC; `w2`: placed immediately
/// after members of `t2` (outside `t2`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WSets {
    pub t1: Vec<Combo>,
    pub w1: Vec<Combo>,
    pub t2: Vec<Combo>,
    pub w2: Vec<Combo>,
    pub w: Vec<Combo>,
}

pub fn w_sets(m: &Ordering, lab: &Labelling) -> Result<WSets> {
    if in_correct_group(m, lab) {
        return Err(Error::CorrectOrdering);
    }
    let grid = m.grid();
    let mtc_pos = m.position(lab.mtc);
    let label = |c: Combo| lab.labels[grid.index(c)];
    let t1: Vec<Combo> = m.seq().iter().copied().filter(|&c| label(c) > lab.nu && m.position(c) < mtc_pos).collect();
    let t2: Vec<Combo> = m.seq().iter().copied().filter(|&c| label(c) < lab.nu && m.position(c) > mtc_pos).collect();
    let mut w1 = Vec::new();
    for &c in &t1 {
        let p = m.position(c);
        if p > 0 {
            let prev = m.at(p - 1);
            if !t1.contains(&prev) && !w1.contains(&prev) {
                w1.push(prev);
            }
        }
    }
    let mut w2 = Vec::new();
    for &c in &t2 {
        let p = m.position(c);
        if p + 1 < m.len() {
            let next = m.at(p + 1);
            if !t2.contains(&next) && !w2.contains(&next) {
                w2.push(next);
            }
        }
    }
    let mut w = w1.clone();
    for &c in &w2 {
        if !w.contains(&c) {
            w.push(c);
        }
    }
    w.sort_by_key(|&c| m.position(c));
    Ok(WSets { t1, w1, t2, w2, w })
}
