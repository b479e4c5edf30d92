mod common;

use pocrm_core::error::Error;
use pocrm_core::grid::{enumerate_orderings, wages_orderings, DoseGrid};
use pocrm_core::selector::{
    coverage_order_scenarios, coverage_scenarios, enumerate_order_scenarios, n_consis, select_scenario_agnostic,
    select_scenario_specific, CoverageMatrix,
};
use pocrm_core::sim::scenario_library;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn g(rows: usize, cols: usize) -> DoseGrid {
    DoseGrid::new(rows, cols).unwrap()
}

#[test]
fn order_scenario_counts() {
    assert_eq!(enumerate_order_scenarios(g(3, 3)).unwrap().len(), 30);
    assert_eq!(enumerate_order_scenarios(g(2, 2)).unwrap().len(), 6);
    for k in 1..=6 {
        assert_eq!(enumerate_order_scenarios(g(1, k)).unwrap().len(), k);
    }
    assert!(enumerate_order_scenarios(g(5, 5)).is_err());
}

#[test]
fn every_ordering_covers_one_order_scenario_per_position() {
    let os = enumerate_orderings(g(3, 3)).unwrap();
    let rows = enumerate_order_scenarios(g(3, 3)).unwrap();
    let m = coverage_order_scenarios(&os, &rows);
    for c in 0..m.n_cols() {
        assert_eq!((0..m.n_rows()).filter(|&r| m.cells[r][c]).count(), 9);
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(n: usize, k: usize, from: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for c in from..n {
            cur.push(c);
            go(n, k, c + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(n, k, 0, &mut Vec::new(), &mut out);
    out
}

fn covers(m: &CoverageMatrix, cols: &[usize]) -> bool {
    (0..m.n_rows()).all(|r| cols.iter().any(|&c| m.cells[r][c]))
}

fn brute_min(m: &CoverageMatrix, max: usize) -> Option<Vec<Vec<usize>>> {
    (1..=max).map(|k| combinations(m.n_cols(), k).into_iter().filter(|s| covers(m, s)).collect::<Vec<_>>()).find(|v| !v.is_empty())
}

#[test]
fn exact_cover_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut checked = 0;
    for _ in 0..150 {
        let (nr, nc) = (rng.random_range(3..12), rng.random_range(3..14));
        let p = rng.random_range(0.15..0.5);
        let cells: Vec<Vec<bool>> = (0..nr).map(|_| (0..nc).map(|_| rng.random_bool(p)).collect()).collect();
        let m = CoverageMatrix { row_labels: (1..=nr).map(|r| r.to_string()).collect(), columns: (0..nc).collect(), cells };
        let got = select_scenario_specific(&m, None);
        if !m.uncoverable().is_empty() {
            assert!(matches!(got, Err(Error::Uncoverable(_))));
            continue;
        }
        let Some(want) = brute_min(&m, 4) else { continue };
        let got = got.unwrap();
        let mut got_sets: Vec<Vec<usize>> = got.iter().map(|s| s.columns.clone()).collect();
        got_sets.sort();
        assert_eq!(got_sets, want);
        for w in got.windows(2) {
            assert!(w[0].n_consis >= w[1].n_consis);
        }
        checked += 1;
    }
    assert!(checked > 60, "{checked}");
}

#[test]
fn library_cover() {
    let os = enumerate_orderings(g(3, 3)).unwrap();
    let m = coverage_scenarios(&os, &scenario_library()).unwrap();
    let got = select_scenario_specific(&m, None).unwrap();
    let want = brute_min(&m, 3).unwrap();
    assert_eq!(want[0].len(), 3);
    assert_eq!(got.len(), want.len());
    assert!(got.iter().all(|s| covers(&m, &s.columns)));
    assert_eq!(got[0].columns, vec![10, 12, 20]);
    assert!((got[0].n_consis - 14.0).abs() < 1e-12);
    assert!(matches!(select_scenario_specific(&m, Some(2)), Err(Error::Infeasible(_))));
}

#[test]
fn agnostic_cover_covers_every_order_scenario() {
    let grid = g(3, 3);
    let os = enumerate_orderings(grid).unwrap();
    let score = coverage_scenarios(&os, &scenario_library()).unwrap();
    let sel = select_scenario_agnostic(grid, &os, None, Some(&score)).unwrap();
    assert_eq!(sel[0].columns.len(), 6);
    let rows = enumerate_order_scenarios(grid).unwrap();
    let m = coverage_order_scenarios(&os, &rows);
    for s in sel.iter().step_by(97) {
        assert!(covers(&m, &s.columns));
        // covering every order-scenario covers every scenario
        assert!(covers(&score, &s.columns));
    }
    assert!(brute_min(&m, 5).is_none());
}

#[test]
fn wages_set_misses_scenarios_3_and_5() {
    let os = wages_orderings(g(3, 3)).unwrap();
    let m = coverage_scenarios(&os, &scenario_library()).unwrap();
    assert_eq!(m.uncoverable(), vec![2, 4]);
    let dots: usize = m.cells.iter().flatten().filter(|&&b| b).count();
    assert_eq!(dots, 66);
    assert!((n_consis(&m, &(0..6).collect::<Vec<_>>()).unwrap() - 11.0).abs() < 1e-12);
}

#[test]
fn n_consis_invariances() {
    let os = enumerate_orderings(g(3, 3)).unwrap();
    let m = coverage_scenarios(&os, &scenario_library()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let k = rng.random_range(1..8);
        let mut sel: Vec<usize> = (0..k).map(|_| rng.random_range(0..42)).collect();
        let base = n_consis(&m, &sel).unwrap();
        sel.reverse();
        assert_eq!(n_consis(&m, &sel).unwrap(), base);
        let doubled: Vec<usize> = sel.iter().chain(&sel).copied().collect();
        assert!((n_consis(&m, &doubled).unwrap() - base).abs() < 1e-12);
    }
    assert_eq!(n_consis(&m, &[]), Err(Error::EmptySelection));
}

#[test]
fn coverage_depends_only_on_ranks() {
    assert_eq!(common::rank_invariance(100, 99).unwrap(), 100);
}

#[test]
fn csv_layout() {
    let os = wages_orderings(g(3, 3)).unwrap();
    let m = coverage_scenarios(&os, &scenario_library()[..2]).unwrap();
    let csv = m.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "row,1,2,3,4,5,6");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,"));
}
