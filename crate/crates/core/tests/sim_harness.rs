use pocrm_core::crm::Skeleton;
use pocrm_core::grid::{enumerate_orderings, wages_orderings, DoseGrid, Ordering};
use pocrm_core::pocrm::PocrmDesign;
use pocrm_core::scenario::ToxScenario;
use pocrm_core::sim::{
    estimate_pcs, isotonic_2d, library_scenario, pcs_curve, po_benchmark, scenario_library, LIBRARY_THETA0, SKELETON_BASE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn design(orderings: Vec<Ordering>) -> PocrmDesign {
    PocrmDesign::builder(DoseGrid::new(3, 3).unwrap(), Skeleton::new(SKELETON_BASE.to_vec()).unwrap(), orderings, 0.3)
        .unwrap()
}

#[test]
fn estimates_ignore_pool_size() {
    let d = design(wages_orderings(DoseGrid::new(3, 3).unwrap()).unwrap());
    let s = library_scenario(4).unwrap();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| (estimate_pcs(&d, &s, 40, 300, 8).unwrap(), po_benchmark(&s, 40, 300, 0.3, 8).unwrap()))
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn ordering_permutation_changes_nothing_beyond_noise() {
    let os = enumerate_orderings(DoseGrid::new(3, 3).unwrap()).unwrap();
    let mut shuffled = os.clone();
    shuffled.reverse();
    shuffled.swap(3, 30);
    let s = library_scenario(2).unwrap();
    let reps = 1500;
    let a = estimate_pcs(&design(os), &s, 40, reps, 31).unwrap();
    let b = estimate_pcs(&design(shuffled), &s, 40, reps, 77).unwrap();
    let se = (a.mc_se.powi(2) + b.mc_se.powi(2)).sqrt();
    assert!((a.pcs - b.pcs).abs() < 4.0 * se, "{} vs {}", a.pcs, b.pcs);
}

#[test]
fn result_fields() {
    let d = design(wages_orderings(DoseGrid::new(3, 3).unwrap()).unwrap());
    let s = library_scenario(1).unwrap();
    let r = estimate_pcs(&d, &s, 30, 400, 2).unwrap();
    assert_eq!((r.replicates, r.n_patients), (400, 30));
    assert!((r.per_combo_selection.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(r.pcs, r.per_combo_selection[0]);
    assert!((r.mc_se - (r.pcs * (1.0 - r.pcs) / 400.0).sqrt()).abs() < 1e-15);
    let curve = pcs_curve(&d, &s, &[20, 30], 400, 2).unwrap();
    assert_eq!(curve[1], r);
}

#[test]
fn invalid_inputs() {
    let d = design(wages_orderings(DoseGrid::new(3, 3).unwrap()).unwrap());
    let s = library_scenario(1).unwrap();
    assert!(estimate_pcs(&d, &s, 0, 10, 1).is_err());
    assert!(estimate_pcs(&d, &s, 10, 0, 1).is_err());
    assert!(po_benchmark(&s, 0, 10, 0.3, 1).is_err());
    assert!(pcs_curve(&d, &s, &[30, 20], 10, 1).is_err());
    assert!(pcs_curve(&d, &s, &[], 10, 1).is_err());
    let no_mtc = ToxScenario::from_rows(&[&[0.1, 0.2, 0.25], &[0.2, 0.4, 0.5], &[0.35, 0.5, 0.6]], 0.3).unwrap();
    assert!(estimate_pcs(&d, &no_mtc, 10, 10, 1).is_err());
}

#[test]
fn benchmark_separates_a_lone_target() {
    // one combination at the target, the rest far from it
    let s = ToxScenario::from_rows(&[&[0.02, 0.04, 0.06], &[0.05, 0.30, 0.70], &[0.08, 0.75, 0.80]], 0.3).unwrap();
    let b = po_benchmark(&s, 100, 500, 0.3, 3).unwrap();
    assert!(b.pcs > 0.99, "{}", b.pcs);
    // no information separates two equal combinations around the target
    let s = ToxScenario::from_rows(&[&[0.29, 0.30], &[0.31, 0.32]], 0.3).unwrap();
    let b = po_benchmark(&s, 100, 500, 0.3, 3).unwrap();
    assert!(b.pcs < 0.9);
    assert_eq!(po_benchmark(&s, 100, 200, 0.3, 9).unwrap(), po_benchmark(&s, 100, 200, 0.3, 9).unwrap());
}

#[test]
fn benchmark_beats_the_design_on_average() {
    let d = design(wages_orderings(DoseGrid::new(3, 3).unwrap()).unwrap());
    let lib = scenario_library();
    let (mut b, mut p) = (0.0, 0.0);
    for s in &lib[..9] {
        b += po_benchmark(s, 60, 400, 0.3, 5).unwrap().pcs;
        p += estimate_pcs(&d, s, 60, 400, 5).unwrap().pcs;
    }
    assert!(b > p, "{b} vs {p}");
}

fn monotone(x: &[f64], n_a: usize, n_b: usize) -> bool {
    (0..n_b).all(|j| (0..n_a).all(|i| {
        let v = x[j * n_a + i];
        (i + 1 == n_a || v <= x[j * n_a + i + 1] + 1e-9) && (j + 1 == n_b || v <= x[(j + 1) * n_a + i] + 1e-9)
    }))
}

#[test]
fn isotonic_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let (n_a, n_b) = (rng.random_range(1..5), rng.random_range(1..5));
        let x: Vec<f64> = (0..n_a * n_b).map(|_| rng.random::<f64>()).collect();
        let p = isotonic_2d(&x, n_a, n_b);
        assert!(monotone(&p, n_a, n_b), "{p:?}");
        assert!((x.iter().sum::<f64>() - p.iter().sum::<f64>()).abs() < 1e-6);
        assert_eq!(isotonic_2d(&p, n_a, n_b).iter().zip(&p).filter(|(a, b)| (*a - *b).abs() > 1e-6).count(), 0);
        // variational inequality of a projection onto a convex cone
        for _ in 0..20 {
            let mut q: Vec<f64> = (0..n_a * n_b).map(|_| rng.random::<f64>()).collect();
            q = (0..n_a * n_b).map(|z| {
                let (i, j) = (z % n_a, z / n_a);
                (0..=j).flat_map(|jj| (0..=i).map(move |ii| (ii, jj))).map(|(ii, jj)| q[jj * n_a + ii]).sum()
            }).collect();
            let dot: f64 = (0..q.len()).map(|z| (x[z] - p[z]) * (q[z] - p[z])).sum();
            assert!(dot < 1e-6, "{dot}");
        }
    }
}

#[test]
fn library_contents() {
    let lib = scenario_library();
    assert_eq!(lib.len(), 19);
    assert!(lib[..9].iter().all(|s| s.mtc_set().len() == 1));
    assert!(lib[9..].iter().all(|s| s.mtc_set().len() >= 2));
    assert!(lib.iter().all(|s| s.theta0() == LIBRARY_THETA0));
    assert_eq!(library_scenario(5).unwrap(), lib[4]);
    assert!(library_scenario(0).is_none() && library_scenario(20).is_none());
}
