//! Regeneration of the reference tables and figures. Reduced replicate
//! counts by default; `--full` switches to the full scale.

use clap::ValueEnum;
use pocrm_core::consistency::correct_group;
use pocrm_core::crm::Skeleton;
use pocrm_core::grid::{enumerate_orderings, wages_orderings, DoseGrid, Ordering};
use pocrm_core::pocrm::PocrmDesign;
use pocrm_core::rng;
use pocrm_core::scenario::ToxScenario;
use pocrm_core::selector::{
    coverage_order_scenarios, coverage_scenarios, enumerate_order_scenarios, n_consis, select_scenario_agnostic,
    select_scenario_specific, CoverageMatrix,
};
use pocrm_core::sim::{
    estimate_pcs, pcs_curve, po_benchmark, scenario_library, PcsResult, LIBRARY_THETA0, SKELETON_AMENDED,
    SKELETON_BASE, SKELETON_CALIBRATED,
};
use rand::seq::index::sample;
use serde_json::json;

use crate::commands::{combo_names, pcs_header, pcs_row, selections_rows, write_orderings, SELECTION_HEADER};
use crate::output::{f, Output};
use crate::ReproduceArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    /// Wages-6 and consistent-6 against the benchmark, scenarios 1-9
    Table3,
    /// n.consis and mean PCS of random ordering choices by size
    Table5,
    /// four ordering choices under two skeletons, all scenarios
    Table6,
    /// PCS against N under scenario 5
    Figure1,
    /// correct-group membership over the built-in scenarios
    Figure2,
    /// correct-group membership over all order-scenarios
    Figure3,
    /// PCS against N under scenarios 1-9
    Figure4,
}

struct Sets {
    all: Vec<Ordering>,
    named: Vec<(&'static str, Vec<Ordering>)>,
    coverage: CoverageMatrix,
}

fn grid() -> DoseGrid {
    DoseGrid::new(3, 3).expect("3x3")
}

fn sets(lib: &[ToxScenario]) -> anyhow::Result<Sets> {
    let g = grid();
    let all = enumerate_orderings(g)?;
    let coverage = coverage_scenarios(&all, lib)?;
    let pick = |cols: &[usize]| cols.iter().map(|&c| all[c].clone()).collect::<Vec<_>>();
    let agnostic = select_scenario_agnostic(g, &all, None, Some(&coverage))?;
    let specific = select_scenario_specific(&coverage, None)?;
    let named = vec![
        ("all42", all.clone()),
        ("wages6", wages_orderings(g)?),
        ("agnostic6", pick(&agnostic[0].columns)),
        ("specific3", pick(&specific[0].columns)),
    ];
    Ok(Sets { all, named, coverage })
}

fn design(skeleton: &[f64], orderings: Vec<Ordering>) -> anyhow::Result<PocrmDesign> {
    Ok(PocrmDesign::builder(grid(), Skeleton::new(skeleton.to_vec())?, orderings, LIBRARY_THETA0)?)
}

fn scaled(args: &ReproduceArgs, reduced: usize, full: usize) -> usize {
    args.replicates.unwrap_or(if args.full { full } else { reduced })
}

fn n_grid(args: &ReproduceArgs) -> Vec<usize> {
    if args.full {
        vec![60, 1000, 10_000, 100_000]
    } else {
        vec![60, 250, 1000, 4000]
    }
}

fn wide(rows: &[(String, Vec<f64>)], ids: &[usize]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["row".to_string()];
    header.extend(ids.iter().map(|i| i.to_string()));
    let body = rows
        .iter()
        .map(|(name, v)| {
            let mut r = vec![name.clone()];
            r.extend(v.iter().map(|&x| f(x)));
            r
        })
        .collect();
    (header, body)
}

pub fn run(args: &ReproduceArgs) -> anyhow::Result<()> {
    let lib = scenario_library();
    let mut o = Output::create(&args.out)?;
    let names = combo_names(grid());
    let seed = args.seed;
    let mut long = Vec::new();
    let reps;
    match args.target {
        Target::Table3 => {
            reps = scaled(args, 2000, 10_000);
            let s = sets(&lib)?;
            let ids: Vec<usize> = (1..=9).collect();
            let mut table = Vec::new();
            let bench: Vec<PcsResult> =
                lib[..9].iter().map(|sc| po_benchmark(sc, 60, reps, LIBRARY_THETA0, seed)).collect::<Result<_, _>>()?;
            for (i, r) in bench.iter().enumerate() {
                long.push(pcs_row(i + 1, "benchmark", r));
            }
            table.push(("benchmark".to_string(), bench.iter().map(|r| 100.0 * r.pcs).collect::<Vec<_>>()));
            for name in ["wages6", "agnostic6"] {
                let os = s.named.iter().find(|(n, _)| *n == name).unwrap().1.clone();
                let d = design(&SKELETON_BASE, os)?;
                let mut pcs = Vec::new();
                for (i, sc) in lib[..9].iter().enumerate() {
                    let r = estimate_pcs(&d, sc, 60, reps, seed)?;
                    long.push(pcs_row(i + 1, name, &r));
                    pcs.push(100.0 * r.pcs);
                }
                let ratio = pcs.iter().zip(&table[0].1).map(|(p, b)| p / b).collect();
                table.push((name.to_string(), pcs));
                table.push((format!("{name}/benchmark"), ratio));
            }
            let (h, b) = wide(&table, &ids);
            o.csv("table3.csv", &h, &b)?;
        }
        Target::Table6 => {
            reps = scaled(args, 1000, 10_000);
            let s = sets(&lib)?;
            let ids: Vec<usize> = (1..=lib.len()).collect();
            let mut table = Vec::new();
            for (sk_name, sk) in [("base", SKELETON_BASE), ("calibrated", SKELETON_CALIBRATED)] {
                for (name, os) in &s.named {
                    let d = design(&sk, os.clone())?;
                    let id = format!("{sk_name}/{name}");
                    let mut pcs = Vec::new();
                    for (i, sc) in lib.iter().enumerate() {
                        let r = estimate_pcs(&d, sc, 60, reps, seed)?;
                        long.push(pcs_row(i + 1, &id, &r));
                        pcs.push(100.0 * r.pcs);
                    }
                    table.push((id, pcs));
                }
            }
            let mut header = vec!["design".to_string()];
            header.extend(ids.iter().map(|i| i.to_string()));
            header.push("mean".into());
            header.push("geometric_mean".into());
            let body = table
                .iter()
                .map(|(id, v)| {
                    let mean = v.iter().sum::<f64>() / v.len() as f64;
                    let geo = (v.iter().map(|x| x.max(1e-12).ln()).sum::<f64>() / v.len() as f64).exp();
                    let mut r = vec![id.clone()];
                    r.extend(v.iter().map(|&x| f(x)));
                    r.push(f(mean));
                    r.push(f(geo));
                    r
                })
                .collect::<Vec<_>>();
            o.csv("table6.csv", &header, &body)?;
        }
        Target::Table5 => {
            reps = scaled(args, 500, 10_000);
            let choices = if args.full { 50 } else { 5 };
            let s = sets(&lib)?;
            let m = &s.coverage;
            let covers = |cols: &[usize]| (0..m.n_rows()).all(|r| cols.iter().any(|&c| m.cells[r][c]));
            let mut rng = rng::stream(seed, &[5]);
            let mut rows = Vec::new();
            for size in 3..=6 {
                for consistent in [true, false] {
                    let mut picked: Vec<Vec<usize>> = Vec::new();
                    let mut tries = 0;
                    while picked.len() < choices && tries < 1_000_000 {
                        tries += 1;
                        let mut cols = sample(&mut rng, s.all.len(), size).into_vec();
                        cols.sort_unstable();
                        if covers(&cols) == consistent && !picked.contains(&cols) {
                            picked.push(cols);
                        }
                    }
                    for cols in picked {
                        let d = design(&SKELETON_BASE, cols.iter().map(|&c| s.all[c].clone()).collect())?;
                        let pcs: Vec<f64> = lib
                            .iter()
                            .map(|sc| estimate_pcs(&d, sc, 60, reps, seed).map(|r| 100.0 * r.pcs))
                            .collect::<Result<_, _>>()?;
                        let mean = pcs.iter().sum::<f64>() / pcs.len() as f64;
                        let sd = (pcs.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (pcs.len() - 1) as f64).sqrt();
                        let ids: Vec<String> = cols.iter().map(|c| (c + 1).to_string()).collect();
                        rows.push(vec![
                            size.to_string(),
                            consistent.to_string(),
                            ids.join(" "),
                            f(n_consis(m, &cols)?),
                            f(mean),
                            f(sd),
                        ]);
                    }
                }
            }
            let header: Vec<String> =
                ["size", "consistent", "orderings", "n_consis", "mean_pcs", "sd_pcs"].iter().map(|s| s.to_string()).collect();
            o.csv("table5.csv", &header, &rows)?;
        }
        Target::Figure1 => {
            reps = scaled(args, 500, 10_000);
            let s = sets(&lib)?;
            let s5 = &lib[4];
            let correct = s.all[correct_group(s5, &s.all)?[0]].clone();
            let mut designs = vec![("crm_correct", vec![correct])];
            designs.extend(s.named.iter().filter(|(n, _)| *n != "specific3").map(|(n, os)| (*n, os.clone())));
            for (sk_name, sk) in [("base", SKELETON_BASE), ("calibrated", SKELETON_CALIBRATED)] {
                for (name, os) in &designs {
                    let d = design(&sk, os.clone())?;
                    for r in pcs_curve(&d, s5, &n_grid(args), reps, seed)? {
                        long.push(pcs_row(5, &format!("{sk_name}/{name}"), &r));
                    }
                }
            }
        }
        Target::Figure4 => {
            reps = scaled(args, 200, 10_000);
            let s = sets(&lib)?;
            for (sk_name, sk) in [("base", SKELETON_BASE), ("amended", SKELETON_AMENDED)] {
                for (name, os) in &s.named {
                    let d = design(&sk, os.clone())?;
                    for (i, sc) in lib[..9].iter().enumerate() {
                        for r in pcs_curve(&d, sc, &n_grid(args), reps, seed)? {
                            long.push(pcs_row(i + 1, &format!("{sk_name}/{name}"), &r));
                        }
                    }
                }
            }
        }
        Target::Figure2 => {
            reps = 0;
            let s = sets(&lib)?;
            write_orderings(&mut o, &s.all)?;
            o.text("coverage_scenarios.csv", &s.coverage.to_csv())?;
            let header: Vec<String> = SELECTION_HEADER.iter().map(|s| s.to_string()).collect();
            let picks = select_scenario_specific(&s.coverage, None)?;
            o.csv("selections.csv", &header, &selections_rows(&picks, &s.coverage.columns))?;
        }
        Target::Figure3 => {
            reps = 0;
            let s = sets(&lib)?;
            let rows = enumerate_order_scenarios(grid())?;
            write_orderings(&mut o, &s.all)?;
            o.text("coverage_order_scenarios.csv", &coverage_order_scenarios(&s.all, &rows).to_csv())?;
            let header: Vec<String> = SELECTION_HEADER.iter().map(|s| s.to_string()).collect();
            let picks = select_scenario_agnostic(grid(), &s.all, None, Some(&s.coverage))?;
            o.csv("selections.csv", &header, &selections_rows(&picks, &s.coverage.columns))?;
        }
    }
    if !long.is_empty() {
        o.csv("pcs.csv", &pcs_header(&names), &long)?;
    }
    let target = format!("{:?}", args.target).to_lowercase();
    println!("wrote {target} to {}", args.out.display());
    o.finish(
        &format!("reproduce {target}"),
        json!({ "target": target, "full": args.full, "replicates": reps }),
        seed,
    )
}
