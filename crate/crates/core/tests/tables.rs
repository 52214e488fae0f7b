use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use rand::Rng;
use safepol::hes::{HesPipeline, Node, Rounding, Wiring};
use safepol::opt::{solve_table_pipeline, TableScope, RISK_TOL};
use safepol::risk::BenefitRiskTable;
use safepol::tables::{
    decode, enumerate_monotone_tables, is_monotone, mixed_step, short_burst, sort_chain_step,
    BurstConfig, DecisionTable, GridPosetDag, LinearExtensionState,
};
use safepol::{rng, EmpiricalCovariateDistribution, Policy};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Every map from cells to outputs, filtered by monotonicity.
fn brute_force_monotone(sizes: &[usize], outputs: u8) -> BTreeSet<Vec<u8>> {
    let n: usize = sizes.iter().product();
    let total = (outputs as usize).pow(n as u32);
    (0..total)
        .filter_map(|code| {
            let cells: Vec<u8> = (0..n)
                .map(|i| (code / (outputs as usize).pow(i as u32) % outputs as usize) as u8 + 1)
                .collect();
            let t = DecisionTable::from_cells(sizes.to_vec(), outputs, cells.clone()).unwrap();
            is_monotone(&t).then_some(cells)
        })
        .collect()
}

#[test]
fn enumeration_counts_match_brute_force() {
    for (sizes, outputs, expected) in [
        (vec![5], 5u8, Some(126)),
        (vec![2, 2], 2, Some(6)),
        (vec![3, 3], 3, None),
        (vec![2, 2, 2], 2, None),
        (vec![4], 1, Some(1)),
    ] {
        let listed = enumerate_monotone_tables(&sizes, outputs).unwrap();
        let set: BTreeSet<Vec<u8>> = listed.iter().map(|t| t.cells().to_vec()).collect();
        assert_eq!(set.len(), listed.len(), "duplicates for {sizes:?}");
        assert!(listed.iter().all(is_monotone));
        assert_eq!(set, brute_force_monotone(&sizes, outputs), "{sizes:?}");
        if let Some(e) = expected {
            assert_eq!(listed.len(), e);
        }
    }
}

fn chi_square_p(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

/// Runs `steps` lazy sort moves and counts the visited orders every `thin`
/// steps.
fn sort_chain_counts(dag: &GridPosetDag, start: Vec<usize>, steps: usize, thin: usize, seed: u64) -> BTreeMap<Vec<usize>, usize> {
    let mut state = LinearExtensionState::new(dag, start, vec![]).unwrap();
    let mut g = rng::seeded(seed);
    let mut counts = BTreeMap::new();
    for step in 1..=steps {
        sort_chain_step(&mut state, dag, &mut g);
        if step % thin == 0 {
            *counts.entry(state.order().to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

#[test]
fn sort_chain_is_uniform_on_small_posets() {
    let antichain = GridPosetDag::from_edges(3, vec![]).unwrap();
    let grid = GridPosetDag::new(&[2, 2]).unwrap();
    for seed in 0..20 {
        let a = sort_chain_counts(&antichain, vec![0, 1, 2], 100_000, 25, seed);
        assert_eq!(a.len(), 6);
        let p = chi_square_p(&a.values().copied().collect::<Vec<_>>());
        assert!(p > 0.01, "antichain seed {seed}: p = {p}");

        let b = sort_chain_counts(&grid, vec![0, 1, 2, 3], 100_000, 25, seed);
        assert_eq!(b.len(), 2);
        let p = chi_square_p(&b.values().copied().collect::<Vec<_>>());
        assert!(p > 0.01, "grid seed {seed}: p = {p}");
    }
}

/// All states one move away: valid adjacent swaps and valid cut moves.
fn neighbours(dag: &GridPosetDag, s: &LinearExtensionState) -> Vec<LinearExtensionState> {
    let mut out = Vec::new();
    let order = s.order();
    for j in 0..order.len().saturating_sub(1) {
        let mut o = order.to_vec();
        o.swap(j, j + 1);
        if let Ok(next) = LinearExtensionState::new(dag, o, s.boundaries().to_vec()) {
            out.push(next);
        }
    }
    for j in 0..s.boundaries().len() {
        for delta in [-1i64, 1] {
            let mut b = s.boundaries().to_vec();
            let moved = b[j] as i64 + delta;
            if moved < 0 {
                continue;
            }
            b[j] = moved as usize;
            if let Ok(next) = LinearExtensionState::new(dag, order.to_vec(), b) {
                out.push(next);
            }
        }
    }
    out
}

fn reachable_tables(dag: &GridPosetDag, start: LinearExtensionState) -> BTreeSet<Vec<u8>> {
    let mut seen = HashSet::new();
    let mut queue = VecDeque::from([start.clone()]);
    seen.insert(start);
    let mut tables = BTreeSet::new();
    while let Some(s) = queue.pop_front() {
        tables.insert(decode(&s, dag).cells().to_vec());
        for n in neighbours(dag, &s) {
            if seen.insert(n.clone()) {
                queue.push_back(n);
            }
        }
    }
    tables
}

#[test]
fn chain_reaches_every_monotone_table() {
    for (sizes, outputs) in [(vec![2, 2], 2u8), (vec![2, 2], 3), (vec![4], 3), (vec![3], 2), (vec![1, 3], 3)] {
        let dag = GridPosetDag::new(&sizes).unwrap();
        let n = dag.n_vertices();
        let start = LinearExtensionState::new(&dag, (0..n).collect(), vec![0; outputs as usize - 1]).unwrap();
        assert_eq!(reachable_tables(&dag, start), brute_force_monotone(&sizes, outputs), "{sizes:?}");
    }
    // antichain of three: every 0/1 labelling is monotone
    let anti = GridPosetDag::from_edges(3, vec![]).unwrap();
    let start = LinearExtensionState::new(&anti, vec![0, 1, 2], vec![0]).unwrap();
    assert_eq!(reachable_tables(&anti, start).len(), 8);
}

#[test]
fn long_runs_stay_monotone() {
    for sizes in [vec![5, 5], vec![5, 5, 5]] {
        let dag = GridPosetDag::new(&sizes).unwrap();
        let t = DecisionTable::from_fn(sizes.clone(), 5, |c| *c.iter().min().unwrap()).unwrap();
        let mut state = LinearExtensionState::from_table(&dag, &t).unwrap();
        let mut g = rng::seeded(9);
        for _ in 0..100_000 {
            mixed_step(&mut state, &dag, 0.5, &mut g);
            assert!(is_monotone(&decode(&state, &dag)));
        }
    }
}

/// Per-cell benefit and risk for each output, zero at the baseline output.
struct CellProblem {
    baseline: DecisionTable,
    b: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    eps: f64,
}

impl CellProblem {
    fn random(g: &mut impl Rng) -> Self {
        let baseline = DecisionTable::from_fn(vec![3, 3], 3, |c| ((c[0] + c[1]) / 2).max(1)).unwrap();
        let mut b = vec![vec![0.0; 3]; 9];
        let mut r = vec![vec![0.0; 3]; 9];
        for c in 0..9 {
            for o in 0..3 {
                if o + 1 != baseline.cells()[c] as usize {
                    b[c][o] = g.random_range(-1.0..1.0) / 9.0;
                    r[c][o] = g.random_range(0.0..1.0) / 9.0;
                }
            }
        }
        CellProblem {
            baseline,
            b,
            r,
            eps: g.random_range(0.05..0.4),
        }
    }

    fn value(&self, t: &DecisionTable) -> f64 {
        t.cells().iter().enumerate().map(|(c, &o)| self.b[c][o as usize - 1]).sum()
    }

    fn feasible(&self, t: &DecisionTable) -> bool {
        t.cells().iter().enumerate().map(|(c, &o)| self.r[c][o as usize - 1]).sum::<f64>() <= self.eps + RISK_TOL
    }

    fn optimum(&self) -> f64 {
        enumerate_monotone_tables(&[3, 3], 3)
            .unwrap()
            .iter()
            .filter(|t| self.feasible(t))
            .map(|t| self.value(t))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[test]
fn short_burst_finds_enumerated_optimum() {
    let config = BurstConfig {
        bursts: 50,
        burst_len: 10,
        restarts: 20,
        sort_move_prob: 0.5,
    };
    let mut hits = 0;
    for seed in 0..100 {
        let problem = CellProblem::random(&mut rng::stream(77, seed, 0));
        let out = short_burst(
            |ts| problem.value(&ts[0]),
            |ts| problem.feasible(&ts[0]),
            &[problem.baseline.clone()],
            &config,
            seed,
        )
        .unwrap();
        assert!(is_monotone(&out.tables[0]) && problem.feasible(&out.tables[0]));
        if (out.objective - problem.optimum()).abs() <= 1e-12 {
            hits += 1;
        }
    }
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn short_burst_keeps_an_optimal_start() {
    let t = DecisionTable::from_fn(vec![3, 3], 3, |c| c[0]).unwrap();
    let out = short_burst(
        |ts| -(ts[0].changed_cells(&t) as f64),
        |_| true,
        &[t.clone()],
        &BurstConfig {
            bursts: 20,
            burst_len: 10,
            restarts: 5,
            sort_move_prob: 0.5,
        },
        1,
    )
    .unwrap();
    assert_eq!(out.tables[0], t);
}

/// One-node pipeline over two raw scores with three levels.
fn single_table_pipeline(table: DecisionTable) -> HesPipeline {
    let wiring = Wiring {
        n_inputs: 2,
        score_levels: 3,
        rounding: Rounding::HalfUp,
        nodes: vec![Node {
            id: "top".into(),
            table: "t".into(),
            inputs: vec!["x1".into(), "x2".into()],
        }],
    };
    HesPipeline::new(wiring, BTreeMap::from([("t".to_string(), table)])).unwrap()
}

#[test]
fn table_pipeline_solver_matches_enumeration() {
    let baseline = DecisionTable::from_fn(vec![3, 3], 3, |c| *c.iter().min().unwrap()).unwrap();
    let template = single_table_pipeline(baseline.clone());
    let config = BurstConfig {
        bursts: 50,
        burst_len: 10,
        restarts: 100,
        sort_move_prob: 0.5,
    };
    let all_tables = enumerate_monotone_tables(&[3, 3], 3).unwrap();
    let (mut hits, mut runs) = (0usize, 0usize);
    for trial in 0..20u64 {
        let mut g = rng::stream(5, trial, 0);
        let support: Vec<Vec<f64>> = (0..20)
            .map(|_| vec![g.random_range(1.0..3.0), g.random_range(1.0..3.0)])
            .collect();
        let base = Policy::TablePipeline {
            pipeline: template.clone(),
        }
        .decisions_on(&support)
        .unwrap();
        let mut b = vec![vec![0.0; 3]; 20];
        let mut r = vec![vec![0.0; 3]; 20];
        for i in 0..20 {
            for d in 0..3 {
                if d != base[i] {
                    b[i][d] = g.random_range(-1.0..1.0);
                    r[i][d] = g.random_range(0..=10) as f64 / 10.0;
                }
            }
        }
        let dist = EmpiricalCovariateDistribution::uniform(support.clone()).unwrap();
        let table = BenefitRiskTable::new(b, r, &dist, base).unwrap();
        let mut last = f64::NEG_INFINITY;
        for eps in [0.0, 0.05, 0.1, 0.2, 0.5, 1.0] {
            let best = all_tables
                .iter()
                .filter_map(|t| {
                    let p = Policy::TablePipeline {
                        pipeline: single_table_pipeline(t.clone()),
                    };
                    let d = table.decisions_of(&p).unwrap();
                    (table.risk_of(&d).unwrap() <= eps + RISK_TOL).then(|| table.value_of(&d).unwrap())
                })
                .fold(f64::NEG_INFINITY, f64::max);
            for scope in [TableScope::TopTableOnly, TableScope::AllTables] {
                let res = solve_table_pipeline(&table, &template, scope, eps, &config, trial).unwrap();
                assert!(res.feasible && res.posterior_value_gain >= 0.0);
                assert!(res.posterior_value_gain <= best + 1e-12);
                runs += 1;
                if (res.posterior_value_gain - best).abs() <= 1e-12 {
                    hits += 1;
                }
            }
            let res = solve_table_pipeline(&table, &template, TableScope::TopTableOnly, eps, &config, trial).unwrap();
            assert!(res.posterior_value_gain >= last - 1e-12);
            last = res.posterior_value_gain;
        }
    }
    // a stochastic search may settle in a local optimum now and then
    eprintln!("{hits}/{runs} runs hit the optimum");
    assert!(hits * 100 >= runs * 95, "{hits}/{runs} runs hit the optimum");
}

#[test]
fn zero_budget_returns_baseline_tables() {
    let baseline = DecisionTable::from_fn(vec![3, 3], 3, |c| *c.iter().min().unwrap()).unwrap();
    let template = single_table_pipeline(baseline.clone());
    let support: Vec<Vec<f64>> = (0..9).map(|i| vec![1.0 + (i % 3) as f64, 1.0 + (i / 3) as f64]).collect();
    let base = Policy::TablePipeline { pipeline: template.clone() }.decisions_on(&support).unwrap();
    let b: Vec<Vec<f64>> = base.iter().map(|&d| (0..3).map(|k| if k == d { 0.0 } else { 1.0 }).collect()).collect();
    let r: Vec<Vec<f64>> = base.iter().map(|&d| (0..3).map(|k| if k == d { 0.0 } else { 0.5 }).collect()).collect();
    let dist = EmpiricalCovariateDistribution::uniform(support).unwrap();
    let table = BenefitRiskTable::new(b, r, &dist, base).unwrap();
    let config = BurstConfig {
        bursts: 20,
        burst_len: 10,
        restarts: 10,
        sort_move_prob: 0.5,
    };
    let res = solve_table_pipeline(&table, &template, TableScope::TopTableOnly, 0.0, &config, 3).unwrap();
    assert_eq!(res.posterior_value_gain, 0.0);
    match res.policy {
        Policy::TablePipeline { pipeline } => assert_eq!(pipeline.table("t").unwrap(), &baseline),
        _ => panic!("expected a table policy"),
    }
    let zero = BurstConfig { bursts: 0, ..config };
    assert!(solve_table_pipeline(&table, &template, TableScope::TopTableOnly, 0.1, &zero, 3).is_err());
}
