use fleetup_bench::{run_scaling, run_scaling_with, trend, write_csv, BenchPlan, Limit, Solver};
use fleetup_core::{BnbLimits, MlHyperparams, SolveStatus};

fn quick(horizons: &[usize]) -> BenchPlan {
    BenchPlan {
        horizons: horizons.to_vec(),
        ml: MlHyperparams {
            iterations: 300,
            patience: 100,
            restarts: 2,
            ..MlHyperparams::default()
        },
        ..BenchPlan::default()
    }
}

#[test]
fn short_ladder_both_solvers_finish() {
    let rows = run_scaling(&quick(&[3, 10, 30])).unwrap();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert!(r.finished(), "{r:?}");
        assert!(r.seconds.unwrap() >= 0.0);
    }
    for pair in rows.chunks(2) {
        let (exact, ml) = (&pair[0], &pair[1]);
        assert_eq!(exact.solver, Solver::Exact);
        assert_eq!(exact.status, SolveStatus::Optimal);
        assert_eq!(ml.solver, Solver::Ml);
        let (e, m) = (exact.objective.unwrap(), ml.objective.unwrap());
        assert!(m >= e - 1e-6 * e.abs(), "gradient solver beat the optimum: {m} < {e}");
        assert!(ml.discrepancy_percent.unwrap() >= 0.0);
    }
}

#[test]
fn undiscounted_variant_differs_from_the_discounted_table_value() {
    let rows = run_scaling(&quick(&[3])).unwrap();
    let exact = rows[0].objective.unwrap();
    // the discounted scenario 7 optimum is about -5,668,737
    assert!((exact - -5_668_737.0).abs() > 1_000.0, "{exact}");
}

#[test]
fn repetitions_with_fixed_seeds_agree() {
    let plan = BenchPlan {
        repetitions: 3,
        ..quick(&[3, 10])
    };
    let rows = run_scaling(&plan).unwrap();
    assert_eq!(rows.len(), 12);
    for group in rows.chunks(3) {
        assert!(group
            .iter()
            .all(|r| r.objective == group[0].objective && r.solver == group[0].solver));
        let reps: Vec<usize> = group.iter().map(|r| r.repetition).collect();
        assert_eq!(reps, vec![0, 1, 2]);
    }
}

#[test]
fn memory_cap_trips_mid_ladder_while_gradient_solver_continues() {
    // the exact solver needs about 1.7 MB at T = 30 and 0.25 MB at T = 10
    let plan = BenchPlan {
        exact: BnbLimits {
            max_memory_bytes: 1 << 20,
            ..BnbLimits::default()
        },
        ..quick(&[3, 10, 30, 100])
    };
    let rows = run_scaling(&plan).unwrap();
    assert_eq!(rows.len(), 8);
    let at = |h: usize, s: Solver| rows.iter().find(|r| r.horizon == h && r.solver == s).unwrap();
    assert_eq!(at(10, Solver::Exact).status, SolveStatus::Optimal);
    let dnf = at(30, Solver::Exact);
    assert_eq!(dnf.status, SolveStatus::MemoryLimit);
    assert_eq!(dnf.limit, Some(Limit::Memory));
    assert_eq!(at(30, Solver::Ml).status, SolveStatus::Feasible);
    assert_eq!(at(30, Solver::Ml).discrepancy_percent, None);
    assert_eq!(at(100, Solver::Exact).limit, Some(Limit::Skipped));
    assert_eq!(at(100, Solver::Exact).seconds, None);
    assert_eq!(at(100, Solver::Ml).status, SolveStatus::Feasible);
    let t = trend(&rows);
    assert_eq!(t.first_exact_dnf, Some(30));
    assert_eq!(t.ml_rungs_beyond, 1);
}

#[test]
fn ladder_stops_after_both_solvers_fail() {
    let mut plan = quick(&[3, 10, 30]);
    plan.exact.max_memory_bytes = 1;
    plan.ml.time_limit = Some(1e-9);
    let mut seen = 0;
    let rows = run_scaling_with(&plan, |_| seen += 1).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(seen, 2);
    assert_eq!(rows[0].limit, Some(Limit::Memory));
    assert_eq!(rows[1].limit, Some(Limit::Time));
}

#[test]
fn csv_has_one_row_per_run() {
    let rows = run_scaling(&quick(&[3, 10])).unwrap();
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).unwrap();
    let mut reader = csv::Reader::from_reader(buf.as_slice());
    let headers = reader.headers().unwrap().clone();
    assert_eq!(&headers[0], "horizon");
    assert_eq!(&headers[6], "discrepancy_percent");
    let records: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 4);
    let horizons: Vec<&str> = records.iter().map(|r| &r[0]).collect();
    assert_eq!(horizons, vec!["3", "3", "10", "10"]);
}

#[test]
fn invalid_plans_are_rejected() {
    assert!(run_scaling(&quick(&[10, 3])).is_err());
    assert!(run_scaling(&quick(&[])).is_err());
    assert!(run_scaling(&quick(&[1])).is_err());
}
