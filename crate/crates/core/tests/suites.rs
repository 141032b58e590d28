use ncergodic::suites::{parse_selection, run_all, Suite};
use ncergodic::Execution;

#[test]
fn every_suite_passes_at_default_trials() {
    for r in run_all(20240601, Execution::default()).unwrap() {
        println!("{r}");
        assert!(r.passed(), "{r}");
        assert_eq!(r.trials, Suite::from_name(r.name).unwrap().default_trials());
    }
}

#[test]
fn suites_do_not_depend_on_execution() {
    for s in [Suite::MuProduct, Suite::CentralSplit, Suite::GaloisOracle] {
        let a = s.run(40, 9, Execution::Parallel).unwrap();
        let b = s.run(40, 9, Execution::Sequential).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn seeds_change_the_draws() {
    let a = Suite::Chebyshev.run(50, 1, Execution::Sequential).unwrap();
    let b = Suite::Chebyshev.run(50, 2, Execution::Sequential).unwrap();
    assert_ne!(a.max_excess, b.max_excess);
}

#[test]
fn selection_parsing() {
    assert_eq!(parse_selection("all").unwrap().len(), Suite::ALL.len());
    assert_eq!(parse_selection("").unwrap().len(), Suite::ALL.len());
    assert_eq!(
        parse_selection("chebyshev, lattice").unwrap(),
        vec![Suite::Chebyshev, Suite::Lattice]
    );
    assert!(parse_selection("chebyshev,nope").is_err());
    for s in Suite::ALL {
        assert_eq!(Suite::from_name(s.name()), Some(s));
    }
}
