use std::path::Path;
use std::process::Command;

use ncergodic_cli::config::{OperatorConfig, Params};
use ncergodic_cli::csv::{data_section_of, write_atomic, Cell, CsvTable};
use ncergodic_cli::{execute, parse_config, run_experiment, ConfigError, Experiment};

const BANACH: &str = r#"
experiment = "banach-c"
seed = 3

[params]
family = "predual"
norm = "trace"
horizon = 64
samples = 200
lambdas = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]

[algebra]
blocks = [{ dim = 3, weight = 0.25 }, { dim = 3, weight = 0.25 }]

[dynamics]
kind = "compose"
steps = [{ kind = "random-inner" }, { kind = "cyclic" }]

[sequence]
kind = "trig"
terms = [{ re = 0.5, theta = 0.25 }, { re = 0.25, im = -0.1, theta = 0.6 }]
"#;

fn root() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../.."))
}

fn column(csv: &str, k: usize) -> Vec<String> {
    csv.lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').nth(k).unwrap().to_string())
        .collect()
}

#[test]
fn minimal_mu_curve_gets_default_grid() {
    let cfg = parse_config(
        "experiment = \"mu-curve\"\n[algebra]\nblocks = [{ dim = 2, weight = 0.5 }]\n[operator]\nkind = \"diagonal\"\nvalues = [2.0, 1.0]\n",
    )
    .unwrap();
    assert_eq!(cfg.params.t_points, 256);
    assert_eq!(cfg.params, Params::default());
    let out = run_experiment(&cfg).unwrap();
    assert!(out.passed());
    assert_eq!(out.table.rows.len(), 256);
    let ts: Vec<f64> = column(&out.table.data_section(), 0).iter().map(|s| s.parse().unwrap()).collect();
    assert!(ts.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(ts[0], 0.0);
    assert_eq!(*ts.last().unwrap(), 1.0);
}

#[test]
fn negative_weight_is_rejected_by_name() {
    for w in ["-1", "-1.0", "0.0"] {
        let text = format!("experiment = \"mu-curve\"\n[algebra]\nblocks = [{{ dim = 2, weight = {w} }}]\n");
        let e = parse_config(&text).unwrap_err();
        assert!(e.to_string().contains("weight"), "{e}");
    }
    let e = parse_config("experiment = \"mu-curve\"\n[algebra]\nblocks = [{ dim = 0, weight = 1.0 }]\n").unwrap_err();
    assert!(matches!(&e, ConfigError::Invalid { key, .. } if key == "algebra.blocks[0].dim"), "{e}");
}

#[test]
fn malformed_documents_are_rejected() {
    let unknown_key = parse_config("experiment = \"mu-curve\"\nsneed = 3\n").unwrap_err();
    assert!(unknown_key.to_string().contains("sneed"), "{unknown_key}");
    let unknown_exp = parse_config("experiment = \"mu-kurve\"\n").unwrap_err();
    assert!(unknown_exp.to_string().contains("mu-kurve"), "{unknown_exp}");
    let missing = parse_config("seed = 1\n").unwrap_err();
    assert!(missing.to_string().contains("experiment"), "{missing}");
    let nested = parse_config("experiment = \"ergodic\"\n[params]\nepsilon = 0.1\n").unwrap_err();
    assert!(nested.to_string().contains("epsilon"), "{nested}");
    let wrong_type = parse_config("experiment = \"ergodic\"\n[params]\nhorizon = \"ten\"\n").unwrap_err();
    assert!(wrong_type.to_string().contains("horizon"), "{wrong_type}");
    let bad_eps = parse_config("experiment = \"ergodic\"\n[params]\neps = -0.5\n").unwrap_err();
    assert!(bad_eps.to_string().contains("params.eps"), "{bad_eps}");
    let bad_kind = parse_config("experiment = \"ergodic\"\n[operator]\nkind = \"diagonal\"\nvalue = [1.0]\n").unwrap_err();
    assert!(bad_kind.to_string().contains("value"), "{bad_kind}");
}

#[test]
fn banach_config_round_trips() {
    let cfg = parse_config(BANACH).unwrap();
    let text = cfg.to_toml();
    let back = parse_config(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.to_toml(), text);
    assert_eq!(back.digest(), cfg.digest());
}

#[test]
fn huge_seeds_round_trip() {
    let mut cfg = parse_config("experiment = \"discrepancy\"\n").unwrap();
    cfg.seed = u64::MAX;
    assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    assert_eq!(parse_config("experiment = \"discrepancy\"\nseed = \"18446744073709551615\"\n").unwrap().seed, u64::MAX);
    assert!(parse_config("experiment = \"discrepancy\"\nseed = -1\n").is_err());
}

#[test]
fn digest_tracks_the_seed() {
    let mut cfg = parse_config(BANACH).unwrap();
    let d = cfg.digest();
    cfg.seed += 1;
    assert_ne!(cfg.digest(), d);
}

#[test]
fn cyclic_ergodic_run_is_exact_at_the_cycle_length() {
    let text = std::fs::read_to_string(root().join("configs/ergodic-cyclic.toml")).unwrap();
    let cfg = parse_config(&text).unwrap();
    let out = run_experiment(&cfg).unwrap();
    assert!(out.passed(), "{:?}", out.report.failures);
    assert_eq!(out.table.header, ["n", "sup_norm", "l1_norm", "mu_delta"]);
    let Cell::Real(sup) = out.table.rows[4][1] else { panic!() };
    assert!(sup <= 1e-12, "{sup}");
    assert_eq!(out.table.rows[4][0], Cell::Int(5));
}

#[test]
fn golden_entry_times() {
    let cfg = parse_config("experiment = \"uniform-seq\"\n").unwrap();
    let out = run_experiment(&cfg).unwrap();
    let u = column(&out.table.data_section(), 1);
    assert_eq!(u, ["0", "2", "4", "5", "7"]);
    assert_eq!(column(&out.table.data_section(), 0), ["0", "1", "2", "3", "4"]);
}

#[test]
fn property_suite_reports_every_suite() {
    let cfg = parse_config("experiment = \"property-suite\"\n[params]\ntrials = 20\n").unwrap();
    let out = run_experiment(&cfg).unwrap();
    assert!(out.passed());
    assert_eq!(out.lines.len(), 16);
    assert_eq!(out.table.rows.len(), 16);
    assert!(out.lines.iter().all(|l| l.contains("20/20")));
    let some = parse_config("experiment = \"property-suite\"\n[params]\nsuites = \"galois-oracle, chebyshev\"\ntrials = 5\n").unwrap();
    assert_eq!(run_experiment(&some).unwrap().lines.len(), 2);
    assert!(parse_config("experiment = \"property-suite\"\n[params]\nsuites = \"nope\"\n").is_err());
}

#[test]
fn banach_flags_the_scaled_identity() {
    let text = std::fs::read_to_string(root().join("configs/banach-c-scaled.toml")).unwrap();
    let out = run_experiment(&parse_config(&text).unwrap()).unwrap();
    assert!(!out.passed());
    assert!(out.report.failures.iter().any(|f| f == "uniform boundedness violated"));
    let ok = run_experiment(&parse_config(BANACH).unwrap()).unwrap();
    assert!(ok.passed(), "{:?}", ok.report.failures);
    assert_eq!(ok.table.header, ["lambda", "C_empirical", "bound_1_over_lambda"]);
}

#[test]
fn every_example_config_parses() {
    for entry in std::fs::read_dir(root().join("configs")).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let cfg = parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    }
}

#[test]
fn empty_table_renders_header_and_footer_only() {
    let t = CsvTable::new(&["n", "D_star"]);
    assert_eq!(t.render("abc", 9), "n,D_star\n# config_digest=abc\n# seed=9\n");
}

#[test]
fn reals_use_seventeen_significant_digits() {
    let mut t = CsvTable::new(&["x"]);
    for v in [0.1, -0.0, 1.0 / 3.0, 6.02e23, 5e-324] {
        t.push(vec![v.into()]);
    }
    let s = t.data_section();
    let vals: Vec<&str> = s.lines().skip(1).collect();
    assert_eq!(vals[0], "1.0000000000000001e-1");
    assert_eq!(vals[1], "0.0000000000000000e0");
    for (line, v) in vals.iter().zip([0.1, 0.0, 1.0 / 3.0, 6.02e23, 5e-324]) {
        assert_eq!(line.parse::<f64>().unwrap(), v);
        let mantissa = line.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.len(), 18);
    }
    assert!(!s.contains('\r'));
}

#[test]
fn atomic_write_replaces_and_leaves_no_temporaries() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("out.csv");
    write_atomic(&p, "a\n").unwrap();
    write_atomic(&p, "b\n").unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap(), "b\n");
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    let e = write_atomic(&dir.path().join("missing/out.csv"), "x").unwrap_err();
    assert!(e.to_string().contains("missing"));
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = parse_config(BANACH).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let wa = execute(&cfg, a.path()).unwrap();
    let wb = execute(&cfg, b.path()).unwrap();
    let (ta, tb) = (std::fs::read_to_string(&wa.csv).unwrap(), std::fs::read_to_string(&wb.csv).unwrap());
    assert_eq!(ta, tb);
    assert_eq!(data_section_of(&ta), wa.outcome.table.data_section());
    assert!(ta.ends_with(&format!("# config_digest={}\n# seed=3\n", cfg.digest())));
}

#[test]
fn report_carries_the_required_fields() {
    let text = std::fs::read_to_string(root().join("configs/closure.toml")).unwrap();
    let cfg = parse_config(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let w = execute(&cfg, dir.path()).unwrap();
    let report: toml::Table = std::fs::read_to_string(&w.report).unwrap().parse().unwrap();
    for key in ["verdict", "n0", "eps", "delta", "horizon", "seed"] {
        assert!(report.contains_key(key), "{key}");
    }
    assert_eq!(report["verdict"].as_str(), Some("pass"));
    assert_eq!(report["seed"].as_integer(), Some(5));
    assert_eq!(w.outcome.report.experiment, Experiment::Closure);
}

#[test]
fn operator_defaults_are_random() {
    let cfg = parse_config("experiment = \"lambda-curve\"\n").unwrap();
    assert_eq!(cfg.operator, OperatorConfig::Random { scale: 1.0 });
    let a = run_experiment(&cfg).unwrap().table;
    let mut other = cfg.clone();
    other.seed = 1;
    assert_ne!(run_experiment(&other).unwrap().table, a);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ncergodic"))
}

#[test]
fn binary_exit_codes_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = root().join("configs/mu-curve.toml");
    let out = bin().args(["--config", cfg.to_str().unwrap(), "--out"]).arg(dir.path()).args(["--seed", "42", "--quiet"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let csv = std::fs::read_to_string(dir.path().join("mu-curve.csv")).unwrap();
    assert!(csv.ends_with("# seed=42\n"));

    let bad = bin().args(["--config", cfg.to_str().unwrap(), "--out"]).arg(dir.path()).args(["--seed", "-3"]).output().unwrap();
    assert_ne!(bad.status.code(), Some(0));

    let scaled = root().join("configs/banach-c-scaled.toml");
    let out = bin().args(["--config", scaled.to_str().unwrap(), "--out"]).arg(dir.path()).arg("--quiet").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("uniform boundedness violated"));

    let missing = bin().args(["--config", "/nonexistent/x.toml"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/x.toml"));

    let bad_cfg = dir.path().join("bad.toml");
    std::fs::write(&bad_cfg, "experiment = \"mu-curve\"\n[algebra]\nblocks = [{ dim = 2, weight = -1 }]\n").unwrap();
    let out = bin().arg("--config").arg(&bad_cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("weight"));
}
