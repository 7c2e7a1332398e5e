use clap::Parser;
use debias::design::{ingest_csv, realize, Assignment};
use debias::estimators::{point_estimates, EstimatorOptions};
use debias::randomization::EstimatorKind;
use debias::report::EstimateReport;
use debias::AssignmentSpace;
use debias_cli::{
    cmd_estimate, cmd_simulate, render_table, Cli, Command, EXIT_DATA, EXIT_IO, EXIT_VERIFY,
};
use std::path::PathBuf;
use std::process::Command as Process;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn debias(args: &[&str]) -> std::process::Output {
    Process::new(env!("CARGO_BIN_EXE_debias"))
        .args(args)
        .env_clear()
        .output()
        .expect("binary runs")
}

fn estimate_args(argv: &[&str]) -> debias_cli::EstimateArgs {
    let mut full = vec!["debias", "estimate"];
    full.extend_from_slice(argv);
    match Cli::parse_from(full).command {
        Command::Estimate(a) => a,
        _ => unreachable!(),
    }
}

fn simulate_args(argv: &[&str]) -> debias_cli::SimulateArgs {
    let mut full = vec!["debias", "simulate"];
    full.extend_from_slice(argv);
    match Cli::parse_from(full).command {
        Command::Simulate(a) => a,
        _ => unreachable!(),
    }
}

#[test]
fn estimate_output_matches_golden_file() {
    let input = data("golden_input.csv");
    let out = debias(&[
        "estimate",
        "--input",
        input.to_str().unwrap(),
        "--y",
        "outcome",
        "--t",
        "treated",
        "--z",
        "age,score",
        "--flavors",
        "hc2,bc-hc2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        golden("estimate.json")
    );
}

#[test]
fn simulate_output_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sim.json");
    let out = debias(&[
        "simulate",
        "--scheme",
        "1",
        "--variant",
        "1",
        "--n",
        "10",
        "--n-treated",
        "4",
        "--threads",
        "1",
        "--out",
        path.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        std::fs::read_to_string(&path).unwrap(),
        golden("simulate_n10.json")
    );
}

#[test]
fn dump_dgp_matches_golden_file() {
    let out = debias(&["dump-dgp", "--scheme", "2", "--variant", "2", "--n", "8"]);
    assert!(out.status.success());
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        golden("dgp2_2_n8.csv")
    );
}

#[test]
fn constant_outcome_gives_zero_everything() {
    let report = cmd_estimate(&estimate_args(&[
        "--input",
        data("constant_y.csv").to_str().unwrap(),
        "--flavors",
        "hc2,hc3,bc-hc2,bc-hc3",
    ]))
    .unwrap();
    assert_eq!(report.covariates, 2);
    for e in &report.estimators {
        assert!(e.estimate.abs() < 1e-12, "{:?}", e.estimator);
        if let Some(c) = e.bias_correction {
            assert!(c.abs() < 1e-12);
        }
        for v in &e.variance {
            assert!(v.se < 1e-10, "{:?} {:?} se {}", e.estimator, v.flavor, v.se);
        }
    }
    assert_eq!(report.bias_terms_ni.total, 0.0);
    assert_eq!(report.bias_terms_i.total, 0.0);
}

#[test]
fn estimate_matches_library_on_realized_assignment() {
    let table = debias::verify::random_table(11, 5, 0).unwrap();
    let asn = Assignment::new(11, vec![0, 3, 4, 7, 9]).unwrap();
    let obs = realize(&table, &asn).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("obs.csv");
    obs.write_csv(&path, &["a".into(), "b".into()]).unwrap();

    let report = cmd_estimate(&estimate_args(&["--input", path.to_str().unwrap()])).unwrap();
    // The CSV holds shortest round-trip decimals, so re-reading is lossless.
    let reread = ingest_csv(&path, "y", "t", &["a".into(), "b".into()]).unwrap();
    let lib = point_estimates(&reread, EstimatorOptions::default()).unwrap();
    assert_eq!(
        report.get(EstimatorKind::Unadjusted).estimate,
        lib.unadjusted
    );
    assert_eq!(report.get(EstimatorKind::OlsNi).estimate, lib.ols_ni);
    assert_eq!(report.get(EstimatorKind::OlsI).estimate, lib.ols_i);
    assert_eq!(
        report.get(EstimatorKind::DebiasedNi).estimate,
        lib.debiased_ni
    );
    assert_eq!(
        report.get(EstimatorKind::DebiasedI).estimate,
        lib.debiased_i
    );
    assert!(
        (lib.ols_ni
            - point_estimates(&obs, EstimatorOptions::default())
                .unwrap()
                .ols_ni)
            .abs()
            < 1e-12
    );
}

/// Scalar-covariate re-implementation of the non-interacted correction.
fn debiased_ni_oracle(y: &[f64], t: &[bool], z_raw: &[f64]) -> (f64, f64) {
    let n = y.len();
    let nf = n as f64;
    let zbar = z_raw.iter().sum::<f64>() / nf;
    let z: Vec<f64> = z_raw.iter().map(|v| v - zbar).collect();
    let d = z.iter().map(|v| v * v).sum::<f64>() / nf;
    let h: Vec<f64> = z.iter().map(|v| v * v / d).collect();

    struct Arm {
        m: f64,
        zb: f64,
        yb: f64,
        cov_yz: f64,
        cov_hy: f64,
        third: f64,
    }
    let arm = |treated: bool| {
        let idx: Vec<usize> = (0..n).filter(|&i| t[i] == treated).collect();
        let m = idx.len() as f64;
        let mean = |f: &dyn Fn(usize) -> f64| idx.iter().map(|&i| f(i)).sum::<f64>() / m;
        let zb = mean(&|i| z[i]);
        let yb = mean(&|i| y[i]);
        let hb = mean(&|i| h[i]);
        Arm {
            m,
            zb,
            yb,
            cov_yz: mean(&|i| (y[i] - yb) * (z[i] - zb)),
            cov_hy: mean(&|i| (h[i] - hb) * (y[i] - yb)),
            third: idx
                .iter()
                .map(|&i| (z[i] - zb).powi(2) / d * (y[i] - yb))
                .sum(),
        }
    };
    let (a, b) = (arm(true), arm(false));
    let (pa, pb) = (a.m / nf, b.m / nf);

    let same_arm = |m: f64| {
        nf / m.powi(3)
            * (m / nf - 3.0 * m * (m - 1.0) / (nf * (nf - 1.0))
                + 2.0 * m * (m - 1.0) * (m - 2.0) / (nf * (nf - 1.0) * (nf - 2.0)))
    };
    let adjust = |m: f64| {
        nf * (nf - 1.0) * (nf - 2.0) / ((m - 1.0) * (m - 2.0) * m) * m.powi(3) / nf.powi(3)
    };
    let n_aaa = same_arm(a.m);
    let n_aab = -a.m / b.m * n_aaa;
    let c_a = a.m / b.m * n_aaa * adjust(a.m);
    let c_b = a.m / b.m * n_aab * adjust(b.m);

    let d_hat = d - pa * a.zb * a.zb - pb * b.zb * b.zb;
    let n_hat = pa * a.cov_yz + pb * b.cov_yz;
    let ols = (a.yb - b.yb) - (a.zb - b.zb) * n_hat / d_hat;
    let bias = b.m / (b.m - 1.0) * b.cov_hy / nf - a.m / (a.m - 1.0) * a.cov_hy / nf
        + (b.zb - a.zb) * (1.0 / d_hat - 1.0 / d) * n_hat
        + c_a / a.m * a.third
        - c_b / b.m * b.third;
    (ols, ols - bias)
}

#[test]
fn debiased_ni_matches_scalar_oracle() {
    let path = data("n12.csv");
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    let (mut y, mut t, mut z) = (vec![], vec![], vec![]);
    for rec in rdr.records() {
        let rec = rec.unwrap();
        y.push(rec[0].parse::<f64>().unwrap());
        t.push(&rec[1] == "1");
        z.push(rec[2].parse::<f64>().unwrap());
    }
    let (ols, debiased) = debiased_ni_oracle(&y, &t, &z);
    let report = cmd_estimate(&estimate_args(&["--input", path.to_str().unwrap()])).unwrap();
    assert!((report.get(EstimatorKind::OlsNi).estimate - ols).abs() < 1e-12);
    assert!(
        (report.get(EstimatorKind::DebiasedNi).estimate - debiased).abs() < 1e-12,
        "{} vs {debiased}",
        report.get(EstimatorKind::DebiasedNi).estimate
    );
}

#[test]
fn exact_and_monte_carlo_agree_on_small_space() {
    let exact = cmd_simulate(&simulate_args(&[
        "--scheme",
        "1",
        "--variant",
        "1",
        "--n",
        "8",
        "--n-treated",
        "4",
    ]))
    .unwrap();
    let mc = cmd_simulate(&simulate_args(&[
        "--scheme",
        "1",
        "--variant",
        "1",
        "--n",
        "8",
        "--n-treated",
        "4",
        "--mode",
        "mc",
        "--reps",
        "20000",
        "--seed",
        "11",
    ]))
    .unwrap();
    assert_eq!(exact.evaluated, 70);
    for kind in EstimatorKind::ALL {
        let (e, m) = (exact.estimator(kind), mc.estimator(kind));
        let se = m.mc_se_bias.unwrap();
        assert!(
            (e.bias - m.bias).abs() < 4.0 * se,
            "{kind:?}: {} vs {} (se {se})",
            e.bias,
            m.bias
        );
        assert!((e.sd - m.sd).abs() < 4.0 * m.mc_se_sd.unwrap());
    }
}

#[test]
fn dump_writes_one_row_per_assignment() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("rows.csv");
    let summary = cmd_simulate(&simulate_args(&[
        "--scheme",
        "3",
        "--variant",
        "2",
        "--n",
        "8",
        "--n-treated",
        "4",
        "--threads",
        "1",
        "--dump",
        dump.to_str().unwrap(),
    ]))
    .unwrap();
    let mut rdr = csv::Reader::from_path(&dump).unwrap();
    assert_eq!(rdr.headers().unwrap().len(), 1 + 5 + 5 * 4 * 2);
    let rows: Vec<_> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len() as u64, summary.evaluated);
    assert_eq!(
        rows.len() as u64,
        AssignmentSpace::new(8, 4).unwrap().total().unwrap()
    );
    let mean_ni = rows
        .iter()
        .map(|r| r[2].parse::<f64>().unwrap())
        .sum::<f64>()
        / rows.len() as f64;
    assert!((mean_ni - summary.estimator(EstimatorKind::OlsNi).mean).abs() < 1e-12);
}

#[test]
fn text_table_uses_three_decimals_and_blank_bc_cells() {
    let args = simulate_args(&[
        "--scheme",
        "1",
        "--variant",
        "1",
        "--n",
        "8",
        "--n-treated",
        "4",
    ]);
    let summary = cmd_simulate(&args).unwrap();
    let cis = debias::randomization::CiSpec::grid(&args.flavors, &args.ci);
    let text = render_table("DGP1.1", &summary, &cis);
    let bc = text
        .lines()
        .find(|l| l.starts_with("CI Coverage (BC-HC2, Student-t)"))
        .unwrap();
    assert_eq!(bc.split_whitespace().filter(|w| w.contains('.')).count(), 2);
    let bias = text.lines().find(|l| l.starts_with("Bias")).unwrap();
    assert!(bias
        .split_whitespace()
        .skip(1)
        .all(|w| w.split('.').nth(1).unwrap().len() == 3));
}

#[test]
fn exit_codes() {
    let missing = debias(&["estimate", "--input", "/nonexistent/x.csv"]);
    assert_eq!(missing.status.code(), Some(EXIT_IO));

    let bad_col = debias(&[
        "estimate",
        "--input",
        data("n12.csv").to_str().unwrap(),
        "--y",
        "nope",
    ]);
    assert_eq!(bad_col.status.code(), Some(EXIT_DATA));

    let budget = debias(&[
        "simulate",
        "--scheme",
        "1",
        "--variant",
        "1",
        "--n",
        "24",
        "--budget",
        "1000",
    ]);
    assert_eq!(budget.status.code(), Some(EXIT_DATA));
    assert!(String::from_utf8_lossy(&budget.stderr).contains("--mode mc"));

    let no_seed = debias(&[
        "simulate",
        "--scheme",
        "1",
        "--variant",
        "1",
        "--mode",
        "mc",
        "--reps",
        "10",
    ]);
    assert_eq!(no_seed.status.code(), Some(EXIT_DATA));
    let seeded_exact = debias(&[
        "simulate",
        "--scheme",
        "1",
        "--variant",
        "1",
        "--n",
        "8",
        "--seed",
        "3",
    ]);
    assert_eq!(seeded_exact.status.code(), Some(EXIT_DATA));

    let verify_ok = debias(&["verify", "--sizes", "8", "--tables", "1", "--triples", "3"]);
    assert_eq!(
        verify_ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&verify_ok.stdout)
    );

    let injected = debias(&[
        "verify",
        "--sizes",
        "8",
        "--tables",
        "1",
        "--triples",
        "3",
        "--inject",
        "C_{A,NI}=1.01",
    ]);
    assert_eq!(injected.status.code(), Some(EXIT_VERIFY));
    assert!(String::from_utf8_lossy(&injected.stderr).contains("C_{A,NI}"));
}

#[test]
fn env_overrides_flags() {
    let out = Process::new(env!("CARGO_BIN_EXE_debias"))
        .args(["dump-dgp"])
        .env_clear()
        .env("DEBIAS_SCHEME", "2")
        .env("DEBIAS_VARIANT", "2")
        .env("DEBIAS_N", "8")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        golden("dgp2_2_n8.csv")
    );
}

#[test]
fn report_json_round_trips() {
    let report = cmd_estimate(&estimate_args(&[
        "--input",
        data("n12.csv").to_str().unwrap(),
    ]))
    .unwrap();
    let back: EstimateReport = serde_json::from_str(&report.to_json().unwrap()).unwrap();
    assert_eq!(back, report);
}
