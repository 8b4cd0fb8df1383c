use std::fs;
use std::path::Path;

use realistic_rules::cli::run;

fn args(list: &[&str]) -> Vec<String> {
    std::iter::once("realistic-rules").chain(list.iter().copied()).map(String::from).collect()
}

fn simulate(dir: &Path, generator: &str, n: &str) -> std::path::PathBuf {
    let out = dir.join("data.csv");
    let code = run(args(&[
        "simulate",
        "--generator",
        generator,
        "--n",
        n,
        "--seed",
        "3",
        "--output",
        out.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    out
}

#[test]
fn categorize_succeeds_and_rejects_negative_scores() {
    assert_eq!(run(args(&["categorize", "0", "10", "10.5", "75"])), 0);
    assert_eq!(run(args(&["categorize", "-1"])), 2);
}

#[test]
fn unknown_subcommand_and_flag_are_usage_errors() {
    assert_eq!(run(args(&["bogus"])), 1);
    assert_eq!(run(args(&["estimate", "--no-such-flag"])), 1);
    assert_eq!(run(args(&["estimate", "--alpha", "abc"])), 1);
}

#[test]
fn missing_input_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(run(args(&["estimate", "--output-dir", out.to_str().unwrap()])), 1);
}

#[test]
fn unreadable_data_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("bad.csv");
    fs::write(&csv, "X1,A,Y\n1,2,0\n0,7,1\n").unwrap();
    let code = run(args(&["fit", "--input", csv.to_str().unwrap(), "--covariates", "X1", "--output-dir", tmp.path().to_str().unwrap()]));
    assert_eq!(code, 2);
    let missing = tmp.path().join("missing.csv");
    let code = run(args(&["fit", "--input", missing.to_str().unwrap(), "--covariates", "X1"]));
    assert_eq!(code, 2);
}

#[test]
fn config_errors_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = [
        ("alpha = 1.5\n", "alpha"),
        ("replicates = -3\n", "replicates"),
        ("families = [\"sometimes\"]\n", "families"),
        ("colour = \"blue\"\n", "colour"),
        ("estimators = [\"magic\"]\n", "estimators"),
    ];
    for (i, (body, field)) in bad.iter().enumerate() {
        let path = tmp.path().join(format!("c{i}.toml"));
        fs::write(&path, body).unwrap();
        let parsed = realistic_rules::cli::ConfigFile::load(&path).and_then(|f| realistic_rules::cli::RunConfig::from_file(f));
        let err = parsed.expect_err(body);
        assert_eq!(err.field, *field, "{body}");
        assert_eq!(run(args(&["fit", "--config", path.to_str().unwrap()])), 1, "{body}");
    }
}

#[test]
fn simulate_requires_a_positive_size() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("zero.csv");
    let code = run(args(&["simulate", "--generator", "coverage", "--n", "0", "--output", out.to_str().unwrap()]));
    assert_ne!(code, 0);
    assert!(!out.exists());
    assert_eq!(run(args(&["simulate", "--generator", "coverage"])), 1);
    assert_eq!(run(args(&["simulate", "--generator", "nope", "--n", "5"])), 1);
}

#[test]
fn flags_override_config_values() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), "coverage", "600");
    let out = tmp.path().join("est");
    let cfg = tmp.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "input = {:?}\noutput_dir = {:?}\ncovariates = [\"X1\", \"X2\"]\nlevels = 3\nreplicates = 0\nestimators = [\"iptw\"]\n",
            data.to_str().unwrap(),
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    assert_eq!(run(args(&["estimate", "--config", cfg.to_str().unwrap(), "--estimators", "gcomp,tmle"])), 0);
    let table = fs::read_to_string(out.join("estimates_psi.csv")).unwrap();
    assert!(table.starts_with("family,target,gcomp,tmle\n"), "{table}");
    // Target 0 is the reference level and gets no row.
    assert_eq!(table.lines().count(), 1 + 3 * 2);
}

#[test]
fn fit_then_simulate_from_fitted_models() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), "structural-zero", "3000");
    let dir = tmp.path().join("fit");
    let common = ["--covariates", "FRAIL,OLD,SMOKER", "--input", data.to_str().unwrap()];
    let mut fit = vec!["fit", "--output-dir", dir.to_str().unwrap()];
    fit.extend(common);
    assert_eq!(run(args(&fit)), 0);
    for f in ["models.json", "positivity.csv", "assignments_realistic.csv", "assignments_itt.csv", "metadata.json"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let models = dir.join("models.json");
    let out = tmp.path().join("resim.csv");
    let mut sim = vec!["simulate", "--models", models.to_str().unwrap(), "--n", "250", "--output", out.to_str().unwrap()];
    sim.extend(common);
    assert_eq!(run(args(&sim)), 0);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 251);
    assert!(text.starts_with("FRAIL,OLD,SMOKER,A,Y"));
}

#[test]
fn diagnose_from_generator_writes_bias_table() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("diag");
    let code = run(args(&[
        "diagnose",
        "--generator",
        "structural-zero",
        "--n-sim",
        "500",
        "--diag-replicates",
        "20",
        "--output-dir",
        dir.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    let bias = fs::read_to_string(dir.join("bias.csv")).unwrap();
    assert!(bias.starts_with("target,Static,Realistic,ITT\n"), "{bias}");
    assert_eq!(bias.lines().count(), 7);
}
