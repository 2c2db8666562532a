use std::path::Path;
use std::process::{Command, Output};

fn ledgercast(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ledgercast"))
        .args(args)
        .current_dir(cwd)
        .env("LEDGERCAST_LOG", "error")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn generate_then_forecast_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = ledgercast(&["generate", "--out", "data", "--seed", "4"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("data/invoices.csv").exists() && d.join("data/support.csv").exists());

    let o = ledgercast(&["forecast", "--data", "data", "--out", "f"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("f/forecast.json")).unwrap()).unwrap();
    assert_eq!(report["forecast"].as_array().unwrap().len(), 13);
    assert!(d.join("f/forecast.md").exists());

    let o = ledgercast(&["compare", "--data", "data", "--out", "c"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("uplift"));
    let c: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("c/compare.json")).unwrap()).unwrap();
    assert_eq!(c["h2"]["audit"]["violations"], 0);
}

#[test]
fn train_writes_the_closure_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(ledgercast(&["generate", "--out", "data"], d).status.success());
    let o = ledgercast(&["train", "--data", "data", "--out", "m"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("MAE"));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("m/closure_model.json")).unwrap()).unwrap();
    assert!(m["booster"]["trees"].as_array().is_some_and(|t| !t.is_empty()));
}

#[test]
fn bad_rows_exit_with_data_code_and_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir(d.join("bad")).unwrap();
    std::fs::write(
        d.join("bad/invoices.csv"),
        "invoice_id,customer_id,segment,issue_date,due_date,amount,payment_date,payment_terms_days\n\
         A,C1,CSB,2021-01-05,2021-01-20,100.00,2021-01-22,15\n\
         B,C1,CSB,2021-01-25,2021-01-20,5.00,,15\n",
    )
    .unwrap();
    let o = ledgercast(&["forecast", "--data", "bad", "--out", "o"], d);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("invoices.csv:3"), "{}", stderr(&o));
}

#[test]
fn h2_report_without_support_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(ledgercast(&["generate", "--out", "data"], d).status.success());
    std::fs::remove_file(d.join("data/support.csv")).unwrap();
    let o = ledgercast(&["report", "--data", "data", "--out", "r"], d);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("support"));
    let o = ledgercast(&["forecast", "--variant", "h1", "--data", "data", "--out", "r"], d);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = ledgercast(&["forecast", "--variant", "h3"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = ledgercast(&["forecast", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(2), "no data configured: {}", stderr(&o));
    std::fs::write(dir.path().join("bad.toml"), "[eval]\nalpha = 3.0\n").unwrap();
    let o = ledgercast(&["forecast", "--config", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
