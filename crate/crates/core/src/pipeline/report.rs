//! Markdown rendering of run, comparison and tuning reports.

use std::fmt::Write;

use super::{CompareReport, Evaluation, RunReport, TuneReport};

fn evaluation_table(out: &mut String, e: &Evaluation) {
    let _ = writeln!(out, "| window | end week | fold MAPEs | score |");
    let _ = writeln!(out, "|---|---|---|---|");
    for w in &e.windows {
        let mapes: Vec<String> = w.folds.iter().map(|f| format!("{:.2}", f.mape)).collect();
        let _ = writeln!(out, "| {} | {} | {} | {:.3} |", w.index, w.end_week, mapes.join(", "), w.score);
    }
    let _ = writeln!(out, "\nFinal score: {:.3}\n", e.final_score);
}

fn run_body(out: &mut String, r: &RunReport) {
    let _ = writeln!(out, "Origin week {}; regressors: {}.\n", r.origin, r.regressors.join(", "));
    let _ = writeln!(out, "### Forecast\n\n| week | starts | collections |\n|---|---|---|");
    for p in &r.forecast {
        let _ = writeln!(out, "| {} | {} | {:.2} |", p.week, p.week_start, p.value);
    }
    out.push('\n');
    if let Some(e) = &r.evaluation {
        let _ = writeln!(out, "### Rolling evaluation\n");
        evaluation_table(out, e);
    }
    if let Some(spec) = &r.lag_spec {
        let _ = writeln!(out, "### Support lags\n");
        for (name, regime) in [("non-Q4", &spec.non_q4), ("Q4", &spec.q4)] {
            let terms: Vec<String> = regime.terms.iter().map(|t| format!("{} ({:+.4})", t.lag, t.coefficient)).collect();
            let _ = writeln!(out, "- {name}: {}", if terms.is_empty() { "none".into() } else { terms.join(", ") });
        }
        if spec.q4_fallback {
            let _ = writeln!(out, "- Q4 history too short; Q4 reuses the non-Q4 lags");
        }
        out.push('\n');
    }
    if !r.components.is_empty() {
        let _ = writeln!(out, "### Component shares (training span)\n\n| component | kind | share |\n|---|---|---|");
        for c in &r.components {
            let _ = writeln!(out, "| {} | {:?} | {:.3} |", c.name, c.kind, c.share);
        }
        out.push('\n');
    }
    let _ = writeln!(out, "### Payment deviation (days after due date)\n");
    let _ = writeln!(out, "| segment | n | mean | median | late share |\n|---|---|---|---|---|");
    for (seg, d) in &r.payment_deviation {
        let _ = writeln!(out, "| {} | {} | {:.1} | {:.1} | {:.2} |", seg.as_str(), d.n, d.mean_days, d.median_days, d.late_share);
    }
    let a = &r.audit;
    let _ = writeln!(out, "\n### Leakage audit\n\n{} checks, {} violations.\n", a.checks, a.violations);
}

pub fn run_markdown(r: &RunReport) -> String {
    let mut out = format!("# Collections forecast ({})\n\n", r.variant);
    run_body(&mut out, r);
    out
}

pub fn compare_markdown(c: &CompareReport) -> String {
    let mut out = String::from("# H1 vs H2\n\n");
    let _ = writeln!(
        out,
        "Final score H1 {:.3}, H2 {:.3}; accuracy uplift {:.2}%.\n",
        c.h1.evaluation.as_ref().map_or(f64::NAN, |e| e.final_score),
        c.h2.evaluation.as_ref().map_or(f64::NAN, |e| e.final_score),
        c.uplift_pct
    );
    let per: Vec<String> = c.window_uplift_pct.iter().map(|u| format!("{u:.2}%")).collect();
    let _ = writeln!(out, "Per-window uplift: {}.\n", per.join(", "));
    for r in [&c.h1, &c.h2] {
        let _ = writeln!(out, "## {}\n", r.variant);
        run_body(&mut out, r);
    }
    out
}

pub fn tune_markdown(t: &TuneReport) -> String {
    let mut out = String::from("# Tuning\n\n");
    let _ = writeln!(
        out,
        "{} trials ({:?}, seed {}). Default loss {:.4}, best loss {:.4}.\n",
        t.result.history.len(),
        t.result.strategy,
        t.result.seed,
        t.default_loss,
        t.result.best_loss
    );
    let _ = writeln!(out, "| parameter | best |\n|---|---|");
    for (k, v) in &t.result.best_params {
        let _ = writeln!(out, "| {k} | {} |", serde_json::to_string(v).unwrap_or_default());
    }
    out
}
