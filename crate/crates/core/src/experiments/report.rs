//! CSV rendering. Floats use Rust's shortest round-trip representation, so
//! identical results always give byte-identical files.

use std::fmt::Write;

use super::{mean_by_key, AblationRow, OodResultRow, PerfRow, WrongPredRow};

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

/// `method,seed,roc_auc,average_precision`, then one `mean` row per method.
pub fn ood_csv(rows: &[OodResultRow]) -> String {
    let mut out = String::from("method,seed,roc_auc,average_precision\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.method, r.seed, r.roc_auc, r.average_precision).unwrap();
    }
    let auc = mean_by_key(rows.iter().map(|r| (r.method.clone(), Some(r.roc_auc))));
    let ap = mean_by_key(rows.iter().map(|r| (r.method.clone(), Some(r.average_precision))));
    for ((m, a), (_, p)) in auc.into_iter().zip(ap) {
        writeln!(out, "{m},mean,{},{}", opt(a), opt(p)).unwrap();
    }
    out
}

/// `method,seed,roc_auc,status`; skipped runs have `NA` and are left out of
/// the mean.
pub fn wrongpred_csv(rows: &[WrongPredRow]) -> String {
    let mut out = String::from("method,seed,roc_auc,status\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.method, r.seed, opt(r.roc_auc), r.status).unwrap();
    }
    for (m, a) in mean_by_key(rows.iter().map(|r| (r.method.clone(), r.roc_auc))) {
        let status = if a.is_some() { "ok" } else { "skipped" };
        writeln!(out, "{m},mean,{},{status}", opt(a)).unwrap();
    }
    out
}

/// `method,seed,accuracy,nll`.
pub fn perf_csv(rows: &[PerfRow]) -> String {
    let mut out = String::from("method,seed,accuracy,nll\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.method, r.seed, r.accuracy, r.nll).unwrap();
    }
    let acc = mean_by_key(rows.iter().map(|r| (r.method.clone(), Some(r.accuracy))));
    let nll = mean_by_key(rows.iter().map(|r| (r.method.clone(), Some(r.nll))));
    for ((m, a), (_, n)) in acc.into_iter().zip(nll) {
        writeln!(out, "{m},mean,{},{}", opt(a), opt(n)).unwrap();
    }
    out
}

/// Long format `variant,seed,metric,value`.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("variant,seed,metric,value\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.variant, r.seed, r.metric, opt(r.value)).unwrap();
    }
    for ((variant, metric), v) in
        mean_by_key(rows.iter().map(|r| ((r.variant.clone(), r.metric), r.value)))
    {
        writeln!(out, "{variant},mean,{metric},{}", opt(v)).unwrap();
    }
    out
}

/// `epoch,loss` training history.
pub fn train_csv(loss_history: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (e, l) in loss_history.iter().enumerate() {
        writeln!(out, "{},{l}", e + 1).unwrap();
    }
    out
}
