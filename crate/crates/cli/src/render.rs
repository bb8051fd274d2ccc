use std::fmt::Write;

use serde_json::Value as Json;

use egca::credit::ModeKind;
use egca::pipeline::PipelineReport;

fn compact(v: &Json) -> String {
    serde_json::to_string(v).unwrap_or_default()
}

pub fn diff(v: &Json) -> String {
    let mut out = String::new();
    if v["k_star"].is_null() {
        out.push_str("no divergence\n");
        return out;
    }
    let _ = writeln!(out, "divergence at event {} (line {})", v["k_star"], v["line"]);
    let _ = writeln!(out, "  kind:    {}", v["mismatch"]["kind"].as_str().unwrap_or("?"));
    let _ = writeln!(out, "  span:    {}", compact(&v["token_span"]));
    if let Some(t) = v.get("tokens").or_else(|| v.get("source_line")).and_then(Json::as_str) {
        let _ = writeln!(out, "  code:    {t}");
    }
    if let Some(vars) = v["mismatch"]["variables"].as_array() {
        for m in vars {
            let _ = writeln!(
                out,
                "  {}: {} (reference {}: {})",
                m["candidate"].as_str().unwrap_or("?"),
                compact(&m["candidate_value"]),
                m["reference"].as_str().unwrap_or("?"),
                compact(&m["reference_value"]),
            );
        }
    }
    if let Some(ctx) = v["context"].as_object() {
        let parts: Vec<String> = ctx.iter().map(|(k, x)| format!("{k}={}", compact(x))).collect();
        let _ = writeln!(out, "  state:   {}", parts.join(" "));
    }
    out
}

pub fn route(v: &Json) -> String {
    let mut out = v["mode"].as_str().unwrap_or("?").to_string();
    if !v["span"].is_null() {
        let _ = write!(out, " span {}", compact(&v["span"]));
    }
    let _ = writeln!(
        out,
        "\n  r_hat {}  constraints_ok {}  comparable {}",
        v["r_hat"], v["constraints_ok"], v["comparable"]
    );
    if let Some(m) = v["message"].as_str() {
        let _ = writeln!(out, "  {m}");
    }
    out
}

pub fn report(r: &PipelineReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<12} {:>6} {:>9}", "mode", "count", "fraction");
    for m in ModeKind::ALL {
        let _ = writeln!(out, "{:<12} {:>6} {:>9.3}", m.as_str(), r.mode_counts.get(&m).unwrap_or(&0), r.mode_fractions.get(&m).unwrap_or(&0.0));
    }
    let _ = writeln!(out, "localization rate {:.3}, misses {}", r.localization_rate, r.localization_misses);
    let _ = writeln!(out, "localizer {} ({} fallbacks)", r.localizer, r.fallback_count);
    for g in &r.groups {
        let _ = writeln!(out, "\n{}", g.problem);
        for s in &g.samples {
            let span = s.span.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(out, "  {:<20} {:<10} A={:+.4} span {}", s.id, s.mode.as_str(), s.advantage, span);
        }
    }
    for e in &r.errors {
        let _ = writeln!(out, "error: {e}");
    }
    if let Some(t) = &r.stage_seconds {
        let _ = writeln!(
            out,
            "\nseconds: parse {:.4} constraints {:.4} similarity {:.4} execute {:.4} localize {:.4}",
            t.parse, t.constraints, t.similarity, t.execute, t.localize
        );
    }
    out
}

pub fn ablation(summary: &Json) -> String {
    let mut out = format!("{:<16} {:>10} {:>10} {:>12} {:>9}\n", "strategy", "auc_mean", "auc_std", "steps_to_0.9", "censored");
    if let Some(map) = summary.as_object() {
        for (name, s) in map {
            let _ = writeln!(
                out,
                "{:<16} {:>10.3} {:>10.3} {:>12.2} {:>9}",
                name,
                s["auc_mean"].as_f64().unwrap_or(f64::NAN),
                s["auc_std"].as_f64().unwrap_or(f64::NAN),
                s["steps_to_09_mean"].as_f64().unwrap_or(f64::NAN),
                s["steps_to_09_censored"],
            );
        }
    }
    out
}
