//! Markdown summary of a run directory.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use super::config::{input, CliResult};

/// Artifacts rendered as tables, in order.
const CSV_TABLES: [(&str, &str); 3] = [
    ("trace.csv", "Iterations"),
    ("levels.csv", "Approximation levels"),
    ("comparison.csv", "Comparison trials"),
];

/// Small JSON artifacts rendered as key/value lists.
const JSON_LISTS: [&str; 9] = [
    "iteration.json",
    "bound.json",
    "gate.json",
    "decay.json",
    "residual.json",
    "capacity.json",
    "potential.json",
    "diagnostics.json",
    "tails.json",
];

fn expected() -> String {
    let mut names = vec!["run.json", "constants.json"];
    names.extend(CSV_TABLES.iter().map(|(n, _)| *n));
    names.extend(JSON_LISTS);
    names.join(", ")
}

fn read_json(dir: &Path, name: &str) -> CliResult<Option<Value>> {
    let path = dir.join(name);
    if !path.is_file() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| input(format!("{}: {e}", path.display())))
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => "–".into(),
        Value::String(s) => s.clone(),
        Value::Array(a) => format!("[{} entries]", a.len()),
        Value::Object(_) => "{…}".into(),
        other => other.to_string(),
    }
}

/// Flattens nested objects into `(dotted key, value)` pairs; the
/// exponent block of a constants report is inlined without a prefix.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() || prefix == "exponents" { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), scalar(other))),
    }
}

fn table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out.push('\n');
}

/// Renders the run status, a one-row constants table, CSV tables and
/// key/value lists for whatever artifacts are present.
pub fn report(dir: &Path) -> CliResult<String> {
    let run = read_json(dir, "run.json")?;
    let constants = read_json(dir, "constants.json")?;
    if run.is_none() && constants.is_none() {
        return Err(input(format!(
            "{} holds no run artifacts; expected run.json or constants.json (optionally {})",
            dir.display(),
            expected()
        )));
    }
    let mut out = format!("# Run report: {}\n\n", dir.display());
    if let Some(run) = &run {
        let _ = writeln!(out, "- command: {}", scalar(&run["command"]));
        let _ = writeln!(out, "- status: {}", scalar(&run["status"]));
        if let Some(v) = run["violations"].as_array() {
            for msg in v {
                let _ = writeln!(out, "- violation: {}", scalar(msg));
            }
        }
        out.push('\n');
    }
    if let Some(c) = &constants {
        let mut pairs = Vec::new();
        flatten("", c, &mut pairs);
        if !pairs.is_empty() {
            out.push_str("## Constants\n\n");
            let (h, r): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            table(&mut out, &h, &[r]);
        }
    }
    for (name, title) in CSV_TABLES {
        let path = dir.join(name);
        if !path.is_file() {
            continue;
        }
        let text = std::fs::read_to_string(&path)?;
        let mut lines = text.lines();
        let Some(header) = lines.next() else { continue };
        let header: Vec<String> = header.split(',').map(str::to_string).collect();
        let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
        let _ = writeln!(out, "## {title}\n");
        table(&mut out, &header, &rows);
    }
    for name in JSON_LISTS {
        let Some(v) = read_json(dir, name)? else { continue };
        let mut pairs = Vec::new();
        flatten("", &v, &mut pairs);
        let _ = writeln!(out, "## {name}\n");
        for (k, val) in pairs {
            if k.is_empty() {
                let _ = writeln!(out, "- {val}");
            } else {
                let _ = writeln!(out, "- {k}: {val}");
            }
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dir_lists_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let err = report(dir.path()).unwrap_err().to_string();
        assert!(err.contains("constants.json") && err.contains("trace.csv"), "{err}");
    }

    #[test]
    fn constants_give_one_row() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("constants.json"), r#"{"exponents": {"p_c": 2.0, "p_1": 1.5}}"#).unwrap();
        let md = report(dir.path()).unwrap();
        assert!(md.contains("| p_1 | p_c |\n|---|---|\n| 1.5 | 2.0 |\n"), "{md}");
    }
}
