//! Report files. Every file records the invocation that produced it; JSON
//! reports also carry a generation time under the single key
//! `generated_unix`, the only part that differs between identical runs.

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Invocation {
    pub args: Vec<String>,
    pub seed: u64,
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    pub b: Option<usize>,
}

impl Invocation {
    pub fn command_line(&self) -> String {
        self.args.join(" ")
    }
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    invocation: &'a Invocation,
    generated_unix: u64,
    result: &'a T,
}

pub fn to_json<T: Serialize>(inv: &Invocation, result: &T) -> Result<String, CliError> {
    let generated_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let env = Envelope {
        invocation: inv,
        generated_unix,
        result,
    };
    serde_json::to_string_pretty(&env)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::Usage(format!("cannot serialize report: {e}")))
}

pub fn write_json<T: Serialize>(path: &Path, inv: &Invocation, result: &T) -> Result<(), CliError> {
    let text = to_json(inv, result)?;
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// CSV with `#` provenance lines ahead of the header row.
pub fn write_csv(path: &Path, inv: &Invocation, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    write_table(path, inv, header, rows, false)
}

/// As [`write_csv`], with the column names in a `#` line so the file reads
/// back as a dataset.
pub fn write_dataset(path: &Path, inv: &Invocation, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    write_table(path, inv, header, rows, true)
}

fn write_table(
    path: &Path,
    inv: &Invocation,
    header: &[&str],
    rows: &[Vec<String>],
    header_as_comment: bool,
) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::io(path, e);
    let mut buf = Vec::new();
    writeln!(buf, "# invocation: {}", inv.command_line()).map_err(io)?;
    writeln!(buf, "# seed: {}", inv.seed).map_err(io)?;
    if let Some(b) = inv.b {
        writeln!(buf, "# B: {b}").map_err(io)?;
    }
    if header_as_comment {
        writeln!(buf, "# columns: {}", header.join(",")).map_err(io)?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let csv_err = |e: csv::Error| CliError::Usage(format!("{}: {e}", path.display()));
        if header_as_comment {
            w.flush().map_err(io)?;
        } else {
            w.write_record(header).map_err(csv_err)?;
        }
        for r in rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush().map_err(io)?;
    }
    std::fs::write(path, buf).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv() -> Invocation {
        Invocation {
            args: vec!["uniqtest".into(), "test".into()],
            seed: 4,
            b: Some(100),
        }
    }

    #[test]
    fn json_differs_only_in_timestamp() {
        let a = to_json(&inv(), &[1.5, 2.0]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["invocation"]["B"], 100);
        assert_eq!(v["result"][0], 1.5);
        let strip = |s: &str| s.lines().filter(|l| !l.contains("generated_unix")).collect::<Vec<_>>().join("\n");
        assert_eq!(strip(&a), strip(&to_json(&inv(), &[1.5, 2.0]).unwrap()));
    }

    #[test]
    fn csv_has_provenance_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_csv(&path, &inv(), &["a", "b"], &[vec!["1".into(), "2".into()]]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "# invocation: uniqtest test\n# seed: 4\n# B: 100\na,b\n1,2\n");
    }
}
