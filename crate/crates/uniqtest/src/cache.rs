//! Calibration cache: one line per calibration,
//! `n=<n> level=<level> mc_reps=<reps> seed=<seed> kappa=<kappa>`.
//!
//! Floats are written in Rust's shortest round-trip form, so a cached
//! threshold is bit-identical to a fresh calibration.

use std::path::Path;

use uniqtest_core::multiscale::{dw_calibrate, Calibration};

use crate::CliError;

pub fn parse_line(line: &str) -> Option<Calibration> {
    let mut n = None;
    let mut level = None;
    let mut mc_reps = None;
    let mut seed = None;
    let mut kappa = None;
    for field in line.split_whitespace() {
        let (key, value) = field.split_once('=')?;
        match key {
            "n" => n = value.parse().ok(),
            "level" => level = value.parse().ok(),
            "mc_reps" => mc_reps = value.parse().ok(),
            "seed" => seed = value.parse().ok(),
            "kappa" => kappa = value.parse().ok(),
            _ => return None,
        }
    }
    Some(Calibration {
        n: n?,
        level: level?,
        kappa: kappa?,
        mc_reps: mc_reps?,
        seed: seed?,
    })
}

pub fn format_line(c: &Calibration) -> String {
    format!(
        "n={} level={} mc_reps={} seed={} kappa={}",
        c.n, c.level, c.mc_reps, c.seed, c.kappa
    )
}

fn same_key(a: &Calibration, n: usize, level: f64, mc_reps: usize, seed: u64) -> bool {
    a.n == n && a.level == level && a.mc_reps == mc_reps && a.seed == seed
}

/// All well-formed entries of the cache at `path`; a missing file is empty.
pub fn read_entries(path: &Path) -> Result<Vec<Calibration>, CliError> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .filter_map(parse_line)
            .collect()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(CliError::io(path, e)),
    }
}

pub fn lookup(path: &Path, n: usize, level: f64, mc_reps: usize, seed: u64) -> Result<Option<Calibration>, CliError> {
    Ok(read_entries(path)?
        .into_iter()
        .find(|c| same_key(c, n, level, mc_reps, seed)))
}

/// Adds `cal` to the cache, replacing an entry with the same key.
pub fn store(path: &Path, cal: &Calibration) -> Result<(), CliError> {
    let mut entries = read_entries(path)?;
    entries.retain(|c| !same_key(c, cal.n, cal.level, cal.mc_reps, cal.seed));
    entries.push(*cal);
    let mut text = String::from("# multiscale detector calibrations\n");
    for c in &entries {
        text.push_str(&format_line(c));
        text.push('\n');
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Cached calibration for the key, computing and recording it on a miss.
/// Without a cache path this is a plain calibration.
pub fn get_or_calibrate(
    path: Option<&Path>,
    n: usize,
    level: f64,
    mc_reps: usize,
    seed: u64,
) -> Result<Calibration, CliError> {
    if let Some(p) = path {
        if let Some(c) = lookup(p, n, level, mc_reps, seed)? {
            return Ok(c);
        }
    }
    let cal = dw_calibrate(n, level, mc_reps, seed)?;
    if let Some(p) = path {
        store(p, &cal)?;
    }
    Ok(cal)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cal.txt");
        let fresh = get_or_calibrate(Some(&path), 200, 0.9, 100, 3).unwrap();
        let cached = lookup(&path, 200, 0.9, 100, 3).unwrap().unwrap();
        assert_eq!(fresh, cached);
        assert_eq!(fresh.kappa.to_bits(), cached.kappa.to_bits());
        assert!(lookup(&path, 200, 0.95, 100, 3).unwrap().is_none());
    }

    #[test]
    fn store_replaces_matching_entry() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cal.txt");
        let mut c = Calibration {
            n: 50,
            level: 0.9,
            kappa: 1.0,
            mc_reps: 10,
            seed: 1,
        };
        store(&path, &c).unwrap();
        c.kappa = 2.0;
        store(&path, &c).unwrap();
        c.n = 60;
        store(&path, &c).unwrap();
        let all = read_entries(&path).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].kappa, 2.0);
    }

    #[test]
    fn malformed_lines_are_ignored() {
        assert!(parse_line("n=5 level=0.9").is_none());
        assert!(parse_line("n=5 level=0.9 mc_reps=3 seed=1 kappa=0.5 extra=1").is_none());
        assert!(parse_line("n=5 level=0.9 mc_reps=3 seed=1 kappa=0.5").is_some());
    }
}
