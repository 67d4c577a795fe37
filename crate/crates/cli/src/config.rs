//! Flat key-value configuration files with explicit versioning. Keys are
//! validated against each command's schema; unknown keys are errors so typos
//! never pass silently.

use crate::CliError;
use fpphe_core::engine::{ProcessFilter, StopCondition};
use fpphe_core::lattice::Site;
use fpphe_core::randomness::OverrideTable;
use std::collections::HashSet;
use std::path::Path;

pub const CONFIG_VERSION: &str = "1";

/// Ordered key-value entries of a parsed file.
pub struct KvFile {
    entries: Vec<(String, String)>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = Vec::new();
        let mut saw_version = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = match line.split_once(char::is_whitespace) {
                Some((k, v)) => (k.trim(), v.trim()),
                None => (line, ""),
            };
            if !saw_version {
                if key != "version" {
                    return Err(CliError::Usage(format!(
                        "line {}: first entry must be `version {CONFIG_VERSION}`",
                        lineno + 1
                    )));
                }
                if value != CONFIG_VERSION {
                    return Err(CliError::Usage(format!(
                        "unsupported config version {value:?}"
                    )));
                }
                saw_version = true;
                continue;
            }
            entries.push((key.to_string(), value.to_string()));
        }
        if !saw_version {
            return Err(CliError::Usage("missing `version` entry".into()));
        }
        Ok(KvFile { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text)
    }

    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), CliError> {
        let allowed: HashSet<&str> = allowed.iter().copied().collect();
        for (key, _) in &self.entries {
            if !allowed.contains(key.as_str()) {
                return Err(CliError::Usage(format!("unknown config key {key:?}")));
            }
        }
        Ok(())
    }

    pub fn one(&self, key: &str) -> Result<Option<&str>, CliError> {
        let mut found = None;
        for (k, v) in &self.entries {
            if k == key {
                if found.is_some() {
                    return Err(CliError::Usage(format!("duplicate key {key:?}")));
                }
                found = Some(v.as_str());
            }
        }
        Ok(found)
    }

    pub fn required(&self, key: &str) -> Result<&str, CliError> {
        self.one(key)?
            .ok_or_else(|| CliError::Usage(format!("missing required key {key:?}")))
    }

    pub fn all(&self, key: &str) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .collect()
    }
}

pub fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Usage(format!("key {key:?}: cannot parse {value:?}: {e}")))
}

/// One `stop ...` clause; clauses from repeated lines are merged.
pub fn parse_stop_clause(stop: &mut StopCondition, value: &str) -> Result<(), CliError> {
    let mut parts = value.split_whitespace();
    match parts.next() {
        Some("quiescence") => stop.quiescence = true,
        Some("horizon") => {
            let t = parts
                .next()
                .ok_or_else(|| CliError::Usage("stop horizon requires a time".into()))?;
            stop.time_horizon = Some(parse_num("stop horizon", t)?);
        }
        Some("max-occupied") => {
            let n = parts
                .next()
                .ok_or_else(|| CliError::Usage("stop max-occupied requires a count".into()))?;
            stop.max_occupied = Some(parse_num("stop max-occupied", n)?);
        }
        Some("boundary") => {
            let f = match parts.next() {
                Some("fpp1") => ProcessFilter::Fpp1,
                Some("fpplambda") => ProcessFilter::FppLambda,
                Some("either") | None => ProcessFilter::Either,
                Some(other) => {
                    return Err(CliError::Usage(format!(
                        "stop boundary: unknown process {other:?}"
                    )))
                }
            };
            stop.first_boundary_hit_by = Some(f);
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown stop criterion {other:?}"
            )))
        }
    }
    if parts.next().is_some() {
        return Err(CliError::Usage(format!("trailing tokens in stop {value:?}")));
    }
    Ok(())
}

pub fn stop_clauses(stop: &StopCondition) -> Vec<String> {
    let mut out = Vec::new();
    if stop.quiescence {
        out.push("quiescence".to_string());
    }
    if let Some(t) = stop.time_horizon {
        out.push(format!("horizon {}", fpphe_core::snapshot::fmt_g17(t)));
    }
    if let Some(n) = stop.max_occupied {
        out.push(format!("max-occupied {n}"));
    }
    if let Some(f) = stop.first_boundary_hit_by {
        let name = match f {
            ProcessFilter::Fpp1 => "fpp1",
            ProcessFilter::FppLambda => "fpplambda",
            ProcessFilter::Either => "either",
        };
        out.push(format!("boundary {name}"));
    }
    out
}

fn empty_stop() -> StopCondition {
    StopCondition {
        time_horizon: None,
        max_occupied: None,
        first_boundary_hit_by: None,
        quiescence: false,
    }
}

/// Configuration of a single run.
#[derive(Debug, Clone)]
pub struct SimulateConfig {
    pub d: usize,
    pub half_side: i64,
    pub p: f64,
    pub lambda: f64,
    pub world_seed: u64,
    pub stop: StopCondition,
    pub forced_seeds: Vec<Site>,
    pub overrides: OverrideTable,
    pub render_bands: Option<u32>,
}

impl SimulateConfig {
    const KEYS: &'static [&'static str] = &[
        "d",
        "half_side",
        "p",
        "lambda",
        "world_seed",
        "stop",
        "forced_seed",
        "override",
        "overrides_file",
        "render_bands",
    ];

    pub fn from_kv(kv: &KvFile, base_dir: &Path) -> Result<Self, CliError> {
        kv.check_keys(Self::KEYS)?;
        let d: usize = parse_num("d", kv.required("d")?)?;
        let half_side: i64 = parse_num("half_side", kv.required("half_side")?)?;
        let p: f64 = parse_num("p", kv.required("p")?)?;
        let lambda: f64 = parse_num("lambda", kv.required("lambda")?)?;
        let world_seed: u64 = parse_num("world_seed", kv.required("world_seed")?)?;

        let mut stop = empty_stop();
        let clauses = kv.all("stop");
        if clauses.is_empty() {
            return Err(CliError::Usage("at least one stop criterion required".into()));
        }
        for clause in clauses {
            parse_stop_clause(&mut stop, clause)?;
        }

        let mut forced_seeds = Vec::new();
        for line in kv.all("forced_seed") {
            let coords: Result<Vec<i64>, _> = line
                .split_whitespace()
                .map(|t| parse_num::<i64>("forced_seed", t))
                .collect();
            let coords = coords?;
            if coords.len() != d {
                return Err(CliError::Usage(format!(
                    "forced_seed {line:?} has {} coordinates, expected {d}",
                    coords.len()
                )));
            }
            forced_seeds.push(Site(coords));
        }

        let mut override_text = String::new();
        for line in kv.all("override") {
            override_text.push_str(line);
            override_text.push('\n');
        }
        let mut overrides =
            OverrideTable::parse(&override_text).map_err(CliError::runtime)?;
        if let Some(file) = kv.one("overrides_file")? {
            if !override_text.is_empty() {
                return Err(CliError::Usage(
                    "use either inline overrides or overrides_file, not both".into(),
                ));
            }
            overrides =
                OverrideTable::load(&base_dir.join(file)).map_err(CliError::runtime)?;
        }

        let render_bands = match kv.one("render_bands")? {
            Some(v) => Some(parse_num("render_bands", v)?),
            None => None,
        };

        Ok(SimulateConfig {
            d,
            half_side,
            p,
            lambda,
            world_seed,
            stop,
            forced_seeds,
            overrides,
            render_bands,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let kv = KvFile::load(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_kv(&kv, base)
    }
}

/// Configuration of a (p, lambda) sweep.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub d: usize,
    pub half_side: i64,
    /// (original token, parsed value); tokens name the per-cell files.
    pub p_values: Vec<(String, f64)>,
    pub lambda_values: Vec<(String, f64)>,
    pub replicas: usize,
    pub master_seed: u64,
    pub stop: StopCondition,
}

impl SweepConfig {
    const KEYS: &'static [&'static str] = &[
        "d",
        "half_side",
        "p_values",
        "lambda_values",
        "replicas",
        "master_seed",
        "stop",
    ];

    pub fn from_kv(kv: &KvFile) -> Result<Self, CliError> {
        kv.check_keys(Self::KEYS)?;
        let parse_list = |key: &str, raw: &str| -> Result<Vec<(String, f64)>, CliError> {
            let mut out = Vec::new();
            for token in raw.split(',') {
                let token = token.trim();
                if token.is_empty() {
                    continue;
                }
                out.push((token.to_string(), parse_num::<f64>(key, token)?));
            }
            if out.is_empty() {
                return Err(CliError::Usage(format!("{key} must be non-empty")));
            }
            Ok(out)
        };
        let mut stop = empty_stop();
        let clauses = kv.all("stop");
        if clauses.is_empty() {
            return Err(CliError::Usage("at least one stop criterion required".into()));
        }
        for clause in clauses {
            parse_stop_clause(&mut stop, clause)?;
        }
        let replicas: usize = parse_num("replicas", kv.required("replicas")?)?;
        if replicas == 0 {
            return Err(CliError::Usage("replicas must be at least 1".into()));
        }
        Ok(SweepConfig {
            d: parse_num("d", kv.required("d")?)?,
            half_side: parse_num("half_side", kv.required("half_side")?)?,
            p_values: parse_list("p_values", kv.required("p_values")?)?,
            lambda_values: parse_list("lambda_values", kv.required("lambda_values")?)?,
            replicas,
            master_seed: parse_num("master_seed", kv.required("master_seed")?)?,
            stop,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::from_kv(&KvFile::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_keys_and_bad_version() {
        assert!(KvFile::parse("lambda 0.5").is_err());
        assert!(KvFile::parse("version 2\n").is_err());
        let kv = KvFile::parse("version 1\nlambdaa 0.5\n").unwrap();
        assert!(kv.check_keys(&["lambda"]).is_err());
    }

    #[test]
    fn parses_simulate_config() {
        let text = "version 1\nd 2\nhalf_side 10\np 0.3\nlambda 0.5\nworld_seed 7\n\
                    stop quiescence\nstop horizon 12.5\nforced_seed 1 0\n\
                    override default 1.0 2.0\n";
        let kv = KvFile::parse(text).unwrap();
        let cfg = SimulateConfig::from_kv(&kv, Path::new(".")).unwrap();
        assert_eq!(cfg.d, 2);
        assert_eq!(cfg.half_side, 10);
        assert!(cfg.stop.quiescence);
        assert_eq!(cfg.stop.time_horizon, Some(12.5));
        assert_eq!(cfg.forced_seeds, vec![Site(vec![1, 0])]);
        assert!(!cfg.overrides.is_empty());
    }

    #[test]
    fn parses_sweep_config() {
        let text = "version 1\nd 2\nhalf_side 100\np_values 0.05,0.1\n\
                    lambda_values 0.05,1.5\nreplicas 4\nmaster_seed 3\nstop quiescence\n";
        let cfg = SweepConfig::from_kv(&KvFile::parse(text).unwrap()).unwrap();
        assert_eq!(cfg.p_values.len(), 2);
        assert_eq!(cfg.p_values[0].0, "0.05");
        assert_eq!(cfg.lambda_values[1].1, 1.5);
    }
}
