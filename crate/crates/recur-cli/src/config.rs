//! Resolved run configuration: defaults, then the config file's global and
//! per-command sections, then command-line flags, each layer overriding the
//! last.  Every output file embeds the resolved config as `# key = value`
//! comment lines; stripping the comment prefix yields a config file that
//! reproduces the run byte for byte.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use recur::recurrence::RateFunction;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Subcommand name; doubles as the config-file section.
    pub command: &'static str,
    pub system: String,
    pub psi: Option<RateFunction>,
    /// estimate: near-return times, ascending.
    pub ns: Vec<usize>,
    /// pair: largest return time of the pair grid.
    pub n_max: usize,
    /// zn and dichotomy: inclusive time window.
    pub window: (usize, usize),
    /// zn: threshold in the anti-concentration bound.
    pub lambda: f64,
    /// cylinders: deepest level reported.
    pub depth: usize,
    pub prune_len: f64,
    pub samples: usize,
    pub seed: u64,
    pub workers: usize,
    pub max_bits: u32,
    pub guard: Option<usize>,
    pub resample_cap: u32,
    pub ambiguity_cap: Option<f64>,
    pub format: Format,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn new(command: &'static str) -> RunConfig {
        RunConfig {
            command,
            system: String::new(),
            psi: None,
            ns: Vec::new(),
            n_max: 20,
            window: (100, 200),
            lambda: 0.5,
            depth: 8,
            prune_len: 1e-7,
            samples: 10_000,
            seed: 1,
            workers: 0,
            max_bits: 4096,
            guard: None,
            resample_cap: 16,
            ambiguity_cap: Some(1e-3),
            format: Format::Csv,
            out: PathBuf::from("runs"),
        }
    }

    /// Applies one `key = value` pair from a config file or embedded header.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            // recorded for provenance, accepted from any version
            "version" => Ok(()),
            "system" => {
                self.system = value.to_string();
                Ok(())
            }
            "psi" => {
                self.psi = Some(RateFunction::parse(value)?);
                Ok(())
            }
            "n" => {
                self.ns = parse_usize_list(value)?;
                Ok(())
            }
            "n_max" => parse_into(value, &mut self.n_max),
            "window" => {
                self.window = parse_window(value)?;
                Ok(())
            }
            "lambda" => parse_into(value, &mut self.lambda),
            "depth" => parse_into(value, &mut self.depth),
            "prune_len" => parse_into(value, &mut self.prune_len),
            "samples" => parse_into(value, &mut self.samples),
            "seed" => parse_into(value, &mut self.seed),
            "workers" => parse_into(value, &mut self.workers),
            "max_bits" => parse_into(value, &mut self.max_bits),
            "guard" => {
                if value == "default" {
                    self.guard = None;
                    Ok(())
                } else {
                    let mut g = 0usize;
                    parse_into(value, &mut g)?;
                    self.guard = Some(g);
                    Ok(())
                }
            }
            "resample_cap" => parse_into(value, &mut self.resample_cap),
            "ambiguity_cap" => {
                if value == "none" {
                    self.ambiguity_cap = None;
                    Ok(())
                } else {
                    let mut c = 0f64;
                    parse_into(value, &mut c)?;
                    self.ambiguity_cap = Some(c);
                    Ok(())
                }
            }
            "format" => {
                self.format = match value {
                    "csv" => Format::Csv,
                    "json" => Format::Json,
                    other => return Err(format!("format must be csv or json, got '{other}'")),
                };
                Ok(())
            }
            other => Err(format!("unknown key '{other}'")),
        }
    }

    /// Reads the file and applies the top (unsectioned) keys plus the
    /// section matching this command; other sections are ignored so one
    /// file can describe a whole experiment.
    pub fn apply_file(&mut self, text: &str) -> Result<(), String> {
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", idx + 1))?;
            if section.is_empty() || section == self.command {
                self.set(key.trim(), value.trim())
                    .map_err(|e| format!("line {}: {e}", idx + 1))?;
            }
        }
        Ok(())
    }

    /// The `(key, value)` pairs embedded in output headers, in a fixed
    /// order.  Workers and the output directory are deliberately absent:
    /// neither may influence file content.
    pub fn header_pairs(&self) -> Vec<(&'static str, String)> {
        let mut pairs: Vec<(&'static str, String)> = vec![("version", VERSION.to_string())];
        pairs.push(("system", self.system.clone()));
        if let Some(psi) = &self.psi {
            pairs.push(("psi", psi.to_string()));
        }
        match self.command {
            "estimate" => pairs.push(("n", join_usize_list(&self.ns))),
            "pair" => pairs.push(("n_max", self.n_max.to_string())),
            "zn" => {
                pairs.push(("window", format!("{}:{}", self.window.0, self.window.1)));
                pairs.push(("lambda", self.lambda.to_string()));
            }
            "dichotomy" => {
                pairs.push(("window", format!("{}:{}", self.window.0, self.window.1)));
            }
            "cylinders" => {
                pairs.push(("depth", self.depth.to_string()));
                pairs.push(("prune_len", self.prune_len.to_string()));
            }
            _ => {}
        }
        if uses_sampling(self.command) {
            pairs.push(("samples", self.samples.to_string()));
        }
        if self.command != "cylinders" {
            pairs.push(("seed", self.seed.to_string()));
        }
        if uses_sampling(self.command) {
            pairs.push(("max_bits", self.max_bits.to_string()));
            pairs.push((
                "guard",
                self.guard.map_or_else(|| "default".to_string(), |g| g.to_string()),
            ));
            pairs.push(("resample_cap", self.resample_cap.to_string()));
            pairs.push((
                "ambiguity_cap",
                self.ambiguity_cap.map_or_else(|| "none".to_string(), |c| c.to_string()),
            ));
        }
        pairs.push(("format", self.format.extension().to_string()));
        pairs
    }

    /// The embedded-header comment block, starting with the section line.
    pub fn header_block(&self) -> String {
        let mut out = format!("# [{}]\n", self.command);
        for (k, v) in self.header_pairs() {
            writeln!(out, "# {k} = {v}").expect("string write");
        }
        out
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.system.is_empty() {
            return Err("system is required".into());
        }
        if recur::parse_system(&self.system).is_none() {
            return Err(format!(
                "unknown system '{}' (expected beta:<value>, beta:phi, gauss or cantor3)",
                self.system
            ));
        }
        let needs_psi = matches!(self.command, "estimate" | "pair" | "zn" | "dichotomy");
        if needs_psi && self.psi.is_none() {
            return Err("psi is required (e.g. --psi power:c=0.01,a=0)".into());
        }
        if uses_sampling(self.command) && self.samples == 0 {
            return Err("samples must be positive".into());
        }
        match self.command {
            "estimate" => {
                if self.ns.is_empty() {
                    return Err("n is required (e.g. --n 5,10,20)".into());
                }
                let strictly_up = self.ns.windows(2).all(|w| w[0] < w[1]);
                if self.ns[0] == 0 || !strictly_up {
                    return Err("n must be a strictly increasing list of positive times".into());
                }
            }
            "pair" => {
                if self.n_max < 2 || self.n_max > 64 {
                    return Err("n_max must lie in 2..=64".into());
                }
            }
            "zn" | "dichotomy" => {
                let (a, b) = self.window;
                if a == 0 || a > b {
                    return Err("window must satisfy 0 < start <= end".into());
                }
                if self.command == "dichotomy" && !doubling_span(a, b) {
                    return Err("dichotomy window end must be start * 2^k, k >= 1".into());
                }
                if self.command == "zn" && !(0.0 < self.lambda && self.lambda < 1.0) {
                    return Err("lambda must lie strictly between 0 and 1".into());
                }
            }
            "cylinders" => {
                if self.depth == 0 {
                    return Err("depth must be positive".into());
                }
            }
            _ => {}
        }
        Ok(())
    }
}

pub fn uses_sampling(command: &str) -> bool {
    matches!(command, "estimate" | "pair" | "zn" | "dichotomy")
}

/// Number of doubling windows covering [a, b], when b = a * 2^k exactly.
pub fn doubling_windows(a: usize, b: usize) -> usize {
    (b / a).trailing_zeros() as usize
}

fn doubling_span(a: usize, b: usize) -> bool {
    b % a == 0 && (b / a).is_power_of_two() && b / a >= 2
}

fn parse_into<T: std::str::FromStr>(value: &str, slot: &mut T) -> Result<(), String>
where
    T::Err: std::fmt::Display,
{
    *slot = value.parse().map_err(|e| format!("bad value '{value}': {e}"))?;
    Ok(())
}

fn parse_usize_list(value: &str) -> Result<Vec<usize>, String> {
    let mut seen = BTreeSet::new();
    for part in value.split(',') {
        let n: usize =
            part.trim().parse().map_err(|e| format!("bad count '{}': {e}", part.trim()))?;
        seen.insert(n);
    }
    Ok(seen.into_iter().collect())
}

fn join_usize_list(ns: &[usize]) -> String {
    ns.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
}

pub fn parse_window(value: &str) -> Result<(usize, usize), String> {
    let (a, b) = value.split_once(':').ok_or_else(|| format!("window '{value}' needs start:end"))?;
    let a = a.trim().parse().map_err(|e| format!("bad window start: {e}"))?;
    let b = b.trim().parse().map_err(|e| format!("bad window end: {e}"))?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trips_through_the_file_parser() {
        let mut cfg = RunConfig::new("estimate");
        cfg.system = "beta:2".into();
        cfg.psi = Some(RateFunction::parse("power:c=0.01,a=0").unwrap());
        cfg.ns = vec![5, 10, 20];
        cfg.samples = 777;
        cfg.seed = 9;
        cfg.guard = Some(40);
        cfg.ambiguity_cap = None;

        let block = cfg.header_block();
        let stripped: String = block
            .lines()
            .map(|l| l.trim_start_matches("# ").trim_start_matches('#'))
            .collect::<Vec<_>>()
            .join("\n");

        let mut back = RunConfig::new("estimate");
        back.apply_file(&stripped).unwrap();
        assert_eq!(back.header_block(), block);
        assert_eq!(back.ns, vec![5, 10, 20]);
        assert_eq!(back.guard, Some(40));
        assert_eq!(back.ambiguity_cap, None);
        back.validate().unwrap();
    }

    #[test]
    fn file_sections_are_scoped_to_the_command() {
        let text = "seed = 3\n[estimate]\nn = 4,8\n[pair]\nn_max = 12\n";
        let mut est = RunConfig::new("estimate");
        est.apply_file(text).unwrap();
        assert_eq!(est.seed, 3);
        assert_eq!(est.ns, vec![4, 8]);
        assert_eq!(est.n_max, 20);

        let mut pair = RunConfig::new("pair");
        pair.apply_file(text).unwrap();
        assert_eq!(pair.seed, 3);
        assert_eq!(pair.n_max, 12);
    }

    #[test]
    fn bad_keys_and_windows_are_rejected() {
        let mut cfg = RunConfig::new("zn");
        assert!(cfg.set("lambada", "0.5").is_err());
        assert!(cfg.set("window", "200").is_err());
        cfg.set("window", "100:90").unwrap();
        cfg.system = "gauss".into();
        cfg.psi = Some(RateFunction::parse("const:c=0.01").unwrap());
        assert!(cfg.validate().is_err());

        let mut d = RunConfig::new("dichotomy");
        d.system = "beta:2".into();
        d.psi = Some(RateFunction::parse("power:c=0.1,a=1").unwrap());
        d.set("window", "100:300").unwrap();
        assert!(d.validate().is_err());
        d.set("window", "100:400").unwrap();
        d.validate().unwrap();
        assert_eq!(doubling_windows(100, 400), 2);
    }
}
