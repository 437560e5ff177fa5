//! Run configuration: defaults, flat key-value config file, environment
//! override.
//!
//! Precedence, weakest first: built-in defaults, config file, command-line
//! flags. The `VACOAL_SEED` environment variable overrides the master seed
//! unconditionally, so a whole experiment can be re-keyed without touching
//! its manifest.

use std::path::Path;

use vacoal::error::Error;
use vacoal::search::SearchMode;
use vacoal::Result;

pub const SEED_ENV: &str = "VACOAL_SEED";

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Hypervector length in bits; must split into `blocks` byte-aligned
    /// segments.
    pub l: usize,
    pub blocks: usize,
    /// Depth exponent m; each block holds 2^m cells.
    pub depth_exp: u32,
    pub fs: usize,
    pub max_depth: u32,
    pub cr2_halt: f64,
    pub mode: SearchMode,
    pub rr: f64,
    pub master_seed: u64,
    pub top_k: usize,
    pub concept_name: String,
    pub concept_members: Vec<String>,
    pub concept_role: String,
    pub era_field: String,
    pub window_start: i64,
    pub window_end: i64,
    pub window_width: i64,
    pub pre_end: i64,
    pub post_start: i64,
    /// Set when `VACOAL_SEED` was present; beats every other seed source.
    pub seed_env_override: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            l: 16_384,
            blocks: 128,
            depth_exp: 16,
            fs: 1000,
            max_depth: 57,
            cr2_halt: 0.100,
            mode: SearchMode::DontCare,
            rr: 0.0,
            master_seed: 42,
            top_k: 20,
            concept_name: "calculus".to_string(),
            concept_members: vec!["calculus".to_string()],
            concept_role: "FIELD".to_string(),
            era_field: "ERA".to_string(),
            window_start: 1000,
            window_end: 1600,
            window_width: 50,
            pre_end: 1646,
            post_start: 1716,
            seed_env_override: None,
        }
    }
}

pub fn parse_mode(s: &str) -> Result<SearchMode> {
    match s {
        "rescue" => Ok(SearchMode::Rescue),
        "dont_care" | "dont-care" => Ok(SearchMode::DontCare),
        other => Err(Error::Config(format!(
            "unknown mode `{other}` (expected rescue or dont_care)"
        ))),
    }
}

impl RunConfig {
    /// Defaults, overlaid with the config file when given, then the seed
    /// environment override.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = path {
            cfg.apply_file(path)?;
        }
        if let Ok(seed) = std::env::var(SEED_ENV) {
            let seed: u64 = seed
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}=`{seed}` is not a u64")))?;
            cfg.master_seed = seed;
            cfg.seed_env_override = Some(seed);
        }
        Ok(cfg)
    }

    fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected `key = value`, got `{line}`",
                    path.display(),
                    idx + 1
                ))
            })?;
            self.apply_kv(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), idx + 1)))?;
        }
        Ok(())
    }

    fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
        }
        match key {
            "l" => self.l = num(key, value)?,
            "blocks" => self.blocks = num(key, value)?,
            "depth_exp" => self.depth_exp = num(key, value)?,
            "fs" => self.fs = num(key, value)?,
            "max_depth" => self.max_depth = num(key, value)?,
            "cr2_halt" => self.cr2_halt = num(key, value)?,
            "mode" => self.mode = parse_mode(value)?,
            "rr" => self.rr = num(key, value)?,
            "seed" => self.master_seed = num(key, value)?,
            "top_k" => self.top_k = num(key, value)?,
            "concept" => self.concept_name = value.to_string(),
            "concept_members" => {
                self.concept_members = split_list(value);
            }
            "concept_role" => self.concept_role = value.to_string(),
            "era_field" => self.era_field = value.to_string(),
            "window_start" => self.window_start = num(key, value)?,
            "window_end" => self.window_end = num(key, value)?,
            "window_width" => self.window_width = num(key, value)?,
            "pre_end" => self.pre_end = num(key, value)?,
            "post_start" => self.post_start = num(key, value)?,
            other => {
                return Err(Error::Config(format!("unknown config key `{other}`")));
            }
        }
        Ok(())
    }

    /// Geometry checks shared by every command that builds a memory.
    pub fn validate_geometry(&self) -> Result<()> {
        if self.l == 0 || self.blocks == 0 || !self.l.is_multiple_of(self.blocks) {
            return Err(Error::Config(format!(
                "l = {} does not split into {} blocks",
                self.l, self.blocks
            )));
        }
        let q = self.l / self.blocks;
        if !q.is_multiple_of(8) {
            return Err(Error::Config(format!(
                "segment width q = {q} bits is not a multiple of 8"
            )));
        }
        if !(0.0..=1.0).contains(&self.rr) {
            return Err(Error::Config(format!("rr = {} out of [0, 1]", self.rr)));
        }
        Ok(())
    }

    /// The master seed after applying the full precedence chain: the
    /// environment override beats an explicit flag, which beats the config
    /// file and defaults.
    pub fn effective_seed(&self, flag: Option<u64>) -> u64 {
        self.seed_env_override.or(flag).unwrap_or(self.master_seed)
    }

    /// Era windows `[start, start+width), ...` covering
    /// `[window_start, window_end)`.
    pub fn windows(&self) -> Result<Vec<(i64, i64)>> {
        if self.window_width <= 0 || self.window_end <= self.window_start {
            return Err(Error::Config(format!(
                "bad window range {}..{} width {}",
                self.window_start, self.window_end, self.window_width
            )));
        }
        let mut out = Vec::new();
        let mut start = self.window_start;
        while start < self.window_end {
            out.push((start, (start + self.window_width).min(self.window_end)));
            start += self.window_width;
        }
        Ok(out)
    }
}

pub fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}
