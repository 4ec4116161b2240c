//! `key = value` configuration files.

use thiserror::Error;

use crate::reuse::ReuseOptions;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value for `{key}`: {value}")]
    BadValue { line: usize, key: String, value: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Tile sizes tried per blocked dimension; defaults to powers of two in [32, 256].
    pub blocks: Vec<u64>,
    pub topk: usize,
    pub max_mappings: usize,
    pub max_options_per_access: usize,
    pub max_candidates: usize,
    pub tolerance: f64,
    pub reserved_l1_fraction: f64,
    pub clock_ghz: Option<f64>,
    pub dtype_bytes: u64,
    pub no_spatial_reuse: bool,
    pub no_temporal_reuse: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            blocks: vec![32, 64, 128, 256],
            topk: 5,
            max_mappings: 512,
            max_options_per_access: 64,
            max_candidates: 100_000,
            tolerance: 0.20,
            reserved_l1_fraction: 0.10,
            clock_ghz: None,
            dtype_bytes: 2,
            no_spatial_reuse: false,
            no_temporal_reuse: false,
        }
    }
}

impl Config {
    pub fn reuse_options(&self) -> ReuseOptions {
        ReuseOptions {
            no_spatial_reuse: self.no_spatial_reuse,
            no_temporal_reuse: self.no_temporal_reuse,
            max_options_per_access: self.max_options_per_access,
            max_candidates: self.max_candidates,
            reserved_l1_fraction: self.reserved_l1_fraction,
        }
    }

    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut c = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.split('#').next().unwrap_or("").trim();
            if s.is_empty() {
                continue;
            }
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line, msg: "expected `key = value`".into() })?;
            let (k, v) = (k.trim(), v.trim());
            let bad = || ConfigError::BadValue { line, key: k.into(), value: v.into() };
            fn num<T: std::str::FromStr>(v: &str, bad: impl Fn() -> ConfigError) -> Result<T, ConfigError> {
                v.parse().map_err(|_| bad())
            }
            let flag = |v: &str| match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(bad()),
            };
            match k {
                "blocks" | "block_sizes" => {
                    let list: Vec<u64> = v
                        .trim_matches(|ch| ch == '[' || ch == ']')
                        .split(',')
                        .map(|x| x.trim().parse::<u64>().map_err(|_| bad()))
                        .collect::<Result<_, _>>()?;
                    if list.is_empty() || list.contains(&0) {
                        return Err(bad());
                    }
                    c.blocks = list;
                }
                "topk" => c.topk = num(v, bad)?,
                "max_mappings" => c.max_mappings = num(v, bad)?,
                "max_options_per_access" => c.max_options_per_access = num(v, bad)?,
                "max_candidates" => c.max_candidates = num(v, bad)?,
                "tolerance" => c.tolerance = num(v, bad)?,
                "reserved_l1_fraction" => {
                    let f: f64 = num(v, bad)?;
                    if !(0.0..1.0).contains(&f) {
                        return Err(bad());
                    }
                    c.reserved_l1_fraction = f;
                }
                "clock_ghz" => c.clock_ghz = Some(num(v, bad)?),
                "dtype_bytes" => c.dtype_bytes = num(v, bad)?,
                "no_spatial_reuse" => c.no_spatial_reuse = flag(v)?,
                "no_temporal_reuse" => c.no_temporal_reuse = flag(v)?,
                _ => return Err(ConfigError::UnknownKey { line, key: k.into() }),
            }
        }
        if c.topk == 0 {
            return Err(ConfigError::BadValue { line: 0, key: "topk".into(), value: "0".into() });
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects() {
        let c = Config::parse("# tuning\nblocks = [64, 128]\ntopk = 3\nno_spatial_reuse = true\n").unwrap();
        assert_eq!(c.blocks, vec![64, 128]);
        assert_eq!(c.topk, 3);
        assert!(c.no_spatial_reuse);
        assert_eq!(c.reserved_l1_fraction, 0.10);
        assert!(matches!(Config::parse("wat = 1"), Err(ConfigError::UnknownKey { line: 1, .. })));
        assert!(matches!(Config::parse("\ntopk = x"), Err(ConfigError::BadValue { line: 2, .. })));
        assert!(matches!(Config::parse("topk"), Err(ConfigError::Syntax { .. })));
    }
}
