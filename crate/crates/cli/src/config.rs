//! Run configuration: a flat INI file of `key = value` lines in named sections.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

/// Sections and keys a config file may contain.
const SCHEMA: &[(&str, &[&str])] = &[
    ("data", &["sales", "panel", "growth", "cleaned", "edges", "partition", "truth", "predicted"]),
    ("panel", &["min_years", "horizon"]),
    ("clean", &["modes_to_remove", "min_overlap", "benchmark", "surrogate_sets", "surrogate_source"]),
    ("netcorr", &["lags", "k_max"]),
    ("benchmark", &["n_draws", "models"]),
    ("plan", &["densities", "spectra_samples"]),
    ("solver", &["beta", "max_iter", "tol"]),
    (
        "synth",
        &[
            "kind", "nodes", "sectors", "density_in", "density_out", "t", "eps", "sigma_common", "missing", "p_miss",
            "sigma", "mode", "period", "phase",
        ],
    ),
    ("output", &["directory", "timing"]),
];

const GLOBAL_KEYS: &[&str] = &["seed"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Section {
    name: String,
    entries: BTreeMap<String, String>,
}

impl Section {
    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Config(format!("[{}] {key} = {v:?}: {e}", self.name)))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| CliError::Config(format!("[{}] is missing key `{key}`", self.name)))
    }

    /// Comma-separated list; `None` when the key is absent.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.raw(key) else { return Ok(None) };
        v.split(',')
            .map(|item| {
                let item = item.trim();
                if item.is_empty() {
                    return Err(CliError::Config(format!("[{}] {key}: empty list item", self.name)));
                }
                item.parse::<T>()
                    .map_err(|e| CliError::Config(format!("[{}] {key}: {item:?}: {e}", self.name)))
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Directory relative paths are resolved against.
    pub base: PathBuf,
    pub seed: u64,
    sections: BTreeMap<String, Section>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Config::parse(&text, base)
    }

    pub fn parse(text: &str, base: PathBuf) -> Result<Config, CliError> {
        let syntax = |line: usize, msg: String| CliError::Config(format!("line {line}: {msg}"));
        let mut globals = BTreeMap::new();
        let mut sections: BTreeMap<String, Section> = BTreeMap::new();
        let mut current: Option<String> = None;

        for (k, line) in text.split('\n').enumerate() {
            let lineno = k + 1;
            let line = line.strip_suffix('\r').unwrap_or(line).trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| syntax(lineno, "unterminated section header".into()))?
                    .trim();
                if !SCHEMA.iter().any(|(s, _)| *s == name) {
                    return Err(syntax(lineno, format!("unknown section [{name}]")));
                }
                if sections.contains_key(name) {
                    return Err(syntax(lineno, format!("section [{name}] appears twice")));
                }
                sections.insert(
                    name.to_string(),
                    Section {
                        name: name.to_string(),
                        entries: BTreeMap::new(),
                    },
                );
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax(lineno, format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(syntax(lineno, "empty key".into()));
            }
            let (allowed, entries, where_) = match &current {
                None => (GLOBAL_KEYS, &mut globals, "top level".to_string()),
                Some(name) => {
                    let keys = SCHEMA.iter().find(|(s, _)| s == name).map(|(_, k)| *k).unwrap_or(&[]);
                    (keys, &mut sections.get_mut(name).expect("section registered").entries, format!("[{name}]"))
                }
            };
            if !allowed.contains(&key) {
                return Err(syntax(lineno, format!("unknown key `{key}` in {where_}")));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(syntax(lineno, format!("key `{key}` repeated in {where_}")));
            }
        }

        let seed = globals
            .get("seed")
            .ok_or_else(|| CliError::Config("missing top-level `seed`".into()))?;
        let seed = seed
            .parse::<u64>()
            .map_err(|e| CliError::Config(format!("seed = {seed:?}: {e}")))?;
        Ok(Config { base, seed, sections })
    }

    pub fn section(&self, name: &str) -> Result<&Section, CliError> {
        self.sections
            .get(name)
            .ok_or_else(|| CliError::Config(format!("missing section [{name}]")))
    }

    /// The named section, or an empty one so that defaults apply.
    pub fn section_or_default(&self, name: &str) -> Section {
        self.sections.get(name).cloned().unwrap_or_else(|| Section {
            name: name.to_string(),
            entries: BTreeMap::new(),
        })
    }

    /// Resolves `[section] key` as a path that must exist.
    pub fn existing_path(&self, section: &str, key: &str) -> Result<Option<PathBuf>, CliError> {
        let Some(raw) = self.sections.get(section).and_then(|s| s.raw(key)) else {
            return Ok(None);
        };
        let path = self.base.join(raw);
        if !path.exists() {
            return Err(CliError::Config(format!("[{section}] {key}: {} does not exist", path.display())));
        }
        Ok(Some(path))
    }

    pub fn required_path(&self, section: &str, key: &str) -> Result<PathBuf, CliError> {
        self.section(section)?;
        self.existing_path(section, key)?
            .ok_or_else(|| CliError::Config(format!("[{section}] is missing key `{key}`")))
    }

    pub fn output_dir(&self) -> Result<PathBuf, CliError> {
        let dir: String = self.section("output")?.require("directory")?;
        Ok(self.base.join(dir))
    }

    pub fn timing(&self) -> Result<bool, CliError> {
        self.section_or_default("output").get_or("timing", false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config, CliError> {
        Config::parse(text, PathBuf::from("/base"))
    }

    #[test]
    fn parses_sections_and_values() {
        let cfg = parse(
            "# run\nseed = 7\n\n[solver]\nbeta = 2.5\r\n ; note\nmax_iter=10\n[benchmark]\nmodels = er , sbm\n[output]\ndirectory = out\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        let solver = cfg.section("solver").unwrap();
        assert_eq!(solver.get::<f64>("beta").unwrap(), Some(2.5));
        assert_eq!(solver.get_or("max_iter", 0usize).unwrap(), 10);
        assert_eq!(solver.get::<f64>("tol").unwrap(), None);
        let models: Vec<String> = cfg.section("benchmark").unwrap().list("models").unwrap().unwrap();
        assert_eq!(models, ["er", "sbm"]);
        assert_eq!(cfg.output_dir().unwrap(), PathBuf::from("/base/out"));
        assert!(!cfg.timing().unwrap());
    }

    #[test]
    fn values_keep_inner_text() {
        let cfg = parse("seed=1\n[data]\nsales = my data/a=b.csv   \n").unwrap();
        assert_eq!(cfg.section("data").unwrap().raw("sales"), Some("my data/a=b.csv"));
    }

    #[test]
    fn rejects_malformed_files() {
        let bad = [
            "[solver]\nbeta=1\n",
            "seed = x\n",
            "seed=1\n[solver\n",
            "seed=1\n[nope]\n",
            "seed=1\n[solver]\nbta=1\n",
            "seed=1\n[solver]\nbeta=1\nbeta=2\n",
            "seed=1\n[solver]\n[solver]\n",
            "seed=1\nbeta=1\n",
            "seed=1\n[solver]\njust words\n",
        ];
        for text in bad {
            assert!(matches!(parse(text), Err(CliError::Config(_))), "{text:?}");
        }
    }

    #[test]
    fn missing_section_is_named() {
        let cfg = parse("seed=1\n").unwrap();
        let err = cfg.section("plan").unwrap_err().to_string();
        assert!(err.contains("[plan]"), "{err}");
    }

    #[test]
    fn bad_typed_value_names_key() {
        let cfg = parse("seed=1\n[solver]\nbeta=fast\n").unwrap();
        let err = cfg.section("solver").unwrap().get::<f64>("beta").unwrap_err().to_string();
        assert!(err.contains("beta"), "{err}");
        let cfg = parse("seed=1\n[netcorr]\nlags=0,,1\n").unwrap();
        assert!(cfg.section("netcorr").unwrap().list::<i64>("lags").is_err());
    }
}
