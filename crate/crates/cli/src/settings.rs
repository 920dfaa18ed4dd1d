//! Key=value configuration files and flag/file/default resolution.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crackscat::config::PhysicsConfig;
use crackscat::Error;

/// Parsed `key = value` lines; `#` starts a comment.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "config line {}: expected key=value, got {raw:?}",
                    n + 1
                ))
            })?;
            let key = normalize_key(key.trim());
            values.insert(key, value.trim().to_string());
        }
        Ok(Self { values })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Keys that no resolution step asked for.
    pub fn unused<'a>(&'a self, known: &[&str]) -> Vec<&'a str> {
        self.values
            .keys()
            .map(String::as_str)
            .filter(|k| !known.contains(k))
            .collect()
    }
}

/// Accepts `n-obs`, `N_S`-style aliases and case differences.
fn normalize_key(key: &str) -> String {
    let k = key.to_ascii_lowercase().replace('-', "_");
    match k.as_str() {
        "k" => "wavenumber".into(),
        "r" => "radius".into(),
        "n_s" | "ns" => "n_obs".into(),
        "n_gamma" => "n_quad".into(),
        "n" => "n_modes".into(),
        _ => k,
    }
}

/// Records where each setting came from and echoes the resolved values.
#[derive(Debug, Default)]
pub struct Resolver {
    file: ConfigFile,
    resolved: Vec<(String, String)>,
}

impl Resolver {
    pub fn new(file: ConfigFile) -> Self {
        Self {
            file,
            resolved: Vec::new(),
        }
    }

    /// Flag value if given, else file value, else default.
    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, Error>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match (flag, self.file.get(key)) {
            (Some(v), _) => v,
            (None, Some(text)) => text.parse().map_err(|e| {
                Error::Config(format!("config key {key}: cannot parse {text:?}: {e}"))
            })?,
            (None, None) => default,
        };
        self.resolved.push((key.to_string(), value.to_string()));
        Ok(value)
    }

    pub fn physics(&mut self, flags: &crate::PhysicsArgs) -> Result<PhysicsConfig, Error> {
        let d = PhysicsConfig::default();
        let physics = PhysicsConfig {
            wavenumber: self.get("wavenumber", flags.wavenumber, d.wavenumber)?,
            radius: self.get("radius", flags.radius, d.radius)?,
            n_obs: self.get("n_obs", flags.n_obs, d.n_obs)?,
            n_quad: self.get("n_quad", flags.n_quad, d.n_quad)?,
            n_modes: self.get("n_modes", flags.n_modes, d.n_modes)?,
            a_max: self.get("a_max", flags.a_max, d.a_max)?,
        };
        physics.validate()?;
        Ok(physics)
    }

    /// Rejects file keys that the command does not use.
    pub fn finish(&self) -> Result<(), Error> {
        let known: Vec<&str> = self.resolved.iter().map(|(k, _)| k.as_str()).collect();
        let unused = self.file.unused(&known);
        if unused.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "unknown or unused config keys: {}",
                unused.join(", ")
            )))
        }
    }

    /// Resolved settings as `key=value` lines.
    pub fn echo(&self) -> String {
        self.resolved
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Resolved settings as `# key=value` comment lines for CSV headers.
    pub fn echo_comment(&self) -> String {
        self.resolved
            .iter()
            .map(|(k, v)| format!("# {k}={v}\n"))
            .collect()
    }
}
