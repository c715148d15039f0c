//! Plain-text experiment configuration: `key = value` lines, `#` comments.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;
use tpmhd_core::forms::SchemeParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`: {msg}")]
    Value { line: usize, key: String, value: String, msg: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Converge,
    Spinodal,
    Kh,
}

/// Manufactured-solution element choice: MINI (I) or Taylor-Hood P2 (II).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    I,
    II,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtRule {
    H2,
    H3,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KhMode {
    Single,
    Double,
}

impl KhMode {
    pub fn modes(self) -> u32 {
        match self {
            KhMode::Single => 1,
            KhMode::Double => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub experiment: Experiment,
    pub case: Case,
    /// Mesh resolutions; a single entry for spinodal and K-H runs.
    pub n_list: Vec<usize>,
    pub dt_rule: DtRule,
    /// Physical and solver parameters; `dt` is only meaningful for the fixed rule.
    pub params: SchemeParams,
    pub kh_mode: KhMode,
    pub output_dir: PathBuf,
    pub dump_every: usize,
}

const KEYS: [&str; 21] = [
    "experiment",
    "case",
    "n",
    "n_list",
    "dt",
    "dt_rule",
    "T_final",
    "gamma",
    "mobility",
    "nu",
    "mu",
    "lambda",
    "sigma",
    "seed",
    "kh_mode",
    "newton_tol",
    "newton_max",
    "lin_tol",
    "output_dir",
    "dump_every",
    "reuse_jacobian",
];

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Converge => "converge",
            Experiment::Spinodal => "spinodal",
            Experiment::Kh => "kh",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "converge" => Ok(Experiment::Converge),
            "spinodal" => Ok(Experiment::Spinodal),
            "kh" => Ok(Experiment::Kh),
            _ => Err("expected converge, spinodal or kh".into()),
        }
    }
}

impl FromStr for Case {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "I" => Ok(Case::I),
            "II" => Ok(Case::II),
            _ => Err("expected I or II".into()),
        }
    }
}

impl FromStr for DtRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "h2" => Ok(DtRule::H2),
            "h3" => Ok(DtRule::H3),
            "fixed" => Ok(DtRule::Fixed),
            _ => Err("expected h2, h3 or fixed".into()),
        }
    }
}

impl FromStr for KhMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "single" => Ok(KhMode::Single),
            "double" => Ok(KhMode::Double),
            _ => Err("expected single or double".into()),
        }
    }
}

struct Entries(BTreeMap<String, (usize, String)>);

impl Entries {
    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|e: T::Err| ConfigError::Value {
                line: *line,
                key: key.into(),
                value: v.clone(),
                msg: e.to_string(),
            }),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<usize>>, ConfigError> {
        match self.0.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|t| t.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|e| ConfigError::Value { line: *line, key: key.into(), value: v.clone(), msg: e.to_string() }),
        }
    }

    fn line(&self, key: &str) -> usize {
        self.0.get(key).map_or(0, |e| e.0)
    }
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Syntax { line, msg: format!("expected `key = value`, found `{content}`") });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() || value.contains('=') {
            return Err(ConfigError::Syntax { line, msg: format!("malformed entry `{content}`") });
        }
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey { line, key: key.into() });
        }
        if map.insert(key.to_string(), (line, value.to_string())).is_some() {
            return Err(ConfigError::Duplicate { line, key: key.into() });
        }
    }
    Ok(Entries(map))
}

/// Parse configuration text; missing optional keys take their defaults.
pub fn parse_config_str(text: &str) -> Result<Config, ConfigError> {
    let e = tokenize(text)?;
    let experiment: Experiment = e.get("experiment")?.ok_or(ConfigError::Missing("experiment"))?;
    let t_final: f64 = e.get("T_final")?.ok_or(ConfigError::Missing("T_final"))?;
    let d = SchemeParams::default();
    let mut params = SchemeParams {
        gamma: e.get("gamma")?.unwrap_or(d.gamma),
        mobility: e.get("mobility")?.unwrap_or(d.mobility),
        nu: e.get("nu")?.unwrap_or(d.nu),
        mu: e.get("mu")?.unwrap_or(d.mu),
        lambda: e.get("lambda")?.unwrap_or(d.lambda),
        sigma: e.get("sigma")?.unwrap_or(d.sigma),
        t_final,
        newton_tol: e.get("newton_tol")?.unwrap_or(d.newton_tol),
        newton_max: e.get("newton_max")?.unwrap_or(d.newton_max),
        lin_tol: e.get("lin_tol")?.unwrap_or(d.lin_tol),
        seed: e.get("seed")?.unwrap_or(d.seed),
        reuse_jacobian: e.get("reuse_jacobian")?.unwrap_or(d.reuse_jacobian),
        ..d
    };

    let case = match (experiment, e.get::<Case>("case")?) {
        (Experiment::Converge, None) => return Err(ConfigError::Missing("case")),
        (_, c) => c.unwrap_or(Case::I),
    };

    let n_list = match (e.get::<usize>("n")?, e.list("n_list")?) {
        (Some(_), Some(_)) => return Err(ConfigError::Invalid("give either `n` or `n_list`, not both".into())),
        (Some(n), None) => vec![n],
        (None, Some(l)) => l,
        (None, None) => return Err(ConfigError::Missing("n_list")),
    };
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(ConfigError::Invalid("mesh resolutions must be positive".into()));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ConfigError::Value {
            line: e.line("n_list"),
            key: "n_list".into(),
            value: format!("{n_list:?}"),
            msg: "must be strictly increasing".into(),
        });
    }
    if experiment != Experiment::Converge && n_list.len() != 1 {
        return Err(ConfigError::Invalid(format!("{} runs take a single `n`", experiment.name())));
    }

    let dt: Option<f64> = e.get("dt")?;
    let dt_rule = match (e.get::<DtRule>("dt_rule")?, dt) {
        (Some(DtRule::Fixed) | None, Some(_)) => DtRule::Fixed,
        (Some(r @ (DtRule::H2 | DtRule::H3)), Some(_)) => {
            return Err(ConfigError::Invalid(format!("`dt` conflicts with dt_rule {r:?}")));
        }
        (Some(DtRule::Fixed), None) => return Err(ConfigError::Missing("dt")),
        (Some(r), None) => r,
        (None, None) => match (experiment, case) {
            (Experiment::Converge, Case::I) => DtRule::H2,
            (Experiment::Converge, Case::II) => DtRule::H3,
            _ => return Err(ConfigError::Missing("dt")),
        },
    };
    params.dt = dt.unwrap_or(d.dt);

    if experiment == Experiment::Spinodal && e.get::<u64>("seed")?.is_none() {
        return Err(ConfigError::Missing("seed"));
    }

    let cfg = Config {
        experiment,
        case,
        n_list,
        dt_rule,
        params,
        kh_mode: e.get("kh_mode")?.unwrap_or(KhMode::Single),
        output_dir: e.get::<String>("output_dir")?.map_or_else(|| PathBuf::from("out"), PathBuf::from),
        dump_every: e.get("dump_every")?.unwrap_or(0),
    };
    cfg.params_for(cfg.n_list[0]).validate().map_err(|err| ConfigError::Invalid(err.to_string()))?;
    Ok(cfg)
}

/// Read and parse a configuration file.
pub fn parse_config(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config_str(&text)
}

impl Config {
    /// Time step for mesh resolution `n` under the configured rule.
    pub fn dt_for(&self, n: usize) -> f64 {
        let h = 1.0 / n as f64;
        match self.dt_rule {
            DtRule::H2 => h * h,
            DtRule::H3 => h * h * h,
            DtRule::Fixed => self.params.dt,
        }
    }

    /// Parameters with the time step resolved for mesh resolution `n`.
    pub fn params_for(&self, n: usize) -> SchemeParams {
        SchemeParams { dt: self.dt_for(n), ..self.params.clone() }
    }
}
