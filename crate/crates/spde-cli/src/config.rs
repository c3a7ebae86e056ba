//! Configuration resolution: built-in defaults, then an optional key=value
//! file, then the environment (output directory only), then command-line
//! flags — later layers win.

use std::path::{Path, PathBuf};

use spde::{ErrorTime, ExperimentConfig, InitialDatum, Result, SpdeError};

/// Environment variable overriding the *base* output directory (flags still
/// take precedence over it).
pub const OUT_DIR_ENV: &str = "SPDE_OUT_DIR";

/// A partial configuration: every field optional, merged onto the defaults.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub model: Option<String>,
    pub horizon: Option<f64>,
    pub n_ref: Option<usize>,
    pub k_ref: Option<usize>,
    pub j_modes: Option<usize>,
    pub sweep_k: Option<Vec<usize>>,
    pub sweep_n: Option<Vec<usize>>,
    pub samples: Option<usize>,
    pub p: Option<u32>,
    pub seed: Option<u64>,
    pub error_time: Option<ErrorTime>,
    pub m_factor: Option<usize>,
    pub datum: Option<InitialDatum>,
    pub holder_lags: Option<Vec<f64>>,
    pub outdir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub sigma: Option<f64>,
}

impl Overrides {
    /// Parse a flat `key = value` file. Blank lines and `#` comments are
    /// ignored; keys mirror the experiment-configuration field names, plus
    /// `outdir`, `threads`, and `sigma`.
    pub fn from_file(path: &Path) -> Result<Overrides> {
        let text = std::fs::read_to_string(path)?;
        let mut out = Overrides::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let (key, value) = line.split_once('=').ok_or_else(|| {
                SpdeError::Config(format!(
                    "{}:{lineno}: expected 'key = value', got '{line}'",
                    path.display()
                ))
            })?;
            let key = key.trim();
            let value = value.trim();
            let loc = || format!("{}:{lineno}", path.display());
            match key {
                "model" => out.model = Some(value.to_string()),
                "horizon" => out.horizon = Some(parse_num::<f64>(&loc(), key, value)?),
                "n_ref" => out.n_ref = Some(parse_num::<usize>(&loc(), key, value)?),
                "k_ref" => out.k_ref = Some(parse_num::<usize>(&loc(), key, value)?),
                "j_modes" => out.j_modes = Some(parse_num::<usize>(&loc(), key, value)?),
                "sweep_k" => out.sweep_k = Some(parse_list::<usize>(&loc(), key, value)?),
                "sweep_n" => out.sweep_n = Some(parse_list::<usize>(&loc(), key, value)?),
                "samples" => out.samples = Some(parse_num::<usize>(&loc(), key, value)?),
                "p" => out.p = Some(parse_num::<u32>(&loc(), key, value)?),
                "seed" => out.seed = Some(parse_num::<u64>(&loc(), key, value)?),
                "error_time" => out.error_time = Some(ErrorTime::parse(value)?),
                "m_factor" => out.m_factor = Some(parse_num::<usize>(&loc(), key, value)?),
                "datum" => out.datum = Some(InitialDatum::parse(value)?),
                "holder_lags" => out.holder_lags = Some(parse_lags(&loc(), value)?),
                "outdir" => out.outdir = Some(PathBuf::from(value)),
                "threads" => out.threads = Some(parse_num::<usize>(&loc(), key, value)?),
                "sigma" => out.sigma = Some(parse_num::<f64>(&loc(), key, value)?),
                other => {
                    return Err(SpdeError::Config(format!(
                        "{}: unknown config key '{other}'",
                        loc()
                    )))
                }
            }
        }
        Ok(out)
    }

    /// Overlay `self` onto an experiment configuration (model is resolved
    /// separately because it selects the defaults).
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if let Some(v) = self.n_ref {
            cfg.n_ref = v;
        }
        if let Some(v) = self.k_ref {
            cfg.k_ref = v;
        }
        if let Some(v) = self.j_modes {
            cfg.j_modes = v;
        }
        if let Some(v) = &self.sweep_k {
            cfg.sweep_k = v.clone();
        }
        if let Some(v) = &self.sweep_n {
            cfg.sweep_n = v.clone();
        }
        if let Some(v) = self.samples {
            cfg.samples = v;
        }
        if let Some(v) = self.p {
            cfg.p = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.error_time {
            cfg.error_time = v;
        }
        if let Some(v) = self.m_factor {
            cfg.m_factor = v;
        }
        if let Some(v) = &self.datum {
            cfg.datum = v.clone();
        }
        if let Some(v) = &self.holder_lags {
            cfg.holder_lags = v.clone();
        }
    }
}

/// Fully resolved run parameters.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub cfg: ExperimentConfig,
    pub sigma: f64,
    pub outdir_base: PathBuf,
    pub threads: usize,
}

/// Merge defaults ← file ← environment ← flags.
pub fn resolve(
    file_path: Option<&Path>,
    paper_scale: bool,
    flags: &Overrides,
) -> Result<Resolved> {
    let file = match file_path {
        Some(p) => Overrides::from_file(p)?,
        None => Overrides::default(),
    };
    let model = flags
        .model
        .clone()
        .or_else(|| file.model.clone())
        .unwrap_or_else(|| "paper-ex".to_string());
    let mut cfg = if paper_scale {
        ExperimentConfig::full_scale(&model)
    } else {
        ExperimentConfig::desk_scale(&model)
    };
    file.apply(&mut cfg);
    flags.apply(&mut cfg);

    let env_outdir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    let outdir_base = flags
        .outdir
        .clone()
        .or(env_outdir)
        .or_else(|| file.outdir.clone())
        .unwrap_or_else(|| PathBuf::from("runs"));
    let threads = flags.threads.or(file.threads).unwrap_or(0);
    let sigma = flags.sigma.or(file.sigma).unwrap_or(1.0);
    if !(sigma.is_finite()) {
        return Err(SpdeError::Config(format!("sigma must be finite, got {sigma}")));
    }
    Ok(Resolved {
        cfg,
        sigma,
        outdir_base,
        threads,
    })
}

fn parse_num<T: std::str::FromStr>(loc: &str, key: &str, value: &str) -> Result<T> {
    value.parse::<T>().map_err(|_| {
        SpdeError::Config(format!("{loc}: invalid value '{value}' for '{key}'"))
    })
}

fn parse_list<T: std::str::FromStr>(loc: &str, key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|item| parse_num::<T>(loc, key, item.trim()))
        .collect()
}

/// A lag is either a plain float or dyadic shorthand `2^k` (e.g. `2^-10`).
pub fn parse_lag(text: &str) -> Result<f64> {
    let text = text.trim();
    if let Some(exp) = text.strip_prefix("2^") {
        let k: i32 = exp.parse().map_err(|_| {
            SpdeError::Config(format!("invalid dyadic exponent in lag '{text}'"))
        })?;
        return Ok((2f64).powi(k));
    }
    text.parse::<f64>()
        .map_err(|_| SpdeError::Config(format!("invalid lag '{text}'")))
}

fn parse_lags(loc: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|item| {
            parse_lag(item).map_err(|e| SpdeError::Config(format!("{loc}: {e}")))
        })
        .collect()
}
