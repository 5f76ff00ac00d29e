//! Key-value run configuration.
//!
//! One file per experiment: `key = value` lines, `#` comments, vectors
//! whitespace-separated. `mode` lines repeat, one per potential term
//! (`k1 .. kd amplitude phase`), or `potential_file` points at a bare
//! mode-record file.

use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct Config {
    pub alpha: Vec<f64>,
    pub k: Option<Vec<i64>>,
    pub m: Option<i64>,
    pub omega: Option<f64>,
    pub k_box: u32,
    pub m_box: u32,
    pub modes: Vec<(Vec<i32>, f64, f64)>,
    pub potential_file: Option<PathBuf>,
    pub order: usize,
    pub eps: f64,
    pub eps_list: Vec<f64>,
    pub tol_res: f64,
    pub k_check: u32,
    pub divisor_floor: f64,
    pub residual_grid: usize,
    pub eta_star: Option<f64>,
    pub mu: f64,
    pub phase_order: Option<usize>,
    pub n_steps: usize,
    pub p0: Option<f64>,
    pub q0: Option<Vec<f64>>,
    pub lambda: f64,
    pub record_every: usize,
    pub qr_every: usize,
    pub sizes: Vec<usize>,
    pub xi2: f64,
    pub eta: Option<f64>,
    pub newton_cutoff: u32,
    pub newton_max_iter: usize,
    pub subexp_n_max: u32,
    pub alias_bound: f64,
    /// Preferred neighbor spacing of the harmonic coupling. It cancels from
    /// the equilibrium equations, so it is recorded for provenance and never
    /// used in a computation.
    pub spacing: f64,
    /// Raw file contents, echoed into the run manifest.
    pub raw: String,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            alpha: Vec::new(),
            k: None,
            m: None,
            omega: None,
            k_box: 8,
            m_box: 8,
            modes: Vec::new(),
            potential_file: None,
            order: 3,
            eps: 0.01,
            eps_list: vec![1e-2, 5e-3, 2.5e-3],
            tol_res: 1e-9,
            k_check: 20,
            divisor_floor: 1e-12,
            residual_grid: 17,
            eta_star: None,
            mu: 0.0,
            phase_order: None,
            n_steps: 100_000,
            p0: None,
            q0: None,
            lambda: 0.0,
            record_every: 1000,
            qr_every: 20,
            sizes: vec![50, 100, 200, 400],
            xi2: 0.0,
            eta: None,
            newton_cutoff: 8,
            newton_max_iter: 30,
            subexp_n_max: 64,
            alias_bound: 1e-8,
            spacing: 0.0,
            raw: String::new(),
        }
    }
}

fn parse_list<T: std::str::FromStr>(value: &str, key: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    value
        .split_whitespace()
        .map(|f| {
            f.parse::<T>()
                .map_err(|e| format!("key {key}: bad entry {f:?}: {e}"))
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(value: &str, key: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| format!("key {key}: bad value {value:?}: {e}"))
}

impl Config {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Config, String> {
        let mut cfg = Config {
            raw: text.to_string(),
            ..Config::default()
        };
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "alpha" => cfg.alpha = parse_list(value, key)?,
                "k" => cfg.k = Some(parse_list(value, key)?),
                "m" => cfg.m = Some(parse_one(value, key)?),
                "omega" => cfg.omega = Some(parse_one(value, key)?),
                "k_box" => cfg.k_box = parse_one(value, key)?,
                "m_box" => cfg.m_box = parse_one(value, key)?,
                "mode" => {
                    let fields: Vec<&str> = value.split_whitespace().collect();
                    if fields.len() < 3 {
                        return Err(format!(
                            "line {}: mode needs k1..kd amplitude phase",
                            lineno + 1
                        ));
                    }
                    let dim = fields.len() - 2;
                    let mut k = Vec::with_capacity(dim);
                    for f in &fields[..dim] {
                        k.push(parse_one::<i32>(f, key)?);
                    }
                    let amplitude = parse_one::<f64>(fields[dim], key)?;
                    let phase = parse_one::<f64>(fields[dim + 1], key)?;
                    cfg.modes.push((k, amplitude, phase));
                }
                "potential_file" => {
                    cfg.potential_file = Some(base_dir.join(value));
                }
                "order" => cfg.order = parse_one(value, key)?,
                "eps" => cfg.eps = parse_one(value, key)?,
                "eps_list" => cfg.eps_list = parse_list(value, key)?,
                "tol_res" => cfg.tol_res = parse_one(value, key)?,
                "k_check" => cfg.k_check = parse_one(value, key)?,
                "divisor_floor" => cfg.divisor_floor = parse_one(value, key)?,
                "residual_grid" => cfg.residual_grid = parse_one(value, key)?,
                "eta_star" => cfg.eta_star = Some(parse_one(value, key)?),
                "mu" => cfg.mu = parse_one(value, key)?,
                "phase_order" => cfg.phase_order = Some(parse_one(value, key)?),
                "n_steps" => cfg.n_steps = parse_one(value, key)?,
                "p0" => cfg.p0 = Some(parse_one(value, key)?),
                "q0" => cfg.q0 = Some(parse_list(value, key)?),
                "lambda" => cfg.lambda = parse_one(value, key)?,
                "record_every" => cfg.record_every = parse_one(value, key)?,
                "qr_every" => cfg.qr_every = parse_one(value, key)?,
                "sizes" => cfg.sizes = parse_list(value, key)?,
                "xi2" => cfg.xi2 = parse_one(value, key)?,
                "eta" => cfg.eta = Some(parse_one(value, key)?),
                "newton_cutoff" => cfg.newton_cutoff = parse_one(value, key)?,
                "newton_max_iter" => cfg.newton_max_iter = parse_one(value, key)?,
                "subexp_n_max" => cfg.subexp_n_max = parse_one(value, key)?,
                "alias_bound" => cfg.alias_bound = parse_one(value, key)?,
                "spacing" => cfg.spacing = parse_one(value, key)?,
                _ => return Err(format!("line {}: unknown key {key:?}", lineno + 1)),
            }
        }
        if cfg.alpha.is_empty() {
            return Err("config must set alpha".into());
        }
        Ok(cfg)
    }
}
