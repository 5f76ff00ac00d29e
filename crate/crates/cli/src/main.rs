//! Command-line front end: model configuration, pipelines, file emission.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use config::Config;
use qpfk::auxiliary::{depinning_range, lambda_zeros, phase_series};
use qpfk::dynamics::{
    orbit_from_hull, phases_from_offset, phonon_gap, LatticeMap, OrbitOptions, OrbitState,
};
use qpfk::fourier::parse_mode_records;
use qpfk::lindstedt::expand;
use qpfk::resonance::{find_resonance, omega_from_resonance, subexponential_profile};
use qpfk::verify::cross_validate;
use qpfk::{MediumFrequency, Resonance, ResonantModel, TrigSeries};

#[derive(Parser)]
#[command(
    name = "qpfk",
    version,
    about = "Resonant quasi-periodic equilibria of 1-D Frenkel-Kontorova lattices"
)]
struct Cli {
    /// Run configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// Override the expansion order
    #[arg(long)]
    order: Option<usize>,
    /// Override eps (first entry) and the verification eps list
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Seed for randomized initial data
    #[arg(long)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy, Debug)]
enum Command {
    /// Detect the resonance and build the unimodular reduction
    Resonance,
    /// Expand the Lindstedt series and serialize the solution
    Lindstedt,
    /// Counterterm zeros, phase series, depinning range
    Auxiliary,
    /// Iterate the lattice map; Lyapunov spectrum
    Simulate,
    /// Phonon gap proxies on a hull equilibrium
    Phonon,
    /// Newton cross-validation of the series
    Verify,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Resonance => "resonance",
            Command::Lindstedt => "lindstedt",
            Command::Auxiliary => "auxiliary",
            Command::Simulate => "simulate",
            Command::Phonon => "phonon",
            Command::Verify => "verify",
        }
    }
}

struct RunError {
    module: &'static str,
    message: String,
}

impl RunError {
    fn new(module: &'static str, message: impl ToString) -> Self {
        RunError {
            module,
            message: message.to_string(),
        }
    }

    fn to_json(&self) -> String {
        json!({"error": {"module": self.module, "message": self.message}}).to_string()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}

/// 17 significant digits: parses back to the identical double.
fn fmt17(x: f64) -> String {
    format!("{:.16e}", x)
}

fn enc(x: f64) -> Value {
    Value::String(fmt17(x))
}

fn run(cli: &Cli) -> Result<(), RunError> {
    let text = fs::read_to_string(&cli.config)
        .map_err(|e| RunError::new("io", format!("reading {:?}: {e}", cli.config)))?;
    let base = cli.config.parent().unwrap_or(Path::new("."));
    let mut cfg = Config::parse(&text, base).map_err(|e| RunError::new("config", e))?;
    if let Some(order) = cli.order {
        cfg.order = order;
    }
    if let Some(eps) = &cli.eps {
        if eps.is_empty() {
            return Err(RunError::new("config", "--eps needs at least one value"));
        }
        cfg.eps = eps[0];
        cfg.eps_list = eps.clone();
    }
    fs::create_dir_all(&cli.out)
        .map_err(|e| RunError::new("io", format!("creating {:?}: {e}", cli.out)))?;

    write_manifest(cli, &cfg)?;
    match cli.command {
        Command::Resonance => cmd_resonance(cli, &cfg),
        Command::Lindstedt => cmd_lindstedt(cli, &cfg),
        Command::Auxiliary => cmd_auxiliary(cli, &cfg),
        Command::Simulate => cmd_simulate(cli, &cfg),
        Command::Phonon => cmd_phonon(cli, &cfg),
        Command::Verify => cmd_verify(cli, &cfg),
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), RunError> {
    fs::write(dir.join(name), contents)
        .map_err(|e| RunError::new("io", format!("writing {name}: {e}")))
}

fn write_manifest(cli: &Cli, cfg: &Config) -> Result<(), RunError> {
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = json!({
        "command": cli.command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cli.seed,
        "config_path": cli.config.display().to_string(),
        "config": cfg.raw,
        // the preferred spacing cancels from the equilibrium equations;
        // recorded for provenance only
        "spacing": enc(cfg.spacing),
        "created_unix": created,
    });
    write_file(
        &cli.out,
        "manifest.json",
        &serde_json::to_string_pretty(&manifest).expect("serializable"),
    )
}

fn build_model(cfg: &Config) -> Result<ResonantModel, RunError> {
    let alpha = MediumFrequency::with_params(&cfg.alpha, cfg.tol_res, cfg.k_check)
        .map_err(|e| RunError::new("resonance", e))?;
    let d = alpha.dim();

    let mut modes = cfg.modes.clone();
    if let Some(path) = &cfg.potential_file {
        let text = fs::read_to_string(path)
            .map_err(|e| RunError::new("io", format!("reading {path:?}: {e}")))?;
        let cutoff = vec![64u32; d];
        let series = parse_mode_records(&text, d, &cutoff)
            .map_err(|e| RunError::new("config", format!("{}: {e}", path.display())))?;
        for (k, c) in series.iter() {
            // keep one representative per Hermitian pair
            if k.iter().find(|&&x| x != 0).is_none_or(|&lead| lead < 0) {
                continue;
            }
            modes.push((k.clone(), 2.0 * c.norm(), c.im.atan2(c.re)));
        }
    }
    if modes.is_empty() {
        return Err(RunError::new("config", "no potential modes given"));
    }
    let mut cutoff = vec![1u32; d];
    for (k, _, _) in &modes {
        if k.len() != d {
            return Err(RunError::new(
                "config",
                format!("mode {k:?} has dim {}, alpha has dim {d}", k.len()),
            ));
        }
        for (i, &ki) in k.iter().enumerate() {
            cutoff[i] = cutoff[i].max(ki.unsigned_abs());
        }
    }
    let mut potential = TrigSeries::zero(d, &cutoff);
    for (k, amplitude, phase) in &modes {
        potential
            .add_cosine_mode(k, *amplitude, *phase)
            .map_err(|e| RunError::new("fourier", e))?;
    }

    let resonance = match (&cfg.k, cfg.m, cfg.omega) {
        (Some(k), Some(m), None) => {
            let omega =
                omega_from_resonance(k, m, &alpha).map_err(|e| RunError::new("resonance", e))?;
            Resonance::new(k, m, omega, &alpha).map_err(|e| RunError::new("resonance", e))?
        }
        (Some(k), Some(m), Some(omega)) => {
            Resonance::new(k, m, omega, &alpha).map_err(|e| RunError::new("resonance", e))?
        }
        (None, None, Some(omega)) => {
            find_resonance(&alpha, omega, cfg.k_box, cfg.m_box, cfg.tol_res)
                .map_err(|e| RunError::new("resonance", e))?
                .ok_or_else(|| {
                    RunError::new(
                        "resonance",
                        format!(
                            "no resonance of omega = {omega} in the box |k| <= {}, |m| <= {}",
                            cfg.k_box, cfg.m_box
                        ),
                    )
                })?
        }
        _ => {
            return Err(RunError::new(
                "config",
                "specify the resonance as k and m, or as omega",
            ))
        }
    };
    ResonantModel::new(potential, alpha, resonance).map_err(|e| RunError::new("lindstedt", e))
}

fn cmd_resonance(cli: &Cli, cfg: &Config) -> Result<(), RunError> {
    let model = build_model(cfg)?;
    let intr = &model.intrinsic;
    let profile = subexponential_profile(&intr.omega_intrinsic, cfg.subexp_n_max);
    let doc = json!({
        "alpha": model.alpha.alpha().iter().map(|&a| enc(a)).collect::<Vec<_>>(),
        "k": model.resonance.k,
        "m": model.resonance.m,
        "omega": enc(model.resonance.omega),
        "b": intr.b.rows(),
        "l": intr.l,
        "omega_intrinsic": intr.omega_intrinsic.iter().map(|&o| enc(o)).collect::<Vec<_>>(),
        "beta": intr.beta.iter().map(|&b| enc(b)).collect::<Vec<_>>(),
        "subexponential": profile
            .iter()
            .map(|&(n, s)| json!([n, enc(s)]))
            .collect::<Vec<_>>(),
    });
    write_file(
        &cli.out,
        "resonance.json",
        &serde_json::to_string_pretty(&doc).expect("serializable"),
    )
}

fn cmd_lindstedt(cli: &Cli, cfg: &Config) -> Result<(), RunError> {
    let model = build_model(cfg)?;
    let sol =
        expand(&model, cfg.order, cfg.divisor_floor).map_err(|e| RunError::new("lindstedt", e))?;
    write_file(&cli.out, "lindstedt.json", &sol.to_json_string())
}

fn cmd_auxiliary(cli: &Cli, cfg: &Config) -> Result<(), RunError> {
    let model = build_model(cfg)?;
    let sol =
        expand(&model, cfg.order, cfg.divisor_floor).map_err(|e| RunError::new("lindstedt", e))?;
    let n0 = (1..=sol.order())
        .find(|&j| {
            sol.lambda_jet
                .term(j)
                .iter()
                .any(|(_, c)| c.norm() >= 1e-14)
        })
        .ok_or_else(|| RunError::new("auxiliary", "all counterterms vanish (W = 0?)"))?;
    let zeros = lambda_zeros(sol.lambda_jet.term(n0)).map_err(|e| RunError::new("auxiliary", e))?;
    let eta_star = cfg.eta_star.unwrap_or(zeros[0].eta);
    let n_coeffs = cfg.phase_order.unwrap_or(sol.order() - n0);
    let phase = phase_series(&sol, eta_star, cfg.mu, n_coeffs)
        .map_err(|e| RunError::new("auxiliary", e))?;
    let (lo, hi) = depinning_range(&sol, cfg.eps);
    let doc = json!({
        "n0": n0,
        "zeros": zeros
            .iter()
            .map(|z| json!({"eta": enc(z.eta), "slope": enc(z.slope)}))
            .collect::<Vec<_>>(),
        "phase": {
            "eta_star": enc(phase.eta_star),
            "mu": enc(cfg.mu),
            "n0": phase.n0,
            "coeffs": phase.coeffs.iter().map(|&c| enc(c)).collect::<Vec<_>>(),
        },
        "depinning": {
            "eps": enc(cfg.eps),
            "lambda_min": enc(lo),
            "lambda_max": enc(hi),
        },
    });
    write_file(
        &cli.out,
        "auxiliary.json",
        &serde_json::to_string_pretty(&doc).expect("serializable"),
    )
}

fn cmd_simulate(cli: &Cli, cfg: &Config) -> Result<(), RunError> {
    let model = build_model(cfg)?;
    let d = model.dim();
    let map = LatticeMap::new(&model.potential, model.alpha.alpha(), cfg.eps, cfg.lambda)
        .map_err(|e| RunError::new("dynamics", e))?;
    let p0 = cfg.p0.unwrap_or(model.resonance.omega);
    let q0 = match &cfg.q0 {
        Some(q) => {
            if q.len() != d {
                return Err(RunError::new("config", "q0 has the wrong dimension"));
            }
            q.clone()
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed.unwrap_or(0));
            (0..d).map(|_| rng.gen::<f64>()).collect()
        }
    };
    let opts = OrbitOptions {
        record_every: cfg.record_every,
        lyapunov: true,
        qr_every: cfg.qr_every,
    };
    let summary = map.iterate(&OrbitState::new(p0, q0), cfg.n_steps, &opts);

    let mut orbit = String::from("step,p");
    for i in 1..=d {
        orbit.push_str(&format!(",q_lift_{i}"));
    }
    orbit.push('\n');
    for (n, state) in &summary.samples {
        orbit.push_str(&n.to_string());
        orbit.push(',');
        orbit.push_str(&fmt17(state.p));
        for q in &state.q_lift {
            orbit.push(',');
            orbit.push_str(&fmt17(*q));
        }
        orbit.push('\n');
    }
    write_file(&cli.out, "orbit.csv", &orbit)?;

    let exps = summary.lyapunov.clone().unwrap_or_default();
    let mut lyap = String::from("index,exponent\n");
    for (i, chi) in exps.iter().enumerate() {
        lyap.push_str(&format!("{i},{}\n", fmt17(*chi)));
    }
    write_file(&cli.out, "lyapunov.csv", &lyap)?;

    let doc = json!({
        "n_steps": cfg.n_steps,
        "eps": enc(cfg.eps),
        "lambda": enc(cfg.lambda),
        "mean_p": enc(summary.mean_p),
        "lyapunov": exps.iter().map(|&x| enc(x)).collect::<Vec<_>>(),
    });
    write_file(
        &cli.out,
        "simulate.json",
        &serde_json::to_string_pretty(&doc).expect("serializable"),
    )
}

fn cmd_phonon(cli: &Cli, cfg: &Config) -> Result<(), RunError> {
    let model = build_model(cfg)?;
    let sol =
        expand(&model, cfg.order, cfg.divisor_floor).map_err(|e| RunError::new("lindstedt", e))?;
    let (xi1, eta_derived) = phases_from_offset(&model.intrinsic.beta, cfg.xi2);
    let eta = cfg.eta.unwrap_or(eta_derived);
    let n_sites = cfg.sizes.iter().copied().max().unwrap_or(0).max(2);
    let report = orbit_from_hull(&sol, cfg.eps, eta, &xi1, cfg.xi2, n_sites);
    let gaps = phonon_gap(
        &report.positions,
        &model.potential,
        model.alpha.alpha(),
        cfg.eps,
        &cfg.sizes,
    )
    .map_err(|e| RunError::new("dynamics", e))?;
    let mut csv = String::from("size,gap\n");
    for (size, gap) in &gaps {
        csv.push_str(&format!("{size},{}\n", fmt17(*gap)));
    }
    write_file(&cli.out, "phonon.csv", &csv)
}

fn cmd_verify(cli: &Cli, cfg: &Config) -> Result<(), RunError> {
    let model = build_model(cfg)?;
    let sol =
        expand(&model, cfg.order, cfg.divisor_floor).map_err(|e| RunError::new("lindstedt", e))?;
    let eta = cfg.eta.unwrap_or(0.0);
    let table = cross_validate(
        &sol,
        &cfg.eps_list,
        eta,
        cfg.newton_cutoff,
        cfg.newton_max_iter,
    );
    let mut csv = String::from("eps,converged,iterations,sup_residual,v_diff,lambda_diff\n");
    for row in &table.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt17(row.eps),
            row.converged,
            row.iterations,
            fmt17(row.sup_residual),
            fmt17(row.v_diff),
            fmt17(row.lambda_diff),
        ));
    }
    write_file(&cli.out, "verify.csv", &csv)?;
    let doc = json!({
        "eta": enc(eta),
        "order": sol.order(),
        "v_slope": table.v_slope.map(enc),
    });
    write_file(
        &cli.out,
        "verify.json",
        &serde_json::to_string_pretty(&doc).expect("serializable"),
    )
}
