//! `simulate` and `verify`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};

use opinion_flow::dynamics::simulate as run_particles;
use opinion_flow::entropy::{probe_grid, run_battery, write_entropy_csv, ParticleField, QuadSpec};
use opinion_flow::flux::{shock_report, write_shock_csv};
use opinion_flow::io::{fmt_f64, read_trajectory_csv, write_trajectory_csv};

use crate::config::{Config, VerifyConfig};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SIMULATION: u8 = 3;
pub const EXIT_VERIFY: u8 = 4;
pub const EXIT_STUDY: u8 = 5;

pub const RH_TOL: f64 = 1e-8;
pub const OLEINIK_TOL: f64 = 1e-10;
/// Tolerance on tails and monotonicity of a reloaded CDF.
pub const CDF_TOL: f64 = 1e-9;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;

/// Reads and validates a config file; all problems map to exit code 2.
pub fn load_config(path: &Path) -> Outcome<(Config, String)> {
    let src = fs::read_to_string(path)
        .map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: cannot read config: {e}", path.display())))?;
    let cfg = Config::parse(&src).map_err(|e| Failure::new(EXIT_CONFIG, e.render(path)))?;
    Ok((cfg, src))
}

pub fn create(path: &Path, code: u8) -> Outcome<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::new(code, format!("{}: {e}", path.display())))
}

pub fn io_fail(code: u8, path: &Path) -> impl Fn(opinion_flow::Error) -> Failure + '_ {
    move |e| Failure::new(code, format!("{}: {e}", path.display()))
}

pub fn prepare_dir(dir: &Path, code: u8) -> Outcome<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::new(code, format!("{}: {e}", dir.display())))
}

pub fn cmd_simulate(config_path: &Path, output_dir: Option<&Path>) -> Outcome<PathBuf> {
    let (cfg, src) = load_config(config_path)?;
    let initial = cfg
        .initial_state(&src)
        .map_err(|e| Failure::new(EXIT_CONFIG, e.render(config_path)))?;
    let kernel = cfg.build_kernel().map_err(|m| Failure::new(EXIT_CONFIG, m))?;
    let norm = cfg.normalized();
    let out = output_dir.map_or_else(|| cfg.output_dir(config_path), Path::to_path_buf);
    info!("simulating N = {} up to T = {}", initial.n(), norm.t_final);
    let traj = run_particles(&initial, &kernel, norm.t_final, &norm.snapshots, &norm.sim_options())
        .map_err(|e| Failure::new(EXIT_SIMULATION, format!("simulation failed: {e}")))?;

    let sim = |e: opinion_flow::Error| Failure::new(EXIT_SIMULATION, e.to_string());
    prepare_dir(&out, EXIT_SIMULATION)?;
    let mut normalized = norm.clone();
    normalized.output_dir = Some(PathBuf::from("."));
    let path = out.join("config.toml");
    fs::write(&path, normalized.to_toml()).map_err(|e| Failure::new(EXIT_SIMULATION, format!("{}: {e}", path.display())))?;

    let path = out.join("trajectory.csv");
    write_trajectory_csv(&traj, create(&path, EXIT_SIMULATION)?).map_err(io_fail(EXIT_SIMULATION, &path))?;

    let path = out.join("events.json");
    let last = traj.last().expect("simulate returns the final state");
    let mut w = create(&path, EXIT_SIMULATION)?;
    serde_json::to_writer_pretty(&mut w, last.events())
        .map_err(|e| Failure::new(EXIT_SIMULATION, format!("{}: {e}", path.display())))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Failure::new(EXIT_SIMULATION, e.to_string()))?;

    let mut shocks = Vec::new();
    for s in &traj {
        shocks.extend(shock_report(s).map_err(sim)?);
    }
    let path = out.join("shocks.csv");
    write_shock_csv(&shocks, create(&path, EXIT_SIMULATION)?).map_err(io_fail(EXIT_SIMULATION, &path))?;

    let cdf_dir = out.join("cdf");
    prepare_dir(&cdf_dir, EXIT_SIMULATION)?;
    let mut index = String::from("index,t\n");
    for (k, s) in traj.iter().enumerate() {
        let path = cdf_dir.join(format!("cdf_{k:04}.csv"));
        s.empirical_cdf()
            .write_csv(create(&path, EXIT_SIMULATION)?)
            .map_err(io_fail(EXIT_SIMULATION, &path))?;
        index.push_str(&format!("{k},{}\n", fmt_f64(s.t())));
    }
    let path = cdf_dir.join("times.csv");
    fs::write(&path, index).map_err(|e| Failure::new(EXIT_SIMULATION, format!("{}: {e}", path.display())))?;
    info!(
        "{} snapshots, {} collision events, wrote {}",
        traj.len(),
        last.events().len(),
        out.display()
    );
    Ok(out)
}

fn load_battery(path: &Path) -> Outcome<VerifyConfig> {
    let src = fs::read_to_string(path)
        .map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: cannot read battery: {e}", path.display())))?;
    toml::from_str(&src).map_err(|e| {
        let line = e.span().map_or(1, |s| src[..s.start].matches('\n').count() + 1);
        Failure::new(EXIT_CONFIG, format!("{}:{line}: {}", path.display(), e.message().trim()))
    })
}

/// Checks a simulation directory: CDF sanity, Rankine–Hugoniot and Oleinik
/// at every stored shock, then the Kruzkov battery.
pub fn cmd_verify(dir: &Path, battery: Option<&Path>) -> Outcome<usize> {
    let (cfg, _) = load_config(&dir.join("config.toml"))?;
    let kernel = cfg.build_kernel().map_err(|m| Failure::new(EXIT_CONFIG, m))?;
    let path = dir.join("trajectory.csv");
    let file = File::open(&path).map_err(|e| Failure::new(EXIT_VERIFY, format!("{}: {e}", path.display())))?;
    let snaps = read_trajectory_csv(BufReader::new(file)).map_err(io_fail(EXIT_VERIFY, &path))?;

    for s in &snaps {
        let t = s.t();
        if let Some((i, m)) = s.m().iter().enumerate().find(|(_, m)| !(**m > 0.0 && m.is_finite())) {
            return Err(Failure::new(EXIT_VERIFY, format!("t = {t}: weight m[{i}] = {m} is not positive")));
        }
        if s.x().windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Failure::new(EXIT_VERIFY, format!("t = {t}: particle ordering violated")));
        }
        let f = s.empirical_cdf();
        if !f.is_non_decreasing() || !f.is_shifted_cdf(CDF_TOL) {
            return Err(Failure::new(EXIT_VERIFY, format!("t = {t}: empirical CDF is not a shifted CDF")));
        }
        for (c, rec) in shock_report(s)
            .map_err(|e| Failure::new(EXIT_VERIFY, format!("t = {t}: {e}")))?
            .iter()
            .enumerate()
        {
            if rec.rh_residual > RH_TOL {
                return Err(Failure::new(
                    EXIT_VERIFY,
                    format!("t = {t}: shock {c} at x = {}: RH residual {:e}", rec.shock_position, rec.rh_residual),
                ));
            }
            if rec.min_oleinik_margin < -OLEINIK_TOL {
                return Err(Failure::new(
                    EXIT_VERIFY,
                    format!("t = {t}: shock {c} at x = {}: Oleinik margin {:e}", rec.shock_position, rec.min_oleinik_margin),
                ));
            }
        }
    }
    info!("{} snapshots pass the CDF, Rankine-Hugoniot and Oleinik checks", snaps.len());

    let spec = match battery {
        Some(p) => Some(load_battery(p)?),
        None => cfg.verify.clone(),
    }
    .map(|v| v.with_defaults(cfg.t_final));
    let probes = match &spec {
        Some(v) => {
            let windows: Vec<_> = v.windows.iter().map(|w| (w[0], w[1], w[2], w[3])).collect();
            let anchors: Vec<_> = v.anchors.iter().map(|a| (a[0], a[1])).collect();
            probe_grid(&v.alphas, &windows, &anchors, v.radius.unwrap_or(1.0), cfg.t_final)
                .map_err(|e| Failure::new(EXIT_CONFIG, format!("battery: {e}")))?
        }
        None => Vec::new(),
    };
    let report = dir.join("entropy.csv");
    if probes.is_empty() {
        warn!("empty Kruzkov battery: entropy check is vacuous");
        write_entropy_csv(&[], create(&report, EXIT_VERIFY)?).map_err(io_fail(EXIT_VERIFY, &report))?;
        return Ok(0);
    }
    let first = snaps[0].t();
    if let Some(p) = probes.iter().find(|p| p.chi.time_support().0 < first) {
        return Err(Failure::new(
            EXIT_CONFIG,
            format!("battery window starting at {} precedes the first snapshot t = {first}", p.chi.time_support().0),
        ));
    }
    let rel_tol = spec.as_ref().and_then(|v| v.rel_tol).unwrap_or(opinion_flow::entropy::ENTROPY_REL_TOL);
    let field = ParticleField::new(snaps, kernel, cfg.sim_options(), cfg.t_final)
        .and_then(ParticleField::densified)
        .map_err(|e| Failure::new(EXIT_VERIFY, e.to_string()))?;
    info!("running {} Kruzkov probes", probes.len());
    let rows = run_battery(&field, &probes, &QuadSpec::default(), rel_tol)
        .map_err(|e| Failure::new(EXIT_VERIFY, format!("battery: {e}")))?;
    write_entropy_csv(&rows, create(&report, EXIT_VERIFY)?).map_err(io_fail(EXIT_VERIFY, &report))?;
    if let Some(r) = rows.iter().find(|r| !r.pass) {
        return Err(Failure::new(
            EXIT_VERIFY,
            format!(
                "probe {} failed: alpha = {}, window = [{}, {}], integral = {:e} below -{:e}",
                r.probe_id, r.alpha, r.sigma, r.tau, r.integral_value, r.tolerance
            ),
        ));
    }
    info!("all {} probes pass", rows.len());
    Ok(rows.len())
}
