//! `study`: convergence, stability and time-Lipschitz studies from a manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;

use opinion_flow::dynamics::{simulate, uniform_times, SimOptions};
use opinion_flow::experiments::{
    initial_data_from_cdf, meanfield_convergence, particle_run, stability_check, time_lipschitz_check,
    trajectory_distances, ConvergenceSpec,
};
use opinion_flow::io::fmt_f64;
use opinion_flow::measures::Kernel;

use crate::commands::{create, load_config, prepare_dir, Failure, Outcome, EXIT_CONFIG, EXIT_SIMULATION, EXIT_STUDY};
use crate::config::StudyConfig;

#[derive(Debug, Clone, Serialize)]
pub struct Criterion {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// Hard criteria decide the exit code; soft ones are only logged.
    pub hard: bool,
    pub pass: bool,
}

impl Criterion {
    fn at_most(name: &str, value: f64, threshold: f64, hard: bool) -> Self {
        Criterion {
            name: name.into(),
            value,
            threshold,
            hard,
            pass: value <= threshold,
        }
    }

    fn at_least(name: &str, value: f64, threshold: f64, hard: bool) -> Self {
        Criterion {
            name: name.into(),
            value,
            threshold,
            hard,
            pass: value >= threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StudySummary {
    pub index: usize,
    pub kind: String,
    pub csv: String,
    pub criteria: Vec<Criterion>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub studies: Vec<StudySummary>,
    pub pass: bool,
}

struct StudyOutput {
    csv: String,
    criteria: Vec<Criterion>,
}

fn sim_err(e: opinion_flow::Error) -> Failure {
    Failure::new(EXIT_SIMULATION, format!("study run failed: {e}"))
}

fn row(values: &[f64]) -> String {
    values.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",")
}

fn run_study(study: &StudyConfig, kernel: &Kernel, t_final: f64, opts: &SimOptions) -> Outcome<StudyOutput> {
    match study {
        StudyConfig::Converge {
            cdf,
            ns,
            n_ref,
            snapshots,
            dxs,
            max_final_distance,
            min_r_squared,
            max_slope,
        } => {
            let spec = ConvergenceSpec {
                cdf: cdf.clone(),
                kernel: *kernel,
                t_final,
                ns: ns.clone(),
                n_ref: n_ref.unwrap_or(2 * ns.iter().max().copied().unwrap_or(1)),
                snapshots: snapshots.unwrap_or(crate::config::DEFAULT_SNAPSHOTS),
                dt: opts.dt,
                dxs: dxs.clone(),
            };
            let report = meanfield_convergence(&spec).map_err(sim_err)?;
            let mut csv = String::from("n,dist_ref");
            for dx in dxs {
                write!(csv, ",dist_fv_dx{dx}").unwrap();
            }
            csv.push('\n');
            for r in &report.rows {
                let mut vals = vec![r.dist_ref];
                vals.extend(&r.dist_fv);
                writeln!(csv, "{},{}", r.n, row(&vals)).unwrap();
            }
            let below_ref: Vec<_> = report.rows.iter().filter(|r| r.n < spec.n_ref).collect();
            let worst_increase = below_ref
                .windows(2)
                .map(|w| w[1].dist_ref - w[0].dist_ref)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut criteria = vec![Criterion::at_most(
                "self_convergence_non_increasing",
                if below_ref.len() < 2 { 0.0 } else { worst_increase },
                1e-12,
                false,
            )];
            if let Some(max) = max_final_distance {
                let last = below_ref.last().map_or(0.0, |r| r.dist_ref);
                criteria.push(Criterion::at_most("final_distance", last, *max, true));
            }
            if let Some(min) = min_r_squared {
                let (r2, positive) = report
                    .fit
                    .map_or((f64::NAN, false), |f| (f.r_squared, f.kappa1 > 0.0 && f.kappa2 > 0.0));
                let mut c = Criterion::at_least("rate_fit_r_squared", r2, *min, true);
                c.pass &= positive;
                criteria.push(c);
            }
            if let Some(max) = max_slope {
                criteria.push(Criterion::at_most("loglog_slope", report.ref_slope, *max, true));
            }
            if let Some(f) = report.fit {
                info!("fit: kappa1 = {:.4}, kappa2 = {:.4}, R^2 = {:.4}", f.kappa1, f.kappa2, f.r_squared);
            }
            Ok(StudyOutput { csv, criteria })
        }
        StudyConfig::Stability { cdf, perturbed, n, snapshots } => {
            let a = initial_data_from_cdf(cdf, *n).map_err(sim_err)?;
            let b = initial_data_from_cdf(perturbed, *n).map_err(sim_err)?;
            let times = uniform_times(t_final, snapshots.unwrap_or(crate::config::DEFAULT_SNAPSHOTS));
            let report = stability_check(&a, &b, kernel, t_final, &times, opts).map_err(sim_err)?;
            let mut csv = String::from("t,distance,ratio\n");
            for k in 0..report.times.len() {
                writeln!(csv, "{}", row(&[report.times[k], report.distances[k], report.ratios[k]])).unwrap();
            }
            let ta = simulate(&a, kernel, t_final, &times, opts).map_err(sim_err)?;
            let tb = simulate(&a, kernel, t_final, &times, opts).map_err(sim_err)?;
            let same = trajectory_distances(&ta, &tb)
                .map_err(sim_err)?
                .into_iter()
                .fold(0.0, f64::max);
            Ok(StudyOutput {
                csv,
                criteria: vec![
                    Criterion::at_most("c_hat_below_ceiling", report.c_hat, report.ceiling, true),
                    Criterion::at_most("identical_inputs_distance", same, 0.0, true),
                ],
            })
        }
        StudyConfig::TimeLipschitz { cdf, n, snapshots } => {
            let times = uniform_times(t_final, snapshots.unwrap_or(crate::config::DEFAULT_SNAPSHOTS));
            let traj = particle_run(cdf, *n, kernel, t_final, &times, opts.dt).map_err(sim_err)?;
            let report = time_lipschitz_check(&traj, kernel, t_final).map_err(sim_err)?;
            let mut csv = String::from("t,l1_to_previous,ratio_to_previous\n");
            for w in traj.windows(2) {
                let d = w[0].empirical_cdf().l1_distance(&w[1].empirical_cdf()).map_err(sim_err)?;
                let dt = w[1].t() - w[0].t();
                writeln!(csv, "{}", row(&[w[1].t(), d, d / dt])).unwrap();
            }
            Ok(StudyOutput {
                csv,
                criteria: vec![Criterion::at_most(
                    "ratio_below_constant",
                    report.max_ratio,
                    1.05 * report.constant,
                    true,
                )],
            })
        }
    }
}

pub fn cmd_study(manifest: &Path, output_dir: Option<&Path>) -> Outcome<(PathBuf, bool)> {
    let (cfg, _) = load_config(manifest)?;
    if cfg.study.is_empty() {
        return Err(Failure::new(
            EXIT_CONFIG,
            format!("{}:1: manifest has no [[study]] entries", manifest.display()),
        ));
    }
    let kernel = cfg.build_kernel().map_err(|m| Failure::new(EXIT_CONFIG, m))?;
    let norm = cfg.normalized();
    let opts = norm.sim_options();
    let out = output_dir.map_or_else(|| cfg.output_dir(manifest), Path::to_path_buf);
    prepare_dir(&out, EXIT_SIMULATION)?;
    let mut normalized = norm.clone();
    normalized.output_dir = Some(PathBuf::from("."));
    fs::write(out.join("config.toml"), normalized.to_toml())
        .map_err(|e| Failure::new(EXIT_SIMULATION, e.to_string()))?;

    let mut studies = Vec::new();
    for (index, study) in norm.study.iter().enumerate() {
        info!("study {index}: {}", study.kind());
        let result = run_study(study, &kernel, norm.t_final, &opts)?;
        let name = format!("study_{index:02}_{}.csv", study.kind());
        fs::write(out.join(&name), &result.csv).map_err(|e| Failure::new(EXIT_SIMULATION, e.to_string()))?;
        for c in result.criteria.iter().filter(|c| !c.pass) {
            if c.hard {
                warn!("study {index}: {} failed ({} vs {})", c.name, c.value, c.threshold);
            } else {
                warn!("study {index}: soft criterion {} not met ({} vs {})", c.name, c.value, c.threshold);
            }
        }
        let pass = result.criteria.iter().all(|c| c.pass || !c.hard);
        studies.push(StudySummary {
            index,
            kind: study.kind().into(),
            csv: name,
            criteria: result.criteria,
            pass,
        });
    }
    let pass = studies.iter().all(|s| s.pass);
    let summary = Summary { studies, pass };
    let path = out.join("summary.json");
    let mut w = create(&path, EXIT_SIMULATION)?;
    serde_json::to_writer_pretty(&mut w, &summary).map_err(|e| Failure::new(EXIT_SIMULATION, e.to_string()))?;
    std::io::Write::flush(&mut w).map_err(|e| Failure::new(EXIT_SIMULATION, e.to_string()))?;
    if !pass {
        return Err(Failure::new(
            EXIT_STUDY,
            format!("hard study criteria failed; see {}", path.display()),
        ));
    }
    Ok((out, pass))
}
