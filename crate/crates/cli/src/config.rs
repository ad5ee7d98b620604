//! TOML run configuration and study manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use opinion_flow::dynamics::{uniform_times, ParticleState, SimOptions};
use opinion_flow::experiments::{initial_data_from_cdf, InitialCdf};
use opinion_flow::measures::{Kernel, KernelFamily};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SNAPSHOTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_particles: Option<usize>,
    pub t_final: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub kernel: KernelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub study: Vec<StudyConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: KernelFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// Unit weights, equally spaced on `[lo, hi]` (both ends included).
    Uniform {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lo: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hi: Option<f64>,
    },
    Explicit {
        x: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<Vec<f64>>,
    },
    FromCdf { cdf: InitialCdf },
}

/// Kruzkov battery: every `α` against every window and anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub alphas: Vec<f64>,
    /// `[sigma, tau, delta, epsilon]` rows.
    #[serde(default)]
    pub windows: Vec<[f64; 4]>,
    /// `[s, y]` anchor points; defaults to `[T/2, 0]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub anchors: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
}

impl VerifyConfig {
    pub fn with_defaults(mut self, t_final: f64) -> Self {
        if self.anchors.is_empty() {
            self.anchors.push([0.5 * t_final, 0.0]);
        }
        self.radius.get_or_insert(1.0);
        self.rel_tol.get_or_insert(opinion_flow::entropy::ENTROPY_REL_TOL);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StudyConfig {
    Converge {
        cdf: InitialCdf,
        ns: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_ref: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        snapshots: Option<usize>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        dxs: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_final_distance: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_r_squared: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_slope: Option<f64>,
    },
    Stability {
        cdf: InitialCdf,
        perturbed: InitialCdf,
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        snapshots: Option<usize>,
    },
    TimeLipschitz {
        cdf: InitialCdf,
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        snapshots: Option<usize>,
    },
}

impl StudyConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            StudyConfig::Converge { .. } => "converge",
            StudyConfig::Stability { .. } => "stability",
            StudyConfig::TimeLipschitz { .. } => "time_lipschitz",
        }
    }
}

/// A configuration problem, located at a 1-based line of the source.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub column: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn render(&self, path: &Path) -> String {
        match self.column {
            Some(c) => format!("{}:{}:{}: {}", path.display(), self.line, c, self.message),
            None => format!("{}:{}: {}", path.display(), self.line, self.message),
        }
    }
}

/// Line of the first `key = ...` inside `[table]` (or at top level when
/// `table` is empty). Falls back to the table header, then to line 1.
pub fn locate(src: &str, table: &str, key: &str) -> usize {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == table && header.is_none() {
                header = Some(i + 1);
            }
            continue;
        }
        if current != table || key.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return i + 1;
            }
        }
    }
    header.unwrap_or(1)
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, col)
}

impl Config {
    pub fn parse(src: &str) -> Result<Config, ConfigError> {
        let cfg: Config = toml::from_str(src).map_err(|e| {
            let (line, column) = e.span().map_or((1, 1), |s| line_col(src, s.start));
            ConfigError {
                line,
                column: Some(column),
                message: e.message().trim().to_string(),
            }
        })?;
        cfg.validate(src)?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    fn validate(&self, src: &str) -> Result<(), ConfigError> {
        let err = |table: &str, key: &str, message: String| ConfigError {
            line: locate(src, table, key),
            column: None,
            message,
        };
        if self.schema_version != SCHEMA_VERSION {
            return Err(err(
                "",
                "schema_version",
                format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(err("", "t_final", format!("t_final must be positive, got {}", self.t_final)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt <= self.t_final) {
                return Err(err("", "dt", format!("dt must lie in (0, t_final], got {dt}")));
            }
        }
        for (key, v) in [("gap_tol", self.gap_tol), ("event_tol", self.event_tol)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(err("", key, format!("{key} must be positive, got {v}")));
                }
            }
        }
        if let Some(&t) = self.snapshots.iter().find(|t| !(**t >= 0.0 && **t <= self.t_final)) {
            return Err(err("", "snapshots", format!("snapshot time {t} outside [0, t_final]")));
        }
        if self.n_particles == Some(0) {
            return Err(err("", "n_particles", "n_particles must be at least 1".into()));
        }
        self.build_kernel().map_err(|m| err("kernel", "radius", m))?;
        if let Some(init) = &self.initial {
            let n = self.n_particles.unwrap_or(0);
            match init {
                InitialConfig::Uniform { lo, hi } => {
                    let (lo, hi) = (lo.unwrap_or(-1.0), hi.unwrap_or(1.0));
                    if !(lo < hi) && n > 1 {
                        return Err(err("initial", "hi", format!("uniform range needs lo < hi, got [{lo}, {hi}]")));
                    }
                }
                InitialConfig::Explicit { x, m } => {
                    if self.n_particles.is_some() && x.len() != n {
                        return Err(err("initial", "x", format!("x has {} entries but n_particles = {n}", x.len())));
                    }
                    if let Some(m) = m {
                        if m.len() != x.len() {
                            return Err(err("initial", "m", format!("m has {} entries but x has {}", m.len(), x.len())));
                        }
                        if let Some((i, v)) = m.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
                            return Err(err("initial", "m", format!("weights must be positive (m[{i}] = {v})")));
                        }
                    }
                    if x.windows(2).any(|w| !(w[0] < w[1])) || x.iter().any(|v| !v.is_finite()) {
                        return Err(err("initial", "x", "positions must be finite and strictly increasing".into()));
                    }
                }
                InitialConfig::FromCdf { cdf } => {
                    cdf.validate().map_err(|e| err("initial.cdf", "kind", e.to_string()))?;
                }
            }
        }
        if let Some(v) = &self.verify {
            if let Some(w) = v.windows.iter().find(|w| !(w[0] <= w[1] && w[2] > 0.0 && w[3] > 0.0)) {
                return Err(err("verify", "windows", format!("invalid window {w:?}: need sigma <= tau, delta > 0, epsilon > 0")));
            }
        }
        for (i, s) in self.study.iter().enumerate() {
            let header = locate_nth_array_table(src, "study", i);
            let bad = |message: String| ConfigError { line: header, column: None, message };
            match s {
                StudyConfig::Converge { cdf, ns, n_ref, dxs, .. } => {
                    cdf.validate().map_err(|e| bad(e.to_string()))?;
                    if ns.is_empty() || ns.contains(&0) || *n_ref == Some(0) {
                        return Err(bad("converge study needs non-empty positive ns".into()));
                    }
                    if dxs.iter().any(|d| !(*d > 0.0)) {
                        return Err(bad("cell widths must be positive".into()));
                    }
                }
                StudyConfig::Stability { cdf, perturbed, n, .. } => {
                    cdf.validate().map_err(|e| bad(e.to_string()))?;
                    perturbed.validate().map_err(|e| bad(e.to_string()))?;
                    if *n == 0 {
                        return Err(bad("n must be at least 1".into()));
                    }
                }
                StudyConfig::TimeLipschitz { cdf, n, .. } => {
                    cdf.validate().map_err(|e| bad(e.to_string()))?;
                    if *n == 0 {
                        return Err(bad("n must be at least 1".into()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn build_kernel(&self) -> Result<Kernel, String> {
        let k = &self.kernel;
        match k.family {
            KernelFamily::Zero => Ok(Kernel::zero()),
            KernelFamily::OddBump => {
                let kappa = k.kappa.ok_or("odd_bump kernel needs kappa")?;
                let radius = k.radius.ok_or("odd_bump kernel needs radius")?;
                Kernel::odd_bump(kappa, radius).map_err(|e| e.to_string())
            }
        }
    }

    pub fn sim_options(&self) -> SimOptions {
        let d = SimOptions::for_horizon(self.t_final);
        SimOptions {
            dt: self.dt.unwrap_or(d.dt),
            gap_tol: self.gap_tol.unwrap_or(d.gap_tol),
            event_tol: self.event_tol.unwrap_or(d.event_tol),
            max_events: d.max_events,
        }
    }

    /// Copy with every defaulted field filled in.
    pub fn normalized(&self) -> Config {
        let mut c = self.clone();
        let o = self.sim_options();
        c.dt = Some(o.dt);
        c.gap_tol = Some(o.gap_tol);
        c.event_tol = Some(o.event_tol);
        if c.snapshots.is_empty() {
            c.snapshots = uniform_times(c.t_final, DEFAULT_SNAPSHOTS);
        }
        c.snapshots.sort_by(f64::total_cmp);
        c.snapshots.dedup();
        if c.kernel.family == KernelFamily::Zero {
            c.kernel.kappa = None;
            c.kernel.radius = None;
        }
        match &mut c.initial {
            Some(InitialConfig::Uniform { lo, hi }) => {
                lo.get_or_insert(-1.0);
                hi.get_or_insert(1.0);
            }
            Some(InitialConfig::Explicit { x, m }) => {
                m.get_or_insert_with(|| vec![1.0; x.len()]);
                if c.n_particles.is_none() {
                    c.n_particles = Some(x.len());
                }
            }
            _ => {}
        }
        c.verify = c.verify.map(|v| v.with_defaults(c.t_final));
        for s in &mut c.study {
            match s {
                StudyConfig::Converge { ns, n_ref, snapshots, .. } => {
                    ns.sort_unstable();
                    ns.dedup();
                    n_ref.get_or_insert(2 * ns.last().copied().unwrap_or(1));
                    snapshots.get_or_insert(DEFAULT_SNAPSHOTS);
                }
                StudyConfig::Stability { snapshots, .. } | StudyConfig::TimeLipschitz { snapshots, .. } => {
                    snapshots.get_or_insert(DEFAULT_SNAPSHOTS);
                }
            }
        }
        c
    }

    /// Initial particle state for `simulate`.
    pub fn initial_state(&self, src: &str) -> Result<ParticleState, ConfigError> {
        let missing = |key: &str| ConfigError {
            line: 1,
            column: None,
            message: format!("missing field `{key}`"),
        };
        let init = self.initial.as_ref().ok_or_else(|| missing("initial"))?;
        let n = match (self.n_particles, init) {
            (Some(n), _) => n,
            (None, InitialConfig::Explicit { x, .. }) => x.len(),
            (None, _) => return Err(missing("n_particles")),
        };
        let state = match init {
            InitialConfig::Uniform { lo, hi } => {
                let (lo, hi) = (lo.unwrap_or(-1.0), hi.unwrap_or(1.0));
                let x = if n == 1 {
                    vec![0.5 * (lo + hi)]
                } else {
                    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
                };
                ParticleState::with_unit_weights(x)
            }
            InitialConfig::Explicit { x, m } => {
                ParticleState::new(x.clone(), m.clone().unwrap_or_else(|| vec![1.0; x.len()]))
            }
            InitialConfig::FromCdf { cdf } => initial_data_from_cdf(cdf, n),
        };
        state.map_err(|e| ConfigError {
            line: locate(src, "initial", "mode"),
            column: None,
            message: e.to_string(),
        })
    }

    /// Output directory, resolved against the directory of the config file.
    pub fn output_dir(&self, config_path: &Path) -> PathBuf {
        let dir = self.output_dir.clone().unwrap_or_else(|| PathBuf::from("output"));
        if dir.is_absolute() {
            dir
        } else {
            config_path.parent().unwrap_or(Path::new(".")).join(dir)
        }
    }
}

fn locate_nth_array_table(src: &str, name: &str, n: usize) -> usize {
    let header = format!("[[{name}]]");
    src.lines()
        .enumerate()
        .filter(|(_, l)| l.trim() == header)
        .nth(n)
        .map_or(1, |(i, _)| i + 1)
}
