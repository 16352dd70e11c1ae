//! Plain-text `key = value` run configuration with `[section]` headers,
//! full validation against the model hypotheses (violations cite the
//! hypothesis tag, e.g. `[H5]`), defaults for every field, and canonical
//! re-emission such that parsing the emitted text reproduces the effective
//! configuration exactly.

use crate::grid::Grid;
use crate::init;
use crate::io::read_snapshot;
use crate::potential::{Potential, PotentialKind};
use crate::source::SourceSpec;
use crate::stepper::{Coupling, HInterp, PhysParams, SimState, StepperConfig};
use crate::{MacVelocity, ScalarField};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("bad value for {section}.{key} (line {line}): {msg}")]
    BadValue {
        section: String,
        key: String,
        line: usize,
        msg: String,
    },
    #[error("{tag} violated: {msg}")]
    Hypothesis { tag: &'static str, msg: String },
    #[error("unknown key {section}.{key} (line {line})")]
    UnknownKey {
        section: String,
        key: String,
        line: usize,
    },
    #[error("unknown section [{section}] (line {line})")]
    UnknownSection { section: String, line: usize },
    #[error("snapshot load failed for {path}: {msg}")]
    Snapshot { path: PathBuf, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiPreset {
    Spinodal,
    Stripe,
    Constant,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaPreset {
    Constant,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityPreset {
    Zero,
    Vortex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotFormat {
    None,
    Ascii,
    Binary,
}

/// Initial-condition section.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialConfig {
    pub phi: PhiPreset,
    pub phi_mean: f64,
    pub phi_amp: f64,
    pub phi_value: f64,
    pub phi_file: Option<PathBuf>,
    pub stripe_width: f64,
    pub sigma: SigmaPreset,
    pub sigma_value: f64,
    pub sigma_file: Option<PathBuf>,
    pub velocity: VelocityPreset,
    pub vortex_amplitude: f64,
    pub seed: u64,
}

/// Output section.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Snapshot cadence in accepted steps (0 disables snapshots).
    pub cadence: usize,
    pub snapshots: SnapshotFormat,
    pub heatmaps: bool,
}

/// Optional experiment section.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: Grid,
    pub params: PhysParams,
    pub stepper: StepperConfig,
    pub n_steps: usize,
    pub initial: InitialConfig,
    pub output: OutputConfig,
    pub experiment: Option<ExperimentConfig>,
}

struct RawValue {
    value: String,
    line: usize,
}

struct Section {
    line: usize,
    entries: BTreeMap<String, RawValue>,
}

fn parse_raw(text: &str) -> Result<BTreeMap<String, Section>, ConfigError> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (lineno, raw_line) in text.lines().enumerate() {
        let line_number = lineno + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return Err(ConfigError::Syntax {
                    line: line_number,
                    col: raw_line.len(),
                    msg: "unterminated section header (missing ']')".into(),
                });
            };
            let name = name.trim().to_ascii_lowercase();
            if name.is_empty() {
                return Err(ConfigError::Syntax {
                    line: line_number,
                    col: 1,
                    msg: "empty section name".into(),
                });
            }
            sections.entry(name.clone()).or_insert(Section {
                line: line_number,
                entries: BTreeMap::new(),
            });
            current = Some(name);
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(ConfigError::Syntax {
                line: line_number,
                col: raw_line.find(line).unwrap_or(0) + 1,
                msg: format!("expected 'key = value', got {line:?}"),
            });
        };
        let key = line[..eq].trim().to_ascii_lowercase();
        let value = line[eq + 1..].trim().to_string();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line: line_number,
                col: 1,
                msg: "empty key".into(),
            });
        }
        let Some(section_name) = &current else {
            return Err(ConfigError::Syntax {
                line: line_number,
                col: 1,
                msg: format!("key {key:?} before any [section] header"),
            });
        };
        let section = sections.get_mut(section_name).unwrap();
        if section
            .entries
            .insert(key.clone(), RawValue { value, line: line_number })
            .is_some()
        {
            return Err(ConfigError::Syntax {
                line: line_number,
                col: 1,
                msg: format!("duplicate key {key:?} in [{section_name}]"),
            });
        }
    }
    Ok(sections)
}

/// Cursor over one section that tracks which keys were consumed.
struct SectionReader<'a> {
    name: &'a str,
    section: Option<&'a Section>,
    taken: BTreeSet<String>,
}

impl<'a> SectionReader<'a> {
    fn new(sections: &'a BTreeMap<String, Section>, name: &'a str) -> Self {
        Self {
            name,
            section: sections.get(name),
            taken: BTreeSet::new(),
        }
    }

    fn raw(&mut self, key: &str) -> Option<(&'a str, usize)> {
        self.taken.insert(key.to_string());
        self.section
            .and_then(|s| s.entries.get(key))
            .map(|rv| (rv.value.as_str(), rv.line))
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some((text, line)) => text.parse().map_err(|_| ConfigError::BadValue {
                section: self.name.to_string(),
                key: key.to_string(),
                line,
                msg: format!(
                    "cannot parse {text:?} as {}",
                    std::any::type_name::<T>()
                ),
            }),
        }
    }

    fn parse_opt<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((text, line)) => text.parse().map(Some).map_err(|_| ConfigError::BadValue {
                section: self.name.to_string(),
                key: key.to_string(),
                line,
                msg: format!("cannot parse {text:?}"),
            }),
        }
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(("true", _)) | Some(("yes", _)) | Some(("1", _)) => Ok(true),
            Some(("false", _)) | Some(("no", _)) | Some(("0", _)) => Ok(false),
            Some((other, line)) => Err(ConfigError::BadValue {
                section: self.name.to_string(),
                key: key.to_string(),
                line,
                msg: format!("expected true/false, got {other:?}"),
            }),
        }
    }

    fn string(&mut self, key: &str, default: &str) -> String {
        self.raw(key)
            .map(|(v, _)| v.to_string())
            .unwrap_or_else(|| default.to_string())
    }

    fn bad(&self, key: &str, line: usize, msg: String) -> ConfigError {
        ConfigError::BadValue {
            section: self.name.to_string(),
            key: key.to_string(),
            line,
            msg,
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some(section) = self.section {
            for (key, rv) in &section.entries {
                if !self.taken.contains(key) {
                    return Err(ConfigError::UnknownKey {
                        section: self.name.to_string(),
                        key: key.clone(),
                        line: rv.line,
                    });
                }
            }
        }
        Ok(())
    }
}

const SECTIONS: &[&str] = &[
    "grid",
    "physics",
    "potential",
    "initial",
    "stepper",
    "output",
    "experiment",
];

pub fn parse_str(text: &str) -> Result<RunConfig, ConfigError> {
    let sections = parse_raw(text)?;
    for (name, section) in &sections {
        if !SECTIONS.contains(&name.as_str()) {
            return Err(ConfigError::UnknownSection {
                section: name.clone(),
                line: section.line,
            });
        }
    }

    // [grid]
    let mut grid_r = SectionReader::new(&sections, "grid");
    let nx: usize = grid_r.parse("nx", 64)?;
    let ny: usize = grid_r.parse("ny", 64)?;
    let lx: f64 = grid_r.parse("lx", 1.0)?;
    let ly: f64 = grid_r.parse("ly", 1.0)?;
    if nx < 4 || ny < 4 {
        return Err(ConfigError::Hypothesis {
            tag: "[grid]",
            msg: format!("cell counts must be at least 4, got {nx}x{ny}"),
        });
    }
    if !(lx > 0.0 && ly > 0.0) {
        return Err(ConfigError::Hypothesis {
            tag: "[grid]",
            msg: format!("side lengths must be positive, got {lx}x{ly}"),
        });
    }
    grid_r.finish()?;
    let grid = Grid::new(nx, ny, lx, ly);

    // [potential]
    let mut pot_r = SectionReader::new(&sections, "potential");
    let kind_text = pot_r.string("kind", "logarithmic");
    let theta: f64 = pot_r.parse("theta", 0.8)?;
    let theta0: f64 = pot_r.parse("theta0", 1.6)?;
    let eps_barrier: f64 = pot_r.parse("eps_barrier", 1e-12)?;
    let kind = match kind_text.as_str() {
        "logarithmic" | "log" => PotentialKind::Logarithmic,
        "quartic" | "polynomial" => PotentialKind::Quartic,
        other => {
            let line = sections
                .get("potential")
                .and_then(|s| s.entries.get("kind"))
                .map_or(0, |rv| rv.line);
            return Err(pot_r.bad("kind", line, format!("unknown potential kind {other:?}")));
        }
    };
    if theta <= 0.0 {
        return Err(ConfigError::Hypothesis {
            tag: "[H2]",
            msg: format!("potential temperature theta must be positive, got {theta}"),
        });
    }
    if !(eps_barrier > 0.0 && eps_barrier <= 1e-6) {
        return Err(ConfigError::Hypothesis {
            tag: "[H2]",
            msg: format!("eps_barrier must lie in (0, 1e-6], got {eps_barrier}"),
        });
    }
    pot_r.finish()?;
    let potential = match kind {
        PotentialKind::Logarithmic => {
            Potential::logarithmic(theta, theta0).with_barrier(eps_barrier)
        }
        PotentialKind::Quartic => Potential::quartic().with_barrier(eps_barrier),
    };

    // [physics]
    let mut phys_r = SectionReader::new(&sections, "physics");
    let a: f64 = phys_r.parse("a", 1.0)?;
    let b: f64 = phys_r.parse("b", 0.01)?;
    let chi: f64 = phys_r.parse("chi", 0.0)?;
    let lambda: f64 = phys_r.parse_opt("lambda")?.unwrap_or(chi);
    let alpha: f64 = phys_r.parse("alpha", 0.0)?;
    let c0: f64 = phys_r.parse("c0", 0.0)?;
    let consumption: f64 = phys_r.parse("consumption", 0.0)?;
    let eta1: f64 = phys_r.parse("eta1", 1.0)?;
    let eta2: f64 = phys_r.parse("eta2", 1.0)?;
    let h_kind_text = phys_r.string("h_kind", "linear");
    let h_interp = match h_kind_text.as_str() {
        "linear" => HInterp::LinearClamped,
        "smoothstep" => HInterp::SmoothStep,
        other => {
            let line = sections
                .get("physics")
                .and_then(|s| s.entries.get("h_kind"))
                .map_or(0, |rv| rv.line);
            return Err(phys_r.bad("h_kind", line, format!("unknown h interpolation {other:?}")));
        }
    };
    let source_kind = phys_r.string("source", "zero");
    let source = match source_kind.as_str() {
        "zero" => SourceSpec::Zero,
        "constant" => SourceSpec::Constant {
            value: phys_r.parse("source_value", 0.0)?,
        },
        "gaussian" => SourceSpec::GaussianBump {
            amplitude: phys_r.parse("source_amplitude", 1.0)?,
            x0: phys_r.parse("source_x0", lx / 2.0)?,
            y0: phys_r.parse("source_y0", ly / 2.0)?,
            sigma: phys_r.parse("source_sigma", 0.1 * lx.min(ly))?,
            t_decay: phys_r.parse("source_decay", 0.0)?,
        },
        "tabulated" => {
            let (text, line) = phys_r.raw("source_table").ok_or(ConfigError::Hypothesis {
                tag: "[H4]",
                msg: "tabulated source requires source_table = t0:v0, t1:v1, ...".into(),
            })?;
            let mut times = Vec::new();
            let mut values = Vec::new();
            for part in text.split(',') {
                let part = part.trim();
                let Some((ts, vs)) = part.split_once(':') else {
                    return Err(phys_r.bad(
                        "source_table",
                        line,
                        format!("expected time:value pairs, got {part:?}"),
                    ));
                };
                let t: f64 = ts.trim().parse().map_err(|_| {
                    phys_r.bad("source_table", line, format!("bad time {ts:?}"))
                })?;
                let v: f64 = vs.trim().parse().map_err(|_| {
                    phys_r.bad("source_table", line, format!("bad value {vs:?}"))
                })?;
                times.push(t);
                values.push(v);
            }
            if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(phys_r.bad(
                    "source_table",
                    line,
                    "need strictly increasing, non-empty time grid".into(),
                ));
            }
            SourceSpec::Tabulated { times, values }
        }
        other => {
            let line = sections
                .get("physics")
                .and_then(|s| s.entries.get("source"))
                .map_or(0, |rv| rv.line);
            return Err(phys_r.bad("source", line, format!("unknown source kind {other:?}")));
        }
    };
    phys_r.finish()?;

    let params = PhysParams {
        a,
        b,
        chi,
        lambda,
        alpha,
        c0,
        consumption,
        eta1,
        eta2,
        h_interp,
        potential,
        source,
    };
    if let Err(msg) = params.validate() {
        let tag = if msg.starts_with("[H1]") {
            "[H1]"
        } else if msg.starts_with("[H2]") {
            "[H2]"
        } else if msg.starts_with("[H5]") {
            "[H5]"
        } else {
            "[params]"
        };
        return Err(ConfigError::Hypothesis {
            tag,
            msg: msg.trim_start_matches(tag).trim().to_string(),
        });
    }

    // [initial]
    let mut init_r = SectionReader::new(&sections, "initial");
    let phi_preset_text = init_r.string("phi", "spinodal");
    let phi = match phi_preset_text.as_str() {
        "spinodal" => PhiPreset::Spinodal,
        "stripe" => PhiPreset::Stripe,
        "constant" => PhiPreset::Constant,
        "file" => PhiPreset::File,
        other => {
            let line = sections
                .get("initial")
                .and_then(|s| s.entries.get("phi"))
                .map_or(0, |rv| rv.line);
            return Err(init_r.bad("phi", line, format!("unknown phi preset {other:?}")));
        }
    };
    let initial = InitialConfig {
        phi,
        phi_mean: init_r.parse("phi_mean", 0.0)?,
        phi_amp: init_r.parse("phi_amp", 0.05)?,
        phi_value: init_r.parse("phi_value", 0.0)?,
        phi_file: init_r.parse_opt::<PathBuf>("phi_file")?,
        stripe_width: init_r.parse("stripe_width", 0.05 * ly)?,
        sigma: match init_r.string("sigma", "constant").as_str() {
            "constant" => SigmaPreset::Constant,
            "file" => SigmaPreset::File,
            other => {
                let line = sections
                    .get("initial")
                    .and_then(|s| s.entries.get("sigma"))
                    .map_or(0, |rv| rv.line);
                return Err(init_r.bad("sigma", line, format!("unknown sigma preset {other:?}")));
            }
        },
        sigma_value: init_r.parse("sigma_value", 0.0)?,
        sigma_file: init_r.parse_opt::<PathBuf>("sigma_file")?,
        velocity: match init_r.string("velocity", "zero").as_str() {
            "zero" => VelocityPreset::Zero,
            "vortex" => VelocityPreset::Vortex,
            other => {
                let line = sections
                    .get("initial")
                    .and_then(|s| s.entries.get("velocity"))
                    .map_or(0, |rv| rv.line);
                return Err(init_r.bad(
                    "velocity",
                    line,
                    format!("unknown velocity preset {other:?}"),
                ));
            }
        },
        vortex_amplitude: init_r.parse("vortex_amplitude", 0.1)?,
        seed: init_r.parse("seed", 42u64)?,
    };
    // Admissibility of the named presets (hard errors, before any sampling).
    let phi_mean_estimate = match initial.phi {
        PhiPreset::Spinodal => initial.phi_mean,
        PhiPreset::Constant => initial.phi_value,
        PhiPreset::Stripe => {
            // Band of +amp over one third of the height, -amp elsewhere.
            -initial.phi_amp / 3.0
        }
        PhiPreset::File => 0.0, // checked against the actual field on load
    };
    if initial.phi != PhiPreset::File && phi_mean_estimate.abs() >= 1.0 {
        return Err(ConfigError::Hypothesis {
            tag: "[2main]",
            msg: format!(
                "initial phase mean must satisfy |mean(phi0)| < 1, preset gives {phi_mean_estimate}"
            ),
        });
    }
    if params.potential.is_singular() {
        let sup = match initial.phi {
            PhiPreset::Spinodal => initial.phi_mean.abs() + initial.phi_amp,
            PhiPreset::Constant => initial.phi_value.abs(),
            PhiPreset::Stripe => initial.phi_amp.abs(),
            PhiPreset::File => 0.0,
        };
        if sup > 1.0 {
            return Err(ConfigError::Hypothesis {
                tag: "[2main]",
                msg: format!(
                    "initial phase field must satisfy ||phi0||_inf <= 1, preset gives sup {sup}"
                ),
            });
        }
    }
    init_r.finish()?;

    // [stepper]
    let mut step_r = SectionReader::new(&sections, "stepper");
    let dt_text = step_r.string("dt", "auto");
    let dt = if dt_text == "auto" {
        StepperConfig::default_dt(grid, &params)
    } else {
        dt_text.parse::<f64>().map_err(|_| {
            let line = sections
                .get("stepper")
                .and_then(|s| s.entries.get("dt"))
                .map_or(0, |rv| rv.line);
            step_r.bad("dt", line, format!("expected number or 'auto', got {dt_text:?}"))
        })?
    };
    if !(dt > 0.0) {
        return Err(ConfigError::Hypothesis {
            tag: "[stepper]",
            msg: format!("dt must be positive, got {dt}"),
        });
    }
    let n_steps: usize = step_r.parse("n_steps", 100)?;
    let coupling_text = step_r.string("coupling", "sequential");
    let picard_kmax: usize = step_r.parse("picard_kmax", 1)?;
    let picard_tol: f64 = step_r.parse("picard_tol", 1e-10)?;
    let coupling = match coupling_text.as_str() {
        "sequential" => Coupling::Sequential,
        "picard" => {
            if picard_kmax < 1 {
                return Err(ConfigError::Hypothesis {
                    tag: "[stepper]",
                    msg: "picard_kmax must be at least 1".into(),
                });
            }
            Coupling::Picard {
                k_max: picard_kmax,
                tol: picard_tol,
            }
        }
        other => {
            let line = sections
                .get("stepper")
                .and_then(|s| s.entries.get("coupling"))
                .map_or(0, |rv| rv.line);
            return Err(step_r.bad("coupling", line, format!("unknown coupling {other:?}")));
        }
    };
    let stepper = StepperConfig {
        dt,
        dt_min: step_r.parse("dt_min", dt * 1e-6)?,
        dt_max: step_r.parse("dt_max", dt)?,
        cfl_max: step_r.parse("cfl_max", 0.5)?,
        adapt_dt: step_r.bool("adapt_dt", false)?,
        newton_tol: step_r.parse("newton_tol", 1e-8)?,
        max_newton: step_r.parse("max_newton", 50)?,
        projection_tol: step_r.parse("projection_tol", 1e-9)?,
        linear_tol: step_r.parse("linear_tol", 1e-11)?,
        coupling,
        upwind: step_r.bool("upwind", false)?,
        disable_sigma: step_r.bool("disable_sigma", false)?,
    };
    step_r.finish()?;

    // [output]
    let mut out_r = SectionReader::new(&sections, "output");
    let output = OutputConfig {
        dir: out_r.parse("dir", default_output_dir())?,
        cadence: out_r.parse("cadence", 0usize)?,
        snapshots: match out_r.string("snapshots", "none").as_str() {
            "none" => SnapshotFormat::None,
            "ascii" => SnapshotFormat::Ascii,
            "binary" => SnapshotFormat::Binary,
            other => {
                let line = sections
                    .get("output")
                    .and_then(|s| s.entries.get("snapshots"))
                    .map_or(0, |rv| rv.line);
                return Err(out_r.bad(
                    "snapshots",
                    line,
                    format!("expected none/ascii/binary, got {other:?}"),
                ));
            }
        },
        heatmaps: out_r.bool("heatmaps", false)?,
    };
    out_r.finish()?;

    // [experiment]
    let mut exp_r = SectionReader::new(&sections, "experiment");
    let exp_name = exp_r.string("name", "");
    let exp_seed: u64 = exp_r.parse("seed", initial.seed)?;
    exp_r.finish()?;
    let experiment = if exp_name.is_empty() {
        None
    } else {
        Some(ExperimentConfig {
            name: exp_name,
            seed: exp_seed,
        })
    };

    Ok(RunConfig {
        grid,
        params,
        stepper,
        n_steps,
        initial,
        output,
        experiment,
    })
}

pub fn parse_file(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_str(&text)
}

/// Default output directory: `CHNS_OUT_DIR` environment variable, falling
/// back to `./out`.
pub fn default_output_dir() -> PathBuf {
    std::env::var_os("CHNS_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

impl RunConfig {
    /// Total simulated horizon.
    pub fn t_end(&self) -> f64 {
        self.n_steps as f64 * self.stepper.dt
    }

    /// Build the initial state from the presets (or snapshot files).
    /// Returns admissibility warnings alongside.
    pub fn build_initial_state(&self) -> Result<(SimState, Vec<String>), ConfigError> {
        let grid = self.grid;
        let phi = match self.initial.phi {
            PhiPreset::Spinodal => init::spinodal_phi(
                grid,
                self.initial.phi_mean,
                self.initial.phi_amp,
                self.initial.seed,
            ),
            PhiPreset::Stripe => {
                init::stripe_phi(grid, self.initial.phi_amp, self.initial.stripe_width)
            }
            PhiPreset::Constant => ScalarField::constant(grid, self.initial.phi_value),
            PhiPreset::File => {
                let path = self.initial.phi_file.as_ref().ok_or(ConfigError::Hypothesis {
                    tag: "[initial]",
                    msg: "phi = file requires phi_file".into(),
                })?;
                let snap = read_snapshot(path).map_err(|e| ConfigError::Snapshot {
                    path: path.clone(),
                    msg: e.to_string(),
                })?;
                if snap.field.grid != grid {
                    return Err(ConfigError::Snapshot {
                        path: path.clone(),
                        msg: format!(
                            "snapshot grid {}x{} does not match configured {}x{}",
                            snap.field.grid.nx, snap.field.grid.ny, grid.nx, grid.ny
                        ),
                    });
                }
                snap.field
            }
        };
        let sigma = match self.initial.sigma {
            SigmaPreset::Constant => ScalarField::constant(grid, self.initial.sigma_value),
            SigmaPreset::File => {
                let path = self
                    .initial
                    .sigma_file
                    .as_ref()
                    .ok_or(ConfigError::Hypothesis {
                        tag: "[initial]",
                        msg: "sigma = file requires sigma_file".into(),
                    })?;
                let snap = read_snapshot(path).map_err(|e| ConfigError::Snapshot {
                    path: path.clone(),
                    msg: e.to_string(),
                })?;
                snap.field
            }
        };
        let velocity = match self.initial.velocity {
            VelocityPreset::Zero => MacVelocity::zeros(grid),
            VelocityPreset::Vortex => init::vortex_velocity(grid, self.initial.vortex_amplitude),
        };
        SimState::initial(velocity, phi, sigma, &self.params, 0.0).map_err(|e| {
            ConfigError::Hypothesis {
                tag: "[2main]",
                msg: e.to_string(),
            }
        })
    }

    /// Canonical emission of the effective configuration; parsing the result
    /// reproduces `self` exactly.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        let g = self.grid;
        s.push_str("[grid]\n");
        s.push_str(&format!("nx = {}\nny = {}\nlx = {}\nly = {}\n\n", g.nx, g.ny, g.lx, g.ly));

        let p = &self.params;
        s.push_str("[physics]\n");
        s.push_str(&format!("a = {}\nb = {}\nchi = {}\nlambda = {}\n", p.a, p.b, p.chi, p.lambda));
        s.push_str(&format!(
            "alpha = {}\nc0 = {}\nconsumption = {}\neta1 = {}\neta2 = {}\n",
            p.alpha, p.c0, p.consumption, p.eta1, p.eta2
        ));
        s.push_str(&format!(
            "h_kind = {}\n",
            match p.h_interp {
                HInterp::LinearClamped => "linear",
                HInterp::SmoothStep => "smoothstep",
            }
        ));
        match &p.source {
            SourceSpec::Zero => s.push_str("source = zero\n"),
            SourceSpec::Constant { value } => {
                s.push_str(&format!("source = constant\nsource_value = {value}\n"));
            }
            SourceSpec::GaussianBump {
                amplitude,
                x0,
                y0,
                sigma,
                t_decay,
            } => {
                s.push_str(&format!(
                    "source = gaussian\nsource_amplitude = {amplitude}\nsource_x0 = {x0}\nsource_y0 = {y0}\nsource_sigma = {sigma}\nsource_decay = {t_decay}\n"
                ));
            }
            SourceSpec::Tabulated { times, values } => {
                let pairs: Vec<String> = times
                    .iter()
                    .zip(values)
                    .map(|(t, v)| format!("{t}:{v}"))
                    .collect();
                s.push_str(&format!("source = tabulated\nsource_table = {}\n", pairs.join(", ")));
            }
        }
        s.push('\n');

        s.push_str("[potential]\n");
        s.push_str(&format!(
            "kind = {}\ntheta = {}\ntheta0 = {}\neps_barrier = {}\n\n",
            match p.potential.kind {
                PotentialKind::Logarithmic => "logarithmic",
                PotentialKind::Quartic => "quartic",
            },
            p.potential.theta,
            p.potential.theta0,
            p.potential.eps_barrier
        ));

        let ic = &self.initial;
        s.push_str("[initial]\n");
        s.push_str(&format!(
            "phi = {}\n",
            match ic.phi {
                PhiPreset::Spinodal => "spinodal",
                PhiPreset::Stripe => "stripe",
                PhiPreset::Constant => "constant",
                PhiPreset::File => "file",
            }
        ));
        s.push_str(&format!(
            "phi_mean = {}\nphi_amp = {}\nphi_value = {}\nstripe_width = {}\n",
            ic.phi_mean, ic.phi_amp, ic.phi_value, ic.stripe_width
        ));
        if let Some(path) = &ic.phi_file {
            s.push_str(&format!("phi_file = {}\n", path.display()));
        }
        s.push_str(&format!(
            "sigma = {}\nsigma_value = {}\n",
            match ic.sigma {
                SigmaPreset::Constant => "constant",
                SigmaPreset::File => "file",
            },
            ic.sigma_value
        ));
        if let Some(path) = &ic.sigma_file {
            s.push_str(&format!("sigma_file = {}\n", path.display()));
        }
        s.push_str(&format!(
            "velocity = {}\nvortex_amplitude = {}\nseed = {}\n\n",
            match ic.velocity {
                VelocityPreset::Zero => "zero",
                VelocityPreset::Vortex => "vortex",
            },
            ic.vortex_amplitude,
            ic.seed
        ));

        let st = &self.stepper;
        s.push_str("[stepper]\n");
        s.push_str(&format!("dt = {}\nn_steps = {}\n", st.dt, self.n_steps));
        s.push_str(&format!(
            "dt_min = {}\ndt_max = {}\ncfl_max = {}\nadapt_dt = {}\n",
            st.dt_min, st.dt_max, st.cfl_max, st.adapt_dt
        ));
        s.push_str(&format!(
            "newton_tol = {}\nmax_newton = {}\nprojection_tol = {}\nlinear_tol = {}\n",
            st.newton_tol, st.max_newton, st.projection_tol, st.linear_tol
        ));
        match st.coupling {
            Coupling::Sequential => s.push_str("coupling = sequential\n"),
            Coupling::Picard { k_max, tol } => {
                s.push_str(&format!(
                    "coupling = picard\npicard_kmax = {k_max}\npicard_tol = {tol}\n"
                ));
            }
        }
        s.push_str(&format!(
            "upwind = {}\ndisable_sigma = {}\n\n",
            st.upwind, st.disable_sigma
        ));

        let out = &self.output;
        s.push_str("[output]\n");
        s.push_str(&format!(
            "dir = {}\ncadence = {}\nsnapshots = {}\nheatmaps = {}\n",
            out.dir.display(),
            out.cadence,
            match out.snapshots {
                SnapshotFormat::None => "none",
                SnapshotFormat::Ascii => "ascii",
                SnapshotFormat::Binary => "binary",
            },
            out.heatmaps
        ));
        if let Some(exp) = &self.experiment {
            s.push_str(&format!("\n[experiment]\nname = {}\nseed = {}\n", exp.name, exp.seed));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_str("[grid]\nnx = 16\nny = 16\n").unwrap();
        assert_eq!(cfg.grid.nx, 16);
        assert_eq!(cfg.params.a, 1.0);
        assert_eq!(cfg.params.lambda, cfg.params.chi);
        assert!(cfg.stepper.dt > 0.0);
        assert!(cfg.experiment.is_none());
    }

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg = parse_str("").unwrap();
        assert_eq!(cfg.grid.nx, 64);
        assert_eq!(cfg.params.potential.kind, PotentialKind::Logarithmic);
    }

    #[test]
    fn lambda_defaults_to_chi() {
        let cfg = parse_str("[physics]\nchi = 0.4\n").unwrap();
        assert_eq!(cfg.params.lambda, 0.4);
        let cfg2 = parse_str("[physics]\nchi = 0.4\nlambda = 0.1\n").unwrap();
        assert_eq!(cfg2.params.lambda, 0.1);
    }

    #[test]
    fn out_of_range_c0_cites_h5() {
        let err = parse_str("[physics]\nc0 = 1.5\n").unwrap_err();
        match err {
            ConfigError::Hypothesis { tag, .. } => assert_eq!(tag, "[H5]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nonpositive_viscosity_cites_h1() {
        let err = parse_str("[physics]\neta1 = 0\n").unwrap_err();
        match err {
            ConfigError::Hypothesis { tag, .. } => assert_eq!(tag, "[H1]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pure_state_constant_phi_is_rejected() {
        let err = parse_str("[initial]\nphi = constant\nphi_value = 1.0\n").unwrap_err();
        match err {
            ConfigError::Hypothesis { tag, msg } => {
                assert_eq!(tag, "[2main]");
                assert!(msg.contains("mean"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_and_section_are_reported() {
        let err = parse_str("[grid]\nnx = 8\nny = 8\nbogus = 1\n").unwrap_err();
        match err {
            ConfigError::UnknownKey { section, key, line } => {
                assert_eq!(section, "grid");
                assert_eq!(key, "bogus");
                assert_eq!(line, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_str("[nonsense]\nx = 1\n"),
            Err(ConfigError::UnknownSection { .. })
        ));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = parse_str("[grid]\nnx 16\n").unwrap_err();
        match err {
            ConfigError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_str("[grid\nnx = 16\n"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            parse_str("nx = 16\n"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn config_roundtrips_through_emission() {
        let text = "\
[grid]
nx = 24
ny = 16
lx = 2.0
ly = 1.0

[physics]
a = 1.5
b = 0.02
chi = 0.3
alpha = 0.5
c0 = -0.1
eta1 = 1.0
eta2 = 2.0
source = gaussian
source_amplitude = 0.2
source_decay = 1.0

[potential]
kind = logarithmic
theta = 0.9
theta0 = 1.8

[initial]
phi = stripe
phi_amp = 0.8
seed = 7

[stepper]
dt = 0.0005
n_steps = 20
coupling = picard
picard_kmax = 3

[output]
dir = /tmp/run
cadence = 5
snapshots = binary
heatmaps = true

[experiment]
name = separation
seed = 11
";
        let cfg = parse_str(text).unwrap();
        let emitted = cfg.emit();
        let reparsed = parse_str(&emitted).unwrap();
        assert_eq!(cfg, reparsed);
        // Emission is idempotent.
        assert_eq!(emitted, reparsed.emit());
    }

    #[test]
    fn tabulated_source_parses_pairs() {
        let cfg =
            parse_str("[physics]\nsource = tabulated\nsource_table = 0:0, 1:2.5, 2:0\n").unwrap();
        match &cfg.params.source {
            SourceSpec::Tabulated { times, values } => {
                assert_eq!(times, &vec![0.0, 1.0, 2.0]);
                assert_eq!(values, &vec![0.0, 2.5, 0.0]);
            }
            other => panic!("unexpected {other:?}"),
        }
        let roundtrip = parse_str(&cfg.emit()).unwrap();
        assert_eq!(cfg, roundtrip);
    }

    #[test]
    fn build_initial_state_from_presets() {
        let cfg = parse_str(
            "[grid]\nnx = 12\nny = 12\n[initial]\nphi = spinodal\nphi_mean = -0.1\nphi_amp = 0.05\nseed = 3\nvelocity = vortex\nvortex_amplitude = 0.2\n",
        )
        .unwrap();
        let (state, warnings) = cfg.build_initial_state().unwrap();
        assert!(warnings.is_empty());
        assert!(state.v.linf() > 0.0);
        assert!((state.phi.mean() + 0.1).abs() < 0.05);
    }
}
