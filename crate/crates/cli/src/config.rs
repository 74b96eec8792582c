//! Run configuration: a TOML file with a `[problem]` table and one table per
//! solver. `preset = "vdp"` fills every key with the van der Pol experiment;
//! keys given next to the preset override it. Without a preset every key of
//! `[problem]` and of the tables a subcommand needs must be present.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use stochctl_core::{ControlProblem, Plant, Polynomial, ProblemSpec};

use crate::error::CliError;
use crate::polyparse::parse_polynomial;

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: Option<RawProblem>,
    koopman: Option<RawKoopman>,
    fd: Option<RawFd>,
    fk: Option<RawFk>,
    simulate: Option<RawSimulate>,
    compare: Option<RawCompare>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    preset: Option<String>,
    epsilon: Option<f64>,
    drift: Option<Vec<String>>,
    diffusion: Option<Vec<Vec<f64>>>,
    plant_diffusion: Option<Vec<Vec<f64>>>,
    control: Option<Vec<Vec<f64>>>,
    weight: Option<Vec<Vec<f64>>>,
    centers: Option<Vec<f64>>,
    widths: Option<Vec<f64>>,
    t_initial: Option<f64>,
    t_final: Option<f64>,
    lambda: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawKoopman {
    cutoffs: Option<Vec<usize>>,
    z_cutoff: Option<usize>,
    dt: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawFd {
    min: Option<[f64; 2]>,
    max: Option<[f64; 2]>,
    spacing: Option<[f64; 2]>,
    dt: Option<f64>,
    cfl: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawFk {
    points: Option<Vec<Vec<f64>>>,
    t: Option<f64>,
    dt: Option<f64>,
    npaths: Option<usize>,
    seed: Option<u64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSimulate {
    x0: Option<Vec<f64>>,
    duration: Option<f64>,
    dt: Option<f64>,
    seed: Option<u64>,
    clamp_min: Option<Vec<f64>>,
    clamp_max: Option<Vec<f64>>,
    controller: Option<String>,
    stride: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawCompare {
    min: Option<[f64; 2]>,
    max: Option<[f64; 2]>,
}

#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct ProblemConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub drift: Vec<String>,
    pub diffusion: Vec<Vec<f64>>,
    pub plant_diffusion: Vec<Vec<f64>>,
    pub control: Vec<Vec<f64>>,
    pub weight: Vec<Vec<f64>>,
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    pub t_initial: f64,
    pub t_final: f64,
    pub lambda: f64,
}

#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct KoopmanConfig {
    pub cutoffs: Vec<usize>,
    pub z_cutoff: usize,
    pub dt: f64,
}

#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct FdConfig {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub spacing: [f64; 2],
    pub dt: f64,
    pub cfl: f64,
}

#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct FkConfig {
    pub points: Vec<Vec<f64>>,
    pub t: f64,
    pub dt: f64,
    pub npaths: usize,
    pub seed: u64,
}

#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct SimulateConfig {
    pub x0: Vec<f64>,
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    pub clamp_min: Vec<f64>,
    pub clamp_max: Vec<f64>,
    pub controller: String,
    pub stride: usize,
}

#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct CompareConfig {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

/// Fully resolved configuration. Solver tables are `None` when neither the
/// file nor a preset supplies them.
#[derive(Serialize, Clone, Debug)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub koopman: Option<KoopmanConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fd: Option<FdConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fk: Option<FkConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareConfig>,
    #[serde(skip)]
    control_problem: Option<ControlProblem>,
    #[serde(skip)]
    plant: Option<Plant>,
}

pub const VDP_CONFIG: &str = "[problem]\npreset = \"vdp\"\n";

const CONTROLLERS: [&str; 3] = ["koopman", "fd", "zero"];

fn vdp_problem() -> RawProblem {
    RawProblem {
        preset: Some("vdp".into()),
        epsilon: Some(1.0),
        drift: None,
        diffusion: Some(vec![vec![0.0, 0.0], vec![0.0, 1.0]]),
        plant_diffusion: Some(vec![vec![0.1, 0.0], vec![0.0, 1.0]]),
        control: Some(vec![vec![0.0, 0.0], vec![0.0, 1.0]]),
        weight: Some(vec![vec![0.0, 0.0], vec![0.0, 0.25]]),
        centers: Some(vec![1.0, 0.0]),
        widths: Some(vec![0.5, 0.5]),
        t_initial: Some(0.0),
        t_final: Some(0.1),
        lambda: None,
    }
}

fn vdp_koopman() -> RawKoopman {
    RawKoopman {
        cutoffs: Some(vec![60, 60]),
        z_cutoff: Some(2),
        dt: Some(1e-4),
    }
}

fn vdp_fd() -> RawFd {
    RawFd {
        min: Some([-2.0, -2.0]),
        max: Some([2.0, 2.0]),
        spacing: Some([0.01, 0.01]),
        dt: Some(1e-4),
        cfl: Some(stochctl_core::hjb::DEFAULT_CFL),
    }
}

fn vdp_fk() -> RawFk {
    RawFk {
        points: Some(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 0.5], vec![-0.5, -0.5]]),
        t: Some(0.0),
        dt: Some(1e-4),
        npaths: Some(100_000),
        seed: Some(1),
    }
}

fn vdp_simulate() -> RawSimulate {
    RawSimulate {
        x0: Some(vec![2.0, 0.0]),
        duration: Some(10.0),
        dt: Some(1e-4),
        seed: Some(1),
        clamp_min: Some(vec![-1.5, -1.5]),
        clamp_max: Some(vec![1.5, 1.5]),
        controller: Some("koopman".into()),
        stride: Some(1),
    }
}

fn vdp_compare() -> RawCompare {
    RawCompare {
        min: Some([-1.5, -1.5]),
        max: Some([1.5, 1.5]),
    }
}

/// Takes `file` if set, else `preset`.
macro_rules! merge {
    ($file:expr, $preset:expr, $($f:ident),+) => {{
        let (file, preset) = ($file, $preset);
        let mut out = preset;
        $( if file.$f.is_some() { out.$f = file.$f; } )+
        out
    }};
}

/// 1-based line of the first `key =` assignment inside `[table]`.
fn line_of(text: &str, table: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            current = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            continue;
        }
        if current == table {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn parse_error_from_toml(text: &str, err: &toml::de::Error) -> CliError {
    let line = err
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    let msg = err.message().to_string();
    let field = msg
        .split('`')
        .nth(1)
        .map(str::to_string)
        .or_else(|| {
            line.and_then(|l| text.lines().nth(l - 1))
                .and_then(|l| l.split_once('='))
                .map(|(k, _)| k.trim().to_string())
        })
        .unwrap_or_default();
    CliError::Parse { line, field, message: msg }
}

fn need<T>(v: Option<T>, table: &str, key: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Validation(format!("[{table}] is missing `{key}`")))
}

fn matrix(rows: &[Vec<f64>], n: usize, name: &str) -> Result<DMatrix<f64>, CliError> {
    if rows.is_empty() || rows.len() != n {
        return Err(CliError::Validation(format!("`{name}` must have {n} rows")));
    }
    let cols = rows[0].len();
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(CliError::Validation(format!("`{name}` rows must have equal, nonzero length")));
    }
    Ok(DMatrix::from_fn(n, cols, |i, j| rows[i][j]))
}

fn square(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>, CliError> {
    matrix(rows, rows.len(), name)
}

fn check_positive(v: f64, what: &str) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{what} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    /// Parses and validates a configuration file's contents.
    pub fn load(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| parse_error_from_toml(text, &e))?;
        let file_problem = raw.problem.unwrap_or_default();
        let preset = file_problem.preset.clone();
        let is_vdp = match preset.as_deref() {
            None => false,
            Some("vdp") => true,
            Some(other) => {
                return Err(CliError::Parse {
                    line: line_of(text, "problem", "preset"),
                    field: "preset".into(),
                    message: format!("unknown preset {other:?} (available: \"vdp\")"),
                })
            }
        };
        if !is_vdp && file_problem.epsilon.is_some() {
            return Err(CliError::Validation("`epsilon` is only meaningful with preset = \"vdp\"".into()));
        }

        let p = if is_vdp {
            merge!(
                file_problem,
                vdp_problem(),
                epsilon, drift, diffusion, plant_diffusion, control, weight, centers, widths,
                t_initial, t_final, lambda
            )
        } else {
            file_problem
        };
        let drift_text = match (p.drift, p.epsilon) {
            (Some(d), _) => d,
            (None, Some(eps)) => vec!["x2".to_string(), format!("{eps}*x2 - {eps}*x1^2*x2 - x1")],
            (None, None) => return Err(need::<()>(None, "problem", "drift").unwrap_err()),
        };
        let n = drift_text.len();
        if n == 0 {
            return Err(CliError::Validation("`drift` must list one polynomial per state".into()));
        }
        let mut drift = Vec::with_capacity(n);
        for (i, s) in drift_text.iter().enumerate() {
            drift.push(parse_polynomial(s, n).map_err(|message| CliError::Parse {
                line: line_of(text, "problem", "drift"),
                field: format!("drift[{i}]"),
                message,
            })?);
        }
        let diffusion_rows = need(p.diffusion, "problem", "diffusion")?;
        let diffusion = matrix(&diffusion_rows, n, "diffusion")?;
        let plant_rows = p.plant_diffusion.unwrap_or_else(|| diffusion_rows.clone());
        let plant_diffusion = matrix(&plant_rows, n, "plant_diffusion")?;
        let control_rows = need(p.control, "problem", "control")?;
        let control = matrix(&control_rows, n, "control")?;
        let weight_rows = need(p.weight, "problem", "weight")?;
        let weight = square(&weight_rows, "weight")?;
        let centers = need(p.centers, "problem", "centers")?;
        let widths = need(p.widths, "problem", "widths")?;
        if centers.len() != n || widths.len() != n {
            return Err(CliError::Validation(format!("`centers` and `widths` need {n} entries")));
        }
        let t_initial = need(p.t_initial, "problem", "t_initial")?;
        let t_final = need(p.t_final, "problem", "t_final")?;
        let cost = if widths.iter().all(|w| *w > 0.0 && w.is_finite()) {
            Polynomial::diagonal_quadratic(&centers, &widths)
        } else {
            return Err(CliError::Validation("`widths` must be positive".into()));
        };
        let problem = ControlProblem::new(ProblemSpec {
            drift: drift.clone(),
            diffusion: diffusion.clone(),
            control: control.clone(),
            weight,
            terminal_cost: cost.clone(),
            running_cost: cost,
            t_initial,
            t_final,
            lambda: p.lambda,
        })?;
        let plant = Plant::new(drift, plant_diffusion, control)?;

        let problem_cfg = ProblemConfig {
            preset,
            drift: drift_text,
            diffusion: diffusion_rows,
            plant_diffusion: plant_rows,
            control: control_rows,
            weight: weight_rows,
            centers,
            widths,
            t_initial,
            t_final,
            lambda: problem.lambda(),
        };

        let koopman = match (raw.koopman, is_vdp) {
            (None, false) => None,
            (file, vdp) => {
                let k = if vdp {
                    merge!(file.unwrap_or_default(), vdp_koopman(), cutoffs, z_cutoff, dt)
                } else {
                    file.unwrap()
                };
                let cutoffs = need(k.cutoffs, "koopman", "cutoffs")?;
                if cutoffs.len() != n {
                    return Err(CliError::Validation(format!("[koopman] `cutoffs` needs {n} entries")));
                }
                let dt = need(k.dt, "koopman", "dt")?;
                check_positive(dt, "[koopman] dt")?;
                Some(KoopmanConfig {
                    cutoffs,
                    z_cutoff: need(k.z_cutoff, "koopman", "z_cutoff")?,
                    dt,
                })
            }
        };

        let fd = match (raw.fd, is_vdp) {
            (None, false) => None,
            (file, vdp) => {
                let f = if vdp {
                    merge!(file.unwrap_or_default(), vdp_fd(), min, max, spacing, dt, cfl)
                } else {
                    file.unwrap()
                };
                if n != 2 {
                    return Err(CliError::Validation("the finite-difference solver is two-dimensional".into()));
                }
                let dt = need(f.dt, "fd", "dt")?;
                check_positive(dt, "[fd] dt")?;
                let cfl = need(f.cfl, "fd", "cfl")?;
                check_positive(cfl, "[fd] cfl")?;
                Some(FdConfig {
                    min: need(f.min, "fd", "min")?,
                    max: need(f.max, "fd", "max")?,
                    spacing: need(f.spacing, "fd", "spacing")?,
                    dt,
                    cfl,
                })
            }
        };

        let fk = match (raw.fk, is_vdp) {
            (None, false) => None,
            (file, vdp) => {
                let f = if vdp {
                    merge!(file.unwrap_or_default(), vdp_fk(), points, t, dt, npaths, seed)
                } else {
                    file.unwrap()
                };
                let points = need(f.points, "fk", "points")?;
                if points.is_empty() || points.iter().any(|q| q.len() != n) {
                    return Err(CliError::Validation(format!("[fk] `points` must be a list of {n}-vectors")));
                }
                let dt = need(f.dt, "fk", "dt")?;
                check_positive(dt, "[fk] dt")?;
                let cfg = FkConfig {
                    points,
                    t: need(f.t, "fk", "t")?,
                    dt,
                    npaths: need(f.npaths, "fk", "npaths")?,
                    seed: need(f.seed, "fk", "seed")?,
                };
                check_npaths(cfg.npaths)?;
                Some(cfg)
            }
        };

        let simulate = match (raw.simulate, is_vdp) {
            (None, false) => None,
            (file, vdp) => {
                let s = if vdp {
                    merge!(
                        file.unwrap_or_default(),
                        vdp_simulate(),
                        x0, duration, dt, seed, clamp_min, clamp_max, controller, stride
                    )
                } else {
                    file.unwrap()
                };
                let cfg = SimulateConfig {
                    x0: need(s.x0, "simulate", "x0")?,
                    duration: need(s.duration, "simulate", "duration")?,
                    dt: need(s.dt, "simulate", "dt")?,
                    seed: need(s.seed, "simulate", "seed")?,
                    clamp_min: need(s.clamp_min, "simulate", "clamp_min")?,
                    clamp_max: need(s.clamp_max, "simulate", "clamp_max")?,
                    controller: need(s.controller, "simulate", "controller")?,
                    stride: need(s.stride, "simulate", "stride")?,
                };
                cfg.validate(n)?;
                Some(cfg)
            }
        };

        let compare = match (raw.compare, is_vdp) {
            (None, false) => None,
            (file, vdp) => {
                let c = if vdp {
                    merge!(file.unwrap_or_default(), vdp_compare(), min, max)
                } else {
                    file.unwrap()
                };
                Some(CompareConfig {
                    min: need(c.min, "compare", "min")?,
                    max: need(c.max, "compare", "max")?,
                })
            }
        };

        Ok(Self {
            problem: problem_cfg,
            koopman,
            fd,
            fk,
            simulate,
            compare,
            control_problem: Some(problem),
            plant: Some(plant),
        })
    }

    pub fn control_problem(&self) -> &ControlProblem {
        self.control_problem.as_ref().expect("set by load")
    }

    pub fn plant(&self) -> &Plant {
        self.plant.as_ref().expect("set by load")
    }

    pub fn koopman(&self) -> Result<&KoopmanConfig, CliError> {
        self.koopman.as_ref().ok_or_else(|| missing_table("koopman"))
    }

    pub fn fd(&self) -> Result<&FdConfig, CliError> {
        self.fd.as_ref().ok_or_else(|| missing_table("fd"))
    }

    pub fn fk(&self) -> Result<&FkConfig, CliError> {
        self.fk.as_ref().ok_or_else(|| missing_table("fk"))
    }

    pub fn simulate(&self) -> Result<&SimulateConfig, CliError> {
        self.simulate.as_ref().ok_or_else(|| missing_table("simulate"))
    }

    pub fn compare(&self) -> Result<&CompareConfig, CliError> {
        self.compare.as_ref().ok_or_else(|| missing_table("compare"))
    }

    /// The resolved configuration as TOML, each line prefixed with `# `.
    pub fn comment_header(&self) -> String {
        let body = toml::to_string(self).expect("config serializes");
        let mut out = String::from("# stochctl resolved configuration\n");
        for line in body.lines() {
            out.push('#');
            if !line.is_empty() {
                out.push(' ');
                out.push_str(line);
            }
            out.push('\n');
        }
        out
    }
}

fn missing_table(name: &str) -> CliError {
    CliError::Validation(format!("configuration has no [{name}] table"))
}

pub fn check_npaths(npaths: usize) -> Result<(), CliError> {
    if npaths < 2 {
        Err(CliError::Validation(format!("npaths must be at least 2, got {npaths}")))
    } else {
        Ok(())
    }
}

impl SimulateConfig {
    pub fn validate(&self, n: usize) -> Result<(), CliError> {
        if self.x0.len() != n || self.clamp_min.len() != n || self.clamp_max.len() != n {
            return Err(CliError::Validation(format!(
                "[simulate] `x0`, `clamp_min` and `clamp_max` need {n} entries"
            )));
        }
        check_positive(self.dt, "[simulate] dt")?;
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(CliError::Validation("[simulate] duration must be finite and ≥ 0".into()));
        }
        if self.stride == 0 {
            return Err(CliError::Validation("[simulate] stride must be at least 1".into()));
        }
        if !CONTROLLERS.contains(&self.controller.as_str()) {
            return Err(CliError::Validation(format!(
                "[simulate] controller must be one of koopman, fd, zero (got {:?})",
                self.controller
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_resolves_to_the_van_der_pol_experiment() {
        let c = RunConfig::load(VDP_CONFIG).unwrap();
        assert!((c.problem.lambda - 0.25).abs() < 1e-12);
        assert_eq!(c.koopman().unwrap().cutoffs, vec![60, 60]);
        assert_eq!(c.simulate().unwrap().clamp_max, vec![1.5, 1.5]);
        assert_eq!(c.problem.plant_diffusion[0][0], 0.1);
        assert_eq!(c.plant().noise_dim(), 2);
    }

    #[test]
    fn lambda_mismatch_is_a_validation_error() {
        let text = "[problem]\npreset = \"vdp\"\nweight = [[0.0, 0.0], [0.0, 1.0]]\nlambda = 0.25\n";
        let err = RunConfig::load(text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(matches!(err, CliError::Core(stochctl_core::Error::LambdaMismatch { .. })), "{err}");
    }

    #[test]
    fn lambda_is_derived_when_omitted() {
        let text = "[problem]\npreset = \"vdp\"\nweight = [[0.0, 0.0], [0.0, 1.0]]\n";
        let c = RunConfig::load(text).unwrap();
        assert!((c.problem.lambda - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parse_errors_carry_line_and_field() {
        let text = "[problem]\npreset = \"vdp\"\n\n[fd]\nspacingg = [0.01, 0.01]\n";
        match RunConfig::load(text).unwrap_err() {
            CliError::Parse { line, field, .. } => {
                assert_eq!(line, Some(5));
                assert_eq!(field, "spacingg");
            }
            e => panic!("{e}"),
        }
        let text = "[problem]\npreset = \"vdp\"\ndrift = [\"x2\", \"x1 + *x2\"]\n";
        match RunConfig::load(text).unwrap_err() {
            CliError::Parse { line, field, .. } => {
                assert_eq!(line, Some(3));
                assert_eq!(field, "drift[1]");
            }
            e => panic!("{e}"),
        }
        let text = "[problem]\nt_final = \"soon\"\n";
        match RunConfig::load(text).unwrap_err() {
            CliError::Parse { line, .. } => assert_eq!(line, Some(2)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn explicit_problem_without_preset() {
        let text = r#"
[problem]
drift = ["x2", "x2 - x1^2*x2 - x1"]
diffusion = [[0.0, 0.0], [0.0, 1.0]]
control = [[0.0, 0.0], [0.0, 1.0]]
weight = [[0.0, 0.0], [0.0, 0.25]]
centers = [1.0, 0.0]
widths = [0.5, 0.5]
t_initial = 0.0
t_final = 0.1
"#;
        let c = RunConfig::load(text).unwrap();
        let preset = RunConfig::load(VDP_CONFIG).unwrap();
        assert_eq!(c.control_problem().drift(), preset.control_problem().drift());
        assert_eq!(c.problem.lambda, preset.problem.lambda);
        assert!(c.fd().is_err());
        assert!(c.koopman().is_err());
    }

    #[test]
    fn missing_keys_without_preset_are_reported() {
        let text = "[problem]\ndrift = [\"x2\", \"-x1\"]\n";
        let err = RunConfig::load(text).unwrap_err();
        assert!(err.to_string().contains("diffusion"), "{err}");
    }

    #[test]
    fn zero_paths_are_rejected() {
        let text = "[problem]\npreset = \"vdp\"\n[fk]\nnpaths = 0\n";
        assert_eq!(RunConfig::load(text).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn header_round_trips_as_toml() {
        let c = RunConfig::load(VDP_CONFIG).unwrap();
        let header = c.comment_header();
        assert!(header.lines().all(|l| l.starts_with('#')));
        let body: String = header.lines().skip(1).map(|l| format!("{}\n", l.trim_start_matches('#').trim_start())).collect();
        let again = RunConfig::load(&body).unwrap();
        assert_eq!(again.problem, c.problem);
        assert_eq!(again.simulate, c.simulate);
    }
}
