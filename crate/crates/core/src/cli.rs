//! Experiment documents, orchestration and artifact emission.
//!
//! An experiment document is strict JSON:
//!
//! ```json
//! { "output": { "dir": "results", "prefix": "energy" },
//!   "experiment": { "kind": "pde-verify-energy", "levels": 2, "config": { ... } } }
//! ```
//!
//! Every run writes `<prefix>_summary.json`. The kinds `pde-verify-energy`,
//! `pde-decay`, `pde-linear-decay` and `ode-verify` carry threshold checks;
//! their summary has `"passed"` and the process exit status follows it.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{analyze_run, Classification, RunAnalysis, DEFAULT_TOL};
use crate::energy::{balance_residual_e, balance_residual_j, EnergyLedger};
use crate::error::{Error, Result};
use crate::ode::{default_battery, solve_exact, verify_uniform_decay, OdeParams};
use crate::pde::{simulate, ForceMode, RunConfig, Snapshot};
use crate::potential::{table, PotentialParams};

fn default_dir() -> PathBuf {
    PathBuf::from(".")
}

fn default_prefix() -> String {
    "run".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: default_dir(),
            prefix: default_prefix(),
        }
    }
}

fn default_levels() -> u32 {
    2
}

fn default_residual_tol() -> f64 {
    1e-4
}

fn default_min_ratio() -> f64 {
    2.0
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_kappa_band() -> (f64, f64) {
    (0.4, 0.6)
}

fn default_min_r_squared() -> f64 {
    0.999
}

fn default_ode_dt() -> f64 {
    0.01
}

fn default_ode_t_max() -> f64 {
    30.0
}

fn default_ratio_threshold() -> f64 {
    crate::ode::verify::RATIO_THRESHOLD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatteryName {
    Default,
}

/// Initial data for `ode-verify`: a named battery or explicit `[z0, w0]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Battery {
    Named(BatteryName),
    Points(Vec<(f64, f64)>),
}

impl Battery {
    pub fn points(&self) -> Vec<(f64, f64)> {
        match self {
            Battery::Named(BatteryName::Default) => default_battery(),
            Battery::Points(p) => p.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    PdeRun {
        config: RunConfig,
    },
    /// Balance residuals on `levels` grids, each halving `dx` and `dt`.
    PdeVerifyEnergy {
        config: RunConfig,
        #[serde(default = "default_levels")]
        levels: u32,
        #[serde(default = "default_residual_tol")]
        residual_tol: f64,
        #[serde(default = "default_min_ratio")]
        min_ratio: f64,
    },
    PdeDecay {
        config: RunConfig,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_kappa_band")]
        kappa_band: (f64, f64),
        #[serde(default = "default_min_r_squared")]
        min_r_squared: f64,
    },
    /// Runs with the force replaced by `u`; `force` in `config` is ignored.
    PdeLinearDecay {
        config: RunConfig,
    },
    OdeRun {
        ode: OdeParams,
        z0: f64,
        w0: f64,
        t_max: f64,
        #[serde(default = "default_ode_dt")]
        dt: f64,
    },
    OdeVerify {
        battery: Battery,
        sigmas: Vec<f64>,
        #[serde(default = "default_ode_t_max")]
        t_max: f64,
        #[serde(default = "default_ratio_threshold")]
        ratio_threshold: f64,
    },
    PotentialTable {
        potential: PotentialParams,
        from: f64,
        to: f64,
        step: f64,
    },
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::PdeRun { .. } => "pde-run",
            Experiment::PdeVerifyEnergy { .. } => "pde-verify-energy",
            Experiment::PdeDecay { .. } => "pde-decay",
            Experiment::PdeLinearDecay { .. } => "pde-linear-decay",
            Experiment::OdeRun { .. } => "ode-run",
            Experiment::OdeVerify { .. } => "ode-verify",
            Experiment::PotentialTable { .. } => "potential-table",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub output: OutputSpec,
    pub experiment: Experiment,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.output.prefix.is_empty() || self.output.prefix.contains(['/', '\\']) {
            return Err(Error::Config(format!(
                "output.prefix must be a plain file stem, got {:?}",
                self.output.prefix
            )));
        }
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {x}")))
            }
        };
        match &self.experiment {
            Experiment::PdeRun { config } | Experiment::PdeLinearDecay { config } => config.validate(),
            Experiment::PdeVerifyEnergy {
                config,
                levels,
                residual_tol,
                min_ratio,
            } => {
                if !(1..=4).contains(levels) {
                    return Err(Error::Config(format!(
                        "levels must lie in [1, 4], got {levels}"
                    )));
                }
                positive("residual_tol", *residual_tol)?;
                positive("min_ratio", *min_ratio)?;
                config.validate()
            }
            Experiment::PdeDecay {
                config,
                tol,
                kappa_band,
                min_r_squared,
            } => {
                positive("tol", *tol)?;
                if !(kappa_band.0 < kappa_band.1) {
                    return Err(Error::Config(format!(
                        "kappa_band must be increasing, got {kappa_band:?}"
                    )));
                }
                if !(0.0..=1.0).contains(min_r_squared) {
                    return Err(Error::Config(format!(
                        "min_r_squared must lie in [0, 1], got {min_r_squared}"
                    )));
                }
                config.validate()
            }
            Experiment::OdeRun { z0, w0, t_max, dt, .. } => {
                if !(z0.is_finite() && w0.is_finite()) {
                    return Err(Error::Config("z0 and w0 must be finite".into()));
                }
                positive("t_max", *t_max)?;
                positive("dt", *dt)
            }
            Experiment::OdeVerify {
                battery,
                sigmas,
                t_max,
                ratio_threshold,
            } => {
                if sigmas.is_empty() {
                    return Err(Error::Config("sigmas must be nonempty".into()));
                }
                for &s in sigmas {
                    OdeParams::new(s)?;
                }
                if battery.points().is_empty() {
                    return Err(Error::Config("battery must be nonempty".into()));
                }
                positive("t_max", *t_max)?;
                positive("ratio_threshold", *ratio_threshold)
            }
            Experiment::PotentialTable { from, to, step, .. } => {
                positive("step", *step)?;
                if !(from.is_finite() && to.is_finite() && to >= from) {
                    return Err(Error::Config(format!("empty range [{from}, {to}]")));
                }
                Ok(())
            }
        }
    }
}

/// Parses and fully validates an experiment document.
pub fn parse_config(document: &str) -> Result<ExperimentSpec> {
    let spec: ExperimentSpec = serde_json::from_str(document)?;
    spec.validate()?;
    Ok(spec)
}

pub fn emit(spec: &ExperimentSpec) -> Result<String> {
    Ok(serde_json::to_string_pretty(spec)?)
}

pub fn load_config(path: &Path) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check {
            name: name.to_string(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }

    fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Check {
            name: name.to_string(),
            value,
            threshold,
            passed: value >= threshold,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub kind: String,
    /// `None` for kinds without checks.
    pub passed: Option<bool>,
    pub checks: Vec<Check>,
    pub artifacts: Vec<PathBuf>,
    pub details: serde_json::Value,
}

impl Summary {
    pub fn exit_ok(&self) -> bool {
        self.passed != Some(false)
    }
}

/// Flat per-run record with the stable keys of the JSON summary.
#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub classification: Classification,
    pub u_inf: f64,
    pub ell: f64,
    pub ell_uncertainty: f64,
    pub predicted_modulus: Option<f64>,
    pub kappa: Option<f64>,
    #[serde(rename = "M")]
    pub m: Option<f64>,
    pub r_squared: Option<f64>,
    pub fit_window: Option<(f64, f64)>,
    pub residual_e_max: f64,
    pub residual_j_max: f64,
    pub regime_entry_time: Option<f64>,
    pub steps: u64,
}

impl RunRecord {
    fn new(a: &RunAnalysis, steps: u64) -> Self {
        RunRecord {
            classification: a.equilibrium.classification,
            u_inf: a.equilibrium.u_inf,
            ell: a.ell.value,
            ell_uncertainty: a.ell.uncertainty,
            predicted_modulus: a.predicted_modulus,
            kappa: a.decay.as_ref().map(|d| d.kappa),
            m: a.decay.as_ref().map(|d| d.amplitude),
            r_squared: a.decay.as_ref().map(|d| d.r_squared),
            fit_window: a.decay.as_ref().map(|d| d.window),
            residual_e_max: a.residual_e_max,
            residual_j_max: a.residual_j_max,
            regime_entry_time: a.regime_entry_time,
            steps,
        }
    }
}

struct Artifacts<'a> {
    dir: &'a Path,
    prefix: &'a str,
    written: Vec<PathBuf>,
}

impl<'a> Artifacts<'a> {
    fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}_{suffix}", self.prefix))
    }

    fn ledger(&mut self, suffix: &str, ledger: &EnergyLedger) -> Result<()> {
        let path = self.path(suffix);
        ledger.save_csv(&path)?;
        self.written.push(path);
        Ok(())
    }

    fn snapshots(&mut self, snaps: &[Snapshot]) -> Result<()> {
        for (i, s) in snaps.iter().enumerate() {
            let path = self.path(&format!("snapshot_{i:03}.csv"));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["x", "u", "v"])?;
            for j in 0..s.x.len() {
                w.serialize((s.x[j], s.u[j], s.v[j]))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            self.written.push(path);
        }
        Ok(())
    }

    fn csv<R: Serialize>(&mut self, suffix: &str, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
        let path = self.path(suffix);
        write_csv(&path, header, rows)?;
        self.written.push(path);
        Ok(())
    }
}

pub fn write_csv<R: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Refined copy of `cfg` with `dx` and `dt` divided by `2^level`.
fn refine(cfg: &RunConfig, level: u32) -> RunConfig {
    let mut out = cfg.clone();
    for _ in 0..level {
        out.grid = out.grid.refined();
        out.dt *= 0.5;
        out.sample_every *= 2;
    }
    out
}

/// Writes the sampled exact ODE trajectory as `t,z,w,regime`.
pub fn write_ode_csv(path: &Path, z0: f64, w0: f64, p: &OdeParams, t_max: f64, dt: f64) -> Result<crate::ode::PiecewiseTrajectory> {
    let tr = solve_exact(z0, w0, p, t_max)?;
    write_csv(
        path,
        &["t", "z", "w", "regime"],
        tr.sample(dt).into_iter().map(|(t, z, w, r)| (t, z, w, r.name())),
    )?;
    Ok(tr)
}

pub fn write_potential_table(path: &Path, p: &PotentialParams, from: f64, to: f64, step: f64) -> Result<usize> {
    let rows = table(p, from, to, step)?;
    let n = rows.len();
    write_csv(path, &["u", "phi", "dphi"], rows.into_iter().map(|r| (r[0], r[1], r[2])))?;
    Ok(n)
}

/// Runs the experiment, writing artifacts and `<prefix>_summary.json` into
/// `out_dir` (or the document's own output directory).
pub fn run_experiment(spec: &ExperimentSpec, out_dir: Option<&Path>) -> Result<Summary> {
    spec.validate()?;
    let dir = out_dir.unwrap_or(&spec.output.dir);
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut art = Artifacts {
        dir,
        prefix: &spec.output.prefix,
        written: Vec::new(),
    };
    let mut checks = Vec::new();
    let details = match &spec.experiment {
        Experiment::PdeRun { config } => {
            let traj = simulate(config)?;
            art.ledger("ledger.csv", &traj.ledger)?;
            art.snapshots(&traj.snapshots)?;
            let analysis = analyze_run(&traj.ledger.rows, &config.potential, DEFAULT_TOL)?;
            serde_json::to_value(RunRecord::new(&analysis, traj.steps))?
        }
        Experiment::PdeVerifyEnergy {
            config,
            levels,
            residual_tol,
            min_ratio,
        } => {
            let runs = (0..*levels)
                .into_par_iter()
                .map(|k| simulate(&refine(config, k)))
                .collect::<Result<Vec<_>>>()?;
            let mut levels_out = Vec::new();
            for (k, traj) in runs.iter().enumerate() {
                art.ledger(&format!("ledger_level{k}.csv"), &traj.ledger)?;
                let re = balance_residual_e(&traj.ledger.rows)?.max;
                let rj = balance_residual_j(&traj.ledger.rows)?.max;
                let cfg = refine(config, k as u32);
                levels_out.push(serde_json::json!({
                    "level": k,
                    "cells": cfg.grid.cells(),
                    "dt": cfg.dt,
                    "residual_e_max": re,
                    "residual_j_max": rj,
                }));
                if k == 0 {
                    checks.push(Check::at_most("residual_e_max", re, *residual_tol));
                    checks.push(Check::at_most("residual_j_max", rj, *residual_tol));
                }
            }
            let mut ratios = Vec::new();
            for k in 1..runs.len() {
                let prev = &runs[k - 1].ledger.rows;
                let next = &runs[k].ledger.rows;
                let re = balance_residual_e(prev)?.max / balance_residual_e(next)?.max;
                let rj = balance_residual_j(prev)?.max / balance_residual_j(next)?.max;
                checks.push(Check::at_least(&format!("ratio_e_{}_{k}", k - 1), re, *min_ratio));
                checks.push(Check::at_least(&format!("ratio_j_{}_{k}", k - 1), rj, *min_ratio));
                ratios.push(serde_json::json!({ "levels": [k - 1, k], "ratio_e": re, "ratio_j": rj }));
            }
            serde_json::json!({ "levels": levels_out, "ratios": ratios })
        }
        Experiment::PdeDecay {
            config,
            tol,
            kappa_band,
            min_r_squared,
        } => {
            let traj = simulate(config)?;
            art.ledger("ledger.csv", &traj.ledger)?;
            art.snapshots(&traj.snapshots)?;
            let analysis = analyze_run(&traj.ledger.rows, &config.potential, *tol)?;
            let record = RunRecord::new(&analysis, traj.steps);
            let converged = matches!(
                record.classification,
                Classification::Zero | Classification::DetachedPlus | Classification::DetachedMinus
            );
            checks.push(Check::at_least("converged", f64::from(u8::from(converged)), 1.0));
            let kappa = record.kappa.unwrap_or(f64::NAN);
            checks.push(Check::at_least("kappa_min", kappa, kappa_band.0));
            checks.push(Check::at_most("kappa_max", kappa, kappa_band.1));
            checks.push(Check::at_least(
                "r_squared",
                record.r_squared.unwrap_or(f64::NAN),
                *min_r_squared,
            ));
            serde_json::to_value(record)?
        }
        Experiment::PdeLinearDecay { config } => {
            let mut cfg = config.clone();
            cfg.force = ForceMode::Linear;
            let traj = simulate(&cfg)?;
            art.ledger("ledger.csv", &traj.ledger)?;
            let rows = &traj.ledger.rows;
            let g0 = rows[0].g;
            let h0 = rows[0].moments.energy_space_norm_sq();
            let g_err = rows
                .iter()
                .map(|r| (r.g / g0 - (-r.t).exp()).abs())
                .fold(0.0, f64::max);
            let norm_ratio = rows
                .iter()
                .map(|r| r.moments.energy_space_norm_sq() / (3.0 * h0 * (-r.t).exp()))
                .fold(0.0, f64::max);
            checks.push(Check::at_most("g_relative_error", g_err, 0.01));
            checks.push(Check::at_most("norm_envelope_ratio", norm_ratio, 1.02));
            serde_json::json!({ "g_relative_error": g_err, "norm_envelope_ratio": norm_ratio, "steps": traj.steps })
        }
        Experiment::OdeRun { ode, z0, w0, t_max, dt } => {
            let path = art.path("ode.csv");
            let tr = write_ode_csv(&path, *z0, *w0, ode, *t_max, *dt)?;
            art.written.push(path);
            serde_json::json!({
                "z_inf": tr.z_inf,
                "segments": tr.segments,
                "middle_visits": tr.middle_visits(),
                "band_transitions": tr.band_to_band_transitions(ode),
            })
        }
        Experiment::OdeVerify {
            battery,
            sigmas,
            t_max,
            ratio_threshold,
        } => {
            let mut report = verify_uniform_decay(&battery.points(), sigmas, *t_max)?;
            report.ratio_threshold = *ratio_threshold;
            let finite = report.all_finite();
            checks.push(Check::at_least("all_m_finite", f64::from(u8::from(finite)), 1.0));
            checks.push(Check::at_most("max_ratio", report.max_ratio, *ratio_threshold));
            checks.push(Check::at_most("max_middle_visits", report.max_middle_visits as f64, 2.0));
            checks.push(Check::at_most(
                "max_band_transitions",
                report.max_band_transitions as f64,
                1.0,
            ));
            art.csv(
                "m_matrix.csv",
                &["z0", "w0", "sigma", "z_inf", "M"],
                report
                    .data
                    .iter()
                    .flat_map(|d| d.runs.iter().map(move |r| (d.z0, d.w0, r.sigma, r.z_inf, r.m))),
            )?;
            serde_json::to_value(&report)?
        }
        Experiment::PotentialTable {
            potential,
            from,
            to,
            step,
        } => {
            let path = art.path("potential.csv");
            let n = write_potential_table(&path, potential, *from, *to, *step)?;
            art.written.push(path);
            serde_json::json!({ "rows": n })
        }
    };
    let passed = (!checks.is_empty()).then(|| checks.iter().all(|c| c.passed));
    let summary_path = art.path("summary.json");
    art.written.push(summary_path.clone());
    let summary = Summary {
        kind: spec.experiment.kind().to_string(),
        passed,
        checks,
        artifacts: art.written,
        details,
    };
    write_json(&summary_path, &summary)?;
    Ok(summary)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "experiment": {
            "kind": "pde-run",
            "config": {
                "potential": { "u_star": 1.0, "sigma": 2.0 },
                "grid": { "length": 1.0, "cells": 32 },
                "dt": 0.005,
                "t_final": 0.1,
                "initial": {
                    "u0": { "kind": "cosine", "amplitude": 0.1, "mode": 1 },
                    "v0": { "kind": "constant", "c": 0.0 }
                }
            }
        }
    }"#;

    #[test]
    fn minimal_document_gets_defaults() {
        let spec = parse_config(MINIMAL).unwrap();
        let Experiment::PdeRun { config } = &spec.experiment else {
            panic!("wrong kind");
        };
        assert_eq!(config.sample_every, 10);
        assert_eq!(config.lambda, 0.5);
        assert_eq!(spec.output, OutputSpec::default());
    }

    #[test]
    fn round_trip() {
        let spec = parse_config(MINIMAL).unwrap();
        assert_eq!(parse_config(&emit(&spec).unwrap()).unwrap(), spec);
        let ode = ExperimentSpec {
            output: OutputSpec::default(),
            experiment: Experiment::OdeVerify {
                battery: Battery::Points(vec![(1.5, 1.0), (0.0, 0.7)]),
                sigmas: vec![10.0, 100.0],
                t_max: 30.0,
                ratio_threshold: 5.0,
            },
        };
        assert_eq!(parse_config(&emit(&ode).unwrap()).unwrap(), ode);
    }

    #[test]
    fn cfl_violation_names_bound() {
        let doc = MINIMAL.replace("\"dt\": 0.005", "\"dt\": 0.5");
        let err = parse_config(&doc).unwrap_err().to_string();
        assert!(err.contains("CFL limit"), "{err}");
        assert!(err.contains("0.015625"), "{err}");
    }

    #[test]
    fn degenerate_potential_rejected() {
        let doc = MINIMAL.replace("\"sigma\": 2.0", "\"sigma\": 1.0");
        let err = parse_config(&doc).unwrap_err().to_string();
        assert!(err.contains("sigma"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let doc = MINIMAL.replace("\"t_final\"", "\"sigmaa\": 3, \"t_final\"");
        let err = parse_config(&doc).unwrap_err().to_string();
        assert!(err.contains("sigmaa"), "{err}");
        let doc = MINIMAL.replace("\"experiment\"", "\"extra\": 1, \"experiment\"");
        assert!(parse_config(&doc).is_err());
    }

    #[test]
    fn refinement_levels_bounded() {
        let doc = MINIMAL
            .replace("\"pde-run\"", "\"pde-verify-energy\", \"levels\": 5");
        let err = parse_config(&doc).unwrap_err().to_string();
        assert!(err.contains("levels"), "{err}");
    }
}
