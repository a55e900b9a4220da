use rayon::prelude::*;
use serde::Serialize;

use super::{classify_case, rk_oracle, solve_exact, Case, OdeParams};
use crate::error::{Error, Result};

/// Spacing of the time grid on which `M` is measured.
pub const GRID_STEP: f64 = 0.01;
/// Deviations below this are rounding noise and are left out of `M`.
pub const DEVIATION_FLOOR: f64 = 1e-13;
/// Largest accepted max/min ratio of `M` across `σ` for one datum.
pub const RATIO_THRESHOLD: f64 = 5.0;

/// Initial data used for the uniform-decay sweep.
pub fn default_battery() -> Vec<(f64, f64)> {
    vec![
        (1.5, 1.0),
        (2.0, 0.0),
        (3.0, -1.0),
        (2.0, -3.0),
        (1.0, -1.0),
        (0.5, 0.0),
        (0.0, 0.7),
        (0.0, 3.0),
        (-1.5, -1.0),
        (-2.0, 3.0),
        (-1.0, 2.0),
        (0.3, -0.4),
    ]
}

/// 25 points covering every case, mirrored variants included; band-edge
/// points depend on `σ`.
pub fn case_battery(p: &OdeParams) -> Vec<(f64, f64)> {
    let b = p.band_edge();
    vec![
        // I
        (1.5, 1.0),
        (1.0, 0.5),
        (-2.0, -0.3),
        // II
        (2.0, 0.0),
        (1.0, 0.0),
        (-1.5, 0.0),
        // III
        (3.0, -1.0),
        (2.0, -1.0),
        (-2.5, 0.8),
        // IV
        (2.0, -3.0),
        (1.2, -2.0),
        (-3.0, 4.0),
        // V
        (1.0, -1.0),
        (1.0, -0.1),
        (-1.0, 2.0),
        // VI
        (0.0, 0.7),
        (0.0, 3.0),
        (b, 0.0),
        (-b, 0.4),
        (0.3 * b, -0.4),
        (0.0, 0.0),
        // VII
        (b, 0.5),
        (b, 3.0),
        (-b, -1.0),
        (-b, -0.05),
    ]
}

/// Largest `|z_exact − z_oracle|` on a grid of spacing `step` over `[0, t_end]`.
pub fn oracle_gap(z0: f64, w0: f64, p: &OdeParams, t_end: f64, tol: f64, step: f64) -> Result<f64> {
    let exact = solve_exact(z0, w0, p, t_end)?;
    let oracle = rk_oracle(z0, w0, p, t_end, tol)?;
    let n = (t_end / step).round() as usize;
    Ok((0..=n)
        .map(|i| {
            let t = (i as f64 * step).min(t_end);
            (exact.eval(t).0 - oracle.eval(t).0).abs()
        })
        .fold(0.0, f64::max))
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepEntry {
    pub sigma: f64,
    pub z_inf: f64,
    pub m: f64,
    pub segments: usize,
    pub middle_visits: usize,
    pub band_transitions: usize,
    pub cases: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DatumReport {
    pub z0: f64,
    pub w0: f64,
    pub runs: Vec<SweepEntry>,
    /// max/min of `M` across `σ`; 1 when every `M` vanishes.
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub sigmas: Vec<f64>,
    pub t_max: f64,
    pub grid_step: f64,
    pub data: Vec<DatumReport>,
    pub max_ratio: f64,
    pub ratio_threshold: f64,
    /// Largest `|z_inf|` over every run.
    pub r_empirical: f64,
    pub max_middle_visits: usize,
    pub max_band_transitions: usize,
}

impl DecayReport {
    pub fn ratio_ok(&self) -> bool {
        self.max_ratio <= self.ratio_threshold
    }

    pub fn structure_ok(&self) -> bool {
        self.max_middle_visits <= 2 && self.max_band_transitions <= 1
    }

    pub fn all_finite(&self) -> bool {
        self.data
            .iter()
            .flat_map(|d| &d.runs)
            .all(|r| r.m.is_finite() && r.z_inf.is_finite())
    }

    pub fn passes(&self) -> bool {
        self.all_finite() && self.ratio_ok() && self.structure_ok()
    }
}

fn case_name(c: Case, mirrored: bool) -> String {
    let base = match c {
        Case::I => "I",
        Case::II => "II",
        Case::III => "III",
        Case::IV => "IV",
        Case::V => "V",
        Case::VI => "VI",
        Case::VII => "VII",
        Case::BandInterior => "band_interior",
    };
    if mirrored {
        format!("-{base}")
    } else {
        base.to_string()
    }
}

fn sweep_entry(z0: f64, w0: f64, sigma: f64, t_max: f64) -> Result<SweepEntry> {
    let p = OdeParams::new(sigma)?;
    if classify_case(z0, w0, &p).case == Case::BandInterior {
        return Err(Error::Precondition(format!(
            "({z0}, {w0}) starts inside a middle band at sigma = {sigma}"
        )));
    }
    let tr = solve_exact(z0, w0, &p, t_max)?;
    let z_inf = tr.z_inf.ok_or_else(|| {
        Error::Consistency(format!(
            "({z0}, {w0}) at sigma = {sigma} has no limit by t = {t_max}"
        ))
    })?;
    let n = (t_max / GRID_STEP).round() as usize;
    let m = (0..=n)
        .map(|i| {
            let t = i as f64 * GRID_STEP;
            let dev = (tr.eval(t).0 - z_inf).abs();
            if dev < DEVIATION_FLOOR {
                0.0
            } else {
                dev * (0.5 * t).exp()
            }
        })
        .fold(0.0, f64::max);
    Ok(SweepEntry {
        sigma,
        z_inf,
        m,
        segments: tr.segments.len(),
        middle_visits: tr.middle_visits(),
        band_transitions: tr.band_to_band_transitions(&p),
        cases: tr
            .segments
            .iter()
            .map(|s| case_name(s.label.case, s.label.mirrored))
            .collect(),
    })
}

/// Measures `M(σ) = max_t |z(t) − z_inf| e^{t/2}` for every datum and `σ`.
pub fn verify_uniform_decay(battery: &[(f64, f64)], sigmas: &[f64], t_max: f64) -> Result<DecayReport> {
    if battery.is_empty() || sigmas.is_empty() {
        return Err(Error::Precondition("empty battery or sigma list".into()));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::Precondition(format!("t_max must be positive, got {t_max}")));
    }
    let data = battery
        .par_iter()
        .map(|&(z0, w0)| {
            let runs = sigmas
                .par_iter()
                .map(|&s| sweep_entry(z0, w0, s, t_max))
                .collect::<Result<Vec<_>>>()?;
            let hi = runs.iter().map(|r| r.m).fold(0.0, f64::max);
            let lo = runs.iter().map(|r| r.m).fold(f64::INFINITY, f64::min);
            let ratio = if hi == 0.0 { 1.0 } else { hi / lo };
            Ok(DatumReport { z0, w0, runs, ratio })
        })
        .collect::<Result<Vec<_>>>()?;
    let runs = || data.iter().flat_map(|d| &d.runs);
    Ok(DecayReport {
        sigmas: sigmas.to_vec(),
        t_max,
        grid_step: GRID_STEP,
        max_ratio: data.iter().map(|d| d.ratio).fold(0.0, f64::max),
        ratio_threshold: RATIO_THRESHOLD,
        r_empirical: runs().map(|r| r.z_inf.abs()).fold(0.0, f64::max),
        max_middle_visits: runs().map(|r| r.middle_visits).max().unwrap_or(0),
        max_band_transitions: runs().map(|r| r.band_transitions).max().unwrap_or(0),
        data,
    })
}
