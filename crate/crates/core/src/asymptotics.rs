//! Long-time behaviour measured on a ledger: which equilibrium was
//! selected, the modulus predicted from the limit of `J`, exponential
//! decay rates, and the free damped motion of the mean when detached.

use serde::{Deserialize, Serialize};

use crate::energy::{balance_residual_e, balance_residual_j, LedgerRow};
use crate::error::{Error, Result};
use crate::potential::PotentialParams;

pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Zero,
    DetachedPlus,
    DetachedMinus,
    CriticalBand,
    Undecided,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub classification: Classification,
    pub u_inf: f64,
    /// Largest `‖v‖` over the inspected samples.
    pub velocity_residual: f64,
    /// Largest `max u − min u` over the inspected samples.
    pub spatial_oscillation: f64,
}

/// The last `max(3, ⌈fraction·n⌉)` rows (or all of them if fewer).
pub fn trailing(rows: &[LedgerRow], fraction: f64) -> &[LedgerRow] {
    let n = rows.len();
    let k = ((fraction * n as f64).ceil() as usize).max(3).min(n);
    &rows[n - k..]
}

pub fn detect_equilibrium(
    trailing: &[LedgerRow],
    p: &PotentialParams,
    tol: f64,
) -> Result<EquilibriumReport> {
    if trailing.len() < 3 {
        return Err(Error::Precondition(format!(
            "equilibrium detection needs at least 3 trailing samples, got {}",
            trailing.len()
        )));
    }
    let velocity_residual = trailing
        .iter()
        .map(|r| r.moments.v_sq.sqrt())
        .fold(0.0, f64::max);
    let spatial_oscillation = trailing
        .iter()
        .map(|r| r.moments.max_u - r.moments.min_u)
        .fold(0.0, f64::max);
    let u_inf = trailing[trailing.len() - 1].mean_u;
    let u_star = p.u_star();

    let classification = if velocity_residual > tol || spatial_oscillation > tol {
        Classification::Undecided
    } else if u_inf.abs() < tol {
        Classification::Zero
    } else if u_inf > u_star + tol {
        Classification::DetachedPlus
    } else if u_inf < -u_star - tol {
        Classification::DetachedMinus
    } else if (u_inf.abs() - u_star).abs() <= tol {
        Classification::CriticalBand
    } else {
        Classification::Undecided
    };
    Ok(EquilibriumReport {
        classification,
        u_inf,
        velocity_residual,
        spatial_oscillation,
    })
}

/// `|u_∞| = √(2ℓ/L)`.
pub fn predict_u_inf_modulus(ell: f64, domain_length: f64) -> Result<f64> {
    if !(ell >= 0.0) {
        return Err(Error::ParameterDomain(format!(
            "ell must be nonnegative, got {ell}"
        )));
    }
    if !(domain_length > 0.0) {
        return Err(Error::ParameterDomain(format!(
            "domain length must be positive, got {domain_length}"
        )));
    }
    Ok((2.0 * ell / domain_length).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EllEstimate {
    pub value: f64,
    /// Standard deviation of `J` over the averaging window.
    pub uncertainty: f64,
    pub samples: usize,
}

impl EllEstimate {
    /// Modulus prediction; a slightly negative estimate that is within its
    /// own uncertainty (or roundoff) of zero is read as zero.
    pub fn predicted_modulus(&self, domain_length: f64) -> Result<f64> {
        let slack = self.uncertainty + 1e-14;
        let ell = if self.value < 0.0 && self.value >= -slack {
            0.0
        } else {
            self.value
        };
        predict_u_inf_modulus(ell, domain_length)
    }
}

/// Mean of `J` over the trailing 10% of samples.
pub fn ell_limit(rows: &[LedgerRow]) -> Result<EllEstimate> {
    if rows.is_empty() {
        return Err(Error::Precondition("ell estimate needs a nonempty ledger".into()));
    }
    let k = ((0.1 * rows.len() as f64).ceil() as usize).max(1);
    let tail = &rows[rows.len() - k..];
    let mean = tail.iter().map(|r| r.j).sum::<f64>() / k as f64;
    let var = tail.iter().map(|r| (r.j - mean).powi(2)).sum::<f64>() / k as f64;
    Ok(EllEstimate {
        value: mean,
        uncertainty: var.sqrt(),
        samples: k,
    })
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub max_abs_residual: f64,
}

pub(crate) fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Precondition(
            "regressor is constant on the window; fit is degenerate".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| y - (intercept + slope * x))
        .collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let max_abs_residual = residuals.iter().map(|r| r.abs()).fold(0.0, f64::max);
    Ok(LineFit {
        slope,
        intercept,
        r_squared,
        max_abs_residual,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub kappa: f64,
    pub amplitude: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub samples: usize,
    pub series: String,
}

/// Fits `y ≈ M e^{−κt}` by least squares on `log y` over `window`.
pub fn fit_decay(series: &[(f64, f64)], window: (f64, f64), name: &str) -> Result<DecayFit> {
    let (t1, t2) = window;
    if !(t1 < t2) {
        return Err(Error::Precondition(format!("empty fit window [{t1}, {t2}]")));
    }
    let selected: Vec<(usize, f64, f64)> = series
        .iter()
        .enumerate()
        .filter(|(_, (t, _))| *t >= t1 && *t <= t2)
        .map(|(i, &(t, y))| (i, t, y))
        .collect();
    if selected.len() < 10 {
        return Err(Error::Precondition(format!(
            "decay fit needs at least 10 samples in [{t1}, {t2}], got {}",
            selected.len()
        )));
    }
    let bad: Vec<usize> = selected
        .iter()
        .filter(|(_, _, y)| !(*y > 0.0))
        .map(|(i, _, _)| *i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::Precondition(format!(
            "decay fit needs strictly positive samples; offending indices {bad:?}"
        )));
    }
    let ts: Vec<f64> = selected.iter().map(|s| s.1).collect();
    let logs: Vec<f64> = selected.iter().map(|s| s.2.ln()).collect();
    let line = fit_line(&ts, &logs)?;
    Ok(DecayFit {
        kappa: -line.slope,
        amplitude: line.intercept.exp(),
        window,
        r_squared: line.r_squared,
        samples: selected.len(),
        series: name.to_string(),
    })
}

/// Samples `(t, ‖u − u_inf‖_{H¹} + ‖v‖)`.
pub fn deviation_series(rows: &[LedgerRow], u_inf: f64) -> Vec<(f64, f64)> {
    rows.iter()
        .map(|r| (r.t, r.moments.decay_norm(u_inf)))
        .collect()
}

fn in_regime(r: &LedgerRow, p: &PotentialParams, class: Classification) -> bool {
    let m = &r.moments;
    match class {
        Classification::Zero => m.max_u.abs().max(m.min_u.abs()) < p.inner_edge(),
        Classification::DetachedPlus => m.min_u > p.u_star(),
        Classification::DetachedMinus => m.max_u < -p.u_star(),
        Classification::CriticalBand | Classification::Undecided => false,
    }
}

/// First sample time after which every sample stays in the linear regime
/// of the detected equilibrium: the elastic band for `Zero`, beyond the
/// threshold for the detached classes.
pub fn regime_entry_time(
    rows: &[LedgerRow],
    p: &PotentialParams,
    class: Classification,
) -> Option<f64> {
    match rows.iter().rposition(|r| !in_regime(r, p, class)) {
        None => rows.first().map(|r| r.t),
        Some(k) if k + 1 < rows.len() => Some(rows[k + 1].t),
        Some(_) => None,
    }
}

/// Fit of the mean displacement to `a + b e^{−t}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AverageOdeFit {
    pub a: f64,
    pub b: f64,
    pub max_residual: f64,
}

pub fn average_ode_check(
    rows: &[LedgerRow],
    window: (f64, f64),
    p: &PotentialParams,
) -> Result<AverageOdeFit> {
    let sel: Vec<&LedgerRow> = rows
        .iter()
        .filter(|r| r.t >= window.0 && r.t <= window.1)
        .collect();
    if sel.len() < 3 {
        return Err(Error::Precondition(format!(
            "average check needs at least 3 samples in [{}, {}]",
            window.0, window.1
        )));
    }
    let detached_plus = sel.iter().all(|r| r.moments.min_u > p.u_star());
    let detached_minus = sel.iter().all(|r| r.moments.max_u < -p.u_star());
    if !(detached_plus || detached_minus) {
        let first = sel
            .iter()
            .find(|r| r.moments.min_u <= p.u_star() && r.moments.max_u >= -p.u_star())
            .map_or(window.0, |r| r.t);
        return Err(Error::Precondition(format!(
            "window [{}, {}] is not fully detached (first attached sample at t = {first})",
            window.0, window.1
        )));
    }
    let t0 = window.0.max(sel[0].t);
    let basis: Vec<f64> = sel.iter().map(|r| (-(r.t - t0)).exp()).collect();
    let ys: Vec<f64> = sel.iter().map(|r| r.mean_u).collect();
    let (a, b_shifted, max_residual) = match fit_line(&basis, &ys) {
        Ok(line) => (line.intercept, line.slope, line.max_abs_residual),
        Err(_) => {
            return Err(Error::Precondition(
                "average check window too short to separate a and b e^{-t}".into(),
            ))
        }
    };
    Ok(AverageOdeFit {
        a,
        b: b_shifted * t0.exp(),
        max_residual,
    })
}

/// Indices `k` (sample pairs `k, k+1`, both at `t ≥ from`) where `G_λ`
/// about `u_inf` increases by more than `tol`.
pub fn g_lambda_increases(
    rows: &[LedgerRow],
    from: f64,
    lambda: f64,
    u_inf: f64,
    p: &PotentialParams,
    tol: f64,
) -> Vec<usize> {
    let phi_inf = p.phi(u_inf);
    let values: Vec<(usize, f64)> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.t >= from)
        .map(|(k, r)| (k, r.moments.g_lambda(lambda, u_inf, phi_inf)))
        .collect();
    values
        .windows(2)
        .filter(|w| w[1].1 > w[0].1 + tol)
        .map(|w| w[0].0)
        .collect()
}

/// Outcome of the comparison inequality on the samples where it applies.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonCheck {
    pub applicable: usize,
    pub violations: Vec<usize>,
    pub worst_margin: f64,
}

/// Checks `2∫(Φ(u) − Φ(u_∞)) ≤ ⟨u − u_∞, Φ′(u)⟩ + 10⁻¹⁰` on samples that
/// lie entirely in the elastic band or entirely beyond the threshold.
pub fn comparison_inequality(rows: &[LedgerRow], u_inf: f64, p: &PotentialParams) -> ComparisonCheck {
    let phi_inf = p.phi(u_inf);
    let mut applicable = 0;
    let mut violations = Vec::new();
    let mut worst_margin = f64::INFINITY;
    for (k, r) in rows.iter().enumerate() {
        let m = &r.moments;
        let max_abs = m.max_u.abs().max(m.min_u.abs());
        let min_abs = if m.min_u > 0.0 {
            m.min_u
        } else if m.max_u < 0.0 {
            -m.max_u
        } else {
            0.0
        };
        if !(max_abs < p.inner_edge() || min_abs > p.u_star()) {
            continue;
        }
        applicable += 1;
        let (lhs, rhs) = m.comparison_sides(u_inf, phi_inf);
        let margin = rhs + 1e-10 - lhs;
        worst_margin = worst_margin.min(margin);
        if margin < 0.0 {
            violations.push(k);
        }
    }
    ComparisonCheck {
        applicable,
        violations,
        worst_margin,
    }
}

/// Everything the run summary reports about one trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunAnalysis {
    pub equilibrium: EquilibriumReport,
    pub ell: EllEstimate,
    pub predicted_modulus: Option<f64>,
    pub regime_entry_time: Option<f64>,
    pub decay: Option<DecayFit>,
    pub residual_e_max: f64,
    pub residual_j_max: f64,
}

/// Relative level below which the deviation series is treated as noise
/// and excluded from decay fits.
pub const DECAY_FLOOR_RATIO: f64 = 1e-9;

/// Decay window from the regime entry time to the last sample before the
/// deviation drops below `DECAY_FLOOR_RATIO` of its value at entry.
pub fn decay_window(series: &[(f64, f64)], entry: f64) -> Option<(f64, f64)> {
    let start = series.iter().position(|(t, _)| *t >= entry)?;
    let y0 = series[start].1;
    let floor = y0 * DECAY_FLOOR_RATIO;
    let end = series[start..]
        .iter()
        .position(|(_, y)| *y < floor)
        .map_or(series.len() - 1, |k| start + k.saturating_sub(1));
    (series[end].0 > series[start].0).then(|| (series[start].0, series[end].0))
}

pub fn analyze_run(rows: &[LedgerRow], p: &PotentialParams, tol: f64) -> Result<RunAnalysis> {
    let equilibrium = detect_equilibrium(trailing(rows, 0.1), p, tol)?;
    let ell = ell_limit(rows)?;
    let length = rows[0].moments.length;
    let predicted_modulus = ell.predicted_modulus(length).ok();
    let class = equilibrium.classification;
    let regime_entry_time = regime_entry_time(rows, p, class);
    let decay = match (class, regime_entry_time) {
        (Classification::Zero | Classification::DetachedPlus | Classification::DetachedMinus, Some(t)) => {
            let u_inf = if class == Classification::Zero {
                0.0
            } else {
                equilibrium.u_inf
            };
            let series = deviation_series(rows, u_inf);
            decay_window(&series, t)
                .and_then(|w| fit_decay(&series, w, "h1_dev_plus_v").ok())
        }
        _ => None,
    };
    Ok(RunAnalysis {
        equilibrium,
        ell,
        predicted_modulus,
        regime_entry_time,
        decay,
        residual_e_max: balance_residual_e(rows)?.max,
        residual_j_max: balance_residual_j(rows)?.max,
    })
}
