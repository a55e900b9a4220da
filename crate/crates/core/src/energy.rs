//! Discrete energy, the auxiliary functionals, and the dissipation ledger.
//!
//! L² terms use the trapezoid rule on nodes, gradient terms the cell sum of
//! squared differences. With mirror ghost nodes these satisfy an exact
//! summation-by-parts identity, so the semi-discrete balances carry no
//! spatial error and the residuals below measure time-stepping error only.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pde::{ForceLaw, PdeState};
use crate::potential::PotentialParams;

/// Quadratures of one state from which every ledger functional, for any
/// constant reference, can be assembled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Moments {
    pub length: f64,
    /// `‖u‖²`
    pub u_sq: f64,
    /// `‖u − ū‖²`, computed directly to avoid cancellation.
    pub u_centered_sq: f64,
    /// `‖∇u‖²`
    pub grad_sq: f64,
    /// `‖v‖²`
    pub v_sq: f64,
    /// `⟨u, v⟩`
    pub uv: f64,
    pub int_u: f64,
    pub int_v: f64,
    /// `∫Φ(u)`
    pub int_potential: f64,
    /// `⟨u, Φ′(u)⟩`
    pub u_dot_force: f64,
    /// `∫Φ′(u)`
    pub int_force: f64,
    pub min_u: f64,
    pub max_u: f64,
}

impl Moments {
    pub fn of(s: &PdeState, force: &ForceLaw) -> Self {
        let g = &s.grid;
        let int_u = g.integrate(&s.u);
        let mean = int_u / g.length();
        let centered: Vec<f64> = s.u.iter().map(|u| u - mean).collect();
        let pot: Vec<f64> = s.u.iter().map(|&u| force.potential(u)).collect();
        let f: Vec<f64> = s.u.iter().map(|&u| force.force(u)).collect();
        let (min_u, max_u) = s
            .u
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &u| (lo.min(u), hi.max(u)));
        Moments {
            length: g.length(),
            u_sq: g.inner(&s.u, &s.u),
            u_centered_sq: g.inner(&centered, &centered),
            grad_sq: g.grad_sq(&s.u),
            v_sq: g.inner(&s.v, &s.v),
            uv: g.inner(&s.u, &s.v),
            int_u,
            int_v: g.integrate(&s.v),
            int_potential: g.integrate(&pot),
            u_dot_force: g.inner(&s.u, &f),
            int_force: g.integrate(&f),
            min_u,
            max_u,
        }
    }

    pub fn mean_u(&self) -> f64 {
        self.int_u / self.length
    }

    pub fn energy(&self) -> f64 {
        0.5 * self.v_sq + 0.5 * self.grad_sq + self.int_potential
    }

    pub fn j(&self) -> f64 {
        0.5 * self.u_sq + self.uv
    }

    pub fn g(&self) -> f64 {
        0.5 * self.v_sq + 0.5 * self.grad_sq + 0.5 * self.u_sq + 0.5 * self.uv
    }

    /// `G_λ` about the constant `u_ref`, given `Φ(u_ref)`.
    pub fn g_lambda(&self, lambda: f64, u_ref: f64, potential_at_ref: f64) -> f64 {
        0.5 * self.v_sq + 0.5 * self.grad_sq + self.int_potential
            - self.length * potential_at_ref
            + lambda * (self.uv - u_ref * self.int_v)
    }

    /// `‖u − c‖²`
    pub fn deviation_sq(&self, c: f64) -> f64 {
        let shift = self.mean_u() - c;
        self.u_centered_sq + self.length * shift * shift
    }

    /// `‖u − c‖_{H¹}`
    pub fn h1_deviation(&self, c: f64) -> f64 {
        (self.deviation_sq(c) + self.grad_sq).sqrt()
    }

    /// `‖u − c‖_{H¹} + ‖v‖`
    pub fn decay_norm(&self, c: f64) -> f64 {
        self.h1_deviation(c) + self.v_sq.sqrt()
    }

    /// `‖(u, v)‖²_H = ‖u‖²_{H¹} + ‖v‖²`
    pub fn energy_space_norm_sq(&self) -> f64 {
        self.u_sq + self.grad_sq + self.v_sq
    }

    /// Both sides of `2∫(Φ(u) − Φ(c)) ≤ ⟨u − c, Φ′(u)⟩`.
    pub fn comparison_sides(&self, c: f64, potential_at_c: f64) -> (f64, f64) {
        (
            2.0 * (self.int_potential - self.length * potential_at_c),
            self.u_dot_force - c * self.int_force,
        )
    }
}

/// One sampled row of the ledger. `d` and `s` are the running integrals
/// `∫‖∂ₜu‖²` and `∫(‖∇u‖² + ⟨u, Φ′(u)⟩ − ‖∂ₜu‖²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LedgerRow {
    pub t: f64,
    pub e: f64,
    pub j: f64,
    pub g: f64,
    pub g_lambda: f64,
    pub d: f64,
    pub s: f64,
    pub mean_u: f64,
    pub h1_dev: f64,
    pub moments: Moments,
}

impl LedgerRow {
    pub fn from_moments(
        t: f64,
        m: Moments,
        d: f64,
        s: f64,
        lambda: f64,
        u_ref: f64,
        potential_at_ref: f64,
    ) -> Self {
        LedgerRow {
            t,
            e: m.energy(),
            j: m.j(),
            g: m.g(),
            g_lambda: m.g_lambda(lambda, u_ref, potential_at_ref),
            d,
            s,
            mean_u: m.mean_u(),
            h1_dev: m.h1_deviation(u_ref),
            moments: m,
        }
    }
}

#[derive(Serialize)]
struct CsvRow {
    t: f64,
    #[serde(rename = "E")]
    e: f64,
    #[serde(rename = "J")]
    j: f64,
    #[serde(rename = "G")]
    g: f64,
    #[serde(rename = "G_lambda")]
    g_lambda: f64,
    #[serde(rename = "D")]
    d: f64,
    #[serde(rename = "S")]
    s: f64,
    mean_u: f64,
    h1_dev: f64,
}

pub const LEDGER_COLUMNS: [&str; 9] = ["t", "E", "J", "G", "G_lambda", "D", "S", "mean_u", "h1_dev"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnergyLedger {
    pub rows: Vec<LedgerRow>,
}

impl EnergyLedger {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(CsvRow {
                t: r.t,
                e: r.e,
                j: r.j,
                g: r.g,
                g_lambda: r.g_lambda,
                d: r.d,
                s: r.s,
                mean_u: r.mean_u,
                h1_dev: r.h1_dev,
            })?;
        }
        w.flush().map_err(|e| Error::io("<ledger>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

pub fn energy_e(s: &PdeState, p: &PotentialParams) -> f64 {
    Moments::of(s, &ForceLaw::Adhesion(*p)).energy()
}

pub fn functional_j(s: &PdeState) -> f64 {
    let g = &s.grid;
    0.5 * g.inner(&s.u, &s.u) + g.inner(&s.u, &s.v)
}

pub fn functional_g(s: &PdeState) -> f64 {
    let g = &s.grid;
    0.5 * g.inner(&s.v, &s.v)
        + 0.5 * g.grad_sq(&s.u)
        + 0.5 * g.inner(&s.u, &s.u)
        + 0.5 * g.inner(&s.u, &s.v)
}

pub fn functional_g_lambda(
    s: &PdeState,
    lambda: f64,
    u_inf: f64,
    p: &PotentialParams,
) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::ParameterDomain(format!(
            "lambda must lie in (0, 1), got {lambda}"
        )));
    }
    let m = Moments::of(s, &ForceLaw::Adhesion(*p));
    Ok(m.g_lambda(lambda, u_inf, p.phi(u_inf)))
}

/// Relative residual of a balance identity at every sample.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualProfile {
    pub max: f64,
    pub profile: Vec<f64>,
}

const RESIDUAL_FLOOR: f64 = 1e-12;

fn residual(
    rows: &[LedgerRow],
    normalizer: f64,
    defect: impl Fn(&LedgerRow) -> f64,
) -> Result<ResidualProfile> {
    if rows.len() < 2 {
        return Err(Error::Precondition(format!(
            "balance residual needs at least 2 samples, got {}",
            rows.len()
        )));
    }
    let scale = normalizer.max(RESIDUAL_FLOOR);
    let profile: Vec<f64> = rows.iter().map(|r| defect(r).abs() / scale).collect();
    let max = profile.iter().copied().fold(0.0, f64::max);
    Ok(ResidualProfile { max, profile })
}

/// `|E(t) + D(t) − E(0)| / max(E(0), 10⁻¹²)`
pub fn balance_residual_e(rows: &[LedgerRow]) -> Result<ResidualProfile> {
    let e0 = rows.first().map_or(0.0, |r| r.e);
    residual(rows, e0, |r| r.e + r.d - e0)
}

/// `|J(t) + S(t) − J(0)| / max(|J(0)| + E(0), 10⁻¹²)`
pub fn balance_residual_j(rows: &[LedgerRow]) -> Result<ResidualProfile> {
    let (j0, e0) = rows.first().map_or((0.0, 0.0), |r| (r.j, r.e));
    residual(rows, j0.abs() + e0, |r| r.j + r.s - j0)
}

/// Indices `k` where `value(k+1) > value(k) + tol`.
pub fn increases(rows: &[LedgerRow], tol: f64, value: impl Fn(&LedgerRow) -> f64) -> Vec<usize> {
    rows.windows(2)
        .enumerate()
        .filter(|(_, w)| value(&w[1]) > value(&w[0]) + tol)
        .map(|(k, _)| k)
        .collect()
}
