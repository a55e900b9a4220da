//! The scalar damped spring `z'' + z' + Φ′(z) = 0` with threshold `u_* = 1`.
//!
//! On each band of the potential the equation is linear, so a trajectory
//! is a chain of closed-form segments joined at band edges. [`exact`]
//! builds that chain, [`oracle`] integrates the same equation with an
//! adaptive Runge–Kutta pair, and [`verify`] compares the two and measures
//! the uniform `e^{−t/2}` envelope across `σ`.

pub mod exact;
pub mod oracle;
pub mod verify;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::PotentialParams;

pub use exact::{next_event, regime_solution, solve_exact, ClosedForm, Event, PiecewiseTrajectory, Segment};
pub use oracle::{rk_oracle, DenseTrajectory};
pub use verify::{default_battery, verify_uniform_decay, DecayReport};

/// Steepness of the potential; the threshold is fixed at 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawOdeParams", into = "RawOdeParams")]
pub struct OdeParams {
    sigma: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOdeParams {
    sigma: f64,
}

impl TryFrom<RawOdeParams> for OdeParams {
    type Error = Error;
    fn try_from(raw: RawOdeParams) -> Result<Self> {
        OdeParams::new(raw.sigma)
    }
}

impl From<OdeParams> for RawOdeParams {
    fn from(p: OdeParams) -> Self {
        RawOdeParams { sigma: p.sigma }
    }
}

/// Frequency of the elastic band, `√7/2`.
pub const OMEGA: f64 = 1.322_875_655_532_295_3;

impl OdeParams {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 1.0) {
            return Err(Error::ParameterDomain(format!(
                "ODE model needs sigma >= 1, got {sigma}"
            )));
        }
        Ok(OdeParams { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn discriminant(&self) -> f64 {
        (1.0 + 8.0 * (self.sigma - 1.0)).sqrt()
    }

    /// Decaying rate of the middle band, `(1 + √(1 + 8(σ−1)))/2`.
    pub fn lambda(&self) -> f64 {
        0.5 * (1.0 + self.discriminant())
    }

    /// Growing rate of the middle band, `(−1 + √(1 + 8(σ−1)))/2`.
    pub fn mu(&self) -> f64 {
        0.5 * (self.discriminant() - 1.0)
    }

    pub fn omega(&self) -> f64 {
        OMEGA
    }

    /// Edge of the elastic band, `1 − 1/σ`.
    pub fn band_edge(&self) -> f64 {
        1.0 - 1.0 / self.sigma
    }

    /// `None` for `σ = 1`, where the potential vanishes identically.
    pub fn potential(&self) -> Option<PotentialParams> {
        PotentialParams::new(1.0, self.sigma).ok()
    }

    pub fn force(&self, z: f64) -> f64 {
        self.potential().map_or(0.0, |p| p.dphi(z))
    }

    pub fn energy(&self, z: f64, w: f64) -> f64 {
        0.5 * w * w + self.potential().map_or(0.0, |p| p.phi(z))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    OuterPlus,
    OuterMinus,
    MiddlePlus,
    MiddleMinus,
    Inner,
}

impl Regime {
    pub fn is_middle(self) -> bool {
        matches!(self, Regime::MiddlePlus | Regime::MiddleMinus)
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::OuterPlus => "outer_plus",
            Regime::OuterMinus => "outer_minus",
            Regime::MiddlePlus => "middle_plus",
            Regime::MiddleMinus => "middle_minus",
            Regime::Inner => "inner",
        }
    }

    fn sign(self) -> f64 {
        match self {
            Regime::OuterMinus | Regime::MiddleMinus => -1.0,
            _ => 1.0,
        }
    }

    /// Whether `z` lies in the closed band of this regime.
    pub fn contains(self, z: f64, p: &OdeParams) -> bool {
        let b = p.band_edge();
        match self {
            Regime::OuterPlus => z >= 1.0,
            Regime::OuterMinus => z <= -1.0,
            Regime::MiddlePlus => (b..=1.0).contains(&z),
            Regime::MiddleMinus => (-1.0..=-b).contains(&z),
            Regime::Inner => z.abs() <= b,
        }
    }
}

/// The initial-data cases of the case-by-case analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Case {
    /// Beyond the threshold, moving outwards.
    I,
    /// Beyond the threshold, at rest.
    II,
    /// Beyond the threshold, moving inwards, stops before reaching it.
    III,
    /// Beyond the threshold, moving inwards fast enough to reach it.
    IV,
    /// At the threshold, moving inwards.
    V,
    /// In the elastic band (edges included unless moving outwards).
    VI,
    /// At the elastic band edge, moving outwards.
    VII,
    /// Strictly inside a middle band; never produced by the event chain.
    BandInterior,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CaseLabel {
    pub case: Case,
    /// Whether the data are the mirror image (`z ↦ −z`) of the listed case.
    pub mirrored: bool,
    pub regime: Regime,
}

/// Maps `(z, w)` to its case and regime, resolving band edges by the sign
/// of the velocity; `(±(1 − 1/σ), 0)` enters the elastic band.
pub fn classify_case(z: f64, w: f64, p: &OdeParams) -> CaseLabel {
    let mirrored = z < 0.0 || (z == 0.0 && w < 0.0);
    let (zz, ww) = if mirrored { (-z, -w) } else { (z, w) };
    let b = p.band_edge();

    let (case, positive_regime) = if zz >= 1.0 {
        if ww > 0.0 {
            (Case::I, Regime::OuterPlus)
        } else if ww == 0.0 {
            (Case::II, Regime::OuterPlus)
        } else if zz == 1.0 {
            (Case::V, Regime::MiddlePlus)
        } else if 1.0 - zz <= ww {
            (Case::III, Regime::OuterPlus)
        } else {
            (Case::IV, Regime::OuterPlus)
        }
    } else if zz > b {
        (Case::BandInterior, Regime::MiddlePlus)
    } else if zz == b && ww > 0.0 {
        (Case::VII, Regime::MiddlePlus)
    } else {
        (Case::VI, Regime::Inner)
    };

    let regime = match (positive_regime, mirrored) {
        (Regime::OuterPlus, true) => Regime::OuterMinus,
        (Regime::MiddlePlus, true) => Regime::MiddleMinus,
        (r, _) => r,
    };
    CaseLabel {
        case,
        mirrored,
        regime,
    }
}
