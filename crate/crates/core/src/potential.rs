//! Piecewise-quadratic adhesion potential and its force.
//!
//! The potential is elastic (`u²`) near the origin, bends over in a concave
//! band of width `1/σ` below the detachment threshold `u_*`, and is constant
//! beyond it. Everything is evaluated on `|u|`, so evenness of the potential
//! and oddness of the force hold bit-for-bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Detachment threshold and steepness of the adhesion potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPotentialParams", into = "RawPotentialParams")]
pub struct PotentialParams {
    u_star: f64,
    sigma: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPotentialParams {
    u_star: f64,
    sigma: f64,
}

impl TryFrom<RawPotentialParams> for PotentialParams {
    type Error = Error;

    fn try_from(raw: RawPotentialParams) -> Result<Self> {
        PotentialParams::new(raw.u_star, raw.sigma)
    }
}

impl From<PotentialParams> for RawPotentialParams {
    fn from(p: PotentialParams) -> Self {
        RawPotentialParams {
            u_star: p.u_star,
            sigma: p.sigma,
        }
    }
}

/// Which closed-form piece of the potential applies at `|u|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Inner,
    Middle,
    Plateau,
}

impl PotentialParams {
    pub fn new(u_star: f64, sigma: f64) -> Result<Self> {
        if !(u_star.is_finite() && u_star > 0.0) {
            return Err(Error::ParameterDomain(format!(
                "u_star must be positive and finite, got {u_star}"
            )));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::ParameterDomain(format!(
                "sigma must be positive and finite, got {sigma}"
            )));
        }
        if u_star * sigma <= 1.0 {
            return Err(Error::ParameterDomain(format!(
                "sigma * u_star must exceed 1 (got {} * {} = {})",
                sigma,
                u_star,
                sigma * u_star
            )));
        }
        Ok(PotentialParams { u_star, sigma })
    }

    pub fn u_star(&self) -> f64 {
        self.u_star
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Upper end of the elastic band, `u_* − 1/σ`.
    pub fn inner_edge(&self) -> f64 {
        self.u_star - 1.0 / self.sigma
    }

    /// Constant value on the plateau, `u_*(u_* − 1/σ)`.
    pub fn plateau_value(&self) -> f64 {
        self.u_star * self.inner_edge()
    }

    /// Coefficient `u_*σ − 1` of the concave middle band.
    pub fn middle_coefficient(&self) -> f64 {
        self.u_star * self.sigma - 1.0
    }

    /// Lipschitz constant of the force over the whole line.
    pub fn force_lipschitz(&self) -> f64 {
        2.0 * self.middle_coefficient().max(1.0)
    }

    pub fn branch(&self, abs_u: f64) -> Branch {
        if abs_u <= self.inner_edge() {
            Branch::Inner
        } else if abs_u <= self.u_star {
            Branch::Middle
        } else {
            Branch::Plateau
        }
    }

    /// Potential of a given branch evaluated at `a ≥ 0`, regardless of
    /// whether `a` lies in that branch.
    pub fn branch_phi(&self, branch: Branch, a: f64) -> f64 {
        match branch {
            Branch::Inner => a * a,
            Branch::Middle => {
                let gap = self.u_star - a;
                self.plateau_value() - self.middle_coefficient() * gap * gap
            }
            Branch::Plateau => self.plateau_value(),
        }
    }

    /// Force of a given branch evaluated at `a ≥ 0`.
    pub fn branch_dphi(&self, branch: Branch, a: f64) -> f64 {
        match branch {
            Branch::Inner => 2.0 * a,
            Branch::Middle => 2.0 * self.middle_coefficient() * (self.u_star - a),
            Branch::Plateau => 0.0,
        }
    }

    pub fn phi(&self, u: f64) -> f64 {
        let a = u.abs();
        self.branch_phi(self.branch(a), a)
    }

    pub fn dphi(&self, u: f64) -> f64 {
        let a = u.abs();
        let f = self.branch_dphi(self.branch(a), a);
        if u < 0.0 {
            -f
        } else {
            f
        }
    }

    /// Breakpoints `±(u_* − 1/σ)`, `±u_*` in increasing order.
    pub fn breakpoints(&self) -> [f64; 4] {
        let b = self.inner_edge();
        [-self.u_star, -b, b, self.u_star]
    }

    /// Largest mismatch of `(Φ, Φ′)` between the two branches meeting at
    /// each of the four breakpoints.
    pub fn breakpoint_jumps(&self) -> (f64, f64) {
        let b = self.inner_edge();
        let pairs = [(Branch::Inner, Branch::Middle, b), (Branch::Middle, Branch::Plateau, self.u_star)];
        let mut jump_phi: f64 = 0.0;
        let mut jump_dphi: f64 = 0.0;
        for x in self.breakpoints() {
            let a = x.abs();
            for &(left, right, edge) in &pairs {
                if a == edge {
                    jump_phi = jump_phi.max((self.branch_phi(left, a) - self.branch_phi(right, a)).abs());
                    jump_dphi = jump_dphi.max((self.branch_dphi(left, a) - self.branch_dphi(right, a)).abs());
                }
            }
        }
        (jump_phi, jump_dphi)
    }
}

/// Result of sweeping the listed structural properties over a grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyReport {
    pub samples: usize,
    /// Samples with `|Φ| > u_*²`.
    pub bound_violations: usize,
    pub max_abs_phi: f64,
    /// Samples with `uΦ′(u) < 0`.
    pub sign_violations: usize,
    /// Consecutive slope pairs of `Φ(u) − u²` that increase.
    pub concavity_violations: usize,
    /// Largest difference quotient of `Φ′` on the grid.
    pub lipschitz_estimate: f64,
    pub lipschitz_bound: f64,
    pub lipschitz_ok: bool,
    pub max_abs_dphi: f64,
    /// Whether `|Φ′| ≤ 2` held literally on the grid.
    pub force_bound_two_holds: bool,
    /// Whether `|Φ′| ≤ 2·max(1, u_*)` held; this is what passes/fails.
    pub force_bound_ok: bool,
}

impl PropertyReport {
    pub fn all_pass(&self) -> bool {
        self.bound_violations == 0
            && self.sign_violations == 0
            && self.concavity_violations == 0
            && self.lipschitz_ok
            && self.force_bound_ok
    }
}

/// Sweeps `grid` (sorted, covering `[−2u_*, 2u_*]`, spacing at most
/// `1/(10 u_* σ)`) and reports violations of the structural properties.
pub fn check_properties(p: &PotentialParams, grid: &[f64]) -> Result<PropertyReport> {
    let u_star = p.u_star();
    let max_spacing = 1.0 / (10.0 * u_star * p.sigma());
    if grid.len() < 3 {
        return Err(Error::Precondition(format!(
            "property sweep needs at least 3 points, got {}",
            grid.len()
        )));
    }
    if grid[0] > -2.0 * u_star || grid[grid.len() - 1] < 2.0 * u_star {
        return Err(Error::Precondition(format!(
            "grid [{}, {}] does not cover [-2u_*, 2u_*] = [{}, {}]",
            grid[0],
            grid[grid.len() - 1],
            -2.0 * u_star,
            2.0 * u_star
        )));
    }
    let mut min_spacing = f64::INFINITY;
    for w in grid.windows(2) {
        let h = w[1] - w[0];
        if !(h > 0.0) {
            return Err(Error::Precondition("grid must be strictly increasing".into()));
        }
        if h > max_spacing {
            return Err(Error::Precondition(format!(
                "grid spacing {h} exceeds 1/(10 u_* sigma) = {max_spacing}"
            )));
        }
        min_spacing = min_spacing.min(h);
    }

    let bound = u_star * u_star;
    let phi: Vec<f64> = grid.iter().map(|&u| p.phi(u)).collect();
    let dphi: Vec<f64> = grid.iter().map(|&u| p.dphi(u)).collect();

    let max_abs_phi = phi.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let bound_violations = phi.iter().filter(|v| v.abs() > bound).count();
    let sign_violations = grid
        .iter()
        .zip(&dphi)
        .filter(|(&u, &f)| u * f < 0.0)
        .count();

    // Roundoff in Φ(u) − u² is a few ulps of the largest value on the grid;
    // divided by the spacing it bounds the noise in a difference quotient.
    let scale = grid[grid.len() - 1].abs().max(grid[0].abs()).powi(2).max(bound);
    let slope_tol = 16.0 * f64::EPSILON * scale / min_spacing;
    let excess: Vec<f64> = grid.iter().zip(&phi).map(|(&u, &f)| f - u * u).collect();
    let slopes: Vec<f64> = excess
        .windows(2)
        .zip(grid.windows(2))
        .map(|(g, x)| (g[1] - g[0]) / (x[1] - x[0]))
        .collect();
    let concavity_violations = slopes
        .windows(2)
        .filter(|s| s[1] > s[0] + slope_tol)
        .count();

    let lipschitz_estimate = dphi
        .windows(2)
        .zip(grid.windows(2))
        .map(|(f, x)| (f[1] - f[0]).abs() / (x[1] - x[0]))
        .fold(0.0_f64, f64::max);
    let lipschitz_bound = p.force_lipschitz();
    let lip_tol = 16.0 * f64::EPSILON * 2.0 * u_star.max(1.0) / min_spacing;
    let max_abs_dphi = dphi.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    Ok(PropertyReport {
        samples: grid.len(),
        bound_violations,
        max_abs_phi,
        sign_violations,
        concavity_violations,
        lipschitz_estimate,
        lipschitz_bound,
        lipschitz_ok: lipschitz_estimate <= lipschitz_bound + lip_tol,
        max_abs_dphi,
        force_bound_two_holds: max_abs_dphi <= 2.0,
        force_bound_ok: max_abs_dphi <= 2.0 * u_star.max(1.0),
    })
}

/// Uniform grid of `n` points on `[from, to]`.
pub fn uniform_grid(from: f64, to: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![from];
    }
    let h = (to - from) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { to } else { from + i as f64 * h })
        .collect()
}

/// Rows `(u, Φ(u), Φ′(u))` on `from, from + step, …` up to `to` inclusive.
pub fn table(p: &PotentialParams, from: f64, to: f64, step: f64) -> Result<Vec<[f64; 3]>> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Precondition(format!("step must be positive, got {step}")));
    }
    if !(to >= from) {
        return Err(Error::Precondition(format!("empty range [{from}, {to}]")));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..n)
        .map(|i| {
            let u = from + i as f64 * step;
            [u, p.phi(u), p.dphi(u)]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn params(u_star: f64, sigma: f64) -> PotentialParams {
        PotentialParams::new(u_star, sigma).unwrap()
    }

    #[test]
    fn reference_values() {
        let p = params(1.0, 2.0);
        assert_eq!(p.phi(0.0), 0.0);
        assert_eq!(p.phi(3.0), 0.5);
        assert_eq!(p.phi(0.5), 0.25);
        assert_abs_diff_eq!(params(1.0, 4.0).phi(0.9), 0.72, epsilon = 1e-15);

        assert_eq!(p.dphi(0.0), 0.0);
        assert_eq!(p.dphi(1.0), 0.0);
        assert_eq!(p.dphi(0.25), 0.5);
        assert_abs_diff_eq!(p.dphi(0.75), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn rejects_degenerate_parameters() {
        assert!(matches!(
            PotentialParams::new(1.0, 1.0),
            Err(Error::ParameterDomain(_))
        ));
        assert!(PotentialParams::new(0.5, 1.5).is_err());
        assert!(PotentialParams::new(-1.0, 10.0).is_err());
        assert!(PotentialParams::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn deserialization_validates() {
        let ok: PotentialParams = serde_json::from_str(r#"{"u_star":1,"sigma":2}"#).unwrap();
        assert_eq!(ok, params(1.0, 2.0));
        assert!(serde_json::from_str::<PotentialParams>(r#"{"u_star":1,"sigma":1}"#).is_err());
        assert!(
            serde_json::from_str::<PotentialParams>(r#"{"u_star":1,"sigma":2,"k":3}"#).is_err()
        );
    }

    #[test]
    fn branches_agree_at_breakpoints() {
        for p in [params(1.0, 2.0), params(1.0, 10.0), params(0.5, 10.0), params(3.0, 1.0)] {
            let tol = 4.0 * f64::EPSILON * p.u_star().powi(2);
            let b = p.inner_edge();
            let s = p.u_star();
            assert!((p.branch_phi(Branch::Inner, b) - p.branch_phi(Branch::Middle, b)).abs() <= tol);
            assert!((p.branch_phi(Branch::Middle, s) - p.branch_phi(Branch::Plateau, s)).abs() <= tol);
            assert!(
                (p.branch_dphi(Branch::Inner, b) - p.branch_dphi(Branch::Middle, b)).abs() <= tol
            );
            assert_eq!(p.branch_dphi(Branch::Middle, s), 0.0);
        }
    }

    #[test]
    fn ties_resolve_to_inner_branch() {
        let p = params(1.0, 2.0);
        assert_eq!(p.branch(0.5), Branch::Inner);
        assert_eq!(p.branch(1.0), Branch::Middle);
        assert_eq!(p.branch(1.0 + 1e-15), Branch::Plateau);
    }

    #[test]
    fn central_difference_matches_force() {
        let p = params(1.0, 4.0);
        // away from the breakpoints 0.75 and 1
        for &u in &[-1.7, -0.9, -0.3, 0.1, 0.6, 0.82, 0.97, 1.4] {
            let mut errs = vec![];
            for h in [1e-3, 1e-4] {
                let fd = (p.phi(u + h) - p.phi(u - h)) / (2.0 * h);
                errs.push((fd - p.dphi(u)).abs());
            }
            // piecewise quadratic: the central difference is exact up to roundoff
            assert!(errs[0] <= 1e-6 * 1e-3 + 1e-12, "u={u} err={errs:?}");
            assert!(errs[1] <= 1e-6 * 1e-4 + 1e-11, "u={u} err={errs:?}");
        }
    }

    #[test]
    fn property_sweeps_pass() {
        let r = check_properties(&params(1.0, 2.0), &uniform_grid(-2.0, 2.0, 10_000)).unwrap();
        assert!(r.all_pass(), "{r:?}");
        let r = check_properties(&params(1.0, 10.0), &uniform_grid(-2.0, 2.0, 100_000)).unwrap();
        assert!(r.all_pass(), "{r:?}");
    }

    #[test]
    fn force_bound_two_flagged_for_large_threshold() {
        let p = params(3.0, 2.0);
        let r = check_properties(&p, &uniform_grid(-6.0, 6.0, 20_000)).unwrap();
        assert!(!r.force_bound_two_holds);
        assert!(r.force_bound_ok);
        assert!(r.all_pass());
    }

    #[test]
    fn coarse_grid_rejected() {
        let err = check_properties(&params(1.0, 2.0), &uniform_grid(-2.0, 2.0, 3)).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
        let err = check_properties(&params(1.0, 2.0), &uniform_grid(-1.0, 1.0, 1000)).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn table_endpoints() {
        let rows = table(&params(1.0, 2.0), -2.0, 2.0, 0.5).unwrap();
        assert_eq!(rows.len(), 9);
        assert_eq!(rows[8][0], 2.0);
        assert_eq!(rows[4], [0.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn symmetry_is_exact(u in -10.0f64..10.0, u_star in 0.1f64..5.0, k in 1.01f64..500.0) {
            let p = PotentialParams::new(u_star, k / u_star).unwrap();
            prop_assert_eq!(p.phi(u), p.phi(-u));
            prop_assert_eq!(p.dphi(u), -p.dphi(-u));
            if u.abs() >= u_star {
                prop_assert_eq!(p.dphi(u), 0.0);
            }
            prop_assert!(u * p.dphi(u) >= 0.0);
            prop_assert!(p.phi(u).abs() <= u_star * u_star);
        }
    }
}
