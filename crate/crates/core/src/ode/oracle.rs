//! Dormand–Prince 5(4) with Hairer's continuous extension.

use super::OdeParams;
use crate::error::{Error, Result};

// The system is autonomous, so the nodes c_i never appear.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

type Y = [f64; 2];

fn axpy(y: &Y, h: f64, terms: &[(f64, &Y)]) -> Y {
    let mut out = *y;
    for (c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

/// One accepted step with its interpolation coefficients.
#[derive(Clone, Debug)]
struct DenseStep {
    t: f64,
    h: f64,
    r: [Y; 5],
}

impl DenseStep {
    fn eval(&self, t: f64) -> Y {
        let th = (t - self.t) / self.h;
        let th1 = 1.0 - th;
        let r = &self.r;
        std::array::from_fn(|i| {
            r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i])))
        })
    }
}

/// Adaptive solution with continuous output on `[0, t_max]`.
#[derive(Clone, Debug)]
pub struct DenseTrajectory {
    steps: Vec<DenseStep>,
    /// Accepted mesh `(t, z, w)`, including both endpoints.
    pub nodes: Vec<(f64, f64, f64)>,
    pub rejected: usize,
    pub t_max: f64,
}

impl DenseTrajectory {
    /// `(z, w)` at `t`, clamped to `[0, t_max]`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let t = t.clamp(0.0, self.t_max);
        if self.steps.is_empty() {
            let (_, z, w) = self.nodes[0];
            return (z, w);
        }
        let idx = self
            .steps
            .partition_point(|s| s.t + s.h < t)
            .min(self.steps.len() - 1);
        let y = self.steps[idx].eval(t);
        (y[0], y[1])
    }

    pub fn accepted(&self) -> usize {
        self.steps.len()
    }
}

/// Integrates `z'' + z' + Φ′(z) = 0` from `(z0, w0)` to `t_max`, keeping
/// the mixed local error of every accepted step below `tol`.
pub fn rk_oracle(z0: f64, w0: f64, p: &OdeParams, t_max: f64, tol: f64) -> Result<DenseTrajectory> {
    if !(1e-12..=1e-6).contains(&tol) {
        return Err(Error::Precondition(format!("tol must lie in [1e-12, 1e-6], got {tol}")));
    }
    if !(z0.is_finite() && w0.is_finite()) {
        return Err(Error::Precondition(format!("non-finite data ({z0}, {w0})")));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::Precondition(format!("t_max must be positive, got {t_max}")));
    }
    let potential = p.potential();
    let f = |y: &Y| -> Y {
        let force = potential.as_ref().map_or(0.0, |pp| pp.dphi(y[0]));
        [y[1], -y[1] - force]
    };

    let mut t = 0.0;
    let mut y: Y = [z0, w0];
    let mut k1 = f(&y);
    let mut h = 1e-3_f64.min(t_max);
    let mut steps = Vec::new();
    let mut nodes = vec![(0.0, z0, w0)];
    let mut rejected = 0;
    let mut last_rejected = false;

    while t < t_max {
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h });
        }
        let last = t + h >= t_max;
        if last {
            h = t_max - t;
        }
        let k2 = f(&axpy(&y, h, &[(A21, &k1)]));
        let k3 = f(&axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(&axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(&axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = f(&axpy(
            &y,
            h,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ));
        let y1 = axpy(
            &y,
            h,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let k7 = f(&y1);

        let mut err_sq = 0.0;
        for i in 0..2 {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol + tol * y[i].abs().max(y1[i].abs());
            err_sq += (e / sc) * (e / sc);
        }
        let err = (0.5 * err_sq).sqrt();
        let fac = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };

        if err <= 1.0 {
            let r2: Y = [y1[0] - y[0], y1[1] - y[1]];
            let r3: Y = [h * k1[0] - r2[0], h * k1[1] - r2[1]];
            let r4: Y = [r2[0] - h * k7[0] - r3[0], r2[1] - h * k7[1] - r3[1]];
            let r5: Y = std::array::from_fn(|i| {
                h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
            });
            steps.push(DenseStep {
                t,
                h,
                r: [y, r2, r3, r4, r5],
            });
            t = if last { t_max } else { t + h };
            y = y1;
            k1 = k7;
            nodes.push((t, y[0], y[1]));
            if !(y[0].is_finite() && y[1].is_finite()) {
                return Err(Error::Consistency(format!("oracle produced non-finite state at t = {t}")));
            }
            h *= if last_rejected { fac.min(1.0) } else { fac };
            last_rejected = false;
        } else {
            rejected += 1;
            last_rejected = true;
            h *= fac.min(1.0);
        }
    }
    Ok(DenseTrajectory {
        steps,
        nodes,
        rejected,
        t_max,
    })
}
