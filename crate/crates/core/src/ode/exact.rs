use serde::Serialize;

use super::{classify_case, CaseLabel, OdeParams, Regime, OMEGA};
use crate::error::{Error, Result};

/// Closed-form solution on one band, in the local time `s` since entry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "regime_form", rename_all = "snake_case")]
pub enum ClosedForm {
    /// `z = z0 + w0(1 − e^{−s})`
    Outer { z0: f64, w0: f64 },
    /// `z = sign·(1 − a e^{μs} − b e^{−λs})`
    Middle {
        sign: f64,
        a: f64,
        b: f64,
        lambda: f64,
        mu: f64,
    },
    /// `z = e^{−s/2}(z0 cos ωs + q sin ωs)` with `q = (2w0 + z0)/(2ω)`;
    /// `k = q/2 + ω z0` enters the velocity.
    Inner { z0: f64, w0: f64, q: f64, k: f64 },
}

impl ClosedForm {
    pub fn eval(&self, s: f64) -> (f64, f64) {
        match *self {
            ClosedForm::Outer { z0, w0 } => {
                let e = (-s).exp();
                (z0 + w0 * (1.0 - e), w0 * e)
            }
            ClosedForm::Middle {
                sign,
                a,
                b,
                lambda,
                mu,
            } => {
                let grow = if a == 0.0 { 0.0 } else { a * (mu * s).exp() };
                let decay = b * (-lambda * s).exp();
                (sign * (1.0 - grow - decay), sign * (-mu * grow + lambda * decay))
            }
            ClosedForm::Inner { z0, w0, q, k } => {
                let env = (-0.5 * s).exp();
                let (sn, cs) = (OMEGA * s).sin_cos();
                (env * (z0 * cs + q * sn), env * (w0 * cs - k * sn))
            }
        }
    }

    /// Limit as `s → ∞` if the closed form converges.
    pub fn limit(&self) -> Option<f64> {
        match *self {
            ClosedForm::Outer { z0, w0 } => Some(z0 + w0),
            ClosedForm::Middle { sign, a, .. } => (a == 0.0).then_some(sign),
            ClosedForm::Inner { .. } => Some(0.0),
        }
    }
}

/// Coefficients of the closed form on `regime` through `(z0, w0)`.
pub fn regime_solution(regime: Regime, z0: f64, w0: f64, p: &OdeParams) -> Result<ClosedForm> {
    if !(z0.is_finite() && w0.is_finite()) {
        return Err(Error::Precondition(format!("non-finite data ({z0}, {w0})")));
    }
    if !regime.contains(z0, p) {
        return Err(Error::Precondition(format!(
            "z0 = {z0} is outside the {} band",
            regime.name()
        )));
    }
    Ok(match regime {
        Regime::OuterPlus | Regime::OuterMinus => ClosedForm::Outer { z0, w0 },
        Regime::MiddlePlus | Regime::MiddleMinus => {
            let sign = regime.sign();
            let (lambda, mu) = (p.lambda(), p.mu());
            // distance below the threshold in mirrored coordinates
            let y0 = 1.0 - sign * z0;
            let wm = sign * w0;
            ClosedForm::Middle {
                sign,
                a: (lambda * y0 - wm) / (lambda + mu),
                b: (mu * y0 + wm) / (lambda + mu),
                lambda,
                mu,
            }
        }
        Regime::Inner => {
            let q = (2.0 * w0 + z0) / (2.0 * OMEGA);
            ClosedForm::Inner {
                z0,
                w0,
                q,
                k: 0.5 * q + OMEGA * z0,
            }
        }
    })
}

/// Regime boundary reached by a closed form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Event {
    /// Local time since segment entry.
    pub s: f64,
    /// Boundary value of `z` that was crossed.
    pub boundary: f64,
    /// Velocity at the crossing.
    pub w: f64,
}

const BISECTION_WIDTH: f64 = 1e-13;

fn scan_step() -> f64 {
    0.01_f64.min(std::f64::consts::PI / (4.0 * OMEGA))
}

/// Earliest `s ∈ (0, horizon]` with `inside(s) < 0`, by scanning with
/// `step` (also visiting `nodes`) and bisecting the first bracket.
fn scan(inside: impl Fn(f64) -> f64, horizon: f64, step: f64, nodes: &[f64]) -> Option<f64> {
    let mut lo = 0.0;
    let mut pending = nodes.iter().copied().filter(|&n| n > 0.0).peekable();
    while lo < horizon {
        let mut hi = (lo + step).min(horizon);
        while let Some(&n) = pending.peek() {
            if n <= lo {
                pending.next();
            } else {
                if n < hi {
                    hi = n;
                }
                break;
            }
        }
        if inside(hi) < 0.0 {
            let (mut a, mut b) = (lo, hi);
            while b - a > BISECTION_WIDTH {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if inside(mid) < 0.0 {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            return Some(0.5 * (a + b));
        }
        lo = hi;
    }
    None
}

/// First positive critical time of the inner closed form, if it moves.
fn first_critical_time(w0: f64, k: f64) -> Option<f64> {
    if w0 == 0.0 && k == 0.0 {
        return None;
    }
    let pi = std::f64::consts::PI;
    let mut theta = w0.atan2(k).rem_euclid(pi);
    if theta == 0.0 {
        theta = pi;
    }
    Some(theta / OMEGA)
}

/// Next boundary crossing of the segment starting in `regime` with closed
/// form `form`, within `horizon` local time units. `None` when the closed
/// form stays in its band forever or past the horizon.
pub fn next_event(form: &ClosedForm, regime: Regime, p: &OdeParams, horizon: f64) -> Option<Event> {
    let b = p.band_edge();
    let z = |s: f64| form.eval(s).0;
    let step = scan_step();
    let (s, boundary) = match regime {
        Regime::OuterPlus => {
            if form.limit().is_some_and(|l| l >= 1.0) {
                return None;
            }
            (scan(|s| z(s) - 1.0, horizon, step, &[])?, 1.0)
        }
        Regime::OuterMinus => {
            if form.limit().is_some_and(|l| l <= -1.0) {
                return None;
            }
            (scan(|s| -1.0 - z(s), horizon, step, &[])?, -1.0)
        }
        Regime::MiddlePlus | Regime::MiddleMinus => {
            let sign = regime.sign();
            let s = scan(
                |s| {
                    let zz = sign * z(s);
                    (1.0 - zz).min(zz - b)
                },
                horizon,
                step,
                &[],
            )?;
            let zz = sign * z(s);
            let edge = if (zz - 1.0).abs() < (zz - b).abs() { 1.0 } else { b };
            (s, sign * edge)
        }
        Regime::Inner => {
            let ClosedForm::Inner { w0, k, .. } = *form else {
                return None;
            };
            let c1 = first_critical_time(w0, k)?;
            // |z| at later critical points is damped by e^{−π/(2ω)} each,
            // so the first one bounds the whole future.
            if z(c1).abs() <= b {
                return None;
            }
            let s = scan(|s| b - z(s).abs(), c1.min(horizon), step, &[c1])?;
            (s, if z(s) > 0.0 { b } else { -b })
        }
    };
    Some(Event {
        s,
        boundary,
        w: form.eval(s).1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Segment {
    pub label: CaseLabel,
    pub start: f64,
    pub end: Option<f64>,
    pub z0: f64,
    pub w0: f64,
    pub form: ClosedForm,
}

impl Segment {
    pub fn regime(&self) -> Regime {
        self.label.regime
    }
}

/// Chain of closed-form segments covering `[0, t_max]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PiecewiseTrajectory {
    pub segments: Vec<Segment>,
    pub z_inf: Option<f64>,
    pub t_max: f64,
}

pub const MAX_SEGMENTS: usize = 8;

impl PiecewiseTrajectory {
    fn segment_at(&self, t: f64) -> &Segment {
        let idx = self
            .segments
            .partition_point(|seg| seg.start <= t)
            .saturating_sub(1);
        &self.segments[idx]
    }

    pub fn eval(&self, t: f64) -> (f64, f64) {
        let seg = self.segment_at(t);
        seg.form.eval(t - seg.start)
    }

    pub fn regime_at(&self, t: f64) -> Regime {
        self.segment_at(t).regime()
    }

    pub fn trace(&self) -> Vec<CaseLabel> {
        self.segments.iter().map(|s| s.label).collect()
    }

    pub fn middle_visits(&self) -> usize {
        self.segments.iter().filter(|s| s.regime().is_middle()).count()
    }

    /// Elastic-band segments entered at one band edge and left at the other.
    pub fn band_to_band_transitions(&self, p: &OdeParams) -> usize {
        let b = p.band_edge();
        self.segments
            .windows(2)
            .filter(|w| {
                let seg = &w[0];
                seg.regime() == Regime::Inner
                    && seg.z0.abs() == b
                    && b > 0.0
                    && w[1].z0 == -seg.z0
            })
            .count()
    }

    /// Largest mismatch of position and velocity across segment joins.
    pub fn max_join_jump(&self) -> f64 {
        self.segments
            .windows(2)
            .map(|w| {
                let end = w[0].end.expect("interior segments are closed");
                let (z, v) = w[0].form.eval(end - w[0].start);
                (z - w[1].z0).abs().max((v - w[1].w0).abs())
            })
            .fold(0.0, f64::max)
    }

    /// `(t, z, w, regime)` on a uniform grid of spacing `dt` over `[0, t_max]`.
    pub fn sample(&self, dt: f64) -> Vec<(f64, f64, f64, Regime)> {
        let n = (self.t_max / dt).round() as usize;
        (0..=n)
            .map(|i| {
                let t = i as f64 * dt;
                let (z, w) = self.eval(t);
                (t, z, w, self.regime_at(t))
            })
            .collect()
    }
}

/// Chains case classification, closed forms and events from `(z0, w0)`
/// until no event occurs before `t_max`.
pub fn solve_exact(z0: f64, w0: f64, p: &OdeParams, t_max: f64) -> Result<PiecewiseTrajectory> {
    if !(z0.is_finite() && w0.is_finite()) {
        return Err(Error::Precondition(format!("non-finite data ({z0}, {w0})")));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::Precondition(format!("t_max must be positive, got {t_max}")));
    }
    let mut segments: Vec<Segment> = Vec::new();
    let (mut t, mut z, mut w) = (0.0, z0, w0);
    loop {
        if segments.len() == MAX_SEGMENTS {
            return Err(Error::Consistency(format!(
                "more than {MAX_SEGMENTS} segments from ({z0}, {w0}) at sigma = {}",
                p.sigma()
            )));
        }
        let label = classify_case(z, w, p);
        let form = regime_solution(label.regime, z, w, p)?;
        match next_event(&form, label.regime, p, t_max - t) {
            Some(ev) => {
                segments.push(Segment {
                    label,
                    start: t,
                    end: Some(t + ev.s),
                    z0: z,
                    w0: w,
                    form,
                });
                t += ev.s;
                z = ev.boundary;
                w = ev.w;
            }
            None => {
                segments.push(Segment {
                    label,
                    start: t,
                    end: None,
                    z0: z,
                    w0: w,
                    form,
                });
                break;
            }
        }
    }
    let z_inf = segments.last().and_then(|s| s.form.limit());
    Ok(PiecewiseTrajectory {
        segments,
        z_inf,
        t_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::Case;

    fn sigma(s: f64) -> OdeParams {
        OdeParams::new(s).unwrap()
    }

    #[test]
    fn closed_forms_match_initial_conditions() {
        let p = sigma(7.0);
        let b = p.band_edge();
        let cases = [
            (Regime::OuterPlus, 1.5, 1.0),
            (Regime::OuterMinus, -3.0, 0.4),
            (Regime::MiddlePlus, 1.0, -1.0),
            (Regime::MiddlePlus, b, 2.0),
            (Regime::MiddleMinus, -1.0, 0.7),
            (Regime::Inner, 0.3, -2.0),
            (Regime::Inner, -b, 0.0),
        ];
        for (r, z0, w0) in cases {
            let (z, w) = regime_solution(r, z0, w0, &p).unwrap().eval(0.0);
            assert!((z - z0).abs() <= 1e-14 * z0.abs().max(1.0), "{r:?}");
            assert!((w - w0).abs() <= 1e-14 * w0.abs().max(1.0), "{r:?}");
        }
        assert!(regime_solution(Regime::Inner, 0.95, 0.0, &p).is_err());
        assert!(regime_solution(Regime::OuterPlus, 0.5, 0.0, &p).is_err());
    }

    #[test]
    fn closed_forms_solve_the_band_equations() {
        // residual of z'' + z' + Φ′(z) = 0 by central differences
        let p = sigma(3.0);
        let h = 1e-4;
        for (r, z0, w0) in [
            (Regime::OuterPlus, 2.0, -0.3),
            (Regime::MiddlePlus, 1.0, -0.2),
            (Regime::Inner, 0.1, 0.2),
        ] {
            let f = regime_solution(r, z0, w0, &p).unwrap();
            let s = 0.05;
            let (zm, _) = f.eval(s - h);
            let (z, w) = f.eval(s);
            let (zp, _) = f.eval(s + h);
            let acc = (zp - 2.0 * z + zm) / (h * h);
            let force = match r {
                Regime::OuterPlus => 0.0,
                Regime::MiddlePlus => 2.0 * (p.sigma() - 1.0) * (1.0 - z),
                _ => 2.0 * z,
            };
            assert!((acc + w + force).abs() < 1e-5, "{r:?}");
            let wd = (f.eval(s + h).0 - zm) / (2.0 * h);
            assert!((wd - w).abs() < 1e-7);
        }
    }

    #[test]
    fn reference_closed_forms() {
        let p = sigma(2.0);
        let f = regime_solution(Regime::MiddlePlus, 1.0, -1.0, &p).unwrap();
        for s in [0.1_f64, 0.3, 0.6] {
            let expected = 1.0 + (-2.0 * s).exp() / 3.0 - s.exp() / 3.0;
            assert!((f.eval(s).0 - expected).abs() < 1e-15);
        }
        let f = regime_solution(Regime::Inner, 0.5, 0.0, &p).unwrap();
        let om = 7f64.sqrt() / 2.0;
        for s in [0.2_f64, 1.0, 4.0] {
            let expected = 0.5 * (-s / 2.0).exp() * ((om * s).cos() + (om * s).sin() / (2.0 * om));
            assert!((f.eval(s).0 - expected).abs() < 1e-15);
        }
        let f = regime_solution(Regime::OuterPlus, 1.5, 1.0, &p).unwrap();
        assert_eq!(f.limit(), Some(2.5));
    }

    #[test]
    fn outer_exit_time_matches_formula() {
        let p = sigma(2.0);
        let f = regime_solution(Regime::OuterPlus, 2.0, -3.0, &p).unwrap();
        let ev = next_event(&f, Regime::OuterPlus, &p, 30.0).unwrap();
        assert!((ev.s - 1.5f64.ln()).abs() < 1e-10);
        assert_eq!(ev.boundary, 1.0);
        assert!(ev.w < 0.0);
        let f = regime_solution(Regime::OuterPlus, 1.5, 1.0, &p).unwrap();
        assert!(next_event(&f, Regime::OuterPlus, &p, 30.0).is_none());
    }

    #[test]
    fn middle_exit_below_case_v_bound() {
        let p = sigma(2.0);
        let f = regime_solution(Regime::MiddlePlus, 1.0, -1.0, &p).unwrap();
        let ev = next_event(&f, Regime::MiddlePlus, &p, 30.0).unwrap();
        // root of 1 + e^{-2s}/3 - e^{s}/3 = 1/2 by an independent bisection
        let g = |s: f64| 0.5 + (-2.0 * s).exp() / 3.0 - s.exp() / 3.0;
        let (mut a, mut b) = (0.0, 2.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if g(m) > 0.0 {
                a = m
            } else {
                b = m
            }
        }
        assert!((ev.s - a).abs() < 1e-12);
        assert!(ev.s < 2.5f64.ln());
        assert_eq!(ev.boundary, 0.5);
    }

    #[test]
    fn inner_stays_when_extremum_inside() {
        let p = sigma(4.0);
        let f = regime_solution(Regime::Inner, 0.1, 0.0, &p).unwrap();
        assert!(next_event(&f, Regime::Inner, &p, 100.0).is_none());
        let f = regime_solution(Regime::Inner, 0.0, 3.0, &p).unwrap();
        let ev = next_event(&f, Regime::Inner, &p, 100.0).unwrap();
        assert_eq!(ev.boundary, p.band_edge());
        assert!(ev.w > 0.0);
    }

    #[test]
    fn single_segment_trajectories() {
        let t = solve_exact(1.5, 1.0, &sigma(2.0), 20.0).unwrap();
        assert_eq!(t.segments.len(), 1);
        assert_eq!(t.z_inf, Some(2.5));
        for s in [1e3, 1e4] {
            let t = solve_exact(2.0, 0.0, &sigma(s), 20.0).unwrap();
            assert_eq!(t.z_inf, Some(2.0));
            assert_eq!(t.eval(13.0), (2.0, 0.0));
        }
        let t = solve_exact(0.1, 0.0, &sigma(4.0), 20.0).unwrap();
        assert_eq!(t.segments.len(), 1);
        assert_eq!(t.z_inf, Some(0.0));
    }

    #[test]
    fn case_four_chain_is_glued() {
        let p = sigma(10.0);
        let t = solve_exact(2.0, -3.0, &p, 30.0).unwrap();
        let cases: Vec<Case> = t.trace().iter().map(|l| l.case).collect();
        assert_eq!(&cases[..3], &[Case::IV, Case::V, Case::VI]);
        assert!(t.max_join_jump() <= 1e-10, "{}", t.max_join_jump());
        assert!(t.middle_visits() <= 2);
        assert!(t.band_to_band_transitions(&p) <= 1);
        assert!(t.z_inf.is_some());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(solve_exact(f64::NAN, 0.0, &sigma(2.0), 1.0).is_err());
        assert!(solve_exact(0.0, 0.0, &sigma(2.0), 0.0).is_err());
    }
}
