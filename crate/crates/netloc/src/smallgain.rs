//! Perturbations that sit exactly on the small-gain margin and place a
//! closed-loop pole on the imaginary axis, plus their verification.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::frequency::{eval_transfer, hinf_norm, Hinf, StateSpace};
use crate::linalg;
use crate::simulate::{oscillation_frequency, simulate_with_verdict, DeltaSpec, SimConfig, StabilityVerdict};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DestabilizerKind {
    StaticComplex { delta: Complex64 },
    /// `gain exp(-t s)`.
    Delay { gain: f64, t: f64 },
    /// `gain (a - s) / (a + s)`.
    AllPass { gain: f64, a: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Destabilizer {
    #[serde(flatten)]
    pub kind: DestabilizerKind,
    pub target_omega: f64,
    pub predicted_pole: Complex64,
    /// `1 / ||M||_inf` of the system it was built for.
    pub margin: f64,
    pub hinf: f64,
    /// Set when the delay phase needed wrapping into `[0, 2 pi)`.
    pub phase_wrapped: bool,
    /// Gain multiplier relative to the critical perturbation (1 when synthesized).
    pub scale: f64,
}

impl Destabilizer {
    fn new(kind: DestabilizerKind, h: Hinf, phase_wrapped: bool) -> Self {
        Destabilizer {
            kind,
            target_omega: h.omega_bar,
            predicted_pole: Complex64::new(0.0, h.omega_bar),
            margin: 1.0 / h.norm,
            hinf: h.norm,
            phase_wrapped,
            scale: 1.0,
        }
    }

    /// `Delta(s)`.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        match self.kind {
            DestabilizerKind::StaticComplex { delta } => delta,
            DestabilizerKind::Delay { gain, t } => gain * (-s * t).exp(),
            DestabilizerKind::AllPass { gain, a } => gain * (a - s) / (a + s),
        }
    }

    /// Same perturbation with its gain multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Destabilizer {
        let kind = match self.kind {
            DestabilizerKind::StaticComplex { delta } => DestabilizerKind::StaticComplex { delta: delta * k },
            DestabilizerKind::Delay { gain, t } => DestabilizerKind::Delay { gain: gain * k, t },
            DestabilizerKind::AllPass { gain, a } => DestabilizerKind::AllPass { gain: gain * k, a },
        };
        Destabilizer {
            kind,
            scale: self.scale * k,
            ..*self
        }
    }

    pub fn delta_spec(&self) -> DeltaSpec {
        match self.kind {
            DestabilizerKind::StaticComplex { delta } if delta.im == 0.0 => DeltaSpec::StaticReal { gain: delta.re },
            DestabilizerKind::StaticComplex { delta } => DeltaSpec::StaticComplex { delta },
            DestabilizerKind::Delay { gain, t } => DeltaSpec::Delay { gain, t },
            DestabilizerKind::AllPass { gain, a } => DeltaSpec::AllPass { gain, a },
        }
    }
}

fn real_static(gain: f64, h: Hinf) -> Destabilizer {
    Destabilizer::new(
        DestabilizerKind::StaticComplex {
            delta: Complex64::new(gain, 0.0),
        },
        h,
        false,
    )
}

/// `delta = 1 / M(j omega_bar)`.
pub fn static_destabilizer(ss: &StateSpace) -> Result<Destabilizer> {
    let h = hinf_norm(ss)?;
    let m = eval_transfer(ss, Complex64::new(0.0, h.omega_bar))?;
    let mut delta = m.inv();
    if h.omega_bar == 0.0 {
        delta.im = 0.0;
    }
    Ok(Destabilizer::new(DestabilizerKind::StaticComplex { delta }, h, false))
}

/// `Delta(s) = exp(-T s) / ||M||_inf` with `T = phi / omega_bar` and `phi`
/// the phase of `M(j omega_bar)` taken in `[0, 2 pi)`.
pub fn delay_destabilizer(ss: &StateSpace) -> Result<Destabilizer> {
    let h = hinf_norm(ss)?;
    if h.omega_bar == 0.0 {
        return Err(Error::ZeroFrequency);
    }
    let arg = eval_transfer(ss, Complex64::new(0.0, h.omega_bar))?.arg();
    let wrapped = arg < 0.0;
    let phi = if wrapped { arg + 2.0 * PI } else { arg };
    let phi = if phi >= 2.0 * PI { 0.0 } else { phi };
    Ok(Destabilizer::new(
        DestabilizerKind::Delay {
            gain: 1.0 / h.norm,
            t: phi / h.omega_bar,
        },
        h,
        wrapped,
    ))
}

/// First-order real all-pass `g (a - s) / (a + s)` with `|g| = 1 / ||M||_inf`
/// and phase `-arg M(j omega_bar)` at `omega_bar`.
pub fn allpass_destabilizer(ss: &StateSpace) -> Result<Destabilizer> {
    let h = hinf_norm(ss)?;
    let w = h.omega_bar;
    if w == 0.0 {
        return Err(Error::ZeroFrequency);
    }
    let g = 1.0 / h.norm;
    let mut psi = -eval_transfer(ss, Complex64::new(0.0, w))?.arg();
    if psi <= -PI {
        psi += 2.0 * PI;
    }
    if psi == 0.0 {
        return Ok(real_static(g, h));
    }
    if psi == PI {
        return Ok(real_static(-g, h));
    }
    let kind = if psi < 0.0 {
        DestabilizerKind::AllPass {
            gain: g,
            a: w / (-psi / 2.0).tan(),
        }
    } else {
        DestabilizerKind::AllPass {
            gain: -g,
            a: w / ((PI - psi) / 2.0).tan(),
        }
    };
    Ok(Destabilizer::new(kind, h, false))
}

/// `A + delta b c`.
pub fn closed_loop_generator(ss: &StateSpace, delta: Complex64) -> DMatrix<Complex64> {
    let m = ss.dim();
    DMatrix::from_fn(m, m, |i, j| Complex64::new(ss.a[(i, j)], 0.0) + delta * ss.b[i] * ss.c[j])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Marginal,
    Stable,
    Unstable,
}

/// Time-domain check at a scaled gain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthCheck {
    pub scale: f64,
    pub verdict: StabilityVerdict,
    pub frequency: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub verdict: Verdict,
    /// `|1 - M(j omega_bar) Delta(j omega_bar)|`.
    pub char_residual: f64,
    /// Closed-loop eigenvalue nearest `j omega_bar` (static perturbations).
    pub nearest_eigenvalue: Option<Complex64>,
    /// Largest real part over closed-loop eigenvalues other than the zero mode.
    pub max_re: Option<f64>,
    pub growth: Option<GrowthCheck>,
}

/// Eigenvalues of the closed-loop generator without the consensus zero.
pub fn closed_loop_spectrum(ss: &StateSpace, delta: Complex64) -> Result<Vec<Complex64>> {
    let ev = linalg::eigenvalues(&closed_loop_generator(ss, delta))?;
    let scale = ss.a.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let zero = if matches!(ss.order, crate::frequency::Order::General) {
        None
    } else {
        ev.iter()
            .enumerate()
            .min_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .filter(|(_, z)| z.norm() <= 1e-8 * scale)
            .map(|(i, _)| i)
    };
    Ok(ev
        .into_iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != zero)
        .map(|(_, z)| z)
        .collect())
}

/// Default initial condition for growth checks: `theta0 = c / |c|`, at rest.
pub fn growth_sim_config(ss: &StateSpace, delta: DeltaSpec, omega_bar: f64) -> Result<SimConfig> {
    let (lap, pv) = ss
        .source
        .as_ref()
        .ok_or_else(|| Error::Unsupported("time-domain checks need an assembled network".into()))?;
    let beta = ss
        .beta()
        .ok_or_else(|| Error::Unsupported("time-domain checks need a second-order system".into()))?;
    let n = lap.n();
    let cn = pv.c.norm();
    let theta0: Vec<f64> = if cn > 0.0 {
        pv.c.iter().map(|x| x / cn).collect()
    } else {
        vec![0.0; n]
    };
    let period = if omega_bar > 0.0 { 2.0 * PI / omega_bar } else { 1.0 };
    let cfg = SimConfig {
        lap: lap.clone(),
        beta,
        pv: Some(pv.clone()),
        delta,
        theta0,
        omega0: vec![0.0; n],
        h: 0.0,
        t_final: (60.0 * period).max(40.0 / beta),
        record_every: 100,
    };
    Ok(cfg.with_auto_step())
}

/// Gain multiplier used for the time-domain hand-off.
pub const GROWTH_SCALE: f64 = 1.05;

pub fn verify_destabilization(ss: &StateSpace, d: &Destabilizer) -> Result<Verification> {
    let fresh = hinf_norm(ss)?;
    let w = d.target_omega;
    let dw = d.eval(Complex64::new(0.0, w));
    let ratio = dw.norm() * fresh.norm / d.scale;
    if (fresh.norm - d.hinf).abs() > 1e-9 * fresh.norm
        || (fresh.omega_bar - w).abs() > 1e-6 * (1.0 + w)
        || (ratio - 1.0).abs() > 1e-9
    {
        return Err(Error::StaleDestabilizer(ratio));
    }
    let m = eval_transfer(ss, Complex64::new(0.0, w))?;
    let char_residual = (Complex64::new(1.0, 0.0) - m * dw).norm();

    if let DestabilizerKind::StaticComplex { delta } = d.kind {
        let ev = closed_loop_spectrum(ss, delta)?;
        let target = Complex64::new(0.0, w);
        let nearest = ev
            .iter()
            .copied()
            .min_by(|a, b| (a - target).norm().total_cmp(&(b - target).norm()));
        let max_re = ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let verdict = match nearest {
            Some(z) if (z - target).norm() <= 1e-6 * (1.0 + w) => Verdict::Marginal,
            _ if max_re < 0.0 => Verdict::Stable,
            _ => Verdict::Unstable,
        };
        return Ok(Verification {
            verdict,
            char_residual,
            nearest_eigenvalue: nearest,
            max_re: Some(max_re),
            growth: None,
        });
    }

    let growth = if ss.source.is_some() && ss.beta().is_some() {
        let cfg = growth_sim_config(ss, d.scaled(GROWTH_SCALE).delta_spec(), w)?;
        let (traj, verdict) = simulate_with_verdict(&cfg)?;
        Some(GrowthCheck {
            scale: GROWTH_SCALE,
            verdict,
            frequency: oscillation_frequency(&traj, 0.5),
        })
    } else {
        None
    };
    let verdict = if char_residual <= 1e-6 {
        Verdict::Marginal
    } else {
        match growth.map(|g| g.verdict.growth) {
            Some(crate::simulate::Growth::Growing) => Verdict::Unstable,
            _ => Verdict::Stable,
        }
    };
    Ok(Verification {
        verdict,
        char_residual,
        nearest_eigenvalue: None,
        max_re: None,
        growth,
    })
}

/// Closed-loop verdict for an arbitrary static `delta` (no margin bookkeeping).
pub fn static_verdict(ss: &StateSpace, delta: Complex64) -> Result<(Verdict, f64)> {
    let ev = closed_loop_spectrum(ss, delta)?;
    let max_re = ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let v = if max_re.abs() <= 1e-9 {
        Verdict::Marginal
    } else if max_re < 0.0 {
        Verdict::Stable
    } else {
        Verdict::Unstable
    };
    Ok((v, max_re))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frequency::assemble_second_order;
    use crate::graph::{build_laplacian, Graph};
    use crate::perturbation::{scenario_vectors, Scenario};
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn k2_system() -> StateSpace {
        let l = build_laplacian(&Graph::new(2, [(0, 1, 1.0)]).unwrap());
        let pv = scenario_vectors(&Scenario::GlobalNode { k: 0 }, &l).unwrap();
        assemble_second_order(&l, &pv, 0.2).unwrap()
    }

    #[test]
    fn static_k2() {
        let ss = k2_system();
        let d = static_destabilizer(&ss).unwrap();
        let DestabilizerKind::StaticComplex { delta } = d.kind else { panic!() };
        // M(jw) = 0.5 / (2 - w^2 + 0.2 j w) at w^2 = 1.98
        let w = 1.98f64.sqrt();
        let expect = Complex64::new(0.02, 0.2 * w) / 0.5;
        assert!((delta - expect).norm() < 1e-8);
        assert_abs_diff_eq!(delta.norm() * d.hinf, 1.0, epsilon = 1e-12);
        let v = verify_destabilization(&ss, &d).unwrap();
        assert_eq!(v.verdict, Verdict::Marginal);
        assert!((v.nearest_eigenvalue.unwrap() - Complex64::new(0.0, w)).norm() < 1e-6);
        let v = verify_destabilization(&ss, &d.scaled(0.9)).unwrap();
        assert_eq!(v.verdict, Verdict::Stable);
    }

    #[test]
    fn delay_k2() {
        let ss = k2_system();
        let d = delay_destabilizer(&ss).unwrap();
        let DestabilizerKind::Delay { gain, t } = d.kind else { panic!() };
        let w = 1.98f64.sqrt();
        let arg = -(0.2 * w / 0.02f64).atan();
        assert_abs_diff_eq!(t, (arg + 2.0 * PI) / w, epsilon = 1e-6);
        assert_abs_diff_eq!(gain, 1.0 / d.hinf, epsilon = 1e-15);
        assert!(d.phase_wrapped);
        let m = eval_transfer(&ss, Complex64::new(0.0, w)).unwrap();
        assert!((m * d.eval(Complex64::new(0.0, w)) - 1.0).norm() < 1e-9);
    }

    #[test]
    fn allpass_k2() {
        let ss = k2_system();
        let d = allpass_destabilizer(&ss).unwrap();
        let DestabilizerKind::AllPass { gain, a } = d.kind else { panic!() };
        assert!(gain < 0.0);
        assert_abs_diff_eq!(gain, -0.56427, epsilon = 1e-5);
        // g < 0 contributes pi, the all-pass -2 atan(w / a); together they must cancel arg M
        let w2 = 1.98f64.sqrt();
        let psi = (0.2 * w2 / 0.02f64).atan();
        assert_abs_diff_eq!(a, w2 / ((PI - psi) / 2.0).tan(), epsilon = 1e-6);
        assert_abs_diff_eq!(a, 1.310674, epsilon = 1e-5);
        let w = d.target_omega;
        let m = eval_transfer(&ss, Complex64::new(0.0, w)).unwrap();
        assert!((1.0 - m * d.eval(Complex64::new(0.0, w))).norm() < 1e-6);
        for f in [0.1, 1.0, 10.0] {
            assert_abs_diff_eq!(d.eval(Complex64::new(0.0, f * w)).norm(), gain.abs(), epsilon = 1e-12);
        }
    }

    #[test]
    fn stale_is_reported() {
        let ss = k2_system();
        let mut d = static_destabilizer(&ss).unwrap();
        d.hinf *= 1.01;
        assert!(matches!(verify_destabilization(&ss, &d), Err(Error::StaleDestabilizer(_))));
    }

    #[test]
    fn zero_frequency_peak() {
        let a = DMatrix::from_row_slice(1, 1, &[-2.0]);
        let ss = StateSpace::general(a, DVector::from_element(1, 1.0), DVector::from_element(1, 3.0)).unwrap();
        assert!(matches!(delay_destabilizer(&ss), Err(Error::ZeroFrequency)));
        let d = static_destabilizer(&ss).unwrap();
        let DestabilizerKind::StaticComplex { delta } = d.kind else { panic!() };
        assert_abs_diff_eq!(delta.re, 2.0 / 3.0, epsilon = 1e-9);
        assert_eq!(delta.im, 0.0);
    }
}
