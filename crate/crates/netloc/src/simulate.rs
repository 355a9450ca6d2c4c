//! Fixed-step RK4 integration of `theta'' = -L theta - beta theta' + b u`,
//! `y = c theta`, with static, delayed or all-pass feedback `u = Delta y`.

use std::collections::VecDeque;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::graph::Laplacian;
use crate::perturbation::PerturbationVectors;
use crate::{Error, Result};

/// Feedback law closing the loop from `y` to `u`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DeltaSpec {
    None,
    StaticReal { gain: f64 },
    /// Only verified spectrally; rejected by [`simulate`].
    StaticComplex { delta: Complex64 },
    Delay { gain: f64, t: f64 },
    /// `Delta(s) = gain (a - s) / (a + s)`.
    AllPass { gain: f64, a: f64 },
}

impl DeltaSpec {
    /// Same law with its gain multiplied by `k`.
    pub fn scaled(self, k: f64) -> DeltaSpec {
        match self {
            DeltaSpec::None => DeltaSpec::None,
            DeltaSpec::StaticReal { gain } => DeltaSpec::StaticReal { gain: gain * k },
            DeltaSpec::StaticComplex { delta } => DeltaSpec::StaticComplex { delta: delta * k },
            DeltaSpec::Delay { gain, t } => DeltaSpec::Delay { gain: gain * k, t },
            DeltaSpec::AllPass { gain, a } => DeltaSpec::AllPass { gain: gain * k, a },
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub lap: Laplacian,
    pub beta: f64,
    /// Scenario vectors; required unless `delta` is `None`.
    pub pv: Option<PerturbationVectors>,
    pub delta: DeltaSpec,
    pub theta0: Vec<f64>,
    pub omega0: Vec<f64>,
    pub h: f64,
    pub t_final: f64,
    /// Store full states every this many steps (the sync metric and output
    /// are kept at every step).
    pub record_every: usize,
}

impl SimConfig {
    /// Largest admissible step: `0.01 * 2 pi / sqrt(lambda_max)`, and `T / 20`
    /// for a positive delay.
    pub fn step_limit(&self) -> f64 {
        let lmax = self
            .lap
            .matrix()
            .clone()
            .symmetric_eigenvalues()
            .max()
            .max(1e-12);
        let mut lim = 0.01 * 2.0 * std::f64::consts::PI / lmax.sqrt();
        if let DeltaSpec::Delay { t, .. } = self.delta {
            if t > 0.0 {
                lim = lim.min(t / 20.0);
            }
        }
        lim
    }

    /// Step of `0.9 * step_limit()`.
    pub fn with_auto_step(mut self) -> Self {
        self.h = 0.9 * self.step_limit();
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub h: f64,
    pub n: usize,
    /// `t_k = k h` for every integrated step, starting at 0.
    pub times: Vec<f64>,
    /// `d(t)` at every step.
    pub sync: Vec<f64>,
    /// `y(t) = c theta(t)` at every step (0 without a scenario).
    pub output: Vec<f64>,
    pub record_every: usize,
    /// `(theta, omega)` at steps `0, record_every, 2 record_every, ...`.
    pub states: Vec<(Vec<f64>, Vec<f64>)>,
    /// Set when the state norm passed `1e12` and integration stopped.
    pub truncated: bool,
}

impl Trajectory {
    pub fn state_times(&self) -> Vec<f64> {
        (0..self.states.len())
            .map(|k| (k * self.record_every) as f64 * self.h)
            .collect()
    }
}

/// `||theta - mean(theta) 1||_2`.
pub fn deviation(theta: &[f64]) -> f64 {
    let n = theta.len() as f64;
    let mean = theta.iter().sum::<f64>() / n;
    theta.iter().map(|x| (x - mean).powi(2)).sum::<f64>().sqrt()
}

/// The sync metric `d(t)` of a trajectory.
pub fn sync_metric(traj: &Trajectory) -> &[f64] {
    &traj.sync
}

/// Fixed-capacity history of `y` sampled every `h`, with linear
/// interpolation and zero history before `t = 0`.
struct DelayLine {
    h: f64,
    buf: VecDeque<f64>,
    cap: usize,
    /// Index of `buf[0]` in step units.
    first: usize,
}

impl DelayLine {
    fn new(h: f64, t: f64) -> Self {
        let cap = (t / h).ceil() as usize + 3;
        DelayLine {
            h,
            buf: VecDeque::with_capacity(cap),
            cap,
            first: 0,
        }
    }

    fn push(&mut self, y: f64) {
        if self.buf.len() == self.cap {
            self.buf.pop_front();
            self.first += 1;
        }
        self.buf.push_back(y);
    }

    fn at(&self, tau: f64) -> f64 {
        if tau < 0.0 {
            return 0.0;
        }
        let x = tau / self.h;
        let k = x.floor() as usize;
        let frac = x - k as f64;
        let get = |i: usize| -> f64 {
            debug_assert!(i >= self.first, "delay history evicted");
            self.buf.get(i - self.first).copied().unwrap_or(0.0)
        };
        let y0 = get(k);
        if frac == 0.0 {
            y0
        } else {
            y0 + frac * (get(k + 1) - y0)
        }
    }
}

struct System<'a> {
    n: usize,
    l: &'a nalgebra::DMatrix<f64>,
    beta: f64,
    b: Option<&'a DVector<f64>>,
    c: Option<&'a DVector<f64>>,
}

impl System<'_> {
    fn output(&self, x: &[f64]) -> f64 {
        match self.c {
            Some(c) => (0..self.n).map(|i| c[i] * x[i]).sum(),
            None => 0.0,
        }
    }

    /// Derivative of `(theta, omega, z)` given the input `u` and `z'`.
    fn deriv(&self, x: &[f64], u: f64, dz: f64, out: &mut [f64]) {
        let n = self.n;
        let (theta, rest) = x.split_at(n);
        let omega = &rest[..n];
        out[..n].copy_from_slice(omega);
        for i in 0..n {
            let mut acc = -self.beta * omega[i];
            let row = self.l.row(i);
            for j in 0..n {
                acc -= row[j] * theta[j];
            }
            if let Some(b) = self.b {
                acc += b[i] * u;
            }
            out[n + i] = acc;
        }
        out[2 * n] = dz;
    }
}

pub fn simulate(cfg: &SimConfig) -> Result<Trajectory> {
    let n = cfg.lap.n();
    if cfg.theta0.len() != n || cfg.omega0.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: cfg.theta0.len().min(cfg.omega0.len()),
        });
    }
    if !(cfg.beta > 0.0) || !(cfg.h > 0.0) || !(cfg.t_final > 0.0) || cfg.record_every == 0 {
        return Err(Error::Parameter(
            "simulation needs beta > 0, h > 0, t_final > 0 and record_every >= 1".into(),
        ));
    }
    let delta = match cfg.delta {
        DeltaSpec::StaticComplex { .. } => {
            return Err(Error::Unsupported(
                "complex static gains are verified from eigenvalues, not simulated".into(),
            ))
        }
        DeltaSpec::Delay { gain, t: 0.0 } => DeltaSpec::StaticReal { gain },
        DeltaSpec::Delay { t, .. } if !(t > 0.0) => {
            return Err(Error::Parameter(format!("delay must be >= 0, got {t}")))
        }
        DeltaSpec::AllPass { a, .. } if !(a > 0.0) => {
            return Err(Error::Parameter(format!("all-pass parameter must be > 0, got {a}")))
        }
        d => d,
    };
    if delta != DeltaSpec::None {
        match &cfg.pv {
            Some(pv) if pv.n() == n => {}
            Some(pv) => return Err(Error::Dimension { expected: n, got: pv.n() }),
            None => return Err(Error::Parameter("feedback needs scenario vectors".into())),
        }
    }
    let limit = cfg.step_limit();
    if cfg.h > limit * (1.0 + 1e-12) {
        return Err(Error::StepSize { h: cfg.h, limit });
    }

    let sys = System {
        n,
        l: cfg.lap.matrix(),
        beta: cfg.beta,
        b: cfg.pv.as_ref().filter(|_| delta != DeltaSpec::None).map(|p| &p.b),
        c: cfg.pv.as_ref().map(|p| &p.c),
    };
    let h = cfg.h;
    let steps = (cfg.t_final / h).round() as usize;
    let dim = 2 * n + 1;
    let mut x: Vec<f64> = cfg.theta0.iter().chain(&cfg.omega0).copied().chain([0.0]).collect();
    let mut line = match delta {
        DeltaSpec::Delay { t, .. } => Some(DelayLine::new(h, t)),
        _ => None,
    };

    // u and z' at a stage state and time
    let feedback = |x: &[f64], t: f64, line: &Option<DelayLine>| -> (f64, f64) {
        let y = sys.output(x);
        match delta {
            DeltaSpec::None => (0.0, 0.0),
            DeltaSpec::StaticReal { gain } => (gain * y, 0.0),
            DeltaSpec::Delay { gain, t: tau } => {
                let yd = line.as_ref().map_or(0.0, |l| l.at(t - tau));
                (gain * yd, 0.0)
            }
            DeltaSpec::AllPass { gain, a } => {
                let z = x[2 * n];
                (-gain * y + z, -a * z + 2.0 * a * gain * y)
            }
            DeltaSpec::StaticComplex { .. } => unreachable!(),
        }
    };

    let mut traj = Trajectory {
        h,
        n,
        times: Vec::with_capacity(steps + 1),
        sync: Vec::with_capacity(steps + 1),
        output: Vec::with_capacity(steps + 1),
        record_every: cfg.record_every,
        states: Vec::new(),
        truncated: false,
    };
    let record = |traj: &mut Trajectory, x: &[f64], k: usize| {
        traj.times.push(k as f64 * h);
        traj.sync.push(deviation(&x[..n]));
        traj.output.push(sys.output(x));
        if k % cfg.record_every == 0 {
            traj.states.push((x[..n].to_vec(), x[n..2 * n].to_vec()));
        }
    };
    record(&mut traj, &x, 0);
    if let Some(l) = line.as_mut() {
        l.push(sys.output(&x));
    }

    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];
    for step in 0..steps {
        let t = step as f64 * h;
        let (u, dz) = feedback(&x, t, &line);
        sys.deriv(&x, u, dz, &mut k1);
        for i in 0..dim {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        let (u, dz) = feedback(&tmp, t + 0.5 * h, &line);
        sys.deriv(&tmp, u, dz, &mut k2);
        for i in 0..dim {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        let (u, dz) = feedback(&tmp, t + 0.5 * h, &line);
        sys.deriv(&tmp, u, dz, &mut k3);
        for i in 0..dim {
            tmp[i] = x[i] + h * k3[i];
        }
        let (u, dz) = feedback(&tmp, t + h, &line);
        sys.deriv(&tmp, u, dz, &mut k4);
        for i in 0..dim {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: step + 1 });
        }
        record(&mut traj, &x, step + 1);
        if let Some(l) = line.as_mut() {
            l.push(sys.output(&x));
        }
        let norm = x[..2 * n].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e12 {
            traj.truncated = true;
            break;
        }
    }
    Ok(traj)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Growth {
    Growing,
    Bounded,
    Indeterminate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub growth: Growth,
    /// Fitted exponential rate of `d(t)`; `-inf` for an identically zero `d`.
    pub rate: f64,
    /// Band half-width used for the decision.
    pub band: f64,
    /// Set when the decision needed the doubled-horizon retry.
    pub retried: bool,
}

/// Least-squares slope of `log d(t)` after discarding the first 20% of the
/// horizon; `growing` above `1e-3 beta`, `bounded` below `-1e-3 beta`.
///
/// `d(t)` of an oscillating mode dips towards zero twice a period; the slope
/// is fitted to the upper envelope (maxima over 50 equal blocks of the
/// retained window) so those dips do not bias it.
pub fn stability_verdict(traj: &Trajectory, beta: f64) -> Result<StabilityVerdict> {
    let band = 1e-3 * beta;
    let start = traj.sync.len() / 5;
    let window = &traj.sync[start..];
    if window.len() < 100 {
        return Err(Error::Parameter(format!(
            "need at least 100 retained samples, got {}",
            window.len()
        )));
    }
    if traj.sync.iter().all(|&d| d == 0.0) {
        return Ok(StabilityVerdict {
            growth: Growth::Bounded,
            rate: f64::NEG_INFINITY,
            band,
            retried: false,
        });
    }
    let blocks = 50;
    let len = window.len() / blocks;
    let mut xs = Vec::with_capacity(blocks);
    let mut ys = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let lo = b * len;
        let hi = if b + 1 == blocks { window.len() } else { lo + len };
        let (k, d) = (lo..hi)
            .map(|k| (k, window[k]))
            .fold((lo, f64::NEG_INFINITY), |acc, (k, d)| if d > acc.1 { (k, d) } else { acc });
        if d > 0.0 {
            xs.push(traj.times[start + k]);
            ys.push(d.ln());
        }
    }
    if xs.len() < 3 {
        return Ok(StabilityVerdict {
            growth: Growth::Bounded,
            rate: f64::NEG_INFINITY,
            band,
            retried: false,
        });
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let rate = sxy / sxx;
    let growth = if rate > band {
        Growth::Growing
    } else if rate < -band {
        Growth::Bounded
    } else {
        Growth::Indeterminate
    };
    Ok(StabilityVerdict {
        growth,
        rate,
        band,
        retried: false,
    })
}

/// Simulates and judges growth; an indeterminate result is retried once at
/// twice the horizon.
pub fn simulate_with_verdict(cfg: &SimConfig) -> Result<(Trajectory, StabilityVerdict)> {
    let traj = simulate(cfg)?;
    let v = stability_verdict(&traj, cfg.beta)?;
    if v.growth != Growth::Indeterminate {
        return Ok((traj, v));
    }
    let mut longer = cfg.clone();
    longer.t_final *= 2.0;
    let traj = simulate(&longer)?;
    let mut v = stability_verdict(&traj, cfg.beta)?;
    v.retried = true;
    Ok((traj, v))
}

/// Runs independent configurations, possibly in parallel.
pub fn simulate_many(cfgs: &[SimConfig], exec: Exec) -> Vec<Result<(Trajectory, StabilityVerdict)>> {
    exec.map_slice(cfgs, simulate_with_verdict)
}

/// Angular frequency from zero crossings of `y(t)` over the final
/// `1 - from` fraction of the trajectory.
pub fn oscillation_frequency(traj: &Trajectory, from: f64) -> Option<f64> {
    let y = &traj.output;
    let start = ((y.len() as f64) * from) as usize;
    let mut crossings = Vec::new();
    for k in start.max(1)..y.len() {
        let (a, b) = (y[k - 1], y[k]);
        if (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0) {
            let frac = a / (a - b);
            crossings.push(traj.times[k - 1] + frac * traj.h);
        }
    }
    if crossings.len() < 3 {
        return None;
    }
    let span = crossings[crossings.len() - 1] - crossings[0];
    Some(std::f64::consts::PI * (crossings.len() - 1) as f64 / span)
}

/// `0.5 omega^T omega + 0.5 theta^T L theta`.
pub fn energy(lap: &Laplacian, theta: &[f64], omega: &[f64]) -> f64 {
    let th = DVector::from_column_slice(theta);
    let kinetic: f64 = omega.iter().map(|w| w * w).sum();
    0.5 * kinetic + 0.5 * th.dot(&lap.apply(&th))
}
