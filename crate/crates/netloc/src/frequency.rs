//! State-space triples, compressed resolvent transfer functions, H-infinity
//! norms, robust margins and structured pseudospectrum grids.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::graph::Laplacian;
use crate::linalg::{self, HessenbergSolver};
use crate::perturbation::PerturbationVectors;
use crate::spectral::{eig_sym, mode_pair, Spectrum};
use crate::{Error, Result};

/// Residues below this magnitude are treated as exact cancellations.
pub const RESIDUE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    /// `A = +L`.
    Plus,
    /// `A = -L`.
    Minus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "order", rename_all = "lowercase")]
pub enum Order {
    First { sign: Sign },
    Second { beta: f64 },
    /// Arbitrary `(A, b, c)` without a modal form.
    General,
}

/// Modal form built from the Laplacian spectrum: residues
/// `r_i = (c v_i)(v_i^T b)` at each eigenvalue `lambda_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Modal {
    pub lambdas: Vec<f64>,
    pub residues: Vec<f64>,
}

impl Modal {
    fn from_spectrum(spectrum: &Spectrum, pv: &PerturbationVectors) -> Modal {
        let residues = (0..spectrum.n())
            .map(|i| {
                let v = spectrum.vector(i);
                v.dot(&pv.c) * v.dot(&pv.b)
            })
            .collect();
        Modal {
            lambdas: spectrum.values.clone(),
            residues,
        }
    }

    fn observable(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.lambdas
            .iter()
            .zip(&self.residues)
            .filter(|(_, r)| r.abs() > RESIDUE_TOL)
            .map(|(&l, &r)| (l, r))
    }
}

/// `(A, b, c)` with an optional modal cache.
#[derive(Clone, Debug)]
pub struct StateSpace {
    pub order: Order,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub modal: Option<Modal>,
    /// Laplacian and scenario vectors the triple was assembled from.
    pub source: Option<(Laplacian, PerturbationVectors)>,
}

impl StateSpace {
    /// A triple with no modal structure; evaluated by direct solves.
    pub fn general(a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>) -> Result<StateSpace> {
        let m = a.nrows();
        if a.ncols() != m {
            return Err(Error::Dimension {
                expected: m,
                got: a.ncols(),
            });
        }
        for len in [b.len(), c.len()] {
            if len != m {
                return Err(Error::Dimension { expected: m, got: len });
            }
        }
        Ok(StateSpace {
            order: Order::General,
            a,
            b,
            c,
            modal: None,
            source: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn beta(&self) -> Option<f64> {
        match self.order {
            Order::Second { beta } => Some(beta),
            _ => None,
        }
    }

    /// Poles with nonzero residue (all eigenvalues of `A` for general triples).
    pub fn observable_poles(&self) -> Result<Vec<Complex64>> {
        match (&self.modal, self.order) {
            (Some(m), Order::First { sign }) => Ok(m
                .observable()
                .map(|(l, _)| Complex64::new(sign_of(sign) * l, 0.0))
                .collect()),
            (Some(m), Order::Second { beta }) => Ok(m
                .observable()
                .flat_map(|(l, _)| {
                    let p = mode_pair(l, beta);
                    [p.mu_plus, p.mu_minus]
                })
                .collect()),
            _ => linalg::eigenvalues_real(&self.a),
        }
    }

    /// Modal residues at each Laplacian eigenvalue, when cached.
    pub fn residues(&self) -> Option<&[f64]> {
        self.modal.as_ref().map(|m| m.residues.as_slice())
    }
}

fn sign_of(s: Sign) -> f64 {
    match s {
        Sign::Plus => 1.0,
        Sign::Minus => -1.0,
    }
}

fn check_dims(l: &Laplacian, pv: &PerturbationVectors) -> Result<()> {
    if pv.n() != l.n() || pv.c.len() != l.n() {
        return Err(Error::Dimension {
            expected: l.n(),
            got: pv.n(),
        });
    }
    Ok(())
}

/// `A = +L` or `-L` with the scenario's `b`, `c`.
pub fn assemble_first_order(l: &Laplacian, pv: &PerturbationVectors, sign: Sign) -> Result<StateSpace> {
    check_dims(l, pv)?;
    let spectrum = eig_sym(l)?;
    assemble_first_order_with(l, &spectrum, pv, sign)
}

/// As [`assemble_first_order`], reusing a computed spectrum of `l`.
pub fn assemble_first_order_with(
    l: &Laplacian,
    spectrum: &Spectrum,
    pv: &PerturbationVectors,
    sign: Sign,
) -> Result<StateSpace> {
    check_dims(l, pv)?;
    Ok(StateSpace {
        order: Order::First { sign },
        a: l.matrix() * sign_of(sign),
        b: pv.b.clone(),
        c: pv.c.clone(),
        modal: Some(Modal::from_spectrum(spectrum, pv)),
        source: Some((l.clone(), pv.clone())),
    })
}

/// Generator `[[0, I], [-L, -beta I]]`, input `(0; b)`, output `(c, 0)`.
pub fn assemble_second_order(l: &Laplacian, pv: &PerturbationVectors, beta: f64) -> Result<StateSpace> {
    check_dims(l, pv)?;
    let spectrum = eig_sym(l)?;
    assemble_second_order_with(l, &spectrum, pv, beta)
}

/// As [`assemble_second_order`], reusing a computed spectrum of `l`.
pub fn assemble_second_order_with(
    l: &Laplacian,
    spectrum: &Spectrum,
    pv: &PerturbationVectors,
    beta: f64,
) -> Result<StateSpace> {
    check_dims(l, pv)?;
    if !(beta > 0.0) {
        return Err(Error::Parameter(format!("beta must be > 0, got {beta}")));
    }
    let n = l.n();
    let lm = l.matrix();
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        a[(i, n + i)] = 1.0;
        a[(n + i, n + i)] = -beta;
        for j in 0..n {
            a[(n + i, j)] = -lm[(i, j)];
        }
    }
    let b = DVector::from_fn(2 * n, |i, _| if i >= n { pv.b[i - n] } else { 0.0 });
    let c = DVector::from_fn(2 * n, |i, _| if i < n { pv.c[i] } else { 0.0 });
    Ok(StateSpace {
        order: Order::Second { beta },
        a,
        b,
        c,
        modal: Some(Modal::from_spectrum(spectrum, pv)),
        source: Some((l.clone(), pv.clone())),
    })
}

/// `|c 1| <= 1e-12 n`: the consensus mode is invisible at the output.
pub fn pbh_zero_mode_check(pv: &PerturbationVectors) -> bool {
    pv.c_dot_ones().abs() <= 1e-12 * pv.c.len() as f64
}

fn near(s: Complex64, p: Complex64) -> bool {
    (s - p).norm() <= 1e-12 * p.norm().max(1.0)
}

/// Modal sum; `None` at an observable pole.
fn eval_modal(order: Order, m: &Modal, s: Complex64) -> Option<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    match order {
        Order::First { sign } => {
            let sg = sign_of(sign);
            for (l, r) in m.observable() {
                let p = Complex64::new(sg * l, 0.0);
                if near(s, p) {
                    return None;
                }
                acc += r / (s - p);
            }
        }
        Order::Second { beta } => {
            let q = s * s + s * beta;
            for (l, r) in m.observable() {
                let d = q + l;
                if d.norm() <= 1e-12 * (1.0 + l) {
                    let p = mode_pair(l, beta);
                    if near(s, p.mu_plus) || near(s, p.mu_minus) {
                        return None;
                    }
                }
                acc += r / d;
            }
        }
        Order::General => unreachable!("general triples have no modal form"),
    }
    Some(acc)
}

/// `M(s) = c (sI - A)^{-1} b`, by the modal expansion when available.
pub fn eval_transfer(ss: &StateSpace, s: Complex64) -> Result<Complex64> {
    let v = match &ss.modal {
        Some(m) => eval_modal(ss.order, m, s),
        None => linalg::direct_resolvent(&ss.a, &ss.b, &ss.c, s),
    };
    v.ok_or(Error::Singular { re: s.re, im: s.im })
}

/// `M(s)` by a dense LU solve, ignoring any modal cache.
pub fn eval_transfer_direct(ss: &StateSpace, s: Complex64) -> Result<Complex64> {
    linalg::direct_resolvent(&ss.a, &ss.b, &ss.c, s).ok_or(Error::Singular { re: s.re, im: s.im })
}

/// How shifted solves are carried out on a grid.
#[derive(Clone, Debug)]
pub enum Factorization {
    /// Diagonal Schur form from the symmetric Laplacian (the modal sum).
    Modal,
    /// Orthogonal Hessenberg reduction with O(m^2) shifted solves.
    Hessenberg(HessenbergSolver),
    /// Dense LU per point.
    Direct,
}

/// Requested factorization strategy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FactorChoice {
    /// Modal when cached, Hessenberg otherwise.
    #[default]
    Auto,
    Hessenberg,
    Direct,
}

/// Reusable factorization plus the poles used for grid clamping.
#[derive(Clone, Debug)]
pub struct FactoredSystem {
    pub kind: Factorization,
    /// Set when the requested reduction failed and direct solves are used.
    pub fallback: bool,
    poles: Vec<Complex64>,
}

pub fn precompute_factorization(ss: &StateSpace) -> Result<FactoredSystem> {
    precompute_factorization_as(ss, FactorChoice::Auto)
}

pub fn precompute_factorization_as(ss: &StateSpace, choice: FactorChoice) -> Result<FactoredSystem> {
    let poles = ss.observable_poles().unwrap_or_default();
    let hess = || HessenbergSolver::new(&ss.a, &ss.b, &ss.c);
    let (kind, fallback) = match (choice, ss.modal.is_some()) {
        (FactorChoice::Auto, true) => (Factorization::Modal, false),
        (FactorChoice::Direct, _) => (Factorization::Direct, false),
        _ => match hess() {
            Some(h) => (Factorization::Hessenberg(h), false),
            None => (Factorization::Direct, true),
        },
    };
    Ok(FactoredSystem { kind, fallback, poles })
}

impl FactoredSystem {
    /// `|M(s)|`, or `+inf` within `1e-12` of a pole.
    pub fn magnitude(&self, ss: &StateSpace, s: Complex64) -> f64 {
        if self.poles.iter().any(|&p| near(s, p)) {
            return f64::INFINITY;
        }
        let v = match &self.kind {
            Factorization::Modal => ss.modal.as_ref().and_then(|m| eval_modal(ss.order, m, s)),
            Factorization::Hessenberg(h) => h.eval(s),
            Factorization::Direct => linalg::direct_resolvent(&ss.a, &ss.b, &ss.c, s),
        };
        match v {
            Some(z) if z.is_finite() => z.norm(),
            _ => f64::INFINITY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rect {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Result<Rect> {
        let r = Rect {
            re_min,
            re_max,
            im_min,
            im_max,
        };
        if !(re_min < re_max && im_min < im_max) || ![re_min, re_max, im_min, im_max].iter().all(|x| x.is_finite()) {
            return Err(Error::Parameter(format!("empty or non-finite rect {r:?}")));
        }
        Ok(r)
    }

    /// Re in `[-beta, beta/4]`, Im in `[0, 1.1 sqrt(lambda_max)]`.
    pub fn default_second_order(beta: f64, lambda_max: f64) -> Rect {
        Rect {
            re_min: -beta,
            re_max: beta / 4.0,
            im_min: 0.0,
            im_max: 1.1 * lambda_max.max(0.0).sqrt().max(1e-3),
        }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re >= self.re_min && z.re <= self.re_max && z.im >= self.im_min && z.im <= self.im_max
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    #[default]
    Linear,
    /// Logarithmically spaced imaginary axis (requires `im_min > 0`).
    Log,
}

/// Grid of `log10|M(s)|` with superlevel masks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PspecGrid {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
    pub im_axis: Axis,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    /// Row-major `ny x nx`, `values[j * nx + i]` at `(re[i], im[j])`;
    /// `+inf` at poles.
    pub values: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub masks: Vec<Vec<bool>>,
    pub fallback: bool,
}

impl PspecGrid {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn mask(&self, e: usize, i: usize, j: usize) -> bool {
        self.masks[e][j * self.nx + i]
    }

    /// Cell index `(i, j)` nearest to `z`, if `z` lies in the rect.
    pub fn nearest_cell(&self, z: Complex64) -> Option<(usize, usize)> {
        if !self.rect.contains(z) {
            return None;
        }
        let pick = |axis: &[f64], x: f64| {
            let k = axis.partition_point(|&a| a < x);
            match k {
                0 => 0,
                k if k >= axis.len() => axis.len() - 1,
                k if (axis[k] - x).abs() < (x - axis[k - 1]).abs() => k,
                k => k - 1,
            }
        };
        Some((pick(&self.re, z.re), pick(&self.im, z.im)))
    }

    /// Whether mask `e` is set at the nearest cell to `z` or at any of its
    /// eight neighbours.
    pub fn dilated_mask_contains(&self, e: usize, z: Complex64) -> bool {
        let Some((i, j)) = self.nearest_cell(z) else {
            return false;
        };
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                let (ii, jj) = (i as i64 + di, j as i64 + dj);
                if ii >= 0 && jj >= 0 && (ii as usize) < self.nx && (jj as usize) < self.ny && self.mask(e, ii as usize, jj as usize) {
                    return true;
                }
            }
        }
        false
    }

    /// Largest real part over the cells of mask `e` (`-inf` when empty).
    pub fn max_re(&self, e: usize) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for j in 0..self.ny {
            for i in 0..self.nx {
                if self.mask(e, i, j) {
                    best = best.max(self.re[i]);
                }
            }
        }
        best
    }

    /// Mask cells with at least one unset 4-neighbour (or on the grid edge).
    pub fn mask_boundary(&self, e: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for j in 0..self.ny {
            for i in 0..self.nx {
                if !self.mask(e, i, j) {
                    continue;
                }
                let edge = i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny;
                if edge
                    || !self.mask(e, i - 1, j)
                    || !self.mask(e, i + 1, j)
                    || !self.mask(e, i, j - 1)
                    || !self.mask(e, i, j + 1)
                {
                    out.push((self.re[i], self.im[j]));
                }
            }
        }
        out
    }
}

/// `values >= log10(1/eps)`; empty for `eps <= 0`.
pub fn superlevel_mask(values: &[f64], eps: f64) -> Vec<bool> {
    if !(eps > 0.0) {
        return vec![false; values.len()];
    }
    let thr = (1.0 / eps).log10();
    values.iter().map(|&v| v >= thr).collect()
}

fn axis_points(lo: f64, hi: f64, k: usize, axis: Axis) -> Vec<f64> {
    match axis {
        Axis::Linear => (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect(),
        Axis::Log => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..k).map(|i| 10f64.powf(a + (b - a) * i as f64 / (k - 1) as f64)).collect()
        }
    }
}

/// Grid specification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub im_axis: Axis,
}

pub fn eval_grid(ss: &StateSpace, rect: Rect, nx: usize, ny: usize, epsilons: &[f64]) -> Result<PspecGrid> {
    let f = precompute_factorization(ss)?;
    eval_grid_with(
        ss,
        &f,
        &GridSpec {
            rect,
            nx,
            ny,
            im_axis: Axis::Linear,
        },
        epsilons,
        Exec::default(),
    )
}

pub fn eval_grid_with(
    ss: &StateSpace,
    f: &FactoredSystem,
    spec: &GridSpec,
    epsilons: &[f64],
    exec: Exec,
) -> Result<PspecGrid> {
    let GridSpec { rect, nx, ny, im_axis } = *spec;
    if nx < 2 || ny < 2 {
        return Err(Error::Parameter(format!("grid must be at least 2 x 2, got {nx} x {ny}")));
    }
    let rect = Rect::new(rect.re_min, rect.re_max, rect.im_min, rect.im_max)?;
    if im_axis == Axis::Log && !(rect.im_min > 0.0) {
        return Err(Error::Parameter("log imaginary axis needs im_min > 0".into()));
    }
    let re = axis_points(rect.re_min, rect.re_max, nx, Axis::Linear);
    let im = axis_points(rect.im_min, rect.im_max, ny, im_axis);
    let rows: Vec<Vec<f64>> = exec.map(ny, |j| {
        re.iter()
            .map(|&x| f.magnitude(ss, Complex64::new(x, im[j])).log10())
            .collect()
    });
    let values: Vec<f64> = rows.into_iter().flatten().collect();
    let masks = epsilons.iter().map(|&e| superlevel_mask(&values, e)).collect();
    Ok(PspecGrid {
        rect,
        nx,
        ny,
        im_axis,
        re,
        im,
        values,
        epsilons: epsilons.to_vec(),
        masks,
        fallback: f.fallback,
    })
}

/// Peak gain on the imaginary axis and where it occurs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hinf {
    pub norm: f64,
    pub omega_bar: f64,
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, rel: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (b - a) <= rel * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Characteristic frequencies of the observable poles.
fn seed_frequencies(ss: &StateSpace) -> Result<Vec<f64>> {
    let mut seeds: Vec<f64> = match (&ss.modal, ss.order) {
        (Some(m), Order::Second { .. }) => m.observable().map(|(l, _)| l.max(0.0).sqrt()).collect(),
        (Some(m), Order::First { .. }) => m.observable().map(|(l, _)| l.abs()).collect(),
        _ => ss.observable_poles()?.iter().map(|p| p.norm()).collect(),
    };
    seeds.retain(|w| *w > 0.0 && w.is_finite());
    Ok(seeds)
}

/// Max of `|M(x + j w)|` over `w >= 0`, with the maximiser.
fn peak_on_line(ss: &StateSpace, x: f64, seeds: &[f64]) -> (f64, f64) {
    let mag = |w: f64| {
        eval_transfer(ss, Complex64::new(x, w))
            .map(|z| z.norm())
            .unwrap_or(f64::INFINITY)
    };
    let (lo, hi) = if seeds.is_empty() {
        (1e-3, 1e3)
    } else {
        let lo = seeds.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = seeds.iter().copied().fold(0.0, f64::max);
        (1e-3 * lo, 1e3 * hi)
    };
    let mut cand: Vec<f64> = vec![0.0];
    cand.extend_from_slice(seeds);
    let per_decade = 50.0;
    let k = ((hi / lo).log10() * per_decade).ceil().max(2.0) as usize;
    cand.extend((0..=k).map(|i| lo * (hi / lo).powf(i as f64 / k as f64)));
    cand.sort_by(f64::total_cmp);
    cand.dedup();
    let vals: Vec<f64> = cand.iter().map(|&w| mag(w)).collect();
    let mut order: Vec<usize> = (0..cand.len()).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let mut best = (vals[order[0]], cand[order[0]]);
    for &k in order.iter().take(8) {
        if !vals[k].is_finite() {
            return (f64::INFINITY, cand[k]);
        }
        let a = if k > 0 { cand[k - 1] } else { 0.0 };
        let b = if k + 1 < cand.len() { cand[k + 1] } else { cand[k] * 2.0 };
        let (w, v) = golden_max(&mag, a, b, 1e-10);
        let (w, v) = if vals[k] > v { (cand[k], vals[k]) } else { (w, v) };
        if v > best.0 {
            best = (v, w);
        }
    }
    best
}

fn require_stable(ss: &StateSpace) -> Result<Vec<Complex64>> {
    let poles = ss.observable_poles()?;
    if let Some(p) = poles.iter().find(|p| !(p.re < 0.0)) {
        return Err(Error::UnstablePole { re: p.re, im: p.im });
    }
    Ok(poles)
}

/// `sup_w |M(j w)|` by resonance-seeded search with golden-section refinement.
pub fn hinf_norm(ss: &StateSpace) -> Result<Hinf> {
    require_stable(ss)?;
    let seeds = seed_frequencies(ss)?;
    let (norm, omega_bar) = peak_on_line(ss, 0.0, &seeds);
    if !norm.is_finite() {
        return Err(Error::Singular { re: 0.0, im: omega_bar });
    }
    Ok(Hinf { norm, omega_bar })
}

/// `1 / ||M||_inf`.
pub fn robust_margin(ss: &StateSpace) -> Result<f64> {
    Ok(1.0 / hinf_norm(ss)?.norm)
}

/// Approximate `sup{Re s : s in sigma_eps}`.
///
/// Negative iff `eps` is below the robust margin.
pub fn rhp_clearance(ss: &StateSpace, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("eps must be > 0, got {eps}")));
    }
    let poles = require_stable(ss)?;
    let margin = robust_margin(ss)?;
    let seeds: Vec<f64> = {
        let mut s: Vec<f64> = poles.iter().map(|p| p.im.abs()).filter(|w| *w > 0.0).collect();
        s.extend(seed_frequencies(ss)?);
        s
    };
    let level = 1.0 / eps;
    let inside = |x: f64| peak_on_line(ss, x, &seeds).0 >= level;
    let (lo, hi) = if eps < margin {
        let x0 = poles.iter().map(|p| p.re).fold(f64::NEG_INFINITY, f64::max);
        if !x0.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        (x0, 0.0)
    } else {
        let mut x = 1e-3 * (1.0 + seeds.iter().copied().fold(0.0, f64::max));
        let mut tries = 0;
        while inside(x) && tries < 60 {
            x *= 2.0;
            tries += 1;
        }
        (0.0, x)
    };
    // scan for the right-most inside point, then bisect the crossing
    let k = 64;
    let xs: Vec<f64> = (0..=k).map(|i| lo + (hi - lo) * i as f64 / k as f64).collect();
    let mut last = 0;
    for (i, &x) in xs.iter().enumerate() {
        if i == 0 || inside(x) {
            last = i;
        }
    }
    if last == k {
        return Ok(hi);
    }
    let (mut a, mut b) = (xs[last], xs[last + 1]);
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if inside(m) {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(a)
}
