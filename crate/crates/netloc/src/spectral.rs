//! Laplacian spectra, second-order modes and eigenvector localization.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector, DVectorView, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::graph::{graph_distance, Graph, Laplacian};
use crate::{Error, Result};

/// Ascending eigenpairs of a Laplacian.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// Column `i` pairs with `values[i]`.
    pub vectors: DMatrix<f64>,
    /// Smallest consecutive eigenvalue gap (infinite for n = 1).
    pub min_gap: f64,
}

impl Spectrum {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn lambda_max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn vector(&self, i: usize) -> DVectorView<'_, f64> {
        self.vectors.column(i)
    }

    /// Refuses spectra whose smallest gap is below `rel * lambda_max`.
    pub fn check_simple(&self, rel: f64) -> Result<()> {
        let tol = rel * self.lambda_max();
        for i in 1..self.n() {
            if self.values[i] - self.values[i - 1] < tol {
                return Err(Error::Degenerate {
                    i: i - 1,
                    j: i,
                    lambda_i: self.values[i - 1],
                    lambda_j: self.values[i],
                });
            }
        }
        Ok(())
    }
}

/// Full symmetric eigendecomposition, sorted ascending, with the sign of each
/// eigenvector fixed so its first component above `1e-9` in magnitude is
/// positive. Eigenvalues in `[-1e-10 * lambda_max, 0)` are clamped to 0.
pub fn eig_sym(l: &Laplacian) -> Result<Spectrum> {
    let n = l.n();
    let eig = SymmetricEigen::try_new(l.matrix().clone(), f64::EPSILON, 1000 * n.max(10))
        .ok_or_else(|| {
            Error::Eigen(format!(
                "symmetric eigensolver did not converge (n = {n}, ||L||_max = {})",
                l.matrix().amax()
            ))
        })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lmax = eig.eigenvalues.max().max(0.0);
    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let mut lam = eig.eigenvalues[k];
        if lam < 0.0 && lam >= -1e-10 * lmax {
            lam = 0.0;
        }
        values.push(lam);
        let v = eig.eigenvectors.column(k);
        let flip = v
            .iter()
            .find(|x| x.abs() > 1e-9)
            .is_some_and(|&x| x < 0.0);
        let sign = if flip { -1.0 } else { 1.0 };
        vectors.set_column(col, &(v * sign));
    }
    let min_gap = values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    Ok(Spectrum {
        values,
        vectors,
        min_gap,
    })
}

/// The two generator eigenvalues attached to one Laplacian eigenvalue.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModePair {
    pub lambda: f64,
    pub mu_plus: Complex64,
    pub mu_minus: Complex64,
}

/// Eigenvalues of the generator `[[0, I], [-L, -beta I]]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderModes {
    pub beta: f64,
    pub pairs: Vec<ModePair>,
}

impl SecondOrderModes {
    /// Eigenvector `(v_i, mu v_i)` of the generator.
    pub fn eigenvector(&self, spectrum: &Spectrum, i: usize, plus: bool) -> DVector<Complex64> {
        let n = spectrum.n();
        let mu = if plus {
            self.pairs[i].mu_plus
        } else {
            self.pairs[i].mu_minus
        };
        let v = spectrum.vector(i);
        DVector::from_fn(2 * n, |k, _| {
            if k < n {
                Complex64::new(v[k], 0.0)
            } else {
                mu * v[k - n]
            }
        })
    }

    /// All `2n` eigenvalues.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.pairs
            .iter()
            .flat_map(|p| [p.mu_plus, p.mu_minus])
            .collect()
    }
}

/// Roots of `mu^2 + beta mu + lambda = 0`.
pub fn mode_pair(lambda: f64, beta: f64) -> ModePair {
    let disc = beta * beta - 4.0 * lambda;
    let (mu_plus, mu_minus) = if disc < 0.0 {
        let im = 0.5 * (-disc).sqrt();
        (Complex64::new(-0.5 * beta, im), Complex64::new(-0.5 * beta, -im))
    } else {
        // avoid cancellation in the smaller root
        let minus = -0.5 * (beta + disc.sqrt());
        let plus = if minus != 0.0 { lambda / minus } else { 0.0 };
        (Complex64::new(plus, 0.0), Complex64::new(minus, 0.0))
    };
    ModePair {
        lambda,
        mu_plus,
        mu_minus,
    }
}

pub fn second_order_eigs(spectrum: &Spectrum, beta: f64) -> SecondOrderModes {
    SecondOrderModes {
        beta,
        pairs: spectrum.values.iter().map(|&l| mode_pair(l, beta)).collect(),
    }
}

fn check_unit<'a>(v: impl IntoIterator<Item = &'a f64>) -> Result<f64> {
    let norm = v.into_iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized(norm));
    }
    Ok(norm)
}

/// `sum_k v(k)^4` for a unit vector.
pub fn inverse_participation_ratio(v: &[f64]) -> Result<f64> {
    check_unit(v)?;
    Ok(v.iter().map(|x| x.powi(4)).sum())
}

/// Nodes with `|v(k)| >= alpha * max |v|`; ties at the threshold included.
pub fn peak_set(v: &[f64], alpha: f64) -> Vec<usize> {
    let vmax = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let thr = alpha * vmax * (1.0 - 1e-12);
    (0..v.len()).filter(|&k| v[k].abs() >= thr).collect()
}

/// Exponential fit `|v| ~ c q^d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub c: f64,
    pub q: f64,
    pub r2: f64,
}

impl DecayFit {
    /// The "no evidence of decay" result.
    pub const NONE: DecayFit = DecayFit {
        c: 1.0,
        q: 1.0,
        r2: 0.0,
    };
}

/// Ordinary least squares `y = slope x + intercept`, with r2 clamped to
/// [0, 1] and defined as 0 for constant `y`.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return (0.0, my, 0.0);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let r2 = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (slope, intercept, r2)
}

fn fit_from_points(xs: &[f64], ys: &[f64]) -> DecayFit {
    if xs.len() < 3 {
        return DecayFit::NONE;
    }
    let (slope, intercept, r2) = linear_fit(xs, ys);
    DecayFit {
        c: intercept.exp(),
        q: slope.exp(),
        r2,
    }
}

/// Pointwise least-squares fit of `log|v(k)|` against the hop distance to
/// the peak set, over nodes at distance at least 1 with `|v(k)| > 1e-12`.
pub fn decay_fit(v: &[f64], peaks: &[usize], g: &Graph) -> Result<DecayFit> {
    if peaks.is_empty() {
        return Err(Error::EmptySet);
    }
    let d = graph_distance(g, peaks)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..v.len())
        .filter(|&k| d[k] >= 1 && d[k] != usize::MAX && v[k].abs() > 1e-12)
        .map(|k| (d[k] as f64, v[k].abs().ln()))
        .unzip();
    Ok(fit_from_points(&xs, &ys))
}

/// Distance used by the localization classifier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// `|k - p|` divided by the graph's index bandwidth (a lower bound on
    /// hop distance). Meaningful when node order follows the geometry, as
    /// in the banded family.
    #[default]
    Index,
    /// Unweighted hop distance.
    Hop,
}

/// Fit of the shell envelope `max{|v(k)| : d(k) = s}` against `s / scale`,
/// for shells `s >= 1` until the envelope first falls to the background
/// level `2 * median|v|` or rises again. At least three shells are used
/// when available.
pub fn envelope_fit(v: &[f64], shells: &[usize], scale: f64) -> DecayFit {
    let n = v.len();
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    let maxd = shells.iter().copied().filter(|&d| d != usize::MAX).max().unwrap_or(0);
    let mut env = vec![f64::NAN; maxd + 1];
    for k in 0..n {
        let d = shells[k];
        if d != usize::MAX && !(env[d] >= mags[k]) {
            env[d] = mags[k];
        }
    }
    mags.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        mags[n / 2]
    } else {
        0.5 * (mags[n / 2 - 1] + mags[n / 2])
    };
    let bg = (2.0 * median).max(1e-12);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut prev = f64::INFINITY;
    for (d, &e) in env.iter().enumerate().skip(1) {
        if e.is_nan() {
            continue;
        }
        // A peak that reaches background within two shells still gets a
        // three-point fit.
        let short = xs.len() < 3 && e > 1e-12;
        if !short && (e <= bg || e > prev) {
            break;
        }
        xs.push(d as f64 / scale);
        ys.push(e.ln());
        prev = e;
    }
    fit_from_points(&xs, &ys)
}

/// Classifier thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationParams {
    pub alpha: f64,
    pub q_max: f64,
    pub r2_min: f64,
    /// `None` means `max(10 / n, 0.18)`.
    pub ipr_min: Option<f64>,
    pub metric: Metric,
}

impl Default for LocalizationParams {
    fn default() -> Self {
        LocalizationParams {
            alpha: 0.5,
            q_max: 0.8,
            r2_min: 0.5,
            ipr_min: None,
            metric: Metric::Index,
        }
    }
}

impl LocalizationParams {
    pub fn ipr_min_for(&self, n: usize) -> f64 {
        self.ipr_min.unwrap_or((10.0 / n as f64).max(0.18))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Localized,
    Delocalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub params: LocalizationParams,
    pub ipr_min: f64,
    pub eigenvalues: Vec<f64>,
    pub labels: Vec<Label>,
    pub ipr: Vec<f64>,
    /// Fits for every eigenindex (the constant mode gets the "no decay" fit).
    pub decay_fits: Vec<DecayFit>,
    /// Peak sets of the localized eigenindices.
    pub peak_sets: BTreeMap<usize, Vec<usize>>,
    pub localized_region: Vec<usize>,
    pub delocalized_region: Vec<usize>,
}

impl LocalizationReport {
    pub fn localized_indices(&self) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == Label::Localized)
            .collect()
    }

    pub fn localized_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == Label::Localized).count()
    }

    /// Per-node membership in the localized region.
    pub fn region_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.labels.len()];
        for &k in &self.localized_region {
            m[k] = true;
        }
        m
    }
}

pub fn classify_localization(
    spectrum: &Spectrum,
    g: &Graph,
    params: &LocalizationParams,
) -> Result<LocalizationReport> {
    classify_localization_with(spectrum, g, params, Exec::default())
}

struct ModeResult {
    ipr: f64,
    fit: DecayFit,
    peaks: Vec<usize>,
    localized: bool,
}

pub fn classify_localization_with(
    spectrum: &Spectrum,
    g: &Graph,
    params: &LocalizationParams,
    exec: Exec,
) -> Result<LocalizationReport> {
    let n = spectrum.n();
    if g.n() != n {
        return Err(Error::Dimension {
            expected: n,
            got: g.n(),
        });
    }
    if !(params.alpha > 0.0 && params.alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha must lie in (0, 1), got {}", params.alpha)));
    }
    let ipr_min = params.ipr_min_for(n);
    let bw = g.index_bandwidth().max(1) as f64;
    let zero_tol = 1e-10 * spectrum.lambda_max().max(1.0);

    let results: Vec<Result<ModeResult>> = exec.map(n, |i| {
        let v: Vec<f64> = spectrum.vector(i).iter().copied().collect();
        let ipr = inverse_participation_ratio(&v)?;
        let peaks = peak_set(&v, params.alpha);
        if spectrum.values[i].abs() <= zero_tol {
            return Ok(ModeResult {
                ipr,
                fit: DecayFit::NONE,
                peaks,
                localized: false,
            });
        }
        let fit = match params.metric {
            Metric::Index => {
                let shells: Vec<usize> = (0..n)
                    .map(|k| peaks.iter().map(|&p| k.abs_diff(p)).min().unwrap_or(usize::MAX))
                    .collect();
                envelope_fit(&v, &shells, bw)
            }
            Metric::Hop => {
                let shells = graph_distance(g, &peaks)?;
                envelope_fit(&v, &shells, 1.0)
            }
        };
        let localized = fit.q <= params.q_max && fit.r2 >= params.r2_min && ipr >= ipr_min;
        Ok(ModeResult {
            ipr,
            fit,
            peaks,
            localized,
        })
    });

    let mut labels = Vec::with_capacity(n);
    let mut ipr = Vec::with_capacity(n);
    let mut decay_fits = Vec::with_capacity(n);
    let mut peak_sets = BTreeMap::new();
    let mut region = BTreeSet::new();
    for (i, r) in results.into_iter().enumerate() {
        let r = r?;
        ipr.push(r.ipr);
        decay_fits.push(r.fit);
        if r.localized {
            labels.push(Label::Localized);
            region.extend(r.peaks.iter().copied());
            peak_sets.insert(i, r.peaks);
        } else {
            labels.push(Label::Delocalized);
        }
    }
    let delocalized_region = (0..n).filter(|k| !region.contains(k)).collect();
    Ok(LocalizationReport {
        params: *params,
        ipr_min,
        eigenvalues: spectrum.values.clone(),
        labels,
        ipr,
        decay_fits,
        peak_sets,
        localized_region: region.into_iter().collect(),
        delocalized_region,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_laplacian, gen_banded_path, gen_banded_width};
    use approx::assert_abs_diff_eq;

    fn p3() -> Graph {
        Graph::new(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn p3_spectrum() {
        let s = eig_sym(&build_laplacian(&p3())).unwrap();
        for (a, b) in s.values.iter().zip([0.0, 1.0, 3.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        let r3 = 3f64.sqrt();
        let r2 = 2f64.sqrt();
        let r6 = 6f64.sqrt();
        let want = [
            [1.0 / r3, 1.0 / r3, 1.0 / r3],
            [1.0 / r2, 0.0, -1.0 / r2],
            [1.0 / r6, -2.0 / r6, 1.0 / r6],
        ];
        for (i, w) in want.iter().enumerate() {
            for (k, &wk) in w.iter().enumerate() {
                assert_abs_diff_eq!(s.vectors[(k, i)], wk, epsilon = 1e-12);
            }
        }
        assert_abs_diff_eq!(s.min_gap, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn k2_spectrum() {
        let s = eig_sym(&build_laplacian(&Graph::new(2, [(0, 1, 1.0)]).unwrap())).unwrap();
        assert_abs_diff_eq!(s.values[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.values[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn banded_connected_spectrum() {
        let s = eig_sym(&build_laplacian(&gen_banded_path(100, 40).unwrap())).unwrap();
        assert!(s.values[1] > 0.0);
        assert!(s.values[0] >= 0.0);
    }

    #[test]
    fn mode_pairs() {
        let p = mode_pair(1.0, 0.0);
        assert_abs_diff_eq!(p.mu_plus.im, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.mu_minus.im, -1.0, epsilon = 1e-15);
        let p = mode_pair(0.0, 0.5);
        assert_eq!(p.mu_plus, Complex64::new(0.0, 0.0));
        assert_eq!(p.mu_minus, Complex64::new(-0.5, 0.0));
        let p = mode_pair(2.0, 0.2);
        assert_eq!(p.mu_plus.re, -0.1);
        assert_abs_diff_eq!(p.mu_plus.im, 1.41067, epsilon = 1e-5);
        let p = mode_pair(0.01, 1.0);
        assert!((p.mu_plus * p.mu_minus - 0.01).norm() < 1e-15);
        assert!((p.mu_plus + p.mu_minus + 1.0).norm() < 1e-15);
    }

    #[test]
    fn generator_eigenvectors() {
        let g = p3();
        let s = eig_sym(&build_laplacian(&g)).unwrap();
        let modes = second_order_eigs(&s, 0.3);
        let l = build_laplacian(&g);
        let mut a = DMatrix::zeros(6, 6);
        for i in 0..3 {
            a[(i, i + 3)] = 1.0;
            a[(i + 3, i + 3)] = -0.3;
            for j in 0..3 {
                a[(i + 3, j)] = -l.matrix()[(i, j)];
            }
        }
        let ac = crate::linalg::to_complex(&a);
        for i in 0..3 {
            for plus in [true, false] {
                let w = modes.eigenvector(&s, i, plus);
                let mu = if plus {
                    modes.pairs[i].mu_plus
                } else {
                    modes.pairs[i].mu_minus
                };
                assert!((&ac * &w - &w * mu).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn ipr_examples() {
        let v = vec![0.1; 100];
        assert_abs_diff_eq!(inverse_participation_ratio(&v).unwrap(), 0.01, epsilon = 1e-14);
        let mut e = vec![0.0; 5];
        e[1] = 1.0;
        assert_eq!(inverse_participation_ratio(&e).unwrap(), 1.0);
        let r = 0.5f64.sqrt();
        assert_abs_diff_eq!(
            inverse_participation_ratio(&[r, 0.0, -r]).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert!(matches!(
            inverse_participation_ratio(&[1.0, 1.0]),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn peak_set_examples() {
        assert_eq!(peak_set(&[0.0, 1.0, 0.0], 0.5), vec![1]);
        let r = 0.5f64.sqrt();
        assert_eq!(peak_set(&[r, 0.0, -r], 0.5), vec![0, 2]);
        let r6 = 6f64.sqrt();
        assert_eq!(peak_set(&[1.0 / r6, -2.0 / r6, 1.0 / r6], 0.5), vec![0, 1, 2]);
    }

    #[test]
    fn decay_fit_planted_and_flat() {
        let g = gen_banded_path(40, 2).unwrap();
        let d = graph_distance(&g, &[0]).unwrap();
        let raw: Vec<f64> = d.iter().map(|&x| 0.5f64.powi(x as i32)).collect();
        let nrm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        let v: Vec<f64> = raw.iter().map(|x| x / nrm).collect();
        let fit = decay_fit(&v, &[0], &g).unwrap();
        assert_abs_diff_eq!(fit.q, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.r2, 1.0, epsilon = 1e-12);

        let flat = vec![1.0 / 40f64.sqrt(); 40];
        let fit = decay_fit(&flat, &[3], &g).unwrap();
        assert_abs_diff_eq!(fit.q, 1.0, epsilon = 1e-9);
        assert!(fit.r2 < 1e-6);
        assert!(matches!(decay_fit(&flat, &[], &g), Err(Error::EmptySet)));
    }

    #[test]
    fn decay_fit_too_few_points() {
        let g = p3();
        let v = [1.0, 0.0, 0.0];
        assert_eq!(decay_fit(&v, &[0], &g).unwrap(), DecayFit::NONE);
    }

    #[test]
    fn path_has_no_localization() {
        let g = gen_banded_path(100, 1).unwrap();
        let s = eig_sym(&build_laplacian(&g)).unwrap();
        let rep = classify_localization(&s, &g, &LocalizationParams::default()).unwrap();
        assert_eq!(rep.localized_count(), 0);
        let mean_ipr: f64 = rep.ipr[1..].iter().sum::<f64>() / 99.0;
        assert!((mean_ipr * 100.0 - 1.5).abs() < 0.1, "{}", mean_ipr * 100.0);
        assert_eq!(rep.delocalized_region.len(), 100);
    }

    #[test]
    fn report_invariants_banded() {
        let g = gen_banded_width(100, 40).unwrap();
        let s = eig_sym(&build_laplacian(&g)).unwrap();
        let rep = classify_localization(&s, &g, &LocalizationParams::default()).unwrap();
        assert_eq!(rep.labels[0], Label::Delocalized);
        let mask = rep.region_mask();
        for (i, peaks) in &rep.peak_sets {
            assert_eq!(rep.labels[*i], Label::Localized);
            assert!(!peaks.is_empty());
            assert!(peaks.iter().all(|&k| mask[k]));
        }
        let mut all: Vec<usize> = rep
            .localized_region
            .iter()
            .chain(&rep.delocalized_region)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn sequential_matches_parallel() {
        let g = gen_banded_width(120, 30).unwrap();
        let s = eig_sym(&build_laplacian(&g)).unwrap();
        let p = LocalizationParams::default();
        let a = classify_localization_with(&s, &g, &p, Exec::Sequential).unwrap();
        let b = classify_localization_with(&s, &g, &p, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
