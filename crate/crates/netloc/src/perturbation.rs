//! Rank-one perturbation scenarios and first-order eigenvalue sensitivities.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::graph::{Graph, Laplacian};
use crate::linalg;
use crate::spectral::{eig_sym, Spectrum};
use crate::{Error, Result};

/// Where the uncertain feedback `u = delta y` enters and what it measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Scenario {
    /// `b = e_k - e_l`, `c = b^T`.
    Edge { k: usize, l: usize },
    /// `b = e_k`, `c = e_k^T - 1^T / n`.
    GlobalNode { k: usize },
    /// `b = e_k`, `c = e_k^T L`.
    LocalNode { k: usize },
    /// `b = L e_k`, `c = e_k^T L`.
    LocalReciprocal { k: usize },
}

/// The four scenario kinds, without node indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Edge,
    GlobalNode,
    LocalNode,
    LocalReciprocal,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::Edge,
        ScenarioKind::GlobalNode,
        ScenarioKind::LocalNode,
        ScenarioKind::LocalReciprocal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Edge => "edge",
            ScenarioKind::GlobalNode => "global-node",
            ScenarioKind::LocalNode => "local-node",
            ScenarioKind::LocalReciprocal => "local-reciprocal",
        }
    }

    /// A node scenario of this kind at `k`; `None` for `Edge`.
    pub fn at_node(self, k: usize) -> Option<Scenario> {
        match self {
            ScenarioKind::Edge => None,
            ScenarioKind::GlobalNode => Some(Scenario::GlobalNode { k }),
            ScenarioKind::LocalNode => Some(Scenario::LocalNode { k }),
            ScenarioKind::LocalReciprocal => Some(Scenario::LocalReciprocal { k }),
        }
    }
}

impl Scenario {
    pub fn kind(&self) -> ScenarioKind {
        match self {
            Scenario::Edge { .. } => ScenarioKind::Edge,
            Scenario::GlobalNode { .. } => ScenarioKind::GlobalNode,
            Scenario::LocalNode { .. } => ScenarioKind::LocalNode,
            Scenario::LocalReciprocal { .. } => ScenarioKind::LocalReciprocal,
        }
    }

    /// Range and shape checks; edges must exist in `g` unless `allow_virtual`.
    pub fn validate(&self, n: usize, g: Option<&Graph>, allow_virtual: bool) -> Result<()> {
        let check = |k: usize| {
            if k >= n {
                Err(Error::Scenario(format!("node {k} out of range for n = {n}")))
            } else {
                Ok(())
            }
        };
        match *self {
            Scenario::Edge { k, l } => {
                check(k)?;
                check(l)?;
                if k == l {
                    return Err(Error::Scenario(format!("edge ({k}, {l}) needs k != l")));
                }
                if let (Some(g), false) = (g, allow_virtual) {
                    if !g.has_edge(k, l) {
                        return Err(Error::Scenario(format!("({k}, {l}) is not an edge")));
                    }
                }
                Ok(())
            }
            Scenario::GlobalNode { k } | Scenario::LocalNode { k } | Scenario::LocalReciprocal { k } => {
                check(k)
            }
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Scenario::Edge { k, l } => write!(f, "edge:{k},{l}"),
            Scenario::GlobalNode { k } => write!(f, "global-node:{k}"),
            Scenario::LocalNode { k } => write!(f, "local-node:{k}"),
            Scenario::LocalReciprocal { k } => write!(f, "local-reciprocal:{k}"),
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    /// `edge:K,L`, `global-node:K`, `local-node:K`, `local-reciprocal:K`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Scenario(format!("cannot parse scenario {s:?}"));
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        let idx = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
        match kind.trim() {
            "edge" => {
                let (a, b) = args.split_once(',').ok_or_else(bad)?;
                Ok(Scenario::Edge { k: idx(a)?, l: idx(b)? })
            }
            "global-node" => Ok(Scenario::GlobalNode { k: idx(args)? }),
            "local-node" => Ok(Scenario::LocalNode { k: idx(args)? }),
            "local-reciprocal" => Ok(Scenario::LocalReciprocal { k: idx(args)? }),
            _ => Err(bad()),
        }
    }
}

/// Input column `b` and output row `c` (stored as a column vector).
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationVectors {
    pub b: DVector<f64>,
    pub c: DVector<f64>,
}

impl PerturbationVectors {
    pub fn n(&self) -> usize {
        self.b.len()
    }

    /// `c 1`.
    pub fn c_dot_ones(&self) -> f64 {
        self.c.sum()
    }

    /// `b c` as a dense outer product.
    pub fn outer(&self) -> DMatrix<f64> {
        &self.b * self.c.transpose()
    }
}

/// `(b, c)` for an existing-edge or node scenario.
pub fn scenario_vectors(s: &Scenario, l: &Laplacian) -> Result<PerturbationVectors> {
    scenario_vectors_impl(s, l, false)
}

/// Like [`scenario_vectors`] but accepts edges absent from the graph.
pub fn scenario_vectors_allow_virtual(s: &Scenario, l: &Laplacian) -> Result<PerturbationVectors> {
    scenario_vectors_impl(s, l, true)
}

fn scenario_vectors_impl(s: &Scenario, l: &Laplacian, allow_virtual: bool) -> Result<PerturbationVectors> {
    let n = l.n();
    s.validate(n, None, true)?;
    let m = l.matrix();
    let unit = |k: usize| DVector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 });
    let row = |k: usize| DVector::from_fn(n, |i, _| m[(k, i)]);
    Ok(match *s {
        Scenario::Edge { k, l: j } => {
            if !allow_virtual && !(m[(k, j)] < 0.0) {
                return Err(Error::Scenario(format!("({k}, {j}) is not an edge")));
            }
            let mut b = DVector::zeros(n);
            b[k] = 1.0;
            b[j] = -1.0;
            PerturbationVectors { c: b.clone(), b }
        }
        Scenario::GlobalNode { k } => {
            let inv = 1.0 / n as f64;
            let c = DVector::from_fn(n, |i, _| if i == k { 1.0 - inv } else { -inv });
            PerturbationVectors { b: unit(k), c }
        }
        Scenario::LocalNode { k } => PerturbationVectors {
            b: unit(k),
            c: row(k),
        },
        Scenario::LocalReciprocal { k } => PerturbationVectors {
            b: row(k),
            c: row(k),
        },
    })
}

/// `L + delta b c`.
pub fn perturbed_laplacian(l: &Laplacian, s: &Scenario, delta: Complex64) -> Result<DMatrix<Complex64>> {
    let pv = scenario_vectors_allow_virtual(s, l)?;
    let n = l.n();
    let m = l.matrix();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        Complex64::new(m[(i, j)], 0.0) + delta * (pv.b[i] * pv.c[j])
    }))
}

fn unit_check(v: &[f64]) -> Result<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized(norm));
    }
    Ok(())
}

/// `(v^T b)(c v)`, the first-order eigenvalue coefficient of `L + delta b c`.
pub fn first_order_sensitivity(v: &[f64], pv: &PerturbationVectors) -> Result<f64> {
    unit_check(v)?;
    if v.len() != pv.n() {
        return Err(Error::Dimension {
            expected: pv.n(),
            got: v.len(),
        });
    }
    let vb: f64 = v.iter().zip(pv.b.iter()).map(|(a, b)| a * b).sum();
    let cv: f64 = v.iter().zip(pv.c.iter()).map(|(a, c)| a * c).sum();
    Ok(vb * cv)
}

fn is_constant(v: &[f64]) -> bool {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    hi - lo <= 1e-9
}

/// Closed-form sensitivities for a unit eigenvector `v` with eigenvalue `lambda`.
pub fn scenario_sensitivity(lambda: f64, v: &[f64], s: &Scenario) -> f64 {
    match *s {
        Scenario::Edge { k, l } => (v[k] - v[l]).powi(2),
        Scenario::GlobalNode { k } => {
            if is_constant(v) {
                0.0
            } else {
                v[k] * v[k]
            }
        }
        Scenario::LocalNode { k } => lambda * v[k] * v[k],
        Scenario::LocalReciprocal { k } => lambda * lambda * v[k] * v[k],
    }
}

/// Relative gap below which perturbation theory for simple eigenvalues is refused.
pub const DEGENERATE_GAP: f64 = 1e-8;

/// First-order coefficients for every eigenvalue, from the raw rank-one form.
pub fn sensitivity_profile(spectrum: &Spectrum, l: &Laplacian, s: &Scenario) -> Result<Vec<f64>> {
    spectrum.check_simple(DEGENERATE_GAP)?;
    let pv = scenario_vectors_allow_virtual(s, l)?;
    (0..spectrum.n())
        .map(|i| {
            let v: Vec<f64> = spectrum.vector(i).iter().copied().collect();
            first_order_sensitivity(&v, &pv)
        })
        .collect()
}

fn nonconstant_modes(spectrum: &Spectrum) -> impl Iterator<Item = usize> + '_ {
    let tol = 1e-10 * spectrum.lambda_max().max(1.0);
    (0..spectrum.n()).filter(move |&i| spectrum.values[i] > tol)
}

/// `max_i v_i(k)^2` over non-constant eigenvectors.
pub fn worst_case_node_sensitivity(spectrum: &Spectrum, k: usize) -> f64 {
    nonconstant_modes(spectrum)
        .map(|i| spectrum.vectors[(k, i)].powi(2))
        .fold(0.0, f64::max)
}

/// `max_i (v_i(k) - v_i(l))^2` over non-constant eigenvectors.
pub fn worst_case_edge_sensitivity(spectrum: &Spectrum, k: usize, l: usize) -> f64 {
    if k == l {
        return 0.0;
    }
    nonconstant_modes(spectrum)
        .map(|i| (spectrum.vectors[(k, i)] - spectrum.vectors[(l, i)]).powi(2))
        .fold(0.0, f64::max)
}

pub fn worst_case_node_map(spectrum: &Spectrum) -> Vec<f64> {
    worst_case_node_map_with(spectrum, Exec::default())
}

pub fn worst_case_node_map_with(spectrum: &Spectrum, exec: Exec) -> Vec<f64> {
    exec.map(spectrum.n(), |k| worst_case_node_sensitivity(spectrum, k))
}

/// Worst-case sensitivity of every edge of `g`, as `(k, l, value)` with `k < l`.
pub fn worst_case_edge_map(spectrum: &Spectrum, g: &Graph) -> Vec<(usize, usize, f64)> {
    worst_case_edge_map_with(spectrum, g, Exec::default())
}

pub fn worst_case_edge_map_with(spectrum: &Spectrum, g: &Graph, exec: Exec) -> Vec<(usize, usize, f64)> {
    exec.map_slice(g.edges(), |e| (e.i, e.j, worst_case_edge_sensitivity(spectrum, e.i, e.j)))
}

/// Finite-difference eigenvalue derivatives of `L + step b c`, matching
/// perturbed and nominal eigenpairs by maximal eigenvector overlap.
pub fn fd_sensitivity_oracle(l: &Laplacian, s: &Scenario, step: f64) -> Result<Vec<f64>> {
    if !(1e-9..=1e-3).contains(&step) {
        return Err(Error::Parameter(format!("step {step} outside [1e-9, 1e-3]")));
    }
    let nominal = eig_sym(l)?;
    nominal.check_simple(DEGENERATE_GAP)?;
    let n = l.n();
    let pert = perturbed_laplacian(l, s, Complex64::new(step, 0.0))?;
    let lam = linalg::eigenvalues(&pert)?;
    let vecs: Vec<DVector<Complex64>> = lam
        .iter()
        .map(|&z| linalg::inverse_iteration(&pert, z))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let v = nominal.vector(i);
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        let mut second = f64::NEG_INFINITY;
        for (j, w) in vecs.iter().enumerate() {
            let ov: Complex64 = (0..n).map(|k| w[k].conj() * v[k]).sum();
            let o = ov.norm() / w.norm();
            if o > best.0 {
                second = best.0;
                best = (o, j);
            } else if o > second {
                second = o;
            }
        }
        if best.0 - second < 1e-3 {
            return Err(Error::AmbiguousMatch { index: i });
        }
        out.push((lam[best.1].re - nominal.values[i]) / step);
    }
    Ok(out)
}

/// Perturbed eigenvalues, convenience for zero-mode checks.
pub fn perturbed_eigenvalues(l: &Laplacian, s: &Scenario, delta: Complex64) -> Result<Vec<Complex64>> {
    linalg::eigenvalues(&perturbed_laplacian(l, s, delta)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_laplacian, Graph};
    use approx::assert_abs_diff_eq;

    fn p3() -> Laplacian {
        build_laplacian(&Graph::new(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap())
    }

    fn close(a: &DVector<f64>, b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15)
    }

    #[test]
    fn vectors_examples() {
        let l = p3();
        let pv = scenario_vectors(&Scenario::Edge { k: 0, l: 1 }, &l).unwrap();
        assert!(close(&pv.b, &[1.0, -1.0, 0.0]) && close(&pv.c, &[1.0, -1.0, 0.0]));
        let pv = scenario_vectors(&Scenario::GlobalNode { k: 0 }, &l).unwrap();
        assert!(close(&pv.b, &[1.0, 0.0, 0.0]));
        assert!(close(&pv.c, &[2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0]));
        let pv = scenario_vectors(&Scenario::LocalNode { k: 0 }, &l).unwrap();
        assert!(close(&pv.b, &[1.0, 0.0, 0.0]) && close(&pv.c, &[1.0, -1.0, 0.0]));
        let pv = scenario_vectors(&Scenario::LocalReciprocal { k: 1 }, &l).unwrap();
        assert!(close(&pv.b, &[-1.0, 2.0, -1.0]) && close(&pv.c, &[-1.0, 2.0, -1.0]));
        assert!(scenario_vectors(&Scenario::GlobalNode { k: 3 }, &l).is_err());
        assert!(scenario_vectors(&Scenario::Edge { k: 0, l: 2 }, &l).is_err());
        assert!(scenario_vectors_allow_virtual(&Scenario::Edge { k: 0, l: 2 }, &l).is_ok());
    }

    #[test]
    fn parse_and_display() {
        for s in ["edge:3,7", "global-node:0", "local-node:12", "local-reciprocal:5"] {
            assert_eq!(s.parse::<Scenario>().unwrap().to_string(), s);
        }
        assert!("edge:3".parse::<Scenario>().is_err());
        assert!("node:3".parse::<Scenario>().is_err());
    }

    #[test]
    fn perturbed_examples() {
        let l = p3();
        let z = perturbed_laplacian(&l, &Scenario::GlobalNode { k: 1 }, Complex64::new(0.0, 0.0)).unwrap();
        assert_eq!(z, linalg::to_complex(l.matrix()));
        let cut = perturbed_laplacian(&l, &Scenario::Edge { k: 0, l: 1 }, Complex64::new(-1.0, 0.0)).unwrap();
        let want = build_laplacian(&Graph::new(3, [(1, 2, 1.0)]).unwrap());
        assert_eq!(cut, linalg::to_complex(want.matrix()));
    }

    #[test]
    fn first_order_examples() {
        let l = p3();
        let r2 = 0.5f64.sqrt();
        let r6 = 6f64.sqrt();
        let gn = scenario_vectors(&Scenario::GlobalNode { k: 0 }, &l).unwrap();
        assert_abs_diff_eq!(first_order_sensitivity(&[r2, 0.0, -r2], &gn).unwrap(), 0.5, epsilon = 1e-15);
        let c = 1.0 / 3f64.sqrt();
        assert_abs_diff_eq!(first_order_sensitivity(&[c, c, c], &gn).unwrap(), 0.0, epsilon = 1e-15);
        let e = scenario_vectors(&Scenario::Edge { k: 0, l: 1 }, &l).unwrap();
        let v3 = [1.0 / r6, -2.0 / r6, 1.0 / r6];
        assert_abs_diff_eq!(first_order_sensitivity(&v3, &e).unwrap(), 1.5, epsilon = 1e-14);
        assert!(first_order_sensitivity(&[1.0, 1.0, 0.0], &e).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let r6 = 6f64.sqrt();
        let v3 = [1.0 / r6, -2.0 / r6, 1.0 / r6];
        assert_abs_diff_eq!(scenario_sensitivity(3.0, &v3, &Scenario::LocalNode { k: 0 }), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            scenario_sensitivity(3.0, &v3, &Scenario::LocalReciprocal { k: 0 }),
            1.5,
            epsilon = 1e-15
        );
        let c = [0.1; 100];
        for s in [
            Scenario::Edge { k: 0, l: 1 },
            Scenario::GlobalNode { k: 0 },
            Scenario::LocalNode { k: 0 },
            Scenario::LocalReciprocal { k: 0 },
        ] {
            assert_eq!(scenario_sensitivity(0.0, &c, &s), 0.0);
        }
    }

    #[test]
    fn worst_case_examples() {
        let s = eig_sym(&p3()).unwrap();
        assert_abs_diff_eq!(worst_case_node_sensitivity(&s, 0), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(worst_case_node_sensitivity(&s, 1), 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(worst_case_edge_sensitivity(&s, 0, 1), 1.5, epsilon = 1e-14);
        assert_eq!(worst_case_edge_sensitivity(&s, 2, 2), 0.0);
    }

    #[test]
    fn oracle_examples() {
        let l = p3();
        let fd = fd_sensitivity_oracle(&l, &Scenario::GlobalNode { k: 0 }, 1e-6).unwrap();
        for (a, b) in fd.iter().zip([0.0, 0.5, 1.0 / 6.0]) {
            assert!((a - b).abs() < 1e-4, "{fd:?}");
        }
        assert!(fd[0].abs() < 1e-9);
        let fd = fd_sensitivity_oracle(&l, &Scenario::Edge { k: 0, l: 1 }, 1e-6).unwrap();
        for (a, b) in fd.iter().zip([0.0, 0.5, 1.5]) {
            assert!((a - b).abs() < 1e-4, "{fd:?}");
        }
        assert!(fd_sensitivity_oracle(&l, &Scenario::Edge { k: 0, l: 1 }, 1e-2).is_err());
    }

    #[test]
    fn profile_refuses_degenerate() {
        // the 4-cycle has a repeated eigenvalue 2
        let c4 = build_laplacian(&Graph::new(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)]).unwrap());
        let s = eig_sym(&c4).unwrap();
        assert!(matches!(
            sensitivity_profile(&s, &c4, &Scenario::GlobalNode { k: 0 }),
            Err(Error::Degenerate { .. })
        ));
    }
}
