//! End-to-end experiments: localization, region split, scenario picks,
//! margins and pseudospectra, destabilization, simulation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::frequency::{
    assemble_second_order_with, eval_grid_with, hinf_norm, precompute_factorization, rhp_clearance, Axis,
    GridSpec, Rect, StateSpace,
};
use crate::graph::{build_laplacian, gen_banded_path, gen_banded_width, is_connected, read_graph, write_graph, Format};
use crate::output;
use crate::perturbation::{
    scenario_vectors, sensitivity_profile, worst_case_edge_map_with, worst_case_node_map_with, Scenario, ScenarioKind,
};
use crate::simulate::simulate_with_verdict;
use crate::smallgain::{
    delay_destabilizer, growth_sim_config, static_destabilizer, verify_destabilization, Destabilizer, Verification,
};
use crate::spectral::{classify_localization_with, eig_sym, LocalizationParams, LocalizationReport};
use crate::{Error, Exec, Graph, Laplacian, Result, Spectrum};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GraphSource {
    /// Edges for `1 <= |i - j| <= b`.
    Banded { n: usize, b: usize },
    /// Band of total width `width` (half-width `width / 2`).
    BandedWidth { n: usize, width: usize },
    File { path: PathBuf },
}

impl GraphSource {
    pub fn load(&self) -> Result<Graph> {
        match self {
            GraphSource::Banded { n, b } => gen_banded_path(*n, *b),
            GraphSource::BandedWidth { n, width } => gen_banded_width(*n, *width),
            GraphSource::File { path } => read_graph(path, Format::from_path(path)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ScenarioChoice {
    /// Localized pick maximises worst-case sensitivity inside the localized
    /// region, delocalized pick is the median outside it.
    Auto { scenario: ScenarioKind },
    Pair { localized: Scenario, delocalized: Scenario },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PspecSpec {
    /// Defaults to the second-order rect for `beta` and `lambda_max`.
    #[serde(default)]
    pub rect: Option<Rect>,
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub im_axis: Axis,
    pub epsilons: Vec<f64>,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub graph: GraphSource,
    pub beta: f64,
    pub scenarios: Vec<ScenarioChoice>,
    #[serde(default)]
    pub pspec: Option<PspecSpec>,
    /// Synthesize a delay destabilizer for the localized pick.
    #[serde(default = "default_true")]
    pub destabilize: bool,
    /// Run the time-domain growth check on the destabilizer.
    #[serde(default)]
    pub simulate: bool,
    #[serde(default)]
    pub localization: LocalizationParams,
    /// Write the full eigenvector matrix.
    #[serde(default)]
    pub eigenvectors: bool,
    pub output_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reach {
    pub eps: f64,
    pub localized: Option<f64>,
    pub delocalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DestabilizationRecord {
    pub scenario: Scenario,
    pub destabilizer: Destabilizer,
    pub verification: Option<Verification>,
    /// Growth check at 0.9 of the critical gain.
    pub sub_margin: Option<crate::simulate::StabilityVerdict>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindContrast {
    pub kind: ScenarioKind,
    pub localized_pick: Option<Scenario>,
    pub delocalized_pick: Scenario,
    pub sensitivity_localized: Option<f64>,
    pub sensitivity_delocalized: f64,
    /// Localized over delocalized worst-case sensitivity.
    pub sensitivity_ratio: Option<f64>,
    pub margin_localized: Option<f64>,
    pub margin_delocalized: f64,
    pub omega_bar_localized: Option<f64>,
    pub omega_bar_delocalized: f64,
    pub rhp_reach: Vec<Reach>,
    pub destabilization: Option<DestabilizationRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastSummary {
    pub n: usize,
    pub beta: f64,
    pub localized_count: usize,
    pub localized_region_size: usize,
    pub no_localization: bool,
    /// Max worst-case node sensitivity in the localized region over the
    /// median in the delocalized region.
    pub node_contrast: Option<f64>,
    /// Median intra-localized edge sensitivity over the median
    /// intra-delocalized one.
    pub edge_contrast: Option<f64>,
    pub kinds: Vec<KindContrast>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub stage: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: ExperimentSpec,
    pub artifacts: Vec<Artifact>,
}

/// Lower median of a non-empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.get((v.len().max(1) - 1) / 2).copied()
}

/// `max_{P} s / median_{not P} s`.
pub fn node_contrast(map: &[f64], region: &[bool]) -> Option<f64> {
    let inside = map.iter().zip(region).filter(|(_, &r)| r).map(|(v, _)| *v).fold(None, |a: Option<f64>, v| {
        Some(a.map_or(v, |a| a.max(v)))
    })?;
    let outside: Vec<f64> = map.iter().zip(region).filter(|(_, &r)| !r).map(|(v, _)| *v).collect();
    Some(inside / median(&outside)?)
}

/// `median_{edges in P} s / median_{edges in not P} s`.
pub fn edge_contrast(edges: &[(usize, usize, f64)], region: &[bool]) -> Option<f64> {
    let pick = |want: bool| -> Vec<f64> {
        edges
            .iter()
            .filter(|(k, l, _)| region[*k] == want && region[*l] == want)
            .map(|e| e.2)
            .collect()
    };
    Some(median(&pick(true))? / median(&pick(false))?)
}

/// Index of the lower-median value among `candidates`, ties broken by index.
fn median_index(values: &[f64], candidates: &[usize]) -> Option<usize> {
    let mut c = candidates.to_vec();
    c.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    c.get((c.len().max(1) - 1) / 2).copied()
}

fn argmax(values: &[f64], candidates: &[usize]) -> Option<usize> {
    candidates
        .iter()
        .copied()
        .fold(None, |best: Option<usize>, i| match best {
            Some(b) if values[b] >= values[i] => Some(b),
            _ => Some(i),
        })
}

/// A scenario and its worst-case sensitivity.
pub type Pick = (Scenario, f64);

/// Automatic localized / delocalized picks for one scenario kind.
pub fn auto_picks(
    kind: ScenarioKind,
    report: &LocalizationReport,
    node_map: &[f64],
    edge_map: &[(usize, usize, f64)],
) -> Result<(Option<Pick>, Pick)> {
    let region = report.region_mask();
    match kind {
        ScenarioKind::Edge => {
            let vals: Vec<f64> = edge_map.iter().map(|e| e.2).collect();
            let intra = |want: bool| -> Vec<usize> {
                (0..edge_map.len())
                    .filter(|&e| region[edge_map[e].0] == want && region[edge_map[e].1] == want)
                    .collect()
            };
            let to = |e: usize| (Scenario::Edge { k: edge_map[e].0, l: edge_map[e].1 }, vals[e]);
            let loc = argmax(&vals, &intra(true)).map(to);
            let de = median_index(&vals, &intra(false)).ok_or(Error::EmptySet)?;
            Ok((loc, to(de)))
        }
        _ => {
            let to = |k: usize| (kind.at_node(k).expect("node scenario"), node_map[k]);
            let loc = argmax(node_map, &report.localized_region).map(to);
            let de = median_index(node_map, &report.delocalized_region).ok_or(Error::EmptySet)?;
            Ok((loc, to(de)))
        }
    }
}

/// Robust margins of the second-order systems for two scenarios.
pub fn margin_contrast(l: &Laplacian, beta: f64, localized: &Scenario, delocalized: &Scenario) -> Result<(f64, f64)> {
    let spectrum = eig_sym(l)?;
    let m = |s: &Scenario| -> Result<f64> {
        let pv = scenario_vectors(s, l)?;
        let ss = assemble_second_order_with(l, &spectrum, &pv, beta)?;
        Ok(1.0 / hinf_norm(&ss)?.norm)
    };
    Ok((m(localized)?, m(delocalized)?))
}

struct Ctx<'a> {
    dir: &'a Path,
    artifacts: Vec<Artifact>,
}

impl Ctx<'_> {
    fn path(&mut self, name: &str, stage: &str) -> PathBuf {
        self.artifacts.push(Artifact {
            path: name.into(),
            stage: stage.into(),
        });
        self.dir.join(name)
    }
}

fn scenario_tag(s: &Scenario) -> String {
    s.to_string().replace([':', ','], "_")
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ContrastSummary> {
    run_experiment_with(spec, Exec::default())
}

pub fn run_experiment_with(spec: &ExperimentSpec, exec: Exec) -> Result<ContrastSummary> {
    if !(spec.beta > 0.0) {
        return Err(Error::Parameter(format!("beta must be > 0, got {}", spec.beta)));
    }
    let g = spec.graph.load()?;
    if !is_connected(&g) {
        return Err(Error::InvalidGraph("experiment graph must be connected".into()));
    }
    fs::create_dir_all(&spec.output_dir)?;
    let mut ctx = Ctx {
        dir: &spec.output_dir,
        artifacts: Vec::new(),
    };
    write_graph(&g, ctx.path("graph.edges", "graph"), Format::EdgeList)?;

    let l = build_laplacian(&g);
    let spectrum = eig_sym(&l)?;
    let report = classify_localization_with(&spectrum, &g, &spec.localization, exec)?;
    output::write_spectrum_csv(ctx.path("spectrum.csv", "spectral"), &spectrum, Some(&report))?;
    if spec.eigenvectors {
        output::write_eigenvectors_csv(ctx.path("eigenvectors.csv", "spectral"), &spectrum)?;
    }
    output::write_json(ctx.path("localization.json", "spectral"), &report)?;

    let region = report.region_mask();
    let node_map = worst_case_node_map_with(&spectrum, exec);
    let edge_map = worst_case_edge_map_with(&spectrum, &g, exec);
    output::write_node_map(ctx.path("node_sensitivity.csv", "sensitivity"), &node_map, &region)?;
    output::write_edge_map(ctx.path("edge_sensitivity.csv", "sensitivity"), &edge_map, &region)?;

    let mut kinds = Vec::new();
    for choice in &spec.scenarios {
        kinds.push(run_choice(spec, &mut ctx, &l, &spectrum, &report, &node_map, &edge_map, choice)?);
    }

    let summary = ContrastSummary {
        n: g.n(),
        beta: spec.beta,
        localized_count: report.localized_count(),
        localized_region_size: report.localized_region.len(),
        no_localization: report.localized_region.is_empty(),
        node_contrast: node_contrast(&node_map, &region),
        edge_contrast: edge_contrast(&edge_map, &region),
        kinds,
    };
    output::write_json(ctx.path("summary.json", "pipeline"), &summary)?;
    let manifest = Manifest {
        spec: spec.clone(),
        artifacts: ctx.artifacts.clone(),
    };
    output::write_json(spec.output_dir.join("manifest.json"), &manifest)?;
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn run_choice(
    spec: &ExperimentSpec,
    ctx: &mut Ctx,
    l: &Laplacian,
    spectrum: &Spectrum,
    report: &LocalizationReport,
    node_map: &[f64],
    edge_map: &[(usize, usize, f64)],
    choice: &ScenarioChoice,
) -> Result<KindContrast> {
    let (loc, deloc) = match choice {
        ScenarioChoice::Auto { scenario } => auto_picks(*scenario, report, node_map, edge_map)?,
        ScenarioChoice::Pair { localized, delocalized } => {
            let sens = |s: &Scenario| match *s {
                Scenario::Edge { k, l } => crate::perturbation::worst_case_edge_sensitivity(spectrum, k, l),
                Scenario::GlobalNode { k } | Scenario::LocalNode { k } | Scenario::LocalReciprocal { k } => {
                    node_map[k]
                }
            };
            (Some((*localized, sens(localized))), (*delocalized, sens(delocalized)))
        }
    };
    let kind = deloc.0.kind();

    let system = |s: &Scenario| -> Result<StateSpace> {
        let pv = scenario_vectors(s, l)?;
        assemble_second_order_with(l, spectrum, &pv, spec.beta)
    };
    let mut analyse = |s: &Scenario, role: &str| -> Result<(StateSpace, f64, f64, Vec<f64>)> {
        let ss = system(s)?;
        if spectrum.check_simple(crate::perturbation::DEGENERATE_GAP).is_ok() {
            let prof = sensitivity_profile(spectrum, l, s)?;
            let name = format!("profile_{}_{role}.csv", scenario_tag(s));
            output::write_profile(ctx.path(&name, "sensitivity"), spectrum, &prof)?;
        }
        let h = hinf_norm(&ss)?;
        let mut reach = Vec::new();
        if let Some(p) = &spec.pspec {
            for &e in &p.epsilons {
                reach.push(rhp_clearance(&ss, e)?);
            }
            let rect = p
                .rect
                .unwrap_or_else(|| Rect::default_second_order(spec.beta, spectrum.lambda_max()));
            let f = precompute_factorization(&ss)?;
            let grid = eval_grid_with(
                &ss,
                &f,
                &GridSpec {
                    rect,
                    nx: p.nx,
                    ny: p.ny,
                    im_axis: p.im_axis,
                },
                &p.epsilons,
                Exec::default(),
            )?;
            let name = format!("pspec_{}_{role}.csv", scenario_tag(s));
            output::write_grid(ctx.path(&name, "frequency"), &grid)?;
        }
        Ok((ss, 1.0 / h.norm, h.omega_bar, reach))
    };

    let (_, m_de, w_de, reach_de) = analyse(&deloc.0, "delocalized")?;
    let loc_res = match &loc {
        Some((s, _)) => Some(analyse(s, "localized")?),
        None => None,
    };

    let epsilons = spec.pspec.as_ref().map(|p| p.epsilons.clone()).unwrap_or_default();
    let rhp_reach = epsilons
        .iter()
        .enumerate()
        .map(|(i, &eps)| Reach {
            eps,
            localized: loc_res.as_ref().map(|r| r.3[i]),
            delocalized: reach_de[i],
        })
        .collect();

    let destabilization = if spec.destabilize {
        let (s, ss) = match (&loc, &loc_res) {
            (Some((s, _)), Some(r)) => (*s, r.0.clone()),
            _ => (deloc.0, system(&deloc.0)?),
        };
        let d = match delay_destabilizer(&ss) {
            Err(Error::ZeroFrequency) => static_destabilizer(&ss)?,
            other => other?,
        };
        let (verification, sub_margin) = if spec.simulate {
            let v = verify_destabilization(&ss, &d)?;
            let cfg = growth_sim_config(&ss, d.scaled(0.9).delta_spec(), d.target_omega)?;
            let (traj, sub) = simulate_with_verdict(&cfg)?;
            let name = format!("trajectory_{}_0.9.csv", scenario_tag(&s));
            output::write_trajectory(ctx.path(&name, "simulate"), &traj)?;
            (Some(v), Some(sub))
        } else {
            (None, None)
        };
        let rec = DestabilizationRecord {
            scenario: s,
            destabilizer: d,
            verification,
            sub_margin,
        };
        let name = format!("destabilizer_{}.json", scenario_tag(&s));
        output::write_json(ctx.path(&name, "smallgain"), &rec)?;
        Some(rec)
    } else {
        None
    };

    Ok(KindContrast {
        kind,
        localized_pick: loc.map(|p| p.0),
        delocalized_pick: deloc.0,
        sensitivity_localized: loc.map(|p| p.1),
        sensitivity_delocalized: deloc.1,
        sensitivity_ratio: loc.map(|p| p.1 / deloc.1).filter(|r| r.is_finite()),
        margin_localized: loc_res.as_ref().map(|r| r.1),
        margin_delocalized: m_de,
        omega_bar_localized: loc_res.as_ref().map(|r| r.2),
        omega_bar_delocalized: w_de,
        rhp_reach,
        destabilization,
    })
}
