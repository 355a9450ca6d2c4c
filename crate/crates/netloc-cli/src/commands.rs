use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use netloc::frequency::{
    assemble_first_order, assemble_second_order, eval_grid_with, hinf_norm, precompute_factorization, rhp_clearance,
    Axis, GridSpec, Hinf, Rect, Sign, StateSpace,
};
use netloc::graph::{
    build_laplacian, gen_banded_path, gen_banded_width, read_graph, write_edge_list, write_graph, Format,
};
use netloc::output::{self, write_json};
use netloc::perturbation::{scenario_vectors, sensitivity_profile, worst_case_edge_map, worst_case_node_map, Scenario};
use netloc::pipeline::{edge_contrast, node_contrast, run_experiment, ExperimentSpec};
use netloc::simulate::{oscillation_frequency, simulate_with_verdict, DeltaSpec, SimConfig, StabilityVerdict};
use netloc::smallgain::{
    allpass_destabilizer, delay_destabilizer, static_destabilizer, static_verdict, verify_destabilization,
    Destabilizer, Verdict, Verification,
};
use netloc::spectral::{classify_localization, eig_sym, second_order_eigs};
use netloc::{Complex64, Graph, Laplacian, LocalizationReport, Spectrum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::error::{usage, CliResult};

pub struct Ctx {
    pub json: bool,
    pub out: Option<PathBuf>,
    pub seed: u64,
}

impl Ctx {
    fn out_dir(&self) -> CliResult<Option<&Path>> {
        match &self.out {
            Some(d) => {
                fs::create_dir_all(d)?;
                Ok(Some(d))
            }
            None => Ok(None),
        }
    }

    /// JSON to stdout with `--json`, otherwise the human summary.
    fn emit<T: Serialize>(&self, value: &T, human: impl FnOnce() -> String) -> CliResult<()> {
        if self.json {
            stdout(&(serde_json::to_string_pretty(value)? + "\n"))
        } else {
            stdout(&(human() + "\n"))
        }
    }
}

/// Writes to stdout; a closed pipe ends output quietly.
fn stdout(text: &str) -> CliResult<()> {
    let mut w = std::io::stdout().lock();
    match w.write_all(text.as_bytes()).and_then(|_| w.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn load_graph(a: &GraphArgs) -> CliResult<Graph> {
    match (&a.graph, &a.banded) {
        (Some(p), None) => Ok(read_graph(p, Format::from_path(p))?),
        (None, Some(nb)) => {
            let (n, b) = (nb[0], nb[1]);
            Ok(if a.width { gen_banded_width(n, b)? } else { gen_banded_path(n, b)? })
        }
        _ => Err(usage("exactly one of --graph or --banded is required")),
    }
}

fn spectrum_of(g: &Graph) -> CliResult<(Laplacian, Spectrum)> {
    let l = build_laplacian(g);
    let s = eig_sym(&l)?;
    Ok((l, s))
}

// ---------------------------------------------------------------- gen

#[derive(Serialize)]
struct GenOut {
    n: usize,
    m: usize,
    index_bandwidth: usize,
    edges: Vec<(usize, usize, f64)>,
    path: Option<PathBuf>,
}

pub fn gen(ctx: &Ctx, a: &GenArgs) -> CliResult<()> {
    let g = load_graph(&a.graph)?;
    if let Some(p) = &ctx.out {
        if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        write_graph(&g, p, Format::from_path(p))?;
    }
    let out = GenOut {
        n: g.n(),
        m: g.edges().len(),
        index_bandwidth: g.index_bandwidth(),
        edges: g.edges().iter().map(|e| (e.i, e.j, e.w)).collect(),
        path: ctx.out.clone(),
    };
    if ctx.json {
        return ctx.emit(&out, String::new);
    }
    match &ctx.out {
        Some(p) => stdout(&format!("{} nodes, {} edges -> {}\n", out.n, out.m, p.display())),
        None => stdout(&write_edge_list(&g)),
    }
}

// ---------------------------------------------------------------- spectrum

#[derive(Serialize)]
struct SpectrumOut {
    n: usize,
    lambda_max: f64,
    min_gap: f64,
    values: Vec<f64>,
    beta: Option<f64>,
    second_order: Option<Vec<Complex64>>,
}

pub fn spectrum(ctx: &Ctx, a: &SpectrumArgs) -> CliResult<()> {
    let g = load_graph(&a.graph)?;
    if let Some(b) = a.beta {
        if !(b > 0.0) {
            return Err(usage(format!("--beta must be > 0, got {b}")));
        }
    }
    let (_, s) = spectrum_of(&g)?;
    if let Some(dir) = ctx.out_dir()? {
        output::write_spectrum_csv(dir.join("spectrum.csv"), &s, None)?;
        if a.eigenvectors {
            output::write_eigenvectors_csv(dir.join("eigenvectors.csv"), &s)?;
        }
    }
    let out = SpectrumOut {
        n: s.n(),
        lambda_max: s.lambda_max(),
        min_gap: s.min_gap,
        values: s.values.clone(),
        beta: a.beta,
        second_order: a.beta.map(|b| second_order_eigs(&s, b).eigenvalues()),
    };
    ctx.emit(&out, || {
        format!(
            "n = {}, lambda_2 = {:.6}, lambda_max = {:.6}, min gap = {:.3e}",
            out.n,
            out.values.get(1).copied().unwrap_or(0.0),
            out.lambda_max,
            out.min_gap
        )
    })
}

// ---------------------------------------------------------------- localize

pub fn localize(ctx: &Ctx, a: &LocalizeArgs) -> CliResult<()> {
    let g = load_graph(&a.graph)?;
    let (_, s) = spectrum_of(&g)?;
    let report = classify_localization(&s, &g, &a.classifier.params())?;
    if let Some(dir) = ctx.out_dir()? {
        output::write_spectrum_csv(dir.join("spectrum.csv"), &s, Some(&report))?;
        write_json(dir.join("localization.json"), &report)?;
    }
    ctx.emit(&report, || localize_summary(&report))
}

fn localize_summary(r: &LocalizationReport) -> String {
    let idx = r.localized_indices();
    format!(
        "{} of {} eigenvectors localized (indices {:?}..{:?}); localized region {} nodes",
        idx.len(),
        r.labels.len(),
        idx.first(),
        idx.last(),
        r.localized_region.len()
    )
}

// ---------------------------------------------------------------- sensitivity

#[derive(Serialize)]
struct EdgeValue {
    k: usize,
    l: usize,
    value: f64,
}

#[derive(Serialize)]
struct Profile {
    scenario: Scenario,
    lambdas: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct SensitivityOut {
    localized_region: Vec<usize>,
    node_map: Vec<f64>,
    edge_map: Vec<EdgeValue>,
    node_contrast: Option<f64>,
    edge_contrast: Option<f64>,
    profile: Option<Profile>,
}

pub fn sensitivity(ctx: &Ctx, a: &SensitivityArgs) -> CliResult<()> {
    let g = load_graph(&a.graph)?;
    if let Some(s) = &a.scenario {
        s.validate(g.n(), None, true)?;
    }
    let (l, s) = spectrum_of(&g)?;
    let report = classify_localization(&s, &g, &a.classifier.params())?;
    let region = report.region_mask();
    let nodes = worst_case_node_map(&s);
    let edges = worst_case_edge_map(&s, &g);
    let profile = match &a.scenario {
        Some(sc) => Some(Profile {
            scenario: *sc,
            lambdas: s.values.clone(),
            values: sensitivity_profile(&s, &l, sc)?,
        }),
        None => None,
    };
    if let Some(dir) = ctx.out_dir()? {
        output::write_node_map(dir.join("node_sensitivity.csv"), &nodes, &region)?;
        output::write_edge_map(dir.join("edge_sensitivity.csv"), &edges, &region)?;
        if let Some(p) = &profile {
            output::write_profile(dir.join("profile.csv"), &s, &p.values)?;
        }
    }
    let out = SensitivityOut {
        localized_region: report.localized_region.clone(),
        node_contrast: node_contrast(&nodes, &region),
        edge_contrast: edge_contrast(&edges, &region),
        node_map: nodes,
        edge_map: edges.iter().map(|&(k, l, value)| EdgeValue { k, l, value }).collect(),
        profile,
    };
    ctx.emit(&out, || {
        let max = out.node_map.iter().copied().fold(0.0, f64::max);
        format!(
            "max node sensitivity {max:.4e}; node contrast {:?}; edge contrast {:?}",
            out.node_contrast, out.edge_contrast
        )
    })
}

// ---------------------------------------------------------------- systems

fn assemble(a: &SystemArgs) -> CliResult<(Graph, Laplacian, StateSpace)> {
    let g = load_graph(&a.graph)?;
    a.scenario.validate(g.n(), None, true)?;
    let l = build_laplacian(&g);
    let pv = scenario_vectors(&a.scenario, &l)?;
    let ss = match a.order {
        OrderArg::Second => {
            let beta = a.beta.ok_or_else(|| usage("--beta is required for second-order systems"))?;
            if !(beta > 0.0) {
                return Err(usage(format!("--beta must be > 0, got {beta}")));
            }
            assemble_second_order(&l, &pv, beta)?
        }
        OrderArg::FirstMinus => assemble_first_order(&l, &pv, Sign::Minus)?,
        OrderArg::FirstPlus => assemble_first_order(&l, &pv, Sign::Plus)?,
    };
    Ok((g, l, ss))
}

fn stable_norm(a: &SystemArgs, ss: &StateSpace) -> CliResult<Option<Hinf>> {
    match a.order {
        OrderArg::FirstPlus => Ok(None),
        _ => Ok(Some(hinf_norm(ss)?)),
    }
}

fn check_eps(eps: &[f64]) -> CliResult<()> {
    match eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        Some(e) => Err(usage(format!("--eps values must be positive, got {e}"))),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------- pspec

#[derive(Serialize)]
struct Contour {
    eps: f64,
    points: Vec<(f64, f64)>,
}

#[derive(Serialize)]
struct PspecOut {
    scenario: Scenario,
    beta: Option<f64>,
    rect: Rect,
    nx: usize,
    ny: usize,
    im_axis: Axis,
    epsilons: Vec<f64>,
    margin: Option<f64>,
    omega_bar: Option<f64>,
    max_log10: f64,
    /// Rightmost grid abscissa inside each mask (null when empty).
    max_re: Vec<Option<f64>>,
    fallback: bool,
    contours: Option<Vec<Contour>>,
}

pub fn pspec(ctx: &Ctx, a: &PspecArgs) -> CliResult<()> {
    check_eps(&a.eps)?;
    if a.log_im && a.rect.is_some_and(|r| !(r.im_min > 0.0)) {
        return Err(usage("--log-im needs a rect with im0 > 0"));
    }
    let (_, l, ss) = assemble(&a.system)?;
    let lmax = eig_sym(&l)?.lambda_max();
    let rect = match (a.rect, a.system.order) {
        (Some(r), _) => r,
        (None, OrderArg::Second) => Rect::default_second_order(ss.beta().unwrap_or(0.1), lmax),
        (None, OrderArg::FirstMinus) => Rect::new(-1.1 * lmax - 1.0, 0.1 * lmax + 0.1, 0.0, 0.5 * lmax + 0.1)?,
        (None, OrderArg::FirstPlus) => Rect::new(-0.1 * lmax - 0.1, 1.1 * lmax + 1.0, 0.0, 0.5 * lmax + 0.1)?,
    };
    let im_axis = if a.log_im { Axis::Log } else { Axis::Linear };
    let rect = if a.log_im && !(rect.im_min > 0.0) {
        Rect { im_min: 1e-3 * rect.im_max, ..rect }
    } else {
        rect
    };
    let spec = GridSpec {
        rect,
        nx: a.grid.0,
        ny: a.grid.1,
        im_axis,
    };
    let f = precompute_factorization(&ss)?;
    let grid = eval_grid_with(&ss, &f, &spec, &a.eps, netloc::Exec::default())?;
    let h = stable_norm(&a.system, &ss)?;
    let out = PspecOut {
        scenario: a.system.scenario,
        beta: ss.beta(),
        rect: grid.rect,
        nx: grid.nx,
        ny: grid.ny,
        im_axis,
        epsilons: grid.epsilons.clone(),
        margin: h.map(|h| 1.0 / h.norm),
        omega_bar: h.map(|h| h.omega_bar),
        max_log10: grid.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        max_re: (0..grid.epsilons.len())
            .map(|e| Some(grid.max_re(e)).filter(|x| x.is_finite()))
            .collect(),
        fallback: grid.fallback,
        contours: a.contours.then(|| {
            grid.epsilons
                .iter()
                .enumerate()
                .map(|(e, &eps)| Contour {
                    eps,
                    points: grid.mask_boundary(e),
                })
                .collect()
        }),
    };
    if let Some(dir) = ctx.out_dir()? {
        output::write_grid(dir.join("pspec.csv"), &grid)?;
        write_json(dir.join("pspec.json"), &out)?;
    }
    ctx.emit(&out, || {
        format!(
            "{} x {} grid over {:?}; margin {:?}; rightmost mask points {:?}",
            out.nx, out.ny, out.rect, out.margin, out.max_re
        )
    })
}

// ---------------------------------------------------------------- margin

#[derive(Serialize)]
struct Clearance {
    eps: f64,
    max_re: f64,
}

#[derive(Serialize)]
struct SampleCheck {
    samples: usize,
    radius: f64,
    seed: u64,
    max_re: f64,
    all_stable: bool,
}

#[derive(Serialize)]
struct MarginOut {
    scenario: Scenario,
    beta: Option<f64>,
    hinf: f64,
    omega_bar: f64,
    margin: f64,
    clearance: Vec<Clearance>,
    sample_check: Option<SampleCheck>,
}

pub fn margin(ctx: &Ctx, a: &MarginArgs) -> CliResult<()> {
    check_eps(&a.eps)?;
    if a.system.order == OrderArg::FirstPlus {
        return Err(usage("margins are only defined for stable systems (not --order first-plus)"));
    }
    let (_, _, ss) = assemble(&a.system)?;
    let h = hinf_norm(&ss)?;
    let margin = 1.0 / h.norm;
    let clearance = a
        .eps
        .iter()
        .map(|&eps| Ok(Clearance { eps, max_re: rhp_clearance(&ss, eps)? }))
        .collect::<CliResult<Vec<_>>>()?;
    let sample_check = if a.samples > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        let radius = 0.95 * margin;
        let mut worst = f64::NEG_INFINITY;
        let mut all_stable = true;
        for _ in 0..a.samples {
            let d = Complex64::from_polar(radius, rng.random_range(0.0..std::f64::consts::TAU));
            let (v, re) = static_verdict(&ss, d)?;
            worst = worst.max(re);
            all_stable &= v == Verdict::Stable;
        }
        Some(SampleCheck {
            samples: a.samples,
            radius,
            seed: ctx.seed,
            max_re: worst,
            all_stable,
        })
    } else {
        None
    };
    let out = MarginOut {
        scenario: a.system.scenario,
        beta: ss.beta(),
        hinf: h.norm,
        omega_bar: h.omega_bar,
        margin,
        clearance,
        sample_check,
    };
    if let Some(dir) = ctx.out_dir()? {
        write_json(dir.join("margin.json"), &out)?;
    }
    ctx.emit(&out, || {
        format!(
            "||M||inf = {:.10} at omega = {:.10}; margin = {:.10}",
            out.hinf, out.omega_bar, out.margin
        )
    })
}

// ---------------------------------------------------------------- destabilize

#[derive(Serialize, Deserialize)]
pub struct DestabilizerRecord {
    pub destabilizer: Destabilizer,
    pub verification: Option<Verification>,
}

/// One destabilizer per file, with the channel it was built for.
#[derive(Serialize)]
struct DestabilizerFile<'a> {
    scenario: Scenario,
    beta: Option<f64>,
    #[serde(flatten)]
    record: &'a DestabilizerRecord,
}

#[derive(Serialize)]
struct DestabilizeOut {
    scenario: Scenario,
    beta: Option<f64>,
    hinf: f64,
    omega_bar: f64,
    margin: f64,
    destabilizers: Vec<DestabilizerRecord>,
}

fn kind_name(d: &Destabilizer) -> &'static str {
    match d.kind {
        netloc::smallgain::DestabilizerKind::StaticComplex { .. } => "static",
        netloc::smallgain::DestabilizerKind::Delay { .. } => "delay",
        netloc::smallgain::DestabilizerKind::AllPass { .. } => "allpass",
    }
}

pub fn destabilize(ctx: &Ctx, a: &DestabilizeArgs) -> CliResult<()> {
    if a.system.order == OrderArg::FirstPlus {
        return Err(usage("destabilizers need a stable system (not --order first-plus)"));
    }
    let (_, _, ss) = assemble(&a.system)?;
    let h = hinf_norm(&ss)?;
    let want = |k: KindArg| a.kind == k || a.kind == KindArg::All;
    let mut ds = Vec::new();
    if want(KindArg::Static) {
        ds.push(static_destabilizer(&ss)?);
    }
    // With a zero peak frequency only the static gain exists; `all` skips
    // the dynamic kinds, an explicit request reports the error.
    let dynamic = h.omega_bar > 0.0 || a.kind != KindArg::All;
    if want(KindArg::Delay) && dynamic {
        ds.push(delay_destabilizer(&ss)?);
    }
    if want(KindArg::Allpass) && dynamic {
        ds.push(allpass_destabilizer(&ss)?);
    }
    let records = ds
        .into_iter()
        .map(|d| {
            let verification = if a.no_verify { None } else { Some(verify_destabilization(&ss, &d)?) };
            Ok(DestabilizerRecord {
                destabilizer: d,
                verification,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    if let Some(dir) = ctx.out_dir()? {
        for r in &records {
            let file = DestabilizerFile {
                scenario: a.system.scenario,
                beta: ss.beta(),
                record: r,
            };
            write_json(dir.join(format!("destabilizer_{}.json", kind_name(&r.destabilizer))), &file)?;
        }
    }
    let out = DestabilizeOut {
        scenario: a.system.scenario,
        beta: ss.beta(),
        hinf: h.norm,
        omega_bar: h.omega_bar,
        margin: 1.0 / h.norm,
        destabilizers: records,
    };
    ctx.emit(&out, || {
        let mut s = format!("margin {:.10} at omega {:.10}", out.margin, out.omega_bar);
        for r in &out.destabilizers {
            s.push_str(&format!(
                "\n  {}: {:?} -> {:?}",
                kind_name(&r.destabilizer),
                r.destabilizer.kind,
                r.verification.map(|v| v.verdict)
            ));
        }
        s
    })
}

// ---------------------------------------------------------------- simulate

#[derive(Serialize)]
struct SimulateOut {
    delta: DeltaSpec,
    h: f64,
    t_final: f64,
    steps: usize,
    truncated: bool,
    verdict: StabilityVerdict,
    frequency: Option<f64>,
    final_deviation: f64,
}

/// Accepts a bare destabilizer or a `destabilize` output file, which also
/// names its scenario.
fn read_destabilizer(p: &Path) -> CliResult<(Destabilizer, Option<Scenario>)> {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p)?)?;
    let scenario = v.get("scenario").cloned().map(serde_json::from_value).transpose()?;
    let inner = v.get("destabilizer").cloned().unwrap_or(v);
    Ok((serde_json::from_value(inner)?, scenario))
}

pub fn simulate(ctx: &Ctx, a: &SimulateArgs) -> CliResult<()> {
    let g = load_graph(&a.graph)?;
    let n = g.n();
    let mut scenario = a.scenario;
    let mut t_final = 40.0 / a.beta;
    let delta = if let Some(gain) = a.gain {
        DeltaSpec::StaticReal { gain }
    } else if let Some((gain, t)) = a.delay {
        DeltaSpec::Delay { gain, t }
    } else if let Some((gain, a)) = a.allpass {
        DeltaSpec::AllPass { gain, a }
    } else if let Some(p) = &a.destabilizer {
        let (d, s) = read_destabilizer(p)?;
        scenario = scenario.or(s);
        if d.target_omega > 0.0 {
            t_final = t_final.max(60.0 * std::f64::consts::TAU / d.target_omega);
        }
        d.delta_spec()
    } else {
        DeltaSpec::None
    }
    .scaled(a.scale);
    if let Some(s) = &scenario {
        s.validate(n, None, true)?;
    }
    if delta != DeltaSpec::None && scenario.is_none() {
        return Err(usage("feedback needs --scenario"));
    }
    let l = build_laplacian(&g);
    let pv = scenario.as_ref().map(|s| scenario_vectors(s, &l)).transpose()?;
    let theta0: Vec<f64> = match (a.init, &pv) {
        (InitArg::Output, Some(pv)) => {
            let c = pv.c.norm();
            pv.c.iter().map(|x| if c > 0.0 { x / c } else { 0.0 }).collect()
        }
        (InitArg::Output, None) => return Err(usage("--init output needs --scenario")),
        (InitArg::Random, _) => {
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
        }
    };
    let cfg = SimConfig {
        lap: l,
        beta: a.beta,
        pv,
        delta,
        theta0,
        omega0: vec![0.0; n],
        h: a.h.unwrap_or(0.0),
        t_final: a.t_final.unwrap_or(t_final),
        record_every: a.record_every,
    };
    let cfg = if a.h.is_none() { cfg.with_auto_step() } else { cfg };
    let (traj, verdict) = simulate_with_verdict(&cfg)?;
    if let Some(dir) = ctx.out_dir()? {
        output::write_trajectory(dir.join("trajectory.csv"), &traj)?;
        write_json(dir.join("verdict.json"), &verdict)?;
    }
    let out = SimulateOut {
        delta,
        h: traj.h,
        t_final: traj.times.last().copied().unwrap_or(0.0),
        steps: traj.times.len() - 1,
        truncated: traj.truncated,
        verdict,
        frequency: oscillation_frequency(&traj, 0.5),
        final_deviation: traj.sync.last().copied().unwrap_or(0.0),
    };
    ctx.emit(&out, || {
        format!(
            "{:?} (rate {:.4e}) after {} steps; final deviation {:.4e}; frequency {:?}",
            out.verdict.growth, out.verdict.rate, out.steps, out.final_deviation, out.frequency
        )
    })
}

// ---------------------------------------------------------------- experiment

pub fn experiment(ctx: &Ctx, a: &ExperimentArgs) -> CliResult<()> {
    let text = fs::read_to_string(&a.spec)?;
    let mut spec: ExperimentSpec =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", a.spec.display())))?;
    if let Some(d) = &ctx.out {
        spec.output_dir = d.clone();
    }
    spec.localization = a.classifier.apply(spec.localization);
    let summary = run_experiment(&spec)?;
    ctx.emit(&summary, || {
        format!(
            "n = {}: {} localized eigenvectors, region {} nodes; node contrast {:?}, edge contrast {:?}; artifacts in {}",
            summary.n,
            summary.localized_count,
            summary.localized_region_size,
            summary.node_contrast,
            summary.edge_contrast,
            spec.output_dir.display()
        )
    })
}
