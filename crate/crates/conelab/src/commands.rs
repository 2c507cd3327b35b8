//! One function per subcommand: parse the input document, compute, and
//! describe the outcome as a [`Report`].

use std::sync::Arc;

use conelab_core::cones::{
    cone_finiteness_classify, cone_nu_lower_bound, divergence_probe, fit_envelope, ConeGeometry, LambdaCone, MuVerdict,
    ProbeFamily,
};
use conelab_core::flows::{
    integrate_flow, monitor_record, shrinking_time_estimate, AlphaRule, FlowConfig, FlowState, MonitorTau,
};
use conelab_core::inequalities::{
    hardy_near_extremal, log_sobolev_gaussian, normalize_radial, radial_log_sobolev_gap, weighted_hardy_gap,
};
use conelab_core::links::{
    default_tau_grid, lambda_link, mu_einstein_closed_form, mu_envelope_check, mu_link, nu_link, FunctionalQuery,
    LinkGeometry,
};
use conelab_core::numcore::{BoundaryKind, RadialGrid, ScalarField};
use conelab_core::probes::random_bumps;
use conelab_core::smoothing::{
    build_euclidean_smoothing, build_piecewise_h, smoothing_gap_check, window_grid, window_report, window_row,
    RadialProbe, WINDOW_A4, WINDOW_B2,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::report::{put_num, Cell, Outcome, Report, Table};
use crate::spec::{einstein_equivalent, parse, LinkSpec};
use crate::{CliError, Command, Options};

/// Scalar result fields that become columns when a command runs over a grid.
pub fn scan_columns(cmd: Command) -> &'static [&'static str] {
    match cmd {
        Command::Lambda => &["lambda", "exact"],
        Command::Mu => &["tau", "mu", "mu_closed_form"],
        Command::Nu => &["nu", "tau_star"],
        Command::ClassifyCone => &["lambda_link", "threshold", "verdict", "lambda_cone"],
        Command::ProbeDivergence => &["verdict", "fitted_exponent", "predicted_exponent", "w_last"],
        Command::VerifyInequalities => &["worst_margin", "extremal_ratio", "holds"],
        Command::Flow => &["final_time", "final_volume", "states"],
        Command::Smooth => &["fitted_exponent", "c_constant", "worst_margin", "holds"],
        Command::ScanBeta => &["window_lo", "window_hi", "contained_in_a4", "contained_in_b2"],
        Command::EnvelopeCheck => &["worst_violation", "pairs_checked", "holds"],
    }
}

pub fn dispatch(cmd: Command, input: &Value, opts: &Options) -> Result<Report, CliError> {
    match cmd {
        Command::Lambda => lambda(input, opts),
        Command::Mu => mu(input, opts),
        Command::Nu => nu(input, opts),
        Command::ClassifyCone => classify_cone(input, opts),
        Command::ProbeDivergence => probe_divergence(input, opts),
        Command::VerifyInequalities => verify_inequalities(input, opts),
        Command::Flow => flow(input, opts),
        Command::Smooth => smooth(input, opts),
        Command::ScanBeta => scan_beta(input, opts),
        Command::EnvelopeCheck => envelope_check(input, opts),
    }
}

fn link_fields(r: &mut Report, link: &LinkGeometry) {
    r.int("dim", link.dim());
    r.text(
        "link_variant",
        match link {
            LinkGeometry::RoundSphere { .. } => "round_sphere",
            LinkGeometry::ProfileWarped(_) => "profile",
            LinkGeometry::Einstein { .. } => "einstein",
        },
    );
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkInput {
    link: LinkSpec,
}

fn lambda(input: &Value, opts: &Options) -> Result<Report, CliError> {
    let inp: LinkInput = parse(input)?;
    let link = inp.link.build()?;
    let mut r = Report::new();
    link_fields(&mut r, &link);
    let (value, exact) = match link.exact_lambda() {
        Some(l) => (l, true),
        None => (lambda_link(&link)?, false),
    };
    let tol = opts.tol(if exact { 1e-12 } else { 1e-6 }) * value.abs().max(1.0);
    r.num("lambda", value, tol).flag("exact", exact);
    Ok(r)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MuInput {
    link: LinkSpec,
    #[serde(default)]
    tau: Option<f64>,
    #[serde(default)]
    taus: Option<Vec<f64>>,
}

fn closed_form_mu(link: &LinkGeometry, tau: f64) -> Option<f64> {
    let e = einstein_equivalent(link)?;
    mu_einstein_closed_form(&e, FunctionalQuery::new(tau, link.dim()).ok()?).ok()
}

fn mu(input: &Value, opts: &Options) -> Result<Report, CliError> {
    let inp: MuInput = parse(input)?;
    let link = inp.link.build()?;
    let tol = opts.tol(1e-3);
    let mut r = Report::new();
    link_fields(&mut r, &link);
    if inp.taus.is_none() || inp.tau.is_some() {
        let tau = inp.tau.unwrap_or(1.0);
        let m = mu_link(&link, FunctionalQuery::new(tau, link.dim())?)?;
        r.num("tau", tau, 0.0).num("mu", m, tol).opt_num("mu_closed_form", closed_form_mu(&link, tau), 1e-12);
    }
    if let Some(taus) = inp.taus {
        let mut t = Table::new("mu", &["tau", "mu", "mu_tol", "mu_closed_form", "status"]);
        let rows: Vec<Vec<Cell>> = taus
            .par_iter()
            .map(|&tau| {
                let closed = closed_form_mu(&link, tau);
                match FunctionalQuery::new(tau, link.dim()).and_then(|q| mu_link(&link, q)) {
                    Ok(m) => vec![tau.into(), m.into(), tol.into(), closed.into(), "ok".into()],
                    Err(e) => vec![tau.into(), Cell::Empty, Cell::Empty, closed.into(), e.code().into()],
                }
            })
            .collect();
        for row in rows {
            t.push(row);
        }
        r.int("tau_count", taus.len());
        r.table(t);
    }
    Ok(r)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NuInput {
    link: LinkSpec,
    #[serde(default)]
    taus: Option<Vec<f64>>,
}

fn nu(input: &Value, opts: &Options) -> Result<Report, CliError> {
    let inp: NuInput = parse(input)?;
    let link = inp.link.build()?;
    let taus = inp.taus.unwrap_or_else(default_tau_grid);
    let (v, tau_star) = nu_link(&link, &taus)?;
    let mut r = Report::new();
    link_fields(&mut r, &link);
    r.num("nu", v, opts.tol(1e-3)).num("tau_star", tau_star, tau_star * 1e-2).int("tau_count", taus.len());
    Ok(r)
}

fn default_eps() -> Vec<f64> {
    (2..=30).map(|k| 10f64.powi(-k)).collect()
}
fn ten() -> f64 {
    10.0
}
fn unit() -> f64 {
    1.0
}

fn trace_table(name: &str, eps: &[f64], values: &[f64], b: &[f64]) -> Table {
    let mut t = Table::new(name, &["eps", "w", "b_norm"]);
    for ((e, w), b) in eps.iter().zip(values).zip(b) {
        t.push(vec![(*e).into(), (*w).into(), (*b).into()]);
    }
    t
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifyInput {
    link: LinkSpec,
    #[serde(default = "ten")]
    r0: f64,
    #[serde(default = "unit")]
    tau: f64,
    #[serde(default)]
    eps: Option<Vec<f64>>,
}

/// Classify, then back the verdict with a divergence-probe trace at the
/// default exponent.
fn classify_cone(input: &Value, _opts: &Options) -> Result<Report, CliError> {
    let inp: ClassifyInput = parse(input)?;
    let link = inp.link.build()?;
    let c = cone_finiteness_classify(&link)?;
    let mut r = Report::new();
    link_fields(&mut r, &link);
    let tol = if c.exact { 1e-12 * c.lambda_link.abs().max(1.0) } else { 1e-6 };
    r.num("lambda_link", c.lambda_link, tol)
        .num("threshold", c.threshold, 0.0)
        .text("verdict", c.verdict.as_str())
        .opt_num(
            "lambda_cone",
            match c.lambda_cone {
                LambdaCone::Zero => Some(0.0),
                LambdaCone::MinusInfinity => Some(f64::NEG_INFINITY),
                LambdaCone::Undetermined => None,
            },
            0.0,
        )
        .flag("exact", c.exact);
    let a = ProbeFamily::default_exponent(link.dim(), c.lambda_link);
    let probe = ProbeFamily::new(&link, a, inp.r0)?;
    let cone = ConeGeometry::for_tau(link, inp.tau)?;
    let eps = inp.eps.unwrap_or_else(default_eps);
    let trace = divergence_probe(&cone, &probe, inp.tau, &eps)?;
    r.num("probe_exponent", a, 0.0)
        .flag("trace_strictly_decreasing", trace.strictly_decreasing)
        .flag("trace_divergent", trace.divergent);
    let t = trace_table("evidence_trace", &trace.eps, &trace.values, &trace.b_norms);
    r.table(t);
    if c.verdict == MuVerdict::MuInfinite {
        r.outcome = Outcome::UnboundedBelow;
    }
    Ok(r)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbeInput {
    link: LinkSpec,
    #[serde(default)]
    a: Option<f64>,
    #[serde(default = "ten")]
    r0: f64,
    #[serde(default = "unit")]
    tau: f64,
    #[serde(default)]
    eps: Option<Vec<f64>>,
    /// Also compute the cone ν lower bound (needs the μ envelope of the link).
    #[serde(default)]
    lower_bound: bool,
}

fn probe_divergence(input: &Value, _opts: &Options) -> Result<Report, CliError> {
    let inp: ProbeInput = parse(input)?;
    let link = inp.link.build()?;
    let lambda = link.exact_lambda().map_or_else(|| lambda_link(&link), Ok)?;
    let a = inp.a.unwrap_or_else(|| ProbeFamily::default_exponent(link.dim(), lambda));
    let probe = ProbeFamily::new(&link, a, inp.r0)?;
    let cone = ConeGeometry::for_tau(link.clone(), inp.tau)?;
    let eps = inp.eps.unwrap_or_else(default_eps);
    let trace = divergence_probe(&cone, &probe, inp.tau, &eps)?;
    let unbounded = trace.divergent && trace.strictly_decreasing;
    let mut r = Report::new();
    link_fields(&mut r, &link);
    r.num("a", a, 0.0)
        .num("k", probe.k(), 1e-12)
        .num("tau", inp.tau, 0.0)
        .flag("strictly_decreasing", trace.strictly_decreasing)
        .flag("divergent", trace.divergent)
        .opt_num("fitted_exponent", trace.fitted_exponent, 5e-2 * trace.predicted_exponent.abs().max(0.1))
        .num("predicted_exponent", trace.predicted_exponent, 0.0)
        .num("w_last", *trace.values.last().unwrap_or(&f64::NAN), 1e-10)
        .text("verdict", if unbounded { "unbounded_below" } else { "bounded" });
    if inp.lower_bound {
        let (env, _) = fit_envelope(&link)?;
        match cone_nu_lower_bound(&link, &env) {
            Ok((bound, _)) => {
                let above = trace.values.iter().all(|w| *w >= bound);
                r.num("nu_lower_bound", bound, 1e-3).flag("trace_above_bound", above);
            }
            Err(e) => {
                r.text("nu_lower_bound", e.code());
            }
        }
    }
    r.table(trace_table("trace", &trace.eps, &trace.values, &trace.b_norms));
    if unbounded {
        r.outcome = Outcome::UnboundedBelow;
    }
    Ok(r)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InequalityInput {
    inequality: String,
    n: usize,
    #[serde(default = "two_hundred")]
    probes: usize,
    #[serde(default = "default_delta")]
    delta: f64,
    #[serde(default = "unit")]
    tau0: f64,
}
fn two_hundred() -> usize {
    200
}
fn default_delta() -> f64 {
    0.003
}

const DIRICHLET: (BoundaryKind, BoundaryKind) = (BoundaryKind::DirichletZero, BoundaryKind::DirichletZero);

fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Arc<RadialGrid>, CliError> {
    Ok(Arc::new(RadialGrid::logarithmic(lo, hi, n)?))
}

/// Random compactly supported fields against the sharp constants, plus the
/// near-extremal (Hardy) or equality (log-Sobolev) case.
fn verify_inequalities(input: &Value, opts: &Options) -> Result<Report, CliError> {
    let inp: InequalityInput = parse(input)?;
    let nodes = opts.grid_nodes.unwrap_or(2048);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut r = Report::new();
    let mut params = Map::new();
    let mut table = Table::new("margins", &["probe", "value"]);
    r.text("inequality", &inp.inequality).int("n", inp.n).int("probe_count", inp.probes);
    match inp.inequality.as_str() {
        "hardy" => {
            let g = log_grid(1e-3, 1e2, nodes)?;
            let (lo, hi) = (1e-2f64.ln(), 10f64.ln());
            let mut worst = 0.0f64;
            for k in 0..inp.probes {
                let vals: Vec<f64> = random_bumps(&mut rng, &g, lo, hi)
                    .into_iter()
                    .zip(g.nodes())
                    .map(|(b, x)| b * (1.0 + 0.5 * (3.0 * x.ln()).sin()))
                    .collect();
                let ratio = weighted_hardy_gap(&ScalarField::new(g.clone(), vals, DIRICHLET)?, inp.n)?.ratio;
                table.push(vec![k.into(), ratio.into()]);
                worst = worst.max(ratio);
            }
            let extremal = weighted_hardy_gap(&hardy_near_extremal(inp.n, inp.delta, 8192)?, inp.n)?.ratio;
            put_num(&mut params, "delta", inp.delta, 0.0);
            r.num("worst_ratio", worst, 1e-6)
                .num("worst_margin", 1.0 - worst, 1e-6)
                .num("extremal_ratio", extremal, 1e-4)
                .flag("holds", worst < 1.0);
        }
        "log_sobolev" => {
            let s = inp.tau0.sqrt();
            let g = log_grid(1e-4 * s, 1e2 * s, nodes)?;
            let (lo, hi) = ((1e-3 * s).ln(), (10.0 * s).ln());
            let mut worst = f64::INFINITY;
            for k in 0..inp.probes {
                let raw = ScalarField::new(g.clone(), random_bumps(&mut rng, &g, lo, hi), DIRICHLET)?;
                let gap = radial_log_sobolev_gap(&normalize_radial(&raw, inp.n)?, inp.n, inp.tau0)?;
                table.push(vec![k.into(), gap.into()]);
                worst = worst.min(gap);
            }
            let gauss = log_sobolev_gaussian(log_grid(1e-6 * s, 60.0 * s, 4096)?, inp.n, inp.tau0)?;
            let eq = radial_log_sobolev_gap(&gauss, inp.n, inp.tau0)?;
            let tol = opts.tol(1e-6);
            put_num(&mut params, "tau0", inp.tau0, 0.0);
            r.num("worst_margin", worst, tol).num("extremal_gap", eq, 1e-5).flag("holds", worst > -tol);
        }
        other => return Err(CliError::validation(format!("unknown inequality {other:?} (hardy, log_sobolev)"))),
    }
    r.object("params", params).table(table);
    Ok(r)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowInput {
    link: LinkSpec,
    #[serde(default = "none_rule")]
    alpha_rule: String,
    #[serde(default)]
    alpha: Option<f64>,
    t_end: f64,
    #[serde(default)]
    dt_safety: Option<f64>,
    #[serde(default)]
    record_every: Option<usize>,
    #[serde(default = "unit")]
    monitor_tau: f64,
    #[serde(default)]
    shrinking_time: Option<f64>,
    #[serde(default)]
    estimate_shrinking_time: bool,
}
fn none_rule() -> String {
    "none".into()
}

fn flow(input: &Value, opts: &Options) -> Result<Report, CliError> {
    let inp: FlowInput = parse(input)?;
    let link = inp.link.build()?;
    let rule = match (inp.alpha_rule.as_str(), inp.alpha) {
        ("none", None) => AlphaRule::None,
        ("volume_preserving", None) => AlphaRule::VolumePreserving,
        ("shrinking_time_preserving", None) => AlphaRule::ShrinkingTimePreserving,
        ("fixed", Some(a)) => AlphaRule::Fixed(a),
        _ => {
            return Err(CliError::validation(
                "alpha_rule must be none, volume_preserving, shrinking_time_preserving, or fixed with alpha",
            ))
        }
    };
    let mut cfg = FlowConfig::new(rule, inp.t_end);
    if let Some(s) = inp.dt_safety {
        cfg.dt_safety = s;
    }
    if let Some(k) = inp.record_every {
        cfg.record_every = k;
    }
    cfg.shrinking_time = inp.shrinking_time;
    cfg.monitors.tau = MonitorTau::Fixed(inp.monitor_tau);
    let initial = FlowState::with_constant_potential(link.clone(), opts.grid_nodes.unwrap_or(65))?;
    let mut r = Report::new();
    link_fields(&mut r, &link);
    if inp.estimate_shrinking_time {
        r.num("shrinking_time", shrinking_time_estimate(&initial)?, 1e-4);
    }
    let traj = integrate_flow(&initial, &cfg)?;
    let mut t = Table::new("trajectory", &["t", "beta_sq", "vol", "F", "W", "sup_rm_times_t", "roundness"]);
    let mut worst_f_drop = 0.0f64;
    let mut prev_f: Option<f64> = None;
    for s in &traj.states {
        let m = monitor_record(s, &cfg.monitors)?;
        if let Some(p) = prev_f {
            worst_f_drop = worst_f_drop.max(p - m.f_value);
        }
        prev_f = Some(m.f_value);
        t.push(vec![
            m.time.into(),
            s.beta_sq_from_volume().into(),
            m.volume.into(),
            m.f_value.into(),
            m.w_value.into(),
            m.sup_rm_times_t.into(),
            m.residuals.get("roundness").copied().into(),
        ]);
    }
    let last = traj.states.last().expect("a trajectory holds its initial state");
    let tol = opts.tol(1e-6);
    r.text("alpha_rule", rule.as_str())
        .int("states", traj.states.len())
        .num("final_time", last.time(), 0.0)
        .num("final_volume", last.link().volume(), tol * last.link().volume())
        .num("worst_f_drop", worst_f_drop, tol);
    r.table(t);
    Ok(r)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SmoothInput {
    #[serde(default = "three")]
    dim: usize,
    beta: f64,
    #[serde(default = "default_a_values")]
    a_values: Vec<f64>,
    #[serde(default = "default_smooth_taus")]
    taus: Vec<f64>,
    #[serde(default = "fifty")]
    probes: usize,
}
fn three() -> usize {
    3
}
fn fifty() -> usize {
    50
}
fn default_a_values() -> Vec<f64> {
    vec![10.0, 100.0, 1000.0]
}
fn default_smooth_taus() -> Vec<f64> {
    vec![0.01, 0.02, 0.05]
}

fn smooth(input: &Value, opts: &Options) -> Result<Report, CliError> {
    let inp: SmoothInput = parse(input)?;
    let a0 = *inp.a_values.first().ok_or_else(|| CliError::validation("a_values must not be empty"))?;
    let profile = if inp.beta >= 1.0 { build_piecewise_h(inp.beta, a0)? } else { build_euclidean_smoothing(inp.beta, a0)? };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let probes: Vec<RadialProbe> = (0..inp.probes).map(|_| RadialProbe::random(&mut rng, 1.0)).collect();
    let rep = smoothing_gap_check(inp.dim, &profile, &probes, &inp.taus, &inp.a_values)?;
    let (dh, dh1) = profile.continuity_defect();
    let mut r = Report::new();
    r.int("dim", inp.dim)
        .num("beta", inp.beta, 0.0)
        .text("target", rep.target.as_str())
        .num("h_jump", dh, 1e-15)
        .num("dh_jump", dh1, 1e-15)
        .opt_num("fitted_exponent", rep.fitted_exponent, 0.3)
        .opt_num("fitted_c", rep.fitted_c, rep.fitted_c.map_or(0.0, |c| 0.5 * c))
        .num("c_constant", rep.c_constant, 1e-8)
        .num("worst_margin", rep.worst_margin, 1e-8)
        .flag("holds", rep.holds)
        .flag("bound_depends_on_tau", rep.bound_depends_on_tau)
        .int("probe_count", probes.len());
    let mut t = Table::new("gap", &["a", "tau", "probe", "delta", "delta_limit"]);
    for e in &rep.entries {
        t.push(vec![e.a.into(), e.tau.into(), e.probe.into(), e.delta.into(), e.delta_limit.into()]);
    }
    let mut res = Table::new("gap_residuals", &["a", "residual"]);
    for (a, x) in &rep.residuals {
        res.push(vec![(*a).into(), (*x).into()]);
    }
    r.table(t).table(res);
    Ok(r)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScanBetaInput {
    #[serde(default = "three")]
    dim: usize,
    beta_min: f64,
    beta_max: f64,
    count: usize,
    #[serde(default = "hundred")]
    a: f64,
    /// Defaults to η = 1 − log 2.
    #[serde(default)]
    eta: Option<f64>,
}
fn hundred() -> f64 {
    100.0
}

fn window_object(w: (f64, f64)) -> Map<String, Value> {
    let mut m = Map::new();
    put_num(&mut m, "lo", w.0, 0.0);
    put_num(&mut m, "hi", w.1, 0.0);
    m
}

fn scan_beta(input: &Value, _opts: &Options) -> Result<Report, CliError> {
    let inp: ScanBetaInput = parse(input)?;
    let eta = inp.eta.unwrap_or_else(conelab_core::smoothing::eta_3);
    let betas = if inp.count == 0 { Vec::new() } else { window_grid((inp.beta_min, inp.beta_max), inp.count)? };
    let rows: Vec<_> = betas.par_iter().map(|&b| (b, window_row(inp.dim, b, inp.a, eta))).collect();
    let mut t = Table::new(
        "scan_beta",
        &["beta", "nu_lower_estimate", "gap_constant_c", "inside_window_A4", "inside_window_B2", "inside", "status"],
    );
    let mut ok = Vec::new();
    let mut failures = 0;
    for (beta, row) in rows {
        match row {
            Ok(w) => {
                t.push(vec![
                    beta.into(),
                    w.nu_lower_estimate.into(),
                    w.gap_constant_c.into(),
                    w.inside_window_a4.into(),
                    w.inside_window_b2.into(),
                    w.inside.into(),
                    "ok".into(),
                ]);
                ok.push(w);
            }
            Err(e) => {
                failures += 1;
                t.push(vec![beta.into(), Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, e.code().into()]);
            }
        }
    }
    let rep = window_report(inp.dim, inp.a, eta, ok)?;
    // Window edges are resolved to one grid step.
    let step = if betas.len() > 1 { (inp.beta_max - inp.beta_min) / (betas.len() - 1) as f64 } else { 0.0 };
    let mut r = Report::new();
    r.int("dim", inp.dim)
        .num("a", inp.a, 0.0)
        .num("eta", eta, 0.0)
        .int("rows", betas.len())
        .int("failed_rows", failures)
        .opt_num("window_lo", rep.window.map(|w| w.0), step)
        .opt_num("window_hi", rep.window.map(|w| w.1), step)
        .flag("contained_in_a4", rep.contained_in_a4)
        .flag("contained_in_b2", rep.contained_in_b2)
        .object("reference_window_a4", window_object(WINDOW_A4))
        .object("reference_window_b2", window_object(WINDOW_B2))
        .text("dimension_note", rep.dimension_note);
    r.table(t);
    Ok(r)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvelopeInput {
    link: LinkSpec,
    #[serde(default)]
    taus: Option<Vec<f64>>,
}

/// Chain inequality μ(τ₁) ≥ μ(τ₂) + (τ₁−τ₂)λ − (n/2)log(τ₁/τ₂) on the
/// computed μ grid, and on the closed-form grid when the link has one.
fn envelope_check(input: &Value, opts: &Options) -> Result<Report, CliError> {
    let inp: EnvelopeInput = parse(input)?;
    let link = inp.link.build()?;
    let dim = link.dim();
    let taus = inp.taus.unwrap_or_else(default_tau_grid);
    let lambda = link.exact_lambda().map_or_else(|| lambda_link(&link), Ok)?;
    let samples: Vec<(f64, f64)> = taus
        .par_iter()
        .map(|&t| Ok((t, mu_link(&link, FunctionalQuery::new(t, dim)?)?)))
        .collect::<conelab_core::Result<_>>()?;
    let rep = mu_envelope_check(&samples, lambda, dim);
    let tol = opts.tol(1e-3);
    let mut r = Report::new();
    link_fields(&mut r, &link);
    r.num("lambda", lambda, 1e-6 * lambda.abs().max(1.0))
        .int("pairs_checked", rep.pairs_checked)
        .num("worst_violation", rep.worst_violation, 1e-6)
        .num("threshold", tol, 0.0)
        .flag("holds", rep.worst_violation < tol);
    let mut t = Table::new("envelope", &["tau", "mu", "mu_closed_form"]);
    let closed: Vec<Option<f64>> = taus.iter().map(|&tau| closed_form_mu(&link, tau)).collect();
    for ((tau, m), c) in samples.iter().zip(&closed) {
        t.push(vec![(*tau).into(), (*m).into(), (*c).into()]);
    }
    let exact: Vec<(f64, f64)> = taus.iter().zip(&closed).filter_map(|(t, c)| c.map(|c| (*t, c))).collect();
    if exact.len() >= 2 {
        let e = mu_envelope_check(&exact, lambda, dim);
        r.num("closed_form_worst_violation", e.worst_violation, 1e-12)
            .int("closed_form_pairs", e.pairs_checked)
            .flag("closed_form_exact", e.worst_violation < 1e-8);
    }
    r.table(t);
    Ok(r)
}
