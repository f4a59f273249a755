//! Subcommand bodies. Each returns the `results` object of its document.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use subcrit_cp_core::graphical::{
    e_gamma_curve, estimate_conditioned_law, estimate_delta_c, estimate_growth_rate, estimate_r_gamma,
    estimate_russo_integrand, simulate_forward, GraphicalRealization, GrowthEstimate, MCEstimate, Trajectory,
};
use subcrit_cp_core::measures::{
    cform_constant, duality_residual, evolve_measure, growth_derivative, h_eval, h_weighted_bracket, intersection_stats,
    tightness_check, bracket_of,
};
use subcrit_cp_core::rng::StreamKey;
use subcrit_cp_core::spectral::{
    doob_transform, h_proportionality, leading_eigen, normalize_eigenmeasure, quasi_convergence_check, Eigenpair,
};
use subcrit_cp_core::{
    check_irreducibility, ConfigSet, HomogeneousMeasure, Metric, ShiftClass, SparseGenerator, SpectralResult,
    StateSpace, TailSchedule, TildeLaw, Verdict,
};

use crate::config::{RunConfig, Setup};
use crate::error::{CliError, Context};
use crate::output::write_file;

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub setup: Setup,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Ctx<'_> {
    /// Seed of the stream for one named task.
    fn task_seed(&self, path: &str) -> u64 {
        StreamKey::root(self.seed).child(path).seed()
    }

    fn group(&self) -> &subcrit_cp_core::Group {
        self.setup.kernel.group()
    }

    fn spaces(&self) -> Result<Spaces, CliError> {
        let fwd = StateSpace::enumerate(&self.setup.kernel, self.setup.caps).context("enumerating forward classes")?;
        let dual = if self.setup.symmetric {
            None
        } else {
            Some(StateSpace::enumerate(&self.setup.dual, self.setup.caps).context("enumerating dual classes")?)
        };
        Ok(Spaces { fwd, dual })
    }

    fn left(&self, space: &StateSpace, delta: f64) -> Result<Left, CliError> {
        let gen = SparseGenerator::build(space, delta);
        let t = &self.cfg.tolerances;
        let pair = leading_eigen(&gen, t.eigen, t.max_iter).context(format!("left eigenvector at delta {delta}"))?;
        Ok(Left { gen, pair })
    }

    fn full(&self, space: &StateSpace, delta: f64) -> Result<(SparseGenerator, SpectralResult), CliError> {
        let gen = SparseGenerator::build(space, delta);
        let t = &self.cfg.tolerances;
        let spec = SpectralResult::compute(space, &gen, t.eigen, t.max_iter).context(format!("spectrum at delta {delta}"))?;
        Ok((gen, spec))
    }

    fn metric(&self) -> Result<Metric, CliError> {
        Metric::build(&self.setup.kernel, &TailSchedule::Exponential, self.cfg.metric_check_radius).context("building metric")
    }
}

/// Forward classes, and dual classes when the kernel is not symmetric.
struct Spaces {
    fwd: StateSpace,
    dual: Option<StateSpace>,
}

impl Spaces {
    fn dual(&self) -> &StateSpace {
        self.dual.as_ref().unwrap_or(&self.fwd)
    }
}

struct Left {
    gen: SparseGenerator,
    pair: Eigenpair,
}

impl Left {
    /// Rate at which the quasi-stationary law loses mass to truncation.
    fn trunc_mass(&self) -> f64 {
        self.pair.vector.iter().zip(self.gen.kill_trunc()).map(|(p, k)| p * k).sum()
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("results serialize")
}

fn law_map(law: &TildeLaw) -> BTreeMap<String, f64> {
    law.entries().iter().map(|(c, p)| (c.to_string(), *p)).collect()
}

fn measure_doc(m: &HomogeneousMeasure) -> Value {
    json!({
        "c": m.mass(),
        "delta": m.delta(),
        "mean_size": m.law().mean_size(),
        "classes": m.law().len(),
        "law": law_map(m.law()),
    })
}

fn eigenmeasure(ctx: &Ctx, space: &StateSpace, vector: &[f64], delta: f64) -> Result<HomogeneousMeasure, CliError> {
    let law = TildeLaw::from_dense(space, vector).context("eigenvector law")?;
    Ok(normalize_eigenmeasure(ctx.group(), &law).context("normalizing eigenmeasure")?.with_delta(delta))
}

/// `-dr/dδ` from both eigenmeasures, and the measures themselves.
fn derivative_at(
    ctx: &Ctx,
    spaces: &Spaces,
    fwd: &Left,
    dual: Option<&Left>,
    delta: f64,
) -> Result<(f64, HomogeneousMeasure, HomogeneousMeasure), CliError> {
    let nu = eigenmeasure(ctx, &spaces.fwd, &fwd.pair.vector, delta)?;
    let nu_dag = match dual {
        Some(d) => eigenmeasure(ctx, spaces.dual(), &d.pair.vector, delta)?,
        None => nu.clone(),
    };
    let value = growth_derivative(&nu, &nu_dag).context("growth derivative")?;
    Ok((value, nu, nu_dag))
}

/// Central difference `-(r̂(δ+h) - r̂(δ-h)) / 2h`.
fn derivative_fd(ctx: &Ctx, space: &StateSpace, delta: f64) -> Result<f64, CliError> {
    let h = ctx.cfg.fd_step;
    let up = ctx.left(space, delta + h)?.pair.r_hat;
    let down = ctx.left(space, delta - h)?.pair.r_hat;
    Ok(-(up - down) / (2.0 * h))
}

fn generator_stats(g: &SparseGenerator) -> Value {
    json!({
        "states": g.dim(),
        "nonzeros": g.nnz(),
        "uniformization_rate": g.gamma(),
        "row_sum_defect": g.row_sum_defect(),
    })
}

fn export(ctx: &Ctx, name: &str, g: &SparseGenerator) -> Result<(), CliError> {
    if let (true, Some(out)) = (ctx.cfg.export_generator, &ctx.out) {
        let mut buf = Vec::new();
        g.write_triplets(&mut buf)?;
        write_file(out, name, &String::from_utf8(buf).expect("ascii"))?;
    }
    Ok(())
}

pub fn spectrum(ctx: &Ctx) -> Result<Value, CliError> {
    let delta = ctx.cfg.delta;
    let spaces = ctx.spaces()?;
    let (g, spec) = ctx.full(&spaces.fwd, delta)?;
    export(ctx, "generator_forward.txt", &g)?;
    let mut out = json!({
        "forward": { "spectrum": to_value(&spec.to_document(&spaces.fwd)), "generator": generator_stats(&g) },
        "dual_equals_forward": ctx.setup.symmetric,
        "irreducibility": to_value(&check_irreducibility(&ctx.setup.kernel, ctx.cfg.irreducibility, ctx.cfg.irreducibility_radius)),
    });
    if let Some(dual) = &spaces.dual {
        let (gd, sd) = ctx.full(dual, delta)?;
        export(ctx, "generator_dual.txt", &gd)?;
        out["dual"] = json!({ "spectrum": to_value(&sd.to_document(dual)), "generator": generator_stats(&gd) });
    }
    Ok(out)
}

#[derive(Serialize)]
struct TrajectoryView {
    initial: String,
    horizon: f64,
    survived: bool,
    final_set: String,
    /// `(time, site, kind)`.
    events: Vec<(f64, String, String)>,
}

impl From<Trajectory> for TrajectoryView {
    fn from(t: Trajectory) -> Self {
        TrajectoryView {
            initial: t.initial.to_string(),
            horizon: t.horizon,
            survived: t.survived,
            final_set: t.final_set.to_string(),
            events: t
                .events
                .into_iter()
                .map(|e| (e.time, e.site.to_string(), to_value(&e.kind).as_str().unwrap_or_default().to_string()))
                .collect(),
        }
    }
}

pub fn simulate(ctx: &Ctx) -> Result<Value, CliError> {
    let cfg = ctx.cfg;
    let (delta, n) = (cfg.delta, cfg.mc.replicates);
    let seed = ctx.task_seed("simulate");
    let est = estimate_growth_rate(&ctx.setup.kernel, delta, &cfg.mc.t_grid, n, seed).context("simulating")?;
    let rows: Vec<Value> = est
        .points
        .iter()
        .map(|p| {
            let q = p.survivors as f64 / n as f64;
            json!({
                "t": p.t,
                "survival": MCEstimate { estimate: q, std_err: (q * (1.0 - q) / n as f64).sqrt(), replicates: n, seed },
                "mean_size": p.mean,
                "survivors": p.survivors,
            })
        })
        .collect();
    let horizon = cfg.mc.t_grid.last().copied().unwrap_or(0.0);
    let origin = ConfigSet::singleton(ctx.group().identity());
    let key = StreamKey::root(ctx.seed).child("simulate/trajectories");
    let trajectories = (0..cfg.mc.sample_trajectories)
        .map(|i| {
            let mut rng = key.index(i as u64).rng();
            simulate_forward(&ctx.setup.kernel, delta, &origin, horizon, &mut rng).map(TrajectoryView::from)
        })
        .collect::<subcrit_cp_core::Result<Vec<_>>>()
        .context("sampling trajectories")?;
    Ok(json!({ "delta": delta, "seed": seed, "times": rows, "trajectories": to_value(&trajectories) }))
}

fn mc_rate(est: &GrowthEstimate) -> Value {
    json!({ "r_hat": est.r_hat, "t_at_min": est.t_at_min, "slope": est.slope, "points": est.points })
}

pub fn growth(ctx: &Ctx) -> Result<Value, CliError> {
    let cfg = ctx.cfg;
    let spaces = ctx.spaces()?;
    let metric = if cfg.gammas.iter().any(|&g| g > 0.0) { Some(ctx.metric()?) } else { None };
    let mut rows = Vec::new();
    for delta in cfg.deltas() {
        let left = ctx.left(&spaces.fwd, delta)?;
        let seed = ctx.task_seed(&format!("growth/delta={delta}"));
        let mc = estimate_growth_rate(&ctx.setup.kernel, delta, &cfg.mc.t_grid, cfg.mc.replicates, seed)
            .context(format!("growth at delta {delta}"))?;
        let mut gammas = Vec::new();
        for &gamma in &cfg.gammas {
            let est = match &metric {
                Some(m) if gamma > 0.0 => {
                    let s = ctx.task_seed(&format!("growth/delta={delta}/gamma={gamma}"));
                    estimate_r_gamma(&ctx.setup.kernel, delta, m, gamma, &cfg.mc.t_grid, cfg.mc.replicates, s)
                        .context(format!("r_gamma at delta {delta}, gamma {gamma}"))?
                }
                _ => mc.clone(),
            };
            gammas.push(json!({ "gamma": gamma, "estimate": mc_rate(&est) }));
        }
        rows.push(json!({
            "delta": delta,
            "r_spectral": left.pair.r_hat,
            "residual": left.pair.residual,
            "trunc_mass": left.trunc_mass(),
            "mc_seed": seed,
            "mc": mc_rate(&mc),
            "r_gamma": gammas,
        }));
    }
    Ok(json!({ "caps": ctx.setup.caps, "states": spaces.fwd.len(), "rows": rows }))
}

pub fn eigenmeasure_cmd(ctx: &Ctx) -> Result<Value, CliError> {
    let cfg = ctx.cfg;
    let delta = cfg.delta;
    let spaces = ctx.spaces()?;
    let fwd = ctx.left(&spaces.fwd, delta)?;
    let dual = match &spaces.dual {
        Some(d) => Some(ctx.left(d, delta)?),
        None => None,
    };
    let (_, nu, nu_dag) = derivative_at(ctx, &spaces, &fwd, dual.as_ref(), delta)?;
    let singleton = ShiftClass::singleton(ctx.group());
    let exact =
        quasi_convergence_check(&fwd.gen, &spaces.fwd, &fwd.pair.vector, &singleton, &cfg.mc.conditioned_times)
            .context("exact conditioned laws")?;
    let mut conditioned = Vec::new();
    for &t in &cfg.mc.conditioned_times {
        let seed = ctx.task_seed(&format!("eigenmeasure/conditioned/t={t}"));
        let row = match estimate_conditioned_law(&ctx.setup.kernel, delta, t, cfg.mc.replicates, seed) {
            Ok(law) => json!({
                "t": t,
                "seed": seed,
                "survivors": law.survivors,
                "replicates": law.replicates,
                "tv_to_nu_tilde": law.law.total_variation(nu.law()),
                "expected_sampling_tv": nu.law().expected_sampling_tv(law.survivors),
            }),
            Err(e) => json!({ "t": t, "seed": seed, "error": e.to_string() }),
        };
        conditioned.push(row);
    }
    let mut tightness = Vec::new();
    if !cfg.gammas.is_empty() {
        let metric = ctx.metric()?;
        let mut times = vec![0.0];
        times.extend(cfg.mc.t_grid.iter().copied().filter(|&t| t > 0.0));
        for &gamma in &cfg.gammas {
            let seed = ctx.task_seed(&format!("eigenmeasure/tightness/gamma={gamma}"));
            let curve = e_gamma_curve(&ctx.setup.kernel, delta, &metric, gamma, &times, cfg.mc.replicates, seed)
                .context(format!("e_gamma curve at gamma {gamma}"))?;
            let rate = ctx.setup.kernel.total_rate() + delta;
            let row = match tightness_check(&nu, &metric, gamma, fwd.pair.r_hat, rate, &curve) {
                Ok(rep) => json!({ "seed": seed, "report": rep }),
                Err(e) => json!({ "gamma": gamma, "seed": seed, "error": e.to_string() }),
            };
            tightness.push(row);
        }
    }
    Ok(json!({
        "delta": delta,
        "caps": ctx.setup.caps,
        "r_hat": fwd.pair.r_hat,
        "nu_circ": measure_doc(&nu),
        "nu_circ_dagger": measure_doc(&nu_dag),
        "exact_tv": cfg.mc.conditioned_times.iter().zip(&exact).map(|(t, tv)| json!({"t": t, "tv": tv})).collect::<Vec<_>>(),
        "conditioned": conditioned,
        "tightness": tightness,
    }))
}

pub fn derivative(ctx: &Ctx) -> Result<Value, CliError> {
    let cfg = ctx.cfg;
    let delta = cfg.delta;
    let spaces = ctx.spaces()?;
    let fwd = ctx.left(&spaces.fwd, delta)?;
    let dual = match &spaces.dual {
        Some(d) => Some(ctx.left(d, delta)?),
        None => None,
    };
    let (formula, nu, nu_dag) = derivative_at(ctx, &spaces, &fwd, dual.as_ref(), delta)?;
    let fd = derivative_fd(ctx, &spaces.fwd, delta)?;
    let stats = intersection_stats(&nu, &nu_dag).context("intersection statistics")?;
    let cform = cform_constant(&nu, &nu, &nu_dag).context("normalizing constant")?;
    let seed = ctx.task_seed("derivative/russo");
    let russo = estimate_russo_integrand(&ctx.setup.kernel, delta, cfg.russo.s, cfg.russo.t, cfg.mc.replicates, seed)
        .context("Russo integrand")?;
    let z = (russo.value.estimate - formula) / russo.value.std_err;
    Ok(json!({
        "delta": delta,
        "caps": ctx.setup.caps,
        "r_hat": fwd.pair.r_hat,
        "derivative_formula": formula,
        "derivative_fd": fd,
        "fd_step": cfg.fd_step,
        "relative_difference": (formula - fd).abs() / fd.abs(),
        "intersection": stats,
        "cform_constant": cform,
        "russo": { "s": cfg.russo.s, "t": cfg.russo.t, "seed": seed, "estimate": russo, "z_vs_formula": if z.is_finite() { Some(z) } else { None } },
    }))
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    delta: f64,
    r_spectral: f64,
    r_mc: Option<f64>,
    r_mc_stderr: Option<f64>,
    caps_s: usize,
    caps_d: u64,
    trunc_mass: f64,
    derivative_formula: f64,
    derivative_fd: f64,
}

fn csv_field(x: Option<f64>) -> String {
    x.map(|v| format!("{v}")).unwrap_or_default()
}

fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("delta,r_spectral,r_mc,r_mc_stderr,caps_S,caps_D,trunc_mass,derivative_formula,derivative_fd\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.delta,
            r.r_spectral,
            csv_field(r.r_mc),
            csv_field(r.r_mc_stderr),
            r.caps_s,
            r.caps_d,
            r.trunc_mass,
            r.derivative_formula,
            r.derivative_fd
        ));
    }
    s
}

/// Monotonicity, pairwise Lipschitz-1 and `[-δ, |a|-δ]` bounds over the sweep.
fn sweep_audit(rows: &[SweepRow], total_rate: f64, tol: f64) -> Value {
    let mut monotone = Vec::new();
    for w in rows.windows(2) {
        if w[1].r_spectral > w[0].r_spectral + tol {
            monotone.push(json!([w[0].delta, w[1].delta]));
        }
    }
    let mut lipschitz = Vec::new();
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            if (a.r_spectral - b.r_spectral).abs() > (a.delta - b.delta).abs() + 2.0 * tol {
                lipschitz.push(json!([a.delta, b.delta]));
            }
        }
    }
    let upper: Vec<f64> = rows.iter().filter(|r| r.r_spectral > total_rate - r.delta + tol).map(|r| r.delta).collect();
    let lower: Vec<f64> = rows.iter().filter(|r| r.r_spectral < -r.delta - tol).map(|r| r.delta).collect();
    json!({
        "tolerance": tol,
        "nonincreasing": monotone.is_empty(),
        "monotonicity_violations": monotone,
        "lipschitz": lipschitz.is_empty(),
        "lipschitz_violations": lipschitz,
        "upper_bound": upper.is_empty(),
        "upper_bound_violations": upper,
        "lower_bound": lower.is_empty(),
        "lower_bound_violations": lower,
        "note": "truncated spectra bound r from below; the lower bound -delta can fail at small caps",
    })
}

pub fn sweep(ctx: &Ctx) -> Result<(Value, String), CliError> {
    let cfg = ctx.cfg;
    let spaces = ctx.spaces()?;
    let mut rows = Vec::new();
    for delta in cfg.deltas() {
        let fwd = ctx.left(&spaces.fwd, delta)?;
        let dual = match &spaces.dual {
            Some(d) => Some(ctx.left(d, delta)?),
            None => None,
        };
        let (formula, _, _) = derivative_at(ctx, &spaces, &fwd, dual.as_ref(), delta)?;
        let fd = derivative_fd(ctx, &spaces.fwd, delta)?;
        let seed = ctx.task_seed(&format!("sweep/delta={delta}"));
        let mc = estimate_growth_rate(&ctx.setup.kernel, delta, &cfg.mc.t_grid, cfg.mc.replicates, seed)
            .context(format!("growth at delta {delta}"))?;
        rows.push(SweepRow {
            delta,
            r_spectral: fwd.pair.r_hat,
            r_mc: mc.r_hat.map(|r| r.estimate),
            r_mc_stderr: mc.r_hat.map(|r| r.std_err),
            caps_s: ctx.setup.caps.max_size,
            caps_d: ctx.setup.caps.max_diameter,
            trunc_mass: fwd.trunc_mass(),
            derivative_formula: formula,
            derivative_fd: fd,
        });
    }
    let audit = sweep_audit(&rows, ctx.setup.kernel.total_rate(), cfg.tolerances.audit);
    let csv = sweep_csv(&rows);
    Ok((json!({ "rows": rows, "audit": audit }), csv))
}

pub fn delta_c(ctx: &Ctx) -> Result<Value, CliError> {
    let cfg = ctx.cfg;
    let seed = ctx.task_seed("delta-c");
    let method = cfg.delta_c_method(seed);
    let interval = estimate_delta_c(&ctx.setup.kernel, &method, cfg.delta_c.bracket, cfg.delta_c.tol)
        .context("bisection on the sign of r")?;
    Ok(json!({ "method": method, "interval": interval }))
}

/// One line of the `check` report.
#[derive(Debug, Clone, Serialize)]
pub struct Property {
    pub name: String,
    pub passed: bool,
    /// Reported but not counted towards the exit code.
    pub informational: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Default)]
struct Report(Vec<Property>);

impl Report {
    fn le(&mut self, name: &str, value: f64, threshold: f64, detail: impl Into<String>) {
        self.push(name, value <= threshold, false, value, threshold, detail);
    }

    fn info(&mut self, name: &str, passed: bool, value: f64, threshold: f64, detail: impl Into<String>) {
        self.push(name, passed, true, value, threshold, detail);
    }

    fn push(&mut self, name: &str, passed: bool, informational: bool, value: f64, threshold: f64, detail: impl Into<String>) {
        self.0.push(Property { name: name.into(), passed, informational, value, threshold, detail: detail.into() });
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn check_side(rep: &mut Report, ctx: &Ctx, label: &str, space: &StateSpace, delta: f64) -> Result<SpectralResult, CliError> {
    let tol = &ctx.cfg.tolerances;
    let (g, spec) = ctx.full(space, delta)?;
    rep.le(&format!("{label}/generator_row_sums"), g.row_sum_defect(), 1e-12, "off-diagonal + diagonal + kill rates per row");
    rep.le(&format!("{label}/left_residual"), spec.residual_left, tol.residual, "l1 norm of nu Q - r nu");
    rep.le(&format!("{label}/right_residual"), spec.residual_right, tol.residual, "sup norm of Q h - r h, relative");
    rep.le(&format!("{label}/left_right_rates"), (spec.r_hat - spec.r_hat_right).abs(), tol.residual, "left and right Perron roots agree");
    let neg = spec.nu_tilde.iter().filter(|&&p| p < 0.0).count();
    let total: f64 = spec.nu_tilde.iter().sum();
    rep.le(&format!("{label}/nu_tilde_probability"), (total - 1.0).abs() + neg as f64, 1e-12, "nonnegative, sums to 1");
    let nonpos = spec.h_tilde.iter().filter(|&&h| !(h > 0.0)).count();
    rep.le(&format!("{label}/h_tilde_positive"), nonpos as f64, 0.0, "entries of the right eigenvector that are not positive");
    let upper = ctx.setup.kernel.total_rate() - delta;
    rep.le(&format!("{label}/rate_upper_bound"), spec.r_hat - upper, tol.audit, "r <= |a| - delta");
    rep.le(&format!("{label}/rate_nonpositive"), spec.r_hat, tol.audit, "a killed chain cannot grow");
    rep.info(
        &format!("{label}/rate_lower_bound"),
        spec.r_hat >= -delta - tol.audit,
        spec.r_hat,
        -delta,
        "r >= -delta holds for the infinite system; truncation can push r below it",
    );
    rep.info(&format!("{label}/reducible"), !spec.reducible, f64::from(u8::from(spec.reducible)), 0.0, "some class cannot return to the singleton");
    match doob_transform(&g, &spec.h_tilde, spec.r_hat, tol.eigen, tol.max_iter) {
        Ok(doob) => {
            rep.le(&format!("{label}/doob_row_sums"), doob.max_row_sum(), 1e-10, "after diagonal projection");
            rep.le(&format!("{label}/doob_projection"), doob.projection_residual, tol.residual.max(1e-8), "row sums before projection");
            rep.le(&format!("{label}/doob_stationary_product"), doob.pip_deviation(&spec.nu_tilde, &spec.h_tilde), 1e-6, "l1 distance of pi to normalized nu h");
            rep.le(&format!("{label}/doob_stationarity"), doob.stationarity_residual, 1e-8, "l1 norm of pi Q^h");
        }
        Err(e) => rep.push(&format!("{label}/doob_transform"), false, false, f64::NAN, 0.0, e.to_string()),
    }
    let law = spec.law(space).context("eigenvector law")?;
    let nu = normalize_eigenmeasure(ctx.group(), &law).context("normalizing")?;
    let (evolved, _) = evolve_measure(&nu, &g, space, 1.0).context("evolving the eigenmeasure")?;
    rep.le(&format!("{label}/eigenmeasure_mass"), rel(evolved.mass() / nu.mass(), spec.r_hat.exp()), 1e-8, "mass ratio after t = 1 against e^r");
    rep.le(&format!("{label}/eigenmeasure_law"), evolved.law().total_variation(nu.law()), 1e-8, "TV between the evolved and original law");
    Ok(spec)
}

pub fn check(ctx: &Ctx) -> Result<(Value, usize), CliError> {
    let cfg = ctx.cfg;
    let delta = cfg.delta;
    let group = ctx.group().clone();
    let mut rep = Report::default();
    let verdict = check_irreducibility(&ctx.setup.kernel, cfg.irreducibility, cfg.irreducibility_radius);
    rep.info("irreducibility", verdict != Verdict::Refuted, 0.0, 0.0, format!("{:?}: {verdict:?}", cfg.irreducibility));

    let spaces = ctx.spaces()?;
    let spec = check_side(&mut rep, ctx, "forward", &spaces.fwd, delta)?;
    let spec_dual = match &spaces.dual {
        Some(d) => check_side(&mut rep, ctx, "dual", d, delta)?,
        None => spec.clone(),
    };
    let nu = normalize_eigenmeasure(&group, &spec.law(&spaces.fwd).context("law")?).context("normalizing")?.with_delta(delta);
    let nu_dag =
        normalize_eigenmeasure(&group, &spec_dual.law(spaces.dual()).context("law")?).context("normalizing")?.with_delta(delta);

    let cform = cform_constant(&nu, &nu, &nu_dag).context("normalizing constant")?;
    rep.le("cform_constant", (cform - 1.0).abs(), 1e-9, "constant of the eigenmeasure itself is 1");
    let deriv = growth_derivative(&nu, &nu_dag).context("growth derivative")?;
    rep.push("derivative_in_unit_interval", deriv > 0.0 && deriv <= 1.0 + 1e-12, false, deriv, 1.0, "-dr/d delta in (0, 1]");
    let stats = intersection_stats(&nu, &nu_dag).context("intersection")?;
    let swapped = intersection_stats(&nu_dag, &nu).context("intersection")?;
    rep.le("intersection_identity", rel(stats.bracket, h_weighted_bracket(&nu, &nu_dag)), 1e-12, "bracket of the intersection against the h-weighted bracket");
    rep.le("intersection_symmetry", rel(stats.bracket, swapped.bracket) + rel(stats.singleton_mass, swapped.singleton_mass), 1e-12, "swapping the two measures");

    let mut rng = StreamKey::root(ctx.seed).child("check/sandwich").rng();
    let one = ConfigSet::singleton(group.identity());
    let h0 = h_eval(&nu_dag, &one);
    let b = bracket_of(&nu_dag);
    let mut fails = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..7);
        let set: ConfigSet = (0..n).map(|_| group.random_element(&mut rng, 5)).collect();
        let h = h_eval(&nu_dag, &set);
        let k = set.len() as f64;
        if !(b * k <= h * (1.0 + 1e-12) + 1e-12 && h <= h0 * k * (1.0 + 1e-12) + 1e-12) {
            fails += 1;
        }
    }
    rep.le("h_sandwich", f64::from(fails), 0.0, "bracket |A| <= h(A) <= h({0}) |A| on 1000 random sets");

    let chi = HomogeneousMeasure::translates_of(&group, &one).context("counting measure")?;
    let g_fwd = SparseGenerator::build(&spaces.fwd, delta);
    let g_dual = SparseGenerator::build(spaces.dual(), delta);
    for &t in &cfg.duality_times {
        let d = duality_residual(&chi, &nu_dag, (&g_fwd, &spaces.fwd), (&g_dual, spaces.dual()), t)
            .context(format!("duality at t = {t}"))?;
        rep.le(&format!("duality_residual/t={t}"), d.residual, 10.0 * d.truncation_bound + 1e-12, "against ten times the truncated-mass bound");
    }

    let prop = h_proportionality(&spaces.fwd, &spec.h_tilde, &nu_dag, &spec.nu_tilde);
    rep.info("h_proportionality", prop.max_relative <= 0.02, prop.max_relative, 0.02, format!("weighted deviation {}", prop.weighted_relative));

    let fails = pathwise_duality_failures(ctx, 200)?;
    rep.le("pathwise_duality", f64::from(fails), 0.0, "indicator identity on 200 sampled realizations");

    let failed = rep.0.iter().filter(|p| !p.passed && !p.informational).count();
    Ok((
        json!({
            "delta": delta,
            "caps": ctx.setup.caps,
            "r_hat": spec.r_hat,
            "all_passed": failed == 0,
            "failed": failed,
            "properties": rep.0,
        }),
        failed,
    ))
}

fn pathwise_duality_failures(ctx: &Ctx, n: u64) -> Result<u32, CliError> {
    let group = ctx.group().clone();
    let key = StreamKey::root(ctx.seed).child("check/pathwise");
    let fails: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|i| {
            let k = key.index(i);
            let mut rng = k.child("sets").rng();
            let t = rng.gen_range(0.1..3.0);
            let g = GraphicalRealization::sample(&ctx.setup.kernel, ctx.cfg.delta, (0.0, t), k.seed())?;
            let a: ConfigSet = (0..rng.gen_range(1..4)).map(|_| group.random_element(&mut rng, 4)).collect();
            let b: ConfigSet = (0..rng.gen_range(1..4)).map(|_| group.random_element(&mut rng, 4)).collect();
            let fwd = g.forward_set(&a, 0.0, t)?.intersects(&b);
            let back = a.intersects(&g.dual_set(&b, t, t)?);
            Ok(fwd != back)
        })
        .collect::<subcrit_cp_core::Result<Vec<bool>>>()
        .context("pathwise duality")?;
    Ok(fails.into_iter().filter(|&f| f).count() as u32)
}
