//! Experiment dispatch: config in, records and an exit code out.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{ExperimentConfig, ExperimentKind};
use super::records::{ExperimentRecord, GridPoint, RecordFactory};
use crate::entropy::{
    self, enumerate, entropy_report, resampling_pathwise_check, variational_random_suite, EntropyError, ExactSystem,
};
use crate::estimators::{
    self, box_sandwich, box_tail, default_t_grid, direction_fan, estimate_mu, kesten_decay_fit, lower_tail_fit,
    nonrandom_fluctuation_fit, norm_equivalence_report, pivotal_samples, shape_deviation, tau_samples,
    z_moment_report, EstimatorError, RateFit, SampleSpec,
};
use crate::lattice::Site;
use crate::passage::PassageError;
use crate::stats::{mean_estimate, Z95};
use crate::weights::{stream_seed, validate_assumptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ASSUMPTIONS: i32 = 2;
pub const EXIT_UNCERTIFIED: i32 = 3;

pub const WORKERS_ENV: &str = "FPP_WORKERS";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Skip the (A1)/(A2) gate.
    pub force: bool,
    /// Overrides the config's worker count.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub records: Vec<ExperimentRecord>,
    pub diagnostics: Vec<String>,
}

impl RunOutcome {
    fn fail(code: i32, msg: String) -> Self {
        RunOutcome {
            exit_code: code,
            records: Vec::new(),
            diagnostics: vec![msg],
        }
    }
}

/// Worker count from `FPP_WORKERS` if set and valid, else the config value.
pub fn workers_from_env(config_workers: usize, env: Option<&str>) -> usize {
    env.and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|w| *w >= 1)
        .unwrap_or(config_workers)
}

/// Parse, validate and check assumptions without running anything.
pub fn validate_text(text: &str, force: bool) -> (i32, Vec<String>) {
    let cfg = match ExperimentConfig::parse(text) {
        Ok(c) => c,
        Err(e) => return (EXIT_USAGE, vec![e.to_string()]),
    };
    if let Err(e) = cfg.validate() {
        return (EXIT_USAGE, vec![e.to_string()]);
    }
    match validate_assumptions(&cfg.distribution, cfg.dimension, cfg.pc) {
        Err(e) => (EXIT_USAGE, vec![e.to_string()]),
        Ok(rep) if !rep.ok() && !force => (EXIT_ASSUMPTIONS, rep.diagnostics()),
        Ok(rep) => (EXIT_OK, rep.diagnostics()),
    }
}

pub fn run_text(text: &str, opts: &RunOptions) -> RunOutcome {
    match ExperimentConfig::parse(text) {
        Ok(cfg) => run(&cfg, opts),
        Err(e) => RunOutcome::fail(EXIT_USAGE, e.to_string()),
    }
}

#[derive(Debug)]
enum RunError {
    Usage(String),
    Uncertified(String),
}

impl From<EstimatorError> for RunError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::Passage(PassageError::Uncertified(m)) => RunError::Uncertified(m),
            EstimatorError::Passage(PassageError::Budget(b)) => RunError::Uncertified(format!("search budget {b} exhausted")),
            other => RunError::Usage(other.to_string()),
        }
    }
}

impl From<EntropyError> for RunError {
    fn from(e: EntropyError) -> Self {
        RunError::Usage(e.to_string())
    }
}

pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> RunOutcome {
    if let Err(e) = cfg.validate() {
        return RunOutcome::fail(EXIT_USAGE, e.to_string());
    }
    let mut diagnostics = Vec::new();
    match validate_assumptions(&cfg.distribution, cfg.dimension, cfg.pc) {
        Err(e) => return RunOutcome::fail(EXIT_USAGE, e.to_string()),
        Ok(rep) => {
            let notes = rep.diagnostics();
            if !rep.ok() && !opts.force {
                return RunOutcome {
                    exit_code: EXIT_ASSUMPTIONS,
                    records: Vec::new(),
                    diagnostics: notes,
                };
            }
            diagnostics.extend(notes);
        }
    }
    let workers = opts.workers.unwrap_or(cfg.workers).max(1);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(p) => p,
        Err(e) => return RunOutcome::fail(EXIT_USAGE, e.to_string()),
    };
    let factory = RecordFactory {
        experiment: cfg.name.to_string(),
        config_hash: cfg.hash(),
        d: cfg.dimension,
        dist: cfg.distribution.to_string(),
        seed: cfg.seed,
    };
    let result = pool.install(|| dispatch(cfg, &factory));
    match result {
        Ok(mut records) => {
            for r in records.iter_mut() {
                r.stamp();
            }
            let uncertified = records.iter().filter(|r| !r.certified).count();
            let exit_code = if uncertified > 0 {
                diagnostics.push(format!("{uncertified} records depend on uncertified passage times"));
                EXIT_UNCERTIFIED
            } else {
                EXIT_OK
            };
            RunOutcome {
                exit_code,
                records,
                diagnostics,
            }
        }
        Err(RunError::Usage(m)) => RunOutcome::fail(EXIT_USAGE, m),
        Err(RunError::Uncertified(m)) => RunOutcome::fail(EXIT_UNCERTIFIED, m),
    }
}

fn spec_for(cfg: &ExperimentConfig, label: &str) -> SampleSpec {
    let mut s = SampleSpec::new(cfg.distribution.clone(), cfg.dimension, cfg.seed, label);
    s.certify = cfg.certify();
    s.saw_budget = cfg.saw_budget;
    s
}

fn dispatch(cfg: &ExperimentConfig, f: &RecordFactory) -> Result<Vec<ExperimentRecord>, RunError> {
    let label = cfg.name.as_str();
    let spec = spec_for(cfg, label);
    match cfg.name {
        ExperimentKind::TauSample => tau_sample(cfg, &spec, f),
        ExperimentKind::Mu => match &cfg.direction {
            Some(x) => {
                let est = estimate_mu(&spec, x, &cfg.n_grid, cfg.samples)?;
                Ok(mu_records(f, &est, false))
            }
            None => mu_fan(cfg, &spec, f),
        },
        ExperimentKind::Fluctuation => fluctuation(cfg, &spec, f),
        ExperimentKind::LowerTail => lower_tail(cfg, &spec, f),
        ExperimentKind::Shape => shape(cfg, f),
        ExperimentKind::EntropyExact => entropy_exact(cfg, f),
        ExperimentKind::PivotalStats => pivotal_stats(cfg, &spec, f),
        ExperimentKind::Kesten => kesten(cfg, &spec, f),
        ExperimentKind::BoxSandwich => sandwich(cfg, &spec, f),
        ExperimentKind::ZMoments => Ok(z_moments(cfg, f)),
    }
}

fn tau_sample(cfg: &ExperimentConfig, spec: &SampleSpec, f: &RecordFactory) -> Result<Vec<ExperimentRecord>, RunError> {
    let x = cfg.direction.as_ref().expect("validated");
    let raw = tau_samples(spec, x, &cfg.n_grid, cfg.samples)?;
    let mut out = Vec::new();
    for (j, &n) in cfg.n_grid.iter().enumerate() {
        let bad = raw.iter().any(|r| !r[j].1);
        let vals: Vec<f64> = raw.iter().filter(|r| r[j].1).map(|r| r[j].0).collect();
        let m = mean_estimate(&vals);
        out.push(
            f.record(GridPoint::n(n), "mean_tau", m.mean)
                .with_stderr(m.stderr)
                .with_ci(m.ci95())
                .aux("samples", vals.len())
                .uncertified_if(bad),
        );
        out.push(f.record(GridPoint::n(n), "variance_tau", m.variance).uncertified_if(bad));
    }
    for (k, row) in raw.iter().enumerate() {
        for (j, &n) in cfg.n_grid.iter().enumerate() {
            let mut g = GridPoint::n(n);
            g.index = Some(k as u64);
            out.push(f.record(g, "tau", row[j].0).uncertified_if(!row[j].1));
        }
    }
    Ok(out)
}

fn mu_records(f: &RecordFactory, est: &estimators::TimeConstantEstimate, per_direction: bool) -> Vec<ExperimentRecord> {
    let mut out = Vec::new();
    if !per_direction {
        for g in &est.per_n {
            out.push(
                f.record(GridPoint::n(g.n), "mean_tau_over_n", g.mean)
                    .with_stderr(g.stderr)
                    .aux_f64("mean_tau", g.mean_time)
                    .aux_f64("tau_stderr", g.time_stderr)
                    .aux_f64("variance", g.variance)
                    .aux("samples", g.samples)
                    .aux("uncertified", g.uncertified)
                    .uncertified_if(g.uncertified > 0),
            );
        }
    }
    let (unit, unit_ci) = est.unit_mu();
    out.push(
        f.record(GridPoint::direction(est.direction.clone()), "mu", est.mu_point)
            .with_stderr(est.mu_point_stderr)
            .with_ci((est.mu_point - Z95 * est.mu_point_stderr, est.mu_point + Z95 * est.mu_point_stderr))
            .aux_f64("mu_upper", est.mu_upper)
            .aux_f64("mu_lower", est.mu_lower())
            .aux_f64("mu_unit", unit)
            .aux("mu_unit_ci", vec![unit_ci.0, unit_ci.1])
            .aux("monotonicity_violations", est.monotonicity_violations)
            .aux("monotonicity_flagged", est.monotonicity_flagged)
            .aux("variance_decreasing", est.variance_decreasing)
            .uncertified_if(!est.certified),
    );
    out
}

fn mu_fan(cfg: &ExperimentConfig, spec: &SampleSpec, f: &RecordFactory) -> Result<Vec<ExperimentRecord>, RunError> {
    let fan = direction_fan(cfg.dimension, cfg.fan)?;
    let mut ests = Vec::new();
    let mut out = Vec::new();
    for x in &fan {
        let est = estimate_mu(spec, x, &cfg.n_grid, cfg.samples)?;
        out.extend(mu_records(f, &est, true));
        ests.push(est);
    }
    let certified = ests.iter().all(|e| e.certified);
    let ne = norm_equivalence_report(&ests)?;
    out.push(
        f.record(GridPoint::none(), "c9", ne.c9)
            .aux_f64("c9_conservative", ne.c9_conservative)
            .aux("flagged", ne.flagged.iter().map(|s| s.to_string()).collect::<Vec<_>>())
            .aux("ok", ne.ok())
            .uncertified_if(!certified),
    );
    Ok(out)
}

fn fluctuation(cfg: &ExperimentConfig, spec: &SampleSpec, f: &RecordFactory) -> Result<Vec<ExperimentRecord>, RunError> {
    let x = cfg.direction.as_ref().expect("validated");
    let est = estimate_mu(spec, x, &cfg.n_grid, cfg.samples)?;
    let bad = !est.certified;
    let mut out = mu_records(f, &est, false);
    let fit = match nonrandom_fluctuation_fit(&est) {
        Ok(fit) => fit,
        Err(EstimatorError::Fit(e)) => {
            // too few positive gaps to fit; keep the estimate, report why
            out.push(
                f.record(GridPoint::none(), "exponent", f64::NAN)
                    .aux("error", e.to_string())
                    .uncertified_if(bad),
            );
            return Ok(out);
        }
        Err(e) => return Err(e.into()),
    };
    for ((n, gap), (_, reference)) in fit.gaps.iter().zip(&fit.reference) {
        out.push(
            f.record(GridPoint::n(*n), "gap", *gap)
                .aux_f64("reference", *reference)
                .uncertified_if(bad),
        );
    }
    let mut r = match &fit.fit {
        Some(ef) => f
            .record(GridPoint::none(), "exponent", ef.slope)
            .with_ci(ef.slope_ci)
            .aux_f64("r_squared", ef.r_squared)
            .aux_f64("intercept", ef.intercept)
            .aux("points", ef.x.len()),
        None => f.record(GridPoint::none(), "exponent", f64::NAN),
    };
    r = r
        .aux("degenerate", fit.degenerate)
        .aux("sublinear", fit.sublinear)
        .aux_f64("predicted_exponent", fit.predicted_exponent)
        .aux_f64("mu_lower", fit.mu_lower)
        .aux("lower_bound_holds", fit.lower_bound_holds)
        .uncertified_if(bad);
    out.push(r);
    Ok(out)
}

fn lower_tail(cfg: &ExperimentConfig, spec: &SampleSpec, f: &RecordFactory) -> Result<Vec<ExperimentRecord>, RunError> {
    let x = cfg.target.as_ref().expect("validated");
    let grid = if cfg.t_grid.is_empty() { default_t_grid() } else { cfg.t_grid.clone() };
    let fit = lower_tail_fit(spec, x, cfg.samples, &grid)?;
    let bad = fit.uncertified > 0;
    let mut out: Vec<ExperimentRecord> = fit
        .points
        .iter()
        .map(|p| {
            f.record(GridPoint::t(p.t), "tail_probability", p.p)
                .with_ci(p.ci)
                .aux("count", p.count)
                .aux("samples", fit.samples)
                .uncertified_if(bad)
        })
        .collect();
    out.push(
        f.record(GridPoint::none(), "mean_tau", fit.mean_time)
            .aux_f64("scale", fit.scale)
            .aux("uncertified", fit.uncertified)
            .uncertified_if(bad),
    );
    let r = match &fit.rate {
        RateFit::Infinite => f.record(GridPoint::none(), "c_hat", f64::INFINITY).aux("status", "infinite"),
        RateFit::Insufficient { points } => f
            .record(GridPoint::none(), "c_hat", f64::NAN)
            .aux("status", "insufficient")
            .aux("points", *points),
        RateFit::Fitted { c_hat, c_ci, fit } => f
            .record(GridPoint::none(), "c_hat", *c_hat)
            .with_ci(*c_ci)
            .aux("status", "fitted")
            .aux_f64("slope", fit.slope)
            .aux_f64("intercept", fit.intercept)
            .aux_f64("r_squared", fit.r_squared)
            .aux("points", fit.x.len()),
    };
    out.push(r.uncertified_if(bad));
    Ok(out)
}

fn shape(cfg: &ExperimentConfig, f: &RecordFactory) -> Result<Vec<ExperimentRecord>, RunError> {
    let fan_dirs = direction_fan(cfg.dimension, cfg.fan)?;
    let mu_spec = spec_for(cfg, "shape-mu");
    let mut fan = Vec::new();
    let mut out = Vec::new();
    let mut mu_certified = true;
    for x in &fan_dirs {
        let est = estimate_mu(&mu_spec, x, &cfg.n_grid, cfg.samples)?;
        mu_certified &= est.certified;
        out.extend(mu_records(f, &est, true));
        fan.push((x.clone(), est.unit_mu().0));
    }
    let spec = spec_for(cfg, "shape");
    let series = shape_deviation(&spec, &cfg.t_grid, &fan, cfg.samples)?;
    for s in series {
        let bad = s.uncertified > 0 || !mu_certified;
        for r in &s.radii {
            out.push(
                f.record(GridPoint::t(s.t).with_direction(r.direction.clone()), "radius", r.radius)
                    .aux_f64("angle", r.angle)
                    .aux_f64("exit_radius", r.exit_radius)
                    .aux_f64("reference", r.reference)
                    .uncertified_if(bad),
            );
        }
        out.push(
            f.record(GridPoint::t(s.t), "outer_excess", s.outer_excess)
                .with_stderr(s.outer_stderr)
                .aux_f64("envelope", s.outer_envelope)
                .aux("samples", s.samples)
                .uncertified_if(bad),
        );
        out.push(
            f.record(GridPoint::t(s.t), "inner_deficit", s.inner_deficit)
                .with_stderr(s.inner_stderr)
                .aux_f64("envelope", s.inner_envelope)
                .aux("samples", s.samples)
                .uncertified_if(bad),
        );
    }
    Ok(out)
}

/// `single-edge`, `square`, `grid:<k>` or `path:<len>`.
pub fn parse_system(name: &str, cfg: &ExperimentConfig) -> Result<ExactSystem, EntropyError> {
    let law = &cfg.distribution;
    let sys = match name.split_once(':') {
        None if name == "single-edge" => ExactSystem::single_edge(law)?,
        None if name == "square" => ExactSystem::square(law)?,
        Some(("grid", k)) => ExactSystem::grid(
            k.parse().map_err(|_| EntropyError::Invalid(format!("bad grid size `{k}`")))?,
            law,
        )?,
        Some(("path", k)) => ExactSystem::path(
            k.parse().map_err(|_| EntropyError::Invalid(format!("bad path length `{k}`")))?,
            law,
        )?,
        _ => return Err(EntropyError::Invalid(format!("unknown system `{name}`"))),
    };
    let lambdas = if cfg.lambda_grid.is_empty() {
        entropy::DEFAULT_LAMBDAS.to_vec()
    } else {
        cfg.lambda_grid.clone()
    };
    Ok(sys.with_lambdas(lambdas).with_cap(cfg.cap))
}

fn entropy_exact(cfg: &ExperimentConfig, f: &RecordFactory) -> Result<Vec<ExperimentRecord>, RunError> {
    if cfg.dimension != 2 {
        return Err(RunError::Usage("entropy-exact systems live in dimension 2".into()));
    }
    let sys = parse_system(cfg.system.as_deref().expect("validated"), cfg)?;
    let table = enumerate(&sys)?;
    let mut out = Vec::new();
    let check = |g: GridPoint, name: &str, margin: f64, pass: bool| {
        f.record(g, &format!("check:{name}"), margin).aux("pass", pass)
    };
    for (li, &lambda) in sys.lambdas.clone().iter().enumerate() {
        let g = || GridPoint::lambda(lambda);
        let rep = entropy_report(&sys, &table, lambda)?;
        out.push(f.record(g(), "ent", rep.ent));
        out.push(f.record(g(), "edge_sum", rep.edge_sum));
        out.push(f.record(g(), "box_sum", rep.box_sum));
        for b in &rep.blm {
            let mut gp = g();
            gp.index = Some(b.box_index as u64);
            out.push(
                f.record(gp, "resampling_rhs", b.rhs)
                    .aux_f64("lhs", b.lhs)
                    .aux_f64("min_pointwise_slack", b.min_pointwise_slack),
            );
        }
        out.push(f.record(g(), "weighted_pivotal", rep.weighted_pivotal));
        out.push(
            f.record(g(), "pivotal_ratio", rep.pivotal_ratio.unwrap_or(f64::NAN))
                .aux("defined", rep.pivotal_ratio.is_some())
                .aux_f64("chain_constant", rep.chain_constant),
        );
        out.push(f.record(g(), "growth_ratio", rep.growth_ratio.unwrap_or(f64::NAN)));
        for c in &rep.checks {
            out.push(check(g(), &c.name, c.margin, c.pass));
        }
        let x: Vec<f64> = table.passage_time.iter().map(|t| (lambda * t).exp()).collect();
        let seed = stream_seed(cfg.seed, "entropy-exact-variational", li as u64);
        let vr = variational_random_suite(&table.prob, &x, 50, 2.0, seed)?;
        let margin = vr.iter().map(|r| r.rhs - r.lhs).fold(f64::INFINITY, f64::min);
        let witness = vr.first().and_then(|r| r.witness_gap).unwrap_or(0.0);
        out.push(check(g(), "variational", margin, vr.iter().all(|r| r.holds)).aux_f64("witness_gap", witness));
        let all = rep.all_pass() && vr.iter().all(|r| r.holds);
        out.push(f.record(g(), "all_checks", if all { 1.0 } else { 0.0 }).aux("pass", all));
    }
    for i in 0..sys.boxes().len() {
        match resampling_pathwise_check(&sys, &table, i) {
            Ok(p) => {
                let mut gp = GridPoint::index(i as u64);
                gp.index = Some(i as u64);
                out.push(
                    check(gp, "pathwise", p.max_increase, p.pass())
                        .aux("pairs", p.pairs)
                        .aux("avoidance_violations", p.avoidance_violations)
                        .aux("pivotal_hypothesis_violations", p.pivotal_hypothesis_violations)
                        .aux("detour_violations", p.detour_violations),
                );
            }
            Err(EntropyError::Cap { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    out.push(
        f.record(GridPoint::none(), "configurations", table.len() as f64)
            .aux("edges", sys.edges().len())
            .aux("boxes", sys.boxes().len()),
    );
    Ok(out)
}

fn pivotal_stats(cfg: &ExperimentConfig, spec: &SampleSpec, f: &RecordFactory) -> Result<Vec<ExperimentRecord>, RunError> {
    let x = cfg.target.as_ref().expect("validated");
    let samples = pivotal_samples(spec, x, cfg.samples)?;
    let bad = samples.iter().any(|s| !s.certified);
    let pairs: Vec<(f64, u64)> = samples.iter().map(|s| (s.passage_time, s.pivotal_count)).collect();
    let counts: Vec<f64> = samples.iter().map(|s| s.pivotal_count as f64).collect();
    let times: Vec<f64> = samples.iter().map(|s| s.passage_time).collect();
    let mc = mean_estimate(&counts);
    let mt = mean_estimate(&times);
    let phi = entropy::phi_moment_estimate(&pairs, cfg.c.expect("validated"), cfg.alpha.expect("validated"))?;
    let mut out = vec![
        f.record(GridPoint::none(), "mean_pivotal", mc.mean)
            .with_stderr(mc.stderr)
            .uncertified_if(bad),
        f.record(GridPoint::none(), "mean_tau", mt.mean)
            .with_stderr(mt.stderr)
            .uncertified_if(bad),
        f.record(GridPoint::none(), "phi_moment", phi.mean)
            .with_stderr(phi.stderr)
            .with_ci(phi.ci)
            .aux_f64("c", phi.c)
            .aux_f64("alpha", phi.alpha)
            .uncertified_if(bad),
    ];
    for p in &phi.tail {
        out.push(
            f.record(GridPoint::n(p.n), "phi_tail", p.p)
                .with_ci(p.ci)
                .uncertified_if(bad),
        );
    }
    Ok(out)
}

fn kesten(cfg: &ExperimentConfig, spec: &SampleSpec, f: &RecordFactory) -> Result<Vec<ExperimentRecord>, RunError> {
    let m_grid: Vec<usize> = cfg.m_grid.iter().map(|&m| m as usize).collect();
    let fit = kesten_decay_fit(spec, cfg.a.expect("validated"), &m_grid, cfg.samples, cfg.target.as_ref())?;
    let mut out = Vec::new();
    for (p, c) in fit.points.iter().zip(&fit.cumulative) {
        out.push(
            f.record(GridPoint::m(p.m as u64), "p_exact", p.p)
                .with_ci(p.ci)
                .aux("count", p.count),
        );
        out.push(
            f.record(GridPoint::m(c.m as u64), "p_cumulative", c.p)
                .with_ci(c.ci)
                .aux("count", c.count),
        );
    }
    let r = match &fit.fit {
        Some(ef) => f
            .record(GridPoint::none(), "slope", ef.slope)
            .with_ci(ef.slope_ci)
            .aux_f64("r_squared", ef.r_squared)
            .aux("points", ef.x.len()),
        None => f
            .record(GridPoint::none(), "slope", f64::NAN)
            .aux("error", fit.fit_error.clone().unwrap_or_default()),
    };
    out.push(r.aux(
        "truncated_at",
        fit.truncated_at.map(|m| Value::from(m)).unwrap_or(Value::Null),
    ));
    if let Some(g) = &fit.geodesic {
        out.push(
            f.record(GridPoint::direction(g.target.clone()), "geodesic_fraction", g.fraction)
                .with_ci(g.ci)
                .aux("successes", g.successes),
        );
    }
    Ok(out)
}

fn sandwich(cfg: &ExperimentConfig, spec: &SampleSpec, f: &RecordFactory) -> Result<Vec<ExperimentRecord>, RunError> {
    use rayon::prelude::*;
    let xi: &Site = cfg.direction.as_ref().expect("validated");
    let c7 = cfg.c7.expect("validated");
    let mut out = Vec::new();
    for &m in &cfg.m_grid {
        let rows: Vec<estimators::Sandwich> = (0..cfg.samples as u64)
            .into_par_iter()
            .map(|k| box_sandwich(&spec.field(k), m, c7, xi, &spec.certify))
            .collect::<Result<_, _>>()?;
        let bad = rows.iter().any(|r| !r.certified);
        let lower = rows.iter().filter(|r| !r.lower_holds()).count();
        let upper = rows.iter().filter(|r| !r.upper_holds()).count();
        let triples: Vec<(f64, f64, bool)> = rows.iter().map(|r| (r.tau_m, r.tau, r.certified)).collect();
        let tail = box_tail(m, &triples);
        let j: Vec<f64> = rows.iter().map(|r| r.j_origin).collect();
        let jm = mean_estimate(&j);
        let g = || GridPoint::m(m).with_direction(xi.clone());
        out.push(f.record(g(), "lower_violations", lower as f64).uncertified_if(bad));
        out.push(f.record(g(), "upper_violations", upper as f64).uncertified_if(bad));
        out.push(
            f.record(g(), "mean_tau_m", tail.mean)
                .with_stderr(tail.stderr)
                .uncertified_if(bad),
        );
        out.push(f.record(g(), "mean_j", jm.mean).with_stderr(jm.stderr).uncertified_if(bad));
        out.push(
            f.record(g(), "tail_probability", tail.p)
                .with_ci(tail.ci)
                .aux_f64("scale", tail.scale)
                .aux("count", tail.count)
                .uncertified_if(bad),
        );
    }
    Ok(out)
}

fn z_moments(cfg: &ExperimentConfig, f: &RecordFactory) -> Vec<ExperimentRecord> {
    let z = z_moment_report(&cfg.distribution, cfg.dimension);
    let order = |o: Option<f64>| o.unwrap_or(f64::INFINITY);
    let mut out = vec![
        f.record(GridPoint::none(), "z_moment_order", order(z.z_moment_order)),
        f.record(GridPoint::none(), "delta_max", order(z.delta_max)),
        f.record(GridPoint::none(), "inner_hypothesis", if z.inner_hypothesis { 1.0 } else { 0.0 }),
    ];
    if let Ok(rep) = validate_assumptions(&cfg.distribution, cfg.dimension, cfg.pc) {
        out.push(f.record(GridPoint::none(), "edge_moment_order", order(rep.edge_moment_order)));
        out.push(f.record(GridPoint::none(), "y_moment_order", order(rep.y_moment_order)));
        out.push(f.record(GridPoint::none(), "a1", if rep.a1_holds { 1.0 } else { 0.0 }));
        out.push(
            f.record(GridPoint::none(), "a2", if rep.a2_holds { 1.0 } else { 0.0 })
                .aux_f64("p0", rep.p0)
                .aux_f64("pc", rep.pc.value)
                .aux("pc_provenance", rep.pc.provenance),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::Distribution;

    fn cfg(kind: ExperimentKind, dist: Distribution) -> ExperimentConfig {
        ExperimentConfig::new(kind, 2, 11, dist)
    }

    #[test]
    fn constant_mu_single_summary() {
        let mut c = cfg(ExperimentKind::Mu, Distribution::Constant { value: 1.0 });
        c.n_grid = vec![1, 2, 4];
        c.samples = 4;
        c.direction = Some(Site::axis(2, 0, 1));
        let out = run(&c, &RunOptions::default());
        assert_eq!(out.exit_code, EXIT_OK, "{:?}", out.diagnostics);
        let mu: Vec<_> = out.records.iter().filter(|r| r.statistic == "mu").collect();
        assert_eq!(mu.len(), 1);
        assert_eq!((mu[0].value, mu[0].stderr), (1.0, Some(0.0)));
        let hashes: std::collections::BTreeSet<_> = out.records.iter().map(|r| r.config_hash.clone()).collect();
        assert_eq!(hashes.len(), 1);
    }

    #[test]
    fn assumption_gate() {
        let mut c = cfg(ExperimentKind::ZMoments, Distribution::Pareto { alpha: 0.5, scale: 1.0 });
        c.samples = 0;
        let out = run(&c, &RunOptions::default());
        assert_eq!(out.exit_code, EXIT_ASSUMPTIONS);
        assert!(out.records.is_empty());
        let out = run(
            &c,
            &RunOptions {
                force: true,
                workers: None,
            },
        );
        assert_eq!(out.exit_code, EXIT_OK);
        assert!(out.records.iter().any(|r| r.statistic == "a1" && r.value == 0.0));
    }

    #[test]
    fn uncertified_exit_code() {
        let mut c = cfg(ExperimentKind::TauSample, Distribution::AtomMixture { p0: 0.45, a: 1.0 });
        c.n_grid = vec![20];
        c.samples = 3;
        c.direction = Some(Site::axis(2, 0, 1));
        c.max_radius = 11;
        c.initial_margin = Some(1);
        let out = run(&c, &RunOptions::default());
        assert_eq!(out.exit_code, EXIT_UNCERTIFIED);
        assert!(out.records.iter().any(|r| !r.certified));
    }

    #[test]
    fn workers_env() {
        assert_eq!(workers_from_env(2, None), 2);
        assert_eq!(workers_from_env(2, Some("4")), 4);
        assert_eq!(workers_from_env(2, Some("zero")), 2);
        assert_eq!(workers_from_env(2, Some("0")), 2);
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run_text("garbage", &RunOptions::default()).exit_code, EXIT_USAGE);
        let (code, _) = validate_text("[experiment]\nname = mu\n", false);
        assert_eq!(code, EXIT_USAGE);
    }
}
