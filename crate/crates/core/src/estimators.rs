//! Monte Carlo estimators on the full lattice.
//!
//! Sample `k` of any estimator uses the weight field seeded by
//! `stream_seed(master_seed, label, k)`, so results depend only on the
//! `SampleSpec` and never on scheduling. Samples run through rayon with
//! ordered collection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{macro_box, LatticeError, Site, Window};
use crate::passage::{
    box_diameter_time, box_to_box_passage, certified_pair, dijkstra, exact_passage_time, geodesic_dag,
    pivotal_edges, saw_minima, CertifyOptions, PassageError, PassageField, DEFAULT_SAW_BUDGET,
};
use crate::graph::TieRule;
use crate::stats::{mean_estimate, weighted_linear_fit, wilson_interval, FitError, LinearFit, Z95};
use crate::weights::{stream_seed, Distribution, EdgeWeights, WeightField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error(transparent)]
    Passage(#[from] PassageError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// What every estimator needs to draw its weight fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub distribution: Distribution,
    pub dimension: usize,
    pub master_seed: u64,
    pub label: String,
    pub certify: CertifyOptions,
    pub saw_budget: u64,
}

impl SampleSpec {
    pub fn new(distribution: Distribution, dimension: usize, master_seed: u64, label: &str) -> Self {
        SampleSpec {
            distribution,
            dimension,
            master_seed,
            label: label.to_string(),
            certify: CertifyOptions::default(),
            saw_budget: DEFAULT_SAW_BUDGET,
        }
    }

    pub fn field(&self, index: u64) -> WeightField {
        WeightField::new(self.distribution.clone(), stream_seed(self.master_seed, &self.label, index))
    }

    fn origin(&self) -> Site {
        Site::origin(self.dimension)
    }

    fn check_site(&self, s: &Site) -> Result<(), EstimatorError> {
        if s.dim() != self.dimension {
            return Err(EstimatorError::Invalid(format!("{s} is not in dimension {}", self.dimension)));
        }
        Ok(())
    }
}

/// Slope of a log-scale regression with its interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub slope: f64,
    pub slope_ci: (f64, f64),
    pub intercept: f64,
    pub r_squared: f64,
}

pub const MIN_FIT_POINTS: usize = 4;

impl ExponentFit {
    fn fit(x: Vec<f64>, y: Vec<f64>, w: &[f64]) -> Result<Self, FitError> {
        let LinearFit {
            slope,
            intercept,
            slope_ci,
            r_squared,
            ..
        } = weighted_linear_fit(&x, &y, w, MIN_FIT_POINTS)?;
        Ok(ExponentFit {
            x,
            y,
            slope,
            slope_ci,
            intercept,
            r_squared,
        })
    }
}

/// Inverse variance of `ln p̂` for a binomial proportion, kept finite at the ends.
fn log_prop_weight(p: f64, n: usize) -> f64 {
    let n = n as f64;
    n * p / (1.0 - p).max(1.0 / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMean {
    pub n: u64,
    /// Mean of `τ(0, n x) / n` over certified samples.
    pub mean: f64,
    pub stderr: f64,
    pub variance: f64,
    /// Mean of `τ(0, n x)` itself.
    pub mean_time: f64,
    pub time_stderr: f64,
    pub samples: usize,
    pub uncertified: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeConstantEstimate {
    pub direction: Site,
    pub per_n: Vec<GridMean>,
    pub mu_upper: f64,
    pub mu_point: f64,
    pub mu_point_stderr: f64,
    /// Steps where the mean rises by more than 3 pooled stderr.
    pub monotonicity_violations: usize,
    pub monotonicity_flagged: bool,
    /// Whether the per-n variance of `τ/n` decreases along the grid.
    pub variance_decreasing: bool,
    pub certified: bool,
}

impl TimeConstantEstimate {
    /// Index of the grid point that attains `mu_upper`.
    fn upper_index(&self) -> usize {
        let mut best = 0;
        for (i, g) in self.per_n.iter().enumerate() {
            let a = g.mean + Z95 * g.stderr;
            let b = self.per_n[best].mean + Z95 * self.per_n[best].stderr;
            if a < b {
                best = i;
            }
        }
        best
    }

    /// `mu_upper` minus the width of the interval it came from.
    pub fn mu_lower(&self) -> f64 {
        let g = &self.per_n[self.upper_index()];
        self.mu_upper - 2.0 * Z95 * g.stderr
    }

    /// `μ̂` per unit of `|x|_1`, with a 95% interval.
    pub fn unit_mu(&self) -> (f64, (f64, f64)) {
        let l1 = self.direction.l1_norm() as f64;
        (
            self.mu_point / l1,
            (
                (self.mu_point - Z95 * self.mu_point_stderr) / l1,
                (self.mu_point + Z95 * self.mu_point_stderr) / l1,
            ),
        )
    }
}

/// Raw certified passage times `τ(0, n x)` for each sample and each `n`.
pub fn tau_samples(spec: &SampleSpec, direction: &Site, n_grid: &[u64], samples: usize) -> Result<Vec<Vec<(f64, bool)>>, EstimatorError> {
    spec.check_site(direction)?;
    let origin = spec.origin();
    (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let field = spec.field(k);
            n_grid
                .iter()
                .map(|&n| {
                    let pt = exact_passage_time(&field, &origin, &direction.scale(n as i64), &spec.certify)?;
                    Ok((pt.value, pt.certified))
                })
                .collect::<Result<Vec<_>, EstimatorError>>()
        })
        .collect()
}

pub fn estimate_mu(spec: &SampleSpec, direction: &Site, n_grid: &[u64], samples: usize) -> Result<TimeConstantEstimate, EstimatorError> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] == 0 {
        return Err(EstimatorError::Invalid("n grid must be positive and increasing".into()));
    }
    if samples < 2 {
        return Err(EstimatorError::Invalid("need at least 2 samples".into()));
    }
    if direction.l1_norm() == 0 {
        return Err(EstimatorError::Invalid("direction must be nonzero".into()));
    }
    let raw = tau_samples(spec, direction, n_grid, samples)?;
    let per_n: Vec<GridMean> = n_grid
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let times: Vec<f64> = raw.iter().filter(|r| r[j].1).map(|r| r[j].0).collect();
            let scaled: Vec<f64> = times.iter().map(|t| t / n as f64).collect();
            let m = mean_estimate(&scaled);
            let mt = mean_estimate(&times);
            GridMean {
                n,
                mean: m.mean,
                stderr: m.stderr,
                variance: m.variance,
                mean_time: mt.mean,
                time_stderr: mt.stderr,
                samples: times.len(),
                uncertified: samples - times.len(),
            }
        })
        .collect();
    let mu_upper = per_n
        .iter()
        .map(|g| g.mean + Z95 * g.stderr)
        .fold(f64::INFINITY, f64::min);
    let last = per_n.last().expect("nonempty grid");
    let violations = per_n
        .windows(2)
        .filter(|w| w[1].mean > w[0].mean + 3.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt())
        .count();
    let steps = per_n.len().saturating_sub(1);
    Ok(TimeConstantEstimate {
        direction: direction.clone(),
        mu_upper,
        mu_point: last.mean,
        mu_point_stderr: last.stderr,
        monotonicity_violations: violations,
        monotonicity_flagged: violations as f64 > 0.05 * steps as f64,
        variance_decreasing: per_n.windows(2).all(|w| w[1].variance <= w[0].variance),
        certified: per_n.iter().all(|g| g.uncertified == 0),
        per_n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationFit {
    /// `(n, mean T_n - n μ̂_upper)` for every grid point.
    pub gaps: Vec<(u64, f64)>,
    /// `ln gap` against `ln n` over the positive gaps.
    pub fit: Option<ExponentFit>,
    pub degenerate: bool,
    /// Upper end of the slope interval is below 1.
    pub sublinear: bool,
    pub predicted_exponent: f64,
    /// `(n, sqrt(n ln n))` reference curve.
    pub reference: Vec<(u64, f64)>,
    pub mu_lower: f64,
    /// `mean T_n >= n μ̂_lower` at every grid point.
    pub lower_bound_holds: bool,
}

pub fn nonrandom_fluctuation_fit(est: &TimeConstantEstimate) -> Result<FluctuationFit, EstimatorError> {
    let mu = est.mu_upper;
    let gaps: Vec<(u64, f64)> = est.per_n.iter().map(|g| (g.n, g.mean_time - g.n as f64 * mu)).collect();
    let mu_lower = est.mu_lower();
    let lower_bound_holds = est.per_n.iter().all(|g| g.mean_time >= g.n as f64 * mu_lower - 1e-9 * g.mean_time.abs());
    let reference = est
        .per_n
        .iter()
        .map(|g| (g.n, (g.n as f64 * (g.n as f64).ln()).sqrt()))
        .collect();
    let positive: Vec<(usize, f64)> = gaps
        .iter()
        .enumerate()
        .filter(|(_, (_, gap))| *gap > 0.0)
        .map(|(i, (_, gap))| (i, *gap))
        .collect();
    if positive.is_empty() {
        return Ok(FluctuationFit {
            gaps,
            fit: None,
            degenerate: true,
            sublinear: false,
            predicted_exponent: 0.5,
            reference,
            mu_lower,
            lower_bound_holds,
        });
    }
    let x: Vec<f64> = positive.iter().map(|&(i, _)| (est.per_n[i].n as f64).ln()).collect();
    let y: Vec<f64> = positive.iter().map(|&(_, g)| g.ln()).collect();
    let w: Vec<f64> = positive
        .iter()
        .map(|&(i, g)| {
            let se = est.per_n[i].time_stderr;
            if se > 0.0 {
                (g / se).powi(2)
            } else {
                1.0
            }
        })
        .collect();
    let fit = ExponentFit::fit(x, y, &w)?;
    Ok(FluctuationFit {
        gaps,
        sublinear: fit.slope_ci.1 < 1.0,
        fit: Some(fit),
        degenerate: false,
        predicted_exponent: 0.5,
        reference,
        mu_lower,
        lower_bound_holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPointEstimate {
    pub t: f64,
    pub count: usize,
    pub p: f64,
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RateFit {
    /// No sample fell below the threshold at any `t > 0`.
    Infinite,
    /// Fewer than four positive tail points.
    Insufficient { points: usize },
    Fitted {
        c_hat: f64,
        c_ci: (f64, f64),
        fit: ExponentFit,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub target: Site,
    pub samples: usize,
    pub uncertified: usize,
    pub mean_time: f64,
    /// `sqrt(|x|_1)`.
    pub scale: f64,
    pub points: Vec<TailPointEstimate>,
    pub rate: RateFit,
}

pub const MIN_TAIL_SAMPLES: usize = 1000;

pub fn default_t_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// Empirical `P(T - T̄ <= -t sqrt(|x|_1))` and the Gaussian rate `ĉ` in
/// `ln P ≈ b - ĉ t²`.
pub fn lower_tail_fit(spec: &SampleSpec, target: &Site, samples: usize, t_grid: &[f64]) -> Result<TailFit, EstimatorError> {
    spec.check_site(target)?;
    if samples < MIN_TAIL_SAMPLES {
        return Err(EstimatorError::Invalid(format!("need at least {MIN_TAIL_SAMPLES} samples")));
    }
    let raw = tau_samples(spec, target, &[1], samples)?;
    let times: Vec<f64> = raw.iter().filter(|r| r[0].1).map(|r| r[0].0).collect();
    tail_from_times(target, &times, samples - times.len(), t_grid)
}

pub fn tail_from_times(target: &Site, times: &[f64], uncertified: usize, t_grid: &[f64]) -> Result<TailFit, EstimatorError> {
    let n = times.len();
    if n == 0 {
        return Err(EstimatorError::Invalid("no certified samples".into()));
    }
    let mean_time = mean_estimate(times).mean;
    let scale = (target.l1_norm() as f64).sqrt();
    let points: Vec<TailPointEstimate> = t_grid
        .iter()
        .map(|&t| {
            let count = times.iter().filter(|&&x| x - mean_time <= -t * scale).count();
            TailPointEstimate {
                t,
                count,
                p: count as f64 / n as f64,
                ci: wilson_interval(count, n, Z95),
            }
        })
        .collect();
    let rate = if points.iter().all(|p| p.t <= 0.0 || p.count == 0) {
        RateFit::Infinite
    } else {
        let pos: Vec<&TailPointEstimate> = points.iter().filter(|p| p.count > 0).collect();
        if pos.len() < MIN_FIT_POINTS {
            RateFit::Insufficient { points: pos.len() }
        } else {
            let x = pos.iter().map(|p| p.t * p.t).collect();
            let y = pos.iter().map(|p| p.p.ln()).collect();
            let w: Vec<f64> = pos.iter().map(|p| log_prop_weight(p.p, n)).collect();
            let fit = ExponentFit::fit(x, y, &w)?;
            RateFit::Fitted {
                c_hat: -fit.slope,
                c_ci: (-fit.slope_ci.1, -fit.slope_ci.0),
                fit,
            }
        }
    };
    Ok(TailFit {
        target: target.clone(),
        samples: n,
        uncertified,
        mean_time,
        scale,
        points,
        rate,
    })
}

/// Integer directions `(F-1-j, j, 0, ...)` for `j = 0..F`, plus the diagonal
/// when `F` is even.
pub fn direction_fan(d: usize, size: usize) -> Result<Vec<Site>, EstimatorError> {
    if size < 2 {
        return Err(EstimatorError::Invalid("fan needs at least 2 directions".into()));
    }
    let k = size as i64 - 1;
    let mut out: Vec<Site> = (0..=k)
        .map(|j| {
            let mut c = vec![0i64; d];
            c[0] = k - j;
            c[1] = j;
            Site::new(c)
        })
        .collect::<Result<_, _>>()?;
    if k % 2 == 1 {
        let mut c = vec![0i64; d];
        c[0] = 1;
        c[1] = 1;
        out.insert((k as usize + 1) / 2, Site::new(c)?);
    }
    Ok(out)
}

fn unit_vector(x: &Site) -> Vec<f64> {
    let l1 = x.l1_norm() as f64;
    x.coords().iter().map(|&c| c as f64 / l1).collect()
}

fn angle(xi: &[f64]) -> f64 {
    xi[1].atan2(xi[0])
}

/// Ray radii of the fattened ball `{τ <= t}` (closed unit cubes around
/// sites) along `xi`: the largest `k` with `k xi` in the ball, and the first
/// `k` at which the ray leaves it.
pub fn ray_radii(field: &PassageField, t: f64, xi: &[f64]) -> (f64, f64) {
    let window = field.window();
    let d = window.dim();
    let r = window.radius() as i64;
    let center = window.center().coords();
    let mut local = vec![0i64; d];
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    'sites: for (idx, &dist) in field.distances().iter().enumerate() {
        if !(dist <= t) {
            continue;
        }
        window.local_coords(idx, &mut local);
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        for a in 0..d {
            let z = (local[a] - r + center[a]) as f64;
            if xi[a] == 0.0 {
                if z.abs() > 0.5 {
                    continue 'sites;
                }
            } else {
                let (p, q) = ((z - 0.5) / xi[a], (z + 0.5) / xi[a]);
                lo = lo.max(p.min(q));
                hi = hi.min(p.max(q));
            }
        }
        if lo <= hi {
            intervals.push((lo, hi));
        }
    }
    let sup = intervals.iter().map(|iv| iv.1).fold(0.0, f64::max);
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cover = 0.0f64;
    for (lo, hi) in intervals {
        if lo > cover + 1e-12 {
            break;
        }
        cover = cover.max(hi);
    }
    (sup, cover)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionRadius {
    pub direction: Site,
    pub angle: f64,
    /// Sample mean of `sup{k : k ξ ∈ B(t)} / t`.
    pub radius: f64,
    /// Sample mean of the first-exit radius over `t`.
    pub exit_radius: f64,
    /// `1 / μ̂(ξ)`.
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeDeviation {
    pub t: f64,
    pub radii: Vec<DirectionRadius>,
    pub outer_excess: f64,
    pub outer_stderr: f64,
    pub inner_deficit: f64,
    pub inner_stderr: f64,
    pub samples: usize,
    pub uncertified: usize,
    /// `t^{-1/2} (ln t)^{1/2}`, for comparison only.
    pub outer_envelope: f64,
    /// `t^{-1/2} (ln t)^4`, for comparison only.
    pub inner_envelope: f64,
}

/// `fan[j] = (direction, μ̂(direction / |direction|_1))`.
pub fn shape_deviation(
    spec: &SampleSpec,
    t_grid: &[f64],
    fan: &[(Site, f64)],
    samples: usize,
) -> Result<Vec<ShapeDeviation>, EstimatorError> {
    if fan.is_empty() || t_grid.is_empty() {
        return Err(EstimatorError::Invalid("empty fan or t grid".into()));
    }
    if fan.iter().any(|(_, mu)| !(*mu > 0.0)) {
        return Err(EstimatorError::Invalid("fan time constants must be positive".into()));
    }
    for (x, _) in fan {
        spec.check_site(x)?;
    }
    let t_max = t_grid.iter().copied().fold(0.0, f64::max);
    let mu_min = fan.iter().map(|f| f.1).fold(f64::INFINITY, f64::min);
    let units: Vec<Vec<f64>> = fan.iter().map(|(x, _)| unit_vector(x)).collect();
    let origin = spec.origin();
    // per sample: None if uncertified, else per t, per direction (sup, exit)
    let per_sample: Vec<Option<Vec<Vec<(f64, f64)>>>> = (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let field = spec.field(k);
            let mut radius = ((t_max / mu_min).ceil() as u32).saturating_add(2).min(spec.certify.max_radius);
            loop {
                let pf = dijkstra(&field, &origin, &Window::new(origin.clone(), radius))?;
                if pf.boundary_min() > t_max {
                    let rows = t_grid
                        .iter()
                        .map(|&t| units.iter().map(|xi| ray_radii(&pf, t, xi)).collect())
                        .collect();
                    return Ok(Some(rows));
                }
                if radius >= spec.certify.max_radius {
                    return Ok(None);
                }
                radius = ((radius as f64 * spec.certify.growth_factor).ceil() as u32).min(spec.certify.max_radius);
            }
        })
        .collect::<Result<_, EstimatorError>>()?;
    let good: Vec<&Vec<Vec<(f64, f64)>>> = per_sample.iter().flatten().collect();
    let uncertified = samples - good.len();
    if good.is_empty() {
        return Err(PassageError::Uncertified("no ball fit inside the window cap".into()).into());
    }
    Ok(t_grid
        .iter()
        .enumerate()
        .map(|(ti, &t)| {
            let excess: Vec<f64> = good
                .iter()
                .map(|rows| {
                    rows[ti]
                        .iter()
                        .zip(fan)
                        .map(|((sup, _), (_, mu))| (sup / t * mu - 1.0).max(0.0))
                        .fold(0.0, f64::max)
                })
                .collect();
            let deficit: Vec<f64> = good
                .iter()
                .map(|rows| {
                    rows[ti]
                        .iter()
                        .zip(fan)
                        .map(|((_, exit), (_, mu))| (1.0 - exit / t * mu).max(0.0))
                        .fold(0.0, f64::max)
                })
                .collect();
            let radii = fan
                .iter()
                .enumerate()
                .map(|(j, (x, mu))| DirectionRadius {
                    direction: x.clone(),
                    angle: angle(&units[j]),
                    radius: mean_estimate(&good.iter().map(|r| r[ti][j].0 / t).collect::<Vec<_>>()).mean,
                    exit_radius: mean_estimate(&good.iter().map(|r| r[ti][j].1 / t).collect::<Vec<_>>()).mean,
                    reference: 1.0 / mu,
                })
                .collect();
            let e = mean_estimate(&excess);
            let f = mean_estimate(&deficit);
            ShapeDeviation {
                t,
                radii,
                outer_excess: e.mean,
                outer_stderr: e.stderr,
                inner_deficit: f.mean,
                inner_stderr: f.stderr,
                samples: good.len(),
                uncertified,
                outer_envelope: t.ln().sqrt() / t.sqrt(),
                inner_envelope: t.ln().powi(4) / t.sqrt(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KestenPoint {
    pub m: usize,
    pub count: usize,
    pub p: f64,
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicLengthCheck {
    pub target: Site,
    /// Samples whose chosen geodesic `π` has `a #π <= τ(π)`.
    pub successes: usize,
    pub samples: usize,
    pub fraction: f64,
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KestenFit {
    pub a: f64,
    /// Exact-length event: some self-avoiding path with exactly `m` edges
    /// has time below `a m`.
    pub points: Vec<KestenPoint>,
    /// Cumulative event over lengths `m..=max m` of the grid.
    pub cumulative: Vec<KestenPoint>,
    /// `ln P(A_m)` against `m` up to the first zero count.
    pub fit: Option<ExponentFit>,
    pub fit_error: Option<String>,
    /// First grid value with a zero count, where the fit stops.
    pub truncated_at: Option<usize>,
    pub geodesic: Option<GeodesicLengthCheck>,
}

pub fn kesten_decay_fit(
    spec: &SampleSpec,
    a: f64,
    m_grid: &[usize],
    samples: usize,
    target: Option<&Site>,
) -> Result<KestenFit, EstimatorError> {
    if !(a > 0.0) {
        return Err(EstimatorError::Invalid("a must be positive".into()));
    }
    if m_grid.is_empty() || m_grid.windows(2).any(|w| w[0] >= w[1]) || m_grid[0] == 0 {
        return Err(EstimatorError::Invalid("m grid must be positive and increasing".into()));
    }
    if let Some(x) = target {
        spec.check_site(x)?;
    }
    let max_m = *m_grid.last().unwrap();
    let origin = spec.origin();
    let rows: Vec<(Vec<bool>, Vec<bool>, Option<bool>)> = (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let field = spec.field(k);
            let mins = saw_minima(&field, &origin, max_m, spec.saw_budget)?;
            let hit = |m: usize| mins[m - 1].value < a * m as f64;
            let exact = m_grid.iter().map(|&m| hit(m)).collect();
            let cumulative = m_grid.iter().map(|&m| (m..=max_m).any(hit)).collect();
            let geo = match target {
                Some(x) => {
                    let pt = exact_passage_time(&field, &origin, x, &spec.certify)?;
                    let pf = dijkstra(&field, &origin, &pt.window)?;
                    let path = pf.path_to(x).expect("target in window");
                    Some(a * (path.len() - 1) as f64 <= pt.value)
                }
                None => None,
            };
            Ok((exact, cumulative, geo))
        })
        .collect::<Result<_, EstimatorError>>()?;
    let point = |j: usize, m: usize, cum: bool| {
        let count = rows.iter().filter(|r| if cum { r.1[j] } else { r.0[j] }).count();
        KestenPoint {
            m,
            count,
            p: count as f64 / samples as f64,
            ci: wilson_interval(count, samples, Z95),
        }
    };
    let points: Vec<KestenPoint> = m_grid.iter().enumerate().map(|(j, &m)| point(j, m, false)).collect();
    let cumulative = m_grid.iter().enumerate().map(|(j, &m)| point(j, m, true)).collect();
    let truncated_at = points.iter().find(|p| p.count == 0).map(|p| p.m);
    let usable: Vec<&KestenPoint> = points.iter().take_while(|p| p.count > 0).collect();
    let (fit, fit_error) = {
        let x = usable.iter().map(|p| p.m as f64).collect();
        let y = usable.iter().map(|p| p.p.ln()).collect();
        let w: Vec<f64> = usable.iter().map(|p| log_prop_weight(p.p, samples)).collect();
        match ExponentFit::fit(x, y, &w) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    let geodesic = target.map(|x| {
        let successes = rows.iter().filter(|r| r.2 == Some(true)).count();
        GeodesicLengthCheck {
            target: x.clone(),
            successes,
            samples,
            fraction: successes as f64 / samples as f64,
            ci: wilson_interval(successes, samples, Z95),
        }
    });
    Ok(KestenFit {
        a,
        points,
        cumulative,
        fit,
        fit_error,
        truncated_at,
        geodesic,
    })
}

/// One macro-box sandwich evaluation on a fixed environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub m: u64,
    /// `τ(D_m(0), D_m(v))`.
    pub tau_m: f64,
    /// `τ(0, v)`.
    pub tau: f64,
    pub j_origin: f64,
    pub j_target: f64,
    pub certified: bool,
}

impl Sandwich {
    pub fn lower_holds(&self) -> bool {
        self.tau_m <= self.tau + 1e-12 * self.tau.max(1.0)
    }

    pub fn upper_holds(&self) -> bool {
        self.tau <= self.tau_m + self.j_origin + self.j_target + 1e-12 * self.tau.max(1.0)
    }
}

fn certified_box_diameter<W: EdgeWeights + ?Sized>(
    weights: &W,
    center: &Site,
    m: u64,
    c7: f64,
    opts: &CertifyOptions,
) -> Result<(f64, bool), EstimatorError> {
    let mbox = macro_box(center, m, c7)?;
    let mut margin = mbox.radius() + 2;
    loop {
        let window = Window::new(center.clone(), mbox.radius() + margin);
        match box_diameter_time(weights, &mbox, &window) {
            Ok(j) => return Ok((j, true)),
            Err(PassageError::Uncertified(_)) if window.radius() < opts.max_radius => {
                margin = ((margin as f64 * opts.growth_factor).ceil() as u32)
                    .min(opts.max_radius - mbox.radius());
            }
            Err(PassageError::Uncertified(_)) => return Ok((f64::NAN, false)),
            Err(e) => return Err(e.into()),
        }
    }
}

/// `τ_m <= τ(0, m ξ) <= τ_m + J_m(0) + J_m(m ξ)` on one environment.
pub fn box_sandwich<W: EdgeWeights + ?Sized>(
    weights: &W,
    m: u64,
    c7: f64,
    xi: &Site,
    opts: &CertifyOptions,
) -> Result<Sandwich, EstimatorError> {
    let origin = Site::origin(xi.dim());
    let v = xi.scale(m as i64);
    let b0 = macro_box(&origin, m, c7)?;
    let bv = macro_box(&v, m, c7)?;
    let tm = box_to_box_passage(weights, &b0.sites(), &bv.sites(), opts)?;
    let t = exact_passage_time(weights, &origin, &v, opts)?;
    let (j0, c0) = certified_box_diameter(weights, &origin, m, c7, opts)?;
    let (jv, cv) = certified_box_diameter(weights, &v, m, c7, opts)?;
    Ok(Sandwich {
        m,
        tau_m: tm.value,
        tau: t.value,
        j_origin: j0,
        j_target: jv,
        certified: tm.certified && t.certified && c0 && cv,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxTail {
    pub m: u64,
    /// `m^{1/2} (ln m)^4`.
    pub scale: f64,
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
    pub p: f64,
    pub ci: (f64, f64),
    pub samples: usize,
    pub uncertified: usize,
    /// Samples with `τ_m > τ(0, m ξ)`; always zero for a correct solver.
    pub ordering_violations: usize,
}

/// Tail summary from per-sample `(τ_m, τ(0, m ξ), certified)` triples.
pub fn box_tail(m: u64, rows: &[(f64, f64, bool)]) -> BoxTail {
    let good: Vec<f64> = rows.iter().filter(|r| r.2).map(|r| r.0).collect();
    let est = mean_estimate(&good);
    let scale = (m as f64).sqrt() * (m as f64).ln().powi(4);
    let count = good.iter().filter(|&&x| (x - est.mean).abs() >= scale).count();
    BoxTail {
        m,
        scale,
        mean: est.mean,
        stderr: est.stderr,
        count,
        p: count as f64 / good.len().max(1) as f64,
        ci: wilson_interval(count, good.len(), Z95),
        samples: good.len(),
        uncertified: rows.len() - good.len(),
        ordering_violations: rows.iter().filter(|r| r.0 > r.1 + 1e-12 * r.1.max(1.0)).count(),
    }
}

pub fn box_concentration_fit(
    spec: &SampleSpec,
    m_grid: &[u64],
    c7: f64,
    xi: &Site,
    samples: usize,
) -> Result<Vec<BoxTail>, EstimatorError> {
    spec.check_site(xi)?;
    let origin = spec.origin();
    m_grid
        .iter()
        .map(|&m| {
            let b0 = macro_box(&origin, m, c7)?.sites();
            let v = xi.scale(m as i64);
            let bv = macro_box(&v, m, c7)?.sites();
            let rows: Vec<(f64, f64, bool)> = (0..samples as u64)
                .into_par_iter()
                .map(|k| {
                    let field = spec.field(k);
                    let tm = box_to_box_passage(&field, &b0, &bv, &spec.certify)?;
                    let t = exact_passage_time(&field, &origin, &v, &spec.certify)?;
                    Ok((tm.value, t.value, tm.certified && t.certified))
                })
                .collect::<Result<_, EstimatorError>>()?;
            Ok(box_tail(m, &rows))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionMu {
    pub direction: Site,
    /// `μ̂` per unit L1 length.
    pub mu: f64,
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEquivalence {
    pub directions: Vec<DirectionMu>,
    /// `max(max_ξ μ̂(ξ), max_ξ 1/μ̂(ξ))`.
    pub c9: f64,
    /// The same from the interval ends; infinite if some interval reaches 0.
    pub c9_conservative: f64,
    /// Directions whose interval contains 0.
    pub flagged: Vec<Site>,
}

impl NormEquivalence {
    pub fn ok(&self) -> bool {
        self.c9.is_finite() && self.flagged.is_empty() && self.directions.iter().all(|d| d.mu > 0.0)
    }
}

pub const MIN_NORM_DIRECTIONS: usize = 8;

pub fn norm_equivalence_report(estimates: &[TimeConstantEstimate]) -> Result<NormEquivalence, EstimatorError> {
    if estimates.len() < MIN_NORM_DIRECTIONS {
        return Err(EstimatorError::Invalid(format!("need at least {MIN_NORM_DIRECTIONS} directions")));
    }
    let directions: Vec<DirectionMu> = estimates
        .iter()
        .map(|e| {
            let (mu, ci) = e.unit_mu();
            DirectionMu {
                direction: e.direction.clone(),
                mu,
                ci,
            }
        })
        .collect();
    let c9 = directions
        .iter()
        .map(|d| d.mu.max(1.0 / d.mu))
        .fold(0.0, f64::max);
    let flagged: Vec<Site> = directions
        .iter()
        .filter(|d| d.ci.0 <= 0.0)
        .map(|d| d.direction.clone())
        .collect();
    let c9_conservative = directions
        .iter()
        .map(|d| if d.ci.0 > 0.0 { d.ci.1.max(1.0 / d.ci.0) } else { f64::INFINITY })
        .fold(0.0, f64::max);
    Ok(NormEquivalence {
        directions,
        c9,
        c9_conservative,
        flagged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZMomentReport {
    pub d: usize,
    /// Supremum of finite moment orders of the minimum of `2d` copies; `None` is ∞.
    pub z_moment_order: Option<f64>,
    /// `α > 1 + 1/d`, the tail condition for the inner shape bound.
    pub inner_hypothesis: bool,
    /// Largest `δ` with `E Z^{2d+2+δ} < ∞` (exclusive); `None` is ∞, and
    /// `Some(0)` or less means not attained.
    pub delta_max: Option<f64>,
}

pub fn z_moment_report(dist: &Distribution, d: usize) -> ZMomentReport {
    let order = dist.min_moment_order(2 * d as u32);
    let need = 2.0 * d as f64 + 2.0;
    let inner_hypothesis = match dist.tail_exponent() {
        Some(alpha) => alpha > 1.0 + 1.0 / d as f64,
        None => true,
    };
    ZMomentReport {
        d,
        z_moment_order: order,
        inner_hypothesis,
        delta_max: order.map(|o| o - need),
    }
}

/// One lattice sample of `(T, #Piv)` for the pivotal statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PivotalSample {
    pub passage_time: f64,
    pub pivotal_count: u64,
    pub certified: bool,
    pub margin: f64,
}

pub fn pivotal_samples(spec: &SampleSpec, target: &Site, samples: usize) -> Result<Vec<PivotalSample>, EstimatorError> {
    spec.check_site(target)?;
    let origin = spec.origin();
    let rule = if spec.distribution.is_integer_valued() {
        TieRule::Exact
    } else {
        TieRule::CONTINUOUS
    };
    (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let field = spec.field(k);
            let pair = certified_pair(&field, &origin, target, &spec.certify, 1e-9)?;
            let dag = geodesic_dag(&pair.forward, &pair.backward, &field, rule)?;
            Ok(PivotalSample {
                passage_time: pair.passage_time,
                pivotal_count: pivotal_edges(&dag).len() as u64,
                certified: pair.certified,
                margin: pair.margin,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(v: f64) -> Distribution {
        Distribution::Constant { value: v }
    }

    #[test]
    fn constant_mu_is_exact() {
        let spec = SampleSpec::new(constant(2.0), 2, 1, "mu");
        let x = Site::new(vec![1, 2]).unwrap();
        let e = estimate_mu(&spec, &x, &[1, 2, 4], 5).unwrap();
        assert_eq!(e.mu_upper, 6.0);
        assert_eq!(e.mu_point, 6.0);
        assert_eq!(e.mu_point_stderr, 0.0);
        assert!(e.certified);
        let f = nonrandom_fluctuation_fit(&e).unwrap();
        assert!(f.degenerate);
        assert!(f.lower_bound_holds);
    }

    #[test]
    fn fan_contains_axis_and_diagonal() {
        for size in 2..9 {
            let fan = direction_fan(2, size).unwrap();
            assert_eq!(fan[0].coords(), &[size as i64 - 1, 0]);
            assert!(fan.iter().any(|x| x.coords()[0] == x.coords()[1]));
        }
        assert_eq!(direction_fan(2, 5).unwrap().len(), 5);
        assert_eq!(direction_fan(2, 4).unwrap().len(), 5);
    }

    #[test]
    fn ray_radii_on_l1_ball() {
        let field = WeightField::new(constant(1.0), 0);
        let o = Site::origin(2);
        let pf = dijkstra(&field, &o, &Window::new(o.clone(), 8)).unwrap();
        let (sup, exit) = ray_radii(&pf, 4.0, &[1.0, 0.0]);
        assert_eq!((sup, exit), (4.5, 4.5));
        let (sup, exit) = ray_radii(&pf, 4.0, &[0.5, 0.5]);
        assert_eq!(sup, 5.0);
        assert!(exit <= sup);
        assert!(exit >= 4.0);
    }

    #[test]
    fn deterministic_tail_is_infinite() {
        let spec = SampleSpec::new(constant(1.0), 2, 3, "lower-tail");
        let f = lower_tail_fit(&spec, &Site::axis(2, 0, 5), 1000, &default_t_grid()).unwrap();
        assert_eq!(f.rate, RateFit::Infinite);
        assert!(f.points.iter().skip(1).all(|p| p.count == 0));
        assert!(lower_tail_fit(&spec, &Site::axis(2, 0, 5), 10, &[0.0]).is_err());
    }

    #[test]
    fn kesten_trivial_cases() {
        let spec = SampleSpec::new(constant(1.0), 2, 3, "kesten");
        let f = kesten_decay_fit(&spec, 0.5, &[2, 3, 4, 5], 20, None).unwrap();
        assert!(f.points.iter().all(|p| p.count == 0));
        assert_eq!(f.truncated_at, Some(2));
        let f = kesten_decay_fit(&spec, 1.5, &[2, 3, 4, 5], 20, Some(&Site::axis(2, 0, 3))).unwrap();
        assert!(f.points.iter().all(|p| p.p == 1.0));
        assert_eq!(f.geodesic.unwrap().successes, 0);
    }

    #[test]
    fn z_moments() {
        let r = z_moment_report(&Distribution::Pareto { alpha: 1.1, scale: 1.0 }, 2);
        assert!((r.z_moment_order.unwrap() - 4.4).abs() < 1e-12);
        assert!(!r.inner_hypothesis);
        let r = z_moment_report(&Distribution::Pareto { alpha: 1.6, scale: 1.0 }, 2);
        assert!(r.inner_hypothesis);
        assert!((r.delta_max.unwrap() - 0.4).abs() < 1e-12);
        let r = z_moment_report(&Distribution::Exponential { rate: 1.0 }, 2);
        assert_eq!((r.z_moment_order, r.inner_hypothesis, r.delta_max), (None, true, None));
    }

    #[test]
    fn sandwich_constant() {
        let field = WeightField::new(constant(1.0), 0);
        let s = box_sandwich(&field, 8, 0.5, &Site::axis(2, 0, 1), &CertifyOptions::default()).unwrap();
        assert!(s.certified && s.lower_holds() && s.upper_holds());
        assert_eq!(s.tau, 8.0);
    }
}
