//! Edge-weight laws and the seeded weight field.
//!
//! A [`WeightField`] assigns a weight to every edge of Z^d as a pure function
//! of `(master_seed, edge)`, so any window can be materialised, grown, or
//! revisited without resampling.

use std::collections::HashMap;
use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::Edge;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightsError {
    #[error("invalid distribution: {0}")]
    Invalid(String),
    #[error("unknown distribution kind `{0}`")]
    UnknownKind(String),
    #[error("missing parameter `{0}`")]
    MissingParam(&'static str),
    #[error("cannot parse parameter `{key}`: {value}")]
    BadParam { key: String, value: String },
    #[error("no tabulated bond-percolation threshold for d = {0}; supply an override")]
    NoThreshold(usize),
}

/// Catalog of single-edge laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Distribution {
    Constant { value: f64 },
    /// `0` with probability `p0`, `a` otherwise.
    AtomMixture { p0: f64, a: f64 },
    FiniteDiscrete { values: Vec<f64>, probs: Vec<f64> },
    Uniform { low: f64, high: f64 },
    Exponential { rate: f64 },
    /// Survival `(x / scale)^(-alpha)` for `x >= scale`.
    Pareto { alpha: f64, scale: f64 },
}

impl Distribution {
    pub fn validate(&self) -> Result<(), WeightsError> {
        let bad = |m: &str| Err(WeightsError::Invalid(m.to_string()));
        let pos = |x: f64| x.is_finite() && x > 0.0;
        match self {
            Distribution::Constant { value } => {
                if !pos(*value) {
                    return bad("constant weight must be positive");
                }
            }
            Distribution::AtomMixture { p0, a } => {
                if !(0.0..1.0).contains(p0) {
                    return bad("p0 must lie in [0, 1)");
                }
                if !pos(*a) {
                    return bad("atom value must be positive");
                }
            }
            Distribution::FiniteDiscrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return bad("values and probs must be non-empty and of equal length");
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return bad("support values must be finite and nonnegative");
                }
                if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return bad("probabilities must be nonnegative");
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return bad("probabilities must sum to 1");
                }
                if self.p0() >= 1.0 {
                    return bad("mass at zero must be < 1");
                }
            }
            Distribution::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && *low >= 0.0 && high > low) {
                    return bad("uniform needs 0 <= low < high");
                }
            }
            Distribution::Exponential { rate } => {
                if !pos(*rate) {
                    return bad("rate must be positive");
                }
            }
            Distribution::Pareto { alpha, scale } => {
                if !pos(*alpha) || !pos(*scale) {
                    return bad("pareto alpha and scale must be positive");
                }
            }
        }
        Ok(())
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Distribution::Constant { .. } => "constant",
            Distribution::AtomMixture { .. } => "atom-mixture",
            Distribution::FiniteDiscrete { .. } => "finite-discrete",
            Distribution::Uniform { .. } => "uniform",
            Distribution::Exponential { .. } => "exponential",
            Distribution::Pareto { .. } => "pareto",
        }
    }

    /// `P(t_e = 0)`.
    pub fn p0(&self) -> f64 {
        match self {
            Distribution::AtomMixture { p0, .. } => *p0,
            Distribution::FiniteDiscrete { values, probs } => values
                .iter()
                .zip(probs)
                .filter(|(v, _)| **v == 0.0)
                .map(|(_, p)| p)
                .sum(),
            _ => 0.0,
        }
    }

    /// `P(t_e >= x)`.
    pub fn survival(&self, x: f64) -> f64 {
        match *self {
            Distribution::Constant { value } => {
                if x <= value {
                    1.0
                } else {
                    0.0
                }
            }
            Distribution::AtomMixture { p0, a } => {
                if x <= 0.0 {
                    1.0
                } else if x <= a {
                    1.0 - p0
                } else {
                    0.0
                }
            }
            Distribution::FiniteDiscrete {
                ref values,
                ref probs,
            } => values
                .iter()
                .zip(probs)
                .filter(|(v, _)| **v >= x)
                .map(|(_, p)| p)
                .sum::<f64>()
                .min(1.0),
            Distribution::Uniform { low, high } => {
                if x <= low {
                    1.0
                } else if x >= high {
                    0.0
                } else {
                    (high - x) / (high - low)
                }
            }
            Distribution::Exponential { rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
            Distribution::Pareto { alpha, scale } => {
                if x <= scale {
                    1.0
                } else {
                    (x / scale).powf(-alpha)
                }
            }
        }
    }

    /// `P(t_e <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Distribution::Constant { value } => {
                if x >= value {
                    1.0
                } else {
                    0.0
                }
            }
            Distribution::AtomMixture { p0, a } => {
                if x < 0.0 {
                    0.0
                } else if x < a {
                    p0
                } else {
                    1.0
                }
            }
            Distribution::FiniteDiscrete {
                ref values,
                ref probs,
            } => values
                .iter()
                .zip(probs)
                .filter(|(v, _)| **v <= x)
                .map(|(_, p)| p)
                .sum::<f64>()
                .min(1.0),
            Distribution::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
            Distribution::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            Distribution::Pareto { alpha, scale } => {
                if x <= scale {
                    0.0
                } else {
                    1.0 - (x / scale).powf(-alpha)
                }
            }
        }
    }

    /// Inverse-CDF transform of `u ∈ (0, 1)`.
    pub fn from_uniform(&self, u: f64) -> f64 {
        match *self {
            Distribution::Constant { value } => value,
            Distribution::AtomMixture { p0, a } => {
                if u < p0 {
                    0.0
                } else {
                    a
                }
            }
            Distribution::FiniteDiscrete {
                ref values,
                ref probs,
            } => {
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                // rounding in the cumulative sum
                *values
                    .iter()
                    .zip(probs)
                    .rev()
                    .find(|(_, p)| **p > 0.0)
                    .map(|(v, _)| v)
                    .unwrap_or(&values[values.len() - 1])
            }
            Distribution::Uniform { low, high } => low + (high - low) * u,
            Distribution::Exponential { rate } => -(-u).ln_1p() / rate,
            Distribution::Pareto { alpha, scale } => scale * (1.0 - u).powf(-1.0 / alpha),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Constant { value } => value,
            Distribution::AtomMixture { p0, a } => (1.0 - p0) * a,
            Distribution::FiniteDiscrete {
                ref values,
                ref probs,
            } => values.iter().zip(probs).map(|(v, p)| v * p).sum(),
            Distribution::Uniform { low, high } => 0.5 * (low + high),
            Distribution::Exponential { rate } => 1.0 / rate,
            Distribution::Pareto { alpha, scale } => {
                if alpha > 1.0 {
                    alpha * scale / (alpha - 1.0)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Polynomial tail exponent of `t_e`; `None` for bounded or light-tailed laws.
    pub fn tail_exponent(&self) -> Option<f64> {
        match *self {
            Distribution::Pareto { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    /// Supremum of finite moment orders of the minimum of `k` copies;
    /// `None` when every moment is finite.
    pub fn min_moment_order(&self, k: u32) -> Option<f64> {
        self.tail_exponent().map(|a| a * k as f64)
    }

    /// Largest value in the support (infinite for unbounded laws).
    pub fn support_max(&self) -> f64 {
        match *self {
            Distribution::Constant { value } => value,
            Distribution::AtomMixture { a, .. } => a,
            Distribution::FiniteDiscrete {
                ref values,
                ref probs,
            } => values
                .iter()
                .zip(probs)
                .filter(|(_, p)| **p > 0.0)
                .map(|(v, _)| *v)
                .fold(0.0, f64::max),
            Distribution::Uniform { high, .. } => high,
            _ => f64::INFINITY,
        }
    }

    /// Support and masses for laws with finite support.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Distribution::Constant { value } => Some(vec![(*value, 1.0)]),
            Distribution::AtomMixture { p0, a } => Some(vec![(0.0, *p0), (*a, 1.0 - p0)]),
            Distribution::FiniteDiscrete { values, probs } => {
                Some(values.iter().copied().zip(probs.iter().copied()).collect())
            }
            _ => None,
        }
    }

    /// True when every support point is an integer, so passage times are
    /// exact in floating point and ties can be compared exactly.
    pub fn is_integer_valued(&self) -> bool {
        self.atoms()
            .map(|a| a.iter().all(|(v, _)| v.fract() == 0.0 && *v < 2f64.powi(40)))
            .unwrap_or(false)
    }

    pub fn is_deterministic(&self) -> bool {
        self.atoms()
            .map(|a| a.iter().filter(|(_, p)| *p > 0.0).count() == 1)
            .unwrap_or(false)
    }

    /// Flat `key=value` form used in config files and record labels.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = vec![("kind".to_string(), self.kind_name().to_string())];
        let list = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",");
        match self {
            Distribution::Constant { value } => out.push(("value".into(), fmt_f64(*value))),
            Distribution::AtomMixture { p0, a } => {
                out.push(("p0".into(), fmt_f64(*p0)));
                out.push(("a".into(), fmt_f64(*a)));
            }
            Distribution::FiniteDiscrete { values, probs } => {
                out.push(("values".into(), list(values)));
                out.push(("probs".into(), list(probs)));
            }
            Distribution::Uniform { low, high } => {
                out.push(("low".into(), fmt_f64(*low)));
                out.push(("high".into(), fmt_f64(*high)));
            }
            Distribution::Exponential { rate } => out.push(("rate".into(), fmt_f64(*rate))),
            Distribution::Pareto { alpha, scale } => {
                out.push(("alpha".into(), fmt_f64(*alpha)));
                out.push(("scale".into(), fmt_f64(*scale)));
            }
        }
        out
    }

    pub fn from_pairs<'a, I>(pairs: I) -> Result<Self, WeightsError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let map: HashMap<&str, &str> = pairs.into_iter().collect();
        let num = |key: &'static str| -> Result<f64, WeightsError> {
            let raw = map.get(key).ok_or(WeightsError::MissingParam(key))?;
            raw.trim().parse::<f64>().map_err(|_| WeightsError::BadParam {
                key: key.to_string(),
                value: raw.to_string(),
            })
        };
        let list = |key: &'static str| -> Result<Vec<f64>, WeightsError> {
            let raw = map.get(key).ok_or(WeightsError::MissingParam(key))?;
            raw.split(',')
                .map(|t| {
                    t.trim().parse::<f64>().map_err(|_| WeightsError::BadParam {
                        key: key.to_string(),
                        value: raw.to_string(),
                    })
                })
                .collect()
        };
        let kind = map.get("kind").ok_or(WeightsError::MissingParam("kind"))?;
        let dist = match kind.trim() {
            "constant" => Distribution::Constant {
                value: num("value")?,
            },
            "atom-mixture" => Distribution::AtomMixture {
                p0: num("p0")?,
                a: num("a")?,
            },
            "finite-discrete" => Distribution::FiniteDiscrete {
                values: list("values")?,
                probs: list("probs")?,
            },
            "uniform" => Distribution::Uniform {
                low: num("low")?,
                high: num("high")?,
            },
            "exponential" => Distribution::Exponential { rate: num("rate")? },
            "pareto" => Distribution::Pareto {
                alpha: num("alpha")?,
                scale: num("scale").or_else(|_| Ok::<f64, WeightsError>(1.0))?,
            },
            other => return Err(WeightsError::UnknownKind(other.to_string())),
        };
        dist.validate()?;
        Ok(dist)
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pairs = self.to_pairs();
        let mut first = true;
        for (k, v) in pairs {
            if !first {
                write!(f, " ")?;
            }
            first = false;
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Shortest round-trippable decimal form.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Map 64 random bits to the open interval (0, 1).
#[inline]
pub fn bits_to_open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Stable 64-bit FNV-1a hash of a label.
pub fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Per-sample seed derived from the master seed, a stream label, and the
/// sample index. Independent of scheduling.
pub fn stream_seed(master: u64, label: &str, index: u64) -> u64 {
    let a = mix64(master ^ 0x9e37_79b9_7f4a_7c15);
    let b = mix64(a ^ label_hash(label));
    mix64(b.wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// Draw from `dist` using an external random stream.
pub fn sample<R: RngCore + ?Sized>(dist: &Distribution, rng: &mut R) -> f64 {
    dist.from_uniform(bits_to_open_unit(rng.next_u64()))
}

/// Anything that assigns weights to lattice edges.
pub trait EdgeWeights: Sync {
    /// Weight of the edge from `lower` to `lower + e_axis`.
    fn weight_lower(&self, lower: &[i64], axis: usize) -> f64;

    fn weight(&self, e: &Edge) -> f64 {
        self.weight_lower(e.u().coords(), e.axis())
    }
}

/// Lazily evaluated i.i.d. environment over all of Z^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightField {
    pub distribution: Distribution,
    pub master_seed: u64,
}

impl WeightField {
    pub fn new(distribution: Distribution, master_seed: u64) -> Self {
        WeightField {
            distribution,
            master_seed,
        }
    }

    #[inline]
    fn edge_bits(&self, lower: &[i64], axis: usize) -> u64 {
        let mut h = mix64(self.master_seed ^ 0x243f_6a88_85a3_08d3);
        for &c in lower {
            h = mix64(h ^ (c as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        }
        mix64(h ^ (axis as u64 + 1).wrapping_mul(0xc2b2_ae3d_27d4_eb4f))
    }

    pub fn weight_at(&self, e: &Edge) -> f64 {
        self.weight(e)
    }
}

impl EdgeWeights for WeightField {
    #[inline]
    fn weight_lower(&self, lower: &[i64], axis: usize) -> f64 {
        self.distribution
            .from_uniform(bits_to_open_unit(self.edge_bits(lower, axis)))
    }
}

/// Explicit table of weights with a fallback value for absent edges.
#[derive(Debug, Clone, Default)]
pub struct EdgeTable {
    pub weights: HashMap<Edge, f64>,
    pub fallback: f64,
}

impl EdgeTable {
    pub fn new(fallback: f64) -> Self {
        EdgeTable {
            weights: HashMap::new(),
            fallback,
        }
    }

    pub fn set(&mut self, e: Edge, w: f64) {
        self.weights.insert(e, w);
    }
}

impl EdgeWeights for EdgeTable {
    fn weight_lower(&self, lower: &[i64], axis: usize) -> f64 {
        let e = Edge::from_lower(
            crate::lattice::Site::new(lower.to_vec()).expect("dimension >= 2"),
            axis,
        );
        self.weight(&e)
    }

    fn weight(&self, e: &Edge) -> f64 {
        self.weights.get(e).copied().unwrap_or(self.fallback)
    }
}

/// `P(min of k copies >= lambda) = P(t_e >= lambda)^k`.
pub fn min_of_copies_survival(dist: &Distribution, k: u32, lambda: f64) -> f64 {
    dist.survival(lambda).powi(k as i32)
}

/// Whether `E[(min of k copies)^beta] < ∞`.
pub fn moment_finite(dist: &Distribution, k: u32, beta: f64) -> bool {
    match dist.min_moment_order(k) {
        Some(order) => beta < order,
        None => true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcValue {
    pub d: usize,
    pub value: f64,
    pub provenance: String,
}

const PC_TABLE: &[(usize, f64, &str)] = &[
    (2, 0.5, "exact (Kesten 1980)"),
    (3, 0.248_812_6, "numerical estimate (Lorenz & Ziff 1998)"),
    (4, 0.160_131_4, "numerical estimate (Grassberger 2003)"),
    (5, 0.118_171_8, "numerical estimate (Grassberger 2003)"),
    (6, 0.094_201_9, "numerical estimate (Grassberger 2003)"),
];

/// Bond-percolation threshold of Z^d.
pub fn pc_value(d: usize, override_value: Option<f64>) -> Result<PcValue, WeightsError> {
    if d < 2 {
        return Err(WeightsError::Invalid(format!("dimension {d} < 2")));
    }
    if let Some(v) = override_value {
        if !(v > 0.0 && v < 1.0) {
            return Err(WeightsError::Invalid(format!("p_c override {v} outside (0,1)")));
        }
        return Ok(PcValue {
            d,
            value: v,
            provenance: "user".to_string(),
        });
    }
    PC_TABLE
        .iter()
        .find(|(dd, _, _)| *dd == d)
        .map(|(_, v, p)| PcValue {
            d,
            value: *v,
            provenance: p.to_string(),
        })
        .ok_or(WeightsError::NoThreshold(d))
}

/// Moment and percolation diagnostics for a law in dimension `d`.
///
/// Moment orders are suprema of finite orders; `None` means all moments are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub d: usize,
    pub a1_holds: bool,
    pub a2_holds: bool,
    pub p0: f64,
    pub pc: PcValue,
    pub tail_exponent: Option<f64>,
    pub edge_moment_order: Option<f64>,
    pub y_moment_order: Option<f64>,
    pub z_moment_order: Option<f64>,
}

impl MomentReport {
    pub fn ok(&self) -> bool {
        self.a1_holds && self.a2_holds
    }

    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.a1_holds {
            out.push(format!(
                "moment condition fails: min of {} copies has finite moments only below {:?}, need 2",
                self.d, self.y_moment_order
            ));
        }
        if !self.a2_holds {
            out.push(format!(
                "zero-weight mass {} is not below p_c({}) = {} ({})",
                self.p0, self.d, self.pc.value, self.pc.provenance
            ));
        }
        out
    }
}

pub fn validate_assumptions(
    dist: &Distribution,
    d: usize,
    pc_override: Option<f64>,
) -> Result<MomentReport, WeightsError> {
    dist.validate()?;
    let pc = pc_value(d, pc_override)?;
    let p0 = dist.p0();
    Ok(MomentReport {
        d,
        a1_holds: moment_finite(dist, d as u32, 2.0),
        a2_holds: p0 < pc.value,
        p0,
        pc,
        tail_exponent: dist.tail_exponent(),
        edge_moment_order: dist.min_moment_order(1),
        y_moment_order: dist.min_moment_order(d as u32),
        z_moment_order: dist.min_moment_order(2 * d as u32),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Site;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_samples() {
        let d = Distribution::Constant { value: 2.5 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| sample(&d, &mut rng) == 2.5));
    }

    #[test]
    fn atom_mixture_mean() {
        let d = Distribution::AtomMixture { p0: 0.3, a: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let mean = (0..n).map(|_| sample(&d, &mut rng)).sum::<f64>() / n as f64;
        let sigma = (0.3f64 * 0.7 / n as f64).sqrt();
        assert!((mean - 0.7).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn pareto_mean() {
        let d = Distribution::Pareto {
            alpha: 3.0,
            scale: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| sample(&d, &mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        // variance of Pareto(3) is 3/4
        let se = (0.75 / n as f64).sqrt();
        assert!((mean - 1.5).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn weight_at_is_pure() {
        let f = WeightField::new(Distribution::Exponential { rate: 1.0 }, 99);
        let e = Edge::new(Site::new(vec![3, 4]).unwrap(), Site::new(vec![3, 5]).unwrap()).unwrap();
        assert_eq!(f.weight_at(&e), f.weight_at(&e));
        let g = WeightField::new(Distribution::Exponential { rate: 1.0 }, 100);
        assert_ne!(f.weight_at(&e), g.weight_at(&e));
    }

    #[test]
    fn survival_powers() {
        let d = Distribution::AtomMixture { p0: 0.5, a: 1.0 };
        assert_eq!(min_of_copies_survival(&d, 4, 0.5), 0.0625);
        let e = Distribution::Exponential { rate: 1.0 };
        assert_eq!(min_of_copies_survival(&e, 3, 0.0), 1.0);
        let p = Distribution::Pareto {
            alpha: 1.0,
            scale: 1.0,
        };
        assert!((min_of_copies_survival(&p, 4, 2.0) - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn moment_rule() {
        let p = |alpha| Distribution::Pareto { alpha, scale: 1.0 };
        assert!(!moment_finite(&p(1.0), 2, 2.0));
        assert!(moment_finite(&p(1.1), 2, 2.0));
        assert!(moment_finite(&Distribution::Exponential { rate: 1.0 }, 1, 10.0));
    }

    #[test]
    fn assumptions() {
        let r = validate_assumptions(&Distribution::AtomMixture { p0: 0.6, a: 1.0 }, 2, None).unwrap();
        assert!(!r.a2_holds && r.a1_holds);
        let r = validate_assumptions(&Distribution::Pareto { alpha: 1.1, scale: 1.0 }, 2, None).unwrap();
        assert!(r.a1_holds);
        for d in 2..=6 {
            let r = validate_assumptions(&Distribution::Constant { value: 1.0 }, d, None).unwrap();
            assert!(r.ok());
        }
    }

    #[test]
    fn thresholds() {
        assert_eq!(pc_value(2, None).unwrap().value, 0.5);
        let o = pc_value(3, Some(0.2488)).unwrap();
        assert_eq!((o.value, o.provenance.as_str()), (0.2488, "user"));
        assert_eq!(pc_value(9, None), Err(WeightsError::NoThreshold(9)));
    }

    #[test]
    fn pairs_round_trip() {
        let dists = [
            Distribution::Constant { value: 1.0 },
            Distribution::AtomMixture { p0: 0.3, a: 1.0 },
            Distribution::FiniteDiscrete {
                values: vec![0.0, 1.0, 2.5],
                probs: vec![0.2, 0.5, 0.3],
            },
            Distribution::Uniform { low: 0.5, high: 2.0 },
            Distribution::Exponential { rate: 1.0 },
            Distribution::Pareto { alpha: 1.6, scale: 1.0 },
        ];
        for d in dists {
            let pairs = d.to_pairs();
            let back =
                Distribution::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
            assert_eq!(back, d);
        }
        assert!(matches!(
            Distribution::from_pairs([("kind", "gamma")]),
            Err(WeightsError::UnknownKind(_))
        ));
        assert!(Distribution::from_pairs([("kind", "atom-mixture"), ("p0", "1.0"), ("a", "1")]).is_err());
    }

    #[test]
    fn stream_seeds_differ() {
        let a = stream_seed(1, "mu", 0);
        let b = stream_seed(1, "mu", 1);
        let c = stream_seed(1, "shape", 0);
        assert!(a != b && a != c && b != c);
        assert_eq!(a, stream_seed(1, "mu", 0));
    }
}
