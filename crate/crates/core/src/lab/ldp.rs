//! Scaled cumulant generating functions estimated from replicas, their
//! Legendre-Fenchel transforms, and the asymptotic symmetries of the rate
//! functions.

use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use super::legendre::{
    convexity_certificate, grid_error_bound, legendre_fenchel_argmax, ConvexityCertificate,
    ProductGrid,
};
use super::report::{ser_f64, ser_vec_f64};
use crate::chain::{cycle_affinity, cycle_strength, ChainSpec};
use crate::cycle::Cycle;
use crate::error::{Error, Result};
use crate::simulator::{batch_sample, BatchConfig, CirculationSample, Horizon};

/// Fewest replicas accepted by [`scgf_estimate`].
pub const MIN_REPLICAS: usize = 100;
/// Effective sample size below which a tilted mean is flagged.
pub const MIN_ESS: f64 = 10.0;

/// Which circulation vector a sample contributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    /// `J^c_t = N^c_t / t`.
    Circulation,
    /// `K^c_t = (N^c_t - N^{c-}_t) / t`.
    Net,
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "circulation" | "j" => Ok(Observable::Circulation),
            "net" | "k" => Ok(Observable::Net),
            other => Err(Error::InvalidArgument(format!(
                "observable must be circulation or net, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScgfEstimate {
    pub observable: Observable,
    pub t: f64,
    pub replicas: usize,
    pub lambda: ProductGrid,
    /// `(1/t) log mean exp(t lambda . x)` per grid point.
    pub values: Vec<f64>,
    /// Delta-method standard errors.
    #[serde(serialize_with = "ser_vec_f64")]
    pub se: Vec<f64>,
    /// Effective sample size of the tilted weights.
    pub ess: Vec<f64>,
    /// Points dominated by fewer than `MIN_ESS` effective replicas.
    pub degenerate: Vec<bool>,
    /// Sample mean of the observable.
    pub mean: Vec<f64>,
}

impl ScgfEstimate {
    /// Values with degenerate points replaced by NaN.
    pub fn masked(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.degenerate)
            .map(|(&v, &d)| if d { f64::NAN } else { v })
            .collect()
    }
}

fn observe(sample: &CirculationSample, observable: Observable) -> Vec<f64> {
    match observable {
        Observable::Circulation => sample.circulation(),
        Observable::Net => sample.net(),
    }
}

/// SCGF estimate from replicas observed at a common horizon.
pub fn scgf_estimate(
    samples: &[CirculationSample],
    observable: Observable,
    lambda: &ProductGrid,
) -> Result<ScgfEstimate> {
    let t = samples.first().map_or(f64::NAN, |s| s.t);
    if samples.iter().any(|s| s.t != t) {
        return Err(Error::InvalidArgument(
            "samples have different horizons".into(),
        ));
    }
    let xs: Vec<Vec<f64>> = samples.iter().map(|s| observe(s, observable)).collect();
    scgf_from_values(&xs, t, observable, lambda)
}

/// SCGF estimate from observation vectors `xs` at horizon `t`.
pub fn scgf_from_values(
    xs: &[Vec<f64>],
    t: f64,
    observable: Observable,
    lambda: &ProductGrid,
) -> Result<ScgfEstimate> {
    let n = xs.len();
    if n < MIN_REPLICAS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_REPLICAS} replicas, got {n}"
        )));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad horizon {t}")));
    }
    let dim = lambda.dim();
    if xs.iter().any(|x| x.len() != dim) {
        return Err(Error::InvalidArgument(format!(
            "lambda grid has {dim} axes but samples have {} components",
            xs[0].len()
        )));
    }
    let nf = n as f64;
    let mean: Vec<f64> = (0..dim)
        .map(|d| xs.iter().map(|x| x[d]).sum::<f64>() / nf)
        .collect();
    let mut values = Vec::with_capacity(lambda.len());
    let mut se = Vec::with_capacity(lambda.len());
    let mut ess = Vec::with_capacity(lambda.len());
    let mut degenerate = Vec::with_capacity(lambda.len());
    let mut a = vec![0.0; n];
    for l in lambda.points() {
        for (ai, x) in a.iter_mut().zip(xs) {
            *ai = t * l.iter().zip(x).map(|(l, x)| l * x).sum::<f64>();
        }
        let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = a.iter().map(|ai| (ai - m).exp()).collect();
        let s: f64 = w.iter().sum();
        let s2: f64 = w.iter().map(|x| x * x).sum();
        let wbar = s / nf;
        values.push((m + wbar.ln()) / t);
        let var = w.iter().map(|x| (x - wbar).powi(2)).sum::<f64>() / (nf - 1.0);
        se.push((var / nf).sqrt() / (wbar * t));
        let e = s * s / s2;
        ess.push(e);
        degenerate.push(e < MIN_ESS);
    }
    Ok(ScgfEstimate {
        observable,
        t,
        replicas: n,
        lambda: lambda.clone(),
        values,
        se,
        ess,
        degenerate,
        mean,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RateFunctionEstimate {
    pub x: ProductGrid,
    /// `I` per x grid point; `+inf` where the supremum escapes the lambda grid.
    #[serde(serialize_with = "ser_vec_f64")]
    pub values: Vec<f64>,
    /// Flat lambda index attaining each maximum.
    pub argmax: Vec<usize>,
    pub convexity: ConvexityCertificate,
    /// Discretisation slack of the lambda grid.
    pub grid_error_bound: f64,
    #[serde(serialize_with = "ser_f64")]
    pub min_value: f64,
    pub argmin: Vec<f64>,
    pub empirical_mean: Vec<f64>,
}

/// Legendre-Fenchel transform of an SCGF estimate, ignoring degenerate points.
pub fn rate_function(est: &ScgfEstimate, x: &ProductGrid) -> Result<RateFunctionEstimate> {
    let f = est.masked();
    let pairs = legendre_fenchel_argmax(&est.lambda, &f, x)?;
    let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let argmax = pairs.iter().map(|p| p.1).collect();
    let (min_k, min_value) =
        values.iter().enumerate().fold(
            (0, f64::INFINITY),
            |acc, (k, &v)| if v < acc.1 { (k, v) } else { acc },
        );
    Ok(RateFunctionEstimate {
        convexity: convexity_certificate(x, &values),
        grid_error_bound: grid_error_bound(&est.lambda, &f),
        argmin: x.point(min_k),
        min_value,
        empirical_mean: est.mean.clone(),
        x: x.clone(),
        values,
        argmax,
    })
}

/// Rate-function table as CSV: `x_1, ..., x_r, I`.
pub fn write_rate_csv<W: Write>(out: W, rate: &RateFunctionEstimate) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidArgument(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=rate.x.dim()).map(|d| format!("x_{d}")).collect();
    header.push("I".into());
    w.write_record(&header).map_err(io)?;
    for (k, v) in rate.values.iter().enumerate() {
        let mut row: Vec<String> = rate.x.point(k).iter().map(|x| format!("{x}")).collect();
        row.push(if v.is_finite() {
            format!("{v:e}")
        } else {
            "+inf".into()
        });
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Which symmetry of the rate function is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Symmetry {
    /// Net circulations: `I_K(x) = I_K(x with x_k -> -x_k) - rho_k x_k`.
    Net { k: usize },
    /// Circulations of a similar pair:
    /// `I(x) = I(x with x_k, x_l swapped) - log(gamma_k/gamma_l)(x_k - x_l)`.
    Swap { k: usize, l: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct RateSymmetryParams {
    pub symmetry: Symmetry,
    pub t: f64,
    pub replicas: usize,
    pub seed: u64,
    #[serde(skip)]
    pub workers: usize,
    pub lambda: ProductGrid,
    pub x: ProductGrid,
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetryPoint {
    pub x: Vec<f64>,
    pub mirror: Vec<f64>,
    pub i_x: f64,
    pub i_mirror: f64,
    /// Linear correction term of the identity.
    pub correction: f64,
    /// `I(x) - I(mirror) + correction`.
    pub residual: f64,
    pub error_bar: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateSymmetryReport {
    pub classification: &'static str,
    pub target_formula: &'static str,
    pub symmetry: Symmetry,
    pub family: Vec<String>,
    pub start: String,
    pub t: f64,
    pub replicas: usize,
    /// `rho_k` (net) or `log(gamma_k/gamma_l)` (swap).
    pub coefficient: f64,
    pub points: Vec<SymmetryPoint>,
    /// x points without a finite mirrored value.
    pub skipped_points: usize,
    pub degenerate_lambda_points: usize,
    pub median_abs_residual: f64,
    pub median_error_bar: f64,
    pub p90_abs_residual: f64,
    pub max_abs_residual: f64,
    pub scgf: ScgfEstimate,
    pub rate: RateFunctionEstimate,
    pub pass: bool,
}

fn median(v: &mut [f64]) -> f64 {
    quantile(v, 0.5)
}

fn quantile(v: &mut [f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Samples the family, builds the rate function and evaluates the chosen
/// symmetry on every x point whose mirror is also a grid point.
pub fn rate_symmetry_check(
    chain: &ChainSpec,
    family: &[Cycle],
    start: usize,
    params: &RateSymmetryParams,
) -> Result<RateSymmetryReport> {
    let r = family.len();
    if params.lambda.dim() != r || params.x.dim() != r {
        return Err(Error::InvalidArgument(format!(
            "grids must have one axis per cycle ({r})"
        )));
    }
    let (observable, coefficient, target_formula) = match params.symmetry {
        Symmetry::Net { k } => {
            let c = family
                .get(k)
                .ok_or_else(|| Error::InvalidArgument(format!("no cycle {k}")))?;
            let rho = cycle_affinity(chain, c)?
                .finite()
                .ok_or_else(|| Error::InfiniteAffinity(c.format(chain.states())))?;
            (
                Observable::Net,
                rho,
                "I_K(x) = I_K(x with x_k -> -x_k) - rho_k x_k",
            )
        }
        Symmetry::Swap { k, l } => {
            let (ck, cl) = match (family.get(k), family.get(l)) {
                (Some(a), Some(b)) if k != l => (a, b),
                _ => return Err(Error::InvalidArgument(format!("bad pair ({k}, {l})"))),
            };
            if !ck.is_similar(cl) {
                let s = chain.states();
                return Err(Error::NotSimilar(ck.format(s), cl.format(s)));
            }
            let (gk, gl) = (cycle_strength(chain, ck)?, cycle_strength(chain, cl)?);
            if !(gk > 0.0 && gl > 0.0) {
                return Err(Error::ZeroForwardStrength);
            }
            (
                Observable::Circulation,
                (gk / gl).ln(),
                "I(x) = I(x with x_k, x_l swapped) - log(gamma_k/gamma_l)(x_k - x_l)",
            )
        }
    };
    crate::exact::check_family_start(family, start, true)?;
    let config = BatchConfig {
        start,
        horizon: Horizon::Time(params.t),
        replicas: params.replicas,
        seed: params.seed,
        workers: params.workers,
        cycles: family.to_vec(),
        record_events: false,
    };
    let samples: Vec<CirculationSample> = batch_sample(chain, &config)?
        .into_iter()
        .map(|r| r.sample)
        .collect();
    let scgf = scgf_estimate(&samples, observable, &params.lambda)?;
    let rate = rate_function(&scgf, &params.x)?;
    let slack = 2.0 * rate.grid_error_bound;
    let mut points = Vec::new();
    let mut skipped = 0;
    for (i, x) in params.x.points().into_iter().enumerate() {
        let (mirror, correction) = match params.symmetry {
            Symmetry::Net { k } => {
                let mut m = x.clone();
                m[k] = -x[k];
                (m, coefficient * x[k])
            }
            Symmetry::Swap { k, l } => {
                let mut m = x.clone();
                m.swap(k, l);
                (m, coefficient * (x[k] - x[l]))
            }
        };
        let tol = 1e-9 * params.x.spacing().iter().fold(1.0, |a: f64, &b| a.min(b));
        let j = match params.x.find(&mirror, tol) {
            Some(j) => j,
            None => {
                skipped += 1;
                continue;
            }
        };
        let (a, b) = (rate.values[i], rate.values[j]);
        if !(a.is_finite() && b.is_finite()) {
            skipped += 1;
            continue;
        }
        let (sa, sb) = (scgf.se[rate.argmax[i]], scgf.se[rate.argmax[j]]);
        points.push(SymmetryPoint {
            residual: a - b + correction,
            error_bar: (sa * sa + sb * sb).sqrt() + slack,
            x,
            mirror,
            i_x: a,
            i_mirror: b,
            correction,
        });
    }
    let mut abs: Vec<f64> = points.iter().map(|p| p.residual.abs()).collect();
    let mut bars: Vec<f64> = points.iter().map(|p| p.error_bar).collect();
    let median_abs_residual = median(&mut abs);
    let p90_abs_residual = quantile(&mut abs, 0.9);
    let max_abs_residual = abs.iter().copied().fold(0.0, f64::max);
    let median_error_bar = median(&mut bars);
    let states = chain.states();
    Ok(RateSymmetryReport {
        classification: "asymptotic identity checked statistically at finite t",
        target_formula,
        symmetry: params.symmetry,
        family: family.iter().map(|c| c.format(states)).collect(),
        start: states.label(start).to_string(),
        t: params.t,
        replicas: params.replicas,
        coefficient,
        pass: !points.is_empty() && median_abs_residual <= 2.0 * median_error_bar,
        points,
        skipped_points: skipped,
        degenerate_lambda_points: scgf.degenerate.iter().filter(|&&d| d).count(),
        median_abs_residual,
        median_error_bar,
        p90_abs_residual,
        max_abs_residual,
        scgf,
        rate,
    })
}
