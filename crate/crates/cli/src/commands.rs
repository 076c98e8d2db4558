use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use cyclecirc_core::exact::{exact_count_dist, write_oracle_csv};
use cyclecirc_core::lab::entropy::write_entropy_csv;
use cyclecirc_core::lab::{
    entropy_experiment, ft_check, haldane_test, rate_function, rate_symmetry_check, scgf_estimate,
    write_cells_csv, write_rate_csv, FamilyMode, FtParams, HaldaneParams, Mode, Observable,
    ProductGrid, RateSymmetryParams, Report, ScgfEstimate, Symmetry,
};
use cyclecirc_core::simulator::{par_replicas, write_events_csv};
use cyclecirc_core::{
    batch_sample, cycle_affinity, cycle_strength, extract_events, kolmogorov_reversible,
    replica_rng, simulate_with, Affinity, BatchConfig, ChainKind, ChainSpec, CycleEvent,
    Error as CoreError, Horizon,
};
use serde::Serialize;

use crate::args::{
    Cli, Command, Common, EntropyArgs, ExactArgs, FtArgs, HaldaneArgs, RateArgs, ScgfArgs,
    ValidateArgs,
};
use crate::spec::{parse_spec, ExperimentSpec, SpecError};

pub const THREADS_ENV: &str = "CYCLECIRC_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Spec(#[from] SpecError),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: CoreError,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

trait Context<T> {
    fn ctx(self, context: &str) -> Result<T, CliError>;
}

impl<T> Context<T> for Result<T, CoreError> {
    fn ctx(self, context: &str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Core {
            context: context.to_string(),
            source,
        })
    }
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Reject,
}

impl Verdict {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Reject
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Reject => 2,
        }
    }
}

pub fn run(cli: Cli) -> Result<Verdict, CliError> {
    match cli.command {
        Command::Validate(a) => validate(a),
        Command::Simulate(a) => simulate(a),
        Command::Haldane(a) => haldane(a),
        Command::Ft(a) => ft(a),
        Command::Scgf(a) => scgf(a),
        Command::Rate(a) => rate(a),
        Command::Exact(a) => exact(a),
        Command::Entropy(a) => entropy(a),
    }
}

/// Worker count: `CYCLECIRC_THREADS` if set, otherwise every core.
pub fn workers() -> Result<usize, CliError> {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Usage(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(cores),
    }
}

fn load(common: &Common) -> Result<ExperimentSpec, CliError> {
    let mut spec = parse_spec(&common.chain)?;
    if let Some(c) = &common.cycles {
        spec.set_cycles(c).ctx("--cycles")?;
    }
    if let Some(s) = &common.start {
        spec.set_start(s).ctx("--start")?;
    }
    if common.t.is_some() {
        spec.t = common.t;
    }
    if common.steps.is_some() {
        spec.steps = common.steps;
    }
    if common.replicas.is_some() {
        spec.replicas = common.replicas;
    }
    if common.seed.is_some() {
        spec.seed = common.seed;
    }
    if spec.replicas == Some(0) {
        return Err(CliError::Usage("--replicas must be at least 1".into()));
    }
    Ok(spec)
}

fn require_cycles(spec: &ExperimentSpec, command: &str) -> Result<(), CliError> {
    if spec.cycles.is_empty() {
        Err(CliError::Usage(format!(
            "{command} needs a cycle family (--cycles or experiment.cycles)"
        )))
    } else {
        Ok(())
    }
}

fn horizon(
    spec: &ExperimentSpec,
    default_t: f64,
    default_steps: usize,
) -> Result<Horizon, CliError> {
    match spec.chain.kind() {
        ChainKind::Ctmc if spec.steps.is_some() && spec.t.is_none() => Err(CliError::Usage(
            "a CTMC takes a time horizon (--t), not --steps".into(),
        )),
        ChainKind::Dtmc if spec.t.is_some() && spec.steps.is_none() => Err(CliError::Usage(
            "a DTMC takes a step horizon (--steps), not --t".into(),
        )),
        ChainKind::Ctmc => {
            let t = spec.t.unwrap_or(default_t);
            if t > 0.0 && t.is_finite() {
                Ok(Horizon::Time(t))
            } else {
                Err(CliError::Usage(format!("--t must be positive, got {t}")))
            }
        }
        ChainKind::Dtmc => Ok(Horizon::Steps(spec.steps.unwrap_or(default_steps))),
    }
}

fn mode(flag: Option<&str>, spec: &ExperimentSpec) -> Result<Mode, CliError> {
    match flag {
        Some(m) => m.parse().ctx("--mode"),
        None => Ok(spec.mode.unwrap_or(Mode::Exact)),
    }
}

/// Parses a grid flag (or takes the file's grid) and widens one shared axis
/// to `dim` axes.
fn grid(
    flag: Option<&str>,
    file: Option<&ProductGrid>,
    dim: usize,
    name: &str,
) -> Result<Option<ProductGrid>, CliError> {
    let g = match flag {
        Some(s) => Some(s.parse::<ProductGrid>().ctx(name)?),
        None => file.cloned(),
    };
    match g {
        Some(g) if g.dim() == dim => Ok(Some(g)),
        Some(g) if g.dim() == 1 => Ok(Some(
            ProductGrid::uniform(g.axes()[0].clone(), dim).ctx(name)?,
        )),
        Some(g) => Err(CliError::Usage(format!(
            "{name} has {} axes but there are {dim} cycles",
            g.dim()
        ))),
        None => Ok(None),
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|source| CliError::Io {
                path: p.to_path_buf(),
                source,
            })?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    let mut out = open_out(path)?;
    let label = path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf);
    out.write_all(text.as_bytes())
        .and_then(|_| out.write_all(b"\n"))
        .and_then(|_| out.flush())
        .map_err(|source| CliError::Io {
            path: label,
            source,
        })
}

/// Everything that determines a report, hashed into its digest.
#[derive(Serialize)]
struct Inputs<'a, P: Serialize> {
    kind: ChainKind,
    states: &'a [String],
    matrix: Vec<Vec<f64>>,
    cycles: Vec<String>,
    start: &'a str,
    params: &'a P,
}

fn inputs<'a, P: Serialize>(
    spec: &'a ExperimentSpec,
    start: usize,
    params: &'a P,
) -> Inputs<'a, P> {
    let labels = spec.labels();
    Inputs {
        kind: spec.chain.kind(),
        states: labels.labels(),
        matrix: spec.chain.rows(),
        cycles: spec.cycles.iter().map(|c| c.format(labels)).collect(),
        start: labels.label(start),
        params,
    }
}

fn validate(a: ValidateArgs) -> Result<Verdict, CliError> {
    let common = Common {
        chain: a.chain,
        cycles: a.cycles,
        start: a.start,
        t: None,
        steps: None,
        replicas: None,
        seed: None,
        out: None,
    };
    let spec = load(&common)?;
    let labels = spec.labels();
    let chain = &spec.chain;
    let mut lines = vec![
        format!("file: {}", spec.path.display()),
        format!(
            "kind: {}",
            match chain.kind() {
                ChainKind::Ctmc => "ctmc",
                ChainKind::Dtmc => "dtmc",
            }
        ),
        format!("states: {}", labels.labels().join(", ")),
    ];
    if let Some(s) = spec.start {
        lines.push(format!("start: {}", labels.label(s)));
    }
    let pi = chain.stationary().ctx("stationary distribution")?;
    let pis: Vec<String> = pi
        .iter()
        .enumerate()
        .map(|(i, p)| format!("{}={p:.6}", labels.label(i)))
        .collect();
    lines.push(format!("stationary: {}", pis.join(" ")));
    let rev = kolmogorov_reversible(chain, chain.size());
    lines.push(match &rev.witness {
        None => "reversible: yes".to_string(),
        Some(w) => format!("reversible: no (witness {})", w.format(labels)),
    });
    for c in &spec.cycles {
        let g = cycle_strength(chain, c).ctx("cycle strength")?;
        let aff = match cycle_affinity(chain, c) {
            Ok(Affinity::Finite(v)) => format!("{v:.6}"),
            Ok(Affinity::PosInfinity) => "+inf".into(),
            Err(_) => "undefined".into(),
        };
        lines.push(format!(
            "cycle {}: strength {g:.6e}, affinity {aff}",
            c.format(labels)
        ));
    }
    write_text(None, &lines.join("\n"))?;
    Ok(Verdict::Pass)
}

fn simulate(a: Common) -> Result<Verdict, CliError> {
    let spec = load(&a)?;
    let h = horizon(&spec, 10.0, 100)?;
    let start = spec.start_or_first();
    let replicas = spec.replicas.unwrap_or(1);
    let seed = spec.seed.unwrap_or(0);
    let chain = &spec.chain;
    let watched = &spec.cycles;
    let logs: Vec<Result<Vec<CycleEvent>, CoreError>> = par_replicas(replicas, workers()?, |r| {
        let mut rng = replica_rng(seed, r as u64);
        let traj = simulate_with(chain, start, h, &mut rng)?;
        Ok(extract_events(&traj, watched)?.events)
    })
    .ctx("simulate")?;
    let logs = logs
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .ctx("simulate")?;
    let refs: Vec<(usize, &[CycleEvent])> = logs
        .iter()
        .enumerate()
        .map(|(r, e)| (r, e.as_slice()))
        .collect();
    let out = open_out(a.out.as_deref())?;
    write_events_csv(out, spec.labels(), &refs).ctx("simulate")?;
    Ok(Verdict::Pass)
}

fn haldane(a: HaldaneArgs) -> Result<Verdict, CliError> {
    let spec = load(&a.common)?;
    require_cycles(&spec, "haldane")?;
    let family_mode: FamilyMode = a.family_mode.parse().ctx("--family-mode")?;
    let mode = mode(a.mode.as_deref(), &spec)?;
    let defaults = HaldaneParams::default();
    let params = HaldaneParams {
        mode,
        family_mode,
        n_max: spec.steps.unwrap_or(defaults.n_max),
        times: a.times.clone(),
        replicas: spec.replicas.unwrap_or(defaults.replicas),
        seed: spec.seed.unwrap_or(0),
        workers: workers()?,
        ..defaults
    };
    let start = spec.start_or_first();
    let report = haldane_test(&spec.chain, &spec.cycles, start, &params).ctx("haldane")?;
    if let Some(p) = &a.cells {
        write_cells_csv(open_out(Some(p))?, &report.cells()).ctx("cells output")?;
    }
    let pass = report.pass;
    let json = Report::new(
        "haldane",
        mode.as_str(),
        &inputs(&spec, start, &params),
        pass,
        report,
    )
    .and_then(|r| r.to_json())
    .ctx("report")?;
    write_text(a.common.out.as_deref(), &json)?;
    Ok(Verdict::from_pass(pass))
}

fn ft(a: FtArgs) -> Result<Verdict, CliError> {
    let spec = load(&a.common)?;
    require_cycles(&spec, "ft")?;
    let mode = mode(a.mode.as_deref(), &spec)?;
    let defaults = FtParams::default();
    let h = horizon(&spec, 2.0, 20)?;
    let lambda = grid(
        a.lambda_grid.as_deref(),
        spec.lambda_grid.as_ref(),
        spec.cycles.len(),
        "--lambda-grid",
    )?;
    let params = FtParams {
        mode,
        horizon: h,
        cap: a.caps.or(spec.caps).unwrap_or(defaults.cap),
        lambda_grid: lambda.map(|g| g.axes().to_vec()),
        replicas: spec.replicas.unwrap_or(defaults.replicas),
        seed: spec.seed.unwrap_or(0),
        workers: workers()?,
    };
    let start = spec.start_or_first();
    let report = ft_check(&spec.chain, &spec.cycles, start, &params).ctx("ft")?;
    if let Some(p) = &a.cells {
        write_cells_csv(open_out(Some(p))?, &report.cells()).ctx("cells output")?;
    }
    let pass = report.pass;
    let json = Report::new(
        "ft",
        mode.as_str(),
        &inputs(&spec, start, &params),
        pass,
        report,
    )
    .and_then(|r| r.to_json())
    .ctx("report")?;
    write_text(a.common.out.as_deref(), &json)?;
    Ok(Verdict::from_pass(pass))
}

fn sample_scgf(
    spec: &ExperimentSpec,
    observable: Observable,
    lambda: &ProductGrid,
) -> Result<ScgfEstimate, CliError> {
    let config = BatchConfig {
        start: spec.start_or_first(),
        horizon: horizon(spec, 200.0, 200)?,
        replicas: spec.replicas.unwrap_or(10_000),
        seed: spec.seed.unwrap_or(0),
        workers: workers()?,
        cycles: spec.cycles.clone(),
        record_events: false,
    };
    let samples: Vec<_> = batch_sample(&spec.chain, &config)
        .ctx("sampling")?
        .into_iter()
        .map(|r| r.sample)
        .collect();
    scgf_estimate(&samples, observable, lambda).ctx("scgf")
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "+inf" } else { "-inf" }.into()
    } else {
        format!("{v:e}")
    }
}

fn scgf(a: ScgfArgs) -> Result<Verdict, CliError> {
    let spec = load(&a.common)?;
    require_cycles(&spec, "scgf")?;
    let observable: Observable = a.observable.parse().ctx("--observable")?;
    let lambda = grid(
        a.lambda_grid.as_deref(),
        spec.lambda_grid.as_ref(),
        spec.cycles.len(),
        "--lambda-grid",
    )?
    .ok_or_else(|| CliError::Usage("scgf needs --lambda-grid".into()))?;
    let est = sample_scgf(&spec, observable, &lambda)?;
    let mut w = csv::Writer::from_writer(open_out(a.common.out.as_deref())?);
    let csv_err = |e: csv::Error| CliError::Usage(format!("csv output failed: {e}"));
    let mut header: Vec<String> = (1..=lambda.dim()).map(|d| format!("lambda_{d}")).collect();
    header.extend(["scgf", "se", "ess", "degenerate"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for k in 0..lambda.len() {
        let mut row: Vec<String> = lambda.point(k).iter().map(|x| x.to_string()).collect();
        row.push(fmt_f64(est.values[k]));
        row.push(fmt_f64(est.se[k]));
        row.push(fmt_f64(est.ess[k]));
        row.push(est.degenerate[k].to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| CliError::Usage(format!("csv output failed: {e}")))?;
    let bad = est.degenerate.iter().filter(|&&d| d).count();
    if bad > 0 {
        eprintln!("warning: {bad} lambda points have too few effective samples");
    }
    Ok(Verdict::Pass)
}

/// Parses `net:K` or `swap:K,L` with 1-based positions.
pub fn parse_check(text: &str, r: usize) -> Result<Symmetry, CliError> {
    let bad = || CliError::Usage(format!("--check expects net:K or swap:K,L, got `{text}`"));
    let (kind, rest) = text.split_once(':').ok_or_else(bad)?;
    let idx: Vec<usize> = rest
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    if idx.iter().any(|&i| i == 0 || i > r) {
        return Err(CliError::Usage(format!(
            "--check positions must lie in 1..={r}, got `{rest}`"
        )));
    }
    match (kind.trim(), idx.as_slice()) {
        ("net", [k]) => Ok(Symmetry::Net { k: k - 1 }),
        ("swap", [k, l]) if k != l => Ok(Symmetry::Swap { k: k - 1, l: l - 1 }),
        _ => Err(bad()),
    }
}

fn rate(a: RateArgs) -> Result<Verdict, CliError> {
    let spec = load(&a.common)?;
    require_cycles(&spec, "rate")?;
    let r = spec.cycles.len();
    let lambda = grid(
        a.lambda_grid.as_deref(),
        spec.lambda_grid.as_ref(),
        r,
        "--lambda-grid",
    )?
    .ok_or_else(|| CliError::Usage("rate needs --lambda-grid".into()))?;
    let x = grid(a.x_grid.as_deref(), spec.x_grid.as_ref(), r, "--x-grid")?
        .ok_or_else(|| CliError::Usage("rate needs --x-grid".into()))?;
    let out = open_out(a.common.out.as_deref())?;
    let Some(check) = &a.check else {
        let observable: Observable = a.observable.parse().ctx("--observable")?;
        let est = sample_scgf(&spec, observable, &lambda)?;
        let rf = rate_function(&est, &x).ctx("rate function")?;
        write_rate_csv(out, &rf).ctx("rate output")?;
        return Ok(Verdict::Pass);
    };
    let t = match horizon(&spec, 200.0, 200)? {
        Horizon::Time(t) => t,
        Horizon::Steps(n) => n as f64,
    };
    let params = RateSymmetryParams {
        symmetry: parse_check(check, r)?,
        t,
        replicas: spec.replicas.unwrap_or(10_000),
        seed: spec.seed.unwrap_or(0),
        workers: workers()?,
        lambda,
        x,
    };
    let start = spec.start_or_first();
    let report =
        rate_symmetry_check(&spec.chain, &spec.cycles, start, &params).ctx("rate symmetry")?;
    write_rate_csv(out, &report.rate).ctx("rate output")?;
    let pass = report.pass;
    let summary = format!(
        "rate symmetry ({}): median |residual| {:.4e}, median error bar {:.4e}, {}",
        report.classification,
        report.median_abs_residual,
        report.median_error_bar,
        if pass { "pass" } else { "reject" }
    );
    let json = Report::new("rate", "mc", &inputs(&spec, start, &params), pass, report)
        .and_then(|r| r.to_json())
        .ctx("report")?;
    match &a.report {
        Some(p) => write_text(Some(p), &json)?,
        None => eprintln!("{summary}"),
    }
    Ok(Verdict::from_pass(pass))
}

fn exact(a: ExactArgs) -> Result<Verdict, CliError> {
    let spec = load(&a.common)?;
    require_cycles(&spec, "exact")?;
    let h = horizon(&spec, 2.0, 20)?;
    let cap = a.caps.or(spec.caps).unwrap_or(20);
    let caps = vec![cap; spec.cycles.len()];
    let dist = exact_count_dist(&spec.chain, &spec.cycles, spec.start_or_first(), h, &caps)
        .ctx("exact")?;
    write_oracle_csv(open_out(a.common.out.as_deref())?, &dist).ctx("oracle output")?;
    Ok(Verdict::Pass)
}

fn entropy(a: EntropyArgs) -> Result<Verdict, CliError> {
    let spec = load(&a.common)?;
    let ChainSpec::Ctmc(chain) = &spec.chain else {
        return Err(CliError::Usage("entropy needs a ctmc chain".into()));
    };
    let times = match (&a.times, spec.t) {
        (Some(ts), _) => ts.clone(),
        (None, Some(t)) => vec![t],
        (None, None) => vec![10.0, 20.0, 50.0, 100.0, 200.0],
    };
    // stationary start unless a start state is named on the command line
    let p0 = match &a.common.start {
        Some(_) => {
            let mut p = vec![0.0; chain.size()];
            p[spec.start_or_first()] = 1.0;
            p
        }
        None => chain.stationary().ctx("stationary distribution")?,
    };
    let replicas = spec.replicas.unwrap_or(1000);
    let seed = spec.seed.unwrap_or(0);
    let run = entropy_experiment(chain, &p0, &times, replicas, seed, workers()?).ctx("entropy")?;
    write_entropy_csv(open_out(a.common.out.as_deref())?, &run.series).ctx("entropy output")?;
    let pass = run.report.pass;
    let r = &run.report;
    let summary = format!(
        "entropy: e_p {:.6}, C_fit {:.4} vs C_bound {:.4}, {}",
        r.entropy_production_rate,
        r.c_fit,
        r.c_bound,
        if pass { "pass" } else { "reject" }
    );
    #[derive(Serialize)]
    struct EntropyInputs<'a> {
        p0: &'a [f64],
        times: &'a [f64],
        replicas: usize,
        seed: u64,
    }
    let params = EntropyInputs {
        p0: &p0,
        times: &times,
        replicas,
        seed,
    };
    let json = Report::new(
        "entropy",
        "mc",
        &inputs(&spec, spec.start_or_first(), &params),
        pass,
        run.report,
    )
    .and_then(|r| r.to_json())
    .ctx("report")?;
    match &a.report {
        Some(p) => write_text(Some(p), &json)?,
        None => eprintln!("{summary}"),
    }
    Ok(Verdict::from_pass(pass))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_syntax() {
        assert_eq!(parse_check("net:1", 2).unwrap(), Symmetry::Net { k: 0 });
        assert_eq!(
            parse_check("swap:2,1", 2).unwrap(),
            Symmetry::Swap { k: 1, l: 0 }
        );
        assert!(parse_check("net:0", 2).is_err());
        assert!(parse_check("net:3", 2).is_err());
        assert!(parse_check("swap:1,1", 2).is_err());
        assert!(parse_check("flip:1", 2).is_err());
        assert!(parse_check("net", 2).is_err());
    }

    #[test]
    fn verdict_codes() {
        assert_eq!(Verdict::Pass.exit_code(), 0);
        assert_eq!(Verdict::Reject.exit_code(), 2);
        assert_eq!(Verdict::from_pass(false), Verdict::Reject);
    }

    #[test]
    fn float_cells() {
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_f64(0.5), "5e-1");
    }
}
