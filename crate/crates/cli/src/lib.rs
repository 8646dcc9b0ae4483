//! Command-line workflows over the `chainfilter` library.

pub mod report;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chainfilter::higher_order::{embed_higher_order, embedded_support};
use chainfilter::identifiability::Verdict;
use chainfilter::io::{
    format_number, parse_chain, parse_filter, parse_filtered_chain, parse_matrix_csv, parse_support,
    parse_transition_matrix, write_binary_csv, write_chain, write_filtered_chain,
};
use chainfilter::{
    apply_filter, chi_square_test, classify_transitions, confidence_interval, identifiability_verdict,
    reduction_fraction, run_em, run_sem, simulate_chain, transition_counts, z_test, EmOptions, Error, FilteredData,
    SemOptions, SemStart, SupportMask, TransitionClass, TransitionMatrix,
};
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use thiserror::Error as ThisError;

use report::Report;

pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_CONSISTENCY: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;
pub const EXIT_UNKNOWN: i32 = 6;

#[derive(Debug, Parser)]
#[command(name = "chainfilter", version, about = "Estimate Markov chains observed through a filter matrix")]
pub struct Cli {
    #[command(flatten)]
    pub config: RunConfig,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// Number of states k; checked against matrix files when given
    #[arg(long, global = true)]
    pub states: Option<usize>,

    /// Chain order s for `embed`
    #[arg(long, global = true, default_value_t = 1)]
    pub order: usize,

    /// Token that marks a blank in filtered chain files
    #[arg(long, global = true, default_value = "-")]
    pub blank_token: String,

    /// EM stopping tolerance on the max-norm parameter change
    #[arg(long, global = true, default_value = "1e-12")]
    pub tol: f64,

    /// SEM tolerance on successive rate estimates
    #[arg(long, global = true, default_value = "1e-6")]
    pub sem_tol: f64,

    #[arg(long, global = true, default_value_t = 100_000)]
    pub max_iter: usize,

    /// RNG seed for `simulate`; drawn from the clock when absent
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Significance level for tests and intervals
    #[arg(long, global = true, default_value_t = 0.05)]
    pub alpha: f64,

    /// CSV 0/1 mask of transitions that may have positive probability
    #[arg(long, global = true)]
    pub support: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a chain from a transition matrix
    Simulate {
        #[arg(long)]
        matrix: PathBuf,
        /// Initial state (1-based)
        #[arg(long, default_value_t = 1)]
        initial: usize,
        /// Number of transitions
        #[arg(long)]
        length: usize,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Apply a filter matrix to a chain
    Filter {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        filter: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Check the sufficient identifiability conditions for a filter
    CheckFilter {
        #[arg(long)]
        filter: PathBuf,
    },
    /// EM estimate with SEM covariance from a filtered chain
    Estimate {
        #[arg(long)]
        filtered: PathBuf,
        #[arg(long)]
        filter: PathBuf,
        /// Write the key-value report here
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Wald tests of a null transition matrix against an estimate report
    Test {
        #[arg(long)]
        report: PathBuf,
        /// CSV transition matrix under the null hypothesis
        #[arg(long)]
        null: PathBuf,
        /// Write the key-value test report here
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Rewrite an order-s chain as a first-order chain on s-tuples
    Embed {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long)]
        support_output: PathBuf,
    },
}

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: Error },

    #[error(transparent)]
    Core(#[from] Error),

    #[error("report: {0}")]
    Report(String),

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn core(&self) -> Option<&Error> {
        match self {
            CliError::File { source, .. } | CliError::Core(source) => Some(source),
            _ => None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => EXIT_IO,
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Report(_) => EXIT_PARSE,
            _ => match self.core() {
                Some(Error::Io(_)) => EXIT_IO,
                Some(Error::Consistency(_)) => EXIT_CONSISTENCY,
                Some(
                    Error::ZeroRowTotal { .. }
                    | Error::ZeroDenominator { .. }
                    | Error::NonFinite
                    | Error::SingularBlock { .. }
                    | Error::RowNotConverged { .. }
                    | Error::SingularIMinusM1
                    | Error::SingularCovariance
                    | Error::NonPositiveVariance(_),
                ) => EXIT_NUMERICAL,
                _ => EXIT_PARSE,
            },
        }
    }

    pub fn hint(&self) -> Option<&'static str> {
        Some(match self.core()? {
            Error::Consistency(_) => "no complete chain filters to this input; check the filter matrix, the blank token and --support",
            Error::ZeroRowTotal { .. } => "a state is never left in the data; it cannot be estimated, so drop it or pass a support mask",
            Error::ZeroDenominator { .. } => "the current parameters give a gap zero probability; start from an interior matrix",
            Error::RowNotConverged { .. } => "try a looser --sem-tol (e.g. 1e-5) or a tighter --tol so that the EM estimate is more precise",
            Error::SingularIMinusM1 => "the filter may not identify the parameters; run check-filter",
            Error::SingularBlock { .. } => "an estimated probability is zero; the complete-data information is undefined on the boundary",
            Error::SingularCovariance => "the covariance is not positive definite; the parameters may not be identified",
            _ => return None,
        })
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn in_file<T>(path: &Path, r: chainfilter::Result<T>) -> Result<T> {
    r.map_err(|source| CliError::File { path: path.to_path_buf(), source })
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.sem_tol > 0.0) {
            return Err(CliError::Usage("tolerances must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Usage("--alpha must lie in (0, 1)".into()));
        }
        if self.order < 1 {
            return Err(CliError::Usage("--order must be at least 1".into()));
        }
        if self.max_iter == 0 {
            return Err(CliError::Usage("--max-iter must be positive".into()));
        }
        Ok(())
    }

    fn check_states(&self, k: usize) -> Result<()> {
        match self.states {
            Some(s) if s != k => Err(CliError::Core(Error::DimensionMismatch { expected: s, found: k })),
            _ => Ok(()),
        }
    }

    fn support(&self, k: usize) -> Result<Option<SupportMask>> {
        let Some(path) = &self.support else { return Ok(None) };
        let s = in_file(path, parse_support(&read(path)?))?;
        if s.k() != k {
            return Err(CliError::Core(Error::DimensionMismatch { expected: k, found: s.k() }));
        }
        Ok(Some(s))
    }
}

/// Runs one command; the returned value is the process exit status.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    cli.config.validate()?;
    let cfg = &cli.config;
    let status = match &cli.command {
        Command::Simulate { matrix, initial, length, output } => {
            cmd_simulate(cfg, matrix, *initial, *length, output, out, err)
        }
        Command::Filter { chain, filter, output } => cmd_filter(cfg, chain, filter, output, out),
        Command::CheckFilter { filter } => cmd_check_filter(cfg, filter, out),
        Command::Estimate { filtered, filter, report } => {
            cmd_estimate(cfg, filtered, filter, report.as_deref(), out, err)
        }
        Command::Test { report, null, output } => cmd_test(cfg, report, null, output.as_deref(), out),
        Command::Embed { chain, output, support_output } => cmd_embed(cfg, chain, output, support_output, out),
    }?;
    Ok(status)
}

fn io_err(e: io::Error) -> CliError {
    CliError::Io { path: PathBuf::from("<stdout>"), source: e }
}

fn print_matrix(out: &mut dyn Write, title: &str, m: &DMatrix<f64>) -> Result<()> {
    writeln!(out, "{}", title).map_err(io_err)?;
    let cells: Vec<Vec<String>> =
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| format_number(m[(i, j)])).collect()).collect();
    let width = cells.iter().flatten().map(String::len).max().unwrap_or(1);
    for row in cells {
        let line: Vec<String> = row.iter().map(|c| format!("{:>w$}", c, w = width)).collect();
        writeln!(out, "  {}", line.join("  ")).map_err(io_err)?;
    }
    Ok(())
}

fn cmd_simulate(
    cfg: &RunConfig,
    matrix: &Path,
    initial: usize,
    length: usize,
    output: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let text = read(matrix)?;
    let k = in_file(matrix, parse_matrix_csv(&text))?.nrows();
    cfg.check_states(k)?;
    let support = cfg.support(k)?;
    let p = in_file(matrix, parse_transition_matrix(&text, support.as_ref()))?;
    if initial == 0 || initial > k {
        return Err(CliError::Usage(format!("--initial must lie in 1..={}", k)));
    }
    let seed = cfg.seed.unwrap_or_else(|| {
        std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_nanos() as u64)
    });
    let x = simulate_chain(&p, initial - 1, length, seed)?;
    write(output, &write_chain(&x))?;

    let counts = transition_counts(&x);
    writeln!(out, "seed = {}", seed).map_err(io_err)?;
    writeln!(out, "states = {}", x.len()).map_err(io_err)?;
    print_matrix(out, "transition counts", counts.matrix())?;
    for i in 0..k {
        for j in p.support().row_support(i) {
            if counts.get(i, j) == 0.0 {
                writeln!(err, "warning: allowed transition {} -> {} never occurs", i + 1, j + 1).map_err(io_err)?;
            }
        }
    }
    Ok(0)
}

fn cmd_filter(cfg: &RunConfig, chain: &Path, filter: &Path, output: &Path, out: &mut dyn Write) -> Result<i32> {
    let f = in_file(filter, parse_filter(&read(filter)?))?;
    cfg.check_states(f.k())?;
    let x = in_file(chain, parse_chain(&read(chain)?, f.k()))?;
    let y = apply_filter(&x, &f)?;
    write(output, &write_filtered_chain(&y, &cfg.blank_token))?;

    writeln!(out, "reduction = {}", format_number(reduction_fraction(&y))).map_err(io_err)?;
    writeln!(out, "blanks = {} of {}", y.blanks(), y.len()).map_err(io_err)?;
    writeln!(out, "transition  class").map_err(io_err)?;
    for ((i, j), class) in classify_transitions(&x, &f)? {
        let name = match class {
            TransitionClass::DirectlyRecorded => "direct",
            TransitionClass::IndirectlyRecorded => "indirect",
            TransitionClass::Unobserved => "unobserved",
        };
        writeln!(out, "{:>4} -> {:<4} {}", i + 1, j + 1, name).map_err(io_err)?;
    }
    Ok(0)
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn cmd_check_filter(cfg: &RunConfig, filter: &Path, out: &mut dyn Write) -> Result<i32> {
    let f = in_file(filter, parse_filter(&read(filter)?))?;
    cfg.check_states(f.k())?;
    let support = cfg.support(f.k())?;
    let v = identifiability_verdict(&f, support.as_ref());
    let w = |s: String| writeln!(out, "{}", s).map_err(io_err);
    let mut lines = vec![
        format!("class C1 = {}", yes_no(v.in_c1)),
        format!("class C2 = {}", yes_no(v.in_c2)),
        format!("class C3 = {}", yes_no(v.in_c3)),
    ];
    let r = match &support {
        Some(s) if !s.is_full() => yes_no(v.satisfies_r).to_string(),
        _ => format!("{} (not required without structural zeros)", yes_no(v.satisfies_r)),
    };
    lines.push(format!("restriction R = {}", r));
    let status = match (&v.closure_witness, v.verdict) {
        (Some(cw), Verdict::SufficientIdentifiable) => {
            lines.push(format!("witness class = {}", cw.class));
            lines.push(format!("witness alpha = {}", cw.alpha + 1));
            lines.push(format!("witness beta = {}", cw.beta + 1));
            lines.push("witness matrix =".into());
            lines.extend(cw.matrix.to_string().lines().map(|l| format!("  {}", l)));
            lines.push("verdict = SufficientIdentifiable".into());
            0
        }
        _ => {
            lines.push("verdict = Unknown (sufficient conditions not met; this does not prove non-identifiability)".into());
            EXIT_UNKNOWN
        }
    };
    lines.into_iter().try_for_each(w)?;
    Ok(status)
}

fn cmd_estimate(
    cfg: &RunConfig,
    filtered: &Path,
    filter: &Path,
    report_path: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let f = in_file(filter, parse_filter(&read(filter)?))?;
    let k = f.k();
    cfg.check_states(k)?;
    let support = cfg.support(k)?;
    let y = in_file(filtered, parse_filtered_chain(&read(filtered)?, k, &cfg.blank_token))?;
    let data = in_file(filtered, FilteredData::new(&y, &f, support.as_ref()))?;

    let verdict = identifiability_verdict(&f, support.as_ref());
    if verdict.verdict == Verdict::Unknown {
        writeln!(err, "warning: the filter does not meet the sufficient identifiability conditions").map_err(io_err)?;
    }

    let start = TransitionMatrix::uniform(data.support())?;
    let em = run_em(&data, &start, EmOptions { tol: cfg.tol, max_iter: cfg.max_iter })?;
    if !em.converged {
        writeln!(err, "warning: EM stopped after {} iterations without meeting --tol", em.iterations)
            .map_err(io_err)?;
    }
    let sem = run_sem(&data, &em, SemStart::TwoSd, SemOptions { tol: cfg.sem_tol, max_iter: cfg.max_iter })?;

    let mut rep = Report::new();
    rep.text("estimate.k", k);
    rep.text("estimate.iterations", em.iterations);
    rep.text("estimate.converged", em.converged);
    rep.number("estimate.loglik", em.final_observed_loglik);
    rep.number("estimate.reduction", reduction_fraction(&y));
    rep.matrix("estimate.theta", em.estimate.probs());
    rep.matrix("estimate.expected_counts", em.expected_counts.matrix());
    rep.text("sem.dim", sem.layout.dim());
    for (n, &(i, j)) in sem.layout.coords().iter().enumerate() {
        rep.text(format!("sem.param.{}", n + 1), format!("{}.{}", i + 1, j + 1));
    }
    for (n, &t) in sem.theta_hat.iter().enumerate() {
        rep.number(format!("sem.theta.{}", n + 1), t);
    }
    rep.matrix("sem.v_com", &sem.v_com);
    rep.matrix("sem.m1", &sem.m1);
    rep.matrix("sem.v_obs", &sem.v_obs);
    rep.matrix("sem.delta_v", &sem.delta_v);
    rep.number("sem.asymmetry", sem.asymmetry);
    rep.number("config.alpha", cfg.alpha);
    rep.number("config.tol", cfg.tol);
    rep.number("config.sem_tol", cfg.sem_tol);

    let mut rows = Vec::new();
    for (n, &(i, j)) in sem.layout.coords().iter().enumerate() {
        let var = sem.v_obs[(n, n)];
        let se = var.max(0.0).sqrt();
        rep.number(format!("sem.se.{}", n + 1), se);
        let ci = match confidence_interval(sem.theta_hat[n], var, cfg.alpha) {
            Ok(ci) => {
                let (clamped, cut) = ci.clamp_unit();
                rep.number(format!("sem.ci.{}.lower", n + 1), clamped.lower);
                rep.number(format!("sem.ci.{}.upper", n + 1), clamped.upper);
                rep.text(format!("sem.ci.{}.clamped", n + 1), cut);
                format!(
                    "[{}, {}]{}",
                    format_number(clamped.lower),
                    format_number(clamped.upper),
                    if cut { " clamped" } else { "" }
                )
            }
            Err(_) => "undefined".into(),
        };
        rows.push(format!(
            "  p{}{}  {:>16}  {:>16}  {}",
            i + 1,
            j + 1,
            format_number(sem.theta_hat[n]),
            format_number(se),
            ci
        ));
    }

    let w = |out: &mut dyn Write, s: &str| writeln!(out, "{}", s).map_err(io_err);
    w(out, &format!("iterations = {}", em.iterations))?;
    w(out, &format!("converged = {}", em.converged))?;
    w(out, &format!("log-likelihood = {}", format_number(em.final_observed_loglik)))?;
    print_matrix(out, "theta", em.estimate.probs())?;
    print_matrix(out, "V_com", &sem.v_com)?;
    print_matrix(out, "M1", &sem.m1)?;
    print_matrix(out, "V_obs", &sem.v_obs)?;
    print_matrix(out, "delta V", &sem.delta_v)?;
    w(out, &format!("asymmetry = {}", format_number(sem.asymmetry)))?;
    w(out, &format!("parameter  estimate  std.error  {}% CI", format_number(100.0 * (1.0 - cfg.alpha))))?;
    for r in rows {
        w(out, &r)?;
    }
    if let Some(path) = report_path {
        write(path, &rep.render())?;
    }
    Ok(0)
}

fn cmd_test(cfg: &RunConfig, report: &Path, null: &Path, output: Option<&Path>, out: &mut dyn Write) -> Result<i32> {
    let rep = Report::parse(&read(report)?)?;
    let k = rep.usize("estimate.k")?;
    let d = rep.usize("sem.dim")?;
    let mut coords = Vec::with_capacity(d);
    for n in 1..=d {
        let key = format!("sem.param.{}", n);
        let v = rep.get(&key)?;
        let bad = || CliError::Report(format!("'{}' is not a parameter index for key '{}'", v, key));
        let (i, j) = v.split_once('.').ok_or_else(bad)?;
        let (i, j): (usize, usize) = (i.parse().map_err(|_| bad())?, j.parse().map_err(|_| bad())?);
        if i == 0 || j == 0 || i > k || j > k {
            return Err(bad());
        }
        coords.push((i - 1, j - 1));
    }
    let theta_hat: Vec<f64> =
        (1..=d).map(|n| rep.number(&format!("sem.theta.{}", n))).collect::<Result<_>>()?;
    let v_obs = rep.matrix("sem.v_obs", d, d)?;

    let null_m = in_file(null, parse_matrix_csv(&read(null)?))?;
    if null_m.nrows() != k {
        return Err(CliError::Core(Error::DimensionMismatch { expected: k, found: null_m.nrows() }));
    }
    let theta0: Vec<f64> = coords.iter().map(|&(i, j)| null_m[(i, j)]).collect();

    let levels = [cfg.alpha];
    let chi = chi_square_test(&theta_hat, &theta0, &v_obs, &levels)?;
    let mut kv = Report::new();
    kv.number("test.chi2", chi.statistic);
    kv.text("test.df", d);
    kv.text("test.df_all_entries", k * k);
    kv.number("test.p_value", chi.p_value);
    kv.text("test.reject", chi.decisions[0].1);

    let w = |out: &mut dyn Write, s: String| writeln!(out, "{}", s).map_err(io_err);
    w(out, format!("chi-square = {}", format_number(chi.statistic)))?;
    w(out, format!("df = {} (free parameters; counting all k^2 entries gives {})", d, k * k))?;
    w(out, format!("p-value = {}", format_number(chi.p_value)))?;
    w(out, format!("reject at alpha {} = {}", format_number(cfg.alpha), chi.decisions[0].1))?;
    w(out, "parameter  estimate  null  z  p-value  reject".into())?;
    for (n, &(i, j)) in coords.iter().enumerate() {
        let var = v_obs[(n, n)];
        let label = format!("p{}{}", i + 1, j + 1);
        match z_test(theta_hat[n], theta0[n], var, &levels) {
            Ok(z) => {
                kv.number(format!("test.z.{}.statistic", n + 1), z.statistic);
                kv.number(format!("test.z.{}.p_value", n + 1), z.p_value);
                kv.text(format!("test.z.{}.reject", n + 1), z.decisions[0].1);
                w(
                    out,
                    format!(
                        "  {}  {}  {}  {}  {}  {}",
                        label,
                        format_number(theta_hat[n]),
                        format_number(theta0[n]),
                        format_number(z.statistic),
                        format_number(z.p_value),
                        z.decisions[0].1
                    ),
                )?;
            }
            Err(e) => w(out, format!("  {}  {}", label, e))?,
        }
    }
    if let Some(path) = output {
        write(path, &kv.render())?;
    }
    Ok(0)
}

fn cmd_embed(cfg: &RunConfig, chain: &Path, output: &Path, support_output: &Path, out: &mut dyn Write) -> Result<i32> {
    let k = cfg.states.ok_or_else(|| CliError::Usage("embed needs --states".into()))?;
    let s = cfg.order;
    if s < 2 {
        return Err(CliError::Usage("embed needs --order of at least 2".into()));
    }
    let x = in_file(chain, parse_chain(&read(chain)?, k))?;
    let y = embed_higher_order(&x, s)?;
    let support = embedded_support(k, s)?;
    write(output, &write_chain(&y))?;
    write(support_output, &write_binary_csv(support.k(), |i, j| support.get(i, j)))?;
    writeln!(out, "embedded states = {}", support.k()).map_err(io_err)?;
    writeln!(out, "tokens = {}", y.len()).map_err(io_err)?;
    writeln!(out, "allowed transitions = {}", support.count_allowed()).map_err(io_err)?;
    Ok(0)
}
