//! Command-line front end for the `treerecon` engines.
//!
//! [`execute`] parses arguments and runs a command in-process, returning
//! what the binary would print; `main` only forwards the result.
//!
//! CSV payloads go to `--output` or stdout. The one-line summary record goes
//! to stdout when the payload is written to a file (or there is no payload)
//! and to stderr otherwise. Errors print `error kind=<kind> message=<text>`
//! on stderr and exit with 2 (validation/domain), 3 (capacity) or
//! 4 (bracket).

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use treerecon::broadcast::TreeShape;
use treerecon::channel::{ks_check, ChannelParams, Spectrum};
use treerecon::dynsys::{self, DynState, IterationLimits};
use treerecon::exact::{exact_level, DEFAULT_ENUMERATION_CAP};
use treerecon::output::{self, Summary};
use treerecon::popdyn::{self, MomentRow, PopulationSearch, SurvivalCriteria};
use treerecon::{Error, Result};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "treerecon", version, about = "Reconstruction on d-ary trees with a two-category channel")]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write the CSV payload here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ChannelArgs {
    /// States per category (2q states in total).
    #[arg(long)]
    q: usize,
    #[arg(long, allow_hyphen_values = true)]
    lambda1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    lambda2: Option<f64>,
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long)]
    p1: Option<f64>,
    #[arg(long)]
    p2: Option<f64>,
}

impl ChannelArgs {
    fn params(&self) -> Result<ChannelParams> {
        match (self.lambda1, self.lambda2, self.p0, self.p1, self.p2) {
            (Some(l1), Some(l2), None, None, None) => ChannelParams::from_eigenvalues(self.q, l1, l2),
            (None, None, Some(p0), Some(p1), Some(p2)) => ChannelParams::new(self.q, p0, p1, p2),
            _ => Err(Error::Validation("give exactly one of --lambda1/--lambda2 or --p0/--p1/--p2".into())),
        }
    }

    /// The truncated map needs only the eigenvalues, so a λ pair is taken
    /// as given without a feasibility check.
    fn spectrum(&self) -> Result<Spectrum> {
        match (self.lambda1, self.lambda2, self.p0) {
            (Some(l1), Some(l2), None) if self.p1.is_none() && self.p2.is_none() => {
                if self.q < 2 {
                    return Err(Error::Validation(format!("q must be >= 2, got {}", self.q)));
                }
                Ok(Spectrum::new(l1, l2))
            }
            _ => Ok(self.params()?.spectrum()),
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Channel probabilities, spectrum and Kesten-Stigum report.
    Channel {
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long)]
        d: Option<usize>,
    },
    /// Exact moments by enumeration for levels 0..=n.
    Exact {
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        n: usize,
        /// Largest number of leaf configurations to enumerate per level.
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: u64,
    },
    /// Monte Carlo moments from independent full-tree samples, levels 0..=n.
    Mctree {
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Population dynamics moment series with a survival verdict.
    Popdyn {
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = popdyn::DEFAULT_POPULATION)]
        population: usize,
        #[arg(long, default_value_t = popdyn::DEFAULT_LEVELS)]
        levels: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Orbit of the truncated map from (X, Z) = (x0, z0).
    Dynsys {
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long)]
        d: usize,
        #[arg(long, allow_hyphen_values = true)]
        x0: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        z0: f64,
        #[arg(long, default_value_t = dynsys::DEFAULT_MAX_ITER)]
        iters: usize,
        #[arg(long, default_value_t = dynsys::DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = dynsys::DEFAULT_ESCAPE_BOUND)]
        bound: f64,
    },
    /// Fixed points of the truncated map and their multipliers.
    Fixedpoints {
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long)]
        d: usize,
    },
    /// Threshold in lambda1 at fixed lambda2.
    Threshold {
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        q: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, allow_hyphen_values = true)]
        lambda2: f64,
        #[arg(long)]
        lo: f64,
        #[arg(long)]
        hi: f64,
        /// Bisection resolution (default 1e-4 for dynsys, 0.005 for popdyn).
        #[arg(long)]
        resolution: Option<f64>,
        /// Starting X for the dynsys method.
        #[arg(long, default_value_t = 0.5)]
        x_start: f64,
        #[arg(long, default_value_t = popdyn::DEFAULT_POPULATION)]
        population: usize,
        #[arg(long, default_value_t = popdyn::DEFAULT_LEVELS)]
        levels: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Classification over a lambda1 x lambda2 grid.
    Sweep {
        #[arg(long, value_enum, default_value_t = Method::Dynsys)]
        method: Method,
        #[arg(long)]
        q: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, num_args = 3, value_names = ["MIN", "MAX", "STEPS"], allow_hyphen_values = true)]
        lambda1: Vec<f64>,
        #[arg(long, num_args = 3, value_names = ["MIN", "MAX", "STEPS"], allow_hyphen_values = true)]
        lambda2: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        x0: f64,
        #[arg(long, default_value_t = 0.0)]
        z0: f64,
        #[arg(long, default_value_t = 10_000)]
        population: usize,
        #[arg(long, default_value_t = popdyn::DEFAULT_LEVELS)]
        levels: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    Dynsys,
    Popdyn,
}

impl Method {
    fn as_str(&self) -> &'static str {
        match self {
            Method::Dynsys => "dynsys",
            Method::Popdyn => "popdyn",
        }
    }
}

struct Payload {
    header: &'static [&'static str],
    rows: Vec<Vec<String>>,
}

fn channel_fields(summary: &mut Summary, params: &ChannelParams) {
    let s = params.spectrum();
    summary
        .text("q", params.q())
        .num("p0", params.p0())
        .num("p1", params.p1())
        .num("p2", params.p2())
        .num("lambda1", s.lambda1)
        .num("lambda2", s.lambda2);
}

fn spectrum_fields(summary: &mut Summary, q: usize, s: &Spectrum) {
    summary.text("q", q).num("lambda1", s.lambda1).num("lambda2", s.lambda2);
}

fn grid(values: &[f64], name: &str) -> Result<Vec<f64>> {
    let [min, max, steps] = values else {
        return Err(Error::Validation(format!("--{name} takes MIN MAX STEPS")));
    };
    if *steps < 1.0 || steps.fract() != 0.0 || !(min <= max) {
        return Err(Error::Validation(format!("--{name}: need MIN <= MAX and integer STEPS >= 1")));
    }
    let n = *steps as usize;
    if n == 1 {
        return Ok(vec![*min]);
    }
    Ok((0..n).map(|i| min + (max - min) * i as f64 / (n - 1) as f64).collect())
}

fn series_payload(series: &[MomentRow]) -> Payload {
    Payload { header: output::MOMENT_HEADER, rows: output::moment_rows(series) }
}

fn run(command: Command) -> Result<(Summary, Option<Payload>)> {
    match command {
        Command::Channel { channel, d } => {
            let params = channel.params()?;
            let mut summary = Summary::new("channel");
            summary.text("version", VERSION);
            channel_fields(&mut summary, &params);
            let s = params.spectrum();
            summary.num("lambda_star", s.lambda_star);
            if let Some(d) = d {
                let ks = ks_check(d, &s);
                summary
                    .text("d", d)
                    .num("d_lambda_sq", ks.d_lambda_sq)
                    .num("d_lambda1_sq", ks.d_lambda1_sq)
                    .num("d_lambda2_sq", ks.d_lambda2_sq)
                    .text("ks_solvable", ks.solvable)
                    .text("outside_theorem", ks.outside_theorem);
            }
            Ok((summary, None))
        }
        Command::Exact { channel, d, n, cap } => {
            let params = channel.params()?;
            let series = (0..=n)
                .map(|level| Ok(MomentRow { level, stats: exact_level(&params, TreeShape::new(d, level)?, cap)?.0 }))
                .collect::<Result<Vec<_>>>()?;
            let mut summary = Summary::new("exact");
            summary.text("version", VERSION);
            channel_fields(&mut summary, &params);
            summary.text("d", d).text("n", n).text("cap", cap);
            Ok((summary, Some(series_payload(&series))))
        }
        Command::Mctree { channel, d, n, samples, seed } => {
            let params = channel.params()?;
            let series = popdyn::run_tree_series(&params, d, n, samples, seed)?;
            let mut summary = Summary::new("mctree");
            summary.text("version", VERSION);
            channel_fields(&mut summary, &params);
            summary.text("d", d).text("n", n).text("samples", samples).text("seed", seed);
            Ok((summary, Some(series_payload(&series))))
        }
        Command::Popdyn { channel, d, population, levels, seed } => {
            let params = channel.params()?;
            let series = popdyn::run_population(&params, d, population, levels, seed)?;
            let verdict = popdyn::classify_survival(&series, &SurvivalCriteria::for_population(population));
            let last = series.last().expect("level 0 is always present");
            let mut summary = Summary::new("popdyn");
            summary.text("version", VERSION);
            channel_fields(&mut summary, &params);
            summary
                .text("d", d)
                .text("population", population)
                .text("levels", levels)
                .text("seed", seed)
                .text("verdict", verdict.as_str())
                .num("final_x", last.stats.x)
                .num("final_se_x", last.stats.se.x);
            Ok((summary, Some(series_payload(&series))))
        }
        Command::Dynsys { channel, d, x0, z0, iters, tol, bound } => {
            let spectrum = channel.spectrum()?;
            let coeffs = treerecon::formulas::map_coefficients(channel.q, d, &spectrum);
            let limits = IterationLimits { max_iter: iters, tol, escape_bound: bound };
            let t = dynsys::iterate_classify(DynState::new(x0, z0), &coeffs, &limits)?;
            let mut summary = Summary::new("dynsys");
            summary.text("version", VERSION);
            spectrum_fields(&mut summary, channel.q, &spectrum);
            summary
                .text("d", d)
                .num("x0", x0)
                .num("z0", z0)
                .text("max_iter", iters)
                .num("tol", tol)
                .num("bound", bound)
                .text("classification", t.classification.as_str())
                .text("iterations", t.iterations)
                .text("left_domain", t.left_domain);
            let rows = output::trajectory_rows(&t);
            Ok((summary, Some(Payload { header: output::TRAJECTORY_HEADER, rows })))
        }
        Command::Fixedpoints { channel, d } => {
            let spectrum = channel.spectrum()?;
            let coeffs = treerecon::formulas::map_coefficients(channel.q, d, &spectrum);
            let report = dynsys::fixed_points(&coeffs);
            let mut summary = Summary::new("fixedpoints");
            summary.text("version", VERSION);
            spectrum_fields(&mut summary, channel.q, &spectrum);
            summary.text("d", d);
            match report.slice_seed {
                Some(s) => summary.num("slice_seed", s),
                None => summary.text("slice_seed", "none"),
            };
            summary.text("points", report.points.len()).text("newton_failed", report.newton_failed);
            let rows = output::fixed_point_rows(&report.points);
            Ok((summary, Some(Payload { header: output::FIXED_POINT_HEADER, rows })))
        }
        Command::Threshold { method, q, d, lambda2, lo, hi, resolution, x_start, population, levels, seed } => {
            let mut summary = Summary::new("threshold");
            summary
                .text("version", VERSION)
                .text("method", method.as_str())
                .text("q", q)
                .text("d", d)
                .num("lambda2", lambda2)
                .num("lo", lo)
                .num("hi", hi);
            match method {
                Method::Dynsys => {
                    let resolution = resolution.unwrap_or(1e-4);
                    let t = dynsys::escape_threshold(
                        q,
                        d,
                        lambda2,
                        x_start,
                        (lo, hi),
                        resolution,
                        &IterationLimits::default(),
                    )?;
                    summary
                        .num("resolution", resolution)
                        .num("x_start", x_start)
                        .num("lambda1_star", t.lambda1_star)
                        .num("d_lambda1_star_sq", t.d_lambda1_star_sq)
                        .text("below_ks", t.below_ks)
                        .text("ambiguous", false);
                }
                Method::Popdyn => {
                    let resolution = resolution.unwrap_or(0.005);
                    let t = popdyn::popdyn_threshold(&PopulationSearch {
                        q,
                        d,
                        lambda2,
                        bracket: (lo, hi),
                        resolution,
                        population,
                        levels,
                        seed,
                    })?;
                    summary
                        .num("resolution", resolution)
                        .text("population", population)
                        .text("levels", levels)
                        .text("seed", seed)
                        .num("feasible_hi", t.feasible_hi)
                        .num("lambda1_star", t.lambda1_star)
                        .num("d_lambda1_star_sq", t.d_lambda1_star_sq)
                        .text("below_ks", t.below_ks)
                        .text("ambiguous", t.ambiguous)
                        .text("probes", t.probes.len());
                }
            }
            Ok((summary, None))
        }
        Command::Sweep { method, q, d, lambda1, lambda2, x0, z0, population, levels, seed } => {
            let l1 = grid(&lambda1, "lambda1")?;
            let l2 = grid(&lambda2, "lambda2")?;
            let mut summary = Summary::new("sweep");
            summary
                .text("version", VERSION)
                .text("method", method.as_str())
                .text("q", q)
                .text("d", d)
                .text("points", l1.len() * l2.len());
            let rows = match method {
                Method::Dynsys => {
                    summary.num("x0", x0).num("z0", z0);
                    let limits = IterationLimits::default();
                    output::phase_rows(&dynsys::phase_grid(q, d, &l1, &l2, DynState::new(x0, z0), &limits)?)
                }
                Method::Popdyn => {
                    summary.text("population", population).text("levels", levels).text("seed", seed);
                    let mut rows = Vec::new();
                    for &a in &l1 {
                        for &b in &l2 {
                            let label = match ChannelParams::from_eigenvalues(q, a, b) {
                                Ok(params) => {
                                    popdyn::classify_channel(&params, d, population, levels, seed)?.0.as_str()
                                }
                                Err(Error::Domain(_)) => "INFEASIBLE",
                                Err(e) => return Err(e),
                            };
                            rows.push(vec![
                                output::fmt_num(a),
                                output::fmt_num(b),
                                label.to_string(),
                                levels.to_string(),
                            ]);
                        }
                    }
                    rows
                }
            };
            Ok((summary, Some(Payload { header: output::PHASE_HEADER, rows })))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_) | Error::Domain(_) => 2,
        Error::Capacity { .. } => 3,
        Error::Bracket(_) => 4,
    }
}

/// Everything a run writes, plus its exit status.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outcome {
    pub code: u8,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
}

impl Outcome {
    fn failure(kind: &str, message: &str, code: u8) -> Self {
        Self {
            code,
            stdout: Vec::new(),
            stderr: format!("error kind={kind} message={}\n", message.replace('\n', " ")).into_bytes(),
        }
    }
}

fn write_file(path: &PathBuf, payload: &Payload) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    output::write_csv(&mut out, payload.header, &payload.rows)?;
    out.flush()
}

/// Parses `args` (program name first) and runs the command.
pub fn execute<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string().into_bytes();
            return if code == 0 {
                Outcome { code, stdout: text, stderr: Vec::new() }
            } else {
                Outcome { code, stdout: Vec::new(), stderr: text }
            };
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli.command)),
            Err(e) => return Outcome::failure("validation", &e.to_string(), 2),
        },
        None => run(cli.command),
    };
    let (summary, payload) = match result {
        Ok(r) => r,
        Err(e) => return Outcome::failure(e.kind(), &e.to_string(), exit_code(&e)),
    };
    let mut outcome = Outcome::default();
    let record = summary.render().into_bytes();
    match (payload, cli.output) {
        (Some(payload), Some(path)) => {
            if let Err(e) = write_file(&path, &payload) {
                return Outcome::failure("validation", &format!("cannot write {}: {e}", path.display()), 2);
            }
            outcome.stdout = record;
        }
        (Some(payload), None) => {
            output::write_csv(&mut outcome.stdout, payload.header, &payload.rows).expect("writing to memory");
            outcome.stderr = record;
        }
        (None, _) => outcome.stdout = record,
    }
    outcome
}

/// Fixed invocations, one per subcommand, whose outputs must be
/// byte-identical across runs and worker counts. Arguments exclude the
/// program name and `--threads`.
pub const GOLDEN_SUITE: &[&[&str]] = &[
    &["channel", "--q", "2", "--lambda1", "0.5", "--lambda2", "0.3", "--d", "5"],
    &["exact", "--q", "2", "--lambda1", "0.5", "--lambda2", "0.3", "--d", "2", "--n", "2"],
    &[
        "mctree",
        "--q",
        "2",
        "--lambda1",
        "0.5",
        "--lambda2",
        "0.3",
        "--d",
        "2",
        "--n",
        "3",
        "--samples",
        "2000",
        "--seed",
        "7",
    ],
    &[
        "popdyn",
        "--q",
        "4",
        "--lambda1",
        "0.4",
        "--lambda2",
        "0.1",
        "--d",
        "2",
        "--population",
        "4000",
        "--levels",
        "12",
        "--seed",
        "7",
    ],
    &["dynsys", "--q", "4", "--d", "2", "--lambda1", "0.7", "--lambda2", "0.1", "--x0", "0.05", "--z0", "0"],
    &["fixedpoints", "--q", "4", "--d", "2", "--lambda1", "0.7", "--lambda2", "0.1"],
    &["threshold", "--method", "dynsys", "--q", "4", "--d", "2", "--lambda2", "0.1", "--lo", "0.4", "--hi", "0.7071"],
    &[
        "threshold",
        "--method",
        "popdyn",
        "--q",
        "4",
        "--d",
        "3",
        "--lambda2",
        "0.5",
        "--lo",
        "0.2",
        "--hi",
        "0.75",
        "--population",
        "3000",
        "--levels",
        "15",
        "--resolution",
        "0.05",
        "--seed",
        "7",
    ],
    &["sweep", "--q", "4", "--d", "2", "--lambda1", "0.4", "0.7", "4", "--lambda2", "0", "0.2", "3"],
];
