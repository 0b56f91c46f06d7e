//! `mcotype`: batch runner producing JSON reports and CSV summaries.

mod commands;
mod input;
mod report;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mcotype::cotype::TRule;
use mcotype::kalton::KaltonOptions;

use commands::GammaModeArg;
use input::ChainSource;
use report::{Failure, Outcome, Report};

#[derive(Parser, Debug)]
#[command(
    name = "mcotype",
    version,
    about = "Spectral gaps, Markov cotype certificates and Lipschitz extension experiments"
)]
struct Cli {
    /// Seed for every random choice; a fixed seed gives byte-identical reports.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Tolerance for the checks (each command has its own default).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads for independent instances.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write the JSON report here and the CSV summary next to it instead of printing.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ChainArgs {
    /// Chain JSON `{"A": [[...]], "pi": [...]}`, inline or as a file path.
    #[arg(long)]
    chain: Option<String>,
    /// Generate the chain instead: path_holding, cycle, complete, random_symmetric, random_reversible, regular_graph(d).
    #[arg(long = "generate", value_name = "KIND")]
    kind: Option<String>,
    /// Number of states for --generate.
    #[arg(long)]
    n: Option<usize>,
}

impl ChainArgs {
    fn source(&self, seed: u64) -> Outcome<ChainSource> {
        ChainSource::resolve(self.chain.as_deref(), self.kind.as_deref(), self.n, seed)
    }

    fn given(&self) -> bool {
        self.chain.is_some() || self.kind.is_some()
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Nonlinear spectral gap of a chain.
    Gamma {
        #[command(flatten)]
        chain: ChainArgs,
        /// Space JSON, inline or as a file path (default: the real line).
        #[arg(long)]
        space: Option<String>,
        #[arg(long, value_enum, default_value_t = GammaModeArg::Analytic)]
        mode: GammaModeArg,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Configurations `{"x": [...], "y": [...]}` for fixed mode.
        #[arg(long)]
        config: Option<String>,
        #[arg(long, default_value_t = 200)]
        restarts: usize,
        #[arg(long, default_value_t = 400)]
        moves: usize,
    },
    /// Gaps of a chain, its Cesaro average and its power, with the bounds relating them.
    Calculus {
        #[command(flatten)]
        chain: ChainArgs,
        #[arg(long)]
        space: Option<String>,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 4)]
        t: usize,
        #[arg(long, default_value_t = 50)]
        restarts: usize,
        #[arg(long, default_value_t = 200)]
        moves: usize,
    },
    /// Markov cotype certificate for a configuration.
    Cotype {
        #[command(flatten)]
        chain: ChainArgs,
        #[arg(long)]
        space: Option<String>,
        /// `{"x": [...]}`; with `"y"` the inequality is evaluated at the given points.
        #[arg(long)]
        config: String,
        #[arg(long)]
        t: usize,
    },
    /// Pisier-type martingale inequality on a dynamic-programming or random martingale.
    Pisier {
        #[command(flatten)]
        chain: ChainArgs,
        #[arg(long)]
        space: Option<String>,
        #[arg(long)]
        config: Option<String>,
        #[arg(long, default_value_t = 3)]
        t: usize,
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// Use a random martingale with `SIZE,STEPS` instead of a chain.
        #[arg(long, value_name = "SIZE,STEPS")]
        random: Option<String>,
    },
    /// Lower bounds on the cotype constant of the line along lazy paths.
    Counterexample {
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value = "8,16,32,64")]
        sizes: String,
        /// `t = ceil(coefficient * n^exponent)`.
        #[arg(long, default_value_t = 1.0)]
        coefficient: f64,
        #[arg(long, default_value_t = 1.0)]
        exponent: f64,
    },
    /// Smallest Lipschitz constant of an extension to a finite set.
    Extend {
        /// Instance JSON: source, target_dim, points, anchors, values.
        #[arg(long)]
        instance: String,
    },
    /// The per-weight-matrix extension inequality.
    Hcert {
        /// Instance JSON as for `extend`, optionally with a weight matrix `h`.
        #[arg(long)]
        instance: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Markov type constant of the source.
        #[arg(long = "markov-constant", default_value_t = 1.0)]
        m_const: f64,
        /// Cotype constant of the target (default `(4^p + 1)^(1/p)`).
        #[arg(long = "cotype-constant")]
        n_const: Option<f64>,
        #[arg(long)]
        t: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Nets, separated sphere sets and sections in small dimensions.
    Kalton {
        #[arg(long = "dims", default_value = "2,3")]
        dims: String,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(long)]
        tau: Option<f64>,
        /// Extra sphere points for the extension experiment (0 to skip).
        #[arg(long, default_value_t = 0)]
        extra: usize,
        #[arg(long, default_value_t = KaltonOptions::default().net_stream)]
        net_stream: usize,
        #[arg(long, default_value_t = KaltonOptions::default().sphere_stream)]
        sphere_stream: usize,
        #[arg(long, default_value_t = KaltonOptions::default().covering_checks)]
        covering_checks: usize,
        #[arg(long, default_value_t = KaltonOptions::default().max_net)]
        max_net: usize,
    },
    /// Run the invariant suite across all modules.
    Verify,
    /// Emit a generated chain as JSON.
    Generate {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        n: usize,
    },
}

fn pair(s: &str) -> Outcome<(usize, usize)> {
    match input::parse_list::<usize>("--random", s)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(Failure::Input("--random expects SIZE,STEPS".into())),
    }
}

/// Runs the command and returns the report with the tolerance it used.
fn run(cli: &Cli) -> Outcome<(Report, Option<f64>)> {
    let seed = cli.seed;
    let slack = cli.tol.unwrap_or(commands::DEFAULT_CERT_SLACK);
    Ok(match &cli.command {
        Command::Gamma {
            chain,
            space,
            mode,
            p,
            config,
            restarts,
            moves,
        } => {
            let args = commands::GammaArgs {
                chain: chain.source(seed)?,
                space: space.as_deref(),
                mode: *mode,
                p: *p,
                config: config.as_deref(),
                restarts: *restarts,
                moves: *moves,
            };
            (commands::gamma(args, seed)?, cli.tol)
        }
        Command::Calculus {
            chain,
            space,
            p,
            t,
            restarts,
            moves,
        } => {
            let args = commands::CalculusArgs {
                chain: chain.source(seed)?,
                space: space.as_deref(),
                p: *p,
                t: *t,
                restarts: *restarts,
                moves: *moves,
            };
            (commands::calculus(args, seed)?, cli.tol)
        }
        Command::Cotype {
            chain,
            space,
            config,
            t,
        } => {
            let args = commands::CotypeArgs {
                chain: chain.source(seed)?,
                space: space.as_deref(),
                config,
                t: *t,
            };
            (commands::cotype(args, slack)?, Some(slack))
        }
        Command::Pisier {
            chain,
            space,
            config,
            t,
            start,
            random,
        } => {
            let args = commands::PisierArgs {
                chain: if chain.given() {
                    Some(chain.source(seed)?)
                } else {
                    None
                },
                space: space.as_deref(),
                config: config.as_deref(),
                t: *t,
                start: *start,
                random: random.as_deref().map(pair).transpose()?,
            };
            (commands::pisier(args, seed, slack)?, Some(slack))
        }
        Command::Counterexample {
            p,
            sizes,
            coefficient,
            exponent,
        } => {
            let sizes = input::parse_list::<usize>("--sizes", sizes)?;
            (
                commands::counterexample(
                    *p,
                    &sizes,
                    TRule {
                        coefficient: *coefficient,
                        exponent: *exponent,
                    },
                )?,
                cli.tol,
            )
        }
        Command::Extend { instance } => {
            let tol = cli.tol.unwrap_or(commands::DEFAULT_EXTENSION_TOL);
            (commands::extend(instance, tol)?, Some(tol))
        }
        Command::Hcert {
            instance,
            p,
            m_const,
            n_const,
            t,
            delta,
        } => {
            let args = commands::HcertArgs {
                instance,
                p: *p,
                m_const: *m_const,
                n_const: *n_const,
                t: *t,
                delta: *delta,
            };
            (commands::hcert(args, seed)?, cli.tol)
        }
        Command::Kalton {
            dims,
            theta,
            tau,
            extra,
            net_stream,
            sphere_stream,
            covering_checks,
            max_net,
        } => {
            let tol = cli.tol.unwrap_or(commands::default_kalton_tol());
            let args = commands::KaltonArgs {
                dims: input::parse_list("--dims", dims)?,
                theta: *theta,
                tau: *tau,
                extra: *extra,
                opts: KaltonOptions {
                    net_stream: *net_stream,
                    covering_checks: *covering_checks,
                    sphere_stream: *sphere_stream,
                    max_net: *max_net,
                },
            };
            (commands::kalton(args, seed, tol)?, Some(tol))
        }
        Command::Verify => (verify::verify(seed, slack)?, Some(slack)),
        Command::Generate { kind, n } => (commands::generate_chain(kind, *n, seed)?, cli.tol),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
        {
            eprintln!("error: cannot start {jobs} workers: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = run(&cli).and_then(|(report, tol)| {
        report.emit(cli.seed, tol, cli.out.as_deref())?;
        Ok(report)
    });
    match outcome {
        Ok(report) if report.passed() => ExitCode::SUCCESS,
        Ok(report) => {
            for id in report.failing() {
                eprintln!("failed invariant: {id}");
            }
            ExitCode::from(1)
        }
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
