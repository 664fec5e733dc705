use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use decision_boost::experiments::{EdgeExponent, Method};
use decision_boost::selfcheck;
use decision_boost_cli::config::{RunConfig, Scenario};
use decision_boost_cli::problem_file::solve_text;
use decision_boost_cli::runner;

/// Exit code for malformed command lines.
const EXIT_USAGE: u8 = 64;
/// Exit code when some methods failed but the run completed.
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "decision-boost", version, about = "Decision-focused boosting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run experiment trials and write results.csv, manifest.json and plots.
    Run(Box<RunArgs>),
    /// Run the invariant and gradient self-test suite.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Solve one QCP from a JSON problem file.
    Solve {
        file: PathBuf,
        /// Write the solution here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        let names: Vec<&str> = Method::ALL.iter().map(|m| m.as_str()).collect();
        format!("unknown method `{s}` (expected one of {})", names.join(", "))
    })
}

fn parse_edge_exponent(s: &str) -> Result<EdgeExponent, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown edge exponent `{s}` (expected as-printed or adjacent-favored)"))
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// JSON config file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    problem: Option<Scenario>,
    /// Cost-model degree of nonlinearity; 0, 0.5 or 1.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    allow_any_tau: bool,
    /// Tree depths, comma separated.
    #[arg(long, value_delimiter = ',')]
    depth: Option<Vec<usize>>,
    #[arg(long)]
    m_train: Option<usize>,
    #[arg(long)]
    m_test: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Methods, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<Method>>,
    /// Forest size and boosting stage cap.
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long, value_parser = parse_edge_exponent)]
    edge_exponent: Option<EdgeExponent>,
    #[arg(long)]
    network_nodes: Option<usize>,
    #[arg(long)]
    qp_dz: Option<usize>,
    #[arg(long)]
    portfolio_dz: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol_abs: Option<f64>,
    #[arg(long)]
    tol_rel: Option<f64>,
    #[arg(long)]
    eps_beta: Option<f64>,
    #[arg(long)]
    eps_loss: Option<f64>,
    /// Noise standard deviation for the motivating scenario.
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    curve_points: Option<usize>,
    /// Worker threads across trials.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write one SVG box plot per (problem, tau).
    #[arg(long)]
    plot: bool,
}

impl RunArgs {
    fn resolve(self) -> anyhow::Result<RunConfig> {
        let file = match &self.config {
            Some(p) => Some(RunConfig::load_file(p)?),
            None => None,
        };
        let mut cfg = RunConfig::from_json(self.problem, file.as_ref())?;
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { cfg.$($field).+ = v; })*
            };
        }
        set!(
            tau => tau,
            depth => depths,
            m_train => m_train,
            m_test => m_test,
            trials => trials,
            seed => seed,
            methods => methods,
            n_trees => n_trees,
            edge_exponent => edge_exponent,
            network_nodes => sizes.network_nodes,
            qp_dz => sizes.qp_dz,
            portfolio_dz => sizes.portfolio_dz,
            max_iter => solver.max_iter,
            tol_abs => solver.tol_abs,
            tol_rel => solver.tol_rel,
            eps_beta => boost.eps_beta,
            eps_loss => boost.eps_loss,
            noise_std => noise_std,
            curve_points => curve_points,
            out => out,
        );
        if self.jobs.is_some() {
            cfg.jobs = self.jobs;
        }
        cfg.allow_any_tau |= self.allow_any_tau;
        cfg.plot |= self.plot;
        Ok(cfg)
    }
}

fn usage_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}\n\nUsage: decision-boost run [--config FILE] [--problem P] [--tau T] [--depth D,...] [--trials N] [--seed S] [--out DIR] [--plot] ...\nFor more information, try 'decision-boost run --help'.");
    ExitCode::from(EXIT_USAGE)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let text = e.render().to_string();
            eprint!("{text}");
            if !text.contains("Usage:") {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(EXIT_USAGE);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match cli.command {
        Command::Run(args) => {
            let cfg = match (*args).resolve().and_then(|c| c.validate().map(|_| c)) {
                Ok(c) => c,
                Err(e) => return usage_error(format!("{e:#}")),
            };
            match runner::run(&cfg) {
                Ok(outcome) => {
                    for f in &outcome.files {
                        println!("wrote {}", f.display());
                    }
                    if outcome.failures > 0 {
                        eprintln!("{} method fits failed; see manifest.json", outcome.failures);
                        ExitCode::from(EXIT_PARTIAL)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Check { seed } => {
            let results = selfcheck::run_all(seed);
            let mut ok = true;
            for r in &results {
                ok &= r.passed;
                println!(
                    "{} {:<22} {:>7.2}s  {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.seconds,
                    r.detail
                );
            }
            let passed = results.iter().filter(|r| r.passed).count();
            println!("{passed}/{} checks passed", results.len());
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Command::Solve { file, out } => {
            let result = std::fs::read_to_string(&file)
                .map_err(anyhow::Error::from)
                .and_then(|t| solve_text(&t))
                .and_then(|s| Ok(serde_json::to_string_pretty(&s)?));
            match result {
                Ok(text) => match out {
                    Some(path) => match std::fs::write(&path, text + "\n") {
                        Ok(()) => ExitCode::SUCCESS,
                        Err(e) => {
                            eprintln!("error: writing {}: {e}", path.display());
                            ExitCode::FAILURE
                        }
                    },
                    None => {
                        println!("{text}");
                        ExitCode::SUCCESS
                    }
                },
                Err(e) => {
                    eprintln!("error: {}: {e:#}", file.display());
                    ExitCode::FAILURE
                }
            }
        }
    }
}
