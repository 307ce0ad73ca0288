//! Command-line front end for the qwishart moment engine.

mod commands;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::output::Format;

#[derive(Debug, Parser)]
#[command(name = "qwishart", version, about = "Exact trace moments of compound Wishart and q-Wishart matrices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalOpts,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Output format
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
    /// Cap on enumeration worker threads
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Lift the default bound n <= 9 on enumerations
    #[arg(long = "allow-large-n", global = true)]
    pub allow_large_n: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

/// Where the matrices of a moment come from.
#[derive(Debug, Args)]
pub struct BindingArgs {
    /// Keep B_j and Sigma_j as symbolic trace atoms (default)
    #[arg(long, conflicts_with_all = ["identity", "matrices"])]
    pub symbolic: bool,
    /// B_j = I of size M_j and Sigma_j = I of size N; sizes stay symbolic unless --sizes/--N are given
    #[arg(long, conflicts_with = "matrices")]
    pub identity: bool,
    /// Per-color matrices: [{"B":[[..]],"Sigma":[[..]]},...]
    #[arg(long)]
    pub matrices: Option<String>,
    /// Concrete M_j for --identity, as a JSON list
    #[arg(long, requires = "identity")]
    pub sizes: Option<String>,
    /// Concrete N for --identity
    #[arg(long = "N", requires = "identity")]
    pub n_dim: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List pair partitions of {±1..±n}, optionally color-preserving
    Enumerate {
        #[arg(long)]
        n: Option<usize>,
        /// Coloring as a JSON list of colors; implies n
        #[arg(long)]
        coloring: Option<String>,
        /// Keep only partitions joining every upper index to a lower one
        #[arg(long = "plus-only")]
        plus_only: bool,
        #[arg(long)]
        noncrossing: bool,
        /// Validate and describe one partition given as pairs or as an emitted record
        #[arg(long, conflicts_with_all = ["n", "coloring"])]
        input: Option<String>,
    },
    /// Real Wishart moment E[p(W_1..W_s)]
    Moment {
        #[arg(long, required_unless_present = "input")]
        spec: Option<String>,
        #[command(flatten)]
        bindings: BindingArgs,
        /// Re-emit a polynomial in canonical form
        #[arg(long, conflicts_with = "spec")]
        input: Option<String>,
    },
    /// q-Wishart moment tau(p(W_1..W_s)) for consecutive-block specs
    QMoment {
        #[arg(long)]
        spec: String,
        /// Rational value of q, or "sym"
        #[arg(long, default_value = "sym")]
        q: String,
        #[command(flatten)]
        bindings: BindingArgs,
        /// Evaluate with the entrywise Wick expansion instead of the pair-partition formula
        #[arg(long = "brute-force")]
        brute_force: bool,
    },
    /// Limits of centered moments as N grows with M/N = lambda
    FluctuationLimit {
        /// Statistic {"terms":[{"coeff":..,"word":[..]},..]}
        #[arg(long = "Q", conflicts_with = "spec")]
        stat: Option<String>,
        #[arg(long, default_value_t = 4)]
        orders: usize,
        /// A single centered product of traces instead of a statistic
        #[arg(long, required_unless_present = "stat")]
        spec: Option<String>,
        /// With --spec: the finite-N value in M and N instead of the limit
        #[arg(long, requires = "spec")]
        finite: bool,
        #[arg(long, default_value = "sym")]
        q: String,
    },
    /// lim[tau((X-Y)^2 (X+Y)^m) - 2 tau(X^2) tau((X+Y)^m)] for each m
    T5Check {
        #[arg(long = "Q")]
        stat: String,
        /// Comma-separated values of m
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        m: Vec<usize>,
        #[arg(long, default_value = "sym")]
        q: String,
    },
    /// Finite-N check of q = 0 moments against compound Marchenko-Pastur moments
    MpCheck {
        /// Eigenvalues of B as a JSON list of rationals
        #[arg(long, conflicts_with_all = ["b", "input"])]
        eigenvalues: Option<String>,
        /// Diagonal B as a JSON matrix
        #[arg(long = "B", conflicts_with = "input")]
        b: Option<String>,
        #[arg(long = "N")]
        n_dim: Option<usize>,
        #[arg(long = "n-max", default_value_t = 4)]
        n_max: usize,
        /// {"eigenvalues":[..],"N":..,"n_max":..}
        #[arg(long)]
        input: Option<String>,
    },
    /// Monte Carlo estimate of a real Wishart moment against the exact value
    McValidate {
        #[arg(long)]
        spec: String,
        /// {"seed":..,"samples":..,"matrices":[..]}
        #[arg(long, conflicts_with_all = ["matrices", "seed", "samples"])]
        config: Option<String>,
        #[arg(long, required_unless_present = "config")]
        matrices: Option<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        partitions: usize,
    },
    /// Per-pairing terms of E[tr^2(W_1 W_2)]
    Table1,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let format = match cli.global.format {
        FormatArg::Json => Format::Json,
        FormatArg::Csv => Format::Csv,
    };
    match commands::run(&cli.command, &cli.global) {
        Ok(report) => {
            let failed = report.failed.clone();
            if let Err(e) = output::emit(&report, format) {
                eprintln!("error: cannot write output: {e}");
                return ExitCode::from(1);
            }
            match failed {
                None => ExitCode::SUCCESS,
                Some(msg) => {
                    eprintln!("check failed: {msg}");
                    ExitCode::from(1)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
