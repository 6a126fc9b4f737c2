use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use permanental::existence::{default_r_grid, vere_jones_check};
use permanental::fieldsampling::{
    cox_samples, gaussian_fields, permanental_fields, squared_gaussian_count, FieldSample, GaussianSampler, SiteMeasure,
};
use permanental::harness::{
    self, examples, BecondConfig, ChainRunConfig, ConjectureConfig, ExperimentReport, IdConfig,
};
use permanental::idcheck::{markov_factorization, obstructing_entries, signature_search, CYCLE_CAP};
use permanental::markovchain::{simulate_paths, ChainSpec, StopRule};
use permanental::permanents::{beta_pd_scan, derived_matrix, det_alpha, MultiIndex};
use permanental::pointprocess::{
    mu_laplace, nu_r_laplace, shifted_field_laplace, zeta_laplace, OperatorMatrix, TestFunction, TorusGrid,
};
use permanental::{Error, Matrix, Result};

#[derive(Parser)]
#[command(name = "permanental", version, about = "Permanental processes at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact α-permanent of a kernel or of one of its derived matrices.
    Permanent {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        beta: f64,
        /// Repetition counts, e.g. `2,0,1`.
        #[arg(long, value_delimiter = ',')]
        derived: Option<Vec<usize>>,
    },
    /// β-positive-definiteness scan over derived matrices.
    Scan {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        beta: f64,
        #[arg(long, default_value_t = 4)]
        max_order: usize,
    },
    /// Existence and infinite-divisibility checks for a kernel
    #[command(subcommand)]
    Check(CheckCommand),
    /// Local-time fields of a finite chain as CSV.
    Simulate {
        #[arg(long)]
        chain: PathBuf,
        /// Start state (name or index).
        #[arg(long)]
        from: String,
        /// `absorb`, `hit:a`, `tau:a:r` or `expkill:a:theta`.
        #[arg(long, default_value = "absorb")]
        stop: String,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Field or Cox samples as CSV.
    Sample {
        #[arg(value_enum)]
        which: SampleKind,
        #[arg(long)]
        kernel: PathBuf,
        /// Index `2/m` for permanental and Cox fields.
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
        /// Shift `r` of the Gaussian field.
        #[arg(long, default_value_t = 0.0)]
        shift: f64,
        /// Site weight for Cox sampling.
        #[arg(long, default_value_t = 1.0)]
        weight: f64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Point-process Laplace functionals and the condensation run
    #[command(subcommand)]
    Pp(PpCommand),
    /// Runs a named experiment; exit code 0 iff every assertion passes.
    Verify {
        #[arg(value_enum)]
        experiment: Experiment,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the flat assertion table.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CheckCommand {
    /// Vere-Jones existence check as JSON.
    Existence {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 4)]
        max_order: usize,
    },
    /// Infinite-divisibility classification as JSON.
    Id {
        #[arg(long)]
        kernel: PathBuf,
    },
}

#[derive(Subcommand)]
enum PpCommand {
    /// One Laplace functional.
    Laplace {
        #[arg(long, value_enum)]
        which: Functional,
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0)]
        r: f64,
        /// Test function JSON `{"f": [...]}`.
        #[arg(long)]
        f: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        weight: f64,
        #[arg(long, default_value_t = 0.0)]
        rho: f64,
        #[arg(long, default_value_t = 0.0)]
        rho_c: f64,
    },
    /// Condensation experiment on a torus surrogate.
    Becond {
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 1.0)]
        beta_temp: f64,
        #[arg(long, default_value_t = 16)]
        grid: usize,
        #[arg(long, default_value_t = 2.0)]
        rho: f64,
        #[arg(long, default_value_t = 100_000)]
        n_mc: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SampleKind {
    Gaussian,
    Permanental,
    Cox,
}

#[derive(Clone, Copy, ValueEnum)]
enum Functional {
    Mu,
    Nu,
    Shifted,
    Zeta,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    T2,
    C1,
    C2,
    Conjecture,
    Becond,
    Id,
}

fn read(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

fn read_kernel(path: &Path) -> Result<Matrix> {
    Matrix::from_json(&read(path)?)
}

fn read_config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&read(p)?)?),
        None => Ok(T::default()),
    }
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn rows_csv(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn site_header(labels: Option<&[String]>, n: usize) -> Vec<String> {
    match labels {
        Some(l) => l.to_vec(),
        None => (0..n).map(|i| format!("x{i}")).collect(),
    }
}

fn run_verify(experiment: Experiment, config: &Option<PathBuf>, seed: u64) -> Result<ExperimentReport> {
    match experiment {
        Experiment::T2 => {
            let c: ChainRunConfig = read_config(config)?;
            let (chain, panel) = harness::resolve_chain_config(&c, examples::symmetric_four_state(), seed)?;
            harness::run_t2_isomorphism(&chain, c.anchor, &panel, c.n_mc, seed, c.gate)
        }
        Experiment::C1 => {
            let c: ChainRunConfig = read_config(config)?;
            let (chain, panel) = harness::resolve_chain_config(&c, examples::nonsymmetric_four_state(), seed)?;
            harness::run_c1_levy(&chain, c.anchor, &panel, c.n_mc, seed, c.gate)
        }
        Experiment::C2 => {
            let c: ChainRunConfig = read_config(config)?;
            let (chain, panel) = harness::resolve_chain_config(&c, examples::four_state_cycle(), seed)?;
            harness::run_c2_inverse_local_time(&chain, c.anchor, &c.r_list, &panel, c.theta, c.n_mc, seed, c.gate)
        }
        Experiment::Conjecture => {
            let c: ConjectureConfig = read_config(config)?;
            harness::run_conjecture(&c, seed)
        }
        Experiment::Becond => {
            let c: BecondConfig = read_config(config)?;
            harness::run_be_condensation(&c, seed)
        }
        Experiment::Id => {
            let c: IdConfig = read_config(config)?;
            let (kernel, expect) = match c.kernel {
                Some(k) => (k, c.expect_id),
                None => (examples::gaussian_triple(), c.expect_id.or(Some(false))),
            };
            harness::run_id_classify(&kernel, expect, c.max_order)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Permanent { kernel, beta, derived } => {
            let m = read_kernel(&kernel)?;
            let m = match derived {
                Some(k) => derived_matrix(&m, &MultiIndex::new(k))?,
                None => m,
            };
            println!("{}", det_alpha(&m, beta)?);
            Ok(true)
        }
        Command::Scan {
            kernel,
            beta,
            max_order,
        } => {
            let v = beta_pd_scan(&read_kernel(&kernel)?, beta, max_order)?;
            println!("{}", serde_json::to_string_pretty(&v)?);
            Ok(v.passed())
        }
        Command::Check(CheckCommand::Existence {
            kernel,
            beta,
            max_order,
        }) => {
            let v = vere_jones_check(&read_kernel(&kernel)?, beta, &default_r_grid(), max_order)?;
            println!("{}", serde_json::to_string_pretty(&v)?);
            Ok(v.passed())
        }
        Command::Check(CheckCommand::Id { kernel }) => {
            let g = read_kernel(&kernel)?;
            if g.n() > CYCLE_CAP {
                eprintln!("note: kernels above {CYCLE_CAP} sites skip the cycle diagnostics");
            }
            let out = match signature_search(&g)? {
                Some(sig) => serde_json::json!({
                    "id": true,
                    "signature": sig,
                    "factorization": markov_factorization(&g)?,
                }),
                None => serde_json::json!({
                    "id": false,
                    "signature": null,
                    "obstruction": obstructing_entries(&g)?
                        .iter()
                        .map(|(i, j, v)| serde_json::json!({"row": i, "col": j, "inverse_entry": v}))
                        .collect::<Vec<_>>(),
                }),
            };
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(true)
        }
        Command::Simulate {
            chain,
            from,
            stop,
            paths,
            seed,
            out,
        } => {
            let chain = ChainSpec::from_json(&read(&chain)?)?;
            let x0 = chain.state_index(&from)?;
            let stop = StopRule::parse(&stop, &chain)?;
            let fields = simulate_paths(&chain, x0, &stop, paths, seed)?;
            let text = rows_csv(
                chain.states(),
                fields.iter().map(|f| f.0.iter().map(|x| x.to_string()).collect()),
            );
            emit(&text, &out)?;
            Ok(true)
        }
        Command::Sample {
            which,
            kernel,
            beta,
            shift,
            weight,
            n,
            seed,
            out,
        } => {
            let k = read_kernel(&kernel)?;
            let header = site_header(k.labels(), k.n());
            let text = match which {
                SampleKind::Gaussian => {
                    let fs = gaussian_fields(&k, shift, n, seed)?;
                    rows_csv(&header, fs.iter().map(|f| f.0.iter().map(|x| x.to_string()).collect()))
                }
                SampleKind::Permanental => {
                    let fs = permanental_fields(&k, beta, n, seed)?;
                    rows_csv(&header, fs.iter().map(|f| f.0.iter().map(|x| x.to_string()).collect()))
                }
                SampleKind::Cox => {
                    // Intensity (β/2) ψ so that the functional is Det(I + βK_φ)^{-1/β}.
                    let m = squared_gaussian_count(beta)?;
                    let sampler = GaussianSampler::new(&k)?;
                    let measure = SiteMeasure::uniform(k.n(), weight)?;
                    let cs = cox_samples(&measure, n, seed, |rng| {
                        FieldSample(sampler.sample_squares(m, rng)).scaled(beta / 2.0)
                    });
                    rows_csv(&header, cs.iter().map(|c| c.0.iter().map(|x| x.to_string()).collect()))
                }
            };
            emit(&text, &out)?;
            Ok(true)
        }
        Command::Pp(PpCommand::Laplace {
            which,
            kernel,
            alpha,
            r,
            f,
            weight,
            rho,
            rho_c,
        }) => {
            let op = OperatorMatrix::uniform(read_kernel(&kernel)?, weight)?;
            let f = TestFunction::from_json(&read(&f)?)?;
            let v = match which {
                Functional::Mu => mu_laplace(&op, alpha, &f)?,
                Functional::Nu => nu_r_laplace(&op, r, &f)?,
                Functional::Shifted => shifted_field_laplace(&op, r, &f)?,
                Functional::Zeta => zeta_laplace(&op, rho, rho_c, &f)?,
            };
            println!("{v}");
            Ok(true)
        }
        Command::Pp(PpCommand::Becond {
            d,
            beta_temp,
            grid,
            rho,
            n_mc,
            seed,
        }) => {
            TorusGrid::new(grid, 1, 1.0)?;
            let config = BecondConfig {
                d,
                beta_temp,
                grid_sites: grid,
                rho,
                n_mc,
                ..BecondConfig::default()
            };
            let report = harness::run_be_condensation(&config, seed)?;
            println!("{}", report.to_json()?);
            Ok(report.pass)
        }
        Command::Verify {
            experiment,
            config,
            seed,
            out,
            csv,
        } => {
            let report = run_verify(experiment, &config, seed)?;
            eprint!("{}", report.summary());
            match &out {
                Some(p) => fs::write(p, report.to_json()?)?,
                None => println!("{}", report.to_json()?),
            }
            if let Some(p) = csv {
                fs::write(p, report.to_csv())?;
            }
            Ok(report.pass)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::InvalidInput(_) | Error::Io(_) | Error::Json(_) => 2,
                _ => 3,
            })
        }
    }
}
