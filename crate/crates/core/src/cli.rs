//! Command-line front end. `run` returns the process exit code:
//! 0 on success, 1 on verification or runtime failure, 2 on usage errors.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{self, BenchConfig};
use crate::dataset::{generate_synthetic, KroneckerDataset};
use crate::error::{Error, Result};
use crate::gram::{h_cts_mc, h_dis, GramReport};
use crate::metrics::{format_real, rows_from_trajectory, write_csv};
use crate::network::{init_network, train_naive};
use crate::params::{auto_eta, resolve, resolve_tau, Param};
use crate::sampler::BatchSampler;
use crate::trainer::init_trainer;
use crate::trajectory::{TrainConfig, Trajectory};
use crate::verify::{self, Suite, VerifyOptions};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "kron-sgd", version, about = "SGD for two-layer shifted-ReLU networks on Kronecker-structured data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset file.
    GenData(GenDataArgs),
    /// Train and write per-iteration metrics as CSV.
    Train(TrainArgs),
    /// Time training steps across data dimensions.
    Bench(BenchArgs),
    /// Report kernel eigenvalues, weight movement and gradient bounds.
    Diag(DiagArgs),
    /// Run the built-in correctness suites.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Number of samples.
    #[arg(long, default_value_t = 32)]
    n: usize,
    /// Rows of the left factor.
    #[arg(long, default_value_t = 4)]
    p: usize,
    /// Rows of the right factor.
    #[arg(long, default_value_t = 4)]
    q: usize,
    /// Labels are drawn uniformly from [-s, s].
    #[arg(long, default_value_t = 1.0)]
    label_scale: f64,
    /// Use the same factor on both sides (requires p = q).
    #[arg(long)]
    symmetric: bool,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Load the dataset from this file instead of generating one.
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    synth: SynthArgs,
}

impl DataArgs {
    fn load(&self, seed: u64) -> Result<KroneckerDataset> {
        match &self.data {
            Some(path) => KroneckerDataset::load(path),
            None => self.synth.generate(seed),
        }
    }
}

impl SynthArgs {
    fn generate(&self, seed: u64) -> Result<KroneckerDataset> {
        generate_synthetic(self.n, self.p, self.q, seed, self.label_scale, self.symmetric)
    }
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[command(flatten)]
    synth: SynthArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Fast,
    Naive,
    Both,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value_t = Mode::Fast)]
    mode: Mode,
    /// Network width.
    #[arg(long, default_value_t = 256)]
    m: usize,
    /// Activation threshold, or `auto` for sqrt(ln(m)/2).
    #[arg(long, default_value = "auto")]
    tau: Param,
    /// Step size, or `auto` for lambda_hat * s_batch / n^3.
    #[arg(long, default_value = "auto")]
    eta: Param,
    #[arg(long, default_value_t = 4)]
    s_batch: usize,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Full-loss evaluation period (0: first and last iteration only).
    #[arg(long, default_value_t = 1)]
    eval_every: usize,
    /// Metrics CSV destination (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "KRON_SGD_WORKERS")]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Data dimensions to sweep, comma separated.
    #[arg(long = "d", value_delimiter = ',', default_value = "64,256,1024,4096")]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, default_value_t = 1024)]
    m: usize,
    #[arg(long, default_value_t = 4)]
    s_batch: usize,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "auto")]
    tau: Param,
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    /// Untimed steps before measuring.
    #[arg(long, default_value_t = 10)]
    warmup: usize,
    /// Skip the dense trainer.
    #[arg(long)]
    no_naive: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "KRON_SGD_WORKERS")]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct DiagArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 256)]
    m: usize,
    #[arg(long, default_value = "auto")]
    tau: Param,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Monte-Carlo draws for lambda_hat.
    #[arg(long, default_value_t = 100_000)]
    mc_samples: u64,
    /// Training steps before measuring weight movement and gradient bounds.
    #[arg(long, default_value_t = 20)]
    train_iters: usize,
    #[arg(long, default_value = "auto")]
    eta: Param,
    #[arg(long, default_value_t = 4)]
    s_batch: usize,
    /// Also write the kernel reports as CSV.
    #[arg(long)]
    gram_out: Option<PathBuf>,
    #[arg(long, env = "KRON_SGD_WORKERS")]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Suite to run (repeatable); all suites when omitted.
    #[arg(long = "suite")]
    suites: Vec<Suite>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Corrupt one tree node to check that the tree suite notices.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::IndexOutOfRange { .. } => EXIT_USAGE,
        Error::Parse { .. } | Error::NotSymmetric { .. } | Error::Io { .. } => EXIT_FAILURE,
    }
}

pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::GenData(a) => gen_data(&a),
        Command::Train(a) => train(&a),
        Command::Bench(a) => bench_cmd(&a),
        Command::Diag(a) => diag(&a),
        Command::Verify(a) => verify_cmd(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_err(path: Option<&Path>) -> impl FnOnce(io::Error) -> Error + '_ {
    move |e| Error::io(path.unwrap_or(Path::new("<stdout>")), e)
}

fn setup_workers(workers: Option<usize>) -> usize {
    let w = workers.unwrap_or(1).max(1);
    if w > 1 {
        // Fails only if a global pool already exists, which is fine.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    w
}

fn gen_data(a: &GenDataArgs) -> Result<u8> {
    let ds = a.synth.generate(a.seed)?;
    ds.save(&a.out)?;
    eprintln!(
        "wrote {}: n={} p={} q={} symmetric={} seed={} label_scale={}",
        a.out.display(),
        ds.n(),
        ds.p(),
        ds.q(),
        ds.is_symmetric(),
        a.seed,
        a.synth.label_scale
    );
    Ok(EXIT_OK)
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn train(a: &TrainArgs) -> Result<u8> {
    let workers = setup_workers(a.workers);
    let ds = a.data.load(a.seed)?;
    let mut cfg = TrainConfig::new(0.0, a.s_batch, a.iters);
    cfg.validate(ds.n())?;
    if a.m == 0 {
        return Err(Error::InvalidInput("network width must be positive".into()));
    }
    let r = resolve(&ds, a.m, a.tau, a.eta, a.s_batch, a.seed)?;
    cfg.eta = r.eta;
    cfg.eval_every = a.eval_every;
    eprintln!(
        "n={} d={} m={} s_batch={} iters={} mode={:?}",
        ds.n(),
        ds.dim(),
        a.m,
        a.s_batch,
        a.iters,
        a.mode
    );
    eprintln!("resolved: {r}");

    let run_fast = || -> Result<Trajectory> {
        let mut st = init_trainer(ds.clone(), a.m, r.tau, a.seed)?.with_workers(workers)?;
        st.train(&cfg, &mut BatchSampler::new(a.seed))
    };
    let run_naive = || -> Result<Trajectory> {
        let mut net = init_network(a.m, ds.dim(), r.tau, a.seed)?;
        train_naive(&mut net, &ds, &cfg, &mut BatchSampler::new(a.seed))
    };
    let (traj, rows) = match a.mode {
        Mode::Fast => {
            let t = run_fast()?;
            let rows = rows_from_trajectory(&t, None);
            (t, rows)
        }
        Mode::Naive => {
            let t = run_naive()?;
            let rows = rows_from_trajectory(&t, None);
            (t, rows)
        }
        Mode::Both => {
            let fast = run_fast()?;
            let naive = run_naive()?;
            let mut div = vec![max_gap(&fast.initial_u, &naive.initial_u)];
            for (f, n) in fast.steps.iter().zip(&naive.steps) {
                div.push(max_gap(&f.u_batch, &n.u_batch));
            }
            let rows = rows_from_trajectory(&fast, Some(&div));
            eprintln!("max divergence: {}", format_real(div.iter().copied().fold(0.0, f64::max)));
            (fast, rows)
        }
    };
    write_csv(open_out(a.out.as_deref())?, &rows).map_err(write_err(a.out.as_deref()))?;
    if let (Some(l0), Some(lt)) = (traj.initial_loss(), traj.final_loss()) {
        eprintln!("loss: initial={l0} final={lt}");
    }
    Ok(EXIT_OK)
}

fn bench_cmd(a: &BenchArgs) -> Result<u8> {
    setup_workers(a.workers);
    let cfg = BenchConfig {
        dims: a.dims.clone(),
        n: a.n,
        m: a.m,
        s_batch: a.s_batch,
        iters: a.iters,
        seed: a.seed,
        tau: match a.tau {
            Param::Auto => None,
            Param::Value(v) => Some(v),
        },
        eta: a.eta,
        warmup: a.warmup,
        naive: !a.no_naive,
    };
    if a.s_batch == 0 || a.s_batch > a.n {
        return Err(Error::InvalidInput(format!("batch size must be in 1..={}", a.n)));
    }
    eprintln!("tau={} eta={} seed={}", resolve_tau(a.tau, a.m), a.eta, a.seed);
    let rows = bench::run_bench(&cfg, |w| eprintln!("warning: {w}"))?;
    bench::write_csv(open_out(a.out.as_deref())?, &rows).map_err(write_err(a.out.as_deref()))?;
    Ok(EXIT_OK)
}

fn diag(a: &DiagArgs) -> Result<u8> {
    setup_workers(a.workers);
    let ds = a.data.load(a.seed)?;
    let tau = resolve_tau(a.tau, a.m);
    let net = init_network(a.m, ds.dim(), tau, a.seed)?;
    let dis = h_dis(&net, &ds)?;
    println!("n: {}", ds.n());
    println!("m: {}", a.m);
    println!("tau: {tau}");
    println!("lambda_min_dis: {}", dis.lambda_min);
    if dis.lambda_min <= 0.0 {
        eprintln!("warning: degenerate kernel, lambda_min(H^dis) = {}", dis.lambda_min);
    }
    let mc = h_cts_mc(&ds, tau, a.mc_samples, a.seed)?;
    println!("lambda_hat: {}", mc.lambda_min);
    println!("lambda_hat_se: {}", mc.lambda_se.unwrap_or(f64::NAN));
    if mc.lambda_min <= 0.0 {
        eprintln!("warning: lambda_hat = {} is not positive", mc.lambda_min);
    }

    if a.train_iters > 0 {
        let eta = match a.eta {
            Param::Value(v) => v,
            Param::Auto if mc.lambda_min > 0.0 => auto_eta(mc.lambda_min, a.s_batch, ds.n()),
            Param::Auto => {
                return Err(Error::InvalidInput(
                    "automatic step size needs lambda_hat > 0; pass an explicit step size".into(),
                ))
            }
        };
        let mut cfg = TrainConfig::new(eta, a.s_batch, a.train_iters);
        cfg.validate(ds.n())?;
        cfg.eval_every = 0;
        let mut st = init_trainer(ds.clone(), a.m, tau, a.seed)?;
        st.train(&cfg, &mut BatchSampler::new(a.seed))?;
        let movement = (0..a.m)
            .map(|r| st.weight_movement(r))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        cfg.check_gradient_bound = true;
        let mut dense = net.clone();
        let traj = train_naive(&mut dense, &ds, &cfg, &mut BatchSampler::new(a.seed))?;
        let ratio = traj.steps.iter().filter_map(|s| s.grad_ratio).fold(0.0, f64::max);
        println!("eta: {eta}");
        println!("train_iters: {}", a.train_iters);
        println!("max_weight_movement: {movement}");
        println!("gradient_bound_max_ratio: {ratio}");
    }

    if let Some(path) = &a.gram_out {
        write_gram_csv(path, &[&dis, &mc])?;
    }
    Ok(EXIT_OK)
}

fn write_gram_csv(path: &Path, reports: &[&GramReport]) -> Result<()> {
    let mut out = open_out(Some(path))?;
    let mut body = format!("{}\n", GramReport::CSV_HEADER);
    for r in reports {
        body.push_str(&r.csv_row());
        body.push('\n');
    }
    out.write_all(body.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

fn verify_cmd(a: &VerifyArgs) -> Result<u8> {
    let opts = VerifyOptions {
        suites: if a.suites.is_empty() {
            Suite::ALL.to_vec()
        } else {
            a.suites.clone()
        },
        seed: a.seed,
        inject_fault: a.inject_fault,
    };
    let results = verify::run(&opts)?;
    let mut ok = true;
    for r in &results {
        let status = if r.passed() { "ok" } else { "FAILED" };
        println!("{}: {} cases, {} failures ... {status}", r.suite, r.cases, r.failures);
        if let Some(f) = &r.first_failure {
            println!("  replay: {f}");
        }
        ok &= r.passed();
    }
    Ok(if ok { EXIT_OK } else { EXIT_FAILURE })
}
