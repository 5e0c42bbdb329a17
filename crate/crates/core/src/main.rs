use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use asdn::bench::{
    self, bench_strategies, density_csv, density_series, density_study, density_svg,
    eval_rows_csv, load_dataset, strategies_csv, EvalProtocol,
};
use asdn::imaging::{load_image, save_image};
use asdn::lfr::LevelPredictor;
use asdn::model::{fragments, Checkpoint};
use asdn::pipeline::{train, TrainConfig};
use asdn::resample::{degrade_pair, resize, ResizeSpec};
use asdn::scheduler::{execute, plan, plan_equal, DeploymentPlan};
use asdn::synth;
use asdn::tensor::gradcheck::{finite_diff_check, Corrupted, GradCheckOptions};

#[derive(Parser)]
#[command(name = "asdn", version, about = "Arbitrary-scale super-resolution")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// key=value config file (training keys and model keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Protocol::LumaShave)]
    protocol: Protocol,
    #[arg(long, global = true)]
    out_csv: Option<PathBuf>,
    #[arg(long, global = true)]
    out_svg: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Protocol {
    LumaShave,
    RgbFull,
}

impl Protocol {
    fn get(self) -> EvalProtocol {
        match self {
            Protocol::LumaShave => EvalProtocol::luma_shave(),
            Protocol::RgbFull => EvalProtocol::rgb_full(),
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Upscale one PNG by any factor above 1.
    Upscale(UpscaleArgs),
    /// Produce the bicubic low-resolution version of a PNG.
    Degrade {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        scale: f64,
    },
    /// Train a model on a directory of PNG images.
    Train(TrainArgs),
    /// Score bicubic or a model on a benchmark directory.
    Eval(EvalArgs),
    /// Compare recursive deployment plans for one target scale.
    BenchStrategies(StrategyArgs),
    /// PSNR against scale for models with different level counts.
    DensityStudy(DensityArgs),
    /// Finite-difference check of every layer's gradients.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Fast end-to-end sanity checks.
    Selftest,
}

#[derive(Args)]
struct UpscaleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    scale: f64,
    /// Checkpoint to use.
    #[arg(long, conflicts_with = "bicubic")]
    model: Option<PathBuf>,
    /// Plain bicubic resampling, no model.
    #[arg(long)]
    bicubic: bool,
    /// Deployment plan: `recursive`, `equal:N` or a ratio list like `2,1.5`.
    #[arg(long, default_value = "recursive")]
    plan: String,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    updates: Option<u64>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    levels: Option<usize>,
    /// Fill the dataset directory with this many synthetic scenes first.
    #[arg(long)]
    synthetic: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    scale: Vec<f64>,
    #[arg(long, conflicts_with = "bicubic")]
    model: Option<PathBuf>,
    #[arg(long)]
    bicubic: bool,
    /// Print per-image scores.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct StrategyArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    scale: f64,
    #[arg(long)]
    model: PathBuf,
    /// Plans separated by `;`, each `recursive`, `equal:N` or a ratio list.
    #[arg(long)]
    plans: Option<String>,
}

#[derive(Args)]
struct DensityArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Checkpoints, one per level count.
    #[arg(long, required = true)]
    model: Vec<PathBuf>,
    /// Scales to sweep, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1.1,1.2,1.3,1.4,1.5,1.6,1.7,1.8,1.9,2.0")]
    scales: Vec<f64>,
}

fn parse_plan(spec: &str, target: f64) -> Result<DeploymentPlan> {
    let spec = spec.trim();
    if spec == "recursive" {
        return Ok(plan(target)?);
    }
    if let Some(n) = spec.strip_prefix("equal:") {
        return Ok(plan_equal(target, n.parse().context("equal:N needs an integer")?)?);
    }
    let steps: Vec<f64> = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad plan {spec:?}"))?;
    let p = DeploymentPlan::custom(steps)?;
    if ((p.product() - target) / target).abs() > 1e-6 {
        bail!("plan [{p}] multiplies to {}, not {target}", p.product());
    }
    Ok(DeploymentPlan { target, ..p })
}

fn load_model(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn write_out(path: &Option<PathBuf>, text: &str) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn upscale(a: &UpscaleArgs) -> Result<()> {
    let lr = load_image(&a.input)?;
    let out = if a.bicubic {
        resize(&lr, ResizeSpec::new(a.scale))?
    } else {
        let Some(model) = &a.model else {
            bail!("pass --model <checkpoint> or --bicubic");
        };
        let ck = load_model(model)?;
        let p = parse_plan(&a.plan, a.scale)?;
        execute(&p, &lr, &ck.model)?
    };
    save_image(&out, &a.out)?;
    println!(
        "{}x{} -> {}x{}",
        lr.width(),
        lr.height(),
        out.width(),
        out.height()
    );
    Ok(())
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let mut cfg = TrainConfig::default();
    if let Some(c) = &cli.config {
        cfg.apply_file(c)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.model.seed = s;
    }
    if let Some(d) = &a.dataset {
        cfg.dataset = d.clone();
    }
    if let Some(d) = &a.cache_dir {
        cfg.cache_dir = Some(d.clone());
    }
    if let Some(n) = a.updates {
        cfg.total_updates = n;
    }
    if let Some(p) = &a.checkpoint {
        cfg.checkpoint = p.clone();
    }
    if let Some(p) = &a.log {
        cfg.log = p.clone();
    }
    if let Some(lr) = a.lr {
        cfg.initial_lr = lr;
    }
    if let Some(l) = a.levels {
        cfg.model.level_count = l;
    }
    if let Some(n) = a.synthetic {
        synth::write_scenes(&cfg.dataset, n, 128, 128, cfg.seed)?;
    }
    let out = train(&cfg, a.resume.as_deref())?;
    let last: Vec<f64> = out.log.iter().rev().take(50).map(|r| r.loss).collect();
    let mean = last.iter().sum::<f64>() / last.len().max(1) as f64;
    println!(
        "trained to step {}; mean loss of the last {} updates {mean:.5}; checkpoint {}",
        out.checkpoint.step,
        last.len(),
        cfg.checkpoint.display()
    );
    Ok(())
}

fn eval_cmd(cli: &Cli, a: &EvalArgs) -> Result<()> {
    if a.scale.is_empty() {
        bail!("pass at least one --scale");
    }
    let protocol = cli.protocol.get();
    let images = load_dataset(&a.dataset)?;
    let name = a
        .dataset
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ck = match (&a.model, a.bicubic) {
        (Some(m), _) => Some(load_model(m)?),
        (None, true) => None,
        (None, false) => bail!("pass --model <checkpoint> or --bicubic"),
    };
    let mut rows = Vec::new();
    for &scale in &a.scale {
        let row = match &ck {
            None => bench::eval_images(&name, &images, scale, &protocol, "bicubic", |lr| {
                bench::bicubic_upscale(lr, scale)
            })?,
            Some(c) => {
                let method = if scale > 2.0 { "recursive-model" } else { "model" };
                bench::eval_images(&name, &images, scale, &protocol, method, |lr| {
                    bench::model_upscale(lr, scale, &c.model)
                })?
            }
        };
        println!(
            "{} x{} {}: PSNR {:.2} dB, SSIM {:.4} ({} images)",
            row.dataset,
            row.scale,
            row.method,
            row.psnr,
            row.ssim,
            row.per_image.len()
        );
        if a.verbose {
            for s in &row.per_image {
                println!("  {}: {:.2} dB, {:.4}", s.name, s.psnr, s.ssim);
            }
        }
        rows.push(row);
    }
    write_out(&cli.out_csv, &eval_rows_csv(&rows))
}

fn strategies_cmd(cli: &Cli, a: &StrategyArgs) -> Result<()> {
    let ck = load_model(&a.model)?;
    let images = load_dataset(&a.dataset)?;
    let plans: Vec<DeploymentPlan> = match &a.plans {
        Some(s) => s
            .split(';')
            .map(|p| parse_plan(p, a.scale))
            .collect::<Result<_>>()?,
        None => {
            let mut v = vec![plan(a.scale)?];
            for n in 2..=4 {
                if let Ok(p) = plan_equal(a.scale, n) {
                    v.push(p);
                }
            }
            v
        }
    };
    let rows = bench_strategies("bench", &images, a.scale, &ck.model, &plans, &cli.protocol.get())?;
    for r in &rows {
        println!("[{}]: PSNR {:.2} dB, SSIM {:.4}", r.plan, r.row.psnr, r.row.ssim);
    }
    write_out(&cli.out_csv, &strategies_csv(&rows))
}

fn density_cmd(cli: &Cli, a: &DensityArgs) -> Result<()> {
    let cks: Vec<Checkpoint> = a.model.iter().map(|p| load_model(p)).collect::<Result<_>>()?;
    let models: Vec<(usize, &dyn LevelPredictor)> = cks
        .iter()
        .map(|c| (c.model.level_count(), &c.model as &dyn LevelPredictor))
        .collect();
    let images = load_dataset(&a.dataset)?;
    let pts = density_study("bench", &images, &models, &a.scales, &cli.protocol.get())?;
    for p in &pts {
        println!("L={} x{:.2}: {:.2} dB", p.levels, p.scale, p.psnr);
    }
    write_out(&cli.out_csv, &density_csv(&pts))?;
    write_out(&cli.out_svg, &density_svg(&density_series(&pts), "scale", "PSNR (dB)"))
}

fn gradcheck_cmd(seed: u64, tolerance: f64) -> Result<bool> {
    let opts = GradCheckOptions {
        seed,
        ..GradCheckOptions::default()
    };
    let mut ok = true;
    for mut f in fragments::standard_fragments(seed)? {
        let r = finite_diff_check(f.as_mut(), &opts)?;
        let pass = r.passed(tolerance);
        ok &= pass;
        println!(
            "{} {}: max relative error {:.2e} over {} entries",
            if pass { "PASS" } else { "FAIL" },
            r.fragment,
            r.max_rel_error,
            r.checked
        );
    }
    let mut bad = Corrupted {
        inner: fragments::conv_fragment(seed)?,
        factor: 1.01,
    };
    let r = finite_diff_check(&mut bad, &opts)?;
    let caught = !r.passed(tolerance);
    ok &= caught;
    println!(
        "{} negative control: corrupted gradient gives {:.2e}",
        if caught { "PASS" } else { "FAIL" },
        r.max_rel_error
    );
    Ok(ok)
}

fn selftest(seed: u64) -> Result<bool> {
    use asdn::lfr::{represent, IdentityPredictor};
    let mut ok = true;
    let mut report = |name: &str, pass: bool| {
        println!("{} {name}", if pass { "PASS" } else { "FAIL" });
        ok &= pass;
    };

    let img = synth::scene(seed, 48, 40)?;
    let (lr, hr_ref) = degrade_pair(&img, 1.7)?;
    report(
        "degrade size rule",
        lr.dims() == (28, 23) && hr_ref.dims() == (48, 40),
    );
    let id = IdentityPredictor { levels: 11 };
    report(
        "identity predictor equals bicubic",
        represent(1.45, &lr, &id)? == resize(&lr, ResizeSpec::new(1.45))?,
    );
    report(
        "recursive plan for x3",
        plan(3.0)?.steps == vec![2.0, 1.5],
    );
    let out = execute(&plan(2.75)?, &lr, &id)?;
    report(
        "x2.75 output size",
        out.dims() == plan(2.75)?.output_dims(28, 23),
    );
    report("gradients", gradcheck_cmd(seed, 1e-4)?);
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.cmd {
        Cmd::Upscale(a) => upscale(a)?,
        Cmd::Degrade { input, out, scale } => {
            let (lr, _) = degrade_pair(&load_image(input)?, *scale)?;
            save_image(&lr, out)?;
            println!("wrote {}x{} to {}", lr.width(), lr.height(), out.display());
        }
        Cmd::Train(a) => train_cmd(&cli, a)?,
        Cmd::Eval(a) => eval_cmd(&cli, a)?,
        Cmd::BenchStrategies(a) => strategies_cmd(&cli, a)?,
        Cmd::DensityStudy(a) => density_cmd(&cli, a)?,
        Cmd::Gradcheck { tolerance } => return gradcheck_cmd(seed, *tolerance),
        Cmd::Selftest => return selftest(seed),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
