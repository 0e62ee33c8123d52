use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlop::exec;
use nlop::optim::{loss_line, Algorithm, TrainConfig};

use nlop_cli::bundle::WeightsBundle;
use nlop_cli::cfl::{read_cfl, write_cfl};
use nlop_cli::layout::{self, ReconInputs};
use nlop_cli::metrics::{coil_mask, per_item};
use nlop_cli::reconet::{self, NetConfig, Network};
use nlop_cli::simulate::{simulate, SimConfig};
use nlop_cli::{CliError, Result};

#[derive(Parser)]
#[command(name = "nlop-cli", version, about = "Unrolled MRI reconstruction networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset: kspace, coils, pattern and reference.
    Simulate(SimArgs),
    /// Train a network or apply trained weights.
    Reconet(ReconetArgs),
    /// Adjoint (coil-combined zero-filled) reconstruction.
    Adjoint {
        #[arg(long)]
        pattern: Option<PathBuf>,
        kspace: PathBuf,
        coils: PathBuf,
        output: PathBuf,
    },
    /// MSE and PSNR of a reconstruction, per item and averaged.
    Metrics {
        /// Coil maps whose support is used as foreground mask.
        #[arg(long)]
        mask: Option<PathBuf>,
        reconstruction: PathBuf,
        reference: PathBuf,
    },
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = 10)]
    slices: usize,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 4)]
    coils: usize,
    #[arg(long, default_value_t = 4)]
    accel: usize,
    #[arg(long, default_value_t = 8)]
    acl: usize,
    #[arg(long, default_value_t = 0.001)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    out: PathBuf,
}

#[derive(Args)]
struct ReconetArgs {
    #[arg(long, value_enum)]
    network: Network,
    #[arg(long, conflicts_with = "apply", required_unless_present = "apply")]
    train: bool,
    #[arg(long)]
    apply: bool,
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    pattern: Option<PathBuf>,
    /// Unrolled iterations.
    #[arg(short = 'T')]
    iterations: Option<usize>,
    #[arg(long)]
    filters: Option<usize>,
    #[arg(long)]
    kernel: Option<usize>,
    #[arg(long)]
    rbf: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    cg_iter: Option<usize>,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    #[arg(long, default_value_t = 10)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value = "adam")]
    optimizer: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    deterministic: bool,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    kspace: PathBuf,
    coils: PathBuf,
    weights: PathBuf,
    /// Reference image when training, output image when applying.
    image: PathBuf,
}

fn name(p: &Path) -> String {
    p.display().to_string()
}

fn inputs(kspace: &Path, coils: &Path, pattern: Option<&Path>) -> Result<ReconInputs> {
    let p = pattern.map(read_cfl).transpose()?;
    let pn = pattern.map(name).unwrap_or_else(|| "<estimated pattern>".into());
    layout::recon_inputs(read_cfl(kspace)?, read_cfl(coils)?, p, [&name(kspace), &name(coils), &pn])
}

impl ReconetArgs {
    /// The configuration implied by the flags, on top of `base`. With
    /// `strict`, every given flag must agree with `base`.
    fn net_config(&self, base: NetConfig, strict: bool) -> Result<NetConfig> {
        let mut c = base;
        let fields: [(&str, Option<usize>, &mut usize); 6] = [
            ("-T", self.iterations, &mut c.iterations),
            ("--filters", self.filters, &mut c.filters),
            ("--kernel", self.kernel, &mut c.kernel),
            ("--rbf", self.rbf, &mut c.rbf),
            ("--layers", self.layers, &mut c.layers),
            ("--cg-iter", self.cg_iter, &mut c.cg_iter),
        ];
        for (flag, given, field) in fields {
            if let Some(v) = given {
                if strict && *field != v {
                    return Err(CliError::Config(format!("{flag} {v} but the weights were trained with {}", *field)));
                }
                *field = v;
            }
        }
        if self.normalize {
            if strict && !c.normalize {
                return Err(CliError::Config("--normalize given but the weights were trained without it".into()));
            }
            c.normalize = true;
        }
        Ok(c)
    }

    fn run(&self) -> Result<()> {
        exec::set_threads(self.threads);
        exec::set_deterministic(self.deterministic);
        let inp = inputs(&self.kspace, &self.coils, self.pattern.as_deref())?;
        if self.train {
            let cfg = self.net_config(NetConfig::defaults(self.network), false)?;
            let reference = layout::image_from_file(read_cfl(&self.image)?, &name(&self.image), &inp.dims)?;
            let tc = TrainConfig {
                algorithm: self.optimizer.parse::<Algorithm>()?,
                lr: self.lr,
                batch_size: self.batch_size,
                epochs: self.epochs,
                seed: self.seed,
                deterministic: self.deterministic,
                ..TrainConfig::default()
            };
            let bundle = reconet::train(&cfg, &inp, &reference, &tc, |e, l| println!("{}", loss_line(e, l)))?;
            bundle.save(&self.weights)
        } else {
            let bundle = WeightsBundle::load(&self.weights)?;
            if bundle.config.network != self.network {
                return Err(CliError::Config(format!(
                    "--network {} but the weights belong to {}",
                    self.network, bundle.config.network
                )));
            }
            let mut bundle = bundle;
            bundle.config = self.net_config(bundle.config.clone(), true)?;
            let x = reconet::apply(&bundle, &inp, self.batch_size)?;
            write_cfl(&self.image, &layout::image_to_file(&x)?)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Simulate(a) => {
            let data = simulate(&SimConfig {
                slices: a.slices,
                size: a.size,
                coils: a.coils,
                accel: a.accel,
                acl: a.acl,
                noise: a.noise,
                seed: a.seed,
            })?;
            std::fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
            write_cfl(&a.out.join("kspace"), &layout::kspace_to_file(&data.kspace)?)?;
            write_cfl(&a.out.join("coils"), &layout::coils_to_file(&data.coils)?)?;
            write_cfl(&a.out.join("pattern"), &layout::pattern_to_file(&data.pattern)?)?;
            write_cfl(&a.out.join("reference"), &layout::image_to_file(&data.reference)?)
        }
        Cmd::Reconet(a) => a.run(),
        Cmd::Adjoint {
            pattern,
            kspace,
            coils,
            output,
        } => {
            let inp = inputs(&kspace, &coils, pattern.as_deref())?;
            write_cfl(&output, &layout::image_to_file(&reconet::adjoint_images(&inp)?)?)
        }
        Cmd::Metrics {
            mask,
            reconstruction,
            reference,
        } => {
            let x = read_cfl(&reconstruction)?;
            let r = read_cfl(&reference)?;
            let to_img = |a: nlop::MdArray<f32>, p: &Path| -> Result<nlop::MdArray<f32>> {
                let d = a.dims().to_vec();
                let dims = nlop::recon::SenseDims {
                    nx: d[0],
                    ny: d[1],
                    coils: 1,
                    maps: 1,
                    batch: d[15],
                };
                layout::image_from_file(a, &name(p), &dims)
            };
            let x = to_img(x, &reconstruction)?;
            let r = to_img(r, &reference)?;
            let m = match &mask {
                Some(p) => {
                    let c = read_cfl(p)?;
                    let d = c.dims().to_vec();
                    Some(coil_mask(&c.reshape(&[d[0], d[1], d[3], d[4], d[15]])?))
                }
                None => None,
            };
            let items = per_item(&x, &r, m.as_deref())?;
            for (k, it) in items.iter().enumerate() {
                println!("item {k} mse {} psnr {}", it.mse, it.psnr);
            }
            let n = items.len() as f64;
            println!(
                "mean mse {} psnr {}",
                items.iter().map(|m| m.mse).sum::<f64>() / n,
                items.iter().map(|m| m.psnr).sum::<f64>() / n
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
