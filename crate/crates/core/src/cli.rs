//! Command-line front end for the `lineartist` binary.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 I/O error,
//! 3 numerical failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::asw::{compute_asw, AswTable, PageRankVector, DEFAULT_THETA, DEFAULT_TOL};
use crate::dataset::{build_dataset, list_images, DatasetOptions};
use crate::edge::{canny, CannyParams};
use crate::error::{Error, ErrorKind, Result};
use crate::feature::{
    build_bank, export_features, extract, group_by_style, import_features, BankSpec, FeatureMap,
    FilterBank, DEFAULT_BANK_SEED,
};
use crate::imgio::{load_image, resize, save_image, to_grayscale, ImageBuf, ImageFormat};
use crate::pencil::{pencil_sketch, KernelLen, SketchParams};
use crate::smooth::{l0_smooth, L0Params};
use crate::transfer::{stylize_run, Init, TransferConfig};

const PAPER_DEFAULTS: &str =
    "Paper defaults: lambda=0.02, kappa=1.2, theta=0.85, alpha=8, beta=500, lr=1, \
                              iters=2000, tol=1e-4";

const SUBCOMMANDS: [&str; 7] = [
    "smooth",
    "canny",
    "sketch",
    "dataset",
    "weights",
    "stylize",
    "features-export",
];

#[derive(Debug, Parser)]
#[command(
    name = "lineartist",
    version,
    about = "Sketch extraction and adaptively weighted style transfer"
)]
#[command(args_override_self = true, allow_negative_numbers = true, after_help = PAPER_DEFAULTS)]
struct Cli {
    /// JSON file of flat option keys; flags on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// L0 gradient-minimization smoothing.
    #[command(allow_negative_numbers = true, after_help = PAPER_DEFAULTS)]
    Smooth {
        #[command(flatten)]
        l0: L0Args,
        input: PathBuf,
        output: PathBuf,
    },
    /// Canny edge map.
    #[command(allow_negative_numbers = true, after_help = PAPER_DEFAULTS)]
    Canny {
        #[arg(long, default_value_t = 1.4)]
        sigma: f64,
        /// Low hysteresis threshold, as a fraction of the maximum magnitude.
        #[arg(long, default_value_t = 0.1)]
        low: f64,
        /// High hysteresis threshold, as a fraction of the maximum magnitude.
        #[arg(long, default_value_t = 0.2)]
        high: f64,
        input: PathBuf,
        output: PathBuf,
    },
    /// Pencil-stroke sketch of an image (smooth it first for cleaner strokes).
    #[command(allow_negative_numbers = true, after_help = PAPER_DEFAULTS)]
    Sketch {
        #[command(flatten)]
        sketch: SketchArgs,
        input: PathBuf,
        output: PathBuf,
    },
    /// Paired sketch/reality dataset from a directory of images.
    #[command(allow_negative_numbers = true, after_help = PAPER_DEFAULTS)]
    Dataset {
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        #[arg(long = "out", value_name = "DIR")]
        output: PathBuf,
        /// Side of the square output images.
        #[arg(long, default_value_t = 256)]
        target: usize,
        /// Skip images whose smoothed gradient density exceeds this fraction.
        #[arg(long)]
        max_complexity: Option<f64>,
        #[command(flatten)]
        l0: L0Args,
        #[command(flatten)]
        sketch: SketchArgs,
    },
    /// Adaptive style weights for a set of style images, as JSON.
    #[command(allow_negative_numbers = true, after_help = PAPER_DEFAULTS)]
    Weights {
        /// Directory of style images.
        #[arg(long, value_name = "DIR", required_unless_present = "features_from")]
        styles: Option<PathBuf>,
        /// Style features exported by `features-export`, used instead of --styles.
        #[arg(long, value_name = "FILE")]
        features_from: Option<PathBuf>,
        #[arg(long, default_value = "asw.json")]
        out: PathBuf,
        #[command(flatten)]
        rank: RankArgs,
        #[command(flatten)]
        bank: BankArgs,
    },
    /// Multi-style transfer onto a content image.
    #[command(allow_negative_numbers = true, after_help = PAPER_DEFAULTS)]
    Stylize {
        #[arg(long, value_name = "FILE")]
        content: PathBuf,
        /// Directory of style images.
        #[arg(long, value_name = "DIR")]
        styles: PathBuf,
        /// Content weight.
        #[arg(long, default_value_t = 8.0)]
        alpha: f64,
        /// Style weight.
        #[arg(long, default_value_t = 500.0)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        lr: f64,
        #[arg(long, default_value_t = 0.9)]
        beta1: f64,
        #[arg(long, default_value_t = 0.999)]
        beta2: f64,
        #[arg(long, default_value_t = 2000)]
        iters: usize,
        /// Starting image: noise or content.
        #[arg(long, default_value = "noise")]
        init: Init,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Style features for the weights, exported by `features-export`.
        #[arg(long, value_name = "FILE")]
        features_from: Option<PathBuf>,
        /// Write `<out>.trace.csv` with the loss before every step.
        #[arg(long)]
        trace: bool,
        /// Layers carrying the content term (comma separated, default all).
        #[arg(long, value_delimiter = ',')]
        content_layers: Option<Vec<usize>>,
        /// Layers carrying the style term (comma separated, default all).
        #[arg(long, value_delimiter = ',')]
        style_layers: Option<Vec<usize>>,
        #[command(flatten)]
        rank: RankArgs,
        #[command(flatten)]
        bank: BankArgs,
    },
    /// Feature pyramid of each image, written style-major to one file.
    #[command(name = "features-export", allow_negative_numbers = true, after_help = PAPER_DEFAULTS)]
    FeaturesExport {
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[command(flatten)]
        bank: BankArgs,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct L0Args {
    /// Smoothing weight.
    #[arg(long, default_value_t = 0.02)]
    lambda: f64,
    /// Growth factor of the splitting penalty.
    #[arg(long, default_value_t = 1.2)]
    kappa: f64,
    /// Splitting penalty at which iteration stops.
    #[arg(long, default_value_t = 1e5)]
    beta_max: f64,
}

impl L0Args {
    fn params(&self) -> Result<L0Params> {
        L0Params::new(self.lambda, self.kappa, self.beta_max)
    }
}

#[derive(Debug, Args)]
struct SketchArgs {
    /// Number of stroke directions.
    #[arg(long, default_value_t = 8)]
    directions: usize,
    /// Line length in pixels, or `auto` for min(H, W)/30.
    #[arg(long, default_value = "auto")]
    len: KernelLen,
    /// Stroke width relative to the line length.
    #[arg(long, default_value_t = 0.1)]
    width: f64,
    /// Keep dark strokes as bright values instead of black on white.
    #[arg(long)]
    no_invert: bool,
}

impl SketchArgs {
    fn params(&self) -> Result<SketchParams> {
        let p = SketchParams {
            n_directions: self.directions,
            kernel_len: self.len,
            stroke_width: self.width,
            invert_output: !self.no_invert,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Args)]
struct RankArgs {
    /// PageRank damping factor.
    #[arg(long, default_value_t = DEFAULT_THETA)]
    theta: f64,
    /// PageRank convergence tolerance.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Debug, Args)]
struct BankArgs {
    /// Images are resized to SIZE x SIZE before feature extraction.
    #[arg(long, default_value_t = 256)]
    size: usize,
    /// Depth of the feature pyramid.
    #[arg(long, default_value_t = 3)]
    layers: usize,
    #[arg(long, default_value_t = DEFAULT_BANK_SEED)]
    bank_seed: u64,
}

impl BankArgs {
    fn bank(&self) -> Result<FilterBank> {
        if self.size == 0 {
            return Err(Error::param("size", "must be at least 1"));
        }
        build_bank(BankSpec {
            seed: self.bank_seed,
            layers: self.layers,
            ..BankSpec::default()
        })
    }

    fn load(&self, path: &Path) -> Result<ImageBuf> {
        resize(&load_image(path)?.to_rgb(), self.size, self.size)
    }
}

/// Turns the config file's keys into flags placed right after the
/// subcommand, so anything typed later on the command line wins.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut config = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            match it.next() {
                Some(v) => config = Some(PathBuf::from(v)),
                None => return Err(Error::param("config", "expects a file path")),
            }
        } else if let Some(v) = a.to_str().and_then(|s| s.strip_prefix("--config=")) {
            config = Some(PathBuf::from(v));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::param("config", format!("{}: {e}", path.display())))?;
    let serde_json::Value::Object(map) = value else {
        return Err(Error::param("config", "top level must be a JSON object"));
    };
    let mut flags = Vec::new();
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        match v {
            serde_json::Value::Bool(true) => flags.push(flag),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::String(s) => flags.extend([flag, s]),
            serde_json::Value::Number(n) => flags.extend([flag, n.to_string()]),
            serde_json::Value::Array(items) => {
                let joined: Vec<String> = items
                    .iter()
                    .map(|i| match i {
                        serde_json::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect();
                flags.extend([flag, joined.join(",")]);
            }
            serde_json::Value::Object(_) => {
                return Err(Error::param(
                    "config",
                    format!("key {key:?} must not be an object"),
                ));
            }
        }
    }
    let at = rest
        .iter()
        .position(|a| a.to_str().is_some_and(|s| SUBCOMMANDS.contains(&s)))
        .map_or(rest.len(), |p| p + 1);
    rest.splice(at..at, flags.into_iter().map(OsString::from));
    Ok(rest)
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("LINEARTIST_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            Error::param(
                "LINEARTIST_THREADS",
                format!("expected a positive integer, got {value:?}"),
            )
        })?;
    #[cfg(feature = "parallel")]
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
    {
        log::warn!("thread pool already initialised: {e}");
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

/// Saves `img`, converting to grayscale when the target format needs it.
fn write_image(img: &ImageBuf, path: &Path) -> Result<()> {
    let format = ImageFormat::from_path(path)?;
    if format == ImageFormat::Pgm && img.channels() == 3 {
        save_image(&to_grayscale(img).to_buf(), path, format)
    } else {
        save_image(img, path, format)
    }
}

fn style_images(dir: &Path, bank: &BankArgs) -> Result<(Vec<String>, Vec<ImageBuf>)> {
    let files = match list_images(dir) {
        Err(Error::NotFound(_)) => {
            return Err(Error::param(
                "styles",
                format!("directory {} does not exist", dir.display()),
            ))
        }
        other => other?,
    };
    if files.is_empty() {
        return Err(Error::param(
            "styles",
            format!("no PNG/PGM/PPM images in {}", dir.display()),
        ));
    }
    let names = files
        .iter()
        .map(|p| {
            p.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
        .collect();
    let images = files.iter().map(|p| bank.load(p)).collect::<Result<_>>()?;
    Ok((names, images))
}

fn imported_styles(path: &Path) -> Result<Vec<Vec<FeatureMap>>> {
    group_by_style(import_features(path)?)
}

#[derive(Serialize)]
struct WeightsReport<'a> {
    layers: usize,
    styles: Vec<String>,
    /// `[layer][style]`
    omega: &'a [Vec<f64>],
    omega_bar: &'a [Vec<f64>],
    pr: Vec<&'a [f64]>,
}

fn write_weights(
    path: &Path,
    names: Vec<String>,
    table: &AswTable,
    prs: &[PageRankVector],
) -> Result<()> {
    let report = WeightsReport {
        layers: table.n_layers,
        styles: names,
        omega: &table.omega,
        omega_bar: &table.omega_bar,
        pr: prs.iter().map(|p| p.pr.as_slice()).collect(),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

fn trace_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.trace.csv"))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Smooth { l0, input, output } => {
            let params = l0.params()?;
            let img = load_image(&input)?;
            write_image(&l0_smooth(&img, &params)?, &output)
        }
        Command::Canny {
            sigma,
            low,
            high,
            input,
            output,
        } => {
            let params = CannyParams {
                sigma,
                t_low: low,
                t_high: high,
            };
            params.validate()?;
            let img = to_grayscale(&load_image(&input)?);
            write_image(&canny(&img, &params)?.to_gray().to_buf(), &output)
        }
        Command::Sketch {
            sketch,
            input,
            output,
        } => {
            let params = sketch.params()?;
            let img = to_grayscale(&load_image(&input)?);
            write_image(&pencil_sketch(&img, &params)?.to_buf(), &output)
        }
        Command::Dataset {
            input,
            output,
            target,
            max_complexity,
            l0,
            sketch,
        } => {
            let opts = DatasetOptions {
                l0: l0.params()?,
                sketch: sketch.params()?,
                target,
                max_complexity,
            };
            let manifest = build_dataset(&input, &output, &opts)?;
            log::info!(
                "wrote {} pairs to {}",
                manifest.records.len(),
                output.display()
            );
            Ok(())
        }
        Command::Weights {
            styles,
            features_from,
            out,
            rank,
            bank,
        } => {
            let (names, features) = match (&features_from, &styles) {
                (Some(file), _) => {
                    let f = imported_styles(file)?;
                    ((0..f.len()).map(|i| format!("style{i}")).collect(), f)
                }
                (None, Some(dir)) => {
                    let fb = bank.bank()?;
                    let (names, images) = style_images(dir, &bank)?;
                    let f = images
                        .iter()
                        .map(|i| extract(i, &fb))
                        .collect::<Result<_>>()?;
                    (names, f)
                }
                (None, None) => {
                    return Err(Error::param("styles", "give --styles or --features-from"))
                }
            };
            let (table, prs) = compute_asw(&features, rank.theta, rank.tol)?;
            write_weights(&out, names, &table, &prs)
        }
        Command::Stylize {
            content,
            styles,
            alpha,
            beta,
            lr,
            beta1,
            beta2,
            iters,
            init,
            seed,
            out,
            features_from,
            trace,
            content_layers,
            style_layers,
            rank,
            bank,
        } => {
            let cfg = TransferConfig {
                alpha,
                beta,
                lr,
                beta1,
                beta2,
                iterations: iters,
                init,
                seed,
                theta: rank.theta,
                tol: rank.tol,
                content_layers,
                style_layers,
                ..TransferConfig::default()
            };
            cfg.validate()?;
            ImageFormat::from_path(&out)?;
            let fb = bank.bank()?;
            let (_, style_imgs) = style_images(&styles, &bank)?;
            let d = bank.load(&content)?;
            let asw = match &features_from {
                Some(file) => {
                    let imported = imported_styles(file)?;
                    if imported.len() != style_imgs.len() {
                        return Err(Error::param(
                            "features-from",
                            format!(
                                "holds {} styles but --styles has {}",
                                imported.len(),
                                style_imgs.len()
                            ),
                        ));
                    }
                    Some(compute_asw(&imported, cfg.theta, cfg.tol)?.0)
                }
                None => None,
            };
            let run = stylize_run(&d, &style_imgs, &cfg, &fb, asw)?;
            write_image(&run.image, &out)?;
            if trace {
                let mut csv = String::from("iteration,loss\n");
                for (i, l) in run.losses.iter().enumerate() {
                    writeln!(csv, "{i},{l:e}").expect("writing to a String");
                }
                let path = trace_path(&out);
                fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
            }
            Ok(())
        }
        Command::FeaturesExport { out, bank, inputs } => {
            let fb = bank.bank()?;
            let mut maps = Vec::new();
            for path in &inputs {
                maps.extend(extract(&bank.load(path)?, &fb)?);
            }
            export_features(&maps, &out)
        }
    }
}

fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Validation => 1,
        ErrorKind::Io => 2,
        ErrorKind::Numerical => 3,
    }
}

fn report(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter { name, reason }
            if name.chars().all(|c| c.is_ascii_uppercase() || c == '_') =>
        {
            eprintln!("error: {name}: {reason}")
        }
        Error::InvalidParameter { name, reason } => eprintln!("error: invalid --{name}: {reason}"),
        other => eprintln!("error: {other}"),
    }
    exit_code(e.kind())
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run(args: impl IntoIterator<Item = OsString>) -> i32 {
    let args = match expand_config(args.into_iter().collect()) {
        Ok(a) => a,
        Err(e) => return report(&e),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    if let Err(e) = configure_threads() {
        return report(&e);
    }
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_flags_follow_the_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(
            &cfg,
            r#"{"lambda": 0.05, "no_invert": true, "style-layers": [0, 2]}"#,
        )
        .unwrap();
        let args = expand_config(os(&[
            "lineartist",
            "--config",
            cfg.to_str().unwrap(),
            "smooth",
            "--lambda",
            "0.1",
        ]))
        .unwrap();
        let s: Vec<String> = args
            .iter()
            .map(|a| a.to_string_lossy().into_owned())
            .collect();
        let at = s.iter().position(|a| a == "smooth").unwrap();
        assert_eq!(&s[..=at], ["lineartist", "smooth"]);
        assert_eq!(s.last().unwrap(), "0.1");
        assert!(s.contains(&"--no-invert".to_string()));
        assert!(s.contains(&"0,2".to_string()));
    }

    #[test]
    fn later_flags_override_config() {
        let cli = Cli::try_parse_from(os(&[
            "lineartist",
            "smooth",
            "--lambda",
            "0.05",
            "--lambda",
            "0.1",
            "a.png",
            "b.png",
        ]))
        .unwrap();
        match cli.command {
            Command::Smooth { l0, .. } => assert_eq!(l0.lambda, 0.1),
            _ => panic!("wrong subcommand"),
        }
    }

    #[test]
    fn trace_sits_beside_output() {
        assert_eq!(
            trace_path(Path::new("out/g.png")),
            PathBuf::from("out/g.trace.csv")
        );
    }
}
