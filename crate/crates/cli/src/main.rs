//! `sfpsf` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (unreadable or malformed
//! inputs, failed resampling). `SFPSF_THREADS` caps the worker pool.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sfpsf::analysis::experiments::{
    describe_psfs, mean_suppression, run_frequency, run_phantom, run_volumes, FrequencyConfig,
    PhantomConfig, VolumeConfig,
};
use sfpsf::analysis::Pattern;
use sfpsf::io::report::{
    write_phantom_csv, write_spectrum_csv, write_volume_csv, write_volume_summary_csv,
};
use sfpsf::io::{
    read_affine, read_scalar_nifti, read_vector_nifti, write_nifti, write_pgm, Datatype,
};
use sfpsf::{
    resample_sfpsf, resample_standard, DisplacementField, GridSpec, InterpKernel, MatchingStrategy,
    ResampleConfig, SfPsf, SpatialTransform,
};

#[derive(Parser)]
#[command(name = "sfpsf", version, about = "PSF-matched image resampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Resample a NIfTI image onto a reference grid.
    Resample(ResampleArgs),
    /// Striped phantom downsampled three ways, with PGM panels and RMSE table.
    Phantom(PhantomArgs),
    /// Supra-Nyquist power of sinc3 vs sfpsf on warped band-limited images.
    Spectrum(SpectrumArgs),
    /// Volume preservation of soft blobs, linear vs sfpsf.
    Volumes(VolumesArgs),
    /// Print the source, target and matching PSFs for a pair of voxel sizes.
    PsfDebug(PsfDebugArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Nearest,
    Linear,
    Cubic,
    Sinc3,
    Sfpsf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Diag,
    Frob,
    Geom,
}

impl From<Strategy> for MatchingStrategy {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::Diag => MatchingStrategy::DiagonalApprox,
            Strategy::Frob => MatchingStrategy::FrobeniusClosest,
            Strategy::Geom => MatchingStrategy::GeometricMinVolume,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OutType {
    F32,
    F64,
}

/// `a` or `a,b,c`.
fn triple_f64(s: &str) -> std::result::Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("'{t}' is not a number"))
        })
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [a] => Ok([a; 3]),
        [a, b, c] => Ok([a, b, c]),
        _ => Err(format!(
            "expected 1 or 3 comma-separated values, got {}",
            v.len()
        )),
    }
}

fn triple_usize(s: &str) -> std::result::Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| format!("'{t}' is not a count"))
        })
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [a, b, c] => Ok([a, b, c]),
        _ => Err(format!(
            "expected 3 comma-separated values, got {}",
            v.len()
        )),
    }
}

fn odd_samples(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 3 && n % 2 == 1 => Ok(n),
        _ => Err(format!("'{s}' must be an odd integer of at least 3")),
    }
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("grid").required(true).args(["reference", "dims"])))]
struct ResampleArgs {
    #[arg(long)]
    source: PathBuf,
    /// Image whose grid is the target.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// Target voxel counts `nx,ny,nz`, covering the source field of view.
    #[arg(long, value_parser = triple_usize, requires = "spacing")]
    dims: Option<[usize; 3]>,
    /// Target voxel size in mm.
    #[arg(long, value_parser = triple_f64, requires = "dims")]
    spacing: Option<[f64; 3]>,
    /// Target-to-source affine text file.
    #[arg(long)]
    affine: Option<PathBuf>,
    /// Displacement field on the target grid (applied before the affine).
    #[arg(long)]
    field: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sfpsf")]
    method: Method,
    /// Base interpolator for `--method sfpsf`.
    #[arg(long, value_enum, default_value = "linear")]
    kernel: Method,
    #[arg(long, value_enum, default_value = "diag")]
    strategy: Strategy,
    /// Source PSF FWHM in mm along the source voxel axes; defaults to the voxel size.
    #[arg(long, value_parser = triple_f64)]
    source_fwhm: Option<[f64; 3]>,
    /// Target PSF FWHM in mm along the target voxel axes; defaults to the voxel size.
    #[arg(long, value_parser = triple_f64)]
    target_fwhm: Option<[f64; 3]>,
    #[arg(long, value_parser = odd_samples, default_value = "7")]
    samples: usize,
    /// Outside value; `nan` masks voxels whose support is mostly outside.
    #[arg(long, default_value_t = 0.0)]
    background: f64,
    #[arg(long)]
    clamp01: bool,
    #[arg(long, value_enum, default_value = "f64")]
    datatype: OutType,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long, value_parser = odd_samples, default_value = "7")]
    samples: usize,
    #[arg(long, value_enum, default_value = "diag")]
    strategy: Strategy,
    /// `stripes` or `checkerboard`.
    #[arg(long, default_value = "stripes")]
    pattern: Pattern,
    #[arg(long, default_value_t = 2)]
    period: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long, default_value_t = 10)]
    cases: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_parser = odd_samples, default_value = "7")]
    samples: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VolumesArgs {
    #[arg(long, default_value_t = 30)]
    blobs: usize,
    #[arg(long, default_value_t = 4)]
    poses: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_parser = odd_samples, default_value = "7")]
    samples: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PsfDebugArgs {
    #[arg(long, value_parser = triple_f64, default_value = "1")]
    source_spacing: [f64; 3],
    #[arg(long, value_parser = triple_f64, default_value = "3")]
    target_spacing: [f64; 3],
    #[arg(long, value_enum, default_value = "diag")]
    strategy: Strategy,
}

fn kernel_of(m: Method) -> InterpKernel {
    match m {
        Method::Nearest => InterpKernel::Nearest,
        Method::Linear | Method::Sfpsf => InterpKernel::Linear,
        Method::Cubic => InterpKernel::Cubic,
        Method::Sinc3 => InterpKernel::Sinc3,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn out_dir(dir: &Path) -> Result<&Path> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn cmd_resample(a: &ResampleArgs) -> Result<()> {
    let start = Instant::now();
    let source = read_scalar_nifti(&a.source)?;
    let target = match (&a.reference, a.dims, a.spacing) {
        (Some(r), _, _) => read_scalar_nifti(r)?.grid().clone(),
        (None, Some(d), Some(s)) => source.grid().with_spacing(d, s)?,
        _ => unreachable!("clap enforces exactly one grid specification"),
    };
    let affine = a.affine.as_ref().map(read_affine).transpose()?;
    let field = a
        .field
        .as_ref()
        .map(|p| read_vector_nifti(p).map(DisplacementField::new))
        .transpose()?;
    let t = match (affine, field) {
        (None, None) => SpatialTransform::identity(),
        (Some(affine), None) => affine.into(),
        (None, Some(field)) => field.into(),
        (Some(affine), Some(field)) => SpatialTransform::Composed { affine, field },
    };

    let (img, singular) = match a.method {
        Method::Sfpsf => {
            let mut cfg = ResampleConfig {
                kernel: kernel_of(a.kernel),
                strategy: a.strategy.into(),
                samples_per_axis: a.samples,
                background: a.background,
                clamp01: a.clamp01,
                ..ResampleConfig::nominal(source.grid(), &target)
            };
            if let Some(f) = a.source_fwhm {
                cfg.source_psf = SfPsf::from_fwhm(f)?;
            }
            if let Some(f) = a.target_fwhm {
                cfg.target_psf = SfPsf::from_fwhm(f)?;
            }
            let (img, stats) = resample_sfpsf(&source, &t, &target, &cfg)?;
            (img, stats.singular_jacobians)
        }
        m => (
            resample_standard(&source, &t, &target, kernel_of(m), a.background)?,
            0,
        ),
    };
    let dt = match a.datatype {
        OutType::F32 => Datatype::F32,
        OutType::F64 => Datatype::F64,
    };
    write_nifti(&img, &a.out, dt)?;
    println!(
        "voxels={} singular_jacobians={} wall_time={:.3}s",
        img.data().len(),
        singular,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_phantom(a: &PhantomArgs) -> Result<()> {
    let dir = out_dir(&a.out)?;
    let r = run_phantom(&PhantomConfig {
        samples_per_axis: a.samples,
        strategy: a.strategy.into(),
        pattern: a.pattern,
        period: a.period,
        ..PhantomConfig::default()
    })?;
    let window = Some((0.0, 1.0));
    for (name, img) in [
        ("source", &r.source),
        ("overlay", &r.overlay),
        ("high_res", &r.high_res),
        ("linear", &r.linear),
        ("sinc3", &r.sinc),
        ("sfpsf", &r.sfpsf),
    ] {
        write_pgm(img, dir.join(format!("{name}.pgm")), window)?;
    }
    write_phantom_csv(create(&dir.join("phantom.csv"))?, &r)?;
    for (method, e) in r.errors() {
        println!(
            "{method}: rmse={e:.4} ({:.2}% of range)",
            100.0 * e / r.range
        );
    }
    Ok(())
}

fn cmd_spectrum(a: &SpectrumArgs) -> Result<()> {
    let dir = out_dir(&a.out)?;
    let cases = run_frequency(&FrequencyConfig {
        cases: a.cases,
        seed: a.seed,
        samples_per_axis: a.samples,
        ..FrequencyConfig::default()
    })?;
    let mean = mean_suppression(&cases);
    write_spectrum_csv(create(&dir.join("spectrum.csv"))?, &cases, mean)?;
    match mean {
        Some(m) => println!("mean suppression={m:.4} over {} cases", cases.len()),
        None => println!("mean suppression undefined"),
    }
    Ok(())
}

fn cmd_volumes(a: &VolumesArgs) -> Result<()> {
    let dir = out_dir(&a.out)?;
    let s = run_volumes(&VolumeConfig {
        blobs: a.blobs,
        poses: a.poses,
        seed: a.seed,
        samples_per_axis: a.samples,
        ..VolumeConfig::default()
    })?;
    write_volume_csv(create(&dir.join("volumes.csv"))?, &s)?;
    write_volume_summary_csv(create(&dir.join("volume_summary.csv"))?, &s)?;
    println!(
        "mean arvd linear={:.4} sfpsf={:.4} wilcoxon_p={:.3e}",
        s.mean_arvd_linear, s.mean_arvd_sfpsf, s.p_value
    );
    Ok(())
}

fn cmd_psf_debug(a: &PsfDebugArgs) -> Result<()> {
    let src = GridSpec::axis_aligned([1; 3], a.source_spacing, [0.0; 3])?;
    let tgt = GridSpec::axis_aligned([1; 3], a.target_spacing, [0.0; 3])?;
    for (name, psf) in
        ["source", "target", "matching"]
            .iter()
            .zip(describe_psfs(&src, &tgt, a.strategy.into())?)
    {
        let m = psf.cov().to_matrix();
        let sigma = psf.cov().diag().map(f64::sqrt);
        println!(
            "{name}: sigma_mm=[{:.4}, {:.4}, {:.4}]",
            sigma[0], sigma[1], sigma[2]
        );
        for r in 0..3 {
            println!(
                "  [{:10.6} {:10.6} {:10.6}]",
                m[(r, 0)],
                m[(r, 1)],
                m[(r, 2)]
            );
        }
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SFPSF_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("SFPSF_THREADS='{v}' is not a count"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Resample(a) => cmd_resample(a),
        Command::Phantom(a) => cmd_phantom(a),
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Volumes(a) => cmd_volumes(a),
        Command::PsfDebug(a) => cmd_psf_debug(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
