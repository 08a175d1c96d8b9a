//! Command-line renderer and benchmark harness.
//!
//! Exit codes: 0 success, 2 argument errors (clap), 3 asset/render errors.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use terrain_shadow::heightfield::{load_heightfield, save_pgm, ScaleMeta};
use terrain_shadow::maxmip::build_max_mipmap;
use terrain_shadow::render::{
    compare_images, load_pfm, load_scene, render_scene, save_debug_png, save_pfm, save_png,
    Method,
};
use terrain_shadow::viewray::StepPolicy;

#[derive(Parser)]
#[command(name = "terrain-shadow", version, about = "Soft terrain shadows on curved height fields")]
struct Cli {
    /// Worker threads (overrides TERRAIN_SHADOW_THREADS; 0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene to PNG / PFM.
    Render(RenderArgs),
    /// Render a scene repeatedly with one or more methods, emit timing CSV.
    Bench(BenchArgs),
    /// Dump one max-mipmap level of a height field as 16-bit PGM.
    Mipdump(MipdumpArgs),
    /// Pixelwise statistics between two PFM images.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RenderArgs {
    /// Scene description (JSON).
    #[arg(long)]
    scene: PathBuf,
    /// Override the scene's shadow method (dp|uniform|reference).
    #[arg(long)]
    method: Option<Method>,
    /// 8-bit sRGB PNG output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Float PFM output path (irradiance).
    #[arg(long)]
    pfm: Option<PathBuf>,
    /// Float PFM output of the raw shadow fraction s.
    #[arg(long)]
    shadow_pfm: Option<PathBuf>,
    /// False-color debug PNG (J*, umbra, background).
    #[arg(long)]
    debug: Option<PathBuf>,
    /// Write render statistics as JSON (`-` for stdout).
    #[arg(long)]
    stats: Option<PathBuf>,
    /// March view rays from the bounding sphere instead of the displaced
    /// mesh (step-count comparison mode).
    #[arg(long)]
    no_predisplacement: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Comma-separated methods to run.
    #[arg(long, value_delimiter = ',', default_value = "dp,uniform")]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 3)]
    repeat: u32,
    /// CSV output path (`-` for stdout).
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Args)]
struct MipdumpArgs {
    /// Height-field path (.pgm or raw float32 with .meta sidecar).
    #[arg(long)]
    height: PathBuf,
    /// Pyramid level to dump (0 = full resolution).
    #[arg(long)]
    level: u32,
    /// Output PGM path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    /// Black level subtracted from image A, as a fraction of full scale.
    #[arg(long, default_value_t = 0.0)]
    dark_offset: f64,
    /// Normalize both images by their own maximum before differencing.
    #[arg(long)]
    normalize: bool,
    /// Write the statistics JSON to a file instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("TERRAIN_SHADOW_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        if n > 0 {
            terrain_shadow::set_threads(n);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(3)
        }
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Render(args) => render(args),
        Command::Bench(args) => bench(args),
        Command::Mipdump(args) => mipdump(args),
        Command::Compare(args) => compare(args),
    }
}

fn render(args: RenderArgs) -> anyhow::Result<()> {
    let mut loaded = load_scene(&args.scene)?;
    if let Some(method) = args.method {
        loaded.scene.method = method;
    }
    if args.no_predisplacement {
        loaded.scene.no_predisplacement = true;
    }
    let result = render_scene(&loaded, &StepPolicy::default())?;
    if let Some(path) = &args.out {
        save_png(path, &result.image)?;
    }
    if let Some(path) = &args.pfm {
        save_pfm(path, &result.image)?;
    }
    if let Some(path) = &args.shadow_pfm {
        save_pfm(path, &result.shadow)?;
    }
    if let Some(path) = &args.debug {
        save_debug_png(path, &result.shadow, &result.j_star, &result.hit)?;
    }
    if let Some(path) = &args.stats {
        let json = serde_json::to_string_pretty(&result.stats)?;
        if path.as_os_str() == "-" {
            println!("{json}");
        } else {
            std::fs::write(path, json)?;
        }
    }
    Ok(())
}

fn bench(args: BenchArgs) -> anyhow::Result<()> {
    let mut loaded = load_scene(&args.scene)?;
    let budget = loaded.scene.trace.sample_budget();
    let mut csv = String::from("method,run,wall_ms,mean_shadow_samples,max_shadow_samples,mean_view_steps,hit_pixels\n");
    for &method in &args.methods {
        loaded.scene.method = method;
        for run in 0..args.repeat {
            let result = render_scene(&loaded, &StepPolicy::default())?;
            let st = &result.stats;
            if method == Method::Dp && st.max_shadow_samples > budget {
                anyhow::bail!(
                    "dp trace exceeded its sample budget: {} > {budget}",
                    st.max_shadow_samples
                );
            }
            csv.push_str(&format!(
                "{},{},{:.3},{:.3},{},{:.3},{}\n",
                st.method,
                run,
                st.wall_ms,
                st.mean_shadow_samples,
                st.max_shadow_samples,
                st.mean_view_steps,
                st.hit_pixels
            ));
        }
    }
    if args.out.as_os_str() == "-" {
        print!("{csv}");
        std::io::stdout().flush()?;
    } else {
        std::fs::write(&args.out, csv)?;
    }
    Ok(())
}

fn mipdump(args: MipdumpArgs) -> anyhow::Result<()> {
    // scales are irrelevant for a pyramid dump
    let meta = ScaleMeta {
        horizontal_scale: 1.0,
        vertical_scale: 1.0,
        face_id: 0,
        body_radius: 1.0,
    };
    let hf = load_heightfield(&args.height, meta)?;
    let pyr = build_max_mipmap(&hf);
    if args.level >= pyr.num_levels() {
        anyhow::bail!(
            "level {} out of range: pyramid of a {}x{} field has {} levels",
            args.level,
            hf.n(),
            hf.n(),
            pyr.num_levels()
        );
    }
    save_pgm(&args.out, pyr.level_size(args.level), pyr.level(args.level))?;
    Ok(())
}

fn compare(args: CompareArgs) -> anyhow::Result<()> {
    let a = load_pfm(&args.a)?;
    let b = load_pfm(&args.b)?;
    let stats = compare_images(&a, &b, args.dark_offset, args.normalize)?;
    let json = serde_json::to_string_pretty(&stats)?;
    match &args.report {
        Some(path) => std::fs::write(path, json)?,
        None => println!("{json}"),
    }
    Ok(())
}
