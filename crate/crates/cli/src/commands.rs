use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use log::info;
use spectral_splat::densify::DensifyConfig;
use spectral_splat::filters::{update_max_sampling_rate, FilterMode};
use spectral_splat::io::{atomic_write, load_cameras, load_ply, read_png, save_ply, write_rgb8_png};
use spectral_splat::render::{render, render_entropy_map, splat_and_render, PipelineOptions, RenderConfig};
use spectral_splat::scene::{CameraView, Gaussian3D};
use spectral_splat::synth::{
    camera_ring, default_focal, random_init, scene_extent, synth_scene, RING_RADIUS, TEST_VIEWS, TRAIN_VIEWS,
};
use spectral_splat::train::loss::psnr;
use spectral_splat::train::{scene_entropy_metric, train, TrainingView};
use spectral_splat::workbench::{
    self, analyze, entropy_map_image, render_views, zoom_bench, AnalyzeReport, ZoomReport,
};

use crate::config::FileConfig;
use crate::{CameraArgs, CheckFailed, Cli, Command, GlobalArgs, ReportFormat, SceneArgs, UsageError};

/// Initial spread of random-init Gaussians relative to the camera extent.
const INIT_RADIUS_FRACTION: f64 = 0.3;

struct Ctx {
    file: FileConfig,
    render: RenderConfig,
    seed: u64,
}

impl Ctx {
    fn new(g: &GlobalArgs) -> anyhow::Result<Self> {
        let file = match &g.config {
            Some(p) => FileConfig::load(p).map_err(|e| UsageError(format!("{e:#}")))?,
            None => FileConfig::default(),
        };
        let mut render = file.render;
        if g.deterministic {
            render.parallel = false;
        }
        Ok(Self {
            seed: g.seed.unwrap_or(file.train.seed),
            file,
            render,
        })
    }

    fn filter(&self, flag: Option<&str>, default: FilterMode) -> anyhow::Result<FilterMode> {
        Ok(self.file.filter(flag)?.unwrap_or(default))
    }
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let ctx = Ctx::new(&cli.global)?;
    match &cli.command {
        Command::Analyze {
            scene,
            format,
            out,
            needle_threshold,
        } => cmd_analyze(&ctx, scene, *format, out.as_deref(), *needle_threshold),
        Command::Render {
            scene,
            cameras,
            filter,
            out_dir,
        } => cmd_render(&ctx, scene, cameras, filter.as_deref(), out_dir),
        Command::Train {
            synth,
            count,
            cameras,
            size,
            init,
            variant,
            filter,
            iterations,
            out,
        } => {
            let source = match (synth, cameras) {
                (Some(kind), _) => TrainSource::Synth(*kind, *count, *size),
                (None, Some(p)) => TrainSource::Cameras(p.clone()),
                (None, None) => return Err(UsageError("train needs --synth or --cameras".into()).into()),
            };
            let opts = TrainArgs {
                source,
                count: *count,
                init: init.clone(),
                variant: *variant,
                filter: filter.clone(),
                iterations: *iterations,
                out: out.clone(),
                log_file: cli.global.log_file.clone(),
            };
            cmd_train(&ctx, &opts)
        }
        Command::ZoomBench {
            scene,
            cameras,
            view,
            filters,
            multipliers,
            reference,
            out_dir,
        } => cmd_zoom_bench(
            &ctx,
            scene,
            cameras,
            *view,
            filters,
            multipliers,
            reference.as_deref(),
            out_dir,
        ),
        Command::EntropyMap {
            scene,
            cameras,
            view,
            filter,
            colorbar,
            out,
        } => cmd_entropy_map(&ctx, scene, cameras, *view, filter.as_deref(), *colorbar, out),
    }
}

struct LoadedScene {
    gaussians: Vec<Gaussian3D>,
    synthetic: bool,
}

fn load_scene(ctx: &Ctx, args: &SceneArgs) -> anyhow::Result<LoadedScene> {
    if let Some(kind) = args.synth {
        // the ring resolution does not affect the Gaussians
        let s = synth_scene(kind, args.count, ctx.seed, 1, 1).map_err(|e| UsageError(e.to_string()))?;
        return Ok(LoadedScene {
            gaussians: s.gaussians,
            synthetic: true,
        });
    }
    let path = args
        .ply
        .as_ref()
        .ok_or_else(|| UsageError("a PLY path or --synth is required".into()))?;
    let ply = load_ply(path).with_context(|| format!("loading {}", path.display()))?;
    info!("loaded {} Gaussians from {}", ply.gaussians.len(), path.display());
    Ok(LoadedScene {
        gaussians: ply.gaussians,
        synthetic: false,
    })
}

fn ring(size: u32) -> anyhow::Result<Vec<CameraView>> {
    let (mut train, test) = camera_ring(TRAIN_VIEWS, TEST_VIEWS, RING_RADIUS, default_focal(size), size, size)
        .map_err(|e| UsageError(e.to_string()))?;
    train.extend(test);
    Ok(train)
}

fn load_camera_list(args: &CameraArgs) -> anyhow::Result<Vec<(u32, CameraView)>> {
    match &args.cameras {
        Some(p) => load_cameras(p)
            .with_context(|| format!("loading {}", p.display()))?
            .iter()
            .map(|r| Ok((r.id, r.to_view()?)))
            .collect(),
        None => Ok(ring(args.size)?
            .into_iter()
            .enumerate()
            .map(|(i, v)| (i as u32, v))
            .collect()),
    }
}

/// Records each Gaussian's maximal training sampling rate, when the training
/// cameras are known.
fn attach_sampling_rates(scene: &mut [Gaussian3D], args: &CameraArgs, synthetic: bool) -> anyhow::Result<()> {
    let views: Vec<CameraView> = match &args.train_cameras {
        Some(p) => load_cameras(p)
            .with_context(|| format!("loading {}", p.display()))?
            .iter()
            .map(|r| r.to_view())
            .collect::<Result<_, _>>()?,
        None if synthetic => ring(args.size)?.into_iter().take(TRAIN_VIEWS).collect(),
        None => return Ok(()),
    };
    for g in scene.iter_mut() {
        *g = update_max_sampling_rate(g, &views);
    }
    Ok(())
}

fn pick_view(cams: &[(u32, CameraView)], view: usize) -> anyhow::Result<CameraView> {
    cams.get(view)
        .map(|(_, v)| v.clone())
        .ok_or_else(|| UsageError(format!("--view {view} out of range ({} cameras)", cams.len())).into())
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(p) => atomic_write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => Ok(std::io::stdout().lock().write_all(bytes)?),
    }
}

fn cmd_analyze(
    ctx: &Ctx,
    scene: &SceneArgs,
    format: ReportFormat,
    out: Option<&Path>,
    threshold: f64,
) -> anyhow::Result<()> {
    let s = load_scene(ctx, scene)?;
    let report: AnalyzeReport = analyze(&s.gaussians, threshold)?;
    let bytes = match format {
        ReportFormat::Csv => report.to_csv().into_bytes(),
        ReportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(&report)?;
            v.push(b'\n');
            v
        }
    };
    write_output(out, &bytes)?;
    let sm = &report.summary;
    eprintln!(
        "{} Gaussians, mean entropy {:.4}, median kappa {}, {} needles (H < {})",
        sm.count, sm.entropy_mean, sm.kappa_median, sm.needle_count, sm.needle_threshold
    );
    Ok(())
}

fn cmd_render(
    ctx: &Ctx,
    scene: &SceneArgs,
    cameras: &CameraArgs,
    filter: Option<&str>,
    out_dir: &Path,
) -> anyhow::Result<()> {
    let mut s = load_scene(ctx, scene)?;
    attach_sampling_rates(&mut s.gaussians, cameras, s.synthetic)?;
    let cams = load_camera_list(cameras)?;
    let options = PipelineOptions::from(ctx.filter(filter, FilterMode::mip())?);
    let stats = render_views(&s.gaussians, &cams, &options, &ctx.render, out_dir)?;
    eprintln!("wrote {} views to {}", stats.len(), out_dir.display());
    Ok(())
}

enum TrainSource {
    Synth(spectral_splat::synth::SceneKind, usize, u32),
    Cameras(PathBuf),
}

struct TrainArgs {
    source: TrainSource,
    count: usize,
    init: Option<PathBuf>,
    variant: spectral_splat::train::Variant,
    filter: Option<String>,
    iterations: Option<usize>,
    out: PathBuf,
    log_file: Option<PathBuf>,
}

fn cmd_train(ctx: &Ctx, a: &TrainArgs) -> anyhow::Result<()> {
    let mut cfg = ctx.file.train;
    cfg.seed = ctx.seed;
    cfg.render = ctx.render;
    if let Some(n) = a.iterations {
        cfg.iterations = n;
    }
    if let Some(f) = ctx.file.filter(a.filter.as_deref())? {
        cfg.filter = Some(f);
    }

    // ground truth for held-out evaluation exists only for synthetic scenes
    let (views, held_out) = match &a.source {
        TrainSource::Synth(kind, n, size) => {
            let truth = synth_scene(*kind, *n, ctx.seed, *size, *size).map_err(|e| UsageError(e.to_string()))?;
            let gt = |c: &CameraView| splat_and_render(&truth.gaussians, c, FilterMode::mip(), &ctx.render);
            let views = truth
                .train_views
                .iter()
                .map(|c| {
                    Ok(TrainingView {
                        camera: c.clone(),
                        image: gt(c)?,
                    })
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            let held = truth
                .test_views
                .iter()
                .map(|c| Ok((c.clone(), gt(c)?)))
                .collect::<anyhow::Result<Vec<_>>>()?;
            (views, held)
        }
        TrainSource::Cameras(path) => {
            let base = path.parent().unwrap_or(Path::new("."));
            let records = load_cameras(path).with_context(|| format!("loading {}", path.display()))?;
            let views = records
                .iter()
                .map(|r| {
                    let img = r
                        .image_path
                        .as_ref()
                        .ok_or_else(|| UsageError(format!("camera {} has no image_path", r.id)))?;
                    let img = base.join(img);
                    let image = read_png(&img).with_context(|| format!("reading {}", img.display()))?;
                    Ok(TrainingView {
                        camera: r.to_view()?,
                        image,
                    })
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            (views, Vec::new())
        }
    };

    let cams: Vec<CameraView> = views.iter().map(|v| v.camera.clone()).collect();
    let extent = scene_extent(&cams);
    cfg.scene_extent = extent;
    let dcfg = ctx.file.densify.unwrap_or_else(|| DensifyConfig::for_extent(extent));

    let (init, extra) = match &a.init {
        Some(p) => {
            let ply = load_ply(p).with_context(|| format!("loading {}", p.display()))?;
            (ply.gaussians, Some(ply.extra))
        }
        None => (
            random_init(a.count, INIT_RADIUS_FRACTION * extent, ctx.seed.wrapping_add(1)),
            None,
        ),
    };

    let mut log: Box<dyn Write> = match &a.log_file {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut log_err = None;
    let mut first_psnr = None;
    let mut last_psnr = None;
    let outcome = train(&views, init, cfg, dcfg, a.variant, |e| {
        first_psnr.get_or_insert(e.psnr_mean);
        last_psnr = Some(e.psnr_mean);
        let line = serde_json::to_string(e)
            .map_err(std::io::Error::other)
            .and_then(|s| writeln!(log, "{s}"));
        if let Err(err) = line {
            log_err.get_or_insert(err);
        }
    })
    .context("training")?;
    if let Some(e) = log_err {
        return Err(anyhow::Error::new(e).context("writing training log"));
    }
    log.flush()?;

    let scene = &outcome.state.scene;
    save_ply(&a.out, scene, extra.as_ref()).with_context(|| format!("writing {}", a.out.display()))?;

    let entropy = scene_entropy_metric(scene)
        .map(|h| format!("{h:.4}"))
        .unwrap_or_else(|_| "n/a".into());
    eprintln!(
        "{} Gaussians after {} iterations, mean entropy {entropy}",
        scene.len(),
        cfg.iterations
    );
    if let (Some(f), Some(l)) = (first_psnr, last_psnr) {
        eprintln!("training PSNR {f:.2} dB (first epoch) -> {l:.2} dB (last epoch)");
    }
    if !held_out.is_empty() && !scene.is_empty() {
        let opts = PipelineOptions::from(cfg.filter.unwrap_or(a.variant.default_filter()));
        let mut sum = 0.0;
        for (cam, gt) in &held_out {
            let (fb, _) = render(scene, cam, &opts, &ctx.render)?;
            sum += psnr(&fb, gt)?;
        }
        eprintln!(
            "held-out PSNR {:.2} dB over {} views",
            sum / held_out.len() as f64,
            held_out.len()
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_zoom_bench(
    ctx: &Ctx,
    scene: &SceneArgs,
    cameras: &CameraArgs,
    view: usize,
    filters: &[String],
    multipliers: &[f64],
    reference: Option<&Path>,
    out_dir: &Path,
) -> anyhow::Result<()> {
    let s = load_scene(ctx, scene)?;
    let base = pick_view(&load_camera_list(cameras)?, view)?;
    let modes = filters
        .iter()
        .map(|f| ctx.filter(Some(f), FilterMode::mip()))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let reference = match reference {
        Some(p) => Some(
            load_ply(p)
                .with_context(|| format!("loading {}", p.display()))?
                .gaussians,
        ),
        None if s.synthetic => Some(s.gaussians.clone()),
        None => None,
    };
    let report: ZoomReport = zoom_bench(
        &s.gaussians,
        &base,
        &modes,
        multipliers,
        reference.as_deref(),
        &ctx.render,
    )
    .map_err(|e| match e {
        workbench::WorkbenchError::InvalidArgument(m) => anyhow::Error::new(UsageError(m)),
        other => other.into(),
    })?;

    std::fs::create_dir_all(out_dir)?;
    atomic_write(&out_dir.join("zoom.csv"), report.to_csv().as_bytes())?;
    atomic_write(&out_dir.join("zoom.json"), &serde_json::to_vec_pretty(&report)?)?;
    let canvas = workbench::plot::zoom_curve(&report, &s.gaussians, &base, &modes, 640, 480);
    write_rgb8_png(
        &out_dir.join("zoom_curve.png"),
        canvas.width,
        canvas.height,
        &canvas.rgb,
    )?;

    for c in &report.checks {
        eprintln!(
            "{} {} ({}): {}",
            if c.passed { "ok  " } else { "FAIL" },
            c.mode,
            c.expectation,
            c.detail
        );
    }
    if !report.all_checks_passed() {
        return Err(CheckFailed("zoom trend check failed".into()).into());
    }
    Ok(())
}

fn cmd_entropy_map(
    ctx: &Ctx,
    scene: &SceneArgs,
    cameras: &CameraArgs,
    view: usize,
    filter: Option<&str>,
    colorbar: u32,
    out: &Path,
) -> anyhow::Result<()> {
    let mut s = load_scene(ctx, scene)?;
    attach_sampling_rates(&mut s.gaussians, cameras, s.synthetic)?;
    let cam = pick_view(&load_camera_list(cameras)?, view)?;
    let map = render_entropy_map(&s.gaussians, &cam, ctx.filter(filter, FilterMode::mip())?, &ctx.render)?;
    let (w, h, rgb) = entropy_map_image(&map, colorbar);
    write_rgb8_png(out, w, h, &rgb).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}
