//! `ocm3d` command line: voxelize, heatmap-dump, rescore, evaluate,
//! split-gen and validate subcommands over KITTI-format inputs.
//!
//! Exit codes: 0 success, 1 validation/format errors, 2 usage errors.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use ocm3d::confidence::{rescore, RescoreConfig};
use ocm3d::container::{write_heatmap, write_voxel_grid};
use ocm3d::error::{Error, Result};
use ocm3d::eval::{evaluate, ApMode, Difficulty, EvalConfig, Task};
use ocm3d::geometry::{frustum_rotate, rotate_y, Point3};
use ocm3d::heatmap::heatmap_target;
use ocm3d::kitti_io::{
    generate_depth_split, load_depth_map, parse_calibration, parse_frame_list,
    parse_frame_scene_map, parse_objects, write_objects, ObjectRecord, SplitSpec,
};
use ocm3d::voxelizer::{
    extract_roi_points, object_aware_grid, point_aware_grid, remove_outliers, voxelize, GridSpec,
    RgbImageSource, DEFAULT_GRID_SHAPE, DEFAULT_OUTLIER_MARGIN,
};

#[derive(Parser)]
#[command(name = "ocm3d", version, about = "Object-centric monocular 3D detection tooling")]
struct Cli {
    /// key=value configuration file; explicit flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build adaptive voxel grids for every object in a label file
    Voxelize(VoxelizeArgs),
    /// Dump 3D center heatmap targets for every object in a label file
    HeatmapDump(HeatmapArgs),
    /// Rescore KITTI detection files with the decomposed 3D confidence
    Rescore(RescoreArgs),
    /// Run the KITTI evaluation protocol over ground truth and detections
    Evaluate(EvaluateArgs),
    /// Generate the leakage-free depth dataset split
    SplitGen(SplitGenArgs),
    /// Check a generated split for depth-train/detection-val leakage
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Object,
    Point,
}

#[derive(Args)]
struct ObjectPipelineArgs {
    /// 16-bit depth raster (depth = stored / 256 m, 0 invalid)
    #[arg(long)]
    depth: PathBuf,
    /// RGB image aligned with the depth raster
    #[arg(long)]
    image: PathBuf,
    /// calibration file containing a P2 line
    #[arg(long)]
    calib: PathBuf,
    /// KITTI label or detection file supplying the 2D boxes
    #[arg(long)]
    boxes: PathBuf,
    /// boxes file carries detection scores (16 fields)
    #[arg(long)]
    scores: bool,
    /// output directory
    #[arg(long)]
    out: PathBuf,
    /// grid mode
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// grid shape as nx,ny,nz
    #[arg(long)]
    shape: Option<String>,
    /// depth-outlier margin in meters
    #[arg(long)]
    margin: Option<f64>,
    /// skip the frustum rotation normalization
    #[arg(long)]
    no_frustum: bool,
}

#[derive(Args)]
struct VoxelizeArgs {
    #[command(flatten)]
    common: ObjectPipelineArgs,
}

#[derive(Args)]
struct HeatmapArgs {
    #[command(flatten)]
    common: ObjectPipelineArgs,
    /// Gaussian radius in voxels
    #[arg(long)]
    radius: Option<f64>,
}

#[derive(Args)]
struct RescoreArgs {
    /// directory of per-frame detection files
    dets_dir: PathBuf,
    /// directory of per-frame calibration files (same file names)
    calib_dir: PathBuf,
    /// output directory
    out_dir: PathBuf,
    /// depth scale in meters
    #[arg(long)]
    lambda: Option<f64>,
    /// clip the projected hull to the image (default)
    #[arg(long, overrides_with = "no_clip")]
    clip: bool,
    #[arg(long = "no-clip")]
    no_clip: bool,
    #[arg(long, default_value_t = 1242.0)]
    image_width: f64,
    #[arg(long, default_value_t = 375.0)]
    image_height: f64,
    /// worker threads (output is identical for any value)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    gt_dir: PathBuf,
    det_dir: PathBuf,
    #[arg(long, default_value = "Car")]
    class: String,
    /// comma-separated metric list: r11,r40
    #[arg(long, default_value = "r11,r40")]
    metrics: String,
    /// comma-separated IoU thresholds
    #[arg(long, default_value = "0.5,0.7")]
    iou: String,
    /// write PR curves as delimited text into this directory
    #[arg(long)]
    pr_out: Option<PathBuf>,
}

#[derive(Args)]
struct SplitGenArgs {
    /// two-column "frame scene" mapping file
    #[arg(long)]
    mapping: PathBuf,
    /// detection validation frames, one per line
    #[arg(long)]
    val_frames: PathBuf,
    /// output file for depth training scenes
    #[arg(long)]
    out_train: PathBuf,
    /// output file for depth validation scenes
    #[arg(long)]
    out_val: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    mapping: PathBuf,
    #[arg(long)]
    val_frames: PathBuf,
    #[arg(long)]
    train_scenes: PathBuf,
    #[arg(long)]
    val_scenes: PathBuf,
}

/// key=value file; later lines win, '#' starts a comment.
#[derive(Default)]
struct FileConfig(BTreeMap<String, String>);

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = fs::read_to_string(path)?;
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: "expected key=value".into(),
                });
            };
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(FileConfig(map))
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.0
            .get(key)
            .map(|v| {
                v.parse().map_err(|_| Error::Format(format!("config key {key}: bad number {v:?}")))
            })
            .transpose()
    }

    fn str(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|s| s.as_str())
    }
}

fn require_exists(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::Validation(format!(
            "{what} path {} does not exist",
            path.display()
        )));
    }
    Ok(())
}

fn parse_shape(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Format(format!("grid shape must be nx,ny,nz, got {s:?}")));
    }
    let mut dims = [0usize; 3];
    for (d, p) in dims.iter_mut().zip(parts.iter()) {
        *d = p
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad grid dimension {p:?}")))?;
        if *d == 0 {
            return Err(Error::Format("grid dimensions must be positive".into()));
        }
    }
    Ok((dims[0], dims[1], dims[2]))
}

fn sorted_txt_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();
    Ok(files)
}

fn load_object_dir(dir: &Path, expect_score: bool) -> Result<BTreeMap<String, Vec<ObjectRecord>>> {
    let mut map = BTreeMap::new();
    for path in sorted_txt_files(dir)? {
        let stem = path.file_stem().unwrap().to_string_lossy().to_string();
        let text = fs::read_to_string(&path)?;
        let records = parse_objects(&text, expect_score).map_err(|e| {
            Error::Format(format!("{}: {e}", path.display()))
        })?;
        map.insert(stem, records);
    }
    Ok(map)
}

struct ObjectPipeline {
    calib: ocm3d::kitti_io::CameraCalib,
    objects: Vec<ObjectRecord>,
    shape: (usize, usize, usize),
    mode: ModeArg,
    margin: f64,
    frustum: bool,
    depth: ocm3d::kitti_io::DepthMap,
    rgb: image::RgbImage,
}

impl ObjectPipeline {
    fn prepare(args: &ObjectPipelineArgs, cfg: &FileConfig) -> Result<ObjectPipeline> {
        for (p, what) in [
            (&args.depth, "depth"),
            (&args.image, "image"),
            (&args.calib, "calib"),
            (&args.boxes, "boxes"),
        ] {
            require_exists(p, what)?;
        }
        let shape = match args.shape.as_deref().or(cfg.str("grid_shape")) {
            Some(s) => parse_shape(s)?,
            None => DEFAULT_GRID_SHAPE,
        };
        let mode = args.mode.unwrap_or(match cfg.str("grid_mode") {
            Some("object") => ModeArg::Object,
            _ => ModeArg::Point,
        });
        let margin = match args.margin {
            Some(m) => m,
            None => cfg.f64("outlier_margin")?.unwrap_or(DEFAULT_OUTLIER_MARGIN),
        };
        let calib = parse_calibration(&fs::read_to_string(&args.calib)?)?;
        let objects = parse_objects(&fs::read_to_string(&args.boxes)?, args.scores)?;
        let depth = load_depth_map(&fs::read(&args.depth)?)?;
        let rgb = image::open(&args.image)?.to_rgb8();
        fs::create_dir_all(&args.out)?;
        Ok(ObjectPipeline {
            calib,
            objects,
            shape,
            mode,
            margin,
            frustum: !args.no_frustum,
            depth,
            rgb,
        })
    }

    /// Per-object cloud, grid and (possibly rotated) 3D center.
    fn object_grid(&self, obj: &ObjectRecord) -> Result<(GridSpec, ocm3d::voxelizer::RoiPointCloud, Point3, f64)> {
        let cloud = extract_roi_points(&self.depth, &RgbImageSource(&self.rgb), &obj.box2d, &self.calib)?;
        let (cloud, degenerate) = remove_outliers(&cloud, self.margin);
        if degenerate {
            eprintln!("warning: degenerate cloud for {} box, kept minimum-depth point", obj.class_name);
        }
        let (cloud, theta) = if self.frustum {
            let (points, theta) = frustum_rotate(&cloud.points, &obj.box2d, &self.calib)?;
            (cloud.with_points(points), theta)
        } else {
            (cloud, 0.0)
        };
        let spec = match self.mode {
            ModeArg::Object => object_aware_grid(&cloud, self.shape),
            ModeArg::Point => point_aware_grid(&cloud, self.shape),
        };
        // object 3D center (half height above the bottom-face center),
        // expressed in the same rotated frame as the points
        let center = Point3::new(obj.location.x, obj.location.y - obj.dims.h / 2.0, obj.location.z);
        let center = rotate_y(&[center], -theta)[0];
        Ok((spec, cloud, center, theta))
    }
}

fn cmd_voxelize(args: &VoxelizeArgs, cfg: &FileConfig) -> Result<()> {
    let pipe = ObjectPipeline::prepare(&args.common, cfg)?;
    for (i, obj) in pipe.objects.iter().enumerate() {
        if obj.is_dontcare() {
            continue;
        }
        let (spec, cloud, _, _) = pipe.object_grid(obj)?;
        let grid = voxelize(&cloud, &spec);
        let path = args.common.out.join(format!("object_{i:03}.ocmv"));
        let mut file = fs::File::create(&path)?;
        write_voxel_grid(&mut file, &grid)?;
        println!(
            "object {i:03} {}: {} points, occupancy {:.1}%, out-of-range {}",
            obj.class_name,
            cloud.len(),
            grid.occupancy() * 100.0,
            grid.out_of_range
        );
        let fmt_axis = |name: &str, b: &[f64]| {
            let list: Vec<String> = b.iter().map(|v| format!("{v:.3}")).collect();
            println!("  {name}: [{}]", list.join(", "));
        };
        fmt_axis("x", &grid.spec.boundaries_x);
        fmt_axis("y", &grid.spec.boundaries_y);
        fmt_axis("z", &grid.spec.boundaries_z);
    }
    Ok(())
}

fn cmd_heatmap(args: &HeatmapArgs, cfg: &FileConfig) -> Result<()> {
    let pipe = ObjectPipeline::prepare(&args.common, cfg)?;
    let radius = match args.radius {
        Some(r) => r,
        None => cfg.f64("heatmap_radius")?.unwrap_or(ocm3d::heatmap::DEFAULT_RADIUS),
    };
    for (i, obj) in pipe.objects.iter().enumerate() {
        if obj.is_dontcare() {
            continue;
        }
        let (spec, _, center, _) = pipe.object_grid(obj)?;
        let hm = heatmap_target(spec, center, radius)?;
        let path = args.common.out.join(format!("object_{i:03}.ocmh"));
        let mut file = fs::File::create(&path)?;
        write_heatmap(&mut file, &hm)?;
        let peak = hm.scores.iter().cloned().fold(0.0, f64::max);
        println!("object {i:03} {}: peak {peak:.3}", obj.class_name);
    }
    Ok(())
}

fn cmd_rescore(args: &RescoreArgs, cfg: &FileConfig) -> Result<()> {
    require_exists(&args.dets_dir, "detections")?;
    require_exists(&args.calib_dir, "calibration")?;
    let lambda = match args.lambda {
        Some(l) => l,
        None => cfg.f64("lambda")?.unwrap_or(ocm3d::confidence::DEFAULT_LAMBDA),
    };
    if lambda <= 0.0 {
        return Err(Error::Validation(format!("lambda must be positive, got {lambda}")));
    }
    let rescore_cfg = RescoreConfig {
        lambda,
        clip_projection: !args.no_clip,
        image_size: (args.image_width, args.image_height),
    };
    fs::create_dir_all(&args.out_dir)?;
    let files = sorted_txt_files(&args.dets_dir)?;
    let jobs = match args.jobs {
        Some(j) => j,
        None => cfg.f64("jobs")?.map(|j| j as usize).unwrap_or(0),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Format(e.to_string()))?;
    let outputs: Vec<Result<(PathBuf, String)>> = pool.install(|| {
        files
            .par_iter()
            .map(|path| {
                let name = path.file_name().unwrap();
                let calib_path = args.calib_dir.join(name);
                require_exists(&calib_path, "calibration")?;
                let calib = parse_calibration(&fs::read_to_string(&calib_path)?)?;
                let dets = parse_objects(&fs::read_to_string(path)?, true)
                    .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
                let rescored = rescore(&dets, &calib, &rescore_cfg)?;
                Ok((args.out_dir.join(name), write_objects(&rescored)?))
            })
            .collect()
    });
    let mut count = 0usize;
    for out in outputs {
        let (path, text) = out?;
        fs::write(path, text)?;
        count += 1;
    }
    eprintln!("rescored {count} frames (lambda {lambda})");
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs, _cfg: &FileConfig) -> Result<()> {
    require_exists(&args.gt_dir, "ground truth")?;
    require_exists(&args.det_dir, "detections")?;
    let gts = load_object_dir(&args.gt_dir, false)?;
    let dets = load_object_dir(&args.det_dir, true)?;
    let thresholds: Vec<f64> = args
        .iou
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("bad IoU threshold {t:?}")))
        })
        .collect::<Result<_>>()?;
    let modes: Vec<ApMode> = args
        .metrics
        .split(',')
        .map(|m| match m.trim().to_ascii_lowercase().as_str() {
            "r11" => Ok(ApMode::R11),
            "r40" => Ok(ApMode::R40),
            other => Err(Error::Format(format!("unknown metric {other:?}"))),
        })
        .collect::<Result<_>>()?;
    let config = EvalConfig {
        class_names: vec![args.class.clone()],
        iou_thresholds: thresholds.clone(),
        ..Default::default()
    };
    let result = evaluate(&dets, &gts, &config)?;

    println!("class {}", args.class);
    for mode in &modes {
        let mode_name = match mode {
            ApMode::R11 => "R11",
            ApMode::R40 => "R40",
        };
        for &thr in &thresholds {
            println!("AP|{mode_name} (IoU={thr})   easy    moderate  hard");
            for task in Task::ALL {
                let mut row = format!("  {:<6}", task.name());
                for d in Difficulty::ALL {
                    let e = result.get(&args.class, d, task, thr).unwrap();
                    let v = match mode {
                        ApMode::R11 => e.ap_r11,
                        ApMode::R40 => e.ap_r40,
                    };
                    row.push_str(&format!("  {:>8.4}", v * 100.0));
                }
                println!("{row}");
            }
        }
    }
    if let Some(dir) = &args.pr_out {
        fs::create_dir_all(dir)?;
        for e in &result.entries {
            let name = format!(
                "{}_{}_{}_iou{:.2}.txt",
                e.class_name,
                e.task.name(),
                e.difficulty.name(),
                e.iou_threshold
            );
            let mut text = String::from("recall precision weighted\n");
            for (r, p, w) in &e.curve.points {
                text.push_str(&format!("{r:.6} {p:.6} {w:.6}\n"));
            }
            fs::write(dir.join(name), text)?;
        }
    }
    Ok(())
}

fn read_scene_list(path: &Path) -> Result<std::collections::BTreeSet<String>> {
    Ok(fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn cmd_split_gen(args: &SplitGenArgs) -> Result<()> {
    require_exists(&args.mapping, "mapping")?;
    require_exists(&args.val_frames, "validation frames")?;
    let mapping = parse_frame_scene_map(&fs::read_to_string(&args.mapping)?)?;
    let val_frames = parse_frame_list(&fs::read_to_string(&args.val_frames)?)?;
    let split = generate_depth_split(&mapping, &val_frames)?;
    if split.depth_train_scenes.is_empty() {
        eprintln!("warning: validation frames touch every scene, depth training set is empty");
    }
    let to_text = |scenes: &std::collections::BTreeSet<String>| {
        scenes.iter().map(|s| format!("{s}\n")).collect::<String>()
    };
    fs::write(&args.out_train, to_text(&split.depth_train_scenes))?;
    fs::write(&args.out_val, to_text(&split.depth_val_scenes))?;
    eprintln!(
        "split: {} training scenes, {} validation scenes",
        split.depth_train_scenes.len(),
        split.depth_val_scenes.len()
    );
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<()> {
    for (p, what) in [
        (&args.mapping, "mapping"),
        (&args.val_frames, "validation frames"),
        (&args.train_scenes, "train scenes"),
        (&args.val_scenes, "val scenes"),
    ] {
        require_exists(p, what)?;
    }
    let mapping = parse_frame_scene_map(&fs::read_to_string(&args.mapping)?)?;
    let val_frames = parse_frame_list(&fs::read_to_string(&args.val_frames)?)?;
    let split = SplitSpec {
        depth_train_scenes: read_scene_list(&args.train_scenes)?,
        depth_val_scenes: read_scene_list(&args.val_scenes)?,
        detection_val_frames: val_frames,
    };
    split.check_leakage(&mapping)?;
    println!("ok: no depth-train / detection-val leakage");
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let cfg = FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Voxelize(a) => cmd_voxelize(a, &cfg),
        Command::HeatmapDump(a) => cmd_heatmap(a, &cfg),
        Command::Rescore(a) => cmd_rescore(a, &cfg),
        Command::Evaluate(a) => cmd_evaluate(a, &cfg),
        Command::SplitGen(a) => cmd_split_gen(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
