use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::{Matrix3, Vector2, Vector3};
use serde_json::{json, Value};

use rhwarp::augment::{apply_aug_camera_pose, apply_aug_p2, sample_aug, warp_image};
use rhwarp::camera::{PoseLabel, RigidMotion};
use rhwarp::distortion::{error_field, Approximation, GridDomain, GridSpec};
use rhwarp::io::{self, fmt_f64};
use rhwarp::pywarp::{camera_pix2cal, warp_from_py, warp_to_py};
use rhwarp::rigidity::{grid_scan, sset_solve};
use rhwarp::verify::run_checks;
use rhwarp::{Affine2, Error, PyVec, Rotation3};

/// Rotational homographies and pitch-yaw image tools.
#[derive(Parser)]
#[command(name = "rhwarp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Resample an image to or from the pitch-yaw grid.
    Warp(WarpArgs),
    /// Apply one seeded rotational-homography augmentation.
    Augment(AugmentArgs),
    /// Write the distortion field of a PY or image translation as CSV.
    Distort(DistortArgs),
    /// Solve for the points where an image translation matches a rigid motion.
    Sset(SsetArgs),
    /// Run the built-in numerical checks.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    ToPy,
    FromPy,
}

#[derive(clap::Args)]
struct WarpArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    camera: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Output size as HxW.
    #[arg(long)]
    size: Option<String>,
    #[arg(long, value_enum, default_value = "to-py")]
    direction: Direction,
    /// Write the output validity mask here.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Validity mask of the input (nonzero = valid).
    #[arg(long)]
    in_mask: Option<PathBuf>,
    /// Pixel-to-PY map of a PY input (default: the input's sidecar).
    #[arg(long)]
    pix2cal: Option<PathBuf>,
}

#[derive(clap::Args)]
struct AugmentArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    ann: PathBuf,
    #[arg(long)]
    camera: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    index: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Py,
    Translation,
}

#[derive(Clone, Copy, ValueEnum)]
enum Domain {
    Py,
    Plane,
}

#[derive(clap::Args)]
struct DistortArgs {
    /// Pitch-yaw as a0,a1.
    #[arg(long, allow_hyphen_values = true)]
    alpha: String,
    #[arg(long, value_enum)]
    which: Which,
    /// Grid nodes as N0xN1.
    #[arg(long, default_value = "201x201")]
    grid: String,
    /// Grid half-width; defaults to pi/2 (PY) or tan(pi/3) (plane).
    #[arg(long)]
    half_width: Option<f64>,
    #[arg(long, value_enum, default_value = "py")]
    domain: Domain,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct SsetArgs {
    /// Image translation as t0,t1 (calibrated units).
    #[arg(long, allow_hyphen_values = true)]
    tau: String,
    /// Rotation as nine row-major numbers; identity if omitted.
    #[arg(long, allow_hyphen_values = true)]
    rotation: Option<String>,
    /// Translation of the rigid motion as v0,v1,v2.
    #[arg(long, allow_hyphen_values = true)]
    v: String,
    #[arg(long)]
    out: PathBuf,
    /// Brute-force the solution on an N^3 grid and fail if a solution lies
    /// off the reported sets.
    #[arg(long)]
    check: bool,
    #[arg(long, default_value_t = 101)]
    check_n: usize,
    #[arg(long, default_value_t = 2.0)]
    check_extent: f64,
}

#[derive(clap::Args)]
struct VerifyArgs {
    /// Only run checks whose name contains this string.
    #[arg(long)]
    filter: Option<String>,
    /// Force the named check to fail.
    #[arg(long)]
    perturb: Option<String>,
}

struct CommandResult {
    exit_code: u8,
    artifacts: Vec<PathBuf>,
    metadata: Value,
}

impl CommandResult {
    fn ok(artifacts: Vec<PathBuf>, metadata: Value) -> Self {
        CommandResult { exit_code: 0, artifacts, metadata }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Json(_) | Error::Image(_) | Error::Format(_) | Error::InvalidCamera(_) | Error::InvalidRotation(_) => 2,
        _ => 3,
    }
}

fn parse_list(s: &str, n: usize, what: &str) -> rhwarp::Result<Vec<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::Format(format!("{what}: cannot parse {s:?}")))?;
    if v.len() != n || !v.iter().all(|x| x.is_finite()) {
        return Err(Error::Format(format!("{what}: expected {n} finite numbers, got {s:?}")));
    }
    Ok(v)
}

fn parse_size(s: &str) -> rhwarp::Result<(usize, usize)> {
    GridSpec::parse_dims(s)
}

fn cmd_warp(a: &WarpArgs) -> rhwarp::Result<CommandResult> {
    let cam = io::read_camera(&a.camera)?;
    let size = a.size.as_deref().map(parse_size).transpose()?.unwrap_or((cam.height, cam.width));
    let mut artifacts = vec![a.out.clone()];
    let pix2cal = match a.direction {
        Direction::ToPy => camera_pix2cal(&cam),
        Direction::FromPy => io::read_pix2cal(&a.pix2cal.clone().unwrap_or_else(|| io::sidecar_path(&a.input)))?,
    };
    let mut img = io::read_png(&a.input, pix2cal)?;
    if let Some(m) = &a.in_mask {
        let (mask, w, h) = io::read_mask_png(m)?;
        if (w, h) != (img.width(), img.height()) {
            return Err(Error::Precondition("input mask and image sizes differ".into()));
        }
        img.valid_mut().copy_from_slice(&mask);
    }
    let out = match a.direction {
        Direction::ToPy => warp_to_py(&img, &cam, size)?,
        Direction::FromPy => warp_from_py(&img, &cam, size)?,
    };
    io::write_png(&a.out, &out)?;
    let side = io::sidecar_path(&a.out);
    io::write_pix2cal(&side, &out.pix2cal)?;
    artifacts.push(side);
    if let Some(m) = &a.mask {
        io::write_mask_png(m, out.valid(), out.width(), out.height())?;
        artifacts.push(m.clone());
    }
    Ok(CommandResult::ok(
        artifacts,
        json!({
            "command": "warp",
            "height": out.height(),
            "width": out.width(),
            "valid_pixels": out.count_valid(),
        }),
    ))
}

fn mat9(m: &Matrix3<f64>) -> [f64; 9] {
    let mut out = [0.0; 9];
    for (i, v) in out.iter_mut().enumerate() {
        *v = m[(i / 3, i % 3)];
    }
    out
}

fn cmd_augment(a: &AugmentArgs) -> rhwarp::Result<CommandResult> {
    let cam = io::read_camera(&a.camera)?;
    let cfg = io::read_aug_config(&a.config)?;
    let label = io::read_pose(&a.ann)?;
    let img = io::read_png(&a.input, Affine2::identity())?;
    let s = sample_aug(&cfg, a.index)?;
    std::fs::create_dir_all(&a.out_dir)?;

    let (out, new_label) = match label {
        PoseLabel::Object { r, t } => {
            let (out, (r2, t2)) = apply_aug_p2(&img, (&r, &t), &cam, &s)?;
            (out, PoseLabel::Object { r: r2, t: t2 })
        }
        PoseLabel::Camera(pose) => {
            if img.width() != cam.width || img.height() != cam.height {
                return Err(Error::Precondition("image and camera sizes differ".into()));
            }
            (warp_image(&img, &s.homography(&cam)), PoseLabel::Camera(apply_aug_camera_pose(&pose, &s)))
        }
    };

    let i = a.index;
    let img_path = a.out_dir.join(format!("aug_{i}.png"));
    let mask_path = a.out_dir.join(format!("aug_{i}_mask.png"));
    let pose_path = a.out_dir.join(format!("aug_{i}_pose.json"));
    let prov_path = a.out_dir.join(format!("aug_{i}_provenance.json"));
    io::write_png(&img_path, &out)?;
    io::write_mask_png(&mask_path, out.valid(), out.width(), out.height())?;
    io::write_pose(&pose_path, &new_label)?;
    let h = s.homography(&cam);
    let provenance = json!({
        "seed": cfg.seed,
        "index": i,
        "f": s.f,
        "roll_rad": s.roll,
        "tilt_alpha": [s.tilt_alpha.a0, s.tilt_alpha.a1],
        "H": mat9(h.matrix()),
        "K_aug": mat9(s.scaled_camera(&cam)?.k()),
    });
    io::write_json(&prov_path, &provenance)?;
    Ok(CommandResult::ok(vec![img_path, mask_path, pose_path, prov_path], provenance))
}

fn cmd_distort(a: &DistortArgs) -> rhwarp::Result<CommandResult> {
    let al = parse_list(&a.alpha, 2, "--alpha")?;
    let alpha = PyVec::new(al[0], al[1]);
    let (n0, n1) = GridSpec::parse_dims(&a.grid)?;
    let (domain, default_hw) = match a.domain {
        Domain::Py => (GridDomain::Py, std::f64::consts::FRAC_PI_2),
        Domain::Plane => (GridDomain::Plane, (std::f64::consts::PI / 3.0).tan()),
    };
    let grid = GridSpec { n0, n1, half_width: a.half_width.unwrap_or(default_hw), domain };
    let which = match a.which {
        Which::Py => Approximation::Py,
        Which::Translation => Approximation::Translation,
    };
    let field = error_field(alpha, which, grid)?;
    let mut csv = String::from("u0,u1,error,valid\n");
    for j in 0..n1 {
        for i in 0..n0 {
            let g = grid.node(i, j);
            let k = j * n0 + i;
            csv.push_str(&format!(
                "{},{},{},{}\n",
                fmt_f64(g.x),
                fmt_f64(g.y),
                fmt_f64(field.values[k]),
                u8::from(field.valid[k])
            ));
        }
    }
    std::fs::write(&a.out, csv)?;

    let other = match which {
        Approximation::Py => Approximation::Translation,
        Approximation::Translation => Approximation::Py,
    };
    let mean_other = error_field(alpha, other, grid).ok().and_then(|f| f.mean());
    let (mean_py, mean_tr) = match which {
        Approximation::Py => (field.mean(), mean_other),
        Approximation::Translation => (mean_other, field.mean()),
    };
    eprintln!(
        "mean distortion: py {} translation {}",
        mean_py.map_or("n/a".into(), fmt_f64),
        mean_tr.map_or("n/a".into(), fmt_f64)
    );
    Ok(CommandResult::ok(
        vec![a.out.clone()],
        json!({
            "command": "distort",
            "alpha": [alpha.a0, alpha.a1],
            "valid_nodes": field.valid.iter().filter(|v| **v).count(),
            "mean_py": mean_py,
            "mean_translation": mean_tr,
        }),
    ))
}

fn cmd_sset(a: &SsetArgs) -> rhwarp::Result<CommandResult> {
    let tau = parse_list(&a.tau, 2, "--tau")?;
    let v = parse_list(&a.v, 3, "--v")?;
    let r = match &a.rotation {
        Some(s) => Rotation3::from_matrix(Matrix3::from_row_slice(&parse_list(s, 9, "--rotation")?))?,
        None => Rotation3::identity(),
    };
    let rho = RigidMotion { r, v: Vector3::new(v[0], v[1], v[2]) };
    let res = sset_solve(Vector2::new(tau[0], tau[1]), &rho)?;
    let cases: Vec<Value> = res
        .eigenvalue_cases
        .iter()
        .map(|c| {
            json!({
                "lambda": c.lambda,
                "kind": c.kind,
                "basepoint": c.basepoint.map(|b| [b.x, b.y, b.z]),
                "directions": c.directions.iter().map(|d| [d.x, d.y, d.z]).collect::<Vec<_>>(),
            })
        })
        .collect();
    let curve: Vec<[f64; 4]> = res.curve_samples.iter().map(|(l, x)| [*l, x.x, x.y, x.z]).collect();
    let doc = json!({ "eigenvalues": res.eigenvalues, "cases": cases, "curve": curve });
    io::write_json(&a.out, &doc)?;

    let mut meta = json!({
        "command": "sset",
        "eigenvalues": res.eigenvalues,
        "curve_samples": curve.len(),
    });
    let mut exit_code = 0;
    if a.check {
        let scan = grid_scan(&res, a.check_n, a.check_extent, 1e-9);
        let passed = scan.max_distance <= 1e-4;
        meta["check"] = json!({
            "points_tested": scan.points_tested,
            "points_satisfying": scan.points_satisfying,
            "max_distance": scan.max_distance,
            "passed": passed,
        });
        if !passed {
            exit_code = 4;
        }
    }
    Ok(CommandResult { exit_code, artifacts: vec![a.out.clone()], metadata: meta })
}

fn cmd_verify(a: &VerifyArgs) -> rhwarp::Result<CommandResult> {
    let outcomes = run_checks(a.filter.as_deref(), a.perturb.as_deref());
    if outcomes.is_empty() {
        return Err(Error::Format(format!("no check matches filter {:?}", a.filter.as_deref().unwrap_or(""))));
    }
    for o in &outcomes {
        println!("{o}");
    }
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
    println!("{} passed, {} failed", outcomes.len() - failed.len(), failed.len());
    Ok(CommandResult {
        exit_code: if failed.is_empty() { 0 } else { 4 },
        artifacts: Vec::new(),
        metadata: json!({ "command": "verify", "checks": outcomes.len(), "failed": failed }),
    })
}

fn run(cli: &Cli) -> rhwarp::Result<CommandResult> {
    match &cli.command {
        Command::Warp(a) => cmd_warp(a),
        Command::Augment(a) => cmd_augment(a),
        Command::Distort(a) => cmd_distort(a),
        Command::Sset(a) => cmd_sset(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

fn report(res: &CommandResult) {
    for p in &res.artifacts {
        eprintln!("wrote {}", p.display());
    }
    match io::to_json_string(&res.metadata) {
        Ok(s) if !matches!(res.metadata, Value::Null) => print!("{s}"),
        _ => {}
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(res) => {
            report(&res);
            ExitCode::from(res.exit_code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
