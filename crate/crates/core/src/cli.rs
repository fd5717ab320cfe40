//! The `rigkit` command line. Every command prints `key: value` lines and
//! exits with 0 (ok), 1 (bad data) or 2 (bad usage or missing file).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::bvh::{bvh_to_model, model_to_bvh, parse_bvh, write_bvh, EulerOrder};
use crate::clipfile::{
    is_reference_json, parse_clip, parse_reference, read_clip, write_atomic, write_clip, ClipDocument,
};
use crate::error::{Error, Result};
use crate::kernels::{build_graph_relations, mask_dump, run_gradcheck, Kernel};
use crate::kinematics::{
    analytic_ik_reference, convention_bone_twists, forward_kinematics, rerig_axis_convention, AxisConvention,
};
use crate::metrics::{evaluate, mixed_pose_probability, MixSchedule};
use crate::remap::{remap_rig, scale_rig, AxisRemap};
use crate::rotation::geodesic_angle;
use crate::skeleton::{
    detect_static_joints, PoseClip, ReferenceFrame, RotationClip, Skeleton, DEFAULT_EPS_POS, DEFAULT_EPS_ROT_DEG,
};
use crate::synth::{gen_axis_convention, gen_branching_skeleton, gen_motion, gen_skeleton, GenConfig};

/// Environment variable that sets the worker thread count.
pub const THREADS_ENV: &str = "RIGKIT_THREADS";

const FK_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "rigkit", version, about = "Arbitrary-skeleton kinematics and motion tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a clip's skeleton and data.
    Validate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Forward kinematics: add positions and static flags to a clip.
    Fk {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_EPS_POS)]
        eps_pos: f64,
        #[arg(long, default_value_t = DEFAULT_EPS_ROT_DEG)]
        eps_rot: f64,
    },
    /// Recover local rotations from positions, anchored on a reference frame.
    Ik {
        #[arg(long)]
        input: PathBuf,
        /// Reference file, or a clip to take `--ref-frame` from.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Frame index into the reference clip (or the input clip).
        #[arg(long)]
        ref_frame: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compare a predicted clip against ground truth.
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Print the GL-GMHA mask of each layer.
    Masks {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Show that different local rotations produce identical positions.
    DemoAmbiguity {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        joints: Option<usize>,
        #[arg(long, default_value_t = 48)]
        frames: usize,
        /// Use the identity convention instead of a random one.
        #[arg(long)]
        identity: bool,
    },
    /// Finite-difference check of a kernel's backward pass.
    Gradcheck {
        #[arg(long)]
        kernel: String,
        #[arg(long, default_value_t = 50)]
        seeds: u64,
    },
    /// Mixed-pose probability per epoch.
    Schedule {
        #[arg(long, default_value_t = 30)]
        epochs: u32,
        #[arg(long, default_value_t = 0.1)]
        p_start: f64,
        #[arg(long, default_value_t = 1.0)]
        p_end: f64,
        #[arg(long, default_value_t = 30)]
        warmup: u32,
    },
    /// Convert between BVH and clip files (chosen by extension).
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "ZXY")]
        channel_order: String,
        #[arg(long)]
        axis_remap: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        unit_scale: f64,
        #[arg(long, default_value_t = 1.0 / 30.0)]
        frame_time: f64,
    },
    /// Write a synthetic skeleton and motion clip.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        joints: Option<usize>,
        #[arg(long, default_value_t = 48)]
        frames: usize,
        /// Every internal joint gets at least two non-collinear children.
        #[arg(long)]
        branching: bool,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandResult {
    pub exit_code: i32,
    pub report: String,
    pub outputs: Vec<PathBuf>,
}

impl CommandResult {
    fn ok(report: String, outputs: Vec<PathBuf>) -> Self {
        CommandResult {
            exit_code: 0,
            report,
            outputs,
        }
    }

    fn failed(exit_code: i32, report: String) -> Self {
        CommandResult {
            exit_code,
            report,
            outputs: Vec::new(),
        }
    }
}

/// Usage problems and missing inputs are 2; everything else is 1.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) => 2,
        Error::Io(io) | Error::File { source: io, .. } if io.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

/// Parses `args` (including the program name) and runs the command. Help and
/// version requests come back as exit code 0 with the text as the report.
pub fn run<I, T>(args: I) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            return CommandResult::failed(code, e.to_string());
        }
    };
    let pool = match thread_pool() {
        Ok(p) => p,
        Err(e) => return CommandResult::failed(exit_code(&e), format!("error: {e}\n")),
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(r) => r,
        Err(e) => CommandResult::failed(exit_code(&e), format!("error: {e}\n")),
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| usage(format!("cannot start worker threads: {e}")))
}

fn dispatch(command: Command) -> Result<CommandResult> {
    match command {
        Command::Validate { input } => cmd_validate(&input),
        Command::Fk {
            input,
            output,
            eps_pos,
            eps_rot,
        } => cmd_fk(&input, output.as_deref(), eps_pos, eps_rot),
        Command::Ik {
            input,
            reference,
            ref_frame,
            output,
        } => cmd_ik(&input, reference.as_deref(), ref_frame, output.as_deref()),
        Command::Metrics { pred, gt } => cmd_metrics(&pred, &gt),
        Command::Masks { input, layers, output } => cmd_masks(&input, layers, output.as_deref()),
        Command::DemoAmbiguity {
            seed,
            joints,
            frames,
            identity,
        } => cmd_demo_ambiguity(seed, joints, frames, identity),
        Command::Gradcheck { kernel, seeds } => cmd_gradcheck(&kernel, seeds),
        Command::Schedule {
            epochs,
            p_start,
            p_end,
            warmup,
        } => cmd_schedule(epochs, p_start, p_end, warmup),
        Command::Convert {
            input,
            output,
            channel_order,
            axis_remap,
            unit_scale,
            frame_time,
        } => cmd_convert(
            &input,
            &output,
            &channel_order,
            axis_remap.as_deref(),
            unit_scale,
            frame_time,
        ),
        Command::Generate {
            seed,
            joints,
            frames,
            branching,
            output,
        } => cmd_generate(seed, joints, frames, branching, &output),
    }
}

fn max_position_delta(a: &PoseClip, b: &PoseClip, mask: &[bool]) -> f64 {
    let mut worst: f64 = 0.0;
    for t in 0..a.frames() {
        for (j, m) in mask.iter().enumerate() {
            if *m {
                worst = worst.max((a.at(t, j) - b.at(t, j)).norm());
            }
        }
    }
    worst
}

fn mean_position_error(a: &PoseClip, b: &PoseClip, mask: &[bool]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for t in 0..a.frames() {
        for (j, m) in mask.iter().enumerate() {
            if *m {
                sum += (a.at(t, j) - b.at(t, j)).norm();
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn cmd_validate(input: &Path) -> Result<CommandResult> {
    let doc = read_clip(input)?;
    let mut report = String::new();
    let _ = writeln!(report, "joints: {}", doc.skeleton.joint_count());
    let _ = writeln!(report, "frames: {}", doc.frames());
    let mut problems = Vec::new();
    let skel_report = doc.skeleton.validate();
    for v in &skel_report.violations {
        problems.push(v.to_string());
    }
    if skel_report.is_ok() {
        if let Some(rot) = &doc.rotations {
            match rot.check_decodable() {
                Err(e) => problems.push(e.to_string()),
                Ok(()) => {
                    if let Some(pos) = &doc.positions {
                        let (fk, _) = forward_kinematics(&doc.skeleton, rot)?;
                        let delta = max_position_delta(&fk, pos, rot.joint_mask());
                        let _ = writeln!(report, "fk_position_delta: {delta:.3e}");
                        if delta > FK_TOLERANCE {
                            problems.push(format!("stored positions differ from FK by {delta:.3e}"));
                        }
                    }
                }
            }
        }
    }
    let _ = writeln!(report, "violations: {}", problems.len());
    for p in &problems {
        let _ = writeln!(report, "violation: {p}");
    }
    let ok = problems.is_empty();
    let _ = writeln!(report, "status: {}", if ok { "ok" } else { "invalid" });
    Ok(CommandResult {
        exit_code: if ok { 0 } else { 1 },
        report,
        outputs: Vec::new(),
    })
}

fn require_rotations<'a>(doc: &'a ClipDocument, path: &Path) -> Result<&'a RotationClip> {
    doc.rotations
        .as_ref()
        .ok_or_else(|| Error::ClipFormat(format!("{} has no rot6d data", path.display())))
}

fn cmd_fk(input: &Path, output: Option<&Path>, eps_pos: f64, eps_rot: f64) -> Result<CommandResult> {
    if !(eps_pos >= 0.0 && eps_rot >= 0.0) {
        return Err(usage("--eps-pos and --eps-rot must be non-negative"));
    }
    let doc = read_clip(input)?;
    let rot = require_rotations(&doc, input)?;
    let (pose, _) = forward_kinematics(&doc.skeleton, rot)?;
    let flags = detect_static_joints(&doc.skeleton, &pose, rot, eps_pos, eps_rot)?;
    let mut report = String::new();
    let _ = writeln!(report, "frames: {}", rot.frames());
    let _ = writeln!(report, "joints: {}", rot.joints());
    if let Some(stored) = &doc.positions {
        let delta = max_position_delta(&pose, stored, rot.joint_mask());
        let _ = writeln!(report, "stored_position_delta: {delta:.3e}");
    }
    let count = |v: &[bool]| v.iter().filter(|b| **b).count();
    let _ = writeln!(report, "position_static: {}", count(&flags.position_static));
    let _ = writeln!(report, "rotation_static: {}", count(&flags.rotation_static));
    let mut outputs = Vec::new();
    if let Some(out) = output {
        let result = ClipDocument {
            skeleton: doc.skeleton.clone().with_static_flags(&flags),
            rotations: Some(rot.clone()),
            positions: Some(pose),
        };
        write_clip(out, &result)?;
        let _ = writeln!(report, "output: {}", out.display());
        outputs.push(out.to_path_buf());
    }
    Ok(CommandResult::ok(report, outputs))
}

fn load_reference(
    doc: &ClipDocument,
    input: &Path,
    reference: Option<&Path>,
    ref_frame: Option<usize>,
) -> Result<(ReferenceFrame, String)> {
    match (reference, ref_frame) {
        (None, None) => Err(usage("ik needs a reference: pass --reference <file> and/or --ref-frame <index>")),
        (None, Some(k)) => {
            let rot = require_rotations(doc, input)?;
            let r = ReferenceFrame::from_motion(&doc.skeleton, rot, k)?;
            Ok((r, format!("input frame {k}")))
        }
        (Some(path), k) => {
            let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
            if is_reference_json(&text) {
                if k.is_some() {
                    return Err(usage("--ref-frame cannot be used with a standalone reference file"));
                }
                Ok((parse_reference(&text)?, "file".to_string()))
            } else {
                let rdoc = parse_clip(&text)?;
                let rot = require_rotations(&rdoc, path)?;
                if rdoc.skeleton.parents != doc.skeleton.parents {
                    return Err(Error::Shape("reference clip has a different hierarchy".into()));
                }
                let k = k.unwrap_or(0);
                let r = ReferenceFrame::from_motion(&doc.skeleton, rot, k)?;
                Ok((r, format!("clip frame {k}")))
            }
        }
    }
}

fn cmd_ik(
    input: &Path,
    reference: Option<&Path>,
    ref_frame: Option<usize>,
    output: Option<&Path>,
) -> Result<CommandResult> {
    if reference.is_none() && ref_frame.is_none() {
        return Err(usage("ik needs a reference: pass --reference <file> and/or --ref-frame <index>"));
    }
    let doc = read_clip(input)?;
    let (reference, source) = load_reference(&doc, input, reference, ref_frame)?;
    let pose = match (&doc.positions, &doc.rotations) {
        (Some(p), _) => p.clone(),
        (None, Some(r)) => forward_kinematics(&doc.skeleton, r)?.0,
        (None, None) => unreachable!("clip files carry rotations or positions"),
    };
    let mut solved = analytic_ik_reference(&doc.skeleton, &pose, &reference)?;
    solved = solved.with_mask(pose.joint_mask().to_vec())?;
    let (fk, _) = forward_kinematics(&doc.skeleton, &solved)?;
    let mask = pose.joint_mask();
    let mut report = String::new();
    let _ = writeln!(report, "frames: {}", pose.frames());
    let _ = writeln!(report, "joints: {}", pose.joints());
    let _ = writeln!(report, "reference: {source}");
    let _ = writeln!(report, "roundtrip_mpjpe: {:.3e}", mean_position_error(&fk, &pose, mask));
    let _ = writeln!(report, "roundtrip_max_error: {:.3e}", max_position_delta(&fk, &pose, mask));
    let mut outputs = Vec::new();
    if let Some(out) = output {
        write_clip(
            out,
            &ClipDocument {
                skeleton: doc.skeleton.clone(),
                rotations: Some(solved),
                positions: Some(pose),
            },
        )?;
        let _ = writeln!(report, "output: {}", out.display());
        outputs.push(out.to_path_buf());
    }
    Ok(CommandResult::ok(report, outputs))
}

fn pose_and_rotations(doc: &ClipDocument, path: &Path) -> Result<(PoseClip, RotationClip)> {
    let rot = require_rotations(doc, path)?.clone();
    let pose = match &doc.positions {
        Some(p) => p.clone(),
        None => forward_kinematics(&doc.skeleton, &rot)?.0,
    };
    Ok((pose, rot))
}

fn cmd_metrics(pred: &Path, gt: &Path) -> Result<CommandResult> {
    let p = read_clip(pred)?;
    let g = read_clip(gt)?;
    let (pp, pr) = pose_and_rotations(&p, pred)?;
    let (gp, gr) = pose_and_rotations(&g, gt)?;
    if pp.joints() != gp.joints() || pp.frames() != gp.frames() {
        return Err(Error::Shape(format!(
            "prediction is {}x{}, ground truth {}x{}",
            pp.frames(),
            pp.joints(),
            gp.frames(),
            gp.joints()
        )));
    }
    let mask: Vec<bool> = pp
        .joint_mask()
        .iter()
        .zip(gp.joint_mask())
        .map(|(a, b)| *a && *b)
        .collect();
    let report = evaluate(&pp, &gp, &pr, &gr, &mask)?;
    Ok(CommandResult::ok(report.to_text(), Vec::new()))
}

fn cmd_masks(input: &Path, layers: usize, output: Option<&Path>) -> Result<CommandResult> {
    let doc = read_clip(input)?;
    let relations = build_graph_relations(&doc.skeleton)?;
    let dump = mask_dump(&relations, layers, &doc.joint_mask())?;
    let mut outputs = Vec::new();
    if let Some(out) = output {
        write_atomic(out, dump.as_bytes())?;
        outputs.push(out.to_path_buf());
    }
    Ok(CommandResult::ok(dump, outputs))
}

fn gen_config(seed: u64, joints: Option<usize>, frames: usize) -> Result<GenConfig> {
    let mut cfg = GenConfig::with_seed(seed);
    if let Some(j) = joints {
        cfg = cfg.joints(j, j);
    }
    cfg.frames = frames;
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn cmd_demo_ambiguity(seed: u64, joints: Option<usize>, frames: usize, identity: bool) -> Result<CommandResult> {
    let cfg = gen_config(seed, joints, frames)?;
    let skeleton = gen_skeleton(&cfg)?;
    let motion = gen_motion(&skeleton, &cfg)?;
    let conv = if identity {
        AxisConvention::identity(skeleton.joint_count())
    } else {
        gen_axis_convention(&skeleton, seed)
    };
    let (s2, m2) = rerig_axis_convention(&skeleton, &motion, &conv)?;
    let (p1, _) = forward_kinematics(&skeleton, &motion)?;
    let (p2, _) = forward_kinematics(&s2, &m2)?;
    let position_delta = max_position_delta(&p1, &p2, motion.joint_mask());
    let mut sum = 0.0;
    for t in 0..motion.frames() {
        for j in 0..motion.joints() {
            sum += geodesic_angle(&motion.matrix(t, j)?, &m2.matrix(t, j)?);
        }
    }
    let mean_rot = (sum / (motion.frames() * motion.joints()) as f64).to_degrees();

    let mut report = String::new();
    let _ = writeln!(report, "seed: {seed}");
    let _ = writeln!(report, "joints: {}", skeleton.joint_count());
    let _ = writeln!(report, "frames: {}", motion.frames());
    let _ = writeln!(report, "convention: {}", if identity { "identity" } else { "random" });
    let _ = writeln!(report, "position_delta: {position_delta:.3e}");
    let _ = writeln!(report, "mean_rotation_delta_deg: {mean_rot:.6}");
    let twists = convention_bone_twists(&skeleton, &conv)?;
    let _ = writeln!(report, "single_child_bones: {}", twists.len());
    for bt in twists {
        let _ = writeln!(
            report,
            "twist: joint={} child={} twist_deg={:.6} swing_deg={:.6}",
            bt.joint, bt.child, bt.twist_deg, bt.swing_deg
        );
    }
    Ok(CommandResult::ok(report, Vec::new()))
}

fn cmd_gradcheck(kernel: &str, seeds: u64) -> Result<CommandResult> {
    let kernel: Kernel = kernel.parse()?;
    if seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    let report = run_gradcheck(kernel, seeds)?;
    Ok(CommandResult {
        exit_code: if report.passed() { 0 } else { 1 },
        report: report.to_text(),
        outputs: Vec::new(),
    })
}

fn cmd_schedule(epochs: u32, p_start: f64, p_end: f64, warmup: u32) -> Result<CommandResult> {
    let schedule = MixSchedule::new(p_start, p_end, warmup).map_err(|e| usage(e.to_string()))?;
    let mut report = String::new();
    let _ = writeln!(report, "p_start: {p_start}");
    let _ = writeln!(report, "p_end: {p_end}");
    let _ = writeln!(report, "warmup_epochs: {warmup}");
    for e in 0..=epochs {
        let _ = writeln!(report, "epoch {e}: {:.6}", mixed_pose_probability(e, &schedule));
    }
    Ok(CommandResult::ok(report, Vec::new()))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Format {
    Bvh,
    Clip,
}

fn format_of(path: &Path) -> Result<Format> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("bvh") => Ok(Format::Bvh),
        Some("json") => Ok(Format::Clip),
        _ => Err(usage(format!("'{}' must end in .bvh or .json", path.display()))),
    }
}

fn cmd_convert(
    input: &Path,
    output: &Path,
    channel_order: &str,
    axis_remap: Option<&str>,
    unit_scale: f64,
    frame_time: f64,
) -> Result<CommandResult> {
    let (in_fmt, out_fmt) = (format_of(input)?, format_of(output)?);
    let order: EulerOrder = channel_order.parse()?;
    let remap: Option<AxisRemap> = axis_remap.map(str::parse).transpose()?;
    if !(unit_scale.is_finite() && unit_scale > 0.0) {
        return Err(usage(format!("--unit-scale {unit_scale} must be positive")));
    }
    if !(frame_time.is_finite() && frame_time > 0.0) {
        return Err(usage(format!("--frame-time {frame_time} must be positive")));
    }

    let text = fs::read_to_string(input).map_err(|e| Error::file(input, e))?;
    let (mut skeleton, mut clip): (Skeleton, RotationClip) = match in_fmt {
        Format::Bvh => bvh_to_model(&parse_bvh(&text)?)?,
        Format::Clip => {
            let doc = parse_clip(&text)?;
            let rot = require_rotations(&doc, input)?.clone();
            (doc.skeleton, rot)
        }
    };
    if let Some(r) = &remap {
        (skeleton, clip) = remap_rig(&skeleton, &clip, r)?;
    }
    if unit_scale != 1.0 {
        (skeleton, clip) = scale_rig(&skeleton, &clip, unit_scale)?;
    }

    let mut report = String::new();
    let _ = writeln!(report, "joints: {}", skeleton.joint_count());
    let _ = writeln!(report, "frames: {}", clip.frames());
    match out_fmt {
        Format::Clip => {
            let (pose, _) = forward_kinematics(&skeleton, &clip)?;
            write_clip(
                output,
                &ClipDocument {
                    skeleton,
                    rotations: Some(clip),
                    positions: Some(pose),
                },
            )?;
        }
        Format::Bvh => {
            let (doc, warnings) = model_to_bvh(&skeleton, &clip, order, frame_time)?;
            write_atomic(output, write_bvh(&doc)?.as_bytes())?;
            let _ = writeln!(report, "channel_order: {order}");
            let _ = writeln!(report, "gimbal_warnings: {}", warnings.len());
            for w in &warnings {
                let _ = writeln!(report, "gimbal: frame={} joint={}", w.frame, w.joint);
            }
        }
    }
    let _ = writeln!(report, "output: {}", output.display());
    Ok(CommandResult::ok(report, vec![output.to_path_buf()]))
}

fn cmd_generate(
    seed: u64,
    joints: Option<usize>,
    frames: usize,
    branching: bool,
    output: &Path,
) -> Result<CommandResult> {
    let cfg = gen_config(seed, joints, frames)?;
    let skeleton = if branching {
        gen_branching_skeleton(&cfg)?
    } else {
        gen_skeleton(&cfg)?
    };
    let motion = gen_motion(&skeleton, &cfg)?;
    let (pose, _) = forward_kinematics(&skeleton, &motion)?;
    let mut report = String::new();
    let _ = writeln!(report, "seed: {seed}");
    let _ = writeln!(report, "joints: {}", skeleton.joint_count());
    let _ = writeln!(report, "frames: {}", motion.frames());
    write_clip(
        output,
        &ClipDocument {
            skeleton,
            rotations: Some(motion),
            positions: Some(pose),
        },
    )?;
    let _ = writeln!(report, "output: {}", output.display());
    Ok(CommandResult::ok(report, vec![output.to_path_buf()]))
}
