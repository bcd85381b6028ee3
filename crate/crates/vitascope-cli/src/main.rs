//! Command-line pipeline: data generation, SDF pretraining, joint
//! training, inference, evaluation, and mesh export.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use geom::{QueryCounts, ToolKind};
use vitascope::config::KvConfig;
use vitascope::eval::{self, EvalConfig};
use vitascope::fields::contact::ContactInputMode;
use vitascope::fields::object::{pretrain_object, ObjectConfig, PretrainConfig, PretrainInput};
use vitascope::infer::contact_pred::SurfaceSource;
use vitascope::infer::pose_est::PoseSource;
use vitascope::sim::record::{generate_dataset, load_dataset, GenConfig, InteractionRecord};
use vitascope::trainer::{train_joint, TrainingConfig};
use vitascope::{FieldModel, ObjectModel, VitaError};

#[derive(Parser)]
#[command(name = "vitascope", version, about = "Visuo-tactile implicit field pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic interaction dataset.
    GenData {
        /// Comma-separated tool names, or `all`.
        #[arg(long, default_value = "all")]
        tools: String,
        #[arg(long, default_value_t = 500)]
        per_tool: usize,
        /// `train` or `test`.
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        cameras: usize,
        #[arg(long, default_value_t = 1024)]
        visual_points: usize,
        #[arg(long, default_value_t = 1000)]
        contact_points: usize,
    },
    /// Pretrain the object SDF module.
    Pretrain {
        /// Dataset directory; supplies the tool list and default seed.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Tool name or `all` (overrides the dataset tool list).
        #[arg(long, default_value = "all")]
        tool: String,
        #[arg(long, default_value_t = 2000)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value_t = 1024)]
        batch: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Train one hypernetwork per tool instead of a shared one.
        #[arg(long, default_value_t = false)]
        per_tool_nets: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Joint training of tactile and contact modules.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Pretrained object checkpoint.
        #[arg(long)]
        object: PathBuf,
        /// Flat key=value config file; flags override file values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Ablation: zero object activations in the contact input.
        #[arg(long, default_value_t = false)]
        zero_acts: bool,
        /// Ablation: zero the pose in the contact conditioning.
        #[arg(long, default_value_t = false)]
        zero_obj_pose: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run three-stage inference on one scene record.
    Infer {
        #[arg(long)]
        model: PathBuf,
        /// A record file produced by gen-data.
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "both")]
        pose_from: String,
        #[arg(long, default_value = "learned")]
        surface: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate a model over a dataset and write metric reports.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long, default_value = "both")]
        pose_from: String,
        #[arg(long, default_value = "learned")]
        surface: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Export the learned reconstruction of a tool as OBJ.
    ExportMesh {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        tool: String,
        #[arg(long, default_value_t = 256)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_tools(spec: &str) -> Result<Vec<ToolKind>, VitaError> {
    if spec == "all" {
        return Ok(ToolKind::ALL.to_vec());
    }
    spec.split(',')
        .map(|s| {
            s.trim().parse::<ToolKind>().map_err(|e| VitaError::Contract {
                op: "cli",
                detail: e,
            })
        })
        .collect()
}

/// Next free numbered path like `report_003.txt` in `dir`; reports are
/// append-only so reruns never overwrite earlier ones.
fn next_indexed(dir: &Path, stem: &str, ext: &str) -> (PathBuf, usize) {
    for i in 1.. {
        let p = dir.join(format!("{}_{:03}.{}", stem, i, ext));
        if !p.exists() {
            return (p, i);
        }
    }
    unreachable!()
}

fn write_file(path: &Path, content: &str, created: &mut Vec<PathBuf>) -> Result<(), VitaError> {
    std::fs::write(path, content).map_err(|e| VitaError::Dataset {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    created.push(path.to_path_buf());
    Ok(())
}

fn run(cli: Cli) -> Result<(), VitaError> {
    match cli.cmd {
        Cmd::GenData {
            tools,
            per_tool,
            split,
            seed,
            out,
            cameras,
            visual_points,
            contact_points,
        } => {
            if split != "train" && split != "test" {
                return Err(VitaError::Contract {
                    op: "cli",
                    detail: format!("split must be train|test, got `{}`", split),
                });
            }
            let tools = parse_tools(&tools)?;
            let cfg = GenConfig {
                cameras,
                visual_points,
                contact_points,
                ..Default::default()
            };
            let manifest = generate_dataset(&tools, per_tool, &split, seed, &cfg, &out)?;
            println!(
                "wrote {} records ({} tools x {}) to {}",
                manifest.records(),
                tools.len(),
                per_tool,
                out.display()
            );
            Ok(())
        }

        Cmd::Pretrain {
            data,
            tool,
            epochs,
            lr,
            batch,
            seed,
            per_tool_nets,
            out,
        } => {
            let (tools, default_seed) = match (&data, tool.as_str()) {
                (Some(dir), "all") => {
                    let (manifest, _) = load_dataset(dir)?;
                    (manifest.tools, manifest.seed)
                }
                (_, spec) => (parse_tools(spec)?, 0),
            };
            let seed = seed.unwrap_or(default_seed);
            let cfg = PretrainConfig {
                epochs,
                lr,
                batch_per_tool: batch,
                seed,
                object: ObjectConfig {
                    shared: !per_tool_nets,
                    ..Default::default()
                },
                ..Default::default()
            };
            let inputs: Vec<PretrainInput> = tools
                .iter()
                .map(|&t| {
                    let mesh = geom::build_tool_mesh(t);
                    let (canon, norm) = geom::normalize_to_unit_sphere(&mesh)?;
                    let mut rng = ndiff::rng::stream(seed, &[0x51, t.index() as u64]);
                    let samples = geom::sample_query_set(
                        &canon,
                        QueryCounts::default(),
                        geom::sample::NEAR_SIGMA,
                        &mut rng,
                    )?;
                    Ok(PretrainInput {
                        tool: t,
                        norm,
                        samples,
                    })
                })
                .collect::<Result<_, VitaError>>()?;
            let (model, logs) = pretrain_object(&inputs, &cfg)?;
            model.save(&out, seed)?;
            if let Some(last) = logs.last() {
                println!("pretrained {} tools, final {}", tools.len(), last.to_kv());
            }
            println!("object checkpoint: {}", out.display());
            Ok(())
        }

        Cmd::Train {
            data,
            object,
            config,
            epochs,
            lr,
            batch,
            seed,
            zero_acts,
            zero_obj_pose,
            out,
        } => {
            let (_, records) = load_dataset(&data)?;
            let object_model = ObjectModel::load(&object)?;
            let mut cfg = TrainingConfig::default();
            if let Some(path) = config {
                let kv = KvConfig::read(&path)?;
                if let Some(v) = kv.get_f64("lambda_shear")? {
                    cfg.lambda_shear = v;
                }
                if let Some(v) = kv.get_f64("lambda_emb")? {
                    cfg.lambda_emb = v;
                }
                if let Some(v) = kv.get_f64("lambda_hyper")? {
                    cfg.lambda_hyper = v;
                }
                if let Some(v) = kv.get_f64("lambda_contact")? {
                    cfg.lambda_contact = v;
                }
                if let Some(v) = kv.get_usize("epochs")? {
                    cfg.epochs = v;
                }
                if let Some(v) = kv.get_f64("lr")? {
                    cfg.lr = v;
                }
                if let Some(v) = kv.get_usize("batch")? {
                    cfg.batch = v;
                }
                if let Some(v) = kv.get_u64("seed")? {
                    cfg.seed = v;
                }
                if let Some(v) = kv.get_f64("noise_std")? {
                    cfg.noise_std = v;
                }
                if let Some(v) = kv.get("contact_mode") {
                    cfg.contact.mode =
                        v.parse::<ContactInputMode>().map_err(|e| VitaError::Contract {
                            op: "config",
                            detail: e,
                        })?;
                }
                if let Some(v) = kv.get_bool("zero_activations")? {
                    cfg.contact.zero_activations = v;
                }
                if let Some(v) = kv.get_bool("zero_pose")? {
                    cfg.contact.zero_pose = v;
                }
            }
            if let Some(v) = epochs {
                cfg.epochs = v;
            }
            if let Some(v) = lr {
                cfg.lr = v;
            }
            if let Some(v) = batch {
                cfg.batch = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if zero_acts {
                cfg.contact.zero_activations = true;
            }
            if zero_obj_pose {
                cfg.contact.zero_pose = true;
            }

            let (model, logs) = train_joint(&records, &object_model, &cfg)?;
            model.save(&out)?;
            // Machine-parsable loss log alongside the checkpoint.
            let log_dir = out.parent().unwrap_or(Path::new("."));
            let (log_path, _) = next_indexed(log_dir, "train_log", "txt");
            let mut text = String::new();
            for log in &logs {
                text.push_str(&log.to_kv());
                text.push('\n');
            }
            let mut created = Vec::new();
            write_file(&log_path, &text, &mut created)?;
            if let Some(last) = logs.last() {
                println!("trained {} epochs, final {}", logs.len(), last.to_kv());
            }
            println!("model checkpoint: {}", out.display());
            Ok(())
        }

        Cmd::Infer {
            model,
            scene,
            out,
            pose_from,
            surface,
            config,
        } => {
            let model = FieldModel::load(&model)?;
            let rec = InteractionRecord::read(&scene)?;
            let cfg = infer_config(&pose_from, &surface, config.as_deref())?;
            std::fs::create_dir_all(&out).map_err(|e| VitaError::Dataset {
                path: out.display().to_string(),
                detail: e.to_string(),
            })?;

            let meshes = eval::reconstruction_meshes(&model, &[rec.tool], &cfg.contact)?;
            let (result, patch) = eval::evaluate_scene_with_patch(
                &model,
                &rec,
                rec.trial_index as usize,
                &meshes,
                &cfg,
            )?;

            let mut created = Vec::new();
            let tag = format!("{}_{:04}", rec.tool.name(), rec.trial_index);
            let ply = out.join(format!("contact_{}.ply", tag));
            geom::io::write_ply(&patch.world, &ply)?;
            created.push(ply.clone());
            let report = format!("{} contact_ply=contact_{}.ply\n", result.to_kv(), tag);
            write_file(&out.join(format!("scene_{}.kv", tag)), &report, &mut created)?;
            let timings = format!(
                "scene={} pose_ms={:.1} trial_ms={:.1} contact_ms={:.1}\n",
                tag, result.timings.pose_ms, result.timings.trial_ms, result.timings.contact_ms
            );
            write_file(&out.join(format!("timings_{}.txt", tag)), &timings, &mut created)?;
            println!("{}", report.trim_end());
            Ok(())
        }

        Cmd::Eval {
            model,
            data,
            out,
            jobs,
            pose_from,
            surface,
            config,
        } => {
            let model = FieldModel::load(&model)?;
            let (_, records) = load_dataset(&data)?;
            let mut cfg = infer_config(&pose_from, &surface, config.as_deref())?;
            cfg.jobs = jobs;
            std::fs::create_dir_all(&out).map_err(|e| VitaError::Dataset {
                path: out.display().to_string(),
                detail: e.to_string(),
            })?;

            let results = eval::evaluate_dataset(&model, &records, &cfg)?;
            let report = eval::build_report(&model, &results, cfg.contact.recon_resolution)?;

            let mut created = Vec::new();
            let (table_path, idx) = next_indexed(&out, "report", "txt");
            write_file(&table_path, &report.to_table(), &mut created)?;
            let kv_path = out.join(format!("report_{:03}.kv", idx));
            write_file(&kv_path, &report.to_kv(), &mut created)?;
            let scenes_path = out.join(format!("scenes_{:03}.kv", idx));
            let mut scene_text = String::new();
            for r in &results {
                scene_text.push_str(&r.to_kv());
                scene_text.push('\n');
            }
            write_file(&scenes_path, &scene_text, &mut created)?;
            let timing_path = out.join(format!("timings_{:03}.txt", idx));
            let mut timing_text = String::new();
            for r in &results {
                timing_text.push_str(&format!(
                    "scene={} pose_ms={:.1} trial_ms={:.1} contact_ms={:.1}\n",
                    r.scene_id, r.timings.pose_ms, r.timings.trial_ms, r.timings.contact_ms
                ));
            }
            write_file(&timing_path, &timing_text, &mut created)?;
            print!("{}", report.to_table());
            println!("report: {}", table_path.display());
            Ok(())
        }

        Cmd::ExportMesh {
            model,
            tool,
            resolution,
            out,
        } => {
            let model = FieldModel::load(&model)?;
            let tool: ToolKind = tool.parse().map_err(|e| VitaError::Contract {
                op: "cli",
                detail: e,
            })?;
            let mesh = model.object.reconstruct_mesh(tool, resolution)?;
            geom::io::write_obj(&mesh, &out)?;
            println!(
                "exported {} ({} vertices, {} faces) to {}",
                tool,
                mesh.vertices.len(),
                mesh.triangles.len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn infer_config(
    pose_from: &str,
    surface: &str,
    config: Option<&Path>,
) -> Result<EvalConfig, VitaError> {
    let mut cfg = EvalConfig::default();
    cfg.pose.source = pose_from.parse::<PoseSource>().map_err(|e| VitaError::Contract {
        op: "cli",
        detail: e,
    })?;
    cfg.contact.source = surface.parse::<SurfaceSource>().map_err(|e| VitaError::Contract {
        op: "cli",
        detail: e,
    })?;
    if let Some(path) = config {
        let kv = KvConfig::read(path)?;
        if let Some(v) = kv.get_usize("pose_steps")? {
            cfg.pose.steps = v;
        }
        if let Some(v) = kv.get_f64("pose_lr_max")? {
            cfg.pose.lr_max = v;
        }
        if let Some(v) = kv.get_f64("pose_lr_min")? {
            cfg.pose.lr_min = v;
        }
        if let Some(v) = kv.get_usize("trial_steps")? {
            cfg.trial.steps = v;
        }
        if let Some(v) = kv.get_f64("trial_lr")? {
            cfg.trial.lr = v;
        }
        if let Some(v) = kv.get_f64("epsilon")? {
            cfg.contact.epsilon = v;
        }
        if let Some(v) = kv.get_usize("n_surface")? {
            cfg.contact.n_surface = v;
        }
        if let Some(v) = kv.get_usize("recon_resolution")? {
            cfg.contact.recon_resolution = v;
        }
    }
    Ok(cfg)
}

fn exit_code_for(err: &VitaError) -> u8 {
    match err {
        VitaError::Contract { .. } => 2,
        VitaError::Dataset { .. } => 3,
        VitaError::Geom(geom::GeomError::Io { .. }) | VitaError::Geom(geom::GeomError::Parse { .. }) => 3,
        VitaError::Ndiff(ndiff::NdiffError::Checkpoint { .. }) => 3,
        VitaError::Training { .. }
        | VitaError::Inference { .. }
        | VitaError::Ndiff(ndiff::NdiffError::NonFiniteGradient { .. }) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(exit_code_for(&e))
        }
    }
}
