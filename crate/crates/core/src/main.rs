use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{error::ErrorKind, Parser, Subcommand};

use rigfit::eval::{evaluate, DEFAULT_SAMPLES};
use rigfit::gradcheck::{grad_check, GradCheckOptions};
use rigfit::losses::TargetObservation;
use rigfit::mesh::load_obj;
use rigfit::optim::{fit, synth_target, StagePlan, StageStatus, SynthOptions};
use rigfit::render::{image_to_mask, mask_to_image, BitDepth, CameraModel, ImageBuffer};
use rigfit::rig::{load_template, read_json, save_template, synthetic_head, write_json, HeadOptions, RiggedTemplate};
use rigfit::texture::{extract_appearance, uv_coverage, AppearanceOptions, BlendMasks, UvTexture, DEFAULT_TOL};
use rigfit::{Error, Result};

#[derive(Parser)]
#[command(name = "rigfit", version, about = "Rigged head template registration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the built-in synthetic head template and its camera.
    MakeTemplate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 73)]
        columns: usize,
        #[arg(long, default_value_t = 49)]
        rows: usize,
        /// Square image size of the bundled camera.
        #[arg(long, default_value_t = 512)]
        size: u32,
        #[arg(long, default_value = "head")]
        stem: String,
    },
    /// Pose the template at random and write the observation it produces.
    Synth {
        #[arg(long)]
        template: PathBuf,
        /// Camera JSON; defaults to the template's camera.
        #[arg(long)]
        camera: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Fraction of each controller's range to sample from.
        #[arg(long, default_value_t = 0.6)]
        range: f64,
        #[arg(long, default_value_t = 0.0)]
        joint_jitter: f64,
    },
    /// Register the template to an observation directory.
    Fit {
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Stage plan JSON; defaults to rig, joint and vertex stages.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bake an image onto a mesh's UV layout and complete it against a
    /// template texture.
    Bake {
        #[arg(long)]
        image: PathBuf,
        /// OBJ with texture coordinates.
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        template_tex: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Template normal map encoded as (n+1)/2; flat when absent.
        #[arg(long)]
        template_normal: Option<PathBuf>,
        /// Region to replace; every UV triangle when absent.
        #[arg(long)]
        hard_mask: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        strength: f64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Print RMSE and normal consistency between two meshes as JSON.
    Eval {
        #[arg(long)]
        mesh_a: PathBuf,
        #[arg(long)]
        mesh_b: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Restrict sampling to this template's masked faces.
        #[arg(long)]
        template: Option<PathBuf>,
    },
    /// Compare every loss gradient with central differences.
    GradCheck {
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        camera: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        points: usize,
        #[arg(long, default_value_t = 60)]
        vertex_coords: usize,
    },
}

/// Outcome of a command that ran to completion but must report failure.
enum Outcome {
    Ok,
    NumericalFailure(String),
}

fn load_camera(path: &Path) -> Result<CameraModel> {
    let cam: CameraModel = read_json(path)?;
    cam.validate()?;
    Ok(cam)
}

fn template_and_camera(template: &Path, camera: Option<&Path>) -> Result<(RiggedTemplate, CameraModel)> {
    let (tmpl, bundled) = load_template(template)?;
    let cam = match (camera, bundled) {
        (Some(p), _) => load_camera(p)?,
        (None, Some(c)) => c,
        (None, None) => {
            return Err(Error::Invalid(format!(
                "{} carries no camera; pass --camera",
                template.display()
            )))
        }
    };
    Ok((tmpl, cam))
}

/// Drops an alpha channel.
fn opaque(img: ImageBuffer) -> ImageBuffer {
    match img.channels {
        2 | 4 => {
            let c = img.channels - 1;
            let data = img.data.chunks(img.channels).flat_map(|p| p[..c].to_vec()).collect();
            ImageBuffer {
                channels: c,
                data,
                ..img
            }
        }
        _ => img,
    }
}

fn encode_normals(img: &ImageBuffer) -> ImageBuffer {
    let mut out = img.clone();
    for v in &mut out.data {
        *v = 0.5 * (*v + 1.0);
    }
    out
}

fn run(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::MakeTemplate {
            out,
            columns,
            rows,
            size,
            stem,
        } => {
            let (tmpl, cam) = synthetic_head(&HeadOptions { columns, rows }, size)?;
            let path = save_template(&tmpl, Some(&cam), &out, &stem)?;
            write_json(&out.join("camera.json"), &cam)?;
            eprintln!(
                "wrote {} ({} vertices, {} joints, {} controllers)",
                path.display(),
                tmpl.vertex_count(),
                tmpl.joint_count(),
                tmpl.controller_count()
            );
        }
        Command::Synth {
            template,
            camera,
            seed,
            out,
            range,
            joint_jitter,
        } => {
            let (tmpl, cam) = template_and_camera(&template, camera.as_deref())?;
            let s = synth_target(&tmpl, &cam, seed, &SynthOptions { range, joint_jitter })?;
            s.save(&out)?;
            eprintln!("wrote target for seed {seed} to {}", out.display());
        }
        Command::Fit {
            template,
            target,
            plan,
            out,
        } => {
            let (tmpl, _) = load_template(&template)?;
            let target = TargetObservation::load(&target)?;
            let plan = match plan {
                Some(p) => StagePlan::load(p)?,
                None => StagePlan::default(),
            };
            let report = fit(&tmpl, &target, &plan)?;
            report.save(&out)?;
            for (i, s) in report.stages.iter().enumerate() {
                eprintln!(
                    "stage {i} ({}): {} iterations, loss {:.6e} -> {:.6e}, {:?} in {:.1}s",
                    s.level.name(),
                    s.iterations,
                    s.initial_loss,
                    s.best_loss,
                    s.status,
                    s.seconds
                );
            }
            if let Some(StageStatus::Failed(why)) = report
                .stages
                .iter()
                .map(|s| &s.status)
                .find(|s| matches!(s, StageStatus::Failed(_)))
            {
                return Ok(Outcome::NumericalFailure(format!("fit stage failed: {why}")));
            }
        }
        Command::Bake {
            image,
            mesh,
            camera,
            template_tex,
            out,
            template_normal,
            hard_mask,
            strength,
            tol,
        } => {
            let img = opaque(ImageBuffer::read_png(&image)?);
            let mesh = load_obj(&mesh)?;
            let cam = load_camera(&camera)?;
            let tex = opaque(ImageBuffer::read_png(&template_tex)?);
            let (w, h) = (tex.width, tex.height);
            let normal = match template_normal {
                Some(p) => {
                    let mut n = opaque(ImageBuffer::read_png(&p)?);
                    for px in n.data.chunks_mut(n.channels) {
                        for v in px.iter_mut() {
                            *v = 2.0 * *v - 1.0;
                        }
                    }
                    Some(UvTexture::full(n))
                }
                None => None,
            };
            let hard = match hard_mask {
                Some(p) => {
                    let m = ImageBuffer::read_png(&p)?;
                    if m.width != w || m.height != h {
                        return Err(Error::Dimension(format!(
                            "hard mask is {}x{}, template texture {w}x{h}",
                            m.width, m.height
                        )));
                    }
                    image_to_mask(&m)
                }
                None => uv_coverage(&mesh, w, h, None)?,
            };
            let masks = BlendMasks::from_hard(hard, w, h)?;
            let app = extract_appearance(
                &img,
                &mesh,
                &cam,
                &UvTexture::full(tex),
                normal.as_ref(),
                &masks,
                &AppearanceOptions { strength, tol },
            )?;
            std::fs::create_dir_all(&out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            app.albedo.image.write_png(out.join("albedo.png"), BitDepth::Sixteen)?;
            encode_normals(&app.normal.image).write_png(out.join("normal.png"), BitDepth::Sixteen)?;
            app.baked_albedo.image.write_png(out.join("baked_albedo.png"), BitDepth::Sixteen)?;
            encode_normals(&app.baked_normal.image).write_png(out.join("baked_normal.png"), BitDepth::Sixteen)?;
            mask_to_image(&app.baked_albedo.mask, w, h).write_png(out.join("coverage.png"), BitDepth::Eight)?;
            let covered = app.baked_albedo.mask.iter().filter(|&&c| c).count();
            eprintln!("baked {covered} of {} texels to {}", w * h, out.display());
        }
        Command::Eval {
            mesh_a,
            mesh_b,
            n,
            seed,
            template,
        } => {
            let a = load_obj(&mesh_a)?;
            let b = load_obj(&mesh_b)?;
            if n == 0 {
                return Err(Error::Invalid("--n must be at least 1".into()));
            }
            let filter = match template {
                Some(t) => {
                    let (tmpl, _) = load_template(&t)?;
                    if a.face_count() != tmpl.neutral.face_count() || b.face_count() != tmpl.neutral.face_count() {
                        return Err(Error::Dimension("meshes do not share the template's connectivity".into()));
                    }
                    Some(tmpl.face_mask())
                }
                None => None,
            };
            let r = evaluate(&a, &b, n, seed, filter.as_deref())?;
            println!("{}", serde_json::to_string(&r).expect("metrics serialize"));
        }
        Command::GradCheck {
            template,
            camera,
            seed,
            points,
            vertex_coords,
        } => {
            let (tmpl, cam) = template_and_camera(&template, camera.as_deref())?;
            if points == 0 {
                return Err(Error::Invalid("--points must be at least 1".into()));
            }
            let report = grad_check(
                &tmpl,
                &cam,
                &GradCheckOptions {
                    points,
                    vertex_coords,
                    seed,
                },
            )?;
            for c in &report.checks {
                eprintln!(
                    "{:<6} {:<9} {:>4}/{:<4} worst {:.2e}{}",
                    c.level.name(),
                    c.term,
                    c.passed,
                    c.checked,
                    c.worst,
                    if c.ok() { "" } else { "  FAIL" }
                );
            }
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
            if !report.ok() {
                return Ok(Outcome::NumericalFailure("gradient check failed".into()));
            }
        }
    }
    Ok(Outcome::Ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::NumericalFailure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
