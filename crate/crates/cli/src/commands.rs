use crate::config::Config;
use crate::error::{data_err, image_err, io_err, CliError, Result};
use crate::manifest::{Entry, Kind, Manifest, FILE_NAME};
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ImageBuffer, ImageEncoder, PixelWithColorType};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use tiptail::augment::{AugmentGrid, ScalePlane};
use tiptail::detection::{detect_frame, Bands, ColorBand};
use tiptail::eval::{DatasetSplit, VerificationReport};
use tiptail::gradcheck;
use tiptail::nn::checkpoint::{read_checkpoint, write_checkpoint};
use tiptail::nn::TrainConfig;
use tiptail::slitcnn::{build_model, train_with_progress, Example, ModelSpec, TrainedModel, Variant};
use tiptail::stereo::CameraRig;
use tiptail::synth::{
    generate_dataset, ground_truth_tip_tail, render_stereo_frames, DatasetConfig, PenSample, RenderOptions,
    SynthParams,
};
use tiptail::trajectory::{
    bspline_resample, decode_interpolated_csv, decode_raw_csv, decode_tip_tail_csv, derive_tip_tail,
    encode_interpolated_csv, encode_raw_csv, encode_tip_tail_csv, render_trace_image, InterpolatedTrajectory,
    RawSequence, DEFAULT_LENGTH,
};

pub const TRACE_SIZE: u32 = 256;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Binary PPM/PGM; `image`'s extension-based save would pick PAM.
fn save_pnm<P, C>(path: &Path, img: &ImageBuffer<P, C>, subtype: PnmSubtype) -> Result<()>
where
    P: PixelWithColorType<Subpixel = u8>,
    C: std::ops::Deref<Target = [u8]>,
{
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    PnmEncoder::new(&mut w)
        .with_subtype(subtype)
        .write_image(img.as_raw(), img.width(), img.height(), P::COLOR_TYPE)
        .map_err(image_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// `.csv` files of a directory other than the manifest, sorted by name.
fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let p = entry.map_err(io_err(dir))?.path();
        let is_csv = p.extension().is_some_and(|e| e == "csv");
        if is_csv && p.file_name().is_some_and(|n| n != FILE_NAME) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Applies `f` to a single file, or to every CSV of a directory writing
/// outputs of the same name into `out`. Returns the number processed.
fn map_files(input: &Path, out: &Path, mut f: impl FnMut(&Path, &Path) -> Result<()>) -> Result<usize> {
    if !input.is_dir() {
        f(input, out)?;
        return Ok(1);
    }
    create_dir(out)?;
    let files = csv_files(input)?;
    for p in &files {
        f(p, &out.join(p.file_name().expect("listed file")))?;
    }
    let manifest = input.join(FILE_NAME);
    if manifest.exists() {
        fs::copy(&manifest, out.join(FILE_NAME)).map_err(io_err(&manifest))?;
    }
    Ok(files.len())
}

pub fn rig(cfg: &Config) -> Result<CameraRig> {
    let d = CameraRig::default();
    Ok(CameraRig::new(
        cfg.pick(None, "focal_length", d.focal_length)?,
        cfg.pick(None, "cx", d.cx)?,
        cfg.pick(None, "cy", d.cy)?,
        cfg.pick(None, "baseline", d.baseline)?,
        cfg.pick(None, "image_width", d.image_width)?,
        cfg.pick(None, "image_height", d.image_height)?,
    )?)
}

fn band(cfg: &Config, low_key: &str, high_key: &str, default: ColorBand) -> Result<ColorBand> {
    let triple = |key: &str, d: [u8; 3]| -> Result<[u8; 3]> {
        match cfg.list::<u8>(key)? {
            None => Ok(d),
            Some(v) => v
                .try_into()
                .map_err(|_| CliError::Config(format!("{key} needs three values"))),
        }
    };
    Ok(ColorBand::new(
        triple(low_key, default.low)?,
        triple(high_key, default.high)?,
    )?)
}

pub fn bands(cfg: &Config) -> Result<Bands> {
    Ok(Bands {
        orange: band(cfg, "orange_low", "orange_high", ColorBand::ORANGE)?,
        green: band(cfg, "green_low", "green_high", ColorBand::GREEN)?,
    })
}

pub fn synth_params(cfg: &Config) -> Result<SynthParams> {
    let d = SynthParams::default();
    let p = SynthParams {
        pen_length: cfg.pick(None, "pen_length", d.pen_length)?,
        frame_rate: cfg.pick(None, "frame_rate", d.frame_rate)?,
        sigma_intra: cfg.pick(None, "sigma_intra", d.sigma_intra)?,
        sigma_forge: cfg.pick(None, "sigma_forge", d.sigma_forge)?,
        occlusion_fraction: cfg.pick(None, "occlusion_fraction", d.occlusion_fraction)?,
        time_warp: cfg.pick(None, "time_warp", d.time_warp)?,
        volume: d.volume,
    };
    p.validate()?;
    Ok(p)
}

pub fn render_options(cfg: &Config, noise: Option<u8>, seed: u64) -> Result<RenderOptions> {
    let d = RenderOptions::default();
    Ok(RenderOptions {
        ball_radius: cfg.pick(None, "ball_radius", d.ball_radius)?,
        noise_amplitude: cfg.pick(noise, "noise", 0)?,
        seed,
    })
}

pub fn augment_grid(cfg: &Config) -> Result<AugmentGrid> {
    let d = AugmentGrid::default();
    Ok(AugmentGrid {
        angles_deg: cfg.list("angles")?.unwrap_or(d.angles_deg),
        scale_factors: cfg.list("scale_factors")?.unwrap_or(d.scale_factors),
        planes: vec![ScalePlane::Xz, ScalePlane::Yz],
    })
}

pub struct TrainFlags {
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
}

pub fn train_config(cfg: &Config, flags: &TrainFlags, seed: u64) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let patience = match flags.patience {
        Some(p) => Some(p),
        None => cfg.get("patience")?,
    };
    let c = TrainConfig {
        learning_rate: cfg.pick(flags.learning_rate, "learning_rate", d.learning_rate)?,
        beta1: cfg.pick(None, "beta1", d.beta1)?,
        beta2: cfg.pick(None, "beta2", d.beta2)?,
        adam_epsilon: cfg.pick(None, "adam_epsilon", d.adam_epsilon)?,
        batch_size: cfg.pick(flags.batch_size, "batch_size", d.batch_size)?,
        max_epochs: cfg.pick(flags.max_epochs, "max_epochs", d.max_epochs)?,
        seed,
        stop_at_perfect_validation: cfg.pick(
            None,
            "stop_at_perfect_validation",
            d.stop_at_perfect_validation,
        )?,
        patience,
        target_loss: cfg.get("target_loss")?,
    };
    c.validate()?;
    Ok(c)
}

pub enum SynthMode {
    TipTail,
    Raw,
}

fn detect_sequence(
    rig: &CameraRig,
    bands: &Bands,
    samples: &[PenSample],
    opts: &RenderOptions,
) -> Result<RawSequence> {
    let mut seq = RawSequence::new();
    for frame in render_stereo_frames(rig, samples, opts) {
        let frame = frame?;
        let det = detect_frame(&frame.left, &frame.right, bands)?;
        seq.push_frame(det.to_array(), rig.image_width, rig.image_height);
    }
    Ok(seq)
}

/// Writes one CSV per sample plus the manifest. Tip-tail mode stores the
/// generator's exact trajectories; raw mode renders and detects every frame.
pub fn synth_generate(cfg: &Config, ds: &DatasetConfig, mode: SynthMode, out: &Path) -> Result<usize> {
    let data = generate_dataset(ds)?;
    create_dir(out)?;
    let rig = rig(cfg)?;
    let bands = bands(cfg)?;
    let opts = render_options(cfg, None, ds.seed)?;
    let encode = |samples: &[PenSample]| -> Result<String> {
        Ok(match mode {
            SynthMode::TipTail => encode_tip_tail_csv(&ground_truth_tip_tail(samples)),
            SynthMode::Raw => encode_raw_csv(&detect_sequence(&rig, &bands, samples, &opts)?),
        })
    };
    let mut manifest = Manifest::default();
    for (k, draws) in data.genuine.iter().enumerate() {
        for (j, samples) in draws.iter().enumerate() {
            let name = format!("s{k:02}_g{j:02}.csv");
            write_text(&out.join(&name), &encode(samples)?)?;
            manifest.entries.push(Entry {
                signer_id: k,
                sample_id: j,
                kind: Kind::Genuine,
                target_id: k,
                path: name,
            });
        }
    }
    for (k, forged) in data.forgeries.iter().enumerate() {
        for (j, f) in forged.iter().enumerate() {
            let name = format!("s{k:02}_f{j:02}.csv");
            write_text(&out.join(&name), &encode(&f.samples)?)?;
            manifest.entries.push(Entry {
                signer_id: f.forger_id as usize,
                sample_id: j,
                kind: Kind::Forgery,
                target_id: k,
                path: name,
            });
        }
    }
    write_text(&out.join(FILE_NAME), &manifest.to_text())?;
    Ok(manifest.entries.len())
}

/// Renders the frames of one generated sample as `NNNN_L.ppm` / `NNNN_R.ppm`.
pub fn render_stereo(
    cfg: &Config,
    ds: &DatasetConfig,
    signer: usize,
    sample: usize,
    forgery: bool,
    noise: Option<u8>,
    out: &Path,
) -> Result<usize> {
    let data = generate_dataset(ds)?;
    let missing = || CliError::Invalid(format!("no such sample: signer {signer}, sample {sample}"));
    let samples = if forgery {
        &data
            .forgeries
            .get(signer)
            .and_then(|f| f.get(sample))
            .ok_or_else(missing)?
            .samples
    } else {
        data.genuine
            .get(signer)
            .and_then(|g| g.get(sample))
            .ok_or_else(missing)?
    };
    let rig = rig(cfg)?;
    let opts = render_options(cfg, noise, ds.seed)?;
    create_dir(out)?;
    let mut n = 0;
    for (i, frame) in render_stereo_frames(&rig, samples, &opts).enumerate() {
        let frame = frame?;
        let l = out.join(format!("{i:04}_L.ppm"));
        let r = out.join(format!("{i:04}_R.ppm"));
        save_pnm(&l, &frame.left, PnmSubtype::Pixmap(SampleEncoding::Binary))?;
        save_pnm(&r, &frame.right, PnmSubtype::Pixmap(SampleEncoding::Binary))?;
        n += 1;
    }
    Ok(n)
}

/// Detects both balls in every `NNNN_L.ppm` / `NNNN_R.ppm` pair.
pub fn detect(cfg: &Config, frames: &Path, out: &Path) -> Result<usize> {
    let bands = bands(cfg)?;
    let mut lefts = Vec::new();
    for entry in fs::read_dir(frames).map_err(io_err(frames))? {
        let p = entry.map_err(io_err(frames))?.path();
        if p.file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with("_L.ppm"))
        {
            lefts.push(p);
        }
    }
    lefts.sort();
    if lefts.is_empty() {
        return Err(CliError::Invalid(format!(
            "no *_L.ppm frames in {}",
            frames.display()
        )));
    }
    let mut seq = RawSequence::new();
    for l in &lefts {
        let name = l.file_name().and_then(|n| n.to_str()).expect("utf-8 name");
        let r = l.with_file_name(name.replace("_L.ppm", "_R.ppm"));
        let left = image::open(l).map_err(image_err(l))?.to_rgb8();
        let right = image::open(&r).map_err(image_err(&r))?.to_rgb8();
        let det = detect_frame(&left, &right, &bands)?;
        seq.push_frame(det.to_array(), left.width(), left.height());
    }
    write_text(out, &encode_raw_csv(&seq))?;
    Ok(lefts.len())
}

pub fn reconstruct(cfg: &Config, input: &Path, out: &Path, trace: Option<&Path>) -> Result<usize> {
    let rig = rig(cfg)?;
    if let Some(t) = trace.filter(|_| input.is_dir()) {
        create_dir(t)?;
    }
    map_files(input, out, |src, dst| {
        let seq = decode_raw_csv(&read_text(src)?).map_err(data_err(src))?;
        let (traj, report) = derive_tip_tail(&seq, &rig);
        if report.is_empty_output() {
            return Err(CliError::Invalid(format!(
                "{}: no frame has both balls in both views",
                src.display()
            )));
        }
        write_text(dst, &encode_tip_tail_csv(&traj))?;
        if let Some(t) = trace {
            let path = if input.is_dir() {
                t.join(dst.with_extension("pgm").file_name().expect("file"))
            } else {
                t.to_path_buf()
            };
            let img = render_trace_image(&seq, rig.image_width, rig.image_height, TRACE_SIZE)
                .map_err(data_err(src))?;
            save_pnm(&path, &img, PnmSubtype::Graymap(SampleEncoding::Binary))?;
        }
        Ok(())
    })
}

pub fn interpolate(input: &Path, out: &Path, t: usize, tip_only: bool) -> Result<usize> {
    map_files(input, out, |src, dst| {
        let traj = decode_tip_tail_csv(&read_text(src)?).map_err(data_err(src))?;
        let mut resampled = bspline_resample(&traj, t).map_err(data_err(src))?;
        if tip_only {
            resampled = resampled.tip_only();
        }
        write_text(dst, &encode_interpolated_csv(&resampled))
    })
}

fn read_interpolated(path: &Path, t: Option<usize>) -> Result<InterpolatedTrajectory> {
    decode_interpolated_csv(&read_text(path)?, t).map_err(data_err(path))
}

/// Expands each interpolated CSV into grid members named
/// `<stem><suffix>.csv`. With a split, only training samples are expanded.
pub fn augment(cfg: &Config, input: &Path, out: &Path, split: Option<&Path>) -> Result<usize> {
    let grid = augment_grid(cfg)?;
    let files: Vec<PathBuf> = match split {
        Some(sp) => {
            let (manifest, dir) = Manifest::load(input)?;
            let split = DatasetSplit::from_text(&read_text(sp)?)?;
            let mut v = Vec::new();
            for (k, s) in split.signers.iter().enumerate() {
                for &id in &s.train {
                    let e = manifest.genuine(k, id).ok_or_else(|| {
                        CliError::Invalid(format!("split names signer {k} sample {id}, not in manifest"))
                    })?;
                    v.push(dir.join(&e.path));
                }
            }
            v
        }
        None if input.is_dir() => csv_files(input)?,
        None => vec![input.to_path_buf()],
    };
    create_dir(out)?;
    let mut n = 0;
    for src in &files {
        let traj = read_interpolated(src, None)?;
        let stem = src.file_stem().and_then(|s| s.to_str()).expect("utf-8 name");
        for (m, member) in grid
            .members()
            .iter()
            .zip(grid.expand(&traj).map_err(|e| CliError::Invalid(e.to_string()))?)
        {
            write_text(
                &out.join(format!("{stem}{}.csv", m.suffix())),
                &encode_interpolated_csv(&member),
            )?;
            n += 1;
        }
    }
    Ok(n)
}

pub fn split(manifest: &Path, out: &Path, seed: u64) -> Result<DatasetSplit> {
    let (m, _) = Manifest::load(manifest)?;
    let (g, f) = m.counts();
    let split = DatasetSplit::new(&g, &f, seed)?;
    write_text(out, &split.to_text())?;
    Ok(split)
}

struct Loaded {
    train: Vec<Example>,
    validation: Vec<Example>,
    test: Vec<Example>,
    forgeries: Vec<Example>,
    classes: usize,
}

fn load_examples(data: &Path, split_path: &Path, augmented: Option<&Path>, t: usize) -> Result<Loaded> {
    let (manifest, dir) = Manifest::load(data)?;
    let split = DatasetSplit::from_text(&read_text(split_path)?)?;
    let classes = manifest.num_classes();
    if split.signers.len() != classes {
        return Err(CliError::Invalid(format!(
            "split has {} signers, manifest {classes}",
            split.signers.len()
        )));
    }
    let mut l = Loaded {
        train: vec![],
        validation: vec![],
        test: vec![],
        forgeries: vec![],
        classes,
    };
    let unknown = |k: usize, id: usize| CliError::Invalid(format!("signer {k} sample {id} not in manifest"));
    let load = |e: &Entry, label: usize| -> Result<Example> {
        Ok(Example {
            input: read_interpolated(&dir.join(&e.path), Some(t))?,
            label,
        })
    };
    let aug_files = match augmented {
        Some(a) => csv_files(a)?,
        None => vec![],
    };
    for (k, s) in split.signers.iter().enumerate() {
        for &id in &s.train {
            let e = manifest.genuine(k, id).ok_or_else(|| unknown(k, id))?;
            if augmented.is_some() {
                let prefix = format!("{}_a", e.stem());
                let members: Vec<&PathBuf> = aug_files
                    .iter()
                    .filter(|p| {
                        p.file_name()
                            .and_then(|n| n.to_str())
                            .is_some_and(|n| n.starts_with(&prefix))
                    })
                    .collect();
                if members.is_empty() {
                    return Err(CliError::Invalid(format!("no augmented members for {}", e.path)));
                }
                for p in members {
                    l.train.push(Example {
                        input: read_interpolated(p, Some(t))?,
                        label: k,
                    });
                }
            } else {
                l.train.push(load(e, k)?);
            }
        }
        for &id in &s.validation {
            l.validation
                .push(load(manifest.genuine(k, id).ok_or_else(|| unknown(k, id))?, k)?);
        }
        for &id in &s.test {
            l.test
                .push(load(manifest.genuine(k, id).ok_or_else(|| unknown(k, id))?, k)?);
        }
        for &id in &s.forgeries {
            let e = manifest
                .forgery(k, id)
                .ok_or_else(|| CliError::Invalid(format!("forgery {id} of signer {k} not in manifest")))?;
            l.forgeries.push(load(e, k)?);
        }
    }
    Ok(l)
}

pub struct TrainJob<'a> {
    pub data: &'a Path,
    pub split: &'a Path,
    pub augmented: Option<&'a Path>,
    pub variant: Variant,
    pub t: usize,
    pub out: &'a Path,
}

pub fn train(job: &TrainJob, config: &TrainConfig) -> Result<TrainedModel> {
    let data = load_examples(job.data, job.split, job.augmented, job.t)?;
    let model = build_model(ModelSpec::new(job.variant, job.t, data.classes), config.seed)?;
    eprintln!(
        "training {} on {} samples ({} validation), {} parameters",
        job.variant,
        data.train.len(),
        data.validation.len(),
        model.network.parameter_count()
    );
    let trained = train_with_progress(model, &data.train, &data.validation, config, |r| {
        eprintln!(
            "epoch {:>3}  loss {:.6}  val_accuracy {:.4}",
            r.epoch, r.train_loss, r.val_accuracy
        )
    })?;
    create_dir(job.out)?;
    let ckpt = job.out.join("model.ckpt");
    let mut file = fs::File::create(&ckpt).map_err(io_err(&ckpt))?;
    write_checkpoint(&mut file, &trained.to_checkpoint())?;
    write_text(&job.out.join("history.csv"), &trained.history_csv())?;
    Ok(trained)
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let mut file = fs::File::open(path).map_err(io_err(path))?;
    Ok(TrainedModel::from_checkpoint(&read_checkpoint(&mut file)?)?)
}

pub fn evaluate(model: &Path, data: &Path, split: &Path, out: &Path) -> Result<VerificationReport> {
    let model = load_model(model)?;
    let loaded = load_examples(data, split, None, model.spec().t)?;
    if loaded.classes != model.spec().num_classes {
        return Err(CliError::Invalid(format!(
            "model has {} classes, dataset {}",
            model.spec().num_classes,
            loaded.classes
        )));
    }
    let report = VerificationReport::evaluate(&model, &loaded.test, &loaded.forgeries)?;
    create_dir(out)?;
    write_text(&out.join("report.txt"), &report.to_text())?;
    write_text(&out.join("roc.svg"), &report.to_svg())?;
    Ok(report)
}

pub fn roc(report: &Path, out: &Path) -> Result<()> {
    let r = VerificationReport::from_text(&read_text(report)?)?;
    write_text(out, &r.to_svg())
}

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub fn run_gradcheck(seed: u64) -> Result<()> {
    let results = gradcheck::run_suite(seed)?;
    let mut failed = Vec::new();
    for r in &results {
        let ok = r.max_rel_error < GRADCHECK_TOLERANCE;
        println!(
            "{:<28} max_rel_error {:.3e}  ({} entries)  {}",
            r.name,
            r.max_rel_error,
            r.checked,
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failed.push(r.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::GradCheck(failed.join(", ")))
    }
}

pub fn default_t(cfg: &Config, flag: Option<usize>) -> Result<usize> {
    cfg.pick(flag, "t", DEFAULT_LENGTH)
}
