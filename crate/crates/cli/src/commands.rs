use std::path::Path;

use anyhow::{Context, Result};
use defocus_core::apps::{self, FusionParams, GainParams, SdofParams};
use defocus_core::blurmap::{self, BlurMap};
use defocus_core::classifier::{self, BlurPredictor, ClassifierModel, FilePredictor, TrainConfig};
use defocus_core::dataset::{self, DatasetSplit, GenerateConfig};
use defocus_core::imgcore::{self, LensConfig};
use defocus_core::refine::{self, GuidedFilterParams};
use defocus_core::{corpus, Image};

use crate::args::*;
use crate::output::Run;
use crate::UsageError;

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Dataset(DatasetCommand::Generate(a)) => dataset_generate(&a),
        Command::Dataset(DatasetCommand::Corpus(a)) => dataset_corpus(&a),
        Command::Train(a) => train(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Map(a) => map(&a),
        Command::ClassicalMap(a) => classical_map(&a),
        Command::Refine(a) => refine_cmd(&a),
        Command::Binary(a) => binary(&a),
        Command::Enhance(a) => enhance(&a),
        Command::Sdof(a) => sdof(&a),
        Command::Fuse(a) => fuse(&a),
        Command::Coc(a) => coc(&a),
        Command::PredictRuntime(a) => predict_runtime(&a),
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().unwrap_or_default().to_string_lossy().into_owned()
}

fn dataset_generate(a: &GenerateArgs) -> Result<()> {
    let mut run = Run::new("dataset generate", a)?;
    let cfg = GenerateConfig {
        threshold: a.threshold,
        seed: a.seed,
        ratios: [a.ratios[0], a.ratios[1], a.ratios[2]],
        noise_std: a.noise_std,
    };
    let images = match &a.input {
        Some(dir) => dataset::list_images(dir)?
            .iter()
            .map(|p| Ok((file_name(p), run.read_image(p)?)))
            .collect::<Result<Vec<_>>>()?,
        None => corpus::desk_corpus(a.seed),
    };
    if images.is_empty() {
        return Err(UsageError(format!("invalid --input: no .png or .pgm images in {:?}", a.input)).into());
    }
    let (split, manifest) = dataset::generate(&images, &cfg)?;
    for (name, records) in split.parts() {
        run.write(&a.output.join(format!("{name}.bin")), &dataset::encode_records(records))?;
    }
    run.write_json(&a.output.join("manifest.json"), &manifest)?;
    run.result("source_images", images.len())?;
    run.result("sharp_patches", manifest.sharp_patches)?;
    run.result("records", [split.train.len(), split.validation.len(), split.test.len()])?;
    run.finish()
}

fn dataset_corpus(a: &CorpusArgs) -> Result<()> {
    let mut run = Run::new("dataset corpus", a)?;
    for (name, img) in corpus::desk_corpus(a.seed).into_iter().take(a.count as usize) {
        run.write_image(&a.output.join(name), &img)?;
    }
    run.finish()
}

fn load_dataset(run: &mut Run, dir: &Path) -> Result<DatasetSplit> {
    for name in ["manifest.json", "train.bin", "validation.bin", "test.bin"] {
        run.read(&dir.join(name))?;
    }
    let (split, _) = dataset::read_dataset(dir).with_context(|| format!("reading dataset {}", dir.display()))?;
    Ok(split)
}

fn load_model(run: &mut Run, path: &Path) -> Result<ClassifierModel> {
    let bytes = run.read(path)?;
    ClassifierModel::from_json(&bytes).with_context(|| format!("loading model {}", path.display()))
}

fn train(a: &TrainArgs) -> Result<()> {
    let mut run = Run::new("train", a)?;
    let split = load_dataset(&mut run, &a.dataset)?;
    let cfg = TrainConfig {
        batch_size: a.batch_size,
        learning_rate: a.lr,
        beta1: a.beta1,
        beta2: a.beta2,
        epsilon: a.adam_eps,
        epochs: a.epochs,
        seed: a.seed,
        init: a.init,
    };
    let (model, history) = classifier::train(&split, &cfg)?;
    run.write(&a.out, &model.to_json()?)?;
    if let Some(p) = &a.history {
        run.write_json(p, &history)?;
    }
    run.result("initial_loss", history.initial_loss)?;
    if let Some(last) = history.epochs.last() {
        run.result("final", last)?;
    }
    run.finish()
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let mut run = Run::new("evaluate", a)?;
    let split = load_dataset(&mut run, &a.dataset)?;
    let model = load_model(&mut run, &a.model)?;
    let records = match a.split.as_str() {
        "train" => &split.train,
        "validation" => &split.validation,
        _ => &split.test,
    };
    let report = classifier::evaluate(&model, records)?;
    if let Some(p) = &a.report {
        run.write_json(p, &report)?;
    }
    run.result("total", report.total)?;
    run.result("accuracy", report.accuracy)?;
    run.result("within_1", report.accuracy_within(1))?;
    run.result("within_2", report.accuracy_within(2))?;
    run.finish()
}

/// Patch predictor for one input image.
fn predictor(run: &mut Run, model: Option<&Path>, predictions: Option<&Path>, input: &Path) -> Result<Box<dyn BlurPredictor>> {
    match (model, predictions) {
        (Some(m), _) => Ok(Box::new(load_model(run, m)?)),
        (None, Some(p)) => {
            let bytes = run.read(p)?;
            let file = FilePredictor::from_reader(bytes.as_slice(), &file_name(input))?;
            if file.is_empty() {
                return Err(UsageError(format!(
                    "invalid --predictions: no rows for source id {:?}",
                    file_name(input)
                ))
                .into());
            }
            Ok(Box::new(file))
        }
        (None, None) => Err(UsageError("one of --model or --predictions is required".into()).into()),
    }
}

fn map(a: &MapArgs) -> Result<()> {
    let mut run = Run::new("map", a)?;
    let img = run.read_image(&a.input)?;
    let backend = predictor(&mut run, a.predictor.model.as_deref(), a.predictor.predictions.as_deref(), &a.input)?;
    let m = blurmap::estimate_map(&img, backend.as_ref(), a.step as usize)?;
    run.write_map(&a.out, &m, None)?;
    let (lo, hi) = m.min_max();
    run.result("min", lo)?;
    run.result("max", hi)?;
    run.result("mean", m.mean())?;
    run.result("backend", &m.backend_id)?;
    run.finish()
}

fn classical_map(a: &ClassicalArgs) -> Result<()> {
    let mut run = Run::new("classical-map", a)?;
    let img = run.read_image(&a.input)?;
    let raw = blurmap::classical_map(&img, a.method, a.window as usize)?;
    let (lo, hi) = raw.min_max();
    let scaled = if hi > 0.0 { raw.map(|v| v / hi) } else { raw };
    run.write_image(&a.out, &scaled)?;
    run.result("min", lo)?;
    run.result("max", hi)?;
    run.finish()
}

fn guided_params(r: usize, eps: f64, iters: usize) -> Result<GuidedFilterParams> {
    let p = GuidedFilterParams {
        radius: r,
        epsilon: eps,
        iterations: iters,
    };
    p.validate()?;
    Ok(p)
}

fn refine_cmd(a: &RefineArgs) -> Result<()> {
    let mut run = Run::new("refine", a)?.with_debug_dir(a.debug_dir.as_deref())?;
    let raw = run.read_map(&a.map)?;
    let img = run.read_image(&a.image)?;
    let params = guided_params(a.r, a.eps, a.iters)?;
    raw.require_size(&img)?;
    let guidance = refine::make_guidance(&img, &params)?;
    run.debug_image("guidance.pgm16", &guidance)?;
    let refined = refine::refine_with_guidance(&raw, &guidance, &params, a.passes)?;
    run.write_map(&a.out, &refined.map, Some(refined.guidance_sha256.clone()))?;
    run.result("guidance_sha256", &refined.guidance_sha256)?;
    run.result("mean_before", raw.mean())?;
    run.result("mean_after", refined.map.mean())?;
    run.finish()
}

fn binary(a: &BinaryArgs) -> Result<()> {
    let mut run = Run::new("binary", a)?;
    let m = run.read_map(&a.map)?;
    let mask = refine::binary_map(&m, a.lambda);
    run.write_image(&a.out, &mask)?;
    run.result("in_focus_fraction", 1.0 - mask.mean())?;
    run.finish()
}

/// Refined map of `img`: estimated and refined, or read from `map`.
#[allow(clippy::too_many_arguments)]
fn app_map(
    run: &mut Run,
    img: &Image,
    input: &Path,
    model: Option<&Path>,
    predictions: Option<&Path>,
    map: Option<&Path>,
    step: u64,
    knobs: &RefineKnobs,
    tag: &str,
) -> Result<BlurMap> {
    if let Some(p) = map {
        let m = run.read_map(p)?;
        m.require_size(img)?;
        return Ok(m);
    }
    let params = guided_params(knobs.refine_r, knobs.refine_eps, knobs.refine_iters)?;
    let backend = predictor(run, model, predictions, input)?;
    let raw = blurmap::estimate_map(img, backend.as_ref(), step as usize)?;
    run.debug_map(&format!("{tag}map_raw.pgm16"), &raw, None)?;
    let guidance = refine::make_guidance(img, &params)?;
    run.debug_image(&format!("{tag}guidance.pgm16"), &guidance)?;
    let refined = refine::refine_with_guidance(&raw, &guidance, &params, knobs.refine_passes)?;
    run.debug_map(&format!("{tag}map_refined.pgm16"), &refined.map, Some(refined.guidance_sha256))?;
    Ok(refined.map)
}

fn enhance(a: &EnhanceArgs) -> Result<()> {
    let mut run = Run::new("enhance", a)?.with_debug_dir(a.debug_dir.as_deref())?;
    let img = run.read_image(&a.input)?;
    let params = GainParams {
        alpha1: a.a1,
        beta1: a.b1,
        alpha2: a.a2,
        beta2: a.b2,
        lambda_max: a.lmax,
    };
    params.validate()?;
    let s = &a.source;
    let m = app_map(&mut run, &img, &a.input, s.model.as_deref(), s.predictions.as_deref(), s.map.as_deref(), a.step, &a.refine, "")?;
    let gain = apps::gain_map(&m, &params)?;
    run.debug_image("gain.pgm16", &gain.map(|g| g / params.lambda_max))?;
    let out = apps::unsharp_mask(&img, apps::Gain::Map(&gain), a.sigma_um)?;
    run.write_image(&a.out, &out)?;
    run.result("mean_gain", gain.mean())?;
    run.finish()
}

fn sdof(a: &SdofArgs) -> Result<()> {
    let mut run = Run::new("sdof", a)?.with_debug_dir(a.debug_dir.as_deref())?;
    let params = SdofParams {
        c0: a.c0,
        c1: a.c1,
        w0: a.w0,
        w1: a.w1,
        smooth: guided_params(a.smooth_r, a.smooth_eps, a.smooth_iters)?,
        sharpen_lambda: a.sharpen,
        sigma_um: a.sigma_um,
    };
    // anchors first: a bad curve should fail before any heavy work
    let (sigma, gamma) = apps::solve_sdof_weights(&params)?;
    let img = run.read_image(&a.input)?;
    let s = &a.source;
    let m = app_map(&mut run, &img, &a.input, s.model.as_deref(), s.predictions.as_deref(), s.map.as_deref(), a.step, &a.refine, "")?;
    let out = apps::sdof_detailed(&img, &m, &params)?;
    run.debug_image("weight.pgm16", &out.weight)?;
    run.debug_image("sharp.png", &out.sharp)?;
    run.debug_image("smooth.png", &out.smooth)?;
    run.write_image(&a.out, &out.result)?;
    run.result("sigma", sigma)?;
    run.result("gamma", gamma)?;
    run.finish()
}

fn fuse(a: &FuseArgs) -> Result<()> {
    let mut run = Run::new("fuse", a)?.with_debug_dir(a.debug_dir.as_deref())?;
    let params = FusionParams {
        radius: a.r,
        epsilon: a.eps,
        delta: a.delta,
        step: a.step as usize,
    };
    params.validate()?;
    if let Some(maps) = &a.maps {
        if maps.len() != a.inputs.len() {
            return Err(UsageError(format!(
                "invalid --maps: {} maps for {} inputs",
                maps.len(),
                a.inputs.len()
            ))
            .into());
        }
    }
    let imgs = a.inputs.iter().map(|p| run.read_image(p)).collect::<Result<Vec<_>>>()?;
    let mut maps = Vec::with_capacity(imgs.len());
    for (n, (img, path)) in imgs.iter().zip(&a.inputs).enumerate() {
        let given = a.maps.as_ref().map(|m| m[n].as_path());
        let tag = format!("{n}_");
        maps.push(app_map(&mut run, img, path, a.model.as_deref(), a.predictions.as_deref(), given, a.step, &a.refine, &tag)?);
    }
    let img_refs: Vec<&Image> = imgs.iter().collect();
    let map_refs: Vec<&BlurMap> = maps.iter().collect();
    let out = apps::fuse_detailed(&img_refs, &map_refs, &params)?;
    for (n, (d, w)) in out.decisions.iter().zip(&out.weights).enumerate() {
        run.debug_image(&format!("{n}_decision.pgm"), d)?;
        run.debug_image(&format!("{n}_weight.pgm16"), w)?;
    }
    run.write_image(&a.out, &out.result)?;
    let shares: Vec<f64> = out.weights.iter().map(Image::mean).collect();
    run.result("mean_weights", shares)?;
    run.finish()
}

fn coc(a: &CocArgs) -> Result<()> {
    let mut run = Run::new("coc", a)?;
    let d = imgcore::coc_diameter(&LensConfig {
        focal_length: a.focal_length,
        aperture_diameter: a.aperture,
        focus_distance: a.focus_distance,
        object_distance: a.object_distance,
    })?;
    run.result("diameter_mm", d)?;
    run.finish()
}

fn predict_runtime(a: &RuntimeArgs) -> Result<()> {
    let mut run = Run::new("predict-runtime", a)?;
    if !(a.seconds_per_patch >= 0.0 && a.seconds_per_patch.is_finite()) {
        return Err(UsageError("invalid --seconds-per-patch: must be a non-negative number".into()).into());
    }
    let pixels = match (a.pixels, a.width, a.height) {
        (Some(n), _, _) => n,
        (None, Some(w), Some(h)) => w * h,
        _ => return Err(UsageError("give --pixels or both --width and --height".into()).into()),
    };
    run.result("pixels", pixels)?;
    run.result("seconds", blurmap::predict_runtime(a.seconds_per_patch, pixels, a.step))?;
    run.finish()
}
