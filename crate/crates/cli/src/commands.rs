use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hosdf::autodiff::{AutodiffError, Checkpoint};
use hosdf::meshops::{export_obj, MeshError};
use hosdf::metrics::{report_schema, validate_schema, MetricsReport, TABLE_COLUMNS};
use hosdf::scenegen::{generate_dataset, read_dataset, read_manifest, read_sample, write_dataset, DatasetManifest, SceneError};
use hosdf::training::{evaluate, reconstruct, train as fit, Model, ModelVariant, RunConfig, TrainError};
use hosdf::Exec;
use serde_json::json;

use crate::{AblateArgs, EvalArgs, GenArgs, ReconArgs, TrainArgs};

/// A command failure and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or configuration (exit 1).
    Usage(String),
    /// Missing, corrupt or incompatible inputs and I/O errors (exit 2).
    Data(String),
    /// Divergence or failed extraction (exit 3).
    Numeric(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => Failure::Usage(e.to_string()),
            TrainError::Diverged { .. } | TrainError::Autodiff(_) => Failure::Numeric(e.to_string()),
            TrainError::Points { .. } | TrainError::Checkpoint(_) | TrainError::Io(_) => Failure::Data(e.to_string()),
        }
    }
}

impl From<SceneError> for Failure {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn ckpt_err(path: &Path, e: AutodiffError) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn mesh_err(e: MeshError) -> Failure {
    Failure::Data(e.to_string())
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes") + "\n"
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    let Some(path) = path else { return Ok(RunConfig::default()) };
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    RunConfig::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

pub fn exec_for(workers: Option<usize>) -> Result<Exec, Failure> {
    match workers {
        Some(0) => Err(Failure::Usage("--workers must be at least 1".into())),
        Some(1) => Ok(Exec::Serial),
        _ => Ok(Exec::available()),
    }
}

/// Run `f` on a pool of the requested size.
#[cfg(feature = "parallel")]
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match workers {
        Some(n) if n > 1 => rayon::ThreadPoolBuilder::new().num_threads(n).build().expect("thread pool").install(f),
        _ => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<T: Send>(_workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    f()
}

/// Write the effective configuration as `name` inside `dir`.
fn echo_config(dir: &Path, name: &str, cfg: &RunConfig) -> Result<(), Failure> {
    write_file(&dir.join(name), cfg.to_text())
}

fn parse_variant(name: &str) -> Result<ModelVariant, Failure> {
    name.parse().map_err(Failure::Usage)
}

/// Prepare an output directory for a dataset: empty or a previous dataset,
/// whose sample records are cleared.
fn prepare_dataset_dir(out: &Path) -> Result<(), Failure> {
    if out.exists() {
        let entries: Vec<PathBuf> = fs::read_dir(out).map_err(io_err(out))?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        if !entries.is_empty() && !out.join("manifest.json").exists() {
            return Err(Failure::Data(format!("{} is not empty and holds no dataset", out.display())));
        }
        let samples = out.join("samples");
        if samples.is_dir() {
            for e in fs::read_dir(&samples).map_err(io_err(&samples))?.filter_map(Result::ok) {
                let p = e.path();
                if p.extension().is_some_and(|x| x == "asdf") {
                    fs::remove_file(&p).map_err(io_err(&p))?;
                }
            }
        }
    }
    create_dir(out)
}

pub fn gen(mut cfg: RunConfig, a: &GenArgs, exec: Exec) -> Result<(), Failure> {
    if a.n == 0 {
        return Err(Failure::Usage("--n must be at least 1".into()));
    }
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    let seed = cfg.train.seed;
    let (manifest, samples) = generate_dataset(a.n, seed, &cfg.gen, exec)?;
    prepare_dataset_dir(&a.out)?;
    write_dataset(&a.out, &manifest, &samples)?;
    echo_config(&a.out, "config.txt", &cfg)?;
    println!(
        "wrote {} samples ({} test) to {}, scale {:.6}",
        manifest.sample_count,
        manifest.test_count,
        a.out.display(),
        manifest.scale
    );
    Ok(())
}

/// Refuse checkpoints whose heads or input size do not fit the dataset.
fn check_compatible(model: &Model, manifest: &DatasetManifest) -> Result<(), Failure> {
    if model.grid.n != manifest.heatmap.n {
        return Err(Failure::Data(format!(
            "checkpoint heatmap N = {} but dataset heatmap N = {}",
            model.grid.n, manifest.heatmap.n
        )));
    }
    if model.grid.half_width != manifest.heatmap.half_width {
        return Err(Failure::Data(format!(
            "checkpoint heatmap half width = {} but dataset half width = {}",
            model.grid.half_width, manifest.heatmap.half_width
        )));
    }
    if model.render_size != manifest.generation.render_size {
        return Err(Failure::Data(format!(
            "checkpoint render size = {} but dataset render size = {}",
            model.render_size, manifest.generation.render_size
        )));
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<Model, Failure> {
    let ck = Checkpoint::load(path).map_err(|e| ckpt_err(path, e))?;
    Model::from_checkpoint(&ck).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

/// Train `variant` and write checkpoint, loss history and config into `out`.
fn train_into(
    cfg: &RunConfig,
    manifest: &DatasetManifest,
    samples: &[hosdf::scenegen::SceneSample],
    out: &Path,
    exec: Exec,
) -> Result<Model, Failure> {
    let train_set = &samples[manifest.train_ids()];
    if cfg.variant.has_object() {
        if let Some(s) = train_set.iter().find(|s| s.object_points.is_empty()) {
            return Err(Failure::Data(format!("variant {} needs object labels but sample {} has none", cfg.variant, s.id)));
        }
    }
    create_dir(out)?;
    let hist_path = out.join("history.jsonl");
    let mut hist = std::io::BufWriter::new(fs::File::create(&hist_path).map_err(io_err(&hist_path))?);
    let outcome = fit(manifest, train_set, cfg.variant, &cfg.train, exec, Some(&mut hist))?;
    hist.flush().map_err(io_err(&hist_path))?;
    let extra = [
        ("dataset_seed".to_string(), manifest.seed.to_string()),
        ("dataset_scale".to_string(), format!("{:?}", manifest.scale)),
        ("steps".to_string(), outcome.steps.to_string()),
    ];
    let ck_path = out.join("model.ckpt");
    outcome.model.to_checkpoint(&extra).save(&ck_path).map_err(|e| ckpt_err(&ck_path, e))?;
    echo_config(out, "config.txt", cfg)?;
    if let Some(last) = outcome.history.last() {
        println!("variant {} trained {} steps, final loss {:.6e}", cfg.variant, outcome.steps, last.loss.total);
    }
    Ok(outcome.model)
}

pub fn train(mut cfg: RunConfig, a: &TrainArgs, exec: Exec) -> Result<(), Failure> {
    if let Some(v) = &a.variant {
        cfg.variant = parse_variant(v)?;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    cfg.validate()?;
    let (manifest, samples) = read_dataset(&a.data)?;
    train_into(&cfg, &manifest, &samples, &a.out, exec).map(|_| ())
}

pub fn recon(mut cfg: RunConfig, a: &ReconArgs, exec: Exec) -> Result<(), Failure> {
    if let Some(r) = a.res {
        cfg.eval.res = r;
    }
    cfg.validate()?;
    let model = load_model(&a.ckpt)?;
    cfg.variant = model.variant;
    let manifest = read_manifest(&a.data)?;
    check_compatible(&model, &manifest)?;
    if a.sample >= manifest.sample_count {
        return Err(Failure::Data(format!("sample {} out of range, dataset has {}", a.sample, manifest.sample_count)));
    }
    let sample = read_sample(&a.data, a.sample)?;
    let template = manifest.normalized_template();
    let r = reconstruct(&model, &sample, &template, cfg.eval.res, exec)?;
    create_dir(&a.out)?;
    let mut ok = 0;
    let mut branch = |name: &str, mesh: &Result<hosdf::meshops::TriMesh, MeshError>| -> Result<serde_json::Value, Failure> {
        Ok(match mesh {
            Ok(m) => {
                let file = format!("{name}.obj");
                export_obj(m, &a.out.join(&file)).map_err(mesh_err)?;
                ok += 1;
                json!({"file": file, "vertices": m.vertices.len(), "triangles": m.triangles.len()})
            }
            Err(e) => {
                eprintln!("{name}: {e}");
                json!({"error": e.to_string()})
            }
        })
    };
    let hand = branch("hand", &r.hand)?;
    let object = match &r.object {
        Some(o) => branch("object", o)?,
        None => serde_json::Value::Null,
    };
    let p = &r.prediction;
    let sidecar = json!({
        "sample": a.sample,
        "variant": model.variant.name(),
        "res": cfg.eval.res,
        "bounds": [-1.0, 1.0],
        "theta": p.hand.map(|h| h.theta.to_vec()),
        "beta": p.hand.map(|h| h.beta.to_vec()),
        "joints": p.joints,
        "t_o": p.t_o,
        "hand_rotation": p.hand_rotation,
        "object_translation": p.object_translation,
        "hand": hand,
        "object": object,
    });
    write_file(&a.out.join("recon.json"), to_json(&sidecar))?;
    echo_config(&a.out, "config.txt", &cfg)?;
    if ok == 0 {
        return Err(Failure::Numeric("no mesh could be extracted".into()));
    }
    println!("wrote {ok} mesh(es) to {}", a.out.display());
    Ok(())
}

fn report_json(report: &MetricsReport) -> Result<String, Failure> {
    let value = serde_json::to_value(report).expect("report serializes");
    validate_schema(&value, &report_schema()).map_err(|e| Failure::Numeric(format!("report does not match schema: {e}")))?;
    Ok(to_json(&value))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn eval(mut cfg: RunConfig, a: &EvalArgs, exec: Exec) -> Result<(), Failure> {
    cfg.validate()?;
    let model = load_model(&a.ckpt)?;
    cfg.variant = model.variant;
    let (manifest, samples) = read_dataset(&a.data)?;
    check_compatible(&model, &manifest)?;
    let test = &samples[manifest.test_ids()];
    if test.is_empty() {
        return Err(Failure::Data("dataset has no test split".into()));
    }
    let report = evaluate(&model, &manifest, test, &cfg.eval, exec)?;
    if let Some(dir) = a.report.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_file(&a.report, report_json(&report)?)?;
    write_file(&sibling(&a.report, "schema.json"), to_json(&report_schema()))?;
    write_file(&sibling(&a.report, "config.txt"), cfg.to_text())?;
    for s in report.samples.iter().filter(|s| !s.failures.is_empty()) {
        eprintln!("sample {}: {}", s.id, s.failures.join("; "));
    }
    let x = &report.excluded;
    if x.h_se + x.o_se + x.h_je + x.o_te + x.interaction > 0 {
        eprintln!(
            "excluded: h_se {}, o_se {}, h_je {}, o_te {}, interaction {} of {}",
            x.h_se,
            x.o_se,
            x.h_je,
            x.o_te,
            x.interaction,
            report.samples.len()
        );
    }
    print!("{}", report.table());
    Ok(())
}

pub fn ablate(cfg: RunConfig, a: &AblateArgs, exec: Exec) -> Result<(), Failure> {
    cfg.validate()?;
    let variants = a.variants.iter().map(|v| parse_variant(v)).collect::<Result<Vec<_>, _>>()?;
    if variants.is_empty() || a.seeds.is_empty() {
        return Err(Failure::Usage("need at least one variant and one seed".into()));
    }
    let (manifest, samples) = read_dataset(&a.data)?;
    let test = &samples[manifest.test_ids()];
    if test.is_empty() {
        return Err(Failure::Data("dataset has no test split".into()));
    }
    create_dir(&a.out)?;
    echo_config(&a.out, "config.txt", &cfg)?;
    let mut runs = Vec::new();
    let mut table = format!("{:>8} {:>6} ", "variant", "seed");
    table += &TABLE_COLUMNS.iter().map(|c| format!("{c:>10}")).collect::<Vec<_>>().join(" ");
    table.push('\n');
    for v in &variants {
        for &seed in &a.seeds {
            let mut run_cfg = cfg.clone();
            run_cfg.variant = *v;
            run_cfg.train.seed = seed;
            let dir = a.out.join(format!("{}-s{seed}", v.name()));
            let model = train_into(&run_cfg, &manifest, &samples, &dir, exec)?;
            let report = evaluate(&model, &manifest, test, &run_cfg.eval, exec)?;
            write_file(&dir.join("report.json"), report_json(&report)?)?;
            let g = &report.aggregate;
            let cells = [g.h_se, g.h_ve, g.o_se, g.h_je, g.o_te, g.c_r, g.p_d, g.i_v];
            table += &format!("{:>8} {seed:>6} ", v.name());
            table += &cells.iter().map(|c| c.map_or(format!("{:>10}", "-"), |x| format!("{x:>10.4}"))).collect::<Vec<_>>().join(" ");
            table.push('\n');
            runs.push(json!({"variant": v.name(), "seed": seed, "aggregate": report.aggregate, "excluded": report.excluded}));
        }
    }
    write_file(&a.out.join("ablation.json"), to_json(&json!({ "runs": runs })))?;
    print!("{table}");
    Ok(())
}
