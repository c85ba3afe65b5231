use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;

use flowpath_core::analysis::{average_distance, coverage_curve, distance_matrix, rank_correlation};
use flowpath_core::data::{augment_noise, load_mnist, Dataset, NoiseConfig, Split};
use flowpath_core::model_io::{persist_model_with, restore_model};
use flowpath_core::pathway::{extract_pathways, Normalization, PathwayConfig, PathwaySet};
use flowpath_core::pruning::{
    node_importance, per_layer_schedule, prune_sweep as sweep, prune_with, random_prune_mask, PruneMode, SweepPoint,
};
use flowpath_core::train::{evaluate, train_sgd_observed, TrainConfig};
use flowpath_core::{ArchSpec, ConfusionMatrix, DistanceMatrix, NetworkDescriptor};

use crate::artifacts::RunDir;
use crate::{Common, EvalSet, PathwayArgs};

pub const MODEL_FILE: &str = "model.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const PATHWAYS_FILE: &str = "pathways.csv";
pub const DISTANCES_FILE: &str = "distances.csv";
pub const AVERAGES_FILE: &str = "averages.csv";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const EVALUATION_FILE: &str = "evaluation.json";
pub const COVERAGE_FILE: &str = "coverage.json";
pub const COVERAGE_CSV: &str = "coverage.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const RANDOM_SWEEP_FILE: &str = "sweep_random.csv";

// every random stream is derived from the one --seed flag
pub fn init_seed(seed: u64) -> u64 {
    seed
}

pub fn shuffle_seed(seed: u64) -> u64 {
    seed.wrapping_add(1)
}

pub fn noise_seed(seed: u64) -> u64 {
    seed.wrapping_add(2)
}

pub fn arch_from_flag(arch: &str) -> anyhow::Result<ArchSpec> {
    Ok(match arch {
        "mlp-ref" => ArchSpec::mlp_ref(),
        "cnn-ref" => ArchSpec::cnn_ref(),
        path => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("--arch '{path}' is neither mlp-ref, cnn-ref nor a readable spec file"))?;
            ArchSpec::from_json(&text)?
        }
    })
}

fn input_or_default(run: &RunDir, given: Option<PathBuf>, name: &str, producer: &str) -> anyhow::Result<PathBuf> {
    let path = given.unwrap_or_else(|| run.path(name));
    if !path.exists() {
        bail!("{} not found; run `flowpath {producer}` first or pass its path", path.display());
    }
    Ok(path)
}

fn load_model(run: &mut RunDir, given: Option<PathBuf>) -> anyhow::Result<NetworkDescriptor> {
    let path = input_or_default(run, given, MODEL_FILE, "train")?;
    run.record_input("model", &path)?;
    let bytes = fs::read(&path)?;
    restore_model(&bytes).with_context(|| format!("loading {}", path.display()))
}

fn limited(ds: Dataset, limit: Option<usize>) -> Dataset {
    match limit {
        Some(n) => ds.take(n),
        None => ds,
    }
}

fn load_split(run: &mut RunDir, dir: &Path, split: Split) -> anyhow::Result<Dataset> {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    for kind in ["images-idx3", "labels-idx1"] {
        let file = dir.join(format!("{prefix}-{kind}-ubyte"));
        run.record_input(&format!("{prefix}-{kind}"), &file)?;
    }
    load_mnist(dir, split).with_context(|| format!("loading MNIST from {}", dir.display()))
}

pub fn pathway_config(args: &PathwayArgs) -> anyhow::Result<PathwayConfig> {
    let cfg = PathwayConfig {
        pool_coefficient: args.k_coeff,
        normalization: Normalization::parse(&args.normalize)?,
        include_input: args.include_input,
        layers: args.layers.clone(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn record_pathway_config(run: &mut RunDir, cfg: &PathwayConfig) {
    run.set("k_coeff", cfg.pool_coefficient);
    run.set("normalize", cfg.normalization.as_str());
    run.set("include_input", cfg.include_input);
    if let Some(layers) = &cfg.layers {
        run.set("layers", join(layers));
    }
}

fn join(values: &[usize]) -> String {
    values.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

#[allow(clippy::too_many_arguments)]
pub fn train(
    common: &Common,
    arch: &str,
    data_dir: &Path,
    epochs: Option<usize>,
    lr: f64,
    momentum: f64,
    batch_size: usize,
    train_limit: Option<usize>,
    test_limit: Option<usize>,
) -> anyhow::Result<()> {
    let spec = arch_from_flag(arch)?;
    let mut run = RunDir::open(&common.out, "train", common.seed)?;
    let net = spec.build(init_seed(common.seed))?;
    let epochs = epochs.unwrap_or(if net.is_dense_only() { 20 } else { 10 });
    let cfg = TrainConfig { learning_rate: lr, momentum, batch_size, epochs, rng_seed: shuffle_seed(common.seed) };
    run.set("arch", arch);
    run.set("epochs", epochs);
    run.set("lr", lr);
    run.set("momentum", momentum);
    run.set("batch_size", batch_size);
    if let Some(n) = train_limit {
        run.set("train_limit", n);
    }
    if let Some(n) = test_limit {
        run.set("test_limit", n);
    }
    if Path::new(arch).exists() {
        run.record_input("arch", Path::new(arch))?;
    }
    let train_set = limited(load_split(&mut run, data_dir, Split::Train)?, train_limit);
    let test_set = limited(load_split(&mut run, data_dir, Split::Test)?, test_limit);

    let (trained, history) = train_sgd_observed(&net, &train_set, &cfg, Some(&test_set), |r| {
        eprintln!(
            "epoch {:>3}  loss {:.5}  train {:.4}  test {:.4}",
            r.epoch,
            r.loss,
            r.train_acc,
            r.test_acc.unwrap_or(f64::NAN)
        );
    })?;
    let mut meta = run.config().clone();
    meta.insert("seed".into(), common.seed.to_string());
    run.write(MODEL_FILE, &persist_model_with(&trained, &meta))?;
    run.write_csv(HISTORY_FILE, |buf| history.write_csv(buf))?;
    run.finish()
}

pub fn extract(common: &Common, model: Option<PathBuf>, args: &PathwayArgs) -> anyhow::Result<()> {
    let mut run = RunDir::open(&common.out, "extract", common.seed)?;
    let cfg = pathway_config(args)?;
    record_pathway_config(&mut run, &cfg);
    let net = load_model(&mut run, model)?;
    let set = extract_pathways(&net, &cfg)?;
    run.write_csv(PATHWAYS_FILE, |buf| set.write_csv(buf))?;
    run.finish()
}

pub fn distances(common: &Common, pathways: Option<PathBuf>, layers: Option<Vec<usize>>) -> anyhow::Result<()> {
    let mut run = RunDir::open(&common.out, "distances", common.seed)?;
    let path = input_or_default(&run, pathways, PATHWAYS_FILE, "extract")?;
    run.record_input("pathways", &path)?;
    let set = PathwaySet::read_csv(fs::File::open(&path)?).with_context(|| format!("reading {}", path.display()))?;
    let cfg = PathwayConfig { layers, ..Default::default() };
    if let Some(l) = &cfg.layers {
        run.set("layers", join(l));
    }
    let d = distance_matrix(&set, &cfg)?;
    let avg = average_distance(&d)?;
    run.write_csv(DISTANCES_FILE, |buf| d.write_csv(buf))?;
    run.write_csv(AVERAGES_FILE, |buf| write_averages(buf, &avg))?;
    run.finish()
}

pub fn write_averages(buf: &mut Vec<u8>, avg: &[f64]) -> flowpath_core::Result<()> {
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(["class", "average_distance"])?;
    for (i, a) in avg.iter().enumerate() {
        w.write_record(&[i.to_string(), a.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
pub struct EvaluationDoc {
    pub set: String,
    pub sigma: f64,
    pub samples: usize,
    pub accuracy: f64,
    pub errors: u64,
    /// Accuracy on the clean test images, for reference.
    pub clean_test_accuracy: f64,
}

pub fn eval_set(
    train: Option<&Dataset>,
    test: &Dataset,
    set: EvalSet,
    sigma: f64,
    seed: u64,
) -> flowpath_core::Result<Dataset> {
    let noise = NoiseConfig { sigma, rng_seed: noise_seed(seed), keep_original: false };
    match set {
        EvalSet::Test => Ok(test.clone()),
        EvalSet::NoisyTest => augment_noise(test, &noise),
        EvalSet::Noisy70k => augment_noise(&train.expect("train split loaded").concat(test)?, &noise),
    }
}

pub fn confusion(
    common: &Common,
    model: Option<PathBuf>,
    data_dir: &Path,
    set: EvalSet,
    sigma: f64,
    limit: Option<usize>,
) -> anyhow::Result<()> {
    let mut run = RunDir::open(&common.out, "confusion", common.seed)?;
    let set_name = match set {
        EvalSet::Test => "test",
        EvalSet::Noisy70k => "noisy70k",
        EvalSet::NoisyTest => "noisy-test",
    };
    run.set("set", set_name);
    run.set("sigma", sigma);
    if let Some(n) = limit {
        run.set("limit", n);
    }
    let net = load_model(&mut run, model)?;
    let test = load_split(&mut run, data_dir, Split::Test)?;
    let train = if set == EvalSet::Noisy70k { Some(load_split(&mut run, data_dir, Split::Train)?) } else { None };
    let ds = limited(eval_set(train.as_ref(), &test, set, sigma, common.seed)?, limit);
    let eval = evaluate(&net, &ds)?;
    let clean = evaluate(&net, &test)?;
    eprintln!(
        "{set_name}: accuracy {:.4}, {} errors of {}; clean test accuracy {:.4}",
        eval.accuracy,
        eval.confusion.errors(),
        ds.len(),
        clean.accuracy
    );
    run.write_csv(CONFUSION_FILE, |buf| eval.confusion.write_csv(buf))?;
    let doc = EvaluationDoc {
        set: set_name.into(),
        sigma,
        samples: ds.len(),
        accuracy: eval.accuracy,
        errors: eval.confusion.errors(),
        clean_test_accuracy: clean.accuracy,
    };
    run.write_json(EVALUATION_FILE, &doc)?;
    run.finish()
}

#[derive(Serialize)]
pub struct CoverageDoc {
    pub reports: Vec<flowpath_core::CoverageReport>,
    pub correlation: flowpath_core::RankCorrelation,
}

pub fn coverage_doc(d: &DistanceMatrix, c: &ConfusionMatrix) -> flowpath_core::Result<CoverageDoc> {
    Ok(CoverageDoc { reports: coverage_curve(d, c)?, correlation: rank_correlation(d, c)? })
}

pub fn coverage_csv(buf: &mut Vec<u8>, doc: &CoverageDoc) -> flowpath_core::Result<()> {
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(["k", "coverage", "covered", "total", "nearest"])?;
    for r in &doc.reports {
        let nearest: Vec<String> = r.nearest.iter().map(|s| join(s).replace(',', " ")).collect();
        w.write_record(&[
            r.k.to_string(),
            r.fraction.to_string(),
            r.covered.to_string(),
            r.total.to_string(),
            nearest.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn coverage(common: &Common, distances: Option<PathBuf>, confusion: Option<PathBuf>) -> anyhow::Result<()> {
    let mut run = RunDir::open(&common.out, "coverage", common.seed)?;
    let dpath = input_or_default(&run, distances, DISTANCES_FILE, "distances")?;
    let cpath = input_or_default(&run, confusion, CONFUSION_FILE, "confusion")?;
    run.record_input("distances", &dpath)?;
    run.record_input("confusion", &cpath)?;
    let d = DistanceMatrix::read_csv(fs::File::open(&dpath)?)?;
    let c = ConfusionMatrix::read_csv(fs::File::open(&cpath)?)?;
    let doc = coverage_doc(&d, &c)?;
    for r in &doc.reports {
        eprintln!("k={}  coverage {:.4}  ({} of {})", r.k, r.fraction, r.covered, r.total);
    }
    run.write_json(COVERAGE_FILE, &doc)?;
    run.write_csv(COVERAGE_CSV, |buf| coverage_csv(buf, &doc))?;
    run.finish()
}

#[allow(clippy::too_many_arguments)]
pub fn prune_sweep(
    common: &Common,
    model: Option<PathBuf>,
    data_dir: &Path,
    args: &PathwayArgs,
    cuts: &[usize],
    joint: bool,
    mask: bool,
    random_control: usize,
    test_limit: Option<usize>,
) -> anyhow::Result<()> {
    let mut run = RunDir::open(&common.out, "prune-sweep", common.seed)?;
    // --layers picks the swept layers here; importance always uses every layer
    let cfg = pathway_config(&PathwayArgs { layers: None, ..args.clone() })?;
    record_pathway_config(&mut run, &cfg);
    run.set("cuts", join(cuts));
    run.set("joint", joint);
    run.set("mode", if mask { "mask" } else { "delete" });
    run.set("random_control", random_control);
    if let Some(n) = test_limit {
        run.set("test_limit", n);
    }
    let net = load_model(&mut run, model)?;
    let test = limited(load_split(&mut run, data_dir, Split::Test)?, test_limit);
    let imp = node_importance(&extract_pathways(&net, &cfg)?)?;
    let layers: Vec<usize> = match &args.layers {
        Some(l) => l.clone(),
        None => (0..imp.layout().len()).filter(|&l| !(cfg.include_input && l == 0)).collect(),
    };
    run.set("sweep_layers", join(&layers));
    let schedule: Vec<SweepPoint> = if joint {
        if cuts.len() != layers.len() {
            bail!("--joint needs one cut count per swept layer ({} layers, {} counts)", layers.len(), cuts.len());
        }
        vec![SweepPoint { cuts: layers.iter().copied().zip(cuts.iter().copied()).collect() }]
    } else {
        per_layer_schedule(&layers, cuts)
    };
    let mode = if mask { PruneMode::Mask } else { PruneMode::Delete };
    let curve = sweep(&net, &imp, &schedule, &test, mode)?;
    for r in &curve.records {
        eprintln!("cuts {:?}  error {:.4}", r.point.cuts, r.error_rate);
    }
    run.write_csv(SWEEP_FILE, |buf| curve.write_csv(buf))?;

    if random_control > 0 {
        let mut random = flowpath_core::SweepCurve::default();
        for point in &schedule {
            let mut total = 0.0;
            for s in 0..random_control as u64 {
                let m = point.cuts.iter().try_fold(flowpath_core::PruneMask::empty(), |acc, &(layer, count)| {
                    let seed = common.seed.wrapping_add(1000 + s).wrapping_mul(31).wrapping_add(layer as u64);
                    random_prune_mask(&imp, layer, count, seed).map(|m| acc.merge(&m))
                })?;
                total += evaluate(&prune_with(&net, &m, mode)?, &test)?.error_rate();
            }
            random.records.push(flowpath_core::pruning::SweepRecord {
                point: point.clone(),
                error_rate: total / random_control as f64,
            });
        }
        run.write_csv(RANDOM_SWEEP_FILE, |buf| random.write_csv(buf))?;
    }
    run.finish()
}
