use std::fmt::Write as _;
use std::fs;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use flowpath_core::analysis::{average_distance, coverage_curve, rank_correlation, topk_coverage};
use flowpath_core::reference;
use flowpath_core::{ConfusionMatrix, DistanceMatrix};

use crate::artifacts::RunDir;
use crate::commands::{CONFUSION_FILE, DISTANCES_FILE, EVALUATION_FILE, SWEEP_FILE};
use crate::Common;

const AVERAGE_TOLERANCE: f64 = 1e-3;
const MLP_COVERAGE_TOLERANCE: f64 = 0.03;
// wider because Table 4's class-8 row partly duplicates class-7's
const CNN_COVERAGE_TOLERANCE: f64 = 0.05;
/// Error increase still counted as flat when reading a sweep plateau.
const PLATEAU_TOLERANCE: f64 = 0.01;

#[derive(Serialize)]
struct Check {
    name: String,
    computed: f64,
    expected: String,
    passed: bool,
}

fn check_close(name: String, computed: f64, target: f64, tol: f64) -> Check {
    Check { name, computed, expected: format!("{target} ± {tol}"), passed: (computed - target).abs() <= tol }
}

/// Prints one PASS/FAIL line per check; returns whether all passed.
pub fn validate_paper(common: &Common) -> anyhow::Result<bool> {
    let mut run = RunDir::open(&common.out, "validate-paper", common.seed)?;
    let mut checks = Vec::new();

    let computed = average_distance(&reference::mlp_distances())?;
    for (class, (&c, &printed)) in computed.iter().zip(&reference::mlp_average_distances()).enumerate() {
        checks.push(check_close(format!("table2 class-{class} average distance"), c, printed, AVERAGE_TOLERANCE));
    }
    let (d1, c3) = (reference::mlp_distances(), reference::mlp_confusion());
    let (d4, c6) = (reference::cnn_distances(), reference::cnn_confusion());
    for (label, d, c, k, target, tol) in [
        ("mlp", &d1, &c3, 4, reference::MLP_COVERAGE_K4, MLP_COVERAGE_TOLERANCE),
        ("mlp", &d1, &c3, 5, reference::MLP_COVERAGE_K5, MLP_COVERAGE_TOLERANCE),
        ("cnn", &d4, &c6, 4, reference::CNN_COVERAGE_K4, CNN_COVERAGE_TOLERANCE),
        ("cnn", &d4, &c6, 5, reference::CNN_COVERAGE_K5, CNN_COVERAGE_TOLERANCE),
    ] {
        let cov = topk_coverage(d, c, k)?;
        checks.push(check_close(format!("{label} top-{k} coverage"), cov.fraction, target, tol));
    }
    for (label, d, c) in [("mlp", &d1, &c3), ("cnn", &d4, &c6)] {
        let pooled = rank_correlation(d, c)?.pooled.unwrap_or(f64::NAN);
        checks.push(Check {
            name: format!("{label} pooled spearman"),
            computed: pooled,
            expected: "< 0".into(),
            passed: pooled < 0.0,
        });
    }

    for c in &checks {
        println!(
            "{} {}: computed {:.4}, expected {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.computed,
            c.expected
        );
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    println!("{passed} of {} checks passed", checks.len());
    run.write_json("validation.json", &checks)?;
    run.finish()?;
    Ok(passed == checks.len())
}

#[derive(Deserialize, Serialize)]
struct EvaluationSummary {
    set: String,
    samples: usize,
    accuracy: f64,
    errors: u64,
    clean_test_accuracy: f64,
}

#[derive(Serialize)]
struct CoveragePoint {
    k: usize,
    fraction: f64,
}

#[derive(Serialize)]
struct Plateau {
    layer: String,
    baseline_error: f64,
    /// Largest cut count whose error stays within the plateau tolerance of the baseline.
    plateau_cut: String,
    plateau_error: f64,
}

#[derive(Serialize)]
struct Section {
    name: String,
    evaluation: Option<EvaluationSummary>,
    distance_matrix: Vec<Vec<f64>>,
    symmetric: bool,
    averages: Vec<f64>,
    coverage: Vec<CoveragePoint>,
    pooled_spearman: Option<f64>,
    per_class_spearman: Vec<Option<f64>>,
    published_coverage: Option<[f64; 2]>,
    sweep_plateau: Vec<Plateau>,
}

fn section(
    name: &str,
    d: &DistanceMatrix,
    c: &ConfusionMatrix,
    evaluation: Option<EvaluationSummary>,
    published: Option<[f64; 2]>,
    sweep_plateau: Vec<Plateau>,
) -> anyhow::Result<Section> {
    let corr = rank_correlation(d, c)?;
    Ok(Section {
        name: name.into(),
        evaluation,
        distance_matrix: d.rows(),
        symmetric: d.is_symmetric(1e-9),
        averages: average_distance(d)?,
        coverage: coverage_curve(d, c)?.into_iter().map(|r| CoveragePoint { k: r.k, fraction: r.fraction }).collect(),
        pooled_spearman: corr.pooled,
        per_class_spearman: corr.per_class,
        published_coverage: published,
        sweep_plateau,
    })
}

fn render(sections: &[Section]) -> String {
    let mut out = String::new();
    for s in sections {
        let _ = writeln!(out, "== {} ==", s.name);
        if let Some(e) = &s.evaluation {
            let _ = writeln!(out, "clean test accuracy: {:.2}%", 100.0 * e.clean_test_accuracy);
            let _ =
                writeln!(out, "{} accuracy: {:.2}% ({} errors of {})", e.set, 100.0 * e.accuracy, e.errors, e.samples);
        }
        let _ = writeln!(out, "distance matrix ({0}x{0}, symmetric: {1}):", s.distance_matrix.len(), s.symmetric);
        for row in &s.distance_matrix {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:7.4}")).collect();
            let _ = writeln!(out, "  {}", cells.join(" "));
        }
        let avgs: Vec<String> = s.averages.iter().map(|v| format!("{v:.4}")).collect();
        let _ = writeln!(out, "average distance per class: {}", avgs.join(" "));
        for p in &s.coverage {
            let _ = writeln!(out, "top-{} coverage: {:.2}%", p.k, 100.0 * p.fraction);
        }
        if let Some([k4, k5]) = s.published_coverage {
            let _ = writeln!(out, "published: top-4 {:.2}%, top-5 {:.2}%", 100.0 * k4, 100.0 * k5);
        }
        match s.pooled_spearman {
            Some(r) => {
                let _ = writeln!(out, "pooled spearman (distance vs errors): {r:.4}");
            }
            None => {
                let _ = writeln!(out, "pooled spearman: undefined");
            }
        }
        for p in &s.sweep_plateau {
            let _ = writeln!(
                out,
                "pruning layer {}: baseline error {:.2}%, flat up to {} cut nodes ({:.2}%)",
                p.layer,
                100.0 * p.baseline_error,
                p.plateau_cut,
                100.0 * p.plateau_error
            );
        }
        out.push('\n');
    }
    out
}

fn plateaus(text: &str) -> anyhow::Result<Vec<Plateau>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let mut rows: Vec<(String, String, f64)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let error: f64 = rec.get(2).unwrap_or("").parse().context("sweep error_rate")?;
        rows.push((rec[0].to_string(), rec[1].to_string(), error));
    }
    let mut layers: Vec<String> = rows.iter().map(|r| r.0.clone()).collect();
    layers.dedup();
    let mut out = Vec::new();
    for layer in layers {
        let points: Vec<&(String, String, f64)> = rows.iter().filter(|r| r.0 == layer).collect();
        let Some(base) = points.iter().find(|p| p.1.split('+').all(|c| c == "0")) else {
            continue;
        };
        let baseline = base.2;
        let last_flat = points
            .iter()
            .filter(|p| p.2 <= baseline + PLATEAU_TOLERANCE)
            .max_by_key(|p| p.1.split('+').map(|c| c.parse::<usize>().unwrap_or(0)).sum::<usize>())
            .unwrap_or(base);
        out.push(Plateau {
            layer: layer.clone(),
            baseline_error: baseline,
            plateau_cut: last_flat.1.clone(),
            plateau_error: last_flat.2,
        });
    }
    Ok(out)
}

pub fn report(common: &Common, paper_fixtures: bool) -> anyhow::Result<()> {
    let sections = if paper_fixtures {
        vec![
            section(
                "published MLP tables",
                &reference::mlp_distances(),
                &reference::mlp_confusion(),
                None,
                Some([reference::MLP_COVERAGE_K4, reference::MLP_COVERAGE_K5]),
                Vec::new(),
            )?,
            section(
                "published CNN tables",
                &reference::cnn_distances(),
                &reference::cnn_confusion(),
                None,
                Some([reference::CNN_COVERAGE_K4, reference::CNN_COVERAGE_K5]),
                Vec::new(),
            )?,
        ]
    } else {
        let required = [
            (EVALUATION_FILE, "confusion"),
            (DISTANCES_FILE, "extract` then `flowpath distances"),
            (CONFUSION_FILE, "confusion"),
        ];
        let missing: Vec<String> = required
            .iter()
            .filter(|(f, _)| !common.out.join(f).exists())
            .map(|(f, cmd)| format!("{f} (run `flowpath {cmd}`)"))
            .collect();
        if !missing.is_empty() {
            bail!("cannot report on {}: missing {}", common.out.display(), missing.join(", "));
        }
        let read = |f: &str| fs::read_to_string(common.out.join(f)).with_context(|| format!("reading {f}"));
        let evaluation: EvaluationSummary = serde_json::from_str(&read(EVALUATION_FILE)?)?;
        let d = DistanceMatrix::read_csv(read(DISTANCES_FILE)?.as_bytes())?;
        let c = ConfusionMatrix::read_csv(read(CONFUSION_FILE)?.as_bytes())?;
        let sweep = if common.out.join(SWEEP_FILE).exists() { plateaus(&read(SWEEP_FILE)?)? } else { Vec::new() };
        vec![section("run", &d, &c, Some(evaluation), None, sweep)?]
    };
    let mut run = RunDir::open(&common.out, "report", common.seed)?;
    run.set("source", if paper_fixtures { "paper-fixtures" } else { "artifacts" });
    for f in [EVALUATION_FILE, DISTANCES_FILE, CONFUSION_FILE, SWEEP_FILE] {
        let p = common.out.join(f);
        if !paper_fixtures && p.exists() {
            run.record_input(f, &p)?;
        }
    }
    let text = render(&sections);
    print!("{text}");
    run.write_json("report.json", &sections)?;
    run.write("report.txt", text.as_bytes())?;
    run.finish()
}
