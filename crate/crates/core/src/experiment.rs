//! Mode × seed comparison runs and their tables.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentSpec;
use crate::data::{generate, Domain, Split};
use crate::error::Result;
use crate::eval::{evaluate_domain, pearson, per_class_gain, ClassDelta, ClassGain, EvalReport, UNCHANGED_TOLERANCE};
use crate::schema::AttributeSchema;
use crate::train::{make_split, train, Mode, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub mode: Mode,
    pub seed: u64,
    /// Target test accuracy over the evaluated classes.
    pub target_accuracy: f64,
    /// Source test accuracy over all classes.
    pub source_accuracy: f64,
    pub target_report: EvalReport,
    /// Training-set source examples per class.
    pub source_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub sd: f64,
    pub source_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSummary {
    pub from: Mode,
    pub to: Mode,
    /// Deltas averaged over seeds.
    pub classes: ClassGain,
    /// Between training source count and mean delta; `None` when undefined.
    pub correlation: Option<f64>,
    pub per_seed_correlation: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    /// In spec order: modes outer, seeds inner.
    pub runs: Vec<RunResult>,
    pub summary: Vec<ModeSummary>,
    pub gain: Option<GainSummary>,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Trains and evaluates one (mode, seed) cell.
pub fn run_cell(spec: &ExperimentSpec, schema: &AttributeSchema, mode: Mode, seed: u64) -> Result<RunResult> {
    let mut gen = spec.generator.resolve(schema);
    gen.seed = seed;
    let train_set = generate(&gen)?;
    let test_set = generate(
        &gen.with_uniform_counts(spec.test_source_count, spec.test_target_count)
            .with_split(Split::Test),
    )?;
    let mut model = spec.model.resolve(schema, gen.feature_dim);
    model.seed = seed;
    let config = TrainConfig {
        mode,
        regime: spec.regime,
        seed,
        ..spec.train.clone()
    };
    let out = train(&train_set, &model, &config)?;
    let split = make_split(&train_set, spec.regime);
    let all: Vec<usize> = (0..schema.num_classes()).collect();
    let target_report = evaluate_domain(&out.params, &test_set, Domain::Target, &split.held_out)?;
    let source_report = evaluate_domain(&out.params, &test_set, Domain::Source, &all)?;
    Ok(RunResult {
        mode,
        seed,
        target_accuracy: target_report.accuracy,
        source_accuracy: source_report.accuracy,
        target_report,
        source_counts: train_set.class_counts(Domain::Source),
    })
}

pub fn run_experiment(spec: &ExperimentSpec, schema: &AttributeSchema) -> Result<ExperimentResult> {
    run_experiment_with(spec, schema, |_| {})
}

/// [`run_experiment`] calling `progress` after each finished cell.
pub fn run_experiment_with(
    spec: &ExperimentSpec,
    schema: &AttributeSchema,
    mut progress: impl FnMut(&RunResult),
) -> Result<ExperimentResult> {
    spec.validate()?;
    let mut runs = Vec::new();
    for &mode in &spec.modes {
        for &seed in &spec.seeds {
            let r = run_cell(spec, schema, mode, seed)?;
            progress(&r);
            runs.push(r);
        }
    }
    let summary = spec
        .modes
        .iter()
        .map(|&mode| {
            let target: Vec<f64> = runs.iter().filter(|r| r.mode == mode).map(|r| r.target_accuracy).collect();
            let source: Vec<f64> = runs.iter().filter(|r| r.mode == mode).map(|r| r.source_accuracy).collect();
            let (mean, sd) = mean_sd(&target);
            ModeSummary {
                mode,
                mean,
                sd,
                source_mean: mean_sd(&source).0,
            }
        })
        .collect();
    let gain = match spec.gain {
        Some([from, to]) => Some(gain_summary(&runs, &spec.seeds, from, to)?),
        None => None,
    };
    Ok(ExperimentResult {
        spec: spec.clone(),
        runs,
        summary,
        gain,
    })
}

fn gain_summary(runs: &[RunResult], seeds: &[u64], from: Mode, to: Mode) -> Result<GainSummary> {
    let find = |mode: Mode, seed: u64| {
        runs.iter()
            .find(|r| r.mode == mode && r.seed == seed)
            .expect("every cell ran")
    };
    let mut per_seed = Vec::new();
    let mut per_seed_correlation = Vec::new();
    for &seed in seeds {
        let (a, b) = (find(from, seed), find(to, seed));
        let g = per_class_gain(&a.target_report, &b.target_report)?;
        let counts: Vec<f64> = g.deltas.iter().map(|d| b.source_counts[d.class] as f64).collect();
        let deltas: Vec<f64> = g.deltas.iter().map(|d| d.delta).collect();
        per_seed_correlation.push(pearson(&counts, &deltas).ok());
        per_seed.push((g, b.source_counts.clone()));
    }

    // Average per class over the seeds in which it was evaluated.
    let mut classes: Vec<usize> = per_seed.iter().flat_map(|(g, _)| g.deltas.iter().map(|d| d.class)).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut deltas = Vec::new();
    let mut counts = Vec::new();
    for &c in &classes {
        let rows: Vec<(&ClassDelta, usize)> = per_seed
            .iter()
            .filter_map(|(g, sc)| g.deltas.iter().find(|d| d.class == c).map(|d| (d, sc[c])))
            .collect();
        let n = rows.len() as f64;
        deltas.push(ClassDelta {
            class: c,
            n_examples: rows.iter().map(|(d, _)| d.n_examples).sum(),
            accuracy: rows.iter().map(|(d, _)| d.accuracy).sum::<f64>() / n,
            delta: rows.iter().map(|(d, _)| d.delta).sum::<f64>() / n,
        });
        counts.push(rows.iter().map(|&(_, sc)| sc as f64).sum::<f64>() / n);
    }
    let total = deltas.len() as f64;
    let frac = |f: &dyn Fn(f64) -> bool| deltas.iter().filter(|d| f(d.delta)).count() as f64 / total;
    let classes_gain = ClassGain {
        improved: frac(&|d| d >= UNCHANGED_TOLERANCE),
        unchanged: frac(&|d| d.abs() < UNCHANGED_TOLERANCE),
        worse: frac(&|d| d <= -UNCHANGED_TOLERANCE),
        deltas,
    };
    let mean_deltas: Vec<f64> = classes_gain.deltas.iter().map(|d| d.delta).collect();
    Ok(GainSummary {
        from,
        to,
        correlation: pearson(&counts, &mean_deltas).ok(),
        classes: classes_gain,
        per_seed_correlation,
    })
}

fn flag(on: bool) -> &'static str {
    if on {
        "yes"
    } else {
        "-"
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |r| format!("{:.6}", r))
}

impl ExperimentResult {
    pub fn summary_for(&self, mode: Mode) -> Option<&ModeSummary> {
        self.summary.iter().find(|s| s.mode == mode)
    }

    /// One row per (mode, seed).
    pub fn runs_csv(&self) -> String {
        let mut out = String::from("mode,seed,target_accuracy,source_accuracy\n");
        for r in &self.runs {
            writeln!(out, "{},{},{:.6},{:.6}", r.mode, r.seed, r.target_accuracy, r.source_accuracy).unwrap();
        }
        out
    }

    /// One row per mode.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("mode,adapt,attr,consist,accuracy_mean,accuracy_sd,source_accuracy_mean,seeds\n");
        for s in &self.summary {
            writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6},{}",
                s.mode,
                u8::from(s.mode.adapts()),
                u8::from(s.mode.uses_attributes()),
                u8::from(s.mode.uses_consistency()),
                s.mean,
                s.sd,
                s.source_mean,
                self.spec.seeds.len()
            )
            .unwrap();
        }
        out
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let what = match self.spec.regime {
            crate::train::Regime::Unsup => "target accuracy, all classes",
            crate::train::Regime::Semisup => "target accuracy, held-out classes",
        };
        writeln!(out, "regime {} ({}), {} seed(s)", self.spec.regime.as_str(), what, self.spec.seeds.len()).unwrap();
        writeln!(out, "{:<20} {:>5} {:>5} {:>8} {:>16} {:>8}", "mode", "Adapt", "Attr", "Consist", "Acc (%)", "Src (%)").unwrap();
        for s in &self.summary {
            writeln!(
                out,
                "{:<20} {:>5} {:>5} {:>8} {:>16} {:>8.2}",
                s.mode.as_str(),
                flag(s.mode.adapts()),
                flag(s.mode.uses_attributes()),
                flag(s.mode.uses_consistency()),
                format!("{:.2} ± {:.2}", 100.0 * s.mean, 100.0 * s.sd),
                100.0 * s.source_mean
            )
            .unwrap();
        }
        if let Some(g) = &self.gain {
            writeln!(
                out,
                "{} over {}: improved {:.1}%, unchanged {:.1}%, worse {:.1}%; correlation with source count {}",
                g.to,
                g.from,
                100.0 * g.classes.improved,
                100.0 * g.classes.unchanged,
                100.0 * g.classes.worse,
                opt(g.correlation)
            )
            .unwrap();
        }
        out
    }

    pub fn correlation_text(&self) -> Option<String> {
        let g = self.gain.as_ref()?;
        let mut out = format!("from {}\nto {}\ncorrelation {}\n", g.from, g.to, opt(g.correlation));
        for (seed, r) in self.spec.seeds.iter().zip(&g.per_seed_correlation) {
            writeln!(out, "seed {} {}", seed, opt(*r)).unwrap();
        }
        Some(out)
    }

    /// Writes `runs.csv`, `summary.csv`, `table.txt` and, with a gain pair,
    /// `class_gain.csv` and `correlation.txt`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("runs.csv"), self.runs_csv())?;
        std::fs::write(dir.join("summary.csv"), self.summary_csv())?;
        std::fs::write(dir.join("table.txt"), self.table())?;
        if let Some(g) = &self.gain {
            std::fs::write(dir.join("class_gain.csv"), g.classes.to_csv())?;
            std::fs::write(dir.join("correlation.txt"), self.correlation_text().unwrap_or_default())?;
        }
        Ok(())
    }
}
