//! Accuracy reports, per-class gains, correlation and feature-space retrieval.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Domain};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::Tensor;

/// Accuracies below this apart count as unchanged.
pub const UNCHANGED_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: usize,
    pub n_examples: usize,
    pub correct: usize,
    /// `None` when the class has no evaluated examples.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeAccuracy {
    pub name: String,
    /// Category of the predicted fine-grained class.
    pub from_classes: f64,
    /// Argmax of the attribute head.
    pub from_head: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub n_examples: usize,
    pub classes: Vec<usize>,
    pub per_class: Vec<ClassAccuracy>,
    pub attributes: Vec<AttributeAccuracy>,
    /// `confusion[true][predicted]` over evaluated examples.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    pub fn class_accuracy(&self, class: usize) -> Option<f64> {
        self.per_class.iter().find(|c| c.class == class).and_then(|c| c.accuracy)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Evaluates every labeled example of `dataset` whose class is in `classes`.
pub fn evaluate(params: &ModelParams, dataset: &Dataset, classes: &[usize]) -> Result<EvalReport> {
    evaluate_where(params, dataset, classes, |_| true)
}

/// [`evaluate`] restricted to one domain.
pub fn evaluate_domain(params: &ModelParams, dataset: &Dataset, domain: Domain, classes: &[usize]) -> Result<EvalReport> {
    evaluate_where(params, dataset, classes, |i| dataset.examples[i].domain == domain)
}

fn evaluate_where(
    params: &ModelParams,
    dataset: &Dataset,
    classes: &[usize],
    keep: impl Fn(usize) -> bool,
) -> Result<EvalReport> {
    let schema = &dataset.schema;
    let k = schema.num_classes();
    if classes.is_empty() {
        return Err(Error::contract("empty class subset"));
    }
    let mut subset = classes.to_vec();
    subset.sort_unstable();
    subset.dedup();
    if let Some(&c) = subset.iter().find(|&&c| c >= k) {
        return Err(Error::contract(format!("class {} outside [0, {})", c, k)));
    }
    let mut in_subset = vec![false; k];
    for &c in &subset {
        in_subset[c] = true;
    }
    let indices: Vec<usize> = (0..dataset.len())
        .filter(|&i| keep(i) && dataset.examples[i].class.is_some_and(|c| in_subset[c]))
        .collect();

    let mut confusion = vec![vec![0usize; k]; k];
    let mut attr_hits = vec![(0usize, 0usize); schema.num_attributes()];
    if !indices.is_empty() {
        let features = params.features(&dataset.features(&indices))?;
        let predicted = params.class_scores(&features)?.argmax_rows();
        let head_predictions = (0..schema.num_attributes())
            .map(|n| Ok(params.attribute_scores(&features, n)?.argmax_rows()))
            .collect::<Result<Vec<_>>>()?;
        for (r, &i) in indices.iter().enumerate() {
            let truth = dataset.examples[i].class.expect("filtered on class");
            confusion[truth][predicted[r]] += 1;
            for (n, attr) in schema.attributes().iter().enumerate() {
                let want = attr.class_to_category[truth];
                attr_hits[n].0 += usize::from(attr.class_to_category[predicted[r]] == want);
                attr_hits[n].1 += usize::from(head_predictions[n][r] == want);
            }
        }
    }

    let n_examples = indices.len();
    let per_class = subset
        .iter()
        .map(|&c| {
            let n: usize = confusion[c].iter().sum();
            let correct = confusion[c][c];
            ClassAccuracy {
                class: c,
                n_examples: n,
                correct,
                accuracy: (n > 0).then(|| correct as f64 / n as f64),
            }
        })
        .collect::<Vec<_>>();
    let ratio = |hits: usize| if n_examples == 0 { 0.0 } else { hits as f64 / n_examples as f64 };
    let correct: usize = per_class.iter().map(|c| c.correct).sum();
    let attributes = schema
        .attributes()
        .iter()
        .zip(&attr_hits)
        .map(|(a, &(from_classes, from_head))| AttributeAccuracy {
            name: a.name.clone(),
            from_classes: ratio(from_classes),
            from_head: ratio(from_head),
        })
        .collect();
    Ok(EvalReport {
        accuracy: ratio(correct),
        n_examples,
        classes: subset,
        per_class,
        attributes,
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDelta {
    pub class: usize,
    pub n_examples: usize,
    /// Accuracy under the second report.
    pub accuracy: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassGain {
    pub deltas: Vec<ClassDelta>,
    pub improved: f64,
    pub unchanged: f64,
    pub worse: f64,
}

impl ClassGain {
    /// `class_id,n_examples,accuracy,delta` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class_id,n_examples,accuracy,delta\n");
        for d in &self.deltas {
            writeln!(out, "{},{},{:.6},{:.6}", d.class, d.n_examples, d.accuracy, d.delta).unwrap();
        }
        out
    }
}

/// Per-class accuracy of `b` minus that of `a`, over classes both reports
/// evaluated with at least one example.
pub fn per_class_gain(a: &EvalReport, b: &EvalReport) -> Result<ClassGain> {
    let mut deltas = Vec::new();
    for cb in &b.per_class {
        let (Some(acc_b), Some(acc_a)) = (cb.accuracy, a.class_accuracy(cb.class)) else {
            continue;
        };
        deltas.push(ClassDelta {
            class: cb.class,
            n_examples: cb.n_examples,
            accuracy: acc_b,
            delta: acc_b - acc_a,
        });
    }
    if deltas.is_empty() {
        return Err(Error::contract("reports share no evaluated class"));
    }
    let n = deltas.len() as f64;
    let count = |f: &dyn Fn(f64) -> bool| deltas.iter().filter(|d| f(d.delta)).count() as f64 / n;
    Ok(ClassGain {
        improved: count(&|d| d >= UNCHANGED_TOLERANCE),
        unchanged: count(&|d| d.abs() < UNCHANGED_TOLERANCE),
        worse: count(&|d| d <= -UNCHANGED_TOLERANCE),
        deltas,
    })
}

/// Pearson correlation coefficient, accumulated in a single pass.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least two points".into()));
    }
    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, (&a, &b)) in x.iter().zip(y).enumerate() {
        let n = (i + 1) as f64;
        let dx = a - mx;
        let dy = b - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (a - mx);
        syy += dy * (b - my);
        sxy += dx * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// The `k` gallery rows closest to each query row by Euclidean distance,
/// ties by gallery index.
pub fn nearest_rows(queries: &Tensor, gallery: &Tensor, k: usize) -> Result<Vec<Vec<Neighbor>>> {
    let (nq, dq) = queries.dims2()?;
    let (ng, dg) = gallery.dims2()?;
    if dq != dg {
        return Err(Error::shape(format!("query width {} vs gallery width {}", dq, dg)));
    }
    if k > ng {
        return Err(Error::contract(format!("k = {} exceeds gallery size {}", k, ng)));
    }
    Ok((0..nq)
        .map(|q| {
            let query = queries.row(q);
            let mut all: Vec<Neighbor> = (0..ng)
                .map(|g| Neighbor {
                    index: g,
                    distance: query
                        .iter()
                        .zip(gallery.row(g))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt(),
                })
                .collect();
            all.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index)));
            all.truncate(k);
            all
        })
        .collect())
}

/// Nearest gallery examples in the model's feature space.
pub fn nearest_neighbors(
    params: &ModelParams,
    queries: &Tensor,
    gallery: &Dataset,
    k: usize,
) -> Result<Vec<Vec<Neighbor>>> {
    let all: Vec<usize> = (0..gallery.len()).collect();
    let q = params.features(queries)?;
    let g = params.features(&gallery.features(&all))?;
    nearest_rows(&q, &g, k)
}
