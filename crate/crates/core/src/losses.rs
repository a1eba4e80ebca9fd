//! Training objectives.
//!
//! * per-level softmax cross-entropy for the fine-grained class and for each
//!   attribute, combined as a weighted sum;
//! * attribute consistency: symmetric KL between an attribute head's
//!   distribution and the distribution obtained by averaging fine-grained
//!   class scores within each attribute category, then applying softmax;
//! * domain confusion: a domain classifier trained on frozen features, and a
//!   feature-side loss pushing the (frozen) classifier towards uniform;
//! * soft labels: cross-entropy against per-class and per-category averages
//!   of temperature-softened source predictions.
//!
//! Every loss is a mean over the rows that carry the labels it needs; rows
//! without them are excluded rather than zero-filled.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::{Dataset, Domain};
use crate::error::{Error, Result};
use crate::model::{DomainHeadVars, ModelParams, ModelVars};
use crate::schema::AttributeSchema;
use crate::tensor::Tensor;

/// Probability floor applied after softmax and before any logarithm.
pub const PROB_EPSILON: f64 = 1e-12;

/// A weight given either once for all attributes or per attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAttribute {
    All(f64),
    Each(Vec<f64>),
}

impl PerAttribute {
    pub fn get(&self, n: usize) -> f64 {
        match self {
            PerAttribute::All(w) => *w,
            PerAttribute::Each(ws) => ws.get(n).copied().unwrap_or(0.0),
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            PerAttribute::All(w) => vec![*w],
            PerAttribute::Each(ws) => ws.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// α_c
    pub class: f64,
    /// α_n
    pub attributes: PerAttribute,
    /// β_n
    pub consistency: PerAttribute,
    pub confusion: f64,
    pub class_soft: f64,
    pub attribute_soft: f64,
    /// Soft-label temperature τ.
    pub temperature: f64,
}

impl Default for LossWeights {
    /// Equal weights on every term, τ = 2.
    fn default() -> Self {
        LossWeights {
            class: 1.0,
            attributes: PerAttribute::All(1.0),
            consistency: PerAttribute::All(1.0),
            confusion: 1.0,
            class_soft: 1.0,
            attribute_soft: 1.0,
            temperature: 2.0,
        }
    }
}

impl LossWeights {
    /// All weights zero, τ = 2.
    pub fn zero() -> Self {
        LossWeights {
            class: 0.0,
            attributes: PerAttribute::All(0.0),
            consistency: PerAttribute::All(0.0),
            confusion: 0.0,
            class_soft: 0.0,
            attribute_soft: 0.0,
            temperature: 2.0,
        }
    }

    pub fn validate(&self, num_attributes: usize) -> Result<()> {
        let mut all = vec![self.class, self.confusion, self.class_soft, self.attribute_soft];
        all.extend(self.attributes.values());
        all.extend(self.consistency.values());
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::config("loss weights must be finite and non-negative"));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::config("temperature must be positive"));
        }
        for per in [&self.attributes, &self.consistency] {
            if let PerAttribute::Each(ws) = per {
                if ws.len() != num_attributes {
                    return Err(Error::config(format!(
                        "per-attribute weights need {} entries, got {}",
                        num_attributes,
                        ws.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A scalar loss and whether it had no contributing rows.
#[derive(Debug, Clone, Copy)]
pub struct LossTerm<'t> {
    pub value: Var<'t>,
    /// No row carried the needed labels; `value` is the constant 0.
    pub skipped: bool,
}

fn labeled_rows(labels: &[Option<usize>]) -> (Vec<usize>, Vec<usize>) {
    labels
        .iter()
        .enumerate()
        .filter_map(|(r, l)| l.map(|l| (r, l)))
        .unzip()
}

/// Mean over labeled rows of `−log softmax(scores)[label]`.
pub fn softmax_cross_entropy<'t>(scores: Var<'t>, labels: &[Option<usize>]) -> Result<LossTerm<'t>> {
    let (rows, cols) = scores.value().dims2()?;
    if labels.len() != rows {
        return Err(Error::shape(format!("{} labels for {} rows", labels.len(), rows)));
    }
    let (idx, targets) = labeled_rows(labels);
    if let Some(&bad) = targets.iter().find(|&&t| t >= cols) {
        return Err(Error::contract(format!("label {} outside [0, {})", bad, cols)));
    }
    if idx.is_empty() {
        return Ok(LossTerm {
            value: scores.tape().scalar(0.0),
            skipped: true,
        });
    }
    let value = scores
        .select_rows(&idx)?
        .log_softmax(1.0)?
        .pick(&targets)?
        .mean()?
        .neg()?;
    Ok(LossTerm { value, skipped: false })
}

/// `L_{a_n}` on `[B × a_K]` attribute scores.
pub fn attribute_softmax_loss<'t>(
    scores: Var<'t>,
    labels: &[Option<usize>],
    schema: &AttributeSchema,
    n: usize,
) -> Result<LossTerm<'t>> {
    let a_k = schema.attribute(n)?.categories;
    if scores.value().last_dim() != a_k {
        return Err(Error::shape(format!(
            "attribute {} has {} categories, scores have {} columns",
            n,
            a_k,
            scores.value().last_dim()
        )));
    }
    softmax_cross_entropy(scores, labels)
}

/// `L_C` on `[B × K]` class scores.
pub fn class_softmax_loss<'t>(scores: Var<'t>, labels: &[Option<usize>]) -> Result<LossTerm<'t>> {
    softmax_cross_entropy(scores, labels)
}

/// `Σ w_i · term_i`, accumulated in order.
pub fn weighted_sum<'t>(tape: &'t Tape, terms: &[(f64, Var<'t>)]) -> Result<Var<'t>> {
    let mut acc = tape.scalar(0.0);
    for &(w, term) in terms {
        acc = acc.add(term.scale(w)?.sum()?)?;
    }
    Ok(acc)
}

/// `L_softmax = Σ_n α_n L_{a_n} + α_c L_C`.
pub fn multitask_softmax<'t>(
    attribute_losses: &[Var<'t>],
    class_loss: Var<'t>,
    weights: &LossWeights,
) -> Result<Var<'t>> {
    let mut terms: Vec<(f64, Var<'t>)> = attribute_losses
        .iter()
        .enumerate()
        .map(|(n, &l)| (weights.attributes.get(n), l))
        .collect();
    terms.push((weights.class, class_loss));
    weighted_sum(class_loss.tape(), &terms)
}

/// Averages `[B × K]` class scores within each category of attribute `n`,
/// giving `[B × a_K]` attribute scores.
pub fn aggregate_class_scores<'t>(class_scores: Var<'t>, schema: &AttributeSchema, n: usize) -> Result<Var<'t>> {
    let m = schema.averaging_matrix(n)?;
    let cols = class_scores.value().last_dim();
    if cols != schema.num_classes() {
        return Err(Error::shape(format!(
            "class scores have {} columns, schema has {} classes",
            cols,
            schema.num_classes()
        )));
    }
    class_scores.matmul(class_scores.tape().leaf(m))
}

/// `½ KL(p‖p̂) + ½ KL(p̂‖p)` per row, averaged over rows, where `p` comes
/// from the attribute head and `p̂` from aggregated class scores.
pub fn consistency_loss<'t>(
    class_scores: Var<'t>,
    attribute_scores: Var<'t>,
    schema: &AttributeSchema,
    n: usize,
) -> Result<Var<'t>> {
    let p = attribute_scores.softmax(1.0)?.clamp(PROB_EPSILON, 1.0)?;
    let p_hat = aggregate_class_scores(class_scores, schema, n)?
        .softmax(1.0)?
        .clamp(PROB_EPSILON, 1.0)?;
    if p.value().shape() != p_hat.value().shape() {
        return Err(Error::shape(format!(
            "attribute scores {:?} vs aggregated class scores {:?}",
            p.shape(),
            p_hat.shape()
        )));
    }
    // ½Σ p log(p/p̂) + ½Σ p̂ log(p̂/p) = ½Σ (p − p̂)(log p − log p̂)
    let diff = p.sub(p_hat)?;
    let log_ratio = p.log()?.sub(p_hat.log()?)?;
    diff.mul(log_ratio)?.sum_axis(1)?.mean()?.scale(0.5)
}

/// `L_consistency = Σ_n β_n L_{con_n}`.
pub fn total_consistency<'t>(
    class_scores: Var<'t>,
    attribute_scores: &[Var<'t>],
    schema: &AttributeSchema,
    weights: &LossWeights,
) -> Result<Var<'t>> {
    let mut terms = Vec::with_capacity(attribute_scores.len());
    for (n, &a) in attribute_scores.iter().enumerate() {
        terms.push((weights.consistency.get(n), consistency_loss(class_scores, a, schema, n)?));
    }
    weighted_sum(class_scores.tape(), &terms)
}

/// Cross-entropy of `[B × 2]` domain scores against the true domains.
pub fn domain_classifier_loss<'t>(scores: Var<'t>, domains: &[Domain]) -> Result<Var<'t>> {
    let labels: Vec<Option<usize>> = domains.iter().map(|d| Some(d.index())).collect();
    Ok(softmax_cross_entropy(scores, &labels)?.value)
}

/// Cross-entropy of `[B × C]` scores against the uniform distribution over
/// `C` outcomes. Minimum `ln C`, reached at uniform predictions.
pub fn uniform_confusion_loss<'t>(scores: Var<'t>) -> Result<Var<'t>> {
    let cols = scores.value().last_dim();
    scores
        .log_softmax(1.0)?
        .sum_axis(1)?
        .mean()?
        .scale(-1.0 / cols as f64)
}

#[derive(Debug, Clone, Copy)]
pub struct ConfusionTerms<'t> {
    /// Trains the domain head only.
    pub classifier: Var<'t>,
    /// Trains the backbone only.
    pub confusion: Var<'t>,
    /// The batch held a single domain.
    pub single_domain: bool,
}

/// Both halves of domain confusion with their stop-gradients: the
/// classifier loss sees detached features, the confusion loss sees a
/// detached copy of the domain head.
pub fn domain_confusion_loss<'t>(
    features: Var<'t>,
    head: &DomainHeadVars<'t>,
    domains: &[Domain],
) -> Result<ConfusionTerms<'t>> {
    let classifier = domain_classifier_loss(head.forward(features.detach())?, domains)?;
    let confusion = uniform_confusion_loss(head.detached().forward(features)?)?;
    let single_domain = domains.windows(2).all(|w| w[0] == w[1]);
    Ok(ConfusionTerms {
        classifier,
        confusion,
        single_domain,
    })
}

/// Seam for the unsupervised adaptation term of the objective.
pub trait AdaptationLoss {
    fn terms<'t>(&self, features: Var<'t>, model: &ModelVars<'t>, domains: &[Domain]) -> Result<ConfusionTerms<'t>>;
}

/// Domain confusion on the shared features.
#[derive(Debug, Clone, Copy, Default)]
pub struct DomainConfusion;

impl AdaptationLoss for DomainConfusion {
    fn terms<'t>(&self, features: Var<'t>, model: &ModelVars<'t>, domains: &[Domain]) -> Result<ConfusionTerms<'t>> {
        domain_confusion_loss(features, &model.domain, domains)
    }
}

/// Averaged softened source predictions per class and per attribute category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabelBank {
    pub temperature: f64,
    /// `class[c]` is a distribution over the K classes.
    pub class: Vec<Vec<f64>>,
    /// `attributes[n][k]` is a distribution over the categories of attribute `n`.
    pub attributes: Vec<Vec<Vec<f64>>>,
    pub class_counts: Vec<usize>,
    pub attribute_counts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoftLevel {
    Class,
    Attribute(usize),
}

impl SoftLabelBank {
    pub fn entry(&self, level: SoftLevel, label: usize) -> Result<&[f64]> {
        let table = match level {
            SoftLevel::Class => &self.class,
            SoftLevel::Attribute(n) => self
                .attributes
                .get(n)
                .ok_or_else(|| Error::Bank(format!("no attribute {} in bank", n)))?,
        };
        table
            .get(label)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Bank(format!("no soft label for {:?} label {}", level, label)))
    }
}

/// Sums `rows` of `probs` into `groups[group_of[row]]` in row order, then
/// divides by the counts.
fn group_means(probs: &Tensor, group_of: &[usize], groups: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let cols = probs.last_dim();
    let mut sums = vec![vec![0.0; cols]; groups];
    let mut counts = vec![0; groups];
    for (r, &g) in group_of.iter().enumerate() {
        for (s, p) in sums[g].iter_mut().zip(probs.row(r)) {
            *s += p;
        }
        counts[g] += 1;
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            for v in s.iter_mut() {
                *v /= n as f64;
            }
        }
    }
    (sums, counts)
}

/// Builds the bank from every labeled source example of `dataset`.
pub fn build_soft_labels(dataset: &Dataset, params: &ModelParams, temperature: f64) -> Result<SoftLabelBank> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::contract("temperature must be positive"));
    }
    let schema = &dataset.schema;
    let (indices, classes): (Vec<usize>, Vec<usize>) = dataset
        .examples
        .iter()
        .enumerate()
        .filter(|(_, e)| e.domain == Domain::Source)
        .filter_map(|(i, e)| e.class.map(|c| (i, c)))
        .unzip();

    let tape = Tape::new();
    let model = params.on_tape(&tape);
    let features = model.features(tape.leaf(dataset.features(&indices)))?;

    let class_probs = model.class_scores(features)?.softmax(temperature)?.to_tensor();
    let (class, class_counts) = group_means(&class_probs, &classes, schema.num_classes());
    if let Some(c) = class_counts.iter().position(|&n| n == 0) {
        return Err(Error::Bank(format!("class {} has no source examples", c)));
    }

    let mut attributes = Vec::new();
    let mut attribute_counts = Vec::new();
    for (n, attr) in schema.attributes().iter().enumerate() {
        let probs = model.attribute_scores(features, n)?.softmax(temperature)?.to_tensor();
        let cats: Vec<usize> = classes.iter().map(|&c| attr.class_to_category[c]).collect();
        let (means, counts) = group_means(&probs, &cats, attr.categories);
        if let Some(k) = counts.iter().position(|&n| n == 0) {
            return Err(Error::Bank(format!(
                "attribute {} category {} has no source examples",
                attr.name, k
            )));
        }
        attributes.push(means);
        attribute_counts.push(counts);
    }
    Ok(SoftLabelBank {
        temperature,
        class,
        attributes,
        class_counts,
        attribute_counts,
    })
}

/// Mean over labeled rows of `H(bank[label], softmax(scores / τ))`.
pub fn soft_label_loss<'t>(
    scores: Var<'t>,
    labels: &[Option<usize>],
    bank: &SoftLabelBank,
    temperature: f64,
    level: SoftLevel,
) -> Result<LossTerm<'t>> {
    let (rows, cols) = scores.value().dims2()?;
    if labels.len() != rows {
        return Err(Error::shape(format!("{} labels for {} rows", labels.len(), rows)));
    }
    let (idx, targets) = labeled_rows(labels);
    if idx.is_empty() {
        return Ok(LossTerm {
            value: scores.tape().scalar(0.0),
            skipped: true,
        });
    }
    let mut target = Vec::with_capacity(idx.len() * cols);
    for &t in &targets {
        let entry = bank.entry(level, t)?;
        if entry.len() != cols {
            return Err(Error::Bank(format!(
                "soft label has {} entries, scores have {} columns",
                entry.len(),
                cols
            )));
        }
        target.extend_from_slice(entry);
    }
    let target = scores.tape().leaf(Tensor::new(vec![idx.len(), cols], target)?);
    let value = scores
        .select_rows(&idx)?
        .log_softmax(temperature)?
        .mul(target)?
        .sum_axis(1)?
        .mean()?
        .neg()?;
    Ok(LossTerm { value, skipped: false })
}

/// Which labeled-target terms the objective includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveMode {
    /// No soft-label terms.
    Unsup,
    /// Soft-label terms on labeled target rows; requires a bank.
    Semisup,
}

/// One training batch. Labels are present only where training may use them.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Dataset index of each row.
    pub indices: Vec<usize>,
    /// `[B × D]`
    pub features: Tensor,
    pub domains: Vec<Domain>,
    pub class_labels: Vec<Option<usize>>,
    pub attribute_labels: Vec<Option<Vec<usize>>>,
}

impl Batch {
    pub fn attribute_column(&self, n: usize) -> Vec<Option<usize>> {
        self.attribute_labels
            .iter()
            .map(|a| a.as_ref().map(|a| a[n]))
            .collect()
    }

    /// Labels restricted to target rows.
    fn target_only(&self, labels: Vec<Option<usize>>) -> Vec<Option<usize>> {
        labels
            .into_iter()
            .zip(&self.domains)
            .map(|(l, d)| if *d == Domain::Target { l } else { None })
            .collect()
    }
}

/// Per-term values of one objective evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: usize,
    #[serde(rename = "L_C")]
    pub class: f64,
    #[serde(rename = "L_a")]
    pub attributes: Vec<f64>,
    #[serde(rename = "L_con")]
    pub consistency: Vec<f64>,
    #[serde(rename = "L_conf_cls")]
    pub confusion_classifier: f64,
    #[serde(rename = "L_conf_confusion")]
    pub confusion: f64,
    #[serde(rename = "L_csoft")]
    pub class_soft: f64,
    #[serde(rename = "L_asoft")]
    pub attribute_soft: Vec<f64>,
    pub total: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time: Option<f64>,
}

impl LossReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serialises")
    }
}

pub struct Objective<'t> {
    pub total: Var<'t>,
    pub report: LossReport,
    pub single_domain: bool,
}

/// The weighted sum of every term, with domain confusion as the adaptation
/// loss.
pub fn total_objective<'t>(
    batch: &Batch,
    model: &ModelVars<'t>,
    schema: &AttributeSchema,
    weights: &LossWeights,
    bank: Option<&SoftLabelBank>,
    mode: ObjectiveMode,
) -> Result<Objective<'t>> {
    total_objective_with(batch, model, schema, weights, bank, mode, &DomainConfusion)
}

/// [`total_objective`] with a caller-supplied adaptation loss.
///
/// Class and attribute softmax terms use every row carrying labels (source
/// plus labeled target); consistency and adaptation terms use all rows;
/// soft-label terms use labeled target rows only.
pub fn total_objective_with<'t>(
    batch: &Batch,
    model: &ModelVars<'t>,
    schema: &AttributeSchema,
    weights: &LossWeights,
    bank: Option<&SoftLabelBank>,
    mode: ObjectiveMode,
    adaptation: &dyn AdaptationLoss,
) -> Result<Objective<'t>> {
    weights.validate(schema.num_attributes())?;
    let bank = match (mode, bank) {
        (ObjectiveMode::Semisup, None) => {
            return Err(Error::contract("semi-supervised objective needs a soft-label bank"))
        }
        (ObjectiveMode::Semisup, Some(b)) => Some(b),
        (ObjectiveMode::Unsup, _) => None,
    };
    let tape = model.class_head.weight.tape();
    let x = tape.leaf(batch.features.clone());
    let features = model.features(x)?;
    let class_scores = model.class_scores(features)?;
    let attribute_scores = (0..schema.num_attributes())
        .map(|n| model.attribute_scores(features, n))
        .collect::<Result<Vec<_>>>()?;

    let l_class = class_softmax_loss(class_scores, &batch.class_labels)?.value;
    let l_attr = attribute_scores
        .iter()
        .enumerate()
        .map(|(n, &s)| Ok(attribute_softmax_loss(s, &batch.attribute_column(n), schema, n)?.value))
        .collect::<Result<Vec<_>>>()?;
    let l_con = attribute_scores
        .iter()
        .enumerate()
        .map(|(n, &s)| consistency_loss(class_scores, s, schema, n))
        .collect::<Result<Vec<_>>>()?;
    let conf = adaptation.terms(features, model, &batch.domains)?;

    let (l_csoft, l_asoft) = match bank {
        Some(bank) => {
            let tau = weights.temperature;
            let cs = soft_label_loss(
                class_scores,
                &batch.target_only(batch.class_labels.clone()),
                bank,
                tau,
                SoftLevel::Class,
            )?
            .value;
            let asoft = attribute_scores
                .iter()
                .enumerate()
                .map(|(n, &s)| {
                    let labels = batch.target_only(batch.attribute_column(n));
                    Ok(soft_label_loss(s, &labels, bank, tau, SoftLevel::Attribute(n))?.value)
                })
                .collect::<Result<Vec<_>>>()?;
            (cs, asoft)
        }
        None => (
            tape.scalar(0.0),
            (0..schema.num_attributes()).map(|_| tape.scalar(0.0)).collect(),
        ),
    };
    let soft_scale = if mode == ObjectiveMode::Semisup { 1.0 } else { 0.0 };

    let mut terms: Vec<(f64, Var<'t>)> = vec![(weights.class, l_class)];
    for (n, &l) in l_attr.iter().enumerate() {
        terms.push((weights.attributes.get(n), l));
    }
    for (n, &l) in l_con.iter().enumerate() {
        terms.push((weights.consistency.get(n), l));
    }
    terms.push((weights.confusion, conf.classifier));
    terms.push((weights.confusion, conf.confusion));
    terms.push((soft_scale * weights.class_soft, l_csoft));
    for &l in &l_asoft {
        terms.push((soft_scale * weights.attribute_soft, l));
    }
    let total = weighted_sum(tape, &terms)?;

    let scalar = |v: Var<'_>| v.scalar_value();
    let report = LossReport {
        step: 0,
        class: scalar(l_class)?,
        attributes: l_attr.iter().map(|&v| scalar(v)).collect::<Result<_>>()?,
        consistency: l_con.iter().map(|&v| scalar(v)).collect::<Result<_>>()?,
        confusion_classifier: scalar(conf.classifier)?,
        confusion: scalar(conf.confusion)?,
        class_soft: scalar(l_csoft)?,
        attribute_soft: l_asoft.iter().map(|&v| scalar(v)).collect::<Result<_>>()?,
        total: scalar(total)?,
        wall_time: None,
    };
    Ok(Objective {
        total,
        report,
        single_domain: conf.single_domain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, Example, GeneratorConfig, Split};
    use crate::model::ModelConfig;
    use crate::schema::Attribute;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    fn identity_schema() -> AttributeSchema {
        AttributeSchema::new(2, vec![Attribute::new("same", 2, vec![0, 1])]).unwrap()
    }

    #[test]
    fn cross_entropy_matches_high_precision_value() {
        let tape = Tape::new();
        let s = tape.leaf(Tensor::from_rows(&[[1.0, 2.0, 3.0]]).unwrap());
        let l = softmax_cross_entropy(s, &[Some(1)]).unwrap();
        close(l.value.scalar_value().unwrap(), 1.407_605_964_444_380_3, 1e-12);
        assert!(!l.skipped);
    }

    #[test]
    fn unlabeled_rows_are_excluded() {
        let tape = Tape::new();
        let s = tape.leaf(Tensor::from_rows(&[[1.0, 2.0, 3.0], [9.0, -4.0, 0.0]]).unwrap());
        let l = softmax_cross_entropy(s, &[Some(1), None]).unwrap();
        close(l.value.scalar_value().unwrap(), 1.407_605_964_444_380_3, 1e-12);
        let none = softmax_cross_entropy(s, &[None, None]).unwrap();
        assert!(none.skipped);
        assert_eq!(none.value.scalar_value().unwrap(), 0.0);
        assert!(softmax_cross_entropy(s, &[Some(3), None]).is_err());
    }

    #[test]
    fn symmetric_kl_reference_value() {
        let schema = identity_schema();
        let tape = Tape::new();
        let att = tape.leaf(Tensor::from_rows(&[[0.5f64.ln(), 0.5f64.ln()]]).unwrap());
        let cls = tape.leaf(Tensor::from_rows(&[[0.9f64.ln(), 0.1f64.ln()]]).unwrap());
        let l = consistency_loss(cls, att, &schema, 0).unwrap();
        close(l.scalar_value().unwrap(), 0.439_444_915_467_243_9, 1e-12);
    }

    #[test]
    fn consistency_vanishes_when_distributions_agree() {
        let schema = AttributeSchema::product(&["a", "b"], &[2, 3]).unwrap();
        let tape = Tape::new();
        let cls = tape.leaf(Tensor::from_rows(&[[0.3, -1.0, 2.0, 0.7, 0.1, -0.4]]).unwrap());
        let agg = aggregate_class_scores(cls, &schema, 1).unwrap();
        let att = tape.leaf(agg.to_tensor());
        let l = consistency_loss(cls, att, &schema, 1).unwrap();
        assert!(l.scalar_value().unwrap().abs() < 1e-15);
    }

    #[test]
    fn uniform_confusion_minimum_is_log_c() {
        let tape = Tape::new();
        let flat = tape.leaf(Tensor::full(&[3, 2], 0.7));
        close(uniform_confusion_loss(flat).unwrap().scalar_value().unwrap(), 2f64.ln(), 1e-15);
        let s = tape.leaf(Tensor::from_rows(&[[1.0, 2.0, 3.0]]).unwrap());
        close(
            uniform_confusion_loss(s).unwrap().scalar_value().unwrap(),
            1.407_605_964_444_380_3,
            1e-12,
        );
    }

    fn tiny_model(seed: u64) -> (AttributeSchema, ModelParams) {
        let schema = AttributeSchema::product(&["a", "b"], &[2, 2]).unwrap();
        let mut cfg = ModelConfig::for_schema(&schema, 3);
        cfg.hidden = vec![5];
        cfg.feature_dim = 4;
        cfg.domain_hidden = 3;
        cfg.seed = seed;
        (schema.clone(), ModelParams::init(&cfg).unwrap())
    }

    #[test]
    fn confusion_terms_stop_gradients() {
        let (_, params) = tiny_model(1);
        let tape = Tape::new();
        let model = params.on_tape(&tape);
        let x = tape.leaf(Tensor::from_rows(&[[1.0, 0.0, -1.0], [0.5, 2.0, 0.3]]).unwrap());
        let f = model.features(x).unwrap();
        let t = domain_confusion_loss(f, &model.domain, &[Domain::Source, Domain::Target]).unwrap();
        assert!(!t.single_domain);

        let g = tape.backward(t.classifier).unwrap();
        assert!(g.get(model.backbone[0].weight).is_none());
        assert!(g.get(model.domain.out.weight).is_some());

        let g = tape.backward(t.confusion).unwrap();
        assert!(g.get(model.domain.out.weight).is_none());
        assert!(g.get(model.backbone[0].weight).is_some());
    }

    #[test]
    fn soft_loss_with_one_hot_bank_is_hard_cross_entropy() {
        let bank = SoftLabelBank {
            temperature: 1.0,
            class: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            attributes: vec![],
            class_counts: vec![1; 3],
            attribute_counts: vec![],
        };
        let tape = Tape::new();
        let s = tape.leaf(Tensor::from_rows(&[[1.0, 2.0, 3.0]]).unwrap());
        let soft = soft_label_loss(s, &[Some(1)], &bank, 1.0, SoftLevel::Class).unwrap();
        close(soft.value.scalar_value().unwrap(), 1.407_605_964_444_380_3, 1e-12);
        assert!(matches!(
            soft_label_loss(s, &[Some(0)], &bank, 1.0, SoftLevel::Attribute(0)),
            Err(Error::Bank(_))
        ));
    }

    #[test]
    fn bank_rows_are_distributions_and_need_every_class() {
        let cfg = GeneratorConfig::default().with_uniform_counts(3, 1);
        let ds = generate(&cfg).unwrap();
        let params = ModelParams::init(&ModelConfig::for_schema(&ds.schema, ds.dims())).unwrap();
        let bank = build_soft_labels(&ds, &params, 2.0).unwrap();
        assert_eq!(bank.class.len(), ds.schema.num_classes());
        for row in bank.class.iter().chain(bank.attributes.iter().flatten()) {
            close(row.iter().sum::<f64>(), 1.0, 1e-12);
        }
        assert!(bank.class_counts.iter().all(|&n| n == 3));

        let mut missing = ds.clone();
        missing
            .examples
            .retain(|e| !(e.domain == Domain::Source && e.class == Some(4)));
        assert!(matches!(build_soft_labels(&missing, &params, 2.0), Err(Error::Bank(_))));
    }

    fn batch_for(schema: &AttributeSchema) -> Batch {
        let rows = [
            (Domain::Source, Some(0)),
            (Domain::Source, Some(3)),
            (Domain::Target, Some(2)),
            (Domain::Target, None),
        ];
        let feats = [[0.1, 0.2, 0.3], [1.0, -1.0, 0.0], [0.4, 0.4, -0.2], [2.0, 0.0, 1.0]];
        let examples: Vec<Example> = rows
            .iter()
            .zip(feats)
            .map(|(&(d, c), f)| match c {
                Some(c) => Example::labeled(f.to_vec(), d, c, schema),
                None => Example::unlabeled(f.to_vec(), d),
            })
            .collect();
        let ds = Dataset::new(schema.clone(), examples, Split::Train).unwrap();
        Batch {
            indices: (0..4).collect(),
            features: ds.features(&[0, 1, 2, 3]),
            domains: rows.iter().map(|r| r.0).collect(),
            class_labels: ds.examples.iter().map(|e| e.class).collect(),
            attribute_labels: ds.examples.iter().map(|e| e.attributes.clone()).collect(),
        }
    }

    #[test]
    fn one_hot_weights_isolate_a_term() {
        let (schema, params) = tiny_model(3);
        let batch = batch_for(&schema);
        let tape = Tape::new();
        let model = params.on_tape(&tape);
        let mut w = LossWeights::zero();
        w.class = 1.0;
        let obj = total_objective(&batch, &model, &schema, &w, None, ObjectiveMode::Unsup).unwrap();
        close(obj.report.total, obj.report.class, 1e-12);

        let all = total_objective(&batch, &model, &schema, &LossWeights::default(), None, ObjectiveMode::Unsup)
            .unwrap()
            .report;
        let expected = all.class
            + all.attributes.iter().sum::<f64>()
            + all.consistency.iter().sum::<f64>()
            + all.confusion_classifier
            + all.confusion;
        close(all.total, expected, 1e-12);
        assert_eq!(all.class_soft, 0.0);
    }

    #[test]
    fn semisup_needs_a_bank() {
        let (schema, params) = tiny_model(4);
        let batch = batch_for(&schema);
        let tape = Tape::new();
        let model = params.on_tape(&tape);
        let r = total_objective(&batch, &model, &schema, &LossWeights::default(), None, ObjectiveMode::Semisup);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn weights_accept_scalar_or_list() {
        let w: LossWeights = serde_json::from_str(r#"{"attributes": [1.0, 0.5], "consistency": 2.0}"#).unwrap();
        assert_eq!(w.attributes.get(1), 0.5);
        assert_eq!(w.consistency.get(7), 2.0);
        assert!(w.validate(2).is_ok());
        assert!(w.validate(3).is_err());
        let json = LossReport {
            step: 3,
            class: 1.0,
            attributes: vec![],
            consistency: vec![],
            confusion_classifier: 0.0,
            confusion: 0.0,
            class_soft: 0.0,
            attribute_soft: vec![],
            total: 1.0,
            wall_time: None,
        }
        .to_json_line();
        assert!(json.contains("\"L_C\":1.0") && !json.contains("wall_time"), "{json}");
    }
}
