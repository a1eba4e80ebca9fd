//! Split protocol, batch composition and the SGD training loop.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::{Dataset, Domain, LabelSource};
use crate::error::{Error, Result};
use crate::losses::{
    build_soft_labels, total_objective_with, AdaptationLoss, Batch, DomainConfusion, LossReport, LossWeights,
    ObjectiveMode, PerAttribute, SoftLabelBank,
};
use crate::model::{ModelConfig, ModelParams};
use crate::rng::{stream_rng, Stream};
use crate::tensor::Tensor;

/// One row of the comparison tables: which terms of the objective are on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SourceOnly,
    SourcePlusTarget,
    SourceAtt,
    SourceAttAcl,
    Dc,
    DcAttAcl,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::SourceOnly,
        Mode::SourcePlusTarget,
        Mode::SourceAtt,
        Mode::SourceAttAcl,
        Mode::Dc,
        Mode::DcAttAcl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::SourceOnly => "source-only",
            Mode::SourcePlusTarget => "source-plus-target",
            Mode::SourceAtt => "source-att",
            Mode::SourceAttAcl => "source-att-acl",
            Mode::Dc => "dc",
            Mode::DcAttAcl => "dc-att-acl",
        }
    }

    pub fn adapts(self) -> bool {
        matches!(self, Mode::Dc | Mode::DcAttAcl)
    }

    pub fn uses_attributes(self) -> bool {
        matches!(self, Mode::SourceAtt | Mode::SourceAttAcl | Mode::DcAttAcl)
    }

    pub fn uses_consistency(self) -> bool {
        matches!(self, Mode::SourceAttAcl | Mode::DcAttAcl)
    }

    /// Whether labeled target examples may be used at all.
    pub fn uses_target_labels(self) -> bool {
        self != Mode::SourceOnly
    }

    /// `base` with every term this mode leaves out set to zero.
    pub fn weights(self, base: &LossWeights, regime: Regime) -> LossWeights {
        let mut w = base.clone();
        if !self.uses_attributes() {
            w.attributes = PerAttribute::All(0.0);
            w.attribute_soft = 0.0;
        }
        if !self.uses_consistency() {
            w.consistency = PerAttribute::All(0.0);
        }
        if !self.adapts() {
            w.confusion = 0.0;
            w.class_soft = 0.0;
            w.attribute_soft = 0.0;
        }
        if regime == Regime::Unsup {
            w.class_soft = 0.0;
            w.attribute_soft = 0.0;
        }
        w
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown mode {:?}", s)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// No target labels.
    #[default]
    Unsup,
    /// Target labels for the most frequent half of the classes.
    Semisup,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Unsup => "unsup",
            Regime::Semisup => "semisup",
        }
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unsup" => Ok(Regime::Unsup),
            "semisup" => Ok(Regime::Semisup),
            _ => Err(Error::config(format!("unknown regime {:?}", s))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Half source, half target.
    pub batch_size: usize,
    pub steps: usize,
    pub mode: Mode,
    pub regime: Regime,
    pub weights: LossWeights,
    pub seed: u64,
    /// Steps between soft-label rebuilds; one epoch when unset.
    pub soft_label_refresh: Option<usize>,
    /// Steps between checkpoints; 0 disables them.
    pub checkpoint_every: usize,
    /// Adds elapsed seconds to each log line, which makes the log
    /// non-reproducible.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            momentum: 0.9,
            batch_size: 64,
            steps: 1000,
            mode: Mode::DcAttAcl,
            regime: Regime::Unsup,
            weights: LossWeights::default(),
            seed: 0,
            soft_label_refresh: None,
            checkpoint_every: 0,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config("learning_rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        if self.batch_size < 2 || !self.batch_size.is_multiple_of(2) {
            return Err(Error::config(format!(
                "batch_size must be even and at least 2, got {}",
                self.batch_size
            )));
        }
        if self.soft_label_refresh == Some(0) {
            return Err(Error::config("soft_label_refresh must be positive"));
        }
        Ok(())
    }

    /// The loss weights actually used for this mode and regime.
    pub fn effective_weights(&self) -> LossWeights {
        self.mode.weights(&self.weights, self.regime)
    }

    /// Steps for one pass over the larger domain.
    pub fn epoch_steps(&self, dataset: &Dataset) -> usize {
        let half = self.batch_size / 2;
        let larger = dataset
            .indices_in(Domain::Source)
            .len()
            .max(dataset.num_target());
        larger.div_ceil(half).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub regime: Regime,
    pub labeled_classes: Vec<usize>,
    pub held_out: Vec<usize>,
    /// Per dataset example; always false for source examples.
    pub target_labeled: Vec<bool>,
}

impl SplitPlan {
    pub fn num_target_labeled(&self) -> usize {
        self.target_labeled.iter().filter(|&&l| l).count()
    }

    pub fn is_held_out(&self, class: usize) -> bool {
        self.held_out.binary_search(&class).is_ok()
    }
}

/// Labels the ⌈K/2⌉ classes with the most labeled target examples (ties to
/// the lower id) and holds out the rest. The unsupervised regime holds out
/// every class and labels no target example.
pub fn make_split(dataset: &Dataset, regime: Regime) -> SplitPlan {
    let k = dataset.schema.num_classes();
    let mut target_labeled = vec![false; dataset.len()];
    if regime == Regime::Unsup {
        return SplitPlan {
            regime,
            labeled_classes: Vec::new(),
            held_out: (0..k).collect(),
            target_labeled,
        };
    }
    let mut counts = vec![0usize; k];
    for e in &dataset.examples {
        if let (Domain::Target, true, Some(c)) = (e.domain, e.labeled, e.class) {
            counts[c] += 1;
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut labeled_classes = order[..k.div_ceil(2)].to_vec();
    let mut held_out = order[k.div_ceil(2)..].to_vec();
    labeled_classes.sort_unstable();
    held_out.sort_unstable();
    for (flag, e) in target_labeled.iter_mut().zip(&dataset.examples) {
        *flag = e.domain == Domain::Target
            && e.labeled
            && e.class.is_some_and(|c| labeled_classes.binary_search(&c).is_ok());
    }
    SplitPlan {
        regime,
        labeled_classes,
        held_out,
        target_labeled,
    }
}

/// Draws `B/2` source and `B/2` target rows uniformly with replacement.
/// Labels are fetched only for source rows and for target rows the split
/// marks as labeled, and only when `use_target_labels` allows it.
pub fn compose_batch(
    dataset: &Dataset,
    labels: &dyn LabelSource,
    split: &SplitPlan,
    use_target_labels: bool,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Batch> {
    if batch_size < 2 || !batch_size.is_multiple_of(2) {
        return Err(Error::config(format!("batch_size must be even and at least 2, got {}", batch_size)));
    }
    let source = dataset.indices_in(Domain::Source);
    let target = dataset.indices_in(Domain::Target);
    if source.is_empty() || target.is_empty() {
        return Err(Error::contract("training needs both source and target examples"));
    }
    let half = batch_size / 2;
    let mut indices = Vec::with_capacity(batch_size);
    indices.extend((0..half).map(|_| source[rng.random_range(0..source.len())]));
    indices.extend((0..half).map(|_| target[rng.random_range(0..target.len())]));

    let mut class_labels = Vec::with_capacity(batch_size);
    let mut attribute_labels = Vec::with_capacity(batch_size);
    let mut domains = Vec::with_capacity(batch_size);
    for &i in &indices {
        let e = &dataset.examples[i];
        let allowed = match e.domain {
            Domain::Source => e.labeled,
            Domain::Target => use_target_labels && split.target_labeled[i],
        };
        if allowed {
            class_labels.push(labels.class_label(i));
            attribute_labels.push(labels.attribute_labels(i));
        } else {
            class_labels.push(None);
            attribute_labels.push(None);
        }
        domains.push(e.domain);
    }
    Ok(Batch {
        features: dataset.features(&indices),
        indices,
        domains,
        class_labels,
        attribute_labels,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub log: Vec<LossReport>,
    pub split: SplitPlan,
    /// `(steps completed, parameters)`.
    pub checkpoints: Vec<(usize, ModelParams)>,
    pub warnings: Vec<String>,
}

impl TrainOutput {
    /// The log as JSON lines.
    pub fn log_text(&self) -> String {
        self.log.iter().map(|r| r.to_json_line() + "\n").collect()
    }
}

pub fn train(dataset: &Dataset, model: &ModelConfig, config: &TrainConfig) -> Result<TrainOutput> {
    train_with_labels(dataset, dataset, model, config, &DomainConfusion)
}

/// Training with labels served by `labels` and a custom adaptation loss.
pub fn train_with_labels(
    dataset: &Dataset,
    labels: &dyn LabelSource,
    model: &ModelConfig,
    config: &TrainConfig,
    adaptation: &dyn AdaptationLoss,
) -> Result<TrainOutput> {
    config.validate()?;
    model.validate()?;
    model.check_schema(&dataset.schema)?;
    if model.input_dim != dataset.dims() {
        return Err(Error::config(format!(
            "model expects {} input features, dataset has {}",
            model.input_dim,
            dataset.dims()
        )));
    }
    let split = make_split(dataset, config.regime);
    let weights = config.effective_weights();
    weights.validate(dataset.schema.num_attributes())?;
    let soft = config.regime == Regime::Semisup
        && config.mode.uses_target_labels()
        && (weights.class_soft > 0.0 || weights.attribute_soft > 0.0);
    let refresh = config.soft_label_refresh.unwrap_or_else(|| config.epoch_steps(dataset));

    let mut params = ModelParams::init(model)?;
    let mut velocity: Vec<Tensor> = params
        .tensors_mut()
        .iter()
        .map(|t| Tensor::zeros(t.shape()))
        .collect();
    let mut rng = stream_rng(config.seed, Stream::Sampling);
    let mut bank: Option<SoftLabelBank> = None;
    let mut log = Vec::with_capacity(config.steps);
    let mut checkpoints = Vec::new();
    let mut warnings = Vec::new();
    let start = Instant::now();

    for step in 0..config.steps {
        if soft && step % refresh == 0 {
            bank = Some(build_soft_labels(dataset, &params, weights.temperature)?);
        }
        let batch = compose_batch(
            dataset,
            labels,
            &split,
            config.mode.uses_target_labels(),
            config.batch_size,
            &mut rng,
        )?;
        let diverged = |e: Error| match e {
            Error::Numeric(message) => Error::Divergence { step, message },
            other => other,
        };
        let tape = Tape::new();
        let vars = params.on_tape(&tape);
        let mode = if soft { ObjectiveMode::Semisup } else { ObjectiveMode::Unsup };
        let objective = total_objective_with(
            &batch,
            &vars,
            &dataset.schema,
            &weights,
            bank.as_ref(),
            mode,
            adaptation,
        )
        .map_err(diverged)?;
        let mut report = objective.report;
        report.step = step;
        if config.record_wall_time {
            report.wall_time = Some(start.elapsed().as_secs_f64());
        }
        if !report.total.is_finite() {
            return Err(Error::Divergence {
                step,
                message: format!("non-finite loss: {}", report.to_json_line()),
            });
        }
        if objective.single_domain && weights.confusion > 0.0 {
            warnings.push(format!("step {}: batch holds a single domain", step));
        }
        let grads = vars.gradients(&tape.backward(objective.total).map_err(diverged)?);
        drop(vars);

        let (lr, mu) = (config.learning_rate, config.momentum);
        for ((p, v), g) in params.tensors_mut().into_iter().zip(&mut velocity).zip(&grads) {
            for ((pi, vi), gi) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                *vi = mu * *vi - lr * gi;
                *pi += *vi;
            }
        }
        if !params.is_finite() {
            return Err(Error::Divergence {
                step,
                message: format!("non-finite parameters after update; losses {}", report.to_json_line()),
            });
        }
        log.push(report);
        if config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 {
            checkpoints.push((step + 1, params.clone()));
        }
    }
    Ok(TrainOutput {
        params,
        log,
        split,
        checkpoints,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, Example, GeneratorConfig, Split};
    use crate::schema::AttributeSchema;

    fn counts_dataset(counts: &[usize]) -> Dataset {
        let schema = AttributeSchema::product(&["c"], &[counts.len()]).unwrap();
        let mut examples = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            examples.push(Example::labeled(vec![0.0], Domain::Source, c, &schema));
            for _ in 0..n {
                examples.push(Example::labeled(vec![c as f64], Domain::Target, c, &schema));
            }
        }
        Dataset::new(schema, examples, Split::Train).unwrap()
    }

    #[test]
    fn split_takes_most_labeled_half() {
        let plan = make_split(&counts_dataset(&[10, 9, 8, 7]), Regime::Semisup);
        assert_eq!(plan.labeled_classes, vec![0, 1]);
        assert_eq!(plan.held_out, vec![2, 3]);
        assert_eq!(plan.num_target_labeled(), 19);

        let plan = make_split(&counts_dataset(&[1, 5, 5, 2, 0]), Regime::Semisup);
        assert_eq!(plan.labeled_classes, vec![1, 2, 3]);
    }

    #[test]
    fn split_ties_go_to_lower_ids() {
        let plan = make_split(&counts_dataset(&[3, 3, 3, 3]), Regime::Semisup);
        assert_eq!(plan.labeled_classes, vec![0, 1]);
    }

    #[test]
    fn unsup_split_labels_nothing() {
        let plan = make_split(&counts_dataset(&[3, 1]), Regime::Unsup);
        assert_eq!(plan.num_target_labeled(), 0);
        assert_eq!(plan.held_out, vec![0, 1]);
    }

    #[test]
    fn batches_are_half_and_half_and_reproducible() {
        let ds = generate(&GeneratorConfig::default().with_uniform_counts(2, 2)).unwrap();
        let plan = make_split(&ds, Regime::Semisup);
        let mut a = stream_rng(5, Stream::Sampling);
        let mut b = stream_rng(5, Stream::Sampling);
        let x = compose_batch(&ds, &ds, &plan, true, 8, &mut a).unwrap();
        let y = compose_batch(&ds, &ds, &plan, true, 8, &mut b).unwrap();
        assert_eq!(x, y);
        assert_eq!(&x.domains[..4], &[Domain::Source; 4]);
        assert_eq!(&x.domains[4..], &[Domain::Target; 4]);
        for (r, &i) in x.indices.iter().enumerate() {
            if ds.examples[i].domain == Domain::Target {
                assert_eq!(x.class_labels[r].is_some(), plan.target_labeled[i]);
            } else {
                assert!(x.class_labels[r].is_some());
            }
        }
        assert!(compose_batch(&ds, &ds, &plan, true, 7, &mut a).is_err());
    }

    #[test]
    fn mode_matrix() {
        let base = LossWeights::default();
        let w = Mode::SourceOnly.weights(&base, Regime::Semisup);
        assert_eq!(w.class, 1.0);
        assert_eq!(
            (w.attributes.get(0), w.consistency.get(0), w.confusion, w.class_soft, w.attribute_soft),
            (0.0, 0.0, 0.0, 0.0, 0.0)
        );
        let w = Mode::DcAttAcl.weights(&base, Regime::Semisup);
        assert_eq!(w, base);
        let w = Mode::DcAttAcl.weights(&base, Regime::Unsup);
        assert_eq!((w.class_soft, w.attribute_soft, w.confusion), (0.0, 0.0, 1.0));
        let w = Mode::Dc.weights(&base, Regime::Semisup);
        assert_eq!((w.class_soft, w.attribute_soft, w.attributes.get(0)), (1.0, 0.0, 0.0));
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("dc-att".parse::<Mode>().is_err());
    }

    fn small_setup() -> (Dataset, ModelConfig) {
        let ds = generate(&GeneratorConfig::default().with_uniform_counts(4, 4)).unwrap();
        let mut m = ModelConfig::for_schema(&ds.schema, ds.dims());
        m.hidden = vec![16];
        m.feature_dim = 8;
        m.domain_hidden = 8;
        (ds, m)
    }

    #[test]
    fn zero_learning_rate_keeps_initial_params() {
        let (ds, m) = small_setup();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            steps: 5,
            batch_size: 8,
            regime: Regime::Semisup,
            ..TrainConfig::default()
        };
        let out = train(&ds, &m, &cfg).unwrap();
        assert_eq!(out.params, ModelParams::init(&m).unwrap());
        assert_eq!(out.log.len(), 5);
    }

    #[test]
    fn training_is_deterministic_and_checkpoints() {
        let (ds, m) = small_setup();
        let cfg = TrainConfig {
            learning_rate: 0.01,
            steps: 6,
            batch_size: 8,
            checkpoint_every: 3,
            regime: Regime::Semisup,
            soft_label_refresh: Some(2),
            ..TrainConfig::default()
        };
        let a = train(&ds, &m, &cfg).unwrap();
        let b = train(&ds, &m, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log_text(), b.log_text());
        assert_eq!(a.checkpoints.iter().map(|c| c.0).collect::<Vec<_>>(), vec![3, 6]);
        assert_eq!(a.checkpoints[1].1, a.params);
        assert!(a.log.iter().any(|r| r.class_soft > 0.0));
    }

    #[test]
    fn divergence_reports_the_step() {
        let (ds, m) = small_setup();
        let cfg = TrainConfig {
            learning_rate: 1e30,
            steps: 50,
            batch_size: 8,
            ..TrainConfig::default()
        };
        match train(&ds, &m, &cfg) {
            Err(Error::Divergence { step, .. }) => assert!(step < 50),
            other => panic!("expected divergence, got {:?}", other.map(|o| o.log.len())),
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let (ds, m) = small_setup();
        for cfg in [
            TrainConfig { batch_size: 3, ..TrainConfig::default() },
            TrainConfig { learning_rate: -1.0, ..TrainConfig::default() },
            TrainConfig { soft_label_refresh: Some(0), ..TrainConfig::default() },
        ] {
            assert!(matches!(train(&ds, &m, &cfg), Err(Error::Config(_))));
        }
    }
}
