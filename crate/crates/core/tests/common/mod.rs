#![allow(dead_code)]

use std::cell::Cell;

use mtda::autodiff::{Tape, Var};
use mtda::data::{Dataset, Domain, Example, LabelSource, Split};
use mtda::gradcheck::{check_gradients, GradCheckConfig, GradCheckReport};
use mtda::losses::{
    attribute_softmax_loss, class_softmax_loss, consistency_loss, domain_classifier_loss, multitask_softmax,
    soft_label_loss, total_consistency, total_objective, uniform_confusion_loss, Batch, LossWeights,
    ObjectiveMode, SoftLabelBank, SoftLevel,
};
use mtda::model::{DomainHeadVars, LinearVars, ModelConfig, ModelParams, ModelVars};
use mtda::schema::{Attribute, AttributeSchema};
use mtda::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// A random valid schema with `2..=max_k` classes and 1–3 attributes.
pub fn random_schema(rng: &mut ChaCha8Rng, max_k: usize) -> AttributeSchema {
    let k = rng.random_range(2..=max_k);
    let n_attr = rng.random_range(1..=3);
    let attributes = (0..n_attr)
        .map(|n| {
            let a_k = rng.random_range(2..=k);
            // every category gets one class, the rest are random
            let mut map: Vec<usize> = (0..k).map(|c| if c < a_k { c } else { rng.random_range(0..a_k) }).collect();
            map.shuffle(rng);
            Attribute::new(format!("a{n}"), a_k, map)
        })
        .collect();
    AttributeSchema::new(k, attributes).unwrap()
}

pub fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

pub fn random_labels(rng: &mut ChaCha8Rng, rows: usize, classes: usize) -> Vec<Option<usize>> {
    let mut labels: Vec<Option<usize>> = (0..rows)
        .map(|_| rng.random_bool(0.75).then(|| rng.random_range(0..classes)))
        .collect();
    labels[0] = Some(rng.random_range(0..classes));
    labels
}

pub fn random_bank(rng: &mut ChaCha8Rng, schema: &AttributeSchema) -> SoftLabelBank {
    let k = schema.num_classes();
    SoftLabelBank {
        temperature: 2.0,
        class: (0..k).map(|_| random_distribution(rng, k)).collect(),
        attributes: schema
            .attributes()
            .iter()
            .map(|a| (0..a.categories).map(|_| random_distribution(rng, a.categories)).collect())
            .collect(),
        class_counts: vec![1; k],
        attribute_counts: schema.attributes().iter().map(|a| vec![1; a.categories]).collect(),
    }
}

pub fn small_model(schema: &AttributeSchema, input_dim: usize, seed: u64) -> ModelParams {
    let cfg = ModelConfig {
        input_dim,
        hidden: vec![5],
        feature_dim: 4,
        num_classes: schema.num_classes(),
        attribute_sizes: schema.attribute_sizes(),
        domain_hidden: 3,
        seed,
    };
    ModelParams::init(&cfg).unwrap()
}

pub fn params_as_tensors(params: &ModelParams) -> Vec<Tensor> {
    params.named_tensors().into_iter().map(|(_, t)| t.clone()).collect()
}

fn linear<'t>(v: &[Var<'t>]) -> LinearVars<'t> {
    LinearVars { weight: v[0], bias: v[1] }
}

fn head_vars<'t>(v: &[Var<'t>]) -> DomainHeadVars<'t> {
    DomainHeadVars {
        hidden: linear(&v[0..2]),
        out: linear(&v[2..4]),
    }
}

/// A batch of `rows` examples, the first half source.
pub fn random_batch(rng: &mut ChaCha8Rng, schema: &AttributeSchema, rows: usize, dims: usize) -> Batch {
    let domains: Vec<Domain> = (0..rows)
        .map(|r| if r < rows / 2 { Domain::Source } else { Domain::Target })
        .collect();
    let class_labels = random_labels(rng, rows, schema.num_classes());
    Batch {
        indices: (0..rows).collect(),
        features: normal_tensor(rng, &[rows, dims], 1.0),
        attribute_labels: class_labels.iter().map(|c| c.map(|c| schema.attribute_labels(c))).collect(),
        class_labels,
        domains,
    }
}

/// Finite-difference checks of every loss for one seed.
pub fn gradient_suite(seed: u64) -> Vec<(&'static str, GradCheckReport)> {
    let cfg = GradCheckConfig::default();
    let mut rng = rng(seed);
    let schema = random_schema(&mut rng, 6);
    let k = schema.num_classes();
    let sizes = schema.attribute_sizes();
    let rows = 4;
    let labels = random_labels(&mut rng, rows, k);
    let attr_labels: Vec<Vec<Option<usize>>> = (0..schema.num_attributes())
        .map(|n| labels.iter().map(|l| l.map(|c| schema.attribute_labels(c)[n])).collect())
        .collect();
    let class_scores = normal_tensor(&mut rng, &[rows, k], 2.0);
    let attr_scores: Vec<Tensor> = sizes.iter().map(|&a| normal_tensor(&mut rng, &[rows, a], 2.0)).collect();
    let domains: Vec<Domain> = (0..rows)
        .map(|_| if rng.random_bool(0.5) { Domain::Source } else { Domain::Target })
        .collect();
    let bank = random_bank(&mut rng, &schema);
    let weights = LossWeights {
        class: rng.random_range(0.1..2.0),
        attributes: mtda::losses::PerAttribute::Each((0..sizes.len()).map(|_| rng.random_range(0.1..2.0)).collect()),
        consistency: mtda::losses::PerAttribute::Each((0..sizes.len()).map(|_| rng.random_range(0.1..2.0)).collect()),
        ..LossWeights::default()
    };

    let mut all_scores = vec![class_scores.clone()];
    all_scores.extend(attr_scores.iter().cloned());

    let mut out = Vec::new();
    let mut push = |name, r: mtda::Result<GradCheckReport>| out.push((name, r.expect(name)));

    push(
        "class softmax",
        check_gradients(std::slice::from_ref(&class_scores), cfg, |_, v| Ok(class_softmax_loss(v[0], &labels)?.value)),
    );
    push(
        "attribute softmax",
        check_gradients(&[attr_scores[0].clone()], cfg, |_, v| {
            Ok(attribute_softmax_loss(v[0], &attr_labels[0], &schema, 0)?.value)
        }),
    );
    push(
        "multitask softmax",
        check_gradients(&all_scores, cfg, |_, v| {
            let class = class_softmax_loss(v[0], &labels)?.value;
            let attrs = (0..sizes.len())
                .map(|n| Ok(attribute_softmax_loss(v[n + 1], &attr_labels[n], &schema, n)?.value))
                .collect::<mtda::Result<Vec<_>>>()?;
            multitask_softmax(&attrs, class, &weights)
        }),
    );
    push(
        "consistency",
        check_gradients(&[class_scores.clone(), attr_scores[0].clone()], cfg, |_, v| {
            consistency_loss(v[0], v[1], &schema, 0)
        }),
    );
    push(
        "total consistency",
        check_gradients(&all_scores, cfg, |_, v| total_consistency(v[0], &v[1..], &schema, &weights)),
    );
    let domain_scores = normal_tensor(&mut rng, &[rows, 2], 2.0);
    push(
        "domain classifier",
        check_gradients(std::slice::from_ref(&domain_scores), cfg, |_, v| domain_classifier_loss(v[0], &domains)),
    );
    push(
        "uniform confusion",
        check_gradients(&[domain_scores], cfg, |_, v| uniform_confusion_loss(v[0])),
    );

    // Each half of domain confusion against the inputs it trains.
    let features = normal_tensor(&mut rng, &[rows, 4], 1.0);
    let head: Vec<Tensor> = vec![
        normal_tensor(&mut rng, &[4, 3], 0.7),
        normal_tensor(&mut rng, &[1, 3], 0.3),
        normal_tensor(&mut rng, &[3, 2], 0.7),
        normal_tensor(&mut rng, &[1, 2], 0.3),
    ];
    push(
        "domain confusion: classifier half",
        check_gradients(&head, cfg, |tape, v| {
            let f = tape.leaf(features.clone());
            Ok(mtda::losses::domain_confusion_loss(f, &head_vars(v), &domains)?.classifier)
        }),
    );
    push(
        "domain confusion: feature half",
        check_gradients(std::slice::from_ref(&features), cfg, |tape, v| {
            let h: Vec<Var<'_>> = head.iter().map(|t| tape.leaf(t.clone())).collect();
            Ok(mtda::losses::domain_confusion_loss(v[0], &head_vars(&h), &domains)?.confusion)
        }),
    );
    push(
        "class soft labels",
        check_gradients(std::slice::from_ref(&class_scores), cfg, |_, v| {
            Ok(soft_label_loss(v[0], &labels, &bank, 2.0, SoftLevel::Class)?.value)
        }),
    );
    push(
        "attribute soft labels",
        check_gradients(&[attr_scores[0].clone()], cfg, |_, v| {
            Ok(soft_label_loss(v[0], &attr_labels[0], &bank, 2.0, SoftLevel::Attribute(0))?.value)
        }),
    );

    // Whole objective through the network, with the adversarial pair off.
    let dims = 3;
    let params = small_model(&schema, dims, seed);
    let batch = random_batch(&mut rng, &schema, 6, dims);
    let mut w = weights.clone();
    w.confusion = 0.0;
    push(
        "total objective",
        check_gradients(&params_as_tensors(&params), cfg, |_, v| {
            let model = ModelVars::from_vars(&params.config, v)?;
            Ok(total_objective(&batch, &model, &schema, &w, Some(&bank), ObjectiveMode::Semisup)?.total)
        }),
    );
    out
}

/// Two-pass Pearson correlation.
pub fn two_pass_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Per-row mean of class scores within each category, by explicit loops.
pub fn brute_aggregate(scores: &Tensor, schema: &AttributeSchema, n: usize) -> Vec<Vec<f64>> {
    let attr = &schema.attributes()[n];
    let (rows, k) = scores.dims2().unwrap();
    (0..rows)
        .map(|r| {
            (0..attr.categories)
                .map(|cat| {
                    let mut sum = 0.0;
                    let mut count = 0;
                    for c in 0..k {
                        if attr.class_to_category[c] == cat {
                            sum += scores.get2(r, c);
                            count += 1;
                        }
                    }
                    sum / count as f64
                })
                .collect()
        })
        .collect()
}

/// Gallery indices sorted by squared distance by selection sort.
pub fn brute_neighbors(query: &[f64], gallery: &Tensor) -> Vec<(usize, f64)> {
    let (n, _) = gallery.dims2().unwrap();
    let mut left: Vec<(usize, f64)> = (0..n)
        .map(|g| {
            let d2: f64 = query.iter().zip(gallery.row(g)).map(|(a, b)| (a - b).powi(2)).sum();
            (g, d2)
        })
        .collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for i in 1..left.len() {
            if left[i].1 < left[best].1 || (left[i].1 == left[best].1 && left[i].0 < left[best].0) {
                best = i;
            }
        }
        let (g, d2) = left.remove(best);
        out.push((g, d2.sqrt()));
    }
    out
}

fn softmax_row(scores: &[f64], temperature: f64) -> Vec<f64> {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| ((s - m) / temperature).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Soft labels from one forward pass per source example.
pub fn brute_soft_labels(dataset: &Dataset, params: &ModelParams, temperature: f64) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let schema = &dataset.schema;
    let k = schema.num_classes();
    let mut class_sum = vec![vec![0.0; k]; k];
    let mut class_n = vec![0usize; k];
    let mut attr_sum: Vec<Vec<Vec<f64>>> = schema
        .attributes()
        .iter()
        .map(|a| vec![vec![0.0; a.categories]; a.categories])
        .collect();
    let mut attr_n: Vec<Vec<usize>> = schema.attributes().iter().map(|a| vec![0; a.categories]).collect();
    for e in &dataset.examples {
        let (Domain::Source, Some(c)) = (e.domain, e.class) else { continue };
        let x = Tensor::from_rows(std::slice::from_ref(&e.features)).unwrap();
        let f = params.features(&x).unwrap();
        let p = softmax_row(params.class_scores(&f).unwrap().row(0), temperature);
        for (s, v) in class_sum[c].iter_mut().zip(&p) {
            *s += v;
        }
        class_n[c] += 1;
        for (n, attr) in schema.attributes().iter().enumerate() {
            let cat = attr.class_to_category[c];
            let q = softmax_row(params.attribute_scores(&f, n).unwrap().row(0), temperature);
            for (s, v) in attr_sum[n][cat].iter_mut().zip(&q) {
                *s += v;
            }
            attr_n[n][cat] += 1;
        }
    }
    let class = class_sum
        .into_iter()
        .zip(class_n)
        .map(|(s, n)| s.into_iter().map(|v| v / n as f64).collect())
        .collect();
    let attrs = attr_sum
        .into_iter()
        .zip(attr_n)
        .map(|(rows, ns)| {
            rows.into_iter()
                .zip(ns)
                .map(|(s, n)| s.into_iter().map(|v| v / n as f64).collect())
                .collect()
        })
        .collect();
    (class, attrs)
}

/// A small random dataset where every class has at least one source example.
pub fn random_dataset(rng: &mut ChaCha8Rng, schema: &AttributeSchema, dims: usize) -> Dataset {
    let mut examples = Vec::new();
    for c in 0..schema.num_classes() {
        for _ in 0..rng.random_range(1..=3) {
            let f = (0..dims).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            examples.push(Example::labeled(f, Domain::Source, c, schema));
        }
        for _ in 0..rng.random_range(0..=2) {
            let f = (0..dims).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            examples.push(Example::labeled(f, Domain::Target, c, schema));
        }
    }
    Dataset::new(schema.clone(), examples, Split::Train).unwrap()
}

/// Serves labels from a dataset and counts reads of forbidden examples.
pub struct TrackingLabels<'a> {
    pub inner: &'a Dataset,
    pub forbidden: Vec<bool>,
    pub reads: Cell<usize>,
    pub forbidden_reads: Cell<usize>,
}

impl<'a> TrackingLabels<'a> {
    pub fn new(inner: &'a Dataset, forbidden: Vec<bool>) -> Self {
        TrackingLabels {
            inner,
            forbidden,
            reads: Cell::new(0),
            forbidden_reads: Cell::new(0),
        }
    }

    fn note(&self, index: usize) {
        self.reads.set(self.reads.get() + 1);
        if self.forbidden[index] {
            self.forbidden_reads.set(self.forbidden_reads.get() + 1);
        }
    }
}

impl LabelSource for TrackingLabels<'_> {
    fn class_label(&self, index: usize) -> Option<usize> {
        self.note(index);
        self.inner.class_label(index)
    }

    fn attribute_labels(&self, index: usize) -> Option<Vec<usize>> {
        self.note(index);
        self.inner.attribute_labels(index)
    }
}

/// Runs `f` on a fresh tape with `t` as a leaf and returns the scalar.
pub fn eval_scalar(t: &Tensor, f: impl for<'t> Fn(Var<'t>) -> mtda::Result<Var<'t>>) -> f64 {
    let tape = Tape::new();
    f(tape.leaf(t.clone())).unwrap().scalar_value().unwrap()
}

/// Largest deviation of library aggregation from [`brute_aggregate`].
pub fn aggregation_oracle_error(instances: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = rng(1000 + seed);
        let schema = random_schema(&mut rng, 8);
        let rows = rng.random_range(1..5);
        let scores = normal_tensor(&mut rng, &[rows, schema.num_classes()], 3.0);
        for n in 0..schema.num_attributes() {
            let tape = Tape::new();
            let got = mtda::losses::aggregate_class_scores(tape.leaf(scores.clone()), &schema, n)
                .unwrap()
                .to_tensor();
            for (r, row) in brute_aggregate(&scores, &schema, n).iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    worst = worst.max((got.get2(r, c) - v).abs());
                }
            }
        }
    }
    worst
}

pub fn pearson_oracle_error(instances: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = rng(2000 + seed);
        let n = rng.random_range(3..60);
        let x: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * 10.0).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| rng.random_range(-1.0..1.0) * v + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let got = mtda::eval::pearson(&x, &y).unwrap();
        worst = worst.max((got - two_pass_pearson(&x, &y)).abs());
    }
    worst
}

/// Largest distance deviation; infinite when a ranking differs.
pub fn neighbor_oracle_error(instances: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = rng(3000 + seed);
        let d = rng.random_range(1..5);
        let n = rng.random_range(2..21);
        let mut gallery = normal_tensor(&mut rng, &[n, d], 1.0);
        // duplicate a row so ties occur
        let dup = gallery.row(0).to_vec();
        gallery.data_mut()[(n - 1) * d..].copy_from_slice(&dup);
        let queries = normal_tensor(&mut rng, &[3, d], 1.0);
        let got = mtda::eval::nearest_rows(&queries, &gallery, n).unwrap();
        for (q, ranked) in got.iter().enumerate() {
            let want = brute_neighbors(queries.row(q), &gallery);
            for (g, w) in ranked.iter().zip(&want) {
                if g.index != w.0 {
                    return f64::INFINITY;
                }
                worst = worst.max((g.distance - w.1).abs());
            }
        }
    }
    worst
}

pub fn soft_label_oracle_error(instances: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = rng(4000 + seed);
        let schema = random_schema(&mut rng, 6);
        let dims = rng.random_range(1..4);
        let ds = random_dataset(&mut rng, &schema, dims);
        let params = small_model(&schema, dims, seed);
        let tau = rng.random_range(0.5..4.0);
        let bank = mtda::losses::build_soft_labels(&ds, &params, tau).unwrap();
        let (class, attrs) = brute_soft_labels(&ds, &params, tau);
        let pairs = bank.class.iter().flatten().zip(class.iter().flatten());
        let attr_pairs = bank.attributes.iter().flatten().flatten().zip(attrs.iter().flatten().flatten());
        for (a, b) in pairs.chain(attr_pairs) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().map(|v| v * v.ln()).sum::<f64>()
}

/// `(identity, largest deviation, tolerance)` for each analytic identity.
pub fn identity_errors() -> Vec<(&'static str, f64, f64)> {
    let mut out = Vec::new();
    let mut rng = rng(5000);

    let mut matched = 0.0f64;
    for _ in 0..20 {
        let schema = random_schema(&mut rng, 8);
        let cls = normal_tensor(&mut rng, &[3, schema.num_classes()], 2.0);
        for n in 0..schema.num_attributes() {
            let tape = Tape::new();
            let c = tape.leaf(cls.clone());
            let att = tape.leaf(mtda::losses::aggregate_class_scores(c, &schema, n).unwrap().to_tensor());
            let v = consistency_loss(c, att, &schema, n).unwrap().scalar_value().unwrap();
            matched = matched.max(v.abs());
        }
    }
    out.push(("consistency loss is 0 on matched distributions", matched, 1e-10));

    let mut conf = 0.0f64;
    for _ in 0..20 {
        let rows = rng.random_range(1..6);
        let level: f64 = rng.random_range(-5.0..5.0);
        let v = eval_scalar(&Tensor::full(&[rows, 2], level), uniform_confusion_loss);
        conf = conf.max((v - 2f64.ln()).abs());
        let other = eval_scalar(&normal_tensor(&mut rng, &[rows, 2], 2.0), uniform_confusion_loss);
        if other < 2f64.ln() - 1e-12 {
            conf = f64::INFINITY;
        }
    }
    out.push(("confusion loss minimum is ln 2 at uniform", conf, 1e-12));

    let mut soft_max = 0.0f64;
    for _ in 0..20 {
        let k = rng.random_range(2..30);
        let labels: Vec<Option<usize>> = (0..4).map(|_| Some(rng.random_range(0..k))).collect();
        let level: f64 = rng.random_range(-5.0..5.0);
        let v = eval_scalar(&Tensor::full(&[4, k], level), |s| Ok(class_softmax_loss(s, &labels)?.value));
        soft_max = soft_max.max((v - (k as f64).ln()).abs());
    }
    out.push(("softmax loss is ln K at uniform", soft_max, 1e-12));

    let mut soft = 0.0f64;
    for _ in 0..20 {
        let schema = random_schema(&mut rng, 6);
        let k = schema.num_classes();
        let bank = random_bank(&mut rng, &schema);
        let tau = bank.temperature;
        let c = rng.random_range(0..k);
        let q = &bank.class[c];
        let at_match = Tensor::from_rows(&[q.iter().map(|v| tau * v.ln()).collect::<Vec<_>>()]).unwrap();
        let v = eval_scalar(&at_match, |s| Ok(soft_label_loss(s, &[Some(c)], &bank, tau, SoftLevel::Class)?.value));
        soft = soft.max((v - entropy(q)).abs());
        let other = eval_scalar(&normal_tensor(&mut rng, &[1, k], 2.0), |s| {
            Ok(soft_label_loss(s, &[Some(c)], &bank, tau, SoftLevel::Class)?.value)
        });
        if other < entropy(q) - 1e-10 {
            soft = f64::INFINITY;
        }
    }
    out.push(("soft-label loss is at least the entry entropy, equal at match", soft, 1e-10));
    out
}

/// Semi-supervised dc-att-acl training with tracked label reads; returns
/// `(label reads, reads of held-out target examples)`.
pub fn hygiene_run(steps: usize) -> (usize, usize) {
    use mtda::data::{generate, GeneratorConfig};
    use mtda::losses::DomainConfusion;
    use mtda::train::{make_split, train_with_labels, Mode, Regime, TrainConfig};

    let ds = generate(&GeneratorConfig::default()).unwrap();
    let split = make_split(&ds, Regime::Semisup);
    let forbidden: Vec<bool> = ds
        .examples
        .iter()
        .map(|e| e.domain == Domain::Target && split.is_held_out(e.class.unwrap()))
        .collect();
    assert!(forbidden.iter().any(|&f| f));
    let labels = TrackingLabels::new(&ds, forbidden);
    let mut model = ModelConfig::for_schema(&ds.schema, ds.dims());
    model.hidden = vec![16];
    model.feature_dim = 8;
    let cfg = TrainConfig {
        mode: Mode::DcAttAcl,
        regime: Regime::Semisup,
        steps,
        learning_rate: 0.005,
        soft_label_refresh: Some(10),
        ..TrainConfig::default()
    };
    train_with_labels(&ds, &labels, &model, &cfg, &DomainConfusion).unwrap();
    (labels.reads.get(), labels.forbidden_reads.get())
}
