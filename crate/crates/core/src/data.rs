//! Examples, datasets and the synthetic two-domain generator.
//!
//! Dataset file format:
//!
//! ```text
//! dims <D> examples <N> [split <train|validation|test>]
//! <s|t> <0|1> <class|-> <attr,attr,...|-> <D floats>
//! ```
//!
//! Floats are written with 17 significant digits and read back bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::schema::AttributeSchema;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    /// Label used by the domain classifier: source 0, target 1.
    pub fn index(self) -> usize {
        match self {
            Domain::Source => 0,
            Domain::Target => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Validation,
    Test,
}

impl Split {
    fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Validation => 1,
            Split::Test => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "validation" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub domain: Domain,
    /// Ground-truth class, when known.
    pub class: Option<usize>,
    pub attributes: Option<Vec<usize>>,
    /// Whether the labels may be used for training.
    pub labeled: bool,
}

impl Example {
    /// A labeled example whose attribute labels follow the schema.
    pub fn labeled(features: Vec<f64>, domain: Domain, class: usize, schema: &AttributeSchema) -> Self {
        Example {
            features,
            domain,
            class: Some(class),
            attributes: Some(schema.attribute_labels(class)),
            labeled: true,
        }
    }

    pub fn unlabeled(features: Vec<f64>, domain: Domain) -> Self {
        Example {
            features,
            domain,
            class: None,
            attributes: None,
            labeled: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: AttributeSchema,
    pub examples: Vec<Example>,
    pub split: Split,
    dims: usize,
}

impl Dataset {
    /// Validates every example against `schema`.
    pub fn new(schema: AttributeSchema, examples: Vec<Example>, split: Split) -> Result<Self> {
        let dims = examples.first().map_or(0, |e| e.features.len());
        for (i, e) in examples.iter().enumerate() {
            check_example(e, &schema, dims).map_err(|message| Error::Data { line: i, message })?;
        }
        Ok(Dataset {
            schema,
            examples,
            split,
            dims,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn indices_in(&self, domain: Domain) -> Vec<usize> {
        self.examples
            .iter()
            .enumerate()
            .filter(|(_, e)| e.domain == domain)
            .map(|(i, _)| i)
            .collect()
    }

    /// `N_T`
    pub fn num_target(&self) -> usize {
        self.examples.iter().filter(|e| e.domain == Domain::Target).count()
    }

    /// `N_TL`
    pub fn num_target_labeled(&self) -> usize {
        self.examples
            .iter()
            .filter(|e| e.domain == Domain::Target && e.labeled)
            .count()
    }

    /// Examples per ground-truth class within one domain.
    pub fn class_counts(&self, domain: Domain) -> Vec<usize> {
        let mut counts = vec![0; self.schema.num_classes()];
        for e in &self.examples {
            if e.domain == domain {
                if let Some(c) = e.class {
                    counts[c] += 1;
                }
            }
        }
        counts
    }

    /// `[len(indices) × D]` feature matrix.
    pub fn features(&self, indices: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(indices.len() * self.dims);
        for &i in indices {
            data.extend_from_slice(&self.examples[i].features);
        }
        Tensor::new(vec![indices.len(), self.dims], data).expect("rows share the dataset dimension")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "dims {} examples {} split {}",
            self.dims,
            self.examples.len(),
            self.split.as_str()
        )
        .unwrap();
        for e in &self.examples {
            let domain = match e.domain {
                Domain::Source => 's',
                Domain::Target => 't',
            };
            let class = e.class.map_or_else(|| "-".to_string(), |c| c.to_string());
            let attrs = e.attributes.as_ref().map_or_else(
                || "-".to_string(),
                |a| a.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
            );
            write!(out, "{} {} {} {}", domain, u8::from(e.labeled), class, attrs).unwrap();
            for v in &e.features {
                write!(out, " {:.16e}", v).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, schema: &AttributeSchema) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Data { line, message };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty dataset file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (dims, count, split) = match fields.as_slice() {
            ["dims", d, "examples", n, rest @ ..] => {
                let d = d.parse::<usize>().map_err(|_| bad(1, format!("bad dims {:?}", d)))?;
                let n = n.parse::<usize>().map_err(|_| bad(1, format!("bad example count {:?}", n)))?;
                let split = match rest {
                    [] => Split::Train,
                    ["split", s] => Split::parse(s).ok_or_else(|| bad(1, format!("bad split {:?}", s)))?,
                    _ => return Err(bad(1, format!("unexpected header fields {:?}", rest))),
                };
                (d, n, split)
            }
            _ => return Err(bad(1, format!("expected `dims <D> examples <N>`, got {:?}", header))),
        };

        let mut examples = Vec::with_capacity(count);
        for (line_no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let e = parse_example(line, dims).map_err(|m| bad(line_no, m))?;
            check_example(&e, schema, dims).map_err(|m| bad(line_no, m))?;
            examples.push(e);
        }
        if examples.len() != count {
            return Err(bad(
                text.lines().count(),
                format!("header promises {} examples, found {}", count, examples.len()),
            ));
        }
        Ok(Dataset {
            schema: schema.clone(),
            examples,
            split,
            dims,
        })
    }
}

fn parse_example(line: &str, dims: usize) -> std::result::Result<Example, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 4 + dims {
        return Err(format!("expected {} fields, found {}", 4 + dims, fields.len()));
    }
    let domain = match fields[0] {
        "s" => Domain::Source,
        "t" => Domain::Target,
        other => return Err(format!("bad domain {:?}", other)),
    };
    let labeled = match fields[1] {
        "0" => false,
        "1" => true,
        other => return Err(format!("bad labeled flag {:?}", other)),
    };
    let class = match fields[2] {
        "-" => None,
        c => Some(c.parse::<usize>().map_err(|_| format!("bad class {:?}", c))?),
    };
    let attributes = match fields[3] {
        "-" => None,
        a => Some(
            a.split(',')
                .map(|v| v.parse::<usize>().map_err(|_| format!("bad attribute label {:?}", v)))
                .collect::<std::result::Result<Vec<_>, _>>()?,
        ),
    };
    let features = fields[4..]
        .iter()
        .map(|v| v.parse::<f64>().map_err(|_| format!("bad float {:?}", v)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Example {
        features,
        domain,
        class,
        attributes,
        labeled,
    })
}

fn check_example(e: &Example, schema: &AttributeSchema, dims: usize) -> std::result::Result<(), String> {
    if e.features.len() != dims {
        return Err(format!("expected {} features, found {}", dims, e.features.len()));
    }
    if let Some(c) = e.class {
        if c >= schema.num_classes() {
            return Err(format!("class {} outside [0, {})", c, schema.num_classes()));
        }
    }
    if let Some(attrs) = &e.attributes {
        if attrs.len() != schema.num_attributes() {
            return Err(format!(
                "expected {} attribute labels, found {}",
                schema.num_attributes(),
                attrs.len()
            ));
        }
        for (n, (&a, attr)) in attrs.iter().zip(schema.attributes()).enumerate() {
            if a >= attr.categories {
                return Err(format!("attribute {} label {} outside [0, {})", n, a, attr.categories));
            }
        }
        if let Some(c) = e.class {
            if *attrs != schema.attribute_labels(c) {
                return Err(format!(
                    "attribute labels {:?} inconsistent with class {} ({:?})",
                    attrs,
                    c,
                    schema.attribute_labels(c)
                ));
            }
        }
    }
    if e.labeled && (e.class.is_none() || e.attributes.is_none()) {
        return Err("labeled example without class and attribute labels".into());
    }
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, dataset.to_text())?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &AttributeSchema) -> Result<Dataset> {
    Dataset::from_text(&std::fs::read_to_string(path)?, schema)
}

/// Read access to training labels, one example index at a time.
///
/// The trainer asks for labels only of examples its split plan allows, so a
/// wrapping implementation can audit exactly which labels were consulted.
pub trait LabelSource {
    fn class_label(&self, index: usize) -> Option<usize>;
    fn attribute_labels(&self, index: usize) -> Option<Vec<usize>>;
}

impl LabelSource for Dataset {
    fn class_label(&self, index: usize) -> Option<usize> {
        self.examples[index].class
    }

    fn attribute_labels(&self, index: usize) -> Option<Vec<usize>> {
        self.examples[index].attributes.clone()
    }
}

/// Systematic source→target distortion applied to target features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainShift {
    Identity,
    /// `x ↦ A·x + b` with `A = I + strength·G/√D` and `b ~ N(0, bias²)`,
    /// drawn from the structure stream.
    Random { strength: f64, bias: f64 },
    /// `matrix` is `D` rows of `D` entries.
    Explicit { matrix: Vec<Vec<f64>>, bias: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub schema: AttributeSchema,
    pub feature_dim: usize,
    /// Scale of the anchor vector for each category, one entry per attribute.
    pub anchor_scales: Vec<f64>,
    /// Scale of the class-specific prototype offset.
    pub prototype_noise: f64,
    pub within_class_noise: f64,
    pub shift: DomainShift,
    pub target_noise: f64,
    /// Fraction of the class-specific prototype offset present in target
    /// examples; attribute anchors are always kept in full.
    #[serde(default = "one")]
    pub target_detail: f64,
    pub source_counts: Vec<usize>,
    pub target_counts: Vec<usize>,
    pub seed: u64,
    #[serde(default)]
    pub split: Split,
}

impl Default for GeneratorConfig {
    /// The desk-scale benchmark: 24 classes with make/model/body attributes,
    /// imbalanced per-class counts, a strong affine target shift, and half
    /// of the class-specific detail lost in the target domain.
    fn default() -> Self {
        let schema = default_schema();
        let k = schema.num_classes();
        GeneratorConfig {
            feature_dim: 32,
            anchor_scales: vec![1.0, 1.0, 1.0],
            prototype_noise: 0.5,
            within_class_noise: 0.6,
            shift: DomainShift::Random {
                strength: 1.0,
                bias: 0.5,
            },
            target_noise: 0.6,
            target_detail: 0.5,
            source_counts: (0..k).map(default_source_count).collect(),
            target_counts: (0..k).map(default_target_count).collect(),
            seed: 0,
            split: Split::Train,
            schema,
        }
    }
}

/// 24 classes: 8 models × 3 body types, two models per make.
fn one() -> f64 {
    1.0
}

pub fn default_schema() -> AttributeSchema {
    let models = 8;
    let bodies = 3;
    let k = models * bodies;
    let model: Vec<usize> = (0..k).map(|c| c / bodies).collect();
    let make: Vec<usize> = model.iter().map(|m| m / 2).collect();
    let body: Vec<usize> = (0..k).map(|c| c % bodies).collect();
    AttributeSchema::new(
        k,
        vec![
            crate::schema::Attribute::new("make", 4, make),
            crate::schema::Attribute::new("model", models, model),
            crate::schema::Attribute::new("body", bodies, body),
        ],
    )
    .expect("default schema is valid")
}

pub fn default_source_count(class: usize) -> usize {
    // 6..=50, spread over the classes without following the attribute layout
    6 + (class * 11) % 24 * 2
}

pub fn default_target_count(class: usize) -> usize {
    8 + (class * 7 + 3) % 24
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let k = self.schema.num_classes();
        if self.feature_dim == 0 {
            return Err(Error::config("feature_dim must be at least 1"));
        }
        if self.anchor_scales.len() != self.schema.num_attributes() {
            return Err(Error::config(format!(
                "anchor_scales needs {} entries, got {}",
                self.schema.num_attributes(),
                self.anchor_scales.len()
            )));
        }
        let scales = self
            .anchor_scales
            .iter()
            .chain([&self.prototype_noise, &self.within_class_noise, &self.target_noise, &self.target_detail]);
        if scales.clone().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::config("noise and anchor scales must be finite and non-negative"));
        }
        if self.source_counts.len() != k || self.target_counts.len() != k {
            return Err(Error::config(format!("per-class counts need {} entries", k)));
        }
        match &self.shift {
            DomainShift::Identity => {}
            DomainShift::Random { strength, bias } => {
                if !(strength.is_finite() && bias.is_finite() && *strength >= 0.0 && *bias >= 0.0) {
                    return Err(Error::config("random shift scales must be finite and non-negative"));
                }
            }
            DomainShift::Explicit { matrix, bias } => {
                let d = self.feature_dim;
                if matrix.len() != d || matrix.iter().any(|r| r.len() != d) || bias.len() != d {
                    return Err(Error::config(format!("explicit shift must be {d}×{d} plus a {d}-vector")));
                }
            }
        }
        Ok(())
    }

    pub fn with_split(&self, split: Split) -> Self {
        GeneratorConfig {
            split,
            ..self.clone()
        }
    }

    /// The same structure with `source`/`target` examples for every class.
    pub fn with_uniform_counts(&self, source: usize, target: usize) -> Self {
        let k = self.schema.num_classes();
        GeneratorConfig {
            source_counts: vec![source; k],
            target_counts: vec![target; k],
            ..self.clone()
        }
    }
}

/// Latent structure shared by every split generated from one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorStructure {
    /// `anchors[n][k]` is the anchor of category `k` of attribute `n`.
    pub anchors: Vec<Vec<Vec<f64>>>,
    pub offsets: Vec<Vec<f64>>,
    pub prototypes: Vec<Vec<f64>>,
    pub shift_matrix: Vec<Vec<f64>>,
    pub shift_bias: Vec<f64>,
}

fn gaussian(rng: &mut impl Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn structure(config: &GeneratorConfig) -> Result<GeneratorStructure> {
    config.validate()?;
    let d = config.feature_dim;
    let schema = &config.schema;
    let mut rng = stream_rng(config.seed, Stream::Structure);

    let anchors: Vec<Vec<Vec<f64>>> = schema
        .attributes()
        .iter()
        .zip(&config.anchor_scales)
        .map(|(attr, &scale)| (0..attr.categories).map(|_| gaussian(&mut rng, d, scale)).collect())
        .collect();
    let offsets: Vec<Vec<f64>> = (0..schema.num_classes())
        .map(|_| gaussian(&mut rng, d, config.prototype_noise))
        .collect();
    let prototypes = (0..schema.num_classes())
        .map(|c| {
            let mut mu = vec![0.0; d];
            for (n, &cat) in schema.attribute_labels(c).iter().enumerate() {
                for (m, a) in mu.iter_mut().zip(&anchors[n][cat]) {
                    *m += a;
                }
            }
            for (m, o) in mu.iter_mut().zip(&offsets[c]) {
                *m += o;
            }
            mu
        })
        .collect();

    let (shift_matrix, shift_bias) = match &config.shift {
        DomainShift::Identity => (identity_rows(d), vec![0.0; d]),
        DomainShift::Random { strength, bias } => {
            let scale = strength / (d as f64).sqrt();
            let mut a = identity_rows(d);
            for row in a.iter_mut() {
                for v in row.iter_mut() {
                    *v += scale * rng.sample::<f64, _>(StandardNormal);
                }
            }
            (a, gaussian(&mut rng, d, *bias))
        }
        DomainShift::Explicit { matrix, bias } => (matrix.clone(), bias.clone()),
    };

    Ok(GeneratorStructure {
        anchors,
        offsets,
        prototypes,
        shift_matrix,
        shift_bias,
    })
}

fn identity_rows(d: usize) -> Vec<Vec<f64>> {
    (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Draws the dataset described by `config`. A pure function of the config:
/// per-class noise comes from a per-(split, class) stream and examples are
/// emitted in class order, source before target.
pub fn generate(config: &GeneratorConfig) -> Result<Dataset> {
    let st = structure(config)?;
    let schema = &config.schema;
    let d = config.feature_dim;
    let mut examples = Vec::new();
    for c in 0..schema.num_classes() {
        let mut rng = stream_rng(
            config.seed,
            Stream::Samples {
                split: config.split.code(),
                class: c as u32,
            },
        );
        let mu = &st.prototypes[c];
        let mu_target: Vec<f64> = mu
            .iter()
            .zip(&st.offsets[c])
            .map(|(m, o)| m - (1.0 - config.target_detail) * o)
            .collect();
        for _ in 0..config.source_counts[c] {
            let noise = gaussian(&mut rng, d, config.within_class_noise);
            let x: Vec<f64> = mu.iter().zip(&noise).map(|(m, n)| m + n).collect();
            examples.push(Example::labeled(x, Domain::Source, c, schema));
        }
        for _ in 0..config.target_counts[c] {
            let noise = gaussian(&mut rng, d, config.within_class_noise);
            let clean: Vec<f64> = mu_target.iter().zip(&noise).map(|(m, n)| m + n).collect();
            let extra = gaussian(&mut rng, d, config.target_noise);
            let x: Vec<f64> = (0..d)
                .map(|i| {
                    let ax: f64 = st.shift_matrix[i].iter().zip(&clean).map(|(a, v)| a * v).sum();
                    ax + st.shift_bias[i] + extra[i]
                })
                .collect();
            examples.push(Example::labeled(x, Domain::Target, c, schema));
        }
    }
    Ok(Dataset {
        schema: schema.clone(),
        examples,
        split: config.split,
        dims: d,
    })
}
