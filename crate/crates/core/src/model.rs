//! Shared backbone with fine-grained, attribute and domain heads.
//!
//! One parameter set serves both domains: source and target rows go through
//! the same backbone. Heads emit raw scores; normalisation belongs to the
//! losses.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::schema::AttributeSchema;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// Widths of the ReLU hidden layers before the feature layer.
    pub hidden: Vec<usize>,
    /// Width of the shared feature layer the heads read from.
    pub feature_dim: usize,
    pub num_classes: usize,
    pub attribute_sizes: Vec<usize>,
    /// Hidden width of the two-layer domain classifier.
    pub domain_hidden: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Default sizes for a schema: two hidden layers of 64, 32 features.
    pub fn for_schema(schema: &AttributeSchema, input_dim: usize) -> Self {
        ModelConfig {
            input_dim,
            hidden: vec![64, 64],
            feature_dim: 32,
            num_classes: schema.num_classes(),
            attribute_sizes: schema.attribute_sizes(),
            domain_hidden: 64,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [self.input_dim, self.feature_dim, self.num_classes, self.domain_hidden];
        if sizes.iter().chain(&self.hidden).chain(&self.attribute_sizes).any(|&s| s == 0) {
            return Err(Error::config("all model sizes must be at least 1"));
        }
        Ok(())
    }

    /// Checks that the head sizes match `schema`.
    pub fn check_schema(&self, schema: &AttributeSchema) -> Result<()> {
        if self.num_classes != schema.num_classes() || self.attribute_sizes != schema.attribute_sizes() {
            return Err(Error::config(format!(
                "model heads ({} classes, attributes {:?}) do not match schema ({} classes, attributes {:?})",
                self.num_classes,
                self.attribute_sizes,
                schema.num_classes(),
                schema.attribute_sizes()
            )));
        }
        Ok(())
    }
}

/// Affine layer `x·W + b` with `W: [in × out]`, `b: [1 × out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            weight: Tensor::zeros(&[inputs, outputs]),
            bias: Tensor::zeros(&[1, outputs]),
        }
    }

    /// Uniform on `±√(3/fan_in)`, i.e. weight variance `1/fan_in`; zero bias.
    fn init(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = (3.0 / inputs as f64).sqrt();
        let data = (0..inputs * outputs)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Linear {
            weight: Tensor::new(vec![inputs, outputs], data).unwrap(),
            bias: Tensor::zeros(&[1, outputs]),
        }
    }

    fn on_tape<'t>(&self, tape: &'t Tape) -> LinearVars<'t> {
        LinearVars {
            weight: tape.leaf(self.weight.clone()),
            bias: tape.leaf(self.bias.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LinearVars<'t> {
    pub weight: Var<'t>,
    pub bias: Var<'t>,
}

impl<'t> LinearVars<'t> {
    pub fn forward(&self, x: Var<'t>) -> Result<Var<'t>> {
        x.matmul(self.weight)?.add_row(self.bias)
    }

    fn detached(&self) -> Self {
        LinearVars {
            weight: self.weight.detach(),
            bias: self.bias.detach(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// Hidden layers followed by the feature layer.
    pub backbone: Vec<Linear>,
    pub class_head: Linear,
    pub attribute_heads: Vec<Linear>,
    pub domain_hidden: Linear,
    pub domain_out: Linear,
}

impl ModelParams {
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(config.seed, Stream::Init);
        let mut widths = vec![config.input_dim];
        widths.extend(&config.hidden);
        widths.push(config.feature_dim);
        let backbone = widths
            .windows(2)
            .map(|w| Linear::init(w[0], w[1], &mut rng))
            .collect();
        let f = config.feature_dim;
        let class_head = Linear::init(f, config.num_classes, &mut rng);
        let attribute_heads = config
            .attribute_sizes
            .iter()
            .map(|&a| Linear::init(f, a, &mut rng))
            .collect();
        let domain_hidden = Linear::init(f, config.domain_hidden, &mut rng);
        let domain_out = Linear::init(config.domain_hidden, 2, &mut rng);
        Ok(ModelParams {
            config: config.clone(),
            backbone,
            class_head,
            attribute_heads,
            domain_hidden,
            domain_out,
        })
    }

    /// Every parameter tensor with its checkpoint name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (name, layer) in self.layers() {
            out.push((format!("{name}.weight"), &layer.weight));
            out.push((format!("{name}.bias"), &layer.bias));
        }
        out
    }

    fn layers(&self) -> Vec<(String, &Linear)> {
        let mut out: Vec<(String, &Linear)> = Vec::new();
        for (i, l) in self.backbone.iter().enumerate() {
            out.push((format!("backbone.{i}"), l));
        }
        out.push(("class".into(), &self.class_head));
        for (n, l) in self.attribute_heads.iter().enumerate() {
            out.push((format!("attribute.{n}"), l));
        }
        out.push(("domain.0".into(), &self.domain_hidden));
        out.push(("domain.1".into(), &self.domain_out));
        out
    }

    /// Mutable parameter tensors in the same order as [`named_tensors`](Self::named_tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        let layers = self
            .backbone
            .iter_mut()
            .chain(std::iter::once(&mut self.class_head))
            .chain(self.attribute_heads.iter_mut())
            .chain([&mut self.domain_hidden, &mut self.domain_out]);
        for l in layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.is_finite())
    }

    /// Registers every parameter as a leaf on `tape`.
    pub fn on_tape<'t>(&self, tape: &'t Tape) -> ModelVars<'t> {
        ModelVars {
            backbone: self.backbone.iter().map(|l| l.on_tape(tape)).collect(),
            class_head: self.class_head.on_tape(tape),
            attribute_heads: self.attribute_heads.iter().map(|l| l.on_tape(tape)).collect(),
            domain: DomainHeadVars {
                hidden: self.domain_hidden.on_tape(tape),
                out: self.domain_out.on_tape(tape),
            },
        }
    }

    /// No hidden layers and an identity feature layer; heads as in [`init`](Self::init).
    pub fn identity(config: &ModelConfig) -> Result<Self> {
        if !config.hidden.is_empty() || config.input_dim != config.feature_dim {
            return Err(Error::config("identity model needs no hidden layers and feature_dim == input_dim"));
        }
        let mut p = Self::init(config)?;
        p.backbone[0] = Linear {
            weight: Tensor::identity(config.input_dim),
            bias: Tensor::zeros(&[1, config.input_dim]),
        };
        Ok(p)
    }

    fn eval<F>(&self, x: &Tensor, f: F) -> Result<Tensor>
    where
        F: for<'t> Fn(&ModelVars<'t>, Var<'t>) -> Result<Var<'t>>,
    {
        let tape = Tape::new();
        let vars = self.on_tape(&tape);
        let out = f(&vars, tape.leaf(x.clone()))?;
        Ok(out.to_tensor())
    }

    /// `[B × F]` features for a `[B × D]` batch.
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        self.eval(x, |m, x| m.features(x))
    }

    pub fn class_scores(&self, features: &Tensor) -> Result<Tensor> {
        self.eval(features, |m, f| m.class_scores(f))
    }

    pub fn attribute_scores(&self, features: &Tensor, n: usize) -> Result<Tensor> {
        self.eval(features, |m, f| m.attribute_scores(f, n))
    }

    pub fn domain_scores(&self, features: &Tensor) -> Result<Tensor> {
        self.eval(features, |m, f| m.domain.forward(f))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "mtda-checkpoint 1").unwrap();
        writeln!(out, "config {}", serde_json::to_string(&self.config).unwrap()).unwrap();
        for (name, t) in self.named_tensors() {
            let (r, c) = t.dims2().expect("parameters are matrices");
            writeln!(out, "param {name} {r} {c}").unwrap();
            let values: Vec<String> = t.data().iter().map(|v| format!("{:.16e}", v)).collect();
            writeln!(out, "{}", values.join(" ")).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Data { line, message };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, "mtda-checkpoint 1")) => {}
            _ => return Err(bad(1, "not an mtda checkpoint".into())),
        }
        let (_, config_line) = lines.next().ok_or_else(|| bad(2, "missing config line".into()))?;
        let config: ModelConfig = config_line
            .strip_prefix("config ")
            .ok_or_else(|| bad(2, "expected `config <json>`".into()))
            .and_then(|j| serde_json::from_str(j).map_err(|e| bad(2, e.to_string())))?;
        let mut params = Self::init(&config).map_err(|e| bad(2, e.to_string()))?;
        let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
        for (name, tensor) in names.iter().zip(params.tensors_mut()) {
            let (line_no, header) = lines
                .next()
                .ok_or_else(|| bad(0, format!("missing parameter {name}")))?;
            let expected = format!("param {} {} {}", name, tensor.shape()[0], tensor.shape()[1]);
            if header != expected {
                return Err(bad(line_no, format!("expected `{expected}`, got {header:?}")));
            }
            let (line_no, values) = lines
                .next()
                .ok_or_else(|| bad(line_no + 1, format!("missing values for {name}")))?;
            let parsed = values
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| bad(line_no, format!("bad float {v:?}"))))
                .collect::<Result<Vec<f64>>>()?;
            if parsed.len() != tensor.len() {
                return Err(bad(
                    line_no,
                    format!("{name} needs {} values, got {}", tensor.len(), parsed.len()),
                ));
            }
            tensor.data_mut().copy_from_slice(&parsed);
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Two-layer domain classifier registered on a tape.
#[derive(Debug, Clone, Copy)]
pub struct DomainHeadVars<'t> {
    pub hidden: LinearVars<'t>,
    pub out: LinearVars<'t>,
}

impl<'t> DomainHeadVars<'t> {
    /// `[B × 2]` domain scores.
    pub fn forward(&self, features: Var<'t>) -> Result<Var<'t>> {
        self.out.forward(self.hidden.forward(features)?.relu()?)
    }

    /// The same head as constants: gradients stop at its parameters.
    pub fn detached(&self) -> Self {
        DomainHeadVars {
            hidden: self.hidden.detached(),
            out: self.out.detached(),
        }
    }
}

/// [`ModelParams`] registered on a tape.
#[derive(Debug, Clone)]
pub struct ModelVars<'t> {
    pub backbone: Vec<LinearVars<'t>>,
    pub class_head: LinearVars<'t>,
    pub attribute_heads: Vec<LinearVars<'t>>,
    pub domain: DomainHeadVars<'t>,
}

impl<'t> ModelVars<'t> {
    /// Assembles a model from parameter variables given in
    /// [`ModelParams::tensors_mut`] order.
    pub fn from_vars(config: &ModelConfig, vars: &[Var<'t>]) -> Result<Self> {
        let layers = config.hidden.len() + 1;
        let expected = 2 * (layers + 1 + config.attribute_sizes.len() + 2);
        if vars.len() != expected {
            return Err(Error::contract(format!(
                "model needs {} parameter variables, got {}",
                expected,
                vars.len()
            )));
        }
        let mut pairs = vars.chunks(2).map(|p| LinearVars {
            weight: p[0],
            bias: p[1],
        });
        let mut take = |n: usize| (&mut pairs).take(n).collect::<Vec<_>>();
        let backbone = take(layers);
        let class_head = take(1).remove(0);
        let attribute_heads = take(config.attribute_sizes.len());
        let mut domain = take(2);
        let out = domain.pop().expect("two domain layers");
        let hidden = domain.pop().expect("two domain layers");
        Ok(ModelVars {
            backbone,
            class_head,
            attribute_heads,
            domain: DomainHeadVars { hidden, out },
        })
    }

    /// ReLU after every hidden layer; the feature layer itself is affine.
    pub fn features(&self, x: Var<'t>) -> Result<Var<'t>> {
        let last = self.backbone.len() - 1;
        let mut h = x;
        for (i, layer) in self.backbone.iter().enumerate() {
            h = layer.forward(h)?;
            if i < last {
                h = h.relu()?;
            }
        }
        Ok(h)
    }

    pub fn class_scores(&self, features: Var<'t>) -> Result<Var<'t>> {
        self.class_head.forward(features)
    }

    pub fn attribute_scores(&self, features: Var<'t>, n: usize) -> Result<Var<'t>> {
        let head = self.attribute_heads.get(n).ok_or_else(|| {
            Error::contract(format!(
                "attribute index {} out of range ({} heads)",
                n,
                self.attribute_heads.len()
            ))
        })?;
        head.forward(features)
    }

    fn vars(&self) -> Vec<Var<'t>> {
        let mut out = Vec::new();
        let layers = self
            .backbone
            .iter()
            .chain(std::iter::once(&self.class_head))
            .chain(self.attribute_heads.iter())
            .chain([&self.domain.hidden, &self.domain.out]);
        for l in layers {
            out.push(l.weight);
            out.push(l.bias);
        }
        out
    }

    /// Gradient per parameter in [`ModelParams::tensors_mut`] order; zeros for
    /// parameters the loss does not reach.
    pub fn gradients(&self, grads: &Gradients) -> Vec<Tensor> {
        self.vars()
            .into_iter()
            .map(|v| {
                grads
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(&v.shape()))
            })
            .collect()
    }

    /// Whether the loss reached each parameter, in the same order.
    pub fn reached(&self, grads: &Gradients) -> Vec<bool> {
        self.vars().into_iter().map(|v| grads.get(v).is_some()).collect()
    }
}
