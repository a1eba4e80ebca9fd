//! Class/attribute structure shared by data, model and losses.
//!
//! Each fine-grained class belongs to exactly one category of every
//! attribute. The text format is:
//!
//! ```text
//! classes <K>
//! attribute <name> <a_K>
//! class <id> category <id>     (K lines, one per class)
//! attribute <name> <a_K>
//! ...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub categories: usize,
    /// `class_to_category[c]` is the category of class `c`.
    pub class_to_category: Vec<usize>,
}

impl Attribute {
    pub fn new(name: impl Into<String>, categories: usize, class_to_category: Vec<usize>) -> Self {
        Attribute {
            name: name.into(),
            categories,
            class_to_category,
        }
    }

    /// Classes in each category, in ascending class order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.categories];
        for (class, &cat) in self.class_to_category.iter().enumerate() {
            if cat < self.categories {
                members[cat].push(class);
            }
        }
        members
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaRepr")]
pub struct AttributeSchema {
    classes: usize,
    attributes: Vec<Attribute>,
}

#[derive(Deserialize)]
struct SchemaRepr {
    classes: usize,
    attributes: Vec<Attribute>,
}

impl TryFrom<SchemaRepr> for AttributeSchema {
    type Error = Error;

    fn try_from(r: SchemaRepr) -> Result<Self> {
        AttributeSchema::new(r.classes, r.attributes)
    }
}

impl AttributeSchema {
    /// Validates and builds a schema.
    pub fn new(classes: usize, attributes: Vec<Attribute>) -> Result<Self> {
        let schema = AttributeSchema { classes, attributes };
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<()> {
        let err = |message: String| Err(Error::Schema { line: 0, message });
        if self.classes < 2 {
            return err(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.attributes.is_empty() {
            return err("need at least one attribute".into());
        }
        for attr in &self.attributes {
            check_attribute(attr, self.classes).map_err(|message| Error::Schema { line: 0, message })?;
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn num_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, n: usize) -> Result<&Attribute> {
        self.attributes.get(n).ok_or_else(|| {
            Error::contract(format!(
                "attribute index {} out of range ({} attributes)",
                n,
                self.attributes.len()
            ))
        })
    }

    /// Category counts `a_K` per attribute.
    pub fn attribute_sizes(&self) -> Vec<usize> {
        self.attributes.iter().map(|a| a.categories).collect()
    }

    /// Attribute labels implied by a class label.
    pub fn attribute_labels(&self, class: usize) -> Vec<usize> {
        self.attributes
            .iter()
            .map(|a| a.class_to_category[class])
            .collect()
    }

    /// `[K × a_K]` matrix whose column `k` averages the scores of the classes
    /// in category `k`: `M[c][k] = 1/|k|` when class `c` is in `k`.
    pub fn averaging_matrix(&self, n: usize) -> Result<crate::Tensor> {
        let attr = self.attribute(n)?;
        let members = attr.members();
        let mut m = crate::Tensor::zeros(&[self.classes, attr.categories]);
        for (cat, classes) in members.iter().enumerate() {
            let w = 1.0 / classes.len() as f64;
            for &c in classes {
                m.data_mut()[c * attr.categories + cat] = w;
            }
        }
        Ok(m)
    }

    /// A schema with one attribute per entry of `sizes`, where class `c`
    /// decodes as a mixed-radix tuple of categories (last attribute fastest).
    /// Every category combination appears exactly once, so `K = Π sizes`.
    pub fn product(names: &[&str], sizes: &[usize]) -> Result<Self> {
        if names.len() != sizes.len() {
            return Err(Error::contract("one name per attribute size"));
        }
        let classes: usize = sizes.iter().product();
        let mut attributes = Vec::new();
        for (i, (&name, &size)) in names.iter().zip(sizes).enumerate() {
            let stride: usize = sizes[i + 1..].iter().product();
            let map = (0..classes).map(|c| (c / stride) % size).collect();
            attributes.push(Attribute::new(name, size, map));
        }
        Self::new(classes, attributes)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "classes {}", self.classes).unwrap();
        for attr in &self.attributes {
            writeln!(out, "attribute {} {}", attr.name, attr.categories).unwrap();
            for (c, cat) in attr.class_to_category.iter().enumerate() {
                writeln!(out, "class {} category {}", c, cat).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let bad = |line: usize, message: String| Error::Schema { line, message };

        let (line_no, header) = lines
            .next()
            .ok_or_else(|| bad(1, "empty schema file".into()))?;
        let classes = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["classes", k] => k
                .parse::<usize>()
                .map_err(|_| bad(line_no, format!("bad class count {:?}", k)))?,
            _ => return Err(bad(line_no, format!("expected `classes <K>`, got {:?}", header))),
        };

        let mut attributes: Vec<Attribute> = Vec::new();
        let mut header_lines: Vec<usize> = Vec::new();
        let mut seen: Vec<bool> = Vec::new();
        for (line_no, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["attribute", name, count] => {
                    let count = count
                        .parse::<usize>()
                        .map_err(|_| bad(line_no, format!("bad category count {:?}", count)))?;
                    if let Some(prev) = attributes.last() {
                        if let Some(missing) = seen.iter().position(|s| !s) {
                            return Err(bad(
                                line_no,
                                format!("attribute {} has no entry for class {}", prev.name, missing),
                            ));
                        }
                    }
                    attributes.push(Attribute::new(*name, count, vec![0; classes]));
                    header_lines.push(line_no);
                    seen = vec![false; classes];
                }
                ["class", id, "category", cat] => {
                    let attr = attributes
                        .last_mut()
                        .ok_or_else(|| bad(line_no, "class line before any attribute".into()))?;
                    let id = id
                        .parse::<usize>()
                        .map_err(|_| bad(line_no, format!("bad class id {:?}", id)))?;
                    let cat = cat
                        .parse::<usize>()
                        .map_err(|_| bad(line_no, format!("bad category id {:?}", cat)))?;
                    if id >= classes {
                        return Err(bad(line_no, format!("class id {} out of range [0, {})", id, classes)));
                    }
                    if cat >= attr.categories {
                        return Err(bad(
                            line_no,
                            format!("category {} out of range [0, {})", cat, attr.categories),
                        ));
                    }
                    if seen[id] {
                        return Err(bad(line_no, format!("class {} listed twice", id)));
                    }
                    seen[id] = true;
                    attr.class_to_category[id] = cat;
                }
                _ => return Err(bad(line_no, format!("unrecognised line {:?}", line))),
            }
        }
        if let (Some(last), Some(missing)) = (attributes.last(), seen.iter().position(|s| !s)) {
            return Err(bad(
                text.lines().count(),
                format!("attribute {} has no entry for class {}", last.name, missing),
            ));
        }
        if classes < 2 {
            return Err(bad(line_no, format!("need at least 2 classes, got {}", classes)));
        }
        if attributes.is_empty() {
            return Err(bad(line_no, "need at least one attribute".into()));
        }
        for (attr, &line) in attributes.iter().zip(&header_lines) {
            check_attribute(attr, classes).map_err(|m| bad(line, m))?;
        }
        let schema = AttributeSchema { classes, attributes };
        Ok(schema)
    }
}

fn check_attribute(attr: &Attribute, classes: usize) -> std::result::Result<(), String> {
    if attr.categories < 2 || attr.categories > classes {
        return Err(format!(
            "attribute {} has {} categories; must be in [2, {}]",
            attr.name, attr.categories, classes
        ));
    }
    if attr.class_to_category.len() != classes {
        return Err(format!(
            "attribute {} maps {} classes, expected {}",
            attr.name,
            attr.class_to_category.len(),
            classes
        ));
    }
    if let Some((c, &cat)) = attr
        .class_to_category
        .iter()
        .enumerate()
        .find(|(_, &cat)| cat >= attr.categories)
    {
        return Err(format!(
            "attribute {}: class {} maps to out-of-range category {}",
            attr.name, c, cat
        ));
    }
    if let Some(cat) = attr.members().iter().position(|m| m.is_empty()) {
        return Err(format!("empty attribute category: {} category {}", attr.name, cat));
    }
    Ok(())
}

pub fn save_schema(schema: &AttributeSchema, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, schema.to_text())?;
    Ok(())
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<AttributeSchema> {
    AttributeSchema::from_text(&std::fs::read_to_string(path)?)
}
