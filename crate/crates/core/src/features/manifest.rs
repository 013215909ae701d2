//! The `attributes.json` manifest: which layer files exist, what each
//! attribute means, and which imputation rules apply.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    /// Counts and sums, spread uniformly over the polygon area.
    Extensive,
    /// Ratios and averages, combined as a weighted mean.
    Intensive,
    /// A class label; emitted as per-category area proportions.
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttributeKind,
    /// For intensive attributes: weight by this extensive attribute's buffer
    /// estimate instead of by intersection area.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_attribute: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

impl AttributeSpec {
    pub fn extensive(name: &str) -> Self {
        Self {
            name: name.into(),
            kind: AttributeKind::Extensive,
            weight_attribute: None,
            categories: vec![],
        }
    }

    pub fn intensive(name: &str, weight: Option<&str>) -> Self {
        Self {
            name: name.into(),
            kind: AttributeKind::Intensive,
            weight_attribute: weight.map(Into::into),
            categories: vec![],
        }
    }

    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: AttributeKind::Categorical,
            weight_attribute: None,
            categories: categories.iter().map(|c| c.to_string()).collect(),
        }
    }
}

/// Attribute-table repair rules, applied in the order listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ImputationRule {
    /// `trigger == 0` implies every missing target is 0.
    ZeroImplies { trigger: String, targets: Vec<String> },
    /// A missing value becomes the given lowest class or band.
    FillLowest { attribute: String, value: serde_json::Value },
    /// Fewer than `min_count` measurement points implies missing targets are 0.
    MinCount {
        count_attribute: String,
        min_count: f64,
        targets: Vec<String>,
    },
    /// A missing target is derived as numerator / denominator.
    Ratio {
        target: String,
        numerator: String,
        denominator: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Polygons {
        name: String,
        file: String,
        attributes: Vec<AttributeSpec>,
        #[serde(default)]
        imputation: Vec<ImputationRule>,
    },
    Roads {
        name: String,
        file: String,
        /// Attributes copied from the closest segment.
        flow_attributes: Vec<String>,
        /// Flow multiplied by clipped length for the traffic density.
        density_flow_attribute: String,
        type_attribute: String,
        road_types: Vec<String>,
    },
    Points {
        name: String,
        file: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        category_attribute: Option<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        categories: Vec<String>,
        /// Points closer than this to the pool are ignored (the pool itself
        /// in a layer of charging pools).
        #[serde(default)]
        exclude_within_m: f64,
    },
    /// Gridded values stored as cell-centre points; read by nearest cell.
    RasterPoints {
        name: String,
        file: String,
        value_attributes: Vec<String>,
    },
}

impl LayerSpec {
    pub fn name(&self) -> &str {
        match self {
            LayerSpec::Polygons { name, .. }
            | LayerSpec::Roads { name, .. }
            | LayerSpec::Points { name, .. }
            | LayerSpec::RasterPoints { name, .. } => name,
        }
    }

    pub fn file(&self) -> &str {
        match self {
            LayerSpec::Polygons { file, .. }
            | LayerSpec::Roads { file, .. }
            | LayerSpec::Points { file, .. }
            | LayerSpec::RasterPoints { file, .. } => file,
        }
    }

    /// Predictor names this layer produces, in column order.
    pub fn predictor_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            LayerSpec::Polygons { name, attributes, .. } => {
                for a in attributes {
                    match a.kind {
                        AttributeKind::Categorical => {
                            out.extend(a.categories.iter().map(|c| format!("{name}.{}={c}", a.name)))
                        }
                        _ => out.push(format!("{name}.{}", a.name)),
                    }
                }
            }
            LayerSpec::Roads {
                name,
                flow_attributes,
                road_types,
                ..
            } => {
                out.extend(flow_attributes.iter().map(|f| format!("{name}.closest.{f}")));
                out.extend(road_types.iter().map(|t| format!("{name}.closest_type={t}")));
                out.push(format!("{name}.traffic_density"));
                out.push(format!("{name}.road_density"));
            }
            LayerSpec::Points {
                name,
                category_attribute,
                categories,
                ..
            } => {
                if category_attribute.is_some() {
                    for c in categories {
                        out.push(format!("{name}.density={c}"));
                        out.push(format!("{name}.nearest_m={c}"));
                    }
                } else {
                    out.push(format!("{name}.density"));
                    out.push(format!("{name}.nearest_m"));
                }
            }
            LayerSpec::RasterPoints {
                name, value_attributes, ..
            } => out.extend(value_attributes.iter().map(|a| format!("{name}.{a}"))),
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub layers: Vec<LayerSpec>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::schema(
                "attributes.json",
                format!("unsupported manifest version {}", self.version),
            ));
        }
        let mut names = std::collections::BTreeSet::new();
        for l in &self.layers {
            if !names.insert(l.name()) {
                return Err(Error::schema("attributes.json", format!("duplicate layer `{}`", l.name())));
            }
            match l {
                LayerSpec::Polygons { attributes, .. } => {
                    for a in attributes {
                        if a.kind == AttributeKind::Categorical && a.categories.is_empty() {
                            return Err(Error::schema(
                                "attributes.json",
                                format!("categorical attribute `{}` lists no categories", a.name),
                            ));
                        }
                        if let Some(w) = &a.weight_attribute {
                            if a.kind != AttributeKind::Intensive {
                                return Err(Error::schema(
                                    "attributes.json",
                                    format!("`{}`: only intensive attributes take a weight", a.name),
                                ));
                            }
                            if !attributes.iter().any(|b| &b.name == w) {
                                return Err(Error::schema(
                                    "attributes.json",
                                    format!("`{}`: weight attribute `{w}` is not declared", a.name),
                                ));
                            }
                        }
                    }
                }
                LayerSpec::Points {
                    category_attribute,
                    categories,
                    ..
                } => {
                    if category_attribute.is_some() && categories.is_empty() {
                        return Err(Error::schema("attributes.json", format!("`{}`: no categories", l.name())));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::schema(path.display().to_string(), format!("cannot read: {e}")))?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::schema(path.display().to_string(), e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
