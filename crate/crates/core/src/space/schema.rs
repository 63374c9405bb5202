//! Parameter schemas: names, integer domains and concern annotations.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SpaceError;

/// Identifier used for parameters and metrics.
///
/// Letters, digits and underscores, not starting with a digit.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct MetricName(String);

impl MetricName {
    pub fn new(name: impl Into<String>) -> Result<Self, SpaceError> {
        let name = name.into();
        if is_identifier(&name) {
            Ok(Self(name))
        } else {
            Err(SpaceError::InvalidName(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for MetricName {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl<'de> Deserialize<'de> for MetricName {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        MetricName::new(s).map_err(serde::de::Error::custom)
    }
}

/// A `(name, value)` measurement. Values are always finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedMetric {
    pub name: MetricName,
    pub value: f64,
}

impl NamedMetric {
    pub fn new(name: MetricName, value: f64) -> Result<Self, SpaceError> {
        if !value.is_finite() {
            return Err(SpaceError::NonFinite(name.0));
        }
        Ok(Self { name, value })
    }
}

/// Integer value domain of a generation parameter.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamDomain {
    /// `lo, lo+1, ..., hi`
    Linear(i64, i64),
    /// `2^lo_exp, ..., 2^hi_exp`
    Pow2(u32, u32),
    /// Explicit values in declaration order.
    Enum(Vec<i64>),
}

impl ParamDomain {
    pub fn linear(lo: i64, hi: i64) -> Result<Self, SpaceError> {
        let d = ParamDomain::Linear(lo, hi);
        d.validate()?;
        Ok(d)
    }

    pub fn pow2(lo_exp: u32, hi_exp: u32) -> Result<Self, SpaceError> {
        let d = ParamDomain::Pow2(lo_exp, hi_exp);
        d.validate()?;
        Ok(d)
    }

    pub fn enumeration(values: Vec<i64>) -> Result<Self, SpaceError> {
        let d = ParamDomain::Enum(values);
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), SpaceError> {
        match self {
            ParamDomain::Linear(lo, hi) if lo > hi => Err(SpaceError::InvalidDomain(format!(
                "linear({lo}, {hi}): lower bound exceeds upper bound"
            ))),
            ParamDomain::Pow2(lo, hi) if lo > hi => Err(SpaceError::InvalidDomain(format!(
                "pow2({lo}, {hi}): lower exponent exceeds upper exponent"
            ))),
            ParamDomain::Pow2(_, hi) if *hi > 62 => Err(SpaceError::InvalidDomain(format!(
                "pow2 exponent {hi} does not fit a 64-bit value"
            ))),
            ParamDomain::Enum(values) if values.is_empty() => {
                Err(SpaceError::InvalidDomain("enum(): no values".into()))
            }
            ParamDomain::Enum(values) => {
                let mut seen = HashSet::new();
                for v in values {
                    if !seen.insert(v) {
                        return Err(SpaceError::InvalidDomain(format!(
                            "enum: duplicate value {v}"
                        )));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn cardinality(&self) -> usize {
        match self {
            ParamDomain::Linear(lo, hi) => (hi - lo) as usize + 1,
            ParamDomain::Pow2(lo, hi) => (hi - lo) as usize + 1,
            ParamDomain::Enum(values) => values.len(),
        }
    }

    /// Raw value at enumeration index `idx`. Panics when out of range.
    pub fn value_at(&self, idx: usize) -> i64 {
        assert!(idx < self.cardinality(), "domain index {idx} out of range");
        match self {
            ParamDomain::Linear(lo, _) => lo + idx as i64,
            ParamDomain::Pow2(lo, _) => 1i64 << (*lo as usize + idx),
            ParamDomain::Enum(values) => values[idx],
        }
    }

    pub fn index_of(&self, value: i64) -> Option<usize> {
        (0..self.cardinality()).find(|&i| self.value_at(i) == value)
    }

    pub fn values(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.cardinality()).map(move |i| self.value_at(i))
    }

    pub fn min_value(&self) -> i64 {
        self.values().min().expect("domains are never empty")
    }

    pub fn max_value(&self) -> i64 {
        self.values().max().expect("domains are never empty")
    }
}

impl fmt::Display for ParamDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamDomain::Linear(lo, hi) => write!(f, "linear({lo}, {hi})"),
            ParamDomain::Pow2(lo, hi) => write!(f, "pow2({lo}, {hi})"),
            ParamDomain::Enum(values) => {
                let vs: Vec<String> = values.iter().map(|v| v.to_string()).collect();
                write!(f, "enum({})", vs.join(", "))
            }
        }
    }
}

/// A named generation parameter with its domain and concern tags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: MetricName,
    pub domain: ParamDomain,
    #[serde(default)]
    pub concerns: Vec<String>,
}

impl ParamSpec {
    pub fn new(name: &str, domain: ParamDomain, concerns: &[&str]) -> Result<Self, SpaceError> {
        domain.validate()?;
        Ok(Self {
            name: MetricName::new(name)?,
            domain,
            concerns: concerns.iter().map(|c| c.to_string()).collect(),
        })
    }

    pub fn has_concern(&self, tag: &str) -> bool {
        self.concerns.iter().any(|c| c == tag)
    }
}

/// Ordered parameter list; order fixes coordinate order in points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Schema {
    params: Vec<ParamSpec>,
}

#[derive(Deserialize)]
struct SchemaFile {
    #[serde(default)]
    params: Vec<ParamSpec>,
}

impl Schema {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self, SpaceError> {
        let mut seen = HashSet::new();
        for p in &params {
            p.domain.validate()?;
            if !seen.insert(p.name.as_str()) {
                return Err(SpaceError::DuplicateName(p.name.to_string()));
            }
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name.as_str() == name)
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.params.iter().map(|p| p.domain.cardinality()).collect()
    }

    /// Number of points in the full Cartesian product.
    pub fn cardinality(&self) -> usize {
        self.cardinalities().iter().product()
    }

    /// Concern tags in first-appearance order.
    pub fn concerns(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for p in &self.params {
            for c in &p.concerns {
                if !out.contains(c) {
                    out.push(c.clone());
                }
            }
        }
        out
    }

    /// Parses the declarative schema format (TOML, or JSON when the text
    /// starts with `{`).
    pub fn parse(text: &str) -> Result<Self, SpaceError> {
        let file: SchemaFile = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| {
                SpaceError::Format(format!("line {}, column {}: {e}", e.line(), e.column()))
            })?
        } else {
            toml::from_str(text).map_err(|e| SpaceError::Format(e.to_string()))?
        };
        Schema::new(file.params)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, SpaceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SpaceError::Format(format!("{}: {e}", path.display())))?;
        Schema::parse(&text).map_err(|e| match e {
            SpaceError::Format(m) => SpaceError::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            params: &'a [ParamSpec],
        }
        toml::to_string(&Out {
            params: &self.params,
        })
        .expect("schema serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_follow_identifier_rules() {
        assert!(MetricName::new("nbCore").is_ok());
        assert!(MetricName::new("_x1").is_ok());
        assert!(MetricName::new("1x").is_err());
        assert!(MetricName::new("").is_err());
        assert!(MetricName::new("lut%").is_err());
    }

    #[test]
    fn domain_enumerations() {
        let lin = ParamDomain::linear(0, 16).unwrap();
        assert_eq!(lin.cardinality(), 17);
        assert_eq!(lin.value_at(16), 16);
        let p2 = ParamDomain::pow2(0, 8).unwrap();
        assert_eq!(
            p2.values().collect::<Vec<_>>(),
            vec![1, 2, 4, 8, 16, 32, 64, 128, 256]
        );
        let en = ParamDomain::enumeration(vec![9, 4, 6]).unwrap();
        assert_eq!(en.value_at(0), 9);
        assert_eq!(en.min_value(), 4);
        assert_eq!(en.max_value(), 9);
        assert_eq!(en.index_of(6), Some(2));
    }

    #[test]
    fn invalid_domains_rejected() {
        assert!(ParamDomain::linear(3, 2).is_err());
        assert!(ParamDomain::pow2(5, 4).is_err());
        assert!(ParamDomain::enumeration(vec![]).is_err());
        assert!(ParamDomain::enumeration(vec![1, 1]).is_err());
    }

    #[test]
    fn duplicate_params_rejected() {
        let a = ParamSpec::new("a", ParamDomain::Linear(0, 1), &[]).unwrap();
        assert!(matches!(
            Schema::new(vec![a.clone(), a]),
            Err(SpaceError::DuplicateName(_))
        ));
    }

    #[test]
    fn schema_file_round_trip() {
        let text = r#"
            [[params]]
            name = "param1"
            domain = { linear = [0, 16] }
            concerns = ["resource", "qos"]

            [[params]]
            name = "param2"
            domain = { pow2 = [0, 8] }
            concerns = ["resource"]

            [[params]]
            name = "param3"
            domain = { enum = [4, 6, 9] }
            concerns = ["qos"]
        "#;
        let schema = Schema::parse(text).unwrap();
        assert_eq!(schema.cardinality(), 459);
        assert_eq!(schema.concerns(), vec!["resource", "qos"]);
        let again = Schema::parse(&schema.to_toml()).unwrap();
        assert_eq!(schema, again);
    }

    #[test]
    fn json_schema_accepted() {
        let text = r#"{"params": [{"name": "x", "domain": {"enum": [7]}, "concerns": []}]}"#;
        let schema = Schema::parse(text).unwrap();
        assert_eq!(schema.cardinality(), 1);
    }

    #[test]
    fn format_errors_carry_position() {
        let err = Schema::parse("[[params]]\nname = \n").unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }
}
