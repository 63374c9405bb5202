//! Design spaces: annotated parameter schemas, points, full and
//! concern-projected spaces, and the index-grid topology used by the
//! search strategies.

mod schema;
mod topology;

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use thiserror::Error;

pub(crate) use schema::is_identifier;
pub use schema::{MetricName, NamedMetric, ParamDomain, ParamSpec, Schema};
pub use topology::Norm;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("invalid identifier `{0}`")]
    InvalidName(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("metric `{0}` has a non-finite value")]
    NonFinite(String),
    #[error("schema format error: {0}")]
    Format(String),
    #[error("no parameter carries the concern `{0}`")]
    NoSuchConcern(String),
    #[error("projecting on `{0}` removes every dimension")]
    AllDimensionsRemoved(String),
    #[error("point {0:?} is not in the space")]
    PointNotInSpace(Vec<usize>),
    #[error("point {0:?} does not conform to the schema")]
    NonConforming(Vec<usize>),
    #[error("duplicate point {0:?}")]
    DuplicatePoint(Vec<usize>),
    #[error("space is not a full grid over its schema ({present} of {expected} points)")]
    NotAFullGrid { present: usize, expected: usize },
}

/// One implementation candidate.
///
/// `coords` are indices into the schema domains (not raw values). Parameters
/// demoted by a projection live in `frozen` at their raw value; generated
/// metrics accumulate in `metrics`.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    coords: Vec<usize>,
    frozen: Vec<NamedMetric>,
    metrics: Vec<NamedMetric>,
    degraded: bool,
}

impl Point {
    pub fn new(coords: Vec<usize>) -> Self {
        Self {
            coords,
            frozen: Vec::new(),
            metrics: Vec::new(),
            degraded: false,
        }
    }

    pub fn coords(&self) -> &[usize] {
        &self.coords
    }

    pub fn frozen(&self) -> &[NamedMetric] {
        &self.frozen
    }

    pub fn metrics(&self) -> &[NamedMetric] {
        &self.metrics
    }

    /// True when some metric was filled in with a configured worst value.
    pub fn is_degraded(&self) -> bool {
        self.degraded
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.name.as_str() == name)
            .map(|m| m.value)
    }

    pub fn frozen_value(&self, name: &str) -> Option<f64> {
        self.frozen
            .iter()
            .find(|m| m.name.as_str() == name)
            .map(|m| m.value)
    }

    pub fn has_name(&self, name: &str) -> bool {
        self.metric(name).is_some() || self.frozen_value(name).is_some()
    }

    pub fn with_frozen(mut self, frozen: Vec<NamedMetric>) -> Self {
        self.frozen = frozen;
        self
    }

    /// Appends metrics; callers guarantee names are fresh.
    pub(crate) fn push_metrics(&mut self, metrics: impl IntoIterator<Item = NamedMetric>) {
        self.metrics.extend(metrics);
    }

    pub(crate) fn mark_degraded(&mut self) {
        self.degraded = true;
    }

    /// Identity of a point inside a space: coordinates plus frozen values.
    pub fn key(&self) -> PointKey {
        PointKey {
            coords: self.coords.clone(),
            frozen: self
                .frozen
                .iter()
                .map(|m| (m.name.to_string(), m.value.to_bits()))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PointKey {
    pub coords: Vec<usize>,
    pub frozen: Vec<(String, u64)>,
}

/// Name resolution over a point: parameters resolve to raw values, frozen
/// parameters and metrics to their stored values.
#[derive(Clone, Copy, Debug)]
pub struct PointRef<'a> {
    pub schema: &'a Schema,
    pub point: &'a Point,
}

impl<'a> PointRef<'a> {
    pub fn new(schema: &'a Schema, point: &'a Point) -> Self {
        Self { schema, point }
    }

    pub fn raw_value(&self, k: usize) -> i64 {
        self.schema.params()[k]
            .domain
            .value_at(self.point.coords[k])
    }

    /// Raw parameter values in schema order.
    pub fn raw_values(&self) -> Vec<i64> {
        (0..self.schema.len()).map(|k| self.raw_value(k)).collect()
    }

    pub fn lookup(&self, name: &str) -> Option<f64> {
        if let Some(k) = self.schema.position(name) {
            return Some(self.raw_value(k) as f64);
        }
        self.point
            .frozen_value(name)
            .or_else(|| self.point.metric(name))
    }

    /// Parameters (raw) followed by frozen parameters, as name/value pairs.
    pub fn parameter_values(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self
            .schema
            .params()
            .iter()
            .enumerate()
            .map(|(k, p)| (p.name.to_string(), self.raw_value(k) as f64))
            .collect();
        out.extend(
            self.point
                .frozen
                .iter()
                .map(|m| (m.name.to_string(), m.value)),
        );
        out
    }
}

type CoordIndex = HashMap<Vec<usize>, Vec<usize>>;

/// An ordered finite collection of points sharing a schema.
#[derive(Clone, Debug)]
pub struct DesignSpace {
    schema: Arc<Schema>,
    points: Vec<Point>,
    index: OnceLock<CoordIndex>,
}

impl PartialEq for DesignSpace {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema && self.points == other.points
    }
}

impl DesignSpace {
    /// Builds a space from explicit points, checking conformance and
    /// uniqueness.
    pub fn new(schema: Arc<Schema>, points: Vec<Point>) -> Result<Self, SpaceError> {
        let cards = schema.cardinalities();
        let mut seen = std::collections::HashSet::new();
        for p in &points {
            if p.coords.len() != cards.len() || p.coords.iter().zip(&cards).any(|(c, n)| c >= n) {
                return Err(SpaceError::NonConforming(p.coords.clone()));
            }
            for m in p.frozen.iter().chain(&p.metrics) {
                if schema.position(m.name.as_str()).is_some() {
                    return Err(SpaceError::DuplicateName(m.name.to_string()));
                }
            }
            let mut names = std::collections::HashSet::new();
            for m in p.frozen.iter().chain(&p.metrics) {
                if !names.insert(m.name.as_str()) {
                    return Err(SpaceError::DuplicateName(m.name.to_string()));
                }
            }
            if !seen.insert(p.key()) {
                return Err(SpaceError::DuplicatePoint(p.coords.clone()));
            }
        }
        Ok(Self::from_parts(schema, points))
    }

    pub(crate) fn from_parts(schema: Arc<Schema>, points: Vec<Point>) -> Self {
        Self {
            schema,
            points,
            index: OnceLock::new(),
        }
    }

    pub fn empty(schema: Arc<Schema>) -> Self {
        Self::from_parts(schema, Vec::new())
    }

    /// Same schema, different points (a subset or reordering of this
    /// space, possibly with more metrics).
    pub(crate) fn with_points(&self, points: Vec<Point>) -> Self {
        Self::from_parts(self.schema.clone(), points)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point_ref<'a>(&'a self, p: &'a Point) -> PointRef<'a> {
        PointRef::new(&self.schema, p)
    }

    pub fn at(&self, pos: usize) -> PointRef<'_> {
        PointRef::new(&self.schema, &self.points[pos])
    }

    pub(crate) fn coord_index(&self) -> &CoordIndex {
        self.index.get_or_init(|| {
            let mut idx: CoordIndex = HashMap::with_capacity(self.points.len());
            for (pos, p) in self.points.iter().enumerate() {
                idx.entry(p.coords.clone()).or_default().push(pos);
            }
            idx
        })
    }

    /// Position of `p` in this space, matched on coordinates and frozen
    /// parameters.
    pub fn position_of(&self, p: &Point) -> Option<usize> {
        self.coord_index()
            .get(&p.coords)?
            .iter()
            .copied()
            .find(|&pos| self.points[pos].frozen == p.frozen)
    }

    /// Positions whose coordinates equal `coords`, in enumeration order.
    pub fn positions_at(&self, coords: &[usize]) -> &[usize] {
        self.coord_index()
            .get(coords)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn is_full_grid(&self) -> bool {
        let expected = self.schema.cardinality();
        self.points.len() == expected && self.coord_index().len() == expected
    }
}

/// Full Cartesian product of the schema, row-major (last parameter varies
/// fastest).
pub fn build_space(schema: Schema) -> DesignSpace {
    let schema = Arc::new(schema);
    let cards = schema.cardinalities();
    let total: usize = cards.iter().product();
    let mut points = Vec::with_capacity(total);
    let mut coords = vec![0usize; cards.len()];
    for _ in 0..total {
        points.push(Point::new(coords.clone()));
        for k in (0..cards.len()).rev() {
            coords[k] += 1;
            if coords[k] < cards[k] {
                break;
            }
            coords[k] = 0;
        }
    }
    DesignSpace::from_parts(schema, points)
}

/// Keeps only the parameters tagged with `concern`; every other parameter is
/// frozen at its domain minimum (or maximum). Points collapsing onto the same
/// projected identity keep their first occurrence.
pub fn project_space(
    space: &DesignSpace,
    concern: &str,
    project_to_min: bool,
) -> Result<DesignSpace, SpaceError> {
    let schema = space.schema();
    if schema.is_empty() {
        return Err(SpaceError::AllDimensionsRemoved(concern.to_string()));
    }
    let kept: Vec<usize> = (0..schema.len())
        .filter(|&k| schema.params()[k].has_concern(concern))
        .collect();
    if kept.is_empty() {
        return Err(SpaceError::NoSuchConcern(concern.to_string()));
    }
    if kept.len() == schema.len() {
        return Ok(space.clone());
    }
    let demoted: Vec<NamedMetric> = (0..schema.len())
        .filter(|k| !kept.contains(k))
        .map(|k| {
            let p = &schema.params()[k];
            let raw = if project_to_min {
                p.domain.min_value()
            } else {
                p.domain.max_value()
            };
            NamedMetric {
                name: p.name.clone(),
                value: raw as f64,
            }
        })
        .collect();
    let projected = Arc::new(
        Schema::new(kept.iter().map(|&k| schema.params()[k].clone()).collect())
            .expect("subset of a valid schema"),
    );

    let mut seen = std::collections::HashSet::new();
    let mut points = Vec::new();
    for p in space.points() {
        let mut frozen = p.frozen.clone();
        frozen.extend(demoted.iter().cloned());
        let q = Point {
            coords: kept.iter().map(|&k| p.coords[k]).collect(),
            frozen,
            metrics: p.metrics.clone(),
            degraded: p.degraded,
        };
        if seen.insert(q.key()) {
            points.push(q);
        }
    }
    Ok(DesignSpace::from_parts(projected, points))
}
