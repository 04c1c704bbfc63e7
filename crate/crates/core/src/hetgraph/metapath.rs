use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{HetGraph, Mpu, TypeId};
use crate::error::{Error, Result};

/// One step of a meta-path: the canonical MPU plus the traversal direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathUnit {
    pub mpu: Mpu,
    pub from: TypeId,
    pub to: TypeId,
}

/// An ordered node-type sequence such as `MAM` or `A-M-D`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaPath {
    types: Vec<TypeId>,
    labels: Vec<String>,
    units: Vec<PathUnit>,
    delimited: bool,
}

impl MetaPath {
    pub fn types(&self) -> &[TypeId] {
        &self.types
    }

    pub fn units(&self) -> &[PathUnit] {
        &self.units
    }

    pub fn start_type(&self) -> TypeId {
        self.types[0]
    }

    pub fn end_type(&self) -> TypeId {
        *self.types.last().unwrap()
    }

    pub fn is_symmetric(&self) -> bool {
        self.types.iter().eq(self.types.iter().rev())
    }

    /// Units that take part in integration. A symmetric path repeats its
    /// MPUs in mirror order, so only the first half is used.
    pub fn integration_units(&self) -> &[PathUnit] {
        if self.is_symmetric() {
            let half = self.units.len().div_ceil(2);
            &self.units[..half]
        } else {
            &self.units
        }
    }

    /// Node types visited by [`Self::integration_units`], including the start.
    pub fn integration_types(&self) -> &[TypeId] {
        &self.types[..self.integration_units().len() + 1]
    }

    pub fn reversed(&self) -> MetaPath {
        let types: Vec<TypeId> = self.types.iter().rev().copied().collect();
        let labels: Vec<String> = self.labels.iter().rev().cloned().collect();
        let units = self
            .units
            .iter()
            .rev()
            .map(|u| PathUnit {
                mpu: u.mpu,
                from: u.to,
                to: u.from,
            })
            .collect();
        MetaPath {
            types,
            labels,
            units,
            delimited: self.delimited,
        }
    }

    pub fn render(&self) -> String {
        if self.delimited {
            self.labels.join("-")
        } else {
            self.labels.concat()
        }
    }
}

impl fmt::Display for MetaPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// What meta-path parsing needs to know about node types.
pub trait TypeSchema {
    fn type_id(&self, label: &str) -> Option<TypeId>;
    fn type_name(&self, t: TypeId) -> &str;
    /// Whether an MPU joins the two types.
    fn types_connected(&self, a: TypeId, b: TypeId) -> bool;

    /// Canonical MPU; ordering is by label.
    fn mpu(&self, a: TypeId, b: TypeId) -> Mpu {
        if self.type_name(a) <= self.type_name(b) {
            Mpu { first: a, second: b }
        } else {
            Mpu { first: b, second: a }
        }
    }
}

impl TypeSchema for HetGraph {
    fn type_id(&self, label: &str) -> Option<TypeId> {
        HetGraph::type_id(self, label)
    }

    fn type_name(&self, t: TypeId) -> &str {
        HetGraph::type_name(self, t)
    }

    fn types_connected(&self, a: TypeId, b: TypeId) -> bool {
        HetGraph::types_connected(self, a, b)
    }
}

/// Parses `MAM` (single-letter labels) or `M-A-M` (any labels).
pub fn parse_meta_path<S: TypeSchema + ?Sized>(text: &str, schema: &S) -> Result<MetaPath> {
    let text = text.trim();
    let delimited = text.contains('-');
    let labels: Vec<String> = if delimited {
        text.split('-').map(|s| s.trim().to_string()).collect()
    } else {
        text.chars().map(|c| c.to_string()).collect()
    };
    if labels.len() < 2 {
        return Err(Error::Parse(format!(
            "meta-path {text:?} needs at least two node types"
        )));
    }
    let mut types = Vec::with_capacity(labels.len());
    for l in &labels {
        match schema.type_id(l) {
            Some(t) => types.push(t),
            None => return Err(Error::Parse(format!("unknown node type {l:?} in {text:?}"))),
        }
    }
    let mut units = Vec::with_capacity(types.len() - 1);
    for w in types.windows(2) {
        if !schema.types_connected(w[0], w[1]) {
            return Err(Error::Connectivity(
                schema.type_name(w[0]).to_string(),
                schema.type_name(w[1]).to_string(),
            ));
        }
        units.push(PathUnit {
            mpu: schema.mpu(w[0], w[1]),
            from: w[0],
            to: w[1],
        });
    }
    Ok(MetaPath {
        types,
        labels,
        units,
        delimited,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntegrationMode {
    Cascaded,
    Cumulative,
}

impl FromStr for IntegrationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cascaded" => Ok(IntegrationMode::Cascaded),
            "cumulative" => Ok(IntegrationMode::Cumulative),
            other => Err(Error::Config(format!("unknown integration mode {other:?}"))),
        }
    }
}

impl fmt::Display for IntegrationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IntegrationMode::Cascaded => "cascaded",
            IntegrationMode::Cumulative => "cumulative",
        })
    }
}

/// A user query: one path (cascaded) or several sharing a start type (cumulative).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryPlan {
    mode: IntegrationMode,
    paths: Vec<MetaPath>,
    anchor_type: TypeId,
}

impl QueryPlan {
    pub fn new(mode: IntegrationMode, paths: Vec<MetaPath>) -> Result<Self> {
        let first = paths
            .first()
            .ok_or_else(|| Error::Config("query plan needs at least one meta-path".into()))?;
        if mode == IntegrationMode::Cascaded && paths.len() != 1 {
            return Err(Error::Config(format!(
                "cascaded integration takes exactly one meta-path, got {}",
                paths.len()
            )));
        }
        let anchor_type = first.start_type();
        if paths.iter().any(|p| p.start_type() != anchor_type) {
            return Err(Error::Config(
                "all meta-paths in a plan must share the start type".into(),
            ));
        }
        Ok(Self {
            mode,
            paths,
            anchor_type,
        })
    }

    pub fn cascaded(path: MetaPath) -> Self {
        Self::new(IntegrationMode::Cascaded, vec![path]).expect("single path plan")
    }

    pub fn parse<S: TypeSchema + ?Sized>(mode: IntegrationMode, texts: &[&str], schema: &S) -> Result<Self> {
        let paths = texts
            .iter()
            .map(|t| parse_meta_path(t, schema))
            .collect::<Result<Vec<_>>>()?;
        Self::new(mode, paths)
    }

    pub fn mode(&self) -> IntegrationMode {
        self.mode
    }

    pub fn paths(&self) -> &[MetaPath] {
        &self.paths
    }

    pub fn anchor_type(&self) -> TypeId {
        self.anchor_type
    }

    /// Plan over reversed paths, anchored at the end type.
    pub fn reversed(&self) -> Result<Self> {
        Self::new(self.mode, self.paths.iter().map(MetaPath::reversed).collect())
    }
}
