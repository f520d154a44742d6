//! JSON table format.
//!
//! ```json
//! {"variables":[{"name":"A1","support":["0","1"]}],
//!  "entries":[{"assignment":{"A1":"0"},"p":"1/2"},{"assignment":{"A1":"1"},"p":"1/2"}]}
//! ```
//!
//! Unknown fields are rejected. The writer emits only positive entries, in
//! canonical order (support-index order, variables in schema order), with
//! assignment keys in schema order, so output is byte-stable.

use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rational::Rational;
use crate::table::{Assignment, JointTable, Schema, Variable};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableJson {
    pub name: String,
    pub support: Vec<String>,
}

/// Map that keeps its key order on the wire and rejects duplicate keys.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OrderedLabels(pub Vec<(String, String)>);

impl Serialize for OrderedLabels {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for OrderedLabels {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = OrderedLabels;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from variable name to outcome label")
            }
            fn visit_map<M: MapAccess<'de>>(self, mut access: M) -> std::result::Result<Self::Value, M::Error> {
                let mut out: Vec<(String, String)> = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, String>()? {
                    if out.iter().any(|(seen, _)| *seen == k) {
                        return Err(serde::de::Error::custom(format!("duplicate key `{k}`")));
                    }
                    out.push((k, v));
                }
                Ok(OrderedLabels(out))
            }
        }
        deserializer.deserialize_map(V)
    }
}

impl From<&OrderedLabels> for Assignment {
    fn from(o: &OrderedLabels) -> Self {
        Assignment::from_pairs(o.0.iter().cloned())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryJson {
    pub assignment: OrderedLabels,
    pub p: Rational,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableJson {
    pub variables: Vec<VariableJson>,
    pub entries: Vec<EntryJson>,
}

pub fn schema_to_json(schema: &Schema) -> Vec<VariableJson> {
    schema
        .variables()
        .iter()
        .map(|v| VariableJson {
            name: v.name.clone(),
            support: v.support.clone(),
        })
        .collect()
}

pub fn schema_from_json(vars: &[VariableJson]) -> Result<Schema> {
    Schema::new(
        vars.iter()
            .map(|v| Variable::new(v.name.clone(), v.support.clone()))
            .collect(),
    )
}

impl From<&JointTable> for TableJson {
    fn from(t: &JointTable) -> Self {
        let schema = t.schema();
        let entries = t
            .entries()
            .map(|(key, p)| EntryJson {
                assignment: OrderedLabels(
                    key.iter()
                        .zip(schema.variables())
                        .map(|(&l, v)| (v.name.clone(), v.support[l].clone()))
                        .collect(),
                ),
                p: p.clone(),
            })
            .collect();
        TableJson {
            variables: schema_to_json(schema),
            entries,
        }
    }
}

impl TableJson {
    pub fn into_table(self) -> Result<JointTable> {
        let schema = schema_from_json(&self.variables)?;
        let entries = self
            .entries
            .iter()
            .map(|e| (Assignment::from(&e.assignment), e.p.clone()))
            .collect();
        JointTable::new(schema, entries)
    }
}

/// Canonical compact JSON for a table.
pub fn table_to_json(t: &JointTable) -> String {
    serde_json::to_string(&TableJson::from(t)).expect("table serialization is infallible")
}

pub fn table_from_json(s: &str) -> Result<JointTable> {
    let raw: TableJson = serde_json::from_str(s).map_err(Error::Json)?;
    raw.into_table()
}
