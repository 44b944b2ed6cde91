use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::repr::{Attr, EdgeVal, Graph, VertexId};
use super::space::{AttributeSpace, Distance, EdgeSpace, SpaceSpec, VertexLabel};
use crate::error::{Error, Result};

fn parse_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse(msg.into()))
}

/// Strings map to themselves, everything else to its JSON text.
pub fn token(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LabelJson {
    Full {
        id: Value,
        #[serde(default)]
        loc: Option<Vec<i64>>,
        #[serde(default)]
        color: Option<String>,
    },
    Bare(Value),
}

#[derive(Deserialize)]
struct EdgeSpaceJson {
    values: Vec<Value>,
    zero: Value,
    #[serde(default)]
    order: Vec<(Value, Value)>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AttributeSpaceJson {
    Real {
        kind: String,
        dim: usize,
        #[serde(default)]
        distance: Option<String>,
    },
    Tokens(Vec<Value>),
}

#[derive(Deserialize)]
struct PairVal {
    u: Value,
    v: Value,
    val: Value,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum MasterVertexJson {
    GridThreshold {
        t: f64,
        #[serde(default)]
        allow: Option<Value>,
    },
    Table {
        default: Value,
        #[serde(default)]
        pairs: Vec<PairVal>,
    },
}

#[derive(Deserialize)]
struct AttrPairVal {
    a: Value,
    b: Value,
    val: Value,
}

#[derive(Deserialize)]
struct MasterAttrJson {
    default: Value,
    #[serde(default)]
    pairs: Vec<AttrPairVal>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceSpecJson {
    vertex_space: Vec<LabelJson>,
    edge_space: EdgeSpaceJson,
    #[serde(default)]
    attribute_space: Option<AttributeSpaceJson>,
    #[serde(default)]
    max_order: Option<usize>,
    #[serde(default)]
    master_vertex: Option<MasterVertexJson>,
    #[serde(default)]
    master_attr: Option<MasterAttrJson>,
}

impl SpaceSpec {
    pub fn from_json(v: &Value) -> Result<SpaceSpec> {
        let raw: SpaceSpecJson =
            serde_json::from_value(v.clone()).map_err(|e| Error::Parse(format!("space spec: {e}")))?;
        let labels = raw
            .vertex_space
            .into_iter()
            .map(|l| match l {
                LabelJson::Bare(id) => VertexLabel::plain(token(&id)),
                LabelJson::Full { id, loc, color } => VertexLabel {
                    id: token(&id),
                    loc,
                    color,
                },
            })
            .collect();
        let es = raw.edge_space;
        let pos = |x: &Value| -> Result<usize> {
            match es.values.iter().position(|n| n == x) {
                Some(i) => Ok(i),
                None => parse_err(format!("edge value {x} is not in edge_space.values")),
            }
        };
        let zero = pos(&es.zero)?;
        let order = es
            .order
            .iter()
            .map(|(a, b)| Ok((pos(a)?, pos(b)?)))
            .collect::<Result<Vec<_>>>()?;
        let edges = EdgeSpace::new(es.values.clone(), zero, &order)?;
        let mut spec = SpaceSpec::new(labels, edges)?;
        if let Some(a) = raw.attribute_space {
            let space = match a {
                AttributeSpaceJson::Tokens(t) => AttributeSpace::Tokens(t),
                AttributeSpaceJson::Real {
                    kind,
                    dim,
                    distance,
                } => {
                    if kind != "real" {
                        return parse_err(format!("unknown attribute space kind '{kind}'"));
                    }
                    let distance = Distance::parse(distance.as_deref().unwrap_or("euclidean"))?;
                    AttributeSpace::Real { dim, distance }
                }
            };
            spec = spec.with_attributes(space)?;
        }
        if let Some(n) = raw.max_order {
            spec = spec.with_max_order(n)?;
        }
        match raw.master_vertex {
            None => {}
            Some(MasterVertexJson::GridThreshold { t, allow }) => {
                let allow = allow.map(|a| spec.edge_value(&a)).transpose()?;
                spec = spec.with_grid_threshold(t, allow)?;
            }
            Some(MasterVertexJson::Table { default, pairs }) => {
                let n = spec.num_vertices();
                let d = spec.edge_value(&default)?;
                let mut table = vec![vec![d; n]; n];
                for p in &pairs {
                    let u = spec.vertex_ref(&p.u)? as usize;
                    let v = spec.vertex_ref(&p.v)? as usize;
                    let e = spec.edge_value(&p.val)?;
                    table[u][v] = e;
                    table[v][u] = e;
                }
                spec = spec.with_master_vertex(table)?;
            }
        }
        if let Some(m) = raw.master_attr {
            let k = match spec.attributes() {
                Some(AttributeSpace::Tokens(t)) => t.len(),
                _ => return parse_err("master_attr needs a token attribute space"),
            };
            let d = spec.edge_value(&m.default)?;
            let mut table = vec![vec![d; k]; k];
            for p in &m.pairs {
                let (Attr::Cat(a), Attr::Cat(b)) = (spec.attr_value(&p.a)?, spec.attr_value(&p.b)?)
                else {
                    unreachable!()
                };
                let e = spec.edge_value(&p.val)?;
                table[a as usize][b as usize] = e;
                table[b as usize][a as usize] = e;
            }
            spec = spec.with_master_attr(table)?;
        }
        Ok(spec)
    }

    pub fn from_json_str(s: &str) -> Result<SpaceSpec> {
        let v: Value = serde_json::from_str(s)
            .map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
        SpaceSpec::from_json(&v)
    }

    pub fn edge_value(&self, v: &Value) -> Result<EdgeVal> {
        match self.edge_space().index_of(v) {
            Some(e) => Ok(e),
            None => parse_err(format!("unknown edge value {v}")),
        }
    }

    pub fn vertex_ref(&self, v: &Value) -> Result<VertexId> {
        let t = token(v);
        match self.vertex_id(&t) {
            Some(i) => Ok(i),
            None => parse_err(format!("unknown vertex label '{t}'")),
        }
    }

    pub fn attr_value(&self, v: &Value) -> Result<Attr> {
        match self.attributes() {
            Some(AttributeSpace::Tokens(t)) => match t.iter().position(|x| x == v) {
                Some(i) => Ok(Attr::Cat(i as u32)),
                None => match t.iter().position(|x| token(x) == token(v)) {
                    Some(i) => Ok(Attr::Cat(i as u32)),
                    None => parse_err(format!("unknown attribute token {v}")),
                },
            },
            Some(AttributeSpace::Real { dim, .. }) => {
                let p: Vec<f64> = serde_json::from_value(v.clone())
                    .map_err(|e| Error::Parse(format!("real attribute: {e}")))?;
                if p.len() != *dim {
                    return parse_err(format!("attribute dimension {} != {dim}", p.len()));
                }
                Ok(Attr::Point(p))
            }
            None => parse_err("space has no attribute space"),
        }
    }

    pub fn attr_json(&self, a: &Attr) -> Value {
        match (self.attributes(), a) {
            (Some(AttributeSpace::Tokens(t)), Attr::Cat(c)) => t[*c as usize].clone(),
            (_, Attr::Cat(c)) => Value::from(*c),
            (_, Attr::Point(p)) => Value::from(p.clone()),
        }
    }

    /// Parses and validates a graph.
    pub fn graph_from_json(&self, v: &Value) -> Result<Graph> {
        let raw: GraphJson =
            serde_json::from_value(v.clone()).map_err(|e| Error::Parse(format!("graph: {e}")))?;
        self.graph_from_raw(&raw)
    }

    fn graph_from_raw(&self, raw: &GraphJson) -> Result<Graph> {
        let mut ids = Vec::with_capacity(raw.vertices.len());
        let mut attrs = Vec::with_capacity(raw.vertices.len());
        for vj in &raw.vertices {
            let id = self.vertex_ref(&vj.id)?;
            ids.push(id);
            match (&vj.attr, self.attributes()) {
                (Some(a), _) => attrs.push(self.attr_value(a)?),
                (None, Some(AttributeSpace::Real { dim, .. })) => {
                    let loc = vj
                        .loc
                        .clone()
                        .or_else(|| self.vertex_labels()[id as usize].loc.clone());
                    match loc {
                        Some(l) if l.len() == *dim => {
                            attrs.push(Attr::Point(l.iter().map(|&x| x as f64).collect()))
                        }
                        _ => return parse_err(format!("vertex '{}' needs an attribute", token(&vj.id))),
                    }
                }
                (None, Some(_)) => {
                    return parse_err(format!("vertex '{}' needs an attribute", token(&vj.id)))
                }
                (None, None) => {}
            }
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != ids.len() {
            return parse_err("duplicate vertex in graph");
        }
        let mut g = if self.attributes().is_some() {
            Graph::from_attributed(ids.into_iter().zip(attrs))?
        } else {
            Graph::from_vertices(ids)
        };
        for e in &raw.edges {
            let u = self.vertex_ref(&e.u)?;
            let v = self.vertex_ref(&e.v)?;
            let val = self.edge_value(&e.val)?;
            if g.edge(u, v) != 0 {
                return parse_err(format!("edge {}-{} listed twice", token(&e.u), token(&e.v)));
            }
            g.set_edge(u, v, val)?;
        }
        self.validate(&g)?;
        Ok(g)
    }

    pub fn graph_to_json(&self, g: &Graph) -> GraphJson {
        let vertices = g
            .vertices()
            .iter()
            .map(|&v| VertexJson {
                id: Value::from(self.label(v)),
                attr: g.attr(v).map(|a| self.attr_json(a)),
                loc: self.vertex_labels()[v as usize].loc.clone(),
            })
            .collect();
        let edges = g
            .edges()
            .map(|(u, v, e)| EdgeJson {
                u: Value::from(self.label(u)),
                v: Value::from(self.label(v)),
                val: self.edge_space().name(e).clone(),
            })
            .collect();
        GraphJson { vertices, edges }
    }

    pub fn graph_to_value(&self, g: &Graph) -> Value {
        serde_json::to_value(self.graph_to_json(g)).expect("graph json")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VertexJson {
    pub id: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attr: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loc: Option<Vec<i64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeJson {
    pub u: Value,
    pub v: Value,
    pub val: Value,
}

/// Graph wire format: vertices in Λ_V order, nonzero edges with `u` before `v`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphJson {
    pub vertices: Vec<VertexJson>,
    #[serde(default)]
    pub edges: Vec<EdgeJson>,
}
