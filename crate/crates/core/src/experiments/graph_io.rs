//! JSON form of voltage graphs:
//!
//! ```json
//! {"algebra": {"layer_dims": [2, 1], "brackets": [[0, 1, 2, 1.0]]},
//!  "vertices": 1,
//!  "edges": [{"o": 0, "t": 0, "inv": 1, "p": 0.25, "voltage": [1, 0, 0]}, …]}
//! ```
//!
//! Bracket entries are `(i, j, k, value)` over the full basis, 0-indexed;
//! `(j, i, k, −value)` is implied. Voltages are full log-coordinate vectors.

use std::path::Path;

use serde_json::{json, Value};

use super::ExperimentError;
use crate::group_algebra::StratifiedAlgebra;
use crate::quotient_graph::{Edge, VoltageGraph};

fn schema(pointer: impl Into<String>, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Schema {
        pointer: pointer.into(),
        message: message.into(),
    }
}

fn field<'a>(obj: &'a Value, pointer: &str, key: &str) -> Result<&'a Value, ExperimentError> {
    obj.get(key)
        .ok_or_else(|| schema(format!("{pointer}/{key}"), "missing field"))
}

fn as_index(v: &Value, pointer: &str) -> Result<usize, ExperimentError> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| schema(pointer, "expected a nonnegative integer"))
}

fn as_number(v: &Value, pointer: &str) -> Result<f64, ExperimentError> {
    v.as_f64().ok_or_else(|| schema(pointer, "expected a number"))
}

fn as_array<'a>(v: &'a Value, pointer: &str) -> Result<&'a Vec<Value>, ExperimentError> {
    v.as_array().ok_or_else(|| schema(pointer, "expected an array"))
}

/// Parses the `algebra` block.
pub fn parse_algebra(v: &Value, pointer: &str) -> Result<StratifiedAlgebra, ExperimentError> {
    let dims_ptr = format!("{pointer}/layer_dims");
    let layer_dims = as_array(field(v, pointer, "layer_dims")?, &dims_ptr)?
        .iter()
        .enumerate()
        .map(|(i, d)| as_index(d, &format!("{dims_ptr}/{i}")))
        .collect::<Result<Vec<_>, _>>()?;
    let mut brackets = Vec::new();
    if let Some(b) = v.get("brackets") {
        let ptr = format!("{pointer}/brackets");
        for (n, entry) in as_array(b, &ptr)?.iter().enumerate() {
            let ep = format!("{ptr}/{n}");
            let e = as_array(entry, &ep)?;
            if e.len() != 4 {
                return Err(schema(ep, "expected [i, j, k, value]"));
            }
            brackets.push((
                as_index(&e[0], &format!("{ep}/0"))?,
                as_index(&e[1], &format!("{ep}/1"))?,
                as_index(&e[2], &format!("{ep}/2"))?,
                as_number(&e[3], &format!("{ep}/3"))?,
            ));
        }
    }
    Ok(StratifiedAlgebra::new(layer_dims, &brackets)?)
}

/// Parses a graph document. `fallback` supplies the algebra when the
/// document has no `algebra` block.
pub fn parse_graph(
    doc: &Value,
    fallback: Option<&StratifiedAlgebra>,
) -> Result<VoltageGraph, ExperimentError> {
    let algebra = match (doc.get("algebra"), fallback) {
        (Some(a), _) => parse_algebra(a, "/algebra")?,
        (None, Some(a)) => a.clone(),
        (None, None) => return Err(schema("/algebra", "missing field")),
    };
    let vertices = as_index(field(doc, "", "vertices")?, "/vertices")?;
    let mut edges = Vec::new();
    for (i, e) in as_array(field(doc, "", "edges")?, "/edges")?.iter().enumerate() {
        let ptr = format!("/edges/{i}");
        let voltage_ptr = format!("{ptr}/voltage");
        let voltage = as_array(field(e, &ptr, "voltage")?, &voltage_ptr)?
            .iter()
            .enumerate()
            .map(|(k, x)| as_number(x, &format!("{voltage_ptr}/{k}")))
            .collect::<Result<Vec<_>, _>>()?;
        if voltage.len() != algebra.dim() {
            return Err(schema(
                voltage_ptr,
                format!("expected {} coordinates, got {}", algebra.dim(), voltage.len()),
            ));
        }
        edges.push(Edge {
            o: as_index(field(e, &ptr, "o")?, &format!("{ptr}/o"))?,
            t: as_index(field(e, &ptr, "t")?, &format!("{ptr}/t"))?,
            inv: as_index(field(e, &ptr, "inv")?, &format!("{ptr}/inv"))?,
            p: as_number(field(e, &ptr, "p")?, &format!("{ptr}/p"))?,
            voltage: algebra.element(voltage)?,
        });
    }
    Ok(VoltageGraph::new(algebra, vertices, edges)?)
}

/// Reads and validates a graph file.
pub fn ingest_graph(
    path: &Path,
    fallback: Option<&StratifiedAlgebra>,
) -> Result<VoltageGraph, ExperimentError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| {
        schema("", format!("{}: invalid JSON: {e}", path.display()))
    })?;
    parse_graph(&doc, fallback)
}

pub fn algebra_to_json(alg: &StratifiedAlgebra) -> Value {
    let brackets: Vec<Value> = alg
        .bracket_entries()
        .into_iter()
        .map(|(i, j, k, c)| json!([i, j, k, c]))
        .collect();
    json!({ "layer_dims": alg.layer_dims(), "brackets": brackets })
}

pub fn graph_to_json(graph: &VoltageGraph) -> Value {
    let edges: Vec<Value> = graph
        .edges()
        .iter()
        .map(|e| json!({ "o": e.o, "t": e.t, "inv": e.inv, "p": e.p, "voltage": e.voltage.coords() }))
        .collect();
    json!({
        "algebra": algebra_to_json(graph.algebra()),
        "vertices": graph.vertex_count(),
        "edges": edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group_algebra::AlgebraError;
    use crate::quotient_graph::{heisenberg_cayley, GraphError};

    #[test]
    fn round_trip() {
        let g = heisenberg_cayley();
        let back = parse_graph(&graph_to_json(&g), None).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn missing_inverse_edge() {
        let mut doc = graph_to_json(&heisenberg_cayley());
        doc["edges"][1]["inv"] = json!(2);
        let err = parse_graph(&doc, None).unwrap_err();
        assert!(matches!(
            err,
            ExperimentError::Graph(GraphError::InvolutionViolation { .. })
        ));
    }

    #[test]
    fn schema_pointer() {
        let mut doc = graph_to_json(&heisenberg_cayley());
        doc["edges"][2]["p"] = json!("a quarter");
        match parse_graph(&doc, None).unwrap_err() {
            ExperimentError::Schema { pointer, .. } => assert_eq!(pointer, "/edges/2/p"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn jacobi_violation_surfaces() {
        // layers (3, 1, 1): [X0,X1] = X3, [X3,X2] = X4 and nothing else
        let doc = json!({
            "algebra": {"layer_dims": [3, 1, 1], "brackets": [[0, 1, 3, 1.0], [3, 2, 4, 1.0]]},
            "vertices": 1,
            "edges": []
        });
        let err = parse_graph(&doc, None).unwrap_err();
        assert!(matches!(
            err,
            ExperimentError::Algebra(AlgebraError::JacobiViolation { .. })
        ));
    }
}
