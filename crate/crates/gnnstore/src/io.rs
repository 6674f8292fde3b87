//! Flat-file formats: vertex/edge TSV, external partition plans, embedding
//! dumps and key=value config files. All loaders report 1-based line numbers
//! on malformed input and skip `#` comments and blank lines.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::partition::{EdgeInput, VertexInput};
use crate::types::{EdgeType, GraphError, Result, VertexId, VertexType};

fn parse_attr(field: &str, line: usize) -> Result<Vec<f64>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| GraphError::Parse {
                line,
                msg: format!("bad attribute value {s:?}"),
            })
        })
        .collect()
}

fn data_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let f = std::fs::File::open(path)?;
    Ok(BufReader::new(f)
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l)))
}

/// Vertex TSV: `id <TAB> type <TAB> f1,f2,...` (attribute field optional).
pub fn load_vertices(path: &Path) -> Result<Vec<VertexInput>> {
    let mut out = Vec::new();
    for (line, l) in data_lines(path)? {
        let l = l?;
        let t = l.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split('\t').collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(GraphError::Parse {
                line,
                msg: format!("expected 2-3 tab-separated fields, got {}", fields.len()),
            });
        }
        let id = fields[0].parse::<u64>().map_err(|_| GraphError::Parse {
            line,
            msg: format!("bad vertex id {:?}", fields[0]),
        })?;
        let vtype = fields[1].parse::<u16>().map_err(|_| GraphError::Parse {
            line,
            msg: format!("bad vertex type {:?}", fields[1]),
        })?;
        let attr = parse_attr(fields.get(2).copied().unwrap_or(""), line)?;
        out.push(VertexInput { id: VertexId(id), vtype: VertexType(vtype), attr });
    }
    Ok(out)
}

/// Edge TSV: `src <TAB> dst <TAB> type <TAB> weight <TAB> g1,...` (attribute
/// field optional).
pub fn load_edges(path: &Path) -> Result<Vec<EdgeInput>> {
    let mut out = Vec::new();
    for (line, l) in data_lines(path)? {
        let l = l?;
        let t = l.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split('\t').collect();
        if fields.len() < 4 || fields.len() > 5 {
            return Err(GraphError::Parse {
                line,
                msg: format!("expected 4-5 tab-separated fields, got {}", fields.len()),
            });
        }
        let src = fields[0].parse::<u64>().map_err(|_| GraphError::Parse {
            line,
            msg: format!("bad src id {:?}", fields[0]),
        })?;
        let dst = fields[1].parse::<u64>().map_err(|_| GraphError::Parse {
            line,
            msg: format!("bad dst id {:?}", fields[1]),
        })?;
        let edge_type = fields[2].parse::<u16>().map_err(|_| GraphError::Parse {
            line,
            msg: format!("bad edge type {:?}", fields[2]),
        })?;
        let weight = fields[3].parse::<f64>().map_err(|_| GraphError::Parse {
            line,
            msg: format!("bad weight {:?}", fields[3]),
        })?;
        if !weight.is_finite() || weight < 0.0 {
            return Err(GraphError::Parse { line, msg: format!("weight {weight} must be finite and >= 0") });
        }
        let attr = parse_attr(fields.get(4).copied().unwrap_or(""), line)?;
        out.push(EdgeInput {
            src: VertexId(src),
            dst: VertexId(dst),
            edge_type: EdgeType(edge_type),
            weight,
            attr,
        });
    }
    Ok(out)
}

pub fn write_vertices(path: &Path, vertices: &[VertexInput]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in vertices {
        let attr: Vec<String> = v.attr.iter().map(|x| x.to_string()).collect();
        writeln!(f, "{}\t{}\t{}", v.id.0, v.vtype.0, attr.join(","))?;
    }
    Ok(())
}

pub fn write_edges(path: &Path, edges: &[EdgeInput]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in edges {
        let attr: Vec<String> = e.attr.iter().map(|x| x.to_string()).collect();
        writeln!(f, "{}\t{}\t{}\t{}\t{}", e.src.0, e.dst.0, e.edge_type.0, e.weight, attr.join(","))?;
    }
    Ok(())
}

/// External plan file: `vertex_id <TAB> shard_id`.
pub fn load_plan(path: &Path) -> Result<HashMap<VertexId, usize>> {
    let mut out = HashMap::new();
    for (line, l) in data_lines(path)? {
        let l = l?;
        let t = l.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split('\t').collect();
        if fields.len() != 2 {
            return Err(GraphError::Parse {
                line,
                msg: format!("expected `vertex<TAB>shard`, got {} fields", fields.len()),
            });
        }
        let v = fields[0].parse::<u64>().map_err(|_| GraphError::Parse {
            line,
            msg: format!("bad vertex id {:?}", fields[0]),
        })?;
        let s = fields[1].parse::<usize>().map_err(|_| GraphError::Parse {
            line,
            msg: format!("bad shard id {:?}", fields[1]),
        })?;
        out.insert(VertexId(v), s);
    }
    Ok(out)
}

/// Embedding dump: `vertex_id <TAB> v1,v2,...,vd`, sorted by vertex id.
pub fn write_embeddings(path: &Path, embeddings: &HashMap<VertexId, Vec<f64>>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut ids: Vec<VertexId> = embeddings.keys().copied().collect();
    ids.sort();
    for v in ids {
        let vals: Vec<String> = embeddings[&v].iter().map(|x| format!("{x:.12}")).collect();
        writeln!(f, "{}\t{}", v.0, vals.join(","))?;
    }
    Ok(())
}

/// `key=value` config file; later keys override earlier ones.
pub fn load_config(path: &Path) -> Result<HashMap<String, String>> {
    let mut out = HashMap::new();
    for (line, l) in data_lines(path)? {
        let l = l?;
        let t = l.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        match t.split_once('=') {
            Some((k, v)) => {
                out.insert(k.trim().to_string(), v.trim().to_string());
            }
            None => {
                return Err(GraphError::Parse { line, msg: format!("expected key=value, got {t:?}") })
            }
        }
    }
    Ok(out)
}
