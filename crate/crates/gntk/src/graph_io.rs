//! Graph sources: the built-in ring and JSON edge lists
//! `{"n": N, "edges": [[i, j], ...], "normalization": "none|symmetric|row"}`.

use std::path::Path;

use gntk_core::graph::{build_ring_graph, normalize_adjacency};
use gntk_core::{GraphSpec, Mat, Normalization};
use serde::Deserialize;

use crate::config::GraphSource;
use crate::error::{CliError, CliResult};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeListFile {
    n: usize,
    edges: Vec<[usize; 2]>,
    #[serde(default)]
    normalization: Normalization,
}

/// A raw 0/1 adjacency plus the normalization its source asks for.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedGraph {
    pub raw: Mat,
    pub normalization: Normalization,
    pub coords: Option<Vec<f64>>,
}

impl LoadedGraph {
    pub fn spec(&self, mode: Normalization) -> CliResult<GraphSpec> {
        let g = GraphSpec::new(normalize_adjacency(&self.raw, mode))?;
        Ok(match &self.coords {
            Some(c) => g.with_coords(c.clone())?,
            None => g,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.raw.nrows()
    }
}

pub fn ring100() -> LoadedGraph {
    let ring = build_ring_graph();
    LoadedGraph {
        raw: ring.adjacency().clone(),
        normalization: Normalization::None,
        coords: ring.coords().map(<[f64]>::to_vec),
    }
}

pub fn load(source: &GraphSource, base_dir: &Path) -> CliResult<LoadedGraph> {
    match source {
        GraphSource::Builtin(name) if name == "ring100" => Ok(ring100()),
        GraphSource::Builtin(other) => Err(CliError::InvalidConfig(format!(
            "unknown built-in graph {other:?} (use \"ring100\" or {{\"path\": ...}})"
        ))),
        GraphSource::File { path } => load_edge_list(&base_dir.join(path)),
    }
}

pub fn load_edge_list(path: &Path) -> CliResult<LoadedGraph> {
    if !path.is_file() {
        return Err(CliError::GraphNotFound(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let parse_err = |message: String| CliError::GraphParse {
        path: path.to_path_buf(),
        message,
    };
    let file: EdgeListFile = serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
    if file.n == 0 {
        return Err(parse_err("n must be positive".into()));
    }
    let mut raw = Mat::zeros(file.n, file.n);
    for [i, j] in file.edges {
        if i >= file.n || j >= file.n {
            return Err(parse_err(format!("edge ({i}, {j}) out of range for n = {}", file.n)));
        }
        raw[(i, j)] = 1.0;
        raw[(j, i)] = 1.0;
    }
    Ok(LoadedGraph {
        raw,
        normalization: file.normalization,
        coords: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn ring_rows_sum_to_fifteen() {
        let g = ring100().spec(Normalization::None).unwrap();
        let sums = g.adjacency().column_sum();
        assert!(sums.iter().all(|&s| s == 15.0));
    }

    #[test]
    fn edge_list_matches_core_builder() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, r#"{{"n": 4, "edges": [[0, 1], [1, 2], [2, 3], [3, 3]], "normalization": "row"}}"#).unwrap();
        let loaded = load_edge_list(f.path()).unwrap();
        let spec = loaded.spec(loaded.normalization).unwrap();
        let direct = GraphSpec::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 3)], Normalization::Row).unwrap();
        assert_eq!(spec, direct);
    }

    #[test]
    fn missing_and_malformed_files() {
        let err = load_edge_list(Path::new("/nonexistent/graph.json")).unwrap_err();
        assert_eq!(err.code(), "graph_not_found");
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, r#"{{"n": 2, "edges": [[0, 5]]}}"#).unwrap();
        assert_eq!(load_edge_list(f.path()).unwrap_err().code(), "graph_parse_error");
    }
}
