//! Text-based dataset directory format.
//!
//! ```text
//! meta.json     {"num_nodes": N, "num_features": F, "num_classes": C, "directed": false}
//! features.csv  N rows of F comma-separated reals
//! edges.csv     "u,v" per line, 0-based, u < v, no duplicates
//! labels.csv    one integer per line, -1 for unlabeled (optional when C = 0)
//! masks.json    optional {"train": [..], "val": [..], "test": [..]}
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

pub const META_FILE: &str = "meta.json";
pub const FEATURES_FILE: &str = "features.csv";
pub const EDGES_FILE: &str = "edges.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const MASKS_FILE: &str = "masks.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
    pub directed: bool,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn load_canonical(dir: impl AsRef<Path>) -> Result<Graph> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META_FILE);
    let meta: Meta = serde_json::from_str(&read(&meta_path)?)
        .map_err(|e| Error::parse(&meta_path, e.line(), format!("malformed header: {e}")))?;
    if meta.directed {
        return Err(Error::parse(&meta_path, 1, "directed graphs are not supported"));
    }
    let n = meta.num_nodes;
    let f = meta.num_features;

    let feat_path = dir.join(FEATURES_FILE);
    let text = read(&feat_path)?;
    let mut values = Vec::with_capacity(n * f);
    let mut rows = 0;
    for (line_no, line) in data_lines(&text) {
        let before = values.len();
        for tok in line.split(',') {
            let v: f64 = tok.trim().parse().map_err(|_| {
                Error::parse(&feat_path, line_no, format!("not a real number: '{}'", tok.trim()))
            })?;
            values.push(v);
        }
        if values.len() - before != f {
            return Err(Error::parse(
                &feat_path,
                line_no,
                format!("expected {f} features, found {}", values.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::parse(
            &feat_path,
            rows,
            format!("expected {n} feature rows, found {rows}"),
        ));
    }
    let features = Array2::from_shape_vec((n, f), values).expect("row lengths checked");

    let edge_path = dir.join(EDGES_FILE);
    let text = read(&edge_path)?;
    let mut edges = Vec::new();
    for (line_no, line) in data_lines(&text) {
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::parse(&edge_path, line_no, format!("bad node index '{s}'")))
        };
        if parts.len() != 2 {
            return Err(Error::parse(&edge_path, line_no, "expected 'u,v'"));
        }
        let (u, v) = (parse(parts[0])?, parse(parts[1])?);
        if u >= n || v >= n {
            return Err(Error::Structural(format!(
                "{}:{line_no}: edge ({u}, {v}) references a node outside 0..{n}",
                edge_path.display()
            )));
        }
        if u >= v {
            return Err(Error::parse(&edge_path, line_no, format!("edge ({u}, {v}) must have u < v")));
        }
        edges.push((u, v));
    }

    let label_path = dir.join(LABELS_FILE);
    let (labels, num_classes) = if meta.num_classes == 0 && !label_path.exists() {
        (None, None)
    } else {
        let text = read(&label_path)?;
        let mut labels = Vec::with_capacity(n);
        for (line_no, line) in data_lines(&text) {
            let l: i64 = line.parse().map_err(|_| {
                Error::parse(&label_path, line_no, format!("bad label '{line}'"))
            })?;
            if l < -1 || l >= meta.num_classes as i64 {
                return Err(Error::parse(
                    &label_path,
                    line_no,
                    format!("label {l} outside -1..{}", meta.num_classes),
                ));
            }
            labels.push(usize::try_from(l).ok());
        }
        if labels.len() != n {
            return Err(Error::parse(
                &label_path,
                labels.len(),
                format!("expected {n} labels, found {}", labels.len()),
            ));
        }
        if meta.num_classes == 0 {
            (None, None)
        } else {
            (Some(labels), Some(meta.num_classes))
        }
    };

    let mut graph = Graph::new(features, edges, labels, num_classes)?;

    let mask_path = dir.join(MASKS_FILE);
    if mask_path.exists() {
        let masks: BTreeMap<String, Vec<usize>> = serde_json::from_str(&read(&mask_path)?)
            .map_err(|e| Error::parse(&mask_path, e.line(), e.to_string()))?;
        for (name, idx) in masks {
            let mut mask = vec![false; n];
            for i in idx {
                if i >= n {
                    return Err(Error::Structural(format!(
                        "{}: mask '{name}' references node {i} outside 0..{n}",
                        mask_path.display()
                    )));
                }
                mask[i] = true;
            }
            graph.set_mask(&name, mask)?;
        }
    }
    Ok(graph)
}

fn write(path: PathBuf, contents: &str) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `graph` in the canonical directory format, creating `dir` if needed.
pub fn save_canonical(graph: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = Meta {
        num_nodes: graph.num_nodes(),
        num_features: graph.num_features(),
        num_classes: graph.num_classes().unwrap_or(0),
        directed: false,
    };
    write(dir.join(META_FILE), &(serde_json::to_string_pretty(&meta)? + "\n"))?;

    let mut out = String::new();
    for row in graph.features().rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    write(dir.join(FEATURES_FILE), &out)?;

    let mut out = String::new();
    for (u, v) in graph.edges() {
        writeln!(out, "{u},{v}").unwrap();
    }
    write(dir.join(EDGES_FILE), &out)?;

    if let Some(labels) = graph.labels() {
        let mut out = String::new();
        for l in labels {
            match l {
                Some(l) => writeln!(out, "{l}").unwrap(),
                None => out.push_str("-1\n"),
            }
        }
        write(dir.join(LABELS_FILE), &out)?;
    }

    if !graph.masks().is_empty() {
        let masks: BTreeMap<&str, Vec<usize>> = graph
            .masks()
            .iter()
            .map(|(k, m)| (k.as_str(), (0..m.len()).filter(|&i| m[i]).collect()))
            .collect();
        write(dir.join(MASKS_FILE), &(serde_json::to_string(&masks)? + "\n"))?;
    }
    Ok(())
}
