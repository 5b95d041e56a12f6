//! Reader and writer for the TU graph-collection text format.
//!
//! A dataset `NAME` in a directory consists of
//!
//! * `NAME_A.txt`: one edge per line, `i, j` with 1-indexed global node ids
//!   (an optional third column is read as the edge weight),
//! * `NAME_graph_indicator.txt`: the 1-indexed graph id of every node,
//! * optionally `NAME_graph_labels.txt`, `NAME_node_labels.txt`,
//!   `NAME_node_attributes.txt` and `NAME_anomaly_flags.txt` (0/1 per graph).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphDatabase};

fn file_path(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

fn read_required(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_optional(path: &Path) -> Result<Option<String>> {
    if path.is_file() {
        fs::read_to_string(path).map(Some).map_err(|e| Error::io(path, e))
    } else {
        Ok(None)
    }
}

/// Non-empty lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn fields(line: &str) -> impl Iterator<Item = &str> {
    line.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse<T: std::str::FromStr>(path: &Path, line: usize, tok: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::format(path, line, format!("cannot parse `{tok}`")))
}

fn per_node<T>(path: &Path, text: &str, node_total: usize, mut f: impl FnMut(usize, &str) -> Result<T>) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(node_total);
    for (ln, l) in lines(text) {
        if out.len() == node_total {
            return Err(Error::format(path, ln, format!("more rows than the {node_total} nodes")));
        }
        out.push(f(ln, l)?);
    }
    if out.len() != node_total {
        return Err(Error::format(
            path,
            text.lines().count() + 1,
            format!("expected {node_total} rows, found {}", out.len()),
        ));
    }
    Ok(out)
}

/// Loads dataset `name` from `dir`.
///
/// Node ids are remapped to per-graph 0-based ids, directed duplicates and
/// self-loops are dropped, and raw labels/attributes are attached without
/// deriving features. Graph ids are 0-based positions in the file.
pub fn load_tu_dataset(dir: &Path, name: &str) -> Result<GraphDatabase> {
    let a_path = file_path(dir, name, "A");
    let ind_path = file_path(dir, name, "graph_indicator");
    let a_text = read_required(&a_path)?;
    let ind_text = read_required(&ind_path)?;

    let mut indicator = Vec::new();
    for (ln, l) in lines(&ind_text) {
        let gid: usize = parse(&ind_path, ln, l)?;
        if gid == 0 {
            return Err(Error::format(&ind_path, ln, "graph ids are 1-indexed"));
        }
        indicator.push(gid - 1);
    }
    let node_total = indicator.len();
    let graph_count = indicator.iter().max().map_or(0, |m| m + 1);
    let mut local = vec![0usize; node_total];
    let mut sizes = vec![0usize; graph_count];
    for (node, &g) in indicator.iter().enumerate() {
        local[node] = sizes[g];
        sizes[g] += 1;
    }
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::format(&ind_path, 0, format!("graph {} has no nodes", g + 1)));
    }

    let mut edge_lists: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); graph_count];
    for (ln, l) in lines(&a_text) {
        let toks: Vec<&str> = fields(l).collect();
        if toks.len() < 2 || toks.len() > 3 {
            return Err(Error::format(&a_path, ln, "expected `i, j` or `i, j, weight`"));
        }
        let i: usize = parse(&a_path, ln, toks[0])?;
        let j: usize = parse(&a_path, ln, toks[1])?;
        let w: f64 = if toks.len() == 3 { parse(&a_path, ln, toks[2])? } else { 1.0 };
        for id in [i, j] {
            if id == 0 || id > node_total {
                return Err(Error::format(&a_path, ln, format!("node id {id} out of range 1..={node_total}")));
            }
        }
        let (gi, gj) = (indicator[i - 1], indicator[j - 1]);
        if gi != gj {
            return Err(Error::format(&a_path, ln, format!("edge joins graphs {} and {}", gi + 1, gj + 1)));
        }
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::format(&a_path, ln, format!("invalid edge weight {w}")));
        }
        if i != j {
            edge_lists[gi].push((local[i - 1], local[j - 1], w));
        }
    }

    let mut graphs = Vec::with_capacity(graph_count);
    for (g, edges) in edge_lists.iter().enumerate() {
        graphs.push(Graph::new(g, sizes[g], edges)?);
    }

    let gl_path = file_path(dir, name, "graph_labels");
    if let Some(text) = read_optional(&gl_path)? {
        let labels = per_node(&gl_path, &text, graph_count, |ln, l| parse::<i64>(&gl_path, ln, l))?;
        for (g, y) in graphs.iter_mut().zip(labels) {
            g.class_label = Some(y);
        }
    }

    let nl_path = file_path(dir, name, "node_labels");
    if let Some(text) = read_optional(&nl_path)? {
        let labels = per_node(&nl_path, &text, node_total, |ln, l| {
            let first = fields(l).next().unwrap_or(l);
            parse::<i64>(&nl_path, ln, first)
        })?;
        let mut per_graph: Vec<Vec<i64>> = sizes.iter().map(|&s| vec![0; s]).collect();
        for (node, y) in labels.into_iter().enumerate() {
            per_graph[indicator[node]][local[node]] = y;
        }
        for (g, ls) in graphs.iter_mut().zip(per_graph) {
            g.node_labels = Some(ls);
        }
    }

    let na_path = file_path(dir, name, "node_attributes");
    if let Some(text) = read_optional(&na_path)? {
        let rows = per_node(&na_path, &text, node_total, |ln, l| {
            fields(l).map(|t| parse::<f64>(&na_path, ln, t)).collect::<Result<Vec<f64>>>()
        })?;
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::format(&na_path, bad + 1, format!("expected {dim} attributes")));
        }
        let mut per_graph: Vec<Array2<f64>> = sizes.iter().map(|&s| Array2::zeros((s, dim))).collect();
        for (node, row) in rows.into_iter().enumerate() {
            let mut dst = per_graph[indicator[node]].row_mut(local[node]);
            for (d, v) in dst.iter_mut().zip(row) {
                *d = v;
            }
        }
        for (g, attrs) in graphs.iter_mut().zip(per_graph) {
            g.node_attributes = Some(attrs);
        }
    }

    let mut db = GraphDatabase::new(graphs);

    let fl_path = file_path(dir, name, "anomaly_flags");
    if let Some(text) = read_optional(&fl_path)? {
        let flags = per_node(&fl_path, &text, graph_count, |ln, l| match l {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(Error::format(&fl_path, ln, format!("flag must be 0 or 1, got `{other}`"))),
        })?;
        db.anomaly_flags = Some(flags);
    }
    Ok(db)
}

/// Writes `db` as dataset `name` in `dir` (created if needed). Edges are
/// listed in both directions, as in the public TU collections.
pub fn write_tu_dataset(db: &GraphDatabase, dir: &Path, name: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let weighted = db.graphs.iter().flat_map(|g| g.edges()).any(|&(_, _, w)| w != 1.0);

    let mut a = String::new();
    let mut ind = String::new();
    let mut offset = 0usize;
    for (gi, g) in db.graphs.iter().enumerate() {
        for _ in 0..g.node_count() {
            ind.push_str(&format!("{}\n", gi + 1));
        }
        for &(u, v, w) in g.edges() {
            let (i, j) = (u + offset + 1, v + offset + 1);
            if weighted {
                a.push_str(&format!("{i}, {j}, {w}\n{j}, {i}, {w}\n"));
            } else {
                a.push_str(&format!("{i}, {j}\n{j}, {i}\n"));
            }
        }
        offset += g.node_count();
    }
    write(&file_path(dir, name, "A"), &a)?;
    write(&file_path(dir, name, "graph_indicator"), &ind)?;

    if db.graphs.iter().all(|g| g.class_label.is_some()) && !db.is_empty() {
        let text: String = db
            .graphs
            .iter()
            .map(|g| format!("{}\n", g.class_label.unwrap_or_default()))
            .collect();
        write(&file_path(dir, name, "graph_labels"), &text)?;
    }
    if db.graphs.iter().all(|g| g.node_labels.is_some()) && !db.is_empty() {
        let text: String = db
            .graphs
            .iter()
            .flat_map(|g| g.node_labels.as_deref().unwrap_or_default())
            .map(|y| format!("{y}\n"))
            .collect();
        write(&file_path(dir, name, "node_labels"), &text)?;
    }
    if db.graphs.iter().all(|g| g.node_attributes.is_some()) && !db.is_empty() {
        let mut text = String::new();
        for attrs in db.graphs.iter().filter_map(|g| g.node_attributes.as_ref()) {
            for row in attrs.rows() {
                let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                text.push_str(&cells.join(", "));
                text.push('\n');
            }
        }
        write(&file_path(dir, name, "node_attributes"), &text)?;
    }
    if let Some(flags) = &db.anomaly_flags {
        let text: String = flags.iter().map(|&f| if f { "1\n" } else { "0\n" }).collect();
        write(&file_path(dir, name, "anomaly_flags"), &text)?;
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
