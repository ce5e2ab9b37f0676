//! File formats.
//!
//! Kernels, weight matrices and hyperkernels are TOML documents (JSON when
//! the file name ends in `.json`). Graphs and hypermatrices use a plain
//! line format:
//!
//! ```text
//! # graph: header "n m [multi]", then m lines "u v"
//! 4 2
//! 0 1
//! 2 3
//! # hypermatrix: header "n R", then lines "r i_1 .. i_r value"
//! 5 3
//! 3 0 2 4 1.5
//! ```
//!
//! Blank lines and lines starting with `#` are skipped.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphgen::SparseGraph;
use crate::hypergraph::{HyperEntries, HyperStepKernel, SparseHypermatrix};
use crate::kernel::{Entries, StepKernel, WeightMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocFormat {
    Toml,
    Json,
}

impl DocFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => DocFormat::Json,
            _ => DocFormat::Toml,
        }
    }
}

/// Document form of a [`StepKernel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelDoc {
    pub masses: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl KernelDoc {
    pub fn into_kernel(self) -> Result<StepKernel> {
        StepKernel::new(self.masses, self.values)
    }
}

/// `entries` is either `n` rows of `n` values or a list of `[i, j, a]`
/// triples. An `n x n` list is read as dense unless `layout = "triples"`.
#[derive(Serialize, Deserialize)]
struct MatrixDoc {
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layout: Option<Layout>,
    entries: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum Layout {
    Dense,
    Triples,
}

/// Document form of a [`HyperStepKernel`]; arities not listed are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperKernelDoc {
    pub masses: Vec<f64>,
    pub arity: Vec<ArityDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArityDoc {
    pub r: usize,
    /// Row-major `m^r` values.
    pub values: Vec<f64>,
}

fn decode<T: for<'de> Deserialize<'de>>(text: &str, format: DocFormat) -> Result<T> {
    match format {
        DocFormat::Toml => toml::from_str(text).map_err(|e| Error::Parse(e.to_string())),
        DocFormat::Json => serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string())),
    }
}

fn encode<T: Serialize>(doc: &T, format: DocFormat) -> Result<String> {
    match format {
        DocFormat::Toml => toml::to_string(doc).map_err(|e| Error::Parse(e.to_string())),
        DocFormat::Json => serde_json::to_string_pretty(doc).map_err(|e| Error::Parse(e.to_string())),
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

/// Attaches the file name to parse errors.
fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_kernel(text: &str, format: DocFormat) -> Result<StepKernel> {
    decode::<KernelDoc>(text, format)?.into_kernel()
}

pub fn kernel_to_string(k: &StepKernel, format: DocFormat) -> Result<String> {
    encode(&KernelDoc { masses: k.masses().to_vec(), values: k.rows() }, format)
}

pub fn read_kernel(path: &Path) -> Result<StepKernel> {
    in_file(path, parse_kernel(&read_text(path)?, DocFormat::from_path(path)))
}

pub fn write_kernel(path: &Path, k: &StepKernel) -> Result<()> {
    write_text(path, &kernel_to_string(k, DocFormat::from_path(path))?)
}

pub fn parse_matrix(text: &str, format: DocFormat) -> Result<WeightMatrix> {
    let doc: MatrixDoc = decode(text, format)?;
    let square = doc.entries.len() == doc.n && doc.entries.iter().all(|r| r.len() == doc.n);
    let layout = doc.layout.unwrap_or(if square { Layout::Dense } else { Layout::Triples });
    match layout {
        Layout::Dense => {
            if doc.entries.len() != doc.n {
                return Err(Error::DimensionMismatch { expected: doc.n, actual: doc.entries.len() });
            }
            WeightMatrix::dense(doc.entries)
        }
        Layout::Triples => {
            let mut triples = Vec::with_capacity(doc.entries.len());
            for row in &doc.entries {
                let index = |x: f64| {
                    if x >= 0.0 && x.fract() == 0.0 {
                        Ok(x as usize)
                    } else {
                        Err(Error::Parse(format!("bad vertex index {x} in triple {row:?}")))
                    }
                };
                match row.as_slice() {
                    &[i, j, a] => triples.push((index(i)?, index(j)?, a)),
                    _ => return Err(Error::Parse(format!("expected a triple [i, j, a], got {row:?}"))),
                }
            }
            WeightMatrix::from_triples(doc.n, triples)
        }
    }
}

/// Dense matrices are written densely, everything else as triples.
pub fn matrix_to_string(a: &WeightMatrix, format: DocFormat) -> Result<String> {
    let triple = |i: usize, j: usize, v: f64| vec![i as f64, j as f64, v];
    let (layout, entries) = match a.entries() {
        Entries::Dense(_) => (Layout::Dense, a.to_dense_rows()),
        Entries::Sparse(map) => (Layout::Triples, map.iter().map(|(&(i, j), &v)| triple(i, j, v)).collect()),
        Entries::Typed { .. } => {
            let n = a.n();
            let mut t = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    let v = a.get(i, j);
                    if v != 0.0 {
                        t.push(triple(i, j, v));
                    }
                }
            }
            (Layout::Triples, t)
        }
    };
    encode(&MatrixDoc { n: a.n(), layout: Some(layout), entries }, format)
}

pub fn read_matrix(path: &Path) -> Result<WeightMatrix> {
    in_file(path, parse_matrix(&read_text(path)?, DocFormat::from_path(path)))
}

pub fn write_matrix(path: &Path, a: &WeightMatrix) -> Result<()> {
    write_text(path, &matrix_to_string(a, DocFormat::from_path(path))?)
}

pub fn parse_hyperkernel(text: &str, format: DocFormat) -> Result<HyperStepKernel> {
    decode::<HyperKernelDoc>(text, format)?.into_kernel()
}

impl HyperKernelDoc {
    pub fn into_kernel(self) -> Result<HyperStepKernel> {
        let top = self.arity.iter().map(|a| a.r).max().unwrap_or(2);
        let m = self.masses.len();
        let mut arrays: Vec<Option<Vec<f64>>> = vec![None; top.saturating_sub(1)];
        for a in self.arity {
            if a.r < 2 {
                return Err(Error::Parse(format!("arity {} < 2", a.r)));
            }
            if arrays[a.r - 2].replace(a.values).is_some() {
                return Err(Error::Parse(format!("arity {} given twice", a.r)));
            }
        }
        let arrays = arrays
            .into_iter()
            .enumerate()
            .map(|(slot, a)| match a {
                Some(a) => Ok(a),
                None => Ok(vec![0.0; crate::hypergraph::array_len(m, slot + 2)?]),
            })
            .collect::<Result<_>>()?;
        HyperStepKernel::new(self.masses, arrays)
    }
}

pub fn read_hyperkernel(path: &Path) -> Result<HyperStepKernel> {
    in_file(path, parse_hyperkernel(&read_text(path)?, DocFormat::from_path(path)))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::Parse(format!("line {line}: missing {what}")))?;
    tok.parse().map_err(|_| Error::Parse(format!("line {line}: bad {what} '{tok}'")))
}

pub fn parse_graph(text: &str) -> Result<SparseGraph> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| Error::Parse("empty graph file".into()))?;
    let mut tok = header.split_whitespace();
    let n: usize = field(tok.next(), hl, "vertex count")?;
    let m: usize = field(tok.next(), hl, "edge count")?;
    let multi = match tok.next() {
        None => false,
        Some("multi") => true,
        Some(other) => return Err(Error::Parse(format!("line {hl}: unexpected '{other}' in header"))),
    };
    let mut edges = Vec::with_capacity(m);
    for (ln, l) in lines {
        let mut tok = l.split_whitespace();
        let u: usize = field(tok.next(), ln, "vertex")?;
        let v: usize = field(tok.next(), ln, "vertex")?;
        if tok.next().is_some() {
            return Err(Error::Parse(format!("line {ln}: trailing data")));
        }
        edges.push((u, v));
    }
    if edges.len() != m {
        return Err(Error::Parse(format!("header says {m} edges, found {}", edges.len())));
    }
    SparseGraph::new(n, edges, multi)
}

pub fn graph_to_string(g: &SparseGraph) -> String {
    let mut s = String::with_capacity(16 * (g.num_edges() + 1));
    let _ = writeln!(s, "{} {}{}", g.n(), g.num_edges(), if g.is_multigraph() { " multi" } else { "" });
    for &(u, v) in g.edges() {
        let _ = writeln!(s, "{u} {v}");
    }
    s
}

pub fn read_graph(path: &Path) -> Result<SparseGraph> {
    in_file(path, parse_graph(&read_text(path)?))
}

pub fn write_graph(path: &Path, g: &SparseGraph) -> Result<()> {
    write_text(path, &graph_to_string(g))
}

pub fn parse_hypermatrix(text: &str) -> Result<SparseHypermatrix> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| Error::Parse("empty hypermatrix file".into()))?;
    let mut tok = header.split_whitespace();
    let n: usize = field(tok.next(), hl, "vertex count")?;
    let max_r: usize = field(tok.next(), hl, "max arity")?;
    let mut entries = Vec::new();
    for (ln, l) in lines {
        let mut tok = l.split_whitespace();
        let r: usize = field(tok.next(), ln, "arity")?;
        let t = (0..r).map(|_| field(tok.next(), ln, "index")).collect::<Result<Vec<usize>>>()?;
        if t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parse(format!("line {ln}: indices must be sorted and distinct")));
        }
        let h: f64 = field(tok.next(), ln, "value")?;
        if tok.next().is_some() {
            return Err(Error::Parse(format!("line {ln}: trailing data")));
        }
        entries.push((t, h));
    }
    SparseHypermatrix::from_entries(n, max_r, entries)
}

/// Typed hypermatrices cannot be listed tuple by tuple and are rejected.
pub fn hypermatrix_to_string(h: &SparseHypermatrix) -> Result<String> {
    let HyperEntries::Sparse(map) = h.entries() else {
        return Err(Error::InvalidArgument("only explicitly stored hypermatrices can be written".into()));
    };
    let mut s = format!("{} {}\n", h.n(), h.max_arity());
    for (t, v) in map {
        let _ = write!(s, "{}", t.len());
        for i in t {
            let _ = write!(s, " {i}");
        }
        let _ = writeln!(s, " {v}");
    }
    Ok(s)
}

pub fn read_hypermatrix(path: &Path) -> Result<SparseHypermatrix> {
    in_file(path, parse_hypermatrix(&read_text(path)?))
}

pub fn write_hypermatrix(path: &Path, h: &SparseHypermatrix) -> Result<()> {
    write_text(path, &hypermatrix_to_string(h)?)
}
