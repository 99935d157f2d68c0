//! Quasi-cyclic LDPC graphs.
//!
//! An [`ExponentMatrix`] is an `m x n` array of cells, each holding a set of
//! circulant shifts. Lifting replaces every shift `s` by the `L x L`
//! circulant permutation matrix `P_s` (`P_s[i][j] = 1` iff `j = i + s mod L`);
//! a cell with several shifts is a multi-edge (MET) block `P_a + P_b + ...`.
//! The lifted Tanner graph has `m*L` check nodes and `n*L` variable nodes.
//!
//! Images live on the variable nodes. [`project_to_image_graph`] turns the
//! bipartite Tanner graph into a simple graph on variable nodes, joining two
//! nodes when they share a check.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Block shifts of a quasi-cyclic parity-check matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExponentMatrix {
    rows: usize,
    cols: usize,
    lift: usize,
    /// Row-major cells, each sorted ascending. Empty cell = zero block.
    cells: Vec<Vec<usize>>,
}

impl ExponentMatrix {
    /// Build from row-major cells. Shifts within a cell are sorted; order of
    /// the input does not matter.
    pub fn new(rows: usize, cols: usize, lift: usize, cells: Vec<Vec<usize>>) -> Result<Self> {
        if rows == 0 || cols == 0 || lift == 0 {
            return Err(Error::Domain(format!(
                "exponent matrix needs m, n, L >= 1 (got {rows}x{cols}, L={lift})"
            )));
        }
        if cells.len() != rows * cols {
            return Err(Error::Size(format!(
                "expected {} cells for a {rows}x{cols} matrix, got {}",
                rows * cols,
                cells.len()
            )));
        }
        let mut sorted = Vec::with_capacity(cells.len());
        for (idx, mut cell) in cells.into_iter().enumerate() {
            cell.sort_unstable();
            if let Some(&s) = cell.iter().find(|&&s| s >= lift) {
                return Err(Error::Domain(format!(
                    "shift {s} at cell ({}, {}) not below L = {lift}",
                    idx / cols,
                    idx % cols
                )));
            }
            if cell.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Domain(format!(
                    "duplicate shift in cell ({}, {})",
                    idx / cols,
                    idx % cols
                )));
            }
            sorted.push(cell);
        }
        Ok(ExponentMatrix {
            rows,
            cols,
            lift,
            cells: sorted,
        })
    }

    /// Single-edge matrix from a grid of shifts; `None` marks a zero block.
    pub fn from_grid(lift: usize, grid: &[Vec<Option<usize>>]) -> Result<Self> {
        let rows = grid.len();
        let cols = grid.first().map_or(0, Vec::len);
        if grid.iter().any(|r| r.len() != cols) {
            return Err(Error::Size("ragged shift grid".into()));
        }
        let cells = grid
            .iter()
            .flatten()
            .map(|c| c.iter().copied().collect())
            .collect();
        Self::new(rows, cols, lift, cells)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn lift(&self) -> usize {
        self.lift
    }

    pub fn cell(&self, row: usize, col: usize) -> &[usize] {
        &self.cells[row * self.cols + col]
    }

    pub fn total_shifts(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }

    pub fn var_count(&self) -> usize {
        self.cols * self.lift
    }

    pub fn check_count(&self) -> usize {
        self.rows * self.lift
    }

    pub fn protograph(&self) -> ProtographMatrix {
        ProtographMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.cells.iter().map(Vec::len).collect(),
        }
    }

    /// Protograph edges as `(row, col, shift)`, row-major.
    pub fn protograph_edges(&self) -> Vec<ProtoEdge> {
        let mut out = Vec::with_capacity(self.total_shifts());
        for row in 0..self.rows {
            for col in 0..self.cols {
                for &shift in self.cell(row, col) {
                    out.push(ProtoEdge { row, col, shift });
                }
            }
        }
        out
    }

    /// Serialize to the text format: `m n L` header, then one line per row
    /// with `-` for zero blocks and comma-joined shifts otherwise.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.rows, self.cols, self.lift);
        for row in 0..self.rows {
            let line: Vec<String> = (0..self.cols)
                .map(|col| {
                    let cell = self.cell(row, col);
                    if cell.is_empty() {
                        "-".to_string()
                    } else {
                        cell.iter()
                            .map(usize::to_string)
                            .collect::<Vec<_>>()
                            .join(",")
                    }
                })
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parse the text format. Blank lines are skipped; errors carry 1-based
    /// line numbers.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());

        let (hline, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "empty exponent matrix file"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::parse(hline, format!("bad header token `{t}`")))
            })
            .collect::<Result<_>>()?;
        let [rows, cols, lift] = dims[..] else {
            return Err(Error::parse(hline, "header must be `m n L`"));
        };

        let mut cells = Vec::with_capacity(rows * cols);
        for expected_row in 0..rows {
            let (lno, line) = lines.next().ok_or_else(|| {
                Error::parse(
                    hline + expected_row + 1,
                    format!("missing row {} of {rows}", expected_row + 1),
                )
            })?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != cols {
                return Err(Error::parse(
                    lno,
                    format!("expected {cols} cells, found {}", toks.len()),
                ));
            }
            for tok in toks {
                cells.push(parse_cell(tok, lift).map_err(|m| Error::parse(lno, m))?);
            }
        }
        if let Some((lno, _)) = lines.next() {
            return Err(Error::parse(lno, "trailing content after matrix rows"));
        }
        Self::new(rows, cols, lift, cells).map_err(|e| match e {
            Error::Domain(m) | Error::Size(m) => Error::parse(hline, m),
            other => other,
        })
    }
}

fn parse_cell(tok: &str, lift: usize) -> std::result::Result<Vec<usize>, String> {
    if tok == "-" {
        return Ok(Vec::new());
    }
    let mut cell = Vec::new();
    for part in tok.split(',') {
        let s: usize = part
            .parse()
            .map_err(|_| format!("bad shift `{part}` in cell `{tok}`"))?;
        if s >= lift {
            return Err(format!("shift {s} not below L = {lift}"));
        }
        if cell.contains(&s) {
            return Err(format!("duplicate shift {s} in cell `{tok}`"));
        }
        cell.push(s);
    }
    Ok(cell)
}

impl fmt::Display for ExponentMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl FromStr for ExponentMatrix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// Edge multiplicity per block: `entries[i*n + j] = |cell(i, j)|`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ProtographMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<usize>,
}

impl ProtographMatrix {
    pub fn get(&self, row: usize, col: usize) -> usize {
        self.entries[row * self.cols + col]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ProtoEdge {
    pub row: usize,
    pub col: usize,
    pub shift: usize,
}

/// `L x L` circulant permutation matrix with ones at `(i, i + shift mod L)`.
pub fn expand_cpm(shift: usize, lift: usize) -> Result<DMatrix<u8>> {
    if lift == 0 || shift >= lift {
        return Err(Error::Domain(format!(
            "CPM shift {shift} must satisfy 0 <= shift < L = {lift}"
        )));
    }
    Ok(DMatrix::from_fn(lift, lift, |i, j| {
        u8::from(j == (i + shift) % lift)
    }))
}

/// Expanded Tanner graph. Check nodes are indexed `row*L + r`, variable
/// nodes `col*L + c`.
#[derive(Clone, Debug, Serialize)]
pub struct LiftedGraph {
    pub var_count: usize,
    pub check_count: usize,
    /// `(check, var)` pairs.
    pub edges: Vec<(usize, usize)>,
    /// Block origin of each edge, parallel to `edges`.
    pub provenance: Vec<ProtoEdge>,
}

impl LiftedGraph {
    /// Variable neighbours of each check node.
    pub fn check_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.check_count];
        for &(c, v) in &self.edges {
            adj[c].push(v);
        }
        adj
    }

    /// Adjacency over all nodes: variables first (`0..var_count`), then
    /// checks offset by `var_count`.
    fn full_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.var_count + self.check_count];
        for &(c, v) in &self.edges {
            let c = self.var_count + c;
            adj[v].push(c);
            adj[c].push(v);
        }
        adj
    }
}

/// Replace every shift by its CPM. Check `(i, r)` meets variable
/// `(j, r + s mod L)` for each shift `s` in cell `(i, j)`.
pub fn lift(matrix: &ExponentMatrix) -> LiftedGraph {
    let l = matrix.lift;
    let mut edges = Vec::with_capacity(l * matrix.total_shifts());
    let mut provenance = Vec::with_capacity(edges.capacity());
    for pe in matrix.protograph_edges() {
        for r in 0..l {
            edges.push((pe.row * l + r, pe.col * l + (r + pe.shift) % l));
            provenance.push(pe);
        }
    }
    LiftedGraph {
        var_count: matrix.var_count(),
        check_count: matrix.check_count(),
        edges,
        provenance,
    }
}

/// Whether the shift sequence `a_1 .. a_2l` read along a closed protograph
/// walk closes in the lift, i.e. `sum (-1)^i a_i == 0 mod L`.
pub fn block_cycle_exists(shifts: &[usize], lift: usize) -> Result<bool> {
    if !shifts.len().is_multiple_of(2) {
        return Err(Error::Domain(format!(
            "block cycle needs an even number of shifts, got {}",
            shifts.len()
        )));
    }
    if shifts.len() < 4 {
        return Err(Error::Domain(format!(
            "block cycle needs at least 4 shifts, got {}",
            shifts.len()
        )));
    }
    if lift == 0 || shifts.iter().any(|&s| s >= lift) {
        return Err(Error::Domain(format!("shifts must lie in 0..{lift}")));
    }
    let l = lift as i64;
    let sum = shifts.iter().enumerate().fold(0i64, |acc, (i, &s)| {
        // i is 0-based, so (-1)^(i+1)
        if i % 2 == 0 {
            acc - s as i64
        } else {
            acc + s as i64
        }
    });
    Ok(sum.rem_euclid(l) == 0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Girth {
    Cycle(usize),
    Acyclic,
}

impl Girth {
    pub fn length(self) -> Option<usize> {
        match self {
            Girth::Cycle(g) => Some(g),
            Girth::Acyclic => None,
        }
    }
}

impl fmt::Display for Girth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Girth::Cycle(g) => write!(f, "{g}"),
            Girth::Acyclic => f.write_str("acyclic"),
        }
    }
}

/// Girth of the lifted Tanner graph. Computed by the block-cycle search and
/// by BFS on the lift; disagreement is reported as a consistency error.
pub fn girth(matrix: &ExponentMatrix) -> Result<Girth> {
    let by_walks = girth_by_block_cycles(matrix);
    let by_bfs = girth_by_bfs(&lift(matrix));
    if by_walks != by_bfs {
        return Err(Error::Consistency(format!(
            "girth by block cycles = {by_walks}, by BFS = {by_bfs}"
        )));
    }
    Ok(by_walks)
}

/// Walk-length cap for the block-cycle search.
pub fn walk_length_cap(matrix: &ExponentMatrix) -> usize {
    2 * matrix.rows * matrix.cols * matrix.lift
}

/// Shortest closed non-backtracking protograph walk whose shift sequence
/// satisfies [`block_cycle_exists`]. Walk lengths are searched in increasing
/// order up to [`walk_length_cap`].
pub fn girth_by_block_cycles(matrix: &ExponentMatrix) -> Girth {
    let cap = walk_length_cap(matrix);
    let search = BlockCycleSearch::new(matrix);
    if search.cyclomatic_number() == 0 {
        return Girth::Acyclic;
    }
    let mut len = 4;
    while len <= cap {
        if search.closes_at(len) {
            return Girth::Cycle(len);
        }
        len += 2;
    }
    Girth::Acyclic
}

/// True when the lift has a cycle of length at most `max_len`.
pub fn has_cycle_within(matrix: &ExponentMatrix, max_len: usize) -> bool {
    let search = BlockCycleSearch::new(matrix);
    (4..=max_len).step_by(2).any(|len| search.closes_at(len))
}

struct BlockCycleSearch<'a> {
    matrix: &'a ExponentMatrix,
    edges: Vec<ProtoEdge>,
    /// Edge ids incident to each check block and each variable block.
    at_check: Vec<Vec<usize>>,
    at_var: Vec<Vec<usize>>,
    /// Protograph hop distance from every node to every check block; nodes
    /// are checks `0..m` then variables `m..m+n`.
    dist_to_check: Vec<Vec<usize>>,
}

impl<'a> BlockCycleSearch<'a> {
    fn new(matrix: &'a ExponentMatrix) -> Self {
        let edges = matrix.protograph_edges();
        let (m, n) = (matrix.rows, matrix.cols);
        let mut at_check = vec![Vec::new(); m];
        let mut at_var = vec![Vec::new(); n];
        for (id, e) in edges.iter().enumerate() {
            at_check[e.row].push(id);
            at_var[e.col].push(id);
        }
        let mut dist_to_check = Vec::with_capacity(m);
        for start in 0..m {
            let mut dist = vec![usize::MAX; m + n];
            dist[start] = 0;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                let next: Vec<usize> = if u < m {
                    at_check[u].iter().map(|&e| m + edges[e].col).collect()
                } else {
                    at_var[u - m].iter().map(|&e| edges[e].row).collect()
                };
                for w in next {
                    if dist[w] == usize::MAX {
                        dist[w] = dist[u] + 1;
                        queue.push_back(w);
                    }
                }
            }
            dist_to_check.push(dist);
        }
        BlockCycleSearch {
            matrix,
            edges,
            at_check,
            at_var,
            dist_to_check,
        }
    }

    /// `E - V + C` over the protograph (multi-edges counted).
    fn cyclomatic_number(&self) -> usize {
        let m = self.matrix.rows;
        let n = self.matrix.cols;
        let mut parent: Vec<usize> = (0..m + n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut extra = 0;
        for e in &self.edges {
            let a = find(&mut parent, e.row);
            let b = find(&mut parent, m + e.col);
            if a == b {
                extra += 1;
            } else {
                parent[a] = b;
            }
        }
        extra
    }

    fn closes_at(&self, len: usize) -> bool {
        let mut walk = Vec::with_capacity(len);
        (0..self.matrix.rows).any(|start| self.extend(start, start, len, &mut walk))
    }

    /// Depth-first extension of a walk that started at check block `start`
    /// and currently sits at protograph node `at`.
    fn extend(&self, start: usize, at: usize, len: usize, walk: &mut Vec<usize>) -> bool {
        let m = self.matrix.rows;
        if walk.len() == len {
            if at != start {
                return false;
            }
            let shifts: Vec<usize> = walk.iter().map(|&e| self.edges[e].shift).collect();
            return block_cycle_exists(&shifts, self.matrix.lift).unwrap_or(false);
        }
        let remaining = len - walk.len();
        if self.dist_to_check[start][at] > remaining {
            return false;
        }
        let options = if at < m {
            &self.at_check[at]
        } else {
            &self.at_var[at - m]
        };
        for &e in options {
            if walk.last() == Some(&e) {
                continue;
            }
            let next = if at < m {
                m + self.edges[e].col
            } else {
                self.edges[e].row
            };
            walk.push(e);
            if self.extend(start, next, len, walk) {
                return true;
            }
            walk.pop();
        }
        false
    }
}

/// Shortest cycle of the lifted graph by breadth-first search from every
/// node.
pub fn girth_by_bfs(graph: &LiftedGraph) -> Girth {
    let adj = graph.full_adjacency();
    let total = adj.len();
    let mut best = usize::MAX;
    let mut dist = vec![usize::MAX; total];
    let mut parent = vec![usize::MAX; total];
    for source in 0..total {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[source] = 0;
        parent[source] = usize::MAX;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            if 2 * dist[u] + 1 >= best {
                break;
            }
            for &w in &adj[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    parent[w] = u;
                    queue.push_back(w);
                } else if parent[u] != w {
                    best = best.min(dist[u] + dist[w] + 1);
                }
            }
        }
    }
    if best == usize::MAX {
        Girth::Acyclic
    } else {
        Girth::Cycle(best)
    }
}

/// Single-cell MET matrix `[I_a1 + ... + I_ak]`.
pub fn spherical(shifts: &[usize], lift: usize) -> Result<ExponentMatrix> {
    let distinct: BTreeSet<_> = shifts.iter().collect();
    if distinct.len() != shifts.len() {
        return Err(Error::Domain("spherical shifts must be distinct".into()));
    }
    ExponentMatrix::new(1, 1, lift, vec![shifts.to_vec()])
}

/// Fully populated single-edge matrix, one shift per block.
pub fn toroidal(shifts: &[Vec<usize>], lift: usize) -> Result<ExponentMatrix> {
    let grid: Vec<Vec<Option<usize>>> = shifts
        .iter()
        .map(|r| r.iter().copied().map(Some).collect())
        .collect();
    ExponentMatrix::from_grid(lift, &grid)
}

/// Seeded random toroidal matrix whose lift has girth at least `min_girth`.
/// Draws are repeated up to `max_tries` times.
pub fn random_toroidal(
    rows: usize,
    cols: usize,
    lift: usize,
    min_girth: usize,
    seed: u64,
    max_tries: usize,
) -> Result<ExponentMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..max_tries {
        let shifts: Vec<Vec<usize>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.random_range(0..lift)).collect())
            .collect();
        let matrix = toroidal(&shifts, lift)?;
        if min_girth <= 4 || !has_cycle_within(&matrix, min_girth - 2) {
            return Ok(matrix);
        }
    }
    Err(Error::Degenerate(format!(
        "no {rows}x{cols} matrix with girth >= {min_girth} at L = {lift} in {max_tries} draws"
    )))
}

/// Simple undirected graph over image nodes `0..node_count`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ImageGraph {
    node_count: usize,
    /// Sorted `(u, v)` pairs with `u < v`.
    edges: Vec<(usize, usize)>,
    #[serde(skip)]
    neighbors: Vec<Vec<(usize, usize)>>,
}

impl ImageGraph {
    /// Build from arbitrary pairs; loops are dropped and duplicates merged.
    pub fn from_edges(node_count: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (u, v) in pairs {
            if u >= node_count || v >= node_count {
                return Err(Error::Size(format!(
                    "edge ({u}, {v}) outside {node_count} nodes"
                )));
            }
            if u != v {
                set.insert((u.min(v), u.max(v)));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); node_count];
        for (id, &(u, v)) in edges.iter().enumerate() {
            neighbors[u].push((v, id));
            neighbors[v].push((u, id));
        }
        Ok(ImageGraph {
            node_count,
            edges,
            neighbors,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// `(neighbor, edge id)` pairs of `node`.
    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.neighbors[node]
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    /// Histogram `degree -> node count`, ascending by degree.
    pub fn degree_histogram(&self) -> Vec<(usize, usize)> {
        let mut hist = std::collections::BTreeMap::new();
        for d in self.degrees() {
            *hist.entry(d).or_insert(0) += 1;
        }
        hist.into_iter().collect()
    }

    /// Component id for each node; isolated nodes are their own component.
    pub fn components(&self) -> (usize, Vec<usize>) {
        let mut comp = vec![usize::MAX; self.node_count];
        let mut count = 0;
        for s in 0..self.node_count {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = count;
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                for &(w, _) in &self.neighbors[u] {
                    if comp[w] == usize::MAX {
                        comp[w] = count;
                        stack.push(w);
                    }
                }
            }
            count += 1;
        }
        (count, comp)
    }
}

/// One-mode projection of the Tanner graph onto its first `n` variable
/// nodes: `u ~ v` iff both are below `n` and share a check.
pub fn project_to_image_graph(graph: &LiftedGraph, n: usize) -> Result<ImageGraph> {
    if n > graph.var_count {
        return Err(Error::Size(format!(
            "{n} images do not fit on {} variable nodes",
            graph.var_count
        )));
    }
    let mut pairs = Vec::new();
    for vars in graph.check_neighbors() {
        let kept: Vec<usize> = vars.into_iter().filter(|&v| v < n).collect();
        for (a, &u) in kept.iter().enumerate() {
            for &v in &kept[a + 1..] {
                pairs.push((u, v));
            }
        }
    }
    ImageGraph::from_edges(n, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(m: &DMatrix<u8>) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] == 1 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// The multi-edge example matrix with MET cells at (0,0), (1,0), (1,4).
    pub(crate) fn h2(lift: usize) -> ExponentMatrix {
        let cells = vec![
            vec![1, 2, 7], vec![9], vec![23], vec![], vec![],
            vec![12, 37], vec![19], vec![], vec![32], vec![11, 12],
            vec![], vec![], vec![33], vec![], vec![],
        ];
        ExponentMatrix::new(3, 5, lift, cells).unwrap()
    }

    #[test]
    fn cpm_examples() {
        assert_eq!(expand_cpm(0, 3).unwrap(), DMatrix::<u8>::identity(3, 3));
        assert_eq!(ones(&expand_cpm(1, 3).unwrap()), vec![(0, 1), (1, 2), (2, 0)]);
        assert_eq!(ones(&expand_cpm(2, 3).unwrap()), vec![(0, 2), (1, 0), (2, 1)]);
        assert!(matches!(expand_cpm(3, 3), Err(Error::Domain(_))));
        assert!(matches!(expand_cpm(0, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn cpm_is_a_permutation() {
        for l in 1..9 {
            for s in 0..l {
                let p = expand_cpm(s, l).unwrap();
                let ones = p.iter().filter(|&&x| x == 1).count();
                assert_eq!(ones, l);
                for i in 0..l {
                    assert_eq!(p.row(i).iter().map(|&x| x as usize).sum::<usize>(), 1);
                    assert_eq!(p.column(i).iter().map(|&x| x as usize).sum::<usize>(), 1);
                }
            }
        }
    }

    #[test]
    fn lift_single_cell_is_perfect_matching() {
        let e = ExponentMatrix::new(1, 1, 4, vec![vec![0]]).unwrap();
        let g = lift(&e);
        assert_eq!((g.check_count, g.var_count, g.edges.len()), (4, 4, 4));
        assert_eq!(g.edges, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn lift_h2_edge_count() {
        let e = h2(40);
        assert_eq!(e.total_shifts(), 12);
        assert_eq!(lift(&e).edges.len(), 40 * 12);
        assert_eq!(e.protograph().get(0, 0), 3);
        assert_eq!(e.protograph().get(1, 4), 2);
        assert_eq!(e.protograph().get(2, 0), 0);
    }

    #[test]
    fn lift_all_zero_l1_is_k22() {
        let e = ExponentMatrix::new(2, 2, 1, vec![vec![0]; 4]).unwrap();
        let mut edges = lift(&e).edges;
        edges.sort();
        assert_eq!(edges, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    }

    #[test]
    fn lift_has_no_duplicate_pairs_in_met_cells() {
        let g = lift(&h2(38));
        let set: BTreeSet<_> = g.edges.iter().collect();
        assert_eq!(set.len(), g.edges.len());
    }

    #[test]
    fn block_cycle_examples() {
        assert!(block_cycle_exists(&[1, 3, 2, 0], 5).unwrap());
        assert!(block_cycle_exists(&[0, 0, 0, 0], 11).unwrap());
        assert!(!block_cycle_exists(&[1, 2, 0, 0], 7).unwrap());
        assert!(matches!(block_cycle_exists(&[1, 2, 3], 7), Err(Error::Domain(_))));
        assert!(matches!(block_cycle_exists(&[1, 2], 7), Err(Error::Domain(_))));
    }

    #[test]
    fn girth_examples() {
        let k22 = ExponentMatrix::new(2, 2, 1, vec![vec![0]; 4]).unwrap();
        assert_eq!(girth(&k22).unwrap(), Girth::Cycle(4));
        let double = ExponentMatrix::new(1, 1, 2, vec![vec![0, 1]]).unwrap();
        assert_eq!(girth(&double).unwrap(), Girth::Cycle(4));
        let tree = ExponentMatrix::from_grid(5, &[vec![Some(0), Some(3), None]]).unwrap();
        assert_eq!(girth(&tree).unwrap(), Girth::Acyclic);
    }

    #[test]
    fn double_edge_girth_depends_on_shift_difference() {
        // Parallel shifts {0, 1} at L = 5 close only after 5 round trips.
        let e = ExponentMatrix::new(1, 1, 5, vec![vec![0, 1]]).unwrap();
        assert_eq!(girth(&e).unwrap(), Girth::Cycle(10));
    }

    #[test]
    fn spherical_examples() {
        let tri = spherical(&[1, 2], 3).unwrap();
        let g = project_to_image_graph(&lift(&tri), 3).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2)]);

        let matching = spherical(&[0], 5).unwrap();
        assert_eq!(project_to_image_graph(&lift(&matching), 5).unwrap().edge_count(), 0);

        let three = spherical(&[1, 2, 3], 7).unwrap();
        assert_eq!(three.cell(0, 0), &[1, 2, 3]);
        assert_eq!(lift(&three).edges.len(), 21);

        assert!(matches!(spherical(&[1, 1], 3), Err(Error::Domain(_))));
    }

    #[test]
    fn projection_examples() {
        let iso = ExponentMatrix::new(1, 1, 4, vec![vec![0]]).unwrap();
        let g = project_to_image_graph(&lift(&iso), 4).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (4, 0));

        let pair = ExponentMatrix::new(1, 2, 2, vec![vec![0], vec![0]]).unwrap();
        let g = project_to_image_graph(&lift(&pair), 4).unwrap();
        assert_eq!(g.edges(), &[(0, 2), (1, 3)]);

        assert!(matches!(
            project_to_image_graph(&lift(&pair), 5),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn projection_truncates_to_first_nodes() {
        let pair = ExponentMatrix::new(1, 2, 2, vec![vec![0], vec![0]]).unwrap();
        let g = project_to_image_graph(&lift(&pair), 3).unwrap();
        assert_eq!(g.edges(), &[(0, 2)]);
        assert_eq!(g.degrees(), vec![1, 0, 1]);
    }

    #[test]
    fn text_format_h2() {
        let e = h2(38);
        let text = e.to_text();
        assert!(text.starts_with("3 5 38\n1,2,7 9 23 - -\n"));
        assert_eq!(ExponentMatrix::parse(&text).unwrap(), e);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = ExponentMatrix::parse("2 2 5\n0 1\n0 7\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = ExponentMatrix::parse("2 2 5\n0 1\n0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = ExponentMatrix::parse("2 2 5\n0 1,1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = ExponentMatrix::parse("2 x 5\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = ExponentMatrix::parse("1 1 5\n0\n3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn random_toroidal_respects_girth() {
        let e = random_toroidal(3, 6, 34, 6, 7, 1000).unwrap();
        assert!(!has_cycle_within(&e, 4));
        assert_eq!(e.total_shifts(), 18);
        assert_eq!(random_toroidal(3, 6, 34, 6, 7, 1000).unwrap(), e);
    }
}
