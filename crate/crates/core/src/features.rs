//! Feature ingestion and the 32-dimensional Nishimori-weighted embedding.
//!
//! File format: a header line `N d`, then `N` lines of `d` whitespace
//! separated decimals. A companion labels file holds `N` lines of `0` or `1`.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::qc_graph::ImageGraph;
use crate::{Error, Result};

/// Output dimension of [`project`].
pub const EMBED_DIM: usize = 32;

/// `N x d` feature rows with optional binary class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
    labels: Option<Vec<u8>>,
}

impl FeatureMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f64>, labels: Option<Vec<u8>>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Domain("feature dimension must be >= 1".into()));
        }
        if values.len() != n * d {
            return Err(Error::Size(format!(
                "{} values for a {n}x{d} matrix",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite value at row {}, column {}",
                i / d,
                i % d
            )));
        }
        let fm = FeatureMatrix {
            n,
            d,
            values,
            labels: None,
        };
        match labels {
            Some(l) => fm.with_labels(l),
            None => Ok(fm),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<u8>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::Size(format!("row {i} has {} values, expected {d}", rows[i].len())));
        }
        Self::new(rows.len(), d, rows.concat(), labels)
    }

    /// Attach labels; both classes must be present.
    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::Size(format!(
                "{} labels for {} samples",
                labels.len(),
                self.n
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Domain(format!("label {l} is not 0 or 1")));
        }
        let ones = labels.iter().filter(|&&l| l == 1).count();
        if ones == 0 || ones == labels.len() {
            return Err(Error::Degenerate("labels must contain both classes".into()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    /// Every value multiplied by `c`; labels kept.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.n,
            self.d,
            self.values.iter().map(|v| v * c).collect(),
            self.labels.clone(),
        )
    }

    /// Strict parser for the feature-file format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let (hline, header) = lines
            .by_ref()
            .find(|(_, l)| !l.is_empty())
            .ok_or_else(|| Error::parse(1, "empty feature file"))?;
        let dims: Vec<&str> = header.split_whitespace().collect();
        let parse_dim = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| Error::parse(hline, format!("bad header token `{t}`")))
        };
        let [n, d] = dims[..] else {
            return Err(Error::parse(hline, "header must be `N d`"));
        };
        let (n, d) = (parse_dim(n)?, parse_dim(d)?);
        if d == 0 {
            return Err(Error::parse(hline, "feature dimension must be >= 1"));
        }

        let mut values = Vec::with_capacity(n * d);
        let mut rows = 0;
        for (lno, line) in lines {
            if line.is_empty() {
                continue;
            }
            if rows == n {
                return Err(Error::parse(lno, format!("more than {n} rows")));
            }
            let before = values.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| Error::parse(lno, format!("bad number `{tok}`")))?;
                if !v.is_finite() {
                    return Err(Error::parse(lno, format!("non-finite value `{tok}`")));
                }
                values.push(v);
            }
            let got = values.len() - before;
            if got != d {
                return Err(Error::parse(lno, format!("expected {d} values, found {got}")));
            }
            rows += 1;
        }
        if rows != n {
            return Err(Error::parse(
                text.lines().count().max(1),
                format!("expected {n} rows, found {rows}"),
            ));
        }
        Self::new(n, d, values, None)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.d);
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| e.with_source(path.display().to_string()))
    }
}

/// Parse a labels file of `n` lines of `0` / `1`.
pub fn parse_labels(text: &str, n: usize) -> Result<Vec<u8>> {
    let mut labels = Vec::with_capacity(n);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line {
            "0" => labels.push(0),
            "1" => labels.push(1),
            other => return Err(Error::parse(i + 1, format!("label `{other}` is not 0 or 1"))),
        }
        if labels.len() > n {
            return Err(Error::parse(i + 1, format!("more than {n} labels")));
        }
    }
    if labels.len() != n {
        return Err(Error::parse(
            text.lines().count().max(1),
            format!("expected {n} labels, found {}", labels.len()),
        ));
    }
    Ok(labels)
}

pub fn read_labels(path: &Path, n: usize) -> Result<Vec<u8>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, n).map_err(|e| e.with_source(path.display().to_string()))
}

pub fn labels_to_text(labels: &[u8]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

/// Indices of the `k` features whose class means differ most, ascending.
/// Ties go to the lower index.
pub fn top_k_select(features: &FeatureMatrix, k: usize) -> Result<Vec<usize>> {
    let labels = features
        .labels()
        .ok_or_else(|| Error::Precondition("top-k selection needs class labels".into()))?;
    if k == 0 || k > features.d() {
        return Err(Error::Domain(format!(
            "k = {k} outside 1..={}",
            features.d()
        )));
    }
    let d = features.d();
    let mut sums = [vec![0.0; d], vec![0.0; d]];
    let mut counts = [0usize; 2];
    for (i, &l) in labels.iter().enumerate() {
        counts[l as usize] += 1;
        for (s, v) in sums[l as usize].iter_mut().zip(features.row(i)) {
            *s += v;
        }
    }
    let diff: Vec<f64> = (0..d)
        .map(|j| (sums[1][j] / counts[1] as f64 - sums[0][j] / counts[0] as f64).abs())
        .collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| diff[b].total_cmp(&diff[a]).then(a.cmp(&b)));
    let mut chosen = order[..k].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Two-means split of the raw rows.
///
/// Centres start at the farthest pair of rows (lowest indices on ties);
/// Lloyd iterations run until assignments settle or 50 rounds pass. The
/// cluster seeded by the lower-index row of the pair is labelled `1`.
pub fn pseudo_label(features: &FeatureMatrix) -> Result<Vec<u8>> {
    let n = features.n();
    if n < 4 {
        return Err(Error::Precondition(format!("pseudo-labelling needs N >= 4, got {n}")));
    }
    let (mut a, mut b, mut far) = (0, 0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let dd = sq_dist(features.row(i), features.row(j));
            if dd > far {
                (a, b, far) = (i, j, dd);
            }
        }
    }
    if far == 0.0 {
        return Err(Error::Degenerate("all feature rows are identical".into()));
    }
    let mut centres = [features.row(a).to_vec(), features.row(b).to_vec()];
    let mut labels = vec![0u8; n];
    for round in 0..50 {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let r = features.row(i);
            let l = u8::from(sq_dist(r, &centres[0]) <= sq_dist(r, &centres[1]));
            if l != *label {
                *label = l;
                changed = true;
            }
        }
        if !changed && round > 0 {
            break;
        }
        for (c, centre) in centres.iter_mut().enumerate() {
            // label 1 belongs to centre 0
            let want = u8::from(c == 0);
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == want).collect();
            if members.is_empty() {
                continue;
            }
            centre.iter_mut().for_each(|x| *x = 0.0);
            for &i in &members {
                for (x, v) in centre.iter_mut().zip(features.row(i)) {
                    *x += v;
                }
            }
            centre.iter_mut().for_each(|x| *x /= members.len() as f64);
        }
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == n {
        return Err(Error::Degenerate("two-means produced a single cluster".into()));
    }
    Ok(labels)
}

/// Selected feature indices and the projected vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub n: usize,
    pub k: usize,
    pub selected: Vec<usize>,
    /// `n` vectors of length [`EMBED_DIM`].
    pub vectors: Vec<Vec<f64>>,
    pub projection_seed: u64,
    pub beta: f64,
}

/// `z_i = W u_i` with `W` a seeded Gaussian `32 x k` matrix whose rows are
/// unit-normalised and scaled by `tanh(beta)`.
pub fn project(features: &FeatureMatrix, selected: &[usize], beta: f64, seed: u64) -> Result<Embedding> {
    project_with(features, selected, beta, seed, false)
}

/// Projection matrix used by [`project_with`].
pub fn projection_matrix(k: usize, beta: f64, seed: u64, orthonormal: bool) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(EMBED_DIM, k, |_, _| StandardNormal.sample(&mut rng));
    let mut w = if !orthonormal {
        let mut w = g;
        for mut row in w.row_iter_mut() {
            let norm = row.norm();
            row /= norm;
        }
        w
    } else if k <= EMBED_DIM {
        // orthonormal columns: an isometry from R^k into R^32
        g.qr().q()
    } else {
        g.transpose().qr().q().transpose()
    };
    w *= beta.tanh();
    w
}

/// [`project`], optionally with an orthonormalised `W` (orthonormal
/// columns when `k <= 32`, orthonormal rows otherwise) so that `|z_i| =
/// tanh(beta) |u_i|` when `k <= 32`.
pub fn project_with(
    features: &FeatureMatrix,
    selected: &[usize],
    beta: f64,
    seed: u64,
    orthonormal: bool,
) -> Result<Embedding> {
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    let k = selected.len();
    if k == 0 {
        return Err(Error::Domain("no selected features".into()));
    }
    if selected.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("selected indices must be strictly increasing".into()));
    }
    if selected[k - 1] >= features.d() {
        return Err(Error::Size(format!(
            "selected index {} outside dimension {}",
            selected[k - 1],
            features.d()
        )));
    }
    let w = projection_matrix(k, beta, seed, orthonormal);
    let vectors = (0..features.n())
        .map(|i| {
            let row = features.row(i);
            (0..EMBED_DIM)
                .map(|r| selected.iter().enumerate().map(|(c, &j)| w[(r, c)] * row[j]).sum())
                .collect()
        })
        .collect();
    Ok(Embedding {
        n: features.n(),
        k,
        selected: selected.to_vec(),
        vectors,
        projection_seed: seed,
        beta,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeOrder {
    /// Sample `i` sits on node `i`.
    #[default]
    Order,
    /// Samples sorted by first embedding coordinate, stable.
    Sorted,
}

/// `perm[node] = sample`.
pub fn assign_nodes(embedding: &Embedding, graph: &ImageGraph, mode: NodeOrder) -> Result<Vec<usize>> {
    if embedding.n != graph.node_count() {
        return Err(Error::Size(format!(
            "{} samples for {} graph nodes",
            embedding.n,
            graph.node_count()
        )));
    }
    let mut perm: Vec<usize> = (0..embedding.n).collect();
    if mode == NodeOrder::Sorted {
        perm.sort_by(|&a, &b| embedding.vectors[a][0].total_cmp(&embedding.vectors[b][0]));
    }
    Ok(perm)
}
