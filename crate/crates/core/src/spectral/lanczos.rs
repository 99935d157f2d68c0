//! Block Krylov solver for the smallest eigenvalues of a sparse symmetric
//! operator.
//!
//! Each step appends the residual block of the lowest unconverged Ritz pairs
//! to an orthonormal basis (full reorthogonalisation, two Gram-Schmidt
//! passes), then performs Rayleigh-Ritz on `V^T H V`. Without a
//! preconditioner the residual block spans the same space as the next block
//! Lanczos vectors. When the basis is full it is thick-restarted on the
//! lowest Ritz vectors.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::BetheHessian;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    /// Vectors added per step; a block at least as large as an eigenvalue's
    /// multiplicity finds every copy.
    pub block: usize,
    /// Basis size that triggers a restart; `None` picks one from the count.
    pub max_basis: Option<usize>,
    /// Step budget.
    pub max_iterations: usize,
    /// Convergence: `||H v - theta v|| <= tol * max|H_ij|`.
    pub tol: f64,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            block: 8,
            max_basis: None,
            max_iterations: 5000,
            tol: 1e-9,
            seed: 0x5eed,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

struct Basis {
    v: Vec<Vec<f64>>,
    hv: Vec<Vec<f64>>,
}

impl Basis {
    /// Orthogonalise `x` against the basis and append it with its image.
    /// Returns false when `x` is numerically inside the span.
    fn push(&mut self, h: &BetheHessian, mut x: Vec<f64>) -> bool {
        let start = dot(&x, &x).sqrt();
        if start == 0.0 {
            return false;
        }
        for _ in 0..2 {
            for q in &self.v {
                let c = dot(q, &x);
                axpy(-c, q, &mut x);
            }
        }
        let norm = dot(&x, &x).sqrt();
        if norm <= 1e-10 * start {
            return false;
        }
        x.iter_mut().for_each(|xi| *xi /= norm);
        let mut hx = vec![0.0; x.len()];
        h.apply(&x, &mut hx);
        self.v.push(x);
        self.hv.push(hx);
        true
    }

    fn len(&self) -> usize {
        self.v.len()
    }

    fn combine(cols: &[Vec<f64>], coef: impl Iterator<Item = f64>) -> Vec<f64> {
        let mut out = vec![0.0; cols[0].len()];
        for (c, col) in coef.zip(cols) {
            if c != 0.0 {
                axpy(c, col, &mut out);
            }
        }
        out
    }
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// The `count` smallest eigenvalues of `h`, ascending.
pub fn lanczos_eigenvalues(h: &BetheHessian, count: usize, opts: &LanczosOptions) -> Result<Vec<f64>> {
    let n = h.size();
    if count == 0 || count > n {
        return Err(Error::Domain(format!(
            "cannot take {count} eigenvalues of a {n}x{n} matrix"
        )));
    }
    let block = opts.block.clamp(1, n);
    let max_basis = opts
        .max_basis
        .unwrap_or((2 * count + 2 * block).max(count + 6 * block).max(40))
        .max(count + 2 * block)
        .min(n);
    let tol = opts.tol * h.max_abs().max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut basis = Basis {
        v: Vec::new(),
        hv: Vec::new(),
    };
    let mut pending: Vec<Vec<f64>> = (0..(count + block).min(n))
        .map(|_| random_vector(&mut rng, n))
        .collect();
    let mut worst = f64::INFINITY;
    let mut converged = 0;

    for _ in 0..opts.max_iterations {
        let mut added = 0;
        for x in pending.drain(..) {
            if basis.len() == n {
                break;
            }
            if basis.push(h, x) {
                added += 1;
            }
        }
        while added == 0 && basis.len() < n {
            if basis.push(h, random_vector(&mut rng, n)) {
                added += 1;
            }
        }

        let p = basis.len();
        let mut t = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                let x = 0.5 * (dot(&basis.v[i], &basis.hv[j]) + dot(&basis.v[j], &basis.hv[i]));
                t[(i, j)] = x;
                t[(j, i)] = x;
            }
        }
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let theta: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();

        if p == n {
            // The basis spans the whole space: Rayleigh-Ritz is exact.
            return Ok(theta[..count].to_vec());
        }

        let window = (count + block).min(p);
        if window < count {
            pending = (0..block).map(|_| random_vector(&mut rng, n)).collect();
            continue;
        }
        let mut ritz = Vec::with_capacity(window);
        let mut residuals = Vec::with_capacity(window);
        for (slot, &k) in order.iter().take(window).enumerate() {
            let coef = eig.eigenvectors.column(k);
            let y = Basis::combine(&basis.v, coef.iter().copied());
            let hy = Basis::combine(&basis.hv, coef.iter().copied());
            let mut r = hy.clone();
            axpy(-theta[slot], &y, &mut r);
            residuals.push(dot(&r, &r).sqrt());
            ritz.push((y, hy, r));
        }
        converged = residuals[..count].iter().take_while(|&&r| r <= tol).count();
        worst = residuals[..count].iter().fold(0.0f64, |m, &r| m.max(r));
        if converged == count {
            return Ok(theta[..count].to_vec());
        }

        pending = (0..window)
            .filter(|&i| residuals[i] > tol)
            .take(block)
            .map(|i| ritz[i].2.clone())
            .collect();

        if p + pending.len() > max_basis {
            let keep = (count + block).min(p).min(max_basis - block);
            let (v, hv) = ritz.into_iter().take(keep).map(|(y, hy, _)| (y, hy)).unzip();
            basis = Basis { v, hv };
        }
    }

    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        converged,
        wanted: count,
        worst_residual: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qc_graph::ImageGraph;
    use crate::spectral::{build_r_form, build_tanh_form, dense_eigenvalues};
    use rand::Rng;

    fn random_graph(n: usize, p: f64, seed: u64) -> ImageGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        ImageGraph::from_edges(n, edges).unwrap()
    }

    fn assert_agree(h: &BetheHessian, count: usize, opts: &LanczosOptions) {
        let dense = dense_eigenvalues(h, count);
        let iter = lanczos_eigenvalues(h, count, opts).unwrap();
        let scale = h.max_abs().max(1.0);
        for (a, b) in dense.iter().zip(&iter) {
            assert!((a - b).abs() <= 1e-8 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn agrees_with_dense_on_laplacian_with_multiplicities() {
        // Several components give a repeated zero eigenvalue.
        let mut edges = Vec::new();
        for c in 0..5 {
            let base = c * 20;
            for i in 0..19 {
                edges.push((base + i, base + i + 1));
            }
            edges.push((base, base + 10));
        }
        let g = ImageGraph::from_edges(100, edges).unwrap();
        let h = build_r_form(&g, &vec![1.0; g.edge_count()], 1.0).unwrap();
        assert_agree(&h, 12, &LanczosOptions::default());
    }

    #[test]
    fn agrees_with_dense_under_forced_restarts() {
        let g = random_graph(300, 0.03, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w: Vec<f64> = (0..g.edge_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = build_r_form(&g, &w, 1.7).unwrap();
        let opts = LanczosOptions {
            block: 4,
            max_basis: Some(36),
            ..LanczosOptions::default()
        };
        assert_agree(&h, 10, &opts);
    }

    #[test]
    fn agrees_with_dense_on_tanh_form() {
        let g = random_graph(200, 0.05, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let j: Vec<f64> = (0..g.edge_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = build_tanh_form(&g, &j, 0.7).unwrap();
        assert_agree(&h, 20, &LanczosOptions::default());
    }

    #[test]
    fn whole_space_is_exact() {
        let g = random_graph(12, 0.4, 2);
        let h = build_r_form(&g, &vec![1.0; g.edge_count()], 2.0).unwrap();
        assert_agree(&h, 12, &LanczosOptions::default());
    }

    #[test]
    fn budget_exhaustion_reports_diagnostics() {
        let g = random_graph(200, 0.05, 4);
        let h = build_r_form(&g, &vec![1.0; g.edge_count()], 1.3).unwrap();
        let opts = LanczosOptions {
            max_iterations: 1,
            ..LanczosOptions::default()
        };
        match lanczos_eigenvalues(&h, 5, &opts) {
            Err(Error::NonConvergence { wanted, iterations, .. }) => {
                assert_eq!((wanted, iterations), (5, 1));
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
