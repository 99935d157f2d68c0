//! Bethe-Hessian operators and their low spectrum.
//!
//! Two operator forms are provided:
//!
//! - the temperature form `H(beta, J)` with diagonal
//!   `1 + sum_k tanh^2(beta J_ik) / (1 - tanh^2(beta J_ik))` and off-diagonal
//!   `-tanh(beta J_ij) / (1 - tanh^2(beta J_ij))`,
//! - the deformed Laplacian `H_r = (r^2 - 1) I + D - r W` on calibrated
//!   weights `W`, with signed weighted degrees on the diagonal.
//!
//! The temperature form is built from the identities
//! `tanh^2 / (1 - tanh^2) = sinh^2` and `tanh / (1 - tanh^2) = sinh cosh`,
//! which stay finite where `tanh` rounds to one.

mod dense;
mod lanczos;

pub(crate) use dense::scaled_lowest_value;
pub use dense::{dense_eigenvalues, scaled_lowest, ScaledLowest};
pub use lanczos::{lanczos_eigenvalues, LanczosOptions};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::qc_graph::ImageGraph;
use crate::{Error, Result};

/// Largest `|beta * J|` accepted by the temperature form.
pub const MAX_BETA_J: f64 = 300.0;

/// Matrices up to this size go to the dense solver.
pub const DENSE_LIMIT: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    Tanh,
    R,
}

/// Symmetric operator in diagonal + upper-triangle triplet storage.
#[derive(Clone, Debug)]
pub struct BetheHessian {
    diag: Vec<f64>,
    /// `(i, j, value)` with `i < j`.
    upper: Vec<(usize, usize, f64)>,
    /// `beta * J` per entry of `upper` (temperature form only).
    args: Vec<f64>,
    form: Form,
    param: f64,
}

impl BetheHessian {
    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn form(&self) -> Form {
        self.form
    }

    /// `beta` for the temperature form, `r` for the deformed Laplacian.
    pub fn param(&self) -> f64 {
        self.param
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn off_diagonal(&self) -> &[(usize, usize, f64)] {
        &self.upper
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.diag
            .iter()
            .chain(self.upper.iter().map(|(_, _, v)| v))
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, di), xi) in y.iter_mut().zip(&self.diag).zip(x) {
            *yi = di * xi;
        }
        for &(i, j, v) in &self.upper {
            y[i] += v * x[j];
            y[j] += v * x[i];
        }
    }

    /// `x^T H x` and the sum of the absolute values of its terms (a scale
    /// for its rounding error).
    ///
    /// For the temperature form each edge block is evaluated as
    /// `s e^a (x_u - x_v)^2 / 2 - s e^-a (x_u + x_v)^2 / 2` with
    /// `s = sinh(a)`, which avoids the cancellation between the
    /// `sinh^2` and `sinh cosh` entries.
    pub fn quadratic_form(&self, x: &[f64]) -> (f64, f64) {
        let mut value = 0.0;
        let mut scale = 0.0;
        match self.form {
            Form::Tanh => {
                for xi in x {
                    value += xi * xi;
                    scale += xi * xi;
                }
                for (&(i, j, _), &a) in self.upper.iter().zip(&self.args) {
                    let s = a.sinh();
                    let stiff = s * a.exp() * (x[i] - x[j]).powi(2) / 2.0;
                    let soft = -s * (-a).exp() * (x[i] + x[j]).powi(2) / 2.0;
                    value += stiff + soft;
                    scale += stiff.abs() + soft.abs();
                }
            }
            Form::R => {
                for (d, xi) in self.diag.iter().zip(x) {
                    value += d * xi * xi;
                    scale += (d * xi * xi).abs();
                }
                for &(i, j, v) in &self.upper {
                    value += 2.0 * v * x[i] * x[j];
                    scale += (2.0 * v * x[i] * x[j]).abs();
                }
            }
        }
        (value, scale)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diag));
        for &(i, j, v) in &self.upper {
            m[(i, j)] += v;
            m[(j, i)] += v;
        }
        m
    }
}

fn check_edge_values(graph: &ImageGraph, values: &[f64], what: &str) -> Result<()> {
    if values.len() != graph.edge_count() {
        return Err(Error::Size(format!(
            "{} {what} values for {} edges",
            values.len(),
            graph.edge_count()
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite {what} value {v}")));
    }
    Ok(())
}

/// Temperature form `H(beta, J)`.
pub fn build_tanh_form(graph: &ImageGraph, couplings: &[f64], beta: f64) -> Result<BetheHessian> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    check_edge_values(graph, couplings, "coupling")?;
    let mut diag = vec![1.0; graph.node_count()];
    let mut upper = Vec::with_capacity(graph.edge_count());
    let mut args = Vec::with_capacity(graph.edge_count());
    for (&(u, v), &j) in graph.edges().iter().zip(couplings) {
        let x = beta * j;
        if x.abs() > MAX_BETA_J {
            return Err(Error::Range {
                value: x.abs(),
                limit: MAX_BETA_J,
            });
        }
        let (s, c) = (x.sinh(), x.cosh());
        diag[u] += s * s;
        diag[v] += s * s;
        upper.push((u, v, -s * c));
        args.push(x);
    }
    Ok(BetheHessian {
        diag,
        upper,
        args,
        form: Form::Tanh,
        param: beta,
    })
}

/// Deformed Laplacian `(r^2 - 1) I + D - r W`, `D_ii = sum_j w_ij` (signed).
pub fn build_r_form(graph: &ImageGraph, omega: &[f64], r: f64) -> Result<BetheHessian> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("r must be positive, got {r}")));
    }
    check_edge_values(graph, omega, "weight")?;
    let mut diag = vec![r * r - 1.0; graph.node_count()];
    let mut upper = Vec::with_capacity(graph.edge_count());
    for (&(u, v), &w) in graph.edges().iter().zip(omega) {
        diag[u] += w;
        diag[v] += w;
        upper.push((u, v, -r * w));
    }
    Ok(BetheHessian {
        diag,
        upper,
        args: Vec::new(),
        form: Form::R,
        param: r,
    })
}

/// `sqrt` of the mean absolute weighted degree, clamped below at `1 + 1e-6`.
pub fn default_r(graph: &ImageGraph, omega: &[f64]) -> Result<f64> {
    if graph.edge_count() == 0 {
        return Err(Error::Degenerate("default r needs at least one edge".into()));
    }
    check_edge_values(graph, omega, "weight")?;
    let total: f64 = omega.iter().map(|w| 2.0 * w.abs()).sum();
    let mean = total / graph.node_count() as f64;
    Ok(mean.sqrt().max(1.0 + 1e-6))
}

/// The smallest eigenvalues of an operator and their successive gaps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub form: Form,
    pub beta_or_r: f64,
    pub eigenvalues: Vec<f64>,
    pub gaps: Vec<f64>,
}

impl Spectrum {
    pub fn new(form: Form, beta_or_r: f64, mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.sort_by(f64::total_cmp);
        let gaps = eigenvalues
            .windows(2)
            .map(|w| (w[1] - w[0]).max(0.0))
            .collect();
        Spectrum {
            form,
            beta_or_r,
            eigenvalues,
            gaps,
        }
    }

    /// Two-column `index value` table, 1-based index.
    pub fn table(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.eigenvalues.iter().enumerate() {
            out.push_str(&format!("{} {:.12e}\n", k + 1, v));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    /// Dense up to [`DENSE_LIMIT`], iterative above.
    Auto,
    Dense,
    Lanczos,
}

/// The `count` smallest eigenvalues (fewer if the matrix is smaller).
pub fn eigenvalues(h: &BetheHessian, count: usize) -> Result<Spectrum> {
    eigenvalues_with(h, count, Solver::Auto)
}

pub fn eigenvalues_with(h: &BetheHessian, count: usize, solver: Solver) -> Result<Spectrum> {
    if count < 2 {
        return Err(Error::Domain(format!("eigenvalue count must be >= 2, got {count}")));
    }
    let q = count.min(h.size());
    let values = match solver {
        Solver::Dense => dense_eigenvalues(h, q),
        Solver::Auto if h.size() <= DENSE_LIMIT => dense_eigenvalues(h, q),
        Solver::Auto | Solver::Lanczos => lanczos_eigenvalues(h, q, &LanczosOptions::default())?,
    };
    Ok(Spectrum::new(h.form(), h.param(), values))
}

/// Successive gaps and the derived statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub gaps: Vec<f64>,
    /// Primary gap `lambda_2 - lambda_1`.
    pub delta: f64,
    /// 1-based index of the largest gap, smallest on ties.
    pub k_star: usize,
    /// Largest of the first ten gaps.
    pub max_gap_10: f64,
}

pub fn gap_report(spectrum: &Spectrum) -> Result<GapReport> {
    if spectrum.eigenvalues.len() < 2 {
        return Err(Error::Size("gap report needs at least 2 eigenvalues".into()));
    }
    let gaps = spectrum.gaps.clone();
    let mut k_star = 0;
    for (k, &g) in gaps.iter().enumerate() {
        if g > gaps[k_star] {
            k_star = k;
        }
    }
    let max_gap_10 = gaps.iter().take(10).fold(0.0f64, |m, &g| m.max(g));
    Ok(GapReport {
        delta: gaps[0],
        k_star: k_star + 1,
        max_gap_10,
        gaps,
    })
}

/// Median of `gaps[1..]`; zero when there is no bulk.
pub fn bulk_median(gaps: &[f64]) -> f64 {
    if gaps.len() < 2 {
        return 0.0;
    }
    median(&gaps[1..])
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qc_graph::{lift, project_to_image_graph, spherical};

    fn triangle() -> ImageGraph {
        ImageGraph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn tanh_form_zero_couplings_is_identity() {
        let h = build_tanh_form(&triangle(), &[0.0; 3], 1.7).unwrap();
        assert_eq!(h.to_dense(), DMatrix::identity(3, 3));
    }

    #[test]
    fn tanh_form_single_edge() {
        let g = ImageGraph::from_edges(2, [(0, 1)]).unwrap();
        let beta = 0.5f64.atanh();
        let h = build_tanh_form(&g, &[1.0], beta).unwrap().to_dense();
        assert!(close(h[(0, 0)], 1.0 + 1.0 / 3.0, 1e-12));
        assert!(close(h[(1, 1)], 1.0 + 1.0 / 3.0, 1e-12));
        assert!(close(h[(0, 1)], -2.0 / 3.0, 1e-12));
        assert!(close(h[(1, 0)], -2.0 / 3.0, 1e-12));
    }

    #[test]
    fn tanh_form_matches_tanh_expression_where_defined() {
        let g = triangle();
        let j = [0.3, -1.1, 2.0];
        let beta = 0.8;
        let h = build_tanh_form(&g, &j, beta).unwrap().to_dense();
        let mut diag = [1.0; 3];
        for (&(u, v), &jj) in g.edges().iter().zip(&j) {
            let t = (beta * jj).tanh();
            diag[u] += t * t / (1.0 - t * t);
            diag[v] += t * t / (1.0 - t * t);
            assert!(close(h[(u, v)], -t / (1.0 - t * t), 1e-12));
        }
        for i in 0..3 {
            assert!(close(h[(i, i)], diag[i], 1e-12));
        }
    }

    #[test]
    fn tanh_form_triangle_is_circulant() {
        // Equal couplings: H = a I + b A with A's spectrum {2, -1, -1}.
        let x: f64 = 0.9;
        let h = build_tanh_form(&triangle(), &[x; 3], 1.0).unwrap();
        let a = 1.0 + 2.0 * x.sinh().powi(2);
        let b = -x.sinh() * x.cosh();
        let s = eigenvalues(&h, 3).unwrap();
        let mut want = [a + 2.0 * b, a - b, a - b];
        want.sort_by(f64::total_cmp);
        for (got, w) in s.eigenvalues.iter().zip(want) {
            assert!(close(*got, w, 1e-10), "{got} vs {w}");
        }
    }

    #[test]
    fn quadratic_form_matches_dense_product() {
        let g = triangle();
        let x = [0.3, -1.2, 0.8];
        for h in [
            build_tanh_form(&g, &[0.4, -1.5, 2.2], 1.3).unwrap(),
            build_r_form(&g, &[0.4, -0.5, 0.9], 1.7).unwrap(),
        ] {
            let v = nalgebra::DVector::from_column_slice(&x);
            let want = (v.transpose() * h.to_dense() * &v)[(0, 0)];
            let (got, scale) = h.quadratic_form(&x);
            assert!((got - want).abs() < 1e-12 * scale.max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn tanh_form_overflow_guard() {
        let g = ImageGraph::from_edges(2, [(0, 1)]).unwrap();
        assert!(matches!(build_tanh_form(&g, &[1.0], 301.0), Err(Error::Range { .. })));
        assert!(build_tanh_form(&g, &[1.0], 300.0).is_ok());
        assert!(matches!(build_tanh_form(&g, &[1.0], 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn tanh_form_small_beta_approaches_identity() {
        let g = triangle();
        let mut last = f64::INFINITY;
        for beta in [1e-1, 1e-2, 1e-3, 1e-4] {
            let h = build_tanh_form(&g, &[1.0, -0.5, 0.7], beta).unwrap().to_dense();
            let dev = (h - DMatrix::identity(3, 3)).abs().max();
            assert!(dev < last);
            last = dev;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn r_form_binary_triangle() {
        let h = build_r_form(&triangle(), &[1.0; 3], 2.0).unwrap();
        let s = eigenvalues(&h, 3).unwrap();
        for (got, w) in s.eigenvalues.iter().zip([1.0, 7.0, 7.0]) {
            assert!(close(*got, w, 1e-12));
        }
    }

    #[test]
    fn r_form_r1_is_laplacian() {
        let path = ImageGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let s = eigenvalues(&build_r_form(&path, &[1.0; 2], 1.0).unwrap(), 3).unwrap();
        for (got, w) in s.eigenvalues.iter().zip([0.0, 1.0, 3.0]) {
            assert!(close(*got, w, 1e-12));
        }
    }

    #[test]
    fn r_form_edgeless() {
        let g = ImageGraph::from_edges(4, []).unwrap();
        let s = eigenvalues(&build_r_form(&g, &[], 1.5).unwrap(), 4).unwrap();
        assert!(s.eigenvalues.iter().all(|&v| close(v, 1.25, 1e-15)));
    }

    #[test]
    fn r_form_uses_signed_degree() {
        let g = ImageGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let h = build_r_form(&g, &[0.5, -0.5], 2.0).unwrap().to_dense();
        assert!(close(h[(1, 1)], 3.0, 1e-15));
        assert!(close(h[(0, 0)], 3.5, 1e-15));
        assert!(close(h[(1, 2)], 1.0, 1e-15));
    }

    #[test]
    fn default_r_examples() {
        // K4 is 3-regular.
        let k4 = ImageGraph::from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        assert!(close(default_r(&k4, &[1.0; 6]).unwrap(), 3f64.sqrt(), 1e-15));

        let c = spherical(&[1, 2, 3], 9).unwrap();
        let g = project_to_image_graph(&lift(&c), 9).unwrap();
        assert!(g.degrees().iter().all(|&d| d == 4));
        let w = vec![0.5; g.edge_count()];
        assert!(close(default_r(&g, &w).unwrap(), 2f64.sqrt(), 1e-15));

        let cycle = ImageGraph::from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        assert_eq!(default_r(&cycle, &[0.5, -0.5, 0.5, -0.5]).unwrap(), 1.0 + 1e-6);

        let empty = ImageGraph::from_edges(3, []).unwrap();
        assert!(matches!(default_r(&empty, &[]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn eigenvalue_examples() {
        let g = ImageGraph::from_edges(3, []).unwrap();
        let id = build_r_form(&g, &[], 2f64.sqrt()).unwrap();
        let s = eigenvalues(&id, 3).unwrap();
        assert!(s.eigenvalues.iter().all(|&v| close(v, 1.0, 1e-14)));
        assert!(matches!(eigenvalues(&id, 1), Err(Error::Domain(_))));
        assert_eq!(eigenvalues(&id, 10).unwrap().eigenvalues.len(), 3);
    }

    #[test]
    fn gap_report_examples() {
        let r = gap_report(&Spectrum::new(Form::R, 2.0, vec![1.0, 7.0, 7.0])).unwrap();
        assert_eq!((r.gaps.clone(), r.delta, r.k_star), (vec![6.0, 0.0], 6.0, 1));

        let r = gap_report(&Spectrum::new(Form::R, 2.0, vec![3.0; 5])).unwrap();
        assert!(r.gaps.iter().all(|&g| g == 0.0));
        assert_eq!(r.k_star, 1);

        let r = gap_report(&Spectrum::new(Form::R, 2.0, vec![0.0, 0.1, 5.0, 5.2])).unwrap();
        assert!(close(r.gaps[0], 0.1, 1e-12));
        assert!(close(r.gaps[1], 4.9, 1e-12));
        assert!(close(r.gaps[2], 0.2, 1e-12));
        assert_eq!(r.k_star, 2);
        assert!(close(r.max_gap_10, 4.9, 1e-12));
    }

    #[test]
    fn spectrum_json_fields() {
        let s = Spectrum::new(Form::R, 2.0, vec![7.0, 1.0, 7.0]);
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        assert_eq!(v["form"], "r");
        assert_eq!(v["beta_or_r"], 2.0);
        assert_eq!(v["eigenvalues"], serde_json::json!([1.0, 7.0, 7.0]));
        assert_eq!(v["gaps"], serde_json::json!([6.0, 0.0]));
    }

    #[test]
    fn bulk_median_examples() {
        assert_eq!(bulk_median(&[5.0, 1.0, 3.0, 2.0]), 2.0);
        assert_eq!(bulk_median(&[5.0, 1.0, 3.0]), 2.0);
        assert_eq!(bulk_median(&[5.0]), 0.0);
    }
}
