//! Random-bond Ising couplings on an image graph and their Nishimori
//! temperature.
//!
//! Edge couplings `J_ij` come from embedding similarity. The Nishimori
//! inverse temperature `beta_N` is estimated either from the coupling moments
//! (`J0 / nu^2`, exact for Gaussian couplings) or spectrally, as the
//! temperature where the smallest eigenvalue of the Bethe-Hessian `H(beta, J)`
//! returns to zero. Calibrated weights are `omega = tanh(beta_N J)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::qc_graph::ImageGraph;
use crate::spectral::{self, build_tanh_form, scaled_lowest, scaled_lowest_value, MAX_BETA_J};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Similarity {
    /// `<z_i, z_j> / (|z_i| |z_j|)`.
    #[default]
    Cosine,
    /// `1 - |z_i - z_j|^2 / rho^2`, `rho` the median edge distance.
    NegEuclidean,
}

impl fmt::Display for Similarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Similarity::Cosine => "cosine",
            Similarity::NegEuclidean => "neg-euclidean",
        })
    }
}

impl FromStr for Similarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Similarity::Cosine),
            "neg-euclidean" | "negEuclidean" => Ok(Similarity::NegEuclidean),
            other => Err(Error::Config(format!("unknown similarity `{other}`"))),
        }
    }
}

/// One coupling per edge of `graph`, in edge order.
pub fn assign_couplings(
    graph: &ImageGraph,
    embeddings: &[Vec<f64>],
    similarity: Similarity,
) -> Result<Vec<f64>> {
    if embeddings.len() != graph.node_count() {
        return Err(Error::Size(format!(
            "{} embeddings for {} nodes",
            embeddings.len(),
            graph.node_count()
        )));
    }
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    match similarity {
        Similarity::Cosine => {
            let norms: Vec<f64> = embeddings.iter().map(|z| dot(z, z).sqrt()).collect();
            if let Some(i) = norms.iter().position(|&n| n == 0.0) {
                return Err(Error::Domain(format!(
                    "embedding {i} is the zero vector; cosine similarity undefined"
                )));
            }
            Ok(graph
                .edges()
                .iter()
                .map(|&(u, v)| {
                    (dot(&embeddings[u], &embeddings[v]) / (norms[u] * norms[v])).clamp(-1.0, 1.0)
                })
                .collect())
        }
        Similarity::NegEuclidean => {
            let d2: Vec<f64> = graph
                .edges()
                .iter()
                .map(|&(u, v)| {
                    embeddings[u]
                        .iter()
                        .zip(&embeddings[v])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum()
                })
                .collect();
            let dist: Vec<f64> = d2.iter().map(|x| x.sqrt()).collect();
            let rho = spectral::median(&dist);
            if rho == 0.0 {
                return Err(Error::Degenerate(
                    "median edge distance is zero; negEuclidean scale undefined".into(),
                ));
            }
            Ok(d2.iter().map(|x| 1.0 - x / (rho * rho)).collect())
        }
    }
}

/// Sample mean and (unbiased) variance of a coupling set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingStats {
    pub mean: f64,
    pub nu2: f64,
    pub count: usize,
}

impl CouplingStats {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let count = samples.len();
        if count < 2 {
            return Err(Error::Size(format!("coupling statistics need >= 2 samples, got {count}")));
        }
        let mean = samples.iter().sum::<f64>() / count as f64;
        let nu2 = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
        Ok(CouplingStats { mean, nu2, count })
    }
}

/// `beta_N = J0 / nu^2`.
pub fn estimate_beta_moment(stats: &CouplingStats) -> Result<f64> {
    if !(stats.nu2 > 0.0) {
        return Err(Error::Degenerate(format!(
            "coupling variance is {}; moment estimator undefined",
            stats.nu2
        )));
    }
    Ok(stats.mean / stats.nu2)
}

/// Scan settings for [`estimate_beta_spectral_with`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BetaScan {
    pub beta_min: f64,
    pub beta_max: f64,
    /// Geometric step between scan points.
    pub factor: f64,
    /// A negative run counts as a transition only if `lambda_1` reaches
    /// `-depth_gate` somewhere on it.
    pub depth_gate: f64,
    /// `|mu|` below this does not decide a sign on its own.
    pub zero_band: f64,
    /// The scan stops after this many consecutive points without a
    /// reliable sign.
    pub unreliable_stop: usize,
}

impl Default for BetaScan {
    fn default() -> Self {
        BetaScan {
            beta_min: 0.01,
            beta_max: 50.0,
            factor: 1.1,
            depth_gate: 0.5,
            zero_band: 1e-12,
            unreliable_stop: 5,
        }
    }
}

/// Outcome of the spectral temperature search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralBeta {
    pub beta: f64,
    /// `lambda_1(H(beta))` at the returned root.
    pub lambda1: f64,
    /// Final bisection bracket.
    pub bracket: (f64, f64),
    /// Smallest `lambda_1` seen on the negative run.
    pub depth: f64,
    pub within_tol: bool,
    pub evaluations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Sign {
    Pos,
    Neg,
    Unknown,
}

struct Probe {
    sign: Sign,
    /// Best estimate of `lambda_1(H)`: the stable Rayleigh quotient.
    lambda1: f64,
}

/// With `quick`, a clearly positive point is settled from the eigenvalues
/// alone and reports `lambda1 = mu`.
fn probe(graph: &ImageGraph, couplings: &[f64], beta: f64, band: f64, quick: bool) -> Result<Probe> {
    let h = build_tanh_form(graph, couplings, beta)?;
    if quick {
        let mu = scaled_lowest_value(&h)?;
        if mu > band {
            return Ok(Probe {
                sign: Sign::Pos,
                lambda1: mu,
            });
        }
    }
    let low = scaled_lowest(&h)?;
    let sign = if low.mu > band {
        Sign::Pos
    } else if low.mu < -band || low.rayleigh < -low.rayleigh_error {
        // a negative Rayleigh quotient is a certificate on its own
        Sign::Neg
    } else if low.rayleigh > low.rayleigh_error {
        Sign::Pos
    } else {
        Sign::Unknown
    };
    Ok(Probe {
        sign,
        lambda1: low.rayleigh,
    })
}

/// [`estimate_beta_spectral_with`] under the default scan.
pub fn estimate_beta_spectral(graph: &ImageGraph, couplings: &[f64], tol: f64) -> Result<SpectralBeta> {
    estimate_beta_spectral_with(graph, couplings, tol, &BetaScan::default())
}

/// Temperature at which `lambda_1(H(beta, J))` climbs back through zero.
///
/// On a planted instance `lambda_1` dips below zero shortly above the
/// detectability onset and returns to zero near the Nishimori temperature.
/// The scan walks a geometric grid, groups negative points into runs (points
/// without a reliable sign do not break a run), keeps the deepest run and
/// bisects between its last negative point and the positive point closing
/// it.
///
/// Signs come from the Jacobi-scaled congruence of `H` and, where its
/// lowest eigenvalue is lost in rounding, from the Rayleigh quotient of the
/// back-transformed eigenvector (see [`crate::spectral::ScaledLowest`]).
pub fn estimate_beta_spectral_with(
    graph: &ImageGraph,
    couplings: &[f64],
    tol: f64,
    scan: &BetaScan,
) -> Result<SpectralBeta> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    if couplings.len() != graph.edge_count() {
        return Err(Error::Size(format!(
            "{} couplings for {} edges",
            couplings.len(),
            graph.edge_count()
        )));
    }
    check_connected(graph)?;

    let jmax = couplings.iter().fold(0.0f64, |m, j| m.max(j.abs()));
    if jmax == 0.0 {
        // H is the identity at every temperature.
        return Err(Error::NoTransition {
            beta_max: scan.beta_max,
            deepest: 1.0,
        });
    }
    let beta_cap = scan.beta_max.min(MAX_BETA_J / jmax);
    if scan.beta_min > beta_cap || !(scan.factor > 1.0) {
        return Err(Error::Domain(format!(
            "empty scan: beta_min {} cap {beta_cap} factor {}",
            scan.beta_min, scan.factor
        )));
    }

    let mut evaluations = 0;
    let mut grid = Vec::new();
    let mut points = Vec::new();
    let mut unknown_streak = 0;
    let mut beta = scan.beta_min;
    while beta <= beta_cap && unknown_streak < scan.unreliable_stop {
        let p = probe(graph, couplings, beta, scan.zero_band, true)?;
        evaluations += 1;
        unknown_streak = if p.sign == Sign::Unknown { unknown_streak + 1 } else { 0 };
        grid.push(beta);
        points.push(p);
        beta *= scan.factor;
    }

    // (last negative index, closing positive index, depth)
    let mut best: Option<(usize, Option<usize>, f64)> = None;
    let mut deepest_any = f64::INFINITY;
    let mut k = 0;
    while k < points.len() {
        if points[k].sign != Sign::Neg {
            k += 1;
            continue;
        }
        let mut depth = f64::INFINITY;
        let mut last_neg = k;
        while k < points.len() && points[k].sign != Sign::Pos {
            if points[k].sign == Sign::Neg {
                depth = depth.min(points[k].lambda1);
                last_neg = k;
            }
            k += 1;
        }
        let close = (k < points.len()).then_some(k);
        deepest_any = deepest_any.min(depth);
        if best.is_none_or(|(_, _, d)| depth < d) {
            best = Some((last_neg, close, depth));
        }
    }
    let Some((last_neg, close, depth)) = best.filter(|&(_, _, d)| d <= -scan.depth_gate) else {
        return Err(Error::NoTransition {
            beta_max: grid[grid.len() - 1],
            deepest: if deepest_any.is_finite() { deepest_any } else { 0.0 },
        });
    };
    let Some(close) = close else {
        return Err(Error::Unresolved {
            last_negative: grid[last_neg],
            deepest: depth,
        });
    };

    let (mut lo, mut hi) = (grid[last_neg], grid[close]);
    let mut best_root = (hi, f64::INFINITY);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let p = probe(graph, couplings, mid, scan.zero_band, false)?;
        evaluations += 1;
        if p.lambda1.abs() < best_root.1.abs() {
            best_root = (mid, p.lambda1);
        }
        if p.lambda1.abs() <= tol {
            break;
        }
        let negative = match p.sign {
            Sign::Neg => true,
            Sign::Pos => false,
            Sign::Unknown => p.lambda1 < 0.0,
        };
        if negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (beta, lambda1) = best_root;
    Ok(SpectralBeta {
        beta,
        lambda1,
        bracket: (lo, hi),
        depth,
        within_tol: lambda1.abs() <= tol,
        evaluations,
    })
}

/// The nodes that carry edges must form one component.
fn check_connected(graph: &ImageGraph) -> Result<()> {
    let (_, comp) = graph.components();
    let degrees = graph.degrees();
    let mut seen = None;
    for (node, &d) in degrees.iter().enumerate() {
        if d == 0 {
            continue;
        }
        match seen {
            None => seen = Some(comp[node]),
            Some(c) if c != comp[node] => {
                return Err(Error::Precondition(
                    "graph is disconnected on its non-isolated nodes".into(),
                ))
            }
            _ => {}
        }
    }
    Ok(())
}

/// `omega_e = tanh(beta J_e)`.
pub fn calibrate(couplings: &[f64], beta: f64) -> Result<Vec<f64>> {
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    Ok(couplings.iter().map(|j| (beta * j).tanh()).collect())
}

/// Image graph with raw and calibrated edge couplings.
#[derive(Clone, Debug, Serialize)]
pub struct CouplingGraph {
    pub graph: ImageGraph,
    pub j: Vec<f64>,
    pub omega: Vec<f64>,
    pub beta: f64,
}

impl CouplingGraph {
    pub fn new(graph: ImageGraph, j: Vec<f64>, beta: f64) -> Result<Self> {
        if j.len() != graph.edge_count() {
            return Err(Error::Size(format!(
                "{} couplings for {} edges",
                j.len(),
                graph.edge_count()
            )));
        }
        let omega = calibrate(&j, beta)?;
        Ok(CouplingGraph {
            graph,
            j,
            omega,
            beta,
        })
    }
}

/// `-s^T J s` with `J` symmetric: each edge contributes `-2 J_ij s_i s_j`.
pub fn hamiltonian(spins: &[i8], graph: &ImageGraph, couplings: &[f64]) -> Result<f64> {
    if spins.len() != graph.node_count() {
        return Err(Error::Size(format!(
            "{} spins for {} nodes",
            spins.len(),
            graph.node_count()
        )));
    }
    if couplings.len() != graph.edge_count() {
        return Err(Error::Size(format!(
            "{} couplings for {} edges",
            couplings.len(),
            graph.edge_count()
        )));
    }
    if let Some(s) = spins.iter().find(|&&s| s != 1 && s != -1) {
        return Err(Error::Domain(format!("spin value {s} is not +-1")));
    }
    Ok(graph
        .edges()
        .iter()
        .zip(couplings)
        .map(|(&(u, v), j)| -2.0 * j * f64::from(spins[u]) * f64::from(spins[v]))
        .sum())
}

pub const SYMMETRY_BINS: usize = 64;

/// Distance of `q(x) = p(x) e^{-beta x}` from an even function.
///
/// `p` is a 64-bin histogram over `[-max|x|, max|x|]`; the result is
/// `sum_b |q(b) - q(-b)| / sum_b |q(b)|`.
pub fn nishimori_symmetry_residual(samples: &[f64], beta: f64) -> Result<f64> {
    if samples.len() < 100 {
        return Err(Error::Size(format!(
            "symmetry residual needs >= 100 samples, got {}",
            samples.len()
        )));
    }
    if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("non-finite sample {x}")));
    }
    let m = samples.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if m == 0.0 {
        return Ok(0.0);
    }
    let width = 2.0 * m / SYMMETRY_BINS as f64;
    let mut counts = [0usize; SYMMETRY_BINS];
    for &x in samples {
        let b = (((x + m) / width).floor() as usize).min(SYMMETRY_BINS - 1);
        counts[b] += 1;
    }
    let q: Vec<f64> = counts
        .iter()
        .enumerate()
        .map(|(b, &c)| {
            let center = -m + (b as f64 + 0.5) * width;
            c as f64 * (-beta * center).exp()
        })
        .collect();
    let num: f64 = (0..SYMMETRY_BINS)
        .map(|b| (q[b] - q[SYMMETRY_BINS - 1 - b]).abs())
        .sum();
    let den: f64 = q.iter().map(|x| x.abs()).sum();
    Ok(num / den)
}

/// Sample mean of `tanh(beta J) / (1 - tanh^2(beta J)) = sinh(beta J) cosh(beta J)`.
pub fn expected_bethe_factor(samples: &[f64], beta: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Size("expected Bethe factor needs >= 1 sample".into()));
    }
    let mut total = 0.0;
    for &j in samples {
        let x = beta * j;
        if !(x.abs() <= MAX_BETA_J) {
            return Err(Error::Range {
                value: x.abs(),
                limit: MAX_BETA_J,
            });
        }
        total += x.sinh() * x.cosh();
    }
    Ok(total / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn gaussian(mean: f64, var: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(mean, var.sqrt()).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    fn single_edge() -> ImageGraph {
        ImageGraph::from_edges(2, [(0, 1)]).unwrap()
    }

    fn triangle() -> ImageGraph {
        ImageGraph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let g = single_edge();
        let j = |a: Vec<f64>, b: Vec<f64>| assign_couplings(&g, &[a, b], Similarity::Cosine).unwrap()[0];
        assert!((j(vec![0.3, 0.4], vec![0.3, 0.4]) - 1.0).abs() < 1e-15);
        assert_eq!(j(vec![1.0, 0.0], vec![0.0, 2.0]), 0.0);
        assert_eq!(j(vec![1.0, 0.0], vec![-1.0, 0.0]), -1.0);
        assert!(matches!(
            assign_couplings(&g, &[vec![0.0, 0.0], vec![1.0, 0.0]], Similarity::Cosine),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            assign_couplings(&g, &[vec![1.0]], Similarity::Cosine),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn neg_euclidean_maps_median_pair_to_zero() {
        let g = ImageGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let z = vec![vec![0.0], vec![1.0], vec![3.0], vec![6.0]];
        let j = assign_couplings(&g, &z, Similarity::NegEuclidean).unwrap();
        // distances 1, 2, 3; rho = 2
        assert_eq!(j, vec![0.75, 0.0, 1.0 - 9.0 / 4.0]);
        assert!(j.iter().all(|&x| x <= 1.0));
    }

    #[test]
    fn moment_examples() {
        let s = |mean, nu2| CouplingStats { mean, nu2, count: 10 };
        assert_eq!(estimate_beta_moment(&s(1.0, 1.0)).unwrap(), 1.0);
        assert_eq!(estimate_beta_moment(&s(2.0, 1.0)).unwrap(), 2.0);
        assert!(matches!(estimate_beta_moment(&s(2.0, 0.0)), Err(Error::Degenerate(_))));
        assert!(matches!(CouplingStats::from_samples(&[1.0]), Err(Error::Size(_))));
    }

    #[test]
    fn moment_estimator_on_gaussian_samples() {
        // Average over seeds; each estimate also sits inside the band.
        let mut sum = 0.0;
        for seed in 0..5 {
            let b = estimate_beta_moment(
                &CouplingStats::from_samples(&gaussian(0.5, 0.25, 100_000, seed)).unwrap(),
            )
            .unwrap();
            assert!((b - 2.0).abs() <= 0.05, "seed {seed}: {b}");
            sum += b;
        }
        assert!((sum / 5.0 - 2.0).abs() / 2.0 <= 0.05);
    }

    #[test]
    fn calibrate_examples() {
        assert_eq!(calibrate(&[0.0], 1.0).unwrap(), vec![0.0]);
        let w = calibrate(&[0.5, -0.5], 1.0).unwrap();
        assert!((w[0] - 0.46212).abs() < 1e-5);
        assert_eq!(w[1], -w[0]);
        assert!(matches!(calibrate(&[0.5], 0.0), Err(Error::Domain(_))));
        assert!(calibrate(&[40.0], 10.0).unwrap()[0] <= 1.0);
    }

    #[test]
    fn coupling_graph_matches_tanh() {
        let cg = CouplingGraph::new(triangle(), vec![0.2, -1.0, 0.7], 1.3).unwrap();
        for (j, w) in cg.j.iter().zip(&cg.omega) {
            assert!((w - (1.3 * j).tanh()).abs() <= 1e-12);
        }
        assert!(CouplingGraph::new(triangle(), vec![0.2], 1.0).is_err());
    }

    #[test]
    fn hamiltonian_examples() {
        let g = single_edge();
        assert_eq!(hamiltonian(&[1, 1], &g, &[1.0]).unwrap(), -2.0);
        assert_eq!(hamiltonian(&[1, -1], &g, &[1.0]).unwrap(), 2.0);
        assert_eq!(hamiltonian(&[1, 1, 1], &triangle(), &[1.0; 3]).unwrap(), -6.0);
        assert!(matches!(hamiltonian(&[1, 0], &g, &[1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn symmetry_residual_examples() {
        let x = gaussian(0.5, 0.25, 100_000, 11);
        let at_nishimori = nishimori_symmetry_residual(&x, 2.0).unwrap();
        assert!(at_nishimori <= 0.05, "{at_nishimori}");
        let at_zero = nishimori_symmetry_residual(&x, 0.0).unwrap();
        assert!(at_zero >= 0.3, "{at_zero}");

        let sym: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 0.7 } else { -0.7 }).collect();
        assert_eq!(nishimori_symmetry_residual(&sym, 0.0).unwrap(), 0.0);

        assert!(matches!(nishimori_symmetry_residual(&x[..99], 2.0), Err(Error::Size(_))));
    }

    #[test]
    fn symmetry_residual_minimised_at_nishimori_beta() {
        let x = gaussian(0.5, 0.25, 100_000, 12);
        let grid: Vec<f64> = (0..=40).map(|i| 0.1 * i as f64).collect();
        let best = grid
            .iter()
            .copied()
            .min_by(|&a, &b| {
                let ra = nishimori_symmetry_residual(&x, a).unwrap();
                let rb = nishimori_symmetry_residual(&x, b).unwrap();
                ra.total_cmp(&rb)
            })
            .unwrap();
        assert!((best - 2.0).abs() <= 0.15, "{best}");
    }

    #[test]
    fn bethe_factor_examples() {
        assert_eq!(expected_bethe_factor(&[0.0, 0.0], 3.0).unwrap(), 0.0);
        let v = expected_bethe_factor(&[0.5], 2.0).unwrap();
        assert!((v - 1.81343).abs() < 1e-5);
        let t = 1f64.tanh();
        assert!((v - t / (1.0 - t * t)).abs() < 1e-12);
        assert!(matches!(expected_bethe_factor(&[1.0], 301.0), Err(Error::Range { .. })));
        assert!(matches!(expected_bethe_factor(&[], 1.0), Err(Error::Size(_))));

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pm: Vec<f64> = (0..100_000)
            .map(|_| if rand::Rng::random_bool(&mut rng, 0.5) { 1.0 } else { -1.0 })
            .collect();
        let m = expected_bethe_factor(&pm, 1.0).unwrap();
        // per-sample magnitude sinh(1)cosh(1) ~ 1.81, sd of the mean ~ 0.006
        assert!(m.abs() < 0.03, "{m}");
    }

    #[test]
    fn spectral_zero_couplings_is_no_transition() {
        let g = triangle();
        assert!(matches!(
            estimate_beta_spectral(&g, &[0.0; 3], 1e-6),
            Err(Error::NoTransition { .. })
        ));
    }

    #[test]
    fn spectral_rejects_disconnected_graph() {
        let g = ImageGraph::from_edges(5, [(0, 1), (2, 3)]).unwrap();
        assert!(matches!(
            estimate_beta_spectral(&g, &[1.0, 1.0], 1e-6),
            Err(Error::Precondition(_))
        ));
    }
}
