//! End-to-end detection: features in, real/synthetic verdict out.
//!
//! Pipeline order: labels (given or two-means), top-k selection, projection
//! to 32 dimensions, QC graph lift and projection, node assignment,
//! couplings, Nishimori temperature, calibration, the deformed Laplacian
//! `H_r` at the default `r`, its lowest eigenvalues and their gaps, then the
//! threshold decision.
//!
//! The projection needs `beta_N` before it has been estimated. Cosine and
//! median-scaled Euclidean couplings do not depend on a global rescaling of
//! the embedding, so couplings are computed from the `beta = 1` projection
//! and the audited embedding is re-projected at the estimated temperature.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::features::{
    assign_nodes, project, pseudo_label, top_k_select, Embedding, FeatureMatrix, NodeOrder,
};
use crate::qc_graph::{lift, project_to_image_graph, random_toroidal, ExponentMatrix, ImageGraph};
use crate::rbim::{
    assign_couplings, calibrate, estimate_beta_moment, estimate_beta_spectral, CouplingStats,
    Similarity, SpectralBeta,
};
use crate::spectral::{build_r_form, bulk_median, default_r, eigenvalues, gap_report, GapReport, Spectrum};
use crate::{Error, Result};

/// Shape of the default protograph.
pub const DEFAULT_ROWS: usize = 3;
pub const DEFAULT_COLS: usize = 6;
/// Smallest lifting size used for the default protograph.
pub const DEFAULT_MIN_LIFT: usize = 13;
const DEFAULT_GIRTH: usize = 6;
const DEFAULT_TRIES: usize = 1000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaMode {
    Moment,
    #[default]
    Spectral,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Statistic {
    /// `lambda_2 - lambda_1`.
    #[default]
    Delta1,
    /// Largest of the first ten gaps.
    MaxGap10,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExponentSource {
    /// Seeded random girth-6 `3 x 6` protograph lifted to fit `N`.
    Default,
    Given(ExponentMatrix),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Threshold {
    Explicit(f64),
    /// Primary gaps of known-real reference sets.
    Calibrate(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub k: usize,
    pub seed: u64,
    pub similarity: Similarity,
    pub exponent: ExponentSource,
    pub beta_mode: BetaMode,
    pub eig_count: usize,
    pub threshold: Threshold,
    pub statistic: Statistic,
    pub node_order: NodeOrder,
    /// `|lambda_1|` tolerance of the spectral temperature search.
    pub beta_tol: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            k: 32,
            seed: 0,
            similarity: Similarity::Cosine,
            exponent: ExponentSource::Default,
            beta_mode: BetaMode::Spectral,
            eig_count: 100,
            threshold: Threshold::Explicit(1.0),
            statistic: Statistic::Delta1,
            node_order: NodeOrder::Order,
            beta_tol: 1e-6,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if self.eig_count < 2 {
            return Err(Error::Config("eigenvalue count must be >= 2".into()));
        }
        match &self.threshold {
            Threshold::Explicit(t) if !(*t > 0.0) => {
                Err(Error::Config(format!("explicit threshold must be > 0, got {t}")))
            }
            Threshold::Calibrate(g) if g.is_empty() => {
                Err(Error::Config("threshold calibration needs reference gaps".into()))
            }
            _ if !(self.beta_tol > 0.0) => Err(Error::Config("beta tolerance must be > 0".into())),
            _ => Ok(()),
        }
    }

    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serialises").as_bytes())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Synthetic,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "real",
            Label::Synthetic => "synthetic",
        })
    }
}

/// How the temperature was obtained.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BetaOutcome {
    Moment { beta: f64, stats: CouplingStats },
    Spectral(SpectralBeta),
    /// `lambda_1` went deeply negative and stayed there; the last negative
    /// scan point is used.
    Unresolved { beta: f64, deepest: f64 },
    NoTransition { reason: String },
}

impl BetaOutcome {
    pub fn beta(&self) -> Option<f64> {
        match self {
            BetaOutcome::Moment { beta, .. } | BetaOutcome::Unresolved { beta, .. } => Some(*beta),
            BetaOutcome::Spectral(s) => Some(s.beta),
            BetaOutcome::NoTransition { .. } => None,
        }
    }
}

/// Every intermediate artifact of one pipeline run.
#[derive(Clone, Debug, Serialize)]
pub struct Analysis {
    pub n: usize,
    pub labels: Vec<u8>,
    pub pseudo_labelled: bool,
    pub selected: Vec<usize>,
    pub exponent: ExponentMatrix,
    pub graph: ImageGraph,
    /// `perm[node] = sample`.
    pub permutation: Vec<usize>,
    pub couplings: Vec<f64>,
    pub beta: BetaOutcome,
    /// Projection at the estimated temperature (at `beta = 1` when none).
    pub embedding: Embedding,
    pub omega: Vec<f64>,
    pub r: Option<f64>,
    pub spectrum: Option<Spectrum>,
    pub gaps: Option<GapReport>,
    /// Decision statistic; zero when no transition was found.
    pub statistic: f64,
    /// `Delta_1 / median(Delta_2..)`.
    pub gap_ratio: f64,
    pub flagged: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub label: Label,
    pub delta: f64,
    pub statistic: Statistic,
    pub gaps: Vec<f64>,
    pub k_star: Option<usize>,
    pub max_gap_10: f64,
    pub gap_ratio: f64,
    pub beta: Option<f64>,
    pub r: Option<f64>,
    pub threshold: f64,
    pub threshold_degenerate: bool,
    pub flagged: Option<String>,
    pub config: DetectionConfig,
    pub config_digest: String,
    pub input_digests: BTreeMap<String, String>,
}

/// Default exponent matrix for `n` images.
pub fn default_exponent(n: usize, seed: u64) -> Result<ExponentMatrix> {
    let lift = n.div_ceil(DEFAULT_COLS).max(DEFAULT_MIN_LIFT);
    random_toroidal(DEFAULT_ROWS, DEFAULT_COLS, lift, DEFAULT_GIRTH, seed, DEFAULT_TRIES)
}

/// Steps up to and including the gap report.
pub fn analyze(features: &FeatureMatrix, config: &DetectionConfig) -> Result<Analysis> {
    config.validate()?;
    let n = features.n();
    if n < 4 {
        return Err(Error::Precondition(format!("detection needs N >= 4 samples, got {n}")));
    }
    if config.k > features.d() {
        return Err(Error::Config(format!(
            "k = {} exceeds feature dimension {}",
            config.k,
            features.d()
        )));
    }

    let (labelled, pseudo_labelled) = match features.labels() {
        Some(_) => (features.clone(), false),
        None => (features.clone().with_labels(pseudo_label(features)?)?, true),
    };
    let labels = labelled.labels().expect("labels attached").to_vec();
    let selected = top_k_select(&labelled, config.k)?;

    let exponent = match &config.exponent {
        ExponentSource::Default => default_exponent(n, config.seed)?,
        ExponentSource::Given(e) => e.clone(),
    };
    let graph = project_to_image_graph(&lift(&exponent), n)?;

    let unit = project(features, &selected, 1.0, config.seed)?;
    let permutation = assign_nodes(&unit, &graph, config.node_order)?;
    let node_vectors: Vec<Vec<f64>> = permutation.iter().map(|&s| unit.vectors[s].clone()).collect();
    let couplings = assign_couplings(&graph, &node_vectors, config.similarity)?;

    let mut flagged = None;
    let beta = match config.beta_mode {
        BetaMode::Moment => {
            let stats = CouplingStats::from_samples(&couplings)?;
            match estimate_beta_moment(&stats) {
                Ok(b) if b > 0.0 => BetaOutcome::Moment { beta: b, stats },
                Ok(b) => BetaOutcome::NoTransition {
                    reason: format!("moment estimate {b} is not positive"),
                },
                Err(e) => BetaOutcome::NoTransition { reason: e.to_string() },
            }
        }
        BetaMode::Spectral => match estimate_beta_spectral(&graph, &couplings, config.beta_tol) {
            Ok(s) => BetaOutcome::Spectral(s),
            Err(e @ Error::NoTransition { .. }) => BetaOutcome::NoTransition { reason: e.to_string() },
            Err(Error::Unresolved { last_negative, deepest }) => {
                flagged = Some(format!(
                    "lambda1 stays negative past beta = {last_negative}; using that temperature"
                ));
                BetaOutcome::Unresolved {
                    beta: last_negative,
                    deepest,
                }
            }
            Err(e) => return Err(e),
        },
    };

    let Some(b) = beta.beta() else {
        if let BetaOutcome::NoTransition { reason } = &beta {
            flagged = Some(format!("no transition: {reason}"));
        }
        return Ok(Analysis {
            n,
            labels,
            pseudo_labelled,
            selected,
            exponent,
            graph,
            permutation,
            couplings,
            beta,
            embedding: unit,
            omega: Vec::new(),
            r: None,
            spectrum: None,
            gaps: None,
            statistic: 0.0,
            gap_ratio: 0.0,
            flagged,
        });
    };

    let embedding = project(features, &selected, b, config.seed)?;
    let CouplingSpectrum {
        omega,
        r,
        spectrum,
        gaps,
        gap_ratio,
    } = coupling_spectrum(&graph, &couplings, b, config.eig_count)?;
    let statistic = match config.statistic {
        Statistic::Delta1 => gaps.delta,
        Statistic::MaxGap10 => gaps.max_gap_10,
    };
    Ok(Analysis {
        n,
        labels,
        pseudo_labelled,
        selected,
        exponent,
        graph,
        permutation,
        couplings,
        beta,
        embedding,
        omega,
        r: Some(r),
        spectrum: Some(spectrum),
        gaps: Some(gaps),
        statistic,
        gap_ratio,
        flagged,
    })
}

/// Low spectrum of `H_r` for couplings calibrated at `beta`.
#[derive(Clone, Debug)]
pub struct CouplingSpectrum {
    pub omega: Vec<f64>,
    pub r: f64,
    pub spectrum: Spectrum,
    pub gaps: GapReport,
    /// `Delta_1 / median(bulk gaps)`.
    pub gap_ratio: f64,
}

/// Calibrate `couplings` at `beta`, build `H_r` at the default `r` and take
/// its `count` lowest eigenvalues.
pub fn coupling_spectrum(graph: &ImageGraph, couplings: &[f64], beta: f64, count: usize) -> Result<CouplingSpectrum> {
    let omega = calibrate(couplings, beta)?;
    let r = default_r(graph, &omega)?;
    let h = build_r_form(graph, &omega, r)?;
    let spectrum = eigenvalues(&h, count)?;
    let gaps = gap_report(&spectrum)?;
    let bulk = bulk_median(&gaps.gaps);
    let gap_ratio = if bulk > 0.0 { gaps.delta / bulk } else { f64::INFINITY };
    Ok(CouplingSpectrum {
        omega,
        r,
        spectrum,
        gaps,
        gap_ratio,
    })
}

/// `tau = 0.5 * median(reference gaps)`; the flag marks an all-zero
/// reference set.
pub fn calibrate_threshold(reference_gaps: &[f64]) -> Result<(f64, bool)> {
    if reference_gaps.is_empty() {
        return Err(Error::Precondition("threshold calibration needs >= 1 reference gap".into()));
    }
    if let Some(g) = reference_gaps.iter().find(|g| !g.is_finite() || **g < 0.0) {
        return Err(Error::Domain(format!("reference gap {g} is not a finite non-negative value")));
    }
    let tau = 0.5 * crate::spectral::median(reference_gaps);
    Ok((tau, reference_gaps.iter().all(|&g| g == 0.0)))
}

/// Real iff `delta >= tau`.
pub fn decide(delta: f64, tau: f64) -> Result<Label> {
    if !(tau >= 0.0) {
        return Err(Error::Domain(format!("threshold must be >= 0, got {tau}")));
    }
    Ok(if delta >= tau { Label::Real } else { Label::Synthetic })
}

/// Digest of the canonical text form of a feature matrix (labels included).
pub fn features_digest(features: &FeatureMatrix) -> String {
    let mut text = features.to_text();
    if let Some(l) = features.labels() {
        text.push_str(&crate::features::labels_to_text(l));
    }
    sha256_hex(text.as_bytes())
}

/// Full pipeline and decision.
pub fn run_pipeline(features: &FeatureMatrix, config: &DetectionConfig) -> Result<(Verdict, Analysis)> {
    config.validate()?;
    let (threshold, threshold_degenerate) = match &config.threshold {
        Threshold::Explicit(t) => (*t, false),
        Threshold::Calibrate(g) => calibrate_threshold(g)?,
    };
    let analysis = analyze(features, config)?;
    let label = if analysis.spectrum.is_none() {
        Label::Synthetic
    } else {
        decide(analysis.statistic, threshold)?
    };
    let mut input_digests = BTreeMap::new();
    input_digests.insert("features".to_string(), features_digest(features));
    let gaps = analysis.gaps.as_ref();
    let verdict = Verdict {
        label,
        delta: analysis.statistic,
        statistic: config.statistic,
        gaps: gaps.map(|g| g.gaps.clone()).unwrap_or_default(),
        k_star: gaps.map(|g| g.k_star),
        max_gap_10: gaps.map_or(0.0, |g| g.max_gap_10),
        gap_ratio: analysis.gap_ratio,
        beta: analysis.beta.beta(),
        r: analysis.r,
        threshold,
        threshold_degenerate,
        flagged: analysis.flagged.clone(),
        config: config.clone(),
        config_digest: config.digest(),
        input_digests,
    };
    Ok((verdict, analysis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planted::generate_feature_surrogate;

    #[test]
    fn threshold_examples() {
        assert_eq!(calibrate_threshold(&[6.0]).unwrap(), (3.0, false));
        assert_eq!(calibrate_threshold(&[4.0, 6.0, 10.0]).unwrap(), (3.0, false));
        assert_eq!(calibrate_threshold(&[0.0, 0.0]).unwrap(), (0.0, true));
        assert!(matches!(calibrate_threshold(&[]), Err(Error::Precondition(_))));
    }

    #[test]
    fn decide_examples() {
        assert_eq!(decide(6.0, 3.0).unwrap(), Label::Real);
        assert_eq!(decide(0.1, 3.0).unwrap(), Label::Synthetic);
        assert_eq!(decide(3.0, 3.0).unwrap(), Label::Real);
        assert_eq!(decide(1e-9, 0.0).unwrap(), Label::Real);
        assert!(decide(1.0, -1.0).is_err());
    }

    #[test]
    fn decide_is_monotone() {
        let tau = 2.5;
        let mut last = Label::Synthetic;
        for i in 0..100 {
            let l = decide(i as f64 * 0.1, tau).unwrap();
            assert!(!(last == Label::Real && l == Label::Synthetic));
            last = l;
        }
    }

    #[test]
    fn small_inputs_are_rejected() {
        let fm = FeatureMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]], None).unwrap();
        let cfg = DetectionConfig {
            k: 2,
            ..DetectionConfig::default()
        };
        assert!(matches!(run_pipeline(&fm, &cfg), Err(Error::Precondition(_))));
    }

    #[test]
    fn config_validation() {
        let bad = DetectionConfig {
            eig_count: 1,
            ..DetectionConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = DetectionConfig {
            threshold: Threshold::Explicit(0.0),
            ..DetectionConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let fm = generate_feature_surrogate(20, 4, 1.0, 0).unwrap();
        assert!(matches!(
            analyze(&fm, &DetectionConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn default_exponent_has_girth_six_and_fits() {
        for n in [4, 40, 200, 384] {
            let e = default_exponent(n, 3).unwrap();
            assert!(e.var_count() >= n);
            assert!(!crate::qc_graph::has_cycle_within(&e, 4));
        }
    }
}
