//! Command-line surface: `detect`, `spectrum`, `graph`, `plant` and
//! `extract-check`.
//!
//! Exit status: `0` for success (and a `real` verdict), `1` for a `synthetic`
//! verdict, `2` for any error. Every JSON record echoes the effective
//! arguments and the digests of the files that were read.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Serialize;

use crate::detect::{
    analyze, run_pipeline, BetaMode, DetectionConfig, ExponentSource, Label, Statistic, Threshold,
};
use crate::digest::{file_digest, sha256_hex};
use crate::features::{read_labels, FeatureMatrix, NodeOrder};
use crate::planted::{generate_feature_surrogate, generate_planted};
use crate::qc_graph::{
    girth_by_bfs, girth_by_block_cycles, lift, project_to_image_graph, random_toroidal, ExponentMatrix,
    Girth, ImageGraph,
};
use crate::rbim::{calibrate, estimate_beta_spectral, Similarity};
use crate::spectral::{build_r_form, build_tanh_form, default_r, eigenvalues, gap_report, GapReport, Spectrum};
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "qcrbim", version, about = "Spectral real/synthetic detection on QC-LDPC graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the detection pipeline on a feature file.
    Detect(DetectArgs),
    /// Lowest eigenvalues of a Bethe-Hessian as a two-column table.
    Spectrum(SpectrumArgs),
    /// Diagnostics of an exponent matrix and its lift.
    Graph(GraphArgs),
    /// Write a planted instance with its ground truth.
    Plant(PlantArgs),
    /// Validate a feature file and print its shape and digest.
    ExtractCheck(ExtractCheckArgs),
}

/// Flags shared by every command that runs the pipeline.
#[derive(Args, Debug, Serialize)]
pub struct PipelineArgs {
    /// Number of selected features.
    #[arg(long, default_value_t = 32)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// cosine | neg-euclidean
    #[arg(long, default_value = "cosine", value_parser = parse_similarity)]
    #[serde(serialize_with = "display")]
    pub similarity: Similarity,
    /// Exponent-matrix file; a seeded default is used when absent.
    #[arg(long)]
    pub exponent: Option<PathBuf>,
    #[arg(long, default_value = "spectral", value_parser = ["spectral", "moment"])]
    pub beta_mode: String,
    #[arg(long, default_value_t = 100)]
    pub eig_count: usize,
    #[arg(long, default_value = "delta1", value_parser = ["delta1", "max-gap-10"])]
    pub statistic: String,
    #[arg(long, default_value = "order", value_parser = ["order", "sorted"])]
    pub node_order: String,
    /// `|lambda_1|` tolerance of the temperature search.
    #[arg(long, default_value_t = 1e-6)]
    pub beta_tol: f64,
}

fn parse_similarity(s: &str) -> std::result::Result<Similarity, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

impl PipelineArgs {
    fn config(&self, threshold: Threshold) -> Result<DetectionConfig> {
        let exponent = match &self.exponent {
            Some(p) => ExponentSource::Given(read_exponent(p)?),
            None => ExponentSource::Default,
        };
        let config = DetectionConfig {
            k: self.k,
            seed: self.seed,
            similarity: self.similarity,
            exponent,
            beta_mode: if self.beta_mode == "moment" { BetaMode::Moment } else { BetaMode::Spectral },
            eig_count: self.eig_count,
            threshold,
            statistic: if self.statistic == "max-gap-10" { Statistic::MaxGap10 } else { Statistic::Delta1 },
            node_order: if self.node_order == "sorted" { NodeOrder::Sorted } else { NodeOrder::Order },
            beta_tol: self.beta_tol,
        };
        config.validate()?;
        Ok(config)
    }

    fn digests(&self, into: &mut BTreeMap<String, String>) -> Result<()> {
        if let Some(p) = &self.exponent {
            into.insert(p.display().to_string(), file_digest(p)?);
        }
        Ok(())
    }
}

#[derive(Args, Debug, Serialize)]
#[command(group(ArgGroup::new("tau").required(true).args(["threshold", "reference", "reference_gap"])))]
pub struct DetectArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// 0/1 labels, one per line; two-means pseudo-labels when absent.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Explicit decision threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Feature file of a known-real set; the threshold is half the median of
    /// their statistics. Repeatable.
    #[arg(long)]
    pub reference: Vec<PathBuf>,
    /// Statistic of a known-real set, used like `--reference`. Repeatable.
    #[arg(long)]
    pub reference_gap: Vec<f64>,
    /// Path of the JSON verdict record.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[command(group(ArgGroup::new("source").required(true).args(["features", "nodes"])))]
pub struct SpectrumArgs {
    /// Feature file; the graph and couplings come from the pipeline.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, requires = "features")]
    pub labels: Option<PathBuf>,
    /// Planted instance on this many nodes of the `--exponent` lift.
    #[arg(long, requires = "exponent")]
    pub nodes: Option<usize>,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub j0: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub nu2: f64,
    /// r | tanh
    #[arg(long, default_value = "r", value_parser = ["r", "tanh"])]
    pub form: String,
    /// Unit edge weights instead of calibrated couplings (r form).
    #[arg(long)]
    pub binary: bool,
    /// Deformation parameter of the r form; the default is derived from the
    /// weights.
    #[arg(long)]
    pub r: Option<f64>,
    /// Inverse temperature; estimated when absent and needed.
    #[arg(long)]
    pub beta: Option<f64>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct GraphArgs {
    #[arg(long)]
    pub exponent: PathBuf,
    /// Project onto the first `nodes` variable nodes (all by default).
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct PlantArgs {
    /// Exponent-matrix file; a random girth-constrained toroidal matrix is
    /// drawn when absent.
    #[arg(long)]
    pub exponent: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub rows: usize,
    #[arg(long, default_value_t = 6)]
    pub cols: usize,
    #[arg(long, default_value_t = 64)]
    pub lift: usize,
    #[arg(long, default_value_t = 6)]
    pub min_girth: usize,
    /// Node count; all variable nodes by default.
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub j0: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub nu2: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write a two-blob feature surrogate with this separation.
    #[arg(long, allow_negative_numbers = true)]
    pub separation: Option<f64>,
    /// Feature dimension of the surrogate.
    #[arg(long, default_value_t = 1280)]
    pub dim: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct ExtractCheckArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Required feature dimension.
    #[arg(long)]
    pub expect_dim: Option<usize>,
}

/// Parse `args` (program name first), run, and return the exit status.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Detect(a) => cmd_detect(a),
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Graph(a) => cmd_graph(a),
        Command::Plant(a) => cmd_plant(a),
        Command::ExtractCheck(a) => cmd_extract_check(a),
    }
}

fn read_exponent(path: &Path) -> Result<ExponentMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExponentMatrix::parse(&text).map_err(|e| e.with_source(path.display().to_string()))
}

fn read_features(path: &Path, labels: Option<&Path>) -> Result<FeatureMatrix> {
    let fm = FeatureMatrix::read(path)?;
    match labels {
        Some(l) => {
            let labels = read_labels(l, fm.n())?;
            fm.with_labels(labels)
        }
        None => Ok(fm),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_record<T: Serialize>(path: Option<&Path>, record: &T) -> Result<()> {
    if let Some(p) = path {
        let mut text = serde_json::to_string_pretty(record).expect("record serialises");
        text.push('\n');
        write_file(p, &text)?;
    }
    Ok(())
}

fn warn_clamp(requested: usize, n: usize) {
    if requested > n {
        eprintln!("warning: eigenvalue count {requested} exceeds N = {n}; reporting {n}");
    }
}

#[derive(Serialize)]
struct DetectRecord<'a> {
    command: &'static str,
    args: &'a DetectArgs,
    #[serde(flatten)]
    verdict: crate::detect::Verdict,
    reference_statistics: Vec<f64>,
    file_digests: BTreeMap<String, String>,
}

fn cmd_detect(a: &DetectArgs) -> Result<i32> {
    // Argument and config errors surface before any file is analysed.
    let probe = a.pipeline.config(Threshold::Explicit(a.threshold.unwrap_or(1.0)))?;
    if !a.reference_gap.is_empty() {
        crate::detect::calibrate_threshold(&a.reference_gap)?;
    }
    let features = read_features(&a.features, a.labels.as_deref())?;
    let mut file_digests = BTreeMap::new();
    file_digests.insert(a.features.display().to_string(), file_digest(&a.features)?);
    if let Some(l) = &a.labels {
        file_digests.insert(l.display().to_string(), file_digest(l)?);
    }
    a.pipeline.digests(&mut file_digests)?;

    let mut reference_statistics = a.reference_gap.clone();
    for path in &a.reference {
        let fm = FeatureMatrix::read(path)?;
        file_digests.insert(path.display().to_string(), file_digest(path)?);
        reference_statistics.push(analyze(&fm, &probe)?.statistic);
    }
    let config = match a.threshold {
        Some(_) => probe,
        None => DetectionConfig {
            threshold: Threshold::Calibrate(reference_statistics.clone()),
            ..probe
        },
    };
    warn_clamp(config.eig_count, features.n());
    let (verdict, _) = run_pipeline(&features, &config)?;
    println!(
        "{} delta={} threshold={}{}",
        verdict.label,
        verdict.delta,
        verdict.threshold,
        verdict.flagged.as_deref().map(|f| format!(" ({f})")).unwrap_or_default()
    );
    let code = match verdict.label {
        Label::Real => 0,
        Label::Synthetic => 1,
    };
    write_record(
        a.out.as_deref(),
        &DetectRecord {
            command: "detect",
            args: a,
            verdict,
            reference_statistics,
            file_digests,
        },
    )?;
    Ok(code)
}

#[derive(Serialize)]
struct SpectrumRecord<'a> {
    command: &'static str,
    args: &'a SpectrumArgs,
    nodes: usize,
    edges: usize,
    beta: Option<f64>,
    r: Option<f64>,
    spectrum: Spectrum,
    gap_report: GapReport,
    file_digests: BTreeMap<String, String>,
}

fn cmd_spectrum(a: &SpectrumArgs) -> Result<i32> {
    let mut file_digests = BTreeMap::new();
    a.pipeline.digests(&mut file_digests)?;
    let (graph, couplings, estimated): (ImageGraph, Vec<f64>, Option<f64>) = match (&a.features, a.nodes) {
        (Some(path), _) => {
            let config = a.pipeline.config(Threshold::Explicit(1.0))?;
            let features = read_features(path, a.labels.as_deref())?;
            file_digests.insert(path.display().to_string(), file_digest(path)?);
            if let Some(l) = &a.labels {
                file_digests.insert(l.display().to_string(), file_digest(l)?);
            }
            let analysis = analyze(&features, &config)?;
            let beta = analysis.beta.beta();
            (analysis.graph, analysis.couplings, beta)
        }
        (None, Some(nodes)) => {
            let path = a.pipeline.exponent.as_ref().expect("clap requires --exponent");
            let exponent = read_exponent(path)?;
            let p = generate_planted(&exponent, nodes, a.j0, a.nu2, a.pipeline.seed)?;
            (p.graph, p.couplings, None)
        }
        (None, None) => unreachable!("clap requires a source"),
    };

    let needs_beta = a.form == "tanh" || !a.binary;
    let beta = match (a.beta, needs_beta) {
        (Some(b), _) => Some(b),
        (None, false) => None,
        (None, true) => Some(match estimated {
            Some(b) => b,
            None => estimate_beta_spectral(&graph, &couplings, a.pipeline.beta_tol)?.beta,
        }),
    };
    let (h, r) = if a.form == "tanh" {
        let b = beta.expect("tanh form has a temperature");
        (build_tanh_form(&graph, &couplings, b)?, None)
    } else {
        let omega = match beta {
            Some(b) if !a.binary => calibrate(&couplings, b)?,
            _ => vec![1.0; graph.edge_count()],
        };
        let r = match a.r {
            Some(r) => r,
            None => default_r(&graph, &omega)?,
        };
        (build_r_form(&graph, &omega, r)?, Some(r))
    };
    warn_clamp(a.pipeline.eig_count, h.size());
    let spectrum = eigenvalues(&h, a.pipeline.eig_count)?;
    let gaps = gap_report(&spectrum)?;
    print!("{}", spectrum.table());
    write_record(
        a.out.as_deref(),
        &SpectrumRecord {
            command: "spectrum",
            args: a,
            nodes: graph.node_count(),
            edges: graph.edge_count(),
            beta,
            r,
            spectrum,
            gap_report: gaps,
            file_digests,
        },
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct GirthRecord {
    block_cycles: String,
    bfs: String,
}

#[derive(Serialize)]
struct ProjectionRecord {
    nodes: usize,
    edges: usize,
    components: usize,
    /// `(degree, count)` pairs.
    degree_histogram: Vec<(usize, usize)>,
}

#[derive(Serialize)]
struct GraphRecord<'a> {
    command: &'static str,
    args: &'a GraphArgs,
    rows: usize,
    cols: usize,
    lift: usize,
    total_shifts: usize,
    variable_nodes: usize,
    check_nodes: usize,
    lifted_edges: usize,
    girth: GirthRecord,
    projection: ProjectionRecord,
    file_digests: BTreeMap<String, String>,
}

fn cmd_graph(a: &GraphArgs) -> Result<i32> {
    let e = read_exponent(&a.exponent)?;
    let lifted = lift(&e);
    let by_cycles = girth_by_block_cycles(&e);
    let by_bfs = girth_by_bfs(&lifted);
    if by_cycles != by_bfs {
        return Err(Error::Consistency(format!(
            "girth by block cycles {by_cycles} but by BFS {by_bfs}"
        )));
    }
    let projected = project_to_image_graph(&lifted, a.nodes.unwrap_or(lifted.var_count))?;
    let mut file_digests = BTreeMap::new();
    file_digests.insert(a.exponent.display().to_string(), file_digest(&a.exponent)?);
    let record = GraphRecord {
        command: "graph",
        args: a,
        rows: e.rows(),
        cols: e.cols(),
        lift: e.lift(),
        total_shifts: e.total_shifts(),
        variable_nodes: lifted.var_count,
        check_nodes: lifted.check_count,
        lifted_edges: lifted.edges.len(),
        girth: GirthRecord {
            block_cycles: by_cycles.to_string(),
            bfs: by_bfs.to_string(),
        },
        projection: ProjectionRecord {
            nodes: projected.node_count(),
            edges: projected.edge_count(),
            components: projected.components().0,
            degree_histogram: projected.degree_histogram(),
        },
        file_digests,
    };
    let text = serde_json::to_string_pretty(&record).expect("record serialises");
    println!("{text}");
    write_record(a.out.as_deref(), &record)?;
    Ok(0)
}

#[derive(Serialize)]
struct TruthRecord<'a> {
    command: &'static str,
    args: &'a PlantArgs,
    beta_n: Option<f64>,
    j0: f64,
    nu2: f64,
    seed: u64,
    nodes: usize,
    edges: usize,
    girth: String,
    labels: Vec<i8>,
    file_digests: BTreeMap<String, String>,
}

fn cmd_plant(a: &PlantArgs) -> Result<i32> {
    let exponent = match &a.exponent {
        Some(p) => read_exponent(p)?,
        None => random_toroidal(a.rows, a.cols, a.lift, a.min_girth, a.seed, 1000)?,
    };
    let nodes = a.nodes.unwrap_or(exponent.var_count());
    let planted = generate_planted(&exponent, nodes, a.j0, a.nu2, a.seed)?;
    let surrogate = match a.separation {
        Some(sep) => Some(generate_feature_surrogate(nodes, a.dim, sep, a.seed)?),
        None => None,
    };
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;

    let mut files = vec![
        ("exponent.txt", exponent.to_text()),
        ("couplings.txt", planted.couplings_text()),
    ];
    if let Some(fm) = &surrogate {
        let labels = fm.labels().expect("surrogates carry labels");
        let unlabelled = FeatureMatrix::new(fm.n(), fm.d(), fm.values().to_vec(), None)?;
        files.push(("features.txt", unlabelled.to_text()));
        files.push(("labels.txt", crate::features::labels_to_text(labels)));
    }
    let mut file_digests = BTreeMap::new();
    for (name, text) in &files {
        write_file(&a.out.join(name), text)?;
        file_digests.insert((*name).to_string(), sha256_hex(text.as_bytes()));
    }
    let girth: Girth = girth_by_bfs(&lift(&exponent));
    let truth = TruthRecord {
        command: "plant",
        args: a,
        beta_n: planted.beta_n(),
        j0: a.j0,
        nu2: a.nu2,
        seed: a.seed,
        nodes,
        edges: planted.graph.edge_count(),
        girth: girth.to_string(),
        labels: planted.labels.clone(),
        file_digests,
    };
    write_record(Some(&a.out.join("truth.json")), &truth)?;
    println!("wrote {} files to {}", files.len() + 1, a.out.display());
    Ok(0)
}

fn cmd_extract_check(a: &ExtractCheckArgs) -> Result<i32> {
    let fm = read_features(&a.features, a.labels.as_deref())?;
    if let Some(d) = a.expect_dim {
        if fm.d() != d {
            return Err(Error::Size(format!("expected dimension {d}, file has {}", fm.d())));
        }
    }
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "n {}", fm.n());
    let _ = writeln!(out, "d {}", fm.d());
    let _ = writeln!(out, "sha256 {}", file_digest(&a.features)?);
    Ok(0)
}
