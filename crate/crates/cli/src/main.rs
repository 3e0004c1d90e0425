//! `patreid` command-line tool.
//!
//! Exit codes: 0 success, 1 I/O or numeric failure, 2 usage or validation
//! error.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use patreid::geometry::{GeomParams, MatchParams, OmegaDenominator, RansacParams, Residual};
use patreid::reid::{CombineParams, CombineRule};

#[derive(Debug, Parser)]
#[command(
    name = "patreid",
    version,
    about = "Pattern-based animal re-identification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic benchmark (PATF files + manifest).
    Synth(SynthArgs),
    /// Train PCA, GMM vocabulary and kernel PCA on the database images.
    BuildVocab(BuildVocabArgs),
    /// Write appearance embeddings for every manifest image, one file per role.
    Encode(EncodeArgs),
    /// Rank the database against one query feature file.
    Query(QueryArgs),
    /// Top-k evaluation of all combination rules.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    individuals: usize,
    #[arg(long, default_value_t = 2)]
    views: usize,
    #[arg(long, default_value_t = 80)]
    points: usize,
    #[arg(long, default_value_t = 128)]
    descriptor_dim: usize,
    /// Per-element Gaussian descriptor noise.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0.2)]
    dropout: f64,
    /// Clutter points as a fraction of the points per individual.
    #[arg(long, default_value_t = 0.2)]
    clutter: f64,
    #[arg(long, default_value_t = 0.15)]
    max_perspective: f64,
    /// Output directory.
    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Debug, Args)]
struct BuildVocabArgs {
    #[arg(long)]
    manifest: std::path::PathBuf,
    /// Vocabulary file to write.
    #[arg(long)]
    out: std::path::PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    gmm_k: usize,
    #[arg(long, default_value_t = 64)]
    pca_dim: usize,
    /// Defaults to min(N_db - 1, 512).
    #[arg(long)]
    kpca_dim: Option<usize>,
    /// Fisher-vector power-normalization exponent.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long)]
    no_whiten: bool,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[arg(long)]
    manifest: std::path::PathBuf,
    #[arg(long)]
    vocab: std::path::PathBuf,
    /// Output directory for `database.emb` and `query.emb`.
    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RuleArg {
    App,
    Geom,
    Poly,
    Exp,
}

impl From<RuleArg> for CombineRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::App => CombineRule::AppearanceOnly,
            RuleArg::Geom => CombineRule::GeometryOnly,
            RuleArg::Poly => CombineRule::Polynomial,
            RuleArg::Exp => CombineRule::Exponential,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OmegaArg {
    Matches,
    QueryPoints,
}

#[derive(Debug, Args)]
struct ScoringArgs {
    /// Global seed for per-pair RANSAC streams.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Polynomial exponent a.
    #[arg(long, default_value_t = 2.0)]
    a: f64,
    /// RANSAC inlier threshold in normalized coordinates.
    #[arg(long, default_value_t = 0.1)]
    inlier_thresh: f64,
    /// Appearance shortlist verified geometrically (0 = all).
    #[arg(long, default_value_t = 50)]
    shortlist: usize,
    #[arg(long, overrides_with = "no_mutual")]
    mutual: bool,
    #[arg(long)]
    no_mutual: bool,
    #[arg(long, default_value_t = 0.9)]
    max_desc_dist: f64,
    /// Ratio test threshold (off by default).
    #[arg(long)]
    ratio: Option<f64>,
    /// Use the symmetric transfer error instead of one-way reprojection.
    #[arg(long)]
    symmetric: bool,
    #[arg(long, value_enum, default_value_t = OmegaArg::Matches)]
    omega_denominator: OmegaArg,
    #[arg(long, default_value_t = 2000)]
    ransac_iters: usize,
}

impl ScoringArgs {
    fn params(&self, rule: CombineRule) -> CombineParams {
        CombineParams {
            rule,
            a: self.a,
            shortlist_size: self.shortlist,
            epsilon: 1e-9,
            geometry: GeomParams {
                matching: MatchParams {
                    max_distance: self.max_desc_dist,
                    mutual: !self.no_mutual,
                    ratio: self.ratio,
                },
                ransac: RansacParams {
                    inlier_threshold: self.inlier_thresh,
                    max_iters: self.ransac_iters,
                    residual: if self.symmetric {
                        Residual::Symmetric
                    } else {
                        Residual::Forward
                    },
                    ..RansacParams::default()
                },
                omega_denominator: match self.omega_denominator {
                    OmegaArg::Matches => OmegaDenominator::Matches,
                    OmegaArg::QueryPoints => OmegaDenominator::QueryPoints,
                },
                seed: self.seed,
            },
        }
    }
}

#[derive(Debug, Args)]
struct QueryArgs {
    /// PATF feature file of the query image.
    features: std::path::PathBuf,
    /// Manifest whose database entries form the gallery.
    #[arg(long)]
    manifest: std::path::PathBuf,
    #[arg(long)]
    vocab: std::path::PathBuf,
    /// Precomputed database embeddings (from `encode`).
    #[arg(long)]
    embeddings: Option<std::path::PathBuf>,
    #[arg(long, value_enum, default_value_t = RuleArg::Exp)]
    rule: RuleArg,
    /// Number of distinct individuals to print.
    #[arg(long, default_value_t = 5)]
    topk: usize,
    #[command(flatten)]
    scoring: ScoringArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Split,
    Loo,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: std::path::PathBuf,
    #[arg(long)]
    vocab: std::path::PathBuf,
    #[arg(long, value_enum, default_value_t = ProtocolArg::Split)]
    protocol: ProtocolArg,
    /// Largest k reported.
    #[arg(long, default_value_t = 5)]
    topk: usize,
    /// Evaluate only this rule instead of all four.
    #[arg(long, value_enum)]
    rule: Option<RuleArg>,
    #[arg(long)]
    per_query_csv: Option<std::path::PathBuf>,
    #[command(flatten)]
    scoring: ScoringArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::BuildVocab(a) => commands::build_vocab(a),
        Command::Encode(a) => commands::encode(a),
        Command::Query(a) => commands::query(a),
        Command::Evaluate(a) => commands::evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
