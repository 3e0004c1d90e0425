use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use patreid::encode::{embed_image, read_embeddings, write_embeddings};
use patreid::ingest::{load_manifest, parse_feature_file, Manifest, Role};
use patreid::reid::{
    evaluate_manifest, format_grid, query_database, write_per_query_csv, CombineRule, IdentityUnit,
    Protocol, ReidDatabase,
};
use patreid::synth::{generate_benchmark, manifest_path, SynthConfig};
use patreid::vocab::{build_vocabulary, load_vocabulary, save_vocabulary, VocabParams, Vocabulary};
use patreid::ReidError;

use super::{BuildVocabArgs, EncodeArgs, EvaluateArgs, ProtocolArg, QueryArgs, SynthArgs};

pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl From<ReidError> for CliError {
    fn from(e: ReidError) -> Self {
        CliError {
            code: if e.is_usage() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        code: 2,
        message: message.into(),
    }
}

type CmdResult = Result<(), CliError>;

fn require_file(path: &Path, what: &str) -> CmdResult {
    if !path.is_file() {
        return Err(usage(format!("{what} not found: {}", path.display())));
    }
    Ok(())
}

fn load_inputs(manifest: &Path, vocab: &Path) -> Result<(Manifest, Vocabulary), CliError> {
    require_file(manifest, "manifest")?;
    require_file(vocab, "vocabulary")?;
    Ok((load_manifest(manifest)?, load_vocabulary(vocab)?))
}

pub fn synth(a: SynthArgs) -> CmdResult {
    let config = SynthConfig {
        seed: a.seed,
        n_individuals: a.individuals,
        views_per_individual: a.views,
        points_per_individual: a.points,
        descriptor_dim: a.descriptor_dim,
        descriptor_noise_sigma: a.noise,
        dropout_rate: a.dropout,
        clutter_rate: a.clutter,
        max_perspective: a.max_perspective,
    };
    config.validate().map_err(|e| {
        usage(format!(
            "--{}",
            e.to_string().trim_start_matches("invalid input: ")
        ))
    })?;
    let manifest = generate_benchmark(&config, &a.out)?;
    println!("{}", manifest_path(&a.out).display());
    log::info!("wrote {} images", manifest.len());
    Ok(())
}

pub fn build_vocab(a: BuildVocabArgs) -> CmdResult {
    require_file(&a.manifest, "manifest")?;
    let manifest = load_manifest(&a.manifest)?;
    let db = manifest
        .with_role(Role::Database)
        .map(|e| e.load_features())
        .collect::<Result<Vec<_>, _>>()?;
    if db.is_empty() {
        return Err(usage("no database entries in manifest"));
    }
    let params = VocabParams {
        gmm_k: a.gmm_k,
        pca_dim: a.pca_dim,
        kpca_dim: a.kpca_dim,
        whiten: !a.no_whiten,
        alpha: a.alpha,
        seed: a.seed,
        max_iters: a.max_iters,
        ..VocabParams::default()
    };
    let vocab = build_vocabulary(&db, &params)?;
    save_vocabulary(&vocab, &a.out)?;
    println!(
        "{} (PCA {} -> {}, GMM K={}, Fisher {} -> kernel PCA {})",
        a.out.display(),
        vocab.descriptor_dim,
        vocab.pca.out_dim(),
        vocab.gmm.k(),
        vocab.fisher_dim(),
        vocab.embedding_dim()
    );
    Ok(())
}

pub fn encode(a: EncodeArgs) -> CmdResult {
    let (manifest, vocab) = load_inputs(&a.manifest, &a.vocab)?;
    fs::create_dir_all(&a.out).map_err(|e| CliError {
        code: 1,
        message: format!("cannot create {}: {e}", a.out.display()),
    })?;
    for role in [Role::Database, Role::Query] {
        let rows = manifest
            .with_role(role)
            .map(|e| {
                let f = e.load_features()?;
                Ok((e.image_id.clone(), embed_image(&f, &vocab)?))
            })
            .collect::<Result<Vec<_>, ReidError>>()?;
        let path = a.out.join(format!("{}.emb", role.as_str()));
        write_embeddings(&rows, &path)?;
        println!("{} ({} images)", path.display(), rows.len());
    }
    Ok(())
}

pub fn query(a: QueryArgs) -> CmdResult {
    let (manifest, vocab) = load_inputs(&a.manifest, &a.vocab)?;
    require_file(&a.features, "query feature file")?;
    if a.topk == 0 {
        return Err(usage("--topk must be >= 1"));
    }
    let vocab = Arc::new(vocab);
    let images = manifest
        .with_role(Role::Database)
        .map(|e| e.load_features())
        .collect::<Result<Vec<_>, _>>()?;
    if images.is_empty() {
        return Err(usage("no database entries in manifest"));
    }
    let db = match &a.embeddings {
        Some(path) => {
            require_file(path, "embedding store")?;
            let mut stored: HashMap<String, _> = read_embeddings(path)?.into_iter().collect();
            let items = images
                .into_iter()
                .map(|f| {
                    let e = stored.remove(&f.image_id).ok_or_else(|| {
                        usage(format!("no stored embedding for {:?}", f.image_id))
                    })?;
                    Ok((f, e))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            ReidDatabase::from_embeddings(vocab, items, IdentityUnit::Individual)?
        }
        None => ReidDatabase::build(vocab, images, IdentityUnit::Individual)?,
    };

    let query = parse_feature_file(&a.features)?;
    let params = a.scoring.params(a.rule.into());
    let ranked = query_database(&db, &query, &params)?;
    println!("query {} rule {}", ranked.query_image_id, params.rule);
    println!(
        "{:>4}  {:<16} {:<20} {:>10} {:>5} {:>7} {:>12}",
        "rank", "individual", "image", "d_L", "n", "omega", "d_C"
    );
    for (i, c) in ranked.top_individuals(a.topk).iter().enumerate() {
        println!(
            "{:>4}  {:<16} {:<20} {:>10.6} {:>5} {:>7.4} {:>12.6e}",
            i + 1,
            c.individual_id,
            c.db_image_id,
            c.d_l,
            c.n,
            c.omega,
            c.d_c
        );
    }
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> CmdResult {
    let (manifest, vocab) = load_inputs(&a.manifest, &a.vocab)?;
    if a.topk == 0 {
        return Err(usage("--topk must be >= 1"));
    }
    let rules: Vec<_> = match a.rule {
        Some(r) => vec![a.scoring.params(r.into())],
        None => CombineRule::ALL
            .iter()
            .map(|&r| a.scoring.params(r))
            .collect(),
    };
    let protocol = match a.protocol {
        ProtocolArg::Split => Protocol::Split,
        ProtocolArg::Loo => Protocol::LeaveOneOut,
    };
    let reports = evaluate_manifest(&manifest, &vocab, &rules, a.topk, protocol)?;
    print!("{}", format_grid(&reports));
    for (id, reason) in reports[0].excluded.iter().take(10) {
        log::info!("excluded {id}: {reason}");
    }
    if let Some(path) = &a.per_query_csv {
        write_per_query_csv(&reports, path)?;
    }
    Ok(())
}
