//! Local feature files (PATF) and dataset manifests.
//!
//! PATF is a whitespace-separated text format:
//!
//! ```text
//! PATF 1
//! <image_id>
//! <D_raw> <M>
//! x y a11 a12 a21 a22 d1 ... dD      (M lines)
//! ```
//!
//! Descriptors are re-normalized to unit L2 norm on load.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{ReidError, Result};

pub const PATF_MAGIC: &str = "PATF";
pub const PATF_VERSION: u32 = 1;
pub const DEFAULT_DESCRIPTOR_DIM: usize = 128;
const UNIT_NORM_SLACK: f64 = 1e-12;
pub const MANIFEST_HEADER: [&str; 5] = [
    "image_id",
    "individual_id",
    "viewpoint",
    "role",
    "feature_path",
];

/// Center and local affine shape of a detected region.
///
/// `a` maps the unit circle onto the measurement region, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineFrame {
    pub x: f64,
    pub y: f64,
    pub a: [[f64; 2]; 2],
}

impl AffineFrame {
    pub fn new(x: f64, y: f64, a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        AffineFrame {
            x,
            y,
            a: [[a11, a12], [a21, a22]],
        }
    }

    pub fn at(x: f64, y: f64) -> Self {
        Self::new(x, y, 1.0, 0.0, 0.0, 1.0)
    }

    pub fn det(&self) -> f64 {
        self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0]
    }

    pub fn center(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let vals = [
            self.x,
            self.y,
            self.a[0][0],
            self.a[0][1],
            self.a[1][0],
            self.a[1][1],
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err("non-finite frame value".into());
        }
        if self.det() == 0.0 {
            return Err("singular affine shape matrix".into());
        }
        Ok(())
    }
}

/// One detected region with its descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub frame: AffineFrame,
    pub descriptor: Vec<f64>,
}

/// All local features of one image plus its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures {
    pub image_id: String,
    pub individual_id: Option<String>,
    pub viewpoint: Option<String>,
    pub descriptor_dim: usize,
    pub features: Vec<Feature>,
}

impl ImageFeatures {
    pub fn new(image_id: impl Into<String>, descriptor_dim: usize) -> Self {
        ImageFeatures {
            image_id: image_id.into(),
            individual_id: None,
            viewpoint: None,
            descriptor_dim,
            features: Vec::new(),
        }
    }

    /// Builds features from frames and raw descriptors, normalizing each
    /// descriptor to unit length.
    pub fn from_parts(
        image_id: impl Into<String>,
        descriptor_dim: usize,
        parts: impl IntoIterator<Item = (AffineFrame, Vec<f64>)>,
    ) -> Result<Self> {
        let mut out = Self::new(image_id, descriptor_dim);
        for (i, (frame, descriptor)) in parts.into_iter().enumerate() {
            frame
                .validate()
                .map_err(|m| ReidError::Invalid(format!("feature {i}: {m}")))?;
            if descriptor.len() != descriptor_dim {
                return Err(ReidError::DimensionMismatch {
                    expected: descriptor_dim,
                    got: descriptor.len(),
                });
            }
            let descriptor = unit_descriptor(descriptor)
                .map_err(|m| ReidError::Invalid(format!("feature {i}: {m}")))?;
            out.features.push(Feature { frame, descriptor });
        }
        Ok(out)
    }

    pub fn with_labels(mut self, individual_id: Option<String>, viewpoint: Option<String>) -> Self {
        self.individual_id = individual_id;
        self.viewpoint = viewpoint;
        self
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// An image without features cannot be matched against anything.
    pub fn is_degenerate(&self) -> bool {
        self.features.is_empty()
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &[f64]> {
        self.features.iter().map(|f| f.descriptor.as_slice())
    }

    pub fn centers(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.features.iter().map(|f| f.frame.center())
    }
}

fn unit_descriptor(mut d: Vec<f64>) -> std::result::Result<Vec<f64>, String> {
    if d.iter().any(|v| !v.is_finite()) {
        return Err("non-finite descriptor value".into());
    }
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err("zero-norm descriptor".into());
    }
    // already-unit descriptors are kept bit-exact so write/parse round-trips
    if (norm - 1.0).abs() > UNIT_NORM_SLACK {
        d.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(d)
}

fn parse_f64(tok: &str) -> Option<f64> {
    tok.parse::<f64>().ok()
}

/// Parses PATF text. `path` is only used for error messages.
pub fn parse_features_str(text: &str, path: &Path) -> Result<ImageFeatures> {
    let err = |line: usize, msg: &str| ReidError::parse(path, line, msg);
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (ln, header) = lines.next().ok_or_else(|| err(1, "empty file"))?;
    let mut toks = header.split_whitespace();
    match (toks.next(), toks.next(), toks.next()) {
        (Some(PATF_MAGIC), Some(v), None) if v.parse::<u32>() == Ok(PATF_VERSION) => {}
        _ => return Err(err(ln, "malformed header, expected `PATF 1`")),
    }

    let (ln, id_line) = lines
        .next()
        .ok_or_else(|| err(2, "missing image id line"))?;
    let mut toks = id_line.split_whitespace();
    let image_id = match (toks.next(), toks.next()) {
        (Some(id), None) => id.to_string(),
        _ => return Err(err(ln, "image id must be a single token")),
    };

    let (ln, dims) = lines
        .next()
        .ok_or_else(|| err(3, "missing `<D_raw> <M>` line"))?;
    let dims: Vec<usize> = dims
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| err(ln, "malformed `<D_raw> <M>` line"))?;
    let (dim, count) = match dims.as_slice() {
        [d, m] if *d > 0 => (*d, *m),
        _ => return Err(err(ln, "malformed `<D_raw> <M>` line")),
    };

    let mut features = ImageFeatures::new(image_id, dim);
    features.features.reserve(count);
    let mut last_line = ln;
    for _ in 0..count {
        let (ln, line) = lines.next().ok_or_else(|| {
            err(
                last_line + 1,
                &format!(
                    "count mismatch: declared {count} features, found {}",
                    features.len()
                ),
            )
        })?;
        last_line = ln;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(parse_f64)
            .collect::<Option<_>>()
            .ok_or_else(|| err(ln, "unparseable number"))?;
        if vals.len() != 6 + dim {
            return Err(err(
                ln,
                &format!(
                    "dimension inconsistency: expected {} values, found {}",
                    6 + dim,
                    vals.len()
                ),
            ));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(err(ln, "non-finite value"));
        }
        let frame = AffineFrame::new(vals[0], vals[1], vals[2], vals[3], vals[4], vals[5]);
        frame.validate().map_err(|m| err(ln, &m))?;
        let descriptor = unit_descriptor(vals[6..].to_vec()).map_err(|m| err(ln, &m))?;
        features.features.push(Feature { frame, descriptor });
    }
    for (ln, line) in lines {
        if !line.trim().is_empty() {
            return Err(err(
                ln,
                &format!("count mismatch: more than the declared {count} features"),
            ));
        }
    }
    Ok(features)
}

pub fn parse_feature_file(path: impl AsRef<Path>) -> Result<ImageFeatures> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| ReidError::io(path, e))?;
    parse_features_str(&text, path)
}

/// Serializes features as PATF. Floats use the shortest round-trip decimal form.
pub fn features_to_string(features: &ImageFeatures) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{PATF_MAGIC} {PATF_VERSION}");
    let _ = writeln!(out, "{}", features.image_id);
    let _ = writeln!(
        out,
        "{} {}",
        features.descriptor_dim,
        features.features.len()
    );
    for f in &features.features {
        let fr = &f.frame;
        let _ = write!(
            out,
            "{} {} {} {} {} {}",
            fr.x, fr.y, fr.a[0][0], fr.a[0][1], fr.a[1][0], fr.a[1][1]
        );
        for v in &f.descriptor {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_feature_file(features: &ImageFeatures, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if features.image_id.is_empty() || features.image_id.contains(char::is_whitespace) {
        return Err(ReidError::Invalid(format!(
            "image id {:?} must be a non-empty token without whitespace",
            features.image_id
        )));
    }
    fs::write(path, features_to_string(features)).map_err(|e| ReidError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Database,
    Query,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Database => "database",
            Role::Query => "query",
        }
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "database" => Ok(Role::Database),
            "query" => Ok(Role::Query),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub image_id: String,
    pub individual_id: Option<String>,
    pub viewpoint: Option<String>,
    pub role: Role,
    /// Path as written in the manifest.
    pub feature_path: PathBuf,
    /// `feature_path` resolved against the manifest directory.
    pub resolved_path: PathBuf,
}

impl ManifestEntry {
    pub fn load_features(&self) -> Result<ImageFeatures> {
        let mut f = parse_feature_file(&self.resolved_path)?;
        if f.image_id != self.image_id {
            log::warn!(
                "{}: file image id {:?} differs from manifest id {:?}; using manifest id",
                self.resolved_path.display(),
                f.image_id,
                self.image_id
            );
            f.image_id = self.image_id.clone();
        }
        f.individual_id = self.individual_id.clone();
        f.viewpoint = self.viewpoint.clone();
        Ok(f)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.role == role)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load_all(&self) -> Result<Vec<ImageFeatures>> {
        self.entries
            .iter()
            .map(ManifestEntry::load_features)
            .collect()
    }

    /// Writes the manifest CSV with paths exactly as stored in `feature_path`.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e: csv::Error| ReidError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        };
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(MANIFEST_HEADER).map_err(io)?;
        for e in &self.entries {
            w.write_record([
                e.image_id.as_str(),
                e.individual_id.as_deref().unwrap_or(""),
                e.viewpoint.as_deref().unwrap_or(""),
                e.role.as_str(),
                &e.feature_path.to_string_lossy(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| ReidError::io(path, e))
    }
}

fn non_empty(s: &str) -> Option<String> {
    let s = s.trim();
    (!s.is_empty()).then(|| s.to_string())
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let file = fs::File::open(path).map_err(|e| ReidError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers = rdr
        .headers()
        .map_err(|e| ReidError::parse(path, 1, e.to_string()))?;
    if headers.iter().ne(MANIFEST_HEADER) {
        return Err(ReidError::parse(
            path,
            1,
            format!("expected header `{}`", MANIFEST_HEADER.join(",")),
        ));
    }

    let mut seen = HashSet::new();
    let mut manifest = Manifest::default();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| ReidError::parse(path, line, e.to_string()))?;
        if rec.len() != MANIFEST_HEADER.len() {
            return Err(ReidError::parse(path, line, "wrong number of fields"));
        }
        let image_id = rec[0].to_string();
        if image_id.is_empty() {
            return Err(ReidError::parse(path, line, "empty image_id"));
        }
        if !seen.insert(image_id.clone()) {
            return Err(ReidError::parse(
                path,
                line,
                format!("duplicate image_id {image_id:?}"),
            ));
        }
        let role: Role = rec[3]
            .parse()
            .map_err(|m: String| ReidError::parse(path, line, m))?;
        let feature_path = PathBuf::from(&rec[4]);
        let resolved_path = if feature_path.is_absolute() {
            feature_path.clone()
        } else {
            base.join(&feature_path)
        };
        if !resolved_path.is_file() {
            return Err(ReidError::parse(
                path,
                line,
                format!("feature file not found: {}", resolved_path.display()),
            ));
        }
        manifest.entries.push(ManifestEntry {
            image_id,
            individual_id: non_empty(&rec[1]),
            viewpoint: non_empty(&rec[2]),
            role,
            feature_path,
            resolved_path,
        });
    }
    Ok(manifest)
}
