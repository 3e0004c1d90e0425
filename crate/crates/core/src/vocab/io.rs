//! Text serialization of [`Vocabulary`].
//!
//! Sections `[PCA]`, `[GMM]` and `[KPCA]` follow a `PATVOCAB <version>`
//! header. Floats are written with 17 significant digits so a save/load
//! cycle reproduces every value exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Gmm, KpcaModel, PcaModel, Vocabulary};
use crate::error::{ReidError, Result};

pub const VOCAB_VERSION: u32 = 1;
const MAGIC: &str = "PATVOCAB";

fn push_row(out: &mut String, key: Option<&str>, vals: &[f64]) {
    if let Some(k) = key {
        out.push_str(k);
    }
    for (i, v) in vals.iter().enumerate() {
        if i > 0 || key.is_some() {
            out.push(' ');
        }
        let _ = write!(out, "{v:.16e}");
    }
    out.push('\n');
}

pub fn vocabulary_to_string(v: &Vocabulary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {VOCAB_VERSION}");
    let _ = writeln!(s, "descriptor_dim {}", v.descriptor_dim);
    push_row(&mut s, Some("alpha"), &[v.alpha]);

    let p = &v.pca;
    s.push_str("[PCA]\n");
    let _ = writeln!(s, "whiten {}", u8::from(p.whiten));
    let _ = writeln!(s, "dims {} {}", p.in_dim(), p.out_dim());
    push_row(&mut s, Some("mean"), &p.mean);
    push_row(&mut s, Some("eigenvalues"), &p.eigenvalues);
    s.push_str("basis\n");
    for row in &p.basis {
        push_row(&mut s, None, row);
    }

    let g = &v.gmm;
    s.push_str("[GMM]\n");
    let _ = writeln!(s, "dims {} {}", g.k(), g.dim());
    push_row(&mut s, Some("weights"), &g.weights);
    s.push_str("means\n");
    for row in &g.means {
        push_row(&mut s, None, row);
    }
    s.push_str("variances\n");
    for row in &g.variances {
        push_row(&mut s, None, row);
    }

    let k = &v.kpca;
    s.push_str("[KPCA]\n");
    s.push_str("kernel dot\n");
    let _ = writeln!(
        s,
        "dims {} {} {} {}",
        k.n_train(),
        k.input_dim(),
        k.out_dim(),
        k.requested_dim
    );
    push_row(&mut s, Some("gram_mean"), &[k.gram_mean]);
    push_row(&mut s, Some("gram_col_means"), &k.gram_col_means);
    push_row(&mut s, Some("eigenvalues"), &k.eigenvalues);
    s.push_str("alphas\n");
    for row in &k.alphas {
        push_row(&mut s, None, row);
    }
    s.push_str("training\n");
    for row in &k.training_vectors {
        push_row(&mut s, None, row);
    }
    s.push_str("[END]\n");
    s
}

struct Cursor<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    path: &'a Path,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: impl Into<String>) -> ReidError {
        ReidError::parse(self.path, self.line, msg)
    }

    fn next(&mut self) -> Result<&'a str> {
        let (i, l) = self
            .lines
            .next()
            .ok_or_else(|| ReidError::parse(self.path, self.line + 1, "unexpected end of file"))?;
        self.line = i + 1;
        Ok(l)
    }

    fn expect(&mut self, literal: &str) -> Result<()> {
        let l = self.next()?;
        if l.trim() != literal {
            return Err(self.err(format!("expected `{literal}`")));
        }
        Ok(())
    }

    /// Line of the form `key tok tok ...`; returns the tokens after `key`.
    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let l = self.next()?;
        let mut toks = l.split_whitespace();
        if toks.next() != Some(key) {
            return Err(self.err(format!("expected `{key}`")));
        }
        Ok(toks.collect())
    }

    fn floats(&self, toks: &[&str], len: usize) -> Result<Vec<f64>> {
        if toks.len() != len {
            return Err(self.err(format!("expected {len} values, found {}", toks.len())));
        }
        toks.iter()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| self.err(format!("bad number {t:?}")))
            })
            .collect()
    }

    fn keyed_floats(&mut self, key: &str, len: usize) -> Result<Vec<f64>> {
        let toks = self.keyed(key)?;
        self.floats(&toks, len)
    }

    fn keyed_usizes(&mut self, key: &str, len: usize) -> Result<Vec<usize>> {
        let toks = self.keyed(key)?;
        if toks.len() != len {
            return Err(self.err(format!("expected {len} integers")));
        }
        toks.iter()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| self.err(format!("bad integer {t:?}")))
            })
            .collect()
    }

    fn rows(&mut self, header: &str, rows: usize, len: usize) -> Result<Vec<Vec<f64>>> {
        self.expect(header)?;
        (0..rows)
            .map(|_| {
                let l = self.next()?;
                let toks: Vec<&str> = l.split_whitespace().collect();
                self.floats(&toks, len)
            })
            .collect()
    }
}

pub fn vocabulary_from_str(text: &str, path: &Path) -> Result<Vocabulary> {
    let mut c = Cursor {
        lines: text.lines().enumerate(),
        path,
        line: 0,
    };
    let version = c.keyed(MAGIC)?;
    if version != [VOCAB_VERSION.to_string().as_str()] {
        return Err(c.err(format!(
            "unsupported vocabulary version, expected {VOCAB_VERSION}"
        )));
    }
    let descriptor_dim = c.keyed_usizes("descriptor_dim", 1)?[0];
    let alpha = c.keyed_floats("alpha", 1)?[0];

    c.expect("[PCA]")?;
    let whiten = match c.keyed_usizes("whiten", 1)?[0] {
        0 => false,
        1 => true,
        _ => return Err(c.err("whiten must be 0 or 1")),
    };
    let d = c.keyed_usizes("dims", 2)?;
    let (in_dim, out_dim) = (d[0], d[1]);
    let pca = PcaModel {
        mean: c.keyed_floats("mean", in_dim)?,
        eigenvalues: c.keyed_floats("eigenvalues", out_dim)?,
        basis: c.rows("basis", out_dim, in_dim)?,
        whiten,
    };

    c.expect("[GMM]")?;
    let d = c.keyed_usizes("dims", 2)?;
    let (k, dim) = (d[0], d[1]);
    let weights = c.keyed_floats("weights", k)?;
    let means = c.rows("means", k, dim)?;
    let variances = c.rows("variances", k, dim)?;
    let gmm = Gmm {
        weights,
        means,
        variances,
    };

    c.expect("[KPCA]")?;
    if c.keyed("kernel")? != ["dot"] {
        return Err(c.err("only the `dot` kernel is supported"));
    }
    let d = c.keyed_usizes("dims", 4)?;
    let (n, f, out, requested_dim) = (d[0], d[1], d[2], d[3]);
    let gram_mean = c.keyed_floats("gram_mean", 1)?[0];
    let gram_col_means = c.keyed_floats("gram_col_means", n)?;
    let eigenvalues = c.keyed_floats("eigenvalues", out)?;
    let alphas = c.rows("alphas", out, n)?;
    let training_vectors = c.rows("training", n, f)?;
    c.expect("[END]")?;

    let vocab = Vocabulary {
        descriptor_dim,
        pca,
        gmm,
        kpca: KpcaModel {
            training_vectors,
            alphas,
            eigenvalues,
            gram_col_means,
            gram_mean,
            requested_dim,
        },
        alpha,
    };
    vocab.validate()?;
    Ok(vocab)
}

pub fn save_vocabulary(vocab: &Vocabulary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, vocabulary_to_string(vocab)).map_err(|e| ReidError::io(path, e))
}

pub fn load_vocabulary(path: impl AsRef<Path>) -> Result<Vocabulary> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| ReidError::io(path, e))?;
    vocabulary_from_str(&text, path)
}
