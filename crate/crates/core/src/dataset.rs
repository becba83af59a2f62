//! Observation data: CSV ingestion, validation and export.
//!
//! Input schema (UTF-8, comma separated, header required):
//!
//! ```text
//! language,year,region,alpha,use,use_kind[,sample_size]
//! basque,2016,CountryAggregate,28.4,12.6,KE
//! ```
//!
//! `alpha` and `use` may be given as percentages or proportions. For
//! surveys spanning several years `year` holds the first one.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rand_distr::{Distribution, StandardNormal};

use crate::behavioral::{BehavioralParams, ModelKind};
use crate::error::{Error, Result};
use crate::rng::{Domain, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UseKind {
    /// Street use (share of observed individuals speaking the minority language).
    KE,
    /// Reported daily use.
    DU,
}

impl FromStr for UseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "KE" => Ok(UseKind::KE),
            "DU" => Ok(UseKind::DU),
            other => Err(Error::data(format!("unknown use_kind '{other}' (KE or DU)"))),
        }
    }
}

impl fmt::Display for UseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UseKind::KE => "KE",
            UseKind::DU => "DU",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub language: String,
    pub year: i32,
    pub region: String,
    pub alpha: f64,
    #[serde(rename = "use")]
    pub use_: f64,
    pub use_kind: UseKind,
    pub sample_size: Option<u64>,
}

impl Observation {
    fn key(&self) -> (&str, i32, &str) {
        (&self.language, self.year, &self.region)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PercentMode {
    /// Divide a column by 100 when its maximum exceeds 1.5.
    #[default]
    Auto,
    Percent,
    Proportion,
}

impl FromStr for PercentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(PercentMode::Auto),
            "percent" => Ok(PercentMode::Percent),
            "proportion" => Ok(PercentMode::Proportion),
            _ => Err(Error::param(format!("unknown percent mode '{s}'"))),
        }
    }
}

const AUTO_PERCENT_THRESHOLD: f64 = 1.5;
const REQUIRED_COLUMNS: [&str; 6] = ["language", "year", "region", "alpha", "use", "use_kind"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub observations: Vec<Observation>,
    pub meta: String,
}

#[derive(Debug, Deserialize)]
struct RawRow {
    language: String,
    year: String,
    region: String,
    alpha: String,
    #[serde(rename = "use")]
    use_: String,
    use_kind: String,
    #[serde(default)]
    sample_size: Option<String>,
}

fn parse_field<T: FromStr>(value: &str, column: &str, line: u64) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::data(format!("row {line}: cannot parse {column} '{value}'")))
}

impl Dataset {
    pub fn new(observations: Vec<Observation>, meta: impl Into<String>) -> Result<Self> {
        let ds = Dataset {
            observations,
            meta: meta.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Parses CSV text. Row numbers in errors count the header as row 1.
    pub fn from_reader<R: Read>(reader: R, mode: PercentMode, meta: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::data(format!("unreadable header: {e}")))?
            .clone();
        if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
            return Err(Error::data("empty dataset: no header row"));
        }
        for col in REQUIRED_COLUMNS {
            if !headers.iter().any(|h| h == col) {
                return Err(Error::data(format!("missing column '{col}'")));
            }
        }

        let mut observations = Vec::new();
        for (i, rec) in rdr.deserialize::<RawRow>().enumerate() {
            let line = i as u64 + 2;
            let raw = rec.map_err(|e| Error::data(format!("row {line}: malformed record ({e})")))?;
            let sample_size = match raw.sample_size.as_deref().map(str::trim) {
                None | Some("") => None,
                Some(s) => Some(parse_field(s, "sample_size", line)?),
            };
            let obs = Observation {
                language: raw.language,
                year: parse_field(&raw.year, "year", line)?,
                region: raw.region,
                alpha: parse_field(&raw.alpha, "alpha", line)?,
                use_: parse_field(&raw.use_, "use", line)?,
                use_kind: raw
                    .use_kind
                    .parse()
                    .map_err(|e: Error| Error::data(format!("row {line}: {e}")))?,
                sample_size,
            };
            if !obs.alpha.is_finite() || !obs.use_.is_finite() {
                return Err(Error::data(format!("row {line}: non-finite value")));
            }
            observations.push(obs);
        }
        if observations.is_empty() {
            return Err(Error::data("empty dataset: no observations"));
        }

        let scale = |values: &mut dyn Iterator<Item = &mut f64>, auto_max: f64| {
            let divide = match mode {
                PercentMode::Percent => true,
                PercentMode::Proportion => false,
                PercentMode::Auto => auto_max > AUTO_PERCENT_THRESHOLD,
            };
            if divide {
                values.for_each(|v| *v /= 100.0);
            }
        };
        let max_alpha = observations
            .iter()
            .map(|o| o.alpha)
            .fold(f64::NEG_INFINITY, f64::max);
        let max_use = observations
            .iter()
            .map(|o| o.use_)
            .fold(f64::NEG_INFINITY, f64::max);
        scale(&mut observations.iter_mut().map(|o| &mut o.alpha), max_alpha);
        scale(&mut observations.iter_mut().map(|o| &mut o.use_), max_use);

        Dataset::new(observations, meta)
    }

    pub fn from_csv_str(text: &str, mode: PercentMode) -> Result<Self> {
        Self::from_reader(text.as_bytes(), mode, "inline")
    }

    pub fn validate(&self) -> Result<()> {
        if self.observations.is_empty() {
            return Err(Error::data("empty dataset"));
        }
        let mut keys = HashSet::new();
        for (i, o) in self.observations.iter().enumerate() {
            let line = i + 2;
            if !(o.alpha > 0.0 && o.alpha < 1.0) {
                return Err(Error::data(format!(
                    "row {line} ({}): alpha = {} outside (0,1)",
                    o.region, o.alpha
                )));
            }
            if !(0.0..=1.0).contains(&o.use_) {
                return Err(Error::data(format!(
                    "row {line} ({}): use = {} outside [0,1]",
                    o.region, o.use_
                )));
            }
            if o.year < 1900 {
                return Err(Error::data(format!("row {line}: year {} before 1900", o.year)));
            }
            if !keys.insert(o.key()) {
                return Err(Error::data(format!(
                    "row {line}: duplicate key ({}, {}, {})",
                    o.language, o.year, o.region
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Observations matching the optional filters, in file order.
    pub fn filter(
        &self,
        language: Option<&str>,
        year: Option<i32>,
        kind: Option<UseKind>,
    ) -> Result<Dataset> {
        let observations: Vec<_> = self
            .observations
            .iter()
            .filter(|o| language.is_none_or(|l| o.language.eq_ignore_ascii_case(l)))
            .filter(|o| year.is_none_or(|y| o.year == y))
            .filter(|o| kind.is_none_or(|k| o.use_kind == k))
            .cloned()
            .collect();
        if observations.is_empty() {
            return Err(Error::data("no observations match the selection"));
        }
        Ok(Dataset {
            observations,
            meta: self.meta.clone(),
        })
    }

    /// Canonical CSV (proportions, shortest round-trip float formatting).
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("language,year,region,alpha,use,use_kind,sample_size\n");
        for o in &self.observations {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(Vec::new());
            w.write_record([
                o.language.clone(),
                o.year.to_string(),
                o.region.clone(),
                o.alpha.to_string(),
                o.use_.to_string(),
                o.use_kind.to_string(),
                o.sample_size.map(|s| s.to_string()).unwrap_or_default(),
            ])
            .expect("in-memory write");
            out.push_str(std::str::from_utf8(&w.into_inner().expect("flush")).expect("utf8"));
        }
        out
    }

    /// SHA-256 of the canonical CSV form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv_string().as_bytes()))
    }
}

pub fn load_csv(path: impl AsRef<Path>, mode: PercentMode) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_reader(file, mode, &path.display().to_string())
}

pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_text(path, &ds.to_csv_string())
}

pub(crate) fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Estimation view of a dataset: `(alpha, y)` pairs with row labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    alphas: Vec<f64>,
    ys: Vec<f64>,
    labels: Vec<String>,
    hash: String,
}

impl Sample {
    /// Sample from raw arrays; labels are `row 1..n`.
    pub fn new(alphas: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if alphas.len() != ys.len() {
            return Err(Error::data("alpha and response lengths differ"));
        }
        let mut h = Sha256::new();
        for (a, y) in alphas.iter().zip(&ys) {
            h.update(a.to_le_bytes());
            h.update(y.to_le_bytes());
        }
        let labels = (1..=alphas.len()).map(|i| format!("row {i}")).collect();
        Ok(Self {
            alphas,
            ys,
            labels,
            hash: hex::encode(h.finalize()),
        })
    }

    pub fn from_dataset(ds: &Dataset) -> Self {
        Self {
            alphas: ds.observations.iter().map(|o| o.alpha).collect(),
            ys: ds.observations.iter().map(|o| o.use_).collect(),
            labels: ds
                .observations
                .iter()
                .enumerate()
                .map(|(i, o)| format!("row {} ({} {} {})", i + 2, o.language, o.year, o.region))
                .collect(),
            hash: ds.hash(),
        }
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn row_label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

/// Generator responses `P(alpha; beta) + noise_sd * z` with standard normal
/// `z`, drawn from the synthetic stream `(seed, replication)`.
pub fn synthetic_responses(
    beta: &BehavioralParams,
    alphas: &[f64],
    noise_sd: f64,
    seed: u64,
    replication: u64,
) -> Result<Vec<f64>> {
    let mut rng = StreamKey::new(seed).stream(Domain::Synthetic, replication, 0);
    alphas
        .iter()
        .map(|&a| {
            let z: f64 = StandardNormal.sample(&mut rng);
            Ok(beta.predict_use(a)?.predicted_use + noise_sd * z)
        })
        .collect()
}

/// `n` equispaced `alpha`s in `[lo, hi]`.
pub fn alpha_design(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![(lo + hi) / 2.0],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Synthetic dataset on `[0.05, 0.95]`; responses are clipped to `[0,1]`.
pub fn synthetic_dataset(beta: &BehavioralParams, n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    let alphas = alpha_design(n, 0.05, 0.95);
    let ys = synthetic_responses(beta, &alphas, noise_sd, seed, 0)?;
    let use_kind = match beta.model {
        ModelKind::Pdu => UseKind::DU,
        _ => UseKind::KE,
    };
    let observations = alphas
        .iter()
        .zip(ys)
        .enumerate()
        .map(|(i, (&alpha, y))| Observation {
            language: "synthetic".into(),
            year: 2000,
            region: format!("s{:03}", i + 1),
            alpha,
            use_: y.clamp(0.0, 1.0),
            use_kind,
            sample_size: None,
        })
        .collect();
    Dataset::new(
        observations,
        format!(
            "synthetic {} beta=({}, {}, {}) noise_sd={noise_sd} seed={seed}",
            beta.model, beta.beta1, beta.beta2, beta.beta3
        ),
    )
}
