//! Result artifacts: JSON documents, curve CSVs, the SVG figure and the run
//! manifest.
//!
//! Every JSON document carries a `run` block. CSV files stay plain tables;
//! the manifest `run.json` lists each artifact with its SHA-256.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bootstrap::{BootstrapSummary, WildNoise};
use crate::dataset::{write_text, Sample};
use crate::error::{Error, Result};
use crate::kernel::NonparFit;
use crate::nls::FitResult;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunInfo {
    pub config_hash: String,
    pub seed: Option<u64>,
    pub version: String,
}

impl RunInfo {
    /// Run block for a serializable configuration.
    pub fn new<T: Serialize>(config: &T, seed: Option<u64>) -> Self {
        let bytes = serde_json::to_vec(config).expect("configuration serializes");
        Self {
            config_hash: hex::encode(Sha256::digest(&bytes)),
            seed,
            version: crate::VERSION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub run: RunInfo,
    pub artifacts: Vec<Artifact>,
}

/// Collects artifacts written into one output directory.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    run: RunInfo,
    artifacts: Vec<Artifact>,
}

impl ArtifactWriter {
    pub fn new(dir: impl AsRef<Path>, run: RunInfo) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            dir,
            run,
            artifacts: Vec::new(),
        })
    }

    pub fn run(&self) -> &RunInfo {
        &self.run
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_text(&path, text)?;
        self.artifacts.push(Artifact {
            file: name.to_string(),
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
        });
        Ok(path)
    }

    /// Writes `{"run": ..., key: value}` as pretty JSON.
    pub fn write_json<T: Serialize>(&mut self, name: &str, key: &str, value: &T) -> Result<PathBuf> {
        let mut doc = serde_json::Map::new();
        doc.insert("run".into(), serde_json::to_value(&self.run)?);
        doc.insert(key.into(), serde_json::to_value(value)?);
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// Writes `run.json` and returns the manifest.
    pub fn finish(self) -> Result<Manifest> {
        let manifest = Manifest {
            run: self.run,
            artifacts: self.artifacts,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_text(self.dir.join("run.json"), &text)?;
        Ok(manifest)
    }
}

pub fn nonpar_csv(fit: &NonparFit) -> String {
    let mut s = String::from("alpha,g_hat,h\n");
    for ((a, g), h) in fit.grid.iter().zip(&fit.g_hat).zip(&fit.bandwidths) {
        let _ = writeln!(s, "{a},{g},{h}");
    }
    s
}

pub fn bands_csv(boot: &BootstrapSummary, nonpar: &NonparFit) -> Result<String> {
    if boot.grid != nonpar.grid {
        return Err(Error::Inference("band and smoother grids differ".into()));
    }
    let mut s = String::from("alpha,fit,lower,upper,sigma_y,g_hat_nonpar\n");
    for i in 0..boot.grid.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            boot.grid[i], boot.fit[i], boot.lower[i], boot.upper[i], boot.sigma_y[i], nonpar.g_hat[i]
        );
    }
    Ok(s)
}

/// Headline numbers of a full report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub dataset_hash: String,
    pub model: String,
    pub form: String,
    pub n_obs: usize,
    pub beta: [f64; 3],
    pub ssr: f64,
    pub converged: bool,
    pub out_of_range: bool,
    #[serde(rename = "B")]
    pub b: usize,
    pub noise: WildNoise,
    pub failures: usize,
    pub se: [f64; 3],
    pub ci95: [[f64; 2]; 3],
    #[serde(rename = "T_obs")]
    pub t_obs: f64,
    pub p_value: f64,
    pub level: f64,
    #[serde(rename = "q_T")]
    pub q_t: f64,
    pub sigma_floored: usize,
    pub nn_fraction: f64,
    pub smoother_fallbacks: usize,
    pub files: Vec<String>,
}

const SVG_SIZE: f64 = 480.0;
const SVG_MARGIN: f64 = 48.0;

struct Frame {
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        SVG_MARGIN + x * (SVG_SIZE - 2.0 * SVG_MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        let t = (y - self.y_lo) / (self.y_hi - self.y_lo);
        SVG_SIZE - SVG_MARGIN - t * (SVG_SIZE - 2.0 * SVG_MARGIN)
    }

    fn path(&self, xs: &[f64], ys: &[f64]) -> String {
        let mut d = String::new();
        for (i, (x, y)) in xs.iter().zip(ys).enumerate() {
            let _ = write!(
                d,
                "{}{:.2},{:.2}",
                if i == 0 { "M" } else { " L" },
                self.px(*x),
                self.py(*y)
            );
        }
        d
    }
}

/// Static SVG: observations as circles, parametric fit thick, bands thin,
/// nonparametric fit dashed, plus the 45 degree and zero reference lines.
pub fn svg_figure(sample: &Sample, boot: &BootstrapSummary, nonpar: &NonparFit, title: &str) -> String {
    let values = sample
        .ys()
        .iter()
        .chain(&boot.lower)
        .chain(&boot.upper)
        .chain(&nonpar.g_hat)
        .copied()
        .filter(|v| v.is_finite());
    let (mut lo, mut hi) = (0.0f64, 0.1f64);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let pad = 0.05 * (hi - lo);
    let f = Frame {
        y_lo: if lo < 0.0 { lo - pad } else { 0.0 },
        y_hi: hi + pad,
    };
    let diag = f.y_hi.min(1.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{w}" viewBox="0 0 {w} {w}">"#,
        w = SVG_SIZE
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{w}" height="{w}" fill="white"/>"#,
        w = SVG_SIZE
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        SVG_SIZE / 2.0,
        escape(title)
    );
    let inner = SVG_SIZE - 2.0 * SVG_MARGIN;
    let _ = writeln!(
        s,
        r##"<rect x="{m:.2}" y="{m:.2}" width="{inner:.2}" height="{inner:.2}" fill="none" stroke="#444" stroke-width="1"/>"##,
        m = SVG_MARGIN
    );
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="middle">{t}</text>"#,
            f.px(t),
            SVG_SIZE - SVG_MARGIN + 14.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">alpha</text>"#,
        SVG_SIZE / 2.0,
        SVG_SIZE - 10.0
    );
    let _ = writeln!(
        s,
        r##"<path id="diagonal" d="{}" fill="none" stroke="#999" stroke-width="1"/>"##,
        f.path(&[0.0, diag], &[0.0, diag])
    );
    let _ = writeln!(
        s,
        r##"<path id="zero" d="{}" fill="none" stroke="#999" stroke-width="1"/>"##,
        f.path(&[0.0, 1.0], &[0.0, 0.0])
    );
    for (a, y) in sample.alphas().iter().zip(sample.ys()) {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="none" stroke="#333"/>"##,
            f.px(*a),
            f.py(*y)
        );
    }
    let _ = writeln!(
        s,
        r##"<path id="lower" d="{}" fill="none" stroke="#1f4e8c" stroke-width="0.8"/>"##,
        f.path(&boot.grid, &boot.lower)
    );
    let _ = writeln!(
        s,
        r##"<path id="upper" d="{}" fill="none" stroke="#1f4e8c" stroke-width="0.8"/>"##,
        f.path(&boot.grid, &boot.upper)
    );
    let _ = writeln!(
        s,
        r##"<path id="fit" d="{}" fill="none" stroke="#1f4e8c" stroke-width="2.5"/>"##,
        f.path(&boot.grid, &boot.fit)
    );
    let _ = writeln!(
        s,
        r##"<path id="nonparametric" d="{}" fill="none" stroke="#b22222" stroke-width="1.5" stroke-dasharray="6 4"/>"##,
        f.path(&nonpar.grid, &nonpar.g_hat)
    );
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes fit, bootstrap, curve and figure artifacts plus the manifest.
/// All inputs must stem from the same sample.
pub fn export_report(
    dir: impl AsRef<Path>,
    run: RunInfo,
    sample: &Sample,
    fit: &FitResult,
    boot: &BootstrapSummary,
    nonpar: &NonparFit,
    title: &str,
) -> Result<Manifest> {
    let h = sample.hash();
    for (what, other) in [
        ("fit", &fit.dataset_hash),
        ("bootstrap", &boot.dataset_hash),
        ("nonparametric fit", &nonpar.dataset_hash),
    ] {
        if other != h {
            return Err(Error::data(format!("{what} was computed on a different dataset")));
        }
    }
    let bands = bands_csv(boot, nonpar)?;
    let mut w = ArtifactWriter::new(dir, run)?;
    w.write_json("fit.json", "fit", fit)?;
    w.write_json("bootstrap.json", "bootstrap", boot)?;
    w.write_json("nonpar.json", "nonpar", nonpar)?;
    w.write_text("bands.csv", &bands)?;
    w.write_text("nonpar.csv", &nonpar_csv(nonpar))?;
    w.write_text("figure.svg", &svg_figure(sample, boot, nonpar, title))?;
    let files = vec![
        "fit.json".into(),
        "bootstrap.json".into(),
        "nonpar.json".into(),
        "bands.csv".into(),
        "nonpar.csv".into(),
        "figure.svg".into(),
    ];
    let summary = ReportSummary {
        dataset_hash: h.to_string(),
        model: fit.beta.model.to_string(),
        form: format!("{:?}", fit.form).to_lowercase(),
        n_obs: fit.n_obs,
        beta: fit.beta.as_array(),
        ssr: fit.ssr,
        converged: fit.converged,
        out_of_range: fit.out_of_range(),
        b: boot.b,
        noise: boot.noise,
        failures: boot.failures,
        se: boot.se,
        ci95: boot.ci95,
        t_obs: boot.t_obs,
        p_value: boot.p_value,
        level: boot.level,
        q_t: boot.q_t,
        sigma_floored: boot.sigma_floored.len(),
        nn_fraction: nonpar.nn_fraction,
        smoother_fallbacks: nonpar.fallback.iter().filter(|f| **f).count(),
        files,
    };
    w.write_json("report.json", "report", &summary)?;
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavioral::{BehavioralParams, ModelKind};
    use crate::bootstrap::{run, BootstrapConfig};
    use crate::kernel::{fit_sample, KernelConfig};
    use crate::nls::{fit, predict_curve, FitConfig, Form};

    fn pipeline() -> (Sample, FitResult, BootstrapSummary, NonparFit) {
        let beta = BehavioralParams::new(0.890, 0.030, 0.089, ModelKind::Pke2).unwrap();
        let alphas: Vec<f64> = (0..30).map(|i| 0.05 + 0.03 * i as f64).collect();
        let ys: Vec<f64> = predict_curve(&beta, &alphas)
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, p)| p + 0.01 * ((i * 7 % 5) as f64 - 2.0))
            .collect();
        let s = Sample::new(alphas, ys).unwrap();
        let fc = FitConfig::new(ModelKind::Pke2, Form::Level);
        let f = fit(&s, &fc).unwrap();
        let kc = KernelConfig::default();
        let mut bc = BootstrapConfig::new(5);
        bc.replicates = 99;
        let (b, _) = run(&s, &f, &fc, &kc, &bc).unwrap();
        let np = fit_sample(&s, &kc).unwrap();
        (s, f, b, np)
    }

    #[test]
    fn svg_structure() {
        let (s, _, b, np) = pipeline();
        let svg = svg_figure(&s, &b, &np, "synthetic <test>");
        assert_eq!(svg.matches("stroke-dasharray").count(), 1);
        assert_eq!(svg.matches("<circle").count(), s.len());
        assert!(svg.contains(r#"id="diagonal""#) && svg.contains(r#"id="zero""#));
        assert!(svg.contains("&lt;test&gt;"));
    }

    #[test]
    fn export_is_deterministic_and_hash_checked() {
        let (s, f, b, np) = pipeline();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let run = RunInfo::new(&"cfg", Some(5));
        let m1 = export_report(d1.path(), run.clone(), &s, &f, &b, &np, "t").unwrap();
        let m2 = export_report(d2.path(), run.clone(), &s, &f, &b, &np, "t").unwrap();
        assert_eq!(m1, m2);
        let report = std::fs::read_to_string(d1.path().join("report.json")).unwrap();
        assert!(report.contains(s.hash()));
        assert!(d1.path().join("run.json").exists());

        let mut foreign = np.clone();
        foreign.dataset_hash = "00".into();
        assert!(matches!(
            export_report(d1.path(), run, &s, &f, &b, &foreign, "t"),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn bands_csv_columns() {
        let (_, _, b, np) = pipeline();
        let csv = bands_csv(&b, &np).unwrap();
        assert!(csv.starts_with("alpha,fit,lower,upper,sigma_y,g_hat_nonpar\n"));
        assert_eq!(csv.lines().count(), b.grid.len() + 1);
    }
}
