//! MDP files, trajectory CSVs and run manifests.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::mdp::{MdpSpec, QVector, ValidatedMdp};
use crate::trajectory::{QLearnConfig, SolvedMdp, TrajectoryRecord};

pub const CSV_SCHEMA: &str = "qvi-geometry/trajectory-csv/v1";
pub const MANIFEST_SCHEMA: &str = "qvi-geometry/run-manifest/v1";
pub const CSV_HEADER: &str =
    "k,inf_err,dist2_x1,distinf_x1,alpha,poss_flag,tube_flag,witness_residual,u,v,p,q";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Failures while reading user-supplied files.
#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("file not found: {0}")]
    NotFound(PathBuf),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("parse error in {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("validation failed for {path}: {source}")]
    Invalid { path: PathBuf, source: Error },
}

fn read_text(path: &Path) -> Result<String, LoadError> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => LoadError::NotFound(path.to_path_buf()),
        _ => LoadError::Read {
            path: path.to_path_buf(),
            source: e,
        },
    })
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, LoadError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| LoadError::Parse {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Reads an MDP document without validating it.
pub fn load_mdp_spec(path: &Path) -> Result<MdpSpec, LoadError> {
    parse_json(path)
}

pub fn load_mdp(path: &Path, renormalize: bool) -> Result<ValidatedMdp, LoadError> {
    let spec = load_mdp_spec(path)?;
    let invalid = |source| LoadError::Invalid {
        path: path.to_path_buf(),
        source,
    };
    let spec = if renormalize {
        spec.renormalized().map_err(invalid)?
    } else {
        spec
    };
    spec.validate().map_err(invalid)
}

/// Reads an initial point given as a `[s][a]` table.
pub fn load_q0(path: &Path, num_states: usize, num_actions: usize) -> Result<QVector, LoadError> {
    let table: Vec<Vec<f64>> = parse_json(path)?;
    let invalid = |msg: String| LoadError::Invalid {
        path: path.to_path_buf(),
        source: Error::InvalidArgument(msg),
    };
    if table.len() != num_states || table.iter().any(|r| r.len() != num_actions) {
        return Err(invalid(format!(
            "Q0 table must be {num_states}x{num_actions}"
        )));
    }
    QVector::from_table(&table).map_err(|e| invalid(e.to_string()))
}

fn number(x: f64) -> String {
    serde_json::to_string(&x).expect("finite")
}

fn row(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|&x| number(x)).collect();
    format!("[{}]", parts.join(", "))
}

/// JSON text of an MDP with one matrix row per line. Numbers use the
/// shortest representation that round-trips, so decimal inputs come back
/// as written.
pub fn mdp_to_json(spec: &MdpSpec) -> String {
    let mut out = String::from("{\n");
    let _ = writeln!(
        out,
        "  \"name\": {},",
        serde_json::to_string(&spec.name).expect("string")
    );
    let _ = writeln!(out, "  \"gamma\": {},", number(spec.gamma));
    let _ = writeln!(out, "  \"num_states\": {},", spec.num_states);
    let _ = writeln!(out, "  \"num_actions\": {},", spec.num_actions);
    out.push_str("  \"transitions\": [\n");
    for (a, block) in spec.transitions.iter().enumerate() {
        out.push_str("    [\n");
        for (s, r) in block.iter().enumerate() {
            let sep = if s + 1 < block.len() { "," } else { "" };
            let _ = writeln!(out, "      {}{sep}", row(r));
        }
        let sep = if a + 1 < spec.transitions.len() {
            ","
        } else {
            ""
        };
        let _ = writeln!(out, "    ]{sep}");
    }
    out.push_str("  ],\n  \"rewards\": [\n");
    for (s, r) in spec.rewards.iter().enumerate() {
        let sep = if s + 1 < spec.rewards.len() { "," } else { "" };
        let _ = writeln!(out, "    {}{sep}", row(r));
    }
    out.push_str("  ]\n}\n");
    out
}

pub fn save_mdp(spec: &MdpSpec, path: &Path) -> io::Result<()> {
    fs::write(path, mdp_to_json(spec))
}

/// Built-in example MDPs by name.
pub fn builtin_example(name: &str) -> Option<MdpSpec> {
    match name {
        crate::toy::NAME => Some(crate::toy::spec()),
        _ => None,
    }
}

pub const BUILTIN_EXAMPLES: &[&str] = &[crate::toy::NAME];

fn csv_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes records as CSV: a `# schema=` comment line, the header, then one
/// row per record. Floats carry 17 significant digits; flags are 0/1; a
/// missing witness residual is an empty field.
pub fn write_csv<W: Write>(mut w: W, records: &[TrajectoryRecord]) -> io::Result<()> {
    writeln!(w, "# schema={CSV_SCHEMA}")?;
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        let witness = r.witness_residual.map(csv_float).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            csv_float(r.inf_err),
            csv_float(r.dist2_x1),
            csv_float(r.distinf_x1),
            csv_float(r.alpha),
            u8::from(r.poss_flag),
            u8::from(r.tube_flag),
            witness,
            csv_float(r.u),
            csv_float(r.v),
            csv_float(r.p),
            csv_float(r.q),
        )?;
    }
    w.flush()
}

pub fn save_csv(path: &Path, records: &[TrajectoryRecord]) -> io::Result<()> {
    let file = io::BufWriter::new(fs::File::create(path)?);
    write_csv(file, records)
}

/// Parses CSV text produced by [`write_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<TrajectoryRecord>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l == format!("# schema={CSV_SCHEMA}") => {}
        other => return Err(format!("missing schema line, found {other:?}")),
    }
    if lines.next() != Some(CSV_HEADER) {
        return Err("unexpected header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 12 {
                return Err(format!(
                    "row {}: expected 12 fields, got {}",
                    i + 1,
                    f.len()
                ));
            }
            let num = |j: usize| {
                f[j].parse::<f64>()
                    .map_err(|e| format!("row {} col {}: {e}", i + 1, j + 1))
            };
            let flag = |j: usize| match f[j] {
                "0" => Ok(false),
                "1" => Ok(true),
                x => Err(format!("row {} col {}: bad flag {x}", i + 1, j + 1)),
            };
            Ok(TrajectoryRecord {
                k: f[0].parse().map_err(|e| format!("row {}: {e}", i + 1))?,
                inf_err: num(1)?,
                dist2_x1: num(2)?,
                distinf_x1: num(3)?,
                alpha: num(4)?,
                poss_flag: flag(5)?,
                tube_flag: flag(6)?,
                witness_residual: if f[7].is_empty() { None } else { Some(num(7)?) },
                u: num(8)?,
                v: num(9)?,
                p: num(10)?,
                q: num(11)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    Qvi,
    Qlearn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub radius: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint {
    pub u: f64,
    pub v: f64,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    /// File name relative to the manifest.
    pub csv: String,
    pub rows: usize,
    pub initial: PlanePoint,
    pub tube_entrance: Option<u64>,
    pub poss_entrance: Option<u64>,
}

/// Everything a plotting tool needs besides the CSVs themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub csv_schema: String,
    pub version: String,
    pub kind: RunKind,
    pub mdp_name: String,
    pub gamma: f64,
    pub lambda2: Option<f64>,
    pub gamma_lambda2: Option<f64>,
    pub delta_bar: Option<f64>,
    pub tube_fraction: Option<f64>,
    pub delta: Option<f64>,
    /// Tube slice `|v| ≤ c` in plane coordinates.
    pub strip_half_width_v: Option<f64>,
    /// The same slice as `|q − p| ≤ c'` in rotated coordinates.
    pub strip_half_width_qp: Option<f64>,
    pub basis_canonical: bool,
    pub circle: Option<Circle>,
    pub iters: Option<usize>,
    pub qlearn: Option<QLearnConfig>,
    pub trajectories: Vec<ManifestEntry>,
}

impl RunManifest {
    pub fn new(problem: &SolvedMdp, kind: RunKind) -> Self {
        let c = problem
            .tube
            .map(|t| problem.basis.strip_half_width(t.delta));
        Self {
            schema: MANIFEST_SCHEMA.into(),
            csv_schema: CSV_SCHEMA.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            kind,
            mdp_name: problem.mdp.name().into(),
            gamma: problem.gamma(),
            lambda2: problem.lambda2,
            gamma_lambda2: problem.lambda2.map(|l| l * problem.gamma()),
            delta_bar: problem.report.delta_bar,
            tube_fraction: problem.tube.map(|t| t.fraction),
            delta: problem.tube.map(|t| t.delta),
            strip_half_width_v: c,
            strip_half_width_qp: c.map(|c| c * std::f64::consts::SQRT_2),
            basis_canonical: problem.basis.canonical,
            circle: None,
            iters: None,
            qlearn: None,
            trajectories: Vec::new(),
        }
    }

    pub fn push(&mut self, csv: String, records: &[TrajectoryRecord]) {
        let first = records.first().expect("at least the initial record");
        let flag = |f| crate::trajectory::entrance_index(records, f);
        self.trajectories.push(ManifestEntry {
            id: self.trajectories.len(),
            csv,
            rows: records.len(),
            initial: PlanePoint {
                u: first.u,
                v: first.v,
                p: first.p,
                q: first.q,
            },
            tube_entrance: flag(crate::trajectory::Flag::Tube),
            poss_entrance: flag(crate::trajectory::Flag::Poss),
        });
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(path, text + "\n")
    }
}

/// CSV file name for trajectory `id` of a run of `count`.
pub fn csv_name(prefix: &str, id: usize, count: usize) -> String {
    if count == 1 {
        format!("{prefix}.csv")
    } else {
        let width = (count - 1).to_string().len().max(2);
        format!("{prefix}_{id:0width$}.csv")
    }
}

/// Writes each run to `dir` plus `manifest.json`; returns the manifest.
pub fn write_run(
    dir: &Path,
    prefix: &str,
    mut manifest: RunManifest,
    runs: &[Vec<TrajectoryRecord>],
) -> io::Result<RunManifest> {
    fs::create_dir_all(dir)?;
    for (j, recs) in runs.iter().enumerate() {
        let name = csv_name(prefix, j, runs.len());
        save_csv(&dir.join(&name), recs)?;
        manifest.push(name, recs);
    }
    manifest.save(&dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
