//! File formats: binary parameter checkpoints, trajectory JSON Lines,
//! and learning-curve CSVs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::engine::{Action, EngineConfig, Trajectory};
use crate::policy::{NetShape, Params};
use crate::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 4] = b"THRM";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes a parameter checkpoint: magic `THRM`, then version, n_in,
/// n_hidden, n_out as little-endian u32, then the flat parameter vector as
/// little-endian f64.
pub fn save_checkpoint(path: &Path, params: &Params) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    write(CHECKPOINT_MAGIC)?;
    write(&CHECKPOINT_VERSION.to_le_bytes())?;
    write(&(params.shape.n_in as u32).to_le_bytes())?;
    write(&(params.shape.n_hidden as u32).to_le_bytes())?;
    write(&(params.shape.n_out as u32).to_le_bytes())?;
    for &x in &params.data {
        write(&x.to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint written by `save_checkpoint`.
pub fn load_checkpoint(path: &Path) -> Result<Params> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!("{}: not a checkpoint file", path.display())));
    }
    let mut u32_buf = [0u8; 4];
    let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
        r.read_exact(&mut u32_buf).map_err(|e| Error::io(path, e))?;
        Ok(u32::from_le_bytes(u32_buf))
    };
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported checkpoint version {version}",
            path.display()
        )));
    }
    let n_in = read_u32(&mut r)? as usize;
    let n_hidden = read_u32(&mut r)? as usize;
    let n_out = read_u32(&mut r)? as usize;
    let shape = NetShape::new(n_in, n_hidden, n_out);
    let mut data = Vec::with_capacity(shape.len());
    let mut f64_buf = [0u8; 8];
    for _ in 0..shape.len() {
        r.read_exact(&mut f64_buf).map_err(|e| Error::io(path, e))?;
        data.push(f64::from_le_bytes(f64_buf));
    }
    Ok(Params { shape, data })
}

/// Serializes a float with 17 significant digits, enough to round-trip any
/// f64 exactly.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "null".to_string(), fmt_f64)
}

/// Writes a trajectory as JSON Lines, one record per applied step.
pub fn export_trajectory(cfg: &EngineConfig, traj: &Trajectory, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut cum_w = 0.0;
    let mut cum_q_in = 0.0;
    for (i, step) in traj.steps.iter().enumerate() {
        let next = step.outcome.next;
        cum_w += step.outcome.dw;
        cum_q_in += step.outcome.dq_in;
        let line = format!(
            concat!(
                "{{\"t\":{},\"action\":\"{}\",\"V\":{},\"T\":{},\"P\":{},",
                "\"dW\":{},\"dQ\":{},\"dQ_in\":{},\"cumW\":{},\"cumQin\":{},",
                "\"eta\":{},\"W_budget\":{},\"Q_budget\":{}}}"
            ),
            i,
            step.action.name(),
            fmt_f64(next.v),
            fmt_f64(next.t),
            fmt_f64(next.pressure(cfg)),
            fmt_f64(step.outcome.dw),
            fmt_f64(step.outcome.dq),
            fmt_f64(step.outcome.dq_in),
            fmt_f64(cum_w),
            fmt_f64(cum_q_in),
            fmt_opt(traj.eta_by_step[i]),
            fmt_opt(next.w_budget),
            fmt_opt(next.q_budget),
        );
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One parsed trajectory record; only the fields the tooling consumes.
#[derive(Debug, Clone)]
pub struct TrajPoint {
    pub t: usize,
    pub action: Action,
    pub v: f64,
    pub temp: f64,
    pub dw: f64,
    pub dq: f64,
    pub dq_in: f64,
    pub eta: Option<f64>,
}

/// Parses a trajectory JSONL file.
pub fn load_trajectory(path: &Path) -> Result<Vec<TrajPoint>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut points = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| {
            Error::Format(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        let field = |name: &str| -> Result<f64> {
            value
                .get(name)
                .and_then(|v| v.as_f64())
                .ok_or_else(|| {
                    Error::Format(format!(
                        "{}:{}: missing numeric field `{name}`",
                        path.display(),
                        lineno + 1
                    ))
                })
        };
        let action_name = value
            .get("action")
            .and_then(|v| v.as_str())
            .ok_or_else(|| {
                Error::Format(format!("{}:{}: missing `action`", path.display(), lineno + 1))
            })?;
        points.push(TrajPoint {
            t: field("t")? as usize,
            action: Action::parse(action_name)?,
            v: field("V")?,
            temp: field("T")?,
            dw: field("dW")?,
            dq: field("dQ")?,
            dq_in: field("dQ_in")?,
            eta: value.get("eta").and_then(|v| v.as_f64()),
        });
    }
    Ok(points)
}

/// A CSV file with `#`-prefixed metadata lines (config hash, seed) followed
/// by a header row. Rows are appended as the run progresses.
pub struct CurveWriter {
    w: BufWriter<File>,
    path: std::path::PathBuf,
}

impl CurveWriter {
    pub fn create(path: &Path, meta: &[(&str, String)], header: &str) -> Result<CurveWriter> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (k, v) in meta {
            writeln!(w, "# {k}={v}").map_err(|e| Error::io(path, e))?;
        }
        writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
        Ok(CurveWriter { w, path: path.to_path_buf() })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        writeln!(self.w, "{}", fields.join(",")).map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Canonical CSV cell for an optional float: full precision, `nan` when
/// undefined.
pub fn csv_cell(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => fmt_f64(v),
        Some(_) | None => "nan".to_string(),
    }
}

/// FNV-1a hash of a canonical config string, printed as 16 hex digits.
pub fn fnv1a_hex(s: &str) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in s.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine;
    use crate::seeds::child_rng;

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        let shape = NetShape::new(4, 16, 9);
        let params = Params::init(&shape, &mut child_rng(1, 0, 0));
        save_checkpoint(&path, &params).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.shape, shape);
        assert_eq!(loaded.data, params.data);
        // Header is magic + 4 u32 fields, then 8 bytes per parameter.
        let len = std::fs::metadata(&path).unwrap().len();
        assert_eq!(len, 20 + 8 * shape.len() as u64);
    }

    #[test]
    fn checkpoint_rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));
    }

    #[test]
    fn empty_trajectory_exports_an_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        let cfg = EngineConfig::default();
        let traj = Trajectory::new(engine::reset(&cfg).unwrap());
        export_trajectory(&cfg, &traj, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap().len(), 0);
    }

    #[test]
    fn trajectory_round_trips_numeric_fields_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.jsonl");
        let cfg = EngineConfig::default();
        let start = engine::reset(&cfg).unwrap();
        let actions = vec![
            Action::IsochoricHeat,
            Action::IsothermalCompressHot,
            Action::AdiabaticExpand,
            Action::IsochoricCool,
        ];
        let traj = engine::replay(&cfg, start, &actions).unwrap();
        export_trajectory(&cfg, &traj, &path).unwrap();
        let points = load_trajectory(&path).unwrap();
        assert_eq!(points.len(), traj.len());
        for (p, s) in points.iter().zip(&traj.steps) {
            assert_eq!(p.v.to_bits(), s.outcome.next.v.to_bits());
            assert_eq!(p.temp.to_bits(), s.outcome.next.t.to_bits());
            assert_eq!(p.dw.to_bits(), s.outcome.dw.to_bits());
            assert_eq!(p.action, s.action);
        }
    }

    #[test]
    fn full_rollout_exports_one_line_per_step() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roll.jsonl");
        let cfg = EngineConfig { k_max: 37, ..EngineConfig::default() };
        let start = engine::reset(&cfg).unwrap();
        let actions = vec![Action::IsochoricHeat; cfg.k_max];
        let traj = engine::replay(&cfg, start, &actions).unwrap();
        export_trajectory(&cfg, &traj, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), cfg.k_max);
    }

    #[test]
    fn fnv_hash_is_stable() {
        assert_eq!(fnv1a_hex(""), "cbf29ce484222325");
        assert_eq!(fnv1a_hex("a"), fnv1a_hex("a"));
        assert_ne!(fnv1a_hex("a"), fnv1a_hex("b"));
    }
}
