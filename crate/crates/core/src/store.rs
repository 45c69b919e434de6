//! Snapshots of streaming state and batch CSV files.
//!
//! A snapshot is laid out as
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `RWS1` |
//! | 4 | format version, `u32` little-endian |
//! | 4 | metadata length `m`, `u32` little-endian |
//! | m | metadata, UTF-8 JSON |
//! | … | payload: little-endian `f64` arrays, then one byte per defined flag |
//! | 8 | CRC-64/XZ of every preceding byte, little-endian |
//!
//! Kernel payload: grid points, accumulated `J` blocks, estimates, defined
//! flags. Spline payload: knots, `B`, `V`.

use std::path::Path;

use crc::{Crc, CRC_64_XZ};
use serde::{Deserialize, Serialize};

use crate::batch::Batch;
use crate::error::{Error, Result};
use crate::estfun::BuiltinFamily;
use crate::grid::EvaluationGrid;
use crate::kernel::{BandwidthRule, KernelKind};
use crate::renew::RenewableState;
use crate::spline::{SplineBasis, SplineState};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"RWS1";
pub const SNAPSHOT_VERSION: u32 = 1;

const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);
const HEADER_LEN: usize = 12;
const CHECKSUM_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum SnapshotState {
    Kernel(RenewableState<f64>),
    Spline(SplineState<f64>),
}

/// Configuration a kernel stream was started with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSettings {
    pub estimating_function: BuiltinFamily,
    pub kernel: KernelKind,
    pub bandwidth: BandwidthRule<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSnapshot {
    /// Free-form estimator label, e.g. `rws-hk`.
    pub estimator: String,
    /// Present for kernel states.
    pub settings: Option<KernelSettings>,
    pub state: SnapshotState,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    estimator: String,
    kind: String,
    settings: Option<KernelSettings>,
    support: (f64, f64),
    trim: f64,
    points: usize,
    dim: usize,
    batch_count: u64,
    cumulative_n: u64,
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialises a snapshot to bytes.
pub fn encode(snapshot: &StateSnapshot) -> Vec<u8> {
    let mut payload = Vec::new();
    let meta = match &snapshot.state {
        SnapshotState::Kernel(s) => {
            put_f64s(&mut payload, s.grid().points());
            put_f64s(&mut payload, s.jsum());
            put_f64s(&mut payload, s.estimates());
            payload.extend(s.defined_mask().iter().map(|&d| d as u8));
            Meta {
                estimator: snapshot.estimator.clone(),
                kind: "kernel".into(),
                settings: snapshot.settings.clone(),
                support: s.grid().support(),
                trim: s.grid().trim(),
                points: s.grid().len(),
                dim: s.dim(),
                batch_count: s.batch_count(),
                cumulative_n: s.cumulative_n(),
            }
        }
        SnapshotState::Spline(s) => {
            put_f64s(&mut payload, s.basis().knots());
            put_f64s(&mut payload, s.bmat());
            put_f64s(&mut payload, s.vvec());
            Meta {
                estimator: snapshot.estimator.clone(),
                kind: "spline".into(),
                settings: snapshot.settings.clone(),
                support: s.basis().support(),
                trim: 0.0,
                points: s.basis().knots().len(),
                dim: s.basis().dim(),
                batch_count: s.batch_count(),
                cumulative_n: s.cumulative_n(),
            }
        }
    };
    let json = serde_json::to_vec(&meta).expect("metadata serialises");
    let mut out = Vec::with_capacity(HEADER_LEN + json.len() + payload.len() + CHECKSUM_LEN);
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    let crc = CRC64.checksum(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Corruption("payload shorter than its metadata declares".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Corruption("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

/// Parses bytes written by [`encode`].
pub fn decode(bytes: &[u8]) -> Result<StateSnapshot> {
    if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
        return Err(Error::Corruption(format!("file is only {} bytes", bytes.len())));
    }
    if &bytes[..4] != SNAPSHOT_MAGIC {
        return Err(Error::Corruption("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != SNAPSHOT_VERSION {
        return Err(Error::Version { found: version, supported: SNAPSHOT_VERSION });
    }
    let (body, tail) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    let actual = CRC64.checksum(body);
    if stored != actual {
        return Err(Error::Corruption(format!("checksum mismatch (stored {stored:016x}, computed {actual:016x})")));
    }
    let meta_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let mut r = Reader { bytes: body, pos: HEADER_LEN };
    let meta: Meta =
        serde_json::from_slice(r.take(meta_len)?).map_err(|e| Error::Corruption(format!("metadata: {e}")))?;
    let state = match meta.kind.as_str() {
        "kernel" => {
            let (n, d) = (meta.points, meta.dim);
            if d == 0 {
                return Err(Error::Corruption("zero dimension".into()));
            }
            let points = r.f64s(n)?;
            let jsum = r.f64s(n * d * d)?;
            let estimate = r.f64s(n * d)?;
            let defined = r
                .take(n)?
                .iter()
                .map(|&b| match b {
                    0 => Ok(false),
                    1 => Ok(true),
                    other => Err(Error::Corruption(format!("defined flag byte {other}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            let grid = EvaluationGrid::from_points(points, meta.support, meta.trim)
                .map_err(|e| Error::Corruption(format!("grid: {e}")))?;
            SnapshotState::Kernel(RenewableState::from_parts(
                grid,
                d,
                jsum,
                estimate,
                defined,
                meta.batch_count,
                meta.cumulative_n,
            )?)
        }
        "spline" => {
            let knots = r.f64s(meta.points)?;
            let basis = SplineBasis::new(knots, meta.support).map_err(|e| Error::Corruption(format!("basis: {e}")))?;
            let p = basis.dim();
            if p != meta.dim {
                return Err(Error::Corruption(format!("basis dimension {p} does not match metadata {}", meta.dim)));
            }
            let bmat = r.f64s(p * p)?;
            let vvec = r.f64s(p)?;
            SnapshotState::Spline(SplineState::from_parts(basis, bmat, vvec, meta.batch_count, meta.cumulative_n)?)
        }
        other => return Err(Error::Corruption(format!("unknown state kind `{other}`"))),
    };
    if r.pos != body.len() {
        return Err(Error::Corruption(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Ok(StateSnapshot { estimator: meta.estimator, settings: meta.settings, state })
}

pub fn save_state(snapshot: &StateSnapshot, path: &Path) -> Result<()> {
    std::fs::write(path, encode(snapshot))?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<StateSnapshot> {
    decode(&std::fs::read(path)?)
}

/// Reads a batch from a CSV file with header `x,y`.
pub fn read_batch_csv(path: &Path) -> Result<Batch<f64>> {
    let parse_err = |line: u64, message: String| Error::Parse { path: path.to_path_buf(), line, message };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => parse_err(1, format!("{other:?}")),
    })?;
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if headers.len() != 2 || headers[0].trim() != "x" || headers[1].trim() != "y" {
        return Err(parse_err(1, format!("expected header `x,y`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<f64> {
            let text = record[i].trim();
            let v: f64 = text.parse().map_err(|_| parse_err(line, format!("`{text}` is not a number")))?;
            if !v.is_finite() {
                return Err(Error::Data { path: path.to_path_buf(), line, message: format!("non-finite value `{text}`") });
            }
            Ok(v)
        };
        xs.push(field(0)?);
        ys.push(field(1)?);
    }
    if xs.is_empty() {
        return Err(Error::InvalidBatch(format!("{}: no observations", path.display())));
    }
    Batch::new(xs, ys, 1)
}

/// Writes a batch as `x,y` CSV with 17 significant digits per value.
pub fn write_batch_csv(batch: &Batch<f64>, path: &Path) -> Result<()> {
    let mut text = String::with_capacity(48 * (batch.len() + 1));
    text.push_str("x,y\n");
    for (x, y) in batch.xs().iter().zip(batch.ys()) {
        text.push_str(&format!("{x:.16e},{y:.16e}\n"));
    }
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use crate::simgen::{generate_stream, ModelFamily, StreamPlan};

    fn kernel_snapshot() -> StateSnapshot {
        let batches: Vec<Batch<f64>> =
            generate_stream(ModelFamily::Heteroscedastic, &StreamPlan::new(300, 100, 4, 0).unwrap()).unwrap();
        let grid = EvaluationGrid::uniform(-1.0, 1.0, 21, 0.05).unwrap();
        let mut state = RenewableState::new(grid, 2).unwrap();
        let f = BuiltinFamily::MeanVariance;
        for b in &batches {
            state.update_newton(b, 0.3, &KernelSpec::gaussian(), &f, &Default::default()).unwrap();
        }
        StateSnapshot {
            estimator: "rws-hf".into(),
            settings: Some(KernelSettings {
                estimating_function: f,
                kernel: KernelKind::Gaussian,
                bandwidth: BandwidthRule::fixed(0.3).unwrap(),
            }),
            state: SnapshotState::Kernel(state),
        }
    }

    #[test]
    fn round_trip_kernel_and_spline() {
        let snap = kernel_snapshot();
        assert_eq!(decode(&encode(&snap)).unwrap(), snap);

        let basis = SplineBasis::equidistant(3, (-3.0, 3.0)).unwrap();
        let mut s = SplineState::new(basis);
        let b: Vec<Batch<f64>> = generate_stream(ModelFamily::Homoscedastic, &StreamPlan::new(50, 50, 1, 0).unwrap()).unwrap();
        s.update(&b[0]).unwrap();
        let snap = StateSnapshot { estimator: "rws-knf".into(), settings: None, state: SnapshotState::Spline(s) };
        assert_eq!(decode(&encode(&snap)).unwrap(), snap);
    }

    #[test]
    fn corruption_and_version_detected() {
        let bytes = encode(&kernel_snapshot());
        for pos in [20, bytes.len() / 2, bytes.len() - 9, bytes.len() - 1] {
            let mut bad = bytes.clone();
            bad[pos] ^= 0x01;
            assert!(matches!(decode(&bad), Err(Error::Corruption(_))), "byte {pos}");
        }
        let mut future = bytes.clone();
        future[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(decode(&future), Err(Error::Version { found: 2, supported: 1 })));
        assert!(matches!(decode(&bytes[..10]), Err(Error::Corruption(_))));
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(matches!(decode(&magic), Err(Error::Corruption(_))));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let b: Vec<Batch<f64>> = generate_stream(ModelFamily::GammaLaw, &StreamPlan::new(40, 40, 8, 0).unwrap()).unwrap();
        let path = dir.path().join("b.csv");
        write_batch_csv(&b[0], &path).unwrap();
        let back = read_batch_csv(&path).unwrap();
        assert_eq!(back.xs(), b[0].xs());
        assert_eq!(back.ys(), b[0].ys());

        let write = |name: &str, text: &str| {
            let p = dir.path().join(name);
            std::fs::write(&p, text).unwrap();
            p
        };
        assert!(matches!(read_batch_csv(&write("h.csv", "x,y\n")), Err(Error::InvalidBatch(_))));
        assert!(matches!(read_batch_csv(&write("n.csv", "x,y\n1.0,NaN\n")), Err(Error::Data { line: 2, .. })));
        assert!(matches!(read_batch_csv(&write("p.csv", "x,y\n1,2\n1.0,abc\n")), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(read_batch_csv(&write("f.csv", "x,y\n1,2\n1\n")), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(read_batch_csv(&write("w.csv", "a,b\n1,2\n")), Err(Error::Parse { line: 1, .. })));
        let ok = read_batch_csv(&write("t.csv", "x,y\n1,2\n3,4")).unwrap();
        assert_eq!(ok.ys(), &[2.0, 4.0]);
    }
}
