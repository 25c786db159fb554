//! On-disk formats: checkpoints, training logs and sample tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::generator::{Architecture, GeneratorNet};
use crate::geometry::{ManifoldGeometry, ManifoldKind};
use crate::gradengine::ParamVector;
use crate::testfn::PlaneWaveBank;
use crate::training::{AdamState, TrainLogRecord, TrainState};

pub const CHECKPOINT_FORMAT: &str = "wanpf-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Exact position of a ChaCha stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    /// `u128` as decimal text; JSON numbers cannot hold it portably.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let bad = |what: &str| Error::Contract(format!("invalid RNG state: {what}"));
        let bytes = hex::decode(&self.seed).map_err(|_| bad("seed is not hex"))?;
        let seed: [u8; 32] = bytes.try_into().map_err(|_| bad("seed must be 32 bytes"))?;
        let pos: u128 = self.word_pos.parse().map_err(|_| bad("word position"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

/// A single JSON document: header, architecture, both players' parameters,
/// optimizer moments, RNG position and step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub step: usize,
    pub config: TrainConfig,
    pub architecture: Architecture,
    pub generator: ParamVector,
    pub adversary: PlaneWaveBank,
    pub adam_generator: AdamState,
    pub adam_adversary: AdamState,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn from_state(s: &TrainState) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            step: s.step,
            config: s.config.clone(),
            architecture: s.net.arch.clone(),
            generator: s.net.params.clone(),
            adversary: s.bank.clone(),
            adam_generator: s.adam_gen.clone(),
            adam_adversary: s.adam_adv.clone(),
            rng: RngState::capture(&s.rng),
        }
    }

    pub fn net(&self) -> Result<GeneratorNet> {
        GeneratorNet::from_params(self.architecture.clone(), self.generator.clone())
    }

    pub fn into_state(self) -> Result<TrainState> {
        let net = self.net()?;
        if self.adam_generator.m.len() != net.params.len() || self.adam_adversary.m.len() != self.adversary.flat().len() {
            return Err(Error::Contract("optimizer state does not match parameters".into()));
        }
        self.config.validate()?;
        Ok(TrainState {
            rng: self.rng.restore()?,
            net,
            bank: self.adversary,
            adam_gen: self.adam_generator,
            adam_adv: self.adam_adversary,
            config: self.config,
            step: self.step,
        })
    }
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut text = serde_json::to_string_pretty(ck)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = crate::error::read_text(path)?;
    let format_err = |reason: String| Error::Format { path: path.display().to_string(), reason };
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| format_err(e.to_string()))?;
    if ck.format != CHECKPOINT_FORMAT {
        return Err(format_err(format!("not a checkpoint (format `{}`)", ck.format)));
    }
    if ck.version != CHECKPOINT_VERSION {
        return Err(format_err(format!("unsupported checkpoint version {}", ck.version)));
    }
    Ok(ck)
}

/// Line-delimited JSON training log.
pub struct LogWriter {
    out: BufWriter<File>,
}

impl LogWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(LogWriter { out: BufWriter::new(File::create(path)?) })
    }

    pub fn append(&mut self, rec: &TrainLogRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn read_log(path: &Path) -> Result<Vec<TrainLogRecord>> {
    let text = crate::error::read_text(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Format {
                path: path.display().to_string(),
                reason: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Column names for a sample table on `geom`.
pub fn sample_header(geom: &ManifoldGeometry) -> Vec<String> {
    match geom.kind() {
        ManifoldKind::Sphere { n: 3 } => vec!["x".into(), "y".into(), "z".into()],
        ManifoldKind::FlatTorus { angles } => {
            let mut h: Vec<String> = (1..=angles).map(|i| format!("theta_{i}")).collect();
            for i in 1..=angles {
                h.push(format!("cos_{i}"));
                h.push(format!("sin_{i}"));
            }
            h
        }
        _ => (1..=geom.ambient_dim()).map(|i| format!("x{i}")).collect(),
    }
}

/// Shortest text that still round-trips: 17 significant digits.
pub fn format_coord(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes ambient points (plus angles on tori) as CSV.
pub fn write_samples(path: &Path, geom: &ManifoldGeometry, points: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(sample_header(geom)).map_err(csv_err)?;
    for p in points {
        let mut row: Vec<String> = Vec::with_capacity(p.len() * 2);
        if let ManifoldKind::FlatTorus { .. } = geom.kind() {
            row.extend(p.chunks_exact(2).map(|c| format_coord(c[1].atan2(c[0]))));
        }
        row.extend(p.iter().map(|&v| format_coord(v)));
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    write_atomic(path, &bytes)
}

/// A parsed sample table.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl SampleTable {
    /// Ambient coordinates of each row: every column except torus angles.
    pub fn ambient_points(&self) -> Vec<Vec<f64>> {
        let skip = self.header.iter().take_while(|h| h.starts_with("theta_")).count();
        self.rows.iter().map(|r| r[skip..].to_vec()).collect()
    }
}

pub fn read_samples(path: &Path) -> Result<SampleTable> {
    let format_err = |reason: String| Error::Format { path: path.display().to_string(), reason };
    let file = std::fs::File::open(path).map_err(|source| Error::Read { path: path.display().to_string(), source })?;
    let mut r = csv::Reader::from_reader(file);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| format_err(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() {
        return Err(format_err("missing header".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| format_err(e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| format_err(format!("row {}: {e}", i + 1)))?;
        rows.push(row);
    }
    Ok(SampleTable { path: path.to_path_buf(), header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn coordinates_round_trip(v in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
            prop_assert_eq!(format_coord(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn sample_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = ManifoldGeometry::sphere(3).unwrap();
        let pts = vec![vec![0.6, 0.0, 0.8], vec![1.0 / 3f64.sqrt(); 3]];
        let path = dir.path().join("s.csv");
        write_samples(&path, &g, &pts).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x,y,z\n"));
        let t = read_samples(&path).unwrap();
        assert_eq!(t.ambient_points(), pts);

        write_samples(&path, &g, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "x,y,z\n");
        assert!(read_samples(&path).unwrap().rows.is_empty());
    }

    #[test]
    fn torus_csv_has_angles_and_coordinates() {
        let dir = tempfile::tempdir().unwrap();
        let g = ManifoldGeometry::flat_torus(2).unwrap();
        let pts = vec![g.retract(&[0.5, -2.0]).unwrap().0];
        let path = dir.path().join("t.csv");
        write_samples(&path, &g, &pts).unwrap();
        let t = read_samples(&path).unwrap();
        assert_eq!(t.header, ["theta_1", "theta_2", "cos_1", "sin_1", "cos_2", "sin_2"]);
        assert!((t.rows[0][0] - 0.5).abs() < 1e-15 && (t.rows[0][1] + 2.0).abs() < 1e-15);
        assert_eq!(t.ambient_points(), pts);
    }

    #[test]
    fn malformed_samples_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x,y,z\n1,2,oops\n").unwrap();
        let e = read_samples(&path).unwrap_err().to_string();
        assert!(e.contains("bad.csv") && e.contains("row 1"), "{e}");
    }

    #[test]
    fn rng_state_round_trip() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        rng.set_stream(7);
        for _ in 0..13 {
            rng.random::<u32>();
        }
        let mut back = RngState::capture(&rng).restore().unwrap();
        for _ in 0..20 {
            assert_eq!(rng.random::<u64>(), back.random::<u64>());
        }
    }

    #[test]
    fn checkpoint_round_trip_resumes_identically() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig { width: 6, test_functions: 5, batch_size: 8, steps: 4, ..TrainConfig::default() };
        let mut a = TrainState::new(cfg).unwrap();
        a.step().unwrap();
        let path = dir.path().join("ck.json");
        write_checkpoint(&path, &a.to_checkpoint()).unwrap();
        let mut b = read_checkpoint(&path).unwrap().into_state().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.step().unwrap(), b.step().unwrap());
        assert_eq!(a, b);
        assert!(!dir.path().join(".ck.json.tmp").exists());
    }

    #[test]
    fn foreign_json_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        std::fs::write(&path, "{\"hello\": 1}").unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Format { .. })));
    }
}
