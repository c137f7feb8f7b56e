//! On-disk formats and synthetic data generation.
//!
//! Binary artifacts are little-endian fixed-width with short magic headers:
//!
//! * `*.emsnn` — `"EMSNN1"`, point count (u64), dimensions (u32), element
//!   tag (u8, `0x01` = IEEE f64), then `n * d` coordinates row-major.
//! * `*.emknn` — `"EMKNN1"`, point count (u64), k (u32), then `n * k`
//!   point indices (u64) row-major; row `i` starts with `i` itself.
//! * `*.labels.csv` — one `point_id,label` line per point.
//! * `*.metrics.csv` — per-phase transfer counters.
//!
//! The generator is a self-contained xorshift64* PRNG plus Box–Muller, so
//! equal seeds give byte-identical files with no RNG library in the loop.
//! It is a stand-in distribution: Gaussian blobs around uniformly placed
//! cluster centers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::em_model::{bytes_to_f64s, bytes_to_u64s, f64s_to_bytes, u64s_to_bytes};
use crate::error::{EmError, Result};

pub const DATASET_MAGIC: &[u8; 6] = b"EMSNN1";
pub const KNN_MAGIC: &[u8; 6] = b"EMKNN1";
pub const ELEMENT_TAG_F64: u8 = 0x01;

pub const DATASET_HEADER_LEN: u64 = 6 + 8 + 4 + 1;
pub const KNN_HEADER_LEN: u64 = 6 + 8 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub n_points: u64,
    pub dims: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnnHeader {
    pub n_points: u64,
    pub k: u32,
}

/// xorshift64* with the standard shift triple (12, 25, 27) and the
/// Vigna multiplier 0x2545F4914F6CDD1D.
#[derive(Debug, Clone)]
pub struct Xorshift64Star {
    state: u64,
    spare_gaussian: Option<f64>,
}

impl Xorshift64Star {
    pub fn new(seed: u64) -> Xorshift64Star {
        Xorshift64Star {
            // The all-zero state is a fixed point; remap it.
            state: if seed == 0 { 0x9E3779B97F4A7C15 } else { seed },
            spare_gaussian: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545F4914F6CDD1D)
    }

    /// Uniform in (0, 1]: 53 mantissa bits, shifted to exclude zero so the
    /// Box–Muller logarithm is always defined.
    pub fn next_unit(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) * (1.0 / 9007199254740992.0)
    }

    /// Standard normal via Box–Muller, caching the paired deviate.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        let u1 = self.next_unit();
        let u2 = self.next_unit();
        let r = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_gaussian = Some(r * angle.sin());
        r * angle.cos()
    }
}

/// Parameters for the synthetic Gaussian-blob generator.
#[derive(Debug, Clone, Copy)]
pub struct GenSpec {
    pub n_points: u64,
    pub dims: u32,
    pub n_clusters: u64,
    /// Per-cluster standard deviation.
    pub spread: f64,
    /// Cluster centers are uniform in [-box_extent, box_extent] per axis.
    pub box_extent: f64,
    pub seed: u64,
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 {
            return Err(EmError::Config("n_points must be at least 1".into()));
        }
        if self.dims == 0 {
            return Err(EmError::Config("dims must be at least 1".into()));
        }
        if self.n_clusters == 0 {
            return Err(EmError::Config("n_clusters must be at least 1".into()));
        }
        if self.spread < 0.0 {
            return Err(EmError::Config("spread must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Generates the point coordinates for `spec`, row-major. Deterministic in
/// the seed: centers first, then per point a cluster draw followed by one
/// Gaussian per axis.
pub fn generate_points(spec: &GenSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = Xorshift64Star::new(spec.seed);
    let d = spec.dims as usize;

    let mut centers = vec![0.0f64; spec.n_clusters as usize * d];
    for c in centers.iter_mut() {
        *c = (rng.next_unit() * 2.0 - 1.0) * spec.box_extent;
    }

    let mut points = vec![0.0f64; spec.n_points as usize * d];
    for row in points.chunks_exact_mut(d) {
        let cluster = (rng.next_u64() % spec.n_clusters) as usize;
        let center = &centers[cluster * d..(cluster + 1) * d];
        for (x, &c) in row.iter_mut().zip(center) {
            *x = c + spec.spread * rng.next_gaussian();
        }
    }
    Ok(points)
}

pub fn generate_dataset(spec: &GenSpec, path: &Path) -> Result<()> {
    let points = generate_points(spec)?;
    write_dataset(path, spec.n_points, spec.dims, &points)
}

pub fn write_dataset(path: &Path, n_points: u64, dims: u32, points: &[f64]) -> Result<()> {
    if points.len() as u64 != n_points * dims as u64 {
        return Err(EmError::Invariant(format!(
            "dataset payload has {} values, expected {}",
            points.len(),
            n_points * dims as u64
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&n_points.to_le_bytes())?;
    w.write_all(&dims.to_le_bytes())?;
    w.write_all(&[ELEMENT_TAG_F64])?;
    w.write_all(&f64s_to_bytes(points))?;
    w.flush()?;
    Ok(())
}

/// Parses and validates a dataset header, including the payload-length
/// check against the actual file size.
pub fn read_dataset_header(path: &Path) -> Result<DatasetHeader> {
    let mut f = File::open(path)?;
    let mut head = [0u8; DATASET_HEADER_LEN as usize];
    f.read_exact(&mut head)
        .map_err(|_| EmError::Format(format!("{}: truncated header", path.display())))?;
    if &head[0..6] != DATASET_MAGIC {
        return Err(EmError::Format(format!("{}: bad magic", path.display())));
    }
    let n_points = u64::from_le_bytes(head[6..14].try_into().unwrap());
    let dims = u32::from_le_bytes(head[14..18].try_into().unwrap());
    if head[18] != ELEMENT_TAG_F64 {
        return Err(EmError::Format(format!(
            "{}: unknown element tag {:#x}",
            path.display(),
            head[18]
        )));
    }
    if n_points == 0 || dims == 0 {
        return Err(EmError::Format(format!(
            "{}: zero points or dimensions",
            path.display()
        )));
    }
    let expect = DATASET_HEADER_LEN + n_points * dims as u64 * 8;
    let actual = f.metadata()?.len();
    if actual != expect {
        return Err(EmError::Format(format!(
            "{}: payload length {actual} bytes, expected {expect}",
            path.display()
        )));
    }
    Ok(DatasetHeader { n_points, dims })
}

pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<f64>)> {
    let header = read_dataset_header(path)?;
    let mut f = File::open(path)?;
    let mut skip = [0u8; DATASET_HEADER_LEN as usize];
    f.read_exact(&mut skip)?;
    let mut payload = Vec::new();
    f.read_to_end(&mut payload)?;
    Ok((header, bytes_to_f64s(&payload)))
}

pub fn write_knn(path: &Path, n_points: u64, k: u32, rows: &[u64]) -> Result<()> {
    if rows.len() as u64 != n_points * k as u64 {
        return Err(EmError::Invariant(format!(
            "knn payload has {} entries, expected {}",
            rows.len(),
            n_points * k as u64
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(KNN_MAGIC)?;
    w.write_all(&n_points.to_le_bytes())?;
    w.write_all(&k.to_le_bytes())?;
    w.write_all(&u64s_to_bytes(rows))?;
    w.flush()?;
    Ok(())
}

pub fn read_knn_header(path: &Path) -> Result<KnnHeader> {
    let mut f = File::open(path)?;
    let mut head = [0u8; KNN_HEADER_LEN as usize];
    f.read_exact(&mut head)
        .map_err(|_| EmError::Format(format!("{}: truncated header", path.display())))?;
    if &head[0..6] != KNN_MAGIC {
        return Err(EmError::Format(format!("{}: bad magic", path.display())));
    }
    let n_points = u64::from_le_bytes(head[6..14].try_into().unwrap());
    let k = u32::from_le_bytes(head[14..18].try_into().unwrap());
    if n_points == 0 || k == 0 {
        return Err(EmError::Format(format!(
            "{}: zero points or zero k",
            path.display()
        )));
    }
    let expect = KNN_HEADER_LEN + n_points * k as u64 * 8;
    let actual = f.metadata()?.len();
    if actual != expect {
        return Err(EmError::Format(format!(
            "{}: payload length {actual} bytes, expected {expect}",
            path.display()
        )));
    }
    Ok(KnnHeader { n_points, k })
}

pub fn read_knn(path: &Path) -> Result<(KnnHeader, Vec<u64>)> {
    let header = read_knn_header(path)?;
    let mut f = File::open(path)?;
    let mut skip = [0u8; KNN_HEADER_LEN as usize];
    f.read_exact(&mut skip)?;
    let mut payload = Vec::new();
    f.read_to_end(&mut payload)?;
    Ok((header, bytes_to_u64s(&payload)))
}

/// Checks the row invariants of a knn matrix: row `i` starts with `i`,
/// all indices in range, entries pairwise distinct within a row.
pub fn validate_knn_rows(n_points: u64, k: u32, rows: &[u64]) -> Result<()> {
    let k = k as usize;
    for (i, row) in rows.chunks_exact(k).enumerate() {
        if row[0] != i as u64 {
            return Err(EmError::Format(format!(
                "knn row {i} starts with {} instead of itself",
                row[0]
            )));
        }
        for (p, &v) in row.iter().enumerate() {
            if v >= n_points {
                return Err(EmError::Format(format!(
                    "knn row {i} entry {p} is {v}, out of range"
                )));
            }
            if row[..p].contains(&v) {
                return Err(EmError::Format(format!("knn row {i} repeats index {v}")));
            }
        }
    }
    Ok(())
}

pub fn write_labels(labels: &[u64], path: &Path) -> Result<()> {
    if labels.is_empty() {
        return Err(EmError::Config("label table must not be empty".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    for (i, label) in labels.iter().enumerate() {
        writeln!(w, "{i},{label}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<u64>> {
    let reader = BufReader::new(File::open(path)?);
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let (id, label) = line
            .split_once(',')
            .ok_or_else(|| EmError::Format(format!("labels line {i}: missing comma")))?;
        let id: u64 = id
            .parse()
            .map_err(|_| EmError::Format(format!("labels line {i}: bad point id")))?;
        if id != i as u64 {
            return Err(EmError::Format(format!(
                "labels line {i}: point id {id} out of order"
            )));
        }
        labels.push(
            label
                .parse()
                .map_err(|_| EmError::Format(format!("labels line {i}: bad label")))?,
        );
    }
    Ok(labels)
}

/// One metrics row: transfer counters for a named phase of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricsRow {
    pub phase: String,
    pub block_reads: u64,
    pub block_writes: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub elapsed_ms: u64,
}

pub const METRICS_HEADER: &str = "phase,block_reads,block_writes,bytes_read,bytes_written,elapsed_ms";

pub fn write_metrics(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.phase, r.block_reads, r.block_writes, r.bytes_read, r.bytes_written, r.elapsed_ms
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn zero_spread_single_cluster_collapses_to_center() {
        let spec = GenSpec {
            n_points: 4,
            dims: 2,
            n_clusters: 1,
            spread: 0.0,
            box_extent: 10.0,
            seed: 42,
        };
        let pts = generate_points(&spec).unwrap();
        assert_eq!(pts.len(), 8);
        for row in pts.chunks_exact(2) {
            assert_eq!(row, &pts[0..2]);
        }
    }

    #[test]
    fn same_seed_gives_byte_identical_files() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GenSpec {
            n_points: 100,
            dims: 8,
            n_clusters: 4,
            spread: 0.5,
            box_extent: 10.0,
            seed: 7,
        };
        let a = dir.path().join("a.emsnn");
        let b = dir.path().join("b.emsnn");
        generate_dataset(&spec, &a).unwrap();
        generate_dataset(&spec, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn distinct_seeds_give_distinct_files() {
        let dir = tempfile::tempdir().unwrap();
        let base = GenSpec {
            n_points: 64,
            dims: 4,
            n_clusters: 2,
            spread: 1.0,
            box_extent: 5.0,
            seed: 0,
        };
        let a = dir.path().join("a.emsnn");
        let b = dir.path().join("b.emsnn");
        for pair in 0..8u64 {
            generate_dataset(&GenSpec { seed: 1000 + pair, ..base }, &a).unwrap();
            generate_dataset(&GenSpec { seed: 2000 + pair, ..base }, &b).unwrap();
            assert_ne!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        }
    }

    #[test]
    fn paper_scale_payload_size() {
        // N=10^4 points at D=64: payload is exactly 5,120,000 bytes.
        let dir = tempfile::tempdir().unwrap();
        let spec = GenSpec {
            n_points: 10_000,
            dims: 64,
            n_clusters: 8,
            spread: 1.0,
            box_extent: 100.0,
            seed: 1,
        };
        let path = dir.path().join("big.emsnn");
        generate_dataset(&spec, &path).unwrap();
        assert_eq!(
            fs::metadata(&path).unwrap().len(),
            DATASET_HEADER_LEN + 5_120_000
        );
        let header = read_dataset_header(&path).unwrap();
        assert_eq!(header, DatasetHeader { n_points: 10_000, dims: 64 });
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.emsnn");
        let pts = vec![0.0, 1.0, 2.5, 6.0];
        write_dataset(&path, 4, 1, &pts).unwrap();
        let (header, got) = read_dataset(&path).unwrap();
        assert_eq!(header.n_points, 4);
        assert_eq!(header.dims, 1);
        assert_eq!(got, pts);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.emsnn");
        fs::write(&path, b"NOTFMT\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x01").unwrap();
        assert!(matches!(
            read_dataset_header(&path),
            Err(EmError::Format(_))
        ));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.emsnn");
        write_dataset(&path, 4, 2, &[0.0; 8]).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(
            read_dataset_header(&path),
            Err(EmError::Format(_))
        ));
    }

    #[test]
    fn knn_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.emknn");
        let rows = vec![0, 1, 2, 1, 0, 2, 2, 1, 0, 3, 2, 1];
        write_knn(&path, 4, 3, &rows).unwrap();
        let (header, got) = read_knn(&path).unwrap();
        assert_eq!(header, KnnHeader { n_points: 4, k: 3 });
        assert_eq!(got, rows);
        validate_knn_rows(4, 3, &rows).unwrap();

        let bad = vec![1, 1, 2, 1, 0, 2, 2, 1, 0, 3, 2, 1];
        assert!(validate_knn_rows(4, 3, &bad).is_err());
    }

    #[test]
    fn labels_file_matches_worked_example() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.labels.csv");
        write_labels(&[0, 0, 0, 3], &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "0,0\n1,0\n2,0\n3,3\n");
        assert_eq!(read_labels(&path).unwrap(), vec![0, 0, 0, 3]);

        let single = dir.path().join("one.labels.csv");
        write_labels(&[0], &single).unwrap();
        assert_eq!(fs::read_to_string(&single).unwrap(), "0,0\n");

        assert!(write_labels(&[], &path).is_err());
    }
}
