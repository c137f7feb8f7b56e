//! Phase 2: blocked shared-near-neighbor similarity testing over knn-matrix
//! tile pairs, merge-edge emission, and label finalization.
//!
//! Two points merge when each appears in the other's neighbor list and
//! their lists share strictly more than `theta` neighbors (positions
//! `1..k-1`; position 0 is the point itself). The single-pass relabel of
//! the similarity loop is order-dependent, so the pipeline emits merge
//! edges instead and closes them into connected components with min-id
//! canonical labels. The literal single-pass variant is kept as a
//! diagnostic (`labels_literal`).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::PathBuf;

use crate::em_model::{BlockStore, EmArray};
use crate::error::{EmError, Result};
use crate::knn_phase::build_knn_oracle;

/// Rows per phase-2 tile: `floor(M_slots / (2 (k + 1)))`. Resident at
/// once: two knn tiles of `t * k` and two label tiles of `t`.
pub fn phase2_tile_size(m_bytes: u64, k: u32, element_width: u64) -> Result<u64> {
    let slots = m_bytes / element_width;
    let per_row = 2 * (k as u64 + 1);
    let t = slots / per_row;
    if t == 0 {
        return Err(EmError::Config(format!(
            "memory budget of {m_bytes} bytes ({slots} slots) is below the \
             {per_row} slots one phase-2 tile row needs (t = M_slots / (2 (k + 1))); \
             minimum budget is {} bytes",
            per_row * element_width
        )));
    }
    Ok(t)
}

/// An undirected merge edge with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct MergeEdge {
    pub a: u64,
    pub b: u64,
}

impl MergeEdge {
    pub fn new(x: u64, y: u64) -> MergeEdge {
        debug_assert_ne!(x, y);
        MergeEdge {
            a: x.min(y),
            b: x.max(y),
        }
    }
}

/// The SNN similarity predicate over two knn rows. Symmetric; the caller
/// never passes a row against itself.
pub fn snn_similar(row_r: &[u64], row_l: &[u64], theta: u32) -> bool {
    let r = row_r[0];
    let l = row_l[0];
    // Membership scans cover the whole row, position 0 included, matching
    // the two knn[.][0] scans of the clustering loop.
    if !row_l.contains(&r) || !row_r.contains(&l) {
        return false;
    }
    let mut shared = 0u32;
    for p in &row_r[1..] {
        if row_l[1..].contains(p) {
            shared += 1;
        }
    }
    shared > theta
}

/// Collects merge edges, spilling to a scratch file past an in-memory cap.
/// Spill location: `EMSNN_TMPDIR` if set, else the system temp dir.
pub struct EdgeSink {
    cap: usize,
    in_mem: Vec<MergeEdge>,
    spill: Option<BufWriter<File>>,
    spilled: u64,
    spill_path: Option<PathBuf>,
}

impl EdgeSink {
    pub const DEFAULT_CAP: usize = 1 << 22;

    pub fn new() -> EdgeSink {
        EdgeSink::with_capacity(Self::DEFAULT_CAP)
    }

    pub fn with_capacity(cap: usize) -> EdgeSink {
        EdgeSink {
            cap: cap.max(1),
            in_mem: Vec::new(),
            spill: None,
            spilled: 0,
            spill_path: None,
        }
    }

    fn spill_dir() -> PathBuf {
        std::env::var_os("EMSNN_TMPDIR")
            .map(PathBuf::from)
            .unwrap_or_else(std::env::temp_dir)
    }

    pub fn push(&mut self, edge: MergeEdge) -> Result<()> {
        if self.in_mem.len() < self.cap {
            self.in_mem.push(edge);
            return Ok(());
        }
        if self.spill.is_none() {
            let path = Self::spill_dir().join(format!(
                "emsnn-edges-{}-{:p}.spill",
                std::process::id(),
                self as *const _
            ));
            let file = File::options()
                .create(true)
                .truncate(true)
                .read(true)
                .write(true)
                .open(&path)?;
            self.spill_path = Some(path);
            self.spill = Some(BufWriter::new(file));
        }
        let w = self.spill.as_mut().unwrap();
        w.write_all(&edge.a.to_le_bytes())?;
        w.write_all(&edge.b.to_le_bytes())?;
        self.spilled += 1;
        Ok(())
    }

    pub fn len(&self) -> u64 {
        self.in_mem.len() as u64 + self.spilled
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Streams every collected edge through `f`, spilled ones first from
    /// disk. Consumes the sink and removes any spill file.
    pub fn for_each(mut self, mut f: impl FnMut(MergeEdge)) -> Result<()> {
        if let Some(mut w) = self.spill.take() {
            w.flush()?;
            let mut file = w.into_inner().map_err(|e| e.into_error())?;
            file.seek(SeekFrom::Start(0))?;
            let mut reader = BufReader::new(file);
            let mut buf = [0u8; 16];
            for _ in 0..self.spilled {
                reader.read_exact(&mut buf)?;
                f(MergeEdge {
                    a: u64::from_le_bytes(buf[0..8].try_into().unwrap()),
                    b: u64::from_le_bytes(buf[8..16].try_into().unwrap()),
                });
            }
        }
        if let Some(path) = self.spill_path.take() {
            let _ = std::fs::remove_file(path);
        }
        for e in self.in_mem.drain(..) {
            f(e);
        }
        Ok(())
    }

    pub fn into_vec(self) -> Result<Vec<MergeEdge>> {
        let mut out = Vec::new();
        self.for_each(|e| out.push(e))?;
        Ok(out)
    }
}

impl Default for EdgeSink {
    fn default() -> Self {
        EdgeSink::new()
    }
}

impl Drop for EdgeSink {
    fn drop(&mut self) {
        if let Some(path) = self.spill_path.take() {
            let _ = std::fs::remove_file(path);
        }
    }
}

/// Union-find where the smaller root always wins, so every root is the
/// minimum point id of its component.
pub struct DisjointSet {
    parent: Vec<u64>,
}

impl DisjointSet {
    pub fn new(n: u64) -> DisjointSet {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, mut x: u64) -> u64 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != x {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    pub fn union(&mut self, a: u64, b: u64) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return;
        }
        if ra < rb {
            self.parent[rb as usize] = ra;
        } else {
            self.parent[ra as usize] = rb;
        }
    }

    pub fn labels(mut self) -> Vec<u64> {
        (0..self.parent.len() as u64).map(|i| self.find(i)).collect()
    }
}

/// Connected-component closure of the merge-edge graph: `label[i]` is the
/// minimum point id reachable from `i`. Independent of edge order.
pub fn finalize_labels(edges: &[MergeEdge], n: u64) -> Vec<u64> {
    let mut dsu = DisjointSet::new(n);
    for e in edges {
        dsu.union(e.a, e.b);
    }
    dsu.labels()
}

/// As `finalize_labels`, but streaming from a sink (spill-aware).
pub fn finalize_labels_from_sink(sink: EdgeSink, n: u64) -> Result<Vec<u64>> {
    let mut dsu = DisjointSet::new(n);
    sink.for_each(|e| dsu.union(e.a, e.b))?;
    Ok(dsu.labels())
}

/// Blocked SNN pass over the knn matrix. Tile pairs `(i, j)` with `j >= i`
/// are pinned two at a time; every unordered row pair is tested exactly
/// once. When a tile pair yields at least one edge, the corresponding
/// label tiles are read through the store, mirroring the conditional
/// label-block reads of the clustering loop.
#[allow(clippy::too_many_arguments)]
pub fn snn_merge_blocked(
    store: &mut BlockStore,
    knn: &EmArray,
    labels: &EmArray,
    n: u64,
    k: u32,
    theta: u32,
    tile_rows: u64,
    sink: &mut EdgeSink,
) -> Result<()> {
    if tile_rows == 0 {
        return Err(EmError::Config("tile size must be at least 1".into()));
    }
    let kk = k as usize;
    let n_tiles = n.div_ceil(tile_rows);

    for ti in 0..n_tiles {
        let i0 = ti * tile_rows;
        let rows_i = (n - i0).min(tile_rows);
        let tile_i = store.pin_range(knn, i0 * k as u64, rows_i * k as u64)?;
        let rows_i_vals = tile_i.as_u64s();

        for tj in ti..n_tiles {
            let j0 = tj * tile_rows;
            let rows_j = (n - j0).min(tile_rows);
            let tile_j = if tj > ti {
                Some(store.pin_range(knn, j0 * k as u64, rows_j * k as u64)?)
            } else {
                None
            };
            let decoded;
            let rows_j_vals: &[u64] = match &tile_j {
                Some(view) => {
                    decoded = view.as_u64s();
                    &decoded
                }
                None => &rows_i_vals,
            };

            let mut found = false;
            for r in 0..rows_i as usize {
                let row_r = &rows_i_vals[r * kk..(r + 1) * kk];
                let l_start = if tj == ti { r + 1 } else { 0 };
                for l in l_start..rows_j as usize {
                    let row_l = &rows_j_vals[l * kk..(l + 1) * kk];
                    if snn_similar(row_r, row_l, theta) {
                        sink.push(MergeEdge::new(row_r[0], row_l[0]))?;
                        found = true;
                    }
                }
            }

            if found {
                let li = store.pin_range(labels, i0, rows_i)?;
                let lj = if tj > ti {
                    Some(store.pin_range(labels, j0, rows_j)?)
                } else {
                    None
                };
                store.unpin(li);
                if let Some(lj) = lj {
                    store.unpin(lj);
                }
            }

            if let Some(v) = tile_j {
                store.unpin(v);
            }
        }
        store.unpin(tile_i);
    }
    Ok(())
}

/// In-core labels from a precomputed knn matrix: every unordered pair
/// through `snn_similar`, closed with `finalize_labels`.
pub fn labels_from_knn_incore(knn_rows: &[u64], n: u64, k: u32, theta: u32) -> Vec<u64> {
    let kk = k as usize;
    let mut dsu = DisjointSet::new(n);
    for r in 0..n as usize {
        let row_r = &knn_rows[r * kk..(r + 1) * kk];
        for l in (r + 1)..n as usize {
            let row_l = &knn_rows[l * kk..(l + 1) * kk];
            if snn_similar(row_r, row_l, theta) {
                dsu.union(r as u64, l as u64);
            }
        }
    }
    dsu.labels()
}

/// The traditional in-core SNN oracle: brute-force knn, then the pairwise
/// similarity pass and closure. Reference implementation for acceptance.
pub fn snn_oracle(points: &[f64], n: u64, dims: u32, k: u32, theta: u32) -> Result<Vec<u64>> {
    let knn = build_knn_oracle(points, n, dims, k)?;
    Ok(labels_from_knn_incore(&knn, n, k, theta))
}

/// The literal single-pass relabel: on a similar pair the larger label is
/// overwritten by the smaller, with no transitive closure. Order-dependent
/// by construction; diagnostic only, excluded from acceptance.
pub fn labels_literal(knn_rows: &[u64], n: u64, k: u32, theta: u32) -> Vec<u64> {
    let kk = k as usize;
    let mut label: Vec<u64> = (0..n).collect();
    for r in 0..n as usize {
        let row_r = &knn_rows[r * kk..(r + 1) * kk];
        for l in (r + 1)..n as usize {
            let row_l = &knn_rows[l * kk..(l + 1) * kk];
            if snn_similar(row_r, row_l, theta) {
                if label[r] > label[l] {
                    label[r] = label[l];
                } else {
                    label[l] = label[r];
                }
            }
        }
    }
    label
}
