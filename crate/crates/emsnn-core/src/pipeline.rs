//! End-to-end drivers: the blocked two-phase pipeline over an explicit-pin
//! store, and the traditional (unblocked) algorithm over an LRU-cached
//! store as the I/O baseline. Both produce the same labels; only the
//! access pattern, and hence the counters, differ.

use std::time::Instant;

use crate::dataset_io::MetricsRow;
use crate::em_model::{
    bytes_to_u64s, u64s_to_bytes, Backing, BlockStore, IoCounters, StoreMode,
};
use crate::error::{EmError, Result};
use crate::knn_phase::{build_knn_blocked, phase1_tile_size};
use crate::snn_cluster::{
    finalize_labels, finalize_labels_from_sink, phase2_tile_size, snn_merge_blocked, snn_similar,
    DisjointSet, EdgeSink, MergeEdge,
};

/// Run parameters shared by both pipelines. Tile overrides exist for the
/// tiling-invariance checks; when absent the tile-size formulas apply.
#[derive(Debug, Clone, Copy)]
pub struct ExecParams {
    pub n: u64,
    pub dims: u32,
    pub k: u32,
    pub theta: u32,
    pub memory_budget_bytes: u64,
    pub block_size_bytes: u64,
    pub phase1_tile_override: Option<u64>,
    pub phase2_tile_override: Option<u64>,
}

pub const ELEMENT_WIDTH: u64 = 8;

impl ExecParams {
    pub fn phase1_tile(&self) -> Result<u64> {
        match self.phase1_tile_override {
            Some(t) if t >= 1 => Ok(t),
            Some(_) => Err(EmError::Config("phase-1 tile override must be >= 1".into())),
            None => phase1_tile_size(self.memory_budget_bytes, self.dims, self.k, ELEMENT_WIDTH),
        }
    }

    pub fn phase2_tile(&self) -> Result<u64> {
        match self.phase2_tile_override {
            Some(t) if t >= 1 => Ok(t),
            Some(_) => Err(EmError::Config("phase-2 tile override must be >= 1".into())),
            None => phase2_tile_size(self.memory_budget_bytes, self.k, ELEMENT_WIDTH),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhaseMetrics {
    pub phase: String,
    pub counters: IoCounters,
    pub elapsed_ms: u64,
}

impl PhaseMetrics {
    pub fn to_metrics_row(&self, keep_elapsed: bool) -> MetricsRow {
        MetricsRow {
            phase: self.phase.clone(),
            block_reads: self.counters.block_reads,
            block_writes: self.counters.block_writes,
            bytes_read: self.counters.bytes_read,
            bytes_written: self.counters.bytes_written,
            elapsed_ms: if keep_elapsed { self.elapsed_ms } else { 0 },
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub knn_rows: Vec<u64>,
    pub labels: Vec<u64>,
    pub n_edges: u64,
    pub phases: Vec<PhaseMetrics>,
    pub peak_pinned: u64,
    pub phase1_tile: u64,
    pub phase2_tile: u64,
}

impl PipelineOutput {
    pub fn total_transfers(&self) -> u64 {
        self.phases.iter().map(|p| p.counters.total_transfers()).sum()
    }

    pub fn phase(&self, name: &str) -> Option<&PhaseMetrics> {
        self.phases.iter().find(|p| p.phase == name)
    }
}

/// The blocked two-phase pipeline: tiled knn construction, tiled SNN
/// merge, connected-component label closure, final label write-back.
pub fn run_blocked(points: &[f64], params: &ExecParams, backing: Backing) -> Result<PipelineOutput> {
    let t1 = params.phase1_tile()?;
    let t2 = params.phase2_tile()?;
    let mut store = BlockStore::new(
        params.block_size_bytes,
        params.memory_budget_bytes,
        StoreMode::ExplicitPin,
        backing,
    )?;
    let dataset = store.alloc_array(params.n * params.dims as u64, ELEMENT_WIDTH)?;
    store.stage(&dataset, &crate::em_model::f64s_to_bytes(points))?;

    // Phase 1.
    let before = store.counters();
    let started = Instant::now();
    let knn = build_knn_blocked(&mut store, &dataset, params.n, params.dims, params.k, t1)?;
    let phase1 = PhaseMetrics {
        phase: "knn".into(),
        counters: store.counters().since(&before),
        elapsed_ms: started.elapsed().as_millis() as u64,
    };

    // Phase 2. The identity-initialized label table is an input of the
    // clustering step, staged uncounted.
    let labels_arr = store.alloc_array(params.n, ELEMENT_WIDTH)?;
    store.stage(&labels_arr, &u64s_to_bytes(&(0..params.n).collect::<Vec<u64>>()))?;

    let before = store.counters();
    let started = Instant::now();
    let mut sink = EdgeSink::new();
    snn_merge_blocked(
        &mut store,
        &knn,
        &labels_arr,
        params.n,
        params.k,
        params.theta,
        t2,
        &mut sink,
    )?;
    let n_edges = sink.len();
    let labels = finalize_labels_from_sink(sink, params.n)?;
    store.write_range(&labels_arr, 0, params.n, &u64s_to_bytes(&labels))?;
    let phase2 = PhaseMetrics {
        phase: "cluster".into(),
        counters: store.counters().since(&before),
        elapsed_ms: started.elapsed().as_millis() as u64,
    };

    let knn_rows = bytes_to_u64s(&store.dump(&knn)?);
    Ok(PipelineOutput {
        knn_rows,
        labels,
        n_edges,
        phases: vec![phase1, phase2],
        peak_pinned: store.counters().peak_pinned,
        phase1_tile: t1,
        phase2_tile: t2,
    })
}

/// The traditional algorithm's access pattern over an LRU-cached store:
/// row-at-a-time unblocked reads for both phases, label reads and writes
/// on every merge. Labels are still closed into components afterwards so
/// the output contract matches the blocked pipeline.
pub fn run_traditional_lru(
    points: &[f64],
    params: &ExecParams,
    backing: Backing,
) -> Result<PipelineOutput> {
    let n = params.n;
    let d = params.dims as usize;
    let kk = params.k as usize;
    if params.k as u64 > n || params.k == 0 {
        return Err(EmError::Config(format!(
            "k = {} must be in 1..={n}",
            params.k
        )));
    }
    let mut store = BlockStore::new(
        params.block_size_bytes,
        params.memory_budget_bytes,
        StoreMode::LruCached,
        backing,
    )?;
    let dataset = store.alloc_array(n * d as u64, ELEMENT_WIDTH)?;
    store.stage(&dataset, &crate::em_model::f64s_to_bytes(points))?;
    let knn_arr = store.alloc_array(n * kk as u64, ELEMENT_WIDTH)?;
    let labels_arr = store.alloc_array(n, ELEMENT_WIDTH)?;
    store.stage(&labels_arr, &u64s_to_bytes(&(0..n).collect::<Vec<u64>>()))?;

    // Phase 1: for every point, sweep all points, keep the sorted
    // candidate list, write the knn row when done.
    let before = store.counters();
    let started = Instant::now();
    let mut row_buf = vec![0u8; d * 8];
    let mut p = vec![0.0f64; d];
    let mut q = vec![0.0f64; d];
    let mut cand_d = vec![f64::INFINITY; kk.saturating_sub(1)];
    let mut cand_i = vec![u64::MAX; kk.saturating_sub(1)];
    for i in 0..n {
        store.lru_read_into(&dataset, i * d as u64, d as u64, &mut row_buf)?;
        decode_f64s(&row_buf, &mut p);
        cand_d.fill(f64::INFINITY);
        cand_i.fill(u64::MAX);
        for j in 0..n {
            if j == i {
                continue;
            }
            store.lru_read_into(&dataset, j * d as u64, d as u64, &mut row_buf)?;
            decode_f64s(&row_buf, &mut q);
            let mut acc = 0.0f64;
            for (a, b) in p.iter().zip(&q) {
                acc += (a - b) * (a - b);
            }
            let dist = acc.sqrt();
            if kk > 1 {
                crate::knn_phase::insert_candidate(&mut cand_d, &mut cand_i, dist, j);
            }
        }
        let mut row = Vec::with_capacity(kk);
        row.push(i);
        row.extend_from_slice(&cand_i);
        store.lru_write_range(&knn_arr, i * kk as u64, kk as u64, &u64s_to_bytes(&row))?;
    }
    store.lru_flush()?;
    let phase1 = PhaseMetrics {
        phase: "knn".into(),
        counters: store.counters().since(&before),
        elapsed_ms: started.elapsed().as_millis() as u64,
    };

    // Phase 2: every unordered row pair through the cache; merges touch
    // the label table read-modify-write, as the unblocked loop does.
    let before = store.counters();
    let started = Instant::now();
    let mut row_r_buf = vec![0u8; kk * 8];
    let mut row_l_buf = vec![0u8; kk * 8];
    let mut row_r = vec![0u64; kk];
    let mut row_l = vec![0u64; kk];
    let mut edges: Vec<MergeEdge> = Vec::new();
    let mut label_buf = [0u8; 8];
    for r in 0..n {
        store.lru_read_into(&knn_arr, r * kk as u64, kk as u64, &mut row_r_buf)?;
        decode_u64s(&row_r_buf, &mut row_r);
        for l in (r + 1)..n {
            store.lru_read_into(&knn_arr, l * kk as u64, kk as u64, &mut row_l_buf)?;
            decode_u64s(&row_l_buf, &mut row_l);
            if snn_similar(&row_r, &row_l, params.theta) {
                edges.push(MergeEdge::new(r, l));
                store.lru_read_into(&labels_arr, r, 1, &mut label_buf)?;
                let lab_r = u64::from_le_bytes(label_buf);
                store.lru_read_into(&labels_arr, l, 1, &mut label_buf)?;
                let lab_l = u64::from_le_bytes(label_buf);
                let (target, value) = if lab_r > lab_l { (r, lab_l) } else { (l, lab_r) };
                store.lru_write_range(&labels_arr, target, 1, &value.to_le_bytes())?;
            }
        }
    }
    let n_edges = edges.len() as u64;
    let labels = finalize_labels(&edges, n);
    store.lru_write_range(&labels_arr, 0, n, &u64s_to_bytes(&labels))?;
    store.lru_flush()?;
    let phase2 = PhaseMetrics {
        phase: "cluster".into(),
        counters: store.counters().since(&before),
        elapsed_ms: started.elapsed().as_millis() as u64,
    };

    let knn_rows = bytes_to_u64s(&store.dump(&knn_arr)?);
    Ok(PipelineOutput {
        knn_rows,
        labels,
        n_edges,
        phases: vec![phase1, phase2],
        peak_pinned: store.counters().peak_pinned,
        phase1_tile: 1,
        phase2_tile: 1,
    })
}

/// In-core reference pipeline (correctness only; its store-free execution
/// makes no I/O claims).
pub fn run_oracle(points: &[f64], params: &ExecParams) -> Result<PipelineOutput> {
    let started = Instant::now();
    let knn_rows = crate::knn_phase::build_knn_oracle(points, params.n, params.dims, params.k)?;
    let kk = params.k as usize;
    let mut dsu = DisjointSet::new(params.n);
    let mut n_edges = 0u64;
    for r in 0..params.n as usize {
        for l in (r + 1)..params.n as usize {
            if snn_similar(
                &knn_rows[r * kk..(r + 1) * kk],
                &knn_rows[l * kk..(l + 1) * kk],
                params.theta,
            ) {
                dsu.union(r as u64, l as u64);
                n_edges += 1;
            }
        }
    }
    let labels = dsu.labels();
    let elapsed = started.elapsed().as_millis() as u64;
    Ok(PipelineOutput {
        knn_rows,
        labels,
        n_edges,
        phases: vec![
            PhaseMetrics {
                phase: "knn".into(),
                counters: IoCounters::default(),
                elapsed_ms: elapsed,
            },
            PhaseMetrics {
                phase: "cluster".into(),
                counters: IoCounters::default(),
                elapsed_ms: 0,
            },
        ],
        peak_pinned: 0,
        phase1_tile: params.n,
        phase2_tile: params.n,
    })
}

fn decode_f64s(bytes: &[u8], out: &mut [f64]) {
    for (o, c) in out.iter_mut().zip(bytes.chunks_exact(8)) {
        *o = f64::from_le_bytes(c.try_into().unwrap());
    }
}

fn decode_u64s(bytes: &[u8], out: &mut [u64]) {
    for (o, c) in out.iter_mut().zip(bytes.chunks_exact(8)) {
        *o = u64::from_le_bytes(c.try_into().unwrap());
    }
}
