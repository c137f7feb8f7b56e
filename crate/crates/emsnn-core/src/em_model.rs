//! Simulated external memory in the Aggarwal–Vitter sense: an unbounded
//! disk divided into blocks of `block_size_bytes` consecutive bytes, a main
//! memory of `memory_budget_bytes`, and counters that charge exactly one
//! transfer per block moved between the two.
//!
//! Two access disciplines are supported. `ExplicitPin` is used by the
//! blocked algorithms: callers pin whole tile ranges, the store enforces
//! that pinned bytes never exceed the budget, and every pin/write-back is
//! charged `ceil(span / B)` transfers. `LruCached` models the traditional
//! algorithm's unblocked access pattern with `floor(M / B)` cache frames
//! and least-recently-used eviction; a miss charges one read and evicting
//! a dirty frame charges one write.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::os::unix::fs::FileExt;
use std::path::Path;

use crate::error::{EmError, Result};

/// Block transfer counters. Monotonically nondecreasing; `bytes_read` is
/// always `block_reads * block_size_bytes` (partial trailing blocks are
/// charged as full blocks).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IoCounters {
    pub block_reads: u64,
    pub block_writes: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub peak_pinned: u64,
}

impl IoCounters {
    pub fn total_transfers(&self) -> u64 {
        self.block_reads + self.block_writes
    }

    /// Counter deltas since an earlier snapshot of the same store.
    /// `peak_pinned` is carried over as the later peak, not subtracted.
    pub fn since(&self, earlier: &IoCounters) -> IoCounters {
        IoCounters {
            block_reads: self.block_reads - earlier.block_reads,
            block_writes: self.block_writes - earlier.block_writes,
            bytes_read: self.bytes_read - earlier.bytes_read,
            bytes_written: self.bytes_written - earlier.bytes_written,
            peak_pinned: self.peak_pinned,
        }
    }
}

/// Access discipline of a store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreMode {
    ExplicitPin,
    LruCached,
}

/// Where the simulated disk lives. Counter behaviour is identical for
/// both; the file variant exists so runs larger than RAM stay honest.
pub enum Backing {
    Memory(Vec<u8>),
    File { file: File, len: u64 },
}

impl Backing {
    pub fn memory() -> Backing {
        Backing::Memory(Vec::new())
    }

    pub fn file(path: &Path) -> Result<Backing> {
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(path)?;
        Ok(Backing::File { file, len: 0 })
    }

    fn len(&self) -> u64 {
        match self {
            Backing::Memory(v) => v.len() as u64,
            Backing::File { len, .. } => *len,
        }
    }

    fn grow(&mut self, new_len: u64) -> Result<()> {
        match self {
            Backing::Memory(v) => v.resize(new_len as usize, 0),
            Backing::File { file, len } => {
                file.set_len(new_len)?;
                *len = new_len;
            }
        }
        Ok(())
    }

    fn read_at(&self, offset: u64, buf: &mut [u8]) -> Result<()> {
        match self {
            Backing::Memory(v) => {
                let start = offset as usize;
                buf.copy_from_slice(&v[start..start + buf.len()]);
            }
            Backing::File { file, .. } => file.read_exact_at(buf, offset)?,
        }
        Ok(())
    }

    fn write_at(&mut self, offset: u64, buf: &[u8]) -> Result<()> {
        match self {
            Backing::Memory(v) => {
                let start = offset as usize;
                v[start..start + buf.len()].copy_from_slice(buf);
            }
            Backing::File { file, .. } => file.write_all_at(buf, offset)?,
        }
        Ok(())
    }
}

/// Descriptor of a typed array living inside a store's backing region.
/// Plain data: the store itself is passed alongside for every access.
#[derive(Debug, Clone, Copy)]
pub struct EmArray {
    pub origin: u64,
    pub len: u64,
    pub element_width: u64,
}

impl EmArray {
    pub fn span_bytes(&self) -> u64 {
        self.len * self.element_width
    }

    fn byte_range(&self, first: u64, count: u64) -> Result<(u64, u64)> {
        if first + count > self.len {
            return Err(EmError::OutOfBounds(format!(
                "range [{first}, {}) of array with {} elements",
                first + count,
                self.len
            )));
        }
        Ok((
            self.origin + first * self.element_width,
            count * self.element_width,
        ))
    }
}

/// A tile held resident in simulated main memory. Owns its bytes; budget
/// accounting is released when the view is handed back via `unpin`.
pub struct PinnedView {
    bytes: Vec<u8>,
    offset: u64,
    writable: bool,
}

impl PinnedView {
    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bytes_mut(&mut self) -> &mut [u8] {
        debug_assert!(self.writable);
        &mut self.bytes
    }

    pub fn as_f64s(&self) -> Vec<f64> {
        self.bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    }

    pub fn as_u64s(&self) -> Vec<u64> {
        self.bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    }
}

/// Budget reservation for in-memory scratch tiles (the phase-1 distance
/// tile and similar): charged against the pin budget but never transferred,
/// so it moves no counters.
pub struct ScratchPin {
    bytes: u64,
}

struct Frame {
    data: Vec<u8>,
    dirty: bool,
}

struct LruState {
    frames: HashMap<u64, Frame>,
    // Most recently used at the back; capacities are small so linear
    // recency maintenance is fine.
    recency: Vec<u64>,
    capacity: usize,
    last_block: u64,
}

pub struct BlockStore {
    backing: Backing,
    block_size_bytes: u64,
    memory_budget_bytes: u64,
    mode: StoreMode,
    counters: IoCounters,
    pinned_bytes: u64,
    lru: LruState,
}

impl BlockStore {
    pub fn new(
        block_size_bytes: u64,
        memory_budget_bytes: u64,
        mode: StoreMode,
        backing: Backing,
    ) -> Result<BlockStore> {
        if block_size_bytes == 0 {
            return Err(EmError::Config("block size must be positive".into()));
        }
        if memory_budget_bytes < 2 * block_size_bytes {
            return Err(EmError::Config(format!(
                "memory budget of {memory_budget_bytes} bytes is below two blocks \
                 ({} bytes); the blocked algorithms need at least two resident tiles",
                2 * block_size_bytes
            )));
        }
        let capacity = (memory_budget_bytes / block_size_bytes) as usize;
        Ok(BlockStore {
            backing,
            block_size_bytes,
            memory_budget_bytes,
            mode,
            counters: IoCounters::default(),
            pinned_bytes: 0,
            lru: LruState {
                frames: HashMap::new(),
                recency: Vec::new(),
                capacity,
                last_block: u64::MAX,
            },
        })
    }

    pub fn counters(&self) -> IoCounters {
        self.counters
    }

    pub fn block_size_bytes(&self) -> u64 {
        self.block_size_bytes
    }

    pub fn memory_budget_bytes(&self) -> u64 {
        self.memory_budget_bytes
    }

    pub fn mode(&self) -> StoreMode {
        self.mode
    }

    pub fn pinned_bytes(&self) -> u64 {
        self.pinned_bytes
    }

    /// Appends a zero-filled array to the backing region. Allocation is
    /// setup, not a transfer: no counters move.
    pub fn alloc_array(&mut self, len: u64, element_width: u64) -> Result<EmArray> {
        let origin = self.backing.len();
        self.backing.grow(origin + len * element_width)?;
        Ok(EmArray {
            origin,
            len,
            element_width,
        })
    }

    /// Loads raw bytes into an array without charging transfers. Used to
    /// stage input files into the simulated disk before a measured phase.
    pub fn stage(&mut self, array: &EmArray, data: &[u8]) -> Result<()> {
        if data.len() as u64 != array.span_bytes() {
            return Err(EmError::Invariant(format!(
                "staged {} bytes into an array of {} bytes",
                data.len(),
                array.span_bytes()
            )));
        }
        self.backing.write_at(array.origin, data)
    }

    /// Reads array contents without charging transfers (post-run artifact
    /// extraction only; algorithms must never call this).
    pub fn dump(&self, array: &EmArray) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; array.span_bytes() as usize];
        self.backing.read_at(array.origin, &mut buf)?;
        Ok(buf)
    }

    fn blocks_for(&self, span_bytes: u64) -> u64 {
        span_bytes.div_ceil(self.block_size_bytes)
    }

    fn charge_reads(&mut self, blocks: u64) {
        self.counters.block_reads += blocks;
        self.counters.bytes_read += blocks * self.block_size_bytes;
    }

    fn charge_writes(&mut self, blocks: u64) {
        self.counters.block_writes += blocks;
        self.counters.bytes_written += blocks * self.block_size_bytes;
    }

    fn reserve(&mut self, span_bytes: u64) -> Result<()> {
        if self.pinned_bytes + span_bytes > self.memory_budget_bytes {
            return Err(EmError::BudgetExceeded {
                requested: span_bytes,
                pinned: self.pinned_bytes,
                budget: self.memory_budget_bytes,
            });
        }
        self.pinned_bytes += span_bytes;
        if self.pinned_bytes > self.counters.peak_pinned {
            self.counters.peak_pinned = self.pinned_bytes;
        }
        Ok(())
    }

    /// Brings `count` elements starting at `first` into main memory,
    /// charging one read per covered block.
    pub fn pin_range(&mut self, array: &EmArray, first: u64, count: u64) -> Result<PinnedView> {
        self.pin_inner(array, first, count, false)
    }

    pub fn pin_range_mut(&mut self, array: &EmArray, first: u64, count: u64) -> Result<PinnedView> {
        self.pin_inner(array, first, count, true)
    }

    fn pin_inner(
        &mut self,
        array: &EmArray,
        first: u64,
        count: u64,
        writable: bool,
    ) -> Result<PinnedView> {
        if self.mode != StoreMode::ExplicitPin {
            return Err(EmError::Config("pin_range requires explicit-pin mode".into()));
        }
        let (offset, span) = array.byte_range(first, count)?;
        self.reserve(span)?;
        self.charge_reads(self.blocks_for(span));
        let mut bytes = vec![0u8; span as usize];
        self.backing.read_at(offset, &mut bytes)?;
        Ok(PinnedView {
            bytes,
            offset,
            writable,
        })
    }

    /// Flushes a writable view's bytes back to the backing region,
    /// charging one write per covered block. The view stays pinned.
    pub fn write_back(&mut self, view: &PinnedView) -> Result<()> {
        if !view.writable {
            return Err(EmError::Invariant("write_back on a read-only view".into()));
        }
        self.charge_writes(self.blocks_for(view.bytes.len() as u64));
        self.backing.write_at(view.offset, &view.bytes)
    }

    pub fn unpin(&mut self, view: PinnedView) {
        self.pinned_bytes -= view.bytes.len() as u64;
    }

    /// Reserves budget for a scratch tile that never touches disk.
    pub fn pin_scratch(&mut self, span_bytes: u64) -> Result<ScratchPin> {
        self.reserve(span_bytes)?;
        Ok(ScratchPin { bytes: span_bytes })
    }

    pub fn unpin_scratch(&mut self, pin: ScratchPin) {
        self.pinned_bytes -= pin.bytes;
    }

    /// Writes a range directly from a caller buffer, charging one write
    /// per covered block. Used for tile write-backs assembled in scratch.
    pub fn write_range(
        &mut self,
        array: &EmArray,
        first: u64,
        count: u64,
        data: &[u8],
    ) -> Result<()> {
        let (offset, span) = array.byte_range(first, count)?;
        if data.len() as u64 != span {
            return Err(EmError::Invariant(format!(
                "write_range of {} bytes into a span of {span} bytes",
                data.len()
            )));
        }
        self.charge_writes(self.blocks_for(span));
        self.backing.write_at(offset, data)
    }

    // ---- LRU-cached mode -------------------------------------------------

    fn lru_touch(&mut self, block: u64) -> Result<()> {
        if block == self.lru.last_block {
            return Ok(());
        }
        if self.lru.frames.contains_key(&block) {
            let pos = self.lru.recency.iter().position(|&b| b == block).unwrap();
            self.lru.recency.remove(pos);
            self.lru.recency.push(block);
            self.lru.last_block = block;
            return Ok(());
        }
        // Miss. Evict first if at capacity.
        if self.lru.frames.len() == self.lru.capacity {
            let victim = self.lru.recency.remove(0);
            let frame = self.lru.frames.remove(&victim).unwrap();
            if frame.dirty {
                self.charge_writes(1);
                let offset = victim * self.block_size_bytes;
                let end = (offset + self.block_size_bytes).min(self.backing.len());
                self.backing.write_at(offset, &frame.data[..(end - offset) as usize])?;
            }
        }
        self.charge_reads(1);
        let mut data = vec![0u8; self.block_size_bytes as usize];
        let offset = block * self.block_size_bytes;
        let end = (offset + self.block_size_bytes).min(self.backing.len());
        if end > offset {
            self.backing.read_at(offset, &mut data[..(end - offset) as usize])?;
        }
        self.lru.frames.insert(block, Frame { data, dirty: false });
        self.lru.recency.push(block);
        self.lru.last_block = block;
        let resident = self.lru.frames.len() as u64 * self.block_size_bytes;
        if resident > self.counters.peak_pinned {
            self.counters.peak_pinned = resident;
        }
        Ok(())
    }

    fn require_lru(&self) -> Result<()> {
        if self.mode != StoreMode::LruCached {
            return Err(EmError::Config("operation requires lru-cached mode".into()));
        }
        Ok(())
    }

    /// Single-element access through the cache; the unit the traditional
    /// algorithm's unblocked loops are charged in.
    pub fn lru_access(&mut self, array: &EmArray, index: u64) -> Result<Vec<u8>> {
        self.require_lru()?;
        let mut buf = vec![0u8; array.element_width as usize];
        self.lru_read_into(array, index, 1, &mut buf)?;
        Ok(buf)
    }

    /// Reads `count` elements through the cache into `out`, touching every
    /// covered block in address order.
    pub fn lru_read_into(
        &mut self,
        array: &EmArray,
        first: u64,
        count: u64,
        out: &mut [u8],
    ) -> Result<()> {
        self.require_lru()?;
        let (offset, span) = array.byte_range(first, count)?;
        debug_assert_eq!(out.len() as u64, span);
        let mut pos = offset;
        let mut written = 0usize;
        while pos < offset + span {
            let block = pos / self.block_size_bytes;
            self.lru_touch(block)?;
            let in_block = (pos % self.block_size_bytes) as usize;
            let take = ((self.block_size_bytes as usize - in_block) as u64)
                .min(offset + span - pos) as usize;
            let frame = &self.lru.frames[&block];
            out[written..written + take].copy_from_slice(&frame.data[in_block..in_block + take]);
            pos += take as u64;
            written += take;
        }
        Ok(())
    }

    /// Writes `count` elements through the cache, dirtying every covered
    /// frame. Dirty frames are charged a write on eviction or flush.
    pub fn lru_write_range(
        &mut self,
        array: &EmArray,
        first: u64,
        count: u64,
        data: &[u8],
    ) -> Result<()> {
        self.require_lru()?;
        let (offset, span) = array.byte_range(first, count)?;
        debug_assert_eq!(data.len() as u64, span);
        let mut pos = offset;
        let mut consumed = 0usize;
        while pos < offset + span {
            let block = pos / self.block_size_bytes;
            self.lru_touch(block)?;
            let in_block = (pos % self.block_size_bytes) as usize;
            let take = ((self.block_size_bytes as usize - in_block) as u64)
                .min(offset + span - pos) as usize;
            let frame = self.lru.frames.get_mut(&block).unwrap();
            frame.data[in_block..in_block + take].copy_from_slice(&data[consumed..consumed + take]);
            frame.dirty = true;
            pos += take as u64;
            consumed += take;
        }
        Ok(())
    }

    /// Writes every dirty frame back, charging one write each.
    pub fn lru_flush(&mut self) -> Result<()> {
        self.require_lru()?;
        let mut blocks: Vec<u64> = self
            .lru
            .frames
            .iter()
            .filter(|(_, f)| f.dirty)
            .map(|(&b, _)| b)
            .collect();
        blocks.sort_unstable();
        for block in blocks {
            self.charge_writes(1);
            let frame = self.lru.frames.get_mut(&block).unwrap();
            frame.dirty = false;
            let data = frame.data.clone();
            let offset = block * self.block_size_bytes;
            let end = (offset + self.block_size_bytes).min(self.backing.len());
            self.backing.write_at(offset, &data[..(end - offset) as usize])?;
        }
        Ok(())
    }
}

pub fn f64s_to_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn u64s_to_bytes(values: &[u64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn bytes_to_f64s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

pub fn bytes_to_u64s(bytes: &[u8]) -> Vec<u64> {
    bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mem_store(block: u64, budget: u64, mode: StoreMode) -> BlockStore {
        BlockStore::new(block, budget, mode, Backing::memory()).unwrap()
    }

    #[test]
    fn fresh_store_has_zero_counters() {
        let store = mem_store(8192, 1 << 20, StoreMode::ExplicitPin);
        assert_eq!(store.counters(), IoCounters::default());
        assert_eq!(store.pinned_bytes(), 0);
    }

    #[test]
    fn budget_below_two_blocks_is_rejected() {
        let err = BlockStore::new(4096, 4096, StoreMode::ExplicitPin, Backing::memory());
        assert!(matches!(err, Err(EmError::Config(_))));
    }

    #[test]
    fn pin_charges_ceil_of_span_over_block_size() {
        let mut store = mem_store(8192, 1 << 20, StoreMode::ExplicitPin);
        let arr = store.alloc_array(4096, 8).unwrap();

        let v = store.pin_range(&arr, 0, 10).unwrap();
        assert_eq!(store.counters().block_reads, 1);
        store.unpin(v);

        let v = store.pin_range(&arr, 0, 2048).unwrap();
        assert_eq!(store.counters().block_reads, 1 + 2);
        assert_eq!(store.counters().bytes_read, 3 * 8192);
        store.unpin(v);
    }

    #[test]
    fn pin_beyond_budget_fails() {
        let mut store = mem_store(4096, 8192, StoreMode::ExplicitPin);
        let arr = store.alloc_array(4096, 8).unwrap();
        let held = store.pin_range(&arr, 0, 1024).unwrap();
        let err = store.pin_range(&arr, 0, 1);
        assert!(matches!(err, Err(EmError::BudgetExceeded { .. })));
        store.unpin(held);
        // Releasing the view makes the budget available again.
        let v = store.pin_range(&arr, 0, 1).unwrap();
        store.unpin(v);
    }

    #[test]
    fn pin_out_of_bounds_fails() {
        let mut store = mem_store(4096, 1 << 20, StoreMode::ExplicitPin);
        let arr = store.alloc_array(16, 8).unwrap();
        assert!(matches!(
            store.pin_range(&arr, 10, 8),
            Err(EmError::OutOfBounds(_))
        ));
    }

    #[test]
    fn write_back_persists_and_charges_blocks() {
        let mut store = mem_store(4096, 1 << 20, StoreMode::ExplicitPin);
        let arr = store.alloc_array(2048, 8).unwrap();

        let mut view = store.pin_range_mut(&arr, 0, 512).unwrap();
        view.bytes_mut().copy_from_slice(&u64s_to_bytes(&(0..512).collect::<Vec<u64>>()));
        store.write_back(&view).unwrap();
        assert_eq!(store.counters().block_writes, 1);
        store.unpin(view);

        let mut view = store.pin_range_mut(&arr, 0, 1500).unwrap();
        let len = view.bytes().len();
        view.bytes_mut().copy_from_slice(&vec![7u8; len]);
        store.write_back(&view).unwrap();
        assert_eq!(store.counters().block_writes, 1 + 3);
        store.unpin(view);

        // Read-back equals written bytes.
        let v = store.pin_range(&arr, 0, 1500).unwrap();
        assert!(v.bytes().iter().all(|&b| b == 7));
        store.unpin(v);
    }

    #[test]
    fn lru_hit_charges_nothing() {
        let mut store = mem_store(4096, 1 << 20, StoreMode::LruCached);
        let arr = store.alloc_array(1024, 8).unwrap();
        store.lru_access(&arr, 5).unwrap();
        assert_eq!(store.counters().block_reads, 1);
        store.lru_access(&arr, 5).unwrap();
        store.lru_access(&arr, 6).unwrap();
        assert_eq!(store.counters().block_reads, 1);
    }

    #[test]
    fn lru_without_capacity_pressure_reads_each_block_once() {
        let mut store = mem_store(4096, 1 << 20, StoreMode::LruCached);
        let arr = store.alloc_array(4096, 8).unwrap(); // 8 blocks, capacity 256
        for i in (0..4096).rev() {
            store.lru_access(&arr, i).unwrap();
        }
        assert_eq!(store.counters().block_reads, 8);
    }

    #[test]
    fn lru_cyclic_sweep_past_capacity_misses_every_access() {
        // Capacity 4 frames, 8 blocks swept cyclically: after warm-up each
        // block access is a miss. Expected counts come from replaying the
        // reference string through a standalone LRU simulation.
        let block = 4096u64;
        let capacity = 4u64;
        let n_blocks = 8u64;
        let mut store = mem_store(block, capacity * block, StoreMode::LruCached);
        let arr = store.alloc_array(n_blocks * block / 8, 8).unwrap();
        let elems_per_block = block / 8;

        let sweeps = 5u64;
        let mut reference: Vec<u64> = Vec::new();
        for _ in 0..sweeps {
            for b in 0..n_blocks {
                reference.push(b);
                store.lru_access(&arr, b * elems_per_block).unwrap();
            }
        }

        // Independent LRU replay.
        let mut resident: Vec<u64> = Vec::new();
        let mut misses = 0u64;
        for b in reference {
            if let Some(pos) = resident.iter().position(|&x| x == b) {
                resident.remove(pos);
            } else {
                misses += 1;
                if resident.len() as u64 == capacity {
                    resident.remove(0);
                }
            }
            resident.push(b);
        }
        assert_eq!(misses, sweeps * n_blocks); // every access misses
        assert_eq!(store.counters().block_reads, misses);
    }

    #[test]
    fn lru_dirty_eviction_charges_a_write() {
        let block = 4096u64;
        let mut store = mem_store(block, 2 * block, StoreMode::LruCached);
        let arr = store.alloc_array(4 * block / 8, 8).unwrap();
        store
            .lru_write_range(&arr, 0, 1, &42u64.to_le_bytes())
            .unwrap();
        assert_eq!(store.counters().block_writes, 0);
        // Touch enough distinct blocks to force the dirty frame out.
        let elems_per_block = block / 8;
        store.lru_access(&arr, elems_per_block).unwrap();
        store.lru_access(&arr, 2 * elems_per_block).unwrap();
        assert_eq!(store.counters().block_writes, 1);
        // The write survived eviction.
        let got = store.lru_access(&arr, 0).unwrap();
        assert_eq!(u64::from_le_bytes(got.try_into().unwrap()), 42);
    }

    #[test]
    fn pin_and_lru_modes_return_identical_bytes() {
        let payload: Vec<u64> = (0..3000).map(|i| i * 17 + 3).collect();
        let bytes = u64s_to_bytes(&payload);

        let mut pin_store = mem_store(4096, 1 << 20, StoreMode::ExplicitPin);
        let arr = pin_store.alloc_array(3000, 8).unwrap();
        pin_store.stage(&arr, &bytes).unwrap();
        let view = pin_store.pin_range(&arr, 100, 500).unwrap();
        let from_pin = view.as_u64s();
        pin_store.unpin(view);

        let mut lru_store = mem_store(4096, 1 << 20, StoreMode::LruCached);
        let arr2 = lru_store.alloc_array(3000, 8).unwrap();
        lru_store.stage(&arr2, &bytes).unwrap();
        let mut buf = vec![0u8; 500 * 8];
        lru_store.lru_read_into(&arr2, 100, 500, &mut buf).unwrap();
        assert_eq!(from_pin, bytes_to_u64s(&buf));
    }

    #[test]
    fn file_and_memory_backing_agree() {
        let dir = tempfile::tempdir().unwrap();
        let payload = u64s_to_bytes(&(0..2048).map(|i| i * 31).collect::<Vec<u64>>());

        let mut results = Vec::new();
        for backing in [
            Backing::memory(),
            Backing::file(&dir.path().join("store.bin")).unwrap(),
        ] {
            let mut store = BlockStore::new(4096, 1 << 20, StoreMode::ExplicitPin, backing).unwrap();
            let arr = store.alloc_array(2048, 8).unwrap();
            store.stage(&arr, &payload).unwrap();
            let view = store.pin_range(&arr, 7, 900).unwrap();
            results.push((view.as_u64s(), store.counters()));
            store.unpin(view);
        }
        assert_eq!(results[0], results[1]);
    }

    #[test]
    fn counters_match_independent_replay_of_a_trace() {
        // Record a pin/write trace, replay it through plain arithmetic.
        let block = 4096u64;
        let mut store = mem_store(block, 1 << 20, StoreMode::ExplicitPin);
        let arr = store.alloc_array(8192, 8).unwrap();

        let trace: &[(u64, u64, bool)] =
            &[(0, 100, false), (50, 2000, true), (4000, 1, false), (0, 8192, true)];

        let mut expect_reads = 0u64;
        let mut expect_writes = 0u64;
        for &(first, count, write) in trace {
            let blocks = (count * 8).div_ceil(block);
            expect_reads += blocks;
            let view = if write {
                let v = store.pin_range_mut(&arr, first, count).unwrap();
                store.write_back(&v).unwrap();
                expect_writes += blocks;
                v
            } else {
                store.pin_range(&arr, first, count).unwrap()
            };
            store.unpin(view);
        }
        let c = store.counters();
        assert_eq!(c.block_reads, expect_reads);
        assert_eq!(c.block_writes, expect_writes);
        assert_eq!(c.bytes_read, expect_reads * block);
        assert_eq!(c.bytes_written, expect_writes * block);
    }
}
