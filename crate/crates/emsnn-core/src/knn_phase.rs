//! Phase 1: blocked construction of the k-nearest-neighbor matrix.
//!
//! The dataset is partitioned into tiles of `t` points. For each tile pair
//! the two point tiles are pinned, distances are computed in memory, and a
//! running sorted candidate list of length `k - 1` is kept per row of the
//! outer tile. The finished knn tile (row `i` is point `i` followed by its
//! neighbors in ascending distance) is written back once per outer tile.
//!
//! Ties are broken by ascending point index so that output is a pure
//! function of the input, independent of tile size.

use crate::em_model::{u64s_to_bytes, BlockStore, EmArray};
use crate::error::{EmError, Result};

/// Points per phase-1 tile: `floor(M_slots / (2 (D + k)))`, where
/// `M_slots = M_bytes / element_width`. Four tiles are resident at once —
/// two point tiles of `t * D` and the distance and index tiles of `t * k`.
pub fn phase1_tile_size(m_bytes: u64, dims: u32, k: u32, element_width: u64) -> Result<u64> {
    let slots = m_bytes / element_width;
    let per_point = 2 * (dims as u64 + k as u64);
    let t = slots / per_point;
    if t == 0 {
        return Err(EmError::Config(format!(
            "memory budget of {m_bytes} bytes ({slots} slots) is below the \
             {per_point} slots one phase-1 tile row needs (t = M_slots / (2 (D + k))); \
             minimum budget is {} bytes",
            per_point * element_width
        )));
    }
    Ok(t)
}

pub fn euclidean_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distance between vectors of unequal dimension");
    p.iter()
        .zip(q)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn check_k(n: u64, k: u32) -> Result<()> {
    if k == 0 {
        return Err(EmError::Config("k must be at least 1".into()));
    }
    if k as u64 > n {
        return Err(EmError::Config(format!(
            "k = {k} exceeds the number of points {n}"
        )));
    }
    Ok(())
}

/// Sorted insertion of candidate `(dist, idx)` into one row's length-`k-1`
/// neighbor buffer, keyed by distance with index as tie-break.
#[inline]
pub(crate) fn insert_candidate(dists: &mut [f64], idxs: &mut [u64], dist: f64, idx: u64) {
    let last = dists.len() - 1;
    if dist > dists[last] || (dist == dists[last] && idx >= idxs[last]) {
        return;
    }
    dists[last] = dist;
    idxs[last] = idx;
    let mut d = last;
    while d > 0 && (dists[d] < dists[d - 1] || (dists[d] == dists[d - 1] && idxs[d] < idxs[d - 1]))
    {
        dists.swap(d, d - 1);
        idxs.swap(d, d - 1);
        d -= 1;
    }
}

/// Blocked k-NN matrix construction over the store. `dataset` holds
/// `n * dims` f64 coordinates; the returned array holds `n * k` u64 row
/// indices. All tile traffic is charged to the store's counters.
pub fn build_knn_blocked(
    store: &mut BlockStore,
    dataset: &EmArray,
    n: u64,
    dims: u32,
    k: u32,
    tile_rows: u64,
) -> Result<EmArray> {
    check_k(n, k)?;
    if tile_rows == 0 {
        return Err(EmError::Config("tile size must be at least 1".into()));
    }
    let d = dims as usize;
    let kk = k as usize;
    let knn = store.alloc_array(n * k as u64, 8)?;
    let n_tiles = n.div_ceil(tile_rows);

    for ti in 0..n_tiles {
        let i0 = ti * tile_rows;
        let rows_i = (n - i0).min(tile_rows);
        let tile_i = store.pin_range(dataset, i0 * dims as u64, rows_i * dims as u64)?;
        let points_i = tile_i.as_f64s();

        // Distance and index tiles count against the budget like the
        // pinned point tiles but are pure scratch.
        let scratch = store.pin_scratch(2 * rows_i * k as u64 * 8)?;
        let mut cand_d = vec![f64::INFINITY; rows_i as usize * (kk - 1).max(1)];
        let mut cand_i = vec![u64::MAX; rows_i as usize * (kk - 1).max(1)];

        for tj in 0..n_tiles {
            let j0 = tj * tile_rows;
            let rows_j = (n - j0).min(tile_rows);
            let tile_j = store.pin_range(dataset, j0 * dims as u64, rows_j * dims as u64)?;
            let points_j = tile_j.as_f64s();

            if kk > 1 {
                for li in 0..rows_i as usize {
                    let gi = i0 + li as u64;
                    let p = &points_i[li * d..(li + 1) * d];
                    let row_d = &mut cand_d[li * (kk - 1)..(li + 1) * (kk - 1)];
                    let row_i = &mut cand_i[li * (kk - 1)..(li + 1) * (kk - 1)];
                    for lj in 0..rows_j as usize {
                        let gj = j0 + lj as u64;
                        if gj == gi {
                            continue;
                        }
                        let q = &points_j[lj * d..(lj + 1) * d];
                        let dist = euclidean_distance(p, q);
                        insert_candidate(row_d, row_i, dist, gj);
                    }
                }
            }
            store.unpin(tile_j);
        }

        // Assemble rows (self at position 0) and write the tile back once.
        let mut out = Vec::with_capacity(rows_i as usize * kk);
        for li in 0..rows_i as usize {
            out.push(i0 + li as u64);
            if kk > 1 {
                out.extend_from_slice(&cand_i[li * (kk - 1)..(li + 1) * (kk - 1)]);
            }
        }
        store.write_range(&knn, i0 * k as u64, rows_i * k as u64, &u64s_to_bytes(&out))?;

        store.unpin_scratch(scratch);
        store.unpin(tile_i);
    }
    Ok(knn)
}

/// In-core brute-force oracle with the same output contract as
/// `build_knn_blocked`: full distance row per point, sorted by
/// `(distance, index)`.
pub fn build_knn_oracle(points: &[f64], n: u64, dims: u32, k: u32) -> Result<Vec<u64>> {
    check_k(n, k)?;
    let d = dims as usize;
    let kk = k as usize;
    let mut rows = Vec::with_capacity(n as usize * kk);
    for i in 0..n as usize {
        let p = &points[i * d..(i + 1) * d];
        let mut others: Vec<(f64, u64)> = (0..n as usize)
            .filter(|&j| j != i)
            .map(|j| (euclidean_distance(p, &points[j * d..(j + 1) * d]), j as u64))
            .collect();
        others.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows.push(i as u64);
        rows.extend(others[..kk - 1].iter().map(|&(_, j)| j));
    }
    Ok(rows)
}
