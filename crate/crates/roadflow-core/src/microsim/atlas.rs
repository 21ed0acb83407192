//! Cell-based occupancy storage.
//!
//! Every lane of every edge owns one 1 m cell per meter of length, stored
//! as chained 1000-cell chunks from a shared pool. Each chunk pairs a
//! vehicle-id array with a 16-word occupancy bitset so gap scans skip empty
//! stretches a word at a time. The simulation keeps two atlases and swaps
//! them every step: proposals read the current one, commits write the next.

pub(crate) const CHUNK_CELLS: usize = 1000;
const WORDS_PER_CHUNK: usize = 16;
pub(crate) const EMPTY: u32 = u32::MAX;

struct Chunk {
    bits: [u64; WORDS_PER_CHUNK],
    ids: Vec<u32>,
}

impl Chunk {
    fn new() -> Self {
        Self {
            bits: [0; WORDS_PER_CHUNK],
            ids: vec![EMPTY; CHUNK_CELLS],
        }
    }
}

pub struct TrafficAtlas {
    /// Per lane slot: range into `chunk_refs`.
    lane_offsets: Vec<u32>,
    /// Pool indices of each lane's chunks, in order.
    chunk_refs: Vec<u32>,
    /// Cell count per lane slot.
    lane_cells: Vec<u32>,
    pool: Vec<Chunk>,
    /// Pool indices touched since the last clear.
    dirty: Vec<u32>,
}

impl TrafficAtlas {
    /// Builds storage for lanes with the given cell counts; the slot order
    /// here defines slot ids everywhere else.
    pub fn new(lane_cell_counts: &[u32]) -> Self {
        let mut lane_offsets = Vec::with_capacity(lane_cell_counts.len() + 1);
        let mut chunk_refs = Vec::new();
        let mut pool = Vec::new();
        lane_offsets.push(0);
        for &cells in lane_cell_counts {
            let chunks = (cells as usize).div_ceil(CHUNK_CELLS).max(1);
            for _ in 0..chunks {
                chunk_refs.push(pool.len() as u32);
                pool.push(Chunk::new());
            }
            lane_offsets.push(chunk_refs.len() as u32);
        }
        Self {
            lane_offsets,
            chunk_refs,
            lane_cells: lane_cell_counts.to_vec(),
            pool,
            dirty: Vec::new(),
        }
    }

    pub fn lane_len(&self, slot: u32) -> u32 {
        self.lane_cells[slot as usize]
    }

    fn chunk_of(&self, slot: u32, cell: u32) -> (usize, usize) {
        let base = self.lane_offsets[slot as usize] as usize;
        let pool_idx = self.chunk_refs[base + cell as usize / CHUNK_CELLS] as usize;
        (pool_idx, cell as usize % CHUNK_CELLS)
    }

    /// Clears every cell touched since the previous clear.
    pub fn clear(&mut self) {
        for &pi in &self.dirty {
            let c = &mut self.pool[pi as usize];
            c.bits = [0; WORDS_PER_CHUNK];
            c.ids.fill(EMPTY);
        }
        self.dirty.clear();
    }

    fn clamp(&self, slot: u32, lo: i64, hi: i64) -> Option<(u32, u32)> {
        let n = self.lane_cells[slot as usize] as i64;
        let lo = lo.max(0);
        let hi = hi.min(n - 1);
        if lo > hi {
            None
        } else {
            Some((lo as u32, hi as u32))
        }
    }

    /// True when every in-range cell of [lo, hi] is empty. Cells outside
    /// the lane (a body hanging past either end) are ignored.
    pub fn is_free(&self, slot: u32, lo: i64, hi: i64) -> bool {
        let Some((lo, hi)) = self.clamp(slot, lo, hi) else {
            return true;
        };
        for cell in lo..=hi {
            let (pi, within) = self.chunk_of(slot, cell);
            if self.pool[pi].bits[within / 64] >> (within % 64) & 1 != 0 {
                return false;
            }
        }
        true
    }

    /// Marks [lo, hi] as occupied by `id`. The range must be free.
    pub fn occupy(&mut self, slot: u32, lo: i64, hi: i64, id: u32) {
        debug_assert!(self.is_free(slot, lo, hi), "cell collision for {id}");
        let Some((lo, hi)) = self.clamp(slot, lo, hi) else {
            return;
        };
        for cell in lo..=hi {
            let (pi, within) = self.chunk_of(slot, cell);
            let chunk = &mut self.pool[pi];
            if chunk.bits == [0; WORDS_PER_CHUNK] {
                self.dirty.push(pi as u32);
            }
            chunk.bits[within / 64] |= 1 << (within % 64);
            chunk.ids[within] = id;
        }
    }

    /// Clears [lo, hi], which must be occupied by `id`.
    pub fn vacate(&mut self, slot: u32, lo: i64, hi: i64, id: u32) {
        let Some((lo, hi)) = self.clamp(slot, lo, hi) else {
            return;
        };
        for cell in lo..=hi {
            let (pi, within) = self.chunk_of(slot, cell);
            let chunk = &mut self.pool[pi];
            debug_assert_eq!(chunk.ids[within], id, "vacating a foreign cell");
            chunk.bits[within / 64] &= !(1 << (within % 64));
            chunk.ids[within] = EMPTY;
        }
    }

    pub fn cell_id(&self, slot: u32, cell: u32) -> Option<u32> {
        let (pi, within) = self.chunk_of(slot, cell);
        let id = self.pool[pi].ids[within];
        (id != EMPTY).then_some(id)
    }

    /// First occupied cell at or after `from`, with its occupant.
    pub fn next_occupied(&self, slot: u32, from: u32) -> Option<(u32, u32)> {
        let n = self.lane_cells[slot as usize];
        if from >= n {
            return None;
        }
        let base = self.lane_offsets[slot as usize] as usize;
        let n_chunks = self.lane_offsets[slot as usize + 1] as usize - base;
        let mut chunk_idx = from as usize / CHUNK_CELLS;
        let mut within = from as usize % CHUNK_CELLS;
        while chunk_idx < n_chunks {
            let chunk = &self.pool[self.chunk_refs[base + chunk_idx] as usize];
            let mut word = within / 64;
            let mut mask = !0u64 << (within % 64);
            while word < WORDS_PER_CHUNK {
                let bits = chunk.bits[word] & mask;
                if bits != 0 {
                    let bit = bits.trailing_zeros() as usize;
                    let cell = (chunk_idx * CHUNK_CELLS + word * 64 + bit) as u32;
                    if cell >= n {
                        return None;
                    }
                    return Some((cell, chunk.ids[word * 64 + bit]));
                }
                word += 1;
                mask = !0;
            }
            chunk_idx += 1;
            within = 0;
        }
        None
    }

    /// Last occupied cell at or before `from`, with its occupant.
    pub fn prev_occupied(&self, slot: u32, from: u32) -> Option<(u32, u32)> {
        let n = self.lane_cells[slot as usize];
        if n == 0 {
            return None;
        }
        let from = from.min(n - 1);
        let base = self.lane_offsets[slot as usize] as usize;
        let mut chunk_idx = from as usize / CHUNK_CELLS;
        let mut within = from as usize % CHUNK_CELLS;
        loop {
            let chunk = &self.pool[self.chunk_refs[base + chunk_idx] as usize];
            let mut word = within / 64 + 1;
            let mut mask = if within % 64 == 63 {
                !0u64
            } else {
                (1u64 << (within % 64 + 1)) - 1
            };
            while word > 0 {
                word -= 1;
                let bits = chunk.bits[word] & mask;
                if bits != 0 {
                    let bit = 63 - bits.leading_zeros() as usize;
                    let cell = (chunk_idx * CHUNK_CELLS + word * 64 + bit) as u32;
                    return Some((cell, chunk.ids[word * 64 + bit]));
                }
                mask = !0;
            }
            if chunk_idx == 0 {
                return None;
            }
            chunk_idx -= 1;
            within = CHUNK_CELLS - 1;
        }
    }

    /// Occupied-cell count in a lane (test support).
    #[cfg(test)]
    pub fn occupied_cells(&self, slot: u32) -> usize {
        let base = self.lane_offsets[slot as usize] as usize;
        let end = self.lane_offsets[slot as usize + 1] as usize;
        self.chunk_refs[base..end]
            .iter()
            .map(|&pi| {
                self.pool[pi as usize]
                    .bits
                    .iter()
                    .map(|w| w.count_ones() as usize)
                    .sum::<usize>()
            })
            .sum()
    }
}
