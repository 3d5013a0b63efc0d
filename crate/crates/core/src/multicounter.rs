//! The MultiCounter: `m` atomic cells, two-choice increments, and reads
//! that scale one random cell by `m`.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::StructureError;

/// Storage for one counter cell.
///
/// Value loads are relaxed: the algorithm is built to tolerate stale reads.
/// The increment is a sequentially consistent `fetch_add`.
pub trait CounterCell: Default + Send + Sync {
    fn load(&self) -> u64;
    fn increment(&self);
}

/// Cells packed back to back, eight to a cache line.
#[derive(Debug, Default)]
#[repr(transparent)]
pub struct PackedCell(AtomicU64);

/// One cell per 128-byte block, which removes false sharing between
/// neighbours (128 covers adjacent-line prefetch).
#[derive(Debug, Default)]
#[repr(align(128))]
pub struct PaddedCell(AtomicU64);

macro_rules! impl_cell {
    ($t:ty) => {
        impl CounterCell for $t {
            #[inline]
            fn load(&self) -> u64 {
                self.0.load(Ordering::Relaxed)
            }
            #[inline]
            fn increment(&self) {
                self.0.fetch_add(1, Ordering::SeqCst);
            }
        }
    };
}
impl_cell!(PackedCell);
impl_cell!(PaddedCell);

/// Relaxed approximate counter over `m` cells of layout `C`.
#[derive(Debug)]
pub struct MultiCounterOf<C> {
    cells: Box<[C]>,
}

pub type MultiCounter = MultiCounterOf<PackedCell>;
pub type PaddedMultiCounter = MultiCounterOf<PaddedCell>;

impl<C: CounterCell> MultiCounterOf<C> {
    pub fn new(m: usize) -> Result<Self, StructureError> {
        if m == 0 {
            return Err(StructureError::NotPositive { what: "cell count" });
        }
        Ok(Self { cells: (0..m).map(|_| C::default()).collect() })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Draws two cells, reads both, and increments the one that read
    /// smaller (ties and `i == j` go to `i`). Returns the incremented cell.
    #[inline]
    pub fn increment<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let m = self.cells.len();
        let i = rng.random_range(0..m);
        let j = rng.random_range(0..m);
        self.increment_choices(i, j)
    }

    /// Increment with preselected choices.
    #[inline]
    pub fn increment_choices(&self, i: usize, j: usize) -> usize {
        let vi = self.cells[i].load();
        let vj = self.cells[j].load();
        let target = if vj < vi { j } else { i };
        self.cells[target].increment();
        target
    }

    /// `m` times one uniformly chosen cell.
    #[inline]
    pub fn read<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.read_cell(rng.random_range(0..self.cells.len()))
    }

    /// `m` times cell `i`.
    #[inline]
    pub fn read_cell(&self, i: usize) -> u64 {
        self.cells.len() as u64 * self.cells[i].load()
    }

    /// Raw value of cell `i`.
    pub fn cell(&self, i: usize) -> u64 {
        self.cells[i].load()
    }

    /// Raw cell values. Consistent only when no increments are in flight.
    pub fn cells(&self) -> Vec<u64> {
        self.cells.iter().map(CounterCell::load).collect()
    }

    /// Sum of all cells; exact at quiescent points.
    pub fn exact_total(&self) -> u64 {
        self.cells.iter().map(CounterCell::load).sum()
    }
}
