//! Shared, unlocked parameter access for HogWILD training.
//!
//! Workers read and write individual `f32` entries through relaxed atomic
//! loads and stores. There are no locks and no read-modify-write atomics, so
//! concurrent updates to the same entry may be lost or interleaved; sparse
//! updates make such collisions rare and SGD tolerates them. Relaxed
//! accesses compile to plain moves on common targets while keeping the
//! races defined behaviour in Rust.
//!
//! This is the only place where parameters are mutated concurrently.

use std::sync::atomic::{AtomicU32, Ordering};

use crate::model::Parameters;

/// Borrowed view of a model's parameters, shareable across threads.
pub(crate) struct SharedParams<'a> {
    embeddings: &'a [AtomicU32],
    classifier: &'a [AtomicU32],
    dim: usize,
    num_classes: usize,
}

fn as_atomic(values: &mut [f32]) -> &[AtomicU32] {
    // SAFETY: AtomicU32 has the size and alignment of u32, which matches f32.
    // The exclusive borrow guarantees no non-atomic access for the view's lifetime.
    unsafe { &*(values as *mut [f32] as *const [AtomicU32]) }
}

impl<'a> SharedParams<'a> {
    pub(crate) fn new(
        embeddings: &'a mut [f32],
        classifier: &'a mut [f32],
        dim: usize,
        num_classes: usize,
    ) -> Self {
        debug_assert_eq!(classifier.len(), dim * num_classes);
        SharedParams {
            embeddings: as_atomic(embeddings),
            classifier: as_atomic(classifier),
            dim,
            num_classes,
        }
    }

    #[inline]
    fn load(cell: &AtomicU32) -> f32 {
        f32::from_bits(cell.load(Ordering::Relaxed))
    }

    #[inline]
    fn store(cell: &AtomicU32, v: f32) {
        cell.store(v.to_bits(), Ordering::Relaxed)
    }

    /// `A[row] <- decay * A[row] - step * grad`
    #[inline]
    pub(crate) fn update_embedding_row(&self, row: usize, decay: f64, step: f64, grad: &[f64]) {
        let cells = &self.embeddings[row * self.dim..(row + 1) * self.dim];
        for (cell, &g) in cells.iter().zip(grad) {
            let v = f64::from(Self::load(cell));
            Self::store(cell, (decay * v - step * g) as f32);
        }
    }

    /// `B <- decay * B - step * (err ⊗ repr)`
    #[inline]
    pub(crate) fn update_classifier(&self, decay: f64, step: f64, err: &[f64], repr: &[f64]) {
        for (k, &e) in err.iter().enumerate() {
            let cells = &self.classifier[k * self.dim..(k + 1) * self.dim];
            for (cell, &a) in cells.iter().zip(repr) {
                let v = f64::from(Self::load(cell));
                Self::store(cell, (decay * v - step * e * a) as f32);
            }
        }
    }
}

impl Parameters for SharedParams<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn embedding_rows(&self) -> usize {
        self.embeddings.len() / self.dim
    }

    #[inline]
    fn add_embedding_row(&self, row: usize, scale: f64, out: &mut [f64]) {
        let cells = &self.embeddings[row * self.dim..(row + 1) * self.dim];
        for (o, cell) in out.iter_mut().zip(cells) {
            *o += scale * f64::from(Self::load(cell));
        }
    }

    #[inline]
    fn classifier_entry(&self, class: usize, j: usize) -> f32 {
        Self::load(&self.classifier[class * self.dim + j])
    }
}
