//! MAP-Elites archive over the (entropy, dispersion) descriptor plane.
//! Fitness is minimised.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genome::{Descriptor, Genome, GenomeBounds};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArchiveError {
    #[error("archive has no occupied cells")]
    EmptyArchive,
    #[error("invalid descriptor axis: {0}")]
    InvalidAxis(String),
    #[error("non-finite fitness {0}")]
    NonFiniteFitness(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lower: f64,
    pub upper: f64,
    pub bins: usize,
}

impl Axis {
    pub fn new(lower: f64, upper: f64, bins: usize) -> Result<Self, ArchiveError> {
        if bins == 0 {
            return Err(ArchiveError::InvalidAxis("bin count must be >= 1".into()));
        }
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(ArchiveError::InvalidAxis(format!("need lower < upper, got [{lower}, {upper}]")));
        }
        Ok(Self { lower, upper, bins })
    }

    /// `floor((d - lo) / (hi - lo) * bins)` clamped to `[0, bins - 1]`.
    pub fn bin(&self, value: f64) -> usize {
        let t = ((value - self.lower) / (self.upper - self.lower) * self.bins as f64).floor();
        if t.is_nan() || t < 0.0 {
            0
        } else {
            (t as usize).min(self.bins - 1)
        }
    }
}

/// Entropy axis first, dispersion axis second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptorSpace {
    pub entropy: Axis,
    pub dispersion: Axis,
}

impl DescriptorSpace {
    /// Entropy on `[0, ln n_max]`, dispersion on `[0, diagonal / 2]`.
    pub fn default_for(bounds: &GenomeBounds, bins: usize) -> Result<Self, ArchiveError> {
        let h_max = (bounds.n_max.max(2) as f64).ln();
        Ok(Self {
            entropy: Axis::new(0.0, h_max, bins)?,
            dispersion: Axis::new(0.0, bounds.diagonal() / 2.0, bins)?,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.entropy.bins * self.dispersion.bins
    }

    /// Row-major `(entropy bin, dispersion bin)`.
    pub fn cell_coords(&self, descriptor: &Descriptor) -> (usize, usize) {
        (self.entropy.bin(descriptor.entropy), self.dispersion.bin(descriptor.dispersion))
    }

    pub fn bin(&self, descriptor: &Descriptor) -> usize {
        let (i, j) = self.cell_coords(descriptor);
        i * self.dispersion.bins + j
    }

    pub fn coords_of(&self, cell: usize) -> (usize, usize) {
        (cell / self.dispersion.bins, cell % self.dispersion.bins)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub iteration: usize,
    pub offspring: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub genome: Genome,
    pub fitness: f64,
    pub descriptor: Descriptor,
    pub provenance: Provenance,
    /// Optimised element densities.
    pub density: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InsertOutcome {
    Inserted,
    Replaced,
    Discarded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    pub space: DescriptorSpace,
    cells: Vec<Option<ArchiveEntry>>,
    /// Largest fitness ever admitted into a cell; the QD-score offset.
    worst_admitted: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMetrics {
    pub coverage: f64,
    pub occupied: usize,
    pub best: Option<f64>,
    pub mean: Option<f64>,
    /// `sum (offset - fitness)` over occupied cells.
    pub qd_score: f64,
    pub qd_offset: Option<f64>,
}

impl Archive {
    pub fn new(space: DescriptorSpace) -> Self {
        Self {
            cells: vec![None; space.n_cells()],
            space,
            worst_admitted: None,
        }
    }

    /// Rebuilds an archive from stored elites, e.g. a checkpoint. Entries
    /// are placed by their descriptor; the QD offset is carried over.
    pub fn from_parts(
        space: DescriptorSpace,
        entries: impl IntoIterator<Item = ArchiveEntry>,
        worst_admitted: Option<f64>,
    ) -> Result<Self, ArchiveError> {
        let mut archive = Self::new(space);
        for entry in entries {
            if !entry.fitness.is_finite() {
                return Err(ArchiveError::NonFiniteFitness(entry.fitness));
            }
            let cell = space.bin(&entry.descriptor);
            archive.cells[cell] = Some(entry);
        }
        archive.worst_admitted = worst_admitted;
        Ok(archive)
    }

    pub fn cells(&self) -> &[Option<ArchiveEntry>] {
        &self.cells
    }

    pub fn get(&self, cell: usize) -> Option<&ArchiveEntry> {
        self.cells.get(cell).and_then(Option::as_ref)
    }

    pub fn occupied(&self) -> impl Iterator<Item = (usize, &ArchiveEntry)> {
        self.cells.iter().enumerate().filter_map(|(i, c)| c.as_ref().map(|e| (i, e)))
    }

    pub fn len(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn worst_admitted(&self) -> Option<f64> {
        self.worst_admitted
    }

    /// Adds `entry` to an empty cell or replaces a strictly worse elite.
    pub fn try_insert(&mut self, entry: ArchiveEntry) -> Result<InsertOutcome, ArchiveError> {
        if !entry.fitness.is_finite() {
            return Err(ArchiveError::NonFiniteFitness(entry.fitness));
        }
        let cell = self.space.bin(&entry.descriptor);
        let outcome = match &self.cells[cell] {
            None => InsertOutcome::Inserted,
            Some(incumbent) if entry.fitness < incumbent.fitness => InsertOutcome::Replaced,
            Some(_) => InsertOutcome::Discarded,
        };
        if outcome != InsertOutcome::Discarded {
            self.worst_admitted = Some(self.worst_admitted.map_or(entry.fitness, |w| w.max(entry.fitness)));
            self.cells[cell] = Some(entry);
        }
        Ok(outcome)
    }

    /// `k` uniform draws with replacement over occupied cells.
    pub fn select_parents<R: Rng + ?Sized>(&self, rng: &mut R, k: usize) -> Result<Vec<Genome>, ArchiveError> {
        let occupied: Vec<&ArchiveEntry> = self.occupied().map(|(_, e)| e).collect();
        if occupied.is_empty() {
            return Err(ArchiveError::EmptyArchive);
        }
        Ok((0..k)
            .map(|_| occupied[rng.gen_range(0..occupied.len())].genome.clone())
            .collect())
    }

    pub fn metrics(&self) -> ArchiveMetrics {
        let fitness: Vec<f64> = self.occupied().map(|(_, e)| e.fitness).collect();
        let occupied = fitness.len();
        let best = fitness.iter().copied().reduce(f64::min);
        let mean = (occupied > 0).then(|| fitness.iter().sum::<f64>() / occupied as f64);
        let qd_score = match self.worst_admitted {
            Some(offset) => fitness.iter().map(|f| offset - f).sum(),
            None => 0.0,
        };
        ArchiveMetrics {
            coverage: occupied as f64 / self.space.n_cells() as f64,
            occupied,
            best,
            mean,
            qd_score,
            qd_offset: self.worst_admitted,
        }
    }
}
