//! Void-region encoding of the initial design domain.
//!
//! Each gene is a rectangle `{x, y, l, w, a}`: top-left column and row,
//! extent along x and y in elements, and an activation flag. A genome is a
//! fixed-length list of such genes; its flat form is the concatenation of
//! all five fields per gene.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::fem2d::Mesh2D;
use crate::simp::{ElementState, PassiveMask};

pub const GENE_FIELDS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenomeError {
    #[error("flat genome length {0} is not a multiple of 5")]
    BadLength(usize),
    #[error("activation flag must be 0 or 1, got {0}")]
    BadActivation(i64),
    #[error("negative gene field {0}")]
    Negative(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VoidGene {
    pub x: usize,
    pub y: usize,
    pub l: usize,
    pub w: usize,
    pub active: bool,
}

impl VoidGene {
    /// Rectangle `[x0, x1) x [y0, y1)` after clipping to the domain.
    pub fn clipped(&self, nx: usize, ny: usize) -> (usize, usize, usize, usize) {
        let x0 = self.x.min(nx);
        let y0 = self.y.min(ny);
        (x0, (self.x + self.l).min(nx), y0, (self.y + self.w).min(ny))
    }

    pub fn clipped_area(&self, nx: usize, ny: usize) -> usize {
        let (x0, x1, y0, y1) = self.clipped(nx, ny);
        (x1 - x0) * (y1 - y0)
    }
}

/// Domain and size bounds every gene respects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenomeBounds {
    pub n_max: usize,
    pub nx: usize,
    pub ny: usize,
    pub l_max: usize,
    pub w_max: usize,
}

impl GenomeBounds {
    /// Default size limits of a quarter of the domain per direction.
    pub fn for_mesh(mesh: &Mesh2D, n_max: usize) -> Self {
        Self {
            n_max,
            nx: mesh.nx(),
            ny: mesh.ny(),
            l_max: (mesh.nx() / 4).max(1),
            w_max: (mesh.ny() / 4).max(1),
        }
    }

    pub fn contains(&self, gene: &VoidGene) -> bool {
        gene.x < self.nx && gene.y < self.ny && (1..=self.l_max).contains(&gene.l) && (1..=self.w_max).contains(&gene.w)
    }

    pub fn diagonal(&self) -> f64 {
        ((self.nx * self.nx + self.ny * self.ny) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Genome {
    pub genes: Vec<VoidGene>,
}

impl Genome {
    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.genes.iter().filter(|g| g.active).count()
    }

    /// `[x1, y1, l1, w1, a1, x2, ...]`.
    pub fn to_flat(&self) -> Vec<u64> {
        self.genes
            .iter()
            .flat_map(|g| [g.x as u64, g.y as u64, g.l as u64, g.w as u64, g.active as u64])
            .collect()
    }

    pub fn from_flat(values: &[i64]) -> Result<Self, GenomeError> {
        if values.len() % GENE_FIELDS != 0 {
            return Err(GenomeError::BadLength(values.len()));
        }
        let field = |v: i64| usize::try_from(v).map_err(|_| GenomeError::Negative(v));
        let genes = values
            .chunks_exact(GENE_FIELDS)
            .map(|c| {
                let active = match c[4] {
                    0 => false,
                    1 => true,
                    other => return Err(GenomeError::BadActivation(other)),
                };
                Ok(VoidGene {
                    x: field(c[0])?,
                    y: field(c[1])?,
                    l: field(c[2])?,
                    w: field(c[3])?,
                    active,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { genes })
    }
}

impl Serialize for Genome {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_flat().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Genome {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let flat = Vec::<i64>::deserialize(deserializer)?;
        Genome::from_flat(&flat).map_err(serde::de::Error::custom)
    }
}

/// Samples every field uniformly in its bounds, activation by a fair coin.
pub fn random_genome<R: Rng + ?Sized>(rng: &mut R, bounds: &GenomeBounds) -> Genome {
    let genes = (0..bounds.n_max)
        .map(|_| VoidGene {
            x: rng.gen_range(0..bounds.nx),
            y: rng.gen_range(0..bounds.ny),
            l: rng.gen_range(1..=bounds.l_max),
            w: rng.gen_range(1..=bounds.w_max),
            active: rng.gen_bool(0.5),
        })
        .collect();
    Genome { genes }
}

/// Union of the clipped rectangles of active genes as forced voids.
pub fn decode(genome: &Genome, mesh: &Mesh2D) -> PassiveMask {
    let mut mask = PassiveMask::empty(mesh.n_elements());
    for gene in genome.genes.iter().filter(|g| g.active) {
        let (x0, x1, y0, y1) = gene.clipped(mesh.nx(), mesh.ny());
        for c in x0..x1 {
            for r in y0..y1 {
                mask.set(mesh.element(c, r), ElementState::ForcedVoid);
            }
        }
    }
    mask
}

fn active_rects(genome: &Genome, nx: usize, ny: usize) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
    genome
        .genes
        .iter()
        .filter(|g| g.active)
        .map(move |g| g.clipped(nx, ny))
        .filter(|&(x0, x1, y0, y1)| x1 > x0 && y1 > y0)
}

/// Shannon entropy (nats) of the clipped active void areas.
pub fn entropy_descriptor(genome: &Genome, nx: usize, ny: usize) -> f64 {
    let areas: Vec<f64> = active_rects(genome, nx, ny)
        .map(|(x0, x1, y0, y1)| ((x1 - x0) * (y1 - y0)) as f64)
        .collect();
    if areas.len() <= 1 {
        return 0.0;
    }
    let total: f64 = areas.iter().sum();
    let h: f64 = areas
        .iter()
        .map(|a| {
            let p = a / total;
            -p * p.ln()
        })
        .sum();
    h.max(0.0)
}

/// Which summary of the pairwise centroid distances serves as the second
/// descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionStat {
    #[default]
    Std,
    Mean,
}

fn pairwise_distances(genome: &Genome, nx: usize, ny: usize) -> Vec<f64> {
    let centroids: Vec<(f64, f64)> = active_rects(genome, nx, ny)
        .map(|(x0, x1, y0, y1)| (x0 as f64 + (x1 - x0) as f64 / 2.0, y0 as f64 + (y1 - y0) as f64 / 2.0))
        .collect();
    let mut d = Vec::with_capacity(centroids.len() * centroids.len().saturating_sub(1) / 2);
    for (i, a) in centroids.iter().enumerate() {
        for b in &centroids[i + 1..] {
            d.push(((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt());
        }
    }
    d
}

/// Population standard deviation of the pairwise distances between the
/// centroids of clipped active voids; zero with fewer than three voids.
pub fn dispersion_descriptor(genome: &Genome, nx: usize, ny: usize) -> f64 {
    dispersion_with(genome, nx, ny, DispersionStat::Std)
}

pub fn dispersion_with(genome: &Genome, nx: usize, ny: usize, stat: DispersionStat) -> f64 {
    let d = pairwise_distances(genome, nx, ny);
    match stat {
        DispersionStat::Mean => {
            if d.is_empty() {
                0.0
            } else {
                d.iter().sum::<f64>() / d.len() as f64
            }
        }
        DispersionStat::Std => {
            if d.len() < 2 {
                return 0.0;
            }
            let n = d.len() as f64;
            let mean = d.iter().sum::<f64>() / n;
            (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub entropy: f64,
    pub dispersion: f64,
}

impl Descriptor {
    pub fn of(genome: &Genome, nx: usize, ny: usize, stat: DispersionStat) -> Self {
        Self {
            entropy: entropy_descriptor(genome, nx, ny),
            dispersion: dispersion_with(genome, nx, ny, stat),
        }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.entropy, self.dispersion]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationParams {
    /// Per-field probability of a Gaussian step on x, y, l and w.
    pub p_mut: f64,
    /// Per-gene probability of flipping the activation flag.
    pub p_flip: f64,
    /// Step standard deviation as a fraction of the field's range.
    pub sigma_frac: f64,
    /// Resample until the offspring differs from its parent.
    pub guarantee_change: bool,
}

impl Default for MutationParams {
    fn default() -> Self {
        Self {
            p_mut: 0.3,
            p_flip: 0.1,
            sigma_frac: 0.1,
            guarantee_change: true,
        }
    }
}

const MAX_RESAMPLES: usize = 64;

fn perturb<R: Rng + ?Sized>(rng: &mut R, value: usize, lo: usize, hi: usize, params: &MutationParams) -> usize {
    if !rng.gen_bool(params.p_mut.clamp(0.0, 1.0)) || hi <= lo {
        return value;
    }
    let sigma = params.sigma_frac * (hi - lo) as f64;
    let step = match Normal::new(0.0, sigma) {
        Ok(normal) => normal.sample(rng).round(),
        Err(_) => 0.0,
    };
    (value as f64 + step).clamp(lo as f64, hi as f64) as usize
}

fn mutate_once<R: Rng + ?Sized>(genome: &Genome, rng: &mut R, bounds: &GenomeBounds, params: &MutationParams) -> Genome {
    let genes = genome
        .genes
        .iter()
        .map(|g| {
            let x = perturb(rng, g.x.min(bounds.nx - 1), 0, bounds.nx - 1, params);
            let y = perturb(rng, g.y.min(bounds.ny - 1), 0, bounds.ny - 1, params);
            let l = perturb(rng, g.l.clamp(1, bounds.l_max), 1, bounds.l_max, params);
            let w = perturb(rng, g.w.clamp(1, bounds.w_max), 1, bounds.w_max, params);
            let flip = rng.gen_bool(params.p_flip.clamp(0.0, 1.0));
            VoidGene {
                x,
                y,
                l,
                w,
                active: g.active ^ flip,
            }
        })
        .collect();
    Genome { genes }
}

/// Gaussian field steps and activation flips, clamped to `bounds`.
pub fn mutate<R: Rng + ?Sized>(genome: &Genome, rng: &mut R, bounds: &GenomeBounds, params: &MutationParams) -> Genome {
    let mut child = mutate_once(genome, rng, bounds, params);
    if !params.guarantee_change || genome.is_empty() {
        return child;
    }
    for _ in 0..MAX_RESAMPLES {
        if child != *genome {
            return child;
        }
        child = mutate_once(genome, rng, bounds, params);
    }
    if child == *genome {
        let i = rng.gen_range(0..child.genes.len());
        child.genes[i].active = !child.genes[i].active;
    }
    child
}

/// Uniform crossover at whole-gene granularity.
pub fn crossover<R: Rng + ?Sized>(parent_a: &Genome, parent_b: &Genome, rng: &mut R) -> Genome {
    assert_eq!(parent_a.len(), parent_b.len(), "parents differ in length");
    let genes = parent_a
        .genes
        .iter()
        .zip(&parent_b.genes)
        .map(|(a, b)| if rng.gen_bool(0.5) { *a } else { *b })
        .collect();
    Genome { genes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn gene(x: usize, y: usize, l: usize, w: usize, active: bool) -> VoidGene {
        VoidGene { x, y, l, w, active }
    }

    fn bounds() -> GenomeBounds {
        GenomeBounds {
            n_max: 10,
            nx: 200,
            ny: 100,
            l_max: 50,
            w_max: 25,
        }
    }

    #[test]
    fn decode_rectangle() {
        let mesh = Mesh2D::new(200, 100).unwrap();
        let g = Genome {
            genes: vec![gene(10, 20, 30, 15, true), gene(0, 0, 5, 5, false)],
        };
        let mask = decode(&g, &mesh);
        for e in 0..mesh.n_elements() {
            let (c, r) = mesh.element_col_row(e);
            let inside = (10..40).contains(&c) && (20..35).contains(&r);
            assert_eq!(mask.is_void(e), inside);
        }
    }

    #[test]
    fn decode_clips_and_ignores_inactive() {
        let mesh = Mesh2D::new(200, 100).unwrap();
        let g = Genome {
            genes: vec![gene(195, 95, 30, 15, true)],
        };
        let mask = decode(&g, &mesh);
        assert_eq!(mask.count(ElementState::ForcedVoid), 25);
        assert!(mask.is_void(mesh.element(199, 99)));
        assert!(mask.is_void(mesh.element(195, 95)));
        let off = Genome {
            genes: vec![gene(1, 1, 3, 3, false); 4],
        };
        assert_eq!(decode(&off, &mesh).count(ElementState::ForcedVoid), 0);
    }

    #[test]
    fn entropy_values() {
        let two = Genome {
            genes: vec![gene(0, 0, 4, 2, true), gene(50, 50, 2, 4, true)],
        };
        assert!((entropy_descriptor(&two, 200, 100) - 2f64.ln()).abs() < 1e-12);
        let one = Genome {
            genes: vec![gene(0, 0, 4, 2, true), gene(50, 50, 2, 4, false)],
        };
        assert_eq!(entropy_descriptor(&one, 200, 100), 0.0);
        let skew = Genome {
            genes: vec![gene(0, 0, 1, 1, true), gene(50, 50, 3, 1, true)],
        };
        // -(0.25 ln 0.25 + 0.75 ln 0.75), evaluated by hand.
        assert!((entropy_descriptor(&skew, 200, 100) - 0.562_335_144_618_191).abs() < 1e-12);
    }

    #[test]
    fn dispersion_values() {
        let g = Genome {
            genes: vec![gene(2, 3, 4, 2, true)],
        };
        let d = pairwise_distances(&g, 200, 100);
        assert!(d.is_empty());
        let two = Genome {
            genes: vec![gene(2, 3, 4, 2, true), gene(20, 3, 4, 2, true)],
        };
        assert_eq!(dispersion_descriptor(&two, 200, 100), 0.0);
        // Centroids at x = 4, 14, 24 on one row: distances {10, 10, 20}.
        let three = Genome {
            genes: vec![gene(2, 3, 4, 2, true), gene(12, 3, 4, 2, true), gene(22, 3, 4, 2, true)],
        };
        let expected = 10.0 * 2f64.sqrt() / 3.0;
        assert!((dispersion_descriptor(&three, 200, 100) - expected).abs() < 1e-12);
        assert!((dispersion_with(&three, 200, 100, DispersionStat::Mean) - 40.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn centroid_of_gene() {
        let g = Genome {
            genes: vec![gene(2, 3, 4, 2, true), gene(3, 3, 2, 2, true)],
        };
        // Both centroids at (4, 4) so the single distance is zero.
        assert_eq!(pairwise_distances(&g, 200, 100), vec![0.0]);
    }

    #[test]
    fn random_genome_is_seeded_and_bounded() {
        let b = bounds();
        let a = random_genome(&mut StdRng::seed_from_u64(3), &b);
        let c = random_genome(&mut StdRng::seed_from_u64(3), &b);
        assert_eq!(a, c);
        assert_eq!(a.len(), 10);
        assert!(a.genes.iter().all(|g| b.contains(g)));
        let tiny = GenomeBounds { l_max: 1, w_max: 1, ..b };
        let t = random_genome(&mut StdRng::seed_from_u64(9), &tiny);
        assert!(t.genes.iter().all(|g| g.l == 1 && g.w == 1));
    }

    #[test]
    fn activation_rate_is_fair() {
        let b = bounds();
        let mut rng = StdRng::seed_from_u64(11);
        let trials = 10_000;
        let active: usize = (0..trials).map(|_| random_genome(&mut rng, &b).active_count()).sum();
        let mean = active as f64 / trials as f64;
        // 4 sigma of the binomial mean: sigma = sqrt(10 * 0.25 / trials).
        let tol = 4.0 * (10.0 * 0.25 / trials as f64).sqrt();
        assert!((mean - 5.0).abs() < tol, "mean active {mean}");
    }

    #[test]
    fn mutation_edge_cases() {
        let b = bounds();
        let mut rng = StdRng::seed_from_u64(5);
        let g = random_genome(&mut rng, &b);
        let frozen = MutationParams {
            p_mut: 0.0,
            p_flip: 0.0,
            guarantee_change: false,
            ..MutationParams::default()
        };
        assert_eq!(mutate(&g, &mut rng, &b, &frozen), g);
        let flip_all = MutationParams {
            p_mut: 0.0,
            p_flip: 1.0,
            ..MutationParams::default()
        };
        let m = mutate(&g, &mut rng, &b, &flip_all);
        for (a, c) in g.genes.iter().zip(&m.genes) {
            assert_eq!(a.active, !c.active);
            assert_eq!((a.x, a.y, a.l, a.w), (c.x, c.y, c.l, c.w));
        }
        let forced = MutationParams {
            p_mut: 0.0,
            p_flip: 0.0,
            guarantee_change: true,
            ..MutationParams::default()
        };
        assert_ne!(mutate(&g, &mut rng, &b, &forced), g);
    }

    #[test]
    fn mutation_stays_in_bounds() {
        let b = GenomeBounds {
            n_max: 3,
            nx: 12,
            ny: 7,
            l_max: 4,
            w_max: 2,
        };
        let mesh = Mesh2D::new(12, 7).unwrap();
        let params = MutationParams {
            p_mut: 0.9,
            sigma_frac: 0.8,
            ..MutationParams::default()
        };
        let mut rng = StdRng::seed_from_u64(1);
        let mut g = random_genome(&mut rng, &b);
        for _ in 0..100_000 {
            g = mutate(&g, &mut rng, &b, &params);
            assert!(g.genes.iter().all(|x| b.contains(x)));
        }
        assert_eq!(decode(&g, &mesh).len(), mesh.n_elements());
    }

    #[test]
    fn crossover_takes_whole_genes() {
        let b = bounds();
        let mut rng = StdRng::seed_from_u64(17);
        let pa = random_genome(&mut rng, &b);
        let pb = random_genome(&mut rng, &b);
        assert_eq!(crossover(&pa, &pa, &mut rng), pa);
        for _ in 0..10_000 {
            let child = crossover(&pa, &pb, &mut rng);
            for i in 0..child.len() {
                assert!(child.genes[i] == pa.genes[i] || child.genes[i] == pb.genes[i]);
            }
        }
    }

    #[test]
    fn crossover_replays_coin_stream() {
        let pa = Genome {
            genes: (0..6).map(|i| gene(i, 0, 1, 1, true)).collect(),
        };
        let pb = Genome {
            genes: (0..6).map(|i| gene(i, 5, 2, 2, false)).collect(),
        };
        let mut coins = StdRng::seed_from_u64(23);
        let expected: Vec<VoidGene> = (0..6)
            .map(|i| if coins.gen_bool(0.5) { pa.genes[i] } else { pb.genes[i] })
            .collect();
        let child = crossover(&pa, &pb, &mut StdRng::seed_from_u64(23));
        assert_eq!(child.genes, expected);
    }

    #[test]
    fn flat_round_trip_and_errors() {
        let g = Genome {
            genes: vec![gene(1, 2, 3, 4, true), gene(5, 6, 7, 8, false)],
        };
        assert_eq!(g.to_flat(), vec![1, 2, 3, 4, 1, 5, 6, 7, 8, 0]);
        let flat: Vec<i64> = g.to_flat().iter().map(|&v| v as i64).collect();
        assert_eq!(Genome::from_flat(&flat).unwrap(), g);
        assert_eq!(Genome::from_flat(&[1, 2, 3]), Err(GenomeError::BadLength(3)));
        assert_eq!(Genome::from_flat(&[1, 2, 3, 4, 2]), Err(GenomeError::BadActivation(2)));
        assert_eq!(Genome::from_flat(&[1, -2, 3, 4, 0]), Err(GenomeError::Negative(-2)));
    }
}
