//! Interaction structures for the Ising models.
//!
//! Every family is normalized so that the Ising density reads
//! `exp((beta / 2) * x' Q x)`. Dense regular families have unit row sums;
//! lattices carry the coupling `1 / (2 dim)` on every nearest-neighbour
//! pair, which puts the two-dimensional critical point at
//! `2 ln(1 + sqrt 2)`.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest lattice that may be expanded into a dense matrix.
pub const DENSE_LATTICE_CAP: usize = 4096;

/// Resampling cap for the random regular pairing model.
pub const PAIRING_RETRY_CAP: usize = 1000;

const SYMMETRY_TOL: f64 = 1e-12;
const REGULARITY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid graph parameters: {0}")]
    Parameter(String),
    #[error("graph construction failed: {0}")]
    Construction(String),
    #[error("cannot read interaction matrix: {0}")]
    Io(String),
}

/// The dependence structure of one Ising model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphFamily {
    /// Hypercubic box `{0..side}^dim` with free boundaries.
    Lattice {
        side: usize,
        dim: usize,
    },
    CurieWeiss {
        n: usize,
    },
    /// Complete bipartite graph between `{0..n/2}` and `{n/2..n}`.
    CompleteBipartite {
        n: usize,
    },
    /// Uniform-ish random `degree`-regular graph, scaled by `1 / degree`.
    RandomRegular {
        n: usize,
        degree: usize,
        seed: u64,
    },
    /// Row-major `n x n` symmetric hollow matrix.
    ExplicitMatrix {
        n: usize,
        values: Vec<f64>,
    },
}

impl GraphFamily {
    pub fn vertex_count(&self) -> usize {
        match self {
            GraphFamily::Lattice { side, dim } => {
                side.checked_pow(*dim as u32).unwrap_or(usize::MAX)
            }
            GraphFamily::CurieWeiss { n }
            | GraphFamily::CompleteBipartite { n }
            | GraphFamily::RandomRegular { n, .. }
            | GraphFamily::ExplicitMatrix { n, .. } => *n,
        }
    }

    pub fn tag(&self) -> FamilyTag {
        match self {
            GraphFamily::Lattice { dim, .. } => FamilyTag::Lattice { dim: *dim },
            GraphFamily::CurieWeiss { .. } => FamilyTag::CurieWeiss,
            GraphFamily::CompleteBipartite { .. } => FamilyTag::CompleteBipartite,
            GraphFamily::RandomRegular { .. } => FamilyTag::RandomRegular,
            GraphFamily::ExplicitMatrix { .. } => FamilyTag::Explicit,
        }
    }

    /// Reads a whitespace separated dense matrix, one row per line.
    pub fn explicit_from_file(path: &Path) -> Result<GraphFamily, GraphError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GraphError::Io(format!("{}: {e}", path.display())))?;
        Self::explicit_from_str(&text)
    }

    pub fn explicit_from_str(text: &str) -> Result<GraphFamily, GraphError> {
        let mut values = Vec::new();
        let mut rows = 0usize;
        let mut width = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| {
                        GraphError::Parameter(format!("line {}: bad number {tok:?}", lineno + 1))
                    })
                })
                .collect::<Result<_, _>>()?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(GraphError::Parameter(format!(
                        "line {}: expected {w} entries, found {}",
                        lineno + 1,
                        row.len()
                    )))
                }
                _ => {}
            }
            values.extend(row);
            rows += 1;
        }
        if Some(rows) != width {
            return Err(GraphError::Parameter(format!(
                "matrix is not square: {rows} rows of width {}",
                width.unwrap_or(0)
            )));
        }
        Ok(GraphFamily::ExplicitMatrix { n: rows, values })
    }
}

/// Family identity retained by a built matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyTag {
    Lattice { dim: usize },
    CurieWeiss,
    CompleteBipartite,
    RandomRegular,
    Explicit,
}

impl FamilyTag {
    /// Families covered by the dense regular universality result.
    pub fn is_dense_regular(&self) -> bool {
        matches!(
            self,
            FamilyTag::CurieWeiss | FamilyTag::CompleteBipartite | FamilyTag::RandomRegular
        )
    }
}

impl fmt::Display for FamilyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyTag::Lattice { dim } => write!(f, "lattice(d={dim})"),
            FamilyTag::CurieWeiss => f.write_str("curie-weiss"),
            FamilyTag::CompleteBipartite => f.write_str("complete-bipartite"),
            FamilyTag::RandomRegular => f.write_str("random-regular"),
            FamilyTag::Explicit => f.write_str("explicit"),
        }
    }
}

/// Storage for `Q`.
#[derive(Debug, Clone, PartialEq)]
pub enum Coupling {
    /// CSR neighbour lists with one weight per directed entry.
    Sparse {
        offsets: Vec<usize>,
        neighbors: Vec<u32>,
        weights: Vec<f64>,
    },
    /// `Q[i][j] = block[group[i]][group[j]]` for `i != j`.
    Block {
        groups: Vec<u32>,
        group_count: usize,
        block: Vec<f64>,
    },
    /// Row-major dense matrix.
    Dense { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    n: usize,
    family: FamilyTag,
    coupling: Coupling,
    row_sums: Vec<f64>,
}

impl InteractionMatrix {
    fn new(n: usize, family: FamilyTag, coupling: Coupling) -> Self {
        let mut m = InteractionMatrix {
            n,
            family,
            coupling,
            row_sums: Vec::new(),
        };
        m.row_sums = (0..n).map(|i| m.row_sum_slow(i)).collect();
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> FamilyTag {
        self.family
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    pub fn row_sums(&self) -> &[f64] {
        &self.row_sums
    }

    fn row_sum_slow(&self, i: usize) -> f64 {
        match &self.coupling {
            Coupling::Sparse {
                offsets, weights, ..
            } => weights[offsets[i]..offsets[i + 1]].iter().sum(),
            Coupling::Block {
                groups,
                group_count,
                block,
            } => {
                let mut sizes = vec![0usize; *group_count];
                for &g in groups {
                    sizes[g as usize] += 1;
                }
                let gi = groups[i] as usize;
                (0..*group_count)
                    .map(|g| {
                        let count = if g == gi { sizes[g] - 1 } else { sizes[g] };
                        block[gi * group_count + g] * count as f64
                    })
                    .sum()
            }
            Coupling::Dense { values } => values[i * self.n..(i + 1) * self.n].iter().sum(),
        }
    }

    /// Entry `Q[i][j]`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.n && j < self.n, "index out of range");
        match &self.coupling {
            Coupling::Sparse {
                offsets,
                neighbors,
                weights,
            } => (offsets[i]..offsets[i + 1])
                .find(|&e| neighbors[e] as usize == j)
                .map_or(0.0, |e| weights[e]),
            Coupling::Block {
                groups,
                group_count,
                block,
            } => {
                if i == j {
                    0.0
                } else {
                    block[groups[i] as usize * group_count + groups[j] as usize]
                }
            }
            Coupling::Dense { values } => values[i * self.n + j],
        }
    }

    /// Number of `j` with `Q[i][j] != 0`.
    pub fn degree(&self, i: usize) -> usize {
        match &self.coupling {
            Coupling::Sparse {
                offsets, weights, ..
            } => weights[offsets[i]..offsets[i + 1]]
                .iter()
                .filter(|w| **w != 0.0)
                .count(),
            _ => (0..self.n).filter(|&j| self.get(i, j) != 0.0).count(),
        }
    }

    /// Neighbour list and weights of vertex `i`; only for sparse storage.
    pub fn sparse_row(&self, i: usize) -> Option<(&[u32], &[f64])> {
        match &self.coupling {
            Coupling::Sparse {
                offsets,
                neighbors,
                weights,
            } => {
                let r = offsets[i]..offsets[i + 1];
                Some((&neighbors[r.clone()], &weights[r]))
            }
            _ => None,
        }
    }

    /// `sum_j Q[i][j] x_j`.
    pub fn local_field(&self, i: usize, x: &[i8]) -> f64 {
        match &self.coupling {
            Coupling::Sparse {
                offsets,
                neighbors,
                weights,
            } => (offsets[i]..offsets[i + 1])
                .map(|e| weights[e] * x[neighbors[e] as usize] as f64)
                .sum(),
            Coupling::Block {
                groups,
                group_count,
                block,
            } => {
                let mut sums = vec![0.0; *group_count];
                for (j, &g) in groups.iter().enumerate() {
                    sums[g as usize] += x[j] as f64;
                }
                let gi = groups[i] as usize;
                sums[gi] -= x[i] as f64;
                (0..*group_count)
                    .map(|g| block[gi * group_count + g] * sums[g])
                    .sum()
            }
            Coupling::Dense { values } => values[i * self.n..(i + 1) * self.n]
                .iter()
                .zip(x)
                .map(|(q, &s)| q * s as f64)
                .sum(),
        }
    }

    /// `x' Q x`.
    pub fn quadratic_form(&self, x: &[i8]) -> f64 {
        assert_eq!(x.len(), self.n);
        match &self.coupling {
            Coupling::Block {
                groups,
                group_count,
                block,
            } => {
                // sum_{i != j} B[g_i][g_j] x_i x_j = S' B S - sum_i B[g_i][g_i] x_i^2
                let k = *group_count;
                let mut sums = vec![0.0; k];
                let mut diag = 0.0;
                for (j, &g) in groups.iter().enumerate() {
                    sums[g as usize] += x[j] as f64;
                    diag += block[g as usize * k + g as usize];
                }
                let mut total = 0.0;
                for a in 0..k {
                    for b in 0..k {
                        total += block[a * k + b] * sums[a] * sums[b];
                    }
                }
                total - diag
            }
            _ => (0..self.n)
                .map(|i| x[i] as f64 * self.local_field(i, x))
                .sum(),
        }
    }

    /// Row-major dense copy of `Q`.
    pub fn to_dense(&self) -> Result<Vec<f64>, GraphError> {
        if matches!(self.family, FamilyTag::Lattice { .. }) && self.n > DENSE_LATTICE_CAP {
            return Err(GraphError::Parameter(format!(
                "refusing to densify a lattice with {} > {DENSE_LATTICE_CAP} vertices",
                self.n
            )));
        }
        let mut out = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            match &self.coupling {
                Coupling::Sparse {
                    offsets,
                    neighbors,
                    weights,
                } => {
                    for e in offsets[i]..offsets[i + 1] {
                        out[i * self.n + neighbors[e] as usize] += weights[e];
                    }
                }
                _ => {
                    for j in 0..self.n {
                        out[i * self.n + j] = self.get(i, j);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Largest entry and Frobenius norm squared, without densifying.
    fn entry_summary(&self) -> (f64, f64) {
        match &self.coupling {
            Coupling::Sparse { weights, .. } => {
                let max = weights.iter().copied().fold(0.0, f64::max);
                (max, weights.iter().map(|w| w * w).sum())
            }
            Coupling::Block {
                groups,
                group_count,
                block,
            } => {
                let k = *group_count;
                let mut sizes = vec![0f64; k];
                for &g in groups {
                    sizes[g as usize] += 1.0;
                }
                let mut max = 0.0f64;
                let mut frob = 0.0;
                for a in 0..k {
                    for b in 0..k {
                        let pairs = if a == b {
                            sizes[a] * (sizes[a] - 1.0)
                        } else {
                            sizes[a] * sizes[b]
                        };
                        if pairs > 0.0 {
                            max = max.max(block[a * k + b]);
                            frob += pairs * block[a * k + b].powi(2);
                        }
                    }
                }
                (max, frob)
            }
            Coupling::Dense { values } => (
                values.iter().copied().fold(0.0, f64::max),
                values.iter().map(|v| v * v).sum(),
            ),
        }
    }
}

/// Builds `Q` for a graph family.
pub fn build_interaction(family: &GraphFamily) -> Result<InteractionMatrix, GraphError> {
    match family {
        GraphFamily::Lattice { side, dim } => build_lattice(*side, *dim),
        GraphFamily::CurieWeiss { n } => {
            if *n < 2 {
                return Err(GraphError::Parameter(format!(
                    "curie-weiss needs n >= 2, got {n}"
                )));
            }
            Ok(InteractionMatrix::new(
                *n,
                FamilyTag::CurieWeiss,
                Coupling::Block {
                    groups: vec![0; *n],
                    group_count: 1,
                    block: vec![1.0 / *n as f64],
                },
            ))
        }
        GraphFamily::CompleteBipartite { n } => {
            if *n < 2 || n % 2 != 0 {
                return Err(GraphError::Parameter(format!(
                    "complete bipartite needs an even n >= 2, got {n}"
                )));
            }
            let w = 2.0 / *n as f64;
            let groups = (0..*n).map(|i| u32::from(i >= n / 2)).collect();
            Ok(InteractionMatrix::new(
                *n,
                FamilyTag::CompleteBipartite,
                Coupling::Block {
                    groups,
                    group_count: 2,
                    block: vec![0.0, w, w, 0.0],
                },
            ))
        }
        GraphFamily::RandomRegular { n, degree, seed } => build_random_regular(*n, *degree, *seed),
        GraphFamily::ExplicitMatrix { n, values } => build_explicit(*n, values),
    }
}

fn build_lattice(side: usize, dim: usize) -> Result<InteractionMatrix, GraphError> {
    if side == 0 || dim == 0 {
        return Err(GraphError::Parameter(format!(
            "lattice needs positive side and dim, got side={side} dim={dim}"
        )));
    }
    let n = side
        .checked_pow(dim as u32)
        .filter(|&n| n <= u32::MAX as usize)
        .ok_or_else(|| GraphError::Parameter("lattice too large".into()))?;
    let weight = 1.0 / (2 * dim) as f64;
    let mut offsets = Vec::with_capacity(n + 1);
    let mut neighbors = Vec::with_capacity(2 * dim * n);
    offsets.push(0);
    for v in 0..n {
        let mut stride = 1;
        let mut rest = v;
        for _ in 0..dim {
            let coord = rest % side;
            rest /= side;
            if coord > 0 {
                neighbors.push((v - stride) as u32);
            }
            if coord + 1 < side {
                neighbors.push((v + stride) as u32);
            }
            stride *= side;
        }
        offsets.push(neighbors.len());
    }
    let weights = vec![weight; neighbors.len()];
    Ok(InteractionMatrix::new(
        n,
        FamilyTag::Lattice { dim },
        Coupling::Sparse {
            offsets,
            neighbors,
            weights,
        },
    ))
}

fn build_random_regular(
    n: usize,
    degree: usize,
    seed: u64,
) -> Result<InteractionMatrix, GraphError> {
    if degree == 0 || degree >= n || !(n * degree).is_multiple_of(2) {
        return Err(GraphError::Parameter(format!(
            "random regular needs 0 < d < n and n*d even, got n={n} d={degree}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adjacency = (0..PAIRING_RETRY_CAP)
        .find_map(|_| pair_stubs(n, degree, &mut rng))
        .ok_or_else(|| {
            GraphError::Construction(format!(
                "pairing model failed {PAIRING_RETRY_CAP} times for n={n} d={degree}"
            ))
        })?;
    let mut offsets = Vec::with_capacity(n + 1);
    let mut neighbors = Vec::with_capacity(n * degree);
    offsets.push(0);
    for mut row in adjacency {
        row.sort_unstable();
        neighbors.extend(row);
        offsets.push(neighbors.len());
    }
    let weights = vec![1.0 / degree as f64; neighbors.len()];
    Ok(InteractionMatrix::new(
        n,
        FamilyTag::RandomRegular,
        Coupling::Sparse {
            offsets,
            neighbors,
            weights,
        },
    ))
}

/// One attempt of the pairing model restricted to admissible pairs.
///
/// Stubs are matched two at a time; a pair that would create a loop or a
/// repeated edge is redrawn. When random redraws keep failing, the
/// admissible pairs are enumerated; if none remain the attempt is
/// abandoned and `None` is returned.
fn pair_stubs(n: usize, degree: usize, rng: &mut impl Rng) -> Option<Vec<Vec<u32>>> {
    let mut stubs: Vec<u32> = (0..n as u32)
        .flat_map(|v| std::iter::repeat_n(v, degree))
        .collect();
    stubs.shuffle(rng);
    let mut edges: HashSet<(u32, u32)> = HashSet::with_capacity(n * degree / 2);
    let mut adjacency = vec![Vec::with_capacity(degree); n];
    let key = |a: u32, b: u32| (a.min(b), a.max(b));
    while !stubs.is_empty() {
        let len = stubs.len();
        let mut picked = None;
        for _ in 0..64 {
            let a = rng.random_range(0..len);
            let b = rng.random_range(0..len);
            let (u, v) = (stubs[a], stubs[b]);
            if a != b && u != v && !edges.contains(&key(u, v)) {
                picked = Some((a, b));
                break;
            }
        }
        let (a, b) = match picked {
            Some(p) => p,
            None => {
                let admissible: Vec<(usize, usize)> = (0..len)
                    .flat_map(|a| (a + 1..len).map(move |b| (a, b)))
                    .filter(|&(a, b)| {
                        stubs[a] != stubs[b] && !edges.contains(&key(stubs[a], stubs[b]))
                    })
                    .collect();
                if admissible.is_empty() {
                    return None;
                }
                admissible[rng.random_range(0..admissible.len())]
            }
        };
        let (u, v) = (stubs[a], stubs[b]);
        edges.insert(key(u, v));
        adjacency[u as usize].push(v);
        adjacency[v as usize].push(u);
        let (hi, lo) = (a.max(b), a.min(b));
        stubs.swap_remove(hi);
        stubs.swap_remove(lo);
    }
    Some(adjacency)
}

fn build_explicit(n: usize, values: &[f64]) -> Result<InteractionMatrix, GraphError> {
    if n == 0 || values.len() != n * n {
        return Err(GraphError::Parameter(format!(
            "explicit matrix needs {n}x{n} = {} values, got {}",
            n * n,
            values.len()
        )));
    }
    for i in 0..n {
        if values[i * n + i] != 0.0 {
            return Err(GraphError::Parameter(format!(
                "diagonal entry ({i},{i}) is {} but must be 0",
                values[i * n + i]
            )));
        }
        for j in 0..i {
            let (a, b) = (values[i * n + j], values[j * n + i]);
            if !a.is_finite() || (a - b).abs() > SYMMETRY_TOL * a.abs().max(b.abs()).max(1.0) {
                return Err(GraphError::Parameter(format!(
                    "matrix is not symmetric at ({i},{j}): {a} vs {b}"
                )));
            }
        }
    }
    Ok(InteractionMatrix::new(
        n,
        FamilyTag::Explicit,
        Coupling::Dense {
            values: values.to_vec(),
        },
    ))
}

/// Regularity, entry-size and Frobenius diagnostics for `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub is_regular: bool,
    pub common_row_sum: Option<f64>,
    pub max_entry_times_n: f64,
    pub frobenius_sq: f64,
    /// Known only for built-in dense regular families; never computed.
    pub known_spectral_gap: Option<bool>,
}

/// Row sums must be constant and equal to one, or to `1 - 1/n` for the
/// hollow `(11' - I) / n` normalization whose deficit is the missing diagonal.
pub fn check_assumptions(q: &InteractionMatrix) -> AssumptionReport {
    let first = q.row_sums.first().copied().unwrap_or(0.0);
    let constant = q
        .row_sums
        .iter()
        .all(|s| (s - first).abs() <= REGULARITY_TOL);
    let unit = (first - 1.0).abs() <= REGULARITY_TOL
        || (first - (1.0 - 1.0 / q.n as f64)).abs() <= REGULARITY_TOL;
    let is_regular = constant && unit;
    let (max_entry, frobenius_sq) = q.entry_summary();
    let known_spectral_gap = match q.family {
        FamilyTag::CurieWeiss | FamilyTag::RandomRegular | FamilyTag::CompleteBipartite => {
            Some(true)
        }
        FamilyTag::Lattice { .. } | FamilyTag::Explicit => None,
    };
    AssumptionReport {
        is_regular,
        common_row_sum: constant.then_some(first),
        max_entry_times_n: max_entry * q.n as f64,
        frobenius_sq,
        known_spectral_gap,
    }
}
