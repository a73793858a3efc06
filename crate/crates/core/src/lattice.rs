//! Two-dimensional coupled map lattice on a torus.
//!
//! Every node is updated synchronously as
//! `x' = (1 - eps) F(x) + eps/4 [F(up) + F(down) + F(left) + F(right)]`,
//! in either `f64` or Q0.z fixed-point arithmetic.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::fixed::{self, check_bits, one, FixedCoef};
use crate::local_maps::{clamp_state, FixedMap, LocalMap};

/// How `F` and the coupling are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arithmetic {
    Float64,
    /// Q0.z with `1 <= z <= 64`.
    Fixed { z: u32 },
}

impl Arithmetic {
    /// Number of exact fractional bits a node value carries.
    pub fn precision_bits(&self) -> u32 {
        match *self {
            Arithmetic::Float64 => 53,
            Arithmetic::Fixed { z } => z,
        }
    }
}

/// 1-based node coordinates `(u, v)`, `u` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Node {
    pub u: usize,
    pub v: usize,
}

impl Node {
    pub const FIRST: Node = Node { u: 1, v: 1 };

    pub fn new(u: usize, v: usize) -> Self {
        Self { u, v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeConfig {
    pub rows: usize,
    pub cols: usize,
    pub epsilon: f64,
    pub map: LocalMap,
    pub arithmetic: Arithmetic,
}

impl LatticeConfig {
    pub fn new(
        rows: usize,
        cols: usize,
        epsilon: f64,
        map: LocalMap,
        arithmetic: Arithmetic,
    ) -> Result<Self> {
        let config = Self {
            rows,
            cols,
            epsilon,
            map,
            arithmetic,
        };
        config.validate()?;
        Ok(config)
    }

    /// `R = L = 8`, `eps = 0.1`, Q0.64 arithmetic.
    pub fn with_map(map: LocalMap) -> Self {
        Self {
            rows: 8,
            cols: 8,
            epsilon: 0.1,
            map,
            arithmetic: Arithmetic::Fixed { z: 64 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(invalid(format!(
                "lattice must be at least 1x1, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid(format!("epsilon = {} not in (0, 1)", self.epsilon)));
        }
        if let Arithmetic::Fixed { z } = self.arithmetic {
            check_bits(z)?;
        }
        self.map.validate()
    }

    pub fn nodes(&self) -> usize {
        self.rows * self.cols
    }

    pub(crate) fn check_node(&self, node: Node) -> Result<usize> {
        if node.u == 0 || node.v == 0 || node.u > self.rows || node.v > self.cols {
            return Err(Error::NodeOutOfRange {
                u: node.u,
                v: node.v,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok((node.u - 1) * self.cols + node.v - 1)
    }
}

/// Initial grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Row-major `R * L` values in `(0, 1)`.
    Values(Vec<f64>),
    /// Deterministic fill from [`seeded_grid`].
    Seed(u64),
    /// The `Seed(seed)` grid shifted by `delta` modulo 1, see [`perturb_grid`].
    Perturbed { seed: u64, delta: f64 },
}

impl Init {
    /// Row-major initial values for `n` nodes (unchecked for explicit values).
    pub fn values(&self, n: usize) -> Vec<f64> {
        match self {
            Init::Values(values) => values.clone(),
            Init::Seed(seed) => seeded_grid(*seed, n),
            Init::Perturbed { seed, delta } => perturb_grid(&seeded_grid(*seed, n), *delta),
        }
    }

    /// Short human-readable description used in provenance records.
    pub fn describe(&self) -> String {
        match self {
            Init::Values(_) => "explicit".to_string(),
            Init::Seed(seed) => format!("seed:{seed}"),
            Init::Perturbed { seed, delta } => format!("seed:{seed}+{delta}"),
        }
    }
}

/// Expand `seed` into `n` values in `(0, 1)`.
///
/// The expansion is ChaCha8 seeded through `seed_from_u64`; each node takes the top
/// 53 bits of the next `u64` as `k / 2^53`, redrawing zeros.
pub fn seeded_grid(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| loop {
            let x = (rng.random::<u64>() >> 11) as f64 * crate::local_maps::FLOAT_STATE_MIN;
            if x > 0.0 {
                break x;
            }
        })
        .collect()
}

/// Add `delta` to every value modulo 1, keeping results inside `(0, 1)`.
pub fn perturb_grid(values: &[f64], delta: f64) -> Vec<f64> {
    values
        .iter()
        .map(|&x| clamp_state((x + delta).rem_euclid(1.0)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
enum Cells {
    Float(Vec<f64>),
    Fixed { raw: Vec<u64>, z: u32 },
}

/// Grid of node values plus the iteration counter.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeState {
    rows: usize,
    cols: usize,
    time: u64,
    cells: Cells,
}

impl LatticeState {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    /// Value at 0-based row-major index.
    #[inline]
    pub fn value_at(&self, index: usize) -> f64 {
        match &self.cells {
            Cells::Float(x) => x[index],
            Cells::Fixed { raw, z } => raw[index] as f64 / 2f64.powi(*z as i32),
        }
    }

    pub fn value(&self, node: Node) -> f64 {
        self.value_at((node.u - 1) * self.cols + node.v - 1)
    }

    /// Row-major copy of all node values.
    pub fn values(&self) -> Vec<f64> {
        (0..self.rows * self.cols).map(|i| self.value_at(i)).collect()
    }

    /// Raw Q0.z integers when the state is fixed point.
    pub fn raw_values(&self) -> Option<&[u64]> {
        match &self.cells {
            Cells::Fixed { raw, .. } => Some(raw),
            Cells::Float(_) => None,
        }
    }

    /// Top `z` fractional bits of the node at `index` as an integer, `w_1` most significant.
    #[inline]
    pub(crate) fn tap_word(&self, index: usize, z: u32) -> u64 {
        match &self.cells {
            Cells::Fixed { raw, z: zl } => {
                let shift = zl - z;
                if shift == 64 {
                    0
                } else {
                    raw[index] >> shift
                }
            }
            Cells::Float(x) => fixed::scale_floor(x[index], z) as u64,
        }
    }

    /// CSV snapshot, header `u,v,value`, row-major with 1-based indices.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("u,v,value\n");
        for u in 0..self.rows {
            for v in 0..self.cols {
                let _ = writeln!(out, "{},{},{}", u + 1, v + 1, self.value_at(u * self.cols + v));
            }
        }
        out
    }
}

/// Toroidal neighbor tables.
#[derive(Debug, Clone)]
pub(crate) struct Stencil {
    cols: usize,
    up: Vec<usize>,
    down: Vec<usize>,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl Stencil {
    pub(crate) fn new(rows: usize, cols: usize) -> Self {
        Self {
            cols,
            up: (0..rows).map(|u| (u + rows - 1) % rows * cols).collect(),
            down: (0..rows).map(|u| (u + 1) % rows * cols).collect(),
            left: (0..cols).map(|v| (v + cols - 1) % cols).collect(),
            right: (0..cols).map(|v| (v + 1) % cols).collect(),
        }
    }

    /// Calls `f(i, up, down, left, right)` for every node index.
    #[inline]
    pub(crate) fn for_each(&self, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
        for (u, (&up, &down)) in self.up.iter().zip(&self.down).enumerate() {
            let row = u * self.cols;
            for (v, (&left, &right)) in self.left.iter().zip(&self.right).enumerate() {
                f(row + v, up + v, down + v, row + left, row + right);
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Kernel {
    Float {
        map: LocalMap,
        own: f64,
        side: f64,
        images: Vec<f64>,
    },
    Fixed {
        map: FixedMap,
        own: FixedCoef,
        side: FixedCoef,
        z: u32,
        images: Vec<u128>,
    },
}

/// A lattice configuration with its current state and precomputed update kernel.
#[derive(Debug, Clone)]
pub struct Lattice {
    config: LatticeConfig,
    state: LatticeState,
    stencil: Stencil,
    kernel: Kernel,
}

impl Lattice {
    pub fn new(config: LatticeConfig, init: Init) -> Result<Self> {
        config.validate()?;
        let n = config.nodes();
        let values = match init {
            Init::Values(values) => {
                if values.len() != n {
                    return Err(invalid(format!(
                        "expected {n} initial values for a {}x{} lattice, got {}",
                        config.rows,
                        config.cols,
                        values.len()
                    )));
                }
                if let Some(bad) = values.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
                    return Err(Error::Domain(format!("initial value {bad} is outside (0, 1)")));
                }
                values
            }
            generated => generated.values(n),
        };
        let (cells, kernel) = match config.arithmetic {
            Arithmetic::Float64 => (
                Cells::Float(values),
                Kernel::Float {
                    map: config.map,
                    own: 1.0 - config.epsilon,
                    side: config.epsilon / 4.0,
                    images: vec![0.0; n],
                },
            ),
            Arithmetic::Fixed { z } => {
                let max = (one(z) - 1) as u64;
                let raw = values
                    .iter()
                    .map(|&x| (fixed::scale_floor(x, z) as u64).clamp(1, max))
                    .collect();
                (
                    Cells::Fixed { raw, z },
                    Kernel::Fixed {
                        map: config.map.to_fixed(z),
                        own: FixedCoef::new(1.0 - config.epsilon, z),
                        side: FixedCoef::new(config.epsilon / 4.0, z),
                        z,
                        images: vec![0; n],
                    },
                )
            }
        };
        Ok(Self {
            stencil: Stencil::new(config.rows, config.cols),
            state: LatticeState {
                rows: config.rows,
                cols: config.cols,
                time: 0,
                cells,
            },
            config,
            kernel,
        })
    }

    /// Resume from an existing state. The state's shape and arithmetic must match `config`.
    pub fn from_state(config: LatticeConfig, state: LatticeState) -> Result<Self> {
        let time = state.time;
        let init = Init::Values(state.values());
        if state.rows != config.rows || state.cols != config.cols {
            return Err(invalid("state shape does not match the configuration"));
        }
        let mut lattice = Self::new(config, init)?;
        match (&mut lattice.state.cells, state.cells) {
            (Cells::Fixed { raw, z }, Cells::Fixed { raw: src, z: zs }) if *z == zs => *raw = src,
            (Cells::Float(x), Cells::Float(src)) => *x = src,
            _ => return Err(invalid("state arithmetic does not match the configuration")),
        }
        lattice.state.time = time;
        Ok(lattice)
    }

    pub fn config(&self) -> &LatticeConfig {
        &self.config
    }

    pub fn state(&self) -> &LatticeState {
        &self.state
    }

    pub fn into_state(self) -> LatticeState {
        self.state
    }

    /// Advance every node one step.
    pub fn step(&mut self) {
        let stencil = &self.stencil;
        match (&mut self.kernel, &mut self.state.cells) {
            (
                Kernel::Float {
                    map,
                    own,
                    side,
                    images,
                },
                Cells::Float(x),
            ) => {
                map.apply_all(x, images);
                let (own, side) = (*own, *side);
                stencil.for_each(|i, up, down, left, right| {
                    let next =
                        own * images[i] + side * (images[up] + images[down] + images[left] + images[right]);
                    x[i] = clamp_state(next);
                });
            }
            (
                Kernel::Fixed {
                    map,
                    own,
                    side,
                    z,
                    images,
                },
                Cells::Fixed { raw, .. },
            ) => {
                map.apply_all(raw, images);
                let max = one(*z) - 1;
                stencil.for_each(|i, up, down, left, right| {
                    // One truncation for the neighbor term; the sum is below 2^(z+3) and
                    // eps/4 < 1/4, so the product fits in 128 bits.
                    let next = own.mul(images[i])
                        + side.mul(images[up] + images[down] + images[left] + images[right]);
                    raw[i] = next.clamp(1, max) as u64;
                });
            }
            _ => unreachable!("kernel and cells are built together"),
        }
        self.state.time += 1;
    }

    pub fn advance(&mut self, steps: usize) {
        for _ in 0..steps {
            self.step();
        }
    }

    /// Discard `n_discard` steps, then record `node` over the next `n_points` steps.
    pub fn orbit(&mut self, node: Node, n_points: usize, n_discard: usize) -> Result<Vec<f64>> {
        let index = self.config.check_node(node)?;
        self.advance(n_discard);
        Ok((0..n_points)
            .map(|_| {
                self.step();
                self.state.value_at(index)
            })
            .collect())
    }
}

/// Build a lattice state at time 0.
pub fn new_lattice(config: LatticeConfig, init: Init) -> Result<LatticeState> {
    Lattice::new(config, init).map(Lattice::into_state)
}

/// One synchronous update of `state` under `config`.
pub fn step(state: &LatticeState, config: &LatticeConfig) -> Result<LatticeState> {
    let mut lattice = Lattice::from_state(*config, state.clone())?;
    lattice.step();
    Ok(lattice.into_state())
}
