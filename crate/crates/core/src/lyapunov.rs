//! Lyapunov spectra of the 2D lattice.
//!
//! Along a synchronized trajectory the Jacobian is `F'(x_n) K`, where `K` is the
//! block-circulant coupling matrix. `K` is diagonalized by 2D Fourier modes `(r, l)`
//! with eigenvalues `1 - eps (sin^2(pi r / R) + sin^2(pi l / L))`, so every exponent is
//! `LE_F + ln |lambda_{r,l}|`. The largest one, at `r = l = 0`, is exactly `LE_F`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::lattice::{Init, Lattice, LatticeConfig, Stencil};

/// Largest lattice for which the dense `K` is built.
pub const MAX_DENSE_NODES: usize = 4096;
/// Moduli below this are reported as divergent (`le = -inf`).
pub const DIVERGENT_MODULUS: f64 = 1e-12;

pub const DEFAULT_REORTHONORMALIZE_EVERY: usize = 10;
const MIN_WOLF_ITERATIONS: usize = 10_000;

fn check_coupling(epsilon: f64, rows: usize, cols: usize) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("epsilon = {epsilon} not in (0, 1)")));
    }
    if rows == 0 || cols == 0 {
        return Err(invalid(format!("lattice must be at least 1x1, got {rows}x{cols}")));
    }
    Ok(())
}

/// Eigenvalue of `K` for Fourier mode `(r, l)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeEigenvalue {
    pub r: usize,
    pub l: usize,
    pub value: f64,
}

/// Eigenvalues of the coupling matrix, built from the roots of unity
/// `omega_r = exp(2 pi i r / R)` and `mu_l = exp(2 pi i l / L)`:
/// `1 - eps + eps/4 (omega_r + omega_r^(R-1)) + eps/4 (mu_l + mu_l^(L-1))`.
pub fn eigenvalues(epsilon: f64, rows: usize, cols: usize) -> Result<Vec<ModeEigenvalue>> {
    check_coupling(epsilon, rows, cols)?;
    let root = |k: usize, n: usize| Complex64::from_polar(1.0, 2.0 * PI * (k % n) as f64 / n as f64);
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let omega = root(r, rows);
        let omega_back = root(r * (rows - 1), rows);
        for l in 0..cols {
            let mu = root(l, cols);
            let mu_back = root(l * (cols - 1), cols);
            let lambda = Complex64::new(1.0 - epsilon, 0.0)
                + epsilon / 4.0 * (omega + omega_back)
                + epsilon / 4.0 * (mu + mu_back);
            assert!(
                lambda.im.abs() <= 1e-12,
                "mode ({r}, {l}) has imaginary part {}",
                lambda.im
            );
            out.push(ModeEigenvalue {
                r,
                l,
                value: lambda.re,
            });
        }
    }
    Ok(out)
}

/// Dense `(R L) x (R L)` coupling matrix, row-major node order.
///
/// Diagonal blocks are circulant-tridiagonal with `1 - eps` on the diagonal and `eps/4`
/// on the wrapped off-diagonals; the blocks for the rows above and below are
/// `eps/4 I`. Coinciding neighbors (sizes 1 and 2) accumulate.
pub fn coupling_matrix(epsilon: f64, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    check_coupling(epsilon, rows, cols)?;
    let n = rows * cols;
    if n > MAX_DENSE_NODES {
        return Err(invalid(format!(
            "dense coupling matrix limited to {MAX_DENSE_NODES} nodes, got {n}"
        )));
    }
    let mut k = DMatrix::zeros(n, n);
    for u in 0..rows {
        for v in 0..cols {
            let i = u * cols + v;
            k[(i, i)] += 1.0 - epsilon;
            for (du, dv) in [(1, 0), (rows - 1, 0), (0, 1), (0, cols - 1)] {
                let j = (u + du) % rows * cols + (v + dv) % cols;
                k[(i, j)] += epsilon / 4.0;
            }
        }
    }
    Ok(k)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(matrix: &DMatrix<f64>) -> Vec<f64> {
    let mut values: Vec<f64> = matrix.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumEntry {
    pub r: usize,
    pub l: usize,
    /// Real eigenvalue of `K` for this mode.
    pub lambda: f64,
    /// `le_f + ln |lambda|`, or `-inf` when `|lambda|` is below [`DIVERGENT_MODULUS`].
    pub le: f64,
}

impl SpectrumEntry {
    pub fn lambda_modulus(&self) -> f64 {
        self.lambda.abs()
    }

    pub fn is_divergent(&self) -> bool {
        self.le == f64::NEG_INFINITY
    }
}

/// All `R L` exponents, sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct LeSpectrum {
    pub entries: Vec<SpectrumEntry>,
    pub le_f: f64,
}

impl LeSpectrum {
    pub fn max_le(&self) -> f64 {
        self.entries[0].le
    }

    pub fn entry(&self, r: usize, l: usize) -> Option<&SpectrumEntry> {
        self.entries.iter().find(|e| e.r == r && e.l == l)
    }

    pub fn exponents(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.le).collect()
    }

    /// CSV with header `r,l,lambda,le`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,l,lambda,le\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{},{}", e.r, e.l, e.lambda, e.le);
        }
        out
    }
}

/// Closed-form spectrum `le_f + ln |1 - eps + eps/2 (cos 2 pi r/R + cos 2 pi l/L)|`.
pub fn le_spectrum(le_f: f64, epsilon: f64, rows: usize, cols: usize) -> Result<LeSpectrum> {
    check_coupling(epsilon, rows, cols)?;
    // 1 - cos(2a) = 2 sin^2(a) keeps the (0, 0) mode at exactly 1.
    let half_gap = |k: usize, n: usize| (PI * k as f64 / n as f64).sin().powi(2);
    let mut entries = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for l in 0..cols {
            let lambda = 1.0 - epsilon * (half_gap(r, rows) + half_gap(l, cols));
            let le = if lambda.abs() < DIVERGENT_MODULUS {
                f64::NEG_INFINITY
            } else {
                le_f + lambda.abs().ln()
            };
            entries.push(SpectrumEntry { r, l, lambda, le });
        }
    }
    entries.sort_by(|a, b| b.le.total_cmp(&a.le).then((a.r, a.l).cmp(&(b.r, b.l))));
    Ok(LeSpectrum { entries, le_f })
}

/// Trajectory the Wolf tangent dynamics follow.
#[derive(Debug, Clone, PartialEq)]
pub enum WolfOrbit {
    /// Every node starts at `x0`; the lattice then stays synchronized.
    Synchronized { x0: f64 },
    /// An arbitrary initial grid.
    Free(Init),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WolfOptions {
    pub n_iter: usize,
    pub n_discard: usize,
    pub n_exponents: usize,
    pub reorthonormalize_every: usize,
    pub orbit: WolfOrbit,
}

impl WolfOptions {
    pub fn new(n_iter: usize, n_exponents: usize) -> Self {
        Self {
            n_iter,
            n_discard: 1_000,
            n_exponents,
            reorthonormalize_every: DEFAULT_REORTHONORMALIZE_EVERY,
            orbit: WolfOrbit::Synchronized { x0: 0.3 },
        }
    }
}

/// Numeric estimate of the top `n_exponents` Lyapunov exponents, descending.
///
/// Tangent vectors evolve under `J_n = K diag(F'(x_n))` and are re-orthonormalized
/// by QR every `reorthonormalize_every` steps; the exponents are the time averages
/// of `ln |R_ii|`.
pub fn wolf_le(config: &LatticeConfig, options: &WolfOptions) -> Result<Vec<f64>> {
    config.validate()?;
    let n = config.nodes();
    let k = options.n_exponents;
    if k == 0 || k > n {
        return Err(invalid(format!("n_exponents = {k} not in [1, {n}]")));
    }
    if options.n_iter < MIN_WOLF_ITERATIONS {
        return Err(invalid(format!(
            "Wolf estimate needs at least {MIN_WOLF_ITERATIONS} iterations, got {}",
            options.n_iter
        )));
    }
    if options.reorthonormalize_every == 0 {
        return Err(invalid("re-orthonormalization period must be positive"));
    }
    let init = match &options.orbit {
        WolfOrbit::Synchronized { x0 } => Init::Values(vec![*x0; n]),
        WolfOrbit::Free(init) => init.clone(),
    };
    let mut lattice = Lattice::new(*config, init)?;
    lattice.advance(options.n_discard);

    let map = config.map;
    let stencil = Stencil::new(config.rows, config.cols);
    let (own, side) = (1.0 - config.epsilon, config.epsilon / 4.0);

    // Column-major n x k tangent basis.
    let mut basis = vec![0.0; n * k];
    for j in 0..k {
        basis[j * n + j] = 1.0;
    }
    let mut scaled = vec![0.0; n];
    let mut slopes = vec![0.0; n];
    let mut log_growth = vec![0.0; k];
    let mut previous = lattice.state().values();
    let mut stalled = 0usize;

    for step in 1..=options.n_iter {
        let state = lattice.state();
        for (i, slope) in slopes.iter_mut().enumerate() {
            *slope = map.tangent_slope(state.value_at(i));
        }
        for column in basis.chunks_exact_mut(n) {
            for ((s, &c), &d) in scaled.iter_mut().zip(column.iter()).zip(&slopes) {
                *s = d * c;
            }
            stencil.for_each(|i, up, down, left, right| {
                column[i] = own * scaled[i] + side * (scaled[up] + scaled[down] + scaled[left] + scaled[right]);
            });
        }
        lattice.step();

        let values = lattice.state().values();
        let moved = values
            .iter()
            .zip(&previous)
            .any(|(a, b)| (a - b).abs() >= 1e-12);
        stalled = if moved { 0 } else { stalled + 1 };
        if stalled >= 100 && slopes.iter().all(|d| d.abs() < 1.0) {
            return Err(Error::DegenerateOrbit(format!(
                "lattice orbit settled on a fixed point after {step} steps"
            )));
        }
        previous = values;

        if step % options.reorthonormalize_every == 0 || step == options.n_iter {
            let qr = DMatrix::from_column_slice(n, k, &basis).qr();
            let r = qr.r();
            for (j, acc) in log_growth.iter_mut().enumerate() {
                *acc += r[(j, j)].abs().ln();
            }
            basis.copy_from_slice(qr.q().as_slice());
        }
    }

    let mut exponents: Vec<f64> = log_growth
        .iter()
        .map(|g| g / options.n_iter as f64)
        .collect();
    if exponents.iter().any(|e| !e.is_finite()) {
        return Err(Error::DegenerateOrbit(
            "tangent growth collapsed to zero (critical point hit)".into(),
        ));
    }
    exponents.sort_by(|a, b| b.total_cmp(a));
    Ok(exponents)
}

/// CSV with header `rank,le_numeric`, rank starting at 1.
pub fn wolf_csv(exponents: &[f64]) -> String {
    let mut out = String::from("rank,le_numeric\n");
    for (rank, le) in exponents.iter().enumerate() {
        let _ = writeln!(out, "{},{}", rank + 1, le);
    }
    out
}

/// Largest absolute difference between the top `numeric.len()` analytic exponents and
/// the numeric ones, both in descending order.
pub fn max_deviation(spectrum: &LeSpectrum, numeric: &[f64]) -> f64 {
    spectrum
        .entries
        .iter()
        .zip(numeric)
        .map(|(e, x)| (e.le - x).abs())
        .fold(0.0, f64::max)
}
