//! Randomness tests, two-level evaluation and the orbit analyses behind the dynamics plots.
//!
//! The battery covers four NIST SP 800-22 tests: frequency (monobit), block frequency,
//! runs, and serial with `m = 2`. The serial test contributes two P-values. Other
//! suites can consume the ASCII export from [`crate::extractor`].

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::lattice::{Init, Lattice, LatticeConfig, Node};
use crate::local_maps::MapKind;
use crate::special::{erfc, igamc};

/// Minimum sequence length for the battery tests.
pub const MIN_TEST_BITS: usize = 100;
/// Block length used by [`battery`] for the block frequency test.
pub const DEFAULT_BLOCK_LEN: usize = 128;
pub const DEFAULT_ALPHA: f64 = 0.01;
/// `P-value_T` below this marks a set of P-values as non-uniform.
pub const UNIFORMITY_CUTOFF: f64 = 1e-4;
pub const UNIFORMITY_BINS: usize = 10;
pub const MIN_UNIFORMITY_SAMPLES: usize = 50;

/// `|#zeros - #ones| / length`.
pub fn bit_bias(bits: &[u8]) -> Result<f64> {
    if bits.is_empty() {
        return Err(Error::InsufficientData("bias of an empty stream".into()));
    }
    let ones = count_ones(bits) as f64;
    let n = bits.len() as f64;
    Ok((n - 2.0 * ones).abs() / n)
}

/// Bias of each bit position over a set of `z`-bit words, `w_1` (most significant) first.
pub fn positional_bias(words: &[u64], z: u32) -> Result<Vec<f64>> {
    crate::fixed::check_bits(z)?;
    if words.is_empty() {
        return Err(Error::InsufficientData("positional bias needs at least one word".into()));
    }
    let n = words.len() as f64;
    Ok((0..z)
        .map(|i| {
            let shift = z - 1 - i;
            let ones = words.iter().filter(|&&w| (w >> shift) & 1 == 1).count() as f64;
            (n - 2.0 * ones).abs() / n
        })
        .collect())
}

fn count_ones(bits: &[u8]) -> usize {
    bits.iter().filter(|&&b| b & 1 == 1).count()
}

/// One test result. `pass` holds exactly when `p_value >= alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub pass: bool,
}

impl TestReport {
    pub fn new(name: impl Into<String>, statistic: f64, p_value: f64, alpha: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            name: name.into(),
            statistic,
            p_value,
            alpha,
            pass: p_value >= alpha,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("significance level {alpha} not in (0, 1)")))
    }
}

fn check_length(bits: &[u8], test: &str) -> Result<()> {
    if bits.len() < MIN_TEST_BITS {
        Err(Error::InsufficientData(format!(
            "{test} test needs at least {MIN_TEST_BITS} bits, got {}",
            bits.len()
        )))
    } else {
        Ok(())
    }
}

fn monobit(bits: &[u8]) -> (f64, f64) {
    let n = bits.len() as f64;
    let sum = 2.0 * count_ones(bits) as f64 - n;
    let s_obs = sum.abs() / n.sqrt();
    (s_obs, erfc(s_obs / std::f64::consts::SQRT_2))
}

fn block_frequency(bits: &[u8], block_len: usize) -> (f64, f64) {
    let blocks = bits.len() / block_len;
    let m = block_len as f64;
    let chi2 = 4.0
        * m
        * bits
            .chunks_exact(block_len)
            .map(|block| {
                let d = count_ones(block) as f64 / m - 0.5;
                d * d
            })
            .sum::<f64>();
    (chi2, igamc(blocks as f64 / 2.0, chi2 / 2.0))
}

fn runs(bits: &[u8]) -> (f64, f64) {
    let n = bits.len() as f64;
    let pi = count_ones(bits) as f64 / n;
    // Frequency prerequisite: a badly unbalanced sequence fails outright.
    if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
        return (f64::NAN, 0.0);
    }
    let v = 1 + bits.windows(2).filter(|w| w[0] & 1 != w[1] & 1).count();
    let v = v as f64;
    let spread = pi * (1.0 - pi);
    let p = erfc((v - 2.0 * n * spread).abs() / (2.0 * (2.0 * n).sqrt() * spread));
    (v, p)
}

/// `psi^2_m` with the sequence extended circularly by `m - 1` bits.
fn psi_squared(bits: &[u8], m: u32) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let n = bits.len();
    let mask = (1usize << m) - 1;
    let mut counts = vec![0u64; 1 << m];
    let mut pattern = 0usize;
    for &b in bits.iter().take(m as usize - 1) {
        pattern = (pattern << 1) | (b & 1) as usize;
    }
    for i in 0..n {
        let b = bits[(i + m as usize - 1) % n];
        pattern = ((pattern << 1) | (b & 1) as usize) & mask;
        counts[pattern] += 1;
    }
    let sum_sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    sum_sq * (1u64 << m) as f64 / n as f64 - n as f64
}

fn serial(bits: &[u8], m: u32) -> [(f64, f64); 2] {
    let psi_m = psi_squared(bits, m);
    let psi_m1 = psi_squared(bits, m - 1);
    let psi_m2 = psi_squared(bits, m.saturating_sub(2));
    let del1 = psi_m - psi_m1;
    let del2 = psi_m - 2.0 * psi_m1 + psi_m2;
    [
        (del1, igamc(2f64.powi(m as i32 - 2), del1 / 2.0)),
        (del2, igamc(2f64.powi(m as i32 - 3), del2 / 2.0)),
    ]
}

/// Frequency (monobit) test.
pub fn monobit_test(bits: &[u8], alpha: f64) -> Result<TestReport> {
    check_length(bits, "frequency")?;
    check_alpha(alpha)?;
    let (s_obs, p) = monobit(bits);
    Ok(TestReport::new("frequency", s_obs, p, alpha))
}

/// Frequency test within blocks of `block_len` bits; trailing bits are ignored.
pub fn block_frequency_test(bits: &[u8], block_len: usize, alpha: f64) -> Result<TestReport> {
    check_length(bits, "block frequency")?;
    check_alpha(alpha)?;
    if block_len < 2 {
        return Err(invalid(format!("block length {block_len} must be at least 2")));
    }
    if bits.len() < block_len {
        return Err(Error::InsufficientData(format!(
            "{} bits do not fill one block of {block_len}",
            bits.len()
        )));
    }
    let (chi2, p) = block_frequency(bits, block_len);
    Ok(TestReport::new("block_frequency", chi2, p, alpha))
}

/// Runs test. Sequences failing the frequency prerequisite get `P = 0`.
pub fn runs_test(bits: &[u8], alpha: f64) -> Result<TestReport> {
    check_length(bits, "runs")?;
    check_alpha(alpha)?;
    let (v, p) = runs(bits);
    Ok(TestReport::new("runs", v, p, alpha))
}

/// Serial test with pattern length `m`. Returns the `del psi^2` and `del^2 psi^2` reports.
pub fn serial_test(bits: &[u8], m: u32, alpha: f64) -> Result<[TestReport; 2]> {
    check_length(bits, "serial")?;
    check_alpha(alpha)?;
    if m < 2 || (1usize << m.min(40)) > bits.len() {
        return Err(invalid(format!(
            "pattern length {m} unusable for {} bits",
            bits.len()
        )));
    }
    let [(d1, p1), (d2, p2)] = serial(bits, m);
    Ok([
        TestReport::new("serial_1", d1, p1, alpha),
        TestReport::new("serial_2", d2, p2, alpha),
    ])
}

/// Serial test with `m = 2`.
pub fn serial2_test(bits: &[u8], alpha: f64) -> Result<[TestReport; 2]> {
    serial_test(bits, 2, alpha)
}

/// Sub-test names in the order [`battery`] reports them.
pub const BATTERY_TESTS: [&str; 5] = ["frequency", "block_frequency", "runs", "serial_1", "serial_2"];

/// All battery tests on one sequence, block frequency using `block_len`.
pub fn battery_with(bits: &[u8], block_len: usize, alpha: f64) -> Result<Vec<TestReport>> {
    let [s1, s2] = serial2_test(bits, alpha)?;
    Ok(vec![
        monobit_test(bits, alpha)?,
        block_frequency_test(bits, block_len, alpha)?,
        runs_test(bits, alpha)?,
        s1,
        s2,
    ])
}

/// All battery tests on one sequence.
pub fn battery(bits: &[u8], alpha: f64) -> Result<Vec<TestReport>> {
    battery_with(bits, DEFAULT_BLOCK_LEN, alpha)
}

/// CSV with header `test,statistic,p_value,pass`.
pub fn reports_csv(reports: &[TestReport]) -> String {
    let mut out = String::from("test,statistic,p_value,pass\n");
    for r in reports {
        let _ = writeln!(out, "{},{},{},{}", r.name, r.statistic, r.p_value, r.pass);
    }
    out
}

/// Chi-square goodness of fit of P-values against the uniform distribution, 10 bins over
/// `[0, 1]` (the last bin closed). Returns `P-value_T`.
pub fn chi_square_uniformity(p_values: &[f64]) -> Result<f64> {
    if p_values.len() < MIN_UNIFORMITY_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "uniformity test needs at least {MIN_UNIFORMITY_SAMPLES} P-values, got {}",
            p_values.len()
        )));
    }
    let counts = orbit_histogram(p_values, UNIFORMITY_BINS)?;
    let expected = p_values.len() as f64 / UNIFORMITY_BINS as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    Ok(igamc((UNIFORMITY_BINS - 1) as f64 / 2.0, chi2 / 2.0))
}

/// Lowest acceptable pass rate: `p - 3 sqrt(p (1 - p) / n)` with `p = 1 - alpha`.
pub fn pass_rate_threshold(alpha: f64, n_sequences: usize) -> f64 {
    let p = 1.0 - alpha;
    p - 3.0 * (p * (1.0 - p) / n_sequences as f64).sqrt()
}

/// Second-level result for one sub-test over many sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLevelReport {
    pub name: String,
    pub per_sequence: Vec<TestReport>,
    pub pass_rate: f64,
    pub pass_rate_threshold: f64,
    pub p_value_t: f64,
    pub uniform: bool,
}

impl TwoLevelReport {
    /// Pass rate at or above the threshold and P-values uniform.
    pub fn pass(&self) -> bool {
        self.pass_rate >= self.pass_rate_threshold && self.uniform
    }

    /// Median per-sequence P-value, shown as the representative value.
    pub fn representative_p_value(&self) -> f64 {
        let mut ps: Vec<f64> = self.per_sequence.iter().map(|r| r.p_value).collect();
        ps.sort_by(f64::total_cmp);
        ps[ps.len() / 2]
    }
}

/// Pass-rate and uniformity check over one sub-test's per-sequence reports.
pub fn two_level_evaluate(reports: &[TestReport], alpha: f64) -> Result<TwoLevelReport> {
    check_alpha(alpha)?;
    let n = reports.len();
    if (n as f64) < (1.0 / alpha).round() || n < MIN_UNIFORMITY_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "two-level evaluation at alpha = {alpha} needs at least {} sequences, got {n}",
            ((1.0 / alpha).round() as usize).max(MIN_UNIFORMITY_SAMPLES)
        )));
    }
    let name = reports[0].name.clone();
    if let Some(other) = reports.iter().find(|r| r.name != name) {
        return Err(invalid(format!(
            "mixed sub-tests '{name}' and '{}' in one evaluation",
            other.name
        )));
    }
    let passes = reports.iter().filter(|r| r.p_value >= alpha).count();
    let p_values: Vec<f64> = reports.iter().map(|r| r.p_value).collect();
    let p_value_t = chi_square_uniformity(&p_values)?;
    Ok(TwoLevelReport {
        name,
        per_sequence: reports.to_vec(),
        pass_rate: passes as f64 / n as f64,
        pass_rate_threshold: pass_rate_threshold(alpha, n),
        p_value_t,
        uniform: p_value_t >= UNIFORMITY_CUTOFF,
    })
}

/// Run the battery on every sequence (in parallel) and evaluate each sub-test.
pub fn evaluate_sequences(
    sequences: &[Vec<u8>],
    block_len: usize,
    alpha: f64,
) -> Result<Vec<TwoLevelReport>> {
    let per_sequence: Vec<Vec<TestReport>> = sequences
        .par_iter()
        .map(|bits| battery_with(bits, block_len, alpha))
        .collect::<Result<_>>()?;
    (0..BATTERY_TESTS.len())
        .map(|t| {
            let column: Vec<TestReport> = per_sequence.iter().map(|r| r[t].clone()).collect();
            two_level_evaluate(&column, alpha)
        })
        .collect()
}

/// CSV with header `sub_test,p_value,pass_rate,p_value_t,pass`.
pub fn two_level_csv(reports: &[TwoLevelReport]) -> String {
    let mut out = String::from("sub_test,p_value,pass_rate,p_value_t,pass\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{:.6},{:.5},{:.6},{}",
            r.name,
            r.representative_p_value(),
            r.pass_rate,
            r.p_value_t,
            r.pass()
        );
    }
    out
}

/// One point of a bifurcation diagram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BifurcationPoint {
    pub mu: f64,
    pub value: f64,
}

/// Orbit points of `node` for `mu_steps` evenly spaced values in `[lo, hi]`.
/// Each value runs a fresh lattice built from `template` with only `mu` replaced.
#[allow(clippy::too_many_arguments)]
pub fn bifurcation_scan(
    kind: MapKind,
    mu_range: (f64, f64),
    mu_steps: usize,
    template: &LatticeConfig,
    init: &Init,
    node: Node,
    points_per_mu: usize,
    discard: usize,
) -> Result<Vec<BifurcationPoint>> {
    let (lo, hi) = mu_range;
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(invalid(format!("bad parameter range [{lo}, {hi}]")));
    }
    if mu_steps == 0 || points_per_mu == 0 {
        return Err(invalid("need at least one parameter step and one point"));
    }
    if template.map.kind() != kind {
        return Err(invalid(format!(
            "template map is {}, scan asks for {kind}",
            template.map.kind()
        )));
    }
    template.check_node(node)?;
    let mus: Vec<f64> = (0..mu_steps)
        .map(|i| {
            if mu_steps == 1 {
                lo
            } else {
                lo + (hi - lo) * i as f64 / (mu_steps - 1) as f64
            }
        })
        .collect();
    let configs: Vec<LatticeConfig> = mus
        .iter()
        .map(|&mu| {
            Ok(LatticeConfig {
                map: template.map.with_mu(mu)?,
                ..*template
            })
        })
        .collect::<Result<_>>()?;
    let slices: Vec<Vec<BifurcationPoint>> = configs
        .par_iter()
        .map(|config| {
            let mut lattice = Lattice::new(*config, init.clone())?;
            let mu = config.map.mu();
            Ok(lattice
                .orbit(node, points_per_mu, discard)?
                .into_iter()
                .map(|value| BifurcationPoint { mu, value })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(slices.concat())
}

/// CSV with header `mu,value`.
pub fn bifurcation_csv(points: &[BifurcationPoint]) -> String {
    let mut out = String::from("mu,value\n");
    for p in points {
        let _ = writeln!(out, "{},{}", p.mu, p.value);
    }
    out
}

/// Counts in `bins` equal-width bins over `[0, 1]`; bins are half-open except the last.
pub fn orbit_histogram(orbit: &[f64], bins: usize) -> Result<Vec<u64>> {
    if bins < 2 {
        return Err(invalid(format!("histogram needs at least 2 bins, got {bins}")));
    }
    if orbit.is_empty() {
        return Err(Error::InsufficientData("histogram of an empty orbit".into()));
    }
    let mut counts = vec![0u64; bins];
    for &x in orbit {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("orbit value {x} outside [0, 1]")));
        }
        let bin = ((x * bins as f64) as usize).min(bins - 1);
        counts[bin] += 1;
    }
    Ok(counts)
}

/// CSV with header `bin_lo,bin_hi,count`.
pub fn histogram_csv(counts: &[u64]) -> String {
    let bins = counts.len() as f64;
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (i, c) in counts.iter().enumerate() {
        let _ = writeln!(out, "{},{},{c}", i as f64 / bins, (i + 1) as f64 / bins);
    }
    out
}
