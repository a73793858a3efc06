//! Bit extraction from a pair of lattice instances.
//!
//! Each step pair yields one `z`-bit word: the tap value of instance A XOR-ed with the
//! bit-reversed tap value of instance B, so bit `w_i` combines A's `i`-th and B's
//! `(z + 1 - i)`-th fractional bits. For independent inputs, the bias of an XOR is
//! the product of the input biases. Every output bit therefore pairs a coarse,
//! strongly biased bit with a fine, nearly unbiased one. Emission starts once a
//! Pearson/Fisher test accepts the two instances' tap orbits as uncorrelated.

use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};
use crate::lattice::{Init, Lattice, LatticeConfig, Node};
use crate::lyapunov::le_spectrum;
use crate::special::normal_quantile;

pub const DEFAULT_WINDOW: usize = 1_000;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_Z: u32 = 64;
pub const DEFAULT_MAX_WINDOWS: usize = 16;

/// `w_i = x_i XOR y_(z+1-i)` on explicit bit sequences (`w_1` first).
pub fn mod_add(x: &[u8], y: &[u8]) -> Result<Vec<u8>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    Ok(x.iter().zip(y.iter().rev()).map(|(a, b)| (a ^ b) & 1).collect())
}

/// [`mod_add`] on `z`-bit words whose most significant bit is `w_1`.
#[inline]
pub fn mod_add_word(x: u64, y: u64, z: u32) -> u64 {
    debug_assert!((1..=64).contains(&z));
    x ^ (y.reverse_bits() >> (64 - z))
}

/// Parity of independent bits.
pub fn xor_combine(bits: &[u8]) -> Result<u8> {
    if bits.is_empty() {
        return Err(Error::InsufficientData("xor_combine needs at least one bit".into()));
    }
    Ok(bits.iter().fold(0, |acc, b| acc ^ (b & 1)))
}

/// Bias `|P(0) - P(1)|` of the parity of independent bits with the given biases.
pub fn combined_bias(biases: &[f64]) -> f64 {
    biases.iter().product::<f64>().abs()
}

/// Pearson correlation coefficient of two equal-length series (at least 4 points).
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "correlation needs at least 4 samples, got {}",
            xs.len()
        )));
    }
    let k = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / k;
    let mean_y = ys.iter().sum::<f64>() / k;
    // Centered sums: algebraically the same as sum(xy) - K mean_x mean_y, without the cancellation.
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mean_x, y - mean_y);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("first series"));
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance("second series"));
    }
    // sqrt(fl(s^2)) == s, so identical series give exactly 1.
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Outcome of an independence test on one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndependenceOutcome {
    pub statistic: f64,
    pub pass: bool,
}

/// Fisher's z statistic `D = sqrt(K - 3)/2 ln((1 + k)/(1 - k))`, accepted when it lies in
/// `(Phi^-1(alpha/2), -Phi^-1(alpha/2))`. `|k| = 1` gives an infinite `D` and a failure.
pub fn fisher_test(k_xy: f64, window: usize, alpha: f64) -> Result<IndependenceOutcome> {
    if window < 4 {
        return Err(Error::InsufficientData(format!(
            "Fisher test needs K >= 4, got {window}"
        )));
    }
    check_alpha(alpha)?;
    if !(-1.0..=1.0).contains(&k_xy) {
        return Err(invalid(format!("correlation {k_xy} outside [-1, 1]")));
    }
    let statistic = if k_xy.abs() == 1.0 {
        k_xy * f64::INFINITY
    } else {
        ((window - 3) as f64).sqrt() / 2.0 * ((1.0 + k_xy) / (1.0 - k_xy)).ln()
    };
    let bound = -normal_quantile(alpha / 2.0);
    Ok(IndependenceOutcome {
        statistic,
        pass: statistic > -bound && statistic < bound,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("significance level {alpha} not in (0, 1)")))
    }
}

/// Pass/fail independence check on two equal-length windows.
pub trait IndependenceTest: Send + Sync {
    fn name(&self) -> &str;
    fn check(&self, xs: &[f64], ys: &[f64]) -> IndependenceOutcome;
}

/// Pearson correlation followed by Fisher's transformation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PearsonFisher {
    pub alpha: f64,
}

impl IndependenceTest for PearsonFisher {
    fn name(&self) -> &str {
        "pearson-fisher"
    }

    fn check(&self, xs: &[f64], ys: &[f64]) -> IndependenceOutcome {
        match pearson(xs, ys).and_then(|k| fisher_test(k, xs.len(), self.alpha)) {
            Ok(outcome) => outcome,
            // A constant window cannot be shown independent.
            Err(_) => IndependenceOutcome {
                statistic: f64::NAN,
                pass: false,
            },
        }
    }
}

/// Which node values feed the extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TapMode {
    /// One node per instance.
    Nodes { a: Node, b: Node },
    /// Every node, paired by position, `R L` words per step pair. Not covered by the
    /// per-sample bias argument because neighboring nodes are correlated.
    RoundRobin,
}

impl Default for TapMode {
    fn default() -> Self {
        TapMode::Nodes {
            a: Node::FIRST,
            b: Node::FIRST,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionSettings {
    /// Bits taken from each tap value.
    pub z: u32,
    /// Independence window length `K`.
    pub window: usize,
    pub alpha: f64,
    /// Windows tried before giving up.
    pub max_windows: usize,
    pub tap: TapMode,
    /// Re-run the independence gate after this many emitting step pairs.
    pub retest_every: Option<u64>,
}

impl Default for ExtractionSettings {
    fn default() -> Self {
        Self {
            z: DEFAULT_Z,
            window: DEFAULT_WINDOW,
            alpha: DEFAULT_ALPHA,
            max_windows: DEFAULT_MAX_WINDOWS,
            tap: TapMode::default(),
            retest_every: None,
        }
    }
}

/// One lattice instance: configuration plus initial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub config: LatticeConfig,
    pub init: Init,
}

impl Instance {
    pub fn new(config: LatticeConfig, init: Init) -> Self {
        Self { config, init }
    }
}

const CHAOS_CHECK_ITERATIONS: usize = 100_000;

/// Two lattice instances and the extraction settings.
#[derive(Debug, Clone, PartialEq)]
pub struct InstancePair {
    a: Instance,
    b: Instance,
    settings: ExtractionSettings,
    le_f: (f64, f64),
}

impl InstancePair {
    /// Validates both instances and requires a strictly positive maximum Lyapunov
    /// exponent for each.
    pub fn new(a: Instance, b: Instance, settings: ExtractionSettings) -> Result<Self> {
        a.config.validate()?;
        b.config.validate()?;
        crate::fixed::check_bits(settings.z)?;
        check_alpha(settings.alpha)?;
        if settings.window < 4 {
            return Err(invalid(format!("window K = {} must be at least 4", settings.window)));
        }
        if settings.max_windows == 0 {
            return Err(invalid("at least one independence window is required"));
        }
        if settings.retest_every == Some(0) {
            return Err(invalid("re-test interval must be positive"));
        }
        for (label, instance) in [("A", &a), ("B", &b)] {
            let precision = instance.config.arithmetic.precision_bits();
            if settings.z > precision {
                return Err(invalid(format!(
                    "z = {} exceeds instance {label}'s {precision}-bit arithmetic",
                    settings.z
                )));
            }
        }
        match settings.tap {
            TapMode::Nodes { a: node_a, b: node_b } => {
                a.config.check_node(node_a)?;
                b.config.check_node(node_b)?;
            }
            TapMode::RoundRobin => {
                if (a.config.rows, a.config.cols) != (b.config.rows, b.config.cols) {
                    return Err(invalid("round-robin tapping needs equally shaped lattices"));
                }
            }
        }
        let le_f = (max_exponent(&a.config)?, max_exponent(&b.config)?);
        Ok(Self { a, b, settings, le_f })
    }

    pub fn a(&self) -> &Instance {
        &self.a
    }

    pub fn b(&self) -> &Instance {
        &self.b
    }

    pub fn settings(&self) -> &ExtractionSettings {
        &self.settings
    }

    /// Maximum Lyapunov exponents of the two instances.
    pub fn max_exponents(&self) -> (f64, f64) {
        self.le_f
    }
}

fn max_exponent(config: &LatticeConfig) -> Result<f64> {
    let le_f = config
        .map
        .local_le(0.3, CHAOS_CHECK_ITERATIONS, crate::local_maps::DEFAULT_LE_DISCARD)?;
    let max = le_spectrum(le_f, config.epsilon, config.rows, config.cols)?.max_le();
    if max > 0.0 {
        Ok(max)
    } else {
        Err(invalid(format!(
            "{} lattice is not chaotic: maximum Lyapunov exponent {max:.4} <= 0",
            config.map.kind()
        )))
    }
}

/// Stateful generator running the extraction algorithm.
#[derive(Debug, Clone)]
pub struct Extractor {
    a: Lattice,
    b: Lattice,
    settings: ExtractionSettings,
    taps: Vec<(usize, usize)>,
    pending: Vec<u64>,
    windows_tried: usize,
    discarded_steps: u64,
    since_test: u64,
    last_statistic: f64,
}

impl Extractor {
    /// Build both lattices and run the independence gate.
    pub fn new(pair: &InstancePair) -> Result<Self> {
        let a = Lattice::new(pair.a.config, pair.a.init.clone())?;
        let b = Lattice::new(pair.b.config, pair.b.init.clone())?;
        let taps = match pair.settings.tap {
            TapMode::Nodes { a: node_a, b: node_b } => {
                vec![(pair.a.config.check_node(node_a)?, pair.b.config.check_node(node_b)?)]
            }
            TapMode::RoundRobin => (0..pair.a.config.nodes()).map(|i| (i, i)).collect(),
        };
        let mut extractor = Self {
            a,
            b,
            settings: pair.settings,
            taps,
            pending: Vec::new(),
            windows_tried: 0,
            discarded_steps: 0,
            since_test: 0,
            last_statistic: f64::NAN,
        };
        extractor.gate()?;
        Ok(extractor)
    }

    /// Collect windows until one passes; each window's steps are discarded.
    fn gate(&mut self) -> Result<()> {
        let test = PearsonFisher {
            alpha: self.settings.alpha,
        };
        let k = self.settings.window;
        let (tap_a, tap_b) = self.taps[0];
        let mut xs = vec![0.0; k];
        let mut ys = vec![0.0; k];
        for _ in 0..self.settings.max_windows {
            for (x, y) in xs.iter_mut().zip(ys.iter_mut()) {
                self.a.step();
                self.b.step();
                *x = self.a.state().value_at(tap_a);
                *y = self.b.state().value_at(tap_b);
            }
            self.windows_tried += 1;
            self.discarded_steps += k as u64;
            let outcome = test.check(&xs, &ys);
            self.last_statistic = outcome.statistic;
            if outcome.pass {
                self.since_test = 0;
                return Ok(());
            }
        }
        Err(Error::RetryExhausted {
            windows: self.settings.max_windows,
            last_statistic: self.last_statistic,
        })
    }

    /// Independence windows run so far, including re-tests.
    pub fn windows_tried(&self) -> usize {
        self.windows_tried
    }

    /// Step pairs consumed by independence windows.
    pub fn discarded_steps(&self) -> u64 {
        self.discarded_steps
    }

    /// Statistic of the most recent independence window.
    pub fn last_statistic(&self) -> f64 {
        self.last_statistic
    }

    pub fn bits_per_word(&self) -> u32 {
        self.settings.z
    }

    /// Next `z`-bit output word, `w_1` in the most significant of the low `z` bits.
    pub fn next_word(&mut self) -> Result<u64> {
        if let Some(word) = self.pending.pop() {
            return Ok(word);
        }
        if let Some(every) = self.settings.retest_every {
            if self.since_test >= every {
                self.gate()?;
            }
        }
        self.a.step();
        self.b.step();
        self.since_test += 1;
        let z = self.settings.z;
        let (a, b) = (self.a.state(), self.b.state());
        if let [(tap_a, tap_b)] = self.taps[..] {
            return Ok(mod_add_word(a.tap_word(tap_a, z), b.tap_word(tap_b, z), z));
        }
        // Stored reversed so pop() yields node order.
        self.pending.extend(
            self.taps
                .iter()
                .rev()
                .map(|&(ia, ib)| mod_add_word(a.tap_word(ia, z), b.tap_word(ib, z), z)),
        );
        Ok(self.pending.pop().expect("at least one tap"))
    }

    /// `n_bits` output bits as 0/1 values.
    pub fn take_bits(&mut self, n_bits: usize) -> Result<Vec<u8>> {
        let z = self.settings.z;
        let mut bits = Vec::with_capacity(n_bits);
        while bits.len() < n_bits {
            let word = self.next_word()?;
            let take = (z as usize).min(n_bits - bits.len());
            bits.extend((0..take).map(|i| ((word >> (z as usize - 1 - i)) & 1) as u8));
        }
        Ok(bits)
    }

    /// `n_bytes` output bytes, bits packed MSB first.
    pub fn take_bytes(&mut self, n_bytes: usize) -> Result<Vec<u8>> {
        let z = self.settings.z;
        let mut out = Vec::with_capacity(n_bytes);
        let mut acc: u128 = 0;
        let mut held = 0u32;
        while out.len() < n_bytes {
            let word = self.next_word()?;
            acc = (acc << z) | word as u128;
            held += z;
            while held >= 8 && out.len() < n_bytes {
                held -= 8;
                out.push((acc >> held) as u8);
            }
            acc &= (1u128 << held) - 1;
        }
        Ok(out)
    }
}

/// Where a bit stream came from; enough to regenerate it.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub a: Instance,
    pub b: Instance,
    pub settings: ExtractionSettings,
    pub windows_tried: usize,
    pub discarded_steps: u64,
    pub last_statistic: f64,
}

impl Provenance {
    /// Plain `key=value` lines.
    pub fn to_sidecar(&self) -> String {
        let mut out = String::new();
        for (label, instance) in [("a", &self.a), ("b", &self.b)] {
            let c = &instance.config;
            let _ = writeln!(out, "{label}.map={}", c.map.kind());
            let _ = writeln!(out, "{label}.mu={}", c.map.mu());
            if let Some(n) = c.map.segments() {
                let _ = writeln!(out, "{label}.segments={n}");
            }
            let _ = writeln!(out, "{label}.rows={}", c.rows);
            let _ = writeln!(out, "{label}.cols={}", c.cols);
            let _ = writeln!(out, "{label}.epsilon={}", c.epsilon);
            let arithmetic = match c.arithmetic {
                crate::Arithmetic::Float64 => "float64".to_string(),
                crate::Arithmetic::Fixed { z } => format!("fixed{z}"),
            };
            let _ = writeln!(out, "{label}.arithmetic={arithmetic}");
            let _ = writeln!(out, "{label}.init={}", instance.init.describe());
        }
        let s = &self.settings;
        let _ = writeln!(out, "seed_expansion=chacha8-top53");
        let _ = writeln!(out, "z={}", s.z);
        let _ = writeln!(out, "k_window={}", s.window);
        let _ = writeln!(out, "alpha={}", s.alpha);
        let _ = writeln!(out, "max_windows={}", s.max_windows);
        let tap = match s.tap {
            TapMode::Nodes { a, b } => format!("a({},{}) b({},{})", a.u, a.v, b.u, b.v),
            TapMode::RoundRobin => "round-robin".to_string(),
        };
        let _ = writeln!(out, "tap={tap}");
        if let Some(every) = s.retest_every {
            let _ = writeln!(out, "retest_every={every}");
        }
        let _ = writeln!(out, "windows_tried={}", self.windows_tried);
        let _ = writeln!(out, "discarded_steps={}", self.discarded_steps);
        let _ = writeln!(out, "last_fisher_statistic={}", self.last_statistic);
        out
    }
}

/// Extracted bits (each 0 or 1) with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct BitStream {
    pub bits: Vec<u8>,
    pub origin: Provenance,
}

impl BitStream {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn to_ascii(&self) -> Vec<u8> {
        to_ascii(&self.bits)
    }

    pub fn to_packed(&self) -> Vec<u8> {
        pack_bits(&self.bits)
    }
}

/// Run the independence gate, then emit `n_bits` bits (the last word is truncated).
pub fn extract_stream(pair: &InstancePair, n_bits: usize) -> Result<BitStream> {
    let mut extractor = Extractor::new(pair)?;
    let bits = extractor.take_bits(n_bits)?;
    Ok(BitStream {
        bits,
        origin: Provenance {
            a: pair.a.clone(),
            b: pair.b.clone(),
            settings: pair.settings,
            windows_tried: extractor.windows_tried(),
            discarded_steps: extractor.discarded_steps(),
            last_statistic: extractor.last_statistic(),
        },
    })
}

/// Pack 0/1 values MSB first; a trailing partial byte is zero-padded.
pub fn pack_bits(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |byte, (i, &b)| byte | ((b & 1) << (7 - i)))
        })
        .collect()
}

/// First `n_bits` bits of MSB-first packed bytes.
pub fn unpack_bits(bytes: &[u8], n_bits: usize) -> Result<Vec<u8>> {
    if n_bits > bytes.len() * 8 {
        return Err(Error::InsufficientData(format!(
            "{} bytes hold fewer than {n_bits} bits",
            bytes.len()
        )));
    }
    Ok((0..n_bits).map(|i| (bytes[i / 8] >> (7 - i % 8)) & 1).collect())
}

/// One ASCII `'0'`/`'1'` per bit, no separators.
pub fn to_ascii(bits: &[u8]) -> Vec<u8> {
    bits.iter().map(|&b| b'0' + (b & 1)).collect()
}

/// Parse the ASCII format. Anything other than `'0'` and `'1'` is rejected.
pub fn from_ascii(text: &[u8]) -> Result<Vec<u8>> {
    text.iter()
        .enumerate()
        .map(|(i, &c)| match c {
            b'0' => Ok(0),
            b'1' => Ok(1),
            other => Err(invalid(format!(
                "byte {i} is {other:#04x}; ASCII bit streams contain only '0' and '1'"
            ))),
        })
        .collect()
}
