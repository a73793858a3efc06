//! Pseudo-random bit generation from the two-dimensional coupled map lattice.
//!
//! The lattice runs in a regime whose whole Lyapunov spectrum is known in closed
//! form ([`lyapunov`]). Bits are extracted from two lattice instances by XOR-ing one
//! tap value's bits with the other's in reversed order ([`extractor`]), and the
//! [`stats`] module checks the output with a subset of the NIST SP 800-22 tests.

pub mod error;
pub mod extractor;
pub mod fixed;
pub mod lattice;
pub mod local_maps;
pub mod lyapunov;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use extractor::{
    extract_stream, mod_add, xor_combine, BitStream, ExtractionSettings, Extractor, Instance,
    InstancePair, TapMode,
};
pub use fixed::{bits_of, quantize, FixedPointValue};
pub use lattice::{new_lattice, step, Arithmetic, Init, Lattice, LatticeConfig, LatticeState, Node};
pub use local_maps::{LocalMap, MapKind};
pub use lyapunov::{coupling_matrix, eigenvalues, le_spectrum, wolf_le, LeSpectrum, WolfOptions, WolfOrbit};
pub use stats::{battery, bit_bias, two_level_evaluate, TestReport, TwoLevelReport};
