//! Physical constants used across the crate.

/// Bohr magneton over Planck's constant, in MHz per tesla.
///
/// A Zeeman slope given as a Landé g-factor converts to MHz/T by
/// multiplying with this value.
pub const MU_B_OVER_H_MHZ_PER_T: f64 = 13_996.2449;
