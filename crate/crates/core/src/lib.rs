//! Attribute-authenticated continuous group key agreement.
//!
//! Layers, bottom up:
//!
//! * [`primitives`]: hash, kdf, signatures, sealing
//! * [`wire`]: canonical binary encoding
//! * [`abc`]: attribute-based credentials with selective disclosure
//! * [`cgka`]: propose-and-commit group key agreement with external joins
//! * [`aacgka`]: requirement-gated membership on top of the two above

pub mod aacgka;
pub mod abc;
pub mod cgka;
pub mod primitives;
pub mod wire;

#[cfg(test)]
mod test_oracle;
