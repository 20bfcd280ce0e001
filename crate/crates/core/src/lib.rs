//! Decoding workbench for CSS quantum LDPC codes.
//!
//! Everything here works over GF(2) in the binary symplectic picture: codes
//! are pairs `(Hx, Hz)`, errors are `2n`-bit strings `(x | z)`, and decoders
//! map syndromes back to error estimates. The crate is `no_std` with `alloc`;
//! file formats, threading and the command-line front end live in the
//! companion `qldpc` crate.

#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod bp;
pub mod channel;
pub mod codes;
pub mod eval;
pub mod gf2;
pub mod gnn;
pub mod nbp;
pub mod nn;
pub mod osd;
pub mod tanner;

pub use channel::{ChannelParams, Dataset, ErrorVector, Syndrome};
pub use codes::{ClassicalCode, CssCode};
pub use gf2::{BinMatrix, BinVector};
pub use tanner::TannerGraph;
