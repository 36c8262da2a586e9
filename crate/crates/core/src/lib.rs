//! Post-quantum secured federated learning at desk scale.
//!
//! The crate covers lattice key encapsulation ([`kem`]) and signatures
//! ([`sig`]) over [`ring`], a logistic-regression federated engine ([`fl`]),
//! robust and signature-gated aggregation ([`agg`]), differential privacy
//! ([`dp`]), the adversaries that attack all of it ([`adversary`]), and a
//! deterministic round simulator ([`sim`]) with reporting ([`report`]).

pub mod error;
pub mod exec;
pub mod hash;
pub mod ring;
pub mod bits;
pub mod kem;
pub mod sig;
pub mod fl;
pub mod agg;
pub mod dp;
pub mod adversary;
pub mod sim;
pub mod report;

pub use error::{Error, Result};
pub use exec::Exec;
