pub(crate) mod coupling;
pub mod cli;
pub mod coherence;
pub mod error;
pub mod io;
pub mod linalg;
pub mod random;
pub mod sdp;
pub mod speedlimit;
pub mod transport;
pub mod verify;

pub use error::{QotError, Result};
