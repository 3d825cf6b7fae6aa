//! Multi-view joint learning between a relation-typed code ontology and free
//! text.
//!
//! The crate is `no_std` (with `alloc`) and holds every numerical piece of the
//! pipeline: the ontology graph with jump connections, a relational graph
//! encoder, a two-stage bidirectional LSTM text encoder, the deep CCA
//! objective and its gradient, the 1-0 seen/unseen labeling scheme, a
//! synthetic admission generator and the two-phase training harness. File
//! formats and the command line live in the `codetext` companion crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod dcca;
pub mod encoders;
mod error;
pub mod harness;
pub mod numeric;
pub mod ontology;
pub mod unseen;

pub use error::{Error, Result};
pub use numeric::{Matrix, Rng};
pub use ontology::OntologyGraph;
