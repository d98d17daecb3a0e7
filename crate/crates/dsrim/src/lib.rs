//! DSRIM: a deep semantic resource inference model for document ranking.
//!
//! The crate combines three ingredients:
//!
//! * distributed text representations learned with a minimal PV-DBOW
//!   implementation ([`embeddings`]),
//! * a relational representation that projects the objects annotated in a
//!   text onto a clustered referential of knowledge-resource objects
//!   ([`kgraph`], [`kmeans`], [`relmap`]),
//! * a siamese feed-forward network trained with a hinge objective to score
//!   query--document pairs ([`net`], [`retrieval`]).
//!
//! [`corpus`] handles documents, queries, annotations, relevance judgments
//! and training-instance construction; [`analysis`] implements the
//! representation-level experiments; [`synth`] generates a self-contained
//! synthetic evaluation fixture.

pub mod analysis;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod kgraph;
pub mod kmeans;
pub mod net;
pub mod relmap;
pub mod retrieval;
pub mod synth;
pub mod tokenize;
pub mod vecmath;

pub use error::{Error, Result};
