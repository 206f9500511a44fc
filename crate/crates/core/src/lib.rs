//! Engine for infomorph workflows: typed DAGs of document transformations
//! with selective recomputation, content-addressed caching and approval
//! freezing. Every generative call goes through [`provider::Provider`].

pub mod content;
pub mod embedding;
pub mod graph;
pub mod hash;
pub mod ingest;
mod limit;
pub mod morph;
pub mod provider;
pub mod store;
