//! Hidden-variable models for composite quantum systems: local, generalized
//! local and global noncontextual models, decided by linear programming.

pub mod constructions;
pub mod hvlp;
pub mod optimize;
pub mod polytope;
pub mod qmath;
pub mod report;
pub mod scenario;
