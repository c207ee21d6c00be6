pub mod basis;
pub mod adp;
pub mod bellman;
pub mod error;
pub mod geometry;
pub mod kernel;
pub mod lp;
pub mod oracle;
pub mod policy;
pub mod problem;
pub mod rng;
pub mod scenario;
