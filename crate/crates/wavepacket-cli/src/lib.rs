//! Library surface of the scenario runner, shared by the binary and the
//! integration tests.

pub mod describe;
pub mod runner;
pub mod scenario;
