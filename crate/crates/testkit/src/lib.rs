//! Random instance generators and brute-force reference implementations
//! used by the property and acceptance suites.

pub mod gen;
pub mod oracle;

pub use proptest;
