//! Reference computations that share no code with the library under test,
//! plus seeded generators of random test instances.
//!
//! The `reference` functions work on plain matrices: explicit RK4
//! integration, step-by-step output simulation, brute-force active-set
//! enumeration and direct KKT solves.

pub mod instances;
pub mod reference;
