pub mod qcyc;
pub mod lattice;
pub mod ising_enum;
pub mod spinor_obs;
pub mod shol_solve;
pub mod continuum;
pub mod harness;
