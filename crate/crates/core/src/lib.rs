pub mod cli;
pub mod ddqnfit;
pub mod loadmodels;
pub mod netcase;
pub mod tdsim;
pub mod translim;
