pub mod error;
pub mod numeric;
pub mod prior;
pub mod rng;
pub mod schedules;
pub mod observation;
pub mod oracle;
pub mod reconstruct;
pub mod smc;
pub mod metrics;
pub mod harness;
