//! Estimation of shared-truth measurement models for collocated current
//! velocity datasets: robust trimming, moment accumulation, a
//! strong/weak-constraint solver with diagnostics, reference regression
//! baselines, a forward simulator, and subset sweep machinery.

pub mod cohort;
pub mod model;
pub mod moments;
pub mod record;
pub mod reference;
pub mod report;
pub mod robust;
pub mod simulator;
pub mod tag;
