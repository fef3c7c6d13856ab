//! Functional-performance-model partitioning for heterogeneous processors.
//!
//! Speeds of heterogeneous processors depend on problem size: cache effects
//! speed small tasks up, paging slows large ones down. This crate balances
//! `n` equal computation units over such processors without knowing their
//! speed functions in advance. It measures execution times, builds partial
//! piecewise-linear speed estimates, and repartitions until all processors
//! finish within a relative accuracy `epsilon` of each other.
//!
//! ```
//! use fpm_balance::{dfpa, DfpaConfig, SimCluster, Status, SyntheticProfile};
//!
//! let mut cluster = SimCluster::new(vec![SyntheticProfile::flat(2.0), SyntheticProfile::flat(1.0)])?;
//! let trace = dfpa(&mut cluster, 30, &DfpaConfig::with_epsilon(0.05))?;
//! assert_eq!(trace.status, Status::Converged);
//! assert_eq!(&*trace.final_d, &[20, 10]);
//! # Ok::<(), fpm_balance::Error>(())
//! ```
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compare;
pub mod dfpa;
pub mod dfpa2d;
pub mod error;
pub mod export;
pub mod kernels;
pub mod model;
pub mod partition;
pub mod scenario;
pub mod sim;

pub use dfpa::{dfpa, dfpa_from, even_distribution, BalanceTrace, DfpaConfig, Executor, MeasurementRound, Status, Timing};
pub use dfpa2d::{column_rebalance, dfpa_2d, CellTask, GridConfig, GridExecutor, GridTrace, Optimizations};
pub use error::{Error, Result};
pub use model::{
    speed_from_time, ConstantModel, PiecewiseLinearModel, SpeedFunction, SpeedPoint, SyntheticProfile,
};
pub use partition::{
    cpm_partition, cpm_partition_2d, heterogeneity, imbalance, optimal_partition_continuous, round_distribution,
    ContinuousAllocation, Distribution, GridPartition,
};
pub use sim::{brute_force_optimum, overhead_ratio, overhead_report, SimCluster, SimGrid};
