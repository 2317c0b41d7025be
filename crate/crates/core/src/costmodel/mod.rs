//! Transfer accounting, closed-form transfer counts and the roofline model.

mod analytic;
mod ledger;
mod roofline;

pub use analytic::{
    analytic_breakdown, analytic_transfers, compression_ratio, reconcile, theoretical_speedup,
    AnalyticTransfers, Method, ReconcileReport, ReconcileRow, TransferParams,
};
pub use ledger::{Category, CategoryCount, TransferLedger};
pub use roofline::{
    arithmetic_intensity, attention_transfer_fraction, bandwidth_bound, classify, max_intensity,
    reference_shapes, time_lower_bound, BoundReport, HardwareSpec, ModelShape,
};
