pub mod binary;
pub mod median;
pub mod multivalue;

pub use binary::{
    decision_check, majority_of, sample_l, BinaryNodeState, BinaryParams, DecisionWindow,
    SampleError,
};
pub use median::{median3, median_step};
pub use multivalue::{message_budget, MultiNodeState, MultiParams, SPREAD_FANOUT};
