//! Network building blocks with explicit forward and backward passes.

mod activation;
mod adam;
mod dense;
mod loss;
mod pool;

pub use activation::{dropout, dropout_backward, elu, elu_backward, ELU_ALPHA};
pub use adam::{Adam, AdamConfig, WeightDecay};
pub use dense::Dense;
pub use loss::softmax_cross_entropy;
pub use pool::{
    coarsen, global_avg_pool, global_avg_pool_backward, graclus_match, graclus_pool, max_pool,
    max_pool_backward, PoolResult, VisitOrder,
};
