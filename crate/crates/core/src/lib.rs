pub mod apps;
pub mod golden;
pub mod graph;
pub mod image;
pub mod machine;
pub mod mapper;
mod scalar;

pub use scalar::Real;

/// Double-precision belief state.
pub type Beliefs64 = golden::BeliefState<f64>;
/// Single-precision belief state.
pub type Beliefs32 = golden::BeliefState<f32>;
/// Per-variable marginals, outer index is the variable id.
pub type Marginals = Vec<Vec<f64>>;
