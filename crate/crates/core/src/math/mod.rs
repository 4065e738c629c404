//! Dense numerical kernels shared by every other module.

pub mod fd;
pub mod linalg;
pub mod quadrature;
pub mod rng;

pub use fd::{fd_gradient, fd_hessian, fd_jacobian_sym};
pub use linalg::{project_ball, soft_threshold, sym_eigen, vec_serde, EigenDecomp, ParamVec, SymMatrix};
pub use quadrature::{gauss_hermite, gauss_legendre, QuadratureRule, RuleKind, TensorRule2d};
pub use rng::{derive_seed, label_key, StreamRng};
