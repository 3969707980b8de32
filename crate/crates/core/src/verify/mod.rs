//! Cross-checks between the Monte Carlo and control routes: PDE residuals,
//! Legendre duality, the Laplace limit, Yosida convergence and
//! large-deviation decay.

mod duality;
mod field;
mod hjb;
mod integro;
mod limits;

pub use duality::{duality_tolerance, legendre_duality_suite, DualityGrid};
pub use field::{ConstantField, LinearField, SinePerturbed, ValueField};
pub use hjb::{hjb_residual, Axis, HjbResidual, ResidualPoint, ValueTable, KINK_FACTOR, SIGMA_FLOOR};
pub use integro::{integro_pde_residual, IntegroResidual, IntegroRow, EXPONENT_CLIP};
pub use limits::{
    laplace_limit_convergence, ldp_probability_check, yosida_convergence_suite, Ball, LdpOptions, LdpRow, LdpTable,
    LimitRow, LimitTable, YosidaRow, YosidaTable,
};
