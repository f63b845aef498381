//! Closed-form densities, special functions, score and Fisher information.

pub mod bessel;
mod density;
mod fim;

pub use bessel::{bessel_k, bessel_k_scaled, log_bessel_k, BesselOrder};
pub use density::{
    fap_pdf, fat_cdf, fat_pdf, joint_pdf, lateral_pdf, lateral_residual, log_fap_pdf, log_fat_pdf,
    log_joint_pdf, log_lateral_pdf, score,
};
pub use fim::{fim_closed_form, FimMatrix};
