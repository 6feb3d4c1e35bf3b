//! Feature normalization, SMOTE-Tomek class balancing and Shapiro-Wilk normality checks.

mod normalize;
mod normality;
mod smote;

pub use normalize::{fit_normalizer, NormalizationParams, STD_FLOOR};
pub use normality::{shapiro_wilk, shapiro_wilk_columns, NormalityReport, DEFAULT_MAX_N};
pub use smote::{smote_tomek, BalancedSet, Provenance, DEFAULT_K_NEIGHBORS};
