//! Second-order multidimensional scaling over discrete measures.
//!
//! A [`PointCloud`] is embedded by an [`EmbeddingPlan`], a possibly
//! probabilistic coupling whose rows record where each source atom is sent.
//! Energies are double sums of a [`CostFamily`] over ordered atom pairs.
//! The [`optim`] module provides a particle gradient baseline and the
//! marginal sweep, which moves plan mass onto global minimizers of the
//! marginal problem one needle at a time.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost;
pub mod datasets;
pub mod energy;
pub mod error;
pub mod experiment;
pub mod io;
pub mod measure;
pub mod optim;
pub mod quartic;
pub mod sum;
pub mod svg;

pub use cost::{CostFamily, CostKind, CostParams, Kernel, Profile};
pub use energy::{
    determinism_report, marginal_grad, marginal_hessian, marginal_value, oscillation_experiment,
    perturbation_split, stress_map, stress_plan, DeterminismReport, MarginalProblem, PerturbationSplit,
};
pub use error::{Error, Result};
pub use measure::{center_plan, plan_from_map, Atom, DeterministicMap, EmbeddingPlan, Perturbation, PointCloud};
pub use quartic::{compute_moments, minimize_quartic, quartic_at, MarginalSolution, MomentSet, Multiplicity, QuarticMarginal};
