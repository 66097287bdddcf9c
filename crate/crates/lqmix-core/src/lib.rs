//! Solver and verification harness for two-team linear-quadratic
//! mean-field problems with weak coupling through the population average
//! and mixed cooperative/competitive objectives.
//!
//! Pipeline: [`model`] holds the coefficients and coalition algebra;
//! [`ccmat`] assembles the consistency-condition block system; [`riccati`]
//! solves the coupled non-symmetric Riccati equations by two independent
//! routes; [`strategy`] turns the solution into a decentralized feedback
//! law with an offline mean-field path; [`sim`] runs the finite-N
//! population under that law; [`oracle`] measures optimality gaps against
//! exact best responses.

pub mod ccmat;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod presets;
pub mod riccati;
pub mod sim;
pub mod stats;
pub mod strategy;

pub use ccmat::{assemble, assemble_hamiltonian, CcMatrices};
pub use grid::TimeGrid;
pub use model::{
    validate, CoalitionMatrix, Coalition, GaussianLaw, PiecewiseConst, PopulationSpec,
    ProblemSpec, Violation,
};
pub use oracle::{
    best_response_value, build_stacked, decentralized_cost_exact, optimality_gap_study,
    quadraticity_check, ExactCosts, GapStudy, StackedLq,
};
pub use riccati::{solve_closed_form, solve_integrated, RiccatiSolution};
pub use sim::{
    coupling_error_study, simulate, ControlSource, CouplingStudy, PartnerMap, SimulationConfig,
    SimulationResult, Team,
};
pub use strategy::{fbsde_residual, propagate_mean_field, MeanFieldPath, StrategyGains};
