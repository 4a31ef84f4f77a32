//! Trace-constrained SDP model, its epigraph standard form and dual certificates.

pub mod certificate;
pub mod conic;
pub mod expr;
pub mod layout;
pub mod problem;
pub mod standard;

pub use certificate::{dual_objective_value, duality_gap, kkt_certify, CertificateFailure, CertificateReport, DualCertificate};
pub use conic::ConicModel;
pub use expr::{LinExpr, LinMat3, LinVec3};
pub use layout::{BlockId, GroupId, Layout, PrimalPoint, Slot};
pub use problem::{factor_objective, LinearRow, ObjectiveFactor, ProblemBuilder, QuadraticObjective, TcsdpProblem};
pub use standard::{to_standard_form, StandardForm, StandardSolution};
