//! Exact generator and verifier for the 14-moment closure of dense gases.

pub mod closure_gen;
pub mod expr;
pub mod galilean;
pub mod iso_tensor;
pub mod rational;
pub mod sample;
pub mod scalar_field;
pub mod thermo14;

pub use closure_gen::{
    make_closure, verify_closure, ClosureError, ClosureResult, CoefficientTable, FreeInput,
    PsiFamily, VerificationReport,
};
pub use expr::{Expr, ExprError};
pub use galilean::{LagrangeVec14, MomentVec14, Velocity3};
pub use iso_tensor::{ConcretePoly, IsoScalarPoly, IsoVectorPoly, TensorState};
pub use rational::Rational;
pub use scalar_field::{ScalarError, ScalarFn, SVar, Value};
pub use thermo14::{
    DerivedCoeffs, EqState, ExprMaterial, LagrangeDeviation, MaterialModel, NonEqFields,
    NumericMaterial, PsiMaterial, ThermoError,
};
