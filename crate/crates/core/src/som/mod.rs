//! Second-order modulus regressors: evaluation, sign-resolved expansion and
//! nuisance augmentation.

mod augment;
mod poly;
mod structure;
mod term;

pub use augment::{
    derive_augmented, expand_term, expand_under_signs, AugmentedStructure, ExpandedSpec, LambdaKey,
    NuisanceKey, NuisanceParam, OffsetGain, RhoKey, SignPattern,
};
pub use poly::{Atom, PolyTerm, Polynomial};
pub use structure::{BlockDisturbance, MergedRows, ModelBlock, ModelStructure};
pub use term::{RegressorSpec, TermKind};
