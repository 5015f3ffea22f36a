//! Causal effect estimation in latent-variable linear non-Gaussian acyclic models.
//!
//! Estimators work from joint cumulants of the observed variables, either estimated from a
//! [`Sample`] or computed exactly from a mixing matrix ([`PopulationCumulants`]).

pub mod cumulants;
pub mod error;
pub mod graph;
pub mod iv;
pub mod proxy;
pub mod rootfind;
pub mod synth;

pub use cumulants::{CumulantSource, CumulantTensor, NoiseCumulants, PopulationCumulants, Sample};
pub use error::{Error, Result};
pub use graph::{Dag, GraphPreset, GraphSpec, Roles};
pub use iv::IvEstimate;
pub use proxy::ProxyEstimate;
pub use rootfind::{EffectPolynomial, EffectRoots};
pub use synth::{draw_model, sample_data, NoiseFamily, WeightedModel};
