//! Synthetic reproduction of a billboard patch attack on an image-based localization
//! network.
//!
//! The crate is split along the experiment's stages:
//!
//! * [`world`] builds a deterministic procedural city with one billboard.
//! * [`render`] raycasts camera views, calibrates per-view billboard conversion tables
//!   and renders training datasets.
//! * [`locnet`] is the convolutional pose regressor (training, evaluation, saliency).
//! * [`attack`] crafts the billboard patch by black-box search on a fairness value.
//! * [`nav`] turns per-frame predictions into regression-smoothed position estimates and
//!   decides whether the turn at the target intersection happens.
//! * [`harness`] chains everything into a resumable, hash-manifested pipeline.

pub mod attack;
pub mod geom;
pub mod harness;
pub mod locnet;
pub mod nav;
pub mod pose;
pub mod render;
pub mod world;
