//! Social occlusion inference over vectorized driving scenes.
//!
//! The crate covers the full desk-scale pipeline: occupancy grids and
//! ego-frame geometry ([`grid`]), exact 2-D visibility from the ego
//! viewpoint ([`visibility`]), scene assembly from tracks or a synthetic
//! intersection generator ([`scene`], [`synth`]), a tape-based
//! differentiable substrate ([`tensor`], [`tape`], [`params`], [`optim`]),
//! the polyline-encoder / interaction-transformer / occlusion-query model
//! ([`net`]) with its image-based counterpart ([`baseline`]), and
//! per-class evaluation metrics ([`metrics`]).
//!
//! Everything here is pure computation over `alloc` collections; file
//! formats, parallel training, and the CLI live in the companion
//! `occlugrid` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod baseline;
pub mod fmath;
pub mod geom;
pub mod gradcheck;
pub mod grid;
pub mod metrics;
pub mod net;
pub mod optim;
pub mod params;
pub mod rng;
pub mod scene;
pub mod sweep;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod visibility;

pub use grid::{EgoFrame, GridSpec, MaskOgm, Ogm, PatchGrid};
pub use scene::{Polyline, SceneSample, TrackTable, Vector, VectorClass};
pub use tensor::Tensor2;
