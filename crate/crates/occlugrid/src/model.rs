//! One handle over the two architectures, so training and evaluation
//! never branch on model kind at the call site.

use occlugrid_core::baseline::{annotate, AnnotatedOgm, BaselineNet};
use occlugrid_core::grid::Ogm;
use occlugrid_core::net::{loss_on_tape, LossValues, NetConfig, VectorNet};
use occlugrid_core::params::{GradStore, ModelParams};
use occlugrid_core::scene::SceneSample;
use occlugrid_core::tape::Tape;

use crate::config::ModelKind;
use crate::errors::{CliError, CliResult};

enum Arch {
    Vector(VectorNet),
    Baseline(BaselineNet),
}

/// A scene plus whatever per-sample input the architecture precomputes.
/// The baseline consumes a rasterized view of the scene; building it
/// once keeps the training loop off that cost.
pub struct RunSample {
    pub scene: SceneSample,
    raster: Option<AnnotatedOgm>,
}

pub struct ModelDriver {
    cfg: NetConfig,
    arch: Arch,
}

impl ModelDriver {
    pub fn new(kind: ModelKind, cfg: NetConfig) -> CliResult<Self> {
        let arch = match kind {
            ModelKind::Vector => Arch::Vector(VectorNet::new(cfg.clone())?),
            ModelKind::Baseline => Arch::Baseline(BaselineNet::new(cfg.clone())?),
        };
        Ok(ModelDriver { cfg, arch })
    }

    pub fn kind(&self) -> ModelKind {
        match self.arch {
            Arch::Vector(_) => ModelKind::Vector,
            Arch::Baseline(_) => ModelKind::Baseline,
        }
    }

    pub fn net(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn init_params(&self, seed: u64) -> ModelParams {
        match &self.arch {
            Arch::Vector(n) => n.init_params(seed),
            Arch::Baseline(n) => n.init_params(seed),
        }
    }

    /// Checks grid dimensions and attaches per-sample inputs.
    pub fn prepare(&self, scenes: Vec<SceneSample>) -> CliResult<Vec<RunSample>> {
        scenes
            .into_iter()
            .map(|scene| {
                let (h, w) = (scene.mask.height, scene.mask.width);
                if (h, w) != (self.cfg.grid_height, self.cfg.grid_width) {
                    return Err(CliError::Model(format!(
                        "sample {} uses a {h}x{w} grid but the model expects {}x{}",
                        scene.id, self.cfg.grid_height, self.cfg.grid_width
                    )));
                }
                let raster = match self.arch {
                    Arch::Vector(_) => None,
                    Arch::Baseline(_) => Some(annotate(&scene)),
                };
                Ok(RunSample { scene, raster })
            })
            .collect()
    }

    pub fn forward(&self, params: &ModelParams, rs: &RunSample) -> CliResult<Ogm> {
        match &self.arch {
            Arch::Vector(n) => Ok(n.forward(params, &rs.scene)?),
            Arch::Baseline(n) => {
                let raster = rs.raster.as_ref().expect("baseline samples carry a raster");
                Ok(n.forward(params, raster)?)
            }
        }
    }

    /// Loss and parameter gradients for one sample, on a fresh tape.
    pub fn loss_grads(
        &self,
        params: &ModelParams,
        rs: &RunSample,
    ) -> CliResult<(LossValues, GradStore)> {
        let mut tape = Tape::new(params);
        let pred = match &self.arch {
            Arch::Vector(n) => n.forward_tape(&mut tape, &rs.scene)?,
            Arch::Baseline(n) => {
                let raster = rs.raster.as_ref().expect("baseline samples carry a raster");
                n.forward_tape(&mut tape, raster)?
            }
        };
        let nodes = loss_on_tape(
            &mut tape,
            pred,
            &rs.scene.ground_truth,
            &rs.scene.mask,
            self.cfg.alpha,
            self.cfg.beta,
        )?;
        let mut grads = GradStore::zeros_like(params);
        tape.backward(nodes.total, &mut grads);
        let values = LossValues {
            total: tape.scalar(nodes.total),
            global: tape.scalar(nodes.global),
            mask: tape.scalar(nodes.mask),
            occ: tape.scalar(nodes.occ),
        };
        Ok((values, grads))
    }
}
