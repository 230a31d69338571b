use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::step::ModelGrads;
use crate::avatar::AvatarModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    pub position: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
    pub color: f64,
    /// Blendshape learning rates are the base rate times these factors.
    pub delta_position_factor: f64,
    pub delta_rotation_factor: f64,
    pub delta_color_factor: f64,
    pub mlp: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 0.0008,
            opacity: 0.25,
            scale: 0.025,
            rotation: 0.005,
            color: 0.0125,
            delta_position_factor: 0.05,
            delta_rotation_factor: 0.5,
            delta_color_factor: 0.5,
            mlp: 0.001,
        }
    }
}

impl LearningRates {
    pub fn validate(&self) -> crate::Result<()> {
        let all = [
            self.position,
            self.opacity,
            self.scale,
            self.rotation,
            self.color,
            self.delta_position_factor,
            self.delta_rotation_factor,
            self.delta_color_factor,
            self.mlp,
        ];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(crate::Error::Config("learning rates must be positive and finite".into()))
        }
    }
}

/// Parameter groups, each with its own Adam moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Position,
    Rotation,
    Scale,
    Opacity,
    Color,
    DeltaPosition,
    DeltaRotation,
    DeltaColor,
    Mlp,
}

impl Group {
    pub const ALL: [Group; 9] = [
        Group::Position,
        Group::Rotation,
        Group::Scale,
        Group::Opacity,
        Group::Color,
        Group::DeltaPosition,
        Group::DeltaRotation,
        Group::DeltaColor,
        Group::Mlp,
    ];

    pub fn learning_rate(self, lr: &LearningRates) -> f64 {
        match self {
            Group::Position => lr.position,
            Group::Rotation => lr.rotation,
            Group::Scale => lr.scale,
            Group::Opacity => lr.opacity,
            Group::Color => lr.color,
            Group::DeltaPosition => lr.position * lr.delta_position_factor,
            Group::DeltaRotation => lr.rotation * lr.delta_rotation_factor,
            Group::DeltaColor => lr.color * lr.delta_color_factor,
            Group::Mlp => lr.mlp,
        }
    }

    fn grads(self, g: &ModelGrads) -> Vec<f64> {
        fn flat<const D: usize>(rows: &[[f64; D]]) -> Vec<f64> {
            rows.iter().flatten().copied().collect()
        }
        match self {
            Group::Position => flat(&g.base.position),
            Group::Rotation => flat(&g.base.rotation),
            Group::Scale => flat(&g.base.scale),
            Group::Opacity => g.base.opacity.clone(),
            Group::Color => flat(&g.base.color),
            Group::DeltaPosition => g.deltas.iter().flat_map(|d| flat(&d.position)).collect(),
            Group::DeltaRotation => g.deltas.iter().flat_map(|d| flat(&d.rotation)).collect(),
            Group::DeltaColor => g.deltas.iter().flat_map(|d| flat(&d.color)).collect(),
            Group::Mlp => g.mlp.flatten(),
        }
    }

    fn apply(self, model: &mut AvatarModel, grads: &[f64], state: &mut AdamState, lr: f64) {
        let b = &mut model.base;
        match self {
            Group::Position => adam_step(b.position.iter_mut().flatten(), grads, state, lr),
            Group::Rotation => adam_step(b.rotation.iter_mut().flatten(), grads, state, lr),
            Group::Scale => adam_step(b.scale.iter_mut().flatten(), grads, state, lr),
            Group::Opacity => adam_step(b.opacity.iter_mut(), grads, state, lr),
            Group::Color => adam_step(b.color.iter_mut().flatten(), grads, state, lr),
            Group::DeltaPosition => adam_step(
                model.deltas.iter_mut().flat_map(|d| d.position.iter_mut().flatten()),
                grads,
                state,
                lr,
            ),
            Group::DeltaRotation => adam_step(
                model.deltas.iter_mut().flat_map(|d| d.rotation.iter_mut().flatten()),
                grads,
                state,
                lr,
            ),
            Group::DeltaColor => adam_step(
                model.deltas.iter_mut().flat_map(|d| d.color.iter_mut().flatten()),
                grads,
                state,
                lr,
            ),
            Group::Mlp => adam_step(model.mlp.scalars_mut(), grads, state, lr),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    pub rates: LearningRates,
    states: Vec<AdamState>,
}

impl Optimizer {
    pub fn new(model: &AvatarModel, rates: LearningRates) -> Self {
        let zeros = ModelGrads::zeros_like(model);
        let states = Group::ALL
            .iter()
            .map(|g| AdamState::new(g.grads(&zeros).len()))
            .collect();
        Self { rates, states }
    }

    pub fn state(&self, group: Group) -> &AdamState {
        &self.states[group as usize]
    }

    /// One Adam step for every group.
    pub fn step(&mut self, model: &mut AvatarModel, grads: &ModelGrads) {
        for (group, state) in Group::ALL.into_iter().zip(&mut self.states) {
            let g = group.grads(grads);
            group.apply(model, &g, state, group.learning_rate(&self.rates));
        }
    }
}
