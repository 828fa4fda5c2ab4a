//! Steering controllers: the geometric label oracle, the learned regressor
//! under test, its windowed variant and error-injection wrappers.

mod mlp;
mod train;

use std::io::{Read, Write};
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use mlp::{Activation, Gradient, Mlp};
pub use train::{train, TrainConfig, TrainReport};

use crate::camera::Image;
use crate::dynamics::{angle_to_steering, wrap_angle, VehicleState};
use crate::seed;
use crate::world::{Projection, Road};
use crate::{Error, Result};

/// Pure-pursuit lookahead distance.
pub const DEFAULT_LOOKAHEAD: f64 = 8.0;

/// Frames averaged by the windowed controller.
pub const DEFAULT_WINDOW: usize = 5;

/// Pure-pursuit steering toward the centerline point `lookahead` meters of
/// arc ahead of the vehicle's projection. Returns a normalized,
/// right-positive command.
pub fn oracle_steering(r: &Road, st: &VehicleState, lookahead: f64, wheelbase: f64) -> Result<f64> {
    let proj = r.project(st.x, st.y)?;
    oracle_steering_from(r, st, &proj, lookahead, wheelbase)
}

/// As [`oracle_steering`] with the vehicle's projection already known.
pub fn oracle_steering_from(
    r: &Road,
    st: &VehicleState,
    proj: &Projection,
    lookahead: f64,
    wheelbase: f64,
) -> Result<f64> {
    let target = r.pose_at(proj.s + lookahead)?;
    let (dx, dy) = (target.x - st.x, target.y - st.y);
    let distance = dx.hypot(dy);
    if distance < 1e-9 {
        return Ok(0.0);
    }
    let alpha = wrap_angle(dy.atan2(dx) - st.heading);
    // Left-positive front-wheel angle of the arc through the target.
    let delta_left = (2.0 * wheelbase * alpha.sin() / distance).atan();
    // `0.0 - x` keeps a straight-ahead command at +0 rather than -0.
    Ok(angle_to_steering(0.0 - delta_left))
}

/// What a controller sees for one frame.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    /// Position of the frame in its sequence.
    pub index: usize,
    pub image: &'a Image,
    /// Ground-truth label of this frame, when the source knows it.
    pub reference_label: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Oracle,
    Learned,
    Windowed,
    Biased,
    Noisy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Controller {
    /// Replays each frame's reference label: the steering the road
    /// trajectory calls for at that step, independent of where the vehicle
    /// actually is.
    Oracle,
    Learned(Mlp),
    /// Learned network fed the mean of the last `window` frames.
    Windowed { net: Mlp, window: usize },
    Biased { inner: Box<Controller>, bias: f64 },
    /// Adds zero-mean Gaussian noise seeded by `(seed, frame index)`.
    Noisy {
        inner: Box<Controller>,
        sigma: f64,
        seed: u64,
    },
}

/// Network input for one image: pixels centered on zero.
pub fn image_features(img: &Image) -> Vec<f64> {
    img.pixels().iter().map(|&p| f64::from(p) - 0.5).collect()
}

/// Mean of the per-image features.
pub fn window_features(images: &[&Image]) -> Vec<f64> {
    let mut acc = image_features(images[0]);
    for img in &images[1..] {
        for (a, &p) in acc.iter_mut().zip(img.pixels()) {
            *a += f64::from(p) - 0.5;
        }
    }
    let n = images.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

impl Controller {
    pub fn biased(inner: Controller, bias: f64) -> Self {
        Controller::Biased {
            inner: Box::new(inner),
            bias,
        }
    }

    pub fn noisy(inner: Controller, sigma: f64, seed: u64) -> Self {
        Controller::Noisy {
            inner: Box::new(inner),
            sigma,
            seed,
        }
    }

    pub fn kind(&self) -> ControllerKind {
        match self {
            Controller::Oracle => ControllerKind::Oracle,
            Controller::Learned(_) => ControllerKind::Learned,
            Controller::Windowed { .. } => ControllerKind::Windowed,
            Controller::Biased { .. } => ControllerKind::Biased,
            Controller::Noisy { .. } => ControllerKind::Noisy,
        }
    }

    /// Frames of history a prediction consumes.
    pub fn history_window(&self) -> usize {
        match self {
            Controller::Oracle | Controller::Learned(_) => 1,
            Controller::Windowed { window, .. } => *window,
            Controller::Biased { inner, .. } | Controller::Noisy { inner, .. } => inner.history_window(),
        }
    }

    /// Whether predictions depend on image content.
    pub fn uses_images(&self) -> bool {
        match self {
            Controller::Oracle => false,
            Controller::Learned(_) | Controller::Windowed { .. } => true,
            Controller::Biased { inner, .. } | Controller::Noisy { inner, .. } => inner.uses_images(),
        }
    }

    /// Steering for the last frame of `frames` (oldest first). Windowed
    /// controllers pad a short history by repeating its first frame.
    pub fn predict(&self, frames: &[Observation<'_>]) -> Result<f64> {
        let current = frames.last().ok_or(Error::EmptyInput("frames"))?;
        let theta = match self {
            Controller::Oracle => current
                .reference_label
                .ok_or(Error::MissingReference(current.index))?,
            Controller::Learned(net) => net.predict_scalar(&image_features(current.image)),
            Controller::Windowed { net, window } => {
                let window = (*window).max(1);
                let tail = &frames[frames.len().saturating_sub(window)..];
                let mut images: Vec<&Image> = Vec::with_capacity(window);
                images.extend(std::iter::repeat(tail[0].image).take(window - tail.len()));
                images.extend(tail.iter().map(|o| o.image));
                net.predict_scalar(&window_features(&images))
            }
            Controller::Biased { inner, bias } => inner.predict(frames)? + bias,
            Controller::Noisy { inner, sigma, seed } => {
                let base = inner.predict(frames)?;
                let noise = Normal::new(0.0, sigma.abs())
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?;
                let mut rng = seed::rng(seed::substream(*seed, current.index as u64));
                base + noise.sample(&mut rng)
            }
        };
        Ok(theta.clamp(-1.0, 1.0))
    }

    fn network(&self) -> Option<(&Mlp, usize)> {
        match self {
            Controller::Learned(net) => Some((net, 1)),
            Controller::Windowed { net, window } => Some((net, *window)),
            _ => None,
        }
    }

    /// Writes a learned or windowed controller: an 8-byte magic, a
    /// little-endian `u32` header length, the JSON header, then every
    /// parameter as little-endian `f64`.
    pub fn write_model<W: Write>(&self, mut out: W) -> Result<()> {
        let (net, window) = self.network().ok_or_else(|| {
            Error::InvalidArgument(format!("{:?} controllers have no parameters to save", self.kind()))
        })?;
        let header = ModelHeader {
            format: MODEL_FORMAT.into(),
            kind: self.kind(),
            layer_sizes: net.layer_sizes(),
            activations: net.activations(),
            seed: net.seed(),
            history_window: window,
            param_count: net.param_count(),
            dtype: "f64-le".into(),
        };
        let json = serde_json::to_vec(&header)?;
        out.write_all(MODEL_MAGIC)?;
        out.write_all(&(json.len() as u32).to_le_bytes())?;
        out.write_all(&json)?;
        for p in net.params() {
            out.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_model<R: Read>(mut input: R, origin: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            path: origin.to_path_buf(),
            reason,
        };
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(bad("not a model file".into()));
        }
        let mut len = [0u8; 4];
        input.read_exact(&mut len)?;
        let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
        input.read_exact(&mut json)?;
        let header: ModelHeader = serde_json::from_slice(&json)?;
        if header.format != MODEL_FORMAT || header.dtype != "f64-le" {
            return Err(bad(format!("unsupported format {} / {}", header.format, header.dtype)));
        }
        let mut body = Vec::new();
        input.read_to_end(&mut body)?;
        if body.len() != header.param_count * 8 {
            return Err(bad(format!(
                "expected {} parameters, found {} bytes",
                header.param_count,
                body.len()
            )));
        }
        let params: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let net = Mlp::from_params(&header.layer_sizes, header.seed, &params)
            .map_err(|e| bad(e.to_string()))?;
        match header.kind {
            ControllerKind::Learned => Ok(Controller::Learned(net)),
            ControllerKind::Windowed => Ok(Controller::Windowed {
                net,
                window: header.history_window.max(1),
            }),
            other => Err(bad(format!("{other:?} is not a parameterized controller"))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_model(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_model(&bytes[..], path)
    }
}

const MODEL_MAGIC: &[u8; 8] = b"LBMODEL1";
const MODEL_FORMAT: &str = "lanebench-mlp";

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    kind: ControllerKind,
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    seed: u64,
    history_window: usize,
    param_count: usize,
    dtype: String,
}
