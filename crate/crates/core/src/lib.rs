//! Joint stereo-video deblurring and piecewise-rigid scene flow.
//!
//! A scene is a set of superpixels, each carrying a 3D plane and belonging to
//! a rigidly moving object. The plane/motion pair induces a homography per
//! superpixel, the homography induces optical flow, and the flow induces a
//! spatially varying motion-blur kernel. Estimation alternates between the
//! scene-flow labeling and a primal-dual total-variation deconvolution of the
//! six latent images of a stereo window.

pub mod blurkernel;
pub mod deblur;
pub mod error;
pub mod geometry;
pub mod init;
pub mod io;
pub mod pipeline;
pub mod raster;
pub mod sceneflow;
pub mod segmentation;
pub mod synth;

pub use error::{Error, Result};
