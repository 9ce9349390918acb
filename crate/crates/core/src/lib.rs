//! Ridge-curve tracking in videos.
//!
//! A single moving ridge (or, after negation, valley) is tracked through a
//! `width × height × frames` intensity tensor: Gaussian scale-space jets give
//! per-voxel Hessian frames and ridge-likeness weights, forward/backward
//! accumulation with a Hermite smoothness penalty links frames, and the
//! per-frame score distributions are condensed into a kernel-smoothed curve
//! with frame-wise confidence regions.
//!
//! ```no_run
//! use ridgetrack::{detect, DetectConfig, load_tensor, TensorFormat};
//!
//! let video = load_tensor("clip.bin", TensorFormat::Binary)?;
//! let found = detect(&video, &DetectConfig::valley())?;
//! for r in found.records()? {
//!     println!("{} {} {}", r.tau, r.u, r.w);
//! }
//! # Ok::<(), ridgetrack::Error>(())
//! ```

pub mod curvefit;
pub mod eigenframe;
pub mod error;
pub mod linalg;
pub mod linking;
pub mod pipeline;
pub mod scalespace;
pub mod scoring;
pub mod synthlab;
pub mod videotensor;

pub use error::{Error, ErrorKind, Result};
pub use linking::Window;
pub use pipeline::{detect, DetectConfig, Detection, Diagnostics};
pub use scalespace::ScaleParams;
pub use videotensor::{load_tensor, save_tensor, TensorFormat, TrajectoryRecord, VideoTensor};
