//! A video segment with per-frame timestamps, depth priors and adjacent-frame
//! optical flow.

use crate::error::{Result, StagError};
use crate::img::Image;

/// Frames plus priors for one processing window. `flow_fwd[k]` maps frame k to
/// k+1, `flow_bwd[k]` maps frame k+1 back to k; both are 2-channel pixel-unit
/// fields. Depth maps are positive with arbitrary scale/shift.
#[derive(Clone, Debug)]
pub struct VideoCube {
    pub frames: Vec<Image>,
    pub timestamps: Vec<f64>,
    pub depths: Vec<Image>,
    pub flow_fwd: Vec<Image>,
    pub flow_bwd: Vec<Image>,
}

impl VideoCube {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.frames.len();
        if n == 0 {
            return Err(StagError::InvalidInput("cube has no frames".into()));
        }
        if self.timestamps.len() != n || self.depths.len() != n {
            return Err(StagError::DimMismatch {
                context: "cube frame/timestamp/depth counts",
                lhs: n.to_string(),
                rhs: format!("{}/{}", self.timestamps.len(), self.depths.len()),
            });
        }
        for w in self.timestamps.windows(2) {
            if w[1] <= w[0] {
                return Err(StagError::InvalidInput(format!(
                    "timestamps must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if n > 1 && (self.flow_fwd.len() != n - 1 || self.flow_bwd.len() != n - 1) {
            return Err(StagError::DimMismatch {
                context: "cube flow field count",
                lhs: (n - 1).to_string(),
                rhs: format!("{}/{}", self.flow_fwd.len(), self.flow_bwd.len()),
            });
        }
        let (w, h) = (self.width(), self.height());
        for f in &self.frames {
            if f.width() != w || f.height() != h || f.channels() != 3 {
                return Err(StagError::DimMismatch {
                    context: "frame dims",
                    lhs: format!("{w}x{h}x3"),
                    rhs: format!("{}x{}x{}", f.width(), f.height(), f.channels()),
                });
            }
        }
        for d in &self.depths {
            if d.width() != w || d.height() != h || d.channels() != 1 {
                return Err(StagError::DimMismatch {
                    context: "depth dims",
                    lhs: format!("{w}x{h}x1"),
                    rhs: format!("{}x{}x{}", d.width(), d.height(), d.channels()),
                });
            }
        }
        for f in self.flow_fwd.iter().chain(self.flow_bwd.iter()) {
            if f.width() != w || f.height() != h || f.channels() != 2 {
                return Err(StagError::DimMismatch {
                    context: "flow dims",
                    lhs: format!("{w}x{h}x2"),
                    rhs: format!("{}x{}x{}", f.width(), f.height(), f.channels()),
                });
            }
        }
        Ok(())
    }

    /// Sub-cube over the inclusive frame range, with timestamps re-normalized
    /// to the window so the first frame is 0 and the last is 1.
    pub fn slice(&self, start: usize, end: usize) -> Result<VideoCube> {
        if end <= start || end >= self.frames.len() {
            return Err(StagError::InvalidInput(format!(
                "bad slice {start}..={end} of {} frames",
                self.frames.len()
            )));
        }
        let len = end - start + 1;
        let timestamps = (0..len).map(|i| i as f64 / (len - 1) as f64).collect();
        Ok(VideoCube {
            frames: self.frames[start..=end].to_vec(),
            timestamps,
            depths: self.depths[start..=end].to_vec(),
            flow_fwd: self.flow_fwd[start..end].to_vec(),
            flow_bwd: self.flow_bwd[start..end].to_vec(),
        })
    }
}
