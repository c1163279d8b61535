use std::fs;
use std::path::{Path, PathBuf};

use super::{load_ply, tile_frame, Aabb, PointCloudFrame, TiledFrame};
use crate::error::{Error, Result};
use crate::kv::{parse_list, parse_one, KvFile};

/// Describes a point-cloud sequence on disk.
///
/// ```text
/// grid = 2 3 2
/// bbox = -2 0 -2 2 2.5 2
/// frame = 32 frame_0032.ply
/// trajectories = trajectories.csv
/// ```
///
/// `frame` lines are kept in file order; relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceManifest {
    pub grid: [usize; 3],
    pub bbox: Aabb,
    pub frames: Vec<(usize, PathBuf)>,
    pub trajectories: Option<PathBuf>,
}

impl SequenceManifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let kv = KvFile::parse(text)?;
        let (g, gl) = kv.get("grid").ok_or_else(|| Error::invalid("manifest lacks `grid`"))?;
        let g: Vec<usize> = parse_list(g, gl, Some(3))?;
        let (b, bl) = kv.get("bbox").ok_or_else(|| Error::invalid("manifest lacks `bbox`"))?;
        let b: Vec<f64> = parse_list(b, bl, Some(6))?;
        let mut frames = Vec::new();
        for (v, line) in kv.all("frame") {
            let (idx, path) = v.split_once(char::is_whitespace).ok_or_else(|| Error::Parse {
                line,
                msg: "expected `frame = <index> <path>`".into(),
            })?;
            let idx: usize = parse_one(idx, line)?;
            if frames.iter().any(|(i, _)| *i == idx) {
                return Err(Error::Parse {
                    line,
                    msg: format!("duplicate frame index {idx}"),
                });
            }
            frames.push((idx, base.join(path.trim())));
        }
        Ok(Self {
            grid: [g[0], g[1], g[2]],
            bbox: Aabb::new([b[0], b[1], b[2]], [b[3], b[4], b[5]]),
            frames,
            trajectories: kv.get("trajectories").map(|(v, _)| base.join(v)),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(Error::with_path(path))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Serialises with paths made relative to `base` where possible.
    pub fn to_text(&self, base: &Path) -> String {
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
        let mut s = String::from("# voxport sequence manifest\n");
        s += &format!("grid = {} {} {}\n", self.grid[0], self.grid[1], self.grid[2]);
        let (mn, mx) = (self.bbox.min, self.bbox.max);
        s += &format!(
            "bbox = {} {} {} {} {} {}\n",
            mn[0], mn[1], mn[2], mx[0], mx[1], mx[2]
        );
        if let Some(t) = &self.trajectories {
            s += &format!("trajectories = {}\n", rel(t));
        }
        for (i, p) in &self.frames {
            s += &format!("frame = {i} {}\n", rel(p));
        }
        s
    }

    /// Loads every frame; the manifest's indices override those in the files.
    pub fn load_frames(&self) -> Result<Vec<PointCloudFrame>> {
        self.frames
            .iter()
            .map(|(idx, path)| {
                let mut f = load_ply(path)?;
                f.frame_index = *idx;
                Ok(f)
            })
            .collect()
    }

    pub fn tile(&self, frame: &PointCloudFrame) -> Result<TiledFrame> {
        tile_frame(frame, self.grid, self.bbox)
            .map_err(|e| e.context(format!("frame {}", frame.frame_index)))
    }
}

/// Global bounding box over every frame of a sequence.
pub fn sequence_bbox(frames: &[PointCloudFrame]) -> Option<Aabb> {
    frames
        .iter()
        .filter_map(|f| f.bbox())
        .reduce(|a, b| a.union(&b))
}
