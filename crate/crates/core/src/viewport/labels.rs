use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Binary per-point labels of one frame (1 = in the field of view).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FovLabels {
    pub frame_index: usize,
    pub labels: Vec<u8>,
}

impl FovLabels {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

/// Reads `frame,point_index,label` rows; every frame must list indices
/// `0..n` exactly once.
pub fn read_labels(r: impl Read) -> Result<Vec<FovLabels>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["frame", "point_index", "label"] {
        return Err(Error::Parse {
            line: 1,
            msg: "expected header `frame,point_index,label`".into(),
        });
    }
    let mut frames: BTreeMap<usize, BTreeMap<usize, u8>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let num = |i: usize| -> Result<usize> {
            rec[i].parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad field `{}`", &rec[i]),
            })
        };
        let (f, i, l) = (num(0)?, num(1)?, num(2)?);
        if l > 1 {
            return Err(Error::Parse {
                line,
                msg: format!("label {l} is not 0 or 1"),
            });
        }
        if frames.entry(f).or_default().insert(i, l as u8).is_some() {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate point {i} in frame {f}"),
            });
        }
    }
    frames
        .into_iter()
        .map(|(f, m)| {
            if m.keys().last().map_or(0, |&k| k + 1) != m.len() {
                return Err(Error::invalid(format!("frame {f} labels do not cover 0..{}", m.len())));
            }
            Ok(FovLabels {
                frame_index: f,
                labels: m.into_values().collect(),
            })
        })
        .collect()
}

pub fn write_labels(frames: &[FovLabels], w: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["frame", "point_index", "label"])?;
    for fr in frames {
        for (i, l) in fr.labels.iter().enumerate() {
            wtr.write_record([fr.frame_index.to_string(), i.to_string(), l.to_string()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

impl FovLabels {
    pub fn load_all(path: &Path) -> Result<Vec<FovLabels>> {
        let f = File::open(path).map_err(Error::with_path(path))?;
        read_labels(std::io::BufReader::new(f)).map_err(|e| e.context(format!("reading {}", path.display())))
    }

    pub fn save_all(frames: &[FovLabels], path: &Path) -> Result<()> {
        let f = File::create(path).map_err(Error::with_path(path))?;
        write_labels(frames, std::io::BufWriter::new(f))
    }
}
