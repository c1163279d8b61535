use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::HeadState;
use crate::error::{Error, Result};

const HEADER: [&str; 8] = ["frame", "user", "X", "Y", "Z", "alpha", "beta", "gamma"];

/// Head states by user, then by frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectories {
    pub users: BTreeMap<usize, BTreeMap<usize, HeadState>>,
}

impl Trajectories {
    pub fn insert(&mut self, frame: usize, user: usize, state: HeadState) {
        self.users.entry(user).or_default().insert(frame, state);
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    /// Every user's state at `frame`, in user order; errors if any is missing.
    pub fn states_at(&self, frame: usize) -> Result<Vec<HeadState>> {
        self.users
            .iter()
            .map(|(u, m)| {
                m.get(&frame)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("user {u} has no state at frame {frame}")))
            })
            .collect()
    }

    /// States of `user` for frames in `range` (inclusive start, exclusive end).
    pub fn history(&self, user: usize, start: usize, end: usize) -> Result<Vec<HeadState>> {
        let m = self
            .users
            .get(&user)
            .ok_or_else(|| Error::invalid(format!("unknown user {user}")))?;
        (start..end)
            .map(|f| {
                m.get(&f)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("user {user} has no state at frame {f}")))
            })
            .collect()
    }

    /// Full per-user sequences in frame order.
    pub fn sequences(&self) -> Vec<Vec<HeadState>> {
        self.users.values().map(|m| m.values().copied().collect()).collect()
    }
}

pub fn read_trajectories(r: impl Read) -> Result<Trajectories> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `{}`", HEADER.join(",")),
        });
    }
    let mut out = Trajectories::default();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |msg: String| Error::Parse { line, msg };
        let frame: usize = rec[0].parse().map_err(|_| bad(format!("bad frame `{}`", &rec[0])))?;
        let user: usize = rec[1].parse().map_err(|_| bad(format!("bad user `{}`", &rec[1])))?;
        let mut v = [0.0; 6];
        for d in 0..6 {
            v[d] = rec[d + 2]
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| bad(format!("bad {} `{}`", HEADER[d + 2], &rec[d + 2])))?;
        }
        out.insert(frame, user, HeadState::from_array(v));
    }
    Ok(out)
}

pub fn write_trajectories(t: &Trajectories, w: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(HEADER)?;
    let mut rows: Vec<(usize, usize, &HeadState)> = t
        .users
        .iter()
        .flat_map(|(&u, m)| m.iter().map(move |(&f, s)| (f, u, s)))
        .collect();
    rows.sort_by_key(|&(f, u, _)| (f, u));
    for (f, u, s) in rows {
        let mut rec = vec![f.to_string(), u.to_string()];
        rec.extend(s.to_array().iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

impl Trajectories {
    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(Error::with_path(path))?;
        read_trajectories(f).map_err(|e| e.context(format!("reading {}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(Error::with_path(path))?;
        write_trajectories(self, std::io::BufWriter::new(f))
    }
}
