//! Append-only, line-delimited trajectory store.
//!
//! Layout:
//!
//! ```text
//! srpo-traj v1 <grid_h> <grid_w> <action_count>
//! <record>
//! <record>
//! ...
//! ```
//!
//! A record is one line of tab-separated fields:
//!
//! ```text
//! task_id  goal_text  seed  outcome(0|1)  T  step_0 ... step_{T-1}  terminal
//! ```
//!
//! Each `step_t` field is space-separated: the `3*H*W` grid values, the action
//! id, the old log-probability and the state snapshot token. The terminal
//! field holds the grid values followed by the snapshot token. A snapshot
//! token is `agent/held/target_object/target_cell/objects` where cells are
//! row-major indices, `held` is `-` when empty and `objects` is a
//! comma-separated `id:cell` list. Text fields escape `\`, tab and newline.
//! Reals are written with the shortest representation that parses back to
//! the same `f64`.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{Observation, StateSnapshot, Step, Trajectory, CHANNELS};
use crate::env::Cell;
use crate::{Error, Result};

const MAGIC: &str = "srpo-traj";
const VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreHeader {
    pub grid_h: usize,
    pub grid_w: usize,
    pub action_count: usize,
}

impl StoreHeader {
    fn line(&self) -> String {
        format!(
            "{MAGIC} {VERSION} {} {} {}",
            self.grid_h, self.grid_w, self.action_count
        )
    }

    fn parse(line: &str) -> Result<Self> {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 5 || parts[0] != MAGIC || parts[1] != VERSION {
            return Err(Error::parse("trajectory store header", line));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::parse("trajectory store header", e.to_string()))
        };
        Ok(StoreHeader {
            grid_h: num(parts[2])?,
            grid_w: num(parts[3])?,
            action_count: num(parts[4])?,
        })
    }
}

/// File-backed trajectory collection. Writes go through `&mut self`, so one
/// handle is the single writer.
#[derive(Debug)]
pub struct TrajectoryStore {
    path: PathBuf,
    header: StoreHeader,
}

impl TrajectoryStore {
    /// Creates (or truncates) a store and writes its header.
    pub fn create(path: impl AsRef<Path>, header: StoreHeader) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(f, "{}", header.line()).map_err(|e| Error::io(&path, e))?;
        Ok(TrajectoryStore { path, header })
    }

    /// Opens an existing store, reading only its header.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut first = String::new();
        BufReader::new(f)
            .read_line(&mut first)
            .map_err(|e| Error::io(&path, e))?;
        let header = StoreHeader::parse(first.trim_end())?;
        Ok(TrajectoryStore { path, header })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn header(&self) -> StoreHeader {
        self.header
    }

    pub fn append(&mut self, traj: &Trajectory) -> Result<()> {
        self.append_all(std::slice::from_ref(traj))
    }

    pub fn append_all(&mut self, trajs: &[Trajectory]) -> Result<()> {
        for t in trajs {
            self.check(t)?;
        }
        let f = OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        let mut w = BufWriter::new(f);
        for t in trajs {
            writeln!(w, "{}", encode_record(t)).map_err(|e| Error::io(&self.path, e))?;
        }
        w.flush().map_err(|e| Error::io(&self.path, e))
    }

    fn check(&self, t: &Trajectory) -> Result<()> {
        t.validate(self.header.action_count)?;
        if t.terminal.grid_h != self.header.grid_h || t.terminal.grid_w != self.header.grid_w {
            return Err(Error::shape(
                format!("{}x{}", self.header.grid_h, self.header.grid_w),
                format!("{}x{}", t.terminal.grid_h, t.terminal.grid_w),
            ));
        }
        Ok(())
    }

    pub fn load(&self) -> Result<Vec<Trajectory>> {
        let f = File::open(&self.path).map_err(|e| Error::io(&self.path, e))?;
        let mut lines = BufReader::new(f).lines();
        match lines.next() {
            Some(l) => {
                let l = l.map_err(|e| Error::io(&self.path, e))?;
                StoreHeader::parse(&l)?;
            }
            None => return Err(Error::parse("trajectory store", "missing header")),
        }
        let mut out = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(&self.path, e))?;
            if line.is_empty() {
                continue;
            }
            let t = decode_record(&line, self.header).map_err(|e| match e {
                Error::Parse { message, .. } => Error::parse(
                    format!("{} record {i}", self.path.display()),
                    message,
                ),
                other => other,
            })?;
            out.push(t);
        }
        Ok(out)
    }

    pub fn len(&self) -> Result<usize> {
        Ok(self.load()?.len())
    }

    pub fn is_empty(&self) -> Result<bool> {
        Ok(self.len()? == 0)
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(ch) = chars.next() {
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(Error::parse("text field", format!("bad escape {other:?}"))),
        }
    }
    Ok(out)
}

fn cell_index(grid_w: usize, (r, c): Cell) -> usize {
    r * grid_w + c
}

fn snapshot_token(s: &StateSnapshot, grid_w: usize) -> String {
    let held = s.held.map_or("-".to_string(), |h| h.to_string());
    let objects: Vec<String> = s
        .objects
        .iter()
        .map(|&(id, c)| format!("{id}:{}", cell_index(grid_w, c)))
        .collect();
    format!(
        "{}/{held}/{}/{}/{}",
        cell_index(grid_w, s.agent),
        s.target_object,
        cell_index(grid_w, s.target_cell),
        objects.join(",")
    )
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>()
        .map_err(|e| Error::parse(what.to_string(), format!("{s:?}: {e}")))
}

fn parse_snapshot(tok: &str, header: StoreHeader) -> Result<StateSnapshot> {
    let w = header.grid_w;
    let cell = |s: &str| -> Result<Cell> {
        let i: usize = parse_num(s, "snapshot cell")?;
        if i >= header.grid_h * w {
            return Err(Error::parse("snapshot cell", format!("{i} out of range")));
        }
        Ok((i / w, i % w))
    };
    let parts: Vec<&str> = tok.split('/').collect();
    if parts.len() != 5 {
        return Err(Error::parse("snapshot", tok));
    }
    let held = match parts[1] {
        "-" => None,
        h => Some(parse_num(h, "held object")?),
    };
    let mut objects = Vec::new();
    if !parts[4].is_empty() {
        for o in parts[4].split(',') {
            let (id, c) = o
                .split_once(':')
                .ok_or_else(|| Error::parse("snapshot object", o))?;
            objects.push((parse_num(id, "object id")?, cell(c)?));
        }
    }
    Ok(StateSnapshot {
        agent: cell(parts[0])?,
        held,
        objects,
        target_object: parse_num(parts[2], "target object")?,
        target_cell: cell(parts[3])?,
    })
}

fn push_grid(out: &mut String, grid: &[f64]) {
    for (i, v) in grid.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&v.to_string());
    }
}

/// Encodes one trajectory as a single record line (no trailing newline).
pub fn encode_record(t: &Trajectory) -> String {
    let w = t.terminal.grid_w;
    let mut out = format!(
        "{}\t{}\t{}\t{}\t{}",
        escape(&t.task_id),
        escape(&t.goal_text),
        t.seed,
        u8::from(t.outcome),
        t.steps.len()
    );
    for step in &t.steps {
        out.push('\t');
        push_grid(&mut out, &step.observation.grid);
        out.push_str(&format!(
            " {} {} {}",
            step.action,
            step.old_log_prob,
            snapshot_token(&step.observation.snapshot, w)
        ));
    }
    out.push('\t');
    push_grid(&mut out, &t.terminal.grid);
    out.push(' ');
    out.push_str(&snapshot_token(&t.terminal.snapshot, w));
    out
}

fn parse_frame<'a>(
    tokens: &mut impl Iterator<Item = &'a str>,
    header: StoreHeader,
) -> Result<Vec<f64>> {
    let n = CHANNELS * header.grid_h * header.grid_w;
    let mut grid = Vec::with_capacity(n);
    for _ in 0..n {
        let tok = tokens
            .next()
            .ok_or_else(|| Error::parse("grid", format!("expected {n} values")))?;
        let v: f64 = parse_num(tok, "grid value")?;
        grid.push(v);
    }
    Ok(grid)
}

/// Decodes one record line written by [`encode_record`].
pub fn decode_record(line: &str, header: StoreHeader) -> Result<Trajectory> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < 7 {
        return Err(Error::parse("record", format!("{} fields", fields.len())));
    }
    let task_id = unescape(fields[0])?;
    let goal_text = unescape(fields[1])?;
    let seed: u64 = parse_num(fields[2], "seed")?;
    let outcome = match fields[3] {
        "0" => false,
        "1" => true,
        o => return Err(Error::parse("outcome", o)),
    };
    let len: usize = parse_num(fields[4], "length")?;
    if fields.len() != 6 + len {
        return Err(Error::parse(
            "record",
            format!("length {len} but {} step fields", fields.len().saturating_sub(6)),
        ));
    }
    let obs = |grid: Vec<f64>, snap: &str| -> Result<Observation> {
        Ok(Observation {
            grid_h: header.grid_h,
            grid_w: header.grid_w,
            grid,
            snapshot: parse_snapshot(snap, header)?,
        })
    };
    let mut steps = Vec::with_capacity(len);
    for field in &fields[5..5 + len] {
        let mut toks = field.split(' ');
        let grid = parse_frame(&mut toks, header)?;
        let action: usize = parse_num(toks.next().unwrap_or(""), "action")?;
        let old_log_prob: f64 = parse_num(toks.next().unwrap_or(""), "old_log_prob")?;
        let snap = toks.next().unwrap_or("");
        if toks.next().is_some() {
            return Err(Error::parse("step", "trailing tokens"));
        }
        steps.push(Step {
            observation: obs(grid, snap)?,
            action,
            old_log_prob,
        });
    }
    let mut toks = fields[5 + len].split(' ');
    let grid = parse_frame(&mut toks, header)?;
    let terminal = obs(grid, toks.next().unwrap_or(""))?;
    Ok(Trajectory {
        task_id,
        goal_text,
        steps,
        terminal,
        outcome,
        seed,
    })
}
