//! Binary columnar cache of an ingested dataset.
//!
//! Layout, little endian throughout:
//!
//! ```text
//! magic "CFTRAJ\0\0" | version u32 | segment_length f64 | merge_boundary f64
//! | flags u8 (bit 0 speed, bit 1 accel) | n_tracks u64
//! per track: vehicle_id u64 | length f64 | width f64 | class i64 (i64::MIN = none)
//!            | n u64 | frame i64×n | t f64×n | y f64×n | lane u32×n
//!            | speed f64×n | accel f64×n | preceding u64×n (0 = none)
//!            | headway f64×n (NaN = none)
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use carfollow::ingest::{Dataset, TrajectoryPoint, VehicleTrack};

use crate::error::CliError;

pub const MAGIC: &[u8; 8] = b"CFTRAJ\0\0";
pub const VERSION: u32 = 1;

pub fn write_cache<W: Write>(dataset: &Dataset, out: W) -> io::Result<()> {
    let mut w = BufWriter::new(out);
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_f64::<LE>(dataset.segment_length)?;
    w.write_f64::<LE>(dataset.merge_boundary_y)?;
    w.write_u8(dataset.has_speed as u8 | (dataset.has_accel as u8) << 1)?;
    w.write_u64::<LE>(dataset.vehicle_count() as u64)?;
    for track in dataset.tracks() {
        let pts = track.points();
        w.write_u64::<LE>(track.vehicle_id)?;
        w.write_f64::<LE>(track.length)?;
        w.write_f64::<LE>(track.width)?;
        w.write_i64::<LE>(track.reported_class.unwrap_or(i64::MIN))?;
        w.write_u64::<LE>(pts.len() as u64)?;
        for p in pts {
            w.write_i64::<LE>(p.frame)?;
        }
        for column in [|p: &TrajectoryPoint| p.t, |p: &TrajectoryPoint| p.y] {
            for p in pts {
                w.write_f64::<LE>(column(p))?;
            }
        }
        for p in pts {
            w.write_u32::<LE>(p.lane_id)?;
        }
        for column in [|p: &TrajectoryPoint| p.speed, |p: &TrajectoryPoint| p.accel] {
            for p in pts {
                w.write_f64::<LE>(column(p))?;
            }
        }
        for p in pts {
            w.write_u64::<LE>(p.preceding_id.unwrap_or(0))?;
        }
        for p in pts {
            w.write_f64::<LE>(p.space_headway.unwrap_or(f64::NAN))?;
        }
    }
    w.flush()
}

/// True when `path` starts with the cache magic.
pub fn is_cache(path: &Path) -> bool {
    let mut head = [0u8; 8];
    File::open(path).and_then(|mut f| f.read_exact(&mut head)).is_ok() && &head == MAGIC
}

fn format_error(path: &Path, what: impl std::fmt::Display) -> CliError {
    CliError::Format(format!("{}: corrupt cache: {what}", path.display()))
}

pub fn read_cache(path: &Path) -> Result<Dataset, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_cache_from(BufReader::new(file)).map_err(|e| match e.kind() {
        io::ErrorKind::InvalidData | io::ErrorKind::UnexpectedEof => format_error(path, e),
        _ => CliError::io(path, e),
    })
}

fn invalid(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

fn column<T>(r: &mut impl Read, n: usize, mut read: impl FnMut(&mut dyn Read) -> io::Result<T>) -> io::Result<Vec<T>> {
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        v.push(read(&mut *r)?);
    }
    Ok(v)
}

pub fn read_cache_from<R: Read>(mut r: R) -> io::Result<Dataset> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(invalid("not a trajectory cache".into()));
    }
    let version = r.read_u32::<LE>()?;
    if version != VERSION {
        return Err(invalid(format!("cache version {version}, expected {VERSION}")));
    }
    let segment_length = r.read_f64::<LE>()?;
    let merge_boundary = r.read_f64::<LE>()?;
    let flags = r.read_u8()?;
    let n_tracks = r.read_u64::<LE>()?;
    let mut tracks = Vec::new();
    for _ in 0..n_tracks {
        let vehicle_id = r.read_u64::<LE>()?;
        let length = r.read_f64::<LE>()?;
        let width = r.read_f64::<LE>()?;
        let class = r.read_i64::<LE>()?;
        let n = usize::try_from(r.read_u64::<LE>()?).map_err(|_| invalid("track too long".into()))?;
        if n > 1 << 32 {
            return Err(invalid(format!("implausible point count {n}")));
        }
        let frame = column(&mut r, n, |r| r.read_i64::<LE>())?;
        let t = column(&mut r, n, |r| r.read_f64::<LE>())?;
        let y = column(&mut r, n, |r| r.read_f64::<LE>())?;
        let lane = column(&mut r, n, |r| r.read_u32::<LE>())?;
        let speed = column(&mut r, n, |r| r.read_f64::<LE>())?;
        let accel = column(&mut r, n, |r| r.read_f64::<LE>())?;
        let preceding = column(&mut r, n, |r| r.read_u64::<LE>())?;
        let headway = column(&mut r, n, |r| r.read_f64::<LE>())?;
        let points = (0..n)
            .map(|i| TrajectoryPoint {
                vehicle_id,
                frame: frame[i],
                t: t[i],
                y: y[i],
                lane_id: lane[i],
                speed: speed[i],
                accel: accel[i],
                preceding_id: (preceding[i] != 0).then_some(preceding[i]),
                space_headway: (!headway[i].is_nan()).then_some(headway[i]),
            })
            .collect();
        let mut track = VehicleTrack::new(vehicle_id, length, width, points).map_err(|e| invalid(e.to_string()))?;
        track.reported_class = (class != i64::MIN).then_some(class);
        tracks.push(track);
    }
    let mut dataset = Dataset::new(tracks).with_geometry(segment_length, merge_boundary);
    dataset.has_speed = flags & 1 != 0;
    dataset.has_accel = flags & 2 != 0;
    Ok(dataset)
}

pub fn write_cache_file(dataset: &Dataset, path: &Path) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    write_cache(dataset, file).map_err(|e| CliError::io(path, e))
}
