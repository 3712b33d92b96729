//! Little-endian binary trajectory files.
//!
//! Layout: `"TROM"`, version `u32`, particle count `u64`, frame count `u64`,
//! frame interval `f64`, `dx` `f64`, grid dims `3 × u32`; then per frame the `f32`
//! arrays `x (N×3)`, `v (N×3)`, `F (N×9, row-major)` and the indenter pose
//! `[px, py, pz, qw, qx, qy, qz]`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::indenter::Pose;
use super::scenario::Trajectory;
use super::MpmError;

const MAGIC: &[u8; 4] = b"TROM";
const VERSION: u32 = 1;

/// One stored frame, widened back to `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub x: Vec<Vector3<f64>>,
    pub v: Vec<Vector3<f64>>,
    pub f: Vec<Matrix3<f64>>,
    pub pose: Pose,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryFile {
    pub frame_interval: f64,
    pub dx: f64,
    pub grid_dims: [usize; 3],
    pub frames: Vec<FrameRecord>,
}

impl TrajectoryFile {
    pub fn particle_count(&self) -> usize {
        self.frames.first().map_or(0, |f| f.x.len())
    }

    pub fn from_trajectory(t: &Trajectory) -> Self {
        TrajectoryFile {
            frame_interval: t.frame_interval,
            dx: t.dx,
            grid_dims: t.grid_dims,
            frames: t
                .frames
                .iter()
                .zip(&t.poses)
                .map(|(s, pose)| FrameRecord {
                    x: s.particles.iter().map(|p| p.x).collect(),
                    v: s.particles.iter().map(|p| p.v).collect(),
                    f: s.particles.iter().map(|p| p.f).collect(),
                    pose: *pose,
                })
                .collect(),
        }
    }
}

fn put_f32s(buf: &mut Vec<u8>, values: impl IntoIterator<Item = f64>) {
    for v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn write_trajectory_file(path: &Path, t: &TrajectoryFile) -> Result<(), MpmError> {
    let n = t.particle_count();
    if t.frames.iter().any(|f| f.x.len() != n || f.v.len() != n || f.f.len() != n) {
        return Err(MpmError::Format("frames disagree on particle count".into()));
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(n as u64).to_le_bytes())?;
    out.write_all(&(t.frames.len() as u64).to_le_bytes())?;
    out.write_all(&t.frame_interval.to_le_bytes())?;
    out.write_all(&t.dx.to_le_bytes())?;
    for d in t.grid_dims {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(n * 15 * 4 + 28);
    for frame in &t.frames {
        buf.clear();
        put_f32s(&mut buf, frame.x.iter().flat_map(|x| x.iter().copied().collect::<Vec<_>>()));
        put_f32s(&mut buf, frame.v.iter().flat_map(|v| v.iter().copied().collect::<Vec<_>>()));
        put_f32s(
            &mut buf,
            frame
                .f
                .iter()
                .flat_map(|f| (0..9).map(move |k| f[(k / 3, k % 3)])),
        );
        put_f32s(&mut buf, frame.pose.to_array());
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_trajectory(path: &Path, t: &Trajectory) -> Result<(), MpmError> {
    write_trajectory_file(path, &TrajectoryFile::from_trajectory(t))
}

fn take<const K: usize>(r: &mut impl Read) -> Result<[u8; K], MpmError> {
    let mut b = [0u8; K];
    r.read_exact(&mut b).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            MpmError::Format("file truncated".into())
        } else {
            MpmError::Io(e)
        }
    })?;
    Ok(b)
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryFile, MpmError> {
    let mut r = BufReader::new(File::open(path)?);
    if &take::<4>(&mut r)? != MAGIC {
        return Err(MpmError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != VERSION {
        return Err(MpmError::Format(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(take(&mut r)?) as usize;
    let count = u64::from_le_bytes(take(&mut r)?) as usize;
    let frame_interval = f64::from_le_bytes(take(&mut r)?);
    let dx = f64::from_le_bytes(take(&mut r)?);
    let mut grid_dims = [0usize; 3];
    for d in &mut grid_dims {
        *d = u32::from_le_bytes(take(&mut r)?) as usize;
    }
    let floats_per_frame = n
        .checked_mul(15)
        .and_then(|v| v.checked_add(7))
        .ok_or_else(|| MpmError::Format("particle count overflows".into()))?;
    let mut raw = vec![0u8; floats_per_frame * 4];
    let mut frames = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        r.read_exact(&mut raw).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                MpmError::Format("file truncated".into())
            } else {
                MpmError::Io(e)
            }
        })?;
        let vals: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let (xs, rest) = vals.split_at(3 * n);
        let (vs, rest) = rest.split_at(3 * n);
        let (fs, pose) = rest.split_at(9 * n);
        frames.push(FrameRecord {
            x: xs.chunks_exact(3).map(Vector3::from_column_slice).collect(),
            v: vs.chunks_exact(3).map(Vector3::from_column_slice).collect(),
            f: fs.chunks_exact(9).map(Matrix3::from_row_slice).collect(),
            pose: Pose::from_array(pose.try_into().expect("seven pose values")),
        });
    }
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(MpmError::Format("trailing bytes after last frame".into()));
    }
    Ok(TrajectoryFile {
        frame_interval,
        dx,
        grid_dims,
        frames,
    })
}
