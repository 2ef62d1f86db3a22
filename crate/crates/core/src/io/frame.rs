use std::path::Path;

use super::FrameError;
use crate::fluid::{FluidState, StepReport};
use crate::geom::Vec3;

const MAGIC: &[u8; 4] = b"POTF";
pub const FRAME_VERSION: u32 = 1;

/// One saved simulation step.
///
/// Layout (little endian): magic `POTF`, version `u32`, `n: u64`,
/// `step: u64`, `time: f64`, then positions (`3n`), velocities (`3n`),
/// weights, volumes, free-surface areas and phase indices (`n` each) as
/// `f64`, then `worst_rel_error: f64`, `newton_iters: u64`,
/// `wall_ms: f64`, and a CRC-32 of everything before it.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub step: u64,
    pub time: f64,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub psi: Vec<f64>,
    pub volumes: Vec<f64>,
    pub areas: Vec<f64>,
    pub phase: Vec<u32>,
    pub worst_rel_error: f64,
    pub newton_iters: u64,
    pub wall_ms: f64,
}

impl FrameRecord {
    /// Snapshot of a state after a step. `wall_ms` is stored only when
    /// `with_wall_time` is set.
    pub fn from_state(state: &FluidState, report: &StepReport, with_wall_time: bool) -> Self {
        FrameRecord {
            step: state.step,
            time: state.time,
            positions: state.positions.clone(),
            velocities: state.velocities.clone(),
            psi: state.psi.clone(),
            volumes: state.cells.iter().map(|c| c.volume).collect(),
            areas: state.cells.iter().map(|c| c.free_surface_area).collect(),
            phase: state.phase.clone(),
            worst_rel_error: report.worst_rel_error,
            newton_iters: report.newton_iters as u64,
            wall_ms: if with_wall_time { report.wall.as_secs_f64() * 1e3 } else { 0.0 },
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn check_lengths(&self) -> Result<(), FrameError> {
        let n = self.len();
        let lens = [
            self.velocities.len(),
            self.psi.len(),
            self.volumes.len(),
            self.areas.len(),
            self.phase.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(FrameError::Malformed(format!("array lengths {lens:?} differ from n = {n}")));
        }
        Ok(())
    }

    pub fn encoded_len(n: usize) -> usize {
        4 + 4 + 8 + 8 + 8 + 8 * (10 * n) + 8 + 8 + 8 + 4
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, FrameError> {
        self.check_lengths()?;
        let n = self.len();
        let mut b = Vec::with_capacity(Self::encoded_len(n));
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&FRAME_VERSION.to_le_bytes());
        b.extend_from_slice(&(n as u64).to_le_bytes());
        b.extend_from_slice(&self.step.to_le_bytes());
        b.extend_from_slice(&self.time.to_le_bytes());
        let mut put = |x: f64| b.extend_from_slice(&x.to_le_bytes());
        for v in self.positions.iter().chain(&self.velocities) {
            put(v.x);
            put(v.y);
            put(v.z);
        }
        for &x in self.psi.iter().chain(&self.volumes).chain(&self.areas) {
            put(x);
        }
        for &p in &self.phase {
            put(p as f64);
        }
        put(self.worst_rel_error);
        b.extend_from_slice(&self.newton_iters.to_le_bytes());
        b.extend_from_slice(&self.wall_ms.to_le_bytes());
        let crc = crc32fast::hash(&b);
        b.extend_from_slice(&crc.to_le_bytes());
        Ok(b)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FrameError> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(FrameError::BadMagic);
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FRAME_VERSION {
            return Err(FrameError::UnsupportedVersion(version));
        }
        let (body, tail) = bytes.split_at(bytes.len().saturating_sub(4).max(8));
        let stored = (tail.len() == 4).then(|| u32::from_le_bytes(tail.try_into().unwrap()));
        let computed = crc32fast::hash(body);
        if stored != Some(computed) {
            return Err(FrameError::Crc { stored, computed });
        }
        let mut r = Reader { b: body, at: 8 };
        let n = r.u64()? as usize;
        if bytes.len() != Self::encoded_len(n) {
            return Err(FrameError::Malformed(format!("{} bytes for n = {n}", bytes.len())));
        }
        let step = r.u64()?;
        let time = r.f64()?;
        let vecs = |r: &mut Reader| -> Result<Vec<Vec3>, FrameError> {
            (0..n).map(|_| Ok(Vec3::new(r.f64()?, r.f64()?, r.f64()?))).collect()
        };
        let positions = vecs(&mut r)?;
        let velocities = vecs(&mut r)?;
        let scalars = |r: &mut Reader| -> Result<Vec<f64>, FrameError> { (0..n).map(|_| r.f64()).collect() };
        let psi = scalars(&mut r)?;
        let volumes = scalars(&mut r)?;
        let areas = scalars(&mut r)?;
        let phase = scalars(&mut r)?
            .into_iter()
            .map(|p| {
                if p >= 0.0 && p <= u32::MAX as f64 && p.fract() == 0.0 {
                    Ok(p as u32)
                } else {
                    Err(FrameError::Malformed(format!("phase index {p}")))
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(FrameRecord {
            step,
            time,
            positions,
            velocities,
            psi,
            volumes,
            areas,
            phase,
            worst_rel_error: r.f64()?,
            newton_iters: r.u64()?,
            wall_ms: r.f64()?,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), FrameError> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, FrameError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    b: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take8(&mut self) -> Result<[u8; 8], FrameError> {
        let s = self
            .b
            .get(self.at..self.at + 8)
            .ok_or_else(|| FrameError::Malformed("unexpected end of data".into()))?;
        self.at += 8;
        Ok(s.try_into().unwrap())
    }

    fn u64(&mut self) -> Result<u64, FrameError> {
        Ok(u64::from_le_bytes(self.take8()?))
    }

    fn f64(&mut self) -> Result<f64, FrameError> {
        Ok(f64::from_le_bytes(self.take8()?))
    }
}
