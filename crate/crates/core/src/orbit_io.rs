//! Orbit generation and the SRBL binary orbit format.
//!
//! Layout (little endian): `SRBL`, version u32, d u32, N u32, ε f64, coupling
//! id as u32 length plus UTF-8 bytes, then frames of 2|V_N| f64 angles
//! (ψ¹, ψ² per site) until end of file.

use crate::coupling::Coupling;
use crate::error::{Result, SrbError};
use crate::lattice::{angle_to_fixed, cat_fixed, fixed_to_angle, step_s_eps, Lattice, LatticeState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};

pub const MAGIC: &[u8; 4] = b"SRBL";
pub const VERSION: u32 = 1;

/// ε = 0 orbits live on the grid of 2^{−50} turns, where f64 angles convert
/// back to the fixed-point value without loss.
pub const GRID_SHIFT: u32 = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitHeader {
    pub lattice: Lattice,
    pub eps: f64,
    pub coupling: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Orbit {
    pub header: OrbitHeader,
    pub frames: Vec<Vec<[f64; 2]>>,
}

impl Orbit {
    pub fn state(&self, t: usize) -> LatticeState {
        LatticeState { lattice: self.header.lattice, psi: self.frames[t].clone() }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

pub fn quantize(k: u64) -> u64 {
    let half = 1u64 << (GRID_SHIFT - 1);
    (k.wrapping_add(half) >> GRID_SHIFT) << GRID_SHIFT
}

/// `steps` frames of S_ε after `burn_in`; ε = 0 runs exactly on the grid.
pub fn simulate(lat: Lattice, coupling: &dyn Coupling, eps: f64, steps: usize, burn_in: usize, seed: u64) -> Orbit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = LatticeState::random(lat, &mut rng);
    let header = OrbitHeader { lattice: lat, eps, coupling: coupling.id() };
    let mut frames = Vec::with_capacity(steps);
    if eps == 0.0 {
        let mut k: Vec<[u64; 2]> = start.psi.iter().map(|p| [quantize(angle_to_fixed(p[0])), quantize(angle_to_fixed(p[1]))]).collect();
        for t in 0..burn_in + steps {
            if t >= burn_in {
                frames.push(k.iter().map(|q| [fixed_to_angle(q[0]), fixed_to_angle(q[1])]).collect());
            }
            k.iter_mut().for_each(|q| *q = cat_fixed(*q));
        }
    } else {
        let mut psi = start.psi;
        let mut next = Vec::with_capacity(psi.len());
        for t in 0..burn_in + steps {
            if t >= burn_in {
                frames.push(psi.clone());
            }
            step_s_eps(&lat, &psi, &mut next, coupling, eps);
            std::mem::swap(&mut psi, &mut next);
        }
    }
    Orbit { header, frames }
}

/// Frames t where some site breaks ψ_{t+1} = Aψ_t on the grid.
pub fn free_recurrence_violations(orbit: &Orbit) -> Vec<usize> {
    let fixed = |p: &[f64; 2]| [quantize(angle_to_fixed(p[0])), quantize(angle_to_fixed(p[1]))];
    let mut bad = Vec::new();
    for t in 0..orbit.frames.len().saturating_sub(1) {
        let ok = orbit.frames[t].iter().zip(&orbit.frames[t + 1]).all(|(a, b)| {
            let ka = fixed(a);
            let kb = fixed(b);
            let exact_a = [fixed_to_angle(ka[0]), fixed_to_angle(ka[1])] == *a;
            exact_a && cat_fixed(ka) == kb
        });
        if !ok {
            bad.push(t);
        }
    }
    bad
}

pub fn write_orbit<W: Write>(orbit: &Orbit, mut w: W) -> Result<()> {
    let h = &orbit.header;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(h.lattice.d as u32).to_le_bytes())?;
    w.write_all(&(h.lattice.n as u32).to_le_bytes())?;
    w.write_all(&h.eps.to_le_bytes())?;
    w.write_all(&(h.coupling.len() as u32).to_le_bytes())?;
    w.write_all(h.coupling.as_bytes())?;
    let mut buf = Vec::with_capacity(16 * h.lattice.len());
    for f in &orbit.frames {
        buf.clear();
        for p in f {
            buf.extend_from_slice(&p[0].to_le_bytes());
            buf.extend_from_slice(&p[1].to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn take<R: Read, const K: usize>(r: &mut R, what: &str) -> Result<[u8; K]> {
    let mut b = [0u8; K];
    r.read_exact(&mut b).map_err(|_| SrbError::OrbitFormat(format!("truncated header at {what}")))?;
    Ok(b)
}

pub fn read_orbit<R: Read>(mut r: R) -> Result<Orbit> {
    let magic: [u8; 4] = take(&mut r, "magic")?;
    if &magic != MAGIC {
        return Err(SrbError::OrbitFormat("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut r, "version")?);
    if version != VERSION {
        return Err(SrbError::OrbitFormat(format!("unsupported version {version}")));
    }
    let d = u32::from_le_bytes(take(&mut r, "d")?) as usize;
    let n = u32::from_le_bytes(take(&mut r, "N")?) as usize;
    let lattice = Lattice::new(d, n).map_err(|e| SrbError::OrbitFormat(e.to_string()))?;
    let eps = f64::from_le_bytes(take(&mut r, "eps")?);
    let len = u32::from_le_bytes(take(&mut r, "coupling length")?) as usize;
    let mut id = vec![0u8; len];
    r.read_exact(&mut id).map_err(|_| SrbError::OrbitFormat("truncated coupling id".into()))?;
    let coupling = String::from_utf8(id).map_err(|_| SrbError::OrbitFormat("coupling id is not UTF-8".into()))?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    let frame = 16 * lattice.len();
    if body.len() % frame != 0 {
        return Err(SrbError::OrbitFormat(format!("{} trailing bytes after the last frame", body.len() % frame)));
    }
    let frames = body
        .chunks_exact(frame)
        .map(|c| {
            c.chunks_exact(16)
                .map(|s| {
                    let a = f64::from_le_bytes(s[..8].try_into().unwrap());
                    let b = f64::from_le_bytes(s[8..].try_into().unwrap());
                    [a, b]
                })
                .collect()
        })
        .collect();
    Ok(Orbit { header: OrbitHeader { lattice, eps, coupling }, frames })
}
