//! Flat binary parameter layout, little-endian:
//!
//! ```text
//! u32 layer_count
//! (u32 out, u32 in) * layer_count
//! f64 parameters, per layer: weight row-major, then bias
//! ```

use std::io::{Read, Write};

use super::Mlp;
use crate::error::{Error, Result};

pub fn write_params<W: Write>(net: &Mlp, mut w: W) -> Result<()> {
    let shapes = net.shapes();
    w.write_all(&(shapes.len() as u32).to_le_bytes())?;
    for (out, inp) in &shapes {
        w.write_all(&(*out as u32).to_le_bytes())?;
        w.write_all(&(*inp as u32).to_le_bytes())?;
    }
    for p in net.flat_params() {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// Loads parameters into `net`, which must already have the stored shapes.
/// Activations are part of the architecture and are not serialized.
pub fn read_params<R: Read>(net: &mut Mlp, mut r: R) -> Result<()> {
    let count = read_u32(&mut r)? as usize;
    let mut shapes = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let out = read_u32(&mut r)? as usize;
        let inp = read_u32(&mut r)? as usize;
        shapes.push((out, inp));
    }
    if shapes != net.shapes() {
        return Err(Error::Format(format!(
            "stored shapes {shapes:?} do not match network {:?}",
            net.shapes()
        )));
    }
    let mut params = vec![0.0; net.num_params()];
    let mut buf = [0u8; 8];
    for p in &mut params {
        r.read_exact(&mut buf)?;
        *p = f64::from_le_bytes(buf);
    }
    net.set_flat_params(&params)
}
