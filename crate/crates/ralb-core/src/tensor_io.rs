//! Image tensors and the RTNS raw-tensor file format.
//!
//! RTNS is a codec-free container: magic `RTNS`, u32 rank, u32 dims, then
//! the payload as little-endian f32. Images are H×W×C with every element in
//! [0, 1].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array3;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RTNS";

/// H×W×C pixel array in [0,1]; the attack/optimization variable.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    data: Array3<f32>,
}

impl ImageTensor {
    /// Wrap pixel data, enforcing the [0,1] range invariant.
    pub fn new(data: Array3<f32>) -> Result<Self> {
        if data.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Domain("pixel outside [0,1]".into()));
        }
        Ok(Self { data })
    }

    /// Wrap data that is known to be clamped already (debug-checked).
    pub fn from_clamped(data: Array3<f32>) -> Self {
        debug_assert!(data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        Self { data }
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    /// (height, width, channels)
    pub fn dims(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let (h, w, c) = self.dims();
        let flat: Vec<f32> = self.data.iter().copied().collect();
        write_rtns(path, &[h, w, c], &flat)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (dims, data) = read_rtns(path)?;
        if dims.len() != 3 {
            return Err(Error::Data(format!(
                "expected a rank-3 image tensor, got rank {} in {}",
                dims.len(),
                path.display()
            )));
        }
        let arr = Array3::from_shape_vec((dims[0], dims[1], dims[2]), data)
            .map_err(|e| Error::Data(format!("bad tensor shape: {e}")))?;
        ImageTensor::new(arr)
    }
}

/// Write a raw tensor file.
pub fn write_rtns(path: &Path, dims: &[usize], data: &[f32]) -> Result<()> {
    let expected: usize = dims.iter().product();
    if expected != data.len() {
        return Err(Error::Argument(format!(
            "dims {:?} imply {} elements, got {}",
            dims,
            expected,
            data.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a raw tensor file.
pub fn read_rtns(path: &Path) -> Result<(Vec<usize>, Vec<f32>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Data(format!("{} is not an RTNS file", path.display())));
    }
    let rank = read_u32(&mut r)? as usize;
    if rank == 0 || rank > 8 {
        return Err(Error::Data(format!("implausible tensor rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(read_u32(&mut r)? as usize);
    }
    let n: usize = dims.iter().product();
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok((dims, data))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn image_rejects_out_of_range() {
        let bad = Array3::from_elem((4, 4, 3), 1.5);
        assert!(ImageTensor::new(bad).is_err());
    }

    #[test]
    fn rtns_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.rtns");
        let data: Vec<f32> = (0..24).map(|i| i as f32 / 24.0).collect();
        write_rtns(&path, &[2, 3, 4], &data).unwrap();
        let (dims, back) = read_rtns(&path).unwrap();
        assert_eq!(dims, vec![2, 3, 4]);
        assert_eq!(back, data);
    }

    #[test]
    fn image_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.rtns");
        let data = Array3::from_shape_fn((8, 8, 3), |(h, w, c)| {
            ((h * 31 + w * 7 + c) % 256) as f32 / 255.0
        });
        let img = ImageTensor::new(data).unwrap();
        img.save(&path).unwrap();
        let back = ImageTensor::load(&path).unwrap();
        assert_eq!(img, back);
    }
}
