use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Result, Shape, Tensor, TensorError};

pub const TENSOR_MAGIC: &[u8; 4] = b"CIRT";
const VERSION: u32 = 1;

/// Writes `CIRT | version | rank=3 | C H W | f32 data`, all little-endian.
pub fn write_tensor_to<W: Write>(mut w: W, tensor: &Tensor) -> Result<()> {
    let s = tensor.shape();
    w.write_all(TENSOR_MAGIC)?;
    for v in [VERSION, 3, s.channels as u32, s.height as u32, s.width as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in tensor.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a tensor file. Rank 2 is read as a single channel, rank 4 requires a batch of one.
pub fn read_tensor_from<R: Read>(mut r: R) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TENSOR_MAGIC {
        return Err(TensorError::Format(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(TensorError::Format(format!("unsupported version {version}")));
    }
    let rank = read_u32(&mut r)? as usize;
    if !(2..=4).contains(&rank) {
        return Err(TensorError::Format(format!("unsupported rank {rank}")));
    }
    let dims = (0..rank)
        .map(|_| read_u32(&mut r).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let (c, h, w) = match dims.as_slice() {
        [h, w] => (1, *h, *w),
        [c, h, w] => (*c, *h, *w),
        [1, c, h, w] => (*c, *h, *w),
        [n, ..] => return Err(TensorError::Format(format!("batch size {n} is not supported"))),
        [] => unreachable!(),
    };
    let shape = Shape::new(c, h, w).map_err(|e| TensorError::Format(e.to_string()))?;
    let mut bytes = vec![0u8; shape.len() * 4];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Tensor::new(shape, data)
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    write_tensor_to(BufWriter::new(File::create(path)?), tensor)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    read_tensor_from(BufReader::new(File::open(path)?))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_stable() {
        let t = Tensor::new(Shape::new(1, 1, 2).unwrap(), vec![1.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        write_tensor_to(&mut buf, &t).unwrap();
        assert_eq!(&buf[..4], b"CIRT");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &3u32.to_le_bytes());
        assert_eq!(buf.len(), 4 + 4 * 5 + 8);
        assert_eq!(&buf[28..32], &(-2.5f32).to_le_bytes());
        assert_eq!(read_tensor_from(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn reads_rank4_with_unit_batch() {
        let mut buf = Vec::new();
        buf.extend_from_slice(b"CIRT");
        for v in [1u32, 4, 1, 2, 1, 1] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&3.0f32.to_le_bytes());
        buf.extend_from_slice(&4.0f32.to_le_bytes());
        let t = read_tensor_from(buf.as_slice()).unwrap();
        assert_eq!(t.shape(), Shape::new(2, 1, 1).unwrap());
        assert_eq!(t.data(), &[3.0, 4.0]);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(matches!(read_tensor_from(&b"XXXX\x01\0\0\0"[..]), Err(TensorError::Format(_))));
        let t = Tensor::zeros(Shape::new(1, 2, 2).unwrap());
        let mut buf = Vec::new();
        write_tensor_to(&mut buf, &t).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(matches!(read_tensor_from(buf.as_slice()), Err(TensorError::Io(_))));
    }
}
