use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::tensor::Tensor;
use crate::{AutodiffError, Result};

const MAGIC: &[u8; 4] = b"NSF1";

/// Named-tensor checkpoint container.
///
/// File layout: magic `NSF1`, then per-tensor records of
/// `u32 name_len | name bytes | u32 rank | u32 dims[rank] | f32 data`,
/// all little-endian, until end of file. Entry order is preserved.
#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    entries: Vec<(String, Vec<usize>, Vec<f32>)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _, _)| n.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _, _)| n == name)
    }

    pub fn insert(&mut self, name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) {
        let name = name.into();
        assert_eq!(
            dims.iter().product::<usize>(),
            data.len(),
            "dims/data mismatch for '{name}'"
        );
        assert!(!self.contains(&name), "duplicate checkpoint entry '{name}'");
        self.entries.push((name, dims, data));
    }

    pub fn insert_tensor(&mut self, name: impl Into<String>, t: &Tensor) {
        self.insert(name, vec![t.rows, t.cols], t.data.clone());
    }

    pub fn get(&self, name: &str) -> Option<(&[usize], &[f32])> {
        self.entries
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, d, v)| (d.as_slice(), v.as_slice()))
    }

    /// Fetches an entry as a rank-<=2 tensor (rank-1 entries become rows).
    pub fn tensor(&self, name: &str) -> Result<Tensor> {
        let (dims, data) = self
            .get(name)
            .ok_or_else(|| AutodiffError::Checkpoint(format!("missing entry '{name}'")))?;
        let (rows, cols) = match dims {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            other => {
                return Err(AutodiffError::Checkpoint(format!(
                    "entry '{name}' has rank {} > 2",
                    other.len()
                )))
            }
        };
        Ok(Tensor::from_vec(rows, cols, data.to_vec()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path.as_ref())?);
        w.write_all(MAGIC)?;
        for (name, dims, data) in &self.entries {
            w.write_u32::<LittleEndian>(name.len() as u32)?;
            w.write_all(name.as_bytes())?;
            w.write_u32::<LittleEndian>(dims.len() as u32)?;
            for &d in dims {
                w.write_u32::<LittleEndian>(d as u32)?;
            }
            for &v in data {
                w.write_f32::<LittleEndian>(v)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path.as_ref())?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(AutodiffError::Checkpoint(format!(
                "bad magic {magic:?}, expected {MAGIC:?}"
            )));
        }
        let mut out = Self::new();
        loop {
            let name_len = match r.read_u32::<LittleEndian>() {
                Ok(v) => v as usize,
                Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(e.into()),
            };
            if name_len > 4096 {
                return Err(AutodiffError::Checkpoint(format!(
                    "implausible name length {name_len}"
                )));
            }
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| AutodiffError::Checkpoint("non-utf8 tensor name".into()))?;
            let rank = r.read_u32::<LittleEndian>()? as usize;
            if rank > 4 {
                return Err(AutodiffError::Checkpoint(format!(
                    "implausible rank {rank} for '{name}'"
                )));
            }
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.read_u32::<LittleEndian>()? as usize);
            }
            let count: usize = dims.iter().product();
            let mut data = vec![0.0f32; count];
            r.read_f32_into::<LittleEndian>(&mut data)?;
            out.insert(name, dims, data);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_order_and_data() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.nsf1");
        let mut ck = Checkpoint::new();
        ck.insert("b/second", vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        ck.insert("a/first", vec![3], vec![-1.0, 0.5, 9.0]);
        ck.save(&path).unwrap();

        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(
            back.names().collect::<Vec<_>>(),
            vec!["b/second", "a/first"]
        );
        let (dims, data) = back.get("a/first").unwrap();
        assert_eq!(dims, &[3]);
        assert_eq!(data, &[-1.0, 0.5, 9.0]);
        let t = back.tensor("b/second").unwrap();
        assert_eq!((t.rows, t.cols), (2, 2));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.nsf1");
        std::fs::write(&path, b"JUNKdata").unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }

    #[test]
    fn file_starts_with_magic_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.nsf1");
        Checkpoint::new().save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"NSF1");
    }
}
