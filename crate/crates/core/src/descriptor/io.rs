//! The SQDS binary descriptor file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic       4 bytes  "SQDS"
//! version     u32      1
//! count       u32      number of descriptors
//! dim         u32      values per descriptor
//! tag_len     u32      followed by tag_len bytes of UTF-8 source tag
//! values      count * dim f32, row-major
//! [names]     optional: u32 name count (== count), then per name
//!             u32 byte length + UTF-8 bytes
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{DescriptorError, DescriptorSet, LOAD_NORM_TOLERANCE};

pub const MAGIC: &[u8; 4] = b"SQDS";
pub const VERSION: u32 = 1;

fn truncated(section: &'static str) -> impl Fn(io::Error) -> DescriptorError {
    move |e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            DescriptorError::TruncatedFile(section)
        } else {
            DescriptorError::Io(e)
        }
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R, section: &'static str) -> Result<String, DescriptorError> {
    let len = r.read_u32::<LittleEndian>().map_err(truncated(section))? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(truncated(section))?;
    String::from_utf8(buf).map_err(|_| DescriptorError::BadUtf8(section))
}

pub fn write_descriptor_set<W: Write>(w: &mut W, set: &DescriptorSet) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(set.len() as u32)?;
    w.write_u32::<LittleEndian>(set.dim() as u32)?;
    write_str(w, set.source_tag())?;
    for &v in set.as_flat() {
        w.write_f32::<LittleEndian>(v)?;
    }
    if let Some(names) = set.frame_names() {
        w.write_u32::<LittleEndian>(names.len() as u32)?;
        for name in names {
            write_str(w, name)?;
        }
    }
    Ok(())
}

/// Parses an SQDS stream. Values are returned as stored; unit norm is not
/// checked here (see [`load_descriptor_file`]).
pub fn read_descriptor_set<R: Read>(r: &mut R) -> Result<DescriptorSet, DescriptorError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => DescriptorError::BadMagic { expected: "SQDS" },
        _ => DescriptorError::Io(e),
    })?;
    if &magic != MAGIC {
        return Err(DescriptorError::BadMagic { expected: "SQDS" });
    }
    let version = r.read_u32::<LittleEndian>().map_err(truncated("header"))?;
    if version != VERSION {
        return Err(DescriptorError::UnsupportedVersion(version));
    }
    let count = r.read_u32::<LittleEndian>().map_err(truncated("header"))? as usize;
    let dim = r.read_u32::<LittleEndian>().map_err(truncated("header"))? as usize;
    if dim == 0 {
        return Err(DescriptorError::DimMismatch {
            expected: 1,
            actual: 0,
        });
    }
    let tag = read_str(r, "source tag")?;

    let total = count
        .checked_mul(dim)
        .ok_or(DescriptorError::TruncatedFile("values"))?;
    // Read row by row so a lying header cannot force a huge allocation up front.
    let mut data = Vec::with_capacity(total.min(1 << 24));
    let mut row = vec![0f32; dim];
    for _ in 0..count {
        r.read_f32_into::<LittleEndian>(&mut row)
            .map_err(truncated("values"))?;
        data.extend_from_slice(&row);
    }

    let names = match r.read_u32::<LittleEndian>() {
        Ok(n) => {
            let n = n as usize;
            if n != count {
                return Err(DescriptorError::DimMismatch {
                    expected: count,
                    actual: n,
                });
            }
            let mut names = Vec::with_capacity(n);
            for _ in 0..n {
                names.push(read_str(r, "name table")?);
            }
            Some(names)
        }
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => None,
        Err(e) => return Err(e.into()),
    };

    let set = DescriptorSet::from_rows(dim, data, tag)?;
    match names {
        Some(names) => set.with_frame_names(names),
        None => Ok(set),
    }
}

pub fn save_descriptor_file(set: &DescriptorSet, path: impl AsRef<Path>) -> Result<(), DescriptorError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_descriptor_set(&mut w, set)?;
    w.flush()?;
    Ok(())
}

/// Loads an SQDS file and checks every row is unit-norm within 1e-6.
pub fn load_descriptor_file(path: impl AsRef<Path>) -> Result<DescriptorSet, DescriptorError> {
    let mut r = BufReader::new(File::open(path)?);
    let set = read_descriptor_set(&mut r)?;
    set.check_unit_norm(LOAD_NORM_TOLERANCE)?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{normalize, CUSTOM_TAG};

    fn sample_set() -> DescriptorSet {
        let ds: Vec<_> = [[1.0, 2.0, 3.0, 4.0], [0.0, 1.0, 0.0, 0.0], [-1.0, 0.5, 0.25, 2.0]]
            .iter()
            .map(|r| normalize(r).unwrap())
            .collect();
        DescriptorSet::from_descriptors(&ds, CUSTOM_TAG).unwrap()
    }

    fn encode(set: &DescriptorSet) -> Vec<u8> {
        let mut buf = Vec::new();
        write_descriptor_set(&mut buf, set).unwrap();
        buf
    }

    #[test]
    fn round_trip_three_by_four() {
        let set = sample_set();
        let back = read_descriptor_set(&mut encode(&set).as_slice()).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.len(), 3);
        assert_eq!(back.dim(), 4);
    }

    #[test]
    fn round_trip_with_names_through_file() {
        let set = sample_set()
            .with_frame_names(vec!["a.pgm".into(), "b.pgm".into(), "c.pgm".into()])
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.sqds");
        save_descriptor_file(&set, &path).unwrap();
        assert_eq!(load_descriptor_file(&path).unwrap(), set);
    }

    #[test]
    fn header_layout_is_fixed() {
        let buf = encode(&sample_set());
        assert_eq!(&buf[0..4], b"SQDS");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(buf[16..20].try_into().unwrap()), 6);
        assert_eq!(&buf[20..26], b"custom");
        assert_eq!(buf.len(), 26 + 3 * 4 * 4);
    }

    #[test]
    fn wrong_magic() {
        let mut buf = encode(&sample_set());
        buf[0] = b'X';
        assert!(matches!(
            read_descriptor_set(&mut buf.as_slice()),
            Err(DescriptorError::BadMagic { .. })
        ));
    }

    #[test]
    fn wrong_version() {
        let mut buf = encode(&sample_set());
        buf[4] = 2;
        assert!(matches!(
            read_descriptor_set(&mut buf.as_slice()),
            Err(DescriptorError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn declared_count_exceeds_rows() {
        let dim = 2;
        let rows: Vec<_> = (0..5).map(|i| normalize(&[1.0, i as f64]).unwrap()).collect();
        let set = DescriptorSet::from_descriptors(&rows, CUSTOM_TAG).unwrap();
        let mut buf = encode(&set);
        buf[8..12].copy_from_slice(&10u32.to_le_bytes());
        assert_eq!(buf.len(), 26 + 5 * dim * 4);
        assert!(matches!(
            read_descriptor_set(&mut buf.as_slice()),
            Err(DescriptorError::TruncatedFile("values"))
        ));
    }

    #[test]
    fn name_table_count_must_match() {
        let set = sample_set()
            .with_frame_names(vec!["a".into(), "b".into(), "c".into()])
            .unwrap();
        let mut buf = encode(&set);
        let names_at = 26 + 3 * 4 * 4;
        buf[names_at..names_at + 4].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            read_descriptor_set(&mut buf.as_slice()),
            Err(DescriptorError::DimMismatch { expected: 3, actual: 2 })
        ));
    }

    #[test]
    fn loader_rejects_unnormalized_rows() {
        let set = DescriptorSet::from_rows(2, vec![1.0, 1.0], CUSTOM_TAG).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.sqds");
        save_descriptor_file(&set, &path).unwrap();
        assert!(matches!(
            load_descriptor_file(&path),
            Err(DescriptorError::NotNormalized { row: 0, .. })
        ));
    }
}
