//! Little-endian binary dataset files.
//!
//! Covariances (`SPDC`): magic, version `u32 = 1`, dim `u32`, count `u32`, then
//! per record subject `u32`, label `u32`, and `dim·dim` `f64` row-major.
//!
//! Epochs (`EPOC`): magic, version `u32 = 1`, channels `u32`, count `u32`, then
//! per record subject `u32`, label `u32`, samples `T: u32`, and `C·T` `f64` row-major.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{CovItem, CovarianceSet, Epoch, EpochSet, SubjectId, MAX_CLASSES};
use crate::error::{Error, Result};
use crate::spd::{Mat, SpdMatrix};

const COV_MAGIC: &[u8; 4] = b"SPDC";
const EPOCH_MAGIC: &[u8; 4] = b"EPOC";
const VERSION: u32 = 1;

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    pub(crate) record: Option<usize>,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self {
            bytes,
            pos: 0,
            record: None,
        }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn fail(&self, at: usize, message: impl Into<String>) -> Error {
        Error::format(at as u64, self.record, message)
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(
                self.pos,
                format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let m = self.take(4, "magic")?;
        if m != expected {
            return Err(self.fail(0, format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub(crate) fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| self.fail(self.pos, format!("{what} is too large")))?;
        let b = self.take(len, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub(crate) fn bytes(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        self.take(n, what)
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(
                self.pos as u64,
                None,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }

    fn label(&mut self) -> Result<usize> {
        let at = self.pos;
        let label = self.u32("label")? as usize;
        if label >= MAX_CLASSES {
            return Err(self.fail(at, format!("label {label} out of range (max {})", MAX_CLASSES - 1)));
        }
        Ok(label)
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn u32_field(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Config(format!("{what} {v} does not fit in u32")))
}

pub(crate) fn row_major(m: &Mat) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

pub fn write_covariances(ds: &CovarianceSet) -> Result<Vec<u8>> {
    let d = ds.dim();
    let mut out = Vec::with_capacity(16 + ds.len() * (8 + 8 * d * d));
    out.extend_from_slice(COV_MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, u32_field(d, "dimension")?);
    put_u32(&mut out, u32_field(ds.len(), "record count")?);
    for it in ds.items() {
        put_u32(&mut out, it.subject.0);
        put_u32(&mut out, it.label as u32);
        put_f64s(&mut out, &row_major(it.cov.as_mat()));
    }
    Ok(out)
}

pub fn read_covariances(bytes: &[u8]) -> Result<CovarianceSet> {
    let mut r = Reader::new(bytes);
    r.magic(COV_MAGIC)?;
    let at = r.pos;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.fail(at, format!("unsupported version {version}")));
    }
    let at = r.pos;
    let dim = r.u32("dimension")? as usize;
    if dim == 0 {
        return Err(r.fail(at, "dimension must be positive"));
    }
    let count = r.u32("record count")? as usize;
    let mut items = Vec::with_capacity(count.min(bytes.len() / (8 + 8 * dim * dim) + 1));
    for k in 0..count {
        r.record = Some(k);
        let start = r.pos;
        let subject = SubjectId(r.u32("subject")?);
        let label = r.label()?;
        let block_at = r.pos;
        let values = r.f64s(dim * dim, "matrix block")?;
        let m = Mat::from_row_slice(dim, dim, &values);
        let scale = m.amax();
        for i in 0..dim {
            for j in i + 1..dim {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(r.fail(block_at, format!("matrix not symmetric at ({i},{j})")));
                }
            }
        }
        let cov = SpdMatrix::new(m).map_err(|e| r.fail(start, format!("invalid matrix: {e}")))?;
        items.push(CovItem { subject, label, cov });
    }
    r.record = None;
    r.finish()?;
    CovarianceSet::new(dim, items)
}

pub fn write_epochs(es: &EpochSet) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(EPOCH_MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, u32_field(es.channels(), "channel count")?);
    put_u32(&mut out, u32_field(es.len(), "record count")?);
    for e in es.epochs() {
        put_u32(&mut out, e.subject.0);
        put_u32(&mut out, e.label as u32);
        put_u32(&mut out, u32_field(e.samples.ncols(), "sample count")?);
        put_f64s(&mut out, &row_major(&e.samples));
    }
    Ok(out)
}

pub fn read_epochs(bytes: &[u8]) -> Result<EpochSet> {
    let mut r = Reader::new(bytes);
    r.magic(EPOCH_MAGIC)?;
    let at = r.pos;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.fail(at, format!("unsupported version {version}")));
    }
    let at = r.pos;
    let channels = r.u32("channel count")? as usize;
    if channels == 0 {
        return Err(r.fail(at, "channel count must be positive"));
    }
    let count = r.u32("record count")? as usize;
    let mut epochs = Vec::new();
    for k in 0..count {
        r.record = Some(k);
        let subject = SubjectId(r.u32("subject")?);
        let label = r.label()?;
        let at = r.pos;
        let t = r.u32("sample count")? as usize;
        if t == 0 {
            return Err(r.fail(at, "epoch has no samples"));
        }
        let values = r.f64s(channels * t, "sample block")?;
        epochs.push(Epoch {
            subject,
            label,
            samples: Mat::from_row_slice(channels, t, &values),
        });
    }
    r.record = None;
    r.finish()?;
    EpochSet::new(channels, epochs)
}

pub fn save_covariances(ds: &CovarianceSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_covariances(ds)?)?;
    Ok(())
}

pub fn load_covariances(path: impl AsRef<Path>) -> Result<CovarianceSet> {
    read_covariances(&fs::read(path)?)
}

pub fn save_epochs(es: &EpochSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_epochs(es)?)?;
    Ok(())
}

pub fn load_epochs(path: impl AsRef<Path>) -> Result<EpochSet> {
    read_epochs(&fs::read(path)?)
}

/// `index,subject,label` rows for external tooling.
pub fn write_labels_csv(ds: &CovarianceSet, mut out: impl Write) -> Result<()> {
    writeln!(out, "index,subject,label")?;
    for (i, it) in ds.items().iter().enumerate() {
        writeln!(out, "{i},{},{}", it.subject, it.label)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthConfig};

    fn small() -> CovarianceSet {
        synth_generate(&SynthConfig {
            trials_per_class: 2,
            n_subjects: 2,
            ..SynthConfig::high_distortion(1)
        })
        .unwrap()
    }

    #[test]
    fn covariances_round_trip_bit_exact() {
        let ds = small();
        let bytes = write_covariances(&ds).unwrap();
        assert_eq!(read_covariances(&bytes).unwrap(), ds);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.spdc");
        save_covariances(&ds, &p).unwrap();
        assert_eq!(load_covariances(&p).unwrap(), ds);
    }

    #[test]
    fn truncation_reports_offset_and_record() {
        let bytes = write_covariances(&small()).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        match read_covariances(cut) {
            Err(Error::Format { record, offset, .. }) => {
                assert_eq!(record, Some(small().len() - 1));
                assert!(offset > 16);
            }
            other => panic!("expected format error, got {other:?}"),
        }
        assert!(matches!(read_covariances(&bytes[..10]), Err(Error::Format { record: None, .. })));
    }

    #[test]
    fn bad_header_fields() {
        let mut bytes = write_covariances(&small()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(read_covariances(&bytes), Err(Error::Format { offset: 0, .. })));
        let mut bytes = write_covariances(&small()).unwrap();
        bytes[4] = 2;
        assert!(matches!(read_covariances(&bytes), Err(Error::Format { offset: 4, .. })));
    }

    #[test]
    fn short_matrix_block_is_caught_at_its_record() {
        let d = 22;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(COV_MAGIC);
        for v in [1u32, d as u32, 3] {
            put_u32(&mut bytes, v);
        }
        let good = Mat::identity(d, d) * 1.0 + Mat::from_element(d, d, 0.01);
        for k in 0..3 {
            put_u32(&mut bytes, 1);
            put_u32(&mut bytes, 0);
            let vals = row_major(&good);
            let n = if k == 1 { vals.len() - 1 } else { vals.len() };
            put_f64s(&mut bytes, &vals[..n]);
        }
        match read_covariances(&bytes) {
            Err(Error::Format { record, .. }) => assert_eq!(record, Some(1)),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn label_out_of_range() {
        let mut bytes = write_covariances(&small()).unwrap();
        bytes[20..24].copy_from_slice(&(MAX_CLASSES as u32).to_le_bytes());
        assert!(matches!(
            read_covariances(&bytes),
            Err(Error::Format { offset: 20, record: Some(0), .. })
        ));
    }

    #[test]
    fn epochs_round_trip() {
        let es = EpochSet::new(
            2,
            vec![
                Epoch {
                    subject: SubjectId(4),
                    label: 1,
                    samples: Mat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 1e-300]),
                },
                Epoch {
                    subject: SubjectId(5),
                    label: 0,
                    samples: Mat::from_element(2, 1, f64::MIN_POSITIVE),
                },
            ],
        )
        .unwrap();
        let bytes = write_epochs(&es).unwrap();
        assert_eq!(read_epochs(&bytes).unwrap(), es);
        assert!(matches!(read_epochs(&bytes[..bytes.len() - 1]), Err(Error::Format { record: Some(1), .. })));
    }

    #[test]
    fn labels_csv_has_header() {
        let ds = small();
        let mut out = Vec::new();
        write_labels_csv(&ds, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("index,subject,label\n0,1,0\n"));
        assert_eq!(text.lines().count(), ds.len() + 1);
    }
}
