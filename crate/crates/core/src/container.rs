//! Binary model container shared by aligner (`ALGN`) and classifier (`CLSF`) files.
//!
//! Layout (little-endian): magic, version `u32 = 1`, kind `u32`, dim `u32`,
//! JSON length `u32` + UTF-8 JSON hyperparameters, block count `u32`, then per
//! block rows `u32`, cols `u32` and `rows·cols` `f64` row-major.

use crate::data::io::{put_f64s, put_u32, row_major, Reader};
use crate::error::{Error, Result};
use crate::spd::Mat;

const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct ModelFile {
    pub kind: u32,
    pub dim: u32,
    pub meta: String,
    pub blocks: Vec<Mat>,
}

fn u32_len(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Config(format!("{what} {n} does not fit in u32")))
}

impl ModelFile {
    pub fn encode(&self, magic: &[u8; 4]) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(magic);
        put_u32(&mut out, VERSION);
        put_u32(&mut out, self.kind);
        put_u32(&mut out, self.dim);
        put_u32(&mut out, u32_len(self.meta.len(), "metadata length")?);
        out.extend_from_slice(self.meta.as_bytes());
        put_u32(&mut out, u32_len(self.blocks.len(), "block count")?);
        for b in &self.blocks {
            put_u32(&mut out, u32_len(b.nrows(), "block rows")?);
            put_u32(&mut out, u32_len(b.ncols(), "block cols")?);
            put_f64s(&mut out, &row_major(b));
        }
        Ok(out)
    }

    pub fn decode(magic: &[u8; 4], bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(magic)?;
        let at = r.offset() as usize;
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(r.fail(at, format!("unsupported version {version}")));
        }
        let kind = r.u32("kind")?;
        let dim = r.u32("dimension")?;
        let len = r.u32("metadata length")? as usize;
        let at = r.offset() as usize;
        let meta = std::str::from_utf8(r.bytes(len, "metadata")?)
            .map_err(|_| r.fail(at, "metadata is not UTF-8"))?
            .to_owned();
        let count = r.u32("block count")? as usize;
        let mut blocks = Vec::new();
        for k in 0..count {
            r.record = Some(k);
            let rows = r.u32("block rows")? as usize;
            let cols = r.u32("block cols")? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| r.fail(r.offset() as usize, "block too large"))?;
            let values = r.f64s(n, "parameter block")?;
            blocks.push(Mat::from_row_slice(rows, cols, &values));
        }
        r.record = None;
        r.finish()?;
        Ok(Self { kind, dim, meta, blocks })
    }

    /// Pops blocks in order, failing with a format error when they run out.
    pub fn take_blocks(&mut self) -> BlockCursor {
        BlockCursor {
            blocks: std::mem::take(&mut self.blocks).into_iter(),
        }
    }
}

pub(crate) struct BlockCursor {
    blocks: std::vec::IntoIter<Mat>,
}

impl BlockCursor {
    pub fn next(&mut self, rows: usize, cols: usize, what: &str) -> Result<Mat> {
        let b = self
            .blocks
            .next()
            .ok_or_else(|| Error::format(0, None, format!("missing parameter block `{what}`")))?;
        if b.shape() != (rows, cols) {
            return Err(Error::format(
                0,
                None,
                format!("block `{what}` is {}x{}, expected {rows}x{cols}", b.nrows(), b.ncols()),
            ));
        }
        Ok(b)
    }

    pub fn any(&mut self, what: &str) -> Result<Mat> {
        self.blocks
            .next()
            .ok_or_else(|| Error::format(0, None, format!("missing parameter block `{what}`")))
    }

    pub fn finish(mut self) -> Result<()> {
        if self.blocks.next().is_some() {
            return Err(Error::format(0, None, "unexpected extra parameter blocks"));
        }
        Ok(())
    }
}
