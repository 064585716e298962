//! RF frame streams and the `UPRF` binary container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "UPRF"
//!      4     2  version (u16, currently 1)
//!      6     1  n_channels (u8)
//!      7     4  rf_rate_hz (u32)
//!     11     4  prf_hz (u32)
//!     15     4  samples_per_frame (u32)
//!     19     4  element_spacing_um (u32)
//!     23     4  speed_of_sound_mmps (u32, mm/s)
//!     27     -  frames: per PRF tick, channel 0..n_channels, each
//!               samples_per_frame signed 16-bit samples
//! ```
//!
//! The frame count is implied by the payload length; a payload that ends
//! inside a tick is reported as [`Error::UnexpectedEof`].

use std::borrow::Cow;
use std::io::{self, Read, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"UPRF";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 27;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RfStreamHeader {
    pub version: u16,
    pub n_channels: u8,
    pub rf_rate_hz: u32,
    pub prf_hz: u32,
    pub samples_per_frame: u32,
    pub element_spacing_um: u32,
    pub speed_of_sound_mmps: u32,
}

impl RfStreamHeader {
    pub fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(self.version));
        }
        if self.n_channels == 0
            || self.rf_rate_hz == 0
            || self.prf_hz == 0
            || self.samples_per_frame == 0
            || self.speed_of_sound_mmps == 0
        {
            return Err(Error::Config(format!("degenerate stream header {self:?}")));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.n_channels as usize
    }

    pub fn frame_len(&self) -> usize {
        self.samples_per_frame as usize
    }

    /// Samples in one PRF tick across all channels.
    pub fn tick_len(&self) -> usize {
        self.frame_len() * self.channels()
    }

    pub fn speed_of_sound_mps(&self) -> f64 {
        self.speed_of_sound_mmps as f64 / 1000.0
    }

    pub fn element_spacing_m(&self) -> f64 {
        self.element_spacing_um as f64 * 1e-6
    }

    pub fn prf(&self) -> f64 {
        self.prf_hz as f64
    }

    pub fn rf_rate(&self) -> f64 {
        self.rf_rate_hz as f64
    }

    /// Raw-sample index of the echo returning from `depth_m`.
    pub fn depth_to_sample(&self, depth_m: f64) -> f64 {
        2.0 * depth_m / self.speed_of_sound_mps() * self.rf_rate()
    }

    /// Number of leading samples whose echo depth is below `depth_m`.
    pub fn samples_above_depth(&self, depth_m: f64) -> usize {
        (self.depth_to_sample(depth_m).ceil() as usize).min(self.frame_len())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut buf = [0u8; HEADER_LEN];
        buf[0..4].copy_from_slice(&MAGIC);
        buf[4..6].copy_from_slice(&self.version.to_le_bytes());
        buf[6] = self.n_channels;
        buf[7..11].copy_from_slice(&self.rf_rate_hz.to_le_bytes());
        buf[11..15].copy_from_slice(&self.prf_hz.to_le_bytes());
        buf[15..19].copy_from_slice(&self.samples_per_frame.to_le_bytes());
        buf[19..23].copy_from_slice(&self.element_spacing_um.to_le_bytes());
        buf[23..27].copy_from_slice(&self.speed_of_sound_mmps.to_le_bytes());
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut buf = [0u8; HEADER_LEN];
        read_full(r, &mut buf)?.then_some(()).ok_or(Error::UnexpectedEof)?;
        let magic: [u8; 4] = buf[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        let header = Self {
            version: u16::from_le_bytes([buf[4], buf[5]]),
            n_channels: buf[6],
            rf_rate_hz: u32_at(7),
            prf_hz: u32_at(11),
            samples_per_frame: u32_at(15),
            element_spacing_um: u32_at(19),
            speed_of_sound_mmps: u32_at(23),
        };
        header.validate()?;
        Ok(header)
    }
}

/// Fills `buf` completely. Returns `Ok(false)` on a clean end of input before
/// the first byte and `UnexpectedEof` on a partial fill.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(Error::UnexpectedEof),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(true)
}

/// Random access to RF frames by absolute PRF tick.
pub trait FrameSource: Sync {
    fn header(&self) -> &RfStreamHeader;

    /// Absolute ticks that can be requested.
    fn ticks(&self) -> Range<usize>;

    fn frame(&self, tick: usize, channel: usize) -> Cow<'_, [i16]>;

    fn n_ticks(&self) -> usize {
        self.ticks().len()
    }

    fn duration_s(&self) -> f64 {
        self.n_ticks() as f64 / self.header().prf()
    }
}

/// A fully materialized stream: ticks in order, channels interleaved per tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RfStream {
    pub header: RfStreamHeader,
    pub data: Vec<i16>,
}

impl RfStream {
    pub fn new(header: RfStreamHeader) -> Self {
        Self { header, data: Vec::new() }
    }

    pub fn push_tick(&mut self, tick: &[i16]) {
        assert_eq!(tick.len(), self.header.tick_len(), "tick length mismatch");
        self.data.extend_from_slice(tick);
    }

    pub fn tick(&self, tick: usize) -> &[i16] {
        let len = self.header.tick_len();
        &self.data[tick * len..(tick + 1) * len]
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        self.header.write_to(w)?;
        let mut writer = RfWriter::without_header(self.header, w);
        for t in 0..self.n_ticks() {
            writer.write_tick(self.tick(t))?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut reader = RfReader::new(r)?;
        let mut stream = RfStream::new(*reader.header());
        let mut tick = Vec::new();
        while reader.next_tick(&mut tick)? {
            stream.data.extend_from_slice(&tick);
        }
        Ok(stream)
    }

    /// The first `n` ticks (or all of them).
    pub fn truncated(&self, n: usize) -> RfStream {
        let n = n.min(self.n_ticks());
        RfStream {
            header: self.header,
            data: self.data[..n * self.header.tick_len()].to_vec(),
        }
    }
}

impl FrameSource for RfStream {
    fn header(&self) -> &RfStreamHeader {
        &self.header
    }

    fn ticks(&self) -> Range<usize> {
        0..self.data.len() / self.header.tick_len()
    }

    fn frame(&self, tick: usize, channel: usize) -> Cow<'_, [i16]> {
        let len = self.header.frame_len();
        let start = (tick * self.header.channels() + channel) * len;
        Cow::Borrowed(&self.data[start..start + len])
    }
}

/// Sequential tick reader.
pub struct RfReader<R> {
    inner: R,
    header: RfStreamHeader,
    bytes: Vec<u8>,
}

impl<R: Read> RfReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let header = RfStreamHeader::read_from(&mut inner)?;
        Ok(Self {
            bytes: vec![0u8; header.tick_len() * 2],
            inner,
            header,
        })
    }

    pub fn header(&self) -> &RfStreamHeader {
        &self.header
    }

    /// Reads the next tick into `out`. Returns `false` at a clean end of stream.
    pub fn next_tick(&mut self, out: &mut Vec<i16>) -> Result<bool> {
        if !read_full(&mut self.inner, &mut self.bytes)? {
            return Ok(false);
        }
        out.clear();
        out.extend(
            self.bytes
                .chunks_exact(2)
                .map(|b| i16::from_le_bytes([b[0], b[1]])),
        );
        Ok(true)
    }
}

/// Sequential tick writer.
pub struct RfWriter<W> {
    inner: W,
    header: RfStreamHeader,
    bytes: Vec<u8>,
}

impl<W: Write> RfWriter<W> {
    pub fn new(header: RfStreamHeader, mut inner: W) -> Result<Self> {
        header.write_to(&mut inner)?;
        Ok(Self::without_header(header, inner))
    }

    fn without_header(header: RfStreamHeader, inner: W) -> Self {
        Self {
            inner,
            header,
            bytes: Vec::with_capacity(header.tick_len() * 2),
        }
    }

    pub fn write_tick(&mut self, tick: &[i16]) -> Result<()> {
        if tick.len() != self.header.tick_len() {
            return Err(Error::invalid(format!(
                "tick has {} samples, header expects {}",
                tick.len(),
                self.header.tick_len()
            )));
        }
        self.bytes.clear();
        for s in tick {
            self.bytes.extend_from_slice(&s.to_le_bytes());
        }
        self.inner.write_all(&self.bytes)?;
        Ok(())
    }

    pub fn into_inner(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}
