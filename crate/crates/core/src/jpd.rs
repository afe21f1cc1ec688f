//! Sparse four-dimensional coincidence histogram and its 2D projections.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::event::{Basis, CoincidencePair, Half, OpticsConfig, SENSOR_PIXELS};
use crate::seed::mix64;

#[derive(Debug, Error)]
pub enum JpdError {
    #[error("cannot merge histograms with different basis or optics")]
    MetadataMismatch,
    #[error("reference pixel ({0}, {1}) has no coincidences")]
    EmptyConditional(u16, u16),
    #[error("pixel ({0}, {1}) is outside the sensor")]
    OutOfRange(i64, i64),
    #[error("jpd file line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Hasher for packed bin keys; keys are already well spread after one mix.
#[derive(Default, Clone, Copy)]
pub struct KeyHasher(u64);

impl Hasher for KeyHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 = mix64(self.0 ^ *b as u64);
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.0 = mix64(self.0 ^ v);
    }
}

type BinMap = HashMap<u64, u64, BuildHasherDefault<KeyHasher>>;

/// One histogram cell: Left pixel `(x1, y1)`, Right pixel `(x2, y2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinKey {
    pub x1: u16,
    pub y1: u16,
    pub x2: u16,
    pub y2: u16,
}

impl BinKey {
    pub fn pack(self) -> u64 {
        self.x1 as u64 | (self.y1 as u64) << 16 | (self.x2 as u64) << 32 | (self.y2 as u64) << 48
    }

    pub fn unpack(k: u64) -> Self {
        Self {
            x1: k as u16,
            y1: (k >> 16) as u16,
            x2: (k >> 32) as u16,
            y2: (k >> 48) as u16,
        }
    }
}

/// Nearest pixel, halves rounded away from zero, clamped to the sensor.
pub fn pixel_bin(c: f64) -> u16 {
    c.round().clamp(0.0, (SENSOR_PIXELS - 1) as f64) as u16
}

/// Joint histogram of coincidences over (Left pixel, Right pixel).
#[derive(Clone, Debug)]
pub struct Jpd {
    counts: BinMap,
    pub basis: Basis,
    pub acquisition_s: f64,
    pub optics: OpticsConfig,
    total_pairs: u64,
    skipped_same_half: u64,
}

impl PartialEq for Jpd {
    fn eq(&self, other: &Self) -> bool {
        self.basis == other.basis
            && self.acquisition_s == other.acquisition_s
            && self.optics == other.optics
            && self.total_pairs == other.total_pairs
            && self.skipped_same_half == other.skipped_same_half
            && self.counts == other.counts
    }
}

impl Jpd {
    pub fn new(optics: OpticsConfig, acquisition_s: f64) -> Self {
        Self {
            counts: BinMap::default(),
            basis: optics.basis,
            acquisition_s,
            optics,
            total_pairs: 0,
            skipped_same_half: 0,
        }
    }

    /// Empty histogram with the same metadata.
    pub fn empty_like(&self) -> Self {
        Self::new(self.optics, self.acquisition_s)
    }

    pub fn total_pairs(&self) -> u64 {
        self.total_pairs
    }

    pub fn skipped_same_half(&self) -> u64 {
        self.skipped_same_half
    }

    pub fn occupied_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total_pairs == 0
    }

    pub fn get(&self, key: BinKey) -> u64 {
        self.counts.get(&key.pack()).copied().unwrap_or(0)
    }

    pub fn add_count(&mut self, key: BinKey, count: u64) {
        if count == 0 {
            return;
        }
        *self.counts.entry(key.pack()).or_insert(0) += count;
        self.total_pairs += count;
    }

    /// Add one coincidence. Same-half pairs are skipped and counted.
    pub fn add_pair(&mut self, pair: &CoincidencePair) {
        if !pair.is_cross_half() {
            self.skipped_same_half += 1;
            return;
        }
        let (l, r) = if pair.a.half == Half::Left {
            (&pair.a, &pair.b)
        } else {
            (&pair.b, &pair.a)
        };
        self.add_count(
            BinKey {
                x1: pixel_bin(l.cx),
                y1: pixel_bin(l.cy),
                x2: pixel_bin(r.cx),
                y2: pixel_bin(r.cy),
            },
            1,
        );
    }

    pub fn accumulate<'a, I>(optics: OpticsConfig, acquisition_s: f64, pairs: I) -> Self
    where
        I: IntoIterator<Item = &'a CoincidencePair>,
    {
        let mut j = Self::new(optics, acquisition_s);
        for p in pairs {
            j.add_pair(p);
        }
        j
    }

    /// Bin-wise sum. Acquisition times add.
    pub fn merge(&self, other: &Jpd) -> Result<Jpd, JpdError> {
        if self.basis != other.basis || !self.optics.same_geometry(&other.optics) {
            return Err(JpdError::MetadataMismatch);
        }
        let (big, small) = if self.counts.len() >= other.counts.len() {
            (self, other)
        } else {
            (other, self)
        };
        let mut out = big.clone();
        for (k, c) in &small.counts {
            *out.counts.entry(*k).or_insert(0) += c;
        }
        out.total_pairs = self.total_pairs + other.total_pairs;
        out.skipped_same_half = self.skipped_same_half + other.skipped_same_half;
        out.acquisition_s = self.acquisition_s + other.acquisition_s;
        out.optics = self.optics;
        Ok(out)
    }

    /// Occupied bins in key order.
    pub fn sorted_bins(&self) -> Vec<(BinKey, u64)> {
        let mut v: Vec<(u64, u64)> = self.counts.iter().map(|(k, c)| (*k, *c)).collect();
        v.sort_unstable();
        v.into_iter().map(|(k, c)| (BinKey::unpack(k), c)).collect()
    }

    pub fn for_each_bin(&self, mut f: impl FnMut(BinKey, u64)) {
        for (k, c) in &self.counts {
            f(BinKey::unpack(*k), *c);
        }
    }

    /// Rebuild from bins, dropping zero counts; same-half skips are kept.
    pub fn with_bins(&self, bins: impl IntoIterator<Item = (BinKey, u64)>) -> Jpd {
        let mut j = self.empty_like();
        j.skipped_same_half = self.skipped_same_half;
        j.counts.reserve(self.counts.len());
        for (k, c) in bins {
            j.add_count(k, c);
        }
        j
    }

    pub fn marginal(&self, side: Half) -> Projection {
        let n = SENSOR_PIXELS as usize;
        let mut p = Projection::zeros(ProjectionKind::Marginal(side), n, n, 0, 0);
        self.for_each_bin(|k, c| {
            let (x, y) = match side {
                Half::Left => (k.x1, k.y1),
                Half::Right => (k.x2, k.y2),
            };
            p.data[y as usize * n + x as usize] += c as f64;
        });
        p
    }

    /// Distribution of the Right photon given the Left photon at `ref_px`.
    pub fn conditional(&self, ref_px: (u16, u16)) -> Result<Projection, JpdError> {
        let n = SENSOR_PIXELS as usize;
        let mut p = Projection::zeros(ProjectionKind::Conditional { ref_px }, n, n, 0, 0);
        let mut total = 0u64;
        self.for_each_bin(|k, c| {
            if (k.x1, k.y1) == ref_px {
                p.data[k.y2 as usize * n + k.x2 as usize] += c as f64;
                total += c;
            }
        });
        if total == 0 {
            return Err(JpdError::EmptyConditional(ref_px.0, ref_px.1));
        }
        for v in &mut p.data {
            *v /= total as f64;
        }
        Ok(p)
    }

    /// Histogram of `(x1 - x2, y1 - y2)` over `[-255, 255]^2`.
    pub fn minus_projection(&self) -> Projection {
        let n = 2 * SENSOR_PIXELS as usize - 1;
        let off = SENSOR_PIXELS as i64 - 1;
        let mut p = Projection::zeros(ProjectionKind::Minus, n, n, -off, -off);
        self.for_each_bin(|k, c| {
            let dx = (k.x1 as i64 - k.x2 as i64 + off) as usize;
            let dy = (k.y1 as i64 - k.y2 as i64 + off) as usize;
            p.data[dy * n + dx] += c as f64;
        });
        p
    }

    /// Histogram of `(x1 + x2, y1 + y2)` over `[0, 510]^2`.
    pub fn sum_projection(&self) -> Projection {
        let n = 2 * SENSOR_PIXELS as usize - 1;
        let mut p = Projection::zeros(ProjectionKind::Sum, n, n, 0, 0);
        self.for_each_bin(|k, c| {
            let sx = (k.x1 + k.x2) as usize;
            let sy = (k.y1 + k.y2) as usize;
            p.data[sy * n + sx] += c as f64;
        });
        p
    }

    /// Counts collapsed onto one axis: `m[u1 * 256 + u2]` with `u1` the Left
    /// coordinate and `u2` the Right coordinate along `axis`.
    pub fn axis_matrix(&self, axis: Axis) -> Vec<f64> {
        let n = SENSOR_PIXELS as usize;
        let mut m = vec![0.0; n * n];
        self.for_each_bin(|k, c| {
            let (u1, u2) = match axis {
                Axis::X => (k.x1, k.x2),
                Axis::Y => (k.y1, k.y2),
            };
            m[u1 as usize * n + u2 as usize] += c as f64;
        });
        m
    }

    /// Sparse CSV `px1,py1,px2,py2,count`, bins in key order.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(out);
        writeln!(w, "px1,py1,px2,py2,count")?;
        for (k, c) in self.sorted_bins() {
            writeln!(w, "{},{},{},{},{}", k.x1, k.y1, k.x2, k.y2, c)?;
        }
        w.flush()
    }

    /// Metadata sidecar as `key = value` lines.
    pub fn write_meta<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "basis = {}", self.basis)?;
        writeln!(out, "acquisition_s = {:e}", self.acquisition_s)?;
        writeln!(out, "total_pairs = {}", self.total_pairs)?;
        writeln!(out, "skipped_same_half = {}", self.skipped_same_half)?;
        writeln!(out, "optics.pixel_pitch_m = {:e}", self.optics.pixel_pitch_m)?;
        writeln!(out, "optics.magnification_nf = {:e}", self.optics.magnification_nf)?;
        writeln!(out, "optics.f_eff_m = {:e}", self.optics.f_eff_m)?;
        writeln!(out, "optics.wavelength_m = {:e}", self.optics.wavelength_m)?;
        Ok(())
    }

    /// Read the CSV and sidecar written by [`Jpd::write_csv`] and [`Jpd::write_meta`].
    pub fn read<R1: BufRead, R2: BufRead>(csv_in: R1, meta_in: R2) -> Result<Jpd, JpdError> {
        let parse_err = |line: u64, message: String| JpdError::Parse { line, message };
        let mut optics = OpticsConfig::new(Basis::NearField);
        let mut acquisition_s = 0.0;
        let mut skipped = 0u64;
        let mut total = None;
        for (i, line) in meta_in.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let ln = i as u64 + 1;
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(ln, "expected `key = value`".into()))?;
            let (k, v) = (k.trim(), v.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|e| parse_err(ln, format!("{k}: {e}")));
            match k {
                "basis" => optics.basis = v.parse().map_err(|e| parse_err(ln, format!("{e}")))?,
                "acquisition_s" => acquisition_s = num(v)?,
                "total_pairs" => total = Some(v.parse::<u64>().map_err(|e| parse_err(ln, format!("{k}: {e}")))?),
                "skipped_same_half" => skipped = v.parse().map_err(|e| parse_err(ln, format!("{k}: {e}")))?,
                "optics.pixel_pitch_m" => optics.pixel_pitch_m = num(v)?,
                "optics.magnification_nf" => optics.magnification_nf = num(v)?,
                "optics.f_eff_m" => optics.f_eff_m = num(v)?,
                "optics.wavelength_m" => optics.wavelength_m = num(v)?,
                _ => {}
            }
        }
        optics.validate().map_err(|e| parse_err(0, e.to_string()))?;
        let mut j = Jpd::new(optics, acquisition_s);
        j.skipped_same_half = skipped;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(csv_in);
        for (i, rec) in rdr.records().enumerate() {
            let ln = i as u64 + 2;
            let rec = rec.map_err(|e| parse_err(ln, e.to_string()))?;
            if rec.len() != 5 {
                return Err(parse_err(ln, format!("expected 5 fields, found {}", rec.len())));
            }
            let mut f = [0u64; 5];
            for (slot, s) in f.iter_mut().zip(rec.iter()) {
                *slot = s.trim().parse().map_err(|e| parse_err(ln, format!("{s:?}: {e}")))?;
            }
            if f[..4].iter().any(|v| *v >= SENSOR_PIXELS as u64) {
                return Err(JpdError::OutOfRange(f[0] as i64, f[1] as i64));
            }
            j.add_count(
                BinKey {
                    x1: f[0] as u16,
                    y1: f[1] as u16,
                    x2: f[2] as u16,
                    y2: f[3] as u16,
                },
                f[4],
            );
        }
        if let Some(t) = total {
            if t != j.total_pairs {
                return Err(parse_err(
                    0,
                    format!("sidecar total_pairs {t} but bins sum to {}", j.total_pairs),
                ));
            }
        }
        Ok(j)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjectionKind {
    Marginal(Half),
    Conditional { ref_px: (u16, u16) },
    Minus,
    Sum,
}

impl ProjectionKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProjectionKind::Marginal(Half::Left) => "marginal_left",
            ProjectionKind::Marginal(Half::Right) => "marginal_right",
            ProjectionKind::Conditional { .. } => "conditional",
            ProjectionKind::Minus => "minus",
            ProjectionKind::Sum => "sum",
        }
    }
}

/// Dense 2D grid; cell `(ix, iy)` sits at pixel coordinate `(x0 + ix, y0 + iy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub kind: ProjectionKind,
    pub nx: usize,
    pub ny: usize,
    pub x0: i64,
    pub y0: i64,
    /// Row-major, `data[iy * nx + ix]`.
    pub data: Vec<f64>,
}

impl Projection {
    pub fn zeros(kind: ProjectionKind, nx: usize, ny: usize, x0: i64, y0: i64) -> Self {
        Self {
            kind,
            nx,
            ny,
            x0,
            y0,
            data: vec![0.0; nx * ny],
        }
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.data[iy * self.nx + ix]
    }

    /// Value at pixel coordinate `(x, y)`, zero outside the grid.
    pub fn value(&self, x: i64, y: i64) -> f64 {
        let (ix, iy) = (x - self.x0, y - self.y0);
        if ix < 0 || iy < 0 || ix >= self.nx as i64 || iy >= self.ny as i64 {
            return 0.0;
        }
        self.at(ix as usize, iy as usize)
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Pixel coordinate of the largest cell (first in row-major order on ties).
    pub fn argmax(&self) -> (i64, i64) {
        let mut best = 0;
        for (i, v) in self.data.iter().enumerate() {
            if *v > self.data[best] {
                best = i;
            }
        }
        (self.x0 + (best % self.nx) as i64, self.y0 + (best / self.nx) as i64)
    }

    /// Plain-text grid: a comment line with the origin, then one row per line.
    pub fn write_text<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(out);
        writeln!(
            w,
            "# {} nx={} ny={} x0={} y0={}",
            self.kind.name(),
            self.nx,
            self.ny,
            self.x0,
            self.y0
        )?;
        for row in self.data.chunks(self.nx) {
            let mut first = true;
            for v in row {
                if !first {
                    w.write_all(b" ")?;
                }
                first = false;
                write!(w, "{v}")?;
            }
            writeln!(w)?;
        }
        w.flush()
    }

    /// 16-bit binary PGM scaled to the grid maximum, first row at the top.
    pub fn write_pgm<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(out);
        write!(w, "P5\n{} {}\n65535\n", self.nx, self.ny)?;
        let max = self.data.iter().cloned().fold(0.0f64, f64::max);
        for v in &self.data {
            let s = if max > 0.0 {
                (v / max * 65535.0).round() as u16
            } else {
                0
            };
            w.write_all(&s.to_be_bytes())?;
        }
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::PhotonEvent;

    fn ev(cx: f64, cy: f64) -> PhotonEvent {
        PhotonEvent {
            cx,
            cy,
            t_ps: 0,
            n_pixels: 1,
            sum_tot: 1,
            max_tot: 1,
            half: Half::of(cx),
        }
    }

    fn pair(l: (f64, f64), r: (f64, f64)) -> CoincidencePair {
        CoincidencePair {
            a: ev(l.0, l.1),
            b: ev(r.0, r.1),
            dt_ps: 0,
        }
    }

    fn optics() -> OpticsConfig {
        OpticsConfig::new(Basis::NearField)
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(pixel_bin(10.5), 11);
        assert_eq!(pixel_bin(10.49), 10);
        assert_eq!(pixel_bin(-0.5), 0);
        assert_eq!(pixel_bin(255.5), 255);
        let j = Jpd::accumulate(optics(), 1.0, &[pair((10.2, 20.0), (200.7, 30.0))]);
        assert_eq!(j.total_pairs(), 1);
        assert_eq!(
            j.get(BinKey {
                x1: 10,
                y1: 20,
                x2: 201,
                y2: 30
            }),
            1
        );
    }

    #[test]
    fn left_first_regardless_of_order() {
        let p = pair((200.0, 1.0), (3.0, 4.0));
        let j = Jpd::accumulate(optics(), 1.0, &[p]);
        assert_eq!(
            j.get(BinKey {
                x1: 3,
                y1: 4,
                x2: 200,
                y2: 1
            }),
            1
        );
    }

    #[test]
    fn same_half_skipped() {
        let j = Jpd::accumulate(optics(), 1.0, &[pair((3.0, 4.0), (5.0, 6.0))]);
        assert_eq!(j.total_pairs(), 0);
        assert_eq!(j.skipped_same_half(), 1);
    }

    #[test]
    fn projections_of_single_pair() {
        let mut j = Jpd::new(optics(), 1.0);
        j.add_count(
            BinKey {
                x1: 10,
                y1: 20,
                x2: 12,
                y2: 25,
            },
            1,
        );
        let m = j.minus_projection();
        assert_eq!(m.value(-2, -5), 1.0);
        assert_eq!(m.total(), 1.0);
        let s = j.sum_projection();
        assert_eq!(s.value(22, 45), 1.0);
        let ml = j.marginal(Half::Left);
        assert_eq!(ml.value(10, 20), 1.0);
        let c = j.conditional((10, 20)).unwrap();
        assert_eq!(c.value(12, 25), 1.0);
        assert!(matches!(j.conditional((0, 0)), Err(JpdError::EmptyConditional(0, 0))));
    }

    #[test]
    fn merge_rules() {
        let a = Jpd::accumulate(optics(), 1.0, &[pair((10.0, 20.0), (150.0, 25.0))]);
        let e = a.empty_like();
        let m = a.merge(&e).unwrap();
        assert_eq!(m.sorted_bins(), a.sorted_bins());
        let ff = Jpd::new(optics().with_basis(Basis::FarField), 1.0);
        assert!(a.merge(&ff).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let a = Jpd::accumulate(
            optics(),
            2.5,
            &[
                pair((10.0, 20.0), (150.0, 25.0)),
                pair((10.0, 20.0), (150.0, 25.0)),
                pair((1.0, 2.0), (3.0, 4.0)),
            ],
        );
        let mut csv_buf = Vec::new();
        let mut meta = Vec::new();
        a.write_csv(&mut csv_buf).unwrap();
        a.write_meta(&mut meta).unwrap();
        let b = Jpd::read(&csv_buf[..], &meta[..]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pgm_header() {
        let j = Jpd::accumulate(optics(), 1.0, &[pair((10.0, 20.0), (150.0, 25.0))]);
        let mut buf = Vec::new();
        j.marginal(Half::Left).write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n256 256\n65535\n"));
        assert_eq!(buf.len(), 17 + 256 * 256 * 2);
    }
}
