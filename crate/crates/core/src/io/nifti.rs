//! Single-file NIfTI-1 (`.nii`, `.nii.gz`) label volumes.
//!
//! Only what a label map needs: 3D integer (or integral float) data, the
//! sform/qform affine and byte-exact round trips of our own output.

use std::io::{Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion};

use crate::error::{Error, Result};
use crate::grid::{AffineFrame, LabelVolume, WorldConvention};

const HEADER_SIZE: usize = 348;
/// Header plus the four-byte extension flag.
const DATA_OFFSET: usize = 352;

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse { offset, message: message.into() }
}

/// NIfTI datatype codes we accept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DataType {
    U8,
    I8,
    I16,
    U16,
    I32,
    U32,
    I64,
    U64,
    F32,
    F64,
}

impl DataType {
    fn from_code(code: i16) -> Option<Self> {
        Some(match code {
            2 => DataType::U8,
            256 => DataType::I8,
            4 => DataType::I16,
            512 => DataType::U16,
            8 => DataType::I32,
            768 => DataType::U32,
            1024 => DataType::I64,
            1280 => DataType::U64,
            16 => DataType::F32,
            64 => DataType::F64,
            _ => return None,
        })
    }

    fn code(self) -> i16 {
        match self {
            DataType::U8 => 2,
            DataType::I8 => 256,
            DataType::I16 => 4,
            DataType::U16 => 512,
            DataType::I32 => 8,
            DataType::U32 => 768,
            DataType::I64 => 1024,
            DataType::U64 => 1280,
            DataType::F32 => 16,
            DataType::F64 => 64,
        }
    }

    fn size(self) -> usize {
        match self {
            DataType::U8 | DataType::I8 => 1,
            DataType::I16 | DataType::U16 => 2,
            DataType::I32 | DataType::U32 | DataType::F32 => 4,
            DataType::I64 | DataType::U64 | DataType::F64 => 8,
        }
    }
}

/// Little/big-endian field reader over the raw header bytes.
struct Fields<'a> {
    bytes: &'a [u8],
    big: bool,
}

impl Fields<'_> {
    fn take<const N: usize>(&self, at: usize) -> [u8; N] {
        let mut b: [u8; N] = self.bytes[at..at + N].try_into().expect("header slice");
        if self.big {
            b.reverse();
        }
        b
    }

    fn i16(&self, at: usize) -> i16 {
        i16::from_le_bytes(self.take(at))
    }

    fn f32(&self, at: usize) -> f32 {
        f32::from_le_bytes(self.take(at))
    }
}

fn decompress(raw: Vec<u8>) -> Result<Vec<u8>> {
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        MultiGzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| parse_err(0, format!("gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Reads a label volume from a NIfTI-1 file, gzip-compressed or not.
///
/// The affine comes from the sform when `sform_code > 0`, else from the qform
/// when `qform_code > 0`, else from the pixel spacings alone. The world side
/// is RAS. Scaled or floating-point data must hold non-negative integers.
pub fn read_label_volume(path: impl AsRef<Path>) -> Result<LabelVolume> {
    let bytes = decompress(std::fs::read(path)?)?;
    parse_label_volume(&bytes)
}

/// [`read_label_volume`] on an uncompressed in-memory file.
pub fn parse_label_volume(bytes: &[u8]) -> Result<LabelVolume> {
    if bytes.len() < HEADER_SIZE {
        return Err(parse_err(bytes.len(), format!("file ends inside the {HEADER_SIZE}-byte header")));
    }
    let big = match (i32::from_le_bytes(bytes[0..4].try_into().unwrap()), i32::from_be_bytes(bytes[0..4].try_into().unwrap())) {
        (348, _) => false,
        (_, 348) => true,
        (n, _) => return Err(parse_err(0, format!("sizeof_hdr is {n}, expected 348"))),
    };
    let h = Fields { bytes, big };
    if &bytes[344..348] != b"n+1\0" {
        return Err(parse_err(344, "magic is not \"n+1\" (only single-file NIfTI-1 is supported)"));
    }

    let ndim = h.i16(40);
    if !(1..=7).contains(&ndim) {
        return Err(parse_err(40, format!("dim[0] = {ndim} is outside 1..7")));
    }
    let mut dims = [1usize; 3];
    for i in 1..=ndim as usize {
        let d = h.i16(40 + 2 * i);
        if d < 1 {
            return Err(parse_err(40 + 2 * i, format!("dim[{i}] = {d} must be positive")));
        }
        if i <= 3 {
            dims[i - 1] = d as usize;
        } else if d != 1 {
            return Err(parse_err(40 + 2 * i, format!("dim[{i}] = {d}: only 3D volumes are label maps")));
        }
    }

    let code = h.i16(70);
    let dtype = DataType::from_code(code).ok_or_else(|| parse_err(70, format!("unsupported datatype {code}")))?;
    let bitpix = h.i16(72);
    if bitpix as usize != 8 * dtype.size() {
        return Err(parse_err(72, format!("bitpix {bitpix} does not match datatype {code}")));
    }

    let mut pixdim = [0.0f64; 4];
    for (i, p) in pixdim.iter_mut().enumerate() {
        *p = h.f32(76 + 4 * i) as f64;
    }
    for (i, &p) in pixdim.iter().enumerate().skip(1) {
        if !(p > 0.0) || !p.is_finite() {
            return Err(parse_err(76 + 4 * i, format!("pixdim[{i}] = {p} must be positive")));
        }
    }

    let vox_offset = h.f32(108);
    if !(vox_offset >= DATA_OFFSET as f32) || vox_offset.fract() != 0.0 {
        return Err(parse_err(108, format!("vox_offset {vox_offset} must be an integer >= {DATA_OFFSET}")));
    }
    let start = vox_offset as usize;
    let n = dims.iter().product::<usize>();
    let end = start + n * dtype.size();
    if bytes.len() < end {
        return Err(parse_err(bytes.len(), format!("data ends at byte {} of {end} expected", bytes.len())));
    }

    let (slope, inter) = (h.f32(112) as f64, h.f32(116) as f64);
    let scaled = slope != 0.0 && (slope != 1.0 || inter != 0.0);
    let labels = decode_labels(&bytes[start..end], dtype, big, scaled.then_some((slope, inter)), start)?;

    let matrix = affine(&h, &pixdim);
    let frame = AffineFrame::new(matrix, WorldConvention::Ras).map_err(|e| parse_err(252, format!("unusable affine: {e}")))?;
    LabelVolume::new(dims, labels, frame)
}

fn affine(h: &Fields<'_>, pixdim: &[f64; 4]) -> Matrix4<f64> {
    let (qform_code, sform_code) = (h.i16(252), h.i16(254));
    if sform_code > 0 {
        let mut m = Matrix4::identity();
        for r in 0..3 {
            for c in 0..4 {
                m[(r, c)] = h.f32(280 + 16 * r + 4 * c) as f64;
            }
        }
        return m;
    }
    if qform_code > 0 {
        let (b, c, d) = (h.f32(256) as f64, h.f32(260) as f64, h.f32(264) as f64);
        let aa = 1.0 - (b * b + c * c + d * d);
        // Header quaternions are stored to f32 precision; tiny negatives mean a = 0.
        let a = if aa > 0.0 { aa.sqrt() } else { 0.0 };
        let r: Matrix3<f64> = UnitQuaternion::from_quaternion(Quaternion::new(a, b, c, d)).to_rotation_matrix().into_inner();
        let qfac = if pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let scale = Matrix3::from_diagonal(&nalgebra::Vector3::new(pixdim[1], pixdim[2], qfac * pixdim[3]));
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(r * scale));
        for i in 0..3 {
            m[(i, 3)] = h.f32(268 + 4 * i) as f64;
        }
        return m;
    }
    Matrix4::from_diagonal(&nalgebra::Vector4::new(pixdim[1], pixdim[2], pixdim[3], 1.0))
}

fn decode_labels(data: &[u8], dtype: DataType, big: bool, scale: Option<(f64, f64)>, start: usize) -> Result<Vec<u32>> {
    let size = dtype.size();
    let mut out = Vec::with_capacity(data.len() / size);
    for (i, chunk) in data.chunks_exact(size).enumerate() {
        let mut b = [0u8; 8];
        b[..size].copy_from_slice(chunk);
        if big {
            b[..size].reverse();
        }
        let v: f64 = match dtype {
            DataType::U8 => b[0] as f64,
            DataType::I8 => b[0] as i8 as f64,
            DataType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            DataType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            DataType::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            DataType::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            DataType::I64 => i64::from_le_bytes(b) as f64,
            DataType::U64 => u64::from_le_bytes(b) as f64,
            DataType::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            DataType::F64 => f64::from_le_bytes(b),
        };
        let v = match scale {
            Some((slope, inter)) => v * slope + inter,
            None => v,
        };
        if v.fract() != 0.0 || !v.is_finite() {
            return Err(Error::NotALabelMap(format!("non-integral value {v} at byte {}", start + i * size)));
        }
        if !(0.0..=u32::MAX as f64).contains(&v) {
            return Err(Error::NotALabelMap(format!("value {v} at byte {} is not a valid label", start + i * size)));
        }
        out.push(v as u32);
    }
    Ok(out)
}

/// Serializes a label volume as an uncompressed NIfTI-1 file.
///
/// The narrowest unsigned type holding the largest label is used. The affine
/// is written (in RAS) as an sform with `sform_code = 1`; the qform is left
/// unset. Header fields are stored as f32, so affines that are not
/// f32-representable come back rounded.
pub fn encode_label_volume(vol: &LabelVolume) -> Vec<u8> {
    let max = vol.labels().iter().copied().max().unwrap_or(0);
    let dtype = if max <= u8::MAX as u32 {
        DataType::U8
    } else if max <= u16::MAX as u32 {
        DataType::U16
    } else {
        DataType::U32
    };
    let m = *vol.frame().with_convention(WorldConvention::Ras).matrix();
    let spacing = vol.frame().spacing();

    let mut h = vec![0u8; DATA_OFFSET];
    let put = |h: &mut Vec<u8>, at: usize, b: &[u8]| h[at..at + b.len()].copy_from_slice(b);
    put(&mut h, 0, &(HEADER_SIZE as i32).to_le_bytes());
    put(&mut h, 38, b"r");
    put(&mut h, 40, &3i16.to_le_bytes());
    for (i, &d) in vol.dims().iter().enumerate() {
        put(&mut h, 42 + 2 * i, &(d as i16).to_le_bytes());
    }
    for i in 3..7 {
        put(&mut h, 42 + 2 * i, &1i16.to_le_bytes());
    }
    put(&mut h, 70, &dtype.code().to_le_bytes());
    put(&mut h, 72, &(8 * dtype.size() as i16).to_le_bytes());
    put(&mut h, 76, &1f32.to_le_bytes());
    for (i, s) in spacing.iter().enumerate() {
        put(&mut h, 80 + 4 * i, &(*s as f32).to_le_bytes());
    }
    put(&mut h, 108, &(DATA_OFFSET as f32).to_le_bytes());
    put(&mut h, 112, &1f32.to_le_bytes());
    // Spatial units in millimetres.
    put(&mut h, 123, &[2]);
    put(&mut h, 148, b"spinepoi label volume");
    put(&mut h, 254, &1i16.to_le_bytes());
    for r in 0..3 {
        for c in 0..4 {
            put(&mut h, 280 + 16 * r + 4 * c, &(m[(r, c)] as f32).to_le_bytes());
        }
    }
    put(&mut h, 344, b"n+1\0");

    h.reserve(vol.len() * dtype.size());
    for &l in vol.labels() {
        match dtype {
            DataType::U8 => h.push(l as u8),
            DataType::U16 => h.extend_from_slice(&(l as u16).to_le_bytes()),
            _ => h.extend_from_slice(&l.to_le_bytes()),
        }
    }
    h
}

/// Writes `vol` to `path`, gzip-compressed when the name ends in `.gz`.
/// Output bytes depend only on the volume (the gzip header carries no time).
pub fn write_label_volume(vol: &LabelVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_label_volume(vol);
    let gz = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"));
    if gz {
        let mut enc = GzEncoder::new(Vec::new(), Compression::new(6));
        enc.write_all(&bytes)?;
        std::fs::write(path, enc.finish()?)?;
    } else {
        std::fs::write(path, bytes)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(dims: [usize; 3], frame: AffineFrame) -> LabelVolume {
        let n: usize = dims.iter().product();
        LabelVolume::new(dims, (0..n as u32).map(|i| i % 7).collect(), frame).unwrap()
    }

    fn set_i16(b: &mut [u8], at: usize, v: i16) {
        b[at..at + 2].copy_from_slice(&v.to_le_bytes());
    }

    fn set_f32(b: &mut [u8], at: usize, v: f32) {
        b[at..at + 4].copy_from_slice(&v.to_le_bytes());
    }

    #[test]
    fn identity_sform_cube() {
        let vol = cube([4, 4, 4], AffineFrame::identity(WorldConvention::Ras));
        let back = parse_label_volume(&encode_label_volume(&vol)).unwrap();
        assert_eq!(back.dims(), [4, 4, 4]);
        assert_eq!(back.convention(), WorldConvention::Ras);
        assert_eq!(*back.frame().matrix(), Matrix4::identity());
        assert_eq!(back.labels(), vol.labels());
    }

    #[test]
    fn qform_only_spacing() {
        let frame = AffineFrame::from_spacing([1.0, 1.0, 3.3], [0.0; 3], WorldConvention::Ras).unwrap();
        let mut b = encode_label_volume(&cube([3, 2, 2], frame));
        set_i16(&mut b, 254, 0);
        set_i16(&mut b, 252, 1);
        // Identity quaternion, zero offset.
        for at in [256, 260, 264, 268, 272, 276] {
            set_f32(&mut b, at, 0.0);
        }
        let vol = parse_label_volume(&b).unwrap();
        let want = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, 1.0, 3.3f32 as f64, 1.0));
        assert_eq!(*vol.frame().matrix(), want);
    }

    #[test]
    fn qform_rotation_and_qfac() {
        // 90 degrees about z: quaternion (cos 45, 0, 0, sin 45); qfac -1 flips k.
        let mut b = encode_label_volume(&cube([2, 2, 2], AffineFrame::identity(WorldConvention::Ras)));
        set_i16(&mut b, 254, 0);
        set_i16(&mut b, 252, 2);
        set_f32(&mut b, 76, -1.0);
        set_f32(&mut b, 80, 2.0);
        set_f32(&mut b, 264, std::f32::consts::FRAC_1_SQRT_2);
        set_f32(&mut b, 268, 5.0);
        let m = *parse_label_volume(&b).unwrap().frame().matrix();
        // Oracle written out by hand: columns R e_x * 2, R e_y, -R e_z.
        let want = Matrix4::new(0.0, -1.0, 0.0, 5.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((m - want).amax() < 1e-6, "{m}");
    }

    #[test]
    fn no_transform_falls_back_to_spacing() {
        let mut b = encode_label_volume(&cube([2, 2, 2], AffineFrame::identity(WorldConvention::Ras)));
        set_i16(&mut b, 254, 0);
        set_f32(&mut b, 88, 2.5);
        let m = *parse_label_volume(&b).unwrap().frame().matrix();
        assert_eq!(m, Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, 1.0, 2.5, 1.0)));
    }

    #[test]
    fn sform_wins_over_qform() {
        let frame = AffineFrame::from_spacing([0.5, 0.5, 2.0], [1.0, 2.0, 3.0], WorldConvention::Ras).unwrap();
        let mut b = encode_label_volume(&cube([2, 2, 2], frame.clone()));
        set_i16(&mut b, 252, 1);
        set_f32(&mut b, 268, 99.0);
        assert_eq!(parse_label_volume(&b).unwrap().frame(), &frame);
    }

    #[test]
    fn big_endian_header_and_data() {
        let vol = cube([2, 3, 2], AffineFrame::identity(WorldConvention::Ras));
        let le = encode_label_volume(&vol);
        // Byte-swap every multi-byte header field we read, and the u8 data stays as is.
        let mut be = le.clone();
        let swap = |b: &mut Vec<u8>, at: usize, n: usize| b[at..at + n].reverse();
        swap(&mut be, 0, 4);
        for at in (40..56).step_by(2).chain([70, 72, 252, 254]) {
            swap(&mut be, at, 2);
        }
        for at in (76..120).step_by(4).chain((256..328).step_by(4)) {
            swap(&mut be, at, 4);
        }
        let back = parse_label_volume(&be).unwrap();
        assert_eq!(back.labels(), vol.labels());
        assert_eq!(back.frame(), vol.frame());
    }

    #[test]
    fn malformed_headers_report_offsets() {
        let good = encode_label_volume(&cube([2, 2, 2], AffineFrame::identity(WorldConvention::Ras)));
        let offset = |b: &[u8]| match parse_label_volume(b) {
            Err(Error::Parse { offset, .. }) => offset,
            other => panic!("expected a parse error, got {other:?}"),
        };
        assert_eq!(offset(&good[..100]), 100);
        let mut b = good.clone();
        b[0] = 0;
        assert_eq!(offset(&b), 0);
        let mut b = good.clone();
        b[345] = b'i';
        assert_eq!(offset(&b), 344);
        let mut b = good.clone();
        set_i16(&mut b, 44, 0);
        assert_eq!(offset(&b), 44);
        let mut b = good.clone();
        set_i16(&mut b, 70, 128);
        assert_eq!(offset(&b), 70);
        let mut b = good.clone();
        set_f32(&mut b, 84, -1.0);
        assert_eq!(offset(&b), 84);
        assert_eq!(offset(&good[..good.len() - 1]), good.len() - 1);
    }

    #[test]
    fn float_payloads() {
        let mut b = encode_label_volume(&cube([2, 1, 1], AffineFrame::identity(WorldConvention::Ras)));
        b.truncate(DATA_OFFSET);
        set_i16(&mut b, 70, 16);
        set_i16(&mut b, 72, 32);
        let with = |vals: [f32; 2]| {
            let mut f = b.clone();
            for v in vals {
                f.extend_from_slice(&v.to_le_bytes());
            }
            parse_label_volume(&f)
        };
        assert_eq!(with([3.0, 41.0]).unwrap().labels(), &[3, 41]);
        assert!(matches!(with([3.0, 41.5]), Err(Error::NotALabelMap(_))));
        assert!(matches!(with([-2.0, 1.0]), Err(Error::NotALabelMap(_))));
    }

    #[test]
    fn scaled_data_must_stay_integral() {
        let mut b = encode_label_volume(&cube([2, 1, 1], AffineFrame::identity(WorldConvention::Ras)));
        set_f32(&mut b, 112, 2.0);
        set_f32(&mut b, 116, 1.0);
        // Stored 0 and 1 become 1 and 3.
        assert_eq!(parse_label_volume(&b).unwrap().labels(), &[1, 3]);
        set_f32(&mut b, 112, 0.5);
        set_f32(&mut b, 116, 0.0);
        assert!(matches!(parse_label_volume(&b), Err(Error::NotALabelMap(_))));
    }

    #[test]
    fn wide_labels_pick_wider_types() {
        let f = AffineFrame::identity(WorldConvention::Ras);
        for (max, code) in [(255u32, 2i16), (2650, 512), (70_000, 768)] {
            let vol = LabelVolume::new([2, 1, 1], vec![0, max], f.clone()).unwrap();
            let b = encode_label_volume(&vol);
            assert_eq!(i16::from_le_bytes([b[70], b[71]]), code);
            assert_eq!(parse_label_volume(&b).unwrap().labels(), &[0, max]);
        }
    }

    #[test]
    fn lps_frames_are_written_in_ras() {
        let lps = AffineFrame::from_spacing([1.0, 2.0, 3.0], [4.0, 5.0, 6.0], WorldConvention::Lps).unwrap();
        let vol = cube([2, 2, 2], lps.clone());
        let back = parse_label_volume(&encode_label_volume(&vol)).unwrap();
        assert_eq!(back.frame(), &lps.with_convention(WorldConvention::Ras));
    }
}
