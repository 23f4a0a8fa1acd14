//! NIfTI-1 reading and writing.
//!
//! The format is a 348-byte binary header (little- or big-endian) followed by
//! raw voxel data at `vox_offset`. Voxel data is stored with the x axis
//! fastest; internally we index (z, y, x) slowest→fastest, so `dim` and
//! `pixdim` are reversed on load while the flat data buffer is kept as-is.
//! Orientation fields (qform/sform) are parsed but ignored; geometry comes
//! from `pixdim` spacing alone.
//!
//! Gzip-compressed streams (`.nii.gz`) are detected by magic bytes and
//! decompressed transparently on read.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::volume::{num_elements, ClassMap, Volume};

const HEADER_SIZE: usize = 348;
const MIN_FILE_SIZE: usize = 352;

mod offsets {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const MAGIC: usize = 344;
}

/// Supported NIfTI-1 datatype codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(i16)]
pub enum Datatype {
    UInt8 = 2,
    Int16 = 4,
    Int32 = 8,
    Float32 = 16,
    Float64 = 64,
    UInt16 = 512,
}

impl Datatype {
    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(Self::UInt8),
            4 => Ok(Self::Int16),
            8 => Ok(Self::Int32),
            16 => Ok(Self::Float32),
            64 => Ok(Self::Float64),
            512 => Ok(Self::UInt16),
            _ => Err(Error::UnsupportedDatatype(code)),
        }
    }

    pub const fn byte_size(self) -> usize {
        match self {
            Self::UInt8 => 1,
            Self::Int16 | Self::UInt16 => 2,
            Self::Int32 | Self::Float32 => 4,
            Self::Float64 => 8,
        }
    }

    pub const fn bitpix(self) -> i16 {
        (self.byte_size() * 8) as i16
    }

    pub const fn name(self) -> &'static str {
        match self {
            Self::UInt8 => "uint8",
            Self::Int16 => "int16",
            Self::Int32 => "int32",
            Self::Float32 => "float32",
            Self::Float64 => "float64",
            Self::UInt16 => "uint16",
        }
    }
}

/// The NIfTI-1 header fields this pipeline consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub sizeof_hdr: i32,
    /// dim[0] is the rank; dim[1..=rank] are extents, x fastest.
    pub dim: [i16; 8],
    pub datatype: Datatype,
    pub bitpix: i16,
    /// pixdim[1..=rank] are voxel spacings in mm, x first.
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    /// Parsed but unused for geometry.
    pub qform_code: i16,
    /// Parsed but unused for geometry.
    pub sform_code: i16,
    pub magic: [u8; 4],
    pub little_endian: bool,
}

impl NiftiHeader {
    /// Spatial extents in internal (z, y, x) order.
    pub fn spatial_shape(&self) -> Vec<usize> {
        let rank = self.spatial_rank();
        (1..=rank).rev().map(|i| self.dim[i] as usize).collect()
    }

    /// Voxel spacing in internal (z, y, x) order.
    pub fn spatial_spacing(&self) -> Vec<f64> {
        let rank = self.spatial_rank();
        (1..=rank).rev().map(|i| self.pixdim[i] as f64).collect()
    }

    /// Rank of the spatial part; a 4D file with a single frame counts as 3D.
    pub fn spatial_rank(&self) -> usize {
        if self.dim[0] == 4 && self.dim[4] == 1 {
            3
        } else {
            self.dim[0] as usize
        }
    }
}

fn is_gzip(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b
}

/// Gzip-compress a byte buffer (used to emit `.nii.gz`).
pub fn gzip_compress(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(bytes)?;
    Ok(enc.finish()?)
}

fn gzip_decompress(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    MultiGzDecoder::new(bytes).read_to_end(&mut out)?;
    Ok(out)
}

/// Parse a NIfTI-1 byte stream into header plus scalar volume.
///
/// Endianness is auto-detected by checking whether dim[0] decodes into
/// [1, 7] natively; the intensity rescale `v' = scl_slope * v + scl_inter`
/// is applied when `scl_slope != 0`. Gzip input is decompressed first.
pub fn read_nifti(bytes: &[u8]) -> Result<(NiftiHeader, Volume)> {
    let decompressed;
    let bytes = if is_gzip(bytes) {
        decompressed = gzip_decompress(bytes)?;
        &decompressed[..]
    } else {
        bytes
    };

    if bytes.len() < MIN_FILE_SIZE {
        return Err(Error::TruncatedData {
            expected: MIN_FILE_SIZE,
            actual: bytes.len(),
        });
    }

    let magic: [u8; 4] = bytes[offsets::MAGIC..offsets::MAGIC + 4]
        .try_into()
        .unwrap();
    if &magic != b"n+1\0" && &magic != b"ni1\0" {
        return Err(Error::BadMagic(magic));
    }

    let dim0_le = LittleEndian::read_i16(&bytes[offsets::DIM..offsets::DIM + 2]);
    let dim0_be = BigEndian::read_i16(&bytes[offsets::DIM..offsets::DIM + 2]);
    let little_endian = if (1..=7).contains(&dim0_le) {
        true
    } else if (1..=7).contains(&dim0_be) {
        false
    } else {
        return Err(Error::InvalidHeader(format!(
            "dim[0] decodes to {dim0_le} (LE) / {dim0_be} (BE); neither is in [1, 7]"
        )));
    };

    if little_endian {
        parse::<LittleEndian>(bytes, magic, true)
    } else {
        parse::<BigEndian>(bytes, magic, false)
    }
}

fn parse<E: ByteOrder>(
    bytes: &[u8],
    magic: [u8; 4],
    little_endian: bool,
) -> Result<(NiftiHeader, Volume)> {
    let sizeof_hdr = E::read_i32(&bytes[offsets::SIZEOF_HDR..offsets::SIZEOF_HDR + 4]);
    if sizeof_hdr != HEADER_SIZE as i32 {
        return Err(Error::InvalidHeader(format!(
            "sizeof_hdr {sizeof_hdr} != {HEADER_SIZE}"
        )));
    }

    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = E::read_i16(&bytes[offsets::DIM + 2 * i..offsets::DIM + 2 * i + 2]);
    }
    let rank = dim[0] as usize;
    for (i, &d) in dim.iter().enumerate().take(rank + 1).skip(1) {
        if d < 1 {
            return Err(Error::InvalidHeader(format!("dim[{i}] = {d} < 1")));
        }
    }

    let datatype = Datatype::from_code(E::read_i16(
        &bytes[offsets::DATATYPE..offsets::DATATYPE + 2],
    ))?;
    let bitpix = E::read_i16(&bytes[offsets::BITPIX..offsets::BITPIX + 2]);
    if bitpix != datatype.bitpix() {
        return Err(Error::InvalidHeader(format!(
            "bitpix {bitpix} inconsistent with datatype {} ({} bits)",
            datatype.name(),
            datatype.bitpix()
        )));
    }

    let mut pixdim = [0f32; 8];
    for (i, p) in pixdim.iter_mut().enumerate() {
        *p = E::read_f32(&bytes[offsets::PIXDIM + 4 * i..offsets::PIXDIM + 4 * i + 4]);
    }

    let header = NiftiHeader {
        sizeof_hdr,
        dim,
        datatype,
        bitpix,
        pixdim,
        vox_offset: E::read_f32(&bytes[offsets::VOX_OFFSET..offsets::VOX_OFFSET + 4]),
        scl_slope: E::read_f32(&bytes[offsets::SCL_SLOPE..offsets::SCL_SLOPE + 4]),
        scl_inter: E::read_f32(&bytes[offsets::SCL_INTER..offsets::SCL_INTER + 4]),
        qform_code: E::read_i16(&bytes[offsets::QFORM_CODE..offsets::QFORM_CODE + 2]),
        sform_code: E::read_i16(&bytes[offsets::SFORM_CODE..offsets::SFORM_CODE + 2]),
        magic,
        little_endian,
    };

    match header.dim[0] {
        2 | 3 => {}
        4 if header.dim[4] == 1 => {}
        r => {
            return Err(Error::InvalidHeader(format!(
                "unsupported rank {r} (expect 2D, 3D or 4D with one frame)"
            )))
        }
    }

    let shape = header.spatial_shape();
    let spacing = header.spatial_spacing();
    if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidSpacing(format!(
            "pixdim gives spacing {spacing:?}"
        )));
    }

    let n = num_elements(&shape);
    let elem = header.datatype.byte_size();
    let expected = n * elem;
    if header.vox_offset < MIN_FILE_SIZE as f32 || header.vox_offset.fract() != 0.0 {
        return Err(Error::InvalidHeader(format!(
            "vox_offset {}",
            header.vox_offset
        )));
    }
    let off = header.vox_offset as usize;
    if bytes.len() < off + expected {
        return Err(Error::TruncatedData {
            expected,
            actual: bytes.len().saturating_sub(off),
        });
    }
    let raw = &bytes[off..off + expected];

    let rescale = header.scl_slope != 0.0;
    let slope = header.scl_slope as f64;
    let inter = header.scl_inter as f64;
    let mut data = Vec::with_capacity(n);
    for i in 0..n {
        let v = decode_value::<E>(raw, i, header.datatype);
        let v = if rescale { slope * v + inter } else { v };
        data.push(v as f32);
    }

    let volume = Volume::new(shape, spacing, data)?;
    Ok((header, volume))
}

fn decode_value<E: ByteOrder>(raw: &[u8], i: usize, dt: Datatype) -> f64 {
    match dt {
        Datatype::UInt8 => raw[i] as f64,
        Datatype::Int16 => E::read_i16(&raw[2 * i..2 * i + 2]) as f64,
        Datatype::Int32 => E::read_i32(&raw[4 * i..4 * i + 4]) as f64,
        Datatype::Float32 => E::read_f32(&raw[4 * i..4 * i + 4]) as f64,
        Datatype::Float64 => E::read_f64(&raw[8 * i..8 * i + 8]),
        Datatype::UInt16 => E::read_u16(&raw[2 * i..2 * i + 2]) as f64,
    }
}

/// Parse a label map. Voxel values must be non-negative integers below
/// `n_classes`.
pub fn read_nifti_labels(bytes: &[u8], n_classes: usize) -> Result<(NiftiHeader, ClassMap)> {
    let (header, volume) = read_nifti(bytes)?;
    let mut ids = Vec::with_capacity(volume.len());
    for (i, &v) in volume.data().iter().enumerate() {
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::InvalidHeader(format!(
                "label voxel {i} has non-integer value {v}"
            )));
        }
        let id = v as u32;
        if id as usize >= n_classes {
            return Err(Error::ShapeMismatch(format!(
                "label id {id} out of range [0, {n_classes})"
            )));
        }
        ids.push(id);
    }
    let labels = ClassMap::new(
        volume.shape().to_vec(),
        volume.spacing().to_vec(),
        ids,
        n_classes,
    )?;
    Ok((header, labels))
}

fn write_header(shape: &[usize], spacing: &[f64], datatype: Datatype, total_len: usize) -> Vec<u8> {
    let mut buf = vec![0u8; total_len];
    LittleEndian::write_i32(
        &mut buf[offsets::SIZEOF_HDR..offsets::SIZEOF_HDR + 4],
        HEADER_SIZE as i32,
    );

    let rank = shape.len();
    let mut dim = [1i16; 8];
    dim[0] = rank as i16;
    for (i, &e) in shape.iter().rev().enumerate() {
        assert!(
            e <= i16::MAX as usize,
            "extent {e} exceeds the NIfTI-1 dim range"
        );
        dim[i + 1] = e as i16;
    }
    for (i, &d) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut buf[offsets::DIM + 2 * i..offsets::DIM + 2 * i + 2], d);
    }

    LittleEndian::write_i16(
        &mut buf[offsets::DATATYPE..offsets::DATATYPE + 2],
        datatype as i16,
    );
    LittleEndian::write_i16(
        &mut buf[offsets::BITPIX..offsets::BITPIX + 2],
        datatype.bitpix(),
    );

    let mut pixdim = [0f32; 8];
    pixdim[0] = 1.0;
    for (i, &s) in spacing.iter().rev().enumerate() {
        pixdim[i + 1] = s as f32;
    }
    for (i, &p) in pixdim.iter().enumerate() {
        LittleEndian::write_f32(
            &mut buf[offsets::PIXDIM + 4 * i..offsets::PIXDIM + 4 * i + 4],
            p,
        );
    }

    LittleEndian::write_f32(
        &mut buf[offsets::VOX_OFFSET..offsets::VOX_OFFSET + 4],
        MIN_FILE_SIZE as f32,
    );
    LittleEndian::write_f32(&mut buf[offsets::SCL_SLOPE..offsets::SCL_SLOPE + 4], 0.0);
    LittleEndian::write_f32(&mut buf[offsets::SCL_INTER..offsets::SCL_INTER + 4], 0.0);
    buf[offsets::XYZT_UNITS] = 2; // millimeters
    buf[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(b"n+1\0");
    buf
}

/// Serialize a volume as a single-file NIfTI-1 (float32, little-endian,
/// vox_offset 352, no intensity rescale).
pub fn write_nifti(volume: &Volume) -> Vec<u8> {
    let n = volume.len();
    let mut buf = write_header(
        volume.shape(),
        volume.spacing(),
        Datatype::Float32,
        MIN_FILE_SIZE + 4 * n,
    );
    for (i, &v) in volume.data().iter().enumerate() {
        LittleEndian::write_f32(
            &mut buf[MIN_FILE_SIZE + 4 * i..MIN_FILE_SIZE + 4 * i + 4],
            v,
        );
    }
    buf
}

/// Serialize a label map as uint8 NIfTI-1. Fails when the class count
/// exceeds the uint8 range.
pub fn write_nifti_labels(labels: &ClassMap) -> Result<Vec<u8>> {
    if labels.n_classes() > 256 {
        return Err(Error::TooManyClasses(labels.n_classes()));
    }
    let n = labels.len();
    let mut buf = write_header(
        labels.shape(),
        labels.spacing(),
        Datatype::UInt8,
        MIN_FILE_SIZE + n,
    );
    for (i, &id) in labels.data().iter().enumerate() {
        buf[MIN_FILE_SIZE + i] = id as u8;
    }
    Ok(buf)
}

/// Read a volume from `.nii` or `.nii.gz` on disk.
pub fn read_volume_file(path: &Path) -> Result<(NiftiHeader, Volume)> {
    let bytes = std::fs::read(path)?;
    read_nifti(&bytes)
}

/// Read a label map from `.nii` or `.nii.gz` on disk.
pub fn read_labels_file(path: &Path, n_classes: usize) -> Result<(NiftiHeader, ClassMap)> {
    let bytes = std::fs::read(path)?;
    read_nifti_labels(&bytes, n_classes)
}

/// Write a volume to disk; a `.gz` extension selects gzip output.
pub fn write_volume_file(path: &Path, volume: &Volume) -> Result<()> {
    let bytes = write_nifti(volume);
    write_maybe_gz(path, &bytes)
}

/// Write a label map to disk; a `.gz` extension selects gzip output.
pub fn write_labels_file(path: &Path, labels: &ClassMap) -> Result<()> {
    let bytes = write_nifti_labels(labels)?;
    write_maybe_gz(path, &bytes)
}

fn write_maybe_gz(path: &Path, bytes: &[u8]) -> Result<()> {
    let out = if path.extension().is_some_and(|e| e == "gz") {
        gzip_compress(bytes)?
    } else {
        bytes.to_vec()
    };
    crate::sample_io::write_atomic(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 352-byte single-file fixture: 2x2x2 float32 ramp 0..7, unit spacing.
    pub(crate) fn fixture_2x2x2() -> Vec<u8> {
        let mut buf = vec![0u8; 352 + 8 * 4];
        LittleEndian::write_i32(&mut buf[0..4], 348);
        for i in 0..8 {
            let d: i16 = match i {
                0 => 3,
                1..=3 => 2,
                _ => 1,
            };
            LittleEndian::write_i16(&mut buf[40 + 2 * i..42 + 2 * i], d);
        }
        LittleEndian::write_i16(&mut buf[70..72], 16); // float32
        LittleEndian::write_i16(&mut buf[72..74], 32);
        for i in 0..4 {
            LittleEndian::write_f32(&mut buf[76 + 4 * i..80 + 4 * i], 1.0);
        }
        LittleEndian::write_f32(&mut buf[108..112], 352.0);
        buf[344..348].copy_from_slice(b"n+1\0");
        for i in 0..8 {
            LittleEndian::write_f32(&mut buf[352 + 4 * i..356 + 4 * i], i as f32);
        }
        buf
    }

    /// The fixture with every multi-byte field (and voxel) byte-swapped.
    pub(crate) fn fixture_2x2x2_big_endian() -> Vec<u8> {
        let mut buf = vec![0u8; 352 + 8 * 4];
        BigEndian::write_i32(&mut buf[0..4], 348);
        for i in 0..8 {
            let d: i16 = match i {
                0 => 3,
                1..=3 => 2,
                _ => 1,
            };
            BigEndian::write_i16(&mut buf[40 + 2 * i..42 + 2 * i], d);
        }
        BigEndian::write_i16(&mut buf[70..72], 16);
        BigEndian::write_i16(&mut buf[72..74], 32);
        for i in 0..4 {
            BigEndian::write_f32(&mut buf[76 + 4 * i..80 + 4 * i], 1.0);
        }
        BigEndian::write_f32(&mut buf[108..112], 352.0);
        buf[344..348].copy_from_slice(b"n+1\0");
        for i in 0..8 {
            BigEndian::write_f32(&mut buf[352 + 4 * i..356 + 4 * i], i as f32);
        }
        buf
    }

    #[test]
    fn hand_built_fixture_parses() {
        let (header, volume) = read_nifti(&fixture_2x2x2()).unwrap();
        assert_eq!(header.datatype, Datatype::Float32);
        assert!(header.little_endian);
        assert_eq!(volume.shape(), &[2, 2, 2]);
        assert_eq!(volume.spacing(), &[1.0, 1.0, 1.0]);
        let expect: Vec<f32> = (0..8).map(|i| i as f32).collect();
        assert_eq!(volume.data(), &expect[..]);
    }

    #[test]
    fn byte_swapped_fixture_parses_identically() {
        let (_, le) = read_nifti(&fixture_2x2x2()).unwrap();
        let (header, be) = read_nifti(&fixture_2x2x2_big_endian()).unwrap();
        assert!(!header.little_endian);
        assert_eq!(le, be);
    }

    #[test]
    fn write_read_round_trip_is_exact() {
        let data: Vec<f32> = (0..24).map(|i| (i as f32) * 0.37 - 2.0).collect();
        let v = Volume::new(vec![2, 3, 4], vec![3.22, 1.62, 1.62], data).unwrap();
        let bytes = write_nifti(&v);
        let (header, back) = read_nifti(&bytes).unwrap();
        assert_eq!(back.data(), v.data());
        assert_eq!(back.shape(), v.shape());
        for (a, b) in back.spacing().iter().zip(v.spacing()) {
            assert!((a - b).abs() / b < 1e-6);
        }
        // x is the fastest axis on disk
        assert_eq!(&header.dim[..4], &[3, 4, 3, 2]);
    }

    #[test]
    fn ramp_file_length_matches_layout() {
        let v = Volume::new(
            vec![2, 2, 2],
            vec![1.0; 3],
            (0..8).map(|i| i as f32).collect(),
        )
        .unwrap();
        assert_eq!(write_nifti(&v).len(), 352 + 8 * 4);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut buf = fixture_2x2x2();
        buf[344..348].copy_from_slice(b"XXXX");
        match read_nifti(&buf) {
            Err(Error::BadMagic(m)) => assert_eq!(&m, b"XXXX"),
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn truncated_data_is_detected() {
        let buf = fixture_2x2x2();
        let cut = &buf[..buf.len() - 5];
        match read_nifti(cut) {
            Err(Error::TruncatedData { expected, actual }) => {
                assert_eq!(expected, 32);
                assert_eq!(actual, 27);
            }
            other => panic!("expected TruncatedData, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_datatype_is_rejected() {
        let mut buf = fixture_2x2x2();
        LittleEndian::write_i16(&mut buf[70..72], 128); // RGB
        match read_nifti(&buf) {
            Err(Error::UnsupportedDatatype(128)) => {}
            other => panic!("expected UnsupportedDatatype, got {other:?}"),
        }
    }

    #[test]
    fn scl_slope_zero_means_no_rescale() {
        let (_, v) = read_nifti(&fixture_2x2x2()).unwrap();
        assert_eq!(v.data()[7], 7.0);
    }

    #[test]
    fn scl_slope_rescales_intensities() {
        let mut buf = fixture_2x2x2();
        LittleEndian::write_f32(&mut buf[112..116], 2.0);
        LittleEndian::write_f32(&mut buf[116..120], -1.0);
        let (_, v) = read_nifti(&buf).unwrap();
        let expect: Vec<f32> = (0..8).map(|i| 2.0 * i as f32 - 1.0).collect();
        assert_eq!(v.data(), &expect[..]);
    }

    #[test]
    fn four_d_single_frame_reads_as_3d() {
        let mut buf = fixture_2x2x2();
        LittleEndian::write_i16(&mut buf[40..42], 4);
        LittleEndian::write_i16(&mut buf[48..50], 1); // dim[4]
        let (_, v) = read_nifti(&buf).unwrap();
        assert_eq!(v.shape(), &[2, 2, 2]);
    }

    #[test]
    fn four_d_multi_frame_is_rejected() {
        let mut buf = fixture_2x2x2();
        LittleEndian::write_i16(&mut buf[40..42], 4);
        LittleEndian::write_i16(&mut buf[42..44], 1);
        LittleEndian::write_i16(&mut buf[48..50], 2);
        assert!(matches!(read_nifti(&buf), Err(Error::InvalidHeader(_))));
    }

    #[test]
    fn nan_voxels_are_an_error() {
        let mut buf = fixture_2x2x2();
        LittleEndian::write_f32(&mut buf[352..356], f32::NAN);
        assert!(matches!(read_nifti(&buf), Err(Error::NonFiniteVoxel(0))));
    }

    #[test]
    fn labels_round_trip_as_uint8() {
        let labels = ClassMap::new(vec![2, 2], vec![1.0, 1.0], vec![0, 1, 2, 1], 3).unwrap();
        let bytes = write_nifti_labels(&labels).unwrap();
        let (header, back) = read_nifti_labels(&bytes, 3).unwrap();
        assert_eq!(header.datatype, Datatype::UInt8);
        assert_eq!(back, labels);
    }

    #[test]
    fn too_many_classes_rejected_on_write() {
        let labels = ClassMap::zeros(vec![2, 2], vec![1.0, 1.0], 300).unwrap();
        assert!(matches!(
            write_nifti_labels(&labels),
            Err(Error::TooManyClasses(300))
        ));
    }

    #[test]
    fn gzip_stream_is_transparent() {
        let v = Volume::new(vec![2, 2], vec![0.5, 2.0], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let gz = gzip_compress(&write_nifti(&v)).unwrap();
        let (_, back) = read_nifti(&gz).unwrap();
        assert_eq!(back.data(), v.data());
    }

    #[test]
    fn int16_and_uint16_decode() {
        let mut buf = vec![0u8; 352 + 8 * 2];
        buf[..348].copy_from_slice(&fixture_2x2x2()[..348]);
        LittleEndian::write_i16(&mut buf[70..72], 4); // int16
        LittleEndian::write_i16(&mut buf[72..74], 16);
        buf[344..348].copy_from_slice(b"n+1\0");
        for i in 0..8 {
            LittleEndian::write_i16(&mut buf[352 + 2 * i..354 + 2 * i], i as i16 - 4);
        }
        let (_, v) = read_nifti(&buf).unwrap();
        assert_eq!(v.data()[0], -4.0);
        assert_eq!(v.data()[7], 3.0);

        LittleEndian::write_i16(&mut buf[70..72], 512); // uint16
        for i in 0..8 {
            LittleEndian::write_u16(&mut buf[352 + 2 * i..354 + 2 * i], 1000 + i as u16);
        }
        let (_, v) = read_nifti(&buf).unwrap();
        assert_eq!(v.data()[7], 1007.0);
    }
}
