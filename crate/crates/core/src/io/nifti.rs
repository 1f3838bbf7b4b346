//! Single-file NIfTI-1 (`.nii`) subset.
//!
//! Supported: 1-5 dimensions where dims 4 and 5 may only hold a single time point
//! and a 3-component vector, datatypes uint8, float32 and float64, either byte
//! order. Writing is little-endian with the geometry in the sform (code 1) and
//! qform code 0. Vector images are stored with the component axis slowest.

use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarImage, VectorImage};

pub const HEADER_SIZE: usize = 348;
/// Header plus the 4-byte empty extension flag.
pub const DATA_OFFSET: usize = 352;
pub const INTENT_VECTOR: i16 = 1007;

const OFF_DIM: usize = 40;
const OFF_INTENT_CODE: usize = 68;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_SCL_SLOPE: usize = 112;
const OFF_SCL_INTER: usize = 116;
const OFF_XYZT_UNITS: usize = 123;
const OFF_QFORM_CODE: usize = 252;
const OFF_SFORM_CODE: usize = 254;
const OFF_QUATERN: usize = 256;
const OFF_QOFFSET: usize = 268;
const OFF_SROW: usize = 280;
const OFF_MAGIC: usize = 344;
const MAGIC: [u8; 4] = *b"n+1\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    U8,
    F32,
    F64,
}

impl Datatype {
    pub fn code(self) -> i16 {
        match self {
            Self::U8 => 2,
            Self::F32 => 16,
            Self::F64 => 64,
        }
    }

    pub fn from_code(code: i16) -> Option<Self> {
        match code {
            2 => Some(Self::U8),
            16 => Some(Self::F32),
            64 => Some(Self::F64),
            _ => None,
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            Self::U8 => 1,
            Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

impl std::str::FromStr for Datatype {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "uint8" | "u8" => Ok(Self::U8),
            "float32" | "f32" => Ok(Self::F32),
            "float64" | "f64" => Ok(Self::F64),
            other => Err(format!(
                "unknown datatype '{other}' (expected uint8, float32 or float64)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Endian {
    #[default]
    Little,
    Big,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NiftiImage {
    Scalar(ScalarImage),
    Vector(VectorImage),
}

impl NiftiImage {
    pub fn grid(&self) -> &GridSpec {
        match self {
            Self::Scalar(s) => s.grid(),
            Self::Vector(v) => v.grid(),
        }
    }
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<NiftiImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn read_scalar_nifti(path: impl AsRef<Path>) -> Result<ScalarImage> {
    match read_nifti(path)? {
        NiftiImage::Scalar(s) => Ok(s),
        NiftiImage::Vector(_) => Err(Error::InvalidHeader {
            field: "dim",
            value: "vector image where a scalar image was expected".into(),
            offset: OFF_DIM,
        }),
    }
}

pub fn read_vector_nifti(path: impl AsRef<Path>) -> Result<VectorImage> {
    match read_nifti(path)? {
        NiftiImage::Vector(v) => Ok(v),
        NiftiImage::Scalar(_) => Err(Error::InvalidHeader {
            field: "dim",
            value: "scalar image where a displacement field was expected".into(),
            offset: OFF_DIM,
        }),
    }
}

pub fn write_nifti(img: &ScalarImage, path: impl AsRef<Path>, datatype: Datatype) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_scalar(img, datatype, Endian::Little))
        .map_err(|e| Error::io(path, e))
}

pub fn write_vector_nifti(
    img: &VectorImage,
    path: impl AsRef<Path>,
    datatype: Datatype,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_vector(img, datatype, Endian::Little)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_scalar(img: &ScalarImage, datatype: Datatype, endian: Endian) -> Vec<u8> {
    match endian {
        Endian::Little => encode::<LittleEndian>(img.grid(), img.data(), 1, datatype),
        Endian::Big => encode::<BigEndian>(img.grid(), img.data(), 1, datatype),
    }
}

pub fn encode_vector(img: &VectorImage, datatype: Datatype, endian: Endian) -> Result<Vec<u8>> {
    if datatype == Datatype::U8 {
        return Err(Error::InvalidConfig(
            "displacement fields need a float datatype".into(),
        ));
    }
    let planar: Vec<f64> = (0..3)
        .flat_map(|c| img.data().iter().map(move |v| v[c]))
        .collect();
    Ok(match endian {
        Endian::Little => encode::<LittleEndian>(img.grid(), &planar, 3, datatype),
        Endian::Big => encode::<BigEndian>(img.grid(), &planar, 3, datatype),
    })
}

fn encode<B: ByteOrder>(
    grid: &GridSpec,
    data: &[f64],
    components: usize,
    datatype: Datatype,
) -> Vec<u8> {
    let mut out = vec![0u8; DATA_OFFSET + data.len() * datatype.bytes()];
    let h = &mut out[..HEADER_SIZE];
    B::write_i32(&mut h[0..4], HEADER_SIZE as i32);
    h[38] = b'r';

    let d = grid.dims();
    let mut dim = [0i16; 8];
    if components == 1 {
        dim[0] = 3;
        dim[1..4].copy_from_slice(&[d[0] as i16, d[1] as i16, d[2] as i16]);
        dim[4..].fill(1);
    } else {
        dim = [
            5,
            d[0] as i16,
            d[1] as i16,
            d[2] as i16,
            1,
            components as i16,
            1,
            1,
        ];
        B::write_i16(&mut h[OFF_INTENT_CODE..], INTENT_VECTOR);
    }
    for (i, v) in dim.iter().enumerate() {
        B::write_i16(&mut h[OFF_DIM + 2 * i..], *v);
    }
    B::write_i16(&mut h[OFF_DATATYPE..], datatype.code());
    B::write_i16(&mut h[OFF_BITPIX..], 8 * datatype.bytes() as i16);

    let s = grid.spacing();
    let pixdim = [
        1.0f32,
        s[0] as f32,
        s[1] as f32,
        s[2] as f32,
        1.0,
        1.0,
        1.0,
        1.0,
    ];
    for (i, v) in pixdim.iter().enumerate() {
        B::write_f32(&mut h[OFF_PIXDIM + 4 * i..], *v);
    }
    B::write_f32(&mut h[OFF_VOX_OFFSET..], DATA_OFFSET as f32);
    let slope = if datatype == Datatype::U8 {
        1.0 / 255.0
    } else {
        1.0
    };
    B::write_f32(&mut h[OFF_SCL_SLOPE..], slope);
    B::write_f32(&mut h[OFF_SCL_INTER..], 0.0);
    h[OFF_XYZT_UNITS] = 2; // mm

    B::write_i16(&mut h[OFF_QFORM_CODE..], 0);
    B::write_i16(&mut h[OFF_SFORM_CODE..], 1);
    let m = grid.index_to_world_matrix();
    let o = grid.origin();
    for r in 0..3 {
        for c in 0..4 {
            let v = if c < 3 { m[(r, c)] } else { o[r] };
            B::write_f32(&mut h[OFF_SROW + 16 * r + 4 * c..], v as f32);
        }
    }
    h[OFF_MAGIC..OFF_MAGIC + 4].copy_from_slice(&MAGIC);

    let body = &mut out[DATA_OFFSET..];
    match datatype {
        Datatype::U8 => {
            for (dst, v) in body.iter_mut().zip(data) {
                *dst = if v.is_nan() {
                    0
                } else {
                    (v.clamp(0.0, 1.0) * 255.0).round() as u8
                };
            }
        }
        Datatype::F32 => {
            for (chunk, v) in body.chunks_exact_mut(4).zip(data) {
                B::write_f32(chunk, *v as f32);
            }
        }
        Datatype::F64 => {
            for (chunk, v) in body.chunks_exact_mut(8).zip(data) {
                B::write_f64(chunk, *v);
            }
        }
    }
    out
}

/// Parse a complete `.nii` byte buffer.
pub fn decode(bytes: &[u8]) -> Result<NiftiImage> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::TruncatedFile {
            field: "header",
            offset: 0,
            needed: HEADER_SIZE,
            len: bytes.len(),
        });
    }
    if LittleEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
        decode_with::<LittleEndian>(bytes)
    } else if BigEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
        decode_with::<BigEndian>(bytes)
    } else {
        Err(Error::InvalidHeader {
            field: "sizeof_hdr",
            value: LittleEndian::read_i32(&bytes[0..4]).to_string(),
            offset: 0,
        })
    }
}

fn decode_with<B: ByteOrder>(bytes: &[u8]) -> Result<NiftiImage> {
    let magic: [u8; 4] = bytes[OFF_MAGIC..OFF_MAGIC + 4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(Error::BadMagic {
            found: magic,
            offset: OFF_MAGIC,
        });
    }
    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = B::read_i16(&bytes[OFF_DIM + 2 * i..]);
    }
    let unsupported = Error::UnsupportedDimensions {
        dims: dim,
        offset: OFF_DIM,
    };
    let ndim = dim[0];
    if !(1..=5).contains(&ndim) || dim[1..=ndim as usize].iter().any(|&d| d < 1) {
        return Err(unsupported);
    }
    let extent = |i: usize| {
        if (i as i16) <= ndim {
            dim[i] as usize
        } else {
            1
        }
    };
    let components = match (extent(4), extent(5)) {
        (1, 1) => 1,
        (1, 3) => 3,
        _ => return Err(unsupported),
    };

    let code = B::read_i16(&bytes[OFF_DATATYPE..]);
    let datatype = Datatype::from_code(code).ok_or(Error::UnsupportedDatatype {
        code,
        offset: OFF_DATATYPE,
    })?;
    let bitpix = B::read_i16(&bytes[OFF_BITPIX..]);
    if bitpix as usize != 8 * datatype.bytes() {
        return Err(Error::InvalidHeader {
            field: "bitpix",
            value: bitpix.to_string(),
            offset: OFF_BITPIX,
        });
    }

    let dims = [extent(1), extent(2), extent(3)];
    let grid = read_geometry::<B>(bytes, dims)?;

    let vox_offset = B::read_f32(&bytes[OFF_VOX_OFFSET..]);
    if !(vox_offset >= HEADER_SIZE as f32) || vox_offset.fract() != 0.0 {
        return Err(Error::InvalidHeader {
            field: "vox_offset",
            value: vox_offset.to_string(),
            offset: OFF_VOX_OFFSET,
        });
    }
    let start = vox_offset as usize;
    let count = grid.len() * components;
    let needed = count * datatype.bytes();
    if bytes.len() < start + needed {
        return Err(Error::TruncatedFile {
            field: "data",
            offset: start,
            needed,
            len: bytes.len(),
        });
    }
    let body = &bytes[start..start + needed];

    let slope = B::read_f32(&bytes[OFF_SCL_SLOPE..]) as f64;
    let inter = B::read_f32(&bytes[OFF_SCL_INTER..]) as f64;
    let scaling = slope != 0.0 && slope.is_finite() && inter.is_finite();
    let values: Vec<f64> = match datatype {
        Datatype::U8 => {
            let (m, c) = if scaling {
                (slope, inter)
            } else {
                (1.0 / 255.0, 0.0)
            };
            body.iter().map(|&b| b as f64 * m + c).collect()
        }
        Datatype::F32 | Datatype::F64 => {
            let raw: Vec<f64> = if datatype == Datatype::F32 {
                body.chunks_exact(4)
                    .map(|c| B::read_f32(c) as f64)
                    .collect()
            } else {
                body.chunks_exact(8).map(B::read_f64).collect()
            };
            if scaling && !(slope == 1.0 && inter == 0.0) {
                raw.into_iter().map(|v| v * slope + inter).collect()
            } else {
                raw
            }
        }
    };

    if components == 1 {
        Ok(NiftiImage::Scalar(ScalarImage::new(grid, values)?))
    } else {
        let n = grid.len();
        let data = (0..n)
            .map(|i| Vector3::new(values[i], values[n + i], values[2 * n + i]))
            .collect();
        Ok(NiftiImage::Vector(VectorImage::new(grid, data)?))
    }
}

fn read_geometry<B: ByteOrder>(bytes: &[u8], dims: [usize; 3]) -> Result<GridSpec> {
    let f = |off: usize| B::read_f32(&bytes[off..]) as f64;
    let pixdim: [f64; 8] = std::array::from_fn(|i| f(OFF_PIXDIM + 4 * i));
    let sform_code = B::read_i16(&bytes[OFF_SFORM_CODE..]);
    let qform_code = B::read_i16(&bytes[OFF_QFORM_CODE..]);

    let invalid = |field: &'static str, value: String, offset: usize| Error::InvalidHeader {
        field,
        value,
        offset,
    };

    if sform_code > 0 {
        let m = Matrix3::from_fn(|r, c| f(OFF_SROW + 16 * r + 4 * c));
        let origin = Vector3::from_fn(|r, _| f(OFF_SROW + 16 * r + 12));
        let spacing = [m.column(0).norm(), m.column(1).norm(), m.column(2).norm()];
        if spacing.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(invalid("srow", format!("{m}"), OFF_SROW));
        }
        let scaled = Matrix3::from_columns(&[
            m.column(0) / spacing[0],
            m.column(1) / spacing[1],
            m.column(2) / spacing[2],
        ]);
        // sform rows are single precision; restore exact orthonormality
        let svd = scaled.svd(true, true);
        let direction = svd.u.expect("requested") * svd.v_t.expect("requested");
        return GridSpec::new(dims, spacing, origin, direction);
    }

    let spacing = [pixdim[1], pixdim[2], pixdim[3]];
    if spacing.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(invalid("pixdim", format!("{spacing:?}"), OFF_PIXDIM + 4));
    }
    if qform_code > 0 {
        let (b, c, d) = (f(OFF_QUATERN), f(OFF_QUATERN + 4), f(OFF_QUATERN + 8));
        let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
        let mut r = Matrix3::new(
            a * a + b * b - c * c - d * d,
            2.0 * (b * c - a * d),
            2.0 * (b * d + a * c),
            2.0 * (b * c + a * d),
            a * a + c * c - b * b - d * d,
            2.0 * (c * d - a * b),
            2.0 * (b * d - a * c),
            2.0 * (c * d + a * b),
            a * a + d * d - b * b - c * c,
        );
        if pixdim[0] < 0.0 {
            let z = -r.column(2);
            r.set_column(2, &z);
        }
        let svd = r.svd(true, true);
        let direction = svd.u.expect("requested") * svd.v_t.expect("requested");
        let origin = Vector3::from_fn(|i, _| f(OFF_QOFFSET + 4 * i));
        return GridSpec::new(dims, spacing, origin, direction);
    }
    GridSpec::new(dims, spacing, Vector3::zeros(), Matrix3::identity())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    fn sample_grid() -> GridSpec {
        GridSpec::axis_aligned([3, 4, 2], [1.5, 0.5, 2.0], [-10.0, 4.25, 0.5]).unwrap()
    }

    fn sample_image() -> ScalarImage {
        ScalarImage::from_fn(sample_grid(), |[i, j, k]| {
            (i as f64).sin() + j as f64 * 1e-7 - k as f64 / 3.0
        })
    }

    #[test]
    fn f64_round_trip_is_exact() {
        let img = sample_image();
        let back = decode(&encode_scalar(&img, Datatype::F64, Endian::Little)).unwrap();
        let NiftiImage::Scalar(back) = back else {
            panic!("scalar expected")
        };
        assert!(back.grid().approx_eq(img.grid(), 1e-9));
        assert!(back
            .data()
            .iter()
            .zip(img.data())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn byte_swapped_header_parses_identically() {
        let img = sample_image();
        for dt in [Datatype::U8, Datatype::F32, Datatype::F64] {
            let le = decode(&encode_scalar(&img, dt, Endian::Little)).unwrap();
            let be = decode(&encode_scalar(&img, dt, Endian::Big)).unwrap();
            assert_eq!(le, be);
        }
    }

    #[test]
    fn file_size_is_header_plus_samples() {
        let img = ScalarImage::filled(sample_grid(), 1.0);
        assert_eq!(
            encode_scalar(&img, Datatype::F32, Endian::Little).len(),
            352 + 24 * 4
        );
        assert_eq!(
            encode_scalar(&img, Datatype::U8, Endian::Little).len(),
            352 + 24
        );
    }

    #[test]
    fn nan_survives_float_formats() {
        let mut img = sample_image();
        img.set(1, 1, 1, f64::NAN);
        for dt in [Datatype::F32, Datatype::F64] {
            let NiftiImage::Scalar(back) =
                decode(&encode_scalar(&img, dt, Endian::Little)).unwrap()
            else {
                panic!()
            };
            assert!(back.get(1, 1, 1).is_nan());
        }
    }

    #[test]
    fn uint8_scaling_rules() {
        let g = GridSpec::axis_aligned([2, 1, 1], [1.0; 3], [0.0; 3]).unwrap();
        let img = ScalarImage::new(g, vec![0.0, 1.0]).unwrap();
        let mut bytes = encode_scalar(&img, Datatype::U8, Endian::Little);
        assert_eq!(&bytes[352..], &[0, 255]);
        let read = |b: &[u8]| match decode(b).unwrap() {
            NiftiImage::Scalar(s) => s.data().to_vec(),
            _ => panic!(),
        };
        let v = read(&bytes);
        assert!((v[1] - 1.0).abs() < 1e-7);
        // no slope: divide by 255
        LittleEndian::write_f32(&mut bytes[OFF_SCL_SLOPE..], 0.0);
        assert_eq!(read(&bytes), vec![0.0, 1.0]);
        // explicit slope and intercept win
        LittleEndian::write_f32(&mut bytes[OFF_SCL_SLOPE..], 2.0);
        LittleEndian::write_f32(&mut bytes[OFF_SCL_INTER..], -1.0);
        assert_eq!(read(&bytes), vec![-1.0, 509.0]);
    }

    #[test]
    fn int16_is_rejected_with_offset() {
        let mut bytes = encode_scalar(&sample_image(), Datatype::F32, Endian::Little);
        LittleEndian::write_i16(&mut bytes[OFF_DATATYPE..], 4);
        let err = decode(&bytes).unwrap_err();
        assert!(matches!(
            err,
            Error::UnsupportedDatatype {
                code: 4,
                offset: 70
            }
        ));
        assert!(err.to_string().contains("datatype=4"));
    }

    #[test]
    fn bad_magic_and_truncation() {
        let bytes = encode_scalar(&sample_image(), Datatype::F32, Endian::Little);
        let mut bad = bytes.clone();
        bad[OFF_MAGIC..OFF_MAGIC + 4].copy_from_slice(b"ni1\0");
        assert!(matches!(
            decode(&bad),
            Err(Error::BadMagic { offset: 344, .. })
        ));
        assert!(matches!(
            decode(&bytes[..bytes.len() - 1]),
            Err(Error::TruncatedFile {
                field: "data",
                offset: 352,
                ..
            })
        ));
        assert!(matches!(
            decode(&bytes[..100]),
            Err(Error::TruncatedFile {
                field: "header",
                ..
            })
        ));
    }

    #[test]
    fn vector_field_round_trip() {
        let g = sample_grid();
        let field = VectorImage::from_world_fn(g, |p| Vector3::new(p.x, -p.y, 0.25 * p.z));
        let bytes = encode_vector(&field, Datatype::F64, Endian::Little).unwrap();
        assert_eq!(LittleEndian::read_i16(&bytes[OFF_DIM..]), 5);
        assert_eq!(LittleEndian::read_i16(&bytes[OFF_DIM + 10..]), 3);
        assert_eq!(
            LittleEndian::read_i16(&bytes[OFF_INTENT_CODE..]),
            INTENT_VECTOR
        );
        let NiftiImage::Vector(back) = decode(&bytes).unwrap() else {
            panic!()
        };
        assert_eq!(back.data(), field.data());
    }

    #[test]
    fn rotated_grid_round_trip() {
        // f32 sform: exact only for representable geometry, orthonormality restored on read
        let r = Rotation3::from_euler_angles(0.3, -0.1, 0.7).into_inner();
        let g = GridSpec::new([2, 2, 2], [1.0; 3], Vector3::new(1.0, 2.0, 3.0), r).unwrap();
        let img = ScalarImage::filled(g.clone(), 1.0);
        let back = decode(&encode_scalar(&img, Datatype::F32, Endian::Little)).unwrap();
        assert!(back.grid().approx_eq(&g, 1e-6));
    }

    #[test]
    fn falls_back_to_pixdim() {
        let mut bytes = encode_scalar(&sample_image(), Datatype::F64, Endian::Little);
        LittleEndian::write_i16(&mut bytes[OFF_SFORM_CODE..], 0);
        let back = decode(&bytes).unwrap();
        assert_eq!(back.grid().spacing(), [1.5, 0.5, 2.0]);
        assert_eq!(back.grid().origin(), Vector3::zeros());
    }

    #[test]
    fn qform_orientation() {
        let mut bytes = encode_scalar(&sample_image(), Datatype::F64, Endian::Little);
        LittleEndian::write_i16(&mut bytes[OFF_SFORM_CODE..], 0);
        LittleEndian::write_i16(&mut bytes[OFF_QFORM_CODE..], 1);
        // 90 degrees about z: (b, c, d) = (0, 0, sin 45)
        LittleEndian::write_f32(
            &mut bytes[OFF_QUATERN + 8..],
            std::f32::consts::FRAC_1_SQRT_2,
        );
        LittleEndian::write_f32(&mut bytes[OFF_QOFFSET..], 5.0);
        let back = decode(&bytes).unwrap();
        let d = back.grid().direction();
        assert!(
            (d - Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0))
                .abs()
                .max()
                < 1e-6
        );
        assert_eq!(back.grid().origin().x, 5.0);
    }
}
