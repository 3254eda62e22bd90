//! PNG and raw tensor file IO.
//!
//! Raw tensor layout (all little-endian): `b"UTSR"`, rank as `u32`, each
//! extent as `u32`, then the samples as `f32` in row-major order.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, RawFormatError, Result};
use crate::labels::LabelMap;
use crate::plane::{Plane, Tensor};

pub const RAW_MAGIC: &[u8; 4] = b"UTSR";

/// Interleaved 8-bit raster with 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Raster {
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Raster> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::invalid(format!(
                "crop {w}x{h} at ({x0},{y0}) outside {}x{} raster",
                self.width, self.height
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(w * h * c);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * c;
            data.extend_from_slice(&self.data[start..start + w * c]);
        }
        Ok(Raster {
            width: w,
            height: h,
            channels: c,
            data,
        })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn decode_png(bytes: &[u8], path: &Path) -> Result<Raster> {
    let decode = |e: png::DecodingError| Error::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(decode)?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(decode)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Unsupported {
            path: path.to_path_buf(),
            msg: format!("bit depth {} (only 8-bit is supported)", info.bit_depth as u8),
        });
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(Error::Unsupported {
                path: path.to_path_buf(),
                msg: format!("color type {other:?} (only grayscale and RGB are supported)"),
            })
        }
    };
    let (width, height) = (info.width as usize, info.height as usize);
    buf.truncate(width * height * channels);
    Ok(Raster {
        width,
        height,
        channels,
        data: buf,
    })
}

pub fn read_png(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_png(&bytes, path)
}

pub fn encode_png(raster: &Raster) -> Result<Vec<u8>> {
    let color = match raster.channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => return Err(Error::invalid(format!("cannot encode {c}-channel PNG"))),
    };
    if raster.data.len() != raster.width * raster.height * raster.channels {
        return Err(Error::shape("raster data length does not match its dimensions"));
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, raster.width as u32, raster.height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let map = |e: png::EncodingError| Error::invalid(format!("PNG encode: {e}"));
        let mut writer = enc.write_header().map_err(map)?;
        writer.write_image_data(&raster.data).map_err(map)?;
    }
    Ok(out)
}

pub fn write_png(path: impl AsRef<Path>, raster: &Raster) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_png(raster)?).map_err(io_err(path))
}

/// Reads an 8-bit PNG as planes in `[0, 1]`: one for grayscale, three for RGB.
pub fn read_plane_png(path: impl AsRef<Path>) -> Result<Vec<Plane>> {
    Ok(raster_to_planes(&read_png(path)?))
}

pub fn raster_to_planes(r: &Raster) -> Vec<Plane> {
    (0..r.channels)
        .map(|c| {
            let data = r
                .data
                .iter()
                .skip(c)
                .step_by(r.channels)
                .map(|&v| v as f32 / 255.0)
                .collect();
            Plane::new(r.height, r.width, data).expect("raster dimensions are consistent")
        })
        .collect()
}

/// Quantizes planes in `[0, 1]` to an 8-bit raster, rounding to nearest.
pub fn planes_to_raster(planes: &[Plane]) -> Result<Raster> {
    let first = planes.first().ok_or(Error::Empty("plane list"))?;
    if planes.len() != 1 && planes.len() != 3 {
        return Err(Error::invalid(format!(
            "PNG output needs 1 or 3 planes, got {}",
            planes.len()
        )));
    }
    for p in planes {
        first.check_same_dims(p, "PNG channels")?;
    }
    let c = planes.len();
    let mut data = vec![0u8; first.len() * c];
    for (k, p) in planes.iter().enumerate() {
        for (i, &v) in p.data().iter().enumerate() {
            data[i * c + k] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    Ok(Raster {
        width: first.width(),
        height: first.height(),
        channels: c,
        data,
    })
}

pub fn write_plane_png(path: impl AsRef<Path>, planes: &[Plane]) -> Result<()> {
    write_png(path, &planes_to_raster(planes)?)
}

pub fn read_label_png(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let r = read_png(path)?;
    if r.channels != 1 {
        return Err(Error::Unsupported {
            path: path.to_path_buf(),
            msg: "label maps must be 8-bit grayscale".into(),
        });
    }
    LabelMap::new(r.height, r.width, r.data)
}

pub fn write_label_png(path: impl AsRef<Path>, labels: &LabelMap) -> Result<()> {
    write_png(
        path,
        &Raster {
            width: labels.width(),
            height: labels.height(),
            channels: 1,
            data: labels.labels().to_vec(),
        },
    )
}

pub fn encode_raw_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn take<'a>(bytes: &'a [u8], at: usize, n: usize) -> std::result::Result<&'a [u8], RawFormatError> {
    bytes.get(at..at + n).ok_or(RawFormatError::ShortRead {
        needed: at + n,
        found: bytes.len(),
    })
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

pub fn decode_raw_tensor(bytes: &[u8]) -> std::result::Result<Tensor, RawFormatError> {
    let magic = take(bytes, 0, 4)?;
    if magic != RAW_MAGIC {
        return Err(RawFormatError::BadMagic([magic[0], magic[1], magic[2], magic[3]]));
    }
    let rank = le_u32(take(bytes, 4, 4)?) as usize;
    if rank == 0 {
        return Err(RawFormatError::ZeroRank);
    }
    let header = rank
        .checked_mul(4)
        .and_then(|n| n.checked_add(8))
        .ok_or(RawFormatError::ShortRead {
            needed: usize::MAX,
            found: bytes.len(),
        })?;
    let dims: Vec<usize> = take(bytes, 8, header - 8)?
        .chunks_exact(4)
        .map(|c| le_u32(c) as usize)
        .collect();
    let data_bytes = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| RawFormatError::ExtentOverflow(dims.iter().map(|&d| d as u64).collect()))?;
    let payload = take(bytes, header, data_bytes)?;
    let trailing = bytes.len() - header - data_bytes;
    if trailing != 0 {
        return Err(RawFormatError::TrailingBytes(trailing));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Tensor::new(dims, data).expect("decoded extents match payload"))
}

pub fn write_raw_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_raw_tensor(t)).map_err(io_err(path))
}

pub fn read_raw_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_raw_tensor(&bytes).map_err(|source| Error::RawFormat {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn two_by_two_png_scales_by_255() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        write_png(
            &path,
            &Raster {
                width: 2,
                height: 2,
                channels: 1,
                data: vec![0, 255, 128, 64],
            },
        )
        .unwrap();
        let planes = read_plane_png(&path).unwrap();
        assert_eq!(planes.len(), 1);
        assert_eq!(
            planes[0].data(),
            &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]
        );
    }

    #[test]
    fn rgb_png_yields_three_planes() {
        let r = Raster {
            width: 2,
            height: 1,
            channels: 3,
            data: vec![1, 2, 3, 4, 5, 6],
        };
        let planes = raster_to_planes(&r);
        assert_eq!(planes.len(), 3);
        assert_eq!(planes[1].data(), &[2.0 / 255.0, 5.0 / 255.0]);
        assert_eq!(planes_to_raster(&planes).unwrap(), r);
    }

    #[test]
    fn truncated_png_is_decode_error() {
        let bytes = encode_png(&Raster {
            width: 4,
            height: 4,
            channels: 1,
            data: vec![7; 16],
        })
        .unwrap();
        let err = decode_png(&bytes[..bytes.len() / 2], Path::new("cut.png")).unwrap_err();
        assert!(matches!(err, Error::Decode { .. }), "{err}");
        assert!(err.to_string().contains("cut.png"));
    }

    #[test]
    fn sixteen_bit_png_is_rejected() {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, 2, 1);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Sixteen);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[0, 1, 2, 3]).unwrap();
        }
        let err = decode_png(&out, Path::new("deep.png")).unwrap_err();
        assert!(matches!(err, Error::Unsupported { .. }), "{err}");
    }

    #[test]
    fn raw_tensor_layout_is_exact() {
        let t = Tensor::new(vec![2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let bytes = encode_raw_tensor(&t);
        assert_eq!(bytes.len(), 32);
        assert_eq!(&bytes[..4], b"UTSR");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        assert_eq!(decode_raw_tensor(&bytes).unwrap(), t);
    }

    #[test]
    fn raw_tensor_errors() {
        let t = Tensor::new(vec![3], vec![1.0f32, 2.0, 3.0]).unwrap();
        let bytes = encode_raw_tensor(&t);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_raw_tensor(&bad), Err(RawFormatError::BadMagic(_))));
        assert!(matches!(
            decode_raw_tensor(&bytes[..bytes.len() - 1]),
            Err(RawFormatError::ShortRead { .. })
        ));
        let mut zero = bytes.clone();
        zero[4..8].copy_from_slice(&0u32.to_le_bytes());
        assert_eq!(decode_raw_tensor(&zero), Err(RawFormatError::ZeroRank));
        let mut huge = b"UTSR".to_vec();
        huge.extend_from_slice(&3u32.to_le_bytes());
        for _ in 0..3 {
            huge.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(matches!(
            decode_raw_tensor(&huge),
            Err(RawFormatError::ExtentOverflow(_))
        ));
        let mut long = bytes;
        long.push(0);
        assert_eq!(decode_raw_tensor(&long), Err(RawFormatError::TrailingBytes(1)));
    }

    #[test]
    fn raw_tensor_file_roundtrip_is_bitwise() {
        let mut rng = SeededRng::new(5);
        let data: Vec<f32> = (0..3 * 8 * 8).map(|_| rng.normal() as f32).collect();
        let t = Tensor::new(vec![3, 8, 8], data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.utsr");
        write_raw_tensor(&t, &path).unwrap();
        let back = read_raw_tensor(&path).unwrap();
        assert_eq!(back.dims(), t.dims());
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&t));
    }

    #[test]
    fn missing_file_reports_path() {
        let err = read_raw_tensor("/nonexistent/x.utsr").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.utsr"));
    }
}
