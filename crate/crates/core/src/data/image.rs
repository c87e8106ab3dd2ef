//! Binary PPM (P6, maxval 255) images as `[3, H, W]` tensors in `[0, 1]`.

use std::path::Path;

use crate::error::{Error, ImageError, Result};
use crate::tensor::Tensor;

/// Decodes a P6 file. Header comments (`#` to end of line) are accepted.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor, ImageError> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(ImageError::BadMagic);
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(ImageError::DimensionMismatch("malformed header field".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| ImageError::DimensionMismatch("header value out of range".into()))?;
    }
    // Exactly one whitespace byte separates the header from the raster.
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(ImageError::DimensionMismatch("missing raster separator".into()));
    }
    pos += 1;
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(ImageError::Unsupported(format!("maxval {maxval}, only 255 is supported")));
    }
    if w == 0 || h == 0 {
        return Err(ImageError::DimensionMismatch(format!("zero-sized image {w}x{h}")));
    }
    let expected = 3 * w * h;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(ImageError::Truncated {
            expected,
            found: raster.len(),
        });
    }
    if raster.len() > expected {
        return Err(ImageError::DimensionMismatch(format!(
            "{} bytes of raster for a {w}x{h} image",
            raster.len()
        )));
    }
    // Interleaved RGB → planar channels.
    let mut data = vec![0.0; expected];
    for (i, px) in raster.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * w * h + i] = px[c] as f64 / 255.0;
        }
    }
    Ok(Tensor::new(vec![3, h, w], data).expect("length matches"))
}

/// Quantizes to 8 bits: clamp to `[0, 1]`, then `floor(255·x + 0.5)`.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>, ImageError> {
    let (c, h, w) = match image.shape() {
        &[c, h, w] => (c, h, w),
        s => return Err(ImageError::DimensionMismatch(format!("expected [3, H, W], got {s:?}"))),
    };
    if c != 3 {
        return Err(ImageError::DimensionMismatch(format!("expected 3 channels, got {c}")));
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let plane = h * w;
    let d = image.data();
    out.reserve(3 * plane);
    for i in 0..plane {
        for ch in 0..3 {
            out.push(quantize(d[ch * plane + i]));
        }
    }
    Ok(out)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_image(image: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_ppm(image).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
