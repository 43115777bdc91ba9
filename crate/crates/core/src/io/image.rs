//! 8-bit RGB PNG read/write.

use std::path::Path;

use super::atomic_write;
use crate::render::Framebuffer;

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("PNG encode: {0}")]
    Encode(#[from] png::EncodingError),
    #[error("PNG decode: {0}")]
    Decode(#[from] png::DecodingError),
    #[error("unsupported PNG layout: {0}")]
    Unsupported(String),
    #[error("expected {expected} bytes of RGB data, got {got}")]
    Size { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn encode_rgb8_png(width: u32, height: u32, rgb: &[u8]) -> Result<Vec<u8>, ImageError> {
    let expected = width as usize * height as usize * 3;
    if rgb.len() != expected {
        return Err(ImageError::Size {
            expected,
            got: rgb.len(),
        });
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header()?;
        w.write_image_data(rgb)?;
    }
    Ok(out)
}

pub fn write_rgb8_png(path: &Path, width: u32, height: u32, rgb: &[u8]) -> Result<(), ImageError> {
    atomic_write(path, &encode_rgb8_png(width, height, rgb)?)?;
    Ok(())
}

pub fn write_png(path: &Path, fb: &Framebuffer) -> Result<(), ImageError> {
    write_rgb8_png(path, fb.width, fb.height, &fb.to_rgb8())
}

/// Decodes 8-bit gray/RGB/RGBA into a framebuffer; alpha channels are dropped.
pub fn decode_png(bytes: &[u8]) -> Result<Framebuffer, ImageError> {
    let mut dec = png::Decoder::new(std::io::Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND);
    let mut reader = dec.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(ImageError::Unsupported(format!("{:?} bit depth", info.bit_depth)));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(ImageError::Unsupported(format!("{other:?}"))),
    };
    let mut fb = Framebuffer::filled(info.width, info.height, [0.0; 3]);
    for (p, px) in fb.rgb.iter_mut().zip(buf[..info.buffer_size()].chunks_exact(channels)) {
        *p = if channels < 3 {
            [px[0] as f64 / 255.0; 3]
        } else {
            [px[0] as f64 / 255.0, px[1] as f64 / 255.0, px[2] as f64 / 255.0]
        };
    }
    fb.alpha.iter_mut().for_each(|a| *a = 1.0);
    Ok(fb)
}

pub fn read_png(path: &Path) -> Result<Framebuffer, ImageError> {
    decode_png(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_exact_on_8bit_values() {
        let mut fb = Framebuffer::filled(5, 3, [0.0; 3]);
        for (i, p) in fb.rgb.iter_mut().enumerate() {
            *p = [i as f64 / 255.0, (3 * i) as f64 / 255.0, 1.0];
        }
        let bytes = encode_rgb8_png(5, 3, &fb.to_rgb8()).unwrap();
        let back = decode_png(&bytes).unwrap();
        assert_eq!(back.to_rgb8(), fb.to_rgb8());
        assert_eq!(back.width, 5);
    }

    #[test]
    fn size_mismatch() {
        assert!(matches!(
            encode_rgb8_png(2, 2, &[0; 5]),
            Err(ImageError::Size { expected: 12, got: 5 })
        ));
    }
}
