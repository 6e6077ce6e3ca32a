use std::io::Cursor;
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use crate::error::{Error, Result};

pub(super) struct Decoded {
    pub width: u32,
    pub height: u32,
    pub color: ColorType,
    pub bit_depth: u8,
    /// Raw samples; 16-bit data stays big-endian.
    pub data: Vec<u8>,
}

pub(super) fn decode(bytes: &[u8], origin: &Path) -> Result<Decoded> {
    let corrupt = |e: png::DecodingError| Error::CorruptPng {
        path: origin.to_path_buf(),
        message: e.to_string(),
    };
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(corrupt)?;
    let (width, height, color, depth) = {
        let info = reader.info();
        (info.width, info.height, info.color_type, info.bit_depth)
    };
    if width == 0 || height == 0 {
        return Err(Error::ZeroDimension { width, height });
    }
    if color == ColorType::Indexed {
        return Err(Error::UnsupportedChannels {
            path: origin.to_path_buf(),
            found: "indexed color".into(),
            expected: "grayscale or RGB",
        });
    }
    let size = reader.output_buffer_size().ok_or_else(|| Error::CorruptPng {
        path: origin.to_path_buf(),
        message: "image too large".into(),
    })?;
    let mut data = vec![0u8; size];
    let frame = reader.next_frame(&mut data).map_err(corrupt)?;
    data.truncate(frame.buffer_size());
    Ok(Decoded {
        width,
        height,
        color,
        bit_depth: depth as u8,
        data,
    })
}

pub(super) fn encode(
    width: u32,
    height: u32,
    color: ColorType,
    depth: BitDepth,
    samples: &[u8],
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width, height);
        encoder.set_color(color);
        encoder.set_depth(depth);
        encoder.set_compression(png::Compression::Balanced);
        let mut writer = encoder.write_header().map_err(encode_err)?;
        writer.write_image_data(samples).map_err(encode_err)?;
        writer.finish().map_err(encode_err)?;
    }
    Ok(out)
}

fn encode_err(e: png::EncodingError) -> Error {
    match e {
        png::EncodingError::IoError(source) => Error::io("<png encoder>", source),
        other => Error::InvalidRaster(format!("PNG encoding failed: {other}")),
    }
}
