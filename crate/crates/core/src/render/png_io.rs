use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use super::{EcgImage, ImageKind, RenderError};

const KEY_HASH: &str = "render_config_hash";
const KEY_RECORD: &str = "source_record_id";
const KEY_KIND: &str = "kind";
const KEY_COLORED: &str = "colored";

/// tEXt key/value pairs stored in a PNG.
pub type PngText = Vec<(String, String)>;

fn png_err(path: &Path, e: impl std::fmt::Display) -> RenderError {
    RenderError::Png {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> RenderError {
    RenderError::Io {
        path: path.display().to_string(),
        source: e,
    }
}

/// Writes an 8-bit RGB PNG (no alpha) carrying the image provenance as text.
pub fn encode_png(image: &EcgImage, path: &Path) -> Result<(), RenderError> {
    encode_png_with_text(image, path, &[])
}

pub fn encode_png_with_text(
    image: &EcgImage,
    path: &Path,
    extra: &[(&str, &str)],
) -> Result<(), RenderError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), image.width, image.height);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let colored = image.colored.to_string();
    let base = [
        (KEY_HASH, image.render_config_hash.as_str()),
        (KEY_RECORD, image.source_record_id.as_str()),
        (KEY_KIND, image.kind.as_str()),
        (KEY_COLORED, colored.as_str()),
    ];
    for (k, v) in base.iter().chain(extra) {
        encoder
            .add_text_chunk(k.to_string(), v.to_string())
            .map_err(|e| png_err(path, e))?;
    }
    let mut writer = encoder.write_header().map_err(|e| png_err(path, e))?;
    writer
        .write_image_data(&image.pixels)
        .map_err(|e| png_err(path, e))?;
    writer.finish().map_err(|e| png_err(path, e))
}

fn text_of(info: &png::Info<'_>) -> PngText {
    info.uncompressed_latin1_text
        .iter()
        .map(|t| (t.keyword.clone(), t.text.clone()))
        .collect()
}

/// Reads only the header and text chunks.
pub fn read_png_text(path: &Path) -> Result<(u32, u32, PngText), RenderError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = png::Decoder::new(BufReader::new(file))
        .read_info()
        .map_err(|e| png_err(path, e))?;
    let info = reader.info();
    Ok((info.width, info.height, text_of(info)))
}

/// Decodes a PNG written by [`encode_png`] (any 8-bit RGB PNG is accepted;
/// missing provenance fields fall back to defaults).
pub fn decode_png(path: &Path) -> Result<EcgImage, RenderError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = png::Decoder::new(BufReader::new(file))
        .read_info()
        .map_err(|e| png_err(path, e))?;
    let mut buf = vec![
        0;
        reader
            .output_buffer_size()
            .ok_or_else(|| png_err(path, "image too large"))?
    ];
    let frame = reader.next_frame(&mut buf).map_err(|e| png_err(path, e))?;
    if frame.color_type != png::ColorType::Rgb || frame.bit_depth != png::BitDepth::Eight {
        return Err(png_err(
            path,
            format!(
                "expected 8-bit RGB, found {:?}/{:?}",
                frame.color_type, frame.bit_depth
            ),
        ));
    }
    buf.truncate(frame.buffer_size());
    let text = text_of(reader.info());
    let get = |k: &str| {
        text.iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.clone())
    };
    let kind = match get(KEY_KIND) {
        Some(k) => k.parse::<ImageKind>().map_err(|e| png_err(path, e))?,
        None if frame.width == frame.height => ImageKind::SingleBeat,
        None => ImageKind::Rhythm,
    };
    Ok(EcgImage {
        width: frame.width,
        height: frame.height,
        pixels: buf,
        kind,
        colored: get(KEY_COLORED).as_deref() == Some("true"),
        source_record_id: get(KEY_RECORD).unwrap_or_default(),
        render_config_hash: get(KEY_HASH).unwrap_or_default(),
    })
}
