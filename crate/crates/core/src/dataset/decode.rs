use std::io::Cursor;

use image::imageops::FilterType;
use image::{DynamicImage, ImageFormat, RgbImage};
use rayon::prelude::*;

use super::{DatasetError, PatchRecord};
use crate::numerics::{Shape, Tensor};

/// Converts an RGB image to a `1 × 3 × H × W` tensor of `v / 255`,
/// resizing with a triangle (bilinear) filter when the size differs.
pub fn rgb_to_tensor(img: &RgbImage, size: (usize, usize)) -> Tensor {
    let (h, w) = size;
    let resized;
    let img = if (img.height() as usize, img.width() as usize) == size {
        img
    } else {
        resized = image::imageops::resize(img, w as u32, h as u32, FilterType::Triangle);
        &resized
    };
    let plane = h * w;
    let mut data = vec![0.0f32; 3 * plane];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * plane + i] = f32::from(px[c]) / 255.0;
        }
    }
    Tensor::from_vec(Shape::new(1, 3, h, w), data).expect("length matches shape")
}

/// Quantizes the first sample of an image tensor back to 8-bit RGB.
pub fn tensor_to_rgb(t: &Tensor) -> RgbImage {
    let s = t.shape();
    let plane = s.plane();
    let data = t.sample(0);
    RgbImage::from_fn(s.w as u32, s.h as u32, |x, y| {
        let i = y as usize * s.w + x as usize;
        image::Rgb([0, 1, 2].map(|c| quantize(data[c * plane + i])))
    })
}

/// Nearest 8-bit level of a value in `[0, 1]`.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Decodes an in-memory PNG/JPEG/TIFF image exactly as [`decode_patch`] does.
pub fn decode_image_bytes(bytes: &[u8], size: (usize, usize)) -> Result<Tensor, String> {
    let img = image::ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| e.to_string())?
        .decode()
        .map_err(|e| e.to_string())?;
    Ok(rgb_to_tensor(&img.into_rgb8(), size))
}

pub fn decode_patch(record: &PatchRecord, size: (usize, usize)) -> Result<Tensor, DatasetError> {
    let fail = |message: String| DatasetError::Decode { id: record.id.clone(), message };
    let bytes = std::fs::read(&record.path).map_err(|e| fail(format!("{}: {e}", record.path.display())))?;
    decode_image_bytes(&bytes, size).map_err(|e| fail(format!("{}: {e}", record.path.display())))
}

/// Decodes records in parallel into one `N × 3 × H × W` batch (record order kept).
pub fn decode_records(records: &[&PatchRecord], size: (usize, usize)) -> Result<Tensor, DatasetError> {
    let items = records.par_iter().map(|r| decode_patch(r, size)).collect::<Result<Vec<_>, _>>()?;
    if items.is_empty() {
        return Err(DatasetError::Empty("no records to decode".into()));
    }
    Ok(Tensor::stack(&items).expect("same-size samples"))
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut out = Vec::new();
    DynamicImage::ImageRgb8(img.clone())
        .write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out
}
