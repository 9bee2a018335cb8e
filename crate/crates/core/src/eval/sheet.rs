//! Contact sheet: one row per sampled query, the query patch followed by its
//! top-K neighbours framed green (same label) or red.

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};

use super::{EvalError, EvalOutcome};
use crate::dataset::{decode_patch, tensor_to_rgb, Manifest};

pub const MATCH_COLOR: Rgb<u8> = Rgb([0, 170, 0]);
pub const MISMATCH_COLOR: Rgb<u8> = Rgb([210, 0, 0]);
pub const QUERY_COLOR: Rgb<u8> = Rgb([128, 128, 128]);
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const BORDER: u32 = 3;
const GAP: u32 = 6;

pub struct SheetRow {
    pub query: RgbImage,
    /// Neighbour patch and whether its label equals the query's.
    pub neighbours: Vec<(RgbImage, bool)>,
}

fn framed(sheet: &mut RgbImage, img: &RgbImage, x: u32, y: u32, thumb: u32, color: Rgb<u8>) {
    let cell = thumb + 2 * BORDER;
    for dy in 0..cell {
        for dx in 0..cell {
            sheet.put_pixel(x + dx, y + dy, color);
        }
    }
    let small = imageops::resize(img, thumb, thumb, FilterType::Triangle);
    imageops::replace(sheet, &small, (x + BORDER) as i64, (y + BORDER) as i64);
}

pub fn render_contact_sheet(rows: &[SheetRow], thumb: u32) -> RgbImage {
    let cell = thumb + 2 * BORDER;
    let cols = rows.iter().map(|r| r.neighbours.len()).max().unwrap_or(0) as u32 + 1;
    let width = GAP + cols * (cell + GAP) + GAP;
    let height = GAP + rows.len() as u32 * (cell + GAP);
    let mut sheet = RgbImage::from_pixel(width.max(1), height.max(1), BACKGROUND);
    for (i, row) in rows.iter().enumerate() {
        let y = GAP + i as u32 * (cell + GAP);
        framed(&mut sheet, &row.query, GAP, y, thumb, QUERY_COLOR);
        for (j, (img, ok)) in row.neighbours.iter().enumerate() {
            let x = 2 * GAP + (j as u32 + 1) * (cell + GAP);
            framed(&mut sheet, img, x, y, thumb, if *ok { MATCH_COLOR } else { MISMATCH_COLOR });
        }
    }
    sheet
}

/// Up to `max_rows` evenly spaced queries of `outcome`, each with its top `k`.
/// Query images come from `queries`, neighbour images from `indexed`.
pub fn contact_sheet(
    outcome: &EvalOutcome,
    queries: &Manifest,
    indexed: &Manifest,
    k: usize,
    max_rows: usize,
    thumb: u32,
) -> Result<RgbImage, EvalError> {
    let n = outcome.results.len();
    let rows = max_rows.min(n);
    let load = |m: &Manifest, id: &str| -> Result<RgbImage, EvalError> {
        let record = m.get(id).ok_or_else(|| EvalError::Report(format!("no image for `{id}`")))?;
        let (w, h) = image::image_dimensions(&record.path)
            .map_err(|e| EvalError::Report(format!("{}: {e}", record.path.display())))?;
        Ok(tensor_to_rgb(&decode_patch(record, (h as usize, w as usize))?))
    };
    let mut sheet_rows = Vec::with_capacity(rows);
    for i in 0..rows {
        let result = &outcome.results[i * n / rows];
        let label = &outcome.labels[&result.query_id];
        let mut neighbours = Vec::new();
        for hit in result.hits.iter().take(k) {
            neighbours.push((load(indexed, &hit.id)?, &hit.label == label));
        }
        sheet_rows.push(SheetRow { query: load(queries, &result.query_id)?, neighbours });
    }
    Ok(render_contact_sheet(&sheet_rows, thumb))
}
