use image::{GenericImageView, ImageBuffer, Pixel};

use super::{BoundingBox, IngestError};
use crate::Scalar;

/// Pixel window `[x, x + side) × [y, y + side)` inside a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub x: u32,
    pub y: u32,
    pub side: u32,
}

/// Square window around `bbox`: side `ceil(max(w, h))`, centred on the box,
/// shifted back inside the frame when it crosses a border and shrunk only
/// when the side exceeds a frame dimension. Never padded.
pub fn square_window<T: Scalar>(bbox: &BoundingBox<T>, width: u32, height: u32) -> Result<CropWindow, IngestError> {
    let (fw, fh) = (f64::from(width), f64::from(height));
    let [x1, y1, x2, y2] = [bbox.x1, bbox.y1, bbox.x2, bbox.y2].map(Scalar::to_f64_lossy);
    if width == 0 || height == 0 || x2 < 0.0 || y2 < 0.0 || x1 >= fw || y1 >= fh {
        return Err(IngestError::CropOutside {
            x1,
            y1,
            x2,
            y2,
            width,
            height,
        });
    }

    let longest = (x2 - x1).max(y2 - y1).ceil().max(1.0);
    let side = longest.min(fw).min(fh) as u32;
    let (cx, cy) = ((x1 + x2) / 2.0, (y1 + y2) / 2.0);
    let place = |center: f64, extent: u32| -> u32 {
        let start = (center - f64::from(side) / 2.0).round();
        start.clamp(0.0, f64::from(extent - side)) as u32
    };
    Ok(CropWindow {
        x: place(cx, width),
        y: place(cy, height),
        side,
    })
}

pub fn crop_square<I, T>(
    frame: &I,
    bbox: &BoundingBox<T>,
) -> Result<ImageBuffer<I::Pixel, Vec<<I::Pixel as Pixel>::Subpixel>>, IngestError>
where
    I: GenericImageView + 'static,
    T: Scalar,
{
    let win = square_window(bbox, frame.width(), frame.height())?;
    Ok(frame.view(win.x, win.y, win.side, win.side).to_image())
}
