use std::path::Path;

use image::ImageFormat;

use super::{to_grayscale, GrayImage};
use crate::error::{Error, Result};

/// Loads a PNG or single-page TIFF and converts it to grayscale.
pub fn load_gray(path: &Path) -> Result<GrayImage> {
    let format = ImageFormat::from_path(path)?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Tiff) {
        return Err(Error::Dimension(format!("unsupported image format {format:?} for {}", path.display())));
    }
    let dynamic = image::open(path)?;
    match dynamic {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = (g.width() as usize, g.height() as usize);
            GrayImage::new(w, h, g.into_raw())
        }
        other => to_grayscale(&other.to_rgb8()),
    }
}

pub fn save_png(img: &GrayImage, path: &Path) -> Result<()> {
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.pixels().to_vec())
        .expect("buffer length matches dimensions");
    buf.save_with_format(path, ImageFormat::Png)?;
    Ok(())
}

/// PNG-encodes the image into memory.
pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>> {
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.pixels().to_vec())
        .expect("buffer length matches dimensions");
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_and_tiff_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_fn(13, 7, |x, y| (x * 19 + y * 3) as u8).unwrap();
        let png = dir.path().join("a.png");
        save_png(&img, &png).unwrap();
        assert_eq!(load_gray(&png).unwrap(), img);

        let tiff = dir.path().join("a.tiff");
        image::GrayImage::from_raw(13, 7, img.pixels().to_vec()).unwrap().save(&tiff).unwrap();
        assert_eq!(load_gray(&tiff).unwrap(), img);

        let bmp = dir.path().join("a.bmp");
        assert!(load_gray(&bmp).is_err());
    }
}
