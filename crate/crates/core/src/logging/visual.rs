use std::fs;
use std::path::Path;

use image::{ExtendedColorType, ImageBuffer, Luma};
use serde_json::json;

use crate::error::{Error, Result};
use crate::value::{DType, Tensor};

fn hw(t: &Tensor, what: &str) -> Result<(u32, u32)> {
    match t.shape() {
        [h, w] | [h, w, _] if *h > 0 && *w > 0 => Ok((*h as u32, *w as u32)),
        s => Err(Error::Tensor(format!("{what} needs shape (H,W[,C]), got {s:?}"))),
    }
}

/// Saves a u8 `(H,W,1)`, `(H,W,3)` or `(H,W)` tensor as PNG.
pub fn save_image(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let (h, w) = hw(tensor, "image")?;
    let data = tensor
        .as_u8()
        .ok_or_else(|| Error::Tensor(format!("image must be u8, got {}", tensor.dtype())))?;
    let color = match tensor.shape() {
        [_, _] | [_, _, 1] => ExtendedColorType::L8,
        [_, _, 3] => ExtendedColorType::Rgb8,
        s => return Err(Error::Tensor(format!("image needs 1 or 3 channels, got {s:?}"))),
    };
    image::save_buffer(path, data, w, h, color)?;
    Ok(())
}

/// Saves a `(H,W)` mask; any non-zero element is white.
pub fn save_mask(path: impl AsRef<Path>, mask: &Tensor) -> Result<()> {
    let (h, w) = match mask.shape() {
        [h, w] if *h > 0 && *w > 0 => (*h, *w),
        s => return Err(Error::Tensor(format!("mask needs shape (H,W), got {s:?}"))),
    };
    let pixels: Vec<u8> = mask.iter_f64().map(|x| if x != 0.0 { 255 } else { 0 }).collect();
    save_image(path, &Tensor::from_u8(vec![h, w], pixels)?)
}

/// Saves a `(H,W)` f32 depth map as 16-bit grayscale, with `{min, max}` in a
/// JSON sidecar next to the image.
pub fn save_depth(path: impl AsRef<Path>, depth: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = match depth.shape() {
        [h, w] if *h > 0 && *w > 0 => (*h as u32, *w as u32),
        s => return Err(Error::Tensor(format!("depth needs shape (H,W), got {s:?}"))),
    };
    if depth.dtype() != DType::F32 || !depth.is_finite() {
        return Err(Error::Tensor("depth must be finite f32".into()));
    }
    let values = depth.as_f32().unwrap();
    let min = values.iter().copied().fold(f32::INFINITY, f32::min);
    let max = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let span = max - min;
    let pixels: Vec<u16> = values
        .iter()
        .map(|&d| if span > 0.0 { (((d - min) / span) * 65535.0).round() as u16 } else { 0 })
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w, h, pixels).expect("buffer sized from shape");
    img.save(path)?;
    fs::write(path.with_extension("json"), serde_json::to_vec(&json!({ "min": min, "max": max }))?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        let t = Tensor::from_u8(vec![2, 2, 3], (0..12).map(|i| i * 20).collect()).unwrap();
        save_image(&p, &t).unwrap();
        let back = image::open(&p).unwrap().to_rgb8();
        assert_eq!(back.into_raw(), t.as_u8().unwrap());
    }

    #[test]
    fn full_mask_is_white() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        save_mask(&p, &Tensor::from_u8(vec![3, 2], vec![1; 6]).unwrap()).unwrap();
        assert!(image::open(&p).unwrap().to_luma8().pixels().all(|p| p.0[0] == 255));
    }

    #[test]
    fn depth_sidecar_records_range() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        save_depth(&p, &Tensor::from_f32(vec![1, 2], vec![0.0, 1.0]).unwrap()).unwrap();
        let side: serde_json::Value = serde_json::from_slice(&fs::read(p.with_extension("json")).unwrap()).unwrap();
        assert_eq!(side, json!({ "min": 0.0, "max": 1.0 }));
        let img = image::open(&p).unwrap().to_luma16();
        assert_eq!(img.into_raw(), vec![0, 65535]);
    }

    #[test]
    fn bad_shapes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(save_image(dir.path().join("a.png"), &Tensor::zeros(DType::U8, vec![2, 2, 4])).is_err());
        assert!(save_image(dir.path().join("b.png"), &Tensor::zeros(DType::F32, vec![2, 2, 3])).is_err());
        assert!(save_depth(dir.path().join("c.png"), &Tensor::zeros(DType::F32, vec![4])).is_err());
    }
}
