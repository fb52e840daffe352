use std::collections::HashMap;
use std::io::Cursor;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use image::imageops::FilterType;
use image::{DynamicImage, ImageFormat};

use super::StudioError;
use crate::store::{Payload, Sample, SampleId};

/// PNG thumbnails, generated once per (sample, size). Each sample's image is
/// decoded at most once.
#[derive(Debug, Default)]
pub struct ThumbnailCache {
    decoded: Mutex<HashMap<SampleId, Arc<DynamicImage>>>,
    encoded: Mutex<HashMap<(SampleId, u32), Arc<Vec<u8>>>>,
    decodes: AtomicU64,
}

/// Scales `(w, h)` so the longer side is `size`, keeping the aspect ratio.
pub(crate) fn fit(w: u32, h: u32, size: u32) -> (u32, u32) {
    let long = w.max(h).max(1) as f64;
    let scale = size as f64 / long;
    let dim = |v: u32| ((v as f64 * scale).round() as u32).max(1);
    (dim(w), dim(h))
}

impl ThumbnailCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of image decodes performed so far.
    pub fn decodes(&self) -> u64 {
        self.decodes.load(Ordering::SeqCst)
    }

    fn decoded(&self, sample: &Sample, bytes: &[u8]) -> Result<Arc<DynamicImage>, StudioError> {
        let mut decoded = self.decoded.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(img) = decoded.get(&sample.id) {
            return Ok(img.clone());
        }
        self.decodes.fetch_add(1, Ordering::SeqCst);
        let img = Arc::new(image::load_from_memory(bytes).map_err(|_| StudioError::NotAnImage(sample.id.clone()))?);
        decoded.insert(sample.id.clone(), img.clone());
        Ok(img)
    }

    /// Nearest-neighbor resize so the longer side is `size` pixels.
    pub fn thumbnail(&self, sample: &Sample, size: u32) -> Result<Arc<Vec<u8>>, StudioError> {
        let Payload::Image(bytes) = &sample.payload else {
            return Err(StudioError::NotAnImage(sample.id.clone()));
        };
        if size == 0 {
            return Err(StudioError::BadRequest("thumbnail size must be positive".into()));
        }
        let key = (sample.id.clone(), size);
        if let Some(png) = self.encoded.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(png.clone());
        }
        let img = self.decoded(sample, bytes)?;
        let (w, h) = fit(img.width(), img.height(), size);
        let small = img.resize_exact(w, h, FilterType::Nearest);
        let mut png = Vec::new();
        small
            .write_to(&mut Cursor::new(&mut png), ImageFormat::Png)
            .map_err(|e| StudioError::Internal(format!("png encode: {e}")))?;
        let png = Arc::new(png);
        self.encoded
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key, png.clone());
        Ok(png)
    }
}
