//! File formats: PLY scenes, camera JSON and PNG images.

pub mod camera;
pub mod image;
pub mod ply;

use std::io::Write;
use std::path::Path;

pub use camera::{load_cameras, save_cameras, CameraError, CameraRecord};
pub use image::{decode_png, encode_rgb8_png, read_png, write_png, write_rgb8_png, ImageError};
pub use ply::{load_ply, save_ply, ExtraProperties, PlyError, PlyScene};

/// Writes to a temporary file in the target directory, then renames over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
