//! Reading frames from image files, image directories, animated GIFs and
//! (through an external `ffmpeg`) other video files.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::Command;

use classcode_core::imaging::to_grayscale;
use classcode_core::GrayImage;
use image::AnimationDecoder;

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("{path}: {msg}")]
    Unreadable { path: PathBuf, msg: String },
    #[error("cannot decode image: {0}")]
    Decode(String),
}

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "gif"];

fn extension(p: &Path) -> Option<String> {
    p.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
}

fn unreadable(path: &Path, msg: impl ToString) -> FrameError {
    FrameError::Unreadable {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

/// Decodes an encoded PNG, JPEG or GIF image to luma.
pub fn decode_image(bytes: &[u8]) -> Result<GrayImage, FrameError> {
    let img = image::load_from_memory(bytes).map_err(|e| FrameError::Decode(e.to_string()))?;
    rgb_to_gray(&img.to_rgb8())
}

fn rgb_to_gray(rgb: &image::RgbImage) -> Result<GrayImage, FrameError> {
    to_grayscale(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())
        .map_err(|e| FrameError::Decode(e.to_string()))
}

/// An ordered source of frames.
pub enum FrameSource {
    Files(std::vec::IntoIter<PathBuf>),
    Gif(image::Frames<'static>),
    /// Frames extracted to a temporary directory, removed on drop.
    Extracted {
        files: std::vec::IntoIter<PathBuf>,
        dir: PathBuf,
    },
}

impl Drop for FrameSource {
    fn drop(&mut self) {
        if let FrameSource::Extracted { dir, .. } = self {
            let _ = std::fs::remove_dir_all(dir);
        }
    }
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>, FrameError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| unreadable(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file() && extension(p).is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn load_file(path: &Path) -> Result<GrayImage, FrameError> {
    let bytes = std::fs::read(path).map_err(|e| unreadable(path, e))?;
    decode_image(&bytes).map_err(|e| unreadable(path, e))
}

fn extract_with_ffmpeg(path: &Path) -> Result<FrameSource, FrameError> {
    let dir = std::env::temp_dir().join(format!(
        "classcode-frames-{}-{}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos())
    ));
    std::fs::create_dir_all(&dir).map_err(|e| unreadable(path, e))?;
    let status = Command::new("ffmpeg")
        .arg("-v")
        .arg("error")
        .arg("-i")
        .arg(path)
        .arg(dir.join("frame-%06d.png"))
        .status();
    let fail = |msg: String| {
        let _ = std::fs::remove_dir_all(&dir);
        Err(unreadable(path, msg))
    };
    match status {
        Err(e) => fail(format!(
            "video input needs ffmpeg on PATH ({e}); pass an image directory or an animated GIF instead"
        )),
        Ok(s) if !s.success() => fail(format!("ffmpeg could not decode the file ({s})")),
        Ok(_) => {
            let files = image_files(&dir)?;
            Ok(FrameSource::Extracted {
                files: files.into_iter(),
                dir,
            })
        }
    }
}

impl FrameSource {
    /// Opens a directory of images (sorted by file name), a single image,
    /// an animated GIF, or any video ffmpeg can read.
    pub fn open(path: &Path) -> Result<Self, FrameError> {
        let meta = std::fs::metadata(path).map_err(|e| unreadable(path, e))?;
        if meta.is_dir() {
            return Ok(FrameSource::Files(image_files(path)?.into_iter()));
        }
        match extension(path).as_deref() {
            Some("gif") => {
                let file = File::open(path).map_err(|e| unreadable(path, e))?;
                let decoder = image::codecs::gif::GifDecoder::new(BufReader::new(file))
                    .map_err(|e| unreadable(path, e))?;
                Ok(FrameSource::Gif(decoder.into_frames()))
            }
            Some("png" | "jpg" | "jpeg") => {
                Ok(FrameSource::Files(vec![path.to_path_buf()].into_iter()))
            }
            _ => extract_with_ffmpeg(path),
        }
    }
}

impl Iterator for FrameSource {
    type Item = Result<GrayImage, FrameError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            FrameSource::Files(files) | FrameSource::Extracted { files, .. } => {
                files.next().map(|p| load_file(&p))
            }
            FrameSource::Gif(frames) => frames.next().map(|f| {
                let f = f.map_err(|e| FrameError::Decode(e.to_string()))?;
                let rgb = image::DynamicImage::ImageRgba8(f.into_buffer()).to_rgb8();
                rgb_to_gray(&rgb)
            }),
        }
    }
}

/// Writes frames as an animated GIF (grayscale palette), for test inputs
/// and demos.
pub fn write_gif(path: &Path, frames: &[GrayImage]) -> Result<(), FrameError> {
    let file = File::create(path).map_err(|e| unreadable(path, e))?;
    let mut enc = image::codecs::gif::GifEncoder::new(std::io::BufWriter::new(file));
    let frames = frames.iter().map(|g| {
        let rgba = image::RgbaImage::from_fn(g.width() as u32, g.height() as u32, |x, y| {
            let v = g.get(x as usize, y as usize);
            image::Rgba([v, v, v, 255])
        });
        image::Frame::new(rgba)
    });
    enc.encode_frames(frames).map_err(|e| unreadable(path, e))
}
