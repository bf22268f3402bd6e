//! TUM-RGB-D-style sequence loading, trajectory files and PLY export.
//!
//! Layout: `rgb.txt` / `depth.txt` index files with "timestamp filename"
//! lines, 8-bit RGB colour PNGs, 16-bit grayscale depth PNGs, and an
//! `intrinsics.txt` key=value config. Trajectories are 8-column text
//! ("timestamp tx ty tz qx qy qz qw").

use crate::cloud::PointCloud;
use crate::config::{ConfigError, KvConfig};
use crate::geometry::{Intrinsics, Pose, Vec3};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Colour/depth association window in seconds, following the public TUM
/// tooling convention.
pub const ASSOCIATION_WINDOW: f64 = 0.02;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing file {0}")]
    MissingFile(String),
    #[error("{path}:{line}: malformed record: {text}")]
    MalformedRecord {
        path: String,
        line: usize,
        text: String,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("frame {0}: colour and depth dimensions disagree")]
    DimensionMismatch(usize),
}

/// One RGB-D frame: 8-bit colour and metric depth (0 = invalid).
#[derive(Debug, Clone)]
pub struct RgbdFrame {
    pub frame_id: usize,
    pub timestamp: f64,
    pub width: usize,
    pub height: usize,
    pub color: Vec<[u8; 3]>,
    pub depth: Vec<f32>,
}

impl RgbdFrame {
    pub fn depth_at(&self, x: usize, y: usize) -> f32 {
        self.depth[y * self.width + x]
    }

    pub fn color_at(&self, x: usize, y: usize) -> [u8; 3] {
        self.color[y * self.width + x]
    }

    /// Luma in [0,1] via the Rec.601 weights.
    pub fn intensity(&self) -> Vec<f32> {
        self.color
            .iter()
            .map(|c| (0.299 * c[0] as f32 + 0.587 * c[1] as f32 + 0.114 * c[2] as f32) / 255.0)
            .collect()
    }
}

/// A timestamped pose sample of a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryRecord {
    pub timestamp: f64,
    pub pose: Pose,
}

struct IndexEntry {
    timestamp: f64,
    path: PathBuf,
}

fn read_index(root: &Path, name: &str) -> Result<Vec<IndexEntry>, DatasetError> {
    let path = root.join(name);
    let file = std::fs::File::open(&path)
        .map_err(|_| DatasetError::MissingFile(path.display().to_string()))?;
    let mut entries = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let (ts, rel) = match (parts.next(), parts.next()) {
            (Some(ts), Some(rel)) => (ts, rel),
            _ => {
                return Err(DatasetError::MalformedRecord {
                    path: path.display().to_string(),
                    line: idx + 1,
                    text: line.clone(),
                })
            }
        };
        let timestamp = ts.parse::<f64>().map_err(|_| DatasetError::MalformedRecord {
            path: path.display().to_string(),
            line: idx + 1,
            text: line.clone(),
        })?;
        entries.push(IndexEntry {
            timestamp,
            path: root.join(rel),
        });
    }
    entries.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    Ok(entries)
}

/// Streaming loader over an associated RGB-D sequence.
pub struct SequenceLoader {
    intrinsics: Intrinsics,
    pairs: Vec<(f64, PathBuf, PathBuf)>,
    skipped: usize,
    cursor: usize,
}

impl SequenceLoader {
    /// Opens a sequence directory, associating colour and depth images by
    /// nearest timestamp within [`ASSOCIATION_WINDOW`]. Colour frames with
    /// no depth inside the window are skipped and counted.
    pub fn open(root: &Path) -> Result<Self, DatasetError> {
        Self::open_with_window(root, ASSOCIATION_WINDOW)
    }

    pub fn open_with_window(root: &Path, window: f64) -> Result<Self, DatasetError> {
        let intrinsics = load_intrinsics(&root.join("intrinsics.txt"))?;
        let rgb = read_index(root, "rgb.txt")?;
        let depth = read_index(root, "depth.txt")?;
        let mut pairs = Vec::with_capacity(rgb.len());
        let mut skipped = 0usize;
        for entry in &rgb {
            // Depth index is sorted; find nearest by timestamp.
            let pos = depth.partition_point(|d| d.timestamp < entry.timestamp);
            let mut best: Option<(f64, &IndexEntry)> = None;
            for cand in depth[pos.saturating_sub(1)..(pos + 1).min(depth.len())].iter() {
                let dt = (cand.timestamp - entry.timestamp).abs();
                if dt <= window && best.map_or(true, |(b, _)| dt < b) {
                    best = Some((dt, cand));
                }
            }
            match best {
                Some((_, d)) => pairs.push((entry.timestamp, entry.path.clone(), d.path.clone())),
                None => skipped += 1,
            }
        }
        Ok(SequenceLoader {
            intrinsics,
            pairs,
            skipped,
            cursor: 0,
        })
    }

    pub fn intrinsics(&self) -> Intrinsics {
        self.intrinsics
    }

    /// Colour frames dropped because no depth fell inside the window.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn load_frame(&self, idx: usize) -> Result<RgbdFrame, DatasetError> {
        let (timestamp, color_path, depth_path) = &self.pairs[idx];
        let color_img = image::open(color_path)
            .map_err(DatasetError::Image)?
            .to_rgb8();
        let depth_img = image::open(depth_path).map_err(DatasetError::Image)?.to_luma16();
        if color_img.dimensions() != depth_img.dimensions() {
            return Err(DatasetError::DimensionMismatch(idx));
        }
        let (w, h) = color_img.dimensions();
        let color = color_img.pixels().map(|p| [p[0], p[1], p[2]]).collect();
        let scale = self.intrinsics.depth_scale as f32;
        let depth = depth_img.pixels().map(|p| p[0] as f32 / scale).collect();
        Ok(RgbdFrame {
            frame_id: idx,
            timestamp: *timestamp,
            width: w as usize,
            height: h as usize,
            color,
            depth,
        })
    }
}

impl Iterator for SequenceLoader {
    type Item = Result<RgbdFrame, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.pairs.len() {
            return None;
        }
        let frame = self.load_frame(self.cursor);
        self.cursor += 1;
        Some(frame)
    }
}

/// Reads an `intrinsics.txt` key=value config (fx fy cx cy width height
/// depth_scale).
pub fn load_intrinsics(path: &Path) -> Result<Intrinsics, DatasetError> {
    let cfg = KvConfig::load(path)?;
    let need = |k: &str| -> Result<f64, DatasetError> {
        Ok(cfg
            .get_f64(k)?
            .ok_or_else(|| ConfigError::MissingKey(k.to_string()))?)
    };
    Ok(Intrinsics {
        fx: need("fx")?,
        fy: need("fy")?,
        cx: need("cx")?,
        cy: need("cy")?,
        width: need("width")? as usize,
        height: need("height")? as usize,
        depth_scale: cfg.get_f64("depth_scale")?.unwrap_or(5000.0),
    })
}

pub fn write_intrinsics(path: &Path, k: &Intrinsics) -> Result<(), DatasetError> {
    let mut cfg = KvConfig::default();
    cfg.set("fx", k.fx);
    cfg.set("fy", k.fy);
    cfg.set("cx", k.cx);
    cfg.set("cy", k.cy);
    cfg.set("width", k.width);
    cfg.set("height", k.height);
    cfg.set("depth_scale", k.depth_scale);
    std::fs::write(path, cfg.to_text())?;
    Ok(())
}

/// Loads a TUM trajectory file. Quaternions are normalised, comment lines
/// skipped, records sorted by ascending timestamp.
pub fn load_groundtruth(path: &Path) -> Result<Vec<TrajectoryRecord>, DatasetError> {
    let file = std::fs::File::open(path)
        .map_err(|_| DatasetError::MissingFile(path.display().to_string()))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<f64> = trimmed
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| DatasetError::MalformedRecord {
                path: path.display().to_string(),
                line: idx + 1,
                text: line.clone(),
            })?;
        if fields.len() != 8 {
            return Err(DatasetError::MalformedRecord {
                path: path.display().to_string(),
                line: idx + 1,
                text: line.clone(),
            });
        }
        let pose = Pose::from_quaternion(
            [fields[4], fields[5], fields[6], fields[7]],
            Vec3::new(fields[1], fields[2], fields[3]),
        );
        records.push(TrajectoryRecord {
            timestamp: fields[0],
            pose,
        });
    }
    records.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    Ok(records)
}

/// Writes a trajectory in the 8-column TUM format.
pub fn write_trajectory(records: &[TrajectoryRecord], path: &Path) -> Result<(), DatasetError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for rec in records {
        let q = rec.pose.to_quaternion();
        let t = rec.pose.translation;
        writeln!(
            out,
            "{:.6} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
            rec.timestamp, t.x, t.y, t.z, q[0], q[1], q[2], q[3]
        )?;
    }
    Ok(())
}

/// Writes a binary little-endian PLY with `x y z nx ny nz red green blue`.
pub fn write_ply(cloud: &PointCloud, path: &Path) -> Result<(), DatasetError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property float nx\nproperty float ny\nproperty float nz\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         end_header\n",
        cloud.len()
    )?;
    for i in 0..cloud.len() {
        let p = cloud.points[i];
        let n = cloud.normals[i];
        for v in [p.x, p.y, p.z, n.x, n.y, n.z] {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
        out.write_all(&cloud.colors[i])?;
    }
    Ok(())
}

/// Reads a PLY written by [`write_ply`].
pub fn read_ply(path: &Path) -> Result<PointCloud, DatasetError> {
    let mut file = BufReader::new(
        std::fs::File::open(path)
            .map_err(|_| DatasetError::MissingFile(path.display().to_string()))?,
    );
    let mut count = 0usize;
    let mut line_no = 0usize;
    loop {
        let mut line = String::new();
        if file.read_line(&mut line)? == 0 {
            return Err(DatasetError::MalformedRecord {
                path: path.display().to_string(),
                line: line_no,
                text: "unterminated header".to_string(),
            });
        }
        line_no += 1;
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("element vertex ") {
            count = rest.parse().map_err(|_| DatasetError::MalformedRecord {
                path: path.display().to_string(),
                line: line_no,
                text: trimmed.to_string(),
            })?;
        }
        if trimmed == "end_header" {
            break;
        }
    }
    let mut cloud = PointCloud::with_capacity(count);
    let mut buf = [0u8; 27];
    for _ in 0..count {
        file.read_exact(&mut buf)?;
        let f = |o: usize| f32::from_le_bytes(buf[o..o + 4].try_into().unwrap()) as f64;
        cloud.push(
            Vec3::new(f(0), f(4), f(8)),
            Vec3::new(f(12), f(16), f(20)),
            [buf[24], buf[25], buf[26]],
        );
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn groundtruth_identity_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.txt");
        std::fs::write(&path, "# comment\n0.0 0 0 0 0 0 0 1\n").unwrap();
        let records = load_groundtruth(&path).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].timestamp, 0.0);
        assert!(records[0].pose.orthonormality_error() < 1e-12);
        assert_eq!(records[0].pose.translation, Vec3::zeros());
    }

    #[test]
    fn groundtruth_normalises_quaternions_and_sorts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.txt");
        // Non-unit quaternion (scaled by 2) and shuffled timestamps.
        std::fs::write(&path, "2.0 1 0 0 0 0 0 2\n1.0 0 0 0 0 0 0 1\n").unwrap();
        let records = load_groundtruth(&path).unwrap();
        assert_eq!(records.len(), 2);
        assert!(records[0].timestamp < records[1].timestamp);
        assert!(records[1].pose.orthonormality_error() < 1e-12);
    }

    #[test]
    fn groundtruth_rejects_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.txt");
        std::fs::write(&path, "0.0 0 0 nope 0 0 0 1\n").unwrap();
        let err = load_groundtruth(&path).unwrap_err();
        assert!(matches!(err, DatasetError::MalformedRecord { line: 1, .. }));
    }

    #[test]
    fn trajectory_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.txt");
        let mut records = Vec::new();
        let mut rng_state = 1u64;
        for i in 0..20 {
            // Cheap LCG so the test has no rand dependency on ordering.
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let a = (rng_state >> 33) as f64 / (1u64 << 31) as f64;
            let pose = crate::geometry::se3_exp(&crate::geometry::Twist::new(
                Vec3::new(a, -a, 0.5 * a),
                Vec3::new(0.3 * a, 0.1, -0.2 * a),
            ));
            records.push(TrajectoryRecord {
                timestamp: i as f64 * 0.1,
                pose,
            });
        }
        write_trajectory(&records, &path).unwrap();
        let back = load_groundtruth(&path).unwrap();
        assert_eq!(back.len(), records.len());
        for (a, b) in records.iter().zip(&back) {
            assert_relative_eq!(a.timestamp, b.timestamp, epsilon = 1e-9);
            assert!((a.pose.translation - b.pose.translation).norm() < 1e-6);
            assert!((a.pose.rotation - b.pose.rotation).norm() < 1e-6);
        }
    }

    #[test]
    fn empty_trajectory_writes_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.txt");
        write_trajectory(&[], &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap().len(), 0);
    }

    /// Independent PLY parse, written from the format description rather
    /// than the library reader.
    fn parse_ply_independent(bytes: &[u8]) -> (usize, Vec<(f32, f32, f32, [u8; 3])>) {
        let header_end = bytes
            .windows(11)
            .position(|w| w == b"end_header\n")
            .expect("header terminator")
            + 11;
        let header = std::str::from_utf8(&bytes[..header_end]).unwrap();
        assert!(header.starts_with("ply\n"));
        assert!(header.contains("format binary_little_endian 1.0"));
        let count: usize = header
            .lines()
            .find_map(|l| l.strip_prefix("element vertex "))
            .unwrap()
            .parse()
            .unwrap();
        let mut verts = Vec::new();
        let stride = 6 * 4 + 3;
        for i in 0..count {
            let row = &bytes[header_end + i * stride..header_end + (i + 1) * stride];
            let g = |o: usize| f32::from_le_bytes(row[o..o + 4].try_into().unwrap());
            verts.push((g(0), g(4), g(8), [row[24], row[25], row[26]]));
        }
        (count, verts)
    }

    #[test]
    fn ply_single_point_parseable_by_independent_reader() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.ply");
        let mut cloud = PointCloud::default();
        cloud.push(Vec3::new(1.0, 2.0, 3.0), Vec3::new(0.0, 0.0, 1.0), [10, 20, 30]);
        write_ply(&cloud, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let (count, verts) = parse_ply_independent(&bytes);
        assert_eq!(count, 1);
        assert_eq!(verts[0].0, 1.0);
        assert_eq!(verts[0].1, 2.0);
        assert_eq!(verts[0].2, 3.0);
        assert_eq!(verts[0].3, [10, 20, 30]);
    }

    #[test]
    fn ply_write_read_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.ply");
        let mut cloud = PointCloud::default();
        for i in 0..50 {
            let x = i as f64 * 0.01;
            cloud.push(
                Vec3::new(x, -x, 2.0 * x),
                Vec3::new(0.0, 1.0, 0.0),
                [i as u8, 2 * i as u8, 255 - i as u8],
            );
        }
        write_ply(&cloud, &path).unwrap();
        let back = read_ply(&path).unwrap();
        assert_eq!(back.len(), cloud.len());
        for i in 0..cloud.len() {
            assert!((back.points[i] - cloud.points[i]).norm() < 1e-6);
            assert_eq!(back.colors[i], cloud.colors[i]);
        }
    }

    fn write_png_gray16(path: &Path, w: u32, h: u32, value: u16) {
        let img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_pixel(
            w,
            h,
            image::Luma([value]),
        );
        img.save(path).unwrap();
    }

    fn write_png_rgb(path: &Path, w: u32, h: u32, value: [u8; 3]) {
        let img =
            image::ImageBuffer::<image::Rgb<u8>, Vec<u8>>::from_pixel(w, h, image::Rgb(value));
        img.save(path).unwrap();
    }

    fn make_sequence(dir: &Path, rgb_lines: &str, depth_lines: &str) {
        std::fs::create_dir_all(dir.join("rgb")).unwrap();
        std::fs::create_dir_all(dir.join("depth")).unwrap();
        std::fs::write(dir.join("rgb.txt"), rgb_lines).unwrap();
        std::fs::write(dir.join("depth.txt"), depth_lines).unwrap();
        write_intrinsics(
            &dir.join("intrinsics.txt"),
            &Intrinsics {
                fx: 50.0,
                fy: 50.0,
                cx: 15.5,
                cy: 11.5,
                width: 32,
                height: 24,
                depth_scale: 5000.0,
            },
        )
        .unwrap();
    }

    #[test]
    fn association_picks_nearest_within_window() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        make_sequence(
            root,
            "1.000 rgb/a.png\n",
            "1.005 depth/a.png\n1.030 depth/b.png\n",
        );
        write_png_rgb(&root.join("rgb/a.png"), 32, 24, [100, 100, 100]);
        write_png_gray16(&root.join("depth/a.png"), 32, 24, 5000);
        write_png_gray16(&root.join("depth/b.png"), 32, 24, 10000);
        let loader = SequenceLoader::open(root).unwrap();
        assert_eq!(loader.skipped(), 0);
        let frames: Vec<_> = loader.map(|f| f.unwrap()).collect();
        assert_eq!(frames.len(), 1);
        // Paired with t=1.005 (value 5000 -> 1.0 m), not t=1.030.
        assert_relative_eq!(frames[0].depth_at(0, 0), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn association_skips_outside_window() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        make_sequence(root, "1.000 rgb/a.png\n", "1.030 depth/b.png\n");
        write_png_rgb(&root.join("rgb/a.png"), 32, 24, [1, 2, 3]);
        write_png_gray16(&root.join("depth/b.png"), 32, 24, 5000);
        let loader = SequenceLoader::open(root).unwrap();
        assert_eq!(loader.skipped(), 1);
        assert_eq!(loader.len(), 0);
    }

    #[test]
    fn depth_scale_convention() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        make_sequence(root, "0.0 rgb/a.png\n", "0.0 depth/a.png\n");
        write_png_rgb(&root.join("rgb/a.png"), 32, 24, [0, 0, 0]);
        write_png_gray16(&root.join("depth/a.png"), 32, 24, 5000);
        let frames: Vec<_> = SequenceLoader::open(root)
            .unwrap()
            .map(|f| f.unwrap())
            .collect();
        assert_relative_eq!(frames[0].depth_at(5, 5), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn missing_index_file_reported() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("intrinsics.txt"), "fx=1\nfy=1\ncx=0\ncy=0\nwidth=2\nheight=2\n").unwrap();
        let err = SequenceLoader::open(dir.path()).unwrap_err();
        assert!(matches!(err, DatasetError::MissingFile(_)));
    }
}
