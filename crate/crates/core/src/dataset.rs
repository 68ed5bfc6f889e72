//! On-disk dataset layout and the detections file format.
//!
//! ```text
//! scenario.cfg
//! frames/000000/ego.cloud      u32 LE count, then count × (x, y, z, i) as f32 LE
//! frames/000000/gt.txt         one "cx cy cz l w h yaw" per line
//! frames/000000/ego_pose.txt   "x y z yaw"
//! cpm/vehicle1.cpml            one CPM per line, every frame
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use crate::config::ConfigError;
use crate::cpm::{decode_stream, encode_stream, CpmError, CpmMessage, Detection};
use crate::geometry::{OrientedBox, Pose};
use crate::sampling::{Point, PointCloud};
use crate::sim::{Dataset, FrameData, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
    #[error("{path}: {source}")]
    Cpm { path: String, source: CpmError },
    #[error("missing CPM stream for vehicle(s) {}", .ids.iter().map(u32::to_string).collect::<Vec<_>>().join(", "))]
    MissingCpm { ids: Vec<u32> },
    #[error("frame {frame} out of range ({frames} frames)")]
    FrameOutOfRange { frame: usize, frames: usize },
}

fn io_err(path: &Path, e: std::io::Error) -> DatasetError {
    DatasetError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> DatasetError {
    DatasetError::Format { path: path.display().to_string(), line, message: message.into() }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn read_text(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn encode_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 16 * cloud.len());
    out.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
    for p in cloud.points() {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_cloud(bytes: &[u8]) -> Result<PointCloud, String> {
    let head: [u8; 4] = bytes.get(..4).and_then(|b| b.try_into().ok()).ok_or("missing point count")?;
    let n = u32::from_le_bytes(head) as usize;
    let body = &bytes[4..];
    if body.len() != n * 16 {
        return Err(format!("expected {} bytes of points for count {n}, found {}", n * 16, body.len()));
    }
    let f = |i: usize| f32::from_le_bytes(body[4 * i..4 * i + 4].try_into().expect("4 bytes")) as f64;
    let points = (0..n).map(|k| Point::new(f(4 * k), f(4 * k + 1), f(4 * k + 2), f(4 * k + 3))).collect();
    PointCloud::new(points).map_err(|e| e.to_string())
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<(), DatasetError> {
    write_file(path, &encode_cloud(cloud))
}

pub fn read_cloud(path: &Path) -> Result<PointCloud, DatasetError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode_cloud(&bytes).map_err(|m| format_err(path, 0, m))
}

fn parse_reals(path: &Path, line_no: usize, line: &str, expected: usize) -> Result<Vec<f64>, DatasetError> {
    let vals: Vec<&str> = line.split_whitespace().collect();
    if vals.len() != expected {
        return Err(format_err(path, line_no, format!("expected {expected} values, found {}", vals.len())));
    }
    vals.iter()
        .map(|v| v.parse::<f64>().map_err(|e| format_err(path, line_no, format!("`{v}`: {e}"))))
        .collect()
}

pub fn write_boxes(path: &Path, boxes: &[OrientedBox]) -> Result<(), DatasetError> {
    let mut text = String::new();
    for b in boxes {
        let _ = writeln!(text, "{} {} {} {} {} {} {}", b.cx, b.cy, b.cz, b.l, b.w, b.h, b.yaw);
    }
    write_file(path, text.as_bytes())
}

pub fn read_boxes(path: &Path) -> Result<Vec<OrientedBox>, DatasetError> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v = parse_reals(path, i + 1, line, 7)?;
        out.push(OrientedBox::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6]).map_err(|e| format_err(path, i + 1, e.to_string()))?);
    }
    Ok(out)
}

fn write_pose(path: &Path, p: &Pose) -> Result<(), DatasetError> {
    write_file(path, format!("{} {} {} {}\n", p.x, p.y, p.z, p.yaw).as_bytes())
}

fn read_pose(path: &Path) -> Result<Pose, DatasetError> {
    let text = read_text(path)?;
    let v = parse_reals(path, 1, text.trim(), 4)?;
    let pose = Pose { x: v[0], y: v[1], z: v[2], yaw: v[3] };
    if !pose.is_finite() {
        return Err(format_err(path, 1, "pose must be finite"));
    }
    Ok(Pose::new(pose.x, pose.y, pose.z, pose.yaw))
}

pub fn frame_dir(root: &Path, index: usize) -> PathBuf {
    root.join("frames").join(format!("{index:06}"))
}

pub fn cpm_path(root: &Path, vehicle: u32) -> PathBuf {
    root.join("cpm").join(format!("vehicle{vehicle}.cpml"))
}

/// Writes a dataset. Same dataset, same bytes.
pub fn write_dataset(ds: &Dataset, root: &Path) -> Result<(), DatasetError> {
    let mk = |p: &Path| fs::create_dir_all(p).map_err(|e| io_err(p, e));
    mk(&root.join("frames"))?;
    mk(&root.join("cpm"))?;
    write_file(&root.join("scenario.cfg"), ds.config.to_text().as_bytes())?;
    for f in &ds.frames {
        let dir = frame_dir(root, f.index);
        mk(&dir)?;
        write_cloud(&dir.join("ego.cloud"), &f.ego_cloud)?;
        write_boxes(&dir.join("gt.txt"), &f.gt)?;
        write_pose(&dir.join("ego_pose.txt"), &f.ego_pose)?;
    }
    for id in 1..=ds.config.cooperative as u32 {
        let msgs: Vec<CpmMessage> = ds.frames.iter().flat_map(|f| f.cpms.iter().filter(|m| m.sender_id == id).cloned()).collect();
        write_file(&cpm_path(root, id), encode_stream(&msgs).as_bytes())?;
    }
    Ok(())
}

/// A dataset on disk, read lazily. CPM streams are only touched when asked
/// for.
#[derive(Debug)]
pub struct DatasetDir {
    root: PathBuf,
    config: ScenarioConfig,
    cpms: OnceLock<Result<Vec<Vec<CpmMessage>>, DatasetError>>,
}

impl DatasetDir {
    pub fn open(root: &Path) -> Result<Self, DatasetError> {
        let cfg_path = root.join("scenario.cfg");
        let text = read_text(&cfg_path)?;
        let config = ScenarioConfig::parse(&text).map_err(|source| DatasetError::Config { path: cfg_path.display().to_string(), source })?;
        Ok(Self { root: root.to_path_buf(), config, cpms: OnceLock::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn frame_count(&self) -> usize {
        self.config.frames
    }

    fn check(&self, index: usize) -> Result<PathBuf, DatasetError> {
        if index >= self.frame_count() {
            return Err(DatasetError::FrameOutOfRange { frame: index, frames: self.frame_count() });
        }
        Ok(frame_dir(&self.root, index))
    }

    pub fn ground_truth(&self, index: usize) -> Result<Vec<OrientedBox>, DatasetError> {
        read_boxes(&self.check(index)?.join("gt.txt"))
    }

    /// Frame data; `cpms` stays empty unless `with_cpms`.
    pub fn load_frame(&self, index: usize, with_cpms: bool) -> Result<FrameData, DatasetError> {
        let dir = self.check(index)?;
        let cpms = if with_cpms { self.cpms()?[index].clone() } else { Vec::new() };
        Ok(FrameData {
            index,
            ego_pose: read_pose(&dir.join("ego_pose.txt"))?,
            ego_cloud: read_cloud(&dir.join("ego.cloud"))?,
            gt: read_boxes(&dir.join("gt.txt"))?,
            cpms,
        })
    }

    /// All CPMs grouped by frame, ascending sender id within a frame.
    pub fn cpms(&self) -> Result<&Vec<Vec<CpmMessage>>, DatasetError> {
        self.cpms.get_or_init(|| self.read_cpms()).as_ref().map_err(Clone::clone)
    }

    fn read_cpms(&self) -> Result<Vec<Vec<CpmMessage>>, DatasetError> {
        let ids: Vec<u32> = (1..=self.config.cooperative as u32).collect();
        let missing: Vec<u32> = ids.iter().copied().filter(|&id| !cpm_path(&self.root, id).is_file()).collect();
        if !missing.is_empty() {
            return Err(DatasetError::MissingCpm { ids: missing });
        }
        let mut by_frame = vec![Vec::new(); self.frame_count()];
        for id in ids {
            let path = cpm_path(&self.root, id);
            let msgs = decode_stream(&read_text(&path)?).map_err(|source| DatasetError::Cpm { path: path.display().to_string(), source })?;
            for m in msgs {
                let frame = m.frame_index as usize;
                if frame >= by_frame.len() {
                    return Err(DatasetError::FrameOutOfRange { frame, frames: by_frame.len() });
                }
                by_frame[frame].push(m);
            }
        }
        for msgs in &mut by_frame {
            msgs.sort_by_key(|m| m.sender_id);
        }
        Ok(by_frame)
    }

    /// The whole dataset in memory.
    pub fn load_all(&self) -> Result<Dataset, DatasetError> {
        let frames = (0..self.frame_count()).map(|i| self.load_frame(i, true)).collect::<Result<_, _>>()?;
        Ok(Dataset { config: self.config, frames })
    }
}

const DETECTIONS_MAGIC: &str = "# covfuse detections v1";

/// Per-frame detections with a header carrying frame count and method:
///
/// ```text
/// # covfuse detections v1 frames=3 method=cvsa+cpr-spc
/// 0 12.5 3.5 0.8 4.5 1.8 1.6 0 0 0.93
/// ```
pub fn encode_detections(method: &str, frames: &[Vec<Detection>]) -> String {
    let mut out = format!("{DETECTIONS_MAGIC} frames={} method={method}\n", frames.len());
    for (i, dets) in frames.iter().enumerate() {
        for d in dets {
            let b = &d.bbox;
            let _ = writeln!(out, "{i} {} {} {} {} {} {} {} {} {}", b.cx, b.cy, b.cz, b.l, b.w, b.h, b.yaw, d.class_id, d.confidence);
        }
    }
    out
}

/// Inverse of [`encode_detections`]: `(method, frames)`.
pub fn decode_detections(path: &Path, text: &str) -> Result<(String, Vec<Vec<Detection>>), DatasetError> {
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l).unwrap_or("");
    let rest = header.strip_prefix(DETECTIONS_MAGIC).ok_or_else(|| format_err(path, 1, "not a covfuse detections file"))?;
    let mut frames_count = None;
    let mut method = String::new();
    for tok in rest.split_whitespace() {
        match tok.split_once('=') {
            Some(("frames", v)) => frames_count = v.parse::<usize>().ok(),
            Some(("method", v)) => method = v.to_string(),
            _ => return Err(format_err(path, 1, format!("unexpected header token `{tok}`"))),
        }
    }
    let n = frames_count.ok_or_else(|| format_err(path, 1, "header lacks frames=N"))?;
    let mut frames = vec![Vec::new(); n];
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 10 {
            return Err(format_err(path, i + 1, format!("expected 10 fields, found {}", toks.len())));
        }
        let frame: usize = toks[0].parse().map_err(|e| format_err(path, i + 1, format!("frame: {e}")))?;
        if frame >= n {
            return Err(format_err(path, i + 1, format!("frame {frame} beyond header count {n}")));
        }
        let v = parse_reals(path, i + 1, &toks[1..8].join(" "), 7)?;
        let class_id: u16 = toks[8].parse().map_err(|e| format_err(path, i + 1, format!("class: {e}")))?;
        let conf: f64 = toks[9].parse().map_err(|e| format_err(path, i + 1, format!("confidence: {e}")))?;
        let bbox = OrientedBox::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6]).map_err(|e| format_err(path, i + 1, e.to_string()))?;
        let det = Detection::new(bbox, class_id, conf).map_err(|e| format_err(path, i + 1, e.to_string()))?;
        frames[frame].push(det);
    }
    Ok((method, frames))
}

pub fn write_detections(path: &Path, method: &str, frames: &[Vec<Detection>]) -> Result<(), DatasetError> {
    write_file(path, encode_detections(method, frames).as_bytes())
}

pub fn read_detections(path: &Path) -> Result<(String, Vec<Vec<Detection>>), DatasetError> {
    decode_detections(path, &read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::run_scenario;

    fn tiny() -> ScenarioConfig {
        let mut cfg = ScenarioConfig { frames: 2, traffic: 5, ..Default::default() };
        cfg.sensor.points_per_frame = 64 * 300;
        cfg
    }

    #[test]
    fn cloud_round_trip_is_exact_for_f32_values() {
        let cloud = PointCloud::new(vec![Point::new(1.5, -2.25, 0.125, 0.2f32 as f64), Point::new(100.1f32 as f64, 0.0, 0.0, 1.0)]).unwrap();
        assert_eq!(decode_cloud(&encode_cloud(&cloud)).unwrap(), cloud);
        assert!(decode_cloud(&[1, 0, 0, 0, 9]).is_err());
        assert!(decode_cloud(&[]).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let ds = run_scenario(&tiny()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let back = DatasetDir::open(dir.path()).unwrap().load_all().unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn same_seed_same_bytes() {
        let ds = run_scenario(&tiny()).unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        write_dataset(&ds, a.path()).unwrap();
        write_dataset(&run_scenario(&tiny()).unwrap(), b.path()).unwrap();
        for rel in ["scenario.cfg", "frames/000001/ego.cloud", "frames/000001/gt.txt", "cpm/vehicle2.cpml"] {
            assert_eq!(fs::read(a.path().join(rel)).unwrap(), fs::read(b.path().join(rel)).unwrap(), "{rel}");
        }
    }

    #[test]
    fn missing_cpm_lists_ids() {
        let ds = run_scenario(&tiny()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        fs::remove_file(cpm_path(dir.path(), 1)).unwrap();
        fs::remove_file(cpm_path(dir.path(), 3)).unwrap();
        let d = DatasetDir::open(dir.path()).unwrap();
        assert!(d.load_frame(0, false).is_ok());
        let err = d.load_frame(0, true).unwrap_err();
        assert_eq!(err, DatasetError::MissingCpm { ids: vec![1, 3] });
        assert!(err.to_string().contains("1, 3"));
    }

    #[test]
    fn detections_round_trip() {
        let b = OrientedBox::new(1.0 / 3.0, 2.0, 0.8, 4.5, 1.8, 1.6, -0.1).unwrap();
        let frames = vec![vec![Detection::car(b, 0.3333333333333333)], vec![], vec![Detection::new(b, 2, 1.0).unwrap()]];
        let text = encode_detections("pd+late", &frames);
        assert_eq!(decode_detections(Path::new("x"), &text).unwrap(), ("pd+late".to_string(), frames));
    }

    #[test]
    fn detections_errors() {
        let p = Path::new("d.txt");
        assert!(decode_detections(p, "hello\n").is_err());
        assert!(decode_detections(p, "# covfuse detections v1 frames=1 method=x\n3 0 0 0 1 1 1 0 0 0.5\n").is_err());
        assert!(decode_detections(p, "# covfuse detections v1 frames=1 method=x\n0 0 0 0 -1 1 1 0 0 0.5\n").is_err());
    }

    #[test]
    fn boxes_parse_errors_name_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.txt");
        fs::write(&p, "1 2 3 4 5 6 0\n1 2 3\n").unwrap();
        assert!(matches!(read_boxes(&p), Err(DatasetError::Format { line: 2, .. })));
    }
}
