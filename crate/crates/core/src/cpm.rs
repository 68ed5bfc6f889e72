//! Collective Perception Messages: detections, the line-delimited wire
//! format, and transformation of received detections into the ego frame.
//!
//! One message per line:
//!
//! ```text
//! sender_id=1 frame_index=4 timestamp=0.4 pose=x,y,z,yaw detections=[cx,cy,cz,l,w,h,yaw,class,conf;...]
//! ```
//!
//! Reals are written as the shortest decimal that parses back to the same
//! `f64`, so decoding an encoded message is exact.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::geometry::{OrientedBox, Pose};

/// A detected object. `class_id` 0 is "car".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: OrientedBox,
    pub class_id: u16,
    pub confidence: f64,
}

impl Detection {
    pub fn new(bbox: OrientedBox, class_id: u16, confidence: f64) -> Result<Self, CpmError> {
        let d = Self { bbox, class_id, confidence };
        d.validate("detection")?;
        Ok(d)
    }

    /// Builds a car detection, panicking on invalid input. Meant for fixtures.
    pub fn car(bbox: OrientedBox, confidence: f64) -> Self {
        Self::new(bbox, 0, confidence).expect("valid detection")
    }

    fn validate(&self, ctx: &str) -> Result<(), CpmError> {
        self.bbox.validate().map_err(|e| CpmError::invalid(ctx, e.to_string()))?;
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(CpmError::invalid(format!("{ctx}.conf"), format!("confidence {} outside [0, 1]", self.confidence)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpmMessage {
    pub sender_id: u32,
    pub frame_index: u64,
    /// Seconds.
    pub timestamp: f64,
    /// Sender vehicle pose in the world frame.
    pub sender_pose: Pose,
    /// Detections in the sender's frame.
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CpmError {
    #[error("malformed CPM record: field `{field}`: {reason}")]
    Parse { field: String, reason: String },
    #[error("invalid CPM record: field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("line {line}: {source}")]
    Line { line: usize, source: Box<CpmError> },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl CpmError {
    fn parse(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Parse { field: field.into(), reason: reason.into() }
    }

    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Invalid { field: field.into(), reason: reason.into() }
    }

    /// The offending field, when the error names one.
    pub fn field(&self) -> Option<&str> {
        match self {
            Self::Parse { field, .. } | Self::Invalid { field, .. } => Some(field),
            Self::Line { source, .. } => source.field(),
            Self::Io { .. } => None,
        }
    }
}

impl CpmMessage {
    pub fn validate(&self) -> Result<(), CpmError> {
        if !(self.timestamp.is_finite() && self.timestamp >= 0.0) {
            return Err(CpmError::invalid("timestamp", format!("{} is not a finite non-negative time", self.timestamp)));
        }
        let p = &self.sender_pose;
        if !p.is_finite() {
            return Err(CpmError::invalid("pose", "non-finite pose"));
        }
        if !(p.yaw > -std::f64::consts::PI && p.yaw <= std::f64::consts::PI) {
            return Err(CpmError::invalid("pose.yaw", format!("{} outside (-pi, pi]", p.yaw)));
        }
        for (i, d) in self.detections.iter().enumerate() {
            d.validate(&format!("detections[{i}]"))?;
        }
        Ok(())
    }
}

/// Encodes one message as a single line (no trailing newline).
pub fn encode(msg: &CpmMessage) -> String {
    let p = &msg.sender_pose;
    let mut out = format!(
        "sender_id={} frame_index={} timestamp={} pose={},{},{},{} detections=[",
        msg.sender_id, msg.frame_index, msg.timestamp, p.x, p.y, p.z, p.yaw
    );
    for (i, d) in msg.detections.iter().enumerate() {
        if i > 0 {
            out.push(';');
        }
        let b = &d.bbox;
        let _ = write!(out, "{},{},{},{},{},{},{},{},{}", b.cx, b.cy, b.cz, b.l, b.w, b.h, b.yaw, d.class_id, d.confidence);
    }
    out.push(']');
    out
}

fn expect_key<'a>(token: Option<&'a str>, key: &str) -> Result<&'a str, CpmError> {
    let token = token.ok_or_else(|| CpmError::parse(key, "missing (truncated record)"))?;
    token
        .strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| CpmError::parse(key, format!("expected `{key}=...`, found `{token}`")))
}

fn real(field: &str, s: &str) -> Result<f64, CpmError> {
    let v: f64 = s.parse().map_err(|_| CpmError::parse(field, format!("`{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(CpmError::parse(field, format!("`{s}` is not finite")));
    }
    Ok(v)
}

fn reals<const N: usize>(field: &str, names: [&str; N], s: &str) -> Result<[f64; N], CpmError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != N {
        return Err(CpmError::parse(field, format!("expected {N} comma-separated values, found {}", parts.len())));
    }
    let mut out = [0.0; N];
    for (i, (part, name)) in parts.iter().zip(names).enumerate() {
        out[i] = real(&format!("{field}.{name}"), part)?;
    }
    Ok(out)
}

fn decode_detection(field: &str, s: &str) -> Result<Detection, CpmError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 9 {
        return Err(CpmError::parse(field, format!("expected 9 values, found {}", parts.len())));
    }
    let names = ["cx", "cy", "cz", "l", "w", "h", "yaw"];
    let mut g = [0.0; 7];
    for (i, name) in names.iter().enumerate() {
        g[i] = real(&format!("{field}.{name}"), parts[i])?;
    }
    let class_id: u16 = parts[7]
        .parse()
        .map_err(|_| CpmError::parse(format!("{field}.class"), format!("`{}` is not a class id", parts[7])))?;
    let confidence = real(&format!("{field}.conf"), parts[8])?;
    let bbox = OrientedBox { cx: g[0], cy: g[1], cz: g[2], l: g[3], w: g[4], h: g[5], yaw: g[6] };
    if let Err(crate::geometry::GeometryError::InvalidBox { field: f, value }) = bbox.validate() {
        return Err(CpmError::invalid(format!("{field}.{f}"), format!("{value} is not allowed")));
    }
    let d = Detection { bbox, class_id, confidence };
    d.validate(field)?;
    Ok(d)
}

/// Parses one encoded line.
pub fn decode(line: &str) -> Result<CpmMessage, CpmError> {
    let line = line.trim_end_matches(['\n', '\r']);
    let mut tokens = line.split(' ');
    let sender_id = expect_key(tokens.next(), "sender_id")?;
    let sender_id: u32 = sender_id
        .parse()
        .map_err(|_| CpmError::parse("sender_id", format!("`{sender_id}` is not an unsigned integer")))?;
    let frame = expect_key(tokens.next(), "frame_index")?;
    let frame_index: u64 = frame
        .parse()
        .map_err(|_| CpmError::parse("frame_index", format!("`{frame}` is not an unsigned integer")))?;
    let timestamp = real("timestamp", expect_key(tokens.next(), "timestamp")?)?;
    let [x, y, z, yaw] = reals("pose", ["x", "y", "z", "yaw"], expect_key(tokens.next(), "pose")?)?;
    let dets = expect_key(tokens.next(), "detections")?;
    let body = dets
        .strip_prefix('[')
        .and_then(|d| d.strip_suffix(']'))
        .ok_or_else(|| CpmError::parse("detections", "expected a bracketed list (truncated record?)"))?;
    if let Some(extra) = tokens.next() {
        return Err(CpmError::parse("detections", format!("unexpected trailing token `{extra}`")));
    }
    let detections = if body.is_empty() {
        Vec::new()
    } else {
        body.split(';')
            .enumerate()
            .map(|(i, d)| decode_detection(&format!("detections[{i}]"), d))
            .collect::<Result<Vec<_>, _>>()?
    };
    let msg = CpmMessage { sender_id, frame_index, timestamp, sender_pose: Pose { x, y, z, yaw }, detections };
    msg.validate()?;
    Ok(msg)
}

/// Decodes UTF-8 bytes holding one record.
pub fn decode_bytes(bytes: &[u8]) -> Result<CpmMessage, CpmError> {
    let s = std::str::from_utf8(bytes).map_err(|e| CpmError::parse("record", format!("not UTF-8: {e}")))?;
    decode(s)
}

/// Encodes messages as a `.cpml` document, one line each.
pub fn encode_stream(msgs: &[CpmMessage]) -> String {
    let mut out = String::new();
    for m in msgs {
        out.push_str(&encode(m));
        out.push('\n');
    }
    out
}

/// Decodes a `.cpml` document. Blank lines are skipped.
pub fn decode_stream(text: &str) -> Result<Vec<CpmMessage>, CpmError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| decode(l).map_err(|e| CpmError::Line { line: i + 1, source: Box::new(e) }))
        .collect()
}

pub fn write_cpml(path: &Path, msgs: &[CpmMessage]) -> io::Result<()> {
    fs::write(path, encode_stream(msgs))
}

pub fn read_cpml(path: &Path) -> Result<Vec<CpmMessage>, CpmError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CpmError::Io { path: path.display().to_string(), message: e.to_string() })?;
    decode_stream(&text)
}

/// Maps a message's detections into the frame of `ego_pose`.
///
/// Box centers go through `inverse(ego) ∘ sender`; yaw shifts by the same
/// relative rotation. Dimensions, class and confidence are untouched.
pub fn to_ego_frame(msg: &CpmMessage, ego_pose: &Pose) -> Vec<Detection> {
    let rel = ego_pose.inverse().compose(&msg.sender_pose);
    msg.detections
        .iter()
        .map(|d| Detection { bbox: d.bbox.transformed(&rel), ..*d })
        .collect()
}
