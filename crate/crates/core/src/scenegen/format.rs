//! On-disk layout: `manifest.json` plus one little-endian binary record per
//! sample under `samples/`.

use std::fs;
use std::path::{Path, PathBuf};

use super::generate::{DatasetManifest, LabeledPoints, SceneSample};
use super::primitive::{ObjectPrimitive, Shape};
use super::{SceneError, FORMAT_VERSION, MAGIC};
use crate::handkin::{HandParams, NUM_JOINTS, POSE_DIM, SHAPE_DIM};

pub fn sample_path(dir: &Path, id: usize) -> PathBuf {
    dir.join("samples").join(format!("{id:06}.asdf"))
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32s(&mut self, vs: impl IntoIterator<Item = f64>) {
        for v in vs {
            self.0.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fn points(&mut self, lp: &LabeledPoints) {
        self.u32(lp.len() as u32);
        self.u32(lp.negatives as u32);
        self.f32s(lp.points.iter().flatten().copied());
        self.f32s(lp.sdf.iter().copied());
    }
}

/// Serialize one sample. Values are stored as `f32`.
pub fn encode_sample(s: &SceneSample) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    w.u64(s.id);
    w.u64(s.seed);
    w.u32(s.render_size as u32);
    w.u32(s.render_size as u32);
    w.f32s(s.render.iter().copied());
    w.f32s(s.hand.theta.iter().copied());
    w.f32s(s.hand.beta.iter().copied());
    w.f32s(s.joints.iter().flatten().copied());
    w.u32(s.object.shape.code());
    w.f32s(s.object.shape.params());
    w.f32s(s.object.rotation);
    w.f32s(s.object.t_o);
    w.points(&s.hand_points);
    w.points(&s.object_points);
    w.0
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    file: &'a Path,
}

impl Reader<'_> {
    fn err(&self, msg: impl Into<String>) -> SceneError {
        SceneError::Format { file: self.file.to_path_buf(), msg: msg.into() }
    }
    fn take(&mut self, n: usize) -> Result<&[u8], SceneError> {
        if self.buf.len() - self.pos < n {
            return Err(self.err(format!("truncated record at byte {}", self.pos)));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u32(&mut self) -> Result<u32, SceneError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, SceneError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f64>, SceneError> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| self.err("length overflow"))?)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect())
    }
    fn triples(&mut self, n: usize) -> Result<Vec<[f64; 3]>, SceneError> {
        Ok(self.f32s(3 * n)?.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }
    fn points(&mut self) -> Result<LabeledPoints, SceneError> {
        let n = self.u32()? as usize;
        let negatives = self.u32()? as usize;
        if negatives > n {
            return Err(self.err(format!("negative count {negatives} exceeds point count {n}")));
        }
        let points = self.triples(n)?;
        let sdf = self.f32s(n)?;
        Ok(LabeledPoints { points, sdf, negatives })
    }
}

/// Parse one record; `file` is only used in error messages.
pub fn decode_sample(buf: &[u8], file: &Path) -> Result<SceneSample, SceneError> {
    let mut r = Reader { buf, pos: 0, file };
    if r.take(4)? != MAGIC {
        return Err(r.err("bad magic"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(r.err(format!("unsupported version {version}, expected {FORMAT_VERSION}")));
    }
    let id = r.u64()?;
    let seed = r.u64()?;
    let (w, h) = (r.u32()? as usize, r.u32()? as usize);
    if w != h {
        return Err(r.err(format!("non-square render {w}x{h}")));
    }
    let render = r.f32s(w * h)?;
    let mut hand = HandParams::default();
    hand.theta.copy_from_slice(&r.f32s(POSE_DIM)?);
    hand.beta.copy_from_slice(&r.f32s(SHAPE_DIM)?);
    let joints = r.triples(NUM_JOINTS)?;
    let code = r.u32()?;
    let p = r.f32s(3)?;
    let shape = Shape::from_code(code, [p[0], p[1], p[2]]).ok_or_else(|| r.err(format!("unknown primitive kind {code}")))?;
    let rot = r.f32s(3)?;
    let t = r.f32s(3)?;
    let object = ObjectPrimitive { shape, rotation: [rot[0], rot[1], rot[2]], t_o: [t[0], t[1], t[2]] };
    let hand_points = r.points()?;
    let object_points = r.points()?;
    if r.pos != buf.len() {
        return Err(r.err(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(SceneSample { id, seed, render_size: w, render, hand, joints, object, hand_points, object_points })
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> SceneError + '_ {
    move |source| SceneError::Io { path: path.to_path_buf(), source }
}

pub fn write_dataset(dir: &Path, manifest: &DatasetManifest, samples: &[SceneSample]) -> Result<(), SceneError> {
    if manifest.sample_count != samples.len() {
        return Err(SceneError::Count { expected: manifest.sample_count, found: samples.len() });
    }
    let sdir = dir.join("samples");
    fs::create_dir_all(&sdir).map_err(io(&sdir))?;
    for (i, s) in samples.iter().enumerate() {
        let path = sample_path(dir, i);
        fs::write(&path, encode_sample(s)).map_err(io(&path))?;
    }
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(io(&path))
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest, SceneError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    let m: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| SceneError::Format { file: path.clone(), msg: e.to_string() })?;
    if m.format_version != FORMAT_VERSION {
        return Err(SceneError::Format {
            file: path,
            msg: format!("unsupported version {}, expected {FORMAT_VERSION}", m.format_version),
        });
    }
    let sdir = dir.join("samples");
    let found = fs::read_dir(&sdir)
        .map_err(io(&sdir))?
        .filter_map(Result::ok)
        .filter(|e| e.path().extension().is_some_and(|x| x == "asdf"))
        .count();
    if found != m.sample_count {
        return Err(SceneError::Count { expected: m.sample_count, found });
    }
    Ok(m)
}

pub fn read_sample(dir: &Path, id: usize) -> Result<SceneSample, SceneError> {
    let path = sample_path(dir, id);
    let buf = fs::read(&path).map_err(io(&path))?;
    decode_sample(&buf, &path)
}

pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<SceneSample>), SceneError> {
    let m = read_manifest(dir)?;
    let samples = (0..m.sample_count).map(|i| read_sample(dir, i)).collect::<Result<Vec<_>, _>>()?;
    Ok((m, samples))
}
