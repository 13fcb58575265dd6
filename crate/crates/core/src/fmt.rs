//! Output helpers: 17-significant-digit floats and atomic file writes.

use std::io::Write;
use std::path::Path;

use serde::Serializer;

use crate::error::Result;

/// Round-trippable decimal with 17 significant digits.
pub fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Serde adapter emitting a float as a 17-digit JSON number (`null` if non-finite).
pub fn serialize_float<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::Error as _;
    use serde::Serialize as _;
    if !x.is_finite() {
        return s.serialize_none();
    }
    let raw = serde_json::value::RawValue::from_string(float(*x)).map_err(S::Error::custom)?;
    raw.serialize(s)
}

pub fn serialize_floats<S: Serializer>(xs: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    struct F(f64);
    impl serde::Serialize for F {
        fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
            serialize_float(&self.0, s)
        }
    }
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for x in xs {
        seq.serialize_element(&F(*x))?;
    }
    seq.end()
}

/// Write `bytes` to a sibling temp file, then rename over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
