use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::schema::DialogDataset;
use crate::error::{Error, Result};

fn is_gzip(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// Reads a `.json` or `.json.gz` dataset and validates it.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<DialogDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    let mut reader: Box<dyn Read> = if is_gzip(path) {
        Box::new(GzDecoder::new(BufReader::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    reader.read_to_string(&mut text).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

pub fn parse_dataset(text: &str) -> Result<DialogDataset> {
    let ds: DialogDataset = serde_json::from_str(text)?;
    ds.validate()?;
    Ok(ds)
}

pub fn dataset_to_json(ds: &DialogDataset) -> Result<String> {
    Ok(serde_json::to_string(ds)?)
}

/// Writes through a temporary sibling file and renames it into place.
pub fn save_dataset(ds: &DialogDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = dataset_to_json(ds)?;
    let mut bytes = Vec::new();
    if is_gzip(path) {
        // Fixed header fields keep the output byte-stable.
        let mut enc = GzEncoder::new(&mut bytes, Compression::default());
        enc.write_all(json.as_bytes()).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?;
    } else {
        bytes = json.into_bytes();
    }
    write_atomic(path, &bytes)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let file = File::create(&tmp)?;
        let mut w = BufWriter::new(file);
        w.write_all(bytes)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}
