//! Fetches the four MNIST files, gunzips them and checks their sizes.

use std::io::Read;
use std::path::Path;

use anyhow::{bail, Context, Result};
use flate2::read::GzDecoder;

pub const DEFAULT_SOURCE: &str = "https://storage.googleapis.com/cvdf-datasets/mnist/";

/// Decompressed file names and their exact sizes in bytes.
pub const FILES: [(&str, usize); 4] = [
    ("train-images-idx3-ubyte", 16 + 60_000 * 784),
    ("train-labels-idx1-ubyte", 8 + 60_000),
    ("t10k-images-idx3-ubyte", 16 + 10_000 * 784),
    ("t10k-labels-idx1-ubyte", 8 + 10_000),
];

const MAX_DOWNLOAD: u64 = 64 << 20;

fn is_url(source: &str) -> bool {
    source.starts_with("http://") || source.starts_with("https://")
}

fn download(url: &str) -> Result<Vec<u8>> {
    let mut resp = ureq::get(url).call().with_context(|| format!("GET {url}"))?;
    let body = resp
        .body_mut()
        .with_config()
        .limit(MAX_DOWNLOAD)
        .read_to_vec()
        .with_context(|| format!("reading {url}"))?;
    Ok(body)
}

/// Reads `<name>.gz` from a URL or directory, falling back to the plain
/// file for directories.
fn fetch_one(source: &str, name: &str) -> Result<Vec<u8>> {
    if is_url(source) {
        let base = source.trim_end_matches('/');
        return download(&format!("{base}/{name}.gz"));
    }
    let dir = Path::new(source);
    let gz = dir.join(format!("{name}.gz"));
    let path = if gz.exists() { gz } else { dir.join(name) };
    std::fs::read(&path).with_context(|| format!("reading {}", path.display()))
}

fn gunzip_if_needed(bytes: Vec<u8>) -> Result<Vec<u8>> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes.as_slice()).read_to_end(&mut out).context("decompressing")?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

/// Writes all four decompressed files into `dest`. Nothing is written for a
/// file whose size is wrong.
pub fn fetch_data(source: &str, dest: &Path) -> Result<()> {
    std::fs::create_dir_all(dest).with_context(|| format!("creating {}", dest.display()))?;
    for (name, size) in FILES {
        let bytes = gunzip_if_needed(fetch_one(source, name)?).with_context(|| name.to_string())?;
        if bytes.len() != size {
            bail!("{name}: expected {size} bytes, got {}", bytes.len());
        }
        let tmp = dest.join(format!("{name}.part"));
        std::fs::write(&tmp, &bytes).with_context(|| format!("writing {}", tmp.display()))?;
        std::fs::rename(&tmp, dest.join(name)).with_context(|| format!("renaming {}", tmp.display()))?;
        eprintln!("{name}: {size} bytes ok");
    }
    Ok(())
}
