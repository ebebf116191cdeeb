//! Image references with content addressing.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use base64::Engine;
use base64::engine::general_purpose::STANDARD as BASE64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot read image {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image at {0} is only available by URL")]
    RemoteOnly(String),
    #[error("image content hash mismatch (expected {expected}, found {found})")]
    HashMismatch { expected: ContentHash, found: ContentHash },
    #[error("failed to download image {url}: {message}")]
    Download { url: String, message: String },
}

/// SHA-256 digest of the raw image bytes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentHash([u8; 32]);

impl ContentHash {
    pub fn of(bytes: &[u8]) -> Self {
        let digest: [u8; 32] = Sha256::digest(bytes).into();
        Self(digest)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentHash({})", self.to_hex())
    }
}

impl FromStr for ContentHash {
    type Err = hex::FromHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Self(out))
    }
}

impl Serialize for ContentHash {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ContentHash {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ImageSource {
    FilePath {
        path: PathBuf,
    },
    Url {
        url: String,
    },
    InlineBytes {
        #[serde(with = "base64_bytes")]
        data: Vec<u8>,
    },
}

/// An image under test, identified by the hash of its bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    #[serde(flatten)]
    pub source: ImageSource,
    pub content_hash: ContentHash,
}

impl ImageRef {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| ImageError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self {
            content_hash: ContentHash::of(&bytes),
            source: ImageSource::FilePath {
                path: path.to_path_buf(),
            },
        })
    }

    pub fn from_bytes(data: Vec<u8>) -> Self {
        Self {
            content_hash: ContentHash::of(&data),
            source: ImageSource::InlineBytes { data },
        }
    }

    /// A URL image whose bytes were already downloaded by the caller.
    pub fn from_url(url: impl Into<String>, bytes: &[u8]) -> Self {
        Self {
            content_hash: ContentHash::of(bytes),
            source: ImageSource::Url { url: url.into() },
        }
    }

    pub async fn fetch_url(client: &reqwest::Client, url: &str) -> Result<Self, ImageError> {
        let download = |message: String| ImageError::Download {
            url: url.to_string(),
            message,
        };
        let response = client
            .get(url)
            .send()
            .await
            .and_then(|r| r.error_for_status())
            .map_err(|e| download(e.to_string()))?;
        let bytes = response.bytes().await.map_err(|e| download(e.to_string()))?;
        Ok(Self::from_url(url, &bytes))
    }

    /// Raw bytes for local sources. URL sources are passed by reference.
    pub fn read_bytes(&self) -> Result<Vec<u8>, ImageError> {
        match &self.source {
            ImageSource::FilePath { path } => std::fs::read(path).map_err(|source| ImageError::Read {
                path: path.clone(),
                source,
            }),
            ImageSource::InlineBytes { data } => Ok(data.clone()),
            ImageSource::Url { url } => Err(ImageError::RemoteOnly(url.clone())),
        }
    }

    /// Re-reads local bytes and checks them against the stored hash.
    pub fn verify(&self) -> Result<(), ImageError> {
        let bytes = self.read_bytes()?;
        let found = ContentHash::of(&bytes);
        if found != self.content_hash {
            return Err(ImageError::HashMismatch {
                expected: self.content_hash,
                found,
            });
        }
        Ok(())
    }

    pub fn locator(&self) -> String {
        match &self.source {
            ImageSource::FilePath { path } => path.display().to_string(),
            ImageSource::Url { url } => url.clone(),
            ImageSource::InlineBytes { data } => format!("inline:{} bytes", data.len()),
        }
    }
}

/// Best-effort MIME type from magic bytes; defaults to JPEG.
pub fn sniff_mime(bytes: &[u8]) -> &'static str {
    match bytes {
        [0x89, b'P', b'N', b'G', ..] => "image/png",
        [b'G', b'I', b'F', b'8', ..] => "image/gif",
        [b'R', b'I', b'F', b'F', _, _, _, _, b'W', b'E', b'B', b'P', ..] => "image/webp",
        _ => "image/jpeg",
    }
}

mod base64_bytes {
    use super::BASE64;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&BASE64.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(deserializer)?;
        BASE64.decode(s).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn data_url(bytes: &[u8]) -> String {
    format!("data:{};base64,{}", sniff_mime(bytes), BASE64.encode(bytes))
}
