//! Fixture bundles: a directory holding `manifest.json` plus one
//! `<request key>.json` file per recorded exchange.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::transport::{canonical_headers, now_unix, Request, Response, Transport, TransportError};

pub const FIXTURE_VERSION: &str = "pkgraph-fixture/1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub method: String,
    pub url: String,
    pub status: u16,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub entries: BTreeMap<String, ManifestEntry>,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            version: FIXTURE_VERSION.into(),
            entries: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub request: Request,
    pub response: Response,
}

fn io_err(path: &Path, e: std::io::Error) -> TransportError {
    TransportError::Io(format!("{}: {e}", path.display()))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), TransportError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
    f.sync_all().map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, TransportError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| TransportError::Fixture(format!("{}: {e}", path.display())))?;
    if manifest.version != FIXTURE_VERSION {
        return Err(TransportError::Fixture(format!(
            "unsupported fixture version {:?} (expected {FIXTURE_VERSION})",
            manifest.version
        )));
    }
    Ok(manifest)
}

/// Serves responses from a bundle. Everything is loaded up front, so
/// concurrent readers never touch the filesystem.
#[derive(Debug, Clone)]
pub struct ReplayTransport {
    dir: PathBuf,
    exchanges: BTreeMap<String, Response>,
}

impl ReplayTransport {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, TransportError> {
        let dir = dir.as_ref().to_path_buf();
        let manifest = read_manifest(&dir)?;
        let mut exchanges = BTreeMap::new();
        for (key, entry) in &manifest.entries {
            let path = dir.join(&entry.file);
            let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            let ex: Exchange = serde_json::from_str(&text)
                .map_err(|e| TransportError::Fixture(format!("{}: {e}", path.display())))?;
            exchanges.insert(key.clone(), ex.response);
        }
        tracing::debug!(dir = %dir.display(), exchanges = exchanges.len(), "fixture bundle loaded");
        Ok(ReplayTransport { dir, exchanges })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.exchanges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exchanges.is_empty()
    }
}

impl Transport for ReplayTransport {
    fn execute(&self, request: &Request) -> Result<Response, TransportError> {
        self.exchanges
            .get(&request.key())
            .cloned()
            .ok_or_else(|| TransportError::ReplayMiss {
                request: format!("{request} (key {})", request.key()),
            })
    }
}

/// Passes requests to `inner` and persists every exchange into `dir`.
/// Re-recording a request overwrites its entry.
pub struct RecordingTransport<T> {
    inner: T,
    dir: PathBuf,
    manifest: Mutex<Manifest>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T, dir: impl AsRef<Path>) -> Result<Self, TransportError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let manifest = if dir.join(MANIFEST_FILE).exists() {
            read_manifest(&dir)?
        } else {
            Manifest::default()
        };
        let rec = RecordingTransport {
            inner,
            dir,
            manifest: Mutex::new(manifest),
        };
        rec.flush()?;
        Ok(rec)
    }

    pub fn flush(&self) -> Result<(), TransportError> {
        let manifest = self.manifest.lock().expect("manifest lock");
        let text = serde_json::to_string_pretty(&*manifest).expect("manifest serializes");
        write_atomic(&self.dir.join(MANIFEST_FILE), format!("{text}\n").as_bytes())
    }

    pub fn into_inner(self) -> T {
        self.inner
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn execute(&self, request: &Request) -> Result<Response, TransportError> {
        let response = self.inner.execute(request)?;
        let key = request.key();
        let stored = Exchange {
            request: request.canonical(),
            response: Response {
                status: response.status,
                headers: canonical_headers(&response.headers),
                body: response.body.clone(),
                recorded_at: Some(response.recorded_at.unwrap_or_else(now_unix)),
            },
        };
        let file = format!("{key}.json");
        let text = serde_json::to_string_pretty(&stored).expect("exchange serializes");
        write_atomic(&self.dir.join(&file), format!("{text}\n").as_bytes())?;
        {
            let mut manifest = self.manifest.lock().expect("manifest lock");
            manifest.entries.insert(
                key,
                ManifestEntry {
                    method: stored.request.method.clone(),
                    url: stored.request.url.clone(),
                    status: stored.response.status,
                    file,
                },
            );
        }
        self.flush()?;
        Ok(stored.response)
    }
}

/// Wraps a live transport so a session leaves a replayable bundle behind.
pub fn record_session<T: Transport>(live: T, output_dir: impl AsRef<Path>) -> Result<RecordingTransport<T>, TransportError> {
    RecordingTransport::new(live, output_dir)
}

/// Canned responses keyed by request, for tests and fixture authoring.
#[derive(Debug, Default)]
pub struct StaticTransport {
    responses: BTreeMap<String, Response>,
}

impl StaticTransport {
    pub fn with(mut self, request: &Request, status: u16, body: &str) -> Self {
        self.insert(request, status, body);
        self
    }

    pub fn insert(&mut self, request: &Request, status: u16, body: &str) {
        self.responses.insert(
            request.key(),
            Response {
                status,
                headers: BTreeMap::from([
                    ("content-type".to_string(), "application/json".to_string()),
                    ("date".to_string(), "Mon, 01 Jan 2024 00:00:00 GMT".to_string()),
                ]),
                body: body.to_string(),
                recorded_at: Some(1_700_000_000),
            },
        );
    }
}

impl Transport for StaticTransport {
    fn execute(&self, request: &Request) -> Result<Response, TransportError> {
        self.responses
            .get(&request.key())
            .cloned()
            .ok_or_else(|| TransportError::Network {
                host: request.host(),
                attempts: 1,
                message: "no canned response".into(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let req = Request::get("https://pypi.org/pypi/django/json");
        let live = StaticTransport::default().with(&req, 200, "{\"ok\":true}");
        let rec = record_session(live, dir.path()).unwrap();
        let live_resp = rec.execute(&req).unwrap();
        let replay = ReplayTransport::open(dir.path()).unwrap();
        let replayed = replay.execute(&req).unwrap();
        assert_eq!(live_resp, replayed);
        assert!(!replayed.headers.contains_key("date"));
        assert_eq!(replayed.body, "{\"ok\":true}");
    }

    #[test]
    fn replay_miss_names_request() {
        let dir = tempfile::tempdir().unwrap();
        drop(record_session(StaticTransport::default(), dir.path()).unwrap());
        let replay = ReplayTransport::open(dir.path()).unwrap();
        let err = replay.execute(&Request::get("https://example.org/x")).unwrap_err();
        match err {
            TransportError::ReplayMiss { request } => assert!(request.contains("https://example.org/x")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn recording_twice_supersedes() {
        let dir = tempfile::tempdir().unwrap();
        let req = Request::get("https://pypi.org/pypi/flask/json");
        let first = record_session(StaticTransport::default().with(&req, 200, "1"), dir.path()).unwrap();
        first.execute(&req).unwrap();
        let second = record_session(StaticTransport::default().with(&req, 200, "2"), dir.path()).unwrap();
        second.execute(&req).unwrap();
        let manifest = read_manifest(dir.path()).unwrap();
        assert_eq!(manifest.entries.len(), 1);
        let files = fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(files, 2);
        assert_eq!(ReplayTransport::open(dir.path()).unwrap().execute(&req).unwrap().body, "2");
    }

    #[test]
    fn wrong_fixture_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), "{\"version\":\"pkgraph-fixture/0\",\"entries\":{}}").unwrap();
        assert!(matches!(ReplayTransport::open(dir.path()), Err(TransportError::Fixture(_))));
    }

    #[test]
    fn replay_bytes_are_stable() {
        let dir = tempfile::tempdir().unwrap();
        let req = Request::get("https://pypi.org/pypi/x/json");
        let rec = record_session(StaticTransport::default().with(&req, 200, "{}"), dir.path()).unwrap();
        rec.execute(&req).unwrap();
        let path = dir.path().join(format!("{}.json", req.key()));
        let before = fs::read(&path).unwrap();
        rec.execute(&req).unwrap();
        assert_eq!(before, fs::read(&path).unwrap());
    }
}
