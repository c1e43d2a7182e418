//! Label embeddings behind one provider contract.
//!
//! Three providers ship with the crate: a deterministic hashed character
//! trigram embedder, a precomputed vector file, and an HTTP client for an
//! external embedding service. Every vector leaving a provider has unit norm
//! (or is exactly zero).

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::lexicon::label_tokens;
use super::NormalizeError;
use crate::exec::Execution;

pub const DEFAULT_DIM: usize = 256;
pub const DEFAULT_REMOTE_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Scales `values` to unit length; the zero vector stays zero.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = l2(&values);
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        EmbeddingVector(values)
    }

    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector(vec![0.0; dim])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        l2(&self.0)
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        cosine(&self.0, &other.0)
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity; 0 when either side is the zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let (na, nb) = (l2(a), l2(b));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier recorded in normalization maps.
    fn id(&self) -> String;

    fn embed(&self, label: &str) -> Result<EmbeddingVector, NormalizeError>;

    fn embed_batch(
        &self,
        labels: &[String],
        execution: Execution,
    ) -> Result<Vec<EmbeddingVector>, NormalizeError> {
        execution.try_map(labels, |l| self.embed(l))
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed feature hashing of boundary-padded character trigrams.
///
/// Each token `t` contributes the trigrams of `<t>`; a trigram's FNV-1a hash
/// picks the bucket from its upper bits and the sign from its lowest bit.
/// Token vectors are unit-normalized, averaged, and normalized again.
#[derive(Debug, Clone)]
pub struct HashedNgram {
    dim: usize,
}

impl Default for HashedNgram {
    fn default() -> Self {
        HashedNgram { dim: DEFAULT_DIM }
    }
}

impl HashedNgram {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashedNgram { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        let padded: Vec<char> = std::iter::once('<')
            .chain(token.chars())
            .chain(std::iter::once('>'))
            .collect();
        let mut v = vec![0.0; self.dim];
        let mut buf = String::new();
        for gram in padded.windows(3) {
            buf.clear();
            buf.extend(gram);
            let h = fnv1a64(buf.as_bytes());
            let bucket = ((h >> 1) % self.dim as u64) as usize;
            v[bucket] += if h & 1 == 0 { 1.0 } else { -1.0 };
        }
        v
    }
}

impl EmbeddingProvider for HashedNgram {
    fn id(&self) -> String {
        format!("hashed-trigram-fnv1a/d{}", self.dim)
    }

    fn embed(&self, label: &str) -> Result<EmbeddingVector, NormalizeError> {
        let tokens = label_tokens(label);
        if tokens.is_empty() {
            return Err(NormalizeError::EmptyLabel);
        }
        let mut acc = vec![0.0; self.dim];
        for token in &tokens {
            let tv = EmbeddingVector::normalized(self.token_vector(token));
            for (a, t) in acc.iter_mut().zip(tv.values()) {
                *a += t;
            }
        }
        let n = tokens.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(EmbeddingVector::normalized(acc))
    }
}

/// Free-function form of [`HashedNgram`] at the default dimension.
pub fn embed_hashed(label: &str) -> Result<EmbeddingVector, NormalizeError> {
    HashedNgram::default().embed(label)
}

#[derive(Debug, Serialize, Deserialize)]
struct VectorFileWire {
    dim: usize,
    vectors: std::collections::BTreeMap<String, Vec<f64>>,
}

/// Precomputed vectors keyed by label.
#[derive(Debug, Clone)]
pub struct VectorFile {
    id: String,
    dim: usize,
    vectors: HashMap<String, EmbeddingVector>,
}

impl VectorFile {
    pub fn from_vectors(
        id: impl Into<String>,
        dim: usize,
        vectors: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<Self, NormalizeError> {
        let mut out = HashMap::new();
        for (label, values) in vectors {
            if values.len() != dim {
                return Err(NormalizeError::DimensionMismatch {
                    expected: dim,
                    got: values.len(),
                });
            }
            out.insert(label, EmbeddingVector::normalized(values));
        }
        Ok(VectorFile {
            id: id.into(),
            dim,
            vectors: out,
        })
    }

    pub fn from_json(id: impl Into<String>, bytes: &[u8]) -> Result<Self, NormalizeError> {
        let wire: VectorFileWire =
            serde_json::from_slice(bytes).map_err(|e| NormalizeError::VectorFile(e.to_string()))?;
        Self::from_vectors(id, wire.dim, wire.vectors)
    }

    pub fn load(path: &Path) -> Result<Self, NormalizeError> {
        let bytes = std::fs::read(path)
            .map_err(|e| NormalizeError::VectorFile(format!("{}: {e}", path.display())))?;
        Self::from_json(format!("file:{}", path.display()), &bytes)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Alias for the vector file loader.
pub fn load_vector_file(path: &Path) -> Result<VectorFile, NormalizeError> {
    VectorFile::load(path)
}

impl EmbeddingProvider for VectorFile {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn embed(&self, label: &str) -> Result<EmbeddingVector, NormalizeError> {
        self.vectors
            .get(label)
            .or_else(|| self.vectors.get(&super::lexicon::fold_label(label)))
            .cloned()
            .ok_or_else(|| NormalizeError::MissingLabel(label.to_owned()))
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Client for `POST <endpoint>/embed` with body `{"texts": [...]}` and
/// response `{"vectors": [[...], ...]}`.
///
/// Responses are cached per label, so one instance always returns the same
/// vector for the same label.
pub struct RemoteEmbedder {
    endpoint: String,
    agent: ureq::Agent,
    cache: Mutex<HashMap<String, EmbeddingVector>>,
    dim: Mutex<Option<usize>>,
}

impl std::fmt::Debug for RemoteEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteEmbedder")
            .field("endpoint", &self.endpoint)
            .finish_non_exhaustive()
    }
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteEmbedder {
            endpoint: endpoint.into().trim_end_matches('/').to_owned(),
            agent,
            cache: Mutex::new(HashMap::new()),
            dim: Mutex::new(None),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// One batched request, without caching.
    pub fn request(&self, labels: &[String]) -> Result<Vec<EmbeddingVector>, NormalizeError> {
        let url = format!("{}/embed", self.endpoint);
        let mut resp = self
            .agent
            .post(&url)
            .send_json(EmbedRequest { texts: labels })
            .map_err(transport_error)?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(NormalizeError::BadStatus(status));
        }
        let body: EmbedResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| match transport_error(e) {
                NormalizeError::Transport(msg) => NormalizeError::BadResponse(msg),
                other => other,
            })?;
        if body.vectors.len() != labels.len() {
            return Err(NormalizeError::DimensionMismatch {
                expected: labels.len(),
                got: body.vectors.len(),
            });
        }
        let mut dim = self.dim.lock().expect("dim lock");
        let mut out = Vec::with_capacity(labels.len());
        for v in body.vectors {
            let expected = *dim.get_or_insert(v.len());
            if v.len() != expected || expected == 0 {
                return Err(NormalizeError::DimensionMismatch {
                    expected,
                    got: v.len(),
                });
            }
            out.push(EmbeddingVector::normalized(v));
        }
        Ok(out)
    }
}

fn transport_error(e: ureq::Error) -> NormalizeError {
    match e {
        ureq::Error::Timeout(_) => NormalizeError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => NormalizeError::Timeout,
        other => NormalizeError::Transport(other.to_string()),
    }
}

/// Embed `labels` with a single request to `endpoint`.
pub fn remote_embed(
    endpoint: &str,
    labels: &[String],
    timeout: Duration,
) -> Result<Vec<EmbeddingVector>, NormalizeError> {
    RemoteEmbedder::new(endpoint, timeout).request(labels)
}

impl EmbeddingProvider for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote:{}", self.endpoint)
    }

    fn embed(&self, label: &str) -> Result<EmbeddingVector, NormalizeError> {
        let mut v = self.embed_batch(&[label.to_owned()], Execution::Sequential)?;
        Ok(v.remove(0))
    }

    fn embed_batch(
        &self,
        labels: &[String],
        _execution: Execution,
    ) -> Result<Vec<EmbeddingVector>, NormalizeError> {
        if labels.iter().any(|l| l.trim().is_empty()) {
            return Err(NormalizeError::EmptyLabel);
        }
        let missing: Vec<String> = {
            let cache = self.cache.lock().expect("cache lock");
            let mut seen = std::collections::HashSet::new();
            labels
                .iter()
                .filter(|l| !cache.contains_key(*l) && seen.insert(l.as_str()))
                .cloned()
                .collect()
        };
        if !missing.is_empty() {
            let fetched = self.request(&missing)?;
            let mut cache = self.cache.lock().expect("cache lock");
            for (label, v) in missing.into_iter().zip(fetched) {
                // A concurrent caller may have won the race; keep its vector.
                cache.entry(label).or_insert(v);
            }
        }
        let cache = self.cache.lock().expect("cache lock");
        Ok(labels.iter().map(|l| cache[l].clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn hashed_is_deterministic_and_unit() {
        assert_eq!(embed_hashed("attack").unwrap(), embed_hashed("attack").unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let len = rng.random_range(1..20);
            let label: String = (0..len)
                .map(|_| {
                    let c = rng.random_range(0..27u8);
                    if c == 26 { '_' } else { (b'a' + c) as char }
                })
                .collect();
            let label = format!("{label}x");
            let n = embed_hashed(&label).unwrap().norm();
            assert!((n - 1.0).abs() < 1e-6, "{label}: {n}");
        }
    }

    #[test]
    fn hashed_prefers_surface_neighbours() {
        let a = embed_hashed("attack").unwrap();
        let near = a.cosine(&embed_hashed("attacks").unwrap());
        let far = a.cosine(&embed_hashed("rice_cooker").unwrap());
        assert!(near > far, "{near} <= {far}");
        assert!(near > 0.75);
    }

    #[test]
    fn hashed_rejects_empty() {
        assert!(matches!(embed_hashed(""), Err(NormalizeError::EmptyLabel)));
        assert!(matches!(embed_hashed("__ "), Err(NormalizeError::EmptyLabel)));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn vector_file_contract() {
        let json = br#"{"dim":2,"vectors":{"run":[2.0,0.0],"walk":[0.0,0.5]}}"#;
        let vf = VectorFile::from_json("t", json).unwrap();
        assert_eq!(vf.len(), 2);
        let run = vf.embed("run").unwrap();
        assert_eq!(run.values(), &[1.0, 0.0]);
        assert!((vf.embed("walk").unwrap().norm() - 1.0).abs() < 1e-12);
        assert!(matches!(vf.embed("jump"), Err(NormalizeError::MissingLabel(l)) if l == "jump"));
        assert_eq!(vf.embed("Run").unwrap(), run);
    }

    #[test]
    fn vector_file_dimension_checked() {
        let json = br#"{"dim":3,"vectors":{"run":[1.0,0.0]}}"#;
        assert!(matches!(
            VectorFile::from_json("t", json),
            Err(NormalizeError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    /// Minimal HTTP server answering every request with `respond(body)`.
    fn serve<F>(respond: F) -> (String, Arc<AtomicUsize>)
    where
        F: Fn(&serde_json::Value) -> (u16, String) + Send + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                let mut line = String::new();
                loop {
                    line.clear();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                counter.fetch_add(1, Ordering::SeqCst);
                let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
                let (status, payload) = respond(&req);
                let resp = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                    payload.len()
                );
                let _ = stream.write_all(resp.as_bytes());
            }
        });
        (format!("http://{addr}"), hits)
    }

    fn labels(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn remote_accepts_matching_batch() {
        let (url, hits) = serve(|req| {
            let n = req["texts"].as_array().unwrap().len();
            let vectors: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 + 1.0, 1.0]).collect();
            (200, serde_json::json!({ "vectors": vectors }).to_string())
        });
        let remote = RemoteEmbedder::new(&url, Duration::from_secs(5));
        let v = remote
            .embed_batch(&labels(&["a", "b", "c"]), Execution::Sequential)
            .unwrap();
        assert_eq!(v.len(), 3);
        assert!(v.iter().all(|x| (x.norm() - 1.0).abs() < 1e-12));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
        // Cached: no second request, same vector.
        assert_eq!(remote.embed("b").unwrap(), v[1]);
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn remote_short_response_is_a_mismatch() {
        let (url, _) = serve(|_| (200, r#"{"vectors":[[1,0],[0,1]]}"#.to_string()));
        let err = remote_embed(&url, &labels(&["a", "b", "c"]), Duration::from_secs(5)).unwrap_err();
        assert!(matches!(err, NormalizeError::DimensionMismatch { expected: 3, got: 2 }));
    }

    #[test]
    fn remote_ragged_vectors_are_a_mismatch() {
        let (url, _) = serve(|_| (200, r#"{"vectors":[[1,0],[0,1,0]]}"#.to_string()));
        let err = remote_embed(&url, &labels(&["a", "b"]), Duration::from_secs(5)).unwrap_err();
        assert!(matches!(err, NormalizeError::DimensionMismatch { expected: 2, got: 3 }));
    }

    #[test]
    fn remote_bad_status() {
        let (url, _) = serve(|_| (503, "{}".to_string()));
        let err = remote_embed(&url, &labels(&["a"]), Duration::from_secs(5)).unwrap_err();
        assert!(matches!(err, NormalizeError::BadStatus(503)));
    }

    #[test]
    fn remote_times_out() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            std::thread::sleep(Duration::from_millis(1500));
            drop(stream);
        });
        let err = remote_embed(&url, &labels(&["a"]), Duration::from_millis(200)).unwrap_err();
        assert!(matches!(err, NormalizeError::Timeout), "{err:?}");
        handle.join().unwrap();
    }
}
