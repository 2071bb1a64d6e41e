//! Line-delimited JSON protocol spoken with an oracle subprocess.
//!
//! ```text
//! server greeting  {"proto":1,"k":16,"K":10,"d":32}     ("trusted":true optional)
//! request          {"id":0,"latent":[...k floats]}
//! response         {"id":0,"confidence":[...K floats]}  ("feature":[...d] only when trusted)
//! error reply      {"id":0,"error":"message"}
//! shutdown         {"id":-1}
//! ```
//!
//! One message per line, ids strictly increasing from 0, unknown fields
//! ignored. Floats are written in shortest round-trip form.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};

use super::{FeatureChannel, Oracle, OracleDescriptor, OracleKind, OracleResponse};
use crate::error::{Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;

const EXCERPT_LEN: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Greeting {
    pub proto: u32,
    pub k: usize,
    #[serde(rename = "K")]
    pub num_classes: usize,
    pub d: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub trusted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Shape the experiment expects the peer to announce. `feature_dim` is only
/// checked when given.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpectedShape {
    pub latent_dim: usize,
    pub num_classes: usize,
    pub feature_dim: Option<usize>,
}

fn excerpt(line: &str) -> String {
    let trimmed = line.trim_end();
    match trimmed.char_indices().nth(EXCERPT_LEN) {
        Some((cut, _)) => format!("{}…", &trimmed[..cut]),
        None => trimmed.to_string(),
    }
}

/// Client end of the protocol over any line reader and writer.
pub struct ExternalOracle<R, W: Write> {
    reader: R,
    writer: W,
    greeting: Greeting,
    next_id: i64,
    child: Option<Child>,
    shut_down: bool,
}

impl<R: BufRead, W: Write> ExternalOracle<R, W> {
    /// Reads and validates the greeting.
    pub fn connect(mut reader: R, writer: W, expected: ExpectedShape) -> Result<Self> {
        let mut line = String::new();
        let n = reader.read_line(&mut line).map_err(|source| Error::Transport {
            ordinal: 0,
            source,
        })?;
        if n == 0 {
            return Err(Error::Protocol {
                ordinal: 0,
                message: "peer closed before sending a greeting".into(),
                excerpt: String::new(),
            });
        }
        let greeting: Greeting = serde_json::from_str(line.trim()).map_err(|e| Error::Protocol {
            ordinal: 0,
            message: format!("malformed greeting: {e}"),
            excerpt: excerpt(&line),
        })?;
        if greeting.proto != PROTOCOL_VERSION {
            return Err(Error::Config(format!(
                "protocol version mismatch: peer speaks {}, client speaks {PROTOCOL_VERSION}",
                greeting.proto
            )));
        }
        if greeting.k != expected.latent_dim {
            return Err(Error::Config(format!(
                "latent dimension mismatch: oracle announced k={}, config expects k={}",
                greeting.k, expected.latent_dim
            )));
        }
        if greeting.num_classes != expected.num_classes {
            return Err(Error::Config(format!(
                "class count mismatch: oracle announced K={}, config expects K={}",
                greeting.num_classes, expected.num_classes
            )));
        }
        if let Some(d) = expected.feature_dim {
            if greeting.d != d {
                return Err(Error::Config(format!(
                    "feature dimension mismatch: oracle announced d={}, config expects d={d}",
                    greeting.d
                )));
            }
        }
        Ok(ExternalOracle {
            reader,
            writer,
            greeting,
            next_id: 0,
            child: None,
            shut_down: false,
        })
    }

    pub fn greeting(&self) -> Greeting {
        self.greeting
    }

    fn send(&mut self, request: &Request, ordinal: u64) -> Result<()> {
        let mut line = serde_json::to_string(request).expect("requests always serialize");
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|source| Error::Transport { ordinal, source })
    }

    /// One request/response round trip.
    pub fn round_trip(&mut self, latent: &[f64]) -> Result<OracleResponse> {
        let id = self.next_id;
        let ordinal = id as u64;
        if latent.len() != self.greeting.k {
            return Err(Error::invalid(format!(
                "latent has dimension {}, oracle expects {}",
                latent.len(),
                self.greeting.k
            )));
        }
        self.next_id += 1;
        self.send(
            &Request {
                id,
                latent: Some(latent.to_vec()),
            },
            ordinal,
        )?;
        let mut line = String::new();
        let n = self
            .reader
            .read_line(&mut line)
            .map_err(|source| Error::Transport { ordinal, source })?;
        if n == 0 {
            return Err(Error::Transport {
                ordinal,
                source: std::io::Error::new(
                    std::io::ErrorKind::UnexpectedEof,
                    "oracle closed its output",
                ),
            });
        }
        let protocol = |message: String| Error::Protocol {
            ordinal,
            message,
            excerpt: excerpt(&line),
        };
        let response: Response = serde_json::from_str(line.trim())
            .map_err(|e| protocol(format!("malformed response: {e}")))?;
        if response.id != Some(id) {
            return Err(protocol(format!("expected id {id}, got {:?}", response.id)));
        }
        if let Some(message) = response.error {
            return Err(Error::Remote { ordinal, message });
        }
        let confidence = response
            .confidence
            .ok_or_else(|| protocol("response lacks a confidence vector".into()))?;
        if confidence.len() != self.greeting.num_classes {
            return Err(protocol(format!(
                "confidence has {} entries, expected {}",
                confidence.len(),
                self.greeting.num_classes
            )));
        }
        if let Some(feature) = &response.feature {
            if !self.greeting.trusted {
                return Err(protocol("feature field sent without trusted evaluation".into()));
            }
            if feature.len() != self.greeting.d {
                return Err(protocol(format!(
                    "feature has {} entries, expected {}",
                    feature.len(),
                    self.greeting.d
                )));
            }
        }
        Ok(OracleResponse {
            confidence,
            feature: response.feature,
        })
    }

    /// Sends the shutdown request. Also run on drop.
    pub fn shutdown(&mut self) -> Result<()> {
        if self.shut_down {
            return Ok(());
        }
        self.shut_down = true;
        let ordinal = self.next_id.max(0) as u64;
        self.send(&Request { id: -1, latent: None }, ordinal)?;
        if let Some(mut child) = self.child.take() {
            child
                .wait()
                .map_err(|source| Error::Transport { ordinal, source })?;
        }
        Ok(())
    }
}

impl ExternalOracle<BufReader<ChildStdout>, ChildStdin> {
    /// Launches `command` through `sh -c` and performs the handshake.
    pub fn spawn(command: &str, expected: ExpectedShape) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|source| Error::Transport { ordinal: 0, source })?;
        let stdin = child.stdin.take().expect("stdin was piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout was piped"));
        match ExternalOracle::connect(stdout, stdin, expected) {
            Ok(mut oracle) => {
                oracle.child = Some(child);
                Ok(oracle)
            }
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                Err(e)
            }
        }
    }
}

impl<R, W: Write> Drop for ExternalOracle<R, W> {
    fn drop(&mut self) {
        if !self.shut_down {
            self.shut_down = true;
            let _ = self.writer.write_all(b"{\"id\":-1}\n");
            let _ = self.writer.flush();
        }
        if let Some(mut child) = self.child.take() {
            let _ = child.wait();
        }
    }
}

impl<R: BufRead + Send, W: Write + Send> Oracle for ExternalOracle<R, W> {
    fn descriptor(&self) -> OracleDescriptor {
        OracleDescriptor {
            latent_dim: self.greeting.k,
            num_classes: self.greeting.num_classes,
            feature_dim: if self.greeting.trusted { self.greeting.d } else { 0 },
            kind: OracleKind::External,
        }
    }

    fn query(&mut self, latent: &[f64]) -> Result<OracleResponse> {
        self.round_trip(latent)
    }
}

impl<R: BufRead + Send, W: Write + Send> FeatureChannel for ExternalOracle<R, W> {
    fn feature_dim(&self) -> usize {
        self.greeting.d
    }

    fn features(&mut self, latent: &[f64]) -> Result<Vec<f64>> {
        if !self.greeting.trusted {
            return Err(Error::Unavailable(
                "oracle did not enable trusted evaluation; no features".into(),
            ));
        }
        let ordinal = self.next_id as u64;
        self.round_trip(latent)?.feature.ok_or(Error::Protocol {
            ordinal,
            message: "trusted oracle omitted the feature field".into(),
            excerpt: String::new(),
        })
    }
}

/// What a served model returns for one latent.
pub type ModelReply = std::result::Result<OracleResponse, String>;

/// Server end of the protocol. Answers requests with `model` until a
/// shutdown request or end of input. Malformed requests and model failures
/// produce error lines and keep the connection open.
pub fn serve<R, W, F>(reader: R, mut writer: W, greeting: Greeting, mut model: F) -> std::io::Result<()>
where
    R: BufRead,
    W: Write,
    F: FnMut(&[f64]) -> ModelReply,
{
    fn emit<W: Write, T: Serialize>(writer: &mut W, message: &T) -> std::io::Result<()> {
        let mut line = serde_json::to_string(message).expect("protocol messages serialize");
        line.push('\n');
        writer.write_all(line.as_bytes())?;
        writer.flush()
    }
    fn error(id: Option<i64>, message: String) -> Response {
        Response {
            id,
            confidence: None,
            feature: None,
            error: Some(message),
        }
    }

    emit(&mut writer, &greeting)?;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let request: Request = match serde_json::from_str(line.trim()) {
            Ok(r) => r,
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|id| id.as_i64()));
                emit(&mut writer, &error(id, format!("malformed request: {e}")))?;
                continue;
            }
        };
        if request.id == -1 {
            return Ok(());
        }
        let Some(latent) = request.latent else {
            emit(&mut writer, &error(Some(request.id), "request lacks latent".into()))?;
            continue;
        };
        if latent.len() != greeting.k {
            let msg = format!("latent has {} entries, expected {}", latent.len(), greeting.k);
            emit(&mut writer, &error(Some(request.id), msg))?;
            continue;
        }
        let response = match model(&latent) {
            Ok(reply) => Response {
                id: Some(request.id),
                confidence: Some(reply.confidence),
                feature: if greeting.trusted { reply.feature } else { None },
                error: None,
            },
            Err(message) => error(Some(request.id), message),
        };
        emit(&mut writer, &response)?;
    }
    Ok(())
}
