//! Record of every value that crosses a client boundary.

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    /// Number of rows held by a client.
    ShardSize,
    /// Total squared distance `D_p` of a client's rows to the current centres.
    DistanceTotal,
    /// Number of not-yet-chosen rows, reported only by the degenerate fallback.
    UnchosenCount,
    /// A row sent to the server as a new initial centre.
    SelectedCentre,
    /// A local centroid after one Lloyd step.
    LocalCentroid,
    /// The sample count behind a local centroid.
    LocalCount,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRecord {
    /// 0 during initialisation, then the communication round.
    pub round: usize,
    pub client_id: usize,
    pub kind: AuditKind,
    pub cluster: Option<usize>,
    pub payload: Vec<f64>,
}

#[derive(Serialize)]
struct AuditLine<'a> {
    round: usize,
    client_id: usize,
    kind: AuditKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    cluster: Option<usize>,
    payload_digest: &'a str,
}

impl AuditRecord {
    /// SHA-256 over the little-endian bytes of the payload.
    pub fn payload_digest(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.payload {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn to_json_line(&self) -> String {
        let digest = self.payload_digest();
        serde_json::to_string(&AuditLine {
            round: self.round,
            client_id: self.client_id,
            kind: self.kind,
            cluster: self.cluster,
            payload_digest: &digest,
        })
        .expect("audit line serialises")
    }
}

/// Append-only audit log. A disabled log drops records, which keeps grid
/// searches cheap.
#[derive(Debug, Clone, Default)]
pub struct AuditLog {
    enabled: bool,
    records: Vec<AuditRecord>,
}

impl AuditLog {
    pub fn enabled() -> Self {
        Self {
            enabled: true,
            records: Vec::new(),
        }
    }

    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn record(
        &mut self,
        round: usize,
        client_id: usize,
        kind: AuditKind,
        cluster: Option<usize>,
        payload: &[f64],
    ) {
        if self.enabled {
            self.records.push(AuditRecord {
                round,
                client_id,
                kind,
                cluster,
                payload: payload.to_vec(),
            });
        }
    }

    pub fn records(&self) -> &[AuditRecord] {
        &self.records
    }

    /// Line-delimited JSON, one record per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_json_line());
            out.push('\n');
        }
        out
    }
}
