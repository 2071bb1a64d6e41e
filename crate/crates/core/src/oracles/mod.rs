//! Black-box query targets.
//!
//! Attack code only ever sees [`MeteredOracle`], which wraps any [`Oracle`]
//! and books every call in a shared [`QueryLedger`]. Feature vectors for
//! evaluation travel through the separate [`FeatureChannel`] trait and never
//! through the metered path.

mod external;
mod ledger;
mod synthetic;

use serde::{Deserialize, Serialize};

pub use external::{
    serve, ExpectedShape, ExternalOracle, Greeting, ModelReply, Request, Response, PROTOCOL_VERSION,
};
pub use ledger::{LedgerCounts, QueryLedger, QueryPurpose};
pub use synthetic::{make_world, SyntheticOracle, SyntheticWorld, WhichClassifier, WorldParams};

use std::sync::Arc;

use crate::error::{Error, Result};

/// Tolerance on the confidence sum before renormalization kicks in.
pub const CONFIDENCE_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Synthetic,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleDescriptor {
    pub latent_dim: usize,
    pub num_classes: usize,
    /// Zero when the oracle does not expose features.
    pub feature_dim: usize,
    pub kind: OracleKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResponse {
    pub confidence: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<Vec<f64>>,
}

/// A classifier composed with a generator, reachable only by query.
pub trait Oracle: Send {
    fn descriptor(&self) -> OracleDescriptor;

    fn query(&mut self, latent: &[f64]) -> Result<OracleResponse>;
}

/// Trusted side channel returning the evaluation feature of a latent.
pub trait FeatureChannel: Send {
    fn feature_dim(&self) -> usize;

    fn features(&mut self, latent: &[f64]) -> Result<Vec<f64>>;
}

/// Index of the largest entry; the earliest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Attack-side handle: validates replies and books every query.
pub struct MeteredOracle {
    inner: Box<dyn Oracle>,
    ledger: Arc<QueryLedger>,
    descriptor: OracleDescriptor,
    renormalized: u64,
}

impl MeteredOracle {
    pub fn new(inner: Box<dyn Oracle>, ledger: Arc<QueryLedger>) -> Self {
        let descriptor = inner.descriptor();
        MeteredOracle {
            inner,
            ledger,
            descriptor,
            renormalized: 0,
        }
    }

    pub fn descriptor(&self) -> OracleDescriptor {
        self.descriptor
    }

    pub fn ledger(&self) -> &Arc<QueryLedger> {
        &self.ledger
    }

    /// Replies whose confidences drifted from summing to one and were
    /// rescaled.
    pub fn renormalized(&self) -> u64 {
        self.renormalized
    }

    pub fn query(&mut self, latent: &[f64], purpose: QueryPurpose) -> Result<OracleResponse> {
        if latent.len() != self.descriptor.latent_dim {
            return Err(Error::invalid(format!(
                "latent has dimension {}, oracle expects {}",
                latent.len(),
                self.descriptor.latent_dim
            )));
        }
        let ordinal = self.ledger.record(purpose);
        let mut response = self.inner.query(latent)?;
        let conf = &mut response.confidence;
        if conf.len() != self.descriptor.num_classes {
            return Err(Error::Protocol {
                ordinal,
                message: format!(
                    "confidence vector has {} entries, expected {}",
                    conf.len(),
                    self.descriptor.num_classes
                ),
                excerpt: String::new(),
            });
        }
        if conf.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Protocol {
                ordinal,
                message: "confidences must be finite and nonnegative".into(),
                excerpt: format!("{conf:?}"),
            });
        }
        let sum: f64 = conf.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Protocol {
                ordinal,
                message: "confidences sum to zero".into(),
                excerpt: format!("{conf:?}"),
            });
        }
        if (sum - 1.0).abs() > CONFIDENCE_SUM_TOL {
            conf.iter_mut().for_each(|c| *c /= sum);
            self.renormalized += 1;
        }
        Ok(response)
    }
}
