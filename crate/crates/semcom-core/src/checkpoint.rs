//! Self-describing checkpoint container. JSON-encoded so floats round-trip
//! bit-exactly (shortest-representation printing) and the layout stays
//! inspectable; a format version gates loading.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::Codec;
use crate::error::{CoreError, Result};
use crate::poison::{PoisonPlan, TargetSet, TriggerGenerator};
use crate::scalar::Scalar;

pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to reproduce an attack from artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackArtifacts<T> {
    pub generator: TriggerGenerator<T>,
    pub targets: TargetSet<T>,
    pub plan: PoisonPlan,
    /// Test-split indices the targets were drawn from (excluded from eval).
    pub target_indices: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub version: u32,
    pub codec: Codec<T>,
    /// CR = |x| / |s|.
    pub cr: f64,
    pub dataset: String,
    pub seed: u64,
    pub attack: Option<AttackArtifacts<T>>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(codec: Codec<T>, cr: f64, dataset: String, seed: u64) -> Self {
        Checkpoint {
            version: FORMAT_VERSION,
            codec,
            cr,
            dataset,
            seed,
            attack: None,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut writer = std::io::BufWriter::new(file);
        serde_json::to_writer(&mut writer, self)
            .map_err(|e| CoreError::Format(format!("checkpoint encode: {e}")))?;
        use std::io::Write;
        writer.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let ckpt: Checkpoint<T> = serde_json::from_reader(reader)
            .map_err(|e| CoreError::Format(format!("checkpoint decode: {e}")))?;
        if ckpt.version != FORMAT_VERSION {
            return Err(CoreError::Format(format!(
                "unsupported checkpoint version {} (expected {FORMAT_VERSION})",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }
}
