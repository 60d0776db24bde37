//! Text-to-representation model: phoneme encoder, variance adaptor with
//! length regulation, and a projection onto the representation space.

pub mod align;
pub mod config;
pub mod loss;
pub mod model;
pub mod prosody;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use align::{reconcile_durations, uniform_alignment, MAX_RECONCILE_GAP};
pub use config::{AcousticConfig, LossWeights};
pub use loss::{acoustic_loss, log_duration_target, AcousticLossBreakdown};
pub use model::{length_regulate, AcousticModel, Dropout, Durations, Forward, VarianceOutputs};
pub use prosody::{bucketize, frame_energy, frame_pitch, phoneme_average, VarianceStats};
pub use train::{train_acoustic, Acoustic, AcousticExample, AcousticTrainer, AcousticTrainOutputs, ACOUSTIC_KIND};

/// Padding id; never produced by [`symbol_id`].
pub const PAD_ID: u32 = 0;

/// Fixed phoneme inventory: padding, silence, short pause, then the 39
/// ARPAbet phonemes without stress marks.
pub const INVENTORY: &[&str] = &[
    "<pad>", "sil", "sp", "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G", "HH",
    "IH", "IY", "JH", "K", "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH", "UW", "V", "W", "Y",
    "Z", "ZH",
];

pub fn inventory_size() -> usize {
    INVENTORY.len()
}

/// Inventory id of a phoneme symbol; stress digits are ignored.
pub fn symbol_id(symbol: &str) -> Result<u32> {
    let bare = symbol.trim_end_matches(|c: char| c.is_ascii_digit());
    INVENTORY
        .iter()
        .skip(1)
        .position(|s| s.eq_ignore_ascii_case(bare))
        .map(|i| i as u32 + 1)
        .ok_or_else(|| Error::Data(format!("unknown phoneme {symbol:?}")))
}

/// Phoneme ids with optional per-phoneme targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhonemeSequence {
    pub ids: Vec<u32>,
    /// Representation frames per phoneme.
    #[serde(default)]
    pub durations: Option<Vec<u32>>,
    /// Mean F0 in Hz over voiced frames, 0 when unvoiced.
    #[serde(default)]
    pub pitch: Option<Vec<f32>>,
    /// Mean frame RMS.
    #[serde(default)]
    pub energy: Option<Vec<f32>>,
}

impl PhonemeSequence {
    pub fn new(ids: Vec<u32>) -> Self {
        Self {
            ids,
            durations: None,
            pitch: None,
            energy: None,
        }
    }

    pub fn from_symbols<S: AsRef<str>>(symbols: &[S]) -> Result<Self> {
        Ok(Self::new(symbols.iter().map(|s| symbol_id(s.as_ref())).collect::<Result<_>>()?))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if let Some(bad) = self.ids.iter().find(|&&i| i == PAD_ID || i as usize >= vocab_size) {
            return Err(Error::Data(format!("phoneme id {bad} outside inventory of {vocab_size}")));
        }
        let n = self.ids.len();
        let check = |name: &str, len: Option<usize>| match len {
            Some(l) if l != n => Err(Error::Data(format!("{name} has {l} entries for {n} phonemes"))),
            _ => Ok(()),
        };
        check("durations", self.durations.as_ref().map(Vec::len))?;
        check("pitch", self.pitch.as_ref().map(Vec::len))?;
        check("energy", self.energy.as_ref().map(Vec::len))?;
        Ok(())
    }

    pub fn total_frames(&self) -> Option<usize> {
        self.durations.as_ref().map(|d| d.iter().map(|&x| x as usize).sum())
    }
}
