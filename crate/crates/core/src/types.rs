use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Binary class of a frame or video. The discriminant is the logit index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real = 0,
    Fake = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }

    /// Decision rule shared by frames and videos: ties go to `Fake`.
    pub fn from_p_fake(p_fake: f64) -> Self {
        if p_fake >= 0.5 {
            Label::Fake
        } else {
            Label::Real
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Resolution bucket of a source video: low = 64×64 frames, high = 128×128.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResolutionTag {
    Low,
    High,
}

impl ResolutionTag {
    pub fn side(self) -> usize {
        match self {
            ResolutionTag::Low => 64,
            ResolutionTag::High => 128,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ResolutionTag::Low => "low",
            ResolutionTag::High => "high",
        }
    }
}

/// The three detector architectures, plus a single dense layer used as a
/// linear probe in tests and small experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    Plainnet,
    Branchnet,
    Sepnet,
    Linear,
}

impl ModelId {
    pub const DETECTORS: [ModelId; 3] = [ModelId::Plainnet, ModelId::Branchnet, ModelId::Sepnet];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Plainnet => "plainnet",
            ModelId::Branchnet => "branchnet",
            ModelId::Sepnet => "sepnet",
            ModelId::Linear => "linear",
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plainnet" => Ok(ModelId::Plainnet),
            "branchnet" => Ok(ModelId::Branchnet),
            "sepnet" => Ok(ModelId::Sepnet),
            "linear" => Ok(ModelId::Linear),
            other => Err(crate::Error::UnknownModel(other.to_string())),
        }
    }
}
