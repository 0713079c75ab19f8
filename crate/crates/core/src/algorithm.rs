use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Precoding schemes known to the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    Zf,
    Mmse,
    Bd,
    Gmi,
    Sgmi,
    /// Successive-optimisation THP with successive null-space feedforward.
    SoThp,
    /// Successive-optimisation THP with the S-GMI feedforward.
    SoThpSgmi,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Zf,
        Algorithm::Mmse,
        Algorithm::Bd,
        Algorithm::Gmi,
        Algorithm::Sgmi,
        Algorithm::SoThp,
        Algorithm::SoThpSgmi,
    ];

    /// Block-structured schemes compared in the complexity figure.
    pub const BLOCK_FAMILY: [Algorithm; 5] = [
        Algorithm::Bd,
        Algorithm::Gmi,
        Algorithm::Sgmi,
        Algorithm::SoThp,
        Algorithm::SoThpSgmi,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Zf => "zf",
            Algorithm::Mmse => "mmse",
            Algorithm::Bd => "bd",
            Algorithm::Gmi => "gmi",
            Algorithm::Sgmi => "sgmi",
            Algorithm::SoThp => "so-thp",
            Algorithm::SoThpSgmi => "so-thp-sgmi",
        }
    }

    pub fn is_nonlinear(self) -> bool {
        matches!(self, Algorithm::SoThp | Algorithm::SoThpSgmi)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', '+'], "-");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.tag() == norm)
            .ok_or_else(|| Error::UnknownAlgorithm(s.trim().to_string()))
    }
}
