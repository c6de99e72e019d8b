use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// MRI contrast. Declaration order is the canonical class order (and the
/// argmax tie-break order) everywhere in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Modality {
    T1,
    T1c,
    T2,
    #[serde(rename = "FLAIR")]
    Flair,
    #[serde(rename = "PD")]
    Pd,
    #[serde(rename = "MRA")]
    Mra,
}

impl Modality {
    pub const ALL: [Modality; 6] = [
        Modality::T1,
        Modality::T1c,
        Modality::T2,
        Modality::Flair,
        Modality::Pd,
        Modality::Mra,
    ];

    /// The three contrasts the phantom generator synthesizes.
    pub const PHANTOM: [Modality; 3] = [Modality::T1, Modality::T1c, Modality::T2];

    pub fn tag(self) -> &'static str {
        match self {
            Modality::T1 => "T1",
            Modality::T1c => "T1c",
            Modality::T2 => "T2",
            Modality::Flair => "FLAIR",
            Modality::Pd => "PD",
            Modality::Mra => "MRA",
        }
    }

    pub fn ordinal(self) -> usize {
        self as usize
    }

    /// Clinical description used as the text prompt for this contrast.
    pub fn prompt_text(self) -> &'static str {
        match self {
            Modality::T1 => "T1-weighted (T1) images provide high-resolution anatomical detail, with fat appearing bright and water appearing dark, useful for visualizing normal tissue structure.",
            Modality::T1c => "T1 contrast-enhanced (T1c) images involve the administration of a contrast agent, enhancing vascular structures and providing better visualization of tumors and lesions.",
            Modality::T2 => "T2-weighted (T2) images emphasize fluid-rich tissues, with water appearing bright and fat darker, making it ideal for detecting abnormalities like edema or inflammation.",
            Modality::Flair => "T2 Fluid-Attenuated Inversion Recovery MRI (FLAIR) suppresses cerebrospinal fluid (CSF) signals to better visualize pathological tissues with high water content, such as edema, tumors, or white matter lesions.",
            Modality::Pd => "Proton density (PD) weighted MRI image highlights tissues with high hydrogen atom concentration, appearing brightest in areas like fat and fluid, while minimizing T1/T2 relaxation effects for enhanced tissue contrast.",
            Modality::Mra => "Magnetic Resonance Angiography (MRA) non-invasively images blood vessels by detecting flowing blood signals, aiding in diagnosing vascular abnormalities like stenosis, aneurysms, or malformations.",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.tag())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Modality::ALL
            .into_iter()
            .find(|m| m.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Param(format!("unknown modality {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_round_trip() {
        for m in Modality::ALL {
            assert_eq!(m.tag().parse::<Modality>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.tag()));
        }
        assert_eq!("t1c".parse::<Modality>().unwrap(), Modality::T1c);
        assert!("t3".parse::<Modality>().is_err());
    }

    #[test]
    fn prompts_name_their_contrast() {
        assert!(Modality::T1
            .prompt_text()
            .contains("fat appearing bright and water appearing dark"));
        assert!(Modality::T2
            .prompt_text()
            .contains("water appearing bright and fat darker"));
        assert!(Modality::T1c.prompt_text().contains("enhancing vascular structures"));
        assert!(Modality::ALL
            .iter()
            .all(|m| m.prompt_text().contains(&format!("({})", m.tag()))));
    }
}
