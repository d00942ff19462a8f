use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SequenceType {
    /// Computer generated.
    CG,
    /// Natural content.
    NC,
}

impl fmt::Display for SequenceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SequenceType::CG => "CG",
            SequenceType::NC => "NC",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SequencePreset {
    pub id: char,
    pub name: &'static str,
    pub kind: SequenceType,
    pub width: usize,
    pub height: usize,
    pub views: usize,
}

/// The MPEG immersive-video test sequences used in the reference study.
pub const SEQUENCE_PRESETS: [SequencePreset; 7] = [
    SequencePreset { id: 'A', name: "Classroom", kind: SequenceType::CG, width: 4096, height: 2048, views: 14 },
    SequencePreset { id: 'B', name: "Museum", kind: SequenceType::CG, width: 2048, height: 2048, views: 18 },
    SequencePreset { id: 'C', name: "Hijack", kind: SequenceType::CG, width: 4096, height: 2048, views: 9 },
    SequencePreset { id: 'D', name: "Painter", kind: SequenceType::NC, width: 2048, height: 1088, views: 16 },
    SequencePreset { id: 'E', name: "Frog", kind: SequenceType::NC, width: 1920, height: 1080, views: 13 },
    SequencePreset { id: 'J', name: "Kitchen", kind: SequenceType::CG, width: 1920, height: 1080, views: 24 },
    SequencePreset { id: 'L', name: "Fencing", kind: SequenceType::NC, width: 1920, height: 1080, views: 9 },
];

impl SequencePreset {
    pub fn by_id(id: &str) -> Option<&'static SequencePreset> {
        let mut chars = id.chars();
        let c = chars.next()?.to_ascii_uppercase();
        if chars.next().is_some() {
            return SEQUENCE_PRESETS.iter().find(|p| p.name.eq_ignore_ascii_case(id));
        }
        SEQUENCE_PRESETS.iter().find(|p| p.id == c)
    }
}
