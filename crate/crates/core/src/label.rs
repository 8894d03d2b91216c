use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Five-way relation class. `NoRel` is the only negative class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "NO_REL")]
    NoRel,
    #[serde(rename = "LOF")]
    Lof,
    #[serde(rename = "GOF")]
    Gof,
    #[serde(rename = "REG")]
    Reg,
    #[serde(rename = "COM")]
    Com,
}

pub const NUM_CLASSES: usize = 5;

impl Label {
    /// All labels in canonical code order.
    pub const ALL: [Label; NUM_CLASSES] = [Label::NoRel, Label::Lof, Label::Gof, Label::Reg, Label::Com];

    pub const POSITIVE: [Label; 4] = [Label::Lof, Label::Gof, Label::Reg, Label::Com];

    /// Row order used by the evaluation tables.
    pub const TABLE_ORDER: [Label; NUM_CLASSES] =
        [Label::NoRel, Label::Reg, Label::Com, Label::Lof, Label::Gof];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn is_positive(self) -> bool {
        self != Label::NoRel
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::NoRel => "NO_REL",
            Label::Lof => "LOF",
            Label::Gof => "GOF",
            Label::Reg => "REG",
            Label::Com => "COM",
        }
    }

    /// Name used in report tables.
    pub fn table_name(self) -> &'static str {
        match self {
            Label::NoRel => "No rel",
            other => other.as_str(),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "NO_REL" => Ok(Label::NoRel),
            "LOF" => Ok(Label::Lof),
            "GOF" => Ok(Label::Gof),
            "REG" => Ok(Label::Reg),
            "COM" => Ok(Label::Com),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_follow_canonical_order() {
        for (i, l) in Label::ALL.iter().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(Label::from_index(i), Some(*l));
        }
        assert_eq!(Label::from_index(5), None);
    }

    #[test]
    fn only_no_rel_is_negative() {
        assert_eq!(Label::ALL.iter().filter(|l| !l.is_positive()).count(), 1);
        assert!(Label::POSITIVE.iter().all(|l| l.is_positive()));
    }

    #[test]
    fn string_round_trip() {
        for l in Label::ALL {
            assert_eq!(l.as_str().parse::<Label>().unwrap(), l);
            let json = serde_json::to_string(&l).unwrap();
            assert_eq!(json, format!("\"{}\"", l.as_str()));
        }
        assert!("gof".parse::<Label>().is_err());
    }
}
