//! Closed label sets shared by the classifier, the agreement statistics and
//! the annotation service.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Returned when a string is not a member of a closed label set.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("'{value}' is not one of: {allowed}")]
pub struct UnknownLabel {
    pub value: String,
    pub allowed: String,
}

/// Lenient comparison key: case-folded, inner whitespace collapsed, trailing
/// punctuation dropped. Never maps two members of the same set together.
fn label_key(s: &str) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.trim_end_matches(['.', ',', ';', ':']).to_lowercase()
}

macro_rules! closed_set {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = UnknownLabel;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let key = label_key(s);
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| label_key(v.as_str()) == key)
                    .ok_or_else(|| UnknownLabel {
                        value: s.to_string(),
                        allowed: Self::ALL
                            .iter()
                            .map(|v| v.as_str())
                            .collect::<Vec<_>>()
                            .join(", "),
                    })
            }
        }
    };
}

closed_set!(
    /// Step 2a outcome.
    PrescreenLabel {
        PotentiallyRelated => "Potentially Related to CLD/PTLDS",
        DefinitelyUnrelated => "Definitely Unrelated",
        AnimalStudy => "Animal Study",
    }
);

closed_set!(
    /// Step 2b/2c stance-framing outcome.
    StanceLabel {
        SupportsPtlds => "Supports PTLDS",
        SupportsCld => "Supports CLD",
        Neutral => "Neutral",
        Unrelated => "Unrelated",
        AnimalStudy => "Animal Study",
    }
);

closed_set!(
    Confidence {
        High => "High",
        Medium => "Medium",
        Low => "Low",
    }
);

impl StanceLabel {
    /// The three stances the analytics report on.
    pub const TARGETS: [StanceLabel; 3] = [
        StanceLabel::Neutral,
        StanceLabel::SupportsPtlds,
        StanceLabel::SupportsCld,
    ];

    pub fn is_target(self) -> bool {
        Self::TARGETS.contains(&self)
    }
}
