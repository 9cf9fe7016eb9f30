use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("stage '{stage}': excluded {excluded} exceeds entering {entering}")]
    Overdrawn {
        stage: String,
        entering: usize,
        excluded: usize,
    },
    #[error("stage '{stage}': entering {entering} does not match previous exiting {expected}")]
    Discontinuous {
        stage: String,
        entering: usize,
        expected: usize,
    },
    #[error("stage '{stage}': entering - excluded != exiting or reasons do not sum to excluded")]
    Unbalanced { stage: String },
}

/// One PRISMA box: how many records came in, left, and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrismaStage {
    pub stage: String,
    pub entering: usize,
    pub excluded: usize,
    pub exclusion_reasons: BTreeMap<String, usize>,
    pub exiting: usize,
}

impl PrismaStage {
    /// Builds a stage from per-reason exclusion counts.
    pub fn from_reasons(
        stage: impl Into<String>,
        entering: usize,
        reasons: BTreeMap<String, usize>,
    ) -> Result<Self, LedgerError> {
        let stage = stage.into();
        let excluded: usize = reasons.values().sum();
        if excluded > entering {
            return Err(LedgerError::Overdrawn {
                stage,
                entering,
                excluded,
            });
        }
        Ok(PrismaStage {
            stage,
            entering,
            excluded,
            exclusion_reasons: reasons,
            exiting: entering - excluded,
        })
    }

    pub fn is_balanced(&self) -> bool {
        self.entering.checked_sub(self.excluded) == Some(self.exiting)
            && self.exclusion_reasons.values().sum::<usize>() == self.excluded
    }
}

/// Ordered stage-by-stage accounting, opened with the ingested row count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct PrismaLedger {
    pub initial: usize,
    pub stages: Vec<PrismaStage>,
}

impl PrismaLedger {
    pub fn open(initial: usize) -> Self {
        PrismaLedger {
            initial,
            stages: Vec::new(),
        }
    }

    /// Records still in play after the last stage.
    pub fn exiting(&self) -> usize {
        self.stages.last().map_or(self.initial, |s| s.exiting)
    }

    pub fn total_excluded(&self) -> usize {
        self.stages.iter().map(|s| s.excluded).sum()
    }

    pub fn push(&mut self, stage: PrismaStage) -> Result<(), LedgerError> {
        if stage.entering != self.exiting() {
            return Err(LedgerError::Discontinuous {
                entering: stage.entering,
                expected: self.exiting(),
                stage: stage.stage,
            });
        }
        if !stage.is_balanced() {
            return Err(LedgerError::Unbalanced { stage: stage.stage });
        }
        self.stages.push(stage);
        Ok(())
    }

    /// Checks every conservation law the ledger promises.
    pub fn verify(&self) -> Result<(), LedgerError> {
        let mut expected = self.initial;
        for s in &self.stages {
            if s.entering != expected {
                return Err(LedgerError::Discontinuous {
                    stage: s.stage.clone(),
                    entering: s.entering,
                    expected,
                });
            }
            if !s.is_balanced() {
                return Err(LedgerError::Unbalanced { stage: s.stage.clone() });
            }
            expected = s.exiting;
        }
        debug_assert_eq!(self.total_excluded() + self.exiting(), self.initial);
        Ok(())
    }

    /// CSV export: one summary row per stage (`reason` = `*`) followed by one
    /// row per exclusion reason.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,entering,excluded,reason,exiting\n");
        for s in &self.stages {
            let _ = writeln!(out, "{},{},{},*,{}", s.stage, s.entering, s.excluded, s.exiting);
            for (reason, n) in &s.exclusion_reasons {
                let _ = writeln!(out, "{},{},{},{},{}", s.stage, s.entering, n, reason, s.exiting);
            }
        }
        out
    }
}
