use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{blob, SplitAssignment};
use crate::error::Result;

pub const CAMPAIGN_FILE: &str = "campaign.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignEntry {
    /// Case directory relative to the campaign directory.
    pub dir: String,
    /// Load-block offsets from their baseline positions, mm.
    pub offsets: [f64; 2],
    pub load_positions: [f64; 2],
}

/// `campaign.json`: the case list plus an optional split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignIndex {
    pub schema_version: u32,
    pub mesh_scale: String,
    pub n_frames: usize,
    pub seed: u64,
    pub cases: Vec<CampaignEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitAssignment>,
}

impl CampaignIndex {
    pub fn load(dir: &Path) -> Result<Self> {
        blob::read_json(&dir.join(CAMPAIGN_FILE))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        blob::write_json(&dir.join(CAMPAIGN_FILE), self)
    }

    pub fn case_dir(&self, root: &Path, i: usize) -> PathBuf {
        root.join(&self.cases[i].dir)
    }
}
