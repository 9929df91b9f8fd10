//! Multi-level mask generation and the acquisition power algebra.
//!
//! A mask plan drops whole epochs at ratio `r_e`, then drops patches inside
//! each retained epoch at ratio `r_a`. The fraction of raw signal actually
//! acquired is `(1 - r_a) * (1 - r_e)`; an amplifier that switches to
//! standby during masked segments draws the duty-cycled power computed by
//! [`power_estimate`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{MassError, Result};
use crate::rng::SplitMix64;

/// Patches per 30-second epoch (1-second windows).
pub const PATCHES_PER_EPOCH: usize = 30;

/// Substream tags for the two masking levels.
const EPOCH_STREAM: u64 = 0x45;
const PATCH_STREAM: u64 = 0x50;

/// Per-sequence visibility plan.
///
/// `visible_patches` has an entry for every visible epoch and none for
/// masked epochs. Index lists are sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub e: usize,
    pub r_a: f64,
    pub r_e: f64,
    pub seed: u64,
    pub visible_epochs: Vec<usize>,
    pub visible_patches: BTreeMap<usize, Vec<usize>>,
}

impl MaskPlan {
    pub fn is_epoch_visible(&self, epoch: usize) -> bool {
        self.visible_patches.contains_key(&epoch)
    }

    /// Total number of visible patches across the sequence.
    pub fn n_vis(&self) -> usize {
        self.visible_patches.values().map(|p| p.len()).sum()
    }

    /// Patches visible within each visible epoch.
    pub fn patches_per_visible_epoch(&self) -> usize {
        self.visible_patches.values().next().map_or(0, |p| p.len())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mask plan serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s)
            .map_err(|e| MassError::DegenerateMask(format!("bad mask plan json: {e}")))
    }
}

/// Number of items kept when masking `total` items at `ratio`.
///
/// floor(total * (1 - ratio)), evaluated with a small nudge so decimal
/// ratios like 0.8 land on the intended integer (30 * 0.2 must give 6,
/// not floor(5.999...)).
pub fn visible_count(total: usize, ratio: f64) -> usize {
    ((total as f64) * (1.0 - ratio) + 1e-9).floor() as usize
}

fn check_ratio(name: &str, r: f64) -> Result<()> {
    if !(0.0..1.0).contains(&r) {
        return Err(MassError::DegenerateMask(format!("{name}={r} outside [0,1)")));
    }
    Ok(())
}

/// Sample a multi-level mask plan.
///
/// Epoch indices are drawn uniformly without replacement from an
/// epoch-level substream of `seed`; patch indices are drawn per epoch from
/// a patch-level substream keyed by the epoch index, so the patch draw for
/// epoch `i` does not depend on which other epochs are visible.
pub fn gen_mask(e: usize, r_a: f64, r_e: f64, seed: u64) -> Result<MaskPlan> {
    gen_mask_impl(e, r_a, r_e, seed, false)
}

/// Variant that masks one contiguous run of epochs instead of an arbitrary
/// subset. Patch-level sampling is unchanged.
pub fn gen_mask_contiguous(e: usize, r_a: f64, r_e: f64, seed: u64) -> Result<MaskPlan> {
    gen_mask_impl(e, r_a, r_e, seed, true)
}

fn gen_mask_impl(e: usize, r_a: f64, r_e: f64, seed: u64, contiguous: bool) -> Result<MaskPlan> {
    if e == 0 {
        return Err(MassError::DegenerateMask("e must be >= 1".into()));
    }
    check_ratio("r_a", r_a)?;
    check_ratio("r_e", r_e)?;
    let n_epochs = visible_count(e, r_e);
    if n_epochs == 0 {
        return Err(MassError::DegenerateMask(format!(
            "floor({e}*(1-{r_e})) leaves no visible epoch"
        )));
    }
    let n_patches = visible_count(PATCHES_PER_EPOCH, r_a);
    if n_patches == 0 {
        return Err(MassError::DegenerateMask(format!(
            "floor({PATCHES_PER_EPOCH}*(1-{r_a})) leaves no visible patch"
        )));
    }

    let mut epoch_rng = SplitMix64::substream(seed, EPOCH_STREAM);
    let visible_epochs = if contiguous {
        let start = epoch_rng.next_below((e - n_epochs + 1) as u64) as usize;
        (start..start + n_epochs).collect()
    } else {
        epoch_rng.sample_indices(e, n_epochs)
    };

    let mut visible_patches = BTreeMap::new();
    for &epoch in &visible_epochs {
        let mut patch_rng = SplitMix64::substream(seed ^ PATCH_STREAM, epoch as u64);
        visible_patches.insert(epoch, patch_rng.sample_indices(PATCHES_PER_EPOCH, n_patches));
    }

    Ok(MaskPlan { e, r_a, r_e, seed, visible_epochs, visible_patches })
}

/// Fraction of raw signal acquired under ratios (r_a, r_e).
pub fn signal_integrity(r_a: f64, r_e: f64) -> f64 {
    (1.0 - r_a) * (1.0 - r_e)
}

/// An acquisition amplifier with a normal and a standby power draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplifierSpec {
    pub name: String,
    pub p_normal_mw: f64,
    pub p_standby_mw: f64,
}

impl AmplifierSpec {
    pub fn new(name: &str, p_normal_mw: f64, p_standby_mw: f64) -> Self {
        assert!(
            p_normal_mw > p_standby_mw && p_standby_mw > 0.0,
            "amplifier power must satisfy normal > standby > 0"
        );
        Self { name: name.to_string(), p_normal_mw, p_standby_mw }
    }

    /// The three reference amplifiers with datasheet typical power draws.
    pub fn reference_set() -> Vec<AmplifierSpec> {
        vec![
            AmplifierSpec::new("ADS1299-4", 22.0, 5.1),
            AmplifierSpec::new("ADS131A04", 15.8, 2.6),
            AmplifierSpec::new("ADS1294", 10.1, 4.0),
        ]
    }

    /// Case-insensitive lookup in the reference set.
    pub fn by_name(name: &str) -> Option<AmplifierSpec> {
        let lower = name.to_ascii_lowercase();
        Self::reference_set().into_iter().find(|a| a.name.to_ascii_lowercase() == lower)
    }
}

/// Mean power draw (mW) when the amplifier runs in normal mode for
/// `integrity` of the time and standby for the rest.
pub fn power_estimate(spec: &AmplifierSpec, integrity: f64) -> f64 {
    assert!((0.0..=1.0).contains(&integrity), "integrity outside [0,1]");
    integrity * spec.p_normal_mw + (1.0 - integrity) * spec.p_standby_mw
}
