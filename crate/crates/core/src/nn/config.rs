use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::GPS_LEN;

/// The four architectures spanned by the GPS-input and copy-crop flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "uav-adnet")]
    UavAdNet,
    #[serde(rename = "uav-adnet-wo-gps")]
    UavAdNetWoGps,
    #[serde(rename = "cvae")]
    Cvae,
    #[serde(rename = "vae")]
    Vae,
}

impl Variant {
    /// Report order.
    pub const ALL: [Variant; 4] = [Variant::UavAdNet, Variant::UavAdNetWoGps, Variant::Cvae, Variant::Vae];

    pub fn from_flags(use_gps: bool, use_copy_crop: bool) -> Self {
        match (use_gps, use_copy_crop) {
            (true, true) => Variant::UavAdNet,
            (false, true) => Variant::UavAdNetWoGps,
            (true, false) => Variant::Cvae,
            (false, false) => Variant::Vae,
        }
    }

    pub fn use_gps(self) -> bool {
        matches!(self, Variant::UavAdNet | Variant::Cvae)
    }

    pub fn use_copy_crop(self) -> bool {
        matches!(self, Variant::UavAdNet | Variant::UavAdNetWoGps)
    }

    /// CLI / file-name spelling.
    pub fn slug(self) -> &'static str {
        match self {
            Variant::UavAdNet => "uav-adnet",
            Variant::UavAdNetWoGps => "uav-adnet-wo-gps",
            Variant::Cvae => "cvae",
            Variant::Vae => "vae",
        }
    }

    /// Table spelling.
    pub fn display_name(self) -> &'static str {
        match self {
            Variant::UavAdNet => "UAV-AdNet",
            Variant::UavAdNetWoGps => "UAV-AdNet-wo-gps",
            Variant::Cvae => "CVAE",
            Variant::Vae => "VAE",
        }
    }

    pub fn from_display_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.display_name() == name)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|v| v.slug() == s).ok_or_else(|| {
            Error::Argument(format!(
                "unknown model `{s}` (expected uav-adnet, uav-adnet-wo-gps, cvae or vae)"
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub grid_len: usize,
    /// Length of the GPS feature; ignored unless `use_gps`.
    pub gps_len: usize,
    pub use_gps: bool,
    pub use_copy_crop: bool,
    pub hidden_sizes: Vec<usize>,
    pub latent_dim: usize,
    /// Weight of the KL term in the training objective.
    pub kl_weight: f64,
}

impl ModelConfig {
    pub const DEFAULT_HIDDEN: [usize; 2] = [256, 128];
    pub const DEFAULT_LATENT: usize = 32;
    pub const DEFAULT_KL_WEIGHT: f64 = 1e-3;

    pub fn for_variant(variant: Variant, grid_len: usize) -> Self {
        ModelConfig {
            grid_len,
            gps_len: GPS_LEN,
            use_gps: variant.use_gps(),
            use_copy_crop: variant.use_copy_crop(),
            hidden_sizes: Self::DEFAULT_HIDDEN.to_vec(),
            latent_dim: Self::DEFAULT_LATENT,
            kl_weight: Self::DEFAULT_KL_WEIGHT,
        }
    }

    pub fn variant(&self) -> Variant {
        Variant::from_flags(self.use_gps, self.use_copy_crop)
    }

    /// GPS width actually wired into the network.
    pub fn effective_gps_len(&self) -> usize {
        if self.use_gps {
            self.gps_len
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_len == 0 || self.latent_dim == 0 {
            return Err(Error::config("grid_len and latent_dim must be positive"));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::config("hidden layer sizes must be positive"));
        }
        if self.use_gps && self.gps_len != GPS_LEN {
            return Err(Error::config(format!(
                "GPS-conditioned models take a {GPS_LEN}-value GPS feature, got gps_len {}",
                self.gps_len
            )));
        }
        if !(self.kl_weight.is_finite() && self.kl_weight >= 0.0) {
            return Err(Error::config(format!("kl_weight must be >= 0, got {}", self.kl_weight)));
        }
        Ok(())
    }
}
