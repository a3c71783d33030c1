use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network widths. Every channel count is the canonical width times
/// `width_scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetProfile {
    pub width_scale: f64,
    /// Channels of the content feature map `F_c`.
    pub content_channels: usize,
    /// Length of the distortion vector `f_d` (four equal tap codes).
    pub fd_dim: usize,
    /// Length of the pooled content vector `f_c`.
    pub fc_dim: usize,
    /// Length of the modulation signal `s` (four slices of
    /// `content_channels`).
    pub s_dim: usize,
}

impl NetProfile {
    pub const CANONICAL_SCALE: f64 = 1.0;
    pub const TINY_SCALE: f64 = 0.25;

    pub fn canonical() -> Self {
        Self::from_scale(Self::CANONICAL_SCALE).expect("canonical profile is valid")
    }

    pub fn tiny() -> Self {
        Self::from_scale(Self::TINY_SCALE).expect("tiny profile is valid")
    }

    pub fn from_scale(width_scale: f64) -> Result<Self> {
        let p = Self {
            width_scale,
            content_channels: scaled(256, width_scale),
            fd_dim: scaled(256, width_scale),
            fc_dim: scaled(16, width_scale),
            s_dim: scaled(1024, width_scale),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.content_channels, self.fd_dim, self.fc_dim, self.s_dim];
        if dims.contains(&0) || !(self.width_scale > 0.0) {
            return Err(Error::arg(format!("profile has a zero dimension: {self:?}")));
        }
        if self.fd_dim % 4 != 0 {
            return Err(Error::arg(format!("fd_dim {} not divisible by 4", self.fd_dim)));
        }
        if self.s_dim != 4 * self.content_channels {
            return Err(Error::arg("s_dim must be 4 × content_channels"));
        }
        let expected = Self {
            width_scale: self.width_scale,
            content_channels: scaled(256, self.width_scale),
            fd_dim: scaled(256, self.width_scale),
            fc_dim: scaled(16, self.width_scale),
            s_dim: scaled(1024, self.width_scale),
        };
        if *self != expected {
            return Err(Error::arg(format!("profile dimensions inconsistent with scale: {self:?}")));
        }
        Ok(())
    }

    /// First content-encoder width (64 canonical).
    pub fn stem_channels(&self) -> usize {
        scaled(64, self.width_scale)
    }

    /// Second content-encoder width (128 canonical).
    pub fn mid_channels(&self) -> usize {
        scaled(128, self.width_scale)
    }

    /// Channels after each tap's 1×1 projection (32 canonical).
    pub fn spp_channels(&self) -> usize {
        scaled(32, self.width_scale)
    }

    /// Length of one tap code `f_d^j`.
    pub fn tap_dim(&self) -> usize {
        self.fd_dim / 4
    }

    pub fn name(&self) -> String {
        if self.width_scale == Self::CANONICAL_SCALE {
            "canonical".into()
        } else if self.width_scale == Self::TINY_SCALE {
            "tiny".into()
        } else {
            format!("scale-{}", self.width_scale)
        }
    }
}

fn scaled(base: usize, scale: f64) -> usize {
    (base as f64 * scale).round() as usize
}

impl fmt::Display for NetProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for NetProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(Self::canonical()),
            "tiny" => Ok(Self::tiny()),
            other if other.starts_with("scale-") => other["scale-".len()..]
                .parse::<f64>()
                .map_err(|_| Error::arg(format!("bad profile scale in `{other}`")))
                .and_then(Self::from_scale),
            other => Err(Error::arg(format!("unknown profile `{other}` (canonical, tiny)"))),
        }
    }
}

/// Serde adapter storing a profile as its name.
pub mod by_name {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::NetProfile;

    pub fn serialize<S: Serializer>(p: &NetProfile, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&p.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NetProfile, D::Error> {
        let name = String::deserialize(d)?;
        name.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_dims() {
        let p = NetProfile::canonical();
        assert_eq!((p.content_channels, p.fd_dim, p.fc_dim, p.s_dim), (256, 256, 16, 1024));
        assert_eq!(p.fc_dim + p.fd_dim, 272);
        assert_eq!(p.tap_dim(), 64);
        assert_eq!(p.spp_channels() * 21, 672);
    }

    #[test]
    fn tiny_dims() {
        let p = NetProfile::tiny();
        assert_eq!((p.content_channels, p.fd_dim, p.fc_dim, p.s_dim), (64, 64, 4, 256));
        assert_eq!(p.stem_channels(), 16);
    }

    #[test]
    fn invalid_profiles() {
        assert!(NetProfile::from_scale(0.0).is_err());
        let mut p = NetProfile::tiny();
        p.s_dim = 100;
        assert!(p.validate().is_err());
        assert!("huge".parse::<NetProfile>().is_err());
    }

    #[test]
    fn names_round_trip() {
        for p in [NetProfile::canonical(), NetProfile::tiny(), NetProfile::from_scale(0.5).unwrap()] {
            assert_eq!(p.name().parse::<NetProfile>().unwrap(), p);
        }
        assert!("huge".parse::<NetProfile>().is_err());
        assert!("scale-x".parse::<NetProfile>().is_err());
    }
}
