//! Run configuration shared by every CLI command.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beam::MAX_ORDER;
use crate::cone::{ComptonParams, CrtParams, GeometryTag};
use crate::corruption::Corruption;
use crate::error::{invalid, Error, Result};
use crate::geometry::ConvexVertexSet;
use crate::phantom::{make_bump, make_sum, ScalarField};
use crate::planar::PlanarGrids;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub center: Vec<f64>,
    pub radius: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

/// Convex vertex set `{Σ ((x_i - c_i)/r_i)^2 < 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetSpec {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
}

/// Planar-geometry products beyond the projective data `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanarRun {
    /// Also produce and check Compton cone data on the `ā` grid.
    pub cone_data: bool,
    /// Build `H` and `h` from the beam evaluator.
    pub build_h: bool,
    /// Grid for `H` and `h`; defaults to the `w` grid.
    pub h_grids: Option<PlanarGrids>,
    /// Reconstruction grid nodes per axis over the phantom's bounding box.
    pub recon_points: usize,
}

impl Default for PlanarRun {
    fn default() -> Self {
        Self {
            cone_data: false,
            build_h: true,
            h_grids: None,
            recon_points: 41,
        }
    }
}

/// Everything a run depends on. Defaults are those of the library types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryTag,
    pub n: usize,
    pub k: usize,
    pub phantom: Vec<BumpSpec>,
    /// Convex geometry only; the unit ball when absent.
    #[serde(default)]
    pub vertex_set: Option<SetSpec>,
    /// Sphere grid resolution `L` for cone data.
    #[serde(default = "default_resolution")]
    pub sphere_resolution: usize,
    #[serde(default)]
    pub crt: CrtParams,
    /// Cone-data settings for planar geometry; `compton.planar` also sets
    /// the `w` grid and the planar thresholds.
    #[serde(default)]
    pub compton: ComptonParams,
    #[serde(default)]
    pub planar: PlanarRun,
    #[serde(default)]
    pub corruption: Option<Corruption>,
    #[serde(default = "default_out")]
    pub out: String,
    /// Seeds the additive-noise corruption; every sampling set in the checks
    /// is a fixed low-discrepancy set.
    #[serde(default)]
    pub seed: u64,
}

fn default_resolution() -> usize {
    16
}

fn default_out() -> String {
    "out".into()
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.n) {
            return Err(Error::UnsupportedDimension(self.n));
        }
        if self.k > MAX_ORDER {
            return Err(invalid("k", format!("order {} exceeds {MAX_ORDER}", self.k)));
        }
        if self.phantom.is_empty() {
            return Err(invalid("phantom", "at least one term (use amplitude 0 for zero data)"));
        }
        self.field()?;
        if self.sphere_resolution < 4 {
            return Err(invalid("sphere_resolution", "must be at least 4"));
        }
        match self.geometry {
            GeometryTag::Convex => {
                self.vertex_set()?;
            }
            GeometryTag::Planar => {
                self.w_grids().validate()?;
                self.h_grids().validate()?;
            }
        }
        if let Some(c) = &self.corruption {
            if !c.amplitude.is_finite() {
                return Err(invalid("corruption", "amplitude must be finite"));
            }
        }
        Ok(())
    }

    pub fn field(&self) -> Result<ScalarField> {
        let terms = self
            .phantom
            .iter()
            .map(|b| make_bump(&b.center, b.radius, b.amplitude, self.n))
            .collect::<Result<Vec<_>>>()?;
        make_sum(&terms)
    }

    pub fn vertex_set(&self) -> Result<ConvexVertexSet> {
        match &self.vertex_set {
            None => Ok(ConvexVertexSet::unit_ball(self.n)),
            Some(s) => {
                if s.center.len() != self.n || s.radii.len() != self.n {
                    return Err(invalid("vertex_set", "center and radii need n entries"));
                }
                ConvexVertexSet::ellipsoid(&s.center, &s.radii)
            }
        }
    }

    pub fn w_grids(&self) -> PlanarGrids {
        self.compton.planar.grids_for(self.n)
    }

    pub fn h_grids(&self) -> PlanarGrids {
        self.planar.h_grids.unwrap_or_else(|| self.w_grids())
    }

    /// Corruption with the config seed applied, or `None` for clean data.
    pub fn active_corruption(&self) -> Option<Corruption> {
        self.corruption
            .filter(|c| !c.is_identity())
            .map(|c| Corruption { seed: self.seed, ..c })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"geometry":"planar","n":2,"k":0,"phantom":[{"center":[0,1.5],"radius":0.5}]}"#;

    #[test]
    fn json_round_trip_is_identity() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.phantom[0].amplitude, 1.0);
        assert_eq!(c.out, "out");
    }

    #[test]
    fn errors_name_the_field() {
        let bad = MINIMAL.replace("\"k\":0", "\"k\":5");
        let e = RunConfig::from_json(&bad).unwrap_err().to_string();
        assert!(e.contains("`k`"), "{e}");
        let unknown = MINIMAL.replace("\"n\":2", "\"n\":2,\"bogus\":1");
        assert!(RunConfig::from_json(&unknown).unwrap_err().to_string().contains("bogus"));
        let dims = MINIMAL.replace("[0,1.5]", "[0,1.5,2]");
        assert!(RunConfig::from_json(&dims).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::from_json(MINIMAL).unwrap();
        let mut b = a.clone();
        b.seed = 9;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
