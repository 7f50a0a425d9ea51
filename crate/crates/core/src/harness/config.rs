use super::HarnessError;
use crate::estimator::{MutationConfig, NoiseConfig};
use crate::flowfields::{load_fgm, rasterize, DomainPolicy, FlowMap, GridGeometry, MeanderJetParams};
use crate::turbulence::KsParams;
use crate::vehicle_sim::{AdcpParams, ImuParams, LawnmowerSpec};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

/// Where a flow field comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowSpec {
    DoubleGyre(crate::flowfields::DoubleGyreParams),
    MeanderJet(MeanderJetParams),
    /// An FGM file; relative paths resolve against the config file.
    Fgm { path: PathBuf },
    /// Another spec sampled onto a grid.
    Rasterized { source: Box<FlowSpec>, geometry: GridGeometry },
}

impl FlowSpec {
    pub fn build(&self, base: &Path) -> Result<FlowMap, HarnessError> {
        Ok(match self {
            FlowSpec::DoubleGyre(p) => {
                p.validate()?;
                FlowMap::DoubleGyre(p.clone())
            }
            FlowSpec::MeanderJet(p) => {
                p.validate()?;
                FlowMap::MeanderJet(p.clone())
            }
            FlowSpec::Fgm { path } => {
                let full = base.join(path);
                if !full.exists() {
                    return Err(HarnessError::Config(format!("flow map {} does not exist", full.display())));
                }
                FlowMap::Grid(load_fgm(full)?)
            }
            FlowSpec::Rasterized { source, geometry } => FlowMap::Grid(rasterize(&source.build(base)?, geometry)?),
        })
    }

    fn check_files(&self, base: &Path) -> Result<(), HarnessError> {
        match self {
            FlowSpec::Fgm { path } if !base.join(path).exists() => {
                Err(HarnessError::Config(format!("flow map {} does not exist", base.join(path).display())))
            }
            FlowSpec::Rasterized { source, .. } => source.check_files(base),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointEstimate {
    /// Weighted swarm average.
    #[default]
    Mean,
    /// Highest-weight particle.
    Map,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub n_particles: usize,
    #[serde(default = "default_resample_fraction")]
    pub resample_fraction: f64,
    #[serde(default)]
    pub mutation: Option<MutationConfig>,
    #[serde(default = "default_true")]
    pub sample_positions: bool,
    #[serde(rename = "position_jitter_sd_m", default = "default_jitter")]
    pub position_jitter_sd: f64,
    /// Direct heading measurements at every ADCP tick with this SD.
    #[serde(rename = "heading_aiding_sd_rad", default)]
    pub heading_sd: Option<f64>,
    #[serde(default)]
    pub point_estimate: PointEstimate,
    /// Replaces the ADCP white-noise variance in the filter.
    #[serde(rename = "adcp_r_var_m2ps2", default)]
    pub r_var: Option<f64>,
    /// Replaces the turbulence driving intensity of the filter.
    #[serde(rename = "turbulence_q_m2ps4", default)]
    pub turbulence_q: Option<f64>,
    /// Replaces the decorrelation length of the filter's turbulence state.
    #[serde(rename = "turbulence_length_m", default)]
    pub turbulence_length: Option<f64>,
}

fn default_resample_fraction() -> f64 {
    0.5
}

fn default_true() -> bool {
    true
}

fn default_jitter() -> f64 {
    0.1
}

/// Initial uncertainty of the filters around the true start state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    #[serde(rename = "position_var_m2")]
    pub position_var: f64,
    #[serde(rename = "velocity_var_m2ps2")]
    pub velocity_var: f64,
    #[serde(rename = "heading_var_rad2")]
    pub heading_var: f64,
    /// Defaults to the squared bias-instability SD of each sensor.
    #[serde(rename = "accel_bias_var_m2ps4", default)]
    pub accel_bias_var: Option<f64>,
    #[serde(rename = "gyro_bias_var_rad2ps2", default)]
    pub gyro_bias_var: Option<f64>,
    #[serde(rename = "adcp_bias_var_m2ps2", default)]
    pub adcp_bias_var: Option<f64>,
    /// Defaults to the per-component turbulence variance.
    #[serde(rename = "turbulence_var_m2ps2", default)]
    pub turbulence_var: Option<f64>,
    /// Start the turbulence estimate at the true local value.
    #[serde(default)]
    pub turbulence_from_truth: bool,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            position_var: 1e6,
            velocity_var: 1e-6,
            heading_var: 1e-8,
            accel_bias_var: None,
            gyro_bias_var: None,
            adcp_bias_var: None,
            turbulence_var: None,
            turbulence_from_truth: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CrlbSpec {
    /// Observation variance of the bound. Defaults to ADCP white noise plus
    /// ADCP bias plus per-component turbulence variance.
    #[serde(rename = "r_var_m2ps2", default)]
    pub r_var: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    /// Flow the vehicle actually experiences.
    pub truth_flow: FlowSpec,
    /// Reference the filters navigate on; defaults to the truth flow.
    #[serde(default)]
    pub nav_map: Option<FlowSpec>,
    pub turbulence: KsParams,
    pub trajectory: LawnmowerSpec,
    pub imu: ImuParams,
    pub adcp: AdcpParams,
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub crlb: CrlbSpec,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub domain_policy: DomainPolicy,
    /// Directory relative file references resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_runs() -> usize {
    20
}

impl ScenarioConfig {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, HarnessError> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        self.imu.validate()?;
        self.adcp.validate()?;
        self.trajectory.validate()?;
        self.turbulence.validate()?;
        self.truth_flow.check_files(&self.base_dir)?;
        if let Some(nav) = &self.nav_map {
            nav.check_files(&self.base_dir)?;
        }
        let dt_imu = 1.0 / self.imu.rate_hz;
        if ((self.trajectory.dt - dt_imu) / dt_imu).abs() > 1e-9 {
            return bad(format!("trajectory dt {} s does not match the IMU rate {} Hz", self.trajectory.dt, self.imu.rate_hz));
        }
        let ratio = self.imu.rate_hz / self.adcp.rate_hz;
        if ratio < 1.0 || (ratio - ratio.round()).abs() > 1e-9 {
            return bad("the ADCP period must be a whole number of IMU periods".into());
        }
        let est = &self.estimator;
        if est.n_particles == 0 {
            return bad("n_particles must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&est.resample_fraction) {
            return bad("resample_fraction must lie in [0, 1]".into());
        }
        if est.position_jitter_sd < 0.0 || est.heading_sd.is_some_and(|s| !(s > 0.0)) {
            return bad("jitter and heading SDs must be non-negative / positive".into());
        }
        if !(self.noise().r[(0, 0)] > 0.0) {
            return bad("filter ADCP variance must be positive; set adcp_r_var_m2ps2 for noiseless sensors".into());
        }
        if !(self.crlb_r_var() > 0.0) {
            return bad("bound observation variance must be positive; set crlb.r_var_m2ps2 for noiseless sensors".into());
        }
        let init = &self.init;
        if [init.position_var, init.velocity_var, init.heading_var].iter().any(|v| !(*v >= 0.0)) {
            return bad("initial variances must be non-negative".into());
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        Ok(())
    }

    /// Number of IMU samples per ADCP sample.
    pub fn adcp_stride(&self) -> usize {
        (self.imu.rate_hz / self.adcp.rate_hz).round() as usize
    }

    /// Turbulence SD handed to the filter noise model.
    pub fn turbulence_sd(&self) -> f64 {
        self.turbulence.large_scale_variance.sqrt()
    }

    /// Filter noise model derived from the sensor and turbulence settings.
    pub fn noise(&self) -> NoiseConfig {
        let ks = &self.turbulence;
        let mut n = NoiseConfig::from_sensors(&self.imu, &self.adcp, ks.correlation_length, ks.k_c(), self.turbulence_sd());
        if let Some(r) = self.estimator.r_var {
            n.r = nalgebra::Matrix2::identity() * r;
        }
        if let Some(q) = self.estimator.turbulence_q {
            n.q_diag[8] = q;
            n.q_diag[9] = q;
        }
        if let Some(l) = self.estimator.turbulence_length {
            n.l_c = l;
        }
        n
    }

    pub fn crlb_r_var(&self) -> f64 {
        self.crlb
            .r_var
            .unwrap_or(self.adcp.white_sd.powi(2) + self.adcp.bias_sd.powi(2) + self.turbulence.large_scale_variance / 2.0)
    }

    /// Six-hour double-gyre mission with a 100-particle filter.
    pub fn double_gyre() -> Self {
        Self {
            name: "double_gyre".into(),
            truth_flow: FlowSpec::DoubleGyre(Default::default()),
            nav_map: None,
            turbulence: KsParams::default(),
            trajectory: LawnmowerSpec::default(),
            imu: ImuParams::vn100(),
            adcp: AdcpParams::rdi1200(),
            estimator: EstimatorSpec {
                n_particles: 100,
                resample_fraction: 0.5,
                mutation: None,
                sample_positions: true,
                position_jitter_sd: 1.0,
                heading_sd: None,
                point_estimate: PointEstimate::Mean,
                r_var: Some(0.2),
                turbulence_q: Some(0.0),
                turbulence_length: None,
            },
            init: InitSpec { turbulence_var: Some(0.0), ..InitSpec::default() },
            crlb: CrlbSpec::default(),
            master_seed: 1,
            runs: 20,
            output_dir: None,
            domain_policy: DomainPolicy::Clamp,
            base_dir: PathBuf::new(),
        }
    }

    /// Meandering jet with north-south legs crossing the jet axis.
    pub fn meander_jet() -> Self {
        Self {
            name: "meander_jet".into(),
            truth_flow: FlowSpec::MeanderJet(Default::default()),
            trajectory: LawnmowerSpec {
                origin: [0.0, -9000.0],
                leg_heading: PI / 2.0,
                ..LawnmowerSpec::default()
            },
            ..Self::double_gyre()
        }
    }

    /// Heading-aided navigation on a coarse, hourly grid forecast of a broad
    /// meandering jet; the analytic jet is the truth.
    pub fn grid_surrogate() -> Self {
        let jet = MeanderJetParams {
            length_scale: 10_000.0,
            time_scale: 0.3 * 86_400.0,
            origin: [0.0, 0.0],
            ..MeanderJetParams::default()
        };
        let geometry = GridGeometry {
            origin: [-14_000.0, -24_500.0],
            dx: 3500.0,
            dy: 3500.0,
            nx: 13,
            ny: 15,
            t0: 0.0,
            dt: 3600.0,
            nt: 8,
        };
        let base = Self::double_gyre();
        Self {
            name: "grid_surrogate".into(),
            truth_flow: FlowSpec::MeanderJet(jet.clone()),
            nav_map: Some(FlowSpec::Rasterized { source: Box::new(FlowSpec::MeanderJet(jet)), geometry }),
            trajectory: LawnmowerSpec {
                origin: [0.0, -9000.0],
                leg_heading: PI / 2.0,
                ..LawnmowerSpec::default()
            },
            estimator: EstimatorSpec {
                n_particles: 50,
                mutation: Some(MutationConfig { trigger_sd: 50.0, jitter_var: 2500.0, cov_inflation: [0.0; 10] }),
                heading_sd: Some(0.005),
                point_estimate: PointEstimate::Map,
                ..base.estimator.clone()
            },
            init: InitSpec { turbulence_var: Some(1e-4), turbulence_from_truth: true, ..InitSpec::default() },
            ..base
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "double_gyre" => Some(Self::double_gyre()),
            "meander_jet" => Some(Self::meander_jet()),
            "grid_surrogate" => Some(Self::grid_surrogate()),
            _ => None,
        }
    }
}
