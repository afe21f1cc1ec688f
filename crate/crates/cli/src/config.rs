//! Run configuration: flat `key = value` pairs layered as
//! defaults < environment < file < command-line flags.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use eprcam_core::seed;
use eprcam_core::sim::{reference_coincidences, SimConfig, REFERENCE_DURATION_S};
use eprcam_core::{
    AnalysisParams, Basis, ClusterParams, DetectorParams, OpticsConfig, PairingParams, PipelineConfig, SensorLayout,
    SourceParams, TimewalkMode,
};

pub const ENV_PREFIX: &str = "EPRCAM_";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { origin: String, key: String },
    #[error("{origin}: line {line}: expected `key = value`")]
    Syntax { origin: String, line: usize },
    #[error("`{key}`: cannot parse `{value}`: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Every key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "1", "root seed; every random stream is derived from it"),
    (
        "basis",
        "ff",
        "basis simulated or processed: nf (near field) or ff (far field)",
    ),
    ("sim.duration_s", "200", "acquisition length, s"),
    (
        "sim.chunk_s",
        "0.01",
        "generation chunk length, s (part of the determinism contract)",
    ),
    ("source.delta_minus_m", "1.17e-5", "width of x1 - x2, m"),
    ("source.delta_plus_inv_m", "3.82e3", "width of k1 + k2, 1/m"),
    (
        "source.pair_rate_hz",
        "auto",
        "pair emission rate; auto targets 1.4e6 (ff) or 2.1e6 (nf) coincidences in 200 s",
    ),
    (
        "source.separable",
        "false",
        "emit uncorrelated photons with the same marginals",
    ),
    ("detector.quantum_efficiency", "0.2", "probability a photon is detected"),
    ("detector.dead_time_ps", "1000000", "per-pixel dead time, ps"),
    ("detector.cluster_psf_sigma_px", "0.7", "intensifier spot width, px"),
    ("detector.mean_cluster_tot", "120", "mean summed ToT of one photon"),
    ("detector.gain_shape", "4", "Gamma shape of the per-photon gain"),
    ("detector.tot_noise", "1", "per-pixel ToT noise"),
    (
        "detector.pixel_threshold_tot",
        "1",
        "expected ToT a pixel needs to fire",
    ),
    (
        "detector.timewalk_coeff_ps",
        "100000",
        "timewalk: a pixel fires coeff/tot late, ps",
    ),
    ("detector.dark_rate_hz_per_px", "1", "dark hits per pixel per second"),
    ("detector.dark_tot_mean", "8", "mean ToT of a dark hit"),
    ("detector.tick_ps", "1562.5", "time stamp quantum, ps"),
    (
        "detector.time_jitter_fwhm_ps",
        "6000",
        "per-photon timing jitter FWHM, ps",
    ),
    ("optics.pixel_pitch_m", "55e-6", "sensor pixel pitch, m"),
    ("optics.magnification_nf", "10", "near-field magnification"),
    ("optics.f_eff_m", "0.075", "far-field effective focal length, m"),
    ("optics.wavelength_m", "810e-9", "photon wavelength, m"),
    ("layout.left_x", "63.5", "left image centre, x px"),
    ("layout.left_y", "127.5", "left image centre, y px"),
    ("layout.right_x", "191.5", "right image centre, x px"),
    ("layout.right_y", "127.5", "right image centre, y px"),
    (
        "cluster.spatial_adjacency",
        "1",
        "Chebyshev distance for adjacent hits, px",
    ),
    ("cluster.time_window_ps", "300000", "cluster time window, ps"),
    ("cluster.min_tot", "1", "smallest summed ToT of a kept cluster"),
    ("pairing.window_ps", "6000", "coincidence window, ps"),
    (
        "pairing.cross_halves_only",
        "true",
        "pair only photons on opposite halves",
    ),
    ("timewalk.mode", "auto", "auto (calibrate from data), fixed or off"),
    ("timewalk.coeff_ps", "100000", "constant applied in fixed mode, ps"),
    (
        "timewalk.calibration_clusters",
        "20000",
        "clusters used by auto calibration",
    ),
    (
        "analysis.min_counts",
        "100",
        "smallest coincidence count of a reference column",
    ),
    (
        "analysis.min_peak_significance",
        "5",
        "smallest peak significance of a reference column",
    ),
    (
        "analysis.n_trials",
        "100",
        "Monte-Carlo trials; 0 skips error estimation",
    ),
    (
        "analysis.resample",
        "true",
        "Poisson-resample the histograms in each trial",
    ),
    (
        "analysis.binning_correction",
        "true",
        "remove pixel rounding variance from widths",
    ),
    (
        "output.truth_links",
        "false",
        "simulate also writes truth_links.csv (one row per hit)",
    ),
];

/// `--help` section listing every key with its default.
pub fn keys_help() -> String {
    let mut s =
        String::from("Configuration keys (file lines `key = value`; environment EPRCAM_<KEY> with `.` as `__`):\n");
    for (k, d, doc) in KEYS {
        s.push_str(&format!("  {k:<34} {d:<9} {doc}\n"));
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, d, _)| (k.to_string(), d.to_string())).collect(),
        }
    }
}

fn is_key(k: &str) -> bool {
    KEYS.iter().any(|(key, _, _)| *key == k)
}

impl RunConfig {
    pub fn set(&mut self, origin: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        if !is_key(key) {
            return Err(ConfigError::UnknownKey {
                origin: origin.to_string(),
                key: key.to_string(),
            });
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        &self.values[key]
    }

    /// Apply `EPRCAM_SECTION__NAME` variables. Unknown names are reported.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Vec<String> {
        let mut ignored = Vec::new();
        for (name, value) in vars {
            let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let key = rest.to_ascii_lowercase().replace("__", ".");
            if self.set("environment", &key, &value).is_err() {
                ignored.push(name);
            }
        }
        ignored
    }

    pub fn apply_text(&mut self, origin: &str, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                origin: origin.to_string(),
                line: i + 1,
            })?;
            self.set(origin, k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.apply_text(&path.display().to_string(), &text)
    }

    /// Canonical form: every key, sorted, one `key = value` line each.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key);
        v.parse().map_err(|e: T::Err| ConfigError::Value {
            key: key.to_string(),
            value: v.to_string(),
            reason: e.to_string(),
        })
    }

    /// Check every key parses and the assembled parameters are valid.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for basis in [Basis::NearField, Basis::FarField] {
            let sim = self.sim_config(basis)?;
            sim.source.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            sim.detector
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            sim.optics.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if !(sim.duration_s > 0.0 && sim.chunk_s > 0.0) {
                return Err(ConfigError::Invalid(
                    "duration and chunk length must be positive".into(),
                ));
            }
        }
        self.pipeline()?
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.analysis()?;
        self.truth_links()?;
        Ok(())
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.parse("seed")
    }

    pub fn basis(&self) -> Result<Basis, ConfigError> {
        self.parse("basis")
    }

    pub fn truth_links(&self) -> Result<bool, ConfigError> {
        self.parse("output.truth_links")
    }

    pub fn optics(&self, basis: Basis) -> Result<OpticsConfig, ConfigError> {
        Ok(OpticsConfig {
            pixel_pitch_m: self.parse("optics.pixel_pitch_m")?,
            magnification_nf: self.parse("optics.magnification_nf")?,
            f_eff_m: self.parse("optics.f_eff_m")?,
            wavelength_m: self.parse("optics.wavelength_m")?,
            basis,
        })
    }

    pub fn detector(&self) -> Result<DetectorParams, ConfigError> {
        Ok(DetectorParams {
            quantum_efficiency: self.parse("detector.quantum_efficiency")?,
            dead_time_ps: self.parse("detector.dead_time_ps")?,
            cluster_psf_sigma_px: self.parse("detector.cluster_psf_sigma_px")?,
            mean_cluster_tot: self.parse("detector.mean_cluster_tot")?,
            gain_shape: self.parse("detector.gain_shape")?,
            tot_noise: self.parse("detector.tot_noise")?,
            pixel_threshold_tot: self.parse("detector.pixel_threshold_tot")?,
            timewalk_coeff_ps: self.parse("detector.timewalk_coeff_ps")?,
            dark_rate_hz_per_px: self.parse("detector.dark_rate_hz_per_px")?,
            dark_tot_mean: self.parse("detector.dark_tot_mean")?,
            tick_ps: self.parse("detector.tick_ps")?,
            time_jitter_fwhm_ps: self.parse("detector.time_jitter_fwhm_ps")?,
        })
    }

    pub fn sim_config(&self, basis: Basis) -> Result<SimConfig, ConfigError> {
        let detector = self.detector()?;
        let pairing = self.pipeline()?.pairing;
        let rate = match self.get("source.pair_rate_hz") {
            "auto" => detector.pair_rate_for_coincidences(
                reference_coincidences(basis) / REFERENCE_DURATION_S,
                pairing.coincidence_window_ps as f64,
            ),
            _ => self.parse("source.pair_rate_hz")?,
        };
        let mut source = SourceParams::from_minus_plus(
            self.parse("source.delta_minus_m")?,
            self.parse("source.delta_plus_inv_m")?,
            rate,
        );
        source.separable = self.parse("source.separable")?;
        let label = match basis {
            Basis::NearField => "sim-nf",
            Basis::FarField => "sim-ff",
        };
        Ok(SimConfig {
            source,
            detector,
            optics: self.optics(basis)?,
            layout: SensorLayout {
                left_center: (self.parse("layout.left_x")?, self.parse("layout.left_y")?),
                right_center: (self.parse("layout.right_x")?, self.parse("layout.right_y")?),
            },
            duration_s: self.parse("sim.duration_s")?,
            chunk_s: self.parse("sim.chunk_s")?,
            seed: seed::derive(self.seed()?, &[seed::label(label)]),
        })
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, ConfigError> {
        let timewalk = match self.get("timewalk.mode") {
            "auto" => TimewalkMode::Auto {
                calibration_clusters: self.parse("timewalk.calibration_clusters")?,
            },
            "fixed" => TimewalkMode::Fixed(self.parse("timewalk.coeff_ps")?),
            "off" => TimewalkMode::Off,
            other => {
                return Err(ConfigError::Value {
                    key: "timewalk.mode".into(),
                    value: other.into(),
                    reason: "expected auto, fixed or off".into(),
                })
            }
        };
        Ok(PipelineConfig {
            cluster: ClusterParams {
                spatial_adjacency: self.parse("cluster.spatial_adjacency")?,
                cluster_time_window_ps: self.parse("cluster.time_window_ps")?,
                min_cluster_tot: self.parse("cluster.min_tot")?,
            },
            pairing: PairingParams {
                coincidence_window_ps: self.parse("pairing.window_ps")?,
                cross_halves_only: self.parse("pairing.cross_halves_only")?,
            },
            timewalk,
        })
    }

    pub fn analysis(&self) -> Result<AnalysisParams, ConfigError> {
        Ok(AnalysisParams {
            min_counts: self.parse("analysis.min_counts")?,
            min_peak_significance: self.parse("analysis.min_peak_significance")?,
            n_trials: self.parse("analysis.n_trials")?,
            mc_seed: seed::derive(self.seed()?, &[seed::label("montecarlo")]),
            resample: self.parse("analysis.resample")?,
            binning_correction: self.parse("analysis.binning_correction")?,
        })
    }
}
