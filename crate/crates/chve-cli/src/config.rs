//! Run configuration: presets, flat key-value config files, and validation.

use crate::error::CliError;
use chve_core::energy::EnergyModel;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Cs,
    Dsav,
}

impl Scheme {
    pub fn parse(s: &str) -> Result<Scheme, CliError> {
        match s.to_ascii_lowercase().as_str() {
            "cs" => Ok(Scheme::Cs),
            "dsav" => Ok(Scheme::Dsav),
            other => Err(CliError::Config(format!(
                "unknown scheme '{other}' (expected cs or dsav)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Cs => "cs",
            Scheme::Dsav => "dsav",
        }
    }
}

/// Initial phase field.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialPhase {
    /// Nodal mean + amplitude perturbation from the seeded generator.
    /// `centered`: perturbation is amplitude*(2u-1) with u uniform on [0,1]
    /// (range mean +/- amplitude); otherwise amplitude*u (one-sided).
    Random {
        mean: f64,
        amplitude: f64,
        centered: bool,
    },
    /// Indicator of a union of disjoint circles.
    Circles {
        centers: Vec<[f64; 2]>,
        radius: f64,
    },
}

/// Initial deformation gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialDeformation {
    Identity,
    /// F = [[1, a*phi0], [0, 1]] nodally, with the model's shear modulus a.
    ShearByPhase,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scheme: Scheme,
    pub nx: usize,
    pub ny: usize,
    pub dt: f64,
    pub steps: usize,
    pub nu: f64,
    pub gamma: f64,
    pub lambda: f64,
    /// Surface/bulk energy scale beta; the interface parameter is eps = beta*alpha.
    pub beta_surf: f64,
    pub alpha_int: f64,
    pub zeta: f64,
    pub a_shear: f64,
    pub sav_k: f64,
    pub b0: f64,
    pub b1: f64,
    pub initial: InitialPhase,
    pub deformation: InitialDeformation,
    pub seed: u64,
    /// Write a VTK snapshot every this many steps (0 disables VTK output).
    pub vtk_every: usize,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Interface parameter; always derived, never set directly.
    pub fn epsilon(&self) -> f64 {
        self.beta_surf * self.alpha_int
    }

    pub fn model(&self) -> Result<EnergyModel, CliError> {
        let mut model =
            EnergyModel::shape_memory(self.beta_surf, self.alpha_int, self.zeta, self.a_shear);
        model.b0 = self.b0;
        model.b1 = self.b1;
        model.sav_k = self.sav_k;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.dt <= 0.0 || !self.dt.is_finite() {
            return Err(CliError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.steps == 0 {
            return Err(CliError::Config("steps must be at least 1".into()));
        }
        if self.nx < 2 || self.ny < 2 {
            return Err(CliError::Config(format!(
                "mesh must be at least 2x2, got {}x{}",
                self.nx, self.ny
            )));
        }
        if self.nu <= 0.0 || self.lambda <= 0.0 || self.gamma < 0.0 {
            return Err(CliError::Config(
                "need nu > 0, lambda > 0, gamma >= 0".into(),
            ));
        }
        match &self.initial {
            InitialPhase::Random { amplitude, .. } => {
                if *amplitude < 0.0 {
                    return Err(CliError::Config("amplitude must be >= 0".into()));
                }
            }
            InitialPhase::Circles { centers, radius } => {
                crate::init::validate_circles(centers, *radius)?;
            }
        }
        self.model()?;
        Ok(())
    }
}

/// Experiment presets from the reference test cases.
///
/// TC1 (spinodal decomposition): nu=1, lambda=0.001, beta=0.1, alpha=0.002,
/// zeta=10, a=0.5, constant mobility, dt = 0.001*eps = 2e-7, F0 = I.
/// TC1a starts at phi0 = 0.3 +/- 0.5, TC1b at 0.7 +/- 0.2.
///
/// TC2 (circular inclusions): alpha=0.02, gamma=0.001, dt = 0.00001*eps
/// = 2e-8, phase indicator circles, F0 sheared by the initial phase.
/// TC2a has two circles, TC2b four.
pub fn preset(name: &str) -> Result<RunConfig, CliError> {
    let base = RunConfig {
        scheme: Scheme::Cs,
        nx: 64,
        ny: 64,
        dt: 2e-7,
        steps: 1000,
        nu: 1.0,
        gamma: 1.0,
        lambda: 0.001,
        beta_surf: 0.1,
        alpha_int: 0.002,
        zeta: 10.0,
        a_shear: 0.5,
        sav_k: 1.0,
        b0: 1.0,
        b1: 1.0,
        initial: InitialPhase::Random {
            mean: 0.3,
            amplitude: 0.5,
            centered: true,
        },
        deformation: InitialDeformation::Identity,
        seed: 1,
        vtk_every: 0,
        out_dir: None,
    };
    match name.to_ascii_lowercase().as_str() {
        "tc1a" => Ok(base),
        "tc1b" => Ok(RunConfig {
            initial: InitialPhase::Random {
                mean: 0.7,
                amplitude: 0.2,
                centered: true,
            },
            ..base
        }),
        "tc2a" | "tc2b" => {
            let centers = if name.eq_ignore_ascii_case("tc2a") {
                vec![[0.35, 0.5], [0.65, 0.5]]
            } else {
                vec![[0.35, 0.35], [0.65, 0.35], [0.35, 0.65], [0.65, 0.65]]
            };
            Ok(RunConfig {
                alpha_int: 0.02,
                gamma: 0.001,
                dt: 2e-8,
                initial: InitialPhase::Circles {
                    centers,
                    radius: 0.1,
                },
                deformation: InitialDeformation::ShearByPhase,
                ..base
            })
        }
        other => Err(CliError::Config(format!("unknown preset '{other}'"))),
    }
}

/// Apply one flat `key = value` assignment. The schema is documented in the
/// repository README.
pub fn apply_key(config: &mut RunConfig, key: &str, value: &str) -> Result<(), CliError> {
    fn num(key: &str, value: &str) -> Result<f64, CliError> {
        value
            .parse()
            .map_err(|_| CliError::Config(format!("key '{key}': invalid number '{value}'")))
    }
    fn int(key: &str, value: &str) -> Result<usize, CliError> {
        value
            .parse()
            .map_err(|_| CliError::Config(format!("key '{key}': invalid integer '{value}'")))
    }
    fn boolean(key: &str, value: &str) -> Result<bool, CliError> {
        match value {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => Err(CliError::Config(format!(
                "key '{key}': invalid boolean '{value}'"
            ))),
        }
    }
    match key {
        "scheme" => config.scheme = Scheme::parse(value)?,
        "seed" => {
            config.seed = value
                .parse()
                .map_err(|_| CliError::Config(format!("invalid seed '{value}'")))?
        }
        "mesh.nx" => config.nx = int(key, value)?,
        "mesh.ny" => config.ny = int(key, value)?,
        "time.dt" => config.dt = num(key, value)?,
        "time.steps" => config.steps = int(key, value)?,
        "model.nu" => config.nu = num(key, value)?,
        "model.gamma" => config.gamma = num(key, value)?,
        "model.lambda" => config.lambda = num(key, value)?,
        "model.beta" => config.beta_surf = num(key, value)?,
        "model.alpha" => config.alpha_int = num(key, value)?,
        "model.zeta" => config.zeta = num(key, value)?,
        "model.a" => config.a_shear = num(key, value)?,
        "model.k" => config.sav_k = num(key, value)?,
        "model.b0" => config.b0 = num(key, value)?,
        "model.b1" => config.b1 = num(key, value)?,
        "model.eps" | "model.epsilon" => {
            return Err(CliError::Config(
                "eps is derived as beta*alpha and cannot be set directly".into(),
            ))
        }
        "initial.kind" => match value {
            "random" => {
                if !matches!(config.initial, InitialPhase::Random { .. }) {
                    config.initial = InitialPhase::Random {
                        mean: 0.5,
                        amplitude: 0.0,
                        centered: true,
                    };
                }
            }
            "circles" => {
                if !matches!(config.initial, InitialPhase::Circles { .. }) {
                    config.initial = InitialPhase::Circles {
                        centers: Vec::new(),
                        radius: 0.0,
                    };
                }
            }
            other => {
                return Err(CliError::Config(format!(
                    "initial.kind must be random or circles, got '{other}'"
                )))
            }
        },
        "initial.mean" | "initial.amplitude" | "initial.centered" => {
            let InitialPhase::Random {
                mean,
                amplitude,
                centered,
            } = &mut config.initial
            else {
                return Err(CliError::Config(format!(
                    "key '{key}' requires initial.kind = random"
                )));
            };
            match key {
                "initial.mean" => *mean = num(key, value)?,
                "initial.amplitude" => *amplitude = num(key, value)?,
                _ => *centered = boolean(key, value)?,
            }
        }
        "initial.circles" | "initial.radius" => {
            let InitialPhase::Circles { centers, radius } = &mut config.initial else {
                return Err(CliError::Config(format!(
                    "key '{key}' requires initial.kind = circles"
                )));
            };
            if key == "initial.radius" {
                *radius = num(key, value)?;
            } else {
                centers.clear();
                for part in value.split(';').filter(|p| !p.trim().is_empty()) {
                    let coords: Vec<&str> = part.split(',').map(str::trim).collect();
                    if coords.len() != 2 {
                        return Err(CliError::Config(format!(
                            "initial.circles entries must be 'x,y', got '{part}'"
                        )));
                    }
                    centers.push([num(key, coords[0])?, num(key, coords[1])?]);
                }
            }
        }
        "initial.deformation" => {
            config.deformation = match value {
                "identity" => InitialDeformation::Identity,
                "shear" => InitialDeformation::ShearByPhase,
                other => {
                    return Err(CliError::Config(format!(
                        "initial.deformation must be identity or shear, got '{other}'"
                    )))
                }
            }
        }
        "output.dir" => config.out_dir = Some(PathBuf::from(value)),
        "output.vtk_every" => config.vtk_every = int(key, value)?,
        other => return Err(CliError::Config(format!("unknown config key '{other}'"))),
    }
    Ok(())
}

/// Parse a flat key-value config file: one `key = value` per line, `#`
/// comments, blank lines ignored.
pub fn apply_config_text(config: &mut RunConfig, text: &str) -> Result<(), CliError> {
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "line {}: expected 'key = value', got '{line}'",
                lineno + 1
            )));
        };
        apply_key(config, key.trim(), value.trim())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tc1a_matches_reference_parameters() {
        let c = preset("TC1a").unwrap();
        assert!((c.dt - 0.001 * c.epsilon()).abs() <= 1e-22);
        assert_eq!(c.epsilon(), 0.1 * 0.002);
        assert_eq!((c.nx, c.ny), (64, 64));
        assert_eq!(c.b0, 1.0);
        assert_eq!(c.b1, 1.0);
        assert!(matches!(
            c.initial,
            InitialPhase::Random { mean, amplitude, centered: true }
                if mean == 0.3 && amplitude == 0.5
        ));
        c.validate().unwrap();
    }

    #[test]
    fn tc2_presets_use_sheared_deformation_and_small_dt() {
        for name in ["tc2a", "tc2b"] {
            let c = preset(name).unwrap();
            assert_eq!(c.deformation, InitialDeformation::ShearByPhase);
            assert!((c.dt - 1e-5 * c.epsilon()).abs() < 1e-20);
            assert_eq!(c.gamma, 0.001);
            c.validate().unwrap();
        }
        let InitialPhase::Circles { centers, .. } = preset("tc2b").unwrap().initial else {
            panic!("expected circles");
        };
        assert_eq!(centers.len(), 4);
    }

    #[test]
    fn unknown_preset_is_rejected() {
        assert!(preset("tc9").is_err());
    }

    #[test]
    fn config_text_overrides_fields() {
        let mut c = preset("tc1a").unwrap();
        apply_config_text(
            &mut c,
            "# comment\nscheme = dsav\nmesh.nx = 16 # inline\ntime.steps = 5\ninitial.mean = 0.4\n",
        )
        .unwrap();
        assert_eq!(c.scheme, Scheme::Dsav);
        assert_eq!(c.nx, 16);
        assert_eq!(c.steps, 5);
        assert!(matches!(c.initial, InitialPhase::Random { mean, .. } if mean == 0.4));
    }

    #[test]
    fn epsilon_cannot_be_set_directly() {
        let mut c = preset("tc1a").unwrap();
        assert!(apply_key(&mut c, "model.eps", "0.01").is_err());
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut c = preset("tc1a").unwrap();
        assert!(apply_key(&mut c, "model.wrong", "1").is_err());
    }
}
