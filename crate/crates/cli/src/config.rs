//! Run configuration.
//!
//! A TOML file with the sections `[grid]`, `[initial]`, `[coils]`,
//! `[control]`, `[objective]`, `[optimizer]`, `[gradcheck]`, `[output]` and
//! `[solver]`. Every key has a default, so an empty file is a valid (zero)
//! scenario. Environment variables of the form `VCTL_<SECTION>__<KEY>`
//! override file values before validation, e.g. `VCTL_GRID__NX=64`.

use crate::error::{AppError, AppResult};
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;
use std::path::{Path, PathBuf};
use vctl_core::distribution::SUPPORT_EPSILON;

pub const ENV_PREFIX: &str = "VCTL_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub x_extent: f64,
    pub p_extent: f64,
    pub nx: usize,
    pub np: usize,
    pub t_final: f64,
    /// Number of time steps; derived from `cfl` when absent.
    pub nt: Option<usize>,
    /// `dt / (dx / sqrt 2)` used when `nt` is absent.
    pub cfl: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { x_extent: 6.0, p_extent: 4.0, nx: 32, np: 32, t_final: 1.0, nt: None, cfl: 0.5 }
    }
}

impl GridConfig {
    pub fn dx(&self) -> f64 {
        2.0 * self.x_extent / self.nx as f64
    }

    pub fn resolved_nt(&self) -> usize {
        self.nt.unwrap_or_else(|| {
            let dt = self.cfl * self.dx() / SQRT_2;
            ((self.t_final / dt).ceil() as usize).max(1)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialProfile {
    Zero,
    GaussianBlob,
    TwoBump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackgroundKind {
    InitialDensity,
    Mean,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub profile: InitialProfile,
    /// Peak value of each Gaussian bump.
    pub amplitude: f64,
    pub center: [f64; 2],
    pub sigma_x: f64,
    /// Mean momentum (the second bump of `two-bump` uses its negative).
    pub drift: [f64; 2],
    pub sigma_p: f64,
    /// Distance between the bump centers of `two-bump`, along `x1`.
    pub separation: f64,
    pub background: BackgroundKind,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            profile: InitialProfile::Zero,
            amplitude: 1e-3,
            center: [0.0, 0.0],
            sigma_x: 0.5,
            drift: [0.0, 0.0],
            sigma_p: 0.4,
            separation: 1.5,
            background: BackgroundKind::InitialDensity,
        }
    }
}

impl InitialConfig {
    /// Radius at which a bump falls below the support threshold, in units
    /// of its standard deviation.
    pub fn cutoff_sigmas(&self) -> f64 {
        if self.amplitude <= SUPPORT_EPSILON {
            0.0
        } else {
            (2.0 * (self.amplitude / SUPPORT_EPSILON).ln()).sqrt()
        }
    }

    /// Spatial and momentum support radii of the sampled initial density.
    pub fn support_radii(&self) -> (f64, f64) {
        let k = self.cutoff_sigmas();
        let c = self.center[0].hypot(self.center[1]);
        let d = self.drift[0].hypot(self.drift[1]);
        match self.profile {
            InitialProfile::Zero => (0.0, 0.0),
            InitialProfile::GaussianBlob => (c + k * self.sigma_x, d + k * self.sigma_p),
            InitialProfile::TwoBump => (c + 0.5 * self.separation + k * self.sigma_x, d + k * self.sigma_p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoilPreset {
    None,
    RingCoil,
    CrossedCoils,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoilKind {
    Ring,
    Strip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoilSpec {
    pub kind: CoilKind,
    pub center: [f64; 2],
    /// Ring radius.
    pub radius: f64,
    /// Ring half-thickness.
    pub width: f64,
    /// Strip orientation in radians.
    pub angle: f64,
    pub half_length: f64,
    pub half_width: f64,
    pub strength: f64,
}

impl Default for CoilSpec {
    fn default() -> Self {
        Self {
            kind: CoilKind::Ring,
            center: [0.0, 0.0],
            radius: 1.5,
            width: 0.6,
            angle: 0.0,
            half_length: 1.5,
            half_width: 0.6,
            strength: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoilsConfig {
    pub preset: CoilPreset,
    /// Ring radius or strip half-length of the presets.
    pub size: f64,
    /// Ring half-thickness or strip half-width of the presets.
    pub width: f64,
    pub strength: f64,
    /// Coils used with `preset = "custom"`.
    pub custom: Vec<CoilSpec>,
}

impl Default for CoilsConfig {
    fn default() -> Self {
        Self { preset: CoilPreset::None, size: 1.5, width: 0.6, strength: 1.0, custom: Vec::new() }
    }
}

impl CoilsConfig {
    pub fn specs(&self) -> Vec<CoilSpec> {
        let base = CoilSpec { width: self.width, half_width: self.width, strength: self.strength, ..CoilSpec::default() };
        match self.preset {
            CoilPreset::None => Vec::new(),
            CoilPreset::RingCoil => vec![CoilSpec { kind: CoilKind::Ring, radius: self.size, ..base }],
            CoilPreset::CrossedCoils => vec![
                CoilSpec { kind: CoilKind::Strip, half_length: self.size, angle: 0.0, ..base.clone() },
                CoilSpec { kind: CoilKind::Strip, half_length: self.size, angle: std::f64::consts::FRAC_PI_2, ..base },
            ],
            CoilPreset::Custom => self.custom.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaveformKind {
    Zero,
    Constant,
    Sine,
    File,
}

/// `u_j(t)`: `value` for `constant`, or
/// `offset + amplitude sin(2 pi frequency t + phase + j phase_step)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveformConfig {
    pub source: WaveformKind,
    pub value: f64,
    pub offset: f64,
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
    pub phase_step: f64,
    /// CSV with columns `t, u1, .., uN` for `source = "file"`.
    pub path: Option<PathBuf>,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        Self {
            source: WaveformKind::Zero,
            value: 0.0,
            offset: 0.0,
            amplitude: 0.5,
            frequency: 0.5,
            phase: 0.0,
            phase_step: 1.0,
            path: None,
        }
    }
}

impl WaveformConfig {
    pub fn sample(&self, j: usize, t: f64) -> f64 {
        match self.source {
            WaveformKind::Zero | WaveformKind::File => 0.0,
            WaveformKind::Constant => self.value,
            WaveformKind::Sine => {
                let arg = 2.0 * std::f64::consts::PI * self.frequency * t + self.phase + j as f64 * self.phase_step;
                self.offset + self.amplitude * arg.sin()
            }
        }
    }

    fn validate(&self, what: &str, problems: &mut Vec<String>) {
        let finite = [self.value, self.offset, self.amplitude, self.frequency, self.phase, self.phase_step];
        if finite.iter().any(|v| !v.is_finite()) {
            problems.push(format!("{what}: waveform parameters must be finite"));
        }
        if self.source == WaveformKind::File && self.path.is_none() {
            problems.push(format!("{what}: source = \"file\" needs a path"));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    /// `rho_f` of a run driven by the `twin` waveform.
    Twin,
    /// `rho_f` of the run with `u = 0`.
    Uncontrolled,
    Zero,
    /// Directory of per-step scalar grid files `rho_00000.bin`, ...
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    pub target: TargetKind,
    pub twin: WaveformConfig,
    pub path: Option<PathBuf>,
    pub tracking: bool,
    pub beta: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            target: TargetKind::Uncontrolled,
            twin: WaveformConfig { source: WaveformKind::Sine, ..WaveformConfig::default() },
            path: None,
            tracking: true,
            beta: 1e-4,
            beta1: 1e-2,
            beta2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub max_iters: usize,
    pub c1: f64,
    pub backtrack: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub tol_value: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self { max_iters: 20, c1: 1e-4, backtrack: 0.5, initial_step: 0.25, min_step: 1e-12, tol_abs: 0.0, tol_rel: 1e-3, tol_value: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub directions: usize,
    pub seed: u64,
    pub epsilons: Vec<f64>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { directions: 5, seed: 1, epsilons: vec![1e-2, 1e-3, 1e-4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write density and field snapshots every this many steps (0: never).
    pub snapshot_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), snapshot_stride: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub escape_tolerance: f64,
    pub support_fraction: f64,
    pub boundary_tolerance: f64,
    pub boundary_width: usize,
    pub picard_passes: usize,
    /// Adjoint checkpoint spacing in steps (0: only the initial state).
    pub checkpoint_stride: usize,
    pub clip_negative: bool,
    pub threads: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            escape_tolerance: 1e-8,
            support_fraction: 0.9,
            boundary_tolerance: 1e-10,
            boundary_width: 2,
            picard_passes: 1,
            checkpoint_stride: 8,
            clip_negative: false,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub initial: InitialConfig,
    pub coils: CoilsConfig,
    pub control: WaveformConfig,
    pub objective: ObjectiveConfig,
    pub optimizer: OptimizerSection,
    pub gradcheck: GradcheckConfig,
    pub output: OutputConfig,
    pub solver: SolverConfig,
}

/// Applies `VCTL_<SECTION>__<KEY>=value` overrides to a parsed document.
/// Values are parsed as TOML and fall back to plain strings.
pub fn apply_overrides(doc: &mut toml::Table, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), Vec<String>> {
    let mut problems = Vec::new();
    let mut pairs: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    pairs.sort();
    for (key, raw) in pairs {
        let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(|s| s.to_ascii_lowercase()).collect();
        if path.len() < 2 || path.iter().any(|s| s.is_empty()) {
            problems.push(format!("{key}: expected {ENV_PREFIX}<SECTION>__<KEY>"));
            continue;
        }
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or(toml::Value::String(raw.clone()));
        if let Err(part) = insert_path(doc, &path, value) {
            problems.push(format!("{key}: {part} is not a section"));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems)
    }
}

fn insert_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), String> {
    let (head, rest) = path.split_first().expect("nonempty path");
    if rest.is_empty() {
        table.insert(head.clone(), value);
        return Ok(());
    }
    match table.entry(head.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new())) {
        toml::Value::Table(t) => insert_path(t, rest, value),
        _ => Err(head.clone()),
    }
}

impl RunConfig {
    /// Parses, applies overrides, normalizes and validates.
    pub fn from_toml_with(text: &str, vars: impl IntoIterator<Item = (String, String)>) -> AppResult<Self> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| AppError::config(e.to_string()))?;
        apply_overrides(&mut doc, vars).map_err(AppError::Config)?;
        let mut cfg: RunConfig = doc.try_into().map_err(|e: toml::de::Error| AppError::config(e.to_string()))?;
        cfg.normalize();
        cfg.validate().map_err(AppError::Config)?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> AppResult<Self> {
        Self::from_toml_with(text, std::iter::empty())
    }

    /// Fills derived values so that the dump is self-contained.
    pub fn normalize(&mut self) {
        if self.grid.nt.is_none() && self.grid.nx > 0 && self.grid.x_extent > 0.0 && self.grid.cfl > 0.0 && self.grid.t_final > 0.0 {
            self.grid.nt = Some(self.grid.resolved_nt());
        }
    }

    pub fn dump(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// All violations at once.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut p = Vec::new();
        let g = &self.grid;
        if !(g.x_extent > 0.0 && g.x_extent.is_finite()) {
            p.push(format!("grid.x_extent must be positive (got {})", g.x_extent));
        }
        if !(g.p_extent > 0.0 && g.p_extent.is_finite()) {
            p.push(format!("grid.p_extent must be positive (got {})", g.p_extent));
        }
        if g.nx < 8 || g.np < 8 {
            p.push(format!("grid.nx and grid.np must be at least 8 (got {}, {})", g.nx, g.np));
        }
        if !(g.t_final > 0.0 && g.t_final.is_finite()) {
            p.push(format!("grid.t_final must be positive (got {})", g.t_final));
        }
        if !(g.cfl > 0.0 && g.cfl <= 1.0) {
            p.push(format!("grid.cfl must lie in (0, 1] (got {})", g.cfl));
        }
        let grid_ok = p.is_empty();
        if grid_ok {
            let nt = g.resolved_nt();
            if nt == 0 {
                p.push("grid.nt must be at least 1".into());
            } else {
                let dt = g.t_final / nt as f64;
                let bound = g.dx() / SQRT_2;
                if dt > bound * (1.0 + 1e-12) {
                    p.push(format!(
                        "CFL violated: dt = T/nt = {dt} exceeds dx/sqrt(2) = {bound} (dx = {}); use nt >= {}",
                        g.dx(),
                        (g.t_final / bound).ceil()
                    ));
                }
            }
        }
        let i = &self.initial;
        if !(i.amplitude >= 0.0 && i.amplitude.is_finite()) {
            p.push(format!("initial.amplitude must be nonnegative (got {})", i.amplitude));
        }
        if !(i.sigma_x > 0.0 && i.sigma_p > 0.0) {
            p.push(format!("initial.sigma_x and sigma_p must be positive (got {}, {})", i.sigma_x, i.sigma_p));
        }
        if !(i.separation >= 0.0) {
            p.push(format!("initial.separation must be nonnegative (got {})", i.separation));
        }
        let c = &self.coils;
        let specs = c.specs();
        if c.preset == CoilPreset::Custom && specs.is_empty() {
            p.push("coils.preset = \"custom\" needs at least one [[coils.custom]] entry".into());
        }
        let mut control_radius: f64 = 0.0;
        for (j, s) in specs.iter().enumerate() {
            let prof = coil_profile(s);
            match prof.validate() {
                Ok(()) => control_radius = control_radius.max(prof.outer_radius()),
                Err(e) => p.push(format!("coil {j}: {e}")),
            }
        }
        self.control.validate("control", &mut p);
        let o = &self.objective;
        self.objective.twin.validate("objective.twin", &mut p);
        if o.target == TargetKind::Twin && o.twin.source == WaveformKind::File {
            p.push("objective.twin cannot read from a file; use target = \"file\" with precomputed densities".into());
        }
        if o.target == TargetKind::File && o.path.is_none() {
            p.push("objective.target = \"file\" needs objective.path".into());
        }
        for (name, v) in [("beta", o.beta), ("beta1", o.beta1), ("beta2", o.beta2)] {
            if !(v >= 0.0 && v.is_finite()) {
                p.push(format!("objective.{name} must be finite and nonnegative (got {v})"));
            }
        }
        let op = &self.optimizer;
        if !(op.c1 > 0.0 && op.c1 < 1.0) {
            p.push(format!("optimizer.c1 must lie in (0, 1) (got {})", op.c1));
        }
        if !(op.backtrack > 0.0 && op.backtrack < 1.0) {
            p.push(format!("optimizer.backtrack must lie in (0, 1) (got {})", op.backtrack));
        }
        if !(op.initial_step > 0.0 && op.min_step > 0.0) {
            p.push("optimizer.initial_step and min_step must be positive".into());
        }
        if !(op.tol_abs >= 0.0 && op.tol_rel >= 0.0 && op.tol_value >= 0.0) {
            p.push("optimizer tolerances must be nonnegative".into());
        }
        let gc = &self.gradcheck;
        if gc.epsilons.is_empty() || gc.epsilons.iter().any(|e| !(*e > 0.0)) {
            p.push("gradcheck.epsilons must be a nonempty list of positive steps".into());
        }
        let s = &self.solver;
        if !(s.escape_tolerance > 0.0 && s.boundary_tolerance > 0.0) {
            p.push("solver.escape_tolerance and boundary_tolerance must be positive".into());
        }
        if !(s.support_fraction > 0.0 && s.support_fraction <= 1.0) {
            p.push(format!("solver.support_fraction must lie in (0, 1] (got {})", s.support_fraction));
        }
        if s.boundary_width == 0 {
            p.push("solver.boundary_width must be at least 1".into());
        }
        if !(1..=2).contains(&s.picard_passes) {
            p.push(format!("solver.picard_passes must be 1 or 2 (got {})", s.picard_passes));
        }
        if s.threads == 0 {
            p.push("solver.threads must be at least 1".into());
        }
        if grid_ok {
            let (rx, rp) = i.support_radii();
            let required = rx + control_radius + g.t_final;
            if g.x_extent < required {
                p.push(format!(
                    "support margin violated: x_extent = {} but R~ + L + R + T = 0 + {:.4} + {:.4} + {} = {:.4}",
                    g.x_extent, control_radius, rx, g.t_final, required
                ));
            }
            let limit = s.support_fraction * g.p_extent;
            if rp > limit {
                p.push(format!(
                    "momentum support r0 = {rp:.4} exceeds {} x p_extent = {limit:.4}",
                    s.support_fraction
                ));
            }
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(p)
        }
    }
}

pub fn coil_profile(s: &CoilSpec) -> vctl_core::control::CoilProfile {
    use vctl_core::control::CoilProfile;
    match s.kind {
        CoilKind::Ring => CoilProfile::Ring { center: s.center, radius: s.radius, width: s.width, strength: s.strength },
        CoilKind::Strip => CoilProfile::Strip {
            center: s.center,
            angle: s.angle,
            half_length: s.half_length,
            half_width: s.half_width,
            strength: s.strength,
        },
    }
}

/// Reads a configuration file, applying the process environment.
pub fn parse_config(path: &Path) -> AppResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    RunConfig::from_toml_with(&text, std::env::vars())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_zero_scenario() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c.initial.profile, InitialProfile::Zero);
        assert_eq!(c.coils.preset, CoilPreset::None);
        assert!(c.grid.nt.is_some());
    }

    #[test]
    fn dump_round_trips() {
        let text = r#"
            [grid]
            x_extent = 8.0
            nx = 24
            np = 16
            [initial]
            profile = "two-bump"
            [coils]
            preset = "crossed-coils"
            [control]
            source = "sine"
        "#;
        let a = RunConfig::from_toml(text).unwrap();
        let b = RunConfig::from_toml(&a.dump()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dump(), b.dump());
    }

    #[test]
    fn cfl_violation_names_both_values() {
        let err = RunConfig::from_toml("[grid]\nnx = 32\nx_extent = 6.0\nnt = 2\n").unwrap_err();
        let AppError::Config(msgs) = err else { panic!() };
        let m = msgs.iter().find(|m| m.contains("CFL")).unwrap();
        assert!(m.contains("0.5") && m.contains("0.2651"), "{m}");
    }

    #[test]
    fn support_margin_reports_required_extent() {
        let text = "[grid]\nx_extent = 3.0\nnx = 32\n[coils]\npreset = \"ring-coil\"\nsize = 2.0\n[initial]\nprofile = \"gaussian-blob\"\n";
        let AppError::Config(msgs) = RunConfig::from_toml(text).unwrap_err() else { panic!() };
        assert!(msgs.iter().any(|m| m.contains("support margin") && m.contains("x_extent = 3")), "{msgs:?}");
    }

    #[test]
    fn violations_are_collected() {
        let text = "[grid]\nnx = 4\n[optimizer]\nc1 = 2.0\n[solver]\npicard_passes = 5\n";
        let AppError::Config(msgs) = RunConfig::from_toml(text).unwrap_err() else { panic!() };
        assert!(msgs.len() >= 3, "{msgs:?}");
    }

    #[test]
    fn environment_overrides_win() {
        let vars = vec![("VCTL_GRID__NX".to_string(), "40".to_string()), ("VCTL_COILS__PRESET".to_string(), "ring-coil".to_string())];
        let c = RunConfig::from_toml_with("[grid]\nnx = 32\n", vars).unwrap();
        assert_eq!(c.grid.nx, 40);
        assert_eq!(c.coils.preset, CoilPreset::RingCoil);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[grid]\nnxx = 3\n").is_err());
    }
}
