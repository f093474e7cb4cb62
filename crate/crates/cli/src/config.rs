//! Pipeline configuration: one TOML file with per-stage sections and a global
//! seed from which per-stage seeds are derived by fixed offsets.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use psr_core::grid::GridSpec;
use psr_core::material::MaterialSpec;
use psr_core::solver::Grouping;

/// Bundled synthetic reference experiment: 24.8 x 15.5 mm ROI
/// at 0.1 mm, three 2 mm defect pairs at 0.5/1/2 mm spacing, 20 half-fill
/// patterns of 0.4 mm clusters, lambda = (490, 34.4), rho = 9900.
pub const FIG4_SYNTHETIC: &str = include_str!("../configs/fig4_synthetic.toml");

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub grid: GridSection,
    pub material: MaterialSection,
    pub psf: PsfSection,
    pub pattern: PatternSection,
    pub forward: ForwardSection,
    pub solver: SolverSection,
    #[serde(default)]
    pub tune: TuneSection,
    pub baseline: BaselineSection,
    pub output: OutputSection,
    #[serde(default)]
    pub stages: StagesSection,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub dx_m: f64,
    pub dy_m: f64,
    pub dt_s: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSection {
    pub alpha_m2_s: f64,
    pub rho_kg_m3: f64,
    pub cp_j_kg_k: f64,
    pub k_w_m_k: f64,
    pub thickness_m: f64,
    pub reflection: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PsfSection {
    pub irradiance_w_m2: f64,
    #[serde(default = "default_absorptivity")]
    pub absorptivity: f64,
    pub pulse_s: f64,
    #[serde(default = "default_series_tolerance")]
    pub series_tolerance: f64,
    /// Precomputed PSF stack (TGS); bypasses the psf stage.
    #[serde(default)]
    pub path: Option<PathBuf>,
}

fn default_absorptivity() -> f64 {
    1.0
}

fn default_series_tolerance() -> f64 {
    1e-12
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSection {
    pub beta: f64,
    pub n_m: usize,
    pub d_spix_m: f64,
    pub n_clustered: usize,
    /// Cluster lattice layout; derived from the grid extent when absent.
    #[serde(default)]
    pub rows: Option<usize>,
    #[serde(default)]
    pub cols: Option<usize>,
    /// Precomputed pattern set (structured text); bypasses the patterns stage.
    #[serde(default)]
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DefectRect {
    pub x_mm: f64,
    pub y_mm: f64,
    pub w_mm: f64,
    pub h_mm: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardSection {
    pub zeta: f64,
    pub noise_sigma_k: f64,
    pub t0_k: f64,
    /// Pre-trigger frames emitted per synthetic measurement.
    #[serde(default = "default_t0_frames")]
    pub t0_frames: usize,
    #[serde(default)]
    pub defects: Vec<DefectRect>,
    /// Precomputed ground-truth map (single-frame TGS); overrides `defects`.
    #[serde(default)]
    pub defect_map: Option<PathBuf>,
    /// Directory with precomputed measurement stacks `meas_XX.tgs`; bypasses
    /// the simulate stage.
    #[serde(default)]
    pub measurement_dir: Option<PathBuf>,
}

fn default_t0_frames() -> usize {
    50
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub lambda_21: f64,
    pub lambda_2: f64,
    pub rho_admm: f64,
    pub n_iter: usize,
    #[serde(default = "default_grouping")]
    pub grouping: String,
    #[serde(default)]
    pub convergence_tol: Option<f64>,
    /// Pre-trigger frames averaged into T0 during reconstruction.
    #[serde(default = "default_t0_frames")]
    pub t0_avg_frames: usize,
}

fn default_grouping() -> String {
    "joint-pixel".to_owned()
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_bounds")]
    pub bounds_log10: [[f64; 2]; 2],
    #[serde(default = "default_agents")]
    pub n_agents: usize,
    #[serde(default = "default_generations")]
    pub n_generations: usize,
    #[serde(default = "default_f_weight")]
    pub f_weight: f64,
    #[serde(default = "default_cr")]
    pub cr: f64,
    #[serde(default)]
    pub early_stop: Option<usize>,
}

fn default_bounds() -> [[f64; 2]; 2] {
    [[-2.0, 4.0], [-2.0, 4.0]]
}
fn default_agents() -> usize {
    15
}
fn default_generations() -> usize {
    40
}
fn default_f_weight() -> f64 {
    0.8
}
fn default_cr() -> f64 {
    0.9
}

impl Default for TuneSection {
    fn default() -> Self {
        TuneSection {
            enabled: false,
            bounds_log10: default_bounds(),
            n_agents: default_agents(),
            n_generations: default_generations(),
            f_weight: default_f_weight(),
            cr: default_cr(),
            early_stop: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PristineRegion {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub t_eval_s: f64,
    pub f_ppt_hz: f64,
    pub pristine: PristineRegion,
    #[serde(default)]
    pub hann: bool,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Also export 8-bit grayscale images of field artifacts.
    #[serde(default)]
    pub images: bool,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct StagesSection {
    pub patterns: bool,
    pub psf: bool,
    pub simulate: bool,
    pub reconstruct: bool,
    pub tune: bool,
    pub score: bool,
    pub baseline: bool,
}

impl Default for StagesSection {
    fn default() -> Self {
        StagesSection {
            patterns: true,
            psf: true,
            simulate: true,
            reconstruct: true,
            tune: false,
            score: true,
            baseline: true,
        }
    }
}

impl PipelineConfig {
    /// Loads a config from a file path, or the bundled preset when `spec` is
    /// a known preset name.
    pub fn load(spec: &str) -> Result<(Self, String)> {
        let text = if spec == "fig4-synthetic" {
            FIG4_SYNTHETIC.to_owned()
        } else {
            std::fs::read_to_string(Path::new(spec))
                .with_context(|| format!("reading config {spec}"))?
        };
        let cfg: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {spec}"))?;
        cfg.validate()?;
        Ok((cfg, text))
    }

    /// Semantic validation with field-path diagnostics; every module
    /// precondition that the config can violate is checked before any compute.
    pub fn validate(&self) -> Result<()> {
        let mut errors: Vec<String> = Vec::new();
        let mut check = |ok: bool, path: &str, msg: &str| {
            if !ok {
                errors.push(format!("[{path}] {msg}"));
            }
        };

        check(self.grid.nx >= 1, "grid.nx", "must be >= 1");
        check(self.grid.ny >= 1, "grid.ny", "must be >= 1");
        check(self.grid.nt >= 1, "grid.nt", "must be >= 1");
        check(self.grid.dx_m > 0.0, "grid.dx_m", "must be > 0");
        check(self.grid.dy_m > 0.0, "grid.dy_m", "must be > 0");
        check(self.grid.dt_s > 0.0, "grid.dt_s", "must be > 0");

        if let Err(e) = self.material_spec() {
            check(false, "material", &format!("{e}"));
        }

        check(self.psf.irradiance_w_m2 >= 0.0, "psf.irradiance_w_m2", "must be >= 0");
        check(
            self.psf.absorptivity > 0.0 && self.psf.absorptivity <= 1.0,
            "psf.absorptivity",
            "must lie in (0, 1]",
        );
        check(self.psf.pulse_s > 0.0, "psf.pulse_s", "must be > 0");
        check(
            self.psf.series_tolerance > 0.0 && self.psf.series_tolerance < 1.0,
            "psf.series_tolerance",
            "must lie in (0, 1)",
        );

        check(
            self.pattern.beta > 0.0 && self.pattern.beta <= 1.0,
            "pattern.beta",
            "must lie in (0, 1]",
        );
        check(self.pattern.n_m >= 1, "pattern.n_m", "must be >= 1");
        check(self.pattern.d_spix_m > 0.0, "pattern.d_spix_m", "must be > 0");
        check(self.pattern.n_clustered >= 1, "pattern.n_clustered", "must be >= 1");
        let (rows, cols) = self.pattern_layout();
        check(rows >= 1, "pattern.rows", "grid extent holds no whole cluster row");
        check(cols >= 1, "pattern.cols", "grid extent holds no whole cluster column");
        check(
            cols as f64 * self.pattern.d_spix_m
                <= self.grid.nx as f64 * self.grid.dx_m * (1.0 + 1e-9),
            "pattern.cols",
            "cluster raster exceeds the grid extent",
        );
        check(
            rows as f64 * self.pattern.d_spix_m
                <= self.grid.ny as f64 * self.grid.dy_m * (1.0 + 1e-9),
            "pattern.rows",
            "cluster raster exceeds the grid extent",
        );

        check(
            (0.0..1.0).contains(&self.forward.zeta),
            "forward.zeta",
            "must lie in [0, 1)",
        );
        check(self.forward.noise_sigma_k >= 0.0, "forward.noise_sigma_k", "must be >= 0");
        check(self.forward.t0_k.is_finite(), "forward.t0_k", "must be finite");
        for (i, r) in self.forward.defects.iter().enumerate() {
            let ok = r.w_mm > 0.0
                && r.h_mm > 0.0
                && r.x_mm >= 0.0
                && r.y_mm >= 0.0
                && (r.x_mm + r.w_mm) * 1e-3 <= self.grid.nx as f64 * self.grid.dx_m * (1.0 + 1e-9)
                && (r.y_mm + r.h_mm) * 1e-3 <= self.grid.ny as f64 * self.grid.dy_m * (1.0 + 1e-9);
            check(ok, &format!("forward.defects[{i}]"), "rectangle outside the grid");
        }

        check(self.solver.lambda_21 >= 0.0, "solver.lambda_21", "must be >= 0");
        check(self.solver.lambda_2 >= 0.0, "solver.lambda_2", "must be >= 0");
        check(self.solver.rho_admm > 0.0, "solver.rho_admm", "must be > 0");
        check(self.solver.n_iter >= 1, "solver.n_iter", "must be >= 1");
        check(
            matches!(self.solver.grouping.as_str(), "joint-pixel" | "per-measurement"),
            "solver.grouping",
            "must be \"joint-pixel\" or \"per-measurement\"",
        );
        check(
            self.solver.t0_avg_frames >= 1
                && self.solver.t0_avg_frames <= self.forward.t0_frames.max(1),
            "solver.t0_avg_frames",
            "must be >= 1 and not exceed forward.t0_frames",
        );

        if self.stages.tune || self.tune.enabled {
            check(self.tune.n_agents >= 4, "tune.n_agents", "must be >= 4");
            check(self.tune.n_generations >= 1, "tune.n_generations", "must be >= 1");
            check(
                self.tune.f_weight > 0.0 && self.tune.f_weight <= 2.0,
                "tune.f_weight",
                "must lie in (0, 2]",
            );
            check(self.tune.cr > 0.0 && self.tune.cr <= 1.0, "tune.cr", "must lie in (0, 1]");
            for (i, b) in self.tune.bounds_log10.iter().enumerate() {
                check(
                    b[0] < b[1],
                    &format!("tune.bounds_log10[{i}]"),
                    "must satisfy lo < hi",
                );
            }
        }

        check(
            self.baseline.t_eval_s >= self.grid.dt_s
                && self.baseline.t_eval_s <= self.grid.nt as f64 * self.grid.dt_s,
            "baseline.t_eval_s",
            "outside the recorded time range",
        );
        check(
            self.baseline.f_ppt_hz >= 0.0 && self.baseline.f_ppt_hz <= 0.5 / self.grid.dt_s,
            "baseline.f_ppt_hz",
            "above the Nyquist limit",
        );
        let p = &self.baseline.pristine;
        check(
            p.w >= 1 && p.h >= 1 && p.x0 + p.w <= self.grid.nx && p.y0 + p.h <= self.grid.ny,
            "baseline.pristine",
            "region empty or outside the grid",
        );

        if errors.is_empty() {
            Ok(())
        } else {
            bail!("invalid configuration:\n  {}", errors.join("\n  "))
        }
    }

    pub fn measurement_grid(&self) -> Result<GridSpec> {
        Ok(GridSpec::new(
            self.grid.nx,
            self.grid.ny,
            self.grid.nt,
            self.grid.dx_m,
            self.grid.dy_m,
            self.grid.dt_s,
        )?)
    }

    pub fn material_spec(&self) -> Result<MaterialSpec> {
        Ok(MaterialSpec::new(
            self.material.alpha_m2_s,
            self.material.rho_kg_m3,
            self.material.cp_j_kg_k,
            self.material.k_w_m_k,
            self.material.thickness_m,
            self.material.reflection,
        )?)
    }

    /// Cluster lattice layout: configured, or the largest raster that fits
    /// the grid extent.
    pub fn pattern_layout(&self) -> (usize, usize) {
        let fit = |extent: f64| ((extent / self.pattern.d_spix_m) * (1.0 + 1e-12)) as usize;
        let rows = self.pattern.rows.unwrap_or_else(|| fit(self.grid.ny as f64 * self.grid.dy_m));
        let cols = self.pattern.cols.unwrap_or_else(|| fit(self.grid.nx as f64 * self.grid.dx_m));
        (rows, cols)
    }

    pub fn grouping(&self) -> Grouping {
        match self.solver.grouping.as_str() {
            "per-measurement" => Grouping::PerMeasurement,
            _ => Grouping::JointPixel,
        }
    }

    /// Defect rectangles in pixel coordinates.
    pub fn defect_rects_px(&self) -> Vec<(usize, usize, usize, usize)> {
        self.forward
            .defects
            .iter()
            .map(|r| {
                let x0 = (r.x_mm * 1e-3 / self.grid.dx_m).round() as usize;
                let y0 = (r.y_mm * 1e-3 / self.grid.dy_m).round() as usize;
                let w = (r.w_mm * 1e-3 / self.grid.dx_m).round().max(1.0) as usize;
                let h = (r.h_mm * 1e-3 / self.grid.dy_m).round().max(1.0) as usize;
                (
                    x0.min(self.grid.nx - 1),
                    y0.min(self.grid.ny - 1),
                    w.min(self.grid.nx - x0.min(self.grid.nx - 1)),
                    h.min(self.grid.ny - y0.min(self.grid.ny - 1)),
                )
            })
            .collect()
    }
}
