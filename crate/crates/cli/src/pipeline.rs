//! Stage orchestration: generate -> simulate -> reconstruct -> tune -> score
//! -> baseline, with every intermediate written to the output directory and
//! listed in a manifest with a content hash.

use anyhow::{anyhow, bail, Context, Result};
use std::time::Instant;

use psr_core::autotune::{tune_regularization, SearchConfig};
use psr_core::baselines::{difference_thermogram, ppt_windowed, pristine_subtracted};
use psr_core::field::Field2D;
use psr_core::forward::{DefectMap, ForwardOperator, ForwardSpec};
use psr_core::grid::GridSpec;
use psr_core::metrics::{nmse, reconstruction_cost};
use psr_core::pattern::{cluster_to_field, generate_patterns, homogeneity, min_patterns, PatternSet};
use psr_core::psf::{psf_pulse, sigma_psf, PsfSpec, PsfStack};
use psr_core::rng::{derive_stream, rng_from_seed, standard_normal};
use psr_core::solver::{admm_reconstruct, ReconstructionResult, SolverConfig};
use psr_core::stack::ThermogramStack;
use psr_core::tgs;

use crate::artifacts::{Emitter, Manifest, StageRecord};
use crate::config::PipelineConfig;

// fixed per-stage seed offsets derived from the global seed
const STREAM_PATTERNS: u64 = 1;
const STREAM_MEASUREMENT: u64 = 1000; // + measurement index
const STREAM_PRETRIGGER: u64 = 5000; // + measurement index
const STREAM_BASELINE: u64 = 2000;
const STREAM_TUNE: u64 = 3000;

#[derive(Clone, Copy, Debug, Default)]
pub struct StageMask {
    pub patterns: bool,
    pub psf: bool,
    pub simulate: bool,
    pub reconstruct: bool,
    pub tune: bool,
    pub score: bool,
    pub baseline: bool,
}

impl StageMask {
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        StageMask {
            patterns: cfg.stages.patterns,
            psf: cfg.stages.psf,
            simulate: cfg.stages.simulate,
            reconstruct: cfg.stages.reconstruct,
            tune: cfg.stages.tune || cfg.tune.enabled,
            score: cfg.stages.score,
            baseline: cfg.stages.baseline,
        }
    }

    pub fn only(stage: &str) -> Self {
        let mut m = StageMask::default();
        match stage {
            "patterns" => m.patterns = true,
            "psf" => m.psf = true,
            "simulate" => m.simulate = true,
            "reconstruct" => m.reconstruct = true,
            "tune" => m.tune = true,
            "score" => m.score = true,
            "baseline" => m.baseline = true,
            _ => unreachable!("unknown stage {stage}"),
        }
        m
    }
}

/// An error annotated with the stage it occurred in.
#[derive(Debug)]
pub struct StageError {
    pub stage: String,
    pub source: anyhow::Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage {}: {:#}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {}

pub struct Runner {
    pub cfg: PipelineConfig,
    config_echo: String,
    command: String,
    serial: bool,
    emitter: Emitter,
    stage_records: Vec<StageRecord>,

    grid: GridSpec,
    psf: Option<PsfStack>,
    pattern_set: Option<PatternSet>,
    pattern_fields: Option<Vec<Field2D>>,
    truth: Option<DefectMap>,
    measurements: Option<Vec<ThermogramStack>>,
    reconstruction: Option<ReconstructionResult>,
}

impl Runner {
    pub fn new(
        cfg: PipelineConfig,
        config_echo: String,
        command: &str,
        serial: bool,
    ) -> Result<Self> {
        let grid = cfg.measurement_grid()?;
        let emitter = Emitter::new(&cfg.output.dir)?;
        Ok(Runner {
            cfg,
            config_echo,
            command: command.to_owned(),
            serial,
            emitter,
            stage_records: Vec::new(),
            grid,
            psf: None,
            pattern_set: None,
            pattern_fields: None,
            truth: None,
            measurements: None,
            reconstruction: None,
        })
    }

    pub fn run(mut self, mask: StageMask) -> Result<Manifest, StageError> {
        type Stage = (&'static str, bool, fn(&mut Runner) -> Result<String>);
        let stages: [Stage; 7] = [
            ("patterns", mask.patterns, Runner::stage_patterns),
            ("psf", mask.psf, Runner::stage_psf),
            ("simulate", mask.simulate, Runner::stage_simulate),
            ("reconstruct", mask.reconstruct, Runner::stage_reconstruct),
            ("tune", mask.tune, Runner::stage_tune),
            ("score", mask.score, Runner::stage_score),
            ("baseline", mask.baseline, Runner::stage_baseline),
        ];
        for (name, enabled, f) in stages {
            if !enabled {
                self.stage_records.push(StageRecord {
                    name: name.to_owned(),
                    status: "disabled".to_owned(),
                    wall_ms: 0,
                    error: None,
                });
                continue;
            }
            let start = Instant::now();
            match f(&mut self) {
                Ok(status) => self.stage_records.push(StageRecord {
                    name: name.to_owned(),
                    status,
                    wall_ms: start.elapsed().as_millis(),
                    error: None,
                }),
                Err(e) => {
                    self.stage_records.push(StageRecord {
                        name: name.to_owned(),
                        status: "failed".to_owned(),
                        wall_ms: start.elapsed().as_millis(),
                        error: Some(format!("{e:#}")),
                    });
                    // keep partial artifacts; the manifest carries the marker
                    let _ = self.write_manifest();
                    return Err(StageError { stage: name.to_owned(), source: e });
                }
            }
        }
        self.write_manifest().map_err(|e| StageError { stage: "manifest".to_owned(), source: e })
    }

    fn write_manifest(&mut self) -> Result<Manifest> {
        let manifest = Manifest {
            command: self.command.clone(),
            seed: self.cfg.seed,
            serial: self.serial,
            config_echo: self.config_echo.clone(),
            stages: self.stage_records.clone(),
            artifacts: self.emitter.artifacts.clone(),
        };
        let json = serde_json::to_string_pretty(&manifest)?;
        let path = self.emitter.path("manifest.json");
        std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }

    // ----- shared state getters -------------------------------------------

    fn psf_spec(&self) -> Result<PsfSpec> {
        Ok(PsfSpec::from_irradiance(
            self.cfg.material_spec()?,
            self.cfg.psf.irradiance_w_m2,
            self.cfg.psf.absorptivity,
            &self.grid,
            self.cfg.psf.pulse_s,
        )
        .map(|mut s| {
            s.series_tolerance = self.cfg.psf.series_tolerance;
            s
        })?)
    }

    fn require_psf(&mut self) -> Result<&PsfStack> {
        if self.psf.is_none() {
            let spec = self.psf_spec()?;
            let path = self
                .cfg
                .psf
                .path
                .clone()
                .unwrap_or_else(|| self.emitter.path("psf.tgs"));
            if !path.exists() {
                bail!(
                    "psf stack not available; run the psf stage first or set [psf] path (looked at {})",
                    path.display()
                );
            }
            let stack = tgs::load_stack(&path)?;
            if *stack.grid() != self.grid {
                bail!("psf stack at {} does not match the configured grid", path.display());
            }
            self.psf = Some(PsfStack::from_frames(
                self.grid,
                stack.frames().to_vec(),
                spec,
            )?);
        }
        Ok(self.psf.as_ref().unwrap())
    }

    fn require_patterns(&mut self) -> Result<&PatternSet> {
        if self.pattern_set.is_none() {
            let path = self
                .cfg
                .pattern
                .path
                .clone()
                .unwrap_or_else(|| self.emitter.path("patterns.txt"));
            if !path.exists() {
                bail!(
                    "pattern set not available; run the patterns stage first or set [pattern] path (looked at {})",
                    path.display()
                );
            }
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            self.pattern_set = Some(PatternSet::from_text(&text)?);
        }
        Ok(self.pattern_set.as_ref().unwrap())
    }

    fn require_pattern_fields(&mut self) -> Result<&[Field2D]> {
        if self.pattern_fields.is_none() {
            let grid = self.grid;
            let set = self.require_patterns()?.clone();
            let fields: Result<Vec<Field2D>, psr_core::PsrError> =
                (0..set.n_m).map(|m| cluster_to_field(&set, m, &grid)).collect();
            self.pattern_fields = Some(fields?);
        }
        Ok(self.pattern_fields.as_ref().unwrap())
    }

    fn require_truth(&mut self) -> Result<&DefectMap> {
        if self.truth.is_none() {
            let map = if let Some(path) = &self.cfg.forward.defect_map {
                DefectMap::binary(tgs::load_field(path)?)?
            } else if !self.cfg.forward.defects.is_empty() {
                DefectMap::from_rects(self.grid, &self.cfg.defect_rects_px())?
            } else {
                let path = self.emitter.path("truth.tgs");
                if !path.exists() {
                    bail!("no defect definition: set [forward] defects or defect_map");
                }
                DefectMap::binary(tgs::load_field(&path)?)?
            };
            if !map.grid().same_spatial(&self.grid) {
                bail!("defect map does not match the configured grid");
            }
            self.truth = Some(map);
        }
        Ok(self.truth.as_ref().unwrap())
    }

    fn measurement_file(m: usize) -> String {
        format!("meas_{m:02}.tgs")
    }

    fn require_measurements(&mut self) -> Result<&[ThermogramStack]> {
        if self.measurements.is_none() {
            let n_m = self.cfg.pattern.n_m;
            let dir = self
                .cfg
                .forward
                .measurement_dir
                .clone()
                .unwrap_or_else(|| self.emitter.out_dir.clone());
            let mut stacks = Vec::with_capacity(n_m);
            for m in 0..n_m {
                let path = dir.join(Self::measurement_file(m));
                if !path.exists() {
                    bail!(
                        "measurement {} not available; run the simulate stage first or set [forward] measurement_dir",
                        path.display()
                    );
                }
                stacks.push(tgs::load_stack(&path)?);
            }
            self.measurements = Some(stacks);
        }
        Ok(self.measurements.as_ref().unwrap())
    }

    fn t_diff_set(&mut self) -> Result<Vec<ThermogramStack>> {
        let n_avg = self.cfg.solver.t0_avg_frames;
        let meas = self.require_measurements()?;
        meas.iter().map(|s| Ok(s.subtract_t0(n_avg)?)).collect()
    }

    fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            lambda_21: self.cfg.solver.lambda_21,
            lambda_2: self.cfg.solver.lambda_2,
            rho_admm: self.cfg.solver.rho_admm,
            n_iter: self.cfg.solver.n_iter,
            grouping: self.cfg.grouping(),
            convergence_tol: self.cfg.solver.convergence_tol,
            nonneg: true,
        }
    }

    // ----- stages -----------------------------------------------------------

    fn stage_patterns(&mut self) -> Result<String> {
        if let Some(path) = self.cfg.pattern.path.clone() {
            let text =
                std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            self.pattern_set = Some(PatternSet::from_text(&text)?);
            return Ok("skipped".to_owned());
        }
        let (rows, cols) = self.cfg.pattern_layout();
        let seed = derive_stream(self.cfg.seed, STREAM_PATTERNS);
        let set = generate_patterns(self.cfg.pattern.beta, rows * cols, self.cfg.pattern.n_m, seed)?
            .with_layout(rows, cols)?
            .with_cluster_geometry(self.cfg.pattern.n_clustered, self.cfg.pattern.d_spix_m)?;
        self.emitter.write_text("patterns", "patterns.txt", &set.to_text())?;
        if self.cfg.output.images {
            for m in 0..set.n_m {
                self.emitter.write_text(
                    &format!("pattern_{m:02}_pbm"),
                    &format!("pattern_{m:02}.pbm"),
                    &set.pattern_to_pbm(m),
                )?;
            }
        }

        let rep = homogeneity(&set);
        let material = self.cfg.material_spec()?;
        let diffusion_len = (material.alpha * self.cfg.psf.pulse_s).sqrt();
        let report = format!(
            "pattern report\n\
             n_m={} n_pix_total={} beta={} n_target={} rows={} cols={} seed={}\n\
             min_patterns_for_coverage={}\n\
             share min={:.6} max={:.6} mean={:.6} std={:.6}\n\
             full_coverage={}\n\
             advisory: d_spix={:.3e} m vs 20*sqrt(alpha*t_pulse)={:.3e} m; \
             values well below favour three-dimensional heat flow (report only)\n",
            set.n_m,
            set.n_pix_total,
            set.beta,
            set.n_target(),
            set.rows,
            set.cols,
            set.seed,
            min_patterns(set.beta)?,
            rep.min_share,
            rep.max_share,
            rep.mean_share,
            rep.std_share,
            rep.full_coverage,
            set.d_spix,
            20.0 * diffusion_len,
        );
        self.emitter.write_text("pattern_report", "pattern_report.txt", &report)?;
        self.pattern_set = Some(set);
        Ok("ok".to_owned())
    }

    fn stage_psf(&mut self) -> Result<String> {
        let spec = self.psf_spec()?;
        if let Some(path) = self.cfg.psf.path.clone() {
            let stack = tgs::load_stack(&path)?;
            if *stack.grid() != self.grid {
                bail!("psf stack at {} does not match the configured grid", path.display());
            }
            self.psf = Some(PsfStack::from_frames(self.grid, stack.frames().to_vec(), spec)?);
            return Ok("skipped".to_owned());
        }
        let psf = psf_pulse(&spec, &self.grid)?;
        self.emitter.write_stack("psf", "psf.tgs", &psf.to_thermogram())?;
        let psf = PsfStack::from_frames(
            self.grid,
            quantized(&psf.to_thermogram())?.frames().to_vec(),
            spec,
        )?;
        if self.cfg.output.images {
            self.emitter.write_image(
                "psf_reference_pgm",
                "psf_reference.pgm",
                &psf.frame_field(psf.reference_frame_index()),
            )?;
        }
        self.psf = Some(psf);
        Ok("ok".to_owned())
    }

    fn stage_simulate(&mut self) -> Result<String> {
        if self.cfg.forward.measurement_dir.is_some() {
            self.require_measurements()?;
            return Ok("skipped".to_owned());
        }
        let grid = self.grid;
        let truth = self.require_truth()?.clone();
        self.emitter.write_field("truth", "truth.tgs", truth.field())?;
        let psf = self.require_psf()?.clone();
        let fields = self.require_pattern_fields()?.to_vec();
        let op = ForwardOperator::new(&psf)?;
        let t0 = Field2D::constant(GridSpec { nt: 1, ..grid }, self.cfg.forward.t0_k)?;
        let n_pre = self.cfg.forward.t0_frames;

        let sim_one = |m: usize, pattern: &Field2D| -> Result<ThermogramStack> {
            let fwd = ForwardSpec::new(
                self.cfg.forward.zeta,
                self.cfg.forward.noise_sigma_k,
                t0.clone(),
                derive_stream(self.cfg.seed, STREAM_MEASUREMENT + m as u64),
            )?;
            let post = op.simulate(pattern, &truth, &fwd)?;
            // pre-trigger segment: initial temperature plus camera noise
            let mut rng = rng_from_seed(derive_stream(self.cfg.seed, STREAM_PRETRIGGER + m as u64));
            let mut frames = Vec::with_capacity(n_pre + grid.nt);
            for _ in 0..n_pre {
                let mut f = t0.values().clone();
                if self.cfg.forward.noise_sigma_k > 0.0 {
                    for v in f.iter_mut() {
                        *v += self.cfg.forward.noise_sigma_k * standard_normal(&mut rng);
                    }
                }
                frames.push(f);
            }
            frames.extend(post.frames().iter().cloned());
            Ok(ThermogramStack::new(
                grid.with_nt(n_pre + grid.nt)?,
                frames,
                n_pre,
                self.cfg.psf.pulse_s,
            )?)
        };

        let mut stacks = Vec::with_capacity(fields.len());
        for (m, pattern) in fields.iter().enumerate() {
            let stack = sim_one(m, pattern)?;
            self.emitter.write_stack(
                &format!("measurement_{m:02}"),
                &Self::measurement_file(m),
                &stack,
            )?;
            stacks.push(quantized(&stack)?);
        }
        self.measurements = Some(stacks);
        Ok("ok".to_owned())
    }

    fn stage_reconstruct(&mut self) -> Result<String> {
        let t_diff = self.t_diff_set()?;
        let psf = self.require_psf()?.clone();
        let fields = self.require_pattern_fields()?.to_vec();
        let cfg = self.solver_config();
        let res = admm_reconstruct(&t_diff, &psf, &fields, &cfg)?;

        self.emitter.write_field("defect_map_rec", "defect_map_rec.tgs", res.defect_map.field())?;
        if self.cfg.output.images {
            self.emitter.write_image(
                "defect_map_rec_pgm",
                "defect_map_rec.pgm",
                res.defect_map.field(),
            )?;
        }

        // wall time is recorded in the manifest stage entry, not here, so
        // identical runs hash identically
        let mut report = format!(
            "reconstruction report\n\
             lambda_21={} lambda_2={} rho_admm={} n_iter={} grouping={:?} iterations={}\n\
             iter\tobjective\tprimal_residual\tdual_residual\n",
            cfg.lambda_21,
            cfg.lambda_2,
            cfg.rho_admm,
            cfg.n_iter,
            cfg.grouping,
            res.iterations,
        );
        for (i, (obj, (pr, du))) in
            res.objective_trace.iter().zip(res.residual_trace.iter()).enumerate()
        {
            report.push_str(&format!("{i}\t{obj:.9e}\t{pr:.6e}\t{du:.6e}\n"));
        }
        self.emitter.write_text("recon_report", "recon_report.txt", &report)?;
        self.reconstruction = Some(res);
        Ok("ok".to_owned())
    }

    fn stage_tune(&mut self) -> Result<String> {
        let t_diff = self.t_diff_set()?;
        let psf = self.require_psf()?.clone();
        let fields = self.require_pattern_fields()?.to_vec();
        let truth = self.require_truth()?.clone();
        let solver_defaults = self.solver_config();
        let search = SearchConfig {
            bounds: self.cfg.tune.bounds_log10,
            n_agents: self.cfg.tune.n_agents,
            n_generations: self.cfg.tune.n_generations,
            f_weight: self.cfg.tune.f_weight,
            cr: self.cfg.tune.cr,
            seed: derive_stream(self.cfg.seed, STREAM_TUNE),
            early_stop: self.cfg.tune.early_stop,
        };
        let result = tune_regularization(&t_diff, &psf, &fields, &truth, &solver_defaults, &search)?;

        // append-only audit log, one record per solve
        let mut log = String::new();
        for r in &result.log {
            log.push_str(&format!(
                "generation={} agent={} lambda21={:.6e} lambda2={:.6e} cost={:.6e}\n",
                r.generation, r.agent, r.point.0, r.point.1, r.cost,
            ));
        }
        self.emitter.write_text("tune_log", "tune_log.txt", &log)?;

        let mut summary = format!(
            "tune result\nlambda21_best={:.6e}\nlambda2_best={:.6e}\ncost_best={:.6e}\nevaluations={}\n\
             generation\tbest\tmean\n",
            result.lambda_best.0, result.lambda_best.1, result.cost_best, result.evaluations
        );
        for (g, (b, m)) in result.history.iter().enumerate() {
            summary.push_str(&format!("{g}\t{b:.6e}\t{m:.6e}\n"));
        }
        self.emitter.write_text("tune_result", "tune_result.txt", &summary)?;

        // re-solve at the tuned pair and keep the map
        let tuned_cfg = SolverConfig {
            lambda_21: result.lambda_best.0,
            lambda_2: result.lambda_best.1,
            ..solver_defaults
        };
        let res = admm_reconstruct(&t_diff, &psf, &fields, &tuned_cfg)?;
        self.emitter.write_field(
            "defect_map_tuned",
            "defect_map_tuned.tgs",
            res.defect_map.field(),
        )?;
        if self.cfg.output.images {
            self.emitter.write_image(
                "defect_map_tuned_pgm",
                "defect_map_tuned.pgm",
                res.defect_map.field(),
            )?;
        }
        Ok("ok".to_owned())
    }

    fn stage_score(&mut self) -> Result<String> {
        let truth = self.require_truth()?.clone();
        let psf = self.require_psf()?.clone();
        let mut rows = String::from("run_id\tlambda21\tlambda2\tC\tnmse\tpenalty\n");
        let mut scored = 0;
        let mut score_one = |run_id: &str, l21: f64, l2: f64, map: &DefectMap| -> Result<()> {
            let c = reconstruction_cost(map, &truth, &psf)?;
            let max = map.field().max();
            let rec_norm =
                if max > 0.0 { map.field().scale(1.0 / max)? } else { map.field().clone() };
            let err = nmse(truth.field(), &rec_norm)?;
            rows.push_str(&format!(
                "{run_id}\t{l21:.6e}\t{l2:.6e}\t{c:.6e}\t{err:.6e}\t{:.6e}\n",
                c - err
            ));
            Ok(())
        };

        if let Some(res) = &self.reconstruction {
            score_one("admm", res.config.lambda_21, res.config.lambda_2, &res.defect_map)?;
            scored += 1;
        } else {
            let path = self.emitter.path("defect_map_rec.tgs");
            if path.exists() {
                let map = DefectMap::new(tgs::load_field(&path)?)?;
                score_one(
                    "admm",
                    self.cfg.solver.lambda_21,
                    self.cfg.solver.lambda_2,
                    &map,
                )?;
                scored += 1;
            }
        }
        let tuned_path = self.emitter.path("defect_map_tuned.tgs");
        if tuned_path.exists() {
            let map = DefectMap::new(tgs::load_field(&tuned_path)?)?;
            // tuned lambdas from the tune summary are not re-parsed; record NaN
            // markers only if the summary is missing
            let (l21, l2) = read_tuned_lambdas(&self.emitter.path("tune_result.txt"))
                .unwrap_or((f64::NAN, f64::NAN));
            score_one("tuned", l21, l2, &map)?;
            scored += 1;
        }
        if scored == 0 {
            bail!("nothing to score: no reconstruction artifacts present");
        }
        self.emitter.write_text("scores", "scores.txt", &rows)?;
        Ok("ok".to_owned())
    }

    fn stage_baseline(&mut self) -> Result<String> {
        let grid = self.grid;
        let truth = self.require_truth()?.clone();
        let psf = self.require_psf()?.clone();
        let op = ForwardOperator::new(&psf)?;
        // homogeneous illumination (beta = 1) of the whole ROI
        let pattern = Field2D::constant(GridSpec { nt: 1, ..grid }, 1.0)?;
        let t0 = Field2D::constant(GridSpec { nt: 1, ..grid }, self.cfg.forward.t0_k)?;
        let fwd = ForwardSpec::new(
            self.cfg.forward.zeta,
            self.cfg.forward.noise_sigma_k,
            t0.clone(),
            derive_stream(self.cfg.seed, STREAM_BASELINE),
        )?;
        let meas = op.simulate(&pattern, &truth, &fwd)?;
        // synthetic T_meas carries T0 exactly; subtract it for T_diff
        let frames = meas.frames().iter().map(|f| f - t0.values()).collect();
        let t_diff = ThermogramStack::new(grid, frames, 0, self.cfg.psf.pulse_s)?;

        let diff = difference_thermogram(&t_diff, self.cfg.baseline.t_eval_s)?;
        self.emitter.write_field("baseline_tdiff", "baseline_tdiff.tgs", &diff)?;

        let pr = &self.cfg.baseline.pristine;
        let sub = pristine_subtracted(
            &t_diff,
            (pr.x0, pr.y0, pr.w, pr.h),
            self.cfg.baseline.t_eval_s,
        )?;
        self.emitter.write_field("baseline_pristine_sub", "baseline_pristine_sub.tgs", &sub)?;

        let ppt_res = ppt_windowed(&t_diff, self.cfg.baseline.f_ppt_hz, self.cfg.baseline.hann)?;
        self.emitter.write_field("ppt_amplitude", "ppt_amplitude.tgs", &ppt_res.amplitude)?;
        self.emitter.write_field("ppt_phase", "ppt_phase.tgs", &ppt_res.phase)?;
        if self.cfg.output.images {
            self.emitter.write_image("baseline_tdiff_pgm", "baseline_tdiff.pgm", &diff)?;
            self.emitter.write_image(
                "baseline_pristine_sub_pgm",
                "baseline_pristine_sub.pgm",
                &sub,
            )?;
            self.emitter.write_image("ppt_amplitude_pgm", "ppt_amplitude.pgm", &ppt_res.amplitude)?;
            self.emitter.write_image("ppt_phase_pgm", "ppt_phase.pgm", &ppt_res.phase)?;
        }
        let sigma = sigma_psf(&psf, psf.reference_frame_index())?;
        let report = format!(
            "baseline report\n\
             t_eval_s={}\nrequested_f_ppt_hz={}\nevaluated_bin={}\nevaluated_f_hz={}\nhann={}\n\
             sigma_psf_m={sigma:.6e}\n",
            self.cfg.baseline.t_eval_s,
            self.cfg.baseline.f_ppt_hz,
            ppt_res.bin,
            ppt_res.frequency,
            self.cfg.baseline.hann,
        );
        self.emitter.write_text("baseline_report", "baseline_report.txt", &report)?;
        Ok("ok".to_owned())
    }

    /// Fit the defect contrast on one stored measurement; subcommand-only.
    pub fn fit_zeta_command(mut self, measurement: usize) -> Result<Manifest, StageError> {
        let run = |r: &mut Runner| -> Result<String> {
            if measurement >= r.cfg.pattern.n_m {
                bail!("measurement index {measurement} out of range");
            }
            let truth = r.require_truth()?.clone();
            let psf = r.require_psf()?.clone();
            let fields = r.require_pattern_fields()?.to_vec();
            let meas = r.require_measurements()?[measurement].clone();
            // post-trigger portion on the PSF time base
            let post = ThermogramStack::new(
                r.grid,
                meas.frames()[meas.t0_frames()..].to_vec(),
                0,
                meas.pulse_length(),
            )?;
            let t0 = Field2D::constant(GridSpec { nt: 1, ..r.grid }, r.cfg.forward.t0_k)?;
            let op = ForwardOperator::new(&psf)?;
            let (zeta, r2) =
                op.fit_zeta(&post, &fields[measurement], &truth, &t0)?;
            let text = format!(
                "zeta fit\nmeasurement={measurement}\nzeta={zeta:.9e}\nr_squared={r2:.9e}\n"
            );
            r.emitter.write_text("zeta_fit", "zeta_fit.txt", &text)?;
            println!("zeta = {zeta:.6} (R^2 = {r2:.6})");
            Ok("ok".to_owned())
        };
        let start = Instant::now();
        let outcome = run(&mut self);
        let record = match &outcome {
            Ok(status) => StageRecord {
                name: "fit-zeta".to_owned(),
                status: status.clone(),
                wall_ms: start.elapsed().as_millis(),
                error: None,
            },
            Err(e) => StageRecord {
                name: "fit-zeta".to_owned(),
                status: "failed".to_owned(),
                wall_ms: start.elapsed().as_millis(),
                error: Some(format!("{e:#}")),
            },
        };
        self.stage_records.push(record);
        let manifest =
            self.write_manifest().map_err(|e| StageError { stage: "manifest".to_owned(), source: e });
        match outcome {
            Ok(_) => manifest,
            Err(e) => Err(StageError { stage: "fit-zeta".to_owned(), source: e }),
        }
    }
}

/// Round-trips a stack through the on-disk 32-bit representation so that
/// in-memory state matches what a later run would load from the artifact.
fn quantized(stack: &ThermogramStack) -> Result<ThermogramStack> {
    let bytes = tgs::stack_to_bytes(stack)?;
    Ok(tgs::stack_from_bytes(&bytes, std::path::Path::new("<memory>"))?)
}

fn read_tuned_lambdas(path: &std::path::Path) -> Result<(f64, f64)> {
    let text = std::fs::read_to_string(path)?;
    let mut l21 = None;
    let mut l2 = None;
    for line in text.lines() {
        if let Some(v) = line.strip_prefix("lambda21_best=") {
            l21 = v.parse().ok();
        }
        if let Some(v) = line.strip_prefix("lambda2_best=") {
            l2 = v.parse().ok();
        }
    }
    match (l21, l2) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(anyhow!("tune summary incomplete")),
    }
}
