//! Time-loop orchestration and output writing.

use crate::config::{InitialDeformation, InitialPhase, RunConfig, Scheme};
use crate::error::CliError;
use crate::{csv, init, vtk};
use chve_core::diagnostics::{
    field_min_max, max_tensor_norm, median_abs_det_minus_one, DiagnosticsCtx, StepReport,
};
use chve_core::energy::build_split_ledger;
use chve_core::field::{Field, State};
use chve_core::mesh::{build_uniform_mesh, Mesh};
use chve_core::scheme_cs::{CsConfig, CsStepper};
use chve_core::scheme_dsav::{DsavConfig, DsavStepper};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

pub struct RunOutcome {
    pub reports: Vec<StepReport>,
    /// Minimum SAV bracket over the run (DSAV only).
    pub min_bracket: Option<f64>,
    pub final_state: State,
    pub final_beta: Option<f64>,
    pub csv_path: Option<PathBuf>,
}

/// Build the initial phase field and deformation gradient for a config.
pub fn initial_fields(config: &RunConfig, mesh: &Mesh) -> Result<(Field, Field), CliError> {
    let phi = match &config.initial {
        InitialPhase::Random {
            mean,
            amplitude,
            centered,
        } => init::random_phase_initial(mesh, *mean, *amplitude, config.seed, *centered),
        InitialPhase::Circles { centers, radius } => {
            init::circles_initial(mesh, centers, *radius)?
        }
    };
    let f = match config.deformation {
        InitialDeformation::Identity => {
            Field::constant_tensor(mesh, chve_core::tensor::Mat2::identity())
        }
        InitialDeformation::ShearByPhase => {
            init::sheared_deformation(mesh, config.a_shear, &phi)
        }
    };
    Ok((phi, f))
}

struct Output {
    csv: BufWriter<fs::File>,
    csv_path: PathBuf,
    dir: PathBuf,
    vtk_every: usize,
}

impl Output {
    fn open(config: &RunConfig) -> Result<Option<Output>, CliError> {
        let Some(dir) = &config.out_dir else {
            return Ok(None);
        };
        fs::create_dir_all(dir)?;
        let csv_path = dir.join("series.csv");
        let mut csv = BufWriter::new(fs::File::create(&csv_path)?);
        writeln!(csv, "{}", csv::CSV_HEADER)?;
        Ok(Some(Output {
            csv,
            csv_path,
            dir: dir.clone(),
            vtk_every: config.vtk_every,
        }))
    }

    fn record(&mut self, mesh: &Mesh, state: &State, report: &StepReport) -> Result<(), CliError> {
        writeln!(self.csv, "{}", csv::csv_row(report))?;
        if self.vtk_every > 0 && report.step % self.vtk_every == 0 {
            let path = self.dir.join(format!("snap_{:06}.vtk", report.step));
            let file = BufWriter::new(fs::File::create(path)?);
            vtk::write_vtk(file, mesh, state)?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<PathBuf, CliError> {
        self.csv.flush()?;
        Ok(self.csv_path)
    }
}

/// Step the configured scheme `config.steps` times, writing one CSV row per
/// step (plus the initial row) and VTK snapshots at the configured cadence.
pub fn run(config: &RunConfig) -> Result<RunOutcome, CliError> {
    config.validate()?;
    let mesh = build_uniform_mesh(config.nx, config.ny)?;
    let model = config.model()?;
    let diag = DiagnosticsCtx::new(&mesh)?;
    let (phi0, f0) = initial_fields(config, &mesh)?;
    let mut output = Output::open(config)?;

    let make_report = |step: usize,
                       state: &State,
                       lyapunov: f64,
                       beta: Option<f64>,
                       fp_iters: usize,
                       newton_iters_total: usize| {
        let (phi_min, phi_max) = field_min_max(&state.phi);
        StepReport {
            step,
            t: state.t,
            lyapunov,
            e_ch: diag.e_ch(&mesh, &model, &state.phi),
            e_el: diag.e_el(&mesh, &model, config.lambda, &state.phi, &state.f),
            mass: diag.mass(&state.phi),
            phi_min,
            phi_max,
            max_f: max_tensor_norm(&state.f),
            med_abs_det_minus_1: median_abs_det_minus_one(&mesh, &state.f),
            beta,
            fp_iters,
            newton_iters_total,
        }
    };

    let mut reports = Vec::with_capacity(config.steps + 1);
    let mut min_bracket: Option<f64> = None;

    let (final_state, final_beta) = match config.scheme {
        Scheme::Cs => {
            let ledger = build_split_ledger(&model)?;
            let cs_config = CsConfig::new(config.dt, config.nu, config.gamma, config.lambda);
            let stepper = CsStepper::new(&mesh, cs_config, model.clone(), ledger)?;
            let mut state = stepper.init_state(phi0, f0)?;
            let report = make_report(0, &state, stepper.lyapunov(&state), None, 0, 0);
            if let Some(out) = output.as_mut() {
                out.record(&mesh, &state, &report)?;
            }
            reports.push(report);
            for step in 1..=config.steps {
                let (next, stats) = stepper.step(&state)?;
                let report = make_report(
                    step,
                    &next,
                    stepper.lyapunov(&next),
                    None,
                    stats.fp_iters,
                    stats.newton_iters_total,
                );
                if let Some(out) = output.as_mut() {
                    out.record(&mesh, &next, &report)?;
                }
                reports.push(report);
                state = next;
            }
            (state, None)
        }
        Scheme::Dsav => {
            let dsav_config = DsavConfig::new(config.dt, config.nu, config.gamma, config.lambda);
            let stepper = DsavStepper::new(&mesh, dsav_config, model.clone())?;
            let mut state = stepper.init_state(phi0, f0)?;
            let report = make_report(
                0,
                &state.state,
                stepper.lyapunov(&state),
                Some(state.beta),
                0,
                0,
            );
            if let Some(out) = output.as_mut() {
                out.record(&mesh, &state.state, &report)?;
            }
            reports.push(report);
            for step in 1..=config.steps {
                let (next, stats) = stepper.step(&state)?;
                min_bracket = Some(min_bracket.map_or(stats.bracket, |m: f64| m.min(stats.bracket)));
                let report = make_report(
                    step,
                    &next.state,
                    stepper.lyapunov(&next),
                    Some(next.beta),
                    0,
                    0,
                );
                if let Some(out) = output.as_mut() {
                    out.record(&mesh, &next.state, &report)?;
                }
                reports.push(report);
                state = next;
            }
            let beta = state.beta;
            (state.state, Some(beta))
        }
    };

    let csv_path = output.map(Output::finish).transpose()?;
    Ok(RunOutcome {
        reports,
        min_bracket,
        final_state,
        final_beta,
        csv_path,
    })
}
