//! Executes one configured task and collects the files it produces.

use optdes::closed_form::{self, OfaatOutcome, TheoremDesign};
use optdes::design::{self, ContinuousDesign, EquivalenceReport, GlmCriterion};
use optdes::glmm::{self, RandomInterceptModel};
use optdes::io::{self, DesignDocument};
use optdes::optimize::{self, ExactOptOptions};
use optdes::priors::{self, Prior, Reference, SampleSpec};
use serde_json::{json, Value};

use crate::config::{BlockConfig, Construction, ReferenceConfig, RunConfig, Task};
use crate::exit::{self, CliError};

/// Files to write (name, contents), the summary paragraph and the exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<(String, String)>,
    pub summary: String,
    pub code: i32,
}

impl Outcome {
    fn ok(files: Vec<(String, String)>, summary: String) -> Self {
        Outcome { files, summary, code: 0 }
    }
}

fn point_theta(prior: &Prior, task: &str) -> Result<Vec<f64>, CliError> {
    match prior {
        Prior::Point { theta } => Ok(theta.clone()),
        _ => Err(CliError::validation(format!("task {task} needs a point prior"))),
    }
}

fn equivalence_json(r: &EquivalenceReport) -> Value {
    json!({
        "min_psi": r.min_psi,
        "argmin": r.argmin,
        "pass": r.is_optimal,
        "tol": r.tol,
        "support_psi": r.support_psi,
    })
}

fn verdict(r: &EquivalenceReport) -> String {
    format!(
        "The equivalence check {} (min psi {:.3e} at {:?}, tolerance {:.1e}).",
        if r.is_optimal { "passes" } else { "fails" },
        r.min_psi,
        r.argmin,
        r.tol
    )
}

fn design_files(cfg: &RunConfig, d: &ContinuousDesign, report: &EquivalenceReport, extra: Value) -> Vec<(String, String)> {
    let mut rep = json!({ "equivalence": equivalence_json(report) });
    if let (Value::Object(m), Value::Object(e)) = (&mut rep, extra) {
        m.extend(e);
    }
    let mut files = vec![
        ("design.csv".to_string(), io::design_to_csv(d)),
        ("design.json".to_string(), io::to_json(&DesignDocument::new(d, &cfg.model))),
        ("report.json".to_string(), io::to_json(&rep)),
    ];
    if cfg.output.sensitivity {
        files.push(("sensitivity.csv".to_string(), io::sensitivity_to_csv(report)));
    }
    files
}

fn block_model(cfg: &RunConfig, b: &BlockConfig) -> Result<RandomInterceptModel, CliError> {
    Ok(RandomInterceptModel::new(cfg.model.clone(), b.sigma2, b.m)?)
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = SampleSpec {
        n_draws: cfg.sample.n_draws,
        seed: cfg.seed,
        method: cfg.sample.method,
    };
    let name = cfg.task.name();
    match &cfg.task {
        Task::Optimize { options } => {
            let mut opts = options.clone();
            opts.seed = cfg.seed;
            opts.grid.seed = cfg.seed;
            let r = optimize::optimize_continuous(&cfg.model, &cfg.prior, &spec, &opts)?;
            let summary = format!(
                "Optimized a {}-point continuous design for the {} model with {} parameters; objective {:.10}. {}",
                r.design.support_size(),
                cfg.model.family().name(),
                cfg.model.p(),
                r.objective,
                verdict(&r.report)
            );
            let files = design_files(cfg, &r.design, &r.report, json!({"task": name, "objective": r.objective}));
            Ok(Outcome::ok(files, summary))
        }
        Task::OptimizeExact { n, method, starts } => {
            let opts = ExactOptOptions {
                n: *n,
                method: method.clone(),
                seed: cfg.seed,
                starts: *starts,
            };
            let r = optimize::optimize_exact(&cfg.model, &cfg.prior, &spec, &opts)?;
            let report = json!({"task": name, "objective": r.objective, "n": n, "distinct_points": r.design.points().len()});
            let summary = format!(
                "Found an exact {n}-trial design on {} distinct points with objective {:.10}.",
                r.design.points().len(),
                r.objective
            );
            Ok(Outcome::ok(
                vec![
                    ("exact.csv".to_string(), io::exact_to_csv(&r.design)),
                    ("report.json".to_string(), io::to_json(&report)),
                ],
                summary,
            ))
        }
        Task::Check { design: d, grid } => {
            d.check_region(cfg.model.region())?;
            let mut grid = grid.clone();
            grid.seed = cfg.seed;
            let c = priors::prior_criterion(&cfg.model, &cfg.prior, &spec)?;
            let objective = design::try_objective(&c, d)?;
            let r = design::equivalence_check(&c, d, &grid)?;
            let summary = format!("Checked a {}-point design with objective {objective:.10}. {}", d.support_size(), verdict(&r));
            let mut files = design_files(cfg, d, &r, json!({"task": name, "objective": objective}));
            files.retain(|(f, _)| f != "design.csv" && f != "design.json");
            Ok(Outcome::ok(files, summary))
        }
        Task::ClosedForm { construction, grid } => closed_form_task(cfg, *construction, grid, &spec),
        Task::Efficiency { design: d, reference } => {
            d.check_region(cfg.model.region())?;
            reference.check_region(cfg.model.region())?;
            let c = priors::prior_criterion(&cfg.model, &cfg.prior, &spec)?;
            let eff = design::criterion_efficiency(&c, d, reference)?;
            let report = json!({
                "task": name,
                "efficiency": eff,
                "objective_design": design::try_objective(&c, d)?,
                "objective_reference": design::try_objective(&c, reference)?,
            });
            let summary = format!("The design has D-efficiency {eff:.6} relative to the reference.");
            Ok(Outcome::ok(vec![("report.json".to_string(), io::to_json(&report))], summary))
        }
        Task::Effdist { design: d, reference, n_draws } => {
            d.check_region(cfg.model.region())?;
            let reference = match reference {
                ReferenceConfig::Oracle => Reference::Oracle,
                ReferenceConfig::Fixed { design } => Reference::Fixed(design.clone()),
            };
            let s = priors::efficiency_distribution(d, &reference, &cfg.model, &cfg.prior, *n_draws, cfg.seed)?;
            let summary = format!(
                "Efficiency over {n_draws} prior draws: min {:.4}, quartiles {:.4} / {:.4} / {:.4}, max {:.4}; {} draws redrawn.",
                s.min, s.q25, s.median, s.q75, s.max, s.rejected
            );
            Ok(Outcome::ok(
                vec![
                    ("ecdf.csv".to_string(), io::ecdf_to_csv(&s)),
                    ("ecdf.json".to_string(), io::to_json(&s)),
                ],
                summary,
            ))
        }
        Task::BlockOptimize { block, options } => {
            let rim = block_model(cfg, block)?;
            let theta = point_theta(&cfg.prior, name)?;
            let mut opts = options.clone();
            opts.seed = cfg.seed;
            opts.grid.seed = cfg.seed;
            let r = glmm::optimize_block_design(&rim, &theta, &block.method, &opts)?;
            let rep = json!({
                "task": name,
                "method": block.method.name(),
                "objective": r.objective,
                "equivalence": equivalence_json(&r.report),
            });
            let mut files = vec![
                ("block.csv".to_string(), io::block_to_csv(&r.design)),
                ("block.json".to_string(), io::to_json(&r.design)),
                ("report.json".to_string(), io::to_json(&rep)),
            ];
            if cfg.output.sensitivity {
                files.push(("sensitivity.csv".to_string(), io::sensitivity_to_csv(&r.report)));
            }
            let summary = format!(
                "Optimized a {}-block design (block size {}) under {}; objective {:.10}. {}",
                r.design.blocks().len(),
                block.m,
                block.method.name(),
                r.objective,
                verdict(&r.report)
            );
            Ok(Outcome::ok(files, summary))
        }
        Task::BlockCheck { block, design: d, grid } => {
            let rim = block_model(cfg, block)?;
            if d.m() != block.m {
                return Err(CliError::validation(format!("design blocks have {} runs, model says {}", d.m(), block.m)));
            }
            d.check_region(cfg.model.region())?;
            let theta = point_theta(&cfg.prior, name)?;
            let mut grid = grid.clone();
            grid.seed = cfg.seed;
            let r = glmm::block_equivalence_check(d, &rim, &theta, &block.method, &grid)?;
            let info = glmm::block_design_info(d, &rim, &theta, &block.method)?;
            let rep = json!({
                "task": name,
                "method": block.method.name(),
                "objective": design::d_objective(&info),
                "equivalence": equivalence_json(&r),
            });
            let mut files = vec![("report.json".to_string(), io::to_json(&rep))];
            if cfg.output.sensitivity {
                files.push(("sensitivity.csv".to_string(), io::sensitivity_to_csv(&r)));
            }
            let summary = format!("Checked a {}-block design under {}. {}", d.blocks().len(), block.method.name(), verdict(&r));
            Ok(Outcome::ok(files, summary))
        }
    }
}

fn closed_form_task(
    cfg: &RunConfig,
    construction: Construction,
    grid: &optdes::GridSpec,
    spec: &SampleSpec,
) -> Result<Outcome, CliError> {
    let name = cfg.task.name();
    let region = cfg.model.region();
    let (theorem, design, theta): (Option<TheoremDesign>, ContinuousDesign, Vec<f64>) = match construction {
        Construction::Logistic1d => {
            let theta = point_theta(&cfg.prior, name)?;
            if theta.len() != 2 {
                return Err(CliError::validation("the one-variable logistic design needs theta = (theta0, theta1)"));
            }
            let d = closed_form::logistic_1d_design(theta[0], theta[1], region)?;
            if d.fallback {
                log_note("the two-point design leaves the region; using the numerical optimum");
            }
            (None, d.design, theta)
        }
        Construction::UnboundedLogistic => {
            let theta = point_theta(&cfg.prior, name)?;
            let t = closed_form::yang_zhang_design(&theta, *cfg.model.link(), region)?;
            (Some(t.clone()), t.design, theta)
        }
        Construction::GammaOfaat => {
            let theta = point_theta(&cfg.prior, name)?;
            match closed_form::gamma_ofaat_design(&theta, *cfg.model.link())? {
                OfaatOutcome::Optimal(t) => (Some(t.clone()), t.design, theta),
                OfaatOutcome::ConditionFails(report) => {
                    let body = json!({"task": name, "construction": "gamma-ofaat", "condition": report});
                    return Ok(Outcome {
                        files: vec![("report.json".to_string(), io::to_json(&body))],
                        summary: format!(
                            "The one-factor-at-a-time design is not optimal: pairs {:?} violate the condition. {}",
                            report.violations, report.note
                        ),
                        code: exit::PRECONDITION,
                    });
                }
            }
        }
        Construction::PoissonMinimal => {
            let theta = point_theta(&cfg.prior, name)?;
            let t = closed_form::russell_poisson_design(&theta, region)?;
            (Some(t.clone()), t.design, theta)
        }
        Construction::PoissonBayesMinimal => {
            let t = closed_form::bayes_minimal_poisson_design(&cfg.prior, region)?;
            let theta = t.theta.clone();
            (Some(t.clone()), t.design, theta)
        }
    };
    design.check_region(region)?;
    let mut grid = grid.clone();
    grid.seed = cfg.seed;
    let c = GlmCriterion::local(&cfg.model, &theta)?;
    let r = design::equivalence_check(&c, &design, &grid)?;
    let mut extra = json!({"task": name, "objective": design::try_objective(&c, &design)?, "theta": theta});
    if matches!(construction, Construction::PoissonBayesMinimal) {
        extra["bayes_objective"] = json!(priors::bayes_objective(&design, &cfg.model, &cfg.prior, spec)?);
    }
    let mut files = design_files(cfg, &design, &r, extra);
    if let Some(t) = &theorem {
        files.push(("theorem.json".to_string(), io::to_json(t)));
    }
    let summary = format!(
        "Constructed a {}-point design in closed form at theta = {theta:?}. {}",
        design.support_size(),
        verdict(&r)
    );
    Ok(Outcome::ok(files, summary))
}

fn log_note(msg: &str) {
    eprintln!("note: {msg}");
}
