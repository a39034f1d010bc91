//! Registry of stored reference tables and the computations that reproduce them.

use optdes::closed_form;
use optdes::design::{self, equivalence_check, ContinuousDesign, ExactDesign, GlmCriterion};
use optdes::glmm::{self, Method, RandomInterceptModel};
use optdes::io::{self, fmt_f64};
use optdes::optimize::{self, ContinuousOptOptions, ExactMethod, ExactOptOptions};
use optdes::priors::{self, Prior, Reference, SampleSpec};
use optdes::{DesignRegion, Family, FamilyKind, GridSpec, Link, ModelBasis, ModelSpec};
use serde::Serialize;

use crate::exit::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Check {
    /// `|computed - stored| <= tol`.
    Within { tol: f64 },
    /// `computed <= stored`.
    AtMost,
    /// `computed >= stored`.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub label: String,
    pub computed: f64,
    pub stored: f64,
    pub check: Check,
    pub pass: bool,
}

impl Cell {
    fn new(label: impl Into<String>, computed: f64, stored: f64, check: Check) -> Self {
        let pass = match check {
            Check::Within { tol } => (computed - stored).abs() <= tol,
            Check::AtMost => computed <= stored,
            Check::AtLeast => computed >= stored,
        };
        Cell {
            label: label.into(),
            computed,
            stored,
            check,
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub id: String,
    pub title: String,
    pub cells: Vec<Cell>,
    pub pass: bool,
}

type Builder = fn() -> optdes::Result<Vec<Cell>>;

pub const REGISTRY: &[(&str, &str, Builder)] = &[
    ("logistic-1d-efficiency", "D-efficiencies (%) of one-variable logistic designs guessed at the wrong slope", logistic_1d_efficiency),
    ("logistic-b1b2", "First-order two-variable logistic designs, parameter sets B1 and B2", logistic_b1b2),
    ("logistic-b3b4", "First-order two-variable logistic designs, parameter sets B3 and B4", logistic_b3b4),
    ("logistic-unbounded", "Logistic designs with one unbounded variable: |a*| per factorial level", logistic_unbounded),
    ("gamma-first-order", "Gamma first-order designs with power link, theta = (1, chi, chi)", gamma_first_order),
    ("gamma-second-order", "Gamma second-order designs with power link kappa = 0.5", gamma_second_order),
    ("logistic-second-order-factorial", "D-efficiency (%) of the 3^2 factorial for second-order logistic models", logistic_second_order_factorial),
    ("poisson-minimal", "Minimally supported Poisson designs, theta = (0, chi, chi)", poisson_minimal),
    ("poisson-beta", "Efficiency distributions of prior-mean Poisson designs (N = 10000, seed 0)", poisson_beta),
    ("block-poisson", "Poisson random-intercept block designs and their cross-efficiencies", block_poisson),
];

pub fn ids() -> Vec<&'static str> {
    REGISTRY.iter().map(|(id, _, _)| *id).collect()
}

pub fn reproduce(id: &str) -> Result<Table, CliError> {
    let (id, title, build) = REGISTRY
        .iter()
        .find(|(i, _, _)| *i == id)
        .ok_or_else(|| CliError::validation(format!("unknown table {id:?}; known: {}", ids().join(", "))))?;
    let cells = build()?;
    Ok(Table {
        id: id.to_string(),
        title: title.to_string(),
        pass: cells.iter().all(|c| c.pass),
        cells,
    })
}

pub fn table_csv(t: &Table) -> String {
    let mut s = String::from("label,computed,stored,diff,check,pass\n");
    for c in &t.cells {
        let check = match c.check {
            Check::Within { tol } => format!("within {}", fmt_f64(tol)),
            Check::AtMost => "at_most".into(),
            Check::AtLeast => "at_least".into(),
        };
        s.push_str(&format!(
            "{},{},{},{},{check},{}\n",
            c.label,
            fmt_f64(c.computed),
            fmt_f64(c.stored),
            fmt_f64(c.computed - c.stored),
            c.pass
        ));
    }
    s
}

pub fn table_json(t: &Table) -> String {
    io::to_json(t)
}

pub fn table_text(t: &Table) -> String {
    let width = t.cells.iter().map(|c| c.label.len()).max().unwrap_or(5).max(5);
    let mut s = format!("{}: {}\n", t.id, t.title);
    s.push_str(&format!("{:width$}  {:>14}  {:>14}  {:>11}  result\n", "cell", "computed", "stored", "diff"));
    for c in &t.cells {
        s.push_str(&format!(
            "{:width$}  {:>14.6}  {:>14.6}  {:>11.2e}  {}\n",
            c.label,
            c.computed,
            c.stored,
            c.computed - c.stored,
            if c.pass { "ok" } else { "MISMATCH" }
        ));
    }
    let failed = t.cells.iter().filter(|c| !c.pass).count();
    s.push_str(&format!("{} of {} cells within tolerance\n", t.cells.len() - failed, t.cells.len()));
    s
}

fn square(k: usize) -> DesignRegion {
    DesignRegion::cube(k, -1.0, 1.0).expect("valid cube")
}

fn model(kind: FamilyKind, link: Link, basis: ModelBasis, region: DesignRegion) -> optdes::Result<ModelSpec> {
    ModelSpec::new(Family::new(kind), link, basis, region)
}

fn sym(c: f64) -> ContinuousDesign {
    ContinuousDesign::equally_weighted(vec![vec![-c], vec![c]]).expect("two distinct points")
}

fn pt(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{}", (v * 1e4).round() / 1e4)).collect();
    format!("({})", parts.join(" "))
}

fn nearest(d: &ContinuousDesign, x: &[f64]) -> (usize, f64) {
    d.points()
        .iter()
        .enumerate()
        .map(|(i, y)| (i, x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty design")
}

/// Weight at `x`, zero when no support point lies within `radius`.
fn weight_near(d: &ContinuousDesign, x: &[f64], radius: f64) -> f64 {
    let (i, dist) = nearest(d, x);
    if dist <= radius {
        d.weights()[i]
    } else {
        0.0
    }
}

/// Cells for each stored point: its nearest coordinates and weight.
fn design_cells(name: &str, d: &ContinuousDesign, stored: &[(Vec<f64>, f64)], tol: f64) -> Vec<Cell> {
    let mut cells = Vec::new();
    for (x, w) in stored {
        let (i, _) = nearest(d, x);
        let y = &d.points()[i];
        let tag = pt(x);
        for (j, (a, b)) in y.iter().zip(x).enumerate() {
            cells.push(Cell::new(format!("{name} {tag} x{}", j + 1), *a, *b, Check::Within { tol }));
        }
        cells.push(Cell::new(format!("{name} {tag} weight"), d.weights()[i], *w, Check::Within { tol }));
    }
    cells
}

fn local_opt(m: &ModelSpec, theta: &[f64]) -> optdes::Result<optimize::ContinuousResult> {
    optimize::optimize_continuous_local(m, theta, &ContinuousOptOptions::default())
}

fn logistic_1d_efficiency() -> optdes::Result<Vec<Cell>> {
    let m = ModelSpec::logistic_first_order(DesignRegion::cube(1, -10.0, 10.0)?)?;
    let c = closed_form::canonical_logistic_constant().c_star;
    let slopes = [0.5, 1.0, 2.0];
    let stored = [[100.0, 74.52, 41.52], [57.56, 100.0, 74.52], [5.72, 57.56, 100.0]];
    let mut cells = Vec::new();
    for (i, &t) in slopes.iter().enumerate() {
        for (j, &g) in slopes.iter().enumerate() {
            let e = 100.0 * design::d_efficiency(&sym(c / g), &sym(c / t), &m, &[0.0, t])?;
            cells.push(Cell::new(format!("true {t} design {g}"), e, stored[i][j], Check::Within { tol: 0.1 }));
        }
    }
    Ok(cells)
}

fn logistic_b1b2() -> optdes::Result<Vec<Cell>> {
    let m = ModelSpec::logistic_first_order(square(2))?;
    let b1 = local_opt(&m, &[0.0, 1.0, 1.0])?;
    let mut cells = design_cells(
        "B1",
        &b1.design,
        &[
            (vec![-1.0, -1.0], 0.204),
            (vec![1.0, -1.0], 0.296),
            (vec![-1.0, 1.0], 0.296),
            (vec![1.0, 1.0], 0.204),
        ],
        5e-3,
    );
    let theta = [0.0, 2.0, 2.0];
    let b2 = local_opt(&m, &theta)?;
    let c = GlmCriterion::local(&m, &theta)?;
    let a = 0.1178;
    for (name, pts, w) in [
        ("B2 w(1)", vec![vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, a], vec![-a, 1.0]], [0.327, 0.193, 0.240, 0.240]),
        ("B2 w(2)", vec![vec![a, -1.0], vec![1.0, -a], vec![1.0, -1.0], vec![-1.0, 1.0]], [0.240, 0.240, 0.193, 0.327]),
    ] {
        let stored = design::objective(&c, &ContinuousDesign::normalized(pts, w.to_vec())?);
        cells.push(Cell::new(format!("{name} objective"), b2.objective, stored, Check::Within { tol: 1e-4 }));
    }
    Ok(cells)
}

fn logistic_b3b4() -> optdes::Result<Vec<Cell>> {
    let m = ModelSpec::logistic_first_order(square(2))?;
    let b3 = local_opt(&m, &[2.0, 2.0, 2.0])?;
    let b4 = local_opt(&m, &[2.5, 2.0, 2.0])?;
    let third = 1.0 / 3.0;
    let mut cells = design_cells(
        "B3",
        &b3.design,
        &[
            (vec![-1.0, -0.737], 0.169),
            (vec![-1.0, 0.737], 0.331),
            (vec![-0.737, -1.0], 0.169),
            (vec![0.737, -1.0], 0.331),
        ],
        5e-3,
    );
    cells.extend(design_cells(
        "B4",
        &b4.design,
        &[(vec![-1.0, 0.5309], third), (vec![-1.0, -1.0], third), (vec![0.5309, -1.0], third)],
        5e-3,
    ));
    Ok(cells)
}

fn logistic_unbounded() -> optdes::Result<Vec<Cell>> {
    let region = DesignRegion::cube_with_free_last(2, -1.0, 1.0)?;
    let stored = [[2.2229, 0.2229], [1.6115, 0.3886], [0.6115, 1.3886], [0.3615, 1.6386]];
    let thetas = [[0.0, 1.0, 1.0], [0.0, 2.0, 2.0], [2.0, 2.0, 2.0], [2.5, 2.0, 2.0]];
    let mut cells = Vec::new();
    for (b, (theta, row)) in thetas.iter().zip(stored).enumerate() {
        let d = closed_form::yang_zhang_design(theta, Link::Logistic, &region)?;
        for (l, (a, s)) in d.a_star.iter().zip(row).enumerate() {
            cells.push(Cell::new(format!("B{} level {}", b + 1, l + 1), a.abs(), s, Check::Within { tol: 1e-3 }));
        }
    }
    Ok(cells)
}

fn gamma_first_order() -> optdes::Result<Vec<Cell>> {
    let m = model(
        FamilyKind::Gamma,
        Link::Power { kappa: 1.0 },
        ModelBasis::first_order(2)?,
        DesignRegion::cube(2, 0.0, 1.0)?,
    )?;
    let third = 1.0 / 3.0;
    let stored = [
        (0.1, [0.271, 0.252, 0.252, 0.225]),
        (0.5, [5.0 / 16.0, 9.0 / 32.0, 9.0 / 32.0, 1.0 / 8.0]),
        (1.0, [third, third, third, 0.0]),
    ];
    let corners = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
    let mut cells = Vec::new();
    for (chi, w) in stored {
        let r = local_opt(&m, &[1.0, chi, chi])?;
        for (x, s) in corners.iter().zip(w) {
            cells.push(Cell::new(
                format!("chi {chi} weight at {}", pt(x)),
                weight_near(&r.design, x, 1e-3),
                s,
                Check::Within { tol: 1e-3 },
            ));
        }
    }
    Ok(cells)
}

/// `(1, x1, x2, x1 x2, x1^2, x2^2)` from `(theta0, theta1, theta2, theta11, theta22, theta12)`.
fn reorder(t: [f64; 6]) -> Vec<f64> {
    vec![t[0], t[1], t[2], t[5], t[3], t[4]]
}

fn factorial3() -> ExactDesign {
    let lv = [-1.0, 0.0, 1.0];
    ExactDesign::new(lv.iter().flat_map(|&a| lv.iter().map(move |&b| vec![a, b])).collect(), vec![1; 9])
        .expect("nine distinct points")
}

fn gamma_second_order() -> optdes::Result<Vec<Cell>> {
    let m = model(FamilyKind::Gamma, Link::Power { kappa: 0.5 }, ModelBasis::second_order(2)?, square(2))?;
    let g1 = reorder([3.7, -0.46, -0.65, -0.19, -0.45, -0.57]);
    let g1_design = ExactDesign::new(
        vec![
            vec![-1.0, -1.0],
            vec![-1.0, 1.0],
            vec![1.0, -1.0],
            vec![1.0, 1.0],
            vec![0.11, 0.15],
            vec![0.26, 1.0],
            vec![1.0, 0.29],
        ],
        vec![1, 2, 2, 1, 1, 1, 1],
    )?;
    let g2_design = ExactDesign::new(
        vec![
            vec![-1.0, -1.0],
            vec![-1.0, 1.0],
            vec![1.0, -1.0],
            vec![1.0, 1.0],
            vec![-1.0, 0.0],
            vec![-0.01, -1.0],
            vec![0.07, 0.09],
            vec![0.08, 1.0],
            vec![1.0, 0.09],
        ],
        vec![1; 9],
    )?;
    let c = GlmCriterion::local(&m, &g1)?;
    let stored_obj = optimize::exact_objective(&c, &g1_design.trials());
    let opts = ExactOptOptions {
        n: 9,
        method: ExactMethod::GridExchange { grid_step: 0.01 },
        seed: 0,
        starts: 8,
    };
    let ex = optimize::optimize_exact(&m, &Prior::point(g1.clone()), &SampleSpec::lhs(1, 0), &opts)?;
    let eff = |d: &ExactDesign| {
        design::d_efficiency(&d.to_continuous(), &g1_design.to_continuous(), &m, &g1).map(|e| 100.0 * e)
    };
    Ok(vec![
        Cell::new("G1 exchange objective", ex.objective, stored_obj, Check::AtMost),
        Cell::new("G2 design efficiency (%)", eff(&g2_design)?, 97.32, Check::Within { tol: 0.1 }),
        Cell::new("3^2 factorial efficiency (%)", eff(&factorial3())?, 96.35, Check::Within { tol: 0.1 }),
    ])
}

fn logistic_second_order_factorial() -> optdes::Result<Vec<Cell>> {
    let m = model(FamilyKind::Binomial, Link::Logistic, ModelBasis::second_order(2)?, square(2))?;
    let f = factorial3().to_continuous();
    let mut cells = Vec::new();
    for (gamma, stored) in [(0.0, 97.4), (1.0, 74.2), (2.0, 38.0)] {
        let theta = reorder([1.0, 2.0 * gamma, 2.0 * gamma, -1.5 * gamma, 1.5 * gamma, -gamma]);
        let opt = local_opt(&m, &theta)?;
        let e = 100.0 * design::d_efficiency(&f, &opt.design, &m, &theta)?;
        cells.push(Cell::new(format!("gamma {gamma}"), e, stored, Check::Within { tol: 0.2 }));
    }
    Ok(cells)
}

fn poisson_first(k: usize) -> optdes::Result<ModelSpec> {
    model(FamilyKind::Poisson, Link::Log, ModelBasis::first_order(k)?, square(k))
}

fn poisson_minimal() -> optdes::Result<Vec<Cell>> {
    let m = poisson_first(2)?;
    let mut cells = Vec::new();
    for chi in 1..=5 {
        let theta = [0.0, chi as f64, chi as f64];
        let d = closed_form::russell_poisson_design(&theta, m.region())?;
        let r = equivalence_check(&GlmCriterion::local(&m, &theta)?, &d.design, &GridSpec::default())?;
        cells.push(Cell::new(format!("chi {chi} min psi"), r.min_psi, -design::tol_eq(3), Check::AtLeast));
        let has_corner = d.design.points().iter().any(|x| x == &vec![1.0, 1.0]);
        cells.push(Cell::new(format!("chi {chi} includes (1,1)"), f64::from(u8::from(has_corner)), 1.0, Check::AtLeast));
        let edge = 1.0 - 2.0 / chi as f64;
        cells.push(Cell::new(format!("chi {chi} weight at {}", pt(&[edge, 1.0])), weight_near(&d.design, &[edge, 1.0], 1e-12), 1.0 / 3.0, Check::Within { tol: 1e-12 }));
    }
    Ok(cells)
}

fn alpha_prior(alpha: f64) -> Prior {
    Prior::uniform_box(
        std::iter::once([0.0, 0.0])
            .chain((0..5).map(|i| if i % 2 == 0 { [1.0, 1.0 + alpha] } else { [-1.0 - alpha, -1.0] }))
            .collect(),
    )
}

fn poisson_beta() -> optdes::Result<Vec<Cell>> {
    let m = poisson_first(5)?;
    let mut cells = Vec::new();
    for (alpha, min, med) in [(2.0, 0.79, 0.93), (5.0, 0.53, 0.85), (10.0, 0.34, 0.80), (20.0, 0.21, 0.75)] {
        let prior = alpha_prior(alpha);
        let d = closed_form::bayes_minimal_poisson_design(&prior, m.region())?;
        let s = priors::efficiency_distribution(&d.design, &Reference::Oracle, &m, &prior, 10_000, 0)?;
        cells.push(Cell::new(format!("alpha {alpha} min"), s.min, min, Check::Within { tol: 0.02 }));
        cells.push(Cell::new(format!("alpha {alpha} median"), s.median, med, Check::Within { tol: 0.02 }));
    }
    Ok(cells)
}

fn block_poisson() -> optdes::Result<Vec<Cell>> {
    let base = model(FamilyKind::Poisson, Link::Log, ModelBasis::second_order(1)?, square(1))?;
    let rim = RandomInterceptModel::new(base, 0.5, 2)?;
    let theta = [0.0, 5.0, 1.0];
    let opts = ContinuousOptOptions {
        grid: glmm::block_grid(),
        ..ContinuousOptOptions::default()
    };
    let gee = Method::gee_exchangeable(0.5);
    let mut cells = Vec::new();
    let mut designs = Vec::new();
    let qlb = [(vec![0.10, 0.88], 0.5), (vec![0.75, 1.0], 0.5)];
    let geeb = [(vec![0.02, 0.84], 0.38), (vec![0.72, 1.0], 0.35), (vec![0.26, 1.0], 0.27)];
    for (method, stored) in [(Method::Ql, &qlb[..]), (Method::Mql, &qlb[..]), (gee.clone(), &geeb[..])] {
        let r = glmm::optimize_block_design(&rim, &theta, &method, &opts)?;
        cells.extend(design_cells(method.name(), &r.design.to_units(), stored, 0.02));
        cells.push(Cell::new(format!("{} min psi", method.name()), r.report.min_psi, -r.report.tol, Check::AtLeast));
        designs.push(r.design);
    }
    let (a, _) = glmm::block_efficiency(&designs[2], &designs[0], &rim, &theta, &Method::Ql)?;
    let (b, _) = glmm::block_efficiency(&designs[0], &designs[2], &rim, &theta, &gee)?;
    cells.push(Cell::new("GEE design under QL (det ratio)", a, 0.87, Check::Within { tol: 0.02 }));
    cells.push(Cell::new("QL design under GEE (det ratio)", b, 0.90, Check::Within { tol: 0.02 }));
    Ok(cells)
}
