//! `markov-comb`: every library operation over JSON files, with exact
//! rationals on the wire and deterministic output.
//!
//! Exit codes: 0 on success, 1 on domain errors (inconsistent inputs, empty
//! parameter sets, invalid trees), 2 on usage errors including malformed
//! input JSON. Diagnostics go to standard error as
//! `{"error": code, "detail": text}`.

mod registry;

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use markov_comb::parametric::{
    expfam_combination_dim, mixture, mixture_via_chain, ModelError, ParametricModel, Polynomial,
};
use markov_comb::rational::{format_decimal, format_rat, parse_rat, Rat};
use markov_comb::{
    build_horn_pair, check_copula, check_invariance, density_from_copula, first_disagreement,
    induced_action_on_m, induced_action_on_product, left_combine, mle, product_copula, project,
    right_combine, sample_meta_star_many, sample_structured_super_many, staged_combine, star,
    transport_fn, Axis, Category, CategoryMapping, CategorySet, CombineError, CopulaError,
    CoreError, DataVector, DiscreteCopula, Dist, FiniteAction, IndexedVector, InvarianceError,
    MleError, ParamTransport, ProductIndex, Sampler, SamplingError, StagedTree, TreeError,
};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

/// A reportable failure: usage problems exit 2, domain problems exit 1.
pub enum Failure {
    Usage(String),
    Domain { code: &'static str, detail: String },
}

pub trait DomainCode: fmt::Display {
    fn code(&self) -> &'static str;
}

macro_rules! domain_codes {
    ($($ty:ty => $code:literal),+ $(,)?) => {$(
        impl DomainCode for $ty {
            fn code(&self) -> &'static str {
                $code
            }
        }
    )+};
}

domain_codes! {
    CoreError => "core",
    CombineError => "combine",
    ModelError => "model",
    TreeError => "stagedtree",
    CopulaError => "copula",
    MleError => "mle",
    InvarianceError => "invariance",
    SamplingError => "sampling",
}

impl Failure {
    pub fn usage(detail: impl Into<String>) -> Self {
        Failure::Usage(detail.into())
    }

    pub fn domain(e: impl DomainCode) -> Self {
        Failure::Domain {
            code: e.code(),
            detail: e.to_string(),
        }
    }

    fn report(&self) -> i32 {
        let (code, detail, exit) = match self {
            Failure::Usage(detail) => ("usage", detail.as_str(), 2),
            Failure::Domain { code, detail } => (*code, detail.as_str(), 1),
        };
        eprintln!("{}", json!({"error": code, "detail": detail}));
        exit
    }
}

pub fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = read_text(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("malformed JSON in {}: {e}", path.display())))
}

fn parse_theta(text: &str) -> Result<Vec<Rat>, Failure> {
    text.split(',')
        .map(str::trim)
        .filter(|part| !part.is_empty())
        .map(|part| {
            parse_rat(part).map_err(|e| Failure::usage(format!("bad rational {part:?}: {e}")))
        })
        .collect()
}

fn emit(value: &impl Serialize) {
    println!("{}", serde_json::to_string(value).expect("serializable output"));
}

/// A vector rendered with decimal entries, used when `--digits` is given.
fn emit_decimal(index: &CategorySet, entries: &[Rat], digits: usize) {
    let entries: Vec<String> = entries.iter().map(|e| format_decimal(e, digits)).collect();
    emit(&json!({"index": index.names(), "entries": entries}));
}

#[derive(Parser)]
#[command(name = "markov-comb", version, about = "Markov combinations of categorical models")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Left,
    Right,
    Star,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    I,
    J,
}

#[derive(Subcommand)]
enum Cmd {
    /// Aggregate a vector along a category mapping.
    Aggregate { vector: PathBuf, mapping: PathBuf },
    /// Enumerate the mapping product of two category mappings.
    ProductIndex { p: PathBuf, q: PathBuf },
    /// Decide whether two vectors are consistent w.r.t. the mappings.
    CheckConsistency {
        f: PathBuf,
        g: PathBuf,
        p: PathBuf,
        q: PathBuf,
    },
    /// Combine two consistent vectors over the mapping product.
    Combine {
        #[arg(long, value_enum)]
        variant: VariantArg,
        f: PathBuf,
        g: PathBuf,
        p: PathBuf,
        q: PathBuf,
    },
    /// Project a vector on the mapping product back to one component.
    Project {
        vector: PathBuf,
        p: PathBuf,
        q: PathBuf,
        #[arg(long, value_enum)]
        axis: AxisArg,
    },
    /// Evaluate the mixture of two registry models at (theta, lambda).
    Mixture {
        #[arg(long)]
        f: String,
        #[arg(long)]
        g: String,
        #[arg(long)]
        theta: String,
        #[arg(long)]
        lambda: String,
        /// Route through the two-state chain construction instead.
        #[arg(long)]
        via_chain: bool,
        /// Emit decimal entries with this many places instead of rationals.
        #[arg(long, num_args = 0..=1, default_missing_value = "12")]
        digits: Option<usize>,
    },
    /// Discrete copulas: validation, products, densities.
    Copula {
        #[command(subcommand)]
        cmd: CopulaCmd,
    },
    /// Staged trees: validation, path models, combination.
    Stagedtree {
        #[command(subcommand)]
        cmd: TreeCmd,
    },
    /// Closed-form maximum likelihood estimate for combined models.
    Mle {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        mapping_i: PathBuf,
        #[arg(long)]
        mapping_j: PathBuf,
        /// Also emit the Horn pair certifying the estimator.
        #[arg(long)]
        emit_horn: bool,
    },
    /// Group actions: invariance checking and induced actions.
    Invariance {
        #[command(subcommand)]
        cmd: InvarianceCmd,
    },
    /// Draw seeded samples from a model or a combination of models.
    Sample {
        /// Registry spec, or `meta-star` / `structured-super` with
        /// component flags.
        #[arg(long)]
        model: String,
        #[arg(long)]
        f: Option<String>,
        #[arg(long)]
        h: Option<String>,
        #[arg(long)]
        g: Option<String>,
        #[arg(long)]
        p: Option<PathBuf>,
        #[arg(long)]
        q: Option<PathBuf>,
        /// Full parameter point, comma-separated rationals.
        #[arg(long)]
        theta: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Write draws here (one JSON object per line) instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parameter count of a combination, or of a registry model.
    Dim {
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        p: Option<PathBuf>,
        #[arg(long)]
        q: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CopulaCmd {
    /// Check conditions (C1)-(C3) on a grid without rejecting it.
    Validate { grid: PathBuf },
    /// Product of two square copulas via their bistochastic matrices.
    Product { a: PathBuf, b: PathBuf },
    /// Density of a copula on the pair index.
    Density { copula: PathBuf },
}

#[derive(Subcommand)]
enum TreeCmd {
    /// Report whether the tree satisfies the stage condition.
    Validate { tree: PathBuf },
    /// Path model of a staged tree: description, or evaluation at theta.
    Model {
        tree: PathBuf,
        #[arg(long)]
        theta: Option<String>,
        #[arg(long, num_args = 0..=1, default_missing_value = "12")]
        digits: Option<usize>,
    },
    /// Combine two decomposed staged trees along a leaf bijection.
    Combine {
        tree1: PathBuf,
        tree2: PathBuf,
        /// Cut vertices of the first tree, comma-separated.
        #[arg(long)]
        cut1: String,
        /// Cut vertices of the second tree, comma-separated.
        #[arg(long)]
        cut2: String,
        /// Leaf bijection as a category mapping JSON.
        #[arg(long)]
        phi: PathBuf,
    },
}

#[derive(Subcommand)]
enum InvarianceCmd {
    /// Check model invariance under an action with a polynomial transport.
    Check {
        #[arg(long)]
        model: String,
        #[arg(long)]
        action: PathBuf,
        /// JSON `{element: [[{"coef": "...", "powers": [...]}, ...], ...]}`
        /// giving each coordinate of the transported parameter.
        #[arg(long)]
        transport: PathBuf,
        #[arg(long, default_value_t = 64)]
        points: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Induced action on the metacategories or on the mapping product.
    Induced {
        #[arg(long)]
        action_i: PathBuf,
        #[arg(long)]
        action_j: PathBuf,
        #[arg(long)]
        p: PathBuf,
        #[arg(long)]
        q: PathBuf,
        #[arg(long, value_enum, default_value = "product")]
        on: InducedTarget,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum InducedTarget {
    M,
    Product,
}

fn main() {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => {}
        Err(failure) => std::process::exit(failure.report()),
    }
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Aggregate { vector, mapping } => {
            let v: IndexedVector = read_json(&vector)?;
            let p: CategoryMapping = read_json(&mapping)?;
            emit(&v.aggregate(&p).map_err(Failure::domain)?);
            Ok(())
        }
        Cmd::ProductIndex { p, q } => {
            let p: CategoryMapping = read_json(&p)?;
            let q: CategoryMapping = read_json(&q)?;
            let prod = ProductIndex::new(&p, &q).map_err(Failure::domain)?;
            let pairs: Vec<_> = prod
                .triple_positions()
                .iter()
                .map(|&(kt, it, jt)| {
                    json!({
                        "i": p.domain().get(it).unwrap().as_str(),
                        "j": q.domain().get(jt).unwrap().as_str(),
                        "m": p.codomain().get(kt).unwrap().as_str(),
                    })
                })
                .collect();
            emit(&json!({
                "index": prod.index().names(),
                "cardinality": prod.cardinality(),
                "pairs": pairs,
            }));
            Ok(())
        }
        Cmd::CheckConsistency { f, g, p, q } => {
            let f: IndexedVector = read_json(&f)?;
            let g: IndexedVector = read_json(&g)?;
            let prod = product_of(&p, &q)?;
            match first_disagreement(&f, &g, &prod).map_err(Failure::domain)? {
                None => emit(&json!({"consistent": true})),
                Some((k, left, right)) => emit(&json!({
                    "consistent": false,
                    "metacategory": k.as_str(),
                    "left": format_rat(&left),
                    "right": format_rat(&right),
                })),
            }
            Ok(())
        }
        Cmd::Combine { variant, f, g, p, q } => {
            let f: IndexedVector = read_json(&f)?;
            let g: IndexedVector = read_json(&g)?;
            let prod = product_of(&p, &q)?;
            let combined = match variant {
                VariantArg::Left => left_combine(&f, &g, &prod),
                VariantArg::Right => right_combine(&f, &g, &prod),
                VariantArg::Star => star(&f, &g, &prod),
            }
            .map_err(Failure::domain)?;
            emit(&combined);
            Ok(())
        }
        Cmd::Project { vector, p, q, axis } => {
            let v: IndexedVector = read_json(&vector)?;
            let prod = product_of(&p, &q)?;
            let axis = match axis {
                AxisArg::I => Axis::I,
                AxisArg::J => Axis::J,
            };
            emit(&project(&v, &prod, axis).map_err(Failure::domain)?);
            Ok(())
        }
        Cmd::Mixture {
            f,
            g,
            theta,
            lambda,
            via_chain,
            digits,
        } => {
            let f = registry::parse_model(&f)?;
            let g = registry::parse_model(&g)?;
            let m = if via_chain {
                mixture_via_chain(&f, &g)
            } else {
                mixture(&f, &g)
            }
            .map_err(Failure::domain)?;
            let mut point = parse_theta(&theta)?;
            point.push(parse_rat(&lambda).map_err(|e| Failure::usage(e.to_string()))?);
            let d = m.eval(&point).map_err(Failure::domain)?;
            match digits {
                Some(places) => emit_decimal(d.index(), d.entries(), places),
                None => emit(&d),
            }
            Ok(())
        }
        Cmd::Copula { cmd } => run_copula(cmd),
        Cmd::Stagedtree { cmd } => run_tree(cmd),
        Cmd::Mle {
            data,
            mapping_i,
            mapping_j,
            emit_horn,
        } => {
            let x: IndexedVector = read_json(&data)?;
            let x = DataVector::new(x).map_err(Failure::domain)?;
            let p: CategoryMapping = read_json(&mapping_i)?;
            let q: CategoryMapping = read_json(&mapping_j)?;
            let estimate = mle(&x, &p, &q).map_err(Failure::domain)?;
            if emit_horn {
                let horn = build_horn_pair(&p, &q).map_err(Failure::domain)?;
                emit(&json!({"estimate": estimate, "horn": horn}));
            } else {
                emit(&estimate);
            }
            Ok(())
        }
        Cmd::Invariance { cmd } => run_invariance(cmd),
        Cmd::Sample {
            model,
            f,
            h,
            g,
            p,
            q,
            theta,
            n,
            seed,
            out,
        } => run_sample(model, f, h, g, p, q, &theta, n, seed, out),
        Cmd::Dim { model, p, q } => match (model, p, q) {
            (None, Some(p), Some(q)) => {
                let p: CategoryMapping = read_json(&p)?;
                let q: CategoryMapping = read_json(&q)?;
                let (dim, ambient) = expfam_combination_dim(&p, &q).map_err(Failure::domain)?;
                emit(&json!({"dim": dim, "ambient_dim": ambient}));
                Ok(())
            }
            (Some(spec), None, None) => {
                let m = registry::parse_model(&spec)?;
                emit(&json!({"dim": m.dim()}));
                Ok(())
            }
            _ => Err(Failure::usage(
                "dim takes either --model, or --p and --q".to_string(),
            )),
        },
    }
}

fn product_of(p: &Path, q: &Path) -> Result<ProductIndex, Failure> {
    let p: CategoryMapping = read_json(p)?;
    let q: CategoryMapping = read_json(q)?;
    ProductIndex::new(&p, &q).map_err(Failure::domain)
}

fn run_copula(cmd: CopulaCmd) -> Result<(), Failure> {
    match cmd {
        CopulaCmd::Validate { grid } => {
            #[derive(serde::Deserialize)]
            struct RawGrid {
                values: Vec<Vec<String>>,
            }
            let raw: RawGrid = read_json(&grid)?;
            let mut values = Vec::with_capacity(raw.values.len());
            for row in &raw.values {
                let mut out = Vec::with_capacity(row.len());
                for cell in row {
                    out.push(
                        parse_rat(cell)
                            .map_err(|e| Failure::usage(format!("bad rational {cell:?}: {e}")))?,
                    );
                }
                values.push(out);
            }
            match check_copula(&values).map_err(Failure::domain)? {
                None => emit(&json!({"valid": true})),
                Some(violation) => {
                    emit(&json!({"valid": false, "violation": violation.to_string()}))
                }
            }
            Ok(())
        }
        CopulaCmd::Product { a, b } => {
            let a: DiscreteCopula = read_json(&a)?;
            let b: DiscreteCopula = read_json(&b)?;
            emit(&product_copula(&a, &b).map_err(Failure::domain)?);
            Ok(())
        }
        CopulaCmd::Density { copula } => {
            let c: DiscreteCopula = read_json(&copula)?;
            emit(&density_from_copula(&c).map_err(Failure::domain)?);
            Ok(())
        }
    }
}

/// Accepts either a bare tree or the `{"tree": ..., "relabel": ...}` object
/// that `stagedtree combine` emits.
fn read_tree(path: &Path) -> Result<StagedTree, Failure> {
    let text = read_text(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("malformed JSON in {}: {e}", path.display())))?;
    let tree_value = match value.get("tree") {
        Some(inner) => inner.clone(),
        None => value,
    };
    serde_json::from_value(tree_value)
        .map_err(|e| Failure::usage(format!("not a staged tree in {}: {e}", path.display())))
}

fn run_tree(cmd: TreeCmd) -> Result<(), Failure> {
    match cmd {
        TreeCmd::Validate { tree } => {
            let t = read_tree(&tree)?;
            match t.stage_violation() {
                None => {
                    let paths = t.path_index().map_err(Failure::domain)?;
                    emit(&json!({
                        "staged": true,
                        "paths": paths.names(),
                        "free_labels": t.free_labels().map_err(Failure::domain)?,
                    }));
                }
                Some((a, b)) => {
                    emit(&json!({"staged": false, "violation": [a, b]}));
                }
            }
            Ok(())
        }
        TreeCmd::Model { tree, theta, digits } => {
            let t = read_tree(&tree)?;
            let model = t.model().map_err(Failure::domain)?;
            match theta {
                Some(text) => {
                    let point = parse_theta(&text)?;
                    let d = model.eval(&point).map_err(Failure::domain)?;
                    match digits {
                        Some(places) => emit_decimal(d.index(), d.entries(), places),
                        None => emit(&d),
                    }
                }
                None => emit(&json!({
                    "dim": model.dim(),
                    "free_labels": t.free_labels().map_err(Failure::domain)?,
                    "paths": model.index().names(),
                })),
            }
            Ok(())
        }
        TreeCmd::Combine {
            tree1,
            tree2,
            cut1,
            cut2,
            phi,
        } => {
            let t1 = read_tree(&tree1)?;
            let t2 = read_tree(&tree2)?;
            let cut1: Vec<&str> = cut1.split(',').map(str::trim).collect();
            let cut2: Vec<&str> = cut2.split(',').map(str::trim).collect();
            let dec1 = t1.decompose(&cut1).map_err(Failure::domain)?;
            let dec2 = t2.decompose(&cut2).map_err(Failure::domain)?;
            let phi: CategoryMapping = read_json(&phi)?;
            let comb = staged_combine(&t1, &dec1, &t2, &dec2, &phi).map_err(Failure::domain)?;
            emit(&json!({
                "tree": comb.tree(),
                "relabel": comb.relabel(),
                "pairs": comb.pairs(),
            }));
            Ok(())
        }
    }
}

fn run_invariance(cmd: InvarianceCmd) -> Result<(), Failure> {
    match cmd {
        InvarianceCmd::Check {
            model,
            action,
            transport,
            points,
            tol,
        } => {
            let m = registry::parse_model(&model)?;
            let action: FiniteAction = read_json(&action)?;

            #[derive(serde::Deserialize)]
            struct RawTerm {
                coef: String,
                #[serde(default)]
                powers: Vec<u32>,
            }
            let raw: std::collections::BTreeMap<String, Vec<Vec<RawTerm>>> =
                read_json(&transport)?;
            let mut named = Vec::new();
            for (element, coords) in raw {
                let mut polys = Vec::with_capacity(coords.len());
                for terms in coords {
                    let mut parsed = Vec::with_capacity(terms.len());
                    for term in terms {
                        let coef = parse_rat(&term.coef).map_err(|e| {
                            Failure::usage(format!("bad coefficient {:?}: {e}", term.coef))
                        })?;
                        parsed.push((coef, term.powers));
                    }
                    polys.push(Polynomial::new(parsed));
                }
                named.push((
                    element,
                    transport_fn(move |theta: &[Rat]| {
                        polys.iter().map(|poly| poly.eval(theta)).collect()
                    }),
                ));
            }
            let transport = ParamTransport::new(&action, named).map_err(Failure::domain)?;
            let check = check_invariance(&m, &action, &transport, points, tol)
                .map_err(Failure::domain)?;
            emit(&json!({
                "holds": check.holds,
                "max_gap": format_rat(&check.max_gap),
                "worst_element": check.worst_element,
                "worst_theta": check
                    .worst_theta
                    .map(|p| p.iter().map(format_rat).collect::<Vec<_>>()),
            }));
            Ok(())
        }
        InvarianceCmd::Induced {
            action_i,
            action_j,
            p,
            q,
            on,
        } => {
            let ai: FiniteAction = read_json(&action_i)?;
            let aj: FiniteAction = read_json(&action_j)?;
            let p: CategoryMapping = read_json(&p)?;
            let q: CategoryMapping = read_json(&q)?;
            let induced = match on {
                InducedTarget::M => induced_action_on_m(&ai, &aj, &p, &q),
                InducedTarget::Product => induced_action_on_product(&ai, &aj, &p, &q),
            }
            .map_err(Failure::domain)?;
            emit(&induced);
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_sample(
    model: String,
    f: Option<String>,
    h: Option<String>,
    g: Option<String>,
    p: Option<PathBuf>,
    q: Option<PathBuf>,
    theta: &str,
    n: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let point = parse_theta(theta)?;
    let mut sampler = Sampler::from_seed(seed);

    let require = |flag: Option<String>, name: &str| {
        flag.ok_or_else(|| Failure::usage(format!("--model {model} requires --{name}")))
    };
    let require_path = |flag: Option<PathBuf>, name: &str| {
        flag.ok_or_else(|| Failure::usage(format!("--model {model} requires --{name}")))
    };

    let lines = match model.as_str() {
        "meta-star" => {
            let f = registry::parse_model(&require(f, "f")?)?;
            let g = registry::parse_model(&require(g, "g")?)?;
            let p: CategoryMapping = read_json(&require_path(p, "p")?)?;
            let q: CategoryMapping = read_json(&require_path(q, "q")?)?;
            let draws = sample_meta_star_many(&f, &g, &p, &q, &point, n, &mut sampler)
                .map_err(Failure::domain)?;
            pair_lines(&draws)
        }
        "structured-super" => {
            let f = registry::parse_model(&require(f, "f")?)?;
            let h = registry::parse_model(&require(h, "h")?)?;
            let g = registry::parse_model(&require(g, "g")?)?;
            let p: CategoryMapping = read_json(&require_path(p, "p")?)?;
            let q: CategoryMapping = read_json(&require_path(q, "q")?)?;
            let (d1, d2, d3) = (f.dim(), h.dim(), g.dim());
            if point.len() != d1 + d2 + d3 {
                return Err(Failure::usage(format!(
                    "theta must concatenate all three parameter points ({} coordinates)",
                    d1 + d2 + d3
                )));
            }
            let draws = sample_structured_super_many(
                &f,
                &h,
                &g,
                &p,
                &q,
                &point[..d1],
                &point[d1..d1 + d2],
                &point[d1 + d2..],
                n,
                &mut sampler,
            )
            .map_err(Failure::domain)?;
            pair_lines(&draws)
        }
        spec => {
            let m = registry::parse_model(spec)?;
            let d = m.eval(&point).map_err(Failure::domain)?;
            let mut lines = String::new();
            for _ in 0..n {
                let c = sampler.sample_dist(&d);
                lines.push_str(&json!({"category": c.as_str()}).to_string());
                lines.push('\n');
            }
            lines
        }
    };

    match out {
        Some(path) => {
            std::fs::write(&path, lines.as_bytes())
                .map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))?;
            emit(&json!({"path": path.display().to_string(), "draws": n}));
        }
        None => print!("{lines}"),
    }
    Ok(())
}

fn pair_lines(draws: &[(Category, Category)]) -> String {
    let mut lines = String::new();
    for (i, j) in draws {
        lines.push_str(&json!({"i": i.as_str(), "j": j.as_str()}).to_string());
        lines.push('\n');
    }
    lines
}
