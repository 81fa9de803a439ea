use std::io::Read;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde::Deserialize;
use serde_json::json;

use ising_spinor::continuum::{pfaffian_ratio, theta};
use ising_spinor::harness::*;
use ising_spinor::ising_enum::{enumerate_configs, hole_moments, partition_fn, BoundaryCondition, CycleSpace, HalfSel, HalfWeight};
use ising_spinor::lattice::{DoubleCover, Site};
use ising_spinor::shol_solve::solve_bvp_with;
use ising_spinor::spinor_obs::{check_identities, observable_fields, CheckOptions, ObsOptions};

#[derive(Parser)]
#[command(name = "ising-spinor", about = "Spinor observables of the critical Ising model on square-lattice domains")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a face set and print its combinatorics.
    Validate { input: String },
    /// List configurations with the given sources as CSV.
    Enumerate { input: String },
    /// Partition function and hole spin moments as CSV.
    Partition { input: String },
    /// Exact observable values as CSV.
    Obs { input: String },
    /// Identity suite as JSON.
    Check { input: String },
    /// Solve the boundary value problem: CSV field dump, JSON H-report.
    Solve {
        input: String,
        /// Where to write the H-report; stderr if absent.
        #[arg(long)]
        report: Option<String>,
    },
    /// ϑ for punctures in the upper half-plane, e.g. --punctures "1+1i".
    Theta {
        #[arg(long, value_delimiter = ',', required = true)]
        punctures: Vec<String>,
    },
    /// Pfaffian ratio for real boundary points and punctures.
    Pfratio {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        points: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        punctures: Vec<String>,
    },
    /// Mesh-refinement experiment as CSV.
    Converge {
        /// JSON spec; the symmetric experiment on n = 8, 16, 32 if absent.
        input: Option<String>,
        /// Write zero for the timing column.
        #[arg(long)]
        no_time: bool,
    },
    /// Identity suites over the fixed catalogue as JSON.
    Catalogue,
}

enum Failure {
    Input(String),
    Identity(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.to_string())
    }
}

fn read_input(path: &str) -> Result<String, Failure> {
    if path == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        Ok(std::fs::read_to_string(path)?)
    }
}

fn parse<T: for<'de> Deserialize<'de>>(path: &str) -> Result<T, Failure> {
    Ok(serde_json::from_str(&read_input(path)?)?)
}

fn parse_complex(s: &str) -> Result<Complex64, Failure> {
    s.trim().parse::<Complex64>().map_err(|_| Failure::Input(format!("bad complex number {s:?}")))
}

#[derive(Deserialize)]
struct SourcesReq {
    domain: DomainInput,
    #[serde(default)]
    sources: Vec<HalfRef>,
}

#[derive(Deserialize)]
#[serde(rename_all = "lowercase")]
enum BcReq {
    Plus,
    Free,
    Dobrushin([HalfRef; 2]),
    Marked(Vec<HalfRef>),
}

#[derive(Deserialize)]
struct PartitionReq {
    domain: DomainInput,
    #[serde(default = "plus")]
    bc: BcReq,
}

fn plus() -> BcReq {
    BcReq::Plus
}

#[derive(Deserialize)]
struct ObsReq {
    domain: DomainInput,
    source: HalfRef,
    #[serde(default)]
    targets: Option<Vec<SiteRef>>,
}

#[derive(Deserialize)]
struct CheckReq {
    domain: DomainInput,
    /// All covers if absent.
    #[serde(default)]
    covers: Option<Vec<Vec<bool>>>,
    source: HalfRef,
    #[serde(default)]
    marked: Vec<HalfRef>,
}

#[derive(Deserialize)]
struct SolveReq {
    domain: DomainInput,
    source: HalfRef,
    #[serde(default)]
    method: Option<String>,
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Validate { input } => {
            let dom: DomainInput = parse(&input)?;
            let d = dom.build()?;
            let cycle_dim = CycleSpace::new(&d).map(|c| c.dim()).ok();
            let out = json!({
                "valid": true,
                "faces": d.faces.len(),
                "vertices": d.vertices.len(),
                "edges": d.edges.len(),
                "half_edges": d.halves.len(),
                "holes": d.holes,
                "cycle_dim": cycle_dim,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Cmd::Enumerate { input } => {
            let req: SourcesReq = parse(&input)?;
            let d = req.domain.build()?;
            let srcs = req.sources.iter().map(|h| h.half(&d).map(HalfSel::Boundary)).collect::<Result<Vec<_>, _>>()?;
            let configs = enumerate_configs(&d, &srcs)?;
            print!("index,edges,halves,c0,c1,c2,c3,re,im\n");
            for (i, c) in configs.iter().enumerate() {
                let w = ising_spinor::qcyc::Q8::x_crit().pow(c.weight_exponent(HalfWeight::Half));
                let row = q8_row("", &w);
                let edges: Vec<String> = ising_spinor::ising_enum::bits(c.edges).map(|e| e.to_string()).collect();
                print!("{i},{},{}{}", edges.join(" "), c.halves.len(), row);
            }
        }
        Cmd::Partition { input } => {
            let req: PartitionReq = parse(&input)?;
            let d = req.domain.build()?;
            let bc = match &req.bc {
                BcReq::Plus => BoundaryCondition::Plus,
                BcReq::Free => BoundaryCondition::Free,
                BcReq::Dobrushin([a, b]) => BoundaryCondition::Dobrushin(a.half(&d)?, b.half(&d)?),
                BcReq::Marked(v) => BoundaryCondition::Marked(v.iter().map(|h| h.half(&d)).collect::<Result<_, _>>()?),
            };
            print!("{Q8_HEADER}");
            print!("{}", q8_row("Z", &partition_fn(&d, &bc)?));
            if bc != BoundaryCondition::Free && d.num_holes() > 0 {
                for (mask, m) in hole_moments(&d, &bc)?.iter().enumerate().skip(1) {
                    let holes: Vec<String> = (0..d.num_holes()).filter(|j| mask >> j & 1 == 1).map(|j| j.to_string()).collect();
                    print!("{}", q8_row(&format!("moment[{}]", holes.join(" ")), m));
                }
            }
        }
        Cmd::Obs { input } => {
            let req: ObsReq = parse(&input)?;
            let d = req.domain.build()?;
            let cov = req.domain.cover(&d)?;
            let a = req.source.resolve(&d)?;
            let Site::Half(ah) = a.site else { unreachable!() };
            let f = observable_fields(std::slice::from_ref(&cov), ah, None, &[a.sheet], ObsOptions::default())?.remove(0);
            let targets = match &req.targets {
                Some(t) => t.iter().map(|s| s.resolve(&d)).collect::<Result<Vec<_>, _>>()?,
                None => d.sites().map(|s| ising_spinor::lattice::CoverPoint::new(s, 1)).collect(),
            };
            print!("site,x,y,sheet,c0,c1,c2,c3,re,im\n");
            for z in targets {
                let (x, y) = site_xy(&d, z.site);
                let label = match z.site {
                    Site::Edge(e) => format!("edge{e}"),
                    Site::Half(h) => format!("half{h}"),
                };
                print!("{}", q8_row(&format!("{label},{},{},{}", fmt17(x), fmt17(y), z.sheet), &f.at(z)));
            }
        }
        Cmd::Check { input } => {
            let req: CheckReq = parse(&input)?;
            let d = req.domain.build()?;
            let flags = req.covers.clone().unwrap_or_else(|| {
                let m = d.num_holes();
                (0..1usize << m).map(|mask| (0..m).map(|j| mask >> j & 1 == 1).collect()).collect()
            });
            let covers = flags.iter().map(|f| DoubleCover::new(d.clone(), f)).collect::<Result<Vec<_>, _>>()?;
            let a = req.source.half(&d)?;
            let marked = req.marked.iter().map(|h| h.half(&d)).collect::<Result<Vec<_>, _>>()?;
            let r = check_identities(&covers, a, &marked, CheckOptions::default())?;
            let summary: serde_json::Map<String, serde_json::Value> = r
                .checks
                .iter()
                .map(|c| (format!("{}{:?}", c.name, c.cover), json!({"result": if c.pass { "pass" } else { "fail" }, "checked": c.checked, "locus": c.locus})))
                .collect();
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if let Some(c) = r.first_failure() {
                return Err(Failure::Identity(format!("{} failed at {}", c.name, c.locus.clone().unwrap_or_default())));
            }
        }
        Cmd::Solve { input, report } => {
            let req: SolveReq = parse(&input)?;
            let d = req.domain.build()?;
            let cov = req.domain.cover(&d)?;
            let a = req.source.resolve(&d)?;
            let s = solve_bvp_with(&cov, a, method_from(req.method.as_deref())?)?;
            print!("{}", field_csv(&s.field));
            let h = solve_report(&s.field)?;
            let out = serde_json::to_string_pretty(&json!({
                "unknowns": s.unknowns,
                "method": s.method,
                "relative_residual": s.relative_residual,
                "h": h,
            }))?;
            match report {
                Some(p) => std::fs::write(p, out)?,
                None => eprintln!("{out}"),
            }
            if !h.all_pass() {
                return Err(Failure::Identity("H-function property failed".into()));
            }
        }
        Cmd::Theta { punctures } => {
            let w = punctures.iter().map(|s| parse_complex(s)).collect::<Result<Vec<_>, _>>()?;
            let r = theta(&w)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Cmd::Pfratio { points, punctures } => {
            let w = punctures.iter().map(|s| parse_complex(s)).collect::<Result<Vec<_>, _>>()?;
            let r = pfaffian_ratio(&points, &w)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Cmd::Converge { input, no_time } => {
            let spec = match input {
                Some(p) => parse(&p)?,
                None => ConvergenceSpec::symmetric(vec![8, 16, 32]),
            };
            let rows = run_convergence(&spec)?;
            print!("{}", convergence_csv(&rows, !no_time));
        }
        Cmd::Catalogue => {
            let r = run_catalogue(CheckOptions::default());
            println!("{}", serde_json::to_string_pretty(&r)?);
            if !r.all_pass {
                let first = r.entries.iter().find_map(|e| e.first_failure().map(|f| format!("{}: {f}", e.name)));
                return Err(Failure::Identity(first.unwrap_or_default()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Identity(m)) => {
            eprintln!("identity failure: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
