use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;

use bodx::diagnostics::{diagnose as run_diagnose, Verdict};
use bodx::efficiency::profile::{profile_from_brackets, ProfileReport, ProfileSettings};
use bodx::efficiency::{node_efficiencies, psi, LocalEffSettings, LocalOptimumCache};
use bodx::models::{Design, ModelSpec};
use bodx::objective::{ew_objective, phi, EvaluationReport};
use bodx::optimizer::{coordinate_exchange, local_d_optimal, SearchResult};
use bodx::priors::JointPrior;
use bodx::quadrature::{latin_hypercube, QuadratureScheme};
use bodx::seed;

use crate::config::RunConfig;
use crate::Objective;

pub struct DesignArgs {
    pub config: PathBuf,
    pub objective: Objective,
    pub n: Option<usize>,
    pub starts: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub trace: bool,
    pub force: bool,
}

fn out_dir(cfg: &RunConfig, out: Option<&Path>) -> Result<PathBuf> {
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn append_metadata(dir: &Path, record: serde_json::Value) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("metadata.jsonl"))?;
    writeln!(f, "{record}")?;
    Ok(())
}

fn read_design(path: &Path, model: &ModelSpec) -> Result<Design> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Design::read_csv(f, model.region())?)
}

fn write_design(path: &Path, d: &Design) -> Result<()> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    d.write_csv(f)?;
    Ok(())
}

fn verdict_record(v: &Verdict) -> serde_json::Value {
    match v {
        Verdict::Inconclusive(missing) => json!({
            "verdict": v.label(),
            "rule": null,
            "undecided": missing,
        }),
        _ => json!({ "verdict": v.label(), "rule": v.citation() }),
    }
}

pub fn diagnose(path: &Path) -> Result<u8> {
    let cfg = RunConfig::load(path)?;
    let model = cfg.model()?;
    let prior = cfg.prior()?;
    let v = run_diagnose(&model, &prior)?;
    println!("verdict: {}", v.label());
    match &v {
        Verdict::Inconclusive(missing) => {
            for m in missing {
                println!("undecided: {m}");
            }
        }
        _ => println!("rule: {}", v.citation().unwrap_or("")),
    }
    println!("component\tfamily\tE|X|\tE X²\tE log X\tE 1/X\tupper mean\tlower mean");
    for (label, c) in prior.labels.iter().zip(&prior.components) {
        let f = c.moment_flags();
        println!(
            "{label}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            c.family_name(),
            f.mean_abs_finite.as_str(),
            f.second_moment_finite.as_str(),
            f.expected_log_finite.as_str(),
            f.expected_inverse_finite.as_str(),
            f.upper_mean_finite.as_str(),
            f.lower_mean_finite.as_str(),
        );
    }
    let mut rec = verdict_record(&v);
    rec["command"] = json!("diagnose");
    println!("{rec}");
    Ok(v.exit_code() as u8)
}

/// `Ok(None)` when the design may proceed, otherwise the refusal exit code.
fn guard_singular(model: &ModelSpec, prior: &JointPrior, force: bool) -> Result<Option<u8>> {
    let v = run_diagnose(model, prior)?;
    if let Verdict::Singular(rule) = &v {
        if force {
            log::warn!(
                "prior is singular ({}); continuing because of --force",
                rule.citation()
            );
        } else {
            eprintln!(
                "refusing to search: the prior is singular ({}); every design has φ = −∞. Use --force to override.",
                rule.citation()
            );
            return Ok(Some(4));
        }
    }
    Ok(None)
}

fn local_settings(cfg: &RunConfig, seed: u64) -> LocalEffSettings {
    LocalEffSettings {
        search: cfg.search_settings(Some(cfg.profile.local_starts), Some(seed)),
        rcond_threshold: cfg.search.rcond,
    }
}

struct Searched {
    result: SearchResult,
    q: QuadratureScheme,
}

fn search(
    cfg: &RunConfig,
    objective: Objective,
    n: usize,
    starts: Option<usize>,
    seed_override: Option<u64>,
) -> Result<Searched> {
    let model = cfg.model()?;
    let prior = cfg.prior()?;
    let q = cfg.quadrature()?;
    let settings = cfg.search_settings(starts, seed_override);
    let rcond = cfg.search.rcond;
    let region = model.region();
    let result = match objective {
        Objective::BayesLower => coordinate_exchange(
            |d| Ok(phi(d, &model, &q, rcond)?.lower),
            region,
            n,
            &settings,
        )?,
        Objective::BayesUpper => coordinate_exchange(
            |d| Ok(phi(d, &model, &q, rcond)?.upper),
            region,
            n,
            &settings,
        )?,
        Objective::Ew => {
            coordinate_exchange(|d| ew_objective(d, &model, &q), region, n, &settings)?
        }
        Objective::Local => local_d_optimal(&model, &prior.median(), n, &settings)?,
        Objective::Psi => {
            let pq = latin_hypercube(
                &prior,
                cfg.profile.psi_nodes,
                seed::derive(cfg.seed, "psi-nodes"),
            )?;
            let local = local_settings(cfg, seed::derive(cfg.seed, "local"));
            let cache = LocalOptimumCache::new();
            let r = coordinate_exchange(
                |d| Ok(psi(d, &model, &pq, &local, &cache)?.value),
                region,
                n,
                &settings,
            )?;
            let mass = psi(&r.best, &model, &pq, &local, &cache)?.bracket_mass;
            if mass > cfg.profile.max_bracket_mass {
                bail!(
                    "Ψ of the found design rests on uninformative brackets for {:.1}% of the prior mass (limit {:.1}%)",
                    100.0 * mass,
                    100.0 * cfg.profile.max_bracket_mass
                );
            }
            r
        }
    };
    Ok(Searched { result, q })
}

pub fn design(args: &DesignArgs) -> Result<u8> {
    let cfg = RunConfig::load(&args.config)?;
    let model = cfg.model()?;
    let prior = cfg.prior()?;
    if let Some(code) = guard_singular(&model, &prior, args.force)? {
        return Ok(code);
    }
    let dir = out_dir(&cfg, args.out.as_deref())?;
    let n = args.n.unwrap_or(cfg.search.n);
    let s = search(&cfg, args.objective, n, args.starts, args.seed)?;
    write_design(&dir.join("design.csv"), &s.result.best)?;
    if args.trace {
        fs::write(dir.join("trace.csv"), s.result.trace_csv())?;
    }
    let b = phi(&s.result.best, &model, &s.q, cfg.search.rcond)?;
    let report = EvaluationReport::new(&b, cfg.search.rcond, cfg.quadrature_seed());
    let mut rec = serde_json::to_value(&report)?;
    rec["objective"] = json!(args.objective.name());
    rec["objective_value"] = json!(s.result.best_value);
    fs::write(dir.join("bracket.json"), format!("{rec}\n"))?;
    println!("{rec}");
    append_metadata(
        &dir,
        json!({
            "command": "design",
            "config": args.config.display().to_string(),
            "objective": args.objective.name(),
            "n": n,
            "starts": s.result.trace.len(),
            "seed": cfg.seed,
            "search_seed": args.seed.unwrap_or_else(|| cfg.search_seed()),
            "quadrature_seed": cfg.quadrature_seed(),
            "quadrature_nodes": s.q.len(),
            "force": args.force,
            "version": env!("CARGO_PKG_VERSION"),
        }),
    )?;
    Ok(0)
}

pub fn evaluate(path: &Path, design_path: &Path, out: Option<&Path>) -> Result<u8> {
    let cfg = RunConfig::load(path)?;
    let model = cfg.model()?;
    let xi = read_design(design_path, &model)?;
    let q = cfg.quadrature()?;
    let b = phi(&xi, &model, &q, cfg.search.rcond)?;
    let report = EvaluationReport::new(&b, cfg.search.rcond, cfg.quadrature_seed());
    let mut rec = serde_json::to_value(&report)?;
    rec["design"] = json!(design_path.display().to_string());
    rec["nodes"] = json!(q.len());
    println!("{rec}");
    let dir = out_dir(&cfg, out)?;
    fs::write(dir.join("evaluation.json"), format!("{rec}\n"))?;
    append_metadata(
        &dir,
        json!({
            "command": "evaluate",
            "config": path.display().to_string(),
            "seed": cfg.seed,
            "quadrature_seed": cfg.quadrature_seed(),
            "version": env!("CARGO_PKG_VERSION"),
        }),
    )?;
    Ok(0)
}

fn profile_settings(cfg: &RunConfig) -> ProfileSettings {
    let seed = seed::derive(cfg.seed, "profile");
    ProfileSettings {
        grid_points: cfg.profile.grid_points,
        draws_per_point: cfg.profile.draws_per_point,
        marginal_draws: cfg.profile.marginal_draws,
        seed,
        local: local_settings(cfg, seed::derive(cfg.seed, "local")),
        ..ProfileSettings::default()
    }
}

fn run_profile(
    cfg: &RunConfig,
    xi: &Design,
    q: &QuadratureScheme,
    cache: &LocalOptimumCache,
) -> Result<ProfileReport> {
    let model = cfg.model()?;
    let prior = cfg.prior()?;
    let settings = profile_settings(cfg);
    let effs = node_efficiencies(xi, &model, q, &settings.local, cache)?;
    Ok(profile_from_brackets(
        &model, &prior, &q.nodes, &effs, &settings,
    )?)
}

fn profile_record(r: &ProfileReport) -> serde_json::Value {
    json!({
        "nodes": r.n_nodes,
        "dropped": r.n_dropped,
        "mean": r.mean,
        "q25": r.quartiles.0,
        "median": r.quartiles.1,
        "q75": r.quartiles.2,
        "mode": r.mode,
        "prob_below_0_2": r.prob_below_0_2,
    })
}

pub fn profile(path: &Path, design_path: &Path, out: Option<&Path>) -> Result<u8> {
    let cfg = RunConfig::load(path)?;
    let model = cfg.model()?;
    let xi = read_design(design_path, &model)?;
    let q = cfg.quadrature()?;
    let r = run_profile(&cfg, &xi, &q, &LocalOptimumCache::new())?;
    let dir = out_dir(&cfg, out)?;
    r.write_files(&dir)?;
    let rec = profile_record(&r);
    println!("{rec}");
    append_metadata(
        &dir,
        json!({
            "command": "profile",
            "config": path.display().to_string(),
            "design": design_path.display().to_string(),
            "seed": cfg.seed,
            "version": env!("CARGO_PKG_VERSION"),
        }),
    )?;
    Ok(0)
}

pub fn compare(path: &Path, with_psi: bool, out: Option<&Path>, force: bool) -> Result<u8> {
    let cfg = RunConfig::load(path)?;
    let model = cfg.model()?;
    let prior = cfg.prior()?;
    if let Some(code) = guard_singular(&model, &prior, force)? {
        return Ok(code);
    }
    let dir = out_dir(&cfg, out)?;
    let mut objectives = vec![Objective::BayesLower, Objective::Ew];
    if with_psi {
        objectives.push(Objective::Psi);
    }
    let q = cfg.quadrature()?;
    let cache = LocalOptimumCache::new();
    let mut w = csv::Writer::from_path(dir.join("compare.csv"))?;
    w.write_record([
        "objective",
        "phi_lower",
        "phi_upper",
        "ew",
        "mean_eff",
        "q25",
        "median",
        "q75",
    ])?;
    for obj in objectives {
        let s = search(&cfg, obj, cfg.search.n, None, None)?;
        let xi = &s.result.best;
        write_design(&dir.join(format!("design_{}.csv", obj.name())), xi)?;
        let b = phi(xi, &model, &q, cfg.search.rcond)?;
        let ew = ew_objective(xi, &model, &q)?;
        let r = run_profile(&cfg, xi, &q, &cache)?;
        let sub = dir.join(format!("profile_{}", obj.name()));
        r.write_files(&sub)?;
        w.write_record([
            obj.name().to_string(),
            format!("{}", b.lower),
            format!("{}", b.upper),
            format!("{ew}"),
            format!("{}", r.mean),
            format!("{}", r.quartiles.0),
            format!("{}", r.quartiles.1),
            format!("{}", r.quartiles.2),
        ])?;
        let mut rec = profile_record(&r);
        rec["objective"] = json!(obj.name());
        println!("{rec}");
    }
    w.flush()?;
    append_metadata(
        &dir,
        json!({
            "command": "compare",
            "config": path.display().to_string(),
            "seed": cfg.seed,
            "psi": with_psi,
            "force": force,
            "version": env!("CARGO_PKG_VERSION"),
        }),
    )?;
    Ok(0)
}

pub fn quadrature(path: &Path, out: Option<&Path>) -> Result<u8> {
    let cfg = RunConfig::load(path)?;
    let q = cfg.quadrature()?;
    if q.is_empty() {
        bail!("empty quadrature scheme");
    }
    let dir = out_dir(&cfg, out)?;
    let f = fs::File::create(dir.join("quadrature.csv"))?;
    q.write_csv(f)?;
    let (wmin, wmax) = q
        .weights
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &w| {
            (a.min(w), b.max(w))
        });
    let rec = json!({
        "command": "quadrature",
        "method": cfg.quadrature.method,
        "nodes": q.len(),
        "dim": q.dim(),
        "weight_sum": q.weights.iter().sum::<f64>(),
        "weight_min": wmin,
        "weight_max": wmax,
        "seed": cfg.quadrature_seed(),
    });
    println!("{rec}");
    append_metadata(&dir, rec)?;
    Ok(0)
}
