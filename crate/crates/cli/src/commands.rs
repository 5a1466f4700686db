use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::json;

use ces_audit::adversarial::{
    hooke_jeeves_search, minority_party, write_trace, AdversarialOutcome, AdversarialProblem, DemographicTarget,
    Direction, RaceMode, DEFAULT_RESTARTS,
};
use ces_audit::data::{
    ingest_demographics, ingest_district_overlaps, ingest_projects, ingest_tracts, join_demographics,
    write_demographics, write_projects, write_tracts, TractId, TractRecord,
};
use ces_audit::engine::{omit_category_model, read_designations, results_from_designations, run_model, write_scores, ScoreResult};
use ces_audit::funding::{
    binned_funding_profile, district_membership, repair_projects, tract_funding_totals, write_profile,
    write_tract_funding, PriorityTracts,
};
use ces_audit::matching::{apply_imputation, matching_table, pmm_impute, records_table, write_matching_table, PmmConfig};
use ces_audit::pipeline::{matching_data, rdd_covariate_names, rdd_dataset};
use ces_audit::rdd::{
    aggregate_dollar_effect, ik_bandwidth, rdd_estimate, robustness_grid, write_grid, BandwidthChoice, DollarMode,
    FunctionalForm, Kernel, RddDataset, RddInput,
};
use ces_audit::schema::{IndicatorSchema, ModelSpec};
use ces_audit::sensitivity::{
    auc_correlation_r2, band_samples, churn_table, designation_churn, enumerate_lattice, fit_interval_model,
    overall_sensitivity, sensitivity_reduction, subgroup_discordance, tract_score_ranges, union_designation,
    write_churn_table, write_ranges, MIN_RANGES_FOR_BAND,
};
use ces_audit::synth::{generate_funding_rdd, generate_projects, generate_tracts, SynthConfig};

use crate::io::{read_funding, read_scores, write_funding, Format, Output};
use crate::svg::{self, Series};
use crate::{Cli, CliError, Command, Common};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    let c = &cli.common;
    let mut out = Output::create(&c.out, &c.format)?;
    match &cli.command {
        Command::Ingest => ingest(c, &mut out)?,
        Command::Score => score(c, &mut out)?,
        Command::Audit(a) => audit(c, a, &mut out)?,
        Command::Adversarial(a) => adversarial(c, a, &mut out)?,
        Command::Rdd(a) => rdd(c, a, &mut out)?,
        Command::Match(a) => matching(c, a, &mut out)?,
        Command::Attribute(a) => attribute(c, a, &mut out)?,
        Command::Synth(a) => synth(c, a, &mut out)?,
    }
    for f in out.written() {
        println!("{}", out.dir.join(f).display());
    }
    Ok(())
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| CliError::Usage(format!("--{flag} is required for this command")))
}

fn load_schema(c: &Common) -> Result<IndicatorSchema> {
    Ok(match &c.schema {
        Some(p) => IndicatorSchema::load(p)?,
        None => IndicatorSchema::ces4(),
    })
}

fn load_spec(c: &Common) -> Result<ModelSpec> {
    Ok(match &c.spec {
        Some(p) => ModelSpec::load(p)?,
        None => ModelSpec::baseline(),
    })
}

struct Loaded {
    records: Vec<TractRecord>,
    report: ces_audit::data::IngestReport,
    unmatched_demographics: Option<usize>,
}

fn load_tracts(c: &Common, schema: &IndicatorSchema) -> Result<Loaded> {
    let ingested = ingest_tracts(required(&c.tracts, "tracts")?, schema)?;
    let mut records = ingested.records;
    let unmatched_demographics = match &c.demographics {
        Some(p) => Some(join_demographics(&mut records, &ingest_demographics(p)?)),
        None => None,
    };
    if let Some(p) = &c.district_overlaps {
        let overlaps = ingest_district_overlaps(p)?;
        for r in &mut records {
            if let Some(o) = overlaps.get(&r.tract_id) {
                r.district_overlaps = o.clone();
            }
        }
    }
    Ok(Loaded {
        records,
        report: ingested.report,
        unmatched_demographics,
    })
}

/// Designations to compare against or to prioritize: the prior-designation
/// file, else the scores file, else a fresh run of the spec.
fn designations(c: &Common, records: Option<&[TractRecord]>, schema: &IndicatorSchema) -> Result<BTreeMap<TractId, bool>> {
    if let Some(p) = &c.prior_designations {
        return Ok(read_designations(p)?);
    }
    if let Some(p) = &c.scores {
        return Ok(read_scores(p)?.into_iter().map(|r| (r.tract_id, r.designated)).collect());
    }
    let records = records.ok_or_else(|| CliError::Usage("designations need --prior-designations, --scores or --tracts".into()))?;
    Ok(run_model(records, schema, &load_spec(c)?)?
        .into_iter()
        .map(|r| (r.tract_id, r.designated))
        .collect())
}

fn designated_count(r: &[ScoreResult]) -> usize {
    r.iter().filter(|x| x.designated).count()
}

// ------------------------------------------------------------ ingest / score

fn ingest(c: &Common, out: &mut Output) -> Result<()> {
    let schema = load_schema(c)?;
    let loaded = load_tracts(c, &schema)?;
    let projects = c.projects.as_deref().map(ingest_projects).transpose()?;
    out.json(
        "ingest_report.json",
        &json!({
            "tracts": loaded.report,
            "demographics_unmatched": loaded.unmatched_demographics,
            "projects": projects.as_ref().map(|p| &p.report),
        }),
    )?;
    out.csv("tracts.csv", |p| write_tracts(p, &loaded.records, &schema))?;
    if c.demographics.is_some() {
        out.csv("demographics.csv", |p| write_demographics(p, &loaded.records))?;
    }
    if let Some(p) = &projects {
        out.csv("projects.csv", |path| write_projects(path, &p.records))?;
    }
    Ok(())
}

fn score(c: &Common, out: &mut Output) -> Result<()> {
    let schema = load_schema(c)?;
    let spec = load_spec(c)?;
    let loaded = load_tracts(c, &schema)?;
    let results = run_model(&loaded.records, &schema, &spec)?;
    out.csv("scores.csv", |p| write_scores(p, &results, &schema))?;
    out.json(
        "score_summary.json",
        &json!({
            "spec": spec,
            "label": spec.label(),
            "tracts": results.len(),
            "scored": results.iter().filter(|r| r.percentile.is_some()).count(),
            "designated": designated_count(&results),
        }),
    )?;
    Ok(())
}

// ------------------------------------------------------------ audit

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Race group whose share bins the discordance between the baseline and alternative models
    #[arg(long)]
    pub group: Option<String>,
    /// Number of equal-width share bins for the discordance profile
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
}

#[derive(Serialize)]
struct OmittedRow {
    subcategory: String,
    churn: f64,
}

fn audit(c: &Common, a: &AuditArgs, out: &mut Output) -> Result<()> {
    let schema = load_schema(c)?;
    let records = load_tracts(c, &schema)?.records;
    let lattice = enumerate_lattice(&records, &schema)?;
    let base = lattice.base();
    let table = churn_table(&lattice);
    let overall = overall_sensitivity(&lattice);
    out.csv("churn_table.csv", |p| write_churn_table(p, &table))?;

    let ranges = tract_score_ranges(&lattice);
    out.csv("ranges.csv", |p| write_ranges(p, &ranges))?;
    let band = if ranges.len() >= MIN_RANGES_FOR_BAND {
        Some(band_samples(&fit_interval_model(&ranges)?))
    } else {
        log::warn!("{} tracts with ranges; the band needs {MIN_RANGES_FOR_BAND}", ranges.len());
        None
    };
    if let Some(samples) = &band {
        out.csv("band.csv", |p| {
            let mut w = csv::Writer::from_path(p).map_err(ces_audit::Error::from)?;
            samples.iter().try_for_each(|s| w.serialize(s))?;
            w.flush()?;
            Ok(())
        })?;
        out.svg("band.svg", || {
            let line = |name, f: fn(&ces_audit::sensitivity::BandSample) -> f64| Series {
                name,
                points: samples.iter().map(|s| (s.percentile, f(s))).collect(),
            };
            svg::line_chart(
                "Percentile range across specifications",
                "reference percentile",
                "percentile",
                &[line("lower", |s| s.low), line("upper", |s| s.high)],
            )
        })?;
    }

    let spec = ModelSpec::baseline();
    let omitted = schema
        .subcategories
        .iter()
        .map(|s| {
            let r = omit_category_model(&records, &schema, &spec, &s.id)?;
            Ok(OmittedRow {
                subcategory: s.id.clone(),
                churn: designation_churn(base, &r)?,
            })
        })
        .collect::<ces_audit::Result<Vec<_>>>()?;
    out.csv("omitted_category.csv", |p| {
        let mut w = csv::Writer::from_path(p).map_err(ces_audit::Error::from)?;
        omitted.iter().try_for_each(|r| w.serialize(r))?;
        w.flush()?;
        Ok(())
    })?;

    let alternative = run_model(&records, &schema, &ModelSpec::alternative())?;
    let prior = c
        .prior_designations
        .as_deref()
        .map(|p| Ok::<_, CliError>(results_from_designations(base, &read_designations(p)?)))
        .transpose()?;
    let mut additional: Vec<&[ScoreResult]> = Vec::new();
    if let Some(p) = &prior {
        additional.push(p);
    }
    additional.push(&alternative);
    let mut union_models = vec![base];
    union_models.extend(additional.iter().copied());
    let union = union_designation(&union_models)?;
    let union_growth = if designated_count(base) > 0 {
        100.0 * (designated_count(&union) as f64 / designated_count(base) as f64 - 1.0)
    } else {
        0.0
    };
    let union_report = json!({
        "models": union_models.len(),
        "with_prior": prior.is_some(),
        "reduction_prior_only": prior.as_ref().map(|p| sensitivity_reduction(overall, &[p], &lattice)).transpose()?,
        "reduction": sensitivity_reduction(overall, &additional, &lattice)?,
        "designated_base": designated_count(base),
        "designated_union": designated_count(&union),
        "union_growth_percent": union_growth,
    });

    let base_flags: BTreeMap<TractId, bool> = base.iter().map(|r| (r.tract_id.clone(), r.designated)).collect();
    let auc = auc_correlation_r2(&records, &schema, &base_flags)?;
    out.svg("auc.svg", || {
        let pts: Vec<(f64, f64)> = auc.mean_abs_correlation.iter().copied().zip(auc.auc.iter().copied()).collect();
        svg::scatter("Variable AUC against mean correlation", "mean |correlation|", "AUC", &pts)
    })?;

    let discordance = match &a.group {
        Some(g) => {
            let share: BTreeMap<TractId, f64> = records
                .iter()
                .filter_map(|r| Some((r.tract_id.clone(), *r.demographics.race_shares.get(g)?)))
                .collect();
            if share.is_empty() {
                return Err(CliError::Usage(format!("no tract has a share for race group `{g}`")));
            }
            let edges: Vec<f64> = (0..=a.bins.max(1)).map(|k| k as f64 / a.bins.max(1) as f64).collect();
            Some(subgroup_discordance(base, &alternative, &share, &edges, c.seed())?)
        }
        None => None,
    };

    let widths = band.as_ref().map(|b| json!({ "p75": b[75].width, "p95": b[95].width }));
    out.json(
        "audit_report.json",
        &json!({
            "tracts": records.len(),
            "specs": lattice.specs.iter().map(ModelSpec::label).collect::<Vec<_>>(),
            "overall_sensitivity": overall,
            "churn_table": table,
            "band_widths": widths,
            "band": band,
            "ranges": ranges.len(),
            "omitted_category": omitted,
            "union": union_report,
            "auc": auc,
            "discordance": discordance,
        }),
    )?;
    Ok(())
}

// ------------------------------------------------------------ adversarial

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Directions {
    Maximize,
    Minimize,
    Both,
}

#[derive(Debug, Args)]
pub struct AdversarialArgs {
    /// `party:<label>`, `party:minority`, `race:<group>` or `race:<group>:majority`
    #[arg(long, default_value = "party:minority")]
    pub target: String,
    #[arg(long, value_enum, default_value = "both")]
    pub direction: Directions,
    /// Extra random starting points per pre-processing/aggregation case
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
}

fn parse_target(text: &str, base: &[ScoreResult], records: &[TractRecord]) -> Result<DemographicTarget> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        ["party", "minority"] => Ok(DemographicTarget::Party { label: minority_party(base, records)? }),
        ["party", label] => Ok(DemographicTarget::Party { label: label.to_string() }),
        ["race", label] => Ok(DemographicTarget::Race { label: label.to_string(), mode: RaceMode::PopulationShareSum }),
        ["race", label, "majority"] => Ok(DemographicTarget::Race { label: label.to_string(), mode: RaceMode::TractCountByMajority }),
        _ => Err(CliError::Usage(format!("cannot read target `{text}`"))),
    }
}

fn adversarial(c: &Common, a: &AdversarialArgs, out: &mut Output) -> Result<()> {
    let schema = load_schema(c)?;
    let records = load_tracts(c, &schema)?.records;
    let base = run_model(&records, &schema, &ModelSpec::baseline())?;
    let target = parse_target(&a.target, &base, &records)?;
    let directions = match a.direction {
        Directions::Maximize => vec![Direction::Maximize],
        Directions::Minimize => vec![Direction::Minimize],
        Directions::Both => vec![Direction::Maximize, Direction::Minimize],
    };
    let mut summary = BTreeMap::new();
    for d in directions {
        let mut problem = AdversarialProblem::new(target.clone(), d);
        problem.restarts = a.restarts;
        problem.seed = c.seed();
        let outcome = hooke_jeeves_search(&problem, &records, &schema)?;
        let name = match d {
            Direction::Maximize => "maximize",
            Direction::Minimize => "minimize",
        };
        out.json(&format!("best_spec_{name}.json"), &outcome.best)?;
        out.csv(&format!("trace_{name}.csv"), |p| write_trace(p, &outcome))?;
        out.svg(&format!("trace_{name}.svg"), || trace_chart(&outcome, name))?;
        let change = if outcome.baseline_objective != 0.0 {
            Some(100.0 * (outcome.objective - outcome.baseline_objective) / outcome.baseline_objective)
        } else {
            None
        };
        summary.insert(
            name,
            json!({
                "objective": outcome.objective,
                "baseline_objective": outcome.baseline_objective,
                "change_percent": change,
                "best": outcome.best,
                "cases": outcome.cases.iter().map(|k| json!({ "spec": k.spec.label(), "objective": k.objective, "evaluations": k.trace.len() })).collect::<Vec<_>>(),
            }),
        );
    }
    out.json("adversarial.json", &json!({ "target": target, "restarts": a.restarts, "seed": c.seed(), "results": summary }))?;
    Ok(())
}

/// Best objective so far against evaluation count, one line per case.
fn trace_chart(outcome: &AdversarialOutcome, direction: &str) -> String {
    let series: Vec<Series> = outcome
        .cases
        .iter()
        .map(|case| {
            let mut best = f64::NAN;
            let points = case
                .trace
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    best = match (best.is_nan(), direction) {
                        (true, _) => t.objective,
                        (false, "maximize") => best.max(t.objective),
                        (false, _) => best.min(t.objective),
                    };
                    (i as f64, best)
                })
                .collect();
            Series {
                name: case_label(&case.spec),
                points,
            }
        })
        .collect();
    svg::line_chart(&format!("Pattern search ({direction})"), "evaluation", "objective", &series)
}

fn case_label(spec: &ModelSpec) -> &'static str {
    use ces_audit::schema::{Aggregation::*, Preprocessing::*};
    match (spec.preprocessing, spec.aggregation) {
        (PercentileRank, Multiplicative) => "percentile/mult",
        (PercentileRank, Additive) => "percentile/add",
        (ZScore, Multiplicative) => "z-score/mult",
        (ZScore, Additive) => "z-score/add",
    }
}

// ------------------------------------------------------------ rdd

#[derive(Debug, Args)]
pub struct RddArgs {
    #[arg(long, default_value_t = 75.0)]
    pub cutoff: f64,
    /// `ik` or a fixed half-width in percentile points
    #[arg(long, default_value = "ik")]
    pub bandwidth: String,
    #[arg(long, value_enum, default_value = "uniform")]
    pub kernel: KernelArg,
    #[arg(long, value_enum, default_value = "local-linear")]
    pub form: FormArg,
    /// Fit without covariates (demographics are then not needed)
    #[arg(long)]
    pub no_covariates: bool,
    /// Additional funding tables for the robustness grid, as NAME=PATH
    #[arg(long = "extra-funding", value_name = "NAME=PATH")]
    pub extra_funding: Vec<String>,
    /// Fixed bandwidth used alongside IK in the robustness grid
    #[arg(long, default_value_t = 10.0)]
    pub grid_bandwidth: f64,
    /// Bin width of the funding profile, in percentile points
    #[arg(long, default_value_t = 0.1)]
    pub binwidth: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KernelArg {
    Uniform,
    Triangular,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormArg {
    LocalLinear,
    Quadratic,
}

fn plain_dataset(scores: &[ScoreResult], funding: &BTreeMap<TractId, f64>, cutoff: f64) -> Result<(RddDataset, usize)> {
    let mut dropped = 0;
    let inputs = scores
        .iter()
        .filter_map(|s| match (s.percentile, funding.get(&s.tract_id)) {
            (Some(p), Some(&f)) => Some(RddInput {
                tract_id: s.tract_id.clone(),
                running: p,
                funding: f,
                treated: p >= cutoff,
                covariates: vec![],
            }),
            _ => {
                dropped += 1;
                None
            }
        })
        .collect();
    Ok((RddDataset::new(cutoff, vec![], inputs)?, dropped))
}

fn rdd(c: &Common, a: &RddArgs, out: &mut Output) -> Result<()> {
    let schema = load_schema(c)?;
    let records = match (&c.tracts, a.no_covariates) {
        (None, true) => None,
        _ => Some(load_tracts(c, &schema)?.records),
    };
    let scores = match (&c.scores, &records) {
        (Some(p), _) => read_scores(p)?,
        (None, Some(r)) => run_model(r, &schema, &load_spec(c)?)?,
        (None, None) => return Err(CliError::Usage("rdd needs --scores or --tracts".into())),
    };
    if !a.no_covariates && c.demographics.is_none() {
        return Err(CliError::Usage("covariates need --demographics; pass --no-covariates to fit without them".into()));
    }
    let build = |funding: &BTreeMap<TractId, f64>| -> Result<(RddDataset, usize)> {
        match (&records, a.no_covariates) {
            (Some(r), false) => Ok(rdd_dataset(&scores, r, funding, a.cutoff)?),
            _ => plain_dataset(&scores, funding, a.cutoff),
        }
    };
    let funding = read_funding(required(&c.funding, "funding")?)?;
    let (main, dropped) = build(&funding)?;
    let mut datasets = vec![("main".to_string(), main)];
    for spec in &a.extra_funding {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--extra-funding expects NAME=PATH, got `{spec}`")))?;
        datasets.push((name.to_string(), build(&read_funding(Path::new(path))?)?.0));
    }
    let main = &datasets[0].1;
    let covariates = if a.no_covariates { vec![] } else { main.covariate_names.clone() };
    let kernel = match a.kernel {
        KernelArg::Uniform => Kernel::Uniform,
        KernelArg::Triangular => Kernel::Triangular,
    };
    let form = match a.form {
        FormArg::LocalLinear => FunctionalForm::LocalLinear,
        FormArg::Quadratic => FunctionalForm::Quadratic,
    };
    let (choice, h) = match a.bandwidth.as_str() {
        "ik" => (BandwidthChoice::Ik, ik_bandwidth(&main.running(), &main.outcomes(), a.cutoff)?),
        other => {
            let h: f64 = other
                .parse()
                .map_err(|_| CliError::Usage(format!("--bandwidth expects `ik` or a number, got `{other}`")))?;
            (BandwidthChoice::Fixed(h), h)
        }
    };
    let estimate = rdd_estimate(main, h, form, kernel, &covariates)?;
    let treated_funding: Vec<f64> = main.rows.iter().filter(|r| r.treated).map(|r| r.outcome.exp()).collect();
    let dollars = aggregate_dollar_effect(estimate.percent, estimate.percent_ci, &treated_funding, DollarMode::RealizedGain)?;

    let mut sets = vec![("none".to_string(), vec![])];
    if !a.no_covariates {
        sets.insert(0, ("all".to_string(), rdd_covariate_names(records.as_deref().unwrap_or_default())));
    }
    let grid = robustness_grid(
        &datasets,
        &[BandwidthChoice::Ik, BandwidthChoice::Fixed(a.grid_bandwidth)],
        &[FunctionalForm::LocalLinear, FunctionalForm::Quadratic],
        &sets,
        kernel,
    );
    out.csv("grid.csv", |p| write_grid(p, &grid))?;

    let points: Vec<(f64, f64)> = scores
        .iter()
        .filter_map(|s| Some((s.percentile?, *funding.get(&s.tract_id)?)))
        .collect();
    let profile = binned_funding_profile(&points, a.binwidth)?;
    out.csv("profile.csv", |p| write_profile(p, &profile))?;
    out.svg("profile.svg", || {
        let pts: Vec<(f64, f64)> = profile.iter().map(|b| ((b.bin_low + b.bin_high) / 2.0, b.mean)).collect();
        svg::scatter("Mean log funding by percentile", "percentile", "mean log funding", &pts)
    })?;

    out.json(
        "rdd.json",
        &json!({
            "cutoff": a.cutoff,
            "bandwidth_choice": choice,
            "estimate": estimate,
            "dropped_tracts": dropped,
            "excluded_nonpositive": main.excluded_nonpositive,
            "realized_gain": dollars,
            "grid": grid,
        }),
    )?;
    Ok(())
}

// ------------------------------------------------------------ match

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3")]
    pub calipers: Vec<f64>,
    /// Number of imputed datasets
    #[arg(long, default_value_t = 10)]
    pub imputations: usize,
    /// Chained-equation iterations per dataset
    #[arg(long, default_value_t = 50)]
    pub iterations: usize,
    /// Predictive-mean-matching donor pool size
    #[arg(long, default_value_t = 5)]
    pub donors: usize,
}

fn matching(c: &Common, a: &MatchArgs, out: &mut Output) -> Result<()> {
    let schema = load_schema(c)?;
    let records = load_tracts(c, &schema)?.records;
    let designated = designations(c, Some(&records), &schema)?;
    let funding = read_funding(required(&c.funding, "funding")?)?;
    let variables: Vec<String> = schema.variable_ids().map(str::to_string).collect();
    let config = PmmConfig {
        m: a.imputations,
        max_iterations: a.iterations,
        donors: a.donors,
        seed: c.seed(),
    };
    let set = pmm_impute(&records_table(&records, &variables, true), config)?;
    let data = apply_imputation(&records, &set, &variables)
        .iter()
        .map(|r| matching_data(r, &variables, &designated, &funding))
        .collect::<ces_audit::Result<Vec<_>>>()?;
    let rows = matching_table(&data, &a.calipers)?;
    out.csv("matching.csv", |p| write_matching_table(p, &rows))?;
    out.svg("matching.svg", || {
        let bars: Vec<(String, f64)> = rows.iter().map(|r| (format!("caliper {}", r.caliper), r.percent)).collect();
        svg::bar_chart("Pooled funding effect of designation", "percent", &bars)
    })?;
    out.json("matching.json", &json!({ "imputation": config, "rows": rows }))?;
    Ok(())
}

// ------------------------------------------------------------ attribute

#[derive(Debug, Args)]
pub struct AttributeArgs {
    /// Low-income tracts (CSV with tract_id, designated)
    #[arg(long)]
    pub low_income: Option<PathBuf>,
    /// Buffer-region tracts (CSV with tract_id, designated)
    #[arg(long)]
    pub buffer: Option<PathBuf>,
}

fn flagged(path: &Option<PathBuf>) -> Result<std::collections::BTreeSet<TractId>> {
    Ok(match path {
        Some(p) => read_designations(p)?.into_iter().filter(|(_, d)| *d).map(|(t, _)| t).collect(),
        None => Default::default(),
    })
}

fn attribute(c: &Common, a: &AttributeArgs, out: &mut Output) -> Result<()> {
    let schema = load_schema(c)?;
    let records = load_tracts(c, &schema)?.records;
    let projects = ingest_projects(required(&c.projects, "projects")?)?.records;
    let n_raw = projects.len();
    let (projects, log) = repair_projects(projects);
    let priority = PriorityTracts {
        dac: designations(c, Some(&records), &schema)?.into_iter().filter(|(_, d)| *d).map(|(t, _)| t).collect(),
        low_income: flagged(&a.low_income)?,
        buffer: flagged(&a.buffer)?,
    };
    let districts = district_membership(&records)?;
    let totals = tract_funding_totals(&projects, &districts, &priority)?;
    out.csv("tract_funding.csv", |p| write_tract_funding(p, &totals.tracts))?;
    if out.wants(Format::Csv) {
        let funding: BTreeMap<TractId, f64> = totals.tracts.iter().map(|t| (t.tract_id.clone(), t.total)).collect();
        out.csv("funding.csv", |p| write_funding(p, &funding))?;
    }
    out.json("repair_log.json", &log)?;
    let mut by_category: BTreeMap<&str, f64> = BTreeMap::new();
    for t in &totals.tracts {
        for (k, v) in &t.by_category {
            *by_category.entry(k.as_str()).or_default() += v;
        }
    }
    out.svg("funding_by_category.svg", || {
        let bars: Vec<(String, f64)> = by_category.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        svg::bar_chart("Attributed funding by category", "dollars", &bars)
    })?;
    out.json(
        "attribute.json",
        &json!({
            "projects_read": n_raw,
            "projects_kept": projects.len(),
            "repairs": log.len(),
            "districts": districts.len(),
            "tracts": totals.tracts.len(),
            "attributed_total": totals.tracts.iter().map(|t| t.total).sum::<f64>(),
            "unattributed_projects": totals.unattributed,
            "by_category": by_category,
        }),
    )?;
    Ok(())
}

// ------------------------------------------------------------ synth

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    pub n_tracts: usize,
    #[arg(long, default_value_t = 8)]
    pub n_variables: usize,
    /// Latent correlation between variables
    #[arg(long, default_value_t = 0.3)]
    pub correlation: f64,
    /// Planted jump in log funding at the designation cutoff
    #[arg(long, default_value_t = 0.7)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.0)]
    pub missing_rate: f64,
    /// Noise sd of the planted log funding
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = 200)]
    pub n_projects: usize,
}

fn synth(c: &Common, a: &SynthArgs, out: &mut Output) -> Result<()> {
    let config = SynthConfig {
        n_tracts: a.n_tracts,
        n_variables: a.n_variables,
        correlation: a.correlation,
        tau_star: a.tau,
        missing_rate: a.missing_rate,
        seed: c.seed(),
    };
    let records = generate_tracts(&config)?;
    let schema = config.schema();
    let projects = generate_projects(&records, a.n_projects, c.seed().wrapping_add(2));
    let scores = run_model(&records, &schema, &ModelSpec::baseline())?;
    let scored: Vec<(&TractId, f64)> = scores.iter().filter_map(|s| Some((&s.tract_id, s.percentile?))).collect();
    let log_funding = generate_funding_rdd(&scored.iter().map(|s| s.1).collect::<Vec<_>>(), a.tau, a.noise, c.seed().wrapping_add(3));
    let funding: BTreeMap<TractId, f64> = scored.iter().zip(log_funding).map(|((t, _), y)| ((*t).clone(), y.exp())).collect();

    out.json("schema.json", &schema)?;
    out.csv("tracts.csv", |p| write_tracts(p, &records, &schema))?;
    out.csv("demographics.csv", |p| write_demographics(p, &records))?;
    out.csv("projects.csv", |p| write_projects(p, &projects))?;
    out.csv("funding.csv", |p| write_funding(p, &funding))?;
    out.json("synth.json", &json!({ "config": config, "n_projects": a.n_projects, "noise": a.noise }))?;
    Ok(())
}
