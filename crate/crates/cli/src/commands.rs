use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bnsat::bif::{self, forward_sample, parse_bif, target_network, true_score};
use bnsat::bma::{self, compare_runs, estimate, harvest, records_from_text, records_to_text, BmaError, Harvest};
use bnsat::dataset::COUNTS_HEADER;
use bnsat::decoder::{compare, decode_with, ScoreRow, Strictness};
use bnsat::encoder::{self, emit_wcnf, family_weight, parse_wcnf};
use bnsat::pruning::{prune_with, TieRule};
use bnsat::scoring::enumerate_scores;
use bnsat::solver::{self, Init, SolveResult};
use bnsat::{Assignment, AtomMap, BayesNet, Dataset, LearnedStructure, ParentSet, ScoreTable, SolverConfig, Wcnf};

use crate::error::{CliError, Result};
use crate::{
    BmaArgs, DecodeArgs, EncodeArgs, EncodingArgs, PipelineArgs, Profile, PruneArgs, SampleArgs, ScoreArgs, SearchArgs,
    SolveArgs, TargetArg, Tie,
};

/// Stages that draw random numbers; each gets its own seed.
#[derive(Copy, Clone, Debug)]
enum Stage {
    Sample = 1,
    Solve = 2,
    Bma = 3,
}

/// splitmix64 of the master seed offset by the stage.
fn stage_seed(master: u64, stage: Stage) -> u64 {
    let mut z = master.wrapping_add((stage as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    let seed = z ^ (z >> 31);
    log::info!("{stage:?} seed {seed} from master seed {master}");
    seed
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn load_net(spec: &str) -> Result<BayesNet> {
    let text = match spec {
        "builtin:asia" => bif::ASIA_BIF.to_string(),
        "builtin:toy3" => bif::TOY3_BIF.to_string(),
        path => read(Path::new(path))?,
    };
    parse_bif(&text).map_err(|e| CliError::parse(spec, e))
}

fn load_data(path: &Path, schema: Option<&BayesNet>) -> Result<Dataset> {
    let text = read(path)?;
    let parsed = if text.starts_with(COUNTS_HEADER) {
        Dataset::from_count_text(&text)
    } else {
        Dataset::ingest_csv(&text, schema.map(|n| n.variables()))
    };
    parsed.map_err(|e| CliError::parse(path.display(), e))
}

fn load_scores(path: &Path) -> Result<ScoreTable> {
    ScoreTable::from_text(&read(path)?).map_err(|e| CliError::parse(path.display(), e))
}

fn load_wcnf(path: &Path) -> Result<Wcnf> {
    parse_wcnf(&read(path)?).map_err(|e| CliError::parse(path.display(), e))
}

fn load_atoms(path: &Path) -> Result<AtomMap> {
    AtomMap::from_text(&read(path)?).map_err(|e| CliError::parse(path.display(), e))
}

/// The assignment plus the digest of the wcnf it solves, if recorded.
fn load_assignment(path: &Path) -> Result<(Assignment, Option<String>)> {
    let text = read(path)?;
    let digest = text
        .lines()
        .filter_map(|l| l.strip_prefix('#'))
        .flat_map(str::split_whitespace)
        .find_map(|kv| kv.strip_prefix("wcnf="))
        .map(str::to_string);
    let a = Assignment::from_text(&text).map_err(|e| CliError::parse(path.display(), e))?;
    Ok((a, digest))
}

fn assignment_text(a: &Assignment, wcnf: &Wcnf) -> String {
    format!("# wcnf={}\n{}", wcnf.digest(), a.to_text())
}

fn check_pair(problem: &Wcnf, map: &AtomMap) -> Result<()> {
    if map.wcnf_digest() != problem.digest() {
        return Err(CliError::Digest(format!(
            "atom map was written for wcnf {}, got {}",
            map.wcnf_digest(),
            problem.digest()
        )));
    }
    if let Some(p) = problem.provenance() {
        if p.scores_digest != map.scores_digest() {
            return Err(CliError::Digest(format!(
                "wcnf encodes scores {}, atom map {}",
                p.scores_digest,
                map.scores_digest()
            )));
        }
    }
    Ok(())
}

fn parse_noise(s: &str) -> Result<(u32, u32)> {
    let bad = || CliError::Other(format!("noise `{s}`: expected N/D or N"));
    match s.split_once('/') {
        Some((n, d)) => Ok((n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?)),
        None => Ok((s.trim().parse().map_err(|_| bad())?, 100)),
    }
}

fn solver_config(args: &SearchArgs, stage: Stage, target_cost: Option<u64>) -> Result<SolverConfig> {
    let mut c = match args.profile {
        Profile::Baseline => SolverConfig::baseline(),
        Profile::Long => SolverConfig::long(),
    };
    if let Some(t) = args.tries {
        c.tries = t;
    }
    if let Some(cut) = args.cutoff {
        c.cutoff = cut;
    }
    if let Some(n) = &args.noise {
        (c.noise_num, c.noise_den) = parse_noise(n)?;
    }
    if let Some(b) = args.allow_hard_break {
        c.allow_random_hard_break = b;
    }
    c.init = match args.init.as_str() {
        "random" => Init::Random,
        "allfalse" => Init::AllFalse,
        path => {
            let (a, _) = load_assignment(Path::new(path))?;
            Init::Given(a)
        }
    };
    c.target_cost = target_cost;
    c.seed = stage_seed(args.seed, stage);
    c.validate().map_err(CliError::other)?;
    Ok(c)
}

fn parent_cap(requested: Option<usize>, data: &Dataset) -> usize {
    requested.unwrap_or_else(|| 3.min(data.num_variables().saturating_sub(1)))
}

fn tie_rule(t: Tie) -> TieRule {
    match t {
        Tie::Strict => TieRule::Strict,
        Tie::NonStrict => TieRule::NonStrict,
    }
}

fn do_sample(net: &BayesNet, rows: u64, master: u64) -> Result<Dataset> {
    forward_sample(net, rows, stage_seed(master, Stage::Sample)).map_err(CliError::other)
}

fn do_encode(table: &ScoreTable, e: &EncodingArgs) -> Result<(Wcnf, AtomMap)> {
    let (w, map) = encoder::encode(table, e.encoding, e.cycle).map_err(CliError::other)?;
    println!(
        "encoded {} families as {} atoms, {} clauses ({} hard), top {}",
        map.num_families(),
        w.num_atoms(),
        w.clauses().len(),
        w.num_hard(),
        w.top()
    );
    Ok((w, map))
}

fn do_solve(problem: &Wcnf, config: &SolverConfig) -> Result<SolveResult> {
    let res = solver::solve(problem, config).map_err(CliError::other)?;
    print!("{}", res.stats.render_trace(problem, config));
    Ok(res)
}

fn stats_json(res: &SolveResult, problem: &Wcnf, config: &SolverConfig) -> String {
    let v = serde_json::json!({
        "wcnf": problem.digest(),
        "seed": config.seed,
        "tries": config.tries,
        "cutoff": config.cutoff,
        "noise": [config.noise_num, config.noise_den],
        "allow_random_hard_break": config.allow_random_hard_break,
        "stats": res.stats,
    });
    let mut s = serde_json::to_string_pretty(&v).expect("stats serialize");
    s.push('\n');
    s
}

fn finish_solve(res: &SolveResult) -> Result<()> {
    match res.stats.target_cost {
        Some(target) if !res.stats.success => Err(CliError::TargetNotMet { target, best: res.cost }),
        _ => Ok(()),
    }
}

fn do_decode(a: &Assignment, map: &AtomMap, lenient: bool) -> Result<LearnedStructure> {
    let mode = if lenient { Strictness::Lenient } else { Strictness::Strict };
    let learned = decode_with(a, map, mode).map_err(CliError::other)?;
    println!("learned structure: score {:.4}, cost {}, {} arcs", learned.score(), learned.cost(), learned.num_arcs());
    for (i, v) in learned.variables().iter().enumerate() {
        let names: Vec<&str> = learned.parents(i).iter().map(|p| learned.variables()[p].name.as_str()).collect();
        println!("  {} <- {{{}}}", v.name, names.join(", "));
    }
    Ok(learned)
}

fn network_json(learned: &LearnedStructure) -> Result<String> {
    let mut s = learned.to_network("learned").map_err(CliError::other)?.to_json();
    if !s.ends_with('\n') {
        s.push('\n');
    }
    Ok(s)
}

/// Rounded cost the true network's cap-projected structure would have.
fn truth_target_cost(net: &BayesNet, table: &ScoreTable) -> Result<u64> {
    let target = target_network(net, table).map_err(CliError::other)?;
    let mut total = 0u64;
    for i in 0..target.num_variables() {
        let s = table.score(i, &ParentSet::new(target.parents(i).to_vec())).expect("target families are scored");
        total += family_weight(s).ok_or_else(|| CliError::Other(format!("score {s} has no integer weight")))?;
    }
    Ok(total)
}

fn comparison_report(net: &BayesNet, data: &Dataset, table: &ScoreTable, learned: &LearnedStructure) -> Result<String> {
    let alpha = table.alpha();
    let truth = true_score(net, data, alpha).map_err(CliError::other)?;
    let target = target_network(net, table).map_err(CliError::other)?;
    let target_score = true_score(&target, data, alpha).map_err(CliError::other)?;
    let row = ScoreRow {
        label: format!("{}", data.total()),
        true_score: truth,
        target_score,
        found_score: learned.score(),
    };
    let cmp = compare(learned, net, truth).map_err(CliError::other)?;
    let mut s = String::new();
    writeln!(s, "{}", ScoreRow::header()).unwrap();
    writeln!(s, "{}", row.render()).unwrap();
    s.push('\n');
    s.push_str(&cmp.render());
    Ok(s)
}

fn bma_error(e: BmaError) -> CliError {
    match e {
        BmaError::MapMismatch => CliError::Digest(e.to_string()),
        BmaError::Format { .. } => CliError::parse("records", e),
        e => CliError::other(e),
    }
}

fn do_harvest(problem: &Wcnf, map: &AtomMap, config: &SolverConfig, keep_top: usize) -> Result<Harvest> {
    let h = harvest(problem, map, config, keep_top).map_err(bma_error)?;
    println!(
        "harvested {} distinct structures, kept {}, best score {:.4}",
        h.distinct,
        h.records.len(),
        h.records.first().map_or(f64::NAN, |r| r.score)
    );
    Ok(h)
}

pub fn sample(a: &SampleArgs) -> Result<()> {
    let net = load_net(&a.bif)?;
    let data = do_sample(&net, a.rows, a.seed)?;
    write(&a.out, &data.to_count_text())?;
    if let Some(p) = &a.csv {
        write(p, &data.to_csv())?;
    }
    if let Some(p) = &a.network_out {
        write(p, &net.to_json())?;
    }
    println!("sampled {} rows ({} distinct) from {}, digest {}", data.total(), data.distinct(), net.name(), data.digest());
    Ok(())
}

pub fn score(a: &ScoreArgs) -> Result<()> {
    let schema = a.schema.as_deref().map(load_net).transpose()?;
    let data = load_data(&a.data, schema.as_ref())?;
    let table = enumerate_scores(&data, parent_cap(a.max_parents, &data), a.alpha).map_err(CliError::other)?;
    write(&a.out, &table.to_text())?;
    println!("scored {} families over {} variables, digest {}", table.len(), table.num_variables(), table.digest());
    Ok(())
}

pub fn prune(a: &PruneArgs) -> Result<()> {
    let table = load_scores(&a.scores)?;
    let pruned = prune_with(&table, tie_rule(a.tie)).map_err(CliError::other)?;
    println!("kept {} of {} families (at most {} per child)", pruned.total_kept(), table.len(), pruned.max_kept());
    write(&a.out, &pruned.table().to_text())
}

pub fn encode(a: &EncodeArgs) -> Result<()> {
    let table = load_scores(&a.scores)?;
    let (w, map) = do_encode(&table, &a.encoding)?;
    write(&a.out, &emit_wcnf(&w))?;
    write(&a.atoms, &map.to_text())
}

pub fn solve(a: &SolveArgs) -> Result<()> {
    let problem = load_wcnf(&a.wcnf)?;
    if let Some(p) = &a.atoms {
        check_pair(&problem, &load_atoms(p)?)?;
    }
    let config = solver_config(&a.search, Stage::Solve, a.target_cost)?;
    let res = do_solve(&problem, &config)?;
    write(&a.out, &assignment_text(&res.best, &problem))?;
    if let Some(p) = &a.stats {
        write(p, &stats_json(&res, &problem, &config))?;
    }
    finish_solve(&res)
}

pub fn decode(a: &DecodeArgs) -> Result<()> {
    let map = load_atoms(&a.atoms)?;
    let (assignment, digest) = load_assignment(&a.assignment)?;
    if let Some(d) = digest.filter(|d| d != map.wcnf_digest()) {
        return Err(CliError::Digest(format!("assignment solves wcnf {d}, atom map describes {}", map.wcnf_digest())));
    }
    let learned = do_decode(&assignment, &map, a.lenient)?;
    write(&a.out, &network_json(&learned)?)?;
    if let Some(reference) = &a.compare {
        let net = load_net(reference)?;
        let data = load_data(a.data.as_deref().expect("clap requires --data"), Some(&net))?;
        let table = load_scores(a.scores.as_deref().expect("clap requires --scores"))?;
        if table.digest() != map.scores_digest() {
            return Err(CliError::Digest(format!(
                "atom map encodes scores {}, got {}",
                map.scores_digest(),
                table.digest()
            )));
        }
        if data.digest() != map.data_digest() {
            return Err(CliError::Digest(format!("scores come from data {}, got {}", map.data_digest(), data.digest())));
        }
        let report = comparison_report(&net, &data, &table, &learned)?;
        print!("\n{report}");
        if let Some(p) = &a.report {
            write(p, &report)?;
        }
    }
    Ok(())
}

pub fn bma(a: &BmaArgs) -> Result<()> {
    let problem = load_wcnf(&a.wcnf)?;
    let map = load_atoms(&a.atoms)?;
    check_pair(&problem, &map)?;
    let config = solver_config(&a.search, Stage::Bma, None)?;
    let h = do_harvest(&problem, &map, &config, a.keep_top)?;
    let est = estimate(&h.records, &map).map_err(bma_error)?;
    write(&a.records, &records_to_text(&h.records, &map))?;
    write(&a.posteriors, &est.to_text(&map))?;
    if let Some(other) = &a.against {
        let records = records_from_text(&read(other)?, &map).map_err(bma_error)?;
        let other_est = estimate(&records, &map).map_err(bma_error)?;
        let d = compare_runs(&est, &other_est, a.threshold).map_err(bma_error)?;
        println!(
            "max divergence {:.4} ({:.4} over sets above {}), {} sets differ by more than {}",
            d.max_diff,
            d.max_diff_present,
            bma::PRESENCE_FLOOR,
            d.large,
            d.threshold
        );
        if let Some(p) = &a.scatter {
            write(p, &d.scatter_text())?;
        }
    }
    Ok(())
}

pub fn pipeline(a: &PipelineArgs) -> Result<()> {
    let out = |name: &str| -> PathBuf { a.out_dir.join(name) };
    let net = load_net(&a.bif)?;
    write(&out("network.json"), &net.to_json())?;

    let data = do_sample(&net, a.rows, a.search.seed)?;
    write(&out("data.counts"), &data.to_count_text())?;
    println!("sampled {} rows ({} distinct), digest {}", data.total(), data.distinct(), data.digest());

    let scores = enumerate_scores(&data, parent_cap(a.max_parents, &data), a.alpha).map_err(CliError::other)?;
    write(&out("scores.txt"), &scores.to_text())?;
    let pruned = prune_with(&scores, tie_rule(a.tie)).map_err(CliError::other)?;
    println!("kept {} of {} families", pruned.total_kept(), scores.len());
    let table = pruned.into_table();
    write(&out("pruned.txt"), &table.to_text())?;

    let (problem, map) = do_encode(&table, &a.encoding)?;
    write(&out("problem.wcnf"), &emit_wcnf(&problem))?;
    write(&out("atoms.txt"), &map.to_text())?;

    let target = match &a.target_cost {
        None => None,
        Some(TargetArg::Cost(c)) => Some(*c),
        Some(TargetArg::Truth) => Some(truth_target_cost(&net, &table)?),
    };
    let config = solver_config(&a.search, Stage::Solve, target)?;
    let res = do_solve(&problem, &config)?;
    write(&out("best.assign"), &assignment_text(&res.best, &problem))?;
    write(&out("stats.json"), &stats_json(&res, &problem, &config))?;

    let learned = do_decode(&res.best, &map, false)?;
    write(&out("learned.json"), &network_json(&learned)?)?;
    let report = comparison_report(&net, &data, &table, &learned)?;
    print!("\n{report}");
    write(&out("report.txt"), &report)?;

    if a.bma {
        let config = solver_config(&a.search, Stage::Bma, None)?;
        let h = do_harvest(&problem, &map, &config, a.keep_top)?;
        let est = estimate(&h.records, &map).map_err(bma_error)?;
        write(&out("records.txt"), &records_to_text(&h.records, &map))?;
        write(&out("posteriors.txt"), &est.to_text(&map))?;
    }
    finish_solve(&res)
}
