//! Acceptance criteria 1-9. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; exits non-zero on failure.

mod common;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use dcover::bench::{rows_from_csv, rows_from_json, rows_to_csv, rows_to_json, run_sweep, ExperimentConfig, PartitionKind, ProtocolKind, Source};
use dcover::coverage::{greedy_cover, oracle_sanity, random_system, CoverageOracle, SetSystem, DEFAULT_ENUM_BUDGET};
use dcover::isgreedy::{acceptance_fraction, is_greedy};
use dcover::lowerbound::{
    check_replay, check_special_blocks, rnd_check_random_subsets, rnd_construct, sample_hard_instance,
    sample_hard_instance_traced, verify_gadget_properties, Label, Provenance,
};
use dcover::rng;
use dcover::sim::{partition, run_protocol, PartitionMode, RunOptions, SendAll, Transcript};
use dcover::spgreedy::{guess_schedule, sp_greedy_auto, sp_greedy_with, Scripted, SpGreedyParams};
use dcover::stats::chi_square_uniform;
use dcover::stream::{
    stream_from_system, stream_steps, streaming_set_cover, streaming_sp_greedy, DynamicSetStream, ExactSampler,
    StreamConfig,
};

use common::{greedy, levels, masks, max_cover, median, min_set_cover};

const ONE_MINUS_INV_E: f64 = 1.0 - 1.0 / std::f64::consts::E;

struct Outcome {
    pass: bool,
    detail: String,
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    if took > limit {
        o.pass = false;
        o.detail = format!("{}; took {:.1?} > {:?}", o.detail, took, limit);
    } else {
        o.detail = format!("{}; {:.1?}", o.detail, took);
    }
    o
}

fn criterion1() -> Outcome {
    let (n, m, k, eps, r) = (60, 40, 5, 0.2, 20);
    let mut ok = 0;
    let seeds = 50;
    for seed in 0..seeds {
        let sys = random_system(n, m, 0.1, seed);
        let opt = max_cover(&masks(&sys), k) as f64;
        let inst = partition(sys, 4, PartitionMode::RoundRobin).unwrap();
        let oracle = CoverageOracle::new(inst.system());
        let (run, _) = sp_greedy_auto(&inst, &oracle, &SpGreedyParams::new(k, eps, r), seed).unwrap();
        if run.value >= (ONE_MINUS_INV_E - eps) * opt - 1e-9 {
            ok += 1;
        }
    }
    let rate = ok as f64 / seeds as f64;
    Outcome {
        pass: rate >= 0.95,
        detail: format!("pass rate {ok}/{seeds}"),
    }
}

fn criterion2() -> Outcome {
    let (n, m, k, eps) = (60usize, 40usize, 5usize, 0.2);
    let rounds = [4usize, 8, 16, 32];
    let config = ExperimentConfig {
        protocol: ProtocolKind::SpGreedy,
        source: Source::RandomUniform { density: 0.1 },
        n: vec![n],
        m: vec![m],
        k: vec![k],
        rounds: rounds.to_vec(),
        eps: vec![eps],
        p: vec![4],
        partition: vec![PartitionKind::Rr],
        seeds: (0..30).collect(),
        opt_guess: None,
        budget: DEFAULT_ENUM_BUDGET,
    };
    let rows = run_sweep(&config, Vec::new(), None, |_| {}).unwrap();
    let ell = levels(eps);
    let mut within = true;
    let mut medians = Vec::new();
    for &r in &rounds {
        let s = r.div_ceil(ell);
        let bound = 16.0 * (r * k) as f64 * (m as f64).powf(1.0 / s as f64) * (m as f64).log2();
        let items: Vec<f64> = rows
            .iter()
            .filter(|row| row.rounds == r)
            .map(|row| {
                assert!(row.error.is_none(), "{:?}", row.error);
                row.total_items as f64
            })
            .collect();
        within &= items.iter().all(|&x| x <= bound);
        medians.push(median(&items));
    }
    let monotone = medians.windows(2).all(|w| w[1] <= w[0]);
    Outcome {
        pass: within && monotone,
        detail: format!("medians {medians:?}, all within bound: {within}"),
    }
}

fn criterion3() -> Outcome {
    let (n, m, k, p) = (50, 30, 4, 3);
    let mut failures = Vec::new();
    let mut rounds_checked = 0;
    for seed in 0..50u64 {
        let sys = random_system(n, m, 0.1, seed);
        let opt = max_cover(&masks(&sys), k) as f64;
        let inst = partition(sys, p, PartitionMode::RoundRobin).unwrap();
        for r in 1..=3usize {
            let frac = (k as f64).powf(-1.0 / (r as f64 + 1.0));
            let mut best = 0;
            for g in guess_schedule(1.0, n as f64).unwrap() {
                let run = is_greedy(&inst, k, r, g, seed).unwrap();
                if let Err(e) = run.check_invariants() {
                    failures.push(format!("seed {seed} r {r} guess {g}: {e}"));
                }
                for rd in &run.rounds {
                    for mr in &rd.machines {
                        rounds_checked += 1;
                        if mr.universe_after as f64 > frac * mr.sketch_cover as f64 + 1e-9 {
                            failures.push(format!("seed {seed} r {r}: shrinkage {} > {frac}·{}", mr.universe_after, mr.sketch_cover));
                        }
                        if mr.sketch_cover > mr.universe_before || mr.universe_before > n {
                            failures.push(format!("seed {seed} r {r}: payload above |U|"));
                        }
                    }
                }
                best = best.max(run.cover.value);
            }
            assert!((acceptance_fraction(k, r) - frac).abs() < 1e-12);
            let need = ONE_MINUS_INV_E * opt / (4.0 * r as f64 * (k as f64).powf(1.0 / (r as f64 + 1.0)));
            if (best as f64) < need - 1e-9 {
                failures.push(format!("seed {seed} r {r}: {best} < {need}"));
            }
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "{} failures over 150 runs, {rounds_checked} machine-rounds checked{}",
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
        ),
    }
}

fn brute_pairs(sets: &[Vec<usize>]) -> usize {
    let mut worst = 0;
    for a in 0..sets.len() {
        for b in a + 1..sets.len() {
            let inter = sets[a].iter().filter(|x| sets[b].binary_search(x).is_ok()).count();
            worst = worst.max(inter);
        }
    }
    worst
}

fn criterion4() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for (base, level, c, cap) in [(8usize, 1usize, 2usize, 12.0f64), (4, 2, 2, 32.0)] {
        match rnd_construct(base, level, c, rng::derive(0x9ac4, &[base as u64, c as u64, level as u64]), 100) {
            Ok(fam) => {
                let size = base.pow(2 * level as u32 - 1);
                let sizes_ok = fam.sets.len() == base.pow(c as u32) && fam.sets.iter().all(|s| s.len() == size);
                let worst = brute_pairs(&fam.sets);
                let verified = fam.verify().is_ok();
                let ok = sizes_ok && verified && (worst as f64) <= cap && (fam.pair_cap - cap).abs() < 1e-9;
                pass &= ok;
                notes.push(format!("N={base} l={level}: {} attempts, max pair {worst} cap {cap}", fam.attempts));
                if level == 1 {
                    let rep = rnd_check_random_subsets(&fam, 2000, 1);
                    pass &= rep.violations == 0;
                    notes.push(format!("subset violations {}", rep.violations));
                }
            }
            Err(e) => {
                pass = false;
                notes.push(format!("N={base} l={level}: {e}"));
            }
        }
    }
    Outcome {
        pass,
        detail: notes.join(", "),
    }
}

fn criterion5() -> Outcome {
    let (base, c, r) = (4usize, 2usize, 1usize);
    let k1 = (base * base - base) as f64;
    let yes_need = k1 * base as f64;
    let no_cap = k1 * 2.0 * c as f64 * ((base * base) as f64).log2();
    let (mut yes, mut yes_ok, mut no, mut no_ok, mut structural) = (0, 0, 0, 0, 0);
    for seed in 0..200u64 {
        let (inst, trace) = sample_hard_instance_traced(base, c, r, seed).unwrap();
        let sys = inst.system();
        if check_special_blocks(&inst, &trace).is_ok() && check_replay(&inst, &trace).is_ok() {
            structural += 1;
        }
        match inst.label {
            Label::Yes => {
                yes += 1;
                let cert = &inst.provenance.certificate;
                let covered = sys.union_of(cert).count();
                if cert.len() == inst.k && covered as f64 == yes_need {
                    yes_ok += 1;
                }
            }
            Label::No => {
                no += 1;
                if greedy(&masks(sys), inst.k) as f64 <= no_cap {
                    no_ok += 1;
                }
            }
        }
    }
    let no_rate = if no == 0 { 1.0 } else { no_ok as f64 / no as f64 };
    Outcome {
        pass: yes_ok == yes && no_rate >= 1.0 - 2.0 / base as f64 && structural == 200,
        detail: format!("Y {yes_ok}/{yes}, N {no_ok}/{no} (cap {no_cap}), structure {structural}/200"),
    }
}

fn criterion6() -> Outcome {
    let rep = verify_gadget_properties(4, 2, 1, 500, 6).unwrap();
    Outcome {
        pass: rep.oblivious.p_value > 0.01 && rep.yes_rate() == 1.0,
        detail: format!(
            "independence p = {:.3} (dof {}), Y preservation {}",
            rep.oblivious.p_value,
            rep.oblivious.dof,
            rep.yes_rate()
        ),
    }
}

fn criterion7() -> Outcome {
    let mut same = 0;
    let cases = 20;
    for case in 0..cases {
        let sys = random_system(40, 16, 0.15, 100 + case);
        let stream = stream_from_system(&sys, 80, case);
        let cfg = StreamConfig::new(3, 0.2);
        let run = streaming_sp_greedy(&stream, &cfg, case).unwrap();
        let inst = partition(run.live.clone(), 1, PartitionMode::RoundRobin).unwrap();
        let oracle = CoverageOracle::new(inst.system());
        let rounds = levels(0.2) * stream_steps(stream.m_bound);
        let mut all = true;
        let mut best: Option<(usize, Vec<usize>)> = None;
        for g in &run.guesses {
            let script = Scripted {
                steps: g.harvest.clone(),
            };
            let params = SpGreedyParams::new(3, 0.2, rounds).with_guess(g.opt_guess);
            let coord = sp_greedy_with(&inst, &oracle, &params, &script, case, RunOptions::default()).unwrap();
            all &= coord.solution.items == g.items;
            let v = inst.system().union_of(&coord.solution.items).count();
            if best.as_ref().map_or(true, |(bv, _)| v > *bv) {
                best = Some((v, coord.solution.items));
            }
        }
        if all && best.map(|b| b.1) == Some(run.cover.indices.clone()) {
            same += 1;
        }
    }

    // uniformity over a 64-set support with uneven multiplicities and churn
    let mut s = ExactSampler::default();
    let mut r = rng::rng(7, &[1]);
    for i in 0..64usize {
        for _ in 0..=(i % 3) {
            s.update(&[i, i + 64], 1);
        }
        s.update(&[i + 200], 1);
        s.update(&[i + 200], -1);
    }
    let mut counts = vec![0u64; 64];
    for _ in 0..10_000 {
        let set = s.draw(&mut r).unwrap();
        counts[set[0]] += 1;
    }
    let chi = chi_square_uniform(&counts);
    Outcome {
        pass: same == cases && chi.p_value > 0.01,
        detail: format!("identical covers {same}/{cases}, sampler chi-square p = {:.3}", chi.p_value),
    }
}

fn coverable(n: usize, m: usize, seed: u64) -> SetSystem {
    let base = random_system(n, m, 0.25, seed);
    let mut sets: Vec<Vec<usize>> = base.sets().iter().map(|s| s.iter().collect()).collect();
    let mut r = rng::rng(seed, &[0xc0]);
    let covered = base.covered();
    for e in 0..n {
        if !covered.contains(e) {
            use rand::Rng;
            let i = r.gen_range(0..m);
            sets[i].push(e);
            sets[i].sort_unstable();
        }
    }
    SetSystem::new(n, sets).unwrap()
}

fn criterion8() -> Outcome {
    let (n, m) = (24usize, 12usize);
    let runs = 50;
    let (mut covers, mut small, mut in_budget) = (0, 0, 0);
    for seed in 0..runs as u64 {
        let sys = coverable(n, m, seed);
        let stream = stream_from_system(&sys, 60, seed);
        let live = stream.live_system().unwrap();
        let opt = min_set_cover(&masks(&live), n).expect("coverable");
        let Ok(run) = streaming_set_cover(&stream, seed) else {
            continue;
        };
        let lm = masks(&live);
        if run.indices.iter().fold(0u128, |a, &i| a | lm[i]) == (1u128 << n) - 1 {
            covers += 1;
        }
        if run.indices.len() as f64 <= 2.0 * (n as f64).ln() * opt as f64 {
            small += 1;
        }
        let budget = levels(0.2) * (stream.m_bound as f64).log2().ceil() as usize * (2.0 * (n as f64).log2()).ceil() as usize;
        if run.passes <= run.pass_budget && run.pass_budget == budget {
            in_budget += 1;
        }
    }
    Outcome {
        pass: covers == runs && small as f64 >= 0.95 * runs as f64 && in_budget == runs,
        detail: format!("covers {covers}/{runs}, size bound {small}/{runs}, pass budget {in_budget}/{runs}"),
    }
}

fn criterion9() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    let violations: usize = (0..5u64)
        .map(|seed| {
            let sys = random_system(40, 25, 0.15, seed);
            oracle_sanity(&CoverageOracle::new(&sys), 200, seed).violations.len()
        })
        .sum();
    pass &= violations == 0;
    notes.push(format!("sanity violations {violations}/1000 triples"));

    let mut greedy_ok = 0;
    for seed in 0..100u64 {
        let sys = random_system(30, 12, 0.2, 500 + seed);
        let opt = max_cover(&masks(&sys), 3) as f64;
        let got = sys.union_of(&greedy_cover(&CoverageOracle::new(&sys), 3)).count() as f64;
        if got >= ONE_MINUS_INV_E * opt - 1e-9 {
            greedy_ok += 1;
        }
    }
    pass &= greedy_ok == 100;
    notes.push(format!("greedy bound {greedy_ok}/100"));

    let mut formats_ok = true;
    let sys = random_system(30, 10, 0.2, 3);
    let text = sys.to_instance_string(4);
    let (back, k) = SetSystem::parse_instance(&text).unwrap();
    formats_ok &= back.to_instance_string(k) == text;
    let stream = stream_from_system(&sys, 50, 3);
    let st = stream.to_text();
    formats_ok &= DynamicSetStream::parse(&st).unwrap().to_text() == st;
    let inst = partition(sys.clone(), 3, PartitionMode::RoundRobin).unwrap();
    let (_, t) = run_protocol(&inst, &mut SendAll { system: &sys, k: 3 }, 1, RunOptions::default()).unwrap();
    let tj = t.to_json().unwrap();
    formats_ok &= Transcript::from_json(&tj).unwrap().to_json().unwrap() == tj;
    let prov = sample_hard_instance(4, 2, 1, 9).unwrap().provenance;
    let pj = prov.to_json().unwrap();
    formats_ok &= Provenance::from_json(&pj).unwrap().to_json().unwrap() == pj;
    let config = ExperimentConfig {
        protocol: ProtocolKind::IsGreedy,
        source: Source::RandomUniform { density: 0.2 },
        n: vec![30],
        m: vec![12],
        k: vec![3],
        rounds: vec![2],
        eps: vec![0.2],
        p: vec![3],
        partition: vec![PartitionKind::Random],
        seeds: vec![1, 2],
        opt_guess: None,
        budget: DEFAULT_ENUM_BUDGET,
    };
    let rows = run_sweep(&config, Vec::new(), None, |_| {}).unwrap();
    let csv = rows_to_csv(&rows).unwrap();
    let json = rows_to_json(&rows).unwrap();
    formats_ok &= rows_to_csv(&rows_from_csv(&csv).unwrap()).unwrap() == csv;
    formats_ok &= rows_to_json(&rows_from_json(&json).unwrap()).unwrap() == json;
    formats_ok &= rows_from_csv(&csv).unwrap() == rows_from_json(&json).unwrap();
    pass &= formats_ok;
    notes.push(format!("format round trips {}", if formats_ok { "exact" } else { "differ" }));

    Outcome {
        pass,
        detail: notes.join(", "),
    }
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: Vec<(usize, &str, Duration, fn() -> Outcome)> = vec![
        (1, "SPGreedy approximation", Duration::from_secs(60), criterion1),
        (2, "SPGreedy communication trend", Duration::from_secs(120), criterion2),
        (3, "ISGreedy guarantee and shrinkage", Duration::from_secs(60), criterion3),
        (4, "RND construction", Duration::from_secs(30), criterion4),
        (5, "hard-instance gap", Duration::from_secs(120), criterion5),
        (6, "gadget obliviousness", Duration::from_secs(600), criterion6),
        (7, "streaming equivalence", Duration::from_secs(600), criterion7),
        (8, "streaming set cover", Duration::from_secs(600), criterion8),
        (9, "oracle and core invariants", Duration::from_secs(600), criterion9),
    ];
    let mut failed = 0;
    let mut results: HashMap<usize, bool> = HashMap::new();
    for (id, name, limit, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| x == &id.to_string()) {
            continue;
        }
        let o = timed(limit, f);
        println!("criterion {id} ({name}): {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.insert(id, o.pass);
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
