//! One line per acceptance criterion; exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use talklearn::client::{script_for, ScriptedClient};
use talklearn_core::learning::{grade_answer, normalize, update_box, LearningItem, SimulatedLearner, MAX_BOX, MIN_BOX};
use talklearn_core::model::{stage_intervals, Ms, ParticipantId, Stage};
use talklearn_core::orchestrator::{
    random_trace, simulate, simulate_resolved, Config, LexiconSpec, RandomTraceParams, Trace,
};
use talklearn_core::telemetry::{compute_metrics, parse_log, serialize_log, EventKind, EventLog};
use talklearn_core::translation::{translate, Lexicon};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn lexicon() -> Lexicon {
    Lexicon::load(&data_dir().join("lexicon-en-fr.json"), "en".into(), "fr".into()).unwrap()
}

fn run(trace: &Trace, seed: u64) -> Result<EventLog, String> {
    simulate(trace, &Config::default(), seed).map_err(|e| format!("simulate seed {seed}: {e}"))
}

fn check(ok: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(message())
    }
}

// ---- 1 ----------------------------------------------------------------------

fn delay_match_soundness() -> Outcome {
    let trace = random_trace(2024, &lexicon(), &RandomTraceParams::default());
    let kinds: BTreeSet<(bool, bool)> = trace.utterances.iter().map(|u| (u.translate, u.practice)).collect();
    check(trace.utterances.len() == 100, || "trace does not have 100 utterances".into())?;
    check(
        kinds.contains(&(true, false)) && kinds.contains(&(false, false)) && kinds.iter().any(|k| k.1),
        || format!("trace is not mixed: {kinds:?}"),
    )?;
    let started = Instant::now();
    let log = run(&trace, 2024)?;
    let elapsed = started.elapsed();

    let mut translated_at: BTreeMap<String, Ms> = BTreeMap::new();
    let mut captured_at: BTreeMap<String, Ms> = BTreeMap::new();
    for e in log.events() {
        let Some(utt) = e.utterance_id.as_ref().map(|u| u.as_str().to_owned()) else { continue };
        match e.kind() {
            EventKind::TranslatedText | EventKind::TranslationFailed => {
                translated_at.insert(utt, e.t_end);
            }
            EventKind::OriginalMedia => {
                captured_at.insert(utt, e.t_end);
            }
            _ => {}
        }
    }
    let mut violations = 0;
    let mut presented = 0;
    for e in log.iter_kind(EventKind::SynthesizedVideo) {
        presented += 1;
        let utt = e.utterance_id.as_ref().unwrap().as_str();
        let ready = translated_at.get(utt).copied().unwrap_or(Ms::MAX).max(captured_at.get(utt).copied().unwrap_or(Ms::MAX));
        if e.t_start < ready {
            violations += 1;
        }
    }
    check(presented > 0, || "no presentations".into())?;
    check(violations == 0, || format!("{violations} presentations start too early"))?;
    check(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("{presented} presentations, 0 violations, {} ms", elapsed.as_millis()))
}

// ---- 2 ----------------------------------------------------------------------

fn partition_ok(intervals: &[(Stage, Ms, Ms)], end: Ms) -> Result<(), String> {
    let mut sorted = intervals.to_vec();
    sorted.sort_by_key(|i| (i.1, i.2));
    let mut cursor = 0;
    for &(stage, a, b) in &sorted {
        if a != cursor {
            return Err(format!("{stage:?} [{a},{b}] after cursor {cursor}"));
        }
        if b < a {
            return Err(format!("{stage:?} [{a},{b}] ends before it starts"));
        }
        cursor = b;
    }
    check(cursor == end, || format!("coverage ends at {cursor}, session at {end}"))
}

fn stage_partition(logs: &[(u64, EventLog)]) -> Outcome {
    for (seed, log) in logs {
        let end = log.closed_at().ok_or_else(|| format!("seed {seed}: log not closed"))?;
        let replayed = stage_intervals(log).map_err(|e| format!("seed {seed}: {e}"))?;
        let mut recorded: BTreeMap<ParticipantId, Vec<(Stage, Ms, Ms)>> = BTreeMap::new();
        for e in log.iter_kind(EventKind::StageChange) {
            recorded
                .entry(e.participant.clone())
                .or_default()
                .push((e.stage_change().unwrap().stage, e.t_start, e.t_end));
        }
        check(recorded.len() == 2, || format!("seed {seed}: {} participants", recorded.len()))?;
        for (p, list) in &recorded {
            partition_ok(list, end).map_err(|e| format!("seed {seed} `{p}` recorded: {e}"))?;
            let replay: Vec<(Stage, Ms, Ms)> = replayed[p].iter().map(|i| (i.stage, i.t_start, i.t_end)).collect();
            partition_ok(&replay, end).map_err(|e| format!("seed {seed} `{p}` replayed: {e}"))?;
        }
    }
    Ok(format!("{} traces, both participants", logs.len()))
}

// ---- 3 ----------------------------------------------------------------------

fn determinism() -> Outcome {
    let lex = lexicon();
    for seed in 100..110 {
        let trace = random_trace(seed, &lex, &RandomTraceParams::default());
        let a = serialize_log(&run(&trace, seed)?);
        let b = serialize_log(&run(&trace, seed)?);
        check(a == b, || format!("seed {seed}: logs differ"))?;
    }
    Ok("10 seeds byte-identical".into())
}

// ---- 4 ----------------------------------------------------------------------

fn five_kinds() -> Outcome {
    let trace = Trace::load(&data_dir().join("traces/story.json")).map_err(|e| e.to_string())?;
    let resolved = trace.resolve(&Config::default()).map_err(|e| e.to_string())?;
    let mut directions = BTreeSet::new();
    for u in &resolved.utterances {
        if u.translate_requested && !u.practice {
            directions.insert(u.speaker.clone());
        }
    }
    check(directions.len() == 2, || "trace lacks a translated utterance in each direction".into())?;
    let log = run(&trace, 7)?;
    let wanted = [
        EventKind::OriginalMedia,
        EventKind::TranscribedText,
        EventKind::TranslatedText,
        EventKind::TranslatedSpeech,
        EventKind::SynthesizedVideo,
    ];
    for kind in wanted {
        let events: Vec<_> = log.iter_kind(kind).collect();
        check(!events.is_empty(), || format!("no {} events", kind.as_str()))?;
        check(events.iter().all(|e| e.t_start <= e.t_end), || {
            format!("{} with end before start", kind.as_str())
        })?;
    }
    // the serialized form carries both times for every event
    for line in String::from_utf8(serialize_log(&log)).unwrap().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        check(v["t_start"].is_u64() && v["t_end"].is_u64(), || format!("missing times: {line}"))?;
    }
    Ok("all five kinds present with start and end".into())
}

// ---- 5 ----------------------------------------------------------------------

/// Recount from the raw JSON lines, without the library's event types.
fn recount(jsonl: &[u8]) -> BTreeMap<String, (f64, f64)> {
    let lines: Vec<Value> = String::from_utf8(jsonl.to_vec())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let machine: BTreeSet<String> = lines
        .iter()
        .filter(|v| v["kind"] == "TranslatedText" && v["payload"]["source"] == "Machine")
        .map(|v| v["utt"].as_str().unwrap().to_owned())
        .collect();
    let mut counts: BTreeMap<String, (u64, u64, u64)> = BTreeMap::new();
    for v in &lines {
        let p = v["participant"].as_str().unwrap().to_owned();
        let entry = counts.entry(p).or_default();
        if v["kind"] != "OriginalMedia" || v["payload"]["practice"] == true {
            continue;
        }
        entry.0 += 1;
        if v["payload"]["translate_requested"] == false {
            entry.1 += 1;
        }
        if machine.contains(v["utt"].as_str().unwrap()) {
            entry.2 += 1;
        }
    }
    let pct = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            (1000.0 * num as f64 / den as f64 + 0.5).floor() / 10.0
        }
    };
    counts
        .into_iter()
        .map(|(p, (sent, untr, mach))| (p, (pct(untr, sent), pct(mach, sent))))
        .collect()
}

fn metrics_oracle(logs: &[(u64, EventLog)]) -> Outcome {
    let mut compared = 0;
    for (seed, log) in logs {
        let oracle = recount(&serialize_log(log));
        for (p, (untranslated, machine)) in oracle {
            let m = compute_metrics(log, &ParticipantId::new(&p)).map_err(|e| e.to_string())?;
            check(m.untranslated_pct == untranslated && m.machine_pct == machine, || {
                format!(
                    "seed {seed} `{p}`: library ({}, {}) vs recount ({untranslated}, {machine})",
                    m.untranslated_pct, m.machine_pct
                )
            })?;
            compared += 1;
        }
    }
    let trace = Trace::load(&data_dir().join("traces/four-messages.json")).map_err(|e| e.to_string())?;
    let log = run(&trace, 0)?;
    let alice = compute_metrics(&log, &"alice".into()).map_err(|e| e.to_string())?;
    check(alice.messages_sent == 4 && alice.untranslated_pct == 25.0, || {
        format!("four-message example gives {} of {}", alice.untranslated_pct, alice.messages_sent)
    })?;
    Ok(format!("{compared} participant recounts match; 4-message example 25.0%"))
}

// ---- 6 ----------------------------------------------------------------------

fn translation_round_trip() -> Outcome {
    let lex = lexicon();
    let (en, fr) = (lex.languages().0.clone(), lex.languages().1.clone());
    let words = lex.words(&en);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..1000 {
        let n = rng.gen_range(1..=10);
        let mut tokens: Vec<String> = (0..n)
            .map(|_| {
                let w = words.choose(&mut rng).unwrap().to_string();
                match rng.gen_range(0..3) {
                    0 => w.to_uppercase(),
                    1 => {
                        let mut c = w.chars();
                        c.next().unwrap().to_uppercase().chain(c).collect()
                    }
                    _ => w,
                }
            })
            .collect();
        if rng.gen_bool(0.5) {
            let last = tokens.last_mut().unwrap();
            last.push(*['.', '!', '?', ','].choose(&mut rng).unwrap());
        }
        let sentence = tokens.join(if rng.gen_bool(0.2) { "  " } else { " " });
        let there = translate(&sentence, &en, &fr, &lex).map_err(|e| e.to_string())?;
        let back = translate(&there, &fr, &en, &lex).map_err(|e| e.to_string())?;
        let expected = sentence.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        check(back == expected, || format!("sentence {i}: `{sentence}` came back as `{back}`"))?;
    }
    Ok("1000 sentences".into())
}

// ---- 7 ----------------------------------------------------------------------

fn reference_levenshtein(a: &[char], b: &[char]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

fn random_text(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[char] = &['a', 'b', 'c', 'e', 'é', 'o', 'ü', 'x', ' ', 'A', 'B', 'ß'];
    let n = rng.gen_range(0..16);
    (0..n).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

fn grading_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..500 {
        let expected = random_text(&mut rng);
        let answer = if rng.gen_bool(0.3) {
            let mut a: Vec<char> = expected.chars().collect();
            if !a.is_empty() {
                let at = rng.gen_range(0..a.len());
                a[at] = 'z';
            }
            a.into_iter().collect()
        } else {
            random_text(&mut rng)
        };
        let e: Vec<char> = normalize(&expected).chars().collect();
        let a: Vec<char> = normalize(&answer).chars().collect();
        let longest = e.len().max(a.len());
        let reference = if longest == 0 {
            1.0
        } else {
            1.0 - reference_levenshtein(&a, &e) as f64 / longest as f64
        };
        let item = LearningItem {
            id: "x".into(),
            owner: "alice".into(),
            source_utterance_id: "u".into(),
            direction: talklearn_core::learning::Direction::Sent,
            prompt_kind: talklearn_core::learning::PromptKind::Review,
            native_text: String::new(),
            foreign_text: expected.clone(),
            box_level: 1,
            due_at: 0,
            history: Vec::new(),
        };
        let got = grade_answer(&item, &answer).similarity;
        check(got == reference, || format!("pair {i} ({expected:?}, {answer:?}): {got} vs {reference}"))?;
    }
    Ok("500 pairs exact".into())
}

// ---- 8 ----------------------------------------------------------------------

fn learning_containment(logs: &[(u64, EventLog)]) -> Outcome {
    let mut shown = 0;
    for (seed, log) in logs {
        let stages = stage_intervals(log).map_err(|e| e.to_string())?;
        for e in log.iter_kind(EventKind::LearningItemShown) {
            shown += 1;
            for i in &stages[&e.participant] {
                let busy = matches!(i.stage, Stage::Speaking | Stage::Viewing);
                check(!(busy && i.t_start < e.t_end && e.t_start < i.t_end), || {
                    format!("seed {seed}: prompt [{}, {}] overlaps {:?} [{}, {}]", e.t_start, e.t_end, i.stage, i.t_start, i.t_end)
                })?;
            }
        }
    }
    check(shown > 0, || "no prompts were shown".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut item = LearningItem {
        id: "x".into(),
        owner: "alice".into(),
        source_utterance_id: "u".into(),
        direction: talklearn_core::learning::Direction::Sent,
        prompt_kind: talklearn_core::learning::PromptKind::Review,
        native_text: "hello".into(),
        foreign_text: "bonjour".into(),
        box_level: 1,
        due_at: 0,
        history: Vec::new(),
    };
    for s in 0..10_000 {
        item.box_level = MIN_BOX;
        item.history.clear();
        let len = rng.gen_range(1..40);
        let mut now = 0;
        for _ in 0..len {
            now += rng.gen_range(0..100_000);
            item = update_box(&item, rng.gen_bool(0.6), now);
            check((MIN_BOX..=MAX_BOX).contains(&item.box_level), || {
                format!("sequence {s}: box {}", item.box_level)
            })?;
        }
    }
    Ok(format!("{shown} prompts outside Speaking/Viewing; 10000 box sequences in range"))
}

// ---- 9 ----------------------------------------------------------------------

fn log_round_trip(logs: &[(u64, EventLog)]) -> Outcome {
    for (seed, log) in logs {
        let bytes = serialize_log(log);
        let parsed = parse_log(&bytes).map_err(|e| format!("seed {seed}: {e}"))?;
        check(parsed == *log, || format!("seed {seed}: round trip differs"))?;
        check(serialize_log(&parsed) == bytes, || format!("seed {seed}: reserialization differs"))?;

        let text = String::from_utf8(bytes).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let bad = 1 + (*seed as usize * 7) % lines.len();
        lines[bad - 1] = "{\"seq\": oops";
        let err = parse_log(lines.join("\n").as_bytes()).err().ok_or_else(|| format!("seed {seed}: corrupt log parsed"))?;
        check(err.line == bad && err.to_string().contains(&format!("line {bad}")), || {
            format!("seed {seed}: corrupt line {bad} reported as `{err}`")
        })?;
    }
    Ok(format!("{} logs; corrupt lines named", logs.len()))
}

// ---- 10 ---------------------------------------------------------------------

async fn serve_trace(trace: &Trace, seed: u64) -> Result<(EventLog, Vec<String>), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut config = Config::default();
    config.translation.lexicon = trace.lexicon.clone().map(|spec| LexiconSpec {
        path: spec.path.map(|p| trace.base_dir.join(p)),
        ..spec
    });
    config.server.log_dir = dir.path().to_owned();
    config.server.seed = seed;
    let resolved = trace.resolve(&config).map_err(|e| e.to_string())?;
    let server = talklearn::server::start(config.clone(), SocketAddr::from(([127, 0, 0, 1], 0)))
        .await
        .map_err(|e| e.to_string())?;
    let url = format!("ws://{}", server.addr);
    let mut runs = Vec::new();
    for p in &resolved.session.participants {
        let script = script_for(&resolved, &p.id).map_err(|e| e.to_string())?;
        let learner = SimulatedLearner::new(seed, config.learning.learner_accuracy);
        let client = ScriptedClient::new(p.id.clone(), script, Some(learner));
        let url = url.clone();
        runs.push(tokio::spawn(async move { client.run(&url).await }));
    }
    let mut outbound = Vec::new();
    for r in runs {
        let received = r.await.map_err(|e| e.to_string())?.map_err(|e| e.to_string())?;
        outbound.extend(received.iter().map(|m| m.to_json()));
    }
    let path = dir.path().join(format!("{}.jsonl", trace.session_id));
    let mut bytes = Vec::new();
    for _ in 0..100 {
        if let Ok(b) = std::fs::read(&path) {
            if !b.is_empty() {
                bytes = b;
                break;
            }
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    server.shutdown();
    let log = parse_log(&bytes).map_err(|e| format!("served log: {e}"))?;
    Ok((log, outbound))
}

fn wire_equivalence() -> Outcome {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let lex = lexicon();
    let mut traces = vec![Trace::load(&data_dir().join("traces/story.json")).map_err(|e| e.to_string())?];
    for seed in [31, 32, 33] {
        traces.push(random_trace(seed, &lex, &RandomTraceParams::default()));
    }
    let mut messages = 0;
    for (i, trace) in traces.iter().enumerate() {
        let seed = 40 + i as u64;
        let expected = run(trace, seed)?;
        let resolved = trace.resolve(&Config::default()).map_err(|e| e.to_string())?;
        let sim = simulate_resolved(&resolved, &Config::default(), seed).map_err(|e| e.to_string())?;
        let (served, outbound) = runtime.block_on(serve_trace(trace, seed))?;
        check(served == expected, || {
            let first = served
                .events()
                .iter()
                .zip(expected.events())
                .position(|(a, b)| a != b)
                .unwrap_or(served.len().min(expected.len()));
            format!(
                "`{}`: served log differs from simulation at event {first} ({} vs {} events)",
                trace.session_id,
                served.len(),
                expected.len()
            )
        })?;
        check(serialize_log(&served) == serialize_log(&expected), || "served bytes differ".into())?;

        let mut raw_refs: BTreeSet<String> = BTreeSet::new();
        for e in expected.iter_kind(EventKind::OriginalMedia) {
            let m = e.original_media().unwrap();
            raw_refs.insert(m.video.payload_ref.clone());
            raw_refs.insert(m.audio.payload_ref.clone());
        }
        let all: Vec<String> = outbound.iter().cloned().chain(sim.outbound.iter().map(|o| o.message.to_json())).collect();
        for json in &all {
            check(!json.contains("\"media/") && raw_refs.iter().all(|r| !json.contains(r.as_str())), || {
                format!("raw media reference in outbound message {json}")
            })?;
        }
        messages += all.len();
    }
    Ok(format!("{} traces identical; {messages} outbound messages free of raw media", traces.len()))
}

fn main() {
    let lex = lexicon();
    let generated: Vec<(u64, EventLog)> = (0..50)
        .map(|seed| {
            let trace = random_trace(seed, &lex, &RandomTraceParams::default());
            (seed, run(&trace, seed).expect("simulation"))
        })
        .collect();

    let criteria: Vec<Criterion> = vec![
        ("delay-match soundness", Box::new(delay_match_soundness)),
        ("stage partition", Box::new(|| stage_partition(&generated))),
        ("determinism", Box::new(determinism)),
        ("five-kind completeness", Box::new(five_kinds)),
        ("metrics oracle", Box::new(|| metrics_oracle(&generated))),
        ("translation round trip", Box::new(translation_round_trip)),
        ("grading oracle", Box::new(grading_oracle)),
        ("learning containment", Box::new(|| learning_containment(&generated))),
        ("log round trip", Box::new(|| log_round_trip(&generated))),
        ("wire equivalence", Box::new(wire_equivalence)),
    ];
    let mut failed = 0;
    for (name, criterion) in &criteria {
        match criterion() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
