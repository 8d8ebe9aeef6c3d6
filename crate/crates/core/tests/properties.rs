use std::collections::BTreeSet;

use impactloc_core::corpus::{split_random, Category, Dataset, DisasterType, Post};
use impactloc_core::eval::{match_lists, match_sets, soft_overlap_diagnostic, Tally};
use impactloc_core::grounding::{filter_all_locations, filter_impact_extraction, occurrence_count};
use impactloc_core::parse::{parse_all_locations, parse_impact_response, parse_or_empty};
use impactloc_core::prompting::{render_impact_answer, render_locations_answer};
use impactloc_core::text::normalize_entity;
use impactloc_core::{EvalOptions, GoldAnnotation, ImpactPrediction, LocationPrediction, MatchPolicy, Task};
use proptest::prelude::*;

const PLACES: &[&str] = &[
    "Mati",
    "Athens",
    "Kerala",
    "Chengannur",
    "Fort McMurray",
    "North Canterbury",
    "Kashmir",
    "Mirpur",
    "São Paulo",
    "Amatrice",
];
const ABSENT: &[&str] = &["Atlantis", "Narnia", "Gondor"];
const FILLER: &[&str] = &[
    "roads",
    "fire",
    "in",
    "near",
    "dead",
    "the",
    ",",
    ".",
    "!",
    "#Keralafloods",
    "@user",
];

// Reference occurrence count: sigils deleted, other punctuation is a
// separator, lowercase tokens, greedy non-overlapping windows.
fn oracle_tokens(s: &str) -> Vec<String> {
    let cleaned: String = s
        .to_lowercase()
        .chars()
        .filter(|c| *c != '#' && *c != '@')
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned.split_whitespace().map(String::from).collect()
}

fn oracle_count(text: &str, entity: &str) -> usize {
    let t = oracle_tokens(text);
    let e = oracle_tokens(entity);
    if e.is_empty() {
        return 0;
    }
    let (mut i, mut n) = (0, 0);
    while i + e.len() <= t.len() {
        if t[i..i + e.len()] == e[..] {
            n += 1;
            i += e.len();
        } else {
            i += 1;
        }
    }
    n
}

// Set-algebra scoring by nested loops over deduplicated key lists.
fn oracle_tally(pred: &[String], gold: &[String]) -> Tally {
    let mut p: Vec<String> = Vec::new();
    for s in pred.iter().map(|s| normalize_entity(s)).filter(|k| !k.is_empty()) {
        if !p.contains(&s) {
            p.push(s);
        }
    }
    let mut g: Vec<String> = Vec::new();
    for s in gold.iter().map(|s| normalize_entity(s)).filter(|k| !k.is_empty()) {
        if !g.contains(&s) {
            g.push(s);
        }
    }
    let tp = p.iter().filter(|x| g.contains(x)).count();
    Tally::new(tp, p.len() - tp, g.len() - tp)
}

fn vary_case(s: &str, mode: u8) -> String {
    match mode % 3 {
        0 => s.to_string(),
        1 => s.to_lowercase(),
        _ => s.to_uppercase(),
    }
}

fn piece() -> impl Strategy<Value = String> {
    prop_oneof![
        (0..PLACES.len(), any::<u8>(), any::<bool>()).prop_map(|(i, m, hash)| {
            let w = vary_case(PLACES[i], m);
            if hash {
                format!("#{w}")
            } else {
                w
            }
        }),
        (0..FILLER.len()).prop_map(|i| FILLER[i].to_string()),
    ]
}

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(piece(), 1..20).prop_map(|v| v.join(" "))
}

fn entity() -> impl Strategy<Value = String> {
    prop_oneof![
        3 => (0..PLACES.len(), any::<u8>()).prop_map(|(i, m)| vary_case(PLACES[i], m)),
        1 => (0..ABSENT.len()).prop_map(|i| ABSENT[i].to_string()),
        1 => (0..PLACES.len()).prop_map(|i| format!("#{}.", PLACES[i])),
    ]
}

fn fixture() -> impl Strategy<Value = (String, Vec<(String, u32)>, Vec<bool>)> {
    (
        text(),
        prop::collection::vec((entity(), 0u32..5), 0..8),
        prop::collection::vec(any::<bool>(), PLACES.len()),
    )
}

fn gold_for(text: &str, pick: &[bool]) -> Vec<String> {
    PLACES
        .iter()
        .zip(pick)
        .filter(|(p, keep)| **keep && oracle_count(text, p) > 0)
        .map(|(p, _)| p.to_string())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn occurrence_count_matches_oracle(t in text(), e in entity()) {
        prop_assert_eq!(occurrence_count(&t, &e, &MatchPolicy::default()).unwrap(), oracle_count(&t, &e));
    }

    #[test]
    fn location_filter_invariants((t, raw, pick) in fixture()) {
        let policy = MatchPolicy::default();
        let pred: LocationPrediction = raw.iter().map(|(s, n)| (s.clone(), *n)).collect();
        let out = filter_all_locations(&pred, &t, &policy);
        for e in &out.entries {
            let actual = oracle_count(&t, &e.surface);
            prop_assert!(actual > 0, "{} not in {}", e.surface, t);
            prop_assert!(e.count as usize <= actual);
        }
        prop_assert_eq!(filter_all_locations(&out, &t, &policy), out.clone());

        let gold = gold_for(&t, &pick);
        let before: Vec<String> = pred.surfaces().map(String::from).collect();
        let after: Vec<String> = out.surfaces().map(String::from).collect();
        let (b, a) = (oracle_tally(&before, &gold), oracle_tally(&after, &gold));
        prop_assert_eq!(match_lists(&before, &gold, &EvalOptions::default()), b);
        prop_assert_eq!(match_lists(&after, &gold, &EvalOptions::default()), a);
        prop_assert!(a.precision() >= b.precision());
        prop_assert_eq!(a.recall(), b.recall());
        prop_assert_eq!(a.tp, b.tp);
    }

    #[test]
    fn impact_filter_invariants((t, raw, pick) in fixture()) {
        let policy = MatchPolicy::default();
        let pred = ImpactPrediction {
            impacts: vec!["dead".into(), "flooded".into()],
            impacted_locations: raw.into_iter().map(|(s, _)| s).collect(),
        };
        let out = filter_impact_extraction(&pred, &t, &policy);
        for e in out.impacts.iter().chain(&out.impacted_locations) {
            prop_assert!(oracle_count(&t, e) > 0);
        }
        prop_assert_eq!(filter_impact_extraction(&out, &t, &policy), out.clone());
        let gold = gold_for(&t, &pick);
        let b = oracle_tally(&pred.impacted_locations, &gold);
        let a = oracle_tally(&out.impacted_locations, &gold);
        prop_assert!(a.precision() >= b.precision());
        prop_assert_eq!(a.recall(), b.recall());
    }

    #[test]
    fn tally_conservation_and_symmetry(
        pred in prop::collection::vec(entity(), 0..8),
        gold in prop::collection::vec(entity(), 0..8),
    ) {
        let t = match_lists(&pred, &gold, &EvalOptions::default());
        prop_assert_eq!(t, oracle_tally(&pred, &gold));
        let p: BTreeSet<String> = pred.iter().map(|s| normalize_entity(s)).collect();
        let g: BTreeSet<String> = gold.iter().map(|s| normalize_entity(s)).collect();
        prop_assert_eq!(t.tp + t.fp, p.len());
        prop_assert_eq!(t.tp + t.fn_, g.len());
        prop_assert_eq!(match_sets(&p, &g), t);
        let r = match_lists(&gold, &pred, &EvalOptions::default());
        prop_assert_eq!((r.tp, r.fp, r.fn_), (t.tp, t.fn_, t.fp));
        let s = soft_overlap_diagnostic(&pred, &gold);
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn parser_never_panics(raw in prop::collection::vec(any::<u8>(), 0..200)) {
        let s = String::from_utf8_lossy(&raw);
        for task in [Task::AllLocations, Task::ImpactAndImpacted] {
            let r = parse_or_empty(&s, task);
            prop_assert_eq!(r.prediction.task(), task);
        }
    }

    #[test]
    fn parser_tolerates_header_noise(raw in "[ -~\n]{0,120}") {
        let _ = parse_or_empty(&format!("Locations mentioned: {raw}"), Task::AllLocations);
        let _ = parse_or_empty(&format!("Types of Impact: {raw}\nImpacted Location: {raw}"), Task::ImpactAndImpacted);
    }

    #[test]
    fn rendered_answers_round_trip(
        locs in prop::collection::vec((0..PLACES.len(), 1u32..9), 0..6),
        impacts in prop::collection::vec(0..FILLER.len(), 0..4),
    ) {
        let mut seen = BTreeSet::new();
        let entries: Vec<(&str, u32)> = locs.iter().filter(|(i, _)| seen.insert(*i)).map(|(i, n)| (PLACES[*i], *n)).collect();
        let parsed = parse_all_locations(&render_locations_answer(entries.iter().copied())).unwrap();
        prop_assert_eq!(parsed, entries.iter().copied().collect::<LocationPrediction>());

        let words: Vec<&str> = impacts.iter().map(|i| FILLER[*i]).filter(|w| w.chars().all(char::is_alphanumeric)).collect();
        let places: Vec<&str> = entries.iter().map(|(p, _)| *p).collect();
        let parsed = parse_impact_response(&render_impact_answer(words.iter().copied(), places.iter().copied())).unwrap();
        prop_assert_eq!(parsed.impacts, words);
        prop_assert_eq!(parsed.impacted_locations, places);
    }

    #[test]
    fn normalize_is_idempotent(s in "\\PC{0,40}") {
        let once = normalize_entity(&s);
        prop_assert_eq!(normalize_entity(&once), once.clone());
    }

    #[test]
    fn split_properties(n in 0usize..200, train in 0.0f64..=1.0, test_share in 0.0f64..=1.0, seed in any::<u64>()) {
        let test = (1.0 - train) * test_share;
        let d = dataset(n);
        let (a, b) = split_random(&d, train, test, seed).unwrap();
        let ia: BTreeSet<&str> = a.post_ids().collect();
        let ib: BTreeSet<&str> = b.post_ids().collect();
        prop_assert!(ia.is_disjoint(&ib));
        prop_assert!(a.len() + b.len() <= n);
        prop_assert_eq!(a.len(), ((train * n as f64) + 0.5 + 1e-9).floor() as usize);
        let (a2, b2) = split_random(&d, train, test, seed).unwrap();
        prop_assert_eq!(a, a2);
        prop_assert_eq!(b, b2);
    }
}

fn dataset(n: usize) -> Dataset {
    let posts = (0..n)
        .map(|i| Post {
            post_id: format!("p{i}"),
            text: "Roads damaged in Mati".into(),
            event_id: "greece_wildfires_2018".into(),
            disaster_type: DisasterType::Wildfire,
            country: "Greece".into(),
            category: Category::InfrastructureAndUtilityDamage,
            gold: GoldAnnotation::default(),
        })
        .collect();
    Dataset::new("synthetic", posts).unwrap()
}

#[test]
fn nfc_differences_do_not_block_matches() {
    let policy = MatchPolicy::default();
    assert_eq!(
        occurrence_count("Kaiko\u{0304}ura quake", "Kaik\u{014d}ura", &policy),
        Ok(1)
    );
    assert_eq!(
        occurrence_count("Kaik\u{014d}ura quake", "Kaiko\u{0304}ura", &policy),
        Ok(1)
    );
}
