#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use impactloc::inference::{Reply, Transport, TransportError};
use impactloc_core::corpus::{Category, DisasterType, Post, Span};
use impactloc_core::parse::{parse_all_locations, parse_impact_response};
use impactloc_core::prompting::{render_impact_answer, render_locations_answer, ExampleBank};
use impactloc_core::{Dataset, GoldAnnotation, Task};

pub const EVENTS: [(&str, DisasterType, &str); 4] = [
    ("kaikoura_earthquake_2016", DisasterType::Earthquake, "New Zealand"),
    ("hurricane_harvey_2017", DisasterType::Hurricane, "USA"),
    ("pakistan_earthquake_2019", DisasterType::Earthquake, "Pakistan"),
    ("greece_wildfires_2018", DisasterType::Wildfire, "Greece"),
];

/// Whole-word, case-insensitive occurrences of `needle` as char-offset spans.
pub fn find_spans(text: &str, needle: &str) -> Vec<Span> {
    let chars: Vec<char> = text.chars().collect();
    let lower: Vec<char> = text.to_lowercase().chars().collect();
    let pat: Vec<char> = needle.to_lowercase().chars().collect();
    assert_eq!(
        chars.len(),
        lower.len(),
        "fixture text must keep length under lowercasing"
    );
    let mut out = Vec::new();
    let mut i = 0;
    while i + pat.len() <= lower.len() {
        let before_ok = i == 0 || !chars[i - 1].is_alphanumeric();
        let after_ok = i + pat.len() == chars.len() || !chars[i + pat.len()].is_alphanumeric();
        if lower[i..i + pat.len()] == pat[..] && before_ok && after_ok {
            let surface: String = chars[i..i + pat.len()].iter().collect();
            out.push(Span::new(i, i + pat.len(), surface));
            i += pat.len();
        } else {
            i += 1;
        }
    }
    out
}

fn spans(text: &str, needles: &[String]) -> Vec<Span> {
    let mut all: Vec<Span> = needles.iter().flat_map(|n| find_spans(text, n)).collect();
    all.sort();
    all.dedup();
    all
}

/// Twelve posts built from the example tweets: six annotated for locations
/// only, six with impacts and impacted locations.
pub fn fixture_dataset() -> Dataset {
    let mut posts = Vec::new();
    let loc_bank = ExampleBank::builtin(Task::AllLocations);
    let imp_bank = ExampleBank::builtin(Task::ImpactAndImpacted);
    for (i, ex) in loc_bank.examples().iter().chain(imp_bank.examples()).enumerate() {
        let mut gold = GoldAnnotation::default();
        if i < 6 {
            let pred = parse_all_locations(ex.answer).unwrap();
            let names: Vec<String> = pred.surfaces().map(String::from).collect();
            gold.all_locations = spans(ex.tweet, &names);
        } else {
            let pred = parse_impact_response(ex.answer).unwrap();
            gold.impacts = spans(ex.tweet, &pred.impacts);
            gold.impacted_locations = spans(ex.tweet, &pred.impacted_locations);
            gold.all_locations = gold.impacted_locations.clone();
        }
        let (event, kind, country) = EVENTS[i % EVENTS.len()];
        posts.push(Post {
            post_id: format!("post-{i:02}"),
            text: ex.tweet.to_string(),
            event_id: event.to_string(),
            disaster_type: kind,
            country: country.to_string(),
            category: Category::ALL[i % 3],
            gold,
        });
    }
    Dataset::new("fixture", posts).unwrap()
}

/// Gold answer text for a post, with one hallucinated entity and, for the
/// locations task, one inflated count.
pub fn noisy_answer(post: &Post, task: Task) -> String {
    match task {
        Task::AllLocations => {
            let mut counts: Vec<(String, u32)> = Vec::new();
            for s in &post.gold.all_locations {
                match counts.iter_mut().find(|(k, _)| k.eq_ignore_ascii_case(&s.surface)) {
                    Some(e) => e.1 += 1,
                    None => counts.push((s.surface.clone(), 1)),
                }
            }
            if let Some(first) = counts.first_mut() {
                first.1 += 1;
            }
            counts.push(("Atlantis".into(), 1));
            render_locations_answer(counts.iter().map(|(s, n)| (s.as_str(), *n)))
        }
        Task::ImpactAndImpacted => {
            let impacts: Vec<&str> = post.gold.impacts.iter().map(|s| s.surface.as_str()).collect();
            let mut locs: Vec<&str> = post
                .gold
                .impacted_locations
                .iter()
                .map(|s| s.surface.as_str())
                .collect();
            locs.push("Narnia");
            render_impact_answer(impacts, locs)
        }
    }
}

/// Extracts the post text from a rendered prompt: the last `Tweet: ` line.
pub fn post_from_prompt(prompt: &str) -> String {
    let line = prompt
        .lines()
        .rfind(|l| l.starts_with("Tweet: "))
        .expect("prompt has a tweet line");
    line["Tweet: ".len()..].to_string()
}

pub fn chat_reply(content: &str) -> Reply {
    Reply {
        status: 200,
        body: serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string(),
    }
}

/// Answers every prompt with the noisy gold answer for its post and records
/// request bodies.
pub struct OracleStub {
    answers: HashMap<String, String>,
    pub calls: AtomicUsize,
    pub bodies: Mutex<Vec<String>>,
}

impl OracleStub {
    pub fn new(d: &Dataset, task: Task) -> Self {
        OracleStub {
            answers: d
                .posts()
                .iter()
                .map(|p| (p.text.clone(), noisy_answer(p, task)))
                .collect(),
            calls: AtomicUsize::new(0),
            bodies: Mutex::new(Vec::new()),
        }
    }
}

impl Transport for OracleStub {
    fn post_json(&self, body: &str, _: Duration) -> Result<Reply, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.bodies.lock().unwrap().push(body.to_string());
        let v: serde_json::Value = serde_json::from_str(body).unwrap();
        let prompt = v["messages"][0]["content"].as_str().unwrap();
        let post = post_from_prompt(prompt);
        Ok(chat_reply(
            self.answers
                .get(&post)
                .map(String::as_str)
                .unwrap_or("Locations mentioned: none"),
        ))
    }
}
