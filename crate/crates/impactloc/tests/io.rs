mod common;

use std::fs;
use std::path::Path;

use impactloc::io::{load_brat, load_canonical, save_canonical, DataError, BRAT_METADATA};
use impactloc_core::corpus::Span;

fn write(dir: &Path, name: &str, content: &str) {
    fs::write(dir.join(name), content).unwrap();
}

const META: &str = r#"{"post_id":"a","event_id":"greece_wildfires_2018","disaster_type":"wildfire","country":"Greece","category":"injured_or_dead_people"}
{"post_id":"b","event_id":"greece_wildfires_2018","disaster_type":"wildfire","category":"infrastructure_and_utility_damage"}
"#;

#[test]
fn canonical_round_trip() {
    let d = common::fixture_dataset();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fixture.jsonl");
    save_canonical(&d, &path).unwrap();
    let back = load_canonical(&path).unwrap();
    assert_eq!(back.name(), "fixture");
    assert_eq!(back.posts(), d.posts());

    save_canonical(&back, &dir.path().join("again.jsonl")).unwrap();
    assert_eq!(
        fs::read(&path).unwrap(),
        fs::read(dir.path().join("again.jsonl")).unwrap()
    );
}

#[test]
fn schema_error_names_the_record() {
    let d = common::fixture_dataset();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.jsonl");
    save_canonical(&d, &path).unwrap();
    let mut lines: Vec<String> = fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
    let mut v: serde_json::Value = serde_json::from_str(&lines[2]).unwrap();
    v.as_object_mut().unwrap().remove("text");
    lines[2] = v.to_string();
    fs::write(&path, lines.join("\n")).unwrap();

    match load_canonical(&path) {
        Err(DataError::Schema { record, message, .. }) => {
            assert_eq!(record, 3);
            assert!(message.contains("text"), "{message}");
        }
        other => panic!("expected schema error, got {other:?}"),
    }
}

#[test]
fn canonical_text_is_nfc_at_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nfc.jsonl");
    let rec = serde_json::json!({
        "post_id": "p1",
        "text": "Cafe\u{301} flooded",
        "event_id": "e",
        "disaster_type": "flood",
        "country": "",
        "category": "infrastructure_and_utility_damage",
        "all_locations": [{"start": 0, "end": 5, "surface": "Cafe\u{301}"}],
        "impacted_locations": [],
        "impacts": []
    });
    fs::write(&path, format!("{rec}\n")).unwrap();
    let d = load_canonical(&path).unwrap();
    assert_eq!(d.posts()[0].text, "Caf\u{e9} flooded");
    assert_eq!(d.posts()[0].gold.all_locations[0].surface, "Caf\u{e9}");
}

#[test]
fn brat_directory() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, BRAT_METADATA, META);
    let text_a = format!("{}Mati burned", " ".repeat(103));
    write(d, "a.txt", &format!("{text_a}\n"));
    write(
        d,
        "a.ann",
        "T1\tImpactedLocation 103 107\tMati\nT2\tImpact 108 114\tburned\nT3\tSentiment 0 1\t \n",
    );
    write(d, "b.txt", "Nothing to see\n");
    write(d, "b.ann", "");

    let (dataset, warnings) = load_brat(d).unwrap();
    assert_eq!(dataset.len(), 2);
    let a = dataset.get("a").unwrap();
    assert_eq!(a.text, text_a);
    assert_eq!(a.country, "Greece");
    assert_eq!(a.gold.impacted_locations, vec![Span::new(103, 107, "Mati")]);
    assert_eq!(a.gold.all_locations, vec![Span::new(103, 107, "Mati")]);
    assert_eq!(a.gold.impacts, vec![Span::new(108, 114, "burned")]);
    assert!(dataset.get("b").unwrap().gold.is_empty());
    assert_eq!(warnings.len(), 1);
    assert!(warnings[0].contains("Sentiment"), "{}", warnings[0]);
}

#[test]
fn brat_missing_ann_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), BRAT_METADATA, META);
    write(dir.path(), "b.txt", "Nothing to see");
    let (dataset, warnings) = load_brat(dir.path()).unwrap();
    assert!(dataset.posts()[0].gold.is_empty());
    assert!(warnings.is_empty());
}

#[test]
fn brat_out_of_bounds_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), BRAT_METADATA, META);
    write(dir.path(), "b.txt", "short");
    write(dir.path(), "b.ann", "T1\tLocation 3 40\tsomewhere\n");
    let err = load_brat(dir.path()).unwrap_err();
    assert!(matches!(err, DataError::Brat { .. }), "{err:?}");
    assert!(err.to_string().contains("b.ann"), "{err}");
}

#[test]
fn brat_document_without_metadata() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), BRAT_METADATA, META);
    write(dir.path(), "zzz.txt", "orphan");
    match load_brat(dir.path()) {
        Err(DataError::MissingMetadata { id, .. }) => assert_eq!(id, "zzz"),
        other => panic!("expected missing metadata, got {other:?}"),
    }
}
