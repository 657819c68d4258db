use covergen_web::{augment_json, gallery_json, noise_preview_url, preset_names, schedule_json, DEMO_SIZE};
use covergen_core::genai::CoverImage;
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn augment_keeps_closed_class_tokens() {
    let v = parse(&augment_json("Adventure in a forest", 3, 1, false).unwrap());
    let list = v.as_array().unwrap();
    assert_eq!(list.len(), 3);
    for c in list {
        assert_eq!(c["tokens"][1], "in");
        assert_eq!(c["tokens"][2], "a");
        assert_eq!(c["provenance"][2], "original");
    }
    assert_eq!(parse(&augment_json("of the", 3, 1, false).unwrap()).as_array().unwrap().len(), 0);
    assert!(augment_json("", 3, 1, false).is_err());
    assert!(augment_json("Lost at sea", 0, 1, false).is_err());
}

#[test]
fn gallery_is_ranked_and_deterministic() {
    let a = parse(&gallery_json("Lost at sea", 9, 6, 3, 1_700_000_000_000.0).unwrap());
    let covers = a["manifest"]["covers"].as_array().unwrap();
    assert_eq!(covers.len(), 10);
    assert_eq!(covers.iter().filter(|c| c["kept"] == true).count(), 6);
    assert_eq!(covers[0]["original"], true);
    let images = a["images"].as_array().unwrap();
    assert_eq!(images.len(), 10);
    assert!(images.iter().all(|i| i.as_str().unwrap().starts_with("data:image/png;base64,")));
    let b = parse(&gallery_json("Lost at sea", 9, 6, 3, 1_700_000_000_000.0).unwrap());
    assert_eq!(a, b);
    assert!(gallery_json("Lost at sea", 2, 5, 0, 0.0).is_err());
    assert!(gallery_json("Lost at sea", 100, 5, 0, 0.0).is_err());
}

#[test]
fn schedule_matches_presets() {
    let v = parse(&schedule_json("table1-row-3", 251).unwrap());
    let pts = v["points"].as_array().unwrap();
    assert_eq!(pts.len(), 251);
    assert_eq!(pts[0]["lr"], 0.0002);
    assert_eq!(pts[100]["lr"], 0.0001);
    assert_eq!(pts[250]["lr"], 0.00005);
    assert_eq!(pts[0]["d_trained"], true);
    assert_eq!(pts[1]["d_trained"], false);
    assert_eq!(preset_names().len(), 6);
    assert!(schedule_json("nope", 10).is_err());
    assert!(schedule_json("table1-row-1", 0).is_err());
}

#[test]
fn noise_preview_is_a_png() {
    let url = noise_preview_url("Dragon Fire", 0.1, 2).unwrap();
    let img = CoverImage::from_base64_png(url.strip_prefix("data:image/png;base64,").unwrap()).unwrap();
    assert_eq!((img.width(), img.height()), (DEMO_SIZE, DEMO_SIZE));
    assert_ne!(url, noise_preview_url("Dragon Fire", 0.0, 2).unwrap());
    assert!(noise_preview_url("x", -0.5, 0).is_err());
}
