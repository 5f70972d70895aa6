use mesoscribe_core::intent::{
    format_errors_for_regeneration, parse_intent_document, parse_parameter_patch, AlignDirection,
    ColorChange, ErrorKind, IntentDocument, ParameterPatch, PositionLink, RenderMode, ResidueAnchor,
    ResidueIndex, Rgb, INTENT_KEYS, PATCH_KEYS,
};
use proptest::prelude::*;

fn name() -> impl Strategy<Value = String> {
    "[A-Za-z0-9][A-Za-z0-9_-]{0,12}"
}

fn sentence() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z0-9 %,.'\"{}]{0,40}[a-z]"
}

fn names() -> impl Strategy<Value = Option<Vec<String>>> {
    proptest::option::of(prop::collection::vec(name(), 1..4))
}

fn anchor() -> impl Strategy<Value = ResidueAnchor> {
    (name(), 0u32..50, 0u32..5000).prop_map(|(ingredient, chain_id, residue_id)| ResidueAnchor {
        ingredient,
        chain_id,
        residue_id,
    })
}

fn color() -> impl Strategy<Value = ColorChange> {
    (name(), 0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(ingredient, r, g, b)| ColorChange {
        ingredient,
        color: Rgb([r, g, b]),
    })
}

fn mode() -> impl Strategy<Value = RenderMode> {
    prop_oneof![
        Just(RenderMode::Protein),
        Just(RenderMode::Chain),
        Just(RenderMode::Atomistic)
    ]
}

fn document() -> impl Strategy<Value = IntentDocument> {
    (
        (names(), names(), proptest::option::of(sentence()), proptest::option::of(sentence())),
        (
            proptest::option::of(any::<bool>()),
            proptest::option::of(any::<bool>()),
            proptest::option::of((0u32..50, 0u32..5000)),
            proptest::option::of((anchor(), anchor())),
        ),
        (
            names(),
            proptest::option::of(prop::collection::vec(color(), 1..3)),
            proptest::option::of(mode()),
            proptest::option::of(any::<bool>()),
        ),
    )
        .prop_map(|((si, ss, cr, er), (sm, lm, pv, pos), (hi, mc, cm, lb))| IntentDocument {
            select_ingredient: si,
            select_skeleton: ss,
            create_rule: cr,
            edit_rule: er,
            save_model: sm,
            load_model: lm,
            update_pivot: pv.map(|(chain_id, residue_id)| ResidueIndex { chain_id, residue_id }),
            update_position: pos.map(|(main, sub)| PositionLink { main, sub }),
            highlight_ingredient: hi,
            modify_color: mc,
            change_mode: cm,
            labeling: lb,
        })
        .prop_filter("non-empty", |d| !d.is_empty())
}

fn patch() -> impl Strategy<Value = ParameterPatch> {
    (
        proptest::option::of(1u32..100_000),
        proptest::option::of(0.0f64..100.0),
        proptest::option::of(any::<bool>()),
        proptest::option::of(prop_oneof![Just(AlignDirection::Normal), Just(AlignDirection::InverseNormal)]),
        proptest::option::of(0.01f64..500.0),
        proptest::option::of(prop_oneof![Just("catmull-rom".to_string()), Just("straight".to_string())]),
        proptest::option::of("[a-z0-9]([a-z0-9 ]{0,20}[a-z0-9])?"),
        proptest::option::of(0.0f64..10.0),
        proptest::option::of(1u32..=100),
    )
        .prop_map(|(e, d, c, a, l, cu, tw, std, space)| {
            // elements and space are exclusive
            let (elements, space) = if e.is_some() { (e, None) } else { (None, space) };
            ParameterPatch {
                elements,
                distance: d,
                collision_detection: c,
                space,
                align_direction: a,
                length: l,
                curve: cu,
                tweaking: tw,
                std,
            }
        })
}

proptest! {
    #[test]
    fn intent_round_trips(doc in document()) {
        let json = doc.to_json();
        let back = parse_intent_document(&json).unwrap();
        prop_assert_eq!(&back, &doc);
        prop_assert_eq!(back.to_json(), json);
    }

    #[test]
    fn patch_round_trips(p in patch()) {
        let json = p.to_json();
        prop_assert_eq!(parse_parameter_patch(&json).unwrap(), p);
    }

    #[test]
    fn fenced_body_parses_like_bare(doc in document(), lead in "[A-Za-z .:!]{0,30}", lang in prop_oneof![Just(""), Just("json"), Just("JSON")]) {
        let body = doc.to_json();
        let fenced = format!("{lead}\n```{lang}\n{body}\n```\ntrailing words");
        prop_assert_eq!(parse_intent_document(&fenced).unwrap(), parse_intent_document(&body).unwrap());
    }

    #[test]
    fn errors_are_stable(raw in r#"\{("[a-zA-Z]{1,12}": ?(true|"x"|1|\[\]|\{\}|null),? ?){0,4}\}?"#) {
        let a = parse_intent_document(&raw).err().map(|e| format_errors_for_regeneration(&e));
        let b = parse_intent_document(&raw).err().map(|e| format_errors_for_regeneration(&e));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn unknown_keys_are_named(key in "[a-zA-Z_]{1,16}") {
        prop_assume!(!INTENT_KEYS.contains(&key.as_str()));
        let raw = format!(r#"{{"labeling": true, "{key}": 1}}"#);
        let errs = parse_intent_document(&raw).unwrap_err();
        prop_assert_eq!(errs.len(), 1);
        prop_assert_eq!(errs[0].kind, ErrorKind::UnknownKey);
        prop_assert_eq!(&errs[0].path, &format!("/{key}"));
        let quoted = format!("\"{key}\"");
        prop_assert!(errs[0].message.contains(&quoted));
        prop_assume!(!PATCH_KEYS.contains(&key.as_str()));
        let errs = parse_parameter_patch(&format!(r#"{{"{key}": 1}}"#)).unwrap_err();
        prop_assert_eq!(errs[0].kind, ErrorKind::UnknownKey);
    }
}

#[test]
fn two_errors_render_two_lines_in_path_order() {
    let errs = parse_intent_document(r#"{"saveModel":"yes","changeMode":7}"#).unwrap_err();
    let text = format_errors_for_regeneration(&errs);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("ERROR data-type at /changeMode: expected string, found number 7"));
    assert!(lines[1].starts_with("ERROR data-type at /saveModel: expected boolean, found string \"yes\""));
}

#[test]
fn every_error_kind_is_reachable() {
    let cases = [
        ("{\"labeling\": tru", ErrorKind::Parse),
        (r#"{"highlightIngredient": "Au"}"#, ErrorKind::ArrayShape),
        (r#"{"labeling": 1}"#, ErrorKind::DataType),
        (r#"{"labelling": true}"#, ErrorKind::UnknownKey),
        (r#"{"changeMode": "wireframe"}"#, ErrorKind::Domain),
    ];
    for (raw, kind) in cases {
        let errs = parse_intent_document(raw).unwrap_err();
        assert_eq!(errs[0].kind, kind, "{raw}");
    }
}
