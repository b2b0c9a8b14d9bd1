mod common;

use proptest::prelude::*;
use serde_json::Value;
use socnav_core::dataset::*;

fn bytes(v: &Value) -> Vec<u8> {
    serde_json::to_vec(v).unwrap()
}

/// Replaces the node at a pseudo-random position (chosen by `pick`) with `with`,
/// or deletes it when `with` is `None`.
fn mutate(v: &mut Value, pick: &mut impl Iterator<Item = usize>, with: Option<Value>) {
    let depth_choice = pick.next().unwrap_or(0);
    match v {
        Value::Object(m) if !m.is_empty() => {
            let keys: Vec<String> = m.keys().cloned().collect();
            let k = &keys[depth_choice % keys.len()];
            if depth_choice % 3 == 0 || !(m[k].is_object() || m[k].is_array()) {
                match with {
                    Some(w) => {
                        m.insert(k.clone(), w);
                    }
                    None => {
                        m.remove(k);
                    }
                }
            } else {
                mutate(m.get_mut(k).unwrap(), pick, with);
            }
        }
        Value::Array(a) if !a.is_empty() => {
            let i = depth_choice % a.len();
            if depth_choice % 3 == 0 || !(a[i].is_object() || a[i].is_array()) {
                match with {
                    Some(w) => a[i] = w,
                    None => {
                        a.remove(i);
                    }
                }
            } else {
                mutate(&mut a[i], pick, with);
            }
        }
        _ => {
            if let Some(w) = with {
                *v = w;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn trajectory_round_trip(t in common::trajectory(8)) {
        let once = parse_trajectory(&serialize_trajectory(&t)).unwrap();
        prop_assert_eq!(&once, &t);
        let twice = serialize_trajectory(&once);
        prop_assert_eq!(&twice, &serialize_trajectory(&t));
    }

    #[test]
    fn rater_round_trip(r in common::rater()) {
        let back = parse_rater_record(&serialize_rater_record(&r)).unwrap();
        prop_assert_eq!(back, r);
    }

    #[test]
    fn arbitrary_json_never_panics(v in common::json_value()) {
        let _ = parse_trajectory(&bytes(&v));
        let _ = parse_rater_record(&bytes(&v));
    }

    #[test]
    fn arbitrary_bytes_never_panic(b in prop::collection::vec(any::<u8>(), 0..200)) {
        let _ = parse_trajectory(&b);
        let _ = parse_rater_record(&b);
    }

    /// A mutated valid document either fails with one classified error or
    /// parses into a trajectory that passes validation and round-trips.
    #[test]
    fn mutated_documents_are_rejected_or_valid(
        t in common::trajectory(5),
        path in prop::collection::vec(any::<usize>(), 1..8),
        replacement in prop::option::of(common::json_value()),
    ) {
        let mut v: Value = serde_json::from_slice(&serialize_trajectory(&t)).unwrap();
        mutate(&mut v, &mut path.into_iter(), replacement);
        match parse_trajectory(&bytes(&v)) {
            Ok(parsed) => {
                prop_assert!(validate_trajectory(&parsed).is_ok());
                prop_assert_eq!(parse_trajectory(&serialize_trajectory(&parsed)).unwrap(), parsed);
            }
            Err(FormatError::Syntax(_)) => prop_assert!(false, "re-encoded JSON cannot be a syntax error"),
            Err(FormatError::Schema { .. } | FormatError::Invariant { .. }) => {}
        }
    }

    #[test]
    fn non_increasing_timestamp_is_rejected(t in common::trajectory(6), k in any::<prop::sample::Index>(), back in 0.0f64..2.0) {
        let mut t = t;
        let i = 1 + k.index(t.frames.len() - 1);
        t.frames[i].timestamp = t.frames[i - 1].timestamp - back;
        let err = parse_trajectory(&serialize_trajectory(&t)).unwrap_err();
        let is_invariant = matches!(err, FormatError::Invariant { .. });
        prop_assert!(is_invariant);
        prop_assert!(err.path().unwrap().contains("timestamp"));
    }

    #[test]
    fn out_of_range_scores_are_rejected_not_clamped(r in common::rater(), k in any::<prop::sample::Index>(), excess in 1e-9f64..10.0, below in any::<bool>()) {
        let mut r = r;
        let i = k.index(r.ratings.len());
        r.ratings[i].score = if below { -excess } else { 1.0 + excess };
        let err = parse_rater_record(&serialize_rater_record(&r)).unwrap_err();
        let is_invariant = matches!(err, FormatError::Invariant { .. });
        prop_assert!(is_invariant);
    }
}

#[test]
fn the_three_error_classes() {
    assert!(matches!(parse_trajectory(b"{\"robot\": "), Err(FormatError::Syntax(_))));
    assert!(matches!(parse_trajectory(b"{\"robot\": 3}"), Err(FormatError::Schema { .. })));
    let mut t = serde_json::from_slice::<Value>(&serialize_trajectory(&common::go_to(
        Pose2D::new(1.0, 0.0, 0.0),
        vec![common::frame_at(0.0, 0.0, 0.0, 0.0, 0.0, 0.0), common::frame_at(1.0, 0.0, 0.0, 0.0, 0.0, 0.0)],
    )))
    .unwrap();
    t["frames"].as_array_mut().unwrap().truncate(1);
    assert!(matches!(parse_trajectory(&bytes(&t)), Err(FormatError::Invariant { .. })));
}
