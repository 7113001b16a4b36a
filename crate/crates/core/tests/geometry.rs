use nalgebra::DMatrix;
use proptest::prelude::*;
use qvol_core::geometry::normalize;
use qvol_core::{apply_affine, make_pencil, BodySpec, ConvexBody};

fn bodies() -> Vec<ConvexBody> {
    let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
    vec![
        ConvexBody::unit_ball(3),
        ConvexBody::ball(2, 0.7, Some(vec![0.3, -0.2])).unwrap(),
        ConvexBody::cube(3, 0.0, 1.0).unwrap(),
        ConvexBody::axis_box(vec![-1.0, 0.0], vec![3.0, 0.5]).unwrap(),
        ConvexBody::halfspaces(a, vec![1.0, 1.0, 1.0], 0.2, 3.0, Some(vec![-0.2, -0.2])).unwrap(),
    ]
}

proptest! {
    #[test]
    fn midpoint_of_members_is_a_member(which in 0usize..5, xs in prop::collection::vec(-3.0f64..3.0, 6), ys in prop::collection::vec(-3.0f64..3.0, 6)) {
        let body = &bodies()[which];
        let n = body.dim();
        let (x, y) = (&xs[..n], &ys[..n]);
        if body.contains(x).unwrap() && body.contains(y).unwrap() {
            let mid: Vec<f64> = x.iter().zip(y).map(|(a, b)| 0.5 * (a + b)).collect();
            prop_assert!(body.contains(&mid).unwrap());
        }
    }

    #[test]
    fn pencil_is_cylinder_intersect_cone(x0 in -0.5f64..4.5, v in prop::collection::vec(-1.5f64..1.5, 2)) {
        let base = ConvexBody::unit_ball(2);
        let pencil = make_pencil(&base, 4.0).unwrap();
        let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
        let expected = (0.0..=4.0).contains(&x0) && norm <= 1.0 && norm <= x0;
        prop_assert_eq!(pencil.contains(&[x0, v[0], v[1]]).unwrap(), expected);
    }

    #[test]
    fn identity_affine_preserves_membership(x in prop::collection::vec(-2.0f64..2.0, 3)) {
        let base = ConvexBody::cube(3, -1.0, 1.0).unwrap();
        let img = apply_affine(&base, &DMatrix::identity(3, 3), &[0.0; 3]).unwrap();
        prop_assert_eq!(img.contains(&x).unwrap(), base.contains(&x).unwrap());
    }

    #[test]
    fn normalized_body_contains_the_unit_ball(which in 0usize..5, dir in prop::collection::vec(-1.0f64..1.0, 3), t in 0.0f64..0.999) {
        let (normal, _) = normalize(&bodies()[which]).unwrap();
        let n = normal.dim();
        let d = &dir[..n];
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        let x: Vec<f64> = d.iter().map(|v| v / norm * t).collect();
        prop_assert!(normal.contains(&x).unwrap());
    }
}

#[test]
fn membership_examples() {
    assert!(ConvexBody::unit_ball(3).contains(&[0.0, 0.0, 0.0]).unwrap());
    assert!(!ConvexBody::cube(2, 0.0, 1.0).unwrap().contains(&[0.5, 1.5]).unwrap());
    let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
    let h = ConvexBody::halfspaces(a, vec![1.0, 1.0, 1.0], 0.2, 3.0, Some(vec![-0.2, -0.2])).unwrap();
    assert!(h.contains(&[0.4, 0.4]).unwrap());
    assert!(!h.contains(&[0.6, 0.6]).unwrap());
}

#[test]
fn scaled_and_rotated_images() {
    let ball = ConvexBody::unit_ball(2);
    let img = apply_affine(&ball, &(DMatrix::identity(2, 2) * 2.0), &[0.0, 0.0]).unwrap();
    assert!(img.contains(&[1.9, 0.0]).unwrap());
    assert!(!img.contains(&[2.1, 0.0]).unwrap());

    let (s, c) = std::f64::consts::FRAC_PI_4.sin_cos();
    let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    let sq = ConvexBody::cube(2, 0.0, 1.0).unwrap();
    let img = apply_affine(&sq, &rot, &[0.0, 0.0]).unwrap();
    let p = &rot * nalgebra::DVector::from_vec(vec![0.5, 0.5]);
    assert!(img.contains(p.as_slice()).unwrap());
}

#[test]
fn pencil_examples_on_the_unit_disk() {
    let pencil = make_pencil(&ConvexBody::unit_ball(2), 4.0).unwrap();
    assert!(pencil.contains(&[1.0, 0.5, 0.0]).unwrap());
    assert!(!pencil.contains(&[0.3, 0.5, 0.0]).unwrap());
    assert!(!pencil.contains(&[4.5, 0.0, 0.0]).unwrap());
}

#[test]
fn every_membership_call_is_counted() {
    let body = ConvexBody::unit_ball(2);
    let pencil = make_pencil(&body, 4.0).unwrap();
    let before = body.queries();
    for i in 0..25 {
        let _ = body.contains(&[0.1 * i as f64, 0.0]).unwrap();
    }
    assert_eq!(body.queries() - before, 25);
    let _ = pencil.contains(&[1.0, 0.2, 0.2]).unwrap();
    assert!(pencil.queries() >= 1);
}

#[test]
fn body_specs_round_trip_through_json() {
    for text in [
        r#"{"type":"ball","n":3,"r":1}"#,
        r#"{"type":"box","n":2,"lo":[0,0],"hi":[1,2]}"#,
        r#"{"type":"affine","base":{"type":"box","n":2,"lo":[-1,-1],"hi":[1,1]},"S":[1,0.5,0,0.25],"shift":[0,0]}"#,
    ] {
        let spec = BodySpec::from_json(text).unwrap();
        let again = BodySpec::from_json(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(spec, again);
        assert!(spec.to_body().is_ok());
    }
}
