use dualgraph_web::{force_curve, projection_view, slice_view};

#[test]
fn slice_of_the_tiny_mesh() {
    let v = slice_view(0.0, 0.0, 1.0, "stress", false).unwrap();
    assert_eq!((v.slice.nx, v.slice.ny), (12, 2));
    assert_eq!(v.slice.values.len(), 24);
    assert_eq!(v.frame, 20);
    assert!((v.force_kn - 102.0).abs() < 1e-9);
    assert!(v.slice.max >= v.slice.min);
    // symmetric blocks: the layer is mirrored about midspan
    for j in 0..2 {
        for i in 0..12 {
            let a = v.slice.values[j * 12 + i];
            let b = v.slice.values[j * 12 + 11 - i];
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn progress_snaps_to_frames() {
    assert_eq!(slice_view(0.0, 0.0, 0.31, "peeq", false).unwrap().frame, 6);
    assert_eq!(slice_view(0.0, 0.0, -1.0, "peeq", false).unwrap().frame, 0);
    assert!(slice_view(0.0, 0.0, 0.5, "strain", false).is_err());
    assert!(slice_view(10.0, 0.0, 0.5, "stress", false).is_err());
}

#[test]
fn projection_lowers_the_peak() {
    let v = projection_view(0.0, 0.0, 1.0, "stress", true).unwrap();
    assert_eq!((v.original.nx, v.original.ny), (108, 10));
    assert!(v.report.reduction_percent > 0.0);
    assert!(v.projected.max <= v.original.max);
}

#[test]
fn curve_passes_the_knots() {
    let c = force_curve(0.0, 0.0).unwrap();
    assert_eq!(c.deflection_mm.len(), 21);
    assert_eq!(c.force_kn[0], 0.0);
    assert!((c.deflection_mm[6] - 10.02).abs() < 1e-9 && (c.force_kn[6] - 85.0).abs() < 1e-9);
    assert!((c.deflection_mm[20] - 33.4).abs() < 1e-9 && (c.force_kn[20] - 102.0).abs() < 1e-9);
}
