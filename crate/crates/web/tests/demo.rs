use somds_web::demo;

#[test]
fn minimizers_at_the_two_regions() {
    let m = demo::stacked_moments(10).unwrap();
    let inside = demo::minimizers(&m, [0.0, 0.0]).unwrap();
    assert_eq!(inside[1], 0.0);
    assert_eq!(inside.len(), 3);
    let pair = demo::minimizers(&m, [1.5, 0.0]).unwrap();
    assert_eq!(pair[1], 1.0);
    assert!((pair[2] - 0.5).abs() < 1e-8 && (pair[3] + 0.5).abs() < 1e-8);
}

#[test]
fn curve_matches_minimum() {
    let m = demo::stacked_moments(10).unwrap();
    let best = demo::minimizers(&m, [1.5, 0.0]).unwrap()[0];
    let ys = demo::curve(&m, [1.5, 0.0], -2.0, 2.0, 4001).unwrap();
    let lowest = ys.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(lowest >= best - 1e-12 && lowest - best < 1e-5);
    assert!(demo::curve(&m, [0.0, 0.0], 1.0, 1.0, 10).is_err());
}

#[test]
fn level_set_layout() {
    let m = demo::stacked_moments(10).unwrap();
    let cells = demo::level_set(&m, 2.0, 21).unwrap();
    assert_eq!(cells.len(), 2 * 21 * 21);
    let center = 10 * 21 + 10;
    assert_eq!(cells[2 * center + 1], 1.0);
    assert!(demo::level_set(&m, 2.0, 1).is_err());
}

#[test]
fn oscillation_values() {
    let out = demo::oscillation(32, 4, 0.1).unwrap();
    assert_eq!(out.len(), 5);
    assert!(out[1..].iter().skip(1).all(|&s| s < out[0]));
}
