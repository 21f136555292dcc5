use sprig::point::{generate_synthetic, Distribution};
use sprig::tuner::calibrate;

#[test]
fn calibration_repeatable() {
    let ds = generate_synthetic(100_000, Distribution::Uniform, 5).unwrap();
    let a = calibrate(&ds).unwrap();
    let b = calibrate(&ds).unwrap();
    assert!(a.params.t_scan > 0.0 && a.params.t_retrieve > 0.0);
    assert!(a.retrieve_iterations >= 1_000_000 && a.scan_iterations >= 1_000_000);
    assert_eq!(a.scan_runs.len(), 5);
    assert_eq!(a.retrieve_runs.len(), 5);
    let ratio = a.params.t_scan / b.params.t_scan;
    assert!((0.75..=1.25).contains(&ratio), "{ratio}");
}
