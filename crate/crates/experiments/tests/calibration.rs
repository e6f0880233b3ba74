use eosgd_core::Constants;
use eosgd_experiments::calibrate::calibrate;

#[test]
fn bundled_constants_match_a_fresh_calibration() {
    let fresh = calibrate().unwrap().constants;
    assert_eq!(fresh, Constants::bundled());
}
