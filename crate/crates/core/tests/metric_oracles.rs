mod common;

#[test]
fn ap_and_f1_match_brute_force() {
    common::oracle::ap_and_f1_match_brute_force();
}

#[test]
fn worked_examples() {
    common::oracle::worked_examples();
}

#[test]
fn random_classification_matches_dot_product() {
    common::oracle::random_classification_matches_dot_product();
}

#[test]
fn random_detection_ap_tracks_prevalence() {
    common::oracle::random_detection_ap_tracks_prevalence();
}
