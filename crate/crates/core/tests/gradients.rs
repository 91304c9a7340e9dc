mod common;

use action_relations::data::Task;
use common::grad::{suite, TOLERANCE};

#[test]
fn detection_gradients_match_central_differences() {
    assert!(suite(Task::Detection, 0, 6) < TOLERANCE);
}

#[test]
fn classification_gradients_match_central_differences() {
    assert!(suite(Task::Classification, 0, 6) < TOLERANCE);
}

#[test]
fn attention_parameters_receive_gradient() {
    common::grad::attention_parameters_receive_gradient();
}

#[test]
fn fresh_seeds_pass_too() {
    for task in [Task::Detection, Task::Classification] {
        assert!(suite(task, 100, 5) < TOLERANCE);
    }
}
