#[path = "../examples/gradient_check.rs"]
mod gradient_check;

#[test]
fn gradient_check_example_runs() {
    gradient_check::main().unwrap();
}
