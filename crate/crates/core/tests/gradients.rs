mod common;

use common::checks;

#[test]
fn loss_gradients_match_central_differences_over_ten_seeds() {
    let o = checks::gradient_fd_suite(10);
    println!("{}", o.detail);
    assert!(o.passed, "{}", o.detail);
}
