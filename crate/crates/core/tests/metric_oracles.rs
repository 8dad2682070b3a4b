use inhibited_softmax::metrics::{average_precision, roc_auc};
use inhibited_softmax::RngStream;

mod common;

use common::{exhaustive_ap, pairwise_auc, random_instance};

#[test]
fn roc_auc_equals_pairwise_oracle() {
    let mut rng = RngStream::new(11, 0);
    for case in 0..200 {
        let n = 2 + (rng.next_u64() % 199) as usize;
        let (scores, labels) = random_instance(&mut rng, n);
        assert_eq!(
            roc_auc(&scores, &labels).unwrap(),
            pairwise_auc(&scores, &labels),
            "case {case}, n = {n}"
        );
    }
}

#[test]
fn average_precision_equals_exhaustive_oracle() {
    let mut rng = RngStream::new(12, 0);
    for case in 0..200 {
        let n = 2 + (rng.next_u64() % 49) as usize;
        let (scores, labels) = random_instance(&mut rng, n);
        assert_eq!(
            average_precision(&scores, &labels).unwrap(),
            exhaustive_ap(&scores, &labels),
            "case {case}, n = {n}"
        );
    }
}

#[test]
fn known_values() {
    // Positives at ranks 1 and 3 of four: (1/1 + 2/3) / 2.
    let scores = [0.9, 0.8, 0.7, 0.1];
    let labels = [true, false, true, false];
    assert_eq!(average_precision(&scores, &labels).unwrap(), (1.0 + 2.0 / 3.0) / 2.0);
    assert_eq!(roc_auc(&scores, &labels).unwrap(), 0.75);
    assert_eq!(roc_auc(&[1.0, 1.0], &[true, false]).unwrap(), 0.5);
}
