use serde::Serialize;

/// Classification and segmentation scores. `per_class_iou` is `None` for classes that
/// occur in neither prediction nor ground truth; those are left out of `miou`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
    pub loss: f64,
}

/// Accuracy and IoU statistics of `pred` against `truth`. `loss` is left at zero.
pub fn compute_miou(pred: &[usize], truth: &[usize], num_labels: usize) -> Metrics {
    assert_eq!(pred.len(), truth.len(), "prediction and truth lengths differ");
    let mut tp = vec![0usize; num_labels];
    let mut fp = vec![0usize; num_labels];
    let mut fn_ = vec![0usize; num_labels];
    let mut correct = 0;
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            tp[p] += 1;
            correct += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let per_class_iou: Vec<Option<f64>> = (0..num_labels)
        .map(|c| {
            let union = tp[c] + fp[c] + fn_[c];
            (union > 0).then(|| tp[c] as f64 / union as f64)
        })
        .collect();
    let present: Vec<f64> = per_class_iou.iter().flatten().copied().collect();
    let miou = if present.is_empty() {
        1.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    Metrics {
        accuracy: if pred.is_empty() {
            1.0
        } else {
            correct as f64 / pred.len() as f64
        },
        per_class_iou,
        miou,
        loss: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn perfect() {
        let m = compute_miou(&[0, 1, 2, 1], &[0, 1, 2, 1], 4);
        assert_eq!(m.miou, 1.0);
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.per_class_iou[3], None);
    }

    #[test]
    fn hand_computed_confusion() {
        // class 0: TP 2, FP 1, FN 1; class 1: TP 6, FP 1, FN 1
        let truth = [0, 0, 0, 1, 1, 1, 1, 1, 1, 1];
        let pred = [0, 0, 1, 0, 1, 1, 1, 1, 1, 1];
        let m = compute_miou(&pred, &truth, 2);
        assert_eq!(m.per_class_iou, vec![Some(0.5), Some(0.75)]);
        assert!((m.miou - 0.625).abs() < 1e-15);
    }

    #[test]
    fn single_class_prediction() {
        let truth = [0, 1, 1, 0, 1];
        let m = compute_miou(&[1; 5], &truth, 2);
        assert_eq!(m.per_class_iou, vec![Some(0.0), Some(3.0 / 5.0)]);
    }

    #[test]
    fn counting_oracle() {
        let mut rng = Rng::new(6);
        for _ in 0..50 {
            let n = 1 + rng.below(60);
            let k = 1 + rng.below(5);
            let pred: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
            let truth: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
            let m = compute_miou(&pred, &truth, k);
            let acc = pred.iter().zip(&truth).filter(|(a, b)| a == b).count() as f64 / n as f64;
            assert_eq!(m.accuracy, acc);
            let mut ious = Vec::new();
            for c in 0..k {
                let inter = (0..n).filter(|&i| pred[i] == c && truth[i] == c).count();
                let union = (0..n).filter(|&i| pred[i] == c || truth[i] == c).count();
                if union > 0 {
                    ious.push(inter as f64 / union as f64);
                }
            }
            let expect = ious.iter().sum::<f64>() / ious.len() as f64;
            assert!((m.miou - expect).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&m.miou));
        }
    }
}
