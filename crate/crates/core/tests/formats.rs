use hstream_core::eval::{classification_metrics, ClassificationReport, CheckpointMetrics};
use hstream_core::tensor::{decode_tensor, encode_tensor, read_tensor, write_tensor};
use hstream_core::{ActionLabel, Error, Tensor};
use proptest::prelude::*;

fn tensor_strategy() -> impl Strategy<Value = Tensor<f32>> {
    prop::collection::vec(1usize..6, 1..=4).prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        prop::collection::vec(any::<u32>().prop_map(f32::from_bits), n)
            .prop_map(move |data| Tensor::new(shape.clone(), data).unwrap())
    })
}

fn bits(t: &Tensor<f32>) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

proptest! {
    #[test]
    fn encode_decode_is_bitwise_identity(t in tensor_strategy()) {
        let back = decode_tensor(&encode_tensor(&t)).unwrap();
        prop_assert_eq!(back.shape(), t.shape());
        prop_assert_eq!(bits(&back), bits(&t));
    }

    #[test]
    fn any_truncation_is_rejected(t in tensor_strategy(), cut in 1usize..64) {
        let bytes = encode_tensor(&t);
        let keep = bytes.len().saturating_sub(cut);
        let err = decode_tensor(&bytes[..keep]).unwrap_err();
        prop_assert!(matches!(err, Error::TensorFormat(_) | Error::TensorLength { .. }), "{err:?}");
    }
}

#[test]
fn file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let t = Tensor::from_fn(&[3, 4, 2], |i| i as f32 * -0.25).unwrap();
    let path = dir.path().join("t.htsr");
    write_tensor(&t, &path).unwrap();
    assert_eq!(read_tensor(&path).unwrap(), t);
    assert!(matches!(read_tensor(dir.path().join("missing.htsr")), Err(Error::Io { .. })));
}

#[test]
fn header_corruption_classes() {
    let t = Tensor::from_fn(&[2, 3], |i| i as f32).unwrap();
    let good = encode_tensor(&t);
    let corrupt = |at: usize, v: u8| {
        let mut b = good.clone();
        b[at] = v;
        decode_tensor(&b).unwrap_err()
    };
    assert!(matches!(corrupt(0, b'X'), Error::TensorFormat(_)));
    assert!(matches!(corrupt(4, 2), Error::TensorFormat(_)));
    assert!(matches!(corrupt(5, 1), Error::TensorFormat(_)));
    assert!(matches!(corrupt(6, 0), Error::TensorFormat(_)));
    assert!(matches!(corrupt(6, 5), Error::TensorFormat(_)));
    assert!(matches!(corrupt(7, 0), Error::TensorFormat(_)));
    // A larger declared shape than the payload holds.
    assert!(matches!(corrupt(7, 9), Error::TensorLength { expected: 108, actual: 24 }));

    let mut long = good.clone();
    long.push(0);
    assert!(matches!(decode_tensor(&long), Err(Error::TensorLength { expected: 24, actual: 25 })));
    assert!(matches!(decode_tensor(b"HTS"), Err(Error::TensorFormat(_))));
}

#[test]
fn classification_report_json_roundtrip() {
    use ActionLabel::*;
    let gts = [Forward, Forward, Backward, Passing, Shooting, Shooting, Passing, Backward];
    let a = [Forward, Backward, Backward, Passing, Shooting, Passing, Passing, Backward];
    let b = [Forward, Forward, Backward, Shooting, Shooting, Shooting, Passing, Forward];
    let cps = [a, b]
        .iter()
        .enumerate()
        .map(|(k, p)| CheckpointMetrics {
            epoch: Some(k + 3),
            val_accuracy: Some(0.8 - k as f64 / 10.0),
            metrics: classification_metrics(p, &gts).unwrap(),
        })
        .collect();
    let report = ClassificationReport::from_checkpoints(Some(Default::default()), cps).unwrap();
    let text = serde_json::to_string_pretty(&report).unwrap();
    let back: ClassificationReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, report);
    assert_eq!(serde_json::to_string_pretty(&back).unwrap(), text);
}
