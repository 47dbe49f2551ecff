use tiptail::augment::augment_30;
use tiptail::detection::{detect_frame, Bands};
use tiptail::slitcnn::{ModelSpec, Network, Variant};
use tiptail::stereo::CameraRig;
use tiptail::synth::{make_signer, render_stereo_frames, sample_genuine, RenderOptions, SynthParams};
use tiptail::trajectory::{
    bspline_resample, decode_interpolated_csv, decode_raw_csv, decode_tip_tail_csv, derive_tip_tail,
    encode_interpolated_csv, encode_raw_csv, encode_tip_tail_csv, RawSequence,
};

fn capture(seed: u64) -> RawSequence {
    let rig = CameraRig::default();
    let samples = sample_genuine(&SynthParams::default(), &make_signer(2, seed), 0);
    let opts = RenderOptions::default();
    let bands = Bands::default();
    let mut seq = RawSequence::new();
    for frame in render_stereo_frames(&rig, &samples, &opts) {
        let f = frame.unwrap();
        let det = detect_frame(&f.left, &f.right, &bands).unwrap();
        seq.push_frame(det.to_array(), rig.image_width, rig.image_height);
    }
    seq
}

#[test]
fn frames_to_class_probabilities() {
    let rig = CameraRig::default();
    let seq = capture(4);
    assert_eq!(seq, capture(4));
    let seq = decode_raw_csv(&encode_raw_csv(&seq)).unwrap();

    let (traj, report) = derive_tip_tail(&seq, &rig);
    assert_eq!(report.input_rows, seq.len());
    assert_eq!(
        traj.len() + report.green_occluded + report.orange_occluded + report.degenerate,
        seq.len()
    );
    assert!(traj.len() > seq.len() / 2);
    let traj = decode_tip_tail_csv(&encode_tip_tail_csv(&traj)).unwrap();

    let x = bspline_resample(&traj, 64).unwrap();
    assert_eq!((x.len(), x.cols()), (64, 6));
    let x = decode_interpolated_csv(&encode_interpolated_csv(&x), Some(64)).unwrap();

    let members = augment_30(&x);
    let net = Network::new(ModelSpec::new(Variant::TwoStream, 64, 5), 1).unwrap();
    let refs: Vec<_> = members.iter().collect();
    let probs = net.predict_proba(&refs).unwrap();
    assert_eq!(probs.len(), 30);
    for row in &probs {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let narrow = Network::new(ModelSpec::new(Variant::TipOnly, 64, 5), 1).unwrap();
    assert_eq!(narrow.predict_proba(&[&x.tip_only()]).unwrap()[0].len(), 5);
}
