//! Analytic gradients against central finite differences.

use latent_rcps_core::encoder::{grad, total_loss, DimMask, EncoderParams, TrainConfig};
use latent_rcps_core::rng;
use latent_rcps_core::synth::{generate_samples, CorruptionPolicy, Generator};
use rand::Rng;

#[test]
fn gradient_matches_central_differences() {
    let g = Generator::default();
    let data = generate_samples(
        &g,
        &CorruptionPolicy::Downsample(vec![1, 4, 8]),
        21,
        "fd",
        6,
    )
    .unwrap();
    let mask = DimMask::leading(8, 6).unwrap();
    let cfg = TrainConfig {
        recon_weight: 10.0,
        ..TrainConfig::default()
    };
    let params = EncoderParams::init(1024, &[24, 12], 8, &mut rng::stream(4)).unwrap();
    let (analytic, _) = grad(&params, &g, &data, &mask, &cfg).unwrap();

    let h = 1e-5;
    let mut r = rng::stream(99);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 100 {
        let k = r.random_range(0..params.num_params());
        let a = analytic.param(k);
        let mut plus = params.clone();
        plus.set_param(k, params.param(k) + h);
        let mut minus = params.clone();
        minus.set_param(k, params.param(k) - h);
        let fp = total_loss(&plus, &g, &data, &mask, &cfg).unwrap();
        let fm = total_loss(&minus, &g, &data, &mask, &cfg).unwrap();
        let fd = (fp - fm) / (2.0 * h);
        let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-8);
        println!("k={k} fd={fd:.9} analytic={a:.9} rel={rel:.2e}");
        worst = worst.max(rel);
        checked += 1;
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}
