//! Compare backpropagated gradients of the squared TD error with central
//! differences for one randomly initialised Q-network.
//!
//!     cargo run --example gradient_check

use reflexq::nn::QNetwork;

fn main() -> reflexq::Result<()> {
    let mut net = QNetwork::init(&[6, 40, 40, 11], 3)?;
    let input = [0.3, -0.8, 0.1, 0.5, -0.2, 0.9];
    let (action, target) = (4, 1.7);
    let (loss, grads) = net.gradient(&input, action, target)?;
    let analytic = grads.flat();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, &g) in analytic.iter().enumerate() {
        let p = net.parameter(i);
        let mut side = |v: f64| -> reflexq::Result<f64> {
            net.set_parameter(i, v);
            let q = net.forward(&input)?[action];
            Ok(0.5 * (target - q) * (target - q))
        };
        let numeric = (side(p + h)? - side(p - h)?) / (2.0 * h);
        net.set_parameter(i, p);
        worst = worst.max((g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-6));
    }
    println!("loss {loss:.6}, {} parameters, max relative error {worst:.2e}", analytic.len());
    Ok(())
}
