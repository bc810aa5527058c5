// SPDX-License-Identifier: Apache-2.0

//! Backpropagation against central differences, then a few Adam steps on a
//! regression toy.
//!
//! ```text
//! cargo run --example mlp_gradcheck
//! ```

use crystalgan::nn::{AdamConfig, AdamState, Mlp, MlpSpec};
use ndarray::Array2;

fn loss(net: &Mlp, x: &Array2<f64>) -> f64 {
    let y = net.predict(x.view()).unwrap();
    0.5 * y.iter().map(|v| v * v).sum::<f64>()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut net = Mlp::init(MlpSpec::generator(6, 2, 16), 7)?;
    let x = Array2::from_shape_fn((4, 6), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.4);

    let (y, cache) = net.forward_batch(x.view())?;
    let (grads, _) = net.backward(&cache, y.view())?;
    let h = 1e-6;
    let mut worst = 0.0_f64;
    for (l, layer) in grads.layers.iter().enumerate() {
        for (idx, g) in layer.w.indexed_iter().step_by(5) {
            let mut p = net.clone();
            p.layers[l].w[idx] += h;
            let mut m = net.clone();
            m.layers[l].w[idx] -= h;
            let fd = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
            worst = worst.max((fd - g).abs() / fd.abs().max(g.abs()).max(1e-8));
        }
    }
    println!("{} parameters, max relative gradient error {worst:.2e}", net.num_params());

    let mut adam = AdamState::new(&net, AdamConfig { alpha: 1e-2, ..AdamConfig::default() });
    for step in 0..=200 {
        let (y, cache) = net.forward_batch(x.view())?;
        if step % 50 == 0 {
            println!("step {step:>3} loss {:.6}", loss(&net, &x));
        }
        let (grads, _) = net.backward(&cache, y.view())?;
        adam.step(&mut net, &grads);
    }
    Ok(())
}
