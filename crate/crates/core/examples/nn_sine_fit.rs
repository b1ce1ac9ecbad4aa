//! Fits sin(x) on [-3, 3] with a 1-16-16-1 MLP, using the hand-written
//! reverse-mode gradients and Adam.
//!
//! cargo run --release --example nn_sine_fit

use pars::nn::{Adam, GradientTape, Gradients, Matrix, Mlp};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut net = Mlp::<f64>::new(&[1, 16, 16, 1], &mut rng)?;
    let mut adam = Adam::new(net.params().len(), 1e-2);
    let n = 64;
    let xs: Vec<f64> = (0..n).map(|i| -3.0 + 6.0 * i as f64 / (n - 1) as f64).collect();
    let x = Matrix::from_vec(n, 1, xs.clone())?;
    for epoch in 0..=2000 {
        let mut tape = GradientTape::new();
        let y = net.forward_recorded(&mut tape, &x)?;
        let mut d = Matrix::zeros(n, 1);
        let mut mse = 0.0;
        for i in 0..n {
            let err = y.data[i] - xs[i].sin();
            mse += err * err / n as f64;
            d.data[i] = 2.0 * err / n as f64;
        }
        if epoch % 250 == 0 {
            println!("epoch {epoch:>4}  mse {mse:.2e}");
        }
        let mut grads = Gradients::for_net(&net);
        net.backward(&tape, &d, &mut grads)?;
        adam.step(net.params_mut(), &grads.values)?;
    }
    for x in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        println!("f({x:>4.1}) = {:>7.4}  sin = {:>7.4}", net.forward_one(&[x])?[0], f64::sin(x));
    }
    Ok(())
}
