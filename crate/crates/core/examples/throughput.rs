use padlab_core::{ops, PaddingMode, Tensor};
use std::time::Instant;

fn main() {
    let (n, ci, co, h, k) = (8usize, 32usize, 32usize, 35usize, 3usize);
    let x = Tensor::from_fn(n, ci, h, h, |a, b, c, d| ((a + b + c + d) % 7) as f64 * 0.1);
    let w = Tensor::from_fn(co, ci, k, k, |a, b, c, d| ((a * b + c + d) % 5) as f64 * 0.01);
    let b = Tensor::zeros(1, co, 1, 1);
    let mode = PaddingMode::zero(1);

    let mac = (n * co * h * h * ci * k * k) as f64;

    let t0 = Instant::now();
    let mut iters = 0u32;
    let mut y = None;
    while t0.elapsed().as_secs_f64() < 2.0 {
        y = Some(ops::conv2d_forward(&x, &w, &b, mode, 1).unwrap());
        iters += 1;
    }
    let fwd = t0.elapsed().as_secs_f64() / iters as f64;
    println!("forward: {:.1} ms, {:.2} GMAC/s", fwd * 1e3, mac / fwd / 1e9);

    let dy = y.unwrap();
    let t0 = Instant::now();
    let mut iters = 0u32;
    while t0.elapsed().as_secs_f64() < 2.0 {
        let _ = ops::conv2d_backward(&x, &w, mode, 1, &dy).unwrap();
        iters += 1;
    }
    let bwd = t0.elapsed().as_secs_f64() / iters as f64;
    println!("backward: {:.1} ms, {:.2} GMAC/s (2x mac work)", bwd * 1e3, 2.0 * mac / bwd / 1e9);
}
