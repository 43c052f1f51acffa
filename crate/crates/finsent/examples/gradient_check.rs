//! Verify the autodiff engine against central finite differences on a small
//! composite graph: layer_norm(tanh(x·W + b); g, c) summed to a scalar.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use finsent::Tensor;

fn loss(x: &Tensor, w: &Tensor, b: &Tensor, g: &Tensor, c: &Tensor) -> f64 {
    x.matmul(w)
        .unwrap()
        .add_row(b)
        .unwrap()
        .tanh()
        .layer_norm(g, c)
        .unwrap()
        .gelu()
        .sum_all()
        .item()
}

fn main() -> finsent::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = Tensor::randn(&[3, 4], 1.0, &mut rng).with_grad();
    let w = Tensor::randn(&[4, 2], 0.5, &mut rng).with_grad();
    let b = Tensor::randn(&[2], 0.5, &mut rng).with_grad();
    let g = Tensor::ones(&[2]).with_grad();
    let c = Tensor::zeros(&[2]).with_grad();

    let out = x
        .matmul(&w)?
        .add_row(&b)?
        .tanh()
        .layer_norm(&g, &c)?
        .gelu()
        .sum_all();
    out.backward()?;

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (name, param) in [("x", &x), ("w", &w), ("b", &b), ("g", &g), ("c", &c)] {
        let grad = param.grad().expect("missing gradient");
        for i in 0..param.numel() {
            param.nudge(i, h);
            let up = loss(&x, &w, &b, &g, &c);
            param.nudge(i, -2.0 * h);
            let down = loss(&x, &w, &b, &g, &c);
            param.nudge(i, h);
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1.0);
            worst = worst.max(rel);
            println!(
                "{}[{}]: autodiff {:+.6}  finite-diff {:+.6}  rel {:.2e}",
                name, i, grad[i], fd, rel
            );
        }
    }
    println!("worst relative error: {:.2e}", worst);
    assert!(worst < 1e-6);
    Ok(())
}
