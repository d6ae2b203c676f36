//! Check backprop against central differences on a small network in f64.
//!
//!     cargo run --release --example gradient_check

use purifier::nncore::gradcheck::{check_gradients, FD_STEP};
use purifier::nncore::{stack, Activation, Loss, Matrix, Mlp};

fn main() -> purifier::Result<()> {
    let net = Mlp::<f64>::new(
        stack(&[6, 8, 8, 4], Activation::Tanh, Activation::Softmax, false),
        3,
    )?;
    let x = Matrix::from_vec(2, 6, (0..12).map(|i| (i as f64 * 0.37).sin()).collect())?;
    let labels = [1, 3];
    let target = Matrix::from_vec(2, 4, vec![0.1, 0.6, 0.2, 0.1, 0.25, 0.25, 0.25, 0.25])?;
    for (name, loss) in [
        ("cross-entropy", Loss::CrossEntropy { labels: &labels }),
        ("mse", Loss::Mse { target: &target }),
        (
            "mse + cross-entropy",
            Loss::Composite {
                target: &target,
                labels: &labels,
                lambda: 1.0,
            },
        ),
    ] {
        let r = check_gradients(&net, &x, &loss, FD_STEP, 1e-6)?;
        println!(
            "{name:<20} {} parameters, max relative error {:.2e}",
            r.params_checked, r.max_rel_error
        );
    }
    Ok(())
}
