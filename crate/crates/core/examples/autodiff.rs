//! Build a small computation on the tape, read gradients, and compare them
//! against central differences.

use tdmat::autodiff::{grad_check, GradCheckOptions, Graph, ParamStore, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut params = ParamStore::new();
    params.insert("w", Tensor::new(2, 3, vec![0.5, -0.2, 0.1, 0.3, 0.8, -0.6])?);
    params.insert("b", Tensor::row(&[0.1, 0.0, -0.1]));

    // loss = sum of squared softmax probabilities of a GELU layer
    let loss = |g: &mut Graph<'_>| -> Result<_, tdmat::autodiff::TensorError> {
        let x = g.constant(Tensor::new(4, 2, vec![1.0, 2.0, -1.0, 0.5, 0.3, -0.7, 2.0, 1.0])?)?;
        let w = g.param("w")?;
        let b = g.param("b")?;
        let h = g.matmul(x, w)?;
        let h = g.add_row(h, b)?;
        let h = g.gelu(h)?;
        let p = g.softmax(h)?;
        let s = g.square(p)?;
        g.sum(s)
    };

    let mut g = Graph::new(&params);
    let out = loss(&mut g)?;
    println!("loss = {:.6}", g.value(out).item());
    let grads = g.backward(out)?;
    println!("dL/dw = {:.4?}", grads["w"].data());

    let report = grad_check(&params, loss, &GradCheckOptions::default())?;
    println!("finite differences: max relative error {:.2e} over {} coordinates", report.max_rel_error, report.checked);
    Ok(())
}
