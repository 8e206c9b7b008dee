use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wisva::nn::{grad_check, Conv2d, ConvTranspose2d, TensorBuffer};

fn conv_case(rng: &mut ChaCha8Rng) -> (String, f64) {
    let ic = rng.gen_range(1..3usize);
    let oc = rng.gen_range(1..4usize);
    let k = [1, 2, 3][rng.gen_range(0..3)];
    let s = rng.gen_range(1..3usize);
    let p = rng.gen_range(0..2usize).min(k - 1);
    let h = rng.gen_range(5..8usize).max(k);
    let tag = format!("conv ic={ic} oc={oc} k={k} s={s} p={p} h={h}");
    let x = TensorBuffer::<f64>::from_vec(
        vec![1, ic, h, h],
        (0..ic * h * h).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    );
    let wlen = oc * ic * k * k;
    let params: Vec<f64> = (0..wlen + oc).map(|_| rng.gen_range(-0.7..0.7)).collect();
    let build = |p_flat: &[f64]| Conv2d::<f64> {
        weight: TensorBuffer::from_vec(vec![oc, ic, k, k], p_flat[..wlen].to_vec()),
        bias: TensorBuffer::from_vec(vec![oc], p_flat[wlen..].to_vec()),
        stride: s,
        pad: p,
    };
    let loss = |p_flat: &[f64]| -> f64 {
        let layer = build(p_flat);
        let y = layer.forward(&x).unwrap();
        let a = wisva::nn::leaky_relu(&y, 0.2);
        a.data().iter().sum::<f64>() / a.len() as f64
    };
    let layer = build(&params);
    let y = layer.forward(&x).unwrap();
    let gy_act = TensorBuffer::from_vec(y.dims().to_vec(), vec![1.0 / y.len() as f64; y.len()]);
    let gy = wisva::nn::leaky_relu_backward(&y, &gy_act, 0.2);
    let (_, grads) = layer.backward(&x, &gy).unwrap();
    let analytic: Vec<f64> =
        grads.weight.data().iter().chain(grads.bias.data()).copied().collect();
    (tag, grad_check(loss, &params, &analytic, 1e-3))
}

fn convt_case(rng: &mut ChaCha8Rng) -> (String, f64) {
    let ic = rng.gen_range(1..3usize);
    let oc = rng.gen_range(1..3usize);
    let (k, s, p) = [(2, 2, 0), (4, 2, 1), (3, 1, 1)][rng.gen_range(0..3)];
    let h = rng.gen_range(3..6usize);
    let tag = format!("convT ic={ic} oc={oc} k={k} s={s} p={p} h={h}");
    let x = TensorBuffer::<f64>::from_vec(
        vec![1, ic, h, h],
        (0..ic * h * h).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    );
    let wlen = ic * oc * k * k;
    let params: Vec<f64> = (0..wlen + oc).map(|_| rng.gen_range(-0.7..0.7)).collect();
    let build = |p_flat: &[f64]| ConvTranspose2d::<f64> {
        weight: TensorBuffer::from_vec(vec![ic, oc, k, k], p_flat[..wlen].to_vec()),
        bias: TensorBuffer::from_vec(vec![oc], p_flat[wlen..].to_vec()),
        stride: s,
        pad: p,
    };
    let loss = |p_flat: &[f64]| -> f64 {
        let layer = build(p_flat);
        let y = layer.forward(&x).unwrap();
        let a = wisva::nn::leaky_relu(&y, 0.2);
        a.data().iter().sum::<f64>() / a.len() as f64
    };
    let layer = build(&params);
    let y = layer.forward(&x).unwrap();
    let gy_act = TensorBuffer::from_vec(y.dims().to_vec(), vec![1.0 / y.len() as f64; y.len()]);
    let gy = wisva::nn::leaky_relu_backward(&y, &gy_act, 0.2);
    let (_, grads) = layer.backward(&x, &gy).unwrap();
    let analytic: Vec<f64> =
        grads.weight.data().iter().chain(grads.bias.data()).copied().collect();
    (tag, grad_check(loss, &params, &analytic, 1e-3))
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..20 {
        let (tag, err) = conv_case(&mut rng);
        if err > 1e-3 {
            println!("iter {i}: {tag} -> ERR {err:.3e}");
        }
        let (tag, err) = convt_case(&mut rng);
        if err > 1e-3 {
            println!("iter {i}: {tag} -> ERR {err:.3e}");
        }
    }
    println!("done");
}
