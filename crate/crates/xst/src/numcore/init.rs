use super::rng::RngStream;
use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

/// Weight initialization schemes. Convolution and recurrent weights use
/// `HeNormal`; embedding and fully-connected weights use `DefaultUniform`,
/// a uniform draw over +-1/sqrt(fan_in).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    HeNormal,
    DefaultUniform,
}

/// Draw a freshly initialized tensor. `fan_in` is the number of inputs per
/// output unit; for a 1-D conv kernel that is filter_width * in_channels.
pub fn init_param<S: Scalar>(
    shape: &[usize],
    scheme: InitScheme,
    fan_in: usize,
    rng: &mut RngStream,
) -> Result<Tensor<S>> {
    if fan_in == 0 {
        return Err(Error::Invalid("init fan_in must be positive".to_string()));
    }
    let n: usize = shape.iter().product();
    let data: Vec<S> = match scheme {
        InitScheme::HeNormal => {
            let std = (2.0 / fan_in as f64).sqrt();
            (0..n).map(|_| S::from_f64(rng.normal(0.0, std))).collect()
        }
        InitScheme::DefaultUniform => {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n)
                .map(|_| S::from_f64(rng.uniform(-bound, bound)))
                .collect()
        }
    };
    Ok(Tensor::new(shape.to_vec(), data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn he_normal_variance_matches_two_over_fan_in() {
        let mut rng = RngStream::new(42, "init");
        let t: Tensor<f64> = init_param(&[100_000], InitScheme::HeNormal, 512, &mut rng).unwrap();
        let mean: f64 = t.data.iter().sum::<f64>() / t.len() as f64;
        let var: f64 = t.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t.len() as f64;
        let want = 2.0 / 512.0;
        assert!((var - want).abs() / want < 0.05, "var {} want {}", var, want);
    }

    #[test]
    fn default_uniform_stays_in_bounds() {
        let mut rng = RngStream::new(42, "init");
        let t: Tensor<f64> =
            init_param(&[10_000], InitScheme::DefaultUniform, 64, &mut rng).unwrap();
        let bound = 1.0 / 8.0;
        assert!(t.data.iter().all(|v| v.abs() <= bound));
        let spread = t.data.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        assert!(spread > bound * 0.9);
    }

    #[test]
    fn same_seed_same_tensor() {
        let mut r1 = RngStream::new(7, "init");
        let mut r2 = RngStream::new(7, "init");
        let a: Tensor<f32> = init_param(&[3, 4], InitScheme::HeNormal, 12, &mut r1).unwrap();
        let b: Tensor<f32> = init_param(&[3, 4], InitScheme::HeNormal, 12, &mut r2).unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn zero_fan_in_rejected() {
        let mut rng = RngStream::new(1, "init");
        let r: Result<Tensor<f32>> = init_param(&[2], InitScheme::HeNormal, 0, &mut rng);
        assert!(r.is_err());
    }
}
