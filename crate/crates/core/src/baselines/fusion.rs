/// Additive smoothing applied to every view likelihood before fusion.
pub const SEQDP_EPS: f64 = 1e-6;

pub fn uniform_posterior(classes: usize) -> Vec<f64> {
    vec![1.0 / classes as f64; classes]
}

/// `posterior' ∝ posterior ⊙ (likelihood + eps)`.
///
/// The smoothing keeps a positive posterior positive however confident a
/// single view is, and leaves a one-hot posterior exactly one-hot.
pub fn seqdp_update(posterior: &[f64], likelihood: &[f64]) -> Vec<f64> {
    assert_eq!(posterior.len(), likelihood.len(), "class count mismatch");
    let mut out: Vec<f64> = posterior.iter().zip(likelihood).map(|(p, l)| p * (l + SEQDP_EPS)).collect();
    let z: f64 = out.iter().sum();
    for v in &mut out {
        *v /= z;
    }
    out
}

/// Shannon entropy in nats; `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use proptest::prelude::*;

    fn random_likelihood(rng: &mut Stream, c: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..c).map(|_| rng.uniform() + 1e-3).collect();
        let z: f64 = raw.iter().sum();
        raw.iter().map(|v| v / z).collect()
    }

    fn product_oracle(prior: &[f64], views: &[Vec<f64>]) -> Vec<f64> {
        let mut p: Vec<f64> = prior.to_vec();
        for v in views {
            for (a, l) in p.iter_mut().zip(v) {
                *a *= l + SEQDP_EPS;
            }
        }
        let z: f64 = p.iter().sum();
        p.iter().map(|v| v / z).collect()
    }

    #[test]
    fn uniform_prior_one_view_gives_the_likelihood() {
        let lik = [0.5, 0.25, 0.125, 0.125];
        let post = seqdp_update(&uniform_posterior(4), &lik);
        for (p, l) in post.iter().zip(lik) {
            assert!((p - l).abs() < 1e-5);
        }
        assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fusion_matches_product_oracle() {
        let mut rng = Stream::new(17, "seqdp");
        for _ in 0..1000 {
            let k = 1 + rng.below(5);
            let views: Vec<Vec<f64>> = (0..k).map(|_| random_likelihood(&mut rng, 5)).collect();
            let prior = random_likelihood(&mut rng, 5);
            let fused = views.iter().fold(prior.clone(), |p, v| seqdp_update(&p, v));
            for (a, b) in fused.iter().zip(product_oracle(&prior, &views)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn uniform_view_keeps_argmax() {
        let post = [0.1, 0.6, 0.3];
        let out = seqdp_update(&post, &[1.0 / 3.0; 3]);
        assert_eq!(crate::agent::argmax(&out), 1);
    }

    #[test]
    fn one_hot_is_absorbing_and_zero_entropy() {
        let out = seqdp_update(&[0.0, 1.0, 0.0], &[0.9, 0.01, 0.09]);
        assert_eq!(out, vec![0.0, 1.0, 0.0]);
        assert_eq!(entropy(&out), 0.0);
        assert!((entropy(&[0.5, 0.5]) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_likelihood_does_not_collapse() {
        let out = seqdp_update(&uniform_posterior(3), &[0.0, 1.0, 0.0]);
        assert!(out.iter().all(|&p| p > 0.0));
    }

    proptest! {
        #[test]
        fn order_invariant(seed in 0u64..10_000, k in 1usize..6) {
            let mut rng = Stream::new(seed, "perm");
            let views: Vec<Vec<f64>> = (0..k).map(|_| random_likelihood(&mut rng, 5)).collect();
            let mut shuffled = views.clone();
            rng.shuffle(&mut shuffled);
            let a = views.iter().fold(uniform_posterior(5), |p, v| seqdp_update(&p, v));
            let b = shuffled.iter().fold(uniform_posterior(5), |p, v| seqdp_update(&p, v));
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
