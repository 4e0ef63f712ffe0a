use rand::Rng;
use rand_distr::{Distribution, Exp};

/// Poisson arrival times in `[0, horizon)`, sorted.
pub fn generate_arrivals(rate: f64, horizon: f64, rng: &mut impl Rng) -> Vec<f64> {
    assert!(rate >= 0.0, "arrival rate must be non-negative");
    if rate == 0.0 {
        return Vec::new();
    }
    let gap = Exp::new(rate).expect("positive finite rate");
    let mut out = Vec::with_capacity((rate * horizon * 1.1) as usize + 4);
    let mut t = 0.0;
    loop {
        t += gap.sample(rng);
        if t >= horizon {
            return out;
        }
        out.push(t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_is_empty() {
        assert!(generate_arrivals(0.0, 1e6, &mut ChaCha8Rng::seed_from_u64(0)).is_empty());
    }

    #[test]
    fn sorted_and_bounded() {
        let a = generate_arrivals(0.5, 1000.0, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
        assert!(a.iter().all(|&t| (0.0..1000.0).contains(&t)));
    }
}
