use std::f64::consts::TAU;

/// L'Ecuyer's three-component combined Tausworthe generator (taus88).
#[derive(Clone, Debug)]
pub struct Taus88 {
    s1: u32,
    s2: u32,
    s3: u32,
}

impl Taus88 {
    /// Components below their minimum seed value are lifted above it; the
    /// generator degenerates otherwise.
    pub fn new(s1: u32, s2: u32, s3: u32) -> Self {
        Self {
            s1: if s1 < 2 { s1 + 2 } else { s1 },
            s2: if s2 < 8 { s2 + 8 } else { s2 },
            s3: if s3 < 16 { s3 + 16 } else { s3 },
        }
    }

    pub fn from_seed(seed: u64) -> Self {
        let mut sm = seed;
        let mut draw = || splitmix64(&mut sm) as u32;
        Self::new(draw(), draw(), draw())
    }

    pub fn next_u32(&mut self) -> u32 {
        let b = ((self.s1 << 13) ^ self.s1) >> 19;
        self.s1 = ((self.s1 & 0xFFFF_FFFE) << 12) ^ b;
        let b = ((self.s2 << 2) ^ self.s2) >> 25;
        self.s2 = ((self.s2 & 0xFFFF_FFF8) << 4) ^ b;
        let b = ((self.s3 << 3) ^ self.s3) >> 11;
        self.s3 = ((self.s3 & 0xFFFF_FFF0) << 17) ^ b;
        self.s1 ^ self.s2 ^ self.s3
    }

    /// Uniform on (0, 1), never hitting either end.
    pub fn next_open01(&mut self) -> f64 {
        (self.next_u32() as f64 + 0.5) / 4_294_967_296.0
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a global seed with a list of integers into one 64-bit seed.
pub fn seed_for(global: u64, parts: &[u64]) -> u64 {
    let mut state = global;
    let mut h = splitmix64(&mut state);
    for &p in parts {
        state ^= p.wrapping_mul(0xD6E8_FEB8_6659_FD93) ^ h;
        h = splitmix64(&mut state);
    }
    h
}

/// Box-Muller stream for one path, using both outputs of each pair.
pub(crate) struct Normals {
    gen: Taus88,
    spare: Option<f64>,
}

impl Normals {
    pub(crate) fn new(seed: u64, path: u64) -> Self {
        Self {
            gen: Taus88::from_seed(seed_for(seed, &[path])),
            spare: None,
        }
    }

    pub(crate) fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.gen.next_open01();
        let u2 = self.gen.next_open01();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_lifted() {
        let mut g = Taus88::new(0, 0, 0);
        let first: Vec<u32> = (0..4).map(|_| g.next_u32()).collect();
        assert!(first.iter().any(|&x| x != 0));
        let mut h = Taus88::new(2, 8, 16);
        assert_eq!(first, (0..4).map(|_| h.next_u32()).collect::<Vec<_>>());
    }

    #[test]
    fn uniforms_look_uniform() {
        let mut g = Taus88::from_seed(1);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| g.next_open01()).collect();
        assert!(xs.iter().all(|&x| x > 0.0 && x < 1.0));
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005);
    }

    #[test]
    fn normals_have_unit_moments() {
        let mut z = Normals::new(3, 0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| z.next_normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn seed_mixing_separates_inputs() {
        assert_ne!(seed_for(1, &[2, 3]), seed_for(1, &[3, 2]));
        assert_ne!(seed_for(1, &[2]), seed_for(2, &[2]));
        assert_eq!(seed_for(9, &[4, 4]), seed_for(9, &[4, 4]));
    }
}
