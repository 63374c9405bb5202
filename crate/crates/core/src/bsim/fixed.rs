/// Signed fixed-point format with `dynamic` integer bits and `precision`
/// fraction bits. Values are carried as raw integers scaled by
/// `2^precision`; every operation rounds half up and saturates at
/// `±(2^dynamic - 2^-precision)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FixedFormat {
    precision: u32,
    limit: i128,
}

impl FixedFormat {
    pub fn new(dynamic: u32, precision: u32) -> Self {
        assert!(dynamic + precision <= 120, "fixed-point word too wide");
        Self {
            precision,
            limit: (1i128 << (dynamic + precision)) - 1,
        }
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    /// Largest representable raw magnitude.
    pub fn limit(&self) -> i128 {
        self.limit
    }

    pub fn saturate(&self, raw: i128, saturations: &mut u64) -> i128 {
        if raw > self.limit {
            *saturations += 1;
            self.limit
        } else if raw < -self.limit {
            *saturations += 1;
            -self.limit
        } else {
            raw
        }
    }

    pub fn quantize(&self, x: f64, saturations: &mut u64) -> i128 {
        let scaled = (x * 2f64.powi(self.precision as i32) + 0.5).floor();
        self.saturate(scaled as i128, saturations)
    }

    pub fn to_f64(&self, raw: i128) -> f64 {
        raw as f64 / 2f64.powi(self.precision as i32)
    }

    pub fn add(&self, a: i128, b: i128, saturations: &mut u64) -> i128 {
        self.saturate(a + b, saturations)
    }

    pub fn mul(&self, a: i128, b: i128, saturations: &mut u64) -> i128 {
        match a.checked_mul(b) {
            Some(p) => {
                let rounded = if self.precision == 0 {
                    p
                } else {
                    (p + (1i128 << (self.precision - 1))) >> self.precision
                };
                self.saturate(rounded, saturations)
            }
            None => {
                let negative = (a < 0) != (b < 0);
                *saturations += 1;
                if negative {
                    -self.limit
                } else {
                    self.limit
                }
            }
        }
    }
}
