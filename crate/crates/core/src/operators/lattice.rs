use serde::Serialize;

/// Which closed-form operand a function is, when known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KnownForm {
    Constant,
    Identity,
    Square,
}

/// A function on the nonnegative integers: explicit values on `0..=R` and
/// the polynomial tail `alpha + beta r + gamma r^2` beyond `R`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeFunction {
    values: Vec<f64>,
    alpha: f64,
    beta: f64,
    gamma: f64,
    #[serde(skip)]
    known: Option<KnownForm>,
}

/// `|f(r)| <= c0 + c1 r + c2 r^2` for all `r >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthBound {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl GrowthBound {
    pub fn at(&self, r: f64) -> f64 {
        self.c0 + self.c1 * r + self.c2 * r * r
    }
}

impl LatticeFunction {
    pub fn new(values: Vec<f64>, alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { values, alpha, beta, gamma, known: None }
    }

    /// Affine tail only.
    pub fn affine(values: Vec<f64>, alpha: f64, beta: f64) -> Self {
        Self::new(values, alpha, beta, 0.0)
    }

    /// Tabulates `f` on `0..=window` and takes the given tail beyond.
    pub fn from_fn(window: usize, f: impl Fn(u64) -> f64, alpha: f64, beta: f64, gamma: f64) -> Self {
        Self::new((0..=window as u64).map(f).collect(), alpha, beta, gamma)
    }

    pub fn constant(c: f64) -> Self {
        Self { known: Some(KnownForm::Constant), ..Self::new(Vec::new(), c, 0.0, 0.0) }
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    /// `u(r) = r`.
    pub fn identity() -> Self {
        Self { known: Some(KnownForm::Identity), ..Self::new(Vec::new(), 0.0, 1.0, 0.0) }
    }

    /// `u^2(r) = r^2`.
    pub fn square() -> Self {
        Self { known: Some(KnownForm::Square), ..Self::new(Vec::new(), 0.0, 0.0, 1.0) }
    }

    pub fn known(&self) -> Option<KnownForm> {
        self.known
    }

    /// Last explicit index plus one.
    pub fn window_len(&self) -> usize {
        self.values.len()
    }

    pub fn tail(&self) -> (f64, f64, f64) {
        (self.alpha, self.beta, self.gamma)
    }

    #[inline]
    pub fn eval(&self, r: u64) -> f64 {
        match self.values.get(r as usize) {
            Some(&v) => v,
            None => {
                let x = r as f64;
                self.alpha + self.beta * x + self.gamma * x * x
            }
        }
    }

    pub fn growth_bound(&self) -> GrowthBound {
        let c1 = self.beta.abs();
        let c2 = self.gamma.abs();
        let mut c0 = self.alpha.abs();
        for (r, &v) in self.values.iter().enumerate() {
            let x = r as f64;
            c0 = c0.max(v.abs() - c1 * x - c2 * x * x);
        }
        GrowthBound { c0, c1, c2 }
    }

    /// `a f + b g`.
    pub fn combine(a: f64, f: &Self, b: f64, g: &Self) -> Self {
        let len = f.values.len().max(g.values.len());
        let values = (0..len as u64).map(|r| a * f.eval(r) + b * g.eval(r)).collect();
        Self::new(values, a * f.alpha + b * g.alpha, a * f.beta + b * g.beta, a * f.gamma + b * g.gamma)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self::combine(a, self, 0.0, &Self::constant(0.0))
    }
}
