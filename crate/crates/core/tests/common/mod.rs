//! Independent oracles shared by the integration tests.

/// Forward-mode dual number carrying a value and one derivative.
#[derive(Clone, Copy, Debug)]
struct Dual<T> {
    v: T,
    d: T,
}

pub trait Num: Copy + std::ops::Add<Output = Self> + std::ops::Mul<Output = Self> + std::ops::Neg<Output = Self> {
    fn c(x: f64) -> Self;
    fn powf(self, e: f64) -> Self;
}

impl Num for f64 {
    fn c(x: f64) -> Self {
        x
    }
    fn powf(self, e: f64) -> Self {
        f64::powf(self, e)
    }
}

impl<T: Num> std::ops::Add for Dual<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}

impl<T: Num> std::ops::Mul for Dual<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual { v: self.v * o.v, d: self.d * o.v + self.v * o.d }
    }
}

impl<T: Num> std::ops::Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual { v: -self.v, d: -self.d }
    }
}

impl<T: Num> Num for Dual<T> {
    fn c(x: f64) -> Self {
        Dual { v: T::c(x), d: T::c(0.0) }
    }
    fn powf(self, e: f64) -> Self {
        Dual {
            v: self.v.powf(e),
            d: T::c(e) * self.v.powf(e - 1.0) * self.d,
        }
    }
}

/// `a (1 + r^{p/(p-1)})^{-(N-p)/p}` written generically so that nested duals
/// give `U'` and `U''`.
pub fn profile<T: Num>(r: T, a: f64, n: f64, p: f64) -> T {
    let q = p / (p - 1.0);
    T::c(a) * (T::c(1.0) + r.powf(q)).powf(-(n - p) / p)
}

/// Relative residual of `-(r^{N-1} |U'|^{p-2} U')' r^{1-N} = U^{p*-1}`.
pub fn radial_residual(r: f64, a: f64, dim: usize, p: f64) -> f64 {
    let n = dim as f64;
    let x = Dual {
        v: Dual { v: r, d: 1.0 },
        d: Dual { v: 1.0, d: 0.0 },
    };
    let u = profile(x, a, n, p);
    let (u0, u1, u2) = (u.v.v, u.d.v, u.d.d);
    let g = u1.abs().powf(p - 2.0);
    let lap = (p - 1.0) * g * u2 + (n - 1.0) / r * g * u1;
    let ps = n * p / (n - p);
    let rhs = u0.powf(ps - 1.0);
    (-lap - rhs).abs() / rhs
}
