//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] stores the Taylor coefficients `∂^α f(P) / α!` of a scalar
//! function at a center point for every multi-index `α` with `|α| ≤ order`.
//! Coefficients are laid out in graded order (all degree-0 terms, then all
//! degree-1 terms, ...), so truncating a jet to a lower order is a prefix cut.
//!
//! All arithmetic is exact truncated-Taylor arithmetic: the product of two
//! jets of order `K` equals the jet of the product truncated at `K`.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

/// Highest total derivative order the engine will build tables for.
pub const MAX_JET_ORDER: usize = 8;

/// Binomial coefficient `C(n, k)` for the small arguments used here.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Multi-index tables shared by every jet with the same variable count and
/// maximal order.
pub struct JetSpace {
    nvars: usize,
    max_order: usize,
    indices: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, usize>,
    /// `count[o]` = number of multi-indices of degree ≤ o.
    count: Vec<usize>,
    /// For each output slot, the pairs `(i, j)` with `α_i + α_j = α_out`.
    products: Vec<Vec<(usize, usize)>>,
    /// `raise[v][i]` = index of `α_i + e_v` when it fits in `max_order`.
    raise: Vec<Vec<Option<usize>>>,
    factorials: Vec<f64>,
}

impl fmt::Debug for JetSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JetSpace")
            .field("nvars", &self.nvars)
            .field("max_order", &self.max_order)
            .finish()
    }
}

impl JetSpace {
    fn build(nvars: usize, max_order: usize) -> Self {
        let mut indices: Vec<Vec<u8>> = Vec::new();
        let mut count = Vec::with_capacity(max_order + 1);
        for degree in 0..=max_order {
            let mut current = vec![0u8; nvars];
            push_degree(&mut indices, &mut current, 0, degree);
            count.push(indices.len());
        }
        let lookup: HashMap<Vec<u8>, usize> = indices
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();

        let mut products = vec![Vec::new(); indices.len()];
        for (i, a) in indices.iter().enumerate() {
            for (j, b) in indices.iter().enumerate() {
                let sum: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                if let Some(&k) = lookup.get(&sum) {
                    products[k].push((i, j));
                }
            }
        }

        let raise = (0..nvars)
            .map(|v| {
                indices
                    .iter()
                    .map(|a| {
                        let mut b = a.clone();
                        b[v] += 1;
                        lookup.get(&b).copied()
                    })
                    .collect()
            })
            .collect();

        let mut factorials = vec![1.0; 2 * MAX_JET_ORDER + 2];
        for n in 1..factorials.len() {
            factorials[n] = factorials[n - 1] * n as f64;
        }

        JetSpace {
            nvars,
            max_order,
            indices,
            lookup,
            count,
            products,
            raise,
            factorials,
        }
    }

    /// Shared table for `nvars` variables up to `max_order`.
    pub fn get(nvars: usize, max_order: usize) -> Arc<JetSpace> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<JetSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("jet space cache poisoned");
        guard
            .entry((nvars, max_order))
            .or_insert_with(|| Arc::new(JetSpace::build(nvars, max_order)))
            .clone()
    }

    /// Table covering every order the engine supports.
    pub fn for_vars(nvars: usize) -> Arc<JetSpace> {
        Self::get(nvars, MAX_JET_ORDER)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Number of coefficients of a jet of the given order.
    pub fn len(&self, order: usize) -> usize {
        self.count[order]
    }

    pub fn multi_index(&self, i: usize) -> &[u8] {
        &self.indices[i]
    }

    pub fn position(&self, alpha: &[u8]) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }

    fn factorial(&self, n: usize) -> f64 {
        self.factorials[n]
    }
}

fn push_degree(out: &mut Vec<Vec<u8>>, current: &mut Vec<u8>, var: usize, remaining: usize) {
    if var + 1 == current.len() {
        current[var] = remaining as u8;
        out.push(current.clone());
        current[var] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        current[var] = k as u8;
        push_degree(out, current, var + 1, remaining - k);
    }
    current[var] = 0;
}

/// Truncated Taylor expansion of a scalar function at a point.
#[derive(Clone)]
pub struct Jet {
    space: Arc<JetSpace>,
    order: usize,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("order", &self.order)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl Jet {
    pub fn constant(space: &Arc<JetSpace>, order: usize, value: f64) -> Self {
        assert!(order <= space.max_order, "jet order above table order");
        let mut coeffs = vec![0.0; space.len(order)];
        coeffs[0] = value;
        Jet {
            space: space.clone(),
            order,
            coeffs,
        }
    }

    pub fn zero(space: &Arc<JetSpace>, order: usize) -> Self {
        Self::constant(space, order, 0.0)
    }

    /// The coordinate function `x_var` expanded around `center`.
    pub fn variable(space: &Arc<JetSpace>, order: usize, var: usize, center: f64) -> Self {
        let mut jet = Self::constant(space, order, center);
        if order >= 1 {
            let mut alpha = vec![0u8; space.nvars];
            alpha[var] = 1;
            let pos = space.position(&alpha).expect("degree-1 index");
            jet.coeffs[pos] = 1.0;
        }
        jet
    }

    /// Coordinate jets for every variable at `center`.
    pub fn coordinates(center: &[f64], order: usize) -> Vec<Jet> {
        let space = JetSpace::for_vars(center.len());
        center
            .iter()
            .enumerate()
            .map(|(v, &c)| Jet::variable(&space, order, v, c))
            .collect()
    }

    /// Builds a jet from raw Taylor coefficients (graded layout).
    pub fn from_coeffs(space: &Arc<JetSpace>, order: usize, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), space.len(order));
        Jet {
            space: space.clone(),
            order,
            coeffs,
        }
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nvars(&self) -> usize {
        self.space.nvars
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Partial derivative `∂^α f(P)`; zero beyond the stored order.
    pub fn partial(&self, alpha: &[u8]) -> f64 {
        let degree: usize = alpha.iter().map(|&a| a as usize).sum();
        if degree > self.order {
            return 0.0;
        }
        let pos = self.space.position(alpha).expect("multi-index in table");
        let weight: f64 = alpha
            .iter()
            .map(|&a| self.space.factorial(a as usize))
            .product();
        self.coeffs[pos] * weight
    }

    /// Partial derivative written as a list of variables, e.g. `[1, 1, 0]`
    /// for `∂_y ∂_y ∂_x`.
    pub fn partial_vars(&self, vars: &[usize]) -> f64 {
        let mut alpha = vec![0u8; self.space.nvars];
        for &v in vars {
            alpha[v] += 1;
        }
        self.partial(&alpha)
    }

    pub fn truncate(&self, order: usize) -> Jet {
        let order = order.min(self.order);
        Jet {
            space: self.space.clone(),
            order,
            coeffs: self.coeffs[..self.space.len(order)].to_vec(),
        }
    }

    /// Exact partial derivative with respect to `var`; the order drops by one.
    pub fn derivative(&self, var: usize) -> Jet {
        assert!(self.order >= 1, "cannot differentiate an order-0 jet");
        let order = self.order - 1;
        let n = self.space.len(order);
        let raise = &self.space.raise[var];
        let coeffs = (0..n)
            .map(|i| {
                let up = raise[i].expect("raised index inside table");
                let a = self.space.indices[i][var] as f64 + 1.0;
                a * self.coeffs[up]
            })
            .collect();
        Jet {
            space: self.space.clone(),
            order,
            coeffs,
        }
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            space: self.space.clone(),
            order: self.order,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += s;
        out
    }

    fn check_space(&self, other: &Jet) {
        assert!(
            Arc::ptr_eq(&self.space, &other.space),
            "jets from different tables"
        );
    }

    fn zip_with(&self, other: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        self.check_space(other);
        let order = self.order.min(other.order);
        let n = self.space.len(order);
        let coeffs = (0..n).map(|i| f(self.coeffs[i], other.coeffs[i])).collect();
        Jet {
            space: self.space.clone(),
            order,
            coeffs,
        }
    }

    pub fn mul_jet(&self, other: &Jet) -> Jet {
        self.check_space(other);
        let order = self.order.min(other.order);
        let n = self.space.len(order);
        let mut coeffs = vec![0.0; n];
        for (k, slot) in coeffs.iter_mut().enumerate() {
            let mut acc = 0.0;
            for &(i, j) in &self.space.products[k] {
                acc += self.coeffs[i] * other.coeffs[j];
            }
            *slot = acc;
        }
        Jet {
            space: self.space.clone(),
            order,
            coeffs,
        }
    }

    /// `self += a * b`, truncated to this jet's order.
    pub fn add_product(&mut self, a: &Jet, b: &Jet) {
        self.add_product_scaled(1.0, a, b);
    }

    /// `self += s * a * b`, truncated to the lowest order involved.
    pub fn add_product_scaled(&mut self, s: f64, a: &Jet, b: &Jet) {
        self.check_space(a);
        self.check_space(b);
        let order = self.order.min(a.order).min(b.order);
        if order < self.order {
            self.coeffs.truncate(self.space.len(order));
            self.order = order;
        }
        for k in 0..self.coeffs.len() {
            let mut acc = 0.0;
            for &(i, j) in &self.space.products[k] {
                acc += a.coeffs[i] * b.coeffs[j];
            }
            self.coeffs[k] += s * acc;
        }
    }

    /// `self += s * a`.
    pub fn add_scaled(&mut self, s: f64, a: &Jet) {
        self.check_space(a);
        if a.order < self.order {
            self.coeffs.truncate(self.space.len(a.order));
            self.order = a.order;
        }
        for (c, x) in self.coeffs.iter_mut().zip(&a.coeffs) {
            *c += s * x;
        }
    }

    /// Composes a univariate function with this jet, given the derivatives
    /// `f(c), f'(c), ..., f^(n)(c)` at the jet's value `c`.
    pub fn compose(&self, derivatives: &[f64]) -> Jet {
        assert!(
            derivatives.len() > self.order,
            "need {} derivatives for an order-{} jet",
            self.order + 1,
            self.order
        );
        let mut h = self.clone();
        h.coeffs[0] = 0.0;
        let top = self.order;
        let mut acc = Jet::constant(
            &self.space,
            self.order,
            derivatives[top] / self.space.factorial(top),
        );
        for n in (0..top).rev() {
            acc = acc.mul_jet(&h).add_scalar(derivatives[n] / self.space.factorial(n));
        }
        acc
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        self.compose(&vec![e; self.order + 1])
    }

    pub fn ln(&self) -> Jet {
        let c = self.value();
        let mut d = vec![c.ln()];
        let mut fact = 1.0;
        for n in 1..=self.order {
            if n > 1 {
                fact *= (n - 1) as f64;
            }
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            d.push(sign * fact / c.powi(n as i32));
        }
        self.compose(&d)
    }

    pub fn powf(&self, p: f64) -> Jet {
        let c = self.value();
        let mut d = Vec::with_capacity(self.order + 1);
        let mut falling = 1.0;
        for n in 0..=self.order {
            d.push(falling * c.powf(p - n as f64));
            falling *= p - n as f64;
        }
        self.compose(&d)
    }

    pub fn powi(&self, n: u32) -> Jet {
        let mut acc = Jet::constant(&self.space, self.order, 1.0);
        for _ in 0..n {
            acc = acc.mul_jet(self);
        }
        acc
    }

    pub fn recip(&self) -> Jet {
        self.powf(-1.0)
    }

    pub fn sqrt(&self) -> Jet {
        self.powf(0.5)
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let d: Vec<f64> = (0..=self.order).map(|n| cycle[n % 4]).collect();
        self.compose(&d)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [c, -s, -c, s];
        let d: Vec<f64> = (0..=self.order).map(|n| cycle[n % 4]).collect();
        self.compose(&d)
    }

    pub fn div_jet(&self, other: &Jet) -> Jet {
        self.mul_jet(&other.recip())
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.mul_jet(rhs)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Add<f64> for &Jet {
    type Output = Jet;
    fn add(self, rhs: f64) -> Jet {
        self.add_scalar(rhs)
    }
}

impl Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $method:ident) => {
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                (&self).$method(&rhs)
            }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                (&self).$method(rhs)
            }
        }
        impl $tr<Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                self.$method(&rhs)
            }
        }
        impl $tr<f64> for Jet {
            type Output = Jet;
            fn $method(self, rhs: f64) -> Jet {
                (&self).$method(rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Mul, mul);

impl Sub<Jet> for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        (&self).sub(&rhs)
    }
}

impl Sub<&Jet> for Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        (&self).sub(rhs)
    }
}

impl Sub<f64> for &Jet {
    type Output = Jet;
    fn sub(self, rhs: f64) -> Jet {
        self.add_scalar(-rhs)
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(self, rhs: f64) -> Jet {
        self.add_scalar(-rhs)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

/// Univariate Taylor data `f(c), f'(c), ..., f^(n)(c)` for a scalar function
/// of one variable, evaluated at a point.
pub trait UnivariateTaylor: Send + Sync {
    fn derivatives(&self, x: f64, n: usize) -> Vec<f64>;

    /// Composes the function with a jet (typically a coordinate jet).
    fn apply(&self, arg: &Jet) -> Jet {
        arg.compose(&self.derivatives(arg.value(), arg.order()))
    }
}

impl<F> UnivariateTaylor for F
where
    F: Fn(&Jet) -> Jet + Send + Sync,
{
    fn derivatives(&self, x: f64, n: usize) -> Vec<f64> {
        let space = JetSpace::for_vars(1);
        let t = Jet::variable(&space, n, 0, x);
        let out = self(&t);
        (0..=n).map(|k| out.partial(&[k as u8])).collect()
    }

    fn apply(&self, arg: &Jet) -> Jet {
        self(arg)
    }
}
