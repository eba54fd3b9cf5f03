//! Scalar operations shared by plain evaluation and reverse-mode recording.
//!
//! The derivation maps, the penalty and the loss are written once against
//! [`Ops`]. [`Plain`] evaluates them on `f64`; [`Tape`] records every node
//! with its local derivatives so [`Tape::gradient`] can run the reverse pass.

pub trait Ops {
    type V: Copy + std::fmt::Debug;

    fn constant(&mut self, x: f64) -> Self::V;
    fn value(&self, a: Self::V) -> f64;
    /// `offset + sum(w * a)`.
    fn lin(&mut self, terms: &[(Self::V, f64)], offset: f64) -> Self::V;
    fn mul(&mut self, a: Self::V, b: Self::V) -> Self::V;
    /// `max(0, a)` with derivative 0 at the kink.
    fn relu(&mut self, a: Self::V) -> Self::V;
    /// `min(1, a)` with derivative 0 at the kink.
    fn min1(&mut self, a: Self::V) -> Self::V;
    /// `|a|` with derivative 0 at the kink.
    fn abs(&mut self, a: Self::V) -> Self::V;
    /// Forward `floor(a)`, backward identity.
    fn floor_ste(&mut self, a: Self::V) -> Self::V;
    /// `max(0, a)` applied to an iterate that is kept nonnegative: derivative
    /// 1 on `a >= 0` so a coordinate resting at zero can still move up.
    fn project(&mut self, a: Self::V) -> Self::V;

    fn add(&mut self, a: Self::V, b: Self::V) -> Self::V {
        self.lin(&[(a, 1.0), (b, 1.0)], 0.0)
    }

    fn sub(&mut self, a: Self::V, b: Self::V) -> Self::V {
        self.lin(&[(a, 1.0), (b, -1.0)], 0.0)
    }
}

/// Direct `f64` evaluation.
#[derive(Debug, Default, Clone, Copy)]
pub struct Plain;

impl Ops for Plain {
    type V = f64;

    fn constant(&mut self, x: f64) -> f64 {
        x
    }
    fn value(&self, a: f64) -> f64 {
        a
    }
    fn lin(&mut self, terms: &[(f64, f64)], offset: f64) -> f64 {
        terms.iter().fold(offset, |acc, &(a, w)| acc + w * a)
    }
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }
    fn relu(&mut self, a: f64) -> f64 {
        a.max(0.0)
    }
    fn min1(&mut self, a: f64) -> f64 {
        a.min(1.0)
    }
    fn abs(&mut self, a: f64) -> f64 {
        a.abs()
    }
    fn floor_ste(&mut self, a: f64) -> f64 {
        a.floor()
    }
    fn project(&mut self, a: f64) -> f64 {
        a.max(0.0)
    }
}

/// Value paired with whether it depends on the parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probed {
    pub x: f64,
    pub live: bool,
}

/// Plain evaluation that records how close any parameter-dependent argument
/// of a piecewise operation comes to its breakpoint. Finite differences are
/// only meaningful at points where `nearest` exceeds the step.
#[derive(Debug, Clone, Copy)]
pub struct KinkProbe {
    pub nearest: f64,
}

impl Default for KinkProbe {
    fn default() -> Self {
        Self { nearest: f64::INFINITY }
    }
}

impl KinkProbe {
    pub fn param(x: f64) -> Probed {
        Probed { x, live: true }
    }

    fn near(&mut self, a: Probed, kink: f64) {
        if a.live {
            self.nearest = self.nearest.min((a.x - kink).abs());
        }
    }
}

impl Ops for KinkProbe {
    type V = Probed;

    fn constant(&mut self, x: f64) -> Probed {
        Probed { x, live: false }
    }
    fn value(&self, a: Probed) -> f64 {
        a.x
    }
    fn lin(&mut self, terms: &[(Probed, f64)], offset: f64) -> Probed {
        Probed {
            x: terms.iter().fold(offset, |acc, &(a, w)| acc + w * a.x),
            live: terms.iter().any(|(a, w)| a.live && *w != 0.0),
        }
    }
    fn mul(&mut self, a: Probed, b: Probed) -> Probed {
        Probed {
            x: a.x * b.x,
            live: a.live || b.live,
        }
    }
    fn relu(&mut self, a: Probed) -> Probed {
        self.near(a, 0.0);
        Probed { x: a.x.max(0.0), ..a }
    }
    fn min1(&mut self, a: Probed) -> Probed {
        self.near(a, 1.0);
        Probed { x: a.x.min(1.0), ..a }
    }
    fn abs(&mut self, a: Probed) -> Probed {
        self.near(a, 0.0);
        Probed { x: a.x.abs(), ..a }
    }
    fn floor_ste(&mut self, a: Probed) -> Probed {
        // every integer is a breakpoint of floor
        self.near(a, a.x.round());
        Probed { x: a.x.floor(), ..a }
    }
    fn project(&mut self, a: Probed) -> Probed {
        self.near(a, 0.0);
        Probed { x: a.x.max(0.0), ..a }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(u32);

/// Reverse-mode tape. Parents are stored in compressed rows: node `k` owns
/// `parents[start[k]..start[k + 1]]` with matching local derivatives.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    values: Vec<f64>,
    start: Vec<u32>,
    parents: Vec<u32>,
    weights: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        let mut t = Self::default();
        t.start.push(0);
        t
    }

    /// Drop all nodes but keep allocations.
    pub fn clear(&mut self) {
        self.values.clear();
        self.start.clear();
        self.start.push(0);
        self.parents.clear();
        self.weights.clear();
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn var(&mut self, x: f64) -> Var {
        self.push(x, &[])
    }

    fn push(&mut self, value: f64, edges: &[(Var, f64)]) -> Var {
        for &(p, w) in edges {
            self.parents.push(p.0);
            self.weights.push(w);
        }
        self.values.push(value);
        self.start.push(self.parents.len() as u32);
        Var(self.values.len() as u32 - 1)
    }

    fn unary(&mut self, a: Var, value: f64, deriv: f64) -> Var {
        if deriv == 0.0 {
            self.push(value, &[])
        } else {
            self.push(value, &[(a, deriv)])
        }
    }

    /// Adjoints of every node with respect to `output`.
    pub fn gradient(&self, output: Var) -> Vec<f64> {
        let mut adj = vec![0.0; self.values.len()];
        adj[output.0 as usize] = 1.0;
        for k in (0..=output.0 as usize).rev() {
            let a = adj[k];
            if a == 0.0 {
                continue;
            }
            let (s, e) = (self.start[k] as usize, self.start[k + 1] as usize);
            for (&p, &w) in self.parents[s..e].iter().zip(&self.weights[s..e]) {
                adj[p as usize] += a * w;
            }
        }
        adj
    }

    pub fn index(v: Var) -> usize {
        v.0 as usize
    }
}

impl Ops for Tape {
    type V = Var;

    fn constant(&mut self, x: f64) -> Var {
        self.push(x, &[])
    }
    fn value(&self, a: Var) -> f64 {
        self.values[a.0 as usize]
    }
    fn lin(&mut self, terms: &[(Var, f64)], offset: f64) -> Var {
        let v = terms
            .iter()
            .fold(offset, |acc, &(a, w)| acc + w * self.values[a.0 as usize]);
        for &(p, w) in terms {
            if w != 0.0 {
                self.parents.push(p.0);
                self.weights.push(w);
            }
        }
        self.values.push(v);
        self.start.push(self.parents.len() as u32);
        Var(self.values.len() as u32 - 1)
    }
    fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.push(x * y, &[(a, y), (b, x)])
    }
    fn relu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.unary(a, x.max(0.0), if x > 0.0 { 1.0 } else { 0.0 })
    }
    fn min1(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.unary(a, x.min(1.0), if x < 1.0 { 1.0 } else { 0.0 })
    }
    fn abs(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let d = if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(a, x.abs(), d)
    }
    fn floor_ste(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.unary(a, x.floor(), 1.0)
    }
    fn project(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.unary(a, x.max(0.0), if x >= 0.0 { 1.0 } else { 0.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_rule_through_mixed_nodes() {
        let mut t = Tape::new();
        let x = t.var(0.7);
        let y = t.var(1.0);
        let a = t.lin(&[(x, 3.0), (y, -1.0)], 0.5); // 1.6
        let b = t.relu(a);
        let c = t.mul(b, x); // 1.12
        let d = t.min1(c); // clamped
        let e = t.add(d, b);
        let g = t.gradient(e);
        assert!((t.value(e) - 2.6).abs() < 1e-12);
        assert_eq!(g[Tape::index(x)], 3.0);
        assert_eq!(g[Tape::index(y)], -1.0);
    }

    #[test]
    fn kinks_take_the_inactive_branch() {
        let mut t = Tape::new();
        let z = t.var(0.0);
        let one = t.var(1.0);
        let r = t.relu(z);
        let m = t.min1(one);
        let a = t.abs(z);
        let s = t.lin(&[(r, 1.0), (m, 1.0), (a, 1.0)], 0.0);
        let g = t.gradient(s);
        assert_eq!(g[Tape::index(z)], 0.0);
        assert_eq!(g[Tape::index(one)], 0.0);
    }

    #[test]
    fn straight_through_floor() {
        let mut t = Tape::new();
        let v = t.var(3.7);
        let r = t.floor_ste(v);
        assert_eq!(t.value(r), 3.0);
        let sq = t.mul(r, r);
        let g = t.gradient(sq);
        assert_eq!(g[Tape::index(v)], 6.0);
        let mut t = Tape::new();
        let v = t.var(5.0);
        let r = t.floor_ste(v);
        assert_eq!(t.value(r), 5.0);
        assert_eq!(t.gradient(r)[Tape::index(v)], 1.0);
    }

    #[test]
    fn plain_and_tape_agree() {
        fn f<O: Ops>(o: &mut O, x: O::V) -> O::V {
            let a = o.lin(&[(x, 2.0)], -1.0);
            let b = o.relu(a);
            let c = o.floor_ste(b);
            let d = o.abs(c);
            o.sub(d, x)
        }
        for x in [-1.0, 0.3, 0.9, 2.5] {
            let mut t = Tape::new();
            let v = t.var(x);
            let out = f(&mut t, v);
            assert_eq!(t.value(out), f(&mut Plain, x));
        }
    }
}
