//! Concrete finitely generated groups with exact normal forms.
//!
//! Three families are supported: the integers with `S = {+1, -1}`, free
//! groups `F_k` with `S = {a_i, a_i^-1}`, and free products `Z_m * Z_n`
//! where `S` consists of every nontrivial power of the two generators, so
//! that each syllable of the alternating normal form is a single step of the
//! word metric.
//!
//! Words in `F_k` and `Z_m * Z_n` are stored as sequences of [`Letter`]s,
//! each of which is one element of `S`. Normal forms are reduced words
//! (free groups) or alternating syllable sequences (free products), and two
//! elements are equal iff their normal forms are identical.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};

/// Index of a generator in the family's symmetric generating set.
pub type Letter = u8;

/// Default cap on enumerated balls and regions.
pub const DEFAULT_CAP: usize = 2_000_000;

/// Names of free generators. `e` is reserved for the identity.
const FREE_NAMES: &[u8] = b"abcdfghijklmnopqrstuvwxyz";

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Element {
    Int(i64),
    Word(Vec<Letter>),
}

impl Element {
    pub fn letters(&self) -> &[Letter] {
        match self {
            Element::Word(w) => w,
            Element::Int(_) => &[],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Family {
    Integer,
    Free { rank: u8 },
    FreeProduct { m: u8, n: u8 },
}

/// Result of reducing `t^-1 s` for two generators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quotient {
    Identity,
    Letter(Letter),
    /// `t^-1 s` has length two: a path from `t` to `s` passes through `e`.
    ThroughIdentity,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Group {
    family: Family,
    /// Position of each letter in the configured generator ordering.
    rank_of: Vec<usize>,
}

impl Group {
    pub fn new(family: Family) -> Result<Self> {
        match family {
            Family::Integer => {}
            Family::Free { rank } => {
                if rank < 2 || rank as usize > FREE_NAMES.len() {
                    return Err(Error::InvalidArgument(format!(
                        "free group rank must be in 2..={}, got {rank}",
                        FREE_NAMES.len()
                    )));
                }
            }
            Family::FreeProduct { m, n } => {
                if m < 2 || n < 2 {
                    return Err(Error::InvalidArgument(format!(
                        "free product orders must be >= 2, got ({m}, {n})"
                    )));
                }
                if m as usize + n as usize > 200 {
                    return Err(Error::InvalidArgument("free product orders too large".into()));
                }
            }
        }
        let len = alphabet_len(family);
        Ok(Group {
            family,
            rank_of: (0..len).collect(),
        })
    }

    /// Same group with the generator ordering given as a permutation of the
    /// alphabet (first entry = smallest generator).
    pub fn with_order(mut self, order: &[Letter]) -> Result<Self> {
        let len = self.alphabet_len();
        let mut seen = vec![false; len];
        if order.len() != len {
            return Err(Error::InvalidArgument(format!(
                "generator ordering must list all {len} generators"
            )));
        }
        for (pos, &l) in order.iter().enumerate() {
            let l = l as usize;
            if l >= len || seen[l] {
                return Err(Error::InvalidArgument("generator ordering is not a permutation".into()));
            }
            seen[l] = true;
            self.rank_of[l] = pos;
        }
        Ok(self)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Number of letters (generators in `S`); zero for the integers.
    pub fn alphabet_len(&self) -> usize {
        alphabet_len(self.family)
    }

    pub fn is_amenable(&self) -> bool {
        match self.family {
            Family::Integer => true,
            Family::Free { .. } => false,
            Family::FreeProduct { m, n } => m == 2 && n == 2,
        }
    }

    /// True for the families whose Cayley graph is a tree of cliques.
    pub fn is_tree_like(&self) -> bool {
        !matches!(self.family, Family::Integer)
    }

    pub fn identity(&self) -> Element {
        match self.family {
            Family::Integer => Element::Int(0),
            _ => Element::Word(Vec::new()),
        }
    }

    /// Generators in the configured order.
    pub fn generators(&self) -> Vec<Element> {
        match self.family {
            Family::Integer => vec![Element::Int(1), Element::Int(-1)],
            _ => self.letters_in_order().into_iter().map(|l| Element::Word(vec![l])).collect(),
        }
    }

    /// Alphabet letters sorted by the configured generator ordering.
    pub fn letters_in_order(&self) -> Vec<Letter> {
        let mut ls: Vec<Letter> = (0..self.alphabet_len() as Letter).collect();
        ls.sort_by_key(|&l| self.rank_of[l as usize]);
        ls
    }

    pub fn letter_rank(&self, l: Letter) -> usize {
        self.rank_of[l as usize]
    }

    pub fn letter_inverse(&self, l: Letter) -> Letter {
        match self.family {
            Family::Free { .. } => l ^ 1,
            Family::FreeProduct { m, n } => {
                let (f, p) = self.factor_power(l);
                let order = if f == 0 { m } else { n };
                self.make_letter(f, order - p)
            }
            Family::Integer => unreachable!("integers have no letters"),
        }
    }

    /// Factor index of a letter: the axis `i` for `a_i^{±1}` in free groups,
    /// 0 or 1 in free products.
    pub fn letter_factor(&self, l: Letter) -> u8 {
        match self.family {
            Family::Free { .. } => l / 2,
            Family::FreeProduct { .. } => self.factor_power(l).0,
            Family::Integer => 0,
        }
    }

    fn factor_power(&self, l: Letter) -> (u8, u8) {
        let Family::FreeProduct { m, .. } = self.family else {
            unreachable!()
        };
        if l < m - 1 {
            (0, l + 1)
        } else {
            (1, l - (m - 1) + 1)
        }
    }

    fn make_letter(&self, factor: u8, power: u8) -> Letter {
        let Family::FreeProduct { m, .. } = self.family else {
            unreachable!()
        };
        if factor == 0 {
            power - 1
        } else {
            m - 1 + power - 1
        }
    }

    /// Whether `next` may directly follow `prev` in a normal form.
    pub fn can_follow(&self, prev: Letter, next: Letter) -> bool {
        match self.family {
            Family::Free { .. } => next != prev ^ 1,
            Family::FreeProduct { .. } => self.factor_power(prev).0 != self.factor_power(next).0,
            Family::Integer => true,
        }
    }

    /// Appends one letter to a normal-form word, reducing in place.
    pub fn push_letter(&self, word: &mut Vec<Letter>, l: Letter) {
        match self.family {
            Family::Free { .. } => {
                if word.last() == Some(&(l ^ 1)) {
                    word.pop();
                } else {
                    word.push(l);
                }
            }
            Family::FreeProduct { m, n } => {
                if let Some(&top) = word.last() {
                    let (ft, pt) = self.factor_power(top);
                    let (fl, pl) = self.factor_power(l);
                    if ft == fl {
                        let order = if ft == 0 { m } else { n };
                        let p = (pt as u16 + pl as u16) % order as u16;
                        word.pop();
                        if p != 0 {
                            word.push(self.make_letter(ft, p as u8));
                        }
                        return;
                    }
                }
                word.push(l);
            }
            Family::Integer => unreachable!(),
        }
    }

    pub fn check(&self, x: &Element) -> Result<()> {
        match (self.family, x) {
            (Family::Integer, Element::Int(_)) => Ok(()),
            (Family::Integer, Element::Word(_)) => Err(Error::FamilyMismatch(
                "word element used in the integer family".into(),
            )),
            (_, Element::Int(_)) => Err(Error::FamilyMismatch(
                "integer element used in a word family".into(),
            )),
            (_, Element::Word(w)) => {
                let len = self.alphabet_len();
                if w.iter().any(|&l| l as usize >= len) {
                    return Err(Error::FamilyMismatch("letter outside the alphabet".into()));
                }
                if w.windows(2).any(|p| !self.can_follow(p[0], p[1])) {
                    return Err(Error::FamilyMismatch("word is not in normal form".into()));
                }
                Ok(())
            }
        }
    }

    /// Normal form of the product `a b`.
    pub fn mul(&self, a: &Element, b: &Element) -> Result<Element> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.mul_unchecked(a, b))
    }

    /// Product of two elements already known to belong to this group.
    pub fn mul_unchecked(&self, a: &Element, b: &Element) -> Element {
        match (a, b) {
            (Element::Int(x), Element::Int(y)) => Element::Int(x + y),
            (Element::Word(x), Element::Word(y)) => {
                let mut w = Vec::with_capacity(x.len() + y.len());
                w.extend_from_slice(x);
                for &l in y {
                    self.push_letter(&mut w, l);
                }
                Element::Word(w)
            }
            _ => panic!("mul_unchecked on mixed families"),
        }
    }

    pub fn inv(&self, a: &Element) -> Element {
        match a {
            Element::Int(x) => Element::Int(-x),
            Element::Word(w) => Element::Word(w.iter().rev().map(|&l| self.letter_inverse(l)).collect()),
        }
    }

    /// Word length `|x|`.
    pub fn len(&self, x: &Element) -> usize {
        match x {
            Element::Int(v) => v.unsigned_abs() as usize,
            Element::Word(w) => w.len(),
        }
    }

    /// `d(x, y) = |x^-1 y|`.
    pub fn dist(&self, x: &Element, y: &Element) -> usize {
        match (x, y) {
            (Element::Int(a), Element::Int(b)) => (a - b).unsigned_abs() as usize,
            (Element::Word(a), Element::Word(b)) => {
                // x^-1 y reduces by cancelling the common prefix, then at most
                // one syllable merge in free products.
                let common = a.iter().zip(b).take_while(|(p, q)| p == q).count();
                let (ra, rb) = (&a[common..], &b[common..]);
                match (ra.first(), rb.first()) {
                    (Some(&p), Some(&q)) if !self.can_follow(self.letter_inverse(p), q) => {
                        // p^-1 q merges into one nontrivial syllable (p != q).
                        ra.len() + rb.len() - 1
                    }
                    _ => ra.len() + rb.len(),
                }
            }
            _ => panic!("dist on mixed families"),
        }
    }

    /// Gromov product `(x|y)_w = ½(d(x,w) + d(y,w) − d(x,y))`.
    pub fn gromov_product(&self, x: &Element, y: &Element, base: &Element) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        self.check(base)?;
        let twice = self.dist(x, base) + self.dist(y, base) - self.dist(x, y);
        Ok(twice as f64 / 2.0)
    }

    /// A geodesic spelling of `x` as a sequence of generators.
    pub fn geodesic_word(&self, x: &Element) -> Vec<Element> {
        match x {
            Element::Int(v) => {
                let step = if *v >= 0 { 1 } else { -1 };
                vec![Element::Int(step); v.unsigned_abs() as usize]
            }
            Element::Word(w) => w.iter().map(|&l| Element::Word(vec![l])).collect(),
        }
    }

    /// Points `γ(0..=len)` of the geodesic from `e` to `x`.
    pub fn geodesic_points(&self, x: &Element) -> Vec<Element> {
        match x {
            Element::Int(v) => {
                let step = if *v >= 0 { 1 } else { -1 };
                (0..=v.unsigned_abs() as i64).map(|i| Element::Int(step * i)).collect()
            }
            Element::Word(w) => (0..=w.len()).map(|i| Element::Word(w[..i].to_vec())).collect(),
        }
    }

    /// Closed-form cardinality of `ball(R)`, saturating.
    pub fn ball_size(&self, radius: usize) -> u128 {
        match self.family {
            Family::Integer => 2 * radius as u128 + 1,
            Family::Free { rank } => {
                let d = 2 * rank as u128;
                let mut total: u128 = 1;
                let mut sphere: u128 = d;
                for _ in 0..radius {
                    total = total.saturating_add(sphere);
                    sphere = sphere.saturating_mul(d - 1);
                }
                total
            }
            Family::FreeProduct { m, n } => {
                let (a, b) = ((m - 1) as u128, (n - 1) as u128);
                // words ending in factor 0 / factor 1
                let (mut end0, mut end1): (u128, u128) = (a, b);
                let mut total: u128 = 1;
                for _ in 0..radius {
                    total = total.saturating_add(end0).saturating_add(end1);
                    let next0 = end1.saturating_mul(a);
                    let next1 = end0.saturating_mul(b);
                    end0 = next0;
                    end1 = next1;
                }
                total
            }
        }
    }

    /// All elements with `|x| ≤ radius`, in shortlex order.
    pub fn ball(&self, radius: usize, cap: usize) -> Result<Vec<Element>> {
        let size = self.ball_size(radius);
        if size > cap as u128 {
            return Err(Error::CapExceeded {
                needed: size.min(usize::MAX as u128) as usize,
                cap,
            });
        }
        Ok(match self.family {
            Family::Integer => {
                let r = radius as i64;
                let mut v: Vec<Element> = vec![Element::Int(0)];
                for k in 1..=r {
                    v.push(Element::Int(k));
                    v.push(Element::Int(-k));
                }
                v
            }
            _ => {
                let letters = self.letters_in_order();
                let mut out = vec![Element::Word(Vec::new())];
                let mut frontier: Vec<Vec<Letter>> = vec![Vec::new()];
                for _ in 0..radius {
                    let mut next = Vec::new();
                    for w in &frontier {
                        for &l in &letters {
                            if w.last().is_none_or(|&p| self.can_follow(p, l)) {
                                let mut nw = w.clone();
                                nw.push(l);
                                next.push(nw);
                            }
                        }
                    }
                    out.extend(next.iter().cloned().map(Element::Word));
                    frontier = next;
                }
                out
            }
        })
    }

    /// Smallest δ for which the four-point condition
    /// `(x|y)_w ≥ min{(x|z)_w, (y|z)_w} − δ` holds on all quadruples of
    /// `ball(radius)`.
    pub fn estimate_delta(&self, radius: usize, cap: usize, exec: Exec) -> Result<f64> {
        let pts = self.ball(radius, cap)?;
        let n = pts.len();
        if n.saturating_mul(n) > cap.saturating_mul(8) {
            return Err(Error::CapExceeded { needed: n * n, cap });
        }
        let mut d = vec![0u32; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = self.dist(&pts[i], &pts[j]) as u32;
            }
        }
        // Work with twice the Gromov product to stay in integers.
        let worst = exec::map_range(exec, n, |w| {
            let g = |a: usize, b: usize| d[a * n + w] as i64 + d[b * n + w] as i64 - d[a * n + b] as i64;
            let mut worst = 0i64;
            for x in 0..n {
                for y in x..n {
                    let gxy = g(x, y);
                    for z in 0..n {
                        let v = g(x, z).min(g(y, z)) - gxy;
                        if v > worst {
                            worst = v;
                        }
                    }
                }
            }
            worst
        });
        Ok(worst.into_iter().max().unwrap_or(0) as f64 / 2.0)
    }

    /// Reduced form of `t^-1 s` for two letters.
    pub fn letter_quotient(&self, t: Letter, s: Letter) -> Quotient {
        if t == s {
            return Quotient::Identity;
        }
        let mut w = vec![self.letter_inverse(t)];
        self.push_letter(&mut w, s);
        match w.len() {
            0 => Quotient::Identity,
            1 => Quotient::Letter(w[0]),
            _ => Quotient::ThroughIdentity,
        }
    }

    /// Name of a single letter.
    pub fn letter_name(&self, l: Letter) -> String {
        match self.family {
            Family::Free { .. } => {
                let c = FREE_NAMES[(l / 2) as usize] as char;
                if l % 2 == 0 {
                    c.to_string()
                } else {
                    c.to_ascii_uppercase().to_string()
                }
            }
            Family::FreeProduct { .. } => {
                let (f, p) = self.factor_power(l);
                let c = if f == 0 { 's' } else { 't' };
                if p == 1 {
                    c.to_string()
                } else {
                    format!("{c}^{p}")
                }
            }
            Family::Integer => unreachable!(),
        }
    }

    pub fn format(&self, x: &Element) -> String {
        match x {
            Element::Int(v) => v.to_string(),
            Element::Word(w) if w.is_empty() => "e".into(),
            Element::Word(w) => w.iter().map(|&l| self.letter_name(l)).collect(),
        }
    }

    /// Parses a word. Free groups: `a`, `b`, ... with uppercase or `^-1` for
    /// inverses and `^k` for powers; free products: `s`, `t` with `^k`;
    /// integers: a decimal literal. `e` (or the empty string) is the identity.
    pub fn parse(&self, text: &str) -> Result<Element> {
        let text = text.trim();
        if let Family::Integer = self.family {
            if text == "e" || text.is_empty() {
                return Ok(Element::Int(0));
            }
            return text
                .parse::<i64>()
                .map(Element::Int)
                .map_err(|e| Error::Parse(format!("{text:?}: {e}")));
        }
        let bytes: Vec<char> = text.chars().filter(|c| !c.is_whitespace() && *c != '*').collect();
        let mut w: Vec<Letter> = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            i += 1;
            if c == 'e' {
                continue;
            }
            let mut exp: i64 = 1;
            if i < bytes.len() && bytes[i] == '^' {
                i += 1;
                let start = i;
                if i < bytes.len() && bytes[i] == '-' {
                    i += 1;
                }
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let s: String = bytes[start..i].iter().collect();
                exp = s.parse().map_err(|_| Error::Parse(format!("bad exponent in {text:?}")))?;
            } else if i < bytes.len() && bytes[i].is_ascii_digit() {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let s: String = bytes[start..i].iter().collect();
                exp = s.parse().map_err(|_| Error::Parse(format!("bad exponent in {text:?}")))?;
            }
            let base = self.parse_letter(c).ok_or_else(|| Error::Parse(format!("unknown generator {c:?} in {text:?}")))?;
            let (letter, count) = if exp < 0 {
                (self.letter_inverse(base), exp.unsigned_abs())
            } else {
                (base, exp as u64)
            };
            for _ in 0..count {
                self.push_letter(&mut w, letter);
            }
        }
        Ok(Element::Word(w))
    }

    fn parse_letter(&self, c: char) -> Option<Letter> {
        match self.family {
            Family::Free { rank } => {
                let lower = c.to_ascii_lowercase() as u8;
                let idx = FREE_NAMES.iter().position(|&b| b == lower)?;
                if idx >= rank as usize {
                    return None;
                }
                Some((2 * idx) as Letter + u8::from(c.is_ascii_uppercase()))
            }
            Family::FreeProduct { .. } => match c {
                's' => Some(self.make_letter(0, 1)),
                't' => Some(self.make_letter(1, 1)),
                _ => None,
            },
            Family::Integer => None,
        }
    }

    /// `r = max{|x| : x ∈ F}` together with δ (rounded up) as used for
    /// obstacle scales.
    pub fn step_radius(&self, support: &[Element], delta: f64) -> usize {
        let m = support.iter().map(|x| self.len(x)).max().unwrap_or(0);
        m.max(delta.ceil() as usize).max(1)
    }

    /// Checks that `∪_{n ≤ max_power} F^n ⊇ ball(radius)`.
    pub fn generates_ball(&self, support: &[Element], max_power: usize, radius: usize, cap: usize) -> Result<bool> {
        let target = self.ball(radius, cap)?;
        let mut reached: HashSet<Element> = HashSet::new();
        let mut frontier = vec![self.identity()];
        reached.insert(self.identity());
        for _ in 0..max_power {
            let mut next = Vec::new();
            for x in &frontier {
                for f in support {
                    let y = self.mul_unchecked(x, f);
                    if self.len(&y) <= radius + max_power && reached.insert(y.clone()) {
                        next.push(y);
                    }
                }
            }
            if reached.len() > cap {
                return Err(Error::CapExceeded { needed: reached.len(), cap });
            }
            frontier = next;
        }
        Ok(target.iter().all(|x| reached.contains(x)))
    }
}

fn alphabet_len(family: Family) -> usize {
    match family {
        Family::Integer => 0,
        Family::Free { rank } => 2 * rank as usize,
        Family::FreeProduct { m, n } => (m - 1) as usize + (n - 1) as usize,
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Integer => write!(f, "Z"),
            Family::Free { rank } => write!(f, "F{rank}"),
            Family::FreeProduct { m, n } => write!(f, "Z{m}*Z{n}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f2() -> Group {
        Group::new(Family::Free { rank: 2 }).unwrap()
    }

    #[test]
    fn free_reduction() {
        let g = f2();
        let x = g.mul(&g.parse("ab").unwrap(), &g.parse("Ba").unwrap()).unwrap();
        assert_eq!(g.format(&x), "aa");
        assert_eq!(x, g.parse("a^2").unwrap());
    }

    #[test]
    fn integer_addition() {
        let z = Group::new(Family::Integer).unwrap();
        assert_eq!(z.mul(&Element::Int(3), &Element::Int(-5)).unwrap(), Element::Int(-2));
    }

    #[test]
    fn mixed_family_is_rejected() {
        let g = f2();
        let err = g.mul(&Element::Int(1), &g.parse("a").unwrap()).unwrap_err();
        assert!(matches!(err, Error::FamilyMismatch(_)));
        let fp = Group::new(Family::FreeProduct { m: 2, n: 3 }).unwrap();
        assert!(fp.check(&Element::Word(vec![7])).is_err());
    }

    #[test]
    fn gromov_products() {
        let g = f2();
        let e = g.identity();
        let p = |s| g.parse(s).unwrap();
        assert_eq!(g.gromov_product(&p("ab"), &p("aB"), &e).unwrap(), 1.0);
        assert_eq!(g.gromov_product(&p("aaa"), &p("aab"), &e).unwrap(), 2.0);
        assert_eq!(g.gromov_product(&p("abA"), &p("abA"), &e).unwrap(), 3.0);
    }

    #[test]
    fn geodesic_words() {
        let g = f2();
        let w = g.geodesic_word(&g.parse("aB").unwrap());
        assert_eq!(w, vec![g.parse("a").unwrap(), g.parse("B").unwrap()]);
        let z = Group::new(Family::Integer).unwrap();
        assert_eq!(z.geodesic_word(&Element::Int(-3)), vec![Element::Int(-1); 3]);
        assert!(g.geodesic_word(&g.identity()).is_empty());
    }

    #[test]
    fn ball_sizes() {
        let g = f2();
        assert_eq!(g.ball(1, DEFAULT_CAP).unwrap().len(), 5);
        assert_eq!(g.ball(2, DEFAULT_CAP).unwrap().len(), 17);
        let z = Group::new(Family::Integer).unwrap();
        assert_eq!(z.ball(3, DEFAULT_CAP).unwrap().len(), 7);
        let fp = Group::new(Family::FreeProduct { m: 2, n: 3 }).unwrap();
        assert_eq!(fp.ball(4, DEFAULT_CAP).unwrap().len() as u128, fp.ball_size(4));
        assert_eq!(fp.ball_size(4), 22);
    }

    #[test]
    fn ball_cap_error_names_cap() {
        let g = f2();
        match g.ball(20, 1000) {
            Err(Error::CapExceeded { cap, .. }) => assert_eq!(cap, 1000),
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn free_product_syllables_merge() {
        let g = Group::new(Family::FreeProduct { m: 2, n: 3 }).unwrap();
        let x = g.parse("st").unwrap();
        let y = g.parse("t^2 s").unwrap();
        assert_eq!(g.mul(&x, &y).unwrap(), g.identity());
        let z = g.mul(&g.parse("st").unwrap(), &g.parse("t").unwrap()).unwrap();
        assert_eq!(g.format(&z), "st^2");
        assert_eq!(g.len(&z), 2);
        assert_eq!(g.dist(&g.parse("t").unwrap(), &g.parse("t^2").unwrap()), 1);
    }

    #[test]
    fn delta_of_trees_and_line() {
        let g = f2();
        assert_eq!(g.estimate_delta(2, DEFAULT_CAP, Exec::Parallel).unwrap(), 0.0);
        let z = Group::new(Family::Integer).unwrap();
        assert_eq!(z.estimate_delta(6, DEFAULT_CAP, Exec::Sequential).unwrap(), 0.0);
    }

    #[test]
    fn parse_format_roundtrip() {
        let g = f2();
        for s in ["e", "a", "AbbA", "bab"] {
            assert_eq!(g.format(&g.parse(s).unwrap()), s);
        }
        assert_eq!(g.parse("a^-1").unwrap(), g.parse("A").unwrap());
        assert!(g.parse("q").is_err());
    }

    #[test]
    fn generator_ordering() {
        let g = f2().with_order(&[2, 3, 0, 1]).unwrap();
        let gens: Vec<String> = g.generators().iter().map(|x| g.format(x)).collect();
        assert_eq!(gens, vec!["b", "B", "a", "A"]);
        assert!(f2().with_order(&[0, 0, 1, 2]).is_err());
    }

    #[test]
    fn support_generation() {
        let g = f2();
        let gens = g.generators();
        assert!(g.generates_ball(&gens, 3, 3, DEFAULT_CAP).unwrap());
        let only_a = vec![g.parse("a").unwrap(), g.parse("A").unwrap()];
        assert!(!g.generates_ball(&only_a, 3, 2, DEFAULT_CAP).unwrap());
    }
}
