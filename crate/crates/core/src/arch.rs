//! Surface architectures: symmetric binary interconnection matrices with unit diagonal.
//!
//! Strictly-lower entries `(i, j)`, `i > j`, are enumerated row-major by `i` then `j`,
//! so the flat index is `i (i - 1) / 2 + j`. Every vector of per-edge quantities in
//! the crate uses this order.
//!
//! Text format: optional `#` comment lines, a line `N_I <n>`, then `n` lines where line
//! `i` holds the `i + 1` bits `A_i0 .. A_ii`.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Flat index of the strictly-lower entry `(i, j)`.
pub fn lower_index(i: usize, j: usize) -> usize {
    debug_assert!(i > j);
    i * (i - 1) / 2 + j
}

/// Inverse of [`lower_index`].
pub fn lower_pair(k: usize) -> (usize, usize) {
    let mut i = 1;
    while lower_index(i + 1, 0) <= k {
        i += 1;
    }
    (i, k - lower_index(i, 0))
}

pub fn lower_len(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Architecture {
    n: usize,
    lower: Vec<bool>,
}

impl Architecture {
    pub fn from_lower(n: usize, lower: Vec<bool>) -> Result<Self> {
        if n == 0 || lower.len() != lower_len(n) {
            return Err(Error::Contract(format!(
                "expected {} lower-triangle bits for N_I = {n}, got {}",
                lower_len(n),
                lower.len()
            )));
        }
        Ok(Self { n, lower })
    }

    /// Validates a dense row-major 0/1 matrix.
    pub fn from_dense(n: usize, a: &[f64]) -> Result<Self> {
        if a.len() != n * n || n == 0 {
            return Err(Error::Contract("architecture matrix must be square".into()));
        }
        for i in 0..n {
            if a[i * n + i] != 1.0 {
                return Err(Error::Contract(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..n {
                let v = a[i * n + j];
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Contract("architecture entries must be 0 or 1".into()));
                }
                if v != a[j * n + i] {
                    return Err(Error::Contract("architecture must be symmetric".into()));
                }
            }
        }
        let lower = (0..lower_len(n))
            .map(|k| {
                let (i, j) = lower_pair(k);
                a[i * n + j] == 1.0
            })
            .collect();
        Ok(Self { n, lower })
    }

    pub fn single(n: usize) -> Self {
        Self {
            n,
            lower: vec![false; lower_len(n)],
        }
    }

    pub fn fully(n: usize) -> Self {
        Self {
            n,
            lower: vec![true; lower_len(n)],
        }
    }

    fn from_predicate(n: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let lower = (0..lower_len(n))
            .map(|k| {
                let (i, j) = lower_pair(k);
                f(i, j)
            })
            .collect();
        Self { n, lower }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> &[bool] {
        &self.lower
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => true,
            std::cmp::Ordering::Greater => self.lower[lower_index(i, j)],
            std::cmp::Ordering::Less => self.lower[lower_index(j, i)],
        }
    }

    pub fn circuit_complexity(&self) -> usize {
        self.n + self.lower.iter().filter(|&&b| b).count()
    }

    /// Row sums `D_ii = sum_j A_ij`.
    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n)
            .map(|i| (0..self.n).filter(|&j| self.get(i, j)).count())
            .collect()
    }

    pub fn degree_matrix(&self) -> Tensor {
        let d = self.degrees();
        Tensor::from_fn(self.n, self.n, |i, j| if i == j { d[i] as f64 } else { 0.0 })
    }

    pub fn as_tensor(&self) -> Tensor {
        Tensor::from_fn(self.n, self.n, |i, j| if self.get(i, j) { 1.0 } else { 0.0 })
    }

    /// Entrywise `self <= other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.n == other.n && self.lower.iter().zip(&other.lower).all(|(&a, &b)| !a || b)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# bdris architecture, circuit complexity {}\nN_I {}\n",
            self.circuit_complexity(),
            self.n
        );
        for i in 0..self.n {
            for j in 0..=i {
                s.push(if self.get(i, j) { '1' } else { '0' });
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Config(format!("architecture text: {m}"));
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| bad("empty input".into()))?;
        let n: usize = header
            .strip_prefix("N_I")
            .and_then(|v| v.trim().parse().ok())
            .filter(|&n| n > 0)
            .ok_or_else(|| bad(format!("bad header `{header}`")))?;
        let mut lower = Vec::with_capacity(lower_len(n));
        for i in 0..n {
            let row = lines
                .next()
                .ok_or_else(|| bad(format!("missing row {i}")))?;
            if row.len() != i + 1 || !row.bytes().all(|b| b == b'0' || b == b'1') {
                return Err(bad(format!("row {i} must be {} binary digits", i + 1)));
            }
            if !row.ends_with('1') {
                return Err(bad(format!("diagonal entry {i} is not 1")));
            }
            lower.extend(row.bytes().take(i).map(|b| b == b'1'));
        }
        if let Some(extra) = lines.next() {
            return Err(bad(format!("unexpected trailing line `{extra}`")));
        }
        Self::from_lower(n, lower)
    }
}

impl fmt::Debug for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Architecture(N_I={}, CC={})", self.n, self.circuit_complexity())
    }
}

/// Reference topologies.
///
/// `band:Q` connects `|i - j| <= Q`; `stem:Q` connects the first `Q` elements to every
/// element. Both have complexity `L (2 N_I - 2L + 1)` for `Q = 2L - 1`, and for `Q = 1`
/// they coincide with the tridiagonal and arrowhead trees.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineKind {
    Single,
    Tridiagonal,
    Arrowhead,
    Band(usize),
    Stem(usize),
    Fully,
}

impl BaselineKind {
    pub fn build(self, n: usize) -> Result<Architecture> {
        if n == 0 {
            return Err(Error::Config("N_I must be at least 1".into()));
        }
        if let Self::Band(q) | Self::Stem(q) = self {
            if q == 0 || q % 2 == 0 || q > n {
                return Err(Error::Config(format!(
                    "width Q = {q} must be odd and within 1..={n}"
                )));
            }
        }
        Ok(match self {
            Self::Single => Architecture::single(n),
            Self::Fully => Architecture::fully(n),
            Self::Tridiagonal => Architecture::from_predicate(n, |i, j| i - j <= 1),
            Self::Arrowhead => Architecture::from_predicate(n, |_, j| j == 0),
            Self::Band(q) => Architecture::from_predicate(n, |i, j| i - j <= q),
            Self::Stem(q) => Architecture::from_predicate(n, |_, j| j < q),
        })
    }
}

pub fn make_baseline(kind: BaselineKind, n: usize) -> Result<Architecture> {
    kind.build(n)
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Single => f.write_str("single"),
            Self::Tridiagonal => f.write_str("tridiagonal"),
            Self::Arrowhead => f.write_str("arrowhead"),
            Self::Band(q) => write!(f, "band:{q}"),
            Self::Stem(q) => write!(f, "stem:{q}"),
            Self::Fully => f.write_str("fully"),
        }
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let width = |w: &str| {
            w.parse::<usize>()
                .map_err(|_| Error::Config(format!("bad width in `{s}`")))
        };
        Ok(match s {
            "single" => Self::Single,
            "tridiagonal" => Self::Tridiagonal,
            "arrowhead" => Self::Arrowhead,
            "fully" => Self::Fully,
            _ => match s.split_once(':') {
                Some(("band", w)) => Self::Band(width(w)?),
                Some(("stem", w)) => Self::Stem(width(w)?),
                _ => return Err(Error::Config(format!("unknown architecture `{s}`"))),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cc(kind: BaselineKind, n: usize) -> usize {
        kind.build(n).unwrap().circuit_complexity()
    }

    #[test]
    fn complexity_anchors() {
        assert_eq!(cc(BaselineKind::Single, 64), 64);
        assert_eq!(cc(BaselineKind::Tridiagonal, 64), 127);
        assert_eq!(cc(BaselineKind::Arrowhead, 64), 127);
        assert_eq!(cc(BaselineKind::Band(15), 64), 904);
        assert_eq!(cc(BaselineKind::Stem(15), 64), 904);
        assert_eq!(cc(BaselineKind::Fully, 64), 2080);
        assert_eq!(cc(BaselineKind::Arrowhead, 4), 7);
    }

    #[test]
    fn degrees_by_hand() {
        assert_eq!(Architecture::single(3).degree_matrix(), Tensor::eye(3));
        assert_eq!(
            Architecture::fully(3).degree_matrix(),
            Tensor::eye(3).map(|v| 3.0 * v)
        );
        assert_eq!(
            BaselineKind::Tridiagonal.build(4).unwrap().degrees(),
            vec![2, 3, 3, 2]
        );
    }

    #[test]
    fn width_one_is_a_tree() {
        for n in 1..10 {
            assert_eq!(
                BaselineKind::Band(1).build(n).unwrap(),
                BaselineKind::Tridiagonal.build(n).unwrap()
            );
            assert_eq!(
                BaselineKind::Stem(1).build(n).unwrap(),
                BaselineKind::Arrowhead.build(n).unwrap()
            );
        }
    }

    #[test]
    fn invalid_widths_are_config_errors() {
        for kind in [BaselineKind::Band(2), BaselineKind::Stem(0), BaselineKind::Band(9)] {
            assert!(matches!(kind.build(8), Err(Error::Config(_))));
        }
    }

    #[test]
    fn exhaustive_lower_index_round_trip() {
        let mut k = 0;
        for i in 1..8 {
            for j in 0..i {
                assert_eq!(lower_index(i, j), k);
                assert_eq!(lower_pair(k), (i, j));
                k += 1;
            }
        }
        assert_eq!(k, lower_len(8));
    }

    #[test]
    fn text_parse_errors() {
        assert!(Architecture::from_text("N_I 2\n1\n10\n").is_err());
        assert!(Architecture::from_text("N_I 2\n1\n").is_err());
        assert!(Architecture::from_text("N_I 1\n1\n1\n").is_err());
        assert!(Architecture::from_text("n 1\n1\n").is_err());
    }

    #[test]
    fn kind_round_trips_through_strings() {
        for k in [
            BaselineKind::Single,
            BaselineKind::Tridiagonal,
            BaselineKind::Arrowhead,
            BaselineKind::Band(3),
            BaselineKind::Stem(5),
            BaselineKind::Fully,
        ] {
            assert_eq!(k.to_string().parse::<BaselineKind>().unwrap(), k);
        }
        assert!("ring".parse::<BaselineKind>().is_err());
    }

    fn arch_strategy() -> impl Strategy<Value = Architecture> {
        (1usize..12).prop_flat_map(|n| {
            proptest::collection::vec(any::<bool>(), lower_len(n))
                .prop_map(move |bits| Architecture::from_lower(n, bits).unwrap())
        })
    }

    proptest! {
        #[test]
        fn dense_and_text_round_trip(a in arch_strategy()) {
            let dense = a.as_tensor();
            let back = Architecture::from_dense(a.n(), dense.data()).unwrap();
            prop_assert_eq!(&back, &a);
            prop_assert_eq!(Architecture::from_text(&a.to_text()).unwrap(), a.clone());
            let d = a.degrees();
            for i in 0..a.n() {
                prop_assert_eq!(d[i] as f64, (0..a.n()).map(|j| dense.get(i, j)).sum::<f64>());
                prop_assert_eq!(dense.get(i, i), 1.0);
            }
            let lower: usize = (0..a.n()).map(|i| (0..=i).filter(|&j| a.get(i, j)).count()).sum();
            prop_assert_eq!(a.circuit_complexity(), lower);
        }

        #[test]
        fn baseline_invariants(n in 1usize..40, half in 0usize..20) {
            let q = (2 * half + 1).min(if n % 2 == 1 { n } else { n - 1 });
            for kind in [
                BaselineKind::Single, BaselineKind::Tridiagonal, BaselineKind::Arrowhead,
                BaselineKind::Band(q), BaselineKind::Stem(q), BaselineKind::Fully,
            ] {
                let a = kind.build(n).unwrap();
                let t = a.as_tensor();
                prop_assert!(Architecture::from_dense(n, t.data()).is_ok());
            }
            prop_assert_eq!(cc(BaselineKind::Fully, n) - cc(BaselineKind::Single, n), n * (n - 1) / 2);
            let l = (q + 1) / 2;
            if 2 * l <= n {
                prop_assert_eq!(cc(BaselineKind::Band(q), n), l * (2 * n - 2 * l + 1));
                prop_assert_eq!(cc(BaselineKind::Stem(q), n), l * (2 * n - 2 * l + 1));
            }
            if q >= 3 {
                let small = BaselineKind::Band(q - 2).build(n).unwrap();
                prop_assert!(small.is_subset_of(&BaselineKind::Band(q).build(n).unwrap()));
            }
        }
    }
}
