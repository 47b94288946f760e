//! The tilted kernel `p(v,w) = e^{λΔx}/Z` and its λ-derivatives, tabulated
//! over the eight incident-edge patterns.

use crate::scalar::{normalizer, normalizer_d1, normalizer_d2, Scalar};

/// A move of the lazy walk; the discriminant is the 2-bit storage code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Move {
    Right = 0,
    Left = 1,
    Vertical = 2,
    Stay = 3,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Right, Move::Left, Move::Vertical, Move::Stay];

    #[inline]
    pub fn from_code(code: u8) -> Move {
        Move::ALL[(code & 3) as usize]
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn dx(self) -> i64 {
        match self {
            Move::Right => 1,
            Move::Left => -1,
            _ => 0,
        }
    }

    /// Bit of the incident-edge pattern that must be set for this move.
    fn edge_bit(self) -> Option<u8> {
        match self {
            Move::Right => Some(1),
            Move::Left => Some(2),
            Move::Vertical => Some(4),
            Move::Stay => None,
        }
    }

    /// Whether the move is possible from a vertex with `pattern`.
    pub fn allowed(self, pattern: u8) -> bool {
        match self.edge_bit() {
            Some(b) => pattern & b != 0,
            None => pattern & 7 != 7,
        }
    }
}

/// Probability, log-probability, first log-derivative `ν = p′/p` and
/// `p″/p` of one move at bias λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveTerms<T> {
    pub prob: T,
    pub log_prob: T,
    pub nu: T,
    pub second: T,
}

/// Closed-form terms of `mv` from a vertex with incident `pattern`, or
/// `None` if the move has probability zero.
pub fn move_terms<T: Scalar>(lambda: T, pattern: u8, mv: Move) -> Option<MoveTerms<T>> {
    if !mv.allowed(pattern) {
        return None;
    }
    let z = normalizer(lambda);
    let zr1 = normalizer_d1(lambda) / z;
    let zr2 = normalizer_d2(lambda) / z;
    let log_z_curv = zr2 - zr1 * zr1;
    match mv {
        Move::Stay => {
            let (mut n0, mut n1, mut n2) = (T::zero(), T::zero(), T::zero());
            for m in [Move::Right, Move::Left, Move::Vertical] {
                if !m.allowed(pattern) {
                    let dx = T::from_i64(m.dx()).unwrap();
                    let e = (lambda * dx).exp();
                    n0 = n0 + e;
                    n1 = n1 + dx * e;
                    n2 = n2 + dx * dx * e;
                }
            }
            let nr1 = n1 / n0;
            let nu = nr1 - zr1;
            let curv = (n2 / n0 - nr1 * nr1) - log_z_curv;
            let open: T = [Move::Right, Move::Left, Move::Vertical]
                .iter()
                .filter(|m| m.allowed(pattern))
                .fold(T::zero(), |acc, m| acc + (lambda * T::from_i64(m.dx()).unwrap()).exp() / z);
            Some(MoveTerms { prob: T::one() - open, log_prob: (n0 / z).ln(), nu, second: nu * nu + curv })
        }
        _ => {
            let dx = T::from_i64(mv.dx()).unwrap();
            let nu = dx - zr1;
            Some(MoveTerms {
                prob: (lambda * dx).exp() / z,
                log_prob: lambda * dx - z.ln(),
                nu,
                second: nu * nu - log_z_curv,
            })
        }
    }
}

/// All move terms at one bias, tabulated as `[pattern][move]`.
#[derive(Debug, Clone)]
pub struct KernelTable<T> {
    pub lambda: T,
    pub z: T,
    pub terms: [[Option<MoveTerms<T>>; 4]; 8],
}

impl<T: Scalar> KernelTable<T> {
    pub fn new(lambda: T) -> Self {
        let mut terms = [[None; 4]; 8];
        for (pattern, row) in terms.iter_mut().enumerate() {
            for mv in Move::ALL {
                row[mv as usize] = move_terms(lambda, pattern as u8, mv);
            }
        }
        Self { lambda, z: normalizer(lambda), terms }
    }

    #[inline]
    pub fn get(&self, pattern: u8, mv: Move) -> Option<&MoveTerms<T>> {
        self.terms[pattern as usize][mv as usize].as_ref()
    }

    /// `c_λ = max |ν|` over every supported (pattern, move).
    pub fn nu_bound(&self) -> T {
        self.terms
            .iter()
            .flatten()
            .flatten()
            .fold(T::zero(), |acc, t| acc.max(t.nu.abs()))
    }
}

/// The `f64` kernel used by the simulator, with integer thresholds for
/// sampling a move from a single `u64`.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub table: KernelTable<f64>,
    thresholds: [[u64; 3]; 8],
    top_code: [u8; 8],
}

impl Kernel {
    pub fn new(lambda: f64) -> Self {
        let table = KernelTable::new(lambda);
        let mut thresholds = [[0u64; 3]; 8];
        let mut top_code = [0u8; 8];
        let scale = 2f64.powi(64);
        for pattern in 0..8u8 {
            let mut acc = 0.0;
            for (k, mv) in [Move::Right, Move::Left, Move::Vertical].into_iter().enumerate() {
                if let Some(t) = table.get(pattern, mv) {
                    acc += t.prob;
                }
                thresholds[pattern as usize][k] = if acc >= 1.0 { u64::MAX } else { (acc * scale) as u64 };
            }
            top_code[pattern as usize] = Move::ALL
                .iter()
                .rev()
                .find(|m| m.allowed(pattern))
                .map_or(Move::Stay, |m| *m) as u8;
        }
        Self { table, thresholds, top_code }
    }

    pub fn lambda(&self) -> f64 {
        self.table.lambda
    }

    /// Maps a uniform `u64` to a move code from a vertex with `pattern`.
    /// Branch free: the code is the number of thresholds at or below `u`.
    #[inline(always)]
    pub fn pick_code(&self, pattern: u8, u: u64) -> u8 {
        let th = &self.thresholds[pattern as usize];
        let code = (u >= th[0]) as u8 + (u >= th[1]) as u8 + (u >= th[2]) as u8;
        code.min(self.top_code[pattern as usize])
    }

    #[inline]
    pub fn pick(&self, pattern: u8, u: u64) -> Move {
        Move::from_code(self.pick_code(pattern, u))
    }

    pub fn nu_bound(&self) -> f64 {
        self.table.nu_bound()
    }
}
