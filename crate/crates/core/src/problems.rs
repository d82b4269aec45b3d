//! Bit-string benchmark problems: OneMax, concatenated deceptive traps,
//! NK landscapes and HIFF.
//!
//! All problems are maximized. NK instances can be generated from a seed or
//! read from / written to a line-oriented text format:
//!
//! ```text
//! nk <n> <k>
//! <i> <j_1> ... <j_k> <v_0> ... <v_{2^(k+1)-1}>    (one line per variable)
//! optimum <value>                                   (optional)
//! ```
//!
//! Payoff `v_t` belongs to the pattern `t` formed by `(bit_i, bit_j1, ..., bit_jk)`
//! read as a big-endian integer. Lines starting with `#` are comments.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Largest problem size accepted by [`ProblemInstance::brute_force_optimum`].
pub const BRUTE_FORCE_LIMIT: usize = 24;

/// Generated NK instances get their optimum filled in up to this size.
pub const GENERATOR_OPTIMUM_LIMIT: usize = 20;

/// Neighborhoods larger than this would need payoff tables beyond 2^21 entries.
const MAX_NK_K: usize = 20;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("genotype has length {got}, problem expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid bit value {0} (bits must be 0 or 1)")]
    InvalidBit(u8),
    #[error("invalid problem parameters: {0}")]
    Parameter(String),
    #[error("corrupt instance: {0}")]
    InstanceCorrupt(String),
    #[error("exhaustive search refused: n = {n} exceeds the limit of {limit}")]
    Capacity { n: usize, limit: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fixed-length bit string, the unit of search.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Genotype(Vec<u8>);

impl Genotype {
    pub fn new(bits: Vec<u8>) -> Result<Self, ProblemError> {
        if let Some(&bad) = bits.iter().find(|&&b| b > 1) {
            return Err(ProblemError::InvalidBit(bad));
        }
        Ok(Genotype(bits))
    }

    pub(crate) fn from_bits_unchecked(bits: Vec<u8>) -> Self {
        debug_assert!(bits.iter().all(|&b| b <= 1));
        Genotype(bits)
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        Genotype(bits.iter().map(|&b| b as u8).collect())
    }

    pub fn zeros(n: usize) -> Self {
        Genotype(vec![0; n])
    }

    pub fn ones(n: usize) -> Self {
        Genotype(vec![1; n])
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Genotype((0..n).map(|_| rng.gen_range(0..=1u8)).collect())
    }

    /// Genotype whose big-endian binary value is `value` (bit 0 is the most significant).
    pub fn from_index(value: u64, n: usize) -> Self {
        Genotype((0..n).map(|i| ((value >> (n - 1 - i)) & 1) as u8).collect())
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bits(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    pub fn hamming_distance(&self, other: &Genotype) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    pub fn complement(&self) -> Genotype {
        Genotype(self.0.iter().map(|&b| 1 - b).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| b as f64).collect()
    }
}

impl fmt::Display for Genotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Genotype {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.bytes()
            .map(|c| match c {
                b'0' => Ok(0),
                b'1' => Ok(1),
                other => Err(ProblemError::InvalidBit(other)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Genotype)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    OneMax,
    ConcatTrap,
    NkLandscape,
    Hiff,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::OneMax => "onemax",
            ProblemKind::ConcatTrap => "trap",
            ProblemKind::NkLandscape => "nk",
            ProblemKind::Hiff => "hiff",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "onemax" => Ok(ProblemKind::OneMax),
            "trap" => Ok(ProblemKind::ConcatTrap),
            "nk" => Ok(ProblemKind::NkLandscape),
            "hiff" => Ok(ProblemKind::Hiff),
            other => Err(ProblemError::Parameter(format!(
                "unknown problem '{other}' (expected onemax, trap, nk or hiff)"
            ))),
        }
    }
}

/// Neighbor lists and payoff tables of an NK landscape.
#[derive(Clone, Debug, PartialEq)]
pub struct NkTables {
    pub neighbors: Vec<Vec<usize>>,
    pub payoffs: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
enum Landscape {
    OneMax,
    Trap { k: usize },
    Nk { k: usize, tables: NkTables },
    Hiff,
}

/// A benchmark definition together with its (optional) known optimum.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance {
    n: usize,
    landscape: Landscape,
    known_optimum: Option<f64>,
}

impl ProblemInstance {
    pub fn onemax(n: usize) -> Result<Self, ProblemError> {
        if n == 0 {
            return Err(ProblemError::Parameter("onemax needs n >= 1".into()));
        }
        Ok(ProblemInstance {
            n,
            landscape: Landscape::OneMax,
            known_optimum: Some(n as f64),
        })
    }

    pub fn concat_trap(n: usize, k: usize) -> Result<Self, ProblemError> {
        if k == 0 || n == 0 || !n.is_multiple_of(k) {
            return Err(ProblemError::Parameter(format!(
                "trap needs n divisible by k >= 1 (got n = {n}, k = {k})"
            )));
        }
        Ok(ProblemInstance {
            n,
            landscape: Landscape::Trap { k },
            known_optimum: Some(n as f64),
        })
    }

    pub fn hiff(n: usize) -> Result<Self, ProblemError> {
        if !n.is_power_of_two() {
            return Err(ProblemError::Parameter(format!(
                "hiff needs n to be a power of two (got {n})"
            )));
        }
        let levels = n.trailing_zeros() as f64 + 1.0;
        Ok(ProblemInstance {
            n,
            landscape: Landscape::Hiff,
            known_optimum: Some(n as f64 * levels),
        })
    }

    /// Builds an NK landscape after checking the structural invariants of the tables.
    pub fn nk(
        n: usize,
        k: usize,
        tables: NkTables,
        known_optimum: Option<f64>,
    ) -> Result<Self, ProblemError> {
        if k == 0 || k >= n || k > MAX_NK_K {
            return Err(ProblemError::Parameter(format!(
                "nk needs 1 <= k < n and k <= {MAX_NK_K} (got n = {n}, k = {k})"
            )));
        }
        if tables.neighbors.len() != n || tables.payoffs.len() != n {
            return Err(ProblemError::InstanceCorrupt(format!(
                "expected {n} neighbor lists and payoff tables, found {} and {}",
                tables.neighbors.len(),
                tables.payoffs.len()
            )));
        }
        let table_len = 1usize << (k + 1);
        for (i, (neighbors, payoffs)) in tables.neighbors.iter().zip(&tables.payoffs).enumerate() {
            if neighbors.len() != k {
                return Err(ProblemError::InstanceCorrupt(format!(
                    "variable {i} has {} neighbors, expected {k}",
                    neighbors.len()
                )));
            }
            for (pos, &j) in neighbors.iter().enumerate() {
                if j >= n || j == i || neighbors[..pos].contains(&j) {
                    return Err(ProblemError::InstanceCorrupt(format!(
                        "variable {i} has invalid neighbor {j}"
                    )));
                }
            }
            if payoffs.len() != table_len {
                return Err(ProblemError::InstanceCorrupt(format!(
                    "variable {i} has {} payoffs, expected {table_len}",
                    payoffs.len()
                )));
            }
            if payoffs.iter().any(|v| !v.is_finite()) {
                return Err(ProblemError::InstanceCorrupt(format!(
                    "variable {i} has a non-finite payoff"
                )));
            }
        }
        if let Some(opt) = known_optimum {
            if !opt.is_finite() {
                return Err(ProblemError::InstanceCorrupt("non-finite optimum".into()));
            }
        }
        Ok(ProblemInstance {
            n,
            landscape: Landscape::Nk { k, tables },
            known_optimum,
        })
    }

    pub fn kind(&self) -> ProblemKind {
        match self.landscape {
            Landscape::OneMax => ProblemKind::OneMax,
            Landscape::Trap { .. } => ProblemKind::ConcatTrap,
            Landscape::Nk { .. } => ProblemKind::NkLandscape,
            Landscape::Hiff => ProblemKind::Hiff,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Trap block size or NK neighborhood size.
    pub fn k(&self) -> Option<usize> {
        match self.landscape {
            Landscape::Trap { k } | Landscape::Nk { k, .. } => Some(k),
            _ => None,
        }
    }

    pub fn nk_tables(&self) -> Option<&NkTables> {
        match &self.landscape {
            Landscape::Nk { tables, .. } => Some(tables),
            _ => None,
        }
    }

    pub fn known_optimum(&self) -> Option<f64> {
        self.known_optimum
    }

    pub fn with_known_optimum(mut self, optimum: Option<f64>) -> Self {
        self.known_optimum = optimum;
        self
    }

    pub fn evaluate(&self, g: &Genotype) -> Result<f64, ProblemError> {
        if g.len() != self.n {
            return Err(ProblemError::LengthMismatch {
                expected: self.n,
                got: g.len(),
            });
        }
        self.evaluate_bits(g.bits())
    }

    fn evaluate_bits(&self, bits: &[u8]) -> Result<f64, ProblemError> {
        Ok(match &self.landscape {
            Landscape::OneMax => bits.iter().map(|&b| b as usize).sum::<usize>() as f64,
            Landscape::Trap { k } => bits
                .chunks(*k)
                .map(|block| {
                    let ones = block.iter().map(|&b| b as usize).sum::<usize>();
                    if ones == *k {
                        *k
                    } else {
                        *k - 1 - ones
                    }
                })
                .sum::<usize>() as f64,
            Landscape::Nk { k, tables } => {
                let mut total = 0.0;
                for (i, (neighbors, payoffs)) in
                    tables.neighbors.iter().zip(&tables.payoffs).enumerate()
                {
                    let mut pattern = bits[i] as usize;
                    for &j in neighbors {
                        let bit = *bits.get(j).ok_or_else(|| {
                            ProblemError::InstanceCorrupt(format!(
                                "neighbor index {j} out of range"
                            ))
                        })?;
                        pattern = (pattern << 1) | bit as usize;
                    }
                    debug_assert!(pattern < 1 << (k + 1));
                    total += *payoffs.get(pattern).ok_or_else(|| {
                        ProblemError::InstanceCorrupt(format!(
                            "payoff index {pattern} out of range"
                        ))
                    })?;
                }
                total
            }
            Landscape::Hiff => hiff(bits),
        })
    }

    /// Exhaustive search over all 2^n genotypes. Ties go to the lowest binary value.
    pub fn brute_force_optimum(&self) -> Result<(f64, Genotype), ProblemError> {
        if self.n > BRUTE_FORCE_LIMIT {
            return Err(ProblemError::Capacity {
                n: self.n,
                limit: BRUTE_FORCE_LIMIT,
            });
        }
        let n = self.n;
        let mut bits = vec![0u8; n];
        let mut best = (f64::NEG_INFINITY, 0u64);
        for value in 0..(1u64 << n) {
            for (i, b) in bits.iter_mut().enumerate() {
                *b = ((value >> (n - 1 - i)) & 1) as u8;
            }
            let f = self.evaluate_bits(&bits)?;
            if f > best.0 {
                best = (f, value);
            }
        }
        Ok((best.0, Genotype::from_index(best.1, n)))
    }

    pub fn is_optimal(&self, fitness: f64) -> bool {
        match self.known_optimum {
            Some(opt) => fitness >= opt - 1e-9 * opt.abs().max(1.0),
            None => false,
        }
    }
}

/// HIFF: every homogeneous block of size 2^l at level l contributes 2^l.
fn hiff(bits: &[u8]) -> f64 {
    let mut total = bits.len();
    // Some(v) marks a block whose bits all equal v.
    let mut level: Vec<Option<u8>> = bits.iter().map(|&b| Some(b)).collect();
    let mut size = 1;
    while level.len() > 1 {
        size *= 2;
        level = level
            .chunks(2)
            .map(|pair| match (pair[0], pair[1]) {
                (Some(a), Some(b)) if a == b => Some(a),
                _ => None,
            })
            .collect();
        total += size * level.iter().filter(|b| b.is_some()).count();
    }
    total as f64
}

/// Generates a random NK landscape: neighbors drawn without replacement,
/// payoffs i.i.d. uniform on [0, 1). The optimum is brute-forced for n <= 20.
pub fn generate_nk_instance(
    n: usize,
    k: usize,
    seed: u64,
) -> Result<ProblemInstance, ProblemError> {
    if k == 0 || k >= n || k > MAX_NK_K {
        return Err(ProblemError::Parameter(format!(
            "nk needs 1 <= k < n and k <= {MAX_NK_K} (got n = {n}, k = {k})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table_len = 1usize << (k + 1);
    let mut neighbors = Vec::with_capacity(n);
    let mut payoffs = Vec::with_capacity(n);
    for i in 0..n {
        let picks = index::sample(&mut rng, n - 1, k)
            .into_iter()
            .map(|j| if j >= i { j + 1 } else { j })
            .collect();
        neighbors.push(picks);
        payoffs.push((0..table_len).map(|_| rng.gen::<f64>()).collect());
    }
    let instance = ProblemInstance::nk(n, k, NkTables { neighbors, payoffs }, None)?;
    if n <= GENERATOR_OPTIMUM_LIMIT {
        let (optimum, _) = instance.brute_force_optimum()?;
        Ok(instance.with_known_optimum(Some(optimum)))
    } else {
        Ok(instance)
    }
}

fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes an NK instance in the text format described at module level.
pub fn format_nk_instance(instance: &ProblemInstance) -> Result<String, ProblemError> {
    let Landscape::Nk { k, tables } = &instance.landscape else {
        return Err(ProblemError::Parameter(format!(
            "{} instances have no NK file representation",
            instance.kind()
        )));
    };
    let mut out = format!("nk {} {}\n", instance.n, k);
    for (i, (neighbors, payoffs)) in tables.neighbors.iter().zip(&tables.payoffs).enumerate() {
        let mut fields = vec![i.to_string()];
        fields.extend(neighbors.iter().map(|j| j.to_string()));
        fields.extend(payoffs.iter().map(|&v| format_real(v)));
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    if let Some(opt) = instance.known_optimum {
        out.push_str(&format!("optimum {}\n", format_real(opt)));
    }
    Ok(out)
}

pub fn save_nk_instance(instance: &ProblemInstance, path: &Path) -> Result<(), ProblemError> {
    fs::write(path, format_nk_instance(instance)?)?;
    Ok(())
}

pub fn load_nk_instance(path: &Path) -> Result<ProblemInstance, ProblemError> {
    parse_nk_instance(&fs::read_to_string(path)?)
}

pub fn parse_nk_instance(text: &str) -> Result<ProblemInstance, ProblemError> {
    let parse_err = |line: usize, message: String| ProblemError::Parse { line, message };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (header_line, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing 'nk <n> <k>' header".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (n, k) = match fields.as_slice() {
        ["nk", n, k] => {
            let n: usize = n
                .parse()
                .map_err(|_| parse_err(header_line, format!("invalid n '{n}'")))?;
            let k: usize = k
                .parse()
                .map_err(|_| parse_err(header_line, format!("invalid k '{k}'")))?;
            (n, k)
        }
        _ => return Err(parse_err(header_line, "expected 'nk <n> <k>'".into())),
    };
    if k == 0 || k >= n || k > MAX_NK_K {
        return Err(parse_err(
            header_line,
            format!("nk needs 1 <= k < n and k <= {MAX_NK_K} (got n = {n}, k = {k})"),
        ));
    }
    let table_len = 1usize << (k + 1);
    let mut neighbors: Vec<Option<Vec<usize>>> = vec![None; n];
    let mut payoffs: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut optimum = None;
    let mut last_line = header_line;

    for (line_no, line) in lines {
        last_line = line_no;
        if optimum.is_some() {
            return Err(parse_err(line_no, "content after the optimum line".into()));
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] == "optimum" {
            if fields.len() != 2 {
                return Err(parse_err(line_no, "expected 'optimum <value>'".into()));
            }
            let v: f64 = fields[1]
                .parse()
                .map_err(|_| parse_err(line_no, format!("invalid optimum '{}'", fields[1])))?;
            optimum = Some(v);
            continue;
        }
        if fields.len() != 1 + k + table_len {
            return Err(parse_err(
                line_no,
                format!(
                    "expected {} fields, found {}",
                    1 + k + table_len,
                    fields.len()
                ),
            ));
        }
        let parse_index = |s: &str| -> Result<usize, ProblemError> {
            s.parse()
                .map_err(|_| parse_err(line_no, format!("invalid index '{s}'")))
        };
        let i = parse_index(fields[0])?;
        if i >= n {
            return Err(parse_err(
                line_no,
                format!("variable index {i} out of range"),
            ));
        }
        if neighbors[i].is_some() {
            return Err(parse_err(line_no, format!("variable {i} defined twice")));
        }
        let neigh = fields[1..=k]
            .iter()
            .map(|s| parse_index(s))
            .collect::<Result<Vec<_>, _>>()?;
        let table = fields[k + 1..]
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| parse_err(line_no, format!("invalid payoff '{s}'")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        neighbors[i] = Some(neigh);
        payoffs[i] = table;
    }

    let neighbors = neighbors
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| parse_err(last_line, format!("variable {i} missing"))))
        .collect::<Result<Vec<_>, _>>()?;
    ProblemInstance::nk(n, k, NkTables { neighbors, payoffs }, optimum)
}
