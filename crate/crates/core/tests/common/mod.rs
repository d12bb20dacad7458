//! Shared test oracles: the pattern-table fixture and an independent
//! creation-operator expansion of the BSM optics.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use spdc_cascade::cascade::PatternRow;
use spdc_cascade::detection::ClickPattern;
use spdc_cascade::fock::FockKet;

pub const FIXTURE: &str = "tests/fixtures/pattern_table.csv";

/// Fixture detector slots are output modes (2, 3, 4, 5); the library reads
/// its bank in the order (3, 2, 5, 4).
pub fn fixture_pattern_to_bank(p: &ClickPattern) -> ClickPattern {
    let s = &p.0;
    ClickPattern(vec![s[1], s[0], s[3], s[2]])
}

#[derive(Clone, Debug)]
pub struct FixtureRow {
    pub source1: FockKet,
    pub source2: FockKet,
    pub coeff: f64,
    pub output: FockKet,
    pub pattern: ClickPattern,
    pub heralded: FockKet,
}

#[derive(serde::Deserialize)]
struct RawRow {
    source1: String,
    source2: String,
    coeff: String,
    output: String,
    pattern: String,
    heralded: String,
}

/// `1`, `-1/2`, `1/sqrt(2)`, `-1/sqrt(2)`.
pub fn parse_coeff(s: &str) -> f64 {
    let (sign, body) = match s.trim().strip_prefix('-') {
        Some(b) => (-1.0, b),
        None => (1.0, s.trim()),
    };
    let value = match body.split_once('/') {
        None => body.parse::<f64>().unwrap(),
        Some((num, den)) => {
            let num: f64 = num.parse().unwrap();
            let den = match den.strip_prefix("sqrt(").and_then(|d| d.strip_suffix(')')) {
                Some(r) => r.parse::<f64>().unwrap().sqrt(),
                None => den.parse::<f64>().unwrap(),
            };
            num / den
        }
    };
    sign * value
}

pub fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(FIXTURE)
}

pub fn load_fixture() -> Vec<FixtureRow> {
    let mut rdr = csv::Reader::from_path(fixture_path()).unwrap();
    rdr.deserialize::<RawRow>()
        .map(|r| {
            let r = r.unwrap();
            FixtureRow {
                source1: r.source1.parse().unwrap(),
                source2: r.source2.parse().unwrap(),
                coeff: parse_coeff(&r.coeff),
                output: r.output.parse().unwrap(),
                pattern: r.pattern.parse().unwrap(),
                heralded: r.heralded.parse().unwrap(),
            }
        })
        .collect()
}

fn fact(n: u8) -> f64 {
    (1..=u32::from(n)).map(f64::from).product()
}

type Poly = BTreeMap<Vec<u8>, f64>;

/// Expands Π (a†_k)^{n_k} |0⟩ / √(Π n_k!) through the two balanced
/// beamsplitters a†_4 → (a†_4 + a†_2)/√2, a†_2 → (a†_4 − a†_2)/√2 and the
/// same for (5, 3), and returns normalized Fock amplitudes.
pub fn oracle_bsm(input: &[u8]) -> BTreeMap<FockKet, f64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let image = |k: usize| -> Vec<(usize, f64)> {
        match k {
            4 => vec![(4, h), (2, h)],
            2 => vec![(4, h), (2, -h)],
            5 => vec![(5, h), (3, h)],
            3 => vec![(5, h), (3, -h)],
            _ => vec![(k, 1.0)],
        }
    };
    let mut poly: Poly = BTreeMap::from([(vec![0u8; input.len()], 1.0)]);
    for (k, &n) in input.iter().enumerate() {
        for _ in 0..n {
            let mut next = Poly::new();
            for (mono, c) in &poly {
                for &(j, w) in &image(k) {
                    let mut m = mono.clone();
                    m[j] += 1;
                    *next.entry(m).or_default() += c * w;
                }
            }
            poly = next;
        }
    }
    let norm: f64 = input.iter().map(|&n| fact(n)).product::<f64>().sqrt();
    poly.into_iter()
        .filter(|(_, c)| c.abs() > 1e-14)
        .map(|(m, c)| {
            let amp = c / norm * m.iter().map(|&n| fact(n)).product::<f64>().sqrt();
            (FockKet::new(m), amp)
        })
        .filter(|(_, a)| a.abs() > 1e-14)
        .collect()
}

/// Coefficient map of each input pair.
pub fn group<'a, I>(rows: I) -> BTreeMap<(FockKet, FockKet), BTreeMap<FockKet, f64>>
where
    I: IntoIterator<Item = (&'a FockKet, &'a FockKet, &'a FockKet, f64)>,
{
    let mut out: BTreeMap<(FockKet, FockKet), BTreeMap<FockKet, f64>> = BTreeMap::new();
    for (s1, s2, o, c) in rows {
        out.entry((s1.clone(), s2.clone())).or_default().insert(o.clone(), c);
    }
    out
}

pub fn group_emitted(rows: &[PatternRow]) -> BTreeMap<(FockKet, FockKet), BTreeMap<FockKet, f64>> {
    group(rows.iter().map(|r| (&r.source1, &r.source2, &r.output, r.coeff)))
}

pub fn group_fixture(rows: &[FixtureRow]) -> BTreeMap<(FockKet, FockKet), BTreeMap<FockKet, f64>> {
    group(rows.iter().map(|r| (&r.source1, &r.source2, &r.output, r.coeff)))
}

/// True when `a` and `b` have the same kets and their coefficients agree
/// to `tol` up to a common sign and a per-detector-slot sign `g`, i.e.
/// `a = s · Π_i g_i^{n_i} · b` over the inner modes (2, 3, 4, 5).
pub fn equal_up_to_gauge(a: &BTreeMap<FockKet, f64>, b: &BTreeMap<FockKet, f64>, tol: f64) -> bool {
    if a.keys().ne(b.keys()) {
        return false;
    }
    (0..32u32).any(|g| {
        let s = if g & 16 == 0 { 1.0 } else { -1.0 };
        a.iter().all(|(k, &ca)| {
            let parity: u32 = (0..4)
                .filter(|i| g >> i & 1 == 1)
                .map(|i| k.get(2 + i))
                .sum();
            let sign = if parity % 2 == 0 { s } else { -s };
            (ca - sign * b[k]).abs() <= tol
        })
    })
}
