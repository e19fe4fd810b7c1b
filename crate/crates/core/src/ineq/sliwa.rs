//! The complete catalog of tight correlation inequalities for the
//! three-party, two-setting, two-outcome scenario: 46 relabeling classes
//! covering all 53856 facets of the local correlator polytope, numbered
//! S1..S46 per Sliwa's listing.
//!
//! Coefficients ship as a checksummed text asset (one block per class;
//! grammar documented in the asset header). Each class carries a k = 1
//! (local) bound, an exact integer, and a k = 2 (two-producible quantum)
//! bound. Expressions are stored in the negated right-hand-side
//! convention with constant terms dropped, so bounds apply directly to
//! the stored term sums.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::behavior::Scenario;

use super::{BoundLedger, IneqError, Inequality, Term};

const CATALOG_TEXT: &str = include_str!("../../assets/sliwa_3x2x2.txt");
const CONVENTION: &str = "negated-rhs-1";

#[derive(Debug, Error)]
pub enum SliwaError {
    #[error("catalog parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("catalog corrupt: block {name} hashes to {actual}, header says {expected}")]
    Checksum {
        name: String,
        expected: String,
        actual: String,
    },
    #[error(transparent)]
    Ineq(#[from] IneqError),
}

/// Parse and validate the embedded catalog: exactly the 46 classes, in
/// order S1..S46.
pub fn sliwa_catalog() -> Result<Vec<Inequality>, SliwaError> {
    let cat = parse_catalog(CATALOG_TEXT)?;
    for (i, ineq) in cat.iter().enumerate() {
        if ineq.name() != format!("S{}", i + 1) {
            return Err(SliwaError::Parse {
                line: 0,
                msg: format!("expected S{} at position {i}, found {}", i + 1, ineq.name()),
            });
        }
    }
    if cat.len() != 46 {
        return Err(SliwaError::Parse {
            line: 0,
            msg: format!("expected 46 classes, found {}", cat.len()),
        });
    }
    Ok(cat)
}

/// One inequality from the catalog by its S-number (1..=46).
pub fn sliwa(number: usize) -> Result<Inequality, SliwaError> {
    if !(1..=46).contains(&number) {
        return Err(SliwaError::Parse {
            line: 0,
            msg: format!("no class S{number}"),
        });
    }
    Ok(sliwa_catalog()?.swap_remove(number - 1))
}

struct BlockState {
    name: String,
    expected_sha: String,
    body: String,
    terms: Vec<Term>,
    bounds: Vec<(usize, f64)>,
    header_line: usize,
}

/// Parse catalog text in the asset grammar; every block is checksummed
/// and any unknown field is an error.
pub fn parse_catalog(text: &str) -> Result<Vec<Inequality>, SliwaError> {
    let scenario = Scenario::new(3, 2).map_err(IneqError::from)?;
    let mut out = Vec::new();
    let mut block: Option<BlockState> = None;

    let finish = |b: BlockState, out: &mut Vec<Inequality>| -> Result<(), SliwaError> {
        let digest = Sha256::digest(b.body.as_bytes());
        let actual: String = digest.iter().map(|x| format!("{x:02x}")).collect();
        if actual != b.expected_sha {
            return Err(SliwaError::Checksum {
                name: b.name,
                expected: b.expected_sha,
                actual,
            });
        }
        let ledger = BoundLedger::new(&b.bounds)?;
        out.push(Inequality::from_terms(scenario, b.name, b.terms, ledger)?);
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let ln = idx + 1;
        let line = raw.trim_end();
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |msg: String| SliwaError::Parse { line: ln, msg };
        if trimmed.contains(',') && trimmed.contains("3x2x2") && !trimmed.starts_with("bound") {
            // header: name, scenario, convention, sha256
            if let Some(b) = block.take() {
                finish(b, &mut out)?;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(err(format!("header has {} fields, expected 4", fields.len())));
            }
            if fields[1] != "3x2x2" {
                return Err(err(format!("unsupported scenario {}", fields[1])));
            }
            if fields[2] != CONVENTION {
                return Err(err(format!("unknown convention {}", fields[2])));
            }
            if fields[3].len() != 64 || !fields[3].bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(err("malformed sha256 field".into()));
            }
            block = Some(BlockState {
                name: fields[0].to_string(),
                expected_sha: fields[3].to_ascii_lowercase(),
                body: String::new(),
                terms: Vec::new(),
                bounds: Vec::new(),
                header_line: ln,
            });
            continue;
        }
        let b = block
            .as_mut()
            .ok_or_else(|| err("content before first header".into()))?;
        b.body.push_str(trimmed);
        b.body.push('\n');
        let mut tok = trimmed.split_whitespace();
        let first = tok.next().unwrap();
        if first == "bound" {
            let k: usize = tok
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| err("bad bound index".into()))?;
            let v: f64 = tok
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| err("bad bound value".into()))?;
            if tok.next().is_some() {
                return Err(err("trailing tokens on bound line".into()));
            }
            b.bounds.push((k, v));
        } else if let Ok(coeff) = first.parse::<f64>() {
            let factors_tok = tok
                .next()
                .ok_or_else(|| err("term line missing factors".into()))?;
            if tok.next().is_some() {
                return Err(err("trailing tokens on term line".into()));
            }
            let mut factors = Vec::new();
            for f in factors_tok.split(',') {
                let (p, s) = f
                    .split_once(':')
                    .ok_or_else(|| err(format!("malformed factor {f}")))?;
                let party: u8 = p.parse().map_err(|_| err(format!("bad party in {f}")))?;
                let setting: u8 = s.parse().map_err(|_| err(format!("bad setting in {f}")))?;
                factors.push((party, setting));
            }
            b.terms.push(Term::new(coeff, factors));
        } else {
            return Err(err(format!("unknown field {first}")));
        }
    }
    if let Some(b) = block.take() {
        let hl = b.header_line;
        finish(b, &mut out).map_err(|e| match e {
            SliwaError::Parse { line: 0, msg } => SliwaError::Parse { line: hl, msg },
            other => other,
        })?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::behavior::Behavior;
    use crate::ineq::{mabk, orbit::Orbit, s_n};
    use crate::lp::deterministic_vertices;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn catalog_loads_and_is_ordered() {
        let cat = sliwa_catalog().unwrap();
        assert_eq!(cat.len(), 46);
        for (i, ineq) in cat.iter().enumerate() {
            assert_eq!(ineq.name(), format!("S{}", i + 1));
            assert_eq!(ineq.scenario().parties(), 3);
        }
    }

    #[test]
    fn corrupting_any_block_fails_checksum() {
        let bad = CATALOG_TEXT.replacen("-1 2:0", "-2 2:0", 1);
        match parse_catalog(&bad) {
            Err(SliwaError::Checksum { name, .. }) => assert_eq!(name, "S1"),
            other => panic!("expected checksum failure, got {other:?}"),
        }
        let unknown = CATALOG_TEXT.replacen("bound 1 1", "limit 1 1", 1);
        assert!(matches!(
            parse_catalog(&unknown),
            Err(SliwaError::Parse { .. })
        ));
    }

    #[test]
    fn local_bounds_equal_deterministic_maxima() {
        let cat = sliwa_catalog().unwrap();
        let verts = deterministic_vertices(Scenario::new(3, 2).unwrap()).unwrap();
        for ineq in &cat {
            let coeffs = ineq.coeffs();
            let vmax = (0..verts.len())
                .map(|i| {
                    verts
                        .corr_column(i)
                        .iter()
                        .zip(coeffs)
                        .map(|(t, w)| t * w)
                        .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(
                vmax,
                ineq.bounds().local_bound(),
                "{} local bound",
                ineq.name()
            );
            assert_eq!(vmax, ineq.deterministic_max(), "{}", ineq.name());
        }
    }

    #[test]
    fn all_k2_bounds_at_least_local() {
        for ineq in sliwa_catalog().unwrap() {
            let k1 = ineq.bounds().local_bound();
            let k2 = ineq.bounds().bound(2).unwrap();
            assert!(k2 >= k1 - 1e-12, "{}: k2 {k2} < k1 {k1}", ineq.name());
        }
    }

    fn orbit_key(rows: &Orbit, scale: f64) -> BTreeSet<Vec<(u32, u64)>> {
        rows.iter_rows()
            .map(|row| {
                let mut r: Vec<(u32, u64)> = row
                    .iter()
                    .map(|&(c, w)| (c, (w * scale).to_bits()))
                    .collect();
                r.sort_unstable();
                r
            })
            .collect()
    }

    #[test]
    fn orbit_sizes_sum_to_facet_count() {
        let total: usize = sliwa_catalog()
            .unwrap()
            .iter()
            .map(|ineq| Orbit::new(ineq, true).len())
            .sum();
        assert_eq!(total, 53856);
    }

    #[test]
    fn classes_are_pairwise_inequivalent() {
        let cat = sliwa_catalog().unwrap();
        let keys: Vec<_> = cat
            .iter()
            .map(|ineq| orbit_key(&Orbit::new(ineq, true), 1.0))
            .collect();
        for i in 0..keys.len() {
            for j in i + 1..keys.len() {
                assert!(
                    keys[i].is_disjoint(&keys[j]),
                    "{} and {} share a relabeling",
                    cat[i].name(),
                    cat[j].name()
                );
            }
        }
    }

    #[test]
    fn s2_is_twice_the_three_party_parity_inequality() {
        let s2 = sliwa(2).unwrap();
        let m3 = mabk(3).unwrap();
        let o_s2 = Orbit::new(&s2, true);
        let o_m3 = Orbit::new(&m3, true);
        assert_eq!(orbit_key(&o_s2, 1.0), orbit_key(&o_m3, 2.0));
        assert_eq!(s2.bounds().local_bound(), 2.0 * m3.bounds().local_bound());
    }

    #[test]
    fn s7_is_four_times_the_uniform_full_correlator_family() {
        let s7 = sliwa(7).unwrap();
        let s3 = s_n(3).unwrap();
        let o_s7 = Orbit::new(&s7, true);
        let o_s3 = Orbit::new(&s3, true);
        assert_eq!(orbit_key(&o_s7, 1.0), orbit_key(&o_s3, 4.0));
    }

    fn random_local(sc: Scenario, rng: &mut ChaCha8Rng) -> Behavior {
        use rand::Rng;
        let verts = deterministic_vertices(sc).unwrap();
        let picks: Vec<usize> = (0..20).map(|_| rng.gen_range(0..verts.len())).collect();
        let mut weights: Vec<f64> = (0..20).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let mut table = vec![0.0; sc.table_len()];
        for (&i, &w) in picks.iter().zip(&weights) {
            for (t, v) in table.iter_mut().zip(verts.behavior(i).table()) {
                *t += w * v;
            }
        }
        Behavior::from_table(sc, table).unwrap()
    }

    #[test]
    fn evaluation_matches_orbit_row_on_random_behavior() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sc = Scenario::new(3, 2).unwrap();
        let p = random_local(sc, &mut rng);
        for num in [2usize, 10, 33, 46] {
            let ineq = sliwa(num).unwrap();
            let direct = ineq.evaluate(&p).unwrap();
            let coords = p.corr_coords();
            let via_coeffs: f64 = ineq
                .coeffs()
                .iter()
                .zip(&coords)
                .map(|(w, t)| w * t)
                .sum();
            assert!((direct - via_coeffs).abs() < 1e-12);
            assert!(direct <= ineq.bounds().local_bound() + 1e-9);
        }
    }
}
