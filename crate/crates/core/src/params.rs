//! Configuration, derived scheme constants and per-round quantities.
//!
//! Server indices are 1-based (`1..=N`) everywhere in the public API. Block
//! indices `j` and partition indices `i` are 0-based.

use std::collections::BTreeSet;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{next_prime, Field, FieldElement};

/// User-facing configuration, as read from the JSON config document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    /// Number of servers `N`.
    #[serde(rename = "N")]
    pub servers: usize,
    /// Number of submodels `K`.
    #[serde(rename = "K")]
    pub submodels: usize,
    /// Storage security threshold `X`.
    #[serde(rename = "X")]
    pub security: usize,
    /// Privacy threshold `T`.
    #[serde(rename = "T")]
    pub privacy: usize,
    /// Increment security threshold `X_delta`.
    #[serde(rename = "X_delta")]
    pub increment_security: usize,
    /// Storage partitioning level `K_c`.
    #[serde(rename = "K_c")]
    pub partitions: usize,
    /// Scale factor `xi`; `L = xi * K_c * lcm(1..=mu)`.
    #[serde(rename = "xi")]
    pub scale: usize,
    #[serde(rename = "q", default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<u64>,
    pub seed: u64,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm_upto(m: usize) -> usize {
    (1..=m).fold(1, |acc, i| acc / gcd(acc, i) * i)
}

impl RawConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    fn check_bounds(&self) -> Result<()> {
        let positive = [
            ("N", self.servers),
            ("K", self.submodels),
            ("X", self.security),
            ("T", self.privacy),
            ("K_c", self.partitions),
            ("xi", self.scale),
        ];
        for (name, value) in positive {
            if value < 1 {
                return Err(Error::ParamTooSmall {
                    name,
                    min: 1,
                    value,
                });
            }
        }
        let needed = self.increment_security + self.privacy;
        if self.security < needed {
            return Err(Error::InfeasibleWrite {
                x: self.security,
                needed,
            });
        }
        let needed = self.partitions + self.security + self.privacy;
        if self.servers < needed {
            return Err(Error::InfeasibleRead {
                n: self.servers,
                needed,
            });
        }
        Ok(())
    }

    /// `N - (K_c + X + T - 1)`.
    pub fn read_threshold(&self) -> usize {
        self.servers + 1 - (self.partitions + self.security + self.privacy)
    }

    /// `X - (X_delta + T - 1)`.
    pub fn write_threshold(&self) -> usize {
        self.security + 1 - (self.increment_security + self.privacy)
    }

    /// Smallest admissible submodel length: every valid `L` is a multiple of it.
    pub fn length_unit(&self) -> Result<usize> {
        self.check_bounds()?;
        let mu = self.read_threshold().max(self.write_threshold());
        Ok(self.partitions * lcm_upto(mu))
    }

    /// Returns a copy whose scale factor yields submodel length `len`.
    pub fn with_submodel_len(&self, len: usize) -> Result<Self> {
        let unit = self.length_unit()?;
        if len == 0 || !len.is_multiple_of(unit) {
            let lower = (len / unit) * unit;
            let nearest = if lower == 0 || len - lower > lower + unit - len {
                lower + unit
            } else {
                lower
            };
            return Err(Error::InvalidLength {
                requested: len,
                unit,
                nearest,
            });
        }
        Ok(RawConfig {
            scale: len / unit,
            ..self.clone()
        })
    }
}

/// Builds the `J x K_c` pole table `f_{j,i}` from the distinct constants `ftilde`.
///
/// A `period x K_c` base block is cut from a circulant of `ftilde` and tiled
/// vertically, so each column repeats with period `period` and each row holds
/// distinct entries.
pub fn pole_assignment(
    period: usize,
    partitions: usize,
    ftilde: &[FieldElement],
    blocks: usize,
) -> Vec<Vec<FieldElement>> {
    assert!(ftilde.len() >= period.max(partitions));
    let base: Vec<Vec<FieldElement>> = if period >= partitions {
        // First K_c columns of the mu x mu matrix whose column c is ftilde shifted down by c.
        (0..period)
            .map(|r| {
                (0..partitions)
                    .map(|c| ftilde[(r + period - c) % period])
                    .collect()
            })
            .collect()
    } else {
        // First mu rows of the K_c x K_c matrix whose row r is ftilde shifted right by r.
        (0..period)
            .map(|r| {
                (0..partitions)
                    .map(|c| ftilde[(c + partitions - r) % partitions])
                    .collect()
            })
            .collect()
    };
    (0..blocks).map(|j| base[j % period].clone()).collect()
}

/// Validated configuration together with every derived constant of the scheme.
#[derive(Debug, Clone)]
pub struct SystemParams {
    raw: RawConfig,
    field: Field,
    read_threshold: usize,
    write_threshold: usize,
    period: usize,
    blocks: usize,
    alphas: Vec<FieldElement>,
    ftilde: Vec<FieldElement>,
    poles: Vec<Vec<FieldElement>>,
}

impl SystemParams {
    /// Validates `raw` and derives thresholds, block count, evaluation points and poles.
    ///
    /// Evaluation points are fixed: `alpha_n = n` and `ftilde_u = N + u`, reduced
    /// mod `q`. These `N + max(mu, K_c)` consecutive integers are distinct residues
    /// whenever `q >= N + max(mu, K_c)`. Without an explicit `q`, the smallest such
    /// prime is used.
    pub fn derive(raw: &RawConfig) -> Result<Self> {
        raw.check_bounds()?;
        let read_threshold = raw.read_threshold();
        let write_threshold = raw.write_threshold();
        let period = read_threshold.max(write_threshold);
        let blocks = raw.scale * lcm_upto(period);
        let constants = period.max(raw.partitions);
        let needed = raw.servers + constants;
        let q = match raw.modulus {
            Some(q) if q < needed as u64 => return Err(Error::FieldTooSmall { q, needed }),
            Some(q) => q,
            None => next_prime(needed as u64),
        };
        let field = Field::new(q)?;
        let alphas: Vec<_> = (1..=raw.servers as u64).map(|n| field.reduce(n)).collect();
        let ftilde: Vec<_> = (1..=constants as u64)
            .map(|u| field.reduce(raw.servers as u64 + u))
            .collect();
        let poles = pole_assignment(period, raw.partitions, &ftilde, blocks);
        let mut raw = raw.clone();
        raw.modulus = Some(q);
        Ok(SystemParams {
            raw,
            field,
            read_threshold,
            write_threshold,
            period,
            blocks,
            alphas,
            ftilde,
            poles,
        })
    }

    pub fn raw(&self) -> &RawConfig {
        &self.raw
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn servers(&self) -> usize {
        self.raw.servers
    }

    pub fn submodels(&self) -> usize {
        self.raw.submodels
    }

    pub fn security(&self) -> usize {
        self.raw.security
    }

    pub fn privacy(&self) -> usize {
        self.raw.privacy
    }

    pub fn increment_security(&self) -> usize {
        self.raw.increment_security
    }

    pub fn partitions(&self) -> usize {
        self.raw.partitions
    }

    pub fn scale(&self) -> usize {
        self.raw.scale
    }

    pub fn seed(&self) -> u64 {
        self.raw.seed
    }

    pub fn read_threshold(&self) -> usize {
        self.read_threshold
    }

    pub fn write_threshold(&self) -> usize {
        self.write_threshold
    }

    /// `mu = max(S_r_thresh, S_w_thresh)`: the cycle length of poles and query noise.
    pub fn period(&self) -> usize {
        self.period
    }

    /// `J`, the number of storage blocks per server.
    pub fn blocks(&self) -> usize {
        self.blocks
    }

    /// `L = J * K_c`.
    pub fn submodel_len(&self) -> usize {
        self.blocks * self.raw.partitions
    }

    /// Number of unknowns in a storage decode, `K_c + X`.
    pub fn recovery_threshold(&self) -> usize {
        self.raw.partitions + self.raw.security
    }

    /// Vandermonde columns in a read decode: `X + T + K_c - 1`.
    pub fn read_interference_dim(&self) -> usize {
        self.raw.security + self.raw.privacy + self.raw.partitions - 1
    }

    /// `alpha_n` for the 1-based server index `n`.
    pub fn alpha(&self, n: usize) -> FieldElement {
        self.alphas[n - 1]
    }

    pub fn alphas(&self) -> &[FieldElement] {
        &self.alphas
    }

    pub fn ftilde(&self) -> &[FieldElement] {
        &self.ftilde
    }

    pub fn pole(&self, j: usize, i: usize) -> FieldElement {
        self.poles[j][i]
    }

    pub fn pole_row(&self, j: usize) -> &[FieldElement] {
        &self.poles[j]
    }

    pub fn poles(&self) -> &[Vec<FieldElement>] {
        &self.poles
    }

    /// Storage efficiency `eta = K_c / N`.
    pub fn storage_efficiency(&self) -> Ratio<u64> {
        Ratio::new(self.raw.partitions as u64, self.raw.servers as u64)
    }

    pub fn check_server(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.raw.servers {
            return Err(Error::UnknownServer {
                index: n,
                servers: self.raw.servers,
            });
        }
        Ok(())
    }

    pub fn check_submodel(&self, theta: usize) -> Result<()> {
        if theta == 0 || theta > self.raw.submodels {
            return Err(Error::UnknownSubmodel {
                index: theta,
                submodels: self.raw.submodels,
            });
        }
        Ok(())
    }
}

/// Quantities fixed by the dropout sets of one read/write cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundParams {
    pub t: usize,
    pub read_dropouts: BTreeSet<usize>,
    pub write_dropouts: BTreeSet<usize>,
    /// `R_r`: desired symbols recovered per answer window.
    pub read_batch: usize,
    /// `R_w`: increment symbols packed per codeword.
    pub write_batch: usize,
    /// `#_r = J / R_r`.
    pub read_windows: usize,
    /// `#_w = J / R_w`.
    pub write_windows: usize,
}

impl RoundParams {
    pub fn new(
        params: &SystemParams,
        t: usize,
        read_dropouts: impl IntoIterator<Item = usize>,
        write_dropouts: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let read_dropouts: BTreeSet<usize> = read_dropouts.into_iter().collect();
        let write_dropouts: BTreeSet<usize> = write_dropouts.into_iter().collect();
        for &n in read_dropouts.iter().chain(&write_dropouts) {
            params.check_server(n)?;
        }
        let (sr, sw) = (params.read_threshold(), params.write_threshold());
        if read_dropouts.len() >= sr {
            return Err(Error::TooManyReadDropouts {
                count: read_dropouts.len(),
                threshold: sr,
            });
        }
        if write_dropouts.len() >= sw {
            return Err(Error::TooManyWriteDropouts {
                count: write_dropouts.len(),
                threshold: sw,
            });
        }
        let read_batch = sr - read_dropouts.len();
        let write_batch = sw - write_dropouts.len();
        let j = params.blocks();
        debug_assert!(j.is_multiple_of(read_batch) && j.is_multiple_of(write_batch));
        Ok(RoundParams {
            t,
            read_dropouts,
            write_dropouts,
            read_batch,
            write_batch,
            read_windows: j / read_batch,
            write_windows: j / write_batch,
        })
    }

    /// Servers answering in the read phase, ascending.
    pub fn read_available(&self, servers: usize) -> Vec<usize> {
        (1..=servers)
            .filter(|n| !self.read_dropouts.contains(n))
            .collect()
    }

    /// Servers updated in the write phase, ascending.
    pub fn write_available(&self, servers: usize) -> Vec<usize> {
        (1..=servers)
            .filter(|n| !self.write_dropouts.contains(n))
            .collect()
    }

    /// Read window `floor(j / R_r)` containing block `j`.
    pub fn read_window_of(&self, j: usize) -> usize {
        j / self.read_batch
    }

    /// Write window `floor(j / R_w)` containing block `j`.
    pub fn write_window_of(&self, j: usize) -> usize {
        j / self.write_batch
    }

    pub fn read_window(&self, l: usize) -> std::ops::Range<usize> {
        l * self.read_batch..(l + 1) * self.read_batch
    }

    pub fn write_window(&self, l: usize) -> std::ops::Range<usize> {
        l * self.write_batch..(l + 1) * self.write_batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn raw(n: usize, k: usize, x: usize, t: usize, xd: usize, kc: usize) -> RawConfig {
        RawConfig {
            servers: n,
            submodels: k,
            security: x,
            privacy: t,
            increment_security: xd,
            partitions: kc,
            scale: 1,
            modulus: None,
            seed: 0,
        }
    }

    #[test]
    fn worked_example_thresholds() {
        let p = SystemParams::derive(&raw(8, 2, 4, 1, 1, 1)).unwrap();
        assert_eq!(
            (p.read_threshold(), p.write_threshold(), p.period()),
            (3, 3, 3)
        );
        assert_eq!(p.blocks(), 6);
        assert_eq!(p.field().modulus(), 11);
        let p3 = SystemParams::derive(&RawConfig {
            scale: 3,
            ..raw(8, 2, 4, 1, 1, 1)
        })
        .unwrap();
        assert_eq!(p3.blocks(), 18);
    }

    #[test]
    fn six_server_thresholds() {
        let p = SystemParams::derive(&raw(6, 50, 3, 1, 1, 1)).unwrap();
        assert_eq!((p.read_threshold(), p.write_threshold()), (2, 2));
    }

    #[test]
    fn write_threshold_one() {
        let p = SystemParams::derive(&raw(4, 1, 2, 1, 1, 1)).unwrap();
        assert_eq!(p.write_threshold(), 1);
        assert!(RoundParams::new(&p, 1, [], []).is_ok());
        assert!(matches!(
            RoundParams::new(&p, 1, [], [2]),
            Err(Error::TooManyWriteDropouts {
                count: 1,
                threshold: 1
            })
        ));
    }

    #[test]
    fn infeasible_configs() {
        assert_eq!(
            SystemParams::derive(&raw(4, 1, 1, 1, 1, 1)).unwrap_err(),
            Error::InfeasibleWrite { x: 1, needed: 2 }
        );
        assert_eq!(
            SystemParams::derive(&raw(4, 1, 3, 1, 1, 1)).unwrap_err(),
            Error::InfeasibleRead { n: 4, needed: 5 }
        );
        assert!(matches!(
            SystemParams::derive(&raw(4, 0, 2, 1, 1, 1)),
            Err(Error::ParamTooSmall { name: "K", .. })
        ));
        let small_q = RawConfig {
            modulus: Some(7),
            ..raw(8, 1, 4, 1, 1, 1)
        };
        assert_eq!(
            SystemParams::derive(&small_q).unwrap_err(),
            Error::FieldTooSmall { q: 7, needed: 11 }
        );
        let composite = RawConfig {
            modulus: Some(12),
            ..raw(8, 1, 4, 1, 1, 1)
        };
        assert_eq!(
            SystemParams::derive(&composite).unwrap_err(),
            Error::NotPrime(12)
        );
    }

    #[test]
    fn evaluation_constants_distinct_at_minimum_field() {
        // q = N + mu exactly: the last constant reduces to zero.
        let p = SystemParams::derive(&RawConfig {
            modulus: Some(11),
            ..raw(8, 1, 4, 1, 1, 1)
        })
        .unwrap();
        let mut all: Vec<_> = p.alphas().iter().chain(p.ftilde()).copied().collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 11);
    }

    #[test]
    fn pole_table_examples() {
        let p = SystemParams::derive(&raw(8, 1, 4, 1, 1, 1)).unwrap();
        let f = p.ftilde();
        let column: Vec<_> = (0..6).map(|j| p.pole(j, 0)).collect();
        assert_eq!(column, vec![f[0], f[1], f[2], f[0], f[1], f[2]]);

        let ft: Vec<_> = (10..12).map(FieldElement::from_test).collect();
        let table = pole_assignment(2, 2, &ft, 2);
        assert_eq!(table, vec![vec![ft[0], ft[1]], vec![ft[1], ft[0]]]);

        // mu = 2 < K_c = 3: first two rows of the right circulant.
        let ft: Vec<_> = (20..23).map(FieldElement::from_test).collect();
        let table = pole_assignment(2, 3, &ft, 4);
        assert_eq!(table[0], vec![ft[0], ft[1], ft[2]]);
        assert_eq!(table[1], vec![ft[2], ft[0], ft[1]]);
        assert_eq!(table[2], table[0]);
    }

    #[test]
    fn round_params_worked_example() {
        let p = SystemParams::derive(&raw(8, 1, 4, 1, 1, 1)).unwrap();
        let r1 = RoundParams::new(&p, 1, [3], [5, 6]).unwrap();
        assert_eq!(
            (
                r1.read_batch,
                r1.write_batch,
                r1.read_windows,
                r1.write_windows
            ),
            (2, 1, 3, 6)
        );
        let r2 = RoundParams::new(&p, 2, [1, 2], [7]).unwrap();
        assert_eq!((r2.read_batch, r2.write_batch), (1, 2));
        assert!(matches!(
            RoundParams::new(&p, 3, [1, 2, 3], []),
            Err(Error::TooManyReadDropouts {
                count: 3,
                threshold: 3
            })
        ));
        assert!(matches!(
            RoundParams::new(&p, 3, [9], []),
            Err(Error::UnknownServer { index: 9, .. })
        ));
        assert_eq!(r1.read_available(8), vec![1, 2, 4, 5, 6, 7, 8]);
        assert_eq!(r1.write_window(2), 2..3);
    }

    #[test]
    fn submodel_length_targets() {
        let r = raw(6, 50, 3, 1, 1, 1);
        assert_eq!(r.with_submodel_len(70_000).unwrap().scale, 35_000);
        let r8 = raw(8, 1, 4, 1, 1, 1);
        assert_eq!(
            r8.with_submodel_len(20).unwrap_err(),
            Error::InvalidLength {
                requested: 20,
                unit: 6,
                nearest: 18
            }
        );
        assert_eq!(
            r8.with_submodel_len(4).unwrap_err(),
            Error::InvalidLength {
                requested: 4,
                unit: 6,
                nearest: 6
            }
        );
    }

    #[test]
    fn config_json_keys() {
        let text = r#"{"N":8,"K":2,"X":4,"T":1,"X_delta":1,"K_c":1,"xi":1,"seed":7}"#;
        let cfg = RawConfig::from_json(text).unwrap();
        assert_eq!(cfg.servers, 8);
        assert_eq!(cfg.modulus, None);
        let with_q = r#"{"N":8,"K":2,"X":4,"T":1,"X_delta":1,"K_c":1,"xi":1,"q":13,"seed":7}"#;
        assert_eq!(RawConfig::from_json(with_q).unwrap().modulus, Some(13));
        let unknown = r#"{"N":8,"K":2,"X":4,"T":1,"X_delta":1,"K_c":1,"xi":1,"seed":7,"L":6}"#;
        assert!(matches!(
            RawConfig::from_json(unknown),
            Err(Error::Config(_))
        ));
        assert_eq!(RawConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    /// Every feasible configuration with N <= 12.
    pub(crate) fn sweep() -> Vec<RawConfig> {
        let mut out = Vec::new();
        for n in 3..=12 {
            for kc in 1..=n {
                for x in 1..=n {
                    for t in 1..=n {
                        for xd in 0..=x {
                            let r = raw(n, 1, x, t, xd, kc);
                            if r.check_bounds().is_ok() {
                                out.push(r);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn thresholds_partition_servers() {
        for r in sweep() {
            let p = SystemParams::derive(&r).unwrap();
            assert_eq!(
                r.partitions + (r.privacy - 1) + r.security + p.read_threshold(),
                r.servers
            );
            assert_eq!(
                r.increment_security + (r.privacy - 1) + p.write_threshold(),
                r.security
            );
            for m in 1..=p.period() {
                assert_eq!(p.blocks() % m, 0);
            }
        }
    }

    #[test]
    fn poles_satisfy_distinctness_over_sweep() {
        for r in sweep() {
            let p = SystemParams::derive(&r).unwrap();
            for row in p.poles() {
                let set: BTreeSet<_> = row.iter().collect();
                assert_eq!(set.len(), row.len(), "row distinctness for {r:?}");
            }
            for i in 0..r.partitions {
                for start in 0..p.blocks() {
                    let end = (start + p.period()).min(p.blocks());
                    let set: BTreeSet<_> = (start..end).map(|j| p.pole(j, i)).collect();
                    assert_eq!(set.len(), end - start, "window distinctness for {r:?}");
                }
            }
            for row in p.poles() {
                for f in row {
                    assert!(!p.alphas().contains(f));
                }
            }
        }
    }
}
