//! The frequency-distribution baseline: a lookup table of observed records.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::bits::{BitString, Dataset};
use crate::error::{Error, Result};
use crate::quantum::{positive_pure_partner, QuantumState, StateData};
use crate::rbm::RbmParams;
use crate::rng::{rng_for, stream};

/// Largest chain for dense probability tables.
pub const MAX_FD_DENSE_SITES: usize = 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdModel {
    pub n_sites: usize,
    /// Counts keyed by configuration index; every stored count is >= 1.
    pub table: BTreeMap<u64, u64>,
    pub n_samples: u64,
}

pub fn build_fd(d: &Dataset) -> Result<FdModel> {
    if d.is_empty() {
        return Err(Error::argument("cannot build a frequency table from an empty dataset"));
    }
    Ok(FdModel {
        n_sites: d.n_sites(),
        table: d.counts(),
        n_samples: d.len() as u64,
    })
}

impl FdModel {
    pub fn distinct(&self) -> usize {
        self.table.len()
    }

    pub fn probability(&self, s: &BitString) -> f64 {
        self.table.get(&s.index()).map_or(0.0, |&c| c as f64 / self.n_samples as f64)
    }

    pub fn probabilities_dense(&self) -> Result<Vec<f64>> {
        if self.n_sites > MAX_FD_DENSE_SITES {
            return Err(Error::Resource {
                what: "sites for a dense frequency table",
                limit: MAX_FD_DENSE_SITES,
                requested: self.n_sites,
            });
        }
        let mut p = vec![0.0; 1 << self.n_sites];
        for (&x, &c) in &self.table {
            p[x as usize] = c as f64 / self.n_samples as f64;
        }
        Ok(p)
    }

    /// Draws from the table with the stream `(seed, MEASURE)`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<BitString> {
        let keys: Vec<u64> = self.table.keys().copied().collect();
        let dist = WeightedIndex::new(self.table.values().copied()).expect("counts are positive");
        let mut rng = rng_for(seed, &[stream::MEASURE]);
        (0..n)
            .map(|_| BitString::from_index(keys[dist.sample(&mut rng)], self.n_sites))
            .collect()
    }

    /// `bitstring,count` rows sorted by bit-string.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bitstring,count\n");
        for (&x, &c) in &self.table {
            s.push_str(&format!("{},{c}\n", BitString::from_index(x, self.n_sites)));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("bitstring,count") {
            return Err(Error::argument("frequency table must start with the header `bitstring,count`"));
        }
        let mut table = BTreeMap::new();
        let mut n_sites = None;
        let mut total = 0;
        for (k, line) in lines.enumerate() {
            let bad = || Error::argument(format!("frequency table row {}: `{line}`", k + 2));
            let (b, c) = line.split_once(',').ok_or_else(bad)?;
            let s: BitString = b.parse().map_err(|_| bad())?;
            let c: u64 = c.parse().map_err(|_| bad())?;
            if c == 0 || *n_sites.get_or_insert(s.len()) != s.len() || table.insert(s.index(), c).is_some() {
                return Err(bad());
            }
            total += c;
        }
        Ok(FdModel {
            n_sites: n_sites.ok_or_else(|| Error::argument("empty frequency table"))?,
            table,
            n_samples: total,
        })
    }
}

fn check_normalized(p: &[f64], what: &str) -> Result<()> {
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-8 || p.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::argument(format!("{what} is not a probability table (sum {s})")));
    }
    Ok(())
}

/// `sum_t sqrt(p(t) q(t))`.
pub fn classical_fidelity(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::argument(format!("tables of size {} and {}", p.len(), q.len())));
    }
    check_normalized(p, "first argument")?;
    check_normalized(q, "second argument")?;
    let f: f64 = p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum();
    Ok(f.clamp(0.0, 1.0))
}

/// Real, nonnegative amplitudes of a pure state, if it has them.
fn positive_amplitudes(truth: &QuantumState) -> Result<Vec<f64>> {
    let StateData::Pure(v) = truth.data() else {
        return Err(Error::argument("the frequency-table state is compared with pure truths only"));
    };
    let tol = 1e-10;
    let phase = v.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).copied().unwrap_or(Complex64::new(1.0, 0.0));
    let phase = phase / phase.norm();
    let mut out = Vec::with_capacity(v.len());
    for a in v.iter() {
        let r = a / phase;
        if r.im.abs() > tol || r.re < -tol {
            return Err(Error::argument("truth amplitudes are not all positive up to a global phase"));
        }
        out.push(r.re.max(0.0));
    }
    Ok(out)
}

/// Overlap of `sum_t sqrt(P_FD(t)) |t>` with a positive pure truth.
pub fn fd_state_fidelity(fd: &FdModel, truth: &QuantumState) -> Result<f64> {
    if fd.n_sites != truth.n_sites() {
        return Err(Error::argument("frequency table and truth have different sizes"));
    }
    let amps = positive_amplitudes(truth)?;
    let q: Vec<f64> = amps.iter().map(|a| a * a).collect();
    classical_fidelity(&fd.probabilities_dense()?, &q)
}

/// FD fidelity for any truth; mixed truths are replaced by their positive-pure
/// partner. The flag reports whether that happened.
pub fn fd_fidelity_any(fd: &FdModel, truth: &QuantumState) -> Result<(f64, bool)> {
    if truth.is_pure() {
        Ok((fd_state_fidelity(fd, truth)?, false))
    } else {
        Ok((fd_state_fidelity(fd, &positive_pure_partner(truth)?)?, true))
    }
}

/// Upper bound `sqrt(N_s) exp(-H_2 / 4)` on the FD fidelity.
pub fn fidelity_bound(n_samples: u64, h2: f64) -> f64 {
    (n_samples as f64).sqrt() * (-h2 / 4.0).exp()
}

/// Renyi-2 entropy `-log sum p^2` of a distribution.
pub fn renyi2_distribution(p: &[f64]) -> f64 {
    -p.iter().map(|x| x * x).sum::<f64>().ln()
}

pub enum Sized<'a> {
    Fd(&'a FdModel),
    Rbm(&'a RbmParams),
}

/// Number of stored numbers needed to specify the model.
pub fn model_size(m: Sized<'_>) -> usize {
    match m {
        Sized::Fd(fd) => fd.distinct(),
        Sized::Rbm(p) => p.n_visible * p.n_hidden + p.n_visible + p.n_hidden,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::sample_distribution;
    use crate::DatasetMeta;
    use rand::{Rng as _, SeedableRng};

    fn dataset(n: usize, s: &[&str]) -> Dataset {
        Dataset::new(n, s.iter().map(|x| x.parse().unwrap()).collect(), DatasetMeta::default()).unwrap()
    }

    #[test]
    fn table_examples() {
        let fd = build_fd(&dataset(2, &["00", "00", "01"])).unwrap();
        assert_eq!(fd.table, BTreeMap::from([(0, 2), (1, 1)]));
        assert_eq!(fd.n_samples, 3);
        assert_eq!(model_size(Sized::Fd(&fd)), 2);
        assert_eq!(FdModel::from_csv(&fd.to_csv()).unwrap(), fd);
        assert_eq!(fd.to_csv(), "bitstring,count\n00,2\n01,1\n");
        let same = build_fd(&dataset(3, &["101"; 7])).unwrap();
        assert_eq!(model_size(Sized::Fd(&same)), 1);
        assert_eq!(model_size(Sized::Rbm(&RbmParams::zeros(8, 16))), 152);
    }

    #[test]
    fn resampling_reproduces_table() {
        let fd = build_fd(&dataset(3, &["000", "000", "011", "111", "111", "111"])).unwrap();
        let draws = fd.sample(100_000, 3);
        let back = build_fd(&Dataset::new(3, draws, DatasetMeta::default()).unwrap()).unwrap();
        for (&x, &c) in &fd.table {
            let p = c as f64 / 6.0;
            let got = back.table[&x] as f64 / 1e5;
            assert!((got - p).abs() < 3.0 * (p * (1.0 - p) / 1e5).sqrt());
        }
        assert_eq!(back.distinct(), 3);
    }

    #[test]
    fn classical_fidelity_examples() {
        let p = [0.2, 0.3, 0.5, 0.0];
        assert!((classical_fidelity(&p, &p).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(classical_fidelity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let n = 6;
        let u = vec![1.0 / 64.0; 64];
        let mut d = vec![0.0; 64];
        d[17] = 1.0;
        assert!((classical_fidelity(&u, &d).unwrap() - 2f64.powf(-(n as f64) / 2.0)).abs() < 1e-15);
        assert!(classical_fidelity(&[0.5, 0.4], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn state_fidelity_examples() {
        let truth = QuantumState::pure_real(4, &[0.25; 16]).unwrap();
        let one = build_fd(&dataset(4, &["0110"])).unwrap();
        assert!((fd_state_fidelity(&one, &truth).unwrap() - 0.25).abs() < 1e-15);

        let mut rng = crate::rng::Rng::seed_from_u64(1);
        let amps: Vec<f64> = (0..16).map(|_| rng.random::<f64>() + 0.1).collect();
        let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        let amps: Vec<f64> = amps.iter().map(|a| a / norm).collect();
        let truth = QuantumState::pure_real(4, &amps).unwrap();
        let q: Vec<f64> = amps.iter().map(|a| a * a).collect();
        let d = Dataset::new(4, sample_distribution(&q, 4, 1_000_000, 2).unwrap(), DatasetMeta::default()).unwrap();
        assert!(fd_state_fidelity(&build_fd(&d).unwrap(), &truth).unwrap() > 0.999);

        let mut neg = amps.clone();
        neg[3] = -neg[3];
        let bad = QuantumState::pure_real(4, &neg).unwrap();
        assert!(matches!(fd_state_fidelity(&one, &bad), Err(Error::Argument(_))));
    }

    #[test]
    fn bound_examples() {
        assert_eq!(fidelity_bound(400, 0.0), 20.0);
        let n = 8;
        let h2 = renyi2_distribution(&vec![1.0 / 256.0; 256]);
        assert!((h2 - n as f64 * 2f64.ln()).abs() < 1e-12);
        assert!((fidelity_bound(100, h2) - 10.0 * 2f64.powf(-(n as f64) / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn fd_maximizes_its_own_likelihood() {
        let d = dataset(3, &["000", "001", "001", "101", "111", "111", "111"]);
        let fd = build_fd(&d).unwrap().probabilities_dense().unwrap();
        let nll = |p: &[f64]| -d.samples.iter().map(|s| p[s.index() as usize].ln()).sum::<f64>() / d.len() as f64;
        let own = nll(&fd);
        for seed in 0..20 {
            let q = crate::rbm::tests::random_params(3, 2, 1.5, seed).probabilities_exact().unwrap();
            assert!(own <= nll(&q) + 1e-12);
        }
    }
}
