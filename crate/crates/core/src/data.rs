//! Synthetic datasets and dataset I/O.
//!
//! Two generators: a noisy double helix in R³ (two intertwined strands, the
//! workhorse example for latent-geometry analysis) and enumerable factor grids
//! (every combination of discrete factor levels embedded through a fixed random
//! smooth map, for disentanglement scoring).
//!
//! Generators are pure functions of their config: the same config yields the
//! same dataset byte for byte, and independent seed streams keep structure
//! (`t`, strand flips, level codes) fixed while noise varies.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::nn::{Activation, Mlp};
use crate::rng;
use crate::{Error, Result};

/// A set of observations with optional per-row factor labels.
///
/// Dimensions are stored explicitly so that a dataset with zero rows (e.g. a
/// freshly read header-only CSV) still knows its observation and factor width.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<Vec<f64>>,
    labels: Option<Vec<Vec<f64>>>,
    factor_cardinalities: Option<Vec<usize>>,
    obs_dim: usize,
    n_factors: usize,
}

impl Dataset {
    /// Builds a dataset, validating that rows are rectangular, labels (when
    /// present) match the row count, cardinalities (when present) match the
    /// label width, and every value is finite.
    ///
    /// Dimensions are inferred from the first row, so this rejects empty
    /// inputs; use [`Dataset::empty`] for a zero-row dataset.
    pub fn new(
        observations: Vec<Vec<f64>>,
        labels: Option<Vec<Vec<f64>>>,
        factor_cardinalities: Option<Vec<usize>>,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::invalid(
                "dataset must contain at least one row (use Dataset::empty for zero rows)",
            ));
        }
        let dim = observations[0].len();
        if dim == 0 {
            return Err(Error::invalid("observations must have at least one dimension"));
        }
        for (i, row) in observations.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::shape(format!("observation row {i} has {} values, expected {dim}", row.len())));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::non_finite(format!("observation row {i} contains {v}")));
            }
        }
        if let Some(ls) = &labels {
            if ls.len() != observations.len() {
                return Err(Error::shape(format!(
                    "{} label rows for {} observations",
                    ls.len(),
                    observations.len()
                )));
            }
            let ld = ls[0].len();
            if ld == 0 {
                return Err(Error::invalid("label rows must have at least one factor"));
            }
            for (i, row) in ls.iter().enumerate() {
                if row.len() != ld {
                    return Err(Error::shape(format!("label row {i} has {} values, expected {ld}", row.len())));
                }
                if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                    return Err(Error::non_finite(format!("label row {i} contains {v}")));
                }
            }
            if let Some(cards) = &factor_cardinalities {
                if cards.len() != ld {
                    return Err(Error::shape(format!(
                        "{} cardinalities for {ld} factors",
                        cards.len()
                    )));
                }
            }
        } else if factor_cardinalities.is_some() {
            return Err(Error::invalid("factor_cardinalities given without labels"));
        }
        let n_factors = labels.as_ref().map_or(0, |l| l[0].len());
        Ok(Dataset { observations, labels, factor_cardinalities, obs_dim: dim, n_factors })
    }

    /// Builds a dataset with zero rows and the given dimensions. Writing it
    /// produces a header-only CSV that reads back as an empty dataset.
    pub fn empty(
        obs_dim: usize,
        n_factors: usize,
        factor_cardinalities: Option<Vec<usize>>,
    ) -> Result<Self> {
        if obs_dim == 0 {
            return Err(Error::invalid("observations must have at least one dimension"));
        }
        if let Some(cards) = &factor_cardinalities {
            if cards.len() != n_factors {
                return Err(Error::shape(format!(
                    "{} cardinalities for {n_factors} factors",
                    cards.len()
                )));
            }
            if n_factors == 0 {
                return Err(Error::invalid("factor_cardinalities given without labels"));
            }
        }
        Ok(Dataset {
            observations: Vec::new(),
            labels: (n_factors > 0).then(Vec::new),
            factor_cardinalities,
            obs_dim,
            n_factors,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    /// Number of labeled factors, 0 if unlabeled.
    pub fn n_factors(&self) -> usize {
        self.n_factors
    }

    pub fn observations(&self) -> &[Vec<f64>] {
        &self.observations
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.observations[i]
    }

    pub fn labels(&self) -> Option<&[Vec<f64>]> {
        self.labels.as_deref()
    }

    pub fn label_row(&self, i: usize) -> Option<&[f64]> {
        self.labels.as_ref().map(|l| l[i].as_slice())
    }

    pub fn factor_cardinalities(&self) -> Option<&[usize]> {
        self.factor_cardinalities.as_deref()
    }

    /// Per-dimension (min, max) over all observations.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        assert!(!self.is_empty(), "bounding box of an empty dataset");
        let d = self.obs_dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for row in &self.observations {
            for (j, &v) in row.iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        (lo, hi)
    }

    /// A seeded shuffle-split: returns (first, second) index lists where the
    /// first holds `round(frac * len)` rows. Deterministic in `seed`.
    pub fn shuffle_split(&self, frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
        if !(0.0..=1.0).contains(&frac) {
            return Err(Error::invalid(format!("split fraction {frac} outside [0, 1]")));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        // Fisher-Yates with a dedicated stream.
        let mut r = rng::seeded(rng::sub_seed(seed, "split"));
        for i in (1..idx.len()).rev() {
            let j = r.gen_range(0..=i);
            idx.swap(i, j);
        }
        let cut = (frac * self.len() as f64).round() as usize;
        let second = idx.split_off(cut.min(idx.len()));
        Ok((idx, second))
    }
}

/// Configuration for the double-helix generator.
///
/// Points follow `x = [a1 cos(pi (omega t + n)), a2 sin(pi (omega t + n)), a3 t] + eps`
/// with `t ~ U(-1, 1)`, strand flip `n ~ Bernoulli(0.5)` and
/// `eps ~ N(0, sigma^2 I)`. Labels are `(t, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HelixConfig {
    pub n: usize,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub omega: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for HelixConfig {
    fn default() -> Self {
        HelixConfig { n: 1024, a1: 1.0, a2: 1.0, a3: 1.0, omega: 1.0, sigma: 0.1, seed: 0 }
    }
}

impl HelixConfig {
    /// The noiseless curve point for parameter `t` on strand `n` (0 or 1).
    pub fn curve_point(&self, t: f64, n: u8) -> [f64; 3] {
        let phase = std::f64::consts::PI * (self.omega * t + n as f64);
        [self.a1 * phase.cos(), self.a2 * phase.sin(), self.a3 * t]
    }
}

/// Generates a double helix dataset.
///
/// Separate seed streams drive `t`, the strand flips, and the noise, so
/// regenerating with a different `sigma` keeps the same underlying curve
/// points.
pub fn gen_helix(config: &HelixConfig) -> Result<Dataset> {
    if config.n == 0 {
        return Err(Error::invalid("helix dataset needs n >= 1"));
    }
    if !config.sigma.is_finite() || config.sigma < 0.0 {
        return Err(Error::invalid(format!("noise sigma must be finite and >= 0, got {}", config.sigma)));
    }
    for (name, v) in [("a1", config.a1), ("a2", config.a2), ("a3", config.a3), ("omega", config.omega)] {
        if !v.is_finite() {
            return Err(Error::invalid(format!("{name} must be finite, got {v}")));
        }
    }

    let mut rng_t = rng::seeded(rng::sub_seed(config.seed, "t"));
    let mut rng_flip = rng::seeded(rng::sub_seed(config.seed, "flip"));
    let mut rng_noise = rng::seeded(rng::sub_seed(config.seed, "noise"));

    let mut obs = Vec::with_capacity(config.n);
    let mut labels = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        let t: f64 = rng_t.gen_range(-1.0..1.0);
        let n: u8 = u8::from(rng_flip.gen_bool(0.5));
        let mut x = config.curve_point(t, n);
        for xi in x.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng_noise);
            *xi += config.sigma * e;
        }
        obs.push(x.to_vec());
        labels.push(vec![t, n as f64]);
    }
    Dataset::new(obs, Some(labels), None)
}

/// Distance from `p` to the noiseless helix curve (both strands), minimized
/// over `t` in [-1, 1] by grid search plus local ternary refinement.
///
/// # Panics
/// If `p` does not have 3 entries.
pub fn helix_distance(config: &HelixConfig, p: &[f64]) -> f64 {
    assert_eq!(p.len(), 3, "helix points live in R^3");
    let d2 = |t: f64, n: u8| -> f64 {
        let c = config.curve_point(t, n);
        (0..3).map(|i| (p[i] - c[i]) * (p[i] - c[i])).sum()
    };
    let mut best = f64::INFINITY;
    for n in [0u8, 1u8] {
        // Coarse scan, then ternary search on the bracketing interval.
        let steps = 1024;
        let mut best_t = -1.0;
        let mut best_d = f64::INFINITY;
        for k in 0..=steps {
            let t = -1.0 + 2.0 * k as f64 / steps as f64;
            let d = d2(t, n);
            if d < best_d {
                best_d = d;
                best_t = t;
            }
        }
        let width = 2.0 / steps as f64;
        let (mut lo, mut hi) = ((best_t - width).max(-1.0), (best_t + width).min(1.0));
        for _ in 0..80 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if d2(m1, n) < d2(m2, n) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        best = best.min(d2(0.5 * (lo + hi), n));
    }
    best.sqrt()
}

/// Configuration for the enumerable factor-grid generator.
///
/// Every combination of factor levels becomes one row. Each (factor, level)
/// pair gets a fixed random 2-D code; the concatenated codes pass through a
/// fixed random 2-layer ELU map into observation space, plus isotropic noise.
/// `embed_seed` pins the codes and the map; `noise_seed` pins only the noise,
/// so the embedding survives regeneration with fresh noise.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorConfig {
    pub cardinalities: Vec<usize>,
    pub obs_dim: usize,
    pub sigma: f64,
    pub embed_seed: u64,
    pub noise_seed: u64,
}

/// Width of the per-factor level codes fed to the embedding map.
const FACTOR_CODE_DIM: usize = 2;
/// Hidden width of the fixed random embedding map.
const FACTOR_EMBED_HIDDEN: usize = 32;

/// Generates the full factor grid described by `config`.
///
/// Rows enumerate level tuples in lexicographic order (factor 0 slowest).
/// Labels are the level indices as floats; cardinalities are recorded on the
/// dataset.
pub fn gen_factors(config: &FactorConfig) -> Result<Dataset> {
    if config.cardinalities.len() < 2 {
        return Err(Error::invalid("factor datasets need at least 2 factors"));
    }
    if let Some(&k) = config.cardinalities.iter().find(|&&k| k < 2) {
        return Err(Error::invalid(format!("every factor needs >= 2 levels, got {k}")));
    }
    if config.obs_dim == 0 {
        return Err(Error::invalid("obs_dim must be >= 1"));
    }
    if !config.sigma.is_finite() || config.sigma < 0.0 {
        return Err(Error::invalid(format!("noise sigma must be finite and >= 0, got {}", config.sigma)));
    }

    let d_star = config.cardinalities.len();
    let n_rows: usize = config.cardinalities.iter().product();

    // Fixed level codes, drawn in (factor, level) order.
    let mut rng_codes = rng::seeded(rng::sub_seed(config.embed_seed, "codes"));
    let mut codes: Vec<Vec<[f64; FACTOR_CODE_DIM]>> = Vec::with_capacity(d_star);
    for &card in &config.cardinalities {
        let mut per_level = Vec::with_capacity(card);
        for _ in 0..card {
            let mut c = [0.0; FACTOR_CODE_DIM];
            for v in c.iter_mut() {
                *v = StandardNormal.sample(&mut rng_codes);
            }
            per_level.push(c);
        }
        codes.push(per_level);
    }

    // Fixed smooth embedding map.
    let mut rng_map = rng::seeded(rng::sub_seed(config.embed_seed, "map"));
    let embed = Mlp::new(
        &[d_star * FACTOR_CODE_DIM, FACTOR_EMBED_HIDDEN, config.obs_dim],
        Activation::Elu,
        Activation::Identity,
        &mut rng_map,
    );

    let mut rng_noise = rng::seeded(rng::sub_seed(config.noise_seed, "noise"));
    let mut obs = Vec::with_capacity(n_rows);
    let mut labels = Vec::with_capacity(n_rows);
    let mut levels = vec![0usize; d_star];
    for _ in 0..n_rows {
        let mut code = Vec::with_capacity(d_star * FACTOR_CODE_DIM);
        for (f, &lvl) in levels.iter().enumerate() {
            code.extend_from_slice(&codes[f][lvl]);
        }
        let mut x = embed.forward(&code);
        for xi in x.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng_noise);
            *xi += config.sigma * e;
        }
        obs.push(x);
        labels.push(levels.iter().map(|&l| l as f64).collect());

        // Advance the mixed-radix counter, factor 0 slowest.
        for f in (0..d_star).rev() {
            levels[f] += 1;
            if levels[f] < config.cardinalities[f] {
                break;
            }
            levels[f] = 0;
        }
    }
    Dataset::new(obs, Some(labels), Some(config.cardinalities.clone()))
}

/// Draws `n` row indices (uniformly, with replacement) whose labels match
/// every `(factor, value)` pair in `fixed` exactly.
///
/// Errors if the dataset is unlabeled, a factor index is out of range, or no
/// row matches (naming the offending assignment).
pub fn sample_conditioned(
    dataset: &Dataset,
    fixed: &BTreeMap<usize, f64>,
    n: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let labels = dataset
        .labels()
        .ok_or_else(|| Error::invalid("conditional sampling needs a labeled dataset"))?;
    let d_star = dataset.n_factors();
    for &f in fixed.keys() {
        if f >= d_star {
            return Err(Error::invalid(format!("factor {f} out of range (dataset has {d_star} factors)")));
        }
    }
    let matches: Vec<usize> = (0..dataset.len())
        .filter(|&i| fixed.iter().all(|(&f, &v)| labels[i][f] == v))
        .collect();
    if matches.is_empty() {
        let desc: Vec<String> = fixed.iter().map(|(f, v)| format!("y{f}={v}")).collect();
        return Err(Error::EmptyStratum(format!(
            "no rows match {{{}}}",
            desc.join(", ")
        )));
    }
    let mut r = rng::seeded(rng::sub_seed(seed, "conditioned"));
    Ok((0..n).map(|_| matches[r.gen_range(0..matches.len())]).collect())
}

/// Per-dimension standardization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Minimum raw standard deviation before a dimension is treated as constant
/// (its std is clamped to 1, so the dimension passes through centered only).
pub const STD_FLOOR: f64 = 1e-12;

/// Population mean and standard deviation per column of `rows` (all rows must
/// share one length). Columns with std below [`STD_FLOOR`] get std 1.
pub fn standardization_stats(rows: &[Vec<f64>]) -> Standardization {
    assert!(!rows.is_empty(), "need at least one row for statistics");
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for row in rows {
        assert_eq!(row.len(), d, "ragged rows");
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = vec![0.0; d];
    for row in rows {
        for (j, v) in row.iter().enumerate() {
            let c = v - mean[j];
            var[j] += c * c;
        }
    }
    let std = var
        .iter()
        .map(|&s| {
            let sd = (s / n).sqrt();
            if sd < STD_FLOOR {
                1.0
            } else {
                sd
            }
        })
        .collect();
    Standardization { mean, std }
}

/// Writes a dataset as CSV: header `x1..xD,y1..yK`, one row per observation,
/// floats formatted with shortest round-trip precision. Factor cardinalities,
/// when present, are recorded in a leading `#` comment. An empty dataset
/// produces a header-only file.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    if let Some(cards) = dataset.factor_cardinalities() {
        let joined: Vec<String> = cards.iter().map(|c| c.to_string()).collect();
        writeln!(file, "# factor_cardinalities: {}", joined.join(","))?;
    }
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<String> = (1..=dataset.obs_dim()).map(|j| format!("x{j}")).collect();
    header.extend((1..=dataset.n_factors()).map(|j| format!("y{j}")));
    w.write_record(&header).map_err(csv_error)?;
    let mut record = Vec::with_capacity(dataset.obs_dim() + dataset.n_factors());
    for i in 0..dataset.len() {
        record.clear();
        record.extend(dataset.row(i).iter().map(|v| v.to_string()));
        if let Some(lr) = dataset.label_row(i) {
            record.extend(lr.iter().map(|v| v.to_string()));
        }
        w.write_record(&record).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset written by [`write_csv`].
///
/// The header must list `x1..xD` (contiguous, from 1) optionally followed by
/// `y1..yK`; malformed headers, ragged rows, unparsable or non-finite values
/// are reported with their 1-based line number. A header-only file reads back
/// as an empty dataset.
pub fn read_csv(path: &Path) -> Result<Dataset> {
    // The cardinality comment is not a CSV record; scan for it separately.
    let cards = read_cardinality_comment(path)?;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_error)?;

    let headers = reader.headers().map_err(csv_error)?.clone();
    let (n_obs, n_lbl) = parse_header(&headers)?;

    let mut observations = Vec::new();
    let mut labels: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != n_obs + n_lbl {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", n_obs + n_lbl, record.len()),
            });
        }
        let mut row = Vec::with_capacity(n_obs + n_lbl);
        for field in record.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse { line, msg: format!("cannot parse '{field}' as a number") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, msg: format!("non-finite value '{field}'") });
            }
            row.push(v);
        }
        let lbl = row.split_off(n_obs);
        observations.push(row);
        if n_lbl > 0 {
            labels.push(lbl);
        }
    }
    if observations.is_empty() {
        return Dataset::empty(n_obs, n_lbl, cards);
    }
    Dataset::new(observations, (n_lbl > 0).then_some(labels), cards)
}

fn read_cardinality_comment(path: &Path) -> Result<Option<Vec<usize>>> {
    use std::io::BufRead;
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    for (idx, line) in file.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if !trimmed.starts_with('#') {
            break; // comments are only honored before the header
        }
        if let Some(rest) = trimmed.strip_prefix("# factor_cardinalities:") {
            let cards = rest
                .trim()
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Parse {
                    line: idx as u64 + 1,
                    msg: format!("bad cardinality list '{}'", rest.trim()),
                })?;
            return Ok(Some(cards));
        }
    }
    Ok(None)
}

fn parse_header(headers: &csv::StringRecord) -> Result<(usize, usize)> {
    let fields: Vec<&str> = headers.iter().map(str::trim).collect();
    let mut n_obs = 0;
    while n_obs < fields.len() && fields[n_obs] == format!("x{}", n_obs + 1) {
        n_obs += 1;
    }
    if n_obs == 0 {
        return Err(Error::Parse { line: 1, msg: format!("header must start with x1, found '{}'", fields.first().unwrap_or(&"")) });
    }
    let mut n_lbl = 0;
    while n_obs + n_lbl < fields.len() && fields[n_obs + n_lbl] == format!("y{}", n_lbl + 1) {
        n_lbl += 1;
    }
    if n_obs + n_lbl != fields.len() {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header field '{}'", fields[n_obs + n_lbl]),
        });
    }
    Ok((n_obs, n_lbl))
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, csv::Position::line);
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        },
        _ => Error::Parse { line, msg: e.to_string() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn helix_is_deterministic_in_seed() {
        let cfg = HelixConfig { n: 64, ..HelixConfig::default() };
        let a = gen_helix(&cfg).unwrap();
        let b = gen_helix(&cfg).unwrap();
        assert_eq!(a, b);
        let c = gen_helix(&HelixConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn helix_noise_stream_is_isolated_from_structure() {
        // Same seed, different sigma: identical (t, n) labels.
        let noisy = gen_helix(&HelixConfig { n: 32, sigma: 0.1, ..HelixConfig::default() }).unwrap();
        let clean = gen_helix(&HelixConfig { n: 32, sigma: 0.0, ..HelixConfig::default() }).unwrap();
        assert_eq!(noisy.labels(), clean.labels());
    }

    #[test]
    fn noiseless_helix_lies_on_the_curve() {
        let cfg = HelixConfig { n: 128, sigma: 0.0, ..HelixConfig::default() };
        let ds = gen_helix(&cfg).unwrap();
        for i in 0..ds.len() {
            let row = ds.row(i);
            // a1 = a2 = 1: the first two coordinates sit on the unit circle.
            assert_relative_eq!(row[0] * row[0] + row[1] * row[1], 1.0, max_relative = 1e-12);
            let lbl = ds.label_row(i).unwrap();
            let expected = cfg.curve_point(lbl[0], lbl[1] as u8);
            for k in 0..3 {
                assert_relative_eq!(row[k], expected[k], epsilon = 1e-12);
            }
            assert!(helix_distance(&cfg, row) < 1e-6);
        }
    }

    #[test]
    fn helix_labels_cover_both_strands() {
        let ds = gen_helix(&HelixConfig { n: 64, ..HelixConfig::default() }).unwrap();
        let flips: Vec<f64> = ds.labels().unwrap().iter().map(|l| l[1]).collect();
        assert!(flips.contains(&0.0));
        assert!(flips.contains(&1.0));
        assert!(ds.labels().unwrap().iter().all(|l| (-1.0..1.0).contains(&l[0])));
    }

    #[test]
    fn helix_distance_matches_hand_cases() {
        let cfg = HelixConfig::default();
        // The axis point (0,0,0) is distance 1 from both strands (closest at t=0).
        assert_relative_eq!(helix_distance(&cfg, &[0.0, 0.0, 0.0]), 1.0, epsilon = 1e-8);
        // A point on strand 0 at t=0.
        assert!(helix_distance(&cfg, &[1.0, 0.0, 0.0]) < 1e-8);
        // A point on strand 1 at t=0 (phase pi).
        assert!(helix_distance(&cfg, &[-1.0, 0.0, 0.0]) < 1e-8);
    }

    #[test]
    fn factor_grid_enumerates_every_combination_once() {
        let cfg = FactorConfig {
            cardinalities: vec![3, 2, 4],
            obs_dim: 8,
            sigma: 0.05,
            embed_seed: 0,
            noise_seed: 0,
        };
        let ds = gen_factors(&cfg).unwrap();
        assert_eq!(ds.len(), 24);
        assert_eq!(ds.obs_dim(), 8);
        assert_eq!(ds.factor_cardinalities(), Some(&[3usize, 2, 4][..]));
        let labels = ds.labels().unwrap();
        let mut seen: Vec<Vec<u64>> = labels
            .iter()
            .map(|l| l.iter().map(|v| *v as u64).collect())
            .collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 24, "labels must be unique");
        assert_eq!(labels[0], vec![0.0, 0.0, 0.0]);
        assert_eq!(labels[23], vec![2.0, 1.0, 3.0]);
        // Factor 0 slowest: second row bumps the last factor.
        assert_eq!(labels[1], vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn factor_map_is_injective_without_noise() {
        let cfg = FactorConfig {
            cardinalities: vec![4, 4],
            obs_dim: 6,
            sigma: 0.0,
            embed_seed: 3,
            noise_seed: 0,
        };
        let ds = gen_factors(&cfg).unwrap();
        for i in 0..ds.len() {
            for j in (i + 1)..ds.len() {
                let same = ds.row(i).iter().zip(ds.row(j)).all(|(a, b)| a == b);
                assert!(!same, "rows {i} and {j} collide");
            }
        }
    }

    #[test]
    fn factor_embedding_is_fixed_while_noise_varies() {
        let base = FactorConfig {
            cardinalities: vec![3, 3],
            obs_dim: 5,
            sigma: 0.0,
            embed_seed: 7,
            noise_seed: 0,
        };
        let a = gen_factors(&base).unwrap();
        let b = gen_factors(&FactorConfig { noise_seed: 99, ..base.clone() }).unwrap();
        assert_eq!(a, b, "sigma = 0 must ignore the noise seed");
        let c = gen_factors(&FactorConfig { embed_seed: 8, ..base }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn factor_config_validation() {
        let bad_card = FactorConfig { cardinalities: vec![3, 1], obs_dim: 4, sigma: 0.0, embed_seed: 0, noise_seed: 0 };
        assert!(gen_factors(&bad_card).is_err());
        let one_factor = FactorConfig { cardinalities: vec![3], obs_dim: 4, sigma: 0.0, embed_seed: 0, noise_seed: 0 };
        assert!(gen_factors(&one_factor).is_err());
        let zero_dim = FactorConfig { cardinalities: vec![2, 2], obs_dim: 0, sigma: 0.0, embed_seed: 0, noise_seed: 0 };
        assert!(gen_factors(&zero_dim).is_err());
    }

    #[test]
    fn conditioned_sampling_matches_exactly() {
        let cfg = FactorConfig {
            cardinalities: vec![3, 2, 2],
            obs_dim: 4,
            sigma: 0.01,
            embed_seed: 1,
            noise_seed: 1,
        };
        let ds = gen_factors(&cfg).unwrap();
        let fixed = BTreeMap::from([(0, 1.0), (2, 0.0)]);
        let rows = sample_conditioned(&ds, &fixed, 50, 9).unwrap();
        assert_eq!(rows.len(), 50);
        let labels = ds.labels().unwrap();
        for &r in &rows {
            assert_eq!(labels[r][0], 1.0);
            assert_eq!(labels[r][2], 0.0);
        }
        // Both levels of the free factor appear among matches.
        assert!(rows.iter().any(|&r| labels[r][1] == 0.0));
        assert!(rows.iter().any(|&r| labels[r][1] == 1.0));
        // Determinism.
        assert_eq!(rows, sample_conditioned(&ds, &fixed, 50, 9).unwrap());
    }

    #[test]
    fn conditioned_sampling_reports_empty_strata() {
        let ds = gen_factors(&FactorConfig {
            cardinalities: vec![2, 2],
            obs_dim: 3,
            sigma: 0.0,
            embed_seed: 0,
            noise_seed: 0,
        })
        .unwrap();
        let fixed = BTreeMap::from([(1, 5.0)]);
        let err = sample_conditioned(&ds, &fixed, 10, 0).unwrap_err();
        assert!(matches!(err, Error::EmptyStratum(_)));
        assert!(err.to_string().contains("y1=5"), "got: {err}");

        let out_of_range = BTreeMap::from([(7, 0.0)]);
        assert!(sample_conditioned(&ds, &out_of_range, 10, 0).is_err());
    }

    #[test]
    fn standardization_stats_match_hand_computation() {
        let st = standardization_stats(&[vec![1.0, 5.0], vec![3.0, 5.0]]);
        assert_eq!(st.mean, vec![2.0, 5.0]);
        assert_eq!(st.std[0], 1.0); // population std of {1, 3}
        assert_eq!(st.std[1], 1.0); // constant dim clamps to 1
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("helix.csv");
        let ds = gen_helix(&HelixConfig { n: 40, ..HelixConfig::default() }).unwrap();
        write_csv(&ds, &path).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn csv_roundtrip_preserves_cardinalities() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("factors.csv");
        let ds = gen_factors(&FactorConfig {
            cardinalities: vec![3, 4],
            obs_dim: 5,
            sigma: 0.02,
            embed_seed: 2,
            noise_seed: 2,
        })
        .unwrap();
        write_csv(&ds, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), ds);
    }

    #[test]
    fn csv_roundtrip_without_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plain.csv");
        let ds = Dataset::new(vec![vec![0.1, -2.5e-17], vec![3.0, 4.0]], None, None).unwrap();
        write_csv(&ds, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), ds);
    }

    #[test]
    fn empty_dataset_roundtrips_as_header_only_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        let ds = Dataset::empty(3, 2, Some(vec![4, 5])).unwrap();
        write_csv(&ds, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "# factor_cardinalities: 4,5\nx1,x2,x3,y1,y2\n");
        let back = read_csv(&path).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.len(), 0);
        assert_eq!(back.obs_dim(), 3);
        assert_eq!(back.n_factors(), 2);

        let unlabeled = Dataset::empty(2, 0, None).unwrap();
        write_csv(&unlabeled, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), unlabeled);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x1,x2\n1.0,2.0\n3.0,oops\n").unwrap();
        let err = read_csv(&path).unwrap_err();
        match err {
            Error::Parse { line, ref msg } => {
                assert_eq!(line, 3, "{msg}");
                assert!(msg.contains("oops"));
            }
            other => panic!("expected parse error, got {other}"),
        }

        std::fs::write(&path, "x1,x2\n1.0,2.0\n3.0\n").unwrap();
        match read_csv(&path).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }

        std::fs::write(&path, "a,b\n1.0,2.0\n").unwrap();
        assert!(matches!(read_csv(&path).unwrap_err(), Error::Parse { line: 1, .. }));

        std::fs::write(&path, "x1\nNaN\n").unwrap();
        assert!(matches!(read_csv(&path).unwrap_err(), Error::Parse { line: 2, .. }));
    }

    #[test]
    fn shuffle_split_partitions_deterministically() {
        let ds = gen_helix(&HelixConfig { n: 50, ..HelixConfig::default() }).unwrap();
        let (a, b) = ds.shuffle_split(0.8, 4).unwrap();
        assert_eq!(a.len(), 40);
        assert_eq!(b.len(), 10);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert_eq!(ds.shuffle_split(0.8, 4).unwrap(), (a, b));
    }
}
