use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Cascade;

pub const DEFAULT_KS: [u32; 7] = [1, 2, 5, 10, 20, 50, 100];

const MS_PER_MINUTE: f64 = 60_000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeMetrics {
    pub root_id: String,
    /// Distinct authors; nodes without an author count as distinct users.
    pub size_users: u64,
    pub size_tweets: u64,
    pub depth: u32,
    /// `times_to_k[k - 1]` = minutes from the root to its k-th retweet.
    pub times_to_k: Vec<f64>,
}

impl CascadeMetrics {
    pub fn retweets(&self) -> usize {
        self.times_to_k.len()
    }

    pub fn time_to(&self, k: u32) -> Option<f64> {
        (k >= 1).then(|| self.times_to_k.get(k as usize - 1).copied()).flatten()
    }
}

pub fn metrics(c: &Cascade) -> CascadeMetrics {
    let mut authors = HashSet::new();
    let mut anonymous = 0u64;
    for n in &c.nodes {
        match &n.author_id {
            Some(a) => {
                authors.insert(a.as_str());
            }
            None => anonymous += 1,
        }
    }
    let mut depth_of: HashMap<&str, u32> = HashMap::from([(c.root_id.as_str(), 0)]);
    let mut depth = 0;
    for e in &c.edges {
        let d = depth_of.get(e.parent_id.as_str()).copied().unwrap_or(0) + 1;
        depth_of.insert(e.child_id.as_str(), d);
        depth = depth.max(d);
    }
    let root_t = c.root().created_at;
    let mut times: Vec<i64> = c.nodes[1..].iter().map(|n| n.created_at).collect();
    times.sort_unstable();
    CascadeMetrics {
        root_id: c.root_id.clone(),
        size_users: authors.len() as u64 + anonymous,
        size_tweets: c.nodes.len() as u64,
        depth,
        times_to_k: times.iter().map(|t| (t - root_t) as f64 / MS_PER_MINUTE).collect(),
    }
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityPoint {
    pub median_minutes: f64,
    pub n_cascades: usize,
}

/// For each k, the median time-to-k over cascades with at least k retweets.
/// Even counts average the two middle values. A k with no qualifying
/// cascade is absent.
pub fn velocity_curve(cascades: &[CascadeMetrics], ks: &[u32]) -> BTreeMap<u32, VelocityPoint> {
    let mut out = BTreeMap::new();
    for &k in ks {
        let mut times: Vec<f64> = cascades.iter().filter_map(|m| m.time_to(k)).collect();
        if times.is_empty() {
            continue;
        }
        times.sort_by(f64::total_cmp);
        out.insert(
            k,
            VelocityPoint {
                median_minutes: median_sorted(&times),
                n_cascades: times.len(),
            },
        );
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Authorship {
    /// Cascades per named author.
    pub per_user: BTreeMap<String, usize>,
    /// cascades-per-user → number of users.
    pub histogram: BTreeMap<usize, usize>,
    pub n_users: usize,
    /// Share of users with two or more cascades; `None` with no users.
    pub multi_share: Option<f64>,
}

/// Root authors, one entry per cascade. Missing authors count as distinct
/// single-cascade users.
pub fn cascades_per_user<'a>(root_authors: impl IntoIterator<Item = Option<&'a str>>) -> Authorship {
    let mut per_user: BTreeMap<String, usize> = BTreeMap::new();
    let mut anonymous = 0;
    for a in root_authors {
        match a {
            Some(a) => *per_user.entry(a.to_owned()).or_default() += 1,
            None => anonymous += 1,
        }
    }
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for &n in per_user.values() {
        *histogram.entry(n).or_default() += 1;
    }
    if anonymous > 0 {
        *histogram.entry(1).or_default() += anonymous;
    }
    let n_users = per_user.len() + anonymous;
    let multi = per_user.values().filter(|&&n| n >= 2).count();
    Authorship {
        per_user,
        histogram,
        n_users,
        multi_share: (n_users > 0).then(|| multi as f64 / n_users as f64),
    }
}

/// Empirical size distribution with CCDF `P(size >= s)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SizeDistribution {
    /// Ascending.
    pub sorted: Vec<u64>,
    /// `(s, P(size >= s))` for every distinct size, ascending in `s`.
    pub ccdf: Vec<(u64, f64)>,
    pub mean: Option<f64>,
}

impl SizeDistribution {
    pub fn new(mut sizes: Vec<u64>) -> Self {
        sizes.sort_unstable();
        let n = sizes.len();
        let mut ccdf = Vec::new();
        let mut i = 0;
        while i < n {
            let s = sizes[i];
            ccdf.push((s, (n - i) as f64 / n as f64));
            while i < n && sizes[i] == s {
                i += 1;
            }
        }
        let mean = (n > 0).then(|| sizes.iter().map(|&s| s as f64).sum::<f64>() / n as f64);
        SizeDistribution { sorted: sizes, ccdf, mean }
    }

    /// Nearest-rank quantile: the value at rank `ceil(q * n)` (1-based) of the
    /// sorted sample, clamped to `[1, n]`.
    pub fn quantile(&self, q: f64) -> Option<u64> {
        let n = self.sorted.len();
        if n == 0 {
            return None;
        }
        let rank = ((q * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
        Some(self.sorted[rank - 1])
    }

    /// Smallest size among the largest `ceil(share * n)` cascades, i.e. the
    /// size the top `share` of cascades reaches at least.
    pub fn top_reach(&self, share: f64) -> Option<u64> {
        let n = self.sorted.len();
        if n == 0 {
            return None;
        }
        let top = ((share * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
        Some(self.sorted[n - top])
    }
}

/// Per-cohort summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub cohort: String,
    pub n_cascades: usize,
    pub sizes_users: SizeDistribution,
    pub mean_size_tweets: Option<f64>,
    pub velocity: BTreeMap<u32, VelocityPoint>,
    pub authorship: Authorship,
    pub p99_users: Option<u64>,
    pub top1pct_reach_users: Option<u64>,
    pub time_violations: usize,
}

impl CohortReport {
    pub fn build(cohort: &str, cascades: &[&Cascade], ks: &[u32]) -> Self {
        let ms: Vec<CascadeMetrics> = cascades.iter().map(|c| metrics(c)).collect();
        let sizes_users = SizeDistribution::new(ms.iter().map(|m| m.size_users).collect());
        let tweets = SizeDistribution::new(ms.iter().map(|m| m.size_tweets).collect());
        CohortReport {
            cohort: cohort.to_owned(),
            n_cascades: cascades.len(),
            p99_users: sizes_users.quantile(0.99),
            top1pct_reach_users: sizes_users.top_reach(0.01),
            sizes_users,
            mean_size_tweets: tweets.mean,
            velocity: velocity_curve(&ms, ks),
            authorship: cascades_per_user(cascades.iter().map(|c| c.root().author_id.as_deref())),
            time_violations: cascades.iter().map(|c| c.time_violations.len()).sum(),
        }
    }
}

/// CSV `size_users,ccdf`.
pub fn write_ccdf_csv<W: Write>(out: W, d: &SizeDistribution) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["size_users", "ccdf"])?;
    for (s, p) in &d.ccdf {
        w.write_record([s.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// CSV `k,median_minutes,n_cascades`.
pub fn write_velocity_csv<W: Write>(out: W, v: &BTreeMap<u32, VelocityPoint>) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "median_minutes", "n_cascades"])?;
    for (k, p) in v {
        w.write_record([k.to_string(), p.median_minutes.to_string(), p.n_cascades.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// CSV `cascades_per_user,n_users`.
pub fn write_authorship_csv<W: Write>(out: W, a: &Authorship) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cascades_per_user", "n_users"])?;
    for (c, n) in &a.histogram {
        w.write_record([c.to_string(), n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
