//! Monte Carlo kth-price auctions.
//!
//! Auctions are processed in fixed-size chunks. Chunk `c` draws from a
//! ChaCha8 stream keyed by `(seed, c)`, and chunk statistics are merged in
//! chunk order, so results are bit-identical for a given seed whatever the
//! number of worker threads.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dists::Distribution;
use crate::equilibrium::{bid_generic, AuctionSpec};
use crate::error::{Error, Result};

/// Auctions per RNG stream.
pub const CHUNK_SIZE: u64 = 8192;

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub spec: AuctionSpec,
    pub dist: Distribution,
    pub num_auctions: u64,
    pub seed: u64,
    /// Bids tried by the deviating bidder; strictly increasing.
    pub deviations: Vec<f64>,
    /// Valuation of the deviating bidder.
    pub x0: Option<f64>,
    pub workers: usize,
}

impl SimConfig {
    pub fn new(spec: AuctionSpec, dist: Distribution, num_auctions: u64, seed: u64) -> Self {
        SimConfig { spec, dist, num_auctions, seed, deviations: Vec::new(), x0: None, workers: 1 }
    }

    fn validate(&self) -> Result<()> {
        if self.num_auctions == 0 {
            return Err(Error::Config("num_auctions must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.deviations.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("deviation grid must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// Running mean and variance (Welford), mergeable in a fixed order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * self.n as f64 * other.n as f64 / n as f64;
        self.n = n;
    }

    fn estimate(&self) -> Estimate {
        let stderr = if self.n < 2 {
            f64::INFINITY
        } else {
            (self.m2 / (self.n - 1) as f64).sqrt() / (self.n as f64).sqrt()
        };
        Estimate { mean: self.mean, stderr, n: self.n }
    }
}

/// Sample mean with its standard error `stdev/√n` (`+∞` when `n = 1`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
}

/// Index of the highest bid (ties split uniformly at random) and the `k`th highest bid.
///
/// Any `1 ≤ k ≤ bids.len()` is accepted here, including `k = n`.
pub fn run_auction<R: Rng + ?Sized>(k: usize, bids: &[f64], rng: &mut R) -> Result<(usize, f64)> {
    if k == 0 || k > bids.len() {
        return Err(Error::InvalidAuction(format!("price rank {k} needs 1..={} bids", bids.len())));
    }
    if bids.iter().any(|b| b.is_nan()) {
        return Err(Error::domain("bid is NaN"));
    }
    let top = bids.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..bids.len()).filter(|&i| bids[i] == top).collect();
    let winner = if tied.len() == 1 { tied[0] } else { tied[rng.gen_range(0..tied.len())] };
    let mut sorted = bids.to_vec();
    Ok((winner, kth_largest(&mut sorted, k)))
}

fn kth_largest(buf: &mut [f64], k: usize) -> f64 {
    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    *kth
}

fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Runs `work` on every chunk and returns the per-chunk results in chunk order.
fn map_chunks<T: Send>(cfg: &SimConfig, work: impl Fn(u64, u64, &mut ChaCha8Rng) -> Result<T> + Sync) -> Result<Vec<T>> {
    let chunks = cfg.num_auctions.div_ceil(CHUNK_SIZE);
    let run = || {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let start = c * CHUNK_SIZE;
                let len = CHUNK_SIZE.min(cfg.num_auctions - start);
                work(c, len, &mut chunk_rng(cfg.seed, c))
            })
            .collect::<Result<Vec<T>>>()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(run)
}

fn draw_bid(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<f64> {
    let u: f64 = rng.sample(Open01);
    bid_generic(&cfg.spec, &cfg.dist, u)
}

/// Mean price when all `n` bidders play the equilibrium strategy.
pub fn estimate_revenue(cfg: &SimConfig) -> Result<Estimate> {
    cfg.validate()?;
    let n = cfg.spec.n();
    let k = cfg.spec.k();
    let parts = map_chunks(cfg, |_, len, rng| {
        let mut bids = vec![0.0; n];
        let mut m = Moments::default();
        for _ in 0..len {
            for b in bids.iter_mut() {
                *b = draw_bid(cfg, rng)?;
            }
            m.push(kth_largest(&mut bids, k));
        }
        Ok(m)
    })?;
    let mut total = Moments::default();
    for p in &parts {
        total.merge(p);
    }
    Ok(total.estimate())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayoffRow {
    pub bid: f64,
    pub mean_payoff: f64,
    pub stderr: f64,
    pub n_samples: u64,
}

impl From<(f64, Estimate)> for PayoffRow {
    fn from((bid, e): (f64, Estimate)) -> Self {
        PayoffRow { bid, mean_payoff: e.mean, stderr: e.stderr, n_samples: e.n }
    }
}

/// Payoff surface of one deviating bidder against equilibrium opponents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub x0: f64,
    pub equilibrium_bid: f64,
    pub equilibrium_payoff: PayoffRow,
    pub argmax_bid: f64,
    /// Largest grid payoff minus the equilibrium payoff.
    pub max_gain: f64,
    /// `max_gain ≤ 3 · equilibrium_payoff.stderr`.
    pub equilibrium_within_noise: bool,
    pub rows: Vec<PayoffRow>,
}

impl BestResponse {
    /// CSV with header `bid,mean_payoff,stderr,n_samples`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bid,mean_payoff,stderr,n_samples\n");
        for r in &self.rows {
            out.push_str(&format!("{:.16e},{:.16e},{:.16e},{}\n", r.bid, r.mean_payoff, r.stderr, r.n_samples));
        }
        out
    }
}

/// Scans the deviation grid with common random numbers: every bid faces the same opponents.
pub fn best_response_scan(cfg: &SimConfig) -> Result<BestResponse> {
    cfg.validate()?;
    let x0 = cfg.x0.ok_or_else(|| Error::Config("best-response mode needs a valuation x0".into()))?;
    if cfg.deviations.is_empty() {
        return Err(Error::Config("deviation grid is empty".into()));
    }
    if let Some(b) = cfg.deviations.iter().find(|b| !(**b >= 0.0)) {
        return Err(Error::domain(format!("deviation bid {b} is negative")));
    }
    let u0 = cfg.dist.cdf(x0)?;
    let beta0 = bid_generic(&cfg.spec, &cfg.dist, u0)?;
    let (n, k) = (cfg.spec.n(), cfg.spec.k());
    // deviations followed by the equilibrium bid
    let mut bids: Vec<f64> = cfg.deviations.clone();
    bids.push(beta0);

    let parts = map_chunks(cfg, |_, len, rng| {
        let mut stats = vec![Moments::default(); bids.len()];
        let mut opp = vec![0.0; n - 1];
        for _ in 0..len {
            for b in opp.iter_mut() {
                *b = draw_bid(cfg, rng)?;
            }
            let tie_draw: f64 = rng.gen();
            let top = opp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let ties = opp.iter().filter(|&&b| b == top).count();
            // when the deviator is highest, the kth bid overall is the (k−1)th among opponents
            let price = kth_largest(&mut opp, k - 1);
            for (s, &b) in stats.iter_mut().zip(&bids) {
                let wins = b > top || (b == top && tie_draw * ((ties + 1) as f64) < 1.0);
                s.push(if wins { x0 - price } else { 0.0 });
            }
        }
        Ok(stats)
    })?;

    let mut total = vec![Moments::default(); bids.len()];
    for p in &parts {
        for (t, s) in total.iter_mut().zip(p) {
            t.merge(s);
        }
    }
    let eq = PayoffRow::from((beta0, total.pop().expect("equilibrium slot").estimate()));
    let rows: Vec<PayoffRow> = cfg.deviations.iter().zip(&total).map(|(&b, m)| PayoffRow::from((b, m.estimate()))).collect();
    let best = rows
        .iter()
        .copied()
        .reduce(|a, b| if b.mean_payoff > a.mean_payoff { b } else { a })
        .expect("non-empty grid");
    let max_gain = best.mean_payoff - eq.mean_payoff;
    Ok(BestResponse {
        x0,
        equilibrium_bid: beta0,
        equilibrium_payoff: eq,
        argmax_bid: best.bid,
        max_gain,
        equilibrium_within_noise: max_gain <= 3.0 * eq.stderr,
        rows,
    })
}

/// Output of the `simulate` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub distribution: String,
    pub num_auctions: u64,
    pub seed: u64,
    pub workers: usize,
    pub spec: AuctionSpec,
    pub revenue: Estimate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_response: Option<BestResponse>,
}

impl SimulationReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report fields are all TOML-representable")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse { pos: e.span().map_or(0, |s| s.start), msg: e.message().to_string() })
    }
}

/// Revenue estimate, plus the best-response scan when `x0` is set.
pub fn simulate(cfg: &SimConfig) -> Result<SimulationReport> {
    let revenue = estimate_revenue(cfg)?;
    let best_response = if cfg.x0.is_some() { Some(best_response_scan(cfg)?) } else { None };
    Ok(SimulationReport {
        distribution: cfg.dist.id(),
        num_auctions: cfg.num_auctions,
        seed: cfg.seed,
        workers: cfg.workers,
        spec: cfg.spec,
        revenue,
        best_response,
    })
}
