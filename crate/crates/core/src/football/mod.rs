//! Football league model.
//!
//! Every team has a strength that is constant within a season. Goals follow
//! independent Poisson laws, `λ_H e^{x_j − x_k}` for the home side `j` and
//! `λ_A e^{x_k − x_j}` for the away side `k`. Between seasons the strengths of
//! retained teams are centered, scaled by `η` and perturbed with variance
//! `σ_s²`; promoted teams start afresh from `N(μ_p, σ_p²)`.
//!
//! A sample is laid out as
//! `[λ_H, λ_A, σ_p, σ_s, η, μ_p, x_1 …, x_2 …, …, x_t …]`, where `x_s` lists
//! the strengths of season `s` in that season's team order.

pub mod data;
pub mod table;

use std::collections::HashMap;
use std::f64::consts::PI;

use chrono::NaiveDate;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{contract, Error, Result};
use crate::rng::keyed;
use crate::store::Snapshot;
use crate::target::{weighted_mean, ModelPlugin, SampleKey, TargetStep};

pub use table::{rank_table, simulate_match, Standings};

pub type TeamId = usize;

/// Number of leading parameter slots in a sample.
pub const THETA_LEN: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub lambda_h: f64,
    pub lambda_a: f64,
    pub sigma_p: f64,
    pub sigma_s: f64,
    pub eta: f64,
    pub mu_p: f64,
}

impl Theta {
    pub const NAMES: [&'static str; THETA_LEN] =
        ["lambda_H", "lambda_A", "sigma_p", "sigma_s", "eta", "mu_p"];

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            lambda_h: v[0],
            lambda_a: v[1],
            sigma_p: v[2],
            sigma_s: v[3],
            eta: v[4],
            mu_p: v[5],
        }
    }

    pub fn to_array(&self) -> [f64; THETA_LEN] {
        [
            self.lambda_h,
            self.lambda_a,
            self.sigma_p,
            self.sigma_s,
            self.eta,
            self.mu_p,
        ]
    }

    pub fn is_valid(&self) -> bool {
        self.lambda_h > 0.0
            && self.lambda_a > 0.0
            && self.sigma_p > 0.0
            && self.sigma_s > 0.0
            && self.to_array().iter().all(|x| x.is_finite())
    }
}

/// A played match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub season: u64,
    pub date: NaiveDate,
    pub home: TeamId,
    pub away: TeamId,
    pub home_goals: u32,
    pub away_goals: u32,
}

/// What is known about a season when it opens: its teams and its schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonInfo {
    pub teams: Vec<TeamId>,
    pub fixtures: Vec<(TeamId, TeamId)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FootballBatch {
    NewSeason(SeasonInfo),
    Results(Vec<MatchResult>),
}

#[derive(Debug, Clone)]
struct Game {
    home: usize,
    away: usize,
    hg: f64,
    ag: f64,
    log_fact: f64,
}

#[derive(Debug, Clone)]
struct Season {
    teams: Vec<TeamId>,
    local: HashMap<TeamId, usize>,
    offset: usize,
    /// `(index this season, index last season)` for retained teams.
    retained: Vec<(usize, usize)>,
    promoted: Vec<usize>,
    games: Vec<Game>,
    remaining: Vec<(usize, usize)>,
    standings: Standings,
}

impl Season {
    fn plan(info: &SeasonInfo, prev: Option<&Season>, offset: usize) -> Result<Self> {
        let mut local = HashMap::new();
        for (i, &team) in info.teams.iter().enumerate() {
            if local.insert(team, i).is_some() {
                return Err(Error::Model(format!(
                    "team {team} listed twice in a season"
                )));
            }
        }
        if info.teams.len() < 2 {
            return Err(Error::Model("a season needs at least two teams".into()));
        }
        let mut retained = Vec::new();
        let mut promoted = Vec::new();
        for (i, team) in info.teams.iter().enumerate() {
            match prev.and_then(|p| p.local.get(team)) {
                Some(&j) => retained.push((i, j)),
                None => promoted.push(i),
            }
        }
        let mut remaining = Vec::with_capacity(info.fixtures.len());
        for (h, a) in &info.fixtures {
            match (local.get(h), local.get(a)) {
                (Some(&h), Some(&a)) if h != a => remaining.push((h, a)),
                _ => {
                    return Err(Error::Model(format!(
                        "fixture {h}-{a} involves an unknown team"
                    )))
                }
            }
        }
        Ok(Self {
            teams: info.teams.clone(),
            local,
            offset,
            retained,
            promoted,
            games: Vec::new(),
            remaining,
            standings: Standings::new(info.teams.len()),
        })
    }

    fn x<'a>(&self, value: &'a [f64]) -> &'a [f64] {
        &value[self.offset..self.offset + self.teams.len()]
    }

    fn game(&self, r: &MatchResult) -> Result<Game> {
        let (Some(&home), Some(&away)) = (self.local.get(&r.home), self.local.get(&r.away)) else {
            return Err(contract(format!(
                "result {}-{} involves a team outside the season",
                r.home, r.away
            )));
        };
        if home == away {
            return Err(contract("a team cannot play itself"));
        }
        Ok(Game {
            home,
            away,
            hg: r.home_goals as f64,
            ag: r.away_goals as f64,
            log_fact: ln_gamma(r.home_goals as f64 + 1.0) + ln_gamma(r.away_goals as f64 + 1.0),
        })
    }
}

fn game_loglik(g: &Game, x: &[f64], lh: f64, la: f64) -> f64 {
    game_loglik_ln(g, x, lh, la, lh.ln(), la.ln())
}

fn game_loglik_ln(g: &Game, x: &[f64], lh: f64, la: f64, ln_lh: f64, ln_la: f64) -> f64 {
    let d = x[g.home] - x[g.away];
    let e = d.exp();
    g.hg * (ln_lh + d) - lh * e + g.ag * (ln_la - d) - la / e - g.log_fact
}

fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * (2.0 * PI).ln() - sd.ln() - 0.5 * z * z
}

/// Teams, schedules and results revealed so far.
#[derive(Debug, Clone)]
pub struct League {
    seasons: Vec<Season>,
}

impl League {
    pub fn new(first: &SeasonInfo) -> Result<Self> {
        Ok(Self {
            seasons: vec![Season::plan(first, None, THETA_LEN)?],
        })
    }

    pub fn seasons(&self) -> usize {
        self.seasons.len()
    }

    pub fn dimension(&self) -> usize {
        let last = self.seasons.last().expect("at least one season");
        last.offset + last.teams.len()
    }

    pub fn teams(&self, season: usize) -> &[TeamId] {
        &self.seasons[season].teams
    }

    /// Strengths of season `s` (0-based) inside a sample.
    pub fn strengths<'a>(&self, value: &'a [f64], s: usize) -> &'a [f64] {
        self.seasons[s].x(value)
    }

    fn current(&self) -> &Season {
        self.seasons.last().expect("at least one season")
    }

    pub fn current_teams(&self) -> &[TeamId] {
        &self.current().teams
    }

    pub fn standings(&self) -> &Standings {
        &self.current().standings
    }

    pub fn remaining_fixtures(&self) -> usize {
        self.current().remaining.len()
    }

    pub fn total_results(&self) -> usize {
        self.seasons.iter().map(|s| s.games.len()).sum()
    }

    /// Mean home and away goals over every result so far.
    pub fn goal_rates(&self) -> Option<(f64, f64)> {
        let n = self.total_results();
        if n == 0 {
            return None;
        }
        let (h, a) = self
            .seasons
            .iter()
            .flat_map(|s| &s.games)
            .fold((0.0, 0.0), |(h, a), g| (h + g.hg, a + g.ag));
        Some((h / n as f64, a / n as f64))
    }

    pub fn open_season(&mut self, info: &SeasonInfo) -> Result<()> {
        let next = Season::plan(info, Some(self.current()), self.dimension())?;
        self.seasons.push(next);
        Ok(())
    }

    /// Adds results of the current season and strikes them off its remaining
    /// fixtures.
    pub fn add_results(&mut self, results: &[MatchResult]) -> Result<()> {
        let season = self.seasons.last_mut().expect("at least one season");
        let games: Vec<Game> = results
            .iter()
            .map(|r| season.game(r))
            .collect::<Result<_>>()?;
        for g in games {
            if let Some(pos) = season.remaining.iter().position(|&f| f == (g.home, g.away)) {
                season.remaining.swap_remove(pos);
            }
            season
                .standings
                .record(g.home, g.away, g.hg as u32, g.ag as u32);
            season.games.push(g);
        }
        Ok(())
    }

    fn poisson_season(&self, s: usize, value: &[f64]) -> f64 {
        let season = &self.seasons[s];
        let x = season.x(value);
        let (lh, la) = (value[0], value[1]);
        let (ln_lh, ln_la) = (lh.ln(), la.ln());
        season
            .games
            .iter()
            .map(|g| game_loglik_ln(g, x, lh, la, ln_lh, ln_la))
            .sum()
    }

    /// Log-density of season `s` given season `s − 1`, split into the
    /// retained and promoted parts.
    fn transition_terms(&self, s: usize, value: &[f64]) -> (f64, f64) {
        if s == 0 {
            return (0.0, 0.0);
        }
        let th = Theta::from_slice(value);
        let season = &self.seasons[s];
        let x = season.x(value);
        let prev = self.seasons[s - 1].x(value);
        let mut retained = 0.0;
        if !season.retained.is_empty() {
            let mean_prev = season.retained.iter().map(|&(_, j)| prev[j]).sum::<f64>()
                / season.retained.len() as f64;
            for &(i, j) in &season.retained {
                retained += normal_logpdf(x[i], th.eta * (prev[j] - mean_prev), th.sigma_s);
            }
        }
        let promoted = season
            .promoted
            .iter()
            .map(|&i| normal_logpdf(x[i], th.mu_p, th.sigma_p))
            .sum();
        (retained, promoted)
    }

    /// `log p(λ_H) + log p(λ_A)` with Gamma(shape 5, scale 5) and
    /// Gamma(shape 2, scale 1), plus the Jeffreys terms `−log σ_s − log σ_p`.
    pub fn log_prior(theta: &Theta) -> f64 {
        fn gamma_logpdf(x: f64, shape: f64, scale: f64) -> f64 {
            (shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()
        }
        gamma_logpdf(theta.lambda_h, 5.0, 5.0) + gamma_logpdf(theta.lambda_a, 2.0, 1.0)
            - theta.sigma_s.ln()
            - theta.sigma_p.ln()
    }

    /// Sum of the Poisson log-likelihoods of every result so far.
    pub fn log_likelihood(&self, value: &[f64]) -> f64 {
        (0..self.seasons.len())
            .map(|s| self.poisson_season(s, value))
            .sum()
    }

    /// Unnormalized log posterior of a sample; `−∞` outside the support.
    pub fn log_posterior(&self, value: &[f64]) -> f64 {
        let th = Theta::from_slice(value);
        if !th.is_valid() {
            return f64::NEG_INFINITY;
        }
        let mut lp = Self::log_prior(&th) + self.log_likelihood(value);
        for s in 1..self.seasons.len() {
            let (r, p) = self.transition_terms(s, value);
            lp += r + p;
        }
        lp
    }

    /// Terms of the log posterior that involve the θ slots moved by `block`.
    fn theta_terms(&self, block: BlockKind, value: &[f64]) -> f64 {
        let th = Theta::from_slice(value);
        if !th.is_valid() {
            return f64::NEG_INFINITY;
        }
        let mut lp = Self::log_prior(&th);
        match block {
            BlockKind::LambdaH | BlockKind::LambdaA => lp += self.log_likelihood(value),
            BlockKind::Evolution => {
                lp += (1..self.seasons.len())
                    .map(|s| self.transition_terms(s, value).0)
                    .sum::<f64>()
            }
            BlockKind::Promotion => {
                lp += (1..self.seasons.len())
                    .map(|s| self.transition_terms(s, value).1)
                    .sum::<f64>()
            }
            BlockKind::Strength => lp = self.log_posterior(value),
        }
        lp
    }

    /// Terms of the log posterior that involve the strengths of season `s`.
    fn season_terms(&self, s: usize, value: &[f64]) -> f64 {
        let mut lp = self.poisson_season(s, value);
        let (r, p) = self.transition_terms(s, value);
        lp += r + p;
        if s + 1 < self.seasons.len() {
            let (r, p) = self.transition_terms(s + 1, value);
            lp += r + p;
        }
        lp
    }

    /// Log-likelihood of a batch of results of the current season.
    pub fn batch_loglik(&self, value: &[f64], batch: &[MatchResult]) -> Result<f64> {
        let season = self.current();
        let x = season.x(value);
        let mut ll = 0.0;
        for r in batch {
            ll += game_loglik(&season.game(r)?, x, value[0], value[1]);
        }
        Ok(ll)
    }

    /// Extends a sample by the strengths of the season described by `info`.
    pub fn season_transition<R: Rng + ?Sized>(
        &self,
        value: &[f64],
        info: &SeasonInfo,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let prev = self.current();
        let next = Season::plan(info, Some(prev), self.dimension())?;
        let th = Theta::from_slice(value);
        let xp = prev.x(value);
        let mut x = vec![0.0; next.teams.len()];
        if !next.retained.is_empty() {
            let mean_prev =
                next.retained.iter().map(|&(_, j)| xp[j]).sum::<f64>() / next.retained.len() as f64;
            for &(i, j) in &next.retained {
                let z: f64 = rng.sample(StandardNormal);
                x[i] = th.eta * (xp[j] - mean_prev) + th.sigma_s * z;
            }
        }
        for &i in &next.promoted {
            let z: f64 = rng.sample(StandardNormal);
            x[i] = th.mu_p + th.sigma_p * z;
        }
        let mut out = value.to_vec();
        out.extend(x);
        Ok(out)
    }

    /// Simulates the rest of the current season once and returns the final
    /// rank of every team (1-based, season team order).
    pub fn simulate_final_ranks<R: Rng + ?Sized>(&self, value: &[f64], rng: &mut R) -> Vec<usize> {
        let season = self.current();
        let x = season.x(value);
        let mut table = season.standings.clone();
        for &(h, a) in &season.remaining {
            let (hg, ag) = simulate_match(x[h], x[a], value[0], value[1], rng);
            table.record(h, a, hg, ag);
        }
        table.ranks()
    }
}

/// Proposal variances of the block Metropolis-Hastings kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalScales {
    pub strength: f64,
    pub log_lambda_h: f64,
    pub log_lambda_a: f64,
    pub eta: f64,
    pub log_sigma_s: f64,
    pub mu_p: f64,
    pub log_sigma_p: f64,
}

impl Default for ProposalScales {
    fn default() -> Self {
        Self {
            strength: 0.0002,
            log_lambda_h: 0.01 * 0.01,
            log_lambda_a: 0.01 * 0.01,
            eta: 0.01,
            log_sigma_s: 0.005,
            mu_p: 0.0002,
            log_sigma_p: 0.002,
        }
    }
}

impl ProposalScales {
    /// Multiplies the variances of one block by `factor`.
    fn scale_block(&mut self, block: BlockKind, factor: f64) {
        match block {
            BlockKind::Strength => self.strength *= factor,
            BlockKind::LambdaH => self.log_lambda_h *= factor,
            BlockKind::LambdaA => self.log_lambda_a *= factor,
            BlockKind::Evolution => {
                self.eta *= factor;
                self.log_sigma_s *= factor;
            }
            BlockKind::Promotion => {
                self.mu_p *= factor;
                self.log_sigma_p *= factor;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Strength,
    LambdaH,
    LambdaA,
    /// `(η, σ_s)`.
    Evolution,
    /// `(μ_p, σ_p)`.
    Promotion,
}

impl BlockKind {
    pub const ALL: [BlockKind; 5] = [
        BlockKind::Strength,
        BlockKind::LambdaH,
        BlockKind::LambdaA,
        BlockKind::Evolution,
        BlockKind::Promotion,
    ];
}

fn gauss<R: Rng + ?Sized>(rng: &mut R, var: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * var.sqrt()
}

/// Probability of proposing a season's strengths rather than a parameter
/// block.
pub const STRENGTH_PROPOSAL_PROB: f64 = 0.8;

/// One block Metropolis-Hastings step. Returns the block tried and whether
/// the proposal was accepted.
pub fn mh_step<R: Rng + ?Sized>(
    league: &League,
    scales: &ProposalScales,
    value: &mut [f64],
    rng: &mut R,
) -> (BlockKind, bool) {
    let u: f64 = rng.random();
    if u < STRENGTH_PROPOSAL_PROB {
        let s = rng.random_range(0..league.seasons());
        let season = &league.seasons[s];
        let range = season.offset..season.offset + season.teams.len();
        let old_terms = league.season_terms(s, value);
        let old: Vec<f64> = value[range.clone()].to_vec();
        for v in &mut value[range.clone()] {
            *v += gauss(rng, scales.strength);
        }
        let log_alpha = league.season_terms(s, value) - old_terms;
        let accept = accept(log_alpha, rng);
        if !accept {
            value[range].copy_from_slice(&old);
        }
        return (BlockKind::Strength, accept);
    }
    let block = match rng.random_range(0..4) {
        0 => BlockKind::LambdaH,
        1 => BlockKind::LambdaA,
        2 => BlockKind::Evolution,
        _ => BlockKind::Promotion,
    };
    let old_lp = league.theta_terms(block, value);
    let old: [f64; THETA_LEN] = value[..THETA_LEN].try_into().expect("theta slots");
    // Log-normal proposals are asymmetric: q(x*→x)/q(x→x*) = x*/x.
    let mut log_q_ratio = 0.0;
    let mut log_normal = |slot: usize, var: f64, value: &mut [f64], rng: &mut R| {
        let eps = gauss(rng, var);
        value[slot] *= eps.exp();
        log_q_ratio += eps;
    };
    match block {
        BlockKind::LambdaH => log_normal(0, scales.log_lambda_h, value, rng),
        BlockKind::LambdaA => log_normal(1, scales.log_lambda_a, value, rng),
        BlockKind::Evolution => {
            value[4] += gauss(rng, scales.eta);
            log_normal(3, scales.log_sigma_s, value, rng);
        }
        BlockKind::Promotion => {
            value[5] += gauss(rng, scales.mu_p);
            log_normal(2, scales.log_sigma_p, value, rng);
        }
        BlockKind::Strength => unreachable!(),
    }
    let log_alpha = league.theta_terms(block, value) - old_lp + log_q_ratio;
    let accept = accept(log_alpha, rng);
    if !accept {
        value[..THETA_LEN].copy_from_slice(&old);
    }
    (block, accept)
}

fn accept<R: Rng + ?Sized>(log_alpha: f64, rng: &mut R) -> bool {
    if log_alpha.is_nan() {
        return false;
    }
    log_alpha >= 0.0 || rng.random::<f64>().ln() < log_alpha
}

/// The football model at its current target.
#[derive(Debug, Clone)]
pub struct Football {
    league: League,
    step: TargetStep,
    scales: ProposalScales,
    predict_seed: u64,
}

impl Football {
    /// The model at target 1: the first season is open and nothing has been
    /// played. `predict_seed` keys the per-sample season simulations.
    pub fn new(first: &SeasonInfo, predict_seed: u64) -> Result<Self> {
        Ok(Self {
            league: League::new(first)?,
            step: TargetStep::first(),
            scales: ProposalScales::default(),
            predict_seed,
        })
    }

    pub fn league(&self) -> &League {
        &self.league
    }

    pub fn target(&self) -> TargetStep {
        self.step
    }

    pub fn scales(&self) -> &ProposalScales {
        &self.scales
    }

    pub fn set_scales(&mut self, scales: ProposalScales) {
        self.scales = scales;
    }

    /// Number of teams in the current season; the estimand has this many
    /// squared entries.
    pub fn teams(&self) -> usize {
        self.league.current_teams().len()
    }

    /// Starting parameters: observed goal rates (or 1.5 and 1.1 before any
    /// result), `σ_p = σ_s = 0.1`, `η = 1`, `μ_p = 0`.
    pub fn initial_theta(&self) -> Theta {
        let (lh, la) = self
            .league
            .goal_rates()
            .map(|(h, a)| (h.max(0.1), a.max(0.1)))
            .unwrap_or((1.5, 1.1));
        Theta {
            lambda_h: lh,
            lambda_a: la,
            sigma_p: 0.1,
            sigma_s: 0.1,
            eta: 1.0,
            mu_p: 0.0,
        }
    }

    /// Rescales each block's proposal variances until its acceptance rate
    /// sits near `target`. Returns the tuned scales and the chain state at the
    /// end of the run; the model keeps the tuned scales.
    pub fn tune_proposals<R: Rng + ?Sized>(
        &mut self,
        state: &mut [f64],
        rounds: usize,
        steps_per_round: usize,
        target: f64,
        rng: &mut R,
    ) -> ProposalScales {
        for _ in 0..rounds {
            let mut tried: HashMap<BlockKind, (usize, usize)> = HashMap::new();
            for _ in 0..steps_per_round {
                let (b, ok) = mh_step(&self.league, &self.scales, state, rng);
                let e = tried.entry(b).or_default();
                e.0 += 1;
                e.1 += ok as usize;
            }
            for b in BlockKind::ALL {
                if let Some(&(n, acc)) = tried.get(&b) {
                    if n >= 20 {
                        let rate = acc as f64 / n as f64;
                        // Variance factor e^{4(rate − target)}: halves the
                        // step size at rate 0 and roughly triples it at 0.5.
                        let factor = (4.0 * (rate - target)).exp().clamp(0.25, 4.0);
                        self.scales.scale_block(b, factor);
                    }
                }
            }
        }
        self.scales
    }

    /// One-hot final ranks of a sample: entry `i·n + r − 1` is 1 when team
    /// `i` finishes `r`-th in this sample's simulated season.
    pub fn rank_indicator<R: Rng + ?Sized>(&self, value: &[f64], rng: &mut R) -> Vec<f64> {
        let n = self.teams();
        let ranks = self.league.simulate_final_ranks(value, rng);
        let mut out = vec![0.0; n * n];
        for (i, r) in ranks.into_iter().enumerate() {
            out[i * n + r - 1] = 1.0;
        }
        out
    }

    /// The parameters plus the current season's strengths; the statistics
    /// used to tune the thinning interval.
    pub fn tuning_vector(&self, value: &[f64]) -> Vec<f64> {
        let s = self.league.seasons() - 1;
        let mut out = value[..THETA_LEN].to_vec();
        out.extend_from_slice(self.league.strengths(value, s));
        out
    }
}

impl ModelPlugin for Football {
    type Batch = FootballBatch;

    fn dimension(&self) -> usize {
        self.league.dimension()
    }

    fn initial_state(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension()];
        v[..THETA_LEN].copy_from_slice(&self.initial_theta().to_array());
        v
    }

    fn mcmc_step<R: Rng + ?Sized>(&self, state: &mut Vec<f64>, rng: &mut R) -> Result<()> {
        if state.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: state.len(),
            });
        }
        mh_step(&self.league, &self.scales, state, rng);
        Ok(())
    }

    fn log_incremental_weight(&self, value: &[f64], batch: &FootballBatch) -> Result<f64> {
        match batch {
            FootballBatch::Results(r) => self.league.batch_loglik(value, r),
            FootballBatch::NewSeason(_) => {
                Err(contract("a new season is a transition, not a reweight"))
            }
        }
    }

    fn transition<R: Rng + ?Sized>(
        &self,
        value: &[f64],
        batch: &FootballBatch,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        match batch {
            FootballBatch::NewSeason(info) => self.league.season_transition(value, info, rng),
            FootballBatch::Results(_) => Err(contract("results do not open a season")),
        }
    }

    fn advance(&mut self, step: &TargetStep, batch: FootballBatch) -> Result<()> {
        if !self.step.is_successor(step) {
            return Err(contract(format!(
                "model at target {} cannot move to {}",
                self.step.n, step.n
            )));
        }
        match (&batch, step.requires_transition) {
            (FootballBatch::NewSeason(info), true) => self.league.open_season(info)?,
            (FootballBatch::Results(r), false) => self.league.add_results(r)?,
            _ => return Err(contract("batch kind does not match the target step")),
        }
        self.step = *step;
        Ok(())
    }

    fn estimand(&self, value: &[f64], key: SampleKey) -> Vec<f64> {
        let mut rng = keyed(self.predict_seed, key.production_seq, key.target);
        self.rank_indicator(value, &mut rng)
    }

    fn tuning_statistics(&self, value: &[f64], _key: SampleKey) -> Vec<f64> {
        self.tuning_vector(value)
    }

    fn auxiliary(&self, value: &[f64]) -> Vec<f64> {
        value[..THETA_LEN].to_vec()
    }
}

/// Rank probabilities `P[team][rank]` for the current season.
#[derive(Debug, Clone, PartialEq)]
pub struct RankDistribution {
    pub teams: Vec<TeamId>,
    pub probs: Vec<Vec<f64>>,
}

impl RankDistribution {
    pub fn from_flat(teams: Vec<TeamId>, flat: &[f64]) -> Self {
        let n = teams.len();
        let probs = (0..n).map(|i| flat[i * n..(i + 1) * n].to_vec()).collect();
        Self { teams, probs }
    }

    /// Largest deviation of any row or column sum from 1.
    pub fn stochasticity_defect(&self) -> f64 {
        let n = self.probs.len();
        let rows = self
            .probs
            .iter()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs());
        let cols = (0..n).map(|j| (self.probs.iter().map(|r| r[j]).sum::<f64>() - 1.0).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }
}

/// Weighted average of the per-sample rank indicators over a snapshot.
pub fn predict_rank_distribution(
    model: &Football,
    snapshot: &Snapshot,
) -> Result<RankDistribution> {
    let weights = snapshot.weights();
    let values: Vec<Vec<f64>> = snapshot
        .records
        .iter()
        .map(|r| {
            if r.weight > 0.0 {
                model.estimand(
                    &r.value,
                    SampleKey {
                        production_seq: r.production_seq,
                        target: snapshot.target,
                    },
                )
            } else {
                Vec::new()
            }
        })
        .collect();
    let flat = weighted_mean(&weights, &values)?;
    Ok(RankDistribution::from_flat(
        model.league.current_teams().to_vec(),
        &flat,
    ))
}
