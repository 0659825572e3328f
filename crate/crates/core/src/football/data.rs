//! Match-result files, reveal schedules and a synthetic league generator.
//!
//! The file format is a CSV with header
//! `season,date,home,away,home_goals,away_goals`, one row per match in
//! chronological order. Dates are ISO `YYYY-MM-DD`. Teams are identified by
//! name and numbered in order of first appearance.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{FootballBatch, MatchResult, SeasonInfo, Standings, TeamId, Theta};
use crate::error::{Error, Result};
use crate::fixtures::double_round_robin;
use crate::target::TargetStep;

pub const HEADER: [&str; 6] = ["season", "date", "home", "away", "home_goals", "away_goals"];

#[derive(Debug, Clone, PartialEq)]
pub struct SeasonData {
    pub label: String,
    pub teams: Vec<TeamId>,
    pub results: Vec<MatchResult>,
}

impl SeasonData {
    /// The season as known when it opens: every match of the file is a
    /// scheduled fixture.
    pub fn info(&self) -> SeasonInfo {
        SeasonInfo {
            teams: self.teams.clone(),
            fixtures: self.results.iter().map(|r| (r.home, r.away)).collect(),
        }
    }

    /// Final table ranks (1-based, in `teams` order).
    pub fn final_ranks(&self) -> Vec<usize> {
        let local: HashMap<TeamId, usize> = self
            .teams
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, i))
            .collect();
        let mut table = Standings::new(self.teams.len());
        for r in &self.results {
            table.record(local[&r.home], local[&r.away], r.home_goals, r.away_goals);
        }
        table.ranks()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.results.first().map(|r| r.date)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LeagueData {
    pub team_names: Vec<String>,
    pub seasons: Vec<SeasonData>,
}

impl LeagueData {
    pub fn total_matches(&self) -> usize {
        self.seasons.iter().map(|s| s.results.len()).sum()
    }

    pub fn read_csv<R: Read>(reader: R, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut data = LeagueData::default();
        let mut team_ids: HashMap<String, TeamId> = HashMap::new();
        let mut season_ids: HashMap<String, usize> = HashMap::new();
        let parse_err = |line: u64, message: String| Error::Parse {
            path: source.into(),
            line: line as usize,
            message,
        };
        let mut seen_header = false;
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            if !seen_header {
                let fields: Vec<&str> = row.iter().collect();
                if fields != HEADER {
                    return Err(parse_err(
                        line,
                        format!("expected header {}", HEADER.join(",")),
                    ));
                }
                seen_header = true;
                continue;
            }
            if row.len() != HEADER.len() {
                return Err(parse_err(
                    line,
                    format!("expected 6 fields, found {}", row.len()),
                ));
            }
            let date = NaiveDate::parse_from_str(&row[1], "%Y-%m-%d")
                .map_err(|e| parse_err(line, format!("bad date '{}': {e}", &row[1])))?;
            let goals = |i: usize| {
                row[i]
                    .parse::<u32>()
                    .map_err(|_| parse_err(line, format!("bad goal count '{}'", &row[i])))
            };
            let (hg, ag) = (goals(4)?, goals(5)?);
            if row[2].is_empty() || row[3].is_empty() || row[2] == row[3] {
                return Err(parse_err(
                    line,
                    "home and away must be two different teams".into(),
                ));
            }
            let mut team = |name: &str| {
                *team_ids.entry(name.to_string()).or_insert_with(|| {
                    data.team_names.push(name.to_string());
                    data.team_names.len() - 1
                })
            };
            let (home, away) = (team(&row[2]), team(&row[3]));
            let s = *season_ids.entry(row[0].to_string()).or_insert_with(|| {
                data.seasons.push(SeasonData {
                    label: row[0].to_string(),
                    teams: Vec::new(),
                    results: Vec::new(),
                });
                data.seasons.len() - 1
            });
            if s + 1 != data.seasons.len() {
                return Err(parse_err(
                    line,
                    format!("season '{}' resumes after a later season", &row[0]),
                ));
            }
            let season = &mut data.seasons[s];
            if let Some(prev) = season.results.last() {
                if date < prev.date {
                    return Err(parse_err(
                        line,
                        "rows are not in chronological order".into(),
                    ));
                }
            }
            for t in [home, away] {
                if !season.teams.contains(&t) {
                    season.teams.push(t);
                }
            }
            season.results.push(MatchResult {
                season: s as u64 + 1,
                date,
                home,
                away,
                home_goals: hg,
                away_goals: ag,
            });
        }
        Ok(data)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file, &path.display().to_string())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(HEADER)?;
        for season in &self.seasons {
            for r in &season.results {
                w.write_record([
                    season.label.clone(),
                    r.date.format("%Y-%m-%d").to_string(),
                    self.team_names[r.home].clone(),
                    self.team_names[r.away].clone(),
                    r.home_goals.to_string(),
                    r.away_goals.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// How results of a revealed season are grouped into data batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatchMode {
    /// One match per batch.
    Single,
    /// Fixed windows of this many days, anchored at the season's first match.
    Days(u32),
}

impl FromStr for BatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" | "individual" => Ok(BatchMode::Single),
            _ => s
                .strip_suffix('d')
                .and_then(|d| d.parse::<u32>().ok())
                .filter(|&d| d > 0)
                .map(BatchMode::Days)
                .ok_or_else(|| Error::Config(format!("unknown batch mode '{s}'"))),
        }
    }
}

impl fmt::Display for BatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchMode::Single => write!(f, "single"),
            BatchMode::Days(d) => write!(f, "{d}d"),
        }
    }
}

/// Splits one season's results into batches. Empty windows produce no batch.
pub fn season_batches(season: &SeasonData, mode: BatchMode) -> Vec<Vec<MatchResult>> {
    match mode {
        BatchMode::Single => season.results.iter().map(|r| vec![r.clone()]).collect(),
        BatchMode::Days(days) => {
            let Some(start) = season.first_date() else {
                return Vec::new();
            };
            let mut out: Vec<Vec<MatchResult>> = Vec::new();
            let mut current = None;
            for r in &season.results {
                let window = (r.date - start).num_days() / days as i64;
                if current != Some(window) {
                    out.push(Vec::new());
                    current = Some(window);
                }
                out.last_mut().expect("pushed above").push(r.clone());
            }
            out
        }
    }
}

/// Every result batch of every season, in order.
pub fn ingest_results(data: &LeagueData, mode: BatchMode) -> Vec<Vec<MatchResult>> {
    data.seasons
        .iter()
        .flat_map(|s| season_batches(s, mode))
        .collect()
}

/// The order in which data reach the system.
#[derive(Debug, Clone)]
pub struct RevealPlan {
    /// Season opened at target 1.
    pub first: SeasonInfo,
    /// Absorbed before sampling starts, one batch per initial season.
    pub init: Vec<(TargetStep, FootballBatch)>,
    /// Revealed one at a time while the system runs.
    pub reveal: Vec<(TargetStep, FootballBatch)>,
}

impl RevealPlan {
    /// Number of result batches among the revealed steps.
    pub fn result_batches(&self) -> usize {
        self.reveal
            .iter()
            .filter(|(_, b)| matches!(b, FootballBatch::Results(_)))
            .count()
    }
}

pub fn reveal_plan(data: &LeagueData, init_seasons: usize, mode: BatchMode) -> Result<RevealPlan> {
    if data.seasons.is_empty() {
        return Err(Error::Config("the match file holds no season".into()));
    }
    if init_seasons == 0 || init_seasons > data.seasons.len() {
        return Err(Error::Config(format!(
            "init_seasons must be between 1 and {}, got {init_seasons}",
            data.seasons.len()
        )));
    }
    let mut step = TargetStep::first();
    let mut init = Vec::new();
    let mut reveal = Vec::new();
    for (s, season) in data.seasons.iter().enumerate() {
        let out = if s < init_seasons {
            &mut init
        } else {
            &mut reveal
        };
        if s > 0 {
            step = step.next_state();
            out.push((step, FootballBatch::NewSeason(season.info())));
        }
        let batches = if s < init_seasons {
            vec![season.results.clone()]
        } else {
            season_batches(season, mode)
        };
        for b in batches.into_iter().filter(|b| !b.is_empty()) {
            step = step.next_batch();
            out.push((step, FootballBatch::Results(b)));
        }
    }
    Ok(RevealPlan {
        first: data.seasons[0].info(),
        init,
        reveal,
    })
}

/// Match dates for a season of `rounds` rounds starting on a Saturday.
///
/// Weekend rounds sit on days `7w..7w+2`; every fifth week also has a
/// midweek round on days `7w+3..7w+4`.
pub fn season_calendar<R: Rng + ?Sized>(
    rounds: &[Vec<(usize, usize)>],
    start: NaiveDate,
    rng: &mut R,
) -> Vec<Vec<NaiveDate>> {
    let mut out = Vec::with_capacity(rounds.len());
    let mut week = 0u64;
    let mut midweek_pending = false;
    for round in rounds {
        let (base, spread) = if midweek_pending {
            midweek_pending = false;
            (7 * week + 3, 2)
        } else {
            (7 * week, 3)
        };
        let mut dates: Vec<NaiveDate> = round
            .iter()
            .map(|_| start + Days::new(base + rng.random_range(0..spread)))
            .collect();
        dates.sort();
        out.push(dates);
        if base % 7 == 0 && week % 5 == 2 {
            midweek_pending = true;
        } else {
            week += 1;
        }
    }
    out
}

fn first_saturday_of_august(year: i32) -> NaiveDate {
    let mut d = NaiveDate::from_ymd_opt(year, 8, 1).expect("valid date");
    while d.weekday() != Weekday::Sat {
        d = d.succ_opt().expect("valid date");
    }
    d
}

/// A league simulated from the model with known parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLeague {
    pub teams: usize,
    /// Teams replaced at the bottom of the table after every season.
    pub promoted: usize,
    pub seasons: usize,
    pub theta: Theta,
    /// Standard deviation of the first season's strengths.
    pub initial_sd: f64,
    pub first_year: i32,
}

impl SyntheticLeague {
    /// Ten teams, three promoted per season, five seasons.
    pub fn desk() -> Self {
        Self {
            teams: 10,
            promoted: 3,
            seasons: 5,
            theta: Theta {
                lambda_h: 1.5,
                lambda_a: 1.1,
                sigma_p: 0.4,
                sigma_s: 0.3,
                eta: 0.9,
                mu_p: -0.2,
            },
            initial_sd: 0.5,
            first_year: 2005,
        }
    }

    /// Twenty teams, three promoted per season, eight seasons.
    pub fn full_size() -> Self {
        Self {
            teams: 20,
            promoted: 3,
            seasons: 8,
            ..Self::desk()
        }
    }

    /// Simulates the league. Also returns the true strengths of every season
    /// in that season's team order.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(LeagueData, Vec<Vec<f64>>)> {
        if self.teams < 2 || self.promoted >= self.teams || self.seasons == 0 {
            return Err(Error::Config(
                "synthetic league needs 2+ teams and fewer promotions than teams".into(),
            ));
        }
        let th = self.theta;
        let mut data = LeagueData::default();
        let mut truths = Vec::new();
        let name = |data: &mut LeagueData| {
            data.team_names
                .push(format!("Team{:02}", data.team_names.len() + 1));
            data.team_names.len() - 1
        };
        let mut teams: Vec<TeamId> = (0..self.teams).map(|_| name(&mut data)).collect();
        let mut x: Vec<f64> = (0..self.teams)
            .map(|_| self.initial_sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        for s in 0..self.seasons {
            let year = self.first_year + s as i32;
            let rounds = double_round_robin(self.teams);
            let dates = season_calendar(&rounds, first_saturday_of_august(year), rng);
            let mut results = Vec::new();
            for (round, days) in rounds.iter().zip(&dates) {
                for (&(h, a), &date) in round.iter().zip(days) {
                    let (hg, ag) = super::simulate_match(x[h], x[a], th.lambda_h, th.lambda_a, rng);
                    results.push(MatchResult {
                        season: s as u64 + 1,
                        date,
                        home: teams[h],
                        away: teams[a],
                        home_goals: hg,
                        away_goals: ag,
                    });
                }
            }
            results.sort_by_key(|r| r.date);
            let season = SeasonData {
                label: format!("{}/{:02}", year, (year + 1) % 100),
                teams: teams.clone(),
                results,
            };
            truths.push(x.clone());
            let ranks = season.final_ranks();
            data.seasons.push(season);

            // Relegate the bottom of the table and draw the next season.
            let kept: Vec<usize> = (0..self.teams)
                .filter(|&i| ranks[i] <= self.teams - self.promoted)
                .collect();
            let mean = kept.iter().map(|&i| x[i]).sum::<f64>() / kept.len() as f64;
            let mut next_teams: Vec<TeamId> = kept.iter().map(|&i| teams[i]).collect();
            let mut next_x: Vec<f64> = kept
                .iter()
                .map(|&i| {
                    th.eta * (x[i] - mean) + th.sigma_s * rng.sample::<f64, _>(StandardNormal)
                })
                .collect();
            for _ in 0..self.promoted {
                next_teams.push(name(&mut data));
                next_x.push(th.mu_p + th.sigma_p * rng.sample::<f64, _>(StandardNormal));
            }
            teams = next_teams;
            x = next_x;
        }
        Ok((data, truths))
    }
}
