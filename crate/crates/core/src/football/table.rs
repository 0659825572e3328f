//! League tables and match simulation.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

/// Draws `(home goals, away goals)` with means `λ_H e^{x_h − x_a}` and
/// `λ_A e^{x_a − x_h}`.
pub fn simulate_match<R: Rng + ?Sized>(
    x_home: f64,
    x_away: f64,
    lambda_h: f64,
    lambda_a: f64,
    rng: &mut R,
) -> (u32, u32) {
    let diff = x_home - x_away;
    (
        poisson(lambda_h * diff.exp(), rng),
        poisson(lambda_a * (-diff).exp(), rng),
    )
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if !(mean.is_finite() && mean > 0.0) {
        return 0;
    }
    Poisson::new(mean)
        .map(|p| p.sample(rng) as u32)
        .unwrap_or(0)
}

/// Points, goal difference and goals scored per team.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Standings {
    pub points: Vec<i64>,
    pub goal_diff: Vec<i64>,
    pub goals_for: Vec<i64>,
}

impl Standings {
    pub fn new(teams: usize) -> Self {
        Self {
            points: vec![0; teams],
            goal_diff: vec![0; teams],
            goals_for: vec![0; teams],
        }
    }

    /// Three points for a win, one for a draw.
    pub fn record(&mut self, home: usize, away: usize, hg: u32, ag: u32) {
        let (hg, ag) = (hg as i64, ag as i64);
        self.goals_for[home] += hg;
        self.goals_for[away] += ag;
        self.goal_diff[home] += hg - ag;
        self.goal_diff[away] += ag - hg;
        match hg.cmp(&ag) {
            std::cmp::Ordering::Greater => self.points[home] += 3,
            std::cmp::Ordering::Less => self.points[away] += 3,
            std::cmp::Ordering::Equal => {
                self.points[home] += 1;
                self.points[away] += 1;
            }
        }
    }

    pub fn ranks(&self) -> Vec<usize> {
        rank_table(&self.points, &self.goal_diff, &self.goals_for)
    }
}

/// 1-based rank of every team: points, then goal difference, then goals
/// scored, all descending; remaining ties go to the lower team index.
pub fn rank_table(points: &[i64], goal_diff: &[i64], goals_for: &[i64]) -> Vec<usize> {
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points[b]
            .cmp(&points[a])
            .then(goal_diff[b].cmp(&goal_diff[a]))
            .then(goals_for[b].cmp(&goals_for[a]))
            .then(a.cmp(&b))
    });
    let mut ranks = vec![0; n];
    for (pos, team) in order.into_iter().enumerate() {
        ranks[team] = pos + 1;
    }
    ranks
}
