//! Double round-robin schedules, shared by the football model and the
//! football-shaped observation matrix of the linear Gaussian model.

/// Rounds of a double round robin between teams `0..n` built with the circle
/// method. Every ordered pair `(home, away)` appears exactly once; the second
/// half of the season mirrors the first with venues swapped. For odd `n` one
/// team rests each round.
pub fn double_round_robin(n: usize) -> Vec<Vec<(usize, usize)>> {
    if n < 2 {
        return Vec::new();
    }
    let slots = n + n % 2;
    let bye = if n % 2 == 1 { Some(n) } else { None };
    let mut ring: Vec<usize> = (0..slots).collect();
    let mut first = Vec::with_capacity(slots - 1);
    for round in 0..slots - 1 {
        let mut games = Vec::with_capacity(slots / 2);
        for i in 0..slots / 2 {
            let (a, b) = (ring[i], ring[slots - 1 - i]);
            if Some(a) == bye || Some(b) == bye {
                continue;
            }
            // Alternate venues so no team plays every first-half game at home.
            if (round + i) % 2 == 0 {
                games.push((a, b));
            } else {
                games.push((b, a));
            }
        }
        first.push(games);
        ring[1..].rotate_right(1);
    }
    let second: Vec<Vec<(usize, usize)>> = first
        .iter()
        .map(|g| g.iter().map(|&(h, a)| (a, h)).collect())
        .collect();
    first.into_iter().chain(second).collect()
}

/// The schedule flattened in round order.
pub fn double_round_robin_flat(n: usize) -> Vec<(usize, usize)> {
    double_round_robin(n).into_iter().flatten().collect()
}
