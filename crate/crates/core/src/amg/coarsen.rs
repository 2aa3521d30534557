use super::strength::StrengthGraph;

/// Coarse/fine labeling of the unknowns of one level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splitting {
    is_coarse: Vec<bool>,
}

impl Splitting {
    pub fn from_flags(is_coarse: Vec<bool>) -> Self {
        Self { is_coarse }
    }

    pub fn all_coarse(n: usize) -> Self {
        Self {
            is_coarse: vec![true; n],
        }
    }

    pub fn len(&self) -> usize {
        self.is_coarse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.is_coarse.is_empty()
    }

    pub fn is_coarse(&self, i: usize) -> bool {
        self.is_coarse[i]
    }

    pub fn flags(&self) -> &[bool] {
        &self.is_coarse
    }

    pub fn set_coarse(&mut self, i: usize) {
        self.is_coarse[i] = true;
    }

    pub fn n_coarse(&self) -> usize {
        self.is_coarse.iter().filter(|&&c| c).count()
    }

    pub fn coarse_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_coarse[i]).collect()
    }

    pub fn fine_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_coarse[i]).collect()
    }

    /// `map[i] = Some(position among coarse nodes)`.
    pub fn coarse_map(&self) -> Vec<Option<usize>> {
        let mut next = 0;
        self.is_coarse
            .iter()
            .map(|&c| {
                c.then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    }
}

/// Visits every node within graph distance `1..=radius` of `start`.
pub(crate) fn for_each_within(
    t: &StrengthGraph,
    start: usize,
    radius: usize,
    stamp: &mut [usize],
    tag: usize,
    frontier: &mut Vec<usize>,
    mut visit: impl FnMut(usize),
) {
    frontier.clear();
    frontier.push(start);
    stamp[start] = tag;
    let mut next = Vec::new();
    for _ in 0..radius {
        next.clear();
        for &u in frontier.iter() {
            for &v in t.neighbors(u) {
                if stamp[v] != tag {
                    stamp[v] = tag;
                    next.push(v);
                    visit(v);
                }
            }
        }
        std::mem::swap(frontier, &mut next);
        if frontier.is_empty() {
            break;
        }
    }
}

/// Greedy maximal independent set of the distance-`power` graph of `t`,
/// visiting nodes in ascending order. Selected nodes are coarse.
pub fn coarsen_mis(t: &StrengthGraph, power: usize) -> Splitting {
    assert!(power >= 1, "power must be at least 1");
    let n = t.n();
    let mut state = vec![0u8; n];
    let mut stamp = vec![usize::MAX; n];
    let mut frontier = Vec::new();
    for i in 0..n {
        if state[i] != 0 {
            continue;
        }
        state[i] = 1;
        for_each_within(t, i, power, &mut stamp, i, &mut frontier, |v| {
            if state[v] == 0 {
                state[v] = 2;
            }
        });
    }
    Splitting::from_flags(state.into_iter().map(|s| s == 1).collect())
}
