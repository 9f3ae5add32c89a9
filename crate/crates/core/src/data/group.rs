use super::trajectory::{Dataset, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct Grouping {
    pub groups: Vec<Dataset>,
    /// Groups that came out smaller than requested.
    pub warnings: usize,
}

fn prefix_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    a.prefix()
        .iter()
        .flatten()
        .zip(b.prefix().iter().flatten())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Greedy grouping by prefix similarity.
///
/// The first unassigned trajectory anchors a group; unassigned trajectories
/// whose flattened prefix lies within `radius` of the anchor's join it, up to
/// `group_size`. Groups are disjoint. Short groups are kept and counted.
pub fn group_by_prefix(
    dataset: &Dataset,
    n_groups: usize,
    group_size: usize,
    radius: f64,
) -> Grouping {
    let n = dataset.len();
    let mut used = vec![false; n];
    let mut groups = Vec::new();
    let mut warnings = 0;
    while groups.len() < n_groups {
        let Some(anchor) = used.iter().position(|u| !u) else {
            break;
        };
        let a = &dataset.trajectories[anchor];
        let mut members = Vec::new();
        for i in anchor..n {
            if members.len() == group_size {
                break;
            }
            if !used[i] && prefix_distance(a, &dataset.trajectories[i]) <= radius {
                used[i] = true;
                members.push(dataset.trajectories[i].clone());
            }
        }
        if members.len() < group_size {
            warnings += 1;
        }
        groups.push(Dataset {
            d_x: dataset.d_x,
            trajectories: members,
        });
    }
    if warnings > 0 {
        log::warn!("{warnings} groups have fewer than {group_size} members");
    }
    Grouping { groups, warnings }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(prefixes: &[f64]) -> Dataset {
        let trs = prefixes
            .iter()
            .map(|&p| Trajectory::new(vec![vec![p], vec![0.0]], 1).unwrap())
            .collect();
        Dataset::new(1, trs).unwrap()
    }

    #[test]
    fn identical_prefixes_make_one_group() {
        let g = group_by_prefix(&ds(&[1.0; 5]), 1, 3, 0.0);
        assert_eq!(g.groups.len(), 1);
        assert_eq!(g.groups[0].len(), 3);
        assert_eq!(g.warnings, 0);
        let g = group_by_prefix(&ds(&[1.0; 5]), 1, 10, 0.0);
        assert_eq!(g.groups[0].len(), 5);
        assert_eq!(g.warnings, 1);
    }

    #[test]
    fn zero_radius_with_distinct_prefixes() {
        let g = group_by_prefix(&ds(&[0.0, 1.0, 2.0]), 5, 2, 0.0);
        assert_eq!(g.groups.len(), 3);
        assert!(g.groups.iter().all(|d| d.len() == 1));
        assert_eq!(g.warnings, 3);
    }

    #[test]
    fn groups_are_disjoint_clusters() {
        let g = group_by_prefix(&ds(&[0.0, 10.0, 0.1, 10.1, 0.2]), 2, 3, 0.5);
        let firsts: Vec<Vec<f64>> = g.groups[0]
            .iter()
            .map(|t| t.observations[0].clone())
            .collect();
        assert_eq!(firsts, vec![vec![0.0], vec![0.1], vec![0.2]]);
        assert_eq!(g.groups[1].len(), 2);
    }
}
