//! Path-division scheduling of the pilot-training regions: users with
//! well-separated angle signatures share an observation rectangle, groups are
//! spread over the delay-Doppler grid with guard gaps.

use super::estimate::DispersionBounds;
use super::reconstruct::SignatureSet;
use crate::error::{Error, Result};
use crate::numeric::circ_dist;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

/// Circular rectangle on the delay-Doppler grid, anchored at its first cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub delay: usize,
    pub doppler_col: usize,
    pub delay_len: usize,
    pub doppler_len: usize,
}

impl Rect {
    pub fn cells(&self, delay_bins: usize, doppler_bins: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.delay_len).flat_map(move |u| {
            (0..self.doppler_len).map(move |v| ((self.delay + u) % delay_bins, (self.doppler_col + v) % doppler_bins))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub users: Vec<usize>,
    /// Where every member observes its training.
    pub region: Rect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmitRegion {
    pub user: usize,
    pub path: usize,
    pub layer: i64,
    pub region: Rect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub delay_bins: usize,
    pub doppler_bins: usize,
    pub num_antennas: usize,
    /// Minimum circular angle-bin distance between paths of grouped users.
    pub angle_gap: i64,
    /// Guard gaps between group rectangles; `None` picks the smallest safe value.
    pub delay_gap: Option<usize>,
    pub doppler_gap: Option<usize>,
    pub region_delay: usize,
    pub region_doppler: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulingPlan {
    pub params: ScheduleParams,
    pub delay_gap: usize,
    pub doppler_gap: usize,
    pub groups: Vec<Group>,
    pub transmit: Vec<TransmitRegion>,
}

impl SchedulingPlan {
    pub fn group_of(&self, user: usize) -> Option<&Group> {
        self.groups.iter().find(|g| g.users.contains(&user))
    }
}

fn min_angle_distance(a: &SignatureSet, b: &SignatureSet, m: usize) -> i64 {
    let mut d = i64::MAX;
    for x in &a.triples {
        for y in &b.triples {
            d = d.min(circ_dist(x.q, y.q, m));
        }
    }
    d
}

pub fn schedule_paths(sets: &[SignatureSet], bounds: DispersionBounds, params: &ScheduleParams) -> Result<SchedulingPlan> {
    let (ld, nd) = (params.delay_bins, params.doppler_bins);
    let d_tau = params.delay_gap.unwrap_or(bounds.l_g + 1);
    let d_nu = params.doppler_gap.unwrap_or(2 * bounds.n_g + 1);
    if params.region_delay == 0 || params.region_doppler == 0 {
        return Err(Error::Scheduling("empty observation region".into()));
    }
    for s in sets {
        let mut q: Vec<i64> = s.triples.iter().map(|t| t.q).collect();
        q.sort_unstable();
        q.dedup();
        if q.len() != s.len() {
            return Err(Error::Scheduling(format!("user {} has two paths on one angle layer", s.user)));
        }
        if s.len() > params.region_doppler {
            return Err(Error::Scheduling(format!(
                "user {} has {} paths but the region is {} Doppler bins wide",
                s.user,
                s.len(),
                params.region_doppler
            )));
        }
    }

    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (k, s) in sets.iter().enumerate() {
        let slot = groups
            .iter()
            .position(|g| g.iter().all(|&o| min_angle_distance(s, &sets[o], params.num_antennas) >= params.angle_gap));
        match slot {
            Some(g) => groups[g].push(k),
            None => groups.push(vec![k]),
        }
    }

    let step_l = (params.region_delay - 1 + d_tau).max(params.region_delay);
    let step_n = (params.region_doppler - 1 + d_nu).max(params.region_doppler);
    let (slots_l, slots_n) = (ld / step_l, nd / step_n);
    // a lone slot along an axis has no circular neighbour to keep a gap from
    let slots_l = if slots_l == 0 && params.region_delay <= ld { 1 } else { slots_l };
    let slots_n = if slots_n == 0 && params.region_doppler <= nd { 1 } else { slots_n };
    if groups.len() > slots_l * slots_n {
        return Err(Error::Scheduling(format!(
            "{} groups but only {} slots of {}x{} fit the {}x{} grid",
            groups.len(),
            slots_l * slots_n,
            params.region_delay,
            params.region_doppler,
            ld,
            nd
        )));
    }

    let mut plan_groups = Vec::new();
    let mut transmit = Vec::new();
    for (g, members) in groups.into_iter().enumerate() {
        let region = Rect {
            delay: (g / slots_n) * step_l,
            doppler_col: (g % slots_n) * step_n,
            delay_len: params.region_delay,
            doppler_len: params.region_doppler,
        };
        for &k in &members {
            for (p, s) in sets[k].triples.iter().enumerate() {
                transmit.push(TransmitRegion {
                    user: sets[k].user,
                    path: p,
                    layer: s.q,
                    region: Rect {
                        delay: (region.delay as i64 - s.i as i64).rem_euclid(ld as i64) as usize,
                        doppler_col: (region.doppler_col as i64 - s.j).rem_euclid(nd as i64) as usize,
                        ..region
                    },
                });
            }
        }
        plan_groups.push(Group { users: members.iter().map(|&k| sets[k].user).collect(), region });
    }
    Ok(SchedulingPlan { params: *params, delay_gap: d_tau, doppler_gap: d_nu, groups: plan_groups, transmit })
}

/// Independent feasibility check by cell enumeration. Returns every violated
/// condition.
pub fn verify_plan(plan: &SchedulingPlan, sets: &[SignatureSet]) -> std::result::Result<(), Vec<String>> {
    let p = &plan.params;
    let (ld, nd) = (p.delay_bins, p.doppler_bins);
    let mut bad = Vec::new();
    let by_user: HashMap<usize, &SignatureSet> = sets.iter().map(|s| (s.user, s)).collect();

    let mut seen = HashSet::new();
    for g in &plan.groups {
        let r = g.region;
        if r.delay >= ld || r.doppler_col >= nd || r.delay_len > ld || r.doppler_len > nd {
            bad.push(format!("group rectangle {r:?} out of bounds"));
        }
        for &u in &g.users {
            if !seen.insert(u) {
                bad.push(format!("user {u} is in more than one group"));
            }
            match by_user.get(&u) {
                Some(s) if s.len() > r.doppler_len => bad.push(format!("user {u}: {} paths exceed region width {}", s.len(), r.doppler_len)),
                None => bad.push(format!("unknown user {u}")),
                _ => {}
            }
        }
        for (a, &u) in g.users.iter().enumerate() {
            for &w in &g.users[a + 1..] {
                if let (Some(x), Some(y)) = (by_user.get(&u), by_user.get(&w)) {
                    let d = min_angle_distance(x, y, p.num_antennas);
                    if d < p.angle_gap {
                        bad.push(format!("users {u} and {w} share a group with angle distance {d}"));
                    }
                }
            }
        }
    }
    for s in sets {
        if !seen.contains(&s.user) {
            bad.push(format!("user {} is not scheduled", s.user));
        }
    }

    for (a, ga) in plan.groups.iter().enumerate() {
        let ca: Vec<_> = ga.region.cells(ld, nd).collect();
        for gb in &plan.groups[a + 1..] {
            let mut dl = usize::MAX;
            let mut dn = usize::MAX;
            for &(l1, n1) in &ca {
                for (l2, n2) in gb.region.cells(ld, nd) {
                    dl = dl.min(circ_dist(l1 as i64, l2 as i64, ld) as usize);
                    dn = dn.min(circ_dist(n1 as i64, n2 as i64, nd) as usize);
                }
            }
            if dl < plan.delay_gap && dn < plan.doppler_gap {
                bad.push(format!("groups at {:?} and {:?} are closer than the guard gaps", ga.region, gb.region));
            }
        }
    }

    let mut layer_cells: HashMap<i64, HashMap<(usize, usize), (usize, usize)>> = HashMap::new();
    for t in &plan.transmit {
        let Some(s) = by_user.get(&t.user).and_then(|s| s.triples.get(t.path)) else {
            bad.push(format!("transmit region for unknown path {}/{}", t.user, t.path));
            continue;
        };
        if t.layer != s.q {
            bad.push(format!("path {}/{} transmitted on layer {} instead of {}", t.user, t.path, t.layer, s.q));
        }
        if let Some(g) = plan.group_of(t.user) {
            let l = (t.region.delay + s.i) % ld;
            let n = (t.region.doppler_col as i64 + s.j).rem_euclid(nd as i64) as usize;
            if (l, n) != (g.region.delay, g.region.doppler_col) || t.region.delay_len != g.region.delay_len || t.region.doppler_len != g.region.doppler_len {
                bad.push(format!("path {}/{} does not land on its group rectangle", t.user, t.path));
            }
        }
        let cells = layer_cells.entry(t.layer).or_default();
        for c in t.region.cells(ld, nd) {
            if let Some(o) = cells.insert(c, (t.user, t.path)) {
                bad.push(format!("paths {:?} and {}/{} overlap at {c:?} on layer {}", o, t.user, t.path, t.layer));
            }
        }
    }
    for s in sets {
        let n = plan.transmit.iter().filter(|t| t.user == s.user).count();
        if n != s.len() {
            bad.push(format!("user {} has {} transmit regions for {} paths", s.user, n, s.len()));
        }
    }

    // Leakage: any other path's region shifted by this path's signature must
    // miss this user's observation rectangle.
    for s in sets {
        let Some(g) = plan.group_of(s.user) else { continue };
        let obs: HashSet<_> = g.region.cells(ld, nd).collect();
        for t in plan.transmit.iter().filter(|t| t.user != s.user) {
            for sig in s.triples.iter().filter(|x| x.q == t.layer) {
                let hit = t.region.cells(ld, nd).any(|(l, n)| {
                    obs.contains(&((l + sig.i) % ld, (n as i64 + sig.j).rem_euclid(nd as i64) as usize))
                });
                if hit {
                    bad.push(format!("path {}/{} leaks into the observation region of user {}", t.user, t.path, s.user));
                }
            }
        }
    }

    if bad.is_empty() {
        Ok(())
    } else {
        Err(bad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dl::reconstruct::Signature;
    use proptest::prelude::*;

    fn params(m: usize, gap: i64) -> ScheduleParams {
        ScheduleParams {
            delay_bins: 64,
            doppler_bins: 32,
            num_antennas: m,
            angle_gap: gap,
            delay_gap: None,
            doppler_gap: None,
            region_delay: 2,
            region_doppler: 4,
        }
    }

    fn set(user: usize, t: &[(usize, i64, i64)]) -> SignatureSet {
        SignatureSet { user, triples: t.iter().map(|&(i, j, q)| Signature { i, j, q }).collect() }
    }

    #[test]
    fn separated_users_share_a_group() {
        let sets = vec![set(0, &[(1, 0, 0), (3, 1, 2)]), set(1, &[(2, -1, 8), (0, 0, 12)])];
        let b = crate::dl::dispersion_bounds(&sets).unwrap();
        let plan = schedule_paths(&sets, b, &params(16, 3)).unwrap();
        assert_eq!(plan.groups.len(), 1);
        verify_plan(&plan, &sets).unwrap();
    }

    #[test]
    fn close_users_are_split() {
        let sets = vec![set(0, &[(1, 0, 0)]), set(1, &[(2, 1, 1)]), set(2, &[(0, 0, 15)])];
        let b = crate::dl::dispersion_bounds(&sets).unwrap();
        let plan = schedule_paths(&sets, b, &params(16, 3)).unwrap();
        assert_eq!(plan.groups.len(), 3);
        verify_plan(&plan, &sets).unwrap();
    }

    #[test]
    fn too_many_groups_fails() {
        let sets: Vec<_> = (0..40).map(|u| set(u, &[(5, 3, 0)])).collect();
        let b = crate::dl::dispersion_bounds(&sets).unwrap();
        assert!(matches!(schedule_paths(&sets, b, &params(16, 1)), Err(Error::Scheduling(_))));
    }

    #[test]
    fn checker_flags_tampered_plans() {
        let sets = vec![set(0, &[(1, 0, 0)]), set(1, &[(2, 1, 1)])];
        let b = crate::dl::dispersion_bounds(&sets).unwrap();
        let plan = schedule_paths(&sets, b, &params(16, 3)).unwrap();
        let mut merged = plan.clone();
        merged.groups[0].users.push(1);
        merged.groups.remove(1);
        assert!(verify_plan(&merged, &sets).is_err());
        let mut shifted = plan.clone();
        shifted.groups[1].region.delay = shifted.groups[0].region.delay + 1;
        assert!(verify_plan(&shifted, &sets).is_err());
        let mut moved = plan;
        moved.transmit[0].region.doppler_col += 1;
        assert!(verify_plan(&moved, &sets).is_err());
    }

    #[test]
    fn serde_roundtrip() {
        let sets = vec![set(0, &[(1, -1, 3), (4, 2, -5)])];
        let b = crate::dl::dispersion_bounds(&sets).unwrap();
        let plan = schedule_paths(&sets, b, &params(16, 2)).unwrap();
        let back: SchedulingPlan = serde_json::from_str(&serde_json::to_string(&plan).unwrap()).unwrap();
        assert_eq!(back, plan);
    }

    fn user_sets() -> impl Strategy<Value = Vec<SignatureSet>> {
        prop::collection::vec(
            (1usize..4, any::<u64>()).prop_map(|(p, seed)| {
                let q0 = (seed % 16) as i64 - 8;
                (0..p)
                    .map(|k| ((seed >> (8 + 4 * k)) as usize % 4, ((seed >> (20 + 3 * k)) % 5) as i64 - 2, (q0 + 3 * k as i64 + 8).rem_euclid(16) - 8))
                    .collect::<Vec<_>>()
            }),
            1..6,
        )
        .prop_map(|v| v.iter().enumerate().map(|(u, t)| set(u, t)).collect())
    }

    proptest! {
        #[test]
        fn plans_pass_the_checker(sets in user_sets(), gap in 1i64..5) {
            let b = crate::dl::dispersion_bounds(&sets).unwrap();
            if let Ok(plan) = schedule_paths(&sets, b, &params(16, gap)) {
                prop_assert!(verify_plan(&plan, &sets).is_ok(), "{:?}", verify_plan(&plan, &sets));
            }
        }
    }
}
