//! SR, PL, SPL, RT, ECR and SCR, and placement-condition checking.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geometry::Aabb;
use crate::scene::{classify_pair, Relation, RelationConfig};
use crate::taskgen::{PlaceRelation, PlacementCondition, Split, Task};
use crate::wkm::WorldKnowledge;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("{0} is undefined on an empty input")]
    Undefined(&'static str),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

/// Mean of `S * l / max(p, l)` over `(success, shortest, taken)` triples.
pub fn spl(items: &[(bool, f64, f64)]) -> Result<f64, MetricError> {
    if items.is_empty() {
        return Err(MetricError::Undefined("SPL"));
    }
    let mut sum = 0.0;
    for &(s, l, p) in items {
        if !(l > 0.0) || !(p >= 0.0) {
            return Err(MetricError::Invariant(format!("SPL needs l > 0 and p >= 0, got l = {l}, p = {p}")));
        }
        if s {
            sum += l / p.max(l);
        }
    }
    Ok(sum / items.len() as f64)
}

/// Excluded candidate rate over `|objects_0|, |objects_1|, ...`; 1.0 when
/// the first set is already a singleton.
pub fn ecr(sizes: &[usize]) -> Result<f64, MetricError> {
    let (&first, _) = sizes.split_first().ok_or(MetricError::Undefined("ECR"))?;
    if first == 0 {
        return Err(MetricError::Invariant("|objects_0| must be at least 1".into()));
    }
    if let Some(w) = sizes.windows(2).find(|w| w[1] > w[0]) {
        return Err(MetricError::Invariant(format!("candidate count grew from {} to {}", w[0], w[1])));
    }
    if first == 1 {
        return Ok(1.0);
    }
    let excluded: usize = sizes.windows(2).map(|w| w[0] - w[1]).sum();
    Ok(excluded as f64 / (first - 1) as f64)
}

/// Satisfied condition rate.
pub fn scr(flags: &[bool]) -> Result<f64, MetricError> {
    if flags.is_empty() {
        return Err(MetricError::Undefined("SCR"));
    }
    Ok(flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64)
}

/// Objects matching a condition's receptacle description.
pub fn receptacle_matches(wk: &WorldKnowledge, cond: &PlacementCondition) -> BTreeSet<String> {
    let Some(category) = cond.receptacle_spec.category.as_deref() else { return BTreeSet::new() };
    let cands = wk.category_candidates(category);
    match wk.filter(&cands, &cond.receptacle_spec) {
        Ok(s) => s,
        Err(e) => {
            tracing::warn!(error = %e, "receptacle description could not be evaluated");
            BTreeSet::new()
        }
    }
}

/// Thresholds for judging a placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlacementRules {
    /// A placement is "nearby" a receptacle when their AABB gap is below this.
    pub nearby_threshold: f64,
}

impl Default for PlacementRules {
    fn default() -> Self {
        Self { nearby_threshold: 1.5 }
    }
}

/// Whether `placed` stands in `relation` to the receptacle box.
pub fn placement_holds(
    placed: &Aabb,
    receptacle: &Aabb,
    relation: PlaceRelation,
    relations: &RelationConfig,
    rules: &PlacementRules,
) -> bool {
    match relation {
        PlaceRelation::Nearby => placed.gap(receptacle) < rules.nearby_threshold,
        PlaceRelation::On => matches!(classify_pair(placed, receptacle, relations), Some((Relation::On, _, _))),
    }
}

/// One flag per condition: true when any object matching the receptacle
/// description stands in the required relation to the placed object.
pub fn check_conditions(
    placed: Option<&Aabb>,
    conditions: &[PlacementCondition],
    wk: &WorldKnowledge,
    relations: &RelationConfig,
    rules: &PlacementRules,
) -> Vec<bool> {
    let Some(placed) = placed else { return vec![false; conditions.len()] };
    conditions
        .iter()
        .map(|cond| {
            receptacle_matches(wk, cond).iter().any(|id| {
                wk.graph().node(id).is_some_and(|o| placement_holds(placed, &o.aabb(), cond.relation, relations, rules))
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub task: Task,
    pub split: Split,
    pub agent: String,
    pub success: bool,
    /// Executed trajectory length p, meters.
    pub taken_path_length: f64,
    /// Ground-truth path length l, meters.
    pub shortest_path_length: f64,
    pub reset_count: u32,
    pub steps_used: u64,
    /// |objects_i| per disclosure (social navigation).
    #[serde(default)]
    pub candidate_history: Vec<usize>,
    /// One flag per placement condition (loco-manipulation).
    #[serde(default)]
    pub condition_flags: Vec<bool>,
    #[serde(default)]
    pub dialogue_rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub task: Task,
    pub split: Option<Split>,
    pub episodes: usize,
    /// Mean taken path length, meters.
    pub pl: f64,
    /// Percent.
    pub sr: f64,
    /// Percent.
    pub spl: f64,
    pub ecr: Option<f64>,
    pub scr: Option<f64>,
    pub rt: f64,
}

pub fn aggregate(results: &[EpisodeResult], split: Option<Split>) -> Result<Report, MetricError> {
    let first = results.first().ok_or(MetricError::Undefined("report"))?;
    if let Some(r) = results.iter().find(|r| r.task != first.task) {
        return Err(MetricError::Contract(format!("mixed tasks {:?} and {:?}", first.task, r.task)));
    }
    if let Some(s) = split {
        if let Some(r) = results.iter().find(|r| r.split != s) {
            return Err(MetricError::Contract(format!("episode {} is not in split {:?}", r.episode_id, s)));
        }
    }
    let n = results.len() as f64;
    let triples: Vec<_> = results.iter().map(|r| (r.success, r.shortest_path_length, r.taken_path_length)).collect();
    let successes = results.iter().filter(|r| r.success).count() as f64;
    let ecr = match first.task {
        Task::SocialLoconav => {
            let mut sum = 0.0;
            for r in results {
                sum += ecr(&r.candidate_history)?;
            }
            Some(sum / n)
        }
        _ => None,
    };
    let scr = match first.task {
        Task::LocoManip => {
            let mut sum = 0.0;
            for r in results {
                sum += scr(&r.condition_flags)?;
            }
            Some(sum / n)
        }
        _ => None,
    };
    Ok(Report {
        task: first.task,
        split,
        episodes: results.len(),
        pl: results.iter().map(|r| r.taken_path_length).sum::<f64>() / n,
        sr: 100.0 * successes / n,
        spl: 100.0 * spl(&triples)?,
        ecr,
        scr,
        rt: results.iter().map(|r| r.reset_count as f64).sum::<f64>() / n,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

impl Report {
    pub const COLUMNS: [&'static str; 7] = ["Task", "PL", "SR", "SPL", "ECR", "SCR", "RT"];

    pub fn row(&self, label: &str) -> [String; 7] {
        [
            label.to_string(),
            cell(Some(self.pl)),
            cell(Some(self.sr)),
            cell(Some(self.spl)),
            cell(self.ecr),
            cell(self.scr),
            cell(Some(self.rt)),
        ]
    }
}

/// Fixed-width text table, one row per (label, report).
pub fn render_table(rows: &[(String, Report)]) -> String {
    let body: Vec<[String; 7]> = rows.iter().map(|(l, r)| r.row(l)).collect();
    let mut widths = Report::COLUMNS.map(str::len);
    for r in &body {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&Report::COLUMNS.map(String::from), &mut out);
    for r in &body {
        line(r, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spl_examples() {
        assert_eq!(spl(&[(true, 10.0, 20.0)]).unwrap(), 0.5);
        assert_eq!(spl(&[(false, 10.0, 5.0), (false, 3.0, 9.0)]).unwrap(), 0.0);
        assert_eq!(spl(&[(true, 10.0, 8.0)]).unwrap(), 1.0);
        assert_eq!(spl(&[]), Err(MetricError::Undefined("SPL")));
    }

    #[test]
    fn ecr_examples() {
        assert_eq!(ecr(&[5, 3, 1]).unwrap(), 1.0);
        assert_eq!(ecr(&[5, 3]).unwrap(), 0.5);
        assert_eq!(ecr(&[4]).unwrap(), 0.0);
        assert_eq!(ecr(&[1]).unwrap(), 1.0);
        assert!(matches!(ecr(&[3, 4]), Err(MetricError::Invariant(_))));
    }

    #[test]
    fn scr_examples() {
        assert_eq!(scr(&[true, false]).unwrap(), 0.5);
        assert_eq!(scr(&[true, true]).unwrap(), 1.0);
        assert_eq!(scr(&[false]).unwrap(), 0.0);
        assert!(scr(&[]).is_err());
    }

    fn result(task: Task, success: bool, resets: u32) -> EpisodeResult {
        EpisodeResult {
            episode_id: "e".into(),
            task,
            split: Split::Validation,
            agent: "a".into(),
            success,
            taken_path_length: 12.0,
            shortest_path_length: 10.0,
            reset_count: resets,
            steps_used: 0,
            candidate_history: vec![3, 1],
            condition_flags: vec![true, false],
            dialogue_rounds: 1,
        }
    }

    #[test]
    fn single_success_report() {
        let r = aggregate(&[result(Task::ObjectLoconav, true, 2)], Some(Split::Validation)).unwrap();
        assert_eq!(r.sr, 100.0);
        assert_eq!(r.rt, 2.0);
        assert!((r.spl - 100.0 * 10.0 / 12.0).abs() < 1e-12);
        let t = render_table(&[("Oracle".into(), r)]);
        assert!(t.contains("100.00"));
        assert!(t.contains('-'));
    }

    #[test]
    fn mixed_tasks_rejected() {
        let rs = [result(Task::ObjectLoconav, true, 0), result(Task::LocoManip, true, 0)];
        assert!(matches!(aggregate(&rs, None), Err(MetricError::Contract(_))));
        assert!(matches!(aggregate(&[], None), Err(MetricError::Undefined(_))));
    }

    #[test]
    fn social_and_manip_columns() {
        let r = aggregate(&[result(Task::SocialLoconav, false, 0)], None).unwrap();
        assert_eq!(r.ecr, Some(1.0));
        assert_eq!(r.scr, None);
        let r = aggregate(&[result(Task::LocoManip, false, 0)], None).unwrap();
        assert_eq!(r.scr, Some(0.5));
    }
}
