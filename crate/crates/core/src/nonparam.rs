//! Nonparametric estimators on the (tstart, tstop] risk-set convention:
//! Y(t) counts episodes with tstart < t <= tstop, so delayed entry and
//! episode splits are handled by construction, and a subject censored at an
//! event time is still in that event's risk set (events precede censorings).

use std::collections::BTreeMap;

use crate::cohort::CohortTable;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::stats;
use crate::step::StepFunction;

const LEVEL: f64 = 0.95;

/// Risk-set sizes by binary search over sorted entry/exit times.
pub(crate) struct RiskSets<F: Real> {
    tstarts: Vec<F>,
    tstops: Vec<F>,
}

impl<F: Real> RiskSets<F> {
    pub(crate) fn new(table: &CohortTable<F>) -> Self {
        let mut tstarts: Vec<F> = table.episodes().iter().map(|e| e.tstart).collect();
        let mut tstops: Vec<F> = table.episodes().iter().map(|e| e.tstop).collect();
        tstarts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        tstops.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Self { tstarts, tstops }
    }

    /// Y(t) = #{ episodes : tstart < t <= tstop }
    pub(crate) fn at(&self, t: F) -> usize {
        let started = self.tstarts.partition_point(|x| *x < t);
        let gone = self.tstops.partition_point(|x| *x < t);
        started - gone
    }
}

/// Distinct ascending times with per-cause event counts; `which` selects the
/// episodes that count as events.
fn event_counts<F: Real>(
    table: &CohortTable<F>,
    which: impl Fn(usize, u32) -> Option<u32>,
) -> Vec<(F, BTreeMap<u32, usize>)> {
    let mut by_time: BTreeMap<u64, (F, BTreeMap<u32, usize>)> = BTreeMap::new();
    for (i, ep) in table.episodes().iter().enumerate() {
        if let Some(code) = which(i, ep.status) {
            let key = ordered_bits(ep.tstop);
            let entry = by_time
                .entry(key)
                .or_insert_with(|| (ep.tstop, BTreeMap::new()));
            *entry.1.entry(code).or_insert(0) += 1;
        }
    }
    by_time.into_values().collect()
}

/// Order-preserving bit mapping for finite floats (construction already
/// rejected non-finite times).
fn ordered_bits<F: Real>(v: F) -> u64 {
    let b = v.as_f64().to_bits();
    if b >> 63 == 0 {
        b | (1 << 63)
    } else {
        !b
    }
}

/// Kaplan-Meier survival. All nonzero status codes compose the event (map
/// causes before calling for cause-specific use). `condition_time` restricts
/// to survivors: the curve starts at 1 at t0 and uses only risk sets after t0.
pub fn kaplan_meier<F: Real>(
    table: &CohortTable<F>,
    condition_time: Option<F>,
) -> Result<StepFunction<F>> {
    if let Some(t0) = condition_time {
        if !table.episodes().iter().any(|e| e.tstop > t0) {
            return Err(Error::EmptyRiskSet { time: t0.as_f64() });
        }
    }
    let risk = RiskSets::new(table);
    let counts = event_counts(table, |_, status| (status != 0).then_some(1));
    km_from_counts(&risk, &counts, condition_time)
}

/// Censoring distribution: the Kaplan-Meier with roles reversed. A
/// "censoring event" is a status-0 exit at the end of a contiguous episode
/// run (interior episode boundaries are bookkeeping, not exits); true events
/// act as the censorings of the reversed process.
pub fn censoring_curve<F: Real>(table: &CohortTable<F>) -> Result<StepFunction<F>> {
    let risk = RiskSets::new(table);
    let finals = table.run_final_flags();
    let counts = event_counts(table, |i, status| {
        (status == 0 && finals[i]).then_some(1)
    });
    km_from_counts(&risk, &counts, None)
}

fn km_from_counts<F: Real>(
    risk: &RiskSets<F>,
    counts: &[(F, BTreeMap<u32, usize>)],
    condition_time: Option<F>,
) -> Result<StepFunction<F>> {
    let z = F::of(stats::z_for_level(LEVEL));
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut variances = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut surv = F::one();
    let mut greenwood = F::zero();
    for (t, by_cause) in counts {
        if let Some(t0) = condition_time {
            if *t <= t0 {
                continue;
            }
        }
        let d = F::of_usize(by_cause.values().sum());
        let y = F::of_usize(risk.at(*t));
        debug_assert!(y >= d && d > F::zero());
        surv = surv * (F::one() - d / y);
        if y > d {
            greenwood += d / (y * (y - d));
        }
        let (var, lo, hi) = if surv > F::zero() && y > d {
            let var = surv * surv * greenwood;
            // confidence limits on the log(-log) scale stay inside [0, 1]
            let se_cll = var.sqrt() / (surv * surv.ln().abs());
            let lo = surv.powf((z * se_cll).exp());
            let hi = surv.powf((-z * se_cll).exp());
            (var, lo.min(hi), hi.max(lo))
        } else {
            (F::zero(), F::zero(), F::zero())
        };
        times.push(*t);
        values.push(surv);
        variances.push(var);
        lower.push(lo);
        upper.push(hi);
    }
    StepFunction::new(F::one(), times, values)?
        .with_variance(variances)?
        .with_band(lower, upper)
}

/// Nelson-Aalen cumulative hazard for one cause; returns the constant-zero
/// curve when the cause never occurs.
pub fn nelson_aalen<F: Real>(table: &CohortTable<F>, cause: u32) -> Result<StepFunction<F>> {
    let risk = RiskSets::new(table);
    let counts = event_counts(table, |_, status| (status == cause && cause != 0).then_some(1));
    let z = F::of(stats::z_for_level(LEVEL));
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut variances = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut cum = F::zero();
    let mut var = F::zero();
    for (t, by_cause) in &counts {
        let d = F::of_usize(by_cause.values().sum());
        let y = F::of_usize(risk.at(*t));
        cum += d / y;
        var += d / (y * y);
        // log-scale confidence limits keep the lower bound positive
        let se_rel = var.sqrt() / cum;
        times.push(*t);
        values.push(cum);
        variances.push(var);
        lower.push(cum * (-z * se_rel).exp());
        upper.push(cum * (z * se_rel).exp());
    }
    StepFunction::new(F::zero(), times, values)?
        .with_variance(variances)?
        .with_band(lower, upper)
}

/// Aalen-Johansen estimator under competing risks: overall survival is the
/// all-cause product-limit curve, and each cause's cumulative incidence
/// accumulates S(t-) * d_k / Y. By construction sum_k F_k(t) + S(t) = 1 up
/// to rounding.
#[derive(Debug, Clone)]
pub struct AalenJohansen<F: Real = f64> {
    pub survival: StepFunction<F>,
    pub cif: BTreeMap<u32, StepFunction<F>>,
}

pub fn aalen_johansen<F: Real>(table: &CohortTable<F>) -> Result<AalenJohansen<F>> {
    let risk = RiskSets::new(table);
    let counts = event_counts(table, |_, status| (status != 0).then_some(status));
    let causes = table.causes();

    let mut s_times = Vec::new();
    let mut s_values = Vec::new();
    let mut cif_acc: BTreeMap<u32, (Vec<F>, Vec<F>, F)> = causes
        .iter()
        .map(|k| (*k, (Vec::new(), Vec::new(), F::zero())))
        .collect();
    let mut surv = F::one();
    for (t, by_cause) in &counts {
        let y = F::of_usize(risk.at(*t));
        let d_tot = F::of_usize(by_cause.values().sum());
        let s_prev = surv;
        surv = surv * (F::one() - d_tot / y);
        s_times.push(*t);
        s_values.push(surv);
        for (k, dk) in by_cause {
            let acc = cif_acc.get_mut(k).unwrap();
            acc.2 += s_prev * F::of_usize(*dk) / y;
            acc.0.push(*t);
            acc.1.push(acc.2);
        }
    }
    let survival = StepFunction::new(F::one(), s_times, s_values)?;
    let mut cif = BTreeMap::new();
    for (k, (t, v, _)) in cif_acc {
        cif.insert(k, StepFunction::new(F::zero(), t, v)?);
    }
    Ok(AalenJohansen { survival, cif })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::Episode;

    fn ep(subject: &str, tstart: f64, tstop: f64, status: u32) -> Episode {
        Episode {
            subject: subject.into(),
            tstart,
            tstop,
            status,
            stratum: None,
            covariates: vec![],
        }
    }

    fn table(eps: Vec<Episode>) -> CohortTable {
        CohortTable::new(eps, vec![]).unwrap()
    }

    // Worked example used throughout: events at t=2 (Y=3) and t=4 (Y=1),
    // censoring at t=2 (still in the t=2 risk set).
    fn three_subjects() -> CohortTable {
        table(vec![
            ep("a", 0.0, 2.0, 1),
            ep("b", 0.0, 4.0, 1),
            ep("c", 0.0, 2.0, 0),
        ])
    }

    #[test]
    fn nelson_aalen_hand_example() {
        let na = nelson_aalen(&three_subjects(), 1).unwrap();
        assert_eq!(na.times(), &[2.0, 4.0]);
        assert!((na.values()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((na.values()[1] - 4.0 / 3.0).abs() < 1e-15);
        let var = na.variance().unwrap();
        assert!((var[0] - 1.0 / 9.0).abs() < 1e-15);
        assert!((var[1] - 10.0 / 9.0).abs() < 1e-15);
        let (lo, hi) = (na.lower().unwrap(), na.upper().unwrap());
        assert!(lo.iter().zip(na.values()).all(|(l, v)| l <= v));
        assert!(hi.iter().zip(na.values()).all(|(h, v)| h >= v));
        assert!(lo.iter().all(|l| *l > 0.0));
    }

    #[test]
    fn kaplan_meier_hand_example() {
        let km = kaplan_meier(&three_subjects(), None).unwrap();
        assert_eq!(km.times(), &[2.0, 4.0]);
        assert!((km.values()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(km.values()[1], 0.0);
        // Greenwood at t=2: S^2 * d/(Y(Y-d)) = (2/3)^2 * 1/6
        let var = km.variance().unwrap();
        assert!((var[0] - (4.0 / 9.0) * (1.0 / 6.0)).abs() < 1e-15);
        // terminal zero gets a degenerate band
        assert_eq!(km.lower().unwrap()[1], 0.0);
        assert_eq!(km.upper().unwrap()[1], 0.0);
    }

    #[test]
    fn delayed_entry_shrinks_early_risk_sets() {
        // b enters at t=3: the t=2 risk set is {a} alone
        let t = table(vec![ep("a", 0.0, 2.0, 1), ep("b", 3.0, 5.0, 1)]);
        let na = nelson_aalen(&t, 1).unwrap();
        assert_eq!(na.values()[0], 1.0);
        assert_eq!(na.values()[1], 2.0);
    }

    #[test]
    fn episode_splits_leave_estimates_unchanged() {
        let t = three_subjects();
        let split = t.split_episodes(&[0.5, 1.0, 3.0]).unwrap();
        let km1 = kaplan_meier(&t, None).unwrap();
        let km2 = kaplan_meier(&split, None).unwrap();
        assert_eq!(km1.times(), km2.times());
        assert_eq!(km1.values(), km2.values());
        let na1 = nelson_aalen(&t, 1).unwrap();
        let na2 = nelson_aalen(&split, 1).unwrap();
        assert_eq!(na1.values(), na2.values());
    }

    #[test]
    fn conditional_km_starts_fresh() {
        // condition on surviving past t=2: only the t=4 event remains
        let km = kaplan_meier(&three_subjects(), Some(2.0)).unwrap();
        assert_eq!(km.times(), &[4.0]);
        assert_eq!(km.values()[0], 0.0);
        assert_eq!(km.eval_before(4.0), 1.0);
        // nobody at risk after the last exit
        assert!(matches!(
            kaplan_meier(&three_subjects(), Some(4.0)).unwrap_err(),
            Error::EmptyRiskSet { .. }
        ));
    }

    #[test]
    fn aalen_johansen_hand_example() {
        // cause 1 at t=1 (Y=3), cause 2 at t=2 (Y=2), censoring at t=3
        let t = table(vec![
            ep("a", 0.0, 1.0, 1),
            ep("b", 0.0, 2.0, 2),
            ep("c", 0.0, 3.0, 0),
        ]);
        let aj = aalen_johansen(&t).unwrap();
        let f1 = &aj.cif[&1];
        let f2 = &aj.cif[&2];
        assert!((f1.eval(3.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((f2.eval(3.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((aj.survival.eval(3.0) - 1.0 / 3.0).abs() < 1e-15);
        // coherence at every event time
        for t in [1.0, 2.0, 3.0] {
            let total = f1.eval(t) + f2.eval(t) + aj.survival.eval(t);
            assert!((total - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_cause_aj_equals_one_minus_km() {
        let t = three_subjects();
        let aj = aalen_johansen(&t).unwrap();
        let km = kaplan_meier(&t, None).unwrap();
        let f1 = &aj.cif[&1];
        for (time, s) in km.iter() {
            assert!((f1.eval(time) - (1.0 - s)).abs() < 1e-15);
        }
    }

    #[test]
    fn censoring_curve_swaps_roles() {
        let cc = censoring_curve(&three_subjects()).unwrap();
        // single censoring at t=2 with Y=3
        assert_eq!(cc.times(), &[2.0]);
        assert!((cc.values()[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn censoring_curve_ignores_interior_boundaries() {
        // contiguous run: boundary at t=2 is not a censoring
        let t = table(vec![
            ep("a", 0.0, 2.0, 0),
            ep("a", 2.0, 5.0, 0),
            ep("b", 0.0, 4.0, 1),
        ]);
        let cc = censoring_curve(&t).unwrap();
        assert_eq!(cc.times(), &[5.0]);
    }

    #[test]
    fn no_events_gives_constant_curves() {
        let t = table(vec![ep("a", 0.0, 2.0, 0), ep("b", 0.0, 4.0, 0)]);
        assert_eq!(kaplan_meier(&t, None).unwrap().n_jumps(), 0);
        assert_eq!(nelson_aalen(&t, 1).unwrap().n_jumps(), 0);
    }
}
