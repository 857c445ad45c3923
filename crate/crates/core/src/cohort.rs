//! Episode tables under the counting-process convention: a subject is at risk
//! on (tstart, tstop], events are counted at tstop, and delayed entry /
//! time-dependent covariates are expressed by splitting follow-up into
//! episodes. Construction validates the invariants every estimator relies on.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Episode<F: Real = f64> {
    pub subject: String,
    pub tstart: F,
    pub tstop: F,
    /// 0 = censored at tstop; k >= 1 = event of cause k at tstop.
    pub status: u32,
    pub stratum: Option<String>,
    pub covariates: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortTable<F: Real = f64> {
    episodes: Vec<Episode<F>>, // sorted by (subject, tstart)
    covariate_names: Vec<String>,
    cause_labels: BTreeMap<u32, String>,
    time_axis: String,
    taint: Option<String>,
}

impl<F: Real> CohortTable<F> {
    pub fn new(mut episodes: Vec<Episode<F>>, covariate_names: Vec<String>) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::EmptyCohort);
        }
        {
            let mut seen = BTreeSet::new();
            for name in &covariate_names {
                if !seen.insert(name.as_str()) {
                    return Err(Error::DuplicateColumn {
                        column: name.clone(),
                    });
                }
            }
        }
        for ep in &episodes {
            if !ep.tstart.is_finite()
                || !ep.tstop.is_finite()
                || ep.covariates.iter().any(|v| !v.is_finite())
            {
                return Err(Error::NonFinite {
                    subject: ep.subject.clone(),
                });
            }
            if ep.tstart < F::zero() {
                return Err(Error::NegativeTime {
                    subject: ep.subject.clone(),
                    time: ep.tstart.as_f64(),
                });
            }
            if !(ep.tstart < ep.tstop) {
                return Err(Error::EmptyInterval {
                    subject: ep.subject.clone(),
                    tstart: ep.tstart.as_f64(),
                    tstop: ep.tstop.as_f64(),
                });
            }
            if ep.covariates.len() != covariate_names.len() {
                return Err(Error::CovariateArity {
                    subject: ep.subject.clone(),
                    expected: covariate_names.len(),
                    found: ep.covariates.len(),
                });
            }
        }
        episodes.sort_by(|a, b| {
            a.subject
                .cmp(&b.subject)
                .then(a.tstart.partial_cmp(&b.tstart).unwrap())
        });
        for w in episodes.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a.subject != b.subject {
                continue;
            }
            if b.tstart < a.tstop {
                return Err(Error::OverlappingEpisodes {
                    subject: b.subject.clone(),
                    tstart: b.tstart.as_f64(),
                    prev_tstop: a.tstop.as_f64(),
                });
            }
            // an event ends observation; nothing may continue seamlessly from it
            if a.status != 0 && b.tstart == a.tstop {
                return Err(Error::EventInsideRun {
                    subject: a.subject.clone(),
                    status: a.status,
                    time: a.tstop.as_f64(),
                });
            }
        }
        let mut cause_labels = BTreeMap::new();
        for ep in &episodes {
            if ep.status != 0 {
                cause_labels
                    .entry(ep.status)
                    .or_insert_with(|| format!("cause {}", ep.status));
            }
        }
        Ok(Self {
            episodes,
            covariate_names,
            cause_labels,
            time_axis: "time".to_string(),
            taint: None,
        })
    }

    pub fn with_time_axis(mut self, label: impl Into<String>) -> Self {
        self.time_axis = label.into();
        self
    }

    /// Declare cause labels. Every status code observed in the data must be
    /// covered; codes declared but unobserved are kept (they may appear later
    /// in merged registry data).
    pub fn with_cause_labels(mut self, labels: BTreeMap<u32, String>) -> Result<Self> {
        for code in self.causes() {
            if !labels.contains_key(&code) {
                return Err(Error::UnknownCause { code });
            }
        }
        self.cause_labels = labels;
        Ok(self)
    }

    pub(crate) fn with_taint(mut self, description: impl Into<String>) -> Self {
        self.taint = Some(description.into());
        self
    }

    pub fn episodes(&self) -> &[Episode<F>] {
        &self.episodes
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn covariate_index(&self, name: &str) -> Result<usize> {
        self.covariate_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownColumn {
                column: name.to_string(),
            })
    }

    pub fn cause_labels(&self) -> &BTreeMap<u32, String> {
        &self.cause_labels
    }

    /// Status codes observed in the data (nonzero).
    pub fn causes(&self) -> BTreeSet<u32> {
        self.episodes
            .iter()
            .filter(|e| e.status != 0)
            .map(|e| e.status)
            .collect()
    }

    pub fn time_axis(&self) -> &str {
        &self.time_axis
    }

    /// Set when a deliberate-miscoding transform produced this table.
    pub fn taint(&self) -> Option<&str> {
        self.taint.as_deref()
    }

    pub fn is_tainted(&self) -> bool {
        self.taint.is_some()
    }

    pub fn n_episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects().count()
    }

    pub fn n_events(&self, cause: Option<u32>) -> usize {
        self.episodes
            .iter()
            .filter(|e| match cause {
                Some(k) => e.status == k,
                None => e.status != 0,
            })
            .count()
    }

    /// Iterate subjects with their episodes (sorted by tstart).
    pub fn subjects(&self) -> impl Iterator<Item = (&str, &[Episode<F>])> {
        self.episodes
            .chunk_by(|a, b| a.subject == b.subject)
            .map(|run| (run[0].subject.as_str(), run))
    }

    pub fn strata(&self) -> BTreeSet<&str> {
        self.episodes
            .iter()
            .filter_map(|e| e.stratum.as_deref())
            .collect()
    }

    /// For each episode (in table order): does it end a contiguous run of
    /// follow-up? Exits (censorings and events) happen only at run-final
    /// tstops; interior boundaries are covariate-change bookkeeping.
    pub fn run_final_flags(&self) -> Vec<bool> {
        let mut flags = vec![true; self.episodes.len()];
        for i in 0..self.episodes.len().saturating_sub(1) {
            let (a, b) = (&self.episodes[i], &self.episodes[i + 1]);
            if a.subject == b.subject && b.tstart == a.tstop {
                flags[i] = false;
            }
        }
        flags
    }

    /// Total person-time (sum of episode lengths).
    pub fn person_time(&self) -> F {
        self.episodes
            .iter()
            .map(|e| e.tstop - e.tstart)
            .fold(F::zero(), |acc, d| acc + d)
    }

    fn rebuild(&self, episodes: Vec<Episode<F>>, names: Vec<String>) -> Result<Self> {
        let mut t = Self::new(episodes, names)?;
        t.time_axis = self.time_axis.clone();
        t.taint = self.taint.clone();
        for (code, label) in &self.cause_labels {
            t.cause_labels
                .entry(*code)
                .or_insert_with(|| label.clone());
        }
        Ok(t)
    }

    /// Merge time-stamped covariate changes into the episode structure,
    /// splitting episodes at change times. Last-value-carried-forward from the
    /// declared baseline; a change at an episode's tstart applies from tstart.
    /// Records after a subject's last tstop are ignored with a warning.
    pub fn merge_timeline(
        &self,
        timeline: &Timeline<F>,
        baselines: &BTreeMap<String, F>,
    ) -> Result<(Self, Vec<MergeWarning>)> {
        let subject_set: BTreeSet<&str> = self.subjects().map(|(s, _)| s).collect();
        for rec in timeline.records() {
            if !subject_set.contains(rec.subject.as_str()) {
                return Err(Error::UnknownSubject {
                    subject: rec.subject.clone(),
                });
            }
        }
        let mut table = self.clone();
        let mut warnings = Vec::new();
        let vars: BTreeSet<&str> = timeline.variables();
        for var in vars {
            let baseline = *baselines
                .get(var)
                .ok_or_else(|| Error::MissingBaseline {
                    variable: var.to_string(),
                })?;
            if table.covariate_names.iter().any(|n| n == var) {
                return Err(Error::DuplicateColumn {
                    column: var.to_string(),
                });
            }
            table = table.merge_one_variable(timeline, var, baseline, &mut warnings)?;
        }
        Ok((table, warnings))
    }

    fn merge_one_variable(
        &self,
        timeline: &Timeline<F>,
        var: &str,
        baseline: F,
        warnings: &mut Vec<MergeWarning>,
    ) -> Result<Self> {
        let mut out: Vec<Episode<F>> = Vec::with_capacity(self.episodes.len());
        for (subject, eps) in self.subjects() {
            let recs: Vec<&TimelineRecord<F>> = timeline
                .records()
                .iter()
                .filter(|r| r.subject == subject && r.variable == var)
                .collect();
            let last_stop = eps.last().unwrap().tstop;
            for r in &recs {
                if r.time > last_stop {
                    warnings.push(MergeWarning {
                        subject: subject.to_string(),
                        variable: var.to_string(),
                        time: r.time.as_f64(),
                    });
                }
            }
            let mut idx = 0; // next unapplied record
            let mut value = baseline;
            for ep in eps {
                while idx < recs.len() && recs[idx].time <= ep.tstart {
                    value = recs[idx].value;
                    idx += 1;
                }
                let mut start = ep.tstart;
                let mut look = idx;
                while look < recs.len() && recs[look].time < ep.tstop {
                    let c = recs[look].time;
                    if c > start {
                        let mut frag = ep.clone();
                        frag.tstart = start;
                        frag.tstop = c;
                        frag.status = 0;
                        frag.covariates.push(value);
                        out.push(frag);
                        start = c;
                    }
                    value = recs[look].value;
                    look += 1;
                }
                idx = look;
                let mut frag = ep.clone();
                frag.tstart = start;
                frag.covariates.push(value);
                out.push(frag);
            }
        }
        let mut names = self.covariate_names.clone();
        names.push(var.to_string());
        self.rebuild(out, names)
    }

    /// Shift every subject's times by its offset, relabeling the axis
    /// (e.g. time-on-study -> age with offset = age at entry).
    pub fn switch_time_axis(
        &self,
        offsets: &BTreeMap<String, F>,
        new_label: impl Into<String>,
    ) -> Result<Self> {
        let mut out = Vec::with_capacity(self.episodes.len());
        for (subject, eps) in self.subjects() {
            let off = *offsets.get(subject).ok_or_else(|| Error::MissingOffset {
                subject: subject.to_string(),
            })?;
            for ep in eps {
                let mut e = ep.clone();
                e.tstart = ep.tstart + off;
                e.tstop = ep.tstop + off;
                if e.tstart < F::zero() {
                    return Err(Error::NegativeTime {
                        subject: subject.to_string(),
                        time: e.tstart.as_f64(),
                    });
                }
                out.push(e);
            }
        }
        Ok(self.rebuild(out, self.covariate_names.clone())?.with_time_axis(new_label))
    }

    /// Read per-subject axis offsets from a covariate column (value must be
    /// constant within subject).
    pub fn offsets_from_column(&self, column: &str) -> Result<BTreeMap<String, F>> {
        let j = self.covariate_index(column)?;
        let mut map = BTreeMap::new();
        for (subject, eps) in self.subjects() {
            let v = eps[0].covariates[j];
            if eps.iter().any(|e| e.covariates[j] != v) {
                return Err(Error::Invalid(format!(
                    "offset column '{column}' varies within subject {subject}"
                )));
            }
            map.insert(subject.to_string(), v);
        }
        Ok(map)
    }

    /// Split episodes at the given cutpoints (risk sets, likelihoods and
    /// estimates are invariant to this). Empty cutpoints = identity.
    pub fn split_episodes(&self, cutpoints: &[F]) -> Result<Self> {
        self.split_impl(cutpoints, None)
    }

    /// Like `split_episodes`, additionally tagging each fragment with its
    /// interval index (0-based count of cutpoints at or below the fragment
    /// start) as a new covariate column — the raw material for piecewise
    /// time-varying effects.
    pub fn split_episodes_tagged(&self, cutpoints: &[F], tag: &str) -> Result<Self> {
        if self.covariate_names.iter().any(|n| n == tag) {
            return Err(Error::DuplicateColumn {
                column: tag.to_string(),
            });
        }
        self.split_impl(cutpoints, Some(tag))
    }

    fn split_impl(&self, cutpoints: &[F], tag: Option<&str>) -> Result<Self> {
        validate_cutpoints(cutpoints)?;
        let interval_of = |t: F| cutpoints.partition_point(|c| *c <= t);
        let mut out = Vec::with_capacity(self.episodes.len());
        for ep in &self.episodes {
            let mut start = ep.tstart;
            let inner = cutpoints
                .iter()
                .copied()
                .filter(|c| *c > ep.tstart && *c < ep.tstop);
            for c in inner {
                let mut frag = ep.clone();
                frag.tstart = start;
                frag.tstop = c;
                frag.status = 0;
                if tag.is_some() {
                    frag.covariates.push(F::of_usize(interval_of(start)));
                }
                out.push(frag);
                start = c;
            }
            let mut frag = ep.clone();
            frag.tstart = start;
            if tag.is_some() {
                frag.covariates.push(F::of_usize(interval_of(start)));
            }
            out.push(frag);
        }
        let mut names = self.covariate_names.clone();
        if let Some(t) = tag {
            names.push(t.to_string());
        }
        self.rebuild(out, names)
    }
}

pub(crate) fn validate_cutpoints<F: Real>(cutpoints: &[F]) -> Result<()> {
    for w in cutpoints.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::BadCutpoints);
        }
    }
    if cutpoints.iter().any(|c| !c.is_finite()) {
        return Err(Error::BadCutpoints);
    }
    Ok(())
}

/// A time-stamped covariate change: `variable` takes `value` from `time` on.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineRecord<F: Real = f64> {
    pub subject: String,
    pub time: F,
    pub variable: String,
    pub value: F,
}

/// Long-format record of covariate changes, sorted by (subject, variable,
/// time); ties in time keep input order (the later record wins at merge).
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline<F: Real = f64> {
    records: Vec<TimelineRecord<F>>,
}

impl<F: Real> Timeline<F> {
    pub fn new(mut records: Vec<TimelineRecord<F>>) -> Result<Self> {
        for r in &records {
            if !r.time.is_finite() || !r.value.is_finite() {
                return Err(Error::NonFinite {
                    subject: r.subject.clone(),
                });
            }
        }
        records.sort_by(|a, b| {
            a.subject
                .cmp(&b.subject)
                .then(a.variable.cmp(&b.variable))
                .then(a.time.partial_cmp(&b.time).unwrap())
        });
        Ok(Self { records })
    }

    pub fn empty() -> Self {
        Self {
            records: Vec::new(),
        }
    }

    pub fn records(&self) -> &[TimelineRecord<F>] {
        &self.records
    }

    pub fn variables(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.variable.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeWarning {
    pub subject: String,
    pub variable: String,
    pub time: f64,
}

impl fmt::Display for MergeWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "record for {}/{} at {} falls after follow-up; ignored",
            self.subject, self.variable, self.time
        )
    }
}
