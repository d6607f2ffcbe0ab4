//! Aggregation of individual census records into parish-year outcome
//! columns.
//!
//! Each aggregator takes the records of a single parish-year cell and is
//! order-independent; [`build_panel`] groups a record stream into cells and
//! assembles the full [`PanelDataset`], leaving unobserved parish-years as
//! missing cells.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{PanelDataset, Period, TreatmentSchedule, UnitId};
use crate::spatial::GeoPoint;

/// Sex as recorded in the census.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Female,
    Male,
    Unknown,
}

/// One individual census row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroRecord {
    pub parish: UnitId,
    pub year: Period,
    /// Age in completed years; `None` when unreadable.
    pub age: Option<u32>,
    pub sex: Sex,
    pub birth_county: Option<String>,
    pub residence_county: Option<String>,
    /// HISCO major group 0-9; `None` for people without an occupation code.
    pub hisco_major: Option<u8>,
    /// HISCAM status score; `None` when the occupation has no score.
    pub hiscam: Option<f64>,
}

/// Child age band (closed) for the child–women ratio.
const CHILD_AGE: (u32, u32) = (1, 5);
/// Women age band (closed) for the child–women ratio.
const WOMEN_AGE: (u32, u32) = (15, 45);
/// HISCO major groups counted as manufacturing.
const MANUFACTURING_MAJORS: [u8; 3] = [7, 8, 9];
/// HISCO major group for agriculture.
const AGRICULTURE_MAJOR: u8 = 6;

fn check_single_cell(records: &[MicroRecord]) -> Result<()> {
    if let Some(first) = records.first() {
        for r in records {
            if r.parish != first.parish || r.year != first.year {
                return Err(Error::MixedCell(format!(
                    "records span ({}, {}) and ({}, {})",
                    first.parish, first.year, r.parish, r.year
                )));
            }
        }
    }
    Ok(())
}

/// Number of records in the cell.
pub fn population_count(records: &[MicroRecord]) -> Result<u64> {
    check_single_cell(records)?;
    Ok(records.len() as u64)
}

/// Children aged 1–5 per woman aged 15–45; `None` when there are no women
/// in the band. Records with missing age are excluded from both sides, and
/// unknown-sex records from the denominator.
pub fn child_women_ratio(records: &[MicroRecord]) -> Result<Option<f64>> {
    check_single_cell(records)?;
    let children = records
        .iter()
        .filter(|r| matches!(r.age, Some(a) if (CHILD_AGE.0..=CHILD_AGE.1).contains(&a)))
        .count();
    let women = records
        .iter()
        .filter(|r| {
            r.sex == Sex::Female
                && matches!(r.age, Some(a) if (WOMEN_AGE.0..=WOMEN_AGE.1).contains(&a))
        })
        .count();
    Ok(if women == 0 {
        None
    } else {
        Some(children as f64 / women as f64)
    })
}

/// Manufacturing and non-agricultural shares of the coded labor force.
///
/// The labor force is every record with a HISCO major group; manufacturing
/// is groups 7–9, non-agricultural is everything outside group 6. `None`
/// when no record carries a code.
pub fn sector_shares(records: &[MicroRecord]) -> Result<Option<(f64, f64)>> {
    check_single_cell(records)?;
    let mut labor = 0usize;
    let mut manufacturing = 0usize;
    let mut agriculture = 0usize;
    for r in records {
        if let Some(major) = r.hisco_major {
            labor += 1;
            if MANUFACTURING_MAJORS.contains(&major) {
                manufacturing += 1;
            }
            if major == AGRICULTURE_MAJOR {
                agriculture += 1;
            }
        }
    }
    Ok(if labor == 0 {
        None
    } else {
        let l = labor as f64;
        Some((
            manufacturing as f64 / l,
            (labor - agriculture) as f64 / l,
        ))
    })
}

/// Number of records living in a different county than their birth county.
/// Records missing either county are excluded.
pub fn migration_count(records: &[MicroRecord]) -> Result<u64> {
    check_single_cell(records)?;
    Ok(records
        .iter()
        .filter(|r| match (&r.birth_county, &r.residence_county) {
            (Some(b), Some(c)) => b != c,
            _ => false,
        })
        .count() as u64)
}

/// Mean HISCAM score over records that have one; `None` if none do.
pub fn hiscam_mean(records: &[MicroRecord]) -> Result<Option<f64>> {
    check_single_cell(records)?;
    let mut scores: Vec<f64> = records.iter().filter_map(|r| r.hiscam).collect();
    if scores.is_empty() {
        return Ok(None);
    }
    // Sum in a canonical order so record order cannot perturb rounding.
    scores.sort_by(f64::total_cmp);
    Ok(Some(scores.iter().sum::<f64>() / scores.len() as f64))
}

/// Outcome column names produced by [`build_panel`], in output order.
pub const OUTCOME_COLUMNS: [&str; 8] = [
    "population",
    "log_population",
    "child_women_ratio",
    "manufacturing_share",
    "non_agricultural_share",
    "hiscam_mean",
    "migration",
    "log_migration",
];

/// Natural log with zero (and negative) mapped to missing, used for the
/// `log_population` and `log_migration` columns.
fn log_or_missing(v: f64) -> Option<f64> {
    if v > 0.0 {
        Some(v.ln())
    } else {
        None
    }
}

/// Aggregate a record stream into a parish-year panel.
///
/// Units are the parishes observed in `records`; periods are the distinct
/// record years, ascending. Every aggregate above becomes an outcome column,
/// plus `log_population` and `log_migration` (zeros become missing cells).
/// Parish-years without records are missing in all columns.
///
/// # Errors
/// [`Error::EmptyResult`] when `records` is empty.
pub fn build_panel(
    records: &[MicroRecord],
    schedule: &TreatmentSchedule,
    geo: &BTreeMap<UnitId, GeoPoint>,
) -> Result<PanelDataset> {
    if records.is_empty() {
        return Err(Error::EmptyResult("no micro records to aggregate".into()));
    }

    let mut cells: BTreeMap<(UnitId, Period), Vec<&MicroRecord>> = BTreeMap::new();
    let mut years: BTreeSet<Period> = BTreeSet::new();
    for r in records {
        years.insert(r.year);
        cells.entry((r.parish.clone(), r.year)).or_default().push(r);
    }
    let units: Vec<UnitId> = cells
        .keys()
        .map(|(u, _)| u.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let periods: Vec<Period> = years.into_iter().collect();

    let mut own_schedule = TreatmentSchedule::new();
    for u in &units {
        if let Some(t) = schedule.get(u) {
            own_schedule.set(u.clone(), t);
        }
    }
    let mut ds = PanelDataset::new(units.clone(), periods.clone(), own_schedule);

    let n_rows = ds.n_rows();
    let mut cols: BTreeMap<&str, Vec<Option<f64>>> = OUTCOME_COLUMNS
        .iter()
        .map(|name| (*name, vec![None; n_rows]))
        .collect();

    for (ui, unit) in units.iter().enumerate() {
        for (pi, &year) in periods.iter().enumerate() {
            let Some(recs) = cells.get(&(unit.clone(), year)) else {
                continue;
            };
            let owned: Vec<MicroRecord> = recs.iter().map(|r| (*r).clone()).collect();
            let idx = ui * periods.len() + pi;
            let pop = population_count(&owned)? as f64;
            cols.get_mut("population").unwrap()[idx] = Some(pop);
            cols.get_mut("log_population").unwrap()[idx] = log_or_missing(pop);
            cols.get_mut("child_women_ratio").unwrap()[idx] = child_women_ratio(&owned)?;
            if let Some((manu, nonag)) = sector_shares(&owned)? {
                cols.get_mut("manufacturing_share").unwrap()[idx] = Some(manu);
                cols.get_mut("non_agricultural_share").unwrap()[idx] = Some(nonag);
            }
            cols.get_mut("hiscam_mean").unwrap()[idx] = hiscam_mean(&owned)?;
            let mig = migration_count(&owned)? as f64;
            cols.get_mut("migration").unwrap()[idx] = Some(mig);
            cols.get_mut("log_migration").unwrap()[idx] = log_or_missing(mig);
        }
    }
    for name in OUTCOME_COLUMNS {
        ds.add_outcome(name, cols.remove(name).unwrap())?;
    }

    let coords: Vec<Option<GeoPoint>> = units.iter().map(|u| geo.get(u).copied()).collect();
    ds.set_coordinates(coords)?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(parish: &str, year: Period) -> MicroRecord {
        MicroRecord {
            parish: parish.to_string(),
            year,
            age: None,
            sex: Sex::Unknown,
            birth_county: None,
            residence_county: None,
            hisco_major: None,
            hiscam: None,
        }
    }

    #[test]
    fn population_counts_records() {
        let recs = vec![rec("p1", 1850), rec("p1", 1850), rec("p1", 1850)];
        assert_eq!(population_count(&recs).unwrap(), 3);
        assert_eq!(population_count(&[]).unwrap(), 0);
    }

    #[test]
    fn mixed_cell_rejected() {
        let recs = vec![rec("p1", 1850), rec("p2", 1850)];
        assert_eq!(population_count(&recs).unwrap_err().code(), "MIXED_CELL");
        let recs = vec![rec("p1", 1850), rec("p1", 1860)];
        assert_eq!(child_women_ratio(&recs).unwrap_err().code(), "MIXED_CELL");
    }

    #[test]
    fn child_women_ratio_examples() {
        let mut recs = Vec::new();
        for _ in 0..2 {
            let mut r = rec("p1", 1850);
            r.age = Some(3);
            recs.push(r);
        }
        for _ in 0..4 {
            let mut r = rec("p1", 1850);
            r.age = Some(20);
            r.sex = Sex::Female;
            recs.push(r);
        }
        assert_eq!(child_women_ratio(&recs).unwrap(), Some(0.5));

        // One child, no women in band -> None.
        let mut child = rec("p1", 1850);
        child.age = Some(2);
        assert_eq!(child_women_ratio(&[child]).unwrap(), None);

        // No children, five women -> 0.
        let women: Vec<MicroRecord> = (0..5)
            .map(|_| {
                let mut r = rec("p1", 1850);
                r.age = Some(30);
                r.sex = Sex::Female;
                r
            })
            .collect();
        assert_eq!(child_women_ratio(&women).unwrap(), Some(0.0));
    }

    #[test]
    fn child_women_band_endpoints_inclusive() {
        // Ages 1 and 5 are children; 15 and 45 are women; 0/6 and 14/46 not.
        let mk = |age: u32, sex: Sex| {
            let mut r = rec("p1", 1850);
            r.age = Some(age);
            r.sex = sex;
            r
        };
        let recs = vec![
            mk(1, Sex::Male),
            mk(5, Sex::Male),
            mk(0, Sex::Male),
            mk(6, Sex::Male),
            mk(15, Sex::Female),
            mk(45, Sex::Female),
            mk(14, Sex::Female),
            mk(46, Sex::Female),
        ];
        assert_eq!(child_women_ratio(&recs).unwrap(), Some(1.0));
    }

    #[test]
    fn unknown_sex_excluded_from_denominator() {
        let mut woman = rec("p1", 1850);
        woman.age = Some(20);
        woman.sex = Sex::Female;
        let mut unknown = rec("p1", 1850);
        unknown.age = Some(20);
        unknown.sex = Sex::Unknown;
        let mut child = rec("p1", 1850);
        child.age = Some(2);
        let recs = vec![woman, unknown, child];
        assert_eq!(child_women_ratio(&recs).unwrap(), Some(1.0));
    }

    #[test]
    fn sector_share_examples() {
        let mk = |major: Option<u8>| {
            let mut r = rec("p1", 1850);
            r.hisco_major = major;
            r
        };
        let recs: Vec<MicroRecord> = [Some(6), Some(6), Some(7), Some(8)]
            .into_iter()
            .map(mk)
            .collect();
        assert_eq!(sector_shares(&recs).unwrap(), Some((0.5, 0.5)));

        let recs: Vec<MicroRecord> = [Some(6), Some(6)].into_iter().map(mk).collect();
        assert_eq!(sector_shares(&recs).unwrap(), Some((0.0, 0.0)));

        let recs: Vec<MicroRecord> = [None, None].into_iter().map(mk).collect();
        assert_eq!(sector_shares(&recs).unwrap(), None);
    }

    #[test]
    fn shares_bounded_and_ordered() {
        // non_agricultural >= manufacturing for any composition.
        use rand::prelude::*;
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for _ in 0..200 {
            let recs: Vec<MicroRecord> = (0..rng.gen_range(1..30))
                .map(|_| {
                    let mut r = rec("p1", 1850);
                    r.hisco_major = if rng.gen_bool(0.8) {
                        Some(rng.gen_range(0..10))
                    } else {
                        None
                    };
                    r
                })
                .collect();
            if let Some((manu, nonag)) = sector_shares(&recs).unwrap() {
                assert!((0.0..=1.0).contains(&manu));
                assert!((0.0..=1.0).contains(&nonag));
                assert!(nonag >= manu - 1e-15, "nonag {nonag} < manu {manu}");
            }
        }
    }

    #[test]
    fn migration_examples() {
        let mk = |birth: Option<&str>, res: Option<&str>| {
            let mut r = rec("p1", 1850);
            r.birth_county = birth.map(String::from);
            r.residence_county = res.map(String::from);
            r
        };
        let recs = vec![
            mk(Some("a"), Some("a")),
            mk(Some("a"), Some("b")),
            mk(Some("c"), Some("a")),
            mk(Some("a"), Some("a")),
            mk(Some("a"), Some("a")),
        ];
        assert_eq!(migration_count(&recs).unwrap(), 2);

        let recs = vec![mk(Some("a"), Some("a")), mk(Some("a"), Some("a"))];
        assert_eq!(migration_count(&recs).unwrap(), 0);

        let recs = vec![mk(None, Some("a")), mk(None, Some("b"))];
        assert_eq!(migration_count(&recs).unwrap(), 0, "missing birth county excluded");
    }

    #[test]
    fn hiscam_examples() {
        let mk = |score: Option<f64>| {
            let mut r = rec("p1", 1850);
            r.hiscam = score;
            r
        };
        let recs = vec![mk(Some(40.0)), mk(Some(60.0)), mk(None)];
        assert_eq!(hiscam_mean(&recs).unwrap(), Some(50.0));
        assert_eq!(hiscam_mean(&[mk(Some(48.2))]).unwrap(), Some(48.2));
        assert_eq!(hiscam_mean(&[mk(None)]).unwrap(), None);
    }

    #[test]
    fn aggregation_is_order_independent() {
        use rand::prelude::*;
        let mut rng = rand::rngs::StdRng::seed_from_u64(17);
        let mut recs: Vec<MicroRecord> = (0..50)
            .map(|i| {
                let mut r = rec("p1", 1850);
                r.age = Some(i % 60);
                r.sex = if i % 2 == 0 { Sex::Female } else { Sex::Male };
                r.hisco_major = Some((i % 10) as u8);
                r.hiscam = Some(30.0 + (i as f64) * 0.7);
                r
            })
            .collect();
        let before = (
            child_women_ratio(&recs).unwrap(),
            sector_shares(&recs).unwrap(),
            hiscam_mean(&recs).unwrap(),
        );
        recs.shuffle(&mut rng);
        let after = (
            child_women_ratio(&recs).unwrap(),
            sector_shares(&recs).unwrap(),
            hiscam_mean(&recs).unwrap(),
        );
        assert_eq!(before, after);
    }

    /// Six-record toy corpus over 2 parishes x 2 years, aggregated by hand.
    #[test]
    fn build_panel_toy_corpus() {
        let mut records = Vec::new();
        // p1/1850: a woman (age 20), a child (age 3), a farmer (major 6).
        let mut r = rec("p1", 1850);
        r.age = Some(20);
        r.sex = Sex::Female;
        r.birth_county = Some("x".into());
        r.residence_county = Some("x".into());
        records.push(r);
        let mut r = rec("p1", 1850);
        r.age = Some(3);
        records.push(r);
        let mut r = rec("p1", 1850);
        r.age = Some(40);
        r.hisco_major = Some(6);
        r.hiscam = Some(50.0);
        r.birth_county = Some("y".into());
        r.residence_county = Some("x".into());
        records.push(r);
        // p1/1860: one manufacturing worker.
        let mut r = rec("p1", 1860);
        r.age = Some(41);
        r.hisco_major = Some(7);
        r.hiscam = Some(62.0);
        records.push(r);
        // p2/1850: two plain records.
        records.push(rec("p2", 1850));
        records.push(rec("p2", 1850));

        let mut schedule = TreatmentSchedule::new();
        schedule.set("p1", Treatment::AtYear(1858));
        schedule.set("p2", Treatment::Never);
        let geo = BTreeMap::new();
        let ds = build_panel(&records, &schedule, &geo).unwrap();

        assert_eq!(ds.units(), &["p1".to_string(), "p2".to_string()]);
        assert_eq!(ds.periods(), &[1850, 1860]);

        let pop = ds.outcome("population").unwrap();
        assert_eq!(pop, &[Some(3.0), Some(1.0), Some(2.0), None]);
        let logpop = ds.outcome("log_population").unwrap();
        assert_eq!(logpop[0], Some(3.0f64.ln()));
        let cwr = ds.outcome("child_women_ratio").unwrap();
        assert_eq!(cwr[0], Some(1.0)); // 1 child / 1 woman
        assert_eq!(cwr[2], None); // p2 has no women
        let manu = ds.outcome("manufacturing_share").unwrap();
        assert_eq!(manu[0], Some(0.0));
        assert_eq!(manu[1], Some(1.0));
        assert_eq!(manu[2], None); // no coded labor force in p2
        let mig = ds.outcome("migration").unwrap();
        assert_eq!(mig[0], Some(1.0)); // the farmer moved counties
        let logmig = ds.outcome("log_migration").unwrap();
        assert_eq!(logmig[0], Some(0.0)); // ln(1)
        assert_eq!(logmig[1], None); // ln(0) -> missing
        let hiscam = ds.outcome("hiscam_mean").unwrap();
        assert_eq!(hiscam[0], Some(50.0));

        // p2 has no 1860 records: all columns missing there.
        for name in OUTCOME_COLUMNS {
            assert_eq!(ds.outcome(name).unwrap()[3], None, "column {name}");
        }
    }

    #[test]
    fn build_panel_empty_input() {
        let schedule = TreatmentSchedule::new();
        let err = build_panel(&[], &schedule, &BTreeMap::new()).unwrap_err();
        assert_eq!(err.code(), "EMPTY_RESULT");
    }

    use crate::panel::Treatment;
}
