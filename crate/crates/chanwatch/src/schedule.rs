//! Daily run times in the configured timezone.

use chanwatch_core::Timestamp;
use chrono::{Days, LocalResult, NaiveDate, NaiveTime, TimeZone, Utc};
use chrono_tz::Tz;

/// The UTC instant of `at` local time on `date`. A time skipped by a DST
/// jump resolves to the first valid instant after it; a repeated time to its
/// first occurrence.
pub fn local_instant(date: NaiveDate, at: NaiveTime, tz: Tz) -> Timestamp {
    let mut naive = date.and_time(at);
    loop {
        match tz.from_local_datetime(&naive) {
            LocalResult::Single(t) => return t.with_timezone(&Utc),
            LocalResult::Ambiguous(a, _) => return a.with_timezone(&Utc),
            LocalResult::None => naive += chrono::Duration::minutes(1),
        }
    }
}

/// First scheduled run strictly after `now`.
pub fn next_run_after(now: Timestamp, at: NaiveTime, tz: Tz) -> Timestamp {
    let mut date = now.with_timezone(&tz).date_naive();
    loop {
        let t = local_instant(date, at, tz);
        if t > now {
            return t;
        }
        date = date + Days::new(1);
    }
}
