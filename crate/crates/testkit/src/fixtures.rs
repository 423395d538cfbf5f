//! Canonical scenarios used across the test suites.

use tempocurate_core::{Date, Timestamp, Upload};

use crate::{upload_from_csv, Step};

pub const F1_U1: &str = include_str!("../../../samples/f1_u1.csv");
pub const F1_U2: &str = include_str!("../../../samples/f1_u2.csv");
pub const F2_U2: &str = include_str!("../../../samples/f2_u2_bad_total.csv");
pub const F3_U1: &str = include_str!("../../../samples/f3_u1.csv");
pub const F3_U2: &str = include_str!("../../../samples/f3_u2.csv");
pub const F3_U3: &str = include_str!("../../../samples/f3_u3.csv");

pub fn date(s: &str) -> Date {
    s.parse().unwrap()
}

pub fn at(s: &str) -> Timestamp {
    s.parse().unwrap()
}

pub fn f1_u1() -> Upload {
    upload_from_csv(F1_U1, "U1", "2020-04-29")
}

pub fn f1_u2() -> Upload {
    upload_from_csv(F1_U2, "U2", "2020-05-06")
}

pub fn f2_u2() -> Upload {
    upload_from_csv(F2_U2, "U2", "2020-05-06")
}

/// Two uploads, then accept Female, Total and Lothian and reject Edinburgh.
pub fn f1() -> Vec<Step> {
    vec![
        Step::Upload(f1_u1()),
        Step::Upload(f1_u2()),
        Step::Accept {
            ids: vec![1, 2, 3],
            effective: None,
            now: at("2020-05-07T10:00:00Z"),
        },
        Step::Reject {
            ids: vec![4],
            now: at("2020-05-07T10:05:00Z"),
        },
    ]
}

/// Three uploads over two weeks; Edinburgh's first revision is rejected.
pub fn f3() -> Vec<Step> {
    vec![
        Step::Upload(upload_from_csv(F3_U1, "U1", "2020-04-29")),
        Step::Upload(upload_from_csv(F3_U2, "U2", "2020-05-06")),
        Step::Accept {
            ids: vec![1, 2, 3],
            effective: None,
            now: at("2020-05-07T09:00:00Z"),
        },
        Step::Reject {
            ids: vec![4],
            now: at("2020-05-07T09:01:00Z"),
        },
        Step::Upload(upload_from_csv(F3_U3, "U3", "2020-05-13")),
        Step::Accept {
            ids: vec![5, 6, 7, 8, 9, 10, 11],
            effective: None,
            now: at("2020-05-14T09:00:00Z"),
        },
    ]
}
