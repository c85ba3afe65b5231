//! Published reference tables, embedded verbatim.
//!
//! Tables 1-3 come from the reference MLP, 4-6 from the reference CNN. They keep
//! their printed quirks: Table 1 is slightly asymmetric, Table 3 has one blank cell
//! (read as zero) and Table 4's class-8 row repeats most of class-7's.

use crate::analysis::{ConfusionMatrix, DistanceMatrix};
use crate::error::{Error, Result};

pub const TABLE1_CSV: &str = include_str!("../fixtures/table1.csv");
pub const TABLE2_CSV: &str = include_str!("../fixtures/table2.csv");
pub const TABLE3_CSV: &str = include_str!("../fixtures/table3.csv");
pub const TABLE4_CSV: &str = include_str!("../fixtures/table4.csv");
pub const TABLE5_CSV: &str = include_str!("../fixtures/table5.csv");
pub const TABLE6_CSV: &str = include_str!("../fixtures/table6.csv");

/// Quoted share of MLP errors landing in the 4 / 5 nearest classes.
pub const MLP_COVERAGE_K4: f64 = 0.8076;
pub const MLP_COVERAGE_K5: f64 = 0.9161;
/// Same statistic for the CNN.
pub const CNN_COVERAGE_K4: f64 = 0.8123;
pub const CNN_COVERAGE_K5: f64 = 0.8652;

/// Quoted error counts on the 70,000-sample noisy set.
pub const MLP_NOISY_ERRORS: u64 = 1954;
pub const CNN_NOISY_ERRORS: u64 = 2909;
/// Quoted CNN test error after pruning stays near this rate.
pub const CNN_TEST_ERROR: f64 = 0.0107;

pub fn mlp_distances() -> DistanceMatrix {
    DistanceMatrix::read_csv(TABLE1_CSV.as_bytes()).expect("embedded table 1 is valid")
}

pub fn mlp_average_distances() -> Vec<f64> {
    read_vector(TABLE2_CSV).expect("embedded table 2 is valid")
}

pub fn mlp_confusion() -> ConfusionMatrix {
    ConfusionMatrix::read_csv(TABLE3_CSV.as_bytes()).expect("embedded table 3 is valid")
}

pub fn cnn_distances() -> DistanceMatrix {
    DistanceMatrix::read_csv(TABLE4_CSV.as_bytes()).expect("embedded table 4 is valid")
}

pub fn cnn_average_distances() -> Vec<f64> {
    read_vector(TABLE5_CSV).expect("embedded table 5 is valid")
}

pub fn cnn_confusion() -> ConfusionMatrix {
    ConfusionMatrix::read_csv(TABLE6_CSV.as_bytes()).expect("embedded table 6 is valid")
}

/// Reads a two-column `class,value` CSV.
pub fn read_vector(text: &str) -> Result<Vec<f64>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let class: usize = rec
            .get(0)
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("row {i}: bad class index")))?;
        if class != i {
            return Err(Error::Parse(format!("row {i}: expected class {i}, found {class}")));
        }
        let value: f64 = rec
            .get(1)
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("row {i}: bad value")))?;
        out.push(value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_load_with_expected_shapes() {
        for d in [mlp_distances(), cnn_distances()] {
            assert_eq!(d.n(), 10);
        }
        assert_eq!(mlp_average_distances().len(), 10);
        assert_eq!(cnn_average_distances().len(), 10);
        assert_eq!(mlp_confusion().get(4, 5), 0);
        assert_eq!(mlp_confusion().get(1, 8), 504);
        assert_eq!(cnn_confusion().get(1, 8), 1391);
    }

    #[test]
    fn values_are_verbatim() {
        let d = mlp_distances();
        assert_eq!(d.get(0, 1), 5.7164);
        assert_eq!(d.get(7, 9), 5.5541);
        assert_eq!(d.get(9, 7), 5.1876);
        assert_eq!(mlp_average_distances()[9], 5.5248);
        assert_eq!(cnn_average_distances()[0], 8.9698);
    }

    #[test]
    fn printed_asymmetry_is_kept() {
        assert!((mlp_distances().max_asymmetry() - (5.5541 - 5.1876)).abs() < 1e-12);
    }
}
