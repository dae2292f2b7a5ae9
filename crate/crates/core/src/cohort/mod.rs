//! Exams, exam pairs and cohorts: pairing rules, population slices, balanced
//! epoch sampling, image standardization and the synthetic phantom generator.

mod date;
mod exam;
mod pairing;
mod sampling;
mod size;
pub mod synth;
mod view;

pub use date::Date;
pub use exam::{Cohort, Exam, ExamPair, Labels, Patient, Split, SplitRule};
pub use pairing::{generate_test_pairs, generate_train_pairs, slice_population, Population, PopulationRule};
pub use sampling::{epoch_sample, epoch_sample_indices};
pub use size::{standardize_size, ImageScale, CC_FULL_SIZE, MLO_FULL_SIZE};
pub use view::{Side, View, ViewClass};
