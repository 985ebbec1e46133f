//! CAN-bus intrusion detection toolkit.
//!
//! The crate covers the whole offline and online workflow:
//!
//! * [`canframe`]: frame model and the attack-CSV, candump and unified formats.
//! * [`traffic`]: synthetic normal traffic plus DoS, fuzzing and spoofing injection.
//! * [`pipeline`]: cleaning, the `at_freq_sec` and `hour` features, SMOTE,
//!   scaling, stratified splits and matrix assembly.
//! * [`models`]: the classifiers, written from scratch behind one interface.
//! * [`metrics`]: confusion matrices, per-class scores, one-vs-rest ROC,
//!   repeated stratified k-fold and the evaluation report.
//! * [`monitor`]: a streaming detector that emits per-frame alerts.
//! * [`experiment`]: the with/without time-feature comparison.

pub mod canframe;
pub mod clock;
pub mod experiment;
pub mod matrix;
pub mod metrics;
pub mod models;
pub mod monitor;
pub mod pipeline;
pub mod traffic;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use canframe::{CanFrame, ClassLabel, Timestamp};

/// Number of traffic classes.
pub const N_CLASSES: usize = ClassLabel::COUNT;

/// Deterministic RNG for `(seed, stream)`; independent streams never overlap.
pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
