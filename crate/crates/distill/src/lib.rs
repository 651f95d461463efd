//! Teacher-student distillation of sentence encoders.
//!
//! A small transformer student is trained so that the max-pooled output of
//! its final layer matches a frozen teacher's sentence embedding under
//! cosine distance, optionally together with a masked-LM objective on
//! student-language monolingual text and a prefix curriculum.

pub mod curriculum;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod model_io;
pub mod optim;
pub mod teacher;
pub mod toy;
pub mod train;
pub mod vocab;

pub use curriculum::{curriculum_views, CurriculumSchedule};
pub use encoder::{Encoder, EncoderConfig};
pub use error::{DistillError, Result};
pub use loss::cosine_loss;
pub use model_io::{load_model, save_model};
pub use teacher::{SyntheticTeacher, TableTeacher, Teacher};
pub use train::{train, Corpus, DistillConfig, StepMetrics, Student, TrainBatch, Trainer};
pub use vocab::SubwordVocab;
