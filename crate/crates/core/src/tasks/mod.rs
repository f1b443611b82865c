//! S₃ path integration and SWAP variable binding, with exact oracles and
//! length curricula.

mod curriculum;
mod episode;
mod perm;

pub use curriculum::{Curriculum, CurriculumSpec, Schedule};
pub use episode::{s3_sample_episode, sv_sample_episode, swap_pair, swap_token, Episode, Task};
pub use perm::{path_product, s3_elements, s3_index, Perm};
