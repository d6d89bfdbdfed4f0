//! Readers and writers for every external artifact.

pub mod checkpoint;
pub mod labels;
pub mod render;
pub mod t3;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use labels::{read_label_map, write_label_map};
pub use render::{default_palette, render_class_map, render_pauli_rgb, Color};
pub use t3::{read_t3_directory, write_t3_directory};
