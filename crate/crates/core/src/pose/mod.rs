//! Joint vocabulary, limb tree, and single-person pose decoding.

mod decoder;
mod joints;

pub use decoder::{
    assemble_pose, decode_sequence, extract_peaks, grid_to_image, image_to_grid,
    paf_line_integral, Candidate, PartMaps, DEFAULT_LINE_SAMPLES, DEFAULT_PEAKS,
};
pub use joints::{Joint, JointId, LimbTree, Pose, NUM_JOINTS, NUM_LIMBS};
