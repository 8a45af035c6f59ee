pub mod agreement;
pub mod audio;
pub mod corpus;
pub mod embedding;
pub mod features;
pub mod jsonl;
pub mod manifest;
pub mod pitch;
pub mod report;
pub mod similarity;
pub mod simulate;
pub mod synth;
pub mod trainer;
pub mod triad;
