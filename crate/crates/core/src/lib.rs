pub mod ablation;
pub mod dataset;
pub mod dictionary;
pub mod eval;
pub mod generation;
pub mod pinyin;
pub mod pipeline;
pub mod postprocess;
pub mod prompting;
pub mod synthetic;
