mod config;
pub mod heads;
mod network;
mod params;

pub use config::ModelConfig;
pub use heads::{
    candidate_embedding, context_vector, copy_distribution, dis_distribution, gate_value, mix_distributions,
    pred_distribution, Disambiguation, GateWeights,
};
pub use network::{
    augment_example, decode_step, decode_steps, embed, encode, forward_batch, forward_teacher_forced, BatchForward,
    DecoderStepOutput, EncoderOutput,
};
pub use params::{
    AttentionIds, DecoderLayerIds, EncoderLayerIds, FfnIds, GateIds, Layout, NormIds, Parameters,
};

#[cfg(test)]
mod tests;
