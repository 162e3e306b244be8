#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vqmpt/env2d.hpp"
#include "vqmpt/gaussian.hpp"
#include "vqmpt/nn.hpp"
#include "vqmpt/stage1.hpp"

namespace vqmpt {

// Raised when a predicted index sequence carries no sampling regions (goal
// class only); callers fall back to uniform sampling.
struct EmptyPredictionError : std::runtime_error {
    explicit EmptyPredictionError(const std::string& m) : std::runtime_error(m) {}
};

struct Stage2Config {
    int model_dim = 64;
    int heads = 3;
    int layers = 3;        // depth of both the fusion and AR stacks
    int mlp_dim = 256;
    int patch = 8;         // costmap patch edge length
    int resolution = 64;   // expected costmap resolution
    int n_h_max = 12;      // sequence cap, goal class included
    int beam_width = 4;

    int tokens_per_side() const { return resolution / patch; }
    int num_tokens() const { return tokens_per_side() * tokens_per_side(); }
};

// Index sequences use values in [0, num_codes]; the value num_codes is the
// terminal goal class and may appear only at the end.
class Stage2Model {
public:
    Stage2Model(const Stage2Config& config, int num_codes, int code_dim, std::uint64_t seed);

    const Stage2Config& config() const { return cfg_; }
    int num_classes() const { return num_codes_ + 1; }
    int goal_class() const { return num_codes_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

    // Patch embedding: (R/p)^2 tokens, linear projection of each flattened
    // patch plus a learned per-position embedding.
    Tensor embed_environment(const Costmap& costmap) const;

    // Fuses start/goal with the environment tokens through cross-attention
    // blocks; rows = environment tokens followed by the two fused queries.
    Tensor cross_attention_context(const Tensor& env_tokens, const Config2D& start,
                                   const Config2D& goal) const;

    // Next-index distribution over the num_codes+1 classes given a prefix of
    // already-chosen code indices (goal class may not appear in the prefix).
    Tensor ar_forward(const Codebook& codebook, const std::vector<int>& prefix,
                      const Tensor& context) const;

    // Teacher-forced cross entropy of a full ground-truth sequence (which
    // must terminate with the goal class): sum over positions of -log p.
    Tensor ce_loss(const Codebook& codebook, const std::vector<int>& ground_truth,
                   const Tensor& context) const;

    // Log-probabilities at every predictive position for a teacher-forced
    // input prefix (rows: predict h_1 ... h_{len+1}).
    Tensor prefix_logprobs(const Codebook& codebook, const std::vector<int>& prefix,
                           const Tensor& context) const;

private:
    Tensor ar_hidden(const Codebook& codebook, const std::vector<int>& prefix,
                     const Tensor& context) const;

    Stage2Config cfg_;
    int num_codes_;
    ParamSet params_;
    Linear patch_proj_;
    Tensor patch_pos_;  // learned (num_tokens x d)
    Linear sg_in_, sg_out_;
    std::vector<PrenormBlock> fuse_blocks_;
    std::vector<PrenormBlock> ar_blocks_;
    Linear code_embed_;  // code_dim -> d
    Linear bos_proj_;    // d -> d, applied to the stage-1 start encoding
    LayerNormParams final_ln_;
    Linear head_;        // d -> num_codes+1
    Tensor positions_;   // fixed sinusoidal table over the full sequence
    Tensor bos_source_;  // frozen copy of the stage-1 start encoding
public:
    void set_bos_source(const Tensor& z_start);  // stores a detached copy
};

// Length-capped beam search maximizing the product of step probabilities.
// A hypothesis completes when it emits the goal class; at the cap the goal
// class is forced (and scored). Completed hypotheses compete by total
// log-probability; ties break to the shorter, then lexicographically
// smaller sequence. Returns a sequence ending in the goal class.
std::vector<int> beam_search(const Stage2Model& model, const Codebook& codebook,
                             const Tensor& context, int beam_width, int n_h_max);

// Removes consecutive duplicates, keeping first occurrences.
std::vector<int> collapse_consecutive(const std::vector<int>& indices);

// Stage-1 transduction, consecutive-duplicate collapse, goal class appended.
std::vector<int> ground_truth_indices(const Stage1Model& stage1,
                                      const std::vector<Config2D>& demo);

// Decodes every non-goal index into a Gaussian and mixes them uniformly.
// Throws EmptyPredictionError when the sequence holds only the goal class.
Gmm build_gmm(const Stage1Model& stage1, const std::vector<int>& indices);

struct Stage2Example {
    Costmap costmap;
    Config2D start, goal;
    std::vector<int> gt;  // ends with the goal class
};

struct Stage2TrainConfig {
    int epochs = 15;
    int batch_size = 8;
    int warmup_steps = 400;
    std::uint64_t seed = 0;
    double clip_norm = 1.0;
    double holdout_fraction = 0.1;
};

struct Stage2TrainResult {
    std::vector<TrainLogRow> log;
    std::vector<double> holdout_accuracy_per_epoch;
    double final_holdout_accuracy = 0.0;
};

// Trains the stage-2 model against frozen stage-1 outputs (the codebook
// enters the graph detached, so stage-1 parameters stay bit-identical).
Stage2TrainResult train_stage2(const Stage1Model& stage1, Stage2Model& model,
                               const std::vector<Stage2Example>& dataset,
                               const Stage2TrainConfig& config);

}  // namespace vqmpt
