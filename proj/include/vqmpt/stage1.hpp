#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vqmpt/env2d.hpp"
#include "vqmpt/gaussian.hpp"
#include "vqmpt/nn.hpp"
#include "vqmpt/optim.hpp"
#include "vqmpt/planners.hpp"
#include "vqmpt/rng.hpp"
#include "vqmpt/tensor.hpp"

namespace vqmpt {

// Raised when a training loop produces a non-finite loss.
struct TrainingDivergedError : std::runtime_error {
    explicit TrainingDivergedError(const std::string& m) : std::runtime_error(m) {}
};

struct Stage1Config {
    int point_dim = 2;       // planning-space dimension
    int model_dim = 64;      // transformer width d
    int code_dim = 8;        // factorized code width
    int num_codes = 32;      // dictionary size
    int layers = 3;
    int heads = 3;
    int mlp_dim = 256;
    int decoder_dim = 64;    // decoder trunk width
    double beta = 0.25;      // commitment weight
    double lambda = 0.1;     // entropy bonus weight
    int entropy_samples = 256;
    double diag_floor = 1e-4;
    int max_len = 64;
    double side = 1.0;       // workspace extent for entropy draws

    int packed_lower_dim() const { return point_dim * (point_dim - 1) / 2; }
};

// Learned dictionary: unit-norm factorized codes plus the two static
// sequence encodings living in the transformer latent space.
struct Codebook {
    Tensor codes;     // num_codes x code_dim, unit rows
    Tensor z_start;   // 1 x model_dim
    Tensor z_goal;    // 1 x model_dim

    int num_codes() const { return codes.shape()[0]; }
    int code_dim() const { return codes.shape()[1]; }
};

struct QuantizeResult {
    int index = 0;
    std::vector<double> code;
};

// Exact nearest code by exhaustive scan over Euclidean distance; ties break
// to the lowest index. Throws NumericDomainError on a zero-norm query.
QuantizeResult quantize(const Codebook& codebook, const std::vector<double>& query);

struct DecodedHeads {
    Tensor mu;    // m x point_dim
    Tensor lvec;  // m x packed_lower_dim
    Tensor dvec;  // m x point_dim, strictly positive
};

struct TransducedTrajectory {
    std::vector<int> indices;                     // one per waypoint, in [0, num_codes)
    std::vector<std::vector<double>> wrapped;     // z_start, codes..., z_goal
    std::size_t wrapped_length() const { return wrapped.size(); }
};

// Pieces of the quantizer training objective, kept separately addressable so
// the stop-gradient structure can be asserted term by term.
struct Stage1LossParts {
    Tensor total;            // per-step mean of all terms
    Tensor recon;            // Eq-style sum: data NLL - lambda * entropy bonus
    Tensor codebook_term;    // mean_j ||sg[f] - code||^2, gradient reaches codes only
    Tensor commitment_term;  // mean_j ||f - sg[code]||^2, gradient reaches encoder only
    Tensor factorized;       // n_s x code_dim normalized encoder outputs
    Tensor matched_codes;    // n_s x code_dim gathered code rows
    std::vector<int> indices;
};

class Stage1Model {
public:
    Stage1Model(const Stage1Config& config, std::uint64_t seed);

    const Stage1Config& config() const { return cfg_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    Codebook& codebook() { return codebook_; }
    const Codebook& codebook() const { return codebook_; }

    // Input projection + fixed position table + prenorm encoder stack.
    Tensor encode(const std::vector<Config2D>& waypoints) const;

    // Factorized, normalized per-step latents (n_s x code_dim).
    Tensor factorize(const Tensor& latents) const;

    // Decoder heads over rows of quantized codes.
    DecodedHeads decode_rows(const Tensor& codes) const;

    // Inference-path decode of one code vector into distribution parameters.
    GaussianParams decode_to_gaussian(const std::vector<double>& code) const;

    TransducedTrajectory transduce(const std::vector<Config2D>& waypoints) const;

    // Full training objective for one trajectory; entropy_points are uniform
    // workspace draws shared across the batch.
    Stage1LossParts build_loss(const std::vector<Config2D>& waypoints,
                               const std::vector<Config2D>& entropy_points) const;

    // Per-step NLL of a trajectory under the hard-quantized decode path.
    double holdout_nll(const std::vector<Config2D>& waypoints) const;

    // Renormalizes every code row to unit length (applied after each step).
    void renormalize_codebook();

private:
    Stage1Config cfg_;
    ParamSet params_;
    Codebook codebook_;
    Linear in_proj_;
    std::vector<PrenormBlock> blocks_;
    Linear f_proj_;
    Linear dec_in_, dec_hidden_;
    Linear head_mu_, head_lvec_, head_dvec_;
    Tensor positions_;  // fixed sinusoidal table
};

// Plain-value reconstruction objective (Eq-style sums over steps):
//   sum_j NLL(q_j; theta_j) - lambda * sum_j mean_u NLL(u; theta_j)
double recon_loss(const std::vector<GaussianParams>& stepwise,
                  const std::vector<Config2D>& waypoints, double lambda,
                  const std::vector<Config2D>& entropy_points);

struct Stage1TrainConfig {
    int epochs = 15;
    int batch_size = 16;
    int warmup_steps = 400;
    std::uint64_t seed = 0;
    double clip_norm = 1.0;
    double holdout_fraction = 0.1;
};

struct TrainLogRow {
    int epoch = 0;
    std::int64_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double code_usage = -1.0;  // fraction of codes used this epoch; <0 when n/a
};

struct Stage1TrainResult {
    std::vector<TrainLogRow> log;
    double initial_holdout_nll = 0.0;
    std::vector<double> holdout_nll_per_epoch;
    std::vector<double> code_usage_per_epoch;
    int reseeded_codes = 0;
};

Stage1TrainResult train_stage1(Stage1Model& model, const std::vector<Trajectory>& dataset,
                               const Stage1TrainConfig& config);

}  // namespace vqmpt
