#include "vqmpt/stage1.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vqmpt {

namespace {

std::vector<double> flatten(const std::vector<Config2D>& waypoints) {
    std::vector<double> out;
    out.reserve(waypoints.size() * 2);
    for (const auto& q : waypoints) {
        out.push_back(q.x);
        out.push_back(q.y);
    }
    return out;
}

}  // namespace

QuantizeResult quantize(const Codebook& codebook, const std::vector<double>& query) {
    int d = codebook.code_dim();
    if (static_cast<int>(query.size()) != d)
        throw DimensionError("quantize: query dim " + std::to_string(query.size()) + " vs codes " +
                             codebook.codes.shape_str());
    double norm_sq = 0.0;
    for (double v : query) norm_sq += v * v;
    if (norm_sq == 0.0) throw NumericDomainError("quantize: zero-norm query");

    const auto& table = codebook.codes.data();
    int best = 0;
    double best_d = HUGE_VAL;
    for (int k = 0; k < codebook.num_codes(); ++k) {
        double acc = 0.0;
        for (int j = 0; j < d; ++j) {
            double diff = query[j] - table[static_cast<std::size_t>(k) * d + j];
            acc += diff * diff;
        }
        if (acc < best_d) {
            best_d = acc;
            best = k;
        }
    }
    QuantizeResult r;
    r.index = best;
    r.code.assign(table.begin() + static_cast<std::size_t>(best) * d,
                  table.begin() + static_cast<std::size_t>(best + 1) * d);
    return r;
}

Stage1Model::Stage1Model(const Stage1Config& config, std::uint64_t seed) : cfg_(config) {
    Pcg32 rng(derive_seed(seed, 0x51));
    in_proj_ = Linear(cfg_.point_dim, cfg_.model_dim, rng, params_, "enc.in");
    for (int l = 0; l < cfg_.layers; ++l)
        blocks_.emplace_back(cfg_.model_dim, cfg_.heads, cfg_.mlp_dim, rng, params_,
                             "enc.block" + std::to_string(l));
    f_proj_ = Linear(cfg_.model_dim, cfg_.code_dim, rng, params_, "enc.factor");

    // codes start as random unit rows
    Tensor codes = normal_init({cfg_.num_codes, cfg_.code_dim}, 1.0, rng);
    {
        auto& d = codes.data();
        for (int k = 0; k < cfg_.num_codes; ++k) {
            double s = 0.0;
            for (int j = 0; j < cfg_.code_dim; ++j) s += d[k * cfg_.code_dim + j] * d[k * cfg_.code_dim + j];
            double inv = 1.0 / std::sqrt(s);
            for (int j = 0; j < cfg_.code_dim; ++j) d[k * cfg_.code_dim + j] *= inv;
        }
    }
    codebook_.codes = params_.add("codebook.codes", codes);
    codebook_.z_start = params_.add("codebook.z_start",
                                    normal_init({1, cfg_.model_dim}, 0.02, rng));
    codebook_.z_goal = params_.add("codebook.z_goal",
                                   normal_init({1, cfg_.model_dim}, 0.02, rng));

    dec_in_ = Linear(cfg_.code_dim, cfg_.decoder_dim, rng, params_, "dec.in");
    dec_hidden_ = Linear(cfg_.decoder_dim, cfg_.decoder_dim, rng, params_, "dec.hidden");
    head_mu_ = Linear(cfg_.decoder_dim, cfg_.point_dim, rng, params_, "dec.mu");
    head_lvec_ = Linear(cfg_.decoder_dim, cfg_.packed_lower_dim(), rng, params_, "dec.lvec");
    head_dvec_ = Linear(cfg_.decoder_dim, cfg_.point_dim, rng, params_, "dec.dvec");

    positions_ = sinusoidal_positions(cfg_.max_len, cfg_.model_dim);
}

Tensor Stage1Model::encode(const std::vector<Config2D>& waypoints) const {
    if (waypoints.empty()) throw NumericDomainError("encode: empty trajectory");
    int n = static_cast<int>(waypoints.size());
    if (n > cfg_.max_len)
        throw DimensionError("encode: trajectory length " + std::to_string(n) + " exceeds " +
                             std::to_string(cfg_.max_len));
    Tensor x = Tensor::from_data({n, cfg_.point_dim}, flatten(waypoints));
    Tensor h = add(in_proj_(x), slice_rows(positions_, 0, n));
    for (const auto& block : blocks_) h = block(h);
    return h;
}

Tensor Stage1Model::factorize(const Tensor& latents) const {
    return l2_normalize(f_proj_(latents));
}

DecodedHeads Stage1Model::decode_rows(const Tensor& codes) const {
    Tensor h = gelu(dec_in_(codes));
    h = gelu(dec_hidden_(h));
    DecodedHeads out;
    out.mu = head_mu_(h);
    out.lvec = head_lvec_(h);
    out.dvec = add_scalar(softplus(head_dvec_(h)), cfg_.diag_floor);
    return out;
}

GaussianParams Stage1Model::decode_to_gaussian(const std::vector<double>& code) const {
    if (static_cast<int>(code.size()) != cfg_.code_dim)
        throw DimensionError("decode_to_gaussian: code dim " + std::to_string(code.size()) +
                             " vs " + std::to_string(cfg_.code_dim));
    Tensor row = Tensor::from_data({1, cfg_.code_dim}, code);
    DecodedHeads heads = decode_rows(row);
    GaussianParams p;
    p.mu = heads.mu.data();
    p.lower = unit_lower_from_packed(heads.lvec.data(), cfg_.point_dim);
    p.diag = heads.dvec.data();
    return p;
}

TransducedTrajectory Stage1Model::transduce(const std::vector<Config2D>& waypoints) const {
    Tensor latents = encode(waypoints);
    Tensor factored = factorize(latents);
    TransducedTrajectory out;
    int n = static_cast<int>(waypoints.size());
    out.wrapped.push_back(codebook_.z_start.data());
    for (int j = 0; j < n; ++j) {
        std::vector<double> row(factored.data().begin() + static_cast<std::size_t>(j) * cfg_.code_dim,
                                factored.data().begin() + static_cast<std::size_t>(j + 1) * cfg_.code_dim);
        QuantizeResult q = quantize(codebook_, row);
        out.indices.push_back(q.index);
        out.wrapped.push_back(std::move(q.code));
    }
    out.wrapped.push_back(codebook_.z_goal.data());
    return out;
}

Stage1LossParts Stage1Model::build_loss(const std::vector<Config2D>& waypoints,
                                        const std::vector<Config2D>& entropy_points) const {
    int n = static_cast<int>(waypoints.size());
    Tensor latents = encode(waypoints);
    Tensor factored = factorize(latents);

    Stage1LossParts parts;
    const auto& fd = factored.data();
    for (int j = 0; j < n; ++j) {
        std::vector<double> row(fd.begin() + static_cast<std::size_t>(j) * cfg_.code_dim,
                                fd.begin() + static_cast<std::size_t>(j + 1) * cfg_.code_dim);
        parts.indices.push_back(quantize(codebook_, row).index);
    }
    Tensor matched = gather_rows(codebook_.codes, parts.indices);

    // straight-through: decoder sees the code value, encoder sees the
    // decoder gradient as if quantization were the identity
    Tensor decoder_in = add(factored, detach(sub(matched, factored)));
    DecodedHeads heads = decode_rows(decoder_in);

    std::vector<double> entropy_flat = flatten(entropy_points);
    int m_e = static_cast<int>(entropy_points.size());

    Tensor data_nll, entropy_nll;
    for (int j = 0; j < n; ++j) {
        Tensor mu_j = slice_rows(heads.mu, j, 1);
        Tensor lv_j = slice_rows(heads.lvec, j, 1);
        Tensor dv_j = slice_rows(heads.dvec, j, 1);
        std::vector<double> point = {waypoints[j].x, waypoints[j].y};
        Tensor nll_j = gaussian_nll_fused(point, 1, cfg_.point_dim, mu_j, lv_j, dv_j, false);
        data_nll = j == 0 ? nll_j : add(data_nll, nll_j);
        if (m_e > 0) {
            Tensor ent_j =
                gaussian_nll_fused(entropy_flat, m_e, cfg_.point_dim, mu_j, lv_j, dv_j, true);
            entropy_nll = j == 0 ? ent_j : add(entropy_nll, ent_j);
        }
    }
    parts.recon = m_e > 0 ? sub(data_nll, scale(entropy_nll, cfg_.lambda)) : data_nll;

    double inv_n = 1.0 / static_cast<double>(n);
    parts.codebook_term = scale(sum(square(sub(matched, detach(factored)))), inv_n);
    parts.commitment_term = scale(sum(square(sub(factored, detach(matched)))), inv_n);
    parts.total = add(add(scale(parts.recon, inv_n), parts.codebook_term),
                      scale(parts.commitment_term, cfg_.beta));
    parts.factorized = factored;
    parts.matched_codes = matched;
    return parts;
}

double Stage1Model::holdout_nll(const std::vector<Config2D>& waypoints) const {
    TransducedTrajectory t = transduce(waypoints);
    double acc = 0.0;
    for (std::size_t j = 0; j < waypoints.size(); ++j) {
        GaussianParams p = decode_to_gaussian(t.wrapped[j + 1]);
        acc += gaussian_nll({waypoints[j].x, waypoints[j].y}, p);
    }
    return acc / static_cast<double>(waypoints.size());
}

void Stage1Model::renormalize_codebook() {
    auto& d = codebook_.codes.data();
    int n = codebook_.num_codes(), k = codebook_.code_dim();
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < k; ++j) s += d[i * k + j] * d[i * k + j];
        if (s == 0.0) continue;
        double inv = 1.0 / std::sqrt(s);
        for (int j = 0; j < k; ++j) d[i * k + j] *= inv;
    }
}

double recon_loss(const std::vector<GaussianParams>& stepwise,
                  const std::vector<Config2D>& waypoints, double lambda,
                  const std::vector<Config2D>& entropy_points) {
    if (stepwise.size() != waypoints.size())
        throw DimensionError("recon_loss: " + std::to_string(stepwise.size()) +
                             " distributions for " + std::to_string(waypoints.size()) + " steps");
    if (lambda < 0.0) throw NumericDomainError("recon_loss: lambda must be >= 0");
    double data = 0.0, entropy = 0.0;
    for (std::size_t j = 0; j < waypoints.size(); ++j) {
        data += gaussian_nll({waypoints[j].x, waypoints[j].y}, stepwise[j]);
        if (!entropy_points.empty()) {
            double acc = 0.0;
            for (const auto& u : entropy_points) acc += gaussian_nll({u.x, u.y}, stepwise[j]);
            entropy += acc / static_cast<double>(entropy_points.size());
        }
    }
    return data - lambda * entropy;
}

Stage1TrainResult train_stage1(Stage1Model& model, const std::vector<Trajectory>& dataset,
                               const Stage1TrainConfig& config) {
    if (dataset.empty()) throw NumericDomainError("train_stage1: empty dataset");
    const Stage1Config& cfg = model.config();

    // deterministic holdout split
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    Pcg32 split_rng(derive_seed(config.seed, 0x510));
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[split_rng.uniform_int(0, i - 1)]);
    std::size_t holdout_count = std::max<std::size_t>(
        1, static_cast<std::size_t>(config.holdout_fraction * dataset.size()));
    holdout_count = std::min(holdout_count, dataset.size() - 1);
    std::vector<std::size_t> holdout(order.begin(), order.begin() + holdout_count);
    std::vector<std::size_t> train(order.begin() + holdout_count, order.end());

    auto holdout_nll = [&] {
        double acc = 0.0;
        for (std::size_t i : holdout) acc += model.holdout_nll(dataset[i].waypoints);
        return acc / static_cast<double>(holdout.size());
    };

    Stage1TrainResult result;
    result.initial_holdout_nll = holdout_nll();

    std::vector<Tensor> params = model.params().tensors();
    AdamState adam = AdamState::for_params(params);
    LRSchedule schedule(cfg.model_dim, config.warmup_steps);
    Pcg32 entropy_rng(derive_seed(config.seed, 0x511));
    Pcg32 reseed_rng(derive_seed(config.seed, 0x512));

    std::int64_t step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Pcg32 shuffle_rng(derive_seed(config.seed, 0x513 + epoch));
        std::vector<std::size_t> epoch_order = train;
        for (std::size_t i = epoch_order.size(); i > 1; --i)
            std::swap(epoch_order[i - 1], epoch_order[shuffle_rng.uniform_int(0, i - 1)]);

        std::vector<int> usage(cfg.num_codes, 0);
        std::vector<std::vector<double>> last_factorized;

        for (std::size_t start = 0; start < epoch_order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            std::size_t end = std::min(epoch_order.size(),
                                       start + static_cast<std::size_t>(config.batch_size));
            std::vector<Config2D> entropy_points(cfg.entropy_samples);
            for (auto& u : entropy_points)
                u = {entropy_rng.uniform(0.0, cfg.side), entropy_rng.uniform(0.0, cfg.side)};

            model.params().zero_grad();
            Tensor batch_loss;
            std::int64_t total_steps = 0;
            last_factorized.clear();
            for (std::size_t bi = start; bi < end; ++bi) {
                const auto& traj = dataset[epoch_order[bi]].waypoints;
                Stage1LossParts parts = model.build_loss(traj, entropy_points);
                for (int ix : parts.indices) usage[ix] += 1;
                std::int64_t n = static_cast<std::int64_t>(traj.size());
                Tensor weighted = scale(parts.total, static_cast<double>(n));
                batch_loss = bi == start ? weighted : add(batch_loss, weighted);
                total_steps += n;
                const auto& f = parts.factorized.data();
                for (std::size_t r = 0; r < traj.size(); ++r)
                    last_factorized.emplace_back(
                        f.begin() + static_cast<std::size_t>(r) * cfg.code_dim,
                        f.begin() + static_cast<std::size_t>(r + 1) * cfg.code_dim);
            }
            batch_loss = scale(batch_loss, 1.0 / static_cast<double>(total_steps));
            double loss_value = batch_loss.item();
            if (!std::isfinite(loss_value))
                throw TrainingDivergedError("train_stage1: non-finite loss at step " +
                                            std::to_string(step + 1) + " (epoch " +
                                            std::to_string(epoch) + ")");
            backward(batch_loss);
            clip_global_norm(params, config.clip_norm);
            step += 1;
            double lr = lr_at(schedule, step);
            adam_step(params, adam, lr);
            model.renormalize_codebook();

            result.log.push_back({epoch, step, loss_value, lr, -1.0});
        }

        int used = 0;
        for (int u : usage) used += u > 0 ? 1 : 0;
        double usage_frac = static_cast<double>(used) / cfg.num_codes;
        result.code_usage_per_epoch.push_back(usage_frac);
        if (!result.log.empty()) result.log.back().code_usage = usage_frac;

        // re-seed codes unused for the whole epoch onto recent encoder outputs
        if (!last_factorized.empty()) {
            auto& codes = model.codebook().codes.data();
            for (int k = 0; k < cfg.num_codes; ++k) {
                if (usage[k] > 0) continue;
                const auto& src = last_factorized[static_cast<std::size_t>(
                    reseed_rng.uniform_int(0, last_factorized.size() - 1))];
                for (int j = 0; j < cfg.code_dim; ++j)
                    codes[static_cast<std::size_t>(k) * cfg.code_dim + j] = src[j];
                result.reseeded_codes += 1;
            }
            model.renormalize_codebook();
        }

        result.holdout_nll_per_epoch.push_back(holdout_nll());
    }
    return result;
}

}  // namespace vqmpt
