#include "vqmpt/stage2.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vqmpt {

Stage2Model::Stage2Model(const Stage2Config& config, int num_codes, int code_dim,
                         std::uint64_t seed)
    : cfg_(config), num_codes_(num_codes) {
    if (cfg_.resolution % cfg_.patch != 0)
        throw DimensionError("stage2: resolution " + std::to_string(cfg_.resolution) +
                             " not divisible by patch " + std::to_string(cfg_.patch));
    Pcg32 rng(derive_seed(seed, 0x52));
    int d = cfg_.model_dim;
    int p2 = cfg_.patch * cfg_.patch;
    patch_proj_ = Linear(p2, d, rng, params_, "env.patch");
    patch_pos_ = params_.add("env.pos", normal_init({cfg_.num_tokens(), d}, 0.02, rng));
    sg_in_ = Linear(2, d, rng, params_, "sg.in");
    sg_out_ = Linear(d, d, rng, params_, "sg.out");
    for (int l = 0; l < cfg_.layers; ++l)
        fuse_blocks_.emplace_back(d, cfg_.heads, cfg_.mlp_dim, rng, params_,
                                  "fuse.block" + std::to_string(l));
    for (int l = 0; l < cfg_.layers; ++l)
        ar_blocks_.emplace_back(d, cfg_.heads, cfg_.mlp_dim, rng, params_,
                                "ar.block" + std::to_string(l));
    code_embed_ = Linear(code_dim, d, rng, params_, "ar.code_embed");
    bos_proj_ = Linear(d, d, rng, params_, "ar.bos");
    final_ln_ = LayerNormParams(d, params_, "ar.final_ln");
    head_ = Linear(d, num_codes_ + 1, rng, params_, "ar.head");
    positions_ = sinusoidal_positions(cfg_.num_tokens() + 2 + 1 + cfg_.n_h_max + 1, d);
    bos_source_ = Tensor::zeros({1, d});
}

void Stage2Model::set_bos_source(const Tensor& z_start) {
    bos_source_ = detach(z_start);
}

Tensor Stage2Model::embed_environment(const Costmap& costmap) const {
    if (costmap.resolution != cfg_.resolution)
        throw DimensionError("embed_environment: costmap resolution " +
                             std::to_string(costmap.resolution) + " vs configured " +
                             std::to_string(cfg_.resolution));
    int p = cfg_.patch;
    int side = cfg_.tokens_per_side();
    int n_e = cfg_.num_tokens();
    std::vector<double> patches(static_cast<std::size_t>(n_e) * p * p);
    for (int gy = 0; gy < side; ++gy)
        for (int gx = 0; gx < side; ++gx) {
            std::size_t token = static_cast<std::size_t>(gy) * side + gx;
            for (int iy = 0; iy < p; ++iy)
                for (int ix = 0; ix < p; ++ix)
                    patches[token * p * p + static_cast<std::size_t>(iy) * p + ix] =
                        static_cast<double>(costmap.at(gx * p + ix, gy * p + iy));
        }
    Tensor x = Tensor::from_data({n_e, p * p}, std::move(patches));
    return add(patch_proj_(x), patch_pos_);
}

Tensor Stage2Model::cross_attention_context(const Tensor& env_tokens, const Config2D& start,
                                            const Config2D& goal) const {
    Tensor sg = Tensor::from_data({2, 2}, {start.x, start.y, goal.x, goal.y});
    Tensor queries = sg_out_(gelu(sg_in_(sg)));
    for (const auto& block : fuse_blocks_) queries = block.cross(queries, env_tokens);
    return concat_rows({env_tokens, queries});
}

Tensor Stage2Model::ar_hidden(const Codebook& codebook, const std::vector<int>& prefix,
                              const Tensor& context) const {
    for (int ix : prefix)
        if (ix < 0 || ix >= num_codes_)
            throw NumericDomainError("ar prefix contains class " + std::to_string(ix) +
                                     " outside the code range");
    int n_ctx = context.shape()[0];
    std::vector<Tensor> rows;
    rows.push_back(context);
    rows.push_back(bos_proj_(bos_source_));
    if (!prefix.empty())
        rows.push_back(code_embed_(gather_rows(detach(codebook.codes), prefix)));
    Tensor x = concat_rows(rows);
    int total = x.shape()[0];
    x = add(x, slice_rows(positions_, 0, total));
    AttentionMask mask = AttentionMask::causal(total);
    for (const auto& block : ar_blocks_) x = block(x, &mask);
    // hidden states of the generated segment (bos + prefix embeddings)
    return final_ln_(slice_rows(x, n_ctx, total - n_ctx));
}

Tensor Stage2Model::prefix_logprobs(const Codebook& codebook, const std::vector<int>& prefix,
                                    const Tensor& context) const {
    return log_softmax(head_(ar_hidden(codebook, prefix, context)));
}

Tensor Stage2Model::ar_forward(const Codebook& codebook, const std::vector<int>& prefix,
                               const Tensor& context) const {
    Tensor hidden = ar_hidden(codebook, prefix, context);
    int rows = hidden.shape()[0];
    return softmax(head_(slice_rows(hidden, rows - 1, 1)), 1);
}

Tensor Stage2Model::ce_loss(const Codebook& codebook, const std::vector<int>& ground_truth,
                            const Tensor& context) const {
    if (ground_truth.empty() || ground_truth.back() != goal_class())
        throw NumericDomainError("ce_loss: ground truth must terminate with the goal class");
    std::vector<int> prefix(ground_truth.begin(), ground_truth.end() - 1);
    Tensor logprobs = prefix_logprobs(codebook, prefix, context);
    return neg(sum(pick(logprobs, ground_truth)));
}

std::vector<int> beam_search(const Stage2Model& model, const Codebook& codebook,
                             const Tensor& context, int beam_width, int n_h_max) {
    if (beam_width < 1) throw NumericDomainError("beam_search: beam width must be >= 1");
    if (n_h_max < 1) throw NumericDomainError("beam_search: n_h_max must be >= 1");
    const int goal = model.goal_class();

    struct Hyp {
        std::vector<int> seq;
        double logp = 0.0;
    };
    auto better = [](const Hyp& a, const Hyp& b) {
        if (a.logp != b.logp) return a.logp > b.logp;
        if (a.seq.size() != b.seq.size()) return a.seq.size() < b.seq.size();
        return a.seq < b.seq;
    };

    std::vector<Hyp> live{{{}, 0.0}};
    bool have_best = false;
    Hyp best;

    for (int t = 1; t <= n_h_max && !live.empty(); ++t) {
        std::vector<Hyp> next_live;
        for (const auto& h : live) {
            Tensor lp = model.prefix_logprobs(codebook, h.seq, context);
            int last = lp.shape()[0] - 1;
            if (t == n_h_max) {
                Hyp done{h.seq, h.logp + lp.at(last, goal)};
                done.seq.push_back(goal);
                if (!have_best || better(done, best)) {
                    best = done;
                    have_best = true;
                }
                continue;
            }
            for (int c = 0; c <= goal; ++c) {
                Hyp cand{h.seq, h.logp + lp.at(last, c)};
                cand.seq.push_back(c);
                if (c == goal) {
                    if (!have_best || better(cand, best)) {
                        best = cand;
                        have_best = true;
                    }
                } else {
                    next_live.push_back(std::move(cand));
                }
            }
        }
        std::sort(next_live.begin(), next_live.end(), better);
        if (static_cast<int>(next_live.size()) > beam_width) next_live.resize(beam_width);
        // extending a hypothesis can only lower its score, so stop once no
        // live prefix can beat the best completed sequence
        if (have_best && !next_live.empty() && next_live.front().logp <= best.logp) break;
        live = std::move(next_live);
    }
    return best.seq;
}

std::vector<int> collapse_consecutive(const std::vector<int>& indices) {
    std::vector<int> out;
    for (int ix : indices)
        if (out.empty() || out.back() != ix) out.push_back(ix);
    return out;
}

std::vector<int> ground_truth_indices(const Stage1Model& stage1,
                                      const std::vector<Config2D>& demo) {
    std::vector<int> out = collapse_consecutive(stage1.transduce(demo).indices);
    out.push_back(stage1.config().num_codes);  // goal class
    return out;
}

Gmm build_gmm(const Stage1Model& stage1, const std::vector<int>& indices) {
    const Codebook& cb = stage1.codebook();
    int d = cb.code_dim();
    std::vector<GaussianParams> comps;
    for (int ix : indices) {
        if (ix == stage1.config().num_codes) continue;
        if (ix < 0 || ix > stage1.config().num_codes)
            throw NumericDomainError("build_gmm: index " + std::to_string(ix) + " out of range");
        std::vector<double> code(cb.codes.data().begin() + static_cast<std::size_t>(ix) * d,
                                 cb.codes.data().begin() + static_cast<std::size_t>(ix + 1) * d);
        comps.push_back(stage1.decode_to_gaussian(code));
    }
    if (comps.empty())
        throw EmptyPredictionError("build_gmm: prediction holds only the goal class");
    return Gmm(std::move(comps));
}

Stage2TrainResult train_stage2(const Stage1Model& stage1, Stage2Model& model,
                               const std::vector<Stage2Example>& dataset,
                               const Stage2TrainConfig& config) {
    if (dataset.empty()) throw NumericDomainError("train_stage2: empty dataset");
    model.set_bos_source(stage1.codebook().z_start);
    const Codebook& codebook = stage1.codebook();

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    Pcg32 split_rng(derive_seed(config.seed, 0x520));
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[split_rng.uniform_int(0, i - 1)]);
    std::size_t holdout_count = std::max<std::size_t>(
        1, static_cast<std::size_t>(config.holdout_fraction * dataset.size()));
    holdout_count = std::min(holdout_count, dataset.size() - 1);
    std::vector<std::size_t> holdout(order.begin(), order.begin() + holdout_count);
    std::vector<std::size_t> train(order.begin() + holdout_count, order.end());

    auto holdout_accuracy = [&] {
        std::int64_t hits = 0, total = 0;
        for (std::size_t i : holdout) {
            const auto& ex = dataset[i];
            Tensor env = model.embed_environment(ex.costmap);
            Tensor ctx = model.cross_attention_context(env, ex.start, ex.goal);
            std::vector<int> prefix(ex.gt.begin(), ex.gt.end() - 1);
            Tensor lp = model.prefix_logprobs(codebook, prefix, ctx);
            for (std::size_t j = 0; j < ex.gt.size(); ++j) {
                int arg = 0;
                for (int c = 1; c < model.num_classes(); ++c)
                    if (lp.at(static_cast<int>(j), c) > lp.at(static_cast<int>(j), arg)) arg = c;
                hits += arg == ex.gt[j] ? 1 : 0;
                total += 1;
            }
        }
        return static_cast<double>(hits) / static_cast<double>(total);
    };

    Stage2TrainResult result;
    std::vector<Tensor> params = model.params().tensors();
    AdamState adam = AdamState::for_params(params);
    LRSchedule schedule(model.config().model_dim, config.warmup_steps);

    std::int64_t step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Pcg32 shuffle_rng(derive_seed(config.seed, 0x521 + epoch));
        std::vector<std::size_t> epoch_order = train;
        for (std::size_t i = epoch_order.size(); i > 1; --i)
            std::swap(epoch_order[i - 1], epoch_order[shuffle_rng.uniform_int(0, i - 1)]);

        for (std::size_t start = 0; start < epoch_order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            std::size_t end = std::min(epoch_order.size(),
                                       start + static_cast<std::size_t>(config.batch_size));
            model.params().zero_grad();
            Tensor batch_loss;
            for (std::size_t bi = start; bi < end; ++bi) {
                const auto& ex = dataset[epoch_order[bi]];
                Tensor env = model.embed_environment(ex.costmap);
                Tensor ctx = model.cross_attention_context(env, ex.start, ex.goal);
                Tensor loss = model.ce_loss(codebook, ex.gt, ctx);
                batch_loss = bi == start ? loss : add(batch_loss, loss);
            }
            batch_loss = scale(batch_loss, 1.0 / static_cast<double>(end - start));
            double loss_value = batch_loss.item();
            if (!std::isfinite(loss_value))
                throw TrainingDivergedError("train_stage2: non-finite loss at step " +
                                            std::to_string(step + 1));
            backward(batch_loss);
            clip_global_norm(params, config.clip_norm);
            step += 1;
            double lr = lr_at(schedule, step);
            adam_step(params, adam, lr);
            result.log.push_back({epoch, step, loss_value, lr, -1.0});
        }
        result.holdout_accuracy_per_epoch.push_back(holdout_accuracy());
    }
    result.final_holdout_accuracy = result.holdout_accuracy_per_epoch.empty()
                                        ? holdout_accuracy()
                                        : result.holdout_accuracy_per_epoch.back();
    return result;
}

}  // namespace vqmpt
