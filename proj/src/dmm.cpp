#include "glim/dmm.hpp"

namespace glim::dmm {

void DmmConfig::validate() const {
    if (mem_stride != 1 && mem_stride != 2)
        throw ConfigError("mem_stride must be 1 or 2");
    if (rows % mem_stride || cols % mem_stride)
        throw ConfigError("grid size must be divisible by mem_stride");
    if (alpha < 0 || beta < 0) throw ConfigError("loss weights must be >= 0");
    if (mem_channels < 1 || hidden < 1) throw ConfigError("channel counts must be >= 1");
}

DmmModel::DmmModel(DmmConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    const int d = cfg_.mem_channels, h = cfg_.hidden, c = cfg_.state_channels;
    enc1_ = {"write_enc1", c, h, 3, cfg_.mem_stride, 1};
    enc2_ = {"write_enc2", h, d, 3, 1, 1};
    blend1_ = {"blend1", 2 * d, h, 3, 1, 1};
    blend2_ = {"blend2", h, d, 3, 1, 1};
    step_in_ = {"step_in", d + env::kActions, h, 3, 1, 1};
    step_mid_ = {"step_mid", h, h, 3, 1, 1};
    step_out_ = {"step_out", h, d, 3, 1, 1};
    dec1_conv_ = {"dec1", d, h, 3, 1, 1};
    dec1_up_ = {"dec1", d, h, 4, 2, 1};
    dec2_ = {"dec2", h, c, 3, 1, 1};
}

void DmmModel::init_params(rng::Engine& gen) {
    params_.clear();
    enc1_.init(params_, gen);
    enc2_.init(params_, gen);
    blend1_.init(params_, gen);
    blend2_.init(params_, gen);
    step_in_.init(params_, gen);
    step_mid_.init(params_, gen);
    step_out_.init(params_, gen, /*zero_weights=*/true);  // identity step at start
    if (cfg_.mem_stride == 2)
        dec1_up_.init(params_, gen);
    else
        dec1_conv_.init(params_, gen);
    dec2_.init(params_, gen);
}

MemoryMap DmmModel::empty_map() const {
    return {Array({cfg_.mem_channels, cfg_.mem_rows(), cfg_.mem_cols()}), Phase::PreWrite};
}

Array DmmModel::obs_canvas(const env::Observation& obs) const {
    Array canvas({cfg_.state_channels, cfg_.rows, cfg_.cols});
    const int w = obs.crop.dim(1);
    for (int ch = 0; ch < cfg_.state_channels; ++ch)
        for (int r = 0; r < w; ++r)
            for (int c = 0; c < obs.crop.dim(2); ++c)
                canvas.at(ch, obs.origin_r + r, obs.origin_c + c) = obs.crop.at(ch, r, c);
    return canvas;
}

Array DmmModel::memory_mask(const env::AttentionMask& mask) const {
    if (cfg_.mem_stride == 1) return mask.mask;
    Array m({1, cfg_.mem_rows(), cfg_.mem_cols()});
    for (int r = 0; r < cfg_.rows; ++r)
        for (int c = 0; c < cfg_.cols; ++c)
            if (mask.mask.at(0, r, c) != 0)
                m.at(0, r / cfg_.mem_stride, c / cfg_.mem_stride) = Real(1);
    return m;
}

TapedMap DmmModel::lift(Tape& t, const MemoryMap& m) const {
    return {t.leaf(m.features, /*requires_grad=*/false), m.phase};
}

Var DmmModel::encode(Tape& t, const TapedParams& tp, const env::Observation& obs) const {
    Var x = t.leaf(obs_canvas(obs));
    Var h = leaky_relu(t, enc1_(t, tp, x), cfg_.lrelu_slope);
    return enc2_(t, tp, h);
}

Array DmmModel::encode_infer(const env::Observation& obs) const {
    Array h = leaky_relu_infer(enc1_.infer(params_, obs_canvas(obs)), cfg_.lrelu_slope);
    return enc2_.infer(params_, h);
}

TapedMap DmmModel::write(Tape& t, const TapedParams& tp, const TapedMap& mu,
                         const env::Observation& obs,
                         const env::AttentionMask& mask) const {
    if (mu.phase != Phase::PreWrite)
        throw ContractError("write expects a pre-write memory map");
    Var enc = encode(t, tp, obs);
    Var blend_in = concat_ch(t, enc, mu.features);
    Var b = leaky_relu(t, blend1_(t, tp, blend_in), cfg_.lrelu_slope);
    Var blended = blend2_(t, tp, b);
    Var out = masked_blend(t, blended, mu.features, memory_mask(mask));
    return {out, Phase::PostWrite};
}

MemoryMap DmmModel::write_infer(const MemoryMap& mu, const env::Observation& obs,
                                const env::AttentionMask& mask) const {
    if (mu.phase != Phase::PreWrite)
        throw ContractError("write expects a pre-write memory map");
    Array enc = encode_infer(obs);
    Array b = leaky_relu_infer(blend1_.infer(params_, concat_ch_infer(enc, mu.features)),
                               cfg_.lrelu_slope);
    Array blended = blend2_.infer(params_, b);
    Array mm = memory_mask(mask);
    Array out = mu.features;
    const size_t plane = static_cast<size_t>(out.dim(1)) * out.dim(2);
    for (int c = 0; c < out.dim(0); ++c)
        for (size_t i = 0; i < plane; ++i)
            if (mm[i] != 0) out.data()[c * plane + i] = blended.data()[c * plane + i];
    return {std::move(out), Phase::PostWrite};
}

Var DmmModel::step_residual(Tape& t, const TapedParams& tp, const TapedMap& mu_w,
                            int action) const {
    if (mu_w.phase != Phase::PostWrite)
        throw ContractError("step expects a post-write memory map");
    Var act = t.leaf(action_planes(action, env::kActions, cfg_.mem_rows(), cfg_.mem_cols()));
    Var x = concat_ch(t, mu_w.features, act);
    Var h = leaky_relu(t, step_in_(t, tp, x), cfg_.lrelu_slope);
    h = leaky_relu(t, step_mid_(t, tp, h), cfg_.lrelu_slope);
    return step_out_(t, tp, h);
}

TapedMap DmmModel::step(Tape& t, const TapedParams& tp, const TapedMap& mu_w,
                        const TapedMap& mu_pre, int action) const {
    Var res = step_residual(t, tp, mu_w, action);
    Var base = cfg_.step_base_prewrite ? mu_pre.features : mu_w.features;
    return {add(t, base, res), Phase::PostStep};
}

MemoryMap DmmModel::step_infer(const MemoryMap& mu_w, const MemoryMap& mu_pre,
                               int action) const {
    if (mu_w.phase != Phase::PostWrite)
        throw ContractError("step expects a post-write memory map");
    Array act = action_planes(action, env::kActions, cfg_.mem_rows(), cfg_.mem_cols());
    Array h = leaky_relu_infer(
        step_in_.infer(params_, concat_ch_infer(mu_w.features, act)), cfg_.lrelu_slope);
    h = leaky_relu_infer(step_mid_.infer(params_, h), cfg_.lrelu_slope);
    Array res = step_out_.infer(params_, h);
    const Array& base = cfg_.step_base_prewrite ? mu_pre.features : mu_w.features;
    Array out(base.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = base[i] + res[i];
    return {std::move(out), Phase::PostStep};
}

Var DmmModel::reconstruct(Tape& t, const TapedParams& tp, const TapedMap& mu) const {
    Var h = cfg_.mem_stride == 2 ? dec1_up_(t, tp, mu.features)
                                 : dec1_conv_(t, tp, mu.features);
    h = leaky_relu(t, h, cfg_.lrelu_slope);
    return dec2_(t, tp, h);
}

Array DmmModel::reconstruct_infer(const MemoryMap& mu) const {
    Array h = cfg_.mem_stride == 2 ? dec1_up_.infer(params_, mu.features)
                                   : dec1_conv_.infer(params_, mu.features);
    h = leaky_relu_infer(h, cfg_.lrelu_slope);
    return dec2_.infer(params_, h);
}

// --- RolloutGraph -----------------------------------------------------------

RolloutGraph::RolloutGraph(const DmmModel& model, Tape& t, const TapedParams& tp,
                           const MemoryMap& mu0)
    : model_(model), tape_(t), tp_(tp) {
    if (mu0.phase != Phase::PreWrite)
        throw ContractError("rollout must start from a pre-write memory map");
    mu_ = model_.lift(t, mu0);
}

const Array& RolloutGraph::memory_value() { return tape_.val(mu_.features); }

const Array& RolloutGraph::recon_value() {
    if (!tau_.valid()) tau_ = model_.reconstruct(tape_, tp_, mu_);
    return tape_.val(tau_);
}

void RolloutGraph::observe(const env::Observation& obs, const env::AttentionMask& mask) {
    if (!advanced_after_observe_)
        throw ContractError("one observation per time step: advance before observing again");
    if (!tau_.valid()) tau_ = model_.reconstruct(tape_, tp_, mu_);
    const Array canvas = model_.obs_canvas(obs);

    // step-prediction error of the previous transition, under this window
    if (observed_ > 0) {
        Var ls = masked_sq_err(tape_, tau_, canvas, mask.mask);
        acc_.step_loss += tape_.val(ls)[0];
        terms_.push_back(ls);
    }

    mu_w_ = model_.write(tape_, tp_, mu_, obs, mask);
    Var tau_w = model_.reconstruct(tape_, tp_, mu_w_);
    Var lw = masked_sq_err(tape_, tau_w, canvas, mask.mask);
    acc_.write_loss += tape_.val(lw)[0];
    terms_.push_back(lw);

    const Array mm = model_.memory_mask(mask);
    Var reg = scale(tape_, abs_mean(tape_, mu_w_.features, &mm), model_.config().alpha);
    acc_.mem_reg += tape_.val(reg)[0];
    terms_.push_back(reg);

    ++observed_;
    advanced_after_observe_ = false;
}

void RolloutGraph::advance(int action) {
    if (advanced_after_observe_)
        throw ContractError("advance requires a preceding observation");
    Var res = model_.step_residual(tape_, tp_, mu_w_, action);
    Var reg = scale(tape_, abs_mean(tape_, res), model_.config().beta);
    acc_.step_reg += tape_.val(reg)[0];
    terms_.push_back(reg);

    Var base = model_.config().step_base_prewrite ? mu_.features : mu_w_.features;
    mu_ = {add(tape_, base, res), Phase::PreWrite};
    tau_ = {};  // next step's reconstruction is built on demand
    advanced_after_observe_ = true;
}

MemoryMap RolloutGraph::detached_memory() const {
    return {tape_.val(mu_.features), Phase::PreWrite};
}

std::pair<Var, LossBreakdown> RolloutGraph::finish() {
    if (observed_ < 2)
        throw ContractError("rollout loss needs at least 2 steps");
    Var total = add_n(tape_, terms_);
    acc_.total = tape_.val(total)[0];
    acc_.steps = observed_;
    return {total, acc_};
}

std::pair<Var, LossBreakdown> rollout_loss(const DmmModel& model, Tape& t,
                                           const TapedParams& tp,
                                           const std::vector<TrajectoryStep>& steps) {
    if (steps.size() < 2) throw ContractError("rollout loss needs at least 2 steps");
    RolloutGraph g(model, t, tp, model.empty_map());
    for (const auto& s : steps) {
        g.observe(s.obs, s.mask);
        g.advance(s.action);
    }
    return g.finish();
}

}  // namespace glim::dmm
