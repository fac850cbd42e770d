#include <doctest.h>

#include <cmath>

#include "glim/adam.hpp"
#include "glim/dmm.hpp"
#include "glim/kernels.hpp"
#include "test_support.hpp"

using namespace glim;
using namespace glim::dmm;
using glim::test::grad_check;
using glim::test::random_array;

TEST_SUITE_BEGIN("unit");

namespace {

DmmConfig tiny_config() {
    DmmConfig cfg;
    cfg.state_channels = 2;
    cfg.rows = 6;
    cfg.cols = 6;
    cfg.mem_channels = 3;
    cfg.hidden = 3;
    return cfg;
}

env::Observation make_obs(const Array& state, int origin_r, int origin_c, int w) {
    env::Observation o;
    o.origin_r = origin_r;
    o.origin_c = origin_c;
    o.crop = Array({state.dim(0), w, w});
    for (int ch = 0; ch < state.dim(0); ++ch)
        for (int r = 0; r < w; ++r)
            for (int c = 0; c < w; ++c)
                o.crop.at(ch, r, c) = state.at(ch, origin_r + r, origin_c + c);
    return o;
}

env::AttentionMask make_mask(int rows, int cols, int origin_r, int origin_c, int w) {
    env::AttentionMask m;
    m.origin_r = origin_r;
    m.origin_c = origin_c;
    m.window = w;
    m.mask = Array({1, rows, cols});
    for (int r = 0; r < w; ++r)
        for (int c = 0; c < w; ++c) m.mask.at(0, origin_r + r, origin_c + c) = Real(1);
    return m;
}

// ---------------------------------------------------------------------------
// Independent serial oracle for the rollout loss: reference convolutions and
// plain arithmetic only, no tape, no parallel kernels. Mirrors the
// documented loss definition term by term.
// ---------------------------------------------------------------------------

Array ref_conv(const ParamMap& pm, const std::string& name, const Array& x, int stride,
               int pad) {
    const Array& w = pm.at(name + ".w");
    auto d = kernels::ConvDims::conv(x.dim(0), x.dim(1), x.dim(2), w.dim(0), w.dim(2),
                                     stride, pad);
    Array y({d.co, d.ho, d.wo});
    kernels::reference::conv2d_forward(x.data(), w.data(), pm.at(name + ".b").data(),
                                       y.data(), d);
    return y;
}

Array ref_lrelu(const Array& x, Real s) {
    Array y(x.shape());
    for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] >= 0 ? x[i] : s * x[i];
    return y;
}

Array ref_concat(const Array& a, const Array& b) {
    Array y({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
    for (size_t i = 0; i < a.size(); ++i) y[i] = a[i];
    for (size_t i = 0; i < b.size(); ++i) y[a.size() + i] = b[i];
    return y;
}

Real ref_masked_mse(const Array& p, const Array& q, const Array& mask) {
    const size_t plane = static_cast<size_t>(p.dim(1)) * p.dim(2);
    size_t ones = 0;
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i] != 0) ++ones;
    Real acc = 0;
    for (int c = 0; c < p.dim(0); ++c)
        for (size_t i = 0; i < plane; ++i)
            if (mask[i] != 0) {
                const Real d = p.data()[c * plane + i] - q.data()[c * plane + i];
                acc += d * d;
            }
    return acc / static_cast<Real>(ones * static_cast<size_t>(p.dim(0)));
}

Real ref_abs_mean(const Array& x, const Array* mask) {
    if (!mask) {
        Real acc = 0;
        for (size_t i = 0; i < x.size(); ++i) acc += std::abs(x[i]);
        return acc / static_cast<Real>(x.size());
    }
    const size_t plane = static_cast<size_t>(x.dim(1)) * x.dim(2);
    size_t ones = 0;
    for (size_t i = 0; i < mask->size(); ++i)
        if ((*mask)[i] != 0) ++ones;
    Real acc = 0;
    for (int c = 0; c < x.dim(0); ++c)
        for (size_t i = 0; i < plane; ++i)
            if ((*mask)[i] != 0) acc += std::abs(x.data()[c * plane + i]);
    return acc / static_cast<Real>(ones * static_cast<size_t>(x.dim(0)));
}

struct RefBreakdown {
    Real write_loss = 0, step_loss = 0, mem_reg = 0, step_reg = 0, total = 0;
};

RefBreakdown reference_rollout_loss(const DmmModel& model,
                                    const std::vector<TrajectoryStep>& steps) {
    const DmmConfig& cfg = model.config();
    const ParamMap& pm = model.params();
    const Real sl = cfg.lrelu_slope;

    auto decode = [&](const Array& mu) {
        Array h = ref_lrelu(ref_conv(pm, "dec1", mu, 1, 1), sl);
        return ref_conv(pm, "dec2", h, 1, 1);
    };

    Array mu({cfg.mem_channels, cfg.mem_rows(), cfg.mem_cols()});
    RefBreakdown out;
    for (size_t t = 0; t < steps.size(); ++t) {
        const Array canvas = model.obs_canvas(steps[t].obs);
        const Array& smask = steps[t].mask.mask;
        // step-prediction term against the previous transition
        if (t > 0) out.step_loss += ref_masked_mse(decode(mu), canvas, smask);
        // write
        Array enc = ref_lrelu(ref_conv(pm, "write_enc1", canvas, cfg.mem_stride, 1), sl);
        enc = ref_conv(pm, "write_enc2", enc, 1, 1);
        Array blended = ref_lrelu(ref_conv(pm, "blend1", ref_concat(enc, mu), 1, 1), sl);
        blended = ref_conv(pm, "blend2", blended, 1, 1);
        Array mm = model.memory_mask(steps[t].mask);
        Array mu_w = mu;
        const size_t plane = static_cast<size_t>(mu.dim(1)) * mu.dim(2);
        for (int c = 0; c < mu.dim(0); ++c)
            for (size_t i = 0; i < plane; ++i)
                if (mm[i] != 0) mu_w.data()[c * plane + i] = blended.data()[c * plane + i];
        out.write_loss += ref_masked_mse(decode(mu_w), canvas, smask);
        out.mem_reg += cfg.alpha * ref_abs_mean(mu_w, &mm);
        // dynamics step
        Array act = action_planes(steps[t].action, env::kActions, cfg.mem_rows(),
                                  cfg.mem_cols());
        Array h = ref_lrelu(ref_conv(pm, "step_in", ref_concat(mu_w, act), 1, 1), sl);
        h = ref_lrelu(ref_conv(pm, "step_mid", h, 1, 1), sl);
        Array res = ref_conv(pm, "step_out", h, 1, 1);
        out.step_reg += cfg.beta * ref_abs_mean(res, nullptr);
        const Array& base = cfg.step_base_prewrite ? mu : mu_w;
        for (size_t i = 0; i < mu.size(); ++i) mu[i] = base[i] + res[i];
    }
    out.total = out.write_loss + out.step_loss + out.mem_reg + out.step_reg;
    return out;
}

}  // namespace

TEST_CASE("write: an all-zero mask leaves every feature identical") {
    DmmConfig cfg = tiny_config();
    DmmModel model(cfg);
    rng::Engine gen(1);
    model.init_params(gen);
    MemoryMap mu = model.empty_map();
    mu.features = random_array(mu.features.shape(), gen);

    Array state = random_array({cfg.state_channels, cfg.rows, cfg.cols}, gen, 0, 1);
    env::Observation obs = make_obs(state, 1, 1, 3);
    env::AttentionMask mask = make_mask(cfg.rows, cfg.cols, 1, 1, 3);
    mask.mask.fill(Real(0));  // hand-built: nothing observed

    MemoryMap out = model.write_infer(mu, obs, mask);
    for (size_t i = 0; i < mu.features.size(); ++i)
        CHECK(out.features[i] == mu.features[i]);
}

TEST_CASE("write: features under mask-0 cells survive bit-exactly") {
    DmmConfig cfg = tiny_config();
    DmmModel model(cfg);
    rng::Engine gen(2);
    model.init_params(gen);
    for (int trial = 0; trial < 100; ++trial) {
        MemoryMap mu = model.empty_map();
        mu.features = random_array(mu.features.shape(), gen);
        const int w = 1 + static_cast<int>(rng::uniform_int(gen, 0, 2));
        const int orr = static_cast<int>(rng::uniform_int(gen, 0, cfg.rows - w));
        const int orc = static_cast<int>(rng::uniform_int(gen, 0, cfg.cols - w));
        Array state = random_array({cfg.state_channels, cfg.rows, cfg.cols}, gen, 0, 1);
        env::Observation obs = make_obs(state, orr, orc, w);
        env::AttentionMask mask = make_mask(cfg.rows, cfg.cols, orr, orc, w);
        MemoryMap out = model.write_infer(mu, obs, mask);
        const size_t plane = static_cast<size_t>(cfg.rows) * cfg.cols;
        for (int c = 0; c < cfg.mem_channels; ++c)
            for (size_t i = 0; i < plane; ++i)
                if (mask.mask[i] == 0)
                    REQUIRE(out.features.data()[c * plane + i] ==
                            mu.features.data()[c * plane + i]);
    }
}

TEST_CASE("write: an all-ones mask equals the direct blend everywhere") {
    DmmConfig cfg = tiny_config();
    DmmModel model(cfg);
    rng::Engine gen(3);
    model.init_params(gen);
    MemoryMap mu = model.empty_map();
    mu.features = random_array(mu.features.shape(), gen);
    Array state = random_array({cfg.state_channels, cfg.rows, cfg.cols}, gen, 0, 1);
    env::Observation obs = make_obs(state, 0, 0, cfg.rows);
    env::AttentionMask mask = make_mask(cfg.rows, cfg.cols, 0, 0, cfg.rows);

    MemoryMap written = model.write_infer(mu, obs, mask);

    // direct evaluation of the blend stack
    const ParamMap& pm = model.params();
    Array enc = ref_lrelu(ref_conv(pm, "write_enc1", model.obs_canvas(obs), 1, 1),
                          cfg.lrelu_slope);
    enc = ref_conv(pm, "write_enc2", enc, 1, 1);
    Array blended =
        ref_lrelu(ref_conv(pm, "blend1", ref_concat(enc, mu.features), 1, 1), cfg.lrelu_slope);
    blended = ref_conv(pm, "blend2", blended, 1, 1);
    for (size_t i = 0; i < blended.size(); ++i)
        CHECK(glim::test::close_rel(written.features[i], blended[i], 1e-9));
}

TEST_CASE("write: writing to a post-write map is a contract error") {
    DmmConfig cfg = tiny_config();
    DmmModel model(cfg);
    rng::Engine gen(4);
    model.init_params(gen);
    MemoryMap mu = model.empty_map();
    mu.phase = Phase::PostWrite;
    Array state({cfg.state_channels, cfg.rows, cfg.cols});
    env::Observation obs = make_obs(state, 0, 0, 3);
    env::AttentionMask mask = make_mask(cfg.rows, cfg.cols, 0, 0, 3);
    CHECK_THROWS_AS(model.write_infer(mu, obs, mask), ContractError);
}

TEST_CASE("step: freshly initialized step network is the identity") {
    DmmConfig cfg = tiny_config();
    DmmModel model(cfg);
    rng::Engine gen(5);
    model.init_params(gen);
    MemoryMap mu_w = model.empty_map();
    mu_w.features = random_array(mu_w.features.shape(), gen);
    mu_w.phase = Phase::PostWrite;
    MemoryMap pre = model.empty_map();
    MemoryMap out = model.step_infer(mu_w, pre, 2);
    CHECK(out.features.same_shape(mu_w.features));
    for (size_t i = 0; i < out.features.size(); ++i)
        CHECK(out.features[i] == mu_w.features[i]);
    // and reconstructions agree bit-exactly (identity-at-init)
    MemoryMap out_pre{out.features, Phase::PreWrite};
    MemoryMap mu_pre{mu_w.features, Phase::PreWrite};
    Array r1 = model.reconstruct_infer(out_pre);
    Array r2 = model.reconstruct_infer(mu_pre);
    for (size_t i = 0; i < r1.size(); ++i) CHECK(r1[i] == r2[i]);
}

TEST_CASE("step: phase mismatch is a contract error") {
    DmmConfig cfg = tiny_config();
    DmmModel model(cfg);
    rng::Engine gen(6);
    model.init_params(gen);
    MemoryMap mu = model.empty_map();  // PreWrite
    CHECK_THROWS_AS(model.step_infer(mu, mu, 0), ContractError);
}

TEST_CASE("step: gradient through the action embedding matches finite differences") {
    DmmConfig cfg = tiny_config();
    DmmModel model(cfg);
    rng::Engine gen(7);
    model.init_params(gen);
    // give the step network non-trivial output weights
    ParamMap& pm = model.params();
    pm["step_out.w"] = random_array(pm["step_out.w"].shape(), gen, -0.3, 0.3);

    Array mu_w = random_array({cfg.mem_channels, cfg.rows, cfg.cols}, gen);
    ParamMap probe;
    probe["act"] = action_planes(1, env::kActions, cfg.rows, cfg.cols);
    auto r = grad_check(
        [&](Tape& t, const TapedParams& tp) {
            TapedParams lifted = lift(t, pm);
            Var x = concat_ch(t, t.leaf(mu_w), tp("act"));
            Var h = leaky_relu(t, conv2d(t, x, lifted("step_in.w"), lifted("step_in.b"), 1, 1),
                               cfg.lrelu_slope);
            h = leaky_relu(t, conv2d(t, h, lifted("step_mid.w"), lifted("step_mid.b"), 1, 1),
                           cfg.lrelu_slope);
            Var res = conv2d(t, h, lifted("step_out.w"), lifted("step_out.b"), 1, 1);
            return mean(t, square(t, res));
        },
        probe);
    CHECK(r.worst_rel < 1e-4);
}

TEST_CASE("reconstruct: output shape matches the state grid; deterministic") {
    DmmConfig cfg = tiny_config();
    DmmModel model(cfg);
    rng::Engine gen(8);
    model.init_params(gen);
    MemoryMap mu = model.empty_map();
    mu.features = random_array(mu.features.shape(), gen);
    Array r1 = model.reconstruct_infer(mu);
    Array r2 = model.reconstruct_infer(mu);
    CHECK(r1.shape() == std::vector<int>{cfg.state_channels, cfg.rows, cfg.cols});
    for (size_t i = 0; i < r1.size(); ++i) CHECK(r1[i] == r2[i]);
}

TEST_CASE("reconstruct: downsampled memory decodes to full state size") {
    DmmConfig cfg = tiny_config();
    cfg.mem_stride = 2;
    DmmModel model(cfg);
    rng::Engine gen(9);
    model.init_params(gen);
    MemoryMap mu = model.empty_map();
    CHECK(mu.features.dim(1) == cfg.rows / 2);
    Array r = model.reconstruct_infer(mu);
    CHECK(r.shape() == std::vector<int>{cfg.state_channels, cfg.rows, cfg.cols});
}

TEST_CASE("reconstruct: masked loss gradient on decoder params passes FD") {
    DmmConfig cfg = tiny_config();
    DmmModel model(cfg);
    rng::Engine gen(10);
    model.init_params(gen);
    Array mu = random_array({cfg.mem_channels, cfg.rows, cfg.cols}, gen);
    Array target = random_array({cfg.state_channels, cfg.rows, cfg.cols}, gen, 0, 1);
    env::AttentionMask mask = make_mask(cfg.rows, cfg.cols, 1, 2, 3);

    ParamMap dec;
    dec["dec1.w"] = model.params()["dec1.w"];
    dec["dec1.b"] = model.params()["dec1.b"];
    dec["dec2.w"] = model.params()["dec2.w"];
    dec["dec2.b"] = model.params()["dec2.b"];
    auto r = grad_check(
        [&](Tape& t, const TapedParams& tp) {
            Var h = leaky_relu(t, conv2d(t, t.leaf(mu), tp("dec1.w"), tp("dec1.b"), 1, 1),
                               cfg.lrelu_slope);
            Var rec = conv2d(t, h, tp("dec2.w"), tp("dec2.b"), 1, 1);
            return masked_sq_err(t, rec, target, mask.mask);
        },
        dec);
    CHECK(r.worst_rel < 1e-4);
}

TEST_CASE("rollout: contrived identity parameters give regularizer-only loss") {
    DmmConfig cfg;
    cfg.state_channels = 1;
    cfg.rows = 4;
    cfg.cols = 4;
    cfg.mem_channels = 1;
    cfg.hidden = 1;
    DmmModel model(cfg);
    rng::Engine gen(11);
    model.init_params(gen);
    // identity pass-through: 3x3 kernels with center tap 1, all biases 0
    auto center_one = [](Array& w, std::initializer_list<Real> taps) {
        w.fill(Real(0));
        size_t ci = 0;
        for (Real v : taps) w.at4(0, static_cast<int>(ci++), 1, 1) = v;
    };
    ParamMap& pm = model.params();
    center_one(pm["write_enc1.w"], {1});
    center_one(pm["write_enc2.w"], {1});
    center_one(pm["blend1.w"], {1, 0});  // pick the encoded observation, ignore memory
    center_one(pm["blend2.w"], {1});
    center_one(pm["dec1.w"], {1});
    center_one(pm["dec2.w"], {1});
    for (auto& [name, a] : pm)
        if (name.ends_with(".b")) a.fill(Real(0));
    // step_out stays zero from init

    Array state({1, 4, 4});
    state.at(0, 1, 1) = 1;
    state.at(0, 1, 2) = 1;
    std::vector<TrajectoryStep> steps;
    for (int t = 0; t < 2; ++t) {
        TrajectoryStep s;
        s.obs = make_obs(state, 1, 1, 2);
        s.mask = make_mask(4, 4, 1, 1, 2);
        s.action = 0;
        steps.push_back(std::move(s));
    }
    Tape t;
    TapedParams tp = lift(t, pm);
    auto [loss, bd] = rollout_loss(model, t, tp, steps);
    CHECK(bd.write_loss == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(bd.step_loss == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(bd.step_reg == doctest::Approx(0.0).epsilon(1e-12));
    // masked mean |memory| = 2 ones over 4 masked cells = 0.5 per step
    CHECK(bd.mem_reg == doctest::Approx(2 * cfg.alpha * 0.5));
    CHECK(t.val(loss)[0] == doctest::Approx(bd.mem_reg));
}

TEST_CASE("rollout: perturbing the reconstruction outside the mask leaves terms unchanged") {
    // the masked error ignores entries outside the window by construction
    rng::Engine gen(12);
    Array pred = random_array({2, 5, 5}, gen);
    Array target = random_array({2, 5, 5}, gen);
    Array mask({1, 5, 5});
    mask.at(0, 1, 1) = 1;
    mask.at(0, 1, 2) = 1;
    const Real before = masked_sq_err_value(pred, target, mask);
    pred.at(0, 4, 4) += 3.5;  // outside the window
    pred.at(1, 0, 0) -= 2.0;
    CHECK(masked_sq_err_value(pred, target, mask) == before);
}

TEST_CASE("rollout loss matches the serial arithmetic oracle") {
    DmmConfig cfg = tiny_config();
    DmmModel model(cfg);
    rng::Engine gen(13);
    model.init_params(gen);
    // non-trivial step output so every term is exercised
    model.params()["step_out.w"] = random_array(model.params()["step_out.w"].shape(), gen,
                                                -0.2, 0.2);

    std::vector<TrajectoryStep> steps;
    for (int t = 0; t < 4; ++t) {
        Array state = random_array({cfg.state_channels, cfg.rows, cfg.cols}, gen, 0, 1);
        const int orr = static_cast<int>(rng::uniform_int(gen, 0, cfg.rows - 3));
        const int orc = static_cast<int>(rng::uniform_int(gen, 0, cfg.cols - 3));
        TrajectoryStep s;
        s.obs = make_obs(state, orr, orc, 3);
        s.mask = make_mask(cfg.rows, cfg.cols, orr, orc, 3);
        s.action = static_cast<int>(rng::uniform_int(gen, 0, 3));
        steps.push_back(std::move(s));
    }

    Tape t;
    TapedParams tp = lift(t, model.params());
    auto [loss, bd] = rollout_loss(model, t, tp, steps);
    RefBreakdown ref = reference_rollout_loss(model, steps);
    CHECK(std::abs(bd.write_loss - ref.write_loss) < 1e-8);
    CHECK(std::abs(bd.step_loss - ref.step_loss) < 1e-8);
    CHECK(std::abs(bd.mem_reg - ref.mem_reg) < 1e-8);
    CHECK(std::abs(bd.step_reg - ref.step_reg) < 1e-8);
    CHECK(std::abs(t.val(loss)[0] - ref.total) < 1e-8);
    // decomposition: reported total equals the sum of reported terms
    CHECK(std::abs(bd.total - (bd.write_loss + bd.step_loss + bd.mem_reg + bd.step_reg)) <
          1e-10);
}

TEST_CASE("rollout loss requires at least two steps") {
    DmmConfig cfg = tiny_config();
    DmmModel model(cfg);
    rng::Engine gen(14);
    model.init_params(gen);
    Array state({cfg.state_channels, cfg.rows, cfg.cols});
    std::vector<TrajectoryStep> steps(1);
    steps[0].obs = make_obs(state, 0, 0, 3);
    steps[0].mask = make_mask(cfg.rows, cfg.cols, 0, 0, 3);
    Tape t;
    TapedParams tp = lift(t, model.params());
    CHECK_THROWS_AS(rollout_loss(model, t, tp, steps), ContractError);
}

TEST_CASE("rollout gradients pass finite differences end to end") {
    DmmConfig cfg;
    cfg.state_channels = 1;
    cfg.rows = 4;
    cfg.cols = 4;
    cfg.mem_channels = 2;
    cfg.hidden = 2;
    DmmModel model(cfg);
    rng::Engine gen(15);
    model.init_params(gen);
    // generic point: no zero weights or biases, so no activation sits
    // exactly on a leaky-relu kink where finite differences break down
    for (auto& [name, a] : model.params())
        a = random_array(a.shape(), gen, -0.3, 0.3);
    std::vector<TrajectoryStep> steps;
    for (int t = 0; t < 2; ++t) {
        Array state = random_array({1, 4, 4}, gen, 0, 1);
        TrajectoryStep s;
        s.obs = make_obs(state, t, t, 2);
        s.mask = make_mask(4, 4, t, t, 2);
        s.action = t % env::kActions;
        steps.push_back(std::move(s));
    }
    auto r = grad_check(
        [&](Tape& t, const TapedParams& tp) {
            return rollout_loss(model, t, tp, steps).first;
        },
        model.params());
    CHECK(r.worst_rel < 1e-4);
}

TEST_SUITE_END();

// Training-progress sanity: on a fixed offline batch the rollout loss after
// a couple thousand updates falls well below its starting point.
TEST_SUITE_BEGIN("progress");

TEST_CASE("dmm training halves the rollout loss within 2000 updates") {
    using namespace glim::env;
    EnvConfig ecfg = preset_small();
    DmmConfig cfg;
    cfg.rows = ecfg.rows;
    cfg.cols = ecfg.cols;
    cfg.mem_channels = 8;
    cfg.hidden = 8;
    DmmModel model(cfg);
    rng::Engine gen(100);
    model.init_params(gen);

    // 50 random-policy episodes
    std::vector<std::vector<Array>> episodes;
    std::vector<std::vector<int>> actions;
    for (int e = 0; e < 50; ++e) {
        rng::Engine egen(1000 + static_cast<uint64_t>(e));
        FullState s = reset(ecfg, egen);
        std::vector<Array> grids;
        std::vector<int> acts;
        while (!s.terminal) {
            grids.push_back(s.grid);
            const int a = static_cast<int>(rng::uniform_int(egen, 0, 3));
            acts.push_back(a);
            env_step(ecfg, s, static_cast<Action>(a));
        }
        episodes.push_back(std::move(grids));
        actions.push_back(std::move(acts));
    }

    Adam opt(1e-3);
    rng::Engine wgen(55);
    const int kWindow = 25;
    Real first_loss = -1, last_loss = -1;
    Real window_acc = 0;
    int window_n = 0;
    for (int iter = 0; iter < 2000; ++iter) {
        const auto e = static_cast<size_t>(
            rng::uniform_int(wgen, 0, static_cast<int64_t>(episodes.size()) - 1));
        const auto& grids = episodes[e];
        if (grids.size() < 2) continue;
        const int maxstart =
            std::max(0, static_cast<int>(grids.size()) - kWindow);
        const int start = static_cast<int>(rng::uniform_int(wgen, 0, maxstart));
        const int len = std::min<int>(kWindow, static_cast<int>(grids.size()) - start);
        if (len < 2) continue;

        std::vector<TrajectoryStep> steps;
        for (int i = 0; i < len; ++i) {
            FullState tmp;
            tmp.grid = grids[static_cast<size_t>(start + i)];
            GlimpseLocation l{static_cast<int>(rng::uniform_int(wgen, 0, ecfg.rows - 1)),
                              static_cast<int>(rng::uniform_int(wgen, 0, ecfg.cols - 1))};
            auto [obs, mask] = extract_observation(ecfg, tmp, l);
            TrajectoryStep st;
            st.obs = std::move(obs);
            st.mask = std::move(mask);
            st.action = actions[e][static_cast<size_t>(start + i)];
            steps.push_back(std::move(st));
        }
        Tape t;
        TapedParams tp = lift(t, model.params());
        auto [loss, bd] = rollout_loss(model, t, tp, steps);
        t.backward(loss);
        opt.step(model.params(), grads_of(t, tp));

        window_acc += bd.total;
        ++window_n;
        if (window_n == 100) {
            if (first_loss < 0) first_loss = window_acc / window_n;
            last_loss = window_acc / window_n;
            window_acc = 0;
            window_n = 0;
        }
    }
    REQUIRE(first_loss > 0);
    CHECK(last_loss < 0.5 * first_loss);
}

TEST_SUITE_END();
