#pragma once

#include "glim/env.hpp"
#include "glim/nn.hpp"

namespace glim::dmm {

// Lifecycle of the spatial memory within one time step: before the
// observation is written, after the masked write, and after the dynamics
// step that predicts the next state.
enum class Phase { PreWrite, PostWrite, PostStep };

struct DmmConfig {
    int state_channels = env::kChannels;
    int rows = 12, cols = 12;   // state grid size
    int mem_channels = 8;       // memory feature channels
    int hidden = 8;             // conv stack width
    int mem_stride = 1;         // 1: memory at state resolution, 2: downsampled
    bool step_base_prewrite = false;  // residual base: pre-write map variant
    Real alpha = Real(0.01);    // masked memory magnitude penalty weight
    Real beta = Real(0.01);     // step output penalty weight
    Real lrelu_slope = Real(0.1);

    int mem_rows() const { return rows / mem_stride; }
    int mem_cols() const { return cols / mem_stride; }
    void validate() const;
};

struct MemoryMap {
    Array features;  // [mem_channels, mem_rows, mem_cols]
    Phase phase = Phase::PreWrite;
};

struct TapedMap {
    Var features;
    Phase phase = Phase::PreWrite;
};

struct LossBreakdown {
    Real write_loss = 0;   // masked write-reconstruction terms
    Real step_loss = 0;    // masked next-step prediction terms
    Real mem_reg = 0;      // weighted masked |memory| terms
    Real step_reg = 0;     // weighted |step output| terms
    Real total = 0;
    int steps = 0;
};

// Encoder (observation -> memory space), blender (merge with memory under
// the mask), action-conditioned residual step network, and decoder back to
// state space. The step network's output layer starts at zero so an
// untrained step is the identity.
class DmmModel {
public:
    explicit DmmModel(DmmConfig cfg);

    void init_params(rng::Engine& gen);
    ParamMap& params() { return params_; }
    const ParamMap& params() const { return params_; }
    const DmmConfig& config() const { return cfg_; }

    MemoryMap empty_map() const;
    // Observation crop pasted into a zero canvas at its window origin.
    Array obs_canvas(const env::Observation& obs) const;
    // Attention mask reduced to memory resolution (any overlap counts).
    Array memory_mask(const env::AttentionMask& mask) const;

    // --- taped forward (training) ---
    TapedMap lift(Tape& t, const MemoryMap& m) const;
    TapedMap write(Tape& t, const TapedParams& tp, const TapedMap& mu,
                   const env::Observation& obs, const env::AttentionMask& mask) const;
    TapedMap step(Tape& t, const TapedParams& tp, const TapedMap& mu_w,
                  const TapedMap& mu_pre, int action) const;
    Var reconstruct(Tape& t, const TapedParams& tp, const TapedMap& mu) const;
    // Raw step-network output (the residual), exposed for the regularizer.
    Var step_residual(Tape& t, const TapedParams& tp, const TapedMap& mu_w,
                      int action) const;

    // --- inference forward (no tape, used by the frozen phases) ---
    MemoryMap write_infer(const MemoryMap& mu, const env::Observation& obs,
                          const env::AttentionMask& mask) const;
    MemoryMap step_infer(const MemoryMap& mu_w, const MemoryMap& mu_pre,
                         int action) const;
    Array reconstruct_infer(const MemoryMap& mu) const;

private:
    DmmConfig cfg_;
    ParamMap params_;
    Conv2d enc1_, enc2_;          // observation encoder
    Conv2d blend1_, blend2_;      // observation/memory blender
    Conv2d step_in_, step_mid_, step_out_;
    Conv2d dec1_conv_, dec2_;     // decoder (stride-1 memory)
    Deconv2d dec1_up_;            // decoder upsample (stride-2 memory)

    Var encode(Tape& t, const TapedParams& tp, const env::Observation& obs) const;
    Array encode_infer(const env::Observation& obs) const;
};

// Incremental rollout graph: one instance per BPTT window. Reconstruction
// losses are attached as observations arrive, so attention choices may
// depend on the evolving memory. Gradients flow through the whole window.
//
// Loss over a window of T observed steps (T >= 2), matching the per-step
// sum write + step + weighted regularizers:
//   sum_{t=0}^{T-1} [ masked_err(R(write_t), o_t) + alpha*|mem_t^w|_mask
//                     + beta*|S_t| ]
// + sum_{t=0}^{T-2}   masked_err(R(mem_{t+1}), o_{t+1})
// where masked_err is the mean squared error over entries under the
// attention mask and |.| is a mean absolute value.
class RolloutGraph {
public:
    RolloutGraph(const DmmModel& model, Tape& t, const TapedParams& tp,
                 const MemoryMap& mu0);

    // Current pre-write memory (input to the glimpse policy).
    const Array& memory_value();
    // Current pre-write reconstruction (basis of the surprise statistic).
    const Array& recon_value();

    void observe(const env::Observation& obs, const env::AttentionMask& mask);
    void advance(int action);

    // Detached copy of the latest memory, for carrying across windows.
    MemoryMap detached_memory() const;
    const TapedMap& post_write_map() const { return mu_w_; }

    std::pair<Var, LossBreakdown> finish();

private:
    const DmmModel& model_;
    Tape& tape_;
    const TapedParams& tp_;
    TapedMap mu_;       // current pre-write map
    TapedMap mu_w_;     // latest post-write map
    Var tau_ = {};      // pre-write reconstruction of the current step
    int observed_ = 0;
    bool advanced_after_observe_ = true;
    std::vector<Var> terms_;
    LossBreakdown acc_;
};

// Batch rollout loss over a fixed trajectory (observations, masks and
// actions aligned per step) starting from an all-zero memory.
struct TrajectoryStep {
    env::Observation obs;
    env::AttentionMask mask;
    int action = 0;
};

std::pair<Var, LossBreakdown> rollout_loss(const DmmModel& model, Tape& t,
                                           const TapedParams& tp,
                                           const std::vector<TrajectoryStep>& steps);

}  // namespace glim::dmm
