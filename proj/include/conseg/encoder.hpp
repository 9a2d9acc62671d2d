#pragma once

#include <memory>
#include <string>
#include <vector>

#include "conseg/autodiff.hpp"
#include "conseg/params.hpp"
#include "conseg/rng.hpp"

namespace conseg::model {

struct EncoderConfig {
    int features = 3;   // input channels per time step
    int window = 16;    // segment length in points
    int hidden = 32;    // d
    int ffn = 64;
    int heads = 4;
    int layers = 2;
    int max_segments = 64;
    double dropout = 0.0;
    double sigma_floor = 0.1;
    std::vector<int> conv_channels = {16, 24, 32};
    int conv_kernel = 3;
    int conv_stride = 2;

    // Test/ablation hook: pin the branch fusion instead of learning it.
    enum class GateMode { learned, self_only, gaussian_only };
    GateMode gate_mode = GateMode::learned;

    int head_dim() const { return hidden / heads; }
    void validate() const;  // throws ConfigError
};

// Per-head internals captured on demand (tests, prediction dumps).
struct AttentionDebug {
    // per head: L x L aggregation weights and L x head_dim values
    std::vector<std::vector<double>> self_weights;      // S
    std::vector<std::vector<double>> gaussian_weights;  // G
    std::vector<std::vector<double>> v_gaussian;        // V_g
    std::vector<std::vector<double>> z_gaussian;        // G * V_g
    std::vector<double> fused;                          // L x d, pre-FFN mixed values
};

// Contextual representation encoder over a segment sequence: per-segment
// 1-D conv embedding, learnable absolute positional encoding, then stacked
// dual-branch attention layers (softmax self-attention fused with a
// per-position Gaussian-kernel neighbor aggregation) in pre-layer-norm
// ordering with a final layer norm.
class ContextEncoder {
  public:
    ContextEncoder(EncoderConfig cfg, ad::ParameterStore& store, Rng& init_rng);

    // segments: L entries of window*features values (row-major, time-major).
    // Returns the L x hidden representation. Internals of each attention
    // layer are copied into *debug when provided.
    ad::Tensor forward(ad::Tape& tape, const std::vector<std::vector<double>>& segments,
                       bool training = false, Rng* dropout_rng = nullptr,
                       std::vector<AttentionDebug>* debug = nullptr) const;

    // Conv stem + projection only (no positional encoding, no attention).
    ad::Tensor embed_segments(ad::Tape& tape,
                              const std::vector<std::vector<double>>& segments) const;

    ad::Tensor attention_layer(ad::Tape& tape, int layer, const ad::Tensor& x, bool training,
                               Rng* dropout_rng, AttentionDebug* debug) const;

    const EncoderConfig& config() const { return cfg_; }

  private:
    struct HeadParams {
        ad::Parameter* w_q;
        ad::Parameter* w_k;
        ad::Parameter* w_v_self;
        ad::Parameter* w_v_gauss;
        ad::Parameter* w_sigma;
        ad::Parameter* b_sigma;
        ad::Parameter* gate_w;
        ad::Parameter* gate_u;
        ad::Parameter* gate_v;
    };
    struct LayerParams {
        std::vector<HeadParams> heads;
        ad::Parameter* ln1_gamma;
        ad::Parameter* ln1_beta;
        ad::Parameter* ln2_gamma;
        ad::Parameter* ln2_beta;
        ad::Parameter* ffn_w1;
        ad::Parameter* ffn_b1;
        ad::Parameter* ffn_w2;
        ad::Parameter* ffn_b2;
    };

    EncoderConfig cfg_;
    std::vector<ad::Parameter*> conv_w_;
    std::vector<ad::Parameter*> conv_b_;
    ad::Parameter* embed_w_;
    ad::Parameter* embed_b_;
    ad::Parameter* pos_table_;
    std::vector<LayerParams> layers_;
    ad::Parameter* ln_f_gamma_;
    ad::Parameter* ln_f_beta_;
};

}  // namespace conseg::model
